//! Command implementations. Each returns a serializable report; rendering and
//! exit codes are handled by the binary.

use serde::{Deserialize, Serialize};
use slowfast_core::budget::{solve_image, solve_video_budget, BudgetPlan};
use slowfast_core::frame::classify_frames_with_reports;
use slowfast_core::grounding::{emit_grounding, parse_grounding_with, GroundingItem, ParseMode, ParseOutcome};
use slowfast_core::gspo::{gspo_batch, GroupRollouts, GspoResult};
use slowfast_core::layout::{assemble_layout, image_layout, TokenLayout};
use slowfast_core::packing::{
    balance_workers, pack_windows, plan_mixture, CostModel, Modality, ModalityTokens, PackedWindow, SequenceItem,
};
use slowfast_core::position::{build_rope_index_table, RopeIndexTable};
use slowfast_core::{FrameClass, FrameKind, SimilarityReport};

use crate::config::PipelineConfig;
use crate::error::{CliError, CliResult};
use crate::manifest::LoadedVideo;

#[derive(Debug, Clone, Serialize)]
pub struct ClassifiedFrame {
    pub index: usize,
    pub timestamp_s: f64,
    pub kind: FrameKind,
    pub anchor_index: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ClassifyReport {
    pub frames: Vec<ClassifiedFrame>,
    /// Anchor comparison for every frame after the first.
    pub comparisons: Vec<SimilarityReport>,
    pub n_slow: usize,
    pub n_fast: usize,
}

fn classify(video: &LoadedVideo, cfg: &PipelineConfig) -> CliResult<(Vec<FrameClass>, Vec<SimilarityReport>)> {
    Ok(classify_frames_with_reports(&video.frames, &cfg.similarity)?)
}

fn count_slow(classes: &[FrameClass]) -> usize {
    classes.iter().filter(|c| c.kind == FrameKind::Slow).count()
}

pub fn cmd_classify(video: &LoadedVideo, cfg: &PipelineConfig) -> CliResult<ClassifyReport> {
    let (classes, comparisons) = classify(video, cfg)?;
    let n_slow = count_slow(&classes);
    Ok(ClassifyReport {
        frames: classes
            .iter()
            .zip(&video.frames)
            .map(|(c, f)| ClassifiedFrame {
                index: c.index,
                timestamp_s: f.timestamp_s,
                kind: c.kind,
                anchor_index: c.anchor_index,
            })
            .collect(),
        comparisons,
        n_slow,
        n_fast: classes.len() - n_slow,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenizeMode {
    Image,
    Video,
}

#[derive(Debug, Clone, Serialize)]
pub struct TokenizeSummary {
    pub mode: TokenizeMode,
    pub n_frames: usize,
    pub n_slow: usize,
    pub n_fast: usize,
    pub tokens_per_slow: usize,
    pub tokens_per_fast: usize,
    /// Visual tokens over all vision blocks.
    pub vision_tokens: usize,
    /// Cap the vision tokens were solved against.
    pub token_budget: usize,
    /// Every position in the layout, including boundary tokens and timestamps.
    pub sequence_tokens: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct TokenizeReport {
    pub summary: TokenizeSummary,
    pub classes: Vec<FrameClass>,
    pub plan: BudgetPlan,
    pub layout: TokenLayout,
    pub rope_index: RopeIndexTable,
}

pub fn cmd_tokenize(video: &LoadedVideo, cfg: &PipelineConfig, mode: TokenizeMode) -> CliResult<TokenizeReport> {
    let timestamps = video.timestamps();
    let (classes, plan, layout, budget) = match mode {
        TokenizeMode::Video => {
            let (classes, _) = classify(video, cfg)?;
            let plan = solve_video_budget(&classes, &video.budget_dims, &cfg.geometry)?;
            let layout = assemble_layout(&classes, &plan, &timestamps, &cfg.special_tokens)?;
            (classes, plan, layout, cfg.geometry.video_token_budget)
        }
        TokenizeMode::Image => {
            if video.frames.len() != 1 {
                return Err(CliError::Input(format!(
                    "image mode expects exactly one frame, manifest has {}",
                    video.frames.len()
                )));
            }
            let (w, h) = video.budget_dims[0];
            let grid = solve_image(w, h, &cfg.geometry)?;
            let classes = vec![FrameClass {
                index: 0,
                kind: FrameKind::Slow,
                anchor_index: 0,
            }];
            let plan = BudgetPlan {
                tokens_per_slow: grid.tokens(),
                tokens_per_fast: 0,
                grids: vec![grid],
                total_tokens: grid.tokens(),
            };
            (classes, plan, image_layout(grid), cfg.geometry.image_token_cap)
        }
    };
    let rope_index = build_rope_index_table(&layout, &timestamps, cfg.rope.temporal_unit_s)?;
    let n_slow = match mode {
        TokenizeMode::Video => count_slow(&classes),
        TokenizeMode::Image => 0,
    };
    let summary = TokenizeSummary {
        mode,
        n_frames: video.frames.len(),
        n_slow,
        n_fast: match mode {
            TokenizeMode::Video => classes.len() - n_slow,
            TokenizeMode::Image => 0,
        },
        tokens_per_slow: plan.tokens_per_slow,
        tokens_per_fast: plan.tokens_per_fast,
        vision_tokens: layout.vision_token_count(),
        token_budget: budget,
        sequence_tokens: layout.token_count(),
    };
    Ok(TokenizeReport {
        summary,
        classes,
        plan,
        layout,
        rope_index,
    })
}

/// A packing input item. `est_cost` defaults to the configured cost model applied to
/// `vision_tokens`/`text_tokens`, which in turn default to the item length counted
/// as text for text items and as vision otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ItemSpec {
    pub id: String,
    pub length_tokens: usize,
    pub modality: Modality,
    #[serde(default)]
    pub est_cost: Option<f64>,
    #[serde(default)]
    pub vision_tokens: Option<usize>,
    #[serde(default)]
    pub text_tokens: Option<usize>,
}

impl ItemSpec {
    pub fn resolve(&self, cost: &CostModel) -> SequenceItem {
        let est_cost = self.est_cost.unwrap_or_else(|| {
            let (v, t) = match (self.vision_tokens, self.text_tokens, self.modality) {
                (None, None, Modality::Text) => (0, self.length_tokens),
                (None, None, _) => (self.length_tokens, 0),
                (v, t, _) => (v.unwrap_or(0), t.unwrap_or(0)),
            };
            cost.estimate(v, t)
        });
        SequenceItem {
            id: self.id.clone(),
            length_tokens: self.length_tokens,
            modality: self.modality,
            est_cost,
        }
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ItemsFile {
    Bare(Vec<ItemSpec>),
    Wrapped { items: Vec<ItemSpec> },
}

/// Parse an items file (a JSON array or `{"items": [...]}`) and resolve costs.
pub fn parse_items(text: &str, cost: &CostModel) -> CliResult<Vec<SequenceItem>> {
    let specs = match serde_json::from_str::<ItemsFile>(text) {
        Ok(ItemsFile::Bare(v) | ItemsFile::Wrapped { items: v }) => v,
        Err(e) => return Err(CliError::Input(format!("malformed items file: {e}"))),
    };
    let mut seen = std::collections::BTreeSet::new();
    for s in &specs {
        if !seen.insert(s.id.as_str()) {
            return Err(CliError::Input(format!("duplicate item id {:?}", s.id)));
        }
    }
    Ok(specs.iter().map(|s| s.resolve(cost)).collect())
}

#[derive(Debug, Clone, Serialize)]
pub struct WindowReport {
    pub capacity: usize,
    pub used: usize,
    pub item_ids: Vec<String>,
    pub offsets: Vec<usize>,
    pub cu_seqlens: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub segment_ids: Option<Vec<u32>>,
}

impl WindowReport {
    fn new(w: &PackedWindow, with_segments: bool) -> Self {
        Self {
            capacity: w.capacity,
            used: w.used(),
            item_ids: w.items.iter().map(|i| i.id.clone()).collect(),
            offsets: w.offsets.clone(),
            cu_seqlens: w.cu_seqlens(),
            segment_ids: with_segments.then(|| w.segment_ids()),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PackReport {
    pub capacity: usize,
    pub n_items: usize,
    pub n_windows: usize,
    pub windows: Vec<WindowReport>,
}

fn pack(items: &[SequenceItem], capacity: usize, with_segments: bool) -> CliResult<PackReport> {
    let windows = pack_windows(items, capacity)?;
    Ok(PackReport {
        capacity,
        n_items: items.len(),
        n_windows: windows.len(),
        windows: windows.iter().map(|w| WindowReport::new(w, with_segments)).collect(),
    })
}

pub fn cmd_pack(items: &[SequenceItem], capacity: usize, with_segments: bool) -> CliResult<PackReport> {
    pack(items, capacity, with_segments)
}

#[derive(Debug, Clone, Serialize)]
pub struct WorkerReport {
    pub worker: usize,
    pub load: f64,
    pub item_ids: Vec<String>,
    pub windows: Vec<WindowReport>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BalanceReport {
    pub n_workers: usize,
    pub makespan: f64,
    pub workers: Vec<WorkerReport>,
}

/// Balance items across workers, then pack each worker's share into windows.
pub fn cmd_balance(items: &[SequenceItem], n_workers: usize, capacity: usize, with_segments: bool) -> CliResult<BalanceReport> {
    let assignment = balance_workers(items, n_workers)?;
    let by_id: std::collections::BTreeMap<&str, &SequenceItem> = items.iter().map(|i| (i.id.as_str(), i)).collect();
    let workers = assignment
        .assignments
        .iter()
        .zip(&assignment.loads)
        .enumerate()
        .map(|(w, (ids, &load))| {
            let share: Vec<SequenceItem> = ids.iter().map(|id| by_id[id.as_str()].clone()).collect();
            Ok(WorkerReport {
                worker: w,
                load,
                item_ids: ids.clone(),
                windows: pack(&share, capacity, with_segments)?.windows,
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    Ok(BalanceReport {
        n_workers,
        makespan: assignment.makespan(),
        workers,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct MixtureReport {
    pub window_budget: usize,
    pub available: ModalityTokens,
    pub targets: ModalityTokens,
}

pub fn cmd_mixture(available: ModalityTokens, window_budget: usize, cfg: &PipelineConfig) -> CliResult<MixtureReport> {
    let targets = plan_mixture(&available, window_budget, &cfg.packing.mixture)?;
    Ok(MixtureReport {
        window_budget,
        available,
        targets,
    })
}

pub fn cmd_grounding_parse(text: &str, mode: ParseMode) -> CliResult<ParseOutcome> {
    Ok(parse_grounding_with(text, mode)?)
}

#[derive(Deserialize)]
#[serde(untagged)]
enum GroundingFile {
    Bare(Vec<GroundingItem>),
    Wrapped { items: Vec<GroundingItem> },
}

/// Emit markup for a JSON list of items (bare or `{"items": [...]}`), one item per line.
pub fn cmd_grounding_emit(json: &str) -> CliResult<String> {
    let items = match serde_json::from_str::<GroundingFile>(json) {
        Ok(GroundingFile::Bare(v) | GroundingFile::Wrapped { items: v }) => v,
        Err(e) => return Err(CliError::Input(format!("malformed grounding items: {e}"))),
    };
    let mut out = String::new();
    for item in &items {
        out.push_str(&emit_grounding(item)?);
        out.push('\n');
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct GspoReport {
    pub groups: Vec<GspoResult>,
    pub batch_objective: f64,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum GspoFile {
    Bare(Vec<GroupRollouts>),
    Wrapped { groups: Vec<GroupRollouts> },
}

pub fn cmd_gspo_eval(json: &str) -> CliResult<GspoReport> {
    let groups = match serde_json::from_str::<GspoFile>(json) {
        Ok(GspoFile::Bare(v) | GspoFile::Wrapped { groups: v }) => v,
        Err(e) => return Err(CliError::Input(format!("malformed GSPO batch: {e}"))),
    };
    let (groups, batch_objective) = gspo_batch(&groups)?;
    Ok(GspoReport { groups, batch_objective })
}
