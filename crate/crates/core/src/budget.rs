//! Native-resolution patch grids and the Slow/Fast video token budget.
//!
//! A frame of `w × h` pixels is encoded at a uniform scale `s ∈ (0, 1]`, with each
//! axis rounded to the nearest multiple of one merged token (`merge_factor × patch_px`
//! pixels, at least one unit). [`fit_grid`] picks the largest such grid under a token
//! cap. [`solve_video_budget`] then binary-searches the largest per-Slow-frame cap `T`
//! whose quantized total, with Fast frames capped at `floor(fast_ratio × T)`, still
//! fits in the video budget.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::frame::{FrameClass, FrameKind};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryConfig {
    /// ViT patch side in pixels.
    pub patch_px: usize,
    /// One LLM token covers `merge_factor × merge_factor` patches.
    pub merge_factor: usize,
    pub min_tokens_per_frame: usize,
    pub max_tokens_per_frame: usize,
    /// Token cap for a single image.
    pub image_token_cap: usize,
    /// Total visual-token budget for one video.
    pub video_token_budget: usize,
    /// Fast frames get `floor(fast_ratio × T)` tokens when Slow frames get `T`.
    pub fast_ratio: f64,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self {
            patch_px: 14,
            merge_factor: 2,
            min_tokens_per_frame: 4,
            max_tokens_per_frame: 16_384,
            image_token_cap: 20_480,
            video_token_budget: 75_000,
            fast_ratio: 0.3,
        }
    }
}

impl GeometryConfig {
    /// Pixel side of one merged token.
    pub fn unit_px(&self) -> usize {
        self.patch_px * self.merge_factor
    }

    /// Fast-frame token cap for a Slow-frame cap of `slow`.
    pub fn fast_tokens(&self, slow: usize) -> usize {
        // the epsilon absorbs binary representation error in e.g. 0.3 × 10
        (self.fast_ratio * slow as f64 + 1e-9).floor() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidConfig(msg));
        if self.patch_px == 0 || self.merge_factor == 0 {
            return fail("patch_px and merge_factor must be at least 1".into());
        }
        if !(self.fast_ratio > 0.0 && self.fast_ratio <= 1.0) {
            return fail(format!("fast_ratio must be in (0, 1], got {}", self.fast_ratio));
        }
        if self.min_tokens_per_frame == 0
            || self.min_tokens_per_frame > self.max_tokens_per_frame
            || self.max_tokens_per_frame > self.video_token_budget
        {
            return fail(format!(
                "need 1 <= min_tokens_per_frame ({}) <= max_tokens_per_frame ({}) <= video_token_budget ({})",
                self.min_tokens_per_frame, self.max_tokens_per_frame, self.video_token_budget
            ));
        }
        if self.fast_tokens(self.min_tokens_per_frame) == 0 {
            return fail(format!(
                "fast_ratio {} gives Fast frames zero tokens at min_tokens_per_frame {}",
                self.fast_ratio, self.min_tokens_per_frame
            ));
        }
        if self.image_token_cap == 0 {
            return fail("image_token_cap must be at least 1".into());
        }
        Ok(())
    }
}

/// Merged-token grid of one resized frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PatchGrid {
    pub rows: usize,
    pub cols: usize,
    pub resized_h_px: usize,
    pub resized_w_px: usize,
}

impl PatchGrid {
    pub fn new(rows: usize, cols: usize, unit_px: usize) -> Self {
        Self {
            rows,
            cols,
            resized_h_px: rows * unit_px,
            resized_w_px: cols * unit_px,
        }
    }

    pub fn tokens(&self) -> usize {
        self.rows * self.cols
    }
}

/// A fitted grid with a scale factor that produces it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridFit {
    pub grid: PatchGrid,
    /// Midpoint of the scale interval whose per-axis rounding yields `grid`.
    pub scale: f64,
}

/// Scale interval `[lo, hi]` (in units of `unit / extent`) on which an axis rounds to `n`.
/// Returned as numerator pairs over the common denominator `2 × extent`:
/// `s ∈ [lo_num × unit / (2 extent), hi_num × unit / (2 extent)]`, with `lo_num = 0` for n = 1.
fn axis_interval(n: usize) -> (u128, u128) {
    let n = n as u128;
    if n == 1 {
        (0, 3)
    } else {
        (2 * n - 1, 2 * n + 1)
    }
}

/// Largest aspect-preserving grid with at most `max_tokens` tokens.
///
/// Ties on token count go to the smaller aspect-ratio distortion, then to more rows.
pub fn fit_grid(width_px: usize, height_px: usize, max_tokens: usize, cfg: &GeometryConfig) -> Result<PatchGrid> {
    fit_grid_with_scale(width_px, height_px, max_tokens, cfg).map(|f| f.grid)
}

pub fn fit_grid_with_scale(width_px: usize, height_px: usize, max_tokens: usize, cfg: &GeometryConfig) -> Result<GridFit> {
    if width_px == 0 || height_px == 0 {
        return invalid(format!("frame dimensions must be positive, got {width_px}x{height_px}"));
    }
    if max_tokens == 0 {
        return invalid("max_tokens must be at least 1");
    }
    if cfg.patch_px == 0 || cfg.merge_factor == 0 {
        return Err(Error::InvalidConfig("patch_px and merge_factor must be at least 1".into()));
    }
    let unit = cfg.unit_px() as u128;
    let (w, h) = (width_px as u128, height_px as u128);

    // Axis n is reachable with s <= 1 iff its interval starts at or below 1:
    // (2n - 1) × unit <= 2 × extent.
    let max_rows = (2 * h / unit).div_ceil(2).max(1) as usize;
    let max_cols = (2 * w / unit).div_ceil(2).max(1) as usize;

    let target_aspect = width_px as f64 / height_px as f64;
    let distortion = |r: usize, c: usize| ((c as f64 / r as f64) / target_aspect).ln().abs();

    let mut best: Option<(usize, usize)> = None;
    for rows in 1..=max_rows.min(max_tokens) {
        let (r_lo, r_hi) = axis_interval(rows);
        // Column range whose interval intersects the row interval:
        // c_lo × unit / 2w <= r_hi × unit / 2h  and  r_lo × unit / 2h <= c_hi × unit / 2w.
        let c_upper = {
            // largest c with c_lo(c) × h <= r_hi × w, where c_lo(c) = 2c - 1 (c >= 2)
            let bound = r_hi * w; // (2c - 1) × h <= bound
            let c = (bound / h).div_ceil(2);
            (c.max(1) as usize).min(max_cols)
        };
        let c_lower = {
            // smallest c with r_lo × w <= c_hi(c) × h, where c_hi(c) = 2c + 1
            let need = r_lo * w; // (2c + 1) × h >= need
            if need <= 3 * h {
                1
            } else {
                let c = (need - h).div_ceil(2 * h);
                c as usize
            }
        };
        let cols = c_upper.min(max_tokens / rows);
        if cols == 0 || cols < c_lower {
            continue;
        }
        let better = match best {
            None => true,
            Some((br, bc)) => {
                let (t, bt) = (rows * cols, br * bc);
                t > bt
                    || (t == bt && {
                        let (d, bd) = (distortion(rows, cols), distortion(br, bc));
                        d < bd || (d == bd && rows > br)
                    })
            }
        };
        if better {
            best = Some((rows, cols));
        }
    }

    let (rows, cols) = best.expect("the 1x1 grid is always reachable");
    let scale = {
        let (r_lo, r_hi) = axis_interval(rows);
        let (c_lo, c_hi) = axis_interval(cols);
        let u = unit as f64;
        let lo = (r_lo as f64 * u / (2.0 * h as f64)).max(c_lo as f64 * u / (2.0 * w as f64));
        let hi = (r_hi as f64 * u / (2.0 * h as f64))
            .min(c_hi as f64 * u / (2.0 * w as f64))
            .min(1.0);
        0.5 * (lo + hi)
    };
    Ok(GridFit {
        grid: PatchGrid::new(rows, cols, cfg.unit_px()),
        scale,
    })
}

/// Grid for a standalone image under the per-image token cap.
pub fn solve_image(width_px: usize, height_px: usize, cfg: &GeometryConfig) -> Result<PatchGrid> {
    cfg.validate()?;
    fit_grid(width_px, height_px, cfg.image_token_cap, cfg)
}

/// Solved token allocation for one video.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BudgetPlan {
    pub tokens_per_slow: usize,
    pub tokens_per_fast: usize,
    /// One grid per frame, aligned with the classification.
    pub grids: Vec<PatchGrid>,
    pub total_tokens: usize,
}

/// Largest `t ∈ [lo, hi]` with `feasible(t)`, assuming `feasible` is monotone
/// (true up to some point, false after). `None` when even `lo` is infeasible.
pub fn max_feasible(lo: usize, hi: usize, mut feasible: impl FnMut(usize) -> bool) -> Option<usize> {
    if lo > hi || !feasible(lo) {
        return None;
    }
    let (mut good, mut bad) = (lo, hi + 1);
    while bad - good > 1 {
        let mid = good + (bad - good) / 2;
        if feasible(mid) {
            good = mid;
        } else {
            bad = mid;
        }
    }
    Some(good)
}

/// Distinct (dims, kind) pairs with multiplicities; the quantized total only depends on these.
struct FrameCensus {
    entries: Vec<((usize, usize), FrameKind, usize)>,
}

impl FrameCensus {
    fn new(classes: &[FrameClass], dims: &[(usize, usize)]) -> Self {
        let mut counts: BTreeMap<((usize, usize), u8), usize> = BTreeMap::new();
        for (c, d) in classes.iter().zip(dims) {
            let k = match c.kind {
                FrameKind::Slow => 0,
                FrameKind::Fast => 1,
            };
            *counts.entry((*d, k)).or_default() += 1;
        }
        let entries = counts
            .into_iter()
            .map(|((d, k), n)| (d, if k == 0 { FrameKind::Slow } else { FrameKind::Fast }, n))
            .collect();
        Self { entries }
    }

    fn total(&self, slow_cap: usize, cfg: &GeometryConfig) -> usize {
        let fast_cap = cfg.fast_tokens(slow_cap);
        self.entries
            .par_iter()
            .map(|&((w, h), kind, n)| {
                let cap = match kind {
                    FrameKind::Slow => slow_cap,
                    FrameKind::Fast => fast_cap,
                };
                n * fit_grid(w, h, cap, cfg).expect("validated inputs").tokens()
            })
            .sum()
    }
}

/// Quantized token total when Slow frames are capped at `slow_cap`.
pub fn total_quantized_tokens(
    classes: &[FrameClass],
    frame_dims: &[(usize, usize)],
    slow_cap: usize,
    cfg: &GeometryConfig,
) -> Result<usize> {
    validate_video(classes, frame_dims)?;
    if slow_cap == 0 || cfg.fast_tokens(slow_cap) == 0 {
        return invalid(format!("slow cap {slow_cap} leaves a zero token cap"));
    }
    Ok(FrameCensus::new(classes, frame_dims).total(slow_cap, cfg))
}

fn validate_video(classes: &[FrameClass], frame_dims: &[(usize, usize)]) -> Result<()> {
    if classes.is_empty() {
        return invalid("no frames");
    }
    if classes.len() != frame_dims.len() {
        return invalid(format!(
            "{} classifications but {} frame dimensions",
            classes.len(),
            frame_dims.len()
        ));
    }
    if classes[0].kind != FrameKind::Slow {
        return invalid("frame 0 must be Slow");
    }
    if let Some((i, _)) = frame_dims.iter().enumerate().find(|(_, (w, h))| *w == 0 || *h == 0) {
        return invalid(format!("frame {i} has zero size"));
    }
    Ok(())
}

/// Maximize the per-Slow-frame token cap under the video budget and quantize every frame.
pub fn solve_video_budget(classes: &[FrameClass], frame_dims: &[(usize, usize)], cfg: &GeometryConfig) -> Result<BudgetPlan> {
    cfg.validate()?;
    validate_video(classes, frame_dims)?;
    let census = FrameCensus::new(classes, frame_dims);
    let budget = cfg.video_token_budget;

    let slow_cap = max_feasible(cfg.min_tokens_per_frame, cfg.max_tokens_per_frame, |t| {
        census.total(t, cfg) <= budget
    })
    .ok_or_else(|| Error::BudgetTooSmall {
        budget,
        minimum_total: census.total(cfg.min_tokens_per_frame, cfg),
    })?;
    let fast_cap = cfg.fast_tokens(slow_cap);

    let grids = classes
        .par_iter()
        .zip(frame_dims.par_iter())
        .map(|(c, &(w, h))| {
            let cap = match c.kind {
                FrameKind::Slow => slow_cap,
                FrameKind::Fast => fast_cap,
            };
            fit_grid(w, h, cap, cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    let total_tokens = grids.iter().map(PatchGrid::tokens).sum();
    debug_assert!(total_tokens <= budget);

    Ok(BudgetPlan {
        tokens_per_slow: slow_cap,
        tokens_per_fast: fast_cap,
        grids,
        total_tokens,
    })
}
