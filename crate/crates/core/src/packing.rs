//! Context-window packing, token mixture planning and worker load balancing.
//!
//! - [`pack_windows`]: first-fit-decreasing by length into fixed-capacity windows,
//!   with per-item offsets and segment ids for varlen attention.
//! - [`plan_mixture`]: per-modality token targets from mixture fractions, using the
//!   largest-remainder method and redistributing availability shortfalls.
//! - [`balance_workers`]: longest-processing-time-first assignment of estimated costs.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Default context window before long-context extension.
pub const SHORT_CONTEXT: usize = 8_192;
/// Context window after long-context extension.
pub const LONG_CONTEXT: usize = 131_072;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Video,
    Image,
    Text,
}

impl Modality {
    pub const ALL: [Modality; 3] = [Modality::Video, Modality::Image, Modality::Text];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceItem {
    pub id: String,
    pub length_tokens: usize,
    pub modality: Modality,
    /// Estimated work in arbitrary units.
    pub est_cost: f64,
}

/// Linear cost estimate: `vision_weight × vision tokens + text_weight × text tokens`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostModel {
    pub vision_weight: f64,
    pub text_weight: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        Self {
            vision_weight: 2.0,
            text_weight: 1.0,
        }
    }
}

impl CostModel {
    pub fn estimate(&self, vision_tokens: usize, text_tokens: usize) -> f64 {
        self.vision_weight * vision_tokens as f64 + self.text_weight * text_tokens as f64
    }
}

/// One packed context window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PackedWindow {
    pub capacity: usize,
    pub items: Vec<SequenceItem>,
    /// Start token of each item within the window.
    pub offsets: Vec<usize>,
}

impl PackedWindow {
    fn new(capacity: usize) -> Self {
        Self {
            capacity,
            items: Vec::new(),
            offsets: Vec::new(),
        }
    }

    pub fn used(&self) -> usize {
        self.items.iter().map(|i| i.length_tokens).sum()
    }

    pub fn free(&self) -> usize {
        self.capacity - self.used()
    }

    fn push(&mut self, item: SequenceItem) {
        self.offsets.push(self.used());
        self.items.push(item);
    }

    /// Segment id of every occupied token: item `k` of the window is marked `k`.
    pub fn segment_ids(&self) -> Vec<u32> {
        self.items
            .iter()
            .enumerate()
            .flat_map(|(k, it)| std::iter::repeat_n(k as u32, it.length_tokens))
            .collect()
    }

    /// Cumulative sequence boundaries `[0, end_0, end_1, ...]`.
    pub fn cu_seqlens(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.items.len() + 1);
        out.push(0);
        out.extend(self.offsets.iter().zip(&self.items).map(|(o, i)| o + i.length_tokens));
        out
    }
}

fn check_items(items: &[SequenceItem]) -> Result<()> {
    for it in items {
        if it.length_tokens == 0 {
            return invalid(format!("item {:?} has zero length", it.id));
        }
        if !(it.est_cost.is_finite() && it.est_cost >= 0.0) {
            return invalid(format!("item {:?} has invalid cost {}", it.id, it.est_cost));
        }
    }
    Ok(())
}

/// First-fit-decreasing packing. Equal lengths keep input order.
pub fn pack_windows(items: &[SequenceItem], capacity: usize) -> Result<Vec<PackedWindow>> {
    if capacity == 0 {
        return invalid("window capacity must be at least 1");
    }
    check_items(items)?;
    if let Some(big) = items.iter().find(|i| i.length_tokens > capacity) {
        return Err(Error::OversizeItem {
            id: big.id.clone(),
            length: big.length_tokens,
            capacity,
        });
    }
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.sort_by(|&a, &b| items[b].length_tokens.cmp(&items[a].length_tokens));

    let mut windows: Vec<PackedWindow> = Vec::new();
    for idx in order {
        let item = &items[idx];
        match windows.iter_mut().find(|w| w.free() >= item.length_tokens) {
            Some(w) => w.push(item.clone()),
            None => {
                let mut w = PackedWindow::new(capacity);
                w.push(item.clone());
                windows.push(w);
            }
        }
    }
    Ok(windows)
}

/// Share of the token budget per modality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MixtureFractions {
    pub video: f64,
    pub image: f64,
    pub text: f64,
}

impl Default for MixtureFractions {
    fn default() -> Self {
        Self {
            video: 0.24,
            image: 0.50,
            text: 0.26,
        }
    }
}

impl MixtureFractions {
    pub fn get(&self, m: Modality) -> f64 {
        match m {
            Modality::Video => self.video,
            Modality::Image => self.image,
            Modality::Text => self.text,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.video, self.image, self.text];
        if all.iter().any(|f| !f.is_finite() || *f < 0.0) {
            return Err(Error::InvalidConfig(format!("mixture fractions must be non-negative, got {all:?}")));
        }
        let sum: f64 = all.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!("mixture fractions sum to {sum}, expected 1")));
        }
        Ok(())
    }
}

/// Per-modality token counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModalityTokens {
    pub video: usize,
    pub image: usize,
    pub text: usize,
}

impl ModalityTokens {
    pub fn get(&self, m: Modality) -> usize {
        match m {
            Modality::Video => self.video,
            Modality::Image => self.image,
            Modality::Text => self.text,
        }
    }

    fn slot(&mut self, m: Modality) -> &mut usize {
        match m {
            Modality::Video => &mut self.video,
            Modality::Image => &mut self.image,
            Modality::Text => &mut self.text,
        }
    }

    pub fn total(&self) -> usize {
        self.video + self.image + self.text
    }
}

/// Split `budget` among `modalities` in proportion to `weights` with the largest-remainder method.
/// Ties on remainders go to the earlier modality.
fn largest_remainder(budget: usize, modalities: &[Modality], weights: &[f64]) -> Vec<usize> {
    let total: f64 = weights.iter().sum();
    let ideal: Vec<f64> = weights.iter().map(|w| budget as f64 * w / total).collect();
    let mut out: Vec<usize> = ideal.iter().map(|x| x.floor() as usize).collect();
    let assigned: usize = out.iter().sum();
    let mut order: Vec<usize> = (0..modalities.len()).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (ideal[a] - ideal[a].floor(), ideal[b] - ideal[b].floor());
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &k in order.iter().take(budget.saturating_sub(assigned)) {
        out[k] += 1;
    }
    out
}

/// Token targets per modality for a window of `window_budget` tokens.
///
/// Modalities whose proportional share exceeds their availability are capped at
/// what is available; the shortfall is shared among the rest in proportion to
/// their fractions (or to availability when all remaining fractions are zero).
pub fn plan_mixture(available: &ModalityTokens, window_budget: usize, fractions: &MixtureFractions) -> Result<ModalityTokens> {
    fractions.validate()?;
    if available.total() < window_budget {
        return Err(Error::InfeasibleMixture {
            requested: window_budget,
            achievable: available.total(),
        });
    }
    let mut targets = ModalityTokens::default();
    let mut open: Vec<Modality> = Modality::ALL.to_vec();
    let mut remaining = window_budget;

    while remaining > 0 && !open.is_empty() {
        let mut weights: Vec<f64> = open.iter().map(|&m| fractions.get(m)).collect();
        if weights.iter().sum::<f64>() <= 0.0 {
            weights = open.iter().map(|&m| available.get(m) as f64).collect();
        }
        let wsum: f64 = weights.iter().sum();
        let capped: Vec<Modality> = open
            .iter()
            .zip(&weights)
            .filter(|(m, w)| remaining as f64 * **w / wsum > available.get(**m) as f64)
            .map(|(m, _)| *m)
            .collect();
        if capped.is_empty() {
            let split = largest_remainder(remaining, &open, &weights);
            for (m, n) in open.iter().zip(split) {
                *targets.slot(*m) = n;
            }
            break;
        }
        for m in capped {
            *targets.slot(m) = available.get(m);
            remaining -= available.get(m);
            open.retain(|&o| o != m);
        }
    }
    debug_assert_eq!(targets.total(), window_budget);
    Ok(targets)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkerAssignment {
    /// Item ids per worker, in assignment order.
    pub assignments: Vec<Vec<String>>,
    pub loads: Vec<f64>,
}

impl WorkerAssignment {
    pub fn makespan(&self) -> f64 {
        self.loads.iter().copied().fold(0.0, f64::max)
    }
}

/// LPT scheduling: costliest item first (ties by id), each onto the least-loaded
/// worker (ties by lowest index).
pub fn balance_workers(items: &[SequenceItem], n_workers: usize) -> Result<WorkerAssignment> {
    if n_workers == 0 {
        return invalid("need at least one worker");
    }
    check_items(items)?;
    let mut order: Vec<&SequenceItem> = items.iter().collect();
    order.sort_by(|a, b| b.est_cost.total_cmp(&a.est_cost).then_with(|| a.id.cmp(&b.id)));

    let mut assignments = vec![Vec::new(); n_workers];
    let mut loads = vec![0.0f64; n_workers];
    for item in order {
        let (w, _) = loads
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |best, (i, &l)| if l < best.1 { (i, l) } else { best });
        assignments[w].push(item.id.clone());
        loads[w] += item.est_cost;
    }
    Ok(WorkerAssignment { assignments, loads })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn item(id: &str, len: usize, cost: f64) -> SequenceItem {
        SequenceItem {
            id: id.into(),
            length_tokens: len,
            modality: Modality::Text,
            est_cost: cost,
        }
    }

    fn lens(windows: &[PackedWindow]) -> Vec<Vec<usize>> {
        windows.iter().map(|w| w.items.iter().map(|i| i.length_tokens).collect()).collect()
    }

    #[test]
    fn exact_fill() {
        let items: Vec<_> = (0..3).map(|i| item(&format!("s{i}"), 5, 1.0)).collect();
        let w = pack_windows(&items, 10).unwrap();
        assert_eq!(lens(&w), vec![vec![5, 5], vec![5]]);
        assert_eq!(w[0].offsets, vec![0, 5]);
        assert_eq!(w[0].segment_ids(), [vec![0; 5], vec![1; 5]].concat());
        assert_eq!(w[0].cu_seqlens(), vec![0, 5, 10]);
    }

    #[test]
    fn boundary_item_fills_window() {
        let w = pack_windows(&[item("a", SHORT_CONTEXT, 1.0)], SHORT_CONTEXT).unwrap();
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].free(), 0);
    }

    #[test]
    fn ffd_instance() {
        let items: Vec<_> = [7, 6, 5, 4, 3]
            .iter()
            .enumerate()
            .map(|(i, &l)| item(&i.to_string(), l, 1.0))
            .collect();
        let w = pack_windows(&items, 10).unwrap();
        assert_eq!(lens(&w), vec![vec![7, 3], vec![6, 4], vec![5]]);
    }

    #[test]
    fn oversize_item_named() {
        let err = pack_windows(&[item("ok", 3, 1.0), item("huge", 11, 1.0)], 10).unwrap_err();
        assert_eq!(
            err,
            Error::OversizeItem {
                id: "huge".into(),
                length: 11,
                capacity: 10
            }
        );
    }

    #[test]
    fn default_mixture() {
        let ample = ModalityTokens {
            video: 1000,
            image: 1000,
            text: 1000,
        };
        let t = plan_mixture(&ample, 100, &MixtureFractions::default()).unwrap();
        assert_eq!((t.video, t.image, t.text), (24, 50, 26));
    }

    #[test]
    fn single_modality_mixture() {
        let f = MixtureFractions {
            video: 0.0,
            image: 0.0,
            text: 1.0,
        };
        let t = plan_mixture(
            &ModalityTokens {
                video: 0,
                image: 0,
                text: 5,
            },
            1,
            &f,
        )
        .unwrap();
        assert_eq!((t.video, t.image, t.text), (0, 0, 1));
    }

    #[test]
    fn video_shortfall_is_redistributed() {
        // Video capped at 10; remaining 90 split 0.50 : 0.26 -> 59.21 / 30.79 -> 59 / 31.
        let avail = ModalityTokens {
            video: 10,
            image: 1000,
            text: 1000,
        };
        let t = plan_mixture(&avail, 100, &MixtureFractions::default()).unwrap();
        assert_eq!((t.video, t.image, t.text), (10, 59, 31));
    }

    #[test]
    fn cascading_caps() {
        let avail = ModalityTokens {
            video: 10,
            image: 20,
            text: 1000,
        };
        let t = plan_mixture(&avail, 100, &MixtureFractions::default()).unwrap();
        assert_eq!((t.video, t.image, t.text), (10, 20, 70));
    }

    #[test]
    fn infeasible_mixture() {
        let avail = ModalityTokens {
            video: 1,
            image: 2,
            text: 3,
        };
        assert_eq!(
            plan_mixture(&avail, 10, &MixtureFractions::default()).unwrap_err(),
            Error::InfeasibleMixture {
                requested: 10,
                achievable: 6
            }
        );
        let bad = MixtureFractions {
            video: 0.5,
            image: 0.5,
            text: 0.5,
        };
        assert!(plan_mixture(&avail, 1, &bad).is_err());
    }

    #[test]
    fn lpt_small_instance() {
        let items: Vec<_> = [5.0, 4.0, 3.0, 3.0]
            .iter()
            .enumerate()
            .map(|(i, &c)| item(&format!("j{i}"), 1, c))
            .collect();
        let a = balance_workers(&items, 2).unwrap();
        assert_eq!(a.loads, vec![8.0, 7.0]);
        assert_eq!(a.makespan(), 8.0);
        assert_eq!(
            a.assignments,
            vec![vec!["j0".to_string(), "j3".into()], vec!["j1".into(), "j2".into()]]
        );
    }

    #[test]
    fn identical_costs_spread_evenly() {
        let items: Vec<_> = (0..4).map(|i| item(&format!("j{i}"), 1, 2.5)).collect();
        let a = balance_workers(&items, 4).unwrap();
        assert!(a.assignments.iter().all(|w| w.len() == 1));
        assert_eq!(a.makespan(), 2.5);
    }

    #[test]
    fn single_worker_takes_all() {
        let items: Vec<_> = (0..5).map(|i| item(&format!("j{i}"), 1, i as f64)).collect();
        let a = balance_workers(&items, 1).unwrap();
        assert_eq!(a.assignments[0].len(), 5);
        assert_eq!(a.makespan(), 10.0);
        assert!(balance_workers(&items, 0).is_err());
    }

    #[test]
    fn cost_model_default() {
        assert_eq!(CostModel::default().estimate(100, 20), 220.0);
    }
}
