//! Patch-based inter-frame similarity and Slow/Fast frame classification.
//!
//! Both frames are area-resampled to a common square comparison resolution,
//! split into a `grid_side × grid_side` grid, and each patch is reduced to its
//! mean RGB color. A patch is *unchanged* when the mean absolute per-channel
//! difference of the two mean colors (normalized to `[0, 1]`) is below
//! `per_patch_tol`. The similarity of two frames is the unchanged fraction.
//!
//! Classification walks the video in order and compares every frame against the
//! latest Slow frame: frame 0 is Slow, and a later frame becomes Fast only when
//! its similarity to that anchor is strictly greater than the threshold.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// One decoded video frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    pub index: usize,
    pub timestamp_s: f64,
    pub width_px: usize,
    pub height_px: usize,
    /// Row-major RGB, 3 bytes per pixel.
    pub pixels: Vec<u8>,
}

impl FrameRecord {
    pub fn new(index: usize, timestamp_s: f64, width_px: usize, height_px: usize, pixels: Vec<u8>) -> Result<Self> {
        let frame = Self {
            index,
            timestamp_s,
            width_px,
            height_px,
            pixels,
        };
        frame.validate()?;
        Ok(frame)
    }

    /// A frame filled with one color.
    pub fn solid(index: usize, timestamp_s: f64, width_px: usize, height_px: usize, rgb: [u8; 3]) -> Self {
        let pixels = rgb.iter().copied().cycle().take(width_px * height_px * 3).collect();
        Self {
            index,
            timestamp_s,
            width_px,
            height_px,
            pixels,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width_px == 0 || self.height_px == 0 {
            return invalid(format!("frame {} has zero size {}x{}", self.index, self.width_px, self.height_px));
        }
        let expected = self.width_px * self.height_px * 3;
        if self.pixels.len() != expected {
            return invalid(format!(
                "frame {} has {} pixel bytes, expected {expected} for {}x{} RGB",
                self.index,
                self.pixels.len(),
                self.width_px,
                self.height_px
            ));
        }
        if !self.timestamp_s.is_finite() || self.timestamp_s < 0.0 {
            return invalid(format!("frame {} has invalid timestamp {}", self.index, self.timestamp_s));
        }
        Ok(())
    }

    #[inline]
    fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width_px + x) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }
}

/// Parameters of the similarity function and the Slow/Fast rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimilarityConfig {
    /// Comparison patches per axis.
    pub grid_side: usize,
    /// Per-patch tolerance on the normalized mean color difference.
    pub per_patch_tol: f64,
    /// A frame is Fast when its similarity to the anchor is strictly above this.
    pub threshold: f64,
    /// Side of the square comparison resolution both frames are resampled to.
    pub compare_size: usize,
}

impl Default for SimilarityConfig {
    fn default() -> Self {
        Self {
            grid_side: 8,
            per_patch_tol: 0.05,
            threshold: 0.95,
            compare_size: 224,
        }
    }
}

impl SimilarityConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid_side == 0 {
            return Err(Error::InvalidConfig("grid_side must be at least 1".into()));
        }
        if self.compare_size < self.grid_side {
            return Err(Error::InvalidConfig(format!(
                "compare_size {} must be at least grid_side {}",
                self.compare_size, self.grid_side
            )));
        }
        if !(self.per_patch_tol.is_finite() && self.per_patch_tol >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "per_patch_tol must be finite and >= 0, got {}",
                self.per_patch_tol
            )));
        }
        if !self.threshold.is_finite() {
            return Err(Error::InvalidConfig("threshold must be finite".into()));
        }
        Ok(())
    }
}

/// Result of comparing two frames.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityReport {
    pub anchor_index: usize,
    pub target_index: usize,
    pub grid_side: usize,
    pub unchanged_fraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameKind {
    Slow,
    Fast,
}

/// Classification of one frame. For a Slow frame the anchor is the frame itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameClass {
    pub index: usize,
    pub kind: FrameKind,
    pub anchor_index: usize,
}

/// Mean RGB color of every comparison patch, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchSignature {
    grid_side: usize,
    means: Vec<[f64; 3]>,
}

impl PatchSignature {
    pub fn compute(frame: &FrameRecord, cfg: &SimilarityConfig) -> Result<Self> {
        frame.validate()?;
        cfg.validate()?;
        let g = cfg.grid_side;
        let wx = patch_axis_weights(frame.width_px, cfg.compare_size, g);
        let wy = patch_axis_weights(frame.height_px, cfg.compare_size, g);

        // Horizontal pass: one partial mean per (source row, patch column).
        let mut rows = vec![[0.0f64; 3]; frame.height_px * g];
        for y in 0..frame.height_px {
            for (px, (x0, weights)) in wx.iter().enumerate() {
                let mut acc = [0.0; 3];
                for (dx, &w) in weights.iter().enumerate() {
                    let p = frame.pixel(x0 + dx, y);
                    acc[0] += w * p[0] as f64;
                    acc[1] += w * p[1] as f64;
                    acc[2] += w * p[2] as f64;
                }
                rows[y * g + px] = acc;
            }
        }
        let mut means = Vec::with_capacity(g * g);
        for (y0, weights) in &wy {
            for px in 0..g {
                let mut acc = [0.0; 3];
                for (dy, &w) in weights.iter().enumerate() {
                    let p = rows[(y0 + dy) * g + px];
                    acc[0] += w * p[0];
                    acc[1] += w * p[1];
                    acc[2] += w * p[2];
                }
                means.push(acc);
            }
        }
        Ok(Self { grid_side: g, means })
    }

    pub fn grid_side(&self) -> usize {
        self.grid_side
    }

    pub fn means(&self) -> &[[f64; 3]] {
        &self.means
    }

    /// Fraction of patches whose mean colors differ by less than `tol`.
    pub fn unchanged_fraction(&self, other: &PatchSignature, tol: f64) -> f64 {
        debug_assert_eq!(self.grid_side, other.grid_side);
        let unchanged = self
            .means
            .iter()
            .zip(&other.means)
            .filter(|(a, b)| patch_distance(a, b) < tol)
            .count();
        unchanged as f64 / self.means.len() as f64
    }
}

/// Mean absolute per-channel difference of two mean colors, in `[0, 1]`.
#[inline]
fn patch_distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    ((a[0] - b[0]).abs() + (a[1] - b[1]).abs() + (a[2] - b[2]).abs()) / (3.0 * 255.0)
}

/// Source-index weights of every output sample along one axis for area averaging.
fn area_weights(src: usize, dst: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|o| {
            let lo = o as f64 * scale;
            let hi = (o + 1) as f64 * scale;
            let first = lo.floor() as usize;
            let last = (hi.ceil() as usize).min(src);
            (first..last)
                .filter_map(|i| {
                    let overlap = (hi.min((i + 1) as f64) - lo.max(i as f64)).max(0.0);
                    (overlap > 0.0).then_some((i, overlap / scale))
                })
                .collect()
        })
        .collect()
}

/// Source weights of every comparison patch along one axis.
///
/// The axis is area-resampled to `size` samples and split into `grid` runs of
/// samples; a patch's mean over its run is a fixed linear combination of source
/// pixels, returned as `(first source index, weights)`. Computing patch means
/// this way equals averaging the resampled plane without materializing it.
fn patch_axis_weights(src: usize, size: usize, grid: usize) -> Vec<(usize, Vec<f64>)> {
    let taps = area_weights(src, size);
    (0..grid)
        .map(|p| {
            let (a, b) = (p * size / grid, (p + 1) * size / grid);
            let first = taps[a].first().map_or(0, |t| t.0);
            let last = taps[b - 1].last().map_or(0, |t| t.0);
            let mut weights = vec![0.0; last + 1 - first];
            let n = (b - a) as f64;
            for sample in &taps[a..b] {
                for &(i, w) in sample {
                    weights[i - first] += w / n;
                }
            }
            (first, weights)
        })
        .collect()
}

/// Compare two frames on the configured patch grid.
pub fn patch_similarity(a: &FrameRecord, b: &FrameRecord, cfg: &SimilarityConfig) -> Result<SimilarityReport> {
    let sa = PatchSignature::compute(a, cfg)?;
    let sb = PatchSignature::compute(b, cfg)?;
    Ok(SimilarityReport {
        anchor_index: a.index,
        target_index: b.index,
        grid_side: cfg.grid_side,
        unchanged_fraction: sa.unchanged_fraction(&sb, cfg.per_patch_tol),
    })
}

/// Classify every frame as Slow or Fast against the latest Slow anchor.
pub fn classify_frames(frames: &[FrameRecord], cfg: &SimilarityConfig) -> Result<Vec<FrameClass>> {
    classify_frames_with_reports(frames, cfg).map(|(classes, _)| classes)
}

/// Like [`classify_frames`], also returning the anchor comparison made for every frame after the first.
pub fn classify_frames_with_reports(frames: &[FrameRecord], cfg: &SimilarityConfig) -> Result<(Vec<FrameClass>, Vec<SimilarityReport>)> {
    if frames.is_empty() {
        return invalid("no frames");
    }
    cfg.validate()?;
    for (pos, frame) in frames.iter().enumerate() {
        if frame.index != pos {
            return invalid(format!("frame at position {pos} carries index {}", frame.index));
        }
    }
    for pair in frames.windows(2) {
        if pair[1].timestamp_s <= pair[0].timestamp_s {
            return invalid(format!(
                "timestamps must strictly increase: frame {} at {}s follows {}s",
                pair[1].index, pair[1].timestamp_s, pair[0].timestamp_s
            ));
        }
    }

    // Signatures are independent per frame; collect preserves order.
    let signatures = frames
        .par_iter()
        .map(|f| PatchSignature::compute(f, cfg))
        .collect::<Result<Vec<_>>>()?;

    Ok(classify_signatures(&signatures, cfg))
}

/// Apply the Slow/Fast rule to precomputed signatures.
pub fn classify_signatures(signatures: &[PatchSignature], cfg: &SimilarityConfig) -> (Vec<FrameClass>, Vec<SimilarityReport>) {
    let mut classes = Vec::with_capacity(signatures.len());
    let mut reports = Vec::with_capacity(signatures.len().saturating_sub(1));
    let mut anchor = 0usize;
    for (i, sig) in signatures.iter().enumerate() {
        if i == 0 {
            classes.push(FrameClass {
                index: 0,
                kind: FrameKind::Slow,
                anchor_index: 0,
            });
            continue;
        }
        let unchanged = signatures[anchor].unchanged_fraction(sig, cfg.per_patch_tol);
        reports.push(SimilarityReport {
            anchor_index: anchor,
            target_index: i,
            grid_side: cfg.grid_side,
            unchanged_fraction: unchanged,
        });
        if unchanged > cfg.threshold {
            classes.push(FrameClass {
                index: i,
                kind: FrameKind::Fast,
                anchor_index: anchor,
            });
        } else {
            anchor = i;
            classes.push(FrameClass {
                index: i,
                kind: FrameKind::Slow,
                anchor_index: i,
            });
        }
    }
    (classes, reports)
}
