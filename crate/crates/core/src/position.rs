//! Position information for variable-resolution inputs.
//!
//! Three pieces live here:
//!
//! - bilinear, corner-aligned resampling of a learned square position-embedding grid
//!   to any `rows × cols` patch grid;
//! - rotary angles, where the rotary pairs of a head are partitioned among axes
//!   (2 axes for ViT patches, 3 for the unified text/image/video sequence);
//! - the per-token `(t, h, w)` index table for a [`TokenLayout`].

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::layout::{LayoutElement, TokenLayout, VisionKind};

/// Learned absolute position embeddings on a `side × side` grid, row-major, `dim` values per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct PosEmbedGrid {
    pub side: usize,
    pub dim: usize,
    pub values: Vec<f64>,
}

impl PosEmbedGrid {
    /// Source grid side of a 384 px encoder with 14 px patches.
    pub const DEFAULT_SIDE: usize = 27;

    pub fn new(side: usize, dim: usize, values: Vec<f64>) -> Result<Self> {
        if side < 2 {
            return invalid(format!("position grid side must be at least 2, got {side}"));
        }
        if dim == 0 {
            return invalid("embedding dim must be at least 1");
        }
        if values.len() != side * side * dim {
            return invalid(format!(
                "expected {} values for a {side}x{side}x{dim} grid, got {}",
                side * side * dim,
                values.len()
            ));
        }
        Ok(Self { side, dim, values })
    }

    #[inline]
    fn at(&self, r: usize, c: usize) -> &[f64] {
        let i = (r * self.side + c) * self.dim;
        &self.values[i..i + self.dim]
    }
}

/// Corner-aligned source coordinate and blend weight for target index `i` of `n`.
fn source_coord(i: usize, n: usize, side: usize) -> (usize, usize, f64) {
    if n == 1 {
        return (0, 0, 0.0);
    }
    let x = i as f64 * (side - 1) as f64 / (n - 1) as f64;
    let lo = (x.floor() as usize).min(side - 1);
    let hi = (lo + 1).min(side - 1);
    (lo, hi, x - lo as f64)
}

/// Bilinearly resample `src` onto a `rows × cols` grid. Output is row-major, `dim` values per cell.
pub fn interpolate_pos_embed(src: &PosEmbedGrid, rows: usize, cols: usize) -> Result<Vec<f64>> {
    if rows == 0 || cols == 0 {
        return invalid(format!("target grid must be non-empty, got {rows}x{cols}"));
    }
    if src.side < 2 || src.values.len() != src.side * src.side * src.dim {
        return invalid("malformed source grid");
    }
    if src.values.iter().any(|v| !v.is_finite()) {
        return invalid("source position embeddings contain non-finite values");
    }

    let xs: Vec<_> = (0..cols).map(|c| source_coord(c, cols, src.side)).collect();
    let mut out = Vec::with_capacity(rows * cols * src.dim);
    for r in 0..rows {
        let (r0, r1, fy) = source_coord(r, rows, src.side);
        for &(c0, c1, fx) in &xs {
            let (a, b) = (src.at(r0, c0), src.at(r0, c1));
            let (c, d) = (src.at(r1, c0), src.at(r1, c1));
            for k in 0..src.dim {
                let top = a[k] * (1.0 - fx) + b[k] * fx;
                let bottom = c[k] * (1.0 - fx) + d[k] * fx;
                out.push(top * (1.0 - fy) + bottom * fy);
            }
        }
    }
    Ok(out)
}

/// Rotary configuration: head width, frequency base and per-axis pair counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RopeConfig {
    pub head_dim: usize,
    pub inv_freq_base: f64,
    /// Rotary pairs assigned to each axis, summing to `head_dim / 2`.
    pub axis_split: Vec<usize>,
}

impl Default for RopeConfig {
    fn default() -> Self {
        Self {
            head_dim: 128,
            inv_freq_base: 1_000_000.0,
            axis_split: vec![16, 24, 24],
        }
    }
}

impl RopeConfig {
    /// Inverse-frequency base after the long-context extension.
    pub const LONG_CONTEXT_BASE: f64 = 8_000_000.0;

    /// Two-axis split with equal halves, for ViT patch grids.
    pub fn vit_2d(head_dim: usize, inv_freq_base: f64) -> Self {
        let pairs = head_dim / 2;
        Self {
            head_dim,
            inv_freq_base,
            axis_split: vec![pairs - pairs / 2, pairs / 2],
        }
    }

    /// Same split with the base reset for long-context training.
    pub fn long_context(&self) -> Self {
        Self {
            inv_freq_base: Self::LONG_CONTEXT_BASE,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.head_dim == 0 || !self.head_dim.is_multiple_of(2) {
            return Err(Error::InvalidConfig(format!(
                "head_dim must be even and positive, got {}",
                self.head_dim
            )));
        }
        if !(self.inv_freq_base.is_finite() && self.inv_freq_base > 1.0) {
            return Err(Error::InvalidConfig(format!(
                "inv_freq_base must exceed 1, got {}",
                self.inv_freq_base
            )));
        }
        if self.axis_split.contains(&0) || self.axis_split.iter().sum::<usize>() != self.head_dim / 2 {
            return Err(Error::InvalidConfig(format!(
                "axis_split {:?} must be positive and sum to head_dim / 2 = {}",
                self.axis_split,
                self.head_dim / 2
            )));
        }
        Ok(())
    }

    /// Inverse frequencies per axis: pair `k` of an axis with `P` pairs gets `base^(-k / P)`.
    pub fn inv_freqs(&self) -> Vec<Vec<f64>> {
        self.axis_split
            .iter()
            .map(|&p| (0..p).map(|k| self.inv_freq_base.powf(-(k as f64) / p as f64)).collect())
            .collect()
    }
}

/// Rotary angles for a multi-axis position; one position per axis of `cfg.axis_split`.
pub fn rope_angles(positions: &[usize], cfg: &RopeConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    if positions.len() != cfg.axis_split.len() {
        return Err(Error::InvalidConfig(format!(
            "{} positions for {} rotary axes",
            positions.len(),
            cfg.axis_split.len()
        )));
    }
    Ok(cfg
        .inv_freqs()
        .iter()
        .zip(positions)
        .flat_map(|(freqs, &p)| freqs.iter().map(move |f| p as f64 * f))
        .collect())
}

/// Rotary angles of a ViT patch at `(row, col)`; `cfg` must have exactly two axes.
pub fn rope_angles_2d(row: usize, col: usize, cfg: &RopeConfig) -> Result<Vec<f64>> {
    if cfg.axis_split.len() != 2 {
        return Err(Error::InvalidConfig(format!(
            "2D rotary needs 2 axes, got {}",
            cfg.axis_split.len()
        )));
    }
    rope_angles(&[row, col], cfg)
}

/// Reference rotation of consecutive pairs `(x[2k], x[2k+1])` by `angles[k]`.
pub fn apply_rotary(x: &[f64], angles: &[f64]) -> Vec<f64> {
    assert_eq!(x.len(), 2 * angles.len(), "vector width must be twice the angle count");
    let mut out = Vec::with_capacity(x.len());
    for (pair, &theta) in x.chunks_exact(2).zip(angles) {
        let (s, c) = theta.sin_cos();
        out.push(pair[0] * c - pair[1] * s);
        out.push(pair[0] * s + pair[1] * c);
    }
    out
}

/// `(t, h, w)` rotary index for one token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RopeIndex {
    pub t: usize,
    pub h: usize,
    pub w: usize,
}

/// Per-token rotary indices for a whole sequence.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RopeIndexTable {
    pub entries: Vec<RopeIndex>,
    /// Position the next token appended after this sequence would take.
    pub next_position: usize,
}

impl RopeIndexTable {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Triples as `[t, h, w]` arrays, the serialized form.
    pub fn triples(&self) -> Vec<[usize; 3]> {
        self.entries.iter().map(|e| [e.t, e.h, e.w]).collect()
    }
}

impl Serialize for RopeIndexTable {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Repr {
            next_position: usize,
            positions: Vec<[usize; 3]>,
        }
        Repr {
            next_position: self.next_position,
            positions: self.triples(),
        }
        .serialize(s)
    }
}

/// Build the `(t, h, w)` table for `layout`.
///
/// Non-vision elements take one shared position `(c, c, c)` per token and advance
/// the cursor `c`. An image block at cursor `c` gets `(c, c + row, c + col)`.
/// Video frames share the temporal origin `t0`, the cursor at the first video
/// frame block, and get `t = t0 + round(timestamp / temporal_unit_s)` with
/// `h`/`w` offset by the current cursor. After any vision block the cursor moves
/// to one past the largest index used in it.
pub fn build_rope_index_table(layout: &TokenLayout, frame_timestamps: &[f64], temporal_unit_s: f64) -> Result<RopeIndexTable> {
    if !(temporal_unit_s.is_finite() && temporal_unit_s > 0.0) {
        return invalid(format!("temporal_unit_s must be positive, got {temporal_unit_s}"));
    }
    let mut entries = Vec::with_capacity(layout.token_count());
    let mut cursor = 0usize;
    let mut video_origin: Option<usize> = None;

    for element in &layout.elements {
        match element {
            LayoutElement::VisionBlock { frame_index, grid, kind } => {
                let t = match kind {
                    VisionKind::Image => cursor,
                    VisionKind::Slow | VisionKind::Fast => {
                        let ts = *frame_timestamps.get(*frame_index).ok_or_else(|| {
                            Error::InvalidInput(format!(
                                "vision block references frame {frame_index} but only {} timestamps given",
                                frame_timestamps.len()
                            ))
                        })?;
                        if !(ts.is_finite() && ts >= 0.0) {
                            return invalid(format!("frame {frame_index} has invalid timestamp {ts}"));
                        }
                        let origin = *video_origin.get_or_insert(cursor);
                        origin + (ts / temporal_unit_s).round() as usize
                    }
                };
                if grid.rows == 0 || grid.cols == 0 {
                    return invalid(format!("vision block for frame {frame_index} has an empty grid"));
                }
                for r in 0..grid.rows {
                    for c in 0..grid.cols {
                        entries.push(RopeIndex {
                            t,
                            h: cursor + r,
                            w: cursor + c,
                        });
                    }
                }
                let block_max = t.max(cursor + grid.rows - 1).max(cursor + grid.cols - 1);
                cursor = block_max + 1;
            }
            other => {
                for _ in 0..other.token_count() {
                    entries.push(RopeIndex {
                        t: cursor,
                        h: cursor,
                        w: cursor,
                    });
                    cursor += 1;
                }
            }
        }
    }
    Ok(RopeIndexTable {
        entries,
        next_position: cursor,
    })
}
