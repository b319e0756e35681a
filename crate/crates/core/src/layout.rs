//! Token layout assembly: boundary special tokens, absolute timestamps and vision blocks.

use serde::{Deserialize, Serialize};

use crate::budget::{BudgetPlan, PatchGrid};
use crate::error::{invalid, Error, Result};
use crate::frame::{FrameClass, FrameKind};

/// Which pathway a vision block belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VisionKind {
    Slow,
    Fast,
    Image,
}

impl From<FrameKind> for VisionKind {
    fn from(k: FrameKind) -> Self {
        match k {
            FrameKind::Slow => VisionKind::Slow,
            FrameKind::Fast => VisionKind::Fast,
        }
    }
}

/// One element of a token layout.
///
/// Special tokens and timestamp texts each occupy one sequence position; a text
/// run occupies `token_count` positions; a vision block occupies one position per
/// merged token of its grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "element", rename_all = "snake_case", deny_unknown_fields)]
pub enum LayoutElement {
    SpecialToken {
        name: String,
    },
    TimestampText {
        seconds: f64,
        text: String,
    },
    Text {
        token_count: usize,
    },
    VisionBlock {
        frame_index: usize,
        grid: PatchGrid,
        kind: VisionKind,
    },
}

impl LayoutElement {
    pub fn token_count(&self) -> usize {
        match self {
            LayoutElement::SpecialToken { .. } | LayoutElement::TimestampText { .. } => 1,
            LayoutElement::Text { token_count } => *token_count,
            LayoutElement::VisionBlock { grid, .. } => grid.tokens(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TokenLayout {
    pub elements: Vec<LayoutElement>,
}

impl TokenLayout {
    /// Parse a serialized layout; unknown element kinds are rejected.
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidInput(format!("malformed token layout: {e}")))
    }

    pub fn token_count(&self) -> usize {
        self.elements.iter().map(LayoutElement::token_count).sum()
    }

    pub fn vision_token_count(&self) -> usize {
        self.elements
            .iter()
            .filter(|e| matches!(e, LayoutElement::VisionBlock { .. }))
            .map(LayoutElement::token_count)
            .sum()
    }
}

/// Names of the Slow/Fast boundary special tokens.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpecialTokens {
    pub slow: String,
    pub fast: String,
}

impl Default for SpecialTokens {
    fn default() -> Self {
        Self {
            slow: "<|slow_frame|>".into(),
            fast: "<|fast_frame|>".into(),
        }
    }
}

/// Render an absolute timestamp at 0.1 s precision, e.g. `22.3s`.
pub fn render_timestamp(seconds: f64) -> String {
    format!("{seconds:.1}s")
}

/// Lay out a classified, budgeted video: `[boundary] [timestamp] [vision block]` per frame.
pub fn assemble_layout(classes: &[FrameClass], plan: &BudgetPlan, timestamps: &[f64], names: &SpecialTokens) -> Result<TokenLayout> {
    if classes.len() != plan.grids.len() || classes.len() != timestamps.len() {
        return invalid(format!(
            "misaligned inputs: {} classes, {} grids, {} timestamps",
            classes.len(),
            plan.grids.len(),
            timestamps.len()
        ));
    }
    let mut elements = Vec::with_capacity(classes.len() * 3);
    for ((class, grid), &ts) in classes.iter().zip(&plan.grids).zip(timestamps) {
        if !(ts.is_finite() && ts >= 0.0) {
            return invalid(format!("frame {} has invalid timestamp {ts}", class.index));
        }
        let name = match class.kind {
            FrameKind::Slow => &names.slow,
            FrameKind::Fast => &names.fast,
        };
        elements.push(LayoutElement::SpecialToken { name: name.clone() });
        elements.push(LayoutElement::TimestampText {
            seconds: ts,
            text: render_timestamp(ts),
        });
        elements.push(LayoutElement::VisionBlock {
            frame_index: class.index,
            grid: *grid,
            kind: class.kind.into(),
        });
    }
    Ok(TokenLayout { elements })
}

/// Layout of a single image: one vision block.
pub fn image_layout(grid: PatchGrid) -> TokenLayout {
    TokenLayout {
        elements: vec![LayoutElement::VisionBlock {
            frame_index: 0,
            grid,
            kind: VisionKind::Image,
        }],
    }
}

/// Map a pixel coordinate to the integer grid `[0, 1000)`.
pub fn normalize_coord(v_px: f64, extent_px: f64) -> Result<u16> {
    if !(extent_px.is_finite() && extent_px >= 1.0) {
        return invalid(format!("extent must be at least 1 px, got {extent_px}"));
    }
    if !(v_px.is_finite() && (0.0..=extent_px).contains(&v_px)) {
        return invalid(format!("coordinate {v_px} outside [0, {extent_px}]"));
    }
    Ok(((v_px / extent_px * 1000.0).floor() as u16).min(999))
}
