//! Frame manifest: pre-decoded video frames on disk.
//!
//! ```json
//! {
//!   "version": "1",
//!   "fps": 2.0,
//!   "frames": [
//!     {"path": "f000.png"},
//!     {"raw": "f001.rgb", "width": 64, "height": 36, "timestamp_s": 0.5}
//!   ]
//! }
//! ```
//!
//! Paths are relative to the manifest's directory. A frame is either an image file
//! (PNG or PPM) or a raw interleaved RGB blob with explicit dimensions. Timestamps
//! come from `fps` (frame `i` at `i / fps`) unless every frame carries `timestamp_s`.
//! `native_width`/`native_height` record the source resolution when the stored
//! pixels are a thumbnail; token budgeting then uses the native size while
//! similarity uses the stored pixels.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use slowfast_core::FrameRecord;

use crate::error::{CliError, CliResult};

pub const MANIFEST_VERSION: &str = "1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub native_width: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub native_height: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameManifest {
    pub version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fps: Option<f64>,
    pub frames: Vec<FrameEntry>,
}

/// Decoded frames plus the dimensions used for token budgeting.
#[derive(Debug, Clone)]
pub struct LoadedVideo {
    pub frames: Vec<FrameRecord>,
    pub budget_dims: Vec<(usize, usize)>,
}

impl LoadedVideo {
    pub fn timestamps(&self) -> Vec<f64> {
        self.frames.iter().map(|f| f.timestamp_s).collect()
    }
}

impl FrameManifest {
    pub fn from_json(text: &str) -> CliResult<Self> {
        serde_json::from_str(text).map_err(|e| CliError::Input(format!("malformed manifest: {e}")))
    }

    /// Per-frame timestamps from explicit values or `fps`.
    pub fn timestamps(&self) -> CliResult<Vec<f64>> {
        let explicit: Vec<Option<f64>> = self.frames.iter().map(|f| f.timestamp_s).collect();
        let ts: Vec<f64> = if explicit.iter().all(Option::is_some) {
            explicit.into_iter().flatten().collect()
        } else if let Some(fps) = self.fps {
            if explicit.iter().any(Option::is_some) {
                return Err(CliError::Input("timestamp_s must be given for every frame or for none".into()));
            }
            if !(fps.is_finite() && fps > 0.0) {
                return Err(CliError::Input(format!("fps must be positive, got {fps}")));
            }
            (0..self.frames.len()).map(|i| i as f64 / fps).collect()
        } else {
            return Err(CliError::Input("manifest needs either fps or per-frame timestamp_s".into()));
        };
        if let Some(i) = ts.iter().position(|t| !(t.is_finite() && *t >= 0.0)) {
            return Err(CliError::Input(format!("frame {i}: invalid timestamp {}", ts[i])));
        }
        if let Some(i) = (1..ts.len()).find(|&i| ts[i] <= ts[i - 1]) {
            return Err(CliError::Input(format!(
                "timestamps must strictly increase: frame {i} at {}s follows {}s",
                ts[i],
                ts[i - 1]
            )));
        }
        Ok(ts)
    }

    /// Read and decode every frame. Decoding failures are collected for all frames.
    pub fn load(&self, base_dir: &Path) -> CliResult<LoadedVideo> {
        if self.version != MANIFEST_VERSION {
            return Err(CliError::Input(format!(
                "unsupported manifest version {:?} (expected {MANIFEST_VERSION:?})",
                self.version
            )));
        }
        if self.frames.is_empty() {
            return Err(CliError::Input("no frames".into()));
        }
        let timestamps = self.timestamps()?;
        let decoded: Vec<DecodedFrame> = self
            .frames
            .par_iter()
            .zip(timestamps)
            .enumerate()
            .map(|(i, (entry, ts))| decode_entry(i, ts, entry, base_dir).map_err(|e| format!("frame {i}: {e}")))
            .collect();

        let errors: Vec<String> = decoded.iter().filter_map(|r| r.as_ref().err().cloned()).collect();
        if !errors.is_empty() {
            return Err(CliError::Frames(errors));
        }
        let (frames, budget_dims) = decoded.into_iter().map(Result::unwrap).unzip();
        Ok(LoadedVideo { frames, budget_dims })
    }
}

/// A decoded frame with its budgeting dimensions, or a diagnostic.
type DecodedFrame = Result<(FrameRecord, (usize, usize)), String>;

/// Read a manifest file and decode its frames relative to its directory.
pub fn load_manifest(path: &Path) -> CliResult<LoadedVideo> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let manifest = FrameManifest::from_json(&text)?;
    manifest.load(path.parent().unwrap_or(Path::new(".")))
}

fn decode_entry(index: usize, ts: f64, entry: &FrameEntry, base: &Path) -> DecodedFrame {
    let frame = match (&entry.path, &entry.raw) {
        (Some(p), None) => {
            if entry.width.is_some() || entry.height.is_some() {
                return Err("width/height apply to raw frames only".into());
            }
            let full = base.join(p);
            let img = image::open(&full).map_err(|e| format!("{}: {e}", full.display()))?.to_rgb8();
            let (w, h) = (img.width() as usize, img.height() as usize);
            FrameRecord::new(index, ts, w, h, img.into_raw()).map_err(|e| e.to_string())?
        }
        (None, Some(p)) => {
            let (Some(w), Some(h)) = (entry.width, entry.height) else {
                return Err("raw frames need width and height".into());
            };
            let full = base.join(p);
            let bytes = std::fs::read(&full).map_err(|e| format!("{}: {e}", full.display()))?;
            if bytes.len() != w * h * 3 {
                return Err(format!(
                    "{}: expected {} bytes for {w}x{h} RGB, found {}",
                    full.display(),
                    w * h * 3,
                    bytes.len()
                ));
            }
            FrameRecord::new(index, ts, w, h, bytes).map_err(|e| e.to_string())?
        }
        _ => return Err("exactly one of path or raw is required".into()),
    };
    let dims = match (entry.native_width, entry.native_height) {
        (None, None) => (frame.width_px, frame.height_px),
        (Some(w), Some(h)) if w > 0 && h > 0 => (w, h),
        _ => return Err("native_width and native_height must be given together and be positive".into()),
    };
    Ok((frame, dims))
}
