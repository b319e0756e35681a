//! Vision-side token pipeline for Slow-Fast video encoding.
//!
//! The crate is organized by pipeline stage:
//!
//! - [`frame`]: patch similarity and Slow/Fast frame classification
//! - [`budget`]: native-resolution patch grids and the per-video token budget solver
//! - [`position`]: interpolated absolute embeddings plus 2D/3D rotary indices
//! - [`layout`]: token layout assembly with boundary tokens and timestamps
//! - [`grounding`]: the grounding markup grammar (emit and parse)
//! - [`packing`]: context-window packing, mixture planning and worker balancing
//! - [`gspo`]: group sequence policy optimization objective values
//!
//! Everything here is pure computation over in-memory values. I/O lives in the CLI crate.

pub mod budget;
pub mod error;
pub mod frame;
pub mod grounding;
pub mod gspo;
pub mod layout;
pub mod packing;
pub mod position;

pub use budget::{fit_grid, solve_image, solve_video_budget, BudgetPlan, GeometryConfig, PatchGrid};
pub use error::{Error, Result};
pub use frame::{classify_frames, patch_similarity, FrameClass, FrameKind, FrameRecord, SimilarityConfig, SimilarityReport};
pub use grounding::{emit_grounding, parse_grounding, GroundingItem, ParseMode};
pub use gspo::{group_advantages, gspo_objective, sequence_ratio, GroupRollouts, GspoResult};
pub use layout::{assemble_layout, normalize_coord, LayoutElement, SpecialTokens, TokenLayout, VisionKind};
pub use packing::{balance_workers, pack_windows, plan_mixture, Modality, PackedWindow, SequenceItem, WorkerAssignment};
pub use position::{build_rope_index_table, interpolate_pos_embed, rope_angles_2d, PosEmbedGrid, RopeConfig, RopeIndexTable};
