//! Editing of fitted masks and of the segment abstraction.

pub mod masks;
pub mod noise;
pub mod segments;

pub use masks::{apply_brush, global_adjust, global_adjust_named, interpolate_masks, BlendMask, BrushMode, BrushStroke};
pub use noise::{estimate_noise_sigma, plane_noise_sigma};
pub use segments::{color_interpolate, content_interpolate, copy_region, histogram_match_segments};
