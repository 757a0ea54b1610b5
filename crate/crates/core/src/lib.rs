//! Texture decomposition for stylized images.
//!
//! An input image is abstracted into uniform-color SLIC superpixels, and the
//! remaining detail is expressed as eight per-pixel parameter masks of a
//! differentiable filter pipeline (smoothing, contours, bump shading, local
//! contrast). The masks are fitted by gradient descent and can then be edited
//! independently of color and shape.

pub mod edit;
pub mod error;
pub mod gradcheck;
pub mod ops;
pub mod optim;
pub mod par;
pub mod pipeline;
pub mod project;
pub mod scalar;
pub mod slic;
pub mod synth;
pub mod tensor;

pub use error::{Error, Result};
pub use scalar::Real;
pub use tensor::{GradientPair, ImageTensor};
