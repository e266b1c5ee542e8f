//! Discrete affine actions, their matrix algebra and bilinear warping.
//!
//! Transforms act on normalized coordinates in `[-1, 1]²` with the origin at
//! the image centre and pixel centres at `(2i + 1) / size - 1`. A transform
//! maps an OUTPUT coordinate to the SOURCE coordinate it samples from, so the
//! matrices here describe the sampling grid rather than the content motion.

mod action;
mod affine;
mod warp;

pub use action::{Action, ActionSequence, DEFAULT_MAX_STEPS, NUM_ACTIONS};
pub use affine::AffineTransform;
pub use warp::{apply_sequence, sample_bilinear, warp, ApplyMode};
