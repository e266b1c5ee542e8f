//! Curriculum learning driven by a sequential spatial transformer.
//!
//! A policy network picks one of eight small affine actions at each step and
//! progressively rewrites a cluttered image into an easier one. The recorded
//! action sequences give a spectrum of datasets from fully transformed (easy)
//! to original (hard), which the curriculum strategies feed to a classifier.
//!
//! Numerical code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the element type used for training.

mod blob;
pub mod curriculum;
pub mod data;
pub mod error;
pub mod harness;
pub mod image;
pub mod nnkit;
pub mod scalar;
pub mod sstn;
pub mod transform;

pub use error::{Error, Result};
pub use image::Image;
pub use scalar::Scalar;

pub type Image32 = image::Image<f32>;
pub type Image64 = image::Image<f64>;
pub type Tensor32 = nnkit::Tensor<f32>;
pub type Tensor64 = nnkit::Tensor<f64>;
pub type Affine32 = transform::AffineTransform<f32>;
pub type Affine64 = transform::AffineTransform<f64>;
pub type PolicyNet32 = sstn::PolicyNet<f32>;
pub type PolicyNet64 = sstn::PolicyNet<f64>;
pub type Classifier32 = harness::ClassifierNet<f32>;
pub type Classifier64 = harness::ClassifierNet<f64>;
