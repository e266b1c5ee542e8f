//! Single-channel images stored row-major.

use crate::error::{Error, Result};
use crate::nnkit::Tensor;
use crate::scalar::Scalar;

/// A grayscale image with values nominally in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Image<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

impl<T: Scalar> Image<T> {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![T::zero(); width * height] }
    }

    /// Builds an image from row-major pixels. Returns `None` on a size mismatch.
    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Option<Self> {
        (data.len() == width * height).then_some(Self { width, height, data })
    }

    pub fn square(size: usize, data: Vec<T>) -> Option<Self> {
        Self::from_vec(size, size, data)
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn pixels(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn pixels_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_pixels(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> T {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: T) {
        self.data[y * self.width + x] = v;
    }

    pub fn cast<U: Scalar>(&self) -> Image<U> {
        Image {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| U::lit(v.to_f64_lossy())).collect(),
        }
    }

    pub fn mean(&self) -> T {
        if self.data.is_empty() {
            return T::zero();
        }
        self.data.iter().copied().sum::<T>() / T::lit(self.data.len() as f64)
    }

    pub fn in_unit_range(&self) -> bool {
        self.data.iter().all(|&v| v >= T::zero() && v <= T::one())
    }
}

/// Stacks square canvases of side `size` into an `N×1×size×size` tensor.
pub fn images_to_tensor<T: Scalar>(images: &[&Image<f32>], size: usize) -> Result<Tensor<T>> {
    let mut data = Vec::with_capacity(images.len() * size * size);
    for im in images {
        if im.width() != size || im.height() != size {
            return Err(Error::Dimension(format!(
                "expected {size}×{size} canvas, got {}×{}",
                im.width(),
                im.height()
            )));
        }
        data.extend(im.pixels().iter().map(|&v| T::lit(v as f64)));
    }
    Tensor::new(&[images.len(), 1, size, size], data)
}

