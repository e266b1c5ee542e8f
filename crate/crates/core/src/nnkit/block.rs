//! Convolution → ReLU → 2×2 max-pool, the unit both networks are built from.

use rand::Rng;

use crate::error::Result;
use crate::nnkit::activation::{maxpool2x2, maxpool2x2_backward, relu, relu_backward};
use crate::nnkit::conv::{Conv2d, ConvGeometry};
use crate::nnkit::tensor::Tensor;
use crate::scalar::Scalar;

#[derive(Clone, Debug)]
pub struct ConvBlock<T> {
    pub conv: Conv2d<T>,
}

#[derive(Clone, Debug)]
pub struct ConvBlockCache<T> {
    input: Tensor<T>,
    activated: Tensor<T>,
    argmax: Vec<u32>,
}

impl<T: Scalar> ConvBlock<T> {
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        geometry: ConvGeometry,
        rng: &mut impl Rng,
    ) -> Self {
        Self { conv: Conv2d::new(in_channels, out_channels, kernel, geometry, rng) }
    }

    /// Spatial output side for a square input side.
    pub fn output_size(&self, input: usize) -> Result<usize> {
        Ok(self.conv.output_size(input)? / 2)
    }

    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let a = relu(&self.conv.forward(x)?);
        Ok(maxpool2x2(&a)?.0)
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<(Tensor<T>, ConvBlockCache<T>)> {
        let activated = relu(&self.conv.forward(x)?);
        let (out, argmax) = maxpool2x2(&activated)?;
        Ok((out, ConvBlockCache { input: x.clone(), activated, argmax }))
    }

    pub fn backward(
        &mut self,
        cache: &ConvBlockCache<T>,
        grad_out: &Tensor<T>,
        want_input_grad: bool,
    ) -> Result<Option<Tensor<T>>> {
        let g = maxpool2x2_backward(&cache.argmax, grad_out, cache.activated.shape())?;
        let g = relu_backward(&cache.activated, &g)?;
        self.conv.backward(&cache.input, &g, want_input_grad)
    }
}
