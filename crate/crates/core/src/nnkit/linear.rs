use rand::Rng;

use crate::error::{Error, Result};
use crate::nnkit::init::kaiming_uniform;
use crate::nnkit::tensor::{Param, Tensor};
use crate::scalar::{gemm, Scalar};

fn check<T: Scalar>(x: &Tensor<T>, weight: &Tensor<T>) -> Result<(usize, usize, usize)> {
    x.expect_rank(2, "fc input")?;
    weight.expect_rank(2, "fc weight")?;
    let (n, i) = (x.dim(0), x.dim(1));
    let (o, wi) = (weight.dim(0), weight.dim(1));
    if i != wi {
        return Err(Error::Dimension(format!(
            "fc weight {:?} incompatible with input {:?}",
            weight.shape(),
            x.shape()
        )));
    }
    Ok((n, i, o))
}

/// `y = x · Wᵀ + b` for `x: N×in`, `W: out×in`.
pub fn fc_forward<T: Scalar>(x: &Tensor<T>, weight: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, i, o) = check(x, weight)?;
    bias.expect_shape(&[o])?;
    let mut y = Tensor::zeros(&[n, o]);
    for row in y.data_mut().chunks_mut(o) {
        row.copy_from_slice(bias.data());
    }
    gemm(false, true, n, o, i, T::one(), x.data(), weight.data(), T::one(), y.data_mut());
    Ok(y)
}

#[derive(Clone, Debug)]
pub struct FcGrads<T> {
    pub input: Tensor<T>,
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

pub fn fc_backward<T: Scalar>(x: &Tensor<T>, weight: &Tensor<T>, grad_out: &Tensor<T>) -> Result<FcGrads<T>> {
    let (n, i, o) = check(x, weight)?;
    grad_out.expect_shape(&[n, o])?;
    let mut gw = Tensor::zeros(&[o, i]);
    gemm(true, false, o, i, n, T::one(), grad_out.data(), x.data(), T::zero(), gw.data_mut());
    let mut gb = Tensor::zeros(&[o]);
    for row in grad_out.data().chunks(o) {
        for (b, &g) in gb.data_mut().iter_mut().zip(row) {
            *b += g;
        }
    }
    let mut gx = Tensor::zeros(&[n, i]);
    gemm(false, false, n, i, o, T::one(), grad_out.data(), weight.data(), T::zero(), gx.data_mut());
    Ok(FcGrads { input: gx, weight: gw, bias: gb })
}

/// Fully-connected layer.
#[derive(Clone, Debug)]
pub struct Linear<T> {
    pub weight: Param<T>,
    pub bias: Param<T>,
}

impl<T: Scalar> Linear<T> {
    pub fn new(inputs: usize, outputs: usize, rng: &mut impl Rng) -> Self {
        Self {
            weight: Param::new(kaiming_uniform(&[outputs, inputs], inputs, rng)),
            bias: Param::new(Tensor::zeros(&[outputs])),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.value.dim(1)
    }

    pub fn outputs(&self) -> usize {
        self.weight.value.dim(0)
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        fc_forward(x, &self.weight.value, &self.bias.value)
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward(&mut self, x: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let (n, i, o) = check(x, &self.weight.value)?;
        grad_out.expect_shape(&[n, o])?;
        gemm(true, false, o, i, n, T::one(), grad_out.data(), x.data(), T::one(), self.weight.grad.data_mut());
        for row in grad_out.data().chunks(o) {
            for (b, &g) in self.bias.grad.data_mut().iter_mut().zip(row) {
                *b += g;
            }
        }
        let mut gx = Tensor::zeros(&[n, i]);
        gemm(false, false, n, i, o, T::one(), grad_out.data(), self.weight.value.data(), T::zero(), gx.data_mut());
        Ok(gx)
    }
}
