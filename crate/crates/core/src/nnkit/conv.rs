use rand::Rng;

use crate::error::{Error, Result};
use crate::nnkit::init::kaiming_uniform;
use crate::nnkit::tensor::{Param, Tensor};
use crate::scalar::{gemm, Scalar};

/// Spatial geometry of a square-kernel convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub stride: usize,
    pub padding: usize,
}

impl ConvGeometry {
    pub fn new(stride: usize, padding: usize) -> Self {
        Self { stride, padding }
    }

    pub fn output_size(&self, input: usize, kernel: usize) -> Result<usize> {
        if self.stride == 0 {
            return Err(Error::Dimension("convolution stride must be >= 1".into()));
        }
        let padded = input + 2 * self.padding;
        if padded < kernel {
            return Err(Error::Dimension(format!(
                "kernel {kernel} larger than padded input {padded}"
            )));
        }
        Ok((padded - kernel) / self.stride + 1)
    }
}

struct Dims {
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    o: usize,
    k: usize,
    oh: usize,
    ow: usize,
}

fn dims<T: Scalar>(input: &Tensor<T>, weight: &Tensor<T>, g: ConvGeometry) -> Result<Dims> {
    input.expect_rank(4, "conv input")?;
    weight.expect_rank(4, "conv weight")?;
    let (n, c, h, w) = (input.dim(0), input.dim(1), input.dim(2), input.dim(3));
    let (o, wc, k, k2) = (weight.dim(0), weight.dim(1), weight.dim(2), weight.dim(3));
    if wc != c || k != k2 {
        return Err(Error::Dimension(format!(
            "weight {:?} incompatible with input {:?}",
            weight.shape(),
            input.shape()
        )));
    }
    let oh = g.output_size(h, k)?;
    let ow = g.output_size(w, k)?;
    Ok(Dims { n, c, h, w, o, k, oh, ow })
}

fn im2col<T: Scalar>(x: &[T], d: &Dims, g: ConvGeometry, cols: &mut [T]) {
    let plane = d.oh * d.ow;
    let pad = g.padding as isize;
    for ci in 0..d.c {
        let xc = &x[ci * d.h * d.w..(ci + 1) * d.h * d.w];
        for ky in 0..d.k {
            for kx in 0..d.k {
                let row = (ci * d.k + ky) * d.k + kx;
                let dst = &mut cols[row * plane..(row + 1) * plane];
                for oy in 0..d.oh {
                    let iy = (oy * g.stride + ky) as isize - pad;
                    let line = &mut dst[oy * d.ow..(oy + 1) * d.ow];
                    if iy < 0 || iy >= d.h as isize {
                        line.fill(T::zero());
                        continue;
                    }
                    let src = &xc[iy as usize * d.w..(iy as usize + 1) * d.w];
                    for (ox, v) in line.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kx) as isize - pad;
                        *v = if ix < 0 || ix >= d.w as isize { T::zero() } else { src[ix as usize] };
                    }
                }
            }
        }
    }
}

fn col2im<T: Scalar>(cols: &[T], d: &Dims, g: ConvGeometry, dx: &mut [T]) {
    let plane = d.oh * d.ow;
    let pad = g.padding as isize;
    for ci in 0..d.c {
        let xc = &mut dx[ci * d.h * d.w..(ci + 1) * d.h * d.w];
        for ky in 0..d.k {
            for kx in 0..d.k {
                let row = (ci * d.k + ky) * d.k + kx;
                let src = &cols[row * plane..(row + 1) * plane];
                for oy in 0..d.oh {
                    let iy = (oy * g.stride + ky) as isize - pad;
                    if iy < 0 || iy >= d.h as isize {
                        continue;
                    }
                    for ox in 0..d.ow {
                        let ix = (ox * g.stride + kx) as isize - pad;
                        if ix >= 0 && ix < d.w as isize {
                            xc[iy as usize * d.w + ix as usize] += src[oy * d.ow + ox];
                        }
                    }
                }
            }
        }
    }
}

/// Cross-correlation of an `N×C×H×W` batch with `O×C×K×K` kernels.
pub fn conv2d_forward<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
    g: ConvGeometry,
) -> Result<Tensor<T>> {
    let d = dims(input, weight, g)?;
    bias.expect_shape(&[d.o])?;
    let ckk = d.c * d.k * d.k;
    let plane = d.oh * d.ow;
    let mut out = Tensor::zeros(&[d.n, d.o, d.oh, d.ow]);
    let mut cols = vec![T::zero(); ckk * plane];
    for ni in 0..d.n {
        im2col(input.outer(ni), &d, g, &mut cols);
        let y = out.outer_mut(ni);
        for (oc, row) in y.chunks_mut(plane).enumerate() {
            row.fill(bias.data()[oc]);
        }
        gemm(false, false, d.o, plane, ckk, T::one(), weight.data(), &cols, T::one(), y);
    }
    Ok(out)
}

/// Gradients of a convolution.
#[derive(Clone, Debug)]
pub struct ConvGrads<T> {
    pub input: Option<Tensor<T>>,
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

pub fn conv2d_backward<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    grad_out: &Tensor<T>,
    g: ConvGeometry,
    want_input_grad: bool,
) -> Result<ConvGrads<T>> {
    let d = dims(input, weight, g)?;
    grad_out.expect_shape(&[d.n, d.o, d.oh, d.ow])?;
    let ckk = d.c * d.k * d.k;
    let plane = d.oh * d.ow;
    let mut gw = Tensor::zeros(weight.shape());
    let mut gb = Tensor::zeros(&[d.o]);
    let mut gx = want_input_grad.then(|| Tensor::zeros(input.shape()));
    let mut cols = vec![T::zero(); ckk * plane];
    let mut dcols = if want_input_grad { vec![T::zero(); ckk * plane] } else { Vec::new() };
    for ni in 0..d.n {
        let dy = grad_out.outer(ni);
        for (oc, row) in dy.chunks(plane).enumerate() {
            gb.data_mut()[oc] += row.iter().copied().sum::<T>();
        }
        im2col(input.outer(ni), &d, g, &mut cols);
        gemm(false, true, d.o, ckk, plane, T::one(), dy, &cols, T::one(), gw.data_mut());
        if let Some(gx) = gx.as_mut() {
            gemm(true, false, ckk, plane, d.o, T::one(), weight.data(), dy, T::zero(), &mut dcols);
            col2im(&dcols, &d, g, gx.outer_mut(ni));
        }
    }
    Ok(ConvGrads { input: gx, weight: gw, bias: gb })
}

/// Convolution layer with trainable kernels and bias.
#[derive(Clone, Debug)]
pub struct Conv2d<T> {
    pub weight: Param<T>,
    pub bias: Param<T>,
    pub geometry: ConvGeometry,
}

impl<T: Scalar> Conv2d<T> {
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        geometry: ConvGeometry,
        rng: &mut impl Rng,
    ) -> Self {
        let fan_in = in_channels * kernel * kernel;
        let weight = kaiming_uniform(&[out_channels, in_channels, kernel, kernel], fan_in, rng);
        Self {
            weight: Param::new(weight),
            bias: Param::new(Tensor::zeros(&[out_channels])),
            geometry,
        }
    }

    pub fn kernel(&self) -> usize {
        self.weight.value.dim(2)
    }

    pub fn out_channels(&self) -> usize {
        self.weight.value.dim(0)
    }

    pub fn output_size(&self, input: usize) -> Result<usize> {
        self.geometry.output_size(input, self.kernel())
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        conv2d_forward(x, &self.weight.value, &self.bias.value, self.geometry)
    }

    /// Accumulates parameter gradients; returns the input gradient when asked.
    pub fn backward(
        &mut self,
        x: &Tensor<T>,
        grad_out: &Tensor<T>,
        want_input_grad: bool,
    ) -> Result<Option<Tensor<T>>> {
        let g = conv2d_backward(x, &self.weight.value, grad_out, self.geometry, want_input_grad)?;
        self.weight.grad.add_assign(&g.weight)?;
        self.bias.grad.add_assign(&g.bias)?;
        Ok(g.input)
    }
}
