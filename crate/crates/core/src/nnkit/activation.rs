use crate::error::Result;
use crate::nnkit::tensor::Tensor;
use crate::scalar::Scalar;

pub fn relu<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| v.max(T::zero()))
}

/// Gradient of ReLU given its OUTPUT (zero where the unit was inactive).
pub fn relu_backward<T: Scalar>(output: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    grad_out.expect_shape(output.shape())?;
    let data = output
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&y, &g)| if y > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::new(output.shape(), data)
}

/// 2×2 max-pooling with stride 2 over `N×C×H×W`; odd trailing rows/columns
/// are dropped. Returns the pooled tensor and, per output cell, the flat index
/// of the winning input element (first maximum in row-major order).
pub fn maxpool2x2<T: Scalar>(x: &Tensor<T>) -> Result<(Tensor<T>, Vec<u32>)> {
    x.expect_rank(4, "maxpool input")?;
    let (n, c, h, w) = (x.dim(0), x.dim(1), x.dim(2), x.dim(3));
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Tensor::zeros(&[n, c, oh, ow]);
    let mut arg = vec![0u32; n * c * oh * ow];
    let src = x.data();
    let dst = out.data_mut();
    for p in 0..n * c {
        let base = p * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best_i = base + 2 * oy * w + 2 * ox;
                let mut best = src[best_i];
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let i = base + (2 * oy + dy) * w + 2 * ox + dx;
                    if src[i] > best {
                        best = src[i];
                        best_i = i;
                    }
                }
                let o = (p * oh + oy) * ow + ox;
                dst[o] = best;
                arg[o] = best_i as u32;
            }
        }
    }
    Ok((out, arg))
}

pub fn maxpool2x2_backward<T: Scalar>(
    argmax: &[u32],
    grad_out: &Tensor<T>,
    input_shape: &[usize],
) -> Result<Tensor<T>> {
    let mut gx = Tensor::zeros(input_shape);
    if argmax.len() != grad_out.len() {
        return Err(crate::Error::Dimension("argmax/gradient length mismatch".into()));
    }
    let g = gx.data_mut();
    for (&i, &v) in argmax.iter().zip(grad_out.data()) {
        g[i as usize] += v;
    }
    Ok(gx)
}

/// Numerically stable softmax of one row.
pub fn softmax_row<T: Scalar>(z: &[T]) -> Vec<T> {
    let m = z.iter().copied().fold(T::neg_infinity(), T::max);
    let e: Vec<T> = z.iter().map(|&v| (v - m).exp()).collect();
    let s: T = e.iter().copied().sum();
    e.into_iter().map(|v| v / s).collect()
}

pub fn log_softmax_row<T: Scalar>(z: &[T]) -> Vec<T> {
    let m = z.iter().copied().fold(T::neg_infinity(), T::max);
    let lse = m + z.iter().map(|&v| (v - m).exp()).sum::<T>().ln();
    z.iter().map(|&v| v - lse).collect()
}

/// Row-wise softmax of an `N×C` tensor.
pub fn softmax<T: Scalar>(logits: &Tensor<T>) -> Result<Tensor<T>> {
    logits.expect_rank(2, "softmax input")?;
    let c = logits.dim(1);
    let data = logits.data().chunks(c.max(1)).flat_map(softmax_row).collect();
    Tensor::new(logits.shape(), data)
}

#[inline]
pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}
