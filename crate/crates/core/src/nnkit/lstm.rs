//! LSTM cell with gates stacked as `[input, forget, candidate, output]`.
//!
//! ```text
//! i = σ(W_i x + U_i h + b_i)     f = σ(W_f x + U_f h + b_f)
//! g = tanh(W_g x + U_g h + b_g)  o = σ(W_o x + U_o h + b_o)
//! c' = f ⊙ c + i ⊙ g             h' = o ⊙ tanh(c')
//! ```

use rand::Rng;

use crate::error::{Error, Result};
use crate::nnkit::activation::sigmoid;
use crate::nnkit::init::uniform;
use crate::nnkit::tensor::{Param, Tensor};
use crate::scalar::{gemm, Scalar};

#[derive(Clone, Debug)]
pub struct LstmCell<T> {
    /// `4H × I`
    pub w_input: Param<T>,
    /// `4H × H`
    pub w_hidden: Param<T>,
    /// `4H`
    pub bias: Param<T>,
}

/// Everything the backward pass of one step needs.
#[derive(Clone, Debug)]
pub struct LstmStepCache<T> {
    x: Tensor<T>,
    h_prev: Tensor<T>,
    c_prev: Tensor<T>,
    /// Post-activation gates, `N × 4H`.
    gates: Tensor<T>,
    tanh_c: Tensor<T>,
}

#[derive(Clone, Debug)]
pub struct LstmBackward<T> {
    pub input: Tensor<T>,
    pub h_prev: Tensor<T>,
    pub c_prev: Tensor<T>,
}

impl<T: Scalar> LstmCell<T> {
    /// Uniform `±1/sqrt(fan_in)` weights with `fan_in = inputs + hidden`, zero
    /// biases except the forget gate, which starts at 1.
    pub fn new(inputs: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / ((inputs + hidden) as f64).sqrt();
        let mut bias = Tensor::zeros(&[4 * hidden]);
        bias.data_mut()[hidden..2 * hidden].fill(T::one());
        Self {
            w_input: Param::new(uniform(&[4 * hidden, inputs], bound, rng)),
            w_hidden: Param::new(uniform(&[4 * hidden, hidden], bound, rng)),
            bias: Param::new(bias),
        }
    }

    pub fn zeros(inputs: usize, hidden: usize) -> Self {
        Self {
            w_input: Param::new(Tensor::zeros(&[4 * hidden, inputs])),
            w_hidden: Param::new(Tensor::zeros(&[4 * hidden, hidden])),
            bias: Param::new(Tensor::zeros(&[4 * hidden])),
        }
    }

    pub fn inputs(&self) -> usize {
        self.w_input.value.dim(1)
    }

    pub fn hidden(&self) -> usize {
        self.w_hidden.value.dim(1)
    }

    /// Zero `(h, c)` for a batch of `n` sequences.
    pub fn initial_state(&self, n: usize) -> (Tensor<T>, Tensor<T>) {
        (Tensor::zeros(&[n, self.hidden()]), Tensor::zeros(&[n, self.hidden()]))
    }

    fn check(&self, x: &Tensor<T>, h: &Tensor<T>, c: &Tensor<T>) -> Result<usize> {
        x.expect_rank(2, "lstm input")?;
        let n = x.dim(0);
        if x.dim(1) != self.inputs() {
            return Err(Error::Dimension(format!(
                "lstm expects {} inputs, got {}",
                self.inputs(),
                x.dim(1)
            )));
        }
        h.expect_shape(&[n, self.hidden()])?;
        c.expect_shape(&[n, self.hidden()])?;
        Ok(n)
    }

    /// One step; returns `(h', c')` and the cache for backpropagation.
    pub fn step(
        &self,
        x: &Tensor<T>,
        h_prev: &Tensor<T>,
        c_prev: &Tensor<T>,
    ) -> Result<(Tensor<T>, Tensor<T>, LstmStepCache<T>)> {
        let n = self.check(x, h_prev, c_prev)?;
        let hd = self.hidden();
        let g4 = 4 * hd;
        let mut gates = Tensor::zeros(&[n, g4]);
        for row in gates.data_mut().chunks_mut(g4) {
            row.copy_from_slice(self.bias.value.data());
        }
        gemm(false, true, n, g4, self.inputs(), T::one(), x.data(), self.w_input.value.data(), T::one(), gates.data_mut());
        gemm(false, true, n, g4, hd, T::one(), h_prev.data(), self.w_hidden.value.data(), T::one(), gates.data_mut());
        let mut h = Tensor::zeros(&[n, hd]);
        let mut c = Tensor::zeros(&[n, hd]);
        let mut tanh_c = Tensor::zeros(&[n, hd]);
        for b in 0..n {
            let row = gates.outer_mut(b);
            for j in 0..hd {
                row[j] = sigmoid(row[j]);
                row[hd + j] = sigmoid(row[hd + j]);
                row[2 * hd + j] = row[2 * hd + j].tanh();
                row[3 * hd + j] = sigmoid(row[3 * hd + j]);
            }
            let cp = c_prev.outer(b);
            let (cr, tr, hr) = (c.outer_mut(b), tanh_c.outer_mut(b), h.outer_mut(b));
            for j in 0..hd {
                cr[j] = row[hd + j] * cp[j] + row[j] * row[2 * hd + j];
                tr[j] = cr[j].tanh();
                hr[j] = row[3 * hd + j] * tr[j];
            }
        }
        let cache = LstmStepCache {
            x: x.clone(),
            h_prev: h_prev.clone(),
            c_prev: c_prev.clone(),
            gates,
            tanh_c,
        };
        Ok((h, c, cache))
    }

    /// Backpropagates `dL/dh'` and `dL/dc'` through one step, accumulating
    /// parameter gradients.
    pub fn backward_step(
        &mut self,
        cache: &LstmStepCache<T>,
        grad_h: &Tensor<T>,
        grad_c: &Tensor<T>,
    ) -> Result<LstmBackward<T>> {
        let n = cache.x.dim(0);
        let hd = self.hidden();
        let g4 = 4 * hd;
        grad_h.expect_shape(&[n, hd])?;
        grad_c.expect_shape(&[n, hd])?;
        let one = T::one();
        let mut dpre = Tensor::zeros(&[n, g4]);
        let mut dc_prev = Tensor::zeros(&[n, hd]);
        for b in 0..n {
            let gates = cache.gates.outer(b);
            let tc = cache.tanh_c.outer(b);
            let cp = cache.c_prev.outer(b);
            let (dh, dc) = (grad_h.outer(b), grad_c.outer(b));
            let dp = dpre.outer_mut(b);
            let dcp = dc_prev.outer_mut(b);
            for j in 0..hd {
                let (i, f, g, o) = (gates[j], gates[hd + j], gates[2 * hd + j], gates[3 * hd + j]);
                let d_o = dh[j] * tc[j];
                let dct = dc[j] + dh[j] * o * (one - tc[j] * tc[j]);
                let d_f = dct * cp[j];
                let d_i = dct * g;
                let d_g = dct * i;
                dcp[j] = dct * f;
                dp[j] = d_i * i * (one - i);
                dp[hd + j] = d_f * f * (one - f);
                dp[2 * hd + j] = d_g * (one - g * g);
                dp[3 * hd + j] = d_o * o * (one - o);
            }
        }
        let (ni, nh) = (self.inputs(), hd);
        gemm(true, false, g4, ni, n, one, dpre.data(), cache.x.data(), one, self.w_input.grad.data_mut());
        gemm(true, false, g4, nh, n, one, dpre.data(), cache.h_prev.data(), one, self.w_hidden.grad.data_mut());
        for row in dpre.data().chunks(g4) {
            for (b, &g) in self.bias.grad.data_mut().iter_mut().zip(row) {
                *b += g;
            }
        }
        let mut dx = Tensor::zeros(&[n, ni]);
        gemm(false, false, n, ni, g4, one, dpre.data(), self.w_input.value.data(), T::zero(), dx.data_mut());
        let mut dh_prev = Tensor::zeros(&[n, nh]);
        gemm(false, false, n, nh, g4, one, dpre.data(), self.w_hidden.value.data(), T::zero(), dh_prev.data_mut());
        Ok(LstmBackward { input: dx, h_prev: dh_prev, c_prev: dc_prev })
    }
}

/// Cache-free single step, `(h', c')`.
pub fn lstm_cell_step<T: Scalar>(
    x: &Tensor<T>,
    h_prev: &Tensor<T>,
    c_prev: &Tensor<T>,
    cell: &LstmCell<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let (h, c, _) = cell.step(x, h_prev, c_prev)?;
    Ok((h, c))
}
