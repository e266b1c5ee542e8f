use crate::error::{Error, Result};
use crate::nnkit::tensor::{Param, Tensor};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, ..Self::default() }
    }
}

/// First/second moment estimates for an ordered list of parameters.
#[derive(Clone, Debug)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    first: Vec<Tensor<T>>,
    second: Vec<Tensor<T>>,
    step: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(config: AdamConfig) -> Self {
        Self { config, first: Vec::new(), second: Vec::new(), step: 0 }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One bias-corrected update using each parameter's accumulated gradient.
    ///
    /// Nothing is modified when any gradient is non-finite.
    pub fn step(&mut self, params: &mut [&mut Param<T>]) -> Result<()> {
        if self.first.is_empty() && self.step == 0 {
            self.first = params.iter().map(|p| Tensor::zeros(p.shape())).collect();
            self.second = self.first.clone();
        }
        if self.first.len() != params.len() {
            return Err(Error::Dimension(format!(
                "optimizer tracks {} tensors, got {}",
                self.first.len(),
                params.len()
            )));
        }
        for (i, p) in params.iter().enumerate() {
            self.first[i].expect_shape(p.shape())?;
            p.grad.expect_shape(p.shape())?;
            if !p.grad.all_finite() {
                return Err(Error::Training(format!("non-finite gradient in parameter #{i}")));
            }
        }
        self.step += 1;
        let c = &self.config;
        let t = self.step as i32;
        let (b1, b2) = (T::lit(c.beta1), T::lit(c.beta2));
        let bc1 = T::lit(1.0 - c.beta1.powi(t));
        let bc2 = T::lit(1.0 - c.beta2.powi(t));
        let (lr, eps) = (T::lit(c.lr), T::lit(c.eps));
        let one = T::one();
        for ((p, m), v) in params.iter_mut().zip(&mut self.first).zip(&mut self.second) {
            let grad = p.grad.data();
            let w = p.value.data_mut();
            for (((w, &g), m), v) in w.iter_mut().zip(grad).zip(m.data_mut()).zip(v.data_mut()) {
                *m = b1 * *m + (one - b1) * g;
                *v = b2 * *v + (one - b2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *w -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Free-function form: update `params` from their gradients.
pub fn adam_step<T: Scalar>(params: &mut [&mut Param<T>], state: &mut AdamState<T>) -> Result<()> {
    state.step(params)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_param(v: f64) -> Param<f64> {
        Param::new(Tensor::new(&[1], vec![v]).unwrap())
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = scalar_param(0.3);
        let mut st = AdamState::new(AdamConfig::default());
        for _ in 0..5 {
            st.step(&mut [&mut p]).unwrap();
        }
        assert_eq!(p.value.data()[0], 0.3);
        assert_eq!(st.steps(), 5);
    }

    #[test]
    fn first_step_moves_by_lr_against_gradient() {
        for g in [3.0, -0.02] {
            let mut p = scalar_param(1.0);
            p.grad.data_mut()[0] = g;
            let mut st = AdamState::new(AdamConfig::default());
            st.step(&mut [&mut p]).unwrap();
            let delta = p.value.data()[0] - 1.0;
            let want = -1e-4 * f64::signum(g);
            assert!((delta - want).abs() < 1e-9, "g={g} delta={delta}");
        }
    }

    #[test]
    fn non_finite_gradient_is_rejected_untouched() {
        let mut p = scalar_param(1.0);
        p.grad.data_mut()[0] = f64::NAN;
        let mut st = AdamState::new(AdamConfig::default());
        assert!(matches!(st.step(&mut [&mut p]), Err(Error::Training(_))));
        assert_eq!(p.value.data()[0], 1.0);
    }
}
