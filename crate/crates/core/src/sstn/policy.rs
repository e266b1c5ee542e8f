use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::nnkit::{ConvBlock, ConvBlockCache, ConvGeometry, Linear, LstmCell, LstmStepCache, Param, Parameterized, Tensor};
use crate::scalar::Scalar;
use crate::transform::{Action, NUM_ACTIONS};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyConfig {
    pub canvas_size: usize,
    /// Output channels of each conv block.
    pub channels: Vec<usize>,
    pub kernel: usize,
    /// Stride of the first convolution; later ones use stride 1.
    pub first_stride: usize,
    pub hidden: usize,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self { canvas_size: 80, channels: vec![32, 64, 64], kernel: 3, first_stride: 1, hidden: 256 }
    }
}

impl PolicyConfig {
    /// Reduced-cost variant: first convolution strided by 2.
    pub fn desk() -> Self {
        Self { first_stride: 2, ..Self::default() }
    }
}

/// Recurrent state carried across the steps of one rollout.
#[derive(Clone, Debug)]
pub struct PolicyState<T> {
    pub h: Tensor<T>,
    pub c: Tensor<T>,
}

/// What one training step records for backpropagation through time.
#[derive(Clone, Debug)]
pub struct PolicyStepCache<T> {
    blocks: Vec<ConvBlockCache<T>>,
    feature_shape: Vec<usize>,
    lstm: LstmStepCache<T>,
    h: Tensor<T>,
}

/// Conv stack → LSTM → linear head over the eight actions.
#[derive(Clone, Debug)]
pub struct PolicyNet<T> {
    config: PolicyConfig,
    blocks: Vec<ConvBlock<T>>,
    pub lstm: LstmCell<T>,
    pub head: Linear<T>,
}

impl<T: Scalar> PolicyNet<T> {
    pub fn new(config: PolicyConfig, rng: &mut impl Rng) -> Result<Self> {
        if config.channels.is_empty() || config.kernel == 0 || config.first_stride == 0 || config.hidden == 0 {
            return Err(Error::Config(format!("invalid policy config {config:?}")));
        }
        let mut blocks = Vec::with_capacity(config.channels.len());
        let mut in_ch = 1;
        let mut side = config.canvas_size;
        for (i, &out_ch) in config.channels.iter().enumerate() {
            let stride = if i == 0 { config.first_stride } else { 1 };
            let block = ConvBlock::new(in_ch, out_ch, config.kernel, ConvGeometry::new(stride, config.kernel / 2), rng);
            side = block.output_size(side)?;
            if side == 0 {
                return Err(Error::Config(format!("canvas {} too small for {} blocks", config.canvas_size, i + 1)));
            }
            blocks.push(block);
            in_ch = out_ch;
        }
        let features = in_ch * side * side;
        let lstm = LstmCell::new(features, config.hidden, rng);
        let head = Linear::new(config.hidden, NUM_ACTIONS, rng);
        Ok(Self { config, blocks, lstm, head })
    }

    pub fn config(&self) -> &PolicyConfig {
        &self.config
    }

    pub fn feature_len(&self) -> usize {
        self.lstm.inputs()
    }

    /// Zero head: every step emits the uniform distribution.
    pub fn zero_head(&mut self) {
        self.head.weight.value.fill(T::zero());
        self.head.bias.value.fill(T::zero());
    }

    /// Zero head with a large bias on `action`, so it is always chosen.
    pub fn force_action(&mut self, action: Action) {
        self.zero_head();
        self.head.bias.value.data_mut()[action.index()] = T::lit(50.0);
    }

    pub fn initial_state(&self, n: usize) -> PolicyState<T> {
        let (h, c) = self.lstm.initial_state(n);
        PolicyState { h, c }
    }

    /// Packs canvases into an `N×1×S×S` tensor.
    pub fn batch_tensor(&self, images: &[&Image<f32>]) -> Result<Tensor<T>> {
        crate::image::images_to_tensor(images, self.config.canvas_size)
    }

    /// Inference step: logits `N×8` and the next state.
    pub fn step(&self, x: &Tensor<T>, state: &PolicyState<T>) -> Result<(Tensor<T>, PolicyState<T>)> {
        let mut f = x.clone();
        for b in &self.blocks {
            f = b.infer(&f)?;
        }
        let n = f.dim(0);
        let f = f.reshape(&[n, self.feature_len()])?;
        let (h, c, _) = self.lstm.step(&f, &state.h, &state.c)?;
        let logits = self.head.forward(&h)?;
        Ok((logits, PolicyState { h, c }))
    }

    pub fn step_train(
        &self,
        x: &Tensor<T>,
        state: &PolicyState<T>,
    ) -> Result<(Tensor<T>, PolicyState<T>, PolicyStepCache<T>)> {
        let mut f = x.clone();
        let mut caches = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            let (out, cache) = b.forward(&f)?;
            caches.push(cache);
            f = out;
        }
        let feature_shape = f.shape().to_vec();
        let n = f.dim(0);
        let f = f.reshape(&[n, self.feature_len()])?;
        let (h, c, lstm_cache) = self.lstm.step(&f, &state.h, &state.c)?;
        let logits = self.head.forward(&h)?;
        let cache = PolicyStepCache { blocks: caches, feature_shape, lstm: lstm_cache, h: h.clone() };
        Ok((logits, PolicyState { h, c }, cache))
    }

    /// Backpropagation through time over one batch of rollouts, given the loss
    /// gradient w.r.t. the logits of every step. Accumulates into the
    /// parameter gradients.
    pub fn backward(&mut self, caches: &[PolicyStepCache<T>], grad_logits: &[Tensor<T>]) -> Result<()> {
        if caches.len() != grad_logits.len() {
            return Err(Error::Dimension(format!(
                "{} step caches but {} logit gradients",
                caches.len(),
                grad_logits.len()
            )));
        }
        let Some(first) = caches.first() else { return Ok(()) };
        let n = first.h.dim(0);
        let hd = self.lstm.hidden();
        let mut dh_next = Tensor::zeros(&[n, hd]);
        let mut dc_next = Tensor::zeros(&[n, hd]);
        for (cache, gl) in caches.iter().zip(grad_logits).rev() {
            let mut dh = self.head.backward(&cache.h, gl)?;
            dh.add_assign(&dh_next)?;
            let back = self.lstm.backward_step(&cache.lstm, &dh, &dc_next)?;
            let mut g = back.input.reshape(&cache.feature_shape)?;
            for (i, (block, bc)) in self.blocks.iter_mut().zip(&cache.blocks).enumerate().rev() {
                match block.backward(bc, &g, i > 0)? {
                    Some(gx) => g = gx,
                    None => break,
                }
            }
            dh_next = back.h_prev;
            dc_next = back.c_prev;
        }
        Ok(())
    }
}

impl<T: Scalar> Parameterized<T> for PolicyNet<T> {
    fn params(&self) -> Vec<(String, &Param<T>)> {
        let mut out = Vec::new();
        for (i, b) in self.blocks.iter().enumerate() {
            out.push((format!("conv{i}.weight"), &b.conv.weight));
            out.push((format!("conv{i}.bias"), &b.conv.bias));
        }
        out.push(("lstm.w_input".into(), &self.lstm.w_input));
        out.push(("lstm.w_hidden".into(), &self.lstm.w_hidden));
        out.push(("lstm.bias".into(), &self.lstm.bias));
        out.push(("head.weight".into(), &self.head.weight));
        out.push(("head.bias".into(), &self.head.bias));
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut out = Vec::new();
        for b in &mut self.blocks {
            out.push(&mut b.conv.weight);
            out.push(&mut b.conv.bias);
        }
        out.push(&mut self.lstm.w_input);
        out.push(&mut self.lstm.w_hidden);
        out.push(&mut self.lstm.bias);
        out.push(&mut self.head.weight);
        out.push(&mut self.head.bias);
        out
    }
}
