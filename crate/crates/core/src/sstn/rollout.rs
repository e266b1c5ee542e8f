use rand::Rng;

use crate::error::{Error, Result};
use crate::image::Image;
use crate::nnkit::{argmax, log_softmax_row};
use crate::scalar::Scalar;
use crate::sstn::policy::PolicyNet;
use crate::transform::{apply_sequence, Action, ActionSequence, ApplyMode, NUM_ACTIONS};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SampleMode {
    /// Draw from the policy distribution.
    Stochastic,
    /// Take the most likely action, lowest index on ties.
    Greedy,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RolloutStep {
    /// The image the policy saw before choosing `action`.
    pub observed: Image<f32>,
    pub action: Action,
    pub log_prob: f64,
    pub entropy: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Rollout {
    pub steps: Vec<RolloutStep>,
    pub final_image: Image<f32>,
    /// Terminal reward; zero until a reward is assigned.
    pub reward: f32,
}

impl Rollout {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn sequence(&self) -> ActionSequence {
        self.steps.iter().map(|s| s.action).collect()
    }
}

/// Action choice for one row of logits.
#[derive(Clone, Debug)]
pub(crate) struct Choice {
    pub action: usize,
    pub probs: Vec<f64>,
    pub log_prob: f64,
    pub entropy: f64,
}

pub(crate) fn choose(logits: &[f64], mode: SampleMode, rng: &mut impl Rng) -> Result<Choice> {
    if logits.len() != NUM_ACTIONS || logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::Rollout(format!("non-finite or malformed logits {logits:?}")));
    }
    let logp = log_softmax_row(logits);
    let probs: Vec<f64> = logp.iter().map(|l| l.exp()).collect();
    let action = match mode {
        SampleMode::Greedy => argmax(logits),
        SampleMode::Stochastic => sample_index(&probs, rng.random::<f64>()),
    };
    Ok(Choice { action, log_prob: logp[action], entropy: entropy(&probs), probs })
}

/// Inverse-CDF draw; `u` in `[0, 1)`.
fn sample_index(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            last = i;
        }
        acc += p;
        if u < acc {
            return i;
        }
    }
    last
}

pub fn entropy(probs: &[f64]) -> f64 {
    -probs.iter().filter(|&&p| p > 0.0).map(|&p| p * p.ln()).sum::<f64>()
}

pub(crate) fn apply_action(img: &Image<f32>, action: Action) -> Image<f32> {
    apply_sequence(img, &[action], ApplyMode::Stepwise)
}

fn logits_rows<T: Scalar>(logits: &crate::nnkit::Tensor<T>) -> Vec<Vec<f64>> {
    logits.data().chunks(NUM_ACTIONS).map(|r| r.iter().map(|v| v.to_f64_lossy()).collect()).collect()
}

/// One rollout of `steps` actions. The policy sees the current, already
/// transformed image at every step; its recurrent state starts fresh.
pub fn rollout<T: Scalar>(
    policy: &PolicyNet<T>,
    img: &Image<f32>,
    steps: usize,
    mode: SampleMode,
    rng: &mut impl Rng,
) -> Result<Rollout> {
    if steps == 0 {
        return Err(Error::Config("rollout needs at least one step".into()));
    }
    let mut state = policy.initial_state(1);
    let mut cur = img.clone();
    let mut out = Vec::with_capacity(steps);
    for _ in 0..steps {
        let x = policy.batch_tensor(&[&cur])?;
        let (logits, next) = policy.step(&x, &state)?;
        state = next;
        let c = choose(&logits_rows(&logits)[0], mode, rng)?;
        let action = Action::ALL[c.action];
        let warped = apply_action(&cur, action);
        out.push(RolloutStep { observed: cur, action, log_prob: c.log_prob, entropy: c.entropy });
        cur = warped;
    }
    Ok(Rollout { steps: out, final_image: cur, reward: 0.0 })
}

/// Result of running many images side by side without recording frames.
#[derive(Clone, Debug)]
pub struct BatchRollout {
    pub sequences: Vec<ActionSequence>,
    pub finals: Vec<Image<f32>>,
    /// Per image, per step.
    pub entropies: Vec<Vec<f64>>,
}

/// Batched inference rollouts; image `i` only ever sees its own frames.
pub fn rollout_batch<T: Scalar>(
    policy: &PolicyNet<T>,
    images: &[&Image<f32>],
    steps: usize,
    mode: SampleMode,
    rng: &mut impl Rng,
) -> Result<BatchRollout> {
    let n = images.len();
    let mut cur: Vec<Image<f32>> = images.iter().map(|&im| im.clone()).collect();
    let mut sequences = vec![ActionSequence::default(); n];
    let mut entropies = vec![Vec::with_capacity(steps); n];
    let mut state = policy.initial_state(n);
    for _ in 0..steps {
        let refs: Vec<&Image<f32>> = cur.iter().collect();
        let x = policy.batch_tensor(&refs)?;
        let (logits, next) = policy.step(&x, &state)?;
        state = next;
        for (i, row) in logits_rows(&logits).iter().enumerate() {
            let c = choose(row, mode, rng)?;
            let action = Action::ALL[c.action];
            sequences[i].push(action);
            entropies[i].push(c.entropy);
            cur[i] = apply_action(&cur[i], action);
        }
    }
    Ok(BatchRollout { sequences, finals: cur, entropies })
}
