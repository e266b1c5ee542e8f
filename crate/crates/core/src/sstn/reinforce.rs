//! REINFORCE with a moving-average baseline and an annealed entropy bonus.
//!
//! Per episode the surrogate loss is
//! `-(R - b) Σ_t log π(a_t | s_t) - β Σ_t H(π(· | s_t))`; the update averages
//! it over the episodes of a batch.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::ClutteredDataset;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::nnkit::{softmax_row, AdamConfig, AdamState, ImageClassifier, Param, Parameterized, Tensor};
use crate::scalar::Scalar;
use crate::image::images_to_tensor;
use crate::sstn::policy::{PolicyNet, PolicyStepCache};
use crate::sstn::rollout::{apply_action, choose, entropy, rollout_batch, SampleMode};
use crate::transform::{Action, NUM_ACTIONS};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardKind {
    /// 1 when the classifier's prediction on the final image is right.
    #[default]
    Correct,
    /// Classifier probability of the true class on the final image.
    TrueClassProb,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReinforceConfig {
    pub steps: usize,
    pub episodes: usize,
    /// Episodes per policy update.
    pub batch: usize,
    /// Episodes rolled out together; bounds the memory held for BPTT.
    pub micro_batch: usize,
    pub lr: f64,
    pub baseline_momentum: f64,
    pub entropy_coef: f64,
    pub anneal_entropy: bool,
    pub reward: RewardKind,
    pub seed: u64,
    /// Alternate one classifier update on the final images after every
    /// policy update.
    pub finetune_classifier: bool,
    pub classifier_lr: f64,
    /// The last `heldout` images are never trained on; they are used for the
    /// curve's greedy reward and entropy.
    pub heldout: usize,
    /// Curve points are taken every `log_every` episodes.
    pub log_every: usize,
}

impl Default for ReinforceConfig {
    fn default() -> Self {
        Self {
            steps: 10,
            episodes: 20_000,
            batch: 16,
            micro_batch: 16,
            lr: 5e-4,
            baseline_momentum: 0.99,
            entropy_coef: 0.01,
            anneal_entropy: true,
            reward: RewardKind::Correct,
            seed: 0,
            finetune_classifier: false,
            classifier_lr: 1e-4,
            heldout: 256,
            log_every: 1000,
        }
    }
}

impl ReinforceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 || self.batch == 0 || self.micro_batch == 0 || self.log_every == 0 {
            return Err(Error::Config("steps, batch, micro_batch and log_every must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.baseline_momentum) {
            return Err(Error::Config(format!("baseline momentum {} outside [0, 1)", self.baseline_momentum)));
        }
        if !(self.lr > 0.0) || self.entropy_coef < 0.0 {
            return Err(Error::Config("learning rate must be positive, entropy coefficient non-negative".into()));
        }
        Ok(())
    }

    /// Entropy coefficient after `done` episodes.
    pub fn entropy_coef_at(&self, done: usize) -> f64 {
        if !self.anneal_entropy || self.episodes == 0 {
            return self.entropy_coef;
        }
        self.entropy_coef * (1.0 - done as f64 / self.episodes as f64).max(0.0)
    }
}

/// Exponential moving average of rewards; starts at the first reward seen.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RewardBaseline {
    momentum: f64,
    value: Option<f64>,
}

impl RewardBaseline {
    pub fn new(momentum: f64) -> Self {
        Self { momentum, value: None }
    }

    pub fn value(&self) -> f64 {
        self.value.unwrap_or(0.0)
    }

    pub fn is_initialized(&self) -> bool {
        self.value.is_some()
    }

    pub fn update(&mut self, reward: f64) {
        self.value = Some(match self.value {
            None => reward,
            Some(b) => self.momentum * b + (1.0 - self.momentum) * reward,
        });
    }
}

/// Gradient w.r.t. the logits of `-advantage · log π(action) - β · H(π)`
/// for one step with action probabilities `probs`.
pub fn policy_logit_gradient(probs: &[f64], action: usize, advantage: f64, entropy_coef: f64) -> Vec<f64> {
    let h = entropy(probs);
    probs
        .iter()
        .enumerate()
        .map(|(k, &p)| {
            let onehot = if k == action { 1.0 } else { 0.0 };
            let ent = if p > 0.0 { entropy_coef * p * (p.ln() + h) } else { 0.0 };
            -advantage * (onehot - p) + ent
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub episodes: usize,
    /// Mean training reward since the previous point.
    pub mean_reward: f64,
    pub mean_loss: f64,
    pub baseline: f64,
    pub entropy_coef: f64,
    /// Mean per-step entropy of greedy rollouts on the held-out images.
    pub heldout_entropy: f64,
    /// Mean reward of greedy rollouts on the held-out images.
    pub heldout_reward: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingCurve {
    pub points: Vec<CurvePoint>,
}

impl TrainingCurve {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("episodes,mean_reward,mean_loss,baseline,entropy_coef,heldout_entropy,heldout_reward\n");
        for p in &self.points {
            let _ = writeln!(
                s,
                "{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
                p.episodes, p.mean_reward, p.mean_loss, p.baseline, p.entropy_coef, p.heldout_entropy, p.heldout_reward
            );
        }
        s
    }
}

/// Terminal rewards of `finals` under `classifier`.
pub fn rewards<T: Scalar, C: ImageClassifier<T> + ?Sized>(
    classifier: &C,
    finals: &[&Image<f32>],
    labels: &[usize],
    kind: RewardKind,
) -> Result<Vec<f64>> {
    let Some(first) = finals.first() else { return Ok(Vec::new()) };
    let x = images_to_tensor::<T>(finals, first.width())?;
    let logits = classifier.logits(&x)?;
    let c = logits.dim(1);
    let mut out = Vec::with_capacity(finals.len());
    for (row, &label) in logits.data().chunks(c).zip(labels) {
        let z: Vec<f64> = row.iter().map(|v| v.to_f64_lossy()).collect();
        let r = match kind {
            RewardKind::Correct => f64::from(u8::from(crate::nnkit::argmax(&z) == label)),
            RewardKind::TrueClassProb => softmax_row(&z)[label],
        };
        if !r.is_finite() {
            return Err(Error::Training(format!("non-finite reward for label {label}; logits {z:?}")));
        }
        out.push(r);
    }
    Ok(out)
}

struct Episodes<T> {
    caches: Vec<PolicyStepCache<T>>,
    choices: Vec<Vec<(usize, Vec<f64>)>>,
    finals: Vec<Image<f32>>,
}

fn sample_episodes<T: Scalar>(
    policy: &PolicyNet<T>,
    images: &[&Image<f32>],
    steps: usize,
    rng: &mut impl Rng,
) -> Result<Episodes<T>> {
    let n = images.len();
    let mut cur: Vec<Image<f32>> = images.iter().map(|&im| im.clone()).collect();
    let mut state = policy.initial_state(n);
    let mut caches = Vec::with_capacity(steps);
    let mut choices = vec![Vec::with_capacity(steps); n];
    for _ in 0..steps {
        let refs: Vec<&Image<f32>> = cur.iter().collect();
        let x = policy.batch_tensor(&refs)?;
        let (logits, next, cache) = policy.step_train(&x, &state)?;
        state = next;
        caches.push(cache);
        for (i, row) in logits.data().chunks(NUM_ACTIONS).enumerate() {
            let z: Vec<f64> = row.iter().map(|v| v.to_f64_lossy()).collect();
            let c = choose(&z, SampleMode::Stochastic, rng)?;
            cur[i] = apply_action(&cur[i], Action::ALL[c.action]);
            choices[i].push((c.action, c.probs));
        }
    }
    Ok(Episodes { caches, choices, finals: cur })
}

/// Greedy held-out reward and mean per-step entropy.
pub fn evaluate_policy<T: Scalar, C: ImageClassifier<T> + ?Sized>(
    policy: &PolicyNet<T>,
    classifier: &C,
    images: &[&Image<f32>],
    labels: &[usize],
    steps: usize,
    kind: RewardKind,
) -> Result<(f64, f64)> {
    if images.is_empty() {
        return Ok((0.0, 0.0));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (mut reward, mut ent) = (0.0, 0.0);
    for (chunk, lab) in images.chunks(64).zip(labels.chunks(64)) {
        let br = rollout_batch(policy, chunk, steps, SampleMode::Greedy, &mut rng)?;
        let finals: Vec<&Image<f32>> = br.finals.iter().collect();
        reward += rewards(classifier, &finals, lab, kind)?.iter().sum::<f64>();
        ent += br.entropies.iter().map(|e| e.iter().sum::<f64>() / steps as f64).sum::<f64>();
    }
    let n = images.len() as f64;
    Ok((reward / n, ent / n))
}

/// Trains `policy` against `classifier` on `dataset`. The classifier stays
/// frozen unless `finetune_classifier` is set. `on_point` sees every curve
/// point as it is produced.
pub fn reinforce_train<T: Scalar, C: ImageClassifier<T>>(
    policy: &mut PolicyNet<T>,
    classifier: &mut C,
    dataset: &ClutteredDataset,
    cfg: &ReinforceConfig,
    mut on_point: impl FnMut(&CurvePoint),
) -> Result<TrainingCurve> {
    cfg.validate()?;
    if dataset.len() <= cfg.heldout {
        return Err(Error::Config(format!(
            "dataset of {} images leaves nothing to train on after holding out {}",
            dataset.len(),
            cfg.heldout
        )));
    }
    let train_n = dataset.len() - cfg.heldout;
    let held_images: Vec<&Image<f32>> = (train_n..dataset.len()).map(|i| dataset.image(i)).collect();
    let held_labels: Vec<usize> = (train_n..dataset.len()).map(|i| dataset.label(i)).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train_n).collect();
    order.shuffle(&mut rng);
    let mut cursor = 0;

    let mut adam = AdamState::new(AdamConfig::with_lr(cfg.lr));
    let mut cls_adam = AdamState::new(AdamConfig::with_lr(cfg.classifier_lr));
    let mut baseline = RewardBaseline::new(cfg.baseline_momentum);
    let mut curve = TrainingCurve::default();
    let (mut window_reward, mut window_loss, mut window_n) = (0.0, 0.0, 0usize);
    let mut done = 0;
    let mut next_log = cfg.log_every.min(cfg.episodes.max(1));

    while done < cfg.episodes {
        let batch_len = cfg.batch.min(cfg.episodes - done);
        let mut idx = Vec::with_capacity(batch_len);
        for _ in 0..batch_len {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            idx.push(order[cursor]);
            cursor += 1;
        }
        let beta = cfg.entropy_coef_at(done);
        policy.zero_grad();
        let mut batch_rewards = Vec::with_capacity(batch_len);
        let mut finals_all = Vec::new();
        let b_now = baseline.value();
        let scale = 1.0 / batch_len as f64;
        for mb in idx.chunks(cfg.micro_batch) {
            let images: Vec<&Image<f32>> = mb.iter().map(|&i| dataset.image(i)).collect();
            let labels: Vec<usize> = mb.iter().map(|&i| dataset.label(i)).collect();
            let ep = sample_episodes(policy, &images, cfg.steps, &mut rng)?;
            let finals: Vec<&Image<f32>> = ep.finals.iter().collect();
            let r = rewards(&*classifier, &finals, &labels, cfg.reward)?;
            // The first batch seeds the baseline, so its advantages start near zero.
            let b = if baseline.is_initialized() { b_now } else { r.iter().sum::<f64>() / r.len() as f64 };
            let mut grads: Vec<Tensor<T>> = (0..cfg.steps).map(|_| Tensor::zeros(&[mb.len(), NUM_ACTIONS])).collect();
            for (e, (ch, &reward)) in ep.choices.iter().zip(&r).enumerate() {
                let adv = reward - b;
                let mut loss = 0.0;
                for (t, (a, probs)) in ch.iter().enumerate() {
                    let g = policy_logit_gradient(probs, *a, adv, beta);
                    for (dst, v) in grads[t].outer_mut(e).iter_mut().zip(g) {
                        *dst = T::lit(v * scale);
                    }
                    loss += -adv * probs[*a].max(f64::MIN_POSITIVE).ln() - beta * entropy(probs);
                }
                window_loss += loss;
            }
            policy.backward(&ep.caches, &grads)?;
            batch_rewards.extend(r);
            if cfg.finetune_classifier {
                finals_all.extend(ep.finals.into_iter().zip(labels));
            }
        }
        if !policy.params().iter().all(|(_, p)| p.grad.all_finite()) {
            return Err(Error::Training(format!("non-finite policy gradient after {done} episodes")));
        }
        adam.step(&mut policy.params_mut())?;
        for &r in &batch_rewards {
            baseline.update(r);
            window_reward += r;
        }
        window_n += batch_len;
        if cfg.finetune_classifier && !finals_all.is_empty() {
            let imgs: Vec<&Image<f32>> = finals_all.iter().map(|(im, _)| im).collect();
            let labels: Vec<usize> = finals_all.iter().map(|(_, l)| *l).collect();
            let x = images_to_tensor::<T>(&imgs, imgs[0].width())?;
            classifier.zero_grad();
            classifier.accumulate_gradients(&x, &labels)?;
            cls_adam.step(&mut classifier.params_mut())?;
        }
        done += batch_len;
        if done >= next_log || done == cfg.episodes {
            let (heldout_reward, heldout_entropy) =
                evaluate_policy(policy, &*classifier, &held_images, &held_labels, cfg.steps, cfg.reward)?;
            let point = CurvePoint {
                episodes: done,
                mean_reward: window_reward / window_n.max(1) as f64,
                mean_loss: window_loss / window_n.max(1) as f64,
                baseline: baseline.value(),
                entropy_coef: beta,
                heldout_entropy,
                heldout_reward,
            };
            on_point(&point);
            curve.points.push(point);
            (window_reward, window_loss, window_n) = (0.0, 0.0, 0);
            while next_log <= done {
                next_log += cfg.log_every;
            }
        }
    }
    Ok(curve)
}

#[derive(Clone, Debug, PartialEq)]
pub struct BanditConfig {
    /// Deterministic reward of each arm.
    pub rewards: Vec<f64>,
    pub episodes: usize,
    pub lr: f64,
    pub baseline_momentum: f64,
    pub entropy_coef: f64,
    pub seed: u64,
}

impl Default for BanditConfig {
    fn default() -> Self {
        Self { rewards: vec![1.0, 0.0], episodes: 2000, lr: 0.05, baseline_momentum: 0.99, entropy_coef: 0.0, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BanditRun {
    /// Arm probabilities after each episode.
    pub history: Vec<Vec<f64>>,
}

impl BanditRun {
    pub fn final_probs(&self) -> &[f64] {
        self.history.last().map_or(&[], |v| v.as_slice())
    }

    /// First episode (1-based) after which `arm` has at least `p`.
    pub fn episodes_to_reach(&self, arm: usize, p: f64) -> Option<usize> {
        self.history.iter().position(|h| h[arm] >= p).map(|i| i + 1)
    }
}

/// Stateless bandit trained with the same estimator, baseline and optimizer
/// as the image policy; one episode per update.
pub fn train_bandit(cfg: &BanditConfig) -> Result<BanditRun> {
    let k = cfg.rewards.len();
    if k < 2 {
        return Err(Error::Config("a bandit needs at least two arms".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut logits = Param::new(Tensor::<f64>::zeros(&[k]));
    let mut adam = AdamState::new(AdamConfig::with_lr(cfg.lr));
    let mut baseline = RewardBaseline::new(cfg.baseline_momentum);
    let mut history = Vec::with_capacity(cfg.episodes);
    for _ in 0..cfg.episodes {
        let probs = softmax_row(logits.value.data());
        let u: f64 = rng.random();
        let mut arm = k - 1;
        let mut acc = 0.0;
        for (i, &p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                arm = i;
                break;
            }
        }
        let r = cfg.rewards[arm];
        let b = if baseline.is_initialized() { baseline.value() } else { r };
        let g = policy_logit_gradient(&probs, arm, r - b, cfg.entropy_coef);
        logits.grad.data_mut().copy_from_slice(&g);
        adam.step(&mut [&mut logits])?;
        baseline.update(r);
        history.push(softmax_row(logits.value.data()));
    }
    Ok(BanditRun { history })
}
