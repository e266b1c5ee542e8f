use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_EPOCHS_PER_STEP: usize = 5;
pub const DEFAULT_TAU: f64 = 30.0;

/// Absorbs rounding in `T·f(epoch)` when the product should be an integer.
const FLOOR_SLACK: f64 = 1e-9;

/// How the difficulty step `t` decays from `T` to 0 over epochs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SchedulerKind {
    /// `t = max(0, T - ⌊epoch / epochs_per_step⌋)`.
    Linear { epochs_per_step: usize },
    /// `t = ⌊T·cos(epoch·π / (2·horizon))⌋`, 0 from `horizon` on. Without a
    /// horizon it reaches 0 at the same epoch as the default linear schedule.
    Cosine { horizon: Option<usize> },
    /// `t = ⌊T·exp(-epoch/τ)⌋`.
    Exponential { tau: f64 },
}

impl Default for SchedulerKind {
    fn default() -> Self {
        SchedulerKind::Linear { epochs_per_step: DEFAULT_EPOCHS_PER_STEP }
    }
}

impl SchedulerKind {
    pub fn validate(&self) -> Result<()> {
        match *self {
            SchedulerKind::Linear { epochs_per_step: 0 } => Err(Error::Config("epochs_per_step must be ≥ 1".into())),
            SchedulerKind::Cosine { horizon: Some(0) } => Err(Error::Config("cosine horizon must be ≥ 1".into())),
            SchedulerKind::Exponential { tau } if !(tau > 0.0 && tau.is_finite()) => {
                Err(Error::Config(format!("tau must be positive, got {tau}")))
            }
            _ => Ok(()),
        }
    }

    /// Cosine horizon in effect for `max_steps`.
    pub fn cosine_horizon(horizon: Option<usize>, max_steps: usize) -> usize {
        horizon.unwrap_or(max_steps * DEFAULT_EPOCHS_PER_STEP).max(1)
    }

    /// First epoch at which the step count is 0.
    pub fn decay_epochs(&self, max_steps: usize) -> usize {
        match *self {
            SchedulerKind::Linear { epochs_per_step } => max_steps * epochs_per_step.max(1),
            SchedulerKind::Cosine { horizon } => {
                let h = Self::cosine_horizon(horizon, max_steps);
                (0..=h).find(|&e| steps_at_epoch(*self, e, max_steps) == 0).unwrap_or(h)
            }
            SchedulerKind::Exponential { tau } => {
                // ⌊T e^{-e/τ}⌋ = 0 once e > τ ln T; scan from just below.
                let start = if max_steps <= 1 { 0 } else { (tau * (max_steps as f64).ln()).floor() as usize };
                let start = start.saturating_sub(1);
                (start..).find(|&e| steps_at_epoch(*self, e, max_steps) == 0).expect("exponential decay reaches 0")
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SchedulerKind::Linear { .. } => "linear",
            SchedulerKind::Cosine { .. } => "cosine",
            SchedulerKind::Exponential { .. } => "exp",
        }
    }
}

/// Difficulty step for `epoch` (0-based) under scheduler `s` with `max_steps` = T.
pub fn steps_at_epoch(s: SchedulerKind, epoch: usize, max_steps: usize) -> usize {
    let t = max_steps as f64;
    let raw = match s {
        SchedulerKind::Linear { epochs_per_step } => {
            return max_steps.saturating_sub(epoch / epochs_per_step.max(1));
        }
        SchedulerKind::Cosine { horizon } => {
            let h = SchedulerKind::cosine_horizon(horizon, max_steps);
            if epoch >= h {
                return 0;
            }
            t * (epoch as f64 * std::f64::consts::PI / (2.0 * h as f64)).cos()
        }
        SchedulerKind::Exponential { tau } => t * (-(epoch as f64) / tau).exp(),
    };
    ((raw + FLOOR_SLACK).floor().max(0.0) as usize).min(max_steps)
}

impl fmt::Display for SchedulerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            SchedulerKind::Linear { epochs_per_step } => write!(f, "linear:{epochs_per_step}"),
            SchedulerKind::Cosine { horizon: None } => write!(f, "cosine"),
            SchedulerKind::Cosine { horizon: Some(h) } => write!(f, "cosine:{h}"),
            SchedulerKind::Exponential { tau } => write!(f, "exp:{tau}"),
        }
    }
}

/// `linear[:epochs_per_step]`, `cosine[:horizon]` or `exp[:tau]`.
impl FromStr for SchedulerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n.trim(), Some(a.trim())),
            None => (s.trim(), None),
        };
        let bad = |what: &str| Error::Config(format!("bad {what} in scheduler `{s}`"));
        let kind = match name {
            "linear" => SchedulerKind::Linear {
                epochs_per_step: arg.map_or(Ok(DEFAULT_EPOCHS_PER_STEP), |a| a.parse().map_err(|_| bad("epochs_per_step")))?,
            },
            "cosine" => SchedulerKind::Cosine {
                horizon: arg.map(|a| a.parse().map_err(|_| bad("horizon"))).transpose()?,
            },
            "exp" | "exponential" => SchedulerKind::Exponential {
                tau: arg.map_or(Ok(DEFAULT_TAU), |a| a.parse().map_err(|_| bad("tau")))?,
            },
            _ => return Err(Error::Config(format!("unknown scheduler `{name}`"))),
        };
        kind.validate()?;
        Ok(kind)
    }
}
