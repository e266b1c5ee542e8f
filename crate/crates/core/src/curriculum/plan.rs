use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::curriculum::schedule::{steps_at_epoch, SchedulerKind};
use crate::error::{Error, Result};

pub const DEFAULT_BATCH_SIZE: usize = 64;

/// How easy (SSTN-transformed) and original samples are mixed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CurriculumKind {
    Baseline,
    /// `easy_per_batch` prefix-T samples in every batch.
    MixedFixed { easy_per_batch: usize },
    /// Starts all-easy; the easy count drops by `rate` per epoch.
    MixedDynamic { rate: f64 },
    /// Every sample at prefix `t`, `t` decayed from T by the scheduler.
    Incremental { scheduler: SchedulerKind },
}

impl fmt::Display for CurriculumKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CurriculumKind::Baseline => write!(f, "baseline"),
            CurriculumKind::MixedFixed { easy_per_batch } => write!(f, "mixed:{easy_per_batch}"),
            CurriculumKind::MixedDynamic { rate } => write!(f, "dynamic:{rate}"),
            CurriculumKind::Incremental { scheduler } => write!(f, "incremental:{scheduler}"),
        }
    }
}

/// `baseline`, `mixed:k`, `dynamic:rate` or `incremental:<scheduler>`.
impl FromStr for CurriculumKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s, None),
        };
        let need = || arg.ok_or_else(|| Error::Config(format!("curriculum `{s}` needs an argument")));
        Ok(match name {
            "baseline" if arg.is_none() => CurriculumKind::Baseline,
            "mixed" => CurriculumKind::MixedFixed {
                easy_per_batch: need()?.parse().map_err(|_| Error::Config(format!("bad easy count in `{s}`")))?,
            },
            "dynamic" => CurriculumKind::MixedDynamic {
                rate: need()?.parse().map_err(|_| Error::Config(format!("bad rate in `{s}`")))?,
            },
            "incremental" => CurriculumKind::Incremental { scheduler: arg.unwrap_or("linear").parse()? },
            _ => return Err(Error::Config(format!("unknown curriculum `{s}`"))),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurriculumPlan {
    pub kind: CurriculumKind,
    /// T: length of the stored action sequences; easy samples of the mixed
    /// strategies use prefix T.
    pub max_steps: usize,
    pub batch_size: usize,
    pub total_epochs: usize,
}

impl CurriculumPlan {
    pub fn new(kind: CurriculumKind, max_steps: usize, batch_size: usize, total_epochs: usize) -> Result<Self> {
        let plan = Self { kind, max_steps, batch_size, total_epochs };
        plan.validate()?;
        Ok(plan)
    }

    pub fn baseline(batch_size: usize, total_epochs: usize) -> Self {
        Self { kind: CurriculumKind::Baseline, max_steps: 0, batch_size, total_epochs }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be ≥ 1".into()));
        }
        match self.kind {
            CurriculumKind::Baseline => {}
            CurriculumKind::MixedFixed { easy_per_batch } if easy_per_batch > self.batch_size => {
                return Err(Error::Config(format!(
                    "{easy_per_batch} easy samples do not fit a batch of {}",
                    self.batch_size
                )))
            }
            CurriculumKind::MixedFixed { .. } => {}
            CurriculumKind::MixedDynamic { rate } if !(rate > 0.0 && rate.is_finite()) => {
                return Err(Error::Config(format!("dynamic rate must be positive, got {rate}")))
            }
            CurriculumKind::MixedDynamic { .. } => {}
            CurriculumKind::Incremental { scheduler } => scheduler.validate()?,
        }
        if self.needs_transformed() && self.max_steps == 0 {
            return Err(Error::Config(format!("curriculum {} needs T ≥ 1", self.kind)));
        }
        Ok(())
    }

    pub fn needs_transformed(&self) -> bool {
        !matches!(self.kind, CurriculumKind::Baseline)
    }

    /// Prefix level of the easy samples at `epoch`; 0 means original.
    pub fn easy_level(&self, epoch: usize) -> usize {
        match self.kind {
            CurriculumKind::Baseline => 0,
            CurriculumKind::MixedFixed { .. } | CurriculumKind::MixedDynamic { .. } => self.max_steps,
            CurriculumKind::Incremental { scheduler } => steps_at_epoch(scheduler, epoch, self.max_steps),
        }
    }

    /// Easy samples in a batch of `batch_len` items at `epoch`.
    pub fn easy_count(&self, epoch: usize, batch_len: usize) -> usize {
        if self.easy_level(epoch) == 0 {
            return 0;
        }
        let n = match self.kind {
            CurriculumKind::Baseline => 0,
            CurriculumKind::MixedFixed { easy_per_batch } => easy_per_batch,
            CurriculumKind::MixedDynamic { rate } => {
                let removed = (rate * epoch as f64 + 1e-9).floor();
                (self.batch_size as f64 - removed).max(0.0) as usize
            }
            CurriculumKind::Incremental { .. } => batch_len,
        };
        n.min(batch_len)
    }

    /// Easy count of a full batch; the value logged per epoch.
    pub fn easy_per_full_batch(&self, epoch: usize) -> usize {
        self.easy_count(epoch, self.batch_size)
    }

    /// First epoch from which only original samples are used, if any.
    pub fn original_from(&self) -> Option<usize> {
        match self.kind {
            CurriculumKind::Baseline => Some(0),
            CurriculumKind::MixedFixed { easy_per_batch: 0 } => Some(0),
            CurriculumKind::MixedFixed { .. } => None,
            CurriculumKind::MixedDynamic { rate } => {
                let mut e = (self.batch_size as f64 / rate).floor() as usize;
                while e > 0 && self.easy_per_full_batch(e - 1) == 0 {
                    e -= 1;
                }
                while self.easy_per_full_batch(e) > 0 {
                    e += 1;
                }
                Some(e)
            }
            CurriculumKind::Incremental { scheduler } => Some(scheduler.decay_epochs(self.max_steps)),
        }
    }

    /// True when the plan finishes on original data for at least one epoch.
    pub fn ends_on_original(&self) -> bool {
        self.original_from().is_some_and(|e| e < self.total_epochs)
    }
}
