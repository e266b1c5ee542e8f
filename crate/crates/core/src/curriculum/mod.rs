//! Batch composition for the curriculum strategies and the difficulty
//! schedulers that drive them.

mod batch;
mod plan;
mod schedule;

pub use batch::{compose_batch, plan_epoch, Batch, BatchItem, PrefixLevels};
pub use plan::{CurriculumKind, CurriculumPlan, DEFAULT_BATCH_SIZE};
pub use schedule::{steps_at_epoch, SchedulerKind, DEFAULT_EPOCHS_PER_STEP, DEFAULT_TAU};
