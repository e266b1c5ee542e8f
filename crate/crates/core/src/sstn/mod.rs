//! Sequential spatial transformer: a recurrent policy that rewrites an image
//! through a fixed number of discrete affine actions, trained with REINFORCE
//! against a classifier's verdict on the final image.

mod dataset;
mod export;
mod policy;
mod reinforce;
mod rollout;

pub use dataset::{TransformedDataset, SEQUENCES_VERSION};
pub use export::{export_transformed, load_policy, policy_fingerprint, save_policy};
pub use policy::{PolicyConfig, PolicyNet, PolicyState, PolicyStepCache};
pub use reinforce::{
    evaluate_policy, policy_logit_gradient, reinforce_train, rewards, train_bandit, BanditConfig, BanditRun,
    CurvePoint, ReinforceConfig, RewardBaseline, RewardKind, TrainingCurve,
};
pub use rollout::{entropy, rollout, rollout_batch, BatchRollout, Rollout, RolloutStep, SampleMode};
