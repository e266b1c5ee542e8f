use std::collections::BTreeMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::blob;
use crate::data::ClutteredDataset;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::nnkit::checkpoint::{load_tensors, save_params};
use crate::nnkit::Parameterized;
use crate::scalar::Scalar;
use crate::sstn::dataset::TransformedDataset;
use crate::sstn::policy::{PolicyConfig, PolicyNet};
use crate::sstn::rollout::{rollout, rollout_batch, SampleMode};

const EXPORT_BATCH: usize = 64;

/// Short hash of the parameter values, as stored (f32).
pub fn policy_fingerprint<T: Scalar>(policy: &PolicyNet<T>) -> String {
    let bytes = blob::f32_to_bytes(
        policy.params().iter().flat_map(|(_, p)| p.value.data().iter().map(|v| v.to_f64_lossy() as f32)),
    );
    blob::sha256_hex(&bytes)[..16].to_string()
}

/// Greedy sequences of length `steps` for every image, checked on a sample
/// of `verify` images: a fresh single-image rollout must reproduce the
/// sequence, and each observed frame must equal the stored prefix.
pub fn export_transformed<T: Scalar>(
    policy: &PolicyNet<T>,
    dataset: &ClutteredDataset,
    steps: usize,
    verify: usize,
) -> Result<TransformedDataset> {
    let mut out = TransformedDataset::untransformed(dataset);
    if steps == 0 {
        return Ok(out);
    }
    out.steps = steps;
    out.policy_id = policy_fingerprint(policy);
    // Greedy selection never consumes randomness.
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut finals: Vec<Image<f32>> = Vec::with_capacity(dataset.len());
    for start in (0..dataset.len()).step_by(EXPORT_BATCH) {
        let end = (start + EXPORT_BATCH).min(dataset.len());
        let images: Vec<&Image<f32>> = (start..end).map(|i| dataset.image(i)).collect();
        let br = rollout_batch(policy, &images, steps, SampleMode::Greedy, &mut rng)?;
        for (i, s) in (start..end).zip(br.sequences) {
            out.sequences[i] = s;
        }
        finals.extend(br.finals);
    }
    let n = dataset.len();
    let stride = if verify == 0 { usize::MAX } else { n.div_ceil(verify).max(1) };
    for i in (0..n).step_by(stride) {
        let r = rollout(policy, dataset.image(i), steps, SampleMode::Greedy, &mut rng)?;
        if r.sequence() != out.sequences[i] {
            return Err(Error::Export(format!("image {i}: single and batched greedy rollouts disagree")));
        }
        for (t, step) in r.steps.iter().enumerate() {
            if step.observed != out.prefix_image(dataset, i, t)? {
                return Err(Error::Export(format!("image {i}: cached prefix {t} differs from the rollout frame")));
            }
        }
        if r.final_image != out.prefix_image(dataset, i, steps)? || r.final_image != finals[i] {
            return Err(Error::Export(format!("image {i}: final prefix differs from the rollout output")));
        }
    }
    Ok(out)
}

pub fn save_policy<T: Scalar>(policy: &PolicyNet<T>, stem: &Path) -> Result<()> {
    let config = toml::to_string(policy.config()).map_err(|e| Error::Metadata(e.to_string()))?;
    let meta = BTreeMap::from([
        ("kind".to_string(), "policy".to_string()),
        ("policy_config".to_string(), config),
        ("fingerprint".to_string(), policy_fingerprint(policy)),
    ]);
    save_params(policy, stem, &meta)
}

pub fn load_policy<T: Scalar>(stem: &Path) -> Result<PolicyNet<T>> {
    let ckpt = load_tensors::<T>(stem)?;
    let text = ckpt
        .meta
        .get("policy_config")
        .ok_or_else(|| Error::Metadata(format!("{} is not a policy checkpoint", stem.display())))?;
    let config: PolicyConfig = toml::from_str(text).map_err(|e| Error::Metadata(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut policy = PolicyNet::new(config, &mut rng)?;
    crate::nnkit::checkpoint::assign_params(&mut policy, ckpt.tensors)?;
    Ok(policy)
}
