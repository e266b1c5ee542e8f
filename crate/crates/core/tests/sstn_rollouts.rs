mod common;

use common::*;
use stn_curriculum::data::{save_dataset, load_dataset};
use stn_curriculum::sstn::{
    entropy, export_transformed, load_policy, policy_fingerprint, rollout, rollout_batch, save_policy, PolicyConfig,
    PolicyNet, SampleMode, TransformedDataset,
};
use stn_curriculum::transform::{apply_sequence, Action, ApplyMode};
use stn_curriculum::Error;

const STEPS: usize = 6;

fn small_policy(seed: u64) -> PolicyNet<f32> {
    let cfg = PolicyConfig { channels: vec![4, 8, 8], hidden: 16, ..PolicyConfig::desk() };
    PolicyNet::new(cfg, &mut rng(seed)).unwrap()
}

#[test]
fn zero_head_policy_is_uniform() {
    let cfg = PolicyConfig { channels: vec![4, 8, 8], hidden: 16, ..PolicyConfig::desk() };
    let mut p = PolicyNet::<f64>::new(cfg, &mut rng(1)).unwrap();
    p.zero_head();
    let ds = cluttered_mnist(3);
    let mut r = rng(2);
    for img in &ds.images {
        let roll = rollout(&p, img, STEPS, SampleMode::Stochastic, &mut r).unwrap();
        assert_eq!(roll.len(), STEPS);
        for s in &roll.steps {
            assert!((s.log_prob - (1.0f64 / 8.0).ln()).abs() < 1e-12);
            assert!((s.entropy - 8f64.ln()).abs() < 1e-12);
        }
    }
    assert!((entropy(&[0.125; 8]) - 8f64.ln()).abs() < 1e-15);
}

#[test]
fn greedy_rollouts_are_deterministic_and_batch_consistent() {
    let p = small_policy(3);
    let ds = cluttered_mnist(5);
    let a = rollout(&p, &ds.images[0], STEPS, SampleMode::Greedy, &mut rng(1)).unwrap();
    let b = rollout(&p, &ds.images[0], STEPS, SampleMode::Greedy, &mut rng(99)).unwrap();
    assert_eq!(a, b);
    let refs: Vec<_> = ds.images.iter().collect();
    let br = rollout_batch(&p, &refs, STEPS, SampleMode::Greedy, &mut rng(5)).unwrap();
    for (i, img) in ds.images.iter().enumerate() {
        let single = rollout(&p, img, STEPS, SampleMode::Greedy, &mut rng(0)).unwrap();
        assert_eq!(single.sequence(), br.sequences[i]);
        assert_eq!(single.final_image, br.finals[i]);
    }
}

#[test]
fn observed_frames_are_the_running_prefixes() {
    let p = small_policy(4);
    let ds = cluttered_mnist(2);
    let roll = rollout(&p, &ds.images[1], STEPS, SampleMode::Stochastic, &mut rng(8)).unwrap();
    let seq = roll.sequence();
    for (t, s) in roll.steps.iter().enumerate() {
        assert_eq!(s.observed, apply_sequence(&ds.images[1], seq.prefix(t), ApplyMode::Stepwise));
    }
    assert_eq!(roll.final_image, apply_sequence(&ds.images[1], seq.actions(), ApplyMode::Stepwise));
}

#[test]
fn forced_identity_keeps_the_image() {
    let mut p = small_policy(5);
    p.force_action(Action::Identity);
    let ds = cluttered_mnist(3);
    for img in &ds.images {
        let roll = rollout(&p, img, STEPS, SampleMode::Stochastic, &mut rng(1)).unwrap();
        assert!(roll.steps.iter().all(|s| s.action == Action::Identity));
        assert_eq!(&roll.final_image, img);
    }
}

#[test]
fn forced_translation_matches_the_shift_oracle() {
    let mut p = small_policy(6);
    p.force_action(Action::TranslateLeft4);
    let ds = cluttered_mnist(2);
    let roll = rollout(&p, &ds.images[0], 3, SampleMode::Greedy, &mut rng(1)).unwrap();
    assert_eq!(roll.final_image, shift_oracle(&ds.images[0], -12, 0));
}

#[test]
fn zero_step_rollout_is_rejected() {
    let p = small_policy(7);
    let ds = cluttered_mnist(2);
    assert!(matches!(rollout(&p, &ds.images[0], 0, SampleMode::Greedy, &mut rng(0)), Err(Error::Config(_))));
}

#[test]
fn export_with_zero_steps_is_the_identity() {
    let p = small_policy(8);
    let ds = cluttered_mnist(6);
    let t = export_transformed(&p, &ds, 0, 6).unwrap();
    assert_eq!(t, TransformedDataset::untransformed(&ds));
    assert_eq!(t.materialize(&ds, 0).unwrap(), ds.images);
    assert!(t.prefix_image(&ds, 0, 1).is_err());
}

#[test]
fn identity_only_policy_exports_unchanged_levels() {
    let mut p = small_policy(9);
    p.force_action(Action::Identity);
    let ds = cluttered_mnist(10);
    let t = export_transformed(&p, &ds, STEPS, 10).unwrap();
    assert_eq!(t.steps, STEPS);
    assert!(t.sequences.iter().all(|s| s.actions() == [Action::Identity; STEPS]));
    for level in 0..=STEPS {
        assert_eq!(t.materialize(&ds, level).unwrap(), ds.images);
    }
}

#[test]
fn export_verifies_and_round_trips_through_disk() {
    let p = small_policy(10);
    let ds = cluttered_mnist(70);
    let t = export_transformed(&p, &ds, STEPS, 70).unwrap();
    assert_eq!(t.policy_id, policy_fingerprint(&p));
    let dir = tempfile::tempdir().unwrap();
    t.save(&dir.path().join("seq")).unwrap();
    let back = TransformedDataset::load(&dir.path().join("seq")).unwrap();
    assert_eq!(back, t);
    back.check_aligned(&ds).unwrap();
    let level = t.level_dataset(&ds, 3).unwrap();
    save_dataset(&level, &dir.path().join("level3")).unwrap();
    assert_eq!(load_dataset(&dir.path().join("level3")).unwrap(), level);

    let other = cluttered_mnist(71);
    assert!(matches!(t.check_aligned(&other), Err(Error::Composition(_))));
}

#[test]
fn policy_checkpoint_round_trips() {
    let p = small_policy(11);
    let dir = tempfile::tempdir().unwrap();
    let stem = dir.path().join("policy");
    save_policy(&p, &stem).unwrap();
    let q = load_policy::<f32>(&stem).unwrap();
    assert_eq!(policy_fingerprint(&q), policy_fingerprint(&p));
    assert_eq!(q.config(), p.config());
    let ds = cluttered_mnist(2);
    let a = rollout(&p, &ds.images[0], STEPS, SampleMode::Greedy, &mut rng(0)).unwrap();
    let b = rollout(&q, &ds.images[0], STEPS, SampleMode::Greedy, &mut rng(0)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn corrupted_policy_blob_is_rejected() {
    let p = small_policy(12);
    let dir = tempfile::tempdir().unwrap();
    let stem = dir.path().join("policy");
    save_policy(&p, &stem).unwrap();
    let bin = dir.path().join("policy.bin");
    let mut bytes = std::fs::read(&bin).unwrap();
    bytes[10] ^= 0xff;
    std::fs::write(&bin, bytes).unwrap();
    assert!(matches!(load_policy::<f32>(&stem), Err(Error::Metadata(_))));
}
