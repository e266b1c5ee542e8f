//! Artifact preparation: cluttered datasets, the classifier the policy is
//! rewarded by, the trained policy and its exported sequences. Each stage is
//! stored under a directory named by the hash of everything it depends on
//! and is skipped when already present.

use std::ops::Range;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::blob;
use crate::data::{load_dataset, save_dataset, synthesize_cluttered, ClutterConfig, ClutteredDataset, RawDataset, Split};
use crate::error::{Error, Result};
use crate::harness::classifier::{
    evaluate, evaluate_images, load_classifier, save_classifier, ClassifierConfig, ClassifierNet,
};
use crate::harness::config::ExperimentConfig;
use crate::harness::train::{run_experiment, RunInputs};
use crate::image::Image;
use crate::sstn::{
    export_transformed, load_policy, reinforce_train, save_policy, PolicyConfig, PolicyNet, ReinforceConfig,
    TrainingCurve, TransformedDataset,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrepareConfig {
    /// `mnist` or `fashion`.
    pub dataset: String,
    /// Directory with the IDX files.
    pub raw_dir: PathBuf,
    /// Where artifacts are written.
    pub root: PathBuf,
    pub train_limit: Option<usize>,
    pub test_limit: Option<usize>,
    pub clutter: ClutterConfig,
    pub classifier: ClassifierConfig,
    pub pretrain_epochs: usize,
    /// Raw training items the reward classifier is trained on, synthesized
    /// separately from the training split so the policy is not rewarded on
    /// memorized images. `None` pretrains on the training split itself.
    pub reward_pool: Option<Range<usize>>,
    pub policy: PolicyConfig,
    pub reinforce: ReinforceConfig,
    /// Images whose exported sequences are re-checked frame by frame.
    pub verify: usize,
    pub seed: u64,
}

/// Paths of a prepared set of artifacts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Artifacts {
    pub train: PathBuf,
    pub test: PathBuf,
    pub classifier: PathBuf,
    pub policy: PathBuf,
    pub sequences: PathBuf,
    pub report: PolicyReport,
}

/// How the trained policy changes the reward classifier's view of the data.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PolicyReport {
    pub steps: usize,
    pub test_acc_original: f64,
    pub test_acc_transformed: f64,
    pub train_loss_original: f64,
    pub train_loss_transformed: f64,
    pub curve: TrainingCurve,
}

fn key<S: Serialize>(parts: &S) -> Result<String> {
    let text = toml::to_string(parts).map_err(|e| Error::Config(e.to_string()))?;
    Ok(blob::sha256_hex(text.as_bytes())[..12].to_string())
}

fn exists(stem: &Path) -> bool {
    blob::stem_paths(stem).1.exists()
}

#[derive(Serialize)]
struct DataKey<'a> {
    dataset: &'a str,
    train_limit: Option<usize>,
    test_limit: Option<usize>,
    clutter: &'a ClutterConfig,
}

#[derive(Serialize)]
struct PretrainKey<'a> {
    data: &'a str,
    classifier: &'a ClassifierConfig,
    epochs: usize,
    pool: Option<&'a Range<usize>>,
    seed: u64,
}

#[derive(Serialize)]
struct PolicyKey<'a> {
    pretrain: &'a str,
    policy: &'a PolicyConfig,
    reinforce: &'a ReinforceConfig,
    seed: u64,
}

fn synthesize_split(
    cfg: &PrepareConfig,
    clutter: &ClutterConfig,
    split: Split,
    items: Option<Range<usize>>,
    stem: &Path,
) -> Result<()> {
    if exists(stem) {
        return Ok(());
    }
    let mut raw = RawDataset::load(&cfg.raw_dir, split)?;
    if let Some(r) = items {
        raw = raw.select(r);
    }
    log::info!("synthesizing {} {} images of {}", raw.len(), split.name(), cfg.dataset);
    let ds = synthesize_cluttered(&raw, &cfg.dataset, clutter)?;
    save_dataset(&ds, stem)
}

/// Datasets only.
pub fn prepare_data(cfg: &PrepareConfig) -> Result<(PathBuf, PathBuf, String)> {
    let data_key = key(&DataKey {
        dataset: &cfg.dataset,
        train_limit: cfg.train_limit,
        test_limit: cfg.test_limit,
        clutter: &cfg.clutter,
    })?;
    let dir = cfg.root.join(format!("data-{}-{data_key}", cfg.dataset));
    let (train, test) = (dir.join("train"), dir.join("test"));
    synthesize_split(cfg, &cfg.clutter, Split::Train, cfg.train_limit.map(|n| 0..n), &train)?;
    synthesize_split(cfg, &cfg.clutter, Split::Test, cfg.test_limit.map(|n| 0..n), &test)?;
    Ok((train, test, data_key))
}

/// Runs every missing stage and returns the artifact paths.
pub fn prepare(cfg: &PrepareConfig) -> Result<Artifacts> {
    let (train_stem, test_stem, data_key) = prepare_data(cfg)?;

    let pre_key = key(&PretrainKey {
        data: &data_key,
        classifier: &cfg.classifier,
        epochs: cfg.pretrain_epochs,
        pool: cfg.reward_pool.as_ref(),
        seed: cfg.seed,
    })?;
    let pre_dir = cfg.root.join(format!("pretrain-{}-{pre_key}", cfg.dataset));
    let classifier_stem = pre_dir.join("model");
    let test = load_dataset(&test_stem)?;
    if !exists(&classifier_stem) {
        let pool_stem = match &cfg.reward_pool {
            Some(r) => {
                let stem = pre_dir.join("pool");
                let clutter = ClutterConfig { seed: cfg.clutter.seed ^ (0x9e37_79b9 + r.start as u64), ..cfg.clutter.clone() };
                synthesize_split(cfg, &clutter, Split::Train, Some(r.clone()), &stem)?;
                stem
            }
            None => train_stem.clone(),
        };
        let mut ec = ExperimentConfig::new("pretrain", &cfg.dataset, pool_stem.clone(), test_stem.clone(), pre_dir.clone());
        ec.classifier = cfg.classifier.clone();
        ec.epochs = cfg.pretrain_epochs;
        ec.seed = cfg.seed;
        ec.patience = None;
        let inputs = RunInputs { train: load_dataset(&pool_stem)?, test: test.clone(), sequences: None };
        log::info!("pretraining the reward classifier on {} images", inputs.train.len());
        run_experiment::<f32>(&ec, &inputs, true)?;
    }
    let train = load_dataset(&train_stem)?;

    let pol_key = key(&PolicyKey { pretrain: &pre_key, policy: &cfg.policy, reinforce: &cfg.reinforce, seed: cfg.seed })?;
    let pol_dir = cfg.root.join(format!("policy-{}-T{}-{pol_key}", cfg.dataset, cfg.reinforce.steps));
    let policy_stem = pol_dir.join("policy");
    let seq_stem = pol_dir.join("sequences");
    let report_path = pol_dir.join("policy_report.toml");
    if exists(&seq_stem) && report_path.exists() {
        let text = std::fs::read_to_string(&report_path).map_err(|e| Error::io(&report_path, e))?;
        let report = toml::from_str(&text).map_err(|e| Error::Metadata(e.to_string()))?;
        return Ok(Artifacts {
            train: train_stem,
            test: test_stem,
            classifier: classifier_stem,
            policy: policy_stem,
            sequences: seq_stem,
            report,
        });
    }

    let mut classifier = load_classifier::<f32>(&classifier_stem)?;
    let (policy, curve) = if exists(&policy_stem) && pol_dir.join("curve.toml").exists() {
        let text = std::fs::read_to_string(pol_dir.join("curve.toml")).map_err(|e| Error::io(&pol_dir, e))?;
        let curve = toml::from_str(&text).map_err(|e| Error::Metadata(e.to_string()))?;
        if exists(&pol_dir.join("classifier")) {
            classifier = load_classifier(&pol_dir.join("classifier"))?;
        }
        (load_policy::<f32>(&policy_stem)?, curve)
    } else {
        let mut rcfg = cfg.reinforce.clone();
        rcfg.seed = cfg.seed;
        let mut policy = PolicyNet::<f32>::new(cfg.policy.clone(), &mut crate::harness::train::seeded_rng(cfg.seed, 7))?;
        log::info!("training the policy for {} episodes on {} images", rcfg.episodes, train.len());
        let curve = reinforce_train(&mut policy, &mut classifier, &train, &rcfg, |p| {
            log::info!(
                "episodes {}: reward {:.3} held-out {:.3} entropy {:.3}",
                p.episodes,
                p.mean_reward,
                p.heldout_reward,
                p.heldout_entropy
            )
        })?;
        std::fs::create_dir_all(&pol_dir).map_err(|e| Error::io(&pol_dir, e))?;
        save_policy(&policy, &policy_stem)?;
        if rcfg.finetune_classifier {
            save_classifier(&classifier, &pol_dir.join("classifier"), &Default::default())?;
        }
        blob::write_atomic(&pol_dir.join("curve.csv"), curve.to_csv().as_bytes())?;
        let text = toml::to_string(&curve).map_err(|e| Error::Metadata(e.to_string()))?;
        blob::write_atomic(&pol_dir.join("curve.toml"), text.as_bytes())?;
        (policy, curve)
    };

    let steps = cfg.reinforce.steps;
    log::info!("exporting greedy sequences for {} training images", train.len());
    let seqs = export_transformed(&policy, &train, steps, cfg.verify)?;
    let report = policy_report(&classifier, &policy, &train, &test, &seqs, steps, curve)?;
    seqs.save(&seq_stem)?;
    let text = toml::to_string(&report).map_err(|e| Error::Metadata(e.to_string()))?;
    blob::write_atomic(&report_path, text.as_bytes())?;
    Ok(Artifacts {
        train: train_stem,
        test: test_stem,
        classifier: classifier_stem,
        policy: policy_stem,
        sequences: seq_stem,
        report,
    })
}

fn policy_report(
    classifier: &ClassifierNet<f32>,
    policy: &PolicyNet<f32>,
    train: &ClutteredDataset,
    test: &ClutteredDataset,
    train_seqs: &TransformedDataset,
    steps: usize,
    curve: TrainingCurve,
) -> Result<PolicyReport> {
    let test_seqs = export_transformed(policy, test, steps, 0)?;
    let test_t = test_seqs.materialize(test, steps)?;
    let labels: Vec<usize> = (0..test.len()).map(|i| test.label(i)).collect();
    let refs: Vec<&Image<f32>> = test_t.iter().collect();
    let transformed = evaluate_images(classifier, &refs, &labels)?;
    let original = evaluate(classifier, test)?;
    let train_t = train_seqs.materialize(train, steps)?;
    let refs: Vec<&Image<f32>> = train_t.iter().collect();
    let train_labels: Vec<usize> = (0..train.len()).map(|i| train.label(i)).collect();
    let train_transformed = evaluate_images(classifier, &refs, &train_labels)?;
    let train_original = evaluate(classifier, train)?;
    Ok(PolicyReport {
        steps,
        test_acc_original: original.accuracy,
        test_acc_transformed: transformed.accuracy,
        train_loss_original: train_original.loss,
        train_loss_transformed: train_transformed.loss,
        curve,
    })
}
