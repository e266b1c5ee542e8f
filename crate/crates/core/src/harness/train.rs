use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::blob;
use crate::curriculum::{compose_batch, plan_epoch, CurriculumKind, PrefixLevels};
use crate::data::{load_dataset, ClutteredDataset};
use crate::error::{Error, Result};
use crate::harness::classifier::{evaluate, save_classifier, ClassifierNet};
use crate::harness::config::ExperimentConfig;
use crate::image::Image;
use crate::nnkit::{AdamConfig, AdamState, ImageClassifier, Parameterized};
use crate::scalar::Scalar;
use crate::sstn::TransformedDataset;
use crate::transform::{warp, AffineTransform};

pub const METRICS_HEADER: &str = "epoch,train_loss,train_acc,test_acc,difficulty_t,easy_count";

/// Random affine parameters for the augmented baseline, drawn from the ranges
/// of the action set: shifts up to ±4 px, rotation up to ±10°, zoom up to 1.2.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AugmentParams {
    pub shift_x: f64,
    pub shift_y: f64,
    pub rotation_deg: f64,
    pub scale: f64,
}

impl AugmentParams {
    pub const MAX_SHIFT: f64 = 4.0;
    pub const MAX_ROTATION_DEG: f64 = 10.0;
    pub const MAX_SCALE: f64 = 1.2;

    pub fn identity() -> Self {
        Self { shift_x: 0.0, shift_y: 0.0, rotation_deg: 0.0, scale: 1.0 }
    }

    pub fn sample(rng: &mut impl Rng) -> Self {
        Self {
            shift_x: rng.random_range(-Self::MAX_SHIFT..=Self::MAX_SHIFT),
            shift_y: rng.random_range(-Self::MAX_SHIFT..=Self::MAX_SHIFT),
            rotation_deg: rng.random_range(-Self::MAX_ROTATION_DEG..=Self::MAX_ROTATION_DEG),
            scale: rng.random_range(1.0..=Self::MAX_SCALE),
        }
    }

    /// Sampling grid: the inverse of moving the content by the shift,
    /// rotating it and magnifying it about the centre.
    pub fn grid(&self, canvas_size: usize) -> AffineTransform<f64> {
        let (s, c) = self.rotation_deg.to_radians().sin_cos();
        let k = 2.0 / canvas_size as f64;
        let content = AffineTransform::from_f64([
            [self.scale * c, -self.scale * s, self.shift_x * k],
            [self.scale * s, self.scale * c, self.shift_y * k],
        ]);
        content.inverse().expect("scale ≥ 1 keeps the transform invertible")
    }
}

pub fn augment_with(img: &Image<f32>, p: &AugmentParams) -> Image<f32> {
    if *p == AugmentParams::identity() {
        return img.clone();
    }
    warp(img, &p.grid(img.width()).cast())
}

pub fn augment(img: &Image<f32>, rng: &mut impl Rng) -> Image<f32> {
    augment_with(img, &AugmentParams::sample(rng))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub test_acc: f64,
    pub difficulty_t: usize,
    pub easy_count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub name: String,
    pub config_hash: String,
    /// Test accuracy of the untrained network.
    pub initial_test_acc: f64,
    pub final_test_acc: f64,
    pub best_test_acc: f64,
    pub stopped_early: bool,
    pub wall_clock_secs: f64,
    pub rows: Vec<EpochRow>,
}

impl RunReport {
    pub fn metrics_csv(&self) -> String {
        let mut s = format!("{METRICS_HEADER}\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{:.6},{:.6},{:.6},{},{}",
                r.epoch, r.train_loss, r.train_acc, r.test_acc, r.difficulty_t, r.easy_count
            );
        }
        s
    }

    /// Writes `metrics.csv` and `report.toml` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        blob::write_atomic(&dir.join("metrics.csv"), self.metrics_csv().as_bytes())?;
        let text = toml::to_string(self).map_err(|e| Error::Metadata(e.to_string()))?;
        blob::write_atomic(&dir.join("report.toml"), text.as_bytes())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("report.toml");
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        toml::from_str(&text).map_err(|e| Error::Metadata(format!("{}: {e}", path.display())))
    }
}

/// Datasets a run reads; load once and share between runs.
#[derive(Clone, Debug)]
pub struct RunInputs {
    pub train: ClutteredDataset,
    pub test: ClutteredDataset,
    pub sequences: Option<TransformedDataset>,
}

impl RunInputs {
    pub fn load(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let mut train = load_dataset(&cfg.train_data)?;
        let mut test = load_dataset(&cfg.test_data)?;
        let mut sequences = match &cfg.sequences {
            Some(p) if !matches!(cfg.curriculum_kind()?, CurriculumKind::Baseline) => Some(TransformedDataset::load(p)?),
            _ => None,
        };
        if let Some(n) = cfg.train_limit {
            train = train.truncate(n);
            sequences = sequences.map(|s| s.select(0..n));
        }
        if let Some(n) = cfg.test_limit {
            test = test.truncate(n);
        }
        Ok(Self { train, test, sequences })
    }
}

/// ChaCha8 seeded with `seed` on its own stream.
pub fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Loads the inputs, trains, and writes config, metrics, report and model
/// into the output directory.
pub fn train_classifier(cfg: &ExperimentConfig) -> Result<RunReport> {
    let inputs = RunInputs::load(cfg)?;
    let (report, _) = run_experiment::<f32>(cfg, &inputs, true)?;
    Ok(report)
}

/// The training loop. Test accuracy is always measured on the original,
/// untransformed and unaugmented test images. With `write_outputs` the run's
/// files go to `cfg.output_dir`.
pub fn run_experiment<T: Scalar>(
    cfg: &ExperimentConfig,
    inputs: &RunInputs,
    write_outputs: bool,
) -> Result<(RunReport, ClassifierNet<T>)> {
    let started = Instant::now();
    let stored = inputs.sequences.as_ref().map_or(0, |s| s.steps);
    let plan = cfg.plan(stored)?;
    if plan.needs_transformed() && inputs.sequences.is_none() {
        return Err(Error::Config(format!("curriculum `{}` needs a transformed dataset", cfg.curriculum)));
    }
    if write_outputs {
        std::fs::create_dir_all(&cfg.output_dir).map_err(|e| Error::io(&cfg.output_dir, e))?;
        cfg.save(&cfg.output_dir.join("config.toml"))?;
    }
    let hash = cfg.hash();
    let seqs = if plan.needs_transformed() { inputs.sequences.as_ref() } else { None };
    let mut levels = PrefixLevels::new(&inputs.train, seqs)?;
    if let Some(dir) = &cfg.level_cache {
        levels = levels.with_disk_cache(dir.clone());
    }

    let mut model = ClassifierNet::<T>::new(cfg.classifier.clone(), &mut seeded_rng(cfg.seed, 1))?;
    let mut order_rng = seeded_rng(cfg.seed, 2);
    let mut aug_rng = seeded_rng(cfg.seed, 3);
    let mut adam = AdamState::new(AdamConfig::with_lr(cfg.lr));

    let initial = evaluate(&model, &inputs.test)?.accuracy;
    let mut rows = Vec::with_capacity(cfg.epochs);
    let (mut best, mut best_epoch) = (initial, 0usize);
    let mut stopped_early = false;
    let original_from = plan.original_from().unwrap_or(usize::MAX);

    for epoch in 0..cfg.epochs {
        let last_good = model.clone();
        let (mut loss_sum, mut correct, mut seen) = (0.0, 0usize, 0usize);
        for items in plan_epoch(&plan, epoch, inputs.train.len(), &mut order_rng) {
            let mut batch = compose_batch(&items, &mut levels)?;
            if cfg.augment {
                for (im, it) in batch.images.iter_mut().zip(&batch.items) {
                    if !it.is_easy() {
                        *im = augment(im, &mut aug_rng);
                    }
                }
            }
            let x = batch.tensor::<T>()?;
            model.zero_grad();
            let ce = model.accumulate_gradients(&x, &batch.labels)?;
            let loss = ce.loss.to_f64_lossy();
            if !loss.is_finite() {
                if write_outputs {
                    save_classifier(&last_good, &cfg.output_dir.join("last_good"), &BTreeMap::new())?;
                }
                return Err(Error::Training(format!(
                    "non-finite loss in epoch {epoch}; last good weights are from the start of the epoch"
                )));
            }
            adam.step(&mut model.params_mut())?;
            loss_sum += loss * batch.len() as f64;
            correct += ce.correct;
            seen += batch.len();
        }
        let test_acc = evaluate(&model, &inputs.test)?.accuracy;
        let row = EpochRow {
            epoch,
            train_loss: loss_sum / seen.max(1) as f64,
            train_acc: correct as f64 / seen.max(1) as f64,
            test_acc,
            difficulty_t: plan.easy_level(epoch) * usize::from(plan.easy_per_full_batch(epoch) > 0),
            easy_count: plan.easy_per_full_batch(epoch),
        };
        log::info!(
            "{} epoch {epoch}: loss {:.4} train {:.4} test {:.4} t={} easy={}",
            cfg.name,
            row.train_loss,
            row.train_acc,
            row.test_acc,
            row.difficulty_t,
            row.easy_count
        );
        rows.push(row);
        if test_acc > best {
            best = test_acc;
            best_epoch = epoch;
        }
        if let Some(p) = cfg.patience {
            if epoch >= original_from && epoch - best_epoch.max(original_from) >= p {
                stopped_early = epoch + 1 < cfg.epochs;
                break;
            }
        }
    }
    let report = RunReport {
        name: cfg.name.clone(),
        config_hash: hash.clone(),
        initial_test_acc: initial,
        final_test_acc: rows.last().map_or(initial, |r| r.test_acc),
        best_test_acc: best,
        stopped_early,
        wall_clock_secs: started.elapsed().as_secs_f64(),
        rows,
    };
    if write_outputs {
        report.write(&cfg.output_dir)?;
        let meta = BTreeMap::from([("config_hash".to_string(), hash)]);
        save_classifier(&model, &cfg.output_dir.join("model"), &meta)?;
    }
    Ok((report, model))
}
