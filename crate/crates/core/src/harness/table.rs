//! Preset grids of runs mirroring the result tables, and their reports.

use std::fmt::Write as _;
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::blob;
use crate::curriculum::{SchedulerKind, DEFAULT_BATCH_SIZE};
use crate::data::ClutterConfig;
use crate::error::{Error, Result};
use crate::harness::classifier::{ClassifierConfig, ClassifierSpec};
use crate::harness::config::ExperimentConfig;
use crate::harness::pipeline::{prepare, Artifacts, PrepareConfig};
use crate::harness::train::{run_experiment, RunInputs, RunReport};
use crate::sstn::{PolicyConfig, ReinforceConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// Curriculum strategies against the baselines.
    Table1,
    /// Incremental difficulty under the three schedulers.
    Table2,
    /// Incremental difficulty for several T.
    Table3,
    /// Mixed batches with several easy-sample counts.
    Table4,
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "table1" => Ok(Preset::Table1),
            "table2" => Ok(Preset::Table2),
            "table3" => Ok(Preset::Table3),
            "table4" => Ok(Preset::Table4),
            _ => Err(Error::Config(format!("unknown preset `{s}`"))),
        }
    }
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::Table1 => "table1",
            Preset::Table2 => "table2",
            Preset::Table3 => "table3",
            Preset::Table4 => "table4",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Full,
    Desk,
}

impl FromStr for Scale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Scale::Full),
            "desk" => Ok(Scale::Desk),
            _ => Err(Error::Config(format!("unknown scale `{s}`"))),
        }
    }
}

/// Budgets and sizes for one scale.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleSettings {
    pub scale: Scale,
    pub train_limit: Option<usize>,
    pub test_limit: Option<usize>,
    /// Epoch budget of runs without a curriculum phase.
    pub epochs: usize,
    /// Default T.
    pub steps: usize,
    pub epochs_per_step: usize,
    /// Epochs on original data after a curriculum has fully decayed.
    pub tail_epochs: usize,
    /// Exponential-decay τ.
    pub tau: f64,
    pub patience: Option<usize>,
    pub classifier_first_stride: usize,
    pub pretrain_epochs: usize,
    /// Raw training items the reward classifier is pretrained on.
    pub reward_pool: Option<Range<usize>>,
    pub policy: PolicyConfig,
    pub reinforce: ReinforceConfig,
}

impl ScaleSettings {
    pub fn full() -> Self {
        Self {
            scale: Scale::Full,
            train_limit: None,
            test_limit: None,
            epochs: 100,
            steps: 40,
            epochs_per_step: 5,
            tail_epochs: 20,
            tau: 30.0,
            patience: Some(10),
            classifier_first_stride: 1,
            pretrain_epochs: 20,
            reward_pool: None,
            policy: PolicyConfig::default(),
            reinforce: ReinforceConfig { steps: 40, episodes: 200_000, ..ReinforceConfig::default() },
        }
    }

    pub fn desk() -> Self {
        Self {
            scale: Scale::Desk,
            train_limit: Some(10_000),
            test_limit: None,
            epochs: 15,
            steps: 10,
            epochs_per_step: 1,
            tail_epochs: 5,
            // Keeps τ's ratio to the linear decay length of the full scale.
            tau: 3.0,
            patience: Some(10),
            classifier_first_stride: 2,
            pretrain_epochs: 10,
            reward_pool: Some(10_000..60_000),
            policy: PolicyConfig::desk(),
            reinforce: ReinforceConfig { steps: 10, episodes: 20_000, ..ReinforceConfig::default() },
        }
    }

    pub fn for_scale(scale: Scale) -> Self {
        match scale {
            Scale::Full => Self::full(),
            Scale::Desk => Self::desk(),
        }
    }

    /// Dynamic mixed-batch rate that empties the easy share when the
    /// default linear schedule reaches 0.
    pub fn dynamic_rate(&self) -> f64 {
        match self.scale {
            Scale::Full => 1.0,
            Scale::Desk => DEFAULT_BATCH_SIZE as f64 / (self.steps * self.epochs_per_step) as f64,
        }
    }

    fn linear(&self) -> SchedulerKind {
        SchedulerKind::Linear { epochs_per_step: self.epochs_per_step }
    }

    /// Epoch budget for `curriculum` at `steps`: the base budget, extended so
    /// a decaying curriculum ends with `tail_epochs` on original data.
    pub fn epochs_for(&self, curriculum: &str, steps: usize) -> Result<usize> {
        let plan = crate::curriculum::CurriculumPlan::new(curriculum.parse()?, steps, DEFAULT_BATCH_SIZE, self.epochs)?;
        Ok(match plan.original_from() {
            Some(e) if e > 0 => self.epochs.max(e + self.tail_epochs),
            _ => self.epochs,
        })
    }
}

/// One row × dataset entry of a table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub row: String,
    pub dataset: String,
    pub curriculum: String,
    pub steps: usize,
    pub augment: bool,
    pub epochs: usize,
}

impl Cell {
    pub fn slug(&self) -> String {
        let row: String = self
            .row
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '-' })
            .collect();
        format!("{}-{}", self.dataset, row.trim_matches('-'))
    }
}

pub fn classifier_for(dataset: &str) -> ClassifierSpec {
    if dataset == "fashion" {
        ClassifierSpec::LeNet2
    } else {
        ClassifierSpec::LeNet1
    }
}

fn mixed_k(dataset: &str) -> usize {
    if dataset == "fashion" {
        16
    } else {
        4
    }
}

/// The grid of a preset over `datasets`.
pub fn preset_cells(preset: Preset, s: &ScaleSettings, datasets: &[String]) -> Result<Vec<Cell>> {
    let mut cells = Vec::new();
    for ds in datasets {
        let mut push = |row: String, curriculum: String, steps: usize, augment: bool| -> Result<()> {
            let epochs = s.epochs_for(&curriculum, steps)?;
            cells.push(Cell { row, dataset: ds.clone(), curriculum, steps, augment, epochs });
            Ok(())
        };
        match preset {
            Preset::Table1 => {
                push("Baseline".into(), "baseline".into(), 0, false)?;
                push("Baseline*".into(), "baseline".into(), 0, true)?;
                push("Mixed-batch".into(), format!("mixed:{}", mixed_k(ds)), s.steps, false)?;
                push("Dynamic Mixed-batch".into(), format!("dynamic:{}", s.dynamic_rate()), s.steps, false)?;
                push("Incremental Difficulty".into(), format!("incremental:{}", s.linear()), s.steps, false)?;
            }
            Preset::Table2 => {
                let t = if s.scale == Scale::Full { 20 } else { s.steps };
                let horizon = t * s.epochs_per_step;
                push("Linear Decay".into(), format!("incremental:{}", s.linear()), t, false)?;
                push("Cosine Annealing".into(), format!("incremental:cosine:{horizon}"), t, false)?;
                push("Exponential Decay".into(), format!("incremental:exp:{}", s.tau), t, false)?;
            }
            Preset::Table3 => {
                for t in [1, 10, 20, 40] {
                    push(format!("T : {t}"), format!("incremental:{}", s.linear()), t, false)?;
                }
            }
            Preset::Table4 => {
                for k in [4, 8, 16, 32] {
                    push(format!("{k}/{DEFAULT_BATCH_SIZE}"), format!("mixed:{k}"), s.steps, false)?;
                }
            }
        }
    }
    Ok(cells)
}

/// Where a table run reads and writes.
#[derive(Clone, Debug)]
pub struct TableContext {
    /// Holds one IDX directory per dataset id.
    pub raw_root: PathBuf,
    pub artifact_root: PathBuf,
    pub out_dir: PathBuf,
    pub seeds: usize,
    pub datasets: Vec<String>,
    /// Only run rows with these names, when set.
    pub rows: Option<Vec<String>>,
    pub settings: ScaleSettings,
    /// Seed of the shared artifacts (data, reward classifier, policy).
    pub artifact_seed: u64,
}

impl TableContext {
    pub fn new(raw_root: PathBuf, artifact_root: PathBuf, out_dir: PathBuf, scale: Scale) -> Self {
        Self {
            raw_root,
            artifact_root,
            out_dir,
            seeds: 3,
            datasets: vec!["mnist".into(), "fashion".into()],
            rows: None,
            settings: ScaleSettings::for_scale(scale),
            artifact_seed: 0,
        }
    }

    pub fn prepare_config(&self, dataset: &str, steps: usize) -> PrepareConfig {
        let s = &self.settings;
        let mut classifier = ClassifierConfig::new(classifier_for(dataset));
        classifier.first_stride = s.classifier_first_stride;
        PrepareConfig {
            dataset: dataset.into(),
            raw_dir: self.raw_root.join(dataset),
            root: self.artifact_root.clone(),
            train_limit: s.train_limit,
            test_limit: s.test_limit,
            clutter: ClutterConfig::with_seed(self.artifact_seed),
            classifier,
            pretrain_epochs: s.pretrain_epochs,
            reward_pool: s.reward_pool.clone(),
            policy: s.policy.clone(),
            reinforce: ReinforceConfig { steps, ..s.reinforce.clone() },
            verify: 32,
            seed: self.artifact_seed,
        }
    }

    pub fn experiment_config(&self, cell: &Cell, art: &Artifacts, seed: u64) -> ExperimentConfig {
        let out = self.out_dir.join("runs").join(format!("{}-s{seed}", cell.slug()));
        let mut c = ExperimentConfig::new(&cell.slug(), &cell.dataset, art.train.clone(), art.test.clone(), out);
        c.classifier = ClassifierConfig::new(classifier_for(&cell.dataset));
        c.classifier.first_stride = self.settings.classifier_first_stride;
        c.curriculum = cell.curriculum.clone();
        if cell.curriculum != "baseline" {
            c.sequences = Some(art.sequences.clone());
            c.steps = Some(cell.steps);
        }
        c.augment = cell.augment;
        c.epochs = cell.epochs;
        c.seed = seed;
        c.patience = self.settings.patience;
        c
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub row: String,
    pub dataset: String,
    pub seed: u64,
    pub final_test_acc: Option<f64>,
    pub error: Option<String>,
    pub run_dir: PathBuf,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Bundle {
    pub preset: String,
    pub results: Vec<CellResult>,
}

impl Bundle {
    /// Mean and sample standard deviation of the final accuracy of a cell.
    pub fn cell_stats(&self, row: &str, dataset: &str) -> Option<(f64, f64, usize)> {
        let v: Vec<f64> = self
            .results
            .iter()
            .filter(|r| r.row == row && r.dataset == dataset)
            .filter_map(|r| r.final_test_acc)
            .collect();
        if v.is_empty() {
            return None;
        }
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let sd = if v.len() > 1 { (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() } else { 0.0 };
        Some((mean, sd, v.len()))
    }

    fn rows_and_datasets(&self) -> (Vec<String>, Vec<String>) {
        let mut rows: Vec<String> = Vec::new();
        let mut ds: Vec<String> = Vec::new();
        for r in &self.results {
            if !rows.contains(&r.row) {
                rows.push(r.row.clone());
            }
            if !ds.contains(&r.dataset) {
                ds.push(r.dataset.clone());
            }
        }
        (rows, ds)
    }

    pub fn to_markdown(&self) -> String {
        let (rows, ds) = self.rows_and_datasets();
        let mut s = format!("| Method | {} |\n|---|{}\n", ds.join(" | "), "---|".repeat(ds.len()));
        for row in &rows {
            let cells: Vec<String> = ds
                .iter()
                .map(|d| match self.cell_stats(row, d) {
                    Some((m, sd, n)) => format!("{:.1} ± {:.1} (n={n})", 100.0 * m, 100.0 * sd),
                    None => "failed".into(),
                })
                .collect();
            let _ = writeln!(s, "| {row} | {} |", cells.join(" | "));
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("row,dataset,seed,final_test_acc,error\n");
        for r in &self.results {
            let acc = r.final_test_acc.map_or(String::new(), |a| format!("{a:.6}"));
            let err = r.error.as_deref().unwrap_or("").replace(['"', '\n'], " ");
            let _ = writeln!(s, "\"{}\",{},{},{acc},\"{err}\"", r.row, r.dataset, r.seed);
        }
        s
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        blob::write_atomic(&dir.join("table.md"), self.to_markdown().as_bytes())?;
        blob::write_atomic(&dir.join("table.csv"), self.to_csv().as_bytes())?;
        let text = toml::to_string(self).map_err(|e| Error::Metadata(e.to_string()))?;
        blob::write_atomic(&dir.join("bundle.toml"), text.as_bytes())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("bundle.toml");
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        toml::from_str(&text).map_err(|e| Error::Metadata(format!("{}: {e}", path.display())))
    }
}

/// Runs every cell of `preset` for `ctx.seeds` seeds. A failing cell (or a
/// failing artifact stage) is recorded and the rest still run; the bundle is
/// written either way.
pub fn run_table(preset: Preset, ctx: &TableContext) -> Result<Bundle> {
    let mut cells = preset_cells(preset, &ctx.settings, &ctx.datasets)?;
    if let Some(rows) = &ctx.rows {
        cells.retain(|c| rows.contains(&c.row));
    }
    let mut bundle = Bundle { preset: preset.name().into(), results: Vec::new() };
    // Keyed by dataset, T and whether the policy stages are needed.
    let mut artifacts: Vec<((String, usize, bool), std::result::Result<Artifacts, String>)> = Vec::new();
    for cell in &cells {
        let baseline = cell.curriculum == "baseline";
        let t = if baseline { ctx.settings.steps } else { cell.steps };
        let k = (cell.dataset.clone(), t, !baseline);
        if artifacts.iter().any(|(key, _)| *key == k) {
            continue;
        }
        let art = if baseline {
            // Baselines only need the datasets.
            crate::harness::pipeline::prepare_data(&ctx.prepare_config(&cell.dataset, t)).map(|(train, test, _)| {
                Artifacts {
                    train,
                    test,
                    classifier: PathBuf::new(),
                    policy: PathBuf::new(),
                    sequences: PathBuf::new(),
                    report: Default::default(),
                }
            })
        } else {
            prepare(&ctx.prepare_config(&cell.dataset, t))
        };
        artifacts.push((k, art.map_err(|e| e.to_string())));
    }
    let mut inputs_cache: Option<(PathBuf, Option<PathBuf>, RunInputs)> = None;
    for cell in &cells {
        let baseline = cell.curriculum == "baseline";
        let t = if baseline { ctx.settings.steps } else { cell.steps };
        let art = artifacts
            .iter()
            .find(|(k, _)| k.0 == cell.dataset && k.1 == t && k.2 == !baseline)
            .map(|(_, a)| a.clone())
            .expect("artifacts prepared for every cell");
        for seed in 0..ctx.seeds as u64 {
            let mut result = CellResult {
                row: cell.row.clone(),
                dataset: cell.dataset.clone(),
                seed,
                final_test_acc: None,
                error: None,
                run_dir: PathBuf::new(),
            };
            match &art {
                Err(e) => result.error = Some(format!("artifacts: {e}")),
                Ok(a) => {
                    let cfg = ctx.experiment_config(cell, a, seed);
                    result.run_dir = cfg.output_dir.clone();
                    if let Ok(done) = RunReport::load(&cfg.output_dir) {
                        if done.config_hash == cfg.hash() {
                            log::info!("{} {} seed {seed}: reusing finished run", cell.dataset, cell.row);
                            result.final_test_acc = Some(done.final_test_acc);
                            bundle.results.push(result);
                            continue;
                        }
                    }
                    let key = (cfg.train_data.clone(), cfg.sequences.clone());
                    let inputs = match &inputs_cache {
                        Some((tr, sq, inp)) if *tr == key.0 && *sq == key.1 => Ok(inp.clone()),
                        _ => RunInputs::load(&cfg),
                    };
                    match inputs.and_then(|inp| {
                        let r = run_experiment::<f32>(&cfg, &inp, true).map(|(r, _)| r);
                        inputs_cache = Some((key.0.clone(), key.1.clone(), inp));
                        r
                    }) {
                        Ok(r) => result.final_test_acc = Some(r.final_test_acc),
                        Err(e) => result.error = Some(e.to_string()),
                    }
                }
            }
            log::info!("{} {} seed {seed}: {:?}", cell.dataset, cell.row, result.final_test_acc);
            bundle.results.push(result);
        }
    }
    bundle.write(&ctx.out_dir)?;
    Ok(bundle)
}
