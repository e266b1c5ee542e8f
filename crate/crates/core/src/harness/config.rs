use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::blob;
use crate::curriculum::{CurriculumKind, CurriculumPlan, DEFAULT_BATCH_SIZE};
use crate::error::{Error, Result};
use crate::harness::classifier::{ClassifierConfig, ClassifierSpec};

pub const CONFIG_VERSION: u32 = 1;

/// One classifier training run. Stored as TOML; relative paths are resolved
/// against the directory of the file they were read from.
///
/// ```toml
/// version = 1
/// name = "mnist-incremental"
/// dataset = "mnist"
/// train_data = "data/mnist/train"     # cluttered dataset stem
/// test_data = "data/mnist/test"
/// sequences = "data/mnist/seq-T10"    # required unless curriculum = "baseline"
/// curriculum = "incremental:linear:1" # baseline | mixed:k | dynamic:rate | incremental:<scheduler>
/// batch_size = 64
/// lr = 1e-4
/// epochs = 15
/// seed = 0
/// augment = false
/// patience = 10
/// output_dir = "runs/mnist-incremental"
///
/// [classifier]
/// spec = "lenet1"
/// canvas_size = 80
/// kernel = 5
/// first_stride = 2
/// hidden = 256
/// classes = 10
/// ```
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub version: u32,
    pub name: String,
    pub dataset: String,
    pub train_data: PathBuf,
    pub test_data: PathBuf,
    /// Use only the first `n` training items.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_limit: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_limit: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sequences: Option<PathBuf>,
    pub curriculum: String,
    /// T; defaults to the length of the stored sequences.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    pub batch_size: usize,
    pub lr: f64,
    pub epochs: usize,
    pub seed: u64,
    #[serde(default)]
    pub augment: bool,
    /// Stop after this many epochs without a new best test accuracy, once the
    /// curriculum has reached the original data.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub patience: Option<usize>,
    /// Directory for materialized prefix levels.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level_cache: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub classifier: ClassifierConfig,
}

impl ExperimentConfig {
    pub fn new(name: &str, dataset: &str, train_data: PathBuf, test_data: PathBuf, output_dir: PathBuf) -> Self {
        Self {
            version: CONFIG_VERSION,
            name: name.into(),
            dataset: dataset.into(),
            train_data,
            test_data,
            train_limit: None,
            test_limit: None,
            sequences: None,
            curriculum: "baseline".into(),
            steps: None,
            batch_size: DEFAULT_BATCH_SIZE,
            lr: 1e-4,
            epochs: 100,
            seed: 0,
            augment: false,
            patience: Some(10),
            level_cache: None,
            output_dir,
            classifier: ClassifierConfig::new(ClassifierSpec::LeNet1),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let table: toml::Table = text.parse().map_err(|e| Error::Config(format!("config: {e}")))?;
        let version = table
            .get("version")
            .and_then(|v| v.as_integer())
            .ok_or_else(|| Error::Config("config has no version".into()))?;
        blob::check_version(u32::try_from(version).unwrap_or(u32::MAX), CONFIG_VERSION)?;
        let cfg: Self = table.try_into().map_err(|e| Error::Config(format!("config: {e}")))?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.train_data);
        fix(&mut self.test_data);
        fix(&mut self.output_dir);
        if let Some(p) = self.sequences.as_mut() {
            fix(p);
        }
        if let Some(p) = self.level_cache.as_mut() {
            fix(p);
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        blob::write_atomic(path, self.to_toml()?.as_bytes())
    }

    pub fn curriculum_kind(&self) -> Result<CurriculumKind> {
        self.curriculum.parse()
    }

    /// The plan, given the length of the available sequences (0 if none).
    pub fn plan(&self, stored_steps: usize) -> Result<CurriculumPlan> {
        let kind = self.curriculum_kind()?;
        let steps = self.steps.unwrap_or(stored_steps);
        if steps > stored_steps && !matches!(kind, CurriculumKind::Baseline) {
            return Err(Error::Config(format!("T = {steps} but the sequences hold {stored_steps} steps")));
        }
        let steps = if matches!(kind, CurriculumKind::Baseline) { 0 } else { steps };
        CurriculumPlan::new(kind, steps, self.batch_size, self.epochs)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::Version { found: self.version, supported: CONFIG_VERSION });
        }
        if self.batch_size == 0 || !(self.lr > 0.0) {
            return Err(Error::Config("batch size and learning rate must be positive".into()));
        }
        let kind = self.curriculum_kind()?;
        if !matches!(kind, CurriculumKind::Baseline) && self.sequences.is_none() {
            return Err(Error::Config(format!("curriculum `{}` needs a sequences file", self.curriculum)));
        }
        for p in [&self.train_data, &self.test_data].into_iter().chain(self.sequences.as_ref()) {
            let (_, meta) = blob::stem_paths(p);
            if !meta.exists() {
                return Err(Error::Config(format!("missing artifact {}", meta.display())));
            }
        }
        Ok(())
    }

    /// Hash of everything that influences the metrics (the output and cache
    /// directories are excluded).
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        c.level_cache = None;
        let text = c.to_toml().unwrap_or_default();
        blob::sha256_hex(text.as_bytes())[..16].to_string()
    }
}
