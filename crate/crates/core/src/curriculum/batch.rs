use std::collections::VecDeque;
use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::curriculum::plan::CurriculumPlan;
use crate::data::{load_dataset, save_dataset, ClutteredDataset};
use crate::error::{Error, Result};
use crate::image::{images_to_tensor, Image};
use crate::nnkit::Tensor;
use crate::scalar::Scalar;
use crate::sstn::TransformedDataset;

/// One batch slot: a training index and the prefix level it is shown at.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct BatchItem {
    pub index: usize,
    /// 0 for the original image.
    pub prefix: usize,
}

impl BatchItem {
    pub fn is_easy(&self) -> bool {
        self.prefix > 0
    }
}

/// Splits a fresh permutation of `n` indices into batches and marks each
/// batch's easy slots. The first slots of a batch (in permutation order) are
/// the easy ones; the batch is then shuffled.
pub fn plan_epoch(plan: &CurriculumPlan, epoch: usize, n: usize, rng: &mut impl Rng) -> Vec<Vec<BatchItem>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let level = plan.easy_level(epoch);
    order
        .chunks(plan.batch_size)
        .map(|chunk| {
            let easy = plan.easy_count(epoch, chunk.len());
            let mut items: Vec<BatchItem> = chunk
                .iter()
                .enumerate()
                .map(|(j, &index)| BatchItem { index, prefix: if j < easy { level } else { 0 } })
                .collect();
            items.shuffle(rng);
            items
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct Batch {
    pub items: Vec<BatchItem>,
    pub images: Vec<Image<f32>>,
    pub labels: Vec<usize>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn easy_count(&self) -> usize {
        self.items.iter().filter(|it| it.is_easy()).count()
    }

    /// `N×1×S×S` tensor of the batch images.
    pub fn tensor<T: Scalar>(&self) -> Result<Tensor<T>> {
        let side = self.images.first().map_or(0, |im| im.width());
        let refs: Vec<&Image<f32>> = self.images.iter().collect();
        images_to_tensor(&refs, side)
    }
}

/// Source of prefix-level images: originals plus whole levels materialized
/// from the action sequences, keeping the most recently used `capacity`
/// levels in memory and, optionally, every level on disk.
pub struct PrefixLevels<'a> {
    original: &'a ClutteredDataset,
    transformed: Option<&'a TransformedDataset>,
    levels: VecDeque<(usize, Vec<Image<f32>>)>,
    capacity: usize,
    disk: Option<PathBuf>,
}

impl<'a> PrefixLevels<'a> {
    pub fn new(original: &'a ClutteredDataset, transformed: Option<&'a TransformedDataset>) -> Result<Self> {
        if let Some(tr) = transformed {
            tr.check_aligned(original)?;
        }
        Ok(Self { original, transformed, levels: VecDeque::new(), capacity: 2, disk: None })
    }

    pub fn with_capacity(mut self, capacity: usize) -> Self {
        self.capacity = capacity.max(1);
        self
    }

    /// Levels are read from / written to `dir/level_<t>` when set.
    pub fn with_disk_cache(mut self, dir: PathBuf) -> Self {
        self.disk = Some(dir);
        self
    }

    pub fn original(&self) -> &ClutteredDataset {
        self.original
    }

    pub fn max_level(&self) -> usize {
        self.transformed.map_or(0, |t| t.steps)
    }

    fn build_level(&self, t: usize) -> Result<Vec<Image<f32>>> {
        let tr = self
            .transformed
            .ok_or_else(|| Error::Composition(format!("prefix {t} requested without a transformed dataset")))?;
        let Some(dir) = &self.disk else { return tr.materialize(self.original, t) };
        let stem = dir.join(format!("level_{t}"));
        if stem.with_extension("meta").exists() {
            let ds = load_dataset(&stem)?;
            if ds.labels == self.original.labels && ds.len() == self.original.len() {
                return Ok(ds.images);
            }
            log::warn!("ignoring stale level cache {}", stem.display());
        }
        let ds = tr.level_dataset(self.original, t)?;
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        save_dataset(&ds, &stem)?;
        Ok(ds.images)
    }

    /// Makes sure level `t` is resident.
    pub fn ensure(&mut self, t: usize) -> Result<()> {
        if t == 0 || self.levels.iter().any(|(l, _)| *l == t) {
            return Ok(());
        }
        let images = self.build_level(t)?;
        while self.levels.len() >= self.capacity {
            self.levels.pop_front();
        }
        self.levels.push_back((t, images));
        Ok(())
    }

    /// Writes the given levels to the disk cache ahead of use.
    pub fn prefetch_to_disk(&self, levels: &[usize]) -> Result<()> {
        if self.disk.is_none() {
            return Ok(());
        }
        for &t in levels.iter().filter(|&&t| t > 0) {
            self.build_level(t)?;
        }
        Ok(())
    }

    pub fn image(&mut self, index: usize, t: usize) -> Result<&Image<f32>> {
        if index >= self.original.len() {
            return Err(Error::Composition(format!("index {index} outside {} items", self.original.len())));
        }
        if t == 0 {
            return Ok(self.original.image(index));
        }
        self.ensure(t)?;
        let (_, imgs) = self.levels.iter().find(|(l, _)| *l == t).expect("level resident after ensure");
        Ok(&imgs[index])
    }
}

/// Materializes the images and labels of `items`.
pub fn compose_batch(items: &[BatchItem], levels: &mut PrefixLevels<'_>) -> Result<Batch> {
    let mut images = Vec::with_capacity(items.len());
    let mut labels = Vec::with_capacity(items.len());
    for it in items {
        images.push(levels.image(it.index, it.prefix)?.clone());
        labels.push(levels.original().label(it.index));
    }
    Ok(Batch { items: items.to_vec(), images, labels })
}
