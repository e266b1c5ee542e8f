use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{ClutteredDataset, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::image::{images_to_tensor, Image};
use crate::nnkit::checkpoint::{assign_params, load_tensors, save_params};
use crate::nnkit::{
    argmax, cross_entropy, relu, relu_backward, softmax_cross_entropy, ConvBlock, ConvGeometry, CrossEntropy,
    ImageClassifier, Linear, Param, Parameterized, Tensor,
};
use crate::scalar::Scalar;
use crate::sstn::TransformedDataset;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassifierSpec {
    /// One conv layer with 64 kernels, then two fully-connected layers.
    LeNet1,
    /// Two conv layers with 32 and 64 kernels, then two fully-connected layers.
    LeNet2,
}

impl ClassifierSpec {
    pub fn channels(self) -> &'static [usize] {
        match self {
            ClassifierSpec::LeNet1 => &[64],
            ClassifierSpec::LeNet2 => &[32, 64],
        }
    }
}

impl fmt::Display for ClassifierSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ClassifierSpec::LeNet1 => "lenet1",
            ClassifierSpec::LeNet2 => "lenet2",
        })
    }
}

impl FromStr for ClassifierSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lenet1" => Ok(ClassifierSpec::LeNet1),
            "lenet2" => Ok(ClassifierSpec::LeNet2),
            _ => Err(Error::Config(format!("unknown classifier `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierConfig {
    pub spec: ClassifierSpec,
    pub canvas_size: usize,
    pub kernel: usize,
    /// Stride of the first convolution.
    pub first_stride: usize,
    pub hidden: usize,
    pub classes: usize,
}

impl ClassifierConfig {
    pub fn new(spec: ClassifierSpec) -> Self {
        Self { spec, canvas_size: 80, kernel: 5, first_stride: 1, hidden: 256, classes: NUM_CLASSES }
    }

    /// First convolution strided by 2.
    pub fn desk(spec: ClassifierSpec) -> Self {
        Self { first_stride: 2, ..Self::new(spec) }
    }
}

/// Conv blocks, then `fc → ReLU → fc` to class logits.
#[derive(Clone, Debug)]
pub struct ClassifierNet<T> {
    config: ClassifierConfig,
    blocks: Vec<ConvBlock<T>>,
    fc1: Linear<T>,
    fc2: Linear<T>,
}

impl<T: Scalar> ClassifierNet<T> {
    pub fn new(config: ClassifierConfig, rng: &mut impl Rng) -> Result<Self> {
        if config.kernel == 0 || config.first_stride == 0 || config.hidden == 0 || config.classes < 2 {
            return Err(Error::Config(format!("invalid classifier config {config:?}")));
        }
        let mut blocks = Vec::new();
        let (mut in_ch, mut side) = (1, config.canvas_size);
        for (i, &out_ch) in config.spec.channels().iter().enumerate() {
            let stride = if i == 0 { config.first_stride } else { 1 };
            let geometry = ConvGeometry::new(stride, config.kernel / 2);
            let block = ConvBlock::new(in_ch, out_ch, config.kernel, geometry, rng);
            side = block.output_size(side)?;
            if side == 0 {
                return Err(Error::Config(format!("canvas {} too small for {}", config.canvas_size, config.spec)));
            }
            blocks.push(block);
            in_ch = out_ch;
        }
        let fc1 = Linear::new(in_ch * side * side, config.hidden, rng);
        let fc2 = Linear::new(config.hidden, config.classes, rng);
        Ok(Self { config, blocks, fc1, fc2 })
    }

    pub fn seeded(config: ClassifierConfig, seed: u64) -> Result<Self> {
        Self::new(config, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn config(&self) -> &ClassifierConfig {
        &self.config
    }

    fn features(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut f = x.clone();
        for b in &self.blocks {
            f = b.infer(&f)?;
        }
        let n = f.dim(0);
        f.reshape(&[n, self.fc1.inputs()])
    }
}

impl<T: Scalar> Parameterized<T> for ClassifierNet<T> {
    fn params(&self) -> Vec<(String, &Param<T>)> {
        let mut out = Vec::new();
        for (i, b) in self.blocks.iter().enumerate() {
            out.push((format!("conv{i}.weight"), &b.conv.weight));
            out.push((format!("conv{i}.bias"), &b.conv.bias));
        }
        out.push(("fc1.weight".into(), &self.fc1.weight));
        out.push(("fc1.bias".into(), &self.fc1.bias));
        out.push(("fc2.weight".into(), &self.fc2.weight));
        out.push(("fc2.bias".into(), &self.fc2.bias));
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut out = Vec::new();
        for b in &mut self.blocks {
            out.push(&mut b.conv.weight);
            out.push(&mut b.conv.bias);
        }
        out.push(&mut self.fc1.weight);
        out.push(&mut self.fc1.bias);
        out.push(&mut self.fc2.weight);
        out.push(&mut self.fc2.bias);
        out
    }
}

impl<T: Scalar> ImageClassifier<T> for ClassifierNet<T> {
    fn logits(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let h = relu(&self.fc1.forward(&self.features(x)?)?);
        self.fc2.forward(&h)
    }

    fn accumulate_gradients(&mut self, x: &Tensor<T>, labels: &[usize]) -> Result<CrossEntropy<T>> {
        let mut f = x.clone();
        let mut caches = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            let (out, cache) = b.forward(&f)?;
            caches.push(cache);
            f = out;
        }
        let shape = f.shape().to_vec();
        let flat = f.reshape(&[shape[0], self.fc1.inputs()])?;
        let h = relu(&self.fc1.forward(&flat)?);
        let logits = self.fc2.forward(&h)?;
        let ce = softmax_cross_entropy(&logits, labels)?;
        let gh = self.fc2.backward(&h, &ce.grad)?;
        let gh = relu_backward(&h, &gh)?;
        let gf = self.fc1.backward(&flat, &gh)?;
        let mut g = gf.reshape(&shape)?;
        for (i, (b, c)) in self.blocks.iter_mut().zip(&caches).enumerate().rev() {
            match b.backward(c, &g, i > 0)? {
                Some(gx) => g = gx,
                None => break,
            }
        }
        Ok(ce)
    }
}

/// Accuracy and mean cross-entropy.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub loss: f64,
}

const EVAL_BATCH: usize = 250;

/// Evaluates `images` in fixed-size chunks, in order.
pub fn evaluate_images<T: Scalar, C: ImageClassifier<T> + ?Sized>(
    model: &C,
    images: &[&Image<f32>],
    labels: &[usize],
) -> Result<Evaluation> {
    if images.len() != labels.len() {
        return Err(Error::Dimension(format!("{} images, {} labels", images.len(), labels.len())));
    }
    if images.is_empty() {
        return Ok(Evaluation::default());
    }
    let (mut correct, mut loss) = (0usize, 0.0);
    for (imgs, labs) in images.chunks(EVAL_BATCH).zip(labels.chunks(EVAL_BATCH)) {
        let side = imgs[0].width();
        let x = images_to_tensor::<T>(imgs, side)?;
        let logits = model.logits(&x)?;
        let c = logits.dim(1);
        for (row, &l) in logits.data().chunks(c).zip(labs) {
            correct += usize::from(argmax(row) == l);
            loss += cross_entropy(row, l)?.to_f64_lossy();
        }
    }
    let n = images.len() as f64;
    Ok(Evaluation { accuracy: correct as f64 / n, loss: loss / n })
}

pub fn evaluate<T: Scalar, C: ImageClassifier<T> + ?Sized>(model: &C, ds: &ClutteredDataset) -> Result<Evaluation> {
    let images: Vec<&Image<f32>> = ds.images.iter().collect();
    let labels: Vec<usize> = (0..ds.len()).map(|i| ds.label(i)).collect();
    evaluate_images(model, &images, &labels)
}

/// Evaluation on the prefix-`t` images of `ds`.
pub fn evaluate_prefix<T: Scalar, C: ImageClassifier<T> + ?Sized>(
    model: &C,
    ds: &ClutteredDataset,
    seqs: &TransformedDataset,
    t: usize,
) -> Result<Evaluation> {
    let imgs = seqs.materialize(ds, t)?;
    let refs: Vec<&Image<f32>> = imgs.iter().collect();
    let labels: Vec<usize> = (0..ds.len()).map(|i| ds.label(i)).collect();
    evaluate_images(model, &refs, &labels)
}

pub fn save_classifier<T: Scalar>(
    model: &ClassifierNet<T>,
    stem: &Path,
    extra: &BTreeMap<String, String>,
) -> Result<()> {
    let mut meta = extra.clone();
    meta.insert("kind".into(), "classifier".into());
    meta.insert(
        "classifier_config".into(),
        toml::to_string(model.config()).map_err(|e| Error::Metadata(e.to_string()))?,
    );
    save_params(model, stem, &meta)
}

pub fn load_classifier<T: Scalar>(stem: &Path) -> Result<ClassifierNet<T>> {
    let ckpt = load_tensors::<T>(stem)?;
    let text = ckpt
        .meta
        .get("classifier_config")
        .ok_or_else(|| Error::Metadata(format!("{} is not a classifier checkpoint", stem.display())))?;
    let config: ClassifierConfig = toml::from_str(text).map_err(|e| Error::Metadata(e.to_string()))?;
    let mut model = ClassifierNet::seeded(config, 0)?;
    assign_params(&mut model, ckpt.tensors)?;
    Ok(model)
}
