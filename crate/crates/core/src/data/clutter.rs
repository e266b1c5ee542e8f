//! Cluttered-canvas synthesis.
//!
//! Every output image gets one affine-transformed copy of its source item at a
//! random position, plus square crops of OTHER source items pasted at random
//! positions. Layers are combined with a pixel-wise max.
//!
//! Randomness: ChaCha8 seeded with `seed`, one stream per (split, index), so an
//! image depends only on `(seed, split, index)` and the source data.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{ClutteredDataset, RawDataset, Split};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::transform::sample_bilinear;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClutterConfig {
    pub canvas_size: usize,
    pub n_clutter_patches: usize,
    pub patch_size: usize,
    /// Content rotation is drawn from `[-deg, +deg]`.
    pub content_rotation_deg: f64,
    pub content_scale_min: f64,
    pub content_scale_max: f64,
    /// Put the content in the middle of the canvas instead of a random spot.
    #[serde(default)]
    pub center_content: bool,
    pub seed: u64,
}

impl Default for ClutterConfig {
    fn default() -> Self {
        Self {
            canvas_size: 80,
            n_clutter_patches: 6,
            patch_size: 8,
            content_rotation_deg: 15.0,
            content_scale_min: 0.8,
            content_scale_max: 1.2,
            center_content: false,
            seed: 0,
        }
    }
}

impl ClutterConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self { seed, ..Self::default() }
    }

    /// Side of the largest axis-aligned box a transformed `source_side` square can need.
    pub fn max_content_extent(&self, source_side: usize) -> usize {
        let r = self.content_rotation_deg.to_radians().min(std::f64::consts::FRAC_PI_4);
        content_extent(source_side, self.content_scale_max, r)
    }

    pub fn validate(&self, source_side: usize) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.content_scale_min > 0.0 && self.content_scale_min <= self.content_scale_max) {
            return bad(format!(
                "scale range [{}, {}] must be positive and ordered",
                self.content_scale_min, self.content_scale_max
            ));
        }
        if !(self.content_rotation_deg >= 0.0 && self.content_rotation_deg.is_finite()) {
            return bad(format!("rotation range {} must be finite and >= 0", self.content_rotation_deg));
        }
        if self.patch_size == 0 || self.patch_size >= self.canvas_size || self.patch_size > source_side {
            return bad(format!(
                "patch size {} must be in [1, min(canvas {} - 1, source {source_side})]",
                self.patch_size, self.canvas_size
            ));
        }
        let extent = self.max_content_extent(source_side);
        if extent > self.canvas_size {
            return bad(format!(
                "transformed content needs {extent} px but the canvas is {} px",
                self.canvas_size
            ));
        }
        Ok(())
    }
}

fn content_extent(side: usize, scale: f64, angle: f64) -> usize {
    let span = side as f64 * scale * (angle.cos().abs() + angle.sin().abs());
    (span - 1e-9).ceil().max(1.0) as usize
}

/// Per-image generator: ChaCha8 keyed by `seed`, stream `(split << 40) | index`.
pub(crate) fn image_rng(seed: u64, split: Split, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let split_bit: u64 = match split {
        Split::Train => 0,
        Split::Test => 1,
    };
    rng.set_stream((split_bit << 40) | index as u64);
    rng
}

fn paste_max(canvas: &mut Image<f32>, x0: usize, y0: usize, patch: &Image<f32>) {
    for y in 0..patch.height() {
        for x in 0..patch.width() {
            let v = patch.get(x, y);
            let cur = canvas.get(x0 + x, y0 + y);
            if v > cur {
                canvas.set(x0 + x, y0 + y, v);
            }
        }
    }
}

/// Renders `src` rotated by `angle` (radians, clockwise on screen) and scaled
/// by `scale` into the smallest square that contains it.
fn render_content(src: &Image<f64>, angle: f64, scale: f64) -> Image<f32> {
    let side = content_extent(src.width(), scale, angle);
    let (s, c) = angle.sin_cos();
    let half = side as f64 / 2.0;
    let (cx, cy) = (src.width() as f64 / 2.0 - 0.5, src.height() as f64 / 2.0 - 0.5);
    let mut out = Image::zeros(side, side);
    for v in 0..side {
        let dv = v as f64 + 0.5 - half;
        for u in 0..side {
            let du = u as f64 + 0.5 - half;
            let sx = (c * du + s * dv) / scale + cx;
            let sy = (-s * du + c * dv) / scale + cy;
            let val = sample_bilinear(src, sx, sy).clamp(0.0, 1.0);
            out.set(u, v, val as f32);
        }
    }
    out
}

fn synthesize_one(src: &RawDataset, cfg: &ClutterConfig, i: usize) -> Image<f32> {
    let mut rng = image_rng(cfg.seed, src.split, i);
    let n = cfg.canvas_size;
    let mut canvas = Image::zeros(n, n);

    for _ in 0..cfg.n_clutter_patches {
        let mut j = rng.random_range(0..src.len() - 1);
        if j >= i {
            j += 1;
        }
        let other = src.image(j);
        let cx = rng.random_range(0..=other.width() - cfg.patch_size);
        let cy = rng.random_range(0..=other.height() - cfg.patch_size);
        let mut crop = Image::zeros(cfg.patch_size, cfg.patch_size);
        for y in 0..cfg.patch_size {
            for x in 0..cfg.patch_size {
                crop.set(x, y, other.get(cx + x, cy + y));
            }
        }
        let px = rng.random_range(0..=n - cfg.patch_size);
        let py = rng.random_range(0..=n - cfg.patch_size);
        paste_max(&mut canvas, px, py, &crop);
    }

    let r = cfg.content_rotation_deg;
    let angle = if r > 0.0 { rng.random_range(-r..=r).to_radians() } else { 0.0 };
    let (lo, hi) = (cfg.content_scale_min, cfg.content_scale_max);
    let scale = if hi > lo { rng.random_range(lo..=hi) } else { lo };
    let content = render_content(&src.image(i).cast::<f64>(), angle, scale);
    let room = n - content.width();
    let (x0, y0) = if cfg.center_content {
        (room / 2, room / 2)
    } else {
        (rng.random_range(0..=room), rng.random_range(0..=room))
    };
    paste_max(&mut canvas, x0, y0, &content);
    canvas
}

/// Builds the cluttered counterpart of `src`; labels are copied in order.
pub fn synthesize_cluttered(src: &RawDataset, source: &str, cfg: &ClutterConfig) -> Result<ClutteredDataset> {
    if src.is_empty() {
        return Err(Error::Config("source dataset is empty".into()));
    }
    if src.rows != src.cols {
        return Err(Error::Config(format!("source images must be square, got {}×{}", src.rows, src.cols)));
    }
    cfg.validate(src.rows)?;
    if cfg.n_clutter_patches > 0 && src.len() < 2 {
        return Err(Error::Config("clutter needs at least two source images".into()));
    }
    let images = (0..src.len()).map(|i| synthesize_one(src, cfg, i)).collect();
    Ok(ClutteredDataset {
        source: source.to_string(),
        split: src.split,
        config: cfg.clone(),
        images,
        labels: src.labels().to_vec(),
    })
}
