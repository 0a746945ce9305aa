//! Fully developed speckle simulation and patch dataset construction.
//!
//! Speckle intensity for `L` looks follows `Gamma(shape = L, rate = L)`, so
//! the field has unit mean and variance `1 / L`. All randomness flows from a
//! ChaCha8 generator; dataset patches use independent per-patch streams
//! derived from `(seed, split, index)` so the result never depends on the
//! order patches are produced in.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::image::ImageGray;

/// Name of the generator recorded in dataset manifests.
pub const GENERATOR_NAME: &str = "chacha8-rand_chacha-0.9";

/// BT.601 luma weights.
pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeckleConfig {
    pub looks: f64,
    pub seed: u64,
}

impl SpeckleConfig {
    pub fn new(looks: f64, seed: u64) -> Result<Self> {
        let cfg = Self { looks, seed };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn single_look(seed: u64) -> Self {
        Self { looks: 1.0, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.looks > 0.0 && self.looks.is_finite()) {
            return Err(Error::Domain(format!(
                "number of looks must be positive, got {}",
                self.looks
            )));
        }
        Ok(())
    }

    /// Generator for an independent stream under this seed.
    pub fn rng_for_stream(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }
}

/// Gamma density `L^L n^(L-1) e^(-nL) / Gamma(L)` of the speckle intensity.
pub fn gamma_pdf(n: f64, looks: f64) -> Result<f64> {
    if !(n >= 0.0) || !n.is_finite() {
        return Err(Error::Domain(format!("speckle value must be >= 0, got {n}")));
    }
    if !(looks > 0.0) || !looks.is_finite() {
        return Err(Error::Domain(format!("looks must be > 0, got {looks}")));
    }
    if n == 0.0 {
        return Ok(if looks == 1.0 {
            1.0
        } else if looks < 1.0 {
            f64::INFINITY
        } else {
            0.0
        });
    }
    let log_density = looks * looks.ln() + (looks - 1.0) * n.ln() - n * looks - ln_gamma(looks);
    Ok(log_density.exp())
}

/// One draw from `Gamma(shape = looks, rate = looks)`.
///
/// Single look uses the exact inverse CDF `-ln U`; other shapes use the
/// Marsaglia-Tsang squeeze, with the `U^(1/a)` boost for shapes below one.
pub fn draw_speckle<R: Rng + ?Sized>(rng: &mut R, looks: f64) -> f64 {
    if looks == 1.0 {
        // random() is in [0, 1); 1 - u is in (0, 1] so the log is finite.
        let u: f64 = rng.random();
        return -(1.0 - u).ln();
    }
    let unit_rate = if looks < 1.0 {
        let u: f64 = rng.random();
        marsaglia_tsang(rng, looks + 1.0) * (1.0 - u).powf(1.0 / looks)
    } else {
        marsaglia_tsang(rng, looks)
    };
    unit_rate / looks
}

fn marsaglia_tsang<R: Rng + ?Sized>(rng: &mut R, shape: f64) -> f64 {
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / (9.0 * d).sqrt();
    loop {
        let x: f64 = rng.sample(StandardNormal);
        let t = 1.0 + c * x;
        if t <= 0.0 {
            continue;
        }
        let v = t * t * t;
        let u: f64 = rng.random();
        if u < 1.0 - 0.0331 * x.powi(4) {
            return d * v;
        }
        if u > 0.0 && u.ln() < 0.5 * x * x + d * (1.0 - v + v.ln()) {
            return d * v;
        }
    }
}

fn speckle_field<R: Rng + ?Sized>(rng: &mut R, height: usize, width: usize, looks: f64) -> ImageGray {
    ImageGray::from_fn(height, width, |_, _| draw_speckle(rng, looks))
}

/// I.i.d. speckle field drawn from the main stream of `cfg.seed`.
pub fn sample_speckle(height: usize, width: usize, cfg: &SpeckleConfig) -> Result<ImageGray> {
    if height == 0 || width == 0 {
        return Err(Error::Domain(format!(
            "speckle field dimensions must be positive, got {height}x{width}"
        )));
    }
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    Ok(speckle_field(&mut rng, height, width, cfg.looks))
}

/// `Y = N * X` elementwise.
pub fn apply_multiplicative(clean: &ImageGray, noise: &ImageGray) -> Result<ImageGray> {
    clean.ensure_same_dims(noise)?;
    let data = clean
        .data()
        .iter()
        .zip(noise.data())
        .map(|(x, n)| x * n)
        .collect();
    ImageGray::new(clean.height(), clean.width(), data)
}

/// Interleaved multi-channel image with channels in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelImage {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

/// BT.601 luma conversion of an RGB image.
pub fn to_grayscale(rgb: &ChannelImage) -> Result<ImageGray> {
    if rgb.channels != 3 {
        return Err(Error::Shape(format!(
            "grayscale conversion needs 3 channels, got {}",
            rgb.channels
        )));
    }
    if rgb.data.len() != rgb.height * rgb.width * 3 {
        return Err(Error::Shape(format!(
            "{}x{}x3 image needs {} values, got {}",
            rgb.height,
            rgb.width,
            rgb.height * rgb.width * 3,
            rgb.data.len()
        )));
    }
    let data = rgb
        .data
        .chunks_exact(3)
        .map(|px| {
            let luma: f64 = px.iter().zip(LUMA_WEIGHTS).map(|(v, w)| v * w).sum();
            luma.clamp(0.0, 1.0)
        })
        .collect();
    ImageGray::new(rgb.height, rgb.width, data)
}

/// A clean source image and its identifier.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedImage {
    pub id: String,
    pub image: ImageGray,
}

impl NamedImage {
    pub fn new(id: impl Into<String>, image: ImageGray) -> Self {
        Self {
            id: id.into(),
            image,
        }
    }
}

/// Aligned clean/noisy patches. `noise` is kept when the pair was simulated
/// in memory and is absent for pairs read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchPair {
    pub clean: ImageGray,
    pub noisy: ImageGray,
    pub noise: Option<ImageGray>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    fn stream_tag(self) -> u64 {
        match self {
            Split::Train => 0,
            Split::Val => 1,
            Split::Test => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

/// Stream id of the generator owning patch `index` of `split`.
pub fn patch_stream(split: Split, index: u64) -> u64 {
    (split.stream_tag() << 48) | index
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatchDataset {
    pub patch_size: usize,
    pub looks: f64,
    pub seed: u64,
    pub generator: String,
    pub train_sources: Vec<String>,
    pub val_sources: Vec<String>,
    pub train: Vec<PatchPair>,
    pub val: Vec<PatchPair>,
}

impl PatchDataset {
    pub fn pairs(&self, split: Split) -> &[PatchPair] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &[],
        }
    }
}

/// Which sources feed the validation split: the trailing share of the list,
/// proportional to the requested counts, keeping at least one per active split.
pub fn split_sources(source_count: usize, train_count: usize, val_count: usize) -> Result<usize> {
    if train_count == 0 && val_count == 0 {
        return Err(Error::Domain("dataset needs at least one patch".into()));
    }
    if source_count == 0 {
        return Err(Error::InsufficientSources("no source images".into()));
    }
    if val_count == 0 {
        return Ok(0);
    }
    if train_count == 0 {
        return Ok(source_count);
    }
    if source_count < 2 {
        return Err(Error::InsufficientSources(
            "disjoint train and validation splits need at least two source images".into(),
        ));
    }
    let share = val_count as f64 / (train_count + val_count) as f64;
    let n_val = ((source_count as f64 * share).round() as usize).clamp(1, source_count - 1);
    Ok(n_val)
}

/// Random-crop patch pairs with fresh speckle, split at the source level.
pub fn build_dataset(
    sources: &[NamedImage],
    patch_size: usize,
    train_count: usize,
    val_count: usize,
    cfg: &SpeckleConfig,
) -> Result<PatchDataset> {
    cfg.validate()?;
    if patch_size == 0 {
        return Err(Error::Domain("patch size must be positive".into()));
    }
    for src in sources {
        if src.image.height() < patch_size || src.image.width() < patch_size {
            return Err(Error::InsufficientSources(format!(
                "source '{}' is {}x{}, smaller than patch size {patch_size}",
                src.id,
                src.image.height(),
                src.image.width()
            )));
        }
    }
    let n_val = split_sources(sources.len(), train_count, val_count)?;
    let (train_src, val_src) = sources.split_at(sources.len() - n_val);

    let train = cut_patches(train_src, Split::Train, train_count, patch_size, cfg)?;
    let val = cut_patches(val_src, Split::Val, val_count, patch_size, cfg)?;

    Ok(PatchDataset {
        patch_size,
        looks: cfg.looks,
        seed: cfg.seed,
        generator: GENERATOR_NAME.to_string(),
        train_sources: train_src.iter().map(|s| s.id.clone()).collect(),
        val_sources: val_src.iter().map(|s| s.id.clone()).collect(),
        train,
        val,
    })
}

fn cut_patches(
    sources: &[NamedImage],
    split: Split,
    count: usize,
    patch_size: usize,
    cfg: &SpeckleConfig,
) -> Result<Vec<PatchPair>> {
    (0..count)
        .map(|index| {
            let mut rng = cfg.rng_for_stream(patch_stream(split, index as u64));
            let src = &sources[rng.random_range(0..sources.len())].image;
            let row = rng.random_range(0..=src.height() - patch_size);
            let col = rng.random_range(0..=src.width() - patch_size);
            let clean = src.crop(row, col, patch_size, patch_size)?;
            let noise = speckle_field(&mut rng, patch_size, patch_size, cfg.looks);
            let noisy = apply_multiplicative(&clean, &noise)?;
            Ok(PatchPair {
                clean,
                noisy,
                noise: Some(noise),
            })
        })
        .collect()
}

/// Speckle a whole image on stream `(Test, index)` of `cfg.seed`.
pub fn simulate_observation(
    clean: &ImageGray,
    index: u64,
    cfg: &SpeckleConfig,
) -> Result<(ImageGray, ImageGray)> {
    cfg.validate()?;
    let mut rng = cfg.rng_for_stream(patch_stream(Split::Test, index));
    let noise = speckle_field(&mut rng, clean.height(), clean.width(), cfg.looks);
    let noisy = apply_multiplicative(clean, &noise)?;
    Ok((noisy, noise))
}
