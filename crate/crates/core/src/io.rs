//! Image files, raw float tensors and on-disk patch datasets.
//!
//! Tensor files hold a header of three little-endian `u64`
//! (`count, height, width`) followed by `count * height * width`
//! little-endian `f32` values. A dataset directory holds `dataset.toml`
//! plus `{train,val}_{X,Y}.f32`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{DynamicImage, GrayImage, ImageEncoder};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::ImageGray;
use crate::speckle_sim::{to_grayscale, ChannelImage, PatchDataset, PatchPair, Split};

pub const DATASET_MANIFEST: &str = "dataset.toml";
pub const TENSOR_HEADER_LEN: usize = 24;

/// Write `images` (all the same size) as one tensor file.
pub fn write_tensor(path: impl AsRef<Path>, images: &[&ImageGray], height: usize, width: usize) -> Result<()> {
    let path = path.as_ref();
    let mut bytes = Vec::with_capacity(TENSOR_HEADER_LEN + 4 * images.len() * height * width);
    for v in [images.len(), height, width] {
        bytes.extend_from_slice(&(v as u64).to_le_bytes());
    }
    for img in images {
        if img.dims() != (height, width) {
            return Err(Error::DimensionMismatch {
                expected: (height, width),
                found: img.dims(),
            });
        }
        for &v in img.data() {
            bytes.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Vec<ImageGray>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < TENSOR_HEADER_LEN {
        return Err(Error::format(path, "tensor file shorter than its header"));
    }
    let field = |i: usize| u64::from_le_bytes(bytes[8 * i..8 * i + 8].try_into().unwrap()) as usize;
    let (count, height, width) = (field(0), field(1), field(2));
    let plane = height
        .checked_mul(width)
        .ok_or_else(|| Error::format(path, "tensor shape overflows"))?;
    let expected = count
        .checked_mul(plane)
        .and_then(|n| n.checked_mul(4))
        .and_then(|n| n.checked_add(TENSOR_HEADER_LEN))
        .ok_or_else(|| Error::format(path, "tensor shape overflows"))?;
    if bytes.len() != expected {
        return Err(Error::format(
            path,
            format!(
                "shape [{count}, {height}, {width}] needs {expected} bytes, file has {}",
                bytes.len()
            ),
        ));
    }
    if count > 0 && plane == 0 {
        return Err(Error::format(path, "tensor has empty images"));
    }
    let values: Vec<f64> = bytes[TENSOR_HEADER_LEN..]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
        .collect();
    values
        .chunks(plane.max(1))
        .take(count)
        .map(|chunk| {
            ImageGray::new(height, width, chunk.to_vec()).map_err(|e| Error::format(path, e.to_string()))
        })
        .collect()
}

fn extension(path: &Path) -> String {
    path.extension()
        .and_then(|e| e.to_str())
        .unwrap_or_default()
        .to_ascii_lowercase()
}

/// Load a grayscale image. `.f32` files are single-image tensors; 8- and
/// 16-bit PGM/PNG are scaled to `[0, 1]`, colour inputs go through BT.601 luma.
pub fn read_image(path: impl AsRef<Path>) -> Result<ImageGray> {
    let path = path.as_ref();
    if extension(path) == "f32" {
        let mut images = read_tensor(path)?;
        if images.len() != 1 {
            return Err(Error::format(path, format!("expected one image, found {}", images.len())));
        }
        return Ok(images.remove(0));
    }
    let decoded = image::open(path).map_err(|e| Error::format(path, e.to_string()))?;
    let (w, h) = (decoded.width() as usize, decoded.height() as usize);
    let gray = match decoded {
        DynamicImage::ImageLuma8(img) => ImageGray::new(h, w, img.pixels().map(|p| p.0[0] as f64 / 255.0).collect()),
        DynamicImage::ImageLuma16(img) => {
            ImageGray::new(h, w, img.pixels().map(|p| p.0[0] as f64 / 65535.0).collect())
        }
        DynamicImage::ImageLumaA8(img) => ImageGray::new(h, w, img.pixels().map(|p| p.0[0] as f64 / 255.0).collect()),
        other => {
            let rgb = other.to_rgb32f();
            to_grayscale(&ChannelImage {
                height: h,
                width: w,
                channels: 3,
                data: rgb.into_raw().into_iter().map(f64::from).collect(),
            })
        }
    };
    gray.map_err(|e| Error::format(path, e.to_string()))
}

/// Save an image; `.f32` keeps full precision, `.pgm` (binary P5) and
/// `.png` quantize `[0, 1]` to 8 bits.
pub fn write_image(path: impl AsRef<Path>, img: &ImageGray) -> Result<()> {
    let path = path.as_ref();
    let ext = extension(path);
    if ext == "f32" {
        return write_tensor(path, &[img], img.height(), img.width());
    }
    let (w, h) = (img.width() as u32, img.height() as u32);
    let pixels: Vec<u8> = img
        .data()
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    match ext.as_str() {
        "pgm" => {
            let file = File::create(path).map_err(|e| Error::io(path, e))?;
            let mut out = BufWriter::new(file);
            PnmEncoder::new(&mut out)
                .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
                .write_image(&pixels, w, h, image::ExtendedColorType::L8)
                .map_err(|e| Error::format(path, e.to_string()))?;
            out.flush().map_err(|e| Error::io(path, e))
        }
        "png" => GrayImage::from_raw(w, h, pixels)
            .expect("buffer matches dimensions")
            .save(path)
            .map_err(|e| Error::format(path, e.to_string())),
        _ => Err(Error::format(path, "unsupported image extension (use .pgm, .png or .f32)")),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub generator: String,
    pub seed: u64,
    pub looks: f64,
    pub patch_size: usize,
    pub train_count: usize,
    pub val_count: usize,
    pub train_sources: Vec<String>,
    pub val_sources: Vec<String>,
}

impl DatasetManifest {
    pub fn of(ds: &PatchDataset) -> Self {
        Self {
            generator: ds.generator.clone(),
            seed: ds.seed,
            looks: ds.looks,
            patch_size: ds.patch_size,
            train_count: ds.train.len(),
            val_count: ds.val.len(),
            train_sources: ds.train_sources.clone(),
            val_sources: ds.val_sources.clone(),
        }
    }
}

pub fn tensor_file_name(split: Split, role: char) -> String {
    format!("{}_{role}.f32", split.name())
}

/// Write the dataset manifest and its four tensor files into `dir`.
pub fn write_dataset(ds: &PatchDataset, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let manifest = toml::to_string(&DatasetManifest::of(ds))
        .map_err(|e| Error::format(dir, format!("manifest encoding failed: {e}")))?;
    let manifest_path = dir.join(DATASET_MANIFEST);
    std::fs::write(&manifest_path, manifest).map_err(|e| Error::io(&manifest_path, e))?;
    let p = ds.patch_size;
    for split in [Split::Train, Split::Val] {
        let pairs = ds.pairs(split);
        let clean: Vec<_> = pairs.iter().map(|pp| &pp.clean).collect();
        let noisy: Vec<_> = pairs.iter().map(|pp| &pp.noisy).collect();
        write_tensor(dir.join(tensor_file_name(split, 'X')), &clean, p, p)?;
        write_tensor(dir.join(tensor_file_name(split, 'Y')), &noisy, p, p)?;
    }
    Ok(())
}

pub fn read_dataset(dir: impl AsRef<Path>) -> Result<PatchDataset> {
    let dir = dir.as_ref();
    let manifest_path = dir.join(DATASET_MANIFEST);
    let text = std::fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let m: DatasetManifest = toml::from_str(&text).map_err(|e| Error::format(&manifest_path, e.to_string()))?;

    let load = |split: Split, count: usize| -> Result<Vec<PatchPair>> {
        let xs_path = dir.join(tensor_file_name(split, 'X'));
        let ys_path = dir.join(tensor_file_name(split, 'Y'));
        let xs = read_tensor(&xs_path)?;
        let ys = read_tensor(&ys_path)?;
        for (path, imgs) in [(&xs_path, &xs), (&ys_path, &ys)] {
            if imgs.len() != count {
                return Err(Error::format(path, format!("manifest declares {count} patches, file has {}", imgs.len())));
            }
            if let Some(img) = imgs.iter().find(|i| i.dims() != (m.patch_size, m.patch_size)) {
                return Err(Error::format(path, format!("patch is {:?}, manifest says {}", img.dims(), m.patch_size)));
            }
        }
        Ok(xs
            .into_iter()
            .zip(ys)
            .map(|(clean, noisy)| PatchPair {
                clean,
                noisy,
                noise: None,
            })
            .collect())
    };
    Ok(PatchDataset {
        patch_size: m.patch_size,
        looks: m.looks,
        seed: m.seed,
        generator: m.generator.clone(),
        train: load(Split::Train, m.train_count)?,
        val: load(Split::Val, m.val_count)?,
        train_sources: m.train_sources,
        val_sources: m.val_sources,
    })
}
