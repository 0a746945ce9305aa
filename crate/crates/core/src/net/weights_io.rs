//! Binary weight files.
//!
//! Layout (little endian): magic `KLDN`, `u16` version, `u32` depth,
//! `u32` hidden channels, `u32` kernel, `u32` io channels, `u64` init seed,
//! then for each layer its `f32` weights `[out, in, k, k]` followed by its
//! `f32` biases `[out]`.

use std::path::Path;

use super::params::{ArchSpec, NetworkParams};
use crate::error::{Error, Result};

pub const WEIGHTS_MAGIC: [u8; 4] = *b"KLDN";
pub const WEIGHTS_VERSION: u16 = 1;

const HEADER_LEN: usize = 4 + 2 + 4 * 4 + 8;

pub fn params_to_bytes(params: &NetworkParams) -> Result<Vec<u8>> {
    params.check_shapes()?;
    let arch = params.arch;
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * params.parameter_count());
    out.extend_from_slice(&WEIGHTS_MAGIC);
    out.extend_from_slice(&WEIGHTS_VERSION.to_le_bytes());
    for field in [arch.depth, arch.hidden_channels, arch.kernel, arch.io_channels] {
        let v = u32::try_from(field).map_err(|_| Error::Domain(format!("{field} does not fit u32")))?;
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&params.init_seed.to_le_bytes());
    for layer in &params.layers {
        for &v in layer.weight.iter().chain(layer.bias.iter()) {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::format(
                self.path,
                format!("truncated weight file: needed {n} bytes at offset {}", self.pos),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f64> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()) as f64)
    }
}

/// Decode a weight file image; `path` is only used in error messages.
pub fn params_from_bytes(bytes: &[u8], path: &Path) -> Result<NetworkParams> {
    let mut r = Reader { bytes, pos: 0, path };
    if r.take(4)? != WEIGHTS_MAGIC {
        return Err(Error::format(path, "bad magic, not a weight file"));
    }
    let version = r.u16()?;
    if version != WEIGHTS_VERSION {
        return Err(Error::format(
            path,
            format!("unsupported weight file version {version} (expected {WEIGHTS_VERSION})"),
        ));
    }
    let arch = ArchSpec {
        depth: r.u32()?,
        hidden_channels: r.u32()?,
        kernel: r.u32()?,
        io_channels: r.u32()?,
    };
    arch.validate()
        .map_err(|e| Error::format(path, format!("invalid architecture header: {e}")))?;
    let mut params = NetworkParams::zeros(arch)?;
    params.init_seed = r.u64()?;
    for layer in &mut params.layers {
        for v in layer.weight.iter_mut().chain(layer.bias.iter_mut()) {
            *v = r.f32()?;
        }
    }
    if r.pos != bytes.len() {
        return Err(Error::format(
            path,
            format!("{} trailing bytes after the last layer", bytes.len() - r.pos),
        ));
    }
    if !params.is_finite() {
        return Err(Error::format(path, "non-finite parameter values"));
    }
    Ok(params)
}

pub fn save_params(params: &NetworkParams, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = params_to_bytes(params)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_params(path: impl AsRef<Path>) -> Result<NetworkParams> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    params_from_bytes(&bytes, path)
}

/// Load and require the stored architecture to equal `expected`.
pub fn load_params_expecting(path: impl AsRef<Path>, expected: &ArchSpec) -> Result<NetworkParams> {
    let params = load_params(path)?;
    if params.arch != *expected {
        return Err(Error::Shape(format!(
            "weight file holds {:?}, expected {:?}",
            params.arch, expected
        )));
    }
    Ok(params)
}
