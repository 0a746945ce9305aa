use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArchSpec {
    pub depth: usize,
    pub hidden_channels: usize,
    pub kernel: usize,
    pub io_channels: usize,
}

impl Default for ArchSpec {
    fn default() -> Self {
        Self {
            depth: 10,
            hidden_channels: 64,
            kernel: 3,
            io_channels: 1,
        }
    }
}

impl ArchSpec {
    pub fn validate(&self) -> Result<()> {
        if self.depth < 2 {
            return Err(Error::Domain(format!("depth must be >= 2, got {}", self.depth)));
        }
        if self.hidden_channels == 0 {
            return Err(Error::Domain("hidden_channels must be positive".into()));
        }
        if self.kernel % 2 == 0 {
            return Err(Error::Domain(format!("kernel must be odd, got {}", self.kernel)));
        }
        if self.io_channels != 1 {
            return Err(Error::Domain(format!(
                "only single-channel images are supported, got io_channels = {}",
                self.io_channels
            )));
        }
        Ok(())
    }

    /// `(in_channels, out_channels)` of layer `index`.
    pub fn layer_channels(&self, index: usize) -> (usize, usize) {
        let inp = if index == 0 { self.io_channels } else { self.hidden_channels };
        let out = if index + 1 == self.depth { self.io_channels } else { self.hidden_channels };
        (inp, out)
    }

    /// Width of the border band where zero padding affects the output.
    pub fn receptive_margin(&self) -> usize {
        self.depth * (self.kernel - 1) / 2
    }
}

/// Weights `[out, in * k * k]` (row-major over `in, ky, kx`) and biases `[out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl LayerParams {
    pub fn zeros(in_ch: usize, out_ch: usize, kernel: usize) -> Self {
        Self {
            weight: Array2::zeros((out_ch, in_ch * kernel * kernel)),
            bias: Array1::zeros(out_ch),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            weight: Array2::zeros(self.weight.raw_dim()),
            bias: Array1::zeros(self.bias.raw_dim()),
        }
    }

    pub fn same_shape(&self, other: &LayerParams) -> bool {
        self.weight.dim() == other.weight.dim() && self.bias.dim() == other.bias.dim()
    }

    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.weight.iter().chain(self.bias.iter())
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.weight.iter_mut().chain(self.bias.iter_mut())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub arch: ArchSpec,
    pub init_seed: u64,
    pub layers: Vec<LayerParams>,
}

impl NetworkParams {
    pub fn zeros(arch: ArchSpec) -> Result<Self> {
        arch.validate()?;
        let layers = (0..arch.depth)
            .map(|l| {
                let (i, o) = arch.layer_channels(l);
                LayerParams::zeros(i, o, arch.kernel)
            })
            .collect();
        Ok(Self {
            arch,
            init_seed: 0,
            layers,
        })
    }

    /// Weights that pass a nonnegative image through unchanged: channel 0
    /// carries the input via centre taps, everything else is zero.
    pub fn identity(arch: ArchSpec) -> Result<Self> {
        let mut params = Self::zeros(arch)?;
        let centre = (arch.kernel * arch.kernel) / 2;
        for layer in &mut params.layers {
            layer.weight[[0, centre]] = 1.0;
        }
        Ok(params)
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(|l| l.values())
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers.iter_mut().flat_map(|l| l.values_mut())
    }

    pub fn is_finite(&self) -> bool {
        self.values().all(|v| v.is_finite())
    }

    /// Round every parameter to the nearest `f32`, the on-disk precision.
    pub fn round_to_f32(&mut self) {
        for v in self.values_mut() {
            *v = *v as f32 as f64;
        }
    }

    pub(crate) fn check_shapes(&self) -> Result<()> {
        self.arch.validate()?;
        if self.layers.len() != self.arch.depth {
            return Err(Error::Shape(format!(
                "architecture has {} layers, parameters have {}",
                self.arch.depth,
                self.layers.len()
            )));
        }
        for (l, layer) in self.layers.iter().enumerate() {
            let (i, o) = self.arch.layer_channels(l);
            let k2 = self.arch.kernel * self.arch.kernel;
            if layer.weight.dim() != (o, i * k2) || layer.bias.len() != o {
                return Err(Error::Shape(format!(
                    "layer {l}: expected weight {:?} and bias {o}, found {:?} and {}",
                    (o, i * k2),
                    layer.weight.dim(),
                    layer.bias.len()
                )));
            }
        }
        Ok(())
    }
}

/// He-normal weights (variance `2 / fan_in`) and zero biases.
pub fn init_params(arch: &ArchSpec, seed: u64) -> Result<NetworkParams> {
    let mut params = NetworkParams::zeros(*arch)?;
    params.init_seed = seed;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for layer in &mut params.layers {
        let fan_in = layer.weight.ncols() as f64;
        let std = (2.0 / fan_in).sqrt();
        for w in layer.weight.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *w = (z * std) as f32 as f64;
        }
    }
    Ok(params)
}

/// Gradients with the same layout as [`NetworkParams::layers`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads {
    pub layers: Vec<LayerParams>,
}

impl ParamGrads {
    pub fn zeros_like(params: &NetworkParams) -> Self {
        Self {
            layers: params.layers.iter().map(LayerParams::zeros_like).collect(),
        }
    }

    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(|l| l.values())
    }

    pub fn add_assign(&mut self, other: &ParamGrads) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weight += &b.weight;
            a.bias += &b.bias;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for layer in &mut self.layers {
            layer.weight *= factor;
            layer.bias *= factor;
        }
    }
}
