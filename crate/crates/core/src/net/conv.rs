use ndarray::{Array2, Axis};

use super::params::{NetworkParams, ParamGrads, LayerParams};
use crate::error::{Error, Result};
use crate::image::ImageGray;

/// Activations retained by [`forward`] for [`backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    height: usize,
    width: usize,
    /// Unfolded input of every layer, `[in * k * k, H * W]`.
    columns: Vec<Array2<f64>>,
    /// Rectified output of every hidden layer, `[hidden, H * W]`.
    hidden: Vec<Array2<f64>>,
}

impl ForwardCache {
    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    /// Which hidden units are active, in layer/channel/pixel order.
    pub fn relu_pattern(&self) -> Vec<bool> {
        self.hidden
            .iter()
            .flat_map(|a| a.iter().map(|&v| v > 0.0))
            .collect()
    }
}

/// Unfold `input` (`[channels, H * W]`) into `[channels * k * k, H * W]`
/// with zero padding of `k / 2`.
fn im2col(input: &Array2<f64>, height: usize, width: usize, kernel: usize) -> Array2<f64> {
    let channels = input.nrows();
    let pad = kernel / 2;
    let plane = height * width;
    let mut cols = Array2::<f64>::zeros((channels * kernel * kernel, plane));
    for c in 0..channels {
        let src = input.row(c);
        let src = src.as_slice().expect("activation rows are contiguous");
        for ky in 0..kernel {
            for kx in 0..kernel {
                let row = (c * kernel + ky) * kernel + kx;
                let mut dst = cols.row_mut(row);
                let dst = dst.as_slice_mut().expect("column rows are contiguous");
                // Output column range whose source column c + kx - pad is in bounds.
                let x_lo = pad.saturating_sub(kx);
                let x_hi = (width + pad).saturating_sub(kx).min(width);
                if x_lo >= x_hi {
                    continue;
                }
                for y in 0..height {
                    let sy = y + ky;
                    if sy < pad || sy - pad >= height {
                        continue;
                    }
                    let sy = sy - pad;
                    let sx_lo = x_lo + kx - pad;
                    let n = x_hi - x_lo;
                    dst[y * width + x_lo..y * width + x_hi]
                        .copy_from_slice(&src[sy * width + sx_lo..sy * width + sx_lo + n]);
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: fold column gradients back onto the input grid.
fn col2im(cols: &Array2<f64>, channels: usize, height: usize, width: usize, kernel: usize) -> Array2<f64> {
    let pad = kernel / 2;
    let mut out = Array2::<f64>::zeros((channels, height * width));
    for c in 0..channels {
        let mut dst = out.row_mut(c);
        let dst = dst.as_slice_mut().expect("activation rows are contiguous");
        for ky in 0..kernel {
            for kx in 0..kernel {
                let row = (c * kernel + ky) * kernel + kx;
                let src = cols.row(row);
                let src = src.as_slice().expect("column rows are contiguous");
                let x_lo = pad.saturating_sub(kx);
                let x_hi = (width + pad).saturating_sub(kx).min(width);
                if x_lo >= x_hi {
                    continue;
                }
                for y in 0..height {
                    let sy = y + ky;
                    if sy < pad || sy - pad >= height {
                        continue;
                    }
                    let sy = sy - pad;
                    let sx_lo = x_lo + kx - pad;
                    let d = &mut dst[sy * width + sx_lo..sy * width + sx_lo + (x_hi - x_lo)];
                    for (a, b) in d.iter_mut().zip(&src[y * width + x_lo..y * width + x_hi]) {
                        *a += b;
                    }
                }
            }
        }
    }
    out
}

fn affine(layer: &LayerParams, cols: &Array2<f64>) -> Array2<f64> {
    let mut z = layer.weight.dot(cols);
    for (mut row, &b) in z.axis_iter_mut(Axis(0)).zip(layer.bias.iter()) {
        row += b;
    }
    z
}

/// Run the network on `input`; the output has the same size.
pub fn forward(params: &NetworkParams, input: &ImageGray) -> Result<(ImageGray, ForwardCache)> {
    params.check_shapes()?;
    let kernel = params.arch.kernel;
    input.ensure_at_least(kernel)?;
    let (height, width) = input.dims();

    let mut act = Array2::from_shape_vec((1, height * width), input.data().to_vec())
        .expect("single-channel plane");
    let depth = params.layers.len();
    let mut columns = Vec::with_capacity(depth);
    let mut hidden = Vec::with_capacity(depth - 1);
    for (l, layer) in params.layers.iter().enumerate() {
        let cols = im2col(&act, height, width, kernel);
        let mut z = affine(layer, &cols);
        columns.push(cols);
        if l + 1 < depth {
            z.mapv_inplace(|v| v.max(0.0));
            hidden.push(z.clone());
        }
        act = z;
    }
    let out = ImageGray::from_vec_unchecked(height, width, act.into_raw_vec_and_offset().0);
    Ok((
        out,
        ForwardCache {
            height,
            width,
            columns,
            hidden,
        },
    ))
}

/// Parameter gradients of a scalar loss whose derivative with respect to
/// the network output is `grad_out`.
pub fn backward(params: &NetworkParams, cache: &ForwardCache, grad_out: &ImageGray) -> Result<ParamGrads> {
    params.check_shapes()?;
    let depth = params.layers.len();
    if cache.columns.len() != depth || cache.hidden.len() + 1 != depth {
        return Err(Error::Shape(format!(
            "cache holds {} layers, network has {depth}",
            cache.columns.len()
        )));
    }
    if grad_out.dims() != cache.dims() {
        return Err(Error::DimensionMismatch {
            expected: cache.dims(),
            found: grad_out.dims(),
        });
    }
    let (height, width) = cache.dims();
    let kernel = params.arch.kernel;
    let mut grads = ParamGrads::zeros_like(params);

    let mut dz = Array2::from_shape_vec((1, height * width), grad_out.data().to_vec())
        .expect("single-channel plane");
    for l in (0..depth).rev() {
        let layer = &params.layers[l];
        let cols = &cache.columns[l];
        if cols.nrows() != layer.weight.ncols() {
            return Err(Error::Shape(format!(
                "cache layer {l} has {} unfolded rows, weights expect {}",
                cols.nrows(),
                layer.weight.ncols()
            )));
        }
        grads.layers[l].weight = dz.dot(&cols.t());
        grads.layers[l].bias = dz.sum_axis(Axis(1));
        if l == 0 {
            break;
        }
        let dcols = layer.weight.t().dot(&dz);
        let (in_ch, _) = params.arch.layer_channels(l);
        let mut da = col2im(&dcols, in_ch, height, width, kernel);
        da.zip_mut_with(&cache.hidden[l - 1], |g, &a| {
            if a <= 0.0 {
                *g = 0.0;
            }
        });
        dz = da;
    }
    Ok(grads)
}

/// Filter a speckled image; negative outputs are clamped to zero.
pub fn despeckle(params: &NetworkParams, noisy: &ImageGray) -> Result<ImageGray> {
    let (out, _) = forward(params, noisy)?;
    Ok(out.map(|v| v.max(0.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{init_params, ArchSpec};

    fn small_arch() -> ArchSpec {
        ArchSpec {
            depth: 3,
            hidden_channels: 4,
            kernel: 3,
            io_channels: 1,
        }
    }

    #[test]
    fn im2col_matches_direct_correlation() {
        let (h, w, k) = (5, 4, 3);
        let input = Array2::from_shape_fn((2, h * w), |(c, i)| (c * 31 + i * 7) as f64 % 5.0 - 2.0);
        let weight = Array2::from_shape_fn((3, 2 * k * k), |(o, j)| ((o * 13 + j * 3) % 7) as f64 - 3.0);
        let fast = weight.dot(&im2col(&input, h, w, k));
        for o in 0..3 {
            for y in 0..h as isize {
                for x in 0..w as isize {
                    let mut acc = 0.0;
                    for c in 0..2 {
                        for ky in 0..3isize {
                            for kx in 0..3isize {
                                let (sy, sx) = (y + ky - 1, x + kx - 1);
                                if sy < 0 || sx < 0 || sy >= h as isize || sx >= w as isize {
                                    continue;
                                }
                                acc += weight[[o, (c * 9 + (ky * 3 + kx) as usize)]]
                                    * input[[c, sy as usize * w + sx as usize]];
                            }
                        }
                    }
                    assert_eq!(fast[[o, y as usize * w + x as usize]], acc);
                }
            }
        }
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        let (h, w, k, c) = (6, 5, 5, 3);
        let a = Array2::from_shape_fn((c, h * w), |(i, j)| ((i * 17 + j * 5) % 11) as f64 - 5.0);
        let b = Array2::from_shape_fn((c * k * k, h * w), |(i, j)| ((i * 3 + j * 7) % 13) as f64 - 6.0);
        let lhs: f64 = (&im2col(&a, h, w, k) * &b).sum();
        let rhs: f64 = (&a * &col2im(&b, c, h, w, k)).sum();
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn zero_params_give_zero_output() {
        let p = NetworkParams::zeros(small_arch()).unwrap();
        let y = ImageGray::from_fn(7, 9, |r, c| (r + c) as f64);
        let (out, _) = forward(&p, &y).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_kernels_pass_input_through() {
        let p = NetworkParams::identity(ArchSpec {
            depth: 2,
            hidden_channels: 1,
            kernel: 3,
            io_channels: 1,
        })
        .unwrap();
        let y = ImageGray::from_fn(6, 5, |r, c| 0.1 * (r * 5 + c) as f64);
        let (out, _) = forward(&p, &y).unwrap();
        assert_eq!(out, y);
    }

    #[test]
    fn output_shape_matches_input() {
        let p = init_params(&ArchSpec::default(), 1).unwrap();
        let y = ImageGray::filled(64, 64, 0.5);
        let (out, _) = forward(&p, &y).unwrap();
        assert_eq!(out.dims(), (64, 64));
        assert!(forward(&p, &ImageGray::filled(2, 8, 0.5)).is_err());
    }

    #[test]
    fn zero_upstream_gradient() {
        let p = init_params(&small_arch(), 2).unwrap();
        let y = ImageGray::from_fn(8, 8, |r, c| ((r * 3 + c) % 5) as f64 / 5.0);
        let (_, cache) = forward(&p, &y).unwrap();
        let g = backward(&p, &cache, &ImageGray::zeros(8, 8)).unwrap();
        assert!(g.values().all(|&v| v == 0.0));
    }

    #[test]
    fn backward_is_linear() {
        let p = init_params(&small_arch(), 3).unwrap();
        let y = ImageGray::from_fn(8, 8, |r, c| ((r * 7 + c * 2) % 9) as f64 / 9.0);
        let (_, cache) = forward(&p, &y).unwrap();
        let g = ImageGray::from_fn(8, 8, |r, c| ((r + 3 * c) % 4) as f64 - 1.5);
        let once = backward(&p, &cache, &g).unwrap();
        let twice = backward(&p, &cache, &g.map(|v| 2.0 * v)).unwrap();
        for (a, b) in once.values().zip(twice.values()) {
            assert!((2.0 * a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn backward_rejects_foreign_cache() {
        let p = init_params(&small_arch(), 3).unwrap();
        let deeper = init_params(&ArchSpec { depth: 4, ..small_arch() }, 3).unwrap();
        let y = ImageGray::filled(8, 8, 0.3);
        let (_, cache) = forward(&deeper, &y).unwrap();
        assert!(backward(&p, &cache, &ImageGray::zeros(8, 8)).is_err());
        let (_, cache) = forward(&p, &y).unwrap();
        assert!(backward(&p, &cache, &ImageGray::zeros(8, 9)).is_err());
    }

    #[test]
    fn despeckle_clamps_and_is_deterministic() {
        let p = init_params(&small_arch(), 5).unwrap();
        let y = ImageGray::from_fn(10, 12, |r, c| ((r * 5 + c) % 7) as f64 / 3.0);
        let a = despeckle(&p, &y).unwrap();
        let b = despeckle(&p, &y).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.dims(), y.dims());
        assert!(a.data().iter().all(|&v| v >= 0.0));
    }
}
