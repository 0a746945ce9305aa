//! Synthetic clean scenes: smooth backgrounds with sharp-edged shapes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::image::ImageGray;
use crate::speckle_sim::NamedImage;

#[derive(Debug, Clone, Copy)]
enum Shape {
    Rect { top: f64, left: f64, bottom: f64, right: f64 },
    Disk { cy: f64, cx: f64, radius: f64 },
    Bar { cy: f64, cx: f64, half_len: f64, half_width: f64, cos: f64, sin: f64 },
}

impl Shape {
    fn contains(&self, y: f64, x: f64) -> bool {
        match *self {
            Shape::Rect { top, left, bottom, right } => y >= top && y < bottom && x >= left && x < right,
            Shape::Disk { cy, cx, radius } => (y - cy).powi(2) + (x - cx).powi(2) <= radius * radius,
            Shape::Bar { cy, cx, half_len, half_width, cos, sin } => {
                let (dy, dx) = (y - cy, x - cx);
                let along = dx * cos + dy * sin;
                let across = -dx * sin + dy * cos;
                along.abs() <= half_len && across.abs() <= half_width
            }
        }
    }
}

/// One `size x size` scene drawn from `rng`. Intensities stay in `[0.05, 0.95]`.
pub fn synthetic_scene<R: Rng + ?Sized>(rng: &mut R, size: usize) -> ImageGray {
    let s = size as f64;
    let base = rng.random_range(0.3..0.6);
    let tilt_y = rng.random_range(-0.15..0.15);
    let tilt_x = rng.random_range(-0.15..0.15);
    let wave_amp = rng.random_range(0.0..0.05);
    let wave_freq = rng.random_range(0.5..2.0);
    let wave_phase = rng.random_range(0.0..std::f64::consts::TAU);

    let count = rng.random_range(4..=8);
    let shapes: Vec<(Shape, f64)> = (0..count)
        .map(|_| {
            let level = if rng.random_bool(0.5) {
                rng.random_range(0.05..0.25)
            } else {
                rng.random_range(0.7..0.95)
            };
            let shape = match rng.random_range(0..3) {
                0 => {
                    let h = rng.random_range(0.1..0.4) * s;
                    let w = rng.random_range(0.1..0.4) * s;
                    let top = rng.random_range(0.0..s - h);
                    let left = rng.random_range(0.0..s - w);
                    Shape::Rect { top, left, bottom: top + h, right: left + w }
                }
                1 => Shape::Disk {
                    cy: rng.random_range(0.1..0.9) * s,
                    cx: rng.random_range(0.1..0.9) * s,
                    radius: rng.random_range(0.05..0.2) * s,
                },
                _ => {
                    let angle: f64 = rng.random_range(0.0..std::f64::consts::PI);
                    Shape::Bar {
                        cy: rng.random_range(0.2..0.8) * s,
                        cx: rng.random_range(0.2..0.8) * s,
                        half_len: rng.random_range(0.15..0.35) * s,
                        half_width: rng.random_range(1.5..4.0),
                        cos: angle.cos(),
                        sin: angle.sin(),
                    }
                }
            };
            (shape, level)
        })
        .collect();

    ImageGray::from_fn(size, size, |r, c| {
        let (y, x) = (r as f64 + 0.5, c as f64 + 0.5);
        let painted = shapes.iter().rev().find(|(shape, _)| shape.contains(y, x));
        let v = match painted {
            Some((_, level)) => *level,
            None => {
                base + tilt_y * (y / s - 0.5)
                    + tilt_x * (x / s - 0.5)
                    + wave_amp * (wave_freq * std::f64::consts::TAU * (x + y) / s + wave_phase).sin()
            }
        };
        v.clamp(0.05, 0.95)
    })
}

/// `count` scenes named `synth_000`, `synth_001`, ...; each scene has its
/// own generator stream so the corpus prefix is stable as `count` grows.
pub fn generate_corpus(count: usize, size: usize, seed: u64) -> Vec<NamedImage> {
    (0..count)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            NamedImage::new(format!("synth_{i:03}"), synthetic_scene(&mut rng, size))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corpus_is_reproducible_and_bounded() {
        let a = generate_corpus(3, 48, 7);
        let b = generate_corpus(5, 48, 7);
        assert_eq!(a[..], b[..3]);
        for img in &a {
            assert!(img.image.data().iter().all(|v| (0.05..=0.95).contains(v)));
        }
        assert_ne!(a[0].image, a[1].image);
    }

    #[test]
    fn scenes_have_sharp_edges() {
        let img = &generate_corpus(1, 64, 3)[0].image;
        let max_jump = (0..64)
            .flat_map(|r| (0..63).map(move |c| (r, c)))
            .map(|(r, c)| (img.get(r, c + 1) - img.get(r, c)).abs())
            .fold(0.0, f64::max);
        assert!(max_jump > 0.3, "{max_jump}");
    }
}
