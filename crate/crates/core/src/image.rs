use crate::error::{Error, Result};

/// Single-channel image of real intensities stored row-major.
///
/// Clean references live in `[0, 1]`; speckled images and ratio images are
/// unbounded above.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageGray {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl ImageGray {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Domain(format!(
                "image dimensions must be positive, got {height}x{width}"
            )));
        }
        if data.len() != height * width {
            return Err(Error::Shape(format!(
                "{height}x{width} image needs {} values, got {}",
                height * width,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("image pixel {pos}")));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    /// Skips the finiteness scan; used for gradient buffers.
    pub(crate) fn from_vec_unchecked(height: usize, width: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), height * width);
        Self {
            height,
            width,
            data,
        }
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        assert!(height > 0 && width > 0, "image dimensions must be positive");
        Self {
            height,
            width,
            data: vec![value; height * width],
        }
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self::filled(height, width, 0.0)
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(height > 0 && width > 0, "image dimensions must be positive");
        let mut data = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Self {
            height,
            width,
            data,
        }
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.width + col] = value;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Copy of the `size`-by-`size` window whose top-left corner is `(row, col)`.
    pub fn crop(&self, row: usize, col: usize, height: usize, width: usize) -> Result<Self> {
        if height == 0 || width == 0 || row + height > self.height || col + width > self.width {
            return Err(Error::Domain(format!(
                "crop {height}x{width} at ({row},{col}) exceeds {}x{} image",
                self.height, self.width
            )));
        }
        let mut data = Vec::with_capacity(height * width);
        for r in row..row + height {
            let start = r * self.width + col;
            data.extend_from_slice(&self.data[start..start + width]);
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn ensure_same_dims(&self, other: &ImageGray) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                found: other.dims(),
            });
        }
        Ok(())
    }

    pub fn ensure_at_least(&self, min: usize) -> Result<()> {
        if self.height < min || self.width < min {
            return Err(Error::Undersized {
                height: self.height,
                width: self.width,
                min,
            });
        }
        Ok(())
    }

    /// Same image with rows and columns reindexed: `out[r][c] = self[rows[r]][cols[c]]`.
    pub fn permuted(&self, rows: &[usize], cols: &[usize]) -> Self {
        assert_eq!(rows.len(), self.height);
        assert_eq!(cols.len(), self.width);
        Self::from_fn(self.height, self.width, |r, c| self.get(rows[r], cols[c]))
    }
}
