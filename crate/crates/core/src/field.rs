//! Dense multi-channel fields sampled on equidistant grids.

use crate::error::{LnoError, Result};
use serde::{Deserialize, Serialize};

/// A d-dimensional (d = 1 or 2) multi-channel function sampled on an
/// equidistant grid with spacing `dx`.
///
/// Values are stored row-major as `[channel][i1]` in 1-D or
/// `[channel][i1][i2]` in 2-D.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridField {
    pub channels: usize,
    pub dims: Vec<usize>,
    pub dx: f64,
    pub values: Vec<f64>,
}

impl GridField {
    pub fn zeros(channels: usize, dims: &[usize], dx: f64) -> Self {
        let n: usize = dims.iter().product();
        GridField {
            channels,
            dims: dims.to_vec(),
            dx,
            values: vec![0.0; channels * n],
        }
    }

    pub fn from_values(channels: usize, dims: &[usize], dx: f64, values: Vec<f64>) -> Result<Self> {
        let n: usize = dims.iter().product();
        if values.len() != channels * n {
            return Err(LnoError::ShapeMismatch {
                axis: 0,
                detail: format!(
                    "value buffer has {} entries, expected {} ({} channels x {:?})",
                    values.len(),
                    channels * n,
                    channels,
                    dims
                ),
            });
        }
        if dims.is_empty() || dims.len() > 2 {
            return Err(LnoError::InvalidConfig {
                field: "dims",
                detail: format!("{} spatial dims unsupported (d must be 1 or 2)", dims.len()),
            });
        }
        if dims.iter().any(|&d| d == 0) {
            return Err(LnoError::InvalidConfig {
                field: "dims",
                detail: "axis with zero points".into(),
            });
        }
        if !(dx > 0.0) {
            return Err(LnoError::InvalidConfig {
                field: "dx",
                detail: format!("grid spacing must be positive, got {dx}"),
            });
        }
        Ok(GridField {
            channels,
            dims: dims.to_vec(),
            dx,
            values,
        })
    }

    /// Fill from a function of (channel, grid index per axis).
    pub fn from_fn(
        channels: usize,
        dims: &[usize],
        dx: f64,
        mut f: impl FnMut(usize, &[usize]) -> f64,
    ) -> Self {
        let mut field = Self::zeros(channels, dims, dx);
        let (n1, n2) = field.dims2();
        for c in 0..channels {
            for i1 in 0..n1 {
                for i2 in 0..n2 {
                    let idx = if dims.len() == 1 { vec![i1] } else { vec![i1, i2] };
                    field.values[(c * n1 + i1) * n2 + i2] = f(c, &idx);
                }
            }
        }
        field
    }

    /// Number of spatial dimensions (1 or 2).
    pub fn ndim(&self) -> usize {
        self.dims.len()
    }

    /// Grid points per field channel.
    pub fn points(&self) -> usize {
        self.dims.iter().product()
    }

    /// Spatial dims padded to 2-D form `(n1, n2)`; 1-D fields report `n2 = 1`.
    /// All kernels iterate this unified layout.
    pub(crate) fn dims2(&self) -> (usize, usize) {
        match self.dims.len() {
            1 => (self.dims[0], 1),
            _ => (self.dims[0], self.dims[1]),
        }
    }

    #[inline]
    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.points();
        &self.values[c * n..(c + 1) * n]
    }

    #[inline]
    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.points();
        &mut self.values[c * n..(c + 1) * n]
    }

    /// Value at (channel, i1) for 1-D fields.
    #[inline]
    pub fn at1(&self, c: usize, i1: usize) -> f64 {
        self.values[c * self.dims[0] + i1]
    }

    /// Value at (channel, i1, i2) for 2-D fields.
    #[inline]
    pub fn at2(&self, c: usize, i1: usize, i2: usize) -> f64 {
        self.values[(c * self.dims[0] + i1) * self.dims[1] + i2]
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Checks the two fields share channels/dims/dx (axis-level report).
    pub fn same_layout(&self, other: &GridField) -> Result<()> {
        if self.channels != other.channels {
            return Err(LnoError::ShapeMismatch {
                axis: 0,
                detail: format!("channel counts differ: {} vs {}", self.channels, other.channels),
            });
        }
        if self.dims.len() != other.dims.len() {
            return Err(LnoError::ShapeMismatch {
                axis: 0,
                detail: format!("dimensionality differs: {:?} vs {:?}", self.dims, other.dims),
            });
        }
        for (axis, (a, b)) in self.dims.iter().zip(&other.dims).enumerate() {
            if a != b {
                return Err(LnoError::ShapeMismatch {
                    axis,
                    detail: format!("sizes differ: {a} vs {b}"),
                });
            }
        }
        Ok(())
    }
}
