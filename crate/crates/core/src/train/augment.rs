//! The eight square-symmetry coordinate transformations used for sample
//! augmentation on periodic 2-D grids.

use crate::error::{LnoError, Result};
use crate::field::GridField;

/// Element of the square-symmetry group acting on a periodic grid.
/// Rotations are counterclockwise; flips are about the named line through
/// the origin.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AugmentTransform {
    Identity,
    Rot90,
    Rot180,
    Rot270,
    FlipX,
    FlipY,
    FlipDiag,
    FlipAnti,
}

pub const ALL_TRANSFORMS: [AugmentTransform; 8] = [
    AugmentTransform::Identity,
    AugmentTransform::Rot90,
    AugmentTransform::Rot180,
    AugmentTransform::Rot270,
    AugmentTransform::FlipX,
    AugmentTransform::FlipY,
    AugmentTransform::FlipDiag,
    AugmentTransform::FlipAnti,
];

impl AugmentTransform {
    /// Action on coordinates as an orthogonal matrix with entries in
    /// {-1, 0, 1}: x_out = A x_in.
    fn matrix(&self) -> [[i32; 2]; 2] {
        match self {
            AugmentTransform::Identity => [[1, 0], [0, 1]],
            AugmentTransform::Rot90 => [[0, -1], [1, 0]],
            AugmentTransform::Rot180 => [[-1, 0], [0, -1]],
            AugmentTransform::Rot270 => [[0, 1], [-1, 0]],
            AugmentTransform::FlipX => [[-1, 0], [0, 1]],
            AugmentTransform::FlipY => [[1, 0], [0, -1]],
            AugmentTransform::FlipDiag => [[0, 1], [1, 0]],
            AugmentTransform::FlipAnti => [[0, -1], [-1, 0]],
        }
    }

    fn from_matrix(m: [[i32; 2]; 2]) -> Self {
        *ALL_TRANSFORMS
            .iter()
            .find(|t| t.matrix() == m)
            .expect("the eight matrices form a closed group")
    }

    /// Group composition: (a.compose(b)) acts as a after b.
    pub fn compose(self, other: Self) -> Self {
        let (a, b) = (self.matrix(), other.matrix());
        let mut m = [[0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                m[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        Self::from_matrix(m)
    }

    pub fn inverse(self) -> Self {
        // Orthogonal with integer entries: the inverse is the transpose.
        let m = self.matrix();
        Self::from_matrix([[m[0][0], m[1][0]], [m[0][1], m[1][1]]])
    }

    fn needs_square(&self) -> bool {
        !matches!(
            self,
            AugmentTransform::Identity
                | AugmentTransform::Rot180
                | AugmentTransform::FlipX
                | AugmentTransform::FlipY
        )
    }

    /// Applies the transform to a 2-D frame on a periodic grid whose points
    /// sample [-1, 1) per axis. When `vector_channels` is set the first two
    /// channels transform as a plane vector; all channels' grid positions
    /// are permuted either way.
    pub fn apply(&self, frame: &GridField, vector_channels: bool) -> Result<GridField> {
        if frame.ndim() != 2 {
            return Err(LnoError::ShapeMismatch {
                axis: 0,
                detail: "augmentation transforms act on 2-D frames".into(),
            });
        }
        let (n1, n2) = (frame.dims[0], frame.dims[1]);
        if self.needs_square() && n1 != n2 {
            return Err(LnoError::ShapeMismatch {
                axis: 1,
                detail: format!("{self:?} requires a square grid, got {n1}x{n2}"),
            });
        }
        if vector_channels && frame.channels < 2 {
            return Err(LnoError::ShapeMismatch {
                axis: 0,
                detail: "vector transform needs at least two channels".into(),
            });
        }
        let inv = self.inverse().matrix();
        let fwd = self.matrix();
        let area = n1 * n2;
        let mut out = GridField::zeros(frame.channels, &frame.dims, frame.dx);

        // Source index for one output coordinate, on the periodic grid where
        // coordinate negation is index negation mod n.
        let src = |row: [i32; 2], j1: usize, j2: usize| -> usize {
            if row[0] != 0 {
                if row[0] > 0 { j1 } else { (n1 - j1) % n1 }
            } else if row[1] > 0 {
                j2
            } else {
                (n2 - j2) % n2
            }
        };

        for j1 in 0..n1 {
            for j2 in 0..n2 {
                let s1 = src(inv[0], j1, j2);
                let s2 = src(inv[1], j1, j2);
                let from = s1 * n2 + s2;
                let to = j1 * n2 + j2;
                if vector_channels {
                    let u = frame.values[from];
                    let v = frame.values[area + from];
                    out.values[to] = fwd[0][0] as f64 * u + fwd[0][1] as f64 * v;
                    out.values[area + to] = fwd[1][0] as f64 * u + fwd[1][1] as f64 * v;
                    for c in 2..frame.channels {
                        out.values[c * area + to] = frame.values[c * area + from];
                    }
                } else {
                    for c in 0..frame.channels {
                        out.values[c * area + to] = frame.values[c * area + from];
                    }
                }
            }
        }
        Ok(out)
    }
}
