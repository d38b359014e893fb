//! Seeded random initial conditions and forcing fields.

use crate::field::GridField;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RandomFieldKind {
    /// Trigonometric tensor-product force on [-1,1]^2.
    Force2d,
    /// Four-term trigonometric initial condition on [-1,1].
    Ic1d,
}

/// Reproducible random-field description: the same seed always regenerates
/// the same field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RandomFieldSpec {
    pub seed: u64,
    pub kind: RandomFieldKind,
    pub channels: usize,
}

fn basis(x: f64) -> [f64; 4] {
    [(PI * x).sin(), (2.0 * PI * x).sin(), (PI * x).cos(), (2.0 * PI * x).cos()]
}

/// F(x, y) = B(x) Lambda B(y)^T with standard-normal Lambda, one independent
/// 4x4 draw per channel; the grid samples [-1, 1) with spacing `dx`.
pub fn random_force_2d(seed: u64, dims: &[usize], dx: f64, channels: usize) -> GridField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lambdas: Vec<[[f64; 4]; 4]> = (0..channels)
        .map(|_| {
            let mut l = [[0.0; 4]; 4];
            for row in &mut l {
                for v in row.iter_mut() {
                    *v = StandardNormal.sample(&mut rng);
                }
            }
            l
        })
        .collect();
    force_2d_from_lambda(&lambdas, dims, dx)
}

/// Deterministic evaluation for a fixed coefficient matrix per channel.
pub fn force_2d_from_lambda(lambdas: &[[[f64; 4]; 4]], dims: &[usize], dx: f64) -> GridField {
    GridField::from_fn(lambdas.len(), dims, dx, |c, idx| {
        let x = -1.0 + idx[0] as f64 * dx;
        let y = -1.0 + idx[1] as f64 * dx;
        let bx = basis(x);
        let by = basis(y);
        let mut acc = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                acc += lambdas[c][i][j] * bx[i] * by[j];
            }
        }
        acc
    })
}

/// u0(x) = l1 sin(pi x) + l2 sin(2 pi x) + l3 cos(pi x) + l4 cos(2 pi x)
/// with standard-normal coefficients, one draw per channel.
pub fn random_ic_1d(seed: u64, dims: &[usize], dx: f64, channels: usize) -> GridField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lambdas: Vec<[f64; 4]> = (0..channels)
        .map(|_| {
            let mut l = [0.0; 4];
            for v in &mut l {
                *v = StandardNormal.sample(&mut rng);
            }
            l
        })
        .collect();
    ic_1d_from_lambda(&lambdas, dims, dx)
}

pub fn ic_1d_from_lambda(lambdas: &[[f64; 4]], dims: &[usize], dx: f64) -> GridField {
    GridField::from_fn(lambdas.len(), dims, dx, |c, idx| {
        let x = -1.0 + idx[0] as f64 * dx;
        let b = basis(x);
        (0..4).map(|i| lambdas[c][i] * b[i]).sum()
    })
}

pub fn generate(spec: &RandomFieldSpec, dims: &[usize], dx: f64) -> GridField {
    match spec.kind {
        RandomFieldKind::Force2d => random_force_2d(spec.seed, dims, dx, spec.channels),
        RandomFieldKind::Ic1d => random_ic_1d(spec.seed, dims, dx, spec.channels),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_coefficients_give_zero_fields() {
        let f = force_2d_from_lambda(&[[[0.0; 4]; 4]], &[8, 8], 0.25);
        assert!(f.values.iter().all(|&v| v == 0.0));
        let u = ic_1d_from_lambda(&[[0.0; 4]], &[8], 0.25);
        assert!(u.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_coefficient_samples_sin_product() {
        let mut l = [[0.0; 4]; 4];
        l[0][0] = 1.0;
        let dx = 2.0 / 8.0;
        let f = force_2d_from_lambda(&[l], &[8, 8], dx);
        for i in 0..8 {
            for j in 0..8 {
                let x = -1.0 + i as f64 * dx;
                let y = -1.0 + j as f64 * dx;
                assert!((f.at2(0, i, j) - (PI * x).sin() * (PI * y).sin()).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn force_bounded_by_coefficient_sum() {
        let f = random_force_2d(3, &[16, 16], 2.0 / 16.0, 2);
        // Pointwise bound: every basis product has magnitude <= 1.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut bound = 0.0f64;
        for _ in 0..2 {
            let mut channel_sum = 0.0;
            for _ in 0..16 {
                let v: f64 = StandardNormal.sample(&mut rng);
                channel_sum += v.abs();
            }
            bound = bound.max(channel_sum);
        }
        assert!(f.max_abs() <= bound + 1e-12);
    }

    #[test]
    fn ic_is_periodic_and_seed_deterministic() {
        let dx = 2.0 / 64.0;
        let a = random_ic_1d(11, &[64], dx, 1);
        let b = random_ic_1d(11, &[64], dx, 1);
        assert_eq!(a.values, b.values);
        // All basis terms are 2-periodic: value at a wrap matches.
        let l = [[1.3, -0.4, 0.2, 0.9]];
        let u = ic_1d_from_lambda(&l, &[65], dx);
        assert!((u.values[0] - u.values[64]).abs() < 1e-12);
    }
}
