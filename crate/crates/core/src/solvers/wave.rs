//! Wave-equation reference solver: 5-point Laplacian in space, implicit
//! Newmark time integration with the unconditionally stable
//! average-acceleration parameters (beta = 1/4, gamma = 1/2).

use crate::error::{LnoError, Result};
use crate::field::GridField;
use crate::solvers::linsolve::{conjugate_gradient, Csr, CsrBuilder};
use crate::trajectory::{Equation, Trajectory};

const BETA: f64 = 0.25;
const GAMMA: f64 = 0.5;
const CG_TOL: f64 = 1e-13;
const CG_MAX_ITER: usize = 2000;

/// Periodic central Laplacian applied to a flat scalar grid.
pub fn apply_laplacian(values: &[f64], dims: &[usize], dx: f64, out: &mut [f64]) {
    let invdx2 = 1.0 / (dx * dx);
    match dims.len() {
        1 => {
            let n = dims[0];
            for i in 0..n {
                out[i] = (values[(i + 1) % n] - 2.0 * values[i] + values[(i + n - 1) % n]) * invdx2;
            }
        }
        _ => {
            let (n1, n2) = (dims[0], dims[1]);
            for i1 in 0..n1 {
                let (i1m, i1p) = ((i1 + n1 - 1) % n1, (i1 + 1) % n1);
                for i2 in 0..n2 {
                    let (i2m, i2p) = ((i2 + n2 - 1) % n2, (i2 + 1) % n2);
                    out[i1 * n2 + i2] = (values[i1p * n2 + i2]
                        + values[i1m * n2 + i2]
                        + values[i1 * n2 + i2p]
                        + values[i1 * n2 + i2m]
                        - 4.0 * values[i1 * n2 + i2])
                        * invdx2;
                }
            }
        }
    }
}

/// (I - beta dt^2 a0^2 L), the SPD system solved for the new acceleration.
fn newmark_matrix(dims: &[usize], dx: f64, coef: f64) -> Csr {
    let invdx2 = coef / (dx * dx);
    match dims.len() {
        1 => {
            let n = dims[0];
            let mut b = CsrBuilder::new(n, 3 * n);
            for i in 0..n {
                b.push(i, 1.0 + 2.0 * invdx2);
                b.push((i + 1) % n, -invdx2);
                b.push((i + n - 1) % n, -invdx2);
                b.finish_row();
            }
            b.build()
        }
        _ => {
            let (n1, n2) = (dims[0], dims[1]);
            let area = n1 * n2;
            let mut b = CsrBuilder::new(area, 5 * area);
            for i1 in 0..n1 {
                let (i1m, i1p) = ((i1 + n1 - 1) % n1, (i1 + 1) % n1);
                for i2 in 0..n2 {
                    let (i2m, i2p) = ((i2 + n2 - 1) % n2, (i2 + 1) % n2);
                    b.push(i1 * n2 + i2, 1.0 + 4.0 * invdx2);
                    b.push(i1p * n2 + i2, -invdx2);
                    b.push(i1m * n2 + i2, -invdx2);
                    b.push(i1 * n2 + i2p, -invdx2);
                    b.push(i1 * n2 + i2m, -invdx2);
                    b.finish_row();
                }
            }
            b.build()
        }
    }
}

/// Newmark trajectory of the second-order wave equation from the pressure
/// initial condition; the time-derivative initial condition is zero. Frames
/// carry two channels: (p, dp/dt).
pub fn solve_wave(ic_p: &GridField, a0: f64, dt: f64, steps: usize) -> Result<Trajectory> {
    if ic_p.channels != 1 {
        return Err(LnoError::ShapeMismatch {
            axis: 0,
            detail: format!("wave initial condition must be scalar, got {} channels", ic_p.channels),
        });
    }
    if !(a0 > 0.0) || !(dt > 0.0) {
        return Err(LnoError::InvalidConfig {
            field: "wave",
            detail: format!("wave speed {a0} and time step {dt} must be positive"),
        });
    }
    let dims = ic_p.dims.clone();
    let dx = ic_p.dx;
    let area = ic_p.points();
    let a0sq = a0 * a0;
    let system = newmark_matrix(&dims, dx, BETA * dt * dt * a0sq);

    let mut p = ic_p.values.clone();
    let mut vel = vec![0.0; area];
    let mut acc = vec![0.0; area];
    apply_laplacian(&p, &dims, dx, &mut acc);
    for a in acc.iter_mut() {
        *a *= a0sq;
    }

    let pack = |p: &[f64], vel: &[f64]| -> Result<GridField> {
        let mut values = Vec::with_capacity(2 * area);
        values.extend_from_slice(p);
        values.extend_from_slice(vel);
        GridField::from_values(2, &dims, dx, values)
    };

    let mut frames = Vec::with_capacity(steps + 1);
    frames.push(pack(&p, &vel)?);
    let mut predictor = vec![0.0; area];
    let mut rhs = vec![0.0; area];
    let mut acc_next = vec![0.0; area];

    for _ in 0..steps {
        for i in 0..area {
            predictor[i] = p[i] + dt * vel[i] + dt * dt * (0.5 - BETA) * acc[i];
        }
        apply_laplacian(&predictor, &dims, dx, &mut rhs);
        for r in rhs.iter_mut() {
            *r *= a0sq;
        }
        acc_next.copy_from_slice(&acc);
        conjugate_gradient(&system, &rhs, &mut acc_next, CG_TOL, CG_MAX_ITER)?;
        for i in 0..area {
            p[i] = predictor[i] + dt * dt * BETA * acc_next[i];
            vel[i] += dt * ((1.0 - GAMMA) * acc[i] + GAMMA * acc_next[i]);
        }
        acc.copy_from_slice(&acc_next);
        frames.push(pack(&p, &vel)?);
    }
    Ok(Trajectory::new(frames, dt)?.with_equation(Equation::Wave, a0))
}

/// Discrete energy 0.5 ||dp/dt||^2 + 0.5 a0^2 p^T (-L) p, the invariant the
/// average-acceleration member conserves on linear systems.
pub fn wave_energy(frame: &GridField, a0: f64) -> f64 {
    let area = frame.points();
    let p = &frame.values[..area];
    let vel = &frame.values[area..];
    let mut lap = vec![0.0; area];
    apply_laplacian(p, &frame.dims, frame.dx, &mut lap);
    let kinetic: f64 = vel.iter().map(|v| v * v).sum();
    let potential: f64 = -p.iter().zip(&lap).map(|(a, b)| a * b).sum::<f64>();
    0.5 * kinetic + 0.5 * a0 * a0 * potential
}
