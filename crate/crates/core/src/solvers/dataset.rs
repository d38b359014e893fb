//! Training-corpus generation and the on-disk dataset format: a one-line
//! JSON header followed by contiguous little-endian f32 frames in time
//! order, trajectory-major.

use crate::error::{LnoError, Result};
use crate::field::GridField;
use crate::solvers::{burgers, ns, random, wave};
use crate::trajectory::{Equation, Trajectory};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Read;
use std::path::Path;

pub const DATASET_VERSION: u32 = 1;
const DATASET_FORMAT: &str = "lno-dataset";

/// A uniform collection of trajectories from one equation and parameter.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub equation: Equation,
    pub parameter: f64,
    pub dims: Vec<usize>,
    pub channels: usize,
    pub dx: f64,
    pub dt: f64,
    pub seed: u64,
    pub trajectories: Vec<Trajectory>,
}

#[derive(Debug, Serialize, Deserialize)]
struct DatasetHeader {
    format: String,
    version: u32,
    equation: Equation,
    parameter: f64,
    d: usize,
    d_u: usize,
    dims: Vec<usize>,
    dx: f64,
    dt: f64,
    frames_per_trajectory: usize,
    trajectory_count: usize,
    seed: u64,
}

impl Dataset {
    pub fn new(
        equation: Equation,
        parameter: f64,
        seed: u64,
        trajectories: Vec<Trajectory>,
    ) -> Result<Self> {
        if trajectories.is_empty() {
            return Err(LnoError::Format("dataset needs at least one trajectory".into()));
        }
        let first = &trajectories[0].frames[0];
        let frames = trajectories[0].len();
        let dt = trajectories[0].dt;
        for (i, t) in trajectories.iter().enumerate() {
            if t.len() != frames || t.dt != dt {
                return Err(LnoError::Format(format!(
                    "trajectory {i} has {} frames at dt {}, expected {} at {}",
                    t.len(),
                    t.dt,
                    frames,
                    dt
                )));
            }
            first.same_layout(&t.frames[0])?;
        }
        Ok(Dataset {
            equation,
            parameter,
            dims: first.dims.clone(),
            channels: first.channels,
            dx: first.dx,
            dt,
            seed,
            trajectories,
        })
    }

    pub fn frames_per_trajectory(&self) -> usize {
        self.trajectories[0].len()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let header = DatasetHeader {
            format: DATASET_FORMAT.into(),
            version: DATASET_VERSION,
            equation: self.equation,
            parameter: self.parameter,
            d: self.dims.len(),
            d_u: self.channels,
            dims: self.dims.clone(),
            dx: self.dx,
            dt: self.dt,
            frames_per_trajectory: self.frames_per_trajectory(),
            trajectory_count: self.trajectories.len(),
            seed: self.seed,
        };
        let frame_len = self.channels * self.dims.iter().product::<usize>();
        let mut out = Vec::with_capacity(
            self.trajectories.len() * self.frames_per_trajectory() * frame_len * 4 + 512,
        );
        serde_json::to_writer(&mut out, &header).map_err(|e| LnoError::Format(e.to_string()))?;
        out.push(b'\n');
        for traj in &self.trajectories {
            for frame in &traj.frames {
                for v in &frame.values {
                    out.extend_from_slice(&(*v as f32).to_le_bytes());
                }
            }
        }
        std::fs::write(path, out)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        let newline = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| LnoError::Format("missing dataset header line".into()))?;
        let header: DatasetHeader = serde_json::from_slice(&bytes[..newline])
            .map_err(|e| LnoError::Format(format!("bad dataset header: {e}")))?;
        if header.format != DATASET_FORMAT {
            return Err(LnoError::Format(format!("not a dataset file: format {:?}", header.format)));
        }
        if header.version != DATASET_VERSION {
            return Err(LnoError::VersionMismatch {
                found: header.version,
                expected: DATASET_VERSION,
            });
        }
        if header.dims.len() != header.d {
            return Err(LnoError::Format(format!(
                "header dims {:?} disagree with d={}",
                header.dims, header.d
            )));
        }
        let frame_len = header.d_u * header.dims.iter().product::<usize>();
        let total = header.trajectory_count * header.frames_per_trajectory * frame_len;
        let blob = &bytes[newline + 1..];
        if blob.len() != total * 4 {
            return Err(LnoError::Format(format!(
                "truncated dataset blob: {} bytes, expected {}",
                blob.len(),
                total * 4
            )));
        }
        let mut values = Vec::with_capacity(total);
        for chunk in blob.chunks_exact(4) {
            values.push(f32::from_le_bytes(chunk.try_into().expect("4-byte chunk")) as f64);
        }
        let mut trajectories = Vec::with_capacity(header.trajectory_count);
        let mut cursor = 0;
        for _ in 0..header.trajectory_count {
            let mut frames = Vec::with_capacity(header.frames_per_trajectory);
            for _ in 0..header.frames_per_trajectory {
                frames.push(GridField::from_values(
                    header.d_u,
                    &header.dims,
                    header.dx,
                    values[cursor..cursor + frame_len].to_vec(),
                )?);
                cursor += frame_len;
            }
            trajectories
                .push(Trajectory::new(frames, header.dt)?.with_equation(header.equation, header.parameter));
        }
        Dataset::new(header.equation, header.parameter, header.seed, trajectories)
    }
}

/// Generation parameters for one dataset.
#[derive(Debug, Clone)]
pub struct GenerateOptions {
    pub equation: Equation,
    /// Viscosity (Burgers, N-S) or wave speed.
    pub parameter: f64,
    /// Points per axis.
    pub grid: usize,
    pub dt: f64,
    /// Physical seconds recorded per trajectory.
    pub seconds: f64,
    pub count: usize,
    pub seed: u64,
    /// N-S warm-up: how long the random force acts before recording.
    pub force_duration: f64,
}

impl GenerateOptions {
    pub fn frames(&self) -> usize {
        (self.seconds / self.dt).round() as usize
    }
}

/// Generates `count` random trajectories with the per-equation protocol:
/// trajectories fan out across threads, each deterministic in its own
/// sub-seed.
pub fn generate_dataset(opts: &GenerateOptions) -> Result<Dataset> {
    if opts.count == 0 || opts.frames() == 0 {
        return Err(LnoError::InvalidConfig {
            field: "gen",
            detail: "need at least one trajectory and one recorded frame".into(),
        });
    }
    let n = opts.grid;
    let dx = 2.0 / n as f64;
    let steps = opts.frames();
    let mut master = ChaCha8Rng::seed_from_u64(opts.seed);
    let sub_seeds: Vec<u64> = (0..opts.count).map(|_| master.next_u64()).collect();

    let trajectories: Result<Vec<Trajectory>> = sub_seeds
        .par_iter()
        .map(|&s| match opts.equation {
            Equation::Burgers1d => {
                let ic = random::random_ic_1d(s, &[n], dx, 1);
                burgers::solve_burgers_1d(&ic, opts.parameter, opts.dt, steps)
            }
            Equation::Burgers2d => {
                let ic = random::random_force_2d(s, &[n, n], dx, 2);
                burgers::solve_burgers_2d(&ic, opts.parameter, opts.dt, steps)
            }
            Equation::Wave => {
                let ic = random::random_force_2d(s, &[n, n], dx, 1);
                wave::solve_wave(&ic, opts.parameter, opts.dt, steps)
            }
            Equation::NavierStokes => {
                let force = random::random_force_2d(s, &[n, n], dx, 2);
                let ic = GridField::zeros(2, &[n, n], dx);
                ns::solve_ns_periodic(&ic, opts.parameter, opts.dt, steps, Some(&force), opts.force_duration)
            }
        })
        .collect();
    Dataset::new(opts.equation, opts.parameter, opts.seed, trajectories?)
}
