//! Time-ordered frame sequences shared by the reference solvers, the
//! time-marching driver, and the dataset format.

use crate::error::{LnoError, Result};
use crate::field::GridField;
use serde::{Deserialize, Serialize};

/// Governing equation of a trajectory or dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Equation {
    Burgers1d,
    Burgers2d,
    Wave,
    NavierStokes,
}

impl Equation {
    pub fn ndim(&self) -> usize {
        match self {
            Equation::Burgers1d => 1,
            _ => 2,
        }
    }

    pub fn channels(&self) -> usize {
        match self {
            Equation::Burgers1d => 1,
            Equation::Burgers2d | Equation::Wave | Equation::NavierStokes => 2,
        }
    }

    /// Whether the leading two channels transform as a plane vector under
    /// grid rotations/reflections (velocities do, the wave pair (p, dp/dt)
    /// does not).
    pub fn vector_channels(&self) -> bool {
        matches!(self, Equation::Burgers2d | Equation::NavierStokes)
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "burgers1d" | "burgers-1d" => Ok(Equation::Burgers1d),
            "burgers2d" | "burgers-2d" => Ok(Equation::Burgers2d),
            "wave" => Ok(Equation::Wave),
            "ns" | "navier-stokes" => Ok(Equation::NavierStokes),
            other => Err(LnoError::Format(format!(
                "unknown equation {other:?} (expected burgers1d, burgers2d, wave, or navier-stokes)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Equation::Burgers1d => "burgers1d",
            Equation::Burgers2d => "burgers2d",
            Equation::Wave => "wave",
            Equation::NavierStokes => "navier-stokes",
        }
    }
}

/// A time-ordered sequence of frames sharing grid metadata.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub frames: Vec<GridField>,
    pub dt: f64,
    pub equation: Option<Equation>,
    /// Viscosity or wave speed, where applicable.
    pub parameter: Option<f64>,
}

impl Trajectory {
    pub fn new(frames: Vec<GridField>, dt: f64) -> Result<Self> {
        if frames.is_empty() {
            return Err(LnoError::Format("trajectory needs at least one frame".into()));
        }
        if !(dt > 0.0) {
            return Err(LnoError::InvalidConfig {
                field: "dt",
                detail: format!("frame interval must be positive, got {dt}"),
            });
        }
        for (i, f) in frames.iter().enumerate().skip(1) {
            frames[0].same_layout(f).map_err(|e| LnoError::Format(format!("frame {i}: {e}")))?;
        }
        Ok(Trajectory {
            frames,
            dt,
            equation: None,
            parameter: None,
        })
    }

    pub fn with_equation(mut self, equation: Equation, parameter: f64) -> Self {
        self.equation = Some(equation);
        self.parameter = Some(parameter);
        self
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}
