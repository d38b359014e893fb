//! Conventional reference solvers that generate training and validation
//! data, plus the seeded random fields that drive them.

pub mod burgers;
pub mod linsolve;
pub mod dataset;
pub mod ns;
pub mod random;
pub mod wave;

pub use burgers::{solve_burgers_1d, solve_burgers_2d};
pub use ns::{solve_ns_periodic, spectral_divergence_max, taylor_green_ic};
pub use random::{random_force_2d, random_ic_1d, RandomFieldKind, RandomFieldSpec};
pub use wave::{solve_wave, wave_energy};
