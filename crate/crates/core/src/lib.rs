//! Local neural operator engine.
//!
//! A self-contained implementation of a localized-spectral neural operator
//! for transient PDEs: the layer and architecture machinery, corrosion-width
//! calculus, reference solvers that generate training data, a tape-based
//! training pipeline, and boundary-aware recurrent time marching.

pub mod boundary;
pub mod error;
pub mod field;
pub mod model;
pub mod solvers;
pub mod spectral;
pub mod tensor;
pub mod train;
pub mod trajectory;

pub use error::{LnoError, Result};
pub use field::GridField;
