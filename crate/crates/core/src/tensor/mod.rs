//! Grid tensors, the convolution primitives all layers reduce to, and a
//! reverse-mode tape for training.

pub mod ops;
pub mod tape;

use crate::error::{LnoError, Result};
use rand::Rng;

/// A learnable (or constant) dense tensor.
///
/// Shape conventions by role:
/// - convolution kernel: `[out_ch][in_ch][k1]` (1-D) or `[out_ch][in_ch][k1][k2]` (2-D)
/// - transpose-convolution kernel: `[in_ch][out_ch][k1(...k2)]`
/// - spectral mode mixing: `[channel][mode_in][mode_out]`
#[derive(Debug, Clone, PartialEq)]
pub struct WeightTensor {
    pub values: Vec<f64>,
    pub shape: Vec<usize>,
    pub requires_grad: bool,
    pub grad: Vec<f64>,
}

impl WeightTensor {
    pub fn new(shape: &[usize], values: Vec<f64>, requires_grad: bool) -> Result<Self> {
        let n: usize = shape.iter().product();
        if values.len() != n {
            return Err(LnoError::ShapeMismatch {
                axis: 0,
                detail: format!("weight buffer has {} entries, shape {:?} needs {}", values.len(), shape, n),
            });
        }
        let grad = if requires_grad { vec![0.0; n] } else { Vec::new() };
        Ok(WeightTensor {
            values,
            shape: shape.to_vec(),
            requires_grad,
            grad,
        })
    }

    pub fn zeros(shape: &[usize], requires_grad: bool) -> Self {
        let n: usize = shape.iter().product();
        Self::new(shape, vec![0.0; n], requires_grad).expect("consistent by construction")
    }

    /// Uniform init in +-(fan_in)^{-1/2}, the scaling that keeps activations
    /// O(1) through the block stack.
    pub fn uniform_fan_in(shape: &[usize], fan_in: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let n: usize = shape.iter().product();
        let values: Vec<f64> = (0..n).map(|_| rng.gen_range(-bound..bound)).collect();
        Self::new(shape, values, true).expect("consistent by construction")
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn zero_grad(&mut self) {
        for g in &mut self.grad {
            *g = 0.0;
        }
    }
}

/// Flat arena of weight tensors referenced by tape operations.
#[derive(Debug, Clone, Default)]
pub struct WeightStore {
    pub tensors: Vec<WeightTensor>,
}

pub type WeightId = usize;

impl WeightStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, w: WeightTensor) -> WeightId {
        self.tensors.push(w);
        self.tensors.len() - 1
    }

    pub fn get(&self, id: WeightId) -> &WeightTensor {
        &self.tensors[id]
    }

    /// Zero every gradient accumulator; call between optimizer steps.
    pub fn zero_grads(&mut self) {
        for t in &mut self.tensors {
            t.zero_grad();
        }
    }

    pub fn total_values(&self) -> usize {
        self.tensors.iter().map(|t| t.len()).sum()
    }
}
