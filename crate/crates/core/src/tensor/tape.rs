//! Reverse-mode differentiation tape.
//!
//! Operations executed through a [`Tape`] record their inputs and saved
//! activations in execution order; [`Tape::backward`] replays the adjoints in
//! reverse, accumulating gradients into every reachable `requires_grad`
//! weight and into per-node gradient buffers (retrievable for leaves).
//!
//! A tape is single-threaded; gradient merging across training workers is an
//! explicit reduction after backward.

use crate::error::{LnoError, Result};
use crate::field::GridField;
use crate::tensor::ops;
use crate::tensor::{WeightId, WeightStore};
use std::sync::Arc;

pub type NodeId = usize;

#[derive(Debug, Clone)]
enum Op {
    Input,
    Conv {
        weight: WeightId,
        stride: usize,
    },
    Decomp {
        kernel: Arc<Vec<f64>>,
        modes: usize,
        next: usize,
        stride: usize,
    },
    Mix {
        weight: WeightId,
    },
    Recon {
        kernel: Arc<Vec<f64>>,
        modes: usize,
        next: usize,
        stride: usize,
        overlap: usize,
    },
    Gelu,
    Add,
    Crop {
        lo: Vec<usize>,
        hi: Vec<usize>,
    },
    ExtendPeriodic {
        lo: Vec<usize>,
        hi: Vec<usize>,
    },
    SumAll,
    PointNormMean {
        target: GridField,
    },
    MeanScalars,
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    inputs: Vec<NodeId>,
}

/// Recorded forward pass ending (for backward) in a scalar loss node.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    values: Vec<GridField>,
    grads: Vec<Option<GridField>>,
    consumed: bool,
}

fn scalar_field(v: f64) -> GridField {
    GridField::from_values(1, &[1], 1.0, vec![v]).expect("scalar layout")
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &GridField {
        &self.values[id]
    }

    /// Gradient of the loss with respect to node `id` (after `backward`).
    pub fn grad(&self, id: NodeId) -> Option<&GridField> {
        self.grads.get(id).and_then(|g| g.as_ref())
    }

    fn push(&mut self, op: Op, inputs: Vec<NodeId>, value: GridField) -> NodeId {
        self.nodes.push(Node { op, inputs });
        self.values.push(value);
        self.nodes.len() - 1
    }

    pub fn input(&mut self, value: GridField) -> NodeId {
        self.push(Op::Input, vec![], value)
    }

    pub fn conv(
        &mut self,
        store: &WeightStore,
        x: NodeId,
        weight: WeightId,
        stride: usize,
    ) -> Result<NodeId> {
        let out = ops::conv_forward(&self.values[x], store.get(weight), stride)?;
        Ok(self.push(Op::Conv { weight, stride }, vec![x], out))
    }

    pub fn decomp(
        &mut self,
        x: NodeId,
        kernel: Arc<Vec<f64>>,
        modes: usize,
        next: usize,
        stride: usize,
    ) -> Result<NodeId> {
        let out = ops::windowed_decomp(&self.values[x], &kernel, modes, next, stride)?;
        Ok(self.push(
            Op::Decomp {
                kernel,
                modes,
                next,
                stride,
            },
            vec![x],
            out,
        ))
    }

    pub fn mix(&mut self, store: &WeightStore, x: NodeId, weight: WeightId) -> Result<NodeId> {
        let out = ops::channel_mix_forward(&self.values[x], store.get(weight))?;
        Ok(self.push(Op::Mix { weight }, vec![x], out))
    }

    pub fn recon(
        &mut self,
        x: NodeId,
        kernel: Arc<Vec<f64>>,
        modes: usize,
        next: usize,
        stride: usize,
        overlap: usize,
    ) -> Result<NodeId> {
        let out = ops::windowed_recon(&self.values[x], &kernel, modes, next, stride, overlap)?;
        Ok(self.push(
            Op::Recon {
                kernel,
                modes,
                next,
                stride,
                overlap,
            },
            vec![x],
            out,
        ))
    }

    pub fn gelu(&mut self, x: NodeId) -> NodeId {
        let out = ops::gelu(&self.values[x]);
        self.push(Op::Gelu, vec![x], out)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.values[a].same_layout(&self.values[b])?;
        let mut out = self.values[a].clone();
        for (o, v) in out.values.iter_mut().zip(&self.values[b].values) {
            *o += v;
        }
        Ok(self.push(Op::Add, vec![a, b], out))
    }

    pub fn crop(&mut self, x: NodeId, lo: &[usize], hi: &[usize]) -> Result<NodeId> {
        let out = ops::crop(&self.values[x], lo, hi)?;
        Ok(self.push(
            Op::Crop {
                lo: lo.to_vec(),
                hi: hi.to_vec(),
            },
            vec![x],
            out,
        ))
    }

    pub fn extend_periodic(&mut self, x: NodeId, lo: &[usize], hi: &[usize]) -> NodeId {
        let out = ops::extend_periodic(&self.values[x], lo, hi);
        self.push(
            Op::ExtendPeriodic {
                lo: lo.to_vec(),
                hi: hi.to_vec(),
            },
            vec![x],
            out,
        )
    }

    pub fn sum_all(&mut self, x: NodeId) -> NodeId {
        let total: f64 = self.values[x].values.iter().sum();
        self.push(Op::SumAll, vec![x], scalar_field(total))
    }

    pub fn point_norm_mean(&mut self, x: NodeId, target: GridField) -> Result<NodeId> {
        let loss = ops::point_norm_mean(&self.values[x], &target)?;
        Ok(self.push(Op::PointNormMean { target }, vec![x], scalar_field(loss)))
    }

    pub fn mean_scalars(&mut self, xs: &[NodeId]) -> NodeId {
        let mean = xs.iter().map(|&x| self.values[x].values[0]).sum::<f64>() / xs.len() as f64;
        self.push(Op::MeanScalars, xs.to_vec(), scalar_field(mean))
    }

    fn accum(grads: &mut [Option<GridField>], id: NodeId, g: GridField) {
        match &mut grads[id] {
            Some(acc) => {
                for (a, v) in acc.values.iter_mut().zip(&g.values) {
                    *a += v;
                }
            }
            slot => *slot = Some(g),
        }
    }

    /// Replays adjoints in reverse order, seeding the final (scalar) node
    /// with 1.0. Weight gradients accumulate into `store`; the tape is
    /// consumed.
    pub fn backward(&mut self, store: &mut WeightStore) -> Result<()> {
        if self.consumed || self.nodes.is_empty() {
            return Err(LnoError::TapeConsumed);
        }
        self.consumed = true;
        let last = self.nodes.len() - 1;
        if self.values[last].values.len() != 1 {
            return Err(LnoError::ShapeMismatch {
                axis: 0,
                detail: "backward requires the last node to be a scalar loss".into(),
            });
        }
        let mut grads: Vec<Option<GridField>> = vec![None; self.nodes.len()];
        grads[last] = Some(scalar_field(1.0));

        for id in (0..self.nodes.len()).rev() {
            let g = match grads[id].take() {
                Some(g) => g,
                None => continue,
            };
            let node = &self.nodes[id];
            match &node.op {
                Op::Input => {}
                Op::Conv { weight, stride } => {
                    let x = node.inputs[0];
                    let gin = ops::conv_backward_input(&g, store.get(*weight), *stride, &self.values[x]);
                    if store.get(*weight).requires_grad {
                        let shape = store.get(*weight).shape.clone();
                        ops::conv_backward_weight(
                            &g,
                            &self.values[x],
                            &shape,
                            *stride,
                            &mut store.tensors[*weight].grad,
                        );
                    }
                    Self::accum(&mut grads, x, gin);
                }
                Op::Decomp {
                    kernel,
                    modes,
                    next,
                    stride,
                } => {
                    let x = node.inputs[0];
                    let gin =
                        ops::windowed_decomp_backward(&g, kernel, *modes, *next, *stride, &self.values[x]);
                    Self::accum(&mut grads, x, gin);
                }
                Op::Mix { weight } => {
                    let x = node.inputs[0];
                    let gin = ops::channel_mix_backward_input(&g, store.get(*weight));
                    if store.get(*weight).requires_grad {
                        let modes = store.get(*weight).shape[1];
                        ops::channel_mix_backward_weight(
                            &g,
                            &self.values[x],
                            modes,
                            &mut store.tensors[*weight].grad,
                        );
                    }
                    Self::accum(&mut grads, x, gin);
                }
                Op::Recon {
                    kernel,
                    modes,
                    next,
                    stride,
                    overlap,
                } => {
                    let x = node.inputs[0];
                    let gin = ops::windowed_recon_backward(
                        &g,
                        kernel,
                        *modes,
                        *next,
                        *stride,
                        *overlap,
                        &self.values[x],
                    );
                    Self::accum(&mut grads, x, gin);
                }
                Op::Gelu => {
                    let x = node.inputs[0];
                    let mut gin = self.values[x].clone();
                    for (v, gv) in gin.values.iter_mut().zip(&g.values) {
                        *v = ops::gelu_grad_scalar(*v) * gv;
                    }
                    Self::accum(&mut grads, x, gin);
                }
                Op::Add => {
                    let (a, b) = (node.inputs[0], node.inputs[1]);
                    Self::accum(&mut grads, a, g.clone());
                    Self::accum(&mut grads, b, g.clone());
                }
                Op::Crop { lo, .. } => {
                    let x = node.inputs[0];
                    let gin = ops::crop_backward(&g, lo, &self.values[x]);
                    Self::accum(&mut grads, x, gin);
                }
                Op::ExtendPeriodic { lo, .. } => {
                    let x = node.inputs[0];
                    let gin = ops::extend_periodic_backward(&g, lo, &self.values[x]);
                    Self::accum(&mut grads, x, gin);
                }
                Op::SumAll => {
                    let x = node.inputs[0];
                    let seed = g.values[0];
                    let mut gin = GridField::zeros(
                        self.values[x].channels,
                        &self.values[x].dims,
                        self.values[x].dx,
                    );
                    for v in &mut gin.values {
                        *v = seed;
                    }
                    Self::accum(&mut grads, x, gin);
                }
                Op::PointNormMean { target } => {
                    let x = node.inputs[0];
                    let gin = ops::point_norm_mean_backward(&self.values[x], target, g.values[0]);
                    Self::accum(&mut grads, x, gin);
                }
                Op::MeanScalars => {
                    let seed = g.values[0] / node.inputs.len() as f64;
                    let inputs = node.inputs.clone();
                    for x in inputs {
                        Self::accum(&mut grads, x, scalar_field(seed));
                    }
                }
            }
            grads[id] = Some(g);
        }
        self.grads = grads;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::WeightTensor;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sum_of_identity_conv_gives_unit_input_gradient() {
        let mut store = WeightStore::new();
        let w = store.add(WeightTensor::new(&[1, 1, 1, 1], vec![1.0], true).unwrap());
        let mut tape = Tape::new();
        let f = GridField::from_fn(1, &[4, 4], 1.0, |_, idx| (idx[0] + idx[1]) as f64);
        let x = tape.input(f);
        let y = tape.conv(&store, x, w, 1).unwrap();
        tape.sum_all(y);
        tape.backward(&mut store).unwrap();
        let gin = tape.grad(x).unwrap();
        assert!(gin.values.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn untouched_weight_keeps_zero_gradient() {
        let mut store = WeightStore::new();
        let used = store.add(WeightTensor::new(&[1, 1, 1], vec![2.0], true).unwrap());
        let unused = store.add(WeightTensor::new(&[1, 1, 1], vec![5.0], true).unwrap());
        let mut tape = Tape::new();
        let x = tape.input(GridField::from_values(1, &[3], 1.0, vec![1.0, 2.0, 3.0]).unwrap());
        let y = tape.conv(&store, x, used, 1).unwrap();
        tape.sum_all(y);
        tape.backward(&mut store).unwrap();
        assert!(store.get(used).grad.iter().any(|&g| g != 0.0));
        assert!(store.get(unused).grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn backward_twice_errors() {
        let mut store = WeightStore::new();
        let mut tape = Tape::new();
        let x = tape.input(GridField::from_values(1, &[2], 1.0, vec![1.0, 2.0]).unwrap());
        tape.sum_all(x);
        tape.backward(&mut store).unwrap();
        assert!(matches!(tape.backward(&mut store), Err(LnoError::TapeConsumed)));
        assert!(matches!(Tape::new().backward(&mut store), Err(LnoError::TapeConsumed)));
    }

    /// Builds a small graph exercising every differentiable op and returns
    /// the loss for the current weight values.
    fn composite_loss(store: &WeightStore, input: &GridField, target: &GridField) -> (Tape, NodeId) {
        let phi: Arc<Vec<f64>> = Arc::new(vec![0.25, 0.25, 0.25, 0.25, -0.5, -0.1, 0.1, 0.5]);
        let psi: Arc<Vec<f64>> = Arc::new(vec![1.0, 1.0, 1.0, 1.0, -1.0, -0.3, 0.3, 1.0]);
        let mut tape = Tape::new();
        let x = tape.input(input.clone());
        let e = tape.extend_periodic(x, &[1], &[1]);
        let c = tape.conv(store, e, 0, 1).unwrap();
        let a = tape.gelu(c);
        let dec = tape.decomp(a, phi, 2, 4, 2).unwrap();
        let mixed = tape.mix(store, dec, 1).unwrap();
        let rec = tape.recon(mixed, psi, 2, 4, 2, 2).unwrap();
        let skip = tape.crop(a, &[2], &[2]).unwrap();
        let sum = tape.add(rec, skip).unwrap();
        let loss = tape.point_norm_mean(sum, target.clone()).unwrap();
        (tape, loss)
    }

    #[test]
    fn composite_gradients_match_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut store = WeightStore::new();
        let kv: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        store.add(WeightTensor::new(&[1, 1, 3], kv, true).unwrap());
        let mv: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        store.add(WeightTensor::new(&[1, 2, 2], mv, true).unwrap());

        let input = GridField::from_fn(1, &[10], 1.0, |_, _| rng.gen_range(-1.0..1.0));
        let target = GridField::from_fn(1, &[6], 1.0, |_, _| rng.gen_range(-1.0..1.0));

        let (mut tape, _) = composite_loss(&store, &input, &target);
        tape.backward(&mut store).unwrap();
        let analytic: Vec<Vec<f64>> = store.tensors.iter().map(|t| t.grad.clone()).collect();

        let h = 1e-6;
        for wid in 0..store.tensors.len() {
            for j in 0..store.tensors[wid].len() {
                let orig = store.tensors[wid].values[j];
                store.tensors[wid].values[j] = orig + h;
                let (tp, l) = composite_loss(&store, &input, &target);
                let fp = tp.value(l).values[0];
                store.tensors[wid].values[j] = orig - h;
                let (tm, l) = composite_loss(&store, &input, &target);
                let fm = tm.value(l).values[0];
                store.tensors[wid].values[j] = orig;
                let fd = (fp - fm) / (2.0 * h);
                let got = analytic[wid][j];
                let denom = fd.abs().max(got.abs()).max(1e-8);
                assert!(
                    (fd - got).abs() / denom < 1e-4,
                    "weight {wid}[{j}]: fd {fd} vs tape {got}"
                );
            }
        }
    }
}
