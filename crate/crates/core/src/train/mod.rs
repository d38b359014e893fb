//! Training pipeline: window sampling with augmentation, the recurrent
//! rollout loss, Adam with the stepped learning-rate schedule, and the
//! validation error table.

pub mod augment;

use crate::boundary::{march, march_amounts, BoundarySpec};
use crate::error::{LnoError, Result};
use crate::field::GridField;
use crate::model::LnoModel;
use crate::solvers::dataset::Dataset;
use crate::tensor::ops;
use crate::tensor::tape::{NodeId, Tape};
use crate::tensor::WeightStore;
use crate::trajectory::Trajectory;
use augment::{AugmentTransform, ALL_TRANSFORMS};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Iteration schedule: stepped learning-rate decay and the recurrent
/// rollout/batch sizes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainSchedule {
    pub iterations: usize,
    pub lr0: f64,
    pub decay_factor: f64,
    pub decay_interval: usize,
    pub rollout: usize,
    pub batch: usize,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        TrainSchedule {
            iterations: 100_000,
            lr0: 1e-3,
            decay_factor: 0.7,
            decay_interval: 10_000,
            rollout: 10,
            batch: 4,
        }
    }
}

impl TrainSchedule {
    /// Piecewise-constant learning rate: lr0 * factor^(i / interval).
    pub fn lr(&self, iteration: usize) -> f64 {
        self.lr0 * self.decay_factor.powi((iteration / self.decay_interval) as i32)
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0
            || self.rollout == 0
            || self.batch == 0
            || self.decay_interval == 0
            || !(self.lr0 > 0.0)
            || !(self.decay_factor > 0.0)
        {
            return Err(LnoError::InvalidConfig {
                field: "schedule",
                detail: format!("{self:?} has a non-positive entry"),
            });
        }
        Ok(())
    }
}

/// One training sample: a start frame and the following rollout targets,
/// jointly augmented.
#[derive(Debug, Clone)]
pub struct Window {
    pub input: GridField,
    pub targets: Vec<GridField>,
    pub transform: AugmentTransform,
}

/// Draws a uniformly random trajectory, start index, and (in 2-D)
/// augmentation; deterministic in the RNG state.
pub fn sample_window(dataset: &Dataset, rollout: usize, rng: &mut ChaCha8Rng) -> Result<Window> {
    let frames = dataset.frames_per_trajectory();
    if frames < rollout + 1 {
        return Err(LnoError::InvalidConfig {
            field: "dataset",
            detail: format!(
                "trajectories hold {frames} frames; a rollout of {rollout} needs at least {}",
                rollout + 1
            ),
        });
    }
    let traj = &dataset.trajectories[rng.gen_range(0..dataset.trajectories.len())];
    let start = rng.gen_range(0..=frames - rollout - 1);
    let transform = if dataset.dims.len() == 2 {
        ALL_TRANSFORMS[rng.gen_range(0..ALL_TRANSFORMS.len())]
    } else {
        AugmentTransform::Identity
    };
    let vector = dataset.equation.vector_channels();
    let apply = |f: &GridField| -> Result<GridField> {
        if dataset.dims.len() == 2 {
            transform.apply(f, vector)
        } else {
            Ok(f.clone())
        }
    };
    let input = apply(&traj.frames[start])?;
    let targets = traj.frames[start + 1..=start + rollout]
        .iter()
        .map(apply)
        .collect::<Result<Vec<_>>>()?;
    Ok(Window {
        input,
        targets,
        transform,
    })
}

/// Recurrent rollout loss on a tape: periodic extension each step, model
/// forward, and the per-point-norm mean against each target, averaged over
/// the rollout.
pub fn rollout_loss(
    model: &LnoModel,
    input: &GridField,
    targets: &[GridField],
    spec: &BoundarySpec,
) -> Result<(Tape, NodeId)> {
    if spec
        .axes
        .iter()
        .any(|a| a.lo != crate::boundary::BoundaryRule::Periodic || a.hi != crate::boundary::BoundaryRule::Periodic)
    {
        return Err(LnoError::InvalidConfig {
            field: "boundary",
            detail: "training rollouts extend periodically on every side".into(),
        });
    }
    let amounts = march_amounts(model, &input.dims)?;
    let r = model.corrosion().total;
    let lo: Vec<usize> = amounts.iter().map(|a| a.0).collect();
    let hi: Vec<usize> = amounts.iter().map(|a| a.1).collect();
    let crop_lo: Vec<usize> = amounts.iter().map(|a| a.0 - r).collect();
    let crop_hi: Vec<usize> = amounts.iter().map(|a| a.1 - r).collect();
    let needs_crop = crop_lo.iter().chain(&crop_hi).any(|&e| e > 0);

    let mut tape = Tape::new();
    let mut x = tape.input(input.clone());
    let mut losses = Vec::with_capacity(targets.len());
    for target in targets {
        let ext = tape.extend_periodic(x, &lo, &hi);
        let mut y = model.forward_traced(&mut tape, ext)?;
        if needs_crop {
            y = tape.crop(y, &crop_lo, &crop_hi)?;
        }
        losses.push(tape.point_norm_mean(y, target.clone())?);
        x = y;
    }
    let loss = tape.mean_scalars(&losses);
    let value = tape.value(loss).values[0];
    if !value.is_finite() {
        return Err(LnoError::NonFinite {
            context: "rollout loss".into(),
            step: targets.len(),
            max_abs: f64::NAN,
        });
    }
    Ok((tape, loss))
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// First/second-moment accumulators for Adam, one pair per weight tensor.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: u64,
}

impl AdamState {
    pub fn new(store: &WeightStore) -> Self {
        AdamState {
            m: store.tensors.iter().map(|t| vec![0.0; t.len()]).collect(),
            v: store.tensors.iter().map(|t| vec![0.0; t.len()]).collect(),
            step: 0,
        }
    }
}

/// One bias-corrected Adam update from the accumulated gradients.
pub fn adam_step(store: &mut WeightStore, state: &mut AdamState, lr: f64) {
    state.step += 1;
    let bc1 = 1.0 - ADAM_BETA1.powi(state.step as i32);
    let bc2 = 1.0 - ADAM_BETA2.powi(state.step as i32);
    for (t, (m, v)) in store.tensors.iter_mut().zip(state.m.iter_mut().zip(&mut state.v)) {
        if !t.requires_grad {
            continue;
        }
        for i in 0..t.values.len() {
            let g = t.grad[i];
            m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g;
            v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g * g;
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            t.values[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct LossPoint {
    pub iteration: usize,
    pub lr: f64,
    pub loss: f64,
}

/// Events surfaced to the caller during training.
pub enum TrainEvent<'a> {
    Log(LossPoint),
    Checkpoint { iteration: usize, model: &'a LnoModel },
}

#[derive(Debug, Clone)]
pub struct TrainOptions {
    pub schedule: TrainSchedule,
    pub seed: u64,
    pub log_every: usize,
    pub checkpoint_every: Option<usize>,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            schedule: TrainSchedule::default(),
            seed: 0,
            log_every: 100,
            checkpoint_every: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    /// Mean loss over the first 10 iterations.
    pub initial_loss: f64,
    /// Mean loss over the last 50 iterations.
    pub final_loss: f64,
    pub curve: Vec<LossPoint>,
}

/// Seeded single-threaded training loop; identical seeds reproduce identical
/// weights bit for bit. Gradients of the batch windows are summed before
/// each Adam step; divergence (loss above 1000x its initial value) aborts.
pub fn train_loop(
    model: &mut LnoModel,
    dataset: &Dataset,
    opts: &TrainOptions,
    sink: &mut dyn FnMut(&TrainEvent) -> Result<()>,
) -> Result<TrainReport> {
    opts.schedule.validate()?;
    if dataset.channels != model.config.d_u || dataset.dims.len() != model.config.d {
        return Err(LnoError::InvalidConfig {
            field: "dataset",
            detail: format!(
                "dataset is {}-D with {} channels; model expects {}-D with {}",
                dataset.dims.len(),
                dataset.channels,
                model.config.d,
                model.config.d_u
            ),
        });
    }
    let spec = BoundarySpec::periodic(model.config.d, model.corrosion().total);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut adam = AdamState::new(&model.store);
    let mut losses = Vec::with_capacity(opts.schedule.iterations);
    let mut curve = Vec::new();
    let mut initial = f64::NAN;

    for iteration in 0..opts.schedule.iterations {
        model.store.zero_grads();
        let mut batch_loss = 0.0;
        for _ in 0..opts.schedule.batch {
            let window = sample_window(dataset, opts.schedule.rollout, &mut rng)?;
            let (mut tape, loss) = rollout_loss(model, &window.input, &window.targets, &spec)?;
            batch_loss += tape.value(loss).values[0];
            tape.backward(&mut model.store)?;
        }
        let loss = batch_loss / opts.schedule.batch as f64;
        if iteration == 0 {
            initial = loss;
        }
        if !loss.is_finite() {
            return Err(LnoError::NonFinite {
                context: "training loss".into(),
                step: iteration,
                max_abs: f64::NAN,
            });
        }
        if loss > 1e3 * initial {
            return Err(LnoError::Diverged {
                iteration,
                loss,
                initial,
            });
        }
        losses.push(loss);
        let lr = opts.schedule.lr(iteration);
        adam_step(&mut model.store, &mut adam, lr);

        if iteration % opts.log_every == 0 || iteration + 1 == opts.schedule.iterations {
            let point = LossPoint {
                iteration,
                lr,
                loss,
            };
            curve.push(point);
            sink(&TrainEvent::Log(point))?;
        }
        if let Some(every) = opts.checkpoint_every {
            if iteration > 0 && iteration % every == 0 {
                sink(&TrainEvent::Checkpoint {
                    iteration,
                    model,
                })?;
            }
        }
    }
    let head = losses.len().min(10);
    let tail = losses.len().min(50);
    Ok(TrainReport {
        initial_loss: losses[..head].iter().sum::<f64>() / head as f64,
        final_loss: losses[losses.len() - tail..].iter().sum::<f64>() / tail as f64,
        curve,
    })
}

/// Mean validation error at the requested times, averaged over trajectories:
/// the model marches from each trajectory's first frame with periodic
/// extension and is compared to the recorded frames.
pub fn validate_error(
    model: &LnoModel,
    trajectories: &[Trajectory],
    times: &[f64],
) -> Result<Vec<(f64, f64)>> {
    let spec = BoundarySpec::periodic(model.config.d, model.corrosion().total);
    validate_error_steps(
        |_, state| march(model, state, &spec, None),
        trajectories,
        times,
    )
}

/// Core of `validate_error` with an injectable one-step predictor
/// `(step_index, state) -> next`.
pub fn validate_error_steps(
    mut step: impl FnMut(usize, &GridField) -> Result<GridField>,
    trajectories: &[Trajectory],
    times: &[f64],
) -> Result<Vec<(f64, f64)>> {
    if trajectories.is_empty() || times.is_empty() {
        return Err(LnoError::InvalidConfig {
            field: "validate",
            detail: "need at least one trajectory and one time".into(),
        });
    }
    let dt = trajectories[0].dt;
    let mut ks = Vec::with_capacity(times.len());
    for &t in times {
        let k = (t / dt).round() as usize;
        if k == 0 || ((k as f64) * dt - t).abs() > 1e-9 * dt.max(t) {
            return Err(LnoError::InvalidConfig {
                field: "times",
                detail: format!("time {t} is not a positive multiple of dt {dt}"),
            });
        }
        for traj in trajectories {
            if k >= traj.len() {
                return Err(LnoError::InvalidConfig {
                    field: "times",
                    detail: format!(
                        "time {t} needs frame {k} but trajectories hold {}",
                        traj.len()
                    ),
                });
            }
        }
        ks.push(k);
    }
    let max_k = *ks.iter().max().expect("nonempty");
    let mut sums = vec![0.0; ks.len()];
    for traj in trajectories {
        let mut state = traj.frames[0].clone();
        for step_idx in 1..=max_k {
            state = step(step_idx, &state)?;
            for (slot, &k) in ks.iter().enumerate() {
                if k == step_idx {
                    sums[slot] += ops::point_norm_mean(&state, &traj.frames[k])?;
                }
            }
        }
    }
    Ok(times
        .iter()
        .zip(&sums)
        .map(|(&t, &s)| (t, s / trajectories.len() as f64))
        .collect())
}
