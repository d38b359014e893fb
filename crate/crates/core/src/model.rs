//! The assembled operator: lifting, parallel physical/spectral blocks,
//! projection, plus corrosion-width calculus, parameter counting, and
//! checkpoint serialization.

use crate::error::{LnoError, Result};
use crate::field::GridField;
use crate::spectral::{make_kernels, SpectralKernels};
use crate::tensor::ops;
use crate::tensor::tape::{NodeId, Tape};
use crate::tensor::{WeightId, WeightStore, WeightTensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::Read;
use std::path::Path;

pub const CHECKPOINT_VERSION: u32 = 1;

fn default_width() -> usize {
    40
}
fn default_proj_hidden() -> usize {
    128
}
fn default_blocks() -> usize {
    4
}
fn default_half_width() -> usize {
    1
}

/// Hyperparameters of the operator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LnoConfig {
    /// Spatial dimensions (1 or 2).
    pub d: usize,
    /// Physical channels of the solved fields.
    pub d_u: usize,
    /// Lifted interior channels.
    #[serde(default = "default_width")]
    pub width: usize,
    /// Projection hidden channels.
    #[serde(default = "default_proj_hidden")]
    pub proj_hidden: usize,
    /// Number of inner blocks.
    #[serde(default = "default_blocks")]
    pub blocks: usize,
    /// Spectral window points per axis (N).
    pub window: usize,
    /// Retained modes per axis (M).
    pub modes: usize,
    /// Window repetitions per axis (k); stride is window/k.
    pub repetitions: usize,
    /// Physical-kernel half width (H); kernels span 2H+1 points per axis.
    #[serde(default = "default_half_width")]
    pub half_width: usize,
    /// Grid spacing.
    pub dx: f64,
    /// Time interval of one forward step.
    pub dt: f64,
}

impl LnoConfig {
    pub fn validate(&self) -> Result<()> {
        let err = |field: &'static str, detail: String| Err(LnoError::InvalidConfig { field, detail });
        if !(1..=2).contains(&self.d) {
            return err("d", format!("spatial dims must be 1 or 2, got {}", self.d));
        }
        if self.d_u == 0 {
            return err("d_u", "at least one physical channel required".into());
        }
        if self.width == 0 || self.proj_hidden == 0 {
            return err("width", "channel counts must be positive".into());
        }
        if self.blocks == 0 {
            return err("blocks", "at least one inner block required".into());
        }
        if self.window < 2 {
            return err("window", format!("window must have at least 2 points, got {}", self.window));
        }
        if self.modes < 2 || self.modes > self.window {
            return err(
                "modes",
                format!("modes must satisfy 2 <= M <= N, got M={} N={}", self.modes, self.window),
            );
        }
        if self.repetitions == 0 || self.window % self.repetitions != 0 {
            return err(
                "repetitions",
                format!("repetitions {} must divide window {}", self.repetitions, self.window),
            );
        }
        if self.half_width == 0 {
            return err("half_width", "physical kernels need H >= 1".into());
        }
        if !(self.dx > 0.0) {
            return err("dx", format!("grid spacing must be positive, got {}", self.dx));
        }
        if !(self.dt > 0.0) {
            return err("dt", format!("time interval must be positive, got {}", self.dt));
        }
        Ok(())
    }

    /// Spectral stride s = N/k.
    pub fn stride(&self) -> usize {
        self.window / self.repetitions
    }

    /// Physical kernel extent per axis.
    pub fn kernel_extent(&self) -> usize {
        2 * self.half_width + 1
    }
}

/// Per-stage corrosion bookkeeping, all in grid units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorrosionReport {
    /// Lifting stage: H.
    pub r1: usize,
    /// One inner block: max(((k-1)/k)N, 2H).
    pub r2: usize,
    /// Projection stage: pointwise, zero.
    pub r3: usize,
    /// Total width R = r1 + n*r2 + r3 per side.
    pub total: usize,
    /// Local-related range N/k + R.
    pub r_min: usize,
}

/// Corrosion width of the architecture: each forward pass shrinks the domain
/// by `total` grid points per side.
pub fn corrosion(config: &LnoConfig) -> CorrosionReport {
    let spectral = config.window - config.stride();
    let physical = 2 * config.half_width;
    let r1 = config.half_width;
    let r2 = spectral.max(physical);
    let r3 = 0;
    let total = r1 + config.blocks * r2 + r3;
    CorrosionReport {
        r1,
        r2,
        r3,
        total,
        r_min: config.stride() + total,
    }
}

/// Closed-form trainable-weight count; must equal the built model exactly.
pub fn count_weights(config: &LnoConfig) -> usize {
    let kernel = config.kernel_extent().pow(config.d as u32);
    let modes = config.modes.pow(config.d as u32);
    let lift = kernel * config.d_u * config.width;
    let block = 2 * kernel * config.width * config.width + config.width * modes * modes;
    let proj = config.width * config.proj_hidden + config.proj_hidden * config.d_u;
    lift + config.blocks * block + proj
}

#[derive(Debug, Clone)]
struct BlockIds {
    conv1: WeightId,
    conv2: WeightId,
    mix: WeightId,
}

/// The assembled operator with its weight store and constant spectral kernels.
#[derive(Debug, Clone)]
pub struct LnoModel {
    pub config: LnoConfig,
    pub kernels: SpectralKernels,
    pub store: WeightStore,
    lifting: WeightId,
    blocks: Vec<BlockIds>,
    proj1: WeightId,
    proj2: WeightId,
}

/// Canonical checkpoint ordering: lifting, per block (conv1, conv2, mix),
/// proj1, proj2.
fn weight_order(blocks: usize) -> Vec<String> {
    let mut names = vec!["lifting".to_string()];
    for i in 0..blocks {
        names.push(format!("block{i}.conv1"));
        names.push(format!("block{i}.conv2"));
        names.push(format!("block{i}.mix"));
    }
    names.push("proj1".into());
    names.push("proj2".into());
    names
}

impl LnoModel {
    /// Builds a model with seeded uniform +-(fan_in)^{-1/2} initialization.
    /// Weights are drawn in checkpoint order, so a seed fully determines the
    /// model.
    pub fn build(config: LnoConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let kernels = make_kernels(config.d, config.window, config.modes)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = WeightStore::new();
        let kext = config.kernel_extent();
        let modes = kernels.modes();

        let conv_shape = |co: usize, ci: usize| -> Vec<usize> {
            let mut s = vec![co, ci];
            s.extend(std::iter::repeat(kext).take(config.d));
            s
        };
        let point_shape = |co: usize, ci: usize| -> Vec<usize> {
            let mut s = vec![co, ci];
            s.extend(std::iter::repeat(1).take(config.d));
            s
        };
        let kernel_fan = kext.pow(config.d as u32);

        let lifting = store.add(WeightTensor::uniform_fan_in(
            &conv_shape(config.width, config.d_u),
            config.d_u * kernel_fan,
            &mut rng,
        ));
        let mut blocks = Vec::with_capacity(config.blocks);
        for _ in 0..config.blocks {
            let conv1 = store.add(WeightTensor::uniform_fan_in(
                &conv_shape(config.width, config.width),
                config.width * kernel_fan,
                &mut rng,
            ));
            let conv2 = store.add(WeightTensor::uniform_fan_in(
                &conv_shape(config.width, config.width),
                config.width * kernel_fan,
                &mut rng,
            ));
            let mix = store.add(WeightTensor::uniform_fan_in(
                &[config.width, modes, modes],
                modes,
                &mut rng,
            ));
            blocks.push(BlockIds { conv1, conv2, mix });
        }
        let proj1 = store.add(WeightTensor::uniform_fan_in(
            &point_shape(config.proj_hidden, config.width),
            config.width,
            &mut rng,
        ));
        let proj2 = store.add(WeightTensor::uniform_fan_in(
            &point_shape(config.d_u, config.proj_hidden),
            config.proj_hidden,
            &mut rng,
        ));
        Ok(LnoModel {
            config,
            kernels,
            store,
            lifting,
            blocks,
            proj1,
            proj2,
        })
    }

    pub fn corrosion(&self) -> CorrosionReport {
        corrosion(&self.config)
    }

    pub fn weight_count(&self) -> usize {
        self.store.total_values()
    }

    /// Per-side crops aligning the two block paths to the common corrosion.
    fn block_crops(&self) -> (usize, usize) {
        let report = corrosion(&self.config);
        let spectral = self.config.window - self.config.stride();
        let physical = 2 * self.config.half_width;
        (report.r2 - physical, report.r2 - spectral)
    }

    /// Checks one axis of a candidate input size against every stage.
    pub(crate) fn axis_valid(&self, n: usize) -> bool {
        let cfg = &self.config;
        let (nwin, s) = (cfg.window, cfg.stride());
        let r2 = corrosion(cfg).r2;
        if n <= 2 * cfg.half_width {
            return false;
        }
        let mut m = n - 2 * cfg.half_width;
        for _ in 0..cfg.blocks {
            if m < nwin.max(4 * cfg.half_width + 1) || (m - nwin) % s != 0 {
                return false;
            }
            m -= 2 * r2;
        }
        m >= 1
    }

    /// Validates input dims, returning axis-level errors that name the
    /// nearest valid size.
    pub fn check_input_dims(&self, dims: &[usize]) -> Result<()> {
        if dims.len() != self.config.d {
            return Err(LnoError::ShapeMismatch {
                axis: 0,
                detail: format!("model is {}-D, field is {}-D", self.config.d, dims.len()),
            });
        }
        for (axis, &n) in dims.iter().enumerate() {
            if !self.axis_valid(n) {
                let suggested = (n + 1..n + 8 * self.config.window)
                    .find(|&c| self.axis_valid(c))
                    .unwrap_or(n + 1);
                return Err(LnoError::GridTooSmall {
                    axis,
                    size: n,
                    suggested,
                });
            }
        }
        Ok(())
    }

    /// One forward pass. Output dims are input dims minus twice the
    /// corrosion width per axis.
    pub fn forward(&self, input: &GridField) -> Result<GridField> {
        self.check_field(input)?;
        let cfg = &self.config;
        let (crop_phys, crop_spec) = self.block_crops();
        let modes = self.kernels.modes();
        let (nwin, s, k) = (cfg.window, cfg.stride(), cfg.repetitions);

        let mut x = ops::conv_forward(input, self.store.get(self.lifting), 1)?;
        for block in &self.blocks {
            let p = ops::conv_forward(&x, self.store.get(block.conv1), 1)?;
            let p = ops::gelu(&p);
            let p = ops::conv_forward(&p, self.store.get(block.conv2), 1)?;
            let p = self.crop_both(&p, crop_phys)?;

            let c = ops::windowed_decomp(&x, &self.kernels.phi, modes, nwin, s)?;
            let c = ops::channel_mix_forward(&c, self.store.get(block.mix))?;
            let c = ops::windowed_recon(&c, &self.kernels.psi, modes, nwin, s, k)?;
            let c = self.crop_both(&c, crop_spec)?;

            let mut sum = p;
            for (a, b) in sum.values.iter_mut().zip(&c.values) {
                *a += b;
            }
            x = ops::gelu(&sum);
        }
        let x = ops::conv_forward(&x, self.store.get(self.proj1), 1)?;
        let x = ops::gelu(&x);
        ops::conv_forward(&x, self.store.get(self.proj2), 1)
    }

    /// Forward pass recorded on a tape for training.
    pub fn forward_traced(&self, tape: &mut Tape, input: NodeId) -> Result<NodeId> {
        self.check_field(tape.value(input))?;
        let cfg = &self.config;
        let (crop_phys, crop_spec) = self.block_crops();
        let modes = self.kernels.modes();
        let (nwin, s, k) = (cfg.window, cfg.stride(), cfg.repetitions);
        let cp = vec![crop_phys; cfg.d];
        let cs = vec![crop_spec; cfg.d];

        let mut x = tape.conv(&self.store, input, self.lifting, 1)?;
        for block in &self.blocks {
            let p = tape.conv(&self.store, x, block.conv1, 1)?;
            let p = tape.gelu(p);
            let p = tape.conv(&self.store, p, block.conv2, 1)?;
            let p = if crop_phys > 0 { tape.crop(p, &cp, &cp)? } else { p };

            let c = tape.decomp(x, self.kernels.phi.clone(), modes, nwin, s)?;
            let c = tape.mix(&self.store, c, block.mix)?;
            let c = tape.recon(c, self.kernels.psi.clone(), modes, nwin, s, k)?;
            let c = if crop_spec > 0 { tape.crop(c, &cs, &cs)? } else { c };

            let sum = tape.add(p, c)?;
            x = tape.gelu(sum);
        }
        let x = tape.conv(&self.store, x, self.proj1, 1)?;
        let x = tape.gelu(x);
        tape.conv(&self.store, x, self.proj2, 1)
    }

    fn check_field(&self, input: &GridField) -> Result<()> {
        if input.channels != self.config.d_u {
            return Err(LnoError::ShapeMismatch {
                axis: 0,
                detail: format!(
                    "model expects {} channels, field has {}",
                    self.config.d_u, input.channels
                ),
            });
        }
        self.check_input_dims(&input.dims)
    }

    fn crop_both(&self, f: &GridField, amount: usize) -> Result<GridField> {
        if amount == 0 {
            return Ok(f.clone());
        }
        let a = vec![amount; self.config.d];
        ops::crop(f, &a, &a)
    }

    fn ordered_ids(&self) -> Vec<WeightId> {
        let mut ids = vec![self.lifting];
        for b in &self.blocks {
            ids.extend([b.conv1, b.conv2, b.mix]);
        }
        ids.extend([self.proj1, self.proj2]);
        ids
    }

    /// Serializes as a one-line JSON header (config, version, byte offsets,
    /// ordering manifest) followed by raw little-endian f64 values in
    /// checkpoint order.
    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        let ids = self.ordered_ids();
        let names = weight_order(self.config.blocks);
        let mut sections = Vec::with_capacity(ids.len());
        let mut offset = 0usize;
        for (id, name) in ids.iter().zip(&names) {
            let t = self.store.get(*id);
            sections.push(CheckpointSection {
                name: name.clone(),
                shape: t.shape.clone(),
                byte_offset: offset,
                values: t.len(),
            });
            offset += t.len() * 8;
        }
        let header = CheckpointHeader {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            config: self.config.clone(),
            total_values: offset / 8,
            weights: sections,
        };
        let mut out = Vec::with_capacity(offset + 1024);
        serde_json::to_writer(&mut out, &header).map_err(|e| LnoError::Format(e.to_string()))?;
        out.push(b'\n');
        for id in &ids {
            for v in &self.store.get(*id).values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        std::fs::write(path, out)?;
        Ok(())
    }

    pub fn load_checkpoint(path: &Path) -> Result<Self> {
        let mut file = std::fs::File::open(path)?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes)?;
        let newline = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| LnoError::Format("missing checkpoint header line".into()))?;
        let header: CheckpointHeader = serde_json::from_slice(&bytes[..newline])
            .map_err(|e| LnoError::Format(format!("bad checkpoint header: {e}")))?;
        if header.format != CHECKPOINT_FORMAT {
            return Err(LnoError::Format(format!("not a checkpoint file: format {:?}", header.format)));
        }
        if header.version != CHECKPOINT_VERSION {
            return Err(LnoError::VersionMismatch {
                found: header.version,
                expected: CHECKPOINT_VERSION,
            });
        }
        let required = count_weights(&header.config);
        if header.total_values != required {
            return Err(LnoError::WeightCountMismatch {
                declared: header.total_values,
                required,
            });
        }
        let blob = &bytes[newline + 1..];
        if blob.len() != required * 8 {
            return Err(LnoError::Format(format!(
                "truncated checkpoint blob: {} bytes, expected {}",
                blob.len(),
                required * 8
            )));
        }
        let mut model = LnoModel::build(header.config.clone(), 0)?;
        let ids = model.ordered_ids();
        let names = weight_order(model.config.blocks);
        if header.weights.len() != ids.len() {
            return Err(LnoError::Format(format!(
                "checkpoint lists {} weight sections, model has {}",
                header.weights.len(),
                ids.len()
            )));
        }
        for ((id, name), section) in ids.iter().zip(&names).zip(&header.weights) {
            if &section.name != name {
                return Err(LnoError::Format(format!(
                    "weight section {:?} out of order, expected {:?}",
                    section.name, name
                )));
            }
            let t = &mut model.store.tensors[*id];
            if section.values != t.len() || section.shape != t.shape {
                return Err(LnoError::Format(format!(
                    "weight section {:?} has shape {:?}, model needs {:?}",
                    section.name, section.shape, t.shape
                )));
            }
            let start = section.byte_offset;
            for (j, v) in t.values.iter_mut().enumerate() {
                let o = start + j * 8;
                *v = f64::from_le_bytes(blob[o..o + 8].try_into().expect("8-byte slice"));
            }
        }
        Ok(model)
    }
}

const CHECKPOINT_FORMAT: &str = "lno-checkpoint";

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointSection {
    name: String,
    shape: Vec<usize>,
    byte_offset: usize,
    values: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointHeader {
    format: String,
    version: u32,
    config: LnoConfig,
    total_values: usize,
    weights: Vec<CheckpointSection>,
}

pub fn save_checkpoint(model: &LnoModel, path: &Path) -> Result<()> {
    model.save_checkpoint(path)
}

pub fn load_checkpoint(path: &Path) -> Result<LnoModel> {
    LnoModel::load_checkpoint(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn config_2d(window: usize, modes: usize) -> LnoConfig {
        LnoConfig {
            d: 2,
            d_u: 2,
            width: 40,
            proj_hidden: 128,
            blocks: 4,
            window,
            modes,
            repetitions: 2,
            half_width: 1,
            dx: 1.0 / 64.0,
            dt: 0.05,
        }
    }

    fn tiny_config() -> LnoConfig {
        LnoConfig {
            d: 2,
            d_u: 1,
            width: 3,
            proj_hidden: 5,
            blocks: 1,
            window: 4,
            modes: 2,
            repetitions: 2,
            half_width: 1,
            dx: 1.0,
            dt: 1.0,
        }
    }

    #[test]
    fn corrosion_matches_published_configs() {
        let cases = [(12, 6, 25, 31), (16, 8, 33, 41), (24, 8, 49, 61)];
        for (window, modes, total, r_min) in cases {
            let report = corrosion(&config_2d(window, modes));
            assert_eq!(report.r1, 1);
            assert_eq!(report.r3, 0);
            assert_eq!(report.total, total, "N={window}");
            assert_eq!(report.r_min, r_min, "N={window}");
        }
    }

    #[test]
    fn weight_counts_match_published_tables() {
        assert_eq!(count_weights(&config_2d(12, 6)), 328_656);
        assert_eq!(count_weights(&config_2d(16, 8)), 776_656);
        assert_eq!(count_weights(&config_2d(24, 8)), 776_656);
        let one_d = LnoConfig {
            d: 1,
            d_u: 1,
            width: 20,
            proj_hidden: 128,
            blocks: 4,
            window: 12,
            modes: 6,
            repetitions: 2,
            half_width: 1,
            dx: 1.0 / 64.0,
            dt: 0.05,
        };
        assert_eq!(count_weights(&one_d), 15_228);
    }

    #[test]
    fn built_model_weight_total_equals_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..12 {
            let cfg = LnoConfig {
                d: rng.gen_range(1..=2),
                d_u: rng.gen_range(1..=3),
                width: rng.gen_range(1..=8),
                proj_hidden: rng.gen_range(1..=16),
                blocks: rng.gen_range(1..=4),
                window: [4, 6, 8][rng.gen_range(0..3)],
                modes: 0, // fixed below
                repetitions: 2,
                half_width: rng.gen_range(1..=2),
                dx: 0.5,
                dt: 0.1,
            };
            let cfg = LnoConfig {
                modes: rng.gen_range(2..=cfg.window.min(4)),
                ..cfg
            };
            let model = LnoModel::build(cfg.clone(), 1).unwrap();
            assert_eq!(model.weight_count(), count_weights(&cfg), "{cfg:?}");
        }
    }

    #[test]
    fn build_is_deterministic_in_seed() {
        let a = LnoModel::build(tiny_config(), 42).unwrap();
        let b = LnoModel::build(tiny_config(), 42).unwrap();
        let c = LnoModel::build(tiny_config(), 43).unwrap();
        for (x, y) in a.store.tensors.iter().zip(&b.store.tensors) {
            assert_eq!(x.values, y.values);
        }
        assert!(a
            .store
            .tensors
            .iter()
            .zip(&c.store.tensors)
            .any(|(x, y)| x.values != y.values));
    }

    #[test]
    fn zero_input_maps_to_zero_output_with_corroded_dims() {
        let model = LnoModel::build(tiny_config(), 7).unwrap();
        let report = model.corrosion();
        let input = GridField::zeros(1, &[14, 14], 1.0);
        let out = model.forward(&input).unwrap();
        assert_eq!(out.dims, vec![14 - 2 * report.total, 14 - 2 * report.total]);
        assert!(out.values.iter().all(|&v| v == 0.0));
        assert!(out.is_finite());
    }

    #[test]
    fn forward_dims_match_corrosion_for_random_configs() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..6 {
            let cfg = LnoConfig {
                d: 1,
                d_u: rng.gen_range(1..=2),
                width: rng.gen_range(2..=5),
                proj_hidden: rng.gen_range(2..=8),
                blocks: rng.gen_range(1..=3),
                window: [4, 6][rng.gen_range(0..2)],
                modes: 2,
                repetitions: 2,
                half_width: 1,
                dx: 1.0,
                dt: 1.0,
            };
            let model = LnoModel::build(cfg.clone(), rng.gen()).unwrap();
            let report = model.corrosion();
            // Find a valid size and check the measured corrosion.
            let n = (report.total * 2 + cfg.window..200)
                .find(|&n| model.axis_valid(n))
                .unwrap();
            let input = GridField::from_fn(cfg.d_u, &[n], 1.0, |_, _| rng.gen_range(-1.0..1.0));
            let out = model.forward(&input).unwrap();
            assert_eq!(out.dims[0], n - 2 * report.total, "{cfg:?} n={n}");
            assert!(out.is_finite());
        }
    }

    #[test]
    fn traced_forward_matches_pure_forward() {
        let model = LnoModel::build(tiny_config(), 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let input = GridField::from_fn(1, &[14, 14], 1.0, |_, _| rng.gen_range(-1.0..1.0));
        let pure = model.forward(&input).unwrap();
        let mut tape = Tape::new();
        let x = tape.input(input);
        let y = model.forward_traced(&mut tape, x).unwrap();
        assert_eq!(tape.value(y).values, pure.values);
    }

    #[test]
    fn invalid_sizes_are_rejected_with_suggestion() {
        let model = LnoModel::build(tiny_config(), 3).unwrap();
        // 14 works (12 after lifting, (12-4)/2 integral); 13 gives 11 after
        // lifting, misaligned.
        match model.check_input_dims(&[13, 14]) {
            Err(LnoError::GridTooSmall { axis, size, suggested }) => {
                assert_eq!((axis, size), (0, 13));
                assert!(model.axis_valid(suggested));
            }
            other => panic!("expected size error, got {other:?}"),
        }
    }

    #[test]
    fn checkpoint_round_trip_reproduces_forward_bits() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.lno");
        let model = LnoModel::build(tiny_config(), 99).unwrap();
        model.save_checkpoint(&path).unwrap();
        let loaded = LnoModel::load_checkpoint(&path).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let input = GridField::from_fn(1, &[14, 14], 1.0, |_, _| rng.gen_range(-1.0..1.0));
        let a = model.forward(&input).unwrap();
        let b = loaded.forward(&input).unwrap();
        assert_eq!(a.values, b.values);
    }

    #[test]
    fn checkpoint_rejects_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.lno");
        let model = LnoModel::build(tiny_config(), 99).unwrap();
        model.save_checkpoint(&path).unwrap();
        let bytes = std::fs::read(&path).unwrap();

        // Truncated blob.
        std::fs::write(&path, &bytes[..bytes.len() - 9]).unwrap();
        assert!(matches!(
            LnoModel::load_checkpoint(&path),
            Err(LnoError::Format(_))
        ));

        // Version bump.
        let tampered = String::from_utf8_lossy(&bytes[..bytes.iter().position(|&b| b == b'\n').unwrap()])
            .replace("\"version\":1", "\"version\":9");
        let mut v = tampered.into_bytes();
        v.push(b'\n');
        v.extend_from_slice(&bytes[bytes.iter().position(|&b| b == b'\n').unwrap() + 1..]);
        std::fs::write(&path, v).unwrap();
        assert!(matches!(
            LnoModel::load_checkpoint(&path),
            Err(LnoError::VersionMismatch { found: 9, .. })
        ));
    }
}
