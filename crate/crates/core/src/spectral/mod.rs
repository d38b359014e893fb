//! Legendre polynomial machinery, LGL quadrature, normalized kernel
//! generation, and the localized spectral layer (decompose, mix, rebuild).

pub mod golden;

use crate::error::{LnoError, Result};
use crate::field::GridField;
use crate::tensor::ops;
use crate::tensor::WeightTensor;
use std::sync::Arc;

/// Legendre polynomial L_m(x) by the three-term recurrence.
pub fn legendre_eval(m: usize, x: f64) -> f64 {
    match m {
        0 => 1.0,
        1 => x,
        _ => {
            let (mut prev, mut cur) = (1.0, x);
            for k in 1..m {
                let next = ((2 * k + 1) as f64 * x * cur - k as f64 * prev) / (k + 1) as f64;
                prev = cur;
                cur = next;
            }
            cur
        }
    }
}

/// Closed-form series for L_m(x); used to cross-check the recurrence.
#[cfg(test)]
fn legendre_series(m: usize, x: f64) -> f64 {
    fn fact(n: usize) -> f64 {
        (1..=n).map(|k| k as f64).product()
    }
    let mut sum = 0.0;
    for l in 0..=(m / 2) {
        let sign = if l % 2 == 0 { 1.0 } else { -1.0 };
        let coef = fact(2 * m - 2 * l) / (2f64.powi(m as i32) * fact(l) * fact(m - l) * fact(m - 2 * l));
        sum += sign * coef * x.powi((m - 2 * l) as i32);
    }
    sum
}

/// Legendre-Gauss-Lobatto quadrature rule with `order` points on [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct LglRule {
    pub order: usize,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

/// LGL nodes (the zeros of (1-x^2) L'_{N-1}) and explicit weights.
///
/// Interior nodes come from safeguarded Newton iteration seeded with
/// Chebyshev-Gauss-Lobatto points; the left half is mirrored so the rule is
/// exactly symmetric.
pub fn lgl_rule(order: usize) -> Result<LglRule> {
    if order < 2 {
        return Err(LnoError::InvalidConfig {
            field: "order",
            detail: format!("LGL rule needs at least 2 points, got {order}"),
        });
    }
    let n = order;
    let deg = n - 1;
    let mut nodes = vec![0.0; n];
    nodes[0] = -1.0;
    nodes[n - 1] = 1.0;

    for j in 1..=(n - 1) / 2 {
        // Chebyshev-Gauss-Lobatto initial guess for the j-th interior node.
        let mut x = -(std::f64::consts::PI * j as f64 / deg as f64).cos();
        let mut converged = false;
        for _ in 0..100 {
            let lm = legendre_eval(deg, x);
            let lm1 = legendre_eval(deg - 1, x);
            let one_m_x2 = 1.0 - x * x;
            // L'_deg and L''_deg via the Legendre ODE.
            let dp = deg as f64 * (lm1 - x * lm) / one_m_x2;
            let ddp = (2.0 * x * dp - (deg * (deg + 1)) as f64 * lm) / one_m_x2;
            let step = dp / ddp;
            x -= step;
            if step.abs() < 1e-14 {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(LnoError::NotConverged {
                what: "LGL node Newton iteration",
                iterations: 100,
                residual: f64::NAN,
            });
        }
        nodes[j] = x;
        nodes[n - 1 - j] = -x;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }

    let weights = nodes
        .iter()
        .map(|&x| {
            let l = legendre_eval(deg, x);
            2.0 / ((n * deg) as f64 * l * l)
        })
        .collect();
    Ok(LglRule {
        order,
        nodes,
        weights,
    })
}

/// Precomputed normalized Legendre decomposition (phi) and reconstruction
/// (psi) kernels for one window.
///
/// `phi`/`psi` are stored as `[mode][window index]` with `modes_per_axis^d`
/// rows of `window^d` entries; 2-D modes are ordered row-major,
/// `m = p * modes_per_axis + q`.
#[derive(Debug, Clone)]
pub struct SpectralKernels {
    pub window: usize,
    pub modes_per_axis: usize,
    pub ndim: usize,
    pub phi: Arc<Vec<f64>>,
    pub psi: Arc<Vec<f64>>,
}

impl SpectralKernels {
    pub fn modes(&self) -> usize {
        self.modes_per_axis.pow(self.ndim as u32)
    }

    pub fn window_points(&self) -> usize {
        self.window.pow(self.ndim as u32)
    }
}

fn check_modes(window: usize, modes: usize) -> Result<()> {
    if modes < 2 {
        return Err(LnoError::InvalidConfig {
            field: "modes",
            detail: format!("need at least 2 modes, got {modes}"),
        });
    }
    if modes > window {
        return Err(LnoError::InvalidConfig {
            field: "modes",
            detail: format!("{modes} modes exceed the {window}-point window"),
        });
    }
    Ok(())
}

/// 1-D kernels on `window` equidistant points (both endpoints included).
///
/// The forward kernel integrates against L_m with LGL quadrature after
/// linear interpolation onto the quadrature nodes; the inverse kernel
/// evaluates L_m at the window points. The physical-to-reference mapping
/// coefficient is dropped on both sides.
pub fn make_kernels_1d(window: usize, modes: usize) -> Result<SpectralKernels> {
    check_modes(window, modes)?;
    if window < 2 {
        return Err(LnoError::InvalidConfig {
            field: "window",
            detail: format!("window needs at least 2 points, got {window}"),
        });
    }
    let rule = lgl_rule(window)?;
    let n = window;
    let h = 2.0 / (n - 1) as f64;

    // Linear interpolation matrix from equidistant points onto LGL nodes.
    let mut interp = vec![0.0; n * n]; // [lgl node][equidistant point]
    for (k, &x) in rule.nodes.iter().enumerate() {
        let cell = (((x + 1.0) / h).floor() as usize).min(n - 2);
        let theta = (x - (-1.0 + cell as f64 * h)) / h;
        interp[k * n + cell] += 1.0 - theta;
        interp[k * n + cell + 1] += theta;
    }

    let mut phi = vec![0.0; modes * n];
    let mut psi = vec![0.0; modes * n];
    for m in 0..modes {
        let lm: Vec<f64> = rule.nodes.iter().map(|&x| legendre_eval(m, x)).collect();
        let denom: f64 = rule
            .weights
            .iter()
            .zip(&lm)
            .map(|(w, l)| w * l * l)
            .sum();
        for i in 0..n {
            let mut num = 0.0;
            for k in 0..n {
                num += rule.weights[k] * interp[k * n + i] * lm[k];
            }
            phi[m * n + i] = num / denom;
            psi[m * n + i] = legendre_eval(m, -1.0 + i as f64 * h);
        }
    }
    Ok(SpectralKernels {
        window,
        modes_per_axis: modes,
        ndim: 1,
        phi: Arc::new(phi),
        psi: Arc::new(psi),
    })
}

/// 2-D kernels as tensor products of the 1-D rows.
pub fn make_kernels_2d(window: usize, modes: usize) -> Result<SpectralKernels> {
    let base = make_kernels_1d(window, modes)?;
    let n = window;
    let total = modes * modes;
    let mut phi = vec![0.0; total * n * n];
    let mut psi = vec![0.0; total * n * n];
    for p in 0..modes {
        for q in 0..modes {
            let m = p * modes + q;
            for i1 in 0..n {
                for i2 in 0..n {
                    phi[m * n * n + i1 * n + i2] = base.phi[p * n + i1] * base.phi[q * n + i2];
                    psi[m * n * n + i1 * n + i2] = base.psi[p * n + i1] * base.psi[q * n + i2];
                }
            }
        }
    }
    Ok(SpectralKernels {
        window,
        modes_per_axis: modes,
        ndim: 2,
        phi: Arc::new(phi),
        psi: Arc::new(psi),
    })
}

pub fn make_kernels(ndim: usize, window: usize, modes: usize) -> Result<SpectralKernels> {
    match ndim {
        1 => make_kernels_1d(window, modes),
        2 => make_kernels_2d(window, modes),
        _ => Err(LnoError::InvalidConfig {
            field: "ndim",
            detail: format!("spectral kernels support 1 or 2 dims, got {ndim}"),
        }),
    }
}

/// A localized spectral layer: windowed Legendre decomposition, learnable
/// per-channel mode mixing, windowed reconstruction.
#[derive(Debug, Clone)]
pub struct SpectralLayer {
    pub kernels: SpectralKernels,
    /// Mode mixing weight, shape `[channel][mode_in][mode_out]`.
    pub mix: WeightTensor,
    pub stride: usize,
    pub repetitions: usize,
}

impl SpectralLayer {
    pub fn new(kernels: SpectralKernels, mix: WeightTensor, repetitions: usize) -> Result<Self> {
        if repetitions == 0 || kernels.window % repetitions != 0 {
            return Err(LnoError::InvalidConfig {
                field: "repetitions",
                detail: format!(
                    "repetitions {} must divide the window size {}",
                    repetitions, kernels.window
                ),
            });
        }
        let modes = kernels.modes();
        if mix.shape != [mix.shape[0], modes, modes] {
            return Err(LnoError::ShapeMismatch {
                axis: 0,
                detail: format!(
                    "mixing weight shape {:?} does not match {modes} modes",
                    mix.shape
                ),
            });
        }
        let stride = kernels.window / repetitions;
        Ok(SpectralLayer {
            kernels,
            mix,
            stride,
            repetitions,
        })
    }

    /// Identity-mixing layer (useful for exactness checks).
    pub fn identity(kernels: SpectralKernels, channels: usize, repetitions: usize) -> Result<Self> {
        let modes = kernels.modes();
        let mut mix = WeightTensor::zeros(&[channels, modes, modes], false);
        for c in 0..channels {
            for m in 0..modes {
                mix.values[(c * modes + m) * modes + m] = 1.0;
            }
        }
        Self::new(kernels, mix, repetitions)
    }

    /// Output size loss per side, in grid points: `((k-1)/k) * N`.
    pub fn corrosion_per_side(&self) -> usize {
        self.kernels.window - self.stride
    }
}

/// Full spectral layer forward pass on an immutable layer.
pub fn spectral_forward(layer: &SpectralLayer, input: &GridField) -> Result<GridField> {
    if layer.mix.shape[0] != input.channels {
        return Err(LnoError::ShapeMismatch {
            axis: 0,
            detail: format!(
                "spectral layer mixes {} channels, field has {}",
                layer.mix.shape[0],
                input.channels
            ),
        });
    }
    if input.ndim() != layer.kernels.ndim {
        return Err(LnoError::ShapeMismatch {
            axis: 0,
            detail: format!(
                "spectral kernels are {}-D but field is {}-D",
                layer.kernels.ndim,
                input.ndim()
            ),
        });
    }
    let modes = layer.kernels.modes();
    let n = layer.kernels.window;
    let coeff = ops::windowed_decomp(input, &layer.kernels.phi, modes, n, layer.stride)?;
    let mixed = ops::channel_mix_forward(&coeff, &layer.mix)?;
    ops::windowed_recon(&mixed, &layer.kernels.psi, modes, n, layer.stride, layer.repetitions)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_basics() {
        assert_eq!(legendre_eval(0, 0.37), 1.0);
        assert_eq!(legendre_eval(5, 1.0), 1.0);
        assert!((legendre_eval(2, 0.5) - (-0.125)).abs() < 1e-15);
    }

    #[test]
    fn recurrence_matches_closed_form_series() {
        for m in 0..=10 {
            for i in 0..=20 {
                let x = -1.0 + 0.1 * i as f64;
                let a = legendre_eval(m, x);
                let b = legendre_series(m, x);
                assert!((a - b).abs() < 1e-13, "L_{m}({x}): {a} vs {b}");
            }
        }
    }

    #[test]
    fn lgl_two_points() {
        let rule = lgl_rule(2).unwrap();
        assert_eq!(rule.nodes, vec![-1.0, 1.0]);
        assert_eq!(rule.weights, vec![1.0, 1.0]);
    }

    #[test]
    fn lgl_nodes_ordered_with_endpoint_nodes() {
        for n in [3, 5, 8, 12, 18, 24] {
            let rule = lgl_rule(n).unwrap();
            assert_eq!(rule.nodes[0], -1.0);
            assert_eq!(rule.nodes[n - 1], 1.0);
            for k in 1..n {
                assert!(rule.nodes[k] > rule.nodes[k - 1]);
            }
            let sum: f64 = rule.weights.iter().sum();
            assert!((sum - 2.0).abs() < 1e-12, "N={n}: weight sum {sum}");
            assert!(rule.weights.iter().all(|&w| w > 0.0));
        }
    }

    #[test]
    fn lgl_integrates_monomials_to_degree_2n_minus_3() {
        for n in [4, 8, 12] {
            let rule = lgl_rule(n).unwrap();
            for p in 0..=(2 * n - 3) {
                let got: f64 = rule
                    .nodes
                    .iter()
                    .zip(&rule.weights)
                    .map(|(&x, &w)| w * x.powi(p as i32))
                    .sum();
                let exact = if p % 2 == 0 { 2.0 / (p as f64 + 1.0) } else { 0.0 };
                assert!((got - exact).abs() < 1e-10, "N={n} x^{p}: {got} vs {exact}");
            }
        }
    }

    #[test]
    fn lgl_12_integrates_x20() {
        let rule = lgl_rule(12).unwrap();
        let got: f64 = rule
            .nodes
            .iter()
            .zip(&rule.weights)
            .map(|(&x, &w)| w * x.powi(20))
            .sum();
        assert!((got - 2.0 / 21.0).abs() < 1e-10);
    }

    #[test]
    fn kernel_row_sums_and_symmetry() {
        for (n, m) in [(4, 2), (12, 8), (18, 8), (24, 8)] {
            let k = make_kernels_1d(n, m).unwrap();
            for mode in 0..m {
                let row = &k.phi[mode * n..(mode + 1) * n];
                let sum: f64 = row.iter().sum();
                let want = if mode == 0 { 1.0 } else { 0.0 };
                assert!((sum - want).abs() < 1e-12, "N={n} phi row {mode} sums to {sum}");
                // Alternating even/odd symmetry about the window center.
                let sign = if mode % 2 == 0 { 1.0 } else { -1.0 };
                for i in 0..n {
                    assert!((row[i] - sign * row[n - 1 - i]).abs() < 1e-12);
                }
            }
            for i in 0..n {
                assert_eq!(k.psi[i], 1.0, "psi row 0 must be all ones");
            }
        }
    }

    #[test]
    fn kernel_orthonormality_low_modes() {
        let k = make_kernels_1d(12, 8).unwrap();
        let n = 12;
        for m in 0..2 {
            for mp in 0..2 {
                let dot: f64 = (0..n).map(|i| k.phi[m * n + i] * k.psi[mp * n + i]).sum();
                let want = if m == mp { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-10, "<phi_{m}, psi_{mp}> = {dot}");
            }
        }
    }

    #[test]
    fn generated_kernels_match_published_tables() {
        for n in [12, 18, 24] {
            let k = make_kernels_1d(n, 8).unwrap();
            let (phi_tab, psi_tab) = golden::golden_tables(n).unwrap();
            for i in 0..n {
                for m in 0..8 {
                    let dphi = (k.phi[m * n + i] - phi_tab[i][m]).abs();
                    let dpsi = (k.psi[m * n + i] - psi_tab[i][m]).abs();
                    assert!(dphi < 5e-5, "N={n} phi[{m}][{i}]: {} vs {}", k.phi[m * n + i], phi_tab[i][m]);
                    assert!(dpsi < 5e-5, "N={n} psi[{m}][{i}]: {} vs {}", k.psi[m * n + i], psi_tab[i][m]);
                }
            }
        }
    }

    #[test]
    fn rejects_more_modes_than_window() {
        assert!(matches!(
            make_kernels_1d(4, 5),
            Err(LnoError::InvalidConfig { .. })
        ));
    }

    #[test]
    fn two_d_kernels_are_outer_products() {
        let k1 = make_kernels_1d(6, 3).unwrap();
        let k2 = make_kernels_2d(6, 3).unwrap();
        let n = 6;
        for p in 0..3 {
            for q in 0..3 {
                let m = p * 3 + q;
                for i1 in 0..n {
                    for i2 in 0..n {
                        let want = k1.phi[p * n + i1] * k1.phi[q * n + i2];
                        let got = k2.phi[m * n * n + i1 * n + i2];
                        assert!((got - want).abs() < 1e-12);
                    }
                }
            }
        }
        // mode (0,0) of psi is the all-ones block
        for v in k2.psi[..n * n].iter() {
            assert_eq!(*v, 1.0);
        }
    }

    #[test]
    fn bilinear_field_decomposes_to_single_coefficient() {
        let n = 8;
        let k = make_kernels_2d(n, 4).unwrap();
        let h = 2.0 / (n - 1) as f64;
        let field = GridField::from_fn(1, &[n, n], 1.0, |_, idx| {
            let x = -1.0 + idx[0] as f64 * h;
            let y = -1.0 + idx[1] as f64 * h;
            x * y
        });
        let coeff = ops::windowed_decomp(&field, &k.phi, k.modes(), n, n).unwrap();
        assert_eq!(coeff.points(), 1);
        for m in 0..k.modes() {
            let (p, q) = (m / 4, m % 4);
            let want = if (p, q) == (1, 1) { 1.0 } else { 0.0 };
            assert!(
                (coeff.values[m] - want).abs() < 1e-10,
                "mode ({p},{q}) coefficient {}",
                coeff.values[m]
            );
        }
    }

    #[test]
    fn identity_mix_preserves_constants_on_interior() {
        let kern = make_kernels_2d(12, 8).unwrap();
        let layer = SpectralLayer::identity(kern, 2, 2).unwrap();
        let input = GridField::from_fn(2, &[36, 36], 1.0, |c, _| if c == 0 { 3.25 } else { -1.5 });
        let out = spectral_forward(&layer, &input).unwrap();
        assert_eq!(out.dims, vec![24, 24]);
        let area = out.points();
        for (i, v) in out.values.iter().enumerate() {
            let want = if i < area { 3.25 } else { -1.5 };
            assert!((v - want).abs() < 1e-10, "entry {i}: {v}");
        }
    }

    #[test]
    fn identity_mix_preserves_affine_fields_on_interior() {
        let kern = make_kernels_1d(12, 8).unwrap();
        let layer = SpectralLayer::identity(kern, 1, 2).unwrap();
        let input = GridField::from_fn(1, &[48], 1.0, |_, idx| 0.7 + 0.3 * idx[0] as f64);
        let out = spectral_forward(&layer, &input).unwrap();
        assert_eq!(out.dims, vec![36]);
        let off = 6; // corrosion per side
        for (j, v) in out.values.iter().enumerate() {
            let want = 0.7 + 0.3 * (j + off) as f64;
            assert!((v - want).abs() < 1e-8, "point {j}: {v} vs {want}");
        }
    }

    #[test]
    fn zero_mix_gives_zero_output() {
        let kern = make_kernels_1d(8, 4).unwrap();
        let mix = WeightTensor::zeros(&[1, 4, 4], false);
        let layer = SpectralLayer::new(kern, mix, 2).unwrap();
        let input = GridField::from_fn(1, &[24], 1.0, |_, idx| (idx[0] as f64).sin());
        let out = spectral_forward(&layer, &input).unwrap();
        assert!(out.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn translation_by_stride_shifts_output() {
        let kern = make_kernels_1d(8, 4).unwrap();
        let mut mix = WeightTensor::zeros(&[1, 4, 4], false);
        for (i, v) in mix.values.iter_mut().enumerate() {
            *v = ((i * 37 % 11) as f64 - 5.0) / 7.0;
        }
        let layer = SpectralLayer::new(kern, mix, 2).unwrap();
        let n = 40;
        let base: Vec<f64> = (0..n).map(|i| ((i * 13 % 17) as f64 - 8.0) / 9.0).collect();
        let s = layer.stride;
        let shifted: Vec<f64> = (0..n).map(|i| base[(i + n - s) % n]).collect();
        let out_a = spectral_forward(&layer, &GridField::from_values(1, &[n], 1.0, base).unwrap()).unwrap();
        let out_b = spectral_forward(&layer, &GridField::from_values(1, &[n], 1.0, shifted).unwrap()).unwrap();
        // Interior of the shifted output equals the unshifted output moved by s.
        let m = out_a.points();
        for j in 0..m - s {
            assert!(
                (out_b.values[j + s] - out_a.values[j]).abs() < 1e-13,
                "window offset {j}"
            );
        }
    }

    #[test]
    fn spectral_forward_rejects_misaligned_axis() {
        let kern = make_kernels_1d(8, 4).unwrap();
        let layer = SpectralLayer::identity(kern, 1, 2).unwrap();
        let input = GridField::zeros(1, &[23], 1.0);
        assert!(matches!(
            spectral_forward(&layer, &input),
            Err(LnoError::StrideMismatch { axis: 0, .. })
        ));
    }
}
