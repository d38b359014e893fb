//! Boundary treatment: artificial-boundary padding, the immersed-boundary
//! wall correction, and the recurrent time-marching driver.

use crate::error::{LnoError, Result};
use crate::field::GridField;
use crate::model::LnoModel;
use crate::tensor::ops;
use crate::trajectory::Trajectory;

/// Padding rule for one side of one axis.
#[derive(Debug, Clone, PartialEq)]
pub enum BoundaryRule {
    /// Circular wrap (artificial periodic boundary).
    Periodic,
    /// Constant far-field fill, one value per channel.
    Constant(Vec<f64>),
    /// Side is not extended.
    None,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AxisRules {
    pub lo: BoundaryRule,
    pub hi: BoundaryRule,
}

/// Per-axis, per-side padding rules plus the pad width used by [`extend`].
#[derive(Debug, Clone, PartialEq)]
pub struct BoundarySpec {
    pub axes: Vec<AxisRules>,
    pub pad: usize,
}

impl BoundarySpec {
    pub fn new(axes: Vec<AxisRules>, pad: usize) -> Result<Self> {
        for (axis, rules) in axes.iter().enumerate() {
            let lo_periodic = matches!(rules.lo, BoundaryRule::Periodic);
            let hi_periodic = matches!(rules.hi, BoundaryRule::Periodic);
            if lo_periodic != hi_periodic {
                return Err(LnoError::InvalidConfig {
                    field: "boundary",
                    detail: format!("axis {axis}: opposite sides of a periodic axis must both be periodic"),
                });
            }
        }
        Ok(BoundarySpec { axes, pad })
    }

    /// All-periodic spec for `d` axes.
    pub fn periodic(d: usize, pad: usize) -> Self {
        BoundarySpec {
            axes: (0..d)
                .map(|_| AxisRules {
                    lo: BoundaryRule::Periodic,
                    hi: BoundaryRule::Periodic,
                })
                .collect(),
            pad,
        }
    }

    /// Constant far-field fill on every side.
    pub fn constant(d: usize, pad: usize, values: Vec<f64>) -> Self {
        BoundarySpec {
            axes: (0..d)
                .map(|_| AxisRules {
                    lo: BoundaryRule::Constant(values.clone()),
                    hi: BoundaryRule::Constant(values.clone()),
                })
                .collect(),
            pad,
        }
    }

    fn fully_padded(&self) -> bool {
        self.axes
            .iter()
            .all(|a| a.lo != BoundaryRule::None && a.hi != BoundaryRule::None)
    }

    /// Parses the compact CLI form, e.g. `x:periodic,y:constant=1.0,0.0`.
    pub fn parse(text: &str, d: usize, pad: usize) -> Result<Self> {
        let mut axes: Vec<Option<AxisRules>> = vec![Option::None; d];
        for part in text.split(';') {
            let part = part.trim();
            if part.is_empty() {
                continue;
            }
            let (name, rule) = part.split_once(':').ok_or_else(|| {
                LnoError::Format(format!("boundary spec part {part:?} is not axis:rule"))
            })?;
            let axis = match name.trim() {
                "x" => 0,
                "y" => 1,
                other => {
                    return Err(LnoError::Format(format!("unknown boundary axis {other:?}")));
                }
            };
            if axis >= d {
                return Err(LnoError::Format(format!("axis {name:?} exceeds {d} spatial dims")));
            }
            let rule = rule.trim();
            let parsed = if rule == "periodic" {
                BoundaryRule::Periodic
            } else if rule == "none" {
                BoundaryRule::None
            } else if let Some(vals) = rule.strip_prefix("constant=") {
                let values: std::result::Result<Vec<f64>, _> =
                    vals.split(',').map(|v| v.trim().parse::<f64>()).collect();
                BoundaryRule::Constant(values.map_err(|e| {
                    LnoError::Format(format!("bad constant boundary values {vals:?}: {e}"))
                })?)
            } else {
                return Err(LnoError::Format(format!(
                    "unknown boundary rule {rule:?} (periodic, constant=v1,v2,..., or none)"
                )));
            };
            axes[axis] = Some(AxisRules {
                lo: parsed.clone(),
                hi: parsed,
            });
        }
        let axes: Vec<AxisRules> = axes
            .into_iter()
            .enumerate()
            .map(|(axis, a)| {
                a.ok_or_else(|| LnoError::Format(format!("boundary spec missing axis {axis}")))
            })
            .collect::<Result<_>>()?;
        BoundarySpec::new(axes, pad)
    }
}

/// Extends one axis by `lo`/`hi` points using the side rules.
fn extend_axis(
    field: &GridField,
    axis: usize,
    lo: usize,
    hi: usize,
    rules: &AxisRules,
) -> Result<GridField> {
    if lo == 0 && hi == 0 {
        return Ok(field.clone());
    }
    let d = field.ndim();
    let (n1, n2) = field.dims2();
    let (m1, m2) = if axis == 0 { (n1 + lo + hi, n2) } else { (n1, n2 + lo + hi) };
    let out_dims: Vec<usize> = if d == 1 { vec![m1] } else { vec![m1, m2] };
    let mut out = GridField::zeros(field.channels, &out_dims, field.dx);

    let fill = |rule: &BoundaryRule, c: usize, interior: usize| -> Result<Option<f64>> {
        match rule {
            BoundaryRule::Periodic => Ok(Option::None),
            BoundaryRule::Constant(vals) => {
                if vals.len() != field.channels {
                    return Err(LnoError::ConstantArity {
                        axis,
                        expected: field.channels,
                        got: vals.len(),
                    });
                }
                Ok(Some(vals[c]))
            }
            BoundaryRule::None => {
                debug_assert_eq!(interior, 0, "no-rule side must not be padded");
                Ok(Option::None)
            }
        }
    };

    for c in 0..field.channels {
        let lo_fill = fill(&rules.lo, c, lo)?;
        let hi_fill = fill(&rules.hi, c, hi)?;
        let in_c = &field.values[c * n1 * n2..(c + 1) * n1 * n2];
        let out_c = &mut out.values[c * m1 * m2..(c + 1) * m1 * m2];
        for j1 in 0..m1 {
            for j2 in 0..m2 {
                let j = if axis == 0 { j1 } else { j2 };
                let n = if axis == 0 { n1 } else { n2 };
                let (src, constant) = if j < lo {
                    match lo_fill {
                        Some(v) => (0, Some(v)),
                        Option::None => ((j + n * (lo / n + 1) - lo) % n, Option::None),
                    }
                } else if j < lo + n {
                    (j - lo, Option::None)
                } else {
                    match hi_fill {
                        Some(v) => (0, Some(v)),
                        Option::None => ((j - lo) % n, Option::None),
                    }
                };
                out_c[j1 * m2 + j2] = match constant {
                    Some(v) => v,
                    Option::None => {
                        let (i1, i2) = if axis == 0 { (src, j2) } else { (j1, src) };
                        in_c[i1 * n2 + i2]
                    }
                };
            }
        }
    }
    Ok(out)
}

/// Extends a field with per-axis, per-side amounts.
pub(crate) fn extend_amounts(
    field: &GridField,
    spec: &BoundarySpec,
    amounts: &[(usize, usize)],
) -> Result<GridField> {
    if spec.axes.len() != field.ndim() {
        return Err(LnoError::ShapeMismatch {
            axis: 0,
            detail: format!(
                "boundary spec covers {} axes, field has {}",
                spec.axes.len(),
                field.ndim()
            ),
        });
    }
    let mut out = field.clone();
    for (axis, rules) in spec.axes.iter().enumerate() {
        let (lo, hi) = amounts[axis];
        out = extend_axis(&out, axis, lo, hi, rules)?;
    }
    Ok(out)
}

/// Grows each padded side by `spec.pad` points: circular wrap for periodic
/// sides, per-channel constant fill for far-field sides. Sides with no rule
/// stay as they are.
pub fn extend(field: &GridField, spec: &BoundarySpec) -> Result<GridField> {
    let amounts: Vec<(usize, usize)> = spec
        .axes
        .iter()
        .map(|a| {
            (
                if a.lo == BoundaryRule::None { 0 } else { spec.pad },
                if a.hi == BoundaryRule::None { 0 } else { spec.pad },
            )
        })
        .collect();
    extend_amounts(field, spec, &amounts)
}

/// One-axis factor of the regularized 4-point delta; `r` in grid units.
pub fn ibm_delta(r: f64) -> f64 {
    let a = r.abs();
    if a < 1.0 {
        (3.0 - 2.0 * a + (1.0 + 4.0 * a - 4.0 * a * a).sqrt()) / 8.0
    } else if a < 2.0 {
        (5.0 - 2.0 * a - (-7.0 + 12.0 * a - 4.0 * a * a).sqrt()) / 8.0
    } else {
        0.0
    }
}

/// Wall description by Lagrange points with prescribed velocities.
///
/// Point coordinates are in length units relative to the field's first grid
/// point (index (0, 0) sits at the origin).
#[derive(Debug, Clone)]
pub struct IbmGeometry {
    pub points: Vec<[f64; 2]>,
    /// Prescribed wall velocity per point, one value per channel.
    pub velocities: Vec<Vec<f64>>,
    /// Arc spacing between Lagrange points.
    pub ds: f64,
}

impl IbmGeometry {
    pub fn new(points: Vec<[f64; 2]>, velocities: Vec<Vec<f64>>, ds: f64) -> Result<Self> {
        if points.is_empty() || points.len() != velocities.len() {
            return Err(LnoError::InvalidConfig {
                field: "ibm",
                detail: format!(
                    "{} points with {} velocity rows",
                    points.len(),
                    velocities.len()
                ),
            });
        }
        if !(ds > 0.0) {
            return Err(LnoError::InvalidConfig {
                field: "ds",
                detail: format!("arc spacing must be positive, got {ds}"),
            });
        }
        Ok(IbmGeometry {
            points,
            velocities,
            ds,
        })
    }

    /// Loads `(x, y, u_bc, v_bc)` rows; `ds` is inferred as the mean
    /// consecutive point distance unless supplied.
    pub fn from_csv(path: &std::path::Path, ds: Option<f64>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut points = Vec::new();
        let mut velocities = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            if lineno == 0 && cols.iter().any(|c| c.parse::<f64>().is_err()) {
                continue; // header row
            }
            if cols.len() != 4 {
                return Err(LnoError::Format(format!(
                    "line {}: expected 4 columns (x, y, u_bc, v_bc), got {}",
                    lineno + 1,
                    cols.len()
                )));
            }
            let vals: std::result::Result<Vec<f64>, _> = cols.iter().map(|c| c.parse::<f64>()).collect();
            let vals = vals.map_err(|e| LnoError::Format(format!("line {}: {e}", lineno + 1)))?;
            points.push([vals[0], vals[1]]);
            velocities.push(vec![vals[2], vals[3]]);
        }
        let ds = match ds {
            Some(v) => v,
            Option::None => {
                if points.len() < 2 {
                    return Err(LnoError::Format(
                        "cannot infer arc spacing from fewer than 2 points".into(),
                    ));
                }
                let total: f64 = points
                    .windows(2)
                    .map(|w| ((w[1][0] - w[0][0]).powi(2) + (w[1][1] - w[0][1]).powi(2)).sqrt())
                    .sum();
                total / (points.len() - 1) as f64
            }
        };
        IbmGeometry::new(points, velocities, ds)
    }
}

/// Direct-forcing immersed-boundary correction.
///
/// Interpolates the intermediate velocity to the Lagrange points, converts
/// the wall-condition defect into a volume force, spreads it back with the
/// 4-point delta, and adds the correction. Only grid points within the delta
/// support of some Lagrange point change.
pub fn ibm_correct(u_star: &GridField, geom: &IbmGeometry, dt: f64) -> Result<GridField> {
    if u_star.ndim() != 2 {
        return Err(LnoError::ShapeMismatch {
            axis: 0,
            detail: "the immersed-boundary correction needs a 2-D field".into(),
        });
    }
    let (n1, n2) = u_star.dims2();
    let dx = u_star.dx;
    let area = n1 * n2;
    let channels = u_star.channels;
    let mut out = u_star.clone();

    for (j, (point, u_bc)) in geom.points.iter().zip(&geom.velocities).enumerate() {
        if u_bc.len() != channels {
            return Err(LnoError::ConstantArity {
                axis: 0,
                expected: channels,
                got: u_bc.len(),
            });
        }
        let (gx, gy) = (point[0] / dx, point[1] / dx);
        let lo1 = (gx - 2.0).ceil() as i64;
        let hi1 = (gx + 2.0).floor() as i64;
        let lo2 = (gy - 2.0).ceil() as i64;
        let hi2 = (gy + 2.0).floor() as i64;
        if lo1 < 0 || hi1 >= n1 as i64 || lo2 < 0 || hi2 >= n2 as i64 {
            return Err(LnoError::LagrangeOutOfGrid {
                index: j,
                x: point[0],
                y: point[1],
            });
        }

        // Eq. of motion defect at the Lagrange point.
        let mut force = vec![0.0; channels];
        for c in 0..channels {
            let mut interp = 0.0;
            for i1 in lo1..=hi1 {
                let wx = ibm_delta(gx - i1 as f64);
                for i2 in lo2..=hi2 {
                    let wy = ibm_delta(gy - i2 as f64);
                    interp += u_star.values[c * area + i1 as usize * n2 + i2 as usize] * wx * wy;
                }
            }
            force[c] = (u_bc[c] - interp) / dt;
        }

        // Spread back and apply the correction; dt cancels by construction.
        let spread = geom.ds / dx;
        for i1 in lo1..=hi1 {
            let wx = ibm_delta(gx - i1 as f64);
            for i2 in lo2..=hi2 {
                let wy = ibm_delta(gy - i2 as f64);
                let w = wx * wy * spread * dt;
                for c in 0..channels {
                    out.values[c * area + i1 as usize * n2 + i2 as usize] += force[c] * w;
                }
            }
        }
    }
    Ok(out)
}

/// Per-axis extension amounts for one marching step: the corrosion width
/// plus the smallest extra that lands the extended size on a valid grid.
/// Odd extras put the spare point on the high-index side.
pub(crate) fn march_amounts(model: &LnoModel, dims: &[usize]) -> Result<Vec<(usize, usize)>> {
    let r = model.corrosion().total;
    let bound = 8 * model.config.window + 2;
    dims.iter()
        .enumerate()
        .map(|(axis, &n)| {
            let extra = (0..bound).find(|e| model.axis_valid(n + 2 * r + e));
            match extra {
                Some(e) => Ok((r + e / 2, r + e - e / 2)),
                Option::None => {
                    let suggested = (n + 1..n + bound)
                        .find(|&c| (0..bound).any(|e| model.axis_valid(c + 2 * r + e)))
                        .unwrap_or(n + 1);
                    Err(LnoError::GridTooSmall {
                        axis,
                        size: n,
                        suggested,
                    })
                }
            }
        })
        .collect()
}

/// One time-marching step: extend by the corrosion width, run the model
/// (output regains the original dims), then apply the optional wall
/// correction.
pub fn march(
    model: &LnoModel,
    state: &GridField,
    spec: &BoundarySpec,
    geom: Option<&IbmGeometry>,
) -> Result<GridField> {
    if !spec.fully_padded() {
        return Err(LnoError::InvalidConfig {
            field: "boundary",
            detail: "time marching requires every side to be periodic or constant".into(),
        });
    }
    let amounts = march_amounts(model, &state.dims)?;
    let extended = extend_amounts(state, spec, &amounts)?;
    let out = model.forward(&extended)?;
    let r = model.corrosion().total;
    let lo: Vec<usize> = amounts.iter().map(|a| a.0 - r).collect();
    let hi: Vec<usize> = amounts.iter().map(|a| a.1 - r).collect();
    let out = if lo.iter().chain(&hi).any(|&e| e > 0) {
        ops::crop(&out, &lo, &hi)?
    } else {
        out
    };
    match geom {
        Some(g) => ibm_correct(&out, g, model.config.dt),
        Option::None => Ok(out),
    }
}

/// Recurrent prediction of `steps` marching steps (initial frame included).
/// Aborts with diagnostics on the first non-finite frame.
pub fn rollout(
    model: &LnoModel,
    initial: &GridField,
    steps: usize,
    spec: &BoundarySpec,
    geom: Option<&IbmGeometry>,
) -> Result<Trajectory> {
    let mut frames = Vec::with_capacity(steps + 1);
    frames.push(initial.clone());
    for step in 1..=steps {
        let next = march(model, frames.last().expect("nonempty"), spec, geom)?;
        if !next.is_finite() {
            let max_abs = next
                .values
                .iter()
                .filter(|v| v.is_finite())
                .fold(0.0_f64, |m, v| m.max(v.abs()));
            return Err(LnoError::NonFinite {
                context: "rollout".into(),
                step,
                max_abs,
            });
        }
        frames.push(next);
    }
    Trajectory::new(frames, model.config.dt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LnoConfig;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tiny_model(d: usize) -> LnoModel {
        LnoModel::build(
            LnoConfig {
                d,
                d_u: if d == 1 { 1 } else { 2 },
                width: 4,
                proj_hidden: 6,
                blocks: 1,
                window: 4,
                modes: 2,
                repetitions: 2,
                half_width: 1,
                dx: 0.25,
                dt: 0.5,
            },
            17,
        )
        .unwrap()
    }

    #[test]
    fn zero_pad_is_identity() {
        let f = GridField::from_fn(2, &[4, 5], 1.0, |c, idx| (c + idx[0] * 5 + idx[1]) as f64);
        let spec = BoundarySpec::periodic(2, 0);
        assert_eq!(extend(&f, &spec).unwrap(), f);
    }

    #[test]
    fn periodic_extend_wraps_1d() {
        let f = GridField::from_values(1, &[4], 1.0, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let out = extend(&f, &BoundarySpec::periodic(1, 2)).unwrap();
        assert_eq!(out.values, vec![3.0, 4.0, 1.0, 2.0, 3.0, 4.0, 1.0, 2.0]);
    }

    #[test]
    fn constant_extend_rings_zeros() {
        let f = GridField::zeros(1, &[3, 3], 1.0);
        let out = extend(&f, &BoundarySpec::constant(2, 1, vec![5.0])).unwrap();
        assert_eq!(out.dims, vec![5, 5]);
        for i1 in 0..5 {
            for i2 in 0..5 {
                let border = i1 == 0 || i1 == 4 || i2 == 0 || i2 == 4;
                assert_eq!(out.at2(0, i1, i2), if border { 5.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn extend_then_crop_is_identity_for_periodic() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let f = GridField::from_fn(2, &[6, 5], 1.0, |_, _| rng.gen_range(-1.0..1.0));
        let out = extend(&f, &BoundarySpec::periodic(2, 3)).unwrap();
        let back = ops::crop(&out, &[3, 3], &[3, 3]).unwrap();
        assert_eq!(back.values, f.values);
    }

    #[test]
    fn mixed_rules_and_arity_errors() {
        let f = GridField::zeros(2, &[4], 1.0);
        let bad = BoundarySpec::constant(1, 1, vec![1.0]); // 1 value for 2 channels
        assert!(matches!(extend(&f, &bad), Err(LnoError::ConstantArity { .. })));

        let half_periodic = BoundarySpec::new(
            vec![AxisRules {
                lo: BoundaryRule::Periodic,
                hi: BoundaryRule::None,
            }],
            1,
        );
        assert!(half_periodic.is_err());
    }

    #[test]
    fn boundary_spec_parses_compact_form() {
        let spec = BoundarySpec::parse("x:periodic;y:constant=1.0,0.0", 2, 7).unwrap();
        assert_eq!(spec.axes[0].lo, BoundaryRule::Periodic);
        assert_eq!(spec.axes[1].hi, BoundaryRule::Constant(vec![1.0, 0.0]));
        assert_eq!(spec.pad, 7);
        assert!(BoundarySpec::parse("x:periodic", 2, 1).is_err());
    }

    #[test]
    fn delta_reference_values() {
        assert!((ibm_delta(0.0) - 0.5).abs() < 1e-15);
        assert_eq!(ibm_delta(2.0), 0.0);
        assert_eq!(ibm_delta(-2.5), 0.0);
    }

    #[test]
    fn delta_partition_of_unity() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..10_000 {
            let r: f64 = rng.gen_range(-3.0..3.0);
            let sum: f64 = (-6..=6).map(|i| ibm_delta(r - i as f64)).sum();
            assert!((sum - 1.0).abs() < 1e-12, "r={r}: {sum}");
        }
    }

    #[test]
    fn ibm_satisfied_wall_is_fixed_point() {
        // Uniform field matching the wall velocity everywhere: zero force.
        let u = GridField::from_fn(2, &[12, 12], 0.5, |c, _| if c == 0 { 1.0 } else { -0.5 });
        let geom = IbmGeometry::new(
            vec![[2.6, 2.9], [3.1, 3.4]],
            vec![vec![1.0, -0.5], vec![1.0, -0.5]],
            0.5,
        )
        .unwrap();
        let out = ibm_correct(&u, &geom, 0.1).unwrap();
        for (a, b) in out.values.iter().zip(&u.values) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn ibm_matches_hand_expanded_single_point() {
        // Single Lagrange point on a grid node, uniform u* = 1, wall at 0,
        // ds = dx: expand the interpolate/force/spread chain by hand.
        let n = 11;
        let dx = 0.5;
        let u = GridField::from_fn(1, &[n, n], dx, |_, _| 1.0);
        let geom = IbmGeometry::new(vec![[5.0 * dx, 5.0 * dx]], vec![vec![0.0]], dx).unwrap();
        let dt = 0.2;
        let out = ibm_correct(&u, &geom, dt).unwrap();

        // Interpolated velocity: sum of w products times 1 = 1 (partition of
        // unity), so F = (0 - 1)/dt and du(x) = F*w(x)*ds/dx*dt = -w(x).
        for i1 in 0..n {
            for i2 in 0..n {
                let w = ibm_delta(5.0 - i1 as f64) * ibm_delta(5.0 - i2 as f64);
                let want = 1.0 - w;
                assert!(
                    (out.at2(0, i1, i2) - want).abs() < 1e-13,
                    "({i1},{i2}): {} vs {want}",
                    out.at2(0, i1, i2)
                );
            }
        }
    }

    #[test]
    fn ibm_correction_is_dt_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let u = GridField::from_fn(2, &[12, 12], 0.5, |_, _| rng.gen_range(-1.0..1.0));
        let geom = IbmGeometry::new(vec![[2.8, 3.3]], vec![vec![0.0, 0.0]], 0.4).unwrap();
        let a = ibm_correct(&u, &geom, 0.05).unwrap();
        let b = ibm_correct(&u, &geom, 0.1).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn ibm_touches_only_delta_support() {
        let u = GridField::zeros(1, &[16, 16], 1.0);
        let geom = IbmGeometry::new(vec![[7.3, 8.1]], vec![vec![1.0]], 1.0).unwrap();
        let out = ibm_correct(&u, &geom, 0.1).unwrap();
        for i1 in 0..16 {
            for i2 in 0..16 {
                let inside = (i1 as f64 - 7.3).abs() < 2.0 && (i2 as f64 - 8.1).abs() < 2.0;
                if !inside {
                    assert_eq!(out.at2(0, i1, i2), 0.0, "({i1},{i2})");
                }
            }
        }
    }

    #[test]
    fn ibm_rejects_support_outside_grid() {
        let u = GridField::zeros(1, &[8, 8], 1.0);
        let geom = IbmGeometry::new(vec![[0.5, 4.0]], vec![vec![0.0]], 1.0).unwrap();
        assert!(matches!(
            ibm_correct(&u, &geom, 0.1),
            Err(LnoError::LagrangeOutOfGrid { index: 0, .. })
        ));
    }

    #[test]
    fn march_preserves_dims_and_zero_state() {
        let model = tiny_model(2);
        let spec = BoundarySpec::constant(2, model.corrosion().total, vec![0.0, 0.0]);
        let state = GridField::zeros(2, &[9, 12], model.config.dx);
        let out = march(&model, &state, &spec, Option::None).unwrap();
        assert_eq!(out.dims, state.dims);
        assert!(out.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn march_twice_equals_rollout_of_two() {
        let model = tiny_model(1);
        let spec = BoundarySpec::periodic(1, model.corrosion().total);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let state = GridField::from_fn(1, &[12], model.config.dx, |_, _| rng.gen_range(-1.0..1.0));
        let one = march(&model, &state, &spec, Option::None).unwrap();
        let two = march(&model, &one, &spec, Option::None).unwrap();
        let traj = rollout(&model, &state, 2, &spec, Option::None).unwrap();
        assert_eq!(traj.len(), 3);
        assert_eq!(traj.frames[1].values, one.values);
        assert_eq!(traj.frames[2].values, two.values);
    }

    #[test]
    fn march_commutes_with_periodic_shift() {
        let model = tiny_model(1);
        let spec = BoundarySpec::periodic(1, model.corrosion().total);
        let s = model.config.stride();
        let n = 16;
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let base: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let shifted: Vec<f64> = (0..n).map(|i| base[(i + n - s) % n]).collect();
        let f = GridField::from_values(1, &[n], model.config.dx, base).unwrap();
        let g = GridField::from_values(1, &[n], model.config.dx, shifted).unwrap();
        let mf = march(&model, &f, &spec, Option::None).unwrap();
        let mg = march(&model, &g, &spec, Option::None).unwrap();
        for i in 0..n {
            let diff = (mg.values[(i + s) % n] - mf.values[i]).abs();
            assert!(diff < 1e-12, "i={i}: {diff}");
        }
    }

    #[test]
    fn march_rejects_unpadded_sides() {
        let model = tiny_model(2);
        let mut spec = BoundarySpec::periodic(2, model.corrosion().total);
        spec.axes[1].lo = BoundaryRule::None;
        spec.axes[1].hi = BoundaryRule::None;
        let state = GridField::zeros(2, &[9, 9], model.config.dx);
        assert!(matches!(
            march(&model, &state, &spec, Option::None),
            Err(LnoError::InvalidConfig { .. })
        ));
    }
}
