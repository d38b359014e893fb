//! Dense convolution / deconvolution / pointwise kernels and their adjoints.
//!
//! Everything is "valid" (no implicit padding): explicit padding belongs to
//! the boundary module so corrosion accounting stays exact. 1-D fields run
//! through the same loops as 2-D with a unit-size second axis.
//!
//! Parallel paths partition work by output slot and keep a fixed per-slot
//! reduction order, so results are bit-identical to the serial loops.

use crate::error::{LnoError, Result};
use crate::field::GridField;
use crate::tensor::WeightTensor;
use rayon::prelude::*;

/// Work size below which the loops stay single-threaded.
const PAR_THRESHOLD: usize = 1 << 17;

#[derive(Clone, Copy, Debug)]
struct Axes {
    n1: usize,
    n2: usize,
    k1: usize,
    k2: usize,
    s1: usize,
    s2: usize,
    o1: usize,
    o2: usize,
}

/// Resolves per-axis geometry for a strided valid convolution, enforcing the
/// kernel-fits and stride-divisibility preconditions with axis-level errors.
fn conv_axes(input: &GridField, kext: &[usize], stride: usize) -> Result<Axes> {
    if kext.len() != input.ndim() {
        return Err(LnoError::ShapeMismatch {
            axis: 0,
            detail: format!("kernel is {}-D but field is {}-D", kext.len(), input.ndim()),
        });
    }
    let (n1, n2) = input.dims2();
    let (k1, k2) = if kext.len() == 1 { (kext[0], 1) } else { (kext[0], kext[1]) };
    let (s1, s2) = (stride, if input.ndim() == 1 { 1 } else { stride });
    for axis in 0..input.ndim() {
        let (n, k, s) = if axis == 0 { (n1, k1, s1) } else { (n2, k2, s2) };
        if k > n {
            return Err(LnoError::ShapeMismatch {
                axis,
                detail: format!("kernel extent {k} exceeds input size {n}"),
            });
        }
        if (n - k) % s != 0 {
            return Err(LnoError::StrideMismatch {
                axis,
                input: n,
                kernel: k,
                stride: s,
            });
        }
    }
    Ok(Axes {
        n1,
        n2,
        k1,
        k2,
        s1,
        s2,
        o1: (n1 - k1) / s1 + 1,
        o2: (n2 - k2) / s2 + 1,
    })
}

/// Valid cross-correlation with stride; kernel shape `[out][in][k1(,k2)]`.
pub fn conv_forward(input: &GridField, kernel: &WeightTensor, stride: usize) -> Result<GridField> {
    if kernel.shape.len() != 2 + input.ndim() {
        return Err(LnoError::ShapeMismatch {
            axis: 0,
            detail: format!(
                "conv kernel shape {:?} does not match a {}-D field",
                kernel.shape,
                input.ndim()
            ),
        });
    }
    let (co, ci) = (kernel.shape[0], kernel.shape[1]);
    if ci != input.channels {
        return Err(LnoError::ShapeMismatch {
            axis: 0,
            detail: format!("kernel expects {ci} input channels, field has {}", input.channels),
        });
    }
    let ax = conv_axes(input, &kernel.shape[2..], stride)?;
    let out_dims: Vec<usize> = if input.ndim() == 1 { vec![ax.o1] } else { vec![ax.o1, ax.o2] };
    let mut out = GridField::zeros(co, &out_dims, input.dx);

    let area_i = ax.n1 * ax.n2;
    let area_o = ax.o1 * ax.o2;
    let ker_c = ci * ax.k1 * ax.k2;
    let work = co * ker_c * area_o;

    let run = |oc: usize, out_c: &mut [f64]| {
        for ic in 0..ci {
            let in_c = &input.values[ic * area_i..(ic + 1) * area_i];
            for q1 in 0..ax.k1 {
                for q2 in 0..ax.k2 {
                    let w = kernel.values[oc * ker_c + (ic * ax.k1 + q1) * ax.k2 + q2];
                    for p1 in 0..ax.o1 {
                        let in_base = (p1 * ax.s1 + q1) * ax.n2 + q2;
                        let out_base = p1 * ax.o2;
                        for p2 in 0..ax.o2 {
                            out_c[out_base + p2] += w * in_c[in_base + p2 * ax.s2];
                        }
                    }
                }
            }
        }
    };

    if work > PAR_THRESHOLD && co > 1 {
        out.values
            .par_chunks_mut(area_o)
            .enumerate()
            .for_each(|(oc, out_c)| run(oc, out_c));
    } else {
        for (oc, out_c) in out.values.chunks_mut(area_o).enumerate() {
            run(oc, out_c);
        }
    }
    Ok(out)
}

/// Adjoint of `conv_forward` with respect to its input.
pub fn conv_backward_input(
    grad_out: &GridField,
    kernel: &WeightTensor,
    stride: usize,
    input_shape: &GridField,
) -> GridField {
    let (co, ci) = (kernel.shape[0], kernel.shape[1]);
    let ax = conv_axes(input_shape, &kernel.shape[2..], stride).expect("validated in forward");
    let area_i = ax.n1 * ax.n2;
    let area_o = ax.o1 * ax.o2;
    let ker_c = ci * ax.k1 * ax.k2;
    let mut gin = GridField::zeros(ci, &input_shape.dims, input_shape.dx);
    let work = co * ker_c * area_o;

    let run = |ic: usize, gin_c: &mut [f64]| {
        for oc in 0..co {
            let g_c = &grad_out.values[oc * area_o..(oc + 1) * area_o];
            for q1 in 0..ax.k1 {
                for q2 in 0..ax.k2 {
                    let w = kernel.values[oc * ker_c + (ic * ax.k1 + q1) * ax.k2 + q2];
                    for p1 in 0..ax.o1 {
                        let in_base = (p1 * ax.s1 + q1) * ax.n2 + q2;
                        let out_base = p1 * ax.o2;
                        for p2 in 0..ax.o2 {
                            gin_c[in_base + p2 * ax.s2] += w * g_c[out_base + p2];
                        }
                    }
                }
            }
        }
    };

    if work > PAR_THRESHOLD && ci > 1 {
        gin.values
            .par_chunks_mut(area_i)
            .enumerate()
            .for_each(|(ic, gin_c)| run(ic, gin_c));
    } else {
        for (ic, gin_c) in gin.values.chunks_mut(area_i).enumerate() {
            run(ic, gin_c);
        }
    }
    gin
}

/// Adjoint of `conv_forward` with respect to the kernel; accumulates into `wgrad`.
pub fn conv_backward_weight(
    grad_out: &GridField,
    input: &GridField,
    kernel_shape: &[usize],
    stride: usize,
    wgrad: &mut [f64],
) {
    let (co, ci) = (kernel_shape[0], kernel_shape[1]);
    let ax = conv_axes(input, &kernel_shape[2..], stride).expect("validated in forward");
    let area_i = ax.n1 * ax.n2;
    let area_o = ax.o1 * ax.o2;
    let ker_c = ci * ax.k1 * ax.k2;
    let work = co * ker_c * area_o;

    let run = |oc: usize, wg_c: &mut [f64]| {
        let g_c = &grad_out.values[oc * area_o..(oc + 1) * area_o];
        for ic in 0..ci {
            let in_c = &input.values[ic * area_i..(ic + 1) * area_i];
            for q1 in 0..ax.k1 {
                for q2 in 0..ax.k2 {
                    let mut acc = 0.0;
                    for p1 in 0..ax.o1 {
                        let in_base = (p1 * ax.s1 + q1) * ax.n2 + q2;
                        let out_base = p1 * ax.o2;
                        for p2 in 0..ax.o2 {
                            acc += g_c[out_base + p2] * in_c[in_base + p2 * ax.s2];
                        }
                    }
                    wg_c[(ic * ax.k1 + q1) * ax.k2 + q2] += acc;
                }
            }
        }
    };

    if work > PAR_THRESHOLD && co > 1 {
        wgrad
            .par_chunks_mut(ker_c)
            .enumerate()
            .for_each(|(oc, wg_c)| run(oc, wg_c));
    } else {
        for (oc, wg_c) in wgrad.chunks_mut(ker_c).enumerate() {
            run(oc, wg_c);
        }
    }
}

/// Windows covering absolute scatter position `p` for kernel extent `k`,
/// stride `s` and `c` windows: all `w` with `w*s <= p <= w*s + k - 1`.
#[inline]
fn covering_windows(p: usize, k: usize, s: usize, c: usize) -> (usize, usize) {
    let lo = if p + 1 > k { (p + 1 - k).div_ceil(s) } else { 0 };
    let hi = (p / s).min(c - 1);
    (lo, hi)
}

/// Geometry of the interior-cropped transpose convolution.
///
/// The raw scatter spans `(c-1)*s + k` points per axis; positions covered by
/// fewer than `min(K, c)` windows are cropped, i.e. `(min(K, c) - 1)*s` per
/// side. With at least K windows this is the fully-K-covered interior where
/// the `1/K^d` normalization is exact; with a single window nothing is
/// cropped and the output is the kernel block itself.
#[derive(Clone, Copy, Debug)]
pub(crate) struct ReconGeom {
    pub out1: usize,
    pub out2: usize,
    pub off1: usize,
    pub off2: usize,
}

impl ReconGeom {
    fn new(c1: usize, c2: usize, k1: usize, k2: usize, s1: usize, s2: usize, ov1: usize, ov2: usize) -> Self {
        let span1 = (c1 - 1) * s1 + k1;
        let span2 = (c2 - 1) * s2 + k2;
        let off1 = (ov1.min(c1) - 1) * s1;
        let off2 = (ov2.min(c2) - 1) * s2;
        ReconGeom {
            out1: span1 - 2 * off1,
            out2: span2 - 2 * off2,
            off1,
            off2,
        }
    }
}

/// Fractionally-strided transpose convolution scattering each coefficient
/// window back to grid positions, summed over overlapping windows, restricted
/// to the fully-covered interior and scaled by `1/overlap^d`.
///
/// Kernel shape `[in][out][k1(,k2)]`; the kernel extent must equal
/// `stride * overlap` on every real axis.
pub fn deconv_forward(
    input: &GridField,
    kernel: &WeightTensor,
    stride: usize,
    overlap: usize,
) -> Result<GridField> {
    if kernel.shape.len() != 2 + input.ndim() {
        return Err(LnoError::ShapeMismatch {
            axis: 0,
            detail: format!(
                "deconv kernel shape {:?} does not match a {}-D field",
                kernel.shape,
                input.ndim()
            ),
        });
    }
    let (ci, co) = (kernel.shape[0], kernel.shape[1]);
    if ci != input.channels {
        return Err(LnoError::ShapeMismatch {
            axis: 0,
            detail: format!("kernel expects {ci} input channels, field has {}", input.channels),
        });
    }
    for &k in &kernel.shape[2..] {
        if k != stride * overlap {
            return Err(LnoError::InvalidOverlap {
                extent: k,
                stride,
                overlap,
            });
        }
    }
    let d = input.ndim();
    let (c1, c2) = input.dims2();
    let (k1, k2) = if d == 1 { (kernel.shape[2], 1) } else { (kernel.shape[2], kernel.shape[3]) };
    let (s1, s2) = (stride, if d == 1 { 1 } else { stride });
    let (ov1, ov2) = (overlap, if d == 1 { 1 } else { overlap });
    let geom = ReconGeom::new(c1, c2, k1, k2, s1, s2, ov1, ov2);
    let scale = 1.0 / (overlap.pow(d as u32) as f64);

    let out_dims: Vec<usize> = if d == 1 { vec![geom.out1] } else { vec![geom.out1, geom.out2] };
    let mut out = GridField::zeros(co, &out_dims, input.dx);
    let area_c = c1 * c2;
    let win = k1 * k2;

    for (oc, out_c) in out.values.chunks_mut(geom.out1 * geom.out2).enumerate() {
        for x1 in 0..geom.out1 {
            let p1 = x1 + geom.off1;
            let (w1lo, w1hi) = covering_windows(p1, k1, s1, c1);
            for x2 in 0..geom.out2 {
                let p2 = x2 + geom.off2;
                let (w2lo, w2hi) = covering_windows(p2, k2, s2, c2);
                let mut acc = 0.0;
                for ic in 0..ci {
                    let in_c = &input.values[ic * area_c..(ic + 1) * area_c];
                    let ker_ic = &kernel.values[(ic * co + oc) * win..(ic * co + oc + 1) * win];
                    for w1 in w1lo..=w1hi {
                        let q1 = p1 - w1 * s1;
                        for w2 in w2lo..=w2hi {
                            let q2 = p2 - w2 * s2;
                            acc += in_c[w1 * c2 + w2] * ker_ic[q1 * k2 + q2];
                        }
                    }
                }
                out_c[x1 * geom.out2 + x2] = scale * acc;
            }
        }
    }
    Ok(out)
}

/// Grouped windowed decomposition: each input channel is correlated with all
/// `modes` constant kernel rows (extent `next`, stride `stride`), giving
/// output channel `c*modes + m`.
pub fn windowed_decomp(
    input: &GridField,
    kernel: &[f64],
    modes: usize,
    next: usize,
    stride: usize,
) -> Result<GridField> {
    let kext: Vec<usize> = vec![next; input.ndim()];
    let ax = conv_axes(input, &kext, stride)?;
    let win = ax.k1 * ax.k2;
    debug_assert_eq!(kernel.len(), modes * win);
    let out_dims: Vec<usize> = if input.ndim() == 1 { vec![ax.o1] } else { vec![ax.o1, ax.o2] };
    let mut out = GridField::zeros(input.channels * modes, &out_dims, input.dx);
    let area_i = ax.n1 * ax.n2;
    let area_o = ax.o1 * ax.o2;
    let work = input.channels * modes * win * area_o;

    let run = |ch: usize, out_c: &mut [f64]| {
        let (c, m) = (ch / modes, ch % modes);
        let in_c = &input.values[c * area_i..(c + 1) * area_i];
        let ker_m = &kernel[m * win..(m + 1) * win];
        for q1 in 0..ax.k1 {
            for q2 in 0..ax.k2 {
                let w = ker_m[q1 * ax.k2 + q2];
                for p1 in 0..ax.o1 {
                    let in_base = (p1 * ax.s1 + q1) * ax.n2 + q2;
                    let out_base = p1 * ax.o2;
                    for p2 in 0..ax.o2 {
                        out_c[out_base + p2] += w * in_c[in_base + p2 * ax.s2];
                    }
                }
            }
        }
    };

    if work > PAR_THRESHOLD {
        out.values
            .par_chunks_mut(area_o)
            .enumerate()
            .for_each(|(ch, out_c)| run(ch, out_c));
    } else {
        for (ch, out_c) in out.values.chunks_mut(area_o).enumerate() {
            run(ch, out_c);
        }
    }
    Ok(out)
}

/// Adjoint of `windowed_decomp` with respect to its input.
pub fn windowed_decomp_backward(
    grad_out: &GridField,
    kernel: &[f64],
    modes: usize,
    next: usize,
    stride: usize,
    input_shape: &GridField,
) -> GridField {
    let kext: Vec<usize> = vec![next; input_shape.ndim()];
    let ax = conv_axes(input_shape, &kext, stride).expect("validated in forward");
    let win = ax.k1 * ax.k2;
    let area_i = ax.n1 * ax.n2;
    let area_o = ax.o1 * ax.o2;
    let channels = input_shape.channels;
    let mut gin = GridField::zeros(channels, &input_shape.dims, input_shape.dx);
    let work = channels * modes * win * area_o;

    let run = |c: usize, gin_c: &mut [f64]| {
        for m in 0..modes {
            let g_c = &grad_out.values[(c * modes + m) * area_o..(c * modes + m + 1) * area_o];
            let ker_m = &kernel[m * win..(m + 1) * win];
            for q1 in 0..ax.k1 {
                for q2 in 0..ax.k2 {
                    let w = ker_m[q1 * ax.k2 + q2];
                    for p1 in 0..ax.o1 {
                        let in_base = (p1 * ax.s1 + q1) * ax.n2 + q2;
                        let out_base = p1 * ax.o2;
                        for p2 in 0..ax.o2 {
                            gin_c[in_base + p2 * ax.s2] += w * g_c[out_base + p2];
                        }
                    }
                }
            }
        }
    };

    if work > PAR_THRESHOLD && channels > 1 {
        gin.values
            .par_chunks_mut(area_i)
            .enumerate()
            .for_each(|(c, gin_c)| run(c, gin_c));
    } else {
        for (c, gin_c) in gin.values.chunks_mut(area_i).enumerate() {
            run(c, gin_c);
        }
    }
    gin
}

/// Grouped windowed reconstruction: the transpose of `windowed_decomp` with
/// constant kernel rows, interior-cropped and scaled by `1/overlap^d`.
/// Input channel `g*modes + m` contributes to output channel `g`.
pub fn windowed_recon(
    input: &GridField,
    kernel: &[f64],
    modes: usize,
    next: usize,
    stride: usize,
    overlap: usize,
) -> Result<GridField> {
    if next != stride * overlap {
        return Err(LnoError::InvalidOverlap {
            extent: next,
            stride,
            overlap,
        });
    }
    if input.channels % modes != 0 {
        return Err(LnoError::ShapeMismatch {
            axis: 0,
            detail: format!("{} coefficient channels not divisible by {modes} modes", input.channels),
        });
    }
    let d = input.ndim();
    let groups = input.channels / modes;
    let (c1, c2) = input.dims2();
    let (k1, k2) = if d == 1 { (next, 1) } else { (next, next) };
    let (s1, s2) = (stride, if d == 1 { 1 } else { stride });
    let (ov1, ov2) = (overlap, if d == 1 { 1 } else { overlap });
    let geom = ReconGeom::new(c1, c2, k1, k2, s1, s2, ov1, ov2);
    let scale = 1.0 / (overlap.pow(d as u32) as f64);
    let win = k1 * k2;
    let area_c = c1 * c2;
    let area_o = geom.out1 * geom.out2;
    let out_dims: Vec<usize> = if d == 1 { vec![geom.out1] } else { vec![geom.out1, geom.out2] };
    let mut out = GridField::zeros(groups, &out_dims, input.dx);
    let work = groups * modes * ov1 * ov2 * area_o;

    let run = |g: usize, out_c: &mut [f64]| {
        for x1 in 0..geom.out1 {
            let p1 = x1 + geom.off1;
            let (w1lo, w1hi) = covering_windows(p1, k1, s1, c1);
            for x2 in 0..geom.out2 {
                let p2 = x2 + geom.off2;
                let (w2lo, w2hi) = covering_windows(p2, k2, s2, c2);
                let mut acc = 0.0;
                for m in 0..modes {
                    let in_c = &input.values[(g * modes + m) * area_c..(g * modes + m + 1) * area_c];
                    let ker_m = &kernel[m * win..(m + 1) * win];
                    for w1 in w1lo..=w1hi {
                        let q1 = p1 - w1 * s1;
                        for w2 in w2lo..=w2hi {
                            let q2 = p2 - w2 * s2;
                            acc += in_c[w1 * c2 + w2] * ker_m[q1 * k2 + q2];
                        }
                    }
                }
                out_c[x1 * geom.out2 + x2] = scale * acc;
            }
        }
    };

    if work > PAR_THRESHOLD && groups > 1 {
        out.values
            .par_chunks_mut(area_o)
            .enumerate()
            .for_each(|(g, out_c)| run(g, out_c));
    } else {
        for (g, out_c) in out.values.chunks_mut(area_o).enumerate() {
            run(g, out_c);
        }
    }
    Ok(out)
}

/// Adjoint of `windowed_recon` with respect to the coefficient field.
pub fn windowed_recon_backward(
    grad_out: &GridField,
    kernel: &[f64],
    modes: usize,
    next: usize,
    stride: usize,
    overlap: usize,
    input_shape: &GridField,
) -> GridField {
    let d = input_shape.ndim();
    let (c1, c2) = input_shape.dims2();
    let (k1, k2) = if d == 1 { (next, 1) } else { (next, next) };
    let (s1, s2) = (stride, if d == 1 { 1 } else { stride });
    let (ov1, ov2) = (overlap, if d == 1 { 1 } else { overlap });
    let geom = ReconGeom::new(c1, c2, k1, k2, s1, s2, ov1, ov2);
    let scale = 1.0 / (overlap.pow(d as u32) as f64);
    let win = k1 * k2;
    let area_c = c1 * c2;
    let area_o = geom.out1 * geom.out2;
    let mut gin = GridField::zeros(input_shape.channels, &input_shape.dims, input_shape.dx);
    let work = input_shape.channels * win * area_c;

    // Gather per coefficient slot: every kernel offset whose scatter target
    // lands in the interior contributes.
    let run = |ch: usize, gin_c: &mut [f64]| {
        let (g, m) = (ch / modes, ch % modes);
        let g_c = &grad_out.values[g * area_o..(g + 1) * area_o];
        let ker_m = &kernel[m * win..(m + 1) * win];
        for w1 in 0..c1 {
            for w2 in 0..c2 {
                let mut acc = 0.0;
                for q1 in 0..k1 {
                    let p1 = w1 * s1 + q1;
                    if p1 < geom.off1 || p1 >= geom.off1 + geom.out1 {
                        continue;
                    }
                    for q2 in 0..k2 {
                        let p2 = w2 * s2 + q2;
                        if p2 < geom.off2 || p2 >= geom.off2 + geom.out2 {
                            continue;
                        }
                        acc += g_c[(p1 - geom.off1) * geom.out2 + (p2 - geom.off2)] * ker_m[q1 * k2 + q2];
                    }
                }
                gin_c[w1 * c2 + w2] = scale * acc;
            }
        }
    };

    if work > PAR_THRESHOLD && gin.channels > 1 {
        gin.values
            .par_chunks_mut(area_c)
            .enumerate()
            .for_each(|(ch, gin_c)| run(ch, gin_c));
    } else {
        for (ch, gin_c) in gin.values.chunks_mut(area_c).enumerate() {
            run(ch, gin_c);
        }
    }
    gin
}

/// Per-group mode mixing: output channel `g*modes + m_out` is
/// `sum_m w[g][m][m_out] * input[g*modes + m]` pointwise over the grid.
pub fn channel_mix_forward(input: &GridField, weight: &WeightTensor) -> Result<GridField> {
    if weight.shape.len() != 3 || weight.shape[1] != weight.shape[2] {
        return Err(LnoError::ShapeMismatch {
            axis: 0,
            detail: format!("mixing weight shape {:?} is not [group][modes][modes]", weight.shape),
        });
    }
    let (groups, modes) = (weight.shape[0], weight.shape[1]);
    if input.channels != groups * modes {
        return Err(LnoError::ShapeMismatch {
            axis: 0,
            detail: format!(
                "mixing weight covers {} channels, field has {}",
                groups * modes,
                input.channels
            ),
        });
    }
    let area = input.points();
    let mut out = GridField::zeros(input.channels, &input.dims, input.dx);
    let run = |ch: usize, out_c: &mut [f64]| {
        let (g, mo) = (ch / modes, ch % modes);
        for mi in 0..modes {
            let w = weight.values[(g * modes + mi) * modes + mo];
            let in_c = &input.values[(g * modes + mi) * area..(g * modes + mi + 1) * area];
            for (o, x) in out_c.iter_mut().zip(in_c) {
                *o += w * x;
            }
        }
    };
    if input.channels * modes * area > PAR_THRESHOLD {
        out.values
            .par_chunks_mut(area)
            .enumerate()
            .for_each(|(ch, out_c)| run(ch, out_c));
    } else {
        for (ch, out_c) in out.values.chunks_mut(area).enumerate() {
            run(ch, out_c);
        }
    }
    Ok(out)
}

/// Adjoint of `channel_mix_forward` with respect to its input.
pub fn channel_mix_backward_input(grad_out: &GridField, weight: &WeightTensor) -> GridField {
    let modes = weight.shape[1];
    let area = grad_out.points();
    let mut gin = GridField::zeros(grad_out.channels, &grad_out.dims, grad_out.dx);
    for (ch, gin_c) in gin.values.chunks_mut(area).enumerate() {
        let (g, mi) = (ch / modes, ch % modes);
        for mo in 0..modes {
            let w = weight.values[(g * modes + mi) * modes + mo];
            let g_c = &grad_out.values[(g * modes + mo) * area..(g * modes + mo + 1) * area];
            for (o, x) in gin_c.iter_mut().zip(g_c) {
                *o += w * x;
            }
        }
    }
    gin
}

/// Adjoint of `channel_mix_forward` with respect to the weight.
pub fn channel_mix_backward_weight(
    grad_out: &GridField,
    input: &GridField,
    modes: usize,
    wgrad: &mut [f64],
) {
    let area = input.points();
    let groups = input.channels / modes;
    for g in 0..groups {
        for mi in 0..modes {
            let in_c = &input.values[(g * modes + mi) * area..(g * modes + mi + 1) * area];
            for mo in 0..modes {
                let g_c = &grad_out.values[(g * modes + mo) * area..(g * modes + mo + 1) * area];
                let mut acc = 0.0;
                for (a, b) in in_c.iter().zip(g_c) {
                    acc += a * b;
                }
                wgrad[(g * modes + mi) * modes + mo] += acc;
            }
        }
    }
}

/// Tanh-form GELU.
#[inline]
pub fn gelu_scalar(x: f64) -> f64 {
    let c = (2.0 / std::f64::consts::PI).sqrt();
    0.5 * x * (1.0 + (c * (x + 0.044715 * x * x * x)).tanh())
}

/// Derivative of the tanh-form GELU.
#[inline]
pub fn gelu_grad_scalar(x: f64) -> f64 {
    let c = (2.0 / std::f64::consts::PI).sqrt();
    let inner = c * (x + 0.044715 * x * x * x);
    let t = inner.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * c * (1.0 + 3.0 * 0.044715 * x * x)
}

pub fn gelu(input: &GridField) -> GridField {
    let mut out = input.clone();
    for v in &mut out.values {
        *v = gelu_scalar(*v);
    }
    out
}

/// `(j - l) mod n` without underflow.
#[inline]
fn wrap_sub(j: usize, l: usize, n: usize) -> usize {
    (j + n * (l / n + 1) - l) % n
}

/// Periodic (circular) extension by `lo`/`hi` points per axis.
pub fn extend_periodic(input: &GridField, lo: &[usize], hi: &[usize]) -> GridField {
    let d = input.ndim();
    let (n1, n2) = input.dims2();
    let (l1, h1) = (lo[0], hi[0]);
    let (l2, h2) = if d == 1 { (0, 0) } else { (lo[1], hi[1]) };
    let (m1, m2) = (n1 + l1 + h1, n2 + l2 + h2);
    let out_dims: Vec<usize> = if d == 1 { vec![m1] } else { vec![m1, m2] };
    let mut out = GridField::zeros(input.channels, &out_dims, input.dx);
    for c in 0..input.channels {
        let in_c = &input.values[c * n1 * n2..(c + 1) * n1 * n2];
        let out_c = &mut out.values[c * m1 * m2..(c + 1) * m1 * m2];
        for j1 in 0..m1 {
            let i1 = wrap_sub(j1, l1, n1);
            for j2 in 0..m2 {
                let i2 = wrap_sub(j2, l2, n2);
                out_c[j1 * m2 + j2] = in_c[i1 * n2 + i2];
            }
        }
    }
    out
}

/// Adjoint of periodic extension: fold each padded copy back onto its source.
pub fn extend_periodic_backward(
    grad_out: &GridField,
    lo: &[usize],
    input_shape: &GridField,
) -> GridField {
    let d = input_shape.ndim();
    let (n1, n2) = input_shape.dims2();
    let (l1, l2) = (lo[0], if d == 1 { 0 } else { lo[1] });
    let (m1, m2) = grad_out.dims2();
    let mut gin = GridField::zeros(input_shape.channels, &input_shape.dims, input_shape.dx);
    for c in 0..input_shape.channels {
        let g_c = &grad_out.values[c * m1 * m2..(c + 1) * m1 * m2];
        let gin_c = &mut gin.values[c * n1 * n2..(c + 1) * n1 * n2];
        for j1 in 0..m1 {
            let i1 = wrap_sub(j1, l1, n1);
            for j2 in 0..m2 {
                let i2 = wrap_sub(j2, l2, n2);
                gin_c[i1 * n2 + i2] += g_c[j1 * m2 + j2];
            }
        }
    }
    gin
}

/// Slice dropping `lo`/`hi` points per axis.
pub fn crop(input: &GridField, lo: &[usize], hi: &[usize]) -> Result<GridField> {
    let d = input.ndim();
    let (n1, n2) = input.dims2();
    let (l1, h1) = (lo[0], hi[0]);
    let (l2, h2) = if d == 1 { (0, 0) } else { (lo[1], hi[1]) };
    for axis in 0..d {
        let (n, l, h) = if axis == 0 { (n1, l1, h1) } else { (n2, l2, h2) };
        if l + h >= n {
            return Err(LnoError::ShapeMismatch {
                axis,
                detail: format!("cannot crop {l}+{h} points from axis of size {n}"),
            });
        }
    }
    let (m1, m2) = (n1 - l1 - h1, n2 - l2 - h2);
    let out_dims: Vec<usize> = if d == 1 { vec![m1] } else { vec![m1, m2] };
    let mut out = GridField::zeros(input.channels, &out_dims, input.dx);
    for c in 0..input.channels {
        let in_c = &input.values[c * n1 * n2..(c + 1) * n1 * n2];
        let out_c = &mut out.values[c * m1 * m2..(c + 1) * m1 * m2];
        for j1 in 0..m1 {
            let src = (j1 + l1) * n2 + l2;
            out_c[j1 * m2..(j1 + 1) * m2].copy_from_slice(&in_c[src..src + m2]);
        }
    }
    Ok(out)
}

/// Adjoint of `crop`: scatter the gradient into the uncropped region.
pub fn crop_backward(grad_out: &GridField, lo: &[usize], input_shape: &GridField) -> GridField {
    let d = input_shape.ndim();
    let (n1, n2) = input_shape.dims2();
    let (l1, l2) = (lo[0], if d == 1 { 0 } else { lo[1] });
    let (m1, m2) = grad_out.dims2();
    let mut gin = GridField::zeros(input_shape.channels, &input_shape.dims, input_shape.dx);
    for c in 0..input_shape.channels {
        let g_c = &grad_out.values[c * m1 * m2..(c + 1) * m1 * m2];
        let gin_c = &mut gin.values[c * n1 * n2..(c + 1) * n1 * n2];
        for j1 in 0..m1 {
            let dst = (j1 + l1) * n2 + l2;
            gin_c[dst..dst + m2].copy_from_slice(&g_c[j1 * m2..(j1 + 1) * m2]);
        }
    }
    gin
}

/// Mean over grid points of the per-point Euclidean norm across channels.
pub fn point_norm_mean(pred: &GridField, target: &GridField) -> Result<f64> {
    pred.same_layout(target)?;
    let area = pred.points();
    let mut total = 0.0;
    for p in 0..area {
        let mut sq = 0.0;
        for c in 0..pred.channels {
            let diff = pred.values[c * area + p] - target.values[c * area + p];
            sq += diff * diff;
        }
        total += sq.sqrt();
    }
    Ok(total / area as f64)
}

/// Adjoint of `point_norm_mean` with respect to `pred`. The subgradient at a
/// point with zero difference is taken as zero.
pub fn point_norm_mean_backward(pred: &GridField, target: &GridField, grad_scale: f64) -> GridField {
    let area = pred.points();
    let mut gin = GridField::zeros(pred.channels, &pred.dims, pred.dx);
    for p in 0..area {
        let mut sq = 0.0;
        for c in 0..pred.channels {
            let diff = pred.values[c * area + p] - target.values[c * area + p];
            sq += diff * diff;
        }
        let norm = sq.sqrt();
        if norm > 0.0 {
            let f = grad_scale / (area as f64 * norm);
            for c in 0..pred.channels {
                let diff = pred.values[c * area + p] - target.values[c * area + p];
                gin.values[c * area + p] = f * diff;
            }
        }
    }
    gin
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_field(channels: usize, dims: &[usize], rng: &mut ChaCha8Rng) -> GridField {
        GridField::from_fn(channels, dims, 1.0, |_, _| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn identity_kernel_is_identity() {
        let f = GridField::from_fn(1, &[5, 5], 1.0, |_, idx| (idx[0] * 5 + idx[1]) as f64);
        let k = WeightTensor::new(&[1, 1, 1, 1], vec![1.0], false).unwrap();
        let out = conv_forward(&f, &k, 1).unwrap();
        assert_eq!(out.values, f.values);
        assert_eq!(out.dims, f.dims);
    }

    #[test]
    fn one_by_one_kernel_sums_channels() {
        let f = GridField::from_fn(2, &[3, 3], 1.0, |c, idx| (c + 1) as f64 * (idx[0] + idx[1]) as f64);
        let k = WeightTensor::new(&[1, 2, 1, 1], vec![1.0, 1.0], false).unwrap();
        let out = conv_forward(&f, &k, 1).unwrap();
        assert_eq!(out.channels, 1);
        for i1 in 0..3 {
            for i2 in 0..3 {
                assert_eq!(out.at2(0, i1, i2), 3.0 * (i1 + i2) as f64);
            }
        }
    }

    /// Direct quadruple-loop reference convolution.
    fn conv_oracle(input: &GridField, kernel: &WeightTensor, stride: usize) -> GridField {
        let (co, ci) = (kernel.shape[0], kernel.shape[1]);
        let (k1, k2) = (kernel.shape[2], kernel.shape[3]);
        let (n1, n2) = (input.dims[0], input.dims[1]);
        let (o1, o2) = ((n1 - k1) / stride + 1, (n2 - k2) / stride + 1);
        GridField::from_fn(co, &[o1, o2], input.dx, |oc, idx| {
            let mut acc = 0.0;
            for ic in 0..ci {
                for q1 in 0..k1 {
                    for q2 in 0..k2 {
                        acc += kernel.values[((oc * ci + ic) * k1 + q1) * k2 + q2]
                            * input.at2(ic, idx[0] * stride + q1, idx[1] * stride + q2);
                    }
                }
            }
            acc
        })
    }

    #[test]
    fn conv_matches_quadruple_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let f = random_field(1, &[8, 8], &mut rng);
        let kv: Vec<f64> = (0..9).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let k = WeightTensor::new(&[1, 1, 3, 3], kv, false).unwrap();
        let out = conv_forward(&f, &k, 1).unwrap();
        let want = conv_oracle(&f, &k, 1);
        assert_eq!(out.dims, vec![6, 6]);
        for (a, b) in out.values.iter().zip(&want.values) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn strided_conv_matches_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let f = random_field(2, &[10, 10], &mut rng);
        let kv: Vec<f64> = (0..3 * 2 * 16).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let k = WeightTensor::new(&[3, 2, 4, 4], kv, false).unwrap();
        let out = conv_forward(&f, &k, 2).unwrap();
        let want = conv_oracle(&f, &k, 2);
        assert_eq!(out.dims, vec![4, 4]);
        for (a, b) in out.values.iter().zip(&want.values) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn conv_is_linear() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let f = random_field(2, &[7, 6], &mut rng);
        let g = random_field(2, &[7, 6], &mut rng);
        let kv: Vec<f64> = (0..2 * 2 * 9).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let k = WeightTensor::new(&[2, 2, 3, 3], kv, false).unwrap();
        let (a, b) = (0.7, -1.3);
        let mut combo = f.clone();
        for (v, w) in combo.values.iter_mut().zip(&g.values) {
            *v = a * *v + b * w;
        }
        let lhs = conv_forward(&combo, &k, 1).unwrap();
        let cf = conv_forward(&f, &k, 1).unwrap();
        let cg = conv_forward(&g, &k, 1).unwrap();
        for ((l, x), y) in lhs.values.iter().zip(&cf.values).zip(&cg.values) {
            let want = a * x + b * y;
            assert!((l - want).abs() <= 1e-12 * want.abs().max(1.0));
        }
    }

    #[test]
    fn conv_rejects_bad_stride_with_axis() {
        let f = GridField::zeros(1, &[9, 8], 1.0);
        let k = WeightTensor::zeros(&[1, 1, 3, 3], false);
        match conv_forward(&f, &k, 2) {
            Err(LnoError::StrideMismatch { axis, .. }) => assert_eq!(axis, 1),
            other => panic!("expected stride error, got {other:?}"),
        }
    }

    #[test]
    fn conv_rejects_oversized_kernel_with_axis() {
        let f = GridField::zeros(1, &[8, 2], 1.0);
        let k = WeightTensor::zeros(&[1, 1, 3, 3], false);
        match conv_forward(&f, &k, 1) {
            Err(LnoError::ShapeMismatch { axis, .. }) => assert_eq!(axis, 1),
            other => panic!("expected shape error, got {other:?}"),
        }
    }

    #[test]
    fn deconv_single_window_scales_kernel() {
        // One coefficient window: output is kernel values times the
        // coefficient, scaled by 1/K^d.
        let coeff = GridField::from_values(1, &[1], 1.0, vec![2.0]).unwrap();
        let k = WeightTensor::new(&[1, 1, 4], vec![1.0, 2.0, 3.0, 4.0], false).unwrap();
        let out = deconv_forward(&coeff, &k, 2, 2).unwrap();
        assert_eq!(out.dims, vec![4]);
        assert_eq!(out.values, vec![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn deconv_overlap_two_constant_is_constant() {
        // K=2, constant coefficients and kernel: overlap normalization cancels.
        let coeff = GridField::from_values(1, &[4], 1.0, vec![3.0; 4]).unwrap();
        let k = WeightTensor::new(&[1, 1, 4], vec![1.0; 4], false).unwrap();
        let out = deconv_forward(&coeff, &k, 2, 2).unwrap();
        // raw span (4-1)*2+4 = 10, crop 2 per side -> 6 interior points
        assert_eq!(out.dims, vec![6]);
        for v in &out.values {
            assert!((v - 3.0).abs() < 1e-12);
        }
    }

    /// Explicit window-placement scatter-add oracle for 1-D deconvolution.
    fn deconv_oracle_1d(coeff: &GridField, kernel: &[f64], stride: usize, overlap: usize) -> Vec<f64> {
        let c = coeff.dims[0];
        let next = stride * overlap;
        let span = (c - 1) * stride + next;
        let mut raw = vec![0.0; span];
        for w in 0..c {
            for i in 0..next {
                raw[w * stride + i] += coeff.values[w] * kernel[i];
            }
        }
        let off = (overlap.min(c) - 1) * stride;
        raw[off..span - off].iter().map(|v| v / overlap as f64).collect()
    }

    #[test]
    fn deconv_matches_scatter_add_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let coeff = random_field(1, &[4], &mut rng);
        let kv: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let k = WeightTensor::new(&[1, 1, 4], kv.clone(), false).unwrap();
        let out = deconv_forward(&coeff, &k, 2, 2).unwrap();
        let want = deconv_oracle_1d(&coeff, &kv, 2, 2);
        assert_eq!(out.values.len(), want.len());
        for (a, b) in out.values.iter().zip(&want) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn deconv_rejects_bad_overlap() {
        let coeff = GridField::zeros(1, &[4], 1.0);
        let k = WeightTensor::zeros(&[1, 1, 5], false);
        assert!(matches!(
            deconv_forward(&coeff, &k, 2, 2),
            Err(LnoError::InvalidOverlap { .. })
        ));
    }

    #[test]
    fn windowed_recon_is_grouped_deconv() {
        // One group, identity check against deconv_forward with a [modes][1] kernel.
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let modes = 3;
        let coeff = random_field(modes, &[5], &mut rng);
        let kernel: Vec<f64> = (0..modes * 6).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let got = windowed_recon(&coeff, &kernel, modes, 6, 3, 2).unwrap();
        let k = WeightTensor::new(&[modes, 1, 6], kernel.clone(), false).unwrap();
        let want = deconv_forward(&coeff, &k, 3, 2).unwrap();
        assert_eq!(got.values.len(), want.values.len());
        for (a, b) in got.values.iter().zip(&want.values) {
            assert!((a - b).abs() <= 1e-13 * b.abs().max(1.0));
        }
    }

    #[test]
    fn gelu_reference_values() {
        assert_eq!(gelu_scalar(0.0), 0.0);
        assert!(gelu_scalar(-10.0).abs() < 1e-8);
        assert!((gelu_scalar(1.0) - 0.8411920).abs() < 1e-6);
    }

    #[test]
    fn gelu_grad_matches_finite_difference() {
        for &x in &[-2.0, -0.5, 0.0, 0.3, 1.7] {
            let h = 1e-6;
            let fd = (gelu_scalar(x + h) - gelu_scalar(x - h)) / (2.0 * h);
            assert!((gelu_grad_scalar(x) - fd).abs() < 1e-8, "x={x}");
        }
    }

    #[test]
    fn periodic_extend_wraps() {
        let f = GridField::from_values(1, &[4], 1.0, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let out = extend_periodic(&f, &[2], &[2]);
        assert_eq!(out.values, vec![3.0, 4.0, 1.0, 2.0, 3.0, 4.0, 1.0, 2.0]);
    }

    #[test]
    fn periodic_extend_then_crop_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = random_field(2, &[5, 6], &mut rng);
        let ext = extend_periodic(&f, &[3, 2], &[3, 2]);
        let back = crop(&ext, &[3, 2], &[3, 2]).unwrap();
        assert_eq!(back.values, f.values);
    }

    #[test]
    fn extend_pads_wider_than_the_field() {
        let f = GridField::from_values(1, &[3], 1.0, vec![1.0, 2.0, 3.0]).unwrap();
        let out = extend_periodic(&f, &[4], &[0]);
        assert_eq!(out.values, vec![3.0, 1.0, 2.0, 3.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn extend_backward_accumulates_wraps() {
        let f = GridField::zeros(1, &[3], 1.0);
        let g = GridField::from_values(1, &[7], 1.0, vec![1.0; 7]).unwrap();
        let gin = extend_periodic_backward(&g, &[2], &f);
        assert_eq!(gin.values.iter().sum::<f64>(), 7.0);
    }

    #[test]
    fn point_norm_mean_constant_offset() {
        let a = GridField::zeros(2, &[4, 4], 1.0);
        let mut b = GridField::zeros(2, &[4, 4], 1.0);
        for v in b.channel_mut(0) {
            *v = 0.3;
        }
        let e = point_norm_mean(&a, &b).unwrap();
        assert!((e - 0.3).abs() < 1e-14);
    }
}
