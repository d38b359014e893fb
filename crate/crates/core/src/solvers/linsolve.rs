//! Sparse CSR matrices and the iterative solvers the implicit time-steppers
//! rely on: conjugate gradients for the SPD Newmark system, BiCGStab with
//! Jacobi preconditioning for the nonsymmetric Burgers Jacobians.

use crate::error::{LnoError, Result};

/// Compressed sparse row matrix.
#[derive(Debug, Clone)]
pub struct Csr {
    pub n: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub data: Vec<f64>,
}

/// Row-by-row CSR assembly; duplicate columns within a row are merged.
pub struct CsrBuilder {
    n: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    data: Vec<f64>,
    row: Vec<(usize, f64)>,
}

impl CsrBuilder {
    pub fn new(n: usize, nnz_hint: usize) -> Self {
        CsrBuilder {
            n,
            indptr: vec![0],
            indices: Vec::with_capacity(nnz_hint),
            data: Vec::with_capacity(nnz_hint),
            row: Vec::with_capacity(8),
        }
    }

    pub fn push(&mut self, col: usize, val: f64) {
        debug_assert!(col < self.n);
        self.row.push((col, val));
    }

    pub fn finish_row(&mut self) {
        self.row.sort_unstable_by_key(|&(c, _)| c);
        let mut it = self.row.drain(..).peekable();
        while let Some((col, mut val)) = it.next() {
            while it.peek().is_some_and(|&(c, _)| c == col) {
                val += it.next().expect("peeked").1;
            }
            self.indices.push(col);
            self.data.push(val);
        }
        self.indptr.push(self.indices.len());
    }

    pub fn build(self) -> Csr {
        assert_eq!(self.indptr.len(), self.n + 1, "not all rows finished");
        Csr {
            n: self.n,
            indptr: self.indptr,
            indices: self.indices,
            data: self.data,
        }
    }
}

impl Csr {
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.n {
            let mut acc = 0.0;
            for k in self.indptr[i]..self.indptr[i + 1] {
                acc += self.data[k] * x[self.indices[k]];
            }
            y[i] = acc;
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n];
        for i in 0..self.n {
            for k in self.indptr[i]..self.indptr[i + 1] {
                if self.indices[k] == i {
                    d[i] = self.data[k];
                }
            }
        }
        d
    }
}

/// Zero-fill-in incomplete LU factorization of a CSR matrix, used as a
/// BiCGStab preconditioner. Requires sorted column indices (the builder
/// guarantees this) and a nonzero diagonal in every row.
pub struct Ilu0 {
    lu: Csr,
    diag_ptr: Vec<usize>,
}

impl Ilu0 {
    pub fn new(a: &Csr) -> Result<Self> {
        let mut lu = a.clone();
        let n = lu.n;
        let mut diag_ptr = vec![usize::MAX; n];
        // Column -> position lookup for the current row.
        let mut pos = vec![usize::MAX; n];
        for i in 0..n {
            let (row_start, row_end) = (lu.indptr[i], lu.indptr[i + 1]);
            for k in row_start..row_end {
                pos[lu.indices[k]] = k;
            }
            for kk in row_start..row_end {
                let k = lu.indices[kk];
                if k >= i {
                    break;
                }
                let dk = diag_ptr[k];
                let pivot = lu.data[dk];
                if pivot == 0.0 {
                    return Err(LnoError::NotConverged {
                        what: "ILU(0) factorization (zero pivot)",
                        iterations: i,
                        residual: 0.0,
                    });
                }
                let factor = lu.data[kk] / pivot;
                lu.data[kk] = factor;
                for j in dk + 1..lu.indptr[k + 1] {
                    let col = lu.indices[j];
                    let p = pos[col];
                    if p != usize::MAX {
                        lu.data[p] -= factor * lu.data[j];
                    }
                }
            }
            for k in row_start..row_end {
                if lu.indices[k] == i {
                    diag_ptr[i] = k;
                }
                pos[lu.indices[k]] = usize::MAX;
            }
            if diag_ptr[i] == usize::MAX || lu.data[diag_ptr[i]] == 0.0 {
                return Err(LnoError::NotConverged {
                    what: "ILU(0) factorization (missing diagonal)",
                    iterations: i,
                    residual: 0.0,
                });
            }
        }
        Ok(Ilu0 { lu, diag_ptr })
    }

    /// Applies (LU)^{-1} r -> x.
    pub fn solve(&self, r: &[f64], x: &mut [f64]) {
        let n = self.lu.n;
        // Forward: L y = r with unit diagonal.
        for i in 0..n {
            let mut acc = r[i];
            for k in self.lu.indptr[i]..self.diag_ptr[i] {
                acc -= self.lu.data[k] * x[self.lu.indices[k]];
            }
            x[i] = acc;
        }
        // Backward: U x = y.
        for i in (0..n).rev() {
            let mut acc = x[i];
            for k in self.diag_ptr[i] + 1..self.lu.indptr[i + 1] {
                acc -= self.lu.data[k] * x[self.lu.indices[k]];
            }
            x[i] = acc / self.lu.data[self.diag_ptr[i]];
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Conjugate gradients for symmetric positive definite systems.
pub fn conjugate_gradient(a: &Csr, b: &[f64], x: &mut [f64], rel_tol: f64, max_iter: usize) -> Result<()> {
    let n = a.n;
    let mut r = vec![0.0; n];
    a.matvec(x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let b_norm = norm(b).max(f64::MIN_POSITIVE);
    if norm(&r) <= rel_tol * b_norm {
        return Ok(());
    }
    let mut p = r.clone();
    let mut ap = vec![0.0; n];
    let mut rs = dot(&r, &r);
    for _ in 0..max_iter {
        a.matvec(&p, &mut ap);
        let alpha = rs / dot(&p, &ap);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rs_next = dot(&r, &r);
        if rs_next.sqrt() <= rel_tol * b_norm {
            return Ok(());
        }
        let beta = rs_next / rs;
        rs = rs_next;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
    }
    Err(LnoError::NotConverged {
        what: "conjugate gradient",
        iterations: max_iter,
        residual: rs.sqrt() / b_norm,
    })
}

/// ILU(0)-preconditioned BiCGStab for nonsymmetric systems, restarting once
/// on a Lanczos breakdown.
pub fn bicgstab(a: &Csr, b: &[f64], x: &mut [f64], rel_tol: f64, max_iter: usize) -> Result<()> {
    let precond = Ilu0::new(a)?;
    let n = a.n;
    let mut r = vec![0.0; n];
    a.matvec(x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let b_norm = norm(b).max(f64::MIN_POSITIVE);
    if norm(&r) <= rel_tol * b_norm {
        return Ok(());
    }
    let mut r0 = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut ph = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut sh = vec![0.0; n];
    let mut t = vec![0.0; n];
    let mut restarted = false;

    for _ in 0..max_iter {
        let rho_next = dot(&r0, &r);
        if rho_next.abs() < 1e-300 * b_norm * b_norm {
            if restarted {
                break;
            }
            // Breakdown: restart with the current residual as shadow vector.
            restarted = true;
            r0.copy_from_slice(&r);
            rho = 1.0;
            alpha = 1.0;
            omega = 1.0;
            for z in v.iter_mut().chain(p.iter_mut()) {
                *z = 0.0;
            }
            continue;
        }
        let beta = (rho_next / rho) * (alpha / omega);
        rho = rho_next;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        precond.solve(&p, &mut ph);
        a.matvec(&ph, &mut v);
        alpha = rho / dot(&r0, &v);
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        if norm(&s) <= rel_tol * b_norm {
            for i in 0..n {
                x[i] += alpha * ph[i];
            }
            return Ok(());
        }
        precond.solve(&s, &mut sh);
        a.matvec(&sh, &mut t);
        omega = dot(&t, &s) / dot(&t, &t).max(f64::MIN_POSITIVE);
        for i in 0..n {
            x[i] += alpha * ph[i] + omega * sh[i];
            r[i] = s[i] - omega * t[i];
        }
        if norm(&r) <= rel_tol * b_norm {
            return Ok(());
        }
        if omega.abs() < f64::MIN_POSITIVE {
            if restarted {
                break;
            }
            restarted = true;
            r0.copy_from_slice(&r);
            rho = 1.0;
            alpha = 1.0;
            omega = 1.0;
            for z in v.iter_mut().chain(p.iter_mut()) {
                *z = 0.0;
            }
        }
    }
    Err(LnoError::NotConverged {
        what: "BiCGStab",
        iterations: max_iter,
        residual: norm(&r) / b_norm,
    })
}

/// Right-preconditioned restarted GMRES with an ILU(0) preconditioner.
pub fn gmres(a: &Csr, b: &[f64], x: &mut [f64], rel_tol: f64, restart: usize, max_restarts: usize) -> Result<()> {
    let precond = Ilu0::new(a)?;
    let n = a.n;
    let b_norm = norm(b).max(f64::MIN_POSITIVE);
    let m = restart;
    let mut r = vec![0.0; n];
    let mut last_rel = f64::INFINITY;

    for _ in 0..max_restarts {
        a.matvec(x, &mut r);
        for i in 0..n {
            r[i] = b[i] - r[i];
        }
        let beta = norm(&r);
        last_rel = beta / b_norm;
        if last_rel <= rel_tol {
            return Ok(());
        }

        // Arnoldi basis and the preconditioned directions.
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
        basis.push(r.iter().map(|v| v / beta).collect());
        let mut zs: Vec<Vec<f64>> = Vec::with_capacity(m);
        let mut h = vec![vec![0.0; m]; m + 1];
        let mut cs = vec![0.0; m];
        let mut sn = vec![0.0; m];
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut cols = 0;

        for j in 0..m {
            let mut z = vec![0.0; n];
            precond.solve(&basis[j], &mut z);
            let mut w = vec![0.0; n];
            a.matvec(&z, &mut w);
            zs.push(z);
            for i in 0..=j {
                let hij = dot(&w, &basis[i]);
                h[i][j] = hij;
                for (wk, vk) in w.iter_mut().zip(&basis[i]) {
                    *wk -= hij * vk;
                }
            }
            let hnext = norm(&w);
            h[j + 1][j] = hnext;
            // Apply accumulated Givens rotations to the new column.
            for i in 0..j {
                let (c, s) = (cs[i], sn[i]);
                let tmp = c * h[i][j] + s * h[i + 1][j];
                h[i + 1][j] = -s * h[i][j] + c * h[i + 1][j];
                h[i][j] = tmp;
            }
            let denom = (h[j][j] * h[j][j] + hnext * hnext).sqrt();
            if denom < f64::MIN_POSITIVE {
                cols = j + 1;
                break;
            }
            cs[j] = h[j][j] / denom;
            sn[j] = hnext / denom;
            h[j][j] = denom;
            h[j + 1][j] = 0.0;
            g[j + 1] = -sn[j] * g[j];
            g[j] *= cs[j];
            cols = j + 1;
            if g[j + 1].abs() <= rel_tol * b_norm {
                break;
            }
            if hnext < f64::MIN_POSITIVE {
                break;
            }
            basis.push(w.iter().map(|v| v / hnext).collect());
        }

        // Back-substitute the least-squares solution and update x.
        let mut y = vec![0.0; cols];
        for i in (0..cols).rev() {
            let mut acc = g[i];
            for k in i + 1..cols {
                acc -= h[i][k] * y[k];
            }
            y[i] = acc / h[i][i];
        }
        for (j, yj) in y.iter().enumerate() {
            for i in 0..n {
                x[i] += yj * zs[j][i];
            }
        }
    }
    a.matvec(x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    last_rel = last_rel.min(norm(&r) / b_norm);
    if last_rel <= rel_tol {
        return Ok(());
    }
    Err(LnoError::NotConverged {
        what: "GMRES",
        iterations: max_restarts * restart,
        residual: last_rel,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn laplacian_1d(n: usize) -> Csr {
        // I + tridiagonal periodic Laplacian, diagonally dominant.
        let mut b = CsrBuilder::new(n, 3 * n);
        for i in 0..n {
            b.push(i, 3.0);
            b.push((i + 1) % n, -1.0);
            b.push((i + n - 1) % n, -1.0);
            b.finish_row();
        }
        b.build()
    }

    #[test]
    fn builder_merges_duplicate_columns() {
        let mut b = CsrBuilder::new(2, 4);
        b.push(0, 1.0);
        b.push(0, 2.0);
        b.push(1, 1.0);
        b.finish_row();
        b.push(1, 4.0);
        b.finish_row();
        let m = b.build();
        assert_eq!(m.indices, vec![0, 1, 1]);
        assert_eq!(m.data, vec![3.0, 1.0, 4.0]);
    }

    #[test]
    fn cg_solves_spd_system() {
        let n = 64;
        let a = laplacian_1d(n);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let want: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut b = vec![0.0; n];
        a.matvec(&want, &mut b);
        let mut x = vec![0.0; n];
        conjugate_gradient(&a, &b, &mut x, 1e-13, 500).unwrap();
        for (xi, wi) in x.iter().zip(&want) {
            assert!((xi - wi).abs() < 1e-10);
        }
    }

    #[test]
    fn bicgstab_solves_nonsymmetric_system() {
        let n = 50;
        let mut builder = CsrBuilder::new(n, 3 * n);
        for i in 0..n {
            builder.push(i, 4.0);
            builder.push((i + 1) % n, -1.5);
            builder.push((i + n - 1) % n, -0.5);
            builder.finish_row();
        }
        let a = builder.build();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let want: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut b = vec![0.0; n];
        a.matvec(&want, &mut b);
        let mut x = vec![0.0; n];
        bicgstab(&a, &b, &mut x, 1e-13, 500).unwrap();
        for (xi, wi) in x.iter().zip(&want) {
            assert!((xi - wi).abs() < 1e-9);
        }
    }
}
