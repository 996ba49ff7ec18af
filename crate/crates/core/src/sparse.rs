//! Sparse storage and the linear solvers behind `solve_dirichlet`.
//!
//! Operators on lexicographically ordered grids are banded, so the direct path
//! is a banded LU with partial pivoting (the LAPACK `gbtf2` layout). BiCGSTAB
//! with a Jacobi preconditioner is the fallback when the factorization breaks.

use std::io::Write;

use crate::error::{Error, Result};

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a square matrix from per-row entries. Duplicate columns are summed
    /// and exact zeros dropped.
    pub fn from_rows(n: usize, rows: Vec<Vec<(usize, f64)>>) -> Self {
        assert_eq!(rows.len(), n);
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|&(c, _)| c);
            let mut last: Option<usize> = None;
            for (c, v) in row {
                assert!(c < n, "column {c} out of range");
                if last == Some(c) {
                    *vals.last_mut().unwrap() += v;
                } else {
                    cols.push(c);
                    vals.push(v);
                    last = Some(c);
                }
            }
            // drop exact zeros left by cancellation
            let start = *row_ptr.last().unwrap();
            let mut write = start;
            for read in start..cols.len() {
                if vals[read] != 0.0 {
                    cols[write] = cols[read];
                    vals[write] = vals[read];
                    write += 1;
                }
            }
            cols.truncate(write);
            vals.truncate(write);
            row_ptr.push(cols.len());
        }
        Self { n, row_ptr, cols, vals }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    pub fn row_len(&self, i: usize) -> usize {
        self.row_ptr[i + 1] - self.row_ptr[i]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|&(c, _)| c == j).map_or(0.0, |(_, v)| v)
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).map(|(c, v)| v * x[c]).sum()).collect()
    }

    pub fn mul_vec_transposed(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for (i, &xi) in x.iter().enumerate() {
            for (c, v) in self.row(i) {
                y[c] += v * xi;
            }
        }
        y
    }

    pub fn transpose(&self) -> Self {
        let mut rows = vec![Vec::new(); self.n];
        for i in 0..self.n {
            for (c, v) in self.row(i) {
                rows[c].push((i, v));
            }
        }
        Self::from_rows(self.n, rows)
    }

    /// `(lower, upper)` bandwidths.
    pub fn bandwidths(&self) -> (usize, usize) {
        let mut kl = 0;
        let mut ku = 0;
        for i in 0..self.n {
            for (c, _) in self.row(i) {
                if c < i {
                    kl = kl.max(i - c);
                } else {
                    ku = ku.max(c - i);
                }
            }
        }
        (kl, ku)
    }

    pub fn norm_inf(&self) -> f64 {
        (0..self.n).map(|i| self.row(i).map(|(_, v)| v.abs()).sum::<f64>()).fold(0.0, f64::max)
    }

    pub fn norm_1(&self) -> f64 {
        let mut colsum = vec![0.0; self.n];
        for (c, v) in self.cols.iter().zip(&self.vals) {
            colsum[*c] += v.abs();
        }
        colsum.into_iter().fold(0.0, f64::max)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    /// Max `|A - Aᵀ|` entry.
    pub fn asymmetry(&self) -> f64 {
        let t = self.transpose();
        let mut worst = 0.0_f64;
        for i in 0..self.n {
            for (c, v) in self.row(i) {
                worst = worst.max((v - t.get(i, c)).abs());
            }
        }
        worst
    }

    /// Coordinate text format: a `row col value` header line, then one entry per line.
    pub fn write_triplets<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "# {} {} {}", self.n, self.n, self.nnz())?;
        writeln!(out, "row col value")?;
        for i in 0..self.n {
            for (c, v) in self.row(i) {
                writeln!(out, "{i} {c} {v:e}")?;
            }
        }
        Ok(())
    }
}

pub(crate) fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `‖b - A x‖₂ / ‖b‖₂`, or `‖A x‖₂` when `b = 0`.
pub fn relative_residual(a: &CsrMatrix, x: &[f64], b: &[f64]) -> f64 {
    let ax = a.mul_vec(x);
    let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    let nb = norm2(b);
    if nb == 0.0 {
        norm2(&r)
    } else {
        norm2(&r) / nb
    }
}

/// Banded LU factorization `A = P L U` with partial pivoting.
#[derive(Debug, Clone)]
pub struct BandedLu {
    n: usize,
    kl: usize,
    ku: usize,
    ldab: usize,
    ab: Vec<f64>,
    ipiv: Vec<usize>,
}

impl BandedLu {
    /// Factors `a`. Fails with [`Error::SingularMatrix`] on a vanishing pivot.
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        let n = a.dim();
        let (kl, ku) = a.bandwidths();
        let kv = kl + ku;
        let ldab = 2 * kl + ku + 1;
        let mut ab = vec![0.0; ldab * n];
        for i in 0..n {
            for (c, v) in a.row(i) {
                ab[c * ldab + kv + i - c] = v;
            }
        }
        let mut ipiv = vec![0; n];
        let mut ju = 0;
        let mut max_pivot = 0.0_f64;
        let mut min_pivot = f64::INFINITY;
        for j in 0..n {
            let km = kl.min(n - 1 - j);
            let col = j * ldab + kv;
            let mut jp = 0;
            let mut best = ab[col].abs();
            for t in 1..=km {
                let v = ab[col + t].abs();
                if v > best {
                    best = v;
                    jp = t;
                }
            }
            ipiv[j] = j + jp;
            if best == 0.0 {
                return Err(Error::SingularMatrix { condition: f64::INFINITY });
            }
            max_pivot = max_pivot.max(best);
            min_pivot = min_pivot.min(best);
            ju = ju.max((j + ku + jp).min(n - 1));
            if jp != 0 {
                for c in j..=ju {
                    let base = c * ldab + kv;
                    ab.swap(base + j - c, base + j + jp - c);
                }
            }
            if km > 0 {
                let pivot = ab[col];
                for t in 1..=km {
                    ab[col + t] /= pivot;
                }
                for c in j + 1..=ju {
                    let ajc = ab[c * ldab + kv + j - c];
                    if ajc == 0.0 {
                        continue;
                    }
                    let dst = c * ldab + kv + j + 1 - c;
                    let (head, tail) = ab.split_at_mut(dst);
                    let l = &head[col + 1..=col + km];
                    for (d, li) in tail[..km].iter_mut().zip(l) {
                        *d -= li * ajc;
                    }
                }
            }
        }
        if min_pivot <= (n as f64) * f64::EPSILON * max_pivot {
            return Err(Error::SingularMatrix { condition: max_pivot / min_pivot });
        }
        Ok(Self { n, kl, ku, ldab, ab, ipiv })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let (n, kl, ldab) = (self.n, self.kl, self.ldab);
        let kv = self.kl + self.ku;
        for j in 0..n.saturating_sub(1) {
            let lm = kl.min(n - 1 - j);
            let l = self.ipiv[j];
            if l != j {
                b.swap(l, j);
            }
            let bj = b[j];
            if bj != 0.0 {
                let col = j * ldab + kv;
                for t in 1..=lm {
                    b[j + t] -= self.ab[col + t] * bj;
                }
            }
        }
        // column-oriented back substitution keeps band accesses contiguous
        for c in (0..n).rev() {
            let base = c * ldab + kv;
            b[c] /= self.ab[base];
            let bc = b[c];
            if bc == 0.0 {
                continue;
            }
            let first = c.saturating_sub(kv);
            let col = &self.ab[base - (c - first)..base];
            for (bi, u) in b[first..c].iter_mut().zip(col) {
                *bi -= u * bc;
            }
        }
    }

    /// Solves `Aᵀ x = b` in place.
    #[allow(clippy::needless_range_loop)]
    pub fn solve_transposed_in_place(&self, b: &mut [f64]) {
        let (n, kl, ldab) = (self.n, self.kl, self.ldab);
        let kv = self.kl + self.ku;
        for i in 0..n {
            let mut s = b[i];
            let first = i.saturating_sub(kv);
            let base = i * ldab + kv;
            for r in first..i {
                s -= self.ab[base + r - i] * b[r];
            }
            b[i] = s / self.ab[base];
        }
        for j in (0..n.saturating_sub(1)).rev() {
            let lm = kl.min(n - 1 - j);
            let col = j * ldab + kv;
            let mut s = b[j];
            for t in 1..=lm {
                s -= self.ab[col + t] * b[j + t];
            }
            b[j] = s;
            let l = self.ipiv[j];
            if l != j {
                b.swap(l, j);
            }
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    pub fn solve_transposed(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_transposed_in_place(&mut x);
        x
    }

    /// Hager–Higham estimate of `‖A⁻¹‖₁`.
    pub fn inverse_norm1_estimate(&self) -> f64 {
        let n = self.n;
        let mut x = vec![1.0 / n as f64; n];
        let mut estimate = 0.0;
        for _ in 0..5 {
            let y = self.solve(&x);
            estimate = y.iter().map(|v| v.abs()).sum();
            let sign: Vec<f64> = y.iter().map(|v| if *v >= 0.0 { 1.0 } else { -1.0 }).collect();
            let z = self.solve_transposed(&sign);
            let (jmax, zmax) =
                z.iter().enumerate().fold((0, 0.0_f64), |acc, (j, v)| if v.abs() > acc.1 { (j, v.abs()) } else { acc });
            if zmax <= dot(&z, &x) {
                break;
            }
            x = vec![0.0; n];
            x[jmax] = 1.0;
        }
        estimate
    }
}

/// Right-preconditioned BiCGSTAB with a Jacobi preconditioner.
pub fn bicgstab(a: &CsrMatrix, b: &[f64], x0: Option<&[f64]>, tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    let n = a.dim();
    let diag: Vec<f64> = a.diagonal().into_iter().map(|d| if d != 0.0 { 1.0 / d } else { 1.0 }).collect();
    let precond = |v: &[f64]| -> Vec<f64> { v.iter().zip(&diag).map(|(a, d)| a * d).collect() };
    let mut x = x0.map_or_else(|| vec![0.0; n], |v| v.to_vec());
    let nb = norm2(b).max(f64::MIN_POSITIVE);
    let ax = a.mul_vec(&x);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    if norm2(&r) / nb <= tol || norm2(b) == 0.0 {
        return Ok(x);
    }
    let r_hat = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut residual = f64::INFINITY;
    for _ in 0..max_iter {
        let rho_new = dot(&r_hat, &r);
        if rho_new == 0.0 {
            break;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for k in 0..n {
            p[k] = r[k] + beta * (p[k] - omega * v[k]);
        }
        let p_hat = precond(&p);
        v = a.mul_vec(&p_hat);
        alpha = rho / dot(&r_hat, &v);
        let s: Vec<f64> = r.iter().zip(&v).map(|(ri, vi)| ri - alpha * vi).collect();
        if norm2(&s) / nb <= tol {
            for k in 0..n {
                x[k] += alpha * p_hat[k];
            }
            return Ok(x);
        }
        let s_hat = precond(&s);
        let t = a.mul_vec(&s_hat);
        let tt = dot(&t, &t);
        omega = if tt > 0.0 { dot(&t, &s) / tt } else { 0.0 };
        for k in 0..n {
            x[k] += alpha * p_hat[k] + omega * s_hat[k];
            r[k] = s[k] - omega * t[k];
        }
        residual = norm2(&r) / nb;
        if residual <= tol {
            return Ok(x);
        }
        if omega == 0.0 {
            break;
        }
    }
    Err(Error::SolverDiverged { iterations: max_iter, residual })
}
