//! Truncated symmetric eigensolvers.
//!
//! [`lanczos_top`] finds the `k` eigenpairs of largest magnitude of a
//! symmetric operator using Lanczos with full reorthogonalization and
//! thick restarts. The projected matrix is kept explicitly (every entry is
//! an inner product against the current basis), which makes the restart a
//! plain change of basis: after keeping the Ritz vectors `Y`, the relation
//! `A Y = Y Θ + v bᵀ` is reproduced automatically when `v` is expanded.
//!
//! [`dense_top`] is the reference path used for small problems and by the
//! tests as an oracle.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;

use crate::error::{RdpgError, Result};
use crate::rng::rng_from_seed;

/// Seed for Lanczos start vectors; fixed so embeddings are deterministic.
const START_SEED: u64 = 0x5eed_1a2c_705e_ed00;

pub trait SymmetricOperator: Sync {
    fn dim(&self) -> usize;
    /// `y = A x`; `y` is overwritten.
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

impl SymmetricOperator for DMatrix<f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let n = self.nrows();
        y.iter_mut().for_each(|v| *v = 0.0);
        for (j, &xj) in x.iter().enumerate() {
            if xj == 0.0 {
                continue;
            }
            let col = &self.as_slice()[j * n..(j + 1) * n];
            for (yi, &a) in y.iter_mut().zip(col) {
                *yi += a * xj;
            }
        }
    }
}

/// Eigenpairs ordered by decreasing `|value|`.
#[derive(Debug, Clone)]
pub struct EigenPairs {
    /// Signed eigenvalues.
    pub values: Vec<f64>,
    /// `n × k`, column `i` belongs to `values[i]`.
    pub vectors: DMatrix<f64>,
    pub matvecs: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct LanczosOptions {
    /// Residual tolerance, relative to the largest Ritz value magnitude.
    pub tol: f64,
    /// Only the first `strict` pairs are held to `tol`; the rest use
    /// `loose_tol`. `None` holds every requested pair to `tol`.
    pub strict: Option<usize>,
    pub loose_tol: f64,
    /// Krylov basis size before a restart; `None` picks from `k`.
    pub max_basis: Option<usize>,
    pub max_matvecs: usize,
}

impl Default for LanczosOptions {
    fn default() -> Self {
        LanczosOptions { tol: 1e-10, strict: None, loose_tol: 1e-10, max_basis: None, max_matvecs: 20_000 }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    // four accumulators so the loop vectorizes
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = 4 * c;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in 4 * chunks..a.len() {
        s += a[i] * b[i];
    }
    s
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn norm(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

/// Flip each column so its largest-magnitude entry is positive. Entries
/// within a relative 1e-12 of the maximum count as ties; the lowest index
/// wins.
pub fn fix_signs(vectors: &mut DMatrix<f64>) {
    for mut col in vectors.column_iter_mut() {
        let max = col.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if max == 0.0 {
            continue;
        }
        let pivot = col.iter().position(|v| v.abs() >= max * (1.0 - 1e-12)).expect("maximum exists");
        if col[pivot] < 0.0 {
            col.neg_mut();
        }
    }
}

/// Indices of `values` sorted by decreasing magnitude; ties go to the
/// larger signed value so the order is deterministic.
fn magnitude_order(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| {
        values[b]
            .abs()
            .partial_cmp(&values[a].abs())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(values[b].partial_cmp(&values[a]).unwrap_or(std::cmp::Ordering::Equal))
    });
    idx
}

/// Top-`k` eigenpairs of a dense symmetric matrix by full decomposition.
pub fn dense_top(m: &DMatrix<f64>, k: usize) -> Result<EigenPairs> {
    let n = m.nrows();
    if k > n {
        return Err(RdpgError::DimensionTooLarge { d: k, n });
    }
    let eig = SymmetricEigen::try_new(m.clone(), f64::EPSILON, 0)
        .ok_or_else(|| RdpgError::EigSolverFailure("dense symmetric eigensolver".into()))?;
    let order = magnitude_order(eig.eigenvalues.as_slice());
    let values: Vec<f64> = order[..k].iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(n, k);
    for (c, &i) in order[..k].iter().enumerate() {
        vectors.set_column(c, &eig.eigenvectors.column(i));
    }
    fix_signs(&mut vectors);
    Ok(EigenPairs { values, vectors, matvecs: 0 })
}

/// Materialize an operator as a dense matrix (n matvecs).
pub fn densify<O: SymmetricOperator + ?Sized>(op: &O) -> DMatrix<f64> {
    let n = op.dim();
    let mut out = DMatrix::zeros(n, n);
    let mut e = vec![0.0; n];
    let mut y = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        op.apply(&e, &mut y);
        out.column_mut(j).copy_from_slice(&y);
        e[j] = 0.0;
    }
    // symmetrize away rounding noise
    let t = out.transpose();
    (out + t) * 0.5
}

struct Basis {
    n: usize,
    data: Vec<f64>,
}

impl Basis {
    fn col(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    fn len(&self) -> usize {
        self.data.len() / self.n
    }

    fn push(&mut self, v: &[f64]) {
        self.data.extend_from_slice(v);
    }

    /// Orthogonalize `w` against every column (two Gram-Schmidt passes);
    /// returns the accumulated coefficients.
    fn orthogonalize(&self, w: &mut [f64]) -> Vec<f64> {
        let m = self.len();
        let mut coeffs = vec![0.0; m];
        for _ in 0..2 {
            for (i, c) in coeffs.iter_mut().enumerate() {
                let v = self.col(i);
                let h = dot(v, w);
                axpy(-h, v, w);
                *c += h;
            }
        }
        coeffs
    }

    /// Columns `V s_j` for each column of `s` (m × k).
    fn combine(&self, s: &DMatrix<f64>) -> Vec<f64> {
        let k = s.ncols();
        let mut out = vec![0.0; self.n * k];
        for c in 0..k {
            let dst = &mut out[c * self.n..(c + 1) * self.n];
            for i in 0..s.nrows() {
                let coef = s[(i, c)];
                if coef != 0.0 {
                    axpy(coef, self.col(i), dst);
                }
            }
        }
        out
    }
}

fn random_unit_orthogonal(basis: &Basis, rng: &mut impl Rng) -> Option<Vec<f64>> {
    for _ in 0..8 {
        let mut v: Vec<f64> = (0..basis.n).map(|_| rng.random::<f64>() - 0.5).collect();
        basis.orthogonalize(&mut v);
        let nv = norm(&v);
        if nv > 1e-8 {
            v.iter_mut().for_each(|x| *x /= nv);
            return Some(v);
        }
    }
    None
}

/// `k` eigenpairs of largest magnitude by thick-restart Lanczos.
pub fn lanczos_top<O: SymmetricOperator + ?Sized>(op: &O, k: usize, opts: &LanczosOptions) -> Result<EigenPairs> {
    let n = op.dim();
    if k == 0 {
        return Ok(EigenPairs { values: vec![], vectors: DMatrix::zeros(n, 0), matvecs: 0 });
    }
    if k > n {
        return Err(RdpgError::DimensionTooLarge { d: k, n });
    }
    let max_basis = opts.max_basis.unwrap_or(3 * k + 30).max(k + 2).min(n);
    let strict = opts.strict.unwrap_or(k).min(k);
    let min_steps = (k + 8).min(n);

    let mut rng = rng_from_seed(START_SEED);
    let mut basis = Basis { n, data: Vec::with_capacity(n * (max_basis + 1)) };
    // positive start vector: overlaps the Perron vector of nonnegative matrices
    let mut start: Vec<f64> = (0..n).map(|_| 0.5 + rng.random::<f64>()).collect();
    let s0 = norm(&start);
    start.iter_mut().for_each(|x| *x /= s0);
    basis.push(&start);

    let mut h = DMatrix::<f64>::zeros(max_basis + 1, max_basis + 1);
    let mut w = vec![0.0; n];
    let mut j = 0usize;
    let mut matvecs = 0usize;
    let mut since_check = 0usize;

    loop {
        op.apply(basis.col(j), &mut w);
        matvecs += 1;
        since_check += 1;
        let coeffs = basis.orthogonalize(&mut w);
        for (i, &c) in coeffs.iter().enumerate() {
            h[(i, j)] = c;
            h[(j, i)] = c;
        }
        let m = j + 1;
        let mut beta = norm(&w);
        let scale = h.view((0, 0), (m, m)).iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-300);
        let breakdown = beta <= 1e-12 * scale;
        if breakdown {
            beta = 0.0;
        }
        let full = m == max_basis || m == n;

        if m >= min_steps && (since_check >= 4 || full || breakdown) {
            since_check = 0;
            let proj = h.view((0, 0), (m, m)).into_owned();
            let eig = SymmetricEigen::try_new(proj, f64::EPSILON, 0)
                .ok_or_else(|| RdpgError::EigSolverFailure("projected eigenproblem".into()))?;
            let order = magnitude_order(eig.eigenvalues.as_slice());
            let theta_max = eig.eigenvalues[order[0]].abs().max(1e-300);
            let residual = |c: usize| (beta * eig.eigenvectors[(m - 1, c)]).abs();
            let converged = order.len() >= k
                && order[..k].iter().enumerate().all(|(rank, &c)| {
                    let tol = if rank < strict { opts.tol } else { opts.loose_tol };
                    residual(c) <= tol * theta_max
                });
            let exhausted = matvecs >= opts.max_matvecs;
            let strict_ok = order.len() >= k && order[..strict].iter().all(|&c| residual(c) <= opts.tol * theta_max);
            if converged || m == n || (exhausted && strict_ok) {
                if exhausted && !converged {
                    log::warn!("lanczos: trailing eigenpairs not converged after {matvecs} matvecs");
                }
                let mut s = DMatrix::zeros(m, k);
                let mut values = Vec::with_capacity(k);
                for (c, &i) in order[..k].iter().enumerate() {
                    s.set_column(c, &eig.eigenvectors.column(i));
                    values.push(eig.eigenvalues[i]);
                }
                let data = basis.combine(&s);
                let mut vectors = DMatrix::from_vec(n, k, data);
                fix_signs(&mut vectors);
                return Ok(EigenPairs { values, vectors, matvecs });
            }
            if exhausted {
                return Err(RdpgError::EigSolverFailure(format!(
                    "no convergence after {matvecs} matvecs (n = {n}, k = {k})"
                )));
            }
            if full {
                // thick restart: keep the leading Ritz vectors plus the residual direction
                let keep = ((max_basis + k) / 2).max(k).min(max_basis - 1).min(m);
                let mut s = DMatrix::zeros(m, keep);
                let mut theta = Vec::with_capacity(keep);
                let mut coupling = Vec::with_capacity(keep);
                for (c, &i) in order[..keep].iter().enumerate() {
                    s.set_column(c, &eig.eigenvectors.column(i));
                    theta.push(eig.eigenvalues[i]);
                    coupling.push(beta * eig.eigenvectors[(m - 1, i)]);
                }
                let kept = basis.combine(&s);
                let next = if breakdown { None } else { Some(w.iter().map(|x| x / beta).collect::<Vec<f64>>()) };
                basis.data.clear();
                basis.data.extend_from_slice(&kept);
                h.fill(0.0);
                for (i, (&t, &b)) in theta.iter().zip(&coupling).enumerate() {
                    h[(i, i)] = t;
                    h[(keep, i)] = b;
                    h[(i, keep)] = b;
                }
                let v = match next {
                    Some(mut v) => {
                        // restore orthogonality lost in the combination
                        basis.orthogonalize(&mut v);
                        let nv = norm(&v);
                        v.iter_mut().for_each(|x| *x /= nv);
                        v
                    }
                    None => random_unit_orthogonal(&basis, &mut rng)
                        .ok_or_else(|| RdpgError::EigSolverFailure("could not extend basis after restart".into()))?,
                };
                basis.push(&v);
                j = keep;
                continue;
            }
        }

        if breakdown {
            // invariant subspace found; continue in a fresh direction
            let v = random_unit_orthogonal(&basis, &mut rng)
                .ok_or_else(|| RdpgError::EigSolverFailure("could not extend Krylov basis".into()))?;
            basis.push(&v);
        } else {
            w.iter_mut().for_each(|x| *x /= beta);
            basis.push(&w);
            h[(m, j)] = beta;
            h[(j, m)] = beta;
        }
        j += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn random_symmetric(n: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = rng_from_seed(seed);
        let m = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>() - 0.5);
        &m + m.transpose()
    }

    #[test]
    fn lanczos_matches_dense_on_random_matrices() {
        for (n, k, seed) in [(30, 3, 1u64), (80, 5, 2), (150, 2, 3), (200, 6, 4)] {
            let m = random_symmetric(n, seed);
            let dense = dense_top(&m, k).unwrap();
            let opts = LanczosOptions { max_basis: Some(40), max_matvecs: 100_000, ..Default::default() };
            let lz = lanczos_top(&m, k, &opts).unwrap();
            for i in 0..k {
                assert_abs_diff_eq!(dense.values[i], lz.values[i], epsilon = 1e-8);
                let dot = dense.vectors.column(i).dot(&lz.vectors.column(i));
                assert_abs_diff_eq!(dot.abs(), 1.0, epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn repeated_eigenvalues_are_found() {
        // K4: eigenvalues 3, -1, -1, -1
        let m = DMatrix::from_fn(4, 4, |i, j| if i == j { 0.0 } else { 1.0 });
        let lz = lanczos_top(&m, 4, &LanczosOptions::default()).unwrap();
        assert_abs_diff_eq!(lz.values[0], 3.0, epsilon = 1e-10);
        for v in &lz.values[1..] {
            assert_abs_diff_eq!(*v, -1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn sign_convention() {
        let mut v = DMatrix::from_column_slice(3, 1, &[0.1, -0.9, 0.3]);
        fix_signs(&mut v);
        assert!(v[(1, 0)] > 0.0);
        let mut tie = DMatrix::from_column_slice(2, 1, &[-0.5, 0.5]);
        fix_signs(&mut tie);
        assert!(tie[(0, 0)] > 0.0);
    }
}
