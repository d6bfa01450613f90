//! Adjacency spectral embedding and spectral diagnostics.
//!
//! Conventions used throughout:
//!
//! * singular values of a symmetric matrix are the absolute eigenvalues,
//!   so `|A|` is never formed; eigenpairs are ranked by `|λ|` and a large
//!   negative eigenvalue can enter the embedding;
//! * `δ(M)` is the largest row sum, `γ₁(M) = min_{i≤d} (σᵢ − σᵢ₊₁)/δ(M)`
//!   and `γ₂(M) = (σ_d − σ_{d+1})/δ(M)`, taken literally (for `i = d` the
//!   gap in `γ₁` is the one in `γ₂`, hence `γ₁ ≤ γ₂`);
//! * the probability matrix of latent positions `X` is `XXᵀ` with its
//!   diagonal zeroed, matching hollow adjacency matrices, except in
//!   [`probability_diagnostics`], which uses the rank-`d` matrix `XXᵀ`.
//!
//! The asymptotic constants (η, ε, c₀, n₀, n₁) have no runtime role; the
//! thresholds in [`check_assumption1`] are reporting defaults only.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::eigen::{dense_top, densify, lanczos_top, EigenPairs, LanczosOptions, SymmetricOperator};
use crate::error::{RdpgError, Result};
use crate::graph::{Graph, LatentPositions};

/// Problems at or below this size go to the dense solver.
pub const DENSE_CUTOFF: usize = 128;

/// Threshold on the smallest eigenvalue of `XᵀX` in [`noise_constant`].
pub const RANK_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralDiagnostics {
    pub delta: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    /// The first `d + 1` singular values, decreasing.
    pub sigma: Vec<f64>,
    pub n: usize,
    pub d: usize,
}

impl SpectralDiagnostics {
    /// Diagnostics from a row-sum maximum and the leading singular values.
    /// Missing trailing singular values (when `d = n`) count as zero.
    pub fn from_spectrum(delta: f64, sigma: &[f64], n: usize, d: usize) -> Result<Self> {
        if !(delta > 0.0) {
            return Err(RdpgError::ZeroMatrix);
        }
        let mut s: Vec<f64> = sigma.iter().take(d + 1).copied().collect();
        s.resize(d + 1, 0.0);
        let gap = |i: usize| (s[i] - s[i + 1]) / delta;
        let gamma1 = (0..d).map(gap).fold(f64::INFINITY, f64::min);
        let gamma2 = gap(d - 1);
        Ok(SpectralDiagnostics { delta, gamma1, gamma2, sigma: s, n, d })
    }

    /// `√(d / γ₂)`, the scale of the embedding error under the null.
    pub fn error_scale(&self) -> Result<f64> {
        if !(self.gamma2 > 0.0) {
            return Err(RdpgError::DegenerateGamma(self.gamma2));
        }
        Ok((self.d as f64 / self.gamma2).sqrt())
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("diagnostics serialize")
    }
}

/// Adjacency spectral embedding `X̂ = U S^{1/2}` with its spectrum.
#[derive(Debug, Clone)]
pub struct Embedding {
    xhat: LatentPositions,
    /// Retained eigenvalues of `|A|`, decreasing.
    spectrum: Vec<f64>,
    /// The same eigenvalues with their signs.
    eigenvalues: Vec<f64>,
    diagnostics: SpectralDiagnostics,
}

impl Embedding {
    pub fn xhat(&self) -> &LatentPositions {
        &self.xhat
    }

    pub fn positions(&self) -> &DMatrix<f64> {
        self.xhat.matrix()
    }

    pub fn spectrum(&self) -> &[f64] {
        &self.spectrum
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn diagnostics(&self) -> &SpectralDiagnostics {
        &self.diagnostics
    }

    pub fn n(&self) -> usize {
        self.xhat.n()
    }

    pub fn d(&self) -> usize {
        self.xhat.d()
    }

    /// Assemble an embedding from positions and externally computed
    /// diagnostics (e.g. positions with a known generating matrix).
    pub fn from_parts(xhat: LatentPositions, diagnostics: SpectralDiagnostics) -> Self {
        let spectrum: Vec<f64> = xhat.matrix().column_iter().map(|c| c.norm_squared()).collect();
        Embedding { eigenvalues: spectrum.clone(), xhat, spectrum, diagnostics }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Solver {
    /// Dense for small problems, Lanczos otherwise.
    Auto,
    Dense,
    Lanczos,
}

#[derive(Debug, Clone, Copy)]
pub struct EmbedOptions {
    pub solver: Solver,
    /// Residual tolerance for the `d` retained eigenpairs.
    pub tol: f64,
    /// Residual tolerance for `σ_{d+1}`, which only feeds `γ₁`/`γ₂`. It
    /// usually sits at the edge of the noise bulk where Lanczos converges
    /// slowly.
    pub tail_tol: f64,
}

impl Default for EmbedOptions {
    fn default() -> Self {
        EmbedOptions { solver: Solver::Auto, tol: 1e-10, tail_tol: 1e-6 }
    }
}

fn use_dense(solver: Solver, n: usize, k: usize) -> bool {
    match solver {
        Solver::Dense => true,
        Solver::Lanczos => false,
        Solver::Auto => n <= DENSE_CUTOFF || 4 * k >= n,
    }
}

/// Top-`k` eigenpairs by magnitude of a symmetric operator; `strict` of
/// them to `tol`, the rest to `tail_tol`.
fn top_eigenpairs<O: SymmetricOperator + ?Sized>(
    op: &O,
    k: usize,
    strict: usize,
    opts: &EmbedOptions,
    dense: impl FnOnce() -> Result<DMatrix<f64>>,
) -> Result<EigenPairs> {
    let n = op.dim();
    if use_dense(opts.solver, n, k) {
        return dense_top(&dense()?, k);
    }
    let lz = LanczosOptions {
        tol: opts.tol,
        strict: Some(strict),
        loose_tol: opts.tail_tol,
        max_basis: None,
        max_matvecs: 50 * n.max(100),
    };
    lanczos_top(op, k, &lz)
}

fn positions_from(pairs: &EigenPairs, d: usize) -> (DMatrix<f64>, Vec<f64>, Vec<f64>) {
    let n = pairs.vectors.nrows();
    let eigenvalues: Vec<f64> = pairs.values[..d].to_vec();
    let spectrum: Vec<f64> = eigenvalues.iter().map(|v| v.abs()).collect();
    let mut x = DMatrix::zeros(n, d);
    for (c, s) in spectrum.iter().enumerate() {
        x.set_column(c, &(pairs.vectors.column(c) * s.sqrt()));
    }
    (x, spectrum, eigenvalues)
}

fn check_dimension(d: usize, n: usize) -> Result<()> {
    if d == 0 {
        return Err(RdpgError::ZeroDimension);
    }
    if d > n {
        return Err(RdpgError::DimensionTooLarge { d, n });
    }
    Ok(())
}

/// Adjacency spectral embedding of `g` into `d` dimensions.
pub fn ase(g: &Graph, d: usize) -> Result<Embedding> {
    ase_with(g, d, &EmbedOptions::default())
}

pub fn ase_with(g: &Graph, d: usize, opts: &EmbedOptions) -> Result<Embedding> {
    let n = g.n();
    check_dimension(d, n)?;
    if g.edge_count() == 0 {
        return Err(RdpgError::EmptyGraph);
    }
    let k = (d + 1).min(n);
    let pairs = top_eigenpairs(g, k, d, opts, || g.to_dense())?;
    let (x, spectrum, eigenvalues) = positions_from(&pairs, d);
    let sigma: Vec<f64> = pairs.values.iter().map(|v| v.abs()).collect();
    let diagnostics = SpectralDiagnostics::from_spectrum(g.max_degree() as f64, &sigma, n, d)?;
    Ok(Embedding { xhat: LatentPositions::new(x), spectrum, eigenvalues, diagnostics })
}

/// Embedding positions only (no `σ_{d+1}`), for resampling loops where
/// diagnostics are not needed.
pub fn ase_positions(g: &Graph, d: usize, opts: &EmbedOptions) -> Result<LatentPositions> {
    let n = g.n();
    check_dimension(d, n)?;
    if g.edge_count() == 0 {
        return Err(RdpgError::EmptyGraph);
    }
    let pairs = top_eigenpairs(g, d, d, opts, || g.to_dense())?;
    Ok(LatentPositions::new(positions_from(&pairs, d).0))
}

/// Spectral embedding of an arbitrary symmetric matrix (e.g. a
/// probability matrix), with diagnostics of that matrix.
pub fn ase_matrix(m: &DMatrix<f64>, d: usize) -> Result<Embedding> {
    let n = check_square(m)?;
    check_dimension(d, n)?;
    let delta = max_row_sum(m);
    if delta == 0.0 {
        return Err(RdpgError::ZeroMatrix);
    }
    let k = (d + 1).min(n);
    let opts = EmbedOptions { tail_tol: 1e-10, ..Default::default() };
    let pairs = top_eigenpairs(m, k, k, &opts, || Ok(m.clone()))?;
    let (x, spectrum, eigenvalues) = positions_from(&pairs, d);
    let sigma: Vec<f64> = pairs.values.iter().map(|v| v.abs()).collect();
    let diagnostics = SpectralDiagnostics::from_spectrum(delta, &sigma, n, d)?;
    Ok(Embedding { xhat: LatentPositions::new(x), spectrum, eigenvalues, diagnostics })
}

fn check_square(m: &DMatrix<f64>) -> Result<usize> {
    if m.nrows() != m.ncols() {
        return Err(RdpgError::ShapeMismatch { left: m.shape(), right: (m.ncols(), m.nrows()) });
    }
    Ok(m.nrows())
}

fn max_row_sum(m: &DMatrix<f64>) -> f64 {
    // symmetric: column sums equal row sums and are contiguous
    m.column_iter().map(|c| c.sum()).fold(0.0, f64::max)
}

/// `δ`, `γ₁`, `γ₂` and the first `d + 1` singular values of a symmetric
/// nonnegative matrix.
pub fn diagnostics(m: &DMatrix<f64>, d: usize) -> Result<SpectralDiagnostics> {
    let n = check_square(m)?;
    check_dimension(d, n)?;
    let delta = max_row_sum(m);
    if delta == 0.0 {
        return Err(RdpgError::ZeroMatrix);
    }
    let k = (d + 1).min(n);
    let opts = EmbedOptions { tail_tol: 1e-10, ..Default::default() };
    let pairs = top_eigenpairs(m, k, k, &opts, || Ok(m.clone()))?;
    let sigma: Vec<f64> = pairs.values.iter().map(|v| v.abs()).collect();
    SpectralDiagnostics::from_spectrum(delta, &sigma, n, d)
}

/// Diagnostics of the rank-`d` matrix `P = XXᵀ`, diagonal included, so
/// that `σ_{d+1}(P) = 0` and `γ₂(P) = σ_d(P)/δ(P)`.
pub fn probability_diagnostics(x: &LatentPositions, d: usize) -> Result<SpectralDiagnostics> {
    diagnostics(&x.gram(), d)
}

/// The noise constant `C(X) = √(tr S^{-1/2} Uᵀ D U S^{-1/2})`, where
/// `U S Uᵀ` is the rank-`d` eigendecomposition of `XXᵀ` and
/// `D_ii = Σ_{k≠i} P_ik (1 − P_ik)`. Evaluated through the equivalent
/// `d × d` form `tr(XᵀDX (XᵀX)⁻²)`. Inner products are clipped to [0, 1]
/// first, since estimated positions can leave the interval.
pub fn noise_constant(x: &LatentPositions) -> Result<f64> {
    let n = x.n();
    let d = x.d();
    let xm = x.matrix();
    let gram = xm.transpose() * xm;
    let eig = SymmetricEigen::new(gram);
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if d == 0 || !(min > RANK_TOLERANCE) {
        return Err(RdpgError::RankDeficient { value: min, threshold: RANK_TOLERANCE });
    }

    let rows = x.row_major();
    let mut variance = vec![0.0; n];
    for i in 0..n {
        let xi = &rows[i * d..(i + 1) * d];
        for j in i + 1..n {
            let xj = &rows[j * d..(j + 1) * d];
            let p: f64 = xi.iter().zip(xj).map(|(a, b)| a * b).sum::<f64>().clamp(0.0, 1.0);
            let v = p * (1.0 - p);
            variance[i] += v;
            variance[j] += v;
        }
    }
    let mut weighted = DMatrix::<f64>::zeros(d, d);
    for i in 0..n {
        let xi = &rows[i * d..(i + 1) * d];
        for a in 0..d {
            for b in 0..d {
                weighted[(a, b)] += variance[i] * xi[a] * xi[b];
            }
        }
    }
    let v = &eig.eigenvectors;
    let inv_sq = v * DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / (l * l))) * v.transpose();
    let c2 = (weighted * inv_sq).trace();
    Ok(c2.max(0.0).sqrt())
}

/// Profile-likelihood elbow of a scree sequence: the split `q` that
/// maximizes the likelihood of two Gaussian groups (first `q` values,
/// the rest) with separate means and a pooled variance. Searches
/// `q ∈ 1..=min(max_d, len − 1)`; ties go to the smaller `q`.
pub fn dimension_select(spectrum: &[f64], max_d: usize) -> usize {
    let p = spectrum.len();
    if p < 2 {
        return 1;
    }
    let upper = max_d.clamp(1, p - 1);
    let mut best = (1, f64::NEG_INFINITY);
    for q in 1..=upper {
        let ll = profile_log_likelihood(spectrum, q);
        if ll > best.1 {
            best = (q, ll);
        }
    }
    best.0
}

fn profile_log_likelihood(x: &[f64], q: usize) -> f64 {
    let p = x.len() as f64;
    let (a, b) = x.split_at(q);
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    let (ma, mb) = (mean(a), mean(b));
    let ss: f64 = a.iter().map(|v| (v - ma).powi(2)).sum::<f64>() + b.iter().map(|v| (v - mb).powi(2)).sum::<f64>();
    let var = (ss / p).max(f64::MIN_POSITIVE);
    -0.5 * p * (2.0 * std::f64::consts::PI * var).ln() - ss / (2.0 * var)
}

/// Outcome of the eigengap and density conditions, with raw margins.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Assumption1Report {
    pub gamma1: f64,
    pub gamma1_floor: f64,
    pub gamma1_ok: bool,
    pub delta: f64,
    pub delta_threshold: f64,
    pub delta_ok: bool,
    pub gamma1_margin: f64,
    pub delta_margin: f64,
}

impl Assumption1Report {
    pub fn holds(&self) -> bool {
        self.gamma1_ok && self.delta_ok
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Assumption1Thresholds {
    pub gamma1_floor: f64,
    pub epsilon: f64,
}

impl Default for Assumption1Thresholds {
    fn default() -> Self {
        Assumption1Thresholds { gamma1_floor: 0.01, epsilon: 0.01 }
    }
}

/// Check `γ₁ > floor` and `δ > (ln n)^{2+ε}`.
pub fn check_assumption1(diag: &SpectralDiagnostics, n: usize, t: Assumption1Thresholds) -> Assumption1Report {
    let delta_threshold = (n.max(1) as f64).ln().powf(2.0 + t.epsilon);
    Assumption1Report {
        gamma1: diag.gamma1,
        gamma1_floor: t.gamma1_floor,
        gamma1_ok: diag.gamma1 > t.gamma1_floor,
        delta: diag.delta,
        delta_threshold,
        delta_ok: diag.delta > delta_threshold,
        gamma1_margin: diag.gamma1 - t.gamma1_floor,
        delta_margin: diag.delta - delta_threshold,
    }
}

/// Assumption report for a graph: the empty graph fails the density
/// condition rather than erroring.
pub fn check_graph_assumption1(g: &Graph, d: usize, t: Assumption1Thresholds) -> Result<Assumption1Report> {
    if g.edge_count() == 0 {
        let diag = SpectralDiagnostics { delta: 0.0, gamma1: 0.0, gamma2: 0.0, sigma: vec![0.0; d + 1], n: g.n(), d };
        return Ok(check_assumption1(&diag, g.n(), t));
    }
    Ok(check_assumption1(ase(g, d)?.diagnostics(), g.n(), t))
}

/// Dense densification of a graph operator, exposed for tests.
pub fn adjacency_matrix(g: &Graph) -> Result<DMatrix<f64>> {
    if g.n() <= crate::graph::DENSE_LIMIT {
        g.to_dense()
    } else {
        Ok(densify(g))
    }
}
