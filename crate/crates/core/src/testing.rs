//! Two-sample test statistics, theoretical rejection, the parametric
//! bootstrap, the subgraph bootstrap with Fisher's combination, and the
//! Frobenius baseline.
//!
//! For embeddings `X̂`, `Ŷ` of two graphs on a shared vertex set:
//!
//! | kind       | numerator                              | per-graph denominator term |
//! |------------|----------------------------------------|----------------------------|
//! | `Identity` | `min_W ‖X̂W − Ŷ‖_F`                     | `√(d/γ₂)`                  |
//! | `Scaling`  | `min_W ‖X̂W/‖X̂‖_F − Ŷ/‖Ŷ‖_F‖_F`         | `2√(d/γ₂)/‖X̂‖_F`           |
//! | `Diagonal` | `min_W ‖𝒫(X̂)W − 𝒫(Ŷ)‖_F`               | `2√(d/γ₂)·‖𝒟⁻¹(X̂)‖₂`       |
//!
//! where `𝒫` projects rows onto the unit sphere and `‖𝒟⁻¹(X̂)‖₂` is the
//! reciprocal of the smallest row norm. The statistic is the numerator over
//! the sum of the two denominator terms.

use std::time::Instant;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alignment::{frobenius_normalize, procrustes_distance, sphere_project};
use crate::error::{RdpgError, Result};
use crate::graph::{EdgeSampler, Graph, LatentPositions};
use crate::rng::{derive_seed, rng_from_seed};
use crate::spectral::{ase_positions, ase_with, noise_constant, EmbedOptions, Embedding};

/// Version of the [`TestResult`] JSON layout.
pub const SCHEMA_VERSION: u32 = 1;

/// Default theoretical threshold: the smallest valid `C > 1`, up to rounding.
pub const DEFAULT_THRESHOLD: f64 = 1.0 + 1e-9;

/// `σ_{d+1}` tolerance inside bootstrap replicates.
pub const BOOTSTRAP_TAIL_TOL: f64 = 1e-4;

const PARTITION_STREAM: u64 = 0x5eed_b10c;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TestKind {
    /// `X = YW` for some orthogonal `W`.
    Identity,
    /// `X = cYW` for some `c > 0`.
    Scaling,
    /// `X = DYW` for some positive diagonal `D`.
    Diagonal,
}

impl TestKind {
    pub const ALL: [TestKind; 3] = [TestKind::Identity, TestKind::Scaling, TestKind::Diagonal];

    pub fn name(self) -> &'static str {
        match self {
            TestKind::Identity => "identity",
            TestKind::Scaling => "scaling",
            TestKind::Diagonal => "diagonal",
        }
    }
}

impl std::str::FromStr for TestKind {
    type Err = RdpgError;

    fn from_str(s: &str) -> Result<Self> {
        TestKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| RdpgError::InvalidConfig(format!("unknown test kind {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Theoretical,
    Bootstrap,
    Subgraph,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Theoretical, Method::Bootstrap, Method::Subgraph];

    pub fn name(self) -> &'static str {
        match self {
            Method::Theoretical => "theoretical",
            Method::Bootstrap => "bootstrap",
            Method::Subgraph => "subgraph",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = RdpgError;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| RdpgError::InvalidConfig(format!("unknown method {s:?}")))
    }
}

/// Per-graph error scale in the denominator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorScale {
    /// `√(d/γ₂)` of the graph's adjacency matrix.
    #[default]
    Eigengap,
    /// The noise constant `C(X̂)` of the estimated positions.
    NoiseConstant,
}

/// A statistic before any decision is attached.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Statistic {
    pub kind: TestKind,
    pub numerator: f64,
    pub denominator: f64,
    pub value: f64,
}

impl Statistic {
    fn new(kind: TestKind, numerator: f64, denominator: f64) -> Self {
        Statistic { kind, numerator, denominator, value: numerator / denominator }
    }
}

fn check_pair(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<()> {
    if a.nrows() != b.nrows() {
        return Err(RdpgError::SizeMismatch(a.nrows(), b.nrows()));
    }
    if a.ncols() != b.ncols() {
        return Err(RdpgError::DimensionMismatch(a.ncols(), b.ncols()));
    }
    Ok(())
}

/// Statistic from positions and their per-graph error scales.
pub fn statistic_from_positions(
    kind: TestKind,
    xa: &DMatrix<f64>,
    scale_a: f64,
    xb: &DMatrix<f64>,
    scale_b: f64,
) -> Result<Statistic> {
    check_pair(xa, xb)?;
    Ok(match kind {
        TestKind::Identity => Statistic::new(kind, procrustes_distance(xa, xb)?, scale_a + scale_b),
        TestKind::Scaling => {
            let num = procrustes_distance(&frobenius_normalize(xa)?, &frobenius_normalize(xb)?)?;
            Statistic::new(kind, num, 2.0 * scale_a / xa.norm() + 2.0 * scale_b / xb.norm())
        }
        TestKind::Diagonal => {
            let pa = sphere_project(xa)?;
            let pb = sphere_project(xb)?;
            let num = procrustes_distance(&pa.projected, &pb.projected)?;
            let den = 2.0 * scale_a * pa.inverse_norm_bound() + 2.0 * scale_b * pb.inverse_norm_bound();
            Statistic::new(kind, num, den)
        }
    })
}

fn error_scale(emb: &Embedding, scale: ErrorScale) -> Result<f64> {
    match scale {
        ErrorScale::Eigengap => emb.diagnostics().error_scale(),
        ErrorScale::NoiseConstant => noise_constant(emb.xhat()),
    }
}

pub fn statistic_with(kind: TestKind, a: &Embedding, b: &Embedding, scale: ErrorScale) -> Result<Statistic> {
    check_pair(a.positions(), b.positions())?;
    statistic_from_positions(kind, a.positions(), error_scale(a, scale)?, b.positions(), error_scale(b, scale)?)
}

pub fn statistic_identity(a: &Embedding, b: &Embedding) -> Result<Statistic> {
    statistic_with(TestKind::Identity, a, b, ErrorScale::Eigengap)
}

pub fn statistic_scaling(a: &Embedding, b: &Embedding) -> Result<Statistic> {
    statistic_with(TestKind::Scaling, a, b, ErrorScale::Eigengap)
}

pub fn statistic_diagonal(a: &Embedding, b: &Embedding) -> Result<Statistic> {
    statistic_with(TestKind::Diagonal, a, b, ErrorScale::Eigengap)
}

/// Reject when `statistic ≥ c`; any `c > 1` gives an asymptotically valid test.
pub fn theoretical_decision(stat: &Statistic, c: f64) -> Result<bool> {
    if !(c > 1.0) {
        return Err(RdpgError::InvalidThreshold(c));
    }
    Ok(stat.value >= c)
}

/// Continuity-corrected bootstrap p-value `(#{T_b ≥ T} + ½)/bs`, capped at 1.
pub fn continuity_pvalue(replicates: &[f64], observed: f64) -> f64 {
    let count = replicates.iter().filter(|&&t| t >= observed).count();
    ((count as f64 + 0.5) / replicates.len() as f64).min(1.0)
}

/// Settings for [`bootstrap_pvalue`].
#[derive(Debug, Clone, Copy)]
pub struct BootstrapSpec {
    pub kind: TestKind,
    pub d: usize,
    pub bs: usize,
    pub scale: ErrorScale,
    pub embed: EmbedOptions,
}

impl BootstrapSpec {
    pub fn new(kind: TestKind, d: usize, bs: usize) -> Self {
        BootstrapSpec {
            kind,
            d,
            bs,
            scale: ErrorScale::Eigengap,
            embed: EmbedOptions { tail_tol: BOOTSTRAP_TAIL_TOL, ..Default::default() },
        }
    }
}

#[derive(Debug, Clone)]
pub struct BootstrapOutcome {
    pub p_value: f64,
    pub replicates: Vec<f64>,
}

/// One resampled statistic: the raw Procrustes distance for `Identity`,
/// the full normalized statistic otherwise.
fn replicate_statistic(sampler: &EdgeSampler, spec: &BootstrapSpec, seed: u64) -> Result<f64> {
    let ga = sampler.sample(derive_seed(seed, 0));
    let gb = sampler.sample(derive_seed(seed, 1));
    match spec.kind {
        TestKind::Identity => {
            let xa = ase_positions(&ga, spec.d, &spec.embed)?;
            let xb = ase_positions(&gb, spec.d, &spec.embed)?;
            procrustes_distance(xa.matrix(), xb.matrix())
        }
        kind => {
            let ea = ase_with(&ga, spec.d, &spec.embed)?;
            let eb = ase_with(&gb, spec.d, &spec.embed)?;
            Ok(statistic_with(kind, &ea, &eb, spec.scale)?.value)
        }
    }
}

/// Parametric bootstrap p-value of `observed` under `RDPG(X̂)`.
///
/// Each replicate draws two independent graphs from `X̂X̂ᵀ` clipped to
/// `[0, 1]`, embeds both and recomputes the statistic. Replicate `b` uses
/// the seed `derive_seed(seed, b)`, so the result does not depend on the
/// number of worker threads.
pub fn bootstrap_pvalue(
    xhat: &LatentPositions,
    observed: f64,
    spec: &BootstrapSpec,
    seed: u64,
) -> Result<BootstrapOutcome> {
    if spec.bs == 0 {
        return Err(RdpgError::InvalidConfig("bootstrap needs at least one replicate".into()));
    }
    let sampler = EdgeSampler::clipped(xhat);
    let replicates = (0..spec.bs as u64)
        .into_par_iter()
        .map(|b| {
            replicate_statistic(&sampler, spec, derive_seed(seed, b))
                .map_err(|e| e.context(format!("bootstrap replicate {b}")))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(BootstrapOutcome { p_value: continuity_pvalue(&replicates, observed), replicates })
}

/// Options shared by [`two_sample_test`] and [`subgraph_bootstrap`].
#[derive(Debug, Clone, Copy)]
pub struct TestConfig {
    pub method: Method,
    pub bs: usize,
    /// Number of vertex blocks for the subgraph bootstrap.
    pub blocks: usize,
    pub alpha: f64,
    pub threshold: f64,
    pub seed: u64,
    pub scale: ErrorScale,
    pub embed: EmbedOptions,
    /// Keep bootstrap statistics in the result.
    pub keep_replicates: bool,
}

impl Default for TestConfig {
    fn default() -> Self {
        TestConfig {
            method: Method::Theoretical,
            bs: 200,
            blocks: 8,
            alpha: 0.05,
            threshold: DEFAULT_THRESHOLD,
            seed: 0,
            scale: ErrorScale::Eigengap,
            embed: EmbedOptions::default(),
            keep_replicates: false,
        }
    }
}

impl TestConfig {
    fn bootstrap_spec(&self, kind: TestKind, d: usize) -> BootstrapSpec {
        BootstrapSpec { scale: self.scale, ..BootstrapSpec::new(kind, d, self.bs) }
    }

    fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(RdpgError::InvalidConfig(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if self.method != Method::Theoretical && self.bs == 0 {
            return Err(RdpgError::InvalidConfig("bs must be at least 1".into()));
        }
        if self.method == Method::Subgraph && self.blocks == 0 {
            return Err(RdpgError::InvalidConfig("blocks must be at least 1".into()));
        }
        Ok(())
    }
}

/// Outcome of a two-sample test.
///
/// For the bootstrap with `kind = Identity`, the p-value compares the raw
/// numerator against resampled raw distances; `statistic` still reports the
/// normalized value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub schema_version: u32,
    pub kind: TestKind,
    pub statistic: f64,
    pub numerator: f64,
    pub denominator: f64,
    pub p_value: Option<f64>,
    pub method: Method,
    pub rejected: Option<bool>,
    pub d: usize,
    pub bs: Option<usize>,
    #[serde(rename = "R")]
    pub r: Option<usize>,
    pub seed: Option<u64>,
    pub threshold: Option<f64>,
    pub alpha: Option<f64>,
    pub scale: ErrorScale,
    /// p-values of the two resampling sides, `[from X̂, from Ŷ]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub side_p_values: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replicates: Option<[Vec<f64>; 2]>,
    pub elapsed_ms: f64,
}

impl TestResult {
    fn base(stat: &Statistic, method: Method, d: usize, scale: ErrorScale) -> Self {
        TestResult {
            schema_version: SCHEMA_VERSION,
            kind: stat.kind,
            statistic: stat.value,
            numerator: stat.numerator,
            denominator: stat.denominator,
            p_value: None,
            method,
            rejected: None,
            d,
            bs: None,
            r: None,
            seed: None,
            threshold: None,
            alpha: None,
            scale,
            side_p_values: None,
            replicates: None,
            elapsed_ms: 0.0,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("test result serializes")
    }
}

fn embed_pair(ga: &Graph, gb: &Graph, d: usize, opts: &EmbedOptions) -> Result<(Embedding, Embedding)> {
    if ga.n() != gb.n() {
        return Err(RdpgError::SizeMismatch(ga.n(), gb.n()));
    }
    let a = ase_with(ga, d, opts).map_err(|e| e.context("embedding graph A"))?;
    let b = ase_with(gb, d, opts).map_err(|e| e.context("embedding graph B"))?;
    Ok((a, b))
}

/// Theoretical decision attached to a statistic.
pub fn theoretical_result(stat: &Statistic, d: usize, scale: ErrorScale, threshold: f64) -> Result<TestResult> {
    let rejected = theoretical_decision(stat, threshold)?;
    Ok(TestResult {
        rejected: Some(rejected),
        threshold: Some(threshold),
        ..TestResult::base(stat, Method::Theoretical, d, scale)
    })
}

/// Both sides of the parametric bootstrap on a pair of embeddings.
pub fn bootstrap_result(stat: &Statistic, a: &Embedding, b: &Embedding, cfg: &TestConfig) -> Result<TestResult> {
    let d = a.d();
    let spec = cfg.bootstrap_spec(stat.kind, d);
    let observed = match stat.kind {
        TestKind::Identity => stat.numerator,
        _ => stat.value,
    };
    let pa = bootstrap_pvalue(a.xhat(), observed, &spec, derive_seed(cfg.seed, 0))
        .map_err(|e| e.context("bootstrap from graph A"))?;
    let pb = bootstrap_pvalue(b.xhat(), observed, &spec, derive_seed(cfg.seed, 1))
        .map_err(|e| e.context("bootstrap from graph B"))?;
    let p = pa.p_value.max(pb.p_value);
    Ok(TestResult {
        p_value: Some(p),
        rejected: Some(p < cfg.alpha),
        bs: Some(cfg.bs),
        seed: Some(cfg.seed),
        alpha: Some(cfg.alpha),
        side_p_values: Some([pa.p_value, pb.p_value]),
        replicates: cfg.keep_replicates.then_some([pa.replicates, pb.replicates]),
        ..TestResult::base(stat, Method::Bootstrap, d, cfg.scale)
    })
}

/// Embed both graphs at dimension `d` and run the configured test.
pub fn two_sample_test(ga: &Graph, gb: &Graph, kind: TestKind, d: usize, cfg: &TestConfig) -> Result<TestResult> {
    cfg.validate()?;
    let start = Instant::now();
    let mut result = match cfg.method {
        Method::Subgraph => {
            if kind != TestKind::Identity {
                return Err(RdpgError::InvalidConfig("the subgraph bootstrap supports only the identity test".into()));
            }
            subgraph_bootstrap(ga, gb, d, cfg)?
        }
        method => {
            let (a, b) = embed_pair(ga, gb, d, &cfg.embed)?;
            let stat = statistic_with(kind, &a, &b, cfg.scale)?;
            if method == Method::Theoretical {
                theoretical_result(&stat, d, cfg.scale, cfg.threshold)?
            } else {
                bootstrap_result(&stat, &a, &b, cfg)?
            }
        }
    };
    result.elapsed_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(result)
}

/// Seeded uniform shuffle of `0..n` cut into `r` contiguous blocks whose
/// sizes differ by at most one.
pub fn partition_vertices(n: usize, r: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_from_seed(seed));
    let (base, extra) = (n / r, n % r);
    let mut blocks = Vec::with_capacity(r);
    let mut start = 0;
    for k in 0..r {
        let len = base + usize::from(k < extra);
        blocks.push(order[start..start + len].to_vec());
        start += len;
    }
    blocks
}

/// Fisher's combination `S = 2 Σ log(1/pᵢ)` and its `χ²_{2k}` upper-tail p-value.
pub fn fisher_combine(p_values: &[f64]) -> (f64, f64) {
    let s: f64 = p_values.iter().map(|p| -2.0 * p.ln()).sum();
    (s, chi2_upper_tail(s, 2 * p_values.len() as u32))
}

/// Subgraph bootstrap for the identity hypothesis.
///
/// Both graphs are embedded once. The vertices are split into
/// `cfg.blocks` random disjoint blocks; on each block the raw Procrustes
/// distance between the restricted embeddings is referred to a parametric
/// bootstrap from each side's restricted positions, and the per-block
/// p-values of each side are merged with Fisher's method. The reported
/// p-value is the larger of the two sides.
pub fn subgraph_bootstrap(ga: &Graph, gb: &Graph, d: usize, cfg: &TestConfig) -> Result<TestResult> {
    cfg.validate()?;
    let start = Instant::now();
    let n = ga.n();
    let r = cfg.blocks;
    if r == 0 {
        return Err(RdpgError::InvalidConfig("blocks must be at least 1".into()));
    }
    if n / r < d + 2 {
        return Err(RdpgError::BlockTooSmall { size: n / r, d });
    }
    let (a, b) = embed_pair(ga, gb, d, &cfg.embed)?;
    let stat = statistic_identity(&a, &b)?;
    let blocks = partition_vertices(n, r, derive_seed(cfg.seed, PARTITION_STREAM));
    let spec = BootstrapSpec::new(TestKind::Identity, d, cfg.bs);

    let mut side_p = [Vec::with_capacity(r), Vec::with_capacity(r)];
    let mut replicates = [Vec::new(), Vec::new()];
    for (k, block) in blocks.iter().enumerate() {
        let xa = a.xhat().select_rows(block);
        let xb = b.xhat().select_rows(block);
        let observed = procrustes_distance(xa.matrix(), xb.matrix())?;
        for (side, x) in [&xa, &xb].into_iter().enumerate() {
            let seed = derive_seed(derive_seed(cfg.seed, side as u64), k as u64);
            let out =
                bootstrap_pvalue(x, observed, &spec, seed).map_err(|e| e.context(format!("block {k}, side {side}")))?;
            side_p[side].push(out.p_value);
            if cfg.keep_replicates {
                replicates[side].extend(out.replicates);
            }
        }
    }
    let combined = [fisher_combine(&side_p[0]).1, fisher_combine(&side_p[1]).1];
    let p = combined[0].max(combined[1]);
    Ok(TestResult {
        p_value: Some(p),
        rejected: Some(p < cfg.alpha),
        bs: Some(cfg.bs),
        r: Some(r),
        seed: Some(cfg.seed),
        alpha: Some(cfg.alpha),
        side_p_values: Some(combined),
        replicates: cfg.keep_replicates.then_some(replicates),
        elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
        ..TestResult::base(&stat, Method::Subgraph, d, ErrorScale::Eigengap)
    })
}

/// `‖A − B‖_F = √(2 · #{i < j : Aᵢⱼ ≠ Bᵢⱼ})`.
///
/// Kept as a naive comparison point only: it is not consistent against
/// alternatives whose probability matrices have the same entrywise variance.
pub fn baseline_frobenius(ga: &Graph, gb: &Graph) -> Result<f64> {
    if ga.n() != gb.n() {
        return Err(RdpgError::SizeMismatch(ga.n(), gb.n()));
    }
    let mut differing = 0usize;
    for i in 0..ga.n() {
        let (x, y) = (ga.upper_neighbors(i), gb.upper_neighbors(i));
        let (mut p, mut q) = (0, 0);
        let mut common = 0;
        while p < x.len() && q < y.len() {
            match x[p].cmp(&y[q]) {
                std::cmp::Ordering::Less => p += 1,
                std::cmp::Ordering::Greater => q += 1,
                std::cmp::Ordering::Equal => {
                    common += 1;
                    p += 1;
                    q += 1;
                }
            }
        }
        differing += x.len() + y.len() - 2 * common;
    }
    Ok((2.0 * differing as f64).sqrt())
}

/// `P(χ²_df ≥ x)` for even `df`, via `Q(k, y) = e^{−y} Σ_{i<k} yⁱ/i!`
/// with `k = df/2`, `y = x/2`. Terms are summed in log space so large
/// `df` does not underflow.
///
/// # Panics
///
/// If `df` is zero or odd.
pub fn chi2_upper_tail(x: f64, df: u32) -> f64 {
    assert!(df > 0 && df.is_multiple_of(2), "chi2_upper_tail needs a positive even df, got {df}");
    if x.is_nan() {
        return f64::NAN;
    }
    if x <= 0.0 {
        return 1.0;
    }
    if x.is_infinite() {
        return 0.0;
    }
    let y = x / 2.0;
    let k = df / 2;
    let ln_y = y.ln();
    if y < k as f64 {
        // near 1: sum the Poisson lower tail P(N >= k) instead
        let mut log_term = -y + k as f64 * ln_y - ln_gamma_int(k + 1);
        let mut logs = vec![log_term];
        let mut i = k + 1;
        loop {
            log_term += ln_y - (i as f64).ln();
            logs.push(log_term);
            if log_term < logs[0] - 40.0 {
                break;
            }
            i += 1;
        }
        return (1.0 - log_sum_exp(&logs).exp()).clamp(0.0, 1.0);
    }
    let mut log_terms = Vec::with_capacity(k as usize);
    let mut log_term = -y;
    for i in 0..k {
        if i > 0 {
            log_term += ln_y - (i as f64).ln();
        }
        log_terms.push(log_term);
    }
    log_sum_exp(&log_terms).exp().min(1.0)
}

fn ln_gamma_int(m: u32) -> f64 {
    (2..m).map(|i| (i as f64).ln()).sum()
}

fn log_sum_exp(logs: &[f64]) -> f64 {
    let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    max + logs.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::SpectralDiagnostics;
    use approx::assert_abs_diff_eq;

    fn embedding(rows: &[f64], d: usize, gamma2: f64) -> Embedding {
        let n = rows.len() / d;
        let diag = SpectralDiagnostics { delta: 1.0, gamma1: gamma2, gamma2, sigma: vec![0.0; d + 1], n, d };
        Embedding::from_parts(LatentPositions::from_row_slice(n, d, rows), diag)
    }

    const ROWS: [f64; 8] = [0.6, 0.2, 0.5, -0.1, 0.3, 0.4, 0.7, 0.05];

    #[test]
    fn identical_embeddings_give_zero() {
        let e = embedding(&ROWS, 2, 0.5);
        for kind in TestKind::ALL {
            let s = statistic_with(kind, &e, &e, ErrorScale::Eigengap).unwrap();
            assert!(s.numerator < 1e-12, "{kind:?}");
            assert_eq!(s.value, s.numerator / s.denominator);
        }
    }

    #[test]
    fn identity_denominator() {
        let e = embedding(&ROWS, 2, 0.5);
        let s = statistic_identity(&e, &e).unwrap();
        assert_abs_diff_eq!(s.denominator, 2.0 * 2.0, epsilon = 1e-12);
    }

    #[test]
    fn scaling_ignores_scale() {
        let a = embedding(&ROWS, 2, 0.5);
        let scaled: Vec<f64> = ROWS.iter().map(|v| 3.7 * v).collect();
        let b = embedding(&scaled, 2, 0.5);
        let s = statistic_scaling(&a, &b).unwrap();
        assert!(s.numerator < 1e-12);
        let norm = LatentPositions::from_row_slice(4, 2, &ROWS).matrix().norm();
        assert_abs_diff_eq!(s.denominator, 4.0 / norm + 4.0 / (3.7 * norm), epsilon = 1e-12);
    }

    #[test]
    fn diagonal_ignores_row_scaling() {
        let a = embedding(&ROWS, 2, 0.5);
        let factors = [0.5, 2.0, 1.3, 0.9];
        let rows: Vec<f64> = ROWS.iter().enumerate().map(|(k, v)| v * factors[k / 2]).collect();
        let b = embedding(&rows, 2, 0.5);
        let s = statistic_diagonal(&a, &b).unwrap();
        assert!(s.numerator < 1e-12);
    }

    #[test]
    fn diagonal_rejects_zero_rows() {
        let mut rows = ROWS;
        rows[4] = 0.0;
        rows[5] = 0.0;
        let a = embedding(&rows, 2, 0.5);
        let b = embedding(&ROWS, 2, 0.5);
        assert!(matches!(statistic_diagonal(&a, &b), Err(RdpgError::ZeroRow(2))));
    }

    #[test]
    fn degenerate_gap() {
        let a = embedding(&ROWS, 2, 0.0);
        let b = embedding(&ROWS, 2, 0.5);
        assert!(matches!(statistic_identity(&a, &b), Err(RdpgError::DegenerateGamma(_))));
    }

    #[test]
    fn mismatched_shapes() {
        let a = embedding(&ROWS, 2, 0.5);
        let b = embedding(&ROWS[..6], 2, 0.5);
        assert!(matches!(statistic_identity(&a, &b), Err(RdpgError::SizeMismatch(4, 3))));
        let c = embedding(&ROWS, 1, 0.5);
        let d = embedding(&ROWS[..4], 1, 0.5);
        assert!(matches!(statistic_identity(&c, &d), Err(RdpgError::SizeMismatch(8, 4))));
        let e = embedding(&ROWS, 4, 0.5);
        let f = embedding(&ROWS[..4], 2, 0.5);
        assert!(matches!(statistic_identity(&e, &f), Err(RdpgError::DimensionMismatch(4, 2))));
    }

    #[test]
    fn threshold_decisions() {
        let s = |v: f64| Statistic::new(TestKind::Identity, v, 1.0);
        assert!(!theoretical_decision(&s(0.5), DEFAULT_THRESHOLD).unwrap());
        assert!(theoretical_decision(&s(1.465), DEFAULT_THRESHOLD).unwrap());
        assert!(theoretical_decision(&s(1.5), 1.5).unwrap());
        assert!(matches!(theoretical_decision(&s(2.0), 1.0), Err(RdpgError::InvalidThreshold(_))));
        assert!(matches!(theoretical_decision(&s(2.0), f64::NAN), Err(RdpgError::InvalidThreshold(_))));
    }

    #[test]
    fn continuity_correction() {
        let reps = [0.1, 0.2, 0.3, 0.4];
        assert_eq!(continuity_pvalue(&reps, 0.0), 1.0);
        assert_eq!(continuity_pvalue(&reps, f64::INFINITY), 0.5 / 4.0);
        assert_eq!(continuity_pvalue(&reps, 0.25), 2.5 / 4.0);
        assert_eq!(continuity_pvalue(&reps, 0.3), 2.5 / 4.0);
    }

    #[test]
    fn chi2_closed_forms() {
        assert_abs_diff_eq!(chi2_upper_tail(4.60517, 2), 0.1, epsilon = 1e-6);
        assert_abs_diff_eq!(chi2_upper_tail(3.0, 2), (-1.5f64).exp(), epsilon = 1e-15);
        assert_eq!(chi2_upper_tail(0.0, 8), 1.0);
        assert_eq!(chi2_upper_tail(f64::INFINITY, 8), 0.0);
        // df = 4: e^{-y}(1 + y)
        assert_abs_diff_eq!(chi2_upper_tail(10.0, 4), (-5.0f64).exp() * 6.0, epsilon = 1e-15);
        // large df stays finite and near one half around the mean
        let mid = chi2_upper_tail(2000.0, 2000);
        assert!(mid > 0.49 && mid < 0.51, "{mid}");
    }

    #[test]
    fn fisher_single_block_is_identity() {
        for p in [0.001, 0.05, 0.3, 1.0] {
            let (_, combined) = fisher_combine(&[p]);
            assert_abs_diff_eq!(combined, p, epsilon = 1e-14);
        }
        let (s, combined) = fisher_combine(&[1.0; 5]);
        assert_eq!(s, 0.0);
        assert_eq!(combined, 1.0);
    }

    #[test]
    fn partition_is_balanced_and_disjoint() {
        let blocks = partition_vertices(103, 8, 11);
        let sizes: Vec<usize> = blocks.iter().map(Vec::len).collect();
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        let mut all: Vec<usize> = blocks.concat();
        all.sort_unstable();
        assert_eq!(all, (0..103).collect::<Vec<_>>());
        assert_eq!(partition_vertices(103, 8, 11), blocks);
    }

    #[test]
    fn frobenius_counts() {
        let (a, _) = Graph::from_edges(4, [(0, 1), (2, 3)]).unwrap();
        assert_eq!(baseline_frobenius(&a, &a).unwrap(), 0.0);
        let (full, _) = Graph::from_edges(4, [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]).unwrap();
        let empty = Graph::empty(4);
        assert_abs_diff_eq!(baseline_frobenius(&full, &empty).unwrap(), 12f64.sqrt(), epsilon = 1e-15);
        let (b, _) = Graph::from_edges(4, [(0, 1), (1, 2)]).unwrap();
        assert_abs_diff_eq!(baseline_frobenius(&a, &b).unwrap(), 2.0, epsilon = 1e-15);
    }

    #[test]
    fn result_json_keys() {
        let s = Statistic::new(TestKind::Scaling, 0.3, 0.6);
        let r = theoretical_result(&s, 2, ErrorScale::Eigengap, DEFAULT_THRESHOLD).unwrap();
        let v = r.to_json();
        for key in [
            "kind",
            "statistic",
            "numerator",
            "denominator",
            "p_value",
            "method",
            "rejected",
            "d",
            "bs",
            "R",
            "seed",
            "elapsed_ms",
            "schema_version",
        ] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        assert_eq!(v["kind"], "scaling");
        assert_eq!(v["method"], "theoretical");
        assert!(v["p_value"].is_null());
        let back: TestResult = serde_json::from_value(v).unwrap();
        assert_eq!(back, r);
    }
}
