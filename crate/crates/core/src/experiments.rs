//! Monte Carlo power studies on blockmodel graph pairs.
//!
//! Scenarios:
//!
//! * `table1` / `table2`: `B₀ = [[0.5, 0.2], [0.2, 0.5]]` against
//!   `B_ε = B₀ + ε I`, with block labels drawn once per replicate from `π`
//!   and shared by both graphs; identity test for `table1`, scaling test
//!   for `table2`, embedded at `d = 2`.
//! * `community`: two blocks of 400 vertices under
//!   `[[0.34, 0.25], [0.25, 0.25]]` against a three-block model in which
//!   `n₃` of the vertices form a new community (identity test, bootstrap).
//! * `dcsbm`: degree-corrected pairs with `π = (0.4, 0.6)` and corrections
//!   i.i.d. Uniform[0.2, 1] per graph. Parameter 0 pairs `B₀` with
//!   `B₂ = diag(1.2, 0.8)·B₀·diag(1.2, 0.8)` (the null holds); parameter 1
//!   pairs `B₀` with `[[0.7, 0.2], [0.2, 0.7]]` (diagonal test, bootstrap).
//!
//! Replicate `r` of the cell `(n, param)` runs from the seed
//! `derive_path(seed, [n, param index, r])`; all methods in a replicate share
//! the same pair of graphs.

use std::io::Write;
use std::path::Path;

use log::info;
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{RdpgError, Result};
use crate::graph::{
    contiguous_assignments, dcsbm_latent_positions, sample_assignments, sample_rdpg, sbm_latent_positions,
    uniform_degree_corrections, BlockModelSpec, Graph, LatentPositions, Membership,
};
use crate::io::read_edge_list;
use crate::rng::{derive_path, derive_seed};
use crate::spectral::{ase_with, EmbedOptions};
use crate::testing::{
    bootstrap_result, statistic_with, theoretical_result, two_sample_test, ErrorScale, Method, TestConfig, TestKind,
    TestResult, DEFAULT_THRESHOLD,
};

/// Header of the power CSV.
pub const POWER_HEADER: &str = "n,epsilon,method,power,replicates,se";

/// Header of the statistic samples CSV.
pub const SAMPLES_HEADER: &str = "scenario,param,replicate,statistic";

/// Published edge counts of the two C. elegans connectomes.
pub const CELEGANS_CHEMICAL_EDGES: usize = 6393;
pub const CELEGANS_GAP_EDGES: usize = 1031;
pub const CELEGANS_VERTICES: usize = 279;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    Table1,
    Table2,
    Community,
    Dcsbm,
}

impl Scenario {
    pub const ALL: [Scenario; 4] = [Scenario::Table1, Scenario::Table2, Scenario::Community, Scenario::Dcsbm];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Table1 => "table1",
            Scenario::Table2 => "table2",
            Scenario::Community => "community",
            Scenario::Dcsbm => "dcsbm",
        }
    }

    pub fn kind(self) -> TestKind {
        match self {
            Scenario::Table1 | Scenario::Community => TestKind::Identity,
            Scenario::Table2 => TestKind::Scaling,
            Scenario::Dcsbm => TestKind::Diagonal,
        }
    }
}

impl std::str::FromStr for Scenario {
    type Err = RdpgError;

    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| RdpgError::InvalidConfig(format!("unknown scenario {s:?}")))
    }
}

/// How the new community in the `community` scenario is carved out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommunityLayout {
    /// Blocks of `400 − n₃/2`, `400 − n₃/2` and `n₃` vertices.
    #[default]
    Halves,
    /// Blocks of `400 − n₃`, `400 − n₃` and `2n₃` vertices.
    Doubled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub ns: Vec<usize>,
    /// `ε` for the tables, `n₃` for `community`, 0/1 (null/alternative) for `dcsbm`.
    pub params: Vec<f64>,
    pub methods: Vec<Method>,
    pub replicates: usize,
    pub bs: usize,
    pub alpha: f64,
    pub seed: u64,
    /// Block membership probabilities for the randomly labelled scenarios.
    pub pi: Vec<f64>,
    /// Embedding dimension; `None` picks the scenario default.
    pub d: Option<usize>,
    pub threshold: f64,
    pub community_layout: CommunityLayout,
}

impl ScenarioConfig {
    /// Defaults: 200 replicates, 100 bootstrap samples, α = 0.05.
    pub fn new(scenario: Scenario) -> Self {
        let (ns, params, methods) = match scenario {
            Scenario::Table1 => {
                (vec![100, 200, 500, 1000], vec![0.0, 0.05, 0.1, 0.2], vec![Method::Bootstrap, Method::Theoretical])
            }
            Scenario::Table2 => {
                (vec![100, 200, 500, 1000], vec![0.0, 0.1, 0.2, 0.4], vec![Method::Bootstrap, Method::Theoretical])
            }
            Scenario::Community => (vec![800], vec![0.0, 4.0, 8.0, 12.0, 16.0], vec![Method::Bootstrap]),
            Scenario::Dcsbm => (vec![200, 4000], vec![0.0, 1.0], vec![Method::Bootstrap]),
        };
        ScenarioConfig {
            scenario,
            ns,
            params,
            methods,
            replicates: 200,
            bs: 100,
            alpha: 0.05,
            seed: 0,
            pi: vec![0.4, 0.6],
            d: None,
            threshold: DEFAULT_THRESHOLD,
            community_layout: CommunityLayout::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(RdpgError::InvalidConfig(m));
        if self.replicates == 0 {
            return bad("replicates must be at least 1".into());
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if self.methods.is_empty() || self.ns.is_empty() || self.params.is_empty() {
            return bad("ns, params and methods must be non-empty".into());
        }
        if self.methods.contains(&Method::Subgraph) {
            return bad("power scenarios run the theoretical and bootstrap methods only".into());
        }
        if self.methods.contains(&Method::Bootstrap) && self.bs == 0 {
            return bad("bs must be at least 1".into());
        }
        if !(self.threshold > 1.0) {
            return Err(RdpgError::InvalidThreshold(self.threshold));
        }
        match self.scenario {
            Scenario::Community => {
                for &p in &self.params {
                    if p < 0.0 || p.fract() != 0.0 || !(p as usize).is_multiple_of(2) {
                        return bad(format!("community size must be a non-negative even integer, got {p}"));
                    }
                }
            }
            Scenario::Dcsbm => {
                if self.params.iter().any(|&p| p != 0.0 && p != 1.0) {
                    return bad("dcsbm parameters are 0 (null pair) or 1 (alternative pair)".into());
                }
            }
            Scenario::Table1 | Scenario::Table2 => {
                if self.params.iter().any(|&e| !(0.0..=0.5).contains(&e)) {
                    return bad("epsilon must lie in [0, 0.5]".into());
                }
            }
        }
        Ok(())
    }

    fn dimension(&self, param: f64) -> usize {
        match (self.d, self.scenario) {
            (Some(d), _) => d,
            (None, Scenario::Community) if param > 0.0 => 3,
            _ => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerCell {
    pub n: usize,
    pub epsilon: f64,
    pub method: Method,
    pub power: f64,
    pub rejections: usize,
    pub replicates: usize,
    /// Monte Carlo standard error `√(f(1 − f)/replicates)`.
    pub se: f64,
}

impl PowerCell {
    pub fn new(n: usize, epsilon: f64, method: Method, rejections: usize, replicates: usize) -> Self {
        let power = rejections as f64 / replicates as f64;
        PowerCell {
            n,
            epsilon,
            method,
            power,
            rejections,
            replicates,
            se: (power * (1.0 - power) / replicates as f64).sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatisticSample {
    pub scenario: String,
    pub param: f64,
    pub replicate: usize,
    pub statistic: f64,
}

#[derive(Debug, Clone)]
pub struct PowerRun {
    pub cells: Vec<PowerCell>,
    pub samples: Vec<StatisticSample>,
}

/// `B_ε = [[0.5 + ε, 0.2], [0.2, 0.5 + ε]]`.
pub fn b_epsilon(eps: f64) -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[0.5 + eps, 0.2, 0.2, 0.5 + eps])
}

pub fn community_b1() -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[0.34, 0.25, 0.25, 0.25])
}

pub fn community_b2() -> DMatrix<f64> {
    DMatrix::from_row_slice(3, 3, &[0.34, 0.25, 0.16, 0.25, 0.25, 0.25, 0.16, 0.25, 0.34])
}

/// The three degree-corrected block matrices `B₀`, `B₁`, `B₂`.
pub fn dcsbm_blocks() -> [DMatrix<f64>; 3] {
    let b0 = b_epsilon(0.0);
    let b1 = b_epsilon(0.2);
    let s = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&[1.2, 0.8]));
    let b2 = &s * &b0 * &s;
    [b0, b1, b2]
}

/// Block labels of the two community graphs on `800` vertices: the first
/// has two blocks of 400; in the second the last vertices of each old
/// block form block 2.
pub fn community_assignments(n3: usize, layout: CommunityLayout) -> Result<(Vec<usize>, Vec<usize>)> {
    let taken = match layout {
        CommunityLayout::Halves => n3 / 2,
        CommunityLayout::Doubled => n3,
    };
    if !n3.is_multiple_of(2) || taken > 400 {
        return Err(RdpgError::InvalidConfig(format!("invalid community size {n3}")));
    }
    let before = contiguous_assignments(&[400, 400]);
    let mut after = before.clone();
    for block in 0..2 {
        after[400 * block + 400 - taken..400 * (block + 1)].fill(2);
    }
    Ok((before, after))
}

fn sbm_pair(
    b_a: DMatrix<f64>,
    tau_a: &[usize],
    b_b: DMatrix<f64>,
    tau_b: &[usize],
) -> Result<(LatentPositions, LatentPositions)> {
    let xa = sbm_latent_positions(&BlockModelSpec::new(b_a, Membership::Fixed(tau_a.to_vec()))?, tau_a)?;
    let xb = sbm_latent_positions(&BlockModelSpec::new(b_b, Membership::Fixed(tau_b.to_vec()))?, tau_b)?;
    Ok((xa, xb))
}

fn dcsbm_positions(b: DMatrix<f64>, tau: &[usize], seed: u64) -> Result<LatentPositions> {
    let c = uniform_degree_corrections(tau.len(), 0.2, 1.0, seed);
    let spec = BlockModelSpec::new(b, Membership::Fixed(tau.to_vec()))?.with_degree_corrections(c)?;
    dcsbm_latent_positions(&spec, tau)
}

/// Latent positions of the two graphs in one replicate.
pub fn scenario_latents(
    cfg: &ScenarioConfig,
    n: usize,
    param: f64,
    seed: u64,
) -> Result<(LatentPositions, LatentPositions)> {
    match cfg.scenario {
        Scenario::Table1 | Scenario::Table2 => {
            let tau = sample_assignments(&cfg.pi, n, derive_seed(seed, 0))?;
            sbm_pair(b_epsilon(0.0), &tau, b_epsilon(param), &tau)
        }
        Scenario::Community => {
            if n != 800 {
                return Err(RdpgError::InvalidConfig("the community scenario is defined for n = 800".into()));
            }
            let (ta, tb) = community_assignments(param as usize, cfg.community_layout)?;
            sbm_pair(community_b1(), &ta, community_b2(), &tb)
        }
        Scenario::Dcsbm => {
            let tau = sample_assignments(&cfg.pi, n, derive_seed(seed, 0))?;
            let [b0, b1, b2] = dcsbm_blocks();
            let other = if param == 0.0 { b2 } else { b1 };
            Ok((dcsbm_positions(b0, &tau, derive_seed(seed, 3))?, dcsbm_positions(other, &tau, derive_seed(seed, 4))?))
        }
    }
}

/// Outcome of one replicate: the normalized statistic and one decision
/// per configured method.
#[derive(Debug, Clone)]
pub struct ReplicateOutcome {
    pub statistic: f64,
    pub results: Vec<TestResult>,
}

pub fn run_replicate(cfg: &ScenarioConfig, n: usize, param: f64, seed: u64) -> Result<ReplicateOutcome> {
    let (xa, xb) = scenario_latents(cfg, n, param, seed)?;
    let ga = sample_rdpg(&xa, derive_seed(seed, 1))?;
    let gb = sample_rdpg(&xb, derive_seed(seed, 2))?;
    let d = cfg.dimension(param);
    let opts = EmbedOptions::default();
    let a = ase_with(&ga, d, &opts)?;
    let b = ase_with(&gb, d, &opts)?;
    let stat = statistic_with(cfg.scenario.kind(), &a, &b, ErrorScale::Eigengap)?;
    let test_cfg = TestConfig {
        method: Method::Bootstrap,
        bs: cfg.bs,
        alpha: cfg.alpha,
        threshold: cfg.threshold,
        seed: derive_seed(seed, 5),
        ..TestConfig::default()
    };
    let results = cfg
        .methods
        .iter()
        .map(|&m| match m {
            Method::Theoretical => theoretical_result(&stat, d, ErrorScale::Eigengap, cfg.threshold),
            _ => bootstrap_result(&stat, &a, &b, &test_cfg),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ReplicateOutcome { statistic: stat.value, results })
}

/// Run every `(n, param)` cell of the scenario.
pub fn run_power(cfg: &ScenarioConfig) -> Result<PowerRun> {
    cfg.validate()?;
    let mut cells = Vec::new();
    let mut samples = Vec::new();
    for &n in &cfg.ns {
        for (pi, &param) in cfg.params.iter().enumerate() {
            let outcomes = (0..cfg.replicates)
                .into_par_iter()
                .map(|r| {
                    let seed = derive_path(cfg.seed, &[n as u64, pi as u64, r as u64]);
                    run_replicate(cfg, n, param, seed)
                        .map_err(|e| e.context(format!("{} n={n} param={param} replicate {r}", cfg.scenario.name())))
                })
                .collect::<Result<Vec<_>>>()?;
            for (k, &method) in cfg.methods.iter().enumerate() {
                let rejections = outcomes.iter().filter(|o| o.results[k].rejected == Some(true)).count();
                let cell = PowerCell::new(n, param, method, rejections, cfg.replicates);
                info!("{} n={n} param={param} {}: power {:.3}", cfg.scenario.name(), method.name(), cell.power);
                cells.push(cell);
            }
            let label = format!("{}_n{n}", cfg.scenario.name());
            samples.extend(outcomes.iter().enumerate().map(|(r, o)| StatisticSample {
                scenario: label.clone(),
                param,
                replicate: r,
                statistic: o.statistic,
            }));
        }
    }
    Ok(PowerRun { cells, samples })
}

pub fn run_table1(cfg: &ScenarioConfig) -> Result<PowerRun> {
    expect_scenario(cfg, Scenario::Table1)?;
    run_power(cfg)
}

pub fn run_table2(cfg: &ScenarioConfig) -> Result<PowerRun> {
    expect_scenario(cfg, Scenario::Table2)?;
    run_power(cfg)
}

pub fn run_community(cfg: &ScenarioConfig) -> Result<PowerRun> {
    expect_scenario(cfg, Scenario::Community)?;
    run_power(cfg)
}

pub fn run_dcsbm(cfg: &ScenarioConfig) -> Result<PowerRun> {
    expect_scenario(cfg, Scenario::Dcsbm)?;
    run_power(cfg)
}

fn expect_scenario(cfg: &ScenarioConfig, s: Scenario) -> Result<()> {
    if cfg.scenario != s {
        return Err(RdpgError::InvalidConfig(format!("expected scenario {}, got {}", s.name(), cfg.scenario.name())));
    }
    Ok(())
}

pub fn write_power_csv<W: Write>(cells: &[PowerCell], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{POWER_HEADER}")?;
    for c in cells {
        writeln!(out, "{},{},{},{},{},{}", c.n, c.epsilon, c.method.name(), c.power, c.replicates, c.se)?;
    }
    out.flush()
}

pub fn write_samples_csv<W: Write>(samples: &[StatisticSample], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{SAMPLES_HEADER}")?;
    for s in samples {
        writeln!(out, "{},{},{},{}", s.scenario, s.param, s.replicate, s.statistic)?;
    }
    out.flush()
}

#[derive(Debug, Clone, Serialize)]
pub struct CelegansReport {
    pub vertices: usize,
    pub chemical_edges: usize,
    pub gap_edges: usize,
    /// Whether the edge counts match the published connectomes.
    pub counts_match: bool,
    pub result: TestResult,
}

/// Scaling test of the chemical against the gap-junction connectome, with
/// `C(X̂)` in place of `√(d/γ₂)` in the denominator.
pub fn run_celegans(chem: &Path, gap: &Path, d: usize, bs: usize, seed: u64) -> Result<CelegansReport> {
    let a = read_edge_list(chem)?.graph;
    let b = read_edge_list(gap)?.graph;
    celegans_from_graphs(&a, &b, d, bs, seed)
}

pub fn celegans_from_graphs(a: &Graph, b: &Graph, d: usize, bs: usize, seed: u64) -> Result<CelegansReport> {
    if a.n() != b.n() {
        return Err(RdpgError::VertexSetMismatch(format!("{} vs {} vertices", a.n(), b.n())));
    }
    let counts_match =
        a.n() == CELEGANS_VERTICES && a.edge_count() == CELEGANS_CHEMICAL_EDGES && b.edge_count() == CELEGANS_GAP_EDGES;
    if !counts_match {
        log::warn!(
            "connectome sizes ({} vertices, {} and {} edges) differ from the published {CELEGANS_VERTICES}/{CELEGANS_CHEMICAL_EDGES}/{CELEGANS_GAP_EDGES}",
            a.n(),
            a.edge_count(),
            b.edge_count()
        );
    }
    let cfg =
        TestConfig { method: Method::Bootstrap, bs, seed, scale: ErrorScale::NoiseConstant, ..TestConfig::default() };
    let result = two_sample_test(a, b, TestKind::Scaling, d, &cfg)?;
    Ok(CelegansReport {
        vertices: a.n(),
        chemical_edges: a.edge_count(),
        gap_edges: b.edge_count(),
        counts_match,
        result,
    })
}
