//! Latent positions, graphs and the random dot product graph samplers.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, RngCore};

use crate::eigen::SymmetricOperator;
use crate::error::{RdpgError, Result};
use crate::rng::{rng_from_seed, GraphRng};

/// Tolerance on inner products leaving [0, 1].
pub const PROBABILITY_TOLERANCE: f64 = 1e-12;

/// Largest vertex count for which a dense bit matrix is materialized.
pub const DENSE_LIMIT: usize = 20_000;

/// Eigenvalues of `B` below `-PSD_TOLERANCE` make a block model unrepresentable.
pub const PSD_TOLERANCE: f64 = 1e-10;

/// An `n × d` matrix whose rows are per-vertex latent vectors.
///
/// The container itself does not enforce the probability constraint, since
/// spectral estimates routinely violate it; [`LatentPositions::validate`]
/// checks it and the exact samplers call it.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentPositions {
    rows: DMatrix<f64>,
}

impl LatentPositions {
    pub fn new(rows: DMatrix<f64>) -> Self {
        LatentPositions { rows }
    }

    pub fn from_row_slice(n: usize, d: usize, data: &[f64]) -> Self {
        LatentPositions { rows: DMatrix::from_row_slice(n, d, data) }
    }

    pub fn n(&self) -> usize {
        self.rows.nrows()
    }

    pub fn d(&self) -> usize {
        self.rows.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.rows
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.rows
    }

    /// Row-major copy of the entries.
    pub fn row_major(&self) -> Vec<f64> {
        let (n, d) = self.rows.shape();
        let mut out = vec![0.0; n * d];
        for c in 0..d {
            for (i, v) in self.rows.column(c).iter().enumerate() {
                out[i * d + c] = *v;
            }
        }
        out
    }

    /// Rows restricted to `vertices`, in the given order.
    pub fn select_rows(&self, vertices: &[usize]) -> LatentPositions {
        LatentPositions { rows: self.rows.select_rows(vertices) }
    }

    /// `P = X Xᵀ` including the diagonal.
    pub fn gram(&self) -> DMatrix<f64> {
        &self.rows * self.rows.transpose()
    }

    /// Edge probability matrix: `X Xᵀ` with a zero diagonal.
    pub fn probability_matrix(&self) -> DMatrix<f64> {
        let mut p = self.gram();
        p.fill_diagonal(0.0);
        p
    }

    /// Check that every off-diagonal inner product lies in [0, 1].
    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        let d = self.d();
        let rows = self.row_major();
        for i in 0..n {
            let xi = &rows[i * d..(i + 1) * d];
            for j in i + 1..n {
                let xj = &rows[j * d..(j + 1) * d];
                let p: f64 = xi.iter().zip(xj).map(|(a, b)| a * b).sum();
                if !(-PROBABILITY_TOLERANCE..=1.0 + PROBABILITY_TOLERANCE).contains(&p) {
                    return Err(RdpgError::InvalidLatentPositions(format!("<X_{i}, X_{j}> = {p} lies outside [0, 1]")));
                }
            }
        }
        Ok(())
    }

    /// Numerical rank check: the d-th singular value exceeds `tol`.
    pub fn has_full_rank(&self, tol: f64) -> bool {
        if self.d() == 0 || self.n() < self.d() {
            return false;
        }
        let xtx = self.rows.transpose() * &self.rows;
        let eig = SymmetricEigen::new(xtx);
        eig.eigenvalues.iter().all(|&l| l.max(0.0).sqrt() > tol)
    }
}

/// Simple undirected loop-free graph on vertices `0..n`.
///
/// Stored as an upper-triangular CSR: row `i` lists its neighbors `j > i`
/// in increasing order, so every edge appears once and the edge list is
/// lexicographically sorted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    offsets: Vec<usize>,
    targets: Vec<u32>,
}

impl Graph {
    /// Build from arbitrary pairs. Duplicates (in either orientation) are
    /// collapsed; the number dropped is returned alongside the graph.
    pub fn from_edges<I>(n: usize, pairs: I) -> Result<(Graph, usize)>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        if n > u32::MAX as usize {
            return Err(RdpgError::InvalidConfig(format!("{n} vertices exceeds the u32 label range")));
        }
        let mut edges = Vec::new();
        for (a, b) in pairs {
            if a == b {
                return Err(RdpgError::InvalidConfig(format!("self-loop at vertex {a}")));
            }
            let (i, j) = if a < b { (a, b) } else { (b, a) };
            if j >= n {
                return Err(RdpgError::VertexOutOfRange { vertex: j, n, line: 0 });
            }
            edges.push((i as u32, j as u32));
        }
        edges.sort_unstable();
        let before = edges.len();
        edges.dedup();
        let dups = before - edges.len();
        Ok((Graph::from_sorted_pairs(n, &edges), dups))
    }

    /// `edges` must be sorted, deduplicated, with `i < j < n`.
    fn from_sorted_pairs(n: usize, edges: &[(u32, u32)]) -> Graph {
        let mut offsets = vec![0usize; n + 1];
        for &(i, _) in edges {
            offsets[i as usize + 1] += 1;
        }
        for v in 0..n {
            offsets[v + 1] += offsets[v];
        }
        Graph { offsets, targets: edges.iter().map(|&(_, j)| j).collect() }
    }

    /// Caller guarantees each row of `targets` is increasing and above its row index.
    pub(crate) fn from_upper_csr(offsets: Vec<usize>, targets: Vec<u32>) -> Graph {
        debug_assert_eq!(*offsets.last().unwrap_or(&0), targets.len());
        Graph { offsets, targets }
    }

    pub fn empty(n: usize) -> Graph {
        Graph { offsets: vec![0; n + 1], targets: Vec::new() }
    }

    pub fn n(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn edge_count(&self) -> usize {
        self.targets.len()
    }

    /// Neighbors `j > i` of vertex `i`, increasing.
    pub fn upper_neighbors(&self, i: usize) -> &[u32] {
        &self.targets[self.offsets[i]..self.offsets[i + 1]]
    }

    /// Edges `(i, j)`, `i < j`, in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n()).flat_map(move |i| self.upper_neighbors(i).iter().map(move |&j| (i, j as usize)))
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        if a == b || a.max(b) >= self.n() {
            return false;
        }
        let (i, j) = if a < b { (a, b) } else { (b, a) };
        self.upper_neighbors(i).binary_search(&(j as u32)).is_ok()
    }

    pub fn degrees(&self) -> Vec<usize> {
        let n = self.n();
        let mut deg = vec![0usize; n];
        for i in 0..n {
            let up = self.upper_neighbors(i);
            deg[i] += up.len();
            for &j in up {
                deg[j as usize] += 1;
            }
        }
        deg
    }

    pub fn max_degree(&self) -> usize {
        self.degrees().into_iter().max().unwrap_or(0)
    }

    /// Relabel: vertex `v` becomes `perm[v]`.
    pub fn permute(&self, perm: &[usize]) -> Result<Graph> {
        if perm.len() != self.n() {
            return Err(RdpgError::SizeMismatch(perm.len(), self.n()));
        }
        let (g, _) = Graph::from_edges(self.n(), self.edges().map(|(i, j)| (perm[i], perm[j])))?;
        Ok(g)
    }

    /// Subgraph induced on `vertices`; vertex `vertices[k]` becomes `k`.
    pub fn induced_subgraph(&self, vertices: &[usize]) -> Graph {
        let mut index = vec![u32::MAX; self.n()];
        for (k, &v) in vertices.iter().enumerate() {
            index[v] = k as u32;
        }
        let mut edges: Vec<(u32, u32)> = self
            .edges()
            .filter_map(|(i, j)| {
                let (a, b) = (index[i], index[j]);
                (a != u32::MAX && b != u32::MAX).then_some(if a < b { (a, b) } else { (b, a) })
            })
            .collect();
        edges.sort_unstable();
        Graph::from_sorted_pairs(vertices.len(), &edges)
    }

    /// Dense bit matrix; refused above [`DENSE_LIMIT`] vertices.
    pub fn dense_bits(&self) -> Result<BitMatrix> {
        if self.n() > DENSE_LIMIT {
            return Err(RdpgError::InvalidConfig(format!(
                "dense adjacency requested for {} > {DENSE_LIMIT} vertices",
                self.n()
            )));
        }
        let mut bits = BitMatrix::new(self.n());
        for (i, j) in self.edges() {
            bits.set(i, j);
            bits.set(j, i);
        }
        Ok(bits)
    }

    /// Dense `f64` adjacency matrix.
    pub fn to_dense(&self) -> Result<DMatrix<f64>> {
        let bits = self.dense_bits()?;
        Ok(DMatrix::from_fn(self.n(), self.n(), |i, j| if bits.get(i, j) { 1.0 } else { 0.0 }))
    }
}

/// Symmetric 0/1 matrix packed 64 entries per word.
#[derive(Debug, Clone)]
pub struct BitMatrix {
    n: usize,
    words_per_row: usize,
    words: Vec<u64>,
}

impl BitMatrix {
    fn new(n: usize) -> Self {
        let words_per_row = n.div_ceil(64);
        BitMatrix { n, words_per_row, words: vec![0; n * words_per_row] }
    }

    fn set(&mut self, i: usize, j: usize) {
        self.words[i * self.words_per_row + j / 64] |= 1 << (j % 64);
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.words[i * self.words_per_row + j / 64] >> (j % 64) & 1 == 1
    }
}

impl SymmetricOperator for Graph {
    fn dim(&self) -> usize {
        self.n()
    }

    /// Each stored edge contributes a gather for its row and a scatter
    /// for its column.
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..self.n() {
            let xi = x[i];
            let mut s = 0.0;
            for &j in self.upper_neighbors(i) {
                let j = j as usize;
                s += x[j];
                y[j] += xi;
            }
            y[i] += s;
        }
    }
}

/// Bernoulli threshold on a 32-bit uniform: an edge is drawn when the
/// uniform is below the threshold. `p = 1` maps to `2^32` (always).
#[inline]
fn threshold(p: f64) -> u64 {
    if p <= 0.0 {
        0
    } else if p >= 1.0 {
        1 << 32
    } else {
        (p * 4_294_967_296.0) as u64
    }
}

/// 32-bit uniforms, two per 64-bit generator output.
struct U32Stream<'a> {
    rng: &'a mut GraphRng,
    buf: u64,
    half: bool,
}

impl<'a> U32Stream<'a> {
    fn new(rng: &'a mut GraphRng) -> Self {
        U32Stream { rng, buf: 0, half: false }
    }

    #[inline]
    fn next(&mut self) -> u64 {
        if self.half {
            self.half = false;
            self.buf >> 32
        } else {
            self.buf = self.rng.next_u64();
            self.half = true;
            self.buf & 0xFFFF_FFFF
        }
    }
}

/// Vertex counts up to this use a precomputed threshold table.
const TABLE_LIMIT: usize = 4096;

/// Reusable edge-probability source for repeated sampling from the same
/// latent positions. Pairs are visited in row-major upper-triangular order
/// and each consumes one 32-bit uniform, whichever representation is used,
/// so output depends only on the probabilities and the seed.
pub struct EdgeSampler {
    n: usize,
    d: usize,
    rows: Vec<f64>,
    table: Option<Vec<u64>>,
}

impl EdgeSampler {
    /// Exact sampler: inner products outside [0, 1] are an error.
    pub fn exact(x: &LatentPositions) -> Result<Self> {
        x.validate()?;
        Ok(Self::build(x))
    }

    /// Clipping sampler for estimated positions: inner products are
    /// clipped to [0, 1] (the threshold saturates at both ends).
    pub fn clipped(x: &LatentPositions) -> Self {
        Self::build(x)
    }

    fn build(x: &LatentPositions) -> Self {
        let n = x.n();
        let d = x.d();
        let rows = x.row_major();
        let table = (n <= TABLE_LIMIT).then(|| {
            let mut t = Vec::with_capacity(n * n.saturating_sub(1) / 2);
            for i in 0..n {
                let xi = &rows[i * d..(i + 1) * d];
                for j in i + 1..n {
                    let xj = &rows[j * d..(j + 1) * d];
                    let p: f64 = xi.iter().zip(xj).map(|(a, b)| a * b).sum();
                    t.push(threshold(p));
                }
            }
            t
        });
        EdgeSampler { n, d, rows, table }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn sample(&self, seed: u64) -> Graph {
        let mut rng = rng_from_seed(seed);
        self.sample_with(&mut rng)
    }

    pub fn sample_with(&self, rng: &mut GraphRng) -> Graph {
        let n = self.n;
        let mut stream = U32Stream::new(rng);
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        let mut targets: Vec<u32> = Vec::new();
        // candidates are written unconditionally and kept by advancing the cursor
        let mut scratch = vec![0u32; n];
        let mut k = 0;
        let d = self.d;
        for i in 0..n {
            let width = n - i - 1;
            let mut kept = 0;
            match &self.table {
                Some(table) => {
                    for (off, &t) in table[k..k + width].iter().enumerate() {
                        scratch[kept] = (i + 1 + off) as u32;
                        kept += (stream.next() < t) as usize;
                    }
                    k += width;
                }
                None => {
                    let xi = &self.rows[i * d..(i + 1) * d];
                    for j in i + 1..n {
                        let xj = &self.rows[j * d..(j + 1) * d];
                        let p: f64 = xi.iter().zip(xj).map(|(a, b)| a * b).sum();
                        scratch[kept] = j as u32;
                        kept += (stream.next() < threshold(p)) as usize;
                    }
                }
            }
            targets.extend_from_slice(&scratch[..kept]);
            offsets.push(targets.len());
        }
        Graph::from_upper_csr(offsets, targets)
    }
}

/// Sample `A ~ RDPG(X)`: each pair `i < j` is an edge independently with
/// probability `⟨X_i, X_j⟩`.
pub fn sample_rdpg(x: &LatentPositions, seed: u64) -> Result<Graph> {
    Ok(EdgeSampler::exact(x)?.sample(seed))
}

/// Sample from estimated positions, clipping inner products to [0, 1].
pub fn sample_rdpg_clipped(x: &LatentPositions, seed: u64) -> Graph {
    EdgeSampler::clipped(x).sample(seed)
}

/// Block probability matrix together with membership information.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockModelSpec {
    b: DMatrix<f64>,
    membership: Membership,
    degree_corrections: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Membership {
    /// Block membership probabilities `π`.
    Probabilities(Vec<f64>),
    /// Fixed block labels `τ`.
    Fixed(Vec<usize>),
}

impl BlockModelSpec {
    pub fn new(b: DMatrix<f64>, membership: Membership) -> Result<Self> {
        let k = b.nrows();
        if k == 0 || b.ncols() != k {
            return Err(RdpgError::InvalidBlockModel(format!(
                "block matrix must be square and nonempty, got {}x{}",
                b.nrows(),
                b.ncols()
            )));
        }
        for i in 0..k {
            for j in 0..k {
                let v = b[(i, j)];
                if !(0.0..=1.0).contains(&v) {
                    return Err(RdpgError::InvalidBlockModel(format!("B[{i},{j}] = {v} outside [0, 1]")));
                }
                if (v - b[(j, i)]).abs() > 1e-12 {
                    return Err(RdpgError::InvalidBlockModel(format!("B is not symmetric at ({i},{j})")));
                }
            }
        }
        match &membership {
            Membership::Probabilities(pi) => {
                validate_probabilities(pi)?;
                if pi.len() != k {
                    return Err(RdpgError::InvalidBlockModel(format!("pi has {} entries for {k} blocks", pi.len())));
                }
            }
            Membership::Fixed(tau) => validate_assignments(tau, k)?,
        }
        Ok(BlockModelSpec { b, membership, degree_corrections: None })
    }

    pub fn with_probabilities(b: DMatrix<f64>, pi: Vec<f64>) -> Result<Self> {
        Self::new(b, Membership::Probabilities(pi))
    }

    pub fn with_degree_corrections(mut self, c: Vec<f64>) -> Result<Self> {
        if let Some((i, v)) = c.iter().enumerate().find(|(_, v)| !(**v > 0.0) || !v.is_finite()) {
            return Err(RdpgError::InvalidBlockModel(format!("degree correction c[{i}] = {v} must be positive")));
        }
        self.degree_corrections = Some(c);
        Ok(self)
    }

    pub fn blocks(&self) -> usize {
        self.b.nrows()
    }

    pub fn block_matrix(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn membership(&self) -> &Membership {
        &self.membership
    }

    pub fn degree_corrections(&self) -> Option<&[f64]> {
        self.degree_corrections.as_deref()
    }

    /// Per-block latent vectors `ν_k` (rows) from `B = V Λ Vᵀ`.
    pub fn block_vectors(&self) -> Result<DMatrix<f64>> {
        let eig = SymmetricEigen::new(self.b.clone());
        let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        if min < -PSD_TOLERANCE {
            return Err(RdpgError::NotPositiveSemidefinite { min_eigenvalue: min });
        }
        let mut order: Vec<usize> = (0..self.blocks()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let kept: Vec<usize> = order.into_iter().filter(|&i| eig.eigenvalues[i] > PSD_TOLERANCE).collect();
        let k = self.blocks();
        if kept.is_empty() {
            return Ok(DMatrix::zeros(k, 1));
        }
        let mut nu = DMatrix::zeros(k, kept.len());
        for (c, &i) in kept.iter().enumerate() {
            let s = eig.eigenvalues[i].sqrt();
            let mut col = eig.eigenvectors.column(i).into_owned();
            // deterministic orientation of each factor column
            let pivot = col.iamax();
            if col[pivot] < 0.0 {
                col.neg_mut();
            }
            nu.set_column(c, &(col * s));
        }
        Ok(nu)
    }
}

fn validate_probabilities(pi: &[f64]) -> Result<()> {
    if pi.is_empty() {
        return Err(RdpgError::InvalidProbabilities("empty probability vector".into()));
    }
    if let Some(v) = pi.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
        return Err(RdpgError::InvalidProbabilities(format!("negative or non-finite entry {v}")));
    }
    let s: f64 = pi.iter().sum();
    if (s - 1.0).abs() > 1e-12 {
        return Err(RdpgError::InvalidProbabilities(format!("entries sum to {s}, not 1")));
    }
    Ok(())
}

fn validate_assignments(tau: &[usize], k: usize) -> Result<()> {
    if let Some((i, &t)) = tau.iter().enumerate().find(|(_, &t)| t >= k) {
        return Err(RdpgError::InvalidBlockModel(format!("vertex {i} assigned to block {t} of {k}")));
    }
    Ok(())
}

/// Latent positions of a stochastic blockmodel: row `i` is `ν_{τ(i)}`.
pub fn sbm_latent_positions(spec: &BlockModelSpec, assignments: &[usize]) -> Result<LatentPositions> {
    validate_assignments(assignments, spec.blocks())?;
    let nu = spec.block_vectors()?;
    let rows = DMatrix::from_fn(assignments.len(), nu.ncols(), |i, c| nu[(assignments[i], c)]);
    Ok(LatentPositions::new(rows))
}

/// Degree-corrected blockmodel: row `i` is `c_i ν_{τ(i)}`, so
/// `P_ij = c_i c_j B_{τ(i)τ(j)}`.
pub fn dcsbm_latent_positions(spec: &BlockModelSpec, assignments: &[usize]) -> Result<LatentPositions> {
    let c = spec
        .degree_corrections()
        .ok_or_else(|| RdpgError::InvalidBlockModel("degree-corrected model requires degree corrections".into()))?;
    if c.len() != assignments.len() {
        return Err(RdpgError::InvalidBlockModel(format!(
            "{} degree corrections for {} vertices",
            c.len(),
            assignments.len()
        )));
    }
    validate_assignments(assignments, spec.blocks())?;

    // largest and second-largest correction per block bound every product
    let k = spec.blocks();
    let mut top = vec![(0.0f64, 0.0f64); k];
    for (&t, &ci) in assignments.iter().zip(c) {
        let e = &mut top[t];
        if ci > e.0 {
            e.1 = e.0;
            e.0 = ci;
        } else if ci > e.1 {
            e.1 = ci;
        }
    }
    let b = spec.block_matrix();
    for a in 0..k {
        for bb in a..k {
            let m = if a == bb { top[a].0 * top[a].1 } else { top[a].0 * top[bb].0 } * b[(a, bb)];
            if m > 1.0 + PROBABILITY_TOLERANCE {
                return Err(RdpgError::InvalidLatentPositions(format!(
                    "degree-corrected probability {m} exceeds 1 between blocks {a} and {bb}"
                )));
            }
        }
    }

    let mut x = sbm_latent_positions(spec, assignments)?.into_matrix();
    for (i, mut row) in x.row_iter_mut().enumerate() {
        row *= c[i];
    }
    Ok(LatentPositions::new(x))
}

/// I.i.d. categorical block labels.
pub fn sample_assignments(pi: &[f64], n: usize, seed: u64) -> Result<Vec<usize>> {
    validate_probabilities(pi)?;
    let mut rng = rng_from_seed(seed);
    let last = pi.iter().rposition(|&p| p > 0.0).unwrap_or(0);
    Ok((0..n)
        .map(|_| {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            for (k, &p) in pi.iter().enumerate() {
                acc += p;
                if u < acc {
                    return k;
                }
            }
            last
        })
        .collect())
}

/// Labels `0, …, 0, 1, …` with the given block sizes.
pub fn contiguous_assignments(sizes: &[usize]) -> Vec<usize> {
    sizes.iter().enumerate().flat_map(|(k, &s)| std::iter::repeat_n(k, s)).collect()
}

/// I.i.d. Uniform[lo, hi] degree corrections.
pub fn uniform_degree_corrections(n: usize, lo: f64, hi: f64, seed: u64) -> Vec<f64> {
    let mut rng = rng_from_seed(seed);
    (0..n).map(|_| lo + (hi - lo) * rng.random::<f64>()).collect()
}
