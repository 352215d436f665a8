//! Synthetic functional graphical models.
//!
//! The generator draws a power-law graph, spreads its edges over `M` basis
//! functions, builds one sparse precision matrix per basis, and samples
//! Fourier-expanded curves with additive measurement noise. Two covariance
//! models are available: block diagonal (partially separable) and a
//! block-banded precision version that couples neighbouring bases.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::fdata::{FunctionalDataset, TimeGrid};
use crate::graphs::{union_edges, EdgeSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovarianceModel {
    /// Block-diagonal score covariance.
    PartiallySeparable,
    /// Adjacent score blocks coupled through a block-banded precision.
    NonSeparable,
}

impl CovarianceModel {
    pub fn as_str(&self) -> &'static str {
        match self {
            CovarianceModel::PartiallySeparable => "ps",
            CovarianceModel::NonSeparable => "non-ps",
        }
    }
}

impl std::str::FromStr for CovarianceModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ps" => Ok(CovarianceModel::PartiallySeparable),
            "non-ps" | "nonps" => Ok(CovarianceModel::NonSeparable),
            other => Err(Error::InvalidInput(format!("unknown covariance model {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub p: usize,
    pub n: usize,
    /// Number of basis functions `M`.
    pub n_basis: usize,
    /// Grid size `T`.
    pub n_points: usize,
    /// Edge probability `π`.
    pub pi: f64,
    /// Proportion of edges shared by every basis, `τ`.
    pub tau: f64,
    pub model: CovarianceModel,
    /// Noise variance as a fraction of the average per-component signal variance.
    pub noise_fraction: f64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            p: 50,
            n: 75,
            n_basis: 20,
            n_points: 30,
            pi: 0.05,
            tau: 0.0,
            model: CovarianceModel::PartiallySeparable,
            noise_fraction: 0.05,
            seed: 1,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::InvalidInput(m));
        if self.p < 3 {
            return fail(format!("p must be >= 3, got {}", self.p));
        }
        if self.n < 1 {
            return fail("n must be >= 1".into());
        }
        if self.n_basis < 1 {
            return fail("number of basis functions must be >= 1".into());
        }
        if self.n_points < 2 {
            return fail(format!("grid size must be >= 2, got {}", self.n_points));
        }
        if !(self.pi > 0.0 && self.pi < 1.0) {
            return fail(format!("pi must lie in (0, 1), got {}", self.pi));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return fail(format!("tau must lie in [0, 1], got {}", self.tau));
        }
        if !(self.noise_fraction >= 0.0 && self.noise_fraction.is_finite()) {
            return fail(format!("noise fraction must be >= 0, got {}", self.noise_fraction));
        }
        if target_edge_count(self.p, self.pi) == 0 {
            return fail(format!("p={} and pi={} give an empty graph", self.p, self.pi));
        }
        Ok(())
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }
}

pub fn target_edge_count(p: usize, pi: f64) -> usize {
    (pi * (p * (p - 1) / 2) as f64).round() as usize
}

/// Index drawn with probability proportional to `weights`.
fn weighted_pick<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.len() - 1
}

/// Preferential-attachment graph trimmed or filled to exactly
/// `round(π p(p−1)/2)` edges.
pub fn gen_power_law_graph<R: Rng + ?Sized>(p: usize, pi: f64, rng: &mut R) -> Result<EdgeSet> {
    if p < 2 {
        return Err(Error::InvalidInput(format!("graph needs at least 2 nodes, got {p}")));
    }
    let target = target_edge_count(p, pi);
    if target == 0 {
        return Err(Error::InvalidInput(format!("p={p}, pi={pi} gives zero expected edges")));
    }
    let max_edges = p * (p - 1) / 2;
    if target > max_edges {
        return Err(Error::InvalidInput(format!("pi={pi} asks for more than {max_edges} edges")));
    }
    let per_node = ((target as f64 / (p - 1) as f64).round() as usize).max(1);

    let mut graph = EdgeSet::empty(p);
    let mut degree = vec![0usize; p];
    for v in 1..p {
        let mut weights: Vec<f64> = degree[..v].iter().map(|d| *d as f64 + 1.0).collect();
        for _ in 0..per_node.min(v) {
            let u = weighted_pick(&weights, rng);
            weights[u] = 0.0;
            graph.insert(u, v)?;
            degree[u] += 1;
            degree[v] += 1;
        }
    }

    while graph.len() > target {
        let edges: Vec<(usize, usize)> = graph.iter().collect();
        let (a, b) = edges[rng.random_range(0..edges.len())];
        graph.remove(a, b);
        degree[a] -= 1;
        degree[b] -= 1;
    }
    let mut attempts = 0;
    while graph.len() < target {
        let (a, b) = if attempts < 100 * p {
            attempts += 1;
            let weights: Vec<f64> = degree.iter().map(|d| *d as f64 + 1.0).collect();
            (weighted_pick(&weights, rng), weighted_pick(&weights, rng))
        } else {
            (rng.random_range(0..p), rng.random_range(0..p))
        };
        if a != b && graph.insert(a, b)? {
            degree[a] += 1;
            degree[b] += 1;
        }
    }
    Ok(graph)
}

/// Common edges plus the per-basis exclusive edges.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgePartition {
    pub common: EdgeSet,
    /// `Ẽ_l`, pairwise disjoint with nonincreasing sizes.
    pub exclusive: Vec<EdgeSet>,
    /// `E_l = E_c ∪ Ẽ_l`.
    pub sets: Vec<EdgeSet>,
}

/// Spreads the edges of `graph` over `m` bases: a random common subset of
/// size `round(τ|E|)`, then the remaining edges in random order dealt
/// round-robin over a window of bases that widens by one after each pass.
pub fn partition_edges<R: Rng + ?Sized>(graph: &EdgeSet, m: usize, tau: f64, rng: &mut R) -> Result<EdgePartition> {
    if m == 0 {
        return Err(Error::InvalidInput("number of bases must be >= 1".into()));
    }
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::InvalidInput(format!("tau must lie in [0, 1], got {tau}")));
    }
    let p = graph.p();
    let mut edges: Vec<(usize, usize)> = graph.iter().collect();
    edges.shuffle(rng);
    let n_common = (tau * edges.len() as f64).round() as usize;
    let common = EdgeSet::from_pairs(p, edges[..n_common].iter().copied())?;

    let mut exclusive = vec![EdgeSet::empty(p); m];
    let mut l = 0;
    let mut window = 1;
    for &(a, b) in &edges[n_common..] {
        exclusive[l].insert(a, b)?;
        l += 1;
        if l >= window {
            l = 0;
            window = (window + 1).min(m);
        }
    }
    let sets = exclusive
        .iter()
        .map(|ex| union_edges(&[common.clone(), ex.clone()]))
        .collect::<Result<Vec<_>>>()?;
    Ok(EdgePartition {
        common,
        exclusive,
        sets,
    })
}

/// Sparse precision matrix with unit diagonal supported on `edges`.
///
/// Off-diagonal entries are drawn from `±U[1/3, 2/3]` in the lower triangle,
/// each row is divided by 1.5 times its absolute off-diagonal sum, and the
/// result is averaged with its transpose. Averaging can push a hub's row sum
/// past 2/3 (its column collects many entries); such rows are rescaled
/// pairwise so every row sum stays at most 2/3. Returns whether that repair
/// was needed.
pub fn gen_precision<R: Rng + ?Sized>(edges: &EdgeSet, rng: &mut R) -> (DMatrix<f64>, bool) {
    let p = edges.p();
    let mut raw = DMatrix::<f64>::zeros(p, p);
    for (j, k) in edges.iter() {
        let magnitude = rng.random_range(1.0 / 3.0..=2.0 / 3.0);
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        raw[(k, j)] = sign * magnitude;
    }
    for row in 0..p {
        let sum: f64 = (0..p).filter(|&c| c != row).map(|c| raw[(row, c)].abs()).sum();
        if sum > 0.0 {
            for c in 0..p {
                if c != row {
                    raw[(row, c)] /= 1.5 * sum;
                }
            }
        }
    }
    let mut omega = (&raw + raw.transpose()) * 0.5;
    for j in 0..p {
        omega[(j, j)] = 1.0;
    }

    let limit = 2.0 / 3.0;
    let row_sums: Vec<f64> = (0..p)
        .map(|r| (0..p).filter(|&c| c != r).map(|c| omega[(r, c)].abs()).sum())
        .collect();
    let repaired = row_sums.iter().any(|s| *s > limit);
    if repaired {
        for a in 0..p {
            for b in 0..p {
                if a != b {
                    let worst = row_sums[a].max(row_sums[b]);
                    if worst > limit {
                        omega[(a, b)] *= limit / worst;
                    }
                }
            }
        }
    }
    (omega, repaired)
}

/// Decay factor `a_l = 3 l^{-1.8}` for the 1-based basis index `l`.
pub fn decay_factor(l: usize) -> f64 {
    3.0 * (l as f64).powf(-1.8)
}

fn invert_spd(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let chol = m
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numerical(format!("{what} is not positive definite")))?;
    let mut inv = chol.inverse();
    symmetrize(&mut inv);
    Ok(inv)
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for a in 0..n {
        for b in a + 1..n {
            let v = 0.5 * (m[(a, b)] + m[(b, a)]);
            m[(a, b)] = v;
            m[(b, a)] = v;
        }
    }
}

/// Score covariance of the simulation model.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaBuild {
    /// `Σ_l`, after any reordering.
    pub blocks: Vec<DMatrix<f64>>,
    /// `Mp × Mp` covariance of the stacked scores, basis-first order
    /// (index `l·p + j`).
    pub full: DMatrix<f64>,
    /// `order[l]` is the original block placed at position `l`.
    pub order: Vec<usize>,
    /// Ridge added to the block-banded precision, if any.
    pub ridge: Option<f64>,
    pub deviations: Vec<String>,
}

/// Partially separable blocks `Σ_l = a_l Ω_l⁻¹`, optionally coupled into the
/// non-separable covariance `D^{1/2} C D^{1/2}`, where `C` is the
/// correlation matrix of the inverse block-banded precision and
/// `D = diag(Σ_ps)`.
pub fn build_sigma(model: CovarianceModel, precisions: &[DMatrix<f64>]) -> Result<SigmaBuild> {
    let m = precisions.len();
    if m == 0 {
        return Err(Error::InvalidInput("no precision blocks".into()));
    }
    let p = precisions[0].nrows();
    let mut deviations = Vec::new();

    let mut blocks = precisions
        .iter()
        .enumerate()
        .map(|(l, omega)| invert_spd(omega, &format!("precision block {}", l + 1)).map(|inv| inv * decay_factor(l + 1)))
        .collect::<Result<Vec<_>>>()?;
    let traces: Vec<f64> = blocks.iter().map(|b| b.trace()).collect();
    let mut order: Vec<usize> = (0..m).collect();
    if traces.windows(2).any(|w| w[1] >= w[0]) {
        order.sort_by(|&a, &b| traces[b].total_cmp(&traces[a]));
        let msg = format!("block traces not strictly decreasing; blocks reordered as {order:?}");
        log::warn!("{msg}");
        deviations.push(msg);
        blocks = order.iter().map(|&i| blocks[i].clone()).collect();
    }

    let dim = m * p;
    let mut full = DMatrix::<f64>::zeros(dim, dim);
    let mut ridge = None;
    match model {
        CovarianceModel::PartiallySeparable => {
            for (l, b) in blocks.iter().enumerate() {
                full.view_mut((l * p, l * p), (p, p)).copy_from(b);
            }
        }
        CovarianceModel::NonSeparable => {
            let ordered: Vec<&DMatrix<f64>> = order.iter().map(|&i| &precisions[i]).collect();
            let off_diag = |om: &DMatrix<f64>| {
                let mut o = om.clone();
                o.fill_diagonal(0.0);
                o
            };
            let mut omega = DMatrix::<f64>::zeros(dim, dim);
            for l in 0..m {
                omega.view_mut((l * p, l * p), (p, p)).copy_from(ordered[l]);
                if l + 1 < m {
                    let band = (off_diag(ordered[l]) + off_diag(ordered[l + 1])) * 0.5;
                    omega.view_mut((l * p, (l + 1) * p), (p, p)).copy_from(&band);
                    omega.view_mut(((l + 1) * p, l * p), (p, p)).copy_from(&band.transpose());
                }
            }
            if omega.clone().cholesky().is_none() {
                let lambda_min = omega.symmetric_eigenvalues().min();
                let delta = lambda_min.abs() + 1e-3;
                for i in 0..dim {
                    omega[(i, i)] += delta;
                }
                let msg = format!("block-banded precision indefinite (min eigenvalue {lambda_min:.3e}); ridge {delta:.3e} added");
                log::warn!("{msg}");
                deviations.push(msg);
                ridge = Some(delta);
            }
            let inv = invert_spd(&omega, "block-banded precision")?;
            let sd: Vec<f64> = (0..dim)
                .map(|i| {
                    let (l, j) = (i / p, i % p);
                    (blocks[l][(j, j)] / inv[(i, i)]).sqrt()
                })
                .collect();
            for a in 0..dim {
                for b in 0..dim {
                    full[(a, b)] = sd[a] * inv[(a, b)] * sd[b];
                }
            }
            for a in 0..dim {
                let (l, j) = (a / p, a % p);
                full[(a, a)] = blocks[l][(j, j)];
            }
        }
    }
    Ok(SigmaBuild {
        blocks,
        full,
        order,
        ridge,
        deviations,
    })
}

/// Simulation ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct TrueModel {
    pub model: CovarianceModel,
    /// `E = ∪ E_l`.
    pub graph: EdgeSet,
    pub common: EdgeSet,
    pub exclusive: Vec<EdgeSet>,
    pub edge_sets: Vec<EdgeSet>,
    pub precisions: Vec<DMatrix<f64>>,
    pub sigma_blocks: Vec<DMatrix<f64>>,
    pub full_sigma: DMatrix<f64>,
    pub noise_var: f64,
    /// Notes about repairs applied while building the model.
    pub deviations: Vec<String>,
}

impl TrueModel {
    pub fn p(&self) -> usize {
        self.graph.p()
    }

    pub fn n_basis(&self) -> usize {
        self.edge_sets.len()
    }

    pub fn block_traces(&self) -> Vec<f64> {
        self.sigma_blocks.iter().map(|b| b.trace()).collect()
    }
}

pub fn generate_model<R: Rng + ?Sized>(config: &SimConfig, rng: &mut R) -> Result<TrueModel> {
    config.validate()?;
    let graph = gen_power_law_graph(config.p, config.pi, rng)?;
    let partition = partition_edges(&graph, config.n_basis, config.tau, rng)?;
    let mut deviations = Vec::new();
    let mut precisions = Vec::with_capacity(config.n_basis);
    for (l, set) in partition.sets.iter().enumerate() {
        let (omega, repaired) = gen_precision(set, rng);
        if repaired {
            deviations.push(format!(
                "precision block {}: rows rescaled to keep off-diagonal sums <= 2/3 after symmetrization",
                l + 1
            ));
        }
        precisions.push(omega);
    }
    let sigma = build_sigma(config.model, &precisions)?;
    deviations.extend(sigma.deviations.iter().cloned());
    let reorder = |v: &[EdgeSet]| sigma.order.iter().map(|&i| v[i].clone()).collect::<Vec<_>>();
    let edge_sets = reorder(&partition.sets);
    let exclusive = reorder(&partition.exclusive);
    let precisions: Vec<DMatrix<f64>> = sigma.order.iter().map(|&i| precisions[i].clone()).collect();
    if let Some(delta) = sigma.ridge {
        log::info!("non-separable model used ridge {delta:.3e}");
    }
    let noise_var = config.noise_fraction * sigma.blocks.iter().map(|b| b.trace()).sum::<f64>() / config.p as f64;
    Ok(TrueModel {
        model: config.model,
        graph,
        common: partition.common,
        exclusive,
        edge_sets,
        precisions,
        sigma_blocks: sigma.blocks,
        full_sigma: sigma.full,
        noise_var,
        deviations,
    })
}

/// Fourier basis on `grid`: `1`, then `√2 sin(2πmt)`, `√2 cos(2πmt)` pairs.
/// Row `l` holds `φ_{l+1}`.
pub fn fourier_basis(m: usize, grid: &TimeGrid) -> DMatrix<f64> {
    let two_pi = 2.0 * std::f64::consts::PI;
    DMatrix::from_fn(m, grid.len(), |l, k| {
        let t = grid.points()[k];
        if l == 0 {
            1.0
        } else {
            let freq = l.div_ceil(2) as f64;
            if l % 2 == 1 {
                std::f64::consts::SQRT_2 * (two_pi * freq * t).sin()
            } else {
                std::f64::consts::SQRT_2 * (two_pi * freq * t).cos()
            }
        }
    })
}

/// `n` draws of the stacked scores `θ_i ∈ R^{Mp}` (basis-first order).
pub fn draw_scores<R: Rng + ?Sized>(model: &TrueModel, n: usize, rng: &mut R) -> Result<DMatrix<f64>> {
    let p = model.p();
    let m = model.n_basis();
    let mut theta = DMatrix::<f64>::zeros(n, m * p);
    match model.model {
        CovarianceModel::PartiallySeparable => {
            let factors = model
                .sigma_blocks
                .iter()
                .map(|b| b.clone().cholesky().map(|c| c.l()))
                .collect::<Option<Vec<_>>>()
                .ok_or_else(|| Error::Numerical("score covariance block is not positive definite".into()))?;
            for i in 0..n {
                for (l, chol) in factors.iter().enumerate() {
                    let z = DVector::<f64>::from_fn(p, |_, _| rng.sample(StandardNormal));
                    let x = chol * z;
                    for j in 0..p {
                        theta[(i, l * p + j)] = x[j];
                    }
                }
            }
        }
        CovarianceModel::NonSeparable => {
            let chol = model
                .full_sigma
                .clone()
                .cholesky()
                .ok_or_else(|| Error::Numerical("score covariance is not positive definite".into()))?
                .l();
            for i in 0..n {
                let z = DVector::<f64>::from_fn(m * p, |_, _| rng.sample(StandardNormal));
                let x = &chol * z;
                for c in 0..m * p {
                    theta[(i, c)] = x[c];
                }
            }
        }
    }
    Ok(theta)
}

/// Noisy curves `Y_ijk = Σ_l θ_ilj φ_l(t_k) + ε_ijk`.
pub fn gen_samples<R: Rng + ?Sized>(model: &TrueModel, config: &SimConfig, rng: &mut R) -> Result<FunctionalDataset> {
    let grid = TimeGrid::uniform(config.n_points)?;
    let basis = fourier_basis(model.n_basis(), &grid);
    let theta = draw_scores(model, config.n, rng)?;
    let (p, m, t) = (model.p(), model.n_basis(), grid.len());
    let noise_sd = model.noise_var.sqrt();
    let mut values = vec![0.0; config.n * p * t];
    for i in 0..config.n {
        for j in 0..p {
            let curve = &mut values[(i * p + j) * t..(i * p + j + 1) * t];
            for l in 0..m {
                let score = theta[(i, l * p + j)];
                for (k, v) in curve.iter_mut().enumerate() {
                    *v += score * basis[(l, k)];
                }
            }
            if noise_sd > 0.0 {
                for v in curve.iter_mut() {
                    *v += noise_sd * rng.sample::<f64, _>(StandardNormal);
                }
            }
        }
    }
    FunctionalDataset::new(grid, config.n, p, values)
}

/// Model and sample from the seeded stream of `config`.
pub fn simulate(config: &SimConfig) -> Result<(FunctionalDataset, TrueModel)> {
    let mut rng = config.rng();
    let model = generate_model(config, &mut rng)?;
    let data = gen_samples(&model, config, &mut rng)?;
    Ok((data, model))
}

/// Seed of replication `rep` derived from a base seed.
pub fn replication_seed(base: u64, rep: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(base);
    rng.set_stream(rep + 1);
    rng.random()
}
