//! Checks of the partial separability assumption.
//!
//! Two diagnostics are provided: a train/validation comparison of variance
//! explained by the pooled basis versus per-component (univariate) FPCA
//! bases, and the cross-basis correlation structure of the stacked scores.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::eigenbasis::{eigendecompose, eigendecompose_kernel, project_scores, EigenBasis};
use crate::error::{Error, Result};
use crate::fdata::{component_covariance, estimate_mean, pooled_covariance, FunctionalDataset, MeanEstimate};

/// FPCA of a single component.
#[derive(Debug, Clone, PartialEq)]
pub struct UnivariateFpca {
    pub component: usize,
    pub basis: EigenBasis,
    /// `n × L` scores `ξ̂_jl`.
    pub scores: DMatrix<f64>,
}

pub fn univariate_fpca(data: &FunctionalDataset, j: usize, l_count: usize) -> Result<UnivariateFpca> {
    let mean = estimate_mean(data);
    univariate_fpca_with_mean(data, &mean, j, l_count)
}

fn univariate_fpca_with_mean(
    data: &FunctionalDataset,
    mean: &MeanEstimate,
    j: usize,
    l_count: usize,
) -> Result<UnivariateFpca> {
    let kernel = component_covariance(data, mean, j)?;
    let basis = eigendecompose_kernel(&kernel, data.grid())?;
    if l_count > basis.len() {
        return Err(Error::InvalidInput(format!(
            "requested {l_count} components but the grid supports {}",
            basis.len()
        )));
    }
    let n = data.n_subjects();
    let w = data.grid().weights();
    let mut scores = DMatrix::zeros(n, l_count);
    for i in 0..n {
        let curve = data.curve(i, j);
        for l in 0..l_count {
            scores[(i, l)] = (0..w.len())
                .map(|k| w[k] * (curve[k] - mean.values[(j, k)]) * basis.eigenfunctions[(l, k)])
                .sum();
        }
    }
    Ok(UnivariateFpca {
        component: j,
        basis,
        scores,
    })
}

/// Univariate scores rearranged basis-first: entry `l` is the `n × p`
/// matrix of `ξ̂_jl` over subjects and components.
pub fn univariate_score_stack(fits: &[UnivariateFpca], l_count: usize) -> Result<Vec<DMatrix<f64>>> {
    let Some(first) = fits.first() else {
        return Err(Error::InvalidInput("no univariate fits".into()));
    };
    let n = first.scores.nrows();
    if fits.iter().any(|f| f.scores.ncols() < l_count) {
        return Err(Error::InvalidInput(format!("fewer than {l_count} univariate scores available")));
    }
    Ok((0..l_count)
        .map(|l| DMatrix::from_fn(n, fits.len(), |i, j| fits[j].scores[(i, l)]))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisMethod {
    Pooled,
    Univariate,
}

impl BasisMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            BasisMethod::Pooled => "pooled",
            BasisMethod::Univariate => "univariate",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitRow {
    pub rep: usize,
    pub method: BasisMethod,
    pub l: usize,
    pub in_ve: f64,
    pub out_ve: f64,
    /// `out_ve / in_ve`.
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SplitReport {
    pub rows: Vec<SplitRow>,
}

impl SplitReport {
    pub fn rows_for(&self, method: BasisMethod, l: usize) -> impl Iterator<Item = &SplitRow> {
        self.rows.iter().filter(move |r| r.method == method && r.l == l)
    }
}

/// Per-component bases used to project curves: either one shared basis or
/// one per component.
enum Projection<'a> {
    Shared(&'a EigenBasis),
    PerComponent(&'a [EigenBasis]),
}

impl Projection<'_> {
    fn basis(&self, j: usize) -> &EigenBasis {
        match self {
            Projection::Shared(b) => b,
            Projection::PerComponent(bs) => &bs[j],
        }
    }
}

/// Cumulative variance explained for `L = 0..=l_max`.
fn variance_explained_curve(
    data: &FunctionalDataset,
    mean: &MeanEstimate,
    projection: &Projection<'_>,
    l_max: usize,
) -> Vec<f64> {
    let (n, p) = (data.n_subjects(), data.n_components());
    let grid = data.grid();
    let mut energy = vec![0.0; l_max + 1];
    let mut total = 0.0;
    let mut centered = vec![0.0; grid.len()];
    for i in 0..n {
        for j in 0..p {
            for (k, v) in data.curve(i, j).iter().enumerate() {
                centered[k] = v - mean.values[(j, k)];
            }
            total += grid.inner(&centered, &centered);
            let basis = projection.basis(j);
            let mut acc = 0.0;
            for l in 0..l_max {
                let c = basis.project(&centered, l);
                acc += c * c;
                energy[l + 1] += acc;
            }
        }
    }
    if total <= 0.0 {
        return vec![0.0; l_max + 1];
    }
    // projections onto prefixes of an orthonormal basis are nondecreasing
    let mut out: Vec<f64> = energy.iter().map(|e| e / total).collect();
    for l in 1..out.len() {
        out[l] = out[l].max(out[l - 1]);
    }
    out
}

/// Variance explained on `data` by the first `l_count` pooled basis
/// functions, measured around `mean`.
pub fn variance_explained(data: &FunctionalDataset, mean: &MeanEstimate, basis: &EigenBasis, l_count: usize) -> f64 {
    variance_explained_curve(data, mean, &Projection::Shared(basis), l_count)[l_count]
}

/// Repeated random half splits: bases and means are estimated on the
/// training half and variance explained is reported on both halves.
pub fn variance_explained_split<R: Rng + ?Sized>(
    data: &FunctionalDataset,
    l_max: usize,
    reps: usize,
    rng: &mut R,
) -> Result<SplitReport> {
    let n = data.n_subjects();
    if n < 4 {
        return Err(Error::InvalidInput(format!("split diagnostics need n >= 4, got {n}")));
    }
    if l_max > data.n_points() {
        return Err(Error::InvalidInput(format!(
            "l_max {l_max} exceeds the grid size {}",
            data.n_points()
        )));
    }
    let n_train = n.div_ceil(2);
    if n % 2 == 1 {
        log::info!("odd sample size {n}: training half gets {n_train} subjects");
    }
    let mut report = SplitReport::default();
    let mut order: Vec<usize> = (0..n).collect();
    for rep in 0..reps {
        order.shuffle(rng);
        let train = data.select_subjects(&order[..n_train])?;
        let valid = data.select_subjects(&order[n_train..])?;
        let mean = estimate_mean(&train);
        let pooled = eigendecompose(&pooled_covariance(&train, &mean)?, train.grid())?;
        let univariate = (0..data.n_components())
            .map(|j| {
                let kernel = component_covariance(&train, &mean, j)?;
                eigendecompose_kernel(&kernel, train.grid())
            })
            .collect::<Result<Vec<_>>>()?;
        for (method, projection) in [
            (BasisMethod::Pooled, Projection::Shared(&pooled)),
            (BasisMethod::Univariate, Projection::PerComponent(&univariate)),
        ] {
            let in_ve = variance_explained_curve(&train, &mean, &projection, l_max);
            let out_ve = variance_explained_curve(&valid, &mean, &projection, l_max);
            for l in 1..=l_max {
                report.rows.push(SplitRow {
                    rep,
                    method,
                    l,
                    in_ve: in_ve[l],
                    out_ve: out_ve[l],
                    ratio: if in_ve[l] > 0.0 { out_ve[l] / in_ve[l] } else { 0.0 },
                });
            }
        }
    }
    Ok(report)
}

/// Absolute correlations of stacked scores in basis-first order.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockCorrelation {
    pub p: usize,
    pub n_bases: usize,
    /// `(L·p) × (L·p)`, index `l·p + j`.
    pub matrix: DMatrix<f64>,
    /// Mean absolute correlation over entries in different basis blocks.
    pub off_block_mean: f64,
}

impl BlockCorrelation {
    /// Upper-left `min(7, L)` basis blocks.
    pub fn leading_view(&self) -> DMatrix<f64> {
        let size = self.n_bases.min(7) * self.p;
        self.matrix.view((0, 0), (size, size)).into_owned()
    }
}

/// `scores[l]` is the `n × p` score matrix of basis `l`.
pub fn cross_correlation_blocks(scores: &[DMatrix<f64>], l_count: usize) -> Result<BlockCorrelation> {
    if l_count == 0 || l_count > scores.len() {
        return Err(Error::InvalidInput(format!(
            "need 1..={} bases, got {l_count}",
            scores.len()
        )));
    }
    let (n, p) = scores[0].shape();
    let dim = l_count * p;
    let mut stacked = DMatrix::zeros(n, dim);
    for (l, s) in scores.iter().take(l_count).enumerate() {
        if s.shape() != (n, p) {
            return Err(Error::DimensionMismatch {
                expected: p,
                found: s.ncols(),
            });
        }
        stacked.view_mut((0, l * p), (n, p)).copy_from(s);
    }
    for c in 0..dim {
        let mean = stacked.column(c).mean();
        stacked.column_mut(c).add_scalar_mut(-mean);
    }
    let cov = stacked.tr_mul(&stacked) / n as f64;
    let sd: Vec<f64> = (0..dim).map(|c| cov[(c, c)].sqrt()).collect();
    if let Some(c) = (0..dim).find(|&c| sd[c] * sd[c] <= 1e-12) {
        return Err(Error::DegenerateVariance {
            basis: c / p,
            component: c % p,
        });
    }
    let matrix = DMatrix::from_fn(dim, dim, |a, b| {
        if a == b {
            1.0
        } else {
            (cov[(a, b)] / (sd[a] * sd[b])).abs().min(1.0)
        }
    });
    let mut off_sum = 0.0;
    let mut off_count = 0usize;
    for a in 0..dim {
        for b in 0..dim {
            if a / p != b / p {
                off_sum += matrix[(a, b)];
                off_count += 1;
            }
        }
    }
    Ok(BlockCorrelation {
        p,
        n_bases: l_count,
        matrix,
        off_block_mean: if off_count > 0 { off_sum / off_count as f64 } else { 0.0 },
    })
}

/// Pooled-basis scores of `data` for the first `l_count` bases.
pub fn pooled_score_stack(data: &FunctionalDataset, l_count: usize) -> Result<Vec<DMatrix<f64>>> {
    let mean = estimate_mean(data);
    let basis = eigendecompose(&pooled_covariance(data, &mean)?, data.grid())?;
    project_scores(data, &mean, &basis, l_count)
}

/// Univariate FPCA scores of every component, basis-first.
pub fn univariate_scores(data: &FunctionalDataset, l_count: usize) -> Result<Vec<DMatrix<f64>>> {
    let mean = estimate_mean(data);
    let fits = (0..data.n_components())
        .map(|j| univariate_fpca_with_mean(data, &mean, j, l_count))
        .collect::<Result<Vec<_>>>()?;
    univariate_score_stack(&fits, l_count)
}
