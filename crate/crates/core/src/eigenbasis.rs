//! Eigenbasis of the pooled covariance and the per-basis score matrices.
//!
//! The covariance operator is discretized with the trapezoidal weights `W`
//! of the grid, so its eigenproblem becomes the symmetric problem
//! `W^{1/2} H W^{1/2} u = λ u` with eigenfunctions `φ = W^{-1/2} u`. The
//! resulting functions are orthonormal under the same quadrature rule that
//! is used to compute scores.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::fdata::{FunctionalDataset, MeanEstimate, PooledCovariance, TimeGrid};

/// Eigenvalues below this fraction of the leading one count as zero.
const ZERO_EIGENVALUE_RATIO: f64 = 1e-12;

/// Score variances at or below this value make a basis unusable.
const MIN_SCORE_VARIANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct EigenBasis {
    /// Nonincreasing and nonnegative.
    pub eigenvalues: Vec<f64>,
    /// Row `l` holds `φ_l` evaluated on the grid.
    pub eigenfunctions: DMatrix<f64>,
    pub grid: TimeGrid,
}

impl EigenBasis {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn function(&self, l: usize) -> Vec<f64> {
        self.eigenfunctions.row(l).iter().copied().collect()
    }

    /// Quadrature inner product `⟨f, φ_l⟩`.
    pub fn project(&self, f: &[f64], l: usize) -> f64 {
        let w = self.grid.weights();
        (0..w.len())
            .map(|k| w[k] * f[k] * self.eigenfunctions[(l, k)])
            .sum()
    }

    /// Cumulative fraction of total variance retained by the first `l + 1`
    /// eigenvalues, for each `l`.
    pub fn cumulative_fractions(&self) -> Vec<f64> {
        let total: f64 = self.eigenvalues.iter().sum();
        let mut acc = 0.0;
        self.eigenvalues
            .iter()
            .map(|v| {
                acc += v;
                if total > 0.0 {
                    acc / total
                } else {
                    0.0
                }
            })
            .collect()
    }

    /// `Σ_l λ_l φ_l(s) φ_l(t)` on the grid.
    pub fn reconstruct_kernel(&self) -> DMatrix<f64> {
        let t = self.grid.len();
        let mut kernel = DMatrix::zeros(t, t);
        for (l, lambda) in self.eigenvalues.iter().enumerate() {
            let phi = self.eigenfunctions.row(l);
            kernel += phi.transpose() * phi * *lambda;
        }
        kernel
    }
}

pub fn eigendecompose(h: &PooledCovariance, grid: &TimeGrid) -> Result<EigenBasis> {
    eigendecompose_kernel(&h.kernel, grid)
}

/// Eigendecomposition of any symmetric covariance kernel sampled on `grid`.
pub fn eigendecompose_kernel(kernel: &DMatrix<f64>, grid: &TimeGrid) -> Result<EigenBasis> {
    let t = grid.len();
    if kernel.nrows() != t || kernel.ncols() != t {
        return Err(Error::DimensionMismatch {
            expected: t,
            found: kernel.nrows(),
        });
    }
    if kernel.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("covariance kernel has non-finite entries".into()));
    }
    let sqrt_w: Vec<f64> = grid.weights().iter().map(|w| w.sqrt()).collect();
    let weighted = DMatrix::from_fn(t, t, |a, b| sqrt_w[a] * kernel[(a, b)] * sqrt_w[b]);
    let eig = SymmetricEigen::new(weighted);
    if eig.eigenvalues.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("eigensolver returned non-finite values".into()));
    }

    let mut order: Vec<usize> = (0..t).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let mut eigenvalues = Vec::with_capacity(t);
    let mut eigenfunctions = DMatrix::zeros(t, t);
    for (row, &idx) in order.iter().enumerate() {
        eigenvalues.push(eig.eigenvalues[idx].max(0.0));
        let u = eig.eigenvectors.column(idx);
        let mut phi: Vec<f64> = (0..t).map(|k| u[k] / sqrt_w[k]).collect();
        let pivot = phi
            .iter()
            .enumerate()
            .fold(0, |best, (k, v)| if v.abs() > phi[best].abs() { k } else { best });
        if phi[pivot] < 0.0 {
            phi.iter_mut().for_each(|v| *v = -*v);
        }
        for (k, v) in phi.into_iter().enumerate() {
            eigenfunctions[(row, k)] = v;
        }
    }
    Ok(EigenBasis {
        eigenvalues,
        eigenfunctions,
        grid: grid.clone(),
    })
}

/// Smallest `L` whose leading eigenvalues explain at least `threshold` of
/// the total variance.
pub fn select_truncation(basis: &EigenBasis, threshold: f64) -> Result<usize> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "variance threshold must lie in (0, 1], got {threshold}"
        )));
    }
    let leading = basis.eigenvalues.first().copied().unwrap_or(0.0);
    if leading <= 0.0 {
        return Err(Error::DegenerateSpectrum);
    }
    let cutoff = ZERO_EIGENVALUE_RATIO * leading;
    let retained: Vec<f64> = basis
        .eigenvalues
        .iter()
        .copied()
        .take_while(|v| *v >= cutoff)
        .collect();
    let total: f64 = retained.iter().sum();
    let mut acc = 0.0;
    for (l, v) in retained.iter().enumerate() {
        acc += v;
        // Relative slack absorbs rounding in the cumulative sum at threshold 1.
        if acc >= threshold * total * (1.0 - 1e-12) {
            return Ok(l + 1);
        }
    }
    Ok(retained.len())
}

/// Per-basis scores `θ_l` (`n × p` each) with their covariance and
/// correlation matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSet {
    pub scores: Vec<DMatrix<f64>>,
    pub covariances: Vec<DMatrix<f64>>,
    pub correlations: Vec<DMatrix<f64>>,
}

impl ScoreSet {
    pub fn n_bases(&self) -> usize {
        self.scores.len()
    }
}

/// Raw scores `θ_ilj = ⟨X_ij − μ_j, φ_l⟩` for the first `l_count` bases.
pub fn project_scores(
    data: &FunctionalDataset,
    mean: &MeanEstimate,
    basis: &EigenBasis,
    l_count: usize,
) -> Result<Vec<DMatrix<f64>>> {
    if l_count > basis.len() {
        return Err(Error::InvalidInput(format!(
            "requested {l_count} bases but only {} are available",
            basis.len()
        )));
    }
    if basis.grid != *data.grid() {
        return Err(Error::GridMismatch("basis and data use different grids".into()));
    }
    let (n, p, t) = (data.n_subjects(), data.n_components(), data.n_points());
    let w = data.grid().weights();
    // Weighted eigenfunctions as a T × L matrix so each curve needs one product.
    let phi_w = DMatrix::from_fn(t, l_count, |k, l| w[k] * basis.eigenfunctions[(l, k)]);
    let mut centered = DMatrix::zeros(n * p, t);
    for i in 0..n {
        for j in 0..p {
            for (k, v) in data.curve(i, j).iter().enumerate() {
                centered[(i * p + j, k)] = v - mean.values[(j, k)];
            }
        }
    }
    let all = centered * phi_w;
    Ok((0..l_count)
        .map(|l| DMatrix::from_fn(n, p, |i, j| all[(i * p + j, l)]))
        .collect())
}

pub fn compute_scores(
    data: &FunctionalDataset,
    mean: &MeanEstimate,
    basis: &EigenBasis,
    l_count: usize,
) -> Result<ScoreSet> {
    let scores = project_scores(data, mean, basis, l_count)?;
    let n = data.n_subjects() as f64;
    let mut covariances = Vec::with_capacity(l_count);
    let mut correlations = Vec::with_capacity(l_count);
    for (l, theta) in scores.iter().enumerate() {
        let mut cov = theta.tr_mul(theta) / n;
        let p = cov.nrows();
        for a in 0..p {
            for b in a + 1..p {
                let v = 0.5 * (cov[(a, b)] + cov[(b, a)]);
                cov[(a, b)] = v;
                cov[(b, a)] = v;
            }
        }
        if let Some(j) = (0..p).find(|&j| cov[(j, j)] <= MIN_SCORE_VARIANCE) {
            return Err(Error::DegenerateVariance {
                basis: l,
                component: j,
            });
        }
        correlations.push(correlation_from_covariance(&cov));
        covariances.push(cov);
    }
    Ok(ScoreSet {
        scores,
        covariances,
        correlations,
    })
}

/// `D^{-1/2} S D^{-1/2}` with an exactly unit diagonal.
pub fn correlation_from_covariance(cov: &DMatrix<f64>) -> DMatrix<f64> {
    let p = cov.nrows();
    let inv_sd: Vec<f64> = (0..p).map(|j| 1.0 / cov[(j, j)].sqrt()).collect();
    DMatrix::from_fn(p, p, |a, b| {
        if a == b {
            1.0
        } else {
            (cov[(a, b)] * inv_sd[a] * inv_sd[b]).clamp(-1.0, 1.0)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn basis_for(kernel: DMatrix<f64>, grid: &TimeGrid) -> EigenBasis {
        eigendecompose(&PooledCovariance { kernel }, grid).unwrap()
    }

    #[test]
    fn rank_one_kernel() {
        let grid = TimeGrid::uniform(11).unwrap();
        let raw: Vec<f64> = grid.points().iter().map(|t| 1.0 + t * t).collect();
        let norm = grid.inner(&raw, &raw).sqrt();
        let phi: Vec<f64> = raw.iter().map(|v| -v / norm).collect();
        let kernel = DMatrix::from_fn(11, 11, |a, b| phi[a] * phi[b]);
        let basis = basis_for(kernel, &grid);
        assert_abs_diff_eq!(basis.eigenvalues[0], 1.0, epsilon = 1e-12);
        assert!(basis.eigenvalues[1..].iter().all(|v| *v < 1e-12));
        for k in 0..11 {
            // the sign convention flips the negative input back to positive
            assert_abs_diff_eq!(basis.eigenfunctions[(0, k)], -phi[k], epsilon = 1e-10);
        }
    }

    #[test]
    fn zero_kernel_all_zero() {
        let grid = TimeGrid::uniform(5).unwrap();
        let basis = basis_for(DMatrix::zeros(5, 5), &grid);
        assert!(basis.eigenvalues.iter().all(|v| *v == 0.0));
        assert!(matches!(
            select_truncation(&basis, 0.9),
            Err(Error::DegenerateSpectrum)
        ));
    }

    #[test]
    fn random_kernel_reassembles() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let grid = TimeGrid::new(vec![0.0, 0.1, 0.3, 0.35, 0.6, 0.8, 1.0]).unwrap();
        let a = DMatrix::from_fn(7, 4, |_, _| rng.random_range(-1.0..1.0));
        let kernel = &a * a.transpose();
        let basis = basis_for(kernel.clone(), &grid);
        assert!((basis.reconstruct_kernel() - &kernel).amax() < 1e-8);
        assert!(basis.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
        for l in 0..7 {
            for m in 0..7 {
                let ip = grid.inner(&basis.function(l), &basis.function(m));
                assert_abs_diff_eq!(ip, if l == m { 1.0 } else { 0.0 }, epsilon = 1e-8);
            }
            let phi = basis.function(l);
            let max = phi.iter().cloned().fold(0.0f64, |a, b| if b.abs() > a.abs() { b } else { a });
            assert!(max > 0.0);
        }
    }

    #[test]
    fn non_finite_kernel_rejected() {
        let grid = TimeGrid::uniform(3).unwrap();
        let mut k = DMatrix::zeros(3, 3);
        k[(1, 1)] = f64::NAN;
        assert!(matches!(
            eigendecompose(&PooledCovariance { kernel: k }, &grid),
            Err(Error::Numerical(_))
        ));
    }

    fn with_eigenvalues(values: &[f64]) -> EigenBasis {
        let grid = TimeGrid::uniform(values.len()).unwrap();
        EigenBasis {
            eigenvalues: values.to_vec(),
            eigenfunctions: DMatrix::identity(values.len(), values.len()),
            grid,
        }
    }

    #[test]
    fn truncation_examples() {
        assert_eq!(select_truncation(&with_eigenvalues(&[0.7, 0.2, 0.1]), 0.9).unwrap(), 2);
        assert_eq!(select_truncation(&with_eigenvalues(&[0.5, 0.3, 0.2, 0.0]), 1.0).unwrap(), 3);
        assert_eq!(select_truncation(&with_eigenvalues(&[1.0, 0.0, 0.0]), 0.5).unwrap(), 1);
        assert_eq!(select_truncation(&with_eigenvalues(&[0.1, 0.1, 0.1]), 1.0).unwrap(), 3);
        assert!(select_truncation(&with_eigenvalues(&[1.0, 0.5]), 0.0).is_err());
    }

    fn dataset_from(n: usize, p: usize, grid: &TimeGrid, f: impl Fn(usize, usize, usize) -> f64) -> FunctionalDataset {
        let t = grid.len();
        let values = (0..n)
            .flat_map(|i| (0..p).flat_map(move |j| (0..t).map(move |k| (i, j, k))))
            .map(|(i, j, k)| f(i, j, k))
            .collect();
        FunctionalDataset::new(grid.clone(), n, p, values).unwrap()
    }

    #[test]
    fn constant_scores_are_degenerate() {
        let grid = TimeGrid::uniform(9).unwrap();
        let basis = basis_for(DMatrix::identity(9, 9), &grid);
        let phi = basis.function(0);
        let data = dataset_from(3, 2, &grid, |_, _, k| 2.5 * phi[k]);
        let mean = MeanEstimate {
            values: DMatrix::zeros(2, 9),
        };
        let raw = project_scores(&data, &mean, &basis, 1).unwrap();
        assert!(raw[0].iter().all(|v| (v - 2.5).abs() < 1e-12));
        let mean = crate::fdata::estimate_mean(&data);
        assert!(matches!(
            compute_scores(&data, &mean, &basis, 1),
            Err(Error::DegenerateVariance { basis: 0, component: 0 })
        ));
    }

    #[test]
    fn plus_minus_scores_have_unit_variance() {
        let grid = TimeGrid::uniform(9).unwrap();
        let raw: Vec<f64> = grid.points().iter().map(|t| (3.0 * t).sin() + 0.5).collect();
        let norm = grid.inner(&raw, &raw).sqrt();
        let phi: Vec<f64> = raw.iter().map(|v| v / norm).collect();
        let z = [1.0, -1.0];
        let data = dataset_from(2, 1, &grid, |i, _, k| z[i] * phi[k]);
        let mean = crate::fdata::estimate_mean(&data);
        let h = crate::fdata::pooled_covariance(&data, &mean).unwrap();
        let basis = eigendecompose(&h, &grid).unwrap();
        let scores = compute_scores(&data, &mean, &basis, 1).unwrap();
        assert_abs_diff_eq!(scores.covariances[0][(0, 0)], 1.0, epsilon = 1e-12);
        assert_eq!(scores.correlations[0][(0, 0)], 1.0);
    }
}
