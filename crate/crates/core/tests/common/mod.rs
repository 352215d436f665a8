//! Independent reference computations shared by the integration tests.

#![allow(dead_code)]

use nalgebra::DMatrix;
use psfggm::fdata::{FunctionalDataset, TimeGrid};
use rand::Rng;
use rand_distr::StandardNormal;

/// Sorted random grid on `[0, 1]` with both endpoints.
pub fn random_grid<R: Rng>(rng: &mut R, t: usize) -> TimeGrid {
    let mut pts: Vec<f64> = (0..t.saturating_sub(2)).map(|_| rng.random_range(0.02..0.98)).collect();
    pts.push(0.0);
    pts.push(1.0);
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    while pts.len() < t {
        // collisions are essentially impossible; pad defensively
        let x = rng.random_range(0.02..0.98);
        if !pts.contains(&x) {
            pts.push(x);
            pts.sort_by(f64::total_cmp);
        }
    }
    TimeGrid::new(pts).unwrap()
}

pub fn random_dataset<R: Rng>(rng: &mut R, grid: TimeGrid, n: usize, p: usize) -> FunctionalDataset {
    let values = (0..n * p * grid.len()).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    FunctionalDataset::new(grid, n, p, values).unwrap()
}

/// Cross-sectional mean of component `j`, computed directly.
pub fn mean_curve(data: &FunctionalDataset, j: usize) -> Vec<f64> {
    let n = data.n_subjects();
    let mut out = vec![0.0; data.n_points()];
    for i in 0..n {
        for (k, v) in data.curve(i, j).iter().enumerate() {
            out[k] += v / n as f64;
        }
    }
    out
}

/// `Ĝ_jk(s, t) = n⁻¹ Σ_i (Y_ij(s) − μ_j(s)) (Y_ik(t) − μ_k(t))`, entry by entry.
pub fn cross_kernel(data: &FunctionalDataset, j: usize, k: usize) -> DMatrix<f64> {
    let t = data.n_points();
    let n = data.n_subjects();
    let (mj, mk) = (mean_curve(data, j), mean_curve(data, k));
    let mut g = DMatrix::zeros(t, t);
    for a in 0..t {
        for b in 0..t {
            let mut acc = 0.0;
            for i in 0..n {
                acc += (data.curve(i, j)[a] - mj[a]) * (data.curve(i, k)[b] - mk[b]);
            }
            g[(a, b)] = acc / n as f64;
        }
    }
    g
}

/// `∫∫ K(s, t) f(s) g(t) ds dt` by the trapezoidal rule on `grid`.
pub fn double_quadrature(kernel: &DMatrix<f64>, f: &[f64], g: &[f64], grid: &TimeGrid) -> f64 {
    let pts = grid.points();
    let t = pts.len();
    let w: Vec<f64> = (0..t)
        .map(|k| {
            let left = if k > 0 { pts[k] - pts[k - 1] } else { 0.0 };
            let right = if k + 1 < t { pts[k + 1] - pts[k] } else { 0.0 };
            0.5 * (left + right)
        })
        .collect();
    let mut acc = 0.0;
    for a in 0..t {
        for b in 0..t {
            acc += w[a] * w[b] * kernel[(a, b)] * f[a] * g[b];
        }
    }
    acc
}

/// Sample correlation matrix of `m` Gaussian draws with a random
/// covariance; positive definite when `m > p`.
pub fn random_correlation<R: Rng>(rng: &mut R, p: usize, m: usize) -> DMatrix<f64> {
    let scale = 0.6 / (p as f64).sqrt();
    let mix = DMatrix::identity(p, p) + DMatrix::from_fn(p, p, |_, _| scale * rng.sample::<f64, _>(StandardNormal));
    let x = DMatrix::from_fn(m, p, |_, _| rng.sample::<f64, _>(StandardNormal)) * mix;
    let mean = x.row_mean();
    let centered = DMatrix::from_fn(m, p, |i, j| x[(i, j)] - mean[j]);
    let cov = centered.tr_mul(&centered) / m as f64;
    let d: Vec<f64> = (0..p).map(|j| cov[(j, j)].sqrt()).collect();
    let mut r = DMatrix::from_fn(p, p, |a, b| cov[(a, b)] / (d[a] * d[b]));
    for a in 0..p {
        r[(a, a)] = 1.0;
        for b in a + 1..p {
            let v = 0.5 * (r[(a, b)] + r[(b, a)]);
            r[(a, b)] = v;
            r[(b, a)] = v;
        }
    }
    r
}

fn soft(x: f64, t: f64) -> f64 {
    x.signum() * (x.abs() - t).max(0.0)
}

/// Single-matrix graphical lasso with unpenalized diagonal, by block
/// coordinate descent on the covariance `W` (lasso subproblems solved by
/// cyclic coordinate descent).
pub fn glasso(s: &DMatrix<f64>, lambda: f64, tol: f64) -> DMatrix<f64> {
    let p = s.nrows();
    let mut w = s.clone();
    let mut betas = vec![vec![0.0; p - 1]; p];
    for _sweep in 0..10_000 {
        let w_old = w.clone();
        for j in 0..p {
            let others: Vec<usize> = (0..p).filter(|&k| k != j).collect();
            let beta = &mut betas[j];
            for _ in 0..10_000 {
                let mut delta: f64 = 0.0;
                for (a, &ka) in others.iter().enumerate() {
                    let mut r = s[(ka, j)];
                    for (b, &kb) in others.iter().enumerate() {
                        if b != a {
                            r -= w[(ka, kb)] * beta[b];
                        }
                    }
                    let new = soft(r, lambda) / w[(ka, ka)];
                    delta = delta.max((new - beta[a]).abs());
                    beta[a] = new;
                }
                if delta < tol * 1e-2 {
                    break;
                }
            }
            for &ka in &others {
                let v: f64 = others.iter().enumerate().map(|(b, &kb)| w[(ka, kb)] * beta[b]).sum();
                w[(ka, j)] = v;
                w[(j, ka)] = v;
            }
        }
        if (&w - &w_old).amax() < tol {
            break;
        }
    }
    let mut theta = DMatrix::zeros(p, p);
    for j in 0..p {
        let others: Vec<usize> = (0..p).filter(|&k| k != j).collect();
        let beta = &betas[j];
        let dot: f64 = others.iter().enumerate().map(|(b, &kb)| w[(kb, j)] * beta[b]).sum();
        let tjj = 1.0 / (w[(j, j)] - dot);
        theta[(j, j)] = tjj;
        for (a, &ka) in others.iter().enumerate() {
            theta[(ka, j)] = -beta[a] * tjj;
        }
    }
    // column-wise recovery is symmetric only up to the solver tolerance
    (&theta + theta.transpose()) * 0.5
}

/// Distance of `0` from the subdifferential of the joint graphical lasso
/// objective at `xi`, with the zero pattern taken from `z`.
pub fn kkt_violation(
    correlations: &[DMatrix<f64>],
    xi: &[DMatrix<f64>],
    z: &[DMatrix<f64>],
    gamma: f64,
    alpha: f64,
) -> f64 {
    let l_count = correlations.len();
    let p = correlations[0].nrows();
    let inv: Vec<DMatrix<f64>> = xi.iter().map(|m| m.clone().try_inverse().unwrap()).collect();
    let mut worst: f64 = 0.0;
    for l in 0..l_count {
        for a in 0..p {
            worst = worst.max((correlations[l][(a, a)] - inv[l][(a, a)]).abs());
        }
    }
    for a in 0..p {
        for b in 0..p {
            if a == b {
                continue;
            }
            // stationarity requires Ξ⁻¹ − R ∈ γ ∂P
            let g: Vec<f64> = (0..l_count).map(|l| inv[l][(a, b)] - correlations[l][(a, b)]).collect();
            let zs: Vec<f64> = (0..l_count).map(|l| z[l][(a, b)]).collect();
            let norm = zs.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 {
                let shrunk = g.iter().map(|v| soft(*v, gamma * alpha).powi(2)).sum::<f64>().sqrt();
                worst = worst.max((shrunk - gamma * (1.0 - alpha)).max(0.0));
            } else {
                for l in 0..l_count {
                    let v = if zs[l] != 0.0 {
                        (g[l] - gamma * alpha * zs[l].signum() - gamma * (1.0 - alpha) * zs[l] / norm).abs()
                    } else {
                        (g[l].abs() - gamma * alpha).max(0.0)
                    };
                    worst = worst.max(v);
                }
            }
        }
    }
    worst
}

/// Symmetric permutation `P M Pᵀ` with `out[(a, b)] = m[(perm[a], perm[b])]`.
pub fn permute(m: &DMatrix<f64>, perm: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |a, b| m[(perm[a], perm[b])])
}

/// Quadrature Gram–Schmidt of random functions on `grid`.
pub fn random_orthonormal<R: Rng>(rng: &mut R, grid: &TimeGrid, l: usize) -> Vec<Vec<f64>> {
    let t = grid.len();
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(l);
    while out.len() < l {
        let mut f: Vec<f64> = (0..t).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        for g in &out {
            let c = grid.inner(&f, g);
            f.iter_mut().zip(g).for_each(|(x, y)| *x -= c * y);
        }
        let norm = grid.inner(&f, &f).sqrt();
        if norm > 1e-8 {
            f.iter_mut().for_each(|x| *x /= norm);
            out.push(f);
        }
    }
    out
}
