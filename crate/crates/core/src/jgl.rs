//! Joint graphical lasso over the per-basis correlation matrices.
//!
//! Minimizes
//!
//! ```text
//! Σ_l { tr(R_l Υ_l) − log det Υ_l }
//!   + γ { α Σ_l Σ_{j≠k} |υ_ljk| + (1 − α) Σ_{j≠k} ‖(υ_1jk, …, υ_Ljk)‖₂ }
//! ```
//!
//! with scaled ADMM on the split `Θ_l = Z_l`. `Θ` carries the positive
//! definite estimates; `Z` is the output of the proximal step and carries
//! exact zeros, so edges are read from `Z`.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Residual balancing keeps `ρ` within this factor of its configured value.
const RHO_RANGE: f64 = 1e4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyConfig {
    /// Overall penalty level `γ ≥ 0`.
    pub gamma: f64,
    /// Lasso share of the penalty, `α ∈ [0, 1]`; the rest is group lasso.
    pub alpha: f64,
    /// ADMM step size.
    pub rho: f64,
    pub eps_abs: f64,
    pub eps_rel: f64,
    pub max_iter: usize,
    /// Residual balancing: double or halve `ρ` when one residual exceeds
    /// the other tenfold.
    pub adaptive_rho: bool,
}

impl Default for PenaltyConfig {
    fn default() -> Self {
        Self {
            gamma: 0.0,
            alpha: 1.0,
            rho: 1.0,
            eps_abs: 1e-6,
            eps_rel: 1e-5,
            max_iter: 2000,
            adaptive_rho: false,
        }
    }
}

impl PenaltyConfig {
    pub fn with_penalty(gamma: f64, alpha: f64) -> Self {
        Self {
            gamma,
            alpha,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidInput(format!("gamma must be >= 0, got {}", self.gamma)));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidInput(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(Error::InvalidInput(format!("rho must be > 0, got {}", self.rho)));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidInput("max_iter must be >= 1".into()));
        }
        if !(self.eps_abs >= 0.0 && self.eps_rel >= 0.0) {
            return Err(Error::InvalidInput("tolerances must be nonnegative".into()));
        }
        Ok(())
    }
}

/// The `L` estimated correlation matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct JglProblem {
    correlations: Vec<DMatrix<f64>>,
}

impl JglProblem {
    pub fn new(correlations: Vec<DMatrix<f64>>) -> Result<Self> {
        let Some(first) = correlations.first() else {
            return Err(Error::InvalidInput("at least one correlation matrix is required".into()));
        };
        let p = first.nrows();
        for (l, r) in correlations.iter().enumerate() {
            if r.nrows() != p || r.ncols() != p {
                return Err(Error::DimensionMismatch {
                    expected: p,
                    found: r.nrows().max(r.ncols()),
                });
            }
            if r.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numerical(format!("correlation matrix {l} is not finite")));
            }
            for a in 0..p {
                if r[(a, a)] != 1.0 {
                    return Err(Error::InvalidInput(format!(
                        "correlation matrix {l} has diagonal entry {} at {a}",
                        r[(a, a)]
                    )));
                }
                for b in a + 1..p {
                    if (r[(a, b)] - r[(b, a)]).abs() > 1e-10 {
                        return Err(Error::InvalidInput(format!(
                            "correlation matrix {l} is not symmetric at ({a}, {b})"
                        )));
                    }
                }
            }
        }
        Ok(Self { correlations })
    }

    pub fn correlations(&self) -> &[DMatrix<f64>] {
        &self.correlations
    }

    pub fn n_bases(&self) -> usize {
        self.correlations.len()
    }

    pub fn dim(&self) -> usize {
        self.correlations[0].nrows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JglSolution {
    /// Positive definite estimates `Ξ̂_l` (the `Θ` iterates).
    pub xi: Vec<DMatrix<f64>>,
    /// Consensus copies with exact zeros (the `Z` iterates).
    pub z: Vec<DMatrix<f64>>,
    /// Scaled dual variables, kept for warm starts.
    pub dual: Vec<DMatrix<f64>>,
    /// Step size in effect at the last iteration.
    pub rho: f64,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub converged: bool,
    /// Objective at the final `Θ` iterate.
    pub objective: f64,
    /// Iterations at which the monitored objective rose by more than
    /// `1e-8·|objective|`; ADMM does not guarantee monotone descent.
    pub objective_increases: usize,
}

/// Sparse-group soft thresholding of one off-diagonal group across bases.
pub fn prox_penalty(v: &[f64], gamma: f64, alpha: f64, rho: f64) -> Vec<f64> {
    let mut out = v.to_vec();
    prox_penalty_in_place(&mut out, gamma, alpha, rho);
    out
}

pub fn prox_penalty_in_place(v: &mut [f64], gamma: f64, alpha: f64, rho: f64) {
    let lasso = gamma * alpha / rho;
    let group = gamma * (1.0 - alpha) / rho;
    let mut norm_sq = 0.0;
    for x in v.iter_mut() {
        *x = x.signum() * (x.abs() - lasso).max(0.0);
        norm_sq += *x * *x;
    }
    if norm_sq == 0.0 {
        v.iter_mut().for_each(|x| *x = 0.0);
        return;
    }
    let scale = (1.0 - group / norm_sq.sqrt()).max(0.0);
    v.iter_mut().for_each(|x| *x *= scale);
}

/// Value of the penalty at a set of matrices; diagonals are unpenalized.
pub fn penalty_value(mats: &[DMatrix<f64>], gamma: f64, alpha: f64) -> f64 {
    let p = mats[0].nrows();
    let mut lasso = 0.0;
    let mut group = 0.0;
    for a in 0..p {
        for b in 0..p {
            if a == b {
                continue;
            }
            let mut sq = 0.0;
            for m in mats {
                lasso += m[(a, b)].abs();
                sq += m[(a, b)] * m[(a, b)];
            }
            group += sq.sqrt();
        }
    }
    gamma * (alpha * lasso + (1.0 - alpha) * group)
}

/// Penalized objective at positive definite `thetas`.
pub fn objective(problem: &JglProblem, thetas: &[DMatrix<f64>], config: &PenaltyConfig) -> Result<f64> {
    let mut total = 0.0;
    for (r, theta) in problem.correlations.iter().zip(thetas) {
        let chol = theta
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Numerical("estimate is not positive definite".into()))?;
        let log_det = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        total += r.dot(theta) - log_det;
    }
    Ok(total + penalty_value(thetas, config.gamma, config.alpha))
}

fn frob_sq(mats: &[DMatrix<f64>]) -> f64 {
    mats.iter().map(|m| m.norm_squared()).sum()
}

/// Solves from the cold start `Θ = Z = I`, `U = 0`.
pub fn solve(problem: &JglProblem, config: &PenaltyConfig) -> Result<JglSolution> {
    solve_from(problem, config, None)
}

/// Solves starting from a previous solution's `(Θ, Z, U, ρ)` when given.
pub fn solve_from(
    problem: &JglProblem,
    config: &PenaltyConfig,
    warm: Option<&JglSolution>,
) -> Result<JglSolution> {
    config.validate()?;
    let (l_count, p) = (problem.n_bases(), problem.dim());
    let (mut theta, mut z, mut u, mut rho) = match warm {
        Some(w) => {
            if w.xi.len() != l_count || w.xi[0].nrows() != p {
                return Err(Error::DimensionMismatch {
                    expected: l_count,
                    found: w.xi.len(),
                });
            }
            (w.xi.clone(), w.z.clone(), w.dual.clone(), w.rho)
        }
        None => (
            vec![DMatrix::<f64>::identity(p, p); l_count],
            vec![DMatrix::<f64>::identity(p, p); l_count],
            vec![DMatrix::<f64>::zeros(p, p); l_count],
            config.rho,
        ),
    };
    if !config.adaptive_rho && warm.is_some() && rho != config.rho {
        // stored duals are scaled by the step they were computed with
        let ratio = rho / config.rho;
        u.iter_mut().for_each(|m| *m *= ratio);
        rho = config.rho;
    }

    let scale = ((l_count * p * p) as f64).sqrt();
    let mut z_prev = z.clone();
    let mut group = vec![0.0; l_count];
    let mut log_dets = vec![0.0; l_count];
    let mut last_objective = f64::INFINITY;
    let mut objective_increases = 0;
    let mut primal = f64::INFINITY;
    let mut dual = f64::INFINITY;
    let mut converged = false;
    let mut iterations = 0;

    for iter in 1..=config.max_iter {
        iterations = iter;

        // Θ_l = argmin tr(R Θ) − log det Θ + ρ/2 ‖Θ − Z + U‖²
        theta
            .par_iter_mut()
            .zip(log_dets.par_iter_mut())
            .enumerate()
            .try_for_each(|(l, (theta_l, log_det))| -> Result<()> {
                let target = (&z[l] - &u[l]) * rho - &problem.correlations[l];
                let eig = SymmetricEigen::new(target);
                if eig.eigenvalues.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Numerical(format!("non-finite eigenvalues in basis {l}")));
                }
                let d = eig
                    .eigenvalues
                    .map(|lam| (lam + (lam * lam + 4.0 * rho).sqrt()) / (2.0 * rho));
                *log_det = d.iter().map(|v| v.ln()).sum();
                let q = &eig.eigenvectors;
                let mut qd = q.clone();
                for (c, dc) in d.iter().enumerate() {
                    qd.column_mut(c).scale_mut(*dc);
                }
                *theta_l = &qd * q.transpose();
                Ok(())
            })?;

        std::mem::swap(&mut z, &mut z_prev);
        for l in 0..l_count {
            for a in 0..p {
                z[l][(a, a)] = theta[l][(a, a)] + u[l][(a, a)];
            }
        }
        for a in 0..p {
            for b in a + 1..p {
                for l in 0..l_count {
                    let ab = theta[l][(a, b)] + u[l][(a, b)];
                    let ba = theta[l][(b, a)] + u[l][(b, a)];
                    group[l] = 0.5 * (ab + ba);
                }
                prox_penalty_in_place(&mut group, config.gamma, config.alpha, rho);
                for l in 0..l_count {
                    z[l][(a, b)] = group[l];
                    z[l][(b, a)] = group[l];
                }
            }
        }

        let mut r_sq = 0.0;
        let mut s_sq = 0.0;
        for l in 0..l_count {
            let diff = &theta[l] - &z[l];
            r_sq += diff.norm_squared();
            s_sq += (&z[l] - &z_prev[l]).norm_squared();
            u[l] += diff;
        }
        primal = r_sq.sqrt();
        dual = rho * s_sq.sqrt();
        if !primal.is_finite() || !dual.is_finite() {
            return Err(Error::Numerical(format!("non-finite residual at iteration {iter}")));
        }

        let obj: f64 = problem
            .correlations
            .iter()
            .zip(&theta)
            .zip(&log_dets)
            .map(|((r, t), ld)| r.dot(t) - ld)
            .sum::<f64>()
            + penalty_value(&theta, config.gamma, config.alpha);
        if obj > last_objective + 1e-8 * obj.abs().max(1.0) {
            objective_increases += 1;
        }
        last_objective = obj;

        let eps_pri = scale * config.eps_abs
            + config.eps_rel * frob_sq(&theta).sqrt().max(frob_sq(&z).sqrt());
        let eps_dual = scale * config.eps_abs + config.eps_rel * rho * frob_sq(&u).sqrt();
        if primal <= eps_pri && dual <= eps_dual {
            converged = true;
            break;
        }

        if config.adaptive_rho {
            let factor = if primal > 10.0 * dual {
                2.0
            } else if dual > 10.0 * primal {
                0.5
            } else {
                1.0
            };
            let bounded = (rho * factor).clamp(RHO_RANGE.recip() * config.rho, RHO_RANGE * config.rho);
            let factor = bounded / rho;
            if factor != 1.0 {
                rho *= factor;
                u.iter_mut().for_each(|m| *m /= factor);
            }
        }
    }

    if !converged {
        log::debug!(
            "joint graphical lasso stopped after {iterations} iterations (primal {primal:.3e}, dual {dual:.3e})"
        );
    }
    if objective_increases > 0 {
        log::trace!("objective rose on {objective_increases} iterations");
    }
    Ok(JglSolution {
        xi: theta,
        z,
        dual: u,
        rho,
        iterations,
        primal_residual: primal,
        dual_residual: dual,
        converged,
        objective: last_objective,
        objective_increases,
    })
}

/// Largest violation of the stationarity condition
/// `R_l − Ξ_l⁻¹ + γ ∂P ∋ 0`, with the subgradient set taken at the zero
/// pattern of `Z`.
pub fn kkt_residual(problem: &JglProblem, solution: &JglSolution, config: &PenaltyConfig) -> Result<f64> {
    let (l_count, p) = (problem.n_bases(), problem.dim());
    if solution.xi.len() != l_count || solution.z.len() != l_count {
        return Err(Error::DimensionMismatch {
            expected: l_count,
            found: solution.xi.len(),
        });
    }
    let mut inverses = Vec::with_capacity(l_count);
    for (l, xi) in solution.xi.iter().enumerate() {
        let chol = xi
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Numerical(format!("estimate {l} is singular or indefinite")))?;
        inverses.push(chol.inverse());
    }
    let (gamma, alpha) = (config.gamma, config.alpha);
    let lasso = gamma * alpha;
    let ball = gamma * (1.0 - alpha);
    let mut worst: f64 = 0.0;
    let mut g = vec![0.0; l_count];
    for a in 0..p {
        for l in 0..l_count {
            let diag = problem.correlations[l][(a, a)] - inverses[l][(a, a)];
            worst = worst.max(diag.abs());
        }
        for b in 0..p {
            if a == b {
                continue;
            }
            // g is the subgradient the stationarity condition asks for.
            for l in 0..l_count {
                g[l] = inverses[l][(a, b)] - problem.correlations[l][(a, b)];
            }
            let zs: Vec<f64> = (0..l_count).map(|l| solution.z[l][(a, b)]).collect();
            let z_norm = zs.iter().map(|v| v * v).sum::<f64>().sqrt();
            if z_norm == 0.0 {
                let soft_sq: f64 = g.iter().map(|v| (v.abs() - lasso).max(0.0).powi(2)).sum();
                worst = worst.max((soft_sq.sqrt() - ball).max(0.0));
            } else {
                for l in 0..l_count {
                    let violation = if zs[l] != 0.0 {
                        (g[l] - lasso * zs[l].signum() - ball * zs[l] / z_norm).abs()
                    } else {
                        (g[l].abs() - lasso).max(0.0)
                    };
                    worst = worst.max(violation);
                }
            }
        }
    }
    Ok(worst)
}
