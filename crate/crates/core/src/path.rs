//! Penalty paths: warm-started sweeps over `γ` at fixed `α`, and the ROC
//! summaries built from them.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graphs::{auc, auc15, confusion, extract_edges, roc_curve, union_edges, EdgeSet, Rates, RocCurve};
use crate::jgl::{solve_from, JglProblem, JglSolution, PenaltyConfig};

/// The coarse mixing grid `{0, 0.25, 0.5, 0.75, 1}`.
pub const DEFAULT_ALPHAS: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub alphas: Vec<f64>,
    pub n_gamma: usize,
    /// Smallest `γ` on the path as a fraction of `γ_max`.
    pub min_ratio: f64,
    /// Solver settings; `gamma` and `alpha` are overwritten along the path.
    pub solver: PenaltyConfig,
    /// Stop solving once the union graph is complete and repeat that point
    /// for the remaining `γ`; every later ROC point would be `(1, 1)`.
    pub stop_when_complete: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            alphas: DEFAULT_ALPHAS.to_vec(),
            n_gamma: 50,
            min_ratio: 1e-3,
            solver: PenaltyConfig {
                adaptive_rho: true,
                ..PenaltyConfig::default()
            },
            stop_when_complete: true,
        }
    }
}

/// Whether every off-diagonal group is zero at the all-diagonal solution
/// `Ξ_l = I` for this `γ`.
fn all_groups_zero(problem: &JglProblem, gamma: f64, alpha: f64) -> bool {
    let p = problem.dim();
    let lasso = gamma * alpha;
    let ball = gamma * (1.0 - alpha);
    for a in 0..p {
        for b in a + 1..p {
            let soft_sq: f64 = problem
                .correlations()
                .iter()
                .map(|r| (r[(a, b)].abs() - lasso).max(0.0).powi(2))
                .sum();
            if soft_sq.sqrt() > ball {
                return false;
            }
        }
    }
    true
}

/// Smallest `γ` for which the estimated union graph is empty, by bisection
/// on the stationarity condition at the diagonal solution.
pub fn gamma_max(problem: &JglProblem, alpha: f64) -> f64 {
    let mut hi = problem
        .correlations()
        .iter()
        .map(|r| r.amax())
        .fold(0.0, f64::max)
        * (problem.n_bases() as f64).sqrt()
        + f64::MIN_POSITIVE;
    while !all_groups_zero(problem, hi, alpha) {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if all_groups_zero(problem, mid, alpha) {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-12 * hi {
            break;
        }
    }
    hi
}

/// `n` logarithmically spaced values from `max` down to `min_ratio · max`.
pub fn gamma_grid(max: f64, n: usize, min_ratio: f64) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![max],
        _ => {
            let lmax = max.ln();
            let lmin = (max * min_ratio).ln();
            (0..n)
                .map(|i| (lmax + (lmin - lmax) * i as f64 / (n - 1) as f64).exp())
                .collect()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathPoint {
    pub gamma: f64,
    pub edge_sets: Vec<EdgeSet>,
    pub union: EdgeSet,
    pub converged: bool,
    pub iterations: usize,
}

/// Solves along `gammas` (expected in decreasing order), warm-starting each
/// solve from the previous one.
pub fn solve_path(
    problem: &JglProblem,
    alpha: f64,
    gammas: &[f64],
    solver: &PenaltyConfig,
) -> Result<Vec<PathPoint>> {
    solve_path_with(problem, alpha, gammas, solver, false)
}

/// [`solve_path`], optionally cut short once the union graph is complete.
/// Skipped points copy the saturated graphs with zero iterations.
pub fn solve_path_with(
    problem: &JglProblem,
    alpha: f64,
    gammas: &[f64],
    solver: &PenaltyConfig,
    stop_when_complete: bool,
) -> Result<Vec<PathPoint>> {
    let mut previous: Option<JglSolution> = None;
    let mut out: Vec<PathPoint> = Vec::with_capacity(gammas.len());
    for &gamma in gammas {
        if stop_when_complete {
            if let Some(last) = out.last() {
                if last.union.len() == last.union.max_edges() {
                    let copy = PathPoint {
                        gamma,
                        iterations: 0,
                        ..last.clone()
                    };
                    out.push(copy);
                    continue;
                }
            }
        }
        let config = PenaltyConfig {
            gamma,
            alpha,
            ..*solver
        };
        let sol = solve_from(problem, &config, previous.as_ref())?;
        let edge_sets = extract_edges(&sol);
        let union = union_edges(&edge_sets)?;
        out.push(PathPoint {
            gamma,
            edge_sets,
            union,
            converged: sol.converged,
            iterations: sol.iterations,
        });
        previous = Some(sol);
    }
    Ok(out)
}

/// Fraction of consecutive path steps where no basis lost edges.
pub fn monotone_fraction(path: &[PathPoint]) -> f64 {
    if path.len() < 2 {
        return 1.0;
    }
    let ok = path
        .windows(2)
        .filter(|w| {
            w[0].edge_sets
                .iter()
                .zip(&w[1].edge_sets)
                .all(|(a, b)| b.len() >= a.len())
        })
        .count();
    ok as f64 / (path.len() - 1) as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlphaRoc {
    pub alpha: f64,
    /// `(γ, rates)` for each path point.
    pub points: Vec<(f64, Rates)>,
    pub curve: RocCurve,
    pub auc: f64,
    pub auc15: f64,
    pub unconverged: usize,
}

/// ROC summary from a sequence of estimated graphs, one per `γ`.
pub fn roc_from_graphs(alpha: f64, graphs: &[(f64, EdgeSet)], truth: &EdgeSet) -> Result<AlphaRoc> {
    let points = graphs
        .iter()
        .map(|(gamma, g)| confusion(g, truth).map(|r| (*gamma, r)))
        .collect::<Result<Vec<_>>>()?;
    let xy: Vec<(f64, f64)> = points.iter().map(|(_, r)| (r.fpr, r.tpr)).collect();
    let curve = roc_curve(&xy)?;
    Ok(AlphaRoc {
        alpha,
        auc: auc(&curve),
        auc15: auc15(&curve),
        points,
        curve,
        unconverged: 0,
    })
}

pub fn roc_for_path(alpha: f64, path: &[PathPoint], truth: &EdgeSet) -> Result<AlphaRoc> {
    let graphs: Vec<(f64, EdgeSet)> = path.iter().map(|pt| (pt.gamma, pt.union.clone())).collect();
    let mut roc = roc_from_graphs(alpha, &graphs, truth)?;
    roc.unconverged = path.iter().filter(|pt| !pt.converged).count();
    Ok(roc)
}

/// One warm-started path per `α`, scored against `truth`.
pub fn sweep(problem: &JglProblem, truth: &EdgeSet, config: &SweepConfig) -> Result<Vec<AlphaRoc>> {
    if truth.p() != problem.dim() {
        return Err(Error::DimensionMismatch {
            expected: problem.dim(),
            found: truth.p(),
        });
    }
    config
        .alphas
        .par_iter()
        .map(|&alpha| {
            let gammas = gamma_grid(gamma_max(problem, alpha), config.n_gamma, config.min_ratio);
            let path = solve_path_with(problem, alpha, &gammas, &config.solver, config.stop_when_complete)?;
            let monotone = monotone_fraction(&path);
            if monotone < 0.95 {
                log::warn!("alpha {alpha}: per-basis edge counts grew monotonically on only {:.0}% of steps", monotone * 100.0);
            }
            roc_for_path(alpha, &path, truth)
        })
        .collect()
}

/// Index of the entry with the largest AUC (first on ties).
pub fn best_alpha(rocs: &[AlphaRoc]) -> Option<usize> {
    rocs.iter()
        .enumerate()
        .fold(None, |best: Option<(usize, f64)>, (i, r)| match best {
            Some((_, a)) if a >= r.auc => best,
            _ => Some((i, r.auc)),
        })
        .map(|(i, _)| i)
}
