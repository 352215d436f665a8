//! End-to-end estimation and the replicated simulation benchmark.

use rayon::prelude::*;

use crate::eigenbasis::{compute_scores, eigendecompose, select_truncation, EigenBasis, ScoreSet};
use crate::error::Result;
use crate::fdata::{estimate_mean, pooled_covariance, FunctionalDataset, MeanEstimate};
use crate::jgl::JglProblem;
use crate::path::{sweep, AlphaRoc, SweepConfig};
use crate::simgen::{replication_seed, simulate, SimConfig};

/// Everything computed from the data before the graphical lasso.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub mean: MeanEstimate,
    pub basis: EigenBasis,
    /// Number of retained bases `L`.
    pub n_bases: usize,
    pub scores: ScoreSet,
    pub problem: JglProblem,
}

pub fn prepare(data: &FunctionalDataset, threshold: f64) -> Result<Prepared> {
    let mean = estimate_mean(data);
    let h = pooled_covariance(data, &mean)?;
    let basis = eigendecompose(&h, data.grid())?;
    let n_bases = select_truncation(&basis, threshold)?;
    let scores = compute_scores(data, &mean, &basis, n_bases)?;
    let problem = JglProblem::new(scores.correlations.clone())?;
    Ok(Prepared {
        mean,
        basis,
        n_bases,
        scores,
        problem,
    })
}

#[derive(Debug, Clone)]
pub struct Replication {
    pub rep: usize,
    pub seed: u64,
    pub n_bases: usize,
    pub rocs: Vec<AlphaRoc>,
}

/// Simulates one dataset, estimates, and sweeps every `α`.
pub fn run_replication(sim: &SimConfig, threshold: f64, sweep_config: &SweepConfig) -> Result<(usize, Vec<AlphaRoc>)> {
    let (data, model) = simulate(sim)?;
    let prepared = prepare(&data, threshold)?;
    let rocs = sweep(&prepared.problem, &model.graph, sweep_config)?;
    Ok((prepared.n_bases, rocs))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaSummary {
    pub alpha: f64,
    pub mean_auc: f64,
    pub sd_auc: f64,
    pub mean_auc15: f64,
    pub sd_auc15: f64,
}

#[derive(Debug, Clone)]
pub struct Benchmark {
    pub replications: Vec<Replication>,
    pub per_alpha: Vec<AlphaSummary>,
    /// Index into `per_alpha` with the largest mean AUC.
    pub best: usize,
}

impl Benchmark {
    pub fn best_summary(&self) -> AlphaSummary {
        self.per_alpha[self.best]
    }
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

/// `reps` independent replications with seeds derived from `sim.seed`;
/// the mixing parameter is chosen by mean AUC across replications.
pub fn benchmark(sim: &SimConfig, threshold: f64, sweep_config: &SweepConfig, reps: usize) -> Result<Benchmark> {
    let replications = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let seed = replication_seed(sim.seed, rep as u64);
            let config = SimConfig { seed, ..sim.clone() };
            let (n_bases, rocs) = run_replication(&config, threshold, sweep_config)?;
            Ok(Replication {
                rep,
                seed,
                n_bases,
                rocs,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let per_alpha: Vec<AlphaSummary> = sweep_config
        .alphas
        .iter()
        .enumerate()
        .map(|(a, &alpha)| {
            let aucs: Vec<f64> = replications.iter().map(|r| r.rocs[a].auc).collect();
            let auc15s: Vec<f64> = replications.iter().map(|r| r.rocs[a].auc15).collect();
            let (mean_auc, sd_auc) = mean_sd(&aucs);
            let (mean_auc15, sd_auc15) = mean_sd(&auc15s);
            AlphaSummary {
                alpha,
                mean_auc,
                sd_auc,
                mean_auc15,
                sd_auc15,
            }
        })
        .collect();
    let best = per_alpha
        .iter()
        .enumerate()
        .fold(0, |best, (i, s)| if s.mean_auc > per_alpha[best].mean_auc { i } else { best });
    Ok(Benchmark {
        replications,
        per_alpha,
        best,
    })
}
