//! Run configuration: a TOML file with one table per command, overridden
//! by command-line flags.

use std::path::{Path, PathBuf};

use psfggm::jgl::PenaltyConfig;
use psfggm::path::DEFAULT_ALPHAS;
use psfggm::simgen::{CovarianceModel, SimConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub out_dir: Option<PathBuf>,
    pub simulate: SimSection,
    pub solver: SolverSection,
    pub estimate: EstimateSection,
    pub roc: RocSection,
    pub diagnose: DiagnoseSection,
}

impl FileConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Layout {
    Wide,
    Long,
}

impl From<Layout> for psfggm::fdata::CsvLayout {
    fn from(l: Layout) -> Self {
        match l {
            Layout::Wide => psfggm::fdata::CsvLayout::Wide,
            Layout::Long => psfggm::fdata::CsvLayout::Long,
        }
    }
}

impl std::str::FromStr for Layout {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "wide" => Ok(Layout::Wide),
            "long" => Ok(Layout::Long),
            other => Err(format!("unknown layout {other:?} (expected wide or long)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Model {
    #[serde(rename = "ps")]
    Ps,
    #[serde(rename = "non-ps")]
    NonPs,
}

impl From<Model> for CovarianceModel {
    fn from(m: Model) -> Self {
        match m {
            Model::Ps => CovarianceModel::PartiallySeparable,
            Model::NonPs => CovarianceModel::NonSeparable,
        }
    }
}

impl std::str::FromStr for Model {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "ps" => Ok(Model::Ps),
            "non-ps" => Ok(Model::NonPs),
            other => Err(format!("unknown model {other:?} (expected ps or non-ps)")),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSection {
    pub p: usize,
    pub n: usize,
    pub n_basis: usize,
    pub n_points: usize,
    pub pi: f64,
    pub tau: f64,
    pub model: Model,
    pub noise_fraction: f64,
}

impl Default for SimSection {
    fn default() -> Self {
        let d = SimConfig::default();
        Self {
            p: d.p,
            n: d.n,
            n_basis: d.n_basis,
            n_points: d.n_points,
            pi: d.pi,
            tau: d.tau,
            model: Model::Ps,
            noise_fraction: d.noise_fraction,
        }
    }
}

impl SimSection {
    pub fn to_sim_config(&self, seed: u64) -> SimConfig {
        SimConfig {
            p: self.p,
            n: self.n,
            n_basis: self.n_basis,
            n_points: self.n_points,
            pi: self.pi,
            tau: self.tau,
            model: self.model.into(),
            noise_fraction: self.noise_fraction,
            seed,
        }
    }
}

/// Solver settings shared by `estimate` and `roc`. Unset residual
/// balancing falls back to the command's default.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub rho: f64,
    pub eps_abs: f64,
    pub eps_rel: f64,
    pub max_iter: usize,
    pub adaptive_rho: Option<bool>,
}

impl Default for SolverSection {
    fn default() -> Self {
        let d = PenaltyConfig::default();
        Self {
            rho: d.rho,
            eps_abs: d.eps_abs,
            eps_rel: d.eps_rel,
            max_iter: d.max_iter,
            adaptive_rho: None,
        }
    }
}

impl SolverSection {
    pub fn to_penalty(&self, gamma: f64, alpha: f64, adaptive_default: bool) -> PenaltyConfig {
        PenaltyConfig {
            gamma,
            alpha,
            rho: self.rho,
            eps_abs: self.eps_abs,
            eps_rel: self.eps_rel,
            max_iter: self.max_iter,
            adaptive_rho: self.adaptive_rho.unwrap_or(adaptive_default),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimateSection {
    pub data: Option<PathBuf>,
    pub layout: Layout,
    pub threshold: f64,
    pub gamma: f64,
    pub alpha: f64,
}

impl Default for EstimateSection {
    fn default() -> Self {
        Self {
            data: None,
            layout: Layout::Wide,
            threshold: 0.9,
            gamma: 0.1,
            alpha: 0.5,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RocSection {
    pub data: Option<PathBuf>,
    pub truth: Option<PathBuf>,
    pub layout: Layout,
    pub threshold: f64,
    pub alphas: Vec<f64>,
    pub n_gamma: usize,
    pub min_ratio: f64,
    /// When set, data and truth are simulated from `[simulate]` this many
    /// times instead of being read from files.
    pub replications: Option<usize>,
    pub stop_when_complete: bool,
}

impl Default for RocSection {
    fn default() -> Self {
        Self {
            data: None,
            truth: None,
            layout: Layout::Wide,
            threshold: 0.9,
            alphas: DEFAULT_ALPHAS.to_vec(),
            n_gamma: 50,
            min_ratio: 1e-3,
            replications: None,
            stop_when_complete: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnoseSection {
    pub data: Option<PathBuf>,
    pub layout: Layout,
    /// Largest truncation level in the split report.
    pub l_max: usize,
    pub reps: usize,
    /// Bases in the block correlation matrices; chosen by `threshold` when
    /// unset.
    pub blocks: Option<usize>,
    pub threshold: f64,
}

impl Default for DiagnoseSection {
    fn default() -> Self {
        Self {
            data: None,
            layout: Layout::Wide,
            l_max: 7,
            reps: 10,
            blocks: None,
            threshold: 0.9,
        }
    }
}

/// Parses `0,0.5,1` into a vector of reals.
pub fn parse_list(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|e| format!("bad number {x:?}: {e}")))
        .collect()
}
