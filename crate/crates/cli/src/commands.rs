use std::path::{Path, PathBuf};

use psfggm::diagnostics::{cross_correlation_blocks, pooled_score_stack, univariate_scores, variance_explained_split};
use psfggm::eigenbasis::{eigendecompose, select_truncation};
use psfggm::fdata::{estimate_mean, load_csv, pooled_covariance, FunctionalDataset};
use psfggm::graphs::{extract_edges, union_edges};
use psfggm::jgl::{kkt_residual, solve, solve_from};
use psfggm::path::{best_alpha, sweep, SweepConfig};
use psfggm::pipeline::{benchmark, prepare};
use psfggm::simgen::simulate as run_simulation;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use crate::config::{
    DiagnoseSection, EstimateSection, FileConfig, Layout, RocSection, SimSection, SolverSection,
};
use crate::error::{CliError, CliResult};
use crate::output::{num, read_union, write_edges, write_manifest, write_matrix, Manifest, OutDir};
use crate::{CommonArgs, InputArgs, SimArgs, SolverArgs};

const DEFAULT_SEED: u64 = 1;
const KKT_TARGET: f64 = 1e-6;
const MAX_REFINEMENTS: usize = 4;

/// Settings every command resolves first.
struct Session {
    file: FileConfig,
    seed: u64,
    threads: Option<usize>,
    out: OutDir,
}

fn start(common: &CommonArgs) -> CliResult<Session> {
    let file = match &common.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let seed = common.seed.or(file.seed).unwrap_or(DEFAULT_SEED);
    let threads = common.threads.or(file.threads);
    if let Some(n) = threads {
        if n == 0 {
            return Err(CliError::Config("threads must be >= 1".into()));
        }
        // A pool may already exist when commands run in-process; keep it.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let out_dir = common
        .out_dir
        .clone()
        .or_else(|| file.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    let out = OutDir::create(&out_dir)?;
    Ok(Session {
        file,
        seed,
        threads,
        out,
    })
}

fn merge_sim(section: &mut SimSection, flags: &SimArgs) {
    macro_rules! take {
        ($($f:ident),*) => { $( if let Some(v) = flags.$f { section.$f = v; } )* };
    }
    take!(p, n, n_basis, n_points, pi, tau, model, noise_fraction);
}

fn merge_solver(section: &mut SolverSection, flags: &SolverArgs) {
    if let Some(v) = flags.rho {
        section.rho = v;
    }
    if let Some(v) = flags.eps_abs {
        section.eps_abs = v;
    }
    if let Some(v) = flags.eps_rel {
        section.eps_rel = v;
    }
    if let Some(v) = flags.max_iter {
        section.max_iter = v;
    }
    if flags.adaptive_rho.is_some() {
        section.adaptive_rho = flags.adaptive_rho;
    }
}

fn check_threshold(t: f64) -> CliResult<()> {
    if t > 0.0 && t <= 1.0 {
        Ok(())
    } else {
        Err(CliError::Config(format!("threshold must lie in (0, 1], got {t}")))
    }
}

fn config_error(e: psfggm::Error) -> CliError {
    match e {
        psfggm::Error::InvalidInput(m) => CliError::Config(m),
        other => other.into(),
    }
}

fn required_input(path: &Option<PathBuf>, what: &str) -> CliResult<PathBuf> {
    let path = path
        .clone()
        .ok_or_else(|| CliError::Config(format!("missing {what} (flag or config file)")))?;
    if !path.is_file() {
        return Err(CliError::Read {
            path,
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "no such file"),
        });
    }
    Ok(path)
}

fn load_data(path: &Path, layout: Layout) -> CliResult<FunctionalDataset> {
    load_csv(path, layout.into()).map_err(|e| match e {
        psfggm::Error::Io(source) => CliError::Read {
            path: path.to_path_buf(),
            source,
        },
        other => other.into(),
    })
}

fn io_other(e: psfggm::Error) -> std::io::Error {
    match e {
        psfggm::Error::Io(io) => io,
        other => std::io::Error::other(other.to_string()),
    }
}

pub fn simulate(common: &CommonArgs, flags: &SimArgs) -> CliResult<()> {
    let mut session = start(common)?;
    let mut section = session.file.simulate.clone();
    merge_sim(&mut section, flags);
    let config = section.to_sim_config(session.seed);
    config.validate().map_err(config_error)?;

    let (data, model) = run_simulation(&config)?;
    session
        .out
        .write("dataset.csv", |w| data.write_wide_csv(w).map_err(io_other))?;
    session
        .out
        .write("truth.csv", |w| write_edges(w, &model.graph, &model.edge_sets))?;

    let results = json!({
        "edges": model.graph.len(),
        "common_edges": model.common.len(),
        "edges_per_basis": model.edge_sets.iter().map(|s| s.len()).collect::<Vec<_>>(),
        "block_traces": model.block_traces(),
        "noise_var": model.noise_var,
    });
    #[derive(Serialize)]
    struct Recorded<'a> {
        simulate: &'a SimSection,
    }
    let manifest = Manifest {
        command: "simulate",
        version: env!("CARGO_PKG_VERSION"),
        seed: session.seed,
        threads: session.threads,
        config: Recorded { simulate: &section },
        deviations: model.deviations.clone(),
        outputs: Vec::new(),
        results,
    };
    write_manifest(&mut session.out, &manifest)
}

fn merge_input(data: &mut Option<PathBuf>, layout: &mut Layout, threshold: &mut f64, flags: &InputArgs) {
    if flags.data.is_some() {
        *data = flags.data.clone();
    }
    if let Some(l) = flags.layout {
        *layout = l;
    }
    if let Some(t) = flags.threshold {
        *threshold = t;
    }
}

pub fn estimate(
    common: &CommonArgs,
    input: &InputArgs,
    solver_flags: &SolverArgs,
    gamma: Option<f64>,
    alpha: Option<f64>,
) -> CliResult<()> {
    let mut session = start(common)?;
    let mut section: EstimateSection = session.file.estimate.clone();
    merge_input(&mut section.data, &mut section.layout, &mut section.threshold, input);
    if let Some(g) = gamma {
        section.gamma = g;
    }
    if let Some(a) = alpha {
        section.alpha = a;
    }
    let mut solver = session.file.solver.clone();
    merge_solver(&mut solver, solver_flags);
    check_threshold(section.threshold)?;
    let penalty = solver.to_penalty(section.gamma, section.alpha, true);
    penalty.validate().map_err(config_error)?;
    let data_path = required_input(&section.data, "data path")?;

    let data = load_data(&data_path, section.layout)?;
    let prepared = prepare(&data, section.threshold)?;
    let mut sol = solve(&prepared.problem, &penalty)?;
    let mut kkt = kkt_residual(&prepared.problem, &sol, &penalty)?;
    let mut iterations = sol.iterations;
    // Tighten the stopping rule from the current iterate until stationarity
    // holds to KKT_TARGET.
    let mut refinements = 0;
    let mut tight = penalty;
    while sol.converged && kkt > KKT_TARGET && refinements < MAX_REFINEMENTS {
        tight.eps_abs /= 10.0;
        tight.eps_rel /= 10.0;
        sol = solve_from(&prepared.problem, &tight, Some(&sol))?;
        kkt = kkt_residual(&prepared.problem, &sol, &penalty)?;
        iterations += sol.iterations;
        refinements += 1;
    }
    let edge_sets = extract_edges(&sol);
    let union = union_edges(&edge_sets)?;

    let fractions = prepared.basis.cumulative_fractions();
    let eigenvalues = prepared.basis.eigenvalues.clone();
    session.out.write("eigenvalues.csv", |w| {
        writeln!(w, "l,eigenvalue,cumulative_fraction,selected")?;
        for (l, (v, f)) in eigenvalues.iter().zip(&fractions).enumerate() {
            writeln!(w, "{},{},{},{}", l + 1, num(*v), num(*f), u8::from(l < prepared.n_bases))?;
        }
        Ok(())
    })?;
    session.out.write("edges.csv", |w| write_edges(w, &union, &edge_sets))?;
    let diagnostics = json!({
        "n_bases": prepared.n_bases,
        "gamma": penalty.gamma,
        "alpha": penalty.alpha,
        "converged": sol.converged,
        "iterations": iterations,
        "refinements": refinements,
        "primal_residual": sol.primal_residual,
        "dual_residual": sol.dual_residual,
        "rho": sol.rho,
        "objective": sol.objective,
        "objective_increases": sol.objective_increases,
        "kkt_residual": kkt,
        "union_edges": union.len(),
        "edges_per_basis": edge_sets.iter().map(|s| s.len()).collect::<Vec<_>>(),
    });
    let text = serde_json::to_string_pretty(&diagnostics).expect("json values serialize");
    session.out.write("solver.json", |w| writeln!(w, "{text}"))?;

    let mut deviations = Vec::new();
    if !sol.converged {
        let msg = format!("solver stopped after {iterations} iterations without meeting tolerances");
        log::warn!("{msg}");
        deviations.push(msg);
    }
    #[derive(Serialize)]
    struct Recorded<'a> {
        estimate: &'a EstimateSection,
        solver: &'a SolverSection,
    }
    let manifest = Manifest {
        command: "estimate",
        version: env!("CARGO_PKG_VERSION"),
        seed: session.seed,
        threads: session.threads,
        config: Recorded {
            estimate: &section,
            solver: &solver,
        },
        deviations,
        outputs: Vec::new(),
        results: diagnostics,
    };
    write_manifest(&mut session.out, &manifest)
}

/// `roc`-specific flags.
pub struct RocArgs {
    pub truth: Option<PathBuf>,
    pub alphas: Option<Vec<f64>>,
    pub n_gamma: Option<usize>,
    pub min_ratio: Option<f64>,
    pub replications: Option<usize>,
}

fn check_sweep(section: &RocSection) -> CliResult<()> {
    if section.alphas.is_empty() || section.alphas.iter().any(|a| !(0.0..=1.0).contains(a)) {
        return Err(CliError::Config("alphas must be a nonempty list of values in [0, 1]".into()));
    }
    if section.n_gamma == 0 {
        return Err(CliError::Config("n_gamma must be >= 1".into()));
    }
    if !(section.min_ratio > 0.0 && section.min_ratio <= 1.0) {
        return Err(CliError::Config(format!("min_ratio must lie in (0, 1], got {}", section.min_ratio)));
    }
    if section.replications == Some(0) {
        return Err(CliError::Config("replications must be >= 1".into()));
    }
    Ok(())
}

pub fn roc(
    common: &CommonArgs,
    input: &InputArgs,
    solver_flags: &SolverArgs,
    sim_flags: &SimArgs,
    args: &RocArgs,
) -> CliResult<()> {
    let mut session = start(common)?;
    let mut section = session.file.roc.clone();
    merge_input(&mut section.data, &mut section.layout, &mut section.threshold, input);
    if args.truth.is_some() {
        section.truth = args.truth.clone();
    }
    if let Some(a) = &args.alphas {
        section.alphas = a.clone();
    }
    if let Some(n) = args.n_gamma {
        section.n_gamma = n;
    }
    if let Some(r) = args.min_ratio {
        section.min_ratio = r;
    }
    if args.replications.is_some() {
        section.replications = args.replications;
    }
    let mut solver = session.file.solver.clone();
    merge_solver(&mut solver, solver_flags);
    let mut sim_section = session.file.simulate.clone();
    merge_sim(&mut sim_section, sim_flags);
    check_threshold(section.threshold)?;
    check_sweep(&section)?;
    let penalty = solver.to_penalty(0.0, 0.0, true);
    penalty.validate().map_err(config_error)?;
    let sweep_config = SweepConfig {
        alphas: section.alphas.clone(),
        n_gamma: section.n_gamma,
        min_ratio: section.min_ratio,
        solver: penalty,
        stop_when_complete: section.stop_when_complete,
    };

    #[derive(Serialize)]
    struct Recorded<'a> {
        roc: &'a RocSection,
        solver: &'a SolverSection,
        #[serde(skip_serializing_if = "Option::is_none")]
        simulate: Option<&'a SimSection>,
    }
    let mut deviations = Vec::new();

    let results = if let Some(reps) = section.replications {
        let sim = sim_section.to_sim_config(session.seed);
        sim.validate().map_err(config_error)?;
        let bench = benchmark(&sim, section.threshold, &sweep_config, reps)?;
        session.out.write("roc.csv", |w| {
            writeln!(w, "rep,alpha,gamma,fpr,tpr")?;
            for r in &bench.replications {
                for a in &r.rocs {
                    for (g, rates) in &a.points {
                        writeln!(w, "{},{},{},{},{}", r.rep, num(a.alpha), num(*g), num(rates.fpr), num(rates.tpr))?;
                    }
                }
            }
            Ok(())
        })?;
        session.out.write("summary.csv", |w| {
            writeln!(w, "rep,alpha,auc,auc15,n_bases,unconverged")?;
            for r in &bench.replications {
                for a in &r.rocs {
                    writeln!(w, "{},{},{},{},{},{}", r.rep, num(a.alpha), num(a.auc), num(a.auc15), r.n_bases, a.unconverged)?;
                }
            }
            Ok(())
        })?;
        session.out.write("benchmark.csv", |w| {
            writeln!(w, "alpha,mean_auc,sd_auc,mean_auc15,sd_auc15")?;
            for s in &bench.per_alpha {
                writeln!(w, "{},{},{},{},{}", num(s.alpha), num(s.mean_auc), num(s.sd_auc), num(s.mean_auc15), num(s.sd_auc15))?;
            }
            Ok(())
        })?;
        let unconverged: usize = bench.replications.iter().flat_map(|r| &r.rocs).map(|a| a.unconverged).sum();
        if unconverged > 0 {
            deviations.push(format!("{unconverged} path solves stopped at max_iter"));
        }
        let best = bench.best_summary();
        json!({
            "replications": reps,
            "replication_seeds": bench.replications.iter().map(|r| r.seed).collect::<Vec<_>>(),
            "best_alpha": best.alpha,
            "best_mean_auc": best.mean_auc,
            "best_sd_auc": best.sd_auc,
            "best_mean_auc15": best.mean_auc15,
            "n_bases": bench.replications.iter().map(|r| r.n_bases).collect::<Vec<_>>(),
        })
    } else {
        let data_path = required_input(&section.data, "data path")?;
        let truth_path = required_input(&section.truth, "truth edge list")?;
        let data = load_data(&data_path, section.layout)?;
        let truth = read_union(&truth_path, data.n_components())?;
        let prepared = prepare(&data, section.threshold)?;
        let rocs = sweep(&prepared.problem, &truth, &sweep_config)?;
        session.out.write("roc.csv", |w| {
            writeln!(w, "alpha,gamma,fpr,tpr")?;
            for a in &rocs {
                for (g, rates) in &a.points {
                    writeln!(w, "{},{},{},{}", num(a.alpha), num(*g), num(rates.fpr), num(rates.tpr))?;
                }
            }
            Ok(())
        })?;
        session.out.write("summary.csv", |w| {
            writeln!(w, "alpha,auc,auc15,unconverged")?;
            for a in &rocs {
                writeln!(w, "{},{},{},{}", num(a.alpha), num(a.auc), num(a.auc15), a.unconverged)?;
            }
            Ok(())
        })?;
        let unconverged: usize = rocs.iter().map(|a| a.unconverged).sum();
        if unconverged > 0 {
            deviations.push(format!("{unconverged} path solves stopped at max_iter"));
        }
        let best = best_alpha(&rocs).map(|i| &rocs[i]);
        json!({
            "n_bases": prepared.n_bases,
            "true_edges": truth.len(),
            "best_alpha": best.map(|b| b.alpha),
            "best_auc": best.map(|b| b.auc),
            "best_auc15": best.map(|b| b.auc15),
        })
    };
    let replicated = section.replications.is_some();
    let manifest = Manifest {
        command: "roc",
        version: env!("CARGO_PKG_VERSION"),
        seed: session.seed,
        threads: session.threads,
        config: Recorded {
            roc: &section,
            solver: &solver,
            simulate: replicated.then_some(&sim_section),
        },
        deviations,
        outputs: Vec::new(),
        results,
    };
    write_manifest(&mut session.out, &manifest)
}

pub fn diagnose(
    common: &CommonArgs,
    input: &InputArgs,
    l_max: Option<usize>,
    reps: Option<usize>,
    blocks: Option<usize>,
) -> CliResult<()> {
    let mut session = start(common)?;
    let mut section: DiagnoseSection = session.file.diagnose.clone();
    merge_input(&mut section.data, &mut section.layout, &mut section.threshold, input);
    if let Some(l) = l_max {
        section.l_max = l;
    }
    if let Some(r) = reps {
        section.reps = r;
    }
    if blocks.is_some() {
        section.blocks = blocks;
    }
    check_threshold(section.threshold)?;
    if section.l_max == 0 || section.reps == 0 || section.blocks == Some(0) {
        return Err(CliError::Config("l_max, reps and blocks must be >= 1".into()));
    }
    let data_path = required_input(&section.data, "data path")?;
    let data = load_data(&data_path, section.layout)?;

    let mut rng = ChaCha8Rng::seed_from_u64(session.seed);
    let report = variance_explained_split(&data, section.l_max, section.reps, &mut rng)?;
    session.out.write("split_report.csv", |w| {
        writeln!(w, "rep,method,L,in_ve,out_ve,ratio")?;
        for r in &report.rows {
            writeln!(w, "{},{},{},{},{},{}", r.rep, r.method.as_str(), r.l, num(r.in_ve), num(r.out_ve), num(r.ratio))?;
        }
        Ok(())
    })?;

    let n_blocks = match section.blocks {
        Some(l) => l,
        None => {
            let mean = estimate_mean(&data);
            let basis = eigendecompose(&pooled_covariance(&data, &mean)?, data.grid())?;
            select_truncation(&basis, section.threshold)?
        }
    };
    let pooled = cross_correlation_blocks(&pooled_score_stack(&data, n_blocks)?, n_blocks)?;
    let univariate = cross_correlation_blocks(&univariate_scores(&data, n_blocks)?, n_blocks)?;
    for (name, b) in [("pooled", &pooled), ("univariate", &univariate)] {
        session
            .out
            .write(&format!("block_correlation_{name}.csv"), |w| write_matrix(w, &b.matrix))?;
        session
            .out
            .write(&format!("block_correlation_{name}_leading.csv"), |w| write_matrix(w, &b.leading_view()))?;
    }
    session.out.write("block_summary.csv", |w| {
        writeln!(w, "method,L,off_block_mean")?;
        writeln!(w, "pooled,{},{}", n_blocks, num(pooled.off_block_mean))?;
        writeln!(w, "univariate,{},{}", n_blocks, num(univariate.off_block_mean))
    })?;

    #[derive(Serialize)]
    struct Recorded<'a> {
        diagnose: &'a DiagnoseSection,
    }
    let manifest = Manifest {
        command: "diagnose",
        version: env!("CARGO_PKG_VERSION"),
        seed: session.seed,
        threads: session.threads,
        config: Recorded { diagnose: &section },
        deviations: Vec::new(),
        outputs: Vec::new(),
        results: json!({
            "blocks": n_blocks,
            "pooled_off_block_mean": pooled.off_block_mean,
            "univariate_off_block_mean": univariate.off_block_mean,
        }),
    };
    write_manifest(&mut session.out, &manifest)
}
