use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use nalgebra::{DMatrix, DVector};
use qagg_core::experiment::{
    regret_vs_m_sweep, regret_vs_q_sweep, run_experiment, write_csv, ExperimentConfig, RegretReport,
};
use qagg_core::smoother::default_tolerance;
use qagg_core::{
    build_tikhonov_family, check_ordered, degrees_of_freedom, recover_coefficients, solve_q_aggregation,
    CandidateSet, DesignProblem, Error, OrderedReport, QObjective, SolverOptions,
};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::input::{parse_blocks, parse_lambdas, read_matrix, read_penalty, read_text, read_vector};
use crate::manifest::OutputWriter;

#[derive(Debug, Clone, Args)]
pub struct AggregateArgs {
    /// n×p design matrix (CSV).
    #[arg(long)]
    pub design: PathBuf,
    /// Length-n response (CSV column or row).
    #[arg(long)]
    pub response: PathBuf,
    /// `identity` or a p×p penalty matrix (CSV).
    #[arg(long, default_value = "identity")]
    pub penalty: String,
    /// Comma list, or geom:<min>:<max>:<count>.
    #[arg(long)]
    pub lambdas: String,
    /// Known noise level.
    #[arg(long)]
    pub sigma: f64,
    /// Output directory, created if missing.
    #[arg(long)]
    pub output: PathBuf,
    /// Cap on solver iterations.
    #[arg(long, default_value_t = SolverOptions::default().max_iters)]
    pub max_iters: usize,
    /// Relative tolerance on the optimality certificate.
    #[arg(long, default_value_t = SolverOptions::default().kkt_tol)]
    pub kkt_tol: f64,
}

/// Everything `aggregate` writes, in member order of the sorted grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateOutput {
    pub n: usize,
    pub p: usize,
    pub sigma: f64,
    pub lambdas: Vec<f64>,
    pub theta: Vec<f64>,
    /// `Σ θ_j ŵ(λ_j)`.
    pub coefficients: Vec<f64>,
    pub fitted: Vec<f64>,
    pub df: Vec<f64>,
    pub cp: Vec<f64>,
    pub objective: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn field_of(err: &Error) -> &'static str {
    match err {
        Error::DuplicateLambda(_) | Error::InvalidLambda(_) | Error::Empty("tuning grid") => "--lambdas",
        Error::NotPositiveDefinite { .. } => "--penalty",
        Error::InvalidParameter { name: "sigma", .. } => "--sigma",
        _ => "input",
    }
}

fn core_input(err: Error) -> CliError {
    CliError::input(field_of(&err), err)
}

/// Library-level aggregation on in-memory inputs.
pub fn aggregate(
    x: DMatrix<f64>,
    penalty: DMatrix<f64>,
    y: &DVector<f64>,
    lambdas: Vec<f64>,
    sigma: f64,
    opts: &SolverOptions,
) -> CliResult<AggregateOutput> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(CliError::input("--sigma", format!("must be finite and > 0, got {sigma}")));
    }
    if y.len() != x.nrows() {
        return Err(CliError::input(
            "--response",
            format!("length {} does not match the {} rows of --design", y.len(), x.nrows()),
        ));
    }
    let (n, p) = x.shape();
    let problem = DesignProblem::new(x, penalty, lambdas).map_err(core_input)?;
    let family = build_tikhonov_family(&problem).map_err(core_input)?;
    let report = solve_q_aggregation(&family, y, sigma, opts).map_err(core_input)?;
    let coefficients = recover_coefficients(&family, &report.weights).map_err(core_input)?;
    let fits = family.project(y).map_err(core_input)?;
    let cp = QObjective::new(&fits, sigma).map_err(core_input)?.cp_all();
    let df = (0..family.len())
        .map(|j| degrees_of_freedom(&family, j))
        .collect::<Result<Vec<_>, _>>()
        .map_err(core_input)?;
    Ok(AggregateOutput {
        n,
        p,
        sigma,
        lambdas: family.lambdas().expect("design family has a grid").to_vec(),
        theta: report.weights.theta().to_vec(),
        coefficients: coefficients.iter().copied().collect(),
        fitted: report.weights.fitted().iter().copied().collect(),
        df,
        cp: cp.iter().copied().collect(),
        objective: report.objective,
        kkt_residual: report.kkt_residual,
        iterations: report.iterations,
        converged: report.converged,
    })
}

fn members_csv(out: &AggregateOutput) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["member", "lambda", "theta", "df", "cp"]).expect("in-memory write");
    for j in 0..out.lambdas.len() {
        w.write_record([
            j.to_string(),
            out.lambdas[j].to_string(),
            out.theta[j].to_string(),
            out.df[j].to_string(),
            out.cp[j].to_string(),
        ])
        .expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

fn vector_csv(name: &str, values: &[f64]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["index", name]).expect("in-memory write");
    for (i, v) in values.iter().enumerate() {
        w.write_record([i.to_string(), v.to_string()]).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

/// Outputs are written even when the solver does not certify; the error is
/// returned afterwards.
pub fn cmd_aggregate(args: &AggregateArgs) -> CliResult<AggregateOutput> {
    let x = read_matrix(&args.design, "--design")?;
    let y = read_vector(&args.response, "--response")?;
    let penalty = read_penalty(&args.penalty, x.ncols())?;
    let lambdas = parse_lambdas(&args.lambdas)?;
    let opts = SolverOptions {
        max_iters: args.max_iters,
        kkt_tol: args.kkt_tol,
        ..SolverOptions::default()
    };
    let out = aggregate(x, penalty, &y, lambdas, args.sigma, &opts)?;

    let mut writer = OutputWriter::create(&args.output, "aggregate")?;
    writer.record_input(&args.design)?;
    writer.record_input(&args.response)?;
    if args.penalty != "identity" {
        writer.record_input(Path::new(&args.penalty))?;
    }
    writer.write_json("aggregate.json", &out)?;
    writer.write("members.csv", &members_csv(&out))?;
    writer.write("coefficients.csv", &vector_csv("coefficient", &out.coefficients))?;
    writer.write("fitted.csv", &vector_csv("fitted", &out.fitted))?;
    writer.finish()?;

    if !out.converged {
        return Err(CliError::NonConvergence(format!(
            "solver stopped after {} iterations without certifying optimality (kkt residual {:e}); outputs written with converged=false",
            out.iterations, out.kkt_residual
        )));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Sweep {
    /// Grid size, over `sweep.m_values`.
    M,
    /// Number of families, over `sweep.q_values`.
    Q,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    /// Experiment config (TOML, or JSON with a .json extension).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, value_enum)]
    pub sweep: Option<Sweep>,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

pub fn parse_config(text: &str, path: &Path) -> CliResult<ExperimentConfig> {
    let field = format!("config {}", path.display());
    let config: ExperimentConfig = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(text).map_err(|e| CliError::input(&field, e))?
    } else {
        toml::from_str(text).map_err(|e| CliError::input(&field, e.to_string().trim_end()))?
    };
    config.validate().map_err(|e| CliError::input(&field, e))?;
    Ok(config)
}

pub fn load_config(path: &Path) -> CliResult<ExperimentConfig> {
    parse_config(&read_text(path, "--config")?, path)
}

pub fn run_bench(config: &ExperimentConfig, sweep: Option<Sweep>) -> CliResult<Vec<RegretReport>> {
    let run_err = |e: Error| CliError::input("config", e);
    match sweep {
        None => Ok(vec![run_experiment(config).map_err(run_err)?]),
        Some(Sweep::M) => {
            if config.sweep.m_values.is_empty() {
                return Err(CliError::input("config", "--sweep m needs `sweep.m_values`"));
            }
            regret_vs_m_sweep(config, &config.sweep.m_values).map_err(run_err)
        }
        Some(Sweep::Q) => {
            if config.sweep.q_values.is_empty() {
                return Err(CliError::input("config", "--sweep q needs `sweep.q_values`"));
            }
            regret_vs_q_sweep(config, &config.sweep.q_values).map_err(run_err)
        }
    }
}

pub fn reports_csv(reports: &[RegretReport]) -> Vec<u8> {
    let mut bytes = Vec::new();
    write_csv(reports, &mut bytes).expect("in-memory write");
    bytes
}

pub fn cmd_bench(args: &BenchArgs) -> CliResult<Vec<RegretReport>> {
    let mut config = load_config(&args.config)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let reports = run_bench(&config, args.sweep)?;

    let mut writer = OutputWriter::create(&args.output, "bench")?;
    writer.set_config(&args.config);
    writer.set_seed(config.seed);
    writer.record_input(&args.config)?;
    writer.write_json("reports.json", &reports)?;
    writer.write("reports.csv", &reports_csv(&reports))?;
    writer.finish()?;

    let dropped: usize = reports.iter().map(|r| r.nonconverged.len()).sum();
    if dropped > 0 {
        return Err(CliError::NonConvergence(format!(
            "{dropped} replicates did not converge and were excluded from the summaries"
        )));
    }
    Ok(reports)
}

#[derive(Debug, Clone, Args)]
pub struct ValidateArgs {
    /// JSON list of matrices (lists of rows), or CSV blocks separated by
    /// blank lines.
    #[arg(long)]
    pub matrices: PathBuf,
    /// Absolute tolerance; defaults to 1e-8 times the largest eigenvalue
    /// magnitude (at least 1).
    #[arg(long)]
    pub tol: Option<f64>,
}

pub fn parse_matrices(text: &str, path: &Path) -> CliResult<Vec<DMatrix<f64>>> {
    let field = "--matrices";
    if !path.extension().is_some_and(|e| e == "json") {
        return parse_blocks(text, field);
    }
    let raw: Vec<Vec<Vec<f64>>> = serde_json::from_str(text).map_err(|e| CliError::input(field, e))?;
    if raw.is_empty() {
        return Err(CliError::input(field, "no matrices found"));
    }
    raw.iter()
        .enumerate()
        .map(|(i, rows)| {
            let ncols = rows.first().map_or(0, Vec::len);
            if ncols == 0 || rows.iter().any(|r| r.len() != ncols) {
                return Err(CliError::input(field, format!("matrix {i} is empty or ragged")));
            }
            Ok(DMatrix::from_row_iterator(rows.len(), ncols, rows.iter().flatten().copied()))
        })
        .collect()
}

pub fn cmd_validate(args: &ValidateArgs, out: &mut impl Write) -> CliResult<OrderedReport> {
    let mats = parse_matrices(&read_text(&args.matrices, "--matrices")?, &args.matrices)?;
    let n = mats[0].nrows();
    if let Some(i) = mats.iter().position(|a| a.shape() != (n, n)) {
        let (r, c) = mats[i].shape();
        return Err(CliError::input(
            "--matrices",
            format!("matrix {i} is {r}x{c}; expected square {n}x{n} like matrix 0"),
        ));
    }
    let tol = args.tol.unwrap_or_else(|| default_tolerance(&mats));
    let report = check_ordered(&mats, tol).map_err(|e| match e {
        Error::InvalidParameter { .. } => CliError::input("--tol", e),
        _ => CliError::input("--matrices", e),
    })?;
    let io_err = |e| CliError::io("writing report", e);
    writeln!(out, "{} matrices of size {}, tol {:e}", mats.len(), mats[0].nrows(), tol).map_err(io_err)?;
    for (name, check) in report.axioms() {
        match (&check.detail, check.passed) {
            (_, true) => writeln!(out, "PASS {name}"),
            (Some(detail), false) => writeln!(out, "FAIL {name}: {detail}"),
            (None, false) => writeln!(out, "FAIL {name}"),
        }
        .map_err(io_err)?;
    }
    if !report.all_passed() {
        let failed: Vec<&str> = report
            .axioms()
            .into_iter()
            .filter(|(_, c)| !c.passed)
            .map(|(n, _)| n)
            .collect();
        return Err(CliError::Validation(format!("axioms failed: {}", failed.join("; "))));
    }
    Ok(report)
}
