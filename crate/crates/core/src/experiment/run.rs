use std::time::Instant;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::config::{ExperimentConfig, Method};
use super::report::{MethodSummary, RegretReport};
use super::scenario::{prepare, prepare_with_truth, Scenario};
use super::stats::{mean_and_se, ExcessQuantiles, Z_95};
use crate::aggregate::{
    default_temperature, deterministic_inequality, select_cp_fits, select_gcv_fits, softmax_weights,
    solve_fits, QObjective,
};
use crate::error::{Error, Result};
use crate::fits::CandidateSet;

/// Noise draw of replicate `index`: stream `index` of the seeded generator.
pub fn replicate_noise(seed: u64, index: usize, n: usize, sigma: f64) -> DVector<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    DVector::from_fn(n, |_, _| {
        let z: f64 = StandardNormal.sample(&mut rng);
        sigma * z
    })
}

/// Per-draw losses, in the order of `config.methods`.
#[derive(Debug, Clone)]
struct Draw {
    losses: Vec<f64>,
    oracle_loss: f64,
    converged: bool,
    inequality_margin: Option<f64>,
}

fn simulate(config: &ExperimentConfig, scenario: &Scenario, index: usize) -> Result<Draw> {
    let truth = scenario.truth();
    let sigma = truth.sigma();
    let noise = replicate_noise(config.seed, index, truth.n(), sigma);
    let y = truth.mu() + &noise;
    let candidates = scenario.candidates();
    let fits = candidates.project(&y)?;
    let objective = QObjective::new(&fits, sigma)?;
    let loss = |coords: DVector<f64>| {
        (coords - scenario.mean_coords()).norm_squared() + scenario.mean_off2()
    };
    let oracle_loss = loss(fits.coords().column(scenario.oracle()).into_owned());

    let mut converged = true;
    let mut inequality_margin = None;
    let mut losses = Vec::with_capacity(config.methods.len());
    for method in &config.methods {
        let value = match method {
            Method::QAgg => {
                let report = solve_fits(&fits, sigma, &config.solver)?;
                converged = report.converged;
                let theta = report.weights.theta_vector();
                let noise_coords = candidates.fit_basis().tr_mul(&noise);
                let check = deterministic_inequality(&objective, &theta, &noise_coords, scenario.oracle())?;
                let slack = (-report.kkt_residual).max(0.0);
                inequality_margin = Some(check.excess - check.bound - slack);
                loss(fits.combine(&theta))
            }
            Method::CpSelect => loss(fits.coords().column(select_cp_fits(&objective)).into_owned()),
            Method::Gcv => {
                let selection = select_gcv_fits(&fits, truth.n())?;
                loss(fits.coords().column(selection.index).into_owned())
            }
            Method::ExpWeights => {
                let temperature = config.temperature.unwrap_or_else(|| default_temperature(sigma));
                let theta = softmax_weights(&objective.cp_all(), temperature)?;
                loss(fits.combine(&DVector::from_vec(theta)))
            }
            Method::Oracle => oracle_loss,
        };
        losses.push(value);
    }
    Ok(Draw {
        losses,
        oracle_loss,
        converged,
        inequality_margin,
    })
}

/// Runs every replicate of `config` and summarizes.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RegretReport> {
    let scenario = prepare(config)?;
    run_scenario(config, &scenario)
}

/// Runs `config` on an already prepared scenario.
///
/// Replicates run in parallel on the current rayon pool; results are
/// reduced sequentially in replicate order, so the report does not depend
/// on the thread count.
pub fn run_scenario(config: &ExperimentConfig, scenario: &Scenario) -> Result<RegretReport> {
    config.validate()?;
    let started = Instant::now();
    let draws = (0..config.replicates)
        .into_par_iter()
        .map(|r| simulate(config, scenario, r))
        .collect::<Result<Vec<_>>>()?;

    let nonconverged: Vec<usize> = draws
        .iter()
        .enumerate()
        .filter(|(_, d)| !d.converged)
        .map(|(r, _)| r)
        .collect();
    let used: Vec<&Draw> = draws.iter().filter(|d| d.converged).collect();
    if !nonconverged.is_empty() {
        tracing::warn!(count = nonconverged.len(), "replicates excluded after solver non-convergence");
    }

    // Absolute floor for round-off in the inequality check.
    let inequality_tol = 1e-8 * (1.0 + scenario.truth().mu().norm_squared() + scenario.r_star());
    let margins: Vec<f64> = used.iter().filter_map(|d| d.inequality_margin).collect();
    let inequality_violations = margins.iter().filter(|&&m| m > inequality_tol).count();
    let inequality_worst_margin = margins.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    let methods = config
        .methods
        .iter()
        .enumerate()
        .map(|(slot, &method)| {
            let losses: Vec<f64> = used.iter().map(|d| d.losses[slot]).collect();
            let excess: Vec<f64> = used.iter().map(|d| d.losses[slot] - d.oracle_loss).collect();
            let (mean_risk, std_error) = mean_and_se(&losses);
            let (paired_regret, paired_se) = mean_and_se(&excess);
            MethodSummary {
                method,
                mean_risk,
                std_error,
                regret: mean_risk - scenario.r_star(),
                regret_ci: Z_95 * std_error,
                paired_regret,
                paired_ci: Z_95 * paired_se,
                excess_quantiles: ExcessQuantiles::of(&excess),
            }
        })
        .collect();

    Ok(RegretReport {
        m: scenario.candidates().len(),
        q: scenario.candidates().q(),
        n: scenario.truth().n(),
        sigma: scenario.truth().sigma(),
        seed: config.seed,
        replicates: config.replicates,
        used_replicates: used.len(),
        r_star: scenario.r_star(),
        oracle_index: scenario.oracle(),
        methods,
        nonconverged,
        inequality_violations,
        inequality_worst_margin,
        runtime_secs: started.elapsed().as_secs_f64(),
    })
}

/// One report per grid size; the mean is resolved once from `base`.
pub fn regret_vs_m_sweep(base: &ExperimentConfig, m_values: &[usize]) -> Result<Vec<RegretReport>> {
    check_ascending("m_values", m_values)?;
    let truth = prepare(base)?.truth().clone();
    m_values
        .iter()
        .map(|&m| {
            let mut config = base.clone();
            config.families.set_count(m);
            let scenario = prepare_with_truth(&config, &truth)?;
            run_scenario(&config, &scenario)
        })
        .collect()
}

/// One report per number of families; the mean is resolved once from
/// `base`.
pub fn regret_vs_q_sweep(base: &ExperimentConfig, q_values: &[usize]) -> Result<Vec<RegretReport>> {
    check_ascending("q_values", q_values)?;
    let truth = prepare(base)?.truth().clone();
    q_values
        .iter()
        .map(|&q| {
            let mut config = base.clone();
            config.families.set_q(q)?;
            let scenario = prepare_with_truth(&config, &truth)?;
            run_scenario(&config, &scenario)
        })
        .collect()
}

fn check_ascending(name: &'static str, values: &[usize]) -> Result<()> {
    if values.is_empty() {
        return Err(Error::Empty(name));
    }
    if values[0] == 0 || values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter {
            name,
            reason: "must be positive and strictly ascending".into(),
        });
    }
    Ok(())
}
