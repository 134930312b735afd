//! Inputs shared by the criterion benchmarks.

use nalgebra::{DMatrix, DVector};
use qagg_core::experiment::{
    DesignSpec, ExperimentConfig, FamiliesSpec, GridSpec, MeanSpec, PenaltySpec, ScenarioSpec,
};
use qagg_core::{build_tikhonov_family, DesignProblem, SpectralFamily};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Ridge path on a Gaussian `n × p` design with `m` log-spaced penalties,
/// plus a response drawn around a sparse truth.
pub fn ridge_instance(n: usize, p: usize, m: usize, seed: u64) -> (SpectralFamily, DVector<f64>) {
    let problem = ridge_problem(n, p, m, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
    let beta = DVector::from_fn(p, |i, _| if i < 5 { 2.0 } else { 0.0 });
    let noise = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let y = problem.design() * beta + noise;
    (build_tikhonov_family(&problem).expect("family"), y)
}

/// Gaussian `n × p` design, identity penalty, `m` log-spaced penalties.
pub fn ridge_problem(n: usize, p: usize, m: usize, seed: u64) -> DesignProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    DesignProblem::new(x, DMatrix::identity(p, p), log_grid(1e-3, 1e3, m)).expect("valid problem")
}

pub fn log_grid(min: f64, max: f64, m: usize) -> Vec<f64> {
    if m == 1 {
        return vec![(min * max).sqrt()];
    }
    let step = (max / min).ln() / (m - 1) as f64;
    (0..m).map(|i| min * (step * i as f64).exp()).collect()
}

/// Point of `R^m` with entries spread on both sides of the simplex.
pub fn raw_weights(m: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// Monte Carlo experiment with `replicates` draws on an `m`-member ridge grid.
pub fn experiment(replicates: usize, m: usize) -> ExperimentConfig {
    ExperimentConfig {
        seed: 7,
        replicates,
        scenario: ScenarioSpec {
            n: 100,
            sigma: 1.0,
            mean: MeanSpec::SpectralDecay {
                rate: 1.0,
                scale: None,
                target_oracle_risk: Some(20.0),
            },
        },
        design: DesignSpec { p: 50, rows: None },
        families: FamiliesSpec::Single {
            penalty: PenaltySpec::Identity,
            grid: GridSpec::geometric(1e-3, 1e3, m),
        },
        methods: qagg_core::experiment::Method::ALL.to_vec(),
        temperature: None,
        solver: Default::default(),
        sweep: Default::default(),
    }
}
