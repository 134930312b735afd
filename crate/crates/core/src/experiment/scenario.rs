//! Turns an [`ExperimentConfig`] into a design, a candidate set and a ground
//! truth.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::config::{ExperimentConfig, FamilySpec, MeanSpec, PenaltySpec};
use crate::error::{check_len, Error, Result};
use crate::fits::CandidateSet;
use crate::smoother::{oracle_index, FamilyUnion, GroundTruth};
use crate::spectral::{build_tikhonov_family, DesignProblem, SpectralFamily};

/// Generator stream reserved for the random design; replicate `r` uses
/// stream `r`.
pub const DESIGN_STREAM: u64 = u64::MAX;

/// Everything a run needs besides the noise.
#[derive(Debug, Clone)]
pub struct Scenario {
    truth: GroundTruth,
    candidates: FamilyUnion,
    oracle: usize,
    r_star: f64,
    mean_coords: DVector<f64>,
    mean_off2: f64,
}

impl Scenario {
    pub fn truth(&self) -> &GroundTruth {
        &self.truth
    }

    pub fn candidates(&self) -> &FamilyUnion {
        &self.candidates
    }

    /// Oracle member `j*`.
    pub fn oracle(&self) -> usize {
        self.oracle
    }

    /// Oracle risk `R*`.
    pub fn r_star(&self) -> f64 {
        self.r_star
    }

    /// `Wᵀμ` in the candidates' fit basis.
    pub fn mean_coords(&self) -> &DVector<f64> {
        &self.mean_coords
    }

    /// `‖μ − WWᵀμ‖²`.
    pub fn mean_off2(&self) -> f64 {
        self.mean_off2
    }
}

/// Design, candidates and calibrated truth of `config`.
pub fn prepare(config: &ExperimentConfig) -> Result<Scenario> {
    config.validate()?;
    let x = build_design(config)?;
    let candidates = build_candidates(config, &x)?;
    let truth = resolve_truth(config, &candidates)?;
    assemble(candidates, truth)
}

/// Like [`prepare`] but with the truth fixed, so sweeps share one mean.
pub fn prepare_with_truth(config: &ExperimentConfig, truth: &GroundTruth) -> Result<Scenario> {
    config.validate()?;
    let x = build_design(config)?;
    let candidates = build_candidates(config, &x)?;
    check_len("mean", x.nrows(), truth.n())?;
    assemble(candidates, truth.clone())
}

fn assemble(candidates: FamilyUnion, truth: GroundTruth) -> Result<Scenario> {
    let (oracle, r_star) = oracle_index(&candidates, &truth)?;
    let w = candidates.fit_basis();
    let mean_coords = w.tr_mul(truth.mu());
    let mean_off2 = (truth.mu() - w * &mean_coords).norm_squared();
    Ok(Scenario {
        truth,
        candidates,
        oracle,
        r_star,
        mean_coords,
        mean_off2,
    })
}

pub fn build_design(config: &ExperimentConfig) -> Result<DMatrix<f64>> {
    let n = config.scenario.n;
    let p = config.design.p;
    match &config.design.rows {
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(DESIGN_STREAM);
            // Filled row by row so the draw order is the reading order.
            let entries: Vec<f64> = (0..n * p).map(|_| StandardNormal.sample(&mut rng)).collect();
            Ok(DMatrix::from_row_slice(n, p, &entries))
        }
        Some(rows) => dense_from_rows("design.rows", rows, n, p),
    }
}

fn dense_from_rows(what: &'static str, rows: &[Vec<f64>], n: usize, p: usize) -> Result<DMatrix<f64>> {
    check_len(what, n, rows.len())?;
    for row in rows {
        check_len(what, p, row.len())?;
    }
    Ok(DMatrix::from_row_iterator(n, p, rows.iter().flatten().copied()))
}

pub fn penalty_matrix(spec: &PenaltySpec, p: usize) -> Result<DMatrix<f64>> {
    Ok(match spec {
        PenaltySpec::Identity => DMatrix::identity(p, p),
        PenaltySpec::DiagPower { exponent } => {
            DMatrix::from_diagonal(&DVector::from_fn(p, |i, _| ((i + 1) as f64).powf(*exponent)))
        }
        PenaltySpec::Diagonal { values } => {
            check_len("penalty.values", p, values.len())?;
            DMatrix::from_diagonal(&DVector::from_column_slice(values))
        }
        PenaltySpec::Dense { rows } => dense_from_rows("penalty.rows", rows, p, p)?,
    })
}

/// Tikhonov family for one spec; a relative grid is scaled by the mean
/// squared singular value of `X K^{-1/2}`.
pub fn build_family(x: &DMatrix<f64>, spec: &FamilySpec) -> Result<SpectralFamily> {
    spec.grid.validate()?;
    let k = penalty_matrix(&spec.penalty, x.ncols())?;
    let unit = build_tikhonov_family(&DesignProblem::new(x.clone(), k, vec![1.0])?)?;
    unit.with_lambdas(spec.grid.values(unit.mean_squared_singular_value()))
}

pub fn build_candidates(config: &ExperimentConfig, x: &DMatrix<f64>) -> Result<FamilyUnion> {
    let families = config
        .families
        .expand()
        .iter()
        .map(|spec| build_family(x, spec))
        .collect::<Result<Vec<_>>>()?;
    FamilyUnion::new(families)
}

/// Mean vector for `config`, calibrated against `candidates` when asked.
pub fn resolve_truth(config: &ExperimentConfig, candidates: &FamilyUnion) -> Result<GroundTruth> {
    let n = config.scenario.n;
    let sigma = config.scenario.sigma;
    let basis = candidates.families()[0].basis();
    let mu = match &config.scenario.mean {
        MeanSpec::Zero => DVector::zeros(n),
        MeanSpec::Explicit { values } => {
            check_len("scenario.mean.values", n, values.len())?;
            DVector::from_column_slice(values)
        }
        MeanSpec::SingleSpike {
            coordinate,
            magnitude,
        } => {
            if *coordinate >= basis.ncols() {
                return Err(Error::InvalidParameter {
                    name: "scenario.mean.coordinate",
                    reason: format!("basis has {} directions", basis.ncols()),
                });
            }
            basis.column(*coordinate) * *magnitude
        }
        MeanSpec::SpectralDecay {
            rate,
            scale,
            target_oracle_risk,
        } => {
            let shape = basis * DVector::from_fn(basis.ncols(), |i, _| ((i + 1) as f64).powf(-rate));
            let scale = match (scale, target_oracle_risk) {
                (Some(_), Some(_)) => {
                    return Err(Error::InvalidParameter {
                        name: "scenario.mean",
                        reason: "give either `scale` or `target_oracle_risk`, not both".into(),
                    })
                }
                (Some(s), None) => *s,
                (None, Some(target)) => calibrate_scale(candidates, &shape, sigma, target * sigma * sigma)?,
                (None, None) => 1.0,
            };
            shape * scale
        }
    };
    GroundTruth::new(mu, sigma)
}

/// Scale `s` with `min_j E‖A_j y − μ‖² = target` for `μ = s·shape`.
///
/// Each risk is `variance_j + s²·bias_j`, so `R*(s)` is continuous and
/// nondecreasing; bisection on `s` finds the root.
pub fn calibrate_scale(
    candidates: &FamilyUnion,
    shape: &DVector<f64>,
    sigma: f64,
    target: f64,
) -> Result<f64> {
    let zero = GroundTruth::new(DVector::zeros(shape.len()), sigma)?;
    let unit = GroundTruth::new(shape.clone(), sigma)?;
    let mut terms = Vec::with_capacity(candidates.len());
    for j in 0..candidates.len() {
        let variance = candidates.exact_risk(j, &zero)?;
        let bias = candidates.exact_risk(j, &unit)? - variance;
        terms.push((variance, bias.max(0.0)));
    }
    let r_star = |s: f64| {
        terms
            .iter()
            .map(|(v, b)| v + s * s * b)
            .fold(f64::INFINITY, f64::min)
    };
    if r_star(0.0) > target {
        return Err(Error::InvalidParameter {
            name: "scenario.mean.target_oracle_risk",
            reason: format!("below the pure-variance oracle risk {}", r_star(0.0)),
        });
    }
    let mut hi = 1.0;
    let mut doublings = 0;
    while r_star(hi) < target {
        hi *= 2.0;
        doublings += 1;
        if doublings > 200 {
            return Err(Error::InvalidParameter {
                name: "scenario.mean.target_oracle_risk",
                reason: "not reachable by scaling the mean".into(),
            });
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if r_star(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
