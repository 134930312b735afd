//! Q-aggregation over the simplex, its optimality certificate, and the
//! selection baselines it is compared with.
//!
//! For weights `θ` in the simplex, `A_θ = Σ θ_j A_j` and the objective is
//!
//! ```text
//! H(θ) = ½‖A_θy − y‖² + 2σ² tr(A_θ) + ½ Σ θ_j ‖A_jy − y‖²
//! ```
//!
//! which equals `Cp(A_θ) + ½ Σ θ_j ‖(A_θ − A_j)y‖²`. The first form is a
//! convex quadratic in `θ`; the second is evaluated independently by
//! [`QObjective::value_penalized`].

mod simplex;
mod solver;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, check_positive, Error, Result};
use crate::fits::{CandidateSet, Fits};

pub use simplex::project_onto_simplex;
pub use solver::{solve_fits, SolverOptions};

/// Tolerance on `Σ θ_j = 1` accepted before renormalization.
const SIMPLEX_TOLERANCE: f64 = 1e-9;

/// A point of the simplex together with the fit `A_θ y` it induces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimplexWeights {
    theta: Vec<f64>,
    fitted: DVector<f64>,
}

impl SimplexWeights {
    /// Validates nonnegativity and the unit sum (within `1e-9`), then
    /// renormalizes.
    pub fn new(theta: Vec<f64>, fitted: DVector<f64>) -> Result<Self> {
        let theta = normalize_simplex(theta)?;
        Ok(Self { theta, fitted })
    }

    pub(crate) fn from_fits(theta: Vec<f64>, fits: &Fits<'_>) -> Result<Self> {
        let theta = normalize_simplex(theta)?;
        let fitted = fits.fitted(&DVector::from_column_slice(&theta));
        Ok(Self { theta, fitted })
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn theta_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.theta)
    }

    /// `A_θ y`.
    pub fn fitted(&self) -> &DVector<f64> {
        &self.fitted
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }
}

fn normalize_simplex(mut theta: Vec<f64>) -> Result<Vec<f64>> {
    if theta.is_empty() {
        return Err(Error::Empty("weights"));
    }
    if let Some(bad) = theta.iter().find(|t| !t.is_finite() || **t < 0.0) {
        return Err(Error::InvalidParameter {
            name: "theta",
            reason: format!("weight {bad} is negative or not finite"),
        });
    }
    let total: f64 = theta.iter().sum();
    if (total - 1.0).abs() > SIMPLEX_TOLERANCE {
        return Err(Error::InvalidParameter {
            name: "theta",
            reason: format!("weights sum to {total}, not 1"),
        });
    }
    theta.iter_mut().for_each(|t| *t /= total);
    Ok(theta)
}

/// Output of the Q-aggregation solver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub weights: SimplexWeights,
    /// Objective value `H(θ̂)`.
    pub objective: f64,
    /// `min_k ∇H(θ̂)·(e_k − θ̂)`; nonnegative at an exact optimum.
    pub kkt_residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// The aggregation objective bound to one set of fits and a noise level.
#[derive(Debug, Clone, Copy)]
pub struct QObjective<'f, 'a> {
    fits: &'f Fits<'a>,
    sigma2: f64,
}

impl<'f, 'a> QObjective<'f, 'a> {
    pub fn new(fits: &'f Fits<'a>, sigma: f64) -> Result<Self> {
        check_positive("sigma", sigma)?;
        Ok(Self {
            fits,
            sigma2: sigma * sigma,
        })
    }

    pub fn fits(&self) -> &Fits<'a> {
        self.fits
    }

    /// Linear part of `H`: `2σ² df_j + ½‖A_jy − y‖²`.
    pub fn linear_term(&self) -> DVector<f64> {
        self.fits.df() * (2.0 * self.sigma2) + self.fits.residual2() * 0.5
    }

    /// `H(θ)` in its convex form.
    pub fn value(&self, theta: &DVector<f64>) -> Result<f64> {
        self.fits.check_theta(theta)?;
        let resid = self.fits.combine(theta) - self.fits.target();
        Ok(0.5 * (resid.norm_squared() + self.fits.off_span2()) + self.linear_term().dot(theta))
    }

    /// `Cp(A_θ) + ½ Σ θ_j ‖(A_θ − A_j)y‖²`.
    pub fn value_penalized(&self, theta: &DVector<f64>) -> Result<f64> {
        self.fits.check_theta(theta)?;
        let combined = self.fits.combine(theta);
        let cp = (&combined - self.fits.target()).norm_squared()
            + self.fits.off_span2()
            + 2.0 * self.sigma2 * self.fits.df().dot(theta);
        let coords = self.fits.coords();
        let penalty: f64 = theta
            .iter()
            .enumerate()
            .filter(|(_, &t)| t != 0.0)
            .map(|(j, &t)| t * (&combined - coords.column(j)).norm_squared())
            .sum();
        Ok(cp + 0.5 * penalty)
    }

    /// `∇H(θ) = Cᵀ(Cθ − b) + 2σ² df + ½ residual²`, with `C` the fit
    /// coordinates and `b = Wᵀy`.
    pub fn gradient(&self, theta: &DVector<f64>) -> Result<DVector<f64>> {
        self.fits.check_theta(theta)?;
        let resid = self.fits.combine(theta) - self.fits.target();
        Ok(self.fits.coords().tr_mul(&resid) + self.linear_term())
    }

    /// `min_k ∇H(θ)·(e_k − θ)`.
    pub fn kkt_residual(&self, theta: &DVector<f64>) -> Result<f64> {
        let grad = self.gradient(theta)?;
        Ok(kkt_from_gradient(&grad, theta))
    }

    /// `Cp(A_j)`.
    pub fn cp(&self, j: usize) -> f64 {
        self.fits.residual2()[j] + 2.0 * self.sigma2 * self.fits.df()[j]
    }

    pub fn cp_all(&self) -> DVector<f64> {
        self.fits.residual2() + self.fits.df() * (2.0 * self.sigma2)
    }
}

pub(crate) fn kkt_from_gradient(grad: &DVector<f64>, theta: &DVector<f64>) -> f64 {
    grad.min() - grad.dot(theta)
}

fn check_member<C: CandidateSet + ?Sized>(set: &C, j: usize) -> Result<()> {
    if j < set.len() {
        Ok(())
    } else {
        Err(Error::IndexOutOfRange {
            index: j,
            len: set.len(),
        })
    }
}

fn project<'s, C: CandidateSet + ?Sized>(set: &'s C, y: &DVector<f64>) -> Result<Fits<'s>> {
    check_len("response", set.dim(), y.len())?;
    set.project(y)
}

/// Mallows `Cp(A_j) = ‖A_jy − y‖² + 2σ² tr(A_j)`.
pub fn cp_criterion<C: CandidateSet + ?Sized>(
    set: &C,
    j: usize,
    y: &DVector<f64>,
    sigma: f64,
) -> Result<f64> {
    check_member(set, j)?;
    let fits = project(set, y)?;
    Ok(QObjective::new(&fits, sigma)?.cp(j))
}

/// `H(θ)` in the convex form.
pub fn q_objective<C: CandidateSet + ?Sized>(
    set: &C,
    theta: &[f64],
    y: &DVector<f64>,
    sigma: f64,
) -> Result<f64> {
    let fits = project(set, y)?;
    QObjective::new(&fits, sigma)?.value(&DVector::from_column_slice(theta))
}

/// `H(θ)` in the Cp-plus-penalty form.
pub fn q_objective_penalized<C: CandidateSet + ?Sized>(
    set: &C,
    theta: &[f64],
    y: &DVector<f64>,
    sigma: f64,
) -> Result<f64> {
    let fits = project(set, y)?;
    QObjective::new(&fits, sigma)?.value_penalized(&DVector::from_column_slice(theta))
}

/// KKT certificate `min_k ∇H(θ)·(e_k − θ)`.
pub fn certify_kkt<C: CandidateSet + ?Sized>(
    set: &C,
    theta: &[f64],
    y: &DVector<f64>,
    sigma: f64,
) -> Result<f64> {
    let fits = project(set, y)?;
    QObjective::new(&fits, sigma)?.kkt_residual(&DVector::from_column_slice(theta))
}

/// Solves the Q-aggregation program for `y`.
pub fn solve_q_aggregation<C: CandidateSet + ?Sized>(
    set: &C,
    y: &DVector<f64>,
    sigma: f64,
    opts: &SolverOptions,
) -> Result<SolveReport> {
    check_positive("sigma", sigma)?;
    let fits = project(set, y)?;
    solve_fits(&fits, sigma, opts)
}

/// Both sides of the deterministic inequality for weights `θ` against the
/// vertex `k`, given the noise in fit-basis coordinates `Wᵀε`.
///
/// With `a_j = 2εᵀ(A_j − A_k)y − 2σ² tr(A_j − A_k) − ½‖(A_j − A_k)y‖²`:
/// `excess = ‖A_θy − μ‖² − ‖A_ky − μ‖²`, `weighted = Σ θ_j a_j` and
/// `bound = max_j a_j`. The identity `weighted − excess = ∇H(θ)·(e_k − θ)`
/// holds for every θ, so at a certified optimum `excess ≤ bound`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeterministicInequality {
    pub excess: f64,
    pub weighted: f64,
    pub bound: f64,
}

pub fn deterministic_inequality(
    objective: &QObjective<'_, '_>,
    theta: &DVector<f64>,
    noise_coords: &DVector<f64>,
    k: usize,
) -> Result<DeterministicInequality> {
    let fits = objective.fits();
    fits.check_theta(theta)?;
    check_len("noise coordinates", fits.target().len(), noise_coords.len())?;
    if k >= fits.len() {
        return Err(Error::IndexOutOfRange {
            index: k,
            len: fits.len(),
        });
    }
    let coords = fits.coords();
    let vertex = coords.column(k);
    let noise_dot = coords.tr_mul(noise_coords);
    let noise_k = noise_dot[k];
    let df_k = fits.df()[k];
    let a: Vec<f64> = (0..fits.len())
        .map(|j| {
            2.0 * (noise_dot[j] - noise_k)
                - 2.0 * objective.sigma2 * (fits.df()[j] - df_k)
                - 0.5 * (coords.column(j) - vertex).norm_squared()
        })
        .collect();
    // Off-span parts of μ cancel in the excess; Wᵀμ = Wᵀy − Wᵀε.
    let mean = fits.target() - noise_coords;
    let excess = (fits.combine(theta) - &mean).norm_squared() - (vertex - &mean).norm_squared();
    let weighted = a.iter().zip(theta.iter()).map(|(a, t)| a * t).sum();
    let bound = a.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(DeterministicInequality {
        excess,
        weighted,
        bound,
    })
}

/// Index of the smallest value; ties go to the smallest index.
pub(crate) fn argmin(values: impl IntoIterator<Item = f64>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (j, v) in values.into_iter().enumerate() {
        match best {
            Some((_, b)) if !(v < b) => {}
            _ => best = Some((j, v)),
        }
    }
    best.map(|(j, _)| j)
}

/// Member minimizing `Cp`.
pub fn select_cp<C: CandidateSet + ?Sized>(set: &C, y: &DVector<f64>, sigma: f64) -> Result<usize> {
    let fits = project(set, y)?;
    Ok(select_cp_fits(&QObjective::new(&fits, sigma)?))
}

pub(crate) fn select_cp_fits(objective: &QObjective<'_, '_>) -> usize {
    argmin(objective.cp_all().iter().copied()).expect("nonempty fits")
}

/// Result of GCV selection.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GcvSelection {
    pub index: usize,
    /// Members whose trace is within tolerance of `n`.
    pub excluded: Vec<usize>,
}

/// Member minimizing `‖A_jy − y‖² / (n − tr A_j)²`.
///
/// Members with `tr(A_j) ≥ n − 1e-9·n` have a degenerate denominator and
/// are skipped with a warning.
pub fn select_gcv<C: CandidateSet + ?Sized>(set: &C, y: &DVector<f64>) -> Result<GcvSelection> {
    let fits = project(set, y)?;
    select_gcv_fits(&fits, set.dim())
}

pub(crate) fn select_gcv_fits(fits: &Fits<'_>, n: usize) -> Result<GcvSelection> {
    let n = n as f64;
    let limit = n - 1e-9 * n;
    let mut excluded = Vec::new();
    let scores: Vec<f64> = (0..fits.len())
        .map(|j| {
            let df = fits.df()[j];
            if df >= limit {
                excluded.push(j);
                f64::INFINITY
            } else {
                fits.residual2()[j] / (n - df).powi(2)
            }
        })
        .collect();
    if !excluded.is_empty() {
        tracing::warn!(?excluded, "GCV skipped members with trace close to n");
    }
    if excluded.len() == scores.len() {
        return Err(Error::NoEligibleMember("GCV selection"));
    }
    let index = argmin(scores).expect("nonempty fits");
    Ok(GcvSelection { index, excluded })
}

/// Default temperature `4σ²` for exponential weighting.
pub fn default_temperature(sigma: f64) -> f64 {
    4.0 * sigma * sigma
}

/// Softmax of `−Cp(A_j)/temperature` over members.
pub fn exponential_weights<C: CandidateSet + ?Sized>(
    set: &C,
    y: &DVector<f64>,
    sigma: f64,
    temperature: f64,
) -> Result<SimplexWeights> {
    let fits = project(set, y)?;
    let objective = QObjective::new(&fits, sigma)?;
    let theta = softmax_weights(&objective.cp_all(), temperature)?;
    SimplexWeights::from_fits(theta, &fits)
}

pub(crate) fn softmax_weights(cp: &DVector<f64>, temperature: f64) -> Result<Vec<f64>> {
    check_positive("temperature", temperature)?;
    let min = cp.min();
    let raw: Vec<f64> = cp.iter().map(|c| (-(c - min) / temperature).exp()).collect();
    let total: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|w| w / total).collect())
}
