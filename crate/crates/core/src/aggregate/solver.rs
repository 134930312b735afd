//! Accelerated projected gradient for the Q-aggregation program.
//!
//! The iterate is projected onto the simplex after every gradient step, with
//! momentum reset whenever the objective increases. Every `polish_every`
//! iterations the support of the iterate is handed to an active-set
//! refinement that solves the program restricted to faces of the simplex
//! exactly; once the support is identified this finishes the solve in a few
//! small linear solves. Convergence is declared by the KKT certificate
//! `min_k ∇H(θ)·(e_k − θ) ≥ −kkt_tol·(1 + |H(θ)|)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{argmin, kkt_from_gradient, project_onto_simplex, QObjective, SimplexWeights, SolveReport};
use crate::error::Result;
use crate::fits::Fits;
use crate::linalg;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    /// Cap on gradient iterations plus active-set steps.
    pub max_iters: usize,
    /// Relative tolerance on the KKT certificate.
    pub kkt_tol: f64,
    /// Gradient iterations between active-set refinements (0 disables them).
    pub polish_every: usize,
    /// Faces with more members than this are not refined.
    pub max_polish_support: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iters: 10_000,
            kkt_tol: 1e-7,
            polish_every: 25,
            max_polish_support: 256,
        }
    }
}

/// Current point with everything derived from it.
#[derive(Debug, Clone)]
struct Point {
    theta: DVector<f64>,
    grad: DVector<f64>,
    value: f64,
    kkt: f64,
}

struct Problem<'o, 'f, 'a> {
    objective: &'o QObjective<'f, 'a>,
    linear: DVector<f64>,
    half_off: f64,
}

impl Problem<'_, '_, '_> {
    fn coords(&self) -> &DMatrix<f64> {
        self.objective.fits().coords()
    }

    fn evaluate(&self, theta: DVector<f64>) -> Point {
        let fits = self.objective.fits();
        let resid = self.coords() * &theta - fits.target();
        let grad = self.coords().tr_mul(&resid) + &self.linear;
        let value = 0.5 * resid.norm_squared() + self.half_off + self.linear.dot(&theta);
        let kkt = kkt_from_gradient(&grad, &theta);
        Point {
            theta,
            grad,
            value,
            kkt,
        }
    }
}

fn certified(point: &Point, tol: f64) -> bool {
    point.kkt >= -tol * (1.0 + point.value.abs())
}

/// Solves the program for precomputed fits.
pub fn solve_fits(fits: &Fits<'_>, sigma: f64, opts: &SolverOptions) -> Result<SolveReport> {
    let objective = QObjective::new(fits, sigma)?;
    let problem = Problem {
        objective: &objective,
        linear: objective.linear_term(),
        half_off: 0.5 * fits.off_span2(),
    };
    let m = fits.len();

    // H(e_k) = Cp(A_k): start from the best vertex.
    let start = argmin(objective.cp_all().iter().copied()).expect("nonempty fits");
    let mut x = problem.evaluate(unit(m, start));
    let mut best = x.clone();
    if certified(&x, opts.kkt_tol) {
        return finish(fits, best, 0, true);
    }

    let lipschitz = {
        let l = linalg::gram_spectral_norm(problem.coords(), 500, 1e-10);
        // Power iteration approaches from below.
        (l * 1.02).max(1e-12 * (1.0 + problem.linear.amax()))
    };
    let step = lipschitz.recip();

    let mut v_theta = x.theta.clone();
    let mut v_grad = x.grad.clone();
    let mut momentum = 1.0_f64;
    let mut iterations = 0;

    while iterations < opts.max_iters {
        iterations += 1;
        let trial: Vec<f64> = v_theta
            .iter()
            .zip(v_grad.iter())
            .map(|(t, g)| t - step * g)
            .collect();
        let mut next = problem.evaluate(DVector::from_vec(project_onto_simplex(&trial)));

        if opts.polish_every > 0 && iterations % opts.polish_every == 0 {
            let budget = opts.max_iters.saturating_sub(iterations);
            let (refined, steps) = refine_active_set(&problem, next.clone(), opts, budget);
            iterations += steps;
            if refined.value <= next.value {
                next = refined;
                momentum = 1.0;
            }
        }

        if next.value < best.value || (next.value == best.value && next.kkt > best.kkt) {
            best = next.clone();
        }
        if certified(&next, opts.kkt_tol) {
            return finish(fits, next, iterations, true);
        }

        if next.value > x.value {
            // Restart: drop momentum.
            momentum = 1.0;
            v_theta = next.theta.clone();
            v_grad = next.grad.clone();
        } else {
            let following = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
            let beta = (momentum - 1.0) / following;
            momentum = following;
            // The gradient is affine in θ, so it extrapolates exactly.
            v_theta = &next.theta * (1.0 + beta) - &x.theta * beta;
            v_grad = &next.grad * (1.0 + beta) - &x.grad * beta;
        }
        x = next;
    }

    let budget = opts.max_iters.saturating_sub(iterations);
    let (refined, steps) = refine_active_set(&problem, best.clone(), opts, budget);
    if refined.value <= best.value {
        best = refined;
    }
    let converged = certified(&best, opts.kkt_tol);
    if !converged {
        tracing::debug!(kkt = best.kkt, value = best.value, "Q-aggregation did not converge");
    }
    finish(fits, best, iterations + steps, converged)
}

fn unit(m: usize, k: usize) -> DVector<f64> {
    let mut e = DVector::zeros(m);
    e[k] = 1.0;
    e
}

fn finish(fits: &Fits<'_>, point: Point, iterations: usize, converged: bool) -> Result<SolveReport> {
    let weights = SimplexWeights::from_fits(point.theta.iter().copied().collect(), fits)?;
    Ok(SolveReport {
        weights,
        objective: point.value,
        kkt_residual: point.kkt,
        iterations,
        converged,
    })
}

/// Primal active-set iterations started from the support of `point`.
///
/// Each step minimizes the objective on the affine hull of the current face.
/// If that minimizer leaves the simplex, the step stops at the boundary and
/// the blocking member leaves the support; otherwise the member with the most
/// negative reduced gradient joins. Steps that do not lower the objective
/// end the refinement, as does exhausting `budget` steps.
fn refine_active_set(
    problem: &Problem<'_, '_, '_>,
    point: Point,
    opts: &SolverOptions,
    budget: usize,
) -> (Point, usize) {
    let m = point.theta.len();
    let mut current = point;
    let mut support: Vec<usize> = (0..m).filter(|&j| current.theta[j] > 0.0).collect();
    let max_steps = (4 * m + 16).min(budget);
    let mut steps = 0;
    while steps < max_steps {
        if certified(&current, opts.kkt_tol) || support.len() > opts.max_polish_support {
            break;
        }
        steps += 1;
        let Some(face_opt) = face_minimizer(problem, &support) else {
            break;
        };
        let mut direction = DVector::zeros(m);
        for (slot, &j) in support.iter().enumerate() {
            direction[j] = face_opt[slot] - current.theta[j];
        }
        // Ratio test against θ ≥ 0.
        let mut alpha = 1.0_f64;
        let mut blocking = None;
        for &j in &support {
            if direction[j] < 0.0 {
                let ratio = current.theta[j] / -direction[j];
                if ratio < alpha {
                    alpha = ratio;
                    blocking = Some(j);
                }
            }
        }
        let mut theta = &current.theta + &direction * alpha;
        if let Some(j) = blocking {
            theta[j] = 0.0;
        }
        theta.iter_mut().for_each(|t| *t = t.max(0.0));
        let total = theta.sum();
        theta /= total;
        let candidate = problem.evaluate(theta);
        if candidate.value > current.value + 1e-14 * (1.0 + current.value.abs()) {
            break;
        }
        current = candidate;
        support = (0..m).filter(|&j| current.theta[j] > 0.0).collect();
        if blocking.is_none() {
            // Face optimum reached: bring in the most attractive vertex.
            let entering = argmin(current.grad.iter().copied()).expect("nonempty");
            if support.contains(&entering) {
                break;
            }
            support.push(entering);
            support.sort_unstable();
        }
    }
    (current, steps)
}

/// Minimizer of the objective over `{θ : θ_j = 0 for j ∉ S, Σθ = 1}`,
/// from the (pseudo-inverse) solution of the KKT system
/// `[C_SᵀC_S 1; 1ᵀ 0][θ; ν] = [C_Sᵀb − l_S; 1]`.
fn face_minimizer(problem: &Problem<'_, '_, '_>, support: &[usize]) -> Option<Vec<f64>> {
    let s = support.len();
    if s == 0 {
        return None;
    }
    let c_s = problem.coords().select_columns(support.iter());
    let gram = c_s.tr_mul(&c_s);
    let rhs_top = c_s.tr_mul(problem.objective.fits().target());
    let mut system = DMatrix::zeros(s + 1, s + 1);
    system.view_mut((0, 0), (s, s)).copy_from(&gram);
    let mut rhs = DVector::zeros(s + 1);
    for (slot, &j) in support.iter().enumerate() {
        system[(slot, s)] = 1.0;
        system[(s, slot)] = 1.0;
        rhs[slot] = rhs_top[slot] - problem.linear[j];
    }
    rhs[s] = 1.0;
    let scale = system.amax().max(1.0);
    let svd = system.clone().try_svd(true, true, f64::EPSILON, 0)?;
    let solution = svd.solve(&rhs, 1e-12 * scale).ok()?;
    // An inconsistent system means the face problem is unbounded along a
    // flat direction; the pseudo-inverse answer is then not a minimizer.
    let residual = (&system * &solution - &rhs).amax();
    if !residual.is_finite() || residual > 1e-8 * (rhs.amax() + 1.0) * scale {
        return None;
    }
    Some(solution.rows(0, s).iter().copied().collect())
}
