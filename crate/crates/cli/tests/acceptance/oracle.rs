//! Dense-matrix references used by the acceptance checks.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_matrix(rng: &mut ChaCha8Rng, n: usize, p: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, p, |_, _| rng.sample(StandardNormal))
}

pub fn gaussian_vector(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

pub fn random_spd(rng: &mut ChaCha8Rng, p: usize) -> DMatrix<f64> {
    let g = gaussian_matrix(rng, p, p);
    &g * g.transpose() + DMatrix::identity(p, p) * 0.5
}

/// Sorted distinct log-uniform grid on [1e-3, 1e3].
pub fn random_grid(rng: &mut ChaCha8Rng, m: usize) -> Vec<f64> {
    let mut grid: Vec<f64> = (0..m).map(|_| 10f64.powf(rng.gen_range(-3.0..3.0))).collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    grid
}

pub fn random_simplex_point(rng: &mut ChaCha8Rng, m: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..m).map(|_| -rng.gen_range(1e-12f64..1.0).ln()).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

/// `X(XᵀX + λK)⁻¹Xᵀ`.
pub fn fit_map(x: &DMatrix<f64>, k: &DMatrix<f64>, lambda: f64) -> DMatrix<f64> {
    let system = x.transpose() * x + k * lambda;
    x * system.lu().solve(&x.transpose()).expect("nonsingular system")
}

pub fn cp(a: &DMatrix<f64>, y: &DVector<f64>, sigma: f64) -> f64 {
    (a * y - y).norm_squared() + 2.0 * sigma * sigma * a.trace()
}

pub fn combine(mats: &[DMatrix<f64>], theta: &[f64]) -> DMatrix<f64> {
    let n = mats[0].nrows();
    mats.iter()
        .zip(theta)
        .fold(DMatrix::zeros(n, n), |acc, (a, t)| acc + a * *t)
}

/// `Cp(A_θ) + ½ Σ θ_j ‖(A_θ − A_j)y‖²`.
pub fn objective_penalized(mats: &[DMatrix<f64>], theta: &[f64], y: &DVector<f64>, sigma: f64) -> f64 {
    let a_theta = combine(mats, theta);
    let spread: f64 = mats
        .iter()
        .zip(theta)
        .map(|(a, t)| t * ((&a_theta - a) * y).norm_squared())
        .sum();
    cp(&a_theta, y, sigma) + 0.5 * spread
}

/// `½‖A_θy − y‖² + 2σ² tr(A_θ) + ½ Σ θ_j ‖A_jy − y‖²`.
pub fn objective_convex(mats: &[DMatrix<f64>], theta: &[f64], y: &DVector<f64>, sigma: f64) -> f64 {
    let a_theta = combine(mats, theta);
    let spread: f64 = mats.iter().zip(theta).map(|(a, t)| t * (a * y - y).norm_squared()).sum();
    0.5 * (&a_theta * y - y).norm_squared() + 2.0 * sigma * sigma * a_theta.trace() + 0.5 * spread
}
