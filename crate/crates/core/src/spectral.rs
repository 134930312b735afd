//! Families of simultaneously diagonalizable smoothers.
//!
//! A [`SpectralFamily`] stores a shared orthonormal basis `U` (n×r) and, for
//! every member `j`, the eigenvalues `alphas[j][i]` of `A_j` on column `i` of
//! `U`. Members act as `A_j = U diag(alphas[j]) Uᵀ`, so every operation on a
//! family of `M` members costs `O(n·r + r·M)` instead of `O(n²·M)`.
//!
//! Tikhonov families are built from a [`DesignProblem`]: with
//! `B = X K^{-1/2} = U diag(s) Vᵀ`, the fit map of `λ_j` is
//! `X(XᵀX + λ_j K)⁻¹Xᵀ = U diag(s²/(s² + λ_j)) Uᵀ`.

use nalgebra::{DMatrix, DVector};

use crate::aggregate::SimplexWeights;
use crate::error::{check_len, Error, Result};
use crate::linalg;

/// Singular values below this fraction of the largest one are dropped.
pub const RANK_TOLERANCE: f64 = 1e-12;

/// Tolerance used when validating orthonormality and eigenvalue ranges of
/// user-supplied spectra.
const STRUCTURE_TOLERANCE: f64 = 1e-9;

/// Design, penalty and tuning grid of a Tikhonov problem.
#[derive(Debug, Clone)]
pub struct DesignProblem {
    x: DMatrix<f64>,
    penalty: DMatrix<f64>,
    lambdas: Vec<f64>,
}

impl DesignProblem {
    /// Validates shapes and canonicalizes the grid (sorted ascending).
    ///
    /// The penalty is symmetrized; positive definiteness is checked when the
    /// family is built.
    pub fn new(x: DMatrix<f64>, penalty: DMatrix<f64>, lambdas: Vec<f64>) -> Result<Self> {
        let p = x.ncols();
        check_len("penalty rows", p, penalty.nrows())?;
        check_len("penalty columns", p, penalty.ncols())?;
        if x.iter().chain(penalty.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "design",
                reason: "design and penalty entries must be finite".into(),
            });
        }
        let lambdas = canonical_grid(lambdas)?;
        let penalty = (&penalty + penalty.transpose()) * 0.5;
        Ok(Self { x, penalty, lambdas })
    }

    /// Ridge problem: identity penalty.
    pub fn ridge(x: DMatrix<f64>, lambdas: Vec<f64>) -> Result<Self> {
        let p = x.ncols();
        Self::new(x, DMatrix::identity(p, p), lambdas)
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn penalty(&self) -> &DMatrix<f64> {
        &self.penalty
    }

    /// Sorted, duplicate-free tuning grid.
    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }
}

/// Sorts a tuning grid ascending; rejects negative, non-finite and exactly
/// repeated values.
pub fn canonical_grid(mut lambdas: Vec<f64>) -> Result<Vec<f64>> {
    if lambdas.is_empty() {
        return Err(Error::Empty("tuning grid"));
    }
    if let Some(&bad) = lambdas.iter().find(|l| !l.is_finite() || **l < 0.0) {
        return Err(Error::InvalidLambda(bad));
    }
    lambdas.sort_by(f64::total_cmp);
    if let Some(w) = lambdas.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::DuplicateLambda(w[0]));
    }
    Ok(lambdas)
}

/// Maps spectral coordinates back to coefficient space:
/// `ŵ_j = map · (alphas[j] ⊙ Uᵀy)` with `map = K^{-1/2} V diag(1/s)`.
#[derive(Debug, Clone)]
struct CoefficientMap {
    map: DMatrix<f64>,
}

/// Shared eigenbasis plus per-member eigenvalues.
#[derive(Debug, Clone)]
pub struct SpectralFamily {
    basis: DMatrix<f64>,
    sing_vals: DVector<f64>,
    alphas: DMatrix<f64>,
    right_factor: Option<CoefficientMap>,
    lambdas: Option<Vec<f64>>,
    family_id: usize,
}

/// Builds the Tikhonov family `{X(XᵀX + λ_j K)⁻¹Xᵀ}` of `problem`.
pub fn build_tikhonov_family(problem: &DesignProblem) -> Result<SpectralFamily> {
    let p = problem.p();
    let k_eig = linalg::sym_eigen(problem.penalty());
    let k_max = k_eig.eigenvalues.iter().copied().fold(0.0, f64::max);
    let k_min = k_eig
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    if p > 0 && (k_min <= 0.0 || k_min <= f64::EPSILON * k_max * p as f64) {
        return Err(Error::NotPositiveDefinite {
            min_eigenvalue: k_min,
        });
    }
    let inv_sqrt = DVector::from_iterator(p, k_eig.eigenvalues.iter().map(|v| v.sqrt().recip()));
    let k_inv_sqrt =
        &k_eig.eigenvectors * DMatrix::from_diagonal(&inv_sqrt) * k_eig.eigenvectors.transpose();

    let b = problem.design() * &k_inv_sqrt;
    let (u, s, v) = linalg::thin_svd(&b)?;
    let s_max = s.iter().copied().fold(0.0, f64::max);
    let rank = s
        .iter()
        .take_while(|&&si| s_max > 0.0 && si >= RANK_TOLERANCE * s_max)
        .count();
    let basis = u.columns(0, rank).into_owned();
    let sing_vals = s.rows(0, rank).into_owned();
    let v_r = v.columns(0, rank).into_owned();

    let lambdas = problem.lambdas().to_vec();
    let alphas = DMatrix::from_fn(lambdas.len(), rank, |j, i| tikhonov_eigenvalue(sing_vals[i], lambdas[j]));

    let inv_s = DVector::from_iterator(rank, sing_vals.iter().map(|x| x.recip()));
    let map = k_inv_sqrt * v_r * DMatrix::from_diagonal(&inv_s);

    Ok(SpectralFamily {
        basis,
        sing_vals,
        alphas,
        right_factor: Some(CoefficientMap { map }),
        lambdas: Some(lambdas),
        family_id: 0,
    })
}

/// `μ²/(μ² + λ)`, equal to 1 at `λ = 0` for any retained direction.
pub fn tikhonov_eigenvalue(sing_val: f64, lambda: f64) -> f64 {
    let s2 = sing_val * sing_val;
    if lambda == 0.0 {
        1.0
    } else {
        s2 / (s2 + lambda)
    }
}

impl SpectralFamily {
    /// Family given directly by its spectrum, without a design problem.
    ///
    /// `basis` must have orthonormal columns, `alphas` is M×r with entries in
    /// `[0, 1]`, and the members must be totally ordered (for every pair, the
    /// eigenvalue differences share one sign). Singular values are recorded
    /// as NaN and coefficient recovery is unavailable.
    pub fn from_spectrum(basis: DMatrix<f64>, alphas: DMatrix<f64>) -> Result<Self> {
        let r = basis.ncols();
        check_len("spectrum columns", r, alphas.ncols())?;
        if alphas.nrows() == 0 {
            return Err(Error::Empty("family"));
        }
        let gram_err = (basis.transpose() * &basis - DMatrix::identity(r, r)).abs().max();
        if r > 0 && gram_err > STRUCTURE_TOLERANCE {
            return Err(Error::InvalidParameter {
                name: "basis",
                reason: format!("columns are not orthonormal (deviation {gram_err:e})"),
            });
        }
        if let Some(bad) = alphas
            .iter()
            .find(|a| !(-STRUCTURE_TOLERANCE..=1.0 + STRUCTURE_TOLERANCE).contains(*a))
        {
            return Err(Error::InvalidParameter {
                name: "alphas",
                reason: format!("eigenvalue {bad} outside [0, 1]"),
            });
        }
        let family = Self {
            basis,
            sing_vals: DVector::from_element(r, f64::NAN),
            alphas: alphas.map(|a| a.clamp(0.0, 1.0)),
            right_factor: None,
            lambdas: None,
            family_id: 0,
        };
        if !family.is_totally_ordered(STRUCTURE_TOLERANCE) {
            return Err(Error::InvalidParameter {
                name: "alphas",
                reason: "members are not totally ordered".into(),
            });
        }
        Ok(family)
    }

    /// The same Tikhonov design and penalty over a different grid.
    pub fn with_lambdas(&self, lambdas: Vec<f64>) -> Result<Self> {
        if self.lambdas.is_none() {
            return Err(Error::MissingCoefficientMap);
        }
        let lambdas = canonical_grid(lambdas)?;
        let alphas = DMatrix::from_fn(lambdas.len(), self.rank(), |j, i| {
            tikhonov_eigenvalue(self.sing_vals[i], lambdas[j])
        });
        Ok(Self {
            alphas,
            lambdas: Some(lambdas),
            ..self.clone()
        })
    }

    /// Mean of the squared retained singular values of `X K^{-1/2}`.
    pub fn mean_squared_singular_value(&self) -> f64 {
        if self.rank() == 0 {
            return 0.0;
        }
        self.sing_vals.norm_squared() / self.rank() as f64
    }

    pub fn with_family_id(mut self, id: usize) -> Self {
        self.family_id = id;
        self
    }

    pub fn family_id(&self) -> usize {
        self.family_id
    }

    /// Number of members `M`.
    pub fn len(&self) -> usize {
        self.alphas.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Ambient dimension `n`.
    pub fn dim(&self) -> usize {
        self.basis.nrows()
    }

    /// Number of retained basis directions `r`.
    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn sing_vals(&self) -> &DVector<f64> {
        &self.sing_vals
    }

    /// M×r eigenvalue table.
    pub fn alphas(&self) -> &DMatrix<f64> {
        &self.alphas
    }

    /// Tuning parameters, for families built from a design problem.
    pub fn lambdas(&self) -> Option<&[f64]> {
        self.lambdas.as_deref()
    }

    pub fn has_coefficient_map(&self) -> bool {
        self.right_factor.is_some()
    }

    pub(crate) fn check_index(&self, j: usize) -> Result<()> {
        if j < self.len() {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange {
                index: j,
                len: self.len(),
            })
        }
    }

    /// Spectral coordinates `Uᵀv`.
    pub fn coordinates(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        check_len("vector", self.dim(), v.len())?;
        Ok(self.basis.tr_mul(v))
    }

    /// Squared norm of the component of `v` orthogonal to the basis.
    pub fn off_span_norm2(&self, v: &DVector<f64>, coords: &DVector<f64>) -> f64 {
        (v - &self.basis * coords).norm_squared()
    }

    /// Dense `A_j = U diag(alphas[j]) Uᵀ`.
    pub fn member_matrix(&self, j: usize) -> Result<DMatrix<f64>> {
        self.check_index(j)?;
        let scaled = DMatrix::from_fn(self.dim(), self.rank(), |row, i| {
            self.basis[(row, i)] * self.alphas[(j, i)]
        });
        Ok(scaled * self.basis.transpose())
    }

    /// All members as dense matrices.
    pub fn materialize(&self) -> Vec<DMatrix<f64>> {
        (0..self.len())
            .map(|j| self.member_matrix(j).expect("index in range"))
            .collect()
    }

    /// True when, for every pair of members, the eigenvalue differences do
    /// not change sign (up to `tol`).
    pub fn is_totally_ordered(&self, tol: f64) -> bool {
        let mut order: Vec<usize> = (0..self.len()).collect();
        let traces: Vec<f64> = (0..self.len()).map(|j| self.alphas.row(j).sum()).collect();
        order.sort_by(|&a, &b| traces[a].total_cmp(&traces[b]));
        // Sorted by trace, consecutive members must be coordinatewise
        // non-decreasing; transitivity gives the total order.
        order.windows(2).all(|w| {
            (0..self.rank()).all(|i| self.alphas[(w[1], i)] - self.alphas[(w[0], i)] >= -tol)
        })
    }
}

/// `A_j y`, computed as `U (alphas[j] ⊙ Uᵀy)`.
pub fn apply_member(family: &SpectralFamily, j: usize, y: &DVector<f64>) -> Result<DVector<f64>> {
    family.check_index(j)?;
    let z = family.coordinates(y)?;
    let scaled = DVector::from_fn(family.rank(), |i, _| family.alphas[(j, i)] * z[i]);
    Ok(&family.basis * scaled)
}

/// `df_j = trace(A_j) = Σ_i alphas[j][i]`.
pub fn degrees_of_freedom(family: &SpectralFamily, j: usize) -> Result<f64> {
    family.check_index(j)?;
    Ok(family.alphas.row(j).sum())
}

/// Ridge coefficients `ŵ(K, λ_j)` for response `y`.
pub fn member_coefficients(
    family: &SpectralFamily,
    j: usize,
    y: &DVector<f64>,
) -> Result<DVector<f64>> {
    family.check_index(j)?;
    let map = &family
        .right_factor
        .as_ref()
        .ok_or(Error::MissingCoefficientMap)?
        .map;
    let z = family.coordinates(y)?;
    let scaled = DVector::from_fn(family.rank(), |i, _| family.alphas[(j, i)] * z[i]);
    Ok(map * scaled)
}

/// Aggregated coefficients `Σ_j θ_j ŵ(K, λ_j)`.
///
/// Uses the cached fit: `Uᵀ(A_θ y) = a_θ ⊙ Uᵀy`, which is exactly the
/// spectral vector the coefficient map consumes.
pub fn recover_coefficients(
    family: &SpectralFamily,
    weights: &SimplexWeights,
) -> Result<DVector<f64>> {
    let map = &family
        .right_factor
        .as_ref()
        .ok_or(Error::MissingCoefficientMap)?
        .map;
    check_len("weights", family.len(), weights.theta().len())?;
    let fit_coords = family.coordinates(weights.fitted())?;
    Ok(map * fit_coords)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_fit_map(x: &DMatrix<f64>, k: &DMatrix<f64>, lambda: f64) -> DMatrix<f64> {
        let gram = x.transpose() * x + k * lambda;
        let inv = gram.try_inverse().unwrap();
        x * inv * x.transpose()
    }

    #[test]
    fn identity_design_without_penalty_is_identity() {
        let problem = DesignProblem::ridge(DMatrix::identity(2, 2), vec![0.0]).unwrap();
        let fam = build_tikhonov_family(&problem).unwrap();
        assert_eq!(fam.alphas().row(0).iter().copied().collect::<Vec<_>>(), vec![1.0, 1.0]);
        let a = fam.member_matrix(0).unwrap();
        assert!((a - DMatrix::<f64>::identity(2, 2)).abs().max() < 1e-14);
    }

    #[test]
    fn identity_design_unit_lambda_halves() {
        let problem = DesignProblem::ridge(DMatrix::identity(2, 2), vec![1.0]).unwrap();
        let fam = build_tikhonov_family(&problem).unwrap();
        for a in fam.alphas().iter() {
            assert!((a - 0.5).abs() < 1e-15);
        }
        assert!((degrees_of_freedom(&fam, 0).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn grid_is_sorted_and_duplicates_rejected() {
        let p = DesignProblem::ridge(DMatrix::identity(2, 2), vec![3.0, 0.5, 1.0]).unwrap();
        assert_eq!(p.lambdas(), &[0.5, 1.0, 3.0]);
        assert_eq!(
            DesignProblem::ridge(DMatrix::identity(2, 2), vec![1.0, 1.0]).unwrap_err(),
            Error::DuplicateLambda(1.0)
        );
        assert!(matches!(
            DesignProblem::ridge(DMatrix::identity(2, 2), vec![-1.0]),
            Err(Error::InvalidLambda(_))
        ));
    }

    #[test]
    fn indefinite_penalty_reports_smallest_eigenvalue() {
        let k = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -2.0]);
        let problem = DesignProblem::new(DMatrix::identity(2, 2), k, vec![1.0]).unwrap();
        match build_tikhonov_family(&problem) {
            Err(Error::NotPositiveDefinite { min_eigenvalue }) => {
                assert!((min_eigenvalue + 2.0).abs() < 1e-12)
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn zero_and_identity_members() {
        let basis = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let alphas = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 0.0]);
        let fam = SpectralFamily::from_spectrum(basis, alphas).unwrap();
        let y = DVector::from_vec(vec![2.0, -1.0, 0.0]);
        assert_eq!(apply_member(&fam, 1, &y).unwrap(), DVector::zeros(3));
        assert!((apply_member(&fam, 0, &y).unwrap() - &y).norm() < 1e-15);
        assert!(matches!(
            apply_member(&fam, 2, &y),
            Err(Error::IndexOutOfRange { .. })
        ));
        assert!(matches!(
            apply_member(&fam, 0, &DVector::zeros(2)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn unordered_spectrum_rejected() {
        let basis = DMatrix::identity(2, 2);
        let alphas = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        assert!(SpectralFamily::from_spectrum(basis, alphas).is_err());
    }

    #[test]
    fn synthetic_family_has_no_coefficient_map() {
        let fam = SpectralFamily::from_spectrum(DMatrix::identity(2, 2), DMatrix::from_element(1, 2, 0.5))
            .unwrap();
        let w = SimplexWeights::new(vec![1.0], DVector::zeros(2)).unwrap();
        assert_eq!(recover_coefficients(&fam, &w).unwrap_err(), Error::MissingCoefficientMap);
    }

    #[test]
    fn rank_deficient_design_with_zero_lambda_is_projection() {
        // Third column duplicates the first.
        let x = DMatrix::from_row_slice(4, 3, &[
            1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 1.0, 1.0, 2.0, 0.0, 2.0,
        ]);
        let fam = build_tikhonov_family(&DesignProblem::ridge(x.clone(), vec![0.0, 1.0]).unwrap()).unwrap();
        assert_eq!(fam.rank(), 2);
        let a = fam.member_matrix(0).unwrap();
        assert!((&a * &a - &a).abs().max() < 1e-12);
        // Range of the projection is the column space of x.
        assert!((&a * &x - &x).abs().max() < 1e-12);
        let dense = dense_fit_map(&x, &DMatrix::identity(3, 3), 1.0);
        assert!((fam.member_matrix(1).unwrap() - dense).abs().max() < 1e-12);
    }

    #[test]
    fn coefficients_match_normal_equations() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 0.5, -0.3, 2.0, 0.7, 0.1, 1.2, -1.0]);
        let k = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let y = DVector::from_vec(vec![1.0, -2.0, 0.5, 3.0]);
        let fam = build_tikhonov_family(&DesignProblem::new(x.clone(), k.clone(), vec![0.7]).unwrap()).unwrap();
        let w = member_coefficients(&fam, 0, &y).unwrap();
        let direct = (x.transpose() * &x + &k * 0.7)
            .lu()
            .solve(&(x.transpose() * &y))
            .unwrap();
        assert!((w - direct).amax() < 1e-12);
    }
}
