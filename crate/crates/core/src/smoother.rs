//! Ordered-smoother validation, exact risks and the risk metric.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, check_positive, Error, Result};
use crate::fits::CandidateSet;
use crate::linalg;
use crate::spectral::SpectralFamily;

/// Mean and noise level of the Gaussian mean model `y = μ + ε`,
/// `ε ~ N(0, σ²I)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    mu: DVector<f64>,
    sigma: f64,
}

impl GroundTruth {
    pub fn new(mu: DVector<f64>, sigma: f64) -> Result<Self> {
        check_positive("sigma", sigma)?;
        if mu.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "mu",
                reason: "entries must be finite".into(),
            });
        }
        Ok(Self { mu, sigma })
    }

    pub fn mu(&self) -> &DVector<f64> {
        &self.mu
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn n(&self) -> usize {
        self.mu.len()
    }
}

/// Union of `q` ordered families `F_1 ∪ … ∪ F_q`.
///
/// Members are indexed family by family in insertion order. The fits of all
/// members are expressed in a joint orthonormal basis spanning every
/// family's basis.
#[derive(Debug, Clone)]
pub struct FamilyUnion {
    families: Vec<SpectralFamily>,
    offsets: Vec<usize>,
    joint_basis: DMatrix<f64>,
    transfers: Vec<DMatrix<f64>>,
}

impl FamilyUnion {
    /// Family ids are reassigned to the position of each family.
    pub fn new(families: Vec<SpectralFamily>) -> Result<Self> {
        let first = families.first().ok_or(Error::Empty("family union"))?;
        let n = first.dim();
        for fam in &families {
            check_len("family dimension", n, fam.dim())?;
            if fam.is_empty() {
                return Err(Error::Empty("family"));
            }
        }
        let families: Vec<SpectralFamily> = families
            .into_iter()
            .enumerate()
            .map(|(id, f)| f.with_family_id(id))
            .collect();
        let joint_basis = if families.len() == 1 {
            families[0].basis().clone()
        } else {
            let total: usize = families.iter().map(|f| f.rank()).sum();
            let mut stacked = DMatrix::zeros(n, total);
            let mut col = 0;
            for fam in &families {
                stacked.columns_mut(col, fam.rank()).copy_from(fam.basis());
                col += fam.rank();
            }
            linalg::column_basis(&stacked, 1e-10)?
        };
        let transfers = families
            .iter()
            .map(|f| joint_basis.tr_mul(f.basis()))
            .collect();
        let mut offsets = Vec::with_capacity(families.len() + 1);
        offsets.push(0);
        for fam in &families {
            offsets.push(offsets.last().unwrap() + fam.len());
        }
        Ok(Self {
            families,
            offsets,
            joint_basis,
            transfers,
        })
    }

    /// Number of families `q`.
    pub fn q(&self) -> usize {
        self.families.len()
    }

    /// Total number of members `M`.
    pub fn len(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn families(&self) -> &[SpectralFamily] {
        &self.families
    }

    pub fn joint_basis(&self) -> &DMatrix<f64> {
        &self.joint_basis
    }

    pub(crate) fn transfers(&self) -> &[DMatrix<f64>] {
        &self.transfers
    }

    /// Family id of member `j`.
    pub fn family_of(&self, j: usize) -> Result<usize> {
        Ok(self.locate(j)?.0.family_id())
    }

    /// Family and local index of global member `j`.
    pub fn locate(&self, j: usize) -> Result<(&SpectralFamily, usize)> {
        if j >= self.len() {
            return Err(Error::IndexOutOfRange {
                index: j,
                len: self.len(),
            });
        }
        let f = self.offsets.partition_point(|&o| o <= j) - 1;
        Ok((&self.families[f], j - self.offsets[f]))
    }
}

/// Outcome of one axiom check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxiomCheck {
    pub passed: bool,
    /// Worst violation magnitude observed (0 when none).
    pub worst_violation: f64,
    /// First offending member or pair, if any.
    pub detail: Option<String>,
}

impl AxiomCheck {
    fn pass() -> Self {
        Self {
            passed: true,
            worst_violation: 0.0,
            detail: None,
        }
    }

    fn record(&mut self, violation: f64, detail: impl FnOnce() -> String) {
        if violation > 0.0 {
            if self.passed {
                self.detail = Some(detail());
            }
            self.passed = false;
            self.worst_violation = self.worst_violation.max(violation);
        }
    }
}

/// Per-axiom result of [`check_ordered`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderedReport {
    pub tol: f64,
    /// (i) symmetric with spectrum in `[0, 1]`.
    pub symmetric_contraction: AxiomCheck,
    /// (ii) pairwise commutation.
    pub commuting: AxiomCheck,
    /// (iii) pairwise semidefinite ordering.
    pub ordered: AxiomCheck,
}

impl OrderedReport {
    pub fn all_passed(&self) -> bool {
        self.symmetric_contraction.passed && self.commuting.passed && self.ordered.passed
    }

    /// Named results in axiom order.
    pub fn axioms(&self) -> [(&'static str, &AxiomCheck); 3] {
        [
            ("(i) symmetric, spectrum in [0,1]", &self.symmetric_contraction),
            ("(ii) commuting", &self.commuting),
            ("(iii) totally ordered", &self.ordered),
        ]
    }
}

/// Default tolerance: `1e-8` times the largest eigenvalue magnitude (at
/// least 1).
pub fn default_tolerance(matrices: &[DMatrix<f64>]) -> f64 {
    let scale = matrices
        .iter()
        .map(|a| {
            let (lo, hi) = linalg::min_max_eigenvalue(a);
            lo.abs().max(hi.abs())
        })
        .fold(1.0, f64::max);
    1e-8 * scale
}

/// Checks the ordered-linear-smoother axioms on explicit matrices.
pub fn check_ordered(matrices: &[DMatrix<f64>], tol: f64) -> Result<OrderedReport> {
    check_positive("tol", tol)?;
    let n = matrices.first().ok_or(Error::Empty("matrix list"))?.nrows();
    for a in matrices {
        check_len("matrix rows", n, a.nrows())?;
        check_len("matrix columns", n, a.ncols())?;
    }

    let mut sym = AxiomCheck::pass();
    for (j, a) in matrices.iter().enumerate() {
        let asym = (a - a.transpose()).amax();
        let (lo, hi) = linalg::min_max_eigenvalue(a);
        let violation = [asym - tol, -lo - tol, hi - 1.0 - tol]
            .into_iter()
            .fold(0.0, f64::max);
        sym.record(violation, || {
            format!("member {j}: asymmetry {asym:.3e}, spectrum [{lo:.6}, {hi:.6}]")
        });
    }

    let mut commuting = AxiomCheck::pass();
    let mut ordered = AxiomCheck::pass();
    for j in 0..matrices.len() {
        for k in (j + 1)..matrices.len() {
            let (a, b) = (&matrices[j], &matrices[k]);
            let comm = (a * b - b * a).norm();
            commuting.record(comm - tol, || format!("members {j},{k}: ‖[A,B]‖_F = {comm:.3e}"));

            let (lo, hi) = linalg::min_max_eigenvalue(&(a - b));
            // A − B ⪰ 0 needs lo ≥ −tol; B − A ⪰ 0 needs hi ≤ tol.
            let violation = (-lo - tol).min(hi - tol);
            ordered.record(violation, || {
                format!("members {j},{k}: difference has eigenvalues of both signs ({lo:.3e}, {hi:.3e})")
            });
        }
    }

    Ok(OrderedReport {
        tol,
        symmetric_contraction: sym,
        commuting,
        ordered,
    })
}

/// Spectral coordinates of μ and the squared norm of its off-span part.
fn mean_coordinates(family: &SpectralFamily, truth: &GroundTruth) -> Result<(DVector<f64>, f64)> {
    check_len("mean", family.dim(), truth.n())?;
    let m = family.coordinates(truth.mu())?;
    let off = family.off_span_norm2(truth.mu(), &m);
    Ok((m, off))
}

/// `E‖A_j y − μ‖² = σ²‖A_j‖_F² + ‖(A_j − I)μ‖²`.
pub fn exact_risk(family: &SpectralFamily, j: usize, truth: &GroundTruth) -> Result<f64> {
    family.check_index(j)?;
    let (m, off) = mean_coordinates(family, truth)?;
    Ok(risk_from_coordinates(family, j, &m, off, truth.sigma()))
}

fn risk_from_coordinates(family: &SpectralFamily, j: usize, m: &DVector<f64>, off: f64, sigma: f64) -> f64 {
    let alphas = family.alphas();
    let (variance, bias) = (0..family.rank()).fold((0.0, 0.0), |(v, b), i| {
        let a = alphas[(j, i)];
        (v + a * a, b + (a - 1.0).powi(2) * m[i] * m[i])
    });
    sigma * sigma * variance + bias + off
}

/// Exact risks of all members of a family.
pub fn exact_risks(family: &SpectralFamily, truth: &GroundTruth) -> Result<Vec<f64>> {
    let (m, off) = mean_coordinates(family, truth)?;
    Ok((0..family.len())
        .map(|j| risk_from_coordinates(family, j, &m, off, truth.sigma()))
        .collect())
}

/// `d(A_j, A_k) = sqrt(σ²‖A_j − A_k‖_F² + ‖(A_j − A_k)μ‖²)`.
pub fn pair_distance(
    family: &SpectralFamily,
    j: usize,
    k: usize,
    truth: &GroundTruth,
) -> Result<f64> {
    family.check_index(j)?;
    family.check_index(k)?;
    let (m, _) = mean_coordinates(family, truth)?;
    let alphas = family.alphas();
    let s2 = truth.sigma().powi(2);
    let d2: f64 = (0..family.rank())
        .map(|i| {
            let diff = alphas[(j, i)] - alphas[(k, i)];
            diff * diff * (s2 + m[i] * m[i])
        })
        .sum();
    Ok(d2.sqrt())
}

/// Member with the smallest exact risk and that risk `R*`; ties go to the
/// smallest index.
pub fn oracle_index<C: CandidateSet + ?Sized>(set: &C, truth: &GroundTruth) -> Result<(usize, f64)> {
    if set.is_empty() {
        return Err(Error::Empty("candidate set"));
    }
    check_len("mean", set.dim(), truth.n())?;
    let mut best = (0, set.exact_risk(0, truth)?);
    for j in 1..set.len() {
        let r = set.exact_risk(j, truth)?;
        if r < best.1 {
            best = (j, r);
        }
    }
    Ok(best)
}
