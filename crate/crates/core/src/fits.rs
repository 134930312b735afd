//! Candidate sets and their fits projected onto a common orthonormal basis.
//!
//! Every quantity used by the aggregation objective only depends on the
//! member fits `A_j y`, their traces, and `y`. All fits of a candidate set
//! live in the span of one orthonormal basis `W` (n×R), so they are stored
//! as an R×M coordinate matrix.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_len, Error, Result};
use crate::smoother::{FamilyUnion, GroundTruth};
use crate::spectral::SpectralFamily;

/// A finite set of linear smoothers with a shared fit basis.
pub trait CandidateSet: Sync {
    /// Ambient dimension `n`.
    fn dim(&self) -> usize;
    /// Number of members `M`.
    fn len(&self) -> usize;
    /// Number of ordered families the members come from.
    fn num_families(&self) -> usize;
    /// Orthonormal basis containing the range of every member.
    fn fit_basis(&self) -> &DMatrix<f64>;
    /// `trace(A_j)`.
    fn df(&self, j: usize) -> Result<f64>;
    /// `E‖A_j y − μ‖²` under the Gaussian mean model.
    fn exact_risk(&self, j: usize, truth: &GroundTruth) -> Result<f64>;
    /// Fits of all members for response `y`.
    fn project(&self, y: &DVector<f64>) -> Result<Fits<'_>>;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Fits `A_j y` of every member in the coordinates of the fit basis.
#[derive(Debug, Clone)]
pub struct Fits<'a> {
    basis: &'a DMatrix<f64>,
    coords: DMatrix<f64>,
    target: DVector<f64>,
    off_span2: f64,
    df: DVector<f64>,
    residual2: DVector<f64>,
}

impl<'a> Fits<'a> {
    /// `coords` is R×M (column j holds `Wᵀ A_j y`), `target` is `Wᵀy`, and
    /// `off_span2` is `‖y − W Wᵀ y‖²`.
    pub fn new(
        basis: &'a DMatrix<f64>,
        coords: DMatrix<f64>,
        target: DVector<f64>,
        off_span2: f64,
        df: DVector<f64>,
    ) -> Result<Self> {
        check_len("fit coordinates", basis.ncols(), coords.nrows())?;
        check_len("target coordinates", basis.ncols(), target.len())?;
        check_len("degrees of freedom", coords.ncols(), df.len())?;
        if coords.ncols() == 0 {
            return Err(Error::Empty("candidate set"));
        }
        let residual2 = DVector::from_fn(coords.ncols(), |j, _| {
            (coords.column(j) - &target).norm_squared() + off_span2
        });
        Ok(Self {
            basis,
            coords,
            target,
            off_span2,
            df,
            residual2,
        })
    }

    /// Fits for a dense list of member matrices; the basis is the identity.
    pub fn from_dense(
        identity: &'a DMatrix<f64>,
        members: &[DMatrix<f64>],
        y: &DVector<f64>,
    ) -> Result<Self> {
        let n = y.len();
        check_len("identity basis", n, identity.nrows())?;
        let mut coords = DMatrix::zeros(n, members.len());
        let mut df = DVector::zeros(members.len());
        for (j, a) in members.iter().enumerate() {
            check_len("member rows", n, a.nrows())?;
            check_len("member columns", n, a.ncols())?;
            coords.set_column(j, &(a * y));
            df[j] = a.trace();
        }
        Self::new(identity, coords, y.clone(), 0.0, df)
    }

    pub fn len(&self) -> usize {
        self.coords.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        self.basis
    }

    /// R×M fit coordinates.
    pub fn coords(&self) -> &DMatrix<f64> {
        &self.coords
    }

    /// `Wᵀy`.
    pub fn target(&self) -> &DVector<f64> {
        &self.target
    }

    /// `‖y − WWᵀy‖²`.
    pub fn off_span2(&self) -> f64 {
        self.off_span2
    }

    pub fn df(&self) -> &DVector<f64> {
        &self.df
    }

    /// `‖A_j y − y‖²` for every member.
    pub fn residual2(&self) -> &DVector<f64> {
        &self.residual2
    }

    /// Coordinates of `A_θ y`.
    pub fn combine(&self, theta: &DVector<f64>) -> DVector<f64> {
        &self.coords * theta
    }

    /// `A_θ y` in ℝⁿ.
    pub fn fitted(&self, theta: &DVector<f64>) -> DVector<f64> {
        self.basis * self.combine(theta)
    }

    /// `A_j y` in ℝⁿ.
    pub fn member_fit(&self, j: usize) -> DVector<f64> {
        self.basis * self.coords.column(j)
    }

    pub(crate) fn check_theta(&self, theta: &DVector<f64>) -> Result<()> {
        check_len("weights", self.len(), theta.len())
    }
}

impl CandidateSet for SpectralFamily {
    fn dim(&self) -> usize {
        SpectralFamily::dim(self)
    }

    fn len(&self) -> usize {
        SpectralFamily::len(self)
    }

    fn num_families(&self) -> usize {
        1
    }

    fn fit_basis(&self) -> &DMatrix<f64> {
        self.basis()
    }

    fn df(&self, j: usize) -> Result<f64> {
        crate::spectral::degrees_of_freedom(self, j)
    }

    fn exact_risk(&self, j: usize, truth: &GroundTruth) -> Result<f64> {
        crate::smoother::exact_risk(self, j, truth)
    }

    fn project(&self, y: &DVector<f64>) -> Result<Fits<'_>> {
        let z = self.coordinates(y)?;
        let off = self.off_span_norm2(y, &z);
        let alphas = self.alphas();
        let coords = DMatrix::from_fn(self.rank(), SpectralFamily::len(self), |i, j| {
            alphas[(j, i)] * z[i]
        });
        let df = DVector::from_fn(SpectralFamily::len(self), |j, _| alphas.row(j).sum());
        Fits::new(self.basis(), coords, z, off, df)
    }
}

impl CandidateSet for FamilyUnion {
    fn dim(&self) -> usize {
        self.joint_basis().nrows()
    }

    fn len(&self) -> usize {
        FamilyUnion::len(self)
    }

    fn num_families(&self) -> usize {
        self.q()
    }

    fn fit_basis(&self) -> &DMatrix<f64> {
        self.joint_basis()
    }

    fn df(&self, j: usize) -> Result<f64> {
        let (fam, local) = self.locate(j)?;
        crate::spectral::degrees_of_freedom(fam, local)
    }

    fn exact_risk(&self, j: usize, truth: &GroundTruth) -> Result<f64> {
        let (fam, local) = self.locate(j)?;
        crate::smoother::exact_risk(fam, local, truth)
    }

    fn project(&self, y: &DVector<f64>) -> Result<Fits<'_>> {
        check_len("response", CandidateSet::dim(self), y.len())?;
        let w = self.joint_basis();
        let b = w.tr_mul(y);
        let off = (y - w * &b).norm_squared();
        let total = FamilyUnion::len(self);
        let mut coords = DMatrix::zeros(w.ncols(), total);
        let mut df = DVector::zeros(total);
        let mut col = 0;
        for (fam, transfer) in self.families().iter().zip(self.transfers()) {
            // Uᵀy = Uᵀ W Wᵀ y since span(U) ⊆ span(W).
            let z = transfer.tr_mul(&b);
            let alphas = fam.alphas();
            for j in 0..fam.len() {
                let scaled = DVector::from_fn(fam.rank(), |i, _| alphas[(j, i)] * z[i]);
                coords.set_column(col, &(transfer * scaled));
                df[col] = alphas.row(j).sum();
                col += 1;
            }
        }
        Fits::new(w, coords, b, off, df)
    }
}
