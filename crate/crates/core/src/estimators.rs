//! Affine estimators `x̂ = E·y + f` for the linear model: LS, BLUE, constrained
//! LS, the constrained BLUE in nullspace and direct form, and mean-subtracted
//! variants. Also the analytic covariances and a KKT-based reference solver.

use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{shape, Error, Result};
use crate::model::{validate, ConstraintSet, LinearModel, NullspaceParam};
use crate::numerics::{hermitian_part, numerical_rank, CMatrix, CVector, HpdFactor};

/// Which closed form produced an [`AffineEstimator`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    Ls,
    Blue,
    Cls,
    CblueNullspace,
    CblueDirect,
}

impl EstimatorKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Ls => "ls",
            Self::Blue => "blue",
            Self::Cls => "cls",
            Self::CblueNullspace => "cblue-nullspace",
            Self::CblueDirect => "cblue-direct",
        }
    }

    /// Whether estimates of this kind satisfy `Ax̂ = b` by construction.
    pub fn is_constrained(self) -> bool {
        matches!(self, Self::Cls | Self::CblueNullspace | Self::CblueDirect)
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// `x̂ = E·y + f`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineEstimator {
    matrix: CMatrix,
    offset: CVector,
    kind: EstimatorKind,
    mean_subtracted: bool,
}

impl AffineEstimator {
    fn new(matrix: CMatrix, offset: CVector, kind: EstimatorKind) -> Self {
        debug_assert_eq!(matrix.nrows(), offset.len());
        Self {
            matrix,
            offset,
            kind,
            mean_subtracted: false,
        }
    }

    /// Estimator matrix `E` (`N_x × N_y`).
    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    /// Offset `f` (`N_x`).
    pub fn offset(&self) -> &CVector {
        &self.offset
    }

    pub fn kind(&self) -> EstimatorKind {
        self.kind
    }

    pub fn is_mean_subtracted(&self) -> bool {
        self.mean_subtracted
    }

    pub fn label(&self) -> String {
        if self.mean_subtracted {
            format!("{}-meansub", self.kind)
        } else {
            self.kind.to_string()
        }
    }

    pub fn n_x(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn n_y(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn apply(&self, y: &CVector) -> Result<CVector> {
        if y.len() != self.n_y() {
            return Err(Error::DimensionMismatch {
                context: "AffineEstimator::apply",
                expected: self.n_y().to_string(),
                actual: y.len().to_string(),
            });
        }
        Ok(&self.matrix * y + &self.offset)
    }

    /// `(‖A·E‖_F / (‖A‖_F‖E‖_F), ‖A·f − b‖ / (‖A‖_F‖f‖ + ‖b‖))`; both vanish
    /// exactly when every output satisfies the constraints.
    pub fn constraint_residuals(&self, constraints: &ConstraintSet) -> (f64, f64) {
        let a = constraints.a();
        let ae = (a * &self.matrix).norm();
        let scale = a.norm() * self.matrix.norm();
        let ae = if scale > 0.0 { ae / scale } else { ae };
        (ae, constraints.relative_residual(&self.offset))
    }

    /// `(‖E·H·N − N‖_F / ‖N‖_F, ‖f − (I − E·H)·x_p‖ / scale)`: unbiasedness on
    /// the feasible set expressed as matrix residuals.
    pub fn unbiasedness_residuals(&self, model: &LinearModel, param: &NullspaceParam) -> (f64, f64) {
        let n = param.basis();
        let eh = &self.matrix * model.h();
        let r_basis = (&eh * n - n).norm() / n.norm();
        let xp = param.particular();
        let expected_f = xp - &eh * xp;
        let scale = xp.norm() * (1.0 + eh.norm()) + self.offset.norm();
        let r_off = (&self.offset - expected_f).norm();
        (r_basis, if scale > 0.0 { r_off / scale } else { r_off })
    }
}

/// `Q = HᴴH` and `P = HᴴC_nn⁻¹H`, both Hermitian positive semidefinite.
#[derive(Debug, Clone)]
pub struct PrecisionMatrices {
    pub gram: CMatrix,
    pub precision: CMatrix,
}

impl PrecisionMatrices {
    pub fn new(model: &LinearModel) -> Self {
        let h = model.h();
        let white = model
            .cnn_factor()
            .whiten(h)
            .expect("model dimensions are consistent");
        Self {
            gram: hermitian_part(&(h.adjoint() * h)),
            precision: hermitian_part(&(white.adjoint() * &white)),
        }
    }
}

/// Per-element variances are the real diagonal of the Hermitian covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceResult {
    pub matrix: CMatrix,
    pub per_element_variance: Vec<f64>,
}

impl CovarianceResult {
    fn from_matrix(m: CMatrix) -> Self {
        let matrix = hermitian_part(&m);
        let per_element_variance = matrix.diagonal().iter().map(|z| z.re).collect();
        Self {
            matrix,
            per_element_variance,
        }
    }

    pub fn trace(&self) -> f64 {
        self.per_element_variance.iter().sum()
    }

    /// Trace divided by the parameter length.
    pub fn average_variance(&self) -> f64 {
        self.trace() / self.per_element_variance.len() as f64
    }
}

fn require_full_column_rank(what: &'static str, m: &CMatrix) -> Result<()> {
    let cols = m.ncols();
    if m.nrows() < cols {
        return Err(Error::RankDeficient {
            what,
            rank: m.nrows(),
            cols,
        });
    }
    let rank = numerical_rank(m, None);
    if rank < cols {
        return Err(Error::RankDeficient { what, rank, cols });
    }
    Ok(())
}

fn require_matching(model: &LinearModel, constraints: &ConstraintSet) -> Result<()> {
    if constraints.n_x() != model.n_x() {
        return Err(Error::DimensionMismatch {
            context: "A and H must have the same column count",
            expected: model.n_x().to_string(),
            actual: constraints.n_x().to_string(),
        });
    }
    Ok(())
}

fn factor_or_rank_deficient(what: &'static str, m: &CMatrix, source: &CMatrix) -> Result<HpdFactor> {
    HpdFactor::new(m).map_err(|err| match err {
        Error::NotPositiveDefinite { .. } => Error::RankDeficient {
            what,
            rank: numerical_rank(source, None),
            cols: source.ncols(),
        },
        other => other,
    })
}

/// `C_nn⁻¹·H`.
fn precision_weighted_h(model: &LinearModel) -> CMatrix {
    model
        .cnn_factor()
        .solve(model.h())
        .expect("model dimensions are consistent")
}

/// Projects an unconstrained unbiased estimator onto `Ax = b` in the metric `W`:
/// with `G = W⁻¹Aᴴ`, `S = AG` and `K = GS⁻¹` the result is
/// `E' = (I − KA)E`, `f' = Kb`.
fn project_onto_constraints(
    weight: &HpdFactor,
    unconstrained: &CMatrix,
    constraints: &ConstraintSet,
    correction_sign: f64,
) -> Result<(CMatrix, CVector)> {
    let a = constraints.a();
    let g = weight.solve(&a.adjoint())?;
    let s = hermitian_part(&(a * &g));
    let s_factor = factor_or_rank_deficient("A W^-1 A^H", &s, &a.adjoint())?;
    let k = s_factor.solve(&g.adjoint())?.adjoint();
    let ka = &k * a;
    let matrix = unconstrained - (&ka * unconstrained).scale(correction_sign);
    let offset = &k * constraints.b();
    Ok((matrix, offset))
}

/// Least squares: `E = Q⁻¹Hᴴ`, `f = 0`.
pub fn ls(model: &LinearModel) -> Result<AffineEstimator> {
    require_full_column_rank("H", model.h())?;
    let h = model.h();
    let gram = hermitian_part(&(h.adjoint() * h));
    let q = factor_or_rank_deficient("H^H H", &gram, h)?;
    let matrix = q.solve(&h.adjoint())?;
    Ok(AffineEstimator::new(
        matrix,
        CVector::zeros(model.n_x()),
        EstimatorKind::Ls,
    ))
}

/// BLUE: `E = P⁻¹HᴴC_nn⁻¹`, `f = 0`.
pub fn blue(model: &LinearModel) -> Result<AffineEstimator> {
    require_full_column_rank("H", model.h())?;
    let pm = PrecisionMatrices::new(model);
    let p = factor_or_rank_deficient("H^H C_nn^-1 H", &pm.precision, model.h())?;
    let matrix = p.solve(&precision_weighted_h(model).adjoint())?;
    Ok(AffineEstimator::new(
        matrix,
        CVector::zeros(model.n_x()),
        EstimatorKind::Blue,
    ))
}

/// Constrained LS: `E = (I − Q⁻¹Aᴴ(AQ⁻¹Aᴴ)⁻¹A)Q⁻¹Hᴴ`, `f = Q⁻¹Aᴴ(AQ⁻¹Aᴴ)⁻¹b`.
pub fn cls(model: &LinearModel, constraints: &ConstraintSet) -> Result<AffineEstimator> {
    require_matching(model, constraints)?;
    require_full_column_rank("H", model.h())?;
    let h = model.h();
    let gram = hermitian_part(&(h.adjoint() * h));
    let q = factor_or_rank_deficient("H^H H", &gram, h)?;
    let unconstrained = q.solve(&h.adjoint())?;
    let (matrix, offset) = project_onto_constraints(&q, &unconstrained, constraints, 1.0)?;
    Ok(AffineEstimator::new(matrix, offset, EstimatorKind::Cls))
}

/// Reduced-model quantities shared by the nullspace-form estimator and covariance.
struct Reduced {
    /// `HN`
    hn: CMatrix,
    /// factor of `NᴴPN = (HN)ᴴC_nn⁻¹(HN)`
    factor: HpdFactor,
}

fn reduced(model: &LinearModel, param: &NullspaceParam) -> Result<Reduced> {
    if param.n_x() != model.n_x() {
        return Err(Error::DimensionMismatch {
            context: "nullspace basis and H must share N_x",
            expected: model.n_x().to_string(),
            actual: param.n_x().to_string(),
        });
    }
    let n0 = param.n0();
    let hn = model.h() * param.basis();
    let rank = if hn.nrows() < n0 {
        hn.nrows()
    } else {
        numerical_rank(&hn, None)
    };
    if rank < n0 {
        return Err(Error::RankDeficientReducedModel { rank, n0 });
    }
    let white = model.cnn_factor().whiten(&hn)?;
    let npn = hermitian_part(&(white.adjoint() * &white));
    let factor = HpdFactor::new(&npn).map_err(|_| Error::RankDeficientReducedModel {
        rank: numerical_rank(&hn, None),
        n0,
    })?;
    Ok(Reduced { hn, factor })
}

/// Constrained BLUE via the nullspace basis:
/// `E = N(NᴴPN)⁻¹NᴴHᴴC_nn⁻¹`, `f = (I − E·H)·x_p`.
///
/// Only `HN` needs full column rank, so `N_y < N_x` is allowed.
pub fn cblue_nullspace(model: &LinearModel, param: &NullspaceParam) -> Result<AffineEstimator> {
    let r = reduced(model, param)?;
    let weighted_hn = model.cnn_factor().solve(&r.hn)?;
    let inner = r.factor.solve(&weighted_hn.adjoint())?;
    let matrix = param.basis() * inner;
    let xp = param.particular();
    let offset = xp - &matrix * (model.h() * xp);
    Ok(AffineEstimator::new(
        matrix,
        offset,
        EstimatorKind::CblueNullspace,
    ))
}

fn cblue_direct_signed(
    model: &LinearModel,
    constraints: &ConstraintSet,
    correction_sign: f64,
) -> Result<AffineEstimator> {
    require_matching(model, constraints)?;
    require_full_column_rank("H", model.h())?;
    let pm = PrecisionMatrices::new(model);
    let p = factor_or_rank_deficient("H^H C_nn^-1 H", &pm.precision, model.h())?;
    let unconstrained = p.solve(&precision_weighted_h(model).adjoint())?;
    let (matrix, offset) =
        project_onto_constraints(&p, &unconstrained, constraints, correction_sign)?;
    Ok(AffineEstimator::new(matrix, offset, EstimatorKind::CblueDirect))
}

/// Constrained BLUE without a nullspace basis:
/// `E = (I − P⁻¹Aᴴ(AP⁻¹Aᴴ)⁻¹A)P⁻¹HᴴC_nn⁻¹`, `f = P⁻¹Aᴴ(AP⁻¹Aᴴ)⁻¹b`.
///
/// Requires `N_y ≥ N_x` and full-column-rank `H`.
pub fn cblue_direct(model: &LinearModel, constraints: &ConstraintSet) -> Result<AffineEstimator> {
    cblue_direct_signed(model, constraints, 1.0)
}

/// Direct form with the sign of the constraint correction flipped. Only for
/// checking that the verification suite detects a broken estimator.
#[doc(hidden)]
pub fn cblue_direct_sign_flipped(
    model: &LinearModel,
    constraints: &ConstraintSet,
) -> Result<AffineEstimator> {
    cblue_direct_signed(model, constraints, -1.0)
}

/// LS, BLUE, constrained LS and direct-form constrained BLUE built from one
/// rank check and one factorization each of `Q` and `P`.
#[derive(Debug, Clone)]
pub struct EstimatorFamily {
    pub ls: AffineEstimator,
    pub blue: AffineEstimator,
    pub cls: AffineEstimator,
    pub cblue: AffineEstimator,
}

impl EstimatorFamily {
    pub fn new(model: &LinearModel, constraints: &ConstraintSet) -> Result<Self> {
        require_matching(model, constraints)?;
        require_full_column_rank("H", model.h())?;
        let h = model.h();
        let gram = hermitian_part(&(h.adjoint() * h));
        let q = factor_or_rank_deficient("H^H H", &gram, h)?;
        let ls_matrix = q.solve(&h.adjoint())?;
        let (cls_matrix, cls_offset) =
            project_onto_constraints(&q, &ls_matrix, constraints, 1.0)?;

        let pm = PrecisionMatrices::new(model);
        let p = factor_or_rank_deficient("H^H C_nn^-1 H", &pm.precision, h)?;
        let blue_matrix = p.solve(&precision_weighted_h(model).adjoint())?;
        let (cb_matrix, cb_offset) =
            project_onto_constraints(&p, &blue_matrix, constraints, 1.0)?;

        let zeros = CVector::zeros(model.n_x());
        Ok(Self {
            ls: AffineEstimator::new(ls_matrix, zeros.clone(), EstimatorKind::Ls),
            blue: AffineEstimator::new(blue_matrix, zeros, EstimatorKind::Blue),
            cls: AffineEstimator::new(cls_matrix, cls_offset, EstimatorKind::Cls),
            cblue: AffineEstimator::new(cb_matrix, cb_offset, EstimatorKind::CblueDirect),
        })
    }
}

/// Constrained BLUE, direct form when admissible, otherwise the nullspace form.
pub fn cblue(model: &LinearModel, constraints: &ConstraintSet) -> Result<AffineEstimator> {
    let report = validate(model, constraints)?;
    if report.direct_form_admissible() {
        cblue_direct(model, constraints)
    } else {
        report.check_nullspace_form()?;
        cblue_nullspace(model, &NullspaceParam::new(constraints)?)
    }
}

/// Removes the mean of the estimate: `E' = ΠE`, `f' = Πf` with `Π = I − 𝟙𝟙ᵀ/N_x`.
pub fn mean_subtracted(base: &AffineEstimator) -> AffineEstimator {
    let n = base.n_x() as f64;
    let mut matrix = base.matrix.clone();
    for mut col in matrix.column_iter_mut() {
        let mean = col.sum() / n;
        col.add_scalar_mut(-mean);
    }
    let mean = base.offset.sum() / n;
    let offset = base.offset.add_scalar(-mean);
    AffineEstimator {
        matrix,
        offset,
        kind: base.kind,
        mean_subtracted: true,
    }
}

/// `E·C_nn·Eᴴ`.
pub fn covariance(est: &AffineEstimator, cnn: &CMatrix) -> Result<CovarianceResult> {
    if cnn.nrows() != est.n_y() || cnn.ncols() != est.n_y() {
        return Err(Error::DimensionMismatch {
            context: "covariance: C_nn must be N_y x N_y",
            expected: shape(est.n_y(), est.n_y()),
            actual: shape(cnn.nrows(), cnn.ncols()),
        });
    }
    let e = est.matrix();
    Ok(CovarianceResult::from_matrix(e * cnn * e.adjoint()))
}

/// `N(NᴴPN)⁻¹Nᴴ`.
pub fn analytic_cblue_covariance_nullspace(
    model: &LinearModel,
    param: &NullspaceParam,
) -> Result<CovarianceResult> {
    let r = reduced(model, param)?;
    let n = param.basis();
    let inner = r.factor.solve(&n.adjoint())?;
    Ok(CovarianceResult::from_matrix(n * inner))
}

/// `P⁻¹ − P⁻¹Aᴴ(AP⁻¹Aᴴ)⁻¹AP⁻¹`.
pub fn analytic_cblue_covariance_direct(
    model: &LinearModel,
    constraints: &ConstraintSet,
) -> Result<CovarianceResult> {
    require_matching(model, constraints)?;
    require_full_column_rank("H", model.h())?;
    let pm = PrecisionMatrices::new(model);
    let p = factor_or_rank_deficient("H^H C_nn^-1 H", &pm.precision, model.h())?;
    let n_x = model.n_x();
    let p_inv = p.solve(&CMatrix::identity(n_x, n_x))?;
    let a = constraints.a();
    let g = p.solve(&a.adjoint())?;
    let s = hermitian_part(&(a * &g));
    let s_factor = factor_or_rank_deficient("A P^-1 A^H", &s, &a.adjoint())?;
    let correction = &g * s_factor.solve(&g.adjoint())?;
    Ok(CovarianceResult::from_matrix(p_inv - correction))
}

/// Reference solution of `min (y − Hx)ᴴC_nn⁻¹(y − Hx)` s.t. `Ax = b` from the
/// stationarity system `[[P, Aᴴ], [A, 0]]·[x; μ] = [HᴴC_nn⁻¹y; b]`, solved by a
/// general pivoted LU that shares nothing with the closed-form estimators.
pub fn kkt_oracle(model: &LinearModel, constraints: &ConstraintSet, y: &CVector) -> Result<CVector> {
    require_matching(model, constraints)?;
    if y.len() != model.n_y() {
        return Err(Error::DimensionMismatch {
            context: "kkt_oracle: y length",
            expected: model.n_y().to_string(),
            actual: y.len().to_string(),
        });
    }
    let h = model.h();
    let a = constraints.a();
    let (n_x, n_b) = (model.n_x(), constraints.n_b());

    let cnn_lu = model.cnn().clone().full_piv_lu();
    let cinv_h = cnn_lu.solve(h).ok_or(Error::SingularKktSystem)?;
    let cinv_y = cnn_lu.solve(y).ok_or(Error::SingularKktSystem)?;
    let p = h.adjoint() * &cinv_h;
    let rhs_top = h.adjoint() * cinv_y;

    let dim = n_x + n_b;
    let mut kkt: CMatrix = DMatrix::from_element(dim, dim, Complex64::new(0.0, 0.0));
    kkt.view_mut((0, 0), (n_x, n_x)).copy_from(&p);
    kkt.view_mut((0, n_x), (n_x, n_b)).copy_from(&a.adjoint());
    kkt.view_mut((n_x, 0), (n_b, n_x)).copy_from(a);
    let mut rhs = CVector::zeros(dim);
    rhs.rows_mut(0, n_x).copy_from(&rhs_top);
    rhs.rows_mut(n_x, n_b).copy_from(constraints.b());

    if numerical_rank(&kkt, None) < dim {
        return Err(Error::SingularKktSystem);
    }
    let sol = kkt.full_piv_lu().solve(&rhs).ok_or(Error::SingularKktSystem)?;
    Ok(sol.rows(0, n_x).into_owned())
}
