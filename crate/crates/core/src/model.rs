//! Problem statement: the linear model `y = Hx + n`, the equality constraints
//! `Ax = b`, and the nullspace parameterization `x = x_p + Nα` of the feasible set.

use serde::Serialize;

use crate::error::{shape, Error, Result};
use crate::numerics::{
    check_matrix, check_vector, least_norm_solution, nullspace_basis, numerical_rank, CMatrix,
    CVector, HpdFactor,
};

/// Tolerance used when checking user-supplied particular solutions and bases.
const PARAM_TOL: f64 = 1e-9;

/// Measurement matrix `H` (`N_y × N_x`) and noise covariance `C_nn` (`N_y × N_y`).
#[derive(Debug, Clone)]
pub struct LinearModel {
    h: CMatrix,
    cnn: CMatrix,
    cnn_factor: HpdFactor,
}

impl LinearModel {
    pub fn new(h: CMatrix, cnn: CMatrix) -> Result<Self> {
        check_matrix("H", &h)?;
        check_matrix("C_nn", &cnn)?;
        if cnn.nrows() != cnn.ncols() || cnn.nrows() != h.nrows() {
            return Err(Error::DimensionMismatch {
                context: "LinearModel: C_nn must be N_y x N_y",
                expected: shape(h.nrows(), h.nrows()),
                actual: shape(cnn.nrows(), cnn.ncols()),
            });
        }
        let cnn_factor = HpdFactor::new(&cnn)?;
        Ok(Self { h, cnn, cnn_factor })
    }

    /// Same `H`, covariance `C_nn` replaced.
    pub fn with_noise(&self, cnn: CMatrix) -> Result<Self> {
        Self::new(self.h.clone(), cnn)
    }

    pub fn h(&self) -> &CMatrix {
        &self.h
    }

    pub fn cnn(&self) -> &CMatrix {
        &self.cnn
    }

    pub fn cnn_factor(&self) -> &HpdFactor {
        &self.cnn_factor
    }

    pub fn n_y(&self) -> usize {
        self.h.nrows()
    }

    pub fn n_x(&self) -> usize {
        self.h.ncols()
    }
}

/// Full-row-rank equality constraints `Ax = b` with `1 ≤ N_b < N_x`.
#[derive(Debug, Clone)]
pub struct ConstraintSet {
    a: CMatrix,
    b: CVector,
}

impl ConstraintSet {
    pub fn new(a: CMatrix, b: CVector) -> Result<Self> {
        check_matrix("A", &a)?;
        check_vector("b", &b)?;
        let (n_b, n_x) = a.shape();
        if b.len() != n_b {
            return Err(Error::DimensionMismatch {
                context: "ConstraintSet: b must have N_b entries",
                expected: n_b.to_string(),
                actual: b.len().to_string(),
            });
        }
        if n_b == 0 || n_b >= n_x {
            return Err(Error::ConstraintCount { n_b, n_x });
        }
        let rank = numerical_rank(&a, None);
        if rank < n_b {
            return Err(Error::RankDeficientConstraints { rank, rows: n_b });
        }
        Ok(Self { a, b })
    }

    /// `𝟙ᵀx = 0`: the impulse response carries no DC component.
    pub fn zero_sum(n_x: usize) -> Result<Self> {
        Self::new(
            CMatrix::from_element(1, n_x, 1.0.into()),
            CVector::zeros(1),
        )
    }

    pub fn a(&self) -> &CMatrix {
        &self.a
    }

    pub fn b(&self) -> &CVector {
        &self.b
    }

    pub fn n_b(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_x(&self) -> usize {
        self.a.ncols()
    }

    /// `‖Ax − b‖`.
    pub fn residual(&self, x: &CVector) -> f64 {
        (&self.a * x - &self.b).norm()
    }

    /// `‖Ax − b‖ / (‖A‖_F‖x‖ + ‖b‖)`, the scale-free constraint residual.
    pub fn relative_residual(&self, x: &CVector) -> f64 {
        let scale = self.a.norm() * x.norm() + self.b.norm();
        let r = self.residual(x);
        if scale == 0.0 {
            r
        } else {
            r / scale
        }
    }
}

/// Orthonormal nullspace basis `N` of `A` and a particular solution `x_p`.
#[derive(Debug, Clone)]
pub struct NullspaceParam {
    basis: CMatrix,
    particular: CVector,
}

impl NullspaceParam {
    /// Basis from the SVD of `A`, particular solution fixed to the least-norm one.
    pub fn new(constraints: &ConstraintSet) -> Result<Self> {
        let basis = nullspace_basis(constraints.a(), None)?;
        let particular = least_norm_solution(constraints.a(), constraints.b())?;
        Ok(Self { basis, particular })
    }

    /// Replaces the particular solution with any other feasible point.
    pub fn with_particular(&self, constraints: &ConstraintSet, particular: CVector) -> Result<Self> {
        check_vector("x_p", &particular)?;
        if particular.len() != self.basis.nrows() {
            return Err(Error::DimensionMismatch {
                context: "NullspaceParam: x_p length",
                expected: self.basis.nrows().to_string(),
                actual: particular.len().to_string(),
            });
        }
        let residual = constraints.relative_residual(&particular);
        if residual > PARAM_TOL {
            return Err(Error::InfeasibleParticular { residual });
        }
        Ok(Self {
            basis: self.basis.clone(),
            particular,
        })
    }

    /// Replaces the basis with another orthonormal basis of the same nullspace.
    pub fn with_basis(&self, constraints: &ConstraintSet, basis: CMatrix) -> Result<Self> {
        check_matrix("N", &basis)?;
        if basis.shape() != self.basis.shape() {
            return Err(Error::InvalidBasis {
                reason: format!(
                    "shape {} differs from {}",
                    shape(basis.nrows(), basis.ncols()),
                    shape(self.basis.nrows(), self.basis.ncols())
                ),
            });
        }
        let a = constraints.a();
        let an = (a * &basis).norm();
        if an > PARAM_TOL * a.norm() {
            return Err(Error::InvalidBasis {
                reason: format!("A*N has norm {an:.3e}"),
            });
        }
        let n0 = basis.ncols();
        let gram = (basis.adjoint() * &basis - CMatrix::identity(n0, n0)).norm();
        if gram > PARAM_TOL {
            return Err(Error::InvalidBasis {
                reason: format!("columns not orthonormal (defect {gram:.3e})"),
            });
        }
        Ok(Self {
            basis,
            particular: self.particular.clone(),
        })
    }

    pub fn basis(&self) -> &CMatrix {
        &self.basis
    }

    pub fn particular(&self) -> &CVector {
        &self.particular
    }

    /// Nullspace dimension `N₀ = N_x − N_b`.
    pub fn n0(&self) -> usize {
        self.basis.ncols()
    }

    pub fn n_x(&self) -> usize {
        self.basis.nrows()
    }

    /// `x_p + Nα`.
    pub fn point(&self, alpha: &CVector) -> CVector {
        &self.particular + &self.basis * alpha
    }

    /// `α = Nᴴ(x − x_p)`.
    pub fn coordinates(&self, x: &CVector) -> CVector {
        self.basis.adjoint() * (x - &self.particular)
    }
}

/// Builds the nullspace parameterization of a constraint set.
pub fn parameterize(constraints: &ConstraintSet) -> Result<NullspaceParam> {
    NullspaceParam::new(constraints)
}

/// Which closed forms of the constrained BLUE apply to a (model, constraints) pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CompatibilityReport {
    pub n_y: usize,
    pub n_x: usize,
    pub n_b: usize,
    pub n0: usize,
    pub h_rank: usize,
    pub hn_rank: usize,
}

impl CompatibilityReport {
    /// Direct form (and LS/BLUE/CLS) need `N_y ≥ N_x` and full-column-rank `H`.
    pub fn direct_form_admissible(&self) -> bool {
        self.n_y >= self.n_x && self.h_rank == self.n_x
    }

    /// Nullspace form needs only full-column-rank `HN`.
    pub fn nullspace_form_admissible(&self) -> bool {
        self.hn_rank == self.n0
    }

    pub fn check_direct_form(&self) -> Result<()> {
        if self.direct_form_admissible() {
            Ok(())
        } else {
            Err(Error::RankDeficient {
                what: "H",
                rank: self.h_rank,
                cols: self.n_x,
            })
        }
    }

    pub fn check_nullspace_form(&self) -> Result<()> {
        if self.nullspace_form_admissible() {
            Ok(())
        } else {
            Err(Error::RankDeficientReducedModel {
                rank: self.hn_rank,
                n0: self.n0,
            })
        }
    }
}

/// Reports which estimator forms are admissible for this model and constraint set.
pub fn validate(model: &LinearModel, constraints: &ConstraintSet) -> Result<CompatibilityReport> {
    if constraints.n_x() != model.n_x() {
        return Err(Error::DimensionMismatch {
            context: "validate: A and H must have the same column count",
            expected: model.n_x().to_string(),
            actual: constraints.n_x().to_string(),
        });
    }
    let basis = nullspace_basis(constraints.a(), None)?;
    let hn = model.h() * &basis;
    Ok(CompatibilityReport {
        n_y: model.n_y(),
        n_x: model.n_x(),
        n_b: constraints.n_b(),
        n0: basis.ncols(),
        h_rank: numerical_rank(model.h(), None),
        hn_rank: numerical_rank(&hn, None),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{real_matrix, real_vector};
    use num_complex::Complex64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> CMatrix {
        CMatrix::from_fn(rows, cols, |_, _| {
            Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        })
    }

    fn random_vector(rng: &mut ChaCha8Rng, n: usize) -> CVector {
        random_matrix(rng, n, 1).column(0).into_owned()
    }

    #[test]
    fn model_rejects_bad_covariance() {
        let h = CMatrix::identity(3, 2);
        assert!(matches!(
            LinearModel::new(h.clone(), CMatrix::identity(2, 2)),
            Err(Error::DimensionMismatch { .. })
        ));
        let indefinite = real_matrix(3, 3, &[1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 1.0]);
        assert!(matches!(
            LinearModel::new(h, indefinite),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn constraint_set_invariants() {
        assert!(matches!(
            ConstraintSet::new(CMatrix::identity(2, 2), CVector::zeros(2)),
            Err(Error::ConstraintCount { n_b: 2, n_x: 2 })
        ));
        assert!(matches!(
            ConstraintSet::new(CMatrix::identity(1, 3), CVector::zeros(2)),
            Err(Error::DimensionMismatch { .. })
        ));
        let dependent = real_matrix(2, 3, &[1.0, 1.0, 0.0, 2.0, 2.0, 0.0]);
        assert!(matches!(
            ConstraintSet::new(dependent, CVector::zeros(2)),
            Err(Error::RankDeficientConstraints { rank: 1, rows: 2 })
        ));
    }

    #[test]
    fn zero_sum_parameterization() {
        let c = ConstraintSet::zero_sum(5).unwrap();
        let p = parameterize(&c).unwrap();
        assert_eq!(p.basis().shape(), (5, 4));
        assert_eq!(p.n0(), 4);
        assert!(p.particular().norm() < 1e-15);
        for col in p.basis().column_iter() {
            assert!(col.sum().norm() < 1e-13);
        }
    }

    #[test]
    fn canonical_pinning() {
        let a = real_matrix(2, 4, &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let b = CVector::from_vec(vec![Complex64::new(2.0, -1.0), Complex64::new(0.5, 3.0)]);
        let c = ConstraintSet::new(a, b.clone()).unwrap();
        let p = parameterize(&c).unwrap();
        let mut expected = CVector::zeros(4);
        expected.rows_mut(0, 2).copy_from(&b);
        assert!((p.particular() - expected).norm() < 1e-14);
        // basis lives entirely in the trailing two coordinates
        assert!(p.basis().rows(0, 2).norm() < 1e-14);
        assert!((p.basis().rows(2, 2).adjoint() * p.basis().rows(2, 2)
            - CMatrix::identity(2, 2))
        .norm()
            < 1e-12);
    }

    #[test]
    fn random_feasible_points_satisfy_constraints() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = random_matrix(&mut rng, 3, 7);
        let b = random_vector(&mut rng, 3);
        let c = ConstraintSet::new(a, b).unwrap();
        let p = parameterize(&c).unwrap();
        for _ in 0..100 {
            let alpha = random_vector(&mut rng, 4);
            let x = p.point(&alpha);
            assert!(c.relative_residual(&x) < 1e-12);
            let back = p.coordinates(&x);
            assert!((p.point(&back) - &x).norm() <= 1e-10 * x.norm().max(1.0));
            assert!((back - alpha).norm() < 1e-10);
        }
    }

    #[test]
    fn row_scaling_leaves_solution_set_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..20 {
            let a = random_matrix(&mut rng, 2, 5);
            let b = random_vector(&mut rng, 2);
            let scales = [Complex64::new(3.0, -2.0), Complex64::new(-0.1, 0.7)];
            let mut a2 = a.clone();
            let mut b2 = b.clone();
            for (i, s) in scales.iter().enumerate() {
                for j in 0..5 {
                    a2[(i, j)] *= s;
                }
                b2[i] *= s;
            }
            let c1 = ConstraintSet::new(a, b).unwrap();
            let c2 = ConstraintSet::new(a2, b2).unwrap();
            let p1 = parameterize(&c1).unwrap();
            let p2 = parameterize(&c2).unwrap();
            let proj1 = p1.basis() * p1.basis().adjoint();
            let proj2 = p2.basis() * p2.basis().adjoint();
            assert!((proj1 - proj2).norm() < 1e-10);
            assert!(c1.relative_residual(p2.particular()) < 1e-10);
            assert!(c2.relative_residual(p1.particular()) < 1e-10);
        }
    }

    #[test]
    fn overrides_are_checked() {
        let c = ConstraintSet::zero_sum(3).unwrap();
        let p = parameterize(&c).unwrap();
        assert!(matches!(
            p.with_particular(&c, real_vector(&[1.0, 0.0, 0.0])),
            Err(Error::InfeasibleParticular { .. })
        ));
        let shifted = p.with_particular(&c, real_vector(&[1.0, -2.0, 1.0])).unwrap();
        assert_eq!(shifted.particular()[1].re, -2.0);
        assert!(matches!(
            p.with_basis(&c, CMatrix::identity(3, 2)),
            Err(Error::InvalidBasis { .. })
        ));
        let flipped = p.basis().scale(-1.0);
        assert!(p.with_basis(&c, flipped).is_ok());
    }

    #[test]
    fn validate_reports_admissible_forms() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let model = LinearModel::new(random_matrix(&mut rng, 10, 5), CMatrix::identity(10, 10))
            .unwrap();
        let r = validate(&model, &ConstraintSet::zero_sum(5).unwrap()).unwrap();
        assert!(r.direct_form_admissible() && r.nullspace_form_admissible());

        let model = LinearModel::new(random_matrix(&mut rng, 4, 5), CMatrix::identity(4, 4))
            .unwrap();
        let c = ConstraintSet::new(random_matrix(&mut rng, 2, 5), random_vector(&mut rng, 2))
            .unwrap();
        let r = validate(&model, &c).unwrap();
        assert_eq!((r.n0, r.hn_rank), (3, 3));
        assert!(!r.direct_form_admissible());
        assert!(r.nullspace_form_admissible());
        assert!(matches!(r.check_direct_form(), Err(Error::RankDeficient { .. })));

        let model = LinearModel::new(CMatrix::zeros(6, 3), CMatrix::identity(6, 6)).unwrap();
        let r = validate(&model, &ConstraintSet::zero_sum(3).unwrap()).unwrap();
        assert!(!r.direct_form_admissible() && !r.nullspace_form_admissible());
        assert!(matches!(
            r.check_nullspace_form(),
            Err(Error::RankDeficientReducedModel { rank: 0, n0: 2 })
        ));

        assert!(matches!(
            validate(&model, &ConstraintSet::zero_sum(4).unwrap()),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}
