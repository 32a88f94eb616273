//! Dense complex linear-algebra kernel.
//!
//! Everything above this module works on [`CMatrix`]/[`CVector`] and never
//! forms an explicit inverse: Hermitian positive-definite operands go through
//! [`HpdFactor`], nullspaces and ranks come from a singular-value decomposition.

use nalgebra::{DMatrix, DVector, SVD};
use num_complex::Complex64;

use crate::error::{shape, Error, Result};

/// Dense complex matrix in double precision.
pub type CMatrix = DMatrix<Complex64>;
/// Dense complex column vector in double precision.
pub type CVector = DVector<Complex64>;

/// Relative asymmetry tolerated before a matrix is rejected as non-Hermitian.
pub const HERMITIAN_TOL: f64 = 1e-12;

/// Builds a complex matrix from row-major real entries.
pub fn real_matrix(rows: usize, cols: usize, data: &[f64]) -> CMatrix {
    assert_eq!(data.len(), rows * cols, "real_matrix: data length");
    CMatrix::from_row_iterator(rows, cols, data.iter().map(|&v| Complex64::new(v, 0.0)))
}

/// Builds a complex vector from real entries.
pub fn real_vector(data: &[f64]) -> CVector {
    CVector::from_iterator(data.len(), data.iter().map(|&v| Complex64::new(v, 0.0)))
}

/// Checks the generic matrix invariants: non-empty and all entries finite.
pub fn check_matrix(what: &'static str, m: &CMatrix) -> Result<()> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Err(Error::Empty {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            let z = m[(i, j)];
            if !z.re.is_finite() || !z.im.is_finite() {
                return Err(Error::NonFinite {
                    what,
                    row: i,
                    col: j,
                });
            }
        }
    }
    Ok(())
}

/// Checks the generic vector invariants: non-empty and all entries finite.
pub fn check_vector(what: &'static str, v: &CVector) -> Result<()> {
    if v.is_empty() {
        return Err(Error::Empty { rows: 0, cols: 1 });
    }
    for (i, z) in v.iter().enumerate() {
        if !z.re.is_finite() || !z.im.is_finite() {
            return Err(Error::NonFinite { what, row: i, col: 0 });
        }
    }
    Ok(())
}

/// `‖M − Mᴴ‖_F / ‖M‖_F` (zero for the zero matrix).
pub fn hermitian_defect(m: &CMatrix) -> f64 {
    let norm = m.norm();
    if norm == 0.0 {
        return 0.0;
    }
    (m - m.adjoint()).norm() / norm
}

/// Returns `(M + Mᴴ) / 2`.
pub fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()).scale(0.5)
}

/// Default rank threshold: `max(rows, cols) · ε · σ_max`.
pub fn default_rank_tol(rows: usize, cols: usize, sigma_max: f64) -> f64 {
    rows.max(cols) as f64 * f64::EPSILON * sigma_max
}

/// Singular values in descending order.
pub fn singular_values(m: &CMatrix) -> Vec<f64> {
    let mut s: Vec<f64> = m.clone().singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Numerical rank with the given threshold, or [`default_rank_tol`] when `None`.
pub fn numerical_rank(m: &CMatrix, rank_tol: Option<f64>) -> usize {
    let s = singular_values(m);
    let sigma_max = s.first().copied().unwrap_or(0.0);
    let tol = rank_tol.unwrap_or_else(|| default_rank_tol(m.nrows(), m.ncols(), sigma_max));
    s.iter().filter(|&&v| v > tol).count()
}

/// Cholesky factor `M = L·Lᴴ` of a Hermitian positive-definite matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct HpdFactor {
    lower: CMatrix,
}

impl HpdFactor {
    /// Factors `m`; only its lower triangle is read once the Hermitian check passes.
    pub fn new(m: &CMatrix) -> Result<Self> {
        check_matrix("HPD operand", m)?;
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch {
                context: "hpd_factor",
                expected: "square matrix".into(),
                actual: shape(m.nrows(), m.ncols()),
            });
        }
        let asym = hermitian_defect(m);
        if asym > HERMITIAN_TOL {
            return Err(Error::NotHermitian {
                what: "HPD operand",
                asymmetry: asym,
            });
        }

        let n = m.nrows();
        let max_diag = (0..n).map(|i| m[(i, i)].re).fold(0.0_f64, f64::max);
        let threshold = n as f64 * f64::EPSILON * max_diag;
        let mut l = CMatrix::zeros(n, n);
        for j in 0..n {
            let mut pivot = m[(j, j)].re;
            for k in 0..j {
                pivot -= l[(j, k)].norm_sqr();
            }
            if !(pivot > threshold) {
                return Err(Error::NotPositiveDefinite {
                    pivot: j,
                    value: pivot,
                    threshold,
                });
            }
            let d = pivot.sqrt();
            l[(j, j)] = Complex64::new(d, 0.0);
            for i in (j + 1)..n {
                let mut s = m[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)].conj();
                }
                l[(i, j)] = s / d;
            }
        }
        Ok(Self { lower: l })
    }

    pub fn dim(&self) -> usize {
        self.lower.nrows()
    }

    /// The lower-triangular factor `L`.
    pub fn lower(&self) -> &CMatrix {
        &self.lower
    }

    /// `L·Lᴴ`.
    pub fn recompose(&self) -> CMatrix {
        &self.lower * self.lower.adjoint()
    }

    fn check_rows(&self, context: &'static str, rows: usize, cols: usize) -> Result<()> {
        if rows != self.dim() {
            return Err(Error::DimensionMismatch {
                context,
                expected: format!("{} rows", self.dim()),
                actual: shape(rows, cols),
            });
        }
        Ok(())
    }

    /// Solves `M·X = B`.
    pub fn solve(&self, b: &CMatrix) -> Result<CMatrix> {
        let w = self.whiten(b)?;
        Ok(self
            .lower
            .ad_solve_lower_triangular(&w)
            .expect("Cholesky factor has a positive diagonal"))
    }

    /// Solves `M·x = b` for a vector.
    pub fn solve_vec(&self, b: &CVector) -> Result<CVector> {
        self.check_rows("hpd_solve", b.nrows(), 1)?;
        let w = self
            .lower
            .solve_lower_triangular(b)
            .expect("Cholesky factor has a positive diagonal");
        Ok(self
            .lower
            .ad_solve_lower_triangular(&w)
            .expect("Cholesky factor has a positive diagonal"))
    }

    /// `L⁻¹·B`, so that `(L⁻¹B)ᴴ(L⁻¹B) = Bᴴ M⁻¹ B`.
    pub fn whiten(&self, b: &CMatrix) -> Result<CMatrix> {
        self.check_rows("hpd_solve", b.nrows(), b.ncols())?;
        Ok(self
            .lower
            .solve_lower_triangular(b)
            .expect("Cholesky factor has a positive diagonal"))
    }

    /// `L·z`, mapping white samples to samples with covariance `M`.
    pub fn color(&self, z: &CVector) -> Result<CVector> {
        self.check_rows("hpd_color", z.nrows(), 1)?;
        Ok(&self.lower * z)
    }
}

/// Factors a Hermitian positive-definite matrix.
pub fn hpd_factor(m: &CMatrix) -> Result<HpdFactor> {
    HpdFactor::new(m)
}

/// Solves `M·X = B` given `M = L·Lᴴ`.
pub fn hpd_solve(factor: &HpdFactor, b: &CMatrix) -> Result<CMatrix> {
    factor.solve(b)
}

/// Orthonormal basis of the nullspace of a full-row-rank `A` (`N_x × (N_x − rank)`).
///
/// The basis is taken from the trailing right singular vectors. `A` is padded
/// with zero rows to a square matrix so the decomposition yields the full set of
/// right singular vectors; padding does not change them.
pub fn nullspace_basis(a: &CMatrix, rank_tol: Option<f64>) -> Result<CMatrix> {
    check_matrix("A", a)?;
    let (n_b, n_x) = a.shape();
    let mut padded = CMatrix::zeros(n_x.max(n_b), n_x);
    padded.view_mut((0, 0), (n_b, n_x)).copy_from(a);

    let svd = SVD::new(padded, false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let sigma = &svd.singular_values;

    let mut order: Vec<usize> = (0..sigma.len()).collect();
    order.sort_by(|&i, &j| sigma[j].total_cmp(&sigma[i]));
    let sigma_max = order.first().map(|&i| sigma[i]).unwrap_or(0.0);
    let tol = rank_tol.unwrap_or_else(|| default_rank_tol(n_b, n_x, sigma_max));
    let rank = order.iter().filter(|&&i| sigma[i] > tol).count();

    if rank < n_b {
        return Err(Error::RankDeficientConstraints { rank, rows: n_b });
    }
    let n0 = n_x - rank;
    if n0 == 0 {
        return Err(Error::EmptyNullspace { n_x });
    }

    let mut basis = CMatrix::zeros(n_x, n0);
    for (c, &idx) in order[rank..].iter().enumerate() {
        for r in 0..n_x {
            basis[(r, c)] = v_t[(idx, r)].conj();
        }
    }
    Ok(basis)
}

/// Least-norm solution `Aᴴ(AAᴴ)⁻¹b` of `Ax = b`.
pub fn least_norm_solution(a: &CMatrix, b: &CVector) -> Result<CVector> {
    check_matrix("A", a)?;
    check_vector("b", b)?;
    if b.len() != a.nrows() {
        return Err(Error::DimensionMismatch {
            context: "least_norm_solution",
            expected: format!("b of length {}", a.nrows()),
            actual: b.len().to_string(),
        });
    }
    let gram = hermitian_part(&(a * a.adjoint()));
    let factor = HpdFactor::new(&gram).map_err(|_| Error::RankDeficientConstraints {
        rank: numerical_rank(a, None),
        rows: a.nrows(),
    })?;
    Ok(a.adjoint() * factor.solve_vec(b)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> CMatrix {
        CMatrix::from_fn(rows, cols, |_, _| {
            c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        })
    }

    fn random_hpd(rng: &mut ChaCha8Rng, n: usize) -> CMatrix {
        let g = random_matrix(rng, n, n);
        hermitian_part(&(&g * g.adjoint() + CMatrix::identity(n, n).scale(0.5)))
    }

    #[test]
    fn identity_factor_is_identity() {
        let f = hpd_factor(&CMatrix::identity(3, 3)).unwrap();
        assert!((f.lower() - CMatrix::identity(3, 3)).norm() < 1e-15);
    }

    #[test]
    fn diagonal_factor_takes_square_roots() {
        let d = [1.0, 1.0, 0.5, 0.5, 0.1, 0.1, 0.01, 0.01, 1e-3, 1e-3];
        let m = CMatrix::from_diagonal(&real_vector(&d));
        let f = hpd_factor(&m).unwrap();
        let expected = CMatrix::from_diagonal(&real_vector(&d.map(f64::sqrt)));
        assert!((f.lower() - expected).norm() < 1e-15);
    }

    #[test]
    fn two_by_two_factor_recomposes() {
        let m = real_matrix(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let f = hpd_factor(&m).unwrap();
        let expected = real_matrix(
            2,
            2,
            &[2f64.sqrt(), 0.0, 1.0 / 2f64.sqrt(), 1.5f64.sqrt()],
        );
        assert!((f.lower() - expected).norm() < 1e-14);
        assert!((f.recompose() - &m).norm() <= 1e-10 * m.norm());
    }

    #[test]
    fn indefinite_and_singular_inputs_are_rejected() {
        let m = real_matrix(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(
            hpd_factor(&m),
            Err(Error::NotPositiveDefinite { pivot: 1, .. })
        ));
        let s = real_matrix(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(hpd_factor(&s), Err(Error::NotPositiveDefinite { .. })));
        let z = CMatrix::zeros(3, 3);
        assert!(matches!(
            hpd_factor(&z),
            Err(Error::NotPositiveDefinite { pivot: 0, .. })
        ));
    }

    #[test]
    fn non_hermitian_and_non_square_are_rejected() {
        let m = real_matrix(2, 2, &[2.0, 1.0, 0.0, 2.0]);
        assert!(matches!(hpd_factor(&m), Err(Error::NotHermitian { .. })));
        let r = real_matrix(2, 3, &[1.0; 6]);
        assert!(matches!(hpd_factor(&r), Err(Error::DimensionMismatch { .. })));
        let mut nan = CMatrix::identity(2, 2);
        nan[(1, 0)] = c(f64::NAN, 0.0);
        assert!(matches!(hpd_factor(&nan), Err(Error::NonFinite { .. })));
    }

    #[test]
    fn complex_hermitian_factor() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in 1..8 {
            let m = random_hpd(&mut rng, n);
            let f = hpd_factor(&m).unwrap();
            assert!((f.recompose() - &m).norm() <= 1e-10 * m.norm());
            for i in 0..n {
                assert!(f.lower()[(i, i)].re > 0.0);
                assert_eq!(f.lower()[(i, i)].im, 0.0);
                for j in (i + 1)..n {
                    assert_eq!(f.lower()[(i, j)], c(0.0, 0.0));
                }
            }
        }
    }

    #[test]
    fn solve_identity_and_scalar() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b = random_matrix(&mut rng, 4, 3);
        let f = hpd_factor(&CMatrix::identity(4, 4)).unwrap();
        assert!((hpd_solve(&f, &b).unwrap() - &b).norm() < 1e-15);

        let f = hpd_factor(&real_matrix(1, 1, &[4.0])).unwrap();
        let x = hpd_solve(&f, &real_matrix(1, 1, &[8.0])).unwrap();
        assert!((x[(0, 0)] - c(2.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn solve_recovers_constructed_solution() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = random_hpd(&mut rng, 6);
        let x0 = random_matrix(&mut rng, 6, 3);
        let b = &m * &x0;
        let f = hpd_factor(&m).unwrap();
        let x = hpd_solve(&f, &b).unwrap();
        assert!((&x - &x0).norm() <= 1e-9 * x0.norm());
        assert!((&m * &x - &b).norm() <= 1e-9 * b.norm());
        let xv = f.solve_vec(&b.column(0).into_owned()).unwrap();
        assert!((xv - x0.column(0)).norm() <= 1e-9 * x0.norm());
    }

    #[test]
    fn solve_rejects_wrong_row_count() {
        let f = hpd_factor(&CMatrix::identity(3, 3)).unwrap();
        assert!(matches!(
            hpd_solve(&f, &CMatrix::zeros(2, 1)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn nullspace_of_pair_sum() {
        let a = real_matrix(1, 2, &[1.0, 1.0]);
        let n = nullspace_basis(&a, None).unwrap();
        assert_eq!(n.shape(), (2, 1));
        assert!((&a * &n).norm() < 1e-14);
        assert!((n.norm() - 1.0).abs() < 1e-14);
        // proportional to [1, -1]/sqrt(2) up to a unit phase
        assert!((n[(0, 0)] + n[(1, 0)]).norm() < 1e-14);
        assert!((n[(0, 0)].norm() - 0.5f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn nullspace_of_zero_sum_constraint() {
        let a = real_matrix(1, 5, &[1.0; 5]);
        let n = nullspace_basis(&a, None).unwrap();
        assert_eq!(n.shape(), (5, 4));
        for col in n.column_iter() {
            assert!(col.sum().norm() < 1e-13);
        }
        assert!((n.adjoint() * &n - CMatrix::identity(4, 4)).norm() < 1e-12);
    }

    #[test]
    fn nullspace_of_random_complex_constraints() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let a = random_matrix(&mut rng, 2, 5);
            let n = nullspace_basis(&a, None).unwrap();
            assert_eq!(n.shape(), (5, 3));
            assert!((&a * &n).norm() <= 1e-10 * a.norm());
            assert!((n.adjoint() * &n - CMatrix::identity(3, 3)).norm() <= 1e-12);
        }
    }

    #[test]
    fn nullspace_errors() {
        let a = real_matrix(2, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0]);
        assert!(matches!(
            nullspace_basis(&a, None),
            Err(Error::RankDeficientConstraints { rank: 1, rows: 2 })
        ));
        let sq = CMatrix::identity(3, 3);
        assert!(matches!(
            nullspace_basis(&sq, None),
            Err(Error::EmptyNullspace { n_x: 3 })
        ));
    }

    #[test]
    fn least_norm_examples() {
        let a = real_matrix(1, 2, &[1.0, 1.0]);
        let x = least_norm_solution(&a, &real_vector(&[2.0])).unwrap();
        assert!((x - real_vector(&[1.0, 1.0])).norm() < 1e-14);

        let a = real_matrix(1, 5, &[1.0; 5]);
        let x = least_norm_solution(&a, &real_vector(&[0.0])).unwrap();
        assert!(x.norm() < 1e-15);
    }

    #[test]
    fn least_norm_is_feasible_orthogonal_and_minimal() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let a = random_matrix(&mut rng, 2, 6);
            let b = random_matrix(&mut rng, 2, 1).column(0).into_owned();
            let xp = least_norm_solution(&a, &b).unwrap();
            assert!((&a * &xp - &b).norm() <= 1e-10 * (a.norm() * xp.norm() + b.norm()));
            let n = nullspace_basis(&a, None).unwrap();
            assert!((n.adjoint() * &xp).norm() <= 1e-10 * xp.norm().max(1.0));
            for _ in 0..5 {
                let alpha = random_matrix(&mut rng, 4, 1);
                let other = &xp + &n * alpha;
                assert!(xp.norm() <= other.norm() + 1e-12);
            }
        }
    }

    #[test]
    fn least_norm_rejects_rank_deficiency() {
        let a = real_matrix(2, 3, &[1.0, 0.0, 0.0, 2.0, 0.0, 0.0]);
        assert!(matches!(
            least_norm_solution(&a, &real_vector(&[1.0, 2.0])),
            Err(Error::RankDeficientConstraints { rank: 1, rows: 2 })
        ));
    }

    #[test]
    fn rank_counts() {
        assert_eq!(numerical_rank(&CMatrix::zeros(3, 2), None), 0);
        assert_eq!(numerical_rank(&CMatrix::identity(3, 2), None), 2);
        let a = real_matrix(2, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0]);
        assert_eq!(numerical_rank(&a, None), 1);
    }
}
