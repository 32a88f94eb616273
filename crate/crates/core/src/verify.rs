//! Numerical verification of the constrained BLUE on random instances:
//! agreement with the KKT solution, the covariance identity between the two
//! closed forms, independence from the particular solution and from the choice
//! of nullspace basis, and the reduction to constrained LS under white noise.

use nalgebra::QR;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::Result;
use crate::estimators::{
    analytic_cblue_covariance_direct, analytic_cblue_covariance_nullspace, cblue_direct,
    cblue_direct_sign_flipped, cblue_nullspace, cls, kkt_oracle, AffineEstimator,
};
use crate::model::{validate, ConstraintSet, LinearModel, NullspaceParam};
use crate::numerics::{hermitian_part, CMatrix, CVector, HpdFactor};

pub const MAX_N_X: usize = 20;
pub const MAX_N_Y: usize = 40;

/// Whether `N_y ≥ N_x` (both closed forms apply) or `N_y < N_x` (nullspace form only).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum InstanceShape {
    Overdetermined,
    Underdetermined,
}

/// A random admissible problem.
#[derive(Debug, Clone)]
pub struct Instance {
    pub shape: InstanceShape,
    pub model: LinearModel,
    pub constraints: ConstraintSet,
    pub param: NullspaceParam,
}

impl Instance {
    pub fn direct_form_admissible(&self) -> bool {
        self.shape == InstanceShape::Overdetermined
    }
}

pub fn gaussian_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> CMatrix {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    CMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(re * s, im * s)
    })
}

pub fn gaussian_vector<R: Rng + ?Sized>(rng: &mut R, n: usize) -> CVector {
    gaussian_matrix(rng, n, 1).column(0).into_owned()
}

/// Well-conditioned random Hermitian positive-definite matrix.
pub fn random_hpd<R: Rng + ?Sized>(rng: &mut R, n: usize) -> CMatrix {
    let g = gaussian_matrix(rng, n, n);
    hermitian_part(&((&g * g.adjoint()).unscale(n as f64) + CMatrix::identity(n, n).scale(0.25)))
}

/// Haar-like random unitary matrix from the QR decomposition of a Gaussian matrix.
pub fn random_unitary<R: Rng + ?Sized>(rng: &mut R, n: usize) -> CMatrix {
    let qr = QR::new(gaussian_matrix(rng, n, n));
    let (q, r) = qr.unpack();
    let mut q = q;
    for j in 0..n {
        let d = r[(j, j)];
        if d.norm() > 0.0 {
            let phase = d / d.norm();
            for i in 0..n {
                q[(i, j)] *= phase;
            }
        }
    }
    q
}

/// Draws an admissible instance with `N_x ≤ 20` and `N_y ≤ 40`. Draws whose
/// rank conditions fail numerically are discarded and redrawn.
pub fn random_instance<R: Rng + ?Sized>(rng: &mut R, shape: InstanceShape) -> Instance {
    loop {
        let n_x = rng.random_range(3..=MAX_N_X);
        let n_b = rng.random_range(1..n_x);
        let n0 = n_x - n_b;
        let n_y = match shape {
            InstanceShape::Overdetermined => rng.random_range(n_x..=MAX_N_Y),
            InstanceShape::Underdetermined => rng.random_range(n0..n_x),
        };
        let Ok(model) = LinearModel::new(gaussian_matrix(rng, n_y, n_x), random_hpd(rng, n_y))
        else {
            continue;
        };
        let Ok(constraints) =
            ConstraintSet::new(gaussian_matrix(rng, n_b, n_x), gaussian_vector(rng, n_b))
        else {
            continue;
        };
        let Ok(report) = validate(&model, &constraints) else {
            continue;
        };
        let ok = match shape {
            InstanceShape::Overdetermined => report.direct_form_admissible(),
            InstanceShape::Underdetermined => report.nullspace_form_admissible(),
        };
        if !ok {
            continue;
        }
        let Ok(param) = NullspaceParam::new(&constraints) else {
            continue;
        };
        return Instance {
            shape,
            model,
            constraints,
            param,
        };
    }
}

fn rel(diff: f64, scale: f64) -> f64 {
    if scale > 0.0 {
        diff / scale
    } else {
        diff
    }
}

/// Worst scaled constraint residual `‖Ax̂ − b‖ / (‖A‖_F‖x̂‖ + ‖b‖)` over `samples` random `y`.
pub fn constraint_residual<R: Rng + ?Sized>(
    est: &AffineEstimator,
    constraints: &ConstraintSet,
    rng: &mut R,
    samples: usize,
) -> Result<f64> {
    let mut worst = 0.0_f64;
    for _ in 0..samples {
        let y = gaussian_vector(rng, est.n_y()).scale(10.0);
        worst = worst.max(constraints.relative_residual(&est.apply(&y)?));
    }
    Ok(worst)
}

/// Relative distance between an estimate and the KKT solution for a random `y`.
pub fn oracle_error<R: Rng + ?Sized>(
    est: &AffineEstimator,
    inst: &Instance,
    rng: &mut R,
) -> Result<f64> {
    let y = gaussian_vector(rng, inst.model.n_y());
    let x = est.apply(&y)?;
    let oracle = kkt_oracle(&inst.model, &inst.constraints, &y)?;
    Ok(rel((x - &oracle).norm(), oracle.norm()))
}

/// Relative gap between `N(NᴴPN)⁻¹Nᴴ` and `P⁻¹ − P⁻¹Aᴴ(AP⁻¹Aᴴ)⁻¹AP⁻¹`.
pub fn covariance_identity_residual(inst: &Instance) -> Result<f64> {
    let ns = analytic_cblue_covariance_nullspace(&inst.model, &inst.param)?;
    let direct = analytic_cblue_covariance_direct(&inst.model, &inst.constraints)?;
    Ok(rel((&ns.matrix - &direct.matrix).norm(), direct.matrix.norm()))
}

/// `‖T − T·Aᴴ(AAᴴ)⁻¹A‖_F / ‖T‖_F` with `T = I − N(NᴴPN)⁻¹NᴴP`.
pub fn particular_identity_residual(inst: &Instance) -> Result<f64> {
    let h = inst.model.h();
    let n = inst.param.basis();
    let a = inst.constraints.a();
    let n_x = inst.model.n_x();
    let p = h.adjoint() * inst.model.cnn_factor().solve(h)?;
    let npn = HpdFactor::new(&hermitian_part(&(n.adjoint() * &p * n)))?;
    let t = CMatrix::identity(n_x, n_x) - n * npn.solve(&(n.adjoint() * &p))?;
    let aa = HpdFactor::new(&hermitian_part(&(a * a.adjoint())))?;
    let row_projector = a.adjoint() * aa.solve(a)?;
    Ok(rel((&t - &t * row_projector).norm(), t.norm()))
}

/// Relative change of the nullspace-form estimate when `x_p` is shifted by a
/// random nullspace component.
pub fn particular_independence<R: Rng + ?Sized>(inst: &Instance, rng: &mut R) -> Result<f64> {
    let base = cblue_nullspace(&inst.model, &inst.param)?;
    let alpha = gaussian_vector(rng, inst.param.n0()).scale(rng.random_range(0.1..10.0));
    let shifted_xp = inst.param.point(&alpha);
    let shifted = inst.param.with_particular(&inst.constraints, shifted_xp)?;
    let other = cblue_nullspace(&inst.model, &shifted)?;
    let y = gaussian_vector(rng, inst.model.n_y());
    let (x1, x2) = (base.apply(&y)?, other.apply(&y)?);
    Ok(rel((&x1 - x2).norm(), x1.norm()))
}

/// Relative change of the nullspace-form estimate under `N → N·U` for a random unitary `U`.
pub fn basis_independence<R: Rng + ?Sized>(inst: &Instance, rng: &mut R) -> Result<f64> {
    let base = cblue_nullspace(&inst.model, &inst.param)?;
    let u = random_unitary(rng, inst.param.n0());
    let rotated = inst
        .param
        .with_basis(&inst.constraints, inst.param.basis() * u)?;
    let other = cblue_nullspace(&inst.model, &rotated)?;
    let y = gaussian_vector(rng, inst.model.n_y());
    let (x1, x2) = (base.apply(&y)?, other.apply(&y)?);
    Ok(rel((&x1 - x2).norm(), x1.norm()))
}

/// Worst of the two unbiasedness residuals `E·H·N = N`, `f = (I − E·H)·x_p`.
pub fn unbiasedness_residual(est: &AffineEstimator, inst: &Instance) -> f64 {
    let (a, b) = est.unbiasedness_residuals(&inst.model, &inst.param);
    a.max(b)
}

/// Relative gap between direct-form constrained BLUE and constrained LS under
/// `C_nn = σ²I`, measured on `E` and `f`.
pub fn white_noise_reduction(inst: &Instance, sigma2: f64) -> Result<f64> {
    let n_y = inst.model.n_y();
    let white = inst
        .model
        .with_noise(CMatrix::identity(n_y, n_y).scale(sigma2))?;
    let cb = cblue_direct(&white, &inst.constraints)?;
    let reference = cls(&white, &inst.constraints)?;
    let e = rel(
        (cb.matrix() - reference.matrix()).norm(),
        reference.matrix().norm(),
    );
    let f = rel(
        (cb.offset() - reference.offset()).norm(),
        reference.offset().norm(),
    );
    Ok(e.max(f))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct VerifyOptions {
    pub instances: usize,
    pub seed: u64,
    /// Replaces the direct form with a sign-flipped variant so the suite must fail.
    pub inject_fault: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropertyResult {
    pub name: &'static str,
    pub tolerance: f64,
    pub worst: f64,
    pub checked: usize,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub seed: u64,
    pub instances: usize,
    pub properties: Vec<PropertyResult>,
}

impl VerificationReport {
    pub fn all_passed(&self) -> bool {
        self.properties.iter().all(|p| p.passed)
    }
}

struct Tracker {
    name: &'static str,
    tolerance: f64,
    worst: f64,
    checked: usize,
    failed: bool,
}

impl Tracker {
    fn new(name: &'static str, tolerance: f64) -> Self {
        Self {
            name,
            tolerance,
            worst: 0.0,
            checked: 0,
            failed: false,
        }
    }

    fn record(&mut self, value: Result<f64>) {
        self.checked += 1;
        match value {
            Ok(v) if v.is_finite() => {
                self.worst = self.worst.max(v);
                if v > self.tolerance {
                    self.failed = true;
                }
            }
            _ => {
                self.worst = f64::INFINITY;
                self.failed = true;
            }
        }
    }

    fn finish(self) -> PropertyResult {
        PropertyResult {
            name: self.name,
            tolerance: self.tolerance,
            worst: self.worst,
            checked: self.checked,
            passed: !self.failed && self.checked > 0,
        }
    }
}

/// Runs every property over `instances` random instances, alternating
/// overdetermined and underdetermined shapes.
pub fn run_verification(options: &VerifyOptions) -> VerificationReport {
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut constraint = Tracker::new("constraint satisfaction", 1e-9);
    let mut oracle_direct = Tracker::new("direct form matches KKT solution", 1e-8);
    let mut oracle_nullspace = Tracker::new("nullspace form matches KKT solution", 1e-8);
    let mut form_equivalence = Tracker::new("direct form equals nullspace form", 1e-8);
    let mut cov_identity = Tracker::new("covariance identity between forms", 1e-9);
    let mut xp_identity = Tracker::new("T = T A^H (A A^H)^-1 A", 1e-9);
    let mut xp_independence = Tracker::new("independence of particular solution", 1e-9);
    let mut basis_invariance = Tracker::new("independence of nullspace basis", 1e-9);
    let mut unbiased = Tracker::new("unbiasedness on the feasible set", 1e-9);
    let mut reduction = Tracker::new("white noise reduces to constrained LS", 1e-10);

    for i in 0..options.instances {
        let shape = if i % 2 == 0 {
            InstanceShape::Overdetermined
        } else {
            InstanceShape::Underdetermined
        };
        let inst = random_instance(&mut rng, shape);

        let nullspace = cblue_nullspace(&inst.model, &inst.param);
        match &nullspace {
            Ok(est) => {
                constraint.record(constraint_residual(est, &inst.constraints, &mut rng, 5));
                oracle_nullspace.record(oracle_error(est, &inst, &mut rng));
                unbiased.record(Ok(unbiasedness_residual(est, &inst)));
            }
            Err(e) => {
                constraint.record(Err(e.clone()));
                oracle_nullspace.record(Err(e.clone()));
            }
        }
        xp_identity.record(particular_identity_residual(&inst));
        xp_independence.record(particular_independence(&inst, &mut rng));
        basis_invariance.record(basis_independence(&inst, &mut rng));

        if !inst.direct_form_admissible() {
            continue;
        }
        let direct = if options.inject_fault {
            cblue_direct_sign_flipped(&inst.model, &inst.constraints)
        } else {
            cblue_direct(&inst.model, &inst.constraints)
        };
        match (&direct, &nullspace) {
            (Ok(d), Ok(n)) => {
                constraint.record(constraint_residual(d, &inst.constraints, &mut rng, 5));
                oracle_direct.record(oracle_error(d, &inst, &mut rng));
                unbiased.record(Ok(unbiasedness_residual(d, &inst)));
                let y = gaussian_vector(&mut rng, inst.model.n_y());
                form_equivalence.record(d.apply(&y).and_then(|xd| {
                    let xn = n.apply(&y)?;
                    Ok(rel((&xd - &xn).norm(), xn.norm()))
                }));
            }
            (Err(e), _) | (_, Err(e)) => {
                oracle_direct.record(Err(e.clone()));
                form_equivalence.record(Err(e.clone()));
            }
        }
        if let Ok(c) = cls(&inst.model, &inst.constraints) {
            constraint.record(constraint_residual(&c, &inst.constraints, &mut rng, 5));
        }
        cov_identity.record(covariance_identity_residual(&inst));
        let sigma2 = [0.1, 1.0, 10.0][i / 2 % 3];
        reduction.record(white_noise_reduction(&inst, sigma2));
    }

    VerificationReport {
        seed: options.seed,
        instances: options.instances,
        properties: [
            constraint,
            oracle_direct,
            oracle_nullspace,
            form_equivalence,
            cov_identity,
            xp_identity,
            xp_independence,
            basis_invariance,
            unbiased,
            reduction,
        ]
        .into_iter()
        .map(Tracker::finish)
        .collect(),
    }
}
