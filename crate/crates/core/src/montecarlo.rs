//! Monte Carlo MSE sweep for FIR system identification with a DC-free
//! impulse response.
//!
//! Every trial draws a fresh proper Gaussian input `u`, builds the convolution
//! matrix `H`, draws a feasible true impulse response and colored noise, and
//! applies the six estimators. Each trial owns an RNG substream keyed by
//! `(seed, k index, trial index)` and trials are accumulated in fixed-size
//! chunks merged in chunk order, so results do not depend on thread count.

use std::fmt;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{covariance, mean_subtracted, AffineEstimator, EstimatorFamily};
use crate::model::{ConstraintSet, LinearModel, NullspaceParam};
use crate::numerics::{numerical_rank, CMatrix, CVector, HpdFactor};

/// Noise profile of the reference experiment, scaled by `k`.
pub const DEFAULT_NOISE_DIAG: [f64; 10] = [1.0, 1.0, 0.5, 0.5, 0.1, 0.1, 0.01, 0.01, 1e-3, 1e-3];

const CHUNK_TRIALS: usize = 256;
const MAX_REGENERATIONS: u32 = 1000;

/// How the feasible ground-truth impulse response is drawn for each trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrueXPolicy {
    /// `x = Nα / ‖Nα‖` with `α` standard proper Gaussian.
    #[default]
    UnitNormNullspace,
    /// `x = Nα` with `α` standard proper Gaussian, unnormalized.
    GaussianNullspace,
}

impl fmt::Display for TrueXPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::UnitNormNullspace => "unit-norm-nullspace",
            Self::GaussianNullspace => "gaussian-nullspace",
        })
    }
}

/// `n` log-spaced points from `lo` to `hi` inclusive.
pub fn log_spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.log10(), hi.log10());
            (0..n)
                .map(|i| 10f64.powf(a + (b - a) * i as f64 / (n - 1) as f64))
                .collect()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub n_x: usize,
    pub n_u: usize,
    pub base_noise_diag: Vec<f64>,
    pub k_grid: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub true_x_policy: TrueXPolicy,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            n_x: 5,
            n_u: 6,
            base_noise_diag: DEFAULT_NOISE_DIAG.to_vec(),
            k_grid: log_spaced(0.1, 1.0, 10),
            trials: 10_000,
            seed: 0,
            true_x_policy: TrueXPolicy::default(),
        }
    }
}

impl ExperimentSpec {
    /// Measurement length `N_y = n_u + n_x − 1`.
    pub fn n_y(&self) -> usize {
        self.n_u + self.n_x - 1
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidSpec(msg));
        if self.n_x < 2 {
            return bad(format!("n_x = {} must be at least 2", self.n_x));
        }
        if self.n_u < 1 {
            return bad("n_u must be at least 1".into());
        }
        if self.base_noise_diag.len() != self.n_y() {
            return bad(format!(
                "base_noise_diag has {} entries, expected n_u + n_x - 1 = {}",
                self.base_noise_diag.len(),
                self.n_y()
            ));
        }
        if let Some(d) = self
            .base_noise_diag
            .iter()
            .find(|d| !(d.is_finite() && **d > 0.0))
        {
            return bad(format!("base_noise_diag entry {d} is not a positive number"));
        }
        if self.k_grid.is_empty() {
            return bad("k_grid is empty".into());
        }
        if let Some(k) = self.k_grid.iter().find(|k| !(k.is_finite() && **k > 0.0)) {
            return bad(format!("k_grid entry {k} is not a positive number"));
        }
        if self.trials < 1 {
            return bad("trials must be at least 1".into());
        }
        Ok(())
    }
}

/// The six estimators of the experiment, in report column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum MseKind {
    Ls,
    LsMeanSub,
    Cls,
    Blue,
    BlueMeanSub,
    Cblue,
}

impl MseKind {
    pub const ALL: [MseKind; 6] = [
        Self::Ls,
        Self::LsMeanSub,
        Self::Cls,
        Self::Blue,
        Self::BlueMeanSub,
        Self::Cblue,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Column stem used in CSV headers.
    pub fn column(self) -> &'static str {
        match self {
            Self::Ls => "ls",
            Self::LsMeanSub => "ls_meansub",
            Self::Cls => "cls",
            Self::Blue => "blue",
            Self::BlueMeanSub => "blue_meansub",
            Self::Cblue => "cblue",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            Self::Ls => "LS",
            Self::LsMeanSub => "LS, mean subtracted",
            Self::Cls => "Constrained LS",
            Self::Blue => "BLUE",
            Self::BlueMeanSub => "BLUE, mean subtracted",
            Self::Cblue => "Constrained BLUE",
        }
    }

    /// Outputs satisfy the zero-sum constraint by construction.
    pub fn is_constrained(self) -> bool {
        !matches!(self, Self::Ls | Self::Blue)
    }
}

/// Full-convolution matrix: `H[i, j] = u[i − j]`, size `(len(u) + n_x − 1) × n_x`.
pub fn convolution_matrix(u: &CVector, n_x: usize) -> CMatrix {
    let n_u = u.len();
    CMatrix::from_fn(n_u + n_x - 1, n_x, |i, j| {
        if i >= j && i - j < n_u {
            u[i - j]
        } else {
            Complex64::new(0.0, 0.0)
        }
    })
}

/// Standard proper complex Gaussian: real and imaginary parts independent with variance 1/2.
pub fn sample_proper_gaussian<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> CVector {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    CVector::from_fn(dim, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(re * s, im * s)
    })
}

/// `L·z` with `z` standard proper Gaussian, so the result has covariance `L·Lᴴ`.
pub fn sample_noise<R: Rng + ?Sized>(factor: &HpdFactor, rng: &mut R) -> CVector {
    factor.lower() * sample_proper_gaussian(factor.dim(), rng)
}

/// RNG substream for one trial, keyed by `(seed, k index, trial index)`.
pub fn trial_rng(seed: u64, k_index: usize, trial: usize) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(k_index as u64).to_le_bytes());
    key[16..24].copy_from_slice(&(trial as u64).to_le_bytes());
    key[24..32].copy_from_slice(b"cblue-mc");
    ChaCha8Rng::from_seed(key)
}

/// Neumaier-compensated sum.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn merge(&mut self, other: &Self) {
        self.add(other.sum);
        self.add(other.comp);
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Per-(k, kind) statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct KindStats {
    pub kind: MseKind,
    /// Mean over trials of `‖x̂ − x‖² / N_x`.
    pub empirical_mse: f64,
    /// Standard error of `empirical_mse`.
    pub empirical_mse_std_err: f64,
    /// Mean over trials of `tr(E·C_nn·Eᴴ) / N_x` for that trial's `H`.
    pub analytic_mse: f64,
    /// Per-element mean of `x̂ − x`.
    pub bias: Vec<Complex64>,
    /// Per-element mean of `|x̂ − x|²`.
    pub element_mse: Vec<f64>,
    /// Worst `‖Ax̂ − b‖` over all trials, for constrained kinds.
    pub max_constraint_residual: Option<f64>,
}

impl KindStats {
    /// Per-element `|bias| / √(variance / trials)`, the bias in standard errors.
    pub fn bias_z_scores(&self, trials: usize) -> Vec<f64> {
        self.bias
            .iter()
            .zip(&self.element_mse)
            .map(|(b, m)| {
                let var = (m - b.norm_sqr()).max(0.0);
                let se = (var / trials as f64).sqrt();
                if se > 0.0 {
                    b.norm() / se
                } else {
                    0.0
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MseRow {
    pub k: f64,
    pub stats: Vec<KindStats>,
    /// Input draws rejected because `H` was numerically rank deficient.
    pub regenerations: u64,
    trials: usize,
    cross: Vec<f64>,
}

impl MseRow {
    pub fn get(&self, kind: MseKind) -> &KindStats {
        &self.stats[kind.index()]
    }

    /// Mean and standard error of the per-trial difference `MSE(a) − MSE(b)`.
    pub fn paired_difference(&self, a: MseKind, b: MseKind) -> (f64, f64) {
        let n = MseKind::ALL.len();
        let (ia, ib) = (a.index(), b.index());
        let mean = self.get(a).empirical_mse - self.get(b).empirical_mse;
        let second = self.cross[ia * n + ia] - 2.0 * self.cross[ia * n + ib] + self.cross[ib * n + ib];
        let var = (second - mean * mean).max(0.0);
        let t = self.trials as f64;
        let se = if self.trials > 1 {
            (var * t / (t - 1.0) / t).sqrt()
        } else {
            0.0
        };
        (mean, se)
    }

    /// `MSE(lower) ≤ MSE(higher)` up to `sigmas` standard errors of the paired difference.
    pub fn ordered(&self, lower: MseKind, higher: MseKind, sigmas: f64) -> bool {
        let (mean, se) = self.paired_difference(lower, higher);
        mean <= sigmas * se
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MseReport {
    pub spec: ExperimentSpec,
    pub rows: Vec<MseRow>,
}

impl MseReport {
    pub fn trials(&self) -> usize {
        self.spec.trials
    }

    pub fn seed(&self) -> u64 {
        self.spec.seed
    }

    pub fn true_x_policy(&self) -> TrueXPolicy {
        self.spec.true_x_policy
    }
}

/// Running sums for one k over a block of trials.
#[derive(Debug, Clone)]
struct Accumulator {
    mse: Vec<CompensatedSum>,
    mse_sq: Vec<CompensatedSum>,
    analytic: Vec<CompensatedSum>,
    cross: Vec<CompensatedSum>,
    bias_re: Vec<CompensatedSum>,
    bias_im: Vec<CompensatedSum>,
    element_sq: Vec<CompensatedSum>,
    max_residual: Vec<f64>,
    regenerations: u64,
}

impl Accumulator {
    fn new(n_x: usize) -> Self {
        let n = MseKind::ALL.len();
        Self {
            mse: vec![CompensatedSum::default(); n],
            mse_sq: vec![CompensatedSum::default(); n],
            analytic: vec![CompensatedSum::default(); n],
            cross: vec![CompensatedSum::default(); n * n],
            bias_re: vec![CompensatedSum::default(); n * n_x],
            bias_im: vec![CompensatedSum::default(); n * n_x],
            element_sq: vec![CompensatedSum::default(); n * n_x],
            max_residual: vec![0.0; n],
            regenerations: 0,
        }
    }

    fn merge(&mut self, other: &Self) {
        let pairs = [
            (&mut self.mse, &other.mse),
            (&mut self.mse_sq, &other.mse_sq),
            (&mut self.analytic, &other.analytic),
            (&mut self.cross, &other.cross),
            (&mut self.bias_re, &other.bias_re),
            (&mut self.bias_im, &other.bias_im),
            (&mut self.element_sq, &other.element_sq),
        ];
        for (mine, theirs) in pairs {
            for (m, t) in mine.iter_mut().zip(theirs) {
                m.merge(t);
            }
        }
        for (m, t) in self.max_residual.iter_mut().zip(&other.max_residual) {
            *m = m.max(*t);
        }
        self.regenerations += other.regenerations;
    }
}

/// The six estimators for one measurement matrix.
pub fn experiment_estimators(
    model: &LinearModel,
    constraints: &ConstraintSet,
) -> Result<[AffineEstimator; 6]> {
    let family = EstimatorFamily::new(model, constraints)?;
    let ls_ms = mean_subtracted(&family.ls);
    let blue_ms = mean_subtracted(&family.blue);
    Ok([family.ls, ls_ms, family.cls, family.blue, blue_ms, family.cblue])
}

fn draw_true_x<R: Rng + ?Sized>(policy: TrueXPolicy, param: &NullspaceParam, rng: &mut R) -> CVector {
    let alpha = sample_proper_gaussian(param.n0(), rng);
    let x = param.point(&alpha);
    match policy {
        TrueXPolicy::GaussianNullspace => x,
        TrueXPolicy::UnitNormNullspace => {
            let norm = x.norm();
            if norm > 0.0 {
                x.unscale(norm)
            } else {
                x
            }
        }
    }
}

struct Setup<'a> {
    spec: &'a ExperimentSpec,
    constraints: ConstraintSet,
    param: NullspaceParam,
}

fn run_trial(setup: &Setup<'_>, k_index: usize, trial: usize, acc: &mut Accumulator) -> Result<()> {
    let spec = setup.spec;
    let k = spec.k_grid[k_index];
    let n_x = spec.n_x;
    let mut rng = trial_rng(spec.seed, k_index, trial);

    let mut regenerations = 0u32;
    let h = loop {
        let u = sample_proper_gaussian(spec.n_u, &mut rng);
        let h = convolution_matrix(&u, n_x);
        // full column rank H implies full column rank H*N
        if numerical_rank(&h, None) == n_x {
            break h;
        }
        regenerations += 1;
        if regenerations >= MAX_REGENERATIONS {
            return Err(Error::RankDeficient {
                what: "H",
                rank: numerical_rank(&h, None),
                cols: n_x,
            });
        }
    };
    acc.regenerations += u64::from(regenerations);

    let cnn = CMatrix::from_diagonal(&CVector::from_iterator(
        spec.n_y(),
        spec.base_noise_diag.iter().map(|d| Complex64::new(k * d, 0.0)),
    ));
    let model = LinearModel::new(h, cnn)?;
    let x = draw_true_x(spec.true_x_policy, &setup.param, &mut rng);
    let noise = sample_noise(model.cnn_factor(), &mut rng);
    let y = model.h() * &x + noise;

    let estimators = experiment_estimators(&model, &setup.constraints)?;
    let n = MseKind::ALL.len();
    let mut mse = [0.0; 6];
    for (kind, est) in MseKind::ALL.into_iter().zip(&estimators) {
        let i = kind.index();
        let x_hat = est.apply(&y)?;
        let err = &x_hat - &x;
        mse[i] = err.norm_squared() / n_x as f64;
        acc.mse[i].add(mse[i]);
        acc.mse_sq[i].add(mse[i] * mse[i]);
        acc.analytic[i].add(covariance(est, model.cnn())?.average_variance());
        for (j, e) in err.iter().enumerate() {
            acc.bias_re[i * n_x + j].add(e.re);
            acc.bias_im[i * n_x + j].add(e.im);
            acc.element_sq[i * n_x + j].add(e.norm_sqr());
        }
        if kind.is_constrained() {
            let r = setup.constraints.residual(&x_hat);
            acc.max_residual[i] = acc.max_residual[i].max(r);
        }
    }
    for a in 0..n {
        for b in 0..n {
            acc.cross[a * n + b].add(mse[a] * mse[b]);
        }
    }
    Ok(())
}

fn finish_row(spec: &ExperimentSpec, k: f64, acc: Accumulator) -> MseRow {
    let t = spec.trials as f64;
    let n_x = spec.n_x;
    let stats = MseKind::ALL
        .into_iter()
        .map(|kind| {
            let i = kind.index();
            let mean = acc.mse[i].value() / t;
            let var = (acc.mse_sq[i].value() / t - mean * mean).max(0.0);
            let std_err = if spec.trials > 1 {
                (var / (t - 1.0)).sqrt()
            } else {
                0.0
            };
            KindStats {
                kind,
                empirical_mse: mean,
                empirical_mse_std_err: std_err,
                analytic_mse: acc.analytic[i].value() / t,
                bias: (0..n_x)
                    .map(|j| {
                        Complex64::new(
                            acc.bias_re[i * n_x + j].value() / t,
                            acc.bias_im[i * n_x + j].value() / t,
                        )
                    })
                    .collect(),
                element_mse: (0..n_x).map(|j| acc.element_sq[i * n_x + j].value() / t).collect(),
                max_constraint_residual: kind.is_constrained().then_some(acc.max_residual[i]),
            }
        })
        .collect();
    MseRow {
        k,
        stats,
        regenerations: acc.regenerations,
        trials: spec.trials,
        cross: acc.cross.iter().map(|c| c.value() / t).collect(),
    }
}

/// Runs the full k-sweep.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<MseReport> {
    spec.validate()?;
    let constraints = ConstraintSet::zero_sum(spec.n_x)?;
    let param = NullspaceParam::new(&constraints)?;
    let setup = Setup {
        spec,
        constraints,
        param,
    };

    let chunks = spec.trials.div_ceil(CHUNK_TRIALS);
    let mut rows = Vec::with_capacity(spec.k_grid.len());
    for (k_index, &k) in spec.k_grid.iter().enumerate() {
        let partials: Vec<Result<Accumulator>> = (0..chunks)
            .into_par_iter()
            .map(|c| {
                let mut acc = Accumulator::new(spec.n_x);
                let end = ((c + 1) * CHUNK_TRIALS).min(spec.trials);
                for trial in c * CHUNK_TRIALS..end {
                    run_trial(&setup, k_index, trial, &mut acc)?;
                }
                Ok(acc)
            })
            .collect();
        let mut total = Accumulator::new(spec.n_x);
        for p in partials {
            total.merge(&p?);
        }
        rows.push(finish_row(spec, k, total));
    }
    Ok(MseReport {
        spec: spec.clone(),
        rows,
    })
}
