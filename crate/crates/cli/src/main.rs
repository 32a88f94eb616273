//! `cblue`: constrained BLUE estimation, Monte Carlo sweeps and verification
//! from the command line.
//!
//! Exit codes: 0 success, 1 verification or estimation failure, 2 usage or
//! parse error.

mod config;
mod matrix_file;
mod report;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use cblue_core::{
    covariance, AffineEstimator, ConstraintSet, CVector, LinearModel, NullspaceParam,
    VerifyOptions,
};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::matrix_file::MatrixFile;

#[derive(Parser)]
#[command(name = "cblue", version, about = "Best linear unbiased estimation under linear equality constraints")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate x from a measurement y and print a JSON record.
    Estimate(EstimateArgs),
    /// Run the FIR identification Monte Carlo sweep and write a CSV table.
    Experiment(ExperimentArgs),
    /// Check the estimator identities on random instances.
    Verify(VerifyArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Method {
    Ls,
    Blue,
    Cls,
    Cblue,
    CblueNullspace,
    CblueDirect,
}

impl Method {
    fn needs_constraints(self) -> bool {
        !matches!(self, Self::Ls | Self::Blue)
    }
}

#[derive(clap::Args)]
struct EstimateArgs {
    /// Model matrix H (N_y x N_x).
    #[arg(long)]
    h: PathBuf,
    /// Noise covariance C_nn (N_y x N_y, Hermitian positive definite).
    #[arg(long)]
    cnn: PathBuf,
    /// Constraint matrix A (N_b x N_x).
    #[arg(long)]
    a: Option<PathBuf>,
    /// Constraint right-hand side b (length N_b).
    #[arg(long)]
    b: Option<PathBuf>,
    /// Measurement y (length N_y).
    #[arg(long)]
    y: PathBuf,
    #[arg(long, value_enum, default_value = "cblue")]
    method: Method,
    /// Write the record here instead of standard output.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(clap::Args)]
struct ExperimentArgs {
    /// TOML experiment configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Trials per k (overrides the configuration).
    #[arg(long)]
    trials: Option<usize>,
    /// RNG seed (overrides the configuration).
    #[arg(long)]
    seed: Option<u64>,
    /// CSV output path; standard output when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Also write an SVG chart next to the CSV (same path, `.svg` extension).
    #[arg(long, requires = "output")]
    plot: bool,
}

#[derive(clap::Args)]
struct VerifyArgs {
    /// Number of random instances.
    #[arg(long, default_value_t = 200)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Use a deliberately broken direct form (self-test of the suite).
    #[arg(long, hide = true)]
    inject_fault: bool,
}

enum Failure {
    /// Exit code 1.
    Failed(String),
    /// Exit code 2.
    Usage(String),
}

impl Failure {
    fn failed(e: impl ToString) -> Self {
        Self::Failed(e.to_string())
    }

    fn usage(e: impl ToString) -> Self {
        Self::Usage(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Estimate(args) => estimate(args),
        Command::Experiment(args) => experiment(args),
        Command::Verify(args) => verify(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Failed(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn write_output(path: Option<&Path>, text: &str) -> Result<(), Failure> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| Failure::failed(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct EstimateRecord {
    method: &'static str,
    form: String,
    n_y: usize,
    n_x: usize,
    estimate: Vec<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    constraint_residual: Option<f64>,
    variances: Vec<f64>,
}

fn method_name(m: Method) -> &'static str {
    match m {
        Method::Ls => "ls",
        Method::Blue => "blue",
        Method::Cls => "cls",
        Method::Cblue => "cblue",
        Method::CblueNullspace => "cblue-nullspace",
        Method::CblueDirect => "cblue-direct",
    }
}

fn read_vector(path: &Path) -> Result<CVector, Failure> {
    MatrixFile::read(path)
        .and_then(|f| f.to_vector().map_err(|e| format!("{}: {e}", path.display())))
        .map_err(Failure::usage)
}

fn estimate(args: EstimateArgs) -> Result<(), Failure> {
    let h = MatrixFile::read(&args.h).map_err(Failure::usage)?.to_matrix();
    let cnn = MatrixFile::read(&args.cnn).map_err(Failure::usage)?.to_matrix();
    let y = read_vector(&args.y)?;
    let constraints = match (&args.a, &args.b) {
        (Some(a), Some(b)) => {
            let a = MatrixFile::read(a).map_err(Failure::usage)?.to_matrix();
            let b = read_vector(b)?;
            Some(ConstraintSet::new(a, b).map_err(Failure::failed)?)
        }
        (None, None) if !args.method.needs_constraints() => None,
        (None, None) => {
            return Err(Failure::usage(format!(
                "method {} needs --a and --b",
                method_name(args.method)
            )))
        }
        _ => return Err(Failure::usage("--a and --b must be given together")),
    };

    let model = LinearModel::new(h, cnn).map_err(Failure::failed)?;
    if y.len() != model.n_y() {
        return Err(Failure::failed(format!(
            "measurement y has length {}, but H has {} rows",
            y.len(),
            model.n_y()
        )));
    }
    if let Some(c) = &constraints {
        if c.n_x() != model.n_x() {
            return Err(Failure::failed(format!(
                "A has {} columns, but H has {}",
                c.n_x(),
                model.n_x()
            )));
        }
    }

    let est: AffineEstimator = match (args.method, &constraints) {
        (Method::Ls, _) => cblue_core::ls(&model),
        (Method::Blue, _) => cblue_core::blue(&model),
        (Method::Cls, Some(c)) => cblue_core::cls(&model, c),
        (Method::Cblue, Some(c)) => cblue_core::cblue(&model, c),
        (Method::CblueDirect, Some(c)) => cblue_core::cblue_direct(&model, c),
        (Method::CblueNullspace, Some(c)) => {
            NullspaceParam::new(c).and_then(|p| cblue_core::cblue_nullspace(&model, &p))
        }
        (_, None) => unreachable!("constraints checked above"),
    }
    .map_err(Failure::failed)?;

    let x = est.apply(&y).map_err(Failure::failed)?;
    let cov = covariance(&est, model.cnn()).map_err(Failure::failed)?;
    let record = EstimateRecord {
        method: method_name(args.method),
        form: est.label(),
        n_y: model.n_y(),
        n_x: model.n_x(),
        estimate: x.iter().map(|z| [z.re, z.im]).collect(),
        constraint_residual: constraints.as_ref().map(|c| c.residual(&x)),
        variances: cov.per_element_variance,
    };
    let mut text = serde_json::to_string_pretty(&record).map_err(Failure::failed)?;
    text.push('\n');
    write_output(args.output.as_deref(), &text)
}

fn experiment(args: ExperimentArgs) -> Result<(), Failure> {
    let mut spec = match &args.config {
        Some(path) => config::read(path).map_err(Failure::usage)?,
        None => Default::default(),
    };
    if let Some(t) = args.trials {
        spec.trials = t;
    }
    if let Some(s) = args.seed {
        spec.seed = s;
    }
    spec.validate().map_err(Failure::usage)?;

    let report = cblue_core::run_experiment(&spec).map_err(Failure::failed)?;
    write_output(args.output.as_deref(), &report::to_csv(&report))?;
    if args.plot {
        let svg_path = args
            .output
            .as_ref()
            .expect("clap enforces --output with --plot")
            .with_extension("svg");
        write_output(Some(&svg_path), &report::to_svg(&report))?;
    }
    Ok(())
}

fn verify(args: VerifyArgs) -> Result<(), Failure> {
    if args.trials == 0 {
        return Err(Failure::usage("--trials must be at least 1"));
    }
    let report = cblue_core::run_verification(&VerifyOptions {
        instances: args.trials,
        seed: args.seed,
        inject_fault: args.inject_fault,
    });
    println!("seed {} / {} instances", report.seed, report.instances);
    for p in &report.properties {
        println!(
            "[{}] {:<40} worst {:.3e}  tol {:.0e}  ({} checks)",
            if p.passed { "PASS" } else { "FAIL" },
            p.name,
            p.worst,
            p.tolerance,
            p.checked
        );
    }
    if report.all_passed() {
        println!("all properties passed");
        Ok(())
    } else {
        let failed = report.properties.iter().filter(|p| !p.passed).count();
        Err(Failure::Failed(format!("{failed} properties failed")))
    }
}
