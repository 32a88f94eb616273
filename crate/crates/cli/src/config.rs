//! Experiment configuration documents (TOML). Every key is optional and falls
//! back to the reference experiment:
//!
//! ```toml
//! n_x = 5
//! n_u = 6
//! base_noise_diag = [1, 1, 0.5, 0.5, 0.1, 0.1, 0.01, 0.01, 1e-3, 1e-3]
//! k_grid = [0.1, 0.2, 0.5, 1.0]
//! trials = 10000
//! seed = 0
//! true_x_policy = "unit-norm-nullspace"   # or "gaussian-nullspace"
//! ```

use std::fs;
use std::path::Path;

use cblue_core::ExperimentSpec;

pub fn parse(text: &str) -> Result<ExperimentSpec, String> {
    let spec: ExperimentSpec = toml::from_str(text).map_err(|e| e.to_string())?;
    spec.validate().map_err(|e| e.to_string())?;
    Ok(spec)
}

pub fn read(path: &Path) -> Result<ExperimentSpec, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    parse(&text).map_err(|e| format!("{}: {e}", path.display()))
}
