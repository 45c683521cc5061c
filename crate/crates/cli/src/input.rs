use std::path::Path;

use clap::Args;
use dpsens::models::{alternating_weights, seeded_random_qdp, tridiagonal_qdp, TrackingMap, TrackingModel};
use dpsens::QdpProblem;

use crate::error::{CliError, CliResult};

/// Largest state, control and reference dimension of the `random` model.
const RANDOM_MAX_DIM: usize = 4;
/// Reduced-Hessian target handed to the random generator.
const RANDOM_GAMMA_TARGET: f64 = 0.5;

pub const BUILTIN_NAMES: [&str; 4] = ["tracking-linear", "tracking-exp", "tridiagonal", "random"];

/// Problem selection shared by the model-consuming subcommands.
#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Built-in model (tracking-linear, tracking-exp, tridiagonal, random) or a QDP JSON file.
    pub model: String,
    /// Horizon of built-in models; the largest horizon drawn for `random`.
    #[arg(long, default_value_t = 40)]
    pub horizon: usize,
    /// Tracking weight on the state.
    #[arg(long, default_value_t = 10.0)]
    pub mu1: f64,
    /// Tracking weight on the reference gap.
    #[arg(long, default_value_t = 1.0)]
    pub mu2: f64,
    /// Instance generator seed for `random`.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// A loaded problem, keeping the nonlinear model when there is one.
pub enum Input {
    Tracking(TrackingModel),
    Qdp(QdpProblem),
}

impl Input {
    pub fn qdp(&self) -> CliResult<QdpProblem> {
        match self {
            Input::Tracking(m) => Ok(m.qdp()?),
            Input::Qdp(q) => Ok(q.clone()),
        }
    }
}

pub fn tracking_map(name: &str) -> Option<TrackingMap> {
    match name {
        "linear" => Some(TrackingMap::Linear),
        "exp" => Some(TrackingMap::Exp),
        _ => None,
    }
}

pub fn load(args: &ModelArgs) -> CliResult<Input> {
    match args.model.as_str() {
        "tracking-linear" | "tracking-exp" => {
            let map = tracking_map(args.model.trim_start_matches("tracking-")).expect("known map");
            Ok(Input::Tracking(TrackingModel::new(args.horizon, args.mu1, args.mu2, map)?))
        }
        "tridiagonal" => Ok(Input::Qdp(tridiagonal_qdp(&alternating_weights(args.horizon), 1.0, 1.0, 1.0)?)),
        "random" => {
            if args.horizon < 2 {
                return Err(CliError::Validation("random model needs --horizon of at least 2".into()));
            }
            Ok(Input::Qdp(seeded_random_qdp(args.seed, args.horizon, RANDOM_MAX_DIM, RANDOM_GAMMA_TARGET)?))
        }
        path => read_qdp(Path::new(path)).map(Input::Qdp),
    }
}

pub fn read_qdp(path: &Path) -> CliResult<QdpProblem> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        CliError::Io(format!(
            "cannot read {}: {e} (built-in models: {})",
            path.display(),
            BUILTIN_NAMES.join(", ")
        ))
    })?;
    Ok(QdpProblem::from_json_str(&text)?)
}
