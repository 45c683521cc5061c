use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, ValueEnum};
use dpsens::convexify::delta_warning;
use dpsens::models::{TrackingMap, TrackingModel};
use dpsens::sensitivity::{finite_difference_sensitivity, SensitivitySolver, DECAY_FLOOR};
use dpsens::{
    backward_pass, controllability, convexify, fit_decay_rate, newton_equality_solve, reduced_hessian_gamma,
    solve_sensitivity, theoretical_constants, unit_direction, verify_equivalence, NldpModel, PerturbationDirection,
    QdpProblem, Reference, Source, Trajectory,
};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::error::{CliError, CliResult};
use crate::input::{load, Input, ModelArgs};
use crate::output::{clamped_log, decay_csv, emit, log_ratio_csv, pretty, DecayRow};

/// Relative tolerance for the oracle comparisons of `verify`.
const ORACLE_TOL: f64 = 1e-8;
/// Absolute tolerance on the Riccati identity residual.
const IDENTITY_TOL: f64 = 1e-9;

/// Shift choice: a fraction of `γ`, or a fixed value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DeltaChoice {
    Auto,
    Value(f64),
}

impl FromStr for DeltaChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "auto" {
            return Ok(DeltaChoice::Auto);
        }
        match s.parse::<f64>() {
            Ok(v) if v.is_finite() && v >= 0.0 => Ok(DeltaChoice::Value(v)),
            _ => Err(format!("expected `auto` or a finite nonnegative number, got `{s}`")),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct ShiftArgs {
    /// Shift `auto` (fraction times gamma) or an explicit value.
    #[arg(long, default_value = "auto")]
    pub delta: DeltaChoice,
    /// Fraction of gamma used by `--delta auto`.
    #[arg(long, default_value_t = 0.9)]
    pub fraction: f64,
}

impl ShiftArgs {
    fn resolve(&self, gamma: f64) -> CliResult<f64> {
        match self.delta {
            DeltaChoice::Auto => Ok(dpsens::convexify::select_delta_from_gamma(gamma, self.fraction)?),
            DeltaChoice::Value(delta) => {
                if delta == 0.0 {
                    log::warn!("delta = 0 only guarantees positive semidefinite stage Hessians");
                }
                if let Some(msg) = delta_warning(gamma, delta) {
                    log::warn!("{msg}");
                }
                Ok(delta)
            }
        }
    }

    fn solver(&self, qdp: &QdpProblem, gamma: f64) -> CliResult<SensitivitySolver> {
        let delta = self.resolve(gamma)?;
        let convexified = convexify(qdp, delta)?;
        let riccati = backward_pass(convexified.as_problem())?;
        Ok(SensitivitySolver {
            gamma,
            delta,
            convexified,
            riccati,
        })
    }
}

#[derive(Debug, Clone, Args)]
pub struct ControllabilityArgs {
    /// Lower bound on the controllability Gramian eigenvalue.
    #[arg(long, default_value_t = 1.0)]
    pub lambda_c: f64,
    /// Longest controllability window tried.
    #[arg(long, default_value_t = 1)]
    pub t_max: usize,
}

#[derive(Debug, Clone, Args)]
pub struct CheckArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub ctrl: ControllabilityArgs,
    /// Print the report as JSON.
    #[arg(long)]
    pub json: bool,
    /// Report file; stdout when absent.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

/// Reports `γ`, `Υ` and the controllability table. Exit 0 iff every assumption holds.
pub fn check(args: &CheckArgs) -> CliResult<u8> {
    let qdp = load(&args.model)?.qdp()?;
    let gamma = reduced_hessian_gamma(&qdp)?;
    let upsilon = qdp.max_block_norm();
    let ctrl = controllability(&qdp, args.ctrl.lambda_c, args.ctrl.t_max)?;
    let sosc = gamma > 0.0;
    let bounded = upsilon.is_finite();
    let pass = sosc && bounded && ctrl.pass;
    let text = if args.json {
        pretty(&json!({
            "model": args.model.model,
            "horizon": qdp.horizon(),
            "gamma": gamma,
            "upsilon": upsilon,
            "lambda_c": ctrl.lambda_c,
            "t_max": ctrl.t_max,
            "t": ctrl.pass.then_some(ctrl.t),
            "t_k": ctrl.t_k,
            "min_eig": ctrl.min_eig,
            "assumptions": {
                "sosc": sosc,
                "boundedness": bounded,
                "controllability": ctrl.pass,
            },
            "pass": pass,
        }))
    } else {
        let verdict = |b: bool| if b { "pass" } else { "fail" };
        let mut s = String::new();
        let _ = writeln!(s, "gamma    {gamma:.6e}  sosc: {}", verdict(sosc));
        let _ = writeln!(s, "upsilon  {upsilon:.6e}  boundedness: {}", verdict(bounded));
        let _ = writeln!(
            s,
            "controllability (lambda_c = {}, t_max = {}): {}",
            ctrl.lambda_c,
            ctrl.t_max,
            verdict(ctrl.pass)
        );
        if ctrl.pass {
            let _ = writeln!(s, "t        {}", ctrl.t);
        }
        let _ = writeln!(s, "k  t_k  min_eig");
        for (k, (t, e)) in ctrl.t_k.iter().zip(&ctrl.min_eig).enumerate() {
            let t = t.map_or_else(|| "-".to_string(), |t| t.to_string());
            let _ = writeln!(s, "{k}  {t}  {e:.6e}");
        }
        let _ = write!(s, "result: {}", verdict(pass));
        s
    };
    emit(args.output.as_deref(), &text)?;
    Ok(if pass { 0 } else { 1 })
}

#[derive(Debug, Clone, Args)]
pub struct ConvexifyArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub shift: ShiftArgs,
    /// Output JSON file; stdout when absent.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

/// Writes the convexified problem with its shift and `Q̄` blocks.
pub fn convexify_cmd(args: &ConvexifyArgs) -> CliResult<u8> {
    let qdp = load(&args.model)?.qdp()?;
    let gamma = reduced_hessian_gamma(&qdp)?;
    let delta = args.shift.resolve(gamma)?;
    let conv = convexify(&qdp, delta)?;
    log::info!("gamma = {gamma:e}, delta = {delta:e}, smallest stage eigenvalue {:e}", conv.min_stage_eigenvalue());
    emit(args.output.as_deref(), &conv.to_json_string())?;
    Ok(0)
}

#[derive(Debug, Clone, Args)]
pub struct SensitivityArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub shift: ShiftArgs,
    #[command(flatten)]
    pub ctrl: ControllabilityArgs,
    /// Perturbed stage; -1 selects the initial state. Defaults to the middle stage.
    #[arg(long, allow_negative_numbers = true)]
    pub stage: Option<i64>,
    /// Perturbed coordinate within the stage.
    #[arg(long, default_value_t = 0)]
    pub coord: usize,
    /// Decay CSV file; stdout when absent.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Summary JSON file. Without it the summary goes to stdout, or to
    /// stderr when the CSV itself is on stdout.
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

/// Decay CSV and summary for one unit perturbation.
pub fn sensitivity(args: &SensitivityArgs) -> CliResult<u8> {
    let qdp = load(&args.model)?.qdp()?;
    let dims = qdp.dims();
    let source = Source::from_index(args.stage.unwrap_or(dims.horizon as i64 / 2), &dims)?;
    let l = unit_direction(&dims, source, args.coord)?;
    let gamma = reduced_hessian_gamma(&qdp)?;
    let solver = args.shift.solver(&qdp, gamma)?;
    let res = solver.solve(&l)?;

    let bounds = theoretical_constants(&qdp, solver.delta, args.ctrl.lambda_c, args.ctrl.t_max);
    if let Err(e) = &bounds {
        log::warn!("decay constants unavailable: {e}");
    }
    let scale = l.norm();
    let rows: Vec<DecayRow> = (0..=dims.horizon)
        .map(|k| DecayRow {
            norm_p: res.norm_p[k],
            norm_q: res.norm_q.get(k).copied().unwrap_or(0.0),
            log_ratio: clamped_log(res.norm_p[k] / scale),
            theory_bound: bounds.as_ref().map_or(f64::NAN, |b| b.decay_bound(source.distance(k))),
        })
        .collect();
    let bound_holds = bounds.is_ok()
        && rows.iter().all(|r| r.norm_p.max(r.norm_q) <= r.theory_bound + 1e-9 * r.theory_bound.max(1.0));
    if bounds.is_ok() && !bound_holds {
        log::warn!("a sensitivity exceeds its decay bound");
    }
    emit(args.output.as_deref(), &decay_csv(&rows))?;

    let summary = pretty(&json!({
        "model": args.model.model,
        "horizon": dims.horizon,
        "stage": source.index(),
        "coord": args.coord,
        "gamma": solver.gamma,
        "delta": solver.delta,
        "rho_fit": res.fit.map(|f| f.rho),
        "fit_r_squared": res.fit.map(|f| f.r_squared),
        "fit_points": res.fit.map(|f| f.points),
        "rho_theory": bounds.as_ref().ok().map(|b| b.rho),
        "Upsilon_pq": bounds.as_ref().ok().map(|b| b.upsilon_pq),
        "bound_holds": bound_holds,
        "bounds_error": bounds.as_ref().err().map(|e| e.to_string()),
    }));
    match (&args.summary, &args.output) {
        (Some(path), _) => emit(Some(path), &summary)?,
        (None, Some(_)) => emit(None, &summary)?,
        (None, None) => eprintln!("{summary}"),
    }
    Ok(0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Dynamics {
    Linear,
    Exp,
    Both,
}

impl Dynamics {
    fn maps(self) -> Vec<TrackingMap> {
        match self {
            Dynamics::Linear => vec![TrackingMap::Linear],
            Dynamics::Exp => vec![TrackingMap::Exp],
            Dynamics::Both => vec![TrackingMap::Linear, TrackingMap::Exp],
        }
    }
}

fn map_name(map: TrackingMap) -> &'static str {
    match map {
        TrackingMap::Linear => "linear",
        TrackingMap::Exp => "exp",
    }
}

#[derive(Debug, Clone, Args)]
pub struct ExperimentArgs {
    #[arg(long, default_value_t = 40)]
    pub horizon: usize,
    #[arg(long, default_value_t = 10.0)]
    pub mu1: f64,
    #[arg(long, default_value_t = 1.0)]
    pub mu2: f64,
    /// State map of the dynamics.
    #[arg(long, value_enum, default_value_t = Dynamics::Both)]
    pub dynamics: Dynamics,
    /// Perturbation sizes, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "1,0.1,0.01")]
    pub eps: Vec<f64>,
    /// Perturbed stage. Defaults to the middle stage.
    #[arg(long)]
    pub stage: Option<usize>,
    /// Fraction of gamma used as the shift for the derivative reference.
    #[arg(long, default_value_t = 0.9)]
    pub fraction: f64,
    /// Directory receiving the CSV files.
    #[arg(short, long, default_value = ".")]
    pub output: PathBuf,
    /// Solve the perturbed instances concurrently.
    #[arg(long)]
    pub parallel: bool,
}

struct DerivativeReference {
    derivative: Vec<f64>,
}

fn experiment_reference(model: &TrackingModel, l: &PerturbationDirection, fraction: f64, dir: &Path) -> CliResult<DerivativeReference> {
    let res = solve_sensitivity(&model.qdp()?, l, fraction)?;
    let logs: Vec<f64> = res.norm_p.iter().map(|v| clamped_log(*v)).collect();
    emit(Some(&dir.join(format!("{}_derivative.csv", map_name(model.map)))), &log_ratio_csv(&logs))?;
    Ok(DerivativeReference { derivative: res.norm_p })
}

fn experiment_run(model: &TrackingModel, l: &PerturbationDirection, eps: f64, reference: &DerivativeReference, dir: &Path) -> Value {
    let dims = model.dims();
    let file = format!("{}_eps{eps}.csv", map_name(model.map));
    let mut entry = json!({ "dynamics": map_name(model.map), "eps": eps, "file": file });
    let d = Reference::zeros(&dims).perturbed(l, eps);
    let res = match newton_equality_solve(model, &d, &Trajectory::zeros(&dims)) {
        Ok(r) => r,
        Err(e) => {
            entry["error"] = json!(e.to_string());
            return entry;
        }
    };
    let ratios: Vec<f64> = res.trajectory.state_norms().iter().map(|x| x / eps).collect();
    let logs: Vec<f64> = ratios.iter().map(|r| clamped_log(*r)).collect();
    if let Err(e) = emit(Some(&dir.join(&file)), &log_ratio_csv(&logs)) {
        entry["error"] = json!(e.to_string());
        return entry;
    }
    let gap = ratios
        .iter()
        .zip(&reference.derivative)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let fit = l.source.and_then(|s| fit_decay_rate(&ratios, s, DECAY_FLOOR).ok());
    entry["iterations"] = json!(res.iterations);
    entry["derivative_gap"] = json!(gap);
    entry["rho_fit"] = json!(fit.map(|f| f.rho));
    entry
}

/// Solves the perturbed tracking problems and writes one log-ratio CSV per
/// `(ε, dynamics)` plus the derivative reference per dynamics.
pub fn experiment(args: &ExperimentArgs) -> CliResult<u8> {
    if args.eps.is_empty() || args.eps.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
        return Err(CliError::Validation(format!("eps values must be positive, got {:?}", args.eps)));
    }
    let stage = args.stage.unwrap_or(args.horizon / 2);
    let models = args
        .dynamics
        .maps()
        .into_iter()
        .map(|m| TrackingModel::new(args.horizon, args.mu1, args.mu2, m))
        .collect::<Result<Vec<_>, _>>()?;
    let dims = models[0].dims();
    let l = unit_direction(&dims, Source::from_index(stage as i64, &dims)?, 0)?;
    std::fs::create_dir_all(&args.output)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", args.output.display())))?;

    let references = models
        .iter()
        .map(|m| experiment_reference(m, &l, args.fraction, &args.output))
        .collect::<CliResult<Vec<_>>>()?;
    let jobs: Vec<(usize, f64)> = (0..models.len())
        .flat_map(|m| args.eps.iter().map(move |e| (m, *e)))
        .collect();
    let run = |&(m, eps): &(usize, f64)| experiment_run(&models[m], &l, eps, &references[m], &args.output);
    let runs: Vec<Value> = if args.parallel {
        jobs.par_iter().map(run).collect()
    } else {
        jobs.iter().map(run).collect()
    };

    let failed = runs.iter().filter(|r| r.get("error").is_some()).count();
    for r in runs.iter().filter(|r| r.get("error").is_some()) {
        log::error!("{} eps {}: {}", r["dynamics"], r["eps"], r["error"]);
    }
    emit(
        None,
        &pretty(&json!({
            "horizon": args.horizon,
            "mu1": args.mu1,
            "mu2": args.mu2,
            "stage": stage,
            "runs": runs,
            "derivative_files": models
                .iter()
                .map(|m| format!("{}_derivative.csv", map_name(m.map)))
                .collect::<Vec<_>>(),
        })),
    )?;
    Ok(if failed == 0 { 0 } else { 2 })
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub shift: ShiftArgs,
    /// Perturbed stage; -1 selects the initial state. Defaults to the middle stage.
    #[arg(long, allow_negative_numbers = true)]
    pub stage: Option<i64>,
    #[arg(long, default_value_t = 0)]
    pub coord: usize,
    /// Step of the finite-difference sensitivity on nonlinear models.
    #[arg(long, default_value_t = 1e-4)]
    pub eps: f64,
    /// Print the report as JSON.
    #[arg(long)]
    pub json: bool,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

fn check_entry(value: f64, tol: f64) -> Value {
    json!({ "value": value, "tol": tol, "pass": value <= tol })
}

/// Compares the pipeline with the dense and finite-difference oracles.
pub fn verify(args: &VerifyArgs) -> CliResult<u8> {
    if !(args.eps.is_finite() && args.eps > 0.0) {
        return Err(CliError::Validation(format!("eps must be positive, got {}", args.eps)));
    }
    let input = load(&args.model)?;
    let qdp = input.qdp()?;
    let dims = qdp.dims();
    let source = Source::from_index(args.stage.unwrap_or(dims.horizon as i64 / 2), &dims)?;
    let l = unit_direction(&dims, source, args.coord)?;
    let gamma = reduced_hessian_gamma(&qdp)?;
    let solver = args.shift.solver(&qdp, gamma)?;
    let eq = verify_equivalence(&qdp, &solver.convexified, &l)?;

    let mut checks = serde_json::Map::new();
    checks.insert("primal_gap".into(), check_entry(eq.primal_gap, ORACLE_TOL));
    checks.insert("offset_error".into(), check_entry(eq.offset_error, ORACLE_TOL));
    checks.insert("riccati_identity".into(), check_entry(solver.riccati.identity_residual, IDENTITY_TOL));
    let mut info = json!({
        "gamma": gamma,
        "delta": solver.delta,
        "offset": eq.offset,
        "expected_offset": eq.expected_offset,
    });

    if let Input::Tracking(model) = &input {
        let base = model.base_point();
        let rep = dpsens::finite_diff_hessian_check(model, &base)?;
        checks.insert(
            "hessian_blocks".into(),
            json!({ "value": rep.max_error, "pass": rep.pass, "worst": rep.worst }),
        );
        let exact = solver.solve(&l)?.trajectory.stacked();
        let fd = finite_difference_sensitivity(model, &base, &l, args.eps)?.stacked();
        info["fd_eps"] = json!(args.eps);
        info["fd_error"] = json!((fd - exact).amax());
    }
    let pass = checks.values().all(|c| c["pass"] == json!(true));
    let report = json!({ "model": args.model.model, "checks": checks, "info": info, "pass": pass });
    let text = if args.json {
        pretty(&report)
    } else {
        let mut s = String::new();
        for (name, c) in &checks {
            let verdict = if c["pass"] == json!(true) { "pass" } else { "fail" };
            let _ = writeln!(s, "{name:<18} {:.3e}  {verdict}", c["value"].as_f64().unwrap_or(f64::NAN));
        }
        if let Value::Object(m) = &info {
            for (k, v) in m {
                let _ = writeln!(s, "{k:<18} {v}");
            }
        }
        let _ = write!(s, "result: {}", if pass { "pass" } else { "fail" });
        s
    };
    emit(args.output.as_deref(), &text)?;
    Ok(if pass { 0 } else { 1 })
}
