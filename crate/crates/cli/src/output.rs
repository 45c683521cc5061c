use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use crate::error::CliResult;

/// Log ratios below this value are written as this value.
pub const LOG_RATIO_CLAMP: f64 = -500.0;

pub const DECAY_HEADER: &str = "k,norm_p,norm_q,log_ratio,theory_bound";
pub const EXPERIMENT_HEADER: &str = "k,log_ratio";

/// Seventeen significant digits, enough to round-trip every double.
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

/// `ln(value)` clamped from below; zero maps to the clamp.
pub fn clamped_log(value: f64) -> f64 {
    let l = value.ln();
    if l.is_nan() {
        l
    } else {
        l.max(LOG_RATIO_CLAMP)
    }
}

pub struct DecayRow {
    pub norm_p: f64,
    pub norm_q: f64,
    pub log_ratio: f64,
    pub theory_bound: f64,
}

pub fn decay_csv(rows: &[DecayRow]) -> String {
    let mut out = String::from(DECAY_HEADER);
    out.push('\n');
    for (k, r) in rows.iter().enumerate() {
        let _ = writeln!(
            out,
            "{k},{},{},{},{}",
            num(r.norm_p),
            num(r.norm_q),
            num(r.log_ratio),
            num(r.theory_bound)
        );
    }
    out
}

pub fn log_ratio_csv(values: &[f64]) -> String {
    let mut out = String::from(EXPERIMENT_HEADER);
    out.push('\n');
    for (k, v) in values.iter().enumerate() {
        let _ = writeln!(out, "{k},{}", num(*v));
    }
    out
}

/// Writes `content` to `path`, or to stdout when no path is given.
pub fn emit(path: Option<&Path>, content: &str) -> CliResult<()> {
    match path {
        Some(p) => std::fs::write(p, content)
            .map_err(|e| crate::error::CliError::Io(format!("cannot write {}: {e}", p.display()))),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(content.as_bytes())?;
            if !content.ends_with('\n') {
                out.write_all(b"\n")?;
            }
            Ok(())
        }
    }
}

pub fn pretty(value: &serde_json::Value) -> String {
    serde_json::to_string_pretty(value).expect("serializable")
}
