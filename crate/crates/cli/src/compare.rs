//! `landau compare`: per-column differences between two run directories and
//! an observed order when one run halves the other's step or doubles its
//! resolution.

use std::fmt::Write as _;
use std::path::Path;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::output::{self, Table};

struct Run {
    cfg: RunConfig,
    table: Table,
}

fn load(dir: &Path) -> Result<Run, CliError> {
    let cfg = RunConfig::parse(&output::read(&dir.join("manifest"))?)?;
    let path = dir.join("diagnostics.csv");
    let table = Table::parse(&output::read(&path)?, &path)?;
    Ok(Run { cfg, table })
}

/// Piecewise-linear interpolant of `(t, y)` at `s`; `None` outside the range.
fn interpolate(t: &[f64], y: &[f64], s: f64) -> Option<f64> {
    let n = t.len();
    if n == 0 || s < t[0] - 1e-12 || s > t[n - 1] + 1e-12 {
        return None;
    }
    if n == 1 {
        return Some(y[0]);
    }
    let j = t.partition_point(|x| *x < s).clamp(1, n - 1);
    let (t0, t1) = (t[j - 1], t[j]);
    let a = if t1 > t0 { ((s - t0) / (t1 - t0)).clamp(0.0, 1.0) } else { 1.0 };
    Some(y[j - 1] + a * (y[j] - y[j - 1]))
}

fn max_drift(y: &[f64]) -> f64 {
    y.iter().map(|v| (v - y[0]).abs()).fold(0.0, f64::max)
}

/// The refinement parameter that differs by a factor of two, as
/// `(name, a_is_coarse)`.
fn refinement(a: &RunConfig, b: &RunConfig) -> Option<(&'static str, bool)> {
    let steps = [("discretization.dt", a.dt, b.dt), ("discretization.tau", a.tau, b.tau)];
    for (name, x, y) in steps {
        if (x / y - 2.0).abs() < 1e-9 {
            return Some((name, true));
        }
        if (y / x - 2.0).abs() < 1e-9 {
            return Some((name, false));
        }
    }
    let counts = [("discretization.grid_n", a.grid_n, b.grid_n), ("discretization.particles", a.particles, b.particles)];
    for (name, x, y) in counts {
        if y == 2 * x {
            return Some((name, true));
        }
        if x == 2 * y {
            return Some((name, false));
        }
    }
    None
}

pub fn compare(dir_a: &Path, dir_b: &Path) -> Result<String, CliError> {
    let a = load(dir_a)?;
    let b = load(dir_b)?;
    if a.cfg.model_entries() != b.cfg.model_entries() {
        return Err(CliError::IncompatibleRuns("model parameters differ".into()));
    }
    let ta = a.table.column("t").ok_or_else(|| CliError::config("diagnostics.csv has no t column"))?;
    let tb = b.table.column("t").ok_or_else(|| CliError::config("diagnostics.csv has no t column"))?;
    let mut out = String::new();

    if a.cfg.experiment != b.cfg.experiment {
        let (ha, hb) = match (a.table.column("entropy_eps"), b.table.column("entropy_eps")) {
            (Some(x), Some(y)) => (x, y),
            _ => return Err(CliError::config("diagnostics.csv has no entropy_eps column")),
        };
        let _ = writeln!(out, "entropy_eps: {} vs {}", a.cfg.experiment, b.cfg.experiment);
        let _ = writeln!(out, "{:>12} {:>24} {:>24}", "t", "a", "b");
        for (t, h) in ta.iter().zip(&ha) {
            let other = interpolate(&tb, &hb, *t).map_or("-".to_string(), |v| format!("{v:.16e}"));
            let _ = writeln!(out, "{t:>12.6} {h:>24.16e} {other:>24}");
        }
        return Ok(out);
    }

    let refine = refinement(&a.cfg, &b.cfg);
    let _ = writeln!(out, "{:<18} {:>24} {:>12}", "column", "max |a - b|", "drift order");
    for (j, name) in a.table.columns.iter().enumerate() {
        if name == "t" {
            continue;
        }
        let Some(yb) = b.table.column(name) else { continue };
        let ya: Vec<f64> = a.table.rows.iter().map(|r| r[j]).collect();
        let diff = ta
            .iter()
            .zip(&ya)
            .filter_map(|(t, y)| interpolate(&tb, &yb, *t).map(|v| (y - v).abs()))
            .filter(|d| !d.is_nan())
            .fold(0.0, f64::max);
        // Conserved quantities: the drift shrinks like step^order.
        let conserved = name == "mass" || name.starts_with("momentum_") || name == "energy";
        let order = match refine {
            Some((_, a_coarse)) if conserved => {
                let (c, f) = if a_coarse { (max_drift(&ya), max_drift(&yb)) } else { (max_drift(&yb), max_drift(&ya)) };
                if c > 0.0 && f > 0.0 { format!("{:.2}", (c / f).log2()) } else { "-".into() }
            }
            _ => "-".into(),
        };
        let _ = writeln!(out, "{name:<18} {diff:>24.16e} {order:>12}");
    }
    if let Some((name, _)) = refine {
        let _ = writeln!(out, "refinement: {name} differs by a factor of 2");
    }
    Ok(out)
}
