//! CSV and manifest writers, and the state-file reader used for `file`
//! initial data.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use landau_core::{Diagnostics, GridDensity, GridSpec, Measure, ParticleEnsemble};

use crate::error::{At, CliError};

/// 17 significant digits.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn diagnostics_header(dim: usize) -> String {
    let mom: Vec<String> = ["x", "y", "z"][..dim].iter().map(|a| format!("momentum_{a}")).collect();
    format!("t,mass,{},energy,entropy,entropy_eps,dissipation_eps,edi_residual\n", mom.join(","))
}

/// One row per record; the Boltzmann entropy column is empty for atomic
/// measures.
pub fn diagnostics_csv(dim: usize, times: &[f64], diags: &[Diagnostics], edi: &[f64]) -> String {
    let mut out = diagnostics_header(dim);
    for ((t, d), r) in times.iter().zip(diags).zip(edi) {
        let mut row = vec![num(*t), num(d.mass)];
        row.extend(d.momentum[..dim].iter().map(|x| num(*x)));
        row.push(num(d.energy));
        row.push(d.entropy.map(num).unwrap_or_default());
        row.push(num(d.regularized_entropy));
        row.push(num(d.dissipation));
        row.push(num(*r));
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn particle_csv(mu: &ParticleEnsemble) -> String {
    let d = mu.dim();
    let cols: Vec<String> = (1..=d).map(|a| format!("v{a}")).collect();
    let mut out = format!("w,{}\n", cols.join(","));
    for (x, w) in mu.positions().iter().zip(mu.weights()) {
        let mut row = vec![num(*w)];
        row.extend(x[..d].iter().map(|v| num(*v)));
        let _ = writeln!(out, "{}", row.join(","));
    }
    out
}

pub fn grid_csv(f: &GridDensity) -> String {
    let g = f.grid();
    let cols: Vec<String> = (1..=g.dim).map(|a| format!("i{a}")).collect();
    let mut out = format!("{},f\n", cols.join(","));
    for (k, v) in f.values().iter().enumerate() {
        let idx = g.multi_index(k);
        let mut row: Vec<String> = idx[..g.dim].iter().map(|i| i.to_string()).collect();
        row.push(num(*v));
        let _ = writeln!(out, "{}", row.join(","));
    }
    out
}

pub fn write(dir: &Path, name: &str, text: &str) -> Result<(), CliError> {
    let path = dir.join(name);
    fs::write(&path, text).map_err(|e| CliError::io(format!("writing {}", path.display()), e))
}

pub fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::io(format!("reading {}", path.display()), e))
}

pub enum State {
    Particles(ParticleEnsemble),
    Grid(GridDensity),
}

fn numbers(line: &str, lineno: usize, path: &Path, width: usize) -> Result<Vec<f64>, CliError> {
    let row: Vec<f64> = line
        .split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|_| CliError::config(format!("{}:{}: bad number {s:?}", path.display(), lineno + 1))))
        .collect::<Result<_, _>>()?;
    if row.len() != width {
        return Err(CliError::config(format!("{}:{}: expected {width} columns", path.display(), lineno + 1)));
    }
    Ok(row)
}

/// Reads a `state_<k>.csv` file: `w,v1..vd` rows as particles, `i1..id,f`
/// rows as a density on `grid`.
pub fn read_state(path: &Path, dim: usize, grid: &GridSpec) -> Result<State, CliError> {
    let text = read(path)?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| CliError::config(format!("{}: empty state file", path.display())))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols.len() != dim + 1 {
        return Err(CliError::config(format!("{}: expected {} columns for dimension {dim}", path.display(), dim + 1)));
    }
    match cols[0] {
        "w" => {
            let mut pos = Vec::new();
            let mut w = Vec::new();
            for (n, l) in lines {
                let row = numbers(l, n, path, dim + 1)?;
                let mut v = [0.0; 3];
                v[..dim].copy_from_slice(&row[1..]);
                w.push(row[0]);
                pos.push(v);
            }
            Ok(State::Particles(ParticleEnsemble::new(dim, pos, w).at("core.particle_ensemble")?))
        }
        "i1" => {
            let mut vals = vec![0.0; grid.len()];
            let mut filled = vec![false; grid.len()];
            for (n, l) in lines {
                let row = numbers(l, n, path, dim + 1)?;
                let mut idx = [0usize; 3];
                for a in 0..dim {
                    let i = row[a];
                    if i < 0.0 || i.fract() != 0.0 || i as usize >= grid.n {
                        return Err(CliError::config(format!("{}:{}: index outside the {}-node grid", path.display(), n + 1, grid.n)));
                    }
                    idx[a] = i as usize;
                }
                let k = grid.linear_index(&idx);
                vals[k] = row[dim];
                filled[k] = true;
            }
            if filled.iter().any(|f| !f) {
                return Err(CliError::config(format!("{}: grid file does not cover every node", path.display())));
            }
            Ok(State::Grid(GridDensity::new(*grid, vals).at("core.grid_density")?))
        }
        other => Err(CliError::config(format!("{}: unknown state header starting with {other:?}", path.display()))),
    }
}

/// Parsed `diagnostics.csv`: column names and rows (empty cells as NaN).
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn parse(text: &str, path: &Path) -> Result<Self, CliError> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| CliError::config(format!("{}: empty table", path.display())))?;
        let columns: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
        let mut rows = Vec::new();
        for (n, l) in lines {
            if l.trim().is_empty() {
                continue;
            }
            let row: Vec<f64> = l
                .split(',')
                .map(|s| if s.trim().is_empty() { Ok(f64::NAN) } else { s.trim().parse::<f64>() })
                .collect::<Result<_, _>>()
                .map_err(|_| CliError::config(format!("{}:{}: bad number", path.display(), n + 1)))?;
            if row.len() != columns.len() {
                return Err(CliError::config(format!("{}:{}: expected {} columns", path.display(), n + 1, columns.len())));
            }
            rows.push(row);
        }
        Ok(Table { columns, rows })
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }
}
