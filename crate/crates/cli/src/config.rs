//! Flat `key = value` run configuration with dotted sections.
//!
//! Blank lines and lines starting with `#` are ignored. Every key has a
//! default except `experiment`; unknown keys are rejected.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use landau_core::{ModelParams, Vec3};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    Particle,
    Jko,
    Distance,
    AuxFixedPoint,
    EdiAudit,
    Diagnostics,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Representation {
    Particles,
    Grid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitKind {
    Maxwellian,
    AnisotropicGaussian,
    Bimodal,
    File,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntegratorName {
    Rk4,
    Euler,
}

macro_rules! named_enum {
    ($ty:ty, $($name:literal => $v:expr),+ $(,)?) => {
        impl FromStr for $ty {
            type Err = String;
            fn from_str(s: &str) -> Result<Self, String> {
                match s {
                    $($name => Ok($v),)+
                    _ => Err(format!("expected one of: {}", [$($name),+].join(", "))),
                }
            }
        }
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                let name = match self {
                    $(x if *x == $v => $name,)+
                    _ => unreachable!(),
                };
                f.write_str(name)
            }
        }
    };
}

named_enum!(Experiment,
    "particle" => Experiment::Particle,
    "jko" => Experiment::Jko,
    "distance" => Experiment::Distance,
    "aux-fixed-point" => Experiment::AuxFixedPoint,
    "edi-audit" => Experiment::EdiAudit,
    "diagnostics" => Experiment::Diagnostics,
);
named_enum!(Representation, "particles" => Representation::Particles, "grid" => Representation::Grid);
named_enum!(InitKind,
    "maxwellian" => InitKind::Maxwellian,
    "anisotropic-gaussian" => InitKind::AnisotropicGaussian,
    "bimodal" => InitKind::Bimodal,
    "file" => InitKind::File,
);
named_enum!(IntegratorName, "rk4" => IntegratorName::Rk4, "euler" => IntegratorName::Euler);

/// One initial (or target) datum.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialData {
    pub kind: InitKind,
    pub temperature: f64,
    pub mean: Vec3,
    pub variances: Vec3,
    pub separation: f64,
    pub variance: f64,
    pub path: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub model: ModelParams,
    pub representation: Representation,
    pub particles: usize,
    pub grid_n: usize,
    pub half_width: f64,
    pub dt: f64,
    pub t_end: f64,
    pub integrator: IntegratorName,
    pub record_every: usize,
    /// 0 selects the solver default.
    pub aux_n: usize,
    pub delta_sing: f64,
    pub tau: f64,
    pub steps: usize,
    pub k: usize,
    pub initial: InitialData,
    pub target: InitialData,
    pub metric_floor: f64,
    pub metric_max_iter: usize,
    pub metric_rel_tol: f64,
    pub aux_r1: f64,
    pub aux_r2: f64,
    pub aux_t_fraction: f64,
    pub aux_nodes: usize,
    pub aux_substeps: usize,
    pub aux_tol: f64,
    pub aux_max_iter: usize,
    pub aux_lipschitz_samples: usize,
    pub edi_source: Experiment,
    pub edi_tolerance: f64,
    /// Write every `state_every`-th record; 0 writes the first and last only.
    pub state_every: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let datum = |kind, variances| InitialData {
            kind,
            temperature: 1.0,
            mean: [0.0; 3],
            variances,
            separation: 2.0,
            variance: 0.5,
            path: String::new(),
        };
        RunConfig {
            experiment: Experiment::Diagnostics,
            seed: 0,
            output_dir: PathBuf::from("landau-out"),
            model: ModelParams::default(),
            representation: Representation::Particles,
            particles: 256,
            grid_n: 8,
            half_width: 3.0,
            dt: 1e-3,
            t_end: 0.1,
            integrator: IntegratorName::Rk4,
            record_every: 1,
            aux_n: 0,
            delta_sing: 0.0,
            tau: 0.05,
            steps: 4,
            k: 8,
            initial: datum(InitKind::Maxwellian, [2.0, 1.0, 0.5]),
            target: datum(InitKind::AnisotropicGaussian, [0.7, 1.4, 1.0]),
            metric_floor: 1e-10,
            metric_max_iter: 5000,
            metric_rel_tol: 1e-13,
            aux_r1: 2.0,
            aux_r2: 2.0,
            aux_t_fraction: 0.5,
            aux_nodes: 32,
            aux_substeps: 4,
            aux_tol: 1e-8,
            aux_max_iter: 50,
            aux_lipschitz_samples: 400,
            edi_source: Experiment::Particle,
            edi_tolerance: 1e-6,
            state_every: 0,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, CliError>
where
    T::Err: fmt::Display,
{
    value.parse::<T>().map_err(|e| CliError::config(format!("{key} = {value}: {e}")))
}

fn parse_vec3(key: &str, value: &str) -> Result<Vec3, CliError> {
    let parts: Vec<&str> = value.split(',').map(str::trim).collect();
    if parts.is_empty() || parts.len() > 3 {
        return Err(CliError::config(format!("{key} = {value}: expected 1 to 3 comma-separated numbers")));
    }
    let mut out = [0.0; 3];
    for (slot, p) in out.iter_mut().zip(&parts) {
        *slot = parse(key, p)?;
    }
    // A single number fills every axis.
    if parts.len() == 1 {
        out = [out[0]; 3];
    }
    Ok(out)
}

fn fmt_vec3(v: &Vec3) -> String {
    format!("{},{},{}", v[0], v[1], v[2])
}

impl InitialData {
    fn set(&mut self, field: &str, key: &str, value: &str) -> Result<bool, CliError> {
        match field {
            "kind" => self.kind = parse(key, value)?,
            "temperature" => self.temperature = parse(key, value)?,
            "mean" => self.mean = parse_vec3(key, value)?,
            "variances" => self.variances = parse_vec3(key, value)?,
            "separation" => self.separation = parse(key, value)?,
            "variance" => self.variance = parse(key, value)?,
            "path" => self.path = value.to_string(),
            _ => return Ok(false),
        }
        Ok(true)
    }

    fn entries(&self, prefix: &str, out: &mut Vec<(String, String)>) {
        let mut push = |k: &str, v: String| out.push((format!("{prefix}.{k}"), v));
        push("kind", self.kind.to_string());
        push("temperature", self.temperature.to_string());
        push("mean", fmt_vec3(&self.mean));
        push("variances", fmt_vec3(&self.variances));
        push("separation", self.separation.to_string());
        push("variance", self.variance.to_string());
        push("path", self.path.clone());
    }

    fn validate(&self, prefix: &str, dim: usize) -> Result<(), CliError> {
        let positive = |name: &str, x: f64| {
            if x > 0.0 && x.is_finite() {
                Ok(())
            } else {
                Err(CliError::config(format!("{prefix}.{name} must be positive")))
            }
        };
        positive("temperature", self.temperature)?;
        positive("variance", self.variance)?;
        for v in &self.variances[..dim] {
            positive("variances", *v)?;
        }
        if !(self.separation >= 0.0 && self.separation.is_finite()) {
            return Err(CliError::config(format!("{prefix}.separation must be non-negative")));
        }
        if self.kind == InitKind::File && self.path.is_empty() {
            return Err(CliError::config(format!("{prefix}.path is required for kind = file")));
        }
        Ok(())
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut cfg = RunConfig::default();
        let mut seen_experiment = false;
        let mut seen = std::collections::HashSet::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| CliError::config(format!("line {}: expected `key = value`", lineno + 1)))?;
            if !seen.insert(key.to_string()) {
                return Err(CliError::config(format!("line {}: duplicate key {key}", lineno + 1)));
            }
            seen_experiment |= key == "experiment";
            cfg.set(key, value)?;
        }
        if !seen_experiment {
            return Err(CliError::config("missing key: experiment"));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        match key {
            "experiment" => self.experiment = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "output_dir" => self.output_dir = PathBuf::from(value),
            "model.dim" => self.model.dim = parse(key, value)?,
            "model.gamma" => self.model.gamma = parse(key, value)?,
            "model.epsilon" => self.model.epsilon = parse(key, value)?,
            "model.s" => self.model.s = parse(key, value)?,
            "discretization.representation" => self.representation = parse(key, value)?,
            "discretization.particles" => self.particles = parse(key, value)?,
            "discretization.grid_n" => self.grid_n = parse(key, value)?,
            "discretization.half_width" => self.half_width = parse(key, value)?,
            "discretization.dt" => self.dt = parse(key, value)?,
            "discretization.t_end" => self.t_end = parse(key, value)?,
            "discretization.integrator" => self.integrator = parse(key, value)?,
            "discretization.record_every" => self.record_every = parse(key, value)?,
            "discretization.aux_n" => self.aux_n = parse(key, value)?,
            "discretization.delta_sing" => self.delta_sing = parse(key, value)?,
            "discretization.tau" => self.tau = parse(key, value)?,
            "discretization.steps" => self.steps = parse(key, value)?,
            "discretization.k" => self.k = parse(key, value)?,
            "metric.floor" => self.metric_floor = parse(key, value)?,
            "metric.max_iter" => self.metric_max_iter = parse(key, value)?,
            "metric.rel_tol" => self.metric_rel_tol = parse(key, value)?,
            "aux.r1" => self.aux_r1 = parse(key, value)?,
            "aux.r2" => self.aux_r2 = parse(key, value)?,
            "aux.t_fraction" => self.aux_t_fraction = parse(key, value)?,
            "aux.nodes" => self.aux_nodes = parse(key, value)?,
            "aux.substeps" => self.aux_substeps = parse(key, value)?,
            "aux.tol" => self.aux_tol = parse(key, value)?,
            "aux.max_iter" => self.aux_max_iter = parse(key, value)?,
            "aux.lipschitz_samples" => self.aux_lipschitz_samples = parse(key, value)?,
            "edi.source" => self.edi_source = parse(key, value)?,
            "edi.tolerance" => self.edi_tolerance = parse(key, value)?,
            "output.state_every" => self.state_every = parse(key, value)?,
            _ => {
                let handled = match key.split_once('.') {
                    Some(("initial_data", field)) => self.initial.set(field, key, value)?,
                    Some(("target", field)) => self.target.set(field, key, value)?,
                    _ => false,
                };
                if !handled {
                    return Err(CliError::config(format!("unknown key: {key}")));
                }
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.model.validate().map_err(|e| CliError::config(e.to_string()))?;
        let dim = self.model.dim;
        let positive = |name: &str, x: f64| {
            if x > 0.0 && x.is_finite() {
                Ok(())
            } else {
                Err(CliError::config(format!("{name} must be positive")))
            }
        };
        positive("discretization.half_width", self.half_width)?;
        positive("discretization.dt", self.dt)?;
        positive("discretization.t_end", self.t_end)?;
        positive("discretization.tau", self.tau)?;
        positive("metric.floor", self.metric_floor)?;
        positive("metric.rel_tol", self.metric_rel_tol)?;
        positive("aux.r1", self.aux_r1)?;
        positive("aux.r2", self.aux_r2)?;
        positive("aux.tol", self.aux_tol)?;
        positive("edi.tolerance", self.edi_tolerance)?;
        if self.dt > self.t_end {
            return Err(CliError::config("discretization.dt must not exceed discretization.t_end"));
        }
        if !(self.aux_t_fraction > 0.0 && self.aux_t_fraction < 1.0) {
            return Err(CliError::config("aux.t_fraction must lie in (0, 1)"));
        }
        if !(self.delta_sing >= 0.0) {
            return Err(CliError::config("discretization.delta_sing must be non-negative"));
        }
        let at_least = |name: &str, x: usize, min: usize| {
            if x >= min {
                Ok(())
            } else {
                Err(CliError::config(format!("{name} must be at least {min}")))
            }
        };
        at_least("discretization.particles", self.particles, 1)?;
        at_least("discretization.grid_n", self.grid_n, 3)?;
        at_least("discretization.record_every", self.record_every, 1)?;
        at_least("discretization.steps", self.steps, 1)?;
        at_least("discretization.k", self.k, 1)?;
        at_least("metric.max_iter", self.metric_max_iter, 1)?;
        at_least("aux.nodes", self.aux_nodes, 2)?;
        at_least("aux.substeps", self.aux_substeps, 1)?;
        at_least("aux.max_iter", self.aux_max_iter, 1)?;
        at_least("aux.lipschitz_samples", self.aux_lipschitz_samples, 1)?;
        if self.aux_n != 0 {
            at_least("discretization.aux_n", self.aux_n, 3)?;
        }
        if !matches!(self.edi_source, Experiment::Particle | Experiment::Jko) {
            return Err(CliError::config("edi.source must be particle or jko"));
        }
        self.initial.validate("initial_data", dim)?;
        self.target.validate("target", dim)?;
        Ok(())
    }

    /// Resolved configuration, one `(key, value)` per known key; parsing the
    /// rendered lines gives back the same configuration.
    pub fn entries(&self) -> Vec<(String, String)> {
        let mut out: Vec<(String, String)> = Vec::new();
        let mut push = |k: &str, v: String| out.push((k.to_string(), v));
        push("experiment", self.experiment.to_string());
        push("seed", self.seed.to_string());
        push("output_dir", self.output_dir.display().to_string());
        push("model.dim", self.model.dim.to_string());
        push("model.gamma", self.model.gamma.to_string());
        push("model.epsilon", self.model.epsilon.to_string());
        push("model.s", self.model.s.to_string());
        push("discretization.representation", self.representation.to_string());
        push("discretization.particles", self.particles.to_string());
        push("discretization.grid_n", self.grid_n.to_string());
        push("discretization.half_width", self.half_width.to_string());
        push("discretization.dt", self.dt.to_string());
        push("discretization.t_end", self.t_end.to_string());
        push("discretization.integrator", self.integrator.to_string());
        push("discretization.record_every", self.record_every.to_string());
        push("discretization.aux_n", self.aux_n.to_string());
        push("discretization.delta_sing", self.delta_sing.to_string());
        push("discretization.tau", self.tau.to_string());
        push("discretization.steps", self.steps.to_string());
        push("discretization.k", self.k.to_string());
        push("metric.floor", self.metric_floor.to_string());
        push("metric.max_iter", self.metric_max_iter.to_string());
        push("metric.rel_tol", self.metric_rel_tol.to_string());
        push("aux.r1", self.aux_r1.to_string());
        push("aux.r2", self.aux_r2.to_string());
        push("aux.t_fraction", self.aux_t_fraction.to_string());
        push("aux.nodes", self.aux_nodes.to_string());
        push("aux.substeps", self.aux_substeps.to_string());
        push("aux.tol", self.aux_tol.to_string());
        push("aux.max_iter", self.aux_max_iter.to_string());
        push("aux.lipschitz_samples", self.aux_lipschitz_samples.to_string());
        push("edi.source", self.edi_source.to_string());
        push("edi.tolerance", self.edi_tolerance.to_string());
        push("output.state_every", self.state_every.to_string());
        self.initial.entries("initial_data", &mut out);
        self.target.entries("target", &mut out);
        out
    }

    pub fn render(&self) -> String {
        self.entries().iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// Model keys that two runs must share to be comparable.
    pub fn model_entries(&self) -> Vec<(String, String)> {
        self.entries().into_iter().filter(|(k, _)| k.starts_with("model.")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_dotted_keys_and_comments() {
        let cfg = RunConfig::parse("# run\nexperiment = jko\nmodel.dim = 2\nmodel.gamma = -1.5\n\ninitial_data.variances = 2, 0.5\n").unwrap();
        assert_eq!(cfg.experiment, Experiment::Jko);
        assert_eq!(cfg.model.gamma, -1.5);
        assert_eq!(cfg.initial.variances, [2.0, 0.5, 0.0]);
    }

    #[test]
    fn rejects_unknown_duplicate_and_invalid() {
        for text in [
            "experiment = particle\nmodel.gama = 0",
            "experiment = particle\nmodel.gamma = 0\nmodel.gamma = -1",
            "experiment = particle\nmodel.gamma = 1",
            "experiment = swim",
            "model.gamma = 0",
            "experiment = particle\nnot a pair",
            "experiment = particle\ninitial_data.kind = file",
        ] {
            assert!(matches!(RunConfig::parse(text), Err(CliError::Config(_))), "{text}");
        }
    }

    #[test]
    fn render_round_trips() {
        let cfg = RunConfig::parse("experiment = distance\nseed = 7\ntarget.kind = bimodal\naux.r1 = 3.5\n").unwrap();
        assert_eq!(RunConfig::parse(&cfg.render()).unwrap(), cfg);
    }
}
