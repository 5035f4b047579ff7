//! Builds initial data from a [`RunConfig`], dispatches to the solvers and
//! writes `manifest`, `diagnostics.csv`, `state_<k>.csv` and `summary`.

use std::fs;

use landau_core::aux_flow::{self, Cutoffs, FixedPointOptions, FrozenField};
use landau_core::collision::{self, EntropyQuadrature, PairWeight};
use landau_core::core::{self as lcore, TRUNCATION_TOLERANCE};
use landau_core::grazing_metric::{self, DistanceOptions, GrazingOperator};
use landau_core::init;
use landau_core::jko::{self, GridEntropy, JkoConfig, JkoSolver};
use landau_core::kernels::Kernel;
use landau_core::particle_solver::{self, Integrator, ParticleSolver, SolverConfig};
use landau_core::{Diagnostics, GridDensity, GridSpec, ParticleEnsemble, Trajectory, Vec3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{Experiment, InitKind, InitialData, IntegratorName, Representation, RunConfig};
use crate::error::{At, CliError};
use crate::output::{self, num, State};

/// Seed stream of the sampled initial particles.
const STREAM_INITIAL: u64 = 0;

/// `key = value` lines reported after a run.
#[derive(Default)]
pub struct Summary(Vec<(String, String)>);

impl Summary {
    fn put(&mut self, key: &str, value: impl ToString) {
        self.0.push((key.to_string(), value.to_string()));
    }

    pub fn render(&self) -> String {
        self.0.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

fn rng(cfg: &RunConfig, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(init::splitmix64(cfg.seed, stream))
}

fn grid(cfg: &RunConfig) -> Result<GridSpec, CliError> {
    GridSpec::new(cfg.model.dim, cfg.half_width, cfg.grid_n).at("core.grid")
}

fn kernel(cfg: &RunConfig) -> Result<Kernel, CliError> {
    Kernel::new(cfg.model).at("kernels.kernel")
}

pub fn particles(cfg: &RunConfig, datum: &InitialData, stream: u64) -> Result<ParticleEnsemble, CliError> {
    let dim = cfg.model.dim;
    let n = cfg.particles;
    let mut rng = rng(cfg, stream);
    match datum.kind {
        InitKind::Maxwellian => init::sample_gaussian(&mut rng, dim, n, &datum.mean, &[datum.temperature; 3]).at("init.sample_gaussian"),
        InitKind::AnisotropicGaussian => init::sample_gaussian(&mut rng, dim, n, &datum.mean, &datum.variances).at("init.sample_gaussian"),
        InitKind::Bimodal => init::sample_bimodal(&mut rng, dim, n, datum.separation, datum.variance).at("init.sample_bimodal"),
        InitKind::File => match output::read_state(datum.path.as_ref(), dim, &grid(cfg)?)? {
            State::Particles(mu) => Ok(mu),
            State::Grid(f) => ParticleEnsemble::from_grid(&f).at("core.from_grid"),
        },
    }
}

/// Sum of axis-aligned Gaussians evaluated on the nodes; the result keeps the
/// mass that falls inside the box, which is returned alongside.
fn gaussians_on_grid(g: &GridSpec, bumps: &[(Vec3, Vec3)]) -> Result<(GridDensity, f64), CliError> {
    let vals: Vec<f64> = g
        .points()
        .iter()
        .map(|x| {
            bumps
                .iter()
                .map(|(mean, var)| {
                    let mut e = 0.0;
                    let mut norm = 1.0;
                    for a in 0..g.dim {
                        e -= (x[a] - mean[a]).powi(2) / (2.0 * var[a]);
                        norm *= (2.0 * std::f64::consts::PI * var[a]).sqrt();
                    }
                    e.exp() / norm / bumps.len() as f64
                })
                .sum()
        })
        .collect();
    let box_mass = vals.iter().sum::<f64>() * g.cell_volume();
    Ok((GridDensity::new(*g, vals).at("core.grid_density")?, box_mass))
}

/// Grid datum and the fraction of its mass inside the box (1 for files).
pub fn density(cfg: &RunConfig, datum: &InitialData, g: &GridSpec) -> Result<(GridDensity, f64), CliError> {
    let iso = |t: f64| [t; 3];
    match datum.kind {
        InitKind::Maxwellian => gaussians_on_grid(g, &[(datum.mean, iso(datum.temperature))]),
        InitKind::AnisotropicGaussian => gaussians_on_grid(g, &[(datum.mean, datum.variances)]),
        InitKind::Bimodal => {
            let mut a = [0.0; 3];
            a[0] = 0.5 * datum.separation;
            let b = [-a[0], 0.0, 0.0];
            gaussians_on_grid(g, &[(a, iso(datum.variance)), (b, iso(datum.variance))])
        }
        InitKind::File => match output::read_state(datum.path.as_ref(), cfg.model.dim, g)? {
            State::Grid(f) => Ok((f, 1.0)),
            State::Particles(_) => Err(CliError::config(format!("{}: grid experiments need an `i1..id,f` state file", datum.path))),
        },
    }
}

fn solver_config(cfg: &RunConfig) -> SolverConfig {
    let mut s = SolverConfig::new(cfg.model.dim, cfg.dt, cfg.t_end, cfg.model.epsilon);
    s.integrator = match cfg.integrator {
        IntegratorName::Rk4 => Integrator::Rk4,
        IntegratorName::Euler => Integrator::ExplicitEuler,
    };
    s.record_every = cfg.record_every;
    s.delta_sing = cfg.delta_sing;
    if cfg.aux_n != 0 {
        s.aux_n = cfg.aux_n;
    }
    s
}

fn distance_options(cfg: &RunConfig) -> DistanceOptions {
    DistanceOptions { k: cfg.k, floor: cfg.metric_floor, max_iter: cfg.metric_max_iter, rel_tol: cfg.metric_rel_tol, floor_check: false }
}

fn jko_config(cfg: &RunConfig) -> JkoConfig {
    JkoConfig { tau: cfg.tau, steps: cfg.steps, inner: distance_options(cfg), params: cfg.model }
}

fn max_drift<S>(traj: &Trajectory<S>) -> (f64, f64, f64) {
    let d = traj.diagnostics();
    let mut out = (0.0f64, 0.0f64, 0.0f64);
    for x in d {
        out.0 = out.0.max((x.mass - d[0].mass).abs());
        let dp: f64 = (0..3).map(|a| (x.momentum[a] - d[0].momentum[a]).powi(2)).sum();
        out.1 = out.1.max(dp.sqrt());
        out.2 = out.2.max((x.energy - d[0].energy).abs());
    }
    out
}

fn write_trajectory<S>(cfg: &RunConfig, traj: &Trajectory<S>, render: impl Fn(&S) -> String) -> Result<(), CliError> {
    let dir = &cfg.output_dir;
    let edi = particle_solver::edi_residuals(traj);
    output::write(dir, "diagnostics.csv", &output::diagnostics_csv(cfg.model.dim, traj.times(), traj.diagnostics(), &edi))?;
    let last = traj.len().saturating_sub(1);
    for (k, s) in traj.states().iter().enumerate() {
        let keep = if cfg.state_every == 0 { k == 0 || k == last } else { k % cfg.state_every == 0 || k == last };
        if keep {
            output::write(dir, &format!("state_{k}.csv"), &render(s))?;
        }
    }
    Ok(())
}

fn trajectory_summary<S>(s: &mut Summary, traj: &Trajectory<S>, dt: f64) {
    let (mass, mom, energy) = max_drift(traj);
    let audit = particle_solver::edi_audit(traj);
    s.put("records", traj.len());
    s.put("mass_drift", num(mass));
    s.put("momentum_drift", num(mom));
    s.put("energy_drift", num(energy));
    s.put("max_entropy_increase", num(particle_solver::max_entropy_increase(traj)));
    s.put("entropy_tolerance", num(particle_solver::entropy_tolerance(traj, dt)));
    s.put("edi_residual", num(audit.residual));
    s.put("chain_rule_rms", num(particle_solver::chain_rule_rms(traj)));
}

fn run_particle(cfg: &RunConfig, s: &mut Summary) -> Result<Trajectory<ParticleEnsemble>, CliError> {
    let mu0 = particles(cfg, &cfg.initial, STREAM_INITIAL)?;
    let scfg = solver_config(cfg);
    let traj = particle_solver::run(&mu0, &scfg, &kernel(cfg)?, cfg.model.gamma).at("particle_solver.run")?;
    trajectory_summary(s, &traj, cfg.dt);
    Ok(traj)
}

fn run_jko(cfg: &RunConfig, s: &mut Summary) -> Result<Trajectory<GridDensity>, CliError> {
    let g = grid(cfg)?;
    let (f0, box_mass) = density(cfg, &cfg.initial, &g)?;
    s.put("initial_box_mass", num(box_mass));
    let solver = JkoSolver::new(g, jko_config(cfg)).at("jko.new")?;
    let run = solver.curve(&f0).at("jko.jko_step")?;
    trajectory_summary(s, &run.trajectory, cfg.tau);
    s.put("worst_descent_excess", num(run.worst_descent_excess()));
    s.put("inner_iterations", run.steps.iter().map(|x| x.iterations.to_string()).collect::<Vec<_>>().join(","));
    Ok(run.trajectory)
}

fn run_distance(cfg: &RunConfig, s: &mut Summary) -> Result<(), CliError> {
    let g = grid(cfg)?;
    let op = GrazingOperator::new(g, cfg.model.gamma).at("grazing_metric.operator")?;
    let (f0, m0) = density(cfg, &cfg.initial, &g)?;
    let (f1, m1) = density(cfg, &cfg.target, &g)?;
    let f1 = grazing_metric::match_invariants(&f1, &f0).at("grazing_metric.match_invariants")?;
    let dist = grazing_metric::landau_distance(&op, &f0, &f1, &distance_options(cfg)).at("grazing_metric.landau_distance")?;
    let entropy = GridEntropy::new(g, &kernel(cfg)?).at("jko.grid_entropy")?;
    let mut traj = Trajectory::new();
    for (t, f) in dist.path.time_nodes.iter().zip(&dist.path.densities) {
        let (h, psi) = entropy.first_variation(f.values());
        let d = Diagnostics {
            mass: lcore::mass(f),
            momentum: lcore::momentum(f),
            energy: lcore::energy(f),
            entropy: Some(lcore::boltzmann_entropy(f)),
            regularized_entropy: h,
            dissipation: grazing_metric::grid_dissipation(&op, f.values(), &psi),
        };
        traj.push(*t, f.clone(), d).at("core.trajectory")?;
    }
    write_trajectory(cfg, &traj, output::grid_csv)?;
    s.put("initial_box_mass", num(m0));
    s.put("target_box_mass", num(m1));
    s.put("distance", num(dist.d));
    s.put("iterations", dist.iterations);
    s.put("per_interval_action", dist.per_interval_action.iter().map(|a| num(*a)).collect::<Vec<_>>().join(","));
    Ok(())
}

fn particle_diagnostics(solver: &ParticleSolver, mu: &ParticleEnsemble) -> Result<Diagnostics, CliError> {
    let eval = solver.evaluate(mu.positions(), mu.weights()).at("particle_solver.evaluate")?;
    Ok(Diagnostics {
        mass: mu.weights().iter().sum(),
        momentum: lcore::momentum(mu),
        energy: lcore::energy(mu),
        entropy: None,
        regularized_entropy: eval.entropy,
        dissipation: eval.dissipation,
    })
}

fn run_aux(cfg: &RunConfig, s: &mut Summary) -> Result<(), CliError> {
    let mu0 = particles(cfg, &cfg.initial, STREAM_INITIAL)?;
    let k = kernel(cfg)?;
    let scfg = solver_config(cfg);
    let cutoffs = Cutoffs::new(cfg.aux_r1, cfg.aux_r2).at("aux_flow.cutoffs")?;
    let field = FrozenField::new(&mu0, k, cfg.model.gamma, cutoffs, scfg.aux_n).at("aux_flow.frozen_field")?;
    let c = aux_flow::lipschitz_constants(&field, cfg.aux_lipschitz_samples);
    let t = cfg.aux_t_fraction * c.t_max();
    let opts = FixedPointOptions { nodes: cfg.aux_nodes, substeps: cfg.aux_substeps, tol: cfg.aux_tol, max_iter: cfg.aux_max_iter };
    let res = aux_flow::fixed_point_solve(&mu0, &field, t, &c, &opts).at("aux_flow.fixed_point_solve")?;
    let solver = ParticleSolver::for_ensemble(&mu0, k, cfg.model.gamma, &scfg).at("particle_solver.new")?;
    let mut traj = Trajectory::new();
    for (t, mu) in res.curve.times.iter().zip(&res.curve.states) {
        traj.push(*t, mu.clone(), particle_diagnostics(&solver, mu)?).at("core.trajectory")?;
    }
    write_trajectory(cfg, &traj, output::particle_csv)?;
    let list = |v: &[f64]| v.iter().map(|x| num(*x)).collect::<Vec<_>>().join(",");
    s.put("c_inf", num(c.c_inf));
    s.put("c_lip", num(c.c_lip));
    s.put("t_max", num(c.t_max()));
    s.put("t_end", num(t));
    s.put("iterations", res.iterations);
    s.put("distances", list(&res.distances));
    s.put("ratios", list(&res.ratios));
    s.put("contraction_bound", num(res.contraction_bound));
    s.put("sliced_w2", res.sliced);
    Ok(())
}

fn run_edi(cfg: &RunConfig, s: &mut Summary) -> Result<(), CliError> {
    let cert = match cfg.edi_source {
        Experiment::Jko => {
            let traj = run_jko(cfg, s)?;
            write_trajectory(cfg, &traj, output::grid_csv)?;
            jko::edi_certificate(&traj, None, cfg.edi_tolerance)
        }
        _ => {
            let traj = run_particle(cfg, s)?;
            write_trajectory(cfg, &traj, output::particle_csv)?;
            jko::edi_certificate(&traj, None, cfg.edi_tolerance)
        }
    }
    .at("jko.edi_certificate")?;
    s.put("edi_pairs", cert.pair_count());
    s.put("edi_worst", num(cert.worst));
    s.put("edi_worst_pair", format!("{},{}", cert.worst_pair.0, cert.worst_pair.1));
    s.put("edi_pass", cert.pass);
    Ok(())
}

fn run_diagnostics(cfg: &RunConfig, s: &mut Summary) -> Result<(), CliError> {
    let k = kernel(cfg)?;
    let d = match cfg.representation {
        Representation::Particles => {
            let mu = particles(cfg, &cfg.initial, STREAM_INITIAL)?;
            let solver = ParticleSolver::for_ensemble(&mu, k, cfg.model.gamma, &solver_config(cfg)).at("particle_solver.new")?;
            let d = particle_diagnostics(&solver, &mu)?;
            let mut traj = Trajectory::new();
            traj.push(0.0, mu, d).at("core.trajectory")?;
            write_trajectory(cfg, &traj, output::particle_csv)?;
            d
        }
        Representation::Grid => {
            let g = grid(cfg)?;
            let (f, box_mass) = density(cfg, &cfg.initial, &g)?;
            let quad = EntropyQuadrature::new(k, g).at("collision.entropy_quadrature")?;
            let pw = PairWeight::new(cfg.model.gamma, cfg.delta_sing).at("collision.pair_weight")?;
            let d = Diagnostics {
                mass: lcore::mass(&f),
                momentum: lcore::momentum(&f),
                energy: lcore::energy(&f),
                entropy: Some(lcore::boltzmann_entropy(&f)),
                regularized_entropy: quad.entropy(&f),
                dissipation: collision::dissipation_eps(&f, &quad, &pw).at("collision.dissipation_eps")?,
            };
            let mut traj = Trajectory::new();
            traj.push(0.0, f, d).at("core.trajectory")?;
            write_trajectory(cfg, &traj, output::grid_csv)?;
            s.put("initial_box_mass", num(box_mass));
            d
        }
    };
    s.put("entropy_eps", num(d.regularized_entropy));
    s.put("dissipation_eps", num(d.dissipation));
    Ok(())
}

pub fn manifest(cfg: &RunConfig) -> String {
    let mut out = String::from("# landau run manifest; `landau run` accepts this file as a config\n");
    out.push_str(&format!("# version = {}\n", env!("CARGO_PKG_VERSION")));
    out.push_str(&cfg.render());
    out.push_str("# tolerances\n");
    out.push_str(&format!("# core.truncation_tolerance = {TRUNCATION_TOLERANCE:e}\n"));
    out.push_str("# particle_solver.entropy_tolerance = 10 dt^2 max|dD/dt| (reported in summary)\n");
    out.push_str(&format!("# grazing_metric.rel_tol = {:e}\n", cfg.metric_rel_tol));
    out.push_str(&format!("# grazing_metric.max_iter = {}\n", cfg.metric_max_iter));
    out.push_str(&format!("# grazing_metric.floor = {:e}\n", cfg.metric_floor));
    out.push_str(&format!("# aux_flow.tol = {:e}\n", cfg.aux_tol));
    out.push_str(&format!("# aux_flow.max_iter = {}\n", cfg.aux_max_iter));
    out.push_str(&format!("# edi.tolerance = {:e}\n", cfg.edi_tolerance));
    out
}

/// Runs the configured experiment; the manifest is written first so a failed
/// run can still be reproduced.
pub fn run(cfg: &RunConfig) -> Result<Summary, CliError> {
    let dir = &cfg.output_dir;
    fs::create_dir_all(dir).map_err(|e| CliError::io(format!("creating {}", dir.display()), e))?;
    output::write(dir, "manifest", &manifest(cfg))?;
    let mut s = Summary::default();
    s.put("experiment", cfg.experiment);
    match cfg.experiment {
        Experiment::Particle => {
            let traj = run_particle(cfg, &mut s)?;
            write_trajectory(cfg, &traj, output::particle_csv)?;
        }
        Experiment::Jko => {
            let traj = run_jko(cfg, &mut s)?;
            write_trajectory(cfg, &traj, output::grid_csv)?;
        }
        Experiment::Distance => run_distance(cfg, &mut s)?,
        Experiment::AuxFixedPoint => run_aux(cfg, &mut s)?,
        Experiment::EdiAudit => run_edi(cfg, &mut s)?,
        Experiment::Diagnostics => run_diagnostics(cfg, &mut s)?,
    }
    output::write(dir, "summary", &s.render())?;
    Ok(s)
}

/// Checks everything `run` would check before doing any work: the config,
/// the model and the problem sizes the solvers accept.
pub fn validate(cfg: &RunConfig) -> Result<(), CliError> {
    kernel(cfg)?;
    let g = grid(cfg)?;
    match cfg.experiment {
        Experiment::Particle | Experiment::AuxFixedPoint => solver_config(cfg).validate().at("particle_solver.config")?,
        Experiment::Jko => {
            jko_config(cfg).validate().at("jko.config")?;
            GrazingOperator::new(g, cfg.model.gamma).at("grazing_metric.operator")?;
        }
        Experiment::Distance => {
            GrazingOperator::new(g, cfg.model.gamma).at("grazing_metric.operator")?;
        }
        Experiment::EdiAudit if cfg.edi_source == Experiment::Jko => {
            jko_config(cfg).validate().at("jko.config")?;
            GrazingOperator::new(g, cfg.model.gamma).at("grazing_metric.operator")?;
        }
        Experiment::EdiAudit => solver_config(cfg).validate().at("particle_solver.config")?,
        Experiment::Diagnostics => {}
    }
    Ok(())
}
