//! Acceptance suite: one PASS/FAIL line per criterion. Pass criterion numbers
//! as arguments to run a subset, e.g. `cargo test --test acceptance -- 6 7`.

use std::process::ExitCode;
use std::sync::{Mutex, OnceLock};
use std::time::Instant;

use landau_core::aux_flow::{self, Cutoffs, FixedPointOptions, FrozenField};
use landau_core::collision::{self, EntropyQuadrature, PairWeight};
use landau_core::core::GridSpec;
use landau_core::grazing_metric::{self, DistanceOptions, GrazingField, GrazingOperator};
use landau_core::init;
use landau_core::jko::{self, JkoConfig, SlopeOptions};
use landau_core::kernels::{self, Kernel};
use landau_core::particle_solver::{self, Integrator, SolverConfig};
use landau_core::{make_maxwellian, GridDensity, ModelParams, ParticleEnsemble, Result, Trajectory, Vec3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const ZERO: Vec3 = [0.0; 3];

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: String) -> Self {
        Outcome { pass, detail }
    }
}

/// Entropy records registered by every run, checked by criterion 2:
/// (label, largest increase, tolerance).
static ENTROPY_RUNS: Mutex<Vec<(String, f64, f64)>> = Mutex::new(Vec::new());

fn register_particle_run(label: String, traj: &Trajectory<ParticleEnsemble>, dt: f64) {
    let inc = particle_solver::max_entropy_increase(traj);
    let tol = particle_solver::entropy_tolerance(traj, dt);
    ENTROPY_RUNS.lock().unwrap().push((label, inc, tol));
}

fn register_jko_run(label: String, run: &jko::JkoCurve) {
    let inc = particle_solver::max_entropy_increase(&run.trajectory);
    ENTROPY_RUNS.lock().unwrap().push((label, inc, 1e-8));
}

fn kernel(dim: usize, gamma: f64, eps: f64) -> Kernel {
    Kernel::new(ModelParams::new(dim, gamma, eps, 1.0).unwrap()).unwrap()
}

fn norm(a: &Vec3) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

fn sub(a: &Vec3, b: &Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn gaussian_grid(g: &GridSpec, mean: &Vec3, var: [f64; 3]) -> GridDensity {
    let vals = g
        .points()
        .iter()
        .map(|x| (0..g.dim).map(|a| -(x[a] - mean[a]).powi(2) / (2.0 * var[a])).sum::<f64>().exp())
        .collect();
    GridDensity::new(*g, vals).unwrap()
}

/// Two bumps at ±1 on the first axis; the box truncates their tails.
fn bimodal(g: &GridSpec) -> GridDensity {
    let a = gaussian_grid(g, &[1.0, 0.0, 0.0], [0.6, 0.6, 0.0]);
    let b = gaussian_grid(g, &[-1.0, 0.0, 0.0], [0.6, 0.6, 0.0]);
    GridDensity::new(*g, a.values().iter().zip(b.values()).map(|(x, y)| x + y).collect()).unwrap()
}

fn c1_conservation() -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mu0 = init::sample_gaussian(&mut rng, 3, 256, &ZERO, &[2.0, 1.0, 0.5])?;
    let mut pass = true;
    let mut lines = Vec::new();
    for gamma in [0.0, -1.0, -2.0, -3.0] {
        for integrator in [Integrator::Rk4, Integrator::ExplicitEuler] {
            let mut cfg = SolverConfig::new(3, 1e-3, 1.0, 0.3);
            // A tight margin keeps the 12-node auxiliary grid spacing near 3ε;
            // a coarser grid makes the flow stiff enough for RK4 to drift.
            cfg.aux_n = 12;
            cfg.aux_margin = 4.0 * 0.3;
            cfg.integrator = integrator;
            cfg.record_every = 50;
            let start = Instant::now();
            let traj = particle_solver::run(&mu0, &cfg, &kernel(3, gamma, 0.3), gamma)?;
            let secs = start.elapsed().as_secs_f64();
            let d = traj.diagnostics();
            let mass = d.iter().map(|x| (x.mass - d[0].mass).abs()).fold(0.0, f64::max);
            let mom = d.iter().map(|x| norm(&sub(&x.momentum, &d[0].momentum))).fold(0.0, f64::max);
            let en = d.iter().map(|x| (x.energy - d[0].energy).abs()).fold(0.0, f64::max);
            let (mom_tol, label) = match integrator {
                Integrator::Rk4 => (1e-8, "rk4"),
                Integrator::ExplicitEuler => (1e-12, "euler"),
            };
            // The energy tolerance is applied to the RK4 runs; explicit Euler
            // drifts at first order in dt.
            let en_ok = integrator == Integrator::ExplicitEuler || en <= 1e-6;
            let ok = mass == 0.0 && mom <= mom_tol && en_ok && secs <= 120.0;
            pass &= ok;
            lines.push(format!("g={gamma} {label}: mass {mass:.0e} mom {mom:.1e} energy {en:.1e} {secs:.0}s{}", if ok { "" } else { " FAIL" }));
            register_particle_run(format!("particle g={gamma} {label}"), &traj, cfg.dt);
        }
    }
    Ok(Outcome::new(pass, lines.join("; ")))
}

/// Anisotropic-Gaussian RK4 runs at dt = 1e-3 and 5e-4, shared by criteria 3
/// and 4.
fn edi_runs() -> &'static std::result::Result<[Trajectory<ParticleEnsemble>; 2], String> {
    static RUNS: OnceLock<std::result::Result<[Trajectory<ParticleEnsemble>; 2], String>> = OnceLock::new();
    RUNS.get_or_init(|| {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mu0 = init::sample_gaussian(&mut rng, 3, 128, &ZERO, &[2.0, 1.0, 0.5]).map_err(|e| e.to_string())?;
        let k = kernel(3, 0.0, 0.3);
        let run = |dt: f64| -> Result<Trajectory<ParticleEnsemble>> {
            let mut cfg = SolverConfig::new(3, dt, 0.2, 0.3);
            cfg.aux_n = 12;
            let traj = particle_solver::run(&mu0, &cfg, &k, 0.0)?;
            register_particle_run(format!("particle edi dt={dt}"), &traj, dt);
            Ok(traj)
        };
        Ok([run(1e-3).map_err(|e| e.to_string())?, run(5e-4).map_err(|e| e.to_string())?])
    })
}

fn c3_edi_equality() -> Result<Outcome> {
    let runs = match edi_runs() {
        Ok(r) => r,
        Err(e) => return Ok(Outcome::new(false, e.clone())),
    };
    let r1 = particle_solver::edi_audit(&runs[0]).residual.abs();
    let r2 = particle_solver::edi_audit(&runs[1]).residual.abs();
    let ratio = r1 / r2;
    Ok(Outcome::new(
        ratio >= 3.0 && r2 <= 1e-3,
        format!("|residual| dt=1e-3: {r1:.2e}, dt=5e-4: {r2:.2e}, ratio {ratio:.2}"),
    ))
}

fn c4_chain_rule() -> Result<Outcome> {
    let runs = match edi_runs() {
        Ok(r) => r,
        Err(e) => return Ok(Outcome::new(false, e.clone())),
    };
    let a = particle_solver::chain_rule_rms(&runs[0]);
    let b = particle_solver::chain_rule_rms(&runs[1]);
    Ok(Outcome::new(b <= 0.02 && b < a, format!("relative RMS dt=1e-3: {a:.2e}, dt=5e-4: {b:.2e}")))
}

fn maxwellian_dissipation(n: usize, eps: f64) -> Result<f64> {
    let g = GridSpec::new(2, 7.0, n)?;
    let f = make_maxwellian(&g, &ZERO, 1.0)?;
    let quad = EntropyQuadrature::new(kernel(2, 0.0, eps), g)?;
    collision::dissipation_eps(&f, &quad, &PairWeight::new(0.0, 0.0)?)
}

fn sci(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.3e}")).collect::<Vec<_>>().join("/")
}

fn c5_maxwellian() -> Result<Outcome> {
    let by_eps: Vec<f64> = [0.4, 0.2, 0.1].iter().map(|e| maxwellian_dissipation(41, *e)).collect::<Result<_>>()?;
    let by_n: Vec<f64> = [29, 41, 57].iter().map(|n| maxwellian_dissipation(*n, 0.2)).collect::<Result<_>>()?;
    let g = GridSpec::new(2, 7.0, 48)?;
    let exact = collision::dissipation_exact(&make_maxwellian(&g, &ZERO, 1.0)?, 0.0)?;
    let dec = |v: &[f64]| v.windows(2).all(|w| w[1] < w[0]);
    Ok(Outcome::new(
        dec(&by_eps) && dec(&by_n) && exact <= 1e-3,
        format!("D_eps over eps 0.4/0.2/0.1: {}; over n 29/41/57: {}; exact D (n=48): {exact:.1e}", sci(&by_eps), sci(&by_n)),
    ))
}

fn c6_metric_axioms() -> Result<Outcome> {
    let g = GridSpec::new(2, 3.0, 8)?;
    let op = GrazingOperator::new(g, 0.0)?;
    let opts = DistanceOptions { k: 8, ..DistanceOptions::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut neg, mut self_d, mut asym, mut tri, mut equi) = (0usize, 0.0f64, 0.0f64, f64::INFINITY, 0.0f64);
    let start = Instant::now();
    for _ in 0..20 {
        let a = init::random_smooth_density(&mut rng, &g, 4.0, 0.4)?;
        let b = grazing_metric::match_invariants(&init::random_smooth_density(&mut rng, &g, 4.0, 0.4)?, &a)?;
        let c = grazing_metric::match_invariants(&init::random_smooth_density(&mut rng, &g, 4.0, 0.4)?, &a)?;
        let ab = grazing_metric::landau_distance(&op, &a, &b, &opts)?;
        let ba = grazing_metric::landau_distance(&op, &b, &a, &opts)?;
        let ac = grazing_metric::landau_distance(&op, &a, &c, &opts)?;
        let cb = grazing_metric::landau_distance(&op, &c, &b, &opts)?;
        let aa = grazing_metric::landau_distance(&op, &a, &a, &opts)?;
        for d in [&ab, &ba, &ac, &cb] {
            neg += usize::from(d.d < 0.0);
            let mean = d.per_interval_action.iter().sum::<f64>() / d.per_interval_action.len() as f64;
            let spread = d.per_interval_action.iter().map(|x| (x - mean).abs()).fold(0.0, f64::max) / mean;
            equi = equi.max(spread);
        }
        self_d = self_d.max(aa.d);
        asym = asym.max((ab.d - ba.d).abs());
        tri = tri.min(ac.d + cb.d - ab.d);
    }
    let secs = start.elapsed().as_secs_f64();
    Ok(Outcome::new(
        neg == 0 && self_d <= 1e-6 && asym <= 1e-6 && tri >= -1e-6 && equi <= 0.05 && secs <= 600.0,
        format!(
            "20 triples (d=2, n=8, K=8): negative {neg}, max d(f,f) {self_d:.1e}, max asymmetry {asym:.1e}, min triangle slack {tri:.2e}, max equipartition spread {equi:.1e}, {secs:.0}s"
        ),
    ))
}

fn c7_grazing_moment_bound() -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut violations = 0;
    let mut worst = 0.0f64;
    for trial in 0..100 {
        let (dim, n) = if trial % 2 == 0 { (2, 6) } else { (3, 4) };
        let g = GridSpec::new(dim, 2.0, n)?;
        let op = GrazingOperator::new(g, -rng.gen_range(0.0..4.0))?;
        let f = GridDensity::new(g, (0..g.len()).map(|_| rng.gen_range(0.01..1.0)).collect())?;
        let m = GrazingField {
            values: (0..op.pair_count())
                .map(|_| {
                    let mut v = [0.0; 3];
                    for x in v.iter_mut().take(dim) {
                        *x = rng.gen_range(-1.0..1.0);
                    }
                    v
                })
                .collect(),
        };
        let fp: Vec<f64> = (0..op.pair_count()).map(|_| rng.gen_range(0.0..2.0)).collect();
        let (lhs, rhs) = grazing_metric::grazing_moment_bound(&op, &f, &m, &fp);
        violations += usize::from(lhs > rhs);
        worst = worst.max(lhs / rhs);
    }
    Ok(Outcome::new(violations == 0, format!("100 triples: {violations} violations, max lhs/rhs {worst:.3}")))
}

fn jko_config(tau: f64, steps: usize) -> JkoConfig {
    JkoConfig {
        tau,
        steps,
        inner: DistanceOptions { k: 2, ..DistanceOptions::default() },
        params: ModelParams::new(2, 0.0, 0.8, 1.0).unwrap(),
    }
}

fn c8_jko_descent() -> Result<Outcome> {
    let g = GridSpec::new(2, 3.0, 8)?;
    let f = gaussian_grid(&g, &[0.2, 0.0, 0.0], [2.2, 0.5, 0.0]);
    let t_end = 0.2;
    let mut ends = Vec::new();
    let mut worst = f64::NEG_INFINITY;
    let mut telescoped = true;
    for tau in [0.1, 0.05, 0.025] {
        let cfg = jko_config(tau, (t_end / tau).round() as usize);
        let solver = jko::JkoSolver::new(g, cfg)?;
        let run = solver.curve(&f)?;
        worst = worst.max(run.worst_descent_excess());
        let h = run.trajectory.diagnostics();
        let sum: f64 = run.steps.iter().map(|s| s.d2 / (2.0 * tau)).sum();
        telescoped &= sum <= h[0].regularized_entropy - h[h.len() - 1].regularized_entropy + 1e-8;
        register_jko_run(format!("jko tau={tau}"), &run);
        ends.push(run.at(t_end).clone());
    }
    let d1 = ends[0].l1_distance(&ends[1]);
    let d2 = ends[1].l1_distance(&ends[2]);
    Ok(Outcome::new(
        worst <= 1e-8 && d2 < d1 && telescoped,
        format!("max H(n)+d^2/2tau-H(n-1) {worst:.1e}; endpoint L1 tau vs tau/2 {d1:.2e}, tau/2 vs tau/4 {d2:.2e}; telescoped bound {}", if telescoped { "ok" } else { "violated" }),
    ))
}

fn c9_slope_sandwich() -> Result<Outcome> {
    let g = GridSpec::new(2, 3.0, 8)?;
    let params = ModelParams::new(2, 0.0, 0.8, 1.0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let data = vec![
        gaussian_grid(&g, &ZERO, [2.0, 0.5, 0.0]),
        gaussian_grid(&g, &[0.3, -0.2, 0.0], [0.6, 1.8, 0.0]),
        gaussian_grid(&g, &ZERO, [1.0, 1.0, 0.0]),
        bimodal(&g),
        init::random_smooth_density(&mut rng, &g, 4.0, 0.4)?,
    ];
    let opts = SlopeOptions { aux_n: 24, ..SlopeOptions::for_dim(2) };
    let mut pass = true;
    let mut parts = Vec::new();
    for f in &data {
        let est = jko::slope_lower_bound(f, Cutoffs::new(2.0, 2.0)?, &params, &opts)?;
        pass &= est.holds();
        parts.push(format!("{:.3}<={:.3}+{:.0e}", est.sqrt_d_reduced, est.slope_est, est.budget));
        let ens = ParticleEnsemble::from_grid(f)?;
        let reduced = |r1: f64, r2: f64| -> Result<f64> {
            let field = FrozenField::new(&ens, Kernel::new(params)?, params.gamma, Cutoffs::new(r1, r2)?, opts.aux_n)?;
            Ok(aux_flow::reduced_dissipation(&ens, &field))
        };
        let in_r1: Vec<f64> = [1.0, 2.0, 4.0, 8.0].iter().map(|r| reduced(*r, 2.0)).collect::<Result<_>>()?;
        let in_r2: Vec<f64> = [1.0, 2.0, 4.0, 8.0].iter().map(|r| reduced(2.0, *r)).collect::<Result<_>>()?;
        let mono = |v: &[f64]| v.windows(2).all(|w| w[1] >= w[0]);
        pass &= mono(&in_r1) && mono(&in_r2);
    }
    Ok(Outcome::new(pass, format!("sqrtD_R <= slope + budget on 5 data: {}; D_R monotone in R1, R2 over 1,2,4,8", parts.join(", "))))
}

fn c10_aux_contraction() -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mu = init::sample_gaussian(&mut rng, 2, 32, &ZERO, &[1.5, 0.6, 0.0])?;
    let mut pass = true;
    let mut parts = Vec::new();
    for (r1, r2) in [(1.5, 2.0), (2.0, 3.0), (3.0, 4.0)] {
        let field = FrozenField::new(&mu, kernel(2, 0.0, 0.5), 0.0, Cutoffs::new(r1, r2)?, 32)?;
        let c = aux_flow::lipschitz_constants(&field, 400);
        let t = 0.9 * c.t_max();
        let moment_drift = |nodes: usize| -> Result<(f64, aux_flow::FixedPointResult)> {
            let opts = FixedPointOptions { nodes, ..FixedPointOptions::default() };
            let res = aux_flow::fixed_point_solve(&mu, &field, t, &c, &opts)?;
            let m0 = landau_core::moment(&mu, 2.0);
            let drift = res.curve.states.iter().map(|s| (landau_core::moment(s, 2.0) - m0).abs() / m0).fold(0.0, f64::max);
            Ok((drift, res))
        };
        let (coarse, _) = moment_drift(16)?;
        let (fine, res) = moment_drift(32)?;
        let ratio = res.ratios.iter().copied().fold(0.0, f64::max);
        // |v_i(t)| <= max(|v_i(0)|, R1 + 1) + 1e-8 along the converged curve.
        let mut growth = f64::NEG_INFINITY;
        for state in &res.curve.states {
            for (v, v0) in state.positions().iter().zip(mu.positions()) {
                growth = growth.max(norm(v) - norm(v0).max(r1 + 1.0));
            }
        }
        // The iterate curve is linear in time between nodes, so the scheme is
        // second order in the node spacing.
        let order = (coarse / fine).log2();
        let ok = ratio <= res.contraction_bound && growth <= 1e-8 && (order >= 1.8 || fine <= 1e-12);
        pass &= ok;
        parts.push(format!(
            "R=({r1},{r2}) C={:.2} T={t:.3}: max ratio {ratio:.3} <= {:.3}, {} iterations, growth excess {growth:.1e}, m2 drift {coarse:.1e} -> {fine:.1e} (order {order:.2})",
            c.c_lip, res.contraction_bound, res.iterations
        ));
    }
    Ok(Outcome::new(pass, parts.join("; ")))
}

fn c11_inequalities() -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut parts = Vec::new();
    let mut pass = true;
    let rand_vec = |rng: &mut ChaCha8Rng, r: f64| -> Vec3 { [rng.gen_range(-r..r), rng.gen_range(-r..r), rng.gen_range(-r..r)] };

    // Peetre.
    let mut bad = 0;
    for _ in 0..20_000 {
        let x = rand_vec(&mut rng, 10.0);
        let y = rand_vec(&mut rng, 10.0);
        let (l, r) = kernels::peetre_ratio(&x, &y, rng.gen_range(-4.0..4.0));
        bad += usize::from(l > r * (1.0 + 1e-12));
    }
    pass &= bad == 0;
    parts.push(format!("Peetre 20000: {bad} violations"));

    // Weighted convolution, with the integral normalized by the quadrature mass.
    let mut bad = 0;
    let mut worst = 0.0f64;
    let mut samples = 0;
    for eps in [0.3, 0.7, 1.5] {
        let k = kernel(3, 0.0, eps);
        let quad = kernels::kernel_quadrature(&k, 16.0, 25);
        let mass: f64 = quad.iter().map(|q| q.1).sum();
        for _ in 0..3400 {
            let v = rand_vec(&mut rng, 6.0);
            let p = rng.gen_range(-4.0..4.0);
            let lhs = quad.iter().map(|(w, g)| g * (1.0 + norm(&sub(&v, w)).powi(2)).powf(0.5 * p)).sum::<f64>() / mass;
            let rhs = kernels::weighted_convolution_bound(&k, p) * (1.0 + norm(&v).powi(2)).powf(0.5 * p);
            bad += usize::from(lhs > rhs);
            worst = worst.max(lhs / rhs);
            samples += 1;
        }
    }
    pass &= bad == 0;
    parts.push(format!("weighted convolution {samples}: {bad} violations (max ratio {worst:.2})"));

    // Cross identity.
    let mut worst = 0.0f64;
    for _ in 0..20_000 {
        let x = rand_vec(&mut rng, 5.0);
        let y = rand_vec(&mut rng, 5.0);
        let (l, r) = collision::cross_identity_check(&x, &y)?;
        worst = worst.max((l - r).abs() / (norm(&x).powi(2) * norm(&y).powi(2)).max(1e-300));
    }
    pass &= worst <= 1e-12;
    parts.push(format!("cross identity 20000: max relative gap {worst:.1e}"));

    // Twisted integration by parts: residual relative to the size of either
    // term, against h².
    let random_bump = |rng: &mut ChaCha8Rng| -> (Vec3, f64, Vec3) {
        (rand_vec(rng, 1.0), rng.gen_range(0.5..1.2), rand_vec(rng, 0.5))
    };
    let eval_bump = |(c, s, b): &(Vec3, f64, Vec3), x: &Vec3| -> f64 {
        (-norm(&sub(x, c)).powi(2) / (2.0 * s)).exp() * (1.0 + b[0] * x[0] + b[1] * x[1] + b[2] * x[2])
    };
    let mut bad = 0;
    let mut samples = 0;
    let mut refine = [0.0f64; 2];
    let grids = [GridSpec::new(3, 8.0, 17)?, GridSpec::new(3, 8.0, 33)?];
    for _ in 0..5000 {
        let fb = random_bump(&mut rng);
        let gb = random_bump(&mut rng);
        for (i, g) in grids.iter().enumerate() {
            let pts = g.points();
            let f: Vec<f64> = pts.iter().map(|x| eval_bump(&fb, x)).collect();
            let gv: Vec<f64> = pts.iter().map(|x| eval_bump(&gb, x)).collect();
            let res = collision::twisted_ibp_residual(g, &f, &gv)?;
            let grad = g.gradient(&gv);
            let scale: f64 = pts.iter().zip(&grad).zip(&f).map(|((x, dg), fv)| norm(x) * norm(dg) * fv.abs()).sum::<f64>() * g.cell_volume();
            let h = g.spacing();
            bad += usize::from(res > h * h * scale);
            refine[i] = refine[i].max(res / scale);
            samples += 1;
        }
    }
    pass &= bad == 0;
    parts.push(format!("twisted IBP {samples}: {bad} above h^2 budget (max relative residual h=1: {:.1e}, h=0.5: {:.1e})", refine[0], refine[1]));

    // Jensen cross inequality.
    let mut bad = 0;
    let mut samples = 0;
    let mut excess = [0.0f64; 2];
    let grids = [GridSpec::new(3, 6.0, 13)?, GridSpec::new(3, 6.0, 25)?];
    let k = kernel(3, 0.0, 0.5);
    for _ in 0..50 {
        let b1 = random_bump(&mut rng);
        let b2 = random_bump(&mut rng);
        let vs: Vec<Vec3> = (0..100).map(|_| rand_vec(&mut rng, 2.5)).collect();
        for (i, g) in grids.iter().enumerate() {
            let f = GridDensity::new(
                *g,
                g.points().iter().map(|x| eval_bump(&(b1.0, b1.1, ZERO), x) + 0.5 * eval_bump(&(b2.0, b2.1, ZERO), x)).collect(),
            )?;
            let h = g.spacing();
            for v in &vs {
                let (l, r) = collision::jensen_cross_check(&f, &k, v)?;
                bad += usize::from(l > r + h * h * (l + r));
                excess[i] = excess[i].max((l - r) / (l + r));
                samples += 1;
            }
        }
    }
    pass &= bad == 0;
    parts.push(format!("Jensen {samples}: {bad} above h^2 budget (max relative excess h=1: {:.1e}, h=0.5: {:.1e})", excess[0], excess[1]));
    Ok(Outcome::new(pass, parts.join("; ")))
}

fn c2_entropy_monotone() -> Result<Outcome> {
    if ENTROPY_RUNS.lock().unwrap().is_empty() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mu0 = init::sample_gaussian(&mut rng, 3, 64, &ZERO, &[2.0, 1.0, 0.5])?;
        let mut cfg = SolverConfig::new(3, 1e-3, 0.1, 0.3);
        cfg.aux_n = 12;
        let traj = particle_solver::run(&mu0, &cfg, &kernel(3, 0.0, 0.3), 0.0)?;
        register_particle_run("particle small".into(), &traj, cfg.dt);
        let g = GridSpec::new(2, 3.0, 8)?;
        let run = jko::jko_curve(&gaussian_grid(&g, &ZERO, [2.2, 0.5, 0.0]), &jko_config(0.1, 3))?;
        register_jko_run("jko small".into(), &run);
    }
    let runs = ENTROPY_RUNS.lock().unwrap();
    let bad: Vec<&str> = runs.iter().filter(|(_, inc, tol)| inc > tol).map(|r| r.0.as_str()).collect();
    let worst = runs.iter().map(|r| r.1 - r.2).fold(f64::NEG_INFINITY, f64::max);
    Ok(Outcome::new(
        bad.is_empty(),
        format!("{} runs, max (increase - tolerance) {worst:.1e}{}", runs.len(), if bad.is_empty() { String::new() } else { format!(", violating: {}", bad.join(", ")) }),
    ))
}

type Criterion = (u32, &'static str, fn() -> Result<Outcome>);

fn main() -> ExitCode {
    let criteria: [Criterion; 11] = [
        (1, "conservation", c1_conservation),
        (3, "EDI equality for the particle flow", c3_edi_equality),
        (4, "chain rule", c4_chain_rule),
        (5, "Maxwellian near-stationarity", c5_maxwellian),
        (6, "metric axioms", c6_metric_axioms),
        (7, "grazing moment bound", c7_grazing_moment_bound),
        (8, "JKO descent", c8_jko_descent),
        (9, "slope sandwich", c9_slope_sandwich),
        (10, "auxiliary flow contraction", c10_aux_contraction),
        (11, "inequality oracles", c11_inequalities),
        // Last: checks every run registered above.
        (2, "entropy monotonicity", c2_entropy_monotone),
    ];
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (id, name, run) in criteria {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let outcome = run().unwrap_or_else(|e| Outcome::new(false, format!("error: {e}")));
        let tag = if outcome.pass { "PASS" } else { "FAIL" };
        failed += usize::from(!outcome.pass);
        println!("[{tag}] criterion {id:>2} ({name}, {:.1}s): {}", start.elapsed().as_secs_f64(), outcome.detail);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
