//! Minimizing movements of the regularized entropy in the Landau distance,
//! the reduced-dissipation slope estimate and the energy-dissipation
//! certificate.

use alloc::vec::Vec;

use crate::aux_flow::{self, Cutoffs, FixedPointOptions, FrozenField};
use crate::core::{self, Diagnostics, GridDensity, GridSpec, Measure, ModelParams, ParticleEnsemble, Trajectory};
use crate::error::{Error, Result};
use crate::grazing_metric::{self, DistanceOptions, GrazingOperator, PathProblem, Retraction};
use crate::kernels::{self, Kernel};
use crate::lbfgs::{self, LbfgsOptions};
use crate::math;
use crate::particle_solver::default_aux_n;

/// `H_ε(f) = c Σ_a ρ_a log ρ_a` with `ρ_a = Σ_b K_ab f_b`, where each column
/// of `K_ab ∝ G(x_a − x_b)` sums to one so that `ρ` keeps the mass of `f`.
#[derive(Debug, Clone)]
pub struct GridEntropy {
    grid: GridSpec,
    k: Vec<f64>,
}

impl GridEntropy {
    pub fn new(grid: GridSpec, kernel: &Kernel) -> Result<Self> {
        if kernel.dim() != grid.dim {
            return Err(Error::param("kernel and grid dimensions differ"));
        }
        let m = grid.len();
        let pts = grid.points();
        let mut k = alloc::vec![0.0; m * m];
        for b in 0..m {
            let mut col = 0.0;
            for a in 0..m {
                let g = kernel.eval(&crate::linalg::sub(&pts[a], &pts[b]));
                k[a * m + b] = g;
                col += g;
            }
            for a in 0..m {
                k[a * m + b] /= col;
            }
        }
        Ok(GridEntropy { grid, k })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    fn rho(&self, f: &[f64]) -> Vec<f64> {
        let m = self.grid.len();
        (0..m).map(|a| self.k[a * m..(a + 1) * m].iter().zip(f).map(|(k, x)| k * x).sum()).collect()
    }

    pub fn value(&self, f: &[f64]) -> f64 {
        let c = self.grid.cell_volume();
        self.rho(f).iter().map(|r| if *r > 0.0 { r * math::log(*r) } else { 0.0 }).sum::<f64>() * c
    }

    /// Value and first variation `ψ_b = Σ_a K_ab (log ρ_a + 1)`; the
    /// gradient in the grid values is `c ψ`.
    pub fn first_variation(&self, f: &[f64]) -> (f64, Vec<f64>) {
        let m = self.grid.len();
        let c = self.grid.cell_volume();
        let rho = self.rho(f);
        let lg: Vec<f64> = rho.iter().map(|r| math::log(r.max(1e-300)) + 1.0).collect();
        let value = rho.iter().zip(&lg).map(|(r, l)| r * (l - 1.0)).sum::<f64>() * c;
        let mut psi = alloc::vec![0.0; m];
        for a in 0..m {
            for (p, k) in psi.iter_mut().zip(&self.k[a * m..(a + 1) * m]) {
                *p += k * lg[a];
            }
        }
        (value, psi)
    }
}

/// `−C √(1 + (E + ε² m₂(G))/ε²)` with `E = m₂(μ)` and `C` the logarithmic
/// bound of [`kernels::carlen_carvalho_bound`]: the negative part of
/// `ρ log ρ` is at most `C⟨v/ε⟩ρ`, then Cauchy–Schwarz.
pub fn entropy_lower_bound<M: Measure>(mu: &M, kernel: &Kernel) -> Result<f64> {
    let e = core::moment(mu, 2.0);
    let c = kernels::carlen_carvalho_bound(mu, kernel, e)?;
    let eps = kernel.epsilon();
    let m2 = e + eps * eps * kernel.unscaled_moment(2.0);
    Ok(-c * math::sqrt(1.0 + m2 / (eps * eps)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JkoConfig {
    pub tau: f64,
    pub steps: usize,
    /// Slices, floor and optimizer settings of the inner path.
    pub inner: DistanceOptions,
    pub params: ModelParams,
}

impl JkoConfig {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::param("tau must be positive"));
        }
        if self.inner.k == 0 || !(self.inner.rel_tol > 0.0) || !(self.inner.floor > 0.0) || self.inner.max_iter == 0 {
            return Err(Error::param("inner solver needs k >= 1 and positive tolerances"));
        }
        Ok(())
    }
}

/// Outcome of one proximal step.
#[derive(Debug, Clone)]
pub struct JkoStep {
    pub density: GridDensity,
    pub entropy: f64,
    pub prev_entropy: f64,
    /// Action of the optimal path to the new density, an upper bound for
    /// `d_L²`.
    pub d2: f64,
    /// `H_ε(ν) + d²/(2τ)`.
    pub objective: f64,
    pub iterations: usize,
}

/// Operator and entropy on a fixed grid, reused across steps.
#[derive(Debug, Clone)]
pub struct JkoSolver {
    op: GrazingOperator,
    entropy: GridEntropy,
    cfg: JkoConfig,
}

impl JkoSolver {
    pub fn new(grid: GridSpec, cfg: JkoConfig) -> Result<Self> {
        cfg.validate()?;
        if cfg.params.dim != grid.dim {
            return Err(Error::param("model and grid dimensions differ"));
        }
        let op = GrazingOperator::new(grid, cfg.params.gamma)?;
        let entropy = GridEntropy::new(grid, &Kernel::new(cfg.params)?)?;
        Ok(JkoSolver { op, entropy, cfg })
    }

    pub fn operator(&self) -> &GrazingOperator {
        &self.op
    }

    pub fn entropy(&self) -> &GridEntropy {
        &self.entropy
    }

    pub fn config(&self) -> &JkoConfig {
        &self.cfg
    }

    fn lbfgs_options(&self) -> LbfgsOptions {
        LbfgsOptions { max_iter: self.cfg.inner.max_iter, rel_tol: self.cfg.inner.rel_tol, ..LbfgsOptions::default() }
    }

    fn check(&self, f: &GridDensity) -> Result<()> {
        if f.grid() != self.op.grid() {
            return Err(Error::param("density must live on the solver's grid"));
        }
        if f.values().iter().any(|v| !(*v >= self.cfg.inner.floor)) {
            return Err(Error::Infeasible("density below the floor".into()));
        }
        Ok(())
    }

    /// Minimizes `H_ε(μ_K) + (1/2τ) Σ_j |μ_{j+1} − μ_j|²_{L(μ̄_j)⁺}/Δt` jointly
    /// over the path `μ_1, …, μ_K` starting at `prev`. The iteration starts
    /// from the constant path and only accepts decreasing steps, so the
    /// objective never exceeds `H_ε(prev)`.
    pub fn step(&self, prev: &GridDensity) -> Result<JkoStep> {
        self.check(prev)?;
        let m = self.op.grid().len();
        let k = self.cfg.inner.k;
        let tau = self.cfg.tau;
        let prob = PathProblem { op: &self.op, start: prev.values(), end: None, k, floor: self.cfg.inner.floor };
        let x0: Vec<f64> = prev.values().iter().copied().cycle().take(k * m).collect();
        let ret = Retraction::new(&self.op, prev.values(), &x0);
        let objective = |x: &[f64]| -> Option<(f64, Vec<f64>, f64)> {
            let ev = prob.eval(x)?;
            let last = &x[(k - 1) * m..];
            let (h, psi) = self.entropy.first_variation(last);
            let c = self.op.grid().cell_volume();
            let mut g: Vec<f64> = ev.grad.iter().map(|v| v / (2.0 * tau)).collect();
            for (gi, p) in g[(k - 1) * m..].iter_mut().zip(&psi) {
                *gi += c * p;
            }
            Some((h + ev.cost / (2.0 * tau), g, ev.cost))
        };
        let res = lbfgs::minimize(
            |u| {
                let x = ret.map(u)?;
                let (v, g, _) = objective(&x)?;
                Some((v, ret.pull_back(&x, &g)?))
            },
            ret.vars_of(&x0),
            &self.lbfgs_options(),
        )
        .ok_or_else(|| Error::Infeasible("previous density is singular for the path solver".into()))?;
        if !res.converged && res.last_change > 1e-8 {
            return Err(Error::NotConverged { iterations: res.iterations, residual: res.last_change });
        }
        let x = ret.map(&res.x).ok_or_else(|| Error::Infeasible("moment constraints lost".into()))?;
        let (obj, _, d2) = objective(&x).ok_or_else(|| Error::Infeasible("optimizer left the domain".into()))?;
        let density = GridDensity::new(*self.op.grid(), x[(k - 1) * m..].to_vec())?;
        Ok(JkoStep {
            entropy: self.entropy.value(density.values()),
            prev_entropy: self.entropy.value(prev.values()),
            density,
            d2,
            objective: obj,
            iterations: res.iterations,
        })
    }

    /// Minimizer of `H_ε` among grid densities with the conserved quantities
    /// of `f`. When the kernel is wide compared with the grid spacing, `H_ε`
    /// does not see grid-scale oscillations and the minimizer degenerates
    /// onto a sublattice with vanishing values elsewhere.
    pub fn entropy_minimizer(&self, f: &GridDensity) -> Result<GridDensity> {
        self.check(f)?;
        let ret = Retraction::new(&self.op, f.values(), f.values());
        let c = self.op.grid().cell_volume();
        let res = lbfgs::minimize(
            |u| {
                let x = ret.map(u)?;
                let (h, psi) = self.entropy.first_variation(&x);
                let g: Vec<f64> = psi.iter().map(|p| c * p).collect();
                Some((h, ret.pull_back(&x, &g)?))
            },
            ret.vars_of(f.values()),
            &self.lbfgs_options(),
        )
        .ok_or_else(|| Error::Infeasible("density is singular".into()))?;
        if !res.converged && res.last_change > 1e-8 {
            return Err(Error::NotConverged { iterations: res.iterations, residual: res.last_change });
        }
        let x = ret.map(&res.x).ok_or_else(|| Error::Infeasible("moment constraints lost".into()))?;
        GridDensity::new(*self.op.grid(), x)
    }

    pub fn diagnostics(&self, f: &GridDensity) -> Diagnostics {
        let (h, psi) = self.entropy.first_variation(f.values());
        Diagnostics {
            mass: core::mass(f),
            momentum: core::momentum(f),
            energy: core::energy(f),
            entropy: Some(core::boltzmann_entropy(f)),
            regularized_entropy: h,
            dissipation: grazing_metric::grid_dissipation(&self.op, f.values(), &psi),
        }
    }

    /// Piecewise-constant interpolant recorded at `t = nτ`.
    pub fn curve(&self, mu0: &GridDensity) -> Result<JkoCurve> {
        self.check(mu0)?;
        let mut trajectory = Trajectory::new();
        trajectory.push(0.0, mu0.clone(), self.diagnostics(mu0))?;
        let mut steps = Vec::with_capacity(self.cfg.steps);
        let mut cur = mu0.clone();
        for n in 1..=self.cfg.steps {
            let st = self.step(&cur)?;
            cur = st.density.clone();
            trajectory.push(n as f64 * self.cfg.tau, cur.clone(), self.diagnostics(&cur))?;
            steps.push(st);
        }
        Ok(JkoCurve { trajectory, steps, tau: self.cfg.tau })
    }
}

#[derive(Debug, Clone)]
pub struct JkoCurve {
    pub trajectory: Trajectory<GridDensity>,
    pub steps: Vec<JkoStep>,
    pub tau: f64,
}

impl JkoCurve {
    /// `ν_n` for `t ∈ ((n−1)τ, nτ]`.
    pub fn at(&self, t: f64) -> &GridDensity {
        let states = self.trajectory.states();
        let n = math::ceil(t / self.tau - 1e-9).max(0.0) as usize;
        &states[n.min(states.len() - 1)]
    }

    /// Largest `H_ε(ν_n) + d²/(2τ) − H_ε(ν_{n−1})`.
    pub fn worst_descent_excess(&self) -> f64 {
        self.steps
            .iter()
            .map(|s| s.entropy + s.d2 / (2.0 * self.tau) - s.prev_entropy)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

pub fn jko_step(prev: &GridDensity, cfg: &JkoConfig) -> Result<JkoStep> {
    JkoSolver::new(*prev.grid(), *cfg)?.step(prev)
}

pub fn jko_curve(mu0: &GridDensity, cfg: &JkoConfig) -> Result<JkoCurve> {
    JkoSolver::new(*mu0.grid(), *cfg)?.curve(mu0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeOptions {
    pub aux_n: usize,
    pub lipschitz_samples: usize,
    pub fixed_point: FixedPointOptions,
}

impl SlopeOptions {
    pub fn for_dim(dim: usize) -> Self {
        SlopeOptions { aux_n: default_aux_n(dim), lipschitz_samples: 400, fixed_point: FixedPointOptions::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeEstimate {
    /// `√D^{R1,R2}(μ₀)`.
    pub sqrt_d_reduced: f64,
    /// `(H_ε(μ₀) − H_ε(μ_t)) / ∫_0^t |μ̇|`.
    pub slope_est: f64,
    /// `2|q(t) − q(t/2)|`, the first-order time error of the quotient.
    pub budget: f64,
    pub t: f64,
    pub t_max: f64,
}

impl SlopeEstimate {
    pub fn holds(&self) -> bool {
        self.sqrt_d_reduced <= self.slope_est + self.budget
    }
}

fn slope_quotient(mu: &ParticleEnsemble, field: &FrozenField, t: f64, c: &aux_flow::LipschitzConstants, opts: &FixedPointOptions) -> Result<f64> {
    let sol = aux_flow::fixed_point_solve(mu, field, t, c, opts)?;
    let q = field.quadrature();
    let drop = q.entropy(mu) - q.entropy(sol.curve.states.last().unwrap());
    let speeds: Vec<f64> = sol.curve.states.iter().map(|s| math::sqrt(aux_flow::curve_action(s, field))).collect();
    let length: f64 = sol.curve.times.windows(2).zip(speeds.windows(2)).map(|(t, s)| 0.5 * (t[1] - t[0]) * (s[0] + s[1])).sum();
    Ok(if length > 0.0 { drop / length } else { 0.0 })
}

/// Reduced dissipation of `μ₀` against the entropy-drop-per-length of the
/// auxiliary transport curve on `[0, min(T_max/2, 0.01)]`. The curve length
/// bounds `d_L(μ₀, μ_t)` from above, so the quotient bounds the true one from
/// below.
pub fn slope_lower_bound(mu0: &GridDensity, cutoffs: Cutoffs, params: &ModelParams, opts: &SlopeOptions) -> Result<SlopeEstimate> {
    params.validate()?;
    let ens = ParticleEnsemble::from_grid(mu0)?;
    let field = FrozenField::new(&ens, Kernel::new(*params)?, params.gamma, cutoffs, opts.aux_n)?;
    let sqrt_d_reduced = math::sqrt(aux_flow::reduced_dissipation(&ens, &field));
    let c = aux_flow::lipschitz_constants(&field, opts.lipschitz_samples);
    let t_max = c.t_max();
    let t = f64::min(0.5 * t_max, 0.01);
    let q = slope_quotient(&ens, &field, t, &c, &opts.fixed_point)?;
    let q_half = slope_quotient(&ens, &field, 0.5 * t, &c, &opts.fixed_point)?;
    Ok(SlopeEstimate { sqrt_d_reduced, slope_est: q, budget: 2.0 * math::fabs(q - q_half) + 1e-10, t, t_max })
}

/// Pairwise energy-dissipation residuals
/// `H_ε(μ_r) − H_ε(μ_s) + ½∫_s^r D_ε + ½∫_s^r |μ̇|²` of a recorded curve.
#[derive(Debug, Clone, PartialEq)]
pub struct EdiCertificate {
    entropy: Vec<f64>,
    cumulative: Vec<f64>,
    pub tolerance: f64,
    pub worst: f64,
    pub worst_pair: (usize, usize),
    pub pass: bool,
}

impl EdiCertificate {
    pub fn residual(&self, s: usize, r: usize) -> f64 {
        self.entropy[r] - self.entropy[s] + self.cumulative[r] - self.cumulative[s]
    }

    pub fn pair_count(&self) -> usize {
        let n = self.entropy.len();
        n * n.saturating_sub(1) / 2
    }
}

/// `speeds` holds `|μ̇|²` at each record; without it the curve is taken to
/// move at the gradient-flow speed `|μ̇|² = D_ε`.
pub fn edi_certificate<S>(traj: &Trajectory<S>, speeds: Option<&[f64]>, tol: f64) -> Result<EdiCertificate> {
    let t = traj.times();
    let d = traj.diagnostics();
    if let Some(v) = speeds {
        if v.len() != t.len() {
            return Err(Error::param("need one speed per record"));
        }
    }
    let speed = |k: usize| speeds.map_or(d[k].dissipation, |v| v[k]);
    let entropy: Vec<f64> = d.iter().map(|x| x.regularized_entropy).collect();
    let mut cumulative = Vec::with_capacity(t.len());
    let mut acc = 0.0;
    for k in 0..t.len() {
        if k > 0 {
            let a = d[k - 1].dissipation + speed(k - 1);
            let b = d[k].dissipation + speed(k);
            acc += 0.25 * (t[k] - t[k - 1]) * (a + b);
        }
        cumulative.push(acc);
    }
    let mut cert = EdiCertificate { entropy, cumulative, tolerance: tol, worst: 0.0, worst_pair: (0, 0), pass: true };
    let mut worst = f64::NEG_INFINITY;
    for s in 0..t.len() {
        for r in (s + 1)..t.len() {
            let v = cert.residual(s, r);
            if v > worst {
                worst = v;
                cert.worst_pair = (s, r);
            }
        }
    }
    cert.worst = if worst.is_finite() { worst } else { 0.0 };
    cert.pass = cert.worst <= tol;
    Ok(cert)
}
