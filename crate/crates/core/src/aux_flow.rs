//! Transport with a cutoff velocity field built from a frozen first
//! variation:
//!
//! ```text
//! ∂_t μ = ∇·(μ φ(v) ∫ φ(v_*) ψ(v − v_*) |v − v_*|^{γ+2} Π[v − v_*](J₀(v) − J₀(v_*)) dμ(v_*)),
//! ```
//!
//! with `J₀ = ∇G * log(μ₀ * G)` fixed at the initial measure. Solved by Picard
//! iteration on particle curves.

use alloc::vec::Vec;

use crate::collision::{EntropyQuadrature, EntropyState};
use crate::core::{Measure, ParticleEnsemble};
use crate::error::{Error, Result};
use crate::init::splitmix64;
use crate::kernels::Kernel;
use crate::linalg::{self, Vec3, ZERO};
use crate::math;
use crate::particle_solver::default_aux_margin;

/// Quintic smoothstep on `[0, 1]`, clamped outside.
pub fn smoothstep(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x >= 1.0 {
        1.0
    } else {
        x * x * x * (10.0 + x * (-15.0 + 6.0 * x))
    }
}

/// `φ = 1` on `|v| ≤ R1`, `0` on `|v| ≥ R1 + 1`; `ψ = 0` on `|z| ≤ 1/R2`,
/// `1` on `|z| ≥ 2/R2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cutoffs {
    pub r1: f64,
    pub r2: f64,
}

impl Cutoffs {
    pub fn new(r1: f64, r2: f64) -> Result<Self> {
        if !(r1 > 0.0 && r2 > 0.0 && r1.is_finite() && r2.is_finite()) {
            return Err(Error::param("cutoff radii must be positive"));
        }
        Ok(Cutoffs { r1, r2 })
    }

    pub fn phi(&self, v: &Vec3) -> f64 {
        1.0 - smoothstep(linalg::norm(v) - self.r1)
    }

    pub fn psi(&self, z: &Vec3) -> f64 {
        smoothstep(self.r2 * linalg::norm(z) - 1.0)
    }

    /// Radius outside which the field vanishes.
    pub fn outer(&self) -> f64 {
        self.r1 + 1.0
    }
}

/// `J₀` frozen at `μ₀`, with the cutoffs and the exponent `γ`.
#[derive(Debug, Clone)]
pub struct FrozenField {
    quad: EntropyQuadrature,
    state: EntropyState,
    gamma: f64,
    cutoffs: Cutoffs,
    scale: f64,
}

impl FrozenField {
    /// Quadrature grid with `aux_n` nodes per axis covering `μ₀`. The grid
    /// does not depend on the cutoffs, so neither does `J₀`.
    pub fn new<M: Measure>(mu0: &M, kernel: Kernel, gamma: f64, cutoffs: Cutoffs, aux_n: usize) -> Result<Self> {
        if !(-4.0..=0.0).contains(&gamma) {
            return Err(Error::param("gamma must lie in [-4, 0]"));
        }
        let d = mu0.dim();
        let mut half = 0.0f64;
        for i in 0..mu0.atom_count() {
            let (v, _) = mu0.atom(i);
            half = v[..d].iter().fold(half, |h, x| h.max(math::fabs(*x)));
        }
        let grid = crate::core::GridSpec::new(d, half + default_aux_margin(kernel.epsilon()), aux_n)?;
        let quad = EntropyQuadrature::new(kernel, grid)?;
        Ok(Self::with_quadrature(quad, mu0, gamma, cutoffs))
    }

    pub fn with_quadrature<M: Measure>(quad: EntropyQuadrature, mu0: &M, gamma: f64, cutoffs: Cutoffs) -> Self {
        let state = quad.state(mu0);
        FrozenField { quad, state, gamma, cutoffs, scale: 1.0 }
    }

    /// Same field with `J₀` multiplied by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        FrozenField { scale: self.scale * s, ..self.clone() }
    }

    pub fn cutoffs(&self) -> &Cutoffs {
        &self.cutoffs
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn dim(&self) -> usize {
        self.quad.grid.dim
    }

    pub fn quadrature(&self) -> &EntropyQuadrature {
        &self.quad
    }

    pub fn j0(&self, v: &Vec3) -> Vec3 {
        linalg::scale(&self.quad.first_variation_grad(&self.state, v), self.scale)
    }

    /// `(φφ_*ψ|z|^{γ+2}, Π[z](J₀(v) − J₀(w)))`, the scalar weight and the
    /// projected difference.
    fn parts(&self, v: &Vec3, jv: &Vec3, w: &Vec3, jw: &Vec3) -> (f64, Vec3) {
        let z = linalg::sub(v, w);
        let psi = self.cutoffs.psi(&z);
        if psi == 0.0 || self.dim() == 1 {
            return (0.0, ZERO);
        }
        let weight = self.cutoffs.phi(v) * self.cutoffs.phi(w) * psi * math::pow(linalg::norm(&z), self.gamma + 2.0);
        (weight, linalg::project_perp(&z, &linalg::sub(jv, jw)))
    }

    /// `F(v, w)`.
    pub fn pair(&self, v: &Vec3, w: &Vec3) -> Vec3 {
        let (a, p) = self.parts(v, &self.j0(v), w, &self.j0(w));
        linalg::scale(&p, a)
    }
}

/// `U[μ](v) = −Σ_j w_j F(v, v_j)`.
pub fn velocity_u(mu: &ParticleEnsemble, field: &FrozenField, v: &Vec3) -> Vec3 {
    let jv = field.j0(v);
    let mut u = ZERO;
    for (x, w) in mu.positions().iter().zip(mu.weights()) {
        let (a, p) = field.parts(v, &jv, x, &field.j0(x));
        linalg::axpy(&mut u, -w * a, &p);
    }
    u
}

/// `U[μ]` at each of `targets`, with `J₀` evaluated once per point.
fn velocities(targets: &[Vec3], sources: &[Vec3], weights: &[f64], field: &FrozenField) -> Vec<Vec3> {
    let js: Vec<Vec3> = sources.iter().map(|x| field.j0(x)).collect();
    linalg::par_map(targets.len(), |i| {
        let v = &targets[i];
        let jv = field.j0(v);
        let mut u = ZERO;
        for ((x, jx), w) in sources.iter().zip(&js).zip(weights) {
            let (a, p) = field.parts(v, &jv, x, jx);
            if a != 0.0 {
                linalg::axpy(&mut u, -w * a, &p);
            }
        }
        u
    })
}

/// `½ Σ_{i,j} w_i w_j φφ_*ψ|z|^{γ+2}|Π(J₀ − J₀_*)|²` when `power = 1`, or the
/// same with the cutoffs squared when `power = 2`.
fn pair_quadratic(mu: &ParticleEnsemble, field: &FrozenField, power: i32) -> f64 {
    let pos = mu.positions();
    let w = mu.weights();
    let js: Vec<Vec3> = pos.iter().map(|x| field.j0(x)).collect();
    let mut acc = 0.0;
    for i in 0..pos.len() {
        for j in (i + 1)..pos.len() {
            let (a, p) = field.parts(&pos[i], &js[i], &pos[j], &js[j]);
            if a == 0.0 {
                continue;
            }
            let cut = if power == 2 {
                let z = linalg::sub(&pos[i], &pos[j]);
                let r = linalg::norm(&z);
                a * a / math::pow(r, field.gamma + 2.0)
            } else {
                a
            };
            acc += w[i] * w[j] * cut * linalg::norm2(&p);
        }
    }
    acc
}

/// Reduced dissipation `D^{R1,R2}(μ)` with `J₀` frozen.
pub fn reduced_dissipation(mu: &ParticleEnsemble, field: &FrozenField) -> f64 {
    pair_quadratic(mu, field, 1)
}

/// Action of the transport curve at `μ`: the reduced dissipation with
/// `φ², ψ²` in place of `φ, ψ`.
pub fn curve_action(mu: &ParticleEnsemble, field: &FrozenField) -> f64 {
    pair_quadratic(mu, field, 2)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LipschitzConstants {
    /// Sampled `sup |F|`.
    pub c_inf: f64,
    /// Sampled `sup |D_v F|` (Frobenius norm).
    pub c_lip: f64,
}

impl LipschitzConstants {
    /// `(1/C) log 2`, infinite for a vanishing field.
    pub fn t_max(&self) -> f64 {
        if self.c_lip > 0.0 {
            core::f64::consts::LN_2 / self.c_lip
        } else {
            f64::INFINITY
        }
    }
}

fn uniform01(seed: u64, stream: u64) -> f64 {
    (splitmix64(seed, stream) >> 11) as f64 / (1u64 << 53) as f64
}

fn sample_ball(dim: usize, radius: f64, seed: u64, k: u64) -> Vec3 {
    let mut seed = seed;
    loop {
        let mut v = ZERO;
        for (a, x) in v.iter_mut().enumerate().take(dim) {
            *x = radius * (2.0 * uniform01(seed, 4 * k + a as u64) - 1.0);
        }
        if linalg::norm(&v) <= radius {
            return v;
        }
        seed = seed.wrapping_add(0x9E37_79B9);
    }
}

/// Empirical sups of `|F|` and `|D_v F|` over `samples` pairs in `B_{R1+1}²`,
/// half of them near the `ψ` transition `|v − w| ∈ [1/(2R2), 3/R2]`.
pub fn lipschitz_constants(field: &FrozenField, samples: usize) -> LipschitzConstants {
    let d = field.dim();
    let r = field.cutoffs.outer();
    let h = 1e-6 * (1.0 + r);
    let mut c_inf = 0.0f64;
    let mut c_lip = 0.0f64;
    for k in 0..samples as u64 {
        let v = sample_ball(d, r, 11, 2 * k);
        let w = if k % 2 == 0 {
            sample_ball(d, r, 12, 2 * k + 1)
        } else {
            let mut dir = sample_ball(d, 1.0, 13, k);
            let n = linalg::norm(&dir).max(1e-12);
            let len = (0.5 + 2.5 * uniform01(14, k)) / field.cutoffs.r2;
            dir = linalg::scale(&dir, len / n);
            linalg::add(&v, &dir)
        };
        let jw = field.j0(&w);
        let f = |x: &Vec3| {
            let (a, p) = field.parts(x, &field.j0(x), &w, &jw);
            linalg::scale(&p, a)
        };
        c_inf = c_inf.max(linalg::norm(&f(&v)));
        let mut frob = 0.0;
        for a in 0..d {
            let mut vp = v;
            vp[a] += h;
            let mut vm = v;
            vm[a] -= h;
            let col = linalg::scale(&linalg::sub(&f(&vp), &f(&vm)), 0.5 / h);
            frob += linalg::norm2(&col);
        }
        c_lip = c_lip.max(math::sqrt(frob));
    }
    LipschitzConstants { c_inf, c_lip }
}

/// Particle curve on uniform time nodes, linear in time between nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxCurve {
    pub times: Vec<f64>,
    pub states: Vec<ParticleEnsemble>,
}

impl AuxCurve {
    pub fn constant(mu0: &ParticleEnsemble, t_end: f64, nodes: usize) -> Self {
        let nodes = nodes.max(2);
        AuxCurve {
            times: (0..nodes).map(|k| t_end * k as f64 / (nodes - 1) as f64).collect(),
            states: alloc::vec![mu0.clone(); nodes],
        }
    }

    /// Interpolated positions at time `t`.
    pub fn positions_at(&self, t: f64) -> Vec<Vec3> {
        let n = self.times.len();
        let t_end = self.times[n - 1];
        if t_end <= 0.0 || n == 1 {
            return self.states[0].positions().to_vec();
        }
        let x = (t / t_end * (n - 1) as f64).clamp(0.0, (n - 1) as f64);
        let k = (x as usize).min(n - 2);
        let s = x - k as f64;
        self.states[k]
            .positions()
            .iter()
            .zip(self.states[k + 1].positions())
            .map(|(a, b)| linalg::add(&linalg::scale(a, 1.0 - s), &linalg::scale(b, s)))
            .collect()
    }
}

/// Moves `starts` along `U[curve(t)]` from `t = 0`, recording positions at
/// each node time of `curve`; `substeps` RK4 steps per node interval.
fn transport_points(curve: &AuxCurve, field: &FrozenField, starts: &[Vec3], substeps: usize) -> Result<Vec<Vec<Vec3>>> {
    let weights = curve.states[0].weights();
    let limits: Vec<f64> = starts.iter().map(|v| linalg::norm(v).max(field.cutoffs.outer()) + 1e-8).collect();
    let rhs = |t: f64, x: &[Vec3]| velocities(x, &curve.positions_at(t), weights, field);
    let mut out = Vec::with_capacity(curve.times.len());
    let mut x = starts.to_vec();
    out.push(x.clone());
    for k in 1..curve.times.len() {
        let (t0, t1) = (curve.times[k - 1], curve.times[k]);
        let dt = (t1 - t0) / substeps as f64;
        for m in 0..substeps {
            let t = t0 + m as f64 * dt;
            let k1 = rhs(t, &x);
            let x2: Vec<Vec3> = x.iter().zip(&k1).map(|(a, b)| linalg::add(a, &linalg::scale(b, 0.5 * dt))).collect();
            let k2 = rhs(t + 0.5 * dt, &x2);
            let x3: Vec<Vec3> = x.iter().zip(&k2).map(|(a, b)| linalg::add(a, &linalg::scale(b, 0.5 * dt))).collect();
            let k3 = rhs(t + 0.5 * dt, &x3);
            let x4: Vec<Vec3> = x.iter().zip(&k3).map(|(a, b)| linalg::add(a, &linalg::scale(b, dt))).collect();
            let k4 = rhs(t + dt, &x4);
            for i in 0..x.len() {
                for a in 0..3 {
                    x[i][a] += dt / 6.0 * (k1[i][a] + 2.0 * k2[i][a] + 2.0 * k3[i][a] + k4[i][a]);
                }
                let speed = linalg::norm(&x[i]);
                if speed > limits[i] {
                    return Err(Error::StepDiverged { time: t + dt, speed, limit: limits[i] });
                }
            }
        }
        out.push(x.clone());
    }
    Ok(out)
}

/// Characteristic `Φ^t(v₀)` through the curve's field.
pub fn flow_map(curve: &AuxCurve, field: &FrozenField, v0: &Vec3, t: f64, substeps: usize) -> Result<Vec3> {
    let t_end = *curve.times.last().unwrap_or(&0.0);
    if !(0.0..=t_end).contains(&t) {
        return Err(Error::param("time outside the curve"));
    }
    if t == 0.0 {
        return Ok(*v0);
    }
    // Restrict the curve to [0, t] on the same number of nodes.
    let nodes = curve.times.len();
    let sub = AuxCurve {
        times: (0..nodes).map(|k| t * k as f64 / (nodes - 1) as f64).collect(),
        states: (0..nodes)
            .map(|k| curve.states[0].with_positions(curve.positions_at(t * k as f64 / (nodes - 1) as f64)))
            .collect::<Result<_>>()?,
    };
    let path = transport_points(&sub, field, &[*v0], substeps)?;
    Ok(path[nodes - 1][0])
}

/// `Φ_curve # μ₀` on the node times of `curve`.
pub fn push_forward(curve: &AuxCurve, field: &FrozenField, mu0: &ParticleEnsemble, substeps: usize) -> Result<AuxCurve> {
    let paths = transport_points(curve, field, mu0.positions(), substeps)?;
    Ok(AuxCurve {
        times: curve.times.clone(),
        states: paths.into_iter().map(|p| mu0.with_positions(p)).collect::<Result<_>>()?,
    })
}

/// Minimum-cost perfect matching for a square cost matrix (row-major).
fn hungarian(n: usize, cost: &[f64]) -> Vec<usize> {
    let inf = f64::INFINITY;
    let mut u = alloc::vec![0.0; n + 1];
    let mut v = alloc::vec![0.0; n + 1];
    let mut p = alloc::vec![0usize; n + 1];
    let mut way = alloc::vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = alloc::vec![inf; n + 1];
        let mut used = alloc::vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = alloc::vec![0usize; n];
    for j in 1..=n {
        assign[p[j] - 1] = j - 1;
    }
    assign
}

/// Exact `W₂` between equal-weight ensembles of the same size.
pub fn w2_exact(a: &ParticleEnsemble, b: &ParticleEnsemble) -> Result<f64> {
    let n = a.positions().len();
    if b.positions().len() != n {
        return Err(Error::param("ensembles differ in size"));
    }
    let w0 = 1.0 / n as f64;
    if a.weights().iter().chain(b.weights()).any(|w| math::fabs(w - w0) > 1e-12) {
        return Err(Error::param("exact assignment needs equal weights"));
    }
    let cost: Vec<f64> = a
        .positions()
        .iter()
        .flat_map(|x| b.positions().iter().map(move |y| linalg::norm2(&linalg::sub(x, y))))
        .collect();
    let assign = hungarian(n, &cost);
    Ok(math::sqrt(assign.iter().enumerate().map(|(i, &j)| cost[i * n + j]).sum::<f64>() * w0))
}

/// Squared `W₂` between weighted point sets on a line.
fn w2_line(x: &mut [(f64, f64)], y: &mut [(f64, f64)]) -> f64 {
    x.sort_by(|p, q| p.0.total_cmp(&q.0));
    y.sort_by(|p, q| p.0.total_cmp(&q.0));
    let (mut i, mut j) = (0, 0);
    let (mut rx, mut ry) = (x[0].1, y[0].1);
    let mut acc = 0.0;
    loop {
        let m = rx.min(ry);
        acc += m * (x[i].0 - y[j].0) * (x[i].0 - y[j].0);
        rx -= m;
        ry -= m;
        if rx <= 1e-15 {
            i += 1;
            if i == x.len() {
                break;
            }
            rx += x[i].1;
        }
        if ry <= 1e-15 {
            j += 1;
            if j == y.len() {
                break;
            }
            ry += y[j].1;
        }
    }
    acc
}

pub const SLICED_DIRECTIONS: usize = 64;

/// Sliced `W₂` over 64 fixed directions.
pub fn w2_sliced(a: &ParticleEnsemble, b: &ParticleEnsemble) -> f64 {
    let d = a.dim();
    let dirs: Vec<Vec3> = (0..SLICED_DIRECTIONS)
        .map(|k| match d {
            1 => [1.0, 0.0, 0.0],
            2 => {
                let th = core::f64::consts::PI * k as f64 / SLICED_DIRECTIONS as f64;
                [math::cos(th), math::sin(th), 0.0]
            }
            _ => {
                // Fibonacci points on the sphere.
                let zc = 1.0 - (2.0 * k as f64 + 1.0) / SLICED_DIRECTIONS as f64;
                let rr = math::sqrt(1.0 - zc * zc);
                let th = k as f64 * core::f64::consts::PI * (3.0 - math::sqrt(5.0));
                [rr * math::cos(th), rr * math::sin(th), zc]
            }
        })
        .collect();
    let mut total = 0.0;
    for e in &dirs {
        let mut x: Vec<(f64, f64)> = a.positions().iter().zip(a.weights()).map(|(p, w)| (linalg::dot(p, e), *w)).collect();
        let mut y: Vec<(f64, f64)> = b.positions().iter().zip(b.weights()).map(|(p, w)| (linalg::dot(p, e), *w)).collect();
        total += w2_line(&mut x, &mut y);
    }
    math::sqrt(total / dirs.len() as f64)
}

/// Largest exact-assignment problem.
pub const EXACT_W2_MAX: usize = 256;

/// `W₂` by exact assignment when the ensembles have equal weights and at most
/// 256 atoms, otherwise the sliced estimate; the flag marks the latter.
pub fn w2(a: &ParticleEnsemble, b: &ParticleEnsemble) -> (f64, bool) {
    let n = a.positions().len();
    if n <= EXACT_W2_MAX && n == b.positions().len() {
        if let Ok(d) = w2_exact(a, b) {
            return (d, false);
        }
    }
    (w2_sliced(a, b), true)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPointOptions {
    pub nodes: usize,
    pub substeps: usize,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for FixedPointOptions {
    fn default() -> Self {
        FixedPointOptions { nodes: 32, substeps: 4, tol: 1e-8, max_iter: 50 }
    }
}

#[derive(Debug, Clone)]
pub struct FixedPointResult {
    pub curve: AuxCurve,
    pub iterations: usize,
    /// `sup_t W₂` between successive iterates.
    pub distances: Vec<f64>,
    /// Ratios of successive distances above rounding level.
    pub ratios: Vec<f64>,
    /// `e^{C T} − 1`.
    pub contraction_bound: f64,
    pub sliced: bool,
}

/// Picard iteration `μ ↦ Φ_μ # μ₀` on `[0, T]`.
pub fn fixed_point_solve(
    mu0: &ParticleEnsemble,
    field: &FrozenField,
    t_end: f64,
    constants: &LipschitzConstants,
    opts: &FixedPointOptions,
) -> Result<FixedPointResult> {
    if !(t_end > 0.0) {
        return Err(Error::param("time horizon must be positive"));
    }
    let t_max = constants.t_max();
    if t_end >= t_max {
        return Err(Error::TimeTooLarge { t: t_end, t_max });
    }
    if opts.nodes < 2 || opts.substeps == 0 || !(opts.tol > 0.0) {
        return Err(Error::param("need at least 2 nodes, 1 substep and a positive tolerance"));
    }
    let mut curve = AuxCurve::constant(mu0, t_end, opts.nodes);
    let mut distances = Vec::new();
    let mut sliced = false;
    for it in 1..=opts.max_iter {
        let next = push_forward(&curve, field, mu0, opts.substeps)?;
        let mut sup = 0.0f64;
        for (a, b) in next.states.iter().zip(&curve.states) {
            let (d, s) = w2(a, b);
            sliced |= s;
            sup = sup.max(d);
        }
        distances.push(sup);
        curve = next;
        if sup < opts.tol {
            let ratios = distances
                .windows(2)
                .filter(|w| w[0] > 1e-12 && w[1] > 1e-12)
                .map(|w| w[1] / w[0])
                .collect();
            return Ok(FixedPointResult {
                curve,
                iterations: it,
                distances,
                ratios,
                contraction_bound: math::exp(constants.c_lip * t_end) - 1.0,
                sliced,
            });
        }
    }
    Err(Error::NotConverged { iterations: opts.max_iter, residual: *distances.last().unwrap_or(&f64::NAN) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core::{moment, ModelParams};
    use crate::init;
    use rand::SeedableRng;

    fn setup(gamma: f64, r1: f64, r2: f64) -> (ParticleEnsemble, FrozenField) {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let mu = init::sample_gaussian(&mut rng, 2, 24, &ZERO, &[1.5, 0.6, 0.0]).unwrap();
        let k = Kernel::new(ModelParams::new(2, gamma, 0.5, 1.0).unwrap()).unwrap();
        let f = FrozenField::new(&mu, k, gamma, Cutoffs::new(r1, r2).unwrap(), 40).unwrap();
        (mu, f)
    }

    #[test]
    fn cutoff_plateaus() {
        let c = Cutoffs::new(2.0, 4.0).unwrap();
        assert_eq!(c.phi(&[1.9, 0.0, 0.0]), 1.0);
        assert_eq!(c.phi(&[0.0, 3.0, 0.0]), 0.0);
        assert_eq!(c.psi(&[0.2, 0.0, 0.0]), 0.0);
        assert_eq!(c.psi(&[0.0, 0.0, 0.6]), 1.0);
        let mid = c.phi(&[2.5, 0.0, 0.0]);
        assert!(mid > 0.0 && mid < 1.0);
    }

    #[test]
    fn pair_field_is_antisymmetric_and_supported() {
        let (_, f) = setup(-1.0, 2.0, 3.0);
        for k in 0..50 {
            let v = sample_ball(2, 3.5, 1, k);
            let w = sample_ball(2, 3.5, 2, k);
            let a = f.pair(&v, &w);
            let b = f.pair(&w, &v);
            assert!(linalg::norm(&linalg::add(&a, &b)) <= 1e-14 * (1.0 + linalg::norm(&a)));
            if linalg::norm(&v) >= 3.0 {
                assert_eq!(linalg::norm(&a), 0.0);
            }
        }
        let mu = ParticleEnsemble::uniform(2, alloc::vec![[0.3, 0.1, 0.0]]).unwrap();
        assert_eq!(velocity_u(&mu, &f, &[0.3, 0.1, 0.0]), ZERO);
        let far = [4.0, 0.0, 0.0];
        let (mu0, _) = setup(-1.0, 2.0, 3.0);
        assert_eq!(velocity_u(&mu0, &f, &far), ZERO);
    }

    #[test]
    fn constants_scale_and_bound_the_velocity() {
        let (mu, f) = setup(0.0, 2.0, 3.0);
        let c = lipschitz_constants(&f, 400);
        assert!(c.c_inf > 0.0 && c.c_lip > 0.0);
        let c2 = lipschitz_constants(&f.scaled(2.0), 400);
        assert!((c2.c_inf - 2.0 * c.c_inf).abs() < 1e-9 * c.c_inf);
        assert!((c2.c_lip - 2.0 * c.c_lip).abs() < 1e-6 * c.c_lip);
        for k in 0..200 {
            let v = sample_ball(2, 3.0, 5, k);
            assert!(linalg::norm(&velocity_u(&mu, &f, &v)) <= c.c_inf * 1.05);
        }
    }

    #[test]
    fn hungarian_matches_brute_force() {
        let pts: Vec<Vec3> = (0..6).map(|k| sample_ball(2, 2.0, 3, k)).collect();
        let qts: Vec<Vec3> = (0..6).map(|k| sample_ball(2, 2.0, 4, k)).collect();
        let a = ParticleEnsemble::uniform(2, pts.clone()).unwrap();
        let b = ParticleEnsemble::uniform(2, qts.clone()).unwrap();
        let mut best = f64::INFINITY;
        let mut perm: Vec<usize> = (0..6).collect();
        // Heap's algorithm over all 720 permutations.
        fn heap(k: usize, perm: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
            if k == 1 {
                f(perm);
                return;
            }
            for i in 0..k {
                heap(k - 1, perm, f);
                if k % 2 == 0 { perm.swap(i, k - 1) } else { perm.swap(0, k - 1) }
            }
        }
        heap(6, &mut perm, &mut |p| {
            let c: f64 = p.iter().enumerate().map(|(i, &j)| linalg::norm2(&linalg::sub(&pts[i], &qts[j]))).sum();
            best = best.min(c);
        });
        assert!((w2_exact(&a, &b).unwrap() - math::sqrt(best / 6.0)).abs() < 1e-12);
        assert!(w2_sliced(&a, &b) <= w2_exact(&a, &b).unwrap() + 1e-12);
        assert_eq!(w2_exact(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn outside_points_do_not_move() {
        let (mu, f) = setup(0.0, 2.0, 3.0);
        let curve = AuxCurve::constant(&mu, 0.05, 8);
        let v0 = [3.2, 0.5, 0.0];
        assert_eq!(flow_map(&curve, &f, &v0, 0.05, 4).unwrap(), v0);
    }

    #[test]
    fn picard_contracts_and_conserves_energy() {
        let (mu, f) = setup(0.0, 2.0, 3.0);
        let c = lipschitz_constants(&f, 400);
        let t = 0.9 * c.t_max();
        let res = fixed_point_solve(&mu, &f, t, &c, &FixedPointOptions::default()).unwrap();
        assert!(!res.sliced);
        assert!(res.contraction_bound < 1.0);
        for r in &res.ratios {
            assert!(*r <= res.contraction_bound, "{r} {}", res.contraction_bound);
        }
        let m0 = moment(&mu, 2.0);
        let m1 = moment(res.curve.states.last().unwrap(), 2.0);
        assert!((m0 - m1).abs() < 1e-6 * m0, "{m0} {m1}");
        assert!(matches!(
            fixed_point_solve(&mu, &f, 1.01 * c.t_max(), &c, &FixedPointOptions::default()),
            Err(Error::TimeTooLarge { .. })
        ));
    }
}
