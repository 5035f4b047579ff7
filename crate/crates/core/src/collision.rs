//! Landau collision structure: projection, tilde-gradient, the non-local
//! velocity field of the regularized flow, dissipation functionals, and the
//! weighted Fisher diagnostics.

use crate::math;
use alloc::vec::Vec;

use crate::core::{GridDensity, GridSpec, Measure, ENTROPY_FLOOR};
use crate::error::{Error, Result};
use crate::kernels::Kernel;
use crate::linalg::{self, par_map, Mat3, Vec3, ZERO};

/// Below this separation two points are treated as coincident.
pub const COINCIDENT: f64 = 1e-14;

/// `Π[z] = I − z⊗z/|z|²` in the first `dim` coordinates.
pub fn projection(z: &Vec3, dim: usize) -> Result<Mat3> {
    let r2 = linalg::norm2(z);
    if math::sqrt(r2) < COINCIDENT {
        return Err(Error::ZeroRelativeVelocity);
    }
    let mut p = [[0.0; 3]; 3];
    for i in 0..dim {
        for j in 0..dim {
            p[i][j] = if i == j { 1.0 } else { 0.0 } - z[i] * z[j] / r2;
        }
    }
    Ok(p)
}

/// `∇̃φ = |z|^{1+γ/2} Π[z](∇φ(v) − ∇φ(v_*))`, `z = v − v_*`.
pub fn tilde_grad<F: Fn(&Vec3) -> Vec3>(phi_grad: F, v: &Vec3, v_star: &Vec3, gamma: f64) -> Result<Vec3> {
    let z = linalg::sub(v, v_star);
    let r = linalg::norm(&z);
    if r < COINCIDENT {
        return Err(Error::ZeroRelativeVelocity);
    }
    let diff = linalg::sub(&phi_grad(v), &phi_grad(v_star));
    Ok(linalg::scale(&linalg::project_perp(&z, &diff), math::pow(r, 1.0 + 0.5 * gamma)))
}

/// Pair weight `|z|^{2+γ}` with the singular-pair policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairWeight {
    pub gamma: f64,
    /// Pairs closer than this are skipped when `γ + 2 < 0`. Zero means no
    /// cutoff: a coincident pair is then an error.
    pub delta_sing: f64,
}

impl PairWeight {
    pub fn new(gamma: f64, delta_sing: f64) -> Result<Self> {
        if !(-4.0..=0.0).contains(&gamma) {
            return Err(Error::param("gamma must lie in [-4, 0]"));
        }
        if !(delta_sing >= 0.0 && delta_sing.is_finite()) {
            return Err(Error::param("delta_sing must be non-negative"));
        }
        Ok(PairWeight { gamma, delta_sing })
    }

    fn singular(&self) -> bool {
        self.gamma + 2.0 < 0.0
    }

    /// `Some(|z|^{2+γ})` for a retained pair of distinct atoms, `None` if skipped.
    #[inline]
    pub fn strong(&self, r: f64) -> Result<Option<f64>> {
        if r < COINCIDENT {
            if self.singular() && self.delta_sing == 0.0 {
                return Err(Error::SingularPair { distance: r });
            }
            return Ok(None);
        }
        if self.singular() && r < self.delta_sing {
            return Ok(None);
        }
        Ok(Some(if self.gamma == 0.0 { r * r } else { math::pow(r, 2.0 + self.gamma) }))
    }
}

/// Quadrature for `H_ε(μ) = ∫(μ*G)log(μ*G)` on a fixed auxiliary grid:
/// `H = Σ_a ρ_a log ρ_a c` with `ρ_a = (μ*G)(x_a)`.
///
/// The first-variation gradient used everywhere is the exact gradient of the
/// discrete functional, `J(v) = Σ_a ∇G(v − x_a)(log ρ_a + 1)c`, so that the
/// particle flow satisfies the chain rule exactly in continuous time.
#[derive(Debug, Clone)]
pub struct EntropyQuadrature {
    pub kernel: Kernel,
    pub grid: GridSpec,
    nodes: Vec<Vec3>,
}

/// Frozen evaluation of the quadrature at one measure.
#[derive(Debug, Clone)]
pub struct EntropyState {
    pub entropy: f64,
    pub rho: Vec<f64>,
    /// `(log ρ_a + 1) c`.
    pub log_weights: Vec<f64>,
}

impl EntropyQuadrature {
    pub fn new(kernel: Kernel, grid: GridSpec) -> Result<Self> {
        if kernel.dim() != grid.dim {
            return Err(Error::param("kernel and grid dimensions differ"));
        }
        Ok(EntropyQuadrature { kernel, nodes: grid.points(), grid })
    }

    /// Grid covering the atoms' bounding box plus `margin`, `n` nodes per axis.
    pub fn covering<M: Measure>(kernel: Kernel, mu: &M, n: usize, margin: f64) -> Result<Self> {
        let d = mu.dim();
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for i in 0..mu.atom_count() {
            let (v, _) = mu.atom(i);
            for a in 0..d {
                lo[a] = lo[a].min(v[a]);
                hi[a] = hi[a].max(v[a]);
            }
        }
        let mut center = ZERO;
        let mut half = 0.0f64;
        for a in 0..d {
            center[a] = 0.5 * (lo[a] + hi[a]);
            half = half.max(0.5 * (hi[a] - lo[a]));
        }
        Self::new(kernel, GridSpec::with_center(d, center, half + margin, n)?)
    }

    pub fn nodes(&self) -> &[Vec3] {
        &self.nodes
    }

    /// Calls `f(a, z)` with `z = v − x_a` for every node within the kernel's
    /// support box around `v`.
    #[inline]
    fn for_each_near<F: FnMut(usize, &Vec3)>(&self, v: &Vec3, mut f: F) {
        let g = &self.grid;
        let h = g.spacing();
        let r = self.kernel.support_radius();
        let mut lo = [0usize; 3];
        let mut hi = [0usize; 3];
        for a in 0..g.dim {
            let x0 = g.center[a] - g.half_width;
            let l = math::ceil((v[a] - r - x0) / h);
            let u = math::floor((v[a] + r - x0) / h);
            if u < 0.0 || l > (g.n - 1) as f64 {
                return;
            }
            lo[a] = l.max(0.0) as usize;
            hi[a] = (u as usize).min(g.n - 1);
        }
        let r2 = r * r;
        let n = g.n;
        match g.dim {
            1 => {
                for i in lo[0]..=hi[0] {
                    let z = linalg::sub(v, &self.nodes[i]);
                    if linalg::norm2(&z) <= r2 {
                        f(i, &z);
                    }
                }
            }
            2 => {
                for i in lo[0]..=hi[0] {
                    for j in lo[1]..=hi[1] {
                        let k = i * n + j;
                        let z = linalg::sub(v, &self.nodes[k]);
                        if linalg::norm2(&z) <= r2 {
                            f(k, &z);
                        }
                    }
                }
            }
            _ => {
                for i in lo[0]..=hi[0] {
                    for j in lo[1]..=hi[1] {
                        let base = (i * n + j) * n;
                        for l in lo[2]..=hi[2] {
                            let k = base + l;
                            let z = linalg::sub(v, &self.nodes[k]);
                            if linalg::norm2(&z) <= r2 {
                                f(k, &z);
                            }
                        }
                    }
                }
            }
        }
    }

    /// `(a, G(v − x_a), q)` with `∇G = −q z`, for every node near each position.
    fn rows(&self, positions: &[Vec3]) -> Vec<Vec<(u32, f64, f64)>> {
        par_map(positions.len(), |i| {
            let mut row = Vec::with_capacity(self.nodes.len().min(4096));
            self.for_each_near(&positions[i], |a, z| {
                let (g, q) = self.kernel.eval_with_factor(z);
                row.push((a as u32, g, q));
            });
            row
        })
    }

    fn finish(&self, rho: Vec<f64>) -> EntropyState {
        let c = self.grid.cell_volume();
        let mut entropy = 0.0;
        let log_weights = rho
            .iter()
            .map(|&r| {
                if r < ENTROPY_FLOOR {
                    return (math::log(ENTROPY_FLOOR) + 1.0) * c;
                }
                let l = math::log(r);
                entropy += r * l;
                (l + 1.0) * c
            })
            .collect();
        EntropyState { entropy: entropy * c, rho, log_weights }
    }

    fn accumulate(&self, rows: &[Vec<(u32, f64, f64)>], weights: &[f64]) -> EntropyState {
        let mut rho = alloc::vec![0.0; self.nodes.len()];
        for (row, w) in rows.iter().zip(weights) {
            for &(a, g, _) in row {
                rho[a as usize] += w * g;
            }
        }
        self.finish(rho)
    }

    pub fn state<M: Measure>(&self, mu: &M) -> EntropyState {
        let (pos, w) = atoms_of(mu);
        self.accumulate(&self.rows(&pos), &w)
    }

    pub fn entropy<M: Measure>(&self, mu: &M) -> f64 {
        self.state(mu).entropy
    }

    /// `J(v) = Σ_a ∇G(v − x_a) ℓ_a`.
    pub fn first_variation_grad(&self, st: &EntropyState, v: &Vec3) -> Vec3 {
        let mut j = ZERO;
        self.for_each_near(v, |a, z| {
            let (_, q) = self.kernel.eval_with_factor(z);
            linalg::axpy(&mut j, -q * st.log_weights[a], z);
        });
        j
    }

    /// Jacobian `DJ(v) = Σ_a Hess G(v − x_a) ℓ_a`.
    pub fn first_variation_hessian(&self, st: &EntropyState, v: &Vec3) -> Mat3 {
        let mut h = [[0.0; 3]; 3];
        self.for_each_near(v, |a, z| {
            let hz = self.kernel.hessian(z);
            let l = st.log_weights[a];
            for r in 0..3 {
                for c in 0..3 {
                    h[r][c] += hz[r][c] * l;
                }
            }
        });
        h
    }

    /// Smooth interpolant of the first variation, `ψ(v) = Σ_a G(v − x_a) ℓ_a`.
    pub fn first_variation(&self, st: &EntropyState, v: &Vec3) -> f64 {
        let mut acc = 0.0;
        self.for_each_near(v, |a, z| acc += self.kernel.eval(z) * st.log_weights[a]);
        acc
    }

    /// Entropy and `J` at every position, with one kernel evaluation per
    /// (position, node) pair.
    pub fn entropy_and_gradients(&self, positions: &[Vec3], weights: &[f64]) -> (EntropyState, Vec<Vec3>) {
        let rows = self.rows(positions);
        let st = self.accumulate(&rows, weights);
        let j = par_map(positions.len(), |i| {
            let mut j = ZERO;
            for &(a, _, q) in &rows[i] {
                let z = linalg::sub(&positions[i], &self.nodes[a as usize]);
                linalg::axpy(&mut j, -q * st.log_weights[a as usize], &z);
            }
            j
        });
        (st, j)
    }
}

/// Pairwise velocities `U_i = −Σ_j w_j |z|^{2+γ} Π[z](J_i − J_j)` and the
/// dissipation `½Σ_{i≠j} w_i w_j |z|^{2+γ}|Π(J_i − J_j)|²`.
///
/// Each unordered pair is visited once and its contribution applied with
/// opposite signs, so `Σ w_i U_i` vanishes up to rounding of the products.
pub fn pair_velocities(positions: &[Vec3], weights: &[f64], j: &[Vec3], pw: &PairWeight) -> Result<(Vec<Vec3>, f64)> {
    let n = positions.len();
    let mut u = alloc::vec![ZERO; n];
    let mut diss = 0.0;
    for a in 0..n {
        for b in (a + 1)..n {
            let z = linalg::sub(&positions[a], &positions[b]);
            let Some(k) = pw.strong(linalg::norm(&z))? else { continue };
            let dj = linalg::sub(&j[a], &j[b]);
            let pj = linalg::project_perp(&z, &dj);
            let f = linalg::scale(&pj, k);
            linalg::axpy(&mut u[a], -weights[b], &f);
            linalg::axpy(&mut u[b], weights[a], &f);
            diss += weights[a] * weights[b] * k * linalg::dot(&pj, &pj);
        }
    }
    Ok((u, diss))
}

fn atoms_of<M: Measure>(mu: &M) -> (Vec<Vec3>, Vec<f64>) {
    (0..mu.atom_count()).map(|i| mu.atom(i)).unzip()
}

/// `U_ε(v) = −∫|v−v_*|^{2+γ} Π[v−v_*](J(v) − J(v_*)) dμ(v_*)`; atoms coinciding
/// with `v` are the self-pair and skipped.
pub fn velocity_field_eps<M: Measure>(mu: &M, quad: &EntropyQuadrature, pw: &PairWeight, v: &Vec3) -> Result<Vec3> {
    let (pos, w) = atoms_of(mu);
    let (st, j) = quad.entropy_and_gradients(&pos, &w);
    let jv = quad.first_variation_grad(&st, v);
    let mut u = ZERO;
    for ((x, wj), jx) in pos.iter().zip(&w).zip(&j) {
        let z = linalg::sub(v, x);
        let r = linalg::norm(&z);
        if r < COINCIDENT {
            continue;
        }
        let Some(k) = pw.strong(r)? else { continue };
        let pj = linalg::project_perp(&z, &linalg::sub(&jv, jx));
        linalg::axpy(&mut u, -wj * k, &pj);
    }
    Ok(u)
}

/// `D_ε[μ] = ½∬|∇̃ δH_ε/δμ|² dμ dμ_*`.
pub fn dissipation_eps<M: Measure>(mu: &M, quad: &EntropyQuadrature, pw: &PairWeight) -> Result<f64> {
    let (pos, w) = atoms_of(mu);
    let (_, j) = quad.entropy_and_gradients(&pos, &w);
    Ok(pair_velocities(&pos, &w, &j, pw)?.1)
}

/// Grid `∇ log f` on floored values, and the mask of cells above the floor.
pub fn grid_log_gradient(f: &GridDensity) -> (Vec<Vec3>, Vec<bool>) {
    let logs: Vec<f64> = f.values().iter().map(|&v| math::log(v.max(ENTROPY_FLOOR))).collect();
    let mask = f.values().iter().map(|&v| v >= ENTROPY_FLOOR).collect();
    (f.grid().gradient(&logs), mask)
}

/// Unregularized dissipation `D(f) = ½∬|∇̃ log f|² f f_*` with finite-difference
/// gradients. Pairs closer than half a grid spacing are skipped.
pub fn dissipation_exact(f: &GridDensity, gamma: f64) -> Result<f64> {
    let pw = PairWeight::new(gamma, 0.5 * f.grid().spacing())?;
    let (g, mask) = grid_log_gradient(f);
    let pts = f.grid().points();
    let c = f.cell_volume();
    let vals = f.values();
    let live: Vec<usize> = (0..pts.len()).filter(|&k| mask[k]).collect();
    let rows = par_map(live.len(), |ia| -> Result<f64> {
        let a = live[ia];
        let mut acc = 0.0;
        for &b in &live[ia + 1..] {
            let z = linalg::sub(&pts[a], &pts[b]);
            let Some(k) = pw.strong(linalg::norm(&z))? else { continue };
            let pj = linalg::project_perp(&z, &linalg::sub(&g[a], &g[b]));
            acc += vals[b] * k * linalg::dot(&pj, &pj);
        }
        Ok(acc * vals[a])
    });
    let mut total = 0.0;
    for r in rows {
        total += r?;
    }
    Ok(total * c * c)
}

/// `(|x|²(y·Π[x]y), |x×y|²)`.
pub fn cross_identity_check(x: &Vec3, y: &Vec3) -> Result<(f64, f64)> {
    let p = projection(x, 3)?;
    let lhs = linalg::norm2(x) * linalg::dot(y, &linalg::mat_vec(&p, y));
    Ok((lhs, linalg::norm2(&linalg::cross(x, y))))
}

fn require_3d(f: &GridSpec) -> Result<()> {
    if f.dim != 3 {
        return Err(Error::param("cross-product diagnostics need d = 3"));
    }
    Ok(())
}

fn require_moderate_gamma(gamma: f64) -> Result<()> {
    if !(gamma > -3.0 && gamma <= 0.0) {
        return Err(Error::param("gamma must lie in (-3, 0]"));
    }
    Ok(())
}

/// `(∫f⟨v⟩^γ|∇log f|², ∫f⟨v⟩^γ|v×∇log f|²)`.
pub fn weighted_fisher(f: &GridDensity, gamma: f64) -> Result<(f64, f64)> {
    require_3d(f.grid())?;
    require_moderate_gamma(gamma)?;
    let (g, mask) = grid_log_gradient(f);
    let c = f.cell_volume();
    let mut fisher = 0.0;
    let mut cross = 0.0;
    for (k, &fk) in f.values().iter().enumerate() {
        if !mask[k] {
            continue;
        }
        let v = f.grid().point(k);
        let w = fk * math::pow(linalg::bracket(&v), gamma);
        fisher += w * linalg::norm2(&g[k]);
        cross += w * linalg::norm2(&linalg::cross(&v, &g[k]));
    }
    Ok((fisher * c, cross * c))
}

/// Smallest constants with `∫f_*|v−v_*|^γ ≤ C₁⟨v⟩^γ` and
/// `∫f_*⟨v_*⟩²|v−v_*|^γ ≤ C₂⟨v⟩^γ` over the grid nodes.
pub fn singular_moment_bound(f: &GridDensity, gamma: f64, eta: f64) -> Result<(f64, f64)> {
    require_3d(f.grid())?;
    require_moderate_gamma(gamma)?;
    if !(eta > 0.0 && eta <= gamma + 3.0) {
        return Err(Error::InvalidExponent { eta });
    }
    let pts = f.grid().points();
    let c = f.cell_volume();
    let delta = if gamma < 0.0 { 0.5 * f.grid().spacing() } else { -1.0 };
    let vals = f.values();
    let ratios = par_map(pts.len(), |a| {
        let mut s1 = 0.0;
        let mut s2 = 0.0;
        for (b, xb) in pts.iter().enumerate() {
            if vals[b] == 0.0 {
                continue;
            }
            let r = linalg::norm(&linalg::sub(&pts[a], xb));
            if r < delta {
                continue;
            }
            let k = if gamma == 0.0 { 1.0 } else { math::pow(r, gamma) };
            s1 += vals[b] * k;
            s2 += vals[b] * k * (1.0 + linalg::norm2(xb));
        }
        let wv = math::pow(linalg::bracket(&pts[a]), gamma);
        (s1 * c / wv, s2 * c / wv)
    });
    Ok(ratios.iter().fold((0.0f64, 0.0f64), |acc, r| (acc.0.max(r.0), acc.1.max(r.1))))
}

/// `|∫(v×∇g)f + ∫g(v×∇f)|` with finite-difference gradients on a 3d grid.
pub fn twisted_ibp_residual(grid: &GridSpec, f: &[f64], g: &[f64]) -> Result<f64> {
    require_3d(grid)?;
    let gf = grid.gradient(f);
    let gg = grid.gradient(g);
    let mut acc = ZERO;
    for k in 0..grid.len() {
        let v = grid.point(k);
        let t1 = linalg::scale(&linalg::cross(&v, &gg[k]), f[k]);
        let t2 = linalg::scale(&linalg::cross(&v, &gf[k]), g[k]);
        acc = linalg::add(&acc, &linalg::add(&t1, &t2));
    }
    Ok(linalg::norm(&acc) * grid.cell_volume())
}

/// Both sides of the Jensen cross inequality at `v`:
/// `|v×(∇f*G)|²/(f*G)` and `G*(|w×∇f|²/f)`, with finite-difference `∇f`.
pub fn jensen_cross_check(f: &GridDensity, kernel: &Kernel, v: &Vec3) -> Result<(f64, f64)> {
    require_3d(f.grid())?;
    let grad = f.grid().gradient(f.values());
    let c = f.cell_volume();
    let mut conv = 0.0;
    let mut conv_grad = ZERO;
    let mut rhs = 0.0;
    for (k, &fk) in f.values().iter().enumerate() {
        let x = f.grid().point(k);
        let gk = kernel.eval(&linalg::sub(v, &x));
        conv += gk * fk;
        linalg::axpy(&mut conv_grad, gk, &grad[k]);
        if fk > ENTROPY_FLOOR {
            rhs += gk * linalg::norm2(&linalg::cross(&x, &grad[k])) / fk;
        }
    }
    let lhs = linalg::norm2(&linalg::cross(v, &conv_grad)) * c / conv;
    Ok((lhs, rhs * c))
}

/// `J(v) = ∫G(w) a(v − w) dw` with `a = ∇log(μ*G)` evaluated exactly from the
/// atoms; the outer integral uses `quad` (see [`crate::kernels::kernel_quadrature`]).
/// Satisfies `|J| ≤ (1/ε) Σ_q g_q` for `s = 1`.
pub fn first_variation_grad_smoothed<M: Measure>(kernel: &Kernel, mu: &M, quad: &[(Vec3, f64)], v: &Vec3) -> Vec3 {
    let mut j = ZERO;
    for (w, g) in quad {
        let x = linalg::sub(v, w);
        let rho = crate::kernels::convolve_particles(kernel, mu, &x);
        let grad = crate::kernels::convolve_particles_grad(kernel, mu, &x);
        linalg::axpy(&mut j, g / rho, &grad);
    }
    j
}

/// Pointwise ceiling for `|∇̃ δH_ε/δμ|(v, v_*)` from the log-derivative bounds,
/// for a kernel with unit mass. Moderately soft: `2^{1+γ/2}(|v|^{1+γ/2} +
/// |v_*|^{1+γ/2})·2/ε`; very soft: `2/ε` when `|z| ≥ 1`, `4/ε²` otherwise.
pub fn tilde_grad_first_variation_bound(gamma: f64, epsilon: f64, v: &Vec3, v_star: &Vec3) -> f64 {
    if gamma >= -2.0 {
        let q = 1.0 + 0.5 * gamma;
        math::pow(2.0, q) * (math::pow(linalg::norm(v), q) + math::pow(linalg::norm(v_star), q)) * 2.0 / epsilon
    } else if linalg::norm(&linalg::sub(v, v_star)) >= 1.0 {
        2.0 / epsilon
    } else {
        4.0 / (epsilon * epsilon)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core::{make_maxwellian, ModelParams, ParticleEnsemble};
    use alloc::vec;

    fn kernel(d: usize, eps: f64) -> Kernel {
        Kernel::new(ModelParams::new(d, 0.0, eps, 1.0).unwrap()).unwrap()
    }

    #[test]
    fn projection_examples() {
        let p = projection(&[1.0, 0.0, 0.0], 3).unwrap();
        assert_eq!(p, [[0.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
        assert!(matches!(projection(&ZERO, 3), Err(Error::ZeroRelativeVelocity)));
        assert_eq!(projection(&[2.0, 0.0, 0.0], 1).unwrap()[0][0], 0.0);
    }

    #[test]
    fn tilde_grad_hand_computed() {
        // φ = v₁², v = e₁, v_* = e₂: z = (1,−1,0), ∇φ difference (2,0,0),
        // Π[z](2,0,0) = (1,1,0), weight |z|^{1+γ/2}.
        for gamma in [0.0, -1.0, -3.0] {
            let t = tilde_grad(|v| [2.0 * v[0], 0.0, 0.0], &[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0], gamma).unwrap();
            let w = math::pow(math::sqrt(2.0), 1.0 + 0.5 * gamma);
            assert!((t[0] - w).abs() < 1e-14 && (t[1] - w).abs() < 1e-14 && t[2].abs() < 1e-15);
        }
    }

    #[test]
    fn tilde_grad_annihilates_collision_invariants() {
        let v = [0.3, -1.0, 2.0];
        let vs = [-0.7, 0.4, 0.1];
        for g in [|_: &Vec3| ZERO, |_: &Vec3| [1.0, 0.0, 0.0], |v: &Vec3| linalg::scale(v, 2.0)] {
            let t = tilde_grad(g, &v, &vs, -2.5).unwrap();
            assert!(linalg::norm(&t) < 1e-14);
        }
    }

    #[test]
    fn singular_policy() {
        let pw = PairWeight::new(-3.0, 0.0).unwrap();
        assert!(matches!(pw.strong(0.0), Err(Error::SingularPair { .. })));
        assert_eq!(pw.strong(0.5).unwrap(), Some(math::pow(0.5, -1.0)));
        let pw = PairWeight::new(-3.0, 0.1).unwrap();
        assert_eq!(pw.strong(0.05).unwrap(), None);
        let pw = PairWeight::new(-1.0, 0.1).unwrap();
        assert_eq!(pw.strong(0.05).unwrap(), Some(math::pow(0.05, 1.0)));
    }

    #[test]
    fn velocity_field_trivial_cases() {
        let k = kernel(3, 0.5);
        let pw = PairWeight::new(0.0, 0.0).unwrap();
        let one = ParticleEnsemble::uniform(3, vec![[0.1, 0.2, 0.3]]).unwrap();
        let quad = EntropyQuadrature::covering(k, &one, 12, 2.0).unwrap();
        let u = velocity_field_eps(&one, &quad, &pw, &[0.1, 0.2, 0.3]).unwrap();
        assert_eq!(u, ZERO);
        assert_eq!(dissipation_eps(&one, &quad, &pw).unwrap(), 0.0);
        // Symmetric measure, symmetric quadrature grid: U(0) = 0.
        let sym = ParticleEnsemble::uniform(3, vec![[1.0, 0.5, 0.0], [-1.0, -0.5, 0.0], [0.0, 0.3, 1.2], [0.0, -0.3, -1.2]]).unwrap();
        let quad = EntropyQuadrature::new(k, GridSpec::new(3, 3.0, 13).unwrap()).unwrap();
        let u = velocity_field_eps(&sym, &quad, &pw, &ZERO).unwrap();
        assert!(linalg::norm(&u) < 1e-12, "{u:?}");
    }

    #[test]
    fn first_variation_gradient_matches_entropy_derivative() {
        let k = kernel(2, 0.4);
        let pos = vec![[0.3, -0.2, 0.0], [-0.5, 0.4, 0.0], [0.9, 0.8, 0.0]];
        let w = vec![0.2, 0.5, 0.3];
        let mu = ParticleEnsemble::new(2, pos.clone(), w.clone()).unwrap();
        let quad = EntropyQuadrature::covering(k, &mu, 24, 2.0).unwrap();
        let (_, j) = quad.entropy_and_gradients(&pos, &w);
        let h = 1e-6;
        for i in 0..3 {
            for a in 0..2 {
                let mut p = pos.clone();
                p[i][a] += h;
                let hp = quad.entropy(&ParticleEnsemble::new(2, p.clone(), w.clone()).unwrap());
                p[i][a] -= 2.0 * h;
                let hm = quad.entropy(&ParticleEnsemble::new(2, p, w.clone()).unwrap());
                let fd = (hp - hm) / (2.0 * h);
                assert!((fd - w[i] * j[i][a]).abs() < 1e-6 * (1.0 + fd.abs()), "{fd} {}", w[i] * j[i][a]);
            }
        }
    }

    #[test]
    fn exact_dissipation_cases() {
        let g = GridSpec::new(2, 7.0, 28).unwrap();
        let m = make_maxwellian(&g, &[0.7, -0.4, 0.0], 1.0).unwrap();
        assert!(dissipation_exact(&m, -1.0).unwrap() < 1e-20);
        let a = make_maxwellian(&g, &[1.5, 0.0, 0.0], 0.5).unwrap();
        let b = make_maxwellian(&g, &[-1.5, 0.0, 0.0], 0.5).unwrap();
        let vals: Vec<f64> = a.values().iter().zip(b.values()).map(|(x, y)| x + y).collect();
        let bi = GridDensity::new(g, vals).unwrap();
        assert!(dissipation_exact(&bi, 0.0).unwrap() > 1e-3);
    }

    #[test]
    fn fisher_of_maxwellian() {
        let g = GridSpec::new(3, 7.0, 36).unwrap();
        let m = make_maxwellian(&g, &ZERO, 1.0).unwrap();
        let (fi, cr) = weighted_fisher(&m, 0.0).unwrap();
        assert!((fi - 3.0).abs() < 1e-6, "{fi}");
        assert!(cr < 1e-20);
    }

    #[test]
    fn singular_moment_cases() {
        let g = GridSpec::new(3, 6.0, 16).unwrap();
        let m = make_maxwellian(&g, &ZERO, 1.0).unwrap();
        let (c1, c2) = singular_moment_bound(&m, 0.0, 1.0).unwrap();
        assert!((c1 - 1.0).abs() < 1e-12);
        assert!(c2 >= c1);
        assert!(matches!(singular_moment_bound(&m, -1.0, 3.0), Err(Error::InvalidExponent { .. })));
        assert!(matches!(singular_moment_bound(&m, 0.0, 4.0), Err(Error::InvalidExponent { .. })));
    }
}
