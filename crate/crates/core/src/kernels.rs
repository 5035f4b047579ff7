//! Exponential regularization kernels `G^{s,ε}(v) = ε^{-d} C_{s,d} exp(−⟨v/ε⟩^s)`,
//! convolutions against discrete measures, and the kernel-side inequalities.

use crate::math;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::core::{moment, GridDensity, GridField, Measure, ModelParams};
use crate::error::{Error, Result};
use crate::linalg::{self, par_map, Mat3, Vec3, ZERO};
use crate::quadrature::integrate_half_line;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kernel {
    pub params: ModelParams,
    /// `C_{s,d}`, so that `∫ G = 1`.
    pub normalization: f64,
    prefactor: f64,
}

/// Surface area of the unit sphere in `R^d`.
pub fn sphere_area(d: usize) -> f64 {
    match d {
        1 => 2.0,
        2 => 2.0 * PI,
        3 => 4.0 * PI,
        _ => 2.0 * math::pow(PI, d as f64 / 2.0) / libm::tgamma(d as f64 / 2.0),
    }
}

/// `∫_{R^d} |w|^p exp(−⟨w⟩^s) dw`.
fn radial_integral(d: usize, s: f64, p: f64) -> f64 {
    let df = d as f64;
    sphere_area(d)
        * integrate_half_line(
            |r| math::pow(r, p + df - 1.0) * math::exp(-math::pow(1.0 + r * r, 0.5 * s)),
            1e-10,
        )
}

impl Kernel {
    pub fn new(params: ModelParams) -> Result<Self> {
        params.validate()?;
        let normalization = 1.0 / radial_integral(params.dim, params.s, 0.0);
        let prefactor = normalization / math::pow(params.epsilon, params.dim as f64);
        Ok(Kernel { params, normalization, prefactor })
    }

    pub fn epsilon(&self) -> f64 {
        self.params.epsilon
    }

    pub fn dim(&self) -> usize {
        self.params.dim
    }

    /// Radius beyond which `G < 1e-16·G(0)`; quadrature sums treat the kernel
    /// as zero there.
    pub fn support_radius(&self) -> f64 {
        let t = 1.0 + 16.0 * core::f64::consts::LN_10;
        self.params.epsilon * math::sqrt(math::pow(t, 2.0 / self.params.s) - 1.0)
    }

    /// Peak value `G(0) = ε^{-d} C e^{-1}`.
    pub fn peak(&self) -> f64 {
        self.prefactor * math::exp(-1.0)
    }

    pub fn eval(&self, v: &Vec3) -> f64 {
        self.eval_with_factor(v).0
    }

    /// Returns `(G(z), q)` with `∇G(z) = −q z`.
    #[inline]
    pub fn eval_with_factor(&self, z: &Vec3) -> (f64, f64) {
        let e = self.params.epsilon;
        let s = self.params.s;
        let b2 = 1.0 + linalg::norm2(z) / (e * e);
        if s == 1.0 {
            let b = math::sqrt(b2);
            let g = self.prefactor * math::exp(-b);
            (g, g / (b * e * e))
        } else {
            let b = math::sqrt(b2);
            let g = self.prefactor * math::exp(-math::pow(b, s));
            (g, s * math::pow(b, s - 2.0) * g / (e * e))
        }
    }

    /// `∇G(v) = −(s/ε)⟨v/ε⟩^{s−2}(v/ε) G(v)`.
    pub fn grad(&self, v: &Vec3) -> Vec3 {
        let (_, q) = self.eval_with_factor(v);
        linalg::scale(v, -q)
    }

    pub fn hessian(&self, v: &Vec3) -> Mat3 {
        let e2 = self.params.epsilon * self.params.epsilon;
        let s = self.params.s;
        let (g, q) = self.eval_with_factor(v);
        let b = math::sqrt(1.0 + linalg::norm2(v) / e2);
        let r = (s / e2) * (-q * math::pow(b, s - 2.0) + g * (s - 2.0) * math::pow(b, s - 4.0) / e2);
        let mut h = [[0.0; 3]; 3];
        for i in 0..self.params.dim {
            for j in 0..self.params.dim {
                h[i][j] = -r * v[i] * v[j] - if i == j { q } else { 0.0 };
            }
        }
        h
    }

    /// `m_p(G) = ∫|w|^p G^{s,1}(w) dw` of the unscaled kernel.
    pub fn unscaled_moment(&self, p: f64) -> f64 {
        self.normalization * radial_integral(self.params.dim, self.params.s, p)
    }
}

/// `(f * G)(x_a) = Σ_b f_b G(x_a − x_b) c` at every grid node.
pub fn convolve_density(kernel: &Kernel, f: &GridDensity) -> GridField {
    let g = *f.grid();
    let pts = g.points();
    let c = g.cell_volume();
    let vals = f.values();
    let values = par_map(pts.len(), |a| {
        let mut acc = 0.0;
        for (b, xb) in pts.iter().enumerate() {
            if vals[b] != 0.0 {
                acc += vals[b] * kernel.eval(&linalg::sub(&pts[a], xb));
            }
        }
        acc * c
    });
    GridField { grid: g, values }
}

/// `(μ * G)(v) = Σ_i w_i G(v − v_i)`.
pub fn convolve_particles<M: Measure>(kernel: &Kernel, mu: &M, v: &Vec3) -> f64 {
    (0..mu.atom_count())
        .map(|i| {
            let (x, w) = mu.atom(i);
            w * kernel.eval(&linalg::sub(v, &x))
        })
        .sum()
}

/// `∇(μ * G)(v) = Σ_i w_i ∇G(v − v_i)`.
pub fn convolve_particles_grad<M: Measure>(kernel: &Kernel, mu: &M, v: &Vec3) -> Vec3 {
    let mut out = ZERO;
    for i in 0..mu.atom_count() {
        let (x, w) = mu.atom(i);
        let z = linalg::sub(v, &x);
        let (_, q) = kernel.eval_with_factor(&z);
        linalg::axpy(&mut out, -w * q, &z);
    }
    out
}

/// Value, gradient and Hessian of `ρ = μ * G` at `v`.
pub fn convolve_particles_second<M: Measure>(kernel: &Kernel, mu: &M, v: &Vec3) -> (f64, Vec3, Mat3) {
    let mut rho = 0.0;
    let mut grad = ZERO;
    let mut hess = [[0.0; 3]; 3];
    for i in 0..mu.atom_count() {
        let (x, w) = mu.atom(i);
        let z = linalg::sub(v, &x);
        let (g, q) = kernel.eval_with_factor(&z);
        rho += w * g;
        linalg::axpy(&mut grad, -w * q, &z);
        let h = kernel.hessian(&z);
        for a in 0..3 {
            for b in 0..3 {
                hess[a][b] += w * h[a][b];
            }
        }
    }
    (rho, grad, hess)
}

/// Hessian of `log(μ * G)` at `v`.
pub fn log_hessian<M: Measure>(kernel: &Kernel, mu: &M, v: &Vec3) -> Mat3 {
    let (rho, g, h) = convolve_particles_second(kernel, mu, v);
    let mut out = [[0.0; 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            out[a][b] = h[a][b] / rho - g[a] * g[b] / (rho * rho);
        }
    }
    out
}

/// Constant `C` with `|log(μ*G)(v)| ≤ C⟨v/ε⟩` whenever `m_2(μ) ≤ E`.
///
/// Upper side: `μ*G ≤ G(0)`. Lower side: Chebyshev puts half the mass in the
/// ball of radius `R = √(2E)`, and `⟨a+b⟩^s ≤ 2^{s/2}(⟨a⟩ + ⟨b⟩^s)` for `s ≤ 1`.
pub fn carlen_carvalho_bound<M: Measure>(mu: &M, kernel: &Kernel, e: f64) -> Result<f64> {
    let s = kernel.params.s;
    if s > 1.0 {
        return Err(Error::param("the linear log bound needs s <= 1"));
    }
    let m2 = moment(mu, 2.0);
    if m2 > e * (1.0 + 1e-12) {
        return Err(Error::MomentBoundViolated { m2, bound: e });
    }
    let eps = kernel.epsilon();
    let r = math::sqrt(2.0 * e);
    let bs = math::pow(1.0 + r * r / (eps * eps), 0.5 * s);
    let c2s = math::pow(2.0, 0.5 * s);
    let upper = math::fabs(math::log(kernel.peak()));
    let lower = c2s + f64::max(0.0, c2s * bs - math::log(0.5 * kernel.prefactor));
    Ok(f64::max(upper, lower))
}

/// `(⟨x⟩^p/⟨y⟩^p, 2^{|p|/2}⟨x−y⟩^{|p|})`.
pub fn peetre_ratio(x: &Vec3, y: &Vec3, p: f64) -> (f64, f64) {
    let lhs = math::pow(linalg::bracket(x) / linalg::bracket(y), p);
    let ap = math::fabs(p);
    let rhs = math::pow(2.0, 0.5 * ap) * math::pow(linalg::bracket(&linalg::sub(x, y)), ap);
    (lhs, rhs)
}

/// `C` with `∫⟨w⟩^p G^ε(v − w) dw ≤ C⟨v⟩^p`.
pub fn weighted_convolution_bound(kernel: &Kernel, p: f64) -> f64 {
    let ap = math::fabs(p);
    let cp = f64::max(1.0, math::pow(2.0, 0.5 * ap - 1.0));
    let m = kernel.unscaled_moment(ap);
    math::pow(2.0, 0.5 * ap) * cp * (1.0 + math::pow(kernel.epsilon(), ap) * m)
}

/// Offsets and weights of a tensor quadrature for `∫ φ(w) G(w) dw`, on
/// `[−Rε, Rε]^d` with `n` nodes per axis.
pub fn kernel_quadrature(kernel: &Kernel, radius: f64, n: usize) -> Vec<(Vec3, f64)> {
    let d = kernel.dim();
    let l = radius * kernel.epsilon();
    let h = 2.0 * l / (n - 1) as f64;
    let c = math::pow(h, d as f64);
    let total = n.pow(d as u32);
    (0..total)
        .map(|k| {
            let mut w = ZERO;
            let mut r = k;
            for a in (0..d).rev() {
                w[a] = -l + (r % n) as f64 * h;
                r /= n;
            }
            (w, kernel.eval(&w) * c)
        })
        .collect()
}
