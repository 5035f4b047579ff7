//! Discrete grazing continuity equation on a grid, the action functional, and
//! the Landau distance as a convex minimization over K-slice paths.
//!
//! Grid test functions act through `(Bζ)_p = |z|^{1+γ/2} Π[z](∇_hζ(x_k) − ∇_hζ(x_l))`
//! over unordered cell pairs `p = (k, l)`, `z = x_k − x_l`, where `∇_h` is the
//! second-order difference gradient of [`GridSpec::gradient`]. One time slice
//! of the discrete equation reads
//!
//! ```text
//! c Σ_k ζ_k (μ_{j+1} − μ_j)_k = Δt c² Σ_p (Bζ)_p · m_p        for all ζ,
//! ```
//!
//! and the action is `A(μ, m) = Σ_p |m_p|² c² / (f_k f_l)`. For fixed end
//! densities the optimal field is `m = W Bφ/(Δt c)` with `W_p = f̄_k f̄_l`,
//! `L φ = Δμ`, `L = Bᵀ W B`, and the slice cost is `Δt·A = Δμᵀ L⁺ Δμ / Δt`.

use alloc::string::ToString;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::core::{GridDensity, GridSpec};
use crate::error::{Error, Result};
use crate::lbfgs::{self, LbfgsOptions};
use crate::linalg::{self, Vec3, ZERO};
use crate::math;

/// Density floor inside the optimizer.
pub const DEFAULT_FLOOR: f64 = 1e-10;
/// Largest grid (in cells) the dense solver accepts.
pub const MAX_CELLS: usize = 1024;

#[derive(Debug, Clone, Copy)]
struct Pair {
    k: u32,
    l: u32,
    z: Vec3,
    weight: f64,
}

type Stencil = [[(u32, f64); 3]; 3];

/// `B` for one grid and exponent `γ`, with the orthonormal basis of its null
/// space (the discrete collision invariants).
#[derive(Debug, Clone)]
pub struct GrazingOperator {
    grid: GridSpec,
    gamma: f64,
    pairs: Vec<Pair>,
    stencil: Vec<Stencil>,
    null_basis: DMatrix<f64>,
}

/// Grazing rate `m_p` on every unordered pair `(k, l)`, `k < l`; the value on
/// `(l, k)` is `−m_p`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrazingField {
    pub values: Vec<Vec3>,
}

impl GrazingField {
    pub fn zeros(op: &GrazingOperator) -> Self {
        GrazingField { values: alloc::vec![ZERO; op.pair_count()] }
    }

    pub fn scaled(&self, s: f64) -> Self {
        GrazingField { values: self.values.iter().map(|v| linalg::scale(v, s)).collect() }
    }
}

/// `K + 1` densities on uniform nodes of `[0, 1]` and `K` slice fields.
#[derive(Debug, Clone)]
pub struct GcePath {
    pub time_nodes: Vec<f64>,
    pub densities: Vec<GridDensity>,
    pub fields: Vec<GrazingField>,
}

/// Result of [`landau_distance`].
#[derive(Debug, Clone)]
pub struct Distance {
    pub d: f64,
    pub path: GcePath,
    /// `A(μ̄_j, m_j)` per slice; all equal to `d²` for an exact minimizer.
    pub per_interval_action: Vec<f64>,
    pub iterations: usize,
    /// `|d(floor) − d(1e-12)|` when requested.
    pub floor_sensitivity: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceOptions {
    pub k: usize,
    pub floor: f64,
    pub max_iter: usize,
    pub rel_tol: f64,
    pub floor_check: bool,
}

impl Default for DistanceOptions {
    fn default() -> Self {
        DistanceOptions { k: 8, floor: DEFAULT_FLOOR, max_iter: 5000, rel_tol: 1e-13, floor_check: false }
    }
}

impl GrazingOperator {
    pub fn new(grid: GridSpec, gamma: f64) -> Result<Self> {
        if !(-4.0..=0.0).contains(&gamma) {
            return Err(Error::param("gamma must lie in [-4, 0]"));
        }
        if grid.dim == 3 && grid.n > 8 {
            return Err(Error::ProblemTooLarge("d = 3 needs n <= 8".to_string()));
        }
        if grid.len() > MAX_CELLS {
            return Err(Error::ProblemTooLarge("more than 1024 grid cells".to_string()));
        }
        let m = grid.len();
        let h2 = 2.0 * grid.spacing();
        let n = grid.n;
        let stencil: Vec<Stencil> = (0..m)
            .map(|k| {
                let idx = grid.multi_index(k);
                let mut st = [[(k as u32, 0.0); 3]; 3];
                for a in 0..grid.dim {
                    let s = n.pow((grid.dim - 1 - a) as u32);
                    let i = idx[a];
                    st[a] = if i == 0 {
                        [(k as u32, -3.0 / h2), ((k + s) as u32, 4.0 / h2), ((k + 2 * s) as u32, -1.0 / h2)]
                    } else if i == n - 1 {
                        [(k as u32, 3.0 / h2), ((k - s) as u32, -4.0 / h2), ((k - 2 * s) as u32, 1.0 / h2)]
                    } else {
                        [((k + s) as u32, 1.0 / h2), ((k - s) as u32, -1.0 / h2), (k as u32, 0.0)]
                    };
                }
                st
            })
            .collect();
        let pts = grid.points();
        let mut pairs = Vec::with_capacity(m * (m - 1) / 2);
        for k in 0..m {
            for l in (k + 1)..m {
                let z = linalg::sub(&pts[k], &pts[l]);
                // Π[z] vanishes identically in one dimension.
                let weight = if grid.dim == 1 { 0.0 } else { math::pow(linalg::norm(&z), 1.0 + 0.5 * gamma) };
                pairs.push(Pair { k: k as u32, l: l as u32, z, weight });
            }
        }
        let mut op = GrazingOperator { grid, gamma, pairs, stencil, null_basis: DMatrix::zeros(m, 0) };
        let l0 = op.assemble(&alloc::vec![1.0; op.pairs.len()]);
        let eig = l0.symmetric_eigen();
        let top = eig.eigenvalues.iter().fold(0.0f64, |a, b| a.max(*b));
        let null: Vec<usize> = (0..m).filter(|&i| eig.eigenvalues[i] <= 1e-10 * top.max(1e-300)).collect();
        let mut nb = DMatrix::zeros(m, null.len());
        for (c, &i) in null.iter().enumerate() {
            nb.set_column(c, &eig.eigenvectors.column(i));
        }
        op.null_basis = nb;
        Ok(op)
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn pair_count(&self) -> usize {
        self.pairs.len()
    }

    /// Cell indices `(k, l)` of pair `p`.
    pub fn pair(&self, p: usize) -> (usize, usize) {
        (self.pairs[p].k as usize, self.pairs[p].l as usize)
    }

    /// Orthonormal basis (columns) of `null(B)`.
    pub fn null_basis(&self) -> &DMatrix<f64> {
        &self.null_basis
    }

    /// Coordinates of `f` on the null basis: the conserved functionals.
    pub fn conserved(&self, f: &[f64]) -> Vec<f64> {
        (self.null_basis.transpose() * DVector::from_column_slice(f)).iter().copied().collect()
    }

    #[cfg(test)]
    pub(crate) fn project_out_null(&self, g: &mut [f64]) {
        let v = DVector::from_column_slice(g);
        let c = self.null_basis.transpose() * &v;
        let r = v - &self.null_basis * c;
        g.copy_from_slice(r.as_slice());
    }

    fn grad_at(&self, zeta: &[f64], k: usize) -> Vec3 {
        let mut g = ZERO;
        for a in 0..self.grid.dim {
            for &(node, c) in &self.stencil[k][a] {
                g[a] += c * zeta[node as usize];
            }
        }
        g
    }

    /// `(Bζ)_p` for every pair.
    pub fn apply(&self, zeta: &[f64]) -> Vec<Vec3> {
        let g: Vec<Vec3> = (0..self.grid.len()).map(|k| self.grad_at(zeta, k)).collect();
        self.pairs
            .iter()
            .map(|p| {
                let d = linalg::sub(&g[p.k as usize], &g[p.l as usize]);
                linalg::scale(&linalg::project_perp(&p.z, &d), p.weight)
            })
            .collect()
    }

    /// `Bᵀ m`.
    pub fn apply_transpose(&self, m: &[Vec3]) -> Vec<f64> {
        let mut out = alloc::vec![0.0; self.grid.len()];
        for (p, mp) in self.pairs.iter().zip(m) {
            let v = linalg::scale(&linalg::project_perp(&p.z, mp), p.weight);
            for a in 0..self.grid.dim {
                for &(node, c) in &self.stencil[p.k as usize][a] {
                    out[node as usize] += c * v[a];
                }
                for &(node, c) in &self.stencil[p.l as usize][a] {
                    out[node as usize] -= c * v[a];
                }
            }
        }
        out
    }

    /// `L = Σ_p W_p B_pᵀ B_p`.
    pub fn assemble(&self, w: &[f64]) -> DMatrix<f64> {
        let m = self.grid.len();
        let d = self.grid.dim;
        let mut l = DMatrix::zeros(m, m);
        let mut nodes: Vec<u32> = Vec::with_capacity(18);
        let mut e: Vec<Vec3> = Vec::with_capacity(18);
        for (p, &wp) in self.pairs.iter().zip(w) {
            if wp == 0.0 {
                continue;
            }
            nodes.clear();
            e.clear();
            for (cell, sign) in [(p.k, 1.0), (p.l, -1.0)] {
                for a in 0..d {
                    for &(node, c) in &self.stencil[cell as usize][a] {
                        if c == 0.0 {
                            continue;
                        }
                        let pos = match nodes.iter().position(|&x| x == node) {
                            Some(i) => i,
                            None => {
                                nodes.push(node);
                                e.push(ZERO);
                                nodes.len() - 1
                            }
                        };
                        e[pos][a] += sign * c;
                    }
                }
            }
            let s = wp * p.weight * p.weight;
            for (i, ei) in e.iter().enumerate() {
                let pi = linalg::project_perp(&p.z, ei);
                for (j, ej) in e.iter().enumerate() {
                    l[(nodes[i] as usize, nodes[j] as usize)] += s * linalg::dot(&pi, ej);
                }
            }
        }
        l
    }

    /// Pair weights `W_p = f_k f_l`.
    pub fn pair_weights(&self, f: &[f64]) -> Vec<f64> {
        self.pairs.iter().map(|p| f[p.k as usize] * f[p.l as usize]).collect()
    }

    /// `φ = L⁺ r` for `L = Bᵀ W B`, through the Cholesky factor of `L + N Nᵀ`.
    pub(crate) fn pseudo_solve(&self, w: &[f64], r: &[f64]) -> Option<Vec<f64>> {
        let mut l = self.assemble(w);
        l += &self.null_basis * self.null_basis.transpose();
        let chol = l.cholesky()?;
        Some(chol.solve(&DVector::from_column_slice(r)).iter().copied().collect())
    }

    /// Least action `rᵀ L(f̄)⁺ r` of a density rate `r` at density `f̄`.
    pub fn min_action(&self, fbar: &[f64], rate: &[f64]) -> Option<f64> {
        let phi = self.pseudo_solve(&self.pair_weights(fbar), rate)?;
        Some(rate.iter().zip(&phi).map(|(a, b)| a * b).sum())
    }

    /// Action-minimizing field with `c Bᵀ m = rate`, i.e. `m = W Bφ / c`.
    pub fn tangent_field(&self, fbar: &[f64], rate: &[f64]) -> Option<GrazingField> {
        let w = self.pair_weights(fbar);
        let phi = self.pseudo_solve(&w, rate)?;
        let c = self.grid.cell_volume();
        let bphi = self.apply(&phi);
        Some(GrazingField { values: bphi.iter().zip(&w).map(|(b, wp)| linalg::scale(b, wp / c)).collect() })
    }
}

/// `α(u, s) = |u|²/(2s)` for `s > 0`, `0` at `(0, 0)`, `+∞` otherwise.
pub fn action_density(u: &[f64], s: f64) -> f64 {
    let u2: f64 = u.iter().map(|x| x * x).sum();
    if s > 0.0 {
        u2 / (2.0 * s)
    } else if u2 == 0.0 && s == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// `A(μ, m) = Σ_p |m_p|² c² / (f_k f_l)`: the ordered-pair sum of
/// `α(m c², f f_* c²)`.
pub fn action(op: &GrazingOperator, mu: &GridDensity, m: &GrazingField) -> f64 {
    let c = mu.cell_volume();
    let f = mu.values();
    op.pairs
        .iter()
        .zip(&m.values)
        .map(|(p, mp)| 2.0 * action_density(&linalg::scale(mp, c * c), f[p.k as usize] * f[p.l as usize] * c * c))
        .sum()
}

/// Both sides of `∬F d|M| ≤ √2 A^{1/2} (∬F² dμ dμ_*)^{1/2}` for a symmetric
/// non-negative pair function `F` (one value per unordered pair).
pub fn grazing_moment_bound(op: &GrazingOperator, mu: &GridDensity, m: &GrazingField, f_pair: &[f64]) -> (f64, f64) {
    let c = mu.cell_volume();
    let f = mu.values();
    let mut lhs = 0.0;
    let mut ff = 0.0;
    for ((p, mp), fp) in op.pairs.iter().zip(&m.values).zip(f_pair) {
        lhs += 2.0 * fp * linalg::norm(mp) * c * c;
        ff += 2.0 * fp * fp * f[p.k as usize] * f[p.l as usize] * c * c;
    }
    (lhs, math::sqrt(2.0) * math::sqrt(action(op, mu, m)) * math::sqrt(ff))
}

/// `max_j |c Σζ(μ_{j+1} − μ_j) − Δt c² Σ_p (Bζ)_p·m_p|`.
pub fn check_gce(op: &GrazingOperator, path: &GcePath, zeta: &[f64]) -> f64 {
    let c = op.grid.cell_volume();
    let bz = op.apply(zeta);
    let mut worst = 0.0f64;
    for j in 0..path.fields.len() {
        let dt = path.time_nodes[j + 1] - path.time_nodes[j];
        let a = path.densities[j].values();
        let b = path.densities[j + 1].values();
        let lhs: f64 = zeta.iter().zip(a.iter().zip(b)).map(|(z, (x, y))| z * (y - x)).sum::<f64>() * c;
        let rhs: f64 = bz.iter().zip(&path.fields[j].values).map(|(u, v)| linalg::dot(u, v)).sum::<f64>() * dt * c * c;
        worst = worst.max(math::fabs(lhs - rhs));
    }
    worst
}

/// `A(μ̄_j, m_j)` per slice, with `μ̄_j` the slice midpoint density.
pub fn metric_derivative(op: &GrazingOperator, densities: &[GridDensity], fields: &[GrazingField]) -> Result<Vec<f64>> {
    if densities.len() != fields.len() + 1 {
        return Err(Error::param("need one more density than fields"));
    }
    (0..fields.len())
        .map(|j| {
            let mid: Vec<f64> =
                densities[j].values().iter().zip(densities[j + 1].values()).map(|(a, b)| 0.5 * (a + b)).collect();
            Ok(action(op, &GridDensity::new(*op.grid(), mid)?, &fields[j]))
        })
        .collect()
}

/// Grid dissipation `c² Σ_p f_k f_l |(Bψ)_p|²` of a first variation `ψ`; the
/// action of the field `m = −f f_* Bψ`.
pub fn grid_dissipation(op: &GrazingOperator, f: &[f64], psi: &[f64]) -> f64 {
    let c = op.grid.cell_volume();
    op.apply(psi).iter().zip(op.pair_weights(f)).map(|(b, w)| w * linalg::norm2(b)).sum::<f64>() * c * c
}

/// The field `m = −f f_* Bψ` driven by a first variation `ψ`.
pub fn gradient_field(op: &GrazingOperator, f: &[f64], psi: &[f64]) -> GrazingField {
    let w = op.pair_weights(f);
    GrazingField { values: op.apply(psi).iter().zip(&w).map(|(b, wp)| linalg::scale(b, -wp)).collect() }
}

/// Path objective `Σ_j Δμ_jᵀ L(μ̄_j)⁺ Δμ_j / Δt` over the free densities.
pub(crate) struct PathProblem<'a> {
    pub op: &'a GrazingOperator,
    pub start: &'a [f64],
    /// `None` leaves the last density free.
    pub end: Option<&'a [f64]>,
    pub k: usize,
    pub floor: f64,
}

pub(crate) struct PathEval {
    pub cost: f64,
    pub grad: Vec<f64>,
    pub slice_costs: Vec<f64>,
    pub phis: Vec<Vec<f64>>,
}

impl PathProblem<'_> {
    pub fn free_count(&self) -> usize {
        if self.end.is_some() {
            self.k - 1
        } else {
            self.k
        }
    }

    fn density<'b>(&'b self, vars: &'b [f64], j: usize) -> &'b [f64] {
        let m = self.op.grid.len();
        match self.end {
            _ if j == 0 => self.start,
            Some(end) if j == self.k => end,
            _ => &vars[(j - 1) * m..j * m],
        }
    }

    pub fn eval(&self, vars: &[f64]) -> Option<PathEval> {
        if vars.iter().any(|&v| !(v >= self.floor)) {
            return None;
        }
        let m = self.op.grid.len();
        let dt = 1.0 / self.k as f64;
        let mut grad = alloc::vec![0.0; vars.len()];
        let mut slice_costs = Vec::with_capacity(self.k);
        let mut phis = Vec::with_capacity(self.k);
        for j in 0..self.k {
            let a = self.density(vars, j);
            let b = self.density(vars, j + 1);
            let fbar: Vec<f64> = a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect();
            let r: Vec<f64> = a.iter().zip(b).map(|(x, y)| y - x).collect();
            let w = self.op.pair_weights(&fbar);
            let phi = self.op.pseudo_solve(&w, &r)?;
            let bphi = self.op.apply(&phi);
            // 2rᵀφ − φᵀLφ equals rᵀL⁺r with an error quadratic in the solve error.
            let quad: f64 = bphi.iter().zip(&w).map(|(b, wp)| wp * linalg::norm2(b)).sum();
            let cost = (2.0 * r.iter().zip(&phi).map(|(x, y)| x * y).sum::<f64>() - quad) / dt;
            slice_costs.push(cost);
            let mut hvec = alloc::vec![0.0; m];
            for (p, b) in self.op.pairs.iter().zip(&bphi) {
                let s = linalg::norm2(b) / dt;
                hvec[p.k as usize] -= fbar[p.l as usize] * s;
                hvec[p.l as usize] -= fbar[p.k as usize] * s;
            }
            if j < self.free_count() {
                let off = j * m;
                for i in 0..m {
                    grad[off + i] += 2.0 * phi[i] / dt + 0.5 * hvec[i];
                }
            }
            if j >= 1 {
                let off = (j - 1) * m;
                for i in 0..m {
                    grad[off + i] += -2.0 * phi[i] / dt + 0.5 * hvec[i];
                }
            }
            phis.push(phi);
        }
        Some(PathEval { cost: slice_costs.iter().sum(), grad, slice_costs, phis })
    }

    #[cfg(test)]
    pub fn project(&self, grad: &mut [f64]) {
        let m = self.op.grid.len();
        for block in grad.chunks_mut(m) {
            self.op.project_out_null(block);
        }
    }

    /// Assembles the path and its optimal fields from converged variables.
    pub fn build_path(&self, vars: &[f64], ev: &PathEval) -> Result<GcePath> {
        let dt = 1.0 / self.k as f64;
        let c = self.op.grid.cell_volume();
        let mut densities = Vec::with_capacity(self.k + 1);
        for j in 0..=self.k {
            densities.push(GridDensity::new(self.op.grid, self.density(vars, j).to_vec())?);
        }
        let mut fields = Vec::with_capacity(self.k);
        for j in 0..self.k {
            let a = self.density(vars, j);
            let b = self.density(vars, j + 1);
            let fbar: Vec<f64> = a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect();
            let w = self.op.pair_weights(&fbar);
            let bphi = self.op.apply(&ev.phis[j]);
            fields.push(GrazingField {
                values: bphi.iter().zip(&w).map(|(v, wp)| linalg::scale(v, wp / (dt * c))).collect(),
            });
        }
        Ok(GcePath { time_nodes: (0..=self.k).map(|j| j as f64 * dt).collect(), densities, fields })
    }
}

/// Log-density coordinates with the conserved functionals pinned: a slice
/// `u` maps to `f = exp(u + Nθ)` with `θ` chosen so that `Nᵀf` equals the
/// target. Positivity holds by construction and the optimizer works with
/// relative changes.
///
/// The optimizer variable is `v = u / s` with `s = 1/√x₀`, which evens out
/// the curvature between dense cells and tail cells.
pub(crate) struct Retraction<'a> {
    op: &'a GrazingOperator,
    target: DVector<f64>,
    scale: Vec<f64>,
}

impl<'a> Retraction<'a> {
    /// `reference` fixes the conserved values, `x0` the variable scaling.
    pub fn new(op: &'a GrazingOperator, reference: &[f64], x0: &[f64]) -> Self {
        Retraction {
            op,
            target: op.null_basis.transpose() * DVector::from_column_slice(reference),
            scale: x0.iter().map(|v| 1.0 / math::sqrt(*v)).collect(),
        }
    }

    /// Optimizer variables of the densities `x` (which must satisfy the
    /// constraints).
    pub fn vars_of(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.scale).map(|(v, s)| math::log(*v) / s).collect()
    }

    /// Densities for all slices of `v`, or `None` if the moment solve fails.
    pub fn map(&self, v: &[f64]) -> Option<Vec<f64>> {
        let m = self.op.grid.len();
        let u: Vec<f64> = v.iter().zip(&self.scale).map(|(a, s)| a * s).collect();
        let mut out = Vec::with_capacity(u.len());
        for block in u.chunks(m) {
            out.extend(self.map_slice(block)?);
        }
        Some(out)
    }

    fn map_slice(&self, u: &[f64]) -> Option<Vec<f64>> {
        let n = &self.op.null_basis;
        let q = n.ncols();
        let mut theta = DVector::zeros(q);
        let eval = |theta: &DVector<f64>| -> Vec<f64> {
            let shift = n * theta;
            u.iter().zip(shift.iter()).map(|(a, b)| math::exp(a + b)).collect()
        };
        // Newton on the convex dual Σ exp(u + Nθ) − θᵀ target.
        let dual = |f: &[f64], theta: &DVector<f64>| f.iter().sum::<f64>() - theta.dot(&self.target);
        let scale = self.target.amax().max(1e-300);
        let mut f = eval(&theta);
        for _ in 0..60 {
            let fv = DVector::from_column_slice(&f);
            let grad = n.transpose() * &fv - &self.target;
            if grad.amax() <= 1e-14 * scale {
                return Some(f);
            }
            let mut jac = DMatrix::zeros(q, q);
            for (i, fi) in f.iter().enumerate() {
                let row = n.row(i);
                jac += row.transpose() * row * *fi;
            }
            let step = jac.cholesky()?.solve(&grad);
            if step.amax() <= 1e-15 * (1.0 + theta.amax()) {
                return Some(f);
            }
            let d0 = dual(&f, &theta);
            let r0 = grad.norm();
            let mut t = 1.0;
            loop {
                let trial = &theta - &step * t;
                let ft = eval(&trial);
                let rt = (n.transpose() * DVector::from_column_slice(&ft) - &self.target).norm();
                // The dual value stalls at rounding level near the solution,
                // where the residual still decreases.
                if dual(&ft, &trial) < d0 || rt < r0 || t < 1e-12 {
                    theta = trial;
                    f = ft;
                    break;
                }
                t *= 0.5;
            }
        }
        None
    }

    /// Gradient in `v` from the density gradient `g` at `f = map(v)`:
    /// `s ⊙ (F g − F N (NᵀFN)⁻¹ NᵀF g)` per slice.
    pub fn pull_back(&self, f: &[f64], g: &[f64]) -> Option<Vec<f64>> {
        let n = &self.op.null_basis;
        let m = self.op.grid.len();
        let q = n.ncols();
        let mut out = Vec::with_capacity(g.len());
        for (fb, gb) in f.chunks(m).zip(g.chunks(m)) {
            let fg = DVector::from_iterator(m, fb.iter().zip(gb).map(|(a, b)| a * b));
            let mut jac = DMatrix::zeros(q, q);
            for (i, fi) in fb.iter().enumerate() {
                let row = n.row(i);
                jac += row.transpose() * row * *fi;
            }
            let corr = if q == 0 { DVector::zeros(m) } else { n * jac.cholesky()?.solve(&(n.transpose() * &fg)) };
            out.extend(fg.iter().zip(corr.iter()).zip(fb).map(|((a, c), fi)| a - fi * c));
        }
        for (o, s) in out.iter_mut().zip(&self.scale) {
            *o *= s;
        }
        Some(out)
    }
}

fn check_endpoints(op: &GrazingOperator, f0: &GridDensity, f1: &GridDensity, floor: f64) -> Result<()> {
    if f0.grid() != op.grid() || f1.grid() != op.grid() {
        return Err(Error::param("densities must live on the operator's grid"));
    }
    let min = f0.values().iter().chain(f1.values()).fold(f64::INFINITY, |a, b| a.min(*b));
    if min < floor {
        return Err(Error::Infeasible("endpoint density below the floor".to_string()));
    }
    let c0 = op.conserved(f0.values());
    let c1 = op.conserved(f1.values());
    for (a, b) in c0.iter().zip(&c1) {
        if math::fabs(a - b) > 1e-9 * (1.0 + math::fabs(*a)) {
            return Err(Error::Infeasible("endpoints differ in a conserved quantity".to_string()));
        }
    }
    Ok(())
}

/// `d_L(f0, f1)` on `K` uniform slices of `[0, 1]`.
pub fn landau_distance(
    op: &GrazingOperator,
    f0: &GridDensity,
    f1: &GridDensity,
    opts: &DistanceOptions,
) -> Result<Distance> {
    if opts.k == 0 {
        return Err(Error::param("need at least one time slice"));
    }
    check_endpoints(op, f0, f1, opts.floor)?;
    let m = op.grid.len();
    let prob = PathProblem { op, start: f0.values(), end: Some(f1.values()), k: opts.k, floor: opts.floor };
    let mut x0 = Vec::with_capacity((opts.k - 1) * m);
    if f0.values() == f1.values() {
        let dt = 1.0 / opts.k as f64;
        let path = GcePath {
            time_nodes: (0..=opts.k).map(|j| j as f64 * dt).collect(),
            densities: alloc::vec![f0.clone(); opts.k + 1],
            fields: alloc::vec![GrazingField::zeros(op); opts.k],
        };
        return Ok(Distance {
            d: 0.0,
            path,
            per_interval_action: alloc::vec![0.0; opts.k],
            iterations: 0,
            floor_sensitivity: opts.floor_check.then_some(0.0),
        });
    }
    for j in 1..opts.k {
        let t = j as f64 / opts.k as f64;
        x0.extend(f0.values().iter().zip(f1.values()).map(|(a, b)| (1.0 - t) * a + t * b));
    }
    let lopts = LbfgsOptions { max_iter: opts.max_iter, rel_tol: opts.rel_tol, ..LbfgsOptions::default() };
    let (x, iterations) = if x0.is_empty() {
        (x0, 0)
    } else {
        let ret = Retraction::new(op, f0.values(), &x0);
        let u0 = ret.vars_of(&x0);
        let res = lbfgs::minimize(
            |u| {
                let x = ret.map(u)?;
                let ev = prob.eval(&x)?;
                Some((ev.cost, ret.pull_back(&x, &ev.grad)?))
            },
            u0,
            &lopts,
        )
        .ok_or_else(|| Error::Infeasible("initial interpolant is singular".to_string()))?;
        if !res.converged && res.last_change > 1e-8 {
            return Err(Error::NotConverged { iterations: res.iterations, residual: res.last_change });
        }
        let x = ret.map(&res.x).ok_or_else(|| Error::Infeasible("moment constraints lost".to_string()))?;
        (x, res.iterations)
    };
    let ev = prob.eval(&x).ok_or_else(|| Error::Infeasible("optimizer left the domain".to_string()))?;
    let dt = 1.0 / opts.k as f64;
    let path = prob.build_path(&x, &ev)?;
    let d = math::sqrt(ev.cost.max(0.0));
    let floor_sensitivity = if opts.floor_check {
        let o2 = DistanceOptions { floor: 1e-12, floor_check: false, ..*opts };
        Some(math::fabs(landau_distance(op, f0, f1, &o2)?.d - d))
    } else {
        None
    };
    Ok(Distance {
        d,
        path,
        per_interval_action: ev.slice_costs.iter().map(|c| c / dt).collect(),
        iterations,
        floor_sensitivity,
    })
}

/// Exponential tilt `f·exp(θ₀ + θ·x + θ_{d+1}|x|²)` of `f` with the same
/// mass, momentum and energy as `target`.
pub fn match_invariants(f: &GridDensity, target: &GridDensity) -> Result<GridDensity> {
    let g = f.grid();
    let d = g.dim;
    let q = d + 2;
    let feats: Vec<Vec<f64>> = g
        .points()
        .iter()
        .map(|x| {
            let mut v = alloc::vec![1.0];
            v.extend_from_slice(&x[..d]);
            v.push(linalg::norm2(x));
            v
        })
        .collect();
    let c = g.cell_volume();
    let mut goal = alloc::vec![0.0; q];
    for (ft, t) in feats.iter().zip(target.values()) {
        for i in 0..q {
            goal[i] += t * ft[i] * c;
        }
    }
    let mut theta = alloc::vec![0.0; q];
    let tilt = |theta: &[f64]| -> Vec<f64> {
        f.values()
            .iter()
            .zip(&feats)
            .map(|(v, ft)| v * math::exp(ft.iter().zip(theta).map(|(a, b)| a * b).sum::<f64>()))
            .collect()
    };
    let mut residual = f64::INFINITY;
    for _ in 0..100 {
        let vals = tilt(&theta);
        let mut grad = DVector::zeros(q);
        let mut hess = DMatrix::zeros(q, q);
        for (v, ft) in vals.iter().zip(&feats) {
            for i in 0..q {
                grad[i] += v * ft[i] * c;
                for j in 0..q {
                    hess[(i, j)] += v * ft[i] * ft[j] * c;
                }
            }
        }
        for i in 0..q {
            grad[i] -= goal[i];
        }
        residual = grad.amax();
        if residual < 1e-14 {
            return GridDensity::new(*g, vals);
        }
        let step = hess.cholesky().ok_or_else(|| Error::Infeasible("singular moment matrix".to_string()))?.solve(&grad);
        for i in 0..q {
            theta[i] -= step[i];
        }
    }
    Err(Error::NotConverged { iterations: 100, residual })
}
