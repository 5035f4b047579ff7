//! Domain types: model parameters, grids, discrete measures, trajectories,
//! and moment/entropy primitives.

use crate::math;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{self, Vec3, ZERO};

/// Cells with values below this floor contribute `0·log 0 = 0`.
pub const ENTROPY_FLOOR: f64 = 1e-300;

/// Mass that may be lost to domain truncation before a grid is rejected.
pub const TRUNCATION_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    pub dim: usize,
    pub gamma: f64,
    pub epsilon: f64,
    pub s: f64,
}

impl ModelParams {
    pub fn new(dim: usize, gamma: f64, epsilon: f64, s: f64) -> Result<Self> {
        let p = ModelParams { dim, gamma, epsilon, s };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.dim) {
            return Err(Error::param("dimension must be 1, 2 or 3"));
        }
        if !(-4.0..=0.0).contains(&self.gamma) {
            return Err(Error::param("gamma must lie in [-4, 0]"));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::param("epsilon must be positive"));
        }
        if !(self.s > 0.0 && self.s.is_finite()) {
            return Err(Error::param("s must be positive"));
        }
        Ok(())
    }
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams { dim: 3, gamma: 0.0, epsilon: 0.3, s: 1.0 }
    }
}

/// Uniform Cartesian grid on `center + [−L, L]^d` with `n` nodes per axis
/// (both end points included).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub dim: usize,
    pub center: Vec3,
    pub half_width: f64,
    pub n: usize,
}

impl GridSpec {
    pub fn new(dim: usize, half_width: f64, n: usize) -> Result<Self> {
        Self::with_center(dim, ZERO, half_width, n)
    }

    pub fn with_center(dim: usize, center: Vec3, half_width: f64, n: usize) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::param("grid dimension must be 1, 2 or 3"));
        }
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(Error::param("grid half-width must be positive"));
        }
        if n < 3 {
            return Err(Error::param("grid needs at least 3 points per axis"));
        }
        let mut c = ZERO;
        c[..dim].copy_from_slice(&center[..dim]);
        Ok(GridSpec { dim, center: c, half_width, n })
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / (self.n - 1) as f64
    }

    pub fn cell_volume(&self) -> f64 {
        math::pow(self.spacing(), self.dim as f64)
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Multi-index of a linear index; axis 0 varies slowest.
    pub fn multi_index(&self, k: usize) -> [usize; 3] {
        let mut idx = [0usize; 3];
        let mut r = k;
        for a in (0..self.dim).rev() {
            idx[a] = r % self.n;
            r /= self.n;
        }
        idx
    }

    pub fn linear_index(&self, idx: &[usize; 3]) -> usize {
        let mut k = 0;
        for &i in idx.iter().take(self.dim) {
            k = k * self.n + i;
        }
        k
    }

    pub fn point(&self, k: usize) -> Vec3 {
        let idx = self.multi_index(k);
        let h = self.spacing();
        let mut x = ZERO;
        for a in 0..self.dim {
            x[a] = self.center[a] - self.half_width + idx[a] as f64 * h;
        }
        x
    }

    pub fn points(&self) -> Vec<Vec3> {
        (0..self.len()).map(|k| self.point(k)).collect()
    }

    fn stride(&self, axis: usize) -> usize {
        self.n.pow((self.dim - 1 - axis) as u32)
    }

    /// Second-order finite-difference gradient: central in the interior,
    /// one-sided at the boundary. Exact on quadratics.
    pub fn gradient(&self, values: &[f64]) -> Vec<Vec3> {
        assert_eq!(values.len(), self.len());
        let h2 = 2.0 * self.spacing();
        let n = self.n;
        let mut out = alloc::vec![ZERO; values.len()];
        for a in 0..self.dim {
            let st = self.stride(a);
            for (k, g) in out.iter_mut().enumerate() {
                let i = self.multi_index(k)[a];
                g[a] = if i == 0 {
                    (-3.0 * values[k] + 4.0 * values[k + st] - values[k + 2 * st]) / h2
                } else if i == n - 1 {
                    (3.0 * values[k] - 4.0 * values[k - st] + values[k - 2 * st]) / h2
                } else {
                    (values[k + st] - values[k - st]) / h2
                };
            }
        }
        out
    }

    pub fn same_as(&self, other: &GridSpec) -> bool {
        self == other
    }
}

/// Unnormalized scalar values on a grid (convolutions, test functions).
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    pub grid: GridSpec,
    pub values: Vec<f64>,
}

/// Non-negative grid density with `Σ f_k · cell_volume = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDensity {
    grid: GridSpec,
    values: Vec<f64>,
}

impl GridDensity {
    /// Validates non-negativity and normalizes to unit mass.
    pub fn new(grid: GridSpec, mut values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::param("value count does not match grid"));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::param("density values must be finite and non-negative"));
        }
        let mass: f64 = values.iter().sum::<f64>() * grid.cell_volume();
        if mass <= 0.0 {
            return Err(Error::param("density has zero mass"));
        }
        for v in values.iter_mut() {
            *v /= mass;
        }
        Ok(GridDensity { grid, values })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn cell_volume(&self) -> f64 {
        self.grid.cell_volume()
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// L¹ distance `Σ |f − g| c`.
    pub fn l1_distance(&self, other: &GridDensity) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| math::fabs(a - b))
            .sum::<f64>()
            * self.cell_volume()
    }
}

/// Weighted particle cloud with unit total weight.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble {
    dim: usize,
    positions: Vec<Vec3>,
    weights: Vec<f64>,
}

impl ParticleEnsemble {
    /// Validates and normalizes the weights. Unused coordinates (beyond `dim`)
    /// are zeroed.
    pub fn new(dim: usize, mut positions: Vec<Vec3>, mut weights: Vec<f64>) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::param("dimension must be 1, 2 or 3"));
        }
        if positions.is_empty() || positions.len() != weights.len() {
            return Err(Error::param("need equally many (non-zero) positions and weights"));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::param("weights must be finite and non-negative"));
        }
        if positions.iter().any(|p| p.iter().any(|x| !x.is_finite())) {
            return Err(Error::param("positions must be finite"));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::param("weights sum to zero"));
        }
        for w in weights.iter_mut() {
            *w /= total;
        }
        for p in positions.iter_mut() {
            for x in p.iter_mut().skip(dim) {
                *x = 0.0;
            }
        }
        Ok(ParticleEnsemble { dim, positions, weights })
    }

    /// Equal weights `1/N`.
    pub fn uniform(dim: usize, positions: Vec<Vec3>) -> Result<Self> {
        let n = positions.len();
        Self::new(dim, positions, alloc::vec![1.0; n])
    }

    pub fn positions(&self) -> &[Vec3] {
        &self.positions
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn with_positions(&self, positions: Vec<Vec3>) -> Result<Self> {
        if positions.len() != self.positions.len() {
            return Err(Error::param("position count changed"));
        }
        let mut out = self.clone();
        out.positions = positions;
        Ok(out)
    }

    /// Atoms at cell nodes with weights `f_k c`; empty cells dropped.
    pub fn from_grid(f: &GridDensity) -> Result<Self> {
        let c = f.cell_volume();
        let (pos, w): (Vec<_>, Vec<_>) = (0..f.grid.len())
            .filter(|&k| f.values[k] > 0.0)
            .map(|k| (f.grid.point(k), f.values[k] * c))
            .unzip();
        Self::new(f.grid.dim, pos, w)
    }

    pub fn max_speed(&self) -> f64 {
        self.positions.iter().map(linalg::norm).fold(0.0, f64::max)
    }
}

/// Common view of discrete measures as weighted atoms.
pub trait Measure {
    fn dim(&self) -> usize;
    fn atom_count(&self) -> usize;
    fn atom(&self, i: usize) -> (Vec3, f64);
}

impl Measure for ParticleEnsemble {
    fn dim(&self) -> usize {
        self.dim
    }
    fn atom_count(&self) -> usize {
        self.positions.len()
    }
    fn atom(&self, i: usize) -> (Vec3, f64) {
        (self.positions[i], self.weights[i])
    }
}

impl Measure for GridDensity {
    fn dim(&self) -> usize {
        self.grid.dim
    }
    fn atom_count(&self) -> usize {
        self.values.len()
    }
    fn atom(&self, i: usize) -> (Vec3, f64) {
        (self.grid.point(i), self.values[i] * self.grid.cell_volume())
    }
}

/// `m_p(μ) = ∫⟨v⟩^p dμ`.
pub fn moment<M: Measure>(mu: &M, p: f64) -> f64 {
    (0..mu.atom_count())
        .map(|i| {
            let (v, w) = mu.atom(i);
            w * math::pow(linalg::bracket(&v), p)
        })
        .sum()
}

pub fn mass<M: Measure>(mu: &M) -> f64 {
    (0..mu.atom_count()).map(|i| mu.atom(i).1).sum()
}

pub fn momentum<M: Measure>(mu: &M) -> Vec3 {
    let mut p = ZERO;
    for i in 0..mu.atom_count() {
        let (v, w) = mu.atom(i);
        linalg::axpy(&mut p, w, &v);
    }
    p
}

/// `∫|v|² dμ`.
pub fn energy<M: Measure>(mu: &M) -> f64 {
    (0..mu.atom_count())
        .map(|i| {
            let (v, w) = mu.atom(i);
            w * linalg::norm2(&v)
        })
        .sum()
}

/// Per-axis second moments `∫v_a² dμ`.
pub fn directional_moments<M: Measure>(mu: &M) -> Vec3 {
    let mut out = ZERO;
    for i in 0..mu.atom_count() {
        let (v, w) = mu.atom(i);
        for a in 0..3 {
            out[a] += w * v[a] * v[a];
        }
    }
    out
}

/// `Σ f log f · c` with `0 log 0 = 0`.
pub fn boltzmann_entropy(f: &GridDensity) -> f64 {
    f.values
        .iter()
        .filter(|&&v| v >= ENTROPY_FLOOR)
        .map(|&v| v * math::log(v))
        .sum::<f64>()
        * f.cell_volume()
}

/// Discrete Maxwellian with variance `temperature` per component.
pub fn make_maxwellian(grid: &GridSpec, mean: &Vec3, temperature: f64) -> Result<GridDensity> {
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(Error::param("temperature must be positive"));
    }
    make_gaussian(grid, mean, &[temperature; 3])
}

/// Axis-aligned Gaussian with per-axis variances.
pub fn make_gaussian(grid: &GridSpec, mean: &Vec3, variances: &[f64; 3]) -> Result<GridDensity> {
    let sd = &variances[..grid.dim];
    if sd.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
        return Err(Error::param("variances must be positive"));
    }
    // Analytic mass of the truncated box, one axis at a time.
    let mut kept = 1.0;
    for a in 0..grid.dim {
        let s = math::sqrt(2.0 * variances[a]);
        let lo = (grid.center[a] - grid.half_width - mean[a]) / s;
        let hi = (grid.center[a] + grid.half_width - mean[a]) / s;
        kept *= 0.5 * (libm::erf(hi) - libm::erf(lo));
    }
    if kept < 1.0 - TRUNCATION_TOLERANCE {
        return Err(Error::GridTooSmall { mass: kept });
    }
    let values = (0..grid.len())
        .map(|k| {
            let x = grid.point(k);
            let e: f64 = (0..grid.dim)
                .map(|a| (x[a] - mean[a]) * (x[a] - mean[a]) / (2.0 * variances[a]))
                .sum();
            math::exp(-e)
        })
        .collect();
    GridDensity::new(*grid, values)
}

/// Per-time record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Diagnostics {
    pub mass: f64,
    pub momentum: Vec3,
    pub energy: f64,
    /// Boltzmann entropy; `None` for atomic measures.
    pub entropy: Option<f64>,
    pub regularized_entropy: f64,
    pub dissipation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<S> {
    times: Vec<f64>,
    states: Vec<S>,
    diagnostics: Vec<Diagnostics>,
}

impl<S> Default for Trajectory<S> {
    fn default() -> Self {
        Trajectory { times: Vec::new(), states: Vec::new(), diagnostics: Vec::new() }
    }
}

impl<S> Trajectory<S> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, t: f64, state: S, diag: Diagnostics) -> Result<()> {
        if let Some(&last) = self.times.last() {
            if !(t > last) {
                return Err(Error::param("trajectory times must increase strictly"));
            }
        }
        self.times.push(t);
        self.states.push(state);
        self.diagnostics.push(diag);
        Ok(())
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self) -> &[S] {
        &self.states
    }

    pub fn diagnostics(&self) -> &[Diagnostics] {
        &self.diagnostics
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last_state(&self) -> Option<&S> {
        self.states.last()
    }
}
