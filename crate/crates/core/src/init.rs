//! Initial data: sampled and deterministic particle clouds, grid densities,
//! and seed expansion.

use crate::math;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::core::{make_gaussian, GridDensity, GridSpec, ParticleEnsemble};
use crate::error::{Error, Result};
use crate::linalg::{Vec3, ZERO};

/// SplitMix64 output for `(seed, stream)`; gives each component its own seed.
pub fn splitmix64(seed: u64, stream: u64) -> u64 {
    let mut z = seed.wrapping_add(stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn check_variances(dim: usize, variances: &[f64; 3]) -> Result<()> {
    if variances[..dim].iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::param("variances must be positive"));
    }
    Ok(())
}

/// `n` i.i.d. samples of an axis-aligned Gaussian, equal weights.
pub fn sample_gaussian<R: Rng + ?Sized>(rng: &mut R, dim: usize, n: usize, mean: &Vec3, variances: &[f64; 3]) -> Result<ParticleEnsemble> {
    check_variances(dim, variances)?;
    let pos = (0..n)
        .map(|_| {
            let mut v = ZERO;
            for a in 0..dim {
                let z: f64 = StandardNormal.sample(rng);
                v[a] = mean[a] + math::sqrt(variances[a]) * z;
            }
            v
        })
        .collect();
    ParticleEnsemble::uniform(dim, pos)
}

/// Equal-weight mixture of two isotropic Gaussians at `±separation/2` along
/// the first axis.
pub fn sample_bimodal<R: Rng + ?Sized>(rng: &mut R, dim: usize, n: usize, separation: f64, variance: f64) -> Result<ParticleEnsemble> {
    let mut pos = Vec::with_capacity(n);
    for i in 0..n {
        let mut mean = ZERO;
        mean[0] = if i % 2 == 0 { 0.5 * separation } else { -0.5 * separation };
        let one = sample_gaussian(rng, dim, 1, &mean, &[variance; 3])?;
        pos.push(one.positions()[0]);
    }
    ParticleEnsemble::uniform(dim, pos)
}

/// Tensor lattice of `n^d` points on `mean ± width·σ` per axis with weights
/// proportional to the Gaussian density.
pub fn gaussian_lattice(dim: usize, n: usize, mean: &Vec3, variances: &[f64; 3], width: f64) -> Result<ParticleEnsemble> {
    check_variances(dim, variances)?;
    if n < 2 {
        return Err(Error::param("lattice needs at least 2 points per axis"));
    }
    let total = n.pow(dim as u32);
    let mut pos = Vec::with_capacity(total);
    let mut w = Vec::with_capacity(total);
    for k in 0..total {
        let mut v = ZERO;
        let mut e = 0.0;
        let mut r = k;
        for a in (0..dim).rev() {
            let sd = math::sqrt(variances[a]);
            let u = -width + 2.0 * width * (r % n) as f64 / (n - 1) as f64;
            r /= n;
            v[a] = mean[a] + sd * u;
            e += 0.5 * u * u;
        }
        pos.push(v);
        w.push(math::exp(-e));
    }
    ParticleEnsemble::new(dim, pos, w)
}

/// Equal mixture of two Gaussians at `±separation/2` on the first axis.
pub fn bimodal_density(grid: &GridSpec, separation: f64, variance: f64) -> Result<GridDensity> {
    let mut m1 = ZERO;
    m1[0] = 0.5 * separation;
    let mut m2 = ZERO;
    m2[0] = -0.5 * separation;
    let a = make_gaussian(grid, &m1, &[variance; 3])?;
    let b = make_gaussian(grid, &m2, &[variance; 3])?;
    let vals = a.values().iter().zip(b.values()).map(|(x, y)| x + y).collect();
    GridDensity::new(*grid, vals)
}

/// `exp(−|x|²/(2σ²) + a Σ_i c_i cos(k_i·x + θ_i))` with four random modes;
/// strictly positive on the grid.
pub fn random_smooth_density<R: Rng + ?Sized>(rng: &mut R, grid: &GridSpec, variance: f64, amplitude: f64) -> Result<GridDensity> {
    let d = grid.dim;
    let modes: Vec<(Vec3, f64, f64)> = (0..4)
        .map(|_| {
            let mut k = ZERO;
            for a in k.iter_mut().take(d) {
                *a = rng.gen_range(-1.5..1.5);
            }
            (k, rng.gen_range(0.0..core::f64::consts::TAU), rng.gen_range(-1.0..1.0))
        })
        .collect();
    let vals = grid
        .points()
        .iter()
        .map(|x| {
            let bump: f64 = modes.iter().map(|(k, th, c)| c * math::cos(crate::linalg::dot(k, x) + th)).sum();
            math::exp(-crate::linalg::norm2(x) / (2.0 * variance) + amplitude * bump)
        })
        .collect();
    GridDensity::new(*grid, vals)
}
