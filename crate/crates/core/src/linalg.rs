//! Fixed-size 3-vectors. Lower dimensions pad with zeros, which every
//! operation here preserves.

use crate::math;

pub type Vec3 = [f64; 3];
pub type Mat3 = [[f64; 3]; 3];

pub const ZERO: Vec3 = [0.0; 3];

#[inline]
pub fn add(a: &Vec3, b: &Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn sub(a: &Vec3, b: &Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn scale(a: &Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

#[inline]
pub fn axpy(y: &mut Vec3, s: f64, x: &Vec3) {
    y[0] += s * x[0];
    y[1] += s * x[1];
    y[2] += s * x[2];
}

#[inline]
pub fn dot(a: &Vec3, b: &Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn norm2(a: &Vec3) -> f64 {
    dot(a, a)
}

#[inline]
pub fn norm(a: &Vec3) -> f64 {
    math::sqrt(dot(a, a))
}

#[inline]
pub fn cross(a: &Vec3, b: &Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// `Π[z] x = x − (z·x / |z|²) z`; caller guarantees `z ≠ 0`.
#[inline]
pub fn project_perp(z: &Vec3, x: &Vec3) -> Vec3 {
    let c = dot(z, x) / norm2(z);
    [x[0] - c * z[0], x[1] - c * z[1], x[2] - c * z[2]]
}

#[inline]
pub fn mat_vec(m: &Mat3, x: &Vec3) -> Vec3 {
    [dot(&m[0], x), dot(&m[1], x), dot(&m[2], x)]
}

/// Japanese bracket `⟨v⟩ = sqrt(1 + |v|²)`.
#[inline]
pub fn bracket(v: &Vec3) -> f64 {
    math::sqrt(1.0 + norm2(v))
}

/// Maps `f` over `0..n`, in parallel when the `parallel` feature is on. Each
/// output depends only on its own index, so results do not depend on the
/// thread count.
pub fn par_map<T, F>(n: usize, f: F) -> alloc::vec::Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}
