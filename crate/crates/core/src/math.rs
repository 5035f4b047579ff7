//! Float functions: std intrinsics with the `std` feature, `libm` otherwise.

use num_traits::Float;

#[inline(always)]
pub fn exp(x: f64) -> f64 {
    Float::exp(x)
}
#[inline(always)]
pub fn sqrt(x: f64) -> f64 {
    Float::sqrt(x)
}
#[inline(always)]
pub fn log(x: f64) -> f64 {
    Float::ln(x)
}
#[inline(always)]
pub fn pow(x: f64, p: f64) -> f64 {
    Float::powf(x, p)
}
#[inline(always)]
pub fn fabs(x: f64) -> f64 {
    Float::abs(x)
}
#[inline(always)]
pub fn ceil(x: f64) -> f64 {
    Float::ceil(x)
}
#[inline(always)]
pub fn floor(x: f64) -> f64 {
    Float::floor(x)
}
#[inline(always)]
pub fn sin(x: f64) -> f64 {
    Float::sin(x)
}
#[inline(always)]
pub fn cos(x: f64) -> f64 {
    Float::cos(x)
}
