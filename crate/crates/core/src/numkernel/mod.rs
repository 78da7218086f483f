//! Special functions: complex Gamma, Gamma log-derivatives, integer-order
//! Bessel J, the Riemann zeta function and the first Stieltjes constants.

mod bessel;
mod gamma;
mod stieltjes;
mod zeta;

pub use bessel::{bessel_j, bessel_j_hankel, bessel_j_miller, bessel_j_series, BesselRegime};
pub use gamma::{
    digamma, gamma_complex, gamma_log_derivatives, ln_gamma_complex, polygamma1, polygamma2,
    GammaDerivatives,
};
pub use stieltjes::stieltjes;
pub use zeta::{zeta_alternating, zeta_complex, zeta_euler_maclaurin, zeta_real};

pub type ComplexValue = num_complex::Complex64;

/// B_2, B_4, ..., B_30 as (numerator, denominator).
pub(crate) const BERNOULLI_EVEN: [(f64, f64); 15] = [
    (1.0, 6.0),
    (-1.0, 30.0),
    (1.0, 42.0),
    (-1.0, 30.0),
    (5.0, 66.0),
    (-691.0, 2730.0),
    (7.0, 6.0),
    (-3617.0, 510.0),
    (43867.0, 798.0),
    (-174611.0, 330.0),
    (854513.0, 138.0),
    (-236364091.0, 2730.0),
    (8553103.0, 6.0),
    (-23749461029.0, 870.0),
    (8615841276005.0, 14322.0),
];

#[inline]
pub(crate) fn bernoulli_even(j: usize) -> f64 {
    let (a, b) = BERNOULLI_EVEN[j - 1];
    a / b
}

pub(crate) fn check_finite(z: ComplexValue, function: &'static str) -> crate::Result<ComplexValue> {
    if z.re.is_finite() && z.im.is_finite() {
        Ok(z)
    } else {
        Err(crate::Error::Overflow(function))
    }
}
