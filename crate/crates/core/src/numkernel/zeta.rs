use num_complex::Complex64;

use super::{bernoulli_even, check_finite, ComplexValue};
use crate::{Error, Result};

fn validate(s: Complex64) -> Result<()> {
    if !(s.re.is_finite() && s.im.is_finite()) {
        return Err(Error::domain("zeta", format!("non-finite argument {s}")));
    }
    if s.re == 1.0 && s.im == 0.0 {
        return Err(Error::Pole {
            function: "zeta",
            at: "1".into(),
        });
    }
    if s.re <= 0.0 {
        return Err(Error::domain("zeta", format!("Re s = {} <= 0", s.re)));
    }
    Ok(())
}

/// Riemann zeta for Re s > 0, s != 1.
pub fn zeta_complex(s: ComplexValue) -> Result<ComplexValue> {
    validate(s)?;
    check_finite(zeta_euler_maclaurin(s), "zeta")
}

pub fn zeta_real(x: f64) -> Result<f64> {
    zeta_complex(Complex64::new(x, 0.0)).map(|z| z.re)
}

/// Euler-Maclaurin summation with N terms and B_2..B_30 corrections.
pub fn zeta_euler_maclaurin(s: Complex64) -> Complex64 {
    let n = (2.0 * (s.norm() + 30.0) / std::f64::consts::PI).ceil().max(20.0) as u32;
    let mut head = Complex64::new(0.0, 0.0);
    let mut comp = Complex64::new(0.0, 0.0);
    for k in (1..n).rev() {
        // summed smallest-first with Neumaier compensation per component
        let t = (-s * (k as f64).ln()).exp();
        let sum = head + t;
        comp.re += if head.re.abs() >= t.re.abs() {
            (head.re - sum.re) + t.re
        } else {
            (t.re - sum.re) + head.re
        };
        comp.im += if head.im.abs() >= t.im.abs() {
            (head.im - sum.im) + t.im
        } else {
            (t.im - sum.im) + head.im
        };
        head = sum;
    }
    let nf = n as f64;
    let ln_n = nf.ln();
    let n_pow = (-s * ln_n).exp();
    let one = Complex64::new(1.0, 0.0);
    let mut tail = n_pow * nf / (s - one) + n_pow * 0.5;
    // B_{2j}/(2j)! s(s+1)...(s+2j-2) N^{-s-2j+1}
    let mut rising = s;
    let mut factorial = 2.0;
    let mut npow = n_pow / nf;
    for j in 1..=super::BERNOULLI_EVEN.len() {
        tail += rising * npow * (bernoulli_even(j) / factorial);
        let a = 2 * j as u32 - 1;
        rising *= (s + a as f64) * (s + (a + 1) as f64);
        factorial *= ((2 * j + 1) * (2 * j + 2)) as f64;
        npow /= nf * nf;
    }
    head + comp + tail
}

/// Borwein's accelerated alternating series for eta(s), divided by
/// (1 - 2^{1-s}). Intended for moderate |Im s|.
pub fn zeta_alternating(s: ComplexValue) -> Result<ComplexValue> {
    validate(s)?;
    const N: usize = 80;
    let nf = N as f64;
    let mut d = vec![0.0f64; N + 1];
    let mut term = 1.0 / nf;
    let mut acc = term;
    d[0] = nf * acc;
    for i in 0..N {
        let fi = i as f64;
        term *= 4.0 * (nf + fi) * (nf - fi) / ((2.0 * fi + 1.0) * (2.0 * fi + 2.0));
        acc += term;
        d[i + 1] = nf * acc;
    }
    let dn = d[N];
    let mut eta = Complex64::new(0.0, 0.0);
    for k in 0..N {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        let w = sign * (d[k] - dn) / dn;
        eta += (-s * ((k + 1) as f64).ln()).exp() * w;
    }
    eta = -eta;
    let one = Complex64::new(1.0, 0.0);
    let denom = one - ((one - s) * 2f64.ln()).exp();
    if denom.norm() < 1e-8 {
        return Err(Error::domain(
            "zeta_alternating",
            format!("1 - 2^(1-s) vanishes near s = {s}"),
        ));
    }
    check_finite(eta / denom, "zeta_alternating")
}
