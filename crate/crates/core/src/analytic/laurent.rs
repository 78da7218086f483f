use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{local_log, CutoffPolynomial, XiConstants};
use crate::numkernel::{ln_gamma_complex, stieltjes, zeta_complex};
use crate::trace::TraceParams;
use crate::{ComplexValue, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LaurentChoice {
    /// zeta^(q)(1+s)^2
    Squared,
    /// zeta^(q)(1+s) zeta^(q)'(1+s)
    Cross,
}

/// sum_i coefficients[i] s^{min_order + i}, normalized by (phi(q)/q)^2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaurentSeries {
    pub min_order: i32,
    pub coefficients: Vec<f64>,
}

impl LaurentSeries {
    pub fn coefficient(&self, order: i32) -> f64 {
        usize::try_from(order - self.min_order)
            .ok()
            .and_then(|i| self.coefficients.get(i).copied())
            .unwrap_or(0.0)
    }

    pub fn eval(&self, s: ComplexValue) -> ComplexValue {
        self.coefficients
            .iter()
            .enumerate()
            .map(|(i, c)| s.powi(self.min_order + i as i32) * c)
            .sum()
    }
}

/// [a_{-2}, a_{-1}, a_0].
pub(crate) fn a_closed(p: u64) -> Result<[f64; 3]> {
    let (g0, g1) = (stieltjes(0)?, stieltjes(1)?);
    let l = (p as f64).ln();
    let pm = p as f64 - 1.0;
    let u = local_log(p);
    Ok([1.0, 2.0 * u + 2.0 * g0, u * u - (l * l - 4.0 * g0 * l) / pm + g0 * g0 - 2.0 * g1])
}

/// [b_{-3}, b_{-2}, b_{-1} = 0, b_0].
pub(crate) fn b_closed(p: u64) -> Result<[f64; 4]> {
    let (g0, g1, g2) = (stieltjes(0)?, stieltjes(1)?, stieltjes(2)?);
    let l = (p as f64).ln();
    let pm = p as f64 - 1.0;
    let b0 = -(l.powi(3) - 2.0 * g0 * l * l) / (2.0 * pm * pm)
        + (l.powi(3) - 6.0 * g0 * l * l + 6.0 * (g0 * g0 - 2.0 * g1) * l) / (6.0 * pm)
        - g0 * g1
        + g2 / 2.0;
    Ok([-1.0, -local_log(p) - g0, 0.0, b0])
}

/// zeta(s)(1 - p^{-s}).
fn zeta_local(p: u64, s: Complex64) -> Result<Complex64> {
    let factor = Complex64::new(1.0, 0.0) - (-s * (p as f64).ln()).exp();
    Ok(zeta_complex(s)? * factor)
}

/// Derivative of zeta^(q) at s by a Cauchy integral on a circle of radius r.
fn zeta_local_derivative(p: u64, s: Complex64, r: f64) -> Result<Complex64> {
    const N: usize = 32;
    let mut acc = Complex64::new(0.0, 0.0);
    for j in 0..N {
        let w = Complex64::from_polar(1.0, 2.0 * PI * (j as f64 + 0.5) / N as f64);
        acc += zeta_local(p, s + w * r)? / w;
    }
    Ok(acc / (N as f64 * r))
}

fn local_density(p: u64) -> f64 {
    1.0 - 1.0 / p as f64
}

/// Normalized product whose Laurent data is requested, at 1 + s.
fn generating(p: u64, choice: LaurentChoice, s: Complex64) -> Result<Complex64> {
    let one = Complex64::new(1.0, 0.0);
    let z = zeta_local(p, one + s)?;
    let v = match choice {
        LaurentChoice::Squared => z * z,
        LaurentChoice::Cross => z * zeta_local_derivative(p, one + s, 0.5 * s.norm())?,
    };
    Ok(v / local_density(p).powi(2))
}

/// Gaussian elimination with partial pivoting on a small dense system.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for c in col..n {
                a[row][c] -= f * a[col][c];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|c| a[row][c] * x[c]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

/// Laurent coefficients recovered by sampling s^order * (product) at six real
/// points and interpolating a quintic.
pub fn laurent_fit(p: u64, choice: LaurentChoice) -> Result<LaurentSeries> {
    let order = match choice {
        LaurentChoice::Squared => 2,
        LaurentChoice::Cross => 3,
    };
    let nodes = [-3e-2, -2e-2, -1e-2, 1e-2, 2e-2, 3e-2];
    let mut a = Vec::new();
    let mut b = Vec::new();
    for &s in &nodes {
        let v = generating(p, choice, Complex64::new(s, 0.0))?.re * s.powi(order);
        a.push((0..6).map(|i| s.powi(i)).collect());
        b.push(v);
    }
    let c = solve(a, b);
    Ok(LaurentSeries {
        min_order: -order,
        coefficients: c[..=order as usize].to_vec(),
    })
}

/// Printed closed forms, checked against the numeric fit.
pub fn laurent_constants(p: u64, choice: LaurentChoice) -> Result<LaurentSeries> {
    if !crate::arith::is_prime(p) {
        return Err(Error::domain("laurent_constants", format!("{p} is not prime")));
    }
    let closed = match choice {
        LaurentChoice::Squared => LaurentSeries { min_order: -2, coefficients: a_closed(p)?.to_vec() },
        LaurentChoice::Cross => LaurentSeries { min_order: -3, coefficients: b_closed(p)?.to_vec() },
    };
    let fit = laurent_fit(p, choice)?;
    for (i, (c, f)) in closed.coefficients.iter().zip(&fit.coefficients).enumerate() {
        let order = closed.min_order + i as i32;
        let limit = if choice == LaurentChoice::Cross && order == -1 { 1e-6 } else { 1e-4 * c.abs().max(1.0) };
        if (c - f).abs() > limit {
            return Err(Error::Verification {
                what: format!("Laurent coefficient of order {order} ({choice:?}, p = {p})"),
                computed: *c,
                expected: *f,
            });
        }
    }
    Ok(closed)
}

fn phi_ratio(params: &TraceParams) -> Result<f64> {
    if params.nu == 0 {
        return Err(Error::domain("residue", "level must be divisible by p"));
    }
    Ok(local_density(params.p))
}

/// (phi/q)^2 (a_{-2}F''/2 + a_{-1}F' + a_0 F) or (phi/q)^2 (b_{-3}F'''/6 + b_{-2}F''/2 + b_0 F),
/// given F^{(j)}(0) for j = 0..=3.
pub fn residue_from_derivatives(p: u64, choice: LaurentChoice, f: &[f64; 4]) -> Result<f64> {
    let r = local_density(p);
    let inner = match choice {
        LaurentChoice::Squared => {
            let a = a_closed(p)?;
            a[0] * f[2] / 2.0 + a[1] * f[1] + a[2] * f[0]
        }
        LaurentChoice::Cross => {
            let b = b_closed(p)?;
            b[0] * f[3] / 6.0 + b[1] * f[2] / 2.0 + b[3] * f[0]
        }
    };
    Ok(r * r * inner)
}

/// Residue at s = 0 of (product) F(s)/s with F = Gamma(s+k/2)/Gamma(k/2) q_hat^s G(s).
pub fn residue_closed_form(params: &TraceParams, g: &CutoffPolynomial, choice: LaurentChoice) -> Result<f64> {
    phi_ratio(params)?;
    let xi = XiConstants::new(params.k, g)?;
    let x = params.q_hat().ln();
    let f = [0, 1, 2, 3].map(|j| xi.f_derivative(j, x));
    residue_from_derivatives(params.p, choice, &f)
}

pub const ORACLE_RADIUS: f64 = 0.05;
pub const ORACLE_NODES: usize = 4096;

/// (2 pi i)^{-1} times the contour integral over |s| = 0.05 of (product) F(s)/s.
pub fn residue_oracle(params: &TraceParams, g: &CutoffPolynomial, choice: LaurentChoice) -> Result<f64> {
    let r = phi_ratio(params)?;
    let half_k = params.k as f64 / 2.0;
    let lg0 = ln_gamma_complex(Complex64::new(half_k, 0.0))?;
    let x = params.q_hat().ln();
    let mut acc = crate::CompensatedSum::new();
    for j in 0..ORACLE_NODES {
        let theta = 2.0 * PI * (j as f64 + 0.5) / ORACLE_NODES as f64;
        let s = Complex64::from_polar(ORACLE_RADIUS, theta);
        let f = (ln_gamma_complex(s + half_k)? - lg0 + s * x).exp() * g.eval(s);
        // ds / (2 pi i) = s dtheta / (2 pi); the 1/s of the integrand cancels.
        acc += (generating(params.p, choice, s)? * f).re;
    }
    Ok(r * r * acc.value() / ORACLE_NODES as f64)
}

/// Closed-form residue, accepted only if it matches the contour oracle to 1e-8 relative.
pub fn residue_engine(params: &TraceParams, g: &CutoffPolynomial, choice: LaurentChoice) -> Result<f64> {
    let closed = residue_closed_form(params, g, choice)?;
    let oracle = residue_oracle(params, g, choice)?;
    if (closed - oracle).abs() > 1e-8 * oracle.abs().max(1e-300) {
        return Err(Error::Verification {
            what: format!("residue ({choice:?})"),
            computed: closed,
            expected: oracle,
        });
    }
    Ok(closed)
}
