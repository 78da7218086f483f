//! Smooth cutoffs T and U, the constant g_k, Laurent data of the local zeta
//! factors and the cubic Q governing the third moment.

mod cutoff;
mod laurent;

pub use cutoff::{shared_kernel, t_cutoff, u_cutoff, CutoffKernel, KernelKind, QuadratureProbe, ENVELOPE_SIGMAS};
pub use laurent::{
    laurent_constants, laurent_fit, residue_closed_form, residue_from_derivatives, residue_engine, residue_oracle, LaurentChoice,
    LaurentSeries,
};

use num_complex::Complex64;
use num_rational::Rational64;
use serde::{Deserialize, Serialize};

use crate::numkernel::{gamma_log_derivatives, stieltjes};
use crate::{ComplexValue, Error, Result};

/// Even polynomial G with G(0) = 1 and G(-1) = G(-2) = 0, stored by ascending powers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutoffPolynomial {
    coefficients: Vec<f64>,
}

impl CutoffPolynomial {
    pub fn new(coefficients: Vec<f64>) -> Result<Self> {
        let g = CutoffPolynomial { coefficients };
        let c = &g.coefficients;
        let bad = |why: &str| Err(Error::domain("CutoffPolynomial", why.to_string()));
        if c.len() < 3 || c.iter().all(|v| *v == 0.0) {
            return bad("degree must be at least 2");
        }
        if c.iter().skip(1).step_by(2).any(|v| *v != 0.0) {
            return bad("polynomial must be even");
        }
        if (c[0] - 1.0).abs() > 1e-14 {
            return bad("G(0) must be 1");
        }
        for root in [-1.0, -2.0] {
            if g.eval_real(root).abs() > 1e-12 {
                return bad("G(-1) and G(-2) must vanish");
            }
        }
        Ok(g)
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn eval(&self, s: ComplexValue) -> ComplexValue {
        self.coefficients
            .iter()
            .rev()
            .fold(Complex64::new(0.0, 0.0), |acc, c| acc * s + c)
    }

    pub fn eval_real(&self, s: f64) -> f64 {
        self.coefficients.iter().rev().fold(0.0, |acc, c| acc * s + c)
    }

    /// G''(0).
    pub fn second_derivative_at_zero(&self) -> f64 {
        2.0 * self.coefficients[2]
    }
}

/// G(s) = (1 - s^2)(1 - s^2/4).
pub fn default_g() -> CutoffPolynomial {
    CutoffPolynomial::new(vec![1.0, 0.0, -1.25, 0.0, 0.25]).expect("default G is admissible")
}

fn check_weight_prime(k: u32, p: u64) -> Result<()> {
    if k < 2 || k % 2 != 0 {
        return Err(Error::domain("analytic", format!("weight {k} must be even and >= 2")));
    }
    if !crate::arith::is_prime(p) {
        return Err(Error::domain("analytic", format!("{p} is not prime")));
    }
    Ok(())
}

/// log p/(p - 1).
pub(crate) fn local_log(p: u64) -> f64 {
    (p as f64).ln() / (p as f64 - 1.0)
}

/// g_k(p) = 2(log p/(p-1) + psi(k/2) + gamma).
pub fn g_k(k: u32, p: u64) -> Result<f64> {
    check_weight_prime(k, p)?;
    let psi = gamma_log_derivatives(k as f64 / 2.0, 1)?.first();
    Ok(2.0 * (local_log(p) + psi + stieltjes(0)?))
}

/// xi_{j,i}: F^{(j)}(0) = sum_i xi_{j,i} (log q_hat)^{j-i}, F = Gamma(s+k/2)/Gamma(k/2) q_hat^s G(s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct XiConstants {
    pub xi: [[f64; 4]; 4],
}

impl XiConstants {
    pub fn new(k: u32, g: &CutoffPolynomial) -> Result<Self> {
        let d = gamma_log_derivatives(k as f64 / 2.0, 3)?;
        let (psi, g2, g3) = (d.values[0], d.values[1], d.values[2]);
        let gpp = g.second_derivative_at_zero();
        let mut xi = [[0.0; 4]; 4];
        for (j, row) in xi.iter_mut().enumerate() {
            row[0] = 1.0;
            if j >= 1 {
                row[1] = j as f64 * psi;
            }
            if j >= 2 {
                row[2] = (2 * j - 3) as f64 * (g2 + gpp);
            }
        }
        xi[3][3] = g3 + 3.0 * psi * gpp;
        Ok(XiConstants { xi })
    }

    pub fn get(&self, j: usize, i: usize) -> f64 {
        self.xi[j][i]
    }

    /// F^{(j)}(0) at X = log q_hat.
    pub fn f_derivative(&self, j: usize, x: f64) -> f64 {
        (0..=j).map(|i| self.xi[j][i] * x.powi((j - i) as i32)).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QPolynomial {
    pub a3: f64,
    pub a2: f64,
    pub a1: f64,
    pub a0: f64,
    /// Q(log q_hat).
    pub value: f64,
    pub log_q_hat: f64,
}

impl QPolynomial {
    pub fn eval(&self, x: f64) -> f64 {
        ((self.a3 * x + self.a2) * x + self.a1) * x + self.a0
    }
}

/// A_3 assembled in exact arithmetic from a_{-2} = 1, b_{-3} = -1, xi_{j,0} = 1.
pub fn a3_exact() -> Rational64 {
    let one = Rational64::from_integer(1);
    let (a_m2, b_m3, xi20, xi30) = (one, -one, one, one);
    a_m2 * xi20 + Rational64::new(1, 3) * b_m3 * xi30
}

/// 2(2 log p/(p-1) + psi(k/2) + 2 gamma).
pub fn a2_printed(k: u32, p: u64) -> Result<f64> {
    check_weight_prime(k, p)?;
    let psi = gamma_log_derivatives(k as f64 / 2.0, 1)?.first();
    Ok(2.0 * (2.0 * local_log(p) + psi + 2.0 * stieltjes(0)?))
}

/// Q(X) = A_3 X^3 + A_2 X^2 + A_1 X + A_0 with the A_j assembled from the xi, a and b constants.
pub fn q_polynomial(k: u32, p: u64, q_hat: f64, g: &CutoffPolynomial) -> Result<QPolynomial> {
    check_weight_prime(k, p)?;
    if !(q_hat > 0.0) {
        return Err(Error::domain("q_polynomial", format!("q_hat = {q_hat}")));
    }
    let xi = XiConstants::new(k, g)?;
    let x = |j, i| xi.get(j, i);
    let a = laurent::a_closed(p)?;
    let b = laurent::b_closed(p)?;
    let (a_m2, a_m1, a_0) = (a[0], a[1], a[2]);
    let (b_m3, b_m2, b_0) = (b[0], b[1], b[3]);
    let gk = g_k(k, p)?;
    let third = 1.0 / 3.0;

    let a3 = a_m2 * x(2, 0) + third * b_m3 * x(3, 0);
    let a2 = a_m2 * x(2, 1) + 2.0 * a_m1 * x(1, 0) + 0.5 * a_m2 * x(2, 0) * gk
        + third * b_m3 * x(3, 1)
        + b_m2 * x(2, 0);
    let a1 = a_m2 * x(2, 2) + 2.0 * a_m1 * x(1, 1) + 2.0 * a_0 * x(0, 0)
        + (0.5 * a_m2 * x(2, 1) + a_m1 * x(1, 0)) * gk
        + third * b_m3 * x(3, 2)
        + b_m2 * x(2, 1);
    let a0 = (0.5 * a_m2 * x(2, 2) + a_m1 * x(1, 1) + a_0 * x(0, 0)) * gk
        + third * b_m3 * x(3, 3)
        + b_m2 * x(2, 2)
        + 2.0 * b_0 * x(0, 0);

    let exact = a3_exact();
    let exact = *exact.numer() as f64 / *exact.denom() as f64;
    if (a3 - exact).abs() > 1e-15 {
        return Err(Error::Verification { what: "A_3".into(), computed: a3, expected: exact });
    }
    let printed = a2_printed(k, p)?;
    if (a2 - printed).abs() > 1e-10 * printed.abs().max(1.0) {
        return Err(Error::Verification { what: "A_2".into(), computed: a2, expected: printed });
    }
    let log_q_hat = q_hat.ln();
    let mut q = QPolynomial { a3, a2, a1, a0, value: 0.0, log_q_hat };
    q.value = q.eval(log_q_hat);
    Ok(q)
}
