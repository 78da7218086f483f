//! Orthonormal bases of the old spaces at level p^a, as functions of the
//! Hecke eigenvalue x = lambda_f(p).

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::arith::is_prime;
use crate::{ComplexValue, Error, Result};

pub type Matrix = Vec<Vec<f64>>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LevelCase {
    /// m' = 1: x is free in [-2, 2].
    LevelOne,
    /// p || m': x = +-1/sqrt(p).
    PExactlyDivides,
    /// p^2 | m': x = 0.
    PSquareDivides,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeckeParam {
    pub case: LevelCase,
    pub p: u64,
    pub x: f64,
}

impl HeckeParam {
    pub fn level_one(p: u64, x: f64) -> Result<Self> {
        check_prime(p)?;
        if !(-2.0..=2.0).contains(&x) {
            return Err(Error::domain("HeckeParam", format!("x = {x} outside [-2, 2]")));
        }
        Ok(HeckeParam { case: LevelCase::LevelOne, p, x })
    }

    pub fn p_exactly_divides(p: u64, positive: bool) -> Result<Self> {
        check_prime(p)?;
        let x = (p as f64).sqrt().recip();
        Ok(HeckeParam {
            case: LevelCase::PExactlyDivides,
            p,
            x: if positive { x } else { -x },
        })
    }

    pub fn p_square_divides(p: u64) -> Result<Self> {
        check_prime(p)?;
        Ok(HeckeParam { case: LevelCase::PSquareDivides, p, x: 0.0 })
    }

    fn nu_prime(&self) -> f64 {
        1.0 + 1.0 / self.p as f64
    }

    /// sigma_f = 1 - P_1(x)^2 / p.
    pub fn sigma(&self) -> f64 {
        let p1 = self.x / self.nu_prime();
        1.0 - p1 * p1 / self.p as f64
    }

    /// rho_{f,m'}(p^delta) = 1 - x^2/p for delta >= 1.
    pub fn rho(&self, delta: u32) -> f64 {
        if delta == 0 {
            1.0
        } else {
            1.0 - self.x * self.x / self.p as f64
        }
    }
}

fn check_prime(p: u64) -> Result<()> {
    if is_prime(p) {
        Ok(())
    } else {
        Err(Error::domain("HeckeParam", format!("p = {p} is not prime")))
    }
}

/// lambda_f(p^r).
pub fn hecke_power(param: &HeckeParam, r: u32) -> f64 {
    match param.case {
        LevelCase::LevelOne => {
            let (mut a, mut b) = (1.0, param.x);
            if r == 0 {
                return 1.0;
            }
            for _ in 1..r {
                (a, b) = (b, param.x * b - a);
            }
            b
        }
        _ => param.x.powi(r as i32),
    }
}

/// P_r(x, s) with P_1 = x/(1 + t), written in t = p^{-s}.
pub fn p_polynomial_t(x: f64, r: u32, t: ComplexValue) -> ComplexValue {
    let one = Complex64::new(1.0, 0.0);
    if r == 0 {
        return one;
    }
    let (mut a, mut b) = (one, x / (one + t));
    for _ in 1..r {
        (a, b) = (b, b * x - a);
    }
    b
}

pub fn p_polynomial(p: u64, x: f64, r: u32, s: ComplexValue) -> ComplexValue {
    let t = (-s * (p as f64).ln()).exp();
    p_polynomial_t(x, r, t)
}

/// P_r(x) = P_r(x, 1).
pub fn p_polynomial_at_one(p: u64, x: f64, r: u32) -> f64 {
    p_polynomial_t(x, r, Complex64::new(1.0 / p as f64, 0.0)).re
}

/// Columns d = p^delta, rows c = p^gamma: f_d = sum_c X[c][d] f_{|c}.
pub fn basis_coefficients(param: &HeckeParam, a: u32) -> Result<Matrix> {
    let dim = a as usize + 1;
    let mut x = vec![vec![0.0; dim]; dim];
    let sp = (param.p as f64).sqrt();
    match param.case {
        LevelCase::LevelOne => {
            let sigma = param.sigma();
            if !(sigma > 0.0) {
                return Err(Error::Degenerate(format!("sigma_f = {sigma}")));
            }
            let p1 = param.x / param.nu_prime() / sp;
            x[0][0] = 1.0;
            if dim > 1 {
                let norm = sigma.sqrt().recip();
                x[1][1] = norm;
                x[0][1] = -p1 * norm;
            }
            let norm = ((1.0 - (param.p as f64).powi(-2)) * sigma).sqrt().recip();
            for r in 2..dim {
                x[r][r] = norm;
                x[r - 1][r] = -param.nu_prime() * p1 * norm;
                x[r - 2][r] = norm / param.p as f64;
            }
        }
        _ => {
            // x_d(c) = mu(d/c) lambda(d/c) / sqrt((d/c) rho(d)); only d/c in {1, p}.
            for delta in 0..dim {
                let rho = param.rho(delta as u32);
                x[delta][delta] = rho.sqrt().recip();
                if delta >= 1 {
                    x[delta - 1][delta] = -param.x / (sp * rho.sqrt());
                }
            }
        }
    }
    Ok(x)
}

/// Normalized inner products <f_{|p^i}, f_{|p^j}> / <f, f>.
pub fn gram_matrix(param: &HeckeParam, a: u32) -> Matrix {
    let dim = a as usize + 1;
    let sp = (param.p as f64).sqrt();
    let entry = |j: u32| {
        let num = match param.case {
            LevelCase::LevelOne => p_polynomial_at_one(param.p, param.x, j),
            _ => hecke_power(param, j),
        };
        num / sp.powi(j as i32)
    };
    (0..dim)
        .map(|i| (0..dim).map(|j| entry(i.abs_diff(j) as u32)).collect())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GramSpec {
    pub case: LevelCase,
    pub dim: usize,
    pub g: Matrix,
    pub x: Matrix,
}

impl GramSpec {
    pub fn build(param: &HeckeParam, a: u32) -> Result<Self> {
        Ok(GramSpec {
            case: param.case,
            dim: a as usize + 1,
            g: gram_matrix(param, a),
            x: basis_coefficients(param, a)?,
        })
    }

    /// Max row sum of |X^T G X - I|.
    pub fn orthonormality_defect(&self) -> f64 {
        let n = self.dim;
        let gx: Matrix = (0..n)
            .map(|i| (0..n).map(|j| (0..n).map(|l| self.g[i][l] * self.x[l][j]).sum()).collect())
            .collect();
        (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        let v: f64 = (0..n).map(|l| self.x[l][i] * gx[l][j]).sum();
                        (v - if i == j { 1.0 } else { 0.0 }).abs()
                    })
                    .sum::<f64>()
            })
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankinCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
    /// Bound on the truncation error of lhs - rhs, plus a rounding allowance.
    pub envelope: f64,
}

/// sum_{j >= terms} (j+1)(j+1+shift)|t|^j, with a geometric bound on the far remainder.
fn tau_tail(t: f64, terms: u32, shift: u32) -> f64 {
    let w = |j: u32| (j as f64 + 1.0) * (j as f64 + 1.0 + shift as f64) * t.powi(j as i32);
    let mut acc = 0.0;
    let mut j = terms;
    loop {
        acc += w(j);
        j += 1;
        // For j past this point consecutive ratios stay below rho < 1.
        let rho = t * (j as f64 + 2.0) * (j as f64 + 2.0 + shift as f64)
            / ((j as f64 + 1.0) * (j as f64 + 1.0 + shift as f64));
        if rho < 1.0 && w(j) / (1.0 - rho) < 1e-3 * acc.max(f64::MIN_POSITIVE) {
            return acc + w(j) / (1.0 - rho);
        }
    }
}

/// Local Rankin identity sum_j lambda(p^j)lambda(p^{j+r}) t^j = Z(p^r) sum_j lambda(p^j)^2 t^j,
/// both sides truncated to `terms` powers of t.
pub fn rankin_series_check(param: &HeckeParam, t: f64, r: u32, terms: u32) -> Result<RankinCheck> {
    if terms < 10 {
        return Err(Error::domain("rankin_series_check", "need at least 10 terms"));
    }
    if !(t.abs() <= 0.3) {
        return Err(Error::domain("rankin_series_check", format!("|t| = {} > 0.3", t.abs())));
    }
    let z = match param.case {
        LevelCase::LevelOne => p_polynomial_t(param.x, r, Complex64::new(t, 0.0)).re,
        _ => hecke_power(param, r),
    };
    let mut lhs = 0.0;
    let mut diag = 0.0;
    let mut magnitude = 0.0;
    for j in 0..terms {
        let tj = t.powi(j as i32);
        let lj = hecke_power(param, j);
        let a = lj * hecke_power(param, j + r) * tj;
        lhs += a;
        diag += lj * lj * tj;
        magnitude += a.abs() + (z * lj * lj * tj).abs();
    }
    let rhs = z * diag;
    let rounding = 4.0 * terms as f64 * f64::EPSILON * magnitude;
    let envelope = tau_tail(t.abs(), terms, r) + z.abs() * tau_tail(t.abs(), terms, 0) + rounding;
    Ok(RankinCheck { lhs, rhs, residual: (lhs - rhs).abs(), envelope })
}

/// sum_{d | l} x_d(1)^2 from the basis columns, checked against the closed form.
pub fn x1_squared_sum(param: &HeckeParam, a: u32) -> Result<f64> {
    let x = basis_coefficients(param, a)?;
    let from_columns: f64 = x[0].iter().map(|v| v * v).sum();
    let p2 = (param.p as f64).powi(-2);
    let closed = match (param.case, a) {
        (_, 0) => 1.0,
        (LevelCase::LevelOne, 1) => 1.0 / param.sigma(),
        (LevelCase::LevelOne, _) => 1.0 / ((1.0 - p2) * param.sigma()),
        (LevelCase::PExactlyDivides, _) => 1.0 / (1.0 - p2),
        (LevelCase::PSquareDivides, _) => 1.0,
    };
    if (from_columns - closed).abs() > 1e-12 * closed.max(1.0) {
        return Err(Error::Verification {
            what: "sum of x_d(1)^2".into(),
            computed: from_columns,
            expected: closed,
        });
    }
    Ok(closed)
}
