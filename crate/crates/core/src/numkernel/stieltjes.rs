use std::f64::consts::PI;
use std::sync::OnceLock;

use num_complex::Complex64;

use super::zeta_euler_maclaurin;
use crate::{Error, Result};

const RADIUS: f64 = 0.5;
const NODES: usize = 64;

// zeta(1+s) - 1/s = sum_i (-1)^i gamma_i / i! s^i; the Taylor coefficients are
// read off a trapezoidal Cauchy integral on |s| = RADIUS.
fn compute() -> [f64; 3] {
    let mut coeff = [Complex64::new(0.0, 0.0); 3];
    for j in 0..NODES {
        let theta = 2.0 * PI * (j as f64 + 0.5) / NODES as f64;
        let w = Complex64::from_polar(1.0, theta);
        let s = w * RADIUS;
        let f = zeta_euler_maclaurin(Complex64::new(1.0, 0.0) + s) - s.inv();
        let mut wpow = Complex64::new(1.0, 0.0);
        for c in coeff.iter_mut() {
            *c += f / wpow;
            wpow *= w;
        }
    }
    let mut out = [0.0; 3];
    let mut fact = 1.0;
    let mut rpow = 1.0;
    for (i, c) in coeff.iter().enumerate() {
        if i > 0 {
            fact *= i as f64;
        }
        let ci = c.re / NODES as f64 / rpow;
        let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
        out[i] = sign * fact * ci;
        rpow *= RADIUS;
    }
    out
}

/// Stieltjes constant gamma_i for i in {0, 1, 2}.
pub fn stieltjes(i: usize) -> Result<f64> {
    static TABLE: OnceLock<[f64; 3]> = OnceLock::new();
    if i > 2 {
        return Err(Error::domain("stieltjes", format!("index {i} > 2")));
    }
    Ok(TABLE.get_or_init(compute)[i])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkernel::bernoulli_even;

    // Defining limit sum_{k<=n} (log k)^i / k - (log n)^{i+1}/(i+1), with the
    // Euler-Maclaurin correction at the upper end removing the O(1/n) bias.
    fn limit_oracle(i: usize) -> f64 {
        let n = 2000usize;
        let mut acc = 0.0;
        for k in (1..=n).rev() {
            acc += (k as f64).ln().powi(i as i32) / k as f64;
        }
        let nf = n as f64;
        let l = nf.ln();
        acc -= l.powi(i as i32 + 1) / (i as f64 + 1.0);
        acc -= 0.5 * l.powi(i as i32) / nf;
        // f(x) = x^{-a} P(L): d/dx -> x^{-a-1}(-a P + P')
        let mut poly = vec![0.0; i + 1];
        poly[i] = 1.0;
        let mut a = 1.0;
        let mut fact = 1.0;
        for j in 1..=6 {
            for _ in 0..(if j == 1 { 1 } else { 2 }) {
                let mut next = vec![0.0; poly.len()];
                for (d, c) in poly.iter().enumerate() {
                    next[d] -= a * c;
                    if d > 0 {
                        next[d - 1] += d as f64 * c;
                    }
                }
                poly = next;
                a += 1.0;
            }
            fact *= ((2 * j - 1) * (2 * j)) as f64;
            let pv: f64 = poly.iter().enumerate().map(|(d, c)| c * l.powi(d as i32)).sum();
            acc -= bernoulli_even(j) / fact * nf.powf(-a) * pv;
        }
        acc
    }

    #[test]
    fn euler_constant() {
        let g0 = stieltjes(0).unwrap();
        assert!((g0 - 0.577_215_664_901_532_9).abs() < 1e-13);
        assert!((g0 - limit_oracle(0)).abs() < 1e-11);
    }

    #[test]
    fn first_and_second() {
        let g1 = stieltjes(1).unwrap();
        assert!((g1 + 0.072_815_845_483_676_72).abs() < 1e-11);
        assert!((g1 - limit_oracle(1)).abs() < 1e-10);
        let g2 = stieltjes(2).unwrap();
        assert!((g2 - limit_oracle(2)).abs() < 1e-10);
    }

    #[test]
    fn index_out_of_range() {
        assert!(stieltjes(3).is_err());
    }

    #[test]
    fn laurent_fit_reproduces_constants() {
        // ζ(1+s) - 1/s = c0 + c1 s + c2 s^2 + ...: fit from s = ±1e-2, ±1e-3.
        let pts = [1e-2, -1e-2, 1e-3, -1e-3];
        let vals: Vec<f64> = pts
            .iter()
            .map(|&s| crate::numkernel::zeta_real(1.0 + s).unwrap() - 1.0 / s)
            .collect();
        // cubic through four points
        let n = 4;
        let mut a = vec![[0.0; 5]; n];
        for r in 0..n {
            for c in 0..4 {
                a[r][c] = pts[r].powi(c as i32);
            }
            a[r][4] = vals[r];
        }
        for c in 0..n {
            let piv = (c..n)
                .max_by(|&x, &y| a[x][c].abs().total_cmp(&a[y][c].abs()))
                .unwrap();
            a.swap(c, piv);
            for r in 0..n {
                if r != c {
                    let f = a[r][c] / a[c][c];
                    for k in c..5 {
                        a[r][k] -= f * a[c][k];
                    }
                }
            }
        }
        let coef: Vec<f64> = (0..n).map(|r| a[r][4] / a[r][r]).collect();
        assert!((coef[0] - stieltjes(0).unwrap()).abs() < 1e-5);
        assert!((coef[1] + stieltjes(1).unwrap()).abs() < 1e-5);
        assert!((coef[2] - stieltjes(2).unwrap() / 2.0).abs() < 1e-5);
    }
}
