use std::f64::consts::PI;
use std::sync::OnceLock;

use crate::arith::{gcd, Factorization};
use crate::numkernel::zeta_real;
use crate::{Error, Result};

/// Global cap on |J_n(x)| for integer n.
pub const BESSEL_FLAT_CAP: f64 = 0.8;

const EPS: f64 = 0.25;

/// C with e(r) 2^omega(r) <= C r^{1/4} for all r >= 1, where e(r) = sqrt(2)
/// for even r and 1 otherwise (the 2-adic factor of the Kloosterman bound).
pub fn omega_quarter_constant() -> f64 {
    let two = 2.0 * std::f64::consts::SQRT_2 / 2f64.powf(EPS);
    [3.0f64, 5.0, 7.0, 11.0, 13.0]
        .iter()
        .map(|p| (2.0 / p.powf(EPS)).max(1.0))
        .product::<f64>()
        * two
}

fn zeta_five_quarters() -> f64 {
    static Z: OnceLock<f64> = OnceLock::new();
    *Z.get_or_init(|| zeta_real(1.0 + EPS).expect("zeta(5/4)"))
}

fn ln_factorial(n: u32) -> f64 {
    (1..=n).map(|j| (j as f64).ln()).sum()
}

/// Majorant f(r) of |S(m,n;Lr)/(Lr) J_{k-1}(4 pi sqrt(mn)/(Lr))| and the
/// resulting bound on the series remainder.
///
/// f(r) = A r^{eps - 1/2} min(P r^{1-k}, cap), using
/// e(Lr) 2^omega(Lr) <= 2^omega(L) C r^eps and (m,n,Lr) <= (m,n).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailModel {
    amp: f64,
    power: f64,
    k: u32,
}

impl TailModel {
    pub fn new(k: u32, level: u64, m: u64, n: u64) -> Self {
        Self::from_product(k, level, gcd(m, n) as f64, (m as f64) * (n as f64))
    }

    /// Model for any pair with gcd at most `g` and product `mn`.
    pub fn from_product(k: u32, level: u64, g: f64, mn: f64) -> Self {
        let omega = Factorization::of(level).map(|f| f.omega()).unwrap_or(0);
        let amp = 2f64.powi(omega as i32) * omega_quarter_constant() * g.sqrt()
            / (level as f64).sqrt();
        let z = 2.0 * PI * mn.sqrt() / level as f64;
        let power = ((k - 1) as f64 * z.ln() - ln_factorial(k - 1)).exp();
        TailModel { amp, power, k }
    }

    fn alpha(&self) -> f64 {
        (self.k - 1) as f64 + 0.5 - EPS
    }

    /// Majorant at real r >= 1.
    pub fn term(&self, r: f64) -> f64 {
        let bessel = (self.power * r.powi(1 - self.k as i32)).min(BESSEL_FLAT_CAP);
        self.amp * r.powf(EPS - 0.5) * bessel
    }

    /// 2 pi * sum_{r > big_r} f(r), bounded by f(R+1) + int_{R+1}^inf f.
    pub fn tail_after(&self, big_r: u64) -> f64 {
        let a = big_r as f64 + 1.0;
        let beta = 0.5 + EPS;
        let r_star = (self.power / BESSEL_FLAT_CAP).powf(1.0 / (self.k - 1) as f64);
        let flat = if r_star > a {
            BESSEL_FLAT_CAP * self.amp * (r_star.powf(beta) - a.powf(beta)) / beta
        } else {
            0.0
        };
        let b = r_star.max(a);
        let alpha = self.alpha();
        let decay = self.amp * self.power * b.powf(1.0 - alpha) / (alpha - 1.0);
        2.0 * PI * (self.term(a) + flat + decay)
    }

    /// Smallest R with tail_after(R) <= tol.
    pub fn cutoff(&self, tol: f64, cap: u64) -> Result<u64> {
        if self.tail_after(0) <= tol {
            return Ok(0);
        }
        let fail = || Error::NonConvergence {
            what: "kloosterman series",
            limit: cap,
            tol,
        };
        let mut hi = 1u64;
        while self.tail_after(hi) > tol {
            if hi > cap {
                return Err(fail());
            }
            hi *= 2;
        }
        let mut lo = hi / 2;
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if self.tail_after(mid) <= tol {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        if hi > cap {
            return Err(fail());
        }
        Ok(hi)
    }
}

/// K_L with |Delta_L(m,n) - delta_{m,n}| <= K_L sqrt((m,n)) sqrt(mn), from
/// min(a, b) <= a^theta b^{1-theta} at theta = 1/(k-1).
pub fn full_bound_coefficient(k: u32, level: u64) -> f64 {
    let omega = Factorization::of(level).map(|f| f.omega()).unwrap_or(0);
    let theta = 1.0 / (k - 1) as f64;
    2.0 * PI
        * 2f64.powi(omega as i32)
        * omega_quarter_constant()
        * zeta_five_quarters()
        * BESSEL_FLAT_CAP.powf(1.0 - theta)
        * (2.0 * PI / level as f64)
        / (level as f64).sqrt()
        / (theta * ln_factorial(k - 1)).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arith::kloosterman_bound;
    use crate::numkernel::bessel_j;

    #[test]
    fn omega_constant_bounds_two_to_omega() {
        let c = omega_quarter_constant();
        assert!((c - 6.87).abs() < 0.01, "{c}");
        for r in 1..20000u64 {
            let w = Factorization::of(r).unwrap().omega();
            let e = if r % 2 == 0 { 2f64.sqrt() } else { 1.0 };
            assert!(e * 2f64.powi(w as i32) <= c * (r as f64).powf(0.25) + 1e-12);
        }
    }

    #[test]
    fn majorant_dominates_terms() {
        for &(k, level, m, n) in &[(6u32, 27u64, 7u64, 7u64), (4, 9, 5, 2), (12, 1, 3, 1), (2, 3, 4, 4)] {
            let t = TailModel::new(k, level, m, n);
            for r in 1..400u64 {
                let c = level * r;
                let x = 4.0 * PI * ((m * n) as f64).sqrt() / c as f64;
                let actual = kloosterman_bound(m as i64, n as i64, c) / c as f64
                    * bessel_j(k - 1, x).abs();
                assert!(actual <= t.term(r as f64) * (1.0 + 1e-12), "k={k} L={level} r={r}");
            }
        }
    }

    #[test]
    fn tail_bounds_brute_partial_sum() {
        let t = TailModel::new(6, 9, 5, 5);
        let brute: f64 = (11..2_000_000u64).map(|r| t.term(r as f64)).sum();
        assert!(2.0 * PI * brute <= t.tail_after(10));
        assert!(t.tail_after(10) < 1.5 * 2.0 * PI * brute + 1e-300);
    }

    #[test]
    fn cutoff_is_minimal() {
        let t = TailModel::new(6, 27, 7, 7);
        let r = t.cutoff(1e-10, 1_000_000).unwrap();
        assert!(t.tail_after(r) <= 1e-10);
        assert!(t.tail_after(r - 1) > 1e-10);
    }

    #[test]
    fn slow_weight_two_hits_cap() {
        let t = TailModel::new(2, 3, 1, 1);
        assert!(matches!(
            t.cutoff(1e-12, 1_000_000),
            Err(Error::NonConvergence { .. })
        ));
    }

    #[test]
    fn full_bound_dominates_whole_series() {
        for &(k, level, m, n) in &[(6u32, 9u64, 3u64, 7u64), (6, 81, 40, 40), (4, 3, 1, 2)] {
            let t = TailModel::new(k, level, m, n);
            let g = gcd(m, n) as f64;
            let full = full_bound_coefficient(k, level) * g.sqrt() * ((m * n) as f64).sqrt();
            let brute: f64 = (1..1_000_000u64).map(|r| t.term(r as f64)).sum();
            assert!(2.0 * PI * brute <= full);
        }
    }
}
