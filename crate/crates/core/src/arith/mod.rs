//! Elementary arithmetic functions, divisor-sum profiles and Kloosterman sums.

mod kloosterman;

pub use kloosterman::{kloosterman, kloosterman_bound, kloosterman_row, KloostermanCache, DEFAULT_CACHE_BUDGET};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Factorization {
    /// (prime, exponent) with strictly increasing primes.
    pub prime_powers: Vec<(u64, u32)>,
}

impl Factorization {
    pub fn of(n: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::domain("factorize", "n must be positive"));
        }
        let mut n = n;
        let mut out = Vec::new();
        let mut push = |p: u64, n: &mut u64| {
            let mut e = 0;
            while *n % p == 0 {
                *n /= p;
                e += 1;
            }
            if e > 0 {
                out.push((p, e));
            }
        };
        push(2, &mut n);
        push(3, &mut n);
        let mut p = 5u64;
        while p.saturating_mul(p) <= n {
            push(p, &mut n);
            push(p + 2, &mut n);
            p += 6;
        }
        if n > 1 {
            out.push((n, 1));
        }
        Ok(Factorization { prime_powers: out })
    }

    pub fn product(&self) -> Option<u64> {
        self.prime_powers
            .iter()
            .try_fold(1u64, |acc, &(p, e)| acc.checked_mul(p.checked_pow(e)?))
    }

    pub fn omega(&self) -> u32 {
        self.prime_powers.len() as u32
    }

    pub fn divisors(&self) -> Vec<u64> {
        let mut divs = vec![1u64];
        for &(p, e) in &self.prime_powers {
            let len = divs.len();
            let mut pk = 1;
            for _ in 0..e {
                pk *= p;
                for i in 0..len {
                    divs.push(divs[i] * pk);
                }
            }
        }
        divs.sort_unstable();
        divs
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArithFunctions {
    pub tau: u64,
    pub omega: u32,
    pub mu: i8,
    pub euler_phi: u64,
    /// n * prod_{p | n} (1 + 1/p), an integer.
    pub nu_index: u64,
}

pub fn arith_fn(n: u64) -> Result<ArithFunctions> {
    let f = Factorization::of(n)?;
    let overflow = || Error::Overflow("arith_fn");
    let mut tau = 1u64;
    let mut phi = 1u64;
    let mut nu = 1u64;
    let mut squarefree = true;
    for &(p, e) in &f.prime_powers {
        tau = tau.checked_mul(e as u64 + 1).ok_or_else(overflow)?;
        let pe1 = p.checked_pow(e - 1).ok_or_else(overflow)?;
        phi = phi.checked_mul(pe1 * (p - 1)).ok_or_else(overflow)?;
        let t = pe1.checked_mul(p + 1).ok_or_else(overflow)?;
        nu = nu.checked_mul(t).ok_or_else(overflow)?;
        if nu > i64::MAX as u64 {
            return Err(overflow());
        }
        squarefree &= e == 1;
    }
    let omega = f.omega();
    let mu = if squarefree {
        if omega % 2 == 0 {
            1
        } else {
            -1
        }
    } else {
        0
    };
    Ok(ArithFunctions {
        tau,
        omega,
        mu,
        euler_phi: phi,
        nu_index: nu,
    })
}

pub fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

/// Inverse of a modulo c, if gcd(a, c) = 1.
pub fn mod_inverse(a: u64, c: u64) -> Option<u64> {
    if c == 1 {
        return Some(0);
    }
    if c < 1 << 62 {
        let (mut r0, mut r1) = (c as i64, (a % c) as i64);
        let (mut t0, mut t1) = (0i64, 1i64);
        while r1 != 0 {
            let q = r0 / r1;
            (r0, r1) = (r1, r0 - q * r1);
            (t0, t1) = (t1, t0 - q * t1);
        }
        return (r0 == 1).then(|| t0.rem_euclid(c as i64) as u64);
    }
    let (mut r0, mut r1) = (c as i128, (a % c) as i128);
    let (mut t0, mut t1) = (0i128, 1i128);
    while r1 != 0 {
        let q = r0 / r1;
        (r0, r1) = (r1, r0 - q * r1);
        (t0, t1) = (t1, t0 - q * t1);
    }
    if r0 != 1 {
        return None;
    }
    Some(t0.rem_euclid(c as i128) as u64)
}

pub fn is_prime(n: u64) -> bool {
    n >= 2 && Factorization::of(n).map(|f| f.prime_powers == [(n, 1)]).unwrap_or(false)
}

/// Divisor counts tau(1..=n) by a harmonic sieve; index 0 is unused.
pub fn tau_table(n: usize) -> Vec<u32> {
    let mut t = vec![0u32; n + 1];
    for d in 1..=n {
        let mut k = d;
        while k <= n {
            t[k] += 1;
            k += d;
        }
    }
    t
}

/// Smallest C with tau(n) <= C n^{1/4} for every n >= 1.
pub fn tau_quarter_constant() -> f64 {
    let mut c = 1.0;
    for p in [2u64, 3, 5, 7, 11, 13] {
        let mut best: f64 = 1.0;
        for a in 1..40 {
            let v = (a as f64 + 1.0) / (p as f64).powf(a as f64 / 4.0);
            best = best.max(v);
        }
        c *= best;
    }
    c
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DivisorSumProfile {
    /// sum_{n <= x} tau(n)^i (log n)^j
    pub sum_upto: f64,
    /// sum_{n <= x} tau(n)^i (log n)^j / sqrt(n)
    pub sum_sqrt_weighted: f64,
    /// sum_{n > x} tau(n)^i (log n)^j / n^2: exact over x < n <= 16x plus an
    /// average-order estimate of the remainder.
    pub tail_theta2: f64,
}

pub fn divisor_sum_profile(i: u32, j: u32, x: f64) -> Result<DivisorSumProfile> {
    if !(1..=3).contains(&i) || j > 2 {
        return Err(Error::domain(
            "divisor_sum_profile",
            format!("(i, j) = ({i}, {j}) outside {{1,2,3}} x {{0,1,2}}"),
        ));
    }
    if !(10.0..=1e6).contains(&x) {
        return Err(Error::domain("divisor_sum_profile", format!("x = {x}")));
    }
    let xn = x.floor() as usize;
    let end = 16 * xn;
    let taus = tau_table(end);
    let weight = |n: usize| {
        let t = taus[n] as f64;
        t.powi(i as i32) * (n as f64).ln().powi(j as i32)
    };
    let mut upto = crate::CompensatedSum::new();
    let mut sqrtw = crate::CompensatedSum::new();
    for n in 1..=xn {
        let w = weight(n);
        upto += w;
        sqrtw += w / (n as f64).sqrt();
    }
    let mut tail = crate::CompensatedSum::new();
    let mut block = crate::CompensatedSum::new();
    for n in xn + 1..=end {
        let w = weight(n);
        block += w;
        tail += w / (n as f64 * n as f64);
    }
    // sum_{n > N} a_n / n^2 ~ A / N with A the average of a_n near N
    let avg = block.value() / (end - xn) as f64;
    let remainder = avg / end as f64;
    Ok(DivisorSumProfile {
        sum_upto: upto.value(),
        sum_sqrt_weighted: sqrtw.value(),
        tail_theta2: tail.value() + remainder,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute(n: u64) -> ArithFunctions {
        let divs: Vec<u64> = (1..=n).filter(|d| n % d == 0).collect();
        let primes: Vec<u64> = divs
            .iter()
            .copied()
            .filter(|&d| d > 1 && (2..d).all(|k| d % k != 0))
            .collect();
        let squarefree = primes.iter().all(|&p| n % (p * p) != 0);
        let phi = (1..=n).filter(|&k| gcd(k, n) == 1).count() as u64;
        let mut nu_num = n;
        for &p in &primes {
            nu_num = nu_num / p * (p + 1);
        }
        ArithFunctions {
            tau: divs.len() as u64,
            omega: primes.len() as u32,
            mu: if squarefree {
                if primes.len() % 2 == 0 {
                    1
                } else {
                    -1
                }
            } else {
                0
            },
            euler_phi: phi,
            nu_index: nu_num,
        }
    }

    #[test]
    fn examples() {
        let one = arith_fn(1).unwrap();
        assert_eq!((one.tau, one.omega, one.mu, one.euler_phi, one.nu_index), (1, 0, 1, 1, 1));
        let t = arith_fn(12).unwrap();
        assert_eq!(t, brute(12));
        assert_eq!((t.tau, t.omega, t.mu, t.euler_phi, t.nu_index), (6, 2, 0, 4, 24));
        for (p, nu) in [(3u64, 4u32), (2, 10), (7, 3)] {
            let q = p.pow(nu);
            let a = arith_fn(q).unwrap();
            assert_eq!(a.tau, nu as u64 + 1);
            assert_eq!(a.omega, 1);
            assert_eq!(a.mu, 0);
            assert_eq!(a.euler_phi, q - q / p);
            assert_eq!(a.nu_index, q + q / p);
        }
    }

    #[test]
    fn matches_brute_force_small() {
        for n in 1..=400 {
            assert_eq!(arith_fn(n).unwrap(), brute(n), "n = {n}");
        }
    }

    #[test]
    fn overflow_reported() {
        // nu(3 * 2^61) = 12 * 2^60 > 2^63 - 1
        let n = 3u64 << 61;
        assert!(matches!(arith_fn(n), Err(Error::Overflow(_))));
        assert!(arith_fn(0).is_err());
    }

    #[test]
    fn inverses() {
        for c in 1..200u64 {
            for a in 0..c {
                match mod_inverse(a, c) {
                    Some(b) => assert_eq!((a * b) % c, 1 % c),
                    None => assert!(gcd(a, c) != 1),
                }
            }
        }
    }

    #[test]
    fn tau_quarter_constant_is_valid() {
        let c = tau_quarter_constant();
        assert!(c > 8.3 && c < 8.5);
        let t = tau_table(200_000);
        for (n, &tn) in t.iter().enumerate().skip(1) {
            assert!(tn as f64 <= c * (n as f64).powf(0.25) * (1.0 + 1e-12));
        }
    }

    #[test]
    fn profile_small_case() {
        let p = divisor_sum_profile(1, 0, 10.0).unwrap();
        let direct: u64 = (1..=10u64).map(|n| arith_fn(n).unwrap().tau).sum();
        assert_eq!(p.sum_upto, direct as f64);
        let p = divisor_sum_profile(2, 1, 10.0).unwrap();
        let direct: f64 = (1..=10u64)
            .map(|n| (arith_fn(n).unwrap().tau as f64).powi(2) * (n as f64).ln())
            .sum();
        assert!((p.sum_upto - direct).abs() < 1e-12);
        let direct: f64 = (1..=10u64)
            .map(|n| (arith_fn(n).unwrap().tau as f64).powi(2) * (n as f64).ln() / (n as f64).sqrt())
            .sum();
        assert!((p.sum_sqrt_weighted - direct).abs() < 1e-12);
    }

    #[test]
    fn dirichlet_main_term() {
        let mut prev = f64::INFINITY;
        for x in [1e3, 1e4, 1e5, 1e6] {
            let p = divisor_sum_profile(1, 0, x).unwrap();
            let ratio = p.sum_upto / (x * x.ln());
            // sum tau = x log x + (2 gamma - 1) x + O(sqrt x)
            let gap = (ratio - 1.0).abs();
            assert!(gap < prev);
            prev = gap;
        }
        assert!(prev < 0.1);
    }

    #[test]
    fn tail_theta2_scaling() {
        let exact = (std::f64::consts::PI.powi(2) / 6.0).powi(2);
        for x in [1e3, 1e4, 1e5] {
            let p = divisor_sum_profile(1, 0, x).unwrap();
            let head: f64 = tau_table(x as usize)
                .iter()
                .enumerate()
                .skip(1)
                .map(|(n, &t)| t as f64 / (n as f64).powi(2))
                .sum();
            // sum tau(n)/n^2 = zeta(2)^2 gives the tail exactly
            let tail = exact - head;
            assert!((p.tail_theta2 - tail).abs() < 0.02 * tail);
            let scaled = x * p.tail_theta2 / x.ln();
            assert!(scaled > 0.5 && scaled < 3.0, "x = {x}: {scaled}");
        }
    }
}
