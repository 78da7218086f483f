//! Full-space and newform trace formulas at level p^nu.

mod tail;

pub use tail::{full_bound_coefficient, omega_quarter_constant, TailModel, BESSEL_FLAT_CAP};

use std::f64::consts::PI;
use std::sync::Arc;

use dashmap::DashMap;
use num_rational::Rational64;
use serde::{Deserialize, Serialize};

use crate::arith::{arith_fn, is_prime, KloostermanCache};
use crate::numkernel::bessel_j;
use crate::{CompensatedSum, Error, Result};

/// Weights with no cusp forms of level one.
pub const EXACT_WEIGHTS: [u32; 6] = [2, 4, 6, 8, 10, 14];

pub const DEFAULT_R_CAP: u64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TraceParams {
    pub k: u32,
    pub p: u64,
    pub nu: u32,
}

impl TraceParams {
    pub fn new(k: u32, p: u64, nu: u32) -> Result<Self> {
        if k < 2 || k % 2 != 0 {
            return Err(Error::domain("TraceParams", format!("weight k = {k} must be even and >= 2")));
        }
        if !is_prime(p) {
            return Err(Error::domain("TraceParams", format!("p = {p} is not prime")));
        }
        match p.checked_pow(nu) {
            Some(q) if q <= 1 << 40 => Ok(TraceParams { k, p, nu }),
            _ => Err(Error::Overflow("level p^nu")),
        }
    }

    pub fn q(&self) -> u64 {
        self.p.pow(self.nu)
    }

    pub fn q_hat(&self) -> f64 {
        (self.q() as f64).sqrt() / (2.0 * PI)
    }

    pub fn exact_mode(&self) -> bool {
        EXACT_WEIGHTS.contains(&self.k)
    }

    pub fn with_nu(&self, nu: u32) -> Self {
        TraceParams { nu, ..*self }
    }
}

/// A value together with a certified bound on its truncation error.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BoundedValue {
    pub value: f64,
    pub tail: f64,
}

impl BoundedValue {
    pub fn new(value: f64, tail: f64) -> Self {
        BoundedValue { value, tail }
    }

    pub fn exact(value: f64) -> Self {
        BoundedValue { value, tail: 0.0 }
    }

    pub fn lower(&self) -> f64 {
        self.value - self.tail
    }

    pub fn upper(&self) -> f64 {
        self.value + self.tail
    }

    pub fn scaled(&self, c: f64) -> Self {
        BoundedValue::new(c * self.value, c.abs() * self.tail)
    }
}

/// 1 (nu = 1), 1 - (p - 1/p)^{-1} (nu = 2), 1 - 1/p (nu >= 3).
pub fn phi_main(nu: u32, p: u64) -> Rational64 {
    assert!(nu >= 1, "phi_main needs nu >= 1");
    let p_r = Rational64::from_integer(p as i64);
    let one = Rational64::from_integer(1);
    let closed = match nu {
        1 => one,
        2 => one - (p_r - one / p_r).recip(),
        _ => one - p_r.recip(),
    };
    let combined: Rational64 = newform_levels(p, nu)
        .into_iter()
        .map(|(_, c)| c)
        .sum();
    assert_eq!(closed, combined, "main term disagrees with the divisor combination");
    closed
}

/// Levels m' > 1 dividing p^nu with the coefficient mu(l)(p - mu(m')^2/p)^{-omega(l)}, l = q/m'.
/// Only l in {1, p} survive.
pub fn newform_levels(p: u64, nu: u32) -> Vec<(u32, Rational64)> {
    let p_r = Rational64::from_integer(p as i64);
    let one = Rational64::from_integer(1);
    let mut out = vec![(nu, one)];
    if nu >= 2 {
        let mu_sq = if nu - 1 == 1 { one } else { Rational64::from_integer(0) };
        out.push((nu - 1, -(p_r - mu_sq / p_r).recip()));
    }
    out
}

/// Levels m' = p^j dividing p^nu with (1/l)(1 - mu(m')^2/p^2)^{-omega(l)}; inverts newform_levels.
pub fn oldform_levels(p: u64, nu: u32) -> Vec<(u32, Rational64)> {
    let p_r = Rational64::from_integer(p as i64);
    let one = Rational64::from_integer(1);
    (1..=nu)
        .rev()
        .map(|j| {
            let ell = p_r.pow((nu - j) as i32);
            let mut c = ell.recip();
            if j == 1 && nu > 1 {
                c /= one - (p_r * p_r).recip();
            }
            (j, c)
        })
        .collect()
}

fn to_f64(r: Rational64) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

fn log_factor_budget(m: u64, n: u64) -> f64 {
    let g = crate::arith::gcd(m, n) as f64;
    (2.0 * g).ln().powi(2)
}

/// sqrt(mnp) (log 2(m,n))^2 / (k^{4/3} q^{3/2}) plus tau(m)tau(n)/q outside exact mode.
pub fn error_budget(m: u64, n: u64, params: &TraceParams) -> f64 {
    let q = params.q() as f64;
    let mut r = ((m as f64) * (n as f64) * params.p as f64).sqrt() * log_factor_budget(m, n)
        / ((params.k as f64).powf(4.0 / 3.0) * q.powf(1.5));
    if !params.exact_mode() {
        let t = |x: u64| arith_fn(x).map(|a| a.tau as f64).unwrap_or(f64::INFINITY);
        r += t(m) * t(n) / q;
    }
    r
}

/// Evaluator for the trace formulas sharing one Kloosterman cache.
#[derive(Debug, Clone)]
pub struct TraceFormula {
    cache: Arc<KloostermanCache>,
    r_cap: u64,
    level_one_mass: Arc<DashMap<u32, f64>>,
}

impl Default for TraceFormula {
    fn default() -> Self {
        Self::new(Arc::new(KloostermanCache::new()))
    }
}

impl TraceFormula {
    pub fn new(cache: Arc<KloostermanCache>) -> Self {
        TraceFormula {
            cache,
            r_cap: DEFAULT_R_CAP,
            level_one_mass: Arc::new(DashMap::new()),
        }
    }

    pub fn with_r_cap(mut self, r_cap: u64) -> Self {
        self.r_cap = r_cap;
        self
    }

    pub fn cache(&self) -> &Arc<KloostermanCache> {
        &self.cache
    }

    pub fn r_cap(&self) -> u64 {
        self.r_cap
    }

    /// Sign (-1)^{k/2} = i^k.
    fn sign(k: u32) -> f64 {
        if (k / 2) % 2 == 0 {
            1.0
        } else {
            -1.0
        }
    }

    /// Kloosterman/Bessel term for c = level * r, without the 2 pi i^k factor.
    pub fn series_term(&self, k: u32, m: u64, n: u64, c: u64) -> f64 {
        let x = 4.0 * PI * ((m as f64) * (n as f64)).sqrt() / c as f64;
        self.cache.get(m, n, c) / c as f64 * bessel_j(k - 1, x)
    }

    /// Delta_{level}(m, n) = delta + 2 pi i^k sum_{r >= 1} S(m,n;level r)/(level r) J_{k-1}(...).
    pub fn delta_full(&self, params: &TraceParams, level: u64, m: u64, n: u64, tol: f64) -> Result<BoundedValue> {
        if level == 0 || params.q() % level != 0 {
            return Err(Error::domain("delta_full", format!("{level} does not divide {}", params.q())));
        }
        check_mn("delta_full", m, n)?;
        if !(tol > 0.0) {
            return Err(Error::domain("delta_full", format!("tol = {tol}")));
        }
        let model = TailModel::new(params.k, level, m, n);
        let big_r = model.cutoff(tol, self.r_cap)?;
        let mut acc = CompensatedSum::new();
        for r in 1..=big_r {
            acc += self.series_term(params.k, m, n, level * r);
        }
        let delta = if m == n { 1.0 } else { 0.0 };
        let value = delta + 2.0 * PI * Self::sign(params.k) * acc.value();
        if !value.is_finite() {
            return Err(Error::Overflow("delta_full"));
        }
        Ok(BoundedValue::new(value, model.tail_after(big_r)))
    }

    /// Upper bound for the total harmonic mass Delta_1(1,1) of level one.
    fn level_one_mass(&self, k: u32) -> Result<f64> {
        if let Some(w) = self.level_one_mass.get(&k) {
            return Ok(*w);
        }
        let level_one = TraceParams { k, p: 2, nu: 0 };
        let d = self.delta_full(&level_one, 1, 1, 1, 1e-8)?;
        let w = d.value + d.tail;
        self.level_one_mass.insert(k, w);
        Ok(w)
    }

    /// Harmonic sum over newforms of level q.
    pub fn delta_star(&self, params: &TraceParams, m: u64, n: u64, tol: f64) -> Result<BoundedValue> {
        if params.nu == 0 {
            return Err(Error::domain("delta_star", "nu must be at least 1"));
        }
        check_mn("delta_star", m, n)?;
        let p = params.p;
        let divisible = m % p == 0 || n % p == 0;
        if divisible {
            if params.nu >= 2 {
                return Ok(BoundedValue::exact(0.0));
            }
            if params.exact_mode() {
                return self.delta_full(params, p, m, n, tol);
            }
            return Err(Error::Unsupported(format!(
                "newform trace at level {p} with p | mn needs exact-mode weight, got k = {}",
                params.k
            )));
        }
        let levels = newform_levels(p, params.nu);
        let weight: f64 = levels.iter().map(|(_, c)| to_f64(*c).abs()).sum();
        let mut value = CompensatedSum::new();
        let mut tail = 0.0;
        for &(j, c) in &levels {
            let c = to_f64(c);
            let d = self.delta_full(params, p.pow(j), m, n, tol / weight)?;
            value += c * d.value;
            tail += c.abs() * d.tail;
        }
        if !params.exact_mode() {
            tail += self.level_one_tail(params, m, n)?;
        }
        Ok(BoundedValue::new(value.value(), tail))
    }

    /// Certified size of the level-one oldform contribution dropped from delta_star.
    fn level_one_tail(&self, params: &TraceParams, m: u64, n: u64) -> Result<f64> {
        let w = self.level_one_mass(params.k)?;
        let tm = arith_fn(m)?.tau as f64;
        let tn = arith_fn(n)?.tau as f64;
        let p = params.p as f64;
        let index = |nu: u32| {
            if nu == 0 {
                1.0
            } else {
                p.powi(nu as i32) * (1.0 + 1.0 / p)
            }
        };
        let mut inv = 1.0 / index(params.nu);
        if let Some(&(j, c)) = newform_levels(params.p, params.nu).get(1) {
            inv += to_f64(c).abs() / index(j);
        }
        Ok(tm * tn * w * 9.0 / (1.0 - p.powi(-2)) * inv)
    }

    /// Delta_q rebuilt from newform traces at every level p^j, j = 1..nu (exact mode, p coprime to mn).
    pub fn reconstruct_full(&self, params: &TraceParams, m: u64, n: u64, tol: f64) -> Result<BoundedValue> {
        if !params.exact_mode() {
            return Err(Error::Unsupported("reconstruction needs an exact-mode weight".into()));
        }
        if m % params.p == 0 || n % params.p == 0 {
            return Err(Error::domain("reconstruct_full", "p must be coprime to mn"));
        }
        let levels = oldform_levels(params.p, params.nu);
        let weight: f64 = levels.iter().map(|(_, c)| to_f64(*c)).sum();
        let mut value = CompensatedSum::new();
        let mut tail = 0.0;
        for (j, c) in levels {
            let c = to_f64(c);
            let d = self.delta_star(&params.with_nu(j), m, n, tol / weight)?;
            value += c * d.value;
            tail += c * d.tail;
        }
        Ok(BoundedValue::new(value.value(), tail))
    }
}

fn check_mn(function: &'static str, m: u64, n: u64) -> Result<()> {
    if m == 0 || n == 0 {
        return Err(Error::domain(function, "m and n must be positive"));
    }
    if (m as f64) * (n as f64) > 1e24 {
        return Err(Error::domain(function, format!("mn = {m}*{n} too large")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn params_validation() {
        assert!(TraceParams::new(5, 3, 2).is_err());
        assert!(TraceParams::new(6, 9, 2).is_err());
        assert!(TraceParams::new(0, 3, 2).is_err());
        let t = TraceParams::new(6, 3, 4).unwrap();
        assert_eq!(t.q(), 81);
        assert!((t.q_hat() - 9.0 / (2.0 * PI)).abs() < 1e-15);
        assert!(t.exact_mode());
        assert!(!TraceParams::new(12, 3, 4).unwrap().exact_mode());
    }

    #[test]
    fn phi_examples() {
        assert_eq!(phi_main(1, 7), Rational64::from_integer(1));
        assert_eq!(phi_main(2, 2), Rational64::new(1, 3));
        assert_eq!(phi_main(5, 3), Rational64::new(2, 3));
        for p in [2u64, 3, 5, 7, 11] {
            for nu in 1..8 {
                phi_main(nu, p);
            }
        }
    }

    #[test]
    fn old_and_new_levels_invert() {
        // Main terms: sum over j of oldform coefficient times phi(j) must be 1.
        for p in [2u64, 3, 5, 13] {
            for nu in 1..9 {
                let total: Rational64 = oldform_levels(p, nu)
                    .into_iter()
                    .map(|(j, c)| c * phi_main(j, p))
                    .sum();
                assert_eq!(total, Rational64::from_integer(1), "p={p} nu={nu}");
            }
        }
    }

    #[test]
    fn budget_examples() {
        let t = TraceParams::new(6, 3, 4).unwrap();
        let expect = 3f64.sqrt() * 2f64.ln().powi(2) / (6f64.powf(4.0 / 3.0) * 81f64.powf(1.5));
        assert!((error_budget(1, 1, &t) - expect).abs() < 1e-18);
        let ratio = error_budget(2, 5, &t) / error_budget(2, 5, &t.with_nu(5));
        assert!((ratio - 3f64.powf(1.5)).abs() < 1e-12);
        let t12 = TraceParams::new(12, 3, 4).unwrap();
        let base = 3f64.sqrt() * 2f64.ln().powi(2) / (12f64.powf(4.0 / 3.0) * 81f64.powf(1.5));
        assert!((error_budget(1, 1, &t12) - base - 1.0 / 81.0).abs() < 1e-15);
    }

    #[test]
    fn no_level_one_forms_in_exact_weights() {
        let tf = TraceFormula::default();
        for (k, tol) in [(4u32, 1e-5), (6, 1e-9), (8, 1e-12), (10, 1e-12), (14, 1e-12)] {
            let t = TraceParams { k, p: 2, nu: 0 };
            for (m, n) in [(1u64, 1u64), (2, 3), (4, 4), (5, 1)] {
                let d = tf.delta_full(&t, 1, m, n, tol).unwrap();
                assert!(d.value.abs() <= d.tail + 1e-11, "k={k} ({m},{n}) -> {}", d.value);
            }
        }
    }

    #[test]
    fn level_one_weight_twelve_is_nonzero() {
        let tf = TraceFormula::default();
        let t = TraceParams { k: 12, p: 2, nu: 0 };
        let a = tf.delta_full(&t, 1, 1, 1, 1e-8).unwrap();
        let b = tf.delta_full(&t, 1, 1, 1, 1e-11).unwrap();
        assert!(a.value > 1e-3);
        assert!((a.value - 1.0).abs() > 1e-3);
        assert!((a.value - b.value).abs() <= a.tail + b.tail + 1e-13);
        // Delta_1(2,2)/Delta_1(1,1) = tau(2)^2/2^11 for the unique form Delta.
        let c = tf.delta_full(&t, 1, 2, 2, 1e-12).unwrap();
        let ratio = c.value / b.value;
        assert!((ratio - 576.0 / 2048.0).abs() < 1e-8, "{ratio}");
    }

    #[test]
    fn symmetric_in_m_n() {
        let tf = TraceFormula::default();
        let t = TraceParams::new(6, 3, 3).unwrap();
        for (m, n) in [(1u64, 2u64), (4, 7), (5, 2), (10, 3)] {
            let a = tf.delta_full(&t, 27, m, n, 1e-12).unwrap();
            let b = tf.delta_full(&t, 27, n, m, 1e-12).unwrap();
            assert!((a.value - b.value).abs() <= 1e-12);
            let a = tf.delta_star(&t, m, n, 1e-12).unwrap();
            let b = tf.delta_star(&t, n, m, 1e-12).unwrap();
            assert!((a.value - b.value).abs() <= 1e-12);
        }
    }

    #[test]
    fn full_trace_near_delta_at_deep_level() {
        let tf = TraceFormula::default();
        let t = TraceParams::new(6, 3, 4).unwrap();
        let d = tf.delta_full(&t, 81, 1, 1, 1e-10).unwrap();
        assert!((d.value - 1.0).abs() < 1e-3);
        assert!(d.tail <= 1e-10);
    }

    #[test]
    fn divisible_by_p_vanishes() {
        let tf = TraceFormula::default();
        let t = TraceParams::new(6, 3, 3).unwrap();
        assert_eq!(tf.delta_star(&t, 3, 1, 1e-10).unwrap(), BoundedValue::exact(0.0));
        assert_eq!(tf.delta_star(&t, 2, 9, 1e-10).unwrap(), BoundedValue::exact(0.0));
        let t12 = TraceParams::new(12, 3, 1).unwrap();
        assert!(matches!(tf.delta_star(&t12, 3, 1, 1e-10), Err(Error::Unsupported(_))));
    }

    #[test]
    fn prime_level_newforms_are_everything() {
        let tf = TraceFormula::default();
        let t = TraceParams::new(6, 5, 1).unwrap();
        for (m, n) in [(1u64, 1u64), (5, 2), (3, 3)] {
            let a = tf.delta_star(&t, m, n, 1e-11).unwrap();
            let b = tf.delta_full(&t, 5, m, n, 1e-11).unwrap();
            assert_eq!(a.value, b.value);
        }
    }

    #[test]
    fn newform_main_term() {
        let tf = TraceFormula::default();
        let t = TraceParams::new(6, 3, 4).unwrap();
        let d = tf.delta_star(&t, 1, 1, 1e-10).unwrap();
        let slack = d.tail + 100.0 * 3f64.sqrt() / (6f64.powf(4.0 / 3.0) * 3f64.powi(6));
        assert!((d.value - 2.0 / 3.0).abs() <= slack, "{}", d.value);
    }

    #[test]
    fn non_exact_mode_widens_tail() {
        let tf = TraceFormula::default();
        let t = TraceParams::new(12, 5, 3).unwrap();
        let d = tf.delta_star(&t, 1, 1, 1e-10).unwrap();
        assert!(d.tail > 1e-4);
        let main = to_f64(phi_main(3, 5));
        assert!((d.value - main).abs() <= d.tail + 100.0 * error_budget(1, 1, &t));
    }

    #[test]
    fn round_trip_reconstruction() {
        let tf = TraceFormula::default();
        for nu in 1..=4 {
            let t = TraceParams::new(6, 3, nu).unwrap();
            for (m, n) in [(1u64, 1u64), (2, 5), (7, 7)] {
                let full = tf.delta_full(&t, t.q(), m, n, 1e-11).unwrap();
                let rebuilt = tf.reconstruct_full(&t, m, n, 1e-11).unwrap();
                assert!(
                    (full.value - rebuilt.value).abs() <= full.tail + rebuilt.tail + 1e-12,
                    "nu={nu} ({m},{n})"
                );
            }
        }
    }
}
