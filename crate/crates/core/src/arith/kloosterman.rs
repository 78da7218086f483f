use std::f64::consts::PI;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use dashmap::DashMap;
use num_complex::Complex64;
use rustfft::FftPlanner;

use super::{gcd, mod_inverse, Factorization};

fn residue(a: i64, c: u64) -> u64 {
    (a as i128).rem_euclid(c as i128) as u64
}

/// S(m, n; c) = sum over units d mod c of e((d m + d' n) / c), d d' = 1 mod c.
pub fn kloosterman(m: i64, n: i64, c: u64) -> f64 {
    assert!(c >= 1, "modulus must be positive");
    if c == 1 {
        return 1.0;
    }
    let (mr, nr) = (residue(m, c), residue(n, c));
    // Summing over sorted residues makes the result independent of the
    // d <-> d' pairing, so S(m, n; c) == S(n, m; c) bit for bit.
    let mut residues: Vec<u64> = (1..c)
        .filter_map(|d| {
            let dinv = mod_inverse(d, c)?;
            Some(((d as u128 * mr as u128 + dinv as u128 * nr as u128) % c as u128) as u64)
        })
        .collect();
    residues.sort_unstable();
    let scale = 2.0 * PI / c as f64;
    let mut re = crate::CompensatedSum::new();
    let mut im = crate::CompensatedSum::new();
    for r in residues {
        let (s, co) = (scale * r as f64).sin_cos();
        re += co;
        im += s;
    }
    debug_assert!(
        im.value().abs() <= 1e-10,
        "imaginary residue {} in S({m},{n};{c})",
        im.value()
    );
    re.value()
}

/// 2^omega(c) (m, n, c)^{1/2} c^{1/2}, times sqrt(2) for even c.
///
/// Without the extra factor the bound fails at c = 2^a, a >= 5: for example
/// |S(-5, 7; 32)| = 14.78 > 2 sqrt(32).
pub fn kloosterman_bound(m: i64, n: i64, c: u64) -> f64 {
    let omega = Factorization::of(c).map(|f| f.omega()).unwrap_or(0);
    let g = gcd(gcd(m.unsigned_abs(), n.unsigned_abs()), c);
    let two_adic = if c % 2 == 0 { std::f64::consts::SQRT_2 } else { 1.0 };
    two_adic * 2f64.powi(omega as i32) * (g as f64).sqrt() * (c as f64).sqrt()
}

/// Row K_c[j] = S(j, 1; c) for j = 0..c, by one length-c DFT of e(d'/c).
pub fn kloosterman_row(c: u64) -> Vec<f64> {
    if c == 1 {
        return vec![1.0];
    }
    let len = c as usize;
    let scale = 2.0 * PI / c as f64;
    let mut buf = vec![Complex64::new(0.0, 0.0); len];
    for d in 1..c {
        if buf[d as usize] != Complex64::new(0.0, 0.0) {
            continue;
        }
        if let Some(dinv) = mod_inverse(d, c) {
            buf[d as usize] = Complex64::from_polar(1.0, scale * dinv as f64);
            buf[dinv as usize] = Complex64::from_polar(1.0, scale * d as f64);
        }
    }
    // Planners memoize every length they see, so a shared one grows without
    // bound over a sweep of moduli.
    let fft = FftPlanner::new().plan_fft_inverse(len);
    fft.process(&mut buf);
    buf.into_iter().map(|z| z.re).collect()
}

/// Concurrent cache of Kloosterman rows keyed by the modulus.
///
/// Any S(m, n; c) is assembled from rows through Selberg's identity
/// S(m, n; c) = sum_{d | (m, n, c)} d S(mn/d^2, 1; c/d).
///
/// Rows are retained while the total stays within a byte budget; beyond it
/// rows are still computed but handed out uncached.
#[derive(Debug)]
pub struct KloostermanCache {
    rows: DashMap<u64, Arc<[f64]>>,
    budget: usize,
    used: AtomicUsize,
}

pub const DEFAULT_CACHE_BUDGET: usize = 512 << 20;

impl Default for KloostermanCache {
    fn default() -> Self {
        Self::with_budget(DEFAULT_CACHE_BUDGET)
    }
}

impl KloostermanCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_budget(bytes: usize) -> Self {
        Self {
            rows: DashMap::new(),
            budget: bytes,
            used: AtomicUsize::new(0),
        }
    }

    pub fn bytes_used(&self) -> usize {
        self.used.load(Ordering::Relaxed)
    }

    fn reserve(&self, bytes: usize) -> bool {
        self.used
            .fetch_update(Ordering::Relaxed, Ordering::Relaxed, |u| {
                (u + bytes <= self.budget).then_some(u + bytes)
            })
            .is_ok()
    }

    fn store(&self, c: u64, row: Arc<[f64]>) -> Arc<[f64]> {
        let bytes = row.len() * std::mem::size_of::<f64>();
        if !self.reserve(bytes) {
            return row;
        }
        // A racing writer computes the same row; keep whichever landed first.
        match self.rows.entry(c) {
            dashmap::mapref::entry::Entry::Occupied(e) => {
                self.used.fetch_sub(bytes, Ordering::Relaxed);
                e.get().clone()
            }
            dashmap::mapref::entry::Entry::Vacant(v) => v.insert(row).clone(),
        }
    }

    pub fn row(&self, c: u64) -> Arc<[f64]> {
        if let Some(r) = self.rows.get(&c) {
            return r.clone();
        }
        self.store(c, kloosterman_row(c).into())
    }

    pub fn get(&self, m: u64, n: u64, c: u64) -> f64 {
        let g = gcd(gcd(m, n), c);
        if g == 1 {
            let row = self.row(c);
            return row[((m % c) as u128 * (n % c) as u128 % c as u128) as usize];
        }
        let mut acc = 0.0;
        for d in divisors_of(g) {
            let cd = c / d;
            let a = (m / d) % cd;
            let b = (n / d) % cd;
            let row = self.row(cd);
            acc += d as f64 * row[(a as u128 * b as u128 % cd as u128) as usize];
        }
        acc
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn clear(&self) {
        self.rows.clear();
        self.used.store(0, Ordering::Relaxed);
    }

    /// Snapshot of all rows sorted by modulus.
    pub fn export_rows(&self) -> Vec<(u64, Arc<[f64]>)> {
        let mut out: Vec<_> = self
            .rows
            .iter()
            .map(|e| (*e.key(), e.value().clone()))
            .collect();
        out.sort_by_key(|(c, _)| *c);
        out
    }

    /// Inserts a row obtained elsewhere after spot-checking it against the
    /// direct sum. Returns false (and stores nothing) if it does not match.
    pub fn import_row(&self, c: u64, row: Vec<f64>) -> bool {
        if c == 0 || row.len() as u64 != c || row.iter().any(|v| !v.is_finite()) {
            return false;
        }
        let probes = [1u64, 2, c / 2 + 1, c - 1];
        for &j in &probes {
            let j = j % c;
            let direct = kloosterman(j as i64, 1, c);
            if (direct - row[j as usize]).abs() > 1e-8 * (c as f64).sqrt().max(1.0) {
                return false;
            }
        }
        self.store(c, row.into());
        true
    }
}

fn divisors_of(g: u64) -> Vec<u64> {
    Factorization::of(g).map(|f| f.divisors()).unwrap_or_else(|_| vec![1])
}
