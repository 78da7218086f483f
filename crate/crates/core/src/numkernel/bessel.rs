use std::f64::consts::{FRAC_PI_4, PI};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BesselRegime {
    Series,
    Miller,
    Hankel,
}

const SERIES_CAP: f64 = 8.0;
const HANKEL_FROM: f64 = 25.0;

impl BesselRegime {
    pub fn select(order: u32, x: f64) -> Self {
        if x <= 2.0 * order as f64 && x <= SERIES_CAP {
            BesselRegime::Series
        } else if x >= HANKEL_FROM && x > order as f64 {
            BesselRegime::Hankel
        } else {
            BesselRegime::Miller
        }
    }
}

/// J_n(x) for integer n >= 0 and x >= 0.
pub fn bessel_j(order: u32, x: f64) -> f64 {
    debug_assert!(x >= 0.0);
    if x == 0.0 {
        return if order == 0 { 1.0 } else { 0.0 };
    }
    match BesselRegime::select(order, x) {
        BesselRegime::Series => bessel_j_series(order, x),
        BesselRegime::Miller => bessel_j_miller(order, x),
        BesselRegime::Hankel => bessel_j_hankel(order, x),
    }
}

/// Power series sum_j (-1)^j (x/2)^{2j+n} / (j! (n+j)!).
pub fn bessel_j_series(order: u32, x: f64) -> f64 {
    let half = 0.5 * x;
    let mut term = 1.0;
    for i in 1..=order {
        term *= half / i as f64;
    }
    if term == 0.0 {
        return 0.0;
    }
    let q = half * half;
    let mut sum = term;
    let mut j = 0u32;
    loop {
        j += 1;
        term *= -q / (j as f64 * (order + j) as f64);
        sum += term;
        if term.abs() <= 1e-17 * sum.abs() && j as f64 > q {
            break;
        }
        if j > 500 {
            break;
        }
    }
    sum
}

/// Miller backward recurrence normalized with J_0 + 2 sum J_{2k} = 1.
pub fn bessel_j_miller(order: u32, x: f64) -> f64 {
    if x == 0.0 {
        return if order == 0 { 1.0 } else { 0.0 };
    }
    let big = (order as f64).max(x);
    let mut start = (big + 30.0 + (40.0 * big).sqrt()) as u32;
    start += start % 2;
    let two_over_x = 2.0 / x;
    let mut next = 0.0; // j_{k+1}
    let mut cur = 1e-300; // j_k
    let mut norm = 0.0;
    let mut wanted = 0.0;
    let mut k = start;
    while k > 0 {
        let prev = k as f64 * two_over_x * cur - next;
        next = cur;
        cur = prev;
        k -= 1;
        if k == order {
            wanted = cur;
        }
        if k > 0 && k % 2 == 0 {
            norm += 2.0 * cur;
        }
        if cur.abs() > 1e250 {
            cur *= 1e-250;
            next *= 1e-250;
            norm *= 1e-250;
            wanted *= 1e-250;
        }
    }
    norm += cur;
    if order == 0 {
        wanted = cur;
    }
    wanted / norm
}

fn hankel_pq(nu: f64, x: f64) -> (f64, f64) {
    let mu = 4.0 * nu * nu;
    let z = 8.0 * x;
    let mut p = 1.0;
    let mut q = 0.0;
    let mut a = 1.0;
    let mut last = f64::INFINITY;
    for k in 1..60 {
        let kk = (2 * k - 1) as f64;
        a *= (mu - kk * kk) / (k as f64 * z);
        if a.abs() >= last {
            break;
        }
        last = a.abs();
        match k % 4 {
            1 => q += a,
            2 => p -= a,
            3 => q -= a,
            _ => p += a,
        }
        if a.abs() < 1e-17 {
            break;
        }
    }
    (p, q)
}

/// Large-argument Hankel expansion for J_0, J_1 followed by upward recurrence
/// (stable while the order stays below x).
pub fn bessel_j_hankel(order: u32, x: f64) -> f64 {
    let (s, c) = x.sin_cos();
    let amp = (2.0 / (PI * x)).sqrt();
    // cos(x - pi/4) and cos(x - 3pi/4) from sin x and cos x
    let r = FRAC_PI_4.cos();
    let chi0_cos = r * (c + s);
    let chi0_sin = r * (s - c);
    let chi1_cos = r * (s - c);
    let chi1_sin = -r * (c + s);
    let (p0, q0) = hankel_pq(0.0, x);
    let (p1, q1) = hankel_pq(1.0, x);
    let j0 = amp * (p0 * chi0_cos - q0 * chi0_sin);
    let j1 = amp * (p1 * chi1_cos - q1 * chi1_sin);
    if order == 0 {
        return j0;
    }
    let (mut prev, mut cur) = (j0, j1);
    for k in 1..order {
        let next = 2.0 * k as f64 / x * cur - prev;
        prev = cur;
        cur = next;
    }
    cur
}
