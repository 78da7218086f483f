//! Harmonic moments of L(1/2, f) over newforms of level p^nu, evaluated
//! through the newform trace formula.
//!
//! Both moments are finite weighted sums of Delta*_q(m, n). Each Delta* is
//! split into its diagonal part phi(nu, p) delta_{m,n} and the Kloosterman
//! series of the levels in [`newform_levels`]. The series are evaluated
//! modulus by modulus: one row S(., 1; c) serves every active pair.

use std::f64::consts::PI;
use std::collections::HashMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::{
    g_k, q_polynomial, shared_kernel, default_g, CutoffKernel, KernelKind, ENVELOPE_SIGMAS,
};
use crate::arith::{gcd, kloosterman_row, tau_quarter_constant, tau_table};
use crate::numkernel::bessel_j;
use crate::trace::{
    full_bound_coefficient, newform_levels, phi_main, BoundedValue, TailModel, TraceFormula,
    TraceParams, DEFAULT_R_CAP,
};
use crate::{CompensatedSum, Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// Largest n (or m) the truncation search may reach.
pub const DEFAULT_GRID_CAP: u64 = 1 << 22;

const REDUCTION_BLOCK: usize = 4096;
const ROW_BATCH_ENTRIES: u64 = 1 << 24;
const TILE_PAIRS: usize = 1 << 21;
/// Width in log(mn) of the bins used to place the common series cutoff.
const MASS_BIN: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentConstants {
    pub g_k: f64,
    #[serde(rename = "A3")]
    pub a3: f64,
    #[serde(rename = "A2")]
    pub a2: f64,
    #[serde(rename = "A1")]
    pub a1: f64,
    #[serde(rename = "A0")]
    pub a0: f64,
    pub phi_main: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "moment", rename_all = "lowercase")]
pub enum MomentKind {
    M2 { m: u64 },
    M3,
}

/// Sizes of the evaluated sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Truncation {
    pub m_max: u64,
    pub n_max: u64,
    /// Pairs whose Kloosterman series was summed.
    pub active_pairs: u64,
    /// Largest r summed in any series.
    pub r_max: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub schema_version: u32,
    pub kind: MomentKind,
    pub params: TraceParams,
    pub computed: BoundedValue,
    pub predicted: f64,
    pub constants: MomentConstants,
    pub relative_gap: f64,
    pub diagonal: f64,
    pub off_diagonal: f64,
    pub truncation: Truncation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonvanishingBound {
    pub m2: MomentReport,
    pub m3: MomentReport,
    /// Smallest value of M2^3 / M3^2 over the certified intervals.
    pub bound: f64,
    pub c_effective: f64,
    /// The same quotient built from the predicted main terms.
    pub predicted_bound: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reduction {
    Sequential,
    Blocked,
}

/// One Kloosterman series to sum: w c 2 pi i^k sum_{r <= r_max} S(m,n;Lr)/(Lr) J_{k-1}(x0/r).
#[derive(Debug, Clone, Copy)]
struct Job {
    m: u64,
    n: u64,
    g: u64,
    x0: f64,
    weight: f64,
    r_max: u64,
}

#[derive(Debug, Clone)]
pub struct MomentEngine {
    pub grid_cap: u64,
    pub r_cap: u64,
    pub reduction: Reduction,
    trace: TraceFormula,
}

impl Default for MomentEngine {
    fn default() -> Self {
        MomentEngine {
            grid_cap: DEFAULT_GRID_CAP,
            r_cap: DEFAULT_R_CAP,
            reduction: Reduction::Blocked,
            trace: TraceFormula::default(),
        }
    }
}

fn check_params(params: &TraceParams, tol: f64, what: &'static str) -> Result<()> {
    if params.nu < 3 {
        return Err(Error::domain(what, format!("nu = {} but moments need nu >= 3", params.nu)));
    }
    if !params.exact_mode() {
        return Err(Error::Unsupported(format!(
            "moments need a weight without level-one cusp forms, got k = {}",
            params.k
        )));
    }
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(Error::domain(what, format!("tol = {tol}")));
    }
    Ok(())
}

fn rat(x: num_rational::Rational64) -> f64 {
    *x.numer() as f64 / *x.denom() as f64
}

fn constants(params: &TraceParams) -> Result<(MomentConstants, crate::analytic::QPolynomial)> {
    let q = q_polynomial(params.k, params.p, params.q_hat(), &default_g())?;
    Ok((
        MomentConstants {
            g_k: g_k(params.k, params.p)?,
            a3: q.a3,
            a2: q.a2,
            a1: q.a1,
            a0: q.a0,
            phi_main: rat(phi_main(params.nu, params.p)),
        },
        q,
    ))
}

fn relative_gap(computed: f64, predicted: f64) -> f64 {
    if predicted != 0.0 {
        (computed - predicted).abs() / predicted.abs()
    } else {
        (computed - predicted).abs()
    }
}

/// Bound on sum_{n > big_n} n^a |K(n / scale)| from the kernel's power envelopes.
fn power_tail(kernel: &CutoffKernel, scale: f64, a: f64, big_n: u64) -> Result<f64> {
    let n = big_n as f64;
    let mut best = f64::INFINITY;
    for s in ENVELOPE_SIGMAS {
        let e = s - a - 1.0;
        if e <= 0.0 {
            continue;
        }
        let log = kernel.envelope(s)?.ln() + s * scale.ln() - e * n.ln() - e.ln();
        best = best.min(log.exp());
    }
    Ok(best)
}

/// Values K(i / scale) for i = 1..=len, appended in parallel to `out`.
fn extend_values(kernel: &CutoffKernel, scale: f64, out: &mut Vec<f64>, len: u64) -> Result<()> {
    let start = out.len() as u64 + 1;
    if start > len {
        return Ok(());
    }
    let fresh: Result<Vec<f64>> = (start..=len)
        .into_par_iter()
        .map(|i| kernel.eval(i as f64 / scale))
        .collect();
    out.extend(fresh?);
    Ok(())
}

fn sign(k: u32) -> f64 {
    if (k / 2) % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Sum of |c_j| K_{p^j} over the newform levels.
fn trace_bound(params: &TraceParams) -> f64 {
    newform_levels(params.p, params.nu)
        .into_iter()
        .map(|(j, c)| rat(c).abs() * full_bound_coefficient(params.k, params.p.pow(j)))
        .sum()
}

fn divisors_small(g: u64) -> Vec<u64> {
    (1..=g).filter(|d| g % d == 0).collect()
}

/// Sums each job's truncated series, returning sum_{r <= r_max} S/c J in job order.
fn sweep(k: u32, level: u64, jobs: &[Job]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..jobs.len()).collect();
    order.sort_by(|&a, &b| jobs[b].r_max.cmp(&jobs[a].r_max).then(a.cmp(&b)));
    let sorted: Vec<Job> = order.iter().map(|&i| jobs[i]).collect();
    let mut acc = vec![CompensatedSum::new(); sorted.len()];
    let r_top = sorted.first().map_or(0, |j| j.r_max);
    let max_g = sorted.iter().map(|j| j.g).max().unwrap_or(1);
    let order_k = k - 1;

    let mut r = 1u64;
    while r <= r_top {
        let mut end = r;
        let mut entries = level * r;
        while end < r_top && entries + level * (end + 1) <= ROW_BATCH_ENTRIES {
            end += 1;
            entries += level * end;
        }
        // Selberg's identity needs rows of modulus level*s/d for d | (m, n, s).
        let mut needed: Vec<u64> = (r..=end).collect();
        if max_g > 1 {
            for s in r..=end {
                needed.extend(divisors_small(s).into_iter().filter(|&d| d > 1 && d <= max_g).map(|d| s / d));
            }
        }
        needed.sort_unstable();
        needed.dedup();
        let rows: HashMap<u64, Vec<f64>> = needed
            .into_par_iter()
            .map(|s| (s, kloosterman_row(level * s)))
            .collect();
        let live = sorted.partition_point(|j| j.r_max >= r);
        sorted[..live]
            .par_iter()
            .zip(acc[..live].par_iter_mut())
            .for_each(|(job, sum)| {
                let mn = job.m as u128 * job.n as u128;
                for s in r..=end.min(job.r_max) {
                    let c = level * s;
                    let h = gcd(job.g, s);
                    let kl = if h == 1 {
                        rows[&s][(mn % c as u128) as usize]
                    } else {
                        divisors_small(h)
                            .into_iter()
                            .map(|d| {
                                let cd = c / d;
                                d as f64 * rows[&(s / d)][(mn / (d * d) as u128 % cd as u128) as usize]
                            })
                            .sum()
                    };
                    *sum += kl / c as f64 * bessel_j(order_k, job.x0 / s as f64);
                }
            });
        r = end + 1;
    }
    let mut out = vec![0.0; jobs.len()];
    for (pos, &i) in order.iter().enumerate() {
        out[i] = acc[pos].value();
    }
    out
}

fn reduce_blocked(xs: &[f64]) -> CompensatedSum {
    let blocks: Vec<CompensatedSum> = xs
        .par_chunks(REDUCTION_BLOCK)
        .map(|c| {
            let mut s = CompensatedSum::new();
            for &x in c {
                s += x;
            }
            s
        })
        .collect();
    let mut total = CompensatedSum::new();
    for b in &blocks {
        total.merge(b);
    }
    total
}

/// Deterministic stream of pairs (m, n, w) with m <= n, both coprime to p, delivered in tiles.
trait PairSource: Sync {
    fn for_each_tile(&self, f: &mut dyn FnMut(&[(u64, u64, f64)]) -> Result<()>) -> Result<()>;
}

struct PairList<'a>(&'a [(u64, u64, f64)]);

impl PairSource for PairList<'_> {
    fn for_each_tile(&self, f: &mut dyn FnMut(&[(u64, u64, f64)]) -> Result<()>) -> Result<()> {
        for tile in self.0.chunks(TILE_PAIRS) {
            f(tile)?;
        }
        Ok(())
    }
}

/// Per-level data for the truncated Kloosterman series.
struct LevelPlan {
    level: u64,
    coef: f64,
    common: u64,
    slack: f64,
}

/// Off-diagonal value of sum_pairs w Delta*(m, n) and the certified remainder.
///
/// Each level gets an equal share of `tol`. Within a level, half goes to one
/// common cutoff R* for every series and half is split evenly as per-series
/// slack, which lets light series stop early or be dropped.
fn off_diagonal(
    params: &TraceParams,
    source: &dyn PairSource,
    tol: f64,
    r_cap: u64,
    mode: Reduction,
) -> Result<(f64, f64, Truncation)> {
    let k = params.k;
    let levels: Vec<(u64, f64)> = newform_levels(params.p, params.nu)
        .into_iter()
        .map(|(j, c)| (params.p.pow(j), rat(c)))
        .collect();
    let per_level = tol / levels.len() as f64;

    // Pass 1: mass sqrt((m,n)) |w| binned by log(mn). The series majorant is
    // linear in sqrt((m,n)) and non-decreasing in mn, so upper bin edges certify.
    let mut mass: Vec<f64> = Vec::new();
    let mut count = 0u64;
    source.for_each_tile(&mut |tile| {
        let binned: Vec<(usize, f64)> = tile
            .par_iter()
            .map(|&(m, n, w)| {
                let ln_x = ((m as f64) * (n as f64)).ln();
                let bin = (ln_x / MASS_BIN - 1e-9).ceil().max(0.0) as usize;
                (bin, w.abs() * (gcd(m, n) as f64).sqrt())
            })
            .collect();
        for (bin, v) in binned {
            if mass.len() <= bin {
                mass.resize(bin + 1, 0.0);
            }
            mass[bin] += v;
        }
        count += tile.len() as u64;
        Ok(())
    })?;

    let mut plans = Vec::with_capacity(levels.len());
    for &(level, coef) in &levels {
        let unit: Vec<(f64, TailModel)> = mass
            .iter()
            .enumerate()
            .filter(|(_, w)| **w > 0.0)
            .map(|(b, w)| {
                let x = (b as f64 * MASS_BIN).exp();
                (w * coef.abs(), TailModel::from_product(k, level, 1.0, x))
            })
            .collect();
        let total_at = |r: u64| -> f64 { unit.iter().map(|(w, t)| w * t.tail_after(r)).sum() };
        let common = common_cutoff(&total_at, per_level / 2.0, r_cap)?;
        plans.push(LevelPlan {
            level,
            coef,
            common,
            slack: per_level / 2.0 / count.max(1) as f64,
        });
    }

    // Pass 2: plan, sweep and reduce tile by tile.
    let mut truncation = Truncation::default();
    let mut value = CompensatedSum::new();
    let mut tail = CompensatedSum::new();
    let mut active = 0u64;
    source.for_each_tile(&mut |tile| {
        for plan in &plans {
            let planned: Result<Vec<(Option<Job>, f64)>> = tile
                .par_iter()
                .map(|&(m, n, w)| {
                    let model = TailModel::new(k, plan.level, m, n);
                    let scale = (w * plan.coef).abs();
                    let full = scale * model.tail_after(0);
                    if full <= plan.slack {
                        return Ok((None, full));
                    }
                    let target = model.tail_after(plan.common) + plan.slack / scale;
                    let r_max = model.cutoff(target, r_cap)?.min(plan.common);
                    let job = Job {
                        m,
                        n,
                        g: gcd(m, n),
                        x0: 4.0 * PI * ((m as f64) * (n as f64)).sqrt() / plan.level as f64,
                        weight: w * plan.coef,
                        r_max,
                    };
                    Ok((Some(job), scale * model.tail_after(r_max)))
                })
                .collect();
            let planned = planned?;
            for (_, t) in &planned {
                tail += *t;
            }
            let jobs: Vec<Job> = planned.into_iter().filter_map(|(j, _)| j).collect();
            active += jobs.len() as u64;
            truncation.r_max = truncation.r_max.max(jobs.iter().map(|j| j.r_max).max().unwrap_or(0));
            let sums = sweep(k, plan.level, &jobs);
            let terms: Vec<f64> = jobs
                .iter()
                .zip(sums)
                .map(|(job, s)| job.weight * 2.0 * PI * sign(k) * s)
                .collect();
            match mode {
                Reduction::Sequential => {
                    for t in terms {
                        value += t;
                    }
                }
                Reduction::Blocked => value.merge(&reduce_blocked(&terms)),
            }
        }
        Ok(())
    })?;
    truncation.active_pairs = active;
    let value = value.value();
    if !value.is_finite() {
        return Err(Error::Overflow("moment off-diagonal sum"));
    }
    Ok((value, tail.value(), truncation))
}

/// Smallest R with total(R) <= tol, for a non-increasing total.
fn common_cutoff(total: &dyn Fn(u64) -> f64, tol: f64, cap: u64) -> Result<u64> {
    if total(0) <= tol {
        return Ok(0);
    }
    let mut hi = 1u64;
    while total(hi) > tol {
        if hi > cap {
            return Err(Error::NonConvergence { what: "moment Kloosterman series", limit: cap, tol });
        }
        hi *= 2;
    }
    let mut lo = hi / 2;
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if total(mid) <= tol {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

impl MomentEngine {
    pub fn new(trace: TraceFormula) -> Self {
        MomentEngine { trace, ..Default::default() }
    }

    pub fn with_reduction(mut self, reduction: Reduction) -> Self {
        self.reduction = reduction;
        self
    }

    pub fn with_grid_cap(mut self, cap: u64) -> Self {
        self.grid_cap = cap;
        self
    }

    fn u_kernel(params: &TraceParams) -> Result<Arc<CutoffKernel>> {
        shared_kernel(params.k, KernelKind::U { p: params.p, nu: params.nu })
    }

    /// Terms with p | n are dropped from the sums; confirm ten of them vanish exactly.
    fn spot_check_zeros(&self, params: &TraceParams, m: u64, tol: f64) -> Result<()> {
        for j in 1..=10u64 {
            let n = params.p * j;
            let d = self.trace.delta_star(params, m, n, tol)?;
            if d.value != 0.0 || d.tail != 0.0 {
                return Err(Error::Verification {
                    what: format!("Delta*({m}, {n}) with p | n"),
                    computed: d.value,
                    expected: 0.0,
                });
            }
        }
        Ok(())
    }

    /// M_{2,m} = sum_n tau(n)/sqrt(n) U(n/q_hat^2) Delta*(m, n).
    pub fn m2(&self, m: u64, params: &TraceParams, tol: f64) -> Result<MomentReport> {
        check_params(params, tol, "m2")?;
        if m == 0 || m % params.p == 0 {
            return Err(Error::domain("m2", format!("m = {m} must be positive and coprime to p")));
        }
        self.spot_check_zeros(params, m, tol)?;
        let (constants, _) = constants(params)?;
        let phi = constants.phi_main;
        let u = Self::u_kernel(params)?;
        let scale = params.q_hat().powi(2);
        let c_tau = tau_quarter_constant();
        let b = trace_bound(params);

        // Off-diagonal terms past N: tau(n) <= C n^{1/4} and sqrt((m,n)) <= sqrt(m).
        let mut big_n = m.max((4.0 * scale).ceil() as u64);
        let rect_tail = loop {
            let t = c_tau * b * m as f64 * power_tail(&u, scale, 0.25, big_n)?;
            if t <= tol / 4.0 {
                break t;
            }
            if big_n >= self.grid_cap {
                return Err(Error::Infeasible(format!(
                    "M2 truncation needs n beyond the grid cap {}",
                    self.grid_cap
                )));
            }
            big_n = (big_n * 2).min(self.grid_cap);
        };
        let mut uv = Vec::new();
        extend_values(&u, scale, &mut uv, big_n)?;
        let tau = tau_table(big_n as usize);
        let weight = |n: u64| tau[n as usize] as f64 / (n as f64).sqrt() * uv[n as usize - 1];

        let diagonal = weight(m) * phi;
        let pairs: Vec<(u64, u64, f64)> = (1..=big_n)
            .filter(|n| n % params.p != 0)
            .map(|n| (m.min(n), m.max(n), weight(n)))
            .collect();
        let (off, tail, mut truncation) =
            off_diagonal(params, &PairList(&pairs), tol * 0.75, self.r_cap, self.reduction)?;
        truncation.m_max = m;
        truncation.n_max = big_n;

        let value = diagonal + off;
        let lq = (scale / m as f64).ln();
        let tm = tau_table(m as usize)[m as usize] as f64;
        let predicted = tm / (m as f64).sqrt() * phi * phi * (lq + constants.g_k);
        Ok(MomentReport {
            schema_version: SCHEMA_VERSION,
            kind: MomentKind::M2 { m },
            params: *params,
            computed: BoundedValue::new(value, tail + rect_tail),
            predicted,
            constants,
            relative_gap: relative_gap(value, predicted),
            diagonal,
            off_diagonal: off,
            truncation,
        })
    }

    /// M_3 = 2 sum_{m,n} tau(m)/sqrt(mn) U(m/q_hat^2) T(n/q_hat) Delta*(m, n).
    pub fn m3(&self, params: &TraceParams, tol: f64) -> Result<MomentReport> {
        check_params(params, tol, "m3")?;
        self.spot_check_zeros(params, 1, tol)?;
        let (constants, q) = constants(params)?;
        let phi = constants.phi_main;
        let u = Self::u_kernel(params)?;
        let t = shared_kernel(params.k, KernelKind::T)?;
        let q_hat = params.q_hat();
        let scale_u = q_hat * q_hat;
        let c_tau = tau_quarter_constant();
        let b = trace_bound(params);
        let p = params.p;

        // |off term| <= 2B [tau(m) m^{1/4} |U_m|] [n^{1/4} |T_n|] using sqrt((m,n)) <= (mn)^{1/4}.
        let mut nm = (4.0 * scale_u).ceil() as u64;
        let mut nn = (4.0 * q_hat).ceil() as u64;
        let (mut uv, mut tv) = (Vec::new(), Vec::new());
        let mut tau = Vec::new();
        let rect_tail = loop {
            extend_values(&u, scale_u, &mut uv, nm)?;
            extend_values(&t, q_hat, &mut tv, nn)?;
            if tau.len() < nm.max(nn) as usize + 1 {
                tau = tau_table(nm.max(nn) as usize);
            }
            let su_in: f64 = (1..=nm)
                .filter(|m| m % p != 0)
                .map(|m| tau[m as usize] as f64 * (m as f64).powf(0.25) * uv[m as usize - 1].abs())
                .sum();
            let st_in: f64 = (1..=nn)
                .filter(|n| n % p != 0)
                .map(|n| (n as f64).powf(0.25) * tv[n as usize - 1].abs())
                .sum();
            let su_tail = c_tau * power_tail(&u, scale_u, 0.5, nm)?;
            let st_tail = power_tail(&t, q_hat, 0.25, nn)?;
            let m_side = 2.0 * b * su_tail * (st_in + st_tail);
            let n_side = 2.0 * b * su_in * st_tail;
            let diag = 2.0 * phi * c_tau * diagonal_tail(&u, &t, q_hat, nm.min(nn))?;
            let total = m_side + n_side + diag;
            if total <= tol / 4.0 {
                break total;
            }
            let cap_hit = |x: u64| x >= self.grid_cap;
            if m_side + diag / 2.0 >= n_side && !cap_hit(nm) {
                nm = (nm * 2).min(self.grid_cap);
            } else if !cap_hit(nn) {
                nn = (nn * 2).min(self.grid_cap);
            } else if !cap_hit(nm) {
                nm = (nm * 2).min(self.grid_cap);
            } else {
                return Err(Error::Infeasible(format!(
                    "M3 truncation needs a rectangle beyond the grid cap {}",
                    self.grid_cap
                )));
            }
        };

        let alpha: Vec<f64> = (1..=nm)
            .map(|m| {
                if m % p == 0 {
                    0.0
                } else {
                    2.0 * tau[m as usize] as f64 / (m as f64).sqrt() * uv[m as usize - 1]
                }
            })
            .collect();
        let beta: Vec<f64> = (1..=nn)
            .map(|n| if n % p == 0 { 0.0 } else { tv[n as usize - 1] / (n as f64).sqrt() })
            .collect();

        let mut diag = CompensatedSum::new();
        for i in 1..=nm.min(nn) as usize {
            diag += alpha[i - 1] * beta[i - 1] * phi;
        }
        let diagonal = diag.value();

        let skip_tol = tol / 4.0;
        let bound = ProductBound::new(params, nm as f64 * nn as f64);
        let mut screen = PairScreen::new(&alpha, &beta, bound);
        let skipped = screen.choose_threshold(skip_tol);
        let (off, tail, mut truncation) =
            off_diagonal(params, &screen, tol / 2.0, self.r_cap, self.reduction)?;
        truncation.m_max = nm;
        truncation.n_max = nn;

        let value = diagonal + off;
        let predicted = 2.0 * phi.powi(4) * q.value;
        Ok(MomentReport {
            schema_version: SCHEMA_VERSION,
            kind: MomentKind::M3,
            params: *params,
            computed: BoundedValue::new(value, tail + rect_tail + skipped),
            predicted,
            constants,
            relative_gap: relative_gap(value, predicted),
            diagonal,
            off_diagonal: off,
            truncation,
        })
    }

    /// Hoelder lower bound M2^3 / M3^2 for the harmonic proportion with L(1/2, f) != 0.
    pub fn nonvanishing_bound(&self, params: &TraceParams, tol: f64) -> Result<NonvanishingBound> {
        let m2 = self.m2(1, params, tol)?;
        let m3 = self.m3(params, tol)?;
        let bound = holder_quotient(&m2.computed, &m3.computed)?;
        let log_q = (params.q() as f64).ln();
        let predicted_bound = m2.predicted.powi(3) / m3.predicted.powi(2);
        Ok(NonvanishingBound {
            c_effective: bound * log_q.powi(3),
            bound,
            predicted_bound,
            m2,
            m3,
        })
    }
}

/// Smallest M2^3 / M3^2 over the certified intervals of both moments.
pub fn holder_quotient(m2: &BoundedValue, m3: &BoundedValue) -> Result<f64> {
    let (l3, u3) = (m3.lower(), m3.upper());
    if l3 <= 0.0 && u3 >= 0.0 {
        return Err(Error::Degenerate(format!("M3 interval [{l3:e}, {u3:e}] contains 0")));
    }
    Ok(m2.lower().powi(3) / l3.abs().max(u3.abs()).powi(2))
}

/// Bound on sum_{n > N} n^{-3/4} |U(n/q_hat^2)| |T(n/q_hat)|.
fn diagonal_tail(u: &CutoffKernel, t: &CutoffKernel, q_hat: f64, big_n: u64) -> Result<f64> {
    let n = (big_n as f64).ln();
    let mut best = f64::INFINITY;
    for s1 in ENVELOPE_SIGMAS {
        for s2 in ENVELOPE_SIGMAS {
            let e = s1 + s2 - 0.25;
            let log = u.envelope(s1)?.ln() + t.envelope(s2)?.ln() + (2.0 * s1 + s2) * q_hat.ln()
                - e * n
                - e.ln();
            best = best.min(log.exp());
        }
    }
    Ok(best)
}

/// Non-decreasing majorant F(x) with |Delta*(m, n) - phi delta_{m,n}| <= sqrt((m,n)) F(mn),
/// tabulated at x = e^{i h}.
struct ProductBound {
    step: f64,
    ln_values: Vec<f64>,
}

impl ProductBound {
    const STEP: f64 = 0.01;

    fn new(params: &TraceParams, x_max: f64) -> Self {
        let levels: Vec<(u64, f64)> = newform_levels(params.p, params.nu)
            .into_iter()
            .map(|(j, c)| (params.p.pow(j), rat(c).abs()))
            .collect();
        let count = (x_max.max(1.0).ln() / Self::STEP).ceil() as usize + 1;
        let ln_values = (0..=count)
            .into_par_iter()
            .map(|i| {
                let x = (i as f64 * Self::STEP).exp();
                let f: f64 = levels
                    .iter()
                    .map(|&(level, c)| {
                        let series = TailModel::from_product(params.k, level, 1.0, x).tail_after(0);
                        c * series.min(full_bound_coefficient(params.k, level) * x.sqrt())
                    })
                    .sum();
                f.ln()
            })
            .collect();
        ProductBound { step: Self::STEP, ln_values }
    }

    fn ln_at(&self, ln_x: f64) -> f64 {
        let i = (ln_x / self.step - 1e-9).ceil().max(0.0) as usize;
        self.ln_values[i.min(self.ln_values.len() - 1)]
    }
}

/// The M3 rectangle: ordered pairs with weight alpha_m beta_n, screened by
/// log-binned bounds |alpha_m beta_n| sqrt((m,n)) F(mn) on the off-diagonal term.
struct PairScreen<'a> {
    alpha: &'a [f64],
    beta: &'a [f64],
    ln_alpha: Vec<f64>,
    ln_beta: Vec<f64>,
    ln_index: Vec<f64>,
    bound: ProductBound,
    lo: f64,
    first: usize,
}

impl<'a> PairScreen<'a> {
    const WIDTH: f64 = 0.01;
    const BINS: usize = 200_000;
    /// Candidate (m, n) cells examined per tile.
    const TILE_CELLS: u64 = 1 << 24;

    fn new(alpha: &'a [f64], beta: &'a [f64], bound: ProductBound) -> Self {
        let ln = |v: &[f64]| v.iter().map(|x| x.abs().ln()).collect::<Vec<f64>>();
        let len = alpha.len().max(beta.len());
        let ln_index: Vec<f64> = (1..=len).map(|i| (i as f64).ln()).collect();
        let (ln_alpha, ln_beta) = (ln(alpha), ln(beta));
        let top = ln_alpha.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            + ln_beta.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            + 0.5 * (len as f64).ln()
            + bound.ln_at((alpha.len() as f64 * beta.len() as f64).ln());
        let lo = top + 1.0 - Self::WIDTH * Self::BINS as f64;
        PairScreen { alpha, beta, ln_alpha, ln_beta, ln_index, bound, lo, first: 0 }
    }

    /// Bin of the ordered pair (alpha index i, beta index j), None when the weight vanishes.
    #[inline]
    fn bin(&self, i: usize, j: usize) -> Option<usize> {
        let v = self.ln_alpha[i] + self.ln_beta[j];
        if v == f64::NEG_INFINITY {
            return None;
        }
        let g = gcd(i as u64 + 1, j as u64 + 1) as f64;
        let v = v + 0.5 * g.ln() + self.bound.ln_at(self.ln_index[i] + self.ln_index[j]);
        Some((((v - self.lo) / Self::WIDTH).floor().max(0.0) as usize).min(Self::BINS - 1))
    }

    fn upper_edge(&self, bin: usize) -> f64 {
        (self.lo + (bin + 1) as f64 * Self::WIDTH).exp()
    }

    /// Drops the lightest bins while their certified mass stays within `tol`; returns that mass.
    fn choose_threshold(&mut self, tol: f64) -> f64 {
        let counts = (0..self.alpha.len())
            .into_par_iter()
            .fold(
                || vec![0u64; Self::BINS],
                |mut h, i| {
                    for j in 0..self.beta.len() {
                        if let Some(b) = self.bin(i, j) {
                            h[b] += 1;
                        }
                    }
                    h
                },
            )
            .reduce(
                || vec![0u64; Self::BINS],
                |mut a, b| {
                    for (x, y) in a.iter_mut().zip(b) {
                        *x += y;
                    }
                    a
                },
            );
        let mut mass = 0.0;
        for (bin, &c) in counts.iter().enumerate() {
            let next = mass + c as f64 * self.upper_edge(bin);
            if next > tol {
                self.first = bin;
                return mass;
            }
            mass = next;
        }
        self.first = Self::BINS;
        mass
    }

    /// Weight alpha_i beta_j of a kept ordered pair, else 0.
    #[inline]
    fn kept(&self, i: usize, j: usize) -> f64 {
        if i >= self.alpha.len() || j >= self.beta.len() {
            return 0.0;
        }
        match self.bin(i, j) {
            Some(b) if b >= self.first => self.alpha[i] * self.beta[j],
            _ => 0.0,
        }
    }

    /// Kept pairs with min index in rows, folded to m <= n.
    fn fold_rows(&self, rows: std::ops::Range<usize>, len: usize) -> Vec<(u64, u64, f64)> {
        rows.into_par_iter()
            .flat_map_iter(|i| {
                (i..len).filter_map(move |j| {
                    let mut w = self.kept(i, j);
                    if j != i {
                        w += self.kept(j, i);
                    }
                    (w != 0.0).then(|| ((i + 1) as u64, (j + 1) as u64, w))
                })
            })
            .collect()
    }
}

impl PairSource for PairScreen<'_> {
    fn for_each_tile(&self, f: &mut dyn FnMut(&[(u64, u64, f64)]) -> Result<()>) -> Result<()> {
        let len = self.alpha.len().max(self.beta.len());
        let rows = self.alpha.len().min(self.beta.len()).max(1).min(len);
        // Only rows below the shorter side can hold a kept pair with m <= n.
        let mut start = 0;
        while start < rows {
            let mut end = start;
            let mut cells = 0u64;
            while end < rows && (cells == 0 || cells + (len - end) as u64 <= Self::TILE_CELLS) {
                cells += (len - end) as u64;
                end += 1;
            }
            let tile = self.fold_rows(start..end, len);
            if !tile.is_empty() {
                for chunk in tile.chunks(TILE_PAIRS) {
                    f(chunk)?;
                }
            }
            start = end;
        }
        Ok(())
    }
}

pub fn m2(m: u64, params: &TraceParams, tol: f64) -> Result<MomentReport> {
    MomentEngine::default().m2(m, params, tol)
}

pub fn m3(params: &TraceParams, tol: f64) -> Result<MomentReport> {
    MomentEngine::default().m3(params, tol)
}

pub fn nonvanishing_bound(params: &TraceParams, tol: f64) -> Result<NonvanishingBound> {
    MomentEngine::default().nonvanishing_bound(params, tol)
}
