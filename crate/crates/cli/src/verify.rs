//! Invariant suite behind `petersson verify`.

use std::io::Write;
use std::time::Instant;

use num_rational::Rational64;
use petersson_core::analytic::{
    a2_printed, a3_exact, default_g, g_k, laurent_constants, laurent_fit, q_polynomial, residue_closed_form,
    residue_oracle, t_cutoff, u_cutoff, LaurentChoice,
};
use petersson_core::arith::{arith_fn, gcd, kloosterman, kloosterman_bound, KloostermanCache};
use petersson_core::moments::{holder_quotient, MomentEngine, Reduction};
use petersson_core::oldbasis::{rankin_series_check, GramSpec, HeckeParam};
use petersson_core::trace::{error_budget, newform_levels, oldform_levels, phi_main, EXACT_WEIGHTS};
use petersson_core::{CompensatedSum, TraceFormula, TraceParams};

type Outcome = Result<String, String>;

struct Check {
    name: &'static str,
    run: fn(bool, &TraceFormula) -> Outcome,
}

const CHECKS: &[Check] = &[
    Check { name: "kloosterman-brute-force", run: kloosterman_brute },
    Check { name: "kloosterman-cache", run: kloosterman_cache },
    Check { name: "arithmetic-functions", run: arithmetic },
    Check { name: "compensated-sum", run: compensated },
    Check { name: "level-coefficients", run: level_coefficients },
    Check { name: "orthonormal-bases", run: orthonormal },
    Check { name: "rankin-identity", run: rankin },
    Check { name: "cutoff-asymptotics", run: cutoffs },
    Check { name: "residues", run: residues },
    Check { name: "constants", run: constants },
    Check { name: "trace-main-term", run: trace_main_term },
    Check { name: "trace-round-trip", run: trace_round_trip },
    Check { name: "moments", run: moments },
];

/// Runs every check, printing one line each. Returns the number of failures.
pub fn run(quick: bool, trace: &TraceFormula, out: &mut impl Write) -> std::io::Result<usize> {
    let mut failed = 0;
    for check in CHECKS {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| (check.run)(quick, trace)))
            .unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => writeln!(out, "PASS {:<24} {detail} ({secs:.2}s)", check.name)?,
            Err(detail) => {
                failed += 1;
                writeln!(out, "FAIL {:<24} {detail} ({secs:.2}s)", check.name)?
            }
        }
    }
    Ok(failed)
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

/// S(m, n; c) by the defining double loop over x and its inverse.
pub fn kloosterman_naive(m: i64, n: i64, c: u64) -> f64 {
    let mut acc = 0.0;
    for x in 0..c {
        if gcd(x, c) != 1 {
            continue;
        }
        let xb = (0..c).find(|y| (x as u128 * *y as u128) % c as u128 == 1 % c as u128).unwrap();
        let e = (m.rem_euclid(c as i64) as u128 * x as u128 + n.rem_euclid(c as i64) as u128 * xb as u128) % c as u128;
        acc += (2.0 * std::f64::consts::PI * e as f64 / c as f64).cos();
    }
    acc
}

fn kloosterman_brute(quick: bool, _: &TraceFormula) -> Outcome {
    let c_max = if quick { 40 } else { 150 };
    let mut worst = 0.0f64;
    for c in 1..=c_max {
        for (m, n) in [(1i64, 1i64), (2, 3), (-5, 7), (c as i64, 4), (6, -12), (0, 0)] {
            let v = kloosterman(m, n, c);
            let d = (v - kloosterman_naive(m, n, c)).abs();
            worst = worst.max(d);
            ensure(d < 1e-9, || format!("S({m},{n};{c}) = {v} off by {d:e}"))?;
            ensure(v.abs() <= kloosterman_bound(m, n, c) + 1e-9, || format!("Weil bound fails at S({m},{n};{c})"))?;
            ensure((v - kloosterman(n, m, c)).abs() < 1e-9, || format!("S({m},{n};{c}) not symmetric"))?;
        }
    }
    Ok(format!("c <= {c_max}, max deviation {worst:.1e}"))
}

fn kloosterman_cache(quick: bool, _: &TraceFormula) -> Outcome {
    let cache = KloostermanCache::new();
    let c_max = if quick { 60 } else { 300 };
    let mut count = 0;
    for c in (1..=c_max).step_by(7) {
        for (m, n) in [(1u64, 1u64), (4, 6), (9, 27), (12, 18), (c, c + 2)] {
            let d = (cache.get(m, n, c) - kloosterman(m as i64, n as i64, c)).abs();
            ensure(d < 1e-8, || format!("cache S({m},{n};{c}) off by {d:e}"))?;
            count += 1;
        }
    }
    Ok(format!("{count} lookups through Selberg's identity"))
}

fn arithmetic(quick: bool, _: &TraceFormula) -> Outcome {
    let n_max = if quick { 500 } else { 5000 };
    for n in 1..=n_max {
        let a = arith_fn(n).map_err(|e| e.to_string())?;
        let divisors: Vec<u64> = (1..=n).filter(|d| n % d == 0).collect();
        let primes: Vec<u64> = divisors.iter().copied().filter(|&d| d > 1 && (2..d).all(|e| d % e != 0)).collect();
        let phi = (1..=n).filter(|&x| gcd(x, n) == 1).count() as u64;
        let squarefree = primes.iter().all(|p| n % (p * p) != 0);
        let mu = if !squarefree { 0 } else if primes.len() % 2 == 0 { 1 } else { -1 };
        let idx = primes.iter().fold(n, |acc, p| acc / p * (p + 1));
        ensure(
            a.tau == divisors.len() as u64 && a.omega == primes.len() as u32 && a.euler_phi == phi && a.mu == mu && a.nu_index == idx,
            || format!("n = {n}: {a:?}"),
        )?;
    }
    Ok(format!("n <= {n_max}"))
}

fn compensated(_: bool, _: &TraceFormula) -> Outcome {
    // Small terms interleaved with cancelling 1e16 spikes.
    let mut xs = Vec::new();
    for i in 0..10_000 {
        xs.extend([1e16, 1.0 / (i as f64 + 1.0), -1e16]);
    }
    let exact: f64 = (0..10_000).map(|i| 1.0 / (i as f64 + 1.0)).rev().sum();
    let mut whole = CompensatedSum::new();
    xs.iter().for_each(|&x| whole.push(x));
    let mut left = CompensatedSum::new();
    let mut right = CompensatedSum::new();
    xs[..7777].iter().for_each(|&x| left.push(x));
    xs[7777..].iter().for_each(|&x| right.push(x));
    left.merge(&right);
    let err = (whole.value() - exact).abs().max((left.value() - exact).abs());
    ensure(err < 1e-12 * exact, || format!("cancelling sum off by {err:e}"))?;
    Ok(format!("cancelling 1e16 spikes, error {err:.1e}"))
}

fn level_coefficients(_: bool, _: &TraceFormula) -> Outcome {
    for p in [2u64, 3, 5, 7, 11] {
        for nu in 1..=8u32 {
            let main = phi_main(nu, p);
            let new_sum: Rational64 = newform_levels(p, nu).into_iter().map(|(_, c)| c).sum();
            ensure(main == new_sum, || format!("phi({nu},{p}) != sum of newform coefficients"))?;
            // Composing the old/new transforms must give the identity on level p^nu.
            let mut composed = vec![Rational64::from_integer(0); nu as usize + 1];
            for (j, a) in oldform_levels(p, nu) {
                for (i, b) in newform_levels(p, j) {
                    composed[i as usize] += a * b;
                }
            }
            for (i, v) in composed.iter().enumerate().skip(1) {
                let want = if i == nu as usize { 1 } else { 0 };
                ensure(*v == Rational64::from_integer(want), || format!("p={p} nu={nu}: level p^{i} weight {v}"))?;
            }
        }
    }
    Ok("exact rational identities for p <= 11, nu <= 8".into())
}

fn sample_params(steps: usize) -> Vec<HeckeParam> {
    let mut out = Vec::new();
    for p in [2u64, 3, 5, 7] {
        for i in 0..steps {
            out.push(HeckeParam::level_one(p, -2.0 + 4.0 * i as f64 / (steps - 1) as f64).unwrap());
        }
        out.push(HeckeParam::p_exactly_divides(p, true).unwrap());
        out.push(HeckeParam::p_exactly_divides(p, false).unwrap());
        out.push(HeckeParam::p_square_divides(p).unwrap());
    }
    out
}

fn orthonormal(quick: bool, _: &TraceFormula) -> Outcome {
    let mut worst = 0.0f64;
    for param in sample_params(if quick { 5 } else { 50 }) {
        for a in 0..=8 {
            let d = GramSpec::build(&param, a).map_err(|e| e.to_string())?.orthonormality_defect();
            worst = worst.max(d);
            ensure(d < 1e-10, || format!("{param:?} a={a}: defect {d:e}"))?;
        }
    }
    Ok(format!("dimensions 1..9, worst defect {worst:.1e}"))
}

fn rankin(quick: bool, _: &TraceFormula) -> Outcome {
    let ts: &[f64] = if quick { &[-0.3, 0.12] } else { &[-0.3, -0.17, -0.05, 0.08, 0.2, 0.3] };
    for param in sample_params(if quick { 4 } else { 12 }) {
        for &t in ts {
            for r in 0..=5 {
                let c = rankin_series_check(&param, t, r, 30).map_err(|e| e.to_string())?;
                ensure(c.residual <= c.envelope, || format!("{param:?} t={t} r={r}: {c:?}"))?;
            }
        }
    }
    Ok("residual within envelope at 30 terms".into())
}

fn cutoffs(quick: bool, _: &TraceFormula) -> Outcome {
    let (k, p, nu) = (6, 3, 5);
    let gk = g_k(k, p).map_err(|e| e.to_string())?;
    let density = 2.0 / 3.0;
    let points = if quick { 3 } else { 9 };
    for i in 0..points {
        let y = 10f64.powf(-4.0 + 2.0 * i as f64 / (points - 1) as f64);
        let t = t_cutoff(y, k).map_err(|e| e.to_string())?;
        ensure((t - 1.0).abs() <= 5.0 * y, || format!("T({y}) = {t}"))?;
        let u = u_cutoff(y, k, p, nu).map_err(|e| e.to_string())?;
        ensure((u / density - (1.0 / y).ln() - gk).abs() <= 50.0 * y, || format!("U({y}) = {u}"))?;
    }
    let far = (t_cutoff(1e3, k).map_err(|e| e.to_string())?, u_cutoff(1e3, k, p, nu).map_err(|e| e.to_string())?);
    ensure(far.0.abs() <= 1e-6 && far.1.abs() <= 1e-6, || format!("T, U at 1e3: {far:?}"))?;
    Ok(format!("{points} small-y points and y = 1e3"))
}

fn residues(quick: bool, _: &TraceFormula) -> Outcome {
    let g = default_g();
    let points: &[(u32, u64, u32)] = if quick { &[(6, 3, 4)] } else { &[(6, 3, 4), (2, 2, 7), (14, 5, 3), (8, 7, 2)] };
    let mut worst = 0.0f64;
    for &(k, p, nu) in points {
        let t = TraceParams::new(k, p, nu).map_err(|e| e.to_string())?;
        for choice in [LaurentChoice::Squared, LaurentChoice::Cross] {
            let closed = residue_closed_form(&t, &g, choice).map_err(|e| e.to_string())?;
            let oracle = residue_oracle(&t, &g, choice).map_err(|e| e.to_string())?;
            let rel = (closed - oracle).abs() / oracle.abs().max(1e-300);
            worst = worst.max(rel);
            ensure(rel < 1e-8, || format!("{t:?} {choice:?}: {closed} vs {oracle}"))?;
        }
    }
    for p in [2u64, 3, 5] {
        for choice in [LaurentChoice::Squared, LaurentChoice::Cross] {
            let closed = laurent_constants(p, choice).map_err(|e| e.to_string())?;
            let fit = laurent_fit(p, choice).map_err(|e| e.to_string())?;
            for order in -3..=0 {
                let (a, b) = (closed.coefficient(order), fit.coefficient(order));
                ensure((a - b).abs() < 1e-4 * a.abs().max(1.0), || format!("p={p} {choice:?} order {order}: {a} vs {b}"))?;
            }
        }
    }
    Ok(format!("closed forms vs circle quadrature, worst relative {worst:.1e}"))
}

fn constants(_: bool, _: &TraceFormula) -> Outcome {
    ensure(a3_exact() == Rational64::new(2, 3), || format!("A3 = {}", a3_exact()))?;
    for k in EXACT_WEIGHTS {
        for p in [2u64, 3, 5] {
            let q = q_polynomial(k, p, 4.0, &default_g()).map_err(|e| e.to_string())?;
            let printed = a2_printed(k, p).map_err(|e| e.to_string())?;
            ensure((q.a2 - printed).abs() <= 1e-10 * printed.abs().max(1.0), || format!("A2({k},{p}) = {} vs {printed}", q.a2))?;
        }
    }
    Ok("A3 = 2/3, A2 matches its closed form".into())
}

fn trace_main_term(quick: bool, trace: &TraceFormula) -> Outcome {
    let nus: &[u32] = if quick { &[3, 4] } else { &[3, 4, 5, 6] };
    let ms: &[u64] = &[1, 2, 4, 5, 7];
    let mut worst = 0.0f64;
    for &nu in nus {
        let t = TraceParams::new(6, 3, nu).map_err(|e| e.to_string())?;
        let main = phi_main(nu, 3);
        let main = *main.numer() as f64 / *main.denom() as f64;
        for &m in ms {
            for &n in ms {
                let d = trace.delta_star(&t, m, n, 1e-11).map_err(|e| e.to_string())?;
                let expected = if m == n { main } else { 0.0 };
                let ratio = (d.value - expected).abs() / error_budget(m, n, &t);
                worst = worst.max(ratio);
                ensure(ratio <= 100.0, || format!("nu={nu} ({m},{n}): {} vs {expected}", d.value))?;
            }
        }
        let zero = trace.delta_star(&t, 3, 1, 1e-11).map_err(|e| e.to_string())?;
        ensure(zero.value == 0.0, || format!("nu={nu}: Delta*(3,1) = {}", zero.value))?;
    }
    Ok(format!("k=6 p=3 nu {nus:?}, worst deviation {worst:.2} budgets"))
}

fn trace_round_trip(quick: bool, trace: &TraceFormula) -> Outcome {
    let (nus, pairs): (&[u32], &[(u64, u64)]) = if quick {
        (&[3], &[(1, 1), (2, 5)])
    } else {
        (&[3, 4, 5], &[(1, 1), (2, 5), (4, 7), (7, 7)])
    };
    for &nu in nus {
        let t = TraceParams::new(6, 3, nu).map_err(|e| e.to_string())?;
        for &(m, n) in pairs {
            let full = trace.delta_full(&t, t.q(), m, n, 1e-11).map_err(|e| e.to_string())?;
            let rebuilt = trace.reconstruct_full(&t, m, n, 1e-11).map_err(|e| e.to_string())?;
            let gap = (full.value - rebuilt.value).abs();
            ensure(gap <= full.tail + rebuilt.tail + 1e-12, || format!("nu={nu} ({m},{n}): gap {gap:e}"))?;
        }
    }
    Ok(format!("nu {nus:?}"))
}

fn moments(quick: bool, trace: &TraceFormula) -> Outcome {
    let engine = MomentEngine::new(trace.clone());
    let t = TraceParams::new(6, 3, 4).map_err(|e| e.to_string())?;
    let tol = if quick { 1e-6 } else { 1e-9 };
    let m2 = engine.m2(1, &t, tol).map_err(|e| e.to_string())?;
    ensure(m2.relative_gap < 1e-3, || format!("M2 gap {}", m2.relative_gap))?;
    let seq = engine.clone().with_reduction(Reduction::Sequential).m2(1, &t, tol).map_err(|e| e.to_string())?;
    let d = (seq.computed.value - m2.computed.value).abs();
    ensure(d <= 1e-12 * m2.computed.value.abs(), || format!("reductions differ by {d:e}"))?;
    if quick {
        return Ok(format!("M2 gap {:.1e}", m2.relative_gap));
    }
    let m3 = engine.m3(&t, 1e-4).map_err(|e| e.to_string())?;
    ensure(m3.relative_gap < 1e-2, || format!("M3 gap {}", m3.relative_gap))?;
    let bound = holder_quotient(&m2.computed, &m3.computed).map_err(|e| e.to_string())?;
    ensure(bound > 0.0 && bound.is_finite(), || format!("bound {bound}"))?;
    Ok(format!("M2 gap {:.1e}, M3 gap {:.1e}, bound {bound:.4}", m2.relative_gap, m3.relative_gap))
}
