use proptest::prelude::*;

use petersson_core::analytic::{shared_kernel, KernelKind};
use petersson_core::arith::{arith_fn, gcd, is_prime, kloosterman, kloosterman_bound, mod_inverse};
use petersson_core::oldbasis::{rankin_series_check, GramSpec, HeckeParam};
use petersson_core::trace::{newform_levels, oldform_levels, phi_main};
use petersson_core::{CompensatedSum, TraceFormula, TraceParams};

fn prime() -> impl Strategy<Value = u64> {
    prop::sample::select(vec![2u64, 3, 5, 7, 11, 13, 17, 101])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn kloosterman_symmetry_and_periodicity(m in -5000i64..5000, n in -5000i64..5000, c in 1u64..400) {
        let s = kloosterman(m, n, c);
        prop_assert!((s - kloosterman(n, m, c)).abs() < 1e-9);
        prop_assert!((s - kloosterman(m + c as i64, n - 3 * c as i64, c)).abs() < 1e-9);
        prop_assert!(s.abs() <= kloosterman_bound(m, n, c) + 1e-9);
    }

    #[test]
    fn kloosterman_unit_twist(m in -500i64..500, n in -500i64..500, c in 2u64..300, u in 1u64..300) {
        prop_assume!(gcd(u, c) == 1);
        let ub = mod_inverse(u, c).unwrap() as i64;
        let s = kloosterman(m, n, c);
        prop_assert!((s - kloosterman(m * u as i64, n * ub, c)).abs() < 1e-9);
    }

    #[test]
    fn kloosterman_twisted_multiplicativity(m in 0i64..2000, n in 0i64..2000, c1 in 1u64..60, c2 in 1u64..60) {
        prop_assume!(gcd(c1, c2) == 1);
        let c1b = mod_inverse(c2 % c1.max(1), c1).unwrap_or(0) as i64;
        let c2b = mod_inverse(c1 % c2.max(1), c2).unwrap_or(0) as i64;
        let lhs = kloosterman(m, n, c1 * c2);
        let rhs = kloosterman(m * c1b * c1b, n, c1) * kloosterman(m * c2b * c2b, n, c2);
        prop_assert!((lhs - rhs).abs() < 1e-8, "{} vs {}", lhs, rhs);
    }

    #[test]
    fn arithmetic_functions_are_multiplicative(a in 1u64..5000, b in 1u64..5000) {
        prop_assume!(gcd(a, b) == 1);
        let (fa, fb, fab) = (arith_fn(a).unwrap(), arith_fn(b).unwrap(), arith_fn(a * b).unwrap());
        prop_assert_eq!(fab.tau, fa.tau * fb.tau);
        prop_assert_eq!(fab.euler_phi, fa.euler_phi * fb.euler_phi);
        prop_assert_eq!(fab.mu, fa.mu * fb.mu);
        prop_assert_eq!(fab.omega, fa.omega + fb.omega);
        prop_assert_eq!(fab.nu_index, fa.nu_index * fb.nu_index);
    }

    #[test]
    fn compensated_sum_is_split_invariant(xs in prop::collection::vec(-1e12f64..1e12, 1..400), cut in 0usize..400) {
        let cut = cut.min(xs.len());
        let mut whole = CompensatedSum::new();
        xs.iter().for_each(|&x| whole.push(x));
        let mut a = CompensatedSum::new();
        let mut b = CompensatedSum::new();
        xs[..cut].iter().for_each(|&x| a.push(x));
        xs[cut..].iter().for_each(|&x| b.push(x));
        a.merge(&b);
        let mut rev = CompensatedSum::new();
        xs.iter().rev().for_each(|&x| rev.push(x));
        let scale: f64 = xs.iter().map(|x| x.abs()).sum::<f64>() * 1e-15;
        prop_assert!((a.value() - whole.value()).abs() <= scale);
        prop_assert!((rev.value() - whole.value()).abs() <= scale);
    }

    #[test]
    fn level_coefficients_are_mutually_inverse(p in prime(), nu in 1u32..10) {
        let new_sum: num_rational::Rational64 = newform_levels(p, nu).into_iter().map(|(_, c)| c).sum();
        prop_assert_eq!(phi_main(nu, p), new_sum);
        let mut composed = vec![num_rational::Rational64::from_integer(0); nu as usize + 1];
        for (j, a) in oldform_levels(p, nu) {
            for (i, b) in newform_levels(p, j) {
                composed[i as usize] += a * b;
            }
        }
        for (i, v) in composed.iter().enumerate().skip(1) {
            prop_assert_eq!(*v, num_rational::Rational64::from_integer((i == nu as usize) as i64));
        }
    }

    #[test]
    fn old_bases_are_orthonormal(x in -2.0f64..=2.0, p in prime(), a in 0u32..=8, positive: bool) {
        prop_assert!(is_prime(p));
        for param in [
            HeckeParam::level_one(p, x).unwrap(),
            HeckeParam::p_exactly_divides(p, positive).unwrap(),
            HeckeParam::p_square_divides(p).unwrap(),
        ] {
            prop_assert!(GramSpec::build(&param, a).unwrap().orthonormality_defect() < 1e-10);
        }
    }

    #[test]
    fn rankin_residual_within_envelope(x in -2.0f64..=2.0, t in -0.3f64..=0.3, r in 0u32..=5, p in prime()) {
        for param in [HeckeParam::level_one(p, x).unwrap(), HeckeParam::p_exactly_divides(p, x > 0.0).unwrap()] {
            let c = rankin_series_check(&param, t, r, 30).unwrap();
            prop_assert!(c.residual <= c.envelope, "{:?}", c);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn cutoffs_stay_under_envelopes(ln_y in 0.0f64..5.0, nu in 1u32..6) {
        let y = ln_y.exp();
        for kind in [KernelKind::T, KernelKind::U { p: 3, nu }] {
            let kern = shared_kernel(6, kind).unwrap();
            prop_assert!(kern.eval(y).unwrap().abs() <= kern.envelope_at(y).unwrap());
        }
    }

    #[test]
    fn newform_trace_is_symmetric(m in 1u64..30, n in 1u64..30, nu in 2u32..5) {
        let tf = TraceFormula::default();
        let t = TraceParams::new(6, 3, nu).unwrap();
        let a = tf.delta_star(&t, m, n, 1e-8).unwrap();
        let b = tf.delta_star(&t, n, m, 1e-8).unwrap();
        prop_assert_eq!(a, b);
        if m % 3 == 0 || n % 3 == 0 {
            prop_assert_eq!(a.value, 0.0);
        }
    }
}
