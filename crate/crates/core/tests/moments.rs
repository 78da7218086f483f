use petersson_core::moments::{self, holder_quotient, MomentEngine, MomentKind, Reduction};
use petersson_core::{BoundedValue, Error, TraceParams};

fn params(nu: u32) -> TraceParams {
    TraceParams::new(6, 3, nu).unwrap()
}

#[test]
fn second_moment_tracks_prediction_as_level_grows() {
    let engine = MomentEngine::default();
    let gaps: Vec<f64> = (3..=5).map(|nu| engine.m2(1, &params(nu), 1e-9).unwrap().relative_gap).collect();
    assert!(gaps.windows(2).all(|w| w[1] < w[0]), "{gaps:?}");
    assert!(gaps[2] < 1e-6);
}

#[test]
fn twisted_second_moment_prediction() {
    let r = moments::m2(2, &params(4), 1e-8).unwrap();
    assert_eq!(r.kind, MomentKind::M2 { m: 2 });
    // tau(2)/sqrt(2) phi^2 (log(q_hat^2 / 2) + g_k)
    let t = params(4);
    let phi: f64 = 2.0 / 3.0;
    let expected = 2.0 / 2f64.sqrt() * phi * phi * ((t.q_hat().powi(2) / 2.0).ln() + r.constants.g_k);
    assert!((r.predicted - expected).abs() < 1e-12 * expected);
    assert!(r.relative_gap < 1e-4);
    assert!((r.diagonal + r.off_diagonal - r.computed.value).abs() < 1e-12 * r.computed.value.abs());
}

#[test]
fn reductions_agree_on_public_api() {
    let t = params(4);
    let blocked = MomentEngine::default().with_reduction(Reduction::Blocked).m3(&t, 1e-4).unwrap();
    let sequential = MomentEngine::default().with_reduction(Reduction::Sequential).m3(&t, 1e-4).unwrap();
    let d = (blocked.computed.value - sequential.computed.value).abs();
    assert!(d <= 1e-12 * blocked.computed.value.abs(), "{d:e}");
    assert_eq!(blocked.truncation, sequential.truncation);
}

#[test]
fn bound_is_positive_and_consistent() {
    let b = moments::nonvanishing_bound(&params(4), 1e-6).unwrap();
    assert!(b.bound > 0.0 && b.bound < 1.0);
    let again = holder_quotient(&b.m2.computed, &b.m3.computed).unwrap();
    assert_eq!(again, b.bound);
    let q = 81f64;
    assert!((b.c_effective - b.bound * q.ln().powi(3)).abs() < 1e-12);
    assert!((b.bound / b.predicted_bound - 1.0).abs() < 0.05);
}

#[test]
fn degenerate_intervals_are_rejected() {
    let m2 = BoundedValue::new(2.0, 0.1);
    assert!(matches!(holder_quotient(&m2, &BoundedValue::new(0.05, 0.1)), Err(Error::Degenerate(_))));
    // An M2 interval reaching below zero certifies nothing.
    assert!(holder_quotient(&BoundedValue::new(0.05, 0.1), &BoundedValue::new(4.0, 0.1)).unwrap() < 0.0);
}

#[test]
fn input_validation() {
    assert!(moments::m2(1, &params(2), 1e-6).is_err());
    assert!(moments::m3(&TraceParams::new(12, 3, 4).unwrap(), 1e-4).is_err());
    assert!(matches!(moments::m2(3, &params(4), 1e-6), Err(Error::Domain { .. })));
    assert!(moments::m2(0, &params(4), 1e-6).is_err());
    assert!(moments::m3(&params(4), 0.0).is_err());
}
