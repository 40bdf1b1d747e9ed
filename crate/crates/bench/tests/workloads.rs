use martlab_bench::*;
use martlab_core::rational::{int, ratio, to_f64};
use martlab_core::{ExpectationResult, Verdict};

#[test]
fn partial_sums_grow_linearly() {
    let p = cherny();
    assert_eq!(abs_limit_partial_sum(&p, 100).unwrap(), int(50));
    assert!(matches!(abs_limit_certificate(&p, 10).unwrap(), ExpectationResult::Divergent(c) if c.depth == 21));
}

#[test]
fn marginals_vanish() {
    assert!(marginal_means(&cherny(), 50).unwrap().iter().all(|m| *m == int(0)));
}

#[test]
fn falsifier_holds_at_small_depth() {
    assert_eq!(falsifier(&cherny(), 1).unwrap().verdict, Verdict::HoldsOnSuite);
}

#[test]
fn blowup_is_positive() {
    assert!(blowup(&cherny(), 10).unwrap() > int(0));
}

#[test]
fn walk_engines_agree() {
    let (exact, float) = walk_stop_mass(4).unwrap();
    // τ = hit(+1) within 4 steps: 1 − P(S_4 = 0) = 1 − 6/16.
    assert_eq!(exact, ratio(5, 8));
    assert!((to_f64(&exact) - float).abs() < 1e-12);
}
