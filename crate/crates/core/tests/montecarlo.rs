use martlab_core::examples::cherny_process;
use martlab_core::measure::{Outcome, CountableSpace};
use martlab_core::montecarlo::{estimate_expectation, estimate_stopped, stream_rng, Sample, Sampler, StoppedSource};
use martlab_core::process::GenerativeProcess;
use martlab_core::rational::{int, ratio, to_f64};
use martlab_core::stopping::StoppingSpec;

/// `Σ_{n ≤ k} 1/(2n)`: the exact value of `E|X_τ|` for `τ = 1/max(U, 1/k)`.
fn reciprocal_oracle(k: u64) -> f64 {
    (1..=k).map(|n| 0.5 / n as f64).sum()
}

#[test]
fn first_atom_frequency() {
    let sampler = Sampler::new(&CountableSpace::cherny(), 10).unwrap();
    let n = 1_000_000u64;
    let hits = (0..n)
        .filter(|&i| {
            matches!(sampler.draw(&mut stream_rng(17, i)),
                Sample::Atom(a) if a.outcome == Outcome::Jump { sigma: Some(1), sign: 1 })
        })
        .count();
    let freq = hits as f64 / n as f64;
    assert!((freq - 0.25).abs() <= 0.002, "{freq}");
}

#[test]
fn tail_frequency_matches_residual() {
    let space = CountableSpace::cherny();
    let depth = 5;
    let residual = to_f64(&space.residual(depth));
    let sampler = Sampler::new(&space, depth).unwrap();
    let n = 200_000u64;
    let tails = (0..n).filter(|&i| sampler.draw(&mut stream_rng(23, i)) == Sample::Tail).count();
    let sd = (residual * (1.0 - residual) / n as f64).sqrt();
    assert!((tails as f64 / n as f64 - residual).abs() <= 3.0 * sd);
}

#[test]
fn marginal_mean_and_absolute_mean() {
    let p = cherny_process();
    let e = estimate_expectation(p.space(), &p.value_rv(&int(10)), 100_000, 1).unwrap();
    assert!(e.covers(0.0), "{e:?}");
    let e = estimate_expectation(p.space(), &p.value_rv(&int(10)).abs(), 100_000, 1).unwrap();
    assert!(e.covers(5.0), "{e:?}");
}

#[test]
fn walk_hitting_plus_one() {
    let walk = GenerativeProcess::random_walk(1000).unwrap();
    let e = estimate_stopped(StoppedSource::Walk(&walk), &StoppingSpec::hit_above(int(1)), 100_000, 1000, 5, false).unwrap();
    assert!((0.94..=1.0).contains(&e.censored.mean), "{:?}", e.censored);
    assert!(1.0 - e.overrun_fraction >= 0.97);
    assert!(e.estimate.covers(0.0), "{:?}", e.estimate);
}

#[test]
fn constant_stop_is_centred() {
    let p = cherny_process();
    let e = estimate_stopped(StoppedSource::Paths(&p), &StoppingSpec::at(int(5)), 100_000, 6, 9, false).unwrap();
    assert!(e.estimate.covers(0.0), "{:?}", e.estimate);
    assert_eq!(e.overrun_fraction, 0.0);
}

#[test]
fn reciprocal_uniform_light_truncation() {
    let p = cherny_process();
    let src = StoppedSource::PathsWithUniform { process: &p, floor: &ratio(1, 10) };
    let e = estimate_stopped(src, &StoppingSpec::ReciprocalU, 100_000, 10, 3, true).unwrap();
    assert!(e.estimate.covers(reciprocal_oracle(10)), "{:?}", e.estimate);
}

#[test]
fn reciprocal_uniform_oracle_exceeds_log_bound() {
    let eps: f64 = 1e-4;
    assert!(reciprocal_oracle(10_000) >= 0.5 * (1.0 / eps).ln() - 0.5);
}

/// The sample mean at `U ≥ 10⁻⁴` is dominated by rare large jumps; on the
/// regression seeds 4000..4010 it reaches 3.5 only three times.
#[test]
#[ignore = "heavy tail: the 3.5 threshold holds for 3 of 10 regression seeds"]
fn reciprocal_uniform_heavy_truncation() {
    let p = cherny_process();
    let src = StoppedSource::PathsWithUniform { process: &p, floor: &ratio(1, 10_000) };
    let e = estimate_stopped(src, &StoppingSpec::ReciprocalU, 100_000, 10_000, 4000, true).unwrap();
    assert!(e.estimate.mean >= 3.5, "{:?}", e.estimate);
}

#[test]
fn stopped_estimates_are_reproducible() {
    let walk = GenerativeProcess::random_walk(100).unwrap();
    let tau = StoppingSpec::hit_above(int(1));
    let a = estimate_stopped(StoppedSource::Walk(&walk), &tau, 5000, 100, 42, false).unwrap();
    let b = estimate_stopped(StoppedSource::Walk(&walk), &tau, 5000, 100, 42, false).unwrap();
    assert_eq!(a, b);
}
