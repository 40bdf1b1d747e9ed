//! End-to-end acceptance criteria. Runs as a plain binary so that every
//! criterion prints one PASS/FAIL line; exits nonzero if any fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use num_bigint::BigInt;
use num_traits::{One, Zero};

use martlab_core::analysis::{
    check_ui, evaluate_example, falsify_statement_iv, falsify_walk_iv, marginal_expectations, randomized_blowup_curve,
    witness_gap, AnalysisConfig, Model, Quantity, StoppingFamilyGenerator, UiVerdict, Verdict, Witness,
};
use martlab_core::examples::{build, cherny_process, two_atom_process, ExampleDescriptor, ExampleName, ExampleParams};
use martlab_core::measure::{expectation, partial_sums, ExpectationPolicy, ExpectationResult};
use martlab_core::montecarlo::{estimate_expectation, estimate_stopped, StoppedSource};
use martlab_core::process::GenerativeProcess;
use martlab_core::rational::{fmt_rational, int, ratio, to_f64, Rational};
use martlab_core::stopping::{adaptedness_check, Adaptedness, StoppingSpec};
use martlab_core::walk::stop_law_exact;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

type Check = fn() -> Result<Outcome, String>;

fn timed(limit: Option<Duration>, f: Check) -> Outcome {
    let start = Instant::now();
    let mut o = f().unwrap_or_else(|e| outcome(false, format!("error: {e}")));
    let took = start.elapsed();
    if let Some(limit) = limit {
        if took > limit {
            o.pass = false;
        }
        o.detail = format!("{}; {:.2}s (limit {}s)", o.detail, took.as_secs_f64(), limit.as_secs());
    } else {
        o.detail = format!("{}; {:.2}s", o.detail, took.as_secs_f64());
    }
    o
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

/// Independent oracle: `C(h, h/2) / 2^h` for even `h`, the chance that a
/// symmetric walk sits at 0 after `h` steps.
fn central_binomial_mass(h: u64) -> Rational {
    let mut c = BigInt::one();
    for i in 0..h / 2 {
        c = c * BigInt::from(h - i) / BigInt::from(i + 1);
    }
    Rational::new(c, BigInt::one() << h)
}

fn criterion_1() -> Result<Outcome, String> {
    let desc = ExampleDescriptor::with_params(ExampleName::Cherny, ExampleParams { depth: 2000, ..Default::default() });
    let built = build(&desc).map_err(err)?;
    let Model::Exact(p) = &built.model else { return Err("cherny is not exact".into()) };
    let horizon = int(2000);
    let times = p.event_times(2000, &horizon).map_err(err)?;
    let means = marginal_expectations(p, &times, |x| x.clone()).map_err(err)?;
    let all_zero = means.iter().all(Zero::is_zero);
    // Generic engine on a spread of event times, including the last.
    let policy = ExpectationPolicy::default();
    let mut engine_zero = true;
    for t in times.iter().step_by(97).chain(times.last()) {
        match expectation(p.space(), &p.value_rv(t), &policy).map_err(err)? {
            ExpectationResult::Exact(v) if v.is_zero() => {}
            other => {
                engine_zero = false;
                eprintln!("  E[X_{}] = {other:?}", fmt_rational(t));
            }
        }
    }
    Ok(outcome(
        all_zero && engine_zero && times.len() == 2001,
        format!("{} event times, all E[X_t] = 0/1: helper {all_zero}, engine {engine_zero}", times.len()),
    ))
}

fn criterion_2() -> Result<Outcome, String> {
    let p = cherny_process();
    let abs_limit = p.limit_rv().abs();
    let depths = [100u64, 10_000, 1_000_000];
    let sums = partial_sums(p.space(), &abs_limit, &depths).map_err(err)?;
    let sums_ok = sums.iter().all(|(n, s)| *s == ratio(*n as i64, 2));
    let policy = ExpectationPolicy::with_threshold(int(1000));
    let cert = match expectation(p.space(), &abs_limit, &policy).map_err(err)? {
        ExpectationResult::Divergent(c) => c,
        other => return Ok(outcome(false, format!("expected divergence, got {other:?}"))),
    };
    let cert_ok = cert.depth == 2001 && cert.partial_sum == ratio(2001, 2) && cert.is_consistent();
    let rendered: Vec<String> = sums.iter().map(|(n, s)| format!("S_{n}={}", fmt_rational(s))).collect();
    Ok(outcome(
        sums_ok && cert_ok,
        format!("{}; certificate N={}, S={}", rendered.join(", "), cert.depth, to_f64(&cert.partial_sum)),
    ))
}

fn criterion_3() -> Result<Outcome, String> {
    let p = cherny_process();
    let generator = StoppingFamilyGenerator::default();
    let cap_ok = generator.max_depth <= 3
        && generator.levels == vec![ratio(1, 2), int(1), int(4), int(9)]
        && generator.grid.iter().all(|t| *t <= int(50))
        && !generator.include_randomized;
    let policy = ExpectationPolicy::with_threshold(int(1000));
    let iv = falsify_statement_iv(&p, &generator, &policy, &int(4)).map_err(err)?;
    let ks: Vec<Rational> = [1, 10, 100].into_iter().map(int).collect();
    let grid: Vec<Rational> = (0..=200).map(int).collect();
    let ui = check_ui(&p, &ks, &grid, &policy).map_err(err)?;
    Ok(outcome(
        cap_ok && iv.verdict == Verdict::HoldsOnSuite && ui.verdict == UiVerdict::NotUiCertified,
        format!(
            "IV {} over {} rules ({} excluded), UI {:?}",
            iv.verdict, iv.suite.size, iv.suite.excluded, ui.verdict
        ),
    ))
}

fn criterion_4() -> Result<Outcome, String> {
    let base = cherny_process();
    let curve = randomized_blowup_curve(&base, &[1000, 10_000, 100_000]).map_err(err)?;
    let values_ok = curve.points.iter().all(|pt| to_f64(pt.value.point()) >= 0.4 * pt.ln_m);
    let slope_ok = (0.35..=0.65).contains(&curve.slope);
    let rendered: Vec<String> = curve.points.iter().map(|pt| format!("m={} {:.4}", pt.m, to_f64(pt.value.point()))).collect();
    Ok(outcome(values_ok && slope_ok, format!("{}; slope {:.4}", rendered.join(", "), curve.slope)))
}

fn criterion_5() -> Result<Outcome, String> {
    let tau = StoppingSpec::hit_above(int(1));
    let mut detail = Vec::new();
    let mut pass = true;
    for h in [10u64, 100, 1000] {
        let walk = GenerativeProcess::random_walk(h).map_err(err)?;
        let law = stop_law_exact(&walk, &tau).map_err(err)?;
        let only_one = law.stopped_values.keys().all(|v| *v == 1);
        // P(τ ≤ h) = 1 − P(S_h = 0) − P(S_h = −1) by reflection.
        let oracle = if h % 2 == 0 { int(1) - central_binomial_mass(h) } else { int(1) - central_binomial_mass(h - 1) / int(2) };
        let ok = law.truncated_mean.is_zero() && only_one && law.stopped_mass == oracle;
        pass &= ok;
        if h == 1000 {
            let p = to_f64(&law.stopped_mass);
            pass &= p >= 0.97;
            detail.push(format!("P(tau<=1000)={p:.4}"));
        }
    }
    let walk = GenerativeProcess::random_walk(1000).map_err(err)?;
    let iv = falsify_walk_iv(&walk, &StoppingFamilyGenerator::default()).map_err(err)?;
    pass &= iv.verdict == Verdict::Violated;
    if let Some(Witness::Horizon { spec, .. }) = &iv.witness {
        detail.push(format!("witness {spec}"));
    }
    detail.insert(0, "E[X_{tau^H}]=0/1 for H in {10,100,1000}".into());
    detail.push(format!("IV {}", iv.verdict));
    Ok(outcome(pass, detail.join(", ")))
}

fn float(q: &Quantity) -> f64 {
    match q {
        Quantity::Float { value, .. } => *value,
        Quantity::Exact(r) => to_f64(r.point()),
    }
}

fn criterion_6() -> Result<Outcome, String> {
    let walk = GenerativeProcess::random_walk(10_000).map_err(err)?;
    let eps = ratio(2, 5);
    let r = witness_gap(&Model::Walk(walk), &eps, 10_000, &ExpectationPolicy::default()).map_err(err)?;
    let m_tau = float(&r.e_m_tau);
    let m_s2 = float(&r.e_m_sigma2);
    let correction = r.horizon_correction.unwrap_or(0.0);
    let gap = float(&r.gap);
    let pass = m_tau >= 0.45 && m_s2.abs() <= 0.1 + correction && gap >= 0.12 && r.success;
    Ok(outcome(
        pass,
        format!(
            "E[M_tau; tau<=H]={m_tau:.6} (oracle 1/2), E[M_s2; s2<=H]={m_s2:.6}, correction {correction:.6}, gap {gap:.6}; truncated E[M_tau^H]={:.2e}",
            r.e_m_tau_truncated.as_ref().map(float).unwrap_or(f64::NAN)
        ),
    ))
}

fn criterion_7() -> Result<Outcome, String> {
    let two = two_atom_process();
    let spec = StoppingSpec::ApproachLiminfAbs { tolerance: ratio(1, 10) };
    let grid: Vec<Rational> = vec![int(0), ratio(1, 2), int(1), int(2)];
    let report = adaptedness_check(&spec, &two, &grid, 1).map_err(err)?;
    let Some(w) = &report.witness else { return Ok(outcome(false, "no witness for the two-atom rule")) };
    let at_zero = w.time == martlab_core::ExtTime::Finite(int(0));
    let replayed = w.replay(&spec, &two, 1).map_err(err)?;
    let cherny = cherny_process();
    let hit = StoppingSpec::hit_abs_above(int(1));
    let grid: Vec<Rational> = (0..=20).map(int).collect();
    let ok = adaptedness_check(&hit, &cherny, &grid, 20).map_err(err)?;
    Ok(outcome(
        report.verdict == Adaptedness::NotAdapted && at_zero && replayed && ok.verdict == Adaptedness::Adapted,
        format!(
            "two-atom {:?} at t={}, replay {replayed}; HitAbsAbove(1) on cherny {:?} ({} atoms)",
            report.verdict, w.time, ok.verdict, ok.atoms_checked
        ),
    ))
}

fn criterion_8() -> Result<Outcome, String> {
    const N: u64 = 100_000;
    let p = cherny_process();
    let mut rows: Vec<(String, f64, martlab_core::montecarlo::Estimate)> = Vec::new();
    for (i, t) in [1i64, 50, 500, 2000].into_iter().enumerate() {
        let e = estimate_expectation(p.space(), &p.value_rv(&int(t)), N, 1000 + i as u64).map_err(err)?;
        rows.push((format!("E[X_{t}]"), 0.0, e));
    }
    for (i, n) in [10i64, 100, 1000].into_iter().enumerate() {
        // S_N = E[|X_N|]: every atom of level at most N has jumped by time N.
        let e = estimate_expectation(p.space(), &p.value_rv(&int(n)).abs(), N, 2000 + i as u64).map_err(err)?;
        rows.push((format!("S_{n}"), n as f64 / 2.0, e));
    }
    let tau = StoppingSpec::hit_above(int(1));
    for (i, h) in [10u64, 100, 1000].into_iter().enumerate() {
        let walk = GenerativeProcess::random_walk(h).map_err(err)?;
        let e = estimate_stopped(StoppedSource::Walk(&walk), &tau, N, h, 3000 + i as u64, false).map_err(err)?;
        rows.push((format!("E[X_(tau^{h})]"), 0.0, e.estimate));
    }
    let inside = rows.iter().filter(|(_, oracle, e)| e.covers(*oracle)).count();
    for (name, oracle, e) in &rows {
        eprintln!("  {name}: {:.4} +/- {:.4} vs {oracle} {}", e.mean, e.half_width, if e.covers(*oracle) { "in" } else { "OUT" });
    }
    Ok(outcome(rows.len() == 10 && inside >= 9, format!("{inside}/{} inside 3 sigma at n={N}", rows.len())))
}

fn criterion_9() -> Result<Outcome, String> {
    let cfg = AnalysisConfig::default();
    let mut lines = Vec::new();
    let mut pass = true;
    for name in ExampleName::ALL {
        let report = evaluate_example(&ExampleDescriptor::new(name), &cfg).map_err(err)?;
        pass &= report.consistent && report.passed();
        let verdicts: Vec<String> = report.verdicts.iter().map(|v| format!("{}:{}", v.statement, v.verdict)).collect();
        lines.push(format!("{name}[{}]", verdicts.join(" ")));
        if !report.mismatches.is_empty() {
            eprintln!("  {name}: mismatches {:?}", report.mismatches);
        }
    }
    Ok(outcome(pass, lines.join("; ")))
}

fn main() -> ExitCode {
    let criteria: [(u32, &str, Option<u64>, Check); 9] = [
        (1, "cherny martingale identity", Some(5), criterion_1),
        (2, "non-integrable limit", Some(5), criterion_2),
        (3, "IV holds on suite, I fails", None, criterion_3),
        (4, "randomized blow-up", Some(30), criterion_4),
        (5, "V without IV on the walk", None, criterion_5),
        (6, "witness gap", None, criterion_6),
        (7, "non-adapted random time", None, criterion_7),
        (8, "Monte Carlo calibration", Some(10), criterion_8),
        (9, "hierarchy consistency", None, criterion_9),
    ];
    let mut failed = 0;
    for (k, name, limit, f) in criteria {
        let o = timed(limit.map(Duration::from_secs), f);
        if !o.pass {
            failed += 1;
        }
        println!("criterion {k} [{}] {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    println!("acceptance: {}/9 passed", 9 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
