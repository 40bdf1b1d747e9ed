//! Workloads shared by the criterion benches and the smoke tests.

use martlab_core::analysis::{blowup_value, falsify_statement_iv, marginal_expectations, StoppingFamilyGenerator};
use martlab_core::examples::cherny_process;
use martlab_core::measure::{expectation, partial_sums, ExpectationPolicy, ExpectationResult};
use martlab_core::process::GenerativeProcess;
use martlab_core::rational::{int, Rational};
use martlab_core::stopping::StoppingSpec;
use martlab_core::walk::{stop_law_exact, stop_law_float};
use martlab_core::{PathProcess, Result, StatementVerdict};

pub fn cherny() -> PathProcess {
    cherny_process()
}

/// `S_n = E[|X_∞|; σ ≤ n]`.
pub fn abs_limit_partial_sum(p: &PathProcess, n: u64) -> Result<Rational> {
    Ok(partial_sums(p.space(), &p.limit_rv().abs(), &[n])?.remove(0).1)
}

/// Divergence certificate for `E|X_∞|` at the given threshold.
pub fn abs_limit_certificate(p: &PathProcess, threshold: i64) -> Result<ExpectationResult> {
    expectation(p.space(), &p.limit_rv().abs(), &ExpectationPolicy::with_threshold(int(threshold)))
}

/// `E[X_t]` for integer `t = 0..=t_max`.
pub fn marginal_means(p: &PathProcess, t_max: i64) -> Result<Vec<Rational>> {
    let times: Vec<_> = (0..=t_max).map(int).collect();
    marginal_expectations(p, &times, |v| v.clone())
}

pub fn falsifier(p: &PathProcess, max_depth: usize) -> Result<StatementVerdict> {
    let generator = StoppingFamilyGenerator { max_depth, ..StoppingFamilyGenerator::default() };
    falsify_statement_iv(p, &generator, &ExpectationPolicy::with_threshold(int(1000)), &int(4))
}

pub fn blowup(p: &PathProcess, m: u64) -> Result<Rational> {
    blowup_value(p, m)
}

/// `P(τ ≤ H)` for `τ = hit(+1)`, by exact and by float dynamic programming.
pub fn walk_stop_mass(horizon: u64) -> Result<(Rational, f64)> {
    let walk = GenerativeProcess::random_walk(horizon)?;
    let tau = StoppingSpec::hit_above(int(1));
    Ok((stop_law_exact(&walk, &tau)?.stopped_mass, stop_law_float(&walk, &tau)?.stopped_mass))
}

pub fn walk_law_exact(walk: &GenerativeProcess) -> Result<Rational> {
    Ok(stop_law_exact(walk, &StoppingSpec::hit_above(int(1)))?.stopped_mass)
}

pub fn walk_law_float(walk: &GenerativeProcess) -> Result<f64> {
    Ok(stop_law_float(walk, &StoppingSpec::hit_above(int(1)))?.stopped_mass)
}
