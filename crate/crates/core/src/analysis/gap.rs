//! The stopping pair `σ₁ = first time M > ε`, `σ₂ = first time after 1/ε
//! with |M| ≤ ε²/4`, `τ = σ₁ ∧ σ₂`, whose means differ by at least `ε²/2`
//! whenever `M` makes an `ε`-excursion with probability above `ε` and
//! `liminf |M| = 0`.

use num_traits::{Signed, Zero};
use serde::Serialize;

use super::Quantity;
use crate::error::{Error, Result};
use crate::measure::{expectation, ExpectationPolicy, ExpectationResult};
use crate::process::{GenerativeProcess, PathProcess};
use crate::rational::{fmt_rational, int, to_f64, ExactSum, Rational};
use crate::stopping::{stopped_value_rv, StoppingSpec};
use crate::walk::{stop_law_exact, stop_law_float};

use super::Model;

/// Probability that a walk-based `σ₂` has occurred by the horizon, required
/// as a stand-in for `liminf |M| = 0`.
pub const LIMINF_PROXY_MASS: f64 = 0.98;

/// DP tolerance for floating laws.
pub const DP_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapReport {
    #[serde(serialize_with = "crate::rational::serde_dual::serialize")]
    pub epsilon: Rational,
    pub sigma1: StoppingSpec,
    pub sigma2: StoppingSpec,
    pub tau: StoppingSpec,
    /// `E[M_τ]`; on a horizon, `E[M_τ ; τ ≤ H]`.
    pub e_m_tau: Quantity,
    /// `E[M_{σ₂}]`; on a horizon, `E[M_{σ₂} ; σ₂ ≤ H]`.
    pub e_m_sigma2: Quantity,
    /// `E[M_{τ∧H}]` and `E[M_{σ₂∧H}]` (horizon only).
    pub e_m_tau_truncated: Option<Quantity>,
    pub e_m_sigma2_truncated: Option<Quantity>,
    /// `P(τ > H)` and `P(σ₂ > H)` (horizon only).
    pub p_tau_overrun: Option<f64>,
    pub p_sigma2_overrun: Option<f64>,
    /// `|E[M_H ; σ₂ > H]|`, the part of `E[M_{σ₂∧H}]` the horizon cuts off.
    pub horizon_correction: Option<f64>,
    pub horizon: Option<u64>,
    pub gap: Quantity,
    /// `ε²/2`.
    #[serde(serialize_with = "crate::rational::serde_dual::serialize")]
    pub bound: Rational,
    #[serde(serialize_with = "crate::rational::serde_dual::serialize")]
    pub excursion_probability: Rational,
    pub success: bool,
}

pub fn gap_specs(eps: &Rational) -> (StoppingSpec, StoppingSpec, StoppingSpec) {
    let s1 = StoppingSpec::HitAbove { level: eps.clone(), strict: true };
    let s2 = StoppingSpec::hit_abs_below(eps * eps / int(4), eps.recip());
    let tau = StoppingSpec::min(s1.clone(), s2.clone());
    (s1, s2, tau)
}

/// `P(sup_{[0,1/ε)} M > ε)` on an exact process.
fn excursion_exact(p: &PathProcess, eps: &Rational) -> Result<Rational> {
    let end = eps.recip();
    let (depth, with_tail) = super::diagnostics::working_depth(p, &end)?;
    let exceeds = |path: &crate::process::PiecewiseConstantPath| {
        path.initial() > eps || path.jumps().iter().take_while(|(t, _)| *t < end).any(|(_, v)| v > eps)
    };
    let mut acc = ExactSum::new();
    for (atom, w) in p.space().enumerate(depth) {
        if exceeds(&p.path(&atom)?) {
            acc.add(&w);
        }
    }
    if with_tail && exceeds(&p.tail().expect("tail").representative) {
        acc.add(&p.space().residual(depth));
    }
    Ok(acc.value())
}

/// Builds the pair after checking, in order: `M₀ = 0`, `liminf |M| = 0`,
/// and the `ε`-excursion.
pub fn witness_gap(model: &Model, eps: &Rational, horizon: u64, policy: &ExpectationPolicy) -> Result<GapReport> {
    if !eps.is_positive() || eps >= &int(1) {
        return Err(Error::InvalidParameter("epsilon must lie in (0, 1)".into()));
    }
    match model {
        Model::Exact(p) => gap_exact(p, eps, policy),
        Model::Walk(w) => gap_walk(w, eps, horizon),
    }
}

fn gap_exact(p: &PathProcess, eps: &Rational, policy: &ExpectationPolicy) -> Result<GapReport> {
    if !p.is_terminating() {
        return Err(Error::NotTerminating);
    }
    let (depth, with_tail) = super::diagnostics::working_depth(p, &eps.recip())?;
    let atoms = p.space().enumerate(depth);
    let mut starts: Vec<Rational> = atoms.iter().map(|(a, _)| p.path(a).map(|x| x.initial().clone())).collect::<Result<_>>()?;
    if with_tail {
        starts.push(p.tail().expect("tail").representative.initial().clone());
    }
    if starts.iter().any(|s| !s.is_zero()) {
        return Err(Error::PreconditionFailed("M_0 is not identically 0".into()));
    }
    for (atom, _) in &atoms {
        let l = p.liminf_abs(atom)?;
        if !l.is_zero() {
            return Err(Error::NotApplicable(format!(
                "liminf |M| = {} on atom {}",
                fmt_rational(&l),
                atom.id
            )));
        }
    }
    let excursion = excursion_exact(p, eps)?;
    if excursion <= *eps {
        return Err(Error::PreconditionFailed(format!(
            "P(sup over [0, 1/eps) of M > eps) = {} does not exceed eps",
            fmt_rational(&excursion)
        )));
    }
    let (s1, s2, tau) = gap_specs(eps);
    let e_tau = expectation(p.space(), &stopped_value_rv(p, &tau), policy)?;
    let e_s2 = expectation(p.space(), &stopped_value_rv(p, &s2), policy)?;
    let bound = eps * eps / int(2);
    let (gap, success) = match (e_tau.exact(), e_s2.exact()) {
        (Some(a), Some(b)) => {
            let g = a - b;
            let ok = a >= &(int(3) * eps * eps / int(4)) && b.abs() <= eps * eps / int(4) && g >= bound;
            (Quantity::Exact(ExpectationResult::Exact(g)), ok)
        }
        _ => (Quantity::Float { value: f64::NAN, tolerance: f64::INFINITY }, false),
    };
    Ok(GapReport {
        epsilon: eps.clone(),
        sigma1: s1,
        sigma2: s2,
        tau,
        e_m_tau: Quantity::Exact(e_tau),
        e_m_sigma2: Quantity::Exact(e_s2),
        e_m_tau_truncated: None,
        e_m_sigma2_truncated: None,
        p_tau_overrun: None,
        p_sigma2_overrun: None,
        horizon_correction: None,
        horizon: None,
        gap,
        bound,
        excursion_probability: excursion,
        success,
    })
}

fn gap_walk(walk: &GenerativeProcess, eps: &Rational, horizon: u64) -> Result<GapReport> {
    if horizon == 0 {
        return Err(Error::InvalidParameter("horizon must be positive".into()));
    }
    if walk.start != 0 {
        return Err(Error::PreconditionFailed("M_0 is not identically 0".into()));
    }
    let w = GenerativeProcess { horizon, ..walk.clone() };
    let (s1, s2, tau) = gap_specs(eps);
    let law_s2 = stop_law_float(&w, &s2)?;
    if law_s2.stopped_mass < LIMINF_PROXY_MASS {
        return Err(Error::NotApplicable(format!(
            "P(sigma2 <= {horizon}) = {:.6} is below {LIMINF_PROXY_MASS}; liminf |M| = 0 is not supported",
            law_s2.stopped_mass
        )));
    }
    // The excursion only involves times below 1/ε, so the exact DP is cheap.
    let end = eps.recip();
    let short = GenerativeProcess { horizon: crate::rational::floor_u64(&end) + 1, ..walk.clone() };
    let probe = StoppingSpec::min(s1.clone(), StoppingSpec::at(end.clone()));
    let law = stop_law_exact(&short, &probe)?;
    let mut excursion = ExactSum::new();
    for (v, p) in &law.stopped_values {
        if int(*v) > *eps {
            excursion.add(p);
        }
    }
    let excursion = excursion.value();
    if excursion <= *eps {
        return Err(Error::PreconditionFailed(format!(
            "P(sup over [0, 1/eps) of M > eps) = {} does not exceed eps",
            fmt_rational(&excursion)
        )));
    }
    let law_tau = stop_law_float(&w, &tau)?;
    let tol = DP_TOLERANCE;
    let q = |value: f64| Quantity::Float { value, tolerance: tol };
    let e2 = to_f64(&(eps * eps));
    let correction = (law_s2.truncated_mean - law_s2.stopped_mean).abs();
    let gap = law_tau.stopped_mean - law_s2.stopped_mean;
    let success = law_tau.stopped_mean >= 0.75 * e2 - tol && law_s2.stopped_mean.abs() <= 0.25 * e2 + tol && gap >= 0.5 * e2 - tol;
    Ok(GapReport {
        epsilon: eps.clone(),
        sigma1: s1,
        sigma2: s2,
        tau,
        e_m_tau: q(law_tau.stopped_mean),
        e_m_sigma2: q(law_s2.stopped_mean),
        e_m_tau_truncated: Some(q(law_tau.truncated_mean)),
        e_m_sigma2_truncated: Some(q(law_s2.truncated_mean)),
        p_tau_overrun: Some(1.0 - law_tau.stopped_mass),
        p_sigma2_overrun: Some(1.0 - law_s2.stopped_mass),
        horizon_correction: Some(correction),
        horizon: Some(horizon),
        gap: q(gap),
        bound: eps * eps / int(2),
        excursion_probability: excursion,
        success,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::examples::{cherny_process, constant_process, finite_process};
    use crate::process::PiecewiseConstantPath;
    use crate::rational::ratio;

    #[test]
    fn constant_zero_has_no_excursion() {
        let r = witness_gap(&Model::Exact(constant_process(int(0))), &ratio(2, 5), 100, &ExpectationPolicy::default());
        assert!(matches!(r, Err(Error::PreconditionFailed(_))), "{r:?}");
    }

    #[test]
    fn cherny_is_not_applicable() {
        let r = witness_gap(&Model::Exact(cherny_process()), &ratio(2, 5), 100, &ExpectationPolicy::default());
        assert!(matches!(r, Err(Error::NotApplicable(_))), "{r:?}");
    }

    #[test]
    fn finite_excursion_succeeds() {
        // Up by 1 at time 1 and back to 0 at time 4, or down and back.
        let up = PiecewiseConstantPath::new(int(0), vec![(int(1), int(1)), (int(4), int(0))]).unwrap();
        let down = PiecewiseConstantPath::new(int(0), vec![(int(1), int(-1)), (int(4), int(0))]).unwrap();
        let p = finite_process(vec![(ratio(1, 2), up), (ratio(1, 2), down)]).unwrap();
        let r = witness_gap(&Model::Exact(p), &ratio(2, 5), 0, &ExpectationPolicy::default()).unwrap();
        assert_eq!(r.e_m_tau, Quantity::Exact(ExpectationResult::Exact(ratio(1, 2))));
        assert_eq!(r.e_m_sigma2, Quantity::Exact(ExpectationResult::Exact(int(0))));
        assert!(r.success);
    }

    #[test]
    fn walk_gap_small_horizon() {
        let w = GenerativeProcess::random_walk(10).unwrap();
        let r = witness_gap(&Model::Walk(w), &ratio(2, 5), 2000, &ExpectationPolicy::default()).unwrap();
        assert_eq!(r.excursion_probability, ratio(1, 2));
        let Quantity::Float { value, .. } = r.e_m_tau else { panic!() };
        assert!((value - 0.5).abs() < 1e-9);
        let Some(Quantity::Float { value: t, .. }) = r.e_m_tau_truncated else { panic!() };
        assert!(t.abs() < 1e-9);
        assert!(r.success);
    }
}
