//! Exact marginals, integrability of the limit, UI rows, the martingale
//! identity on observation classes, and limit existence.

use std::collections::BTreeMap;

use num_traits::{Signed, Zero};
use serde::Serialize;

use super::{Model, Statement, StatementVerdict, Suite, Verdict, Witness};
use crate::error::{Error, Result};
use crate::measure::{expectation, ExpectationPolicy, ExpectationResult, RandomVariable};
use crate::process::PathProcess;
use crate::rational::{int, ExactSum, Rational};
use crate::stopping::{observation_partition, stopped_value_rv, Event, StoppingSpec, TAIL_CLASS};

/// Depth at which every time in `[0, t]` is described exactly, and whether
/// a tail representative carries the residual.
pub(crate) fn working_depth(process: &PathProcess, t: &Rational) -> Result<(u64, bool)> {
    match (process.space().max_level(), process.tail()) {
        (Some(top), _) => Ok((top, false)),
        (None, Some(tail)) => Ok(((tail.depth_for)(t).max(1), true)),
        (None, None) => Err(Error::IndeterminateTail("infinite space without a tail model".into())),
    }
}

/// Exact `E[f(X_t)]` for each requested time.
///
/// Every path is scanned once: its initial value and the change of `f` at
/// each jump are booked against the jump time, and the requested times read
/// off running sums. The unenumerated mass follows the tail representative.
pub fn marginal_expectations(
    process: &PathProcess,
    times: &[Rational],
    f: impl Fn(&Rational) -> Rational,
) -> Result<Vec<Rational>> {
    let Some(t_max) = times.iter().max().cloned() else {
        return Ok(Vec::new());
    };
    if times.iter().any(|t| t.is_negative()) {
        return Err(Error::InvalidParameter("times must be nonnegative".into()));
    }
    let (depth, with_tail) = working_depth(process, &t_max)?;
    let mut base = ExactSum::new();
    let mut deltas: BTreeMap<Rational, ExactSum> = BTreeMap::new();
    let mut book = |path: &crate::process::PiecewiseConstantPath, w: &Rational| {
        let mut prev = f(path.initial());
        base.add(&(&prev * w));
        for (t, v) in path.jumps() {
            if *t > t_max {
                break;
            }
            let next = f(v);
            let d = &next - &prev;
            if !d.is_zero() {
                deltas.entry(t.clone()).or_default().add(&(d * w));
            }
            prev = next;
        }
    };
    for (atom, w) in process.space().enumerate(depth) {
        book(&process.path(&atom)?, &w);
    }
    if with_tail {
        let rep = process.tail().expect("tail model").representative.clone();
        // The residual mass has a huge exact denominator; skip it when the
        // representative contributes nothing.
        let silent = f(rep.initial()).is_zero() && rep.jumps().iter().all(|(t, v)| *t > t_max || f(v).is_zero());
        if !silent {
            book(&rep, &process.space().residual(depth));
        }
    }
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|a, b| times[*a].cmp(&times[*b]));
    let mut out = vec![int(0); times.len()];
    let mut running = base.value();
    let mut pending = deltas.into_iter().peekable();
    for i in order {
        while let Some((_, d)) = pending.next_if(|(t, _)| *t <= times[i]) {
            running += d.value();
        }
        out[i] = running.clone();
    }
    Ok(out)
}

/// `E[liminf |X|]` with certificate semantics.
pub fn check_liminf_integrability(process: &PathProcess, policy: &ExpectationPolicy) -> Result<ExpectationResult> {
    if !process.is_terminating() {
        return Err(Error::NotTerminating);
    }
    expectation(process.space(), &process.liminf_abs_rv(), policy)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum UiVerdict {
    UniformlyIntegrableOnGrid,
    NotUiCertified,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UiRow {
    #[serde(serialize_with = "crate::rational::serde_dual::serialize")]
    pub k: Rational,
    /// `sup_t E[|X_t|·1{|X_t| > K}]` over the grid.
    #[serde(serialize_with = "crate::rational::serde_dual::serialize")]
    pub grid_sup: Rational,
    #[serde(serialize_with = "crate::rational::serde_dual::serialize")]
    pub argmax: Rational,
    /// `E[|X_∞|·1{|X_∞| > K}]`, a lower bound on the supremum over all `t`.
    pub terminal: ExpectationResult,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UIDiagnostic {
    pub rows: Vec<UiRow>,
    pub grid_size: usize,
    pub verdict: UiVerdict,
}

fn truncation(k: &Rational) -> impl Fn(&Rational) -> Rational + '_ {
    move |x| {
        let a = x.abs();
        if &a > k {
            a
        } else {
            int(0)
        }
    }
}

/// Truncated-tail expectations on the grid and at infinity.
///
/// Paths are eventually constant, so `|X_t|·1{|X_t|>K}` converges to the
/// same expression at infinity and Fatou bounds the supremum over `t` from
/// below by the terminal value. A divergent terminal value for every `K`
/// therefore certifies that the family is not uniformly integrable.
pub fn check_ui(process: &PathProcess, ks: &[Rational], grid: &[Rational], policy: &ExpectationPolicy) -> Result<UIDiagnostic> {
    if !process.is_terminating() {
        return Err(Error::NotTerminating);
    }
    if ks.is_empty() || grid.is_empty() {
        return Err(Error::InvalidParameter("check_ui needs a K schedule and a grid".into()));
    }
    let mut rows = Vec::with_capacity(ks.len());
    for k in ks {
        let values = marginal_expectations(process, grid, truncation(k))?;
        let (i, sup) = values
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
            .expect("nonempty grid");
        let p = process.clone();
        let k2 = k.clone();
        let rv = RandomVariable::new(move |a| Ok(truncation(&k2)(&p.limit_at_infinity(a)?))).nonnegative();
        let terminal = expectation(process.space(), &rv, policy)?;
        rows.push(UiRow { k: k.clone(), grid_sup: sup.clone(), argmax: grid[i].clone(), terminal });
    }
    let divergent = rows.iter().filter(|r| r.terminal.is_divergent()).count();
    let verdict = if divergent == rows.len() {
        UiVerdict::NotUiCertified
    } else if divergent == 0 && rows.windows(2).all(|w| w[1].grid_sup <= w[0].grid_sup) {
        UiVerdict::UniformlyIntegrableOnGrid
    } else {
        return Err(Error::IndeterminateTail("truncated tails neither vanish nor diverge on the schedule".into()));
    };
    Ok(UIDiagnostic { rows, grid_size: grid.len(), verdict })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockCheck {
    pub label: String,
    /// `E[X_s·1_A]`.
    #[serde(serialize_with = "crate::rational::serde_dual::serialize")]
    pub at_s: Rational,
    /// `E[X_t·1_A]`.
    #[serde(serialize_with = "crate::rational::serde_dual::serialize")]
    pub at_t: Rational,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairCheck {
    #[serde(serialize_with = "crate::rational::serde_dual::serialize")]
    pub s: Rational,
    #[serde(serialize_with = "crate::rational::serde_dual::serialize")]
    pub t: Rational,
    pub blocks: Vec<BlockCheck>,
    /// Blocks whose identity was also confirmed through a two-point stopping time.
    pub two_point_confirmed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MartingaleReport {
    pub holds: bool,
    pub pairs: Vec<PairCheck>,
    pub violation: Option<Witness>,
}

const TWO_POINT_CROSS_CHECKS: usize = 16;

/// `E[X_t·1_A] = E[X_s·1_A]` on every observation class `A` at `s`.
///
/// Enumerated classes are summed directly. The class that looks like the
/// tail representative also holds the unenumerated mass, so its value is the
/// full expectation minus the other classes.
pub fn martingale_check(process: &PathProcess, pairs: &[(Rational, Rational)], policy: &ExpectationPolicy) -> Result<MartingaleReport> {
    let mut out = Vec::with_capacity(pairs.len());
    for (s, t) in pairs {
        if s >= t {
            return Err(Error::InvalidParameter("martingale pairs need s < t".into()));
        }
        let (depth, with_tail) = working_depth(process, t)?;
        let partition = observation_partition(process, s, depth)?;
        let atoms: BTreeMap<_, _> = process.space().enumerate(depth).into_iter().map(|(a, w)| (a.id, (a, w))).collect();
        let total = |r: &Rational| -> Result<Rational> {
            match expectation(process.space(), &process.value_rv(r), policy)? {
                ExpectationResult::Exact(v) => Ok(v),
                _ => Err(Error::IndeterminateTail("marginal without an exact value".into())),
            }
        };
        let (full_s, full_t) = (total(s)?, total(t)?);
        let mut blocks = Vec::with_capacity(partition.blocks.len() + 1);
        let (mut rest_s, mut rest_t) = (full_s.clone(), full_t.clone());
        let mut tail_seen = false;
        for block in &partition.blocks {
            if block.label == TAIL_CLASS {
                tail_seen = true;
            }
            let (mut a_s, mut a_t) = (ExactSum::new(), ExactSum::new());
            for id in &block.atoms {
                let (atom, w) = &atoms[id];
                let path = process.path(atom)?;
                a_s.add(&(path.value_at(s) * w));
                a_t.add(&(path.value_at(t) * w));
            }
            let (a_s, a_t) = (a_s.value(), a_t.value());
            if block.label != TAIL_CLASS {
                rest_s -= &a_s;
                rest_t -= &a_t;
                blocks.push(BlockCheck { label: block.label.clone(), at_s: a_s, at_t: a_t });
            }
        }
        if with_tail || tail_seen {
            blocks.push(BlockCheck { label: TAIL_CLASS.to_string(), at_s: rest_s, at_t: rest_t });
        } else if !rest_s.is_zero() || !rest_t.is_zero() {
            return Err(Error::InvalidParameter("classes do not exhaust the space".into()));
        }
        let mut confirmed = 0;
        for block in partition.blocks.iter().filter(|b| b.label != TAIL_CLASS).take(TWO_POINT_CROSS_CHECKS) {
            let spec = StoppingSpec::two_point(Event::Atoms { ids: block.atoms.iter().copied().collect() }, s.clone(), t.clone())?;
            let stopped = expectation(process.space(), &stopped_value_rv(process, &spec), policy)?;
            let check = blocks.iter().find(|b| b.label == block.label).expect("block recorded");
            if stopped.exact() == Some(&(&full_s + &check.at_t - &check.at_s)) {
                confirmed += 1;
            } else {
                return Err(Error::InvalidParameter(format!("two-point identity disagrees on class {}", block.label)));
            }
        }
        out.push(PairCheck { s: s.clone(), t: t.clone(), blocks, two_point_confirmed: confirmed });
    }
    let violation = out.iter().find_map(|p| {
        p.blocks.iter().find(|b| b.at_s != b.at_t).map(|b| Witness::Block {
            s: p.s.clone(),
            t: p.t.clone(),
            label: b.label.clone(),
            at_s: b.at_s.clone(),
            at_t: b.at_t.clone(),
        })
    });
    Ok(MartingaleReport { holds: violation.is_none(), pairs: out, violation })
}

/// Whether `lim X_t` exists on every path.
pub fn limit_existence_check(model: &Model) -> StatementVerdict {
    let (verdict, description) = match model {
        Model::Exact(p) if p.is_terminating() => {
            (Verdict::HoldsOnSuite, "every path has finitely many jumps and is eventually constant".to_string())
        }
        Model::Exact(_) => (Verdict::Undecidable, "paths known only up to a horizon".to_string()),
        Model::Walk(w) => (Verdict::Undecidable, format!("generative process known up to horizon {}", w.horizon)),
    };
    StatementVerdict {
        statement: Statement::II,
        verdict,
        witness: None,
        suite: Suite { description, size: 1, excluded: 0 },
        notes: vec!["limit existence only".into()],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::examples::{cherny_process, constant_process};
    use crate::rational::ratio;

    fn abs_process(p: &PathProcess) -> PathProcess {
        let q = p.clone();
        let mut out = PathProcess::new(p.space().clone(), p.kind(), move |a| {
            let path = q.path(a)?;
            crate::process::PiecewiseConstantPath::new(
                path.initial().abs(),
                path.jumps().iter().map(|(t, v)| (t.clone(), v.abs())).collect(),
            )
        });
        if let Some(t) = p.tail() {
            let mut t = t.clone();
            t.representative = crate::process::PiecewiseConstantPath::new(
                t.representative.initial().abs(),
                t.representative.jumps().iter().map(|(s, v)| (s.clone(), v.abs())).collect(),
            )
            .unwrap();
            out = out.with_tail(t);
        }
        out
    }

    #[test]
    fn cherny_marginals_vanish() {
        let p = cherny_process();
        let times: Vec<Rational> = (0..=40).map(|k| ratio(k, 2)).collect();
        assert!(marginal_expectations(&p, &times, |x| x.clone()).unwrap().iter().all(Zero::is_zero));
    }

    #[test]
    fn marginals_match_engine() {
        let p = cherny_process();
        let times = [int(7), ratio(5, 2), int(0), int(3)];
        let got = marginal_expectations(&p, &times, |x| x.abs()).unwrap();
        for (t, g) in times.iter().zip(got) {
            let e = expectation(p.space(), &p.value_rv(t).abs(), &ExpectationPolicy::default()).unwrap();
            assert_eq!(e.exact(), Some(&g));
            // Σ_{n ≤ t} 2·n²/(4n²).
            assert_eq!(g, Rational::from_integer(t.floor().to_integer()) / int(2));
        }
    }

    #[test]
    fn ui_rows_on_cherny() {
        let p = cherny_process();
        let grid: Vec<Rational> = (0..=20).map(int).collect();
        let d = check_ui(&p, &[int(10)], &grid, &ExpectationPolicy::with_threshold(int(100))).unwrap();
        assert_eq!(d.verdict, UiVerdict::NotUiCertified);
        // (⌊t⌋ − 3)/2 at t = 20.
        assert_eq!(d.rows[0].grid_sup, ratio(17, 2));
        assert_eq!(d.rows[0].argmax, int(20));
        let at: Vec<Rational> = marginal_expectations(&p, &grid, truncation(&int(10))).unwrap();
        for (t, v) in (0..=20i64).zip(at) {
            assert_eq!(v, if t >= 4 { ratio(t - 3, 2) } else { int(0) });
        }
    }

    #[test]
    fn ui_on_constant() {
        let p = constant_process(int(3));
        let d = check_ui(&p, &[int(1), int(3), int(10)], &[int(0), int(5)], &ExpectationPolicy::default()).unwrap();
        assert_eq!(d.verdict, UiVerdict::UniformlyIntegrableOnGrid);
        assert_eq!(d.rows[1].grid_sup, int(0));
        assert_eq!(d.rows[2].terminal, ExpectationResult::Exact(int(0)));
    }

    #[test]
    fn liminf_on_cherny_diverges_as_half_depth() {
        let r = check_liminf_integrability(&cherny_process(), &ExpectationPolicy::with_threshold(int(1000))).unwrap();
        let ExpectationResult::Divergent(c) = r else { panic!("{r:?}") };
        assert_eq!(c.depth, 2001);
        assert_eq!(c.partial_sum, ratio(2001, 2));
    }

    #[test]
    fn martingale_identity_on_cherny() {
        let p = cherny_process();
        let r = martingale_check(&p, &[(int(1), int(2)), (int(0), int(5)), (ratio(3, 2), int(4))], &ExpectationPolicy::default())
            .unwrap();
        assert!(r.holds);
        assert!(r.pairs.iter().all(|p| p.two_point_confirmed + 1 == p.blocks.len()));
        // At s = 1 the classes are (1,+1), (1,−1) and the tail class.
        assert_eq!(r.pairs[0].blocks.len(), 3);
    }

    #[test]
    fn martingale_fails_for_abs() {
        let p = abs_process(&cherny_process());
        let r = martingale_check(&p, &[(int(0), int(1))], &ExpectationPolicy::default()).unwrap();
        assert!(!r.holds);
        let Some(Witness::Block { at_s, at_t, .. }) = r.violation else { panic!() };
        assert_eq!((at_s, at_t), (int(0), ratio(1, 2)));
    }

    #[test]
    fn limits_exist_for_terminating_only() {
        assert_eq!(limit_existence_check(&Model::Exact(cherny_process())).verdict, Verdict::HoldsOnSuite);
        let w = crate::process::GenerativeProcess::random_walk(10).unwrap();
        assert_eq!(limit_existence_check(&Model::Walk(w)).verdict, Verdict::Undecidable);
    }
}
