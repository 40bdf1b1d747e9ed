//! Searches for finite stopping times that break `E[X_τ] = E[X₀]`.
//!
//! Exact processes are searched over a generated family of expression trees.
//! Each leaf is evaluated once per atom and replaced by the rank of its
//! value among all times that occur, so composite rules reduce to
//! elementwise min/max over rank vectors. Atoms of equal weight are pooled
//! and the stopped mean is compared with the initial mean class by class in
//! scaled integers; only a nonzero class difference triggers rational
//! arithmetic, and any candidate is confirmed through the generic engine.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::atomic::{AtomicU64, Ordering};

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::Serialize;

use super::diagnostics::marginal_expectations;
use super::{Quantity, Statement, StatementVerdict, StoppedQuantity, Suite, Verdict, Witness};
use crate::error::{Error, Result};
use crate::measure::{
    expectation, CertificateKind, DivergenceCertificate, ExpectationPolicy, ExpectationResult,
};
use crate::process::{GenerativeProcess, PathProcess, PiecewiseConstantPath};
use crate::rational::{int, ratio, to_f64, ExactSum, Rational};
use crate::stopping::{
    adaptedness_check, evaluate_on, finiteness_check, stopped_value_rv, Adaptedness, Event, Observation, StoppingSpec,
};
use crate::time::ExtTime;
use crate::walk::{stop_law_exact, stop_law_float};

/// Describes the family of stopping times tried by the falsifiers.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StoppingFamilyGenerator {
    /// Maximum expression depth (1 = leaves only, at most 3).
    pub max_depth: usize,
    #[serde(serialize_with = "crate::rational::serde_dual::vec")]
    pub levels: Vec<Rational>,
    #[serde(serialize_with = "crate::rational::serde_dual::vec")]
    pub grid: Vec<Rational>,
    pub include_two_point: bool,
    pub include_randomized: bool,
}

impl Default for StoppingFamilyGenerator {
    fn default() -> Self {
        StoppingFamilyGenerator {
            max_depth: 3,
            levels: vec![ratio(1, 2), int(1), int(4), int(9)],
            grid: [0, 1, 2, 3, 5, 8, 13, 21, 34, 50].into_iter().map(int).collect(),
            include_two_point: true,
            include_randomized: false,
        }
    }
}

impl StoppingFamilyGenerator {
    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.max_depth) {
            return Err(Error::InvalidParameter("generator depth must be 1, 2 or 3".into()));
        }
        if self.grid.is_empty() || self.grid.iter().any(|t| t.is_negative()) {
            return Err(Error::InvalidParameter("generator grid must be nonempty and nonnegative".into()));
        }
        Ok(())
    }

    fn sorted_grid(&self) -> Vec<Rational> {
        self.grid.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect()
    }

    /// Depth-one rules in a fixed order.
    pub fn leaves(&self) -> Vec<StoppingSpec> {
        let grid = self.sorted_grid();
        let levels: Vec<Rational> = self.levels.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
        let mut out: Vec<StoppingSpec> = grid.iter().cloned().map(StoppingSpec::at).collect();
        out.extend(levels.iter().cloned().map(StoppingSpec::hit_above));
        out.extend(levels.iter().cloned().map(StoppingSpec::hit_abs_above));
        for l in &levels {
            out.extend(grid.iter().map(|a| StoppingSpec::hit_abs_below(l.clone(), a.clone())));
        }
        if self.include_two_point {
            for w in grid.windows(2) {
                out.push(StoppingSpec::TwoPoint {
                    event: Event::ValueIn { values: vec![int(0)] },
                    s: w[0].clone(),
                    t: w[1].clone(),
                });
            }
        }
        out
    }

    /// Number of rules in the family (before finiteness filtering).
    pub fn cardinality(&self) -> u64 {
        let l = self.leaves().len() as u64;
        let pairs = l * l.saturating_sub(1);
        let mut n = l;
        if self.max_depth >= 2 {
            n += pairs;
        }
        if self.max_depth >= 3 {
            n += pairs * l * 2;
        }
        n
    }

    pub fn describe(&self) -> String {
        let show = |v: &[Rational]| v.iter().map(crate::rational::fmt_rational).collect::<Vec<_>>().join(", ");
        format!(
            "leaves const(grid), hit_above(level), hit_abs_above(level), hit_abs_below(level, after grid){}; \
             depth 2 = min/max of two distinct leaves; depth 3 = min/max of a depth-2 rule and a leaf; \
             max depth {}; levels {{{}}}; grid {{{}}}{}",
            if self.include_two_point { ", two_point(X_s = 0, s, next grid time)" } else { "" },
            self.max_depth,
            show(&self.levels),
            show(&self.sorted_grid()),
            if self.include_randomized { "; plus 1/U on randomized spaces" } else { "" },
        )
    }

    /// Spec for a depth-2 index `p` over ordered pairs `i < j`, operation in the low bit.
    fn pair_spec(&self, leaves: &[StoppingSpec], pairs: &[(usize, usize)], p: usize) -> StoppingSpec {
        let (i, j) = pairs[p / 2];
        let (a, b) = (leaves[i].clone(), leaves[j].clone());
        if p % 2 == 0 {
            StoppingSpec::min(a, b)
        } else {
            StoppingSpec::max(a, b)
        }
    }
}

const INF: u32 = u32::MAX;

/// Atoms in scaled-integer form, ready for rank-vector evaluation.
struct Table {
    /// `values[i][r]`: scaled `X` at time rank `r` on atom `i`.
    values: Vec<Vec<i128>>,
    /// Class of each atom (atoms of equal weight share a class).
    class: Vec<usize>,
    class_weight: Vec<Rational>,
    scale: BigInt,
    /// Per-class scaled `Σ X₀`.
    start: Vec<i128>,
}

impl Table {
    fn class_sums(&self, ranks: &[u32]) -> Option<Vec<i128>> {
        let mut sums = vec![0i128; self.class_weight.len()];
        for (i, r) in ranks.iter().enumerate() {
            if *r == INF {
                return None;
            }
            sums[self.class[i]] += self.values[i][*r as usize];
        }
        Some(sums)
    }

    /// `E[X_τ] − E[X₀]`, or `None` when `τ = ∞` somewhere.
    fn difference(&self, ranks: &[u32]) -> Option<Rational> {
        let sums = self.class_sums(ranks)?;
        if sums.iter().zip(&self.start).all(|(a, b)| a == b) {
            return Some(int(0));
        }
        let mut acc = ExactSum::new();
        for ((s, b), w) in sums.iter().zip(&self.start).zip(&self.class_weight) {
            if s != b {
                acc.add(&(Rational::from_integer(BigInt::from(s - b)) * w));
            }
        }
        Some(acc.value() / Rational::from_integer(self.scale.clone()))
    }
}

fn scaled(q: &Rational, scale: &BigInt) -> Result<i128> {
    (q * Rational::from_integer(scale.clone()))
        .to_integer()
        .to_i128()
        .filter(|v| v.abs() < (1i128 << 100))
        .ok_or_else(|| Error::Unsupported("path values too large for the fast falsifier".into()))
}

/// Outcome of a suite run over an exact process.
struct SearchResult {
    evaluated: u64,
    excluded: u64,
    violation: Option<StoppingSpec>,
}

fn combine(a: &[u32], b: &[u32], is_min: bool) -> Vec<u32> {
    a.iter().zip(b).map(|(x, y)| if is_min { *x.min(y) } else { *x.max(y) }).collect()
}

/// Falsifier over the generated family on an exact process (natural
/// filtration). Randomized rules are added when the space carries `U`.
pub fn falsify_statement_iv(
    process: &PathProcess,
    generator: &StoppingFamilyGenerator,
    policy: &ExpectationPolicy,
    refinement_threshold: &Rational,
) -> Result<StatementVerdict> {
    generator.validate()?;
    let e0 = match expectation(process.space(), &process.value_rv(&int(0)), policy)? {
        ExpectationResult::Exact(v) => v,
        _ => return Err(Error::IndeterminateTail("E[X_0] is not exact".into())),
    };
    let mut notes = Vec::new();
    if generator.include_randomized && process.space().uniform_parts().is_some() {
        if let Some(w) = randomized_witness(process, &e0, policy, refinement_threshold, &mut notes)? {
            return Ok(StatementVerdict {
                statement: Statement::IV,
                verdict: Verdict::Violated,
                witness: Some(w),
                suite: Suite { description: "1/U on the randomized space".into(), size: 1, excluded: 0 },
                notes,
            });
        }
    }
    let base = match process.space().uniform_parts() {
        Some((base, _, _)) => process.on_space(base.clone()),
        None => process.clone(),
    };
    let leaves = generator.leaves();
    let leaf_rep_times: Vec<ExtTime> = match base.tail() {
        Some(t) => leaves.iter().map(|l| evaluate_on(l, &Observation::tail(&t.representative))).collect::<Result<_>>()?,
        None => Vec::new(),
    };
    let grid = generator.sorted_grid();
    let mut horizon = grid.last().cloned().unwrap_or_else(|| int(0));
    for t in leaf_rep_times.iter().filter_map(ExtTime::finite) {
        if *t > horizon {
            horizon = t.clone();
        }
    }
    let (depth, with_tail) = super::diagnostics::working_depth(&base, &horizon)?;

    // Paths: enumerated atoms, then the tail representative.
    let mut paths: Vec<(PiecewiseConstantPath, Rational, Option<u64>)> = Vec::new();
    for (atom, w) in base.space().enumerate(depth) {
        paths.push((base.path(&atom)?, w, Some(atom.id)));
    }
    if with_tail {
        paths.push((base.tail().expect("tail").representative.clone(), base.space().residual(depth), None));
    }

    // Leaf stopping times per atom, then global time ranks.
    let leaf_times: Vec<Vec<ExtTime>> = leaves
        .iter()
        .map(|l| {
            paths
                .iter()
                .map(|(p, _, id)| evaluate_on(l, &Observation { path: p, uniform: None, atom: *id }))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let times: Vec<Rational> = leaf_times
        .iter()
        .flatten()
        .filter_map(|t| t.finite().cloned())
        .chain(std::iter::once(int(0)))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let rank_of: BTreeMap<&Rational, u32> = times.iter().enumerate().map(|(i, t)| (t, i as u32)).collect();
    let leaf_ranks: Vec<Vec<u32>> = leaf_times
        .iter()
        .map(|v| v.iter().map(|t| t.finite().map_or(INF, |t| rank_of[t])).collect())
        .collect();

    let mut scale = BigInt::one();
    for (p, _, _) in &paths {
        for v in std::iter::once(p.initial()).chain(p.jumps().iter().map(|(_, v)| v)) {
            scale = scale.lcm(v.denom());
        }
    }
    let mut classes: BTreeMap<Rational, usize> = BTreeMap::new();
    let mut class = Vec::with_capacity(paths.len());
    for (_, w, _) in &paths {
        let n = classes.len();
        class.push(*classes.entry(w.clone()).or_insert(n));
    }
    let mut class_weight = vec![int(0); classes.len()];
    for (w, c) in &classes {
        class_weight[*c] = w.clone();
    }
    let values = paths
        .iter()
        .map(|(p, _, _)| times.iter().map(|t| scaled(p.value_at(t), &scale)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    let mut table = Table { values, class, class_weight, scale, start: Vec::new() };
    table.start = table.class_sums(&vec![0; paths.len()]).expect("time zero is finite");

    // Leaves are checked for adaptedness in full.
    let mut adapt_grid: Vec<Rational> = base.event_grid(depth, &horizon)?;
    adapt_grid.extend(grid.iter().cloned());
    for l in &leaves {
        let rep = adaptedness_check(l, &base, &adapt_grid, depth)?;
        if rep.verdict != Adaptedness::Adapted {
            return Err(Error::InvalidParameter(format!("generated leaf {l} is not adapted")));
        }
    }

    let pairs: Vec<(usize, usize)> =
        (0..leaves.len()).flat_map(|i| (i + 1..leaves.len()).map(move |j| (i, j))).collect();
    let mut found: Option<StoppingSpec> = None;
    let mut evaluated = 0u64;
    let mut excluded = 0u64;
    let mut tally = |r: SearchResult, found: &mut Option<StoppingSpec>| {
        evaluated += r.evaluated;
        excluded += r.excluded;
        if found.is_none() {
            *found = r.violation;
        }
    };

    // Depth 1.
    let mut r = SearchResult { evaluated: 0, excluded: 0, violation: None };
    for (l, ranks) in leaves.iter().zip(&leaf_ranks) {
        r.evaluated += 1;
        match table.difference(ranks) {
            None => r.excluded += 1,
            Some(d) if !d.is_zero() && r.violation.is_none() => r.violation = Some(l.clone()),
            Some(_) => {}
        }
    }
    tally(r, &mut found);

    // Depths 2 and 3, one task per depth-2 rule, reduced in index order.
    if generator.max_depth >= 2 && found.is_none() {
        let deep = generator.max_depth >= 3;
        let results: Vec<SearchResult> = (0..pairs.len() * 2)
            .into_par_iter()
            .map(|p| {
                let (i, j) = pairs[p / 2];
                let is_min = p % 2 == 0;
                let inner = combine(&leaf_ranks[i], &leaf_ranks[j], is_min);
                let mut r = SearchResult { evaluated: 1, excluded: 0, violation: None };
                match table.difference(&inner) {
                    None => r.excluded += 1,
                    Some(d) if !d.is_zero() => r.violation = Some(generator.pair_spec(&leaves, &pairs, p)),
                    Some(_) => {}
                }
                if deep {
                    for (k, leaf) in leaf_ranks.iter().enumerate() {
                        for outer_min in [true, false] {
                            r.evaluated += 1;
                            match table.difference(&combine(&inner, leaf, outer_min)) {
                                None => r.excluded += 1,
                                Some(d) if !d.is_zero() && r.violation.is_none() => {
                                    let a = generator.pair_spec(&leaves, &pairs, p);
                                    let b = leaves[k].clone();
                                    r.violation =
                                        Some(if outer_min { StoppingSpec::min(a, b) } else { StoppingSpec::max(a, b) });
                                }
                                Some(_) => {}
                            }
                        }
                    }
                }
                r
            })
            .collect();
        for r in results {
            tally(r, &mut found);
        }
        // Spot-check composites for adaptedness.
        let step = (pairs.len() * 2 / 32).max(1);
        for p in (0..pairs.len() * 2).step_by(step).take(32) {
            let spec = generator.pair_spec(&leaves, &pairs, p);
            if adaptedness_check(&spec, &base, &adapt_grid, depth)?.verdict != Adaptedness::Adapted {
                return Err(Error::InvalidParameter(format!("composite {spec} is not adapted")));
            }
        }
    }

    let suite = Suite { description: generator.describe(), size: evaluated, excluded };
    notes.push(format!("{} rules evaluated, {} excluded as not finite", evaluated, excluded));
    match found {
        None => Ok(StatementVerdict { statement: Statement::IV, verdict: Verdict::HoldsOnSuite, witness: None, suite, notes }),
        Some(spec) => {
            let observed = expectation(base.space(), &stopped_value_rv(&base, &spec), policy)?;
            if observed.exact() == Some(&e0) {
                return Err(Error::InvalidParameter(format!("fast evaluation of {spec} disagrees with the engine")));
            }
            Ok(StatementVerdict {
                statement: Statement::IV,
                verdict: Verdict::Violated,
                witness: Some(Witness::Stopping {
                    spec,
                    quantity: StoppedQuantity::Mean,
                    expected: Quantity::Exact(ExpectationResult::Exact(e0)),
                    observed: Quantity::Exact(observed),
                }),
                suite,
                notes,
            })
        }
    }
}

/// Largest refinement grid tried by [`reciprocal_uniform_refinement`].
pub const REFINEMENT_LIMIT: u64 = 1_000_000;

/// Lower bounds on `E[|X_{1/U}|]` for a continuous uniform `U` independent of `X`.
///
/// With `g(s) = E[|X_s|]`, the cells `U ∈ ((k−1)/m, k/m]` give
/// `L_m = (1/m)·Σ_{k≥2} min{g(s) : s ∈ [m/k, m/(k−1))}`, and the first cell
/// contributes nothing. Grids `m = 10, 100, …` refine each other, so the
/// bounds are nondecreasing. A bound above `threshold` yields a refinement
/// certificate.
pub fn reciprocal_uniform_refinement(base: &PathProcess, threshold: &Rational) -> Result<Option<DivergenceCertificate>> {
    let mut samples = Vec::new();
    let mut m = 10u64;
    while m <= REFINEMENT_LIMIT {
        let bound = refinement_bound(base, m)?;
        samples.push((m, bound.clone()));
        if &bound > threshold {
            return Ok(Some(DivergenceCertificate {
                kind: CertificateKind::Refinement,
                threshold: threshold.clone(),
                depth: m,
                partial_sum: bound,
                growth_samples: samples,
            }));
        }
        m *= 10;
    }
    Ok(None)
}

/// `L_m` from [`reciprocal_uniform_refinement`].
pub fn refinement_bound(base: &PathProcess, m: u64) -> Result<Rational> {
    if m < 1 {
        return Err(Error::InvalidParameter("grid size must be positive".into()));
    }
    let mi = m as i64;
    let (depth, _) = super::diagnostics::working_depth(base, &int(mi))?;
    let events = base.event_times(depth, &int(mi))?;
    let cuts: Vec<Rational> = (1..=mi).map(|k| ratio(mi, k)).collect();
    let mut query: Vec<Rational> = cuts.clone();
    query.extend(events.iter().cloned());
    let g = marginal_expectations(base, &query, |x| x.abs())?;
    let (g_cut, g_event) = g.split_at(cuts.len());
    let mut total = ExactSum::new();
    // Cell k covers s ∈ [m/k, m/(k−1)); events are ascending.
    for k in 2..=m as usize {
        let (lo, hi) = (&cuts[k - 1], &cuts[k - 2]);
        let mut best = g_cut[k - 1].clone();
        let start = events.partition_point(|e| e <= lo);
        for (e, v) in events[start..].iter().zip(&g_event[start..]) {
            if e >= hi {
                break;
            }
            if *v < best {
                best = v.clone();
            }
        }
        total.add(&best);
    }
    Ok(total.value() / int(mi))
}

fn randomized_witness(
    process: &PathProcess,
    e0: &Rational,
    policy: &ExpectationPolicy,
    refinement_threshold: &Rational,
    notes: &mut Vec<String>,
) -> Result<Option<Witness>> {
    let spec = StoppingSpec::ReciprocalU;
    let (base_space, m, _) = process.space().uniform_parts().expect("randomized space");
    let fin = finiteness_check(&spec, process, 1)?;
    if !fin.is_finite() {
        return Ok(None);
    }
    let mean = expectation(process.space(), &stopped_value_rv(process, &spec), policy)?;
    notes.push(format!("E[X_(1/U)] on the {m}-level grid: {}", describe(&mean)));
    if mean.exact() != Some(e0) {
        return Ok(Some(Witness::Stopping {
            spec,
            quantity: StoppedQuantity::Mean,
            expected: Quantity::Exact(ExpectationResult::Exact(e0.clone())),
            observed: Quantity::Exact(mean),
        }));
    }
    let base = process.on_space(base_space.clone());
    let grid_value = blowup_value(&base, m)?;
    notes.push(format!("E[|X_(1/U)|] on the {m}-level grid: {}", crate::rational::fmt_rational(&grid_value)));
    match reciprocal_uniform_refinement(&base, refinement_threshold)? {
        Some(cert) => Ok(Some(Witness::Stopping {
            spec,
            quantity: StoppedQuantity::AbsMean,
            expected: Quantity::Exact(ExpectationResult::Exact(e0.clone())),
            observed: Quantity::Exact(ExpectationResult::Divergent(cert)),
        })),
        None => Ok(None),
    }
}

fn describe(r: &ExpectationResult) -> String {
    match r {
        ExpectationResult::Exact(v) => crate::rational::fmt_rational(v),
        ExpectationResult::Truncated { value, tail_bound } => {
            format!("{} (tail ≤ {})", crate::rational::fmt_rational(value), crate::rational::fmt_rational(tail_bound))
        }
        ExpectationResult::Divergent(c) => format!("divergent (> {} at {})", crate::rational::fmt_rational(&c.threshold), c.depth),
    }
}

/// Exact `E[|X_{1/U}|]` with `U` on the `m`-level grid `(2k−1)/(2m)`,
/// independent of `X`: the mean of `E[|X_s|]` over `s = 2m/(2k−1)`.
pub fn blowup_value(base: &PathProcess, m: u64) -> Result<Rational> {
    if m == 0 {
        return Err(Error::InvalidParameter("grid size must be positive".into()));
    }
    let mi = m as i64;
    let times: Vec<Rational> = (1..=mi).map(|k| ratio(2 * mi, 2 * k - 1)).collect();
    let g = marginal_expectations(base, &times, |x| x.abs())?;
    let mut total = ExactSum::new();
    for v in &g {
        total.add(v);
    }
    Ok(total.value() / int(mi))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlowupPoint {
    pub m: u64,
    pub ln_m: f64,
    pub value: ExpectationResult,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlowupCurve {
    pub points: Vec<BlowupPoint>,
    /// Least-squares slope of the values against `ln m`.
    pub slope: f64,
}

/// `E[|X_{1/U}|]` along grid sizes, for a process on the base space.
pub fn randomized_blowup_curve(base: &PathProcess, m_list: &[u64]) -> Result<BlowupCurve> {
    if base.space().uniform_parts().is_some() {
        return Err(Error::InvalidParameter("pass the process on its base space".into()));
    }
    if !base.is_terminating() {
        return Err(Error::NotTerminating);
    }
    let points: Vec<BlowupPoint> = m_list
        .iter()
        .map(|&m| {
            let ext = crate::stopping::extend_with_uniform(base.space(), StoppingSpec::at(int(0)), m)?;
            let fin = finiteness_check(&StoppingSpec::ReciprocalU, &ext.lift(base), 1)?;
            if !fin.is_finite() {
                return Err(Error::PreconditionFailed("1/U is not certified finite".into()));
            }
            Ok(BlowupPoint { m, ln_m: (m as f64).ln(), value: ExpectationResult::Exact(blowup_value(base, m)?) })
        })
        .collect::<Result<_>>()?;
    let slope = fit_slope(&points.iter().map(|p| (p.ln_m, to_f64(p.value.point()))).collect::<Vec<_>>());
    Ok(BlowupCurve { points, slope })
}

fn fit_slope(xy: &[(f64, f64)]) -> f64 {
    if xy.len() < 2 {
        return f64::NAN;
    }
    let n = xy.len() as f64;
    let mx = xy.iter().map(|p| p.0).sum::<f64>() / n;
    let my = xy.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = xy.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = xy.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

/// Mass at which a horizon-limited stopping time counts as finite.
pub const WALK_STOP_MASS: f64 = 0.97;

/// Falsifier for the random walk: leaves of the family whose stopped law is
/// a point mass away from the start, with `P(τ ≤ H) ≥ 0.97`.
pub fn falsify_walk_iv(walk: &GenerativeProcess, generator: &StoppingFamilyGenerator) -> Result<StatementVerdict> {
    generator.validate()?;
    let h = int(walk.horizon as i64);
    let leaves: Vec<StoppingSpec> = generator
        .leaves()
        .into_iter()
        .filter(|l| !matches!(l, StoppingSpec::TwoPoint { .. }))
        .filter(|l| match l {
            StoppingSpec::Const { t } => t.le(&h),
            _ => true,
        })
        .collect();
    let tried = AtomicU64::new(0);
    let laws: Vec<(usize, f64)> = leaves
        .par_iter()
        .enumerate()
        .map(|(i, l)| {
            tried.fetch_add(1, Ordering::Relaxed);
            let law = stop_law_float(walk, l)?;
            let point = law.stopped_values.len() == 1 && !law.stopped_values.contains_key(&walk.start);
            Ok((i, if point { law.stopped_mass } else { -1.0 }))
        })
        .collect::<Result<_>>()?;
    let best = laws
        .iter()
        .filter(|(_, m)| *m >= WALK_STOP_MASS)
        .fold(None::<(usize, f64)>, |acc, &(i, m)| match acc {
            Some((_, bm)) if bm >= m => acc,
            _ => Some((i, m)),
        });
    let suite = Suite {
        description: format!("depth-one rules of the family at horizon {}: {}", walk.horizon, generator.describe()),
        size: tried.load(Ordering::Relaxed),
        excluded: laws.iter().filter(|(_, m)| *m < WALK_STOP_MASS).count() as u64,
    };
    match best {
        None => Ok(StatementVerdict {
            statement: Statement::IV,
            verdict: Verdict::HoldsOnSuite,
            witness: None,
            suite,
            notes: vec!["no horizon-certified point-mass stopping law found".into()],
        }),
        Some((i, _)) => {
            let spec = leaves[i].clone();
            let law = stop_law_exact(walk, &spec)?;
            let (&value, _) = law.stopped_values.iter().next().expect("point mass");
            Ok(StatementVerdict {
                statement: Statement::IV,
                verdict: Verdict::Violated,
                witness: Some(Witness::Horizon {
                    spec,
                    horizon: walk.horizon,
                    p_stopped: law.stopped_mass.clone(),
                    stopped_value: value,
                    truncated_mean: law.truncated_mean.clone(),
                    expected: int(walk.start),
                }),
                suite,
                notes: vec![format!(
                    "X_tau is constant on the stopped event, P(tau <= H) = {:.6}",
                    to_f64(&law.stopped_mass)
                )],
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::examples::{cherny_process, two_atom_process};
    use crate::stopping::extend_with_uniform;

    fn small() -> StoppingFamilyGenerator {
        StoppingFamilyGenerator {
            max_depth: 2,
            levels: vec![int(1), int(4)],
            grid: vec![int(0), int(1), int(3)],
            include_two_point: true,
            include_randomized: false,
        }
    }

    #[test]
    fn leaf_count_matches_cardinality() {
        let g = small();
        let l = g.leaves().len() as u64;
        assert_eq!(l, 3 + 2 + 2 + 6 + 2);
        assert_eq!(g.cardinality(), l + l * (l - 1));
    }

    #[test]
    fn cherny_small_suite_holds() {
        let v = falsify_statement_iv(&cherny_process(), &small(), &ExpectationPolicy::default(), &int(4)).unwrap();
        assert_eq!(v.verdict, Verdict::HoldsOnSuite);
        assert_eq!(v.suite.size, small().cardinality());
        assert!(v.suite.excluded > 0);
    }

    #[test]
    fn two_atom_is_caught() {
        let v = falsify_statement_iv(&two_atom_process(), &small(), &ExpectationPolicy::default(), &int(4)).unwrap();
        assert_eq!(v.verdict, Verdict::Violated);
        let Some(Witness::Stopping { spec, observed, .. }) = v.witness else { panic!() };
        assert_eq!(spec, StoppingSpec::at(int(1)));
        assert_eq!(observed, Quantity::Exact(ExpectationResult::Exact(ratio(5, 2))));
    }

    #[test]
    fn blowup_small_grids() {
        let p = cherny_process();
        // m = 1: U = 1/2, τ = 2, E|X_2| = 1.
        assert_eq!(blowup_value(&p, 1).unwrap(), int(1));
        // Against the generic engine on the extension.
        for m in [2u64, 7, 30] {
            let ext = extend_with_uniform(p.space(), StoppingSpec::at(int(0)), m).unwrap();
            let lifted = ext.lift(&p);
            let rv = stopped_value_rv(&lifted, &StoppingSpec::ReciprocalU).abs();
            let e = expectation(lifted.space(), &rv, &ExpectationPolicy::default()).unwrap();
            assert_eq!(e.exact(), Some(&blowup_value(&p, m).unwrap()), "m = {m}");
        }
    }

    #[test]
    fn refinement_bounds_are_nested() {
        let p = cherny_process();
        let l10 = refinement_bound(&p, 10).unwrap();
        let l100 = refinement_bound(&p, 100).unwrap();
        // Σ_{k=2}^{10} ⌊10/k⌋/2 / 10 = (5+3+2+2+1+1+1+1+1)/20.
        assert_eq!(l10, ratio(17, 20));
        assert!(l100 >= l10);
        let cert = reciprocal_uniform_refinement(&p, &int(4)).unwrap().unwrap();
        assert!(cert.is_consistent());
        assert_eq!(cert.depth, 10_000);
    }

    #[test]
    fn walk_hit_one_is_found() {
        let walk = GenerativeProcess::random_walk(1000).unwrap();
        let g = StoppingFamilyGenerator { levels: vec![int(1), int(2), int(4), int(9)], ..Default::default() };
        let v = falsify_walk_iv(&walk, &g).unwrap();
        assert_eq!(v.verdict, Verdict::Violated);
        let Some(Witness::Horizon { spec, stopped_value, truncated_mean, p_stopped, .. }) = v.witness else { panic!() };
        assert_eq!(spec, StoppingSpec::hit_above(int(1)));
        assert_eq!(stopped_value, 1);
        assert!(truncated_mean.is_zero());
        assert!(to_f64(&p_stopped) >= 0.97);
    }
}
