//! Stopping-time expressions, their per-atom evaluation, and the checks that
//! make them usable: adaptedness by observational replay, finiteness
//! certificates, and randomization of the space by an independent uniform.

use std::collections::HashMap;
use std::fmt;

use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{Atom, AtomId, CountableSpace, Partition, RandomVariable, TailBehavior};
use crate::process::{PathProcess, PiecewiseConstantPath};
use crate::rational::{fmt_rational, int, Rational};
use crate::time::ExtTime;

/// Observable event used by two-point stopping times.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Event {
    /// Explicit atom set (must be a union of observation classes at `s`).
    Atoms { ids: Vec<AtomId> },
    /// `X_s` takes one of the listed values.
    ValueIn {
        #[serde(with = "crate::rational::serde_rational::vec")]
        values: Vec<Rational>,
    },
}

/// Stopping-time expression tree.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum StoppingSpec {
    Const {
        t: ExtTime,
    },
    /// First `t` with `X_t ≥ level` (`> level` when strict).
    HitAbove {
        #[serde(with = "crate::rational::serde_rational")]
        level: Rational,
        #[serde(default)]
        strict: bool,
    },
    /// First `t ≥ after` with `|X_t| ≤ level`.
    HitAbsBelow {
        #[serde(with = "crate::rational::serde_rational")]
        level: Rational,
        #[serde(with = "crate::rational::serde_rational")]
        after: Rational,
    },
    /// First `t` with `|X_t| ≥ level`.
    HitAbsAbove {
        #[serde(with = "crate::rational::serde_rational")]
        level: Rational,
    },
    /// `t` on the event, `s` off it.
    TwoPoint {
        event: Event,
        #[serde(with = "crate::rational::serde_rational")]
        s: Rational,
        #[serde(with = "crate::rational::serde_rational")]
        t: Rational,
    },
    Min {
        args: Vec<StoppingSpec>,
    },
    Max {
        args: Vec<StoppingSpec>,
    },
    /// `1/U` for the auxiliary uniform variable.
    ReciprocalU,
    /// First `t` with `||X_t| − liminf|X|| ≤ tolerance`. Looks at the whole
    /// path, so it is in general not a stopping time.
    ApproachLiminfAbs {
        #[serde(with = "crate::rational::serde_rational")]
        tolerance: Rational,
    },
}

impl StoppingSpec {
    pub fn at(t: Rational) -> Self {
        StoppingSpec::Const { t: ExtTime::Finite(t) }
    }

    pub fn never() -> Self {
        StoppingSpec::Const { t: ExtTime::Infinite }
    }

    pub fn hit_above(level: Rational) -> Self {
        StoppingSpec::HitAbove { level, strict: false }
    }

    pub fn hit_abs_above(level: Rational) -> Self {
        StoppingSpec::HitAbsAbove { level }
    }

    pub fn hit_abs_below(level: Rational, after: Rational) -> Self {
        StoppingSpec::HitAbsBelow { level, after }
    }

    pub fn min(a: StoppingSpec, b: StoppingSpec) -> Self {
        StoppingSpec::Min { args: vec![a, b] }
    }

    pub fn max(a: StoppingSpec, b: StoppingSpec) -> Self {
        StoppingSpec::Max { args: vec![a, b] }
    }

    pub fn two_point(event: Event, s: Rational, t: Rational) -> Result<Self> {
        if s >= t {
            return Err(Error::InvalidParameter("two-point stopping needs s < t".into()));
        }
        Ok(StoppingSpec::TwoPoint { event, s, t })
    }

    fn children(&self) -> &[StoppingSpec] {
        match self {
            StoppingSpec::Min { args } | StoppingSpec::Max { args } => args,
            _ => &[],
        }
    }

    pub fn depth(&self) -> usize {
        1 + self.children().iter().map(|c| c.depth()).max().unwrap_or(0)
    }

    /// Structurally determined by the path observed so far (and `U`).
    pub fn is_nonanticipating(&self) -> bool {
        match self {
            StoppingSpec::ApproachLiminfAbs { .. } => false,
            _ => self.children().iter().all(|c| c.is_nonanticipating()),
        }
    }

    pub fn uses_uniform(&self) -> bool {
        matches!(self, StoppingSpec::ReciprocalU) || self.children().iter().any(|c| c.uses_uniform())
    }

    /// Upper bound valid on every atom, read off the expression alone.
    pub fn static_bound(&self, space: &CountableSpace) -> Option<ExtTime> {
        match self {
            StoppingSpec::Const { t } => Some(t.clone()),
            StoppingSpec::TwoPoint { t, .. } => Some(ExtTime::Finite(t.clone())),
            StoppingSpec::ReciprocalU => {
                space.uniform_parts().map(|(_, m, _)| ExtTime::Finite(int(2 * m as i64)))
            }
            StoppingSpec::Min { args } => args.iter().filter_map(|a| a.static_bound(space)).min(),
            StoppingSpec::Max { args } => {
                args.iter().map(|a| a.static_bound(space)).collect::<Option<Vec<_>>>()?.into_iter().max()
            }
            _ => None,
        }
        .filter(|b| b.is_finite())
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            StoppingSpec::TwoPoint { s, t, .. } if s >= t => {
                Err(Error::InvalidParameter("two-point stopping needs s < t".into()))
            }
            StoppingSpec::Min { args } | StoppingSpec::Max { args } if args.is_empty() => {
                Err(Error::InvalidParameter("min/max need at least one argument".into()))
            }
            StoppingSpec::Const { t: ExtTime::Finite(t) } if t.is_negative() => {
                Err(Error::InvalidParameter("constant times must be nonnegative".into()))
            }
            StoppingSpec::HitAbsBelow { after, .. } if after.is_negative() => {
                Err(Error::InvalidParameter("`after` must be nonnegative".into()))
            }
            _ => self.children().iter().try_for_each(|c| c.validate()),
        }
    }
}

impl fmt::Display for StoppingSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |f: &mut fmt::Formatter<'_>, name: &str, args: &[StoppingSpec]| {
            write!(f, "{name}(")?;
            for (i, a) in args.iter().enumerate() {
                if i > 0 {
                    f.write_str(", ")?;
                }
                write!(f, "{a}")?;
            }
            f.write_str(")")
        };
        match self {
            StoppingSpec::Const { t } => write!(f, "const({t})"),
            StoppingSpec::HitAbove { level, strict } => {
                write!(f, "hit_above{}({})", if *strict { "_strict" } else { "" }, fmt_rational(level))
            }
            StoppingSpec::HitAbsBelow { level, after } => {
                write!(f, "hit_abs_below({}, after {})", fmt_rational(level), fmt_rational(after))
            }
            StoppingSpec::HitAbsAbove { level } => write!(f, "hit_abs_above({})", fmt_rational(level)),
            StoppingSpec::TwoPoint { event, s, t } => {
                let ev = match event {
                    Event::Atoms { ids } => format!("atoms{ids:?}"),
                    Event::ValueIn { values } => {
                        format!("X_s in {{{}}}", values.iter().map(fmt_rational).collect::<Vec<_>>().join(", "))
                    }
                };
                write!(f, "two_point({ev}, {}, {})", fmt_rational(s), fmt_rational(t))
            }
            StoppingSpec::Min { args } => join(f, "min", args),
            StoppingSpec::Max { args } => join(f, "max", args),
            StoppingSpec::ReciprocalU => f.write_str("1/U"),
            StoppingSpec::ApproachLiminfAbs { tolerance } => {
                write!(f, "approach_liminf_abs({})", fmt_rational(tolerance))
            }
        }
    }
}

/// What a stopping rule gets to look at on one atom.
#[derive(Debug, Clone, Copy)]
pub struct Observation<'a> {
    pub path: &'a PiecewiseConstantPath,
    pub uniform: Option<&'a Rational>,
    pub atom: Option<AtomId>,
}

impl<'a> Observation<'a> {
    /// A representative unenumerated atom: no identity, no uniform value.
    pub fn tail(path: &'a PiecewiseConstantPath) -> Self {
        Observation { path, uniform: None, atom: None }
    }
}

fn first_time(path: &PiecewiseConstantPath, from: &Rational, cond: impl Fn(&Rational) -> bool) -> ExtTime {
    if cond(path.value_at(from)) {
        return ExtTime::Finite(from.clone());
    }
    path.jumps()
        .iter()
        .find(|(t, v)| t > from && cond(v))
        .map_or(ExtTime::Infinite, |(t, _)| ExtTime::Finite(t.clone()))
}

pub fn evaluate_on(spec: &StoppingSpec, obs: &Observation<'_>) -> Result<ExtTime> {
    let zero = int(0);
    Ok(match spec {
        StoppingSpec::Const { t } => t.clone(),
        StoppingSpec::HitAbove { level, strict } => {
            first_time(obs.path, &zero, |v| if *strict { v > level } else { v >= level })
        }
        StoppingSpec::HitAbsAbove { level } => first_time(obs.path, &zero, |v| &v.abs() >= level),
        StoppingSpec::HitAbsBelow { level, after } => first_time(obs.path, after, |v| &v.abs() <= level),
        StoppingSpec::TwoPoint { event, s, t } => {
            if s >= t {
                return Err(Error::InvalidParameter("two-point stopping needs s < t".into()));
            }
            let inside = match event {
                Event::Atoms { ids } => obs.atom.is_some_and(|id| ids.contains(&id)),
                Event::ValueIn { values } => values.contains(obs.path.value_at(s)),
            };
            ExtTime::Finite(if inside { t.clone() } else { s.clone() })
        }
        StoppingSpec::Min { args } | StoppingSpec::Max { args } => {
            let is_min = matches!(spec, StoppingSpec::Min { .. });
            let mut acc: Option<ExtTime> = None;
            for a in args {
                let v = evaluate_on(a, obs)?;
                acc = Some(match acc {
                    None => v,
                    Some(prev) if is_min => prev.min_of(v),
                    Some(prev) => prev.max_of(v),
                });
            }
            acc.ok_or_else(|| Error::InvalidParameter("min/max need at least one argument".into()))?
        }
        StoppingSpec::ReciprocalU => {
            let u = obs.uniform.ok_or(Error::MissingUniform)?;
            if !u.is_positive() {
                return Err(Error::InvalidParameter("uniform value must be positive".into()));
            }
            ExtTime::Finite(u.recip())
        }
        StoppingSpec::ApproachLiminfAbs { tolerance } => {
            let limit = obs.path.terminal().abs();
            first_time(obs.path, &zero, |v| &(v.abs() - &limit).abs() <= tolerance)
        }
    })
}

pub fn evaluate(spec: &StoppingSpec, process: &PathProcess, atom: &Atom) -> Result<ExtTime> {
    let path = process.path(atom)?;
    evaluate_on(spec, &Observation { path: &path, uniform: atom.uniform.as_ref(), atom: Some(atom.id) })
}

/// `X_{τ(ω)}(ω)`, using the limit where `τ = ∞`.
pub fn stopped_value(process: &PathProcess, spec: &StoppingSpec, atom: &Atom) -> Result<Rational> {
    let path = process.path(atom)?;
    let tau = evaluate_on(spec, &Observation { path: &path, uniform: atom.uniform.as_ref(), atom: Some(atom.id) })?;
    match tau {
        ExtTime::Finite(t) => Ok(path.value_at(&t).clone()),
        ExtTime::Infinite if process.is_terminating() => Ok(path.terminal().clone()),
        ExtTime::Infinite => Err(Error::NotTerminating),
    }
}

/// `X_τ` as a random variable. When the process has a tail model and the
/// rule does not anticipate, unenumerated atoms stop where the representative
/// stops, which makes the tail exact.
pub fn stopped_value_rv(process: &PathProcess, spec: &StoppingSpec) -> RandomVariable {
    let p = process.clone();
    let rule = spec.clone();
    let rv = RandomVariable::new(move |a| stopped_value(&p, &rule, a));
    let Some(tail) = process.tail().filter(|_| spec.is_nonanticipating()).cloned() else {
        return rv;
    };
    let cut = move |uniform: Option<&Rational>, rule: &StoppingSpec| -> Option<(u64, Rational)> {
        let obs = Observation { path: &tail.representative, uniform, atom: None };
        match evaluate_on(rule, &obs).ok()? {
            ExtTime::Finite(t) => Some(((tail.depth_for)(&t), tail.representative.value_at(&t).clone())),
            ExtTime::Infinite => None,
        }
    };
    if process.space().uniform_parts().is_some() {
        let rule = spec.clone();
        rv.with_tail(TailBehavior::PerUniform(std::sync::Arc::new(move |u| cut(Some(u), &rule))))
    } else {
        match cut(None, spec) {
            Some((depth, value)) => rv.with_tail(TailBehavior::ConstantBeyond { depth, value }),
            None => rv,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AdaptednessWitness {
    pub atoms: (AtomId, AtomId),
    pub time: ExtTime,
    pub taus: (ExtTime, ExtTime),
}

impl AdaptednessWitness {
    /// Re-derives the disagreement from scratch.
    pub fn replay(&self, spec: &StoppingSpec, process: &PathProcess, depth: u64) -> Result<bool> {
        let ExtTime::Finite(t) = &self.time else { return Ok(false) };
        let atoms = candidate_atoms(process, depth);
        let find = |id| atoms.iter().find(|a| a.id == id).cloned().ok_or(Error::UnknownAtom(id));
        let (a, b) = (find(self.atoms.0)?, find(self.atoms.1)?);
        let same_view = observation_key(process, &a, t)? == observation_key(process, &b, t)?;
        let ta = evaluate(spec, process, &a)?;
        let tb = evaluate(spec, process, &b)?;
        Ok(same_view && ta.le(t) != tb.le(t))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Adaptedness {
    Adapted,
    NotAdapted,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AdaptednessReport {
    pub verdict: Adaptedness,
    pub witness: Option<AdaptednessWitness>,
    pub atoms_checked: usize,
    pub times_checked: usize,
}

type ObservationKey = (Rational, Vec<(Rational, Rational)>, Option<Rational>);

/// What is known about an atom at time `t`: the path on `[0, t]`, and `U`
/// once the reveal time has passed.
fn observation_key(process: &PathProcess, atom: &Atom, t: &Rational) -> Result<ObservationKey> {
    let path = process.path(atom)?;
    let (initial, jumps) = path.prefix(t);
    let revealed = match (process.space().uniform_parts(), &atom.uniform) {
        (Some((_, _, reveal)), Some(u)) => {
            if evaluate(reveal, process, atom)?.le(t) {
                Some(u.clone())
            } else {
                None
            }
        }
        _ => None,
    };
    Ok((initial.clone(), jumps.to_vec(), revealed))
}

fn candidate_atoms(process: &PathProcess, depth: u64) -> Vec<Atom> {
    let mut atoms: Vec<Atom> = process.space().enumerate(depth).into_iter().map(|(a, _)| a).collect();
    atoms.extend(process.space().persistent_atoms());
    atoms
}

/// Pairwise replay over the enumerated atoms (plus the never-enumerated
/// persistent atoms) at every grid time: atoms that look the same at `t`
/// must agree on `{τ ≤ t}`.
pub fn adaptedness_check(
    spec: &StoppingSpec,
    process: &PathProcess,
    grid: &[Rational],
    depth: u64,
) -> Result<AdaptednessReport> {
    let atoms = candidate_atoms(process, depth);
    let taus: Vec<ExtTime> = atoms.iter().map(|a| evaluate(spec, process, a)).collect::<Result<_>>()?;
    let mut times: Vec<Rational> = grid.to_vec();
    times.sort();
    times.dedup();
    for t in &times {
        let mut seen: HashMap<ObservationKey, usize> = HashMap::new();
        for (i, atom) in atoms.iter().enumerate() {
            let key = observation_key(process, atom, t)?;
            match seen.get(&key) {
                Some(&j) if taus[j].le(t) != taus[i].le(t) => {
                    return Ok(AdaptednessReport {
                        verdict: Adaptedness::NotAdapted,
                        witness: Some(AdaptednessWitness {
                            atoms: (atoms[j].id, atom.id),
                            time: ExtTime::Finite(t.clone()),
                            taus: (taus[j].clone(), taus[i].clone()),
                        }),
                        atoms_checked: atoms.len(),
                        times_checked: times.len(),
                    });
                }
                Some(_) => {}
                None => {
                    seen.insert(key, i);
                }
            }
        }
    }
    Ok(AdaptednessReport {
        verdict: Adaptedness::Adapted,
        witness: None,
        atoms_checked: atoms.len(),
        times_checked: times.len(),
    })
}

/// Label of the class that looks like the tail representative.
pub const TAIL_CLASS: &str = "tail-class";

fn key_label(key: &ObservationKey) -> String {
    let (initial, jumps, u) = key;
    let mut s = fmt_rational(initial);
    for (t, v) in jumps {
        s.push_str(&format!(";{}:{}", fmt_rational(t), fmt_rational(v)));
    }
    if let Some(u) = u {
        s.push_str(&format!(";U={}", fmt_rational(u)));
    }
    s
}

/// Partition of the atoms enumerated at `depth` by what is observable at
/// time `t`. On infinite spaces the atoms that look like the tail
/// representative share the label [`TAIL_CLASS`]; together with the
/// unenumerated remainder they form one observation class, provided `depth`
/// is at least the tail model's depth for `t`.
pub fn observation_partition(process: &PathProcess, t: &Rational, depth: u64) -> Result<Partition> {
    let infinite = process.space().max_level().is_none();
    if infinite && process.space().uniform_parts().is_some() {
        return Err(Error::Unsupported("observation classes on an infinite randomized space".into()));
    }
    let tail_key = match (infinite, process.tail()) {
        (false, _) => None,
        (true, Some(tail)) => {
            if (tail.depth_for)(t) > depth {
                return Err(Error::InvalidParameter(format!(
                    "depth {depth} is too shallow to separate the tail at time {}",
                    fmt_rational(t)
                )));
            }
            let (initial, jumps) = tail.representative.prefix(t);
            Some((initial.clone(), jumps.to_vec(), None))
        }
        (true, None) => return Err(Error::IndeterminateTail("no tail model".into())),
    };
    let mut labels: HashMap<AtomId, String> = HashMap::new();
    for (atom, _) in process.space().enumerate(depth) {
        let key = observation_key(process, &atom, t)?;
        let label = if tail_key.as_ref() == Some(&key) { TAIL_CLASS.to_string() } else { key_label(&key) };
        labels.insert(atom.id, label);
    }
    Ok(Partition::by_key(process.space(), depth, |a| labels[&a.id].clone()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "level", rename_all = "snake_case")]
pub enum FinitenessCertificate {
    /// `τ ≤ u` everywhere.
    Bounded {
        #[serde(with = "crate::rational::serde_rational")]
        u: Rational,
    },
    /// Finite everywhere with no uniform bound claimed.
    ExactFinite,
    /// `P(τ = ∞) ∈ [lower, upper]` with `lower > 0`.
    ExactNotFinite {
        #[serde(with = "crate::rational::serde_rational")]
        lower: Rational,
        #[serde(with = "crate::rational::serde_rational")]
        upper: Rational,
    },
    /// Only `P(τ ≤ H)` is known.
    HorizonLimited { p_stopped: f64, horizon: u64 },
    /// Neither finiteness nor positive mass at infinity could be shown.
    Unresolved {
        #[serde(with = "crate::rational::serde_rational")]
        lower: Rational,
        #[serde(with = "crate::rational::serde_rational")]
        upper: Rational,
    },
}

impl FinitenessCertificate {
    pub fn is_finite(&self) -> bool {
        matches!(self, FinitenessCertificate::Bounded { .. } | FinitenessCertificate::ExactFinite)
    }

    pub fn bound(&self) -> Option<&Rational> {
        match self {
            FinitenessCertificate::Bounded { u } => Some(u),
            _ => None,
        }
    }
}

/// Tightest certifiable finiteness level at working depth `depth`.
///
/// Unenumerated atoms follow the tail representative until they jump, so a
/// nonanticipating rule that stops the representative at `T` stops every
/// atom beyond depth `depth_for(T)` at `T` as well.
pub fn finiteness_check(spec: &StoppingSpec, process: &PathProcess, depth: u64) -> Result<FinitenessCertificate> {
    spec.validate()?;
    let space = process.space();
    if let Some(ExtTime::Finite(u)) = spec.static_bound(space) {
        return Ok(FinitenessCertificate::Bounded { u });
    }
    let levels: Vec<Option<Rational>> = match space.uniform_levels() {
        Some(grid) => grid.into_iter().map(Some).collect(),
        None => vec![None],
    };
    let mut work_depth = depth.max(1);
    let mut tail_time: Option<ExtTime> = None;
    let infinite_space = space.max_level().is_none();
    if infinite_space {
        match process.tail().filter(|_| spec.is_nonanticipating()) {
            Some(tail) => {
                let mut worst = ExtTime::Finite(int(0));
                for u in &levels {
                    let obs = Observation { path: &tail.representative, uniform: u.as_ref(), atom: None };
                    let t = evaluate_on(spec, &obs)?;
                    if let ExtTime::Finite(t) = &t {
                        work_depth = work_depth.max((tail.depth_for)(t));
                    }
                    worst = worst.max_of(t);
                }
                tail_time = Some(worst);
            }
            None => tail_time = None,
        }
    }
    let mut inf_mass = int(0);
    let mut max_time = int(0);
    for (atom, w) in space.enumerate(work_depth) {
        match evaluate(spec, process, &atom)? {
            ExtTime::Finite(t) => {
                if t > max_time {
                    max_time = t;
                }
            }
            ExtTime::Infinite => inf_mass += w,
        }
    }
    let residual = if infinite_space { space.residual(work_depth) } else { int(0) };
    let tail_finite = match &tail_time {
        Some(ExtTime::Finite(t)) => {
            if *t > max_time {
                max_time = t.clone();
            }
            true
        }
        Some(ExtTime::Infinite) => false,
        None => !infinite_space,
    };
    if inf_mass.is_zero() && tail_finite {
        return Ok(FinitenessCertificate::Bounded { u: max_time });
    }
    let lower = if matches!(tail_time, Some(ExtTime::Infinite)) {
        &inf_mass + space.persistent_mass_floor(work_depth)
    } else {
        inf_mass.clone()
    };
    let upper = &inf_mass + &residual;
    if lower.is_positive() {
        Ok(FinitenessCertificate::ExactNotFinite { lower, upper })
    } else {
        Ok(FinitenessCertificate::Unresolved { lower, upper })
    }
}

/// A base space enlarged by an independent uniform `U` on the grid
/// `(2k−1)/(2m)`, observable from the reveal time on.
#[derive(Debug, Clone)]
pub struct UniformExtension {
    space: CountableSpace,
}

impl UniformExtension {
    pub fn space(&self) -> &CountableSpace {
        &self.space
    }

    pub fn base(&self) -> &CountableSpace {
        self.space.uniform_parts().expect("uniform extension").0
    }

    pub fn levels(&self) -> u64 {
        self.space.uniform_parts().expect("uniform extension").1
    }

    pub fn reveal(&self) -> &StoppingSpec {
        self.space.uniform_parts().expect("uniform extension").2
    }

    pub fn grid(&self) -> Vec<Rational> {
        self.space.uniform_levels().expect("uniform extension")
    }

    /// Lifts a process on the base space; paths ignore `U`.
    pub fn lift(&self, process: &PathProcess) -> PathProcess {
        process.on_space(self.space.clone())
    }
}

pub fn extend_with_uniform(space: &CountableSpace, reveal: StoppingSpec, levels: u64) -> Result<UniformExtension> {
    if levels == 0 {
        return Err(Error::InvalidParameter("uniform extension needs at least one level".into()));
    }
    if space.uniform_parts().is_some() {
        return Err(Error::InvalidParameter("space already carries a uniform variable".into()));
    }
    if reveal.uses_uniform() {
        return Err(Error::InvalidParameter("reveal time cannot depend on U itself".into()));
    }
    reveal.validate()?;
    Ok(UniformExtension { space: CountableSpace::uniform(space.clone(), levels, reveal) })
}

/// `U ≤ level` as an indicator.
pub fn uniform_at_most(level: Rational) -> impl Fn(&Atom) -> bool + Send + Sync {
    move |a| a.uniform.as_ref().is_some_and(|u| *u <= level)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::{cherny_atom, cherny_infinity_atom, expectation, ExpectationPolicy, ExpectationResult, Outcome};
    use crate::process::{ProcessKind, TailModel};
    use crate::rational::ratio;

    fn cherny() -> PathProcess {
        PathProcess::new(CountableSpace::cherny(), ProcessKind::Terminating, |a| match a.outcome {
            Outcome::Jump { sigma: Some(n), sign } => {
                let n = n as i64;
                Ok(PiecewiseConstantPath::single_jump(int(0), int(n), int(i64::from(sign) * n * n)))
            }
            _ => Ok(PiecewiseConstantPath::constant(int(0))),
        })
        .with_tail(TailModel::integer_epochs(PiecewiseConstantPath::constant(int(0))))
    }

    #[test]
    fn hitting_abs_one_is_the_jump_epoch() {
        let p = cherny();
        let spec = StoppingSpec::hit_abs_above(int(1));
        assert_eq!(evaluate(&spec, &p, &cherny_atom(4, 1)).unwrap(), ExtTime::Finite(int(4)));
        assert_eq!(evaluate(&spec, &p, &cherny_infinity_atom(-1)).unwrap(), ExtTime::Infinite);
    }

    #[test]
    fn two_point_picks_by_membership() {
        let p = cherny();
        let a = cherny_atom(1, 1);
        let spec = StoppingSpec::two_point(Event::Atoms { ids: vec![a.id] }, int(1), int(2)).unwrap();
        assert_eq!(evaluate(&spec, &p, &a).unwrap(), ExtTime::Finite(int(2)));
        assert_eq!(evaluate(&spec, &p, &cherny_atom(1, -1)).unwrap(), ExtTime::Finite(int(1)));
        assert!(StoppingSpec::two_point(Event::Atoms { ids: vec![] }, int(2), int(2)).is_err());
    }

    #[test]
    fn reciprocal_needs_uniform() {
        let p = cherny();
        let spec = StoppingSpec::ReciprocalU;
        assert_eq!(evaluate(&spec, &p, &cherny_atom(1, 1)), Err(Error::MissingUniform));
        let mut a = cherny_atom(1, 1);
        a.uniform = Some(ratio(1, 4));
        assert_eq!(evaluate(&spec, &p, &a).unwrap(), ExtTime::Finite(int(4)));
    }

    #[test]
    fn stopped_values_follow_jumps() {
        let p = cherny();
        let spec = StoppingSpec::hit_abs_above(int(1));
        assert_eq!(stopped_value(&p, &spec, &cherny_atom(3, -1)).unwrap(), int(-9));
        assert_eq!(stopped_value(&p, &spec, &cherny_infinity_atom(1)).unwrap(), int(0));
        assert_eq!(stopped_value(&p, &StoppingSpec::at(int(0)), &cherny_atom(2, 1)).unwrap(), int(0));
    }

    #[test]
    fn hitting_time_is_adapted_on_cherny() {
        let p = cherny();
        let grid = p.event_grid(20, &int(20)).unwrap();
        let r = adaptedness_check(&StoppingSpec::hit_abs_above(int(1)), &p, &grid, 20).unwrap();
        assert_eq!(r.verdict, Adaptedness::Adapted);
        assert_eq!(r.atoms_checked, 42);
    }

    #[test]
    fn constant_is_adapted_and_bounded() {
        let p = cherny();
        let spec = StoppingSpec::at(int(5));
        let r = adaptedness_check(&spec, &p, &[int(0), int(5), int(6)], 6).unwrap();
        assert_eq!(r.verdict, Adaptedness::Adapted);
        assert_eq!(finiteness_check(&spec, &p, 3).unwrap(), FinitenessCertificate::Bounded { u: int(5) });
        let m = StoppingSpec::min(StoppingSpec::hit_abs_above(int(1)), StoppingSpec::at(int(7)));
        assert_eq!(finiteness_check(&m, &p, 3).unwrap(), FinitenessCertificate::Bounded { u: int(7) });
    }

    #[test]
    fn hitting_time_is_not_finite_on_cherny() {
        let p = cherny();
        let n = 10;
        let cert = finiteness_check(&StoppingSpec::hit_abs_above(int(1)), &p, n).unwrap();
        let FinitenessCertificate::ExactNotFinite { lower, upper } = cert else { panic!("{cert:?}") };
        let residual = CountableSpace::cherny().residual(n);
        assert_eq!(upper, residual);
        assert!(lower.is_positive() && lower <= upper);
    }

    #[test]
    fn tail_argument_bounds_hit_below() {
        // At time 1 the unjumped atoms sit at 0 and σ = 1 sits at ±1.
        let p = cherny();
        let spec = StoppingSpec::hit_abs_below(int(1), int(1));
        assert_eq!(finiteness_check(&spec, &p, 1).unwrap(), FinitenessCertificate::Bounded { u: int(1) });
        // Atoms with σ ∈ {2, 3} sit at 4 and 9 from time 3 on and never return.
        let late = StoppingSpec::hit_abs_below(int(1), int(3));
        let FinitenessCertificate::ExactNotFinite { lower, .. } = finiteness_check(&late, &p, 1).unwrap() else {
            panic!("expected positive mass at infinity")
        };
        assert_eq!(lower, ratio(13, 72));
    }

    #[test]
    fn uniform_extension_grid_and_marginals() {
        let ext = extend_with_uniform(&CountableSpace::cherny(), StoppingSpec::at(int(0)), 4).unwrap();
        assert_eq!(ext.grid(), vec![ratio(1, 8), ratio(3, 8), ratio(5, 8), ratio(7, 8)]);
        let lvl = ext.space().level(2);
        assert_eq!(lvl.len(), 8);
        assert!(lvl.iter().all(|(_, w)| *w == ratio(1, 64)));
        assert!(extend_with_uniform(&CountableSpace::cherny(), StoppingSpec::at(int(0)), 0).is_err());
    }

    #[test]
    fn product_weight_event() {
        // Oracle: P(σ = 2) · P(U ≤ 1/2) = (1/8)(1/2).
        let ext = extend_with_uniform(&CountableSpace::cherny(), StoppingSpec::at(int(0)), 4).unwrap();
        let small_u = uniform_at_most(ratio(1, 2));
        let rv = RandomVariable::new(move |a| {
            let hit = matches!(a.outcome, Outcome::Jump { sigma: Some(2), .. }) && small_u(a);
            Ok(int(i64::from(hit)))
        })
        .with_tail(TailBehavior::ConstantBeyond { depth: 2, value: int(0) });
        let r = expectation(ext.space(), &rv, &ExpectationPolicy::default()).unwrap();
        assert_eq!(r, ExpectationResult::Exact(ratio(1, 16)));
    }

    #[test]
    fn spec_json_shape() {
        let spec = StoppingSpec::min(StoppingSpec::hit_above(ratio(2, 5)), StoppingSpec::at(int(5)));
        let json = serde_json::to_string(&spec).unwrap();
        assert_eq!(
            json,
            r#"{"op":"min","args":[{"op":"hit_above","level":"2/5","strict":false},{"op":"const","t":"5/1"}]}"#
        );
        let back: StoppingSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, spec);
        let inf: StoppingSpec = serde_json::from_str(r#"{"op":"const","t":"inf"}"#).unwrap();
        assert_eq!(inf, StoppingSpec::never());
    }
}
