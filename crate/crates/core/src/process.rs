//! Right-continuous piecewise-constant paths and the processes built from them.

use std::fmt;
use std::sync::Arc;

use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{Atom, CountableSpace, Outcome, RandomVariable, TailBehavior};
use crate::rational::{floor_u64, int, ratio, Rational};
use crate::stopping::{self, StoppingSpec};
use crate::time::ExtTime;

/// `initial` on `[0, t₁)`, then the value of the last jump at or before `t`.
///
/// Jumps are stored canonically: strictly increasing times, and every jump
/// changes the value (no-op jumps are dropped on construction).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PiecewiseConstantPath {
    #[serde(with = "crate::rational::serde_rational")]
    initial: Rational,
    #[serde(with = "jump_list")]
    jumps: Vec<(Rational, Rational)>,
}

impl PiecewiseConstantPath {
    pub fn new(initial: Rational, jumps: Vec<(Rational, Rational)>) -> Result<Self> {
        let mut canonical: Vec<(Rational, Rational)> = Vec::with_capacity(jumps.len());
        let mut current = initial.clone();
        let mut last_time: Option<Rational> = None;
        for (t, v) in jumps {
            if t.is_negative() {
                return Err(Error::InvalidParameter("jump times must be nonnegative".into()));
            }
            if last_time.as_ref().is_some_and(|s| &t <= s) {
                return Err(Error::InvalidParameter("jump times must be strictly increasing".into()));
            }
            last_time = Some(t.clone());
            if v != current {
                current = v.clone();
                canonical.push((t, v));
            }
        }
        // A jump at time 0 replaces the initial value.
        let (initial, canonical) = match canonical.first() {
            Some((t, v)) if t.is_zero() => (v.clone(), canonical[1..].to_vec()),
            _ => (initial, canonical),
        };
        Ok(PiecewiseConstantPath { initial, jumps: canonical })
    }

    pub fn constant(value: Rational) -> Self {
        PiecewiseConstantPath { initial: value, jumps: Vec::new() }
    }

    /// Single jump to `value` at time `at` (dropped when `value` equals `initial`).
    pub fn single_jump(initial: Rational, at: Rational, value: Rational) -> Self {
        Self::new(initial, vec![(at, value)]).expect("single nonnegative jump")
    }

    pub fn initial(&self) -> &Rational {
        &self.initial
    }

    pub fn jumps(&self) -> &[(Rational, Rational)] {
        &self.jumps
    }

    pub fn jump_times(&self) -> impl Iterator<Item = &Rational> {
        self.jumps.iter().map(|(t, _)| t)
    }

    pub fn value_at(&self, t: &Rational) -> &Rational {
        let idx = self.jumps.partition_point(|(s, _)| s <= t);
        if idx == 0 {
            &self.initial
        } else {
            &self.jumps[idx - 1].1
        }
    }

    pub fn value_at_ext(&self, t: &ExtTime) -> &Rational {
        match t {
            ExtTime::Finite(t) => self.value_at(t),
            ExtTime::Infinite => self.terminal(),
        }
    }

    pub fn terminal(&self) -> &Rational {
        self.jumps.last().map_or(&self.initial, |(_, v)| v)
    }

    pub fn stopped_at(&self, tau: &ExtTime) -> Self {
        let jumps = match tau {
            ExtTime::Infinite => self.jumps.clone(),
            ExtTime::Finite(t) => self.jumps.iter().take_while(|(s, _)| s <= t).cloned().collect(),
        };
        PiecewiseConstantPath { initial: self.initial.clone(), jumps }
    }

    /// The path observed on `[0, t]`, in canonical form.
    pub fn prefix(&self, t: &Rational) -> (&Rational, &[(Rational, Rational)]) {
        let idx = self.jumps.partition_point(|(s, _)| s <= t);
        (&self.initial, &self.jumps[..idx])
    }

    pub fn agrees_on(&self, other: &Self, t: &Rational) -> bool {
        self.prefix(t) == other.prefix(t)
    }
}

mod jump_list {
    use super::*;
    use crate::rational::{fmt_rational, parse_rational};
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[(Rational, Rational)], s: S) -> std::result::Result<S::Ok, S::Error> {
        let pairs: Vec<[String; 2]> = v.iter().map(|(t, x)| [fmt_rational(t), fmt_rational(x)]).collect();
        pairs.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<(Rational, Rational)>, D::Error> {
        let pairs = Vec::<[String; 2]>::deserialize(d)?;
        pairs
            .iter()
            .map(|[t, x]| Ok((parse_rational(t).map_err(serde::de::Error::custom)?, parse_rational(x).map_err(serde::de::Error::custom)?)))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ProcessKind {
    /// Every path has finitely many jumps, so limits exist and are exact.
    Terminating,
    /// Paths are only known up to `horizon`.
    Generative { horizon: u64 },
}

pub type PathFn = Arc<dyn Fn(&Atom) -> Result<PiecewiseConstantPath> + Send + Sync>;

/// How unenumerated atoms behave: at depth `N` they all follow
/// `representative` on `[0, agree_until(N))`.
#[derive(Clone)]
pub struct TailModel {
    pub representative: PiecewiseConstantPath,
    /// Smallest depth whose unenumerated atoms agree with the representative
    /// on `[0, t]`.
    pub depth_for: Arc<dyn Fn(&Rational) -> u64 + Send + Sync>,
}

impl fmt::Debug for TailModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TailModel").field("representative", &self.representative).finish()
    }
}

impl TailModel {
    /// Tail atoms at depth `N` stay on the representative path until time `N + 1`.
    pub fn integer_epochs(representative: PiecewiseConstantPath) -> Self {
        TailModel { representative, depth_for: Arc::new(|t| floor_u64(t).max(1)) }
    }
}

#[derive(Clone)]
pub struct PathProcess {
    space: CountableSpace,
    paths: PathFn,
    kind: ProcessKind,
    tail: Option<TailModel>,
}

impl fmt::Debug for PathProcess {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PathProcess")
            .field("space", &self.space)
            .field("kind", &self.kind)
            .field("tail", &self.tail)
            .finish()
    }
}

impl PathProcess {
    pub fn new(
        space: CountableSpace,
        kind: ProcessKind,
        paths: impl Fn(&Atom) -> Result<PiecewiseConstantPath> + Send + Sync + 'static,
    ) -> Self {
        PathProcess { space, paths: Arc::new(paths), kind, tail: None }
    }

    pub fn with_tail(mut self, tail: TailModel) -> Self {
        self.tail = Some(tail);
        self
    }

    pub fn with_kind(mut self, kind: ProcessKind) -> Self {
        self.kind = kind;
        self
    }

    /// Same paths over another space whose atoms carry the same outcomes
    /// (used for uniform extensions).
    pub fn on_space(&self, space: CountableSpace) -> Self {
        PathProcess { space, ..self.clone() }
    }

    pub fn space(&self) -> &CountableSpace {
        &self.space
    }

    pub fn kind(&self) -> ProcessKind {
        self.kind
    }

    pub fn is_terminating(&self) -> bool {
        self.kind == ProcessKind::Terminating
    }

    pub fn tail(&self) -> Option<&TailModel> {
        self.tail.as_ref()
    }

    pub fn path(&self, atom: &Atom) -> Result<PiecewiseConstantPath> {
        (self.paths)(atom)
    }

    pub fn value_at(&self, atom: &Atom, t: &Rational) -> Result<Rational> {
        Ok(self.path(atom)?.value_at(t).clone())
    }

    pub fn limit_at_infinity(&self, atom: &Atom) -> Result<Rational> {
        if !self.is_terminating() {
            return Err(Error::NotTerminating);
        }
        Ok(self.path(atom)?.terminal().clone())
    }

    /// For eventually constant paths this is `|X_∞|`.
    pub fn liminf_abs(&self, atom: &Atom) -> Result<Rational> {
        Ok(self.limit_at_infinity(atom)?.abs())
    }

    /// `Y^τ_t = Y_{τ∧t}`.
    pub fn stop(&self, spec: &StoppingSpec) -> Result<PathProcess> {
        // Surface evaluation errors eagerly on the first enumerated layer.
        let probe = self.space.max_level().unwrap_or(1);
        for (atom, _) in self.space.enumerate(probe) {
            stopping::evaluate(spec, self, &atom)?;
        }
        let base = self.clone();
        let rule = spec.clone();
        let tail = match &self.tail {
            Some(t) if spec.is_nonanticipating() => {
                match stopping::evaluate_on(spec, &stopping::Observation::tail(&t.representative)) {
                    Ok(tau) => Some(TailModel {
                        representative: t.representative.stopped_at(&tau),
                        depth_for: t.depth_for.clone(),
                    }),
                    Err(_) => None,
                }
            }
            _ => None,
        };
        let kind = match (self.kind, spec.static_bound(&self.space)) {
            (ProcessKind::Generative { horizon }, Some(ExtTime::Finite(u))) if u <= int(horizon as i64) => {
                ProcessKind::Terminating
            }
            (kind, _) => kind,
        };
        Ok(PathProcess {
            space: self.space.clone(),
            paths: Arc::new(move |atom| {
                let tau = stopping::evaluate(&rule, &base, atom)?;
                Ok(base.path(atom)?.stopped_at(&tau))
            }),
            kind,
            tail,
        })
    }

    /// `X_t` as a random variable, with an exact tail when a tail model is known.
    pub fn value_rv(&self, t: &Rational) -> RandomVariable {
        let p = self.clone();
        let t2 = t.clone();
        let rv = RandomVariable::new(move |a| p.value_at(a, &t2));
        match &self.tail {
            Some(tail) => rv.with_tail(TailBehavior::ConstantBeyond {
                depth: (tail.depth_for)(t),
                value: tail.representative.value_at(t).clone(),
            }),
            None => rv,
        }
    }

    pub fn limit_rv(&self) -> RandomVariable {
        let p = self.clone();
        RandomVariable::new(move |a| p.limit_at_infinity(a))
    }

    pub fn liminf_abs_rv(&self) -> RandomVariable {
        let p = self.clone();
        RandomVariable::new(move |a| p.liminf_abs(a)).nonnegative()
    }

    /// `{0}` ∪ jump times of the atoms enumerated at `depth`, capped at `up_to`.
    pub fn event_times(&self, depth: u64, up_to: &Rational) -> Result<Vec<Rational>> {
        let mut times = std::collections::BTreeSet::new();
        times.insert(int(0));
        for (atom, _) in self.space.enumerate(depth) {
            for t in self.path(&atom)?.jump_times() {
                if t <= up_to {
                    times.insert(t.clone());
                }
            }
        }
        Ok(times.into_iter().collect())
    }

    /// Event times plus the midpoint of every gap between them.
    pub fn event_grid(&self, depth: u64, up_to: &Rational) -> Result<Vec<Rational>> {
        let times = self.event_times(depth, up_to)?;
        let mut grid = Vec::with_capacity(2 * times.len());
        for w in times.windows(2) {
            grid.push(w[0].clone());
            grid.push((&w[0] + &w[1]) / int(2));
        }
        if let Some(last) = times.last() {
            grid.push(last.clone());
            grid.push(last + int(1));
        }
        Ok(grid)
    }
}

/// Step rules for generative processes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKernel {
    /// ±1 with probability 1/2 each, at integer times.
    SimpleRandomWalk,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerativeProcess {
    pub kernel: StepKernel,
    pub horizon: u64,
    pub start: i64,
}

impl GenerativeProcess {
    /// Largest horizon whose `2^H` step sequences are enumerated explicitly.
    pub const ENUMERATION_LIMIT: u64 = 16;

    pub fn random_walk(horizon: u64) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::InvalidParameter("horizon must be positive".into()));
        }
        Ok(GenerativeProcess { kernel: StepKernel::SimpleRandomWalk, horizon, start: 0 })
    }

    pub fn path_from_steps(&self, steps: &[i8]) -> PiecewiseConstantPath {
        let mut x = self.start;
        let jumps = steps
            .iter()
            .enumerate()
            .map(|(i, s)| {
                x += i64::from(*s);
                (int(i as i64 + 1), int(x))
            })
            .collect();
        PiecewiseConstantPath::new(int(self.start), jumps).expect("increasing integer times")
    }

    /// Step sequence for replication `index` under `seed`; reproducible.
    pub fn sample_steps(&self, seed: u64, index: u64) -> Vec<i8> {
        use rand::Rng;
        let mut rng = crate::montecarlo::stream_rng(seed, index);
        (0..self.horizon).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect()
    }

    pub fn simulate(&self, seed: u64, index: u64) -> PiecewiseConstantPath {
        self.path_from_steps(&self.sample_steps(seed, index))
    }

    /// All `2^H` step sequences as an equally weighted finite space.
    pub fn enumerate(&self) -> Result<PathProcess> {
        if self.horizon > Self::ENUMERATION_LIMIT {
            return Err(Error::InvalidParameter(format!(
                "horizon {} exceeds the enumeration limit {}",
                self.horizon,
                Self::ENUMERATION_LIMIT
            )));
        }
        let h = self.horizon as u32;
        let w = ratio(1, 1i64 << h);
        let atoms = (0..1u64 << h)
            .map(|bits| {
                let steps = (0..h).map(|i| if bits >> (h - 1 - i) & 1 == 1 { 1 } else { -1 }).collect();
                (Outcome::Steps(steps), w.clone())
            })
            .collect();
        let space = CountableSpace::finite(atoms)?;
        let me = self.clone();
        Ok(PathProcess::new(space, ProcessKind::Generative { horizon: self.horizon }, move |a| match &a.outcome {
            Outcome::Steps(s) => Ok(me.path_from_steps(s)),
            _ => Err(Error::UnknownAtom(a.id)),
        }))
    }
}
