//! Exact probability engine over countable spaces.
//!
//! A [`CountableSpace`] enumerates its atoms level by level with exact
//! rational weights. Whatever has not been enumerated at depth `N` is
//! described by the exact residual mass `residual(N)`. Expectations are
//! computed exactly when the integrand is known to be constant on that
//! residual, truncated with an explicit bound when a tail bound is supplied,
//! and certified divergent when a nonnegative integrand's partial sums
//! exceed the requested threshold.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;

use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rational::{int, mul_fast, ratio, ExactSum, Rational};
use crate::stopping::StoppingSpec;

pub type AtomId = u64;

/// Structured outcome data carried by an atom.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    /// Jump epoch `sigma` (`None` = never) and jump sign.
    Jump { sigma: Option<u64>, sign: i8 },
    /// A sequence of ±1 increments.
    Steps(Vec<i8>),
    /// Opaque label for explicitly listed atoms.
    Label(u64),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Atom {
    pub id: AtomId,
    /// Depth at which the atom is first enumerated.
    pub level: u64,
    pub outcome: Outcome,
    /// Value of the auxiliary uniform variable on extended spaces.
    pub uniform: Option<Rational>,
}

impl Atom {
    pub fn new(id: AtomId, level: u64, outcome: Outcome) -> Self {
        Atom { id, level, outcome, uniform: None }
    }
}

#[derive(Clone)]
enum SpaceKind {
    /// `(n, ±1)` with mass `1/(4n²)`; the two never-jumping atoms live in the
    /// residual and are never enumerated.
    Cherny,
    Finite { atoms: Vec<(Atom, Rational)> },
    Uniform { base: CountableSpace, levels: u64, reveal: StoppingSpec },
}

#[derive(Clone)]
pub struct CountableSpace {
    kind: Arc<SpaceKind>,
}

impl fmt::Debug for CountableSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &*self.kind {
            SpaceKind::Cherny => f.write_str("CountableSpace::Cherny"),
            SpaceKind::Finite { atoms } => write!(f, "CountableSpace::Finite({} atoms)", atoms.len()),
            SpaceKind::Uniform { base, levels, .. } => {
                write!(f, "CountableSpace::Uniform({base:?} x {levels})")
            }
        }
    }
}

/// Atoms at some depth together with the exact mass left unenumerated.
#[derive(Debug, Clone)]
pub struct Enumeration {
    pub atoms: Vec<(Atom, Rational)>,
    pub residual: Rational,
}

impl CountableSpace {
    pub fn cherny() -> Self {
        CountableSpace { kind: Arc::new(SpaceKind::Cherny) }
    }

    /// Explicit finite space. Weights must be positive and sum to one.
    pub fn finite(atoms: Vec<(Outcome, Rational)>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidParameter("finite space needs at least one atom".into()));
        }
        let mut total = ExactSum::new();
        let mut seen = std::collections::HashSet::new();
        let mut listed = Vec::with_capacity(atoms.len());
        for (i, (outcome, w)) in atoms.into_iter().enumerate() {
            if !w.is_positive() {
                return Err(Error::InvalidParameter(format!("atom {i} has nonpositive weight")));
            }
            if !seen.insert(outcome.clone()) {
                return Err(Error::InvalidParameter(format!("atom {i} duplicates an outcome")));
            }
            total.add(&w);
            listed.push((Atom::new(i as AtomId, 1, outcome), w));
        }
        if !total.value().is_one() {
            return Err(Error::InvalidParameter(format!(
                "weights sum to {} instead of 1",
                crate::rational::fmt_rational(&total.value())
            )));
        }
        Ok(CountableSpace { kind: Arc::new(SpaceKind::Finite { atoms: listed }) })
    }

    pub fn single_atom() -> Self {
        Self::finite(vec![(Outcome::Label(0), int(1))]).expect("unit mass")
    }

    pub(crate) fn uniform(base: CountableSpace, levels: u64, reveal: StoppingSpec) -> Self {
        CountableSpace { kind: Arc::new(SpaceKind::Uniform { base, levels, reveal }) }
    }

    pub fn is_cherny(&self) -> bool {
        matches!(&*self.kind, SpaceKind::Cherny)
    }

    /// Base space, level count and reveal time for uniform extensions.
    pub fn uniform_parts(&self) -> Option<(&CountableSpace, u64, &StoppingSpec)> {
        match &*self.kind {
            SpaceKind::Uniform { base, levels, reveal } => Some((base, *levels, reveal)),
            _ => None,
        }
    }

    /// Largest level that contains atoms, for spaces that are exhausted at
    /// a finite depth.
    pub fn max_level(&self) -> Option<u64> {
        match &*self.kind {
            SpaceKind::Cherny => None,
            SpaceKind::Finite { .. } => Some(1),
            SpaceKind::Uniform { base, .. } => base.max_level(),
        }
    }

    /// Atoms first enumerated at depth `n` (depth starts at 1).
    pub fn level(&self, n: u64) -> Vec<(Atom, Rational)> {
        match &*self.kind {
            SpaceKind::Cherny => {
                if n == 0 {
                    return Vec::new();
                }
                let w = cherny_weight(n);
                vec![(cherny_atom(n, -1), w.clone()), (cherny_atom(n, 1), w)]
            }
            SpaceKind::Finite { atoms } => {
                if n == 1 {
                    atoms.clone()
                } else {
                    Vec::new()
                }
            }
            SpaceKind::Uniform { base, levels, .. } => {
                let m = *levels;
                let share = ratio(1, m as i64);
                let mut out = Vec::new();
                for (atom, w) in base.level(n) {
                    let w = &w * &share;
                    for k in 1..=m {
                        out.push((extend_atom(&atom, k, m), w.clone()));
                    }
                }
                out
            }
        }
    }

    pub fn enumerate(&self, depth: u64) -> Vec<(Atom, Rational)> {
        let top = self.max_level().map_or(depth, |m| m.min(depth));
        (1..=top).flat_map(|n| self.level(n)).collect()
    }

    /// Exact mass not covered by `enumerate(depth)`.
    pub fn residual(&self, depth: u64) -> Rational {
        match &*self.kind {
            SpaceKind::Cherny => {
                let mut covered = ExactSum::new();
                for n in 1..=depth {
                    covered.add(&ratio(1, 2 * (n as i64) * (n as i64)));
                }
                int(1) - covered.value()
            }
            SpaceKind::Finite { .. } => {
                if depth >= 1 {
                    int(0)
                } else {
                    int(1)
                }
            }
            SpaceKind::Uniform { base, .. } => base.residual(depth),
        }
    }

    /// Lower bound on the mass of atoms that are never enumerated at any
    /// depth (the never-jumping atoms of the Cherny space).
    pub fn persistent_mass_floor(&self, depth: u64) -> Rational {
        match &*self.kind {
            // Σ_{n>N} 1/(2n²) < 1/(2N).
            SpaceKind::Cherny => {
                let floor = self.residual(depth) - ratio(1, 2 * depth.max(1) as i64);
                if floor.is_negative() {
                    int(0)
                } else {
                    floor
                }
            }
            SpaceKind::Finite { .. } => int(0),
            SpaceKind::Uniform { base, .. } => base.persistent_mass_floor(depth),
        }
    }

    /// Atoms that live only in the residual at every depth.
    pub fn persistent_atoms(&self) -> Vec<Atom> {
        match &*self.kind {
            SpaceKind::Cherny => vec![cherny_infinity_atom(-1), cherny_infinity_atom(1)],
            SpaceKind::Finite { .. } => Vec::new(),
            SpaceKind::Uniform { base, levels, .. } => base
                .persistent_atoms()
                .iter()
                .flat_map(|a| (1..=*levels).map(move |k| extend_atom(a, k, *levels)))
                .collect(),
        }
    }

    pub fn find(&self, id: AtomId, depth: u64) -> Result<(Atom, Rational)> {
        self.enumerate(depth)
            .into_iter()
            .find(|(a, _)| a.id == id)
            .ok_or(Error::UnknownAtom(id))
    }

    pub fn enumerate_atoms(&self, depth: u64) -> Result<Enumeration> {
        if depth == 0 {
            return Err(Error::InvalidParameter("depth must be at least 1".into()));
        }
        Ok(Enumeration { atoms: self.enumerate(depth), residual: self.residual(depth) })
    }

    /// Grid levels `(2k-1)/(2m)` of a uniform extension.
    pub fn uniform_levels(&self) -> Option<Vec<Rational>> {
        self.uniform_parts().map(|(_, m, _)| uniform_grid(m))
    }
}

pub fn uniform_grid(m: u64) -> Vec<Rational> {
    (1..=m).map(|k| uniform_level(k, m)).collect()
}

fn uniform_level(k: u64, m: u64) -> Rational {
    Rational::new((2 * k as i64 - 1).into(), (2 * m as i64).into())
}

pub(crate) fn extend_atom(atom: &Atom, k: u64, m: u64) -> Atom {
    Atom {
        id: atom.id * m + (k - 1),
        level: atom.level,
        outcome: atom.outcome.clone(),
        uniform: Some(uniform_level(k, m)),
    }
}

fn cherny_weight(n: u64) -> Rational {
    let n = n as i64;
    ratio(1, 4 * n * n)
}

/// Atom `(n, sign)` of the Cherny space.
pub fn cherny_atom(n: u64, sign: i8) -> Atom {
    Atom::new(2 * n + u64::from(sign > 0), n, Outcome::Jump { sigma: Some(n), sign })
}

/// Never-jumping atom `(∞, sign)`; not enumerated, part of every residual.
pub fn cherny_infinity_atom(sign: i8) -> Atom {
    Atom::new(u64::from(sign > 0), u64::MAX, Outcome::Jump { sigma: None, sign })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignClass {
    Nonnegative,
    General,
}

pub type EvalFn = Arc<dyn Fn(&Atom) -> Result<Rational> + Send + Sync>;
pub type UniformTailFn = Arc<dyn Fn(&Rational) -> Option<(u64, Rational)> + Send + Sync>;
pub type TailBoundFn = Arc<dyn Fn(u64) -> Rational + Send + Sync>;

/// What a random variable is known to do on unenumerated atoms.
#[derive(Clone)]
pub enum TailBehavior {
    Unknown,
    /// Equal to `value` on every atom not enumerated at `depth`.
    ConstantBeyond { depth: u64, value: Rational },
    /// On a uniform extension: for the section at level `u`, constant beyond
    /// the returned depth (`None` when no such depth is known).
    PerUniform(UniformTailFn),
    /// Bound on `Σ |value|·mass` over the atoms left out at depth `N`.
    Bounded(TailBoundFn),
}

impl fmt::Debug for TailBehavior {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TailBehavior::Unknown => f.write_str("Unknown"),
            TailBehavior::ConstantBeyond { depth, value } => {
                write!(f, "ConstantBeyond({depth}, {value})")
            }
            TailBehavior::PerUniform(_) => f.write_str("PerUniform"),
            TailBehavior::Bounded(_) => f.write_str("Bounded"),
        }
    }
}

#[derive(Clone)]
pub struct RandomVariable {
    eval: EvalFn,
    pub sign: SignClass,
    pub tail: TailBehavior,
}

impl fmt::Debug for RandomVariable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RandomVariable").field("sign", &self.sign).field("tail", &self.tail).finish()
    }
}

impl RandomVariable {
    pub fn new(f: impl Fn(&Atom) -> Result<Rational> + Send + Sync + 'static) -> Self {
        RandomVariable { eval: Arc::new(f), sign: SignClass::General, tail: TailBehavior::Unknown }
    }

    pub fn constant(c: Rational) -> Self {
        let v = c.clone();
        let sign = if c.is_negative() { SignClass::General } else { SignClass::Nonnegative };
        RandomVariable {
            eval: Arc::new(move |_| Ok(v.clone())),
            sign,
            tail: TailBehavior::ConstantBeyond { depth: 1, value: c },
        }
    }

    pub fn nonnegative(mut self) -> Self {
        self.sign = SignClass::Nonnegative;
        self
    }

    pub fn with_tail(mut self, tail: TailBehavior) -> Self {
        self.tail = tail;
        self
    }

    pub fn eval(&self, atom: &Atom) -> Result<Rational> {
        let v = (self.eval)(atom)?;
        if self.sign == SignClass::Nonnegative && v.is_negative() {
            return Err(Error::InvalidParameter(format!(
                "random variable declared nonnegative is negative on atom {}",
                atom.id
            )));
        }
        Ok(v)
    }

    /// `a·self + b·other`.
    pub fn linear(&self, a: Rational, other: &RandomVariable, b: Rational) -> RandomVariable {
        let (f, g) = (self.eval.clone(), other.eval.clone());
        let (a2, b2) = (a.clone(), b.clone());
        let tail = match (&self.tail, &other.tail) {
            (
                TailBehavior::ConstantBeyond { depth: d1, value: v1 },
                TailBehavior::ConstantBeyond { depth: d2, value: v2 },
            ) => TailBehavior::ConstantBeyond { depth: (*d1).max(*d2), value: &a * v1 + &b * v2 },
            _ => TailBehavior::Unknown,
        };
        let sign = if self.sign == SignClass::Nonnegative
            && other.sign == SignClass::Nonnegative
            && !a.is_negative()
            && !b.is_negative()
        {
            SignClass::Nonnegative
        } else {
            SignClass::General
        };
        RandomVariable {
            eval: Arc::new(move |atom| Ok(&a2 * f(atom)? + &b2 * g(atom)?)),
            sign,
            tail,
        }
    }

    pub fn abs(&self) -> RandomVariable {
        let f = self.eval.clone();
        let tail = match &self.tail {
            TailBehavior::ConstantBeyond { depth, value } => {
                TailBehavior::ConstantBeyond { depth: *depth, value: value.abs() }
            }
            TailBehavior::PerUniform(g) => {
                let g = g.clone();
                TailBehavior::PerUniform(Arc::new(move |u| g(u).map(|(d, v)| (d, v.abs()))))
            }
            other => other.clone(),
        };
        RandomVariable { eval: Arc::new(move |a| Ok(f(a)?.abs())), sign: SignClass::Nonnegative, tail }
    }

    /// Product with an indicator; the tail becomes unknown unless it was
    /// identically zero.
    pub fn restrict(&self, pred: impl Fn(&Atom) -> bool + Send + Sync + 'static) -> RandomVariable {
        let f = self.eval.clone();
        let tail = match &self.tail {
            TailBehavior::ConstantBeyond { depth, value } if value.is_zero() => {
                TailBehavior::ConstantBeyond { depth: *depth, value: int(0) }
            }
            TailBehavior::Bounded(b) => TailBehavior::Bounded(b.clone()),
            _ => TailBehavior::Unknown,
        };
        RandomVariable {
            eval: Arc::new(move |a| if pred(a) { f(a) } else { Ok(int(0)) }),
            sign: self.sign,
            tail,
        }
    }
}

/// Kind of evidence a divergence certificate rests on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CertificateKind {
    /// Monotone partial sums over enumeration depth.
    PartialSums,
    /// Monotone lower bounds along nested refinements of the uniform grid.
    Refinement,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DivergenceCertificate {
    pub kind: CertificateKind,
    pub threshold: Rational,
    /// Depth `N` (or grid size `m` for refinements) where the threshold was crossed.
    pub depth: u64,
    pub partial_sum: Rational,
    pub growth_samples: Vec<(u64, Rational)>,
}

impl DivergenceCertificate {
    /// Re-checks the certificate's own claims: samples nondecreasing and the
    /// final sum strictly above the threshold.
    pub fn is_consistent(&self) -> bool {
        self.growth_samples.windows(2).all(|w| w[0].0 < w[1].0 && w[0].1 <= w[1].1)
            && self.partial_sum > self.threshold
            && self.growth_samples.last().is_some_and(|(n, s)| *n == self.depth && *s == self.partial_sum)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExpectationResult {
    Exact(Rational),
    Truncated { value: Rational, tail_bound: Rational },
    Divergent(DivergenceCertificate),
}

impl ExpectationResult {
    pub fn exact(&self) -> Option<&Rational> {
        match self {
            ExpectationResult::Exact(v) => Some(v),
            _ => None,
        }
    }

    pub fn is_divergent(&self) -> bool {
        matches!(self, ExpectationResult::Divergent(_))
    }

    /// Best point value (the partial sum for divergent results).
    pub fn point(&self) -> &Rational {
        match self {
            ExpectationResult::Exact(v) => v,
            ExpectationResult::Truncated { value, .. } => value,
            ExpectationResult::Divergent(c) => &c.partial_sum,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExpectationPolicy {
    pub max_depth: u64,
    pub divergence_threshold: Rational,
}

impl Default for ExpectationPolicy {
    fn default() -> Self {
        ExpectationPolicy { max_depth: 4_000_000, divergence_threshold: int(1_000_000) }
    }
}

impl ExpectationPolicy {
    pub fn with_threshold(threshold: Rational) -> Self {
        ExpectationPolicy { divergence_threshold: threshold, ..Default::default() }
    }
}

fn weighted_sum<'a>(atoms: impl Iterator<Item = &'a (Atom, Rational)>, rv: &RandomVariable) -> Result<Rational> {
    let mut acc = ExactSum::new();
    for (atom, w) in atoms {
        let v = rv.eval(atom)?;
        if !v.is_zero() {
            acc.add(&mul_fast(&v, w));
        }
    }
    Ok(acc.value())
}

/// Exact `Σ w·rv` over the atoms enumerated at `depth` (the residual is ignored).
pub fn restricted_expectation(space: &CountableSpace, rv: &RandomVariable, depth: u64) -> Result<Rational> {
    weighted_sum(space.enumerate(depth).iter(), rv)
}

/// Partial sums `S_N = Σ_{level ≤ N} w·rv` at the requested depths (ascending).
pub fn partial_sums(space: &CountableSpace, rv: &RandomVariable, depths: &[u64]) -> Result<Vec<(u64, Rational)>> {
    let mut out = Vec::with_capacity(depths.len());
    let mut acc = ExactSum::new();
    let mut done = 0u64;
    for &target in depths {
        if target < done {
            return Err(Error::InvalidParameter("depths must be ascending".into()));
        }
        for n in done + 1..=target {
            for (atom, w) in space.level(n) {
                let v = rv.eval(&atom)?;
                if !v.is_zero() {
                    acc.add(&mul_fast(&v, &w));
                }
            }
        }
        done = target;
        out.push((target, acc.value()));
    }
    Ok(out)
}

pub fn expectation(space: &CountableSpace, rv: &RandomVariable, policy: &ExpectationPolicy) -> Result<ExpectationResult> {
    if policy.max_depth == 0 {
        return Err(Error::InvalidParameter("max_depth must be at least 1".into()));
    }
    if let Some(top) = space.max_level() {
        return Ok(ExpectationResult::Exact(weighted_sum(space.enumerate(top).iter(), rv)?));
    }
    if let Some(result) = sectional_expectation(space, rv, policy)? {
        return Ok(result);
    }
    match &rv.tail {
        TailBehavior::ConstantBeyond { depth, value } if *depth <= policy.max_depth => {
            let depth = (*depth).max(1);
            let mut total = weighted_sum(space.enumerate(depth).iter(), rv)?;
            if !value.is_zero() {
                total += value * space.residual(depth);
            }
            Ok(ExpectationResult::Exact(total))
        }
        TailBehavior::Bounded(bound) => {
            let value = weighted_sum(space.enumerate(policy.max_depth).iter(), rv)?;
            Ok(ExpectationResult::Truncated { value, tail_bound: bound(policy.max_depth) })
        }
        _ if rv.sign == SignClass::Nonnegative => divergence_scan(space, rv, policy),
        _ => Err(Error::IndeterminateTail(
            "integrand is sign-indefinite with no tail guarantee".into(),
        )),
    }
}

/// Uniform extensions factor over the grid levels: each section is the base
/// space with `U` fixed, and may have its own zero-tail depth.
fn sectional_expectation(
    space: &CountableSpace,
    rv: &RandomVariable,
    policy: &ExpectationPolicy,
) -> Result<Option<ExpectationResult>> {
    let Some((base, m, _)) = space.uniform_parts() else {
        return Ok(None);
    };
    let levels = uniform_grid(m);
    let mut sections = Vec::with_capacity(levels.len());
    for u in &levels {
        let cut = match &rv.tail {
            TailBehavior::ConstantBeyond { depth, value } => Some((*depth, value.clone())),
            TailBehavior::PerUniform(f) => f(u),
            _ => None,
        };
        match cut {
            Some((d, v)) if d <= policy.max_depth => sections.push((d.max(1), v)),
            _ => return Ok(None),
        }
    }
    let deepest = sections.iter().map(|(d, _)| *d).max().unwrap_or(1);
    // Base atoms are enumerated once; sections read prefixes by level.
    let base_atoms = base.enumerate(deepest);
    let share = ratio(1, m as i64);
    let mut total = ExactSum::new();
    for (k, (depth, tail_value)) in (1..=m).zip(sections) {
        let mut section = ExactSum::new();
        for (atom, w) in base_atoms.iter().take_while(|(a, _)| a.level <= depth) {
            let v = rv.eval(&extend_atom(atom, k, m))?;
            if !v.is_zero() {
                section.add(&(v * w));
            }
        }
        let mut value = section.value();
        if !tail_value.is_zero() {
            value += tail_value * base.residual(depth);
        }
        total.add(&(value * &share));
    }
    Ok(Some(ExpectationResult::Exact(total.value())))
}

fn growth_sample_due(n: u64) -> bool {
    let mut p = 1u64;
    while p < n {
        p = p.saturating_mul(10);
    }
    p == n
}

fn divergence_scan(space: &CountableSpace, rv: &RandomVariable, policy: &ExpectationPolicy) -> Result<ExpectationResult> {
    let mut acc = ExactSum::new();
    let mut samples = Vec::new();
    let mut last = int(0);
    for n in 1..=policy.max_depth {
        for (atom, w) in space.level(n) {
            let v = rv.eval(&atom)?;
            if v.is_negative() {
                return Err(Error::InvalidParameter(format!("negative value on atom {}", atom.id)));
            }
            if !v.is_zero() {
                acc.add(&mul_fast(&v, &w));
            }
        }
        let s = acc.value();
        last = s.clone();
        if growth_sample_due(n) {
            samples.push((n, s.clone()));
        }
        if s > policy.divergence_threshold {
            if samples.last().map(|(k, _)| *k) != Some(n) {
                samples.push((n, s.clone()));
            }
            return Ok(ExpectationResult::Divergent(DivergenceCertificate {
                kind: CertificateKind::PartialSums,
                threshold: policy.divergence_threshold.clone(),
                depth: n,
                partial_sum: s,
                growth_samples: samples,
            }));
        }
    }
    Err(Error::IndeterminateTail(format!(
        "nonnegative partial sum {} at depth {} stays below threshold and no tail bound is known",
        crate::rational::fmt_rational(&last),
        policy.max_depth
    )))
}

/// Disjoint labelled blocks covering the atoms enumerated at `depth`.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub depth: u64,
    pub blocks: Vec<Block>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub label: String,
    pub atoms: BTreeSet<AtomId>,
}

impl Partition {
    pub fn new(space: &CountableSpace, depth: u64, blocks: Vec<Block>) -> Result<Self> {
        let ids: BTreeSet<AtomId> = space.enumerate(depth).iter().map(|(a, _)| a.id).collect();
        let mut covered = BTreeSet::new();
        for b in &blocks {
            if b.atoms.is_empty() {
                return Err(Error::ZeroMassBlock(b.label.clone()));
            }
            for id in &b.atoms {
                if !ids.contains(id) {
                    return Err(Error::UnknownAtom(*id));
                }
                if !covered.insert(*id) {
                    return Err(Error::InvalidParameter(format!("atom {id} appears in two blocks")));
                }
            }
        }
        if covered != ids {
            return Err(Error::InvalidParameter("blocks do not cover the enumerated atoms".into()));
        }
        Ok(Partition { depth, blocks })
    }

    /// Groups atoms by a key; block order follows first appearance.
    pub fn by_key<K: Eq + std::hash::Hash + fmt::Display>(
        space: &CountableSpace,
        depth: u64,
        key: impl Fn(&Atom) -> K,
    ) -> Self {
        let mut index: HashMap<K, usize> = HashMap::new();
        let mut blocks: Vec<Block> = Vec::new();
        for (atom, _) in space.enumerate(depth) {
            let k = key(&atom);
            let label = k.to_string();
            let i = *index.entry(k).or_insert_with(|| {
                blocks.push(Block { label, atoms: BTreeSet::new() });
                blocks.len() - 1
            });
            blocks[i].atoms.insert(atom.id);
        }
        Partition { depth, blocks }
    }

    pub fn trivial(space: &CountableSpace, depth: u64) -> Self {
        Self::by_key(space, depth, |_| "all")
    }

    pub fn finest(space: &CountableSpace, depth: u64) -> Self {
        Self::by_key(space, depth, |a| a.id)
    }

    pub fn block_of(&self, id: AtomId) -> Option<&Block> {
        self.blocks.iter().find(|b| b.atoms.contains(&id))
    }
}

/// Block-wise conditional mean over the enumerated atoms of the partition.
/// The returned variable is defined on those atoms only.
pub fn conditional_expectation(
    space: &CountableSpace,
    rv: &RandomVariable,
    partition: &Partition,
) -> Result<RandomVariable> {
    let atoms = space.enumerate(partition.depth);
    let mut mass: HashMap<AtomId, (Rational, Rational)> = HashMap::new();
    for (atom, w) in &atoms {
        let v = rv.eval(atom)?;
        mass.insert(atom.id, (w.clone(), v));
    }
    let mut value_of: HashMap<AtomId, Rational> = HashMap::new();
    for block in &partition.blocks {
        let mut num = ExactSum::new();
        let mut den = ExactSum::new();
        for id in &block.atoms {
            let (w, v) = mass.get(id).ok_or(Error::UnknownAtom(*id))?;
            num.add(&(w * v));
            den.add(w);
        }
        let den = den.value();
        if den.is_zero() {
            return Err(Error::ZeroMassBlock(block.label.clone()));
        }
        let mean = num.value() / den;
        for id in &block.atoms {
            value_of.insert(*id, mean.clone());
        }
    }
    let value_of = Arc::new(value_of);
    Ok(RandomVariable {
        eval: Arc::new(move |a| value_of.get(&a.id).cloned().ok_or(Error::UnknownAtom(a.id))),
        sign: rv.sign,
        tail: TailBehavior::Unknown,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::fmt_rational;

    fn sigma_of(a: &Atom) -> Option<u64> {
        match a.outcome {
            Outcome::Jump { sigma, .. } => sigma,
            _ => None,
        }
    }

    #[test]
    fn cherny_depth_two_atoms() {
        let e = CountableSpace::cherny().enumerate_atoms(2).unwrap();
        let got: Vec<(u64, Rational)> = e.atoms.iter().map(|(a, w)| (a.level, w.clone())).collect();
        assert_eq!(
            got,
            vec![(1, ratio(1, 4)), (1, ratio(1, 4)), (2, ratio(1, 16)), (2, ratio(1, 16))]
        );
    }

    #[test]
    fn cherny_residual_at_three() {
        // Oracle: Σ_{n≤3} 1/(2n²) = 1/2 + 1/8 + 1/18 = 49/72.
        let oracle = int(1) - (ratio(1, 2) + ratio(1, 8) + ratio(1, 18));
        assert_eq!(oracle, ratio(23, 72));
        assert_eq!(CountableSpace::cherny().residual(3), oracle);
    }

    #[test]
    fn single_atom_has_no_residual() {
        let e = CountableSpace::single_atom().enumerate_atoms(1).unwrap();
        assert_eq!(e.atoms.len(), 1);
        assert_eq!(e.atoms[0].1, int(1));
        assert_eq!(e.residual, int(0));
    }

    #[test]
    fn zero_depth_is_rejected() {
        assert!(CountableSpace::cherny().enumerate_atoms(0).is_err());
    }

    #[test]
    fn finite_space_validates_mass() {
        assert!(CountableSpace::finite(vec![(Outcome::Label(0), ratio(1, 2))]).is_err());
        assert!(CountableSpace::finite(vec![
            (Outcome::Label(0), ratio(1, 2)),
            (Outcome::Label(0), ratio(1, 2))
        ])
        .is_err());
        assert!(CountableSpace::finite(vec![(Outcome::Label(0), int(1)), (Outcome::Label(1), int(0))]).is_err());
    }

    #[test]
    fn constant_expectation_is_exact() {
        let c = ratio(-3, 7);
        for space in [CountableSpace::cherny(), CountableSpace::single_atom()] {
            let r = expectation(&space, &RandomVariable::constant(c.clone()), &ExpectationPolicy::default()).unwrap();
            assert_eq!(r, ExpectationResult::Exact(c.clone()));
        }
    }

    #[test]
    fn sign_indefinite_unbounded_tail_is_refused() {
        let rv = RandomVariable::new(|a| match a.outcome {
            Outcome::Jump { sigma: Some(n), sign } => Ok(int(i64::from(sign) * (n * n) as i64)),
            _ => Ok(int(0)),
        });
        let err = expectation(&CountableSpace::cherny(), &rv, &ExpectationPolicy::default()).unwrap_err();
        assert!(matches!(err, Error::IndeterminateTail(_)));
    }

    #[test]
    fn divergence_certificate_for_squared_jump_epoch() {
        let rv = RandomVariable::new(|a| Ok(sigma_of(a).map_or(int(0), |n| int((n * n) as i64)))).nonnegative();
        let r = expectation(&CountableSpace::cherny(), &rv, &ExpectationPolicy::with_threshold(int(1000))).unwrap();
        let ExpectationResult::Divergent(c) = r else { panic!("expected divergence, got {r:?}") };
        assert_eq!(c.depth, 2001);
        assert_eq!(fmt_rational(&c.partial_sum), "2001/2");
        assert!(c.is_consistent());
        let ns: Vec<u64> = c.growth_samples.iter().map(|(n, _)| *n).collect();
        assert_eq!(ns, vec![1, 10, 100, 1000, 2001]);
    }

    #[test]
    fn bounded_tail_gives_truncated_result() {
        // rv = 1 on every atom; unenumerated mass is the exact bound.
        let space = CountableSpace::cherny();
        let s2 = space.clone();
        let rv = RandomVariable::new(|_| Ok(int(1)))
            .with_tail(TailBehavior::Bounded(Arc::new(move |n| s2.residual(n))));
        let policy = ExpectationPolicy { max_depth: 5, ..Default::default() };
        let ExpectationResult::Truncated { value, tail_bound } = expectation(&space, &rv, &policy).unwrap() else {
            panic!()
        };
        assert_eq!(&value + &tail_bound, int(1));
    }

    #[test]
    fn conditional_on_sign_blocks_by_jump_epoch() {
        // Oracle: D is independent of σ, so each σ-block has half its mass on D = +1.
        let space = CountableSpace::cherny();
        let rv = RandomVariable::new(|a| match a.outcome {
            Outcome::Jump { sign: 1, .. } => Ok(int(1)),
            _ => Ok(int(0)),
        });
        let p = Partition::by_key(&space, 5, |a| sigma_of(a).unwrap());
        assert_eq!(p.blocks.len(), 5);
        let ce = conditional_expectation(&space, &rv, &p).unwrap();
        for (a, _) in space.enumerate(5) {
            assert_eq!(ce.eval(&a).unwrap(), ratio(1, 2));
        }
    }

    #[test]
    fn conditional_on_trivial_and_finest() {
        let space = CountableSpace::cherny();
        let rv = RandomVariable::new(|a| Ok(int(a.id as i64)));
        let trivial = conditional_expectation(&space, &rv, &Partition::trivial(&space, 4)).unwrap();
        let mean = restricted_expectation(&space, &rv, 4).unwrap() / (int(1) - space.residual(4));
        let finest = conditional_expectation(&space, &rv, &Partition::finest(&space, 4)).unwrap();
        for (a, _) in space.enumerate(4) {
            assert_eq!(trivial.eval(&a).unwrap(), mean);
            assert_eq!(finest.eval(&a).unwrap(), rv.eval(&a).unwrap());
        }
    }

    #[test]
    fn partition_rejects_overlap_and_gaps() {
        let space = CountableSpace::cherny();
        let b = |label: &str, ids: &[u64]| Block { label: label.into(), atoms: ids.iter().copied().collect() };
        assert!(Partition::new(&space, 1, vec![b("a", &[2]), b("b", &[3])]).is_ok());
        assert!(Partition::new(&space, 1, vec![b("a", &[2, 3]), b("b", &[3])]).is_err());
        assert!(Partition::new(&space, 1, vec![b("a", &[2])]).is_err());
        assert!(matches!(
            Partition::new(&space, 1, vec![b("a", &[2, 3]), b("empty", &[])]),
            Err(Error::ZeroMassBlock(_))
        ));
    }
}
