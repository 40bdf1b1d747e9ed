//! Forward dynamic programming for stopped simple random walks.
//!
//! The walk moves ±1 at integer times. A stopping rule built from constant
//! times and hitting conditions is Markov in `(time, position, fired leaves)`,
//! so the law of `X_τ` on `{τ ≤ H}` and of `X_H` on `{τ > H}` follows from
//! propagating mass through that state space. Two weight types share the
//! engine: exact path counts (scaled by `2^H`) and `f64` probabilities.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use num_bigint::BigInt;
use num_traits::{Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};
use crate::process::GenerativeProcess;
use crate::rational::{floor_u64, int, Rational};
use crate::stopping::StoppingSpec;
use crate::time::ExtTime;

/// Law of a stopped walk up to the horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct WalkStopLaw<T> {
    pub horizon: u64,
    /// `P(τ ≤ H)`.
    pub stopped_mass: T,
    /// `E[X_τ ; τ ≤ H]`.
    pub stopped_mean: T,
    /// `E[X_{τ∧H}]`.
    pub truncated_mean: T,
    /// Law of `X_τ` on `{τ ≤ H}`.
    pub stopped_values: BTreeMap<i64, T>,
}

impl WalkStopLaw<Rational> {
    pub fn to_float(&self) -> WalkStopLaw<f64> {
        let f = |q: &Rational| q.to_f64().unwrap_or(f64::NAN);
        WalkStopLaw {
            horizon: self.horizon,
            stopped_mass: f(&self.stopped_mass),
            stopped_mean: f(&self.stopped_mean),
            truncated_mean: f(&self.truncated_mean),
            stopped_values: self.stopped_values.iter().map(|(k, v)| (*k, f(v))).collect(),
        }
    }
}

/// Spatial part of a leaf condition, on integer positions.
#[derive(Debug, Clone, Copy)]
enum Spatial {
    Always,
    AtLeast(i64),
    AbsAtLeast(i64),
    AbsAtMost(i64),
}

impl Spatial {
    fn holds(self, x: i64) -> bool {
        match self {
            Spatial::Always => true,
            Spatial::AtLeast(a) => x >= a,
            Spatial::AbsAtLeast(a) => x.abs() >= a,
            Spatial::AbsAtMost(b) => x.abs() <= b,
        }
    }
}

#[derive(Debug, Clone)]
enum Node {
    Leaf(usize),
    Min(Vec<Node>),
    Max(Vec<Node>),
    Never,
}

impl Node {
    fn fired(&self, mask: u64) -> bool {
        match self {
            Node::Leaf(i) => mask >> i & 1 == 1,
            Node::Min(c) => c.iter().any(|n| n.fired(mask)),
            Node::Max(c) => c.iter().all(|n| n.fired(mask)),
            Node::Never => false,
        }
    }
}

fn clamp(q: BigInt) -> i64 {
    q.to_i64().unwrap_or(if q.sign() == num_bigint::Sign::Minus { i64::MIN / 4 } else { i64::MAX / 4 })
}

/// A stopping rule compiled for integer-time ±1 walks up to a horizon.
///
/// Each leaf fires the first time both its spatial condition and its time
/// condition hold, and then stays fired. Between integer times the walk is
/// constant, so only integer times and the rule's own time constants matter.
#[derive(Debug, Clone)]
pub struct WalkRule {
    spatial: Vec<Spatial>,
    root: Node,
    /// Checkpoint time, its floor, and the leaves whose time condition holds.
    checkpoints: Vec<(Rational, u64, u64)>,
    horizon: u64,
}

impl WalkRule {
    pub fn compile(spec: &StoppingSpec, horizon: u64) -> Result<Self> {
        spec.validate()?;
        let mut spatial = Vec::new();
        let mut starts = Vec::new();
        let root = Self::node(spec, &mut spatial, &mut starts)?;
        let h = int(horizon as i64);
        let mut times: BTreeSet<Rational> = (0..=horizon).map(|k| int(k as i64)).collect();
        times.extend(starts.iter().filter(|t| **t <= h).cloned());
        let checkpoints = times
            .into_iter()
            .map(|t| {
                let ok = starts.iter().enumerate().fold(0u64, |m, (j, s)| if &t >= s { m | 1 << j } else { m });
                let k = floor_u64(&t);
                (t, k, ok)
            })
            .collect();
        Ok(WalkRule { spatial, root, checkpoints, horizon })
    }

    fn node(spec: &StoppingSpec, spatial: &mut Vec<Spatial>, starts: &mut Vec<Rational>) -> Result<Node> {
        let mut leaf = |s: Spatial, start: Rational| -> Result<Node> {
            if spatial.len() >= 64 {
                return Err(Error::Unsupported("more than 64 leaves".into()));
            }
            spatial.push(s);
            starts.push(start);
            Ok(Node::Leaf(spatial.len() - 1))
        };
        match spec {
            StoppingSpec::Const { t: ExtTime::Infinite } => Ok(Node::Never),
            StoppingSpec::Const { t: ExtTime::Finite(t) } => leaf(Spatial::Always, t.clone()),
            StoppingSpec::HitAbove { level, strict: false } => {
                leaf(Spatial::AtLeast(clamp(level.ceil().to_integer())), int(0))
            }
            StoppingSpec::HitAbove { level, strict: true } => {
                leaf(Spatial::AtLeast(clamp(level.floor().to_integer()).saturating_add(1)), int(0))
            }
            StoppingSpec::HitAbsAbove { level } => leaf(Spatial::AbsAtLeast(clamp(level.ceil().to_integer())), int(0)),
            StoppingSpec::HitAbsBelow { level, after } => {
                leaf(Spatial::AbsAtMost(clamp(level.floor().to_integer())), after.clone())
            }
            StoppingSpec::Min { args } => {
                Ok(Node::Min(args.iter().map(|a| Self::node(a, spatial, starts)).collect::<Result<_>>()?))
            }
            StoppingSpec::Max { args } => {
                Ok(Node::Max(args.iter().map(|a| Self::node(a, spatial, starts)).collect::<Result<_>>()?))
            }
            other => Err(Error::Unsupported(format!("`{other}` is not Markov in (time, position)"))),
        }
    }

    pub fn horizon(&self) -> u64 {
        self.horizon
    }

    fn advance(&self, mask: u64, checkpoint: usize, x: i64) -> u64 {
        let ok = self.checkpoints[checkpoint].2;
        let mut m = mask;
        for (j, s) in self.spatial.iter().enumerate() {
            if m >> j & 1 == 0 && ok >> j & 1 == 1 && s.holds(x) {
                m |= 1 << j;
            }
        }
        m
    }

    /// Runs one path given by its steps; returns the stopping time (if
    /// `τ ≤ H`) and `X_{τ∧H}`.
    pub fn run(&self, start: i64, mut step: impl FnMut() -> i8) -> (Option<Rational>, i64) {
        let mut x = start;
        let mut steps = 0u64;
        let mut mask = 0u64;
        for (i, (t, k, _)) in self.checkpoints.iter().enumerate() {
            while steps < *k {
                x += i64::from(step());
                steps += 1;
            }
            mask = self.advance(mask, i, x);
            if self.root.fired(mask) {
                return (Some(t.clone()), x);
            }
        }
        while steps < self.horizon {
            x += i64::from(step());
            steps += 1;
        }
        (None, x)
    }
}

trait Weight: Clone {
    type Out;
    fn zero() -> Self;
    fn start() -> Self;
    fn is_zero(&self) -> bool;
    fn add(&mut self, other: &Self);
    /// Weight carried to each child by one step.
    fn split(&self) -> Self;
    /// Weight at the common `2^H` scale after `steps` steps.
    fn rescale(&self, steps: u64, horizon: u64) -> Self;
    fn times(&self, v: i64) -> Self;
    fn finish(&self, horizon: u64) -> Self::Out;
}

impl Weight for BigInt {
    type Out = Rational;
    fn zero() -> Self {
        <BigInt as Zero>::zero()
    }
    fn start() -> Self {
        BigInt::from(1)
    }
    fn is_zero(&self) -> bool {
        Zero::is_zero(self)
    }
    fn add(&mut self, other: &Self) {
        *self += other;
    }
    fn split(&self) -> Self {
        self.clone()
    }
    fn rescale(&self, steps: u64, horizon: u64) -> Self {
        self << (horizon - steps)
    }
    fn times(&self, v: i64) -> Self {
        self * v
    }
    fn finish(&self, horizon: u64) -> Rational {
        Rational::new(self.clone(), BigInt::from(1) << horizon)
    }
}

impl Weight for f64 {
    type Out = f64;
    fn zero() -> Self {
        0.0
    }
    fn start() -> Self {
        1.0
    }
    fn is_zero(&self) -> bool {
        *self == 0.0
    }
    fn add(&mut self, other: &Self) {
        *self += other;
    }
    fn split(&self) -> Self {
        self * 0.5
    }
    fn rescale(&self, _steps: u64, _horizon: u64) -> Self {
        *self
    }
    fn times(&self, v: i64) -> Self {
        self * v as f64
    }
    fn finish(&self, _horizon: u64) -> f64 {
        *self
    }
}

fn run<W: Weight>(walk: &GenerativeProcess, spec: &StoppingSpec) -> Result<WalkStopLaw<W::Out>> {
    let horizon = walk.horizon;
    let rule = WalkRule::compile(spec, horizon)?;
    let offset = horizon as i64 + 1;
    let width = 2 * horizon as usize + 3;
    let position = |i: usize| i as i64 - offset + walk.start;
    let centre = offset as usize;

    let mut live: HashMap<u64, Vec<W>> = HashMap::new();
    let mut first = vec![W::zero(); width];
    first[centre] = W::start();
    live.insert(0, first);
    let (mut lo, mut hi) = (centre, centre);
    let mut spare: Vec<Vec<W>> = Vec::new();

    let mut stopped_mass = W::zero();
    let mut stopped_mean = W::zero();
    let mut stopped_values: BTreeMap<i64, W> = BTreeMap::new();
    let mut steps = 0u64;

    for (c, (_, target, _)) in rule.checkpoints.iter().enumerate() {
        while steps < *target {
            for row in live.values_mut() {
                let mut next = spare.pop().unwrap_or_else(|| vec![W::zero(); width]);
                for i in lo..=hi {
                    if row[i].is_zero() {
                        continue;
                    }
                    let half = row[i].split();
                    next[i - 1].add(&half);
                    next[i + 1].add(&half);
                    row[i] = W::zero();
                }
                spare.push(std::mem::replace(row, next));
            }
            lo -= 1;
            hi += 1;
            steps += 1;
        }
        let mut regrouped: HashMap<u64, Vec<W>> = HashMap::new();
        let mut masks: Vec<u64> = live.keys().copied().collect();
        masks.sort_unstable();
        for mask in masks {
            let mut row = live.remove(&mask).expect("listed mask");
            for i in lo..=hi {
                if row[i].is_zero() {
                    continue;
                }
                let x = position(i);
                let m = rule.advance(mask, c, x);
                if rule.root.fired(m) {
                    let w = row[i].rescale(steps, horizon);
                    stopped_mass.add(&w);
                    stopped_mean.add(&w.times(x));
                    stopped_values.entry(x).or_insert_with(W::zero).add(&w);
                    row[i] = W::zero();
                } else if m != mask {
                    let w = std::mem::replace(&mut row[i], W::zero());
                    regrouped
                        .entry(m)
                        .or_insert_with(|| spare.pop().unwrap_or_else(|| vec![W::zero(); width]))[i]
                        .add(&w);
                }
            }
            match regrouped.get_mut(&mask) {
                Some(existing) => {
                    for i in lo..=hi {
                        if !row[i].is_zero() {
                            let w = std::mem::replace(&mut row[i], W::zero());
                            existing[i].add(&w);
                        }
                    }
                    spare.push(row);
                }
                None => {
                    regrouped.insert(mask, row);
                }
            }
        }
        live = regrouped;
    }

    let mut truncated_mean = stopped_mean.clone();
    for row in live.values() {
        for (i, w) in row.iter().enumerate().take(hi + 1).skip(lo) {
            if !w.is_zero() {
                truncated_mean.add(&w.times(position(i)));
            }
        }
    }
    Ok(WalkStopLaw {
        horizon,
        stopped_mass: stopped_mass.finish(horizon),
        stopped_mean: stopped_mean.finish(horizon),
        truncated_mean: truncated_mean.finish(horizon),
        stopped_values: stopped_values.into_iter().map(|(k, w)| (k, w.finish(horizon))).collect(),
    })
}

/// Exact law (rational, via path counts).
pub fn stop_law_exact(walk: &GenerativeProcess, spec: &StoppingSpec) -> Result<WalkStopLaw<Rational>> {
    run::<BigInt>(walk, spec)
}

/// Floating-point law; absolute error of order `H·1e-16`.
pub fn stop_law_float(walk: &GenerativeProcess, spec: &StoppingSpec) -> Result<WalkStopLaw<f64>> {
    run::<f64>(walk, spec)
}

/// Exact `E[X_t]` at the requested times (each at most the horizon), from
/// binomial path counts.
pub fn marginal_means(walk: &GenerativeProcess, times: &[Rational]) -> Result<Vec<Rational>> {
    let h = int(walk.horizon as i64);
    if let Some(t) = times.iter().find(|t| **t > h || t.is_negative()) {
        return Err(Error::InvalidParameter(format!("time {t} lies outside [0, {}]", walk.horizon)));
    }
    let needed: BTreeSet<u64> = times.iter().map(floor_u64).collect();
    let last = needed.iter().next_back().copied().unwrap_or(0);
    let mut means: BTreeMap<u64, Rational> = BTreeMap::new();
    // counts[i] = number of step sequences ending at start - k + 2i.
    let mut counts: Vec<BigInt> = vec![BigInt::from(1)];
    for k in 0..=last {
        if needed.contains(&k) {
            let mut total = <BigInt as Zero>::zero();
            for (i, c) in counts.iter().enumerate() {
                total += c * (walk.start - k as i64 + 2 * i as i64);
            }
            means.insert(k, Rational::new(total, BigInt::from(1) << k));
        }
        let mut next = vec![<BigInt as Zero>::zero(); counts.len() + 1];
        for (i, c) in counts.iter().enumerate() {
            next[i] += c;
            next[i + 1] += c;
        }
        counts = next;
    }
    Ok(times.iter().map(|t| means[&floor_u64(t)].clone()).collect())
}
