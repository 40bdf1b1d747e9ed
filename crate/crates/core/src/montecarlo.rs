//! Sampling cross-checks.
//!
//! Every replication draws from its own ChaCha stream keyed by
//! `(seed, index)`, and results are combined with a fixed pairwise reduction,
//! so estimates do not depend on thread scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::measure::{Atom, CountableSpace, RandomVariable, TailBehavior};
use crate::process::{GenerativeProcess, PathProcess};
use crate::rational::{to_f64, Rational};
use crate::stopping::{evaluate_on, Observation, StoppingSpec};
use crate::time::ExtTime;
use crate::walk::WalkRule;

/// Random stream for replication `index` under `seed`.
pub fn stream_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Sum with a fixed binary reduction tree.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 8 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    /// Three standard errors.
    pub half_width: f64,
    pub n: u64,
    pub seed: u64,
}

impl Estimate {
    pub fn from_samples(xs: &[f64], seed: u64) -> Self {
        let n = xs.len();
        let mean = pairwise_sum(xs) / n as f64;
        let half_width = if n < 2 {
            f64::INFINITY
        } else {
            let dev: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
            3.0 * (pairwise_sum(&dev) / (n as f64 - 1.0) / n as f64).sqrt()
        };
        Estimate { mean, half_width, n: n as u64, seed }
    }

    pub fn covers(&self, value: f64) -> bool {
        (self.mean - value).abs() <= self.half_width
    }
}

/// A draw from a space: an enumerated atom, or the unenumerated remainder.
#[derive(Debug, Clone, PartialEq)]
pub enum Sample {
    Atom(Atom),
    Tail,
}

/// Inverse-CDF sampler over the atoms enumerated at a fixed depth, with the
/// residual as one extra category.
#[derive(Debug, Clone)]
pub struct Sampler {
    atoms: Vec<Atom>,
    cdf: Vec<f64>,
}

impl Sampler {
    pub fn new(space: &CountableSpace, depth: u64) -> Result<Self> {
        if depth == 0 {
            return Err(Error::InvalidParameter("depth must be at least 1".into()));
        }
        let enumerated = space.enumerate(depth);
        let mut acc = 0.0f64;
        let mut cdf = Vec::with_capacity(enumerated.len());
        let mut atoms = Vec::with_capacity(enumerated.len());
        for (a, w) in enumerated {
            acc += to_f64(&w);
            cdf.push(acc);
            atoms.push(a);
        }
        Ok(Sampler { atoms, cdf })
    }

    pub fn draw(&self, rng: &mut impl Rng) -> Sample {
        let v: f64 = rng.random();
        let i = self.cdf.partition_point(|c| *c <= v);
        match self.atoms.get(i) {
            Some(a) => Sample::Atom(a.clone()),
            None => Sample::Tail,
        }
    }
}

pub fn sample_atom(space: &CountableSpace, depth: u64, seed: u64, index: u64) -> Result<Sample> {
    Ok(Sampler::new(space, depth)?.draw(&mut stream_rng(seed, index)))
}

fn replicate(n: u64, seed: u64, f: impl Fn(&mut ChaCha8Rng) -> Result<f64> + Sync) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::InvalidParameter("need at least one replication".into()));
    }
    (0..n).into_par_iter().map(|i| f(&mut stream_rng(seed, i))).collect()
}

/// Sample mean of `rv`. The variable must have a known tail value (or the
/// space must be finite) so that residual draws can be scored.
pub fn estimate_expectation(space: &CountableSpace, rv: &RandomVariable, n: u64, seed: u64) -> Result<Estimate> {
    let (depth, tail) = match (space.max_level(), &rv.tail) {
        (Some(top), _) => (top, None),
        (None, TailBehavior::ConstantBeyond { depth, value }) => ((*depth).max(1), Some(to_f64(value))),
        _ => return Err(Error::IndeterminateTail("sampling needs a known tail value".into())),
    };
    let sampler = Sampler::new(space, depth)?;
    let xs = replicate(n, seed, |rng| match sampler.draw(rng) {
        Sample::Atom(a) => Ok(to_f64(&rv.eval(&a)?)),
        Sample::Tail => tail.ok_or_else(|| Error::IndeterminateTail("residual drawn on a finite space".into())),
    })?;
    Ok(Estimate::from_samples(&xs, seed))
}

/// Where stopped paths come from.
#[derive(Debug, Clone, Copy)]
pub enum StoppedSource<'a> {
    Walk(&'a GenerativeProcess),
    /// Atoms of the process's own space (discrete `U` on extensions).
    Paths(&'a PathProcess),
    /// Atoms of the base space plus a continuous `U`, floored at `floor`.
    PathsWithUniform { process: &'a PathProcess, floor: &'a Rational },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StoppedEstimate {
    pub estimate: Estimate,
    /// Estimate of `E[X_τ; τ ≤ H]`: overrunning paths score zero.
    pub censored: Estimate,
    /// Fraction of replications with `τ > H`.
    pub overrun_fraction: f64,
    pub horizon: u64,
}

/// Estimate of `E[X_{τ∧H}]` (or of `E[|X_{τ∧H}|]` when `abs`).
pub fn estimate_stopped(
    source: StoppedSource<'_>,
    spec: &StoppingSpec,
    n: u64,
    horizon: u64,
    seed: u64,
    abs: bool,
) -> Result<StoppedEstimate> {
    let h = Rational::from_integer((horizon as i64).into());
    let cap = ExtTime::Finite(h.clone());
    let score = |x: f64| if abs { x.abs() } else { x };
    let draws: Vec<(f64, bool)> = match source {
        StoppedSource::Walk(walk) => {
            let rule = WalkRule::compile(spec, horizon)?;
            (0..n)
                .into_par_iter()
                .map(|i| {
                    let mut rng = stream_rng(seed, i);
                    let (tau, x) = rule.run(walk.start, || if rng.random::<bool>() { 1 } else { -1 });
                    (score(x as f64), tau.is_none())
                })
                .collect()
        }
        StoppedSource::Paths(process) | StoppedSource::PathsWithUniform { process, .. } => {
            let floor = match source {
                StoppedSource::PathsWithUniform { floor, .. } => Some(floor),
                _ => None,
            };
            let (depth, tail) = match (process.space().max_level(), process.tail()) {
                (Some(top), _) => (top, None),
                (None, Some(t)) if spec.is_nonanticipating() => ((t.depth_for)(&h).max(1), Some(t)),
                _ => return Err(Error::IndeterminateTail("sampling needs a tail model and a nonanticipating rule".into())),
            };
            let sampler = Sampler::new(process.space(), depth)?;
            (0..n)
                .into_par_iter()
                .map(|i| -> Result<(f64, bool)> {
                    let mut rng = stream_rng(seed, i);
                    let sample = sampler.draw(&mut rng);
                    let drawn_u = floor.map(|f| {
                        let u = Rational::from_float(rng.random::<f64>()).expect("finite float");
                        if &u < f { f.clone() } else { u }
                    });
                    let (path, id, own_u) = match &sample {
                        Sample::Atom(a) => (process.path(a)?, Some(a.id), a.uniform.clone()),
                        Sample::Tail => (tail.expect("infinite space").representative.clone(), None, None),
                    };
                    let uniform = drawn_u.or(own_u);
                    let tau = evaluate_on(spec, &Observation { path: &path, uniform: uniform.as_ref(), atom: id })?;
                    let overrun = !tau.le(&h);
                    let x = path.value_at_ext(&tau.min_of(cap.clone()));
                    Ok((score(to_f64(x)), overrun))
                })
                .collect::<Result<_>>()?
        }
    };
    if draws.is_empty() {
        return Err(Error::InvalidParameter("need at least one replication".into()));
    }
    let xs: Vec<f64> = draws.iter().map(|d| d.0).collect();
    let censored: Vec<f64> = draws.iter().map(|d| if d.1 { 0.0 } else { d.0 }).collect();
    let overruns = draws.iter().filter(|d| d.1).count();
    Ok(StoppedEstimate {
        estimate: Estimate::from_samples(&xs, seed),
        censored: Estimate::from_samples(&censored, seed),
        overrun_fraction: overruns as f64 / draws.len() as f64,
        horizon,
    })
}
