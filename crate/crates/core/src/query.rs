//! Declarative expectation queries: a process description plus a target,
//! both readable from JSON.

use serde::{Deserialize, Serialize};

use crate::analysis::{randomized_blowup_curve, BlowupCurve, Model};
use crate::error::{Error, Result};
use crate::examples::{build, constant_process, finite_process, ExampleDescriptor, ExampleName, ExampleParams};
use crate::measure::{expectation, partial_sums, ExpectationPolicy, ExpectationResult, RandomVariable};
use crate::montecarlo::{estimate_expectation, estimate_stopped, Estimate, StoppedSource};
use crate::process::{GenerativeProcess, PathProcess, PiecewiseConstantPath};
use crate::rational::{floor_u64, parse_rational, Dual, Rational};
use crate::stopping::{stopped_value_rv, StoppingSpec};
use crate::time::ExtTime;
use crate::walk::{marginal_means, stop_law_exact, stop_law_float};

/// Walk horizons up to this size get exact stopped laws; longer ones use the
/// floating DP.
pub const EXACT_WALK_HORIZON: u64 = 2000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiniteAtom {
    #[serde(with = "crate::rational::serde_rational")]
    pub weight: Rational,
    pub path: PiecewiseConstantPath,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "process", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProcessSpec {
    Example {
        name: ExampleName,
        #[serde(default)]
        params: ExampleParams,
    },
    Finite {
        atoms: Vec<FiniteAtom>,
    },
    Constant {
        #[serde(with = "crate::rational::serde_rational")]
        value: Rational,
    },
    Walk {
        horizon: u64,
    },
}

impl ProcessSpec {
    /// Parses the short forms `NAME` (an example) and `constant:VALUE`.
    pub fn parse_short(s: &str, params: &ExampleParams) -> Result<Self> {
        if let Some(v) = s.strip_prefix("constant:") {
            return Ok(ProcessSpec::Constant { value: parse_rational(v)? });
        }
        if s == "constant" {
            return Ok(ProcessSpec::Constant { value: Rational::from_integer(0.into()) });
        }
        Ok(ProcessSpec::Example { name: s.parse()?, params: params.clone() })
    }

    /// The model plus, for randomized examples, the process on the base space.
    pub fn build(&self) -> Result<(Model, Option<PathProcess>)> {
        match self {
            ProcessSpec::Example { name, params } => {
                let desc = ExampleDescriptor::with_params(*name, params.clone());
                desc.validate()?;
                let built = build(&desc)?;
                Ok((built.model, built.base))
            }
            ProcessSpec::Finite { atoms } => {
                let atoms = atoms.iter().map(|a| (a.weight.clone(), a.path.clone())).collect();
                Ok((Model::Exact(finite_process(atoms)?), None))
            }
            ProcessSpec::Constant { value } => Ok((Model::Exact(constant_process(value.clone())), None)),
            ProcessSpec::Walk { horizon } => Ok((Model::Walk(GenerativeProcess::random_walk(*horizon)?), None)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Target {
    ValueAt {
        #[serde(with = "crate::rational::serde_rational")]
        t: Rational,
    },
    AbsValueAt {
        #[serde(with = "crate::rational::serde_rational")]
        t: Rational,
    },
    Limit,
    LimitAbs,
    LiminfAbs,
    Stopped {
        spec: StoppingSpec,
        #[serde(default)]
        abs: bool,
    },
    PartialSums {
        depths: Vec<u64>,
    },
    Blowup {
        m: Vec<u64>,
    },
}

impl Target {
    /// Parses `value_at:T`, `abs_value_at:T`, `limit`, `limit_abs`,
    /// `liminf_abs`, `partial_sums:N1,N2`, `blowup:M1,M2`, `stopped:JSON`
    /// and `stopped_abs:JSON`.
    pub fn parse_short(s: &str) -> Result<Self> {
        let (head, arg) = s.split_once(':').map_or((s, None), |(h, a)| (h, Some(a)));
        let need = || arg.ok_or_else(|| Error::Parse(format!("target {head:?} needs an argument")));
        let list = |a: &str| -> Result<Vec<u64>> {
            a.split(',').map(|x| x.trim().parse::<u64>().map_err(|e| Error::Parse(format!("{x:?}: {e}")))).collect()
        };
        let spec = |a: &str| serde_json::from_str::<StoppingSpec>(a).map_err(|e| Error::Parse(e.to_string()));
        let t = match head {
            "value_at" => Target::ValueAt { t: parse_rational(need()?)? },
            "abs_value_at" => Target::AbsValueAt { t: parse_rational(need()?)? },
            "limit" => Target::Limit,
            "limit_abs" => Target::LimitAbs,
            "liminf_abs" => Target::LiminfAbs,
            "partial_sums" => Target::PartialSums { depths: list(need()?)? },
            "blowup" => Target::Blowup { m: list(need()?)? },
            "stopped" => Target::Stopped { spec: spec(need()?)?, abs: false },
            "stopped_abs" => Target::Stopped { spec: spec(need()?)?, abs: true },
            other => return Err(Error::Parse(format!("unknown target {other:?}"))),
        };
        if !matches!(t, Target::ValueAt { .. } | Target::AbsValueAt { .. } | Target::PartialSums { .. } | Target::Blowup { .. } | Target::Stopped { .. })
            && arg.is_some()
        {
            return Err(Error::Parse(format!("target {head:?} takes no argument")));
        }
        Ok(t)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpectQuery {
    pub process: ProcessSpec,
    pub target: Target,
}

/// Engine settings shared by a batch of queries.
#[derive(Debug, Clone)]
pub struct QueryOptions {
    pub policy: ExpectationPolicy,
    /// Monte Carlo replications (0 disables sampling).
    pub reps: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PartialSumRow {
    pub n: u64,
    #[serde(serialize_with = "crate::rational::serde_dual::serialize")]
    pub partial_sum: Rational,
}

/// Stopped walk summary; exact fields are `p/q` plus approximation when the
/// exact DP ran, decimals otherwise.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WalkStopSummary {
    pub engine: &'static str,
    pub horizon: u64,
    pub stopped_mass: Value,
    pub stopped_mean: Value,
    pub truncated_mean: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Value {
    Exact(Dual),
    Float(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum QueryOutput {
    Expectation { engine: &'static str, result: ExpectationResult },
    PartialSums { engine: &'static str, rows: Vec<PartialSumRow> },
    Blowup { engine: &'static str, curve: BlowupCurve },
    WalkStopped(WalkStopSummary),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonteCarloCheck {
    pub engine: &'static str,
    pub estimate: Estimate,
    /// Fraction of replications cut off by the horizon, for stopped targets.
    pub overrun_fraction: Option<f64>,
    /// Estimate of `E[X_τ; τ ≤ H]`, for stopped targets.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub censored: Option<Estimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QueryReport {
    pub query: ExpectQuery,
    pub output: QueryOutput,
    pub monte_carlo: Option<MonteCarloCheck>,
}

fn exact(result: ExpectationResult) -> QueryOutput {
    QueryOutput::Expectation { engine: "exact", result }
}

fn exact_rv(p: &PathProcess, target: &Target) -> Result<Option<RandomVariable>> {
    Ok(Some(match target {
        Target::ValueAt { t } => p.value_rv(t),
        Target::AbsValueAt { t } => p.value_rv(t).abs(),
        Target::Limit => {
            require_terminating(p)?;
            p.limit_rv()
        }
        Target::LimitAbs => {
            require_terminating(p)?;
            p.limit_rv().abs()
        }
        Target::LiminfAbs => {
            require_terminating(p)?;
            p.liminf_abs_rv()
        }
        Target::Stopped { spec, abs } => {
            spec.validate()?;
            let rv = stopped_value_rv(p, spec);
            if *abs {
                rv.abs()
            } else {
                rv
            }
        }
        Target::PartialSums { .. } | Target::Blowup { .. } => return Ok(None),
    }))
}

fn require_terminating(p: &PathProcess) -> Result<()> {
    if p.is_terminating() {
        Ok(())
    } else {
        Err(Error::NotTerminating)
    }
}

pub fn run_query(query: &ExpectQuery, opts: &QueryOptions) -> Result<QueryReport> {
    let (model, base) = query.process.build()?;
    let (output, monte_carlo) = match &model {
        Model::Exact(p) => run_exact(p, base.as_ref(), &query.target, opts)?,
        Model::Walk(w) => run_walk(w, &query.target, opts)?,
    };
    Ok(QueryReport { query: query.clone(), output, monte_carlo })
}

fn run_exact(
    p: &PathProcess,
    base: Option<&PathProcess>,
    target: &Target,
    opts: &QueryOptions,
) -> Result<(QueryOutput, Option<MonteCarloCheck>)> {
    match target {
        Target::PartialSums { depths } => {
            let rv = p.limit_rv().abs();
            require_terminating(p)?;
            let rows = partial_sums(p.space(), &rv, depths)?
                .into_iter()
                .map(|(n, partial_sum)| PartialSumRow { n, partial_sum })
                .collect();
            return Ok((QueryOutput::PartialSums { engine: "exact", rows }, None));
        }
        Target::Blowup { m } => {
            let base = base.unwrap_or(p);
            let curve = randomized_blowup_curve(base, m)?;
            return Ok((QueryOutput::Blowup { engine: "exact", curve }, None));
        }
        _ => {}
    }
    let rv = exact_rv(p, target)?.expect("pointwise target");
    let result = expectation(p.space(), &rv, &opts.policy)?;
    let mc = if opts.reps == 0 {
        None
    } else {
        Some(match target {
            Target::Stopped { spec, abs } => {
                let horizon = match spec.static_bound(p.space()) {
                    Some(ExtTime::Finite(b)) => floor_u64(&b) + 1,
                    _ => opts.policy.max_depth,
                };
                let e = estimate_stopped(StoppedSource::Paths(p), spec, opts.reps, horizon, opts.seed, *abs)?;
                MonteCarloCheck {
                    engine: "monte_carlo",
                    estimate: e.estimate,
                    overrun_fraction: Some(e.overrun_fraction),
                    censored: Some(e.censored),
                }
            }
            _ => MonteCarloCheck {
                engine: "monte_carlo",
                estimate: estimate_expectation(p.space(), &rv, opts.reps, opts.seed)?,
                overrun_fraction: None,
                censored: None,
            },
        })
    };
    Ok((exact(result), mc))
}

fn run_walk(w: &GenerativeProcess, target: &Target, opts: &QueryOptions) -> Result<(QueryOutput, Option<MonteCarloCheck>)> {
    match target {
        Target::ValueAt { t } => {
            let v = marginal_means(w, std::slice::from_ref(t))?.remove(0);
            Ok((exact(ExpectationResult::Exact(v)), None))
        }
        Target::Stopped { spec, abs: false } => {
            spec.validate()?;
            let summary = if w.horizon <= EXACT_WALK_HORIZON {
                let law = stop_law_exact(w, spec)?;
                WalkStopSummary {
                    engine: "exact_dp",
                    horizon: w.horizon,
                    stopped_mass: Value::Exact(Dual::from(&law.stopped_mass)),
                    stopped_mean: Value::Exact(Dual::from(&law.stopped_mean)),
                    truncated_mean: Value::Exact(Dual::from(&law.truncated_mean)),
                }
            } else {
                let law = stop_law_float(w, spec)?;
                WalkStopSummary {
                    engine: "float_dp",
                    horizon: w.horizon,
                    stopped_mass: Value::Float(law.stopped_mass),
                    stopped_mean: Value::Float(law.stopped_mean),
                    truncated_mean: Value::Float(law.truncated_mean),
                }
            };
            let mc = if opts.reps == 0 {
                None
            } else {
                let e = estimate_stopped(StoppedSource::Walk(w), spec, opts.reps, w.horizon, opts.seed, false)?;
                Some(MonteCarloCheck {
                    engine: "monte_carlo",
                    estimate: e.estimate,
                    overrun_fraction: Some(e.overrun_fraction),
                    censored: Some(e.censored),
                })
            };
            Ok((QueryOutput::WalkStopped(summary), mc))
        }
        Target::Limit | Target::LimitAbs | Target::LiminfAbs | Target::PartialSums { .. } => Err(Error::NotTerminating),
        other => Err(Error::Unsupported(format!("{} on a generative walk", target_name(other)))),
    }
}

pub fn target_name(t: &Target) -> &'static str {
    match t {
        Target::ValueAt { .. } => "value_at",
        Target::AbsValueAt { .. } => "abs_value_at",
        Target::Limit => "limit",
        Target::LimitAbs => "limit_abs",
        Target::LiminfAbs => "liminf_abs",
        Target::Stopped { .. } => "stopped",
        Target::PartialSums { .. } => "partial_sums",
        Target::Blowup { .. } => "blowup",
    }
}
