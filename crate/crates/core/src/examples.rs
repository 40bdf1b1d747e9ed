//! Ready-made processes with known answers.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::analysis::{Model, Statement, Verdict};
use crate::error::{Error, Result};
use crate::measure::{CountableSpace, Outcome};
use crate::process::{GenerativeProcess, PathProcess, PiecewiseConstantPath, ProcessKind, TailModel};
use crate::rational::{int, ratio, Rational};
use crate::stopping::{extend_with_uniform, StoppingSpec, UniformExtension};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExampleName {
    Cherny,
    ChernyRandomized,
    RandomWalk,
    TwoAtomNonadapted,
    NonnegativeControl,
}

impl ExampleName {
    pub const ALL: [ExampleName; 5] = [
        ExampleName::Cherny,
        ExampleName::ChernyRandomized,
        ExampleName::RandomWalk,
        ExampleName::TwoAtomNonadapted,
        ExampleName::NonnegativeControl,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExampleName::Cherny => "cherny",
            ExampleName::ChernyRandomized => "cherny_randomized",
            ExampleName::RandomWalk => "random_walk",
            ExampleName::TwoAtomNonadapted => "two_atom_nonadapted",
            ExampleName::NonnegativeControl => "nonnegative_control",
        }
    }
}

impl fmt::Display for ExampleName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExampleName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ExampleName::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown example `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExampleParams {
    /// Working enumeration depth `N`.
    pub depth: u64,
    /// Grid size `m` of the uniform extension.
    pub levels: u64,
    /// Horizon `H` of generative processes.
    pub horizon: u64,
    /// Time from which `U` is observable.
    #[serde(with = "crate::rational::serde_rational")]
    pub reveal: Rational,
}

impl Default for ExampleParams {
    fn default() -> Self {
        ExampleParams { depth: 2000, levels: 10_000, horizon: 1000, reveal: int(0) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleDescriptor {
    pub name: ExampleName,
    pub params: ExampleParams,
}

impl ExampleDescriptor {
    pub fn new(name: ExampleName) -> Self {
        ExampleDescriptor { name, params: ExampleParams::default() }
    }

    pub fn with_params(name: ExampleName, params: ExampleParams) -> Self {
        ExampleDescriptor { name, params }
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.params;
        if p.depth == 0 || p.levels == 0 || p.horizon == 0 {
            return Err(Error::InvalidParameter("depth, levels and horizon must be positive".into()));
        }
        if p.reveal < int(0) {
            return Err(Error::InvalidParameter("reveal time must be nonnegative".into()));
        }
        Ok(())
    }
}

/// An instantiated example.
#[derive(Debug, Clone)]
pub struct BuiltExample {
    pub descriptor: ExampleDescriptor,
    pub model: Model,
    /// The process before randomization, when the model lives on an extension.
    pub base: Option<PathProcess>,
    pub extension: Option<UniformExtension>,
    pub metadata: BTreeMap<String, String>,
}

/// `X = Dσ²·1[σ, ∞)` on the Cherny space, with the unjumped atoms at 0.
pub fn cherny_process() -> PathProcess {
    PathProcess::new(CountableSpace::cherny(), ProcessKind::Terminating, |a| match a.outcome {
        Outcome::Jump { sigma: Some(n), sign } => {
            let n = i64::try_from(n).map_err(|_| Error::InvalidParameter("jump epoch too large".into()))?;
            Ok(PiecewiseConstantPath::single_jump(int(0), int(n), int(i64::from(sign) * n * n)))
        }
        Outcome::Jump { sigma: None, .. } => Ok(PiecewiseConstantPath::constant(int(0))),
        _ => Err(Error::UnknownAtom(a.id)),
    })
    .with_tail(TailModel::integer_epochs(PiecewiseConstantPath::constant(int(0))))
}

/// A finite space with explicit paths.
pub fn finite_process(atoms: Vec<(Rational, PiecewiseConstantPath)>) -> Result<PathProcess> {
    let paths: Vec<PiecewiseConstantPath> = atoms.iter().map(|(_, p)| p.clone()).collect();
    let space = CountableSpace::finite(
        atoms.into_iter().enumerate().map(|(i, (w, _))| (Outcome::Label(i as u64), w)).collect(),
    )?;
    Ok(PathProcess::new(space, ProcessKind::Terminating, move |a| match a.outcome {
        Outcome::Label(i) => paths.get(i as usize).cloned().ok_or(Error::UnknownAtom(a.id)),
        _ => Err(Error::UnknownAtom(a.id)),
    }))
}

/// The constant process `c` on a one-point space.
pub fn constant_process(c: Rational) -> PathProcess {
    finite_process(vec![(int(1), PiecewiseConstantPath::constant(c))]).expect("unit mass")
}

/// Two equally likely atoms, both at 0 on `[0, 1)`, ending at 5 and at 0.
pub fn two_atom_process() -> PathProcess {
    finite_process(vec![
        (ratio(1, 2), PiecewiseConstantPath::single_jump(int(0), int(1), int(5))),
        (ratio(1, 2), PiecewiseConstantPath::constant(int(0))),
    ])
    .expect("two atoms of mass 1/2")
}

pub fn build(desc: &ExampleDescriptor) -> Result<BuiltExample> {
    desc.validate()?;
    let p = &desc.params;
    let mut metadata = BTreeMap::new();
    let (model, base, extension) = match desc.name {
        ExampleName::Cherny => {
            metadata.insert("space".into(), "atoms (n, ±1) of mass 1/(4n²); unjumped mass in the residual".into());
            metadata.insert("path".into(), "0 before σ, then Dσ²".into());
            (Model::Exact(cherny_process()), None, None)
        }
        ExampleName::ChernyRandomized => {
            let base = cherny_process();
            let ext = extend_with_uniform(base.space(), StoppingSpec::at(p.reveal.clone()), p.levels)?;
            metadata.insert("uniform".into(), format!("{} mid-quantile levels, revealed at {}", p.levels, p.reveal));
            metadata.insert("witness".into(), "τ = 1/U".into());
            (Model::Exact(ext.lift(&base)), Some(base), Some(ext))
        }
        ExampleName::RandomWalk => {
            metadata.insert("kernel".into(), "±1 with probability 1/2 at integer times".into());
            (Model::Walk(GenerativeProcess::random_walk(p.horizon)?), None, None)
        }
        ExampleName::TwoAtomNonadapted => {
            metadata.insert("witness".into(), "first time ||X_t| − liminf|X|| ≤ 1/n looks ahead".into());
            (Model::Exact(two_atom_process()), None, None)
        }
        ExampleName::NonnegativeControl => {
            metadata.insert(
                "missing".into(),
                "a process with constant means that is not a martingale needs a continuous strict local martingale; not built".into(),
            );
            (Model::Exact(constant_process(int(1))), None, None)
        }
    };
    Ok(BuiltExample { descriptor: desc.clone(), model, base, extension, metadata })
}

/// Ground-truth verdicts the analysis must reproduce.
pub fn expected_properties(desc: &ExampleDescriptor) -> Vec<(Statement, Verdict)> {
    use Statement::*;
    use Verdict::*;
    match desc.name {
        ExampleName::Cherny => vec![(V, HoldsOnSuite), (IV, HoldsOnSuite), (III, Violated), (II, Violated), (I, Violated)],
        ExampleName::ChernyRandomized => {
            vec![(V, HoldsOnSuite), (IV, Violated), (III, Violated), (II, Violated), (I, Violated)]
        }
        ExampleName::RandomWalk => vec![(V, HoldsOnSuite), (IV, Violated)],
        ExampleName::TwoAtomNonadapted => vec![(V, Violated), (IV, Violated), (III, Violated), (II, Violated), (I, Violated)],
        ExampleName::NonnegativeControl => {
            vec![(V, HoldsOnSuite), (IV, HoldsOnSuite), (III, HoldsOnSuite), (II, HoldsOnSuite), (I, HoldsOnSuite)]
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::{expectation, ExpectationPolicy, ExpectationResult};

    #[test]
    fn names_round_trip() {
        for n in ExampleName::ALL {
            assert_eq!(n.as_str().parse::<ExampleName>().unwrap(), n);
        }
        assert!("brownian".parse::<ExampleName>().is_err());
    }

    #[test]
    fn cherny_depth_one() {
        let mut d = ExampleDescriptor::new(ExampleName::Cherny);
        d.params.depth = 1;
        let b = build(&d).unwrap();
        let Model::Exact(p) = b.model else { panic!() };
        let e = p.space().enumerate_atoms(1).unwrap();
        assert_eq!(e.atoms.len(), 2);
        assert!(e.atoms.iter().all(|(_, w)| *w == ratio(1, 4)));
        assert_eq!(e.residual, ratio(1, 2));
    }

    #[test]
    fn control_has_unit_mean() {
        let Model::Exact(p) = build(&ExampleDescriptor::new(ExampleName::NonnegativeControl)).unwrap().model else {
            panic!()
        };
        for t in [int(0), ratio(7, 3), int(100)] {
            let r = expectation(p.space(), &p.value_rv(&t), &ExpectationPolicy::default()).unwrap();
            assert_eq!(r, ExpectationResult::Exact(int(1)));
        }
    }

    #[test]
    fn walk_of_horizon_two_has_four_paths() {
        let mut d = ExampleDescriptor::new(ExampleName::RandomWalk);
        d.params.horizon = 2;
        let Model::Walk(w) = build(&d).unwrap().model else { panic!() };
        let e = w.enumerate().unwrap().space().enumerate_atoms(1).unwrap();
        assert_eq!(e.atoms.len(), 4);
        assert!(e.atoms.iter().all(|(_, w)| *w == ratio(1, 4)));
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        let mut d = ExampleDescriptor::new(ExampleName::ChernyRandomized);
        d.params.levels = 0;
        assert!(build(&d).is_err());
    }
}
