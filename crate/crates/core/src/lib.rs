//! Exact optional-sampling laboratory: countable probability spaces,
//! piecewise-constant processes, stopping rules, and checks of the optional
//! sampling hierarchy with witnesses and divergence certificates.

pub mod analysis;
pub mod error;
pub mod examples;
pub mod measure;
pub mod montecarlo;
pub mod process;
pub mod query;
pub mod rational;
pub mod report;
pub mod stopping;
pub mod time;
pub mod walk;

pub use analysis::{AnalysisConfig, Model, Quantity, Statement, StatementVerdict, Verdict, Witness};
pub use error::{Error, Result};
pub use examples::{ExampleDescriptor, ExampleName, ExampleParams};
pub use measure::{CountableSpace, DivergenceCertificate, ExpectationPolicy, ExpectationResult, RandomVariable};
pub use process::{GenerativeProcess, PathProcess, PiecewiseConstantPath};
pub use rational::{Dual, Rational};
pub use stopping::StoppingSpec;
pub use time::ExtTime;
