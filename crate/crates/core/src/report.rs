//! Versioned JSON envelopes and the serialized forms of exact results.

use serde::ser::{SerializeMap, SerializeStruct};
use serde::{Serialize, Serializer};

use crate::measure::{DivergenceCertificate, ExpectationResult};
use crate::rational::Dual;

pub const SCHEMA: &str = "mart-lab/1";

impl Serialize for DivergenceCertificate {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Sample {
            n: u64,
            partial_sum: Dual,
        }
        let samples: Vec<Sample> =
            self.growth_samples.iter().map(|(n, v)| Sample { n: *n, partial_sum: Dual::from(v) }).collect();
        let mut st = s.serialize_struct("DivergenceCertificate", 5)?;
        st.serialize_field("kind", &self.kind)?;
        st.serialize_field("threshold", &Dual::from(&self.threshold))?;
        st.serialize_field("depth", &self.depth)?;
        st.serialize_field("partial_sum", &Dual::from(&self.partial_sum))?;
        st.serialize_field("growth_samples", &samples)?;
        st.end()
    }
}

impl Serialize for ExpectationResult {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut m = s.serialize_map(None)?;
        match self {
            ExpectationResult::Exact(v) => {
                m.serialize_entry("kind", "exact")?;
                m.serialize_entry("value", &Dual::from(v))?;
            }
            ExpectationResult::Truncated { value, tail_bound } => {
                m.serialize_entry("kind", "truncated")?;
                m.serialize_entry("value", &Dual::from(value))?;
                m.serialize_entry("tail_bound", &Dual::from(tail_bound))?;
            }
            ExpectationResult::Divergent(c) => {
                m.serialize_entry("kind", "divergent")?;
                m.serialize_entry("certificate", c)?;
            }
        }
        m.end()
    }
}

/// Top-level report: schema tag, the command, its resolved configuration,
/// and the payload.
#[derive(Debug, Clone, Serialize)]
pub struct Envelope<C: Serialize, T: Serialize> {
    pub schema: &'static str,
    pub command: String,
    pub config: C,
    pub result: T,
}

impl<C: Serialize, T: Serialize> Envelope<C, T> {
    pub fn new(command: impl Into<String>, config: C, result: T) -> Self {
        Envelope { schema: SCHEMA, command: command.into(), config, result }
    }

    /// Pretty JSON with a trailing newline. Field order is fixed by the types
    /// and maps are ordered, so equal inputs render to equal bytes.
    pub fn to_json(&self) -> serde_json::Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}
