//! Extended nonnegative times `[0, ∞]`.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::rational::{fmt_rational, parse_rational, Rational};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ExtTime {
    Finite(Rational),
    Infinite,
}

impl ExtTime {
    pub fn finite(&self) -> Option<&Rational> {
        match self {
            ExtTime::Finite(t) => Some(t),
            ExtTime::Infinite => None,
        }
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, ExtTime::Finite(_))
    }

    pub fn min_of(self, other: ExtTime) -> ExtTime {
        if self <= other {
            self
        } else {
            other
        }
    }

    pub fn max_of(self, other: ExtTime) -> ExtTime {
        if self >= other {
            self
        } else {
            other
        }
    }

    /// `self <= t` for a finite `t`.
    pub fn le(&self, t: &Rational) -> bool {
        match self {
            ExtTime::Finite(s) => s <= t,
            ExtTime::Infinite => false,
        }
    }
}

impl From<Rational> for ExtTime {
    fn from(t: Rational) -> Self {
        ExtTime::Finite(t)
    }
}

impl PartialOrd for ExtTime {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for ExtTime {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (ExtTime::Finite(a), ExtTime::Finite(b)) => a.cmp(b),
            (ExtTime::Finite(_), ExtTime::Infinite) => Ordering::Less,
            (ExtTime::Infinite, ExtTime::Finite(_)) => Ordering::Greater,
            (ExtTime::Infinite, ExtTime::Infinite) => Ordering::Equal,
        }
    }
}

impl fmt::Display for ExtTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtTime::Finite(t) => f.write_str(&fmt_rational(t)),
            ExtTime::Infinite => f.write_str("inf"),
        }
    }
}

impl Serialize for ExtTime {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for ExtTime {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        if s == "inf" {
            return Ok(ExtTime::Infinite);
        }
        parse_rational(&s).map(ExtTime::Finite).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::int;

    #[test]
    fn infinity_dominates() {
        assert!(ExtTime::Finite(int(1_000_000)) < ExtTime::Infinite);
        assert_eq!(ExtTime::Infinite.min_of(ExtTime::Finite(int(3))), ExtTime::Finite(int(3)));
        assert_eq!(ExtTime::Infinite.max_of(ExtTime::Finite(int(3))), ExtTime::Infinite);
    }
}
