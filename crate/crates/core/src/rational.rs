//! Exact rationals and their `"p/q"` text form.

use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

pub type Rational = BigRational;

pub fn int(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

pub fn ratio(n: i64, d: i64) -> Rational {
    Rational::new(BigInt::from(n), BigInt::from(d))
}

/// Renders `p/q` (always with a denominator, `0/1` for zero).
pub fn fmt_rational(q: &Rational) -> String {
    format!("{}/{}", q.numer(), q.denom())
}

pub fn to_f64(q: &Rational) -> f64 {
    q.to_f64().unwrap_or_else(|| {
        if q.is_negative() {
            f64::NEG_INFINITY
        } else {
            f64::INFINITY
        }
    })
}

/// Parses `"p/q"`, `"p"`, or a plain decimal such as `"0.25"` or `"1e-3"`.
pub fn parse_rational(s: &str) -> Result<Rational> {
    let s = s.trim();
    if let Some((n, d)) = s.split_once('/') {
        let n = BigInt::from_str(n.trim()).map_err(|e| Error::Parse(format!("{s:?}: {e}")))?;
        let d = BigInt::from_str(d.trim()).map_err(|e| Error::Parse(format!("{s:?}: {e}")))?;
        if d.is_zero() {
            return Err(Error::Parse(format!("{s:?}: zero denominator")));
        }
        return Ok(Rational::new(n, d));
    }
    if let Ok(n) = BigInt::from_str(s) {
        return Ok(Rational::from_integer(n));
    }
    parse_decimal(s)
}

fn parse_decimal(s: &str) -> Result<Rational> {
    let bad = || Error::Parse(format!("{s:?} is not a rational literal"));
    let (mantissa, exp) = match s.find(['e', 'E']) {
        Some(i) => (&s[..i], s[i + 1..].parse::<i32>().map_err(|_| bad())?),
        None => (s, 0),
    };
    let (neg, mantissa) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (whole, frac) = mantissa.split_once('.').unwrap_or((mantissa, ""));
    if whole.is_empty() && frac.is_empty() {
        return Err(bad());
    }
    if !whole.chars().chain(frac.chars()).all(|c| c.is_ascii_digit()) {
        return Err(bad());
    }
    let digits = format!("{whole}{frac}");
    let mut num = BigInt::from_str(if digits.is_empty() { "0" } else { &digits }).map_err(|_| bad())?;
    if neg {
        num = -num;
    }
    let scale = exp - frac.len() as i32;
    let ten = BigInt::from(10);
    Ok(if scale >= 0 {
        Rational::from_integer(num * num_traits::pow(ten, scale as usize))
    } else {
        Rational::new(num, num_traits::pow(ten, (-scale) as usize))
    })
}

/// `⌊q⌋` clamped into `u64` (negative values map to 0).
pub fn floor_u64(q: &Rational) -> u64 {
    if q.is_negative() {
        return 0;
    }
    q.numer().div_floor(q.denom()).to_u64().unwrap_or(u64::MAX)
}

pub fn abs(q: &Rational) -> Rational {
    q.abs()
}

pub fn is_integer(q: &Rational) -> bool {
    q.denom().is_one()
}

/// `a·b`, using machine integers when all four parts fit in `i64`.
pub fn mul_fast(a: &Rational, b: &Rational) -> Rational {
    let parts = (a.numer().to_i64(), a.denom().to_i64(), b.numer().to_i64(), b.denom().to_i64());
    if let (Some(an), Some(ad), Some(bn), Some(bd)) = parts {
        let (n, d) = (an as i128 * bn as i128, ad as i128 * bd as i128);
        let g = n.gcd(&d);
        if g != 0 {
            return Rational::new_raw(BigInt::from(n / g), BigInt::from(d / g));
        }
    }
    a * b
}

/// Dual rendering used by reports: exact plus decimal approximation.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Dual {
    pub exact: String,
    pub approx: f64,
}

impl From<&Rational> for Dual {
    fn from(q: &Rational) -> Self {
        Dual { exact: fmt_rational(q), approx: to_f64(q) }
    }
}

/// Display adapter for `p/q` output.
pub struct PQ<'a>(pub &'a Rational);

impl fmt::Display for PQ<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.0.numer(), self.0.denom())
    }
}

/// `#[serde(with = "serde_rational")]` for `"p/q"` string fields.
pub mod serde_rational {
    use super::*;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(q: &Rational, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&fmt_rational(q))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Rational, D::Error> {
        let s = String::deserialize(d)?;
        parse_rational(&s).map_err(serde::de::Error::custom)
    }

    pub mod vec {
        use super::*;
        use serde::ser::SerializeSeq;

        pub fn serialize<S: Serializer>(v: &[Rational], s: S) -> std::result::Result<S::Ok, S::Error> {
            let mut seq = s.serialize_seq(Some(v.len()))?;
            for q in v {
                seq.serialize_element(&fmt_rational(q))?;
            }
            seq.end()
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<Rational>, D::Error> {
            Vec::<String>::deserialize(d)?
                .iter()
                .map(|s| parse_rational(s).map_err(serde::de::Error::custom))
                .collect()
        }
    }
}

/// `#[serde(serialize_with = "serde_dual::serialize")]`: `{"exact": "p/q", "approx": x}`.
pub mod serde_dual {
    use super::*;
    use serde::{Serialize, Serializer};

    pub fn serialize<S: Serializer>(q: &Rational, s: S) -> std::result::Result<S::Ok, S::Error> {
        Dual::from(q).serialize(s)
    }

    pub fn option<S: Serializer>(q: &Option<Rational>, s: S) -> std::result::Result<S::Ok, S::Error> {
        q.as_ref().map(Dual::from).serialize(s)
    }

    pub fn vec<S: Serializer>(v: &[Rational], s: S) -> std::result::Result<S::Ok, S::Error> {
        v.iter().map(Dual::from).collect::<Vec<_>>().serialize(s)
    }
}

/// Accumulates exact sums, batching terms that share a denominator so long
/// runs of like terms avoid repeated gcd reductions.
#[derive(Debug, Default, Clone)]
pub struct ExactSum {
    groups: std::collections::HashMap<BigInt, BigInt>,
    settled: Rational,
}

impl ExactSum {
    const MAX_GROUPS: usize = 32;

    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, q: &Rational) {
        if q.is_zero() {
            return;
        }
        if let Some(n) = self.groups.get_mut(q.denom()) {
            *n += q.numer();
            return;
        }
        if self.groups.len() >= Self::MAX_GROUPS {
            self.collapse();
        }
        self.groups.insert(q.denom().clone(), q.numer().clone());
    }

    fn collapse(&mut self) {
        for (d, n) in self.groups.drain() {
            self.settled += Rational::new(n, d);
        }
    }

    pub fn value(&self) -> Rational {
        let mut total = self.settled.clone();
        for (d, n) in &self.groups {
            total += Rational::new(n.clone(), d.clone());
        }
        total
    }
}
