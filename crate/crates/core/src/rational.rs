//! Exact non-negative rationals for length weights and ratio bounds.
//!
//! Ratio checks sit right on their boundaries (a target exactly one third of
//! its source must survive), so they are compared exactly instead of in
//! floating point.

use std::fmt;
use std::str::FromStr;

use num_rational::Ratio;
use num_traits::{CheckedDiv, CheckedMul};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Rational(Ratio<u64>);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid rational {0:?}: expected \"a\", \"a/b\" or a decimal like \"0.5\"")]
pub struct ParseRationalError(String);

impl Rational {
    pub const ZERO: Rational = Rational(Ratio::new_raw(0, 1));
    pub const ONE: Rational = Rational(Ratio::new_raw(1, 1));

    /// Panics if `denom` is zero.
    pub fn new(numer: u64, denom: u64) -> Self {
        Rational(Ratio::new(numer, denom))
    }

    pub fn from_integer(value: u64) -> Self {
        Rational(Ratio::from_integer(value))
    }

    pub fn numer(&self) -> u64 {
        *self.0.numer()
    }

    pub fn denom(&self) -> u64 {
        *self.0.denom()
    }

    pub fn is_zero(&self) -> bool {
        self.numer() == 0
    }

    pub fn to_f64(&self) -> f64 {
        self.numer() as f64 / self.denom() as f64
    }

    pub fn checked_mul(&self, other: Rational) -> Option<Rational> {
        self.0.checked_mul(&other.0).map(Rational)
    }

    /// `None` when `other` is zero.
    pub fn checked_div(&self, other: Rational) -> Option<Rational> {
        if other.is_zero() {
            return None;
        }
        self.0.checked_div(&other.0).map(Rational)
    }
}

impl Default for Rational {
    fn default() -> Self {
        Rational::ONE
    }
}

impl fmt::Display for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.denom() == 1 {
            write!(f, "{}", self.numer())
        } else {
            write!(f, "{}/{}", self.numer(), self.denom())
        }
    }
}

impl FromStr for Rational {
    type Err = ParseRationalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ParseRationalError(s.to_string());
        let s = s.trim();
        if let Some((n, d)) = s.split_once('/') {
            let n: u64 = n.trim().parse().map_err(|_| err())?;
            let d: u64 = d.trim().parse().map_err(|_| err())?;
            if d == 0 {
                return Err(err());
            }
            return Ok(Rational::new(n, d));
        }
        if let Some((int, frac)) = s.split_once('.') {
            if frac.is_empty() || frac.len() > 18 || !frac.bytes().all(|b| b.is_ascii_digit()) {
                return Err(err());
            }
            let int: u64 = if int.is_empty() {
                0
            } else {
                int.parse().map_err(|_| err())?
            };
            let frac_value: u64 = frac.parse().map_err(|_| err())?;
            let scale = 10u64.pow(frac.len() as u32);
            let numer = int
                .checked_mul(scale)
                .and_then(|v| v.checked_add(frac_value))
                .ok_or_else(err)?;
            return Ok(Rational::new(numer, scale));
        }
        s.parse::<u64>().map(Rational::from_integer).map_err(|_| err())
    }
}

impl Serialize for Rational {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Rational {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Int(u64),
            Text(String),
        }
        match Repr::deserialize(deserializer)? {
            Repr::Int(v) => Ok(Rational::from_integer(v)),
            Repr::Text(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}
