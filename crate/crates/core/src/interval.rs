//! Closed intervals with exact rational endpoints.

use std::fmt;

use num::{BigRational, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rational;

/// Closed range `[lo, hi]` with `lo <= hi`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawInterval", into = "RawInterval")]
pub struct Interval {
    lo: BigRational,
    hi: BigRational,
}

#[derive(Serialize, Deserialize)]
struct RawInterval {
    #[serde(with = "rational::serde_str")]
    lo: BigRational,
    #[serde(with = "rational::serde_str")]
    hi: BigRational,
}

impl TryFrom<RawInterval> for Interval {
    type Error = Error;
    fn try_from(raw: RawInterval) -> Result<Self> {
        Interval::new(raw.lo, raw.hi)
    }
}

impl From<Interval> for RawInterval {
    fn from(i: Interval) -> Self {
        RawInterval { lo: i.lo, hi: i.hi }
    }
}

/// Result of a subtraction that may have been clamped at zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Difference {
    pub interval: Interval,
    /// Set when at least one endpoint was raised to zero.
    pub clamped: bool,
}

impl Interval {
    pub fn new(lo: BigRational, hi: BigRational) -> Result<Self> {
        if lo > hi {
            return Err(Error::InvalidInterval { lo: lo.to_string(), hi: hi.to_string() });
        }
        Ok(Interval { lo, hi })
    }

    pub fn point(x: BigRational) -> Self {
        Interval { lo: x.clone(), hi: x }
    }

    pub fn zero() -> Self {
        Interval::point(BigRational::zero())
    }

    /// Convenience for literal bounds, e.g. `Interval::parse("0.5", "0.7")`.
    pub fn parse(lo: &str, hi: &str) -> Result<Self> {
        Interval::new(rational::parse_rational(lo)?, rational::parse_rational(hi)?)
    }

    pub fn lo(&self) -> &BigRational {
        &self.lo
    }

    pub fn hi(&self) -> &BigRational {
        &self.hi
    }

    pub fn midpoint(&self) -> BigRational {
        (&self.lo + &self.hi) / BigRational::from_integer(2.into())
    }

    pub fn contains(&self, x: &BigRational) -> bool {
        &self.lo <= x && x <= &self.hi
    }

    pub fn add(&self, other: &Interval) -> Interval {
        Interval { lo: &self.lo + &other.lo, hi: &self.hi + &other.hi }
    }

    /// Product hull: min and max over the four endpoint products.
    pub fn mul(&self, other: &Interval) -> Interval {
        let products = [
            &self.lo * &other.lo,
            &self.lo * &other.hi,
            &self.hi * &other.lo,
            &self.hi * &other.hi,
        ];
        let lo = products.iter().min().cloned().expect("four products");
        let hi = products.iter().max().cloned().expect("four products");
        Interval { lo, hi }
    }

    /// `[a.lo - b.hi, a.hi - b.lo]`, optionally raising negative endpoints to zero.
    pub fn sub(&self, other: &Interval, clamp_at_zero: bool) -> Difference {
        let mut lo = &self.lo - &other.hi;
        let mut hi = &self.hi - &other.lo;
        let mut clamped = false;
        if clamp_at_zero {
            if lo.is_negative() {
                lo = BigRational::zero();
                clamped = true;
            }
            if hi.is_negative() {
                hi = BigRational::zero();
                clamped = true;
            }
        }
        Difference { interval: Interval { lo, hi }, clamped }
    }

    /// Endpoint-wise maximum.
    pub fn max(&self, other: &Interval) -> Interval {
        Interval {
            lo: self.lo.clone().max(other.lo.clone()),
            hi: self.hi.clone().max(other.hi.clone()),
        }
    }

    /// `self` lies inside `outer`.
    pub fn is_subset_of(&self, outer: &Interval) -> bool {
        outer.lo <= self.lo && self.hi <= outer.hi
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.lo, self.hi)
    }
}
