use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Mul, Sub};

use serde::{Deserialize, Serialize};

/// A duration or timestamp in integer picoseconds.
///
/// Integer time keeps event ordering bit-exact; conversion from nanoseconds
/// rounds to the nearest picosecond.
#[derive(
    Copy, Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct Ps(pub u64);

impl Ps {
    /// Zero duration.
    pub const ZERO: Ps = Ps(0);

    /// From a (possibly fractional) nanosecond value.
    pub fn from_ns(ns: f64) -> Ps {
        assert!(ns >= 0.0 && ns.is_finite(), "negative or non-finite duration: {ns}");
        Ps((ns * 1000.0).round() as u64)
    }

    /// From whole nanoseconds.
    pub const fn ns(ns: u64) -> Ps {
        Ps(ns * 1000)
    }

    /// From whole microseconds.
    pub const fn us(us: u64) -> Ps {
        Ps(us * 1_000_000)
    }

    /// From whole milliseconds.
    pub const fn ms(ms: u64) -> Ps {
        Ps(ms * 1_000_000_000)
    }

    /// Value in nanoseconds.
    pub fn as_ns(self) -> f64 {
        self.0 as f64 / 1000.0
    }

    /// Saturating subtraction.
    pub fn saturating_sub(self, rhs: Ps) -> Ps {
        Ps(self.0.saturating_sub(rhs.0))
    }
}

impl Add for Ps {
    type Output = Ps;
    fn add(self, rhs: Ps) -> Ps {
        Ps(self.0 + rhs.0)
    }
}

impl AddAssign for Ps {
    fn add_assign(&mut self, rhs: Ps) {
        self.0 += rhs.0;
    }
}

impl Sub for Ps {
    type Output = Ps;
    fn sub(self, rhs: Ps) -> Ps {
        Ps(self.0 - rhs.0)
    }
}

impl Mul<u64> for Ps {
    type Output = Ps;
    fn mul(self, rhs: u64) -> Ps {
        Ps(self.0 * rhs)
    }
}

impl Sum for Ps {
    fn sum<I: Iterator<Item = Ps>>(iter: I) -> Ps {
        Ps(iter.map(|p| p.0).sum())
    }
}

impl fmt::Display for Ps {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ns", self.as_ns())
    }
}
