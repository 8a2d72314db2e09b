//! Dyadic intervals `[k 2^-n, (k+1) 2^-n)` inside `[0,1)`.

use std::fmt;
use std::str::FromStr;

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{LabError, Result};

/// Generation/index address. The index is arbitrary precision because the
/// stopping-time transforms produce intervals far below generation 64.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DyadicInterval {
    pub gen: u32,
    pub idx: BigUint,
}

impl DyadicInterval {
    pub fn unit() -> Self {
        DyadicInterval { gen: 0, idx: BigUint::zero() }
    }

    pub fn new(gen: u32, idx: u64) -> Result<Self> {
        Self::from_big(gen, BigUint::from(idx))
    }

    pub fn from_big(gen: u32, idx: BigUint) -> Result<Self> {
        if idx.bits() > gen as u64 {
            return Err(LabError::Param(format!("index {idx} out of range for generation {gen}")));
        }
        Ok(DyadicInterval { gen, idx })
    }

    /// `I_n = [0, 2^-n)`.
    pub fn i_n(n: u32) -> Self {
        DyadicInterval { gen: n, idx: BigUint::zero() }
    }

    /// `J_n = [2^-n, 2^{-n+1})`, defined for `n >= 1`.
    pub fn j_n(n: u32) -> Self {
        assert!(n >= 1, "J_n needs n >= 1");
        DyadicInterval { gen: n, idx: BigUint::one() }
    }

    pub fn left(&self) -> Self {
        DyadicInterval { gen: self.gen + 1, idx: &self.idx << 1u32 }
    }

    pub fn right(&self) -> Self {
        DyadicInterval { gen: self.gen + 1, idx: (&self.idx << 1u32) + 1u32 }
    }

    pub fn child(&self, right: bool) -> Self {
        if right {
            self.right()
        } else {
            self.left()
        }
    }

    pub fn parent(&self) -> Option<Self> {
        if self.gen == 0 {
            None
        } else {
            Some(DyadicInterval { gen: self.gen - 1, idx: &self.idx >> 1u32 })
        }
    }

    /// Descendant `k` generations down with local index `j < 2^k`.
    pub fn descendant(&self, k: u32, j: u64) -> Self {
        DyadicInterval { gen: self.gen + k, idx: (&self.idx << k) + j }
    }

    pub fn len(&self) -> f64 {
        pow2(-(self.gen as i64))
    }

    pub fn start(&self) -> f64 {
        let bits = self.idx.bits();
        if bits <= 64 {
            self.idx.to_u64().unwrap() as f64 * self.len()
        } else {
            let shift = bits - 64;
            let top = (&self.idx >> shift).to_u64().unwrap() as f64;
            top * pow2(shift as i64 - self.gen as i64)
        }
    }

    pub fn end(&self) -> f64 {
        self.start() + self.len()
    }

    pub fn is_left_child(&self) -> bool {
        self.gen > 0 && !self.idx.bit(0)
    }

    /// Direction taken at depth `level` (0-based) on the way from `[0,1)`.
    pub fn step(&self, level: u32) -> bool {
        self.idx.bit((self.gen - 1 - level) as u64)
    }

    /// The sequence of left/right moves from `[0,1)` down to this interval.
    pub fn path(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.gen).map(move |l| self.step(l))
    }

    pub fn contains(&self, other: &DyadicInterval) -> bool {
        other.gen >= self.gen && (&other.idx >> (other.gen - self.gen)) == self.idx
    }

    pub fn disjoint(&self, other: &DyadicInterval) -> bool {
        !self.contains(other) && !other.contains(self)
    }

    pub fn touches_boundary(&self) -> bool {
        self.idx.is_zero() || self.idx == (BigUint::one() << self.gen) - 1u32
    }

    /// Equal-length neighbour to the right, if it stays inside `[0,1)`.
    pub fn right_neighbor(&self) -> Option<Self> {
        let next = &self.idx + 1u32;
        if next.bits() > self.gen as u64 {
            None
        } else {
            Some(DyadicInterval { gen: self.gen, idx: next })
        }
    }

    pub fn key(&self) -> String {
        format!("{}:{}", self.gen, self.idx)
    }
}

impl fmt::Display for DyadicInterval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.gen, self.idx)
    }
}

impl FromStr for DyadicInterval {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        let (g, i) = s.split_once(':').ok_or_else(|| LabError::Param(format!("interval key `{s}` is not of the form gen:idx")))?;
        let gen: u32 = g.trim().parse().map_err(|_| LabError::Param(format!("bad generation in `{s}`")))?;
        let idx: BigUint = i.trim().parse().map_err(|_| LabError::Param(format!("bad index in `{s}`")))?;
        DyadicInterval::from_big(gen, idx)
    }
}

impl Serialize for DyadicInterval {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.key())
    }
}

impl<'de> Deserialize<'de> for DyadicInterval {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// `2^e` without overflow for moderate exponents; underflows to 0 for very deep cells.
pub fn pow2(e: i64) -> f64 {
    if e < -1074 {
        0.0
    } else if e > 1023 {
        f64::INFINITY
    } else {
        2f64.powi(e as i32)
    }
}
