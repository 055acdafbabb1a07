//! Unit handling at the configuration boundary.
//!
//! Every frequency inside the library is an angular frequency in rad/s and
//! every duration is in seconds. Text inputs must carry an explicit unit
//! (`"25.5 kHz"`, `"980 us"`); ordinary frequencies are multiplied by 2π on
//! the way in. Serialization writes `"<value> rad/s"` / `"<value> s"` so that a
//! round trip through text is bit-exact.

use std::f64::consts::TAU;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Converts an ordinary frequency in Hz to rad/s.
pub fn hz(f: f64) -> f64 {
    f * TAU
}

/// Converts rad/s to Hz.
pub fn to_hz(w: f64) -> f64 {
    w / TAU
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dimension {
    Frequency,
    Time,
}

/// A parsed physical quantity in internal units (rad/s or s).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quantity {
    pub value: f64,
    pub dimension: Dimension,
}

impl Quantity {
    pub fn frequency(rad_per_s: f64) -> Self {
        Self {
            value: rad_per_s,
            dimension: Dimension::Frequency,
        }
    }

    pub fn time(seconds: f64) -> Self {
        Self {
            value: seconds,
            dimension: Dimension::Time,
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let text = text.trim();
        let split = text
            .find(|c: char| c.is_whitespace())
            .ok_or_else(|| Error::Config(format!("missing unit in {text:?}")))?;
        let (num, unit) = text.split_at(split);
        let value: f64 = num
            .parse()
            .map_err(|_| Error::Config(format!("invalid number {num:?} in {text:?}")))?;
        if !value.is_finite() {
            return Err(Error::Config(format!("non-finite value in {text:?}")));
        }
        let q = match unit.trim() {
            "rad/s" => Self::frequency(value),
            "krad/s" => Self::frequency(value * 1e3),
            "Hz" => Self::frequency(hz(value)),
            "kHz" => Self::frequency(hz(value * 1e3)),
            "MHz" => Self::frequency(hz(value * 1e6)),
            "GHz" => Self::frequency(hz(value * 1e9)),
            "s" => Self::time(value),
            "ms" => Self::time(value * 1e-3),
            "us" | "µs" | "μs" => Self::time(value * 1e-6),
            "ns" => Self::time(value * 1e-9),
            other => return Err(Error::Config(format!("unknown unit {other:?} in {text:?}"))),
        };
        Ok(q)
    }

    pub fn expect(self, dimension: Dimension) -> Result<f64> {
        if self.dimension == dimension {
            Ok(self.value)
        } else {
            Err(Error::Config(format!(
                "expected a {dimension:?} quantity, found {:?}",
                self.dimension
            )))
        }
    }
}

impl fmt::Display for Quantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.dimension {
            Dimension::Frequency => write!(f, "{} rad/s", self.value),
            Dimension::Time => write!(f, "{} s", self.value),
        }
    }
}

impl Serialize for Quantity {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Quantity {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        Quantity::parse(&text).map_err(serde::de::Error::custom)
    }
}

fn parse_as<E: serde::de::Error>(text: &str, dim: Dimension) -> std::result::Result<f64, E> {
    Quantity::parse(text)
        .and_then(|q| q.expect(dim))
        .map_err(E::custom)
}

/// `#[serde(with = "units::freq")]` for `f64` fields holding rad/s.
pub mod freq {
    use super::*;

    pub fn serialize<S: serde::Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
        Quantity::frequency(*v).serialize(s)
    }

    pub fn deserialize<'de, D: serde::Deserializer<'de>>(
        d: D,
    ) -> std::result::Result<f64, D::Error> {
        let text = String::deserialize(d)?;
        parse_as(&text, Dimension::Frequency)
    }
}

/// `#[serde(with = "units::duration")]` for `f64` fields holding seconds.
pub mod duration {
    use super::*;

    pub fn serialize<S: serde::Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
        Quantity::time(*v).serialize(s)
    }

    pub fn deserialize<'de, D: serde::Deserializer<'de>>(
        d: D,
    ) -> std::result::Result<f64, D::Error> {
        let text = String::deserialize(d)?;
        parse_as(&text, Dimension::Time)
    }
}

/// Optional duration; the literal `"auto"` (or an absent key) maps to `None`.
pub mod duration_opt {
    use super::*;

    pub fn serialize<S: serde::Serializer>(
        v: &Option<f64>,
        s: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        match v {
            Some(t) => Quantity::time(*t).serialize(s),
            None => s.serialize_str("auto"),
        }
    }

    pub fn deserialize<'de, D: serde::Deserializer<'de>>(
        d: D,
    ) -> std::result::Result<Option<f64>, D::Error> {
        let text = String::deserialize(d)?;
        if text.trim() == "auto" {
            Ok(None)
        } else {
            parse_as(&text, Dimension::Time).map(Some)
        }
    }
}

/// `Vec<f64>` of rad/s values.
pub mod freq_vec {
    use super::*;

    pub fn serialize<S: serde::Serializer>(
        v: &[f64],
        s: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeSeq;
        let mut seq = s.serialize_seq(Some(v.len()))?;
        for x in v {
            seq.serialize_element(&Quantity::frequency(*x))?;
        }
        seq.end()
    }

    pub fn deserialize<'de, D: serde::Deserializer<'de>>(
        d: D,
    ) -> std::result::Result<Vec<f64>, D::Error> {
        let items = Vec::<String>::deserialize(d)?;
        items
            .iter()
            .map(|t| parse_as(t, Dimension::Frequency))
            .collect()
    }
}

/// `[f64; 2]` of rad/s values.
pub mod freq_pair {
    use super::*;

    pub fn serialize<S: serde::Serializer>(
        v: &[f64; 2],
        s: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        freq_vec::serialize(v, s)
    }

    pub fn deserialize<'de, D: serde::Deserializer<'de>>(
        d: D,
    ) -> std::result::Result<[f64; 2], D::Error> {
        let v = freq_vec::deserialize(d)?;
        <[f64; 2]>::try_from(v.as_slice()).map_err(|_| {
            serde::de::Error::custom(format!("expected 2 frequencies, found {}", v.len()))
        })
    }
}
