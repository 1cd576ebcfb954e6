use std::fmt;

use serde::{Deserialize, Deserializer};

/// Unit system of a run. The simulation is unit-free: frequencies and
/// inverse times only have to agree.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnitSystem {
    /// Frequencies in MHz (times h), times in microseconds.
    Mhz,
    /// Frequencies in units of the nearest-neighbour coupling J/h, times in h/J.
    Coupling,
}

impl fmt::Display for UnitSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            UnitSystem::Mhz => "MHz/us",
            UnitSystem::Coupling => "J/h",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dimension {
    Frequency,
    Time,
    /// Frequency per time, for detuning sweeps.
    Rate,
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Dimension::Frequency => "frequency",
            Dimension::Time => "time",
            Dimension::Rate => "rate",
        })
    }
}

/// Recognised unit tags. `C6` is written as a frequency; the lattice
/// spacing to the sixth power is implied.
fn classify(tag: &str) -> Option<(UnitSystem, Dimension)> {
    Some(match tag {
        "MHz" => (UnitSystem::Mhz, Dimension::Frequency),
        "us" | "µs" => (UnitSystem::Mhz, Dimension::Time),
        "MHz/us" | "MHz/µs" => (UnitSystem::Mhz, Dimension::Rate),
        "J" => (UnitSystem::Coupling, Dimension::Frequency),
        "h/J" => (UnitSystem::Coupling, Dimension::Time),
        "J^2/h" | "J2/h" => (UnitSystem::Coupling, Dimension::Rate),
        _ => return None,
    })
}

/// A number with a unit tag, written `"4.05 MHz"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quantity {
    pub value: f64,
    pub system: UnitSystem,
    pub dimension: Dimension,
}

impl Quantity {
    pub fn parse(text: &str) -> Result<Self, String> {
        let text = text.trim();
        let (num, tag) = text.split_once(char::is_whitespace).ok_or_else(|| format!("{text:?} has no unit tag (write e.g. \"4.05 MHz\")"))?;
        let value: f64 = num.parse().map_err(|_| format!("{num:?} is not a number"))?;
        if !value.is_finite() {
            return Err(format!("{num:?} is not finite"));
        }
        let tag = tag.trim();
        let (system, dimension) = classify(tag).ok_or_else(|| format!("unknown unit {tag:?}; use MHz, us, MHz/us, J, h/J or J^2/h"))?;
        Ok(Quantity { value, system, dimension })
    }
}

impl<'de> Deserialize<'de> for Quantity {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Quantity::parse(&s).map_err(serde::de::Error::custom)
    }
}

/// A list of values sharing one unit tag: `{ values = [...], unit = "MHz" }`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuantityList {
    pub values: Vec<f64>,
    pub unit: String,
}

impl QuantityList {
    pub fn resolve(&self) -> Result<(Vec<f64>, UnitSystem, Dimension), String> {
        let (system, dimension) = classify(self.unit.trim()).ok_or_else(|| format!("unknown unit {:?}", self.unit))?;
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err("list contains a non-finite value".into());
        }
        Ok((self.values.clone(), system, dimension))
    }
}
