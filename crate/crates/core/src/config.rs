//! Physical and numerical parameters of a simulation run.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{KljnError, Result};

/// Boltzmann constant in J/K, rounded to the value used throughout the model.
pub const BOLTZMANN: f64 = 1.38e-23;

/// Largest supported quantizer resolution. Beyond the f64 mantissa the
/// Gaussian CDF cannot separate bins.
pub const MAX_RESOLUTION_BITS: u32 = 52;

/// Which of the two resistors a party connects to the wire.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Resistor {
    #[serde(rename = "H")]
    High,
    #[serde(rename = "L")]
    Low,
}

/// Alias matching the protocol vocabulary: a party's per-BEP switch position.
pub type ResistorChoice = Resistor;

impl Resistor {
    pub const BOTH: [Resistor; 2] = [Resistor::High, Resistor::Low];

    pub fn resistance(self, config: &SimConfig) -> f64 {
        match self {
            Resistor::High => config.r_high,
            Resistor::Low => config.r_low,
        }
    }

    pub fn other(self) -> Resistor {
        match self {
            Resistor::High => Resistor::Low,
            Resistor::Low => Resistor::High,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Resistor::High => "H",
            Resistor::Low => "L",
        }
    }

    pub(crate) fn index(self) -> u64 {
        match self {
            Resistor::High => 0,
            Resistor::Low => 1,
        }
    }
}

impl fmt::Display for Resistor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Resistor {
    type Err = KljnError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "H" | "h" | "high" => Ok(Resistor::High),
            "L" | "l" | "low" => Ok(Resistor::Low),
            _ => Err(KljnError::invalid(
                "resistor",
                format!("expected H or L, got {s:?}"),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Party {
    #[serde(rename = "A")]
    Alice,
    #[serde(rename = "B")]
    Bob,
}

impl Party {
    pub fn label(self) -> &'static str {
        match self {
            Party::Alice => "A",
            Party::Bob => "B",
        }
    }

    pub(crate) fn index(self) -> u64 {
        match self {
            Party::Alice => 0,
            Party::Bob => 1,
        }
    }
}

impl fmt::Display for Party {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Ohms.
    pub r_high: f64,
    /// Ohms.
    pub r_low: f64,
    /// Effective noise temperature, kelvin.
    pub t_eff: f64,
    /// Noise bandwidth of the generators, hertz.
    pub bandwidth: f64,
    pub boltzmann: f64,
    pub samples_per_bep: usize,
    /// Quantizer resolution used by the coincidence/waiting-time model.
    pub resolution_bits: u32,
    /// Relative half-width of the band a candidate-resistance trace must stay
    /// inside to count as flat.
    pub flat_tol: f64,
    /// Minimum |I_w| in amperes for a sample to be used as a divisor.
    pub current_floor: f64,
}

impl Default for SimConfig {
    /// 100 kΩ / 10 kΩ, 10¹⁸ K, 500 Hz, 1000 samples per BEP.
    fn default() -> Self {
        SimConfig {
            r_high: 100e3,
            r_low: 10e3,
            t_eff: 1e18,
            bandwidth: 500.0,
            boltzmann: BOLTZMANN,
            samples_per_bep: 1000,
            resolution_bits: 8,
            flat_tol: 1e-6,
            current_floor: 0.0,
        }
        .with_default_current_floor()
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &'static str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(KljnError::invalid(
                    name,
                    format!("must be finite and > 0, got {v}"),
                ))
            }
        };
        positive("r_low", self.r_low)?;
        positive("r_high", self.r_high)?;
        if self.r_high <= self.r_low {
            return Err(KljnError::invalid(
                "r_high",
                format!("must exceed r_low ({} <= {})", self.r_high, self.r_low),
            ));
        }
        positive("t_eff", self.t_eff)?;
        positive("bandwidth", self.bandwidth)?;
        positive("boltzmann", self.boltzmann)?;
        positive("flat_tol", self.flat_tol)?;
        if self.samples_per_bep == 0 {
            return Err(KljnError::invalid("samples_per_bep", "must be >= 1"));
        }
        if !(1..=MAX_RESOLUTION_BITS).contains(&self.resolution_bits) {
            return Err(KljnError::invalid(
                "resolution_bits",
                format!(
                    "must be in 1..={MAX_RESOLUTION_BITS}, got {}",
                    self.resolution_bits
                ),
            ));
        }
        if !(self.current_floor.is_finite() && self.current_floor >= 0.0) {
            return Err(KljnError::invalid(
                "current_floor",
                format!("must be finite and >= 0, got {}", self.current_floor),
            ));
        }
        Ok(())
    }

    /// 4·k·T_eff·Δf_B, the factor that turns a resistance into a mean-square voltage.
    pub fn thermal_scale(&self) -> f64 {
        4.0 * self.boltzmann * self.t_eff * self.bandwidth
    }

    /// 10⁻⁶ of the smallest typical wire current, rms(R_L) / (2·R_H).
    pub fn default_current_floor(&self) -> f64 {
        let rms_low = (self.thermal_scale() * self.r_low).sqrt();
        1e-6 * rms_low / (self.r_high + self.r_high)
    }

    pub fn with_default_current_floor(mut self) -> Self {
        self.current_floor = self.default_current_floor();
        self
    }

    pub fn resistance(&self, r: Resistor) -> f64 {
        r.resistance(self)
    }

    /// Nominal value in {r_high, r_low} closest to `r` in log-space.
    /// Ties resolve to `High`.
    pub fn snap_resistance(&self, r: f64) -> Resistor {
        if r >= (self.r_high * self.r_low).sqrt() {
            Resistor::High
        } else {
            Resistor::Low
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_valid() {
        let c = SimConfig::default();
        c.validate().unwrap();
        assert_eq!(c.r_high, 100e3);
        assert_eq!(c.samples_per_bep, 1000);
        // 1e-6 * 16.613 V / 200 kΩ
        assert!((c.current_floor - 8.306623862918075e-11).abs() < 1e-20);
    }

    #[test]
    fn rejects_bad_parameters() {
        let base = SimConfig::default();
        let cases = [
            SimConfig {
                r_high: 10e3,
                ..base
            },
            SimConfig { r_low: 0.0, ..base },
            SimConfig {
                t_eff: -1.0,
                ..base
            },
            SimConfig {
                bandwidth: 0.0,
                ..base
            },
            SimConfig {
                samples_per_bep: 0,
                ..base
            },
            SimConfig {
                resolution_bits: 0,
                ..base
            },
            SimConfig {
                resolution_bits: 53,
                ..base
            },
            SimConfig {
                flat_tol: 0.0,
                ..base
            },
            SimConfig {
                current_floor: -1.0,
                ..base
            },
            SimConfig {
                r_high: f64::NAN,
                ..base
            },
        ];
        for c in cases {
            assert!(c.validate().is_err(), "{c:?}");
        }
    }

    #[test]
    fn snapping_uses_geometric_mean() {
        let c = SimConfig::default();
        let mid = (c.r_high * c.r_low).sqrt();
        assert_eq!(c.snap_resistance(mid), Resistor::High);
        assert_eq!(c.snap_resistance(mid * (1.0 - 1e-12)), Resistor::Low);
        assert_eq!(c.snap_resistance(0.0), Resistor::Low);
    }

    #[test]
    fn resistor_parsing() {
        assert_eq!("H".parse::<Resistor>().unwrap(), Resistor::High);
        assert_eq!("l".parse::<Resistor>().unwrap(), Resistor::Low);
        assert!("X".parse::<Resistor>().is_err());
    }
}
