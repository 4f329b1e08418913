//! Coincidence windows of quantized noises and Eve's waiting time.
//!
//! Two independent Δ-bit streams agree at a given step with probability
//! p₀ = 2^-Δ, and stay identical for n consecutive steps with probability
//! p₀ⁿ. One step lasts the autocorrelation time τ ≈ 1/(2·Δf_B).

use serde::{Deserialize, Serialize};

use crate::config::SimConfig;
use crate::error::{KljnError, Result};
use crate::noise::{johnson_rms, quantize_uniform, NoisePair, NoiseTrace};

/// `(2^-Δ)^n`.
pub fn coincidence_probability(delta: u32, n: u64) -> f64 {
    let p0 = (-(delta as f64)).exp2();
    if n == 0 {
        return 1.0;
    }
    match i32::try_from(n) {
        Ok(n) => p0.powi(n),
        Err(_) => p0.powf(n as f64),
    }
}

/// τ = 1/(2·Δf_B), seconds.
pub fn autocorrelation_time(bandwidth: f64) -> Result<f64> {
    if !(bandwidth.is_finite() && bandwidth > 0.0) {
        return Err(KljnError::invalid(
            "bandwidth",
            format!("must be finite and > 0, got {bandwidth}"),
        ));
    }
    Ok(1.0 / (2.0 * bandwidth))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoincidenceModel {
    pub delta: u32,
    /// Hertz.
    pub bandwidth: f64,
    /// Seconds per step.
    pub tau: f64,
    pub p0: f64,
}

impl CoincidenceModel {
    pub fn new(delta: u32, bandwidth: f64) -> Result<Self> {
        if delta == 0 {
            return Err(KljnError::invalid("delta", "must be >= 1"));
        }
        Ok(CoincidenceModel {
            delta,
            bandwidth,
            tau: autocorrelation_time(bandwidth)?,
            p0: coincidence_probability(delta, 1),
        })
    }

    pub fn from_config(config: &SimConfig) -> Result<Self> {
        Self::new(config.resolution_bits, config.bandwidth)
    }

    /// Probability of `n` consecutive identical steps.
    pub fn run_probability(&self, n: u64) -> f64 {
        coincidence_probability(self.delta, n)
    }

    /// Probability the streams stay identical for a duration `t` seconds,
    /// p₀^(t/τ).
    pub fn window_probability(&self, t: f64) -> f64 {
        self.p0.powf(t / self.tau)
    }

    /// Steps in `t` seconds.
    pub fn steps(&self, t: f64) -> f64 {
        t / self.tau
    }

    /// Mean number of coincident steps before the first distinguishing one,
    /// p₀/(1 − p₀).
    pub fn mean_waiting_steps(&self) -> f64 {
        self.p0 / (1.0 - self.p0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WaitingTime {
    /// Index of the first sample where the quantized candidates differ, or
    /// the BEP length if they never do.
    pub samples: usize,
    pub all_coincident: bool,
}

fn levels<'a>(trace: &'a NoiseTrace, config: &SimConfig) -> Result<impl Iterator<Item = u64> + 'a> {
    let sigma = johnson_rms(trace.resistor().resistance(config), config)?;
    let delta = config.resolution_bits;
    Ok(trace
        .samples()
        .iter()
        .map(move |&x| quantize_uniform(x, sigma, delta)))
}

/// How long Eve waits before Bob's two Δ-bit-quantized noises first differ.
pub fn waiting_time(bob: &NoisePair, config: &SimConfig) -> Result<WaitingTime> {
    if bob.high.len() != bob.low.len() {
        return Err(KljnError::LengthMismatch {
            left: bob.high.len(),
            right: bob.low.len(),
        });
    }
    let first = levels(&bob.high, config)?
        .zip(levels(&bob.low, config)?)
        .position(|(h, l)| h != l);
    Ok(match first {
        Some(k) => WaitingTime {
            samples: k,
            all_coincident: false,
        },
        None => WaitingTime {
            samples: bob.high.len(),
            all_coincident: true,
        },
    })
}
