//! Seeded Gaussian noise emulating the Johnson noise of a resistor.
//!
//! One sample is drawn per Nyquist interval τ = 1/(2·Δf_B), so consecutive
//! samples are independent and a trace is white within the band.
//!
//! Seed derivation is counter-based and fixed:
//!
//! ```text
//! derive(root, tag) = splitmix64(root XOR splitmix64(tag + 0x4B4C4A4E))
//! stream(root, party, resistor) = derive(root, 2·party + resistor)
//! ```
//!
//! with A = 0, B = 1, H = 0, L = 1. A party's root therefore determines both
//! of its resistor streams, and the four (party, resistor) streams of a pair of
//! roots are distinct. Each stream seed feeds a ChaCha8 generator whose output
//! is mapped to N(0, 1) by `rand_distr::StandardNormal`.

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::config::{Party, Resistor, SimConfig, MAX_RESOLUTION_BITS};
use crate::error::{KljnError, Result};

const DERIVE_DOMAIN: u64 = 0x4B4C_4A4E;

/// Root of a random stream. Equal seeds give bit-identical traces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Seed(pub u64);

impl Seed {
    pub fn derive(self, tag: u64) -> Seed {
        Seed(splitmix64(
            self.0 ^ splitmix64(tag.wrapping_add(DERIVE_DOMAIN)),
        ))
    }

    /// Seed of the generator behind `resistor` of `party`, rooted at `self`.
    pub fn stream(self, party: Party, resistor: Resistor) -> Seed {
        self.derive(2 * party.index() + resistor.index())
    }

    pub(crate) fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }
}

impl fmt::Display for Seed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl From<u64> for Seed {
    fn from(v: u64) -> Self {
        Seed(v)
    }
}

pub(crate) fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// RMS Johnson noise voltage sqrt(4·k·T_eff·R·Δf_B) of a resistor `r`.
pub fn johnson_rms(r: f64, config: &SimConfig) -> Result<f64> {
    if !(r.is_finite() && r > 0.0) {
        return Err(KljnError::invalid(
            "r",
            format!("must be finite and > 0, got {r}"),
        ));
    }
    Ok((config.thermal_scale() * r).sqrt())
}

/// Sampled voltage of one noise generator over one bit exchange period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseTrace {
    samples: Vec<f64>,
    resistor: Resistor,
    party: Party,
}

impl NoiseTrace {
    /// Wraps externally produced samples, e.g. an engineered test stream.
    pub fn from_samples(samples: Vec<f64>, resistor: Resistor, party: Party) -> Self {
        NoiseTrace {
            samples,
            resistor,
            party,
        }
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn resistor(&self) -> Resistor {
        self.resistor
    }

    pub fn party(&self) -> Party {
        self.party
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }
}

/// `len` i.i.d. N(0, sigma²) samples from the stream rooted at `seed`.
pub fn gaussian_samples(seed: Seed, sigma: f64, len: usize) -> Vec<f64> {
    let mut rng = seed.rng();
    (0..len)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            sigma * z
        })
        .collect()
}

/// Noise of `party`'s `resistor` for one BEP, deterministic in all arguments.
pub fn generate_noise_trace(
    seed: Seed,
    resistor: Resistor,
    party: Party,
    config: &SimConfig,
) -> Result<NoiseTrace> {
    config.validate()?;
    let sigma = johnson_rms(resistor.resistance(config), config)?;
    let samples = gaussian_samples(seed.stream(party, resistor), sigma, config.samples_per_bep);
    Ok(NoiseTrace {
        samples,
        resistor,
        party,
    })
}

/// Both generator outputs of one party: the connected one and the idle one.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisePair {
    pub high: NoiseTrace,
    pub low: NoiseTrace,
}

impl NoisePair {
    pub fn generate(seed: Seed, party: Party, config: &SimConfig) -> Result<Self> {
        Ok(NoisePair {
            high: generate_noise_trace(seed, Resistor::High, party, config)?,
            low: generate_noise_trace(seed, Resistor::Low, party, config)?,
        })
    }

    pub fn get(&self, r: Resistor) -> &NoiseTrace {
        match r {
            Resistor::High => &self.high,
            Resistor::Low => &self.low,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &NoiseTrace> {
        [&self.high, &self.low].into_iter()
    }
}

/// Φ(x), the standard normal CDF.
pub fn standard_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Δ-bit level of a Gaussian sample.
///
/// The sample is pushed through the N(0, sigma²) CDF and [0, 1) is cut into
/// 2^Δ equal bins, so every level has probability exactly 2^-Δ for a matching
/// Gaussian input.
pub fn quantize_uniform(sample: f64, sigma: f64, delta: u32) -> u64 {
    debug_assert!(sigma > 0.0);
    debug_assert!((1..=MAX_RESOLUTION_BITS).contains(&delta));
    let levels = 1u64 << delta;
    let u = standard_normal_cdf(sample / sigma);
    let level = (u * levels as f64).floor();
    if level <= 0.0 {
        0
    } else {
        (level as u64).min(levels - 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn moments(xs: &[f64]) -> (f64, f64, f64, f64) {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let m2 = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        let m3 = xs.iter().map(|x| (x - mean).powi(3)).sum::<f64>() / n;
        let m4 = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
        (mean, m2, m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
    }

    #[test]
    fn johnson_rms_matches_formula() {
        let c = SimConfig::default();
        // sqrt(4 * 1.38e-23 * 1e18 * R * 500)
        assert!((johnson_rms(100e3, &c).unwrap() - 52.53570214625479).abs() < 1e-9);
        assert!((johnson_rms(10e3, &c).unwrap() - 16.61324772583615).abs() < 1e-9);
        assert!((johnson_rms(100e3, &c).unwrap() - 52.5357).abs() < 1e-4);
        assert!((johnson_rms(10e3, &c).unwrap() - 16.6132).abs() < 1e-4);
    }

    #[test]
    fn johnson_rms_rejects_non_positive() {
        let c = SimConfig::default();
        assert!(johnson_rms(0.0, &c).is_err());
        assert!(johnson_rms(-5.0, &c).is_err());
    }

    #[test]
    fn traces_are_deterministic() {
        let c = SimConfig::default();
        let a = generate_noise_trace(Seed(42), Resistor::High, Party::Alice, &c).unwrap();
        let b = generate_noise_trace(Seed(42), Resistor::High, Party::Alice, &c).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), c.samples_per_bep);
        let bob = generate_noise_trace(Seed(42), Resistor::High, Party::Bob, &c).unwrap();
        assert_ne!(a.samples(), bob.samples());
    }

    #[test]
    fn four_streams_are_distinct() {
        let root = Seed(9);
        let mut seeds = vec![];
        for p in [Party::Alice, Party::Bob] {
            for r in Resistor::BOTH {
                seeds.push(root.stream(p, r));
            }
        }
        seeds.sort();
        seeds.dedup();
        assert_eq!(seeds.len(), 4);
    }

    #[test]
    fn different_seeds_are_uncorrelated() {
        let n = 100_000;
        let a = gaussian_samples(Seed(1), 1.0, n);
        let b = gaussian_samples(Seed(2), 1.0, n);
        let corr = a.iter().zip(&b).map(|(x, y)| x * y).sum::<f64>()
            / (a.iter().map(|x| x * x).sum::<f64>() * b.iter().map(|y| y * y).sum::<f64>()).sqrt();
        assert!(corr.abs() < 0.01, "corr = {corr}");
    }

    #[test]
    fn rms_and_shape_over_a_million_samples() {
        let c = SimConfig {
            samples_per_bep: 1_000_000,
            ..SimConfig::default()
        };
        let t = generate_noise_trace(Seed(2024), Resistor::High, Party::Bob, &c).unwrap();
        let (mean, var, skew, kurt) = moments(t.samples());
        let ms = t.samples().iter().map(|x| x * x).sum::<f64>() / t.len() as f64;
        let rms = ms.sqrt();
        assert!((rms / 52.5357 - 1.0).abs() < 0.005, "rms = {rms}");
        // Normalization: 3·sqrt(2/M) relative
        let nominal = 4.0 * 1.38e-23 * 1e18 * 100e3 * 500.0;
        assert!((ms / nominal - 1.0).abs() < 3.0 * (2.0 / 1e6f64).sqrt());
        assert!(mean.abs() < 5.0 * (var / 1e6).sqrt());
        assert!(skew.abs() < 0.05, "skew = {skew}");
        assert!(kurt.abs() < 0.1, "excess kurtosis = {kurt}");
    }

    #[test]
    fn quantizer_edges() {
        assert_eq!(quantize_uniform(0.0, 3.0, 1), 1);
        assert_eq!(quantize_uniform(f64::NEG_INFINITY, 1.0, 4), 0);
        assert_eq!(quantize_uniform(-1e300, 1.0, 4), 0);
        assert_eq!(quantize_uniform(f64::INFINITY, 1.0, 4), 15);
        assert_eq!(quantize_uniform(1e300, 1.0, 8), 255);
        // Φ(-0.6745) ≈ 0.25: just below and above the quartile
        assert_eq!(quantize_uniform(-0.675, 1.0, 2), 0);
        assert_eq!(quantize_uniform(-0.674, 1.0, 2), 1);
    }

    #[test]
    fn quantizer_levels_are_uniform() {
        let m = 1_000_000usize;
        let delta = 3;
        let xs = gaussian_samples(Seed(77), 2.5, m);
        let mut counts = [0usize; 8];
        for x in &xs {
            counts[quantize_uniform(*x, 2.5, delta) as usize] += 1;
        }
        let p = 1.0 / 8.0;
        let band = 5.0 * (p * (1.0 - p) / m as f64).sqrt();
        for c in counts {
            let f = c as f64 / m as f64;
            assert!((f - p).abs() < band, "freq {f}");
        }
    }

    #[test]
    fn independent_streams_coincide_at_two_to_minus_delta() {
        let m = 1_000_000;
        let a = gaussian_samples(Seed(5), 1.0, m);
        let b = gaussian_samples(Seed(6), 7.0, m);
        let hits = a
            .iter()
            .zip(&b)
            .filter(|(x, y)| quantize_uniform(**x, 1.0, 4) == quantize_uniform(**y, 7.0, 4))
            .count();
        let rate = hits as f64 / m as f64;
        assert!((rate * 16.0 - 1.0).abs() < 0.1, "rate = {rate}");
    }

    #[test]
    fn cdf_reference_points() {
        assert_eq!(standard_normal_cdf(0.0), 0.5);
        assert!((standard_normal_cdf(1.0) - 0.8413447460685429).abs() < 1e-15);
        assert!((standard_normal_cdf(-3.0) / 0.0013498980316300933 - 1.0).abs() < 1e-14);
    }
}
