//! Monte-Carlo runs over many bit exchange periods.
//!
//! All randomness is counter-based so any single BEP can be replayed:
//!
//! ```text
//! party root  = master_seed.derive(0x1000 + 2·bep_index + party)
//! switch bits = splitmix64(switch_seed.derive(0x2000 + bep_index)), bit 0 → Alice, bit 1 → Bob
//! ```
//!
//! A set bit selects `High`. Noise streams then follow from each party root as
//! described in [`crate::noise`].

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::attack::{bilateral_attack, unilateral_attack, AttackMode, AttackOutcome};
use crate::config::{Party, Resistor, SimConfig};
use crate::error::{KljnError, Result};
use crate::noise::{gaussian_samples, quantize_uniform, splitmix64, NoisePair, Seed};
use crate::protocol::{nominal_levels, run_bep, BepRecord, LevelClass};
use crate::timing::{coincidence_probability, waiting_time};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub config: SimConfig,
    pub n_beps: usize,
    /// `None` runs the honest protocol only.
    pub attack: Option<AttackMode>,
    pub master_seed: Seed,
    /// Drives the resistor switches; independent of the noise generators.
    pub switch_seed: Seed,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        if self.n_beps == 0 {
            return Err(KljnError::invalid("n_beps", "must be >= 1"));
        }
        Ok(())
    }

    pub fn party_seed(&self, bep_index: usize, party: Party) -> Seed {
        self.master_seed
            .derive(0x1000 + 2 * bep_index as u64 + party.index())
    }

    pub fn choices(&self, bep_index: usize) -> (Resistor, Resistor) {
        let bits = splitmix64(self.switch_seed.derive(0x2000 + bep_index as u64).0);
        let pick = |bit: u64| {
            if bits >> bit & 1 == 1 {
                Resistor::High
            } else {
                Resistor::Low
            }
        };
        (pick(0), pick(1))
    }
}

/// One exported row: the per-BEP facts worth keeping after the traces are gone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BepRow {
    pub bep_index: usize,
    pub choice_a: Resistor,
    pub choice_b: Resistor,
    pub level_class: LevelClass,
    #[serde(rename = "mean_square_V2")]
    pub mean_square: f64,
    pub eve_mode: Option<AttackMode>,
    #[serde(rename = "r_a_hat_ohm")]
    pub r_a_hat: Option<f64>,
    #[serde(rename = "r_b_hat_ohm")]
    pub r_b_hat: Option<f64>,
    pub eve_correct: Option<bool>,
    pub samples_to_decision: Option<usize>,
    pub waiting_samples: Option<usize>,
}

impl BepRow {
    pub fn is_secure(&self) -> bool {
        self.choice_a != self.choice_b
    }
}

/// Everything computed for one BEP, kept only long enough to summarize.
#[derive(Debug, Clone)]
pub struct BepResult {
    pub record: BepRecord,
    pub outcome: Option<AttackOutcome>,
    pub waiting_samples: Option<usize>,
    pub all_coincident: bool,
}

impl BepResult {
    fn row(&self, bep_index: usize, mode: Option<AttackMode>) -> BepRow {
        let r = &self.record;
        let o = self.outcome.as_ref();
        BepRow {
            bep_index,
            choice_a: r.choice_a,
            choice_b: r.choice_b,
            level_class: r.level,
            mean_square: r.mean_square,
            eve_mode: mode,
            r_a_hat: o.and_then(|o| o.r_a_hat),
            r_b_hat: o.and_then(|o| o.r_b_hat),
            eve_correct: o.map(|o| o.cracked(r.choice_a, r.choice_b)),
            samples_to_decision: o.map(|o| o.samples_to_decision),
            waiting_samples: self.waiting_samples,
        }
    }
}

/// Regenerates BEP `bep_index` of `spec` in full, traces included.
pub fn replay_bep(spec: &ExperimentSpec, bep_index: usize) -> Result<BepResult> {
    let config = &spec.config;
    let seed_a = spec.party_seed(bep_index, Party::Alice);
    let seed_b = spec.party_seed(bep_index, Party::Bob);
    let (choice_a, choice_b) = spec.choices(bep_index);
    let record = run_bep(seed_a, seed_b, choice_a, choice_b, config)?;
    let Some(mode) = spec.attack else {
        return Ok(BepResult {
            record,
            outcome: None,
            waiting_samples: None,
            all_coincident: false,
        });
    };
    let bob = NoisePair::generate(seed_b, Party::Bob, config)?;
    let outcome = match mode {
        AttackMode::Bilateral => {
            let alice = NoisePair::generate(seed_a, Party::Alice, config)?;
            bilateral_attack(&record.wire, &alice, &bob, config)?
        }
        AttackMode::Unilateral => unilateral_attack(&record.wire, &bob, config)?,
    };
    let wait = waiting_time(&bob, config)?;
    Ok(BepResult {
        record,
        outcome: Some(outcome),
        waiting_samples: Some(wait.samples),
        all_coincident: wait.all_coincident,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairStats {
    /// `"HL"` means Alice on H, Bob on L.
    pub pair: String,
    pub count: usize,
    /// V².
    pub nominal: f64,
    pub mean: f64,
    /// Standard error of `mean`.
    pub std_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub n_beps: usize,
    pub samples_per_bep: usize,
    /// In HH, HL, LH, LL order. Pairs that never occurred are omitted.
    pub pairs: Vec<PairStats>,
    /// BEPs whose measured level class differs from the nominal class of the true pair.
    pub misclassified: usize,
    pub secure_beps: usize,
    pub insecure_fraction: f64,
    /// Secure BEPs on which both honest parties recovered the peer's choice.
    pub honest_agreement: usize,
    pub attack_mode: Option<AttackMode>,
    /// Fraction of secure BEPs where both of Eve's bits match the truth.
    pub attack_success_rate: Option<f64>,
    pub attack_undecided: usize,
    pub attack_low_confidence: usize,
    pub mean_samples_to_decision: Option<f64>,
    pub median_samples_to_decision: Option<usize>,
    pub max_samples_to_decision: Option<usize>,
    /// `waiting_histogram[k]` counts BEPs whose waiting time was `k` samples.
    pub waiting_histogram: Vec<usize>,
    pub all_coincident_beps: usize,
}

fn pair_label(a: Resistor, b: Resistor) -> String {
    format!("{a}{b}")
}

/// The scalar part of a [`BepResult`].
struct Digest {
    choice_a: Resistor,
    choice_b: Resistor,
    mean_square: f64,
    level: LevelClass,
    honest_agree: bool,
    outcome: Option<AttackOutcome>,
    waiting_samples: Option<usize>,
    all_coincident: bool,
}

impl From<BepResult> for Digest {
    fn from(r: BepResult) -> Self {
        Digest {
            choice_a: r.record.choice_a,
            choice_b: r.record.choice_b,
            mean_square: r.record.mean_square,
            level: r.record.level,
            honest_agree: r.record.honest_parties_agree(),
            outcome: r.outcome,
            waiting_samples: r.waiting_samples,
            all_coincident: r.all_coincident,
        }
    }
}

fn summarize(spec: &ExperimentSpec, results: &[Digest]) -> SummaryStats {
    let config = &spec.config;
    let levels = nominal_levels(config);
    let mut pairs = vec![];
    for a in Resistor::BOTH {
        for b in Resistor::BOTH {
            let ms: Vec<f64> = results
                .iter()
                .filter(|r| r.choice_a == a && r.choice_b == b)
                .map(|r| r.mean_square)
                .collect();
            if ms.is_empty() {
                continue;
            }
            let n = ms.len() as f64;
            let mean = ms.iter().sum::<f64>() / n;
            let std_err = if ms.len() > 1 {
                (ms.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt()
            } else {
                0.0
            };
            pairs.push(PairStats {
                pair: pair_label(a, b),
                count: ms.len(),
                nominal: levels.get(LevelClass::of_pair(a, b)),
                mean,
                std_err,
            });
        }
    }

    let misclassified = results
        .iter()
        .filter(|r| r.level != LevelClass::of_pair(r.choice_a, r.choice_b))
        .count();
    let secure: Vec<&Digest> = results
        .iter()
        .filter(|r| r.choice_a != r.choice_b)
        .collect();
    let honest_agreement = secure.iter().filter(|r| r.honest_agree).count();

    let outcomes: Vec<&AttackOutcome> = results.iter().filter_map(|r| r.outcome.as_ref()).collect();
    let attacked = spec.attack.is_some() && !outcomes.is_empty();
    let attack_success_rate = (attacked && !secure.is_empty()).then(|| {
        let cracked = secure
            .iter()
            .filter(|r| {
                r.outcome
                    .as_ref()
                    .is_some_and(|o| o.cracked(r.choice_a, r.choice_b))
            })
            .count();
        cracked as f64 / secure.len() as f64
    });
    let mut decision: Vec<usize> = outcomes
        .iter()
        .filter(|o| o.is_decided())
        .map(|o| o.samples_to_decision)
        .collect();
    decision.sort_unstable();
    let mean_samples_to_decision = (!decision.is_empty())
        .then(|| decision.iter().sum::<usize>() as f64 / decision.len() as f64);
    let median_samples_to_decision =
        (!decision.is_empty()).then(|| decision[(decision.len() - 1) / 2]);

    let mut waiting_histogram = vec![];
    for w in results.iter().filter_map(|r| r.waiting_samples) {
        if waiting_histogram.len() <= w {
            waiting_histogram.resize(w + 1, 0);
        }
        waiting_histogram[w] += 1;
    }

    SummaryStats {
        n_beps: results.len(),
        samples_per_bep: config.samples_per_bep,
        pairs,
        misclassified,
        secure_beps: secure.len(),
        insecure_fraction: (results.len() - secure.len()) as f64 / results.len() as f64,
        honest_agreement,
        attack_mode: spec.attack,
        attack_success_rate,
        attack_undecided: outcomes.iter().filter(|o| !o.is_decided()).count(),
        attack_low_confidence: outcomes.iter().filter(|o| o.low_confidence).count(),
        mean_samples_to_decision,
        median_samples_to_decision,
        max_samples_to_decision: decision.last().copied(),
        waiting_histogram,
        all_coincident_beps: results.iter().filter(|r| r.all_coincident).count(),
    }
}

impl SummaryStats {
    pub fn pair(&self, a: Resistor, b: Resistor) -> Option<&PairStats> {
        let label = pair_label(a, b);
        self.pairs.iter().find(|p| p.pair == label)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRun {
    pub summary: SummaryStats,
    /// In BEP-index order.
    pub rows: Vec<BepRow>,
}

/// Runs `spec.n_beps` BEPs in parallel and merges them in index order. The
/// first failing BEP (lowest index) aborts the run.
pub fn run_monte_carlo(spec: &ExperimentSpec) -> Result<ExperimentRun> {
    run_monte_carlo_with(spec, |_, _| {})
}

/// As [`run_monte_carlo`], additionally handing every full [`BepResult`] to
/// `inspect` (from worker threads, in no particular order) before its traces
/// are dropped.
pub fn run_monte_carlo_with<F>(spec: &ExperimentSpec, inspect: F) -> Result<ExperimentRun>
where
    F: Fn(usize, &BepResult) + Sync,
{
    spec.validate()?;
    // Traces are dropped per chunk so memory stays bounded for long runs.
    const CHUNK: usize = 4096;
    let mut rows = Vec::with_capacity(spec.n_beps);
    let mut kept = Vec::with_capacity(spec.n_beps);
    for start in (0..spec.n_beps).step_by(CHUNK) {
        let end = (start + CHUNK).min(spec.n_beps);
        let chunk: Vec<Result<BepResult>> = (start..end)
            .into_par_iter()
            .map(|i| {
                let r = replay_bep(spec, i).map_err(|e| KljnError::Bep {
                    index: i,
                    source: Box::new(e),
                })?;
                inspect(i, &r);
                Ok(r)
            })
            .collect();
        for (i, r) in (start..end).zip(chunk) {
            let r = r?;
            rows.push(r.row(i, spec.attack));
            kept.push(Digest::from(r));
        }
    }
    let summary = summarize(spec, &kept);
    Ok(ExperimentRun { summary, rows })
}

/// Run-length statistics of two independent Δ-bit-quantized streams.
///
/// Every non-coincident sample closes a run of coincident samples (possibly
/// empty) that preceded it, so `counts[k]` is the number of times exactly `k`
/// coincident steps were followed by a distinguishing one. Under the model
/// P(run ≥ n) = p₀ⁿ, i.e. run lengths are geometric with ratio p₀ = 2^-Δ.
/// A trailing run that the stream ends inside is censored and dropped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoincidenceHistogram {
    pub delta: u32,
    pub n_samples: usize,
    /// Samples on which the two quantized streams agreed.
    pub coincidences: usize,
    pub counts: Vec<usize>,
    pub runs: usize,
    pub expected_ratio: f64,
    /// Maximum-likelihood geometric ratio, Σk / (Σk + runs).
    pub fitted_ratio: f64,
    pub chi_square: f64,
    pub degrees_of_freedom: usize,
    pub p_value: f64,
}

pub const MIN_HISTOGRAM_SAMPLES: usize = 10_000;

pub fn empirical_coincidence_histogram(
    config: &SimConfig,
    n_samples: usize,
    seed: Seed,
) -> Result<CoincidenceHistogram> {
    config.validate()?;
    if n_samples < MIN_HISTOGRAM_SAMPLES {
        return Err(KljnError::invalid(
            "n_samples",
            format!("must be >= {MIN_HISTOGRAM_SAMPLES}, got {n_samples}"),
        ));
    }
    let delta = config.resolution_bits;
    let (a, b) = rayon::join(
        || gaussian_samples(seed.derive(0x3000), 1.0, n_samples),
        || gaussian_samples(seed.derive(0x3001), 1.0, n_samples),
    );
    let mut counts: Vec<usize> = vec![];
    let mut coincidences = 0;
    let mut run = 0usize;
    for (x, y) in a.iter().zip(&b) {
        if quantize_uniform(*x, 1.0, delta) == quantize_uniform(*y, 1.0, delta) {
            coincidences += 1;
            run += 1;
        } else {
            if counts.len() <= run {
                counts.resize(run + 1, 0);
            }
            counts[run] += 1;
            run = 0;
        }
    }
    let runs: usize = counts.iter().sum();
    let total_len: usize = counts.iter().enumerate().map(|(k, c)| k * c).sum();
    let fitted_ratio = if runs == 0 {
        1.0
    } else {
        total_len as f64 / (total_len + runs) as f64
    };
    let expected_ratio = coincidence_probability(delta, 1);
    let (chi_square, degrees_of_freedom) = chi_square_geometric(&counts, runs, expected_ratio);
    let p_value = if degrees_of_freedom == 0 {
        1.0
    } else {
        let dist = ChiSquared::new(degrees_of_freedom as f64).expect("dof > 0");
        dist.sf(chi_square)
    };
    Ok(CoincidenceHistogram {
        delta,
        n_samples,
        coincidences,
        counts,
        runs,
        expected_ratio,
        fitted_ratio,
        chi_square,
        degrees_of_freedom,
        p_value,
    })
}

/// Pearson statistic of `counts` against Geometric(ratio) on {0, 1, ...}.
/// Bins run left to right until the remaining tail expects fewer than 5
/// runs; that tail is pooled into the last bin.
fn chi_square_geometric(counts: &[usize], runs: usize, ratio: f64) -> (f64, usize) {
    if runs == 0 {
        return (0.0, 0);
    }
    let n = runs as f64;
    let mut chi = 0.0;
    let mut bins = 0;
    let mut k = 0usize;
    // P(run >= k) = ratio^k
    loop {
        let tail_here = ratio.powi(k as i32);
        let tail_next = ratio.powi(k as i32 + 1);
        let expected_bin = n * (tail_here - tail_next);
        let expected_rest = n * tail_next;
        if expected_rest < 5.0 || expected_bin < 5.0 {
            let observed: usize = counts.iter().skip(k).sum();
            let expected = n * tail_here;
            chi += (observed as f64 - expected).powi(2) / expected;
            bins += 1;
            break;
        }
        let observed = counts.get(k).copied().unwrap_or(0) as f64;
        chi += (observed - expected_bin).powi(2) / expected_bin;
        bins += 1;
        k += 1;
    }
    (chi, bins - 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(n: usize, attack: Option<AttackMode>) -> ExperimentSpec {
        ExperimentSpec {
            config: SimConfig::default(),
            n_beps: n,
            attack,
            master_seed: Seed(1),
            switch_seed: Seed(2),
        }
    }

    #[test]
    fn zero_beps_is_an_error() {
        assert!(run_monte_carlo(&spec(0, None)).is_err());
    }

    #[test]
    fn runs_are_deterministic() {
        let s = spec(64, Some(AttackMode::Bilateral));
        assert_eq!(run_monte_carlo(&s).unwrap(), run_monte_carlo(&s).unwrap());
    }

    #[test]
    fn replay_matches_row() {
        let s = spec(20, Some(AttackMode::Unilateral));
        let run = run_monte_carlo(&s).unwrap();
        let r = replay_bep(&s, 13).unwrap();
        assert_eq!(r.row(13, s.attack), run.rows[13]);
        assert_eq!(r.record.noise_b.len(), s.config.samples_per_bep);
    }

    #[test]
    fn switch_choices_look_fair() {
        let s = spec(1, None);
        let n = 10_000;
        let highs = (0..n)
            .map(|i| s.choices(i))
            .map(|(a, b)| (a == Resistor::High) as usize + (b == Resistor::High) as usize)
            .sum::<usize>();
        let frac = highs as f64 / (2 * n) as f64;
        assert!((frac - 0.5).abs() < 3.0 * (0.25 / (2 * n) as f64).sqrt());
    }

    #[test]
    fn switch_and_noise_streams_differ() {
        let s = spec(1, None);
        assert_ne!(s.party_seed(0, Party::Alice), s.switch_seed.derive(0x2000));
        assert_ne!(s.party_seed(0, Party::Alice), s.party_seed(0, Party::Bob));
    }

    #[test]
    fn bilateral_summary() {
        let run = run_monte_carlo(&spec(300, Some(AttackMode::Bilateral))).unwrap();
        let s = &run.summary;
        assert_eq!(s.attack_success_rate, Some(1.0));
        assert!(s.median_samples_to_decision.unwrap() <= 2);
        assert_eq!(s.misclassified, 0);
        assert_eq!(s.honest_agreement, s.secure_beps);
        assert_eq!(s.waiting_histogram.iter().sum::<usize>(), 300);
        assert_eq!(s.pairs.iter().map(|p| p.count).sum::<usize>(), 300);
    }

    #[test]
    fn inspect_sees_every_bep() {
        use std::sync::atomic::{AtomicUsize, Ordering};
        let seen = AtomicUsize::new(0);
        run_monte_carlo_with(&spec(10, None), |_, r| {
            assert_eq!(r.record.wire.len(), 1000);
            seen.fetch_add(1, Ordering::Relaxed);
        })
        .unwrap();
        assert_eq!(seen.into_inner(), 10);
    }

    #[test]
    fn histogram_requires_enough_samples() {
        assert!(empirical_coincidence_histogram(&SimConfig::default(), 9_999, Seed(0)).is_err());
    }

    #[test]
    fn chi_square_of_exact_geometric_is_zero() {
        let ratio: f64 = 0.25;
        let n = 1_000_000usize;
        let counts: Vec<usize> = (0..12)
            .map(|k| (n as f64 * ratio.powi(k) * (1.0 - ratio)).round() as usize)
            .collect();
        let runs = counts.iter().sum();
        let (chi, dof) = chi_square_geometric(&counts, runs, ratio);
        assert!(chi < 1.0, "{chi}");
        assert!(dof >= 5);
    }

    #[test]
    fn histogram_ratio_at_delta_two() {
        let c = SimConfig {
            resolution_bits: 2,
            ..SimConfig::default()
        };
        let h = empirical_coincidence_histogram(&c, 1_000_000, Seed(10)).unwrap();
        assert!((h.fitted_ratio - 0.25).abs() < 0.01, "{}", h.fitted_ratio);
        assert!(h.p_value >= 0.01, "p = {}", h.p_value);
    }

    #[test]
    fn histogram_delta_eight_coincidence_count() {
        let c = SimConfig {
            resolution_bits: 8,
            ..SimConfig::default()
        };
        let h = empirical_coincidence_histogram(&c, 1_000_000, Seed(11)).unwrap();
        let expected = 1e6 / 256.0;
        assert!(
            (h.coincidences as f64 - expected).abs() < 5.0 * expected.sqrt(),
            "{}",
            h.coincidences
        );
    }
}
