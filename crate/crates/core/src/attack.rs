//! Eve's toolkit against a KLJN loop whose noise generators she can replay.
//!
//! With a generator's output known sample by sample, Ohm's law turns every
//! wire sample into a resistance estimate. The connected generator yields a
//! flat line at the true resistance; the idle one yields spikes.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::config::{Resistor, SimConfig};
use crate::error::{KljnError, Result};
use crate::noise::{NoisePair, NoiseTrace};
use crate::protocol::{classify_level, mean_square, parallel, LevelClass, WireTrace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttackMode {
    /// Eve knows the generator roots of both parties.
    Bilateral,
    /// Eve knows only Bob's generator root.
    Unilateral,
}

impl AttackMode {
    pub fn label(self) -> &'static str {
        match self {
            AttackMode::Bilateral => "bilateral",
            AttackMode::Unilateral => "unilateral",
        }
    }
}

impl fmt::Display for AttackMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for AttackMode {
    type Err = KljnError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bilateral" => Ok(AttackMode::Bilateral),
            "unilateral" => Ok(AttackMode::Unilateral),
            _ => Err(KljnError::invalid(
                "mode",
                format!("expected bilateral or unilateral, got {s:?}"),
            )),
        }
    }
}

/// Per-sample Ohm's-law resistance estimates for one candidate noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateTrace {
    /// `(sample_index, estimate_ohm)` for every usable sample.
    pub estimates: Vec<(usize, f64)>,
    /// Samples skipped because |I_w| fell below the current floor.
    pub omitted: usize,
}

impl CandidateTrace {
    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.estimates.iter().map(|&(_, r)| r)
    }
}

fn usable_current(i: f64, config: &SimConfig) -> bool {
    i != 0.0 && i.abs() >= config.current_floor
}

fn ohm_estimates(
    wire: &WireTrace,
    len: usize,
    config: &SimConfig,
    estimate: impl Fn(usize, f64) -> f64,
) -> Result<CandidateTrace> {
    if wire.len() != len || wire.current.len() != len {
        return Err(KljnError::LengthMismatch {
            left: wire.len(),
            right: len,
        });
    }
    let mut estimates = Vec::with_capacity(len);
    let mut omitted = 0;
    for (k, &i) in wire.current.iter().enumerate() {
        if usable_current(i, config) {
            estimates.push((k, estimate(k, i)));
        } else {
            omitted += 1;
        }
    }
    if estimates.is_empty() {
        return Err(KljnError::NoUsableSamples { omitted });
    }
    Ok(CandidateTrace { estimates, omitted })
}

/// Bob's resistance as seen through candidate noise `cand`: `(U_w − cand)/I_w`.
pub fn candidate_resistance_trace(
    wire: &WireTrace,
    cand: &[f64],
    config: &SimConfig,
) -> Result<CandidateTrace> {
    ohm_estimates(wire, cand.len(), config, |k, i| {
        (wire.voltage[k] - cand[k]) / i
    })
}

/// Alice's resistance through candidate noise `cand`, once Bob's connected
/// noise `u_b` and resistance `r_b` are known: `(cand − U_B)/I_w − R_B`.
pub fn alice_resistance_trace(
    wire: &WireTrace,
    cand: &[f64],
    u_b: &[f64],
    r_b: f64,
    config: &SimConfig,
) -> Result<CandidateTrace> {
    if u_b.len() != cand.len() {
        return Err(KljnError::LengthMismatch {
            left: cand.len(),
            right: u_b.len(),
        });
    }
    ohm_estimates(wire, cand.len(), config, |k, i| {
        (cand[k] - u_b[k]) / i - r_b
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FlatKind {
    /// Every usable estimate sits within `flat_tol` of this nominal resistance.
    Flat(f64),
    Spiky,
    /// No usable samples.
    Ambiguous,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlatVerdict {
    pub kind: FlatKind,
    pub informative_samples: usize,
}

impl FlatVerdict {
    pub fn flat_value(&self) -> Option<f64> {
        match self.kind {
            FlatKind::Flat(r) => Some(r),
            _ => None,
        }
    }
}

fn within(estimate: f64, nominal: f64, tol: f64) -> bool {
    ((estimate - nominal) / nominal).abs() <= tol
}

pub fn detect_flat(estimates: &[(usize, f64)], config: &SimConfig) -> FlatVerdict {
    let informative_samples = estimates.len();
    if estimates.is_empty() {
        return FlatVerdict {
            kind: FlatKind::Ambiguous,
            informative_samples,
        };
    }
    let kind = [config.r_high, config.r_low]
        .into_iter()
        .find(|&r| {
            estimates
                .iter()
                .all(|&(_, e)| within(e, r, config.flat_tol))
        })
        .map_or(FlatKind::Spiky, FlatKind::Flat);
    FlatVerdict {
        kind,
        informative_samples,
    }
}

/// Sample index at which a candidate stops being flat at any common nominal
/// value, or `None` if it stays flat through the whole trace.
fn elimination_index(estimates: &[(usize, f64)], config: &SimConfig) -> Option<usize> {
    let mut alive = [true, true];
    let nominals = [config.r_high, config.r_low];
    for &(k, e) in estimates {
        for (a, &r) in alive.iter_mut().zip(&nominals) {
            *a = *a && within(e, r, config.flat_tol);
        }
        if !alive.iter().any(|&a| a) {
            return Some(k);
        }
    }
    None
}

enum Selection {
    /// Candidate `which` is the flat one, at `value` ohms; the other was ruled
    /// out at sample `decided_at`.
    Chosen {
        which: Resistor,
        value: f64,
        decided_at: usize,
    },
    /// Both stayed flat for the whole BEP.
    Ambiguous,
}

fn select(
    high: &CandidateTrace,
    low: &CandidateTrace,
    config: &SimConfig,
    who: &str,
) -> Result<Selection> {
    let vh = detect_flat(&high.estimates, config);
    let vl = detect_flat(&low.estimates, config);
    let (which, value, rival) = match (vh.flat_value(), vl.flat_value()) {
        (Some(_), Some(_)) => return Ok(Selection::Ambiguous),
        (Some(v), None) => (Resistor::High, v, low),
        (None, Some(v)) => (Resistor::Low, v, high),
        (None, None) => {
            return Err(KljnError::ModelViolation(format!(
                "neither of {who}'s candidate noises gives a flat resistance"
            )))
        }
    };
    let decided_at = elimination_index(&rival.estimates, config)
        .expect("a non-flat candidate with usable samples is eliminated somewhere");
    Ok(Selection::Chosen {
        which,
        value,
        decided_at,
    })
}

/// Eve's conclusions for one BEP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackOutcome {
    pub mode: AttackMode,
    /// Ohms, `None` when undecided.
    pub r_b_hat: Option<f64>,
    pub r_a_hat: Option<f64>,
    pub eve_alice_bit: Option<Resistor>,
    pub eve_bob_bit: Option<Resistor>,
    /// Samples Eve consumed before her verdict was fixed.
    pub samples_to_decision: usize,
    /// Both of a party's candidate noises stayed flat for the whole BEP.
    pub ambiguous: bool,
    /// Unilateral mean-square fell on or past the inversion singularity and
    /// `r_a_hat` came from the nearest-level fallback.
    pub low_confidence: bool,
    /// Unilateral estimate of the parallel resistance, ohms.
    pub r_p_hat: Option<f64>,
}

impl AttackOutcome {
    fn undecided(mode: AttackMode, len: usize) -> Self {
        AttackOutcome {
            mode,
            r_b_hat: None,
            r_a_hat: None,
            eve_alice_bit: None,
            eve_bob_bit: None,
            samples_to_decision: len,
            ambiguous: true,
            low_confidence: false,
            r_p_hat: None,
        }
    }

    pub fn is_decided(&self) -> bool {
        self.eve_alice_bit.is_some() && self.eve_bob_bit.is_some()
    }

    /// Level class implied by Eve's two resistor verdicts.
    pub fn implied_level(&self) -> Option<LevelClass> {
        Some(LevelClass::of_pair(self.eve_alice_bit?, self.eve_bob_bit?))
    }

    /// `Some(true)` for HH/LL rounds, which carry no key bit.
    pub fn insecure(&self) -> Option<bool> {
        self.implied_level().map(|l| !l.is_secure())
    }

    pub fn cracked(&self, choice_a: Resistor, choice_b: Resistor) -> bool {
        self.eve_alice_bit == Some(choice_a) && self.eve_bob_bit == Some(choice_b)
    }

    /// Consistency with the honest parties' reading of the same wire.
    pub fn consistent_with_wire(&self, wire: &WireTrace, config: &SimConfig) -> Result<bool> {
        match self.implied_level() {
            None => Ok(true),
            Some(l) => Ok(l == classify_level(mean_square(&wire.voltage)?, config)),
        }
    }
}

fn nominal_of(value: f64, config: &SimConfig) -> Resistor {
    if value == config.r_high {
        Resistor::High
    } else {
        Resistor::Low
    }
}

fn check_pair(pair: &NoisePair, len: usize) -> Result<()> {
    for t in pair.iter() {
        if t.len() != len {
            return Err(KljnError::LengthMismatch {
                left: len,
                right: t.len(),
            });
        }
    }
    Ok(())
}

struct BobFix<'a> {
    noise: &'a NoiseTrace,
    r_b: f64,
    decided_at: usize,
}

fn fix_bob<'a>(
    wire: &WireTrace,
    bob: &'a NoisePair,
    config: &SimConfig,
) -> Result<Option<BobFix<'a>>> {
    check_pair(bob, wire.len())?;
    let high = candidate_resistance_trace(wire, bob.high.samples(), config)?;
    let low = candidate_resistance_trace(wire, bob.low.samples(), config)?;
    Ok(match select(&high, &low, config, "Bob")? {
        Selection::Ambiguous => None,
        Selection::Chosen {
            which,
            value,
            decided_at,
        } => Some(BobFix {
            noise: bob.get(which),
            r_b: value,
            decided_at,
        }),
    })
}

/// Eve replays all four generators. Bob's connected noise is the candidate
/// whose Ohm's-law trace is flat; with it, Alice's resistance follows from the
/// loop current.
pub fn bilateral_attack(
    wire: &WireTrace,
    alice: &NoisePair,
    bob: &NoisePair,
    config: &SimConfig,
) -> Result<AttackOutcome> {
    let n = wire.len();
    check_pair(alice, n)?;
    let Some(fix) = fix_bob(wire, bob, config)? else {
        return Ok(AttackOutcome::undecided(AttackMode::Bilateral, n));
    };
    let u_b = fix.noise.samples();
    let high = alice_resistance_trace(wire, alice.high.samples(), u_b, fix.r_b, config)?;
    let low = alice_resistance_trace(wire, alice.low.samples(), u_b, fix.r_b, config)?;
    let (r_a, alice_at) = match select(&high, &low, config, "Alice")? {
        Selection::Ambiguous => {
            let mut out = AttackOutcome::undecided(AttackMode::Bilateral, n);
            out.r_b_hat = Some(fix.r_b);
            out.eve_bob_bit = Some(nominal_of(fix.r_b, config));
            return Ok(out);
        }
        Selection::Chosen {
            value, decided_at, ..
        } => (value, decided_at),
    };
    Ok(AttackOutcome {
        mode: AttackMode::Bilateral,
        r_b_hat: Some(fix.r_b),
        r_a_hat: Some(r_a),
        eve_alice_bit: Some(nominal_of(r_a, config)),
        eve_bob_bit: Some(nominal_of(fix.r_b, config)),
        samples_to_decision: fix.decided_at.max(alice_at) + 1,
        ambiguous: false,
        low_confidence: false,
        r_p_hat: None,
    })
}

/// Algebraic inverse of the parallel combination: the `r_a` with
/// `r_a ∥ r_b = r_p`.
///
/// The closed form `r_p·r_b/(r_b − r_p)` amplifies the rounding of `r_p` by
/// κ = r_b/(r_b − r_p), so it can miss every exact preimage by several ulps.
/// Floats out to ~4κ ulps either side are scanned, nearest first, and the first
/// one whose parallel combination with `r_b` reproduces `r_p` exactly is
/// returned; failing that, the one landing closest.
pub fn invert_parallel(r_p: f64, r_b: f64) -> Result<f64> {
    if !(r_b.is_finite() && r_b > 0.0) {
        return Err(KljnError::invalid(
            "r_b",
            format!("must be finite and > 0, got {r_b}"),
        ));
    }
    if !(r_p.is_finite() && r_p > 0.0) {
        return Err(KljnError::invalid(
            "r_p",
            format!("must be finite and > 0, got {r_p}"),
        ));
    }
    if r_p >= r_b {
        return Err(KljnError::SingularInversion { r_p, r_b });
    }
    let x0 = r_p * r_b / (r_b - r_p);
    let kappa = r_b / (r_b - r_p);
    let radius = (4.0 * kappa).ceil().min(65_536.0) as usize + 8;
    let err = |x: f64| (parallel(x, r_b) - r_p).abs();
    let (mut best, mut best_err) = (x0, err(x0));
    let (mut up, mut down) = (x0, x0);
    for _ in 0..radius {
        if best_err == 0.0 {
            break;
        }
        up = up.next_up();
        down = down.next_down();
        for x in [down, up] {
            let e = err(x);
            if e < best_err {
                best = x;
                best_err = e;
            }
        }
    }
    Ok(best)
}

/// Unilateral readout of Alice's resistor from a full-BEP mean-square `ms`
/// once Bob's resistance is known.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParallelReadout {
    pub r_p: f64,
    pub r_a: Resistor,
    pub low_confidence: bool,
}

pub fn read_alice_from_mean_square(
    ms: f64,
    r_b: f64,
    config: &SimConfig,
) -> Result<ParallelReadout> {
    let r_p = ms / config.thermal_scale();
    if r_p < r_b {
        if r_p <= 0.0 {
            // A silent wire is as far below every level as it gets.
            return Ok(ParallelReadout {
                r_p,
                r_a: Resistor::Low,
                low_confidence: true,
            });
        }
        let r_a = invert_parallel(r_p, r_b)?;
        return Ok(ParallelReadout {
            r_p,
            r_a: config.snap_resistance(r_a),
            low_confidence: false,
        });
    }
    // On or past the singularity: nearest in log-space among the two parallel
    // values Alice could have produced.
    let dist = |r: Resistor| (parallel(r.resistance(config), r_b).ln() - r_p.ln()).abs();
    let r_a = if dist(Resistor::High) <= dist(Resistor::Low) {
        Resistor::High
    } else {
        Resistor::Low
    };
    Ok(ParallelReadout {
        r_p,
        r_a,
        low_confidence: true,
    })
}

/// Eve replays only Bob's generators. Bob's resistor falls out of Ohm's law
/// as in the bilateral case; Alice's needs the full-BEP mean-square.
pub fn unilateral_attack(
    wire: &WireTrace,
    bob: &NoisePair,
    config: &SimConfig,
) -> Result<AttackOutcome> {
    let n = wire.len();
    let Some(fix) = fix_bob(wire, bob, config)? else {
        return Ok(AttackOutcome::undecided(AttackMode::Unilateral, n));
    };
    let ms = mean_square(&wire.voltage)?;
    let readout = read_alice_from_mean_square(ms, fix.r_b, config)?;
    Ok(AttackOutcome {
        mode: AttackMode::Unilateral,
        r_b_hat: Some(fix.r_b),
        r_a_hat: Some(readout.r_a.resistance(config)),
        eve_alice_bit: Some(readout.r_a),
        eve_bob_bit: Some(nominal_of(fix.r_b, config)),
        samples_to_decision: n,
        ambiguous: false,
        low_confidence: readout.low_confidence,
        r_p_hat: Some(readout.r_p),
    })
}
