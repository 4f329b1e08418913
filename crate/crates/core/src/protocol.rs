//! One bit exchange period of the ideal KLJN loop.
//!
//! Alice and Bob each connect one resistor, the wire carries the loop current
//! driven by the two connected noise generators, and both parties read the
//! wire's mean-square voltage to learn whether the round produced a secure bit.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::config::{Party, Resistor, SimConfig};
use crate::error::{KljnError, Result};
use crate::noise::{generate_noise_trace, NoiseTrace, Seed};

/// Voltage and current on the wire, the only quantities Eve can measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireTrace {
    /// Volts.
    pub voltage: Vec<f64>,
    /// Amperes, positive from Alice to Bob.
    pub current: Vec<f64>,
}

impl WireTrace {
    pub fn len(&self) -> usize {
        self.voltage.len()
    }

    pub fn is_empty(&self) -> bool {
        self.voltage.is_empty()
    }
}

fn check_resistance(name: &'static str, r: f64) -> Result<()> {
    if r.is_finite() && r > 0.0 {
        Ok(())
    } else {
        Err(KljnError::invalid(
            name,
            format!("must be finite and > 0, got {r}"),
        ))
    }
}

/// Kirchhoff/Ohm solution of the loop:
/// `I_w = (U_A − U_B)/(R_A + R_B)` and `U_w = I_w·R_B + U_B`.
pub fn solve_wire(u_a: &[f64], u_b: &[f64], r_a: f64, r_b: f64) -> Result<WireTrace> {
    if u_a.len() != u_b.len() {
        return Err(KljnError::LengthMismatch {
            left: u_a.len(),
            right: u_b.len(),
        });
    }
    check_resistance("r_a", r_a)?;
    check_resistance("r_b", r_b)?;
    let loop_r = r_a + r_b;
    let (voltage, current) = u_a
        .iter()
        .zip(u_b)
        .map(|(&a, &b)| {
            let i = (a - b) / loop_r;
            (i * r_b + b, i)
        })
        .unzip();
    Ok(WireTrace { voltage, current })
}

/// Largest per-sample relative residuals of a wire trace against its sources.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WireResiduals {
    /// `U_w − (I_w·R_B + U_B)`, relative to `|I_w·R_B| + |U_B|`.
    pub voltage_law: f64,
    /// `I_w·(R_A + R_B) − (U_A − U_B)`, relative to `|U_A| + |U_B|`.
    pub current_law: f64,
    /// `U_w − (U_A·R_B + U_B·R_A)/(R_A + R_B)`, relative to the term magnitudes of both forms.
    pub closed_form: f64,
}

impl WireResiduals {
    pub fn max(&self) -> f64 {
        self.voltage_law.max(self.current_law).max(self.closed_form)
    }
}

fn rel(residual: f64, scale: f64) -> f64 {
    if scale == 0.0 {
        residual.abs()
    } else {
        residual.abs() / scale
    }
}

/// Checks the voltage law, the current law and the symmetric closed form
/// sample by sample. Relative residuals are scaled by the magnitude of the
/// terms being summed, so samples where the wire voltage nearly cancels are
/// judged against floating-point rounding rather than against zero.
pub fn wire_residuals(
    wire: &WireTrace,
    u_a: &[f64],
    u_b: &[f64],
    r_a: f64,
    r_b: f64,
) -> Result<WireResiduals> {
    if wire.len() != u_a.len() || u_a.len() != u_b.len() || wire.current.len() != wire.len() {
        return Err(KljnError::LengthMismatch {
            left: wire.len(),
            right: u_a.len().min(u_b.len()),
        });
    }
    let mut out = WireResiduals {
        voltage_law: 0.0,
        current_law: 0.0,
        closed_form: 0.0,
    };
    let loop_r = r_a + r_b;
    for k in 0..wire.len() {
        let (uw, iw, a, b) = (wire.voltage[k], wire.current[k], u_a[k], u_b[k]);
        let v = rel(uw - (iw * r_b + b), (iw * r_b).abs() + b.abs());
        let c = rel(iw * loop_r - (a - b), a.abs() + b.abs());
        let closed = (a * r_b + b * r_a) / loop_r;
        let s = rel(
            uw - closed,
            (a * r_b).abs() / loop_r + (b * r_a).abs() / loop_r + (iw * r_b).abs() + b.abs(),
        );
        out.voltage_law = out.voltage_law.max(v);
        out.current_law = out.current_law.max(c);
        out.closed_form = out.closed_form.max(s);
    }
    Ok(out)
}

/// `R_A·R_B / (R_A + R_B)`.
pub fn parallel(r_a: f64, r_b: f64) -> f64 {
    r_a * r_b / (r_a + r_b)
}

/// Mean-square wire level class. `Mid` is the shared HL/LH level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LevelClass {
    #[serde(rename = "LL")]
    Ll,
    #[serde(rename = "MID")]
    Mid,
    #[serde(rename = "HH")]
    Hh,
}

impl LevelClass {
    /// Class produced nominally by a pair of resistor choices.
    pub fn of_pair(a: Resistor, b: Resistor) -> LevelClass {
        match (a, b) {
            (Resistor::Low, Resistor::Low) => LevelClass::Ll,
            (Resistor::High, Resistor::High) => LevelClass::Hh,
            _ => LevelClass::Mid,
        }
    }

    pub fn is_secure(self) -> bool {
        self == LevelClass::Mid
    }

    pub fn label(self) -> &'static str {
        match self {
            LevelClass::Ll => "LL",
            LevelClass::Mid => "MID",
            LevelClass::Hh => "HH",
        }
    }
}

impl fmt::Display for LevelClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Nominal mean-square wire voltages in V², strictly increasing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NominalLevels {
    pub ll: f64,
    pub mid: f64,
    pub hh: f64,
}

impl NominalLevels {
    pub fn get(&self, class: LevelClass) -> f64 {
        match class {
            LevelClass::Ll => self.ll,
            LevelClass::Mid => self.mid,
            LevelClass::Hh => self.hh,
        }
    }

    /// Geometric means of adjacent levels: (LL|MID, MID|HH).
    pub fn boundaries(&self) -> (f64, f64) {
        ((self.ll * self.mid).sqrt(), (self.mid * self.hh).sqrt())
    }
}

pub fn nominal_levels(config: &SimConfig) -> NominalLevels {
    let scale = config.thermal_scale();
    let (h, l) = (config.r_high, config.r_low);
    NominalLevels {
        ll: scale * parallel(l, l),
        mid: scale * parallel(h, l),
        hh: scale * parallel(h, h),
    }
}

pub fn mean_square(trace: &[f64]) -> Result<f64> {
    if trace.is_empty() {
        return Err(KljnError::EmptyTrace);
    }
    Ok(trace.iter().map(|x| x * x).sum::<f64>() / trace.len() as f64)
}

/// Nearest nominal level in log-space. A value exactly on a boundary goes to
/// the higher class.
pub fn classify_level(ms: f64, config: &SimConfig) -> LevelClass {
    let (low_mid, mid_high) = nominal_levels(config).boundaries();
    if ms >= mid_high {
        LevelClass::Hh
    } else if ms >= low_mid {
        LevelClass::Mid
    } else {
        LevelClass::Ll
    }
}

/// What an honest party concludes about its peer's resistor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PeerVerdict {
    #[serde(rename = "peer=H")]
    PeerHigh,
    #[serde(rename = "peer=L")]
    PeerLow,
    #[serde(rename = "insecure")]
    Insecure,
}

impl PeerVerdict {
    pub fn peer(self) -> Option<Resistor> {
        match self {
            PeerVerdict::PeerHigh => Some(Resistor::High),
            PeerVerdict::PeerLow => Some(Resistor::Low),
            PeerVerdict::Insecure => None,
        }
    }
}

impl fmt::Display for PeerVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PeerVerdict::PeerHigh => "peer=H",
            PeerVerdict::PeerLow => "peer=L",
            PeerVerdict::Insecure => "insecure",
        })
    }
}

pub fn infer_peer_bit(own: Resistor, level: LevelClass) -> PeerVerdict {
    match (level, own) {
        (LevelClass::Ll | LevelClass::Hh, _) => PeerVerdict::Insecure,
        (LevelClass::Mid, Resistor::High) => PeerVerdict::PeerLow,
        (LevelClass::Mid, Resistor::Low) => PeerVerdict::PeerHigh,
    }
}

/// Ground truth and observables of one bit exchange period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BepRecord {
    pub seed_a: Seed,
    pub seed_b: Seed,
    pub choice_a: Resistor,
    pub choice_b: Resistor,
    /// Alice's connected generator.
    pub noise_a: NoiseTrace,
    /// Bob's connected generator.
    pub noise_b: NoiseTrace,
    pub wire: WireTrace,
    pub mean_square: f64,
    pub level: LevelClass,
    pub alice_verdict: PeerVerdict,
    pub bob_verdict: PeerVerdict,
}

impl BepRecord {
    pub fn r_a(&self, config: &SimConfig) -> f64 {
        self.choice_a.resistance(config)
    }

    pub fn r_b(&self, config: &SimConfig) -> f64 {
        self.choice_b.resistance(config)
    }

    /// Whether both honest parties recovered the other's true choice.
    pub fn honest_parties_agree(&self) -> bool {
        self.alice_verdict.peer() == Some(self.choice_b)
            && self.bob_verdict.peer() == Some(self.choice_a)
    }
}

pub fn run_bep(
    seed_a: Seed,
    seed_b: Seed,
    choice_a: Resistor,
    choice_b: Resistor,
    config: &SimConfig,
) -> Result<BepRecord> {
    let noise_a = generate_noise_trace(seed_a, choice_a, Party::Alice, config)?;
    let noise_b = generate_noise_trace(seed_b, choice_b, Party::Bob, config)?;
    let wire = solve_wire(
        noise_a.samples(),
        noise_b.samples(),
        choice_a.resistance(config),
        choice_b.resistance(config),
    )?;
    let ms = mean_square(&wire.voltage)?;
    let level = classify_level(ms, config);
    Ok(BepRecord {
        seed_a,
        seed_b,
        choice_a,
        choice_b,
        noise_a,
        noise_b,
        wire,
        mean_square: ms,
        level,
        alice_verdict: infer_peer_bit(choice_a, level),
        bob_verdict: infer_peer_bit(choice_b, level),
    })
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * b.abs().max(f64::MIN_POSITIVE)
    }

    #[test]
    fn symmetric_cancellation() {
        let w = solve_wire(&[10.0], &[-10.0], 10e3, 10e3).unwrap();
        assert!(close(w.current[0], 1e-3, 1e-15));
        assert_eq!(w.voltage[0], 0.0);
    }

    #[test]
    fn equal_sources_carry_no_current() {
        let u = [3.5, -1.25, 0.0, 42.0];
        let w = solve_wire(&u, &u, 100e3, 10e3).unwrap();
        assert!(w.current.iter().all(|&i| i == 0.0));
        assert_eq!(w.voltage, u);
    }

    #[test]
    fn asymmetric_divider() {
        let w = solve_wire(&[5.0], &[0.0], 100e3, 10e3).unwrap();
        // 5 / 110e3 and (5 / 110e3)·10e3
        assert!(close(w.current[0], 4.545454545454545e-05, 1e-14));
        assert!(close(w.voltage[0], 0.45454545454545453, 1e-14));
        assert!(close(w.current[0], 45.4545e-6, 1e-5));
        assert!(close(w.voltage[0], 0.454545, 1e-5));
    }

    #[test]
    fn wire_errors() {
        assert!(matches!(
            solve_wire(&[1.0, 2.0], &[1.0], 1.0, 1.0),
            Err(KljnError::LengthMismatch { left: 2, right: 1 })
        ));
        assert!(solve_wire(&[1.0], &[1.0], 0.0, 1.0).is_err());
    }

    #[test]
    fn nominal_levels_at_default_config() {
        let c = SimConfig::default();
        let n = nominal_levels(&c);
        assert!(close(parallel(100e3, 10e3), 9090.90909090909, 1e-12));
        assert!(close(n.ll, 138.0, 1e-12));
        assert!(close(n.mid, 250.90909090909085, 1e-12));
        assert!(close(n.hh, 1380.0, 1e-12));
        assert!(n.ll < n.mid && n.mid < n.hh);
        let (lo, hi) = n.boundaries();
        assert!(close(lo, 186.0791620398548, 1e-12));
        assert!(close(hi, 588.4339771414847, 1e-12));
    }

    #[test]
    fn mean_square_basics() {
        assert_eq!(mean_square(&[3.0, -3.0, 3.0, -3.0]).unwrap(), 9.0);
        assert_eq!(mean_square(&[0.0, 0.0, 0.0]).unwrap(), 0.0);
        assert!(matches!(mean_square(&[]), Err(KljnError::EmptyTrace)));
    }

    #[test]
    fn classification_points() {
        let c = SimConfig::default();
        assert_eq!(classify_level(250.91, &c), LevelClass::Mid);
        assert_eq!(classify_level(0.0, &c), LevelClass::Ll);
        assert_eq!(classify_level(138.0, &c), LevelClass::Ll);
        assert_eq!(classify_level(1380.0, &c), LevelClass::Hh);
        assert_eq!(classify_level(1e9, &c), LevelClass::Hh);
        let (lo, hi) = nominal_levels(&c).boundaries();
        assert_eq!(classify_level(lo, &c), LevelClass::Mid);
        assert_eq!(classify_level(hi, &c), LevelClass::Hh);
        assert_eq!(classify_level(lo.next_down(), &c), LevelClass::Ll);
        assert_eq!(classify_level(hi.next_down(), &c), LevelClass::Mid);
    }

    #[test]
    fn peer_inference() {
        assert_eq!(
            infer_peer_bit(Resistor::High, LevelClass::Mid),
            PeerVerdict::PeerLow
        );
        assert_eq!(
            infer_peer_bit(Resistor::Low, LevelClass::Ll),
            PeerVerdict::Insecure
        );
        assert_eq!(
            infer_peer_bit(Resistor::Low, LevelClass::Mid),
            PeerVerdict::PeerHigh
        );
        assert_eq!(
            infer_peer_bit(Resistor::High, LevelClass::Hh),
            PeerVerdict::Insecure
        );
    }

    #[test]
    fn bep_wire_obeys_both_laws() {
        let c = SimConfig::default();
        let rec = run_bep(Seed(11), Seed(12), Resistor::High, Resistor::Low, &c).unwrap();
        let res = wire_residuals(
            &rec.wire,
            rec.noise_a.samples(),
            rec.noise_b.samples(),
            rec.r_a(&c),
            rec.r_b(&c),
        )
        .unwrap();
        assert!(res.max() <= 1e-12, "{res:?}");
        assert_eq!(rec.level, classify_level(rec.mean_square, &c));
        assert_eq!(
            rec,
            run_bep(Seed(11), Seed(12), Resistor::High, Resistor::Low, &c).unwrap()
        );
    }

    #[test]
    fn hl_wire_mean_square_matches_nominal() {
        let c = SimConfig {
            samples_per_bep: 100_000,
            ..SimConfig::default()
        };
        let rec = run_bep(Seed(3), Seed(4), Resistor::High, Resistor::Low, &c).unwrap();
        assert!(
            (rec.mean_square / 250.91 - 1.0).abs() < 0.02,
            "{}",
            rec.mean_square
        );
        assert_eq!(rec.level, LevelClass::Mid);
        assert!(rec.honest_parties_agree());
    }

    #[test]
    fn hh_is_insecure_for_both() {
        let c = SimConfig::default();
        let mut insecure = 0;
        for s in 0..200u64 {
            let rec = run_bep(Seed(s), Seed(s + 1000), Resistor::High, Resistor::High, &c).unwrap();
            if rec.alice_verdict == PeerVerdict::Insecure
                && rec.bob_verdict == PeerVerdict::Insecure
            {
                insecure += 1;
            }
        }
        assert_eq!(insecure, 200);
    }

    #[test]
    fn hl_and_lh_share_the_nominal_level() {
        let c = SimConfig::default();
        assert_eq!(
            LevelClass::of_pair(Resistor::High, Resistor::Low),
            LevelClass::of_pair(Resistor::Low, Resistor::High)
        );
        assert_eq!(parallel(100e3, 10e3), parallel(10e3, 100e3));
        assert_eq!(classify_level(nominal_levels(&c).mid, &c), LevelClass::Mid);
    }

    proptest! {
        #[test]
        fn wire_forms_agree(
            u in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 1..64),
            r_a in 1.0f64..1e7,
            r_b in 1.0f64..1e7,
        ) {
            let (ua, ub): (Vec<f64>, Vec<f64>) = u.into_iter().unzip();
            let w = solve_wire(&ua, &ub, r_a, r_b).unwrap();
            let res = wire_residuals(&w, &ua, &ub, r_a, r_b).unwrap();
            prop_assert!(res.max() <= 1e-12, "{:?}", res);
        }

        #[test]
        fn parallel_is_symmetric_and_below_both(a in 1e-3f64..1e9, b in 1e-3f64..1e9) {
            prop_assert_eq!(parallel(a, b), parallel(b, a));
            prop_assert!(parallel(a, b) < a.min(b));
        }
    }
}
