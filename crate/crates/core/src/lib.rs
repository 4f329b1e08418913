//! Discrete-time simulator of the ideal Kirchhoff-Law-Johnson-Noise (KLJN)
//! key exchange, with an eavesdropper who has compromised the random number
//! generators behind the parties' noise sources.
//!
//! - [`noise`]: seeded Johnson-noise emulation and Δ-bit quantization.
//! - [`protocol`]: wire solution, mean-square levels, honest-party inference.
//! - [`attack`]: Ohm's-law candidate traces, bilateral and unilateral attacks.
//! - [`timing`]: coincidence probabilities and Eve's waiting time.
//! - [`harness`]: Monte-Carlo runs and run-length histograms.
//! - [`export`]: CSV / JSON-lines output.

pub mod attack;
pub mod config;
pub mod error;
pub mod export;
pub mod harness;
pub mod noise;
pub mod protocol;
pub mod timing;

pub use attack::{
    alice_resistance_trace, bilateral_attack, candidate_resistance_trace, detect_flat,
    invert_parallel, read_alice_from_mean_square, unilateral_attack, AttackMode, AttackOutcome,
    CandidateTrace, FlatKind, FlatVerdict,
};
pub use config::{Party, Resistor, ResistorChoice, SimConfig, BOLTZMANN};
pub use error::{KljnError, Result};
pub use export::{export_records, ExportFormat};
pub use harness::{
    empirical_coincidence_histogram, replay_bep, run_monte_carlo, BepRow, CoincidenceHistogram,
    ExperimentRun, ExperimentSpec, SummaryStats,
};
pub use noise::{generate_noise_trace, johnson_rms, quantize_uniform, NoisePair, NoiseTrace, Seed};
pub use protocol::{
    classify_level, infer_peer_bit, mean_square, nominal_levels, parallel, run_bep, solve_wire,
    BepRecord, LevelClass, NominalLevels, PeerVerdict, WireTrace,
};
pub use timing::{
    autocorrelation_time, coincidence_probability, waiting_time, CoincidenceModel, WaitingTime,
};
