//! Run settings: a flat `key = value` file overlaid by command-line flags.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::Args;
use kljn_core::{AttackMode, ExportFormat, Resistor, Seed, SimConfig};

use crate::CliError;

/// Tag under which a missing `--switch-seed` is derived from `--seed`.
pub const SWITCH_SEED_TAG: u64 = u64::MAX;

pub const DEFAULT_N_BEPS: usize = 1000;
pub const DEFAULT_TIMING_SAMPLES: usize = 1_000_000;

/// Everything a run can be told, either by file or by flag. Unset fields fall
/// back to the defaults of [`SimConfig`].
#[derive(Debug, Clone, Default, PartialEq, Args)]
pub struct CliConfig {
    /// Master seed of the noise generators.
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,
    /// Seed of the resistor switches (derived from --seed when omitted).
    #[arg(long, global = true, value_name = "U64")]
    pub switch_seed: Option<u64>,
    #[arg(long, global = true, value_name = "N", value_parser = parse_count)]
    pub n_beps: Option<usize>,
    #[arg(long, global = true, value_name = "N", value_parser = parse_count)]
    pub samples_per_bep: Option<usize>,
    #[arg(long, global = true, value_name = "OHMS")]
    pub r_high: Option<f64>,
    #[arg(long, global = true, value_name = "OHMS")]
    pub r_low: Option<f64>,
    #[arg(long, global = true, value_name = "K")]
    pub t_eff: Option<f64>,
    #[arg(long, global = true, value_name = "HZ")]
    pub bandwidth: Option<f64>,
    /// Quantizer resolution in bits.
    #[arg(long, global = true, value_name = "BITS", value_parser = parse_delta)]
    pub delta: Option<u32>,
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Format of per-BEP records (csv or jsonl).
    #[arg(long, global = true, value_name = "FORMAT", value_parser = parse_format)]
    pub format: Option<ExportFormat>,

    #[arg(skip)]
    pub mode: Option<AttackMode>,
    #[arg(skip)]
    pub samples: Option<usize>,
    #[arg(skip)]
    pub bob_choice: Option<Resistor>,
    #[arg(skip)]
    pub alice_choice: Option<Resistor>,
}

/// Accepts plain integers and integral scientific notation such as `1e6`.
pub fn parse_count(s: &str) -> Result<usize, String> {
    if let Ok(n) = s.parse::<usize>() {
        return Ok(n);
    }
    let x: f64 = s.parse().map_err(|_| format!("not a count: {s:?}"))?;
    if x.is_finite() && x >= 0.0 && x.fract() == 0.0 && x <= 9_007_199_254_740_992.0 {
        Ok(x as usize)
    } else {
        Err(format!("not a non-negative integer: {s:?}"))
    }
}

pub fn parse_delta(s: &str) -> Result<u32, String> {
    let d: u32 = s.parse().map_err(|_| format!("not a bit count: {s:?}"))?;
    if (1..=kljn_core::config::MAX_RESOLUTION_BITS).contains(&d) {
        Ok(d)
    } else {
        Err(format!(
            "must be in 1..={}, got {d}",
            kljn_core::config::MAX_RESOLUTION_BITS
        ))
    }
}

pub fn parse_format(s: &str) -> Result<ExportFormat, String> {
    ExportFormat::from_str(s).map_err(|e| e.to_string())
}

pub fn parse_mode(s: &str) -> Result<AttackMode, String> {
    AttackMode::from_str(s).map_err(|e| e.to_string())
}

pub fn parse_resistor(s: &str) -> Result<Resistor, String> {
    Resistor::from_str(s).map_err(|e| e.to_string())
}

fn parse_f64(s: &str) -> Result<f64, String> {
    s.parse().map_err(|_| format!("not a number: {s:?}"))
}

fn parse_u64(s: &str) -> Result<u64, String> {
    s.parse()
        .map_err(|_| format!("not an unsigned integer: {s:?}"))
}

impl CliConfig {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }

    /// Parses `key = value` lines. `#` starts a comment; keys are flag names
    /// without the dashes, `_` and `-` interchangeable.
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut c = CliConfig::default();
        let mut seen = std::collections::HashSet::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let lineno = n + 1;
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| format!("line {lineno}: expected key = value"))?;
            let key = key.trim().replace('_', "-");
            let value = value.trim();
            if !seen.insert(key.clone()) {
                return Err(format!("line {lineno}: duplicate key {key:?}"));
            }
            let at = |e: String| format!("line {lineno}: {key}: {e}");
            match key.as_str() {
                "seed" => c.seed = Some(parse_u64(value).map_err(at)?),
                "switch-seed" => c.switch_seed = Some(parse_u64(value).map_err(at)?),
                "n-beps" => c.n_beps = Some(parse_count(value).map_err(at)?),
                "samples-per-bep" => c.samples_per_bep = Some(parse_count(value).map_err(at)?),
                "r-high" => c.r_high = Some(parse_f64(value).map_err(at)?),
                "r-low" => c.r_low = Some(parse_f64(value).map_err(at)?),
                "t-eff" => c.t_eff = Some(parse_f64(value).map_err(at)?),
                "bandwidth" => c.bandwidth = Some(parse_f64(value).map_err(at)?),
                "delta" => c.delta = Some(parse_delta(value).map_err(at)?),
                "out" => c.out = Some(PathBuf::from(value)),
                "format" => c.format = Some(parse_format(value).map_err(at)?),
                "mode" => c.mode = Some(parse_mode(value).map_err(at)?),
                "samples" => c.samples = Some(parse_count(value).map_err(at)?),
                "bob-choice" => c.bob_choice = Some(parse_resistor(value).map_err(at)?),
                "alice-choice" => c.alice_choice = Some(parse_resistor(value).map_err(at)?),
                _ => return Err(format!("line {lineno}: unknown key {key:?}")),
            }
        }
        Ok(c)
    }

    /// Fields set in `top` win.
    pub fn overlay(self, top: CliConfig) -> CliConfig {
        CliConfig {
            seed: top.seed.or(self.seed),
            switch_seed: top.switch_seed.or(self.switch_seed),
            n_beps: top.n_beps.or(self.n_beps),
            samples_per_bep: top.samples_per_bep.or(self.samples_per_bep),
            r_high: top.r_high.or(self.r_high),
            r_low: top.r_low.or(self.r_low),
            t_eff: top.t_eff.or(self.t_eff),
            bandwidth: top.bandwidth.or(self.bandwidth),
            delta: top.delta.or(self.delta),
            out: top.out.or(self.out),
            format: top.format.or(self.format),
            mode: top.mode.or(self.mode),
            samples: top.samples.or(self.samples),
            bob_choice: top.bob_choice.or(self.bob_choice),
            alice_choice: top.alice_choice.or(self.alice_choice),
        }
    }

    /// Physical configuration with overrides applied. The current floor is
    /// recomputed from the final resistances.
    pub fn sim_config(&self) -> SimConfig {
        let d = SimConfig::default();
        SimConfig {
            r_high: self.r_high.unwrap_or(d.r_high),
            r_low: self.r_low.unwrap_or(d.r_low),
            t_eff: self.t_eff.unwrap_or(d.t_eff),
            bandwidth: self.bandwidth.unwrap_or(d.bandwidth),
            samples_per_bep: self.samples_per_bep.unwrap_or(d.samples_per_bep),
            resolution_bits: self.delta.unwrap_or(d.resolution_bits),
            ..d
        }
        .with_default_current_floor()
    }

    pub fn n_beps(&self) -> usize {
        self.n_beps.unwrap_or(DEFAULT_N_BEPS)
    }

    pub fn format(&self) -> ExportFormat {
        self.format.unwrap_or(ExportFormat::Csv)
    }

    /// `(master, switch, drawn)`; `drawn` is true when the master seed came
    /// from system entropy.
    pub fn seeds(&self) -> (Seed, Seed, bool) {
        let (master, drawn) = match self.seed {
            Some(s) => (Seed(s), false),
            None => (Seed(rand::random()), true),
        };
        let switch = self
            .switch_seed
            .map(Seed)
            .unwrap_or_else(|| master.derive(SWITCH_SEED_TAG));
        (master, switch, drawn)
    }
}
