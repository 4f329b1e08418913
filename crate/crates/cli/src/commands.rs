use std::io::Write;
use std::path::{Path, PathBuf};

use kljn_core::export::{export_candidate_traces, export_histogram, export_json};
use kljn_core::harness::PairStats;
use kljn_core::{
    candidate_resistance_trace, detect_flat, empirical_coincidence_histogram, export_records,
    nominal_levels, run_bep, run_monte_carlo, AttackMode, CandidateTrace, CoincidenceModel,
    ExperimentSpec, ExportFormat, FlatKind, FlatVerdict, NoisePair, Party, Resistor, Seed,
    SimConfig, SummaryStats,
};
use serde::Serialize;

use crate::settings::{CliConfig, DEFAULT_TIMING_SAMPLES};
use crate::CliError;

/// `<data stem>.summary.json` next to the data file.
pub fn summary_path(data: &Path) -> PathBuf {
    data.with_extension("summary.json")
}

fn data_path(settings: &CliConfig, stem: &str, format: ExportFormat) -> PathBuf {
    settings
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("{stem}.{}", format.extension())))
}

fn print_seeds(
    out: &mut dyn Write,
    master: Seed,
    switch: Option<Seed>,
    drawn: bool,
) -> std::io::Result<()> {
    match switch {
        Some(s) => write!(out, "seed = {master}, switch-seed = {s}")?,
        None => write!(out, "seed = {master}")?,
    }
    if drawn {
        write!(
            out,
            " (drawn from system entropy; pass --seed {master} to replay)"
        )?;
    }
    writeln!(out)
}

fn print_written(out: &mut dyn Write, paths: &[&Path]) -> std::io::Result<()> {
    for p in paths {
        writeln!(out, "wrote {}", p.display())?;
    }
    Ok(())
}

fn warn_csv_only(settings: &CliConfig, what: &str) {
    if settings.format == Some(ExportFormat::JsonLines) {
        eprintln!("note: --format applies to per-BEP records; {what} is written as CSV");
    }
}

#[derive(Serialize)]
struct RunReport<'a> {
    spec: &'a ExperimentSpec,
    summary: &'a SummaryStats,
}

fn monte_carlo(
    settings: &CliConfig,
    attack: Option<AttackMode>,
    stem: &str,
    out: &mut dyn Write,
) -> Result<SummaryStats, CliError> {
    let (master_seed, switch_seed, drawn) = settings.seeds();
    let spec = ExperimentSpec {
        config: settings.sim_config(),
        n_beps: settings.n_beps(),
        attack,
        master_seed,
        switch_seed,
    };
    spec.validate()?;
    print_seeds(out, master_seed, Some(switch_seed), drawn)?;
    let run = run_monte_carlo(&spec)?;
    let format = settings.format();
    let data = data_path(settings, stem, format);
    let summary = summary_path(&data);
    export_records(&run.rows, &data, format)?;
    export_json(
        &RunReport {
            spec: &spec,
            summary: &run.summary,
        },
        &summary,
    )?;
    print_written(out, &[&data, &summary])?;
    Ok(run.summary)
}

fn pooled(pairs: &[&PairStats]) -> Option<(usize, f64, f64)> {
    let n: usize = pairs.iter().map(|p| p.count).sum();
    if n == 0 {
        return None;
    }
    let mean = pairs.iter().map(|p| p.count as f64 * p.mean).sum::<f64>() / n as f64;
    // per-pair standard errors combine as independent estimates
    let var = pairs
        .iter()
        .map(|p| (p.count as f64 * p.std_err).powi(2))
        .sum::<f64>()
        / (n as f64).powi(2);
    Some((n, mean, var.sqrt()))
}

pub fn simulate(settings: &CliConfig, out: &mut dyn Write) -> Result<(), CliError> {
    let s = monte_carlo(settings, None, "simulate", out)?;
    let levels = nominal_levels(&settings.sim_config());
    let get = |a, b| s.pair(a, b);
    use Resistor::{High as H, Low as L};
    writeln!(out)?;
    writeln!(
        out,
        "{:<6}{:>8}{:>16}{:>14}{:>12}{:>10}",
        "level", "BEPs", "mean <U_w^2>", "nominal", "std err", "rel err"
    )?;
    let rows = [
        ("LL", get(L, L).into_iter().collect::<Vec<_>>(), levels.ll),
        (
            "MID",
            get(L, H).into_iter().chain(get(H, L)).collect(),
            levels.mid,
        ),
        ("HH", get(H, H).into_iter().collect(), levels.hh),
    ];
    for (label, pairs, nominal) in rows {
        match pooled(&pairs) {
            Some((n, mean, se)) => writeln!(
                out,
                "{label:<6}{n:>8}{mean:>16.4}{nominal:>14.4}{se:>12.4}{:>9.3}%",
                100.0 * (mean / nominal - 1.0)
            )?,
            None => writeln!(out, "{label:<6}{:>8}{:>16}{nominal:>14.4}", 0, "-")?,
        }
    }
    if let (Some(hl), Some(lh)) = (get(H, L), get(L, H)) {
        let se = hl.std_err.hypot(lh.std_err);
        writeln!(
            out,
            "HL - LH = {:.4} V^2 ({:.2} combined std err)",
            hl.mean - lh.mean,
            if se > 0.0 {
                (hl.mean - lh.mean).abs() / se
            } else {
                0.0
            }
        )?;
    }
    writeln!(
        out,
        "secure BEPs {} of {}, misclassified {}, honest agreement {}/{}",
        s.secure_beps, s.n_beps, s.misclassified, s.honest_agreement, s.secure_beps
    )?;
    Ok(())
}

pub fn attack(settings: &CliConfig, out: &mut dyn Write) -> Result<(), CliError> {
    let mode = settings
        .mode
        .ok_or_else(|| CliError::Usage("attack needs --mode bilateral|unilateral".to_string()))?;
    let s = monte_carlo(settings, Some(mode), "attack", out)?;
    writeln!(out)?;
    writeln!(out, "mode: {mode}")?;
    match s.attack_success_rate {
        Some(rate) => writeln!(
            out,
            "success rate: {rate:.3} over {} secure BEPs",
            s.secure_beps
        )?,
        None => writeln!(out, "success rate: n/a (no secure BEPs)")?,
    }
    writeln!(
        out,
        "undecided: {}, low confidence: {}",
        s.attack_undecided, s.attack_low_confidence
    )?;
    if let (Some(mean), Some(median), Some(max)) = (
        s.mean_samples_to_decision,
        s.median_samples_to_decision,
        s.max_samples_to_decision,
    ) {
        writeln!(
            out,
            "samples to decision: mean {mean:.3}, median {median}, max {max} (N = {})",
            s.samples_per_bep
        )?;
    }
    let waits: usize = s.waiting_histogram.iter().sum();
    if waits > 0 {
        let total: usize = s
            .waiting_histogram
            .iter()
            .enumerate()
            .map(|(k, c)| k * c)
            .sum();
        let model = CoincidenceModel::from_config(&settings.sim_config())?;
        writeln!(
            out,
            "waiting time: mean {:.4} samples (model {:.4}), max {}, never distinguished {}",
            total as f64 / waits as f64,
            model.mean_waiting_steps(),
            s.waiting_histogram.len() - 1,
            s.all_coincident_beps
        )?;
    }
    Ok(())
}

#[derive(Serialize)]
struct TimingReport {
    seed: Seed,
    delta: u32,
    bandwidth: f64,
    samples: usize,
    p0: f64,
    tau: f64,
    mean_waiting_steps: f64,
    coincidences: usize,
    runs: usize,
    fitted_ratio: f64,
    chi_square: f64,
    degrees_of_freedom: usize,
    p_value: f64,
}

pub fn timing(settings: &CliConfig, out: &mut dyn Write) -> Result<(), CliError> {
    warn_csv_only(settings, "the run-length histogram");
    let config = settings.sim_config();
    config.validate()?;
    let samples = settings.samples.unwrap_or(DEFAULT_TIMING_SAMPLES);
    let (seed, _, drawn) = settings.seeds();
    print_seeds(out, seed, None, drawn)?;
    let model = CoincidenceModel::from_config(&config)?;
    let h = empirical_coincidence_histogram(&config, samples, seed)?;
    let data = data_path(settings, "timing", ExportFormat::Csv);
    let summary = summary_path(&data);
    export_histogram(&h, &data)?;
    export_json(
        &TimingReport {
            seed,
            delta: model.delta,
            bandwidth: model.bandwidth,
            samples,
            p0: model.p0,
            tau: model.tau,
            mean_waiting_steps: model.mean_waiting_steps(),
            coincidences: h.coincidences,
            runs: h.runs,
            fitted_ratio: h.fitted_ratio,
            chi_square: h.chi_square,
            degrees_of_freedom: h.degrees_of_freedom,
            p_value: h.p_value,
        },
        &summary,
    )?;
    print_written(out, &[&data, &summary])?;
    writeln!(out)?;
    writeln!(out, "delta = {} bits, samples = {samples}", model.delta)?;
    writeln!(out, "p0 = 2^-delta = {:.3e}", model.p0)?;
    writeln!(
        out,
        "tau = 1/(2 bandwidth) = {} ms at {} Hz",
        model.tau * 1e3,
        model.bandwidth
    )?;
    writeln!(
        out,
        "fitted ratio = {:.4} vs {:.4} ({:+.2}%), {} runs",
        h.fitted_ratio,
        h.expected_ratio,
        100.0 * (h.fitted_ratio / h.expected_ratio - 1.0),
        h.runs
    )?;
    writeln!(
        out,
        "chi-square = {:.3} on {} dof, p = {:.4}",
        h.chi_square, h.degrees_of_freedom, h.p_value
    )?;
    writeln!(
        out,
        "mean wait = {:.4e} steps = {:.4e} s",
        model.mean_waiting_steps(),
        model.mean_waiting_steps() * model.tau
    )?;
    Ok(())
}

/// Sample mean and standard deviation (n − 1) of a candidate trace.
pub fn trace_stats(trace: &CandidateTrace) -> (f64, f64) {
    let n = trace.estimates.len() as f64;
    let mean = trace.values().sum::<f64>() / n;
    let var = if trace.estimates.len() > 1 {
        trace.values().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

#[derive(Serialize)]
struct CandidateReport {
    candidate: Resistor,
    verdict: FlatVerdict,
    rows: usize,
    omitted: usize,
    mean: f64,
    std: f64,
}

#[derive(Serialize)]
struct Fig4Report<'a> {
    seed: Seed,
    alice_choice: Resistor,
    bob_choice: Resistor,
    config: &'a SimConfig,
    candidates: Vec<CandidateReport>,
    bob_read: Option<Resistor>,
}

pub fn reproduce_fig4(settings: &CliConfig, out: &mut dyn Write) -> Result<(), CliError> {
    warn_csv_only(settings, "the candidate trace file");
    let config = settings.sim_config();
    config.validate()?;
    let alice = settings.alice_choice.unwrap_or(Resistor::Low);
    let bob = settings.bob_choice.unwrap_or(Resistor::High);
    let (master_seed, switch_seed, drawn) = settings.seeds();
    let spec = ExperimentSpec {
        config,
        n_beps: 1,
        attack: Some(AttackMode::Bilateral),
        master_seed,
        switch_seed,
    };
    print_seeds(out, master_seed, None, drawn)?;
    let seed_b = spec.party_seed(0, Party::Bob);
    let record = run_bep(
        spec.party_seed(0, Party::Alice),
        seed_b,
        alice,
        bob,
        &config,
    )?;
    let noise = NoisePair::generate(seed_b, Party::Bob, &config)?;

    let mut traces = vec![];
    for r in Resistor::BOTH {
        let trace = candidate_resistance_trace(&record.wire, noise.get(r).samples(), &config)?;
        traces.push((r, trace));
    }
    let data = data_path(settings, "fig4", ExportFormat::Csv);
    let summary = summary_path(&data);
    let labelled: Vec<(&str, &CandidateTrace)> =
        traces.iter().map(|(r, t)| (r.label(), t)).collect();
    export_candidate_traces(&labelled, &data)?;

    let candidates: Vec<CandidateReport> = traces
        .iter()
        .map(|(r, t)| {
            let (mean, std) = trace_stats(t);
            CandidateReport {
                candidate: *r,
                verdict: detect_flat(&t.estimates, &config),
                rows: t.estimates.len(),
                omitted: t.omitted,
                mean,
                std,
            }
        })
        .collect();
    let flat: Vec<Resistor> = candidates
        .iter()
        .filter(|c| matches!(c.verdict.kind, FlatKind::Flat(_)))
        .map(|c| c.candidate)
        .collect();
    let bob_read = (flat.len() == 1).then(|| flat[0]);
    export_json(
        &Fig4Report {
            seed: master_seed,
            alice_choice: alice,
            bob_choice: bob,
            config: &config,
            candidates,
            bob_read,
        },
        &summary,
    )?;
    print_written(out, &[&data, &summary])?;

    writeln!(out)?;
    writeln!(
        out,
        "Alice on {alice}, Bob on {bob}, N = {}",
        config.samples_per_bep
    )?;
    for (r, t) in &traces {
        let verdict = detect_flat(&t.estimates, &config);
        let (_, std) = trace_stats(t);
        match verdict.kind {
            FlatKind::Flat(v) => writeln!(
                out,
                "candidate {r}: Flat at {v:.6e} ohm ({} samples, {} omitted)",
                t.estimates.len(),
                t.omitted
            )?,
            kind => writeln!(
                out,
                "candidate {r}: {kind:?}, std {std:.3e} ohm ({} samples, {} omitted)",
                t.estimates.len(),
                t.omitted
            )?,
        }
    }
    writeln!(
        out,
        "spike threshold 10 (R_H - R_L) = {:.3e} ohm",
        10.0 * (config.r_high - config.r_low)
    )?;
    match bob_read {
        Some(r) => writeln!(out, "Eve reads Bob = {r}")?,
        None => writeln!(out, "Eve cannot single out Bob's resistor")?,
    }
    Ok(())
}
