//! Python bindings for the KLJN simulator (`import kljn`).
//!
//! Resistor choices are the strings `"H"`/`"L"`, parties `"A"`/`"B"`, attack
//! modes `"bilateral"`/`"unilateral"`. Functions taking `config` fall back to
//! the reference parameter set when it is omitted.

use std::str::FromStr;

use kljn_core::{
    AttackMode, AttackOutcome, BepRecord, ExperimentSpec, KljnError, Party, Resistor, Seed,
};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn err(e: KljnError) -> PyErr {
    match e {
        KljnError::InvalidParameter { .. }
        | KljnError::LengthMismatch { .. }
        | KljnError::EmptyTrace
        | KljnError::NoUsableSamples { .. }
        | KljnError::SingularInversion { .. } => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn parse<T: FromStr<Err = KljnError>>(s: &str) -> PyResult<T> {
    T::from_str(s).map_err(err)
}

fn parse_party(s: &str) -> PyResult<Party> {
    match s {
        "A" | "a" | "alice" => Ok(Party::Alice),
        "B" | "b" | "bob" => Ok(Party::Bob),
        _ => Err(PyValueError::new_err(format!(
            "expected party A or B, got {s:?}"
        ))),
    }
}

/// Round-trips a serializable value through Python's `json` module.
fn to_python<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

/// Physical and numerical parameters.
#[pyclass(name = "SimConfig", module = "kljn", skip_from_py_object)]
#[derive(Clone)]
pub struct PySimConfig {
    inner: kljn_core::SimConfig,
}

#[pymethods]
impl PySimConfig {
    /// Unset fields take the reference values; an unset `current_floor` is
    /// derived from the resistances.
    #[new]
    #[pyo3(signature = (r_high=None, r_low=None, t_eff=None, bandwidth=None, samples_per_bep=None, resolution_bits=None, flat_tol=None, current_floor=None))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        r_high: Option<f64>,
        r_low: Option<f64>,
        t_eff: Option<f64>,
        bandwidth: Option<f64>,
        samples_per_bep: Option<usize>,
        resolution_bits: Option<u32>,
        flat_tol: Option<f64>,
        current_floor: Option<f64>,
    ) -> PyResult<Self> {
        let d = kljn_core::SimConfig::default();
        let mut c = kljn_core::SimConfig {
            r_high: r_high.unwrap_or(d.r_high),
            r_low: r_low.unwrap_or(d.r_low),
            t_eff: t_eff.unwrap_or(d.t_eff),
            bandwidth: bandwidth.unwrap_or(d.bandwidth),
            samples_per_bep: samples_per_bep.unwrap_or(d.samples_per_bep),
            resolution_bits: resolution_bits.unwrap_or(d.resolution_bits),
            flat_tol: flat_tol.unwrap_or(d.flat_tol),
            ..d
        }
        .with_default_current_floor();
        if let Some(f) = current_floor {
            c.current_floor = f;
        }
        c.validate().map_err(err)?;
        Ok(PySimConfig { inner: c })
    }

    #[getter]
    fn r_high(&self) -> f64 {
        self.inner.r_high
    }
    #[getter]
    fn r_low(&self) -> f64 {
        self.inner.r_low
    }
    #[getter]
    fn t_eff(&self) -> f64 {
        self.inner.t_eff
    }
    #[getter]
    fn bandwidth(&self) -> f64 {
        self.inner.bandwidth
    }
    #[getter]
    fn boltzmann(&self) -> f64 {
        self.inner.boltzmann
    }
    #[getter]
    fn samples_per_bep(&self) -> usize {
        self.inner.samples_per_bep
    }
    #[getter]
    fn resolution_bits(&self) -> u32 {
        self.inner.resolution_bits
    }
    #[getter]
    fn flat_tol(&self) -> f64 {
        self.inner.flat_tol
    }
    #[getter]
    fn current_floor(&self) -> f64 {
        self.inner.current_floor
    }

    /// 4·k·T_eff·Δf_B.
    fn thermal_scale(&self) -> f64 {
        self.inner.thermal_scale()
    }

    fn __repr__(&self) -> String {
        let c = &self.inner;
        format!(
            "SimConfig(r_high={:e}, r_low={:e}, t_eff={:e}, bandwidth={}, samples_per_bep={}, resolution_bits={})",
            c.r_high, c.r_low, c.t_eff, c.bandwidth, c.samples_per_bep, c.resolution_bits
        )
    }
}

fn cfg(config: Option<PyRef<'_, PySimConfig>>) -> kljn_core::SimConfig {
    config.map(|c| c.inner).unwrap_or_default()
}

/// Result of Eve's attack on one BEP.
#[pyclass(name = "AttackOutcome", module = "kljn", frozen, skip_from_py_object)]
pub struct PyAttackOutcome {
    inner: AttackOutcome,
}

#[pymethods]
impl PyAttackOutcome {
    #[getter]
    fn mode(&self) -> &'static str {
        self.inner.mode.label()
    }
    #[getter]
    fn r_a_hat(&self) -> Option<f64> {
        self.inner.r_a_hat
    }
    #[getter]
    fn r_b_hat(&self) -> Option<f64> {
        self.inner.r_b_hat
    }
    #[getter]
    fn alice_bit(&self) -> Option<&'static str> {
        self.inner.eve_alice_bit.map(Resistor::label)
    }
    #[getter]
    fn bob_bit(&self) -> Option<&'static str> {
        self.inner.eve_bob_bit.map(Resistor::label)
    }
    #[getter]
    fn samples_to_decision(&self) -> usize {
        self.inner.samples_to_decision
    }
    #[getter]
    fn ambiguous(&self) -> bool {
        self.inner.ambiguous
    }
    #[getter]
    fn low_confidence(&self) -> bool {
        self.inner.low_confidence
    }
    #[getter]
    fn r_p_hat(&self) -> Option<f64> {
        self.inner.r_p_hat
    }

    fn cracked(&self, choice_a: &str, choice_b: &str) -> PyResult<bool> {
        Ok(self.inner.cracked(parse(choice_a)?, parse(choice_b)?))
    }

    fn __repr__(&self) -> String {
        let bit = |b: Option<&str>| b.map_or("None".to_string(), |b| format!("'{b}'"));
        format!(
            "AttackOutcome(mode='{}', alice_bit={}, bob_bit={}, samples_to_decision={})",
            self.inner.mode,
            bit(self.alice_bit()),
            bit(self.bob_bit()),
            self.inner.samples_to_decision
        )
    }
}

/// One simulated bit exchange period, traces included.
#[pyclass(name = "Bep", module = "kljn", frozen, skip_from_py_object)]
pub struct PyBep {
    record: BepRecord,
    config: kljn_core::SimConfig,
}

#[pymethods]
impl PyBep {
    #[getter]
    fn choice_a(&self) -> &'static str {
        self.record.choice_a.label()
    }
    #[getter]
    fn choice_b(&self) -> &'static str {
        self.record.choice_b.label()
    }
    #[getter]
    fn mean_square(&self) -> f64 {
        self.record.mean_square
    }
    #[getter]
    fn level(&self) -> &'static str {
        self.record.level.label()
    }
    #[getter]
    fn alice_verdict(&self) -> String {
        self.record.alice_verdict.to_string()
    }
    #[getter]
    fn bob_verdict(&self) -> String {
        self.record.bob_verdict.to_string()
    }
    #[getter]
    fn wire_voltage(&self) -> Vec<f64> {
        self.record.wire.voltage.clone()
    }
    #[getter]
    fn wire_current(&self) -> Vec<f64> {
        self.record.wire.current.clone()
    }
    #[getter]
    fn noise_a(&self) -> Vec<f64> {
        self.record.noise_a.samples().to_vec()
    }
    #[getter]
    fn noise_b(&self) -> Vec<f64> {
        self.record.noise_b.samples().to_vec()
    }

    /// Runs Eve's attack, replaying the generators from this BEP's seeds.
    fn attack(&self, mode: &str) -> PyResult<PyAttackOutcome> {
        let c = &self.config;
        let bob = kljn_core::NoisePair::generate(self.record.seed_b, Party::Bob, c).map_err(err)?;
        let inner = match parse::<AttackMode>(mode)? {
            AttackMode::Bilateral => {
                let alice = kljn_core::NoisePair::generate(self.record.seed_a, Party::Alice, c)
                    .map_err(err)?;
                kljn_core::bilateral_attack(&self.record.wire, &alice, &bob, c)
            }
            AttackMode::Unilateral => kljn_core::unilateral_attack(&self.record.wire, &bob, c),
        }
        .map_err(err)?;
        Ok(PyAttackOutcome { inner })
    }

    /// Ohm's-law estimates of Bob's resistance through each of his candidate
    /// noises: `{"H": [(index, ohms), ...], "L": [...]}`.
    fn candidate_traces<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let c = &self.config;
        let bob = kljn_core::NoisePair::generate(self.record.seed_b, Party::Bob, c).map_err(err)?;
        let out = PyDict::new(py);
        for r in Resistor::BOTH {
            let t =
                kljn_core::candidate_resistance_trace(&self.record.wire, bob.get(r).samples(), c)
                    .map_err(err)?;
            out.set_item(r.label(), t.estimates)?;
        }
        Ok(out)
    }

    fn __repr__(&self) -> String {
        format!(
            "Bep(choice_a={}, choice_b={}, level={}, mean_square={})",
            self.record.choice_a, self.record.choice_b, self.record.level, self.record.mean_square
        )
    }
}

/// Johnson-noise rms voltage of resistance `r`.
#[pyfunction]
#[pyo3(signature = (r, config=None))]
fn johnson_rms(r: f64, config: Option<PyRef<'_, PySimConfig>>) -> PyResult<f64> {
    kljn_core::johnson_rms(r, &cfg(config)).map_err(err)
}

/// `(LL, MID, HH)` nominal mean-square wire voltages.
#[pyfunction]
#[pyo3(signature = (config=None))]
fn nominal_levels(config: Option<PyRef<'_, PySimConfig>>) -> (f64, f64, f64) {
    let l = kljn_core::nominal_levels(&cfg(config));
    (l.ll, l.mid, l.hh)
}

/// Samples of the generator behind `resistor` of `party` under `seed`.
#[pyfunction]
#[pyo3(signature = (seed, resistor, party, config=None))]
fn noise_trace(
    seed: u64,
    resistor: &str,
    party: &str,
    config: Option<PyRef<'_, PySimConfig>>,
) -> PyResult<Vec<f64>> {
    let t = kljn_core::generate_noise_trace(
        Seed(seed),
        parse(resistor)?,
        parse_party(party)?,
        &cfg(config),
    )
    .map_err(err)?;
    Ok(t.into_samples())
}

/// `(voltage, current)` on the wire.
#[pyfunction]
fn solve_wire(u_a: Vec<f64>, u_b: Vec<f64>, r_a: f64, r_b: f64) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let w = kljn_core::solve_wire(&u_a, &u_b, r_a, r_b).map_err(err)?;
    Ok((w.voltage, w.current))
}

#[pyfunction]
#[pyo3(signature = (mean_square, config=None))]
fn classify_level(mean_square: f64, config: Option<PyRef<'_, PySimConfig>>) -> &'static str {
    kljn_core::classify_level(mean_square, &cfg(config)).label()
}

#[pyfunction]
fn parallel(r_a: f64, r_b: f64) -> f64 {
    kljn_core::parallel(r_a, r_b)
}

#[pyfunction]
fn invert_parallel(r_p: f64, r_b: f64) -> PyResult<f64> {
    kljn_core::invert_parallel(r_p, r_b).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (delta, n=1))]
fn coincidence_probability(delta: u32, n: u64) -> f64 {
    kljn_core::coincidence_probability(delta, n)
}

#[pyfunction]
fn autocorrelation_time(bandwidth: f64) -> PyResult<f64> {
    kljn_core::autocorrelation_time(bandwidth).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (seed_a, seed_b, choice_a, choice_b, config=None))]
fn run_bep(
    seed_a: u64,
    seed_b: u64,
    choice_a: &str,
    choice_b: &str,
    config: Option<PyRef<'_, PySimConfig>>,
) -> PyResult<PyBep> {
    let config = cfg(config);
    let record = kljn_core::run_bep(
        Seed(seed_a),
        Seed(seed_b),
        parse(choice_a)?,
        parse(choice_b)?,
        &config,
    )
    .map_err(err)?;
    Ok(PyBep { record, config })
}

/// Monte-Carlo run; returns the summary statistics as a dict. Seeds follow
/// the command-line tool, so equal arguments give equal results.
#[pyfunction]
#[pyo3(signature = (n_beps, seed, switch_seed=None, attack=None, config=None))]
fn run_monte_carlo<'py>(
    py: Python<'py>,
    n_beps: usize,
    seed: u64,
    switch_seed: Option<u64>,
    attack: Option<&str>,
    config: Option<PyRef<'_, PySimConfig>>,
) -> PyResult<Bound<'py, PyAny>> {
    let master = Seed(seed);
    let spec = ExperimentSpec {
        config: cfg(config),
        n_beps,
        attack: attack.map(parse).transpose()?,
        master_seed: master,
        switch_seed: switch_seed
            .map(Seed)
            .unwrap_or_else(|| master.derive(u64::MAX)),
    };
    let run = py
        .detach(|| kljn_core::run_monte_carlo(&spec))
        .map_err(err)?;
    to_python(py, &run.summary)
}

/// Run-length histogram of two independent quantized streams, as a dict.
#[pyfunction]
#[pyo3(signature = (n_samples, seed, config=None))]
fn coincidence_histogram<'py>(
    py: Python<'py>,
    n_samples: usize,
    seed: u64,
    config: Option<PyRef<'_, PySimConfig>>,
) -> PyResult<Bound<'py, PyAny>> {
    let config = cfg(config);
    let h = py
        .detach(|| kljn_core::empirical_coincidence_histogram(&config, n_samples, Seed(seed)))
        .map_err(err)?;
    to_python(py, &h)
}

#[pymodule]
fn kljn(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySimConfig>()?;
    m.add_class::<PyBep>()?;
    m.add_class::<PyAttackOutcome>()?;
    m.add_function(wrap_pyfunction!(johnson_rms, m)?)?;
    m.add_function(wrap_pyfunction!(nominal_levels, m)?)?;
    m.add_function(wrap_pyfunction!(noise_trace, m)?)?;
    m.add_function(wrap_pyfunction!(solve_wire, m)?)?;
    m.add_function(wrap_pyfunction!(classify_level, m)?)?;
    m.add_function(wrap_pyfunction!(parallel, m)?)?;
    m.add_function(wrap_pyfunction!(invert_parallel, m)?)?;
    m.add_function(wrap_pyfunction!(coincidence_probability, m)?)?;
    m.add_function(wrap_pyfunction!(autocorrelation_time, m)?)?;
    m.add_function(wrap_pyfunction!(run_bep, m)?)?;
    m.add_function(wrap_pyfunction!(run_monte_carlo, m)?)?;
    m.add_function(wrap_pyfunction!(coincidence_histogram, m)?)?;
    m.add("BOLTZMANN", kljn_core::BOLTZMANN)?;
    Ok(())
}
