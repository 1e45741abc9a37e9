//! Python bindings.
//!
//! The module is importable as `epr_softphoton`. Heavy work (event
//! generation, estimators) runs in Rust on an opaque `EventBatch`.

use pyo3::exceptions::{PyIndexError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyComplex;

use epr_softphoton as core;
use epr_softphoton::config::RunConfig;
use epr_softphoton::runner;

fn value_error(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn generation_error(e: core::GenerationError) -> PyErr {
    match e {
        core::GenerationError::InvalidConfig { .. } | core::GenerationError::Emission(_) => {
            value_error(e)
        }
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

/// Unit vector for a measurement axis or a momentum direction.
#[pyclass(
    name = "Direction",
    module = "epr_softphoton",
    frozen,
    eq,
    from_py_object
)]
#[derive(Clone, Copy, PartialEq)]
struct PyDirection(core::Direction);

#[pymethods]
impl PyDirection {
    /// Normalizes `(x, y, z)`; raises ValueError for zero or non-finite input.
    #[new]
    fn new(x: f64, y: f64, z: f64) -> PyResult<Self> {
        core::Direction::new(x, y, z).map(Self).map_err(value_error)
    }

    /// Polar and azimuthal angles in radians.
    #[staticmethod]
    fn from_angles(theta: f64, phi: f64) -> Self {
        Self(core::Direction::from_angles(theta, phi))
    }

    /// Axis in the x-z plane at `degrees` from +z towards +x.
    #[staticmethod]
    fn in_xz_plane(degrees: f64) -> Self {
        Self(core::Direction::in_xz_plane(degrees))
    }

    #[classattr]
    #[allow(non_snake_case)]
    fn X() -> Self {
        Self(core::Direction::X)
    }

    #[classattr]
    #[allow(non_snake_case)]
    fn Y() -> Self {
        Self(core::Direction::Y)
    }

    #[classattr]
    #[allow(non_snake_case)]
    fn Z() -> Self {
        Self(core::Direction::Z)
    }

    #[getter]
    fn x(&self) -> f64 {
        self.0.x()
    }

    #[getter]
    fn y(&self) -> f64 {
        self.0.y()
    }

    #[getter]
    fn z(&self) -> f64 {
        self.0.z()
    }

    fn dot(&self, other: &PyDirection) -> f64 {
        self.0.dot(&other.0)
    }

    #[allow(clippy::wrong_self_convention)]
    fn to_list(&self) -> [f64; 3] {
        self.0.to_array()
    }

    fn __neg__(&self) -> Self {
        Self(-self.0)
    }

    fn __repr__(&self) -> String {
        format!(
            "Direction({:?}, {:?}, {:?})",
            self.0.x(),
            self.0.y(),
            self.0.z()
        )
    }
}

/// Amplitudes of the singlet over (+,+), (+,-), (-,+), (-,-).
#[pyfunction]
fn singlet_amplitudes(py: Python<'_>) -> Vec<Bound<'_, PyComplex>> {
    core::make_singlet()
        .amplitudes()
        .iter()
        .map(|c| PyComplex::from_doubles(py, c.re, c.im))
        .collect()
}

/// Singlet joint probabilities `(p++, p+-, p-+, p--)` for axes `a`, `b`.
#[pyfunction]
fn joint_distribution(a: PyDirection, b: PyDirection) -> PyResult<(f64, f64, f64, f64)> {
    let d = core::joint_distribution(&core::make_singlet(), &a.0, &b.0).map_err(value_error)?;
    Ok((d.p_pp, d.p_pm, d.p_mp, d.p_mm))
}

/// One singlet measurement with a seeded generator; returns `(s_A, s_B)` in ħ/2 units.
#[pyfunction]
fn measure_pair(a: PyDirection, b: PyDirection, seed: u64) -> PyResult<(i32, i32)> {
    let mut rng = core::rng::event_stream(seed, 0);
    let (sa, sb) =
        core::measure_pair(&core::make_singlet(), &a.0, &b.0, &mut rng).map_err(value_error)?;
    Ok((sa.value(), sb.value()))
}

#[pyfunction]
fn correlation_analytic(a: PyDirection, b: PyDirection) -> f64 {
    core::correlation_analytic(&a.0, &b.0)
}

#[pyfunction]
fn chsh_analytic(a: PyDirection, a2: PyDirection, b: PyDirection, b2: PyDirection) -> f64 {
    core::chsh_analytic(&a.0, &a2.0, &b.0, &b2.0)
}

/// Radiation model parameters. Energies are in units of `E_total`.
#[pyclass(
    name = "EmissionParams",
    module = "epr_softphoton",
    get_all,
    set_all,
    from_py_object
)]
#[derive(Clone)]
struct PyEmissionParams {
    alpha: f64,
    e_total: f64,
    e_a: f64,
    m_b: f64,
    e_min: f64,
    kappa_rad: f64,
    kappa_par: f64,
    k_max: usize,
}

impl PyEmissionParams {
    fn to_core(&self) -> core::EmissionParams {
        core::EmissionParams {
            alpha: self.alpha,
            e_total: self.e_total,
            e_a: self.e_a,
            m_b: self.m_b,
            e_min: self.e_min,
            kappa_rad: self.kappa_rad,
            kappa_par: self.kappa_par,
            k_max: self.k_max,
        }
    }

    fn from_core(p: &core::EmissionParams) -> Self {
        PyEmissionParams {
            alpha: p.alpha,
            e_total: p.e_total,
            e_a: p.e_a,
            m_b: p.m_b,
            e_min: p.e_min,
            kappa_rad: p.kappa_rad,
            kappa_par: p.kappa_par,
            k_max: p.k_max,
        }
    }
}

#[pymethods]
impl PyEmissionParams {
    #[new]
    #[pyo3(signature = (alpha=None, e_total=None, e_a=None, m_b=None, e_min=None, kappa_rad=None, kappa_par=None, k_max=None))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        alpha: Option<f64>,
        e_total: Option<f64>,
        e_a: Option<f64>,
        m_b: Option<f64>,
        e_min: Option<f64>,
        kappa_rad: Option<f64>,
        kappa_par: Option<f64>,
        k_max: Option<usize>,
    ) -> PyResult<Self> {
        let d = core::EmissionParams::default();
        let p = core::EmissionParams {
            alpha: alpha.unwrap_or(d.alpha),
            e_total: e_total.unwrap_or(d.e_total),
            e_a: e_a.unwrap_or(d.e_a),
            m_b: m_b.unwrap_or(d.m_b),
            e_min: e_min.unwrap_or(d.e_min),
            kappa_rad: kappa_rad.unwrap_or(d.kappa_rad),
            kappa_par: kappa_par.unwrap_or(d.kappa_par),
            k_max: k_max.unwrap_or(d.k_max),
        };
        p.validate().map_err(value_error)?;
        Ok(Self::from_core(&p))
    }

    /// Raises ValueError naming the first invalid field.
    fn validate(&self) -> PyResult<()> {
        self.to_core().validate().map_err(value_error)
    }

    /// `Λ = E_total − E_A − m_B`.
    fn available_energy(&self) -> f64 {
        core::available_energy(&self.to_core())
    }

    /// Mean photon multiplicity before truncation.
    fn radiation_strength(&self) -> f64 {
        self.to_core().radiation_strength()
    }

    fn parallel_spin_probability(&self, k: usize) -> f64 {
        core::parallel_spin_probability(&self.to_core(), k)
    }

    fn __repr__(&self) -> String {
        format!("{:?}", self.to_core())
    }
}

/// Probabilities `p_0 .. p_kmax` of emitting `k` photons.
#[pyfunction]
fn photon_count_distribution(params: &PyEmissionParams) -> PyResult<Vec<f64>> {
    core::photon_count_distribution(&params.to_core())
        .map(|d| d.probabilities().to_vec())
        .map_err(value_error)
}

#[pyclass(
    name = "Photon",
    module = "epr_softphoton",
    frozen,
    skip_from_py_object
)]
#[derive(Clone)]
struct PyPhoton(core::PhotonRecord);

#[pymethods]
impl PyPhoton {
    #[getter]
    fn energy(&self) -> f64 {
        self.0.energy
    }

    #[getter]
    fn direction(&self) -> PyDirection {
        PyDirection(self.0.direction)
    }

    #[getter]
    fn helicity(&self) -> i32 {
        self.0.helicity
    }

    /// Angular momentum along the lab z axis, in units of ħ.
    #[getter]
    fn lab_jz(&self) -> i32 {
        self.0.lab_jz
    }

    fn __repr__(&self) -> String {
        format!(
            "Photon(energy={:?}, helicity={})",
            self.0.energy, self.0.helicity
        )
    }
}

/// Samples `k` photons under the energy budget with a seeded generator.
#[pyfunction]
fn sample_photons(k: usize, params: &PyEmissionParams, seed: u64) -> PyResult<Vec<PyPhoton>> {
    let mut rng = core::rng::event_stream(seed, 0);
    core::sample_photons(k, &params.to_core(), &mut rng)
        .map(|v| v.into_iter().map(PyPhoton).collect())
        .map_err(value_error)
}

#[pyclass(name = "GeneratorConfig", module = "epr_softphoton", from_py_object)]
#[derive(Clone)]
struct PyGeneratorConfig(core::GeneratorConfig);

#[pymethods]
impl PyGeneratorConfig {
    #[new]
    #[pyo3(signature = (emission=None, settings_a=None, settings_b=None, smear_sigma=None, seed=None, n_events=None, max_retries=None))]
    fn new(
        emission: Option<PyEmissionParams>,
        settings_a: Option<Vec<PyDirection>>,
        settings_b: Option<Vec<PyDirection>>,
        smear_sigma: Option<f64>,
        seed: Option<u64>,
        n_events: Option<u64>,
        max_retries: Option<usize>,
    ) -> PyResult<Self> {
        let d = core::GeneratorConfig::default();
        let axes = |v: Option<Vec<PyDirection>>, default: Vec<core::Direction>| {
            v.map_or(default, |v| v.into_iter().map(|d| d.0).collect())
        };
        let c = core::GeneratorConfig {
            emission: emission.map_or(d.emission, |e| e.to_core()),
            settings_a: axes(settings_a, d.settings_a),
            settings_b: axes(settings_b, d.settings_b),
            smear_sigma: smear_sigma.unwrap_or(d.smear_sigma),
            seed: seed.unwrap_or(d.seed),
            n_events: n_events.unwrap_or(d.n_events),
            max_retries: max_retries.unwrap_or(d.max_retries),
        };
        c.validate().map_err(generation_error)?;
        Ok(Self(c))
    }

    #[getter]
    fn emission(&self) -> PyEmissionParams {
        PyEmissionParams::from_core(&self.0.emission)
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.0.seed
    }

    #[getter]
    fn n_events(&self) -> u64 {
        self.0.n_events
    }

    #[getter]
    fn settings_a(&self) -> Vec<PyDirection> {
        self.0.settings_a.iter().copied().map(PyDirection).collect()
    }

    #[getter]
    fn settings_b(&self) -> Vec<PyDirection> {
        self.0.settings_b.iter().copied().map(PyDirection).collect()
    }
}

#[pyclass(name = "Event", module = "epr_softphoton", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyEvent(core::Event);

#[pymethods]
impl PyEvent {
    #[getter]
    fn index(&self) -> u64 {
        self.0.index
    }

    #[getter]
    fn k(&self) -> usize {
        self.0.k
    }

    #[getter]
    fn channel(&self) -> &'static str {
        self.0.channel.label()
    }

    #[getter]
    fn axis_a(&self) -> PyDirection {
        PyDirection(self.0.axis_a)
    }

    #[getter]
    fn axis_b(&self) -> PyDirection {
        PyDirection(self.0.axis_b)
    }

    #[getter]
    fn outcome_a(&self) -> i32 {
        self.0.outcome_a.value()
    }

    #[getter]
    fn outcome_b(&self) -> i32 {
        self.0.outcome_b.value()
    }

    #[getter]
    fn dir_a(&self) -> PyDirection {
        PyDirection(self.0.dir_a)
    }

    #[getter]
    fn dir_b(&self) -> PyDirection {
        PyDirection(self.0.dir_b)
    }

    #[getter]
    fn e_a(&self) -> f64 {
        self.0.e_a
    }

    #[getter]
    fn photons(&self) -> Vec<PyPhoton> {
        self.0.photons.iter().cloned().map(PyPhoton).collect()
    }

    #[getter]
    fn jz_fermions(&self) -> i32 {
        self.0.jz_fermions
    }

    #[getter]
    fn jz_photons(&self) -> i32 {
        self.0.jz_photons
    }

    #[getter]
    fn pt_residual(&self) -> [f64; 2] {
        self.0.pt_residual
    }

    fn ledger_closes(&self) -> bool {
        self.0.ledger_closes()
    }

    fn __repr__(&self) -> String {
        format!(
            "Event(index={}, k={}, channel='{}', outcome_a={}, outcome_b={})",
            self.0.index,
            self.0.k,
            self.0.channel,
            self.0.outcome_a.value(),
            self.0.outcome_b.value()
        )
    }
}

/// Generated events, kept on the Rust side.
#[pyclass(
    name = "EventBatch",
    module = "epr_softphoton",
    frozen,
    skip_from_py_object
)]
struct PyEventBatch(Vec<core::Event>);

impl PyEventBatch {
    fn selected(&self, solid_angle: Option<f64>) -> PyResult<Vec<&core::Event>> {
        let cut = match solid_angle {
            Some(omega) => core::CoincidenceCut::new(omega).map_err(value_error)?,
            None => core::CoincidenceCut::default(),
        };
        Ok(self.0.iter().filter(|e| cut.accepts(e)).collect())
    }
}

#[pymethods]
impl PyEventBatch {
    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn __getitem__(&self, index: isize) -> PyResult<PyEvent> {
        let len = self.0.len() as isize;
        let i = if index < 0 { index + len } else { index };
        if !(0..len).contains(&i) {
            return Err(PyIndexError::new_err("event index out of range"));
        }
        Ok(PyEvent(self.0[i as usize].clone()))
    }

    /// Fraction of events with at least one photon.
    fn radiated_fraction(&self) -> f64 {
        if self.0.is_empty() {
            return 0.0;
        }
        self.0.iter().filter(|e| e.k >= 1).count() as f64 / self.0.len() as f64
    }
}

/// Generates `config.n_events` events; identical output for any `workers`.
#[pyfunction]
#[pyo3(signature = (config, workers=1))]
fn generate_events(
    py: Python<'_>,
    config: &PyGeneratorConfig,
    workers: usize,
) -> PyResult<PyEventBatch> {
    let config = config.0.clone();
    py.detach(move || core::generate_events(&config, workers.max(1)))
        .map(PyEventBatch)
        .map_err(generation_error)
}

#[pyclass(
    name = "CorrelationEstimate",
    module = "epr_softphoton",
    frozen,
    get_all,
    skip_from_py_object
)]
#[derive(Clone)]
struct PyCorrelationEstimate {
    value: f64,
    stderr: f64,
    n_used: u64,
}

#[pymethods]
impl PyCorrelationEstimate {
    fn __repr__(&self) -> String {
        format!(
            "CorrelationEstimate(value={:?}, stderr={:?}, n_used={})",
            self.value, self.stderr, self.n_used
        )
    }
}

/// Mean of `s_A s_B` over accepted events measured along `(a, b)`.
#[pyfunction]
#[pyo3(signature = (events, a, b, solid_angle=None))]
fn estimate_correlation(
    events: &PyEventBatch,
    a: PyDirection,
    b: PyDirection,
    solid_angle: Option<f64>,
) -> PyResult<PyCorrelationEstimate> {
    let est = core::estimate_correlation(events.selected(solid_angle)?, &a.0, &b.0)
        .map_err(value_error)?;
    Ok(PyCorrelationEstimate {
        value: est.value,
        stderr: est.stderr,
        n_used: est.n_used,
    })
}

/// CHSH combination `(S, stderr)` over accepted events.
#[pyfunction]
#[pyo3(signature = (events, a, a2, b, b2, solid_angle=None))]
fn chsh_estimate(
    events: &PyEventBatch,
    a: PyDirection,
    a2: PyDirection,
    b: PyDirection,
    b2: PyDirection,
    solid_angle: Option<f64>,
) -> PyResult<(f64, f64)> {
    let est = core::chsh_estimate(events.selected(solid_angle)?, &a.0, &a2.0, &b.0, &b2.0)
        .map_err(value_error)?;
    Ok((est.s, est.stderr))
}

/// Apparent-violation scan: `(n_violation, n_on_axis, indices)`.
#[pyfunction]
#[pyo3(signature = (events, solid_angle=None))]
fn detect_violations(
    events: &PyEventBatch,
    solid_angle: Option<f64>,
) -> PyResult<(u64, u64, Vec<u64>)> {
    let report = core::detect_violations(events.selected(solid_angle)?);
    if !report.ledger_consistent() {
        return Err(PyRuntimeError::new_err(
            "flagged events with an inconsistent ledger",
        ));
    }
    Ok((report.n_violation, report.n_on_axis, report.indices))
}

/// Runs a configuration given as dotted key-value text in memory and returns
/// the summary text.
#[pyfunction]
#[pyo3(signature = (config_text, workers=1))]
fn simulate(py: Python<'_>, config_text: &str, workers: usize) -> PyResult<String> {
    let config = RunConfig::parse(config_text).map_err(value_error)?;
    py.detach(move || runner::simulate(&config, workers))
        .map(|s| s.to_text())
        .map_err(|e| match e.exit_code() {
            2 => value_error(e),
            _ => PyRuntimeError::new_err(e.to_string()),
        })
}

#[pymodule(name = "epr_softphoton")]
fn epr_softphoton_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyDirection>()?;
    m.add_class::<PyEmissionParams>()?;
    m.add_class::<PyPhoton>()?;
    m.add_class::<PyGeneratorConfig>()?;
    m.add_class::<PyEvent>()?;
    m.add_class::<PyEventBatch>()?;
    m.add_class::<PyCorrelationEstimate>()?;
    m.add_function(wrap_pyfunction!(singlet_amplitudes, m)?)?;
    m.add_function(wrap_pyfunction!(joint_distribution, m)?)?;
    m.add_function(wrap_pyfunction!(measure_pair, m)?)?;
    m.add_function(wrap_pyfunction!(correlation_analytic, m)?)?;
    m.add_function(wrap_pyfunction!(chsh_analytic, m)?)?;
    m.add_function(wrap_pyfunction!(photon_count_distribution, m)?)?;
    m.add_function(wrap_pyfunction!(sample_photons, m)?)?;
    m.add_function(wrap_pyfunction!(generate_events, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_correlation, m)?)?;
    m.add_function(wrap_pyfunction!(chsh_estimate, m)?)?;
    m.add_function(wrap_pyfunction!(detect_violations, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    Ok(())
}
