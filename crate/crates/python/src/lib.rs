//! Python module `pymsp`.

use std::path::PathBuf;

use num_complex::Complex64;
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyOSError, PyValueError};
use pyo3::prelude::*;

use msp_power::cache::{read_sample_cache, write_sample_cache, CacheError};
use msp_power::config::{parse_experiment, parse_norm, Bound as RateBound, ConfigError, ExperimentConfig};
use msp_power::experiment::{
    compare_bounds, rate_scale, run_experiment, solve_bound, BoundRun, ExperimentError, UatfBaseline,
};
use msp_power::rates::{moment_statistics, oer_rates, uatf_rates, RateError, UserWeights};
use msp_power::{MspError, SolverConfig};

create_exception!(pymsp, MspPowerError, PyException);

fn err<E: Into<ExperimentError>>(e: E) -> PyErr {
    let e = e.into();
    let text = e.to_string();
    match e {
        ExperimentError::Config(ConfigError::Io { .. })
        | ExperimentError::Cache(CacheError::Io { .. })
        | ExperimentError::Io { .. } => PyOSError::new_err(text),
        ExperimentError::Config(_) => PyValueError::new_err(text),
        _ => MspPowerError::new_err(text),
    }
}

fn rate_err(e: RateError) -> PyErr {
    err(ExperimentError::Rates(e))
}

fn parse_bound(s: &str) -> PyResult<RateBound> {
    s.parse().map_err(PyValueError::new_err)
}

/// A scenario document plus keyword overrides.
#[pyclass(module = "pymsp", skip_from_py_object)]
#[derive(Clone)]
struct Scenario {
    config: ExperimentConfig,
}

fn scenario_from(
    text: &str,
    seed: Option<u64>,
    samples: Option<usize>,
    p_max: Option<f64>,
) -> Result<ExperimentConfig, ExperimentError> {
    let mut config = parse_experiment(text)?;
    if let Some(seed) = seed {
        config.scenario.seed = seed;
    }
    if let Some(s) = samples {
        config.scenario.sample_count = s;
    }
    if let Some(p) = p_max {
        config.scenario.p_max = p;
    }
    config.validate()?;
    Ok(config)
}

#[pymethods]
impl Scenario {
    #[new]
    #[pyo3(signature = (text = "", *, seed = None, samples = None, p_max = None))]
    fn new(text: &str, seed: Option<u64>, samples: Option<usize>, p_max: Option<f64>) -> PyResult<Self> {
        scenario_from(text, seed, samples, p_max)
            .map(|config| Self { config })
            .map_err(err)
    }

    #[getter]
    fn num_users(&self) -> usize {
        self.config.scenario.num_users
    }

    #[getter]
    fn num_aps(&self) -> usize {
        self.config.scenario.num_aps
    }

    #[getter]
    fn samples(&self) -> usize {
        self.config.scenario.sample_count
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.config.scenario.seed
    }

    #[getter]
    fn p_max(&self) -> f64 {
        self.config.scenario.p_max
    }

    #[getter]
    fn noise_power(&self) -> f64 {
        self.config.scenario.noise_power_mw()
    }

    /// Draws the scenario's sample set. Releases the GIL while running.
    fn simulate(&self, py: Python<'_>) -> PyResult<SampleSet> {
        let scenario = self.config.scenario.clone();
        py.detach(move || msp_power::simulate(&scenario))
            .map(|s| SampleSet { inner: s.samples })
            .map_err(err)
    }

    /// Solves both bounds and writes the CSV outputs to `out_dir`.
    fn run(&self, py: Python<'_>, out_dir: PathBuf) -> PyResult<Comparison> {
        let config = self.config.clone();
        py.detach(move || run_experiment(&config, &out_dir))
            .map(Comparison::from)
            .map_err(err)
    }

    fn __repr__(&self) -> String {
        let s = &self.config.scenario;
        format!(
            "Scenario(num_aps={}, antennas_per_ap={}, num_users={}, samples={}, seed={})",
            s.num_aps, s.antennas_per_ap, s.num_users, s.sample_count, s.seed
        )
    }
}

/// Channel and beamformer samples. Entries are Python complex numbers,
/// sample-major then user-major.
#[pyclass(module = "pymsp", skip_from_py_object)]
#[derive(Clone)]
struct SampleSet {
    inner: msp_power::SampleSet,
}

#[pymethods]
impl SampleSet {
    #[new]
    fn new(
        users: usize,
        antennas: usize,
        noise_power: f64,
        channels: Vec<Complex64>,
        beamformers: Vec<Complex64>,
    ) -> PyResult<Self> {
        msp_power::SampleSet::new(users, antennas, noise_power, channels, beamformers)
            .map(|inner| Self { inner })
            .map_err(rate_err)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        read_sample_cache(&path).map(|inner| Self { inner }).map_err(err)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        write_sample_cache(&self.inner, &path).map_err(err)
    }

    #[getter]
    fn users(&self) -> usize {
        self.inner.users()
    }

    #[getter]
    fn antennas(&self) -> usize {
        self.inner.antennas()
    }

    #[getter]
    fn sample_count(&self) -> usize {
        self.inner.sample_count()
    }

    #[getter]
    fn noise_power(&self) -> f64 {
        self.inner.noise_power()
    }

    fn channel(&self, sample: usize, user: usize) -> PyResult<Vec<Complex64>> {
        self.check(sample, user)?;
        Ok(self.inner.channel(sample, user).to_vec())
    }

    fn beamformer(&self, sample: usize, user: usize) -> PyResult<Vec<Complex64>> {
        self.check(sample, user)?;
        Ok(self.inner.beamformer(sample, user).to_vec())
    }

    /// Per-user OER in nats.
    fn oer_rates(&self, py: Python<'_>, p: Vec<f64>) -> PyResult<Vec<f64>> {
        py.detach(|| oer_rates(&self.inner, &p)).map_err(rate_err)
    }

    /// Per-user UatF rate in nats.
    fn uatf_rates(&self, p: Vec<f64>) -> PyResult<Vec<f64>> {
        uatf_rates(&moment_statistics(&self.inner), &p, self.inner.noise_power()).map_err(rate_err)
    }

    fn __len__(&self) -> usize {
        self.inner.sample_count()
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.inner == other.inner
    }

    fn __repr__(&self) -> String {
        format!(
            "SampleSet(samples={}, users={}, antennas={})",
            self.inner.sample_count(),
            self.inner.users(),
            self.inner.antennas()
        )
    }
}

impl SampleSet {
    fn check(&self, sample: usize, user: usize) -> PyResult<()> {
        if sample >= self.inner.sample_count() || user >= self.inner.users() {
            return Err(pyo3::exceptions::PyIndexError::new_err(format!(
                "({sample}, {user}) out of range for {} samples and {} users",
                self.inner.sample_count(),
                self.inner.users()
            )));
        }
        Ok(())
    }
}

/// Result of one max-min solve.
#[pyclass(module = "pymsp", get_all, skip_from_py_object)]
#[derive(Clone)]
struct Solution {
    bound: String,
    power: Vec<f64>,
    eigenvalue: f64,
    converged: bool,
    iterations: usize,
    /// Weighted min rate (nats) under the solved bound, per iterate.
    objective: Vec<f64>,
    /// Per-user OER (nats) at `power`.
    oer_rates: Vec<f64>,
}

impl From<BoundRun> for Solution {
    fn from(run: BoundRun) -> Self {
        Self {
            bound: run.bound.to_string(),
            iterations: run.result.iterations(),
            eigenvalue: run.result.eigenvalue,
            converged: run.result.converged,
            power: run.result.power.into_vec(),
            objective: run.objective,
            oer_rates: run.oer_rates,
        }
    }
}

#[pymethods]
impl Solution {
    fn __repr__(&self) -> String {
        format!(
            "Solution(bound={}, converged={}, iterations={}, power={:?})",
            self.bound, self.converged, self.iterations, self.power
        )
    }
}

/// OER solution and the UatF baseline on the same samples.
#[pyclass(module = "pymsp", get_all, skip_from_py_object)]
struct Comparison {
    oer: Solution,
    /// `None` when some user's mean effective channel is zero.
    uatf: Option<Solution>,
    /// Weighted min OER (nats) at each solution.
    oer_objective: f64,
    uatf_solution_oer_objective: Option<f64>,
}

impl From<msp_power::experiment::ExperimentOutputs> for Comparison {
    fn from(out: msp_power::experiment::ExperimentOutputs) -> Self {
        let oer_objective = out.oer_objective();
        let uatf_solution_oer_objective = out.uatf_solution_oer_objective();
        Self {
            oer: out.oer.into(),
            uatf: match out.uatf {
                UatfBaseline::Solved(run) => Some(run.into()),
                UatfBaseline::Degenerate { .. } => None,
            },
            oer_objective,
            uatf_solution_oer_objective,
        }
    }
}

fn solver(
    p_max: f64,
    norm: &str,
    tolerance: f64,
    max_iterations: usize,
    initial: Option<Vec<f64>>,
) -> PyResult<SolverConfig> {
    let mut config = SolverConfig::new(p_max)
        .with_norm(parse_norm(norm).map_err(PyValueError::new_err)?)
        .with_tolerance(tolerance)
        .with_max_iterations(max_iterations);
    if let Some(p) = initial {
        config.initial_point = Some(msp_power::PowerVector::new(p).map_err(err)?);
    }
    Ok(config)
}

fn weights(w: Option<Vec<f64>>, users: usize) -> PyResult<UserWeights> {
    match w {
        Some(w) => UserWeights::new(w).map_err(rate_err),
        None => Ok(UserWeights::uniform(users)),
    }
}

/// Max-min weighted rate under `bound` ("oer" or "uatf").
#[pyfunction]
#[pyo3(signature = (samples, p_max, *, bound = "oer", norm = "linf", weights = None, tolerance = 1e-8, max_iterations = 500, initial = None))]
#[allow(clippy::too_many_arguments)]
fn solve(
    py: Python<'_>,
    samples: &SampleSet,
    p_max: f64,
    bound: &str,
    norm: &str,
    weights: Option<Vec<f64>>,
    tolerance: f64,
    max_iterations: usize,
    initial: Option<Vec<f64>>,
) -> PyResult<Solution> {
    let bound = parse_bound(bound)?;
    let config = solver(p_max, norm, tolerance, max_iterations, initial)?;
    let w = self::weights(weights, samples.inner.users())?;
    let set = &samples.inner;
    py.detach(|| solve_bound(set, bound, &w, &config))
        .map(Solution::from)
        .map_err(err)
}

/// Solves OER, then UatF, on the same samples.
#[pyfunction]
#[pyo3(signature = (samples, p_max, *, norm = "linf", weights = None, tolerance = 1e-8, max_iterations = 500))]
fn compare(
    py: Python<'_>,
    samples: &SampleSet,
    p_max: f64,
    norm: &str,
    weights: Option<Vec<f64>>,
    tolerance: f64,
    max_iterations: usize,
) -> PyResult<Comparison> {
    let mut config = parse_experiment("").map_err(err)?;
    config.solver.norm = parse_norm(norm).map_err(PyValueError::new_err)?;
    config.solver.weights = weights;
    config.solver.tolerance = tolerance;
    config.solver.max_iterations = max_iterations;
    config.output.raw_rates = true;
    let scale = rate_scale(&config);
    let set = &samples.inner;
    py.detach(|| compare_bounds(set, &config.solver, p_max, scale))
        .map(Comparison::from)
        .map_err(err)
}

#[pyfunction]
fn thompson_metric(p: Vec<f64>, q: Vec<f64>) -> PyResult<f64> {
    msp_power::thompson_metric(&p, &q).map_err(|e: MspError| err(e))
}

#[pymodule]
fn pymsp(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Scenario>()?;
    m.add_class::<SampleSet>()?;
    m.add_class::<Solution>()?;
    m.add_class::<Comparison>()?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(compare, m)?)?;
    m.add_function(wrap_pyfunction!(thompson_metric, m)?)?;
    m.add("MspPowerError", m.py().get_type::<MspPowerError>())?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_apply_and_validate() {
        let c = scenario_from("[network]\nnum_users = 3\n", Some(9), Some(12), Some(50.0)).unwrap();
        assert_eq!(c.scenario.num_users, 3);
        assert_eq!((c.scenario.seed, c.scenario.sample_count, c.scenario.p_max), (9, 12, 50.0));
        assert!(scenario_from("", None, Some(0), None).is_err());
        assert!(scenario_from("[network]\nbogus = 1\n", None, None, None).is_err());
    }
}
