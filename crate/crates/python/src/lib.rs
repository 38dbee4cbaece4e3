//! Python bindings for `spflow`.

use std::collections::BTreeMap;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use spflow::allocator::{self, Method};
use spflow::dist::fit_delayed_exponential;
use spflow::numeric::{discretize, GridConfig};
use spflow::simulator;
use spflow::workflow::parse_scenario;

fn py_err(e: spflow::Error) -> PyErr {
    match e.exit_code() {
        1 => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn parse_method(name: &str) -> PyResult<Method> {
    name.parse().map_err(py_err)
}

#[pyclass(name = "Distribution", frozen, from_py_object, module = "spflow")]
#[derive(Clone)]
struct Distribution(spflow::DistributionSpec);

#[pymethods]
impl Distribution {
    #[staticmethod]
    fn exponential(rate: f64) -> PyResult<Self> {
        checked(spflow::DistributionSpec::exponential(rate))
    }

    #[staticmethod]
    fn point_mass(location: f64) -> PyResult<Self> {
        checked(spflow::DistributionSpec::point_mass(location))
    }

    #[staticmethod]
    #[pyo3(signature = (rate, delay = 0.0, alpha = 1.0))]
    fn delayed_exp(rate: f64, delay: f64, alpha: f64) -> PyResult<Self> {
        checked(spflow::DistributionSpec::delayed_exp(rate, delay, alpha))
    }

    #[staticmethod]
    #[pyo3(signature = (rate, delay = 0.0, alpha = 1.0))]
    fn delayed_pareto(rate: f64, delay: f64, alpha: f64) -> PyResult<Self> {
        checked(spflow::DistributionSpec::delayed_pareto(rate, delay, alpha))
    }

    /// Weighted mixture of `(weight, Distribution)` pairs.
    #[staticmethod]
    fn mixture(components: Vec<(f64, Distribution)>) -> PyResult<Self> {
        checked(spflow::DistributionSpec::mixture(
            components.into_iter().map(|(w, d)| (w, d.0)),
        ))
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let spec: spflow::DistributionSpec =
            serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
        checked(spec)
    }

    fn to_json(&self) -> String {
        serde_json::to_string(&self.0).expect("spec serializes")
    }

    #[getter]
    fn family(&self) -> &'static str {
        self.0.family_name()
    }

    fn cdf(&self, t: f64) -> f64 {
        self.0.cdf(t)
    }

    fn sf(&self, t: f64) -> f64 {
        self.0.sf(t)
    }

    fn quantile(&self, p: f64) -> PyResult<f64> {
        if !(0.0..=1.0).contains(&p) {
            return Err(PyValueError::new_err(format!("probability {p} outside [0, 1]")));
        }
        Ok(self.0.quantile(p))
    }

    fn mean(&self) -> PyResult<f64> {
        self.0.mean().map_err(py_err)
    }

    /// `(mean, variance)`.
    fn moments(&self) -> PyResult<(f64, f64)> {
        self.0.moments().map_err(py_err)
    }

    /// Atoms as `(location, mass)` pairs.
    fn atoms(&self) -> Vec<(f64, f64)> {
        self.0.atoms()
    }

    #[pyo3(signature = (n, seed = 42))]
    fn sample(&self, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| self.0.sample(&mut rng)).collect()
    }

    #[pyo3(signature = (points = 16384, quantile = 0.999999))]
    fn discretize(&self, py: Python<'_>, points: usize, quantile: f64) -> PyResult<NumericDistribution> {
        let cfg = GridConfig::new(points, quantile);
        cfg.ensure_valid().map_err(py_err)?;
        let spec = self.0.clone();
        py.detach(move || discretize(&spec, &cfg))
            .map(NumericDistribution)
            .map_err(py_err)
    }

    fn __repr__(&self) -> String {
        format!("Distribution({})", self.to_json())
    }
}

fn checked(spec: spflow::DistributionSpec) -> PyResult<Distribution> {
    spec.ensure_valid().map_err(py_err)?;
    Ok(Distribution(spec))
}

#[pyclass(name = "NumericDistribution", frozen, skip_from_py_object, module = "spflow")]
#[derive(Clone)]
struct NumericDistribution(spflow::NumericDistribution);

#[pymethods]
impl NumericDistribution {
    #[staticmethod]
    fn from_csv(text: &str) -> PyResult<Self> {
        spflow::NumericDistribution::from_csv(text)
            .map(NumericDistribution)
            .map_err(py_err)
    }

    fn to_csv(&self) -> String {
        self.0.to_csv()
    }

    fn cdf(&self, t: f64) -> f64 {
        self.0.cdf(t)
    }

    fn mean(&self) -> f64 {
        self.0.mean()
    }

    fn variance(&self) -> f64 {
        self.0.variance()
    }

    fn atoms(&self) -> Vec<(f64, f64)> {
        self.0.atoms().iter().map(|a| (a.location, a.mass)).collect()
    }

    /// Cell centres of the continuous part.
    fn grid_times(&self) -> Vec<f64> {
        self.0.grid_times()
    }

    fn density(&self) -> Vec<f64> {
        self.0.density()
    }

    fn convolve(&self, py: Python<'_>, other: &NumericDistribution) -> Self {
        let (a, b) = (&self.0, &other.0);
        NumericDistribution(py.detach(|| a.convolve(b)))
    }

    fn max_compose(&self, py: Python<'_>, other: &NumericDistribution) -> Self {
        let (a, b) = (&self.0, &other.0);
        NumericDistribution(py.detach(|| a.max_compose(b)))
    }

    fn ks_distance(&self, samples: Vec<f64>) -> f64 {
        self.0.ks_distance(&samples)
    }

    fn __repr__(&self) -> String {
        format!(
            "NumericDistribution(atoms={}, cells={}, mean={})",
            self.0.atoms().len(),
            self.0.grid_len(),
            self.0.mean()
        )
    }
}

#[pyclass(name = "AllocationPlan", frozen, module = "spflow")]
struct AllocationPlan(spflow::AllocationPlan);

#[pymethods]
impl AllocationPlan {
    #[getter]
    fn method(&self) -> &'static str {
        self.0.method.name()
    }

    #[getter]
    fn binding(&self) -> BTreeMap<String, String> {
        self.0.binding.clone()
    }

    #[getter]
    fn branch_rates(&self) -> BTreeMap<String, Vec<f64>> {
        self.0.branch_rates.clone()
    }

    #[getter]
    fn mean(&self) -> f64 {
        self.0.mean
    }

    #[getter]
    fn variance(&self) -> f64 {
        self.0.variance
    }

    fn to_json(&self) -> String {
        self.0.to_json()
    }

    fn __repr__(&self) -> String {
        format!("AllocationPlan(method={}, mean={})", self.method(), self.0.mean)
    }
}

#[pyclass(name = "Scenario", frozen, module = "spflow")]
struct Scenario(spflow::Scenario);

#[pymethods]
impl Scenario {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        parse_scenario(text).map(Scenario).map_err(py_err)
    }

    #[staticmethod]
    fn load(path: std::path::PathBuf) -> PyResult<Self> {
        let text = std::fs::read_to_string(&path)
            .map_err(|e| PyValueError::new_err(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    fn to_json(&self) -> String {
        self.0.to_json()
    }

    #[getter]
    fn slot_ids(&self) -> Vec<String> {
        self.0.slot_ids().into_iter().map(str::to_owned).collect()
    }

    #[pyo3(signature = (method = "proposed"))]
    fn allocate(&self, py: Python<'_>, method: &str) -> PyResult<AllocationPlan> {
        let method = parse_method(method)?;
        let s = &self.0;
        py.detach(|| allocator::allocate(s, method))
            .map(AllocationPlan)
            .map_err(py_err)
    }

    /// End-to-end distribution under `plan`.
    fn analyze(&self, py: Python<'_>, plan: &AllocationPlan) -> PyResult<NumericDistribution> {
        let (s, p) = (&self.0, &plan.0);
        py.detach(|| p.distribution(s))
            .map(NumericDistribution)
            .map_err(py_err)
    }

    /// Monte Carlo `(mean, variance, ks_vs_analytic)` for `plan`.
    #[pyo3(signature = (plan, trials = 100_000, seed = 42))]
    fn simulate(&self, py: Python<'_>, plan: &AllocationPlan, trials: u64, seed: u64) -> PyResult<(f64, f64, f64)> {
        let (s, p) = (&self.0, &plan.0);
        py.detach(|| -> spflow::Result<_> {
            let analytic = p.distribution(s)?;
            let r = simulator::simulate(s, p, trials, seed)?.with_ks(&analytic);
            Ok((r.mean, r.variance, r.ks_vs_analytic.unwrap_or(f64::NAN)))
        })
        .map_err(py_err)
    }

    /// Report JSON comparing the three allocators.
    #[pyo3(signature = (trials = 100_000, seed = 42))]
    fn compare(&self, py: Python<'_>, trials: u64, seed: u64) -> PyResult<String> {
        let s = &self.0;
        py.detach(|| simulator::compare(s, trials, seed))
            .map(|r| r.to_json())
            .map_err(py_err)
    }
}

#[pyfunction]
fn rate_schedule(lam: f64, rts: Vec<f64>) -> PyResult<Vec<f64>> {
    allocator::rate_schedule(lam, &rts).map_err(py_err)
}

#[pyfunction]
fn rate_schedule_queued(lam: f64, mus: Vec<f64>) -> PyResult<Vec<f64>> {
    allocator::rate_schedule_queued(lam, &mus).map_err(py_err)
}

#[pyfunction]
fn fit(samples: Vec<f64>) -> PyResult<Distribution> {
    fit_delayed_exponential(&samples).map(Distribution).map_err(py_err)
}

#[pyfunction]
fn improvement(baseline: f64, proposed: f64) -> f64 {
    simulator::improvement(baseline, proposed)
}

#[pymodule(name = "spflow")]
fn spflow_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Distribution>()?;
    m.add_class::<NumericDistribution>()?;
    m.add_class::<AllocationPlan>()?;
    m.add_class::<Scenario>()?;
    m.add_function(wrap_pyfunction!(rate_schedule, m)?)?;
    m.add_function(wrap_pyfunction!(rate_schedule_queued, m)?)?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(improvement, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
