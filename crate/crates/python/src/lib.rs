//! Python bindings: models, simulation, ensembles, regime classification and
//! skeleton analysis.

use std::collections::BTreeMap;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use allee_core::criteria::{self, EstimateOptions, GeneralOptions};
use allee_core::engine::{self, RecordMode, SimConfig, SuccessRule};
use allee_core::skeleton::{self as sk, SkeletonMap};
use allee_core::{EnvDistribution, EnvDraw, Error, ModelSpec, SeedSpec};

fn py_err(e: Error) -> PyErr {
    if e.is_validation() {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

fn parse_rule(rule: &str) -> PyResult<SuccessRule> {
    match rule {
        "not-extinct" => Ok(SuccessRule::NotExtinct),
        "interior" => Ok(SuccessRule::InteriorOnly),
        _ => rule
            .strip_prefix("above:")
            .and_then(|v| v.parse().ok())
            .map(|level| SuccessRule::FinalAbove { level })
            .ok_or_else(|| PyValueError::new_err(format!("unknown success rule {rule:?}"))),
    }
}

/// A fitness family with each parameter bound to a distribution literal.
///
/// >>> Model("mate-limitation", {"lambda": "lognormal:0.1,0.5", "h": "const:10"})
#[pyclass(module = "allee", name = "Model", frozen, skip_from_py_object)]
#[derive(Clone)]
struct Model {
    inner: ModelSpec,
}

#[pymethods]
impl Model {
    #[new]
    fn new(family: &str, params: BTreeMap<String, String>) -> PyResult<Self> {
        let pairs: Vec<(&str, &str)> = params.iter().map(|(k, v)| (k.as_str(), v.as_str())).collect();
        ModelSpec::parse(family, &pairs).map(|inner| Self { inner }).map_err(py_err)
    }

    #[getter]
    fn family(&self) -> String {
        self.inner.family().to_string()
    }

    #[getter]
    fn param_names(&self) -> Vec<&'static str> {
        self.inner.param_names().to_vec()
    }

    fn monotonicity(&self) -> String {
        self.inner.monotonicity().to_string()
    }

    /// Environment draw with every component at its mean.
    fn mean_draw(&self) -> Vec<f64> {
        self.inner.mean_draw().as_slice().to_vec()
    }

    fn fitness(&self, x: f64, draw: Vec<f64>) -> PyResult<f64> {
        Ok(self.inner.fitness(x, &self.check_draw(&draw)?))
    }

    fn log_fitness(&self, x: f64, draw: Vec<f64>) -> PyResult<f64> {
        Ok(self.inner.log_fitness(x, &self.check_draw(&draw)?))
    }

    fn growth_map(&self, x: f64, draw: Vec<f64>) -> PyResult<f64> {
        Ok(self.inner.growth_map(x, &self.check_draw(&draw)?))
    }

    fn __repr__(&self) -> String {
        format!("Model({})", self.inner)
    }
}

impl Model {
    fn check_draw(&self, draw: &[f64]) -> PyResult<EnvDraw> {
        let want = self.inner.param_names().len();
        if draw.len() != want {
            return Err(PyValueError::new_err(format!("draw needs {want} components, got {}", draw.len())));
        }
        Ok(EnvDraw::from_slice(draw))
    }
}

/// Normalized form of a distribution literal such as `uniform:1,3`.
#[pyfunction]
fn parse_distribution(literal: &str) -> PyResult<String> {
    literal
        .parse::<EnvDistribution>()
        .map(|d| d.to_string())
        .map_err(py_err)
}

/// One trajectory. `record` is `full` or `tail:N`.
#[pyfunction]
#[pyo3(signature = (model, x0, t_max=1000, seed=0, replicate=0, record="full"))]
fn simulate<'py>(
    py: Python<'py>,
    model: &Model,
    x0: f64,
    t_max: u64,
    seed: u64,
    replicate: u64,
    record: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let record = match record {
        "full" => RecordMode::Full,
        _ => record
            .strip_prefix("tail:")
            .and_then(|n| n.parse().ok())
            .map(RecordMode::Tail)
            .ok_or_else(|| PyValueError::new_err(format!("unknown record mode {record:?}")))?,
    };
    let cfg = SimConfig {
        t_max,
        record,
        ..Default::default()
    };
    let inner = model.inner.clone();
    let tr = py
        .detach(move || engine::run_trajectory(&inner, &cfg, x0, &mut SeedSpec::new(seed).stream(replicate)))
        .map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("t_start", tr.t_start)?;
    d.set_item("densities", tr.densities)?;
    d.set_item("fate", tr.fate.label())?;
    d.set_item("t_hit", tr.fate.t_hit())?;
    d.set_item("final_x", tr.final_x)?;
    Ok(d)
}

/// Replicate ensemble from `x0`; replicate `i` uses stream `i` of `seed`.
#[pyfunction]
#[pyo3(signature = (model, x0, n, t_max=1000, seed=0, rule="not-extinct"))]
fn ensemble<'py>(
    py: Python<'py>,
    model: &Model,
    x0: f64,
    n: u64,
    t_max: u64,
    seed: u64,
    rule: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let rule = parse_rule(rule)?;
    let cfg = SimConfig {
        t_max,
        ..Default::default()
    };
    let inner = model.inner.clone();
    let r = py
        .detach(move || engine::run_ensemble(&inner, &cfg, x0, n, SeedSpec::new(seed), rule))
        .map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("n", r.n_replicates)?;
    d.set_item("extinct", r.extinct)?;
    d.set_item("escaped", r.escaped)?;
    d.set_item("interior", r.interior)?;
    d.set_item("successes", r.successes)?;
    d.set_item("p_persist", r.persistence_fraction)?;
    d.set_item("se", r.standard_error)?;
    d.set_item("fates", r.replicates.iter().map(|x| x.fate.label()).collect::<Vec<_>>())?;
    d.set_item("final_x", r.replicates.iter().map(|x| x.final_x).collect::<Vec<_>>())?;
    Ok(d)
}

/// Persistence regime with the criteria behind it.
#[pyfunction]
#[pyo3(signature = (model, draws=criteria::DEFAULT_DRAWS, seed=0, x_c=None))]
fn classify<'py>(py: Python<'py>, model: &Model, draws: u64, seed: u64, x_c: Option<f64>) -> PyResult<Bound<'py, PyDict>> {
    let opts = GeneralOptions {
        estimate: EstimateOptions {
            n: draws,
            seed: SeedSpec::new(seed),
            force_monte_carlo: false,
        },
        x_c,
        ..Default::default()
    };
    let inner = model.inner.clone();
    let report = py.detach(move || criteria::classify(&inner, &opts)).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("regime", report.regime.as_str())?;
    d.set_item("applicable_theorem", &report.applicable_theorem)?;
    let estimates = report
        .estimates
        .iter()
        .map(|e| {
            let row = PyDict::new(py);
            row.set_item("name", &e.name)?;
            row.set_item("value", e.value)?;
            row.set_item("standard_error", e.standard_error)?;
            row.set_item("exact", e.exact)?;
            row.set_item("method", e.method.to_string())?;
            Ok(row)
        })
        .collect::<PyResult<Vec<_>>>()?;
    d.set_item("estimates", estimates)?;
    d.set_item("skeleton", report.skeleton.map(|s| s.as_str()))?;
    d.set_item("accessible", report.accessibility.as_ref().map(|a| a.certified))?;
    d.set_item("notes", &report.notes)?;
    d.set_item("record", report.record_line())?;
    Ok(d)
}

/// Fixed points, critical point and label of the mean-environment map.
#[pyfunction]
#[pyo3(signature = (model, x_max=None))]
fn skeleton<'py>(py: Python<'py>, model: &Model, x_max: Option<f64>) -> PyResult<Bound<'py, PyDict>> {
    let map = match x_max {
        Some(x) => SkeletonMap::with_domain(&model.inner, x).map_err(py_err)?,
        None => SkeletonMap::new(&model.inner),
    };
    let s = sk::classify_skeleton(&map).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("label", s.label.as_str())?;
    d.set_item("fixed_points", &s.fixed_points)?;
    d.set_item("m", s.m)?;
    d.set_item("c", s.c)?;
    d.set_item("ffc", s.ffc)?;
    d.set_item("borderline", s.borderline)?;
    d.set_item("x_max", s.x_max)?;
    Ok(d)
}

/// Whether an eps-chain of the skeleton leads from `x0` below `target`.
#[pyfunction]
#[pyo3(signature = (model, eps, x0, target=1e-9))]
fn chain_reachable(model: &Model, eps: f64, x0: f64, target: f64) -> PyResult<bool> {
    sk::chain_reachable_to_zero(&SkeletonMap::new(&model.inner), eps, x0, target).map_err(py_err)
}

/// Monte Carlo `E[p / h]` against `p / E[h]`.
#[pyfunction]
#[pyo3(signature = (p, h, n=100_000, seed=0))]
fn jensen_gap<'py>(py: Python<'py>, p: f64, h: &str, n: u64, seed: u64) -> PyResult<Bound<'py, PyDict>> {
    let h: EnvDistribution = h.parse().map_err(py_err)?;
    let g = criteria::jensen_gap(p, &h, n, SeedSpec::new(seed)).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("mean_ratio", g.mean_ratio)?;
    d.set_item("standard_error", g.standard_error)?;
    d.set_item("ratio_of_mean", g.ratio_of_mean)?;
    d.set_item("gap", g.gap)?;
    Ok(d)
}

#[pymodule]
fn allee(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Model>()?;
    m.add_function(wrap_pyfunction!(parse_distribution, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(ensemble, m)?)?;
    m.add_function(wrap_pyfunction!(classify, m)?)?;
    m.add_function(wrap_pyfunction!(skeleton, m)?)?;
    m.add_function(wrap_pyfunction!(chain_reachable, m)?)?;
    m.add_function(wrap_pyfunction!(jensen_gap, m)?)?;
    Ok(())
}
