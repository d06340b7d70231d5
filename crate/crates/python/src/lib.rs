//! Python bindings: spectra, rankings, FLITSR and the evaluation measures.
//!
//! Elements are addressed by name on the Python side; fault oracles map
//! labels to element names and are resolved against whichever ranking or
//! spectrum they are used with.

use std::collections::BTreeMap;
use std::path::PathBuf;

use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use sbfl_core::eval::{self, EvalOptions, GeneratorConfig, WilcoxonMethod};
use sbfl_core::{ingest, ElementId, ElementTable, MetricId};

fn to_py(e: sbfl_core::Error) -> PyErr {
    match e {
        sbfl_core::Error::Io { .. } => PyOSError::new_err(e.to_string()),
        sbfl_core::Error::Invariant(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn metric_from(
    name: &str,
    dstar_exponent: Option<f64>,
    k: (Option<f64>, Option<f64>, Option<f64>),
) -> PyResult<MetricId> {
    let mut metric: MetricId = name.parse().map_err(to_py)?;
    if let (MetricId::DStar { star }, Some(x)) = (&mut metric, dstar_exponent) {
        *star = x;
    }
    if let MetricId::Hyperbolic { k1, k2, k3 } = &mut metric {
        *k1 = k.0.unwrap_or(*k1);
        *k2 = k.1.unwrap_or(*k2);
        *k3 = k.2.unwrap_or(*k3);
    }
    metric.validate().map_err(to_py)?;
    Ok(metric)
}

fn resolve(elements: &ElementTable, names: &[String]) -> PyResult<Vec<ElementId>> {
    names
        .iter()
        .map(|n| {
            elements
                .id(n)
                .ok_or_else(|| PyValueError::new_err(format!("unknown element {n:?}")))
        })
        .collect()
}

fn to_names(elements: &ElementTable, ids: &[ElementId]) -> Vec<String> {
    ids.iter().map(|&e| elements.name(e).to_string()).collect()
}

/// Coverage matrix with pass/fail outcomes.
#[pyclass(frozen, module = "sbfl")]
struct Spectrum {
    inner: sbfl_core::Spectrum,
}

#[pymethods]
impl Spectrum {
    /// `tests` holds `(name, failed)` pairs; `coverage[t][e]` is true iff
    /// test `t` executes element `e`.
    #[new]
    fn new(elements: Vec<String>, tests: Vec<(String, bool)>, coverage: Vec<Vec<bool>>) -> PyResult<Self> {
        let tests = tests
            .into_iter()
            .map(|(n, failed)| {
                let o = if failed {
                    sbfl_core::Outcome::Fail
                } else {
                    sbfl_core::Outcome::Pass
                };
                (n, o)
            })
            .collect();
        Ok(Spectrum {
            inner: sbfl_core::Spectrum::new(elements, tests, &coverage).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn load_coverage_dir(path: PathBuf) -> PyResult<Self> {
        Ok(Spectrum {
            inner: ingest::load_coverage_dir(&path).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn load_tcm(path: PathBuf) -> PyResult<Self> {
        Ok(Spectrum {
            inner: ingest::load_tcm(&path).map_err(to_py)?,
        })
    }

    fn write_coverage_dir(&self, path: PathBuf) -> PyResult<()> {
        ingest::write_coverage_dir(&self.inner, &path).map_err(to_py)
    }

    fn write_tcm(&self, path: PathBuf) -> PyResult<()> {
        ingest::write_tcm(&self.inner, &path).map_err(to_py)
    }

    #[getter]
    fn elements(&self) -> Vec<String> {
        self.inner.elements().names().to_vec()
    }

    #[getter]
    fn tests(&self) -> Vec<String> {
        self.inner.test_names().to_vec()
    }

    #[getter]
    fn failing(&self) -> Vec<bool> {
        self.inner.test_ids().map(|t| self.inner.outcome(t).is_fail()).collect()
    }

    #[getter]
    fn num_failing(&self) -> usize {
        self.inner.num_failing()
    }

    /// `(ef, ep, nf, np)` of an element over the full suite.
    fn counts(&self, element: &str) -> PyResult<(usize, usize, usize, usize)> {
        let e = resolve(self.inner.elements(), &[element.to_string()])?[0];
        let c = self.inner.full_view().counts(e).map_err(to_py)?;
        Ok((c.ef, c.ep, c.nf, c.np))
    }

    fn ambiguity_groups(&self) -> Vec<Vec<String>> {
        self.inner
            .ambiguity_groups()
            .groups()
            .iter()
            .map(|g| to_names(self.inner.elements(), g))
            .collect()
    }

    fn is_span(&self, elements: Vec<String>) -> PyResult<bool> {
        let ids = resolve(self.inner.elements(), &elements)?;
        self.inner.full_view().is_span(&ids).map_err(to_py)
    }

    fn is_basis(&self, elements: Vec<String>) -> PyResult<bool> {
        let ids = resolve(self.inner.elements(), &elements)?;
        self.inner.full_view().is_basis(&ids).map_err(to_py)
    }

    /// Labels of oracle faults that no failing test executes.
    fn unexposed_faults(&self, oracle: &FaultOracle) -> PyResult<Vec<String>> {
        let core = oracle.resolve(self.inner.elements())?;
        Ok(self.inner.unexposed_faults(&core).into_iter().map(String::from).collect())
    }

    fn __len__(&self) -> usize {
        self.inner.num_elements()
    }

    fn __repr__(&self) -> String {
        format!(
            "Spectrum({} elements, {} tests, {} failing)",
            self.inner.num_elements(),
            self.inner.num_tests(),
            self.inner.num_failing()
        )
    }
}

/// Fault labels mapped to element names.
#[pyclass(frozen, skip_from_py_object, module = "sbfl")]
#[derive(Clone)]
struct FaultOracle {
    faults: BTreeMap<String, Vec<String>>,
}

impl FaultOracle {
    fn resolve(&self, elements: &ElementTable) -> PyResult<sbfl_core::FaultOracle> {
        let mut core = sbfl_core::FaultOracle::new();
        for (label, names) in &self.faults {
            for e in resolve(elements, names)? {
                core.insert(label.clone(), e);
            }
        }
        Ok(core)
    }

    fn from_core(core: &sbfl_core::FaultOracle, elements: &ElementTable) -> Self {
        FaultOracle {
            faults: core
                .faults()
                .map(|(l, es)| (l.to_string(), es.iter().map(|&e| elements.name(e).to_string()).collect()))
                .collect(),
        }
    }
}

#[pymethods]
impl FaultOracle {
    #[new]
    fn new(faults: BTreeMap<String, Vec<String>>) -> Self {
        FaultOracle { faults }
    }

    /// Reads a `label<TAB>element` file; names unknown to `spectrum` are
    /// skipped unless `strict`.
    #[staticmethod]
    #[pyo3(signature = (path, spectrum, strict = false))]
    fn load(path: PathBuf, spectrum: &Spectrum, strict: bool) -> PyResult<Self> {
        let elements = spectrum.inner.elements();
        let loaded = ingest::load_fault_oracle(&path, elements, strict).map_err(to_py)?;
        Ok(FaultOracle::from_core(&loaded.oracle, elements))
    }

    #[getter]
    fn faults(&self) -> BTreeMap<String, Vec<String>> {
        self.faults.clone()
    }

    fn __len__(&self) -> usize {
        self.faults.len()
    }

    fn __repr__(&self) -> String {
        format!("FaultOracle({} faults)", self.faults.len())
    }
}

/// Ordered ranking with dense and ordinal ranks.
#[pyclass(frozen, module = "sbfl")]
struct Ranking {
    elements: ElementTable,
    inner: sbfl_core::Ranking,
}

#[pymethods]
impl Ranking {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let loaded = ingest::load_ranking(&path).map_err(to_py)?;
        Ok(Ranking {
            elements: loaded.elements,
            inner: loaded.ranking,
        })
    }

    /// Rows of `(element, score, dense_rank, ordinal_rank, below_all_bases)`.
    #[getter]
    fn entries(&self) -> Vec<(String, f64, usize, usize, bool)> {
        self.inner
            .entries()
            .iter()
            .map(|e| {
                (
                    self.elements.name(e.element).to_string(),
                    e.score.value(),
                    e.dense_rank,
                    e.ordinal_rank,
                    e.below_all_bases,
                )
            })
            .collect()
    }

    fn names(&self) -> Vec<String> {
        self.inner.elements().map(|e| self.elements.name(e).to_string()).collect()
    }

    fn tie_groups(&self) -> Vec<Vec<String>> {
        self.inner
            .tie_groups()
            .iter()
            .map(|g| g.iter().map(|e| self.elements.name(e.element).to_string()).collect())
            .collect()
    }

    #[pyo3(signature = (oracle = None))]
    fn to_tsv(&self, oracle: Option<&FaultOracle>) -> PyResult<String> {
        let core = oracle.map(|o| o.resolve(&self.elements)).transpose()?;
        Ok(ingest::render_ranking(&self.inner, &self.elements, core.as_ref()))
    }

    #[pyo3(signature = (path, oracle = None))]
    fn save(&self, path: PathBuf, oracle: Option<&FaultOracle>) -> PyResult<()> {
        let core = oracle.map(|o| o.resolve(&self.elements)).transpose()?;
        ingest::write_ranking(&self.inner, &self.elements, core.as_ref(), &path).map_err(to_py)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "Ranking({} elements, {} tie groups)",
            self.inner.len(),
            self.inner.num_tie_groups()
        )
    }
}

fn wrap(spectrum: &Spectrum, ranking: sbfl_core::Ranking) -> Ranking {
    Ranking {
        elements: spectrum.inner.elements().clone(),
        inner: ranking,
    }
}

type Steps = Vec<(usize, Vec<String>)>;

fn basis_steps(elements: &ElementTable, basis: &sbfl_core::Basis) -> Steps {
    basis
        .steps()
        .iter()
        .map(|s| (s.rank, to_names(elements, &s.elements)))
        .collect()
}

/// Ranks a spectrum by a base SBFL metric.
#[pyfunction]
#[pyo3(signature = (spectrum, metric = "ochiai", dstar_exponent = None, k1 = None, k2 = None, k3 = None))]
fn rank(
    spectrum: &Spectrum,
    metric: &str,
    dstar_exponent: Option<f64>,
    k1: Option<f64>,
    k2: Option<f64>,
    k3: Option<f64>,
) -> PyResult<Ranking> {
    let metric = metric_from(metric, dstar_exponent, (k1, k2, k3))?;
    Ok(wrap(spectrum, sbfl_core::rank(&spectrum.inner.full_view(), metric)))
}

/// Runs FLITSR; returns the merged ranking and the basis as
/// `[(rank, [elements])]`.
#[pyfunction]
#[pyo3(signature = (spectrum, metric = "ochiai", dstar_exponent = None))]
fn flitsr(
    spectrum: &Spectrum,
    metric: &str,
    dstar_exponent: Option<f64>,
) -> PyResult<(Ranking, Steps)> {
    let metric = metric_from(metric, dstar_exponent, (None, None, None))?;
    let run = sbfl_core::flitsr_run(&spectrum.inner.full_view(), metric).map_err(to_py)?;
    let steps = basis_steps(spectrum.inner.elements(), &run.basis);
    Ok((wrap(spectrum, run.merged_ranking), steps))
}

/// Runs FLITSR*; returns the merged ranking and one basis per round.
#[pyfunction]
#[pyo3(signature = (spectrum, metric = "ochiai", dstar_exponent = None))]
fn flitsr_star(
    spectrum: &Spectrum,
    metric: &str,
    dstar_exponent: Option<f64>,
) -> PyResult<(Ranking, Vec<Steps>)> {
    let metric = metric_from(metric, dstar_exponent, (None, None, None))?;
    let run = sbfl_core::flitsr_star(&spectrum.inner.full_view(), metric).map_err(to_py)?;
    let rounds = run
        .rounds
        .iter()
        .map(|r| basis_steps(spectrum.inner.elements(), &r.basis))
        .collect();
    Ok((wrap(spectrum, run.merged_ranking), rounds))
}

/// Wasted effort, precision and recall of a ranking as a `{measure: value}`
/// dict; faults with no ranked element are listed under `dropped_faults`.
#[pyfunction]
#[pyo3(signature = (ranking, oracle, precision = vec![1, 5, 10], recall = vec![1, 5, 10], mc_samples = 10_000, seed = 0))]
fn evaluate(
    py: Python<'_>,
    ranking: &Ranking,
    oracle: &FaultOracle,
    precision: Vec<usize>,
    recall: Vec<usize>,
    mc_samples: usize,
    seed: u64,
) -> PyResult<Py<PyAny>> {
    let mut core = sbfl_core::FaultOracle::new();
    for (label, names) in &oracle.faults {
        for n in names {
            if let Some(e) = ranking.elements.id(n) {
                core.insert(label.clone(), e);
            }
        }
    }
    let opts = EvalOptions {
        precision_cutoffs: precision,
        recall_cutoffs: recall,
        mc_samples,
        seed,
        ..Default::default()
    };
    let report = eval::evaluate(&ranking.inner, &core, &opts).map_err(to_py)?;
    let dict = pyo3::types::PyDict::new(py);
    for (name, value) in report.measures() {
        if name != "dropped_faults" {
            dict.set_item(name, value)?;
        }
    }
    let mut dropped = report.dropped_faults.clone();
    dropped.extend(oracle.faults.keys().filter(|l| core.fault_elements(l).is_none()).cloned());
    dropped.sort();
    dropped.dedup();
    dict.set_item("dropped_faults", dropped)?;
    let curve: Vec<(f64, f64)> = report
        .curve
        .iter()
        .map(|p| (p.fraction_inspected, p.fraction_found))
        .collect();
    dict.set_item("curve", curve)?;
    Ok(dict.into_any().unbind())
}

/// Two-sided Wilcoxon signed-rank test on `(a, b)` pairs.
#[pyfunction]
fn wilcoxon(py: Python<'_>, pairs: Vec<(f64, f64)>) -> PyResult<Py<PyAny>> {
    let r = eval::wilcoxon_signed_rank(&pairs).map_err(to_py)?;
    let dict = pyo3::types::PyDict::new(py);
    dict.set_item("statistic", r.statistic)?;
    dict.set_item("positive_rank_sum", r.positive_rank_sum)?;
    dict.set_item("negative_rank_sum", r.negative_rank_sum)?;
    dict.set_item("p_value", r.p_value)?;
    dict.set_item("n", r.n)?;
    let method = match r.method {
        WilcoxonMethod::Exact => "exact",
        WilcoxonMethod::Normal => "normal",
    };
    dict.set_item("method", method)?;
    Ok(dict.into_any().unbind())
}

/// Random strong spectrum with planted faults.
#[pyfunction]
#[pyo3(signature = (elements = 12, tests = 16, faults = 2, density = 0.3, masking_bias = 0.0, dominators = 0, coincidental_correctness = 0.0, seed = 0))]
#[allow(clippy::too_many_arguments)]
fn generate(
    elements: usize,
    tests: usize,
    faults: usize,
    density: f64,
    masking_bias: f64,
    dominators: usize,
    coincidental_correctness: f64,
    seed: u64,
) -> PyResult<(Spectrum, FaultOracle)> {
    let g = eval::generate_random_spectrum(&GeneratorConfig {
        elements,
        tests,
        faults,
        coverage_density: density,
        masking_bias,
        dominator_count: dominators,
        coincidental_correctness,
        seed,
    })
    .map_err(to_py)?;
    let oracle = FaultOracle::from_core(&g.oracle, g.spectrum.elements());
    Ok((Spectrum { inner: g.spectrum }, oracle))
}

#[pymodule]
fn sbfl(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Spectrum>()?;
    m.add_class::<FaultOracle>()?;
    m.add_class::<Ranking>()?;
    m.add_function(wrap_pyfunction!(rank, m)?)?;
    m.add_function(wrap_pyfunction!(flitsr, m)?)?;
    m.add_function(wrap_pyfunction!(flitsr_star, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(wilcoxon, m)?)?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add("METRICS", MetricId::NAMES.to_vec())?;
    Ok(())
}
