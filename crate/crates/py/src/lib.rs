//! Python bindings. Matrices cross the boundary as nested lists of `complex`
//! (or `float` for R), reports as plain dicts.

use num_complex::Complex64;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;
use qndctl_core as core;
use qndctl_core::synthesis::{AssumptionReport, SynthesisOutput};
use qndctl_core::{
    ComplexMatrix, ControllerConfig, LoopConfig, LoopMode, OperatorRole, PhasePolicy, ResidualNorm,
    SynthesisProblem, TieBreak,
};
use serde::Serialize;

fn err(e: core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn rows(m: &ComplexMatrix) -> Vec<Vec<Complex64>> {
    let n = m.dim();
    (0..n)
        .map(|i| (0..n).map(|j| m[(i, j)]).collect())
        .collect()
}

fn matrix(rows: Vec<Vec<Complex64>>) -> PyResult<ComplexMatrix> {
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(PyValueError::new_err("matrix must be square"));
    }
    Ok(ComplexMatrix::from_fn(n, |i, j| rows[i][j]))
}

fn hermitian(rows: Vec<Vec<Complex64>>, role: OperatorRole) -> PyResult<core::HermitianOperator> {
    core::HermitianOperator::new(matrix(rows)?, role).map_err(err)
}

/// Round-trips through JSON so Python gets ordinary dicts and lists.
fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn observable(sigma: Vec<f64>, n_star: Option<usize>) -> PyResult<core::DiagonalObservable> {
    match n_star {
        Some(k) => core::DiagonalObservable::with_n_star(sigma, k),
        None => core::DiagonalObservable::new(sigma),
    }
    .map_err(err)
}

#[pyclass(name = "DensityMatrix", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyDensity(core::DensityMatrix);

#[pymethods]
impl PyDensity {
    #[new]
    fn new(rows: Vec<Vec<Complex64>>) -> PyResult<Self> {
        Ok(Self(core::DensityMatrix::new(matrix(rows)?).map_err(err)?))
    }

    #[staticmethod]
    fn basis(n: usize, k: usize) -> PyResult<Self> {
        Ok(Self(core::DensityMatrix::basis(n, k).map_err(err)?))
    }

    #[staticmethod]
    fn maximally_mixed(n: usize) -> Self {
        Self(core::DensityMatrix::maximally_mixed(n))
    }

    #[staticmethod]
    fn uniform_superposition(n: usize) -> Self {
        Self(core::DensityMatrix::uniform_superposition(n))
    }

    #[staticmethod]
    fn pure(psi: Vec<Complex64>) -> PyResult<Self> {
        Ok(Self(core::DensityMatrix::pure(&psi).map_err(err)?))
    }

    /// `weight * self + (1 - weight) * other`.
    fn mix(&self, other: &PyDensity, weight: f64) -> PyResult<Self> {
        Ok(Self(self.0.mix(&other.0, weight).map_err(err)?))
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn matrix(&self) -> Vec<Vec<Complex64>> {
        rows(self.0.matrix())
    }

    fn populations(&self) -> Vec<f64> {
        self.0.populations()
    }

    fn purity(&self) -> f64 {
        self.0.purity()
    }

    fn fidelity(&self, n: usize) -> PyResult<f64> {
        core::fidelity_to_basis(&self.0, n).map_err(err)
    }

    fn trace_distance(&self, other: &PyDensity) -> PyResult<f64> {
        self.0.trace_distance(&other.0).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!(
            "DensityMatrix(dim={}, purity={:.6})",
            self.0.dim(),
            self.0.purity()
        )
    }
}

#[pyclass(name = "Measurement", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyMeasurement(core::QndMeasurement);

#[pymethods]
impl PyMeasurement {
    /// `coeffs[mu][n]` is the Kraus coefficient of outcome `mu` on level `n`.
    #[new]
    fn new(coeffs: Vec<Vec<Complex64>>) -> PyResult<Self> {
        Ok(Self(core::QndMeasurement::new(coeffs).map_err(err)?))
    }

    #[staticmethod]
    fn photon_box(n: usize, phi0: f64, theta: f64) -> PyResult<Self> {
        Ok(Self(core::photon_box(n, phi0, theta).map_err(err)?))
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    #[getter]
    fn outcomes(&self) -> usize {
        self.0.outcomes()
    }

    fn probabilities(&self, rho: &PyDensity) -> PyResult<Vec<f64>> {
        core::outcome_probabilities(&self.0, &rho.0).map_err(err)
    }

    /// Post-measurement state for outcome `mu`.
    fn apply(&self, rho: &PyDensity, mu: usize) -> PyResult<PyDensity> {
        Ok(PyDensity(
            core::apply_outcome(&self.0, mu, &rho.0).map_err(err)?,
        ))
    }

    /// Level pairs no outcome tells apart.
    #[pyo3(signature = (tol = 1e-9))]
    fn indistinguishable_pairs(&self, tol: f64) -> Vec<(usize, usize)> {
        core::check_distinguishability(&self.0, tol)
    }
}

#[pyclass(name = "Synthesis", frozen)]
struct PySynthesis(SynthesisOutput);

#[pymethods]
impl PySynthesis {
    #[getter]
    fn h1(&self) -> Vec<Vec<Complex64>> {
        rows(self.0.h1.matrix())
    }

    #[getter]
    fn r(&self) -> Vec<Vec<f64>> {
        self.0.r.matrix().to_rows()
    }

    #[getter]
    fn lambda_tilde(&self) -> Vec<f64> {
        self.0.result.lambda_tilde.clone()
    }

    #[getter]
    fn residual(&self) -> f64 {
        self.0.result.residual
    }

    #[getter]
    fn objective(&self) -> f64 {
        self.0.result.objective
    }

    #[getter]
    fn iterations(&self) -> usize {
        self.0.result.iterations
    }

    #[getter]
    fn warnings(&self) -> Vec<String> {
        self.0.warnings.clone()
    }

    fn assumptions<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.0.report.checks)
    }
}

/// Solves for R and builds H1. Raises `ValueError` when the sign condition fails.
#[pyfunction]
#[pyo3(signature = (
    sigma, n_star = None, *, sparse = false, gamma1 = None, gamma2 = None,
    alpha1 = None, alpha2 = None, norm = "l2", trace_bound = None, phase = "positive"
))]
#[allow(clippy::too_many_arguments)]
fn synthesize(
    sigma: Vec<f64>,
    n_star: Option<usize>,
    sparse: bool,
    gamma1: Option<f64>,
    gamma2: Option<f64>,
    alpha1: Option<f64>,
    alpha2: Option<f64>,
    norm: &str,
    trace_bound: Option<f64>,
    phase: &str,
) -> PyResult<PySynthesis> {
    let mut problem = SynthesisProblem::new(observable(sigma, n_star)?);
    if sparse {
        problem = problem.sparse();
    }
    for (slot, v) in [
        (&mut problem.gamma1, gamma1),
        (&mut problem.gamma2, gamma2),
        (&mut problem.alpha1, alpha1),
        (&mut problem.alpha2, alpha2),
    ] {
        if let Some(v) = v {
            *slot = v;
        }
    }
    problem.norm = match norm {
        "l1" => ResidualNorm::L1,
        "l2" => ResidualNorm::L2,
        other => return Err(PyValueError::new_err(format!("unknown norm {other:?}"))),
    };
    problem.trace_bound = trace_bound;
    let policy = match phase {
        "positive" => PhasePolicy::Positive,
        "alternating" => PhasePolicy::Alternating,
        "imaginary" => PhasePolicy::ImaginaryOffDiagonal,
        other => return Err(PyValueError::new_err(format!("unknown phase {other:?}"))),
    };
    Ok(PySynthesis(
        core::synthesis_pipeline(&problem, policy).map_err(err)?,
    ))
}

/// Structural checks; pass whichever operators are available.
#[pyfunction]
#[pyo3(signature = (sigma, h0 = None, h1 = None, measurement = None))]
fn assumption_report<'py>(
    py: Python<'py>,
    sigma: Vec<f64>,
    h0: Option<Vec<Vec<Complex64>>>,
    h1: Option<Vec<Vec<Complex64>>>,
    measurement: Option<PyRef<'py, PyMeasurement>>,
) -> PyResult<Bound<'py, PyAny>> {
    let p = observable(sigma, None)?;
    let h0 = h0.map(|m| hermitian(m, OperatorRole::Drift)).transpose()?;
    let h1 = h1
        .map(|m| hermitian(m, OperatorRole::Control))
        .transpose()?;
    let report: AssumptionReport = core::assumption_report(
        &p,
        h0.as_ref(),
        h1.as_ref(),
        measurement.as_ref().map(|m| &m.0),
    );
    to_py(py, &report.checks)
}

#[pyfunction]
#[pyo3(signature = (sigma, rho, epsilon = 0.0))]
fn lyapunov(sigma: Vec<f64>, rho: &PyDensity, epsilon: f64) -> PyResult<f64> {
    let p = observable(sigma, None)?;
    core::lyapunov_v_eps(&p, &rho.0, epsilon).map_err(err)
}

#[pyclass(name = "Trajectory", frozen)]
struct PyTrajectory(core::Trajectory);

#[pymethods]
impl PyTrajectory {
    #[getter]
    fn fidelity(&self) -> Vec<f64> {
        self.0.fidelity_curve()
    }

    #[getter]
    fn lyapunov(&self) -> Vec<f64> {
        self.0.lyapunov_curve()
    }

    #[getter]
    fn controls(&self) -> Vec<f64> {
        self.0.controls()
    }

    #[getter]
    fn outcomes(&self) -> Vec<Option<usize>> {
        self.0.records.iter().map(|r| r.outcome).collect()
    }

    #[getter]
    fn first_hit(&self) -> Option<usize> {
        self.0.first_hit
    }

    #[getter]
    fn final_state(&self) -> PyDensity {
        PyDensity(self.0.final_state.clone())
    }

    fn __len__(&self) -> usize {
        self.0.records.len()
    }
}

/// A closed (or open) feedback loop: observable, control Hamiltonian,
/// controller and, for measured modes, the measurement.
#[pyclass(name = "FeedbackLoop", frozen)]
struct PyLoop(LoopConfig);

#[pymethods]
impl PyLoop {
    #[new]
    #[pyo3(signature = (
        mode, sigma, h1, *, n_star = None, controller = "quadratic", kappa = 0.05, u_bar = 0.1,
        epsilon = 0.0, random_tie_break = false, measurement = None, h0 = None, steps = 1000,
        fidelity_threshold = 0.99, state_stride = 0, rho0_estimate = None
    ))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        mode: &str,
        sigma: Vec<f64>,
        h1: Vec<Vec<Complex64>>,
        n_star: Option<usize>,
        controller: &str,
        kappa: f64,
        u_bar: f64,
        epsilon: f64,
        random_tie_break: bool,
        measurement: Option<PyRef<'_, PyMeasurement>>,
        h0: Option<Vec<Vec<Complex64>>>,
        steps: usize,
        fidelity_threshold: f64,
        state_stride: usize,
        rho0_estimate: Option<PyRef<'_, PyDensity>>,
    ) -> PyResult<Self> {
        let mode = match mode {
            "deterministic" => LoopMode::Deterministic,
            "stochastic" => LoopMode::Stochastic,
            "open-loop" | "open_loop" => LoopMode::OpenLoop,
            "filtered" => LoopMode::Filtered,
            other => return Err(PyValueError::new_err(format!("unknown mode {other:?}"))),
        };
        let ctrl = match controller {
            "linear" => ControllerConfig::linear(kappa),
            "exact-min" | "exact_min" => ControllerConfig::exact_min(u_bar),
            "quadratic" => ControllerConfig::quadratic(u_bar),
            other => {
                return Err(PyValueError::new_err(format!(
                    "unknown controller {other:?}"
                )))
            }
        }
        .with_epsilon(epsilon)
        .with_tie_break(if random_tie_break {
            TieBreak::RandomSign
        } else {
            TieBreak::Positive
        });
        let mut cfg = LoopConfig::new(
            mode,
            observable(sigma, n_star)?,
            hermitian(h1, OperatorRole::Control)?,
            ctrl,
        );
        cfg.h0 = h0.map(|m| hermitian(m, OperatorRole::Drift)).transpose()?;
        cfg.meas = measurement.map(|m| m.0.clone());
        cfg.steps = steps;
        cfg.fidelity_threshold = fidelity_threshold;
        cfg.state_stride = state_stride;
        cfg.rho0_estimate = rho0_estimate.map(|r| r.0.clone());
        cfg.validate().map_err(err)?;
        Ok(Self(cfg))
    }

    /// One trajectory. `seed` is ignored in deterministic mode.
    #[pyo3(signature = (rho0, seed = 0))]
    fn run(&self, py: Python<'_>, rho0: &PyDensity, seed: u64) -> PyResult<PyTrajectory> {
        let cfg = &self.0;
        let rho0 = &rho0.0;
        let t = py
            .detach(|| match cfg.mode {
                LoopMode::Deterministic => core::run_deterministic(cfg, rho0),
                LoopMode::Stochastic => core::run_stochastic(cfg, rho0, seed),
                LoopMode::OpenLoop => core::run_open_loop(cfg, rho0, seed),
                LoopMode::Filtered => {
                    let est = cfg
                        .rho0_estimate
                        .clone()
                        .unwrap_or_else(|| core::DensityMatrix::maximally_mixed(rho0.dim()));
                    core::run_filtered(cfg, rho0, &est, seed)
                }
            })
            .map_err(err)?;
        Ok(PyTrajectory(t))
    }

    /// Ensemble summary as a dict; identical for any `threads`.
    #[pyo3(signature = (rho0, realizations, master_seed, threads = None))]
    fn ensemble<'py>(
        &self,
        py: Python<'py>,
        rho0: &PyDensity,
        realizations: usize,
        master_seed: u64,
        threads: Option<usize>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let cfg = &self.0;
        let rho0 = &rho0.0;
        let result = py
            .detach(|| core::run_ensemble(cfg, rho0, realizations, master_seed, threads))
            .map_err(err)?;
        let stats = core::convergence_statistics(&result);
        let out = PyDict::new(py);
        out.set_item("result", to_py(py, &result)?)?;
        out.set_item("statistics", to_py(py, &stats)?)?;
        Ok(out.into_any())
    }
}

#[pymodule]
fn qndctl(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDensity>()?;
    m.add_class::<PyMeasurement>()?;
    m.add_class::<PySynthesis>()?;
    m.add_class::<PyTrajectory>()?;
    m.add_class::<PyLoop>()?;
    m.add_function(wrap_pyfunction!(synthesize, m)?)?;
    m.add_function(wrap_pyfunction!(assumption_report, m)?)?;
    m.add_function(wrap_pyfunction!(lyapunov, m)?)?;
    Ok(())
}
