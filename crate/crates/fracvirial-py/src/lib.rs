//! Python bindings: module `pyfracvirial`.
//!
//! Fields cross the boundary as lists of complex numbers in the grid's row-major order;
//! reports come back as plain dicts.

use num_complex::Complex64;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

use fracvirial::cutoff::{self, RescaledCutoff};
use fracvirial::domain::{self, DirichletFracOperator, DomainRunConfig, DomainState, IntervalDomain};
use fracvirial::evolve::{self, EvolveConfig};
use fracvirial::fracops::{self, FracParams};
use fracvirial::suite::{self, SuiteName};
use fracvirial::{groundstate, virial, FieldOnGrid, MQuadrature};

fn to_py(e: fracvirial::Error) -> PyErr {
    use fracvirial::Error as E;
    match e {
        E::InvalidInput(_) | E::Domain(_) | E::Support { .. } | E::Symmetry(_) => PyValueError::new_err(e.to_string()),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

/// Serializable value to a Python dict/list via the json module.
fn to_object<'py>(py: Python<'py>, v: &impl Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(v).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

#[pyclass(name = "Params", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyParams {
    inner: FracParams,
}

#[pymethods]
impl PyParams {
    #[new]
    fn new(dim: usize, s: f64, sigma: f64) -> PyResult<Self> {
        Ok(PyParams { inner: FracParams::new(dim, s, sigma).map_err(to_py)? })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim
    }

    #[getter]
    fn s(&self) -> f64 {
        self.inner.s
    }

    #[getter]
    fn sigma(&self) -> f64 {
        self.inner.sigma
    }

    #[getter]
    fn s_c(&self) -> f64 {
        self.inner.s_c()
    }

    fn is_l2_critical(&self) -> bool {
        self.inner.is_l2_critical()
    }

    fn __repr__(&self) -> String {
        format!("Params(dim={}, s={}, sigma={})", self.inner.dim, self.inner.s, self.inner.sigma)
    }
}

#[pyclass(name = "Grid", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyGrid {
    inner: fracvirial::Grid,
}

#[pymethods]
impl PyGrid {
    #[new]
    fn new(dim: usize, half_length: f64, points: usize) -> PyResult<Self> {
        Ok(PyGrid { inner: fracvirial::Grid::new(dim, half_length, points).map_err(to_py)? })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn points(&self) -> usize {
        self.inner.points()
    }

    #[getter]
    fn half_length(&self) -> f64 {
        self.inner.half_length()
    }

    #[getter]
    fn spacing(&self) -> f64 {
        self.inner.spacing()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    /// Positions in storage order; 1D grids report (x, 0).
    fn positions(&self) -> Vec<(f64, f64)> {
        (0..self.inner.len()).map(|i| self.inner.position(i)).map(|p| (p[0], p[1])).collect()
    }
}

#[pyclass(name = "Field", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyField {
    inner: FieldOnGrid,
}

#[pymethods]
impl PyField {
    #[new]
    fn new(grid: &PyGrid, values: Vec<Complex64>) -> PyResult<Self> {
        Ok(PyField { inner: FieldOnGrid::new(&grid.inner, values).map_err(to_py)? })
    }

    #[staticmethod]
    fn gaussian(grid: &PyGrid, amp: f64, width: f64) -> Self {
        PyField { inner: evolve::gaussian(&grid.inner, amp, width) }
    }

    #[getter]
    fn grid(&self) -> PyGrid {
        PyGrid { inner: self.inner.grid.clone() }
    }

    #[getter]
    fn values(&self) -> Vec<Complex64> {
        self.inner.values.clone()
    }

    fn mass(&self) -> f64 {
        self.inner.norm_sq()
    }

    fn max_abs(&self) -> f64 {
        self.inner.max_abs()
    }

    fn energy(&self, params: &PyParams) -> PyResult<f64> {
        fracops::energy(&self.inner, &params.inner).map_err(to_py)
    }

    /// ||(-Delta)^(s/2) u||.
    fn seminorm(&self, s: f64) -> PyResult<f64> {
        fracops::frac_seminorm(&self.inner, s).map_err(to_py)
    }

    fn frac_laplacian(&self, s: f64) -> PyResult<PyField> {
        Ok(PyField { inner: fracops::frac_laplacian(&self.inner, s).map_err(to_py)? })
    }

    /// Same operator through the resolvent integral.
    fn balakrishnan(&self, s: f64) -> PyResult<PyField> {
        let inner = fracops::balakrishnan_apply(&self.inner, s, &MQuadrature::default()).map_err(to_py)?;
        Ok(PyField { inner })
    }

    fn localized_virial(&self, radius: f64) -> PyResult<f64> {
        let c = rescaled(radius)?;
        virial::localized_virial(&self.inner, &c).map_err(to_py)
    }

    /// All terms of the localized virial right-hand side at radius R.
    fn virial_rhs<'py>(&self, py: Python<'py>, params: &PyParams, radius: f64) -> PyResult<Bound<'py, PyAny>> {
        let c = rescaled(radius)?;
        let rep = virial::virial_rhs_general(&self.inner, &c, &params.inner, &MQuadrature::default()).map_err(to_py)?;
        to_object(py, &rep)
    }
}

fn rescaled(radius: f64) -> PyResult<RescaledCutoff> {
    let base = cutoff::build_profile().map_err(to_py)?;
    RescaledCutoff::new(&base, radius).map_err(to_py)
}

#[pyfunction]
fn zero_energy_amplitude(grid: &PyGrid, width: f64, params: &PyParams) -> PyResult<f64> {
    evolve::zero_energy_amplitude(&grid.inner, width, &params.inner).map_err(to_py)
}

/// Ground state on the grid plus its constants and blowup thresholds.
#[pyfunction]
#[pyo3(signature = (params, grid, tol = 1e-10))]
fn ground_state<'py>(py: Python<'py>, params: &PyParams, grid: &PyGrid, tol: f64) -> PyResult<(PyField, Bound<'py, PyAny>)> {
    let p = params.inner;
    let q = py.detach(|| groundstate::solve_ground_state(&p, &grid.inner, tol)).map_err(to_py)?;
    let c_gn = groundstate::gn_constant(&q);
    let thresholds = groundstate::k_constant(&p, c_gn, &q)
        .and_then(|t| if p.s_c() > 0.0 { groundstate::critical_point(&t, &p, q.mass) } else { Ok(t) })
        .ok();
    let (r1, r2) = groundstate::pohozaev_relative(&q);
    let info = serde_json::json!({
        "energy": q.energy,
        "mass": q.mass,
        "grad_norm_sq": q.grad_norm_sq,
        "lp_norm": q.lp_norm,
        "residual": q.residual,
        "iterations": q.iterations,
        "gn_constant": c_gn,
        "pohozaev_relative": [r1, r2],
        "thresholds": thresholds,
    });
    Ok((PyField { inner: q.profile }, to_object(py, &info)?))
}

/// Split-step run; returns the run log as a dict and the final state.
#[pyfunction]
#[allow(clippy::too_many_arguments)]
#[pyo3(name = "evolve", signature = (field, params, dt, t_max, radii = vec![], rhs_stride = 0, conservation_tol = 1e-8))]
fn run_evolution<'py>(
    py: Python<'py>,
    field: &PyField,
    params: &PyParams,
    dt: f64,
    t_max: f64,
    radii: Vec<f64>,
    rhs_stride: usize,
    conservation_tol: f64,
) -> PyResult<(Bound<'py, PyAny>, Option<PyField>)> {
    let cfg = EvolveConfig { dt, t_max, radii, rhs_stride, conservation_tol, ..Default::default() };
    let u0 = field.inner.clone();
    let p = params.inner;
    let mut log = py.detach(|| evolve::run(&u0, &cfg, &p)).map_err(to_py)?;
    let last = log.final_state.take().map(|inner| PyField { inner });
    Ok((to_object(py, &log)?, last))
}

/// Exponent fit M_R(t) ~ -C (t* - t)^(1 - 2s).
#[pyfunction]
fn fit_collapse<'py>(py: Python<'py>, times: Vec<f64>, series: Vec<f64>, s: f64) -> PyResult<Bound<'py, PyAny>> {
    let fit = evolve::fit_collapse(&times, &series, s).map_err(to_py)?;
    to_object(py, &fit)
}

/// Cutoff tables at radius R with the eta certificate for (s, N).
#[pyfunction]
#[pyo3(signature = (radius, s, dim = 2))]
fn cutoff_certificate<'py>(py: Python<'py>, radius: f64, s: f64, dim: usize) -> PyResult<Bound<'py, PyAny>> {
    let base = cutoff::build_profile().map_err(to_py)?;
    let c = RescaledCutoff::new(&base, radius).map_err(to_py)?;
    let eta = cutoff::find_eta(&base, s, dim).map_err(to_py)?;
    let ineq = cutoff::inequality_report(&c, dim);
    let psi = cutoff::verify_psi_inequality(&c, eta, s, dim).map_err(to_py)?;
    let r = c.verification_radii();
    let phi: Vec<f64> = r.iter().map(|&x| c.phi(x)).collect();
    let v = serde_json::json!({
        "eta": eta,
        "inequalities": ineq,
        "min_inequality": ineq.min(),
        "psi": psi,
        "r": r,
        "phi": phi,
    });
    to_object(py, &v)
}

#[pyclass(name = "DomainOperator", frozen)]
struct PyDomainOperator {
    op: DirichletFracOperator,
}

#[pymethods]
impl PyDomainOperator {
    #[new]
    fn new(py: Python<'_>, a: f64, b: f64, points: usize, s: f64) -> PyResult<Self> {
        let d = IntervalDomain::new(a, b, points).map_err(to_py)?;
        let op = py.detach(|| domain::assemble(&d, s)).map_err(to_py)?;
        Ok(PyDomainOperator { op })
    }

    #[getter]
    fn eigenvalues(&self) -> Vec<f64> {
        self.op.eigenvalues.clone()
    }

    #[getter]
    fn nodes(&self) -> Vec<f64> {
        self.op.domain.nodes()
    }

    fn apply(&self, values: Vec<Complex64>) -> PyResult<Vec<Complex64>> {
        self.check_len(values.len())?;
        Ok(self.op.apply(&values))
    }

    fn eigenfunction(&self, k: usize) -> PyResult<Vec<Complex64>> {
        if k >= self.op.eigenvalues.len() {
            return Err(PyValueError::new_err(format!("mode {k} out of range")));
        }
        Ok(self.op.eigenfunction(k).values)
    }

    fn gaussian(&self, amp: f64, width: f64) -> Vec<Complex64> {
        DomainState::gaussian(&self.op.domain, amp, width).values
    }

    fn zero_energy_amplitude(&self, width: f64, sigma: f64) -> PyResult<f64> {
        domain::zero_energy_amplitude(&self.op, width, sigma).map_err(to_py)
    }

    fn energy(&self, values: Vec<Complex64>, sigma: f64) -> PyResult<f64> {
        self.check_len(values.len())?;
        Ok(DomainState { values }.energy(&self.op, sigma))
    }

    fn pohozaev_check<'py>(&self, py: Python<'py>, values: Vec<Complex64>) -> PyResult<Bound<'py, PyAny>> {
        self.check_len(values.len())?;
        to_object(py, &domain::pohozaev_estimate_check(&DomainState { values }, &self.op))
    }

    #[pyo3(signature = (values, sigma, dt, t_max, conservation_tol = 1e-8))]
    fn evolve<'py>(
        &self,
        py: Python<'py>,
        values: Vec<Complex64>,
        sigma: f64,
        dt: f64,
        t_max: f64,
        conservation_tol: f64,
    ) -> PyResult<Bound<'py, PyAny>> {
        self.check_len(values.len())?;
        let cfg = DomainRunConfig { dt, t_max, sigma, conservation_tol, ..Default::default() };
        let u0 = DomainState { values };
        let log = py.detach(|| domain::evolve_domain(&u0, &self.op, &cfg)).map_err(to_py)?;
        to_object(py, &log)
    }
}

impl PyDomainOperator {
    fn check_len(&self, n: usize) -> PyResult<()> {
        if n != self.op.domain.points {
            return Err(PyValueError::new_err(format!("expected {} values, got {n}", self.op.domain.points)));
        }
        Ok(())
    }
}

/// Runs a named acceptance suite and returns its report.
#[pyfunction]
fn run_suite<'py>(py: Python<'py>, name: &str) -> PyResult<Bound<'py, PyAny>> {
    let n: SuiteName = name.parse().map_err(to_py)?;
    let rep = py.detach(|| suite::run_suite(n)).map_err(to_py)?;
    to_object(py, &rep)
}

#[pymodule]
fn pyfracvirial(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyParams>()?;
    m.add_class::<PyGrid>()?;
    m.add_class::<PyField>()?;
    m.add_class::<PyDomainOperator>()?;
    m.add_function(wrap_pyfunction!(zero_energy_amplitude, m)?)?;
    m.add_function(wrap_pyfunction!(ground_state, m)?)?;
    m.add_function(wrap_pyfunction!(run_evolution, m)?)?;
    m.add_function(wrap_pyfunction!(fit_collapse, m)?)?;
    m.add_function(wrap_pyfunction!(cutoff_certificate, m)?)?;
    m.add_function(wrap_pyfunction!(run_suite, m)?)?;
    Ok(())
}
