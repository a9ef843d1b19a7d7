//! Python bindings: `Field`, `Poly` and the main analyses. Reports come back
//! as plain dicts with the same layout as the CLI's JSON.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyAny;
use serde::Serialize;

use ffbias::census::{self as fc, CensusError, DEFAULT_BUDGET};
use ffbias::experiment::parse_element;
use ffbias::rank::{self, RankError};
use ffbias::singular::{self, SingularError};
use ffbias::{FieldCtx, FieldSpec, MultiPoly};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn census_err(e: CensusError) -> PyErr {
    match e {
        CensusError::BudgetExceeded { .. } | CensusError::NoCompletedLevels { .. } => {
            PyRuntimeError::new_err(e.to_string())
        }
        e => value_err(e),
    }
}

fn singular_err(e: SingularError) -> PyErr {
    match e {
        SingularError::BudgetExceeded { .. } => PyRuntimeError::new_err(e.to_string()),
        e => value_err(e),
    }
}

fn rank_err(e: RankError) -> PyErr {
    match e {
        RankError::Singular(inner) => singular_err(inner),
        e => value_err(e),
    }
}

fn to_py<'py, T: Serialize>(py: Python<'py>, v: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(v).map_err(value_err)?;
    py.import("json")?.call_method1("loads", (text,))
}

/// A finite field `F_q` or an extension `k_n`, given as `p^m` or `p^m:n`.
#[pyclass(name = "Field", module = "pyffbias", frozen, from_py_object)]
#[derive(Clone)]
struct PyField {
    ctx: FieldCtx,
}

#[pymethods]
impl PyField {
    #[new]
    fn new(spec: &str) -> PyResult<Self> {
        let spec = FieldSpec::parse(spec).map_err(value_err)?;
        let base = spec.base_field(ffbias::field::DEFAULT_MAX_FIELD_SIZE).map_err(value_err)?;
        let ctx = base.extend(spec.n).map_err(value_err)?;
        Ok(PyField { ctx })
    }

    #[getter]
    fn size(&self) -> u64 {
        self.ctx.size()
    }

    #[getter]
    fn characteristic(&self) -> u32 {
        self.ctx.characteristic()
    }

    /// Degree over the base field `F_q`.
    #[getter]
    fn degree(&self) -> u32 {
        self.ctx.degree()
    }

    #[getter]
    fn spec(&self) -> String {
        self.ctx.spec()
    }

    fn extend(&self, n: u32) -> PyResult<PyField> {
        Ok(PyField {
            ctx: self.ctx.extend(n).map_err(value_err)?,
        })
    }

    /// Every element in canonical order, printed.
    fn elements(&self) -> Vec<String> {
        self.ctx.elements().map(|e| e.to_string()).collect()
    }

    /// Normal form of an element written in the polynomial grammar.
    fn element(&self, text: &str) -> PyResult<String> {
        Ok(parse_element(text, &self.ctx).map_err(value_err)?.to_string())
    }

    fn __repr__(&self) -> String {
        format!("Field('{}')", self.ctx.spec())
    }
}

/// A polynomial over a `Field`; variables are `x0, x1, ..`.
#[pyclass(name = "Poly", module = "pyffbias", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyPoly {
    poly: MultiPoly,
}

#[pymethods]
impl PyPoly {
    #[new]
    #[pyo3(signature = (text, field, nvars=None))]
    fn new(text: &str, field: &PyField, nvars: Option<usize>) -> PyResult<Self> {
        let nvars = nvars.unwrap_or_else(|| MultiPoly::infer_nvars(text));
        let poly = MultiPoly::parse(text, &field.ctx, nvars).map_err(value_err)?;
        Ok(PyPoly { poly })
    }

    #[staticmethod]
    #[pyo3(signature = (field, nvars, degree, seed, homogeneous=false))]
    fn random(field: &PyField, nvars: usize, degree: u32, seed: u64, homogeneous: bool) -> PyPoly {
        PyPoly {
            poly: MultiPoly::random(&field.ctx, nvars, degree, homogeneous, seed),
        }
    }

    #[getter]
    fn nvars(&self) -> usize {
        self.poly.nvars()
    }

    #[getter]
    fn degree(&self) -> Option<u32> {
        self.poly.degree()
    }

    #[getter]
    fn field(&self) -> PyField {
        PyField {
            ctx: self.poly.ctx().clone(),
        }
    }

    fn is_homogeneous(&self) -> bool {
        self.poly.is_homogeneous()
    }

    fn top_homogeneous(&self) -> PyResult<PyPoly> {
        Ok(PyPoly {
            poly: self.poly.top_homogeneous().map_err(value_err)?,
        })
    }

    /// Homogenization of `F - t` with a new last variable.
    fn homogenize(&self, t: &str) -> PyResult<PyPoly> {
        let t = parse_element(t, self.poly.ctx()).map_err(value_err)?;
        Ok(PyPoly {
            poly: self.poly.homogenize(&t).map_err(value_err)?.poly,
        })
    }

    /// Value at a point of some extension field.
    #[pyo3(signature = (point, field=None))]
    fn evaluate(&self, point: Vec<String>, field: Option<PyField>) -> PyResult<String> {
        let ctx = field.map_or_else(|| self.poly.ctx().clone(), |f| f.ctx);
        let pt = point
            .iter()
            .map(|s| parse_element(s, &ctx))
            .collect::<Result<Vec<_>, _>>()
            .map_err(value_err)?;
        Ok(self.poly.evaluate(&pt).map_err(value_err)?.to_string())
    }

    fn __str__(&self) -> String {
        self.poly.to_string()
    }

    fn __repr__(&self) -> String {
        format!("Poly('{}', Field('{}'))", self.poly, self.poly.ctx().spec())
    }
}

/// Fiber sizes of `poly` over the degree-`n` extension.
#[pyfunction]
#[pyo3(signature = (poly, n=1, budget=DEFAULT_BUDGET))]
fn census<'py>(py: Python<'py>, poly: &PyPoly, n: u32, budget: u64) -> PyResult<Bound<'py, PyAny>> {
    let c = py
        .detach(|| fc::census(&poly.poly, n, budget))
        .map_err(census_err)?;
    to_py(py, &c.to_record())
}

#[pyfunction]
#[pyo3(signature = (poly, n_max=2, budget=DEFAULT_BUDGET))]
fn bias_estimate<'py>(py: Python<'py>, poly: &PyPoly, n_max: u32, budget: u64) -> PyResult<Bound<'py, PyAny>> {
    let r = py
        .detach(|| fc::bias_estimate(&poly.poly, n_max, budget))
        .map_err(census_err)?;
    to_py(py, &r)
}

/// Rank of a quadratic form in odd characteristic, with a witness.
#[pyfunction]
fn quadratic_rank<'py>(py: Python<'py>, poly: &PyPoly) -> PyResult<Bound<'py, PyAny>> {
    let q = rank::quadratic_rank(&poly.poly).map_err(rank_err)?;
    let out = pyo3::types::PyDict::new(py);
    out.set_item("matrix_rank", q.matrix_rank)?;
    out.set_item("rank", q.rank)?;
    out.set_item("witness", to_py(py, &q.witness.to_record())?)?;
    Ok(out.into_any())
}

/// Certified interval `[lo, hi]` for the rank (strength) of `poly`.
#[pyfunction]
fn rank_of<'py>(py: Python<'py>, poly: &PyPoly) -> PyResult<Bound<'py, PyAny>> {
    let r = py.detach(|| rank::rank_of(&poly.poly)).map_err(rank_err)?;
    to_py(py, &r.to_record(&poly.poly))
}

/// Singular locus of the projective hypersurface of a homogeneous `poly`.
#[pyfunction]
#[pyo3(signature = (poly, n_max=3, budget=DEFAULT_BUDGET))]
fn c_regularity<'py>(py: Python<'py>, poly: &PyPoly, n_max: u32, budget: u64) -> PyResult<Bound<'py, PyAny>> {
    let r = py
        .detach(|| singular::c_regularity(&poly.poly, n_max, budget))
        .map_err(singular_err)?;
    to_py(py, &r)
}

#[pyfunction]
#[pyo3(signature = (poly, c, t_ext=1, n_max=3, budget=DEFAULT_BUDGET))]
fn c_good_check<'py>(
    py: Python<'py>,
    poly: &PyPoly,
    c: i64,
    t_ext: u32,
    n_max: u32,
    budget: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let v = py
        .detach(|| singular::c_good_check(&poly.poly, c, t_ext, n_max, budget))
        .map_err(singular_err)?;
    to_py(py, &v)
}

/// `#F^{-1}(t) = #Y_t - #X` over the degree-`n` extension containing `t`.
#[pyfunction]
#[pyo3(signature = (poly, t, n=1, budget=DEFAULT_BUDGET))]
fn fiber_identity_check<'py>(
    py: Python<'py>,
    poly: &PyPoly,
    t: &str,
    n: u32,
    budget: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let target = poly.poly.ctx().extend(n).map_err(value_err)?;
    let t = parse_element(t, &target).map_err(value_err)?;
    let r = py
        .detach(|| fc::fiber_identity_check(&poly.poly, &t, budget))
        .map_err(census_err)?;
    to_py(py, &r)
}

#[pymodule]
fn pyffbias(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyField>()?;
    m.add_class::<PyPoly>()?;
    m.add_function(wrap_pyfunction!(census, m)?)?;
    m.add_function(wrap_pyfunction!(bias_estimate, m)?)?;
    m.add_function(wrap_pyfunction!(quadratic_rank, m)?)?;
    m.add_function(wrap_pyfunction!(rank_of, m)?)?;
    m.add_function(wrap_pyfunction!(c_regularity, m)?)?;
    m.add_function(wrap_pyfunction!(c_good_check, m)?)?;
    m.add_function(wrap_pyfunction!(fiber_identity_check, m)?)?;
    m.add("SCHEMA_VERSION", ffbias::SCHEMA_VERSION)?;
    Ok(())
}
