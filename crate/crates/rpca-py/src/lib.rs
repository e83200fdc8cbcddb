//! Python bindings: seeded instance generation, the decomposition solvers,
//! and the recovery metric, exchanged as NumPy arrays.

use numpy::{IntoPyArray, PyArray2, PyReadonlyArray2};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use rpca_core::baselines::{mc_alm, pcp_alm, trace_variant_solve, SupportMask};
use rpca_core::bench as rbench;
use rpca_core::matrix::Matrix;
use rpca_core::solver::{solve, GammaVariant, SolverConfig};
use rpca_core::synth::{self, SyntheticKind, SyntheticSpec};

fn err(e: rpca_core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_matrix(x: &PyReadonlyArray2<'_, f64>) -> Matrix {
    x.as_array().to_owned()
}

fn parse_kind(kind: &str) -> PyResult<SyntheticKind> {
    match kind {
        "a" => Ok(SyntheticKind::TypeA),
        "b" => Ok(SyntheticKind::TypeB),
        "hard" => Ok(SyntheticKind::Hard),
        other => Err(PyValueError::new_err(format!(
            "unknown kind '{other}' (expected 'a', 'b' or 'hard')"
        ))),
    }
}

/// Generate a synthetic instance; returns `(y, z_gt, e_gt)`.
#[pyfunction]
#[pyo3(signature = (kind, n, m, rank, rho, seed, mag_lo=None, mag_hi=None))]
#[allow(clippy::too_many_arguments)]
fn gen<'py>(
    py: Python<'py>,
    kind: &str,
    n: usize,
    m: usize,
    rank: usize,
    rho: f64,
    seed: u64,
    mag_lo: Option<f64>,
    mag_hi: Option<f64>,
) -> PyResult<(
    Bound<'py, PyArray2<f64>>,
    Bound<'py, PyArray2<f64>>,
    Bound<'py, PyArray2<f64>>,
)> {
    let k = parse_kind(kind)?;
    let (def_lo, def_hi) = k.default_magnitude();
    let spec = SyntheticSpec::with_magnitude(
        k,
        n,
        m,
        rank,
        rho,
        mag_lo.unwrap_or(def_lo),
        mag_hi.unwrap_or(def_hi),
        seed,
    )
    .map_err(err)?;
    let inst = synth::generate(&spec).map_err(err)?;
    Ok((
        inst.y.into_pyarray(py),
        inst.z_gt.into_pyarray(py),
        inst.e_gt.into_pyarray(py),
    ))
}

/// Pseudo-Bayesian decomposition. Returns a dict with `z`, `e`, `iters`,
/// `converged`.
#[pyfunction]
#[pyo3(signature = (y, lam=1e-6, symmetric=true, gamma_variant="esq-half", max_iters=100, tol=1e-6, track_objective=false))]
#[allow(clippy::too_many_arguments)]
fn solve_pb<'py>(
    py: Python<'py>,
    y: PyReadonlyArray2<'py, f64>,
    lam: f64,
    symmetric: bool,
    gamma_variant: &str,
    max_iters: usize,
    tol: f64,
    track_objective: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg = SolverConfig {
        lambda: lam,
        symmetric,
        gamma_variant: GammaVariant::parse(gamma_variant).map_err(err)?,
        max_outer_iters: max_iters,
        outer_tol: tol,
        objective_tracking: track_objective,
        ..SolverConfig::default()
    };
    let dec = solve(&to_matrix(&y), &cfg).map_err(err)?;
    let out = PyDict::new(py);
    out.set_item("z", dec.z.into_pyarray(py))?;
    out.set_item("e", dec.e.into_pyarray(py))?;
    out.set_item("iters", dec.outer_iters)?;
    out.set_item("converged", dec.converged)?;
    if track_objective {
        out.set_item("objective_trace", dec.objective_trace)?;
    }
    Ok(out)
}

/// Principal component pursuit. Returns `(z, e, iters, converged)`.
#[pyfunction]
#[pyo3(signature = (y, lam=0.0, tol=1e-7, max_iters=500))]
fn solve_pcp<'py>(
    py: Python<'py>,
    y: PyReadonlyArray2<'py, f64>,
    lam: f64,
    tol: f64,
    max_iters: usize,
) -> PyResult<(Bound<'py, PyArray2<f64>>, Bound<'py, PyArray2<f64>>, usize, bool)> {
    let r = pcp_alm(&to_matrix(&y), lam, tol, max_iters).map_err(err)?;
    Ok((
        r.z.into_pyarray(py),
        r.e.into_pyarray(py),
        r.iterations,
        r.converged,
    ))
}

/// Nuclear-norm completion with a boolean mask of observed entries.
/// Returns `(z, iters, converged)`.
#[pyfunction]
#[pyo3(signature = (y, observed, tol=1e-7, max_iters=500))]
fn solve_mc<'py>(
    py: Python<'py>,
    y: PyReadonlyArray2<'py, f64>,
    observed: PyReadonlyArray2<'py, bool>,
    tol: f64,
    max_iters: usize,
) -> PyResult<(Bound<'py, PyArray2<f64>>, usize, bool)> {
    let ym = to_matrix(&y);
    let obs = observed.as_array();
    if obs.dim() != ym.dim() {
        return Err(PyValueError::new_err("mask shape does not match y"));
    }
    let pairs: Vec<(usize, usize)> = obs
        .indexed_iter()
        .filter_map(|(idx, &v)| v.then_some(idx))
        .collect();
    let mask = SupportMask::new(ym.nrows(), ym.ncols(), pairs).map_err(err)?;
    let r = mc_alm(&ym, &mask, tol, max_iters).map_err(err)?;
    Ok((r.z.into_pyarray(py), r.iterations, r.converged))
}

/// Trace-penalized convex variant (square inputs). Returns a dict with the
/// split components and the collapsed objective value.
#[pyfunction]
#[pyo3(signature = (y, lam=1e-3, tol=1e-10, max_iters=4000))]
fn solve_pb_trace<'py>(
    py: Python<'py>,
    y: PyReadonlyArray2<'py, f64>,
    lam: f64,
    tol: f64,
    max_iters: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let r = trace_variant_solve(&to_matrix(&y), lam, tol, max_iters).map_err(err)?;
    let out = PyDict::new(py);
    out.set_item("z", (&r.state.z_c + &r.state.z_r).into_pyarray(py))?;
    out.set_item("e", r.state.e.clone().into_pyarray(py))?;
    out.set_item("objective", r.objective)?;
    out.set_item("iters", r.iterations)?;
    out.set_item("converged", r.converged)?;
    Ok(out)
}

/// `|z_hat - z_gt|_F / |z_gt|_F`.
#[pyfunction]
fn nrmse(z_hat: PyReadonlyArray2<'_, f64>, z_gt: PyReadonlyArray2<'_, f64>) -> PyResult<f64> {
    rbench::nrmse(&to_matrix(&z_hat), &to_matrix(&z_gt)).map_err(err)
}

/// Deterministic per-trial seed derivation used by the sweep harness.
#[pyfunction]
fn derive_seed(base: u64, cell_id: u64, trial: u64) -> u64 {
    synth::derive_seed(base, cell_id, trial)
}

#[pymodule]
fn rpca_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    rpca_core::linalg::blas_single_thread();
    m.add_function(wrap_pyfunction!(gen, m)?)?;
    m.add_function(wrap_pyfunction!(solve_pb, m)?)?;
    m.add_function(wrap_pyfunction!(solve_pcp, m)?)?;
    m.add_function(wrap_pyfunction!(solve_mc, m)?)?;
    m.add_function(wrap_pyfunction!(solve_pb_trace, m)?)?;
    m.add_function(wrap_pyfunction!(nrmse, m)?)?;
    m.add_function(wrap_pyfunction!(derive_seed, m)?)?;
    Ok(())
}
