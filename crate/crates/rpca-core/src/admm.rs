//! The low-rank/sparse split update: a small-scale closed form that solves
//! the coupled linear system exactly, and an augmented-Lagrangian ADMM loop
//! for general sizes that enforces `Y = Z + E` while minimizing
//! `sum e_ij^2 / gamma_ij + z^T Sigma_z^+ z`.
//!
//! The ADMM low-rank step reduces to a Sylvester equation
//! `(Psi_c + 2/mu I) X + X Psi_r = B` whose coefficients stay fixed across
//! the whole call, so both eigendecompositions are computed once up front.

use ndarray::Array2;
use ndarray_linalg::FactorizeC;
use ndarray_linalg::{SolveC, UPLO};

use crate::error::{Error, Result};
use crate::linalg::{spectral_norm, KronSumOperator, SylvesterEigs};
use crate::matrix::{fro_norm, Matrix};
use crate::solver::HyperState;

/// Largest `n*m` for which the public closed form assembles the dense system.
pub const CLOSED_FORM_CAP: usize = 400;

#[derive(Debug, Clone)]
pub struct AdmmConfig {
    /// `mu_0 = mu0_scale / |Y|_2`.
    pub mu0_scale: f64,
    /// Penalty growth factor per dual update, > 1.
    pub eta: f64,
    /// `mu_max = mu_max_scale * mu_0`.
    pub mu_max_scale: f64,
    /// Alternations of the Z/E block per dual update.
    pub inner_iters: usize,
    /// Stop criterion on feasibility and squared relative Z change.
    pub tol: f64,
    /// Cap on dual-update steps; hitting it returns the best iterate with
    /// `converged = false` rather than an error.
    pub max_steps: usize,
}

impl Default for AdmmConfig {
    fn default() -> Self {
        AdmmConfig {
            mu0_scale: 1.25,
            eta: 1.5,
            mu_max_scale: 1e10,
            inner_iters: 3,
            tol: 1e-8,
            max_steps: 500,
        }
    }
}

impl AdmmConfig {
    /// Accuracy-oriented settings for oracle comparisons.
    ///
    /// With the default ramp (`eta = 1.5`, three inner alternations) the
    /// iterate freezes around `1e-4` relative error once the penalty outruns
    /// the inner solves; a gentler ramp tracks the constrained optimum to
    /// `~1e-8`.
    pub fn accurate() -> Self {
        AdmmConfig {
            eta: 1.2,
            tol: 1e-12,
            max_steps: 1000,
            ..AdmmConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.mu0_scale <= 0.0 {
            return Err(Error::invalid("admm: mu0_scale must be > 0"));
        }
        if self.eta <= 1.0 {
            return Err(Error::invalid("admm: eta must be > 1"));
        }
        if self.mu_max_scale <= 0.0 {
            return Err(Error::invalid("admm: mu_max_scale must be > 0"));
        }
        if self.inner_iters == 0 {
            return Err(Error::invalid("admm: inner_iters must be >= 1"));
        }
        if self.tol <= 0.0 {
            return Err(Error::invalid("admm: tol must be > 0"));
        }
        Ok(())
    }
}

/// Live ADMM iterate.
#[derive(Debug, Clone)]
pub struct AdmmState {
    pub z: Matrix,
    pub e: Matrix,
    /// Lagrange multiplier of the `Y = Z + E` constraint.
    pub q: Matrix,
    pub mu: f64,
}

#[derive(Debug, Clone)]
pub struct AdmmDiagnostics {
    pub steps: usize,
    pub converged: bool,
    /// `|Y - Z - E|_F / |Y|_F` at exit.
    pub feasibility: f64,
}

/// Sparse-component update: entrywise prox holding `Z` fixed.
///
/// `e_ij = (y_ij - z_ij + q_ij / mu) / (2 / (mu gamma_ij) + 1)`, with the
/// limit convention `e_ij = 0` when `gamma_ij = 0`.
pub fn admm_e_update(y: &Matrix, z: &Matrix, q: &Matrix, mu: f64, gamma: &Matrix) -> Matrix {
    let (n, m) = y.dim();
    Array2::from_shape_fn((n, m), |(i, j)| {
        let g = gamma[[i, j]];
        if g == 0.0 {
            0.0
        } else {
            (y[[i, j]] - z[[i, j]] + q[[i, j]] / mu) / (2.0 / (mu * g) + 1.0)
        }
    })
}

/// Low-rank component update holding `E` fixed.
///
/// With `B = Y - E + Q / mu`, solves `(Psi_c + 2/mu I) X + X Psi_r = B` and
/// returns `Z = Psi_c X + X Psi_r`, which equals
/// `Sigma_z (Sigma_z + 2/mu I)^{-1} vec(B)` reshaped.
pub fn admm_z_update(
    y: &Matrix,
    e: &Matrix,
    q: &Matrix,
    mu: f64,
    psi_c: &Matrix,
    psi_r: &Matrix,
) -> Result<Matrix> {
    if mu <= 0.0 {
        return Err(Error::invalid("admm_z_update: mu must be > 0"));
    }
    let b = y - e + &(q / mu);
    let eigs = SylvesterEigs::new(psi_c, psi_r)?;
    eigs.solve_and_apply(2.0 / mu, &b)
}

/// Full ADMM loop from a cold start (`Z = E = 0`).
pub fn ze_admm(
    state: &HyperState,
    y: &Matrix,
    cfg: &AdmmConfig,
) -> Result<(Matrix, Matrix, AdmmDiagnostics)> {
    let zeros = Array2::zeros(y.dim());
    ze_admm_from(state, y, cfg, zeros.clone(), zeros)
}

/// ADMM warm-started at `(z0, e0)`; the multiplier always restarts at zero.
pub fn ze_admm_from(
    state: &HyperState,
    y: &Matrix,
    cfg: &AdmmConfig,
    z0: Matrix,
    e0: Matrix,
) -> Result<(Matrix, Matrix, AdmmDiagnostics)> {
    cfg.validate()?;
    state.check_shape(y)?;
    if z0.dim() != y.dim() || e0.dim() != y.dim() {
        return Err(Error::dim("ze_admm: warm start shape mismatch"));
    }
    let y_spectral = spectral_norm(y);
    if y_spectral == 0.0 {
        return Err(Error::numerical("ze_admm: |Y|_2 = 0, mu_0 undefined"));
    }
    let y_fro = fro_norm(y);
    let mu0 = cfg.mu0_scale / y_spectral;
    let mu_max = cfg.mu_max_scale * mu0;
    // The equality constraint is relaxed proportionally to the noise floor.
    let feas_tol = cfg.tol.max(10.0 * state.lambda);

    let eigs = SylvesterEigs::new(&state.psi_c, &state.psi_r)?;
    let mut st = AdmmState {
        z: z0,
        e: e0,
        q: Array2::zeros(y.dim()),
        mu: mu0,
    };
    let mut best: Option<(f64, Matrix, Matrix)> = None;
    let mut steps = 0;
    for step in 1..=cfg.max_steps {
        steps = step;
        let z_prev = st.z.clone();
        for _ in 0..cfg.inner_iters {
            let b = y - &st.e + &(&st.q / st.mu);
            st.z = eigs.solve_and_apply(2.0 / st.mu, &b)?;
            st.e = admm_e_update(y, &st.z, &st.q, st.mu, &state.gamma);
        }
        let resid = y - &st.z - &st.e;
        st.q.scaled_add(st.mu, &resid);
        st.mu = (st.mu * cfg.eta).min(mu_max);

        let feas = fro_norm(&resid) / y_fro;
        let zp_norm = fro_norm(&z_prev);
        let dz = crate::matrix::fro_dist(&st.z, &z_prev);
        let z_term = if zp_norm == 0.0 {
            if dz == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            (dz * dz) / (zp_norm * zp_norm)
        };
        if best.as_ref().map_or(true, |(bf, _, _)| feas < *bf) {
            best = Some((feas, st.z.clone(), st.e.clone()));
        }
        if feas < feas_tol && z_term < cfg.tol {
            return Ok((
                st.z,
                st.e,
                AdmmDiagnostics {
                    steps,
                    converged: true,
                    feasibility: feas,
                },
            ));
        }
    }
    let (feas, z, e) = best.expect("at least one step ran");
    Ok((
        z,
        e,
        AdmmDiagnostics {
            steps,
            converged: false,
            feasibility: feas,
        },
    ))
}

/// Exact minimizer of the noise-aware quadratic bound via the dense system.
///
/// Returns `(Z, E)` with `vec(Z) = (Psi_r (x) I + I (x) Psi_c) w`,
/// `vec(E) = diag(gamma) w`, where `w` solves the dense
/// `(Kronecker-sum + diag(gamma) + lambda I) w = vec(Y)` system. Capped at
/// `n*m <=` [`CLOSED_FORM_CAP`].
pub fn ze_closed_form(state: &HyperState, y: &Matrix) -> Result<(Matrix, Matrix)> {
    let (n, m) = y.dim();
    if n * m > CLOSED_FORM_CAP {
        return Err(Error::SizeCap(format!(
            "ze_closed_form: n*m = {} exceeds {CLOSED_FORM_CAP}",
            n * m
        )));
    }
    let (z, e, _w) = dense_ze(state, y)?;
    Ok((z, e))
}

/// Shared dense route; also returns the solve vector reshaped to a matrix so
/// callers can reuse `Sigma_y^{-1} vec(Y)`.
pub(crate) fn dense_ze(state: &HyperState, y: &Matrix) -> Result<(Matrix, Matrix, Matrix)> {
    state.check_shape(y)?;
    let (n, m) = y.dim();
    let op = KronSumOperator::new(
        state.psi_c.clone(),
        state.psi_r.clone(),
        state.gamma.clone(),
        state.lambda,
    )?;
    let sigma = op.to_dense();
    let factor = sigma
        .factorizec(UPLO::Lower)
        .map_err(|e| Error::numerical(format!("dense system not positive definite: {e}")))?;
    let mut yv = ndarray::Array1::<f64>::zeros(n * m);
    for j in 0..m {
        for i in 0..n {
            yv[i + j * n] = y[[i, j]];
        }
    }
    let wv = factor
        .solvec(&yv)
        .map_err(|e| Error::numerical(format!("dense solve failed: {e}")))?;
    let mut w = Array2::<f64>::zeros((n, m));
    for j in 0..m {
        for i in 0..n {
            w[[i, j]] = wv[i + j * n];
        }
    }
    let z = state.psi_c.dot(&w) + w.dot(&state.psi_r);
    let e = &state.gamma * &w;
    Ok((z, e, w))
}
