//! The pseudo-Bayesian robust-PCA solver.
//!
//! The objective over the hyperparameters `(Psi_c, Psi_r, Gamma)` is
//!
//! ```text
//! L = y^T Sigma_y^{-1} y
//!   + sum_j log|Psi_c + Gamma_col_j/2 + (lambda/2) I|
//!   + sum_i log|Psi_r + Gamma_row_i/2 + (lambda/2) I|,
//! Sigma_y = Psi_r (x) I + I (x) Psi_c + diag(gamma) + lambda I.
//! ```
//!
//! It is minimized by majorization-minimization: a quadratic bound in
//! `(Z, E)` is tightened by the split update ([`crate::admm`]), then the
//! log-determinant terms are bounded through their conjugate gradients and
//! minimized in closed form. The outer loop alternates the two until the
//! iterates stall.

use ndarray::Array2;
use ndarray_linalg::InverseC;

use crate::admm::{dense_ze, ze_admm_from, AdmmConfig};
use crate::error::{Error, Result};
use crate::linalg::{chol_logdet, sym_eig, KronSumOperator, SylvesterEigs, CG_DEFAULT_TOL};
use crate::matrix::{fro_norm, rel_change, validate_finite, Matrix};

/// Gamma entries below this collapse to exactly zero (their sparse-component
/// entries are zeroed with them).
pub const GAMMA_CLAMP: f64 = 1e-12;

/// At or below this noise level the split update runs the equality-constrained
/// ADMM; above it the noise-aware system is solved exactly.
const LAMBDA_EQUALITY_THRESHOLD: f64 = 1e-4;

/// Largest `n*m` for which the noise-aware split update is solved densely.
const SOLVER_DENSE_CAP: usize = 2500;

/// Largest `n*m` for which the objective gradient w.r.t. a single gamma entry
/// forms the dense covariance.
const GAMMA_GRADIENT_CAP: usize = 400;

/// Variational parameters of the decomposition model.
#[derive(Debug, Clone)]
pub struct HyperState {
    /// Column covariance factor, `n x n` symmetric PSD.
    pub psi_c: Matrix,
    /// Row covariance factor, `m x m` symmetric PSD (held at zero in the
    /// non-symmetric ablation).
    pub psi_r: Matrix,
    /// Per-entry outlier variances, `n x m`, entrywise nonnegative.
    pub gamma: Matrix,
    /// Noise variance, nonnegative.
    pub lambda: f64,
}

impl HyperState {
    pub fn new(psi_c: Matrix, psi_r: Matrix, gamma: Matrix, lambda: f64) -> Result<Self> {
        let st = HyperState {
            psi_c,
            psi_r,
            gamma,
            lambda,
        };
        st.validate()?;
        Ok(st)
    }

    /// The solver's starting point: identity covariances and unit outlier
    /// variances (the row factor starts at zero in the ablation).
    pub fn initial(n: usize, m: usize, lambda: f64, symmetric: bool) -> Self {
        HyperState {
            psi_c: Array2::eye(n),
            psi_r: if symmetric {
                Array2::eye(m)
            } else {
                Array2::zeros((m, m))
            },
            gamma: Array2::ones((n, m)),
            lambda,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (n, m) = self.gamma.dim();
        if self.psi_c.dim() != (n, n) || self.psi_r.dim() != (m, m) {
            return Err(Error::dim(format!(
                "hyperstate: psi_c {:?} / psi_r {:?} incompatible with gamma {n}x{m}",
                self.psi_c.dim(),
                self.psi_r.dim()
            )));
        }
        if self.lambda < 0.0 {
            return Err(Error::invalid("hyperstate: lambda must be >= 0"));
        }
        if self.gamma.iter().any(|g| *g < 0.0 || !g.is_finite()) {
            return Err(Error::invalid(
                "hyperstate: gamma must be entrywise finite and nonnegative",
            ));
        }
        debug_assert!(
            min_eigenvalue(&self.psi_c).map_or(true, |e| e >= -1e-10)
                && min_eigenvalue(&self.psi_r).map_or(true, |e| e >= -1e-10),
            "hyperstate covariance factors must be PSD"
        );
        Ok(())
    }

    pub fn check_shape(&self, y: &Matrix) -> Result<()> {
        if y.dim() != self.gamma.dim() {
            return Err(Error::dim(format!(
                "observation {:?} incompatible with hyperstate {:?}",
                y.dim(),
                self.gamma.dim()
            )));
        }
        Ok(())
    }
}

fn min_eigenvalue(s: &Matrix) -> Option<f64> {
    sym_eig(s).ok().map(|e| e.eigenvalues[0])
}

/// Which closed-form update the outlier variances follow.
///
/// The assembled upper bound couples each `gamma_ij` to `e_ij^2` and to one
/// column and one row log-determinant, whose exact minimizer is
/// `(e^2 + u_c + u_r) / 2`. The other two variants keep the printed update
/// and its unhalved counterpart available for comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GammaVariant {
    /// `gamma = z^2 + u_c + u_r`, exactly as printed.
    PaperLiteral,
    /// `gamma = e^2 + u_c + u_r`.
    ESquaredPlusU,
    /// `gamma = (e^2 + u_c + u_r) / 2`, the assembled-bound minimizer;
    /// monotone but over-aggressive (clean-entry variances hit zero before
    /// the subspace settles, anchoring wrong supports).
    ESquaredPlusUHalved,
}

impl GammaVariant {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(GammaVariant::PaperLiteral),
            "esq" => Ok(GammaVariant::ESquaredPlusU),
            "esq-half" => Ok(GammaVariant::ESquaredPlusUHalved),
            other => Err(Error::invalid(format!(
                "unknown gamma variant '{other}' (expected paper|esq|esq-half)"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            GammaVariant::PaperLiteral => "paper",
            GammaVariant::ESquaredPlusU => "esq",
            GammaVariant::ESquaredPlusUHalved => "esq-half",
        }
    }
}

impl Default for GammaVariant {
    /// `e^2 + u_c + u_r`. The monotonicity suite confirms a non-increasing
    /// objective for this rule on every tested instance, and unlike the
    /// halved bound minimizer it keeps a small variance floor on clean
    /// entries (the fixed point of `x -> 2 x l / (x + l)` is `l`, not `0`),
    /// which preserves the escape routes exact recovery depends on.
    fn default() -> Self {
        GammaVariant::ESquaredPlusU
    }
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub lambda: f64,
    pub max_outer_iters: usize,
    /// Outer stop: `max(rel change of Z, rel change of E)` below this.
    pub outer_tol: f64,
    pub gamma_variant: GammaVariant,
    /// `false` freezes the row covariance at zero and drops its gradient
    /// contributions (the "without symmetry" ablation).
    pub symmetric: bool,
    pub admm: AdmmConfig,
    /// Record the objective once before the first iteration and after every
    /// hyperparameter update. Costs a conjugate-gradient solve plus `n + m`
    /// Cholesky factorizations per iteration, so it is off by default.
    pub objective_tracking: bool,
    /// Track `min eig(Psi_c - Z Z^T / m)` (and the row analogue) after every
    /// update; the worst value lands in the decomposition diagnostics.
    pub psd_audit: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            lambda: 1e-6,
            max_outer_iters: 100,
            outer_tol: 1e-6,
            gamma_variant: GammaVariant::default(),
            symmetric: true,
            admm: AdmmConfig::default(),
            objective_tracking: false,
            psd_audit: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lambda < 0.0 {
            return Err(Error::invalid("solver: lambda must be >= 0"));
        }
        if self.max_outer_iters == 0 {
            return Err(Error::invalid("solver: max_outer_iters must be >= 1"));
        }
        if self.outer_tol <= 0.0 {
            return Err(Error::invalid("solver: outer_tol must be > 0"));
        }
        self.admm.validate()
    }
}

/// Bound gradients at the current hyperparameters.
///
/// `g_c` accumulates the column-wise covariance gradients, `g_r` the row-wise
/// ones; `u_c[(i,j)]` and `u_r[(i,j)]` hold the diagonal outlier-variance
/// gradients of column `j` and row `i` respectively.
#[derive(Debug, Clone)]
pub struct GradientSet {
    pub g_c: Matrix,
    pub g_r: Matrix,
    pub u_c: Matrix,
    pub u_r: Matrix,
}

/// Computes the bound gradients.
///
/// Per column `j` the kernel is `S = Psi_c + D` with
/// `D = diag(gamma_col_j / 2 + lambda / 2)`; the covariance gradient
/// `Psi_c - Psi_c S^{-1} Psi_c` is accumulated through the algebraically
/// equal form `D - D S^{-1} D`, which needs no extra matrix products beyond
/// the inversion. Rows are handled the same way against `Psi_r`; with
/// `symmetric = false` the row side is skipped entirely.
pub fn compute_gradients(state: &HyperState, symmetric: bool) -> Result<GradientSet> {
    let (n, m) = state.gamma.dim();
    let lambda = state.lambda;
    let mut g_c = Array2::<f64>::zeros((n, n));
    let mut u_c = Array2::<f64>::zeros((n, m));
    let mut s = Array2::<f64>::zeros((n, n));
    for j in 0..m {
        s.assign(&state.psi_c);
        let mut d = Vec::with_capacity(n);
        for i in 0..n {
            let di = 0.5 * state.gamma[[i, j]] + 0.5 * lambda;
            s[[i, i]] += di;
            d.push(di);
        }
        let sinv = s
            .invc()
            .map_err(|e| Error::numerical(format!("singular column system at j = {j}: {e}")))?;
        for i in 0..n {
            g_c[[i, i]] += d[i];
            for k in 0..n {
                g_c[[i, k]] -= d[i] * sinv[[i, k]] * d[k];
            }
            let gam = state.gamma[[i, j]];
            u_c[[i, j]] = gam - 0.5 * gam * gam * sinv[[i, i]];
        }
    }

    let mut g_r = Array2::<f64>::zeros((m, m));
    let mut u_r = Array2::<f64>::zeros((n, m));
    if symmetric {
        let mut s = Array2::<f64>::zeros((m, m));
        for i in 0..n {
            s.assign(&state.psi_r);
            let mut d = Vec::with_capacity(m);
            for j in 0..m {
                let dj = 0.5 * state.gamma[[i, j]] + 0.5 * lambda;
                s[[j, j]] += dj;
                d.push(dj);
            }
            let sinv = s
                .invc()
                .map_err(|e| Error::numerical(format!("singular row system at i = {i}: {e}")))?;
            for j in 0..m {
                g_r[[j, j]] += d[j];
                for l in 0..m {
                    g_r[[j, l]] -= d[j] * sinv[[j, l]] * d[l];
                }
                let gam = state.gamma[[i, j]];
                u_r[[i, j]] = gam - 0.5 * gam * gam * sinv[[j, j]];
            }
        }
    }

    debug_assert!(
        u_c.indexed_iter()
            .chain(u_r.indexed_iter())
            .all(|((i, j), u)| *u >= -1e-9 && *u <= state.gamma[[i, j]] + 1e-9),
        "outlier-variance gradients must stay within [0, gamma]"
    );
    Ok(GradientSet { g_c, g_r, u_c, u_r })
}

/// Closed-form hyperparameter update given the bound gradients and the
/// current split `(Z, E)`.
pub fn update_hyperparams(
    grads: &GradientSet,
    z: &Matrix,
    e: &Matrix,
    variant: GammaVariant,
    symmetric: bool,
    lambda: f64,
) -> HyperState {
    let (n, m) = z.dim();
    let mut psi_c = (grads.g_c.t().to_owned() + z.dot(&z.t())) / m as f64;
    symmetrize_in_place(&mut psi_c);
    let psi_r = if symmetric {
        let mut p = (grads.g_r.t().to_owned() + z.t().dot(z)) / n as f64;
        symmetrize_in_place(&mut p);
        p
    } else {
        Array2::zeros((m, m))
    };
    let base = match variant {
        GammaVariant::PaperLiteral => z.mapv(|v| v * v),
        GammaVariant::ESquaredPlusU | GammaVariant::ESquaredPlusUHalved => e.mapv(|v| v * v),
    };
    let mut gamma = base + &grads.u_c;
    if symmetric {
        gamma += &grads.u_r;
    }
    if variant == GammaVariant::ESquaredPlusUHalved {
        gamma.mapv_inplace(|v| 0.5 * v);
    }
    gamma.mapv_inplace(|v| v.max(0.0));
    HyperState {
        psi_c,
        psi_r,
        gamma,
        lambda,
    }
}

fn symmetrize_in_place(s: &mut Matrix) {
    let n = s.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (s[[i, j]] + s[[j, i]]);
            s[[i, j]] = v;
            s[[j, i]] = v;
        }
    }
}

/// Evaluates the solver objective at `state`.
pub fn eval_objective(state: &HyperState, y: &Matrix) -> Result<f64> {
    eval_objective_with_tol(state, y, CG_DEFAULT_TOL)
}

/// Same evaluator with an explicit tolerance on the inner conjugate-gradient
/// solve; finite-difference oracles use a tighter one.
pub fn eval_objective_with_tol(state: &HyperState, y: &Matrix, cg_tol: f64) -> Result<f64> {
    state.check_shape(y)?;
    let (n, m) = y.dim();
    if state.lambda <= 0.0 && state.gamma.iter().any(|g| *g <= 0.0) {
        return Err(Error::invalid(
            "objective needs lambda > 0 or strictly positive gamma",
        ));
    }
    let op = KronSumOperator::new(
        state.psi_c.clone(),
        state.psi_r.clone(),
        state.gamma.clone(),
        state.lambda,
    )?;
    let w = crate::linalg::cg_solve(&op, y, cg_tol, 4 * n * m)?;
    let quad = crate::matrix::fro_dot(y, &w);

    let mut logdets = 0.0;
    let mut s = Array2::<f64>::zeros((n, n));
    for j in 0..m {
        s.assign(&state.psi_c);
        for i in 0..n {
            s[[i, i]] += 0.5 * state.gamma[[i, j]] + 0.5 * state.lambda;
        }
        logdets += chol_logdet(&s)
            .map_err(|e| Error::numerical(format!("column log-det {j}: {e}")))?;
    }
    let mut s = Array2::<f64>::zeros((m, m));
    for i in 0..n {
        s.assign(&state.psi_r);
        for j in 0..m {
            s[[j, j]] += 0.5 * state.gamma[[i, j]] + 0.5 * state.lambda;
        }
        logdets +=
            chol_logdet(&s).map_err(|e| Error::numerical(format!("row log-det {i}: {e}")))?;
    }
    Ok(quad + logdets)
}

/// Partial derivative of the objective with respect to one outlier variance.
///
/// Forms the dense covariance, so it is capped at `n*m <= 400`. Valid at any
/// `gamma_ij >= 0`; at the zero boundary it is the one-sided derivative used
/// by the escape check.
pub fn gamma_gradient(state: &HyperState, y: &Matrix, i: usize, j: usize) -> Result<f64> {
    state.check_shape(y)?;
    let (n, m) = y.dim();
    if n * m > GAMMA_GRADIENT_CAP {
        return Err(Error::SizeCap(format!(
            "gamma_gradient: n*m = {} exceeds {GAMMA_GRADIENT_CAP}",
            n * m
        )));
    }
    if i >= n || j >= m {
        return Err(Error::dim(format!("gamma index ({i}, {j}) out of range")));
    }
    let (_z, _e, w) = dense_ze(state, y)?;

    let mut sc = state.psi_c.clone();
    for r in 0..n {
        sc[[r, r]] += 0.5 * state.gamma[[r, j]] + 0.5 * state.lambda;
    }
    let scinv = sc
        .invc()
        .map_err(|e| Error::numerical(format!("singular column system at j = {j}: {e}")))?;
    let mut sr = state.psi_r.clone();
    for c in 0..m {
        sr[[c, c]] += 0.5 * state.gamma[[i, c]] + 0.5 * state.lambda;
    }
    let srinv = sr
        .invc()
        .map_err(|e| Error::numerical(format!("singular row system at i = {i}: {e}")))?;
    Ok(0.5 * scinv[[i, i]] + 0.5 * srinv[[j, j]] - w[[i, j]] * w[[i, j]])
}

/// The escape-direction check: derivative of the objective at a zeroed
/// outlier variance. Negative values mean the entry can re-enter the support.
pub fn gamma_escape_derivative(state: &HyperState, y: &Matrix, i: usize, j: usize) -> Result<f64> {
    if state.gamma[[i, j]] != 0.0 {
        return Err(Error::invalid(format!(
            "gamma_escape_derivative requires gamma[({i}, {j})] = 0, got {}",
            state.gamma[[i, j]]
        )));
    }
    gamma_gradient(state, y, i, j)
}

/// Recovered decomposition with convergence diagnostics.
#[derive(Debug, Clone)]
pub struct Decomposition {
    pub z: Matrix,
    pub e: Matrix,
    /// Objective values: one entry for the initial state, then one per outer
    /// iteration. Empty unless tracking was enabled.
    pub objective_trace: Vec<f64>,
    pub outer_iters: usize,
    pub converged: bool,
    /// Worst `min eig(Psi - scaled Gram)` seen across updates when the PSD
    /// audit is on.
    pub min_psd_margin: Option<f64>,
}

/// Runs the full solver on an observation matrix.
pub fn solve(y: &Matrix, cfg: &SolverConfig) -> Result<Decomposition> {
    cfg.validate()?;
    validate_finite(y)?;
    let (n, m) = y.dim();
    if fro_norm(y) == 0.0 {
        return Ok(Decomposition {
            z: Array2::zeros((n, m)),
            e: Array2::zeros((n, m)),
            objective_trace: Vec::new(),
            outer_iters: 0,
            converged: true,
            min_psd_margin: cfg.psd_audit.then_some(0.0),
        });
    }

    let mut state = HyperState::initial(n, m, cfg.lambda, cfg.symmetric);
    let mut z = Array2::<f64>::zeros((n, m));
    let mut e = Array2::<f64>::zeros((n, m));
    let mut trace = Vec::new();
    if cfg.objective_tracking {
        trace.push(eval_objective(&state, y)?);
    }
    let mut psd_margin = f64::INFINITY;
    let mut converged = false;
    let mut iters = 0;

    for it in 1..=cfg.max_outer_iters {
        iters = it;
        let (z_new, mut e_new) = ze_step(&state, y, cfg, &z, &e)
            .map_err(|err| Error::numerical(format!("outer iteration {it}: split update: {err}")))?;
        let grads = compute_gradients(&state, cfg.symmetric)
            .map_err(|err| Error::numerical(format!("outer iteration {it}: gradients: {err}")))?;
        state = update_hyperparams(
            &grads,
            &z_new,
            &e_new,
            cfg.gamma_variant,
            cfg.symmetric,
            cfg.lambda,
        );
        clamp_gamma(&mut state.gamma, &mut e_new);
        if cfg.psd_audit {
            psd_margin = psd_margin.min(psd_dominance_margin(&state, &z_new, cfg.symmetric)?);
        }
        if cfg.objective_tracking {
            trace.push(eval_objective(&state, y)?);
        }
        let dz = rel_change(&z_new, &z);
        let de = rel_change(&e_new, &e);
        z = z_new;
        e = e_new;
        if dz.max(de) < cfg.outer_tol {
            converged = true;
            break;
        }
    }

    Ok(Decomposition {
        z,
        e,
        objective_trace: trace,
        outer_iters: iters,
        converged,
        min_psd_margin: cfg.psd_audit.then_some(psd_margin),
    })
}

/// Smallest eigenvalue over `Psi_c - Z Z^T / m` and, in symmetric mode,
/// `Psi_r - Z^T Z / n`.
fn psd_dominance_margin(state: &HyperState, z: &Matrix, symmetric: bool) -> Result<f64> {
    let (n, m) = z.dim();
    let c = &state.psi_c - &(z.dot(&z.t()) / m as f64);
    let mut margin = sym_eig(&c)?.eigenvalues[0];
    if symmetric {
        let r = &state.psi_r - &(z.t().dot(z) / n as f64);
        margin = margin.min(sym_eig(&r)?.eigenvalues[0]);
    }
    Ok(margin)
}

fn clamp_gamma(gamma: &mut Matrix, e: &mut Matrix) {
    for (g, ev) in gamma.iter_mut().zip(e.iter_mut()) {
        if *g < GAMMA_CLAMP {
            *g = 0.0;
            *ev = 0.0;
        }
    }
}

/// One split update. In the vanishing-noise regime the equality-constrained
/// ADMM applies; at larger noise the bound only touches the objective when
/// the noise-aware system is solved exactly, so small problems go through the
/// dense form and large ones through a fixed-penalty alternation on the same
/// kernels.
fn ze_step(
    state: &HyperState,
    y: &Matrix,
    cfg: &SolverConfig,
    z_warm: &Matrix,
    e_warm: &Matrix,
) -> Result<(Matrix, Matrix)> {
    if state.lambda <= LAMBDA_EQUALITY_THRESHOLD {
        let (z, e, _diag) = ze_admm_from(state, y, &cfg.admm, z_warm.clone(), e_warm.clone())?;
        Ok((z, e))
    } else if y.len() <= SOLVER_DENSE_CAP {
        let (z, e, _w) = dense_ze(state, y)?;
        Ok((z, e))
    } else {
        ze_fixed_penalty(state, y, z_warm.clone(), e_warm.clone())
    }
}

/// Exact noise-aware split by alternating the two prox kernels with the
/// penalty pinned at `2 / lambda` and no multiplier; this block descent
/// converges to the same point as the dense solve.
fn ze_fixed_penalty(
    state: &HyperState,
    y: &Matrix,
    mut z: Matrix,
    mut e: Matrix,
) -> Result<(Matrix, Matrix)> {
    let lambda = state.lambda;
    let eigs = SylvesterEigs::new(&state.psi_c, &state.psi_r)?;
    for _ in 0..20_000 {
        let b = y - &e;
        let z_new = eigs.solve_and_apply(lambda, &b)?;
        let e_new = Array2::from_shape_fn(y.dim(), |(i, j)| {
            let g = state.gamma[[i, j]];
            if g == 0.0 {
                0.0
            } else {
                (y[[i, j]] - z_new[[i, j]]) * g / (g + lambda)
            }
        });
        let dz = rel_change(&z_new, &z);
        let de = rel_change(&e_new, &e);
        z = z_new;
        e = e_new;
        if dz.max(de) < 1e-12 {
            break;
        }
    }
    Ok((z, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate, Prng, SyntheticKind, SyntheticSpec};
    use ndarray::array;

    fn random_state(rng: &mut Prng, n: usize, m: usize, lambda: f64) -> HyperState {
        let a = Array2::from_shape_fn((n, n), |_| rng.normal());
        let b = Array2::from_shape_fn((m, m), |_| rng.normal());
        let mut psi_c = a.dot(&a.t()) / n as f64;
        let mut psi_r = b.dot(&b.t()) / m as f64;
        for i in 0..n {
            psi_c[[i, i]] += 0.3;
        }
        for j in 0..m {
            psi_r[[j, j]] += 0.3;
        }
        let gamma = Array2::from_shape_fn((n, m), |_| 0.4 + rng.uniform01());
        HyperState::new(psi_c, psi_r, gamma, lambda).unwrap()
    }

    #[test]
    fn objective_analytic_diagonal_case() {
        // Y = 0, Psi = I, Gamma = 1, lambda = 1 at 3x3: every kernel matrix
        // is 2I, so the value is (m + n) * 3 log 2 = 18 log 2.
        let st = HyperState::new(
            Array2::eye(3),
            Array2::eye(3),
            Array2::ones((3, 3)),
            1.0,
        )
        .unwrap();
        let y = Array2::zeros((3, 3));
        let got = eval_objective(&st, &y).unwrap();
        assert!((got - 18.0 * 2.0_f64.ln()).abs() < 1e-12, "got {got}");
    }

    /// Dense oracle: form the full covariance, solve and take exact
    /// log-determinants from eigenvalues.
    #[test]
    fn objective_matches_dense_oracle() {
        use ndarray_linalg::Solve;
        let mut rng = Prng::seeded(100);
        let (n, m) = (3, 3);
        let st = random_state(&mut rng, n, m, 0.4);
        let y = Array2::from_shape_fn((n, m), |_| rng.normal());
        let got = eval_objective(&st, &y).unwrap();

        let sigma = KronSumOperator::new(
            st.psi_c.clone(),
            st.psi_r.clone(),
            st.gamma.clone(),
            st.lambda,
        )
        .unwrap()
        .to_dense();
        let mut yv = ndarray::Array1::<f64>::zeros(n * m);
        for j in 0..m {
            for i in 0..n {
                yv[i + j * n] = y[[i, j]];
            }
        }
        let w = sigma.solve(&yv).unwrap();
        let mut want = yv.dot(&w);
        for j in 0..m {
            let mut s = st.psi_c.clone();
            for i in 0..n {
                s[[i, i]] += 0.5 * st.gamma[[i, j]] + 0.5 * st.lambda;
            }
            want += sym_eig(&s).unwrap().eigenvalues.iter().map(|v| v.ln()).sum::<f64>();
        }
        for i in 0..n {
            let mut s = st.psi_r.clone();
            for j in 0..m {
                s[[j, j]] += 0.5 * st.gamma[[i, j]] + 0.5 * st.lambda;
            }
            want += sym_eig(&s).unwrap().eigenvalues.iter().map(|v| v.ln()).sum::<f64>();
        }
        assert!((got - want).abs() < 1e-8 * want.abs(), "got {got}, want {want}");
    }

    #[test]
    fn gradients_analytic_diagonal_case() {
        // Psi_c = Psi_r = I, Gamma = 1, lambda = 1: every kernel is 2I, so
        // each column gradient is I/2 and u = 1 - 1/2 * 1 * 1/2 * 1 = 3/4.
        let (n, m) = (3, 4);
        let st = HyperState::new(
            Array2::eye(n),
            Array2::eye(m),
            Array2::ones((n, m)),
            1.0,
        )
        .unwrap();
        let g = compute_gradients(&st, true).unwrap();
        let want_gc = Array2::eye(n) * (m as f64 / 2.0);
        let want_gr = Array2::eye(m) * (n as f64 / 2.0);
        assert!(crate::matrix::fro_dist(&g.g_c, &want_gc) < 1e-12);
        assert!(crate::matrix::fro_dist(&g.g_r, &want_gr) < 1e-12);
        for u in g.u_c.iter().chain(g.u_r.iter()) {
            assert!((u - 0.75).abs() < 1e-12);
        }
    }

    #[test]
    fn gradients_zero_gamma_gives_zero_u() {
        let (n, m) = (3, 3);
        let st = HyperState::new(
            Array2::eye(n),
            Array2::eye(m),
            Array2::zeros((n, m)),
            0.5,
        )
        .unwrap();
        let g = compute_gradients(&st, true).unwrap();
        assert_eq!(g.u_c, Array2::zeros((n, m)));
        assert_eq!(g.u_r, Array2::zeros((n, m)));
    }

    #[test]
    fn gradients_are_psd() {
        let mut rng = Prng::seeded(200);
        let st = random_state(&mut rng, 4, 4, 0.2);
        let g = compute_gradients(&st, true).unwrap();
        assert!(sym_eig(&g.g_c).unwrap().eigenvalues[0] >= -1e-10);
        assert!(sym_eig(&g.g_r).unwrap().eigenvalues[0] >= -1e-10);
    }

    #[test]
    fn update_analytic_case_and_variants() {
        let (n, m) = (3, 3);
        let st = HyperState::new(
            Array2::eye(n),
            Array2::eye(m),
            Array2::ones((n, m)),
            1.0,
        )
        .unwrap();
        let g = compute_gradients(&st, true).unwrap();
        let z = Array2::zeros((n, m));
        let e = Array2::zeros((n, m));
        let up = update_hyperparams(&g, &z, &e, GammaVariant::PaperLiteral, true, 1.0);
        assert!(crate::matrix::fro_dist(&up.psi_c, &(Array2::eye(n) * 0.5)) < 1e-12);
        for v in up.gamma.iter() {
            assert!((v - 1.5).abs() < 1e-12);
        }
        // Zero gradients and zero E collapse gamma for the e^2-based variants.
        let zero_grads = GradientSet {
            g_c: Array2::zeros((n, n)),
            g_r: Array2::zeros((m, m)),
            u_c: Array2::zeros((n, m)),
            u_r: Array2::zeros((n, m)),
        };
        let up = update_hyperparams(&zero_grads, &z, &e, GammaVariant::ESquaredPlusU, true, 1.0);
        assert_eq!(up.gamma, Array2::zeros((n, m)));
    }

    #[test]
    fn update_keeps_covariances_dominating_gram() {
        let mut rng = Prng::seeded(300);
        let (n, m) = (4, 4);
        let st = random_state(&mut rng, n, m, 0.3);
        let g = compute_gradients(&st, true).unwrap();
        let z = Array2::from_shape_fn((n, m), |_| rng.normal());
        let e = Array2::from_shape_fn((n, m), |_| rng.normal());
        let up = update_hyperparams(&g, &z, &e, GammaVariant::default(), true, st.lambda);
        let dc = &up.psi_c - &(z.dot(&z.t()) / m as f64);
        let dr = &up.psi_r - &(z.t().dot(&z) / n as f64);
        assert!(sym_eig(&dc).unwrap().eigenvalues[0] >= -1e-10);
        assert!(sym_eig(&dr).unwrap().eigenvalues[0] >= -1e-10);
    }

    #[test]
    fn solve_zero_observation_is_trivial() {
        let dec = solve(&Array2::zeros((5, 4)), &SolverConfig::default()).unwrap();
        assert!(dec.converged);
        assert!(dec.outer_iters <= 2);
        assert_eq!(dec.z, Array2::zeros((5, 4)));
        assert_eq!(dec.e, Array2::zeros((5, 4)));
    }

    #[test]
    fn solve_recovers_small_clean_instance() {
        // No outliers: the clean component must be reproduced closely.
        let spec = SyntheticSpec::new(SyntheticKind::TypeA, 20, 20, 2, 0.0, 5).unwrap();
        let inst = generate(&spec).unwrap();
        let dec = solve(&inst.y, &SolverConfig::default()).unwrap();
        let err = crate::matrix::fro_dist(&dec.z, &inst.z_gt) / crate::matrix::fro_norm(&inst.z_gt);
        assert!(err < 1e-3, "relative error {err}");
    }

    #[test]
    fn solve_transpose_invariance_in_symmetric_mode() {
        let spec = SyntheticSpec::new(SyntheticKind::TypeA, 16, 16, 2, 0.1, 11).unwrap();
        let inst = generate(&spec).unwrap();
        let cfg = SolverConfig::default();
        let dec = solve(&inst.y, &cfg).unwrap();
        let dec_t = solve(&inst.y.t().to_owned(), &cfg).unwrap();
        let rz = crate::matrix::fro_dist(&dec.z, &dec_t.z.t().to_owned())
            / crate::matrix::fro_norm(&dec.z);
        let re = crate::matrix::fro_dist(&dec.e, &dec_t.e.t().to_owned())
            / crate::matrix::fro_norm(&dec.e).max(1e-12);
        assert!(rz < 1e-6, "Z transpose mismatch {rz}");
        assert!(re < 1e-6, "E transpose mismatch {re}");
    }

    #[test]
    fn gamma_gradient_matches_finite_differences_interior() {
        let mut rng = Prng::seeded(400);
        let (n, m) = (6, 6);
        let st = random_state(&mut rng, n, m, 0.5);
        let y = Array2::from_shape_fn((n, m), |_| rng.normal() + 1.5);
        let h = 1e-6;
        for &(i, j) in &[(0usize, 0usize), (2, 3), (5, 1)] {
            let analytic = gamma_gradient(&st, &y, i, j).unwrap();
            let mut plus = st.clone();
            plus.gamma[[i, j]] += h;
            let mut minus = st.clone();
            minus.gamma[[i, j]] -= h;
            let fp = eval_objective_with_tol(&plus, &y, 1e-14).unwrap();
            let fm = eval_objective_with_tol(&minus, &y, 1e-14).unwrap();
            let fd = (fp - fm) / (2.0 * h);
            let rel = (analytic - fd).abs() / fd.abs().max(1e-12);
            assert!(rel < 1e-4, "({i},{j}): analytic {analytic}, fd {fd}, rel {rel}");
        }
    }

    #[test]
    fn escape_derivative_negative_under_epsilon_construction() {
        let (n, m) = (6, 6);
        let eps = 1e-3;
        let mut rng = Prng::seeded(500);
        // Entries bounded away from zero so the quadratic term dominates.
        let y = Array2::from_shape_fn((n, m), |_| {
            let mag = 0.5 + 1.5 * rng.uniform01();
            if rng.uniform01() < 0.5 {
                -mag
            } else {
                mag
            }
        });
        let st = HyperState::new(
            Array2::eye(n) * eps,
            Array2::eye(m) * eps,
            Array2::zeros((n, m)),
            1e-6,
        )
        .unwrap();
        for i in 0..n {
            for j in 0..m {
                let d = gamma_escape_derivative(&st, &y, i, j).unwrap();
                assert!(d < 0.0, "derivative at ({i},{j}) is {d}");
            }
        }
        // Scaling the data makes the derivative more negative.
        let y10 = &y * 10.0;
        let d = gamma_escape_derivative(&st, &y, 0, 0).unwrap();
        let d10 = gamma_escape_derivative(&st, &y10, 0, 0).unwrap();
        assert!(d10 < d);
    }

    #[test]
    fn escape_derivative_requires_zeroed_entry() {
        let st = HyperState::new(
            Array2::eye(2),
            Array2::eye(2),
            Array2::ones((2, 2)),
            0.1,
        )
        .unwrap();
        let y = Array2::ones((2, 2));
        assert!(gamma_escape_derivative(&st, &y, 0, 0).is_err());
    }

    #[test]
    fn objective_trace_non_increasing_at_moderate_noise() {
        // Exact split update plus bound-minimizing gamma variant gives a
        // monotone trace by construction; spot-check one seeded instance.
        let spec = SyntheticSpec::new(SyntheticKind::TypeA, 10, 10, 2, 0.15, 21).unwrap();
        let inst = generate(&spec).unwrap();
        let cfg = SolverConfig {
            lambda: 0.01,
            max_outer_iters: 40,
            objective_tracking: true,
            ..SolverConfig::default()
        };
        let dec = solve(&inst.y, &cfg).unwrap();
        for w in dec.objective_trace.windows(2) {
            assert!(
                w[1] <= w[0] + 1e-8 * w[0].abs(),
                "objective increased: {} -> {}",
                w[0],
                w[1]
            );
        }
    }
}
