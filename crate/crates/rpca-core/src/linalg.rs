//! Dense linear-algebra kernels shared by all solvers: symmetric
//! eigendecomposition, Cholesky log-determinant, singular-value and entrywise
//! soft thresholding, Sylvester solves for symmetric PSD coefficients, and a
//! matrix-free Kronecker-sum operator with a conjugate-gradient solver.
//!
//! Every function here is a pure function of its value inputs and safe to
//! call concurrently. Eigen/SVD factorizations are delegated to LAPACK; the
//! Cholesky log-determinant is hand-rolled so breakdowns can report the
//! failing pivot.

use ndarray::{Array1, Array2, s};
use ndarray_linalg::{Eigh, SVD, UPLO};

use crate::error::{Error, Result};
use crate::matrix::{fro_norm, Matrix};

/// Relative asymmetry tolerated before an input is rejected as non-symmetric.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Eigenvalue-pair sums at or below this reject a Sylvester system as singular.
pub const SYLVESTER_SINGULAR_TOL: f64 = 1e-14;

/// Default relative tolerance of [`cg_solve`].
pub const CG_DEFAULT_TOL: f64 = 1e-10;

extern "C" {
    fn openblas_set_num_threads(n: i32);
}

/// Pins the BLAS backend to one thread.
///
/// Multi-threaded BLAS kernels may partition work differently from run to
/// run, which breaks the bit-reproducibility the benchmark harness promises.
/// Callers that care (the CLI, the sweep runner, tests) invoke this once up
/// front; it is idempotent.
pub fn blas_single_thread() {
    unsafe { openblas_set_num_threads(1) };
}

/// Symmetric eigendecomposition, eigenvalues ascending, columns of `vectors`
/// are the eigenvectors.
#[derive(Debug, Clone)]
pub struct SymEig {
    pub eigenvalues: Array1<f64>,
    pub vectors: Matrix,
}

fn check_square_symmetric(s: &Matrix, what: &str) -> Result<()> {
    let (n, m) = s.dim();
    if n != m {
        return Err(Error::dim(format!("{what}: expected square, got {n}x{m}")));
    }
    let norm = fro_norm(s);
    let mut asym = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            let d = s[[i, j]] - s[[j, i]];
            asym += d * d;
        }
    }
    let asym = (2.0 * asym).sqrt();
    if asym > SYMMETRY_TOL * norm.max(1.0) {
        return Err(Error::dim(format!(
            "{what}: asymmetry {asym:.3e} exceeds {SYMMETRY_TOL:.0e} relative"
        )));
    }
    Ok(())
}

/// Replaces `s` by `(s + s^T) / 2`. Inputs are validated as symmetric to
/// `1e-12` relative first; the averaging only removes roundoff drift.
fn symmetrized(s: &Matrix) -> Matrix {
    let n = s.nrows();
    let mut out = s.clone();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (s[[i, j]] + s[[j, i]]);
            out[[i, j]] = v;
            out[[j, i]] = v;
        }
    }
    out
}

/// Eigendecomposition of a symmetric matrix.
pub fn sym_eig(sym: &Matrix) -> Result<SymEig> {
    check_square_symmetric(sym, "sym_eig")?;
    let work = symmetrized(sym);
    let (eigenvalues, vectors) = work
        .eigh(UPLO::Lower)
        .map_err(|e| Error::numerical(format!("eigendecomposition failed: {e}")))?;
    let out = SymEig {
        eigenvalues,
        vectors,
    };
    debug_assert!(sym_eig_invariants_hold(sym, &out), "sym_eig invariants");
    Ok(out)
}

/// Orthogonality of the eigenvector basis and reconstruction of the input;
/// asserted on every call in debug builds.
fn sym_eig_invariants_hold(input: &Matrix, e: &SymEig) -> bool {
    let n = input.nrows();
    let gram = e.vectors.t().dot(&e.vectors);
    for i in 0..n {
        for j in 0..n {
            let want = if i == j { 1.0 } else { 0.0 };
            if (gram[[i, j]] - want).abs() > 1e-10 {
                return false;
            }
        }
    }
    let scaled = &e.vectors * &e.eigenvalues; // scales column k by eigenvalue k
    let recon = scaled.dot(&e.vectors.t());
    let denom = fro_norm(input).max(1e-300);
    crate::matrix::fro_dist(&recon, input) / denom <= 1e-8
}

/// Log-determinant of a symmetric positive-definite matrix via Cholesky.
///
/// A non-positive pivot aborts with the failing pivot index, which callers
/// use to report which per-row/per-column system lost definiteness.
pub fn chol_logdet(sym: &Matrix) -> Result<f64> {
    check_square_symmetric(sym, "chol_logdet")?;
    let a = symmetrized(sym);
    let n = a.nrows();
    let mut l = Array2::<f64>::zeros((n, n));
    let mut logdet = 0.0;
    for k in 0..n {
        let mut d = a[[k, k]];
        for j in 0..k {
            d -= l[[k, j]] * l[[k, j]];
        }
        if d <= 0.0 || !d.is_finite() {
            return Err(Error::numerical(format!(
                "Cholesky breakdown at pivot {k}: pivot value {d:.3e}"
            )));
        }
        let lkk = d.sqrt();
        l[[k, k]] = lkk;
        logdet += 2.0 * lkk.ln();
        for i in (k + 1)..n {
            let mut v = a[[i, k]];
            for j in 0..k {
                v -= l[[i, j]] * l[[k, j]];
            }
            l[[i, k]] = v / lkk;
        }
    }
    Ok(logdet)
}

/// Singular-value soft thresholding: `U shrink(S, tau) V^T`.
pub fn svt(m: &Matrix, tau: f64) -> Result<Matrix> {
    if tau < 0.0 {
        return Err(Error::invalid(format!("svt: tau must be >= 0, got {tau}")));
    }
    let (u, sv, vt) = m
        .svd(true, true)
        .map_err(|e| Error::numerical(format!("SVD failed: {e}")))?;
    let u = u.expect("svd requested U");
    let vt = vt.expect("svd requested V^T");
    let shrunk = sv.mapv(|x| (x - tau).max(0.0));
    let k = shrunk.iter().take_while(|v| **v > 0.0).count();
    if k == 0 {
        return Ok(Array2::zeros(m.dim()));
    }
    let uk = u.slice(s![.., ..k]);
    let vk = vt.slice(s![..k, ..]);
    let scaled = &uk * &shrunk.slice(s![..k]); // scale column i by shrunk sigma_i
    Ok(scaled.dot(&vk))
}

/// Entrywise soft thresholding `sign(x) * max(|x| - tau, 0)`.
pub fn soft_threshold(m: &Matrix, tau: f64) -> Matrix {
    m.mapv(|x| x.signum() * (x.abs() - tau).max(0.0))
}

/// Largest singular value via power iteration on `A^T A`.
pub fn spectral_norm(m: &Matrix) -> f64 {
    let (n, mm) = m.dim();
    if n == 0 || mm == 0 {
        return 0.0;
    }
    // Deterministic pseudo-random start avoids structured null vectors.
    let mut state = 0x5EED_5EED_5EED_5EEDu64;
    let mut v = Array1::from_shape_fn(mm, |_| {
        state = crate::synth::splitmix64(state);
        (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    });
    let vn = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if vn == 0.0 {
        return 0.0;
    }
    v.mapv_inplace(|x| x / vn);
    let mut sigma = 0.0f64;
    for _ in 0..20_000 {
        let w = m.dot(&v);
        let s_new = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if s_new == 0.0 {
            return 0.0;
        }
        let mut u = m.t().dot(&w);
        let un = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        if un == 0.0 {
            return s_new;
        }
        u.mapv_inplace(|x| x / un);
        v = u;
        if (s_new - sigma).abs() <= 1e-12 * s_new.max(1e-300) {
            return s_new;
        }
        sigma = s_new;
    }
    sigma
}

/// Cached eigendecompositions of the two coefficient matrices of a Sylvester
/// system, reused across repeated solves with varying shift and right side.
#[derive(Debug, Clone)]
pub struct SylvesterEigs {
    pub a: SymEig,
    pub b: SymEig,
}

impl SylvesterEigs {
    pub fn new(a: &Matrix, b: &Matrix) -> Result<Self> {
        Ok(SylvesterEigs {
            a: sym_eig(a)?,
            b: sym_eig(b)?,
        })
    }

    fn check_rhs(&self, c: &Matrix) -> Result<()> {
        let n = self.a.eigenvalues.len();
        let m = self.b.eigenvalues.len();
        if c.dim() != (n, m) {
            return Err(Error::dim(format!(
                "Sylvester right side: expected {n}x{m}, got {}x{}",
                c.nrows(),
                c.ncols()
            )));
        }
        Ok(())
    }

    fn check_nonsingular(&self, shift: f64) -> Result<()> {
        let amin = self
            .a
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        let bmin = self
            .b
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        let min_sum = amin + shift + bmin;
        if min_sum <= SYLVESTER_SINGULAR_TOL {
            return Err(Error::numerical(format!(
                "Sylvester system near-singular: minimal eigenvalue-pair sum {min_sum:.3e}"
            )));
        }
        Ok(())
    }

    /// Solves `(A + shift I) X + X B = C` in the joint eigenbasis.
    pub fn solve(&self, shift: f64, c: &Matrix) -> Result<Matrix> {
        self.check_rhs(c)?;
        self.check_nonsingular(shift)?;
        let mut chat = self.a.vectors.t().dot(c).dot(&self.b.vectors);
        for ((i, j), v) in chat.indexed_iter_mut() {
            *v /= self.a.eigenvalues[i] + shift + self.b.eigenvalues[j];
        }
        Ok(self.a.vectors.dot(&chat).dot(&self.b.vectors.t()))
    }

    /// Fused form of the ADMM low-rank step: with `X` solving
    /// `(A + shift I) X + X B = C`, returns `A X + X B` directly.
    pub fn solve_and_apply(&self, shift: f64, c: &Matrix) -> Result<Matrix> {
        self.check_rhs(c)?;
        self.check_nonsingular(shift)?;
        let mut chat = self.a.vectors.t().dot(c).dot(&self.b.vectors);
        for ((i, j), v) in chat.indexed_iter_mut() {
            let sum = self.a.eigenvalues[i] + self.b.eigenvalues[j];
            *v *= sum / (sum + shift);
        }
        Ok(self.a.vectors.dot(&chat).dot(&self.b.vectors.t()))
    }
}

/// Solves `(a + shift I) X + X b = c` for symmetric PSD `a`, `b`.
///
/// Both coefficients are symmetric, so a double eigendecomposition gives
/// `X = U_a (C_hat_ij / (alpha_i + shift + beta_j)) U_b^T` at the same
/// `O(nm(n+m))` cost as a general dense Sylvester solver. Eigenvalue-pair
/// sums at or below `1e-14` are rejected, not regularized; callers that need
/// a definite system add their own shift.
pub fn solve_sylvester_spd(a: &Matrix, b: &Matrix, c: &Matrix, shift: f64) -> Result<Matrix> {
    if shift < 0.0 {
        return Err(Error::invalid(format!(
            "solve_sylvester_spd: shift must be >= 0, got {shift}"
        )));
    }
    SylvesterEigs::new(a, b)?.solve(shift, c)
}

/// The structured operator `V -> Psi_c V + V Psi_r + Gamma o V + lambda V`,
/// i.e. the Kronecker-sum-plus-diagonal matrix applied matrix-free to the
/// column-stacked vectorization of `V`.
#[derive(Debug, Clone)]
pub struct KronSumOperator {
    pub psi_c: Matrix,
    pub psi_r: Matrix,
    pub gamma: Matrix,
    pub lambda: f64,
}

impl KronSumOperator {
    pub fn new(psi_c: Matrix, psi_r: Matrix, gamma: Matrix, lambda: f64) -> Result<Self> {
        check_square_symmetric(&psi_c, "KronSumOperator psi_c")?;
        check_square_symmetric(&psi_r, "KronSumOperator psi_r")?;
        let (n, m) = gamma.dim();
        if psi_c.nrows() != n || psi_r.nrows() != m {
            return Err(Error::dim(format!(
                "KronSumOperator: psi_c {}x{}, psi_r {}x{} incompatible with gamma {n}x{m}",
                psi_c.nrows(),
                psi_c.ncols(),
                psi_r.nrows(),
                psi_r.ncols()
            )));
        }
        if lambda < 0.0 {
            return Err(Error::invalid("KronSumOperator: lambda must be >= 0"));
        }
        Ok(KronSumOperator {
            psi_c,
            psi_r,
            gamma,
            lambda,
        })
    }

    pub fn shape(&self) -> (usize, usize) {
        self.gamma.dim()
    }

    pub fn apply(&self, v: &Matrix) -> Result<Matrix> {
        if v.dim() != self.gamma.dim() {
            return Err(Error::dim(format!(
                "kron_apply: expected {:?}, got {:?}",
                self.gamma.dim(),
                v.dim()
            )));
        }
        let mut out = self.psi_c.dot(v);
        out += &v.dot(&self.psi_r);
        out += &(&self.gamma * v);
        if self.lambda != 0.0 {
            out.scaled_add(self.lambda, v);
        }
        Ok(out)
    }

    /// The operator's diagonal, used as a Jacobi preconditioner.
    fn diagonal(&self) -> Matrix {
        let (n, m) = self.shape();
        Array2::from_shape_fn((n, m), |(i, j)| {
            self.psi_c[[i, i]] + self.psi_r[[j, j]] + self.gamma[[i, j]] + self.lambda
        })
    }

    /// Assembles the dense `nm x nm` matrix of the operator under
    /// column-stacking. Test oracles and the small-scale closed-form paths
    /// use this; it is quadratic in `nm`.
    pub fn to_dense(&self) -> Matrix {
        let (n, m) = self.shape();
        let nm = n * m;
        let mut out = Array2::<f64>::zeros((nm, nm));
        for j in 0..m {
            for i in 0..n {
                let p = i + j * n;
                for k in 0..n {
                    out[[p, k + j * n]] += self.psi_c[[i, k]];
                }
                for l in 0..m {
                    out[[p, i + l * n]] += self.psi_r[[j, l]];
                }
                out[[p, p]] += self.gamma[[i, j]] + self.lambda;
            }
        }
        out
    }
}

/// Applies the Kronecker-sum operator to a matrix; equals the dense operator
/// acting on `vec(v)`, reshaped.
pub fn kron_apply(op: &KronSumOperator, v: &Matrix) -> Result<Matrix> {
    op.apply(v)
}

/// Jacobi-preconditioned conjugate gradients on the Kronecker-sum operator.
///
/// Returns `X` with `|op(X) - rhs|_F <= tol |rhs|_F`. The operator must be
/// positive definite (`lambda > 0` or strictly positive `gamma`).
pub fn cg_solve(op: &KronSumOperator, rhs: &Matrix, tol: f64, max_iters: usize) -> Result<Matrix> {
    cg_solve_from(op, rhs, None, tol, max_iters)
}

/// [`cg_solve`] warm-started at `x0`; sequences of nearby systems converge in
/// far fewer iterations this way.
pub fn cg_solve_from(
    op: &KronSumOperator,
    rhs: &Matrix,
    x0: Option<&Matrix>,
    tol: f64,
    max_iters: usize,
) -> Result<Matrix> {
    if tol <= 0.0 {
        return Err(Error::invalid(format!("cg_solve: tol must be > 0, got {tol}")));
    }
    if rhs.dim() != op.shape() {
        return Err(Error::dim(format!(
            "cg_solve: rhs {:?} incompatible with operator {:?}",
            rhs.dim(),
            op.shape()
        )));
    }
    let precond = op.diagonal();
    if precond.iter().any(|d| *d <= 0.0) {
        return Err(Error::numerical(
            "cg_solve: operator diagonal not positive; system is not positive definite",
        ));
    }
    let rhs_norm = fro_norm(rhs);
    if rhs_norm == 0.0 {
        return Ok(Array2::zeros(op.shape()));
    }
    let mut x = match x0 {
        Some(x0) if x0.dim() == op.shape() => x0.clone(),
        _ => Array2::<f64>::zeros(op.shape()),
    };
    let mut r = rhs - &op.apply(&x)?;
    if fro_norm(&r) <= tol * rhs_norm {
        return Ok(x);
    }
    let mut z = &r / &precond;
    let mut p = z.clone();
    let mut rz = crate::matrix::fro_dot(&r, &z);
    for _ in 0..max_iters {
        let ap = op.apply(&p)?;
        let pap = crate::matrix::fro_dot(&p, &ap);
        if pap <= 0.0 {
            return Err(Error::numerical(
                "cg_solve: encountered non-positive curvature; operator not positive definite",
            ));
        }
        let alpha = rz / pap;
        x.scaled_add(alpha, &p);
        r.scaled_add(-alpha, &ap);
        if fro_norm(&r) <= tol * rhs_norm {
            return Ok(x);
        }
        z = &r / &precond;
        let rz_new = crate::matrix::fro_dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        p = &z + &(&p * beta);
    }
    Err(Error::NonConvergence(format!(
        "cg_solve: residual {:.3e} after {max_iters} iterations (target {:.3e})",
        fro_norm(&r) / rhs_norm,
        tol
    )))
}
