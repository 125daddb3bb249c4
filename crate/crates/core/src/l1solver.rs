//! ℓ1-regularized sparse coding.
//!
//! [`homotopy_solve`] follows the piecewise-linear LASSO regularization path of
//!
//! ```text
//! F(x) = ½‖y − Ax‖₂² + λ‖x‖₁
//! ```
//!
//! from `λ₀ = ‖Aᵀy‖_∞` (where `x = 0`) downward. Between breakpoints the active
//! coefficients move along `G_SS⁻¹ s_S` (Gram matrix of the active columns,
//! signs of their correlations). A breakpoint is either an inactive column
//! whose correlation reaches `±λ` (entry) or an active coefficient reaching
//! zero (exit). The path is stopped at the first of: residual `‖y − Ax‖₂ ≤ ε`,
//! `λ ≤ lambda_min`, or the breakpoint budget. Stopping on the residual target
//! solves `min ‖x‖₁ s.t. ‖y − Ax‖₂ ≤ ε` exactly, since every point of the path
//! is a LASSO solution and the residual shrinks monotonically along it.
//!
//! [`ista_solve`] is an unrelated proximal-gradient solver for the same
//! objective, used to cross-check the path. [`kkt_check`] certifies
//! optimality via the subgradient conditions, and [`l0_brute_force`] solves
//! the combinatorial sparsest-fit problem on tiny instances.

use std::borrow::Cow;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Maximum column-norm deviation accepted by the solver.
pub const COLUMN_NORM_GUARD: f64 = 1e-6;
/// Schur-complement pivot below which an active-set Gram update is singular.
pub const PIVOT_TOL: f64 = 1e-12;
/// Consecutive singular entries tolerated before giving up.
pub const MAX_CONSECUTIVE_DROPS: usize = 3;

/// A tolerance either in absolute units or relative to a reference scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Tolerance {
    Absolute(f64),
    Relative(f64),
}

impl Tolerance {
    pub fn resolve(self, reference: f64) -> f64 {
        match self {
            Tolerance::Absolute(v) => v,
            Tolerance::Relative(v) => v * reference,
        }
    }

    fn value(self) -> f64 {
        match self {
            Tolerance::Absolute(v) | Tolerance::Relative(v) => v,
        }
    }
}

/// Parses `0.05` or `rel:0.05` as relative and `abs:0.001` as absolute.
impl FromStr for Tolerance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (ctor, num): (fn(f64) -> Tolerance, &str) = match s.split_once(':') {
            Some(("rel", v)) => (Tolerance::Relative, v),
            Some(("abs", v)) => (Tolerance::Absolute, v),
            Some(_) => return Err(Error::invalid(format!("unknown tolerance kind in {s:?}"))),
            None => (Tolerance::Relative, s),
        };
        let v: f64 = num
            .trim()
            .parse()
            .map_err(|_| Error::invalid(format!("bad tolerance {s:?}")))?;
        Ok(ctor(v))
    }
}

impl fmt::Display for Tolerance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tolerance::Relative(v) => write!(f, "rel:{v}"),
            Tolerance::Absolute(v) => write!(f, "abs:{v}"),
        }
    }
}

/// Stopping rules for [`homotopy_solve`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Residual target ε; relative values scale with `‖y‖₂`.
    pub epsilon: Tolerance,
    /// Path floor; relative values scale with `λ₀ = ‖Aᵀy‖_∞`.
    pub lambda_min: Tolerance,
    /// Breakpoint budget; `None` means `4·min(d, N)`.
    pub max_breakpoints: Option<usize>,
    pub kkt_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            epsilon: Tolerance::Relative(1e-3),
            lambda_min: Tolerance::Relative(1e-8),
            max_breakpoints: None,
            kkt_tol: 1e-8,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        let eps = self.epsilon.value();
        if !eps.is_finite() || eps < 0.0 {
            return Err(Error::invalid(format!("epsilon must be >= 0, got {eps}")));
        }
        let floor = self.lambda_min.value();
        if !floor.is_finite() || floor <= 0.0 {
            return Err(Error::invalid(format!(
                "lambda_min must be > 0, got {floor}"
            )));
        }
        if self.max_breakpoints == Some(0) {
            return Err(Error::invalid("max_breakpoints must be positive"));
        }
        if !self.kkt_tol.is_finite() || self.kkt_tol <= 0.0 {
            return Err(Error::invalid(format!(
                "kkt_tol must be > 0, got {}",
                self.kkt_tol
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopStatus {
    ResidualTarget,
    LambdaFloor,
    MaxIterations,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathEvent {
    /// Column joined the active set.
    Enter(usize),
    /// Active coefficient crossed zero and left.
    Leave(usize),
    /// Column would have made the active Gram matrix singular and was
    /// excluded from the rest of the path.
    Dropped(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Breakpoint {
    pub lambda: f64,
    pub event: PathEvent,
    /// `‖y − Ax‖₂` at this breakpoint.
    pub residual_norm: f64,
    pub active_len: usize,
}

/// Result of a homotopy solve.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseCode {
    pub x: DVector<f64>,
    pub lambda_final: f64,
    /// `λ₀ = ‖Aᵀy‖_∞`, the start of the path.
    pub lambda_max: f64,
    pub residual_norm: f64,
    pub active_set: Vec<usize>,
    /// Number of breakpoints traversed.
    pub iterations: usize,
    pub status: StopStatus,
    pub path: Vec<Breakpoint>,
}

impl SparseCode {
    pub fn l1_norm(&self) -> f64 {
        self.x.iter().map(|v| v.abs()).sum()
    }
}

pub fn soft_threshold(v: f64, t: f64) -> f64 {
    v.signum() * (v.abs() - t).max(0.0)
}

/// `½‖y − Ax‖₂² + λ‖x‖₁`.
pub fn objective(a: &DMatrix<f64>, y: &DVector<f64>, x: &DVector<f64>, lambda: f64) -> f64 {
    0.5 * (y - a * x).norm_squared() + lambda * x.iter().map(|v| v.abs()).sum::<f64>()
}

fn check_finite(what: &str, values: &[f64]) -> Result<()> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("{what} contains NaN or Inf")));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Active-set Cholesky
// ---------------------------------------------------------------------------

/// Lower-triangular factor `L` of the active Gram matrix, `G_SS = L Lᵀ`,
/// stored as ragged rows.
#[derive(Debug, Clone, Default)]
struct ActiveCholesky {
    rows: Vec<Vec<f64>>,
}

impl ActiveCholesky {
    #[cfg(test)]
    fn len(&self) -> usize {
        self.rows.len()
    }

    /// `L w = rhs`.
    fn forward(&self, rhs: &[f64]) -> Vec<f64> {
        let mut w = Vec::with_capacity(rhs.len());
        for (i, row) in self.rows.iter().enumerate() {
            let s: f64 = row[..i].iter().zip(&w).map(|(l, v)| l * v).sum();
            w.push((rhs[i] - s) / row[i]);
        }
        w
    }

    /// `G_SS z = rhs`.
    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        self.solve_leading(rhs)
    }

    /// Solves with the leading `rhs.len()` block, which is the factor of the
    /// first `rhs.len()` active columns.
    fn solve_leading(&self, rhs: &[f64]) -> Vec<f64> {
        let m = rhs.len();
        let mut w = Vec::with_capacity(m);
        for (i, row) in self.rows[..m].iter().enumerate() {
            let s: f64 = row[..i].iter().zip(&w).map(|(l, v)| l * v).sum();
            w.push((rhs[i] - s) / row[i]);
        }
        for i in (0..m).rev() {
            let s: f64 = (i + 1..m).map(|k| self.rows[k][i] * w[k]).sum();
            w[i] = (w[i] - s) / self.rows[i][i];
        }
        w
    }

    /// Appends a column with Gram entries `cross` (against the current
    /// active set) and `diag`. Returns false if the Schur pivot is below
    /// [`PIVOT_TOL`].
    fn try_push(&mut self, cross: &[f64], diag: f64) -> bool {
        let mut w = self.forward(cross);
        let pivot = diag - w.iter().map(|v| v * v).sum::<f64>();
        if pivot.is_nan() || pivot < PIVOT_TOL {
            return false;
        }
        w.push(pivot.sqrt());
        self.rows.push(w);
        true
    }

    /// Factors `g` from scratch.
    fn factor(g: &DMatrix<f64>) -> Option<Self> {
        let mut chol = Self::default();
        for j in 0..g.nrows() {
            let cross: Vec<f64> = (0..j).map(|i| g[(i, j)]).collect();
            if !chol.try_push(&cross, g[(j, j)]) {
                return None;
            }
        }
        Some(chol)
    }

    /// Deletes row/column `k` of `G_SS`, restoring triangularity with Givens
    /// rotations on the trailing columns.
    fn remove(&mut self, k: usize) {
        self.rows.remove(k);
        for i in k..self.rows.len() {
            // row i now has an extra entry at column i + 1 to annihilate
            let (a, b) = (self.rows[i][i], self.rows[i][i + 1]);
            let r = a.hypot(b);
            let (c, s) = (a / r, b / r);
            for row in &mut self.rows[i..] {
                let (p, q) = (row[i], row[i + 1]);
                row[i] = c * p + s * q;
                row[i + 1] = -s * p + c * q;
            }
            self.rows[i].truncate(i + 1);
            if self.rows[i][i] < 0.0 {
                for row in &mut self.rows[i..] {
                    row[i] = -row[i];
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Homotopy
// ---------------------------------------------------------------------------

/// Homotopy solver bound to one dictionary, caching its Gram matrix so that
/// many right-hand sides can be solved cheaply.
#[derive(Debug, Clone)]
pub struct HomotopySolver<'a> {
    atoms: &'a DMatrix<f64>,
    gram: Cow<'a, DMatrix<f64>>,
}

impl<'a> HomotopySolver<'a> {
    pub fn new(atoms: &'a DMatrix<f64>) -> Result<Self> {
        Self::validate_atoms(atoms)?;
        Ok(Self {
            atoms,
            gram: Cow::Owned(atoms.transpose() * atoms),
        })
    }

    /// Uses a precomputed `gram = AᵀA`.
    pub fn with_gram(atoms: &'a DMatrix<f64>, gram: &'a DMatrix<f64>) -> Result<Self> {
        Self::validate_atoms(atoms)?;
        if gram.shape() != (atoms.ncols(), atoms.ncols()) {
            return Err(Error::invalid(
                "Gram matrix shape does not match dictionary",
            ));
        }
        Ok(Self {
            atoms,
            gram: Cow::Borrowed(gram),
        })
    }

    fn validate_atoms(atoms: &DMatrix<f64>) -> Result<()> {
        if atoms.nrows() == 0 || atoms.ncols() == 0 {
            return Err(Error::invalid("empty dictionary"));
        }
        check_finite("dictionary", atoms.as_slice())?;
        for (j, col) in atoms.column_iter().enumerate() {
            let dev = (col.norm() - 1.0).abs();
            if dev > COLUMN_NORM_GUARD {
                return Err(Error::invalid(format!(
                    "column {j} norm deviates from 1 by {dev:.3e}"
                )));
            }
        }
        Ok(())
    }

    pub fn atoms(&self) -> &DMatrix<f64> {
        self.atoms
    }

    pub fn solve(&self, y: &DVector<f64>, opts: &SolverOptions) -> Result<SparseCode> {
        opts.validate()?;
        let (d, n) = self.atoms.shape();
        if y.len() != d {
            return Err(Error::invalid(format!(
                "signal has length {}, dictionary rows are {d}",
                y.len()
            )));
        }
        check_finite("signal", y.as_slice())?;

        let b = self.atoms.tr_mul(y);
        let y_norm = y.norm();
        let lambda0 = b.amax();
        let eps = opts.epsilon.resolve(y_norm);
        let floor = opts.lambda_min.resolve(lambda0);
        let budget = opts.max_breakpoints.unwrap_or(4 * d.min(n));

        let path = Path {
            solver: self,
            y,
            b: &b,
            lambda: lambda0,
            active: Vec::new(),
            signs: Vec::new(),
            coef: Vec::new(),
            chol: ActiveCholesky::default(),
            blocked: vec![false; n],
        };

        if y_norm <= eps {
            return Ok(path.finish(lambda0, StopStatus::ResidualTarget, 0, Vec::new()));
        }
        if lambda0 <= floor {
            return Ok(path.finish(lambda0, StopStatus::LambdaFloor, 0, Vec::new()));
        }
        path.run(lambda0, eps * (1.0 - 1e-9), floor, budget, opts.kkt_tol)
    }
}

/// Mutable state of one path traversal.
struct Path<'s, 'a> {
    solver: &'s HomotopySolver<'a>,
    y: &'s DVector<f64>,
    b: &'s DVector<f64>,
    lambda: f64,
    active: Vec<usize>,
    signs: Vec<f64>,
    coef: Vec<f64>,
    chol: ActiveCholesky,
    blocked: Vec<bool>,
}

#[derive(Clone, Copy)]
enum Candidate {
    Enter(usize),
    Leave(usize),
}

impl Path<'_, '_> {
    fn gram(&self, i: usize, j: usize) -> f64 {
        self.solver.gram[(i, j)]
    }

    /// Correlations `Aᵀ(y − Ax)` over all columns.
    fn correlations(&self) -> DVector<f64> {
        let mut c = self.b.clone();
        for (&j, &xj) in self.active.iter().zip(&self.coef) {
            c.axpy(-xj, &self.solver.gram.column(j), 1.0);
        }
        c
    }

    fn residual(&self) -> DVector<f64> {
        let mut r = self.y.clone();
        for (&j, &xj) in self.active.iter().zip(&self.coef) {
            r.axpy(-xj, &self.solver.atoms.column(j), 1.0);
        }
        r
    }

    /// Recomputes active coefficients from the path equation
    /// `G_SS x_S = b_S − λ s_S`.
    fn polish(&mut self) {
        let rhs: Vec<f64> = self
            .active
            .iter()
            .zip(&self.signs)
            .map(|(&j, s)| self.b[j] - self.lambda * s)
            .collect();
        self.coef = self.chol.solve(&rhs);
    }

    fn polish_without_entrant(&mut self) {
        let m = self.active.len() - 1;
        let rhs: Vec<f64> = self.active[..m]
            .iter()
            .zip(&self.signs)
            .map(|(&j, s)| self.b[j] - self.lambda * s)
            .collect();
        self.coef = self.chol.solve_leading(&rhs);
        self.coef.push(0.0);
    }

    fn try_enter(&mut self, j: usize, sign: f64) -> bool {
        let cross: Vec<f64> = self.active.iter().map(|&i| self.gram(i, j)).collect();
        let mut entered = self.chol.try_push(&cross, self.gram(j, j));
        if !entered {
            let mut idx = self.active.clone();
            idx.push(j);
            let sub = DMatrix::from_fn(idx.len(), idx.len(), |r, c| self.gram(idx[r], idx[c]));
            if let Some(fresh) = ActiveCholesky::factor(&sub) {
                self.chol = fresh;
                entered = true;
            }
        }
        if entered {
            self.active.push(j);
            self.signs.push(sign);
            self.coef.push(0.0);
        }
        entered
    }

    /// Re-solves after an entry and checks the active equations hold to
    /// `tol`. A miss means the factor is too ill-conditioned to trust, and
    /// the entrant is backed out.
    fn settles(&mut self, tol: f64) -> bool {
        self.polish();
        let c = self.correlations();
        let ok = self
            .active
            .iter()
            .zip(&self.signs)
            .all(|(&j, s)| (c[j] - self.lambda * s).abs() <= tol);
        if !ok {
            self.leave(self.active.len() - 1);
        }
        ok
    }

    fn leave(&mut self, pos: usize) {
        self.active.remove(pos);
        self.signs.remove(pos);
        self.coef.remove(pos);
        self.chol.remove(pos);
    }

    fn run(
        mut self,
        lambda0: f64,
        eps: f64,
        floor: f64,
        budget: usize,
        kkt_tol: f64,
    ) -> Result<SparseCode> {
        let mut breakpoints = Vec::new();
        let mut drops = 0usize;
        // (column, sign of its correlation when it left)
        let mut just_left: Option<(usize, f64)> = None;
        let mut just_entered: Option<usize> = None;

        // first column enters at λ₀; lowest index wins ties
        let first = (0..self.b.len())
            .find(|&j| self.b[j].abs() == lambda0)
            .expect("λ₀ attained");
        let mut pending = Some(Candidate::Enter(first));
        let mut iterations = 0usize;

        loop {
            if let Some(event) = pending.take() {
                let recorded = match event {
                    Candidate::Enter(j) => {
                        let c = self.correlations();
                        if self.try_enter(j, c[j].signum()) && self.settles(kkt_tol) {
                            drops = 0;
                            just_entered = Some(j);
                            just_left = None;
                            PathEvent::Enter(j)
                        } else {
                            self.blocked[j] = true;
                            drops += 1;
                            if drops >= MAX_CONSECUTIVE_DROPS {
                                return Err(Error::Numerical(format!(
                                    "active-set system singular after {drops} consecutive drops (last column {j})"
                                )));
                            }
                            PathEvent::Dropped(j)
                        }
                    }
                    Candidate::Leave(j) => {
                        let pos = self.active.iter().position(|&a| a == j).unwrap();
                        just_left = Some((j, self.signs[pos]));
                        self.leave(pos);
                        just_entered = None;
                        PathEvent::Leave(j)
                    }
                };
                if let PathEvent::Enter(_) = recorded {
                    // the entrant is zero here; solving for it as well would
                    // push the error of the step length into its coefficient
                    self.polish_without_entrant();
                } else {
                    self.polish();
                }
                iterations += 1;
                breakpoints.push(Breakpoint {
                    lambda: self.lambda,
                    event: recorded,
                    residual_norm: self.residual().norm(),
                    active_len: self.active.len(),
                });
                if iterations >= budget {
                    return Ok(self.finish(
                        lambda0,
                        StopStatus::MaxIterations,
                        iterations,
                        breakpoints,
                    ));
                }
            }

            let r0 = self.residual();
            if r0.norm_squared() <= eps * eps {
                return Ok(self.finish(
                    lambda0,
                    StopStatus::ResidualTarget,
                    iterations,
                    breakpoints,
                ));
            }

            // direction of the active coefficients per unit decrease of λ
            let dir = self.chol.solve(&self.signs);
            let n = self.b.len();
            let mut v = DVector::zeros(n);
            for (&j, &dj) in self.active.iter().zip(&dir) {
                v.axpy(dj, &self.solver.gram.column(j), 1.0);
            }
            let c = self.correlations();
            let lambda = self.lambda;

            let mut in_active = vec![false; n];
            for &j in &self.active {
                in_active[j] = true;
            }

            let mut best_enter: Option<(f64, usize)> = None;
            for j in 0..n {
                if in_active[j] || self.blocked[j] {
                    continue;
                }
                // a column that just left may only come back with the other sign
                let left_sign = just_left.and_then(|(jl, s)| (jl == j).then_some(s));
                let mut g = f64::INFINITY;
                let up = 1.0 - v[j];
                if up > 1e-14 && left_sign != Some(1.0) {
                    let t = (lambda - c[j]) / up;
                    if t > 0.0 {
                        g = g.min(t);
                    }
                }
                let down = 1.0 + v[j];
                if down > 1e-14 && left_sign != Some(-1.0) {
                    let t = (lambda + c[j]) / down;
                    if t > 0.0 {
                        g = g.min(t);
                    }
                }
                if g.is_finite() && best_enter.is_none_or(|(bg, _)| g < bg) {
                    best_enter = Some((g, j));
                }
            }

            let mut best_leave: Option<(f64, usize)> = None;
            for ((&j, &xj), &dj) in self.active.iter().zip(&self.coef).zip(&dir) {
                if just_entered == Some(j) || dj == 0.0 {
                    continue;
                }
                let t = -xj / dj;
                if t > 0.0 && best_leave.is_none_or(|(bg, bj)| t < bg || (t == bg && j < bj)) {
                    best_leave = Some((t, j));
                }
            }

            let (gamma_event, event) = match (best_enter, best_leave) {
                (Some((ge, je)), Some((gl, _))) if ge <= gl => (ge, Some(Candidate::Enter(je))),
                (_, Some((gl, jl))) => (gl, Some(Candidate::Leave(jl))),
                (Some((ge, je)), None) => (ge, Some(Candidate::Enter(je))),
                (None, None) => (f64::INFINITY, None),
            };

            // On this segment r(μ) = r_ls + μ·u with u = A_S G_SS⁻¹ s and r_ls
            // the least-squares residual on the active set, so
            // ‖r(μ)‖² = ‖r_ls‖² + μ²q. Forming r_ls as a vector keeps the
            // target accurate when ε is far below ‖r₀‖.
            let q: f64 = self.signs.iter().zip(&dir).map(|(s, d)| s * d).sum();
            let mut r_ls = r0;
            for (&j, &dj) in self.active.iter().zip(&dir) {
                r_ls.axpy(-lambda * dj, &self.solver.atoms.column(j), 1.0);
            }
            let slack = eps * eps - r_ls.norm_squared();
            let gamma_eps = if q > 0.0 && slack > 0.0 {
                lambda - (slack / q).sqrt()
            } else {
                f64::INFINITY
            };
            let gamma_floor = lambda - floor;

            let (gamma, stop) = if gamma_eps <= gamma_event.min(gamma_floor) {
                (gamma_eps, Some(StopStatus::ResidualTarget))
            } else if gamma_floor <= gamma_event {
                (gamma_floor, Some(StopStatus::LambdaFloor))
            } else {
                (gamma_event, None)
            };

            for (xj, dj) in self.coef.iter_mut().zip(&dir) {
                *xj += gamma * dj;
            }
            self.lambda = match stop {
                Some(StopStatus::LambdaFloor) => floor,
                _ => lambda - gamma,
            };

            if let Some(status) = stop {
                self.polish();
                return Ok(self.finish(lambda0, status, iterations, breakpoints));
            }
            pending = event;
        }
    }

    fn finish(
        self,
        lambda0: f64,
        status: StopStatus,
        iterations: usize,
        path: Vec<Breakpoint>,
    ) -> SparseCode {
        let n = self.b.len();
        let mut x = DVector::zeros(n);
        for ((&j, &xj), &s) in self.active.iter().zip(&self.coef).zip(&self.signs) {
            // a sign opposite to the correlation can only be rounding noise at zero
            if xj * s > 0.0 {
                x[j] = xj;
            }
        }
        let residual_norm = (self.y - self.solver.atoms * &x).norm();
        let active_set = (0..n).filter(|&j| x[j] != 0.0).collect();
        SparseCode {
            x,
            lambda_final: self.lambda,
            lambda_max: lambda0,
            residual_norm,
            active_set,
            iterations,
            status,
            path,
        }
    }
}

/// One-shot homotopy solve; see [`HomotopySolver`] to amortize the Gram
/// matrix across many signals.
pub fn homotopy_solve(
    a: &DMatrix<f64>,
    y: &DVector<f64>,
    opts: &SolverOptions,
) -> Result<SparseCode> {
    HomotopySolver::new(a)?.solve(y, opts)
}

// ---------------------------------------------------------------------------
// Reference solvers and certificates
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct IstaResult {
    pub x: DVector<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Largest eigenvalue of `AᵀA` by power iteration.
pub fn spectral_norm_sq(a: &DMatrix<f64>) -> f64 {
    let gram = a.transpose() * a;
    let n = gram.nrows();
    let mut v = DVector::from_fn(n, |i, _| 1.0 + (i as f64) * 1e-3);
    v /= v.norm();
    let mut estimate = 0.0;
    for _ in 0..5000 {
        let w = &gram * &v;
        let next = v.dot(&w);
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        v = w / norm;
        if (next - estimate).abs() <= 1e-14 * next.abs() {
            return next;
        }
        estimate = next;
    }
    estimate
}

/// Iterative shrinkage-thresholding for `½‖y − Ax‖₂² + λ‖x‖₁`.
///
/// Uses step `1/L` with `L` a slightly inflated power-iteration estimate of
/// `‖AᵀA‖₂`, which keeps the objective non-increasing. Stops when one step
/// lowers the objective by less than `tol`.
pub fn ista_solve(
    a: &DMatrix<f64>,
    y: &DVector<f64>,
    lambda: f64,
    tol: f64,
    max_iter: usize,
) -> Result<IstaResult> {
    if !lambda.is_finite() || lambda <= 0.0 {
        return Err(Error::invalid(format!("lambda must be > 0, got {lambda}")));
    }
    if y.len() != a.nrows() {
        return Err(Error::invalid(
            "signal length does not match dictionary rows",
        ));
    }
    check_finite("dictionary", a.as_slice())?;
    check_finite("signal", y.as_slice())?;

    let lipschitz = spectral_norm_sq(a) * 1.01;
    let n = a.ncols();
    let mut x = DVector::zeros(n);
    let mut value = objective(a, y, &x, lambda);
    if lipschitz == 0.0 {
        return Ok(IstaResult {
            x,
            objective: value,
            iterations: 0,
            converged: true,
        });
    }
    let step = 1.0 / lipschitz;
    let aty = a.tr_mul(y);
    let gram = a.transpose() * a;

    for it in 1..=max_iter {
        let grad = &gram * &x - &aty;
        let next = (&x - grad * step).map(|v| soft_threshold(v, lambda * step));
        let next_value = objective(a, y, &next, lambda);
        let decrease = value - next_value;
        x = next;
        value = next_value;
        if decrease < tol {
            return Ok(IstaResult {
                x,
                objective: value,
                iterations: it,
                converged: true,
            });
        }
    }
    Ok(IstaResult {
        x,
        objective: value,
        iterations: max_iter,
        converged: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktReport {
    pub max_violation: f64,
    pub feasible: bool,
}

/// Checks the subgradient optimality conditions of the λ-objective:
/// `|a_iᵀr| ≤ λ` on inactive columns and `a_iᵀr = λ·sign(x_i)` on active ones,
/// with `r = y − Ax`.
pub fn kkt_check(
    a: &DMatrix<f64>,
    y: &DVector<f64>,
    x: &DVector<f64>,
    lambda: f64,
    tol: f64,
) -> KktReport {
    let c = a.tr_mul(&(y - a * x));
    let max_violation = c
        .iter()
        .zip(x.iter())
        .map(|(&ci, &xi)| {
            if xi == 0.0 {
                (ci.abs() - lambda).max(0.0)
            } else {
                (ci - lambda * xi.signum()).abs()
            }
        })
        .fold(0.0, f64::max);
    KktReport {
        max_violation,
        feasible: max_violation <= tol,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum L0Outcome {
    Feasible {
        x: DVector<f64>,
        support: Vec<usize>,
        residual_norm: f64,
    },
    Infeasible {
        best_residual: f64,
    },
}

/// Advances `comb` to the next lexicographic k-subset of `0..n`.
fn next_combination(comb: &mut [usize], n: usize) -> bool {
    let k = comb.len();
    for i in (0..k).rev() {
        if comb[i] < n - k + i {
            comb[i] += 1;
            for j in i + 1..k {
                comb[j] = comb[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Sparsest `x` with `‖y − Ax‖₂ ≤ ε`, by exhaustive search over supports of
/// increasing size. Within the minimal size, the smallest residual wins, then
/// the lexicographically first support.
pub fn l0_brute_force(
    a: &DMatrix<f64>,
    y: &DVector<f64>,
    epsilon: f64,
    max_support: usize,
) -> Result<L0Outcome> {
    let (d, n) = a.shape();
    if n > 20 || max_support > 5 {
        return Err(Error::invalid(format!(
            "brute force limited to N <= 20 and support <= 5, got N={n}, support={max_support}"
        )));
    }
    if y.len() != d {
        return Err(Error::invalid(
            "signal length does not match dictionary rows",
        ));
    }
    check_finite("dictionary", a.as_slice())?;
    check_finite("signal", y.as_slice())?;

    let mut best_residual = y.norm();
    if best_residual <= epsilon {
        return Ok(L0Outcome::Feasible {
            x: DVector::zeros(n),
            support: Vec::new(),
            residual_norm: best_residual,
        });
    }
    for k in 1..=max_support.min(n) {
        let mut comb: Vec<usize> = (0..k).collect();
        let mut winner: Option<(f64, Vec<usize>, DVector<f64>)> = None;
        loop {
            let sub = a.select_columns(&comb);
            let coef = sub
                .clone()
                .svd(true, true)
                .solve(y, 1e-12)
                .map_err(|e| Error::Numerical(format!("least squares failed: {e}")))?;
            let res = (y - &sub * &coef).norm();
            best_residual = best_residual.min(res);
            if res <= epsilon && winner.as_ref().is_none_or(|(r, _, _)| res < *r) {
                winner = Some((res, comb.clone(), coef));
            }
            if !next_combination(&mut comb, n) {
                break;
            }
        }
        if let Some((residual_norm, support, coef)) = winner {
            let mut x = DVector::zeros(n);
            for (&j, &v) in support.iter().zip(coef.iter()) {
                x[j] = v;
            }
            return Ok(L0Outcome::Feasible {
                x,
                support,
                residual_norm,
            });
        }
    }
    Ok(L0Outcome::Infeasible { best_residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_dictionary(rng: &mut ChaCha8Rng, d: usize, n: usize) -> DMatrix<f64> {
        let mut a = DMatrix::from_fn(d, n, |_, _| rng.sample::<f64, _>(StandardNormal));
        for mut col in a.column_iter_mut() {
            let norm = col.norm();
            col /= norm;
        }
        a
    }

    fn random_signal(rng: &mut ChaCha8Rng, d: usize) -> DVector<f64> {
        DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal))
    }

    #[test]
    fn zero_signal_gives_zero_code() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = random_dictionary(&mut rng, 8, 12);
        let code = homotopy_solve(&a, &DVector::zeros(8), &SolverOptions::default()).unwrap();
        assert_eq!(code.status, StopStatus::ResidualTarget);
        assert_eq!(code.lambda_final, 0.0);
        assert!(code.x.iter().all(|v| *v == 0.0));
        assert!(code.active_set.is_empty());
    }

    #[test]
    fn orthonormal_dictionary_soft_thresholds() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let q = random_dictionary(&mut rng, 10, 10).qr().q();
        let y = random_signal(&mut rng, 10);
        let opts = SolverOptions {
            epsilon: Tolerance::Absolute(0.0),
            lambda_min: Tolerance::Relative(0.3),
            ..Default::default()
        };
        let code = homotopy_solve(&q, &y, &opts).unwrap();
        assert_eq!(code.status, StopStatus::LambdaFloor);
        let corr = q.tr_mul(&y);
        for i in 0..10 {
            let expected = soft_threshold(corr[i], code.lambda_final);
            assert!(
                (code.x[i] - expected).abs() <= 1e-12,
                "{i}: {} vs {expected}",
                code.x[i]
            );
        }
    }

    #[test]
    fn rejects_unnormalized_and_nan() {
        let mut a = DMatrix::identity(4, 4);
        a[(0, 0)] = 1.1;
        let y = DVector::from_element(4, 1.0);
        assert!(matches!(
            homotopy_solve(&a, &y, &SolverOptions::default()),
            Err(Error::InvalidArgument(_))
        ));
        let a = DMatrix::identity(4, 4);
        let mut bad = y.clone();
        bad[2] = f64::NAN;
        assert!(homotopy_solve(&a, &bad, &SolverOptions::default()).is_err());
        assert!(homotopy_solve(&a, &DVector::zeros(3), &SolverOptions::default()).is_err());
    }

    #[test]
    fn rejects_bad_options() {
        let a = DMatrix::identity(3, 3);
        let y = DVector::from_element(3, 1.0);
        let bad = SolverOptions {
            lambda_min: Tolerance::Absolute(0.0),
            ..Default::default()
        };
        assert!(homotopy_solve(&a, &y, &bad).is_err());
        let bad = SolverOptions {
            max_breakpoints: Some(0),
            ..Default::default()
        };
        assert!(homotopy_solve(&a, &y, &bad).is_err());
    }

    #[test]
    fn matches_ista_on_random_instance() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let a = random_dictionary(&mut rng, 16, 32);
        let y = random_signal(&mut rng, 16);
        let opts = SolverOptions {
            epsilon: Tolerance::Absolute(1e-6),
            lambda_min: Tolerance::Absolute(1e-8),
            ..Default::default()
        };
        let code = homotopy_solve(&a, &y, &opts).unwrap();
        let lambda = code.lambda_final;
        let reference = ista_solve(&a, &y, lambda, 1e-12, 1_000_000).unwrap();
        let f_path = objective(&a, &y, &code.x, lambda);
        let rel = (f_path - reference.objective).abs() / reference.objective.max(1.0);
        assert!(
            rel <= 1e-6,
            "homotopy {f_path} ista {} rel {rel}",
            reference.objective
        );
    }

    #[test]
    fn kkt_holds_and_path_decreases() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let d = rng.random_range(8..=32);
            let n = rng.random_range(16..=64);
            let a = random_dictionary(&mut rng, d, n);
            let y = random_signal(&mut rng, d);
            let code = homotopy_solve(&a, &y, &SolverOptions::default()).unwrap();
            let report = kkt_check(&a, &y, &code.x, code.lambda_final, 1e-8);
            assert!(report.feasible, "violation {}", report.max_violation);
            for w in code.path.windows(2) {
                assert!(w[1].lambda < w[0].lambda);
            }
            assert!(code.lambda_final <= code.path.last().unwrap().lambda);
            let recomputed = (&y - &a * &code.x).norm();
            assert!((recomputed - code.residual_norm).abs() <= 1e-10 * recomputed.max(1e-300));
        }
    }

    #[test]
    fn residual_target_contract() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let a = random_dictionary(&mut rng, 20, 40);
            let y = random_signal(&mut rng, 20);
            let opts = SolverOptions {
                epsilon: Tolerance::Relative(0.2),
                ..Default::default()
            };
            let code = homotopy_solve(&a, &y, &opts).unwrap();
            let eps = 0.2 * y.norm();
            assert_eq!(code.status, StopStatus::ResidualTarget);
            assert!(code.residual_norm <= eps);
            assert!(code.path.last().unwrap().residual_norm > eps);
        }
    }

    #[test]
    fn breakpoint_budget() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = random_dictionary(&mut rng, 16, 32);
        let y = random_signal(&mut rng, 16);
        let opts = SolverOptions {
            max_breakpoints: Some(3),
            ..Default::default()
        };
        let code = homotopy_solve(&a, &y, &opts).unwrap();
        assert_eq!(code.status, StopStatus::MaxIterations);
        assert_eq!(code.iterations, 3);
        assert!(kkt_check(&a, &y, &code.x, code.lambda_final, 1e-8).feasible);
    }

    /// Pairs of columns differing by a perturbation of size `pert`.
    fn twin_dictionary(rng: &mut ChaCha8Rng, d: usize, pairs: usize, pert: f64) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(d, 2 * pairs);
        for p in 0..pairs {
            for i in 0..d {
                let v: f64 = rng.random::<f64>() - 0.5;
                a[(i, 2 * p)] = v;
                a[(i, 2 * p + 1)] = v + pert * (rng.random::<f64>() - 0.5);
            }
        }
        for mut col in a.column_iter_mut() {
            let n = col.norm();
            col /= n;
        }
        a
    }

    fn deep_opts() -> SolverOptions {
        SolverOptions {
            epsilon: Tolerance::Absolute(1e-9),
            ..Default::default()
        }
    }

    #[test]
    fn exact_duplicate_rejected_by_factor() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let a = random_dictionary(&mut rng, 8, 3);
        let g = a.transpose() * &a;
        let mut chol = ActiveCholesky::factor(&g.view((0, 0), (2, 2)).into_owned()).unwrap();
        // column 0 again
        assert!(!chol.try_push(&[g[(0, 0)], g[(1, 0)]], g[(0, 0)]));
        assert_eq!(chol.len(), 2);
        assert!(chol.try_push(&[g[(0, 2)], g[(1, 2)]], g[(2, 2)]));
    }

    #[test]
    fn exact_duplicates_keep_path_optimal() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let mut a = random_dictionary(&mut rng, 12, 20);
        let col = a.column(3).clone_owned();
        a.set_column(7, &col);
        let y = random_signal(&mut rng, 12);
        let code = homotopy_solve(&a, &y, &SolverOptions::default()).unwrap();
        assert!(!(code.active_set.contains(&3) && code.active_set.contains(&7)));
        assert!(kkt_check(&a, &y, &code.x, code.lambda_final, 1e-8).feasible);
    }

    #[test]
    fn near_duplicates_are_dropped() {
        let found = (0..100u64).find_map(|seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = twin_dictionary(&mut rng, 12, 6, 1e-8);
            let y = random_signal(&mut rng, 12);
            let code = homotopy_solve(&a, &y, &deep_opts()).ok()?;
            code.path
                .iter()
                .find_map(|b| match b.event {
                    PathEvent::Dropped(j) => Some(j),
                    _ => None,
                })
                .map(|j| (code, j))
        });
        let (code, j) = found.expect("some instance drops a column");
        assert_eq!(code.x[j], 0.0);
        assert!(!code.active_set.contains(&j));
    }

    #[test]
    fn repeated_drops_are_numerical_error() {
        let hit = (0..100u64).any(|seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = twin_dictionary(&mut rng, 12, 6, 1e-7);
            let y = random_signal(&mut rng, 12);
            matches!(
                homotopy_solve(&a, &y, &deep_opts()),
                Err(Error::Numerical(_))
            )
        });
        assert!(hit);
    }

    #[test]
    fn cholesky_remove_matches_refactor() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = random_dictionary(&mut rng, 10, 6);
        let g = a.transpose() * &a;
        let mut chol = ActiveCholesky::factor(&g).unwrap();
        chol.remove(2);
        let keep = [0, 1, 3, 4, 5];
        let sub = DMatrix::from_fn(5, 5, |r, c| g[(keep[r], keep[c])]);
        let fresh = ActiveCholesky::factor(&sub).unwrap();
        for (r1, r2) in chol.rows.iter().zip(&fresh.rows) {
            for (u, v) in r1.iter().zip(r2) {
                assert!((u - v).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn ista_zero_when_lambda_dominates() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_dictionary(&mut rng, 8, 16);
        let y = random_signal(&mut rng, 8);
        let lambda = a.tr_mul(&y).amax();
        let res = ista_solve(&a, &y, lambda, 1e-14, 1000).unwrap();
        assert!(res.x.iter().all(|v| *v == 0.0));
        assert!(res.converged);
    }

    #[test]
    fn ista_single_column_soft_threshold() {
        let a = DMatrix::from_column_slice(3, 1, &[0.6, 0.0, 0.8]);
        let y = DVector::from_column_slice(&[2.0, -1.0, 1.0]);
        let res = ista_solve(&a, &y, 0.5, 0.0, 10_000).unwrap();
        let expected = soft_threshold(a.column(0).dot(&y), 0.5);
        assert!((res.x[0] - expected).abs() < 1e-10);
    }

    #[test]
    fn ista_is_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random_dictionary(&mut rng, 8, 16);
        let y = random_signal(&mut rng, 8);
        let lambda = 0.1;
        let mut last = f64::INFINITY;
        for iters in [1, 2, 5, 10, 50, 200] {
            let res = ista_solve(&a, &y, lambda, 0.0, iters).unwrap();
            assert!(res.objective <= last + 1e-15);
            last = res.objective;
        }
        assert!(ista_solve(&a, &y, 0.0, 1e-9, 10).is_err());
    }

    /// Exhaustive LASSO oracle over sign patterns with support ≤ 4.
    fn enumerate_lasso(a: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> (f64, DVector<f64>) {
        let n = a.ncols();
        let mut best = (
            objective(a, y, &DVector::zeros(n), lambda),
            DVector::zeros(n),
        );
        for k in 1..=4 {
            let mut comb: Vec<usize> = (0..k).collect();
            loop {
                let sub = a.select_columns(&comb);
                let g = sub.transpose() * &sub;
                let rhs0 = sub.tr_mul(y);
                for pattern in 0..(1u32 << k) {
                    let s =
                        DVector::from_fn(k, |i, _| if pattern >> i & 1 == 1 { -1.0 } else { 1.0 });
                    let Some(sol) = g.clone().lu().solve(&(&rhs0 - &s * lambda)) else {
                        continue;
                    };
                    if (0..k).any(|i| sol[i] * s[i] <= 0.0) {
                        continue;
                    }
                    let mut x = DVector::zeros(n);
                    for (i, &j) in comb.iter().enumerate() {
                        x[j] = sol[i];
                    }
                    let f = objective(a, y, &x, lambda);
                    if f < best.0 {
                        best = (f, x);
                    }
                }
                if !next_combination(&mut comb, n) {
                    break;
                }
            }
        }
        best
    }

    #[test]
    fn ista_matches_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let a = random_dictionary(&mut rng, 8, 16);
        let y = random_signal(&mut rng, 8);
        let lambda = 0.4 * a.tr_mul(&y).amax();
        let (f_star, x_star) = enumerate_lasso(&a, &y, lambda);
        // the enumerated candidate must be a global optimum
        assert!(kkt_check(&a, &y, &x_star, lambda, 1e-9).feasible);
        let res = ista_solve(&a, &y, lambda, 1e-15, 1_000_000).unwrap();
        assert!(
            (res.objective - f_star).abs() <= 1e-8,
            "{} vs {f_star}",
            res.objective
        );
    }

    #[test]
    fn kkt_check_at_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let a = random_dictionary(&mut rng, 8, 10);
        let y = random_signal(&mut rng, 8);
        let lmax = a.tr_mul(&y).amax();
        let zero = DVector::zeros(10);
        assert!(kkt_check(&a, &y, &zero, lmax, 1e-12).feasible);
        let report = kkt_check(&a, &y, &zero, 0.5 * lmax, 1e-12);
        assert!(!report.feasible);
        assert!((report.max_violation - 0.5 * lmax).abs() < 1e-12);
    }

    #[test]
    fn l0_single_atom() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let a = random_dictionary(&mut rng, 8, 12);
        let y = a.column(5) * 3.0;
        match l0_brute_force(&a, &y, 1e-9, 3).unwrap() {
            L0Outcome::Feasible { x, support, .. } => {
                assert_eq!(support, vec![5]);
                assert!((x[5] - 3.0).abs() < 1e-12);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn l0_zero_signal() {
        let a = DMatrix::identity(4, 4);
        match l0_brute_force(&a, &DVector::zeros(4), 0.1, 2).unwrap() {
            L0Outcome::Feasible { support, x, .. } => {
                assert!(support.is_empty());
                assert!(x.iter().all(|v| *v == 0.0));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn l0_infeasible_and_limits() {
        let a = DMatrix::identity(4, 4);
        let y = DVector::from_element(4, 1.0);
        assert!(matches!(
            l0_brute_force(&a, &y, 1e-6, 2).unwrap(),
            L0Outcome::Infeasible { .. }
        ));
        assert!(l0_brute_force(&DMatrix::identity(21, 21), &DVector::zeros(21), 0.1, 2).is_err());
        assert!(l0_brute_force(&a, &y, 0.1, 6).is_err());
    }

    #[test]
    fn combinations_are_lexicographic() {
        let mut comb = vec![0, 1];
        let mut seen = vec![comb.clone()];
        while next_combination(&mut comb, 4) {
            seen.push(comb.clone());
        }
        assert_eq!(
            seen,
            vec![
                vec![0, 1],
                vec![0, 2],
                vec![0, 3],
                vec![1, 2],
                vec![1, 3],
                vec![2, 3]
            ]
        );
    }
}
