//! GROUP LASSO via ADMM in sharing form.
//!
//! Solves `min_X 0.5 ||A X - Y||_F^2 + lambda * sum_n ||X_{n,:}||_2` by
//! splitting `A X = sum_n A_{:,n} X_{n,:}` into per-device blocks `B_n` that
//! are only ever tracked through their average `B̄`. Every row update reads
//! iteration-k state only, so the N row updates are independent.

use std::io::Write;

use num_complex::Complex64;

use crate::complex::ComplexMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct AdmmConfig {
    pub lambda: f64,
    pub rho: f64,
    pub k_max: usize,
    pub eps_abs: f64,
    pub eps_rel: f64,
}

impl Default for AdmmConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            rho: 1.0,
            k_max: 200,
            eps_abs: 1e-6,
            eps_rel: 1e-4,
        }
    }
}

impl AdmmConfig {
    pub fn with_lambda(lambda: f64) -> Self {
        Self {
            lambda,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0) || !(self.lambda >= 0.0) || self.k_max == 0 {
            return Err(Error::InvalidParameter(format!(
                "ADMM needs rho > 0, lambda >= 0, k_max >= 1 (got {self:?})"
            )));
        }
        if !(self.eps_abs > 0.0) || !(self.eps_rel > 0.0) {
            return Err(Error::InvalidParameter(
                "ADMM tolerances must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct AdmmState {
    pub x: ComplexMatrix,
    /// Average of the auxiliary blocks.
    pub bbar: ComplexMatrix,
    /// Scaled dual variable.
    pub c: ComplexMatrix,
    /// Cached `(1/N) A X`.
    pub axbar: ComplexMatrix,
    pub col_norms2: Vec<f64>,
    pub k: usize,
}

impl AdmmState {
    /// All-zero initial state for pilots `a` and `m` antennas.
    pub fn new(a: &ComplexMatrix, m: usize) -> Result<Self> {
        let (l, n) = a.shape();
        let col_norms2: Vec<f64> = (0..n).map(|c| a.column_norm_sq(c)).collect();
        if let Some(zero) = col_norms2.iter().position(|v| !(*v > 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "pilot column {zero} has zero norm"
            )));
        }
        Ok(Self {
            x: ComplexMatrix::zeros(n, m),
            bbar: ComplexMatrix::zeros(l, m),
            c: ComplexMatrix::zeros(l, m),
            axbar: ComplexMatrix::zeros(l, m),
            col_norms2,
            k: 0,
        })
    }
}

/// Block soft-threshold `max{1 - lambda/(rho ||t||), 0} t / ||a_n||^2`.
fn shrink_row(t: &[Complex64], col_norm2: f64, lambda: f64, rho: f64) -> Vec<Complex64> {
    let norm = t.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    if rho * norm <= lambda {
        return vec![Complex64::new(0.0, 0.0); t.len()];
    }
    let scale = (1.0 - lambda / (rho * norm)) / col_norm2;
    t.iter().map(|v| v * scale).collect()
}

/// Closed-form minimizer of the row subproblem for device `n`.
pub fn row_update(
    state: &AdmmState,
    a: &ComplexMatrix,
    n: usize,
    config: &AdmmConfig,
) -> Vec<Complex64> {
    let (l, m) = state.bbar.shape();
    let mut t = vec![Complex64::new(0.0, 0.0); m];
    for r in 0..l {
        let an = a.get(r, n);
        for (j, tj) in t.iter_mut().enumerate() {
            let v = an * state.x.get(n, j) + state.bbar.get(r, j)
                - state.axbar.get(r, j)
                - state.c.get(r, j);
            *tj += an.conj() * v;
        }
    }
    shrink_row(&t, state.col_norms2[n], config.lambda, config.rho)
}

/// `B̄ = (Y + rho AX̄ + rho C) / (N + rho)`, with `AX̄` already at k+1.
pub fn bbar_update(
    state: &AdmmState,
    y: &ComplexMatrix,
    config: &AdmmConfig,
) -> Result<ComplexMatrix> {
    let n = state.x.rows() as f64;
    let rho = config.rho;
    let sum = y.add_scaled(&state.axbar, rho)?.add_scaled(&state.c, rho)?;
    Ok(sum.scaled(1.0 / (n + rho)))
}

/// `C + AX̄ - B̄`, with both at k+1.
pub fn dual_update(state: &AdmmState) -> Result<ComplexMatrix> {
    state.c.add(&state.axbar)?.sub(&state.bbar)
}

/// GROUP LASSO objective.
pub fn objective(
    a: &ComplexMatrix,
    x: &ComplexMatrix,
    y: &ComplexMatrix,
    lambda: f64,
) -> Result<f64> {
    let fit = a.matmul(x)?.sub(y)?.frobenius_norm_sq();
    let penalty: f64 = (0..x.rows()).map(|n| x.row_norm_sq(n).sqrt()).sum();
    Ok(0.5 * fit + lambda * penalty)
}

/// Subgradient optimality of a candidate solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimalityResidual {
    /// Max over nonzero rows of `||A_n^H (AX - Y) + lambda X_n/||X_n|| ||`.
    pub active: f64,
    /// Max over zero rows of `||A_n^H (AX - Y)|| - lambda`, floored at 0.
    pub inactive_excess: f64,
}

pub fn optimality_residual(
    a: &ComplexMatrix,
    x: &ComplexMatrix,
    y: &ComplexMatrix,
    lambda: f64,
) -> Result<OptimalityResidual> {
    let grad = a.adjoint().matmul(&a.matmul(x)?.sub(y)?)?;
    let mut out = OptimalityResidual {
        active: 0.0,
        inactive_excess: 0.0,
    };
    for n in 0..x.rows() {
        let row_norm = x.row_norm_sq(n).sqrt();
        if row_norm == 0.0 {
            let g = grad.row_norm_sq(n).sqrt();
            out.inactive_excess = out.inactive_excess.max(g - lambda);
        } else {
            let r: f64 = (0..x.cols())
                .map(|j| (grad.get(n, j) + x.get(n, j) * (lambda / row_norm)).norm_sqr())
                .sum::<f64>()
                .sqrt();
            out.active = out.active.max(r);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdmmIterate {
    pub iteration: usize,
    pub objective: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
}

#[derive(Debug, Clone)]
pub struct GroupLassoReport {
    pub x: ComplexMatrix,
    pub iterations: usize,
    pub converged: bool,
    pub history: Vec<AdmmIterate>,
}

impl GroupLassoReport {
    /// Writes `iteration,objective,primal_residual,dual_residual` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "iteration,objective,primal_residual,dual_residual")?;
        for it in &self.history {
            writeln!(
                out,
                "{},{:.17e},{:.17e},{:.17e}",
                it.iteration, it.objective, it.primal_residual, it.dual_residual
            )?;
        }
        Ok(())
    }
}

/// One full ADMM iteration: all rows, then `B̄`, then `C`. Returns
/// `(primal, dual)` residuals.
pub fn step(
    state: &mut AdmmState,
    a: &ComplexMatrix,
    a_adj: &ComplexMatrix,
    y: &ComplexMatrix,
    config: &AdmmConfig,
) -> Result<(f64, f64)> {
    let (n, m) = state.x.shape();
    // A^H (B̄ - AX̄ - C) is shared by every row's t vector.
    let w = state.bbar.sub(&state.axbar)?.sub(&state.c)?;
    let ahw = a_adj.matmul(&w)?;
    let mut next = ComplexMatrix::zeros(n, m);
    let mut t = vec![Complex64::new(0.0, 0.0); m];
    for row in 0..n {
        let norm2 = state.col_norms2[row];
        for (j, tj) in t.iter_mut().enumerate() {
            *tj = state.x.get(row, j) * norm2 + ahw.get(row, j);
        }
        next.set_row(row, &shrink_row(&t, norm2, config.lambda, config.rho));
    }
    state.x = next;
    state.axbar = a.matmul(&state.x)?.scaled(1.0 / n as f64);
    let bbar_next = bbar_update(state, y, config)?;
    let dual = config.rho * bbar_next.sub(&state.bbar)?.frobenius_norm();
    state.bbar = bbar_next;
    state.c = dual_update(state)?;
    state.k += 1;
    let primal = state.axbar.sub(&state.bbar)?.frobenius_norm();
    Ok((primal, dual))
}

pub fn solve_group_lasso(
    y: &ComplexMatrix,
    a: &ComplexMatrix,
    config: &AdmmConfig,
) -> Result<GroupLassoReport> {
    config.validate()?;
    if y.rows() != a.rows() {
        return Err(Error::DimensionMismatch {
            op: "solve_group_lasso",
            left: y.shape(),
            right: a.shape(),
        });
    }
    let n = a.cols() as f64;
    let a_adj = a.adjoint();
    let mut state = AdmmState::new(a, y.cols())?;
    let mut history = Vec::with_capacity(config.k_max.min(10_000));
    let mut converged = false;
    while state.k < config.k_max {
        let (primal, dual) = step(&mut state, a, &a_adj, y, config)?;
        if !state.x.is_finite() || !state.bbar.is_finite() || !primal.is_finite() {
            return Err(Error::Divergence {
                solver: "group-lasso",
                iteration: state.k,
            });
        }
        let fit = state.axbar.scaled(n).sub(y)?.frobenius_norm_sq();
        let penalty: f64 = (0..state.x.rows())
            .map(|r| state.x.row_norm_sq(r).sqrt())
            .sum();
        history.push(AdmmIterate {
            iteration: state.k,
            objective: 0.5 * fit + config.lambda * penalty,
            primal_residual: primal,
            dual_residual: dual,
        });
        let eps_pri = config.eps_abs
            + config.eps_rel
                * state
                    .axbar
                    .frobenius_norm()
                    .max(state.bbar.frobenius_norm());
        let eps_dual = config.eps_abs + config.eps_rel * config.rho * state.c.frobenius_norm();
        if primal <= eps_pri && dual <= eps_dual {
            converged = true;
            break;
        }
    }
    Ok(GroupLassoReport {
        iterations: state.k,
        x: state.x,
        converged,
        history,
    })
}
