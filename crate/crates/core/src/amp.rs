//! Approximate message passing with a per-device Bernoulli-Gaussian MMSE
//! denoiser.
//!
//! Each device `n` has its own activity prior `eps[n]`; active rows of `X`
//! are CN(0, I_M). The pseudo-observation of row `n` is modelled as the true
//! row plus CN(0, tau^2 I_M) noise, where `tau^2 = ||R||_F^2 / (M L)`.
//!
//! The denoiser assumes pilots with unit-norm columns. With
//! [`AmpConfig::normalize_pilots`] set, `solve_amp` divides both `A` and `Y`
//! by `sqrt(L)` before iterating, which maps pilots with `||a_n|| = sqrt(L)`
//! onto that scale without changing `X`.

use num_complex::Complex64;

use crate::complex::ComplexMatrix;
use crate::error::{Error, Result};

const RATIO_MIN: f64 = 1e-300;
const RATIO_MAX: f64 = 1e300;

/// How the Onsager correction matrix is assembled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OnsagerForm {
    /// `(1/L) R sum_n J_n`, with `J_n` the exact M×M Jacobian of the
    /// denoiser at device `n`.
    #[default]
    Jacobian,
    /// `(N/L) R sum_n (f_n + t_n ||u_n||^2 / ((tau^2+1)^2 tau^4 (1+t_n)^2)) I`,
    /// the scalar form printed alongside the algorithm.
    AsWritten,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AmpConfig {
    pub eps: Vec<f64>,
    pub k_max: usize,
    pub tau_floor: f64,
    /// `X <- (1 - damping) * denoised + damping * X`; zero disables it.
    pub damping: f64,
    pub onsager: OnsagerForm,
    pub normalize_pilots: bool,
    /// Relative change in `X` below which iteration stops.
    pub rel_tol: f64,
}

impl AmpConfig {
    pub fn uniform(n: usize, eps: f64) -> Self {
        Self::with_priors(vec![eps; n])
    }

    pub fn with_priors(eps: Vec<f64>) -> Self {
        Self {
            eps,
            k_max: 50,
            tau_floor: 1e-12,
            damping: 0.0,
            onsager: OnsagerForm::Jacobian,
            normalize_pilots: true,
            rel_tol: 1e-8,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.eps.len() != n {
            return Err(Error::InvalidParameter(format!(
                "{} activity priors for {n} devices",
                self.eps.len()
            )));
        }
        if let Some(bad) = self.eps.iter().find(|e| !(**e > 0.0 && **e < 1.0)) {
            return Err(Error::InvalidParameter(format!(
                "activity prior {bad} outside (0,1)"
            )));
        }
        if self.k_max == 0 || !(self.tau_floor > 0.0) || !(0.0..1.0).contains(&self.damping) {
            return Err(Error::InvalidParameter(format!(
                "AMP needs k_max >= 1, tau_floor > 0, damping in [0,1) (got {}, {}, {})",
                self.k_max, self.tau_floor, self.damping
            )));
        }
        Ok(())
    }
}

/// `log t` with `t = ((1-eps)/eps) ((tau^2+1)/tau^2)^M exp(-||u||^2/(tau^2 (tau^2+1)))`.
pub fn log_likelihood_ratio(norm2: f64, tau: f64, eps: f64, m: usize) -> f64 {
    let tau2 = tau * tau;
    ((1.0 - eps) / eps).ln() + m as f64 * ((tau2 + 1.0) / tau2).ln() - norm2 / (tau2 * (tau2 + 1.0))
}

/// Inactive-to-active likelihood ratio, evaluated in the log domain and
/// clamped to `[1e-300, 1e300]`.
pub fn likelihood_ratio(norm2: f64, tau: f64, eps: f64, m: usize) -> f64 {
    log_likelihood_ratio(norm2, tau, eps, m)
        .exp()
        .clamp(RATIO_MIN, RATIO_MAX)
}

/// Posterior-mean shrinkage of one device.
///
/// `pseudo` is the column-oriented pseudo-observation `R^H a_n + X_{n,:}^H`;
/// the result is returned in row orientation (conjugated back).
pub fn mmse_denoise_row(pseudo: &[Complex64], tau: f64, eps: f64) -> Vec<Complex64> {
    let norm2: f64 = pseudo.iter().map(|v| v.norm_sqr()).sum();
    if norm2 == 0.0 {
        return vec![Complex64::new(0.0, 0.0); pseudo.len()];
    }
    let t = likelihood_ratio(norm2, tau, eps, pseudo.len());
    let scale = 1.0 / ((tau * tau + 1.0) * (1.0 + t));
    pseudo.iter().map(|v| v.conj() * scale).collect()
}

#[derive(Debug, Clone)]
pub struct AmpState {
    pub x: ComplexMatrix,
    pub r: ComplexMatrix,
    pub tau: f64,
    pub t_lr: Vec<f64>,
    pub k: usize,
}

impl AmpState {
    pub fn new(y: &ComplexMatrix, n: usize, tau_floor: f64) -> Self {
        let m = y.cols();
        Self {
            x: ComplexMatrix::zeros(n, m),
            r: y.clone(),
            tau: effective_noise(y, tau_floor),
            t_lr: vec![1.0; n],
            k: 0,
        }
    }
}

/// `max(||R||_F / sqrt(M L), tau_floor)`.
pub fn effective_noise(r: &ComplexMatrix, tau_floor: f64) -> f64 {
    let (l, m) = r.shape();
    (r.frobenius_norm() / ((m * l) as f64).sqrt()).max(tau_floor)
}

/// Row-oriented pseudo-observations `U = A^H R + X` (row `n` is the
/// conjugate of device `n`'s column-form pseudo-observation).
fn pseudo_rows(a_adj: &ComplexMatrix, state: &AmpState) -> Result<ComplexMatrix> {
    a_adj.matmul(&state.r)?.add(&state.x)
}

/// Denoises every row of `U`, returning `X^{k+1}` and the ratios `t(n)`.
fn denoise_all(u: &ComplexMatrix, tau: f64, eps: &[f64]) -> (ComplexMatrix, Vec<f64>) {
    let (n, m) = u.shape();
    let mut x = ComplexMatrix::zeros(n, m);
    let mut ratios = Vec::with_capacity(n);
    for row in 0..n {
        let col_form: Vec<Complex64> = u.row(row).iter().map(|v| v.conj()).collect();
        x.set_row(row, &mmse_denoise_row(&col_form, tau, eps[row]));
        ratios.push(likelihood_ratio(u.row_norm_sq(row), tau, eps[row], m));
    }
    (x, ratios)
}

/// M×M Onsager matrix `S` (already including the `N/L` or `1/L` factor).
pub fn onsager_matrix(
    u: &ComplexMatrix,
    ratios: &[f64],
    tau: f64,
    l: usize,
    form: OnsagerForm,
) -> ComplexMatrix {
    let (n, m) = u.shape();
    let tau2 = tau * tau;
    let mut s = ComplexMatrix::zeros(m, m);
    match form {
        OnsagerForm::Jacobian => {
            let mut diag = 0.0;
            for row in 0..n {
                let t = ratios[row];
                diag += 1.0 / ((tau2 + 1.0) * (1.0 + t));
                let coef = t / (tau2 * (tau2 + 1.0).powi(2) * (1.0 + t).powi(2));
                if coef == 0.0 {
                    continue;
                }
                for i in 0..m {
                    let ui = u.get(row, i).conj() * coef;
                    for j in 0..m {
                        let v = s.get(i, j) + ui * u.get(row, j);
                        s.set(i, j, v);
                    }
                }
            }
            for i in 0..m {
                let v = s.get(i, i) + diag;
                s.set(i, i, v);
            }
            s.scaled(1.0 / l as f64)
        }
        OnsagerForm::AsWritten => {
            let mut total = 0.0;
            for row in 0..n {
                let t = ratios[row];
                let norm2 = u.row_norm_sq(row);
                total += 1.0 / ((tau2 + 1.0) * (1.0 + t))
                    + t * norm2 / ((tau2 + 1.0).powi(2) * tau2 * tau2 * (1.0 + t).powi(2));
            }
            ComplexMatrix::identity(m).scaled(total * n as f64 / l as f64)
        }
    }
}

/// `R^{k+1} = Y - A X^{k+1} + R^k S`.
pub fn onsager_residual(
    state: &AmpState,
    y: &ComplexMatrix,
    a: &ComplexMatrix,
    x_next: &ComplexMatrix,
    config: &AmpConfig,
) -> Result<ComplexMatrix> {
    let u = pseudo_rows(&a.adjoint(), state)?;
    let ratios: Vec<f64> = (0..u.rows())
        .map(|row| likelihood_ratio(u.row_norm_sq(row), state.tau, config.eps[row], u.cols()))
        .collect();
    residual_from(state, y, a, x_next, &u, &ratios, config)
}

fn residual_from(
    state: &AmpState,
    y: &ComplexMatrix,
    a: &ComplexMatrix,
    x_next: &ComplexMatrix,
    u: &ComplexMatrix,
    ratios: &[f64],
    config: &AmpConfig,
) -> Result<ComplexMatrix> {
    let s = onsager_matrix(u, ratios, state.tau, a.rows(), config.onsager);
    let r = y.sub(&a.matmul(x_next)?)?.add(&state.r.matmul(&s)?)?;
    if !r.is_finite() {
        return Err(Error::Divergence {
            solver: "amp",
            iteration: state.k + 1,
        });
    }
    Ok(r)
}

/// One AMP iteration on already-scaled `a`, `y`.
pub fn step(
    state: &mut AmpState,
    y: &ComplexMatrix,
    a: &ComplexMatrix,
    a_adj: &ComplexMatrix,
    config: &AmpConfig,
) -> Result<()> {
    state.tau = effective_noise(&state.r, config.tau_floor);
    let u = pseudo_rows(a_adj, state)?;
    let (mut x_next, ratios) = denoise_all(&u, state.tau, &config.eps);
    if config.damping > 0.0 {
        x_next = x_next
            .scaled(1.0 - config.damping)
            .add_scaled(&state.x, config.damping)?;
    }
    if !x_next.is_finite() {
        return Err(Error::Divergence {
            solver: "amp",
            iteration: state.k + 1,
        });
    }
    let r_next = residual_from(state, y, a, &x_next, &u, &ratios, config)?;
    state.x = x_next;
    state.r = r_next;
    state.t_lr = ratios;
    state.k += 1;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct AmpReport {
    pub x: ComplexMatrix,
    pub iterations: usize,
    pub tau_history: Vec<f64>,
    pub residual_norms: Vec<f64>,
    /// Posterior activity probability `1 / (1 + t(n))` from the last
    /// denoising step; soft scores for support detection.
    pub activity_probability: Vec<f64>,
}

pub fn solve_amp(y: &ComplexMatrix, a: &ComplexMatrix, config: &AmpConfig) -> Result<AmpReport> {
    let (l, n) = a.shape();
    config.validate(n)?;
    if y.rows() != l {
        return Err(Error::DimensionMismatch {
            op: "solve_amp",
            left: y.shape(),
            right: a.shape(),
        });
    }
    let (a, y) = if config.normalize_pilots {
        let s = 1.0 / (l as f64).sqrt();
        (a.scaled(s), y.scaled(s))
    } else {
        (a.clone(), y.clone())
    };
    let a_adj = a.adjoint();
    let mut state = AmpState::new(&y, n, config.tau_floor);
    let mut tau_history = Vec::new();
    let mut residual_norms = Vec::new();
    while state.k < config.k_max {
        let previous = state.x.clone();
        step(&mut state, &y, &a, &a_adj, config)?;
        tau_history.push(state.tau);
        residual_norms.push(state.r.frobenius_norm());
        let change = state.x.sub(&previous)?.frobenius_norm() / previous.frobenius_norm().max(1.0);
        if change < config.rel_tol {
            break;
        }
    }
    let activity_probability = state.t_lr.iter().map(|t| 1.0 / (1.0 + t)).collect();
    Ok(AmpReport {
        x: state.x,
        iterations: state.k,
        tau_history,
        residual_norms,
        activity_probability,
    })
}
