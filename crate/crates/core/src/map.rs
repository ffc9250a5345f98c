//! Coordinate descent for MAP (and ML) device activity estimation from the
//! sample covariance `Σ̂ = Y Y^H / M`.
//!
//! The objective is
//! `f(α) = log|Σ(α)| + tr(Σ(α)^{-1} Σ̂) - (1/M) Σ_n (α_n log ε_n + (1-α_n) log(1-ε_n))`
//! with `Σ(α) = A diag(α) A^H + σ² I`, minimized over `α ⪰ 0` one coordinate
//! at a time. `Σ^{-1}` is maintained with rank-one Sherman–Morrison updates.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::complex::ComplexMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapVariant {
    Map,
    /// Prior-free limit (`ε = 1/2`).
    Ml,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapConfig {
    pub eps: Vec<f64>,
    pub sigma2: f64,
    pub k_max: usize,
    pub variant: MapVariant,
    /// Stop once a whole sweep moves no coordinate by more than this.
    pub tol: f64,
    /// Verify `Σ^{-1} Σ = I` every this many coordinate steps.
    pub drift_check_interval: Option<usize>,
    pub drift_tol: f64,
    /// Record `f` after every sweep.
    pub track_objective: bool,
}

impl MapConfig {
    pub fn map(eps: Vec<f64>, sigma2: f64) -> Self {
        Self {
            eps,
            sigma2,
            k_max: 55,
            variant: MapVariant::Map,
            tol: 1e-6,
            drift_check_interval: Some(50),
            drift_tol: 1e-6,
            track_objective: false,
        }
    }

    pub fn ml(n: usize, sigma2: f64) -> Self {
        Self {
            variant: MapVariant::Ml,
            ..Self::map(vec![0.5; n], sigma2)
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if !(self.sigma2 > 0.0) || self.k_max == 0 {
            return Err(Error::InvalidParameter(format!(
                "coordinate descent needs sigma2 > 0 and k_max >= 1 (got {}, {})",
                self.sigma2, self.k_max
            )));
        }
        if self.variant == MapVariant::Map {
            if self.eps.len() != n {
                return Err(Error::InvalidParameter(format!(
                    "{} activity priors for {n} devices",
                    self.eps.len()
                )));
            }
            for &e in &self.eps {
                if !(e > 0.0 && e < 1.0) || (e - 0.5).abs() < 1e-6 {
                    return Err(Error::InvalidParameter(format!(
                        "MAP prior {e} must lie in (0,1) away from 1/2"
                    )));
                }
            }
        }
        Ok(())
    }

    fn log_odds(&self, n: usize) -> f64 {
        match self.variant {
            MapVariant::Map => (self.eps[n] / (1.0 - self.eps[n])).ln(),
            MapVariant::Ml => 0.0,
        }
    }
}

/// `Y Y^H / M` from the split real/imaginary products.
pub fn empirical_covariance(y: &ComplexMatrix) -> ComplexMatrix {
    let (l, m) = y.shape();
    let (re, im) = (y.re(), y.im());
    let mut out = ComplexMatrix::zeros(l, l);
    let scale = 1.0 / m as f64;
    for i in 0..l {
        for j in 0..l {
            let (ri, ii) = (&re[i * m..(i + 1) * m], &im[i * m..(i + 1) * m]);
            let (rj, ij) = (&re[j * m..(j + 1) * m], &im[j * m..(j + 1) * m]);
            let mut acc_re = 0.0;
            let mut acc_im = 0.0;
            for k in 0..m {
                acc_re += ri[k] * rj[k] + ii[k] * ij[k];
                acc_im += ii[k] * rj[k] - ri[k] * ij[k];
            }
            out.set(i, j, Complex64::new(acc_re * scale, acc_im * scale));
        }
    }
    out
}

/// `A diag(α) A^H + σ² I`.
pub fn model_covariance(a: &DMatrix<Complex64>, alpha: &[f64], sigma2: f64) -> DMatrix<Complex64> {
    let l = a.nrows();
    let mut sigma = DMatrix::<Complex64>::identity(l, l) * Complex64::new(sigma2, 0.0);
    for (n, &w) in alpha.iter().enumerate() {
        if w != 0.0 {
            let col = a.column(n);
            sigma.gerc(Complex64::new(w, 0.0), &col, &col, Complex64::new(1.0, 0.0));
        }
    }
    sigma
}

#[derive(Debug, Clone)]
pub struct MapState {
    pub alpha: Vec<f64>,
    /// Current `Σ^{-1}`.
    pub sinv: DMatrix<Complex64>,
    /// Current `Σ`, tracked alongside for drift checks.
    pub sigma: DMatrix<Complex64>,
    pub sigma_hat: DMatrix<Complex64>,
    pub k: usize,
    pub steps: usize,
    pub delta_clamps: usize,
    pub rejected_steps: usize,
    pub rebuilds: usize,
}

impl MapState {
    pub fn new(y: &ComplexMatrix, n: usize, sigma2: f64) -> Self {
        let l = y.rows();
        Self {
            alpha: vec![0.0; n],
            sinv: DMatrix::identity(l, l) * Complex64::new(1.0 / sigma2, 0.0),
            sigma: DMatrix::identity(l, l) * Complex64::new(sigma2, 0.0),
            sigma_hat: empirical_covariance(y).to_nalgebra(),
            k: 0,
            steps: 0,
            delta_clamps: 0,
            rejected_steps: 0,
            rebuilds: 0,
        }
    }

    /// `||Σ^{-1} Σ - I||_F`.
    pub fn inverse_drift(&self) -> f64 {
        let l = self.sigma.nrows();
        (&self.sinv * &self.sigma - DMatrix::<Complex64>::identity(l, l)).norm()
    }

    fn rebuild(&mut self, a: &DMatrix<Complex64>, sigma2: f64) -> Result<()> {
        self.sigma = model_covariance(a, &self.alpha, sigma2);
        self.sinv = self
            .sigma
            .clone()
            .cholesky()
            .ok_or(Error::Singular("model covariance"))?
            .inverse();
        self.rebuilds += 1;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub d: f64,
    pub alpha_n: f64,
    pub delta_clamped: bool,
    pub rejected: bool,
}

/// Unconstrained stationary step along coordinate `n` for log-odds `c`,
/// given `s = a^H Σ^{-1} a` and `q = a^H Σ^{-1} Σ̂ Σ^{-1} a`. Returns the
/// step and whether the discriminant had to be clamped at zero.
///
/// The root is written as `2(q - s + c/M) / (s² - 2cs/M + sqrt(Δ))`, the
/// rationalized form of `(s² - 2cs/M - sqrt(Δ)) / (2cs²/M)`; it stays finite
/// as `c -> 0`, where it equals the ML step `(q - s)/s²`.
pub fn stationary_step(s: f64, q: f64, c: f64, m: usize) -> (f64, bool) {
    let m = m as f64;
    let b = s * s - 2.0 * c * s / m;
    let mut delta = b * b + 4.0 * c * s * s * (s - q - c / m) / m;
    let clamped = delta < 0.0;
    if clamped {
        delta = 0.0;
    }
    let denom = b + delta.sqrt();
    if denom > 0.0 {
        (2.0 * (q - s + c / m) / denom, clamped)
    } else {
        ((b - delta.sqrt()) / (2.0 * c * s * s / m), clamped)
    }
}

/// One coordinate update for device `n`: computes the step, applies the
/// `-α(n)` floor, and updates `α` and `Σ^{-1}` in place.
pub fn coordinate_step(
    state: &mut MapState,
    n: usize,
    a: &DMatrix<Complex64>,
    m: usize,
    config: &MapConfig,
) -> StepOutcome {
    let col = a.column(n);
    let sa: DVector<Complex64> = &state.sinv * col;
    let s = col.dotc(&sa).re;
    let q = sa.dotc(&(&state.sigma_hat * &sa)).re;
    let (raw, delta_clamped) = match config.variant {
        MapVariant::Ml => ((q - s) / (s * s), false),
        MapVariant::Map => stationary_step(s, q, config.log_odds(n), m),
    };
    if delta_clamped {
        state.delta_clamps += 1;
    }
    let mut d = raw.max(-state.alpha[n]);
    let denom = 1.0 + d * s;
    let rejected = !(denom > 0.0) || !d.is_finite();
    if rejected {
        state.rejected_steps += 1;
        d = 0.0;
    }
    if d != 0.0 {
        state.alpha[n] += d;
        let w = Complex64::new(-d / denom, 0.0);
        state.sinv.gerc(w, &sa, &sa, Complex64::new(1.0, 0.0));
        state
            .sigma
            .gerc(Complex64::new(d, 0.0), &col, &col, Complex64::new(1.0, 0.0));
    }
    state.steps += 1;
    StepOutcome {
        d,
        alpha_n: state.alpha[n],
        delta_clamped,
        rejected,
    }
}

/// Negative log posterior (MAP) or negative log likelihood (ML), up to an
/// additive constant.
pub fn f_map(
    alpha: &[f64],
    a: &ComplexMatrix,
    sigma_hat: &ComplexMatrix,
    m: usize,
    config: &MapConfig,
) -> Result<f64> {
    f_map_dense(alpha, &a.to_nalgebra(), &sigma_hat.to_nalgebra(), m, config)
}

fn f_map_dense(
    alpha: &[f64],
    a: &DMatrix<Complex64>,
    sigma_hat: &DMatrix<Complex64>,
    m: usize,
    config: &MapConfig,
) -> Result<f64> {
    if alpha.iter().any(|v| !(*v >= 0.0)) {
        return Err(Error::InvalidParameter(
            "activity weights must be nonnegative".into(),
        ));
    }
    let sigma = model_covariance(a, alpha, config.sigma2);
    let chol = sigma
        .cholesky()
        .ok_or(Error::Singular("model covariance"))?;
    let l = chol.l();
    let log_det: f64 = (0..l.nrows()).map(|i| 2.0 * l[(i, i)].re.ln()).sum();
    let trace = chol.solve(sigma_hat).trace().re;
    let prior = match config.variant {
        MapVariant::Ml => 0.0,
        MapVariant::Map => {
            -alpha
                .iter()
                .zip(&config.eps)
                .map(|(al, e)| al * e.ln() + (1.0 - al) * (1.0 - e).ln())
                .sum::<f64>()
                / m as f64
        }
    };
    Ok(log_det + trace + prior)
}

#[derive(Debug, Clone)]
pub struct MapReport {
    /// Relaxed activity weights (soft scores).
    pub alpha: Vec<f64>,
    pub sweeps: usize,
    /// Objective before the first sweep and after each sweep, when tracked.
    pub objective_trace: Vec<f64>,
    pub delta_clamps: usize,
    pub rejected_steps: usize,
    pub rebuilds: usize,
}

pub fn solve_map(y: &ComplexMatrix, a: &ComplexMatrix, config: &MapConfig) -> Result<MapReport> {
    let (l, n) = a.shape();
    config.validate(n)?;
    if y.rows() != l {
        return Err(Error::DimensionMismatch {
            op: "solve_map",
            left: y.shape(),
            right: a.shape(),
        });
    }
    let m = y.cols();
    let a_dense = a.to_nalgebra();
    let mut state = MapState::new(y, n, config.sigma2);
    let mut objective_trace = Vec::new();
    if config.track_objective {
        objective_trace.push(f_map_dense(
            &state.alpha,
            &a_dense,
            &state.sigma_hat,
            m,
            config,
        )?);
    }
    while state.k < config.k_max {
        let mut max_change: f64 = 0.0;
        for dev in 0..n {
            let out = coordinate_step(&mut state, dev, &a_dense, m, config);
            max_change = max_change.max(out.d.abs());
            if let Some(every) = config.drift_check_interval {
                if every > 0 && state.steps.is_multiple_of(every) && state.inverse_drift() > config.drift_tol
                {
                    state.rebuild(&a_dense, config.sigma2)?;
                }
            }
        }
        state.k += 1;
        if state.alpha.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence {
                solver: "map",
                iteration: state.k,
            });
        }
        if config.track_objective {
            objective_trace.push(f_map_dense(
                &state.alpha,
                &a_dense,
                &state.sigma_hat,
                m,
                config,
            )?);
        }
        if max_change < config.tol {
            break;
        }
    }
    Ok(MapReport {
        alpha: state.alpha,
        sweeps: state.k,
        objective_trace,
        delta_clamps: state.delta_clamps,
        rejected_steps: state.rejected_steps,
        rebuilds: state.rebuilds,
    })
}

/// Linear MMSE channel estimate on a detected support:
/// `X̂ = Γ A^H (A Γ A^H + σ² I)^{-1} Y`, exactly zero off the support.
pub fn mmse_given_support(
    y: &ComplexMatrix,
    a: &ComplexMatrix,
    alpha_hat: &[bool],
    sigma2: f64,
) -> Result<ComplexMatrix> {
    let (l, n) = a.shape();
    if alpha_hat.len() != n || y.rows() != l {
        return Err(Error::DimensionMismatch {
            op: "mmse_given_support",
            left: y.shape(),
            right: a.shape(),
        });
    }
    let m = y.cols();
    let mut out = ComplexMatrix::zeros(n, m);
    let support: Vec<usize> = (0..n).filter(|&i| alpha_hat[i]).collect();
    if support.is_empty() {
        return Ok(out);
    }
    let a_dense = a.to_nalgebra();
    let gamma: Vec<f64> = alpha_hat
        .iter()
        .map(|&b| if b { 1.0 } else { 0.0 })
        .collect();
    let sigma = model_covariance(&a_dense, &gamma, sigma2);
    let w = sigma
        .cholesky()
        .ok_or(Error::Singular("support covariance"))?
        .solve(&y.to_nalgebra());
    for &dev in &support {
        let col = a_dense.column(dev);
        for j in 0..m {
            out.set(dev, j, col.dotc(&w.column(j)));
        }
    }
    Ok(out)
}
