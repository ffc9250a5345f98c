//! Recovery metrics, threshold calibration and pilot-matrix coherence.

use nalgebra::DMatrix;

use crate::complex::ComplexMatrix;
use crate::error::{Error, Result};
use crate::Complex64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Normalization {
    /// `1/(M N I)`, the training loss scale.
    PerTrain,
    /// `1/(N T)`, the evaluation scale.
    PerEval,
}

pub fn mse(
    truth: &[ComplexMatrix],
    estimate: &[ComplexMatrix],
    normalization: Normalization,
) -> Result<f64> {
    if truth.len() != estimate.len() || truth.is_empty() {
        return Err(Error::DimensionMismatch {
            op: "mse",
            left: (truth.len(), 0),
            right: (estimate.len(), 0),
        });
    }
    let (n, m) = truth[0].shape();
    let mut total = 0.0;
    for (t, e) in truth.iter().zip(estimate) {
        if t.shape() != (n, m) {
            return Err(Error::DimensionMismatch {
                op: "mse",
                left: (n, m),
                right: t.shape(),
            });
        }
        total += t.sub(e)?.frobenius_norm_sq();
    }
    let count = truth.len() as f64;
    Ok(match normalization {
        Normalization::PerTrain => total / (m as f64 * n as f64 * count),
        Normalization::PerEval => total / (n as f64 * count),
    })
}

/// `α̂(n) = 1[score(n) >= γ]`.
pub fn hard_threshold(scores: &[f64], gamma: f64) -> Vec<bool> {
    scores.iter().map(|&s| s >= gamma).collect()
}

/// Interprets 0/1 reals as activity flags.
pub fn to_binary(values: &[f64]) -> Result<Vec<bool>> {
    values
        .iter()
        .map(|&v| match v {
            0.0 => Ok(false),
            1.0 => Ok(true),
            v => Err(Error::InvalidParameter(format!(
                "non-binary activity value {v}"
            ))),
        })
        .collect()
}

/// `(1/(N T)) Σ_t ||α_t - α̂_t||_1`.
pub fn error_rate(alpha: &[Vec<bool>], alpha_hat: &[Vec<bool>]) -> Result<f64> {
    if alpha.len() != alpha_hat.len() || alpha.is_empty() {
        return Err(Error::DimensionMismatch {
            op: "error_rate",
            left: (alpha.len(), 0),
            right: (alpha_hat.len(), 0),
        });
    }
    let mut errors = 0usize;
    let mut total = 0usize;
    for (a, h) in alpha.iter().zip(alpha_hat) {
        if a.len() != h.len() {
            return Err(Error::DimensionMismatch {
                op: "error_rate",
                left: (a.len(), 1),
                right: (h.len(), 1),
            });
        }
        errors += a.iter().zip(h).filter(|(x, y)| x != y).count();
        total += a.len();
    }
    Ok(errors as f64 / total as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdCalibration {
    pub gamma_star: f64,
    /// `(γ, P_E(γ))` at every candidate, in increasing `γ`.
    pub pe_curve: Vec<(f64, f64)>,
}

impl ThresholdCalibration {
    pub fn min_error(&self) -> f64 {
        self.pe_curve
            .iter()
            .find(|(g, _)| *g == self.gamma_star)
            .map(|(_, pe)| *pe)
            .unwrap_or(f64::NAN)
    }
}

/// Exact minimizer of the pooled error rate over `γ`.
///
/// `P_E` is piecewise constant with breakpoints at the distinct scores, so
/// the midpoints between consecutive distinct scores plus one sentinel on
/// each side cover every attainable value. Ties go to the smaller `γ`.
pub fn calibrate_threshold(
    scores: &[Vec<f64>],
    alpha: &[Vec<bool>],
) -> Result<ThresholdCalibration> {
    if scores.len() != alpha.len() || scores.is_empty() {
        return Err(Error::DimensionMismatch {
            op: "calibrate_threshold",
            left: (scores.len(), 0),
            right: (alpha.len(), 0),
        });
    }
    let mut pairs: Vec<(f64, bool)> = Vec::new();
    for (s, a) in scores.iter().zip(alpha) {
        if s.len() != a.len() {
            return Err(Error::DimensionMismatch {
                op: "calibrate_threshold",
                left: (s.len(), 1),
                right: (a.len(), 1),
            });
        }
        if s.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("calibration scores"));
        }
        pairs.extend(s.iter().copied().zip(a.iter().copied()));
    }
    if pairs.is_empty() {
        return Err(Error::InvalidParameter("no calibration samples".into()));
    }
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
    let total = pairs.len() as f64;

    // Below every score all devices are declared active.
    let mut errors = pairs.iter().filter(|p| !p.1).count() as i64;
    let lo = pairs[0].0;
    let hi = pairs[pairs.len() - 1].0;
    let mut curve = vec![(lo - 1.0, errors as f64 / total)];
    let mut i = 0;
    while i < pairs.len() {
        let value = pairs[i].0;
        // Raising γ past `value` switches these devices off.
        while i < pairs.len() && pairs[i].0 == value {
            errors += if pairs[i].1 { 1 } else { -1 };
            i += 1;
        }
        let gamma = if i < pairs.len() {
            0.5 * (value + pairs[i].0)
        } else {
            hi + 1.0
        };
        curve.push((gamma, errors as f64 / total));
    }
    let (gamma_star, _) = curve
        .iter()
        .copied()
        .fold((f64::NAN, f64::INFINITY), |best, (g, pe)| {
            if pe < best.1 {
                (g, pe)
            } else {
                best
            }
        });
    Ok(ThresholdCalibration {
        gamma_star,
        pe_curve: curve,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coherence {
    /// `max_{i≠j} |ā_i^H ā_j|`.
    pub mu: f64,
    /// `max_{g≠h} ||Ā_g^H Ā_h||_2 / d`.
    pub mu_block: f64,
    /// `max_g max_{i≠j in g} |ā_i^H ā_j|`; zero when `d = 1`.
    pub nu_sub: f64,
    /// `mu_block` with the outer max over `h` replaced by the mean, then
    /// averaged over `g`.
    pub mu_block_group_mean: f64,
    /// `nu_sub` averaged over groups instead of maximized.
    pub nu_sub_group_mean: f64,
}

/// Coherence measures of the column-normalized matrix, contiguous groups of `d`.
pub fn coherence_metrics(a: &ComplexMatrix, d: usize) -> Result<Coherence> {
    let n = a.cols();
    if d == 0 || !n.is_multiple_of(d) {
        return Err(Error::InvalidParameter(format!(
            "group size {d} does not divide {n}"
        )));
    }
    let mut normalized = a.to_nalgebra();
    for c in 0..n {
        let norm = a.column_norm_sq(c).sqrt();
        if norm == 0.0 {
            return Err(Error::InvalidParameter(format!("column {c} is zero")));
        }
        normalized.column_mut(c).unscale_mut(norm);
    }
    let gram: DMatrix<Complex64> = normalized.adjoint() * &normalized;
    let mut mu: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                mu = mu.max(gram[(i, j)].norm());
            }
        }
    }
    let groups = n / d;
    let mut nu_sub: f64 = 0.0;
    let mut nu_sum = 0.0;
    for g in 0..groups {
        let mut within: f64 = 0.0;
        for i in g * d..(g + 1) * d {
            for j in g * d..(g + 1) * d {
                if i != j {
                    within = within.max(gram[(i, j)].norm());
                }
            }
        }
        nu_sub = nu_sub.max(within);
        nu_sum += within;
    }
    let mut mu_block: f64 = 0.0;
    let mut block_mean_sum = 0.0;
    if groups > 1 {
        for g in 0..groups {
            let mut row_sum = 0.0;
            for h in 0..groups {
                if g == h {
                    continue;
                }
                let block = gram.view((g * d, h * d), (d, d)).into_owned();
                let spectral = block.singular_values().max() / d as f64;
                mu_block = mu_block.max(spectral);
                row_sum += spectral;
            }
            block_mean_sum += row_sum / (groups - 1) as f64;
        }
    }
    Ok(Coherence {
        mu,
        mu_block,
        nu_sub,
        mu_block_group_mean: if groups > 1 {
            block_mean_sum / groups as f64
        } else {
            0.0
        },
        nu_sub_group_mean: nu_sum / groups as f64,
    })
}
