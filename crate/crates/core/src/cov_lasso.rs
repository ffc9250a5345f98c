//! Covariance-based support recovery.
//!
//! `vec(Y Y^H / M) = (A* ⊙ A) r + vec(E1) + vec(E2)` with `r(n) = ||X_n||² / M`,
//! solved for `r ⪰ 0` as a real-stacked nonnegative LASSO.
//!
//! Vectorization is column-major: entry `(k, l)` of an L×L matrix sits at
//! index `k + l*L`. Column `n` of the lift is `vec(a_n a_n^H)`, whose entry at
//! `i*L + j` is `conj(a_n(i)) a_n(j)`, i.e. `conj(a_n) ⊗ a_n`.

use crate::complex::ComplexMatrix;
use crate::error::{Error, Result};
use crate::map::empirical_covariance;

#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceSystem {
    /// `[Re vec(Σ̂); Im vec(Σ̂)]`, length `2L²`.
    pub b: Vec<f64>,
    /// Row-major `2L² × N`, real rows first.
    pub phi: Vec<f64>,
    pub n: usize,
    pub l: usize,
    pub m: usize,
}

impl CovarianceSystem {
    pub fn rows(&self) -> usize {
        2 * self.l * self.l
    }

    pub fn phi_at(&self, row: usize, col: usize) -> f64 {
        self.phi[row * self.n + col]
    }

    /// `Phi r`.
    pub fn apply(&self, r: &[f64]) -> Vec<f64> {
        self.phi
            .chunks_exact(self.n)
            .map(|row| row.iter().zip(r).map(|(p, v)| p * v).sum())
            .collect()
    }
}

fn stack_covariance(cov: &ComplexMatrix) -> Vec<f64> {
    let l = cov.rows();
    let mut b = vec![0.0; 2 * l * l];
    for col in 0..l {
        for row in 0..l {
            let v = cov.get(row, col);
            b[row + col * l] = v.re;
            b[l * l + row + col * l] = v.im;
        }
    }
    b
}

/// Assembles the lifted system. With `subtract_sigma2 = Some(σ²)` the known
/// noise floor `σ² vec(I)` is removed from `b`.
pub fn build_system(
    y: &ComplexMatrix,
    a: &ComplexMatrix,
    subtract_sigma2: Option<f64>,
) -> Result<CovarianceSystem> {
    let (l, n) = a.shape();
    if y.rows() != l {
        return Err(Error::DimensionMismatch {
            op: "build_system",
            left: y.shape(),
            right: a.shape(),
        });
    }
    let mut cov = empirical_covariance(y);
    if let Some(s2) = subtract_sigma2 {
        for i in 0..l {
            let v = cov.get(i, i);
            cov.set(i, i, v - s2);
        }
    }
    let b = stack_covariance(&cov);
    let rows = 2 * l * l;
    let mut phi = vec![0.0; rows * n];
    for col in 0..n {
        for i in 0..l {
            let ci = a.get(i, col).conj();
            for j in 0..l {
                let v = ci * a.get(j, col);
                phi[(i * l + j) * n + col] = v.re;
                phi[(l * l + i * l + j) * n + col] = v.im;
            }
        }
    }
    Ok(CovarianceSystem {
        b,
        phi,
        n,
        l,
        m: y.cols(),
    })
}

/// Ground-truth decomposition of the sample covariance:
/// `E1 = A X X^H A^H / M - A diag(r) A^H` and `E2 = (A X Z^H + Z X^H A^H + Z Z^H) / M`.
pub fn residual_terms(
    a: &ComplexMatrix,
    x: &ComplexMatrix,
    z: &ComplexMatrix,
) -> Result<(ComplexMatrix, ComplexMatrix)> {
    let m = x.cols() as f64;
    let ax = a.matmul(x)?;
    let axxa = ax.matmul(&ax.adjoint())?.scaled(1.0 / m);
    let mut a_r = a.clone();
    for n in 0..a.cols() {
        let r = x.row_norm_sq(n) / m;
        for i in 0..a.rows() {
            a_r.set(i, n, a.get(i, n) * r);
        }
    }
    let e1 = axxa.sub(&a_r.matmul(&a.adjoint())?)?;
    let cross = ax.matmul(&z.adjoint())?;
    let e2 = cross
        .add(&cross.adjoint())?
        .add(&z.matmul(&z.adjoint())?)?
        .scaled(1.0 / m);
    Ok((e1, e2))
}

/// Normal-equation form of the lifted system: `G = Phi^T Phi`, `h = Phi^T b`.
#[derive(Debug, Clone, PartialEq)]
pub struct GramSystem {
    /// Row-major `N × N`.
    pub gram: Vec<f64>,
    pub h: Vec<f64>,
    pub b_norm_sq: f64,
    pub n: usize,
}

impl GramSystem {
    pub fn from_system(sys: &CovarianceSystem) -> Self {
        let n = sys.n;
        let mut gram = vec![0.0; n * n];
        let mut h = vec![0.0; n];
        for (row, bv) in sys.phi.chunks_exact(n).zip(&sys.b) {
            for i in 0..n {
                let pi = row[i];
                if pi == 0.0 {
                    continue;
                }
                h[i] += pi * bv;
                for j in 0..n {
                    gram[i * n + j] += pi * row[j];
                }
            }
        }
        Self {
            gram,
            h,
            b_norm_sq: sys.b.iter().map(|v| v * v).sum(),
            n,
        }
    }

    /// Same system without materializing `Phi`: `G(m,n) = |a_m^H a_n|²`,
    /// `h(n) = a_n^H Σ̂ a_n`, `||b||² = ||Σ̂||_F²`.
    pub fn from_measurements(
        y: &ComplexMatrix,
        a: &ComplexMatrix,
        subtract_sigma2: Option<f64>,
    ) -> Result<Self> {
        let (l, n) = a.shape();
        if y.rows() != l {
            return Err(Error::DimensionMismatch {
                op: "GramSystem::from_measurements",
                left: y.shape(),
                right: a.shape(),
            });
        }
        let mut cov = empirical_covariance(y);
        if let Some(s2) = subtract_sigma2 {
            for i in 0..l {
                let v = cov.get(i, i);
                cov.set(i, i, v - s2);
            }
        }
        let aha = a.adjoint().matmul(a)?;
        let gram = (0..n * n)
            .map(|k| aha.get(k / n, k % n).norm_sqr())
            .collect();
        let cov_a = cov.matmul(a)?;
        let h = (0..n)
            .map(|c| {
                (0..l)
                    .map(|i| (a.get(i, c).conj() * cov_a.get(i, c)).re)
                    .sum()
            })
            .collect();
        Ok(Self {
            gram,
            h,
            b_norm_sq: cov.frobenius_norm_sq(),
            n,
        })
    }

    /// `(1/2)||Phi r - b||² + λ||r||_1`.
    pub fn objective(&self, r: &[f64], lambda: f64) -> f64 {
        let g = self.gram_times(r);
        let quad: f64 = r.iter().zip(&g).map(|(a, b)| a * b).sum();
        let lin: f64 = r.iter().zip(&self.h).map(|(a, b)| a * b).sum();
        0.5 * (quad - 2.0 * lin + self.b_norm_sq) + lambda * r.iter().sum::<f64>()
    }

    fn gram_times(&self, r: &[f64]) -> Vec<f64> {
        self.gram
            .chunks_exact(self.n)
            .map(|row| row.iter().zip(r).map(|(g, v)| g * v).sum())
            .collect()
    }

    /// Largest violation of the nonnegative LASSO optimality conditions.
    pub fn kkt_residual(&self, r: &[f64], lambda: f64) -> f64 {
        let g = self.gram_times(r);
        (0..self.n)
            .map(|i| {
                let grad = g[i] - self.h[i] + lambda;
                if r[i] > 0.0 {
                    grad.abs()
                } else {
                    (-grad).max(0.0)
                }
            })
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NnLassoConfig {
    pub max_sweeps: usize,
    pub kkt_tol: f64,
    /// Fail when the sweep cap is hit before the KKT tolerance; otherwise
    /// return the last iterate.
    pub strict: bool,
}

impl Default for NnLassoConfig {
    fn default() -> Self {
        Self {
            max_sweeps: 200,
            kkt_tol: 1e-6,
            strict: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NnLassoReport {
    pub r: Vec<f64>,
    pub sweeps: usize,
    pub kkt_residual: f64,
    pub converged: bool,
}

pub fn solve_nn_lasso(
    sys: &CovarianceSystem,
    lambda: f64,
    config: &NnLassoConfig,
) -> Result<NnLassoReport> {
    solve_gram(&GramSystem::from_system(sys), lambda, config)
}

/// Cyclic coordinate descent on the normal equations.
pub fn solve_gram(sys: &GramSystem, lambda: f64, config: &NnLassoConfig) -> Result<NnLassoReport> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "lambda must be >= 0, got {lambda}"
        )));
    }
    let n = sys.n;
    let mut r = vec![0.0; n];
    // g = G r, kept in sync with every coordinate move.
    let mut g = vec![0.0; n];
    let mut sweeps = 0;
    let mut kkt = sys.kkt_residual(&r, lambda);
    while kkt > config.kkt_tol && sweeps < config.max_sweeps {
        for i in 0..n {
            let gii = sys.gram[i * n + i];
            if gii <= 0.0 {
                continue;
            }
            let grad = g[i] - sys.h[i] + lambda;
            let next = (r[i] - grad / gii).max(0.0);
            let d = next - r[i];
            if d != 0.0 {
                r[i] = next;
                for (gj, col) in g.iter_mut().zip(sys.gram[i * n..(i + 1) * n].iter()) {
                    *gj += d * col;
                }
            }
        }
        sweeps += 1;
        kkt = sys.kkt_residual(&r, lambda);
        if !kkt.is_finite() {
            return Err(Error::Divergence {
                solver: "nn_lasso",
                iteration: sweeps,
            });
        }
    }
    let converged = kkt <= config.kkt_tol;
    if !converged && config.strict {
        return Err(Error::NonConvergence {
            sweeps,
            kkt_residual: kkt,
        });
    }
    Ok(NnLassoReport {
        r,
        sweeps,
        kkt_residual: kkt,
        converged,
    })
}
