//! Dense complex matrices stored as separate real and imaginary planes.
//!
//! All products are carried out in split form,
//! `re(AB) = re(A)re(B) - im(A)im(B)` and `im(AB) = im(A)re(B) + re(A)im(B)`,
//! so the same arithmetic maps directly onto real-valued network layers.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    re: Vec<f64>,
    im: Vec<f64>,
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            re: vec![0.0; rows * cols],
            im: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut out = Self::zeros(n, n);
        for i in 0..n {
            out.re[i * n + i] = 1.0;
        }
        out
    }

    /// Builds a matrix from row-major real and imaginary planes.
    pub fn from_planes(rows: usize, cols: usize, re: Vec<f64>, im: Vec<f64>) -> Result<Self> {
        let len = rows * cols;
        if re.len() != len || im.len() != len {
            return Err(Error::DimensionMismatch {
                op: "from_planes",
                left: (rows, cols),
                right: (re.len(), im.len()),
            });
        }
        if re.iter().chain(im.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("from_planes"));
        }
        Ok(Self { rows, cols, re, im })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut out = Self::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                let v = f(r, c);
                out.re[r * cols + c] = v.re;
                out.im[r * cols + c] = v.im;
            }
        }
        out
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn re(&self) -> &[f64] {
        &self.re
    }

    pub fn im(&self) -> &[f64] {
        &self.im
    }

    pub fn re_mut(&mut self) -> &mut [f64] {
        &mut self.re
    }

    pub fn im_mut(&mut self) -> &mut [f64] {
        &mut self.im
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        let i = r * self.cols + c;
        Complex64::new(self.re[i], self.im[i])
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: Complex64) {
        let i = r * self.cols + c;
        self.re[i] = v.re;
        self.im[i] = v.im;
    }

    pub fn row(&self, r: usize) -> Vec<Complex64> {
        (0..self.cols).map(|c| self.get(r, c)).collect()
    }

    pub fn set_row(&mut self, r: usize, values: &[Complex64]) {
        debug_assert_eq!(values.len(), self.cols);
        for (c, v) in values.iter().enumerate() {
            self.set(r, c, *v);
        }
    }

    pub fn column(&self, c: usize) -> Vec<Complex64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn row_norm_sq(&self, r: usize) -> f64 {
        let s = r * self.cols;
        let e = s + self.cols;
        self.re[s..e]
            .iter()
            .zip(&self.im[s..e])
            .map(|(a, b)| a * a + b * b)
            .sum()
    }

    pub fn column_norm_sq(&self, c: usize) -> f64 {
        (0..self.rows)
            .map(|r| {
                let i = r * self.cols + c;
                self.re[i] * self.re[i] + self.im[i] * self.im[i]
            })
            .sum()
    }

    pub fn frobenius_norm_sq(&self) -> f64 {
        self.re.iter().chain(&self.im).map(|v| v * v).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.frobenius_norm_sq().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.re.iter().chain(&self.im).all(|v| v.is_finite())
    }

    pub fn is_zero(&self) -> bool {
        self.re.iter().chain(&self.im).all(|v| *v == 0.0)
    }

    /// Split-form product `self * rhs`.
    pub fn matmul(&self, rhs: &ComplexMatrix) -> Result<ComplexMatrix> {
        if self.cols != rhs.rows {
            return Err(Error::DimensionMismatch {
                op: "complex_matmul",
                left: self.shape(),
                right: rhs.shape(),
            });
        }
        let (l, n, m) = (self.rows, self.cols, rhs.cols);
        let mut out = ComplexMatrix::zeros(l, m);
        for i in 0..l {
            let out_re = &mut out.re[i * m..(i + 1) * m];
            let out_im = &mut out.im[i * m..(i + 1) * m];
            for k in 0..n {
                let ar = self.re[i * n + k];
                let ai = self.im[i * n + k];
                if ar == 0.0 && ai == 0.0 {
                    continue;
                }
                let br = &rhs.re[k * m..(k + 1) * m];
                let bi = &rhs.im[k * m..(k + 1) * m];
                for j in 0..m {
                    out_re[j] += ar * br[j] - ai * bi[j];
                    out_im[j] += ai * br[j] + ar * bi[j];
                }
            }
        }
        Ok(out)
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> ComplexMatrix {
        let mut out = ComplexMatrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                let i = r * self.cols + c;
                let j = c * self.rows + r;
                out.re[j] = self.re[i];
                out.im[j] = -self.im[i];
            }
        }
        out
    }

    pub fn scaled(&self, factor: f64) -> ComplexMatrix {
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            re: self.re.iter().map(|v| v * factor).collect(),
            im: self.im.iter().map(|v| v * factor).collect(),
        }
    }

    fn check_same_shape(&self, other: &ComplexMatrix, op: &'static str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::DimensionMismatch {
                op,
                left: self.shape(),
                right: other.shape(),
            });
        }
        Ok(())
    }

    /// `self + factor * other`.
    pub fn add_scaled(&self, other: &ComplexMatrix, factor: f64) -> Result<ComplexMatrix> {
        self.check_same_shape(other, "add_scaled")?;
        Ok(ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            re: self
                .re
                .iter()
                .zip(&other.re)
                .map(|(a, b)| a + factor * b)
                .collect(),
            im: self
                .im
                .iter()
                .zip(&other.im)
                .map(|(a, b)| a + factor * b)
                .collect(),
        })
    }

    pub fn add(&self, other: &ComplexMatrix) -> Result<ComplexMatrix> {
        self.add_scaled(other, 1.0)
    }

    pub fn sub(&self, other: &ComplexMatrix) -> Result<ComplexMatrix> {
        self.add_scaled(other, -1.0)
    }

    /// Largest entrywise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &ComplexMatrix) -> Result<f64> {
        self.check_same_shape(other, "max_abs_diff")?;
        Ok(self
            .re
            .iter()
            .zip(&self.im)
            .zip(other.re.iter().zip(&other.im))
            .map(|((ar, ai), (br, bi))| (ar - br).hypot(ai - bi))
            .fold(0.0, f64::max))
    }

    pub fn to_nalgebra(&self) -> DMatrix<Complex64> {
        DMatrix::from_fn(self.rows, self.cols, |r, c| self.get(r, c))
    }

    pub fn from_nalgebra(m: &DMatrix<Complex64>) -> ComplexMatrix {
        ComplexMatrix::from_fn(m.nrows(), m.ncols(), |r, c| m[(r, c)])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> ComplexMatrix {
        ComplexMatrix::from_fn(rows, cols, |_, _| {
            Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        })
    }

    // Reference product via complex scalars.
    fn scalar_matmul(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
        ComplexMatrix::from_fn(a.rows(), b.cols(), |i, j| {
            (0..a.cols()).map(|k| a.get(i, k) * b.get(k, j)).sum()
        })
    }

    #[test]
    fn identity_is_neutral() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b = random(3, 5, &mut rng);
        let out = ComplexMatrix::identity(3).matmul(&b).unwrap();
        assert_eq!(out, b);
    }

    #[test]
    fn imaginary_unit_squares_to_minus_one() {
        let n = 4;
        let mut i_eye = ComplexMatrix::zeros(n, n);
        for k in 0..n {
            i_eye.set(k, k, Complex64::new(0.0, 1.0));
        }
        let out = i_eye.matmul(&i_eye).unwrap();
        assert_eq!(out, ComplexMatrix::identity(n).scaled(-1.0));
    }

    #[test]
    fn split_product_matches_scalar_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = random(3, 4, &mut rng);
        let b = random(4, 2, &mut rng);
        let diff = a
            .matmul(&b)
            .unwrap()
            .max_abs_diff(&scalar_matmul(&a, &b))
            .unwrap();
        assert!(diff < 1e-12, "diff {diff}");
    }

    #[test]
    fn mismatched_inner_dimension_is_rejected() {
        let a = ComplexMatrix::zeros(2, 3);
        let b = ComplexMatrix::zeros(2, 3);
        assert!(matches!(a.matmul(&b), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn non_finite_planes_are_rejected() {
        let err = ComplexMatrix::from_planes(1, 1, vec![f64::NAN], vec![0.0]);
        assert!(matches!(err, Err(Error::NonFinite(_))));
        let err = ComplexMatrix::from_planes(2, 1, vec![0.0], vec![0.0]);
        assert!(matches!(err, Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn adjoint_conjugates_and_transposes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random(2, 3, &mut rng);
        let h = a.adjoint();
        assert_eq!(h.shape(), (3, 2));
        assert_eq!(h.get(2, 1), a.get(1, 2).conj());
    }

    proptest::proptest! {
        #[test]
        fn split_product_matches_scalar_oracle_on_random_shapes(
            l in 1usize..16, n in 1usize..16, m in 1usize..16, seed in 0u64..1000
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random(l, n, &mut rng);
            let b = random(n, m, &mut rng);
            let diff = a.matmul(&b).unwrap().max_abs_diff(&scalar_matmul(&a, &b)).unwrap();
            proptest::prop_assert!(diff <= 1e-12);
        }
    }
}
