//! Random access model: device activity, Rayleigh channels, pilots and the
//! noisy linear measurement `Y = A X + Z`.
//!
//! Every generator is a pure function of its parameters and a seeded
//! [`ChaCha8Rng`], so a trial is reproducible from its 64-bit seed alone.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::complex::ComplexMatrix;
use crate::error::{Error, Result};

pub type TrialRng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> TrialRng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for item `index` of stream `stream` under `root`. Independent of
/// evaluation order, so serial and parallel runs see the same data.
pub fn derive_seed(root: u64, stream: u64, index: u64) -> u64 {
    splitmix64(splitmix64(root ^ splitmix64(stream)) ^ index)
}

/// One draw from CN(0, variance).
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(s * re, s * im)
}

/// Joint law of the activity vector.
///
/// Correlated variants split the `n` devices into `groups` contiguous blocks
/// of equal size; group `g` (0-based) owns indices `g*n/G .. (g+1)*n/G`.
#[derive(Debug, Clone, PartialEq)]
pub enum ActivityModel {
    /// First half of the devices access with `p1`, second half with `p2`.
    IndependentTwoGroup { n: usize, p1: f64, p2: f64 },
    /// Exactly one group, chosen uniformly, is active.
    SingleActiveGroup { n: usize, groups: usize },
    /// Each group is active independently with probability `p`.
    IidGroupActivity { n: usize, groups: usize, p: f64 },
}

impl ActivityModel {
    pub fn validate(&self) -> Result<()> {
        let prob_ok = |p: f64| (0.0..=1.0).contains(&p);
        match *self {
            ActivityModel::IndependentTwoGroup { n, p1, p2 } => {
                if n == 0 || n % 2 != 0 {
                    return Err(Error::InvalidParameter(format!(
                        "two-group model needs an even device count, got {n}"
                    )));
                }
                if !prob_ok(p1) || !prob_ok(p2) {
                    return Err(Error::InvalidParameter(format!(
                        "access probabilities out of range: p1={p1}, p2={p2}"
                    )));
                }
            }
            ActivityModel::SingleActiveGroup { n, groups } => check_groups(n, groups)?,
            ActivityModel::IidGroupActivity { n, groups, p } => {
                check_groups(n, groups)?;
                if !prob_ok(p) {
                    return Err(Error::InvalidParameter(format!(
                        "group access probability out of range: {p}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn devices(&self) -> usize {
        match *self {
            ActivityModel::IndependentTwoGroup { n, .. }
            | ActivityModel::SingleActiveGroup { n, .. }
            | ActivityModel::IidGroupActivity { n, .. } => n,
        }
    }

    /// Number of devices sharing one activity indicator (1 for the
    /// independent model).
    pub fn group_size(&self) -> usize {
        match *self {
            ActivityModel::IndependentTwoGroup { .. } => 1,
            ActivityModel::SingleActiveGroup { n, groups }
            | ActivityModel::IidGroupActivity { n, groups, .. } => n / groups,
        }
    }

    /// Average access probability over all devices.
    pub fn average_probability(&self) -> f64 {
        match *self {
            ActivityModel::IndependentTwoGroup { p1, p2, .. } => (p1 + p2) / 2.0,
            ActivityModel::SingleActiveGroup { groups, .. } => 1.0 / groups as f64,
            ActivityModel::IidGroupActivity { p, .. } => p,
        }
    }

    /// Marginal access probability of every device.
    pub fn marginal_probabilities(&self) -> Vec<f64> {
        match *self {
            ActivityModel::IndependentTwoGroup { n, p1, p2 } => {
                (0..n).map(|i| if i < n / 2 { p1 } else { p2 }).collect()
            }
            _ => vec![self.average_probability(); self.devices()],
        }
    }
}

fn check_groups(n: usize, groups: usize) -> Result<()> {
    if n == 0 || groups == 0 || !n.is_multiple_of(groups) {
        return Err(Error::InvalidParameter(format!(
            "group count {groups} must divide device count {n}"
        )));
    }
    Ok(())
}

pub fn draw_support<R: Rng + ?Sized>(model: &ActivityModel, rng: &mut R) -> Vec<bool> {
    match *model {
        ActivityModel::IndependentTwoGroup { n, p1, p2 } => (0..n)
            .map(|i| {
                let p = if i < n / 2 { p1 } else { p2 };
                rng.random::<f64>() < p
            })
            .collect(),
        ActivityModel::SingleActiveGroup { n, groups } => {
            let size = n / groups;
            let active = rng.random_range(0..groups);
            (0..n).map(|i| i / size == active).collect()
        }
        ActivityModel::IidGroupActivity { n, groups, p } => {
            let size = n / groups;
            let group_active: Vec<bool> = (0..groups).map(|_| rng.random::<f64>() < p).collect();
            (0..n).map(|i| group_active[i / size]).collect()
        }
    }
}

/// N×M channel matrix whose row `n` is i.i.d. CN(0,1) when `alpha[n]` and
/// zero otherwise.
pub fn draw_signal<R: Rng + ?Sized>(alpha: &[bool], m: usize, rng: &mut R) -> ComplexMatrix {
    let mut x = ComplexMatrix::zeros(alpha.len(), m);
    for (n, &active) in alpha.iter().enumerate() {
        if active {
            for c in 0..m {
                x.set(n, c, complex_gaussian(rng, 1.0));
            }
        }
    }
    x
}

/// Returns `(Y, Z)` with `Z` i.i.d. CN(0, sigma2) and `Y = A X + Z`.
pub fn measure<R: Rng + ?Sized>(
    a: &ComplexMatrix,
    x: &ComplexMatrix,
    sigma2: f64,
    rng: &mut R,
) -> Result<(ComplexMatrix, ComplexMatrix)> {
    if !(sigma2 >= 0.0) || !sigma2.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "noise variance must be finite and nonnegative, got {sigma2}"
        )));
    }
    let ax = a.matmul(x)?;
    let z = if sigma2 == 0.0 {
        ComplexMatrix::zeros(ax.rows(), ax.cols())
    } else {
        ComplexMatrix::from_fn(ax.rows(), ax.cols(), |_, _| complex_gaussian(rng, sigma2))
    };
    let y = ax.add(&z)?;
    Ok((y, z))
}

/// L×N pilot matrix with i.i.d. CN(0,1) entries; with `normalize` every
/// column is rescaled to Euclidean norm `sqrt(L)`.
pub fn gaussian_pilots<R: Rng + ?Sized>(
    l: usize,
    n: usize,
    normalize: bool,
    rng: &mut R,
) -> ComplexMatrix {
    let mut a = ComplexMatrix::from_fn(l, n, |_, _| complex_gaussian(rng, 1.0));
    if normalize {
        let target = (l as f64).sqrt();
        for c in 0..n {
            let scale = target / a.column_norm_sq(c).sqrt();
            for r in 0..l {
                let v = a.get(r, c);
                a.set(r, c, v * scale);
            }
        }
    }
    a
}

/// One Monte-Carlo trial.
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    pub a: ComplexMatrix,
    pub x: ComplexMatrix,
    pub y: ComplexMatrix,
    pub z: ComplexMatrix,
    pub alpha: Vec<bool>,
    pub sigma2: f64,
    pub seed: u64,
}

impl ProblemInstance {
    /// Draws activity, channels and noise from `seed` for the given pilots.
    pub fn generate(
        a: &ComplexMatrix,
        model: &ActivityModel,
        m: usize,
        sigma2: f64,
        seed: u64,
    ) -> Result<Self> {
        model.validate()?;
        if a.cols() != model.devices() {
            return Err(Error::DimensionMismatch {
                op: "ProblemInstance::generate",
                left: a.shape(),
                right: (model.devices(), m),
            });
        }
        let mut rng = seeded_rng(seed);
        let alpha = draw_support(model, &mut rng);
        let x = draw_signal(&alpha, m, &mut rng);
        let (y, z) = measure(a, &x, sigma2, &mut rng)?;
        Ok(Self {
            a: a.clone(),
            x,
            y,
            z,
            alpha,
            sigma2,
            seed,
        })
    }

    pub fn devices(&self) -> usize {
        self.a.cols()
    }

    pub fn pilot_length(&self) -> usize {
        self.a.rows()
    }

    pub fn antennas(&self) -> usize {
        self.x.cols()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_probabilities_give_empty_support() {
        let model = ActivityModel::IndependentTwoGroup {
            n: 10,
            p1: 0.0,
            p2: 0.0,
        };
        let mut rng = seeded_rng(0);
        assert!(draw_support(&model, &mut rng).iter().all(|a| !a));
    }

    #[test]
    fn single_active_group_is_one_contiguous_block() {
        let model = ActivityModel::SingleActiveGroup { n: 100, groups: 20 };
        let mut rng = seeded_rng(11);
        for _ in 0..50 {
            let alpha = draw_support(&model, &mut rng);
            let idx: Vec<usize> = (0..100).filter(|&i| alpha[i]).collect();
            assert_eq!(idx.len(), 5);
            assert_eq!(idx[0] % 5, 0);
            assert!(idx.windows(2).all(|w| w[1] == w[0] + 1));
        }
    }

    #[test]
    fn two_group_frequencies_match_probabilities() {
        let (p1, p2) = (0.15, 0.05);
        let model = ActivityModel::IndependentTwoGroup { n: 2, p1, p2 };
        let mut rng = seeded_rng(5);
        let draws = 100_000;
        let mut counts = [0usize; 2];
        for _ in 0..draws {
            let a = draw_support(&model, &mut rng);
            counts[0] += a[0] as usize;
            counts[1] += a[1] as usize;
        }
        for (count, p) in counts.iter().zip([p1, p2]) {
            let freq = *count as f64 / draws as f64;
            let se = (p * (1.0 - p) / draws as f64).sqrt();
            assert!((freq - p).abs() < 3.0 * se, "freq {freq} vs {p}");
        }
    }

    #[test]
    fn correlated_models_are_constant_within_groups() {
        let model = ActivityModel::IidGroupActivity {
            n: 60,
            groups: 6,
            p: 0.4,
        };
        let mut rng = seeded_rng(9);
        for _ in 0..200 {
            let alpha = draw_support(&model, &mut rng);
            for g in alpha.chunks(10) {
                assert!(g.iter().all(|&v| v == g[0]));
            }
        }
    }

    #[test]
    fn invalid_models_are_rejected() {
        assert!(ActivityModel::IndependentTwoGroup {
            n: 5,
            p1: 0.1,
            p2: 0.1
        }
        .validate()
        .is_err());
        assert!(ActivityModel::SingleActiveGroup { n: 10, groups: 3 }
            .validate()
            .is_err());
        assert!(ActivityModel::IidGroupActivity {
            n: 10,
            groups: 5,
            p: 1.5
        }
        .validate()
        .is_err());
    }

    #[test]
    fn signal_rows_follow_support() {
        let mut rng = seeded_rng(2);
        let zero = draw_signal(&[false; 6], 3, &mut rng);
        assert!(zero.is_zero());
        let mut alpha = vec![true; 6];
        alpha[3] = false;
        let x = draw_signal(&alpha, 4, &mut rng);
        assert_eq!(x.row_norm_sq(3), 0.0);
        assert!(x.row_norm_sq(2) > 0.0);
    }

    #[test]
    fn signal_has_unit_power() {
        let mut rng = seeded_rng(3);
        let x = draw_signal(&vec![true; 1000], 100, &mut rng);
        let power = x.frobenius_norm_sq() / 1e5;
        assert!((power - 1.0).abs() < 0.01, "power {power}");
    }

    #[test]
    fn noiseless_measurement_is_exact_product() {
        let mut rng = seeded_rng(4);
        let a = gaussian_pilots(4, 6, false, &mut rng);
        let x = draw_signal(&[true, false, true, true, false, true], 3, &mut rng);
        let (y, z) = measure(&a, &x, 0.0, &mut rng).unwrap();
        assert!(z.is_zero());
        assert_eq!(y, a.matmul(&x).unwrap());
        let (y0, _) = measure(&a, &ComplexMatrix::zeros(6, 3), 0.0, &mut rng).unwrap();
        assert!(y0.is_zero());
    }

    #[test]
    fn identity_pilots_reproduce_signal() {
        let mut rng = seeded_rng(8);
        let x = draw_signal(&[true, false, true, true], 5, &mut rng);
        let (y, _) = measure(&ComplexMatrix::identity(4), &x, 0.0, &mut rng).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn noise_has_requested_power() {
        let mut rng = seeded_rng(6);
        let a = ComplexMatrix::zeros(1000, 1);
        let x = ComplexMatrix::zeros(1, 100);
        let (_, z) = measure(&a, &x, 0.1, &mut rng).unwrap();
        let power = z.frobenius_norm_sq() / 1e5;
        assert!((power - 0.1).abs() < 0.002, "power {power}");
    }

    #[test]
    fn negative_noise_variance_is_rejected() {
        let mut rng = seeded_rng(0);
        let a = ComplexMatrix::zeros(2, 2);
        assert!(measure(&a, &a, -0.1, &mut rng).is_err());
    }

    #[test]
    fn normalized_pilots_have_exact_column_norm() {
        let mut rng = seeded_rng(12);
        let a = gaussian_pilots(12, 40, true, &mut rng);
        for c in 0..40 {
            assert!((a.column_norm_sq(c).sqrt() - 12f64.sqrt()).abs() < 1e-12);
        }
        let one = gaussian_pilots(1, 1, true, &mut rng);
        assert!((one.get(0, 0).norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn raw_pilots_have_unit_variance() {
        let mut rng = seeded_rng(13);
        let a = gaussian_pilots(100, 1000, false, &mut rng);
        let var = a.frobenius_norm_sq() / 1e5;
        assert!((var - 1.0).abs() < 0.02, "var {var}");
    }

    #[test]
    fn generation_is_deterministic_in_seed() {
        let mut rng = seeded_rng(1);
        let a = gaussian_pilots(8, 20, true, &mut rng);
        let model = ActivityModel::IndependentTwoGroup {
            n: 20,
            p1: 0.3,
            p2: 0.1,
        };
        let i1 = ProblemInstance::generate(&a, &model, 4, 0.1, 99).unwrap();
        let i2 = ProblemInstance::generate(&a, &model, 4, 0.1, 99).unwrap();
        assert_eq!(i1.y, i2.y);
        assert_eq!(i1.alpha, i2.alpha);
        let residual = i1.y.sub(&a.matmul(&i1.x).unwrap()).unwrap();
        assert!(residual.max_abs_diff(&i1.z).unwrap() < 1e-14);
        for n in 0..20 {
            assert_eq!(i1.x.row_norm_sq(n) == 0.0, !i1.alpha[n]);
        }
    }

    #[test]
    fn derived_seeds_differ_across_streams_and_indices() {
        let s = derive_seed(42, 0, 0);
        assert_ne!(s, derive_seed(42, 0, 1));
        assert_ne!(s, derive_seed(42, 1, 0));
        assert_ne!(s, derive_seed(43, 0, 0));
        assert_eq!(s, derive_seed(42, 0, 0));
    }
}
