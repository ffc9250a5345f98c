//! Declarative experiment description, loaded from TOML.
//!
//! ```toml
//! trials = 1000
//! root_seed = 7
//!
//! [scenario]
//! activity = "iid"
//! n = 100
//! m = 4
//! l = 12
//! sigma2 = 0.1
//! p = 0.1
//! pilots = "gaussian-normalized"
//!
//! [sweep]
//! axis = "L/N"
//! values = [0.08, 0.12, 0.16, 0.2]
//!
//! [[solvers]]
//! kind = "amp"
//! ```

use std::fmt;
use std::path::{Path, PathBuf};

use mmv_core::model::ActivityModel;
use serde::{Deserialize, Serialize};

use crate::HarnessError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: ScenarioConfig,
    pub sweep: SweepConfig,
    pub solvers: Vec<SolverSpec>,
    pub trials: usize,
    pub root_seed: u64,
    /// Size of the disjoint batch used for threshold calibration.
    #[serde(default = "default_calibration_trials")]
    pub calibration_trials: usize,
    /// Leading part of the calibration batch used to pick λ from a grid.
    #[serde(default = "default_validation_trials")]
    pub validation_trials: usize,
    /// Record median wall time per trial. Timings are the only
    /// nondeterministic output column.
    #[serde(default = "default_true")]
    pub timing: bool,
}

fn default_calibration_trials() -> usize {
    1000
}

fn default_validation_trials() -> usize {
    100
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ActivityKind {
    /// Every device accesses independently with `p`.
    Iid,
    /// Halves of the population access with `p1` and `p2`.
    TwoGroup,
    /// Exactly one of `groups` groups is active.
    SingleActiveGroup,
    /// Each of `groups` groups is active independently with `p`.
    IidGroup,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub activity: ActivityKind,
    pub n: usize,
    pub m: usize,
    pub l: usize,
    pub sigma2: f64,
    #[serde(default = "default_p")]
    pub p: f64,
    #[serde(default)]
    pub p1: Option<f64>,
    #[serde(default)]
    pub p2: Option<f64>,
    #[serde(default)]
    pub groups: Option<usize>,
    #[serde(default)]
    pub pilots: PilotSource,
}

fn default_p() -> f64 {
    0.1
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum PilotSource {
    Gaussian,
    #[default]
    GaussianNormalized,
    /// `file:<path>` to a `.cmat` pilot matrix.
    File(PathBuf),
}

impl TryFrom<String> for PilotSource {
    type Error = String;

    fn try_from(s: String) -> Result<Self, String> {
        match s.as_str() {
            "gaussian" => Ok(Self::Gaussian),
            "gaussian-normalized" => Ok(Self::GaussianNormalized),
            other => match other.strip_prefix("file:") {
                Some(path) if !path.is_empty() => Ok(Self::File(PathBuf::from(path))),
                _ => Err(format!(
                    "pilot source must be gaussian, gaussian-normalized or file:<path>, got {other:?}"
                )),
            },
        }
    }
}

impl From<PilotSource> for String {
    fn from(p: PilotSource) -> String {
        p.to_string()
    }
}

impl fmt::Display for PilotSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Gaussian => f.write_str("gaussian"),
            Self::GaussianNormalized => f.write_str("gaussian-normalized"),
            Self::File(p) => write!(f, "file:{}", p.display()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepAxis {
    #[serde(rename = "L/N")]
    PilotRatio,
    #[serde(rename = "p")]
    AccessProbability,
    #[serde(rename = "M")]
    Antennas,
    #[serde(rename = "p1/p2")]
    AccessRatio,
    #[serde(rename = "G")]
    Groups,
}

impl SweepAxis {
    pub fn label(self) -> &'static str {
        match self {
            Self::PilotRatio => "L/N",
            Self::AccessProbability => "p",
            Self::Antennas => "M",
            Self::AccessRatio => "p1/p2",
            Self::Groups => "G",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SolverSpec {
    GroupLasso {
        /// Fixed penalty; when absent λ is picked from `lambda_grid`.
        #[serde(default)]
        lambda: Option<f64>,
        /// Multiples of the per-instance `max_n ||a_n^H Y||`.
        #[serde(default = "default_lambda_grid")]
        lambda_grid: Vec<f64>,
        #[serde(default = "default_rho")]
        rho: f64,
        #[serde(default = "default_gl_iters")]
        k_max: usize,
        #[serde(default)]
        gamma_star: Option<f64>,
        #[serde(default)]
        manifest: Option<PathBuf>,
    },
    Amp {
        #[serde(default = "default_amp_iters")]
        k_max: usize,
        /// N×1 `.cmat` of activity priors; defaults to the scenario marginals.
        #[serde(default)]
        eps_file: Option<PathBuf>,
        #[serde(default)]
        gamma_star: Option<f64>,
        #[serde(default)]
        manifest: Option<PathBuf>,
    },
    Map {
        #[serde(default = "default_map_iters")]
        k_max: usize,
        #[serde(default)]
        eps_file: Option<PathBuf>,
        #[serde(default)]
        gamma_star: Option<f64>,
        #[serde(default)]
        manifest: Option<PathBuf>,
    },
    Ml {
        #[serde(default = "default_map_iters")]
        k_max: usize,
        #[serde(default)]
        gamma_star: Option<f64>,
    },
    CovLasso {
        #[serde(default)]
        lambda: Option<f64>,
        /// Multiples of the per-instance `max_n a_n^H Σ̂ a_n`.
        #[serde(default = "default_lambda_grid")]
        lambda_grid: Vec<f64>,
        #[serde(default = "default_cov_sweeps")]
        max_sweeps: usize,
        /// Remove the known noise floor from the sample covariance.
        #[serde(default)]
        subtract_noise: bool,
        #[serde(default)]
        gamma_star: Option<f64>,
    },
}

fn default_lambda_grid() -> Vec<f64> {
    vec![0.01, 0.03, 0.1, 0.3]
}

fn default_rho() -> f64 {
    1.0
}

fn default_gl_iters() -> usize {
    200
}

fn default_amp_iters() -> usize {
    50
}

fn default_map_iters() -> usize {
    55
}

fn default_cov_sweeps() -> usize {
    200
}

impl SolverSpec {
    pub fn id(&self) -> &'static str {
        match self {
            Self::GroupLasso { .. } => "group-lasso",
            Self::Amp { .. } => "amp",
            Self::Map { .. } => "map",
            Self::Ml { .. } => "ml",
            Self::CovLasso { .. } => "cov-lasso",
        }
    }

    pub fn gamma_star(&self) -> Option<f64> {
        match self {
            Self::GroupLasso { gamma_star, .. }
            | Self::Amp { gamma_star, .. }
            | Self::Map { gamma_star, .. }
            | Self::Ml { gamma_star, .. }
            | Self::CovLasso { gamma_star, .. } => *gamma_star,
        }
    }

    /// Folds a trainer manifest into the solver settings. Explicit fields win.
    pub fn apply_manifest(&mut self) -> Result<(), HarnessError> {
        let path = match self {
            Self::GroupLasso { manifest, .. }
            | Self::Amp { manifest, .. }
            | Self::Map { manifest, .. } => manifest.clone(),
            _ => None,
        };
        let Some(path) = path else { return Ok(()) };
        let m = Manifest::load(&path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        match self {
            Self::GroupLasso {
                lambda,
                rho,
                gamma_star,
                ..
            } => {
                *lambda = lambda.or(m.lambda);
                if let Some(r) = m.rho {
                    *rho = r;
                }
                *gamma_star = gamma_star.or(m.gamma_star);
            }
            Self::Amp {
                eps_file,
                gamma_star,
                ..
            }
            | Self::Map {
                eps_file,
                gamma_star,
                ..
            } => {
                if eps_file.is_none() {
                    *eps_file = m.eps_file.map(|p| base.join(p));
                }
                *gamma_star = gamma_star.or(m.gamma_star);
            }
            _ => {}
        }
        Ok(())
    }
}

/// Key-value parameters exported alongside learned matrices.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default)]
    pub rho: Option<f64>,
    #[serde(default)]
    pub gamma_star: Option<f64>,
    /// Relative to the manifest's directory.
    #[serde(default)]
    pub eps_file: Option<PathBuf>,
    /// Informational only. The scenario's `pilots` field selects the matrix.
    #[serde(default)]
    pub pilots_file: Option<PathBuf>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| HarnessError::Io(path.to_path_buf(), e))?;
        toml::from_str(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))
    }
}

/// Concrete problem dimensions at one sweep point.
#[derive(Debug, Clone, PartialEq)]
pub struct PointScenario {
    pub model: ActivityModel,
    pub l: usize,
    pub m: usize,
    pub sigma2: f64,
}

impl ExperimentConfig {
    /// Parses a config; relative paths resolve against the working directory.
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let mut cfg: Self =
            toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        for s in &mut cfg.solvers {
            s.apply_manifest()?;
        }
        Ok(cfg)
    }

    /// Reads a config file; relative paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| HarnessError::Io(path.to_path_buf(), e))?;
        let mut cfg: Self = toml::from_str(&text)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let PilotSource::File(p) = &mut cfg.scenario.pilots {
            rebase(p);
        }
        for s in &mut cfg.solvers {
            match s {
                SolverSpec::GroupLasso { manifest, .. } => manifest.iter_mut().for_each(rebase),
                SolverSpec::Amp {
                    eps_file, manifest, ..
                }
                | SolverSpec::Map {
                    eps_file, manifest, ..
                } => {
                    eps_file.iter_mut().for_each(rebase);
                    manifest.iter_mut().for_each(rebase);
                }
                _ => {}
            }
            s.apply_manifest()?;
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.trials == 0 {
            return Err(HarnessError::Config("trials must be at least 1".into()));
        }
        if self.solvers.is_empty() {
            return Err(HarnessError::Config("no solvers configured".into()));
        }
        if self.sweep.values.is_empty() {
            return Err(HarnessError::Config("sweep has no values".into()));
        }
        let needs_calibration = self.solvers.iter().any(|s| s.gamma_star().is_none());
        if needs_calibration && self.calibration_trials == 0 {
            return Err(HarnessError::Config(
                "calibration_trials must be positive unless every solver fixes gamma_star".into(),
            ));
        }
        for s in &self.solvers {
            if let SolverSpec::GroupLasso {
                lambda: None,
                lambda_grid,
                ..
            }
            | SolverSpec::CovLasso {
                lambda: None,
                lambda_grid,
                ..
            } = s
            {
                if lambda_grid.is_empty() || lambda_grid.iter().any(|v| !(*v >= 0.0)) {
                    return Err(HarnessError::Config(format!(
                        "{}: invalid lambda grid",
                        s.id()
                    )));
                }
                if self.validation_trials == 0 || self.calibration_trials == 0 {
                    return Err(HarnessError::Config(format!(
                        "{}: lambda grid selection needs validation and calibration trials",
                        s.id()
                    )));
                }
            }
        }
        for &v in &self.sweep.values {
            self.point(v)?.model.validate()?;
        }
        Ok(())
    }

    /// Scenario with the sweep axis set to `value`.
    pub fn point(&self, value: f64) -> Result<PointScenario, HarnessError> {
        let s = &self.scenario;
        let (mut l, mut m, mut p, mut p1, mut p2, mut groups) =
            (s.l, s.m, s.p, s.p1, s.p2, s.groups);
        let bad = |msg: &str| {
            HarnessError::Config(format!(
                "sweep value {value} on {}: {msg}",
                self.sweep.axis.label()
            ))
        };
        if !value.is_finite() {
            return Err(bad("not finite"));
        }
        match self.sweep.axis {
            SweepAxis::PilotRatio => {
                l = (value * s.n as f64).round() as usize;
                if l == 0 {
                    return Err(bad("pilot length rounds to zero"));
                }
            }
            SweepAxis::Antennas => {
                if value < 1.0 || value.fract() != 0.0 {
                    return Err(bad("antenna count must be a positive integer"));
                }
                m = value as usize;
            }
            SweepAxis::AccessProbability => {
                p = value;
                if s.activity == ActivityKind::TwoGroup {
                    p1 = Some(value);
                    p2 = Some(value);
                }
            }
            SweepAxis::AccessRatio => {
                if s.activity != ActivityKind::TwoGroup || !(value > 0.0) {
                    return Err(bad("needs the two-group scenario and a positive ratio"));
                }
                // Keeps the average probability at `p`.
                let lo = 2.0 * s.p / (1.0 + value);
                p1 = Some(value * lo);
                p2 = Some(lo);
            }
            SweepAxis::Groups => {
                if value < 1.0 || value.fract() != 0.0 {
                    return Err(bad("group count must be a positive integer"));
                }
                groups = Some(value as usize);
            }
        }
        let model = match s.activity {
            ActivityKind::Iid => ActivityModel::IidGroupActivity {
                n: s.n,
                groups: s.n,
                p,
            },
            ActivityKind::TwoGroup => ActivityModel::IndependentTwoGroup {
                n: s.n,
                p1: p1.ok_or_else(|| bad("two-group scenario needs p1"))?,
                p2: p2.ok_or_else(|| bad("two-group scenario needs p2"))?,
            },
            ActivityKind::SingleActiveGroup => ActivityModel::SingleActiveGroup {
                n: s.n,
                groups: groups.ok_or_else(|| bad("grouped scenario needs groups"))?,
            },
            ActivityKind::IidGroup => ActivityModel::IidGroupActivity {
                n: s.n,
                groups: groups.ok_or_else(|| bad("grouped scenario needs groups"))?,
                p,
            },
        };
        if m == 0 || !(s.sigma2 >= 0.0) {
            return Err(bad("needs M >= 1 and sigma2 >= 0"));
        }
        Ok(PointScenario {
            model,
            l,
            m,
            sigma2: s.sigma2,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
trials = 10
root_seed = 3

[scenario]
activity = "two-group"
n = 20
m = 4
l = 6
sigma2 = 0.1
p = 0.2
p1 = 0.3
p2 = 0.1
pilots = "file:pilots.cmat"

[sweep]
axis = "p1/p2"
values = [1.0, 3.0]

[[solvers]]
kind = "group-lasso"
lambda = 0.5

[[solvers]]
kind = "ml"
"#;

    #[test]
    fn parses_and_applies_defaults() {
        let cfg = ExperimentConfig::from_toml(BASE).unwrap();
        assert_eq!(cfg.calibration_trials, 1000);
        assert_eq!(cfg.scenario.pilots, PilotSource::File("pilots.cmat".into()));
        assert_eq!(
            cfg.solvers[1],
            SolverSpec::Ml {
                k_max: 55,
                gamma_star: None
            }
        );
        match &cfg.solvers[0] {
            SolverSpec::GroupLasso { k_max, rho, .. } => assert_eq!((*k_max, *rho), (200, 1.0)),
            other => panic!("{other:?}"),
        }
        cfg.validate().unwrap();
    }

    #[test]
    fn access_ratio_keeps_average_probability() {
        let cfg = ExperimentConfig::from_toml(BASE).unwrap();
        let point = cfg.point(3.0).unwrap();
        match point.model {
            ActivityModel::IndependentTwoGroup { p1, p2, .. } => {
                assert!((p1 / p2 - 3.0).abs() < 1e-12);
                assert!(((p1 + p2) / 2.0 - 0.2).abs() < 1e-12);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn pilot_ratio_sets_pilot_length() {
        let text = BASE
            .replace("axis = \"p1/p2\"", "axis = \"L/N\"")
            .replace("[1.0, 3.0]", "[0.1, 0.25]");
        let cfg = ExperimentConfig::from_toml(&text).unwrap();
        assert_eq!(cfg.point(0.25).unwrap().l, 5);
        assert!(cfg.point(0.01).is_err());
    }

    #[test]
    fn rejects_unknown_fields_and_bad_sources() {
        assert!(ExperimentConfig::from_toml(&BASE.replace("root_seed", "rootseed")).is_err());
        assert!(ExperimentConfig::from_toml(&BASE.replace("file:pilots.cmat", "uniform")).is_err());
        let zero = BASE.replace("trials = 10", "trials = 0");
        assert!(ExperimentConfig::from_toml(&zero)
            .unwrap()
            .validate()
            .is_err());
    }

    #[test]
    fn pilot_source_round_trips_through_strings() {
        for s in ["gaussian", "gaussian-normalized", "file:a/b.cmat"] {
            let p = PilotSource::try_from(s.to_string()).unwrap();
            assert_eq!(p.to_string(), s);
        }
    }
}
