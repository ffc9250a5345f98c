//! Sweep execution.
//!
//! Seeds are derived, never drawn: sweep point `i` owns
//! `point_seed = derive_seed(root_seed, 1, i)`; its pilots come from
//! `derive_seed(point_seed, 2, 0)`, calibration trial `t` from
//! `derive_seed(point_seed, 3, t)` and test trial `t` from
//! `derive_seed(point_seed, 4, t)`. Results are gathered in trial order, so
//! the worker count never changes the output.

use std::time::Instant;

use mmv_core::amp::{solve_amp, AmpConfig};
use mmv_core::cmat::{read_cmat, read_real_vector};
use mmv_core::cov_lasso::{solve_gram, GramSystem, NnLassoConfig};
use mmv_core::group_lasso::{solve_group_lasso, AdmmConfig};
use mmv_core::map::{mmse_given_support, solve_map, MapConfig};
use mmv_core::metrics::{calibrate_threshold, hard_threshold};
use mmv_core::model::{derive_seed, gaussian_pilots, seeded_rng, ProblemInstance};
use mmv_core::{ComplexMatrix, Error as CoreError};
use rayon::prelude::*;

use crate::config::{ExperimentConfig, PilotSource, PointScenario, SolverSpec};
use crate::HarnessError;

const STREAM_POINT: u64 = 1;
const STREAM_PILOTS: u64 = 2;
const STREAM_CALIBRATION: u64 = 3;
const STREAM_TEST: u64 = 4;

/// Environment variable holding the worker count.
pub const WORKERS_ENV: &str = "MMV_WORKERS";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// `Some(1)` runs serially; `None` uses the rayon default.
    pub workers: Option<usize>,
}

impl RunOptions {
    pub fn serial() -> Self {
        Self { workers: Some(1) }
    }

    pub fn from_env() -> Result<Self, HarnessError> {
        match std::env::var(WORKERS_ENV) {
            Ok(v) => {
                let n: usize = v.trim().parse().map_err(|_| {
                    HarnessError::Config(format!("{WORKERS_ENV}={v:?} is not a worker count"))
                })?;
                if n == 0 {
                    return Err(HarnessError::Config(format!(
                        "{WORKERS_ENV} must be at least 1"
                    )));
                }
                Ok(Self { workers: Some(n) })
            }
            Err(_) => Ok(Self::default()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRecord {
    pub sweep_axis: String,
    pub sweep_value: f64,
    pub solver: String,
    pub metric: String,
    pub value: f64,
    pub trials: usize,
    pub excluded_trials: usize,
    /// Point seed; with the derivation above it regenerates every instance.
    pub seed: u64,
    pub pilot_source: String,
    pub ms_per_trial: Option<f64>,
}

pub fn point_seed(root_seed: u64, point: usize) -> u64 {
    derive_seed(root_seed, STREAM_POINT, point as u64)
}

pub fn calibration_seed(point_seed: u64, trial: usize) -> u64 {
    derive_seed(point_seed, STREAM_CALIBRATION, trial as u64)
}

pub fn test_seed(point_seed: u64, trial: usize) -> u64 {
    derive_seed(point_seed, STREAM_TEST, trial as u64)
}

/// Pilot matrix shared by every solver and trial at one sweep point.
pub fn pilots_for_point(
    source: &PilotSource,
    scenario: &PointScenario,
    point_seed: u64,
) -> Result<ComplexMatrix, HarnessError> {
    let n = scenario.model.devices();
    let a = match source {
        PilotSource::Gaussian | PilotSource::GaussianNormalized => {
            let mut rng = seeded_rng(derive_seed(point_seed, STREAM_PILOTS, 0));
            gaussian_pilots(
                scenario.l,
                n,
                *source == PilotSource::GaussianNormalized,
                &mut rng,
            )
        }
        PilotSource::File(path) => {
            read_cmat(path).map_err(|e| HarnessError::Load(path.clone(), e))?
        }
    };
    if a.shape() != (scenario.l, n) {
        return Err(HarnessError::Config(format!(
            "pilot matrix is {}x{}, scenario needs {}x{n}",
            a.rows(),
            a.cols(),
            scenario.l
        )));
    }
    Ok(a)
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Lambda {
    Absolute(f64),
    /// Multiple of the smallest penalty that zeroes the solution.
    Relative(f64),
}

#[derive(Debug, Clone)]
enum Solver {
    GroupLasso {
        lambda: Lambda,
        base: AdmmConfig,
    },
    Amp(AmpConfig),
    Map(MapConfig),
    Cov {
        lambda: Lambda,
        config: NnLassoConfig,
        subtract: Option<f64>,
    },
}

struct Output {
    scores: Vec<f64>,
    x_hat: Option<ComplexMatrix>,
}

fn is_trial_failure(e: &CoreError) -> bool {
    matches!(
        e,
        CoreError::Divergence { .. } | CoreError::NonConvergence { .. } | CoreError::Singular(_)
    )
}

impl Solver {
    fn resolve(spec: &SolverSpec, scenario: &PointScenario) -> Result<Self, HarnessError> {
        let n = scenario.model.devices();
        let priors = |file: &Option<std::path::PathBuf>| -> Result<Vec<f64>, HarnessError> {
            match file {
                Some(path) => {
                    let eps =
                        read_real_vector(path).map_err(|e| HarnessError::Load(path.clone(), e))?;
                    if eps.len() != n {
                        return Err(HarnessError::Config(format!(
                            "{} holds {} priors for {n} devices",
                            path.display(),
                            eps.len()
                        )));
                    }
                    Ok(eps)
                }
                None => Ok(scenario.model.marginal_probabilities()),
            }
        };
        let solver = match spec {
            SolverSpec::GroupLasso {
                lambda, rho, k_max, ..
            } => Solver::GroupLasso {
                lambda: lambda.map_or(Lambda::Relative(f64::NAN), Lambda::Absolute),
                base: AdmmConfig {
                    rho: *rho,
                    k_max: *k_max,
                    ..AdmmConfig::default()
                },
            },
            SolverSpec::Amp {
                k_max, eps_file, ..
            } => {
                let mut cfg = AmpConfig::with_priors(priors(eps_file)?);
                cfg.k_max = *k_max;
                cfg.validate(n)?;
                Solver::Amp(cfg)
            }
            SolverSpec::Map {
                k_max, eps_file, ..
            } => {
                let mut cfg = MapConfig::map(priors(eps_file)?, scenario.sigma2);
                cfg.k_max = *k_max;
                cfg.validate(n)?;
                Solver::Map(cfg)
            }
            SolverSpec::Ml { k_max, .. } => {
                let mut cfg = MapConfig::ml(n, scenario.sigma2);
                cfg.k_max = *k_max;
                cfg.validate(n)?;
                Solver::Map(cfg)
            }
            SolverSpec::CovLasso {
                lambda,
                max_sweeps,
                subtract_noise,
                ..
            } => Solver::Cov {
                lambda: lambda.map_or(Lambda::Relative(f64::NAN), Lambda::Absolute),
                config: NnLassoConfig {
                    max_sweeps: *max_sweeps,
                    kkt_tol: 1e-6,
                    strict: false,
                },
                subtract: subtract_noise.then_some(scenario.sigma2),
            },
        };
        Ok(solver)
    }

    fn with_lambda(&self, lambda: Lambda) -> Self {
        let mut s = self.clone();
        match &mut s {
            Solver::GroupLasso { lambda: l, .. } | Solver::Cov { lambda: l, .. } => *l = lambda,
            _ => {}
        }
        s
    }

    fn lambda(&self) -> Option<Lambda> {
        match self {
            Solver::GroupLasso { lambda, .. } | Solver::Cov { lambda, .. } => Some(*lambda),
            _ => None,
        }
    }

    fn run(&self, inst: &ProblemInstance) -> Result<Output, CoreError> {
        match self {
            Solver::GroupLasso { lambda, base } => {
                let lambda = match *lambda {
                    Lambda::Absolute(v) => v,
                    Lambda::Relative(f) => {
                        let corr = inst.a.adjoint().matmul(&inst.y)?;
                        f * (0..corr.rows())
                            .map(|r| corr.row_norm_sq(r).sqrt())
                            .fold(0.0, f64::max)
                    }
                };
                let cfg = AdmmConfig { lambda, ..*base };
                let report = solve_group_lasso(&inst.y, &inst.a, &cfg)?;
                let scores = (0..report.x.rows())
                    .map(|r| report.x.row_norm_sq(r).sqrt())
                    .collect();
                Ok(Output {
                    scores,
                    x_hat: Some(report.x),
                })
            }
            Solver::Amp(cfg) => {
                let report = solve_amp(&inst.y, &inst.a, cfg)?;
                if !report.x.is_finite() {
                    return Err(CoreError::Divergence {
                        solver: "amp",
                        iteration: report.iterations,
                    });
                }
                Ok(Output {
                    scores: report.activity_probability,
                    x_hat: Some(report.x),
                })
            }
            Solver::Map(cfg) => Ok(Output {
                scores: solve_map(&inst.y, &inst.a, cfg)?.alpha,
                x_hat: None,
            }),
            Solver::Cov {
                lambda,
                config,
                subtract,
            } => {
                let sys = GramSystem::from_measurements(&inst.y, &inst.a, *subtract)?;
                let lambda = match *lambda {
                    Lambda::Absolute(v) => v,
                    Lambda::Relative(f) => f * sys.h.iter().copied().fold(0.0, f64::max),
                };
                Ok(Output {
                    scores: solve_gram(&sys, lambda, config)?.r,
                    x_hat: None,
                })
            }
        }
    }
}

fn par_map<T, F>(pool: Option<&rayon::ThreadPool>, count: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match pool {
        None => (0..count).map(f).collect(),
        Some(p) => p.install(|| (0..count).into_par_iter().map(f).collect()),
    }
}

struct PointContext<'a> {
    config: &'a ExperimentConfig,
    scenario: PointScenario,
    a: ComplexMatrix,
    seed: u64,
    pool: Option<&'a rayon::ThreadPool>,
}

impl PointContext<'_> {
    fn instance(&self, seed: u64) -> Result<ProblemInstance, CoreError> {
        ProblemInstance::generate(
            &self.a,
            &self.scenario.model,
            self.scenario.m,
            self.scenario.sigma2,
            seed,
        )
    }

    /// Scores on the first `count` calibration instances; failures are
    /// returned as `None`.
    fn calibration_scores(
        &self,
        solver: &Solver,
        count: usize,
    ) -> Result<Vec<Option<(Vec<f64>, Vec<bool>, f64)>>, HarnessError> {
        let out = par_map(self.pool, count, |t| -> Result<_, CoreError> {
            let inst = self.instance(calibration_seed(self.seed, t))?;
            match solver.run(&inst) {
                Ok(o) => {
                    let sq = o.x_hat.map_or(f64::NAN, |x| {
                        x.sub(&inst.x).map_or(f64::NAN, |d| d.frobenius_norm_sq())
                    });
                    Ok(Some((o.scores, inst.alpha, sq)))
                }
                Err(e) if is_trial_failure(&e) => Ok(None),
                Err(e) => Err(e),
            }
        });
        out.into_iter()
            .map(|r| r.map_err(HarnessError::from))
            .collect()
    }

    fn select_lambda(&self, solver: &Solver, grid: &[f64]) -> Result<Lambda, HarnessError> {
        let count = self
            .config
            .validation_trials
            .min(self.config.calibration_trials);
        let mut best: Option<(f64, f64)> = None;
        for &factor in grid {
            let candidate = solver.with_lambda(Lambda::Relative(factor));
            let runs: Vec<_> = self
                .calibration_scores(&candidate, count)?
                .into_iter()
                .flatten()
                .collect();
            if runs.is_empty() {
                continue;
            }
            let criterion = if matches!(solver, Solver::GroupLasso { .. }) {
                runs.iter().map(|r| r.2).sum::<f64>() / runs.len() as f64
            } else {
                let (scores, alpha): (Vec<_>, Vec<_>) =
                    runs.into_iter().map(|r| (r.0, r.1)).unzip();
                calibrate_threshold(&scores, &alpha)?.min_error()
            };
            if best.is_none_or(|(_, c)| criterion < c) {
                best = Some((factor, criterion));
            }
        }
        best.map(|(f, _)| Lambda::Relative(f)).ok_or_else(|| {
            HarnessError::Config("every lambda candidate failed on the validation batch".into())
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Stage {
    CalibrationOnly,
    Full,
}

/// Runs every solver at every sweep point.
pub fn run_sweep(
    config: &ExperimentConfig,
    options: &RunOptions,
) -> Result<Vec<ExperimentRecord>, HarnessError> {
    run(config, options, Stage::Full)
}

/// Threshold calibration only: `gamma_star` and its calibration error rate.
pub fn run_calibration(
    config: &ExperimentConfig,
    options: &RunOptions,
) -> Result<Vec<ExperimentRecord>, HarnessError> {
    run(config, options, Stage::CalibrationOnly)
}

fn run(
    config: &ExperimentConfig,
    options: &RunOptions,
    stage: Stage,
) -> Result<Vec<ExperimentRecord>, HarnessError> {
    config.validate()?;
    let pool = match options.workers {
        Some(1) => None,
        Some(k) => Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(k)
                .build()
                .map_err(|e| HarnessError::Config(e.to_string()))?,
        ),
        None => Some(
            rayon::ThreadPoolBuilder::new()
                .build()
                .map_err(|e| HarnessError::Config(e.to_string()))?,
        ),
    };
    let mut records = Vec::new();
    for (idx, &value) in config.sweep.values.iter().enumerate() {
        let scenario = config.point(value)?;
        let seed = point_seed(config.root_seed, idx);
        let a = pilots_for_point(&config.scenario.pilots, &scenario, seed)?;
        let ctx = PointContext {
            config,
            scenario,
            a,
            seed,
            pool: pool.as_ref(),
        };
        for spec in &config.solvers {
            evaluate_solver(&ctx, spec, value, stage, &mut records)?;
        }
    }
    records.sort_by(|x, y| {
        x.sweep_value
            .total_cmp(&y.sweep_value)
            .then_with(|| x.solver.cmp(&y.solver))
            .then_with(|| x.metric.cmp(&y.metric))
    });
    Ok(records)
}

struct TestTrial {
    errors: usize,
    devices: usize,
    sq_err: Option<f64>,
    ms: f64,
}

fn evaluate_solver(
    ctx: &PointContext<'_>,
    spec: &SolverSpec,
    sweep_value: f64,
    stage: Stage,
    records: &mut Vec<ExperimentRecord>,
) -> Result<(), HarnessError> {
    let config = ctx.config;
    let mut solver = Solver::resolve(spec, &ctx.scenario)?;
    if let Some(Lambda::Relative(_)) = solver.lambda() {
        let grid = match spec {
            SolverSpec::GroupLasso { lambda_grid, .. }
            | SolverSpec::CovLasso { lambda_grid, .. } => lambda_grid.as_slice(),
            _ => &[],
        };
        solver = solver.with_lambda(ctx.select_lambda(&solver, grid)?);
    }
    let record = |metric: &str, value: f64, trials: usize, excluded: usize, ms: Option<f64>| {
        ExperimentRecord {
            sweep_axis: config.sweep.axis.label().to_string(),
            sweep_value,
            solver: spec.id().to_string(),
            metric: metric.to_string(),
            value,
            trials,
            excluded_trials: excluded,
            seed: ctx.seed,
            pilot_source: config.scenario.pilots.to_string(),
            ms_per_trial: ms,
        }
    };
    match solver.lambda() {
        Some(Lambda::Relative(f)) => records.push(record(
            "lambda_rel",
            f,
            config.validation_trials.min(config.calibration_trials),
            0,
            None,
        )),
        Some(Lambda::Absolute(v)) => records.push(record("lambda", v, 0, 0, None)),
        None => {}
    }

    let gamma = match spec.gamma_star() {
        Some(g) => {
            records.push(record("gamma_star", g, 0, 0, None));
            g
        }
        None => {
            let runs = ctx.calibration_scores(&solver, config.calibration_trials)?;
            let excluded = runs.iter().filter(|r| r.is_none()).count();
            let (scores, alpha): (Vec<_>, Vec<_>) =
                runs.into_iter().flatten().map(|r| (r.0, r.1)).unzip();
            if scores.is_empty() {
                return Err(HarnessError::Config(format!(
                    "{}: every calibration trial failed",
                    spec.id()
                )));
            }
            let cal = calibrate_threshold(&scores, &alpha)?;
            let used = scores.len();
            records.push(record("gamma_star", cal.gamma_star, used, excluded, None));
            if stage == Stage::CalibrationOnly {
                records.push(record(
                    "calibration_error_rate",
                    cal.min_error(),
                    used,
                    excluded,
                    None,
                ));
            }
            cal.gamma_star
        }
    };
    if stage == Stage::CalibrationOnly {
        return Ok(());
    }

    let sigma2 = ctx.scenario.sigma2;
    let trials = par_map(
        ctx.pool,
        config.trials,
        |t| -> Result<Option<TestTrial>, CoreError> {
            let inst = ctx.instance(test_seed(ctx.seed, t))?;
            let start = Instant::now();
            let outcome = solver.run(&inst).and_then(|out| {
                let hat = hard_threshold(&out.scores, gamma);
                let x_hat = match out.x_hat {
                    Some(x) => Some(x),
                    None if matches!(solver, Solver::Map(_)) => {
                        Some(mmse_given_support(&inst.y, &inst.a, &hat, sigma2)?)
                    }
                    None => None,
                };
                Ok((hat, x_hat))
            });
            let ms = start.elapsed().as_secs_f64() * 1e3;
            match outcome {
                Ok((hat, x_hat)) => Ok(Some(TestTrial {
                    errors: hat.iter().zip(&inst.alpha).filter(|(h, a)| h != a).count(),
                    devices: inst.alpha.len(),
                    sq_err: x_hat
                        .map(|x| x.sub(&inst.x).map(|d| d.frobenius_norm_sq()))
                        .transpose()?,
                    ms,
                })),
                Err(e) if is_trial_failure(&e) => Ok(None),
                Err(e) => Err(e),
            }
        },
    );
    let trials: Vec<Option<TestTrial>> = trials.into_iter().collect::<Result<_, _>>()?;
    let excluded = trials.iter().filter(|t| t.is_none()).count();
    let ok: Vec<&TestTrial> = trials.iter().flatten().collect();
    let used = ok.len();
    let ms = if config.timing && used > 0 {
        let mut times: Vec<f64> = ok.iter().map(|t| t.ms).collect();
        times.sort_by(f64::total_cmp);
        Some(if used % 2 == 1 {
            times[used / 2]
        } else {
            0.5 * (times[used / 2 - 1] + times[used / 2])
        })
    } else {
        None
    };
    let devices: usize = ok.iter().map(|t| t.devices).sum();
    let error_rate = if used > 0 {
        ok.iter().map(|t| t.errors).sum::<usize>() as f64 / devices as f64
    } else {
        f64::NAN
    };
    records.push(record("error_rate", error_rate, used, excluded, ms));
    if solver_reports_mse(&solver) {
        let n = ctx.scenario.model.devices() as f64;
        let mse = if used > 0 {
            ok.iter().map(|t| t.sq_err.unwrap_or(f64::NAN)).sum::<f64>() / (n * used as f64)
        } else {
            f64::NAN
        };
        records.push(record("mse", mse, used, excluded, ms));
    }
    Ok(())
}

fn solver_reports_mse(solver: &Solver) -> bool {
    !matches!(solver, Solver::Cov { .. })
}
