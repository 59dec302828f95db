//! Monte-Carlo studies comparing risk estimators against the oracle
//! out-of-sample error.
//!
//! Every replicate draws its own data from independent substreams of the
//! run seed, so results depend only on the configuration and never on how
//! rayon schedules replicates.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::compute_cv_logistic;
use crate::datagen::{BetaDist, Covariance, ResponseFamily, SimDesign, Support};
use crate::error::{invalid, Error, Result};
use crate::oracles::{err_out, TrueModel};
use crate::risk::{alo, kfold_cv, lo_exact_detailed};
use crate::solver::{ModelSpec, SolverOpts};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    /// Elastic-net linear regression, MSE of LO against `n`.
    Table1,
    /// Ridge logistic regression, MSE of LO against `n` with the `C_v/n` bound.
    Table2,
    /// K-fold versus LO versus the oracle at a fixed design.
    Figure1,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::Table1 => "table1",
            ExperimentKind::Table2 => "table2",
            ExperimentKind::Figure1 => "figure1",
        }
    }
}

/// Covariance of the simulated features, possibly depending on `n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CovSpec {
    Identity,
    /// `I / n`
    IdentityOverN,
    Scaled { scale: f64 },
}

impl CovSpec {
    pub fn covariance(&self, n: usize) -> Covariance {
        match *self {
            CovSpec::Identity => Covariance::identity(),
            CovSpec::IdentityOverN => Covariance::ScaledIdentity {
                scale: 1.0 / n as f64,
            },
            CovSpec::Scaled { scale } => Covariance::ScaledIdentity { scale },
        }
    }
}

/// Sample sizes and how `p` and `k` follow from `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignConfig {
    pub ns: Vec<usize>,
    /// `p = round(n / delta)` unless `p` is given.
    #[serde(default)]
    pub delta: Option<f64>,
    #[serde(default)]
    pub p: Option<usize>,
    /// `k = round(k_frac · n)` unless `k` is given; `k = p` when neither is.
    #[serde(default)]
    pub k_frac: Option<f64>,
    #[serde(default)]
    pub k: Option<usize>,
    pub covariance: CovSpec,
    pub beta_dist: BetaDist,
    #[serde(default)]
    pub support: Support,
    pub family: ResponseFamily,
}

impl DesignConfig {
    pub fn cell(&self, n: usize) -> Result<SimDesign> {
        let p = match (self.p, self.delta) {
            (Some(p), _) => p,
            (None, Some(d)) if d > 0.0 => (n as f64 / d).round() as usize,
            _ => return Err(Error::Config("design needs `p` or a positive `delta`".into())),
        };
        let k = match (self.k, self.k_frac) {
            (Some(k), _) => k,
            (None, Some(f)) => (f * n as f64).round() as usize,
            (None, None) => p,
        };
        let d = SimDesign {
            n,
            p,
            k,
            covariance: self.covariance.covariance(n),
            beta_dist: self.beta_dist,
            support: self.support,
            family: self.family,
        };
        d.validate()?;
        Ok(d)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub design: DesignConfig,
    pub model: ModelSpec,
    /// Penalty levels to sweep; defaults to `model.lambda` alone.
    #[serde(default)]
    pub lambdas: Option<Vec<f64>>,
    pub reps: usize,
    pub seed: u64,
    #[serde(default)]
    pub k_folds: Vec<usize>,
    #[serde(default)]
    pub solver: SolverOpts,
    /// Draws for Monte-Carlo oracles when no closed form applies.
    #[serde(default = "default_mc_draws")]
    pub mc_draws: usize,
    /// Also report ALO rows.
    #[serde(default = "default_true")]
    pub include_alo: bool,
}

fn default_mc_draws() -> usize {
    200_000
}

fn default_true() -> bool {
    true
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(invalid("reps", "must be at least 1"));
        }
        if self.design.ns.is_empty() {
            return Err(invalid("ns", "need at least one sample size"));
        }
        self.model.validate()?;
        self.solver.validate()?;
        for &n in &self.design.ns {
            self.design.cell(n)?;
        }
        match self.kind {
            ExperimentKind::Table1 => {
                if !matches!(self.design.family, ResponseFamily::Linear { .. }) {
                    return Err(Error::Config("table1 needs the linear family".into()));
                }
                if self.model.reg.is_smooth() {
                    return Err(Error::Config("table1 needs an l1 or elastic_net penalty".into()));
                }
            }
            ExperimentKind::Table2 => {
                if !matches!(self.design.family, ResponseFamily::Logistic)
                    || !matches!(self.model.loss, crate::losses::Loss::Logistic)
                    || !matches!(self.model.reg, crate::regularizers::Regularizer::Ridge)
                {
                    return Err(Error::Config("table2 needs logistic loss with a ridge penalty".into()));
                }
            }
            ExperimentKind::Figure1 => {
                if !matches!(self.design.family, ResponseFamily::Linear { .. }) {
                    return Err(Error::Config("figure1 needs the linear family".into()));
                }
                if self.k_folds.is_empty() {
                    return Err(Error::Config("figure1 needs at least one K in k_folds".into()));
                }
            }
        }
        Ok(())
    }

    fn lambda_grid(&self) -> Vec<f64> {
        self.lambdas.clone().unwrap_or_else(|| vec![self.model.lambda])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    Oracle,
    Lo,
    Alo,
    Kfold(usize),
}

impl Estimator {
    pub fn label(&self) -> String {
        match self {
            Estimator::Oracle => "oracle".into(),
            Estimator::Lo => "lo".into(),
            Estimator::Alo => "alo".into(),
            Estimator::Kfold(k) => format!("kfold{k}"),
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "oracle" => Some(Estimator::Oracle),
            "lo" => Some(Estimator::Lo),
            "alo" => Some(Estimator::Alo),
            _ => s.strip_prefix("kfold").and_then(|k| k.parse().ok()).map(Estimator::Kfold),
        }
    }
}

/// One `(n, λ, estimator)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub n: usize,
    pub p: usize,
    pub lambda: f64,
    pub estimator: Estimator,
    /// `mean_r (Err_out_r − estimate_r)²`
    pub mse: f64,
    /// Sample standard deviation of the squared errors over `√reps`;
    /// missing with a single replicate.
    pub mse_se: Option<f64>,
    pub bound_over_n: Option<f64>,
    /// Mean of the estimate over replicates.
    pub mean: f64,
    pub mean_se: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub slope_se: f64,
    pub intercept: f64,
    pub intercept_se: f64,
    /// Missing when every `log(mse)` is equal.
    pub adj_r2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellTime {
    pub n: usize,
    pub lambda: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub rows: Vec<ResultRow>,
    pub slope_fit: Option<SlopeFit>,
    pub config_echo: ExperimentConfig,
    pub wall_time: Vec<CellTime>,
}

/// Mean and standard error of `(err_out − estimate)²`.
pub fn mse_of_estimator(err_out_values: &[f64], estimates: &[f64]) -> Result<(f64, Option<f64>)> {
    if err_out_values.len() != estimates.len() {
        return Err(Error::Dimension(format!(
            "{} oracle values but {} estimates",
            err_out_values.len(),
            estimates.len()
        )));
    }
    if estimates.is_empty() {
        return Err(invalid("estimates", "need at least one replicate"));
    }
    let sq: Vec<f64> = err_out_values
        .iter()
        .zip(estimates)
        .map(|(e, l)| (e - l) * (e - l))
        .collect();
    Ok(mean_and_se(&sq))
}

fn mean_and_se(xs: &[f64]) -> (f64, Option<f64>) {
    let m = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / m;
    if xs.len() < 2 {
        return (mean, None);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (m - 1.0);
    (mean, Some((var / m).sqrt()))
}

/// Ordinary least squares of `log(mse)` on `log(n)`.
pub fn fit_loglog_slope(ns: &[f64], mses: &[f64]) -> Result<SlopeFit> {
    if ns.len() != mses.len() {
        return Err(Error::Dimension("ns and mses differ in length".into()));
    }
    if ns.len() < 3 {
        return Err(invalid("points", "need at least three points"));
    }
    if ns.iter().chain(mses).any(|&v| !(v > 0.0)) {
        return Err(invalid("points", "all values must be positive"));
    }
    let xs: Vec<f64> = ns.iter().map(|v| v.ln()).collect();
    let ys: Vec<f64> = mses.iter().map(|v| v.ln()).collect();
    let m = xs.len() as f64;
    let xbar = xs.iter().sum::<f64>() / m;
    let ybar = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - xbar).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xbar) * (y - ybar)).sum();
    if sxx == 0.0 {
        return Err(invalid("ns", "need at least two distinct sample sizes"));
    }
    let slope = sxy / sxx;
    let intercept = ybar - slope * xbar;
    let sse: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let sst: f64 = ys.iter().map(|y| (y - ybar).powi(2)).sum();
    let dof = m - 2.0;
    let s2 = sse / dof;
    let slope_se = (s2 / sxx).sqrt();
    let intercept_se = (s2 * (1.0 / m + xbar * xbar / sxx)).sqrt();
    let adj_r2 = (sst > 0.0).then(|| 1.0 - (sse / dof) / (sst / (m - 1.0)));
    Ok(SlopeFit {
        slope,
        slope_se,
        intercept,
        intercept_se,
        adj_r2,
    })
}

/// SplitMix64-style mixing of a run seed with replicate coordinates.
pub fn derive_seed(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed
        .wrapping_add(a.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(b.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-replicate outcome: oracle error plus each estimator's value.
#[derive(Debug, Clone)]
struct ReplicateOutcome {
    err_out: f64,
    estimates: Vec<(Estimator, f64)>,
}

fn run_replicate(
    cfg: &ExperimentConfig,
    design: &SimDesign,
    model: &ModelSpec,
    cell: u64,
    r: u64,
) -> Result<ReplicateOutcome> {
    let replicate_id = (cell << 20) | r;
    let rep = design.generate(cfg.seed, replicate_id)?;
    let run = lo_exact_detailed(&rep.data, model, &cfg.solver)?;
    let truth = TrueModel {
        beta_star: rep.beta_star,
        covariance: design.covariance.clone(),
        family: design.family,
    };
    let (oracle, _) = err_out(
        &run.full.beta_hat,
        &truth,
        model,
        cfg.mc_draws,
        derive_seed(cfg.seed, replicate_id, 1),
    )?;
    let mut estimates = vec![(Estimator::Lo, run.report.estimate)];
    if cfg.include_alo {
        let a = alo(&rep.data, model, &run.full)?;
        estimates.push((Estimator::Alo, a.estimate));
    }
    for &k in &cfg.k_folds {
        let cv = kfold_cv(
            &rep.data,
            model,
            k,
            derive_seed(cfg.seed, replicate_id, 2 + k as u64),
            &cfg.solver,
        )?;
        estimates.push((Estimator::Kfold(k), cv.estimate));
    }
    Ok(ReplicateOutcome {
        err_out: oracle,
        estimates,
    })
}

/// Runs any experiment kind.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let mut ns = cfg.design.ns.clone();
    ns.sort_unstable();
    let lambdas = cfg.lambda_grid();
    let mut rows = Vec::new();
    let mut wall_time = Vec::new();

    for (cell_n, &n) in ns.iter().enumerate() {
        let design = cfg.design.cell(n)?;
        for (cell_l, &lambda) in lambdas.iter().enumerate() {
            let start = Instant::now();
            let model = ModelSpec { lambda, ..cfg.model };
            model.validate()?;
            let cell = (cell_n * lambdas.len() + cell_l) as u64;
            let outcomes: Vec<Result<ReplicateOutcome>> = (0..cfg.reps as u64)
                .into_par_iter()
                .map(|r| {
                    run_replicate(cfg, &design, &model, cell, r).map_err(|e| Error::Replicate {
                        replicate: r as usize,
                        source: Box::new(e),
                    })
                })
                .collect();
            let outcomes: Vec<ReplicateOutcome> = outcomes.into_iter().collect::<Result<_>>()?;

            let oracle: Vec<f64> = outcomes.iter().map(|o| o.err_out).collect();
            let bound = match cfg.kind {
                ExperimentKind::Table2 => {
                    let p = design.p as f64;
                    let rho = p * design.covariance.max_eigenvalue(design.p);
                    let delta = n as f64 / p;
                    Some(compute_cv_logistic(rho, delta, lambda) / n as f64)
                }
                _ => None,
            };
            let (omean, ose) = mean_and_se(&oracle);
            rows.push(ResultRow {
                n,
                p: design.p,
                lambda,
                estimator: Estimator::Oracle,
                mse: 0.0,
                mse_se: ose.map(|_| 0.0),
                bound_over_n: bound,
                mean: omean,
                mean_se: ose,
            });
            let labels: Vec<Estimator> = outcomes[0].estimates.iter().map(|(e, _)| *e).collect();
            for (j, est) in labels.into_iter().enumerate() {
                let vals: Vec<f64> = outcomes.iter().map(|o| o.estimates[j].1).collect();
                let (mse, mse_se) = mse_of_estimator(&oracle, &vals)?;
                let (mean, mean_se) = mean_and_se(&vals);
                rows.push(ResultRow {
                    n,
                    p: design.p,
                    lambda,
                    estimator: est,
                    mse,
                    mse_se,
                    bound_over_n: bound,
                    mean,
                    mean_se,
                });
            }
            wall_time.push(CellTime {
                n,
                lambda,
                seconds: start.elapsed().as_secs_f64(),
            });
        }
    }

    let slope_fit = if lambdas.len() == 1 && ns.len() >= 3 && cfg.kind != ExperimentKind::Figure1 {
        let lo: Vec<&ResultRow> = rows.iter().filter(|r| r.estimator == Estimator::Lo).collect();
        let xs: Vec<f64> = lo.iter().map(|r| r.n as f64).collect();
        let ys: Vec<f64> = lo.iter().map(|r| r.mse).collect();
        fit_loglog_slope(&xs, &ys).ok()
    } else {
        None
    };

    Ok(ExperimentResult {
        rows,
        slope_fit,
        config_echo: cfg.clone(),
        wall_time,
    })
}

fn expect_kind(cfg: &ExperimentConfig, kind: ExperimentKind) -> Result<()> {
    if cfg.kind == kind {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "expected a {} config, got {}",
            kind.name(),
            cfg.kind.name()
        )))
    }
}

pub fn run_table1(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    expect_kind(cfg, ExperimentKind::Table1)?;
    run_experiment(cfg)
}

pub fn run_table2(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    expect_kind(cfg, ExperimentKind::Table2)?;
    run_experiment(cfg)
}

pub fn run_figure1(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    expect_kind(cfg, ExperimentKind::Figure1)?;
    run_experiment(cfg)
}

impl ExperimentResult {
    pub fn row(&self, n: usize, lambda: f64, est: Estimator) -> Option<&ResultRow> {
        self.rows
            .iter()
            .find(|r| r.n == n && r.lambda == lambda && r.estimator == est)
    }
}
