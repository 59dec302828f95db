//! Leave-one-out (LO), approximate leave-one-out (ALO) and K-fold risk
//! estimates.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::{substream, Purpose};
use crate::error::{invalid, Error, Result};
use crate::linalg::{cholesky, weighted_gram, weighted_gram_cols};
use crate::solver::{fit, solve, Dataset, FitResult, LooSolver, ModelSpec, Problem, SolverOpts};

/// Entries with `H_ii` at or above this are treated as poles of the ALO formula.
pub const H_POLE: f64 = 1.0 - 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    LoExact,
    Alo,
    Kfold,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskReport {
    pub method: Method,
    /// Per-observation scores; `+∞` marks an ALO pole (serialized as `null`).
    #[serde(with = "finite_or_null")]
    pub per_sample: Vec<f64>,
    /// Mean of the finite per-observation scores.
    pub estimate: f64,
    #[serde(default)]
    pub h_diag: Option<Vec<f64>>,
    #[serde(default)]
    pub active_set: Option<Vec<usize>>,
    /// Indices whose ALO entry hit the `H_ii → 1` pole.
    #[serde(default)]
    pub flagged: Vec<usize>,
    #[serde(default)]
    pub folds: Option<usize>,
}

impl RiskReport {
    fn new(method: Method, per_sample: Vec<f64>) -> Self {
        let flagged: Vec<usize> = per_sample
            .iter()
            .enumerate()
            .filter(|(_, v)| !v.is_finite())
            .map(|(i, _)| i)
            .collect();
        let finite: Vec<f64> = per_sample.iter().copied().filter(|v| v.is_finite()).collect();
        let estimate = if finite.is_empty() {
            f64::NAN
        } else {
            finite.iter().sum::<f64>() / finite.len() as f64
        };
        Self {
            method,
            per_sample,
            estimate,
            h_diag: None,
            active_set: None,
            flagged,
            folds: None,
        }
    }
}

mod finite_or_null {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        let opt: Vec<Option<f64>> = v.iter().map(|x| x.is_finite().then_some(*x)).collect();
        opt.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        let opt: Vec<Option<f64>> = Vec::deserialize(d)?;
        Ok(opt.into_iter().map(|x| x.unwrap_or(f64::INFINITY)).collect())
    }
}

/// Full fit, every leave-one-out fit and the resulting LO report.
#[derive(Debug, Clone)]
pub struct LooRun {
    pub report: RiskReport,
    pub full: FitResult,
    pub loo_fits: Vec<FitResult>,
}

fn full_fit(data: &Dataset, model: &ModelSpec, opts: &SolverOpts) -> Result<FitResult> {
    let f = fit(data, model, opts)?;
    if !f.converged {
        return Err(Error::FitNotConverged);
    }
    Ok(f)
}

/// Leave-`i`-out refits for every `i`, warm-started at the full fit.
fn leave_one_out_fits(
    data: &Dataset,
    model: &ModelSpec,
    full: &FitResult,
    opts: &SolverOpts,
) -> Result<Vec<FitResult>> {
    let n = data.n();
    let fits: Vec<Result<FitResult>> = if model.reg.is_smooth() {
        let loo = LooSolver::new(data, model, full)?;
        (0..n).into_par_iter().map(|i| Ok(loo.fit(i, opts))).collect()
    } else {
        (0..n)
            .into_par_iter()
            .map(|i| {
                let problem = Problem::excluding(data, model, &[i]);
                solve(&problem, opts, Some(&full.beta_hat))
            })
            .collect()
    };
    let mut out = Vec::with_capacity(n);
    for (i, f) in fits.into_iter().enumerate() {
        let f = f?;
        if !f.converged {
            return Err(Error::LooNotConverged {
                index: i,
                iterations: f.iterations,
            });
        }
        out.push(f);
    }
    Ok(out)
}

/// Exact leave-one-out: `(1/n) Σ φ(y_i, x_iᵀβ̂_{/i})`.
pub fn lo_exact(data: &Dataset, model: &ModelSpec, opts: &SolverOpts) -> Result<RiskReport> {
    lo_exact_detailed(data, model, opts).map(|r| r.report)
}

pub fn lo_exact_detailed(data: &Dataset, model: &ModelSpec, opts: &SolverOpts) -> Result<LooRun> {
    if data.n() < 2 {
        return Err(invalid("n", "leave-one-out needs at least two observations"));
    }
    let full = full_fit(data, model, opts)?;
    let loo_fits = leave_one_out_fits(data, model, &full, opts)?;
    let phi = model.error_fn();
    let per_sample = loo_fits
        .iter()
        .enumerate()
        .map(|(i, f)| phi.value(data.y[i], data.predict_row(i, &f.beta_hat)))
        .collect();
    Ok(LooRun {
        report: RiskReport::new(Method::LoExact, per_sample),
        full,
        loo_fits,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AloOpts {
    /// A coordinate is active when `|β̂_j| > active_tol · ‖β̂‖∞`.
    pub active_tol: f64,
}

impl Default for AloOpts {
    fn default() -> Self {
        Self { active_tol: 1e-8 }
    }
}

/// Approximate leave-one-out from a converged full-data fit.
pub fn alo(data: &Dataset, model: &ModelSpec, full_fit: &FitResult) -> Result<RiskReport> {
    alo_with(data, model, full_fit, &AloOpts::default())
}

pub fn alo_with(
    data: &Dataset,
    model: &ModelSpec,
    full_fit: &FitResult,
    opts: &AloOpts,
) -> Result<RiskReport> {
    if !full_fit.converged {
        return Err(Error::FitNotConverged);
    }
    model.validate_data(data)?;
    let n = data.n();
    let beta = DVector::from_column_slice(&full_fit.beta_hat);
    let z = &data.x * &beta;
    let mut d1 = vec![0.0; n];
    let mut d2 = vec![0.0; n];
    for i in 0..n {
        let e = model.loss.eval_unchecked(data.y[i], z[i]);
        if !(e.d2 > 0.0) {
            return Err(Error::ZeroCurvature(i));
        }
        d1[i] = e.d1;
        d2[i] = e.d2;
    }

    let (h_diag, active_set) = if model.reg.is_smooth() {
        let mut k = weighted_gram(&data.x, &d2);
        for (j, &b) in beta.iter().enumerate() {
            k[(j, j)] += model.lambda * model.reg.coord_derivs(b).1;
        }
        (leverages(&data.x, k, &d2)?, None)
    } else {
        let scale = full_fit.beta_hat.iter().fold(0.0f64, |m, b| m.max(b.abs()));
        let active: Vec<usize> = full_fit
            .beta_hat
            .iter()
            .enumerate()
            .filter(|(_, b)| scale > 0.0 && b.abs() > opts.active_tol * scale)
            .map(|(j, _)| j)
            .collect();
        let h = if active.is_empty() {
            vec![0.0; n]
        } else {
            let mut k = weighted_gram_cols(&data.x, &d2, &active);
            let ridge = model.reg.quadratic_part(model.lambda);
            for j in 0..active.len() {
                k[(j, j)] += ridge;
            }
            leverages(&data.x.select_columns(&active), k, &d2)?
        };
        (h, Some(active))
    };

    let phi = model.error_fn();
    let per_sample = (0..n)
        .map(|i| {
            let h = h_diag[i];
            if h >= H_POLE {
                f64::INFINITY
            } else {
                phi.value(data.y[i], z[i] + h / (1.0 - h) * d1[i] / d2[i])
            }
        })
        .collect();
    let mut report = RiskReport::new(Method::Alo, per_sample);
    report.h_diag = Some(h_diag);
    report.active_set = active_set;
    Ok(report)
}

/// `H_ii = ℓ̈_i x_iᵀ K⁻¹ x_i` from one Cholesky factorization of `K`.
fn leverages(x: &DMatrix<f64>, k: DMatrix<f64>, d2: &[f64]) -> Result<Vec<f64>> {
    let chol = cholesky(k, "ALO inner matrix")?;
    let v = chol
        .l_dirty()
        .solve_lower_triangular(&x.transpose())
        .ok_or(Error::NotPositiveDefinite("ALO inner matrix"))?;
    Ok((0..x.nrows())
        .map(|i| d2[i] * v.column(i).norm_squared())
        .collect())
}

/// Seeded partition of `0..n` into `k` folds of near-equal size: a
/// Fisher–Yates shuffle cut into contiguous blocks, the first `n mod k`
/// blocks one longer.
pub fn fold_assignment(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 || k > n {
        return Err(invalid("K", format!("need 2 <= K <= n, got K = {k}, n = {n}")));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut substream(seed, 0, Purpose::Folds));
    let base = n / k;
    let extra = n % k;
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let len = base + usize::from(f < extra);
        let mut fold = perm[start..start + len].to_vec();
        fold.sort_unstable();
        folds.push(fold);
        start += len;
    }
    Ok(folds)
}

/// K-fold cross validation with a seeded partition.
pub fn kfold_cv(
    data: &Dataset,
    model: &ModelSpec,
    k: usize,
    seed: u64,
    opts: &SolverOpts,
) -> Result<RiskReport> {
    let folds = fold_assignment(data.n(), k, seed)?;
    kfold_cv_with_folds(data, model, &folds, opts)
}

/// K-fold cross validation over an explicit partition.
pub fn kfold_cv_with_folds(
    data: &Dataset,
    model: &ModelSpec,
    folds: &[Vec<usize>],
    opts: &SolverOpts,
) -> Result<RiskReport> {
    let n = data.n();
    let mut seen = vec![false; n];
    for &i in folds.iter().flatten() {
        if i >= n || seen[i] {
            return Err(invalid("folds", "folds must partition 0..n"));
        }
        seen[i] = true;
    }
    if seen.iter().any(|s| !s) || folds.len() < 2 {
        return Err(invalid("folds", "folds must partition 0..n into at least two parts"));
    }
    let full = full_fit(data, model, opts)?;
    let phi = model.error_fn();
    let mut per_sample = vec![0.0; n];

    if folds.iter().all(|f| f.len() == 1) {
        // singleton folds: identical computation to exact leave-one-out
        let fits = leave_one_out_fits(data, model, &full, opts)?;
        for (i, f) in fits.iter().enumerate() {
            per_sample[i] = phi.value(data.y[i], data.predict_row(i, &f.beta_hat));
        }
    } else {
        let fits: Vec<Result<FitResult>> = folds
            .par_iter()
            .map(|fold| {
                let problem = Problem::excluding(data, model, fold);
                solve(&problem, opts, Some(&full.beta_hat))
            })
            .collect();
        for (f, (fold, res)) in folds.iter().zip(fits).enumerate() {
            let res = res?;
            if !res.converged {
                return Err(Error::FoldNotConverged {
                    fold: f,
                    iterations: res.iterations,
                });
            }
            for &i in fold {
                per_sample[i] = phi.value(data.y[i], data.predict_row(i, &res.beta_hat));
            }
        }
    }
    let mut report = RiskReport::new(Method::Kfold, per_sample);
    report.folds = Some(folds.len());
    Ok(report)
}
