//! Penalized GLM fitting.
//!
//! Smooth objectives (smooth loss + ridge / smoothed elastic net) are solved
//! by damped Newton with an Armijo line search. Objectives with an `ℓ1` part
//! go through monotone FISTA with backtracking. Leave-one-out and fold fits
//! reuse the same code with a 0/1 row weight vector.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{cholesky, gram_spectral_norm, weighted_gram};
use crate::losses::{ErrorFn, Loss, ResolvedErrorFn};
use crate::regularizers::Regularizer;

const ARMIJO: f64 = 1e-4;

/// Design matrix and response.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::Dimension(format!(
                "design has {} rows but response has {} entries",
                x.nrows(),
                y.len()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("design matrix"));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("response"));
        }
        Ok(Self { x, y })
    }

    pub fn from_rows(rows: &[Vec<f64>], y: &[f64]) -> Result<Self> {
        let p = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != p) {
            return Err(Error::Dimension("ragged design rows".into()));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        Self::new(
            DMatrix::from_row_slice(rows.len(), p, &flat),
            DVector::from_column_slice(y),
        )
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Linear predictor `x_iᵀβ`.
    pub fn predict_row(&self, i: usize, beta: &[f64]) -> f64 {
        self.x
            .row(i)
            .iter()
            .zip(beta)
            .map(|(a, b)| a * b)
            .sum()
    }

    pub fn row_norm(&self, i: usize) -> f64 {
        self.x.row(i).norm()
    }

    /// Copy with the given rows removed.
    pub fn without_rows(&self, drop: &[usize]) -> Dataset {
        let keep: Vec<usize> = (0..self.n()).filter(|i| !drop.contains(i)).collect();
        Dataset {
            x: self.x.select_rows(&keep),
            y: DVector::from_iterator(keep.len(), keep.iter().map(|&i| self.y[i])),
        }
    }
}

/// Loss, regularizer, penalty level and error function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub loss: Loss,
    pub reg: Regularizer,
    pub lambda: f64,
    #[serde(default)]
    pub phi: ErrorFn,
}

impl ModelSpec {
    pub fn new(loss: Loss, reg: Regularizer, lambda: f64) -> Self {
        Self {
            loss,
            reg,
            lambda,
            phi: ErrorFn::SameAsLoss,
        }
    }

    pub fn with_phi(mut self, phi: ErrorFn) -> Self {
        self.phi = phi;
        self
    }

    pub fn error_fn(&self) -> ResolvedErrorFn {
        self.phi.resolve(&self.loss)
    }

    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        self.reg.validate()?;
        if let ErrorFn::Loss { loss } = self.phi {
            loss.validate()?;
        }
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return Err(invalid("lambda", format!("must be positive, got {}", self.lambda)));
        }
        Ok(())
    }

    pub(crate) fn validate_data(&self, data: &Dataset) -> Result<()> {
        self.validate()?;
        for &y in data.y.iter() {
            self.loss.check_response(y)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOpts {
    pub tol: f64,
    pub max_iter: usize,
    pub line_search_shrink: f64,
    pub warm_start: Option<Vec<f64>>,
}

impl Default for SolverOpts {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 500,
            line_search_shrink: 0.5,
            warm_start: None,
        }
    }
}

impl SolverOpts {
    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(invalid("tol", "must be positive"));
        }
        if self.max_iter == 0 {
            return Err(invalid("max_iter", "must be at least 1"));
        }
        if !(self.line_search_shrink > 0.0 && self.line_search_shrink < 1.0) {
            return Err(invalid("line_search_shrink", "must lie in (0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub beta_hat: Vec<f64>,
    pub objective: f64,
    /// `‖∇F‖∞` on the Newton path, the prox fixed-point residual on the
    /// proximal path.
    pub grad_inf_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Final proximal step size (proximal path only).
    pub step_size: Option<f64>,
    /// Number of iterations where the Newton system was singular and a
    /// gradient step was taken instead.
    pub gradient_fallbacks: usize,
}

/// Objective restricted to rows with nonzero weight.
pub(crate) struct Problem<'a> {
    pub data: &'a Dataset,
    pub model: &'a ModelSpec,
    pub weights: Vec<f64>,
}

pub(crate) struct LossTerms {
    pub value: f64,
    pub d1: Vec<f64>,
    pub d2: Vec<f64>,
}

impl<'a> Problem<'a> {
    pub fn full(data: &'a Dataset, model: &'a ModelSpec) -> Self {
        Self {
            data,
            model,
            weights: vec![1.0; data.n()],
        }
    }

    pub fn excluding(data: &'a Dataset, model: &'a ModelSpec, rows: &[usize]) -> Self {
        let mut p = Self::full(data, model);
        for &i in rows {
            p.weights[i] = 0.0;
        }
        p
    }

    pub fn loss_value(&self, z: &DVector<f64>) -> f64 {
        let loss = &self.model.loss;
        self.weights
            .iter()
            .enumerate()
            .filter(|(_, &w)| w != 0.0)
            .map(|(i, &w)| w * loss.eval_unchecked(self.data.y[i], z[i]).value)
            .sum()
    }

    pub fn loss_terms(&self, z: &DVector<f64>) -> LossTerms {
        let loss = &self.model.loss;
        let n = self.data.n();
        let mut t = LossTerms {
            value: 0.0,
            d1: vec![0.0; n],
            d2: vec![0.0; n],
        };
        for i in 0..n {
            let w = self.weights[i];
            if w == 0.0 {
                continue;
            }
            let e = loss.eval_unchecked(self.data.y[i], z[i]);
            t.value += w * e.value;
            t.d1[i] = w * e.d1;
            t.d2[i] = w * e.d2;
        }
        t
    }

    pub fn objective(&self, beta: &DVector<f64>, z: &DVector<f64>) -> f64 {
        self.loss_value(z) + self.model.lambda * self.model.reg.value(beta.as_slice())
    }

    /// Gradient of the full smooth objective.
    pub fn gradient(&self, beta: &DVector<f64>, terms: &LossTerms) -> DVector<f64> {
        let mut g = self.data.x.tr_mul(&DVector::from_column_slice(&terms.d1));
        let lam = self.model.lambda;
        for (gj, &b) in g.iter_mut().zip(beta.iter()) {
            *gj += lam * self.model.reg.coord_derivs(b).0;
        }
        g
    }

    /// `Xᵀ diag(w ℓ̈) X + λ diag(r″)`.
    pub fn hessian(&self, beta: &DVector<f64>, terms: &LossTerms) -> DMatrix<f64> {
        let mut h = weighted_gram(&self.data.x, &terms.d2);
        let lam = self.model.lambda;
        for (j, &b) in beta.iter().enumerate() {
            h[(j, j)] += lam * self.model.reg.coord_derivs(b).1;
        }
        h
    }
}

fn start_point(p: usize, warm: Option<&[f64]>) -> Result<DVector<f64>> {
    match warm {
        Some(w) if w.len() != p => Err(Error::Dimension(format!(
            "warm start has length {} but p = {p}",
            w.len()
        ))),
        Some(w) => Ok(DVector::from_column_slice(w)),
        None => Ok(DVector::zeros(p)),
    }
}

/// Fits `argmin Σ ℓ(y_i | x_iᵀβ) + λ r(β)`.
pub fn fit(data: &Dataset, model: &ModelSpec, opts: &SolverOpts) -> Result<FitResult> {
    model.validate_data(data)?;
    opts.validate()?;
    let problem = Problem::full(data, model);
    solve(&problem, opts, opts.warm_start.as_deref())
}

/// Fits the problem with observation `i` removed.
///
/// `warm` takes precedence over `opts.warm_start`.
pub fn fit_leave_one_out(
    data: &Dataset,
    model: &ModelSpec,
    i: usize,
    warm: Option<&[f64]>,
    opts: &SolverOpts,
) -> Result<FitResult> {
    if data.n() < 2 {
        return Err(invalid("n", "leave-one-out needs at least two observations"));
    }
    if i >= data.n() {
        return Err(invalid("i", format!("index {i} out of range for n = {}", data.n())));
    }
    model.validate_data(data)?;
    opts.validate()?;
    let problem = Problem::excluding(data, model, &[i]);
    solve(&problem, opts, warm.or(opts.warm_start.as_deref()))
}

pub(crate) fn solve(problem: &Problem, opts: &SolverOpts, warm: Option<&[f64]>) -> Result<FitResult> {
    let beta0 = start_point(problem.data.p(), warm)?;
    if problem.model.reg.is_smooth() {
        Ok(newton(problem, opts, beta0))
    } else {
        Ok(fista(problem, opts, beta0))
    }
}

fn newton(problem: &Problem, opts: &SolverOpts, mut beta: DVector<f64>) -> FitResult {
    let x = &problem.data.x;
    let mut z = x * &beta;
    let mut terms = problem.loss_terms(&z);
    let mut obj = terms.value + problem.model.lambda * problem.model.reg.value(beta.as_slice());
    let mut fallbacks = 0;
    let mut iterations = 0;
    let mut grad = problem.gradient(&beta, &terms);
    let mut gnorm = grad.amax();

    while gnorm > opts.tol && iterations < opts.max_iter {
        iterations += 1;
        let hess = problem.hessian(&beta, &terms);
        let dir = match Cholesky::new(hess) {
            Some(ch) => -ch.solve(&grad),
            None => {
                fallbacks += 1;
                -&grad
            }
        };
        match line_search(problem, &beta, &z, obj, &grad, &dir, opts.line_search_shrink) {
            Some((b, zz, o)) => {
                beta = b;
                z = zz;
                obj = o;
            }
            None => break,
        }
        terms = problem.loss_terms(&z);
        grad = problem.gradient(&beta, &terms);
        gnorm = grad.amax();
    }

    FitResult {
        beta_hat: beta.as_slice().to_vec(),
        objective: obj,
        grad_inf_norm: gnorm,
        iterations,
        converged: gnorm <= opts.tol,
        step_size: None,
        gradient_fallbacks: fallbacks,
    }
}

/// Armijo backtracking along `dir`. Returns `None` when no decrease is found.
pub(crate) fn line_search(
    problem: &Problem,
    beta: &DVector<f64>,
    z: &DVector<f64>,
    obj: f64,
    grad: &DVector<f64>,
    dir: &DVector<f64>,
    shrink: f64,
) -> Option<(DVector<f64>, DVector<f64>, f64)> {
    let slope = grad.dot(dir);
    if !(slope < 0.0) {
        return None;
    }
    let xdir = &problem.data.x * dir;
    // The predicted decrease is below what the objective can resolve: the
    // iterate is already in the quadratic region, so take the full step.
    if -slope <= 1e-13 * obj.abs().max(1.0) {
        let cand = beta + dir;
        let zc = z + &xdir;
        let oc = problem.objective(&cand, &zc);
        return oc.is_finite().then_some((cand, zc, oc));
    }
    let mut t = 1.0;
    for _ in 0..80 {
        let cand = beta + dir * t;
        let zc = z + &xdir * t;
        let oc = problem.objective(&cand, &zc);
        if oc.is_finite() && oc <= obj + ARMIJO * t * slope {
            return Some((cand, zc, oc));
        }
        t *= shrink;
    }
    None
}

fn fista(problem: &Problem, opts: &SolverOpts, start: DVector<f64>) -> FitResult {
    let x = &problem.data.x;
    let reg = problem.model.reg;
    let lam = problem.model.lambda;
    let (l1w, l2w) = reg.split_weights(lam);
    let composite = |beta: &DVector<f64>, loss: f64| {
        loss + beta.iter().map(|b| l1w * b.abs() + 0.5 * l2w * b * b).sum::<f64>()
    };
    let prox = |v: &mut DVector<f64>, step: f64| {
        for b in v.iter_mut() {
            *b = crate::regularizers::soft_threshold(*b, step * l1w) / (1.0 + step * l2w);
        }
    };

    // Lipschitz estimate of the smooth part's gradient; backtracking corrects it.
    let curvature_scale = match problem.model.loss {
        Loss::Squared => 1.0,
        _ => 0.25,
    };
    let mut lip = (curvature_scale * gram_spectral_norm(x, 30)).max(1e-12);

    let mut xk = start;
    let mut zx = x * &xk;
    let mut obj = composite(&xk, problem.loss_value(&zx));
    let mut yk = xk.clone();
    let mut zy = zx.clone();
    let mut t = 1.0f64;
    let mut iterations = 0;
    let mut residual = f64::INFINITY;

    while iterations < opts.max_iter {
        iterations += 1;
        let ty = problem.loss_terms(&zy);
        let gy = x.tr_mul(&DVector::from_column_slice(&ty.d1));

        // backtracking on the smooth part
        let (cand, zc, fc) = loop {
            let mut c = &yk - &gy * (1.0 / lip);
            prox(&mut c, 1.0 / lip);
            let zc = x * &c;
            let fc = problem.loss_value(&zc);
            let diff = &c - &yk;
            let model_bound = ty.value + gy.dot(&diff) + 0.5 * lip * diff.norm_squared();
            let accept = fc.is_finite() && fc <= model_bound + 1e-12 * model_bound.abs().max(1.0);
            if accept || lip > 1e300 {
                break (c, zc, fc);
            }
            lip *= 2.0;
        };
        let cand_obj = composite(&cand, fc);
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let step_change = (&cand - &yk).amax();

        let prev = xk.clone();
        let zprev = zx.clone();
        // From a restart the step is plain proximal gradient, which cannot
        // increase the objective in exact arithmetic.
        if cand_obj <= obj || t == 1.0 {
            xk = cand.clone();
            zx = zc.clone();
            obj = cand_obj;
            // y = x + ((t−1)/t') (x − x_prev)
            let mom = (t - 1.0) / t_next;
            yk = &xk + (&xk - &prev) * mom;
            zy = &zx + (&zx - &zprev) * mom;
            t = t_next;
        } else {
            // monotone safeguard with momentum restart
            yk = xk.clone();
            zy = zx.clone();
            t = 1.0;
        }

        if step_change <= opts.tol || iterations % 10 == 0 {
            residual = prox_residual(problem, &xk, &zx, lip, &prox);
            if residual <= opts.tol {
                break;
            }
        }
    }
    if residual.is_infinite() {
        residual = prox_residual(problem, &xk, &zx, lip, &prox);
    }

    FitResult {
        beta_hat: xk.as_slice().to_vec(),
        objective: obj,
        grad_inf_norm: residual,
        iterations,
        converged: residual <= opts.tol,
        step_size: Some(1.0 / lip),
        gradient_fallbacks: 0,
    }
}

/// `‖β − prox(β − η∇f(β))‖∞` with `η = 1/lip`.
fn prox_residual(
    problem: &Problem,
    beta: &DVector<f64>,
    z: &DVector<f64>,
    lip: f64,
    prox: &impl Fn(&mut DVector<f64>, f64),
) -> f64 {
    let terms = problem.loss_terms(z);
    let g = problem.data.x.tr_mul(&DVector::from_column_slice(&terms.d1));
    let mut c = beta - g * (1.0 / lip);
    prox(&mut c, 1.0 / lip);
    (beta - c).amax()
}

/// Fixed-point residual of a coefficient vector for a nonsmooth problem, at
/// the given step size. Exposed so callers can check optimality independently.
pub fn prox_fixed_point_residual(
    data: &Dataset,
    model: &ModelSpec,
    beta: &[f64],
    step: f64,
) -> Result<f64> {
    let problem = Problem::full(data, model);
    let b = DVector::from_column_slice(beta);
    let z = &data.x * &b;
    let terms = problem.loss_terms(&z);
    let g = data.x.tr_mul(&DVector::from_column_slice(&terms.d1));
    let v = &b - g * step;
    let out = model.reg.prox(v.as_slice(), step, model.lambda)?;
    Ok(beta
        .iter()
        .zip(&out)
        .map(|(a, c)| (a - c).abs())
        .fold(0.0, f64::max))
}

/// Gradient sup-norm of the smooth objective at `beta`.
pub fn gradient_inf_norm(data: &Dataset, model: &ModelSpec, beta: &[f64]) -> f64 {
    let problem = Problem::full(data, model);
    let b = DVector::from_column_slice(beta);
    let z = &data.x * &b;
    let terms = problem.loss_terms(&z);
    problem.gradient(&b, &terms).amax()
}

/// Objective value `Σ ℓ + λ r` at `beta`.
pub fn objective(data: &Dataset, model: &ModelSpec, beta: &[f64]) -> f64 {
    let problem = Problem::full(data, model);
    let b = DVector::from_column_slice(beta);
    let z = &data.x * &b;
    problem.objective(&b, &z)
}

/// Leave-one-out refits of a smooth problem that reuse one factorization of
/// the full-data Hessian.
///
/// Each refit iterates `β ← β − t M_i⁻¹ ∇F_{/i}(β)` where
/// `M_i = K − ℓ̈_i x_i x_iᵀ` is the leave-`i`-out Hessian frozen at the full
/// fit and applied through Sherman–Morrison. The first iterate from the full
/// fit is exactly the one-step Newton approximation; the iteration continues
/// until the leave-`i`-out gradient meets the solver tolerance, so the result
/// is the exact refit. Slow or indefinite cases fall back to plain Newton.
pub struct LooSolver<'a> {
    data: &'a Dataset,
    model: &'a ModelSpec,
    beta_full: DVector<f64>,
    z_full: DVector<f64>,
    d2_full: Vec<f64>,
    chol: Cholesky<f64, Dyn>,
}

const CHORD_MAX_ITER: usize = 60;

impl<'a> LooSolver<'a> {
    pub fn new(data: &'a Dataset, model: &'a ModelSpec, full: &FitResult) -> Result<Self> {
        if !model.reg.is_smooth() {
            return Err(Error::WrongRegularizer {
                expected: "smooth",
                got: model.reg.name(),
            });
        }
        let problem = Problem::full(data, model);
        let beta_full = DVector::from_column_slice(&full.beta_hat);
        let z_full = &data.x * &beta_full;
        let terms = problem.loss_terms(&z_full);
        let chol = cholesky(problem.hessian(&beta_full, &terms), "full-data Hessian")?;
        Ok(Self {
            data,
            model,
            beta_full,
            z_full,
            d2_full: terms.d2,
            chol,
        })
    }

    pub fn fit(&self, i: usize, opts: &SolverOpts) -> FitResult {
        let problem = Problem::excluding(self.data, self.model, &[i]);
        let xi = self.data.x.row(i).transpose();
        let u = self.chol.solve(&xi);
        let denom = 1.0 - self.d2_full[i] * xi.dot(&u);

        let mut beta = self.beta_full.clone();
        let mut z = self.z_full.clone();
        let mut terms = problem.loss_terms(&z);
        let mut obj = terms.value + self.model.lambda * self.model.reg.value(beta.as_slice());
        let mut grad = problem.gradient(&beta, &terms);
        let mut gnorm = grad.amax();
        let mut iterations = 0;

        if denom > 1e-12 {
            while gnorm > opts.tol && iterations < CHORD_MAX_ITER.min(opts.max_iter) {
                iterations += 1;
                let kg = self.chol.solve(&grad);
                let corr = self.d2_full[i] * xi.dot(&kg) / denom;
                let dir = -(kg + &u * corr);
                match line_search(&problem, &beta, &z, obj, &grad, &dir, opts.line_search_shrink) {
                    Some((b, zz, o)) => {
                        beta = b;
                        z = zz;
                        obj = o;
                    }
                    None => break,
                }
                terms = problem.loss_terms(&z);
                grad = problem.gradient(&beta, &terms);
                gnorm = grad.amax();
            }
        }

        if gnorm <= opts.tol {
            return FitResult {
                beta_hat: beta.as_slice().to_vec(),
                objective: obj,
                grad_inf_norm: gnorm,
                iterations,
                converged: true,
                step_size: None,
                gradient_fallbacks: 0,
            };
        }
        let mut res = newton(&problem, opts, beta);
        res.iterations += iterations;
        res
    }
}
