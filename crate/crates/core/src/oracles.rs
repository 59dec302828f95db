//! Ground-truth out-of-sample error `E[φ(y_o, x_oᵀβ̂) | D]` for simulated
//! data: closed form for the linear-Gaussian model, Gauss–Hermite quadrature
//! for the logistic model and seeded Monte Carlo for everything else.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::{draw_feature, substream, Covariance, Purpose, ResponseFamily};
use crate::error::{invalid, Error, Result};
use crate::losses::{sigmoid, softplus, Loss, ResolvedErrorFn};
use crate::solver::ModelSpec;

pub const DEFAULT_QUAD_ORDER: usize = 64;

/// The distribution a simulated dataset was drawn from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrueModel {
    pub beta_star: Vec<f64>,
    pub covariance: Covariance,
    pub family: ResponseFamily,
}

impl TrueModel {
    pub fn validate(&self) -> Result<()> {
        self.covariance.validate(self.beta_star.len())?;
        self.family.validate()
    }

    fn check_len(&self, beta_hat: &[f64]) -> Result<()> {
        if beta_hat.len() != self.beta_star.len() {
            return Err(Error::Dimension(format!(
                "beta_hat has length {} but beta_star has length {}",
                beta_hat.len(),
                self.beta_star.len()
            )));
        }
        Ok(())
    }
}

/// Gauss–Hermite rule for `∫ e^{-x²} f(x) dx`.
#[derive(Debug, Clone)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussHermite {
    /// Nodes by Newton iteration on the orthonormal Hermite recurrence.
    pub fn new(order: usize) -> Result<Self> {
        if order == 0 {
            return Err(invalid("quad_order", "must be positive"));
        }
        let n = order;
        let pim4 = std::f64::consts::PI.powf(-0.25);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = (n + 1) / 2;
        let nf = n as f64;
        let mut z = 0.0f64;
        for i in 0..m {
            z = match i {
                0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
                1 => z - 1.14 * nf.powf(0.426) / z,
                2 => 1.86 * z - 0.86 * nodes[0],
                3 => 1.91 * z - 0.91 * nodes[1],
                _ => 2.0 * z - nodes[i - 2],
            };
            let mut pp = 0.0;
            for _ in 0..100 {
                let mut p1 = pim4;
                let mut p2 = 0.0;
                for j in 0..n {
                    let p3 = p2;
                    p2 = p1;
                    let jf = j as f64;
                    p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
                }
                pp = (2.0 * nf).sqrt() * p2;
                let z1 = z;
                z = z1 - p1 / pp;
                if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                    break;
                }
            }
            nodes[i] = z;
            nodes[n - 1 - i] = -z;
            weights[i] = 2.0 / (pp * pp);
            weights[n - 1 - i] = weights[i];
        }
        Ok(Self { nodes, weights })
    }

    /// `E f(V)` for `V ~ N(0, variance)`.
    pub fn normal_expectation(&self, variance: f64, f: impl Fn(f64) -> f64) -> f64 {
        let s = (2.0 * variance.max(0.0)).sqrt();
        let total: f64 = self
            .nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(s * x))
            .sum();
        total / std::f64::consts::PI.sqrt()
    }
}

/// `σ² + ‖Σ^{1/2}(β̂ − β*)‖²`, the expected squared prediction error
/// `E(y_o − x_oᵀβ̂)²` under the linear-Gaussian model.
pub fn err_out_linear(beta_hat: &[f64], truth: &TrueModel) -> Result<f64> {
    let noise_var = match truth.family {
        ResponseFamily::Linear { noise_var } => noise_var,
        _ => return Err(invalid("family", "err_out_linear needs the linear family")),
    };
    truth.check_len(beta_hat)?;
    truth.covariance.validate(beta_hat.len())?;
    let diff: Vec<f64> = beta_hat.iter().zip(&truth.beta_star).map(|(a, b)| a - b).collect();
    Ok(noise_var + truth.covariance.bilinear(&diff, &diff))
}

/// Expected logistic loss of `β̂` under the logistic model.
///
/// With `Z = x_oᵀβ*` and `W = x_oᵀβ̂` jointly Gaussian,
/// `E[−y W + log(1+e^W)] = −c E[Z σ(Z)] + E log(1 + e^W)` where
/// `c = β̂ᵀΣβ* / β*ᵀΣβ*` is the regression coefficient of `W` on `Z`.
pub fn err_out_logistic(beta_hat: &[f64], truth: &TrueModel, quad_order: usize) -> Result<f64> {
    if !matches!(truth.family, ResponseFamily::Logistic) {
        return Err(invalid("family", "err_out_logistic needs the logistic family"));
    }
    if quad_order < 20 {
        return Err(invalid("quad_order", format!("must be at least 20, got {quad_order}")));
    }
    truth.check_len(beta_hat)?;
    truth.covariance.validate(beta_hat.len())?;
    let cov = &truth.covariance;
    let var_z = cov.bilinear(&truth.beta_star, &truth.beta_star);
    if !(var_z > 0.0) {
        return Err(invalid("beta_star", "must be nonzero"));
    }
    let cross = cov.bilinear(beta_hat, &truth.beta_star);
    let var_w = cov.bilinear(beta_hat, beta_hat);
    let gh = GaussHermite::new(quad_order)?;
    let first = gh.normal_expectation(var_z, |z| z * sigmoid(z));
    let second = gh.normal_expectation(var_w, softplus);
    Ok(-(cross / var_z) * first + second)
}

/// Streaming mean/variance accumulator with the parallel merge rule.
#[derive(Debug, Clone, Copy, Default)]
pub struct Moments {
    pub count: u64,
    pub mean: f64,
    m2: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let d = x - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(self, other: Moments) -> Moments {
        if self.count == 0 {
            return other;
        }
        if other.count == 0 {
            return self;
        }
        let count = self.count + other.count;
        let d = other.mean - self.mean;
        let mean = self.mean + d * other.count as f64 / count as f64;
        let m2 = self.m2 + other.m2 + d * d * self.count as f64 * other.count as f64 / count as f64;
        Moments { count, mean, m2 }
    }

    pub fn sample_variance(&self) -> f64 {
        if self.count < 2 {
            f64::NAN
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    pub fn std_err(&self) -> f64 {
        (self.sample_variance() / self.count as f64).sqrt()
    }
}

const MC_CHUNK: usize = 1 << 16;

/// Monte-Carlo estimate of `E[φ(y_o, x_oᵀβ̂)]` with its standard error.
///
/// Draws are split in fixed chunks of 65 536, each on its own substream, so
/// the result depends only on `(seed, m)` and not on thread scheduling.
pub fn err_out_monte_carlo(
    beta_hat: &[f64],
    truth: &TrueModel,
    model: &ModelSpec,
    m: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if m < 100 {
        return Err(invalid("m", format!("need at least 100 draws, got {m}")));
    }
    truth.validate()?;
    truth.check_len(beta_hat)?;
    let phi = model.error_fn();
    check_family(&phi, &truth.family)?;
    let p = beta_hat.len();
    let factor = truth.covariance.factor(p)?;
    let chunks = m.div_ceil(MC_CHUNK);
    let total = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let len = MC_CHUNK.min(m - c * MC_CHUNK);
            let mut rng = substream(seed, c as u64, Purpose::MonteCarlo);
            let mut x = vec![0.0; p];
            let mut acc = Moments::default();
            for _ in 0..len {
                draw_feature(&mut rng, p, &truth.covariance, factor.as_ref(), &mut x);
                let (eta_star, eta_hat) = x
                    .iter()
                    .zip(&truth.beta_star)
                    .zip(beta_hat)
                    .fold((0.0, 0.0), |(a, b), ((xi, bs), bh)| (a + xi * bs, b + xi * bh));
                let y = truth.family.draw(&mut rng, eta_star);
                acc.push(phi.value(y, eta_hat));
            }
            acc
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold(Moments::default(), Moments::merge);
    Ok((total.mean, total.std_err()))
}

fn check_family(phi: &ResolvedErrorFn, family: &ResponseFamily) -> Result<()> {
    let ok = match (phi, family) {
        (ResolvedErrorFn::Loss(Loss::Logistic), f) => matches!(f, ResponseFamily::Logistic),
        (ResolvedErrorFn::Loss(Loss::PoissonSoftRect | Loss::NegativeBinomial { .. }), f) => {
            matches!(f, ResponseFamily::PoissonSoftRect | ResponseFamily::NegativeBinomial { .. })
        }
        _ => true,
    };
    if ok {
        Ok(())
    } else {
        Err(invalid("family", "error function does not match the response family"))
    }
}

/// How [`err_out`] evaluated the oracle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleMethod {
    ClosedForm,
    Quadrature,
    MonteCarlo,
}

/// Out-of-sample error of `β̂` under `model.phi`, choosing the exact route
/// where one exists and Monte Carlo with `mc_draws` draws otherwise.
pub fn err_out(
    beta_hat: &[f64],
    truth: &TrueModel,
    model: &ModelSpec,
    mc_draws: usize,
    seed: u64,
) -> Result<(f64, OracleMethod)> {
    match (model.error_fn(), truth.family) {
        (ResolvedErrorFn::SquaredError, ResponseFamily::Linear { .. }) => {
            Ok((err_out_linear(beta_hat, truth)?, OracleMethod::ClosedForm))
        }
        (ResolvedErrorFn::Loss(Loss::Squared), ResponseFamily::Linear { .. }) => {
            Ok((0.5 * err_out_linear(beta_hat, truth)?, OracleMethod::ClosedForm))
        }
        (ResolvedErrorFn::Loss(Loss::Logistic), ResponseFamily::Logistic)
            if truth.beta_star.iter().any(|&b| b != 0.0) =>
        {
            Ok((
                err_out_logistic(beta_hat, truth, DEFAULT_QUAD_ORDER)?,
                OracleMethod::Quadrature,
            ))
        }
        _ => {
            let (mean, _) = err_out_monte_carlo(beta_hat, truth, model, mc_draws, seed)?;
            Ok((mean, OracleMethod::MonteCarlo))
        }
    }
}

/// Draws `m` fresh observations from the truth; used by tests and audits.
pub fn sample_fresh<R: Rng>(
    rng: &mut R,
    truth: &TrueModel,
    m: usize,
) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let p = truth.beta_star.len();
    let factor = truth.covariance.factor(p)?;
    let mut xs = Vec::with_capacity(m);
    let mut ys = Vec::with_capacity(m);
    for _ in 0..m {
        let mut x = vec![0.0; p];
        draw_feature(rng, p, &truth.covariance, factor.as_ref(), &mut x);
        let eta: f64 = x.iter().zip(&truth.beta_star).map(|(a, b)| a * b).sum();
        ys.push(truth.family.draw(rng, eta));
        xs.push(x);
    }
    Ok((xs, ys))
}
