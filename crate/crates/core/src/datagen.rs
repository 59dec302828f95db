//! Seeded synthetic data.
//!
//! All randomness comes from ChaCha20 (`rand_chacha`), which is portable and
//! bit-reproducible across platforms. A run seed keys the generator and each
//! (replicate, purpose) pair selects a distinct ChaCha stream, so replicate
//! substreams never overlap. Gaussian draws use `rand_distr`'s Ziggurat
//! sampler; Laplace draws use the inverse CDF.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Gamma, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::linalg::cholesky;
use crate::losses::{sigmoid, softplus};
use crate::solver::Dataset;

/// What a substream is used for; keeps design, coefficients, responses and
/// oracle draws of one replicate independent of each other.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Design = 0,
    Beta = 1,
    Response = 2,
    Folds = 3,
    MonteCarlo = 4,
    Audit = 5,
}

/// Generator for `(seed, replicate, purpose)`.
pub fn substream(seed: u64, replicate: u64, purpose: Purpose) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(replicate.wrapping_mul(16).wrapping_add(purpose as u64));
    rng
}

/// Feature covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Covariance {
    /// `c·I`
    ScaledIdentity { scale: f64 },
    /// Explicit SPD matrix, row-major.
    Dense { dim: usize, entries: Vec<f64> },
}

impl Covariance {
    pub fn identity() -> Self {
        Covariance::ScaledIdentity { scale: 1.0 }
    }

    pub fn dense(m: &DMatrix<f64>) -> Self {
        let mut entries = Vec::with_capacity(m.len());
        for i in 0..m.nrows() {
            entries.extend(m.row(i).iter());
        }
        Covariance::Dense {
            dim: m.nrows(),
            entries,
        }
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        match self {
            Covariance::ScaledIdentity { scale } => {
                if scale.is_finite() && *scale > 0.0 {
                    Ok(())
                } else {
                    Err(invalid("covariance", format!("scale must be positive, got {scale}")))
                }
            }
            Covariance::Dense { dim, entries } => {
                if *dim != p || entries.len() != p * p {
                    return Err(invalid("covariance", format!("expected a {p}x{p} matrix")));
                }
                let m = self.matrix(p);
                if (&m - m.transpose()).amax() > 1e-12 * m.amax().max(1.0) {
                    return Err(invalid("covariance", "matrix is not symmetric"));
                }
                cholesky(m, "covariance").map(|_| ())
            }
        }
    }

    pub fn matrix(&self, p: usize) -> DMatrix<f64> {
        match self {
            Covariance::ScaledIdentity { scale } => DMatrix::identity(p, p) * *scale,
            Covariance::Dense { dim, entries } => DMatrix::from_row_slice(*dim, *dim, entries),
        }
    }

    /// `vᵀ Σ w`
    pub fn bilinear(&self, v: &[f64], w: &[f64]) -> f64 {
        match self {
            Covariance::ScaledIdentity { scale } => {
                scale * v.iter().zip(w).map(|(a, b)| a * b).sum::<f64>()
            }
            Covariance::Dense { .. } => {
                let m = self.matrix(v.len());
                let vv = DVector::from_column_slice(v);
                let ww = DVector::from_column_slice(w);
                vv.dot(&(m * ww))
            }
        }
    }

    pub fn trace(&self, p: usize) -> f64 {
        match self {
            Covariance::ScaledIdentity { scale } => scale * p as f64,
            Covariance::Dense { .. } => self.matrix(p).trace(),
        }
    }

    /// `σ_max(Σ)`.
    pub fn max_eigenvalue(&self, p: usize) -> f64 {
        match self {
            Covariance::ScaledIdentity { scale } => *scale,
            Covariance::Dense { .. } => {
                let m = self.matrix(p);
                nalgebra::SymmetricEigen::new(m)
                    .eigenvalues
                    .iter()
                    .copied()
                    .fold(f64::NEG_INFINITY, f64::max)
            }
        }
    }

    /// Lower-triangular factor `L` with `L Lᵀ = Σ` (None for scaled identity).
    pub(crate) fn factor(&self, p: usize) -> Result<Option<DMatrix<f64>>> {
        match self {
            Covariance::ScaledIdentity { .. } => Ok(None),
            Covariance::Dense { .. } => Ok(Some(cholesky(self.matrix(p), "covariance")?.l())),
        }
    }
}

/// Draws one `N(0, Σ)` vector given the optional Cholesky factor.
pub(crate) fn draw_feature<R: Rng>(
    rng: &mut R,
    p: usize,
    cov: &Covariance,
    factor: Option<&DMatrix<f64>>,
    out: &mut [f64],
) {
    match (cov, factor) {
        (Covariance::ScaledIdentity { scale }, _) => {
            let s = scale.sqrt();
            for v in out.iter_mut() {
                let g: f64 = StandardNormal.sample(rng);
                *v = s * g;
            }
        }
        (_, Some(l)) => {
            let g: Vec<f64> = (0..p).map(|_| StandardNormal.sample(rng)).collect();
            for i in 0..p {
                out[i] = (0..=i).map(|j| l[(i, j)] * g[j]).sum();
            }
        }
        (Covariance::Dense { .. }, None) => unreachable!("dense covariance needs its factor"),
    }
}

/// `n × p` design with i.i.d. `N(0, Σ)` rows. Rows are drawn in order, each
/// row's `p` normals consumed left to right.
pub fn gen_design(n: usize, p: usize, cov: &Covariance, seed: u64) -> Result<DMatrix<f64>> {
    gen_design_with(n, p, cov, &mut substream(seed, 0, Purpose::Design))
}

pub fn gen_design_with<R: Rng>(n: usize, p: usize, cov: &Covariance, rng: &mut R) -> Result<DMatrix<f64>> {
    cov.validate(p)?;
    let factor = cov.factor(p)?;
    let mut x = DMatrix::zeros(n, p);
    let mut row = vec![0.0; p];
    for i in 0..n {
        draw_feature(rng, p, cov, factor.as_ref(), &mut row);
        for (j, v) in row.iter().enumerate() {
            x[(i, j)] = *v;
        }
    }
    Ok(x)
}

/// Distribution of the nonzero entries of `β*`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BetaDist {
    /// Zero-mean, unit-variance Laplace (scale `1/√2`).
    LaplaceUnit,
    /// Standard normal.
    GaussianUnit,
    Constant { value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Support {
    /// Nonzeros in the first `k` coordinates.
    #[default]
    First,
    /// Nonzeros at `k` positions chosen uniformly without replacement.
    Random,
}

pub fn laplace_unit<R: Rng>(rng: &mut R) -> f64 {
    // inverse CDF of Laplace(0, b) with b = 1/√2
    let b = std::f64::consts::FRAC_1_SQRT_2;
    let u: f64 = rng.random::<f64>() - 0.5;
    -b * u.signum() * (1.0 - 2.0 * u.abs()).ln()
}

pub fn gen_beta_star(p: usize, k: usize, dist: BetaDist, support: Support, seed: u64) -> Result<Vec<f64>> {
    gen_beta_star_with(p, k, dist, support, &mut substream(seed, 0, Purpose::Beta))
}

pub fn gen_beta_star_with<R: Rng>(
    p: usize,
    k: usize,
    dist: BetaDist,
    support: Support,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if k > p {
        return Err(invalid("k", format!("{k} nonzeros requested but p = {p}")));
    }
    let positions: Vec<usize> = match support {
        Support::First => (0..k).collect(),
        Support::Random => rand::seq::index::sample(rng, p, k).into_vec(),
    };
    let mut beta = vec![0.0; p];
    for j in positions {
        beta[j] = match dist {
            BetaDist::LaplaceUnit => laplace_unit(rng),
            BetaDist::GaussianUnit => StandardNormal.sample(rng),
            BetaDist::Constant { value } => value,
        };
    }
    Ok(beta)
}

/// Conditional response distribution given the linear predictor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ResponseFamily {
    /// `y ~ N(xᵀβ*, σ²)`
    Linear { noise_var: f64 },
    /// `y ~ Bernoulli(sigmoid(xᵀβ*))`
    Logistic,
    /// `y ~ Poisson(log(1 + e^{xᵀβ*}))`
    PoissonSoftRect,
    /// Gamma–Poisson mixture with mean `e^{xᵀβ*}` and shape `1/α`.
    NegativeBinomial { shape: f64 },
}

impl ResponseFamily {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ResponseFamily::Linear { noise_var } if !(noise_var >= 0.0 && noise_var.is_finite()) => {
                Err(invalid("noise_var", "must be nonnegative"))
            }
            ResponseFamily::NegativeBinomial { shape } if !(shape > 0.0 && shape.is_finite()) => {
                Err(invalid("shape", "must be positive"))
            }
            _ => Ok(()),
        }
    }

    pub fn draw<R: Rng>(&self, rng: &mut R, eta: f64) -> f64 {
        match *self {
            ResponseFamily::Linear { noise_var } => {
                let g: f64 = StandardNormal.sample(rng);
                eta + noise_var.sqrt() * g
            }
            ResponseFamily::Logistic => {
                if rng.random::<f64>() < sigmoid(eta) {
                    1.0
                } else {
                    0.0
                }
            }
            ResponseFamily::PoissonSoftRect => poisson(rng, softplus(eta)),
            ResponseFamily::NegativeBinomial { shape } => {
                let mean = eta.exp();
                let rate = Gamma::new(1.0 / shape, shape * mean)
                    .map(|g| g.sample(rng))
                    .unwrap_or(0.0);
                poisson(rng, rate)
            }
        }
    }
}

fn poisson<R: Rng>(rng: &mut R, mean: f64) -> f64 {
    if mean <= 0.0 {
        return 0.0;
    }
    Poisson::new(mean).map(|d| d.sample(rng)).unwrap_or(0.0)
}

pub fn gen_response(x: &DMatrix<f64>, beta_star: &[f64], family: ResponseFamily, seed: u64) -> Result<Vec<f64>> {
    gen_response_with(x, beta_star, family, &mut substream(seed, 0, Purpose::Response))
}

pub fn gen_response_with<R: Rng>(
    x: &DMatrix<f64>,
    beta_star: &[f64],
    family: ResponseFamily,
    rng: &mut R,
) -> Result<Vec<f64>> {
    family.validate()?;
    if x.ncols() != beta_star.len() {
        return Err(invalid("beta_star", "length does not match the design"));
    }
    let eta = x * DVector::from_column_slice(beta_star);
    Ok(eta.iter().map(|&e| family.draw(rng, e)).collect())
}

/// Simulation design of one experiment cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimDesign {
    pub n: usize,
    pub p: usize,
    pub k: usize,
    pub covariance: Covariance,
    pub beta_dist: BetaDist,
    #[serde(default)]
    pub support: Support,
    pub family: ResponseFamily,
}

/// A generated replicate with the truth it was drawn from.
#[derive(Debug, Clone)]
pub struct Replicate {
    pub data: Dataset,
    pub beta_star: Vec<f64>,
}

impl SimDesign {
    pub fn validate(&self) -> Result<()> {
        if self.k > self.p {
            return Err(invalid("k", format!("k = {} exceeds p = {}", self.k, self.p)));
        }
        if self.n == 0 || self.p == 0 {
            return Err(invalid("n/p", "must be positive"));
        }
        self.covariance.validate(self.p)?;
        self.family.validate()
    }

    /// Deterministic replicate `r` of the design under `seed`.
    pub fn generate(&self, seed: u64, r: u64) -> Result<Replicate> {
        self.validate()?;
        let x = gen_design_with(self.n, self.p, &self.covariance, &mut substream(seed, r, Purpose::Design))?;
        let beta_star = gen_beta_star_with(
            self.p,
            self.k,
            self.beta_dist,
            self.support,
            &mut substream(seed, r, Purpose::Beta),
        )?;
        let y = gen_response_with(&x, &beta_star, self.family, &mut substream(seed, r, Purpose::Response))?;
        Ok(Replicate {
            data: Dataset::new(x, DVector::from_vec(y))?,
            beta_star,
        })
    }
}
