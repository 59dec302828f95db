//! Separable convex regularizers `r(β) = Σⱼ r(βⱼ)`.
//!
//! Smooth families expose gradient and diagonal Hessian; nonsmooth families
//! expose a closed-form proximal operator instead.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::losses::{sigmoid, softplus};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Regularizer {
    /// `½ β²`
    Ridge,
    /// `γ β² + (1 − γ) rᵅ(β)` with `rᵅ(β) = (1/α)(log(1 + e^{αβ}) + log(1 + e^{−αβ}))`.
    SmoothedElasticNet { mix: f64, smooth_sharpness: f64 },
    /// `|β|`
    L1,
    /// `((1 − α)/2) β² + α |β|`
    ElasticNet { mix: f64 },
}

/// Value, gradient and diagonal Hessian of a smooth regularizer.
#[derive(Debug, Clone, PartialEq)]
pub struct RegEval {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub hessian_diag: Vec<f64>,
}

impl Regularizer {
    pub fn name(&self) -> &'static str {
        match self {
            Regularizer::Ridge => "ridge",
            Regularizer::SmoothedElasticNet { .. } => "smoothed_elastic_net",
            Regularizer::L1 => "l1",
            Regularizer::ElasticNet { .. } => "elastic_net",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let check_mix = |mix: f64| {
            if (0.0..=1.0).contains(&mix) {
                Ok(())
            } else {
                Err(invalid("mix", format!("must lie in [0, 1], got {mix}")))
            }
        };
        match *self {
            Regularizer::SmoothedElasticNet {
                mix,
                smooth_sharpness,
            } => {
                check_mix(mix)?;
                if smooth_sharpness.is_finite() && smooth_sharpness > 0.0 {
                    Ok(())
                } else {
                    Err(invalid(
                        "smooth_sharpness",
                        format!("must be positive, got {smooth_sharpness}"),
                    ))
                }
            }
            Regularizer::ElasticNet { mix } => check_mix(mix),
            _ => Ok(()),
        }
    }

    pub fn is_smooth(&self) -> bool {
        matches!(
            self,
            Regularizer::Ridge | Regularizer::SmoothedElasticNet { .. }
        )
    }

    /// `r(b)` for one coordinate; defined for every family.
    pub fn coord_value(&self, b: f64) -> f64 {
        match *self {
            Regularizer::Ridge => 0.5 * b * b,
            Regularizer::SmoothedElasticNet {
                mix,
                smooth_sharpness: a,
            } => mix * b * b + (1.0 - mix) * (softplus(a * b) + softplus(-a * b)) / a,
            Regularizer::L1 => b.abs(),
            Regularizer::ElasticNet { mix } => 0.5 * (1.0 - mix) * b * b + mix * b.abs(),
        }
    }

    /// `Σⱼ r(βⱼ)`.
    pub fn value(&self, beta: &[f64]) -> f64 {
        beta.iter().map(|&b| self.coord_value(b)).sum()
    }

    /// `(r′(b), r″(b))` for a smooth family.
    pub(crate) fn coord_derivs(&self, b: f64) -> (f64, f64) {
        match *self {
            Regularizer::Ridge => (b, 1.0),
            Regularizer::SmoothedElasticNet {
                mix,
                smooth_sharpness: a,
            } => {
                let s = sigmoid(a * b);
                (
                    2.0 * mix * b + (1.0 - mix) * (2.0 * s - 1.0),
                    2.0 * mix + (1.0 - mix) * 2.0 * a * s * (1.0 - s),
                )
            }
            _ => unreachable!("coord_derivs called on a nonsmooth regularizer"),
        }
    }

    /// Value, gradient and diagonal Hessian at `beta`.
    pub fn eval(&self, beta: &[f64]) -> Result<RegEval> {
        if !self.is_smooth() {
            return Err(Error::WrongRegularizer {
                expected: "smooth",
                got: self.name(),
            });
        }
        let (gradient, hessian_diag) = beta.iter().map(|&b| self.coord_derivs(b)).unzip();
        Ok(RegEval {
            value: self.value(beta),
            gradient,
            hessian_diag,
        })
    }

    /// `argmin_β ½‖β − v‖² + step·λ·r(β)`, coordinatewise.
    pub fn prox(&self, v: &[f64], step: f64, lambda: f64) -> Result<Vec<f64>> {
        let mut out = v.to_vec();
        self.prox_in_place(&mut out, step, lambda)?;
        Ok(out)
    }

    pub(crate) fn prox_in_place(&self, v: &mut [f64], step: f64, lambda: f64) -> Result<()> {
        let (l1, l2) = match *self {
            Regularizer::L1 => (step * lambda, 0.0),
            Regularizer::ElasticNet { mix } => (step * lambda * mix, step * lambda * (1.0 - mix)),
            _ => {
                return Err(Error::WrongRegularizer {
                    expected: "l1 or elastic_net",
                    got: self.name(),
                })
            }
        };
        for x in v.iter_mut() {
            *x = soft_threshold(*x, l1) / (1.0 + l2);
        }
        Ok(())
    }

    /// Lower bound on the curvature of `λ r` in every direction.
    pub fn strong_convexity_lower(&self, lambda: f64) -> f64 {
        match *self {
            Regularizer::Ridge => lambda,
            Regularizer::SmoothedElasticNet { mix, .. } => 2.0 * lambda * mix,
            Regularizer::ElasticNet { mix } => lambda * (1.0 - mix),
            Regularizer::L1 => 0.0,
        }
    }

    /// Curvature of the smooth quadratic part of a nonsmooth family (`λ(1−α)`
    /// for elastic net), used on the active set by ALO.
    pub fn quadratic_part(&self, lambda: f64) -> f64 {
        match *self {
            Regularizer::ElasticNet { mix } => lambda * (1.0 - mix),
            _ => 0.0,
        }
    }

    /// Splits the nonsmooth families into `l1_weight·|β| + ½ l2_weight·β²`.
    pub(crate) fn split_weights(&self, lambda: f64) -> (f64, f64) {
        match *self {
            Regularizer::L1 => (lambda, 0.0),
            Regularizer::ElasticNet { mix } => (lambda * mix, lambda * (1.0 - mix)),
            _ => (0.0, 0.0),
        }
    }
}

pub fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}
