//! Twice-differentiable loss families `ℓ(y | z)` where `z = xᵀβ` is the
//! linear predictor.
//!
//! Every family reports the value and the exact first and second derivative
//! in `z`. All evaluations go through overflow-free softplus/sigmoid forms so
//! that Newton iterates with `|z|` in the hundreds stay finite.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// `log(1 + e^z)` without overflow.
pub fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Logistic sigmoid `1 / (1 + e^{-z})`.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(softplus(z))`, accurate for very negative `z` where softplus underflows.
fn ln_softplus(z: f64) -> f64 {
    if z < -30.0 {
        // softplus(z) = e^z (1 - e^z/2 + ...)
        let e = z.exp();
        z + (-0.5 * e).ln_1p()
    } else {
        softplus(z).ln()
    }
}

/// `sigmoid(z) / softplus(z)`, which tends to 1 as `z → -∞`.
fn sigmoid_over_softplus(z: f64) -> f64 {
    if z < -30.0 {
        let e = z.exp();
        1.0 / ((1.0 + e) * (1.0 - 0.5 * e + e * e / 3.0))
    } else {
        sigmoid(z) / softplus(z)
    }
}

/// A loss family with its parameters.
///
/// Parameters live inside the variant that needs them, so a spec can never
/// carry a parameter its family ignores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Loss {
    /// `½ (y − z)²`
    Squared,
    /// Negative Bernoulli log-likelihood `log(1 + e^z) − y z`, `y ∈ {0, 1}`.
    Logistic,
    /// `γ² (√(1 + (y − z)²/γ²) − 1)`
    PseudoHuber { huber_scale: f64 },
    /// `(1/γ)(log(1 + e^{γ(y−z)}) + log(1 + e^{−γ(y−z)}))`, a smooth `|y − z|`.
    SmoothedAbs { smooth_scale: f64 },
    /// Poisson with mean `f(z) = log(1 + e^z)`: `f(z) − y log f(z)`.
    PoissonSoftRect,
    /// Negative binomial with fixed shape `α`, log-likelihood constant dropped:
    /// `(y + 1/α) log(1 + α e^z) − y z`.
    NegativeBinomial { shape: f64 },
}

/// Value and first two derivatives of a loss in the linear predictor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossEval {
    pub value: f64,
    pub d1: f64,
    pub d2: f64,
}

impl Loss {
    pub fn name(&self) -> &'static str {
        match self {
            Loss::Squared => "squared",
            Loss::Logistic => "logistic",
            Loss::PseudoHuber { .. } => "pseudo_huber",
            Loss::SmoothedAbs { .. } => "smoothed_abs",
            Loss::PoissonSoftRect => "poisson_softrect",
            Loss::NegativeBinomial { .. } => "negative_binomial",
        }
    }

    /// Checks the family parameters are strictly positive and finite.
    pub fn validate(&self) -> Result<()> {
        let check = |name, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(invalid(name, format!("must be positive and finite, got {v}")))
            }
        };
        match *self {
            Loss::PseudoHuber { huber_scale } => check("huber_scale", huber_scale),
            Loss::SmoothedAbs { smooth_scale } => check("smooth_scale", smooth_scale),
            Loss::NegativeBinomial { shape } => check("shape", shape),
            _ => Ok(()),
        }
    }

    /// Whether `y` lies in the family's response domain.
    pub fn check_response(&self, y: f64) -> Result<()> {
        let ok = match self {
            Loss::Logistic => y == 0.0 || y == 1.0,
            Loss::PoissonSoftRect | Loss::NegativeBinomial { .. } => {
                y.is_finite() && y >= 0.0 && y.fract() == 0.0
            }
            _ => y.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidResponse {
                family: self.name(),
                y,
            })
        }
    }

    /// Value, `∂ℓ/∂z` and `∂²ℓ/∂z²` at `(y, z)`.
    pub fn eval(&self, y: f64, z: f64) -> Result<LossEval> {
        if !z.is_finite() {
            return Err(Error::NonFinite("linear predictor"));
        }
        if !y.is_finite() {
            return Err(Error::NonFinite("response"));
        }
        self.check_response(y)?;
        Ok(self.eval_unchecked(y, z))
    }

    /// [`Loss::eval`] without domain checks; used in the solver's inner loops
    /// after the dataset has been validated once.
    pub fn eval_unchecked(&self, y: f64, z: f64) -> LossEval {
        match *self {
            Loss::Squared => {
                let r = z - y;
                LossEval {
                    value: 0.5 * r * r,
                    d1: r,
                    d2: 1.0,
                }
            }
            Loss::Logistic => {
                let s = sigmoid(z);
                LossEval {
                    value: softplus(z) - y * z,
                    d1: s - y,
                    d2: s * (1.0 - s),
                }
            }
            Loss::PseudoHuber { huber_scale: g } => {
                let u = y - z;
                let q = (u / g) * (u / g);
                let root = (1.0 + q).sqrt();
                LossEval {
                    // γ²(√(1+q) − 1) = γ² q / (√(1+q) + 1)
                    value: g * g * q / (root + 1.0),
                    d1: -u / root,
                    d2: 1.0 / (root * root * root),
                }
            }
            Loss::SmoothedAbs { smooth_scale: g } => {
                let u = y - z;
                let s = sigmoid(g * u);
                LossEval {
                    value: (softplus(g * u) + softplus(-g * u)) / g,
                    d1: -(2.0 * s - 1.0),
                    d2: 2.0 * g * s * (1.0 - s),
                }
            }
            Loss::PoissonSoftRect => {
                let f = softplus(z);
                let s = sigmoid(z);
                let ratio = sigmoid_over_softplus(z);
                LossEval {
                    value: f - y * ln_softplus(z),
                    d1: s - y * ratio,
                    // f'' (1 − y/f) + y (f'/f)², with f'' = s(1−s) and f''/f = (1−s)·ratio
                    d2: s * (1.0 - s) + y * ratio * (ratio - (1.0 - s)),
                }
            }
            Loss::NegativeBinomial { shape: a } => {
                let w = z + a.ln();
                let s = sigmoid(w);
                let c = y + 1.0 / a;
                LossEval {
                    value: c * softplus(w) - y * z,
                    d1: c * s - y,
                    d2: c * s * (1.0 - s),
                }
            }
        }
    }

    /// Uniform bound `c₀` on `|∂ℓ/∂z|` used by the risk bounds, when one exists.
    ///
    /// Logistic reports 2 although `|ℓ̇| ≤ 1` holds, so that the logistic
    /// variance constant matches its published value.
    pub fn derivative_bound(&self) -> Option<f64> {
        match *self {
            Loss::Logistic => Some(2.0),
            Loss::PseudoHuber { huber_scale } => Some(huber_scale),
            Loss::SmoothedAbs { .. } => Some(1.0),
            Loss::Squared | Loss::PoissonSoftRect | Loss::NegativeBinomial { .. } => None,
        }
    }

    /// Whether the loss is the plain squared loss (ALO is exact there).
    pub fn is_quadratic(&self) -> bool {
        matches!(self, Loss::Squared)
    }
}

/// Error function `φ(y, z)` used to score predictions.
///
/// Usually the training loss itself; the full squared error `(y − z)²` is kept
/// separately because it is what the K-fold comparison plots against.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ErrorFn {
    SameAsLoss,
    SquaredError,
    Loss { loss: Loss },
}

impl ErrorFn {
    pub fn resolve(&self, training: &Loss) -> ResolvedErrorFn {
        match *self {
            ErrorFn::SameAsLoss => ResolvedErrorFn::Loss(*training),
            ErrorFn::SquaredError => ResolvedErrorFn::SquaredError,
            ErrorFn::Loss { loss } => ResolvedErrorFn::Loss(loss),
        }
    }
}

impl Default for ErrorFn {
    fn default() -> Self {
        ErrorFn::SameAsLoss
    }
}

/// An [`ErrorFn`] with `SameAsLoss` substituted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ResolvedErrorFn {
    Loss(Loss),
    SquaredError,
}

impl ResolvedErrorFn {
    pub fn value(&self, y: f64, z: f64) -> f64 {
        match self {
            ResolvedErrorFn::Loss(l) => l.eval_unchecked(y, z).value,
            ResolvedErrorFn::SquaredError => (y - z) * (y - z),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
    }

    #[test]
    fn logistic_at_origin() {
        let e = Loss::Logistic.eval(1.0, 0.0).unwrap();
        assert!(close(e.value, 2f64.ln(), 1e-15));
        assert!(close(e.d1, -0.5, 1e-15));
        assert!(close(e.d2, 0.25, 1e-15));
    }

    #[test]
    fn pseudo_huber_at_zero_residual() {
        let l = Loss::PseudoHuber { huber_scale: 2.0 };
        for t in [-3.0, 0.0, 1.7, 100.0] {
            let e = l.eval(t, t).unwrap();
            assert_eq!((e.value, e.d1, e.d2), (0.0, 0.0, 1.0));
        }
    }

    #[test]
    fn squared_example() {
        let e = Loss::Squared.eval(3.0, 1.0).unwrap();
        assert_eq!((e.value, e.d1, e.d2), (2.0, -2.0, 1.0));
    }

    #[test]
    fn poisson_at_origin() {
        let e = Loss::PoissonSoftRect.eval(2.0, 0.0).unwrap();
        let l2 = 2f64.ln();
        assert!(close(e.value, l2 - 2.0 * l2.ln(), 1e-14));
        assert!(close(e.d1, 0.5 * (1.0 - 2.0 / l2), 1e-14));
    }

    #[test]
    fn extreme_predictors_stay_finite() {
        let losses = [
            (Loss::Squared, 1.0),
            (Loss::Logistic, 1.0),
            (Loss::PseudoHuber { huber_scale: 1.5 }, 0.3),
            (Loss::SmoothedAbs { smooth_scale: 4.0 }, 0.3),
            (Loss::PoissonSoftRect, 3.0),
            (Loss::NegativeBinomial { shape: 0.7 }, 3.0),
        ];
        for (l, y) in losses {
            for z in [-700.0, -200.0, -35.0, 35.0, 200.0, 700.0] {
                let e = l.eval(y, z).unwrap();
                assert!(e.value.is_finite() && e.d1.is_finite() && e.d2.is_finite(), "{l:?} z={z}");
                assert!(e.d2 >= 0.0);
            }
        }
    }

    #[test]
    fn poisson_tail_matches_direct_formula() {
        // at z = -29 and -31 both branches are accurate; they must agree closely
        for z in [-31.0, -29.0] {
            let e = Loss::PoissonSoftRect.eval(2.0, z).unwrap();
            let f = softplus(z);
            let s = sigmoid(z);
            assert!(close(e.d1, s * (1.0 - 2.0 / f), 1e-9));
            assert!(close(e.value, f - 2.0 * f.ln(), 1e-12));
        }
    }

    #[test]
    fn rejects_bad_responses() {
        assert!(matches!(
            Loss::Logistic.eval(0.5, 0.0),
            Err(Error::InvalidResponse { .. })
        ));
        assert!(Loss::PoissonSoftRect.eval(-1.0, 0.0).is_err());
        assert!(Loss::NegativeBinomial { shape: 1.0 }.eval(1.5, 0.0).is_err());
        assert!(Loss::Squared.eval(1.0, f64::NAN).is_err());
        assert!(Loss::PseudoHuber { huber_scale: 0.0 }.validate().is_err());
    }

    #[test]
    fn derivative_bounds() {
        assert_eq!(Loss::Logistic.derivative_bound(), Some(2.0));
        assert_eq!(Loss::PseudoHuber { huber_scale: 3.5 }.derivative_bound(), Some(3.5));
        assert_eq!(Loss::SmoothedAbs { smooth_scale: 2.0 }.derivative_bound(), Some(1.0));
        assert_eq!(Loss::Squared.derivative_bound(), None);
        assert_eq!(Loss::PoissonSoftRect.derivative_bound(), None);
        assert_eq!(Loss::NegativeBinomial { shape: 2.0 }.derivative_bound(), None);
    }

    #[test]
    fn smoothed_abs_approaches_absolute_deviation() {
        let l = Loss::SmoothedAbs { smooth_scale: 1e4 };
        for (y, z) in [(0.0, 0.0), (1.0, -2.0), (-0.3, 0.2), (5.0, 5.0001)] {
            let v = l.eval(y, z).unwrap().value;
            assert!((v - (y - z).abs()).abs() <= 4.0 * 2f64.ln() / 1e4);
        }
    }
}
