//! Quick built-in consistency checks run by `loorisk selftest`.

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::datagen::{gen_design, Covariance};
use crate::losses::Loss;
use crate::regularizers::Regularizer;
use crate::risk::{alo, lo_exact_detailed};
use crate::solver::{Dataset, ModelSpec, SolverOpts};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

pub fn all_losses() -> Vec<Loss> {
    vec![
        Loss::Squared,
        Loss::Logistic,
        Loss::PseudoHuber { huber_scale: 1.5 },
        Loss::SmoothedAbs { smooth_scale: 2.0 },
        Loss::PoissonSoftRect,
        Loss::NegativeBinomial { shape: 0.7 },
    ]
}

/// A random `(y, z)` inside the response domain of `loss`.
pub fn random_point<R: Rng>(loss: &Loss, rng: &mut R) -> (f64, f64) {
    let z: f64 = rng.random_range(-6.0..6.0);
    let y = match loss {
        Loss::Logistic => f64::from(rng.random_range(0..2u8)),
        Loss::PoissonSoftRect | Loss::NegativeBinomial { .. } => f64::from(rng.random_range(0..12u8)),
        _ => rng.random_range(-6.0..6.0),
    };
    (y, z)
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

/// Largest relative finite-difference mismatch of `(d1, d2)` over `points`.
pub fn loss_fd_error(loss: &Loss, points: usize, seed: u64) -> (f64, f64) {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let (mut e1, mut e2) = (0.0f64, 0.0f64);
    let h = 1e-5;
    for _ in 0..points {
        let (y, z) = random_point(loss, &mut rng);
        let at = |z: f64| loss.eval(y, z).expect("point in domain");
        let c = at(z);
        let (p, m) = (at(z + h), at(z - h));
        e1 = e1.max(rel_err((p.value - m.value) / (2.0 * h), c.d1));
        e2 = e2.max(rel_err((p.d1 - m.d1) / (2.0 * h), c.d2));
    }
    (e1, e2)
}

/// Largest `|ALO_i − LO_i|` over seeded ridge least-squares instances.
pub fn ridge_alo_lo_gap(instances: usize, n: usize, p: usize, seed: u64) -> crate::Result<f64> {
    let model = ModelSpec::new(Loss::Squared, Regularizer::Ridge, 0.7);
    let opts = SolverOpts::default();
    let mut worst = 0.0f64;
    for s in 0..instances as u64 {
        let x: DMatrix<f64> = gen_design(n, p, &Covariance::identity(), seed.wrapping_add(s))?;
        let mut rng = ChaCha20Rng::seed_from_u64(seed ^ (s << 32));
        let y: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let data = Dataset::new(x, y.into())?;
        let run = lo_exact_detailed(&data, &model, &opts)?;
        let a = alo(&data, &model, &run.full)?;
        for (l, r) in run.report.per_sample.iter().zip(&a.per_sample) {
            worst = worst.max((l - r).abs());
        }
    }
    Ok(worst)
}

pub fn run_selftest() -> Vec<Check> {
    let mut out = Vec::new();
    for (n, p) in [(30, 10), (10, 30)] {
        let (passed, detail) = match ridge_alo_lo_gap(5, n, p, 11) {
            Ok(g) => (g <= 1e-8, format!("max |ALO_i - LO_i| = {g:.3e}")),
            Err(e) => (false, e.to_string()),
        };
        out.push(Check {
            name: format!("ridge ALO equals LO (n={n}, p={p})"),
            passed,
            detail,
        });
    }
    for loss in all_losses() {
        let (e1, e2) = loss_fd_error(&loss, 200, 3);
        out.push(Check {
            name: format!("{} derivatives", loss.name()),
            passed: e1 <= 1e-5 && e2 <= 1e-4,
            detail: format!("d1 rel err {e1:.2e}, d2 rel err {e2:.2e}"),
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn selftest_passes() {
        for c in run_selftest() {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }
}
