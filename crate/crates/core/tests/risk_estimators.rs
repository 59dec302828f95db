use loorisk::datagen::{gen_design, gen_response, BetaDist, Covariance, ResponseFamily, SimDesign, Support};
use loorisk::risk::{alo, fold_assignment, kfold_cv, kfold_cv_with_folds, lo_exact, lo_exact_detailed};
use loorisk::{fit, Dataset, Loss, ModelSpec, Regularizer, SolverOpts};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn ridge_instance(n: usize, p: usize, seed: u64) -> Dataset {
    let x = gen_design(n, p, &Covariance::identity(), seed).unwrap();
    let beta: Vec<f64> = (0..p).map(|j| ((j * 7 + 3) % 5) as f64 / 5.0 - 0.4).collect();
    let y = gen_response(&x, &beta, ResponseFamily::Linear { noise_var: 1.0 }, seed + 1000).unwrap();
    Dataset::new(x, DVector::from_vec(y)).unwrap()
}

fn logistic_instance(n: usize, p: usize, seed: u64) -> Dataset {
    let design = SimDesign {
        n,
        p,
        k: p,
        covariance: Covariance::ScaledIdentity { scale: 1.0 / n as f64 },
        beta_dist: BetaDist::GaussianUnit,
        support: Support::First,
        family: ResponseFamily::Logistic,
    };
    design.generate(seed, 0).unwrap().data
}

#[test]
fn alo_is_exact_for_ridge_least_squares() {
    let model = ModelSpec::new(Loss::Squared, Regularizer::Ridge, 1.3);
    let opts = SolverOpts::default();
    let mut worst = 0.0f64;
    for (n, p) in [(30, 10), (10, 30)] {
        for s in 0..50 {
            let data = ridge_instance(n, p, s);
            let run = lo_exact_detailed(&data, &model, &opts).unwrap();
            let a = alo(&data, &model, &run.full).unwrap();
            for (l, r) in run.report.per_sample.iter().zip(&a.per_sample) {
                worst = worst.max((l - r).abs());
            }
            let h = a.h_diag.as_ref().unwrap();
            assert!(h.iter().all(|&v| (0.0..1.0).contains(&v)));
        }
    }
    assert!(worst <= 1e-8, "{worst}");
}

#[test]
fn leverages_match_direct_inverse_and_downdated_predictions() {
    let lambda = 0.8;
    let model = ModelSpec::new(Loss::Squared, Regularizer::Ridge, lambda);
    let opts = SolverOpts::default().with_tol(1e-12);
    for s in 0..5 {
        let data = ridge_instance(12, 6, s);
        let run = lo_exact_detailed(&data, &model, &opts).unwrap();
        let a = alo(&data, &model, &run.full).unwrap();
        let h = a.h_diag.unwrap();
        let kinv = (data.x.tr_mul(&data.x) + DMatrix::<f64>::identity(6, 6) * lambda)
            .try_inverse()
            .unwrap();
        let hat = &data.x * kinv * data.x.transpose();
        for i in 0..12 {
            assert!((hat[(i, i)] - h[i]).abs() <= 1e-8);
            // r_{/i} = r_i / (1 − H_ii)
            let r_full = data.y[i] - data.predict_row(i, &run.full.beta_hat);
            let r_loo = data.y[i] - data.predict_row(i, &run.loo_fits[i].beta_hat);
            assert!((1.0 - r_full / r_loo - h[i]).abs() <= 1e-8);
        }
    }
}

#[test]
fn logistic_leverages_match_direct_inverse() {
    let lambda = 0.5;
    let model = ModelSpec::new(Loss::Logistic, Regularizer::Ridge, lambda);
    let data = logistic_instance(25, 10, 4);
    let f = fit(&data, &model, &SolverOpts::default()).unwrap();
    let a = alo(&data, &model, &f).unwrap();
    let b = DVector::from_column_slice(&f.beta_hat);
    let z = &data.x * &b;
    let d: Vec<f64> = z.iter().map(|&zi| { let s = 1.0 / (1.0 + (-zi).exp()); s * (1.0 - s) }).collect();
    let mut k = DMatrix::<f64>::identity(10, 10) * lambda;
    for i in 0..25 {
        let xi = data.x.row(i).transpose();
        k += &xi * xi.transpose() * d[i];
    }
    let kinv = k.try_inverse().unwrap();
    let h = a.h_diag.unwrap();
    for i in 0..25 {
        let xi = data.x.row(i).transpose();
        let direct = d[i] * (xi.transpose() * &kinv * &xi)[(0, 0)];
        assert!((direct - h[i]).abs() <= 1e-8);
    }
    let mean = a.per_sample.iter().sum::<f64>() / 25.0;
    assert!((mean - a.estimate).abs() <= 1e-12);
}

#[test]
fn alo_tracks_lo_better_as_n_grows() {
    let model = ModelSpec::new(Loss::Logistic, Regularizer::Ridge, 0.1);
    let opts = SolverOpts::default();
    let gap = |n: usize, reps: u64| -> f64 {
        (0..reps)
            .map(|s| {
                let data = logistic_instance(n, n, 500 + s);
                let run = lo_exact_detailed(&data, &model, &opts).unwrap();
                let a = alo(&data, &model, &run.full).unwrap();
                (a.estimate - run.report.estimate).abs()
            })
            .sum::<f64>()
            / reps as f64
    };
    let small = gap(100, 8);
    let large = gap(400, 4);
    assert!(small / large >= 1.5, "mean |ALO − LO|: {small} at n=100, {large} at n=400");
}

#[test]
fn huge_penalty_alo_is_training_error_at_zero() {
    let data = logistic_instance(20, 5, 9);
    let model = ModelSpec::new(Loss::Logistic, Regularizer::Ridge, 1e12);
    let f = fit(&data, &model, &SolverOpts::default()).unwrap();
    let a = alo(&data, &model, &f).unwrap();
    assert!((a.estimate - 2f64.ln()).abs() < 1e-6);
}

#[test]
fn kfold_with_singleton_folds_is_lo() {
    let data = ridge_instance(15, 20, 3);
    for model in [
        ModelSpec::new(Loss::Squared, Regularizer::Ridge, 0.5),
        ModelSpec::new(Loss::Squared, Regularizer::ElasticNet { mix: 0.5 }, 1.0),
    ] {
        let opts = SolverOpts::default().with_max_iter(50_000);
        let lo = lo_exact(&data, &model, &opts).unwrap();
        let cv = kfold_cv(&data, &model, 15, 77, &opts).unwrap();
        assert_eq!(lo.per_sample, cv.per_sample);
        assert_eq!(lo.estimate, cv.estimate);
    }
}

#[test]
fn kfold_on_duplicated_rows_is_constant() {
    let rows = vec![vec![1.0, 0.5]; 4];
    let data = Dataset::from_rows(&rows, &[1.0; 4]).unwrap();
    let model = ModelSpec::new(Loss::Squared, Regularizer::Ridge, 1.0);
    let r = kfold_cv_with_folds(&data, &model, &[vec![0, 1], vec![2, 3]], &SolverOpts::default()).unwrap();
    assert!(r.per_sample.iter().all(|v| (v - r.per_sample[0]).abs() < 1e-14));
    let lo = lo_exact(&data, &model, &SolverOpts::default()).unwrap();
    assert!(lo.per_sample.iter().all(|v| (v - lo.per_sample[0]).abs() < 1e-14));
}

#[test]
fn kfold_is_deterministic_per_seed() {
    let data = logistic_instance(40, 10, 2);
    let model = ModelSpec::new(Loss::Logistic, Regularizer::Ridge, 0.3);
    let a = kfold_cv(&data, &model, 5, 123, &SolverOpts::default()).unwrap();
    let b = kfold_cv(&data, &model, 5, 123, &SolverOpts::default()).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    let c = kfold_cv(&data, &model, 5, 124, &SolverOpts::default()).unwrap();
    assert_ne!(a.per_sample, c.per_sample);
}

#[test]
fn elastic_net_with_empty_active_set() {
    let data = ridge_instance(10, 4, 5);
    let model = ModelSpec::new(Loss::Squared, Regularizer::ElasticNet { mix: 0.5 }, 1e6);
    let f = fit(&data, &model, &SolverOpts::default()).unwrap();
    assert!(f.beta_hat.iter().all(|&b| b == 0.0));
    let a = alo(&data, &model, &f).unwrap();
    assert_eq!(a.active_set.as_deref(), Some(&[][..]));
    for i in 0..10 {
        assert!((a.per_sample[i] - 0.5 * data.y[i] * data.y[i]).abs() < 1e-14);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]
    #[test]
    fn folds_partition_with_balanced_sizes(n in 2usize..200, k in 2usize..12, seed in any::<u64>()) {
        prop_assume!(k <= n);
        let folds = fold_assignment(n, k, seed).unwrap();
        prop_assert_eq!(folds.len(), k);
        let mut all: Vec<usize> = folds.iter().flatten().copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        let (lo, hi) = folds.iter().fold((usize::MAX, 0), |(a, b), f| (a.min(f.len()), b.max(f.len())));
        prop_assert!(hi - lo <= 1);
    }

    #[test]
    fn lo_is_permutation_invariant(seed in 0u64..500, shift in 1usize..19) {
        let data = logistic_instance(20, 6, seed);
        let model = ModelSpec::new(Loss::Logistic, Regularizer::Ridge, 0.4);
        let order: Vec<usize> = (0..20).map(|i| (i + shift) % 20).collect();
        let rows: Vec<Vec<f64>> = order.iter().map(|&i| data.x.row(i).iter().copied().collect()).collect();
        let y: Vec<f64> = order.iter().map(|&i| data.y[i]).collect();
        let permuted = Dataset::from_rows(&rows, &y).unwrap();
        let opts = SolverOpts::default().with_tol(1e-11);
        let a = lo_exact(&data, &model, &opts).unwrap();
        let b = lo_exact(&permuted, &model, &opts).unwrap();
        prop_assert!((a.estimate - b.estimate).abs() <= 1e-10);
        for (k, &i) in order.iter().enumerate() {
            prop_assert!((a.per_sample[i] - b.per_sample[k]).abs() <= 1e-9);
        }
    }
}
