use loorisk::bounds::{
    audit_assumptions, check_perturb_lemma, compute_cb, compute_cv_from_parts, compute_cv_logistic,
    logistic_bound_report, AuditOpts, PUBLISHED_LOGISTIC_CV,
};
use loorisk::datagen::{gen_beta_star, gen_design, gen_response, BetaDist, Covariance, ResponseFamily, Support};
use loorisk::oracles::{err_out, err_out_linear, err_out_logistic, err_out_monte_carlo, OracleMethod, TrueModel};
use loorisk::risk::lo_exact_detailed;
use loorisk::losses::ErrorFn;
use loorisk::{fit, Dataset, Loss, ModelSpec, Regularizer, SolverOpts};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn spd(p: usize, seed: u64) -> Covariance {
    let a = gen_design(p, p, &Covariance::identity(), seed).unwrap();
    let m = a.tr_mul(&a) / p as f64 + DMatrix::<f64>::identity(p, p) * 0.2;
    Covariance::dense(&m)
}

fn perturbed(beta: &[f64], seed: u64) -> Vec<f64> {
    beta.iter()
        .enumerate()
        .map(|(j, b)| b + 0.3 * ((j as f64 + 1.0) * (seed as f64 + 0.7)).sin())
        .collect()
}

#[test]
fn logistic_quadrature_agrees_with_monte_carlo() {
    let model = ModelSpec::new(Loss::Logistic, Regularizer::Ridge, 1.0);
    for s in 0..6 {
        let p = 4;
        let covariance = if s % 2 == 0 { Covariance::ScaledIdentity { scale: 0.5 } } else { spd(p, s) };
        let truth = TrueModel {
            beta_star: gen_beta_star(p, p, BetaDist::GaussianUnit, Support::First, s).unwrap(),
            covariance,
            family: ResponseFamily::Logistic,
        };
        let beta_hat = perturbed(&truth.beta_star, s);
        let quad = err_out_logistic(&beta_hat, &truth, 64).unwrap();
        let (mc, se) = err_out_monte_carlo(&beta_hat, &truth, &model, 1_000_000, 40 + s).unwrap();
        assert!((quad - mc).abs() <= 3.0 * se, "instance {s}: {quad} vs {mc} ± {se}");
    }
}

#[test]
fn linear_closed_form_agrees_with_monte_carlo() {
    let model = ModelSpec::new(Loss::Squared, Regularizer::Ridge, 1.0).with_phi(ErrorFn::SquaredError);
    for s in 0..6 {
        let p = 5;
        let truth = TrueModel {
            beta_star: gen_beta_star(p, 3, BetaDist::LaplaceUnit, Support::First, s).unwrap(),
            covariance: spd(p, 100 + s),
            family: ResponseFamily::Linear { noise_var: 0.7 },
        };
        let beta_hat = perturbed(&truth.beta_star, s);
        let exact = err_out_linear(&beta_hat, &truth).unwrap();
        assert!(exact >= 0.7);
        let (mc, se) = err_out_monte_carlo(&beta_hat, &truth, &model, 1_000_000, s).unwrap();
        assert!((exact - mc).abs() <= 3.0 * se, "instance {s}: {exact} vs {mc} ± {se}");
        let (routed, how) = err_out(&beta_hat, &truth, &model, 1000, 0).unwrap();
        assert_eq!(how, OracleMethod::ClosedForm);
        assert_eq!(routed, exact);
        let half = ModelSpec::new(Loss::Squared, Regularizer::Ridge, 1.0);
        assert_eq!(err_out(&beta_hat, &truth, &half, 1000, 0).unwrap().0, 0.5 * exact);
    }
}

#[test]
fn monte_carlo_standard_error_shrinks_as_root_m() {
    let model = ModelSpec::new(Loss::PoissonSoftRect, Regularizer::Ridge, 1.0);
    let truth = TrueModel {
        beta_star: vec![0.5, -0.3, 0.8],
        covariance: Covariance::identity(),
        family: ResponseFamily::PoissonSoftRect,
    };
    let b = [0.4, -0.2, 0.7];
    let (m1, s1) = err_out_monte_carlo(&b, &truth, &model, 40_000, 3).unwrap();
    let (m2, s2) = err_out_monte_carlo(&b, &truth, &model, 640_000, 3).unwrap();
    assert!((s1 / s2 - 4.0).abs() < 0.4, "{s1} {s2}");
    assert!((m1 - m2).abs() <= 4.0 * s1);
    assert_eq!(err_out_monte_carlo(&b, &truth, &model, 40_000, 3).unwrap(), (m1, s1));
}

#[test]
fn true_coefficients_minimize_expected_log_loss() {
    let truth = TrueModel {
        beta_star: vec![1.0, -2.0, 0.5],
        covariance: spd(3, 8),
        family: ResponseFamily::Logistic,
    };
    let best = err_out_logistic(&truth.beta_star, &truth, 64).unwrap();
    for s in 0..20 {
        let other = perturbed(&truth.beta_star, s);
        assert!(err_out_logistic(&other, &truth, 64).unwrap() >= best);
    }
    let linear = TrueModel { family: ResponseFamily::Linear { noise_var: 2.0 }, ..truth };
    assert!((err_out_linear(&linear.beta_star, &linear).unwrap() - 2.0).abs() < 1e-15);
}

#[test]
fn logistic_constants_at_reference_point() {
    assert!((compute_cb(2.0, 2.0, 1.0, 1.0, 0.1) - 1600.0).abs() < 1e-9);
    let cv = compute_cv_logistic(1.0, 1.0, 0.1);
    assert!((cv - 6511.518).abs() < 1e-3);
    let r = logistic_bound_report(1.0, 1.0, 0.1, Some(100)).unwrap();
    assert_eq!(r.published_c_v, Some(PUBLISHED_LOGISTIC_CV));
    assert!((r.bound_over_n.unwrap() - cv / 100.0).abs() < 1e-12);
    assert!(logistic_bound_report(1.0, 1.0, 0.2, None).unwrap().published_c_v.is_none());
    assert!(logistic_bound_report(0.0, 1.0, 0.1, None).is_err());
}

fn audit_run(model: &ModelSpec, data: &Dataset, t_grid: usize) -> (loorisk::bounds::AssumptionAudit, bool) {
    let run = lo_exact_detailed(data, model, &SolverOpts::default().with_tol(1e-11)).unwrap();
    let opts = AuditOpts { t_grid_size: t_grid, sample_i: 10 };
    let audit = audit_assumptions(data, model, &run.full, &run.loo_fits, &opts).unwrap();
    let pairs: Vec<_> = audit.audited.iter().map(|&i| (i, &run.loo_fits[i])).collect();
    let perturb = check_perturb_lemma(data, model, &run.full, &pairs, audit.nu_emp).unwrap();
    (audit, perturb.all_hold)
}

fn logistic_data(n: usize, p: usize, seed: u64) -> Dataset {
    let x = gen_design(n, p, &Covariance::ScaledIdentity { scale: 1.0 / p as f64 }, seed).unwrap();
    let beta = gen_beta_star(p, p, BetaDist::GaussianUnit, Support::First, seed + 1).unwrap();
    let y = gen_response(&x, &beta, ResponseFamily::Logistic, seed + 2).unwrap();
    Dataset::new(x, DVector::from_vec(y)).unwrap()
}

#[test]
fn ridge_audits_respect_known_constants() {
    for s in 0..4 {
        let lambda = 0.3;
        let data = logistic_data(30, 15, s);
        let model = ModelSpec::new(Loss::Logistic, Regularizer::Ridge, lambda);
        let (audit, perturb_ok) = audit_run(&model, &data, 11);
        assert!(audit.nu_emp >= lambda - 1e-9);
        assert!(audit.c0_emp <= 1.0);
        assert!(perturb_ok);
        let (finer, _) = audit_run(&model, &data, 21);
        assert!(finer.nu_emp <= audit.nu_emp + 1e-12);
    }
}

#[test]
fn squared_loss_curvature_is_the_leave_one_out_gram() {
    let lambda = 0.5;
    let x = gen_design(12, 4, &Covariance::identity(), 1).unwrap();
    let y = gen_response(&x, &[1.0, 0.0, -1.0, 0.5], ResponseFamily::Linear { noise_var: 1.0 }, 2).unwrap();
    let data = Dataset::new(x.clone(), DVector::from_vec(y)).unwrap();
    let model = ModelSpec::new(Loss::Squared, Regularizer::Ridge, lambda);
    let (audit, perturb_ok) = audit_run(&model, &data, 5);
    assert!(perturb_ok);
    let expected = audit
        .audited
        .iter()
        .map(|&i| {
            let mut g = DMatrix::<f64>::identity(4, 4) * lambda;
            for j in (0..12).filter(|&j| j != i) {
                let r = x.row(j).transpose();
                g += &r * r.transpose();
            }
            g.symmetric_eigen().eigenvalues.min()
        })
        .fold(f64::INFINITY, f64::min);
    assert!((audit.nu_emp - expected).abs() <= 1e-9 * expected);
}

#[test]
fn elastic_net_audit_uses_its_quadratic_part() {
    let data = logistic_data(25, 10, 7);
    let model = ModelSpec::new(Loss::Logistic, Regularizer::ElasticNet { mix: 0.5 }, 0.4);
    let f = fit(&data, &model, &SolverOpts::default()).unwrap();
    assert!(f.converged);
    let (audit, _) = audit_run(&model, &data, 5);
    assert!(audit.nu_emp >= 0.2 - 1e-9);
}

proptest! {
    #[test]
    fn cv_grows_with_scale_and_shrinks_with_penalty(
        rho in 0.1f64..10.0,
        delta in 0.1f64..10.0,
        lambda in 0.01f64..10.0,
        f in 1.01f64..3.0,
    ) {
        let base = compute_cv_logistic(rho, delta, lambda);
        prop_assert!(base > 0.0);
        prop_assert!(compute_cv_logistic(rho * f, delta, lambda) > base);
        prop_assert!(compute_cv_logistic(rho, delta * f, lambda) > base);
        prop_assert!(compute_cv_logistic(rho, delta, lambda * f) < base);
    }

    #[test]
    fn cv_parts_are_monotone(e in 0.0f64..1e4, c in 0.0f64..1e4, d in 0.01f64..100.0) {
        let v = compute_cv_from_parts(e, c);
        prop_assert!(v >= e + 2.0 * c);
        prop_assert!(compute_cv_from_parts(e + d, c) > v);
        prop_assert!(compute_cv_from_parts(e, c + d) > v);
    }
}
