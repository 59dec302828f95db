//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Each criterion also has to finish inside its time budget.

use std::fs;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use loorisk::bounds::{audit_assumptions, check_perturb_lemma, AuditOpts};
use loorisk::config::preset;
use loorisk::datagen::{gen_beta_star, gen_design, gen_response, BetaDist, Covariance, ResponseFamily, Support};
use loorisk::experiments::{run_experiment, Estimator, ExperimentConfig, ExperimentResult};
use loorisk::losses::ErrorFn;
use loorisk::oracles::{err_out_linear, err_out_logistic, err_out_monte_carlo, TrueModel};
use loorisk::risk::lo_exact_detailed;
use loorisk::selftest::{all_losses, loss_fd_error, ridge_alo_lo_gap};
use loorisk::{Dataset, Loss, ModelSpec, Regularizer, SolverOpts};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn lo_row(res: &ExperimentResult, n: usize) -> &loorisk::experiments::ResultRow {
    let lambda = res.config_echo.model.lambda;
    res.row(n, lambda, Estimator::Lo).expect("lo row")
}

fn run(cfg: &ExperimentConfig) -> ExperimentResult {
    run_experiment(cfg).expect("experiment runs")
}

fn quadratic_exactness() -> Outcome {
    let a = ridge_alo_lo_gap(50, 30, 10, 1).unwrap();
    let b = ridge_alo_lo_gap(50, 10, 30, 2).unwrap();
    let g = a.max(b);
    outcome(g <= 1e-8, format!("max |ALO_i - LO_i| = {g:.2e}"))
}

fn table2_paper(logistic_rows: &mut Vec<(usize, f64, f64)>) -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    for tol in [1e-8, 1e-9, 1e-10] {
        let mut cfg = preset("table2_paper", None).unwrap();
        cfg.design.ns = vec![100];
        cfg.reps = 100;
        cfg.solver.tol = tol;
        let res = run(&cfg);
        let row = lo_row(&res, 100);
        ok &= (0.006..=0.021).contains(&row.mse);
        parts.push(format!("tol {tol:.0e}: MSE {:.4} ({:.4})", row.mse, row.mse_se.unwrap()));
        logistic_rows.extend(res.rows.iter().filter(|r| r.estimator != Estimator::Oracle).map(|r| (r.n, r.mse, r.bound_over_n.unwrap())));
    }
    outcome(ok, format!("{}; target [0.006, 0.021]", parts.join(", ")))
}

fn table1_desk() -> Outcome {
    let cfg = preset("table1_desk", None).unwrap();
    let res = run(&cfg);
    let mse40 = lo_row(&res, 40).mse;
    let slope = res.slope_fit.map(|s| s.slope).unwrap_or(f64::NAN);
    let lo = 0.0156 - 4.0 * 0.0021;
    let hi = 0.0156 + 4.0 * 0.0021;
    outcome(
        (lo..=hi).contains(&mse40) && (-1.4..=-0.6).contains(&slope),
        format!("MSE(n=40) {mse40:.4} in [{lo:.4}, {hi:.4}], slope {slope:.3} in [-1.4, -0.6]"),
    )
}

fn logistic_slope(logistic_rows: &mut Vec<(usize, f64, f64)>) -> Outcome {
    let cfg = preset("table2_slope", None).unwrap();
    let res = run(&cfg);
    let slope = res.slope_fit.map(|s| s.slope).unwrap_or(f64::NAN);
    let mses: Vec<String> = [100, 300, 500].iter().map(|&n| format!("{:.5}", lo_row(&res, n).mse)).collect();
    logistic_rows.extend(res.rows.iter().filter(|r| r.estimator != Estimator::Oracle).map(|r| (r.n, r.mse, r.bound_over_n.unwrap())));
    outcome(
        (-1.3..=-0.7).contains(&slope),
        format!("slope {slope:.3} in [-1.3, -0.7], MSE {}", mses.join(" / ")),
    )
}

fn bound_dominance(rows: &[(usize, f64, f64)]) -> Outcome {
    let worst = rows.iter().map(|(_, m, b)| m / b).fold(0.0f64, f64::max);
    outcome(
        !rows.is_empty() && worst <= 0.1,
        format!("{} logistic rows, largest MSE / (C_v/n) = {worst:.2e} (needs <= 0.1)", rows.len()),
    )
}

fn figure1_desk() -> Outcome {
    let cfg = preset("figure1_desk", None).unwrap();
    let res = run(&cfg);
    let n = cfg.design.ns[0];
    let lambda = cfg.model.lambda;
    let get = |e| {
        let r = res.row(n, lambda, e).expect("row");
        (r.mean, r.mean_se.unwrap())
    };
    let order = [Estimator::Kfold(3), Estimator::Kfold(5), Estimator::Kfold(7), Estimator::Lo];
    let vals: Vec<(f64, f64)> = order.iter().map(|&e| get(e)).collect();
    let mut ok = true;
    for w in vals.windows(2) {
        let joint = (w[0].1.powi(2) + w[1].1.powi(2)).sqrt();
        ok &= w[0].0 >= w[1].0 - joint;
    }
    let oracle = get(Estimator::Oracle);
    let se = (oracle.1.powi(2) + vals[3].1.powi(2)).sqrt();
    ok &= (vals[3].0 - oracle.0).abs() <= 2.0 * se;
    outcome(
        ok,
        format!(
            "K3 {:.3}, K5 {:.3}, K7 {:.3}, LO {:.3}, oracle {:.3} (SE {:.3})",
            vals[0].0, vals[1].0, vals[2].0, vals[3].0, oracle.0, oracle.1
        ),
    )
}

fn derivatives() -> Outcome {
    let (mut e1, mut e2) = (0.0f64, 0.0f64);
    for loss in all_losses() {
        let (a, b) = loss_fd_error(&loss, 1000, 7);
        e1 = e1.max(a);
        e2 = e2.max(b);
    }
    let mut rng = ChaCha20Rng::seed_from_u64(8);
    let h = 1e-5;
    for reg in [
        Regularizer::Ridge,
        Regularizer::SmoothedElasticNet { mix: 0.4, smooth_sharpness: 3.0 },
    ] {
        for _ in 0..1000 {
            let b: f64 = rng.random_range(-5.0..5.0);
            let c = reg.eval(&[b]).unwrap();
            let (p, m) = (reg.eval(&[b + h]).unwrap(), reg.eval(&[b - h]).unwrap());
            let rel = |a: f64, e: f64| (a - e).abs() / e.abs().max(1.0);
            e1 = e1.max(rel((p.value - m.value) / (2.0 * h), c.gradient[0]));
            e2 = e2.max(rel((p.gradient[0] - m.gradient[0]) / (2.0 * h), c.hessian_diag[0]));
        }
    }
    outcome(e1 <= 1e-5 && e2 <= 1e-4, format!("worst relative error d1 {e1:.2e}, d2 {e2:.2e}"))
}

fn oracle_cross_check() -> Outcome {
    let m = 10_000_000;
    let logistic = ModelSpec::new(Loss::Logistic, Regularizer::Ridge, 1.0);
    let linear = ModelSpec::new(Loss::Squared, Regularizer::Ridge, 1.0).with_phi(ErrorFn::SquaredError);
    let mut worst = 0.0f64;
    let mut misses = 0;
    for s in 0..20u64 {
        let p = 3 + (s % 4) as usize;
        let shift: Vec<f64> = (0..p).map(|j| 0.25 * ((j as f64 + 1.0) * (s as f64 + 1.3)).cos()).collect();
        for family in [ResponseFamily::Logistic, ResponseFamily::Linear { noise_var: 1.0 }] {
            let truth = TrueModel {
                beta_star: gen_beta_star(p, p, BetaDist::GaussianUnit, Support::First, 900 + s).unwrap(),
                covariance: Covariance::ScaledIdentity { scale: 1.0 / p as f64 },
                family,
            };
            let beta_hat: Vec<f64> = truth.beta_star.iter().zip(&shift).map(|(a, b)| a + b).collect();
            let (exact, model) = match family {
                ResponseFamily::Logistic => (err_out_logistic(&beta_hat, &truth, 64).unwrap(), &logistic),
                _ => (err_out_linear(&beta_hat, &truth).unwrap(), &linear),
            };
            let (mc, se) = err_out_monte_carlo(&beta_hat, &truth, model, m, 77 + s).unwrap();
            let z = (exact - mc).abs() / se;
            worst = worst.max(z);
            misses += usize::from(z > 3.0);
        }
    }
    outcome(misses == 0, format!("40 comparisons, largest |exact - MC| = {worst:.2} SE"))
}

fn audits() -> Outcome {
    let opts = SolverOpts::default().with_tol(1e-10);
    let audit_opts = AuditOpts { t_grid_size: 11, sample_i: 25 };
    let (mut pairs, mut held) = (0, 0);
    let (mut nu_ok, mut c0_ok) = (true, true);
    let (mut min_nu_gap, mut max_c0) = (f64::INFINITY, 0.0f64);
    for s in 0..10u64 {
        let (n, p) = (40, 20 + 2 * s as usize);
        let x = gen_design(n, p, &Covariance::ScaledIdentity { scale: 1.0 / n as f64 }, 300 + s).unwrap();
        let beta = gen_beta_star(p, p, BetaDist::GaussianUnit, Support::First, 400 + s).unwrap();
        for (family, loss) in [
            (ResponseFamily::Logistic, Loss::Logistic),
            (ResponseFamily::Linear { noise_var: 1.0 }, Loss::Squared),
        ] {
            let lambda = 0.1 + 0.1 * s as f64;
            let y = gen_response(&x, &beta, family, 500 + s).unwrap();
            let data = Dataset::new(x.clone(), DVector::from_vec(y)).unwrap();
            let model = ModelSpec::new(loss, Regularizer::Ridge, lambda);
            let run = lo_exact_detailed(&data, &model, &opts).unwrap();
            let audit = audit_assumptions(&data, &model, &run.full, &run.loo_fits, &audit_opts).unwrap();
            nu_ok &= audit.nu_emp >= lambda - 1e-9;
            min_nu_gap = min_nu_gap.min(audit.nu_emp - lambda);
            if loss == Loss::Logistic {
                c0_ok &= audit.c0_emp <= 1.0;
                max_c0 = max_c0.max(audit.c0_emp);
            }
            let fits: Vec<_> = audit.audited.iter().map(|&i| (i, &run.loo_fits[i])).collect();
            let report = check_perturb_lemma(&data, &model, &run.full, &fits, audit.nu_emp).unwrap();
            pairs += report.entries.len();
            held += report.entries.iter().filter(|e| e.holds).count();
        }
    }
    outcome(
        nu_ok && c0_ok && pairs == held,
        format!("min(nu_emp - lambda) {min_nu_gap:.2e}, max logistic c0_emp {max_c0:.3}, perturbation bound {held}/{pairs}"),
    )
}

fn cli_determinism() -> Outcome {
    let dir = std::env::temp_dir().join(format!("loorisk-acceptance-{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    let runs: [&[&str]; 2] = [
        &["simulate", "table2", "--preset", "desk", "--reps", "8"],
        &["lo", "--preset", "table1_desk"],
    ];
    let mut same = true;
    let mut detail = Vec::new();
    for (k, args) in runs.iter().enumerate() {
        let mut outputs = Vec::new();
        for attempt in 0..2 {
            let out = dir.join(format!("{k}-{attempt}"));
            let status = Command::new(env!("CARGO_BIN_EXE_loorisk"))
                .args(*args)
                .arg("--out")
                .arg(&out)
                .env("LOORISK_THREADS", if attempt == 0 { "1" } else { "4" })
                .output()
                .expect("binary runs");
            same &= status.status.success();
            outputs.push(fs::read(out.join("results.csv")).unwrap_or_default());
        }
        let eq = !outputs[0].is_empty() && outputs[0] == outputs[1];
        same &= eq;
        detail.push(format!("`{}`: {}", args.join(" "), if eq { "identical" } else { "differs" }));
    }
    let _ = fs::remove_dir_all(&dir);
    outcome(same, detail.join(", "))
}

fn main() -> ExitCode {
    let mut logistic_rows = Vec::new();
    let mut results: Vec<(&str, Duration, Outcome, Duration)> = Vec::new();
    let mut record = |name, budget: u64, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let o = f();
        let took = start.elapsed();
        let budget = Duration::from_secs(budget);
        let line_ok = o.passed && took <= budget;
        println!(
            "{} {name}: {} [{:.1}s of {}s]",
            if line_ok { "PASS" } else { "FAIL" },
            o.detail,
            took.as_secs_f64(),
            budget.as_secs()
        );
        results.push((name, took, o, budget));
    };
    record("1 quadratic exactness", 10, &mut quadratic_exactness);
    record("2 logistic ridge MSE at n = p = 100", 900, &mut || table2_paper(&mut logistic_rows));
    record("3 elastic-net desk scale", 1800, &mut table1_desk);
    record("4 logistic slope", 1800, &mut || logistic_slope(&mut logistic_rows));
    let rows = logistic_rows.clone();
    record("5 bound dominance", 60, &mut || bound_dominance(&rows));
    record("6 K-fold bias ordering", 600, &mut figure1_desk);
    record("7 derivative suite", 5, &mut derivatives);
    record("8 oracle cross-check", 300, &mut oracle_cross_check);
    record("9 assumption audits", 300, &mut audits);
    record("10 CLI determinism", 600, &mut cli_determinism);
    let failed = results.iter().filter(|(_, t, o, b)| !o.passed || t > b).count();
    println!("{} of {} acceptance criteria passed", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
