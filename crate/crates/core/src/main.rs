use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use loorisk::bounds::{audit_assumptions, check_perturb_lemma, logistic_bound_report, AuditOpts};
use loorisk::config::{load_config, preset};
use loorisk::experiments::{run_experiment, ExperimentConfig, ExperimentKind};
use loorisk::report::{read_dataset_csv, unix_now, write_results, AuditRun, Output, RunInfo};
use loorisk::risk::{alo_with, kfold_cv, lo_exact_detailed, AloOpts};
use loorisk::selftest::run_selftest;
use loorisk::{fit, Dataset, Error};

#[derive(Parser)]
#[command(name = "loorisk", version, about = "Leave-one-out risk estimation for penalized GLMs")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "LOORISK_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML config file.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Bundled preset, e.g. `table2_desk`.
    #[arg(long)]
    preset: Option<String>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for results.csv, report.json and manifest.json.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the solver tolerance.
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Args, Clone)]
struct DataArgs {
    #[command(flatten)]
    common: Common,
    /// CSV with a `y` column; without it, replicate 0 of the config design
    /// at its first sample size is simulated.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Overrides the penalty level.
    #[arg(long)]
    lambda: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Table1,
    Table2,
    Figure1,
}

impl From<Kind> for ExperimentKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Table1 => ExperimentKind::Table1,
            Kind::Table2 => ExperimentKind::Table2,
            Kind::Figure1 => ExperimentKind::Figure1,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Fit the penalized model.
    Fit(DataArgs),
    /// Exact leave-one-out cross validation.
    Lo(DataArgs),
    /// Approximate leave-one-out.
    Alo {
        #[command(flatten)]
        args: DataArgs,
        /// Activity threshold relative to the largest coefficient.
        #[arg(long, default_value_t = 1e-8)]
        active_tol: f64,
    },
    /// K-fold cross validation.
    Cv {
        #[command(flatten)]
        args: DataArgs,
        #[arg(long, short = 'k', default_value_t = 5)]
        folds: usize,
    },
    /// Error-bound constants for ridge logistic regression.
    Bounds {
        #[arg(long)]
        rho: f64,
        #[arg(long)]
        delta: f64,
        #[arg(long)]
        lambda: f64,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Audit the curvature and derivative assumptions on one dataset.
    Audit {
        #[command(flatten)]
        args: DataArgs,
        #[arg(long, default_value_t = 11)]
        t_grid: usize,
        #[arg(long, default_value_t = 25)]
        sample_i: usize,
    },
    /// Run a Monte-Carlo study.
    Simulate {
        kind: Kind,
        #[command(flatten)]
        common: Common,
        /// Overrides the number of replicates.
        #[arg(long)]
        reps: Option<usize>,
    },
    /// Run built-in consistency checks.
    Selftest,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_)
        | Error::InvalidParameter { .. }
        | Error::InvalidResponse { .. }
        | Error::Dimension(_)
        | Error::WrongRegularizer { .. }
        | Error::NonFinite(_) => 2,
        _ => 1,
    }
}

fn resolve_config(c: &Common, kind: Option<ExperimentKind>) -> loorisk::Result<ExperimentConfig> {
    let mut cfg = match (&c.config, &c.preset) {
        (Some(path), _) => load_config(path)?,
        (None, Some(name)) => preset(name, kind)?,
        (None, None) => match kind {
            Some(k) => preset("desk", Some(k))?,
            None => return Err(Error::Config("pass --config or --preset".into())),
        },
    };
    if let Some(k) = kind {
        if cfg.kind != k {
            return Err(Error::Config(format!(
                "config describes a {} experiment, not {}",
                cfg.kind.name(),
                k.name()
            )));
        }
    }
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(t) = c.tol {
        cfg.solver.tol = t;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load_data(a: &DataArgs) -> loorisk::Result<(ExperimentConfig, Dataset)> {
    let mut cfg = resolve_config(&a.common, None)?;
    if let Some(l) = a.lambda {
        cfg.model.lambda = l;
        cfg.model.validate()?;
    }
    let data = match &a.data {
        Some(p) => read_dataset_csv(p)?,
        None => cfg.design.cell(cfg.design.ns[0])?.generate(cfg.seed, 0)?.data,
    };
    Ok((cfg, data))
}

fn info(command: &str, common: Option<&Common>, seed: Option<u64>, started: f64) -> RunInfo {
    RunInfo {
        command: command.into(),
        config_path: common.and_then(|c| {
            c.config
                .as_ref()
                .map(|p| p.display().to_string())
                .or_else(|| c.preset.as_ref().map(|p| format!("preset:{p}")))
        }),
        seed,
        started,
    }
}

fn emit(output: Output<'_>, out: Option<&Path>, info: RunInfo) -> loorisk::Result<()> {
    if let Some(dir) = out {
        write_results(&output, dir, &info)?;
        eprintln!("wrote {}", dir.display());
    }
    Ok(())
}

fn run(cli: Cli) -> loorisk::Result<u8> {
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    let started = unix_now();
    let cmd = std::env::args().skip(1).collect::<Vec<_>>().join(" ");
    match cli.command {
        Command::Fit(a) => {
            let (cfg, data) = load_data(&a)?;
            let f = fit(&data, &cfg.model, &cfg.solver)?;
            println!(
                "objective {}  residual {:.3e}  iterations {}  converged {}",
                f.objective, f.grad_inf_norm, f.iterations, f.converged
            );
            emit(Output::Fit(&f), a.common.out.as_deref(), info(&cmd, Some(&a.common), Some(cfg.seed), started))?;
            Ok(if f.converged { 0 } else { 1 })
        }
        Command::Lo(a) => {
            let (cfg, data) = load_data(&a)?;
            let r = lo_exact_detailed(&data, &cfg.model, &cfg.solver)?.report;
            println!("LO {}", r.estimate);
            emit(Output::Risk(&r), a.common.out.as_deref(), info(&cmd, Some(&a.common), Some(cfg.seed), started))?;
            Ok(0)
        }
        Command::Alo { args, active_tol } => {
            let (cfg, data) = load_data(&args)?;
            let full = fit(&data, &cfg.model, &cfg.solver)?;
            let r = alo_with(&data, &cfg.model, &full, &AloOpts { active_tol })?;
            println!("ALO {}  flagged {}", r.estimate, r.flagged.len());
            emit(Output::Risk(&r), args.common.out.as_deref(), info(&cmd, Some(&args.common), Some(cfg.seed), started))?;
            Ok(0)
        }
        Command::Cv { args, folds } => {
            let (cfg, data) = load_data(&args)?;
            let r = kfold_cv(&data, &cfg.model, folds, cfg.seed, &cfg.solver)?;
            println!("CV(K={folds}) {}", r.estimate);
            emit(Output::Risk(&r), args.common.out.as_deref(), info(&cmd, Some(&args.common), Some(cfg.seed), started))?;
            Ok(0)
        }
        Command::Bounds { rho, delta, lambda, n, out } => {
            let b = logistic_bound_report(rho, delta, lambda, n)?;
            println!("C_b {}", b.c_b);
            println!("C_v {}", b.c_v);
            if let Some(v) = b.bound_over_n {
                println!("C_v/n {v}");
            }
            if let Some(p) = b.published_c_v {
                println!("published C_v {p} (differs from the formula)");
            }
            emit(Output::Bound(&b), out.as_deref(), info(&cmd, None, None, started))?;
            Ok(0)
        }
        Command::Audit { args, t_grid, sample_i } => {
            let (cfg, data) = load_data(&args)?;
            let run = lo_exact_detailed(&data, &cfg.model, &cfg.solver)?;
            let opts = AuditOpts {
                t_grid_size: t_grid,
                sample_i,
            };
            let audit = audit_assumptions(&data, &cfg.model, &run.full, &run.loo_fits, &opts)?;
            let pairs: Vec<_> = audit.audited.iter().map(|&i| (i, &run.loo_fits[i])).collect();
            let perturb = check_perturb_lemma(&data, &cfg.model, &run.full, &pairs, audit.nu_emp)?;
            println!(
                "c0_emp {}  nu_emp {}  perturbation bound holds for {}/{}",
                audit.c0_emp,
                audit.nu_emp,
                perturb.entries.iter().filter(|e| e.holds).count(),
                perturb.entries.len()
            );
            let all = perturb.all_hold;
            let a = AuditRun { audit, perturb };
            emit(Output::Audit(&a), args.common.out.as_deref(), info(&cmd, Some(&args.common), Some(cfg.seed), started))?;
            Ok(if all { 0 } else { 1 })
        }
        Command::Simulate { kind, common, reps } => {
            let mut cfg = resolve_config(&common, Some(kind.into()))?;
            if let Some(r) = reps {
                cfg.reps = r;
                cfg.validate()?;
            }
            let res = run_experiment(&cfg)?;
            for r in &res.rows {
                println!(
                    "n={:<5} lambda={:<8} {:<8} mse={:.6}  mean={:.6}",
                    r.n,
                    r.lambda,
                    r.estimator.label(),
                    r.mse,
                    r.mean
                );
            }
            if let Some(s) = res.slope_fit {
                println!("log-log slope {:.3} (SE {:.3})", s.slope, s.slope_se);
            }
            emit(Output::Experiment(&res), common.out.as_deref(), info(&cmd, Some(&common), Some(cfg.seed), started))?;
            Ok(0)
        }
        Command::Selftest => {
            let checks = run_selftest();
            let mut ok = true;
            for c in &checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
                ok &= c.passed;
            }
            Ok(if ok { 0 } else { 1 })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
