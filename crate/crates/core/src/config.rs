//! TOML configuration files and the bundled presets.
//!
//! A config has four sections:
//!
//! ```toml
//! [experiment]   # kind, reps, seed, k_folds, lambdas, mc_draws, include_alo
//! [design]       # ns, p or delta, k or k_frac, covariance, beta_dist, support, family
//! [model]        # loss, reg, lambda, phi
//! [solver]       # tol, max_iter, line_search_shrink
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiments::{DesignConfig, ExperimentConfig, ExperimentKind};
use crate::solver::{ModelSpec, SolverOpts};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub kind: ExperimentKind,
    pub reps: usize,
    pub seed: u64,
    #[serde(default)]
    pub k_folds: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambdas: Option<Vec<f64>>,
    #[serde(default = "default_mc_draws")]
    pub mc_draws: usize,
    #[serde(default = "default_true")]
    pub include_alo: bool,
}

fn default_mc_draws() -> usize {
    200_000
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub experiment: ExperimentSection,
    pub design: DesignConfig,
    pub model: ModelSpec,
    #[serde(default)]
    pub solver: SolverOpts,
}

impl From<ConfigFile> for ExperimentConfig {
    fn from(c: ConfigFile) -> Self {
        ExperimentConfig {
            kind: c.experiment.kind,
            design: c.design,
            model: c.model,
            lambdas: c.experiment.lambdas,
            reps: c.experiment.reps,
            seed: c.experiment.seed,
            k_folds: c.experiment.k_folds,
            solver: c.solver,
            mc_draws: c.experiment.mc_draws,
            include_alo: c.experiment.include_alo,
        }
    }
}

impl From<&ExperimentConfig> for ConfigFile {
    fn from(c: &ExperimentConfig) -> Self {
        ConfigFile {
            experiment: ExperimentSection {
                kind: c.kind,
                reps: c.reps,
                seed: c.seed,
                k_folds: c.k_folds.clone(),
                lambdas: c.lambdas.clone(),
                mc_draws: c.mc_draws,
                include_alo: c.include_alo,
            },
            design: c.design.clone(),
            model: c.model,
            solver: c.solver.clone(),
        }
    }
}

/// Parses and validates a config. Errors carry the TOML line and field.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let file: ConfigFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    let cfg = ExperimentConfig::from(file);
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_config(&text).map_err(|e| match e {
        Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn to_toml(cfg: &ExperimentConfig) -> Result<String> {
    toml::to_string(&ConfigFile::from(cfg)).map_err(|e| Error::Config(e.to_string()))
}

/// Bundled presets, by name.
pub const PRESETS: &[(&str, &str)] = &[
    ("table1_desk", include_str!("../presets/table1_desk.toml")),
    ("table1_paper", include_str!("../presets/table1_paper.toml")),
    ("table2_desk", include_str!("../presets/table2_desk.toml")),
    ("table2_paper", include_str!("../presets/table2_paper.toml")),
    ("table2_slope", include_str!("../presets/table2_slope.toml")),
    ("figure1_desk", include_str!("../presets/figure1_desk.toml")),
    ("figure1_paper", include_str!("../presets/figure1_paper.toml")),
];

/// Looks up a preset by full name (`table2_desk`) or by the short name
/// qualified with an experiment kind (`desk` under `table2`).
pub fn preset(name: &str, kind: Option<ExperimentKind>) -> Result<ExperimentConfig> {
    let full = match kind {
        Some(k) if !name.contains('_') => format!("{}_{name}", k.name()),
        _ => name.to_string(),
    };
    let text = PRESETS
        .iter()
        .find(|(n, _)| *n == full)
        .map(|(_, t)| *t)
        .ok_or_else(|| {
            let known: Vec<&str> = PRESETS.iter().map(|(n, _)| *n).collect();
            Error::Config(format!("unknown preset `{full}`; known: {}", known.join(", ")))
        })?;
    let cfg = parse_config(text)?;
    if let Some(k) = kind {
        if cfg.kind != k {
            return Err(Error::Config(format!(
                "preset `{full}` is a {} experiment, not {}",
                cfg.kind.name(),
                k.name()
            )));
        }
    }
    Ok(cfg)
}
