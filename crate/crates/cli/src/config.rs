//! Experiment configuration files (TOML).
//!
//! Every section is optional except `[objective]`; missing fields take their
//! defaults, and `resolved_toml` writes the fully materialized config back out.

use std::path::PathBuf;

use bgo_core::benchmarks::{Benchmark, NoiseModel};
use bgo_core::hyper::McmcConfig;
use bgo_core::optimizer::BgoConfig;
use bgo_core::BoxBounds;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: cannot read config: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{path}:{line}: invalid `{field}`: {message}")]
    Invalid {
        path: String,
        line: usize,
        field: String,
        message: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveSpec {
    /// Built-in benchmark id (`synth1d` or `synth2d`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub benchmark: Option<Benchmark>,
    /// Noise for the built-in benchmark: a number, `constant:<s>`, `hetero1d` or `hetero2d`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseModel>,
    /// External objective: program and arguments.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<Vec<String>>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
}

fn default_timeout() -> f64 {
    600.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProblemSpec {
    /// Box bounds; benchmarks supply their own when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper: Option<Vec<f64>>,
    /// Initial observations, placed by a Latin hypercube design.
    pub initial_points: usize,
}

impl Default for ProblemSpec {
    fn default() -> Self {
        ProblemSpec {
            lower: None,
            upper: None,
            initial_points: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSpec {
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
}

impl Default for RunSpec {
    fn default() -> Self {
        RunSpec {
            seeds: vec![0],
            output_dir: PathBuf::from("bgo-output"),
        }
    }
}

/// Optimizer section: every [`BgoConfig`] field except the seed, which
/// comes from `[run].seeds`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerSpec {
    pub max_iters: usize,
    pub eei_tolerance: f64,
    pub n_candidates: usize,
    pub uq_m: usize,
    pub uq_every: usize,
    pub uq_grid: usize,
    pub pboo_level: f64,
}

impl Default for OptimizerSpec {
    fn default() -> Self {
        let d = BgoConfig::default();
        OptimizerSpec {
            max_iters: d.max_iters,
            eei_tolerance: d.eei_tolerance,
            n_candidates: d.n_candidates,
            uq_m: d.uq_m,
            uq_every: d.uq_every,
            uq_grid: d.uq_grid,
            pboo_level: d.pboo_level,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McmcSpec {
    pub n_particles: usize,
    pub burn_in: usize,
    pub post_burn_steps: usize,
    pub thin: usize,
    pub map_restarts: usize,
}

impl Default for McmcSpec {
    fn default() -> Self {
        let d = McmcConfig::default();
        McmcSpec {
            n_particles: d.n_particles,
            burn_in: d.burn_in,
            post_burn_steps: d.post_burn_steps,
            thin: d.thin,
            map_restarts: d.map_restarts,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub objective: ObjectiveSpec,
    #[serde(default)]
    pub problem: ProblemSpec,
    #[serde(default)]
    pub optimizer: OptimizerSpec,
    #[serde(default)]
    pub mcmc: McmcSpec,
    #[serde(default)]
    pub run: RunSpec,
}

fn line_of(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
    (line, column)
}

/// Line of the first `key =` assignment in `text`, or of the `[section]`
/// header, or 1.
fn line_of_key(text: &str, section: &str, key: &str) -> usize {
    let mut in_section = section.is_empty();
    let mut section_line = 1;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.starts_with('[') {
            in_section = line.trim_matches(|c| c == '[' || c == ']').trim() == section;
            if in_section {
                section_line = i + 1;
            }
            continue;
        }
        if in_section {
            if let Some((k, _)) = line.split_once('=') {
                if k.trim() == key {
                    return i + 1;
                }
            }
        }
    }
    section_line
}

impl ExperimentConfig {
    pub fn from_file(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_str_with_path(&text, &path.display().to_string())
    }

    pub fn from_str_with_path(text: &str, path: &str) -> Result<Self, ConfigError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| {
            let (line, column) = e.span().map_or((1, 1), |s| line_of(text, s.start));
            ConfigError::Parse {
                path: path.to_string(),
                line,
                column,
                message: e.message().to_string(),
            }
        })?;
        cfg.validate()
            .map_err(|(section, key, message)| ConfigError::Invalid {
                path: path.to_string(),
                line: line_of_key(text, section, key),
                field: if section.is_empty() {
                    key.to_string()
                } else {
                    format!("{section}.{key}")
                },
                message,
            })?;
        Ok(cfg)
    }

    /// Semantic checks; errors name `(section, key, message)`.
    fn validate(&self) -> Result<(), (&'static str, &'static str, String)> {
        let o = &self.objective;
        match (&o.benchmark, &o.command) {
            (None, None) => {
                return Err((
                    "objective",
                    "benchmark",
                    "either `benchmark` or `command` is required".into(),
                ))
            }
            (Some(_), Some(_)) => {
                return Err((
                    "objective",
                    "command",
                    "`benchmark` and `command` are mutually exclusive".into(),
                ))
            }
            (None, Some(cmd)) if cmd.is_empty() => {
                return Err(("objective", "command", "command must name a program".into()))
            }
            _ => {}
        }
        if o.command.is_some() && o.noise.is_some() {
            return Err((
                "objective",
                "noise",
                "noise applies only to built-in benchmarks".into(),
            ));
        }
        if !(o.timeout_secs > 0.0 && o.timeout_secs.is_finite()) {
            return Err((
                "objective",
                "timeout_secs",
                "must be a positive number of seconds".into(),
            ));
        }
        if let (Some(b), Some(n)) = (o.benchmark, o.noise) {
            let probe = vec![0.5; b.dim()];
            n.std_dev(&probe)
                .map_err(|e| ("objective", "noise", e.to_string()))?;
        }
        match (&self.problem.lower, &self.problem.upper) {
            (Some(_), None) => return Err(("problem", "upper", "upper bounds missing".into())),
            (None, Some(_)) => return Err(("problem", "lower", "lower bounds missing".into())),
            (None, None) if o.command.is_some() => {
                return Err((
                    "problem",
                    "lower",
                    "external objectives need explicit bounds".into(),
                ))
            }
            _ => {}
        }
        if let (Some(lo), Some(hi)) = (&self.problem.lower, &self.problem.upper) {
            BoxBounds::new(lo.clone(), hi.clone())
                .map_err(|e| ("problem", "lower", e.to_string()))?;
            if let Some(b) = o.benchmark {
                if lo.len() != b.dim() {
                    return Err((
                        "problem",
                        "lower",
                        format!("{b} is {}-dimensional", b.dim()),
                    ));
                }
            }
        }
        if self.problem.initial_points == 0 {
            return Err(("problem", "initial_points", "must be at least 1".into()));
        }
        if self.run.seeds.is_empty() {
            return Err(("run", "seeds", "at least one seed is required".into()));
        }
        self.bgo_config(0)
            .validate()
            .map_err(|e| ("optimizer", "max_iters", e.to_string()))
            .map_err(|(s, k, m)| refine_optimizer_field(s, k, m))?;
        Ok(())
    }

    pub fn bounds(&self) -> BoxBounds {
        match (
            &self.problem.lower,
            &self.problem.upper,
            self.objective.benchmark,
        ) {
            (Some(lo), Some(hi), _) => BoxBounds::new(lo.clone(), hi.clone()).expect("validated"),
            (_, _, Some(b)) => b.bounds(),
            _ => unreachable!("validated config has bounds"),
        }
    }

    pub fn bgo_config(&self, seed: u64) -> BgoConfig {
        let o = &self.optimizer;
        let m = &self.mcmc;
        BgoConfig {
            max_iters: o.max_iters,
            eei_tolerance: o.eei_tolerance,
            n_candidates: o.n_candidates,
            mcmc: McmcConfig {
                n_particles: m.n_particles,
                burn_in: m.burn_in,
                post_burn_steps: m.post_burn_steps,
                thin: m.thin,
                map_restarts: m.map_restarts,
                seed,
            },
            uq_m: o.uq_m,
            uq_every: o.uq_every,
            uq_grid: o.uq_grid,
            pboo_level: o.pboo_level,
            seed,
        }
    }

    /// The config with every default made explicit (bounds included).
    pub fn resolved(&self) -> ExperimentConfig {
        let mut c = self.clone();
        let b = self.bounds();
        c.problem.lower = Some(b.lower().to_vec());
        c.problem.upper = Some(b.upper().to_vec());
        if c.objective.benchmark.is_some() && c.objective.noise.is_none() {
            c.objective.noise = Some(NoiseModel::Constant(0.0));
        }
        c
    }

    pub fn resolved_toml(&self) -> String {
        toml::to_string_pretty(&self.resolved()).expect("config serializes")
    }
}

/// Maps a core validation message back onto the config key it concerns.
fn refine_optimizer_field(
    section: &'static str,
    key: &'static str,
    message: String,
) -> (&'static str, &'static str, String) {
    const KEYS: [(&str, &str); 12] = [
        ("mcmc", "n_particles"),
        ("mcmc", "post_burn_steps"),
        ("mcmc", "thin"),
        ("mcmc", "map_restarts"),
        ("optimizer", "max_iters"),
        ("optimizer", "eei_tolerance"),
        ("optimizer", "n_candidates"),
        ("optimizer", "uq_m"),
        ("optimizer", "uq_every"),
        ("optimizer", "uq_grid"),
        ("optimizer", "pboo_level"),
        ("mcmc", "burn_in"),
    ];
    for (s, k) in KEYS {
        if message.contains(k) {
            return (s, k, message);
        }
    }
    (section, key, message)
}
