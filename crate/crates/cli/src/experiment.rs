//! Running configured experiments and writing their artifacts.
//!
//! Each seed gets its own directory under the output root:
//!
//! * `config.resolved.toml`: the config with all defaults filled in
//! * `trace.jsonl`: one JSON record per iteration, flushed as it is written
//! * `eei.csv`: `iteration,max_eei`
//! * `pboo.csv`: `iteration,lo,median,hi`
//! * `data.csv`: the final dataset
//! * `particles.csv`: final hyperparameter particles (standardized scale)
//! * `summary.json`: terminal status, predictive bounds and recommendation

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use bgo_core::benchmarks::{BenchmarkObjective, NoiseModel};
use bgo_core::design::lhs;
use bgo_core::optimizer::{run_with_observer, IterationRecord, Recommendation};
use bgo_core::rng::{stream_rng, Stream};
use bgo_core::uq::PbooSummary;
use bgo_core::{BgoConfig, Dataset, StochasticObjective, TerminalStatus};
use log::info;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bridge::ExternalObjective;
use crate::config::ExperimentConfig;

/// Overrides `[run].output_dir` when set.
pub const OUTPUT_ROOT_ENV: &str = "BGO_OUTPUT_ROOT";

#[derive(Debug, Error)]
pub enum RunError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] bgo_core::Error),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub status: TerminalStatus,
    pub initial_points: usize,
    pub new_evaluations: usize,
    pub iterations: usize,
    pub final_pboo: Option<PbooSummary>,
    pub recommendation: Option<Recommendation>,
    pub best_observed: Option<f64>,
    pub config: ExperimentConfig,
}

#[derive(Debug, Clone)]
pub struct SeedOutcome {
    pub seed: u64,
    pub dir: PathBuf,
    pub summary: RunSummary,
}

pub fn output_root(cfg: &ExperimentConfig) -> PathBuf {
    std::env::var_os(OUTPUT_ROOT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| cfg.run.output_dir.clone())
}

fn make_objective(cfg: &ExperimentConfig) -> Result<Box<dyn StochasticObjective>, RunError> {
    let o = &cfg.objective;
    if let Some(benchmark) = o.benchmark {
        return Ok(Box::new(BenchmarkObjective {
            benchmark,
            noise: o.noise.unwrap_or(NoiseModel::Constant(0.0)),
        }));
    }
    let cmd = o.command.as_deref().unwrap_or_default();
    Ok(Box::new(ExternalObjective::new(
        cmd,
        Duration::from_secs_f64(o.timeout_secs),
    )?))
}

/// Initial design for one seed: an LHS of `n` points, one objective draw each.
pub fn initial_data(
    objective: &mut dyn StochasticObjective,
    cfg: &ExperimentConfig,
    seed: u64,
) -> Result<Dataset, bgo_core::Error> {
    let bounds = cfg.bounds();
    let xs = lhs(
        cfg.problem.initial_points,
        &bounds,
        &mut stream_rng(seed, Stream::InitialDesign, 0),
    )?;
    let mut noise = stream_rng(seed, Stream::InitialDesign, 1);
    let ys = xs
        .iter()
        .map(|x| objective.evaluate(x, &mut noise))
        .collect::<Result<Vec<_>, _>>()?;
    Dataset::new(xs, ys)
}

fn write_text(path: &Path, text: &str) -> Result<(), RunError> {
    fs::write(path, text).map_err(io_err(path))
}

fn write_tables(dir: &Path, records: &[IterationRecord]) -> Result<(), RunError> {
    let mut eei = String::from("iteration,max_eei\n");
    let mut pboo = String::from("iteration,lo,median,hi\n");
    for r in records {
        eei.push_str(&format!("{},{}\n", r.iteration, r.max_eei));
        if let Some(p) = r.pboo {
            pboo.push_str(&format!("{},{},{},{}\n", r.iteration, p.lo, p.median, p.hi));
        }
    }
    write_text(&dir.join("eei.csv"), &eei)?;
    write_text(&dir.join("pboo.csv"), &pboo)
}

fn write_data(path: &Path, data: &Dataset) -> Result<(), RunError> {
    let mut s = String::new();
    let header: Vec<String> = (1..=data.dim()).map(|i| format!("x{i}")).collect();
    s.push_str(&format!("{},y\n", header.join(",")));
    for (x, y) in data.points().iter().zip(data.values()) {
        let xs: Vec<String> = x.coords().iter().map(|c| c.to_string()).collect();
        s.push_str(&format!("{},{y}\n", xs.join(",")));
    }
    write_text(path, &s)
}

/// Runs one seed and writes its artifacts into `dir`.
pub fn run_seed(cfg: &ExperimentConfig, seed: u64, dir: &Path) -> Result<RunSummary, RunError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let resolved = cfg.resolved();
    write_text(&dir.join("config.resolved.toml"), &cfg.resolved_toml())?;

    let mut objective = make_objective(cfg)?;
    let bgo: BgoConfig = cfg.bgo_config(seed);
    let summary_path = dir.join("summary.json");

    let initial = match initial_data(objective.as_mut(), cfg, seed) {
        Ok(d) => d,
        Err(e) => {
            let summary = RunSummary {
                seed,
                status: TerminalStatus::ObjectiveFailed(format!("initial design: {e}")),
                initial_points: 0,
                new_evaluations: 0,
                iterations: 0,
                final_pboo: None,
                recommendation: None,
                best_observed: None,
                config: resolved,
            };
            write_summary(&summary_path, &summary)?;
            return Ok(summary);
        }
    };
    let n_initial = initial.len();

    let trace_path = dir.join("trace.jsonl");
    let mut trace_file = BufWriter::new(File::create(&trace_path).map_err(io_err(&trace_path))?);
    let mut trace_error: Option<std::io::Error> = None;
    let mut observer = |r: &IterationRecord| {
        if trace_error.is_some() {
            return;
        }
        let line = serde_json::to_string(r).expect("records serialize");
        let res = writeln!(trace_file, "{line}").and_then(|_| trace_file.flush());
        if let Err(e) = res {
            trace_error = Some(e);
        }
        info!(
            "seed {seed} iteration {}: max EEI {:.3e}, y = {:?}",
            r.iteration, r.max_eei, r.observed
        );
    };
    let trace = run_with_observer(
        objective.as_mut(),
        initial,
        &cfg.bounds(),
        &bgo,
        &mut observer,
    )?;
    if let Some(e) = trace_error {
        return Err(RunError::Io {
            path: trace_path,
            source: e,
        });
    }

    write_tables(dir, &trace.records)?;
    write_data(&dir.join("data.csv"), &trace.data)?;
    if let Some(p) = &trace.particles {
        let path = dir.join("particles.csv");
        let f = File::create(&path).map_err(io_err(&path))?;
        p.write_csv(BufWriter::new(f)).map_err(io_err(&path))?;
    }
    let summary = RunSummary {
        seed,
        status: trace.status.clone(),
        initial_points: n_initial,
        new_evaluations: trace.new_evaluations(),
        iterations: trace.records.len(),
        final_pboo: trace.recommendation.as_ref().map(|r| r.pboo),
        recommendation: trace.recommendation.clone().map(|r| Recommendation {
            value_distribution: None,
            ..r
        }),
        best_observed: trace.data.min_value(),
        config: resolved,
    };
    write_summary(&summary_path, &summary)?;
    Ok(summary)
}

fn write_summary(path: &Path, summary: &RunSummary) -> Result<(), RunError> {
    let text = serde_json::to_string_pretty(summary).expect("summary serializes");
    write_text(path, &text)
}

pub fn read_summary(path: &Path) -> Result<RunSummary, RunError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| RunError::Io {
        path: path.to_path_buf(),
        source: std::io::Error::new(std::io::ErrorKind::InvalidData, e),
    })
}

/// Runs every seed of the experiment under `root`.
pub fn run_experiment(cfg: &ExperimentConfig, root: &Path) -> Result<Vec<SeedOutcome>, RunError> {
    cfg.run
        .seeds
        .iter()
        .map(|&seed| {
            let dir = root.join(format!("seed-{seed}"));
            let summary = run_seed(cfg, seed, &dir)?;
            Ok(SeedOutcome { seed, dir, summary })
        })
        .collect()
}
