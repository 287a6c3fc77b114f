//! The sequential optimization loop.
//!
//! Each iteration rebuilds the hyperparameter particles on the current data,
//! scores a fresh Latin hypercube of candidates by extended expected
//! improvement, and either stops (best score below the tolerance) or
//! evaluates the objective at the best candidate.
//!
//! Outputs are standardized (empirical mean and standard deviation) before
//! any hyperparameter inference; particle sets produced here therefore live
//! on the standardized scale of the data they were built from. Scores and
//! value distributions are reported on the original scale.

use std::time::Instant;

use log::{debug, warn};
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::acquisition::{eei, AcquisitionScores};
use crate::data::{Dataset, DesignPoint, Standardizer};
use crate::design::{lhs, BoxBounds, DEFAULT_CANDIDATES};
use crate::error::{Error, Result};
use crate::gp::{gp_fit, Hyperparameters, PosteriorGp};
use crate::hyper::{map_estimate, sample_particles_from, MapEstimate, McmcConfig, ParticleSet};
use crate::rng::{stream_rng, Stream};
use crate::uq::{
    q_distribution, PbooSummary, QDistribution, DEFAULT_GRID_SIZE, DEFAULT_SAMPLES_PER_PARTICLE,
    MAX_GRID_SIZE,
};

/// A noisy objective `y = V(x; xi)`. The random stream is handed in so runs
/// are reproducible; implementations that draw their own randomness may
/// ignore it.
pub trait StochasticObjective {
    fn evaluate(&mut self, x: &DesignPoint, rng: &mut dyn RngCore) -> Result<f64>;
}

impl<F> StochasticObjective for F
where
    F: FnMut(&DesignPoint, &mut dyn RngCore) -> Result<f64>,
{
    fn evaluate(&mut self, x: &DesignPoint, rng: &mut dyn RngCore) -> Result<f64> {
        self(x, rng)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BgoConfig {
    /// Budget of new objective evaluations.
    pub max_iters: usize,
    /// Stop once the best candidate's score drops below this.
    pub eei_tolerance: f64,
    pub n_candidates: usize,
    pub mcmc: McmcConfig,
    /// Function samples per particle for the optimum distribution.
    pub uq_m: usize,
    /// Compute predictive bounds every this many iterations; 0 means only
    /// for the final recommendation.
    pub uq_every: usize,
    /// Latin hypercube points in the sampling grid; observed inputs are
    /// added on top.
    pub uq_grid: usize,
    pub pboo_level: f64,
    pub seed: u64,
}

impl Default for BgoConfig {
    fn default() -> Self {
        BgoConfig {
            max_iters: 50,
            eei_tolerance: 1e-4,
            n_candidates: DEFAULT_CANDIDATES,
            mcmc: McmcConfig::default(),
            uq_m: DEFAULT_SAMPLES_PER_PARTICLE,
            uq_every: 1,
            uq_grid: DEFAULT_GRID_SIZE,
            pboo_level: 0.95,
            seed: 0,
        }
    }
}

impl BgoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::invalid("max_iters must be at least 1"));
        }
        if !(self.eei_tolerance >= 0.0 && self.eei_tolerance.is_finite()) {
            return Err(Error::invalid(
                "eei_tolerance must be finite and nonnegative",
            ));
        }
        if self.n_candidates == 0 {
            return Err(Error::invalid("n_candidates must be at least 1"));
        }
        if self.uq_m == 0 {
            return Err(Error::invalid("uq_m must be at least 1"));
        }
        if self.uq_grid == 0 || self.uq_grid > MAX_GRID_SIZE {
            return Err(Error::invalid(format!(
                "uq_grid must lie in 1..={MAX_GRID_SIZE}"
            )));
        }
        if !(self.pboo_level > 0.0 && self.pboo_level < 1.0) {
            return Err(Error::invalid(
                "pboo_level must lie strictly between 0 and 1",
            ));
        }
        self.mcmc.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub chosen: DesignPoint,
    /// `None` when the loop stopped (or failed) before evaluating.
    pub observed: Option<f64>,
    pub max_eei: f64,
    pub pboo: Option<PbooSummary>,
    /// Dataset size when the candidates were scored.
    pub n_data: usize,
    pub acceptance_rate: f64,
    pub degenerate_chain: bool,
    pub map_converged: bool,
    pub wall_time_secs: f64,
}

impl IterationRecord {
    /// Equality ignoring wall time.
    pub fn same_outcome(&self, other: &IterationRecord) -> bool {
        let mut a = self.clone();
        a.wall_time_secs = other.wall_time_secs;
        &a == other
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "message", rename_all = "kebab-case")]
pub enum TerminalStatus {
    ToleranceHit,
    BudgetExhausted,
    ObjectiveFailed(String),
    NumericalFailure(String),
}

impl TerminalStatus {
    pub fn is_success(&self) -> bool {
        matches!(
            self,
            TerminalStatus::ToleranceHit | TerminalStatus::BudgetExhausted
        )
    }
}

/// Best design on a grid plus the distribution of the optimal value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub x_best: DesignPoint,
    /// Particle-averaged posterior mean at `x_best`.
    pub mean_at_best: f64,
    pub pboo: PbooSummary,
    pub level: f64,
    #[serde(skip)]
    pub value_distribution: Option<QDistribution>,
}

#[derive(Debug, Clone)]
pub struct RunTrace {
    pub records: Vec<IterationRecord>,
    pub status: TerminalStatus,
    pub data: Dataset,
    /// Particles for the final dataset (standardized scale).
    pub particles: Option<ParticleSet>,
    pub recommendation: Option<Recommendation>,
}

impl RunTrace {
    pub fn new_evaluations(&self) -> usize {
        self.records.iter().filter(|r| r.observed.is_some()).count()
    }
}

/// Particle fits on standardized data.
struct Surrogate {
    scaling: Standardizer,
    std_data: Dataset,
    fits: Vec<PosteriorGp>,
}

impl Surrogate {
    fn build(data: &Dataset, particles: &ParticleSet) -> Result<Self> {
        let scaling = Standardizer::fit(data.values());
        let std_data = data.standardized(&scaling);
        let fits = particles
            .particles()
            .iter()
            .map(|t| gp_fit(&std_data, t))
            .collect::<Result<Vec<_>>>()?;
        Ok(Surrogate {
            scaling,
            std_data,
            fits,
        })
    }

    fn mean_surface(&self, grid: &[DesignPoint]) -> Vec<f64> {
        let mut acc = vec![0.0; grid.len()];
        for fit in &self.fits {
            let (m, _) = fit.predict_batch(grid);
            acc.iter_mut().zip(m).for_each(|(a, v)| *a += v);
        }
        let n = self.fits.len() as f64;
        acc.into_iter()
            .map(|v| self.scaling.inverse(v / n))
            .collect()
    }
}

/// Standardizes `data` and builds a particle set with a fresh MAP search
/// (warm-started from `warm` when given) followed by the adaptive chain.
pub fn build_particles<R: Rng + ?Sized>(
    data: &Dataset,
    bounds: &BoxBounds,
    mcmc: &McmcConfig,
    warm: Option<&Hyperparameters>,
    rng: &mut R,
) -> Result<(ParticleSet, MapEstimate)> {
    let scaling = Standardizer::fit(data.values());
    let std_data = data.standardized(&scaling);
    let map = map_estimate(&std_data, &bounds.widths(), mcmc.map_restarts, warm, rng)?;
    if !map.converged {
        debug!("MAP search stopped with gradient norm {:e}", map.grad_norm);
    }
    let particles = sample_particles_from(&std_data, &map.theta, mcmc, rng)?;
    Ok((particles, map))
}

/// Picks the grid point with the smallest particle-averaged posterior mean and
/// samples the distribution of the optimal value on the same grid.
///
/// `particles` must be on the standardized scale of `data` (as produced by
/// [`build_particles`] or [`run`]).
pub fn recommend<R: Rng + ?Sized>(
    data: &Dataset,
    particles: &ParticleSet,
    grid: &[DesignPoint],
    m: usize,
    level: f64,
    rng: &mut R,
) -> Result<Recommendation> {
    if grid.is_empty() {
        return Err(Error::invalid("recommendation grid is empty"));
    }
    let sur = Surrogate::build(data, particles)?;
    let surface = sur.mean_surface(grid);
    let best = surface
        .iter()
        .enumerate()
        .fold(0, |b, (i, v)| if *v < surface[b] { i } else { b });
    let q = q_distribution(particles, &sur.std_data, grid, m, rng)?
        .map_values(sur.scaling.offset, sur.scaling.scale);
    let pboo = q.summary(level)?;
    Ok(Recommendation {
        x_best: grid[best].clone(),
        mean_at_best: surface[best],
        pboo,
        level,
        value_distribution: Some(q),
    })
}

/// Grid for optimal-value sampling: a Latin hypercube of `size` points plus
/// the distinct observed inputs, which cluster where the minimum is. The
/// hypercube part shrinks so the total stays within [`MAX_GRID_SIZE`].
pub fn uq_grid<R: Rng + ?Sized>(
    size: usize,
    bounds: &BoxBounds,
    data: &Dataset,
    rng: &mut R,
) -> Result<Vec<DesignPoint>> {
    let mut observed: Vec<DesignPoint> = Vec::new();
    for x in data.points() {
        if !observed.contains(x) {
            observed.push(x.clone());
        }
    }
    observed.truncate(MAX_GRID_SIZE);
    let n_lhs = size.min(MAX_GRID_SIZE - observed.len());
    let mut grid = if n_lhs > 0 {
        lhs(n_lhs, bounds, rng)?
    } else {
        Vec::new()
    };
    grid.extend(observed);
    Ok(grid)
}

/// Runs the optimization loop without observing intermediate records.
pub fn run<O: StochasticObjective + ?Sized>(
    objective: &mut O,
    initial: Dataset,
    bounds: &BoxBounds,
    cfg: &BgoConfig,
) -> Result<RunTrace> {
    run_with_observer(objective, initial, bounds, cfg, &mut |_| {})
}

/// Runs the loop, calling `observer` after every appended record.
///
/// Configuration and input errors are returned as `Err`. Failures during the
/// loop end the run early with a partial trace and a failure status.
pub fn run_with_observer<O: StochasticObjective + ?Sized>(
    objective: &mut O,
    initial: Dataset,
    bounds: &BoxBounds,
    cfg: &BgoConfig,
    observer: &mut dyn FnMut(&IterationRecord),
) -> Result<RunTrace> {
    cfg.validate()?;
    if initial.is_empty() {
        return Err(Error::invalid(
            "the optimizer needs at least one initial observation",
        ));
    }
    if initial.dim() != bounds.dim() {
        return Err(Error::invalid(format!(
            "data dimension {} does not match bounds dimension {}",
            initial.dim(),
            bounds.dim()
        )));
    }

    let mut data = initial;
    let mut records: Vec<IterationRecord> = Vec::new();
    let mut warm: Option<Hyperparameters> = None;
    let mut last_particles: Option<(ParticleSet, usize)> = None;
    let mut status = TerminalStatus::BudgetExhausted;

    let mut s = 0usize;
    while s < cfg.max_iters {
        let started = Instant::now();
        let iter = s as u64;
        let mut mcmc_rng = stream_rng(cfg.seed, Stream::Mcmc, iter);
        let mcmc = McmcConfig {
            seed: crate::rng::derive_seed(cfg.seed, Stream::Mcmc, iter),
            ..cfg.mcmc.clone()
        };

        let step = (|| -> Result<(ParticleSet, MapEstimate, Surrogate, AcquisitionScores, Option<PbooSummary>)> {
            let (particles, map) = build_particles(&data, bounds, &mcmc, warm.as_ref(), &mut mcmc_rng)?;
            let sur = Surrogate::build(&data, &particles)?;
            let candidates = lhs(cfg.n_candidates, bounds, &mut stream_rng(cfg.seed, Stream::Candidates, iter))?;
            let scores = eei(&candidates, &sur.fits)?;
            let pboo = if cfg.uq_every > 0 && s.is_multiple_of(cfg.uq_every) {
                let mut uq_rng = stream_rng(cfg.seed, Stream::FunctionSampling, iter);
                let grid = uq_grid(cfg.uq_grid, bounds, &data, &mut uq_rng)?;
                let q = q_distribution(&particles, &sur.std_data, &grid, cfg.uq_m, &mut uq_rng)?
                    .map_values(sur.scaling.offset, sur.scaling.scale);
                Some(q.summary(cfg.pboo_level)?)
            } else {
                None
            };
            Ok((particles, map, sur, scores, pboo))
        })();

        let (particles, map, sur, scores, pboo) = match step {
            Ok(v) => v,
            Err(e) => {
                warn!("iteration {s} failed: {e}");
                status = TerminalStatus::NumericalFailure(e.to_string());
                break;
            }
        };
        let map_converged = map.converged;
        warm = Some(map.theta);
        let (chosen, best_std) = scores.best();
        let chosen = chosen.clone();
        // EI is shift invariant and scales with the output scale
        let max_eei = best_std * sur.scaling.scale;
        let mut record = IterationRecord {
            iteration: s,
            chosen: chosen.clone(),
            observed: None,
            max_eei,
            pboo,
            n_data: data.len(),
            acceptance_rate: particles.diagnostics.acceptance_rate,
            degenerate_chain: particles.diagnostics.degenerate,
            map_converged,
            wall_time_secs: 0.0,
        };

        if max_eei < cfg.eei_tolerance {
            record.wall_time_secs = started.elapsed().as_secs_f64();
            observer(&record);
            records.push(record);
            last_particles = Some((particles, data.len()));
            status = TerminalStatus::ToleranceHit;
            break;
        }

        let mut obj_rng = stream_rng(cfg.seed, Stream::Objective, iter);
        let y = match objective.evaluate(&chosen, &mut obj_rng) {
            Ok(y) if y.is_finite() => y,
            Ok(y) => {
                status = TerminalStatus::ObjectiveFailed(format!(
                    "objective returned non-finite value {y}"
                ));
                record.wall_time_secs = started.elapsed().as_secs_f64();
                observer(&record);
                records.push(record);
                break;
            }
            Err(e) => {
                status = TerminalStatus::ObjectiveFailed(e.to_string());
                record.wall_time_secs = started.elapsed().as_secs_f64();
                observer(&record);
                records.push(record);
                break;
            }
        };
        data.push(chosen, y)?;
        record.observed = Some(y);
        record.wall_time_secs = started.elapsed().as_secs_f64();
        observer(&record);
        records.push(record);
        s += 1;
    }

    // particles for the final dataset: reuse when the data did not change
    let final_particles = match last_particles {
        Some((p, n)) if n == data.len() => Ok(p),
        _ => {
            let iter = s as u64;
            let mcmc = McmcConfig {
                seed: crate::rng::derive_seed(cfg.seed, Stream::Mcmc, iter),
                ..cfg.mcmc.clone()
            };
            build_particles(
                &data,
                bounds,
                &mcmc,
                warm.as_ref(),
                &mut stream_rng(cfg.seed, Stream::Mcmc, iter),
            )
            .map(|(p, _)| p)
        }
    };
    let (particles, recommendation) = match final_particles {
        Ok(p) => {
            let mut uq_rng = stream_rng(cfg.seed, Stream::FunctionSampling, u64::MAX);
            let rec = uq_grid(cfg.uq_grid, bounds, &data, &mut uq_rng).and_then(|grid| {
                recommend(&data, &p, &grid, cfg.uq_m, cfg.pboo_level, &mut uq_rng)
            });
            match rec {
                Ok(r) => (Some(p), Some(r)),
                Err(e) => {
                    warn!("final recommendation failed: {e}");
                    if status.is_success() {
                        status = TerminalStatus::NumericalFailure(e.to_string());
                    }
                    (Some(p), None)
                }
            }
        }
        Err(e) => {
            warn!("final particle set failed: {e}");
            if status.is_success() {
                status = TerminalStatus::NumericalFailure(e.to_string());
            }
            (None, None)
        }
    };

    Ok(RunTrace {
        records,
        status,
        data,
        particles,
        recommendation,
    })
}
