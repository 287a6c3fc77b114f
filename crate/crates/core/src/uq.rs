//! Epistemic uncertainty about the optimum.
//!
//! Functions are sampled jointly on a finite grid from every particle's
//! posterior; the grid minimum and its location of each sample give particle
//! approximations of the distribution of the optimal value and of the
//! optimizer.

use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, DesignPoint};
use crate::design::BoxBounds;
use crate::error::{Error, Result};
use crate::gp::gp_fit;
use crate::hyper::ParticleSet;
use crate::rng::BgoRng;
use crate::stats::quantile_sorted;

/// Functions sampled per particle by default.
pub const DEFAULT_SAMPLES_PER_PARTICLE: usize = 100;
/// Default number of grid points for function sampling.
pub const DEFAULT_GRID_SIZE: usize = 1000;
/// Largest grid accepted; joint sampling is cubic in the grid size.
pub const MAX_GRID_SIZE: usize = 2000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QDistribution {
    pub grid: Vec<DesignPoint>,
    /// Sampled optimal values, particle-major (`N * M` entries).
    pub min_samples: Vec<f64>,
    /// Grid index of each sample's minimizer, paired with `min_samples`.
    pub argmin_indices: Vec<usize>,
}

impl QDistribution {
    pub fn len(&self) -> usize {
        self.min_samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.min_samples.is_empty()
    }

    pub fn argmin_samples(&self) -> impl Iterator<Item = &DesignPoint> {
        self.argmin_indices.iter().map(|&i| &self.grid[i])
    }

    /// Applies `v -> offset + scale * v` to every sampled optimal value.
    pub fn map_values(mut self, offset: f64, scale: f64) -> Self {
        self.min_samples
            .iter_mut()
            .for_each(|v| *v = offset + scale * *v);
        self
    }

    pub fn summary(&self, level: f64) -> Result<PbooSummary> {
        let (lo, hi) = pboo(self, level)?;
        let median = sorted_quantile(&self.min_samples, 0.5);
        Ok(PbooSummary { lo, median, hi })
    }
}

/// Predictive bounds on the optimal value plus the median.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PbooSummary {
    pub lo: f64,
    pub median: f64,
    pub hi: f64,
}

impl PbooSummary {
    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }
}

fn sorted_quantile(xs: &[f64], p: f64) -> f64 {
    let mut s = xs.to_vec();
    s.sort_by(f64::total_cmp);
    quantile_sorted(&s, p)
}

/// Samples `m` functions per particle on `grid` and records each sample's
/// grid minimum and minimizer (lowest index on ties).
pub fn q_distribution<R: Rng + ?Sized>(
    particles: &ParticleSet,
    data: &Dataset,
    grid: &[DesignPoint],
    m: usize,
    rng: &mut R,
) -> Result<QDistribution> {
    if grid.is_empty() {
        return Err(Error::invalid("uq grid is empty"));
    }
    if grid.len() > MAX_GRID_SIZE {
        return Err(Error::invalid(format!(
            "uq grid has {} points; the limit is {MAX_GRID_SIZE}",
            grid.len()
        )));
    }
    if m == 0 {
        return Err(Error::invalid(
            "at least one function sample per particle is required",
        ));
    }
    // one seed per particle, drawn up front, so per-particle work is order independent
    let seeds: Vec<u64> = (0..particles.len()).map(|_| rng.random()).collect();
    let mut min_samples = Vec::with_capacity(particles.len() * m);
    let mut argmin_indices = Vec::with_capacity(particles.len() * m);
    for (theta, seed) in particles.particles().iter().zip(seeds) {
        let fit = gp_fit(data, theta)?;
        let mut prng = BgoRng::seed_from_u64(seed);
        for f in fit.sample_functions(grid, m, &mut prng)? {
            let (idx, val) = f
                .iter()
                .enumerate()
                .fold(
                    (0, f64::INFINITY),
                    |(bi, bv), (i, &v)| if v < bv { (i, v) } else { (bi, bv) },
                );
            min_samples.push(val);
            argmin_indices.push(idx);
        }
    }
    Ok(QDistribution {
        grid: grid.to_vec(),
        min_samples,
        argmin_indices,
    })
}

/// Central `level` interval of the sampled optimal values, using type-7
/// empirical quantiles.
pub fn pboo(q: &QDistribution, level: f64) -> Result<(f64, f64)> {
    if q.is_empty() {
        return Err(Error::invalid("no optimal-value samples"));
    }
    if !(0.0..1.0).contains(&level) {
        return Err(Error::invalid(format!("level {level} must lie in [0, 1)")));
    }
    let mut s = q.min_samples.clone();
    s.sort_by(f64::total_cmp);
    Ok((
        quantile_sorted(&s, (1.0 - level) / 2.0),
        quantile_sorted(&s, (1.0 + level) / 2.0),
    ))
}

/// Marginal histogram of the sampled minimizers in every dimension, with
/// `bins` uniform bins over the box. Returns `[dimension][bin]` masses.
pub fn argmin_histogram(
    q: &QDistribution,
    bounds: &BoxBounds,
    bins: usize,
) -> Result<Vec<Vec<f64>>> {
    if q.argmin_indices.is_empty() {
        return Err(Error::invalid("no minimizer samples"));
    }
    if bins == 0 {
        return Err(Error::invalid("at least one bin is required"));
    }
    let total = q.argmin_indices.len() as f64;
    Ok((0..bounds.dim())
        .map(|k| {
            let (lo, hi) = (bounds.lower()[k], bounds.upper()[k]);
            let mut counts = vec![0usize; bins];
            for x in q.argmin_samples() {
                let t = (x.coords()[k] - lo) / (hi - lo);
                let b = ((t * bins as f64).floor().max(0.0) as usize).min(bins - 1);
                counts[b] += 1;
            }
            counts.into_iter().map(|c| c as f64 / total).collect()
        })
        .collect())
}
