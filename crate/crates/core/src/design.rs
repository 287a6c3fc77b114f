//! Box-bounded design spaces and Latin hypercube designs.

use rand::distr::Open01;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::DesignPoint;
use crate::error::{Error, Result};

/// Default number of candidate points scored per iteration.
pub const DEFAULT_CANDIDATES: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxBounds {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl BoxBounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() {
            return Err(Error::invalid("bounds need at least one dimension"));
        }
        if lower.len() != upper.len() {
            return Err(Error::invalid(format!(
                "lower has {} entries, upper has {}",
                lower.len(),
                upper.len()
            )));
        }
        for (i, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !lo.is_finite() || !hi.is_finite() || lo >= hi {
                return Err(Error::invalid(format!(
                    "bounds[{i}]: lower ({lo}) must be finite and strictly below upper ({hi})"
                )));
            }
        }
        Ok(BoxBounds { lower, upper })
    }

    pub fn unit(dim: usize) -> Self {
        BoxBounds {
            lower: vec![0.0; dim],
            upper: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn widths(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| u - l)
            .collect()
    }

    pub fn contains(&self, x: &DesignPoint) -> bool {
        x.dim() == self.dim()
            && x.coords()
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(c, (l, u))| *c >= *l && *c <= *u)
    }
}

/// Jittered Latin hypercube design: in every dimension each of the
/// `n_points` equal-width strata holds exactly one point, placed uniformly at
/// random inside its stratum. Stratum permutations are independent across
/// dimensions.
pub fn lhs<R: Rng + ?Sized>(
    n_points: usize,
    bounds: &BoxBounds,
    rng: &mut R,
) -> Result<Vec<DesignPoint>> {
    if n_points == 0 {
        return Err(Error::invalid("Latin hypercube needs at least one point"));
    }
    let d = bounds.dim();
    let mut coords = vec![vec![0.0; d]; n_points];
    let mut perm: Vec<usize> = (0..n_points).collect();
    for j in 0..d {
        perm.shuffle(rng);
        let (lo, width) = (bounds.lower[j], bounds.upper[j] - bounds.lower[j]);
        for (row, &stratum) in coords.iter_mut().zip(&perm) {
            let u: f64 = rng.sample(Open01);
            row[j] = lo + width * (stratum as f64 + u) / n_points as f64;
        }
    }
    Ok(coords.into_iter().map(DesignPoint).collect())
}
