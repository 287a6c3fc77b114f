//! Design points, observed datasets, and output standardization.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point in the design space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DesignPoint(pub(crate) Vec<f64>);

impl DesignPoint {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::invalid(
                "design point must have at least one coordinate",
            ));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("design point coordinates must be finite"));
        }
        Ok(DesignPoint(coords))
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn distance(&self, other: &DesignPoint) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

impl From<f64> for DesignPoint {
    fn from(x: f64) -> Self {
        DesignPoint(vec![x])
    }
}

impl TryFrom<Vec<f64>> for DesignPoint {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        DesignPoint::new(v)
    }
}

/// Observed inputs and noisy outputs.
///
/// An empty dataset is allowed (it stands for the prior) but must still know
/// its dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    dim: usize,
    points: Vec<DesignPoint>,
    values: Vec<f64>,
}

impl Dataset {
    pub fn new(points: Vec<DesignPoint>, values: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid("dataset needs at least one observation"));
        }
        if points.len() != values.len() {
            return Err(Error::invalid(format!(
                "{} points but {} values",
                points.len(),
                values.len()
            )));
        }
        let dim = points[0].dim();
        if points.iter().any(|p| p.dim() != dim) {
            return Err(Error::invalid("all design points must share one dimension"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("observed values must be finite"));
        }
        Ok(Dataset {
            dim,
            points,
            values,
        })
    }

    pub fn empty(dim: usize) -> Self {
        Dataset {
            dim,
            points: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[DesignPoint] {
        &self.points
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn push(&mut self, x: DesignPoint, y: f64) -> Result<()> {
        if x.dim() != self.dim {
            return Err(Error::invalid(format!(
                "point has dimension {}, dataset has {}",
                x.dim(),
                self.dim
            )));
        }
        if !y.is_finite() {
            return Err(Error::invalid("observed value must be finite"));
        }
        self.points.push(x);
        self.values.push(y);
        Ok(())
    }

    pub fn min_value(&self) -> Option<f64> {
        self.values.iter().copied().reduce(f64::min)
    }

    /// Returns a copy with outputs mapped through `scaling`.
    pub fn standardized(&self, scaling: &Standardizer) -> Dataset {
        Dataset {
            dim: self.dim,
            points: self.points.clone(),
            values: self.values.iter().map(|&y| scaling.forward(y)).collect(),
        }
    }
}

/// Affine output transform `z = (y - offset) / scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub offset: f64,
    pub scale: f64,
}

impl Standardizer {
    pub fn identity() -> Self {
        Standardizer {
            offset: 0.0,
            scale: 1.0,
        }
    }

    /// Empirical mean and standard deviation of `values`. A degenerate spread
    /// (fewer than two values, or all equal) keeps unit scale.
    pub fn fit(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self::identity();
        }
        let offset = crate::stats::mean(values);
        let sd = crate::stats::variance(values).sqrt();
        let scale = if sd.is_finite() && sd > 1e-12 * (1.0 + offset.abs()) {
            sd
        } else {
            1.0
        };
        Standardizer { offset, scale }
    }

    pub fn forward(&self, y: f64) -> f64 {
        (y - self.offset) / self.scale
    }

    pub fn inverse(&self, z: f64) -> f64 {
        self.offset + self.scale * z
    }
}
