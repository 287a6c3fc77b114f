//! Extended expected improvement.
//!
//! For each hyperparameter particle the incumbent is the *filtered* minimum,
//! the smallest posterior mean over the observed inputs, which removes the
//! observation noise from the classic `min y_i` incumbent. The expected
//! improvement over that incumbent is then averaged across particles.

use serde::{Deserialize, Serialize};

use crate::data::DesignPoint;
use crate::error::{Error, Result};
use crate::gp::PosteriorGp;
use crate::stats::{norm_cdf, norm_pdf};

/// Standard deviations below this are treated as exactly zero.
pub const SD_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionScores {
    pub candidates: Vec<DesignPoint>,
    pub scores: Vec<f64>,
    /// Index of the largest score; the lowest index wins ties.
    pub best_index: usize,
}

impl AcquisitionScores {
    pub fn best(&self) -> (&DesignPoint, f64) {
        (
            &self.candidates[self.best_index],
            self.scores[self.best_index],
        )
    }

    pub fn max_score(&self) -> f64 {
        self.scores[self.best_index]
    }
}

/// Minimum of the posterior mean over the observed inputs.
///
/// # Panics
/// If the fit has no training data.
pub fn filtered_min(gp: &PosteriorGp) -> f64 {
    assert!(
        !gp.data().is_empty(),
        "filtered minimum needs observed data"
    );
    let (means, _) = gp.predict_batch(gp.data().points());
    means.into_iter().fold(f64::INFINITY, f64::min)
}

/// `E[max(0, incumbent - f)]` for `f ~ N(mean, sd^2)`.
pub fn ei_closed_form(incumbent: f64, mean: f64, sd: f64) -> f64 {
    let gap = incumbent - mean;
    if sd < SD_FLOOR {
        return gap.max(0.0);
    }
    let z = gap / sd;
    (sd * norm_pdf(z) + gap * norm_cdf(z)).max(0.0)
}

fn argmax_lowest(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

/// Per-particle expected improvement at every candidate, `[particle][candidate]`.
pub fn ei_per_particle(candidates: &[DesignPoint], fits: &[PosteriorGp]) -> Vec<Vec<f64>> {
    fits.iter()
        .map(|fit| {
            let incumbent = filtered_min(fit);
            let (means, vars) = fit.predict_batch(candidates);
            means
                .iter()
                .zip(&vars)
                .map(|(m, v)| ei_closed_form(incumbent, *m, v.sqrt()))
                .collect()
        })
        .collect()
}

/// Particle-averaged expected improvement of every candidate.
pub fn eei(candidates: &[DesignPoint], fits: &[PosteriorGp]) -> Result<AcquisitionScores> {
    if candidates.is_empty() {
        return Err(Error::invalid("candidate set is empty"));
    }
    if fits.is_empty() {
        return Err(Error::invalid("at least one fitted particle is required"));
    }
    let first = fits[0].data();
    if first.is_empty() {
        return Err(Error::invalid("expected improvement needs observed data"));
    }
    if fits.iter().any(|f| f.data() != first) {
        return Err(Error::invalid("all particle fits must share one dataset"));
    }
    if candidates.iter().any(|c| c.dim() != first.dim()) {
        return Err(Error::invalid(
            "candidate dimension does not match the data",
        ));
    }
    let per = ei_per_particle(candidates, fits);
    let n = fits.len() as f64;
    // fixed particle order keeps the sum reproducible
    let scores: Vec<f64> = (0..candidates.len())
        .map(|j| per.iter().map(|row| row[j]).sum::<f64>() / n)
        .collect();
    let best_index = argmax_lowest(&scores);
    Ok(AcquisitionScores {
        candidates: candidates.to_vec(),
        scores,
        best_index,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Dataset;
    use crate::gp::{gp_fit, Hyperparameters};
    use proptest::prelude::*;

    #[test]
    fn ei_examples() {
        let s = 0.7;
        assert!(
            (ei_closed_form(2.0, 2.0, s) - s / (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-15
        );
        assert!((ei_closed_form(2.0, 2.0, 1.0) - 0.398942280401).abs() < 1e-11);
        assert_eq!(ei_closed_form(3.0, 2.0, 0.0), 1.0);
        assert_eq!(ei_closed_form(1.0, 2.0, 0.0), 0.0);
    }

    #[test]
    fn ties_pick_lowest_index() {
        assert_eq!(argmax_lowest(&[0.0, 2.0, 1.0, 2.0]), 1);
        assert_eq!(argmax_lowest(&[0.0, 0.0]), 0);
    }

    #[test]
    fn filtered_min_single_point() {
        let d = Dataset::new(vec![DesignPoint::from(0.3)], vec![1.7]).unwrap();
        let fit = gp_fit(&d, &Hyperparameters::new(1.0, vec![0.5], 0.4).unwrap()).unwrap();
        assert_eq!(
            filtered_min(&fit),
            fit.posterior_mean(&DesignPoint::from(0.3))
        );
    }

    #[test]
    fn eei_rejects_empty_candidates() {
        let d = Dataset::new(vec![DesignPoint::from(0.3)], vec![1.7]).unwrap();
        let fit = gp_fit(&d, &Hyperparameters::new(1.0, vec![0.5], 0.4).unwrap()).unwrap();
        assert!(eei(&[], std::slice::from_ref(&fit)).is_err());
        assert!(eei(&[DesignPoint::from(0.0)], &[]).is_err());
    }

    proptest! {
        #[test]
        fn ei_nondecreasing_in_sd(gap in -3.0f64..3.0, sd in 0.0f64..3.0, dsd in 0.0f64..0.5) {
            let a = ei_closed_form(gap, 0.0, sd);
            let b = ei_closed_form(gap, 0.0, sd + dsd);
            prop_assert!(a >= 0.0);
            prop_assert!(b + 1e-15 >= a, "sd {} -> {}: {} > {}", sd, sd + dsd, a, b);
        }

        #[test]
        fn ei_small_sd_limit(a in -5.0f64..5.0, b in -5.0f64..5.0) {
            prop_assert!((ei_closed_form(a, b, 1e-12) - (a - b).max(0.0)).abs() <= 1e-9);
        }
    }
}
