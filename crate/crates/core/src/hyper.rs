//! Hyperparameter posterior: priors, marginal likelihood, MAP search and an
//! adaptive-Metropolis particle approximation.
//!
//! All sampling and optimization happens in log space,
//! `u = (log s, log l_1, .., log l_d, log sigma)`, where every component is
//! restricted to `[-LOG_BOUND, LOG_BOUND]`. The log-space target is the
//! log posterior of `theta` plus the Jacobian `sum(u)`.

use std::f64::consts::PI;
use std::io::{BufRead, Write};

use log::warn;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::gp::{gp_fit, jittered_cholesky, Hyperparameters};
use crate::neldermead;

/// Hard bound on every log-hyperparameter.
pub const LOG_BOUND: f64 = 10.0;
/// Proposal scale factor of the adaptive Metropolis sampler, divided by the dimension.
pub const AM_SCALE: f64 = 2.38 * 2.38;
/// Ridge added to the empirical covariance before scaling.
pub const AM_EPSILON: f64 = 1e-6;
/// Chain acceptance rate below which the particle set is flagged degenerate.
pub const DEGENERATE_ACCEPTANCE: f64 = 0.01;
/// Gradient norm (log space) under which a MAP search counts as converged.
pub const MAP_GRAD_TOL: f64 = 1e-5;

const AM_INITIAL_SD: f64 = 0.1;

/// Unnormalized log prior: Jeffreys on `s` and `sigma`, `1/(1+l^2)` on each
/// lengthscale.
pub fn log_prior(theta: &Hyperparameters) -> f64 {
    -theta.signal().ln()
        - theta.noise().ln()
        - theta
            .lengthscales()
            .iter()
            .map(|l| (l * l).ln_1p())
            .sum::<f64>()
}

/// `log N(y | 0, K_n + sigma^2 I)`. Zero for an empty dataset.
pub fn log_marginal_likelihood(data: &Dataset, theta: &Hyperparameters) -> Result<f64> {
    if data.is_empty() {
        return Ok(0.0);
    }
    let gp = gp_fit(data, theta)?;
    let l = gp.chol_factor();
    let y = DVector::from_column_slice(data.values());
    let log_det: f64 = (0..l.nrows()).map(|i| l[(i, i)].ln()).sum();
    let n = data.len() as f64;
    Ok(-0.5 * y.dot(gp.alpha()) - log_det - 0.5 * n * (2.0 * PI).ln())
}

/// Unnormalized log posterior of `theta`.
pub fn log_posterior(data: &Dataset, theta: &Hyperparameters) -> Result<f64> {
    Ok(log_marginal_likelihood(data, theta)? + log_prior(theta))
}

/// Log-space target with cached pairwise squared distances, evaluated many
/// times by the MAP search and the sampler.
pub struct LogTarget {
    dim: usize,
    n: usize,
    y: DVector<f64>,
    /// One `n x n` matrix of squared coordinate differences per input dimension.
    sq_diffs: Vec<DMatrix<f64>>,
}

impl LogTarget {
    pub fn new(data: &Dataset) -> Self {
        let n = data.len();
        let sq_diffs = (0..data.dim())
            .map(|k| {
                DMatrix::from_fn(n, n, |i, j| {
                    let t = data.points()[i].coords()[k] - data.points()[j].coords()[k];
                    t * t
                })
            })
            .collect();
        LogTarget {
            dim: data.dim(),
            n,
            y: DVector::from_column_slice(data.values()),
            sq_diffs,
        }
    }

    /// Number of log-parameters, `d + 2`.
    pub fn n_params(&self) -> usize {
        self.dim + 2
    }

    pub fn in_bounds(u: &[f64]) -> bool {
        u.iter().all(|v| v.abs() <= LOG_BOUND)
    }

    fn log_likelihood(&self, u: &[f64]) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        let s2 = (2.0 * u[0]).exp();
        let inv_l2: Vec<f64> = u[1..=self.dim].iter().map(|v| (-2.0 * v).exp()).collect();
        let noise2 = (2.0 * u[self.dim + 1]).exp();
        let mut k = DMatrix::zeros(self.n, self.n);
        for j in 0..self.n {
            for i in j..self.n {
                let r2: f64 = self
                    .sq_diffs
                    .iter()
                    .zip(&inv_l2)
                    .map(|(d, w)| d[(i, j)] * w)
                    .sum();
                let v = s2 * (-0.5 * r2).exp();
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
            k[(j, j)] += noise2;
        }
        let Ok((chol, _)) = jittered_cholesky(&k, s2, "log_target") else {
            return f64::NEG_INFINITY;
        };
        let l = chol.l_dirty();
        let Some(w) = l.solve_lower_triangular(&self.y) else {
            return f64::NEG_INFINITY;
        };
        let log_det: f64 = (0..self.n).map(|i| l[(i, i)].ln()).sum();
        -0.5 * w.norm_squared() - log_det - 0.5 * self.n as f64 * (2.0 * PI).ln()
    }

    /// Log posterior density of `theta = exp(u)` plus the log Jacobian;
    /// `-inf` outside the box.
    pub fn eval(&self, u: &[f64]) -> f64 {
        debug_assert_eq!(u.len(), self.n_params());
        if !Self::in_bounds(u) {
            return f64::NEG_INFINITY;
        }
        let prior_plus_jacobian: f64 = u[1..=self.dim]
            .iter()
            .map(|v| v - (2.0 * v).exp().ln_1p())
            .sum();
        let ll = self.log_likelihood(u);
        if ll.is_finite() {
            ll + prior_plus_jacobian
        } else {
            f64::NEG_INFINITY
        }
    }

    fn gradient_norm(&self, u: &[f64]) -> f64 {
        let h = 1e-5;
        let f0 = self.eval(u);
        let mut g2 = 0.0;
        for i in 0..u.len() {
            let mut up = u.to_vec();
            let mut dn = u.to_vec();
            up[i] += h;
            dn[i] -= h;
            let (fp, fm) = (self.eval(&up), self.eval(&dn));
            let gi = match (fp.is_finite(), fm.is_finite()) {
                (true, true) => (fp - fm) / (2.0 * h),
                (true, false) => (fp - f0) / h,
                (false, true) => (f0 - fm) / h,
                (false, false) => 0.0,
            };
            g2 += gi * gi;
        }
        g2.sqrt()
    }
}

/// Result of a MAP search.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MapEstimate {
    pub theta: Hyperparameters,
    /// Value of the log-space target at `theta`.
    pub log_target: f64,
    pub grad_norm: f64,
    /// `grad_norm <= MAP_GRAD_TOL`; otherwise the best point found under the
    /// evaluation cap.
    pub converged: bool,
    pub evaluations: usize,
}

fn heuristic_start(data: &Dataset, box_widths: &[f64]) -> Vec<f64> {
    let sd = crate::stats::variance(data.values()).sqrt();
    let s = if sd.is_finite() && sd > 0.0 { sd } else { 1.0 };
    let mut u = vec![s.ln()];
    u.extend(box_widths.iter().map(|w| (0.25 * w).ln()));
    u.push((0.1 * s).ln());
    u.iter().map(|v| v.clamp(-LOG_BOUND, LOG_BOUND)).collect()
}

fn prior_draw<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<f64> {
    let mut u = Vec::with_capacity(dim + 2);
    u.push(rng.random_range(-LOG_BOUND..LOG_BOUND));
    for _ in 0..dim {
        // lengthscale prior is a half-Cauchy: l = tan(pi/2 * U)
        let l: f64 = (0.5 * PI * rng.random::<f64>()).tan();
        u.push(l.ln().clamp(-LOG_BOUND, LOG_BOUND));
    }
    u.push(rng.random_range(-LOG_BOUND..LOG_BOUND));
    u
}

fn local_max(target: &LogTarget, start: &[f64]) -> (Vec<f64>, f64, usize) {
    let f = |u: &[f64]| -target.eval(u);
    let settings = neldermead::Settings {
        initial_step: 0.5,
        max_evaluations: 400 * target.n_params(),
        f_tol: 1e-13,
        x_tol: 1e-8,
    };
    let mut best = neldermead::minimize(&f, start, &settings);
    let mut evaluations = best.evaluations;
    // restart the simplex around the incumbent; plain Nelder-Mead can stall
    for _ in 0..3 {
        if target.gradient_norm(&best.x) <= MAP_GRAD_TOL {
            break;
        }
        let again = neldermead::minimize(
            &f,
            &best.x,
            &neldermead::Settings {
                initial_step: 0.05,
                ..settings
            },
        );
        evaluations += again.evaluations;
        if again.value <= best.value {
            best = again;
        }
    }
    (best.x, -best.value, evaluations)
}

/// Best of `restarts` local maximizations of the log-space target.
///
/// The first start uses `l_i = width_i / 4`, `s = sd(y)`, `sigma = s / 10`;
/// later starts are prior draws inside the bounds. `warm_start`, when given,
/// is tried in addition to those.
pub fn map_estimate<R: Rng + ?Sized>(
    data: &Dataset,
    box_widths: &[f64],
    restarts: usize,
    warm_start: Option<&Hyperparameters>,
    rng: &mut R,
) -> Result<MapEstimate> {
    if box_widths.len() != data.dim() {
        return Err(Error::invalid(
            "one box width per input dimension is required",
        ));
    }
    if restarts == 0 {
        return Err(Error::invalid("at least one MAP restart is required"));
    }
    let target = LogTarget::new(data);
    let mut starts = vec![heuristic_start(data, box_widths)];
    for _ in 1..restarts {
        starts.push(prior_draw(data.dim(), rng));
    }
    if let Some(w) = warm_start {
        if w.dim() != data.dim() {
            return Err(Error::invalid("warm start has the wrong dimension"));
        }
        starts.push(
            w.to_log()
                .iter()
                .map(|v| v.clamp(-LOG_BOUND, LOG_BOUND))
                .collect(),
        );
    }

    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut evaluations = 0;
    for start in &starts {
        let (u, val, evals) = local_max(&target, start);
        evaluations += evals;
        if val.is_finite() && best.as_ref().is_none_or(|(_, b)| val > *b) {
            best = Some((u, val));
        }
    }
    let Some((u, log_target)) = best else {
        return Err(Error::Numerical {
            context: "map_estimate: every restart failed".into(),
            jitter: crate::gp::JITTER_MAX,
        });
    };
    let grad_norm = target.gradient_norm(&u);
    Ok(MapEstimate {
        theta: Hyperparameters::from_log(&u)?,
        log_target,
        grad_norm,
        converged: grad_norm <= MAP_GRAD_TOL,
        evaluations,
    })
}

/// Chain settings. Defaults: 90 particles, 10,000 burn-in steps, then 90,000
/// steps recording every 1,000th state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct McmcConfig {
    pub n_particles: usize,
    pub burn_in: usize,
    pub post_burn_steps: usize,
    pub thin: usize,
    pub map_restarts: usize,
    pub seed: u64,
}

impl Default for McmcConfig {
    fn default() -> Self {
        McmcConfig {
            n_particles: 90,
            burn_in: 10_000,
            post_burn_steps: 90_000,
            thin: 1_000,
            map_restarts: 5,
            seed: 0,
        }
    }
}

impl McmcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_particles == 0 {
            return Err(Error::invalid("mcmc.n_particles must be at least 1"));
        }
        if self.thin == 0 {
            return Err(Error::invalid("mcmc.thin must be at least 1"));
        }
        if self.map_restarts == 0 {
            return Err(Error::invalid("mcmc.map_restarts must be at least 1"));
        }
        if self.post_burn_steps / self.thin < self.n_particles {
            return Err(Error::invalid(format!(
                "mcmc.post_burn_steps / mcmc.thin = {} records, fewer than n_particles = {}",
                self.post_burn_steps / self.thin,
                self.n_particles
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McmcDiagnostics {
    /// Acceptance rate over the post-burn-in phase.
    pub acceptance_rate: f64,
    pub burn_in: usize,
    pub chain_length: usize,
    pub thin: usize,
    pub degenerate: bool,
    pub start_log_target: f64,
}

/// Equally weighted hyperparameter samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleSet {
    particles: Vec<Hyperparameters>,
    pub diagnostics: McmcDiagnostics,
}

impl ParticleSet {
    pub fn from_particles(
        particles: Vec<Hyperparameters>,
        diagnostics: McmcDiagnostics,
    ) -> Result<Self> {
        let Some(first) = particles.first() else {
            return Err(Error::invalid("a particle set needs at least one particle"));
        };
        let d = first.dim();
        if particles.iter().any(|p| p.dim() != d) {
            return Err(Error::invalid("particles disagree on dimension"));
        }
        Ok(ParticleSet {
            particles,
            diagnostics,
        })
    }

    pub fn particles(&self) -> &[Hyperparameters] {
        &self.particles
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.particles[0].dim()
    }

    /// Writes one record per line, `s,l1,..,ld,sigma`, after a header line.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let d = self.dim();
        let mut header = vec!["s".to_string()];
        header.extend((1..=d).map(|i| format!("l{i}")));
        header.push("sigma".into());
        writeln!(w, "{}", header.join(","))?;
        for p in &self.particles {
            let rec: Vec<String> = p.to_record().iter().map(|v| v.to_string()).collect();
            writeln!(w, "{}", rec.join(","))?;
        }
        Ok(())
    }

    /// Reads particles written by [`ParticleSet::write_csv`]. Diagnostics are
    /// not part of the file and come back zeroed.
    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut particles = Vec::new();
        for (lineno, line) in r.lines().enumerate() {
            let line = line.map_err(|e| Error::invalid(format!("reading particles: {e}")))?;
            let line = line.trim();
            if lineno == 0 || line.is_empty() {
                continue;
            }
            let rec = line
                .split(',')
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<f64>, _>>()
                .map_err(|e| Error::invalid(format!("line {}: {e}", lineno + 1)))?;
            particles.push(Hyperparameters::from_record(&rec)?);
        }
        Self::from_particles(
            particles,
            McmcDiagnostics {
                acceptance_rate: 0.0,
                burn_in: 0,
                chain_length: 0,
                thin: 0,
                degenerate: false,
                start_log_target: f64::NAN,
            },
        )
    }
}

/// Running mean and covariance (Welford).
struct RunningCov {
    count: f64,
    mean: DVector<f64>,
    m2: DMatrix<f64>,
}

impl RunningCov {
    fn new(p: usize) -> Self {
        RunningCov {
            count: 0.0,
            mean: DVector::zeros(p),
            m2: DMatrix::zeros(p, p),
        }
    }

    fn push(&mut self, x: &DVector<f64>) {
        self.count += 1.0;
        let delta = x - &self.mean;
        self.mean += &delta / self.count;
        let delta2 = x - &self.mean;
        self.m2 += &delta * delta2.transpose();
    }

    fn covariance(&self) -> DMatrix<f64> {
        &self.m2 / (self.count - 1.0).max(1.0)
    }
}

/// Runs the adaptive Metropolis chain from the MAP estimate (found with
/// `cfg.map_restarts` restarts, box widths taken from the data extent).
pub fn sample_particles<R: Rng + ?Sized>(
    data: &Dataset,
    cfg: &McmcConfig,
    rng: &mut R,
) -> Result<ParticleSet> {
    cfg.validate()?;
    let widths: Vec<f64> = (0..data.dim())
        .map(|k| {
            let (lo, hi) = data
                .points()
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                    (lo.min(p.coords()[k]), hi.max(p.coords()[k]))
                });
            if hi > lo {
                hi - lo
            } else {
                1.0
            }
        })
        .collect();
    let map = map_estimate(data, &widths, cfg.map_restarts, None, rng)?;
    sample_particles_from(data, &map.theta, cfg, rng)
}

/// Adaptive random-walk Metropolis in log space starting at `start`.
///
/// During burn-in the Gaussian proposal covariance tracks the running sample
/// covariance, scaled by `2.38^2 / dim` with a `1e-6` ridge; it is frozen
/// afterwards. Every `thin`-th post-burn-in state is recorded and the last
/// `n_particles` records are returned.
pub fn sample_particles_from<R: Rng + ?Sized>(
    data: &Dataset,
    start: &Hyperparameters,
    cfg: &McmcConfig,
    rng: &mut R,
) -> Result<ParticleSet> {
    cfg.validate()?;
    if start.dim() != data.dim() {
        return Err(Error::invalid("start point has the wrong dimension"));
    }
    let target = LogTarget::new(data);
    let p = target.n_params();
    let mut u = DVector::from_vec(
        start
            .to_log()
            .iter()
            .map(|v| v.clamp(-LOG_BOUND, LOG_BOUND))
            .collect(),
    );
    let mut log_t = target.eval(u.as_slice());
    if !log_t.is_finite() {
        return Err(Error::Numerical {
            context: "sample_particles: log target is not finite at the start point".into(),
            jitter: crate::gp::JITTER_MAX,
        });
    }
    let start_log_target = log_t;

    let mut prop_l = DMatrix::from_diagonal_element(p, p, AM_INITIAL_SD);
    let adapt_from = (10 * p).max(100);
    let mut running = RunningCov::new(p);

    let step =
        |u: &mut DVector<f64>, log_t: &mut f64, prop_l: &DMatrix<f64>, rng: &mut R| -> bool {
            let z = DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal));
            let cand = &*u + prop_l * z;
            let cand_t = target.eval(cand.as_slice());
            let log_a = cand_t - *log_t;
            if cand_t.is_finite() && (log_a >= 0.0 || rng.random::<f64>().ln() < log_a) {
                *u = cand;
                *log_t = cand_t;
                true
            } else {
                false
            }
        };

    for t in 0..cfg.burn_in {
        step(&mut u, &mut log_t, &prop_l, rng);
        running.push(&u);
        if t + 1 >= adapt_from {
            let mut c = running.covariance();
            for i in 0..p {
                c[(i, i)] += AM_EPSILON;
            }
            c *= AM_SCALE / p as f64;
            if let Some(ch) = nalgebra::Cholesky::new(c) {
                prop_l = ch.l();
            }
        }
    }

    let mut recorded = Vec::with_capacity(cfg.post_burn_steps / cfg.thin);
    let mut accepted = 0usize;
    for k in 1..=cfg.post_burn_steps {
        if step(&mut u, &mut log_t, &prop_l, rng) {
            accepted += 1;
        }
        if k % cfg.thin == 0 {
            recorded.push(Hyperparameters::from_log(u.as_slice())?);
        }
    }
    let acceptance_rate = if cfg.post_burn_steps > 0 {
        accepted as f64 / cfg.post_burn_steps as f64
    } else {
        0.0
    };
    let degenerate = acceptance_rate < DEGENERATE_ACCEPTANCE;
    if degenerate {
        warn!("MCMC acceptance rate {acceptance_rate:.4} after burn-in; particle set may be degenerate");
    }
    let particles = recorded.split_off(recorded.len() - cfg.n_particles);
    ParticleSet::from_particles(
        particles,
        McmcDiagnostics {
            acceptance_rate,
            burn_in: cfg.burn_in,
            chain_length: cfg.burn_in + cfg.post_burn_steps,
            thin: cfg.thin,
            degenerate,
            start_log_target,
        },
    )
}
