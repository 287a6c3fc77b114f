//! Squared-exponential Gaussian-process regression with a zero prior mean.

use log::warn;
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, DesignPoint};
use crate::error::{Error, Result};

/// First diagonal jitter tried, relative to the signal variance.
pub const JITTER_START: f64 = 1e-10;
/// Largest relative jitter before a factorization is declared failed.
pub const JITTER_MAX: f64 = 1e-4;
/// Predicted variances below `-NEGATIVE_VARIANCE_TOL * s^2` are reported.
pub const NEGATIVE_VARIANCE_TOL: f64 = 1e-8;

/// Kernel and noise hyperparameters: signal strength `s`, one lengthscale per
/// input dimension, and the observation noise standard deviation `sigma`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    signal: f64,
    lengthscales: Vec<f64>,
    noise: f64,
}

impl Hyperparameters {
    pub fn new(signal: f64, lengthscales: Vec<f64>, noise: f64) -> Result<Self> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if lengthscales.is_empty() {
            return Err(Error::invalid("at least one lengthscale is required"));
        }
        if !ok(signal) || !ok(noise) || !lengthscales.iter().all(|&l| ok(l)) {
            return Err(Error::invalid(format!(
                "hyperparameters must be finite and positive (s={signal}, l={lengthscales:?}, sigma={noise})"
            )));
        }
        Ok(Hyperparameters {
            signal,
            lengthscales,
            noise,
        })
    }

    pub fn signal(&self) -> f64 {
        self.signal
    }

    pub fn lengthscales(&self) -> &[f64] {
        &self.lengthscales
    }

    pub fn noise(&self) -> f64 {
        self.noise
    }

    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }

    /// Packs `(log s, log l_1, .., log l_d, log sigma)`.
    pub fn to_log(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.dim() + 2);
        v.push(self.signal.ln());
        v.extend(self.lengthscales.iter().map(|l| l.ln()));
        v.push(self.noise.ln());
        v
    }

    pub fn from_log(u: &[f64]) -> Result<Self> {
        if u.len() < 3 {
            return Err(Error::invalid(
                "log vector needs s, at least one lengthscale and sigma",
            ));
        }
        let n = u.len();
        Self::new(
            u[0].exp(),
            u[1..n - 1].iter().map(|v| v.exp()).collect(),
            u[n - 1].exp(),
        )
    }

    /// Flat record `(s, l_1, .., l_d, sigma)`.
    pub fn to_record(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.dim() + 2);
        v.push(self.signal);
        v.extend_from_slice(&self.lengthscales);
        v.push(self.noise);
        v
    }

    pub fn from_record(r: &[f64]) -> Result<Self> {
        if r.len() < 3 {
            return Err(Error::invalid(
                "record needs s, at least one lengthscale and sigma",
            ));
        }
        Self::new(r[0], r[1..r.len() - 1].to_vec(), r[r.len() - 1])
    }

    fn check_dim(&self, d: usize) -> Result<()> {
        if d != self.dim() {
            return Err(Error::invalid(format!(
                "point dimension {d} does not match {} lengthscales",
                self.dim()
            )));
        }
        Ok(())
    }

    #[inline]
    fn kernel_unchecked(&self, a: &[f64], b: &[f64]) -> f64 {
        let r2: f64 = a
            .iter()
            .zip(b)
            .zip(&self.lengthscales)
            .map(|((x, y), l)| {
                let t = (x - y) / l;
                t * t
            })
            .sum();
        self.signal * self.signal * (-0.5 * r2).exp()
    }
}

/// `s^2 exp(-1/2 sum_i (x_i - x2_i)^2 / l_i^2)`.
pub fn se_cov(x: &DesignPoint, x2: &DesignPoint, psi: &Hyperparameters) -> Result<f64> {
    psi.check_dim(x.dim())?;
    psi.check_dim(x2.dim())?;
    Ok(psi.kernel_unchecked(x.coords(), x2.coords()))
}

/// Dense covariance matrix `K_ij = k(x_i, x_j)`.
pub fn cov_matrix(points: &[DesignPoint], psi: &Hyperparameters) -> Result<DMatrix<f64>> {
    for p in points {
        psi.check_dim(p.dim())?;
    }
    let n = points.len();
    let s2 = psi.signal * psi.signal;
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = s2;
        for j in 0..i {
            let v = psi.kernel_unchecked(points[i].coords(), points[j].coords());
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    Ok(k)
}

fn cross_cov(points: &[DesignPoint], xs: &[DesignPoint], psi: &Hyperparameters) -> DMatrix<f64> {
    DMatrix::from_fn(points.len(), xs.len(), |i, j| {
        psi.kernel_unchecked(points[i].coords(), xs[j].coords())
    })
}

/// Cholesky factorization of `m + eta * scale * I`, with `eta` escalating by
/// factors of ten from [`JITTER_START`] to [`JITTER_MAX`]. Returns the factor
/// and the relative jitter that succeeded.
pub(crate) fn jittered_cholesky(
    m: &DMatrix<f64>,
    scale: f64,
    context: &str,
) -> Result<(Cholesky<f64, Dyn>, f64)> {
    let mut eta = JITTER_START;
    loop {
        let mut a = m.clone();
        for i in 0..a.nrows() {
            a[(i, i)] += eta * scale;
        }
        if let Some(ch) = Cholesky::new(a) {
            return Ok((ch, eta));
        }
        if eta >= JITTER_MAX * (1.0 - 1e-9) {
            return Err(Error::Numerical {
                context: context.to_string(),
                jitter: eta,
            });
        }
        eta *= 10.0;
    }
}

/// The posterior process conditioned on a dataset and fixed hyperparameters.
/// Immutable once built.
#[derive(Debug, Clone)]
pub struct PosteriorGp {
    data: Dataset,
    theta: Hyperparameters,
    chol: Option<Cholesky<f64, Dyn>>,
    alpha: DVector<f64>,
    jitter: f64,
}

/// Fits the posterior: factorizes `K_n + sigma^2 I` (plus jitter) and solves
/// for the weights `alpha = (K_n + sigma^2 I)^{-1} y`. An empty dataset
/// yields the prior process.
pub fn gp_fit(data: &Dataset, theta: &Hyperparameters) -> Result<PosteriorGp> {
    theta.check_dim(data.dim())?;
    if data.is_empty() {
        return Ok(PosteriorGp {
            data: data.clone(),
            theta: theta.clone(),
            chol: None,
            alpha: DVector::zeros(0),
            jitter: 0.0,
        });
    }
    let mut k = cov_matrix(data.points(), theta)?;
    let s2 = theta.signal * theta.signal;
    let noise2 = theta.noise * theta.noise;
    for i in 0..k.nrows() {
        k[(i, i)] += noise2;
    }
    let (chol, jitter) = jittered_cholesky(&k, s2, "gp_fit")?;
    let alpha = chol.solve(&DVector::from_column_slice(data.values()));
    Ok(PosteriorGp {
        data: data.clone(),
        theta: theta.clone(),
        chol: Some(chol),
        alpha,
        jitter,
    })
}

impl PosteriorGp {
    pub fn data(&self) -> &Dataset {
        &self.data
    }

    pub fn theta(&self) -> &Hyperparameters {
        &self.theta
    }

    /// Relative diagonal jitter used by the factorization (zero for the prior).
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn alpha(&self) -> &DVector<f64> {
        &self.alpha
    }

    /// Lower-triangular factor `L` with `L L^T = K_n + (sigma^2 + jitter s^2) I`.
    pub fn chol_factor(&self) -> DMatrix<f64> {
        match &self.chol {
            Some(c) => c.l(),
            None => DMatrix::zeros(0, 0),
        }
    }

    fn assert_dim(&self, x: &DesignPoint) {
        assert_eq!(
            x.dim(),
            self.theta.dim(),
            "query point dimension does not match the fitted process"
        );
    }

    fn k_vec(&self, x: &DesignPoint) -> DVector<f64> {
        DVector::from_iterator(
            self.data.len(),
            self.data
                .points()
                .iter()
                .map(|p| self.theta.kernel_unchecked(p.coords(), x.coords())),
        )
    }

    /// Posterior mean `k_n(x)^T alpha`.
    pub fn posterior_mean(&self, x: &DesignPoint) -> f64 {
        self.assert_dim(x);
        if self.data.is_empty() {
            return 0.0;
        }
        self.k_vec(x).dot(&self.alpha)
    }

    /// Posterior covariance `k(x, x2) - k_n(x)^T (K_n + sigma^2 I)^{-1} k_n(x2)`.
    pub fn posterior_cov(&self, x: &DesignPoint, x2: &DesignPoint) -> f64 {
        self.assert_dim(x);
        self.assert_dim(x2);
        let prior = self.theta.kernel_unchecked(x.coords(), x2.coords());
        let Some(chol) = &self.chol else {
            return prior;
        };
        let l = chol.l_dirty();
        let v1 = l
            .solve_lower_triangular(&self.k_vec(x))
            .expect("nonsingular factor");
        let v2 = l
            .solve_lower_triangular(&self.k_vec(x2))
            .expect("nonsingular factor");
        prior - v1.dot(&v2)
    }

    /// Mean and (clamped, nonnegative) variance of the point predictive.
    pub fn point_predict(&self, x: &DesignPoint) -> (f64, f64) {
        let mean = self.posterior_mean(x);
        let var = self.clamp_variance(self.posterior_cov(x, x));
        (mean, var)
    }

    fn clamp_variance(&self, var: f64) -> f64 {
        if var < 0.0 {
            let s2 = self.theta.signal * self.theta.signal;
            if var < -NEGATIVE_VARIANCE_TOL * s2 {
                warn!("clamping negative predictive variance {var:e} to zero");
            }
            0.0
        } else {
            var
        }
    }

    /// Point predictions for many inputs at once.
    pub fn predict_batch(&self, xs: &[DesignPoint]) -> (Vec<f64>, Vec<f64>) {
        xs.iter().for_each(|x| self.assert_dim(x));
        let s2 = self.theta.signal * self.theta.signal;
        let Some(chol) = &self.chol else {
            return (vec![0.0; xs.len()], vec![s2; xs.len()]);
        };
        let kx = cross_cov(self.data.points(), xs, &self.theta);
        let means = kx.tr_mul(&self.alpha);
        let v = chol
            .l_dirty()
            .solve_lower_triangular(&kx)
            .expect("nonsingular factor");
        let vars = (0..xs.len())
            .map(|j| self.clamp_variance(s2 - v.column(j).norm_squared()))
            .collect();
        (means.iter().copied().collect(), vars)
    }

    /// Joint posterior covariance on `grid`.
    pub fn posterior_cov_matrix(&self, grid: &[DesignPoint]) -> DMatrix<f64> {
        grid.iter().for_each(|x| self.assert_dim(x));
        let mut c = cov_matrix(grid, &self.theta).expect("dimensions checked");
        if let Some(chol) = &self.chol {
            let kx = cross_cov(self.data.points(), grid, &self.theta);
            let v = chol
                .l_dirty()
                .solve_lower_triangular(&kx)
                .expect("nonsingular factor");
            c.gemm_tr(-1.0, &v, &v, 1.0);
            // restore exact symmetry lost to rounding
            let g = c.nrows();
            for i in 0..g {
                for j in 0..i {
                    let avg = 0.5 * (c[(i, j)] + c[(j, i)]);
                    c[(i, j)] = avg;
                    c[(j, i)] = avg;
                }
            }
        }
        c
    }

    /// Draws `m` joint samples of `f(grid)` from the posterior process.
    pub fn sample_functions<R: Rng + ?Sized>(
        &self,
        grid: &[DesignPoint],
        m: usize,
        rng: &mut R,
    ) -> Result<Vec<Vec<f64>>> {
        if grid.is_empty() {
            return Err(Error::invalid("sampling grid is empty"));
        }
        if m == 0 {
            return Err(Error::invalid(
                "number of function samples must be at least one",
            ));
        }
        if let Some(bad) = grid.iter().find(|x| x.dim() != self.theta.dim()) {
            return Err(Error::invalid(format!(
                "grid point of dimension {} for a {}-dimensional process",
                bad.dim(),
                self.theta.dim()
            )));
        }
        let (means, _) = self.predict_batch(grid);
        let cov = self.posterior_cov_matrix(grid);
        let s2 = self.theta.signal * self.theta.signal;
        let (chol, _) = jittered_cholesky(&cov, s2, "sample_functions")?;
        let g = grid.len();
        let z = DMatrix::from_fn(g, m, |_, _| rng.sample::<f64, _>(StandardNormal));
        let l = chol.l();
        let draws = l * z;
        Ok((0..m)
            .map(|j| {
                draws
                    .column(j)
                    .iter()
                    .zip(&means)
                    .map(|(d, mu)| mu + d)
                    .collect()
            })
            .collect())
    }
}
