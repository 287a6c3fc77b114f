//! Synthetic stochastic test objectives with known optima.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::DesignPoint;
use crate::design::BoxBounds;
use crate::error::{Error, Result};
use crate::optimizer::StochasticObjective;

/// Pinned minimizers of the one-dimensional benchmark (10 significant digits).
pub const SYNTH1D_MINIMIZERS: [f64; 2] = [0.2561456808, 0.9486192234];
pub const SYNTH1D_MIN_VALUE: f64 = 0.0;
/// Pinned global minimizer and value of the two-dimensional benchmark.
pub const SYNTH2D_MINIMIZER: [f64; 2] = [2.317235996, 2.771323312];
pub const SYNTH2D_MIN_VALUE: f64 = -1.726339764;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Benchmark {
    Synth1d,
    Synth2d,
}

impl Benchmark {
    pub fn id(self) -> &'static str {
        match self {
            Benchmark::Synth1d => "synth1d",
            Benchmark::Synth2d => "synth2d",
        }
    }

    pub fn dim(self) -> usize {
        match self {
            Benchmark::Synth1d => 1,
            Benchmark::Synth2d => 2,
        }
    }

    pub fn bounds(self) -> BoxBounds {
        match self {
            Benchmark::Synth1d => BoxBounds::unit(1),
            Benchmark::Synth2d => {
                BoxBounds::new(vec![0.0, 0.0], vec![5.0, 5.0]).expect("valid box")
            }
        }
    }
}

impl FromStr for Benchmark {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "synth1d" => Ok(Benchmark::Synth1d),
            "synth2d" => Ok(Benchmark::Synth2d),
            other => Err(Error::invalid(format!(
                "unknown benchmark `{other}` (expected synth1d or synth2d)"
            ))),
        }
    }
}

impl fmt::Display for Benchmark {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

/// Standard deviation of the additive Gaussian noise, `s(x)`.
///
/// Text form: a bare number or `constant:<s>`, `hetero1d`, `hetero2d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NoiseText", into = "String")]
pub enum NoiseModel {
    Constant(f64),
    /// `((x - 3) / 3)^2`
    Hetero1d,
    /// `((x2 - x1) / 3)^2`
    Hetero2d,
}

impl NoiseModel {
    pub fn std_dev(&self, x: &[f64]) -> Result<f64> {
        match *self {
            NoiseModel::Constant(s) => Ok(s),
            NoiseModel::Hetero1d => {
                if x.len() != 1 {
                    return Err(Error::invalid(
                        "hetero1d noise needs a one-dimensional input",
                    ));
                }
                Ok(((x[0] - 3.0) / 3.0).powi(2))
            }
            NoiseModel::Hetero2d => {
                if x.len() != 2 {
                    return Err(Error::invalid(
                        "hetero2d noise needs a two-dimensional input",
                    ));
                }
                Ok(((x[1] - x[0]) / 3.0).powi(2))
            }
        }
    }
}

impl FromStr for NoiseModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        let model = match t {
            "hetero1d" => NoiseModel::Hetero1d,
            "hetero2d" => NoiseModel::Hetero2d,
            _ => {
                let num = t.strip_prefix("constant:").unwrap_or(t);
                let v: f64 = num
                    .trim()
                    .parse()
                    .map_err(|_| Error::invalid(format!("unrecognized noise model `{s}`")))?;
                if !(v.is_finite() && v >= 0.0) {
                    return Err(Error::invalid(format!(
                        "noise level must be finite and >= 0, got {v}"
                    )));
                }
                NoiseModel::Constant(v)
            }
        };
        Ok(model)
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum NoiseText {
    Level(f64),
    Text(String),
}

impl TryFrom<NoiseText> for NoiseModel {
    type Error = Error;

    fn try_from(t: NoiseText) -> Result<Self> {
        match t {
            NoiseText::Level(v) => format!("{v}").parse(),
            NoiseText::Text(s) => s.parse(),
        }
    }
}

impl TryFrom<String> for NoiseModel {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<NoiseModel> for String {
    fn from(n: NoiseModel) -> String {
        n.to_string()
    }
}

impl fmt::Display for NoiseModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NoiseModel::Constant(s) => write!(f, "constant:{s}"),
            NoiseModel::Hetero1d => f.write_str("hetero1d"),
            NoiseModel::Hetero2d => f.write_str("hetero2d"),
        }
    }
}

fn synth1d_mean(x: f64) -> f64 {
    4.0 * (1.0 - (6.0 * x + 8.0 * (6.0 * x - 7.0).exp()).sin())
}

fn synth2d_mean(x1: f64, x2: f64) -> f64 {
    2.0 + (x2 - x1 * x1).powi(2) / 100.0
        + (1.0 - x1).powi(2)
        + 2.0 * (2.0 - x2).powi(2)
        + 7.0 * (0.5 * x2).sin() * (0.7 * x1 * x2).sin()
}

fn check_in_box(b: Benchmark, x: &[f64]) -> Result<()> {
    let bounds = b.bounds();
    if x.len() != b.dim() {
        return Err(Error::invalid(format!(
            "{b} takes {} coordinates, got {}",
            b.dim(),
            x.len()
        )));
    }
    for (i, c) in x.iter().enumerate() {
        if !(bounds.lower()[i]..=bounds.upper()[i]).contains(c) {
            return Err(Error::invalid(format!(
                "{b}: coordinate {i} = {c} is outside the box"
            )));
        }
    }
    Ok(())
}

/// Noiseless expected objective.
pub fn true_mean(b: Benchmark, x: &[f64]) -> Result<f64> {
    check_in_box(b, x)?;
    Ok(match b {
        Benchmark::Synth1d => synth1d_mean(x[0]),
        Benchmark::Synth2d => synth2d_mean(x[0], x[1]),
    })
}

/// `4(1 - sin(6x + 8 exp(6x - 7))) + s(x) xi` on `[0, 1]`.
pub fn synth1d<R: Rng + ?Sized>(x: f64, noise: NoiseModel, rng: &mut R) -> Result<f64> {
    let mean = true_mean(Benchmark::Synth1d, &[x])?;
    let s = noise.std_dev(&[x])?;
    let xi: f64 = rng.sample(StandardNormal);
    Ok(mean + s * xi)
}

/// Two-dimensional test function on `[0, 5]^2` with three local minima.
pub fn synth2d<R: Rng + ?Sized>(x: &DesignPoint, noise: NoiseModel, rng: &mut R) -> Result<f64> {
    let mean = true_mean(Benchmark::Synth2d, x.coords())?;
    let s = noise.std_dev(x.coords())?;
    let xi: f64 = rng.sample(StandardNormal);
    Ok(mean + s * xi)
}

/// A benchmark paired with a noise model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchmarkObjective {
    pub benchmark: Benchmark,
    pub noise: NoiseModel,
}

impl StochasticObjective for BenchmarkObjective {
    fn evaluate(&mut self, x: &DesignPoint, rng: &mut dyn rand::RngCore) -> Result<f64> {
        match self.benchmark {
            Benchmark::Synth1d => {
                if x.dim() != 1 {
                    return Err(Error::invalid("synth1d takes one coordinate"));
                }
                synth1d(x.coords()[0], self.noise, rng)
            }
            Benchmark::Synth2d => synth2d(x, self.noise, rng),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleOptimum {
    pub minimizers: Vec<DesignPoint>,
    pub value: f64,
}

fn bisect(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    // f(lo) < 0 < f(hi)
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn golden_section(mut a: f64, mut b: f64, f: impl Fn(f64) -> f64) -> f64 {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > 1e-13 {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

fn oracle_1d() -> OracleOptimum {
    let n = 1_000_000;
    let h = 1.0 / (n - 1) as f64;
    let vals: Vec<f64> = (0..n).map(|i| synth1d_mean(i as f64 * h)).collect();
    // the phase 6x + 8e^{6x-7} increases monotonically, so each interior
    // grid minimum brackets a root of phase(x) = pi/2 + 2 pi k
    let phase = |x: f64| 6.0 * x + 8.0 * (6.0 * x - 7.0).exp();
    let mut candidates = Vec::new();
    for i in 1..n - 1 {
        if vals[i] <= vals[i - 1] && vals[i] <= vals[i + 1] {
            let (lo, hi) = ((i - 1) as f64 * h, (i + 1) as f64 * h);
            let p = phase(i as f64 * h);
            let k = ((p - PI / 2.0) / (2.0 * PI)).round();
            let target = PI / 2.0 + 2.0 * PI * k;
            let x = bisect(lo, hi, |x| phase(x) - target);
            candidates.push((x, synth1d_mean(x)));
        }
    }
    collect_global(candidates.into_iter().map(|(x, v)| (vec![x], v)).collect())
}

fn oracle_2d() -> OracleOptimum {
    let n = 1001;
    let h = 5.0 / (n - 1) as f64;
    let at = |i: usize, j: usize| synth2d_mean(i as f64 * h, j as f64 * h);
    let mut candidates = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let v = at(i, j);
            let mut is_min = true;
            for di in -1i64..=1 {
                for dj in -1i64..=1 {
                    let (a, b) = (i as i64 + di, j as i64 + dj);
                    if (di, dj) != (0, 0)
                        && (0..n as i64).contains(&a)
                        && (0..n as i64).contains(&b)
                        && at(a as usize, b as usize) < v
                    {
                        is_min = false;
                    }
                }
            }
            if is_min {
                candidates.push(refine_2d(i as f64 * h, j as f64 * h, h));
            }
        }
    }
    collect_global(candidates)
}

/// Cyclic golden-section coordinate descent inside the box, starting from a
/// grid minimum.
fn refine_2d(x1: f64, x2: f64, h: f64) -> (Vec<f64>, f64) {
    let mut x = [x1, x2];
    let mut v = synth2d_mean(x[0], x[1]);
    for _ in 0..200 {
        let prev = x;
        for k in 0..2 {
            let lo = (x[k] - 2.0 * h).max(0.0);
            let hi = (x[k] + 2.0 * h).min(5.0);
            let other = x[1 - k];
            let f = |t: f64| {
                if k == 0 {
                    synth2d_mean(t, other)
                } else {
                    synth2d_mean(other, t)
                }
            };
            let t = golden_section(lo, hi, f);
            let ft = f(t);
            if ft < v {
                x[k] = t;
                v = ft;
            }
        }
        if (x[0] - prev[0]).abs() < 1e-14 && (x[1] - prev[1]).abs() < 1e-14 {
            break;
        }
    }
    (x.to_vec(), v)
}

fn collect_global(candidates: Vec<(Vec<f64>, f64)>) -> OracleOptimum {
    let best = candidates.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
    let mut minimizers: Vec<Vec<f64>> = Vec::new();
    for (x, v) in candidates {
        if v <= best + 1e-6 {
            let dup = minimizers.iter().any(|m| {
                m.iter()
                    .zip(&x)
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
                    .sqrt()
                    < 1e-4
            });
            if !dup {
                minimizers.push(x);
            }
        }
    }
    OracleOptimum {
        minimizers: minimizers
            .into_iter()
            .map(|x| DesignPoint::new(x).expect("finite"))
            .collect(),
        value: best,
    }
}

/// Dense-grid plus local-refinement minimization of the noiseless objective.
/// Returns every global minimizer within `1e-6` of the best value.
pub fn oracle_optimum(b: Benchmark) -> OracleOptimum {
    match b {
        Benchmark::Synth1d => oracle_1d(),
        Benchmark::Synth2d => oracle_2d(),
    }
}

/// The pinned optimum values, for consumers that should not pay for the scan.
pub fn pinned_optimum(b: Benchmark) -> OracleOptimum {
    match b {
        Benchmark::Synth1d => OracleOptimum {
            minimizers: SYNTH1D_MINIMIZERS
                .iter()
                .map(|&x| DesignPoint::from(x))
                .collect(),
            value: SYNTH1D_MIN_VALUE,
        },
        Benchmark::Synth2d => OracleOptimum {
            minimizers: vec![DesignPoint::new(SYNTH2D_MINIMIZER.to_vec()).expect("finite")],
            value: SYNTH2D_MIN_VALUE,
        },
    }
}
