//! Bayesian global optimization of expensive, noisy objectives.
//!
//! The surrogate is a squared-exponential Gaussian process whose
//! hyperparameters are marginalized with an adaptive Metropolis particle
//! approximation. New evaluations are chosen by the extended expected
//! improvement, which measures improvement over the noise-filtered incumbent
//! and averages over the particles. The same particles give predictive
//! distributions for the location and value of the optimum.
//!
//! ```no_run
//! use bgo_core::benchmarks::{Benchmark, BenchmarkObjective, NoiseModel};
//! use bgo_core::design::lhs;
//! use bgo_core::optimizer::{run, BgoConfig, StochasticObjective};
//! use bgo_core::rng::seeded;
//! use bgo_core::data::Dataset;
//!
//! let bounds = Benchmark::Synth1d.bounds();
//! let mut objective = BenchmarkObjective { benchmark: Benchmark::Synth1d, noise: NoiseModel::Constant(0.1) };
//! let mut rng = seeded(1);
//! let xs = lhs(5, &bounds, &mut rng).unwrap();
//! let ys = xs.iter().map(|x| objective.evaluate(x, &mut rng).unwrap()).collect();
//! let trace = run(&mut objective, Dataset::new(xs, ys).unwrap(), &bounds, &BgoConfig::default()).unwrap();
//! println!("{:?}", trace.recommendation.unwrap().pboo);
//! ```

pub mod acquisition;
pub mod benchmarks;
pub mod data;
pub mod design;
pub mod error;
pub mod gp;
pub mod hyper;
mod neldermead;
pub mod optimizer;
pub mod rng;
pub mod stats;
pub mod uq;

pub use data::{Dataset, DesignPoint};
pub use design::BoxBounds;
pub use error::{Error, Result};
pub use gp::{gp_fit, Hyperparameters, PosteriorGp};
pub use hyper::{McmcConfig, ParticleSet};
pub use optimizer::{BgoConfig, RunTrace, StochasticObjective, TerminalStatus};
