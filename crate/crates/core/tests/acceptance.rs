//! Acceptance suite. Every criterion prints one `PASS`/`FAIL` line to the
//! real stdout (bypassing libtest capture) and then asserts.
//!
//! The optimizer reproductions run with a reduced sampler budget: 2,000
//! burn-in steps, 50 particles recorded every 20 steps, 2 MAP restarts.

use std::io::Write;

use bgo_core::acquisition::{eei, ei_closed_form};
use bgo_core::benchmarks::{pinned_optimum, Benchmark, BenchmarkObjective, NoiseModel};
use bgo_core::design::lhs;
use bgo_core::gp::cov_matrix;
use bgo_core::hyper::{sample_particles, sample_particles_from, LOG_BOUND};
use bgo_core::optimizer::{run, RunTrace};
use bgo_core::rng::{seeded, stream_rng, Stream};
use bgo_core::stats::{mean, quantile_sorted, variance};
use bgo_core::{
    gp_fit, BgoConfig, BoxBounds, Dataset, DesignPoint, Hyperparameters, McmcConfig, TerminalStatus,
};
use nalgebra::SymmetricEigen;
use rand::Rng;
use rand_distr::StandardNormal;

fn report(criterion: u32, name: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "criterion {criterion} [{name}]: {verdict} ({detail})");
    let _ = out.flush();
}

// ---------------------------------------------------------------- 1

#[test]
fn criterion_1_ei_matches_monte_carlo() {
    let mut rng = seeded(101);
    let draws = 1_000_000;
    let mut worst = 0.0f64;
    let mut failures = 0;
    for _ in 0..50 {
        let incumbent: f64 = rng.random_range(-2.0..2.0);
        let m: f64 = rng.random_range(-2.0..2.0);
        let sd: f64 = rng.random_range(0.01..3.0);
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..draws {
            let z: f64 = rng.sample(StandardNormal);
            let imp = (incumbent - (m + sd * z)).max(0.0);
            s += imp;
            s2 += imp * imp;
        }
        let n = draws as f64;
        let mc = s / n;
        let se = ((s2 / n - mc * mc).max(0.0) / n).sqrt();
        let cf = ei_closed_form(incumbent, m, sd);
        let dev = (cf - mc).abs();
        // a sample of all zeros has zero standard error
        let ok = dev <= 4.0 * se + 1e-12;
        if !ok {
            failures += 1;
        }
        if se > 0.0 {
            worst = worst.max(dev / se);
        }
    }
    let pass = failures == 0;
    report(
        1,
        "EI vs Monte Carlo",
        pass,
        &format!("{failures}/50 outside 4 SE, worst {worst:.2} SE"),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 2

fn random_theta<R: Rng>(rng: &mut R, d: usize) -> Hyperparameters {
    Hyperparameters::new(
        rng.random_range(0.1..5.0),
        (0..d).map(|_| rng.random_range(0.05..2.0)).collect(),
        rng.random_range(1e-3..1.0),
    )
    .unwrap()
}

#[test]
fn criterion_2_gp_correctness() {
    let mut rng = seeded(202);

    // interpolation of a smooth function with the noise at jitter level
    let mut interp_err = 0.0f64;
    for d in 1..=3 {
        let bounds = BoxBounds::unit(d);
        let xs = lhs(12, &bounds, &mut rng).unwrap();
        let ys: Vec<f64> = xs
            .iter()
            .map(|x| {
                x.coords()
                    .iter()
                    .enumerate()
                    .map(|(k, v)| ((3.0 + k as f64) * v).sin())
                    .sum()
            })
            .collect();
        let data = Dataset::new(xs.clone(), ys.clone()).unwrap();
        let s = 1.5;
        let theta = Hyperparameters::new(s, vec![0.2; d], 1e-5 * s).unwrap();
        let fit = gp_fit(&data, &theta).unwrap();
        for (x, y) in xs.iter().zip(&ys) {
            interp_err = interp_err.max((fit.posterior_mean(x) - y).abs());
        }
    }
    let interp_ok = interp_err <= 1e-4;

    // positive semidefinite covariance matrices
    let mut min_ratio = f64::INFINITY;
    for _ in 0..100 {
        let d = rng.random_range(1..=3);
        let n = rng.random_range(2..=40);
        let theta = random_theta(&mut rng, d);
        let pts = lhs(n, &BoxBounds::unit(d), &mut rng).unwrap();
        let k = cov_matrix(&pts, &theta).unwrap();
        let eig = SymmetricEigen::new(k).eigenvalues.min();
        min_ratio = min_ratio.min(eig / (theta.signal() * theta.signal()));
    }
    let psd_ok = min_ratio >= -1e-10;

    // sample moments against the posterior
    let xs: Vec<DesignPoint> = [0.1, 0.35, 0.6, 0.9]
        .iter()
        .map(|&v| DesignPoint::from(v))
        .collect();
    let data = Dataset::new(xs, vec![0.5, -0.3, 1.2, 0.1]).unwrap();
    let theta = Hyperparameters::new(1.0, vec![0.25], 0.1).unwrap();
    let fit = gp_fit(&data, &theta).unwrap();
    let grid: Vec<DesignPoint> = [0.0, 0.2, 0.5, 0.75, 1.0]
        .iter()
        .map(|&v| DesignPoint::from(v))
        .collect();
    let m = 10_000;
    let samples = fit.sample_functions(&grid, m, &mut rng).unwrap();
    let (means, vars) = fit.predict_batch(&grid);
    let mut moment_worst = 0.0f64;
    for j in 0..grid.len() {
        let col: Vec<f64> = samples.iter().map(|f| f[j]).collect();
        let se_mean = (vars[j] / m as f64).sqrt();
        let se_var = vars[j] * (2.0 / (m as f64 - 1.0)).sqrt();
        moment_worst = moment_worst
            .max((mean(&col) - means[j]).abs() / se_mean)
            .max((variance(&col) - vars[j]).abs() / se_var);
    }
    let moments_ok = moment_worst <= 3.0;

    let pass = interp_ok && psd_ok && moments_ok;
    report(
        2,
        "GP correctness",
        pass,
        &format!(
            "interpolation error {interp_err:.2e}, min eigenvalue / s^2 {min_ratio:.2e}, worst moment {moment_worst:.2} SE"
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 3

fn ks_distance(samples: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    samples
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max((f - (i + 1) as f64 / n).abs())
        })
        .fold(0.0, f64::max)
}

#[test]
fn criterion_3_mcmc_validity() {
    // prior only: s and sigma are uniform in log space, l follows 1/(1+l^2)
    let cfg = McmcConfig {
        n_particles: 500,
        burn_in: 5_000,
        post_burn_steps: 100_000,
        thin: 200,
        map_restarts: 1,
        seed: 0,
    };
    let start = Hyperparameters::new(1.0, vec![1.0], 1.0).unwrap();
    let ps = sample_particles_from(&Dataset::empty(1), &start, &cfg, &mut seeded(303)).unwrap();
    let b = LOG_BOUND;
    let uniform = |u: f64| ((u + b) / (2.0 * b)).clamp(0.0, 1.0);
    let (lo, hi) = ((-b).exp().atan(), b.exp().atan());
    let loglogistic = |u: f64| ((u.exp().atan() - lo) / (hi - lo)).clamp(0.0, 1.0);
    let mut ks = [0.0f64; 3];
    for (k, ks_k) in ks.iter_mut().enumerate() {
        let mut col: Vec<f64> = ps.particles().iter().map(|t| t.to_log()[k]).collect();
        *ks_k = if k == 1 {
            ks_distance(&mut col, loglogistic)
        } else {
            ks_distance(&mut col, uniform)
        };
    }
    let prior_ok = ks.iter().all(|&d| d <= 0.1);

    // synthetic GP data with known noise
    let mut rng = seeded(304);
    let truth = Hyperparameters::new(1.0, vec![0.2], 0.5).unwrap();
    let xs = lhs(50, &BoxBounds::unit(1), &mut rng).unwrap();
    let prior = gp_fit(&Dataset::empty(1), &truth).unwrap();
    let f = prior.sample_functions(&xs, 1, &mut rng).unwrap().remove(0);
    let ys: Vec<f64> = f
        .iter()
        .map(|v| v + truth.noise() * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let data = Dataset::new(xs, ys).unwrap();
    let post = sample_particles(&data, &McmcConfig::default(), &mut rng).unwrap();
    let mut sig: Vec<f64> = post.particles().iter().map(|t| t.noise()).collect();
    sig.sort_by(f64::total_cmp);
    let med = quantile_sorted(&sig, 0.5);
    let recovery_ok = (0.25..=1.0).contains(&med);

    let pass = prior_ok && recovery_ok;
    report(
        3,
        "MCMC validity",
        pass,
        &format!(
            "prior KS (s, l, sigma) = ({:.3}, {:.3}, {:.3}), posterior median sigma {med:.3} for truth 0.5",
            ks[0], ks[1], ks[2]
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 4 to 6

fn scaled_mcmc() -> McmcConfig {
    McmcConfig {
        n_particles: 50,
        burn_in: 2_000,
        post_burn_steps: 1_000,
        thin: 20,
        map_restarts: 2,
        seed: 0,
    }
}

fn reproduction_run(
    benchmark: Benchmark,
    noise: NoiseModel,
    n_init: usize,
    budget: usize,
    seed: u64,
) -> RunTrace {
    let bounds = benchmark.bounds();
    let mut objective = BenchmarkObjective { benchmark, noise };
    let xs = lhs(
        n_init,
        &bounds,
        &mut stream_rng(seed, Stream::InitialDesign, 0),
    )
    .unwrap();
    let mut noise_rng = stream_rng(seed, Stream::InitialDesign, 1);
    let ys: Vec<f64> = xs
        .iter()
        .map(|x| {
            bgo_core::StochasticObjective::evaluate(&mut objective, x, &mut noise_rng).unwrap()
        })
        .collect();
    let cfg = BgoConfig {
        max_iters: budget,
        eei_tolerance: 1e-4,
        mcmc: scaled_mcmc(),
        uq_every: 0,
        seed,
        ..BgoConfig::default()
    };
    run(&mut objective, Dataset::new(xs, ys).unwrap(), &bounds, &cfg).unwrap()
}

/// Runs seeds 0..10 and counts those whose terminal bounds contain the true
/// optimal value and whose recommendation is within `radius` of a minimizer.
#[allow(clippy::too_many_arguments)]
fn reproduction(
    criterion: u32,
    name: &str,
    benchmark: Benchmark,
    noise: NoiseModel,
    n_init: usize,
    budget: usize,
    radius: f64,
    needed: usize,
) -> bool {
    let opt = pinned_optimum(benchmark);
    let mut hits = 0;
    let mut notes = Vec::new();
    for seed in 0..10 {
        let trace = reproduction_run(benchmark, noise, n_init, budget, seed);
        let ok = match (&trace.status, &trace.recommendation) {
            (st, Some(rec)) if st.is_success() => {
                let dist = opt
                    .minimizers
                    .iter()
                    .map(|m| m.distance(&rec.x_best))
                    .fold(f64::INFINITY, f64::min);
                let covered = rec.pboo.contains(opt.value);
                notes.push(format!(
                    "{seed}:{}{}",
                    if covered { "" } else { "b" },
                    if dist <= radius { "" } else { "x" }
                ));
                covered && dist <= radius
            }
            (st, _) => {
                notes.push(format!("{seed}:{st:?}"));
                false
            }
        };
        if ok {
            hits += 1;
        }
    }
    let pass = hits >= needed;
    report(
        criterion,
        name,
        pass,
        &format!(
            "{hits}/10 seeds, need {needed}; per seed b = bounds miss, x = location miss: {}",
            notes.join(" ")
        ),
    );
    pass
}

#[test]
fn criterion_4_synth1d_low_noise() {
    let pass = reproduction(
        4,
        "1D s=0.1",
        Benchmark::Synth1d,
        NoiseModel::Constant(0.1),
        5,
        60,
        0.05,
        8,
    );
    assert!(pass);
}

#[test]
fn criterion_5_synth1d_noise_sweep() {
    let small = reproduction(
        5,
        "1D s=0.01",
        Benchmark::Synth1d,
        NoiseModel::Constant(0.01),
        5,
        60,
        0.05,
        8,
    );
    let hetero = reproduction(
        5,
        "1D heteroscedastic",
        Benchmark::Synth1d,
        NoiseModel::Hetero1d,
        5,
        60,
        0.05,
        8,
    );
    let large = reproduction(
        5,
        "1D s=1",
        Benchmark::Synth1d,
        NoiseModel::Constant(1.0),
        5,
        120,
        0.05,
        6,
    );
    assert!(small && hetero && large);
}

#[test]
fn criterion_6_synth2d() {
    let pass = reproduction(
        6,
        "2D s=0.1",
        Benchmark::Synth2d,
        NoiseModel::Constant(0.1),
        20,
        120,
        0.25,
        7,
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 7

fn tiny_config(seed: u64, max_iters: usize, eei_tolerance: f64) -> BgoConfig {
    BgoConfig {
        max_iters,
        eei_tolerance,
        n_candidates: 200,
        mcmc: McmcConfig {
            n_particles: 10,
            burn_in: 200,
            post_burn_steps: 200,
            thin: 20,
            map_restarts: 1,
            seed: 0,
        },
        uq_m: 20,
        uq_every: 0,
        uq_grid: 100,
        seed,
        ..BgoConfig::default()
    }
}

fn tiny_initial(seed: u64) -> Dataset {
    let mut rng = seeded(seed);
    let xs = lhs(4, &BoxBounds::unit(1), &mut rng).unwrap();
    let ys = xs
        .iter()
        .map(|x| bgo_core::benchmarks::true_mean(Benchmark::Synth1d, x.coords()).unwrap())
        .collect();
    Dataset::new(xs, ys).unwrap()
}

fn quadratic(x: &DesignPoint, _: &mut dyn rand::RngCore) -> bgo_core::Result<f64> {
    Ok((x.coords()[0] - 0.3).powi(2))
}

#[test]
fn criterion_7_loop_mechanics() {
    let bounds = BoxBounds::unit(1);
    let mut checks = Vec::new();

    // a huge tolerance stops before any evaluation
    let t = run(
        &mut quadratic,
        tiny_initial(1),
        &bounds,
        &tiny_config(1, 10, 1e9),
    )
    .unwrap();
    checks.push((
        "tolerance stop",
        t.status == TerminalStatus::ToleranceHit && t.new_evaluations() == 0 && t.data.len() == 4,
    ));

    // zero tolerance exhausts the budget
    let t = run(
        &mut quadratic,
        tiny_initial(2),
        &bounds,
        &tiny_config(2, 3, 0.0),
    )
    .unwrap();
    checks.push((
        "budget",
        t.status == TerminalStatus::BudgetExhausted
            && t.new_evaluations() == 3
            && t.data.len() == 7,
    ));
    checks.push((
        "data growth",
        t.records.iter().enumerate().all(|(i, r)| r.n_data == 4 + i),
    ));
    let in_candidates = t.records.iter().all(|r| {
        let c = lhs(
            200,
            &bounds,
            &mut stream_rng(2, Stream::Candidates, r.iteration as u64),
        )
        .unwrap();
        c.contains(&r.chosen)
    });
    checks.push(("chosen from candidates", in_candidates));

    // identical seeds give identical traces
    let a = run(
        &mut quadratic,
        tiny_initial(3),
        &bounds,
        &tiny_config(3, 3, 0.0),
    )
    .unwrap();
    let b = run(
        &mut quadratic,
        tiny_initial(3),
        &bounds,
        &tiny_config(3, 3, 0.0),
    )
    .unwrap();
    let same = a.records.len() == b.records.len()
        && a.records
            .iter()
            .zip(&b.records)
            .all(|(x, y)| x.same_outcome(y))
        && a.data == b.data
        && a.recommendation.as_ref().map(|r| (&r.x_best, r.pboo))
            == b.recommendation.as_ref().map(|r| (&r.x_best, r.pboo));
    checks.push(("reproducible", same));

    let failed: Vec<&str> = checks
        .iter()
        .filter(|(_, ok)| !ok)
        .map(|(n, _)| *n)
        .collect();
    let pass = failed.is_empty();
    let detail = if pass {
        format!("{} checks", checks.len())
    } else {
        format!("failed: {}", failed.join(", "))
    };
    report(7, "loop mechanics", pass, &detail);
    assert!(pass);
}

// ---------------------------------------------------------------- 8

#[test]
fn criterion_8_single_particle_reduces_to_ei() {
    let mut rng = seeded(808);
    let bounds = BoxBounds::unit(2);
    let xs = lhs(15, &bounds, &mut rng).unwrap();
    let ys: Vec<f64> = xs
        .iter()
        .map(|x| (6.0 * x.coords()[0]).sin() + (x.coords()[1] - 0.4).powi(2))
        .collect();
    let data = Dataset::new(xs, ys.clone()).unwrap();
    let s = 1.0;
    let theta = Hyperparameters::new(s, vec![0.3, 0.4], 1e-5 * s).unwrap();
    let fit = gp_fit(&data, &theta).unwrap();
    let candidates = lhs(1000, &bounds, &mut rng).unwrap();
    let scores = eei(&candidates, std::slice::from_ref(&fit)).unwrap();
    let incumbent = ys.iter().cloned().fold(f64::INFINITY, f64::min);
    let (means, vars) = fit.predict_batch(&candidates);
    let worst = scores
        .scores
        .iter()
        .zip(means.iter().zip(&vars))
        .map(|(e, (m, v))| (e - ei_closed_form(incumbent, *m, v.sqrt())).abs())
        .fold(0.0, f64::max);
    let pass = worst <= 1e-6;
    report(
        8,
        "single particle EI",
        pass,
        &format!("max deviation {worst:.2e} over 1000 candidates"),
    );
    assert!(pass);
}
