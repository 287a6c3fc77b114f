use bgo_core::design::lhs;
use bgo_core::gp::{cov_matrix, se_cov};
use bgo_core::hyper::log_marginal_likelihood;
use bgo_core::rng::seeded;
use bgo_core::{gp_fit, BoxBounds, Dataset, DesignPoint, Hyperparameters};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use proptest::prelude::*;
use rand::Rng;

fn instance(seed: u64, n: usize, d: usize) -> (Dataset, Hyperparameters) {
    let mut rng = seeded(seed);
    let xs = lhs(n, &BoxBounds::unit(d), &mut rng).unwrap();
    let ys = xs.iter().map(|_| rng.random_range(-3.0..3.0)).collect();
    let theta = Hyperparameters::new(
        rng.random_range(0.2..3.0),
        (0..d).map(|_| rng.random_range(0.05..1.5)).collect(),
        rng.random_range(0.1..1.0),
    )
    .unwrap();
    (Dataset::new(xs, ys).unwrap(), theta)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn covariance_is_symmetric_psd(seed in any::<u64>(), n in 1usize..30, d in 1usize..4) {
        let (data, theta) = instance(seed, n, d);
        let k = cov_matrix(data.points(), &theta).unwrap();
        prop_assert!((&k - k.transpose()).amax() == 0.0);
        let min = SymmetricEigen::new(k).eigenvalues.min();
        prop_assert!(min >= -1e-10 * theta.signal().powi(2));
    }

    #[test]
    fn prior_correlation_is_squared_exponential(
        a in prop::collection::vec(-2.0f64..2.0, 2),
        b in prop::collection::vec(-2.0f64..2.0, 2),
        l in prop::collection::vec(0.05f64..3.0, 2),
        s in 0.1f64..4.0,
    ) {
        let theta = Hyperparameters::new(s, l.clone(), 0.1).unwrap();
        let x = DesignPoint::new(a.clone()).unwrap();
        let y = DesignPoint::new(b.clone()).unwrap();
        let r = se_cov(&x, &y, &theta).unwrap() / (s * s);
        let q: f64 = (0..2).map(|k| ((a[k] - b[k]) / l[k]).powi(2)).sum();
        prop_assert!((r - (-0.5 * q).exp()).abs() < 1e-14);
        prop_assert!(r > 0.0 || q > 1400.0);
        prop_assert!(r <= 1.0);
        prop_assert_eq!(se_cov(&x, &x, &theta).unwrap(), s * s);
    }

    #[test]
    fn data_never_increases_variance(seed in any::<u64>(), n in 1usize..15, d in 1usize..3) {
        let (data, theta) = instance(seed, n, d);
        let fit = gp_fit(&data, &theta).unwrap();
        let prior = gp_fit(&Dataset::empty(d), &theta).unwrap();
        let mut more = data.clone();
        more.push(DesignPoint::new(vec![0.5; d]).unwrap(), 0.0).unwrap();
        let fit_more = gp_fit(&more, &theta).unwrap();
        let probes = lhs(20, &BoxBounds::unit(d), &mut seeded(seed ^ 1)).unwrap();
        let (_, v0) = prior.predict_batch(&probes);
        let (_, v1) = fit.predict_batch(&probes);
        let (_, v2) = fit_more.predict_batch(&probes);
        let tol = 1e-9 * theta.signal().powi(2);
        for i in 0..probes.len() {
            prop_assert!(v1[i] <= v0[i] + tol);
            prop_assert!(v2[i] <= v1[i] + tol);
            prop_assert!(v1[i] >= 0.0);
        }
    }

    #[test]
    fn cholesky_reconstructs_the_covariance(seed in any::<u64>(), n in 1usize..25, d in 1usize..4) {
        let (data, theta) = instance(seed, n, d);
        let fit = gp_fit(&data, &theta).unwrap();
        let l = fit.chol_factor();
        let s2 = theta.signal().powi(2);
        let c = cov_matrix(data.points(), &theta).unwrap()
            + DMatrix::identity(n, n) * (theta.noise().powi(2) + fit.jitter() * s2);
        prop_assert!((&l * l.transpose() - c).amax() <= 1e-10 * s2.max(1.0));
    }

    #[test]
    fn likelihood_matches_dense_formula(seed in any::<u64>(), n in 1usize..20, d in 1usize..3) {
        let (data, theta) = instance(seed, n, d);
        // the fit always adds the starting jitter to the diagonal
        let eta = gp_fit(&data, &theta).unwrap().jitter();
        let c = cov_matrix(data.points(), &theta).unwrap()
            + DMatrix::identity(n, n) * (theta.noise().powi(2) + eta * theta.signal().powi(2));
        let y = DVector::from_column_slice(data.values());
        let lu = c.clone().lu();
        let sol = lu.solve(&y).unwrap();
        let dense = -0.5 * y.dot(&sol)
            - 0.5 * lu.determinant().ln()
            - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
        let ours = log_marginal_likelihood(&data, &theta).unwrap();
        prop_assert!((ours - dense).abs() <= 1e-8 * dense.abs().max(1.0), "{} vs {}", ours, dense);
    }
}

#[test]
fn noiseless_fit_interpolates() {
    let xs: Vec<DesignPoint> = [0.0, 0.3, 0.55, 1.0].iter().map(|&v| v.into()).collect();
    let ys = vec![1.0, -0.5, 0.25, 2.0];
    let theta = Hyperparameters::new(1.0, vec![0.2], 1e-5).unwrap();
    let fit = gp_fit(&Dataset::new(xs.clone(), ys.clone()).unwrap(), &theta).unwrap();
    for (x, y) in xs.iter().zip(&ys) {
        let (m, v) = fit.point_predict(x);
        assert!((m - y).abs() < 1e-6);
        assert!(v < 1e-8);
    }
}

#[test]
fn empty_data_gives_the_prior() {
    let theta = Hyperparameters::new(2.0, vec![0.5], 0.1).unwrap();
    let fit = gp_fit(&Dataset::empty(1), &theta).unwrap();
    let (m, v) = fit.point_predict(&0.3.into());
    assert_eq!(m, 0.0);
    assert!((v - 4.0).abs() < 1e-12);
}
