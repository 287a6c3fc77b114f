//! Derivative-free local minimization (Nelder–Mead simplex).

pub(crate) struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
}

pub(crate) struct Settings {
    pub initial_step: f64,
    pub max_evaluations: usize,
    pub f_tol: f64,
    pub x_tol: f64,
}

fn centroid_excluding(simplex: &[Vec<f64>], worst: usize) -> Vec<f64> {
    let n = simplex[0].len();
    let mut c = vec![0.0; n];
    for (i, v) in simplex.iter().enumerate() {
        if i != worst {
            for (ci, vi) in c.iter_mut().zip(v) {
                *ci += vi;
            }
        }
    }
    c.iter_mut().for_each(|ci| *ci /= n as f64);
    c
}

fn along(c: &[f64], worst: &[f64], t: f64) -> Vec<f64> {
    c.iter()
        .zip(worst)
        .map(|(ci, wi)| ci + t * (ci - wi))
        .collect()
}

/// Minimizes `f` from `x0`. Non-finite values are treated as `+inf`.
pub(crate) fn minimize(f: &dyn Fn(&[f64]) -> f64, x0: &[f64], s: &Settings) -> Minimum {
    let eval = |x: &[f64]| {
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let n = x0.len();
    let mut simplex: Vec<Vec<f64>> = vec![x0.to_vec()];
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += s.initial_step;
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| eval(v)).collect();
    let mut evaluations = n + 1;

    while evaluations < s.max_evaluations {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        let spread = values[n] - values[0];
        let size = simplex[1..]
            .iter()
            .map(|v| {
                v.iter()
                    .zip(&simplex[0])
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        if spread.is_finite() && spread <= s.f_tol * (1.0 + values[0].abs()) && size <= s.x_tol {
            break;
        }

        let c = centroid_excluding(&simplex, n);
        let xr = along(&c, &simplex[n], 1.0);
        let fr = eval(&xr);
        evaluations += 1;
        if fr < values[0] {
            let xe = along(&c, &simplex[n], 2.0);
            let fe = eval(&xe);
            evaluations += 1;
            if fe < fr {
                simplex[n] = xe;
                values[n] = fe;
            } else {
                simplex[n] = xr;
                values[n] = fr;
            }
            continue;
        }
        if fr < values[n - 1] {
            simplex[n] = xr;
            values[n] = fr;
            continue;
        }
        let (xc, fc) = if fr < values[n] {
            let xc = along(&c, &simplex[n], 0.5);
            let fc = eval(&xc);
            (xc, fc)
        } else {
            let xc = along(&c, &simplex[n], -0.5);
            let fc = eval(&xc);
            (xc, fc)
        };
        evaluations += 1;
        if fc < values[n].min(fr) {
            simplex[n] = xc;
            values[n] = fc;
            continue;
        }
        // shrink toward the best vertex
        let best = simplex[0].clone();
        for i in 1..=n {
            simplex[i] = simplex[i]
                .iter()
                .zip(&best)
                .map(|(v, b)| b + 0.5 * (v - b))
                .collect();
            values[i] = eval(&simplex[i]);
        }
        evaluations += n;
    }
    let best = (0..=n)
        .min_by(|&a, &b| values[a].total_cmp(&values[b]))
        .unwrap_or(0);
    Minimum {
        x: simplex[best].clone(),
        value: values[best],
        evaluations,
    }
}
