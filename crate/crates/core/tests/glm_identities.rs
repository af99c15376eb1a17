use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use washgap::glm::{
    average_marginal_effect, fit_logit, fit_ologit, fit_ols, logit_gradient, logit_loglik, ologit_derivs,
    ologit_gradient, ologit_loglik, DesignMatrix, Vcov,
};

fn design(cols: &[(&str, Vec<f64>)], intercept: bool) -> DesignMatrix {
    let c: Vec<(String, Vec<f64>)> = cols.iter().map(|(n, v)| (n.to_string(), v.clone())).collect();
    DesignMatrix::from_columns(&c, intercept).unwrap()
}

fn logit_data(n: usize, seed: u64, beta: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x1 = Vec::with_capacity(n);
    let mut x2 = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let a: f64 = rng.sample(StandardNormal);
        let b: f64 = rng.random_range(-1.0..1.0);
        let p = 1.0 / (1.0 + (-(beta[0] + beta[1] * a + beta[2] * b)).exp());
        x1.push(a);
        x2.push(b);
        y.push(if rng.random::<f64>() < p { 1.0 } else { 0.0 });
    }
    (x1, x2, y)
}

#[test]
fn intercept_only_logit_is_log_odds() {
    let y: Vec<f64> = (0..97).map(|i| if i % 7 < 2 { 1.0 } else { 0.0 }).collect();
    let m = y.iter().sum::<f64>() / y.len() as f64;
    let x = DesignMatrix::new(vec!["const".into()], DMatrix::from_element(y.len(), 1, 1.0), true).unwrap();
    let f = fit_logit(&x, &y).unwrap();
    assert!((f.coef[0] - (m / (1.0 - m)).ln()).abs() < 1e-8);
    let se = (1.0 / (y.len() as f64 * m * (1.0 - m))).sqrt();
    assert!((f.se[0] - se).abs() < 1e-8);
}

#[test]
fn two_by_two_log_odds_ratio() {
    // cells: x=0 (12 ones of 40), x=1 (25 ones of 35)
    let mut x = Vec::new();
    let mut y = Vec::new();
    for (xv, ones, total) in [(0.0, 12, 40), (1.0, 25, 35)] {
        for i in 0..total {
            x.push(xv);
            y.push(if i < ones { 1.0 } else { 0.0 });
        }
    }
    let f = fit_logit(&design(&[("x", x)], true), &y).unwrap();
    let lor = (25.0f64 / 10.0 / (12.0 / 28.0)).ln();
    assert!((f.coef_of("x").unwrap() - lor).abs() < 1e-6);
    let se = (1.0 / 25.0 + 1.0 / 10.0 + 1.0 / 12.0 + 1.0 / 28.0f64).sqrt();
    assert!((f.se_of("x").unwrap() - se).abs() < 1e-6);
    assert!((f.coef[0] - (12.0f64 / 28.0).ln()).abs() < 1e-6);
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}

#[test]
fn logit_gradient_matches_finite_differences() {
    let (x1, x2, y) = logit_data(300, 7, &[0.2, -0.8, 0.5]);
    let x = design(&[("a", x1), ("b", x2)], true);
    let beta = DVector::from_vec(vec![0.1, -0.3, 0.7]);
    let g = logit_gradient(x.x(), &y, &beta);
    for j in 0..3 {
        let h = 1e-5;
        let mut up = beta.clone();
        up[j] += h;
        let mut dn = beta.clone();
        dn[j] -= h;
        let fd = (logit_loglik(x.x(), &y, &up) - logit_loglik(x.x(), &y, &dn)) / (2.0 * h);
        assert!(rel_close(g[j], fd, 1e-6), "{j}: {} vs {fd}", g[j]);
    }
}

fn ologit_data(n: usize, seed: u64) -> (DMatrix<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tau = [-1.0, 0.2, 1.5];
    let mut x = DMatrix::zeros(n, 2);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let a: f64 = rng.sample(StandardNormal);
        let b: f64 = rng.random_range(0.0..2.0);
        x[(i, 0)] = a;
        x[(i, 1)] = b;
        let u: f64 = rng.random_range(1e-12..1.0);
        let e = 0.6 * a - 0.4 * b + (u / (1.0 - u)).ln();
        y.push(tau.iter().filter(|t| e > **t).count() as f64);
    }
    (x, y)
}

#[test]
fn ologit_gradient_and_hessian_match_finite_differences() {
    let (x, y) = ologit_data(400, 11);
    let beta = DVector::from_vec(vec![0.5, -0.3]);
    let tau = vec![-0.9, 0.1, 1.4];
    let g = ologit_gradient(&x, &y, &beta, &tau);
    let (_, h) = ologit_derivs(&x, &y, &beta, &tau, true);
    let h = h.unwrap();
    let theta: Vec<f64> = beta.iter().copied().chain(tau.iter().copied()).collect();
    let split = |t: &[f64]| (DVector::from_column_slice(&t[..2]), t[2..].to_vec());
    let ll = |t: &[f64]| {
        let (b, c) = split(t);
        ologit_loglik(&x, &y, &b, &c)
    };
    let grad = |t: &[f64]| {
        let (b, c) = split(t);
        ologit_gradient(&x, &y, &b, &c)
    };
    let step = 1e-5;
    for j in 0..5 {
        let mut up = theta.clone();
        up[j] += step;
        let mut dn = theta.clone();
        dn[j] -= step;
        let fd = (ll(&up) - ll(&dn)) / (2.0 * step);
        assert!(rel_close(g[j], fd, 1e-6), "grad {j}: {} vs {fd}", g[j]);
        let dg = (grad(&up) - grad(&dn)) / (2.0 * step);
        for k in 0..5 {
            assert!(
                rel_close(h[(k, j)], dg[k], 1e-5),
                "hess {k},{j}: {} vs {}",
                h[(k, j)],
                dg[k]
            );
        }
    }
}

#[test]
fn two_category_ologit_equals_logit() {
    let (x1, x2, y) = logit_data(800, 3, &[-0.4, 1.1, -0.6]);
    let lf = fit_logit(&design(&[("a", x1.clone()), ("b", x2.clone())], true), &y).unwrap();
    let of = fit_ologit(&design(&[("a", x1), ("b", x2)], false), &y).unwrap();
    for n in ["a", "b"] {
        assert!((lf.coef_of(n).unwrap() - of.coef_of(n).unwrap()).abs() < 1e-6);
        assert!((lf.se_of(n).unwrap() - of.se_of(n).unwrap()).abs() < 1e-6);
    }
    assert!((of.thresholds[0] + lf.coef[0]).abs() < 1e-6);
    assert!((lf.log_likelihood - of.log_likelihood).abs() < 1e-6);
}

#[test]
fn marginal_effect_matches_finite_differences() {
    let (x1, x2, y) = logit_data(600, 5, &[0.3, 0.9, -0.5]);
    let x = design(&[("a", x1.clone()), ("b", x2.clone())], true);
    let f = fit_logit(&x, &y).unwrap();
    let ame = average_marginal_effect(&f, &x, "a").unwrap();
    let h = 1e-6;
    let mean_p = |shift: f64| {
        let xs = x
            .with_column("a", &x1.iter().map(|v| v + shift).collect::<Vec<_>>())
            .unwrap();
        let eta = xs.x() * DVector::from_column_slice(&f.coef);
        eta.iter().map(|e| 1.0 / (1.0 + (-e).exp())).sum::<f64>() / eta.len() as f64
    };
    let fd = (mean_p(h) - mean_p(-h)) / (2.0 * h);
    assert!((ame - fd).abs() < 1e-6);
}

#[test]
fn z_is_coef_over_se() {
    let (x1, x2, y) = logit_data(500, 9, &[0.0, 0.5, 0.5]);
    let f = fit_logit(&design(&[("a", x1), ("b", x2)], true), &y).unwrap();
    for i in 0..f.coef.len() {
        assert!((f.z[i] - f.coef[i] / f.se[i]).abs() < 1e-12);
    }
}

#[test]
fn ols_matches_normal_equations() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let n = 50;
    let a: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let y: Vec<f64> = a
        .iter()
        .map(|v| 1.0 + 2.0 * v + rng.sample::<f64, _>(StandardNormal))
        .collect();
    let f = fit_ols(&design(&[("a", a.clone())], true), &y, &Vcov::Classical).unwrap();
    let ma = a.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let sxy: f64 = a.iter().zip(&y).map(|(p, q)| (p - ma) * (q - my)).sum();
    let sxx: f64 = a.iter().map(|p| (p - ma).powi(2)).sum();
    assert!((f.coef_of("a").unwrap() - sxy / sxx).abs() < 1e-10);
    assert!((f.coef[0] - (my - sxy / sxx * ma)).abs() < 1e-10);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn rescaling_a_regressor_rescales_its_coefficient(seed in 0u64..1000, c in 0.1f64..10.0) {
        let (x1, x2, y) = logit_data(400, seed, &[0.2, 0.7, -0.4]);
        let f0 = fit_logit(&design(&[("a", x1.clone()), ("b", x2.clone())], true), &y).unwrap();
        let scaled: Vec<f64> = x1.iter().map(|v| v * c).collect();
        let f1 = fit_logit(&design(&[("a", scaled), ("b", x2)], true), &y).unwrap();
        prop_assert!((f1.coef_of("a").unwrap() * c - f0.coef_of("a").unwrap()).abs() < 1e-6);
        prop_assert!((f1.z_of("a").unwrap() - f0.z_of("a").unwrap()).abs() < 1e-6);
        prop_assert!((f1.log_likelihood - f0.log_likelihood).abs() < 1e-8);
    }

    #[test]
    fn ologit_score_vanishes_at_optimum(seed in 0u64..1000) {
        let (x, y) = ologit_data(300, seed);
        let d = design(&[("a", x.column(0).iter().copied().collect()), ("b", x.column(1).iter().copied().collect())], false);
        let f = fit_ologit(&d, &y).unwrap();
        prop_assert!(f.thresholds.windows(2).all(|w| w[0] < w[1]));
        let g = ologit_gradient(&x, &y, &DVector::from_column_slice(&f.coef), &f.thresholds);
        prop_assert!(g.amax() < 1e-5);
    }
}

#[test]
fn null_covariate_interval_covers_zero() {
    let mut covered = 0;
    let trials = 200;
    for s in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(10_000 + s);
        let n = 300;
        let noise: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let (x1, _, y) = logit_data(n, 20_000 + s, &[0.1, 0.8, 0.0]);
        let f = fit_logit(&design(&[("a", x1), ("noise", noise)], true), &y).unwrap();
        let (lo, hi) = f.ci("noise", 0.95).unwrap();
        if lo <= 0.0 && 0.0 <= hi {
            covered += 1;
        }
    }
    let rate = covered as f64 / trials as f64;
    assert!((0.91..=0.99).contains(&rate), "coverage {rate}");
}
