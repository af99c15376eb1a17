use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use washgap::glm::{fit_ols, DesignMatrix, Vcov};
use washgap::iv::{fit_2sls, leave_one_out_mean, IVSpec, IvVariance};
use washgap::numeric::chi2_sf;
use washgap::table::Table;

fn table(cols: &[(&str, &[f64])]) -> Table {
    let mut t = Table::new();
    for (n, v) in cols {
        t.set_num(n, v.to_vec());
    }
    t
}

const Z1: [f64; 18] = [
    0.5, 1.2, -0.3, 2.0, 0.8, -1.1, 0.0, 1.5, -0.7, 0.9, 1.8, -0.2, 0.4, -1.5, 0.6, -0.4, 1.1, 0.2,
];
const Z2: [f64; 18] = [
    1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0,
];
const C: [f64; 18] = [
    2.1, 1.0, 0.3, 1.7, 2.5, 0.9, 1.2, 0.4, 2.2, 1.9, 0.6, 1.1, 0.8, 1.6, 0.7, 1.4, 2.0, 0.5,
];
const X: [f64; 18] = [
    1.1, 1.9, 0.2, 3.1, 1.0, -0.4, 0.9, 1.8, 0.1, 1.7, 2.2, 0.6, 0.5, -0.9, 1.3, -0.2, 2.1, 0.4,
];
const Y: [f64; 18] = [
    2.0, 2.7, 0.1, 4.4, 2.2, -0.1, 1.3, 2.1, 1.0, 3.0, 2.6, 0.8, 1.1, -0.6, 1.9, 0.3, 3.3, 0.2,
];

#[test]
fn overidentified_matches_offline_reference() {
    let d = table(&[("y", &Y), ("x", &X), ("z1", &Z1), ("z2", &Z2), ("c", &C)]);
    let r = fit_2sls(&d, &IVSpec::new("y", "x", &["z1", "z2"], &["c"])).unwrap();
    let coef = [-0.25366038735567775, 1.2175926038674685, 0.510033871838788];
    let se = [0.09816876349971035, 0.04259665467181633, 0.06388994443017539];
    for i in 0..3 {
        assert!((r.second_stage_coef[i] - coef[i]).abs() < 1e-9);
        assert!((r.second_stage_se[i] - se[i]).abs() < 1e-9);
    }
    assert_eq!(r.hansen.df, 1);
    assert!((r.hansen.j - 0.32491911197212664).abs() < 1e-9);
}

#[test]
fn just_identified_matches_covariance_ratio() {
    let d = table(&[("y", &Y), ("x", &X), ("z1", &Z1)]);
    let r = fit_2sls(&d, &IVSpec::new("y", "x", &["z1"], &[])).unwrap();
    let n = Y.len() as f64;
    let m = |v: &[f64]| v.iter().sum::<f64>() / n;
    let (mz, mx, my) = (m(&Z1), m(&X), m(&Y));
    let szy: f64 = (0..18).map(|i| (Z1[i] - mz) * (Y[i] - my)).sum();
    let szx: f64 = (0..18).map(|i| (Z1[i] - mz) * (X[i] - mx)).sum();
    let szz: f64 = Z1.iter().map(|z| (z - mz).powi(2)).sum();
    let b = szy / szx;
    let a = my - b * mx;
    let s2: f64 = (0..18).map(|i| (Y[i] - a - b * X[i]).powi(2)).sum::<f64>() / (n - 2.0);
    let se = (s2 * szz / (szx * szx)).sqrt();
    assert!((r.coef - b).abs() < 1e-9);
    assert!((r.se - se).abs() < 1e-9);
    assert_eq!(r.hansen.j, 0.0);
    assert_eq!(r.hansen.df, 0);
    assert!(r.hansen.p.is_none());
}

fn sim(n: usize, seed: u64, rho: f64, invalid: f64) -> Table {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut y, mut x, mut z1, mut z2, mut c) = (vec![], vec![], vec![], vec![], vec![]);
    for _ in 0..n {
        let a: f64 = rng.sample(StandardNormal);
        let b: f64 = rng.sample(StandardNormal);
        let ci: f64 = rng.sample(StandardNormal);
        let v: f64 = rng.sample(StandardNormal);
        let e: f64 = rng.sample(StandardNormal);
        let u = rho * v + (1.0 - rho * rho).sqrt() * e;
        let xi = 0.7 * a + 0.5 * b + 0.3 * ci + v;
        y.push(1.0 - 0.5 * xi + 0.4 * ci + invalid * b + u);
        x.push(xi);
        z1.push(a);
        z2.push(b);
        c.push(ci);
    }
    table(&[("y", &y), ("x", &x), ("z1", &z1), ("z2", &z2), ("c", &c)])
}

#[test]
fn exogenous_regressor_instrumenting_itself_equals_ols() {
    let mut d = sim(300, 1, 0.0, 0.0);
    let x = d.num("x").unwrap().to_vec();
    d.set_num("x_copy", x);
    let r = fit_2sls(&d, &IVSpec::new("y", "x", &["x_copy"], &["c"])).unwrap();
    let xd = DesignMatrix::from_table(&d, &["x", "c"], true).unwrap();
    let ols = fit_ols(&xd, d.num("y").unwrap(), &Vcov::Classical).unwrap();
    for i in 0..3 {
        assert!((r.second_stage_coef[i] - ols.coef[i]).abs() < 1e-10);
        assert!((r.second_stage_se[i] - ols.se[i]).abs() < 1e-10);
    }
}

#[test]
fn endogeneity_biases_ols_but_not_2sls() {
    let reps = 200;
    let (mut iv, mut ols) = (0.0, 0.0);
    for s in 0..reps {
        let d = sim(500, 100 + s, 0.6, 0.0);
        iv += fit_2sls(&d, &IVSpec::new("y", "x", &["z1", "z2"], &["c"]))
            .unwrap()
            .coef;
        let xd = DesignMatrix::from_table(&d, &["x", "c"], true).unwrap();
        ols += fit_ols(&xd, d.num("y").unwrap(), &Vcov::Classical)
            .unwrap()
            .coef_of("x")
            .unwrap();
    }
    let (iv, ols) = (iv / reps as f64, ols / reps as f64);
    assert!((iv + 0.5).abs() < 0.02, "2sls mean {iv}");
    assert!(ols + 0.5 > 0.2, "ols mean {ols}");
}

#[test]
fn j_rejects_invalid_instrument() {
    let d = sim(2000, 9, 0.3, 0.5);
    let j = fit_2sls(&d, &IVSpec::new("y", "x", &["z1", "z2"], &["c"]))
        .unwrap()
        .hansen;
    assert!(j.p.unwrap() < 0.01);
}

#[test]
fn j_is_nonnegative_under_both_variances() {
    for s in 0..30 {
        let d = sim(200, 500 + s, 0.3, 0.0);
        for v in [IvVariance::Robust, IvVariance::Classical] {
            let mut spec = IVSpec::new("y", "x", &["z1", "z2"], &["c"]);
            spec.variance = v;
            assert!(fit_2sls(&d, &spec).unwrap().hansen.j >= 0.0);
        }
    }
}

#[test]
fn printed_j_and_p_agree_at_one_df() {
    let p = chi2_sf(1.234, 1.0);
    assert!((p - 0.2666305413336497).abs() < 1e-9);
    assert_eq!(format!("{p:.3}"), "0.267");
}

#[test]
fn irrelevant_instrument_is_rejected() {
    let n = 100;
    let d = table(&[
        ("y", &(0..n).map(|i| i as f64).collect::<Vec<_>>()),
        ("x", &(0..n).map(|i| (i % 7) as f64).collect::<Vec<_>>()),
        (
            "z",
            &(0..n).map(|i| if i % 7 == 3 { 1.0 } else { 0.0 }).collect::<Vec<_>>(),
        ),
        (
            "k",
            &(0..n).map(|i| if i % 7 == 3 { 1.0 } else { 0.0 }).collect::<Vec<_>>(),
        ),
    ]);
    assert!(fit_2sls(&d, &IVSpec::new("y", "x", &["z"], &["k"])).is_err());
}

#[test]
fn leave_one_out_excludes_self() {
    let g: Vec<String> = ["a", "a", "b", "b", "b"].iter().map(|s| s.to_string()).collect();
    let m = leave_one_out_mean(&[1.0, 3.0, 2.0, 4.0, 9.0], &g);
    assert_eq!(m[0], 3.0);
    assert_eq!(m[1], 1.0);
    assert_eq!(m[2], 6.5);
    assert_eq!(m[4], 3.0);
}
