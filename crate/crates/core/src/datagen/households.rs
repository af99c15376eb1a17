use std::collections::BTreeMap;

use nalgebra::{Matrix2, Vector2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal, Poisson};

use super::oracle::TruthManifest;
use super::{solve_sorting, FirmPanel, TruthConfig};
use crate::error::{Error, Result};
use crate::numeric::{self, normal_cdf, normal_quantile, sigmoid};
use crate::panel::{self, ln_wealth, standardized};
use crate::table::Table;

/// Logits of a right-skewed 0..7 breadth distribution; the realized
/// thresholds are these plus one common shift.
const BREADTH_BASE: [f64; 8] = [0.42, 0.14, 0.11, 0.09, 0.08, 0.07, 0.05, 0.04];

/// Exogenous draws for one population. Outcomes and mediators are pure
/// functions of these and the structural parameters, so calibration can
/// rerun the structural layer on fixed randomness.
#[derive(Debug, Clone)]
pub struct HouseholdDraws {
    pub firm_id: Vec<String>,
    pub region: Vec<String>,
    pub washing: Vec<f64>,
    /// Standardized platform first-stage shock.
    pub shock: Vec<f64>,
    /// Unobserved trait, uniform with unit variance.
    pub latent: Vec<f64>,
    /// Raw file columns, the log transforms, and standardized social capital.
    pub columns: Table,
    u_knowledge: Vec<[f64; 4]>,
    u_risk: Vec<[f64; 3]>,
    u_usage: Vec<f64>,
    u_breadth: Vec<f64>,
}

impl HouseholdDraws {
    pub fn len(&self) -> usize {
        self.washing.len()
    }

    pub fn is_empty(&self) -> bool {
        self.washing.is_empty()
    }
}

/// Structural layer evaluated on a set of draws.
#[derive(Debug, Clone)]
pub struct Realized {
    pub knowledge: Vec<f64>,
    pub risk: Vec<f64>,
    /// Usage index including the intercept.
    pub usage_eta: Vec<f64>,
    pub usage_prob: Vec<f64>,
    pub usage: Vec<f64>,
    pub breadth_expected: Vec<f64>,
    pub breadth: Vec<f64>,
    pub alpha: f64,
    pub thresholds: Vec<f64>,
    /// Share of mediator probabilities that hit a bound.
    pub clipped: f64,
}

#[derive(Debug, Clone)]
pub struct HouseholdOutput {
    pub households: Table,
    pub usage_rates: BTreeMap<i32, f64>,
    pub manifest: TruthManifest,
}

fn household_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Weights `∝ exp(θ1 x + θ2 x²)` with the given mean and second moment,
/// by Newton on the convex dual.
pub(crate) fn tilt_two_moments(x: &[f64], m1: f64, m2: f64) -> Option<Vec<f64>> {
    let weights = |t: &Vector2<f64>| {
        let e: Vec<f64> = x.iter().map(|v| t[0] * v + t[1] * v * v).collect();
        let mx = e.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = e.iter().map(|v| (v - mx).exp()).collect();
        let s: f64 = w.iter().sum();
        let lse = mx + s.ln();
        (w.into_iter().map(|v| v / s).collect::<Vec<_>>(), lse)
    };
    let target = Vector2::new(m1, m2);
    let dual = |t: &Vector2<f64>| weights(t).1 - t.dot(&target);
    let mut theta = Vector2::zeros();
    for _ in 0..100 {
        let (w, _) = weights(&theta);
        let e1: f64 = w.iter().zip(x).map(|(a, v)| a * v).sum();
        let e2: f64 = w.iter().zip(x).map(|(a, v)| a * v * v).sum();
        let g = Vector2::new(e1 - m1, e2 - m2);
        if g.norm() < 1e-10 {
            return Some(w);
        }
        let c11: f64 = w.iter().zip(x).map(|(a, v)| a * (v - e1).powi(2)).sum();
        let c12: f64 = w.iter().zip(x).map(|(a, v)| a * (v - e1) * (v * v - e2)).sum();
        let c22: f64 = w.iter().zip(x).map(|(a, v)| a * (v * v - e2).powi(2)).sum();
        let h = Matrix2::new(c11, c12, c12, c22);
        let step = h.try_inverse()? * g;
        let f0 = dual(&theta);
        let mut s = 1.0;
        loop {
            let cand = theta - step * s;
            if dual(&cand) <= f0 || s < 1e-12 {
                theta = cand;
                break;
            }
            s *= 0.5;
        }
        if !theta.iter().all(|v| v.is_finite()) {
            return None;
        }
    }
    // stalled at rounding level: accept if the moments are close enough
    let (w, _) = weights(&theta);
    let e1: f64 = w.iter().zip(x).map(|(a, v)| a * v).sum();
    let e2: f64 = w.iter().zip(x).map(|(a, v)| a * v * v).sum();
    ((e1 - m1).hypot(e2 - m2) < 1e-8).then_some(w)
}

/// Integer counts summing to `n` by largest remainder.
pub(crate) fn allocate(q: &[f64], n: usize) -> Vec<usize> {
    let raw: Vec<f64> = q.iter().map(|v| v * n as f64).collect();
    let mut counts: Vec<usize> = raw.iter().map(|v| v.floor() as usize).collect();
    let short = n - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..q.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = raw[a] - raw[a].floor();
        let fb = raw[b] - raw[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &i in order.iter().take(short) {
        counts[i] += 1;
    }
    counts
}

fn trunc_normal_q(u: f64, mu: f64, sd: f64, lo: f64, hi: f64) -> f64 {
    let (a, b) = (normal_cdf((lo - mu) / sd), normal_cdf((hi - mu) / sd));
    let p = (a + u * (b - a)).clamp(1e-12, 1.0 - 1e-12);
    (mu + sd * normal_quantile(p)).clamp(lo, hi)
}

fn beta_binomial_cdf(n: u32, a: f64, b: f64) -> Vec<f64> {
    use statrs::function::beta::ln_beta;
    use statrs::function::factorial::ln_binomial;
    let mut cdf = Vec::with_capacity(n as usize + 1);
    let mut acc = 0.0;
    for k in 0..=n {
        let kf = k as f64;
        acc += (ln_binomial(n as u64, k as u64) + ln_beta(kf + a, n as f64 - kf + b) - ln_beta(a, b)).exp();
        cdf.push(acc);
    }
    cdf
}

fn discrete_q(u: f64, cdf: &[f64]) -> f64 {
    cdf.iter().position(|c| u <= *c).unwrap_or(cdf.len() - 1) as f64
}

fn categorical(rng: &mut ChaCha8Rng, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

fn r3(x: f64) -> f64 {
    (x * 1000.0).round() / 1000.0
}

/// Sample `n` households on the panel's final-year platforms.
///
/// Platforms are weighted so household-level washing has the configured
/// mean and SD. Adoption-relevant controls are tied to the platform index
/// through a Gaussian copula with correlation `structural.sorting`, signed
/// so that households on high-washing platforms have less favourable
/// characteristics; marginals follow the descriptive moments.
pub fn draw_households(cfg: &TruthConfig, seed: u64, panel: &FirmPanel, n: usize) -> Result<HouseholdDraws> {
    let last = cfg.last_year;
    let ids: Vec<&String> = panel.firms.iter().map(|f| &f.firm_id).collect();
    let x: Vec<f64> = ids
        .iter()
        .map(|f| {
            panel
                .index
                .get(f, last)
                .ok_or_else(|| Error::CalibrationFailure(format!("no {last} index for {f}")))
        })
        .collect::<Result<_>>()?;
    let (m1, m2) = (cfg.washing_mean, cfg.washing_sd.powi(2) + cfg.washing_mean.powi(2));
    let q = tilt_two_moments(&x, m1, m2).ok_or_else(|| {
        Error::CalibrationFailure(format!(
            "household washing mean {} / sd {} unreachable on the realized platform index",
            cfg.washing_mean, cfg.washing_sd
        ))
    })?;
    let counts = allocate(&q, n);
    let mut slots: Vec<usize> = counts
        .iter()
        .enumerate()
        .flat_map(|(f, c)| std::iter::repeat_n(f, *c))
        .collect();
    let mut rng = household_rng(seed, 2);
    slots.shuffle(&mut rng);

    let washing: Vec<f64> = slots.iter().map(|&f| x[f]).collect();
    let (wm, ws) = (numeric::mean(&washing), numeric::sample_sd(&washing));
    let rho = cfg.structural.sorting;
    let keep = (1.0 - rho * rho).sqrt();
    let std = Normal::new(0.0, 1.0).unwrap();
    let sc_dist = Gamma::new(1.29, 2.456).unwrap();
    let fam = Poisson::new(2.6).unwrap();
    let fin_cdf = beta_binomial_cdf(5, 1.884, 2.554);
    let sqrt3 = 3f64.sqrt();

    let mut cols: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    let mut push = |k: &'static str, v: f64| cols.entry(k).or_default().push(v);
    let mut region = Vec::with_capacity(n);
    let mut latent = Vec::with_capacity(n);
    let mut u_knowledge = Vec::with_capacity(n);
    let mut u_risk = Vec::with_capacity(n);
    let mut u_usage = Vec::with_capacity(n);
    let mut u_breadth = Vec::with_capacity(n);
    for &w in washing.iter() {
        let wt = if ws > 0.0 { (w - wm) / ws } else { 0.0 };
        // direction +1: rises with washing and lowers adoption
        let mut cop = |dir: f64| normal_cdf(dir * rho * wt + keep * std.sample(&mut rng));
        let u_age = cop(1.0);
        let u_edu = cop(-1.0);
        let u_fin = cop(-1.0);
        let u_inc = cop(-1.0);
        let u_ast = cop(-1.0);
        let u_mig = cop(-1.0);
        let u_gdp = cop(-1.0);
        push(panel::AGE, trunc_normal_q(u_age, 53.689, 12.345, 18.0, 85.0).round());
        push(panel::EDUCATION, trunc_normal_q(u_edu, 8.234, 3.567, 0.0, 16.0).round());
        push(panel::FIN_LITERACY, discrete_q(u_fin, &fin_cdf));
        let inc = (1.036 + 0.973 * normal_quantile(u_inc.clamp(1e-12, 1.0 - 1e-12))).exp();
        push(panel::INCOME, r3(inc.clamp(0.2, 45.2)));
        let ast = (2.849 + 0.849 * normal_quantile(u_ast.clamp(1e-12, 1.0 - 1e-12))).exp() - 6.0;
        push(panel::NET_ASSETS, r3(ast.clamp(-5.2, 280.5)));
        push(panel::MIGRANT, if u_mig > 0.65 { 1.0 } else { 0.0 });
        let gdp = (6f64.ln() + 0.4 * normal_quantile(u_gdp.clamp(1e-12, 1.0 - 1e-12))).exp();
        push(panel::GDP, r3(gdp));
        let sc: f64 = sc_dist.sample(&mut rng);
        push(panel::SOCIAL_CAPITAL, r3(sc.min(18.643)));
        push("gender", if rng.random::<f64>() < 0.88 { 1.0 } else { 0.0 });
        push("married", if rng.random::<f64>() < 0.85 { 1.0 } else { 0.0 });
        push(
            "health",
            1.0 + categorical(&mut rng, &[0.05, 0.15, 0.35, 0.3, 0.15]) as f64,
        );
        push(
            "risk_attitude",
            1.0 + categorical(&mut rng, &[0.3, 0.3, 0.25, 0.1, 0.05]) as f64,
        );
        let fs: f64 = fam.sample(&mut rng);
        push("family_size", (1.0 + fs).min(10.0));
        push(panel::PRIOR_USE, if rng.random::<f64>() < 0.243 { 1.0 } else { 0.0 });
        region.push(["east", "central", "west"][categorical(&mut rng, &[0.38, 0.33, 0.29])].to_string());
        latent.push(sqrt3 * (2.0 * rng.random::<f64>() - 1.0));
        u_knowledge.push([rng.random(), rng.random(), rng.random(), rng.random()]);
        u_risk.push([rng.random(), rng.random(), rng.random()]);
        u_usage.push(rng.random());
        u_breadth.push(rng.random::<f64>().clamp(1e-15, 1.0 - 1e-15));
    }

    let mut columns = Table::new();
    for (k, v) in cols {
        columns.set_num(k, v);
    }
    let ln_inc: Vec<f64> = columns.num(panel::INCOME)?.iter().map(|v| v.ln()).collect();
    let ln_w: Vec<f64> = columns.num(panel::NET_ASSETS)?.iter().map(|v| ln_wealth(*v)).collect();
    let ln_g: Vec<f64> = columns.num(panel::GDP)?.iter().map(|v| v.ln()).collect();
    let scz = standardized(columns.num(panel::SOCIAL_CAPITAL)?);
    columns.set_num(panel::LN_INCOME, ln_inc);
    columns.set_num(panel::LN_WEALTH, ln_w);
    columns.set_num(panel::LN_GDP, ln_g);
    columns.set_num(panel::SOCIAL_CAPITAL_STD, scz);

    Ok(HouseholdDraws {
        firm_id: slots.iter().map(|&f| ids[f].clone()).collect(),
        shock: slots.iter().map(|&f| panel.iv_shock[ids[f]]).collect(),
        region,
        washing,
        latent,
        columns,
        u_knowledge,
        u_risk,
        u_usage,
        u_breadth,
    })
}

fn linear_index(t: &Table, coefs: &[(String, f64)], centered: bool) -> Result<Vec<f64>> {
    let mut acc = vec![0.0; t.n_rows()];
    for (name, b) in coefs {
        let col = t.num(name)?;
        let m = if centered { numeric::mean(col) } else { 0.0 };
        for (a, v) in acc.iter_mut().zip(col) {
            *a += b * (v - m);
        }
    }
    Ok(acc)
}

/// Root of a monotone increasing `f` on `[lo, hi]` by bisection.
fn bisect(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> Option<f64> {
    let (flo, fhi) = (f(lo), f(hi));
    if !(flo <= 0.0 && fhi >= 0.0) {
        return None;
    }
    for _ in 0..64 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

fn expected_breadth(eta: f64, tau: &[f64]) -> f64 {
    tau.iter().map(|t| sigmoid(eta - t)).sum()
}

/// Evaluate mediators and both outcomes for the configured parameters.
///
/// Mediators are binomial counts whose success probability is linear in
/// centered washing, centered controls and the latent trait, so their
/// conditional means are linear wherever no probability is clipped. The
/// usage intercept and the breadth threshold shift are solved so the
/// expected means equal their targets.
pub fn realize(cfg: &TruthConfig, d: &HouseholdDraws) -> Result<Realized> {
    let n = d.len();
    let s = &cfg.structural;
    let t = &d.columns;
    let wm = numeric::mean(&d.washing);
    let kc = linear_index(t, &cfg.knowledge_controls, true)?;
    let rc = linear_index(t, &cfg.risk_controls, true)?;
    let mut clipped = 0usize;
    let mut knowledge = Vec::with_capacity(n);
    let mut risk = Vec::with_capacity(n);
    for i in 0..n {
        let dw = d.washing[i] - wm;
        let p1 = (cfg.knowledge_mean + cfg.a1 * dw + kc[i] + s.latent_knowledge * d.latent[i]) / 4.0;
        let p2 = (cfg.risk_mean + cfg.a2 * dw + rc[i] + s.latent_risk * d.latent[i]) / 3.0;
        if !(0.0..=1.0).contains(&p1) {
            clipped += 1;
        }
        if !(0.0..=1.0).contains(&p2) {
            clipped += 1;
        }
        let (p1, p2) = (p1.clamp(0.0, 1.0), p2.clamp(0.0, 1.0));
        knowledge.push(d.u_knowledge[i].iter().filter(|u| **u < p1).count() as f64);
        risk.push(d.u_risk[i].iter().filter(|u| **u < p2).count() as f64);
    }

    let uc = linear_index(t, &cfg.usage_controls, false)?;
    let scz = t.num(panel::SOCIAL_CAPITAL_STD)?;
    let base: Vec<f64> = (0..n)
        .map(|i| {
            let w = d.washing[i];
            s.washing * w
                + s.knowledge * knowledge[i]
                + s.risk * risk[i]
                + s.social_capital * scz[i]
                + s.interaction * w * scz[i]
                + uc[i]
                + s.latent_usage * d.latent[i]
                + cfg.confounding * d.shock[i]
        })
        .collect();
    let mean_p = |a: f64| base.iter().map(|e| sigmoid(a + e)).sum::<f64>() / n as f64;
    let alpha = bisect(-60.0, 60.0, |a| mean_p(a) - cfg.usage_mean)
        .ok_or_else(|| Error::CalibrationFailure("usage mean unreachable".into()))?;
    let usage_eta: Vec<f64> = base.iter().map(|e| alpha + e).collect();
    let usage_prob: Vec<f64> = usage_eta.iter().map(|e| sigmoid(*e)).collect();
    let usage = usage_prob
        .iter()
        .zip(&d.u_usage)
        .map(|(p, u)| if u < p { 1.0 } else { 0.0 })
        .collect();

    let bc = linear_index(t, &cfg.breadth_controls, false)?;
    let eta2: Vec<f64> = (0..n).map(|i| cfg.breadth_washing * d.washing[i] + bc[i]).collect();
    let mut cum = 0.0;
    let base_tau: Vec<f64> = BREADTH_BASE[..7]
        .iter()
        .map(|p| {
            cum += p;
            numeric::logit(cum)
        })
        .collect();
    let mean_b = |c: f64| {
        let tau: Vec<f64> = base_tau.iter().map(|t| t + c).collect();
        eta2.iter().map(|e| expected_breadth(*e, &tau)).sum::<f64>() / n as f64
    };
    let shift = bisect(-100.0, 100.0, |c| cfg.breadth_mean - mean_b(c))
        .ok_or_else(|| Error::CalibrationFailure("breadth mean unreachable".into()))?;
    let thresholds: Vec<f64> = base_tau.iter().map(|t| t + shift).collect();
    let breadth_expected = eta2.iter().map(|e| expected_breadth(*e, &thresholds)).collect();
    let breadth = eta2
        .iter()
        .zip(&d.u_breadth)
        .map(|(e, u)| {
            let y = e + numeric::logit(*u);
            thresholds.iter().filter(|t| y > **t).count() as f64
        })
        .collect();

    Ok(Realized {
        knowledge,
        risk,
        usage_eta,
        usage_prob,
        usage,
        breadth_expected,
        breadth,
        alpha,
        thresholds,
        clipped: clipped as f64 / (2 * n) as f64,
    })
}

/// Yearly usage rates implied by the usage model when each year's
/// user-weighted index replaces the final-year one, plus a linear secular
/// trend `g` per year solved so the rates correlate with the yearly index
/// means at the configured level.
fn usage_trend(cfg: &TruthConfig, panel: &FirmPanel, eta: &[f64]) -> Result<(BTreeMap<i32, f64>, f64)> {
    let years = cfg.years();
    let means: Vec<f64> = years
        .iter()
        .map(|y| {
            panel
                .firms
                .iter()
                .map(|f| panel.shares[&(f.firm_id.clone(), *y)] * panel.index.get(&f.firm_id, *y).unwrap_or(0.0))
                .sum()
        })
        .collect();
    let last_mean = *means.last().unwrap();
    let rates = |g: f64| -> Vec<f64> {
        years
            .iter()
            .zip(&means)
            .map(|(y, m)| {
                let shift = g * (y - cfg.last_year) as f64 + cfg.washing * (m - last_mean);
                eta.iter().map(|e| sigmoid(e + shift)).sum::<f64>() / eta.len() as f64
            })
            .collect()
    };
    let corr = |g: f64| numeric::pearson(&means, &rates(g)).unwrap_or(f64::NAN);
    let g = bisect(0.0, 10.0, |g| corr(g) - cfg.trend_correlation).ok_or_else(|| {
        Error::CalibrationFailure(format!(
            "trend correlation {} not reachable (range {:.3}..{:.3})",
            cfg.trend_correlation,
            corr(0.0),
            corr(10.0)
        ))
    })?;
    let out = years.iter().copied().zip(rates(g)).collect();
    Ok((out, g))
}

/// Household file plus yearly usage rates and the truth manifest. With
/// `solve_sorting` set, the copula sorting strength is re-solved on this
/// panel so the household breadth slope hits its target.
pub fn gen_households(cfg: &TruthConfig, seed: u64, panel: &FirmPanel) -> Result<HouseholdOutput> {
    cfg.validate()?;
    let mut solved;
    let cfg = if cfg.solve_sorting {
        solved = cfg.clone();
        solved.structural.sorting = solve_sorting(cfg, seed, panel, cfg.n_households)?;
        &solved
    } else {
        cfg
    };
    let d = draw_households(cfg, seed, panel, cfg.n_households)?;
    let r = realize(cfg, &d)?;
    let (usage_rates, trend) = usage_trend(cfg, panel, &r.usage_eta)?;

    let n = d.len();
    let mut h = Table::new();
    h.set_text(panel::HOUSEHOLD_ID, (1..=n).map(|i| format!("H{i:05}")).collect());
    h.set_text(panel::FIRM_ID, d.firm_id.clone());
    h.set_text(panel::REGION, d.region.clone());
    for name in panel::RAW_NUMERIC {
        let v = match name {
            panel::USAGE => r.usage.clone(),
            panel::BREADTH => r.breadth.clone(),
            panel::KNOWLEDGE => r.knowledge.clone(),
            panel::RISK => r.risk.clone(),
            _ => d.columns.num(name)?.to_vec(),
        };
        h.set_num(name, v);
    }

    let s = &cfg.structural;
    let mut m = TruthManifest::default();
    m.set("seed", seed);
    m.set("n_households", n);
    m.set("n_firms", cfg.n_firms);
    m.set("first_year", cfg.first_year);
    m.set("last_year", cfg.last_year);
    for (k, v) in [
        ("washing", cfg.washing),
        ("a1", cfg.a1),
        ("a2", cfg.a2),
        ("b1", cfg.b1),
        ("b2", cfg.b2),
        ("c_prime", cfg.c_prime),
        ("indirect_1", cfg.a1 * cfg.b1),
        ("indirect_2", cfg.a2 * cfg.b2),
        ("interaction", cfg.interaction),
        ("social_capital", cfg.social_capital),
        ("breadth_washing", cfg.breadth_washing),
        ("iv_industry_loading", cfg.iv_industry_loading),
        ("iv_age_loading", cfg.iv_age_loading),
        ("iv_noise_sd", cfg.iv_noise_sd),
        ("confounding", cfg.confounding),
        ("structural_washing", s.washing),
        ("structural_knowledge", s.knowledge),
        ("structural_risk", s.risk),
        ("structural_social_capital", s.social_capital),
        ("structural_interaction", s.interaction),
        ("latent_usage", s.latent_usage),
        ("latent_knowledge", s.latent_knowledge),
        ("latent_risk", s.latent_risk),
        ("sorting", s.sorting),
        ("washing_implied", s.implied_washing),
        ("usage_intercept", r.alpha),
        ("usage_trend_per_year", trend),
        ("breadth_slope", cfg.breadth_slope),
        ("trend_correlation", cfg.trend_correlation),
        ("mediator_clip_share", r.clipped),
    ] {
        m.set(k, v);
    }
    m.set("knowledge_noise", "binomial(4, p)");
    m.set("risk_noise", "binomial(3, p)");
    m.set("latent_distribution", "uniform(-sqrt3, sqrt3)");
    for (i, t) in r.thresholds.iter().enumerate() {
        m.set(&format!("breadth_cut{i}"), t);
    }
    for (name, b) in &cfg.usage_controls {
        m.set(&format!("usage_{name}"), b);
    }
    for (name, b) in &cfg.breadth_controls {
        m.set(&format!("breadth_{name}"), b);
    }
    Ok(HouseholdOutput {
        households: h,
        usage_rates,
        manifest: m,
    })
}
