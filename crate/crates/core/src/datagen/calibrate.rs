use nalgebra::{DMatrix, DVector};

use super::households::Realized;
use super::{draw_households, gen_firms, realize, FirmPanel, HouseholdDraws, Structural, TruthConfig};
use crate::error::{Error, Result};
use crate::glm::fit_logit_fractional;
use crate::numeric;
use crate::panel;
use crate::washing_index::ols_slope;

/// Probability limits of the fitted specifications on a population.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PseudoTrue {
    pub washing: f64,
    pub a1: f64,
    pub a2: f64,
    pub b1: f64,
    pub b2: f64,
    pub c_prime: f64,
    pub interaction: f64,
    pub social_capital: f64,
    /// Slope of expected breadth on household washing.
    pub breadth_slope: f64,
}

fn design(n: usize, cols: &[&[f64]]) -> DMatrix<f64> {
    DMatrix::from_fn(n, cols.len() + 1, |i, j| if j == 0 { 1.0 } else { cols[j - 1][i] })
}

fn ols(x: &DMatrix<f64>, y: &[f64]) -> Result<DVector<f64>> {
    let xty = x.transpose() * DVector::from_column_slice(y);
    numeric::spd_solve(&numeric::gram(x), &xty).ok_or(Error::SingularHessian)
}

/// Fit every headline specification to expected outcomes (fractional logit
/// on adoption probabilities, OLS on realized mediators).
pub fn pseudo_true(draws: &HouseholdDraws, r: &Realized) -> Result<PseudoTrue> {
    let n = draws.len();
    let t = &draws.columns;
    let ctrl: Vec<&[f64]> = panel::CONTROLS.iter().map(|c| t.num(c)).collect::<Result<_>>()?;
    let w = &draws.washing[..];
    let scz = t.num(panel::SOCIAL_CAPITAL_STD)?;
    let wx: Vec<f64> = w.iter().zip(scz).map(|(a, b)| a * b).collect();
    let with = |lead: &[&[f64]]| {
        let mut v: Vec<&[f64]> = lead.to_vec();
        v.extend(ctrl.iter().copied());
        design(n, &v)
    };
    let y = &r.usage_prob;
    let base = fit_logit_fractional(&with(&[w]), y)?;
    let med = fit_logit_fractional(&with(&[w, &r.knowledge, &r.risk]), y)?;
    let inter = fit_logit_fractional(&with(&[w, scz, &wx]), y)?;
    let xm = with(&[w]);
    let a1 = ols(&xm, &r.knowledge)?;
    let a2 = ols(&xm, &r.risk)?;
    let (breadth_slope, _, _) = ols_slope(w, &r.breadth_expected)?;
    Ok(PseudoTrue {
        washing: base[1],
        a1: a1[1],
        a2: a2[1],
        b1: med[2],
        b2: med[3],
        c_prime: med[1],
        interaction: inter[3],
        social_capital: inter[2],
        breadth_slope,
    })
}

fn pack(s: &Structural) -> [f64; 5] {
    [s.washing, s.knowledge, s.risk, s.social_capital, s.interaction]
}

fn unpack(base: &Structural, x: &[f64]) -> Structural {
    Structural {
        washing: x[0],
        knowledge: x[1],
        risk: x[2],
        social_capital: x[3],
        interaction: x[4],
        ..base.clone()
    }
}

fn residual(cfg: &TruthConfig, draws: &HouseholdDraws, x: &[f64]) -> Result<DVector<f64>> {
    let mut c = cfg.clone();
    c.structural = unpack(&cfg.structural, x);
    let r = realize(&c, draws)?;
    let p = pseudo_true(draws, &r)?;
    Ok(DVector::from_vec(vec![
        p.c_prime - cfg.c_prime,
        p.b1 - cfg.b1,
        p.b2 - cfg.b2,
        p.social_capital - cfg.social_capital,
        p.interaction - cfg.interaction,
    ]))
}

/// Solve the latent-model constants on one large reference population.
///
/// First the copula sorting strength is set by bisection so the expected
/// breadth slope matches `breadth_slope`; then the five usage-index
/// constants are solved by damped Newton so the fitted mediation and
/// interaction specifications converge to their targets. The baseline
/// washing coefficient is not a free target: it follows from the others
/// and is returned in [`PseudoTrue::washing`].
pub fn calibrate_structural(cfg: &TruthConfig, n: usize, seed: u64) -> Result<(Structural, PseudoTrue)> {
    cfg.validate()?;
    let panel = gen_firms(cfg, seed)?;
    let mut c = cfg.clone();

    c.structural.sorting = solve_sorting(&c, seed, &panel, n)?;

    let draws = draw_households(&c, seed, &panel, n)?;
    let mut x = DVector::from_column_slice(&pack(&c.structural));
    let mut f = residual(&c, &draws, x.as_slice())?;
    for _ in 0..40 {
        if f.amax() < 1e-5 {
            break;
        }
        let mut j = DMatrix::zeros(5, 5);
        for k in 0..5 {
            let h = 1e-3;
            let mut xh = x.clone();
            xh[k] += h;
            let fh = residual(&c, &draws, xh.as_slice())?;
            j.set_column(k, &((fh - &f) / h));
        }
        let mut step = j.lu().solve(&f).ok_or(Error::SingularHessian)?;
        let cap = 0.5;
        if step.amax() > cap {
            step *= cap / step.amax();
        }
        let mut t = 1.0;
        loop {
            let cand = &x - &step * t;
            if let Ok(fc) = residual(&c, &draws, cand.as_slice()) {
                if fc.norm() < f.norm() {
                    x = cand;
                    f = fc;
                    break;
                }
            }
            t *= 0.5;
            if t < 1e-4 {
                return Err(Error::CalibrationFailure("usage-index solve stalled".into()));
            }
        }
    }
    if f.amax() > 1e-4 {
        return Err(Error::CalibrationFailure(format!(
            "usage-index targets missed by {:.2e}",
            f.amax()
        )));
    }
    let mut s = unpack(&c.structural, x.as_slice());
    let mut cc = c.clone();
    cc.structural = s.clone();
    let p = pseudo_true(&draws, &realize(&cc, &draws)?)?;
    s.implied_washing = p.washing;
    Ok((s, p))
}

fn pseudo_true_slope(d: &HouseholdDraws, r: &Realized) -> Result<f64> {
    Ok(ols_slope(&d.washing, &r.breadth_expected)?.0)
}

/// Copula sorting strength at which the expected breadth slope on
/// household washing equals `breadth_slope` for this panel and seed, or
/// the nearer end of [0, 0.95] when the target is out of reach.
pub fn solve_sorting(cfg: &TruthConfig, seed: u64, panel: &FirmPanel, n: usize) -> Result<f64> {
    let slope_at = |rho: f64| -> Result<f64> {
        let mut c = cfg.clone();
        c.structural.sorting = rho;
        let d = draw_households(&c, seed, panel, n)?;
        let r = realize(&c, &d)?;
        pseudo_true_slope(&d, &r)
    };
    let (mut lo, mut hi) = (0.0, 0.95);
    let (s_lo, s_hi) = (slope_at(lo)?, slope_at(hi)?);
    if (s_lo - cfg.breadth_slope) * (s_hi - cfg.breadth_slope) > 0.0 {
        // out of reach on this panel: take the closer end
        return Ok(if (s_lo - cfg.breadth_slope).abs() < (s_hi - cfg.breadth_slope).abs() {
            lo
        } else {
            hi
        });
    }
    while hi - lo > 1e-4 {
        let mid = 0.5 * (lo + hi);
        if slope_at(mid)? > cfg.breadth_slope {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
