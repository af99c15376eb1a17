//! Interaction moderation, subgroup splits with coefficient-difference
//! tests, simple slopes and the heterogeneity battery.

use std::fmt::Write as _;
use std::io::Write;

use crate::error::{Error, Result};
use crate::glm::{self, FitResult, ModelSpec, OutcomeLink, VcovSpec};
use crate::numeric;
use crate::par;
use crate::table::Table;

#[derive(Debug, Clone, PartialEq)]
pub struct ModerationSpec {
    pub treatment: String,
    pub moderator: String,
    pub outcome: String,
    pub controls: Vec<String>,
    /// Center treatment and moderator at their sample means before forming
    /// the product.
    pub center_inputs: bool,
    pub link: OutcomeLink,
}

pub fn interaction_name(treatment: &str, moderator: &str) -> String {
    format!("{treatment}_x_{moderator}")
}

impl ModerationSpec {
    pub fn interaction(&self) -> String {
        interaction_name(&self.treatment, &self.moderator)
    }
}

/// Logit (or other link) with treatment, moderator, their product and controls.
pub fn fit_interaction(data: &Table, spec: &ModerationSpec) -> Result<FitResult> {
    if spec.treatment == spec.moderator {
        return Err(Error::InvalidSpec("treatment and moderator must differ".into()));
    }
    let mut cols = vec![spec.outcome.as_str(), spec.treatment.as_str(), spec.moderator.as_str()];
    cols.extend(spec.controls.iter().map(String::as_str));
    let mut d = data.complete_cases(&cols)?;
    let inter = spec.interaction();
    let path_cols = vec![spec.treatment.clone(), spec.moderator.clone(), inter.clone()];
    let m = d.num(&spec.moderator)?.to_vec();
    if m.iter().all(|v| *v == m[0]) {
        return Err(Error::SingularDesign(path_cols));
    }
    let mut t = d.num(&spec.treatment)?.to_vec();
    let mut mm = m;
    if spec.center_inputs {
        let (mt, mmod) = (numeric::mean(&t), numeric::mean(&mm));
        t.iter_mut().for_each(|v| *v -= mt);
        mm.iter_mut().for_each(|v| *v -= mmod);
        d.set_num(&spec.treatment, t.clone());
        d.set_num(&spec.moderator, mm.clone());
    }
    d.set_num(&inter, t.iter().zip(&mm).map(|(a, b)| a * b).collect());
    let mut regs: Vec<&str> = vec![&spec.treatment, &spec.moderator, &inter];
    regs.extend(spec.controls.iter().map(String::as_str));
    let ms = ModelSpec::new(&spec.outcome, &regs, spec.link);
    glm::fit_model(&d, &ms, &VcovSpec::Classical).map_err(|e| match e {
        Error::SingularHessian | Error::InvalidDesign(_) => Error::SingularDesign(path_cols.clone()),
        other => other,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimpleSlope {
    pub level: f64,
    pub slope: f64,
    pub se: f64,
    pub z: f64,
}

/// Treatment slope β_T + β₃·level with delta-method standard errors.
/// Levels are on the scale the moderator entered the fit (centered when the
/// fit was centered).
pub fn simple_slopes(fit: &FitResult, treatment: &str, moderator: &str, levels: &[f64]) -> Result<Vec<SimpleSlope>> {
    let inter = interaction_name(treatment, moderator);
    let j3 = fit.index_of(&inter).map_err(|_| Error::NotAModerationFit)?;
    let jt = fit.index_of(treatment).map_err(|_| Error::NotAModerationFit)?;
    let (bt, b3) = (fit.coef[jt], fit.coef[j3]);
    let (vt, v3, c) = (fit.cov[(jt, jt)], fit.cov[(j3, j3)], fit.cov[(jt, j3)]);
    Ok(levels
        .iter()
        .map(|&l| {
            let slope = bt + b3 * l;
            let se = (vt + 2.0 * l * c + l * l * v3).max(0.0).sqrt();
            SimpleSlope {
                level: l,
                slope,
                se,
                z: slope / se,
            }
        })
        .collect())
}

/// Mean − SD, mean, mean + SD, clamped to the observed range.
pub fn default_levels(moderator: &[f64]) -> [f64; 3] {
    let m = numeric::mean(moderator);
    let sd = numeric::sample_sd(moderator);
    let lo = moderator.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = moderator.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    [(m - sd).clamp(lo, hi), m, (m + sd).clamp(lo, hi)]
}

/// Which observations form the focal group of a split. The comparison is
/// always reported as complement minus focal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SplitRule {
    /// value ≤ sample median (ties go to the focal, low group).
    Median,
    /// value ≤ c.
    AtMost(f64),
    /// value ≥ c.
    AtLeast(f64),
    /// value == c (for 0/1 indicators).
    Equals(f64),
}

impl SplitRule {
    pub fn focal_mask(&self, values: &[f64]) -> Vec<bool> {
        match *self {
            SplitRule::Median => {
                let s = numeric::sorted_copy(values);
                let med = numeric::quantile_sorted(&s, 0.5);
                values.iter().map(|v| *v <= med).collect()
            }
            SplitRule::AtMost(c) => values.iter().map(|v| *v <= c).collect(),
            SplitRule::AtLeast(c) => values.iter().map(|v| *v >= c).collect(),
            SplitRule::Equals(c) => values.iter().map(|v| *v == c).collect(),
        }
    }

    pub fn label(&self) -> String {
        match self {
            SplitRule::Median => "<= median".into(),
            SplitRule::AtMost(c) => format!("<= {c}"),
            SplitRule::AtLeast(c) => format!(">= {c}"),
            SplitRule::Equals(c) => format!("== {c}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaldDifference {
    pub diff: f64,
    pub se: f64,
    pub z: f64,
    pub p: f64,
}

/// (b2 − b1) / √(se1² + se2²) with a two-sided normal p-value.
pub fn wald_difference(b1: f64, se1: f64, b2: f64, se2: f64) -> WaldDifference {
    let diff = b2 - b1;
    let se = (se1 * se1 + se2 * se2).sqrt();
    let z = diff / se;
    WaldDifference {
        diff,
        se,
        z,
        p: numeric::two_sided_p(z),
    }
}

/// Difference test from printed coefficients and z-values, backing the
/// standard errors out as coef / z.
pub fn chow_z(b1: f64, z1: f64, b2: f64, z2: f64) -> WaldDifference {
    wald_difference(b1, b1 / z1, b2, b2 / z2)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitComparison {
    pub split_var: String,
    pub rule: SplitRule,
    pub treatment: String,
    pub focal: FitResult,
    pub complement: FitResult,
    pub n_focal: usize,
    pub n_complement: usize,
    /// complement − focal.
    pub diff: WaldDifference,
}

fn check_group(d: &Table, spec: &ModelSpec, side: &str) -> Result<()> {
    let n = d.n_rows();
    let min = spec.regressors.len() + 1 + 10;
    if n <= min {
        return Err(Error::GroupTooSmall(format!("{side}: {n} rows")));
    }
    if spec.link != OutcomeLink::Linear {
        let y = d.num(&spec.outcome)?;
        if y.iter().all(|v| *v == y[0]) {
            return Err(Error::GroupTooSmall(format!("{side}: single outcome class")));
        }
    }
    Ok(())
}

fn split_tables(data: &Table, split_var: &str, rule: SplitRule, spec: &ModelSpec) -> Result<(Table, Table)> {
    let mut cols = spec.columns();
    cols.push(split_var);
    let d = data.complete_cases(&cols)?;
    let mask = rule.focal_mask(d.num(split_var)?);
    let focal: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
    let comp: Vec<usize> = (0..mask.len()).filter(|&i| !mask[i]).collect();
    let (a, b) = (d.take_rows(&focal), d.take_rows(&comp));
    check_group(&a, spec, "focal")?;
    check_group(&b, spec, "complement")?;
    Ok((a, b))
}

/// Fit `spec` separately on the focal and complement groups and test the
/// treatment coefficient difference.
pub fn split_fit(
    data: &Table,
    split_var: &str,
    rule: SplitRule,
    spec: &ModelSpec,
    treatment: &str,
) -> Result<SplitComparison> {
    let (a, b) = split_tables(data, split_var, rule, spec)?;
    let fa = glm::fit_model(&a, spec, &VcovSpec::Classical)?;
    let fb = glm::fit_model(&b, spec, &VcovSpec::Classical)?;
    let diff = wald_difference(
        fa.coef_of(treatment)?,
        fa.se_of(treatment)?,
        fb.coef_of(treatment)?,
        fb.se_of(treatment)?,
    );
    Ok(SplitComparison {
        split_var: split_var.to_string(),
        rule,
        treatment: treatment.to_string(),
        n_focal: a.n_rows(),
        n_complement: b.n_rows(),
        focal: fa,
        complement: fb,
        diff,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChowF {
    pub f: f64,
    pub df1: usize,
    pub df2: usize,
    pub p: f64,
}

/// Classical Chow F for a linear model: pooled versus separate group fits.
pub fn chow_f_test(data: &Table, split_var: &str, rule: SplitRule, spec: &ModelSpec) -> Result<ChowF> {
    let lin = ModelSpec {
        link: OutcomeLink::Linear,
        ..spec.clone()
    };
    let (a, b) = split_tables(data, split_var, rule, &lin)?;
    let rss = |t: &Table| -> Result<f64> {
        let f = glm::fit_model(t, &lin, &VcovSpec::Classical)?;
        Ok(f.sigma2 * (f.n_obs - f.coef.len()) as f64)
    };
    let mut cols = lin.columns();
    cols.push(split_var);
    let pooled = rss(&data.complete_cases(&cols)?)?;
    let (ra, rb) = (rss(&a)?, rss(&b)?);
    let k = lin.regressors.len() + 1;
    let n = a.n_rows() + b.n_rows();
    let df2 = n - 2 * k;
    let f = ((pooled - ra - rb) / k as f64) / ((ra + rb) / df2 as f64);
    Ok(ChowF {
        f,
        df1: k,
        df2,
        p: numeric::f_sf(f, k as f64, df2 as f64),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dimension {
    pub name: String,
    pub split_var: String,
    pub rule: SplitRule,
}

/// One comparison per dimension; a failing dimension keeps its error and
/// does not stop the others.
pub fn heterogeneity_battery(
    data: &Table,
    dims: &[Dimension],
    spec: &ModelSpec,
    treatment: &str,
) -> Vec<(String, Result<SplitComparison>)> {
    par::map_slice(dims, |d| {
        // an equality split pins its own column inside the focal group
        let spec = match d.rule {
            SplitRule::Equals(_) if d.split_var != treatment => {
                let mut s = spec.clone();
                s.regressors.retain(|r| *r != d.split_var);
                s
            }
            _ => spec.clone(),
        };
        (d.name.clone(), split_fit(data, &d.split_var, d.rule, &spec, treatment))
    })
}

/// Long-format battery report: one row per group plus a difference row.
pub fn write_battery_csv<W: Write>(results: &[(String, Result<SplitComparison>)], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["dimension", "group", "rule", "n", "coef", "se", "z", "p"])?;
    for (name, r) in results {
        match r {
            Ok(c) => {
                for (g, f, n) in [
                    ("focal", &c.focal, c.n_focal),
                    ("complement", &c.complement, c.n_complement),
                ] {
                    let j = f.index_of(&c.treatment)?;
                    wr.write_record([
                        name.clone(),
                        g.to_string(),
                        c.rule.label(),
                        n.to_string(),
                        format!("{}", f.coef[j]),
                        format!("{}", f.se[j]),
                        format!("{}", f.z[j]),
                        format!("{}", numeric::two_sided_p(f.z[j])),
                    ])?;
                }
                wr.write_record([
                    name.clone(),
                    "difference".to_string(),
                    "complement - focal".to_string(),
                    (c.n_focal + c.n_complement).to_string(),
                    format!("{}", c.diff.diff),
                    format!("{}", c.diff.se),
                    format!("{}", c.diff.z),
                    format!("{}", c.diff.p),
                ])?;
            }
            Err(e) => {
                wr.write_record([
                    name.clone(),
                    "error".into(),
                    e.to_string(),
                    "".into(),
                    "".into(),
                    "".into(),
                    "".into(),
                    "".into(),
                ])?;
            }
        }
    }
    wr.flush()?;
    Ok(())
}

/// Interaction fit, split groups and difference side by side.
pub fn moderation_report(fit: &FitResult, split: &SplitComparison, slopes: &[SimpleSlope]) -> String {
    let mut s = fit.report_block("(1) interaction model");
    let t = &split.treatment;
    let row = |f: &FitResult| (f.coef_of(t).unwrap_or(f64::NAN), f.z_of(t).unwrap_or(f64::NAN));
    let (cc, cz) = row(&split.complement);
    let (fc, fz) = row(&split.focal);
    let _ = writeln!(
        s,
        "(2) complement group n={}: {t} {cc:.3} ({cz:.2})",
        split.n_complement
    );
    let _ = writeln!(s, "(3) focal group n={}: {t} {fc:.3} ({fz:.2})", split.n_focal);
    let _ = writeln!(
        s,
        "(4) difference (2)-(3): {:.3} ({:.2})",
        split.diff.diff, split.diff.z
    );
    for sl in slopes {
        let _ = writeln!(
            s,
            "slope at {:.3}: {:.3} (se {:.3}, z {:.2})",
            sl.level, sl.slope, sl.se, sl.z
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn printed_inputs_give_expected_difference() {
        let d = chow_z(-0.378, -6.89, -0.112, -1.89);
        assert!((d.diff - 0.266).abs() < 1e-12);
        assert!(d.z > 3.0 && d.z < 3.6);
    }

    #[test]
    fn difference_is_antisymmetric() {
        let a = wald_difference(0.1, 0.2, 0.5, 0.3);
        let b = wald_difference(0.5, 0.3, 0.1, 0.2);
        assert_eq!(a.z, -b.z);
    }

    #[test]
    fn median_ties_go_low() {
        let m = SplitRule::Median.focal_mask(&[1.0, 2.0, 2.0, 3.0, 2.0]);
        assert_eq!(m, vec![true, true, true, false, true]);
    }

    #[test]
    fn default_levels_clamp() {
        let l = default_levels(&[0.0, 0.0, 0.0, 10.0]);
        assert_eq!(l[0], 0.0);
        assert!((l[1] - 2.5).abs() < 1e-12);
    }
}
