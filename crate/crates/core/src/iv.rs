//! Two-stage least squares for a single endogenous regressor, robust
//! first-stage F and the two-step GMM Hansen J test.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::glm::{self, DesignMatrix, FitResult, Vcov, INTERCEPT};
use crate::numeric;
use crate::table::Table;

/// Variance used for the first-stage F and the J statistic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum IvVariance {
    #[default]
    Robust,
    Classical,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IVSpec {
    pub outcome: String,
    pub endogenous: String,
    pub instruments: Vec<String>,
    pub controls: Vec<String>,
    pub variance: IvVariance,
    /// HC1 second-stage standard errors instead of the classical ones.
    pub robust_second_stage: bool,
}

impl IVSpec {
    pub fn new(outcome: &str, endogenous: &str, instruments: &[&str], controls: &[&str]) -> Self {
        Self {
            outcome: outcome.into(),
            endogenous: endogenous.into(),
            instruments: instruments.iter().map(|s| s.to_string()).collect(),
            controls: controls.iter().map(|s| s.to_string()).collect(),
            variance: IvVariance::Robust,
            robust_second_stage: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.instruments.is_empty() {
            return Err(Error::InvalidSpec("at least one instrument is required".into()));
        }
        if let Some(z) = self
            .instruments
            .iter()
            .find(|z| self.controls.contains(z) || **z == self.outcome)
        {
            return Err(Error::InvalidSpec(format!(
                "instrument `{z}` is also a control or the outcome"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HansenJ {
    pub j: f64,
    pub df: usize,
    /// `None` when the model is exactly identified.
    pub p: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IVResult {
    pub first_stage: FitResult,
    pub coef: f64,
    pub se: f64,
    pub z: f64,
    /// Full second-stage coefficient vector, names as in `second_stage_names`.
    pub second_stage_coef: Vec<f64>,
    pub second_stage_se: Vec<f64>,
    pub second_stage_names: Vec<String>,
    pub first_stage_f: f64,
    pub hansen: HansenJ,
    pub n_obs: usize,
}

struct Matrices {
    y: DVector<f64>,
    x: DMatrix<f64>,
    z: DMatrix<f64>,
    x_names: Vec<String>,
    z_names: Vec<String>,
}

fn build(data: &Table, spec: &IVSpec) -> Result<Matrices> {
    spec.validate()?;
    let mut cols = vec![spec.outcome.as_str(), spec.endogenous.as_str()];
    cols.extend(spec.instruments.iter().map(String::as_str));
    cols.extend(spec.controls.iter().map(String::as_str));
    let d = data.complete_cases(&cols)?;
    let n = d.n_rows();
    let mut zc: Vec<&str> = spec.instruments.iter().map(String::as_str).collect();
    zc.extend(spec.controls.iter().map(String::as_str));
    let mut xc: Vec<&str> = vec![spec.endogenous.as_str()];
    xc.extend(spec.controls.iter().map(String::as_str));
    if n <= zc.len() + 1 + 10 {
        return Err(Error::InsufficientData(format!(
            "{n} complete cases for {} columns",
            zc.len() + 1
        )));
    }
    let z = DesignMatrix::from_table(&d, &zc, true)?;
    let x = DesignMatrix::from_table(&d, &xc, true)?;
    Ok(Matrices {
        y: DVector::from_column_slice(d.num(&spec.outcome)?),
        x_names: x.names().to_vec(),
        z_names: z.names().to_vec(),
        x: x.x().clone(),
        z: z.x().clone(),
    })
}

fn inv_or_singular(m: &DMatrix<f64>, names: &[String]) -> Result<DMatrix<f64>> {
    numeric::spd_inverse(m).ok_or_else(|| Error::SingularDesign(names.to_vec()))
}

/// Robust or classical moment covariance
/// S = (1/n) Σ u²zz' for the given residuals.
fn moment_cov(z: &DMatrix<f64>, u: &DVector<f64>, variance: IvVariance) -> DMatrix<f64> {
    let n = z.nrows() as f64;
    match variance {
        IvVariance::Robust => {
            let mut zu = z.clone();
            for i in 0..z.nrows() {
                zu.row_mut(i).scale_mut(u[i]);
            }
            zu.transpose() * zu / n
        }
        IvVariance::Classical => {
            let s2 = u.dot(u) / n;
            numeric::gram(z) * (s2 / n)
        }
    }
}

/// Two-step efficient GMM J statistic with df = #excluded instruments − 1.
fn hansen_from(m: &Matrices, beta_2sls: &DVector<f64>, variance: IvVariance) -> Result<HansenJ> {
    let l = m.z.ncols();
    let k = m.x.ncols();
    if l <= k {
        return Ok(HansenJ { j: 0.0, df: 0, p: None });
    }
    let n = m.y.len() as f64;
    let u1 = &m.y - &m.x * beta_2sls;
    let s = moment_cov(&m.z, &u1, variance);
    let w = inv_or_singular(&s, &m.z_names)?;
    let zx = m.z.transpose() * &m.x;
    let zy = m.z.transpose() * &m.y;
    let a = zx.transpose() * &w * &zx;
    let a_inv = inv_or_singular(&a, &m.x_names)?;
    let beta = a_inv * (zx.transpose() * &w * zy);
    let u2 = &m.y - &m.x * beta;
    let g = m.z.transpose() * u2 / n;
    let j = (n * (g.transpose() * &w * &g)[(0, 0)]).max(0.0);
    let df = l - k;
    Ok(HansenJ {
        j,
        df,
        p: Some(numeric::chi2_sf(j, df as f64)),
    })
}

/// Hansen J for `spec` evaluated at its 2SLS estimate.
pub fn hansen_j(data: &Table, spec: &IVSpec) -> Result<HansenJ> {
    Ok(fit_2sls(data, spec)?.hansen)
}

/// Wald F on the excluded instruments of a first-stage fit.
fn excluded_f(first: &FitResult, excluded: &[String]) -> Result<f64> {
    let idx: Vec<usize> = excluded.iter().map(|e| first.index_of(e)).collect::<Result<_>>()?;
    let q = idx.len();
    let b = DVector::from_iterator(q, idx.iter().map(|&i| first.coef[i]));
    let v = DMatrix::from_fn(q, q, |r, c| first.cov[(idx[r], idx[c])]);
    match numeric::spd_inverse(&v) {
        Some(vi) => Ok((b.transpose() * vi * &b)[(0, 0)] / q as f64),
        // a perfect first stage leaves no residual variance
        None if first.pseudo_r2 > 1.0 - 1e-12 => Ok(f64::INFINITY),
        None => Err(Error::SingularDesign(excluded.to_vec())),
    }
}

pub fn fit_2sls(data: &Table, spec: &IVSpec) -> Result<IVResult> {
    let m = build(data, spec)?;
    let n = m.y.len();
    let zd = DesignMatrix::new(m.z_names.clone(), m.z.clone(), true)?;
    let endog: Vec<f64> = m.x.column(1).iter().copied().collect();
    let first_vcov = match spec.variance {
        IvVariance::Robust => Vcov::Hc1,
        IvVariance::Classical => Vcov::Classical,
    };
    let first = glm::fit_ols(&zd, &endog, &first_vcov).map_err(|e| match e {
        Error::InvalidDesign(_) => Error::SingularDesign(m.z_names.clone()),
        other => other,
    })?;
    let f = excluded_f(&first, &spec.instruments)?;
    if !(f >= 1e-6) {
        return Err(Error::NoIdentification);
    }
    let fitted = &m.z * DVector::from_column_slice(&first.coef);
    let mut xhat = m.x.clone();
    xhat.set_column(1, &fitted);
    let xtx = numeric::gram(&xhat);
    let xtx_inv = inv_or_singular(&xtx, &m.x_names)?;
    let beta = &xtx_inv * (xhat.transpose() * &m.y);
    // residuals with the observed, not the projected, endogenous column
    let u = &m.y - &m.x * &beta;
    let k = m.x.ncols();
    let cov = if spec.robust_second_stage {
        let mut xu = xhat.clone();
        for i in 0..n {
            xu.row_mut(i).scale_mut(u[i]);
        }
        &xtx_inv * (xu.transpose() * xu) * &xtx_inv * (n as f64 / (n - k) as f64)
    } else {
        &xtx_inv * (u.dot(&u) / (n - k) as f64)
    };
    let se: Vec<f64> = (0..k).map(|i| cov[(i, i)].max(0.0).sqrt()).collect();
    let hansen = hansen_from(&m, &beta, spec.variance)?;
    Ok(IVResult {
        coef: beta[1],
        se: se[1],
        z: beta[1] / se[1],
        second_stage_coef: beta.iter().copied().collect(),
        second_stage_se: se,
        second_stage_names: m.x_names.clone(),
        first_stage: first,
        first_stage_f: f,
        hansen,
        n_obs: n,
    })
}

impl IVResult {
    /// `term,coef,se,z,p` for the second stage followed by first-stage rows
    /// prefixed `first:` and diagnostic rows.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["term", "coef", "se", "z", "p"])?;
        let fmt = |c: f64, s: f64| {
            let z = c / s;
            [
                format!("{c}"),
                format!("{s}"),
                format!("{z}"),
                format!("{}", numeric::two_sided_p(z)),
            ]
        };
        for (i, name) in self.second_stage_names.iter().enumerate() {
            let [c, s, z, p] = fmt(self.second_stage_coef[i], self.second_stage_se[i]);
            wr.write_record([name.clone(), c, s, z, p])?;
        }
        for (i, name) in self.first_stage.names.iter().enumerate() {
            let [c, s, z, p] = fmt(self.first_stage.coef[i], self.first_stage.se[i]);
            wr.write_record([format!("first:{name}"), c, s, z, p])?;
        }
        let na = || "NA".to_string();
        wr.write_record([
            "first_stage_f".into(),
            format!("{}", self.first_stage_f),
            na(),
            na(),
            na(),
        ])?;
        wr.write_record([
            "hansen_j".into(),
            format!("{}", self.hansen.j),
            format!("{}", self.hansen.df),
            na(),
            self.hansen.p.map(|p| format!("{p}")).unwrap_or_else(na),
        ])?;
        wr.write_record(["n_obs".into(), self.n_obs.to_string(), na(), na(), na()])?;
        wr.flush()?;
        Ok(())
    }

    pub fn report_block(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "IV-2SLS");
        let _ = writeln!(
            s,
            "  second stage {:<20}{:>10.3} ({:.2})",
            self.second_stage_names[1], self.coef, self.z
        );
        for (i, name) in self.first_stage.names.iter().enumerate() {
            if name == INTERCEPT {
                continue;
            }
            let _ = writeln!(
                s,
                "  first stage  {:<20}{:>10.3} ({:.2})",
                name, self.first_stage.coef[i], self.first_stage.z[i]
            );
        }
        let _ = writeln!(s, "  first-stage F {:.2}", self.first_stage_f);
        match self.hansen.p {
            Some(p) => {
                let _ = writeln!(s, "  Hansen J {:.3} ({:.3}), df {}", self.hansen.j, p, self.hansen.df);
            }
            None => {
                let _ = writeln!(s, "  Hansen J 0 (exactly identified)");
            }
        }
        s
    }
}

/// Mean of `values` over the other members of each member's group.
/// Singleton groups get NaN.
pub fn leave_one_out_mean(values: &[f64], groups: &[String]) -> Vec<f64> {
    let mut acc: HashMap<&str, (f64, usize)> = HashMap::new();
    for (v, g) in values.iter().zip(groups) {
        let e = acc.entry(g.as_str()).or_insert((0.0, 0));
        e.0 += v;
        e.1 += 1;
    }
    values
        .iter()
        .zip(groups)
        .map(|(v, g)| {
            let (s, c) = acc[g.as_str()];
            if c < 2 {
                f64::NAN
            } else {
                (s - v) / (c - 1) as f64
            }
        })
        .collect()
}

/// Firm age in years at `year` given founding years.
pub fn firm_age(founded: &BTreeMap<String, i32>, firm: &str, year: i32) -> Option<f64> {
    founded.get(firm).map(|f| (year - f) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loo_mean() {
        let g: Vec<String> = ["a", "a", "a", "b"].iter().map(|s| s.to_string()).collect();
        let m = leave_one_out_mean(&[1.0, 2.0, 3.0, 9.0], &g);
        assert_eq!(&m[..3], &[2.5, 2.0, 1.5]);
        assert!(m[3].is_nan());
    }

    #[test]
    fn spec_validation() {
        let s = IVSpec::new("y", "x", &["c"], &["c"]);
        assert!(matches!(s.validate(), Err(Error::InvalidSpec(_))));
        let s = IVSpec::new("y", "x", &[], &[]);
        assert!(s.validate().is_err());
    }
}
