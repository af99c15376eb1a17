//! Binary logit, proportional-odds ordered logit and OLS, with predicted
//! probabilities, average marginal effects and McFadden pseudo-R².

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::numeric::{self, log1p_exp, logistic_pdf, sigmoid};
use crate::table::Table;

pub const INTERCEPT: &str = "const";

const MAX_ITER: usize = 100;
/// Relative to |log-likelihood|.
const TOL_LL: f64 = 1e-12;
const TOL_GRAD: f64 = 1e-8;
const SEPARATION_ETA: f64 = 30.0;

/// Named regressor matrix. When `has_intercept` is set the first column is
/// a column of ones named [`INTERCEPT`].
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    names: Vec<String>,
    x: DMatrix<f64>,
    has_intercept: bool,
}

impl DesignMatrix {
    /// Build from named columns, prepending an intercept if requested.
    /// Only shape, name uniqueness and finiteness are checked here; the
    /// fitting routines check estimability.
    pub fn from_columns(columns: &[(String, Vec<f64>)], intercept: bool) -> Result<Self> {
        let n = columns
            .first()
            .map(|c| c.1.len())
            .ok_or_else(|| Error::InvalidDesign("no columns".into()))?;
        let mut names = Vec::new();
        let mut data: Vec<&[f64]> = Vec::new();
        let ones = vec![1.0; n];
        if intercept {
            names.push(INTERCEPT.to_string());
            data.push(&ones);
        }
        for (name, v) in columns {
            if v.len() != n {
                return Err(Error::InvalidDesign(format!(
                    "column `{name}` has {} rows, expected {n}",
                    v.len()
                )));
            }
            names.push(name.clone());
            data.push(v);
        }
        let x = DMatrix::from_fn(n, names.len(), |i, j| data[j][i]);
        Self::new(names, x, intercept)
    }

    pub fn new(names: Vec<String>, x: DMatrix<f64>, has_intercept: bool) -> Result<Self> {
        if names.len() != x.ncols() {
            return Err(Error::InvalidDesign("name count differs from column count".into()));
        }
        let mut seen = HashSet::new();
        for n in &names {
            if !seen.insert(n.as_str()) {
                return Err(Error::InvalidDesign(format!("duplicate column `{n}`")));
            }
        }
        if let Some((j, _)) = x
            .column_iter()
            .enumerate()
            .find(|(_, c)| c.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::InvalidDesign(format!(
                "column `{}` has non-finite values",
                names[j]
            )));
        }
        if has_intercept && (names.first().map(String::as_str) != Some(INTERCEPT)) {
            return Err(Error::InvalidDesign("intercept must be the first column".into()));
        }
        Ok(Self {
            names,
            x,
            has_intercept,
        })
    }

    pub fn from_table(t: &Table, cols: &[&str], intercept: bool) -> Result<Self> {
        let columns: Vec<(String, Vec<f64>)> = cols
            .iter()
            .map(|c| Ok((c.to_string(), t.num(c)?.to_vec())))
            .collect::<Result<_>>()?;
        Self::from_columns(&columns, intercept)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn n_rows(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.x.ncols()
    }

    pub fn has_intercept(&self) -> bool {
        self.has_intercept
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let j = self.index_of(name)?;
        Ok(self.x.column(j).iter().copied().collect())
    }

    /// Copy with one column overwritten (used for counterfactual prediction).
    pub fn with_column(&self, name: &str, values: &[f64]) -> Result<Self> {
        let j = self.index_of(name)?;
        let mut x = self.x.clone();
        for (i, v) in values.iter().enumerate() {
            x[(i, j)] = *v;
        }
        Ok(Self {
            names: self.names.clone(),
            x,
            has_intercept: self.has_intercept,
        })
    }

    /// Checks required before estimation: more rows than columns and no
    /// constant column besides the intercept.
    pub fn check_estimable(&self) -> Result<()> {
        if self.n_rows() <= self.n_cols() {
            return Err(Error::InvalidDesign(format!(
                "{} rows for {} columns",
                self.n_rows(),
                self.n_cols()
            )));
        }
        let start = usize::from(self.has_intercept);
        for j in start..self.n_cols() {
            let c = self.x.column(j);
            let first = c[0];
            if c.iter().all(|v| *v == first) {
                return Err(Error::InvalidDesign(format!("column `{}` is constant", self.names[j])));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    BinaryLogit,
    OrderedLogit,
    Ols,
}

/// Covariance estimator for the coefficient vector.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum Vcov {
    /// Inverse information (MLE) or s²(X'X)⁻¹ (OLS).
    #[default]
    Classical,
    /// White heteroskedasticity-robust with n/(n-p) correction (OLS only;
    /// sandwich for MLE models).
    Hc1,
    /// Cluster-robust sandwich with a G/(G-1) small-sample factor.
    Cluster(Vec<String>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub kind: ModelKind,
    pub names: Vec<String>,
    pub coef: Vec<f64>,
    pub se: Vec<f64>,
    pub z: Vec<f64>,
    /// Ordered model cut points, strictly increasing.
    pub thresholds: Vec<f64>,
    pub threshold_se: Vec<f64>,
    /// Covariance of (coef, thresholds).
    pub cov: DMatrix<f64>,
    pub log_likelihood: f64,
    pub null_log_likelihood: f64,
    pub pseudo_r2: f64,
    pub n_obs: usize,
    pub converged: bool,
    pub iterations: usize,
    /// Residual variance for OLS; NaN otherwise.
    pub sigma2: f64,
}

impl FitResult {
    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    }

    pub fn coef_of(&self, name: &str) -> Result<f64> {
        Ok(self.coef[self.index_of(name)?])
    }

    pub fn se_of(&self, name: &str) -> Result<f64> {
        Ok(self.se[self.index_of(name)?])
    }

    pub fn z_of(&self, name: &str) -> Result<f64> {
        Ok(self.z[self.index_of(name)?])
    }

    pub fn p_of(&self, name: &str) -> Result<f64> {
        Ok(numeric::two_sided_p(self.z_of(name)?))
    }

    pub fn cov_of(&self, a: &str, b: &str) -> Result<f64> {
        Ok(self.cov[(self.index_of(a)?, self.index_of(b)?)])
    }

    /// Normal-approximation confidence interval.
    pub fn ci(&self, name: &str, level: f64) -> Result<(f64, f64)> {
        let i = self.index_of(name)?;
        let q = numeric::normal_quantile(0.5 + level / 2.0);
        Ok((self.coef[i] - q * self.se[i], self.coef[i] + q * self.se[i]))
    }

    /// `term,coef,se,z,p`; ordered-model cut points appear as `cut0`, `cut1`, ...
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["term", "coef", "se", "z", "p"])?;
        let mut row = |term: &str, c: f64, s: f64| -> Result<()> {
            let z = c / s;
            wr.write_record([
                term.to_string(),
                format!("{c}"),
                format!("{s}"),
                format!("{z}"),
                format!("{}", numeric::two_sided_p(z)),
            ])?;
            Ok(())
        };
        for i in 0..self.names.len() {
            row(&self.names[i], self.coef[i], self.se[i])?;
        }
        for (k, (t, s)) in self.thresholds.iter().zip(&self.threshold_se).enumerate() {
            row(&format!("cut{k}"), *t, *s)?;
        }
        wr.flush()?;
        Ok(())
    }

    /// Two-line-per-term text block: coefficient with stars, z in parentheses.
    pub fn report_block(&self, title: &str) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{title}");
        for i in 0..self.names.len() {
            let p = numeric::two_sided_p(self.z[i]);
            let _ = writeln!(s, "  {:<28}{:>10.3}{}", self.names[i], self.coef[i], stars(p));
            let _ = writeln!(s, "  {:<28}{:>10}", "", format!("({:.2})", self.z[i]));
        }
        let _ = writeln!(s, "  {:<28}{:>10}", "N", self.n_obs);
        let label = if self.kind == ModelKind::Ols { "R2" } else { "Pseudo R2" };
        let _ = writeln!(s, "  {:<28}{:>10.3}", label, self.pseudo_r2);
        s
    }
}

fn stars(p: f64) -> &'static str {
    if p < 0.01 {
        "***"
    } else if p < 0.05 {
        "** "
    } else if p < 0.1 {
        "*  "
    } else {
        "   "
    }
}

fn max_abs(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn finalize_se(cov: &DMatrix<f64>, p: usize) -> (Vec<f64>, Vec<f64>) {
    let se: Vec<f64> = (0..cov.nrows()).map(|i| cov[(i, i)].max(0.0).sqrt()).collect();
    (se[..p].to_vec(), se[p..].to_vec())
}

/// Sandwich A⁻¹ B A⁻¹ with B built from per-observation scores.
fn sandwich(bread: &DMatrix<f64>, scores: &DMatrix<f64>, vcov: &Vcov) -> Result<DMatrix<f64>> {
    let n = scores.nrows();
    let k = scores.ncols();
    let meat = match vcov {
        Vcov::Classical => return Ok(bread.clone()),
        Vcov::Hc1 => {
            let mut m = scores.transpose() * scores;
            m *= n as f64 / (n as f64 - k as f64).max(1.0);
            m
        }
        Vcov::Cluster(ids) => {
            if ids.len() != n {
                return Err(Error::InvalidDesign("cluster ids length differs from rows".into()));
            }
            let mut groups: BTreeMap<&str, DVector<f64>> = BTreeMap::new();
            for (i, id) in ids.iter().enumerate() {
                let g = groups.entry(id.as_str()).or_insert_with(|| DVector::zeros(k));
                *g += scores.row(i).transpose();
            }
            let g = groups.len() as f64;
            if g < 2.0 {
                return Err(Error::InvalidDesign(
                    "cluster-robust errors need at least 2 clusters".into(),
                ));
            }
            let mut m = DMatrix::zeros(k, k);
            for s in groups.values() {
                m += s * s.transpose();
            }
            m * (g / (g - 1.0))
        }
    };
    Ok(bread * meat * bread)
}

fn check_binary(y: &[f64]) -> Result<()> {
    if let Some(v) = y.iter().find(|v| **v != 0.0 && **v != 1.0) {
        return Err(Error::InvalidOutcome(format!("binary outcome has value {v}")));
    }
    let ones = y.iter().filter(|v| **v == 1.0).count();
    if ones == 0 || ones == y.len() {
        return Err(Error::DegenerateOutcome);
    }
    Ok(())
}

pub fn logit_loglik(x: &DMatrix<f64>, y: &[f64], beta: &DVector<f64>) -> f64 {
    let eta = x * beta;
    numeric::sum(eta.iter().zip(y).map(|(e, yi)| yi * e - log1p_exp(*e)))
}

pub fn logit_gradient(x: &DMatrix<f64>, y: &[f64], beta: &DVector<f64>) -> DVector<f64> {
    let eta = x * beta;
    let r = DVector::from_iterator(y.len(), eta.iter().zip(y).map(|(e, yi)| yi - sigmoid(*e)));
    x.transpose() * r
}

fn logit_information(x: &DMatrix<f64>, beta: &DVector<f64>) -> DMatrix<f64> {
    let eta = x * beta;
    let mut xw = x.clone();
    for (i, e) in eta.iter().enumerate() {
        let w = logistic_pdf(*e);
        xw.row_mut(i).scale_mut(w);
    }
    x.transpose() * xw
}

fn null_ll_binary(y: &[f64]) -> f64 {
    let n = y.len() as f64;
    let m = y.iter().sum::<f64>() / n;
    n * (m * m.ln() + (1.0 - m) * (1.0 - m).ln())
}

/// Maximum-likelihood binary logit by Newton-Raphson with step halving.
pub fn fit_logit(x: &DesignMatrix, y: &[f64]) -> Result<FitResult> {
    fit_logit_with(x, y, &Vcov::Classical)
}

pub fn fit_logit_with(x: &DesignMatrix, y: &[f64], vcov: &Vcov) -> Result<FitResult> {
    if y.len() != x.n_rows() {
        return Err(Error::InvalidDesign("outcome length differs from rows".into()));
    }
    check_binary(y)?;
    x.check_estimable()?;
    let xm = x.x();
    let p = x.n_cols();
    let mut beta = DVector::zeros(p);
    if x.has_intercept() {
        let m = y.iter().sum::<f64>() / y.len() as f64;
        beta[0] = numeric::logit(m);
    }
    let mut ll = logit_loglik(xm, y, &beta);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < MAX_ITER {
        iterations += 1;
        let g = logit_gradient(xm, y, &beta);
        if max_abs(&g) < TOL_GRAD {
            converged = true;
            break;
        }
        let info = logit_information(xm, &beta);
        let step = numeric::spd_solve(&info, &g).ok_or(Error::SingularHessian)?;
        let mut t = 1.0;
        let (cand, ll_new) = loop {
            let cand = &beta + &step * t;
            let l = logit_loglik(xm, y, &cand);
            if l >= ll - 1e-12 * ll.abs().max(1.0) || t < 1e-10 {
                break (cand, l);
            }
            t *= 0.5;
        };
        let improving = ll_new > ll;
        let eta_max = max_abs(&(xm * &cand));
        if improving && eta_max > SEPARATION_ETA {
            return Err(Error::PerfectSeparation);
        }
        let dll = (ll_new - ll).abs();
        beta = cand;
        ll = ll_new;
        if dll < TOL_LL * ll.abs().max(1.0) {
            converged = true;
            break;
        }
    }
    let info = logit_information(xm, &beta);
    let bread = numeric::spd_inverse(&info).ok_or(Error::SingularHessian)?;
    let cov = match vcov {
        Vcov::Classical => bread,
        _ => {
            let eta = xm * &beta;
            let mut scores = xm.clone();
            for i in 0..scores.nrows() {
                let r = y[i] - sigmoid(eta[i]);
                scores.row_mut(i).scale_mut(r);
            }
            sandwich(&bread, &scores, vcov)?
        }
    };
    let (se, _) = finalize_se(&cov, p);
    let coef: Vec<f64> = beta.iter().copied().collect();
    let z = coef.iter().zip(&se).map(|(c, s)| c / s).collect();
    let ll0 = null_ll_binary(y);
    Ok(FitResult {
        kind: ModelKind::BinaryLogit,
        names: x.names().to_vec(),
        coef,
        se,
        z,
        thresholds: Vec::new(),
        threshold_se: Vec::new(),
        cov,
        log_likelihood: ll,
        null_log_likelihood: ll0,
        pseudo_r2: 1.0 - ll / ll0,
        n_obs: y.len(),
        converged,
        iterations,
        sigma2: f64::NAN,
    })
}

/// Quasi-likelihood logit for outcomes in [0, 1]. Fed expected
/// probabilities it returns the probability limit of the binary fit.
pub fn fit_logit_fractional(x: &DMatrix<f64>, y: &[f64]) -> Result<DVector<f64>> {
    if y.len() != x.nrows() {
        return Err(Error::InvalidDesign("outcome length differs from rows".into()));
    }
    if y.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::InvalidOutcome("fractional outcome outside [0, 1]".into()));
    }
    let mut beta = DVector::zeros(x.ncols());
    let mut ll = logit_loglik(x, y, &beta);
    for _ in 0..MAX_ITER {
        let g = logit_gradient(x, y, &beta);
        if max_abs(&g) < TOL_GRAD * y.len() as f64 {
            break;
        }
        let info = logit_information(x, &beta);
        let step = numeric::spd_solve(&info, &g).ok_or(Error::SingularHessian)?;
        let mut t = 1.0;
        loop {
            let cand = &beta + &step * t;
            let l = logit_loglik(x, y, &cand);
            if l >= ll - 1e-12 * ll.abs().max(1.0) || t < 1e-10 {
                let done = (l - ll).abs() < TOL_LL;
                beta = cand;
                ll = l;
                if done {
                    return Ok(beta);
                }
                break;
            }
            t *= 0.5;
        }
    }
    Ok(beta)
}

/// Validate ordinal codes 0..K-1 and return K.
pub fn ordinal_levels(y: &[f64]) -> Result<usize> {
    let mut max = 0usize;
    for v in y {
        if !(*v >= 0.0) || v.fract() != 0.0 || !v.is_finite() {
            return Err(Error::InvalidOutcome(format!("ordinal outcome has value {v}")));
        }
        max = max.max(*v as usize);
    }
    let k = max + 1;
    if k < 2 {
        return Err(Error::DegenerateOutcome);
    }
    let mut counts = vec![0usize; k];
    for v in y {
        counts[*v as usize] += 1;
    }
    if let Some(level) = counts.iter().position(|c| *c == 0) {
        return Err(Error::SparseLevel(level));
    }
    Ok(k)
}

fn cdf_at(tau: &[f64], k: isize, eta: f64) -> (f64, f64, f64) {
    // (F, f, f') at tau_k - eta, with the infinite ends handled.
    if k < 0 {
        return (0.0, 0.0, 0.0);
    }
    if k as usize >= tau.len() {
        return (1.0, 0.0, 0.0);
    }
    let u = tau[k as usize] - eta;
    let f_ = sigmoid(u);
    let d = f_ * (1.0 - f_);
    (f_, d, d * (1.0 - 2.0 * f_))
}

fn ologit_obs_prob(tau: &[f64], k: usize, eta: f64) -> f64 {
    let hi = if k < tau.len() { sigmoid(tau[k] - eta) } else { 1.0 };
    let lo = if k > 0 { sigmoid(tau[k - 1] - eta) } else { 0.0 };
    hi - lo
}

fn ologit_obs_ll(tau: &[f64], k: usize, eta: f64) -> f64 {
    // Use the complementary form in the upper tail to keep precision.
    if k == 0 {
        return -log1p_exp(eta - tau[0]);
    }
    if k == tau.len() {
        return -log1p_exp(tau[k - 1] - eta);
    }
    ologit_obs_prob(tau, k, eta).max(f64::MIN_POSITIVE).ln()
}

pub fn ologit_loglik(x: &DMatrix<f64>, y: &[f64], beta: &DVector<f64>, tau: &[f64]) -> f64 {
    let eta = x * beta;
    numeric::sum(eta.iter().zip(y).map(|(e, yi)| ologit_obs_ll(tau, *yi as usize, *e)))
}

/// Per-observation score rows for (beta, tau) and, optionally, the summed
/// Hessian of the log-likelihood.
pub fn ologit_derivs(
    x: &DMatrix<f64>,
    y: &[f64],
    beta: &DVector<f64>,
    tau: &[f64],
    want_hessian: bool,
) -> (DMatrix<f64>, Option<DMatrix<f64>>) {
    let n = x.nrows();
    let p = x.ncols();
    let m = tau.len();
    let d = p + m;
    let eta = x * beta;
    let mut scores = DMatrix::zeros(n, d);
    let mut hess = if want_hessian { Some(DMatrix::zeros(d, d)) } else { None };
    for i in 0..n {
        let k = y[i] as usize;
        let (fu, a, a1) = cdf_at(tau, k as isize, eta[i]);
        let (fl, b, b1) = cdf_at(tau, k as isize - 1, eta[i]);
        let prob = (fu - fl).max(f64::MIN_POSITIVE);
        // first derivatives of P with respect to (eta, tau_k, tau_{k-1})
        let dp = [-(a - b), a, -b];
        let g = [dp[0] / prob, dp[1] / prob, dp[2] / prob];
        let xi = x.row(i);
        for j in 0..p {
            scores[(i, j)] = g[0] * xi[j];
        }
        if k < m {
            scores[(i, p + k)] += g[1];
        }
        if k > 0 {
            scores[(i, p + k - 1)] += g[2];
        }
        if let Some(h) = hess.as_mut() {
            // second derivatives of P; off-diagonal tau_k, tau_{k-1} is zero
            let d2 = [[a1 - b1, -a1, b1], [-a1, a1, 0.0], [b1, 0.0, -b1]];
            let mut hl = [[0.0; 3]; 3];
            for r in 0..3 {
                for c in 0..3 {
                    hl[r][c] = d2[r][c] / prob - g[r] * g[c];
                }
            }
            // map the local (eta, tau_k, tau_{k-1}) Hessian onto parameters
            let tk = if k < m { Some(p + k) } else { None };
            let tl = if k > 0 { Some(p + k - 1) } else { None };
            for r in 0..p {
                for c in 0..p {
                    h[(r, c)] += hl[0][0] * xi[r] * xi[c];
                }
                if let Some(t) = tk {
                    h[(r, t)] += hl[0][1] * xi[r];
                    h[(t, r)] += hl[1][0] * xi[r];
                }
                if let Some(t) = tl {
                    h[(r, t)] += hl[0][2] * xi[r];
                    h[(t, r)] += hl[2][0] * xi[r];
                }
            }
            if let Some(t) = tk {
                h[(t, t)] += hl[1][1];
            }
            if let Some(t) = tl {
                h[(t, t)] += hl[2][2];
            }
            if let (Some(a), Some(b)) = (tk, tl) {
                h[(a, b)] += hl[1][2];
                h[(b, a)] += hl[2][1];
            }
        }
    }
    (scores, hess)
}

/// Gradient of the ordered-logit log-likelihood in (beta, tau) order.
pub fn ologit_gradient(x: &DMatrix<f64>, y: &[f64], beta: &DVector<f64>, tau: &[f64]) -> DVector<f64> {
    let (scores, _) = ologit_derivs(x, y, beta, tau, false);
    DVector::from_iterator(
        scores.ncols(),
        (0..scores.ncols()).map(|j| numeric::sum(scores.column(j).iter().copied())),
    )
}

/// Proportional-odds ordered logit. The design must not contain an
/// intercept; the K-1 cut points absorb it.
pub fn fit_ologit(x: &DesignMatrix, y: &[f64]) -> Result<FitResult> {
    fit_ologit_with(x, y, &Vcov::Classical)
}

pub fn fit_ologit_with(x: &DesignMatrix, y: &[f64], vcov: &Vcov) -> Result<FitResult> {
    if x.has_intercept() {
        return Err(Error::InvalidDesign("ordered logit takes no intercept column".into()));
    }
    if y.len() != x.n_rows() {
        return Err(Error::InvalidDesign("outcome length differs from rows".into()));
    }
    let k = ordinal_levels(y)?;
    x.check_estimable()?;
    // iterate on centered columns; the cut points absorb the means
    let means: Vec<f64> = x.x().column_iter().map(|c| c.mean()).collect();
    let centered = DMatrix::from_fn(x.n_rows(), x.n_cols(), |i, j| x.x()[(i, j)] - means[j]);
    let xm = &centered;
    let n = y.len();
    let p = x.n_cols();
    let m = k - 1;
    let mut counts = vec![0usize; k];
    for v in y {
        counts[*v as usize] += 1;
    }
    let mut cum = 0usize;
    let mut tau: Vec<f64> = Vec::with_capacity(m);
    for c in counts.iter().take(m) {
        cum += c;
        tau.push(numeric::logit(cum as f64 / n as f64));
    }
    let mut beta = DVector::zeros(p);
    let mut ll = ologit_loglik(xm, y, &beta, &tau);
    let ll0 = ll;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < MAX_ITER {
        iterations += 1;
        let (scores, hess) = ologit_derivs(xm, y, &beta, &tau, true);
        let g = DVector::from_iterator(
            p + m,
            (0..p + m).map(|j| numeric::sum(scores.column(j).iter().copied())),
        );
        if max_abs(&g) < TOL_GRAD {
            converged = true;
            break;
        }
        let info = -hess.expect("hessian requested");
        let step = numeric::spd_solve(&info, &g).ok_or(Error::SingularHessian)?;
        let mut t = 1.0;
        let (nb, nt, ll_new) = loop {
            let nb = &beta + step.rows(0, p) * t;
            let nt: Vec<f64> = (0..m).map(|j| tau[j] + t * step[p + j]).collect();
            let ordered = nt.windows(2).all(|w| w[1] > w[0]);
            if ordered {
                let l = ologit_loglik(xm, y, &nb, &nt);
                if l >= ll - 1e-12 * ll.abs().max(1.0) || t < 1e-10 {
                    break (nb, nt, l);
                }
            } else if t < 1e-10 {
                break (beta.clone(), tau.clone(), ll);
            }
            t *= 0.5;
        };
        let improving = ll_new > ll;
        // cut points absorb the level of eta, so measure its spread
        let eta = xm * &nb;
        let centre = eta.mean();
        if improving && eta.iter().any(|e| (e - centre).abs() > SEPARATION_ETA) {
            return Err(Error::PerfectSeparation);
        }
        let dll = (ll_new - ll).abs();
        beta = nb;
        tau = nt;
        ll = ll_new;
        if dll < TOL_LL * ll.abs().max(1.0) {
            converged = true;
            break;
        }
    }
    let shift: f64 = means.iter().zip(beta.iter()).map(|(m, b)| m * b).sum();
    let tau: Vec<f64> = tau.iter().map(|t| t + shift).collect();
    let xm = x.x();
    let (scores, hess) = ologit_derivs(xm, y, &beta, &tau, true);
    let bread = numeric::spd_inverse(&(-hess.expect("hessian requested"))).ok_or(Error::SingularHessian)?;
    let cov = sandwich(&bread, &scores, vcov)?;
    let (se, tse) = finalize_se(&cov, p);
    let coef: Vec<f64> = beta.iter().copied().collect();
    let z = coef.iter().zip(&se).map(|(c, s)| c / s).collect();
    Ok(FitResult {
        kind: ModelKind::OrderedLogit,
        names: x.names().to_vec(),
        coef,
        se,
        z,
        thresholds: tau,
        threshold_se: tse,
        cov,
        log_likelihood: ll,
        null_log_likelihood: ll0,
        pseudo_r2: 1.0 - ll / ll0,
        n_obs: n,
        converged,
        iterations,
        sigma2: f64::NAN,
    })
}

/// Least squares with classical, HC1 or cluster-robust covariance.
/// `pseudo_r2` holds the ordinary R².
pub fn fit_ols(x: &DesignMatrix, y: &[f64], vcov: &Vcov) -> Result<FitResult> {
    if y.len() != x.n_rows() {
        return Err(Error::InvalidDesign("outcome length differs from rows".into()));
    }
    if let Some(v) = y.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidOutcome(format!("non-finite outcome {v}")));
    }
    x.check_estimable()?;
    let xm = x.x();
    let n = y.len();
    let p = x.n_cols();
    let yv = DVector::from_column_slice(y);
    let xtx = numeric::gram(xm);
    let xtx_inv = numeric::spd_inverse(&xtx).ok_or_else(|| Error::SingularDesign(x.names().to_vec()))?;
    let beta = &xtx_inv * (xm.transpose() * &yv);
    let resid = &yv - xm * &beta;
    let rss = numeric::sum(resid.iter().map(|e| e * e));
    let sigma2 = rss / (n - p) as f64;
    let cov = match vcov {
        Vcov::Classical => &xtx_inv * sigma2,
        _ => {
            let mut scores = xm.clone();
            for i in 0..n {
                scores.row_mut(i).scale_mut(resid[i]);
            }
            sandwich(&xtx_inv, &scores, vcov)?
        }
    };
    let (se, _) = finalize_se(&cov, p);
    let coef: Vec<f64> = beta.iter().copied().collect();
    let z = coef.iter().zip(&se).map(|(c, s)| c / s).collect();
    let my = numeric::mean(y);
    let tss = numeric::sum(y.iter().map(|v| (v - my) * (v - my)));
    let nf = n as f64;
    let gauss = |ss: f64| -0.5 * nf * ((2.0 * std::f64::consts::PI * ss / nf).ln() + 1.0);
    Ok(FitResult {
        kind: ModelKind::Ols,
        names: x.names().to_vec(),
        coef,
        se,
        z,
        thresholds: Vec::new(),
        threshold_se: Vec::new(),
        cov,
        log_likelihood: gauss(rss),
        null_log_likelihood: gauss(tss),
        pseudo_r2: if tss > 0.0 { 1.0 - rss / tss } else { 0.0 },
        n_obs: n,
        converged: true,
        iterations: 1,
        sigma2,
    })
}

fn check_columns(fit: &FitResult, x: &DesignMatrix) -> Result<()> {
    if fit.names != x.names() {
        return Err(Error::SchemaMismatch(format!(
            "design columns {:?} differ from fitted {:?}",
            x.names(),
            fit.names
        )));
    }
    Ok(())
}

fn linear_index(fit: &FitResult, x: &DesignMatrix) -> DVector<f64> {
    x.x() * DVector::from_column_slice(&fit.coef)
}

/// Category probabilities: binary gives columns (P(y=0), P(y=1)); ordered
/// gives K columns; OLS gives the single fitted value column.
pub fn predict_prob(fit: &FitResult, x: &DesignMatrix) -> Result<DMatrix<f64>> {
    check_columns(fit, x)?;
    let eta = linear_index(fit, x);
    let n = eta.len();
    Ok(match fit.kind {
        ModelKind::BinaryLogit => DMatrix::from_fn(n, 2, |i, j| {
            let p = sigmoid(eta[i]);
            if j == 1 {
                p
            } else {
                1.0 - p
            }
        }),
        ModelKind::OrderedLogit => {
            let k = fit.thresholds.len() + 1;
            DMatrix::from_fn(n, k, |i, j| ologit_obs_prob(&fit.thresholds, j, eta[i]).max(0.0))
        }
        ModelKind::Ols => DMatrix::from_fn(n, 1, |i, _| eta[i]),
    })
}

/// Mean response per row: P(y=1), E[Y] for the ordered model, or x'b.
pub fn predict_mean(fit: &FitResult, x: &DesignMatrix) -> Result<Vec<f64>> {
    let pr = predict_prob(fit, x)?;
    Ok(match fit.kind {
        ModelKind::BinaryLogit => pr.column(1).iter().copied().collect(),
        ModelKind::OrderedLogit => (0..pr.nrows())
            .map(|i| (0..pr.ncols()).map(|k| k as f64 * pr[(i, k)]).sum())
            .collect(),
        ModelKind::Ols => pr.column(0).iter().copied().collect(),
    })
}

fn is_binary_column(v: &[f64]) -> bool {
    v.iter().all(|x| *x == 0.0 || *x == 1.0) && v.contains(&0.0) && v.contains(&1.0)
}

/// Average marginal effect of `var` on the mean response (P(y=1) for the
/// binary model, E[Y] for the ordered model). 0/1 columns use the mean
/// discrete difference; other columns the mean analytic derivative. Other
/// columns, including any interaction built from `var`, are held fixed.
pub fn average_marginal_effect(fit: &FitResult, x: &DesignMatrix, var: &str) -> Result<f64> {
    check_columns(fit, x)?;
    let j = x.index_of(var)?;
    let col = x.column(var)?;
    if is_binary_column(&col) {
        let n = col.len();
        let hi = predict_mean(fit, &x.with_column(var, &vec![1.0; n])?)?;
        let lo = predict_mean(fit, &x.with_column(var, &vec![0.0; n])?)?;
        return Ok(numeric::mean(
            &hi.iter().zip(&lo).map(|(a, b)| a - b).collect::<Vec<_>>(),
        ));
    }
    let b = fit.coef[j];
    let eta = linear_index(fit, x);
    let d: Vec<f64> = match fit.kind {
        ModelKind::BinaryLogit => eta.iter().map(|e| b * logistic_pdf(*e)).collect(),
        ModelKind::OrderedLogit => eta
            .iter()
            .map(|e| b * fit.thresholds.iter().map(|t| logistic_pdf(t - e)).sum::<f64>())
            .collect(),
        ModelKind::Ols => vec![b; eta.len()],
    };
    Ok(numeric::mean(&d))
}

/// Ordered model: average derivative of each category probability.
pub fn category_marginal_effects(fit: &FitResult, x: &DesignMatrix, var: &str) -> Result<Vec<f64>> {
    check_columns(fit, x)?;
    if fit.kind != ModelKind::OrderedLogit {
        return Err(Error::InvalidSpec("category effects need an ordered fit".into()));
    }
    let b = fit.coef[x.index_of(var)?];
    let eta = linear_index(fit, x);
    let tau = &fit.thresholds;
    let k = tau.len() + 1;
    let n = eta.len() as f64;
    Ok((0..k)
        .map(|c| {
            let s = numeric::sum(eta.iter().map(|e| {
                let hi = if c < tau.len() { logistic_pdf(tau[c] - e) } else { 0.0 };
                let lo = if c > 0 { logistic_pdf(tau[c - 1] - e) } else { 0.0 };
                -b * (hi - lo)
            }));
            s / n
        })
        .collect())
}

pub fn mcfadden_r2(ll: f64, ll0: f64) -> f64 {
    1.0 - ll / ll0
}

/// Link used when a model is specified against a household table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutcomeLink {
    #[default]
    Logit,
    Ordered,
    Linear,
}

/// Covariance choice expressed against table columns.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum VcovSpec {
    #[default]
    Classical,
    Hc1,
    Cluster(String),
}

/// Outcome, regressors and link; an intercept is added except for the
/// ordered model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub outcome: String,
    pub regressors: Vec<String>,
    pub link: OutcomeLink,
}

impl ModelSpec {
    pub fn new(outcome: &str, regressors: &[&str], link: OutcomeLink) -> Self {
        Self {
            outcome: outcome.to_string(),
            regressors: regressors.iter().map(|s| s.to_string()).collect(),
            link,
        }
    }

    pub fn columns(&self) -> Vec<&str> {
        std::iter::once(self.outcome.as_str())
            .chain(self.regressors.iter().map(String::as_str))
            .collect()
    }

    pub fn design(&self, data: &Table) -> Result<DesignMatrix> {
        let cols: Vec<&str> = self.regressors.iter().map(String::as_str).collect();
        DesignMatrix::from_table(data, &cols, self.link != OutcomeLink::Ordered)
    }
}

/// Fit `spec` on the complete cases of `data`.
pub fn fit_model(data: &Table, spec: &ModelSpec, vcov: &VcovSpec) -> Result<FitResult> {
    let data = data.complete_cases(&spec.columns())?;
    let x = spec.design(&data)?;
    let y = data.num(&spec.outcome)?;
    let v = match vcov {
        VcovSpec::Classical => Vcov::Classical,
        VcovSpec::Hc1 => Vcov::Hc1,
        VcovSpec::Cluster(c) => Vcov::Cluster(data.text(c)?),
    };
    match spec.link {
        OutcomeLink::Logit => fit_logit_with(&x, y, &v),
        OutcomeLink::Ordered => fit_ologit_with(&x, y, &v),
        OutcomeLink::Linear => fit_ols(&x, y, &v),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn design(cols: Vec<(&str, Vec<f64>)>, intercept: bool) -> DesignMatrix {
        let c: Vec<(String, Vec<f64>)> = cols.into_iter().map(|(n, v)| (n.to_string(), v)).collect();
        DesignMatrix::from_columns(&c, intercept).unwrap()
    }

    #[test]
    fn intercept_only_closed_form() {
        let y: Vec<f64> = (0..100).map(|i| if i < 30 { 1.0 } else { 0.0 }).collect();
        let x = DesignMatrix::new(vec![INTERCEPT.into()], DMatrix::from_element(100, 1, 1.0), true).unwrap();
        let f = fit_logit(&x, &y).unwrap();
        assert!((f.coef[0] - (0.3f64 / 0.7).ln()).abs() < 1e-8);
        assert!(f.pseudo_r2.abs() < 1e-12);
    }

    #[test]
    fn single_class_is_degenerate() {
        let x = design(vec![("a", vec![1.0, 2.0, 3.0, 4.0])], true);
        assert_eq!(fit_logit(&x, &[1.0; 4]).unwrap_err(), Error::DegenerateOutcome);
    }

    #[test]
    fn separated_data_is_detected() {
        let xs: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let y: Vec<f64> = xs.iter().map(|v| if *v >= 10.0 { 1.0 } else { 0.0 }).collect();
        let x = design(vec![("a", xs)], true);
        assert_eq!(fit_logit(&x, &y).unwrap_err(), Error::PerfectSeparation);
    }

    #[test]
    fn ordered_rows_sum_to_one() {
        let xs: Vec<f64> = (0..60).map(|i| ((i * 37) % 11) as f64 / 3.0).collect();
        let y: Vec<f64> = (0..60).map(|i| ((i * 7 + (i * 37) % 11) % 3) as f64).collect();
        let x = design(vec![("a", xs)], false);
        let f = fit_ologit(&x, &y).unwrap();
        let pr = predict_prob(&f, &x).unwrap();
        for i in 0..pr.nrows() {
            assert!((pr.row(i).sum() - 1.0).abs() < 1e-12);
        }
        assert!(f.thresholds.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn sparse_level_and_bad_codes() {
        assert_eq!(ordinal_levels(&[0.0, 2.0, 2.0]), Err(Error::SparseLevel(1)));
        assert!(matches!(ordinal_levels(&[0.0, 1.5]), Err(Error::InvalidOutcome(_))));
    }

    #[test]
    fn schema_mismatch_on_predict() {
        let xs: Vec<f64> = (0..30).map(|i| (i % 7) as f64).collect();
        let y: Vec<f64> = (0..30).map(|i| ((i * 5 + i % 7) % 2) as f64).collect();
        let x = design(vec![("a", xs.clone())], true);
        let f = fit_logit(&x, &y).unwrap();
        let other = design(vec![("b", xs)], true);
        assert!(matches!(predict_prob(&f, &other), Err(Error::SchemaMismatch(_))));
    }
}
