//! Two-mediator path model: linear mediator equations, logit (or linear)
//! outcome equation, product-of-coefficients decomposition and a seeded
//! case-resampling bootstrap.

use std::collections::BTreeMap;
use std::io::Write;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::glm::{self, DesignMatrix, FitResult, Vcov};
use crate::numeric;
use crate::par;
use crate::table::Table;

pub use crate::glm::OutcomeLink;

#[derive(Debug, Clone, PartialEq)]
pub struct MediationSpec {
    pub treatment: String,
    pub mediators: [String; 2],
    pub outcome: String,
    pub controls: Vec<String>,
    /// `Logit` (default) or `Linear`; the ordered link is not supported here.
    pub outcome_link: OutcomeLink,
}

impl MediationSpec {
    pub fn validate(&self) -> Result<()> {
        if self.mediators.contains(&self.treatment) {
            return Err(Error::InvalidSpec("treatment is also a mediator".into()));
        }
        if self.mediators[0] == self.mediators[1] {
            return Err(Error::InvalidSpec("mediators must differ".into()));
        }
        if let Some(c) = self
            .controls
            .iter()
            .find(|c| self.mediators.contains(c) || **c == self.treatment)
        {
            return Err(Error::InvalidSpec(format!(
                "`{c}` is both a control and a path variable"
            )));
        }
        if self.outcome_link == OutcomeLink::Ordered {
            return Err(Error::InvalidSpec("outcome link must be logit or linear".into()));
        }
        Ok(())
    }

    pub fn columns(&self) -> Vec<&str> {
        let mut v = vec![self.outcome.as_str(), self.treatment.as_str()];
        v.extend(self.mediators.iter().map(String::as_str));
        v.extend(self.controls.iter().map(String::as_str));
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathEstimate {
    pub coef: f64,
    pub se: f64,
    pub z: f64,
}

impl PathEstimate {
    fn from_fit(fit: &FitResult, name: &str) -> Result<Self> {
        Ok(Self {
            coef: fit.coef_of(name)?,
            se: fit.se_of(name)?,
            z: fit.z_of(name)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MediationDecomposition {
    pub a1: PathEstimate,
    pub a2: PathEstimate,
    pub b1: PathEstimate,
    pub b2: PathEstimate,
    pub c_prime: PathEstimate,
    pub indirect_1: f64,
    pub indirect_2: f64,
    pub total_indirect: f64,
    pub total_effect: f64,
    pub n_obs: usize,
}

/// Quantities carried through the bootstrap, in report order.
pub const QUANTITIES: [&str; 9] = [
    "a1",
    "a2",
    "b1",
    "b2",
    "c_prime",
    "indirect_1",
    "indirect_2",
    "total_indirect",
    "total_effect",
];

const UNDEFINED_TOTAL: f64 = 1e-12;

impl MediationDecomposition {
    fn assemble(
        a1: PathEstimate,
        a2: PathEstimate,
        b1: PathEstimate,
        b2: PathEstimate,
        c: PathEstimate,
        n: usize,
    ) -> Self {
        let indirect_1 = a1.coef * b1.coef;
        let indirect_2 = a2.coef * b2.coef;
        let total_indirect = indirect_1 + indirect_2;
        Self {
            a1,
            a2,
            b1,
            b2,
            c_prime: c,
            indirect_1,
            indirect_2,
            total_indirect,
            total_effect: c.coef + total_indirect,
            n_obs: n,
        }
    }

    pub fn values(&self) -> [f64; 9] {
        [
            self.a1.coef,
            self.a2.coef,
            self.b1.coef,
            self.b2.coef,
            self.c_prime.coef,
            self.indirect_1,
            self.indirect_2,
            self.total_indirect,
            self.total_effect,
        ]
    }

    pub fn value(&self, quantity: &str) -> Option<f64> {
        QUANTITIES.iter().position(|q| *q == quantity).map(|i| self.values()[i])
    }

    /// indirect / total effect, undefined when the total is numerically 0.
    pub fn proportion(&self, indirect: f64) -> Option<f64> {
        (self.total_effect.abs() >= UNDEFINED_TOTAL).then(|| indirect / self.total_effect)
    }

    /// indirect / total indirect effect.
    pub fn share_of_indirect(&self, indirect: f64) -> Option<f64> {
        (self.total_indirect.abs() >= UNDEFINED_TOTAL).then(|| indirect / self.total_indirect)
    }
}

/// Pre-built design matrices so that bootstrap replicates only select rows.
struct Prepared {
    med_names: Vec<String>,
    out_names: Vec<String>,
    x_med: DMatrix<f64>,
    x_out: DMatrix<f64>,
    m1: Vec<f64>,
    m2: Vec<f64>,
    y: Vec<f64>,
    clusters: Option<Vec<String>>,
}

fn prepare(data: &Table, spec: &MediationSpec, cluster: Option<&str>) -> Result<Prepared> {
    spec.validate()?;
    let data = data.complete_cases(&spec.columns())?;
    let n = data.n_rows();
    let p_out = spec.controls.len() + 4;
    if n <= p_out + 10 {
        return Err(Error::InsufficientData(format!(
            "{n} complete cases for {p_out} outcome columns"
        )));
    }
    let mut med_cols: Vec<(String, Vec<f64>)> = vec![(spec.treatment.clone(), data.num(&spec.treatment)?.to_vec())];
    for c in &spec.controls {
        med_cols.push((c.clone(), data.num(c)?.to_vec()));
    }
    let mut out_cols = med_cols.clone();
    out_cols.insert(1, (spec.mediators[0].clone(), data.num(&spec.mediators[0])?.to_vec()));
    out_cols.insert(2, (spec.mediators[1].clone(), data.num(&spec.mediators[1])?.to_vec()));
    let med = DesignMatrix::from_columns(&med_cols, true)?;
    let out = DesignMatrix::from_columns(&out_cols, true)?;
    Ok(Prepared {
        med_names: med.names().to_vec(),
        out_names: out.names().to_vec(),
        x_med: med.x().clone(),
        x_out: out.x().clone(),
        m1: data.num(&spec.mediators[0])?.to_vec(),
        m2: data.num(&spec.mediators[1])?.to_vec(),
        y: data.num(&spec.outcome)?.to_vec(),
        clusters: cluster.map(|c| data.text(c)).transpose()?,
    })
}

fn singular(names: &[String]) -> impl Fn(Error) -> Error + '_ {
    move |e| match e {
        Error::SingularHessian | Error::InvalidDesign(_) => Error::SingularDesign(names.to_vec()),
        other => other,
    }
}

fn fit_rows(prep: &Prepared, spec: &MediationSpec, rows: Option<&[usize]>) -> Result<MediationDecomposition> {
    let pick = |v: &[f64]| -> Vec<f64> {
        match rows {
            Some(r) => r.iter().map(|&i| v[i]).collect(),
            None => v.to_vec(),
        }
    };
    let (xm, xo) = match rows {
        Some(r) => (prep.x_med.select_rows(r), prep.x_out.select_rows(r)),
        None => (prep.x_med.clone(), prep.x_out.clone()),
    };
    let med = DesignMatrix::new(prep.med_names.clone(), xm, true)?;
    let out = DesignMatrix::new(prep.out_names.clone(), xo, true)?;
    let (m1, m2, y) = (pick(&prep.m1), pick(&prep.m2), pick(&prep.y));
    let f1 = glm::fit_ols(&med, &m1, &Vcov::Classical).map_err(singular(&prep.med_names))?;
    let f2 = glm::fit_ols(&med, &m2, &Vcov::Classical).map_err(singular(&prep.med_names))?;
    let fy = match spec.outcome_link {
        OutcomeLink::Linear => glm::fit_ols(&out, &y, &Vcov::Classical),
        _ => glm::fit_logit(&out, &y),
    }
    .map_err(singular(&prep.out_names))?;
    let t = &spec.treatment;
    Ok(MediationDecomposition::assemble(
        PathEstimate::from_fit(&f1, t)?,
        PathEstimate::from_fit(&f2, t)?,
        PathEstimate::from_fit(&fy, &spec.mediators[0])?,
        PathEstimate::from_fit(&fy, &spec.mediators[1])?,
        PathEstimate::from_fit(&fy, t)?,
        y.len(),
    ))
}

/// Fit the three equations on the complete cases of `data`.
pub fn fit_mediation(data: &Table, spec: &MediationSpec) -> Result<MediationDecomposition> {
    let prep = prepare(data, spec, None)?;
    fit_rows(&prep, spec, None)
}

/// Treatment coefficient from a regression of the outcome on treatment and
/// controls only (the "total effect" regression).
pub fn total_effect_regression(data: &Table, spec: &MediationSpec) -> Result<FitResult> {
    let data = data.complete_cases(&spec.columns())?;
    let mut regs = vec![spec.treatment.as_str()];
    regs.extend(spec.controls.iter().map(String::as_str));
    let x = DesignMatrix::from_table(&data, &regs, true)?;
    let y = data.num(&spec.outcome)?;
    match spec.outcome_link {
        OutcomeLink::Linear => glm::fit_ols(&x, y, &Vcov::Classical),
        _ => glm::fit_logit(&x, y),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapOptions {
    pub replicates: usize,
    pub seed: u64,
    pub level: f64,
    /// Resample whole clusters identified by this column instead of rows.
    pub cluster: Option<String>,
}

impl Default for BootstrapOptions {
    fn default() -> Self {
        Self {
            replicates: 5000,
            seed: 0,
            level: 0.95,
            cluster: None,
        }
    }
}

pub const MIN_REPLICATES: usize = 100;
const FAILURE_WARN_SHARE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BootstrapCI {
    pub point: f64,
    pub lo: f64,
    pub hi: f64,
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapResult {
    pub point: MediationDecomposition,
    pub replicates: usize,
    pub seed: u64,
    pub level: f64,
    pub failures: usize,
    /// More than 1% of replicates failed.
    pub warning: bool,
    /// Sorted successful replicate draws per quantity.
    draws: BTreeMap<&'static str, Vec<f64>>,
}

impl BootstrapResult {
    pub fn ci(&self, quantity: &str) -> Option<BootstrapCI> {
        self.ci_at(quantity, self.level)
    }

    /// Percentile interval at any nominal level from the stored draws.
    pub fn ci_at(&self, quantity: &str, level: f64) -> Option<BootstrapCI> {
        let d = self.draws.get(quantity)?;
        let alpha = (1.0 - level) / 2.0;
        Some(BootstrapCI {
            point: self.point.value(quantity)?,
            lo: numeric::quantile_sorted(d, alpha),
            hi: numeric::quantile_sorted(d, 1.0 - alpha),
            se: numeric::sample_sd(d),
        })
    }

    pub fn successes(&self) -> usize {
        self.replicates - self.failures
    }
}

/// Replicate `r` draws from its own ChaCha stream keyed by (seed, r), so
/// any replicate can be reproduced in isolation.
pub fn replicate_rng(seed: u64, r: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(r as u64);
    rng
}

fn resample(prep: &Prepared, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = prep.y.len();
    match &prep.clusters {
        None => (0..n).map(|_| rng.random_range(0..n)).collect(),
        Some(ids) => {
            let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
            for (i, id) in ids.iter().enumerate() {
                groups.entry(id.as_str()).or_default().push(i);
            }
            let g: Vec<&Vec<usize>> = groups.values().collect();
            let mut rows = Vec::with_capacity(n);
            for _ in 0..g.len() {
                rows.extend_from_slice(g[rng.random_range(0..g.len())]);
            }
            rows
        }
    }
}

/// Case-resampling percentile bootstrap of the full system.
pub fn bootstrap_mediation(data: &Table, spec: &MediationSpec, opts: &BootstrapOptions) -> Result<BootstrapResult> {
    if opts.replicates < MIN_REPLICATES {
        return Err(Error::InvalidSpec(format!(
            "bootstrap needs at least {MIN_REPLICATES} replicates, got {}",
            opts.replicates
        )));
    }
    if !(opts.level > 0.0 && opts.level < 1.0) {
        return Err(Error::InvalidSpec(format!(
            "confidence level {} outside (0, 1)",
            opts.level
        )));
    }
    let prep = prepare(data, spec, opts.cluster.as_deref())?;
    let point = fit_rows(&prep, spec, None)?;
    let reps: Vec<Option<[f64; 9]>> = par::map_indexed(opts.replicates, |r| {
        let mut rng = replicate_rng(opts.seed, r);
        let rows = resample(&prep, &mut rng);
        fit_rows(&prep, spec, Some(&rows)).ok().map(|d| d.values())
    });
    let ok: Vec<[f64; 9]> = reps.iter().flatten().copied().collect();
    if ok.is_empty() {
        return Err(Error::BootstrapCollapse);
    }
    let failures = opts.replicates - ok.len();
    let draws = QUANTITIES
        .iter()
        .enumerate()
        .map(|(q, name)| {
            (
                *name,
                numeric::sorted_copy(&ok.iter().map(|v| v[q]).collect::<Vec<_>>()),
            )
        })
        .collect();
    Ok(BootstrapResult {
        point,
        replicates: opts.replicates,
        seed: opts.seed,
        level: opts.level,
        failures,
        warning: failures as f64 > FAILURE_WARN_SHARE * opts.replicates as f64,
        draws,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_else(|| "NA".into())
}

/// Path panel: `path,coef,z,se`.
pub fn write_paths_csv<W: Write>(dec: &MediationDecomposition, w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["path", "coef", "z", "se"])?;
    for (name, p) in [
        ("a1", dec.a1),
        ("a2", dec.a2),
        ("b1", dec.b1),
        ("b2", dec.b2),
        ("c_prime", dec.c_prime),
    ] {
        wr.write_record([
            name.to_string(),
            format!("{}", p.coef),
            format!("{}", p.z),
            format!("{}", p.se),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

/// Effect panel: `path,indirect,boot_se,ci_lo,ci_hi,proportion` plus a
/// `share_of_indirect` column. Proportions are indirect / total effect;
/// undefined ratios print as `NA`.
pub fn decomposition_report<W: Write>(
    dec: &MediationDecomposition,
    boot: Option<&BootstrapResult>,
    w: W,
) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record([
        "path",
        "indirect",
        "boot_se",
        "ci_lo",
        "ci_hi",
        "proportion",
        "share_of_indirect",
    ])?;
    let rows = [
        ("indirect_1", dec.indirect_1, true),
        ("indirect_2", dec.indirect_2, true),
        ("total_indirect", dec.total_indirect, true),
        ("c_prime", dec.c_prime.coef, false),
        ("total_effect", dec.total_effect, false),
    ];
    for (name, v, indirect) in rows {
        let ci = boot.and_then(|b| b.ci(name));
        let proportion = dec.proportion(v);
        let share = if indirect { dec.share_of_indirect(v) } else { None };
        wr.write_record([
            name.to_string(),
            format!("{v}"),
            opt(ci.map(|c| c.se)),
            opt(ci.map(|c| c.lo)),
            opt(ci.map(|c| c.hi)),
            opt(proportion),
            opt(share),
        ])?;
    }
    wr.flush()?;
    Ok(())
}
