use std::collections::BTreeMap;
use std::fmt::{Display, Write as _};

use crate::error::Result;
use crate::glm::{fit_model, fit_ols, DesignMatrix, ModelSpec, OutcomeLink, Vcov, VcovSpec};
use crate::mediation::{fit_mediation, MediationSpec};
use crate::moderation::{fit_interaction, interaction_name, ModerationSpec};
use crate::numeric::normal_quantile;
use crate::panel;
use crate::table::Table;

/// Flat `key = value` record of every generating parameter.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TruthManifest {
    entries: BTreeMap<String, String>,
}

impl TruthManifest {
    pub fn set(&mut self, key: &str, value: impl Display) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn get_f64(&self, key: &str) -> Option<f64> {
        self.get(key)?.parse().ok()
    }

    pub fn remove(&mut self, key: &str) -> Option<String> {
        self.entries.remove(key)
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    /// Lines without ` = ` and `#` comments are ignored.
    pub fn parse(src: &str) -> Self {
        let entries = src
            .lines()
            .filter(|l| !l.trim_start().starts_with('#'))
            .filter_map(|l| l.split_once(" = "))
            .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
            .collect();
        Self { entries }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub name: String,
    pub estimate: f64,
    pub se: f64,
}

impl Estimate {
    pub fn new(name: &str, estimate: f64, se: f64) -> Self {
        Self {
            name: name.to_string(),
            estimate,
            se,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryRow {
    pub name: String,
    pub truth: Option<f64>,
    pub estimate: f64,
    pub lo: f64,
    pub hi: f64,
    /// `None` when the manifest has no truth for this parameter.
    pub covered: Option<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryReport {
    pub rows: Vec<RecoveryRow>,
    pub checked: usize,
    pub covered: usize,
}

impl RecoveryReport {
    pub fn coverage(&self) -> Option<f64> {
        (self.checked > 0).then(|| self.covered as f64 / self.checked as f64)
    }

    pub fn row(&self, name: &str) -> Option<&RecoveryRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("parameter,truth,estimate,ci_lo,ci_hi,covered\n");
        for r in &self.rows {
            let truth = r.truth.map(|t| t.to_string()).unwrap_or_else(|| "NA".into());
            let cov = match r.covered {
                Some(true) => "yes",
                Some(false) => "no",
                None => "unchecked",
            };
            let _ = writeln!(s, "{},{},{},{},{},{}", r.name, truth, r.estimate, r.lo, r.hi, cov);
        }
        s
    }
}

/// Wald intervals at `level` for each estimate, checked against the
/// manifest entry of the same name.
pub fn oracle_report(manifest: &TruthManifest, estimates: &[Estimate], level: f64) -> RecoveryReport {
    let zc = normal_quantile(0.5 + level / 2.0);
    let rows: Vec<RecoveryRow> = estimates
        .iter()
        .map(|e| {
            let (lo, hi) = (e.estimate - zc * e.se, e.estimate + zc * e.se);
            let truth = manifest.get_f64(&e.name);
            RecoveryRow {
                name: e.name.clone(),
                truth,
                estimate: e.estimate,
                lo,
                hi,
                covered: truth.map(|t| t >= lo && t <= hi),
            }
        })
        .collect();
    let checked = rows.iter().filter(|r| r.covered.is_some()).count();
    let covered = rows.iter().filter(|r| r.covered == Some(true)).count();
    RecoveryReport { rows, checked, covered }
}

/// Fit the headline models on a prepared household table and name the
/// estimates after the manifest keys: baseline logit, the mediation
/// system, the interaction logit with standardized social capital, and
/// the ordered breadth model.
pub fn standard_estimates(data: &Table) -> Result<Vec<Estimate>> {
    let controls: Vec<String> = panel::CONTROLS.iter().map(|s| s.to_string()).collect();
    let mut regs = vec![panel::WASHING];
    regs.extend(panel::CONTROLS);
    let vc = VcovSpec::Classical;

    let base = fit_model(data, &ModelSpec::new(panel::USAGE, &regs, OutcomeLink::Logit), &vc)?;
    let med = fit_mediation(
        data,
        &MediationSpec {
            treatment: panel::WASHING.into(),
            mediators: [panel::KNOWLEDGE.into(), panel::RISK.into()],
            outcome: panel::USAGE.into(),
            controls: controls.clone(),
            outcome_link: OutcomeLink::Logit,
        },
    )?;
    let inter = fit_interaction(
        data,
        &ModerationSpec {
            treatment: panel::WASHING.into(),
            moderator: panel::SOCIAL_CAPITAL_STD.into(),
            outcome: panel::USAGE.into(),
            controls,
            center_inputs: false,
            link: OutcomeLink::Logit,
        },
    )?;
    let breadth = fit_model(data, &ModelSpec::new(panel::BREADTH, &regs, OutcomeLink::Ordered), &vc)?;
    let iname = interaction_name(panel::WASHING, panel::SOCIAL_CAPITAL_STD);
    Ok(vec![
        Estimate::new("washing", base.coef_of(panel::WASHING)?, base.se_of(panel::WASHING)?),
        Estimate::new("a1", med.a1.coef, med.a1.se),
        Estimate::new("a2", med.a2.coef, med.a2.se),
        Estimate::new("b1", med.b1.coef, med.b1.se),
        Estimate::new("b2", med.b2.coef, med.b2.se),
        Estimate::new("c_prime", med.c_prime.coef, med.c_prime.se),
        Estimate::new("interaction", inter.coef_of(&iname)?, inter.se_of(&iname)?),
        Estimate::new(
            "social_capital",
            inter.coef_of(panel::SOCIAL_CAPITAL_STD)?,
            inter.se_of(panel::SOCIAL_CAPITAL_STD)?,
        ),
        Estimate::new(
            "breadth_washing",
            breadth.coef_of(panel::WASHING)?,
            breadth.se_of(panel::WASHING)?,
        ),
    ])
}

/// Generator self-test: least squares of each mediator on washing and the
/// controls must recover `a1` and `a2` from the manifest.
pub fn mediator_self_test(data: &Table, manifest: &TruthManifest) -> Result<RecoveryReport> {
    let mut cols = vec![panel::WASHING];
    cols.extend(panel::CONTROLS);
    let x = DesignMatrix::from_table(data, &cols, true)?;
    let mut est = Vec::new();
    for (name, m) in [("a1", panel::KNOWLEDGE), ("a2", panel::RISK)] {
        let f = fit_ols(&x, data.num(m)?, &Vcov::Classical)?;
        est.push(Estimate::new(
            name,
            f.coef_of(panel::WASHING)?,
            f.se_of(panel::WASHING)?,
        ));
    }
    Ok(oracle_report(manifest, &est, 0.95))
}
