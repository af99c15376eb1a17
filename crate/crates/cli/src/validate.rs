//! Schema checks on the input files before any stage runs.
//!
//! Out-of-range values are violations: listed with their file line and
//! dropped, unless they exceed the configured share, which aborts the run.
//! Negative income, age outside [18, 100] and missing key variables are
//! exclusions: dropped and counted.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use washgap::capability::read_capability_csv;
use washgap::corpus_text::{load_lexicon, parse_doc_name};
use washgap::panel;
use washgap::table::Table;

use crate::config::{Inputs, RunConfig};
use crate::error::Result;
use crate::output::OutDir;

pub const CLEAN_HOUSEHOLDS: &str = "validation/households.csv";

/// Concrete input paths after the datagen block has been resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct InputPaths {
    pub lexicon: Option<PathBuf>,
    pub corpus_dir: PathBuf,
    pub capability: PathBuf,
    pub firms: PathBuf,
    pub households: PathBuf,
    pub platform_usage: Option<PathBuf>,
    pub usage_rates: Option<PathBuf>,
}

impl InputPaths {
    pub fn from_inputs(i: &Inputs) -> Self {
        Self {
            lexicon: i.lexicon.clone(),
            corpus_dir: i.corpus_dir.clone(),
            capability: i.capability.clone(),
            firms: i.firms.clone(),
            households: i.households.clone(),
            platform_usage: i.platform_usage.clone(),
            usage_rates: i.usage_rates.clone(),
        }
    }

    /// The bundle layout written by `generate`.
    pub fn bundle(dir: &Path) -> Self {
        Self {
            lexicon: Some(dir.join("lexicon.txt")),
            corpus_dir: dir.join("corpus"),
            capability: dir.join("capability.csv"),
            firms: dir.join("firms.csv"),
            households: dir.join("households.csv"),
            platform_usage: Some(dir.join("platform_usage.csv")),
            usage_rates: Some(dir.join("usage_rates.csv")),
        }
    }

    /// Role name and path of every file that exists.
    pub fn roles(&self) -> Vec<(&'static str, &Path)> {
        let mut v: Vec<(&'static str, &Path)> = vec![
            ("corpus_dir", &self.corpus_dir),
            ("capability", &self.capability),
            ("firms", &self.firms),
            ("households", &self.households),
        ];
        if let Some(p) = &self.lexicon {
            v.push(("lexicon", p));
        }
        if let Some(p) = &self.platform_usage {
            v.push(("platform_usage", p));
        }
        if let Some(p) = &self.usage_rates {
            v.push(("usage_rates", p));
        }
        v
    }
}

pub fn input_paths(cfg: &RunConfig, out: &Path) -> InputPaths {
    match &cfg.inputs {
        Some(i) => InputPaths::from_inputs(i),
        None => InputPaths::bundle(&out.join("data")),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub file: String,
    pub line: u64,
    pub column: String,
    pub value: String,
    pub rule: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub household_rows: usize,
    pub kept_rows: usize,
    pub violations: Vec<Violation>,
    /// Exclusion rule → dropped rows.
    pub exclusions: BTreeMap<String, usize>,
    pub capability_rows: usize,
    pub problems: Vec<String>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.problems.is_empty()
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "household rows: {}", self.household_rows);
        let _ = writeln!(s, "kept rows: {}", self.kept_rows);
        let rows: BTreeSet<(&str, u64)> = self.violations.iter().map(|v| (v.file.as_str(), v.line)).collect();
        let _ = writeln!(s, "rows with schema violations: {}", rows.len());
        for (rule, n) in &self.exclusions {
            let _ = writeln!(s, "excluded ({rule}): {n}");
        }
        let _ = writeln!(s, "capability rows: {}", self.capability_rows);
        for v in &self.violations {
            let _ = writeln!(
                s,
                "  {} line {}: {} = `{}` ({})",
                v.file, v.line, v.column, v.value, v.rule
            );
        }
        if self.passed() {
            let _ = writeln!(s, "status: passed");
        } else {
            for p in &self.problems {
                let _ = writeln!(s, "error: {p}");
            }
            let _ = writeln!(s, "status: failed");
        }
        s
    }

    fn write_violations(&self, w: &mut Vec<u8>) -> washgap::Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["file", "line", "column", "value", "rule"])?;
        for v in &self.violations {
            wr.write_record([
                v.file.clone(),
                v.line.to_string(),
                v.column.clone(),
                v.value.clone(),
                v.rule.clone(),
            ])?;
        }
        wr.flush().map_err(|e| washgap::Error::Io(e.to_string()))?;
        Ok(())
    }
}

/// Columns built during preparation; they need not be in the household file.
fn derived(cfg: &RunConfig) -> HashSet<String> {
    let mut d: HashSet<String> = [
        panel::WASHING,
        panel::INDUSTRY_MEAN,
        panel::FIRM_AGE,
        panel::LN_INCOME,
        panel::LN_WEALTH,
        panel::LN_GDP,
        panel::SOCIAL_CAPITAL_STD,
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    d.insert(cfg.columns.moderator_std());
    d
}

#[derive(Debug, Clone, Copy)]
enum Range {
    Binary,
    Integer(f64, f64),
    Closed(f64, f64),
    NonNegative,
    Any,
}

impl Range {
    fn check(&self, v: f64) -> Option<String> {
        let ok = match *self {
            Range::Binary => v == 0.0 || v == 1.0,
            Range::Integer(lo, hi) => v.fract() == 0.0 && v >= lo && v <= hi,
            Range::Closed(lo, hi) => v >= lo && v <= hi,
            Range::NonNegative => v >= 0.0,
            Range::Any => v.is_finite(),
        };
        if ok {
            return None;
        }
        Some(match *self {
            Range::Binary => "must be 0 or 1".into(),
            Range::Integer(lo, hi) => format!("must be an integer in {lo}..{hi}"),
            Range::Closed(lo, hi) => format!("must lie in [{lo}, {hi}]"),
            Range::NonNegative => "must be non-negative".into(),
            Range::Any => "must be finite".into(),
        })
    }
}

fn is_missing(c: &str) -> bool {
    let c = c.trim();
    c.is_empty() || c.eq_ignore_ascii_case("na") || c.eq_ignore_ascii_case("nan")
}

/// Household columns the run reads, with their numeric range.
fn household_schema(cfg: &RunConfig) -> (Vec<(String, Range)>, Vec<String>) {
    let c = &cfg.columns;
    let mut numeric: Vec<(String, Range)> = vec![
        (c.usage.clone(), Range::Binary),
        (c.breadth.clone(), Range::Integer(0.0, 7.0)),
        (c.mediators[0].clone(), Range::Closed(0.0, 4.0)),
        (c.mediators[1].clone(), Range::Closed(0.0, 3.0)),
        (c.moderator.clone(), Range::NonNegative),
        (panel::AGE.into(), Range::Any),
        (panel::INCOME.into(), Range::Any),
        (panel::NET_ASSETS.into(), Range::Any),
        (panel::GDP.into(), Range::Any),
    ];
    let text = vec![panel::HOUSEHOLD_ID.to_string(), panel::FIRM_ID.to_string()];
    let d = derived(cfg);
    let mut extra: Vec<&String> = c.controls.iter().chain(&c.instruments).collect();
    extra.extend(cfg.moderation.dimensions.iter().map(|d| &d.column));
    for name in extra {
        if !d.contains(name) && !numeric.iter().any(|(n, _)| n == name) {
            numeric.push((name.clone(), Range::Any));
        }
    }
    (numeric, text)
}

fn exclusion(col: &str, v: f64) -> Option<&'static str> {
    match col {
        panel::INCOME if v < 0.0 => Some("negative income"),
        panel::AGE if !(18.0..=100.0).contains(&v) => Some("age outside [18, 100]"),
        _ => None,
    }
}

/// Check every input file and write the cleaned household table plus the
/// validation report under `validation/`.
pub fn validate_inputs(cfg: &RunConfig, paths: &InputPaths, out: &mut OutDir) -> Result<ValidationReport> {
    let mut rep = ValidationReport::default();
    let share = cfg.validation.max_violation_share;

    if let Some(p) = &paths.lexicon {
        if let Err(e) = load_lexicon(p) {
            rep.problems.push(format!("lexicon {}: {e}", p.display()));
        }
    }
    match std::fs::read_dir(&paths.corpus_dir) {
        Ok(rd) => {
            let docs = rd
                .filter_map(|e| e.ok())
                .filter(|e| parse_doc_name(&e.file_name().to_string_lossy()).is_some())
                .count();
            if docs == 0 {
                rep.problems.push(format!(
                    "corpus {}: no <firm>_<year>.txt documents",
                    paths.corpus_dir.display()
                ));
            }
        }
        Err(e) => rep.problems.push(format!("corpus {}: {e}", paths.corpus_dir.display())),
    }

    let firm_ids: Option<HashSet<String>> = match std::fs::File::open(&paths.firms)
        .map_err(|e| e.to_string())
        .and_then(|f| panel::read_firms_csv(f).map_err(|e| e.to_string()))
    {
        Ok(f) => Some(f.into_iter().map(|f| f.firm_id).collect()),
        Err(e) => {
            rep.problems.push(format!("firms {}: {e}", paths.firms.display()));
            None
        }
    };

    match std::fs::File::open(&paths.capability) {
        Ok(f) => match read_capability_csv(f) {
            Ok((ok, bad)) => {
                rep.capability_rows = ok.len() + bad.len();
                for b in &bad {
                    rep.violations.push(Violation {
                        file: "capability".into(),
                        line: b.line as u64,
                        column: String::new(),
                        value: String::new(),
                        rule: b.reason.clone(),
                    });
                }
                if rep.capability_rows > 0 && bad.len() as f64 / rep.capability_rows as f64 > share {
                    rep.problems.push(format!(
                        "capability: {} of {} rows rejected",
                        bad.len(),
                        rep.capability_rows
                    ));
                }
            }
            Err(e) => rep.problems.push(format!("capability: {e}")),
        },
        Err(e) => rep
            .problems
            .push(format!("capability {}: {e}", paths.capability.display())),
    }

    for (role, p) in [
        ("platform_usage", &paths.platform_usage),
        ("usage_rates", &paths.usage_rates),
    ] {
        if let Some(p) = p {
            let r = std::fs::File::open(p).map_err(|e| e.to_string()).and_then(|f| {
                if role == "platform_usage" {
                    panel::read_shares_csv(f).map(|_| ()).map_err(|e| e.to_string())
                } else {
                    panel::read_usage_rates_csv(f).map(|_| ()).map_err(|e| e.to_string())
                }
            });
            if let Err(e) = r {
                rep.problems.push(format!("{role} {}: {e}", p.display()));
            }
        }
    }

    match check_households(cfg, &paths.households, firm_ids.as_ref(), &mut rep) {
        Ok(Some(clean)) => {
            out.write_with(CLEAN_HOUSEHOLDS, |w| clean.write_csv(w))?;
        }
        Ok(None) => {}
        Err(e) => rep
            .problems
            .push(format!("households {}: {e}", paths.households.display())),
    }

    out.write_with("validation/violations.csv", |w| rep.write_violations(w))?;
    out.write_text("validation/report.txt", &rep.render())?;
    Ok(rep)
}

/// Returns the kept rows, or `None` when the file fails outright.
fn check_households(
    cfg: &RunConfig,
    path: &Path,
    firm_ids: Option<&HashSet<String>>,
    rep: &mut ValidationReport,
) -> Result<Option<Table>> {
    let (numeric, text) = household_schema(cfg);
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
    let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let pos = |name: &str| headers.iter().position(|h| h == name);
    let mut missing_cols: Vec<&str> = Vec::new();
    let num_idx: Vec<(usize, &str, Range)> = numeric
        .iter()
        .filter_map(|(n, r)| match pos(n) {
            Some(i) => Some((i, n.as_str(), *r)),
            None => {
                missing_cols.push(n);
                None
            }
        })
        .collect();
    let text_idx: Vec<(usize, &str)> = text
        .iter()
        .filter_map(|n| match pos(n) {
            Some(i) => Some((i, n.as_str())),
            None => {
                missing_cols.push(n);
                None
            }
        })
        .collect();
    for p in &cfg.columns.partitions {
        if pos(p).is_none() {
            missing_cols.push(p);
        }
    }
    if !missing_cols.is_empty() {
        rep.problems
            .push(format!("households lack bound columns: {}", missing_cols.join(", ")));
        return Ok(None);
    }

    let mut keep = Vec::new();
    let mut bad_rows = 0usize;
    let mut n = 0usize;
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let i = n;
        n += 1;
        let mut violated = false;
        let mut excluded: Option<&'static str> = None;
        for &(j, name) in &text_idx {
            if is_missing(rec.get(j).unwrap_or("")) {
                excluded.get_or_insert("missing key variable");
            }
            if name == panel::FIRM_ID {
                if let (Some(ids), Some(v)) = (firm_ids, rec.get(j)) {
                    if !is_missing(v) && !ids.contains(v.trim()) {
                        violated = true;
                        push(rep, line, name, v, "unknown firm");
                    }
                }
            }
        }
        for &(j, name, range) in &num_idx {
            let cell = rec.get(j).unwrap_or("").trim();
            if is_missing(cell) {
                excluded.get_or_insert("missing key variable");
                continue;
            }
            let Ok(v) = cell.parse::<f64>() else {
                violated = true;
                push(rep, line, name, cell, "not a number");
                continue;
            };
            if let Some(rule) = exclusion(name, v) {
                excluded.get_or_insert(rule);
                continue;
            }
            if let Some(rule) = range.check(v) {
                violated = true;
                push(rep, line, name, cell, &rule);
            }
        }
        if violated {
            bad_rows += 1;
        } else if let Some(rule) = excluded {
            *rep.exclusions.entry(rule.to_string()).or_default() += 1;
        } else {
            keep.push(i);
        }
    }
    rep.household_rows = n;
    rep.kept_rows = keep.len();
    if n == 0 {
        rep.problems.push("households file has no rows".into());
        return Ok(None);
    }
    if bad_rows as f64 / n as f64 > cfg.validation.max_violation_share {
        rep.problems.push(format!(
            "{bad_rows} of {n} household rows violate the schema (limit {:.1}%)",
            100.0 * cfg.validation.max_violation_share
        ));
        return Ok(None);
    }
    let t = Table::read_csv_path(path)?;
    Ok(Some(t.take_rows(&keep)))
}

fn push(rep: &mut ValidationReport, line: u64, column: &str, value: &str, rule: &str) {
    rep.violations.push(Violation {
        file: "households".into(),
        line,
        column: column.to_string(),
        value: value.to_string(),
        rule: rule.to_string(),
    });
}
