//! Pipeline stages. Each stage reads its inputs from files (the input
//! paths or what an earlier stage wrote) and writes its outputs under the
//! run directory, so any stage can be rerun on its own.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use washgap::capability::{
    read_capability_csv, walk_scores_panel, write_capability_csv, write_weights_csv, WeightPooling,
};
use washgap::corpus_text::{
    load_corpus_dir, load_lexicon, talk_scores_by_year, write_talk_csv, Lexicon, SimpleTokenizer, DEFAULT_LEXICON,
};
use washgap::datagen::{generate, TruthConfig};
use washgap::glm::{average_marginal_effect, category_marginal_effects, fit_model, ModelSpec, OutcomeLink, VcovSpec};
use washgap::iv::{fit_2sls, IVSpec};
use washgap::mediation::{
    bootstrap_mediation, decomposition_report, fit_mediation, write_paths_csv, BootstrapOptions, MediationSpec,
    QUANTITIES,
};
use washgap::moderation::{
    default_levels, fit_interaction, heterogeneity_battery, interaction_name, moderation_report, simple_slopes,
    split_fit, write_battery_csv, Dimension, ModerationSpec, SplitRule,
};
use washgap::panel::{self, FirmInfo};
use washgap::policy::{
    cost_benefit, sensitivity, simulate, write_outcomes_csv, write_subgroups_csv, CostModel, SensitivityOptions,
    SimColumns, SimModel, SimOutcome,
};
use washgap::table::Table;
use washgap::washing_index::{trend_report_weighted, washing_table, write_index_csv, FirmYearSeries, Standardization};

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::output::OutDir;
use crate::validate::{InputPaths, CLEAN_HOUSEHOLDS};

pub const INDEX_CSV: &str = "index/index.csv";
pub const PREPARED_CSV: &str = "prepared/households.csv";
pub const PATHS_CSV: &str = "mediate/paths.csv";

/// Everything a stage may look at besides files.
pub struct Ctx<'a> {
    pub cfg: &'a RunConfig,
    pub paths: InputPaths,
    pub out: OutDir,
}

#[derive(Debug, Default)]
pub struct StageOutput {
    pub notes: Vec<String>,
}

type StageFn = fn(&mut Ctx) -> Result<StageOutput>;

/// Stage name, upstream stages, body; in execution order.
pub const STAGES: [(&str, &[&str], StageFn); 9] = [
    ("generate", &[], stage_generate),
    ("index", &[], stage_index),
    ("prepare", &["index"], stage_prepare),
    ("trend", &["index", "prepare"], stage_trend),
    ("fit", &["prepare"], stage_fit),
    ("mediate", &["prepare"], stage_mediate),
    ("moderate", &["prepare"], stage_moderate),
    ("iv", &["prepare"], stage_iv),
    ("simulate", &["prepare", "mediate"], stage_simulate),
];

impl Ctx<'_> {
    fn seed(&self) -> Result<u64> {
        self.cfg
            .seed
            .ok_or_else(|| CliError::Config("stage needs a seed".into()))
    }

    fn prepared(&self) -> Result<Table> {
        self.out.read_table(PREPARED_CSV)
    }

    fn firms(&self) -> Result<Vec<FirmInfo>> {
        let f = std::fs::File::open(&self.paths.firms)
            .map_err(|e| CliError::Io(format!("{}: {e}", self.paths.firms.display())))?;
        Ok(panel::read_firms_csv(f)?)
    }

    fn controls(&self) -> Vec<&str> {
        self.cfg.columns.controls.iter().map(String::as_str).collect()
    }

    /// Treatment followed by the controls.
    fn regressors(&self) -> Vec<&str> {
        let mut r = vec![panel::WASHING];
        r.extend(self.controls());
        r
    }
}

fn stage_generate(cx: &mut Ctx) -> Result<StageOutput> {
    let block = cx
        .cfg
        .datagen
        .as_ref()
        .ok_or_else(|| CliError::Config("generate needs a [datagen] block".into()))?;
    let tc = TruthConfig {
        n_households: block.households,
        solve_sorting: block.solve_sorting,
        ..TruthConfig::default()
    };
    let b = generate(&tc, cx.seed()?)?;
    let o = &mut cx.out;
    o.write_raw("data/lexicon.txt", DEFAULT_LEXICON.as_bytes())?;
    for d in &b.panel.documents {
        o.write_raw(&format!("data/corpus/{}_{}.txt", d.firm_id, d.year), d.text.as_bytes())?;
    }
    o.write_with("data/capability.csv", |w| write_capability_csv(&b.panel.capability, w))?;
    o.write_with("data/firms.csv", |w| panel::write_firms_csv(&b.panel.firms, w))?;
    o.write_with("data/platform_usage.csv", |w| {
        panel::write_shares_csv(&b.panel.shares, w)
    })?;
    o.write_with("data/usage_rates.csv", |w| {
        panel::write_usage_rates_csv(&b.usage_rates, w)
    })?;
    o.write_with("data/households.csv", |w| b.households.write_csv(w))?;
    o.write_text("data/truth_manifest.txt", &b.manifest.render())?;
    Ok(StageOutput {
        notes: vec![format!("sorting {}", b.manifest.get("sorting").unwrap_or("NA"))],
    })
}

fn series_csv(s: &FirmYearSeries, value: &str, w: &mut Vec<u8>) -> washgap::Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["firm_id", "year", value])?;
    for (f, y, v) in s.entries() {
        wr.write_record([f.clone(), y.to_string(), format!("{v}")])?;
    }
    wr.flush().map_err(|e| washgap::Error::Io(e.to_string()))?;
    Ok(())
}

fn read_index(out: &OutDir) -> Result<FirmYearSeries> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(out.open(INDEX_CSV)?);
    let h = rdr.headers()?.clone();
    let col = |n: &str| {
        h.iter()
            .position(|x| x == n)
            .ok_or_else(|| CliError::Csv(format!("{INDEX_CSV} lacks `{n}`")))
    };
    let (fi, yi, wi) = (col("firm_id")?, col("year")?, col(panel::WASHING)?);
    let mut entries = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let bad = || {
            CliError::Csv(format!(
                "{INDEX_CSV}: malformed row {:?}",
                rec.position().map(|p| p.line())
            ))
        };
        let year: i32 = rec.get(yi).and_then(|v| v.parse().ok()).ok_or_else(bad)?;
        let w: f64 = rec.get(wi).and_then(|v| v.parse().ok()).ok_or_else(bad)?;
        entries.push((rec.get(fi).unwrap_or("").to_string(), year, w));
    }
    Ok(FirmYearSeries::new(entries)?)
}

fn stage_index(cx: &mut Ctx) -> Result<StageOutput> {
    let lex = match &cx.paths.lexicon {
        Some(p) => load_lexicon(p)?,
        None => Lexicon::default_set(),
    };
    let docs = load_corpus_dir(&cx.paths.corpus_dir, &lex, &SimpleTokenizer)?;
    let talk_scores = talk_scores_by_year(&docs, &lex)?;
    let talk = FirmYearSeries::new(
        talk_scores
            .iter()
            .map(|s| (s.firm_id.clone(), s.year, s.score))
            .collect(),
    )?;
    let f = std::fs::File::open(&cx.paths.capability)?;
    let (records, rejected) = read_capability_csv(f)?;
    let (walk, weights) = walk_scores_panel(&records, WeightPooling::Annual)?;
    let rows = washing_table(&talk, &walk, Standardization::WithinYear)?;

    let o = &mut cx.out;
    o.write_with("index/talk.csv", |w| write_talk_csv(&talk_scores, w))?;
    o.write_with("index/walk.csv", |w| series_csv(&walk, "walk_score", w))?;
    o.write_with("index/entropy_weights.csv", |w| write_weights_csv(&weights, w))?;
    o.write_with(INDEX_CSV, |w| write_index_csv(&rows, w))?;

    let mut s = String::from("AI washing index (within-year z(talk) - z(walk))\n");
    let _ = writeln!(
        s,
        "documents {}, capability rows {}, rejected {}",
        docs.len(),
        records.len(),
        rejected.len()
    );
    let _ = writeln!(s, "entropy weights (talent, patents, rd):");
    for (y, w) in &weights {
        let a = w.as_array();
        let _ = writeln!(s, "  {y}: {:.4} {:.4} {:.4}", a[0], a[1], a[2]);
    }
    let _ = writeln!(
        s,
        "{:<12}{:>6}{:>10}{:>10}{:>10}",
        "firm", "year", "talk", "walk", "washing"
    );
    for r in &rows {
        let _ = writeln!(
            s,
            "{:<12}{:>6}{:>10.3}{:>10.3}{:>10.3}",
            r.firm_id, r.year, r.talk_std, r.walk_std, r.washing
        );
    }
    o.write_text("reports/index.txt", &s)?;
    let mut notes = Vec::new();
    if !rejected.is_empty() {
        notes.push(format!("{} capability rows rejected", rejected.len()));
    }
    Ok(StageOutput { notes })
}

fn stage_prepare(cx: &mut Ctx) -> Result<StageOutput> {
    let hh = cx.out.read_table(CLEAN_HOUSEHOLDS)?;
    let index = read_index(&cx.out)?;
    let year = match cx.cfg.columns.year {
        Some(y) => y,
        None => *index
            .years()
            .iter()
            .max()
            .ok_or_else(|| CliError::Csv("empty index".into()))?,
    };
    if !index.years().contains(&year) {
        return Err(CliError::Config(format!("analysis year {year} is not in the index")));
    }
    let mut t = panel::prepare(&hh, &index, &cx.firms()?, year)?;
    let m = &cx.cfg.columns.moderator;
    let mstd = cx.cfg.columns.moderator_std();
    if !t.has(&mstd) {
        let v = panel::standardized(t.num(m)?);
        t.set_num(&mstd, v);
    }
    let unmatched = t.num(panel::WASHING)?.iter().filter(|v| !v.is_finite()).count();
    cx.out.write_with(PREPARED_CSV, |w| t.write_csv(w))?;
    let mut notes = vec![format!("analysis year {year}")];
    if unmatched > 0 {
        notes.push(format!("{unmatched} households without an index value for {year}"));
    }
    Ok(StageOutput { notes })
}

fn stage_trend(cx: &mut Ctx) -> Result<StageOutput> {
    let Some(rates_path) = &cx.paths.usage_rates else {
        return Err(CliError::MissingInput("usage_rates".into()));
    };
    let rates = panel::read_usage_rates_csv(std::fs::File::open(rates_path)?)?;
    let shares: Option<HashMap<(String, i32), f64>> = match &cx.paths.platform_usage {
        Some(p) => Some(panel::read_shares_csv(std::fs::File::open(p)?)?),
        None => None,
    };
    let index = read_index(&cx.out)?;
    let t = cx.prepared()?;
    let b = &cx.cfg.columns.breadth;
    let d = t.complete_cases(&[panel::WASHING, b])?;
    let pairs: Vec<(f64, f64)> = d
        .num(panel::WASHING)?
        .iter()
        .copied()
        .zip(d.num(b)?.iter().copied())
        .collect();
    let r = trend_report_weighted(&index, shares.as_ref(), &rates, &pairs)?;
    let o = &mut cx.out;
    o.write_with("trend/series.csv", |w| r.write_series_csv(w))?;
    o.write_with("trend/summary.csv", |w| r.write_summary_csv(w))?;
    let mut s = String::from("Index trend and usage\n");
    let _ = writeln!(
        s,
        "weighting: {}",
        if shares.is_some() {
            "platform user shares"
        } else {
            "equal"
        }
    );
    let _ = writeln!(s, "{:<6}{:>12}{:>12}", "year", "mean index", "usage rate");
    for (y, m) in &r.yearly_means {
        let u = r
            .usage_rate
            .get(y)
            .map(|u| format!("{u:.3}"))
            .unwrap_or_else(|| "NA".into());
        let _ = writeln!(s, "{y:<6}{m:>12.3}{u:>12}");
    }
    let _ = writeln!(s, "correlation of yearly means with usage: {:.3}", r.correlation);
    let _ = writeln!(
        s,
        "household scatter, {b} on index: slope {:.3} (se {:.3}, t {:.2}), n = {}",
        r.scatter_slope,
        r.scatter_se,
        r.scatter_t,
        pairs.len()
    );
    o.write_text("reports/trend.txt", &s)?;
    Ok(StageOutput::default())
}

fn stage_fit(cx: &mut Ctx) -> Result<StageOutput> {
    let t = cx.prepared()?;
    let c = &cx.cfg.columns;
    let regs = cx.regressors();
    let vc = VcovSpec::Classical;
    let base_spec = ModelSpec::new(&c.usage, &regs, OutcomeLink::Logit);
    let base = fit_model(&t, &base_spec, &vc)?;
    let bd = t.complete_cases(&base_spec.columns())?;
    let ame = average_marginal_effect(&base, &base_spec.design(&bd)?, panel::WASHING)?;

    let br_spec = ModelSpec::new(&c.breadth, &regs, OutcomeLink::Ordered);
    let breadth = fit_model(&t, &br_spec, &vc)?;
    let od = t.complete_cases(&br_spec.columns())?;
    let cme = category_marginal_effects(&breadth, &br_spec.design(&od)?, panel::WASHING)?;

    let o = &mut cx.out;
    o.write_with("fit/baseline.csv", |w| base.write_csv(w))?;
    o.write_with("fit/breadth.csv", |w| breadth.write_csv(w))?;
    let me = {
        let mut s = String::from("model,outcome_level,ame\n");
        let _ = writeln!(s, "logit,{},{ame}", 1);
        for (k, v) in cme.iter().enumerate() {
            let _ = writeln!(s, "ordered,{k},{v}");
        }
        s
    };
    o.write_text("fit/marginal_effects.csv", &me)?;

    let mut s = base.report_block(&format!("(1) logit, {}", c.usage));
    let _ = writeln!(s, "  AME of {} on P(use) {:.4}", panel::WASHING, ame);
    s.push_str(&breadth.report_block(&format!("(2) ordered logit, {}", c.breadth)));
    for (k, (t, se)) in breadth.thresholds.iter().zip(&breadth.threshold_se).enumerate() {
        let _ = writeln!(s, "  cut{k:<25}{t:>10.3} ({se:.3})");
    }
    let _ = writeln!(s, "  AME of {} by level: {}", panel::WASHING, fmt_list(&cme));
    o.write_text("reports/baseline.txt", &s)?;
    Ok(StageOutput::default())
}

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(" ")
}

fn mediation_spec(cfg: &RunConfig) -> MediationSpec {
    let c = &cfg.columns;
    MediationSpec {
        treatment: panel::WASHING.into(),
        mediators: c.mediators.clone(),
        outcome: c.usage.clone(),
        controls: c.controls.clone(),
        outcome_link: OutcomeLink::Logit,
    }
}

fn stage_mediate(cx: &mut Ctx) -> Result<StageOutput> {
    let spec = mediation_spec(cx.cfg);
    let t = cx.prepared()?.complete_cases(&spec.columns())?;
    let dec = fit_mediation(&t, &spec)?;
    let mut notes = Vec::new();
    let boot = if cx.cfg.stages.bootstrap {
        let opts = BootstrapOptions {
            replicates: cx.cfg.bootstrap.replicates,
            seed: cx.seed()?,
            level: cx.cfg.bootstrap.level,
            cluster: None,
        };
        let b = bootstrap_mediation(&t, &spec, &opts)?;
        if b.failures > 0 {
            notes.push(format!(
                "{} of {} bootstrap replicates failed",
                b.failures, b.replicates
            ));
        }
        if b.warning {
            notes.push("bootstrap failure share above 1%".into());
        }
        Some(b)
    } else {
        notes.push("bootstrap disabled: Panel B omitted".into());
        None
    };

    let o = &mut cx.out;
    o.write_with(PATHS_CSV, |w| write_paths_csv(&dec, w))?;
    o.write_with("mediate/effects.csv", |w| decomposition_report(&dec, boot.as_ref(), w))?;
    if let Some(b) = &boot {
        let mut s = String::from("quantity,point,ci_lo,ci_hi,boot_se,replicates,failures,level,seed\n");
        for q in QUANTITIES {
            if let Some(ci) = b.ci(q) {
                let _ = writeln!(
                    s,
                    "{q},{},{},{},{},{},{},{},{}",
                    ci.point, ci.lo, ci.hi, ci.se, b.replicates, b.failures, b.level, b.seed
                );
            }
        }
        o.write_text("mediate/bootstrap.csv", &s)?;
    }

    let mut s = String::from("Mediation: washing -> knowledge / risk exclusion -> usage\n");
    let _ = writeln!(s, "Panel A: path coefficients (n = {})", dec.n_obs);
    let _ = writeln!(s, "  {:<10}{:>10}{:>10}{:>10}", "path", "coef", "se", "z");
    for (name, p) in [
        ("a1", dec.a1),
        ("a2", dec.a2),
        ("b1", dec.b1),
        ("b2", dec.b2),
        ("c'", dec.c_prime),
    ] {
        let _ = writeln!(s, "  {name:<10}{:>10.3}{:>10.3}{:>10.2}", p.coef, p.se, p.z);
    }
    let pct = |v: Option<f64>| v.map(|x| format!("{:.1}%", 100.0 * x)).unwrap_or_else(|| "NA".into());
    let _ = writeln!(
        s,
        "  {:<16}{:>10}{:>12}{:>12}",
        "effect", "value", "proportion", "of indirect"
    );
    for (name, v, share) in [
        ("indirect_1", dec.indirect_1, true),
        ("indirect_2", dec.indirect_2, true),
        ("total_indirect", dec.total_indirect, true),
        ("direct (c')", dec.c_prime.coef, false),
        ("total", dec.total_effect, false),
    ] {
        let sh = if share {
            pct(dec.share_of_indirect(v))
        } else {
            String::new()
        };
        let _ = writeln!(s, "  {name:<16}{v:>10.3}{:>12}{sh:>12}", pct(dec.proportion(v)));
    }
    if let Some(b) = &boot {
        let _ = writeln!(
            s,
            "Panel B: percentile bootstrap ({} replicates, level {}, seed {})",
            b.replicates, b.level, b.seed
        );
        let _ = writeln!(
            s,
            "  {:<16}{:>10}{:>10}{:>10}{:>10}",
            "quantity", "point", "boot se", "lo", "hi"
        );
        for q in ["indirect_1", "indirect_2", "total_indirect", "c_prime", "total_effect"] {
            if let Some(ci) = b.ci(q) {
                let _ = writeln!(
                    s,
                    "  {q:<16}{:>10.3}{:>10.3}{:>10.3}{:>10.3}",
                    ci.point, ci.se, ci.lo, ci.hi
                );
            }
        }
    }
    o.write_text("reports/mediation.txt", &s)?;
    Ok(StageOutput { notes })
}

fn stage_moderate(cx: &mut Ctx) -> Result<StageOutput> {
    let t = cx.prepared()?;
    let c = &cx.cfg.columns;
    let mstd = c.moderator_std();
    let spec = ModerationSpec {
        treatment: panel::WASHING.into(),
        moderator: mstd.clone(),
        outcome: c.usage.clone(),
        controls: c.controls.clone(),
        center_inputs: false,
        link: OutcomeLink::Logit,
    };
    let fit = fit_interaction(&t, &spec)?;
    let regs = cx.regressors();
    let ms = ModelSpec::new(&c.usage, &regs, OutcomeLink::Logit);
    let mut split_cols = ms.columns();
    split_cols.push(&c.moderator);
    let sd = t.complete_cases(&split_cols)?;
    let split = split_fit(&sd, &c.moderator, SplitRule::Median, &ms, panel::WASHING)?;
    let levels_src: Vec<f64> = t.num(&mstd)?.iter().copied().filter(|v| v.is_finite()).collect();
    let slopes = simple_slopes(&fit, panel::WASHING, &mstd, &default_levels(&levels_src))?;

    let dims: Vec<Dimension> = cx
        .cfg
        .moderation
        .dimensions
        .iter()
        .map(|d| Dimension {
            name: d.name.clone(),
            split_var: d.column.clone(),
            rule: d.rule(),
        })
        .collect();
    let mut bcols = ms.columns();
    bcols.extend(dims.iter().map(|d| d.split_var.as_str()));
    let bd = t.complete_cases(&bcols)?;
    let battery = heterogeneity_battery(&bd, &dims, &ms, panel::WASHING);

    let o = &mut cx.out;
    o.write_with("moderate/interaction.csv", |w| fit.write_csv(w))?;
    let mut sl = String::from("level,slope,se,z\n");
    for x in &slopes {
        let _ = writeln!(sl, "{},{},{},{}", x.level, x.slope, x.se, x.z);
    }
    o.write_text("moderate/slopes.csv", &sl)?;
    o.write_with("moderate/battery.csv", |w| write_battery_csv(&battery, w))?;

    let mut s = String::from("Moderation by social capital (standardized; slopes per SD)\n");
    s.push_str(&moderation_report(&fit, &split, &slopes));
    let _ = writeln!(s, "Heterogeneity (complement - focal on {})", panel::WASHING);
    let mut notes = Vec::new();
    for (name, r) in &battery {
        match r {
            Ok(cmp) => {
                let _ = writeln!(
                    s,
                    "  {name:<20} n {}/{}  diff {:.3} (z {:.2}, p {:.3})",
                    cmp.n_focal, cmp.n_complement, cmp.diff.diff, cmp.diff.z, cmp.diff.p
                );
            }
            Err(e) => {
                let _ = writeln!(s, "  {name:<20} not estimable: {e}");
                notes.push(format!("dimension {name}: {e}"));
            }
        }
    }
    o.write_text("reports/moderation.txt", &s)?;
    Ok(StageOutput { notes })
}

fn stage_iv(cx: &mut Ctx) -> Result<StageOutput> {
    let t = cx.prepared()?;
    let c = &cx.cfg.columns;
    let inst: Vec<&str> = c.instruments.iter().map(String::as_str).collect();
    let spec = IVSpec::new(&c.usage, panel::WASHING, &inst, &cx.controls());
    let mut cols = vec![c.usage.as_str(), panel::WASHING];
    cols.extend(&inst);
    cols.extend(cx.controls());
    let d = t.complete_cases(&cols)?;
    let r = fit_2sls(&d, &spec)?;
    cx.out.write_with("iv/iv.csv", |w| r.write_csv(w))?;
    let mut s = format!("Linear probability 2SLS, outcome {}\n", c.usage);
    s.push_str(&r.report_block());
    let _ = writeln!(s, "  N {}", r.n_obs);
    cx.out.write_text("reports/iv.txt", &s)?;
    Ok(StageOutput::default())
}

fn read_paths(out: &OutDir) -> Result<BTreeMap<String, f64>> {
    let t = out.read_table(PATHS_CSV)?;
    let names = t.text("path")?;
    let coef = t.num("coef")?;
    Ok(names.into_iter().zip(coef.iter().copied()).collect())
}

/// Structural logit for the simulator: washing, both mediators, the raw
/// moderator and its uncentered product with washing, plus the controls.
pub fn structural_fit(t: &Table, cfg: &RunConfig) -> Result<(washgap::glm::FitResult, Table, SimColumns)> {
    let c = &cfg.columns;
    let cols = SimColumns {
        washing: panel::WASHING.into(),
        knowledge: c.mediators[0].clone(),
        risk: c.mediators[1].clone(),
        social_capital: c.moderator.clone(),
    };
    let inter = interaction_name(&cols.washing, &cols.social_capital);
    let mut regs: Vec<&str> = vec![&cols.washing, &cols.knowledge, &cols.risk, &cols.social_capital];
    regs.extend(c.controls.iter().map(String::as_str));
    let mut need = regs.clone();
    need.push(&c.usage);
    let mut d = t.complete_cases(&need)?;
    let prod: Vec<f64> = d
        .num(&cols.washing)?
        .iter()
        .zip(d.num(&cols.social_capital)?)
        .map(|(w, s)| w * s)
        .collect();
    d.set_num(&inter, prod);
    regs.insert(4, &inter);
    let fit = fit_model(
        &d,
        &ModelSpec::new(&c.usage, &regs, OutcomeLink::Logit),
        &VcovSpec::Classical,
    )?;
    Ok((fit, d, cols))
}

fn stage_simulate(cx: &mut Ctx) -> Result<StageOutput> {
    let cfg = cx.cfg;
    let t = cx.prepared()?;
    let paths = read_paths(&cx.out)?;
    let get = |k: &str| {
        paths
            .get(k)
            .copied()
            .ok_or_else(|| CliError::Csv(format!("{PATHS_CSV} lacks `{k}`")))
    };
    let (a1, a2) = (get("a1")?, get("a2")?);
    let (fit, pop, cols) = structural_fit(&t, cfg)?;
    let model = SimModel::from_fits(&fit, a1, a2, cols)?;

    let parts: Vec<&str> = cfg.columns.partitions.iter().map(String::as_str).collect();
    let scenarios: Vec<_> = cfg.simulation.scenarios.iter().map(|s| s.spec()).collect();
    let mut costs = CostModel::default();
    if let Some(r) = cfg.simulation.regulator_cost_per_platform {
        costs.regulator_cost_per_platform = r;
    }
    let platforms = match cfg.simulation.platforms {
        Some(p) => p,
        None => cx.firms()?.len(),
    };
    let outcomes: Vec<SimOutcome> = scenarios
        .iter()
        .map(|s| {
            let o = simulate(&pop, s, &model, &parts)?;
            cost_benefit(&o, s, &costs, cfg.simulation.population_size, platforms)
        })
        .collect::<washgap::Result<_>>()?;

    let mut notes = Vec::new();
    let sens = if cfg.stages.sensitivity && !scenarios.is_empty() {
        let reference = scenarios
            .iter()
            .find(|s| s.label == SensitivityOptions::default().reference)
            .unwrap_or(&scenarios[scenarios.len() - 1])
            .label
            .clone();
        let opts = SensitivityOptions {
            perturb_fraction: cfg.sensitivity.perturb,
            reps: cfg.sensitivity.reps,
            seed: cx.seed()?,
            reference,
            ..Default::default()
        };
        Some(sensitivity(&pop, &scenarios, &model, &opts)?)
    } else {
        notes.push("sensitivity disabled".into());
        None
    };

    let o = &mut cx.out;
    o.write_with("simulate/structural.csv", |w| fit.write_csv(w))?;
    o.write_with("simulate/outcomes.csv", |w| write_outcomes_csv(&outcomes, w))?;
    o.write_with("simulate/subgroups.csv", |w| write_subgroups_csv(&outcomes, w))?;
    if let Some(r) = &sens {
        o.write_with("simulate/sensitivity.csv", |w| r.write_csv(w))?;
    }

    let mut s = String::from("Counterfactual scenarios (structural logit, mean predicted uptake)\n");
    let _ = writeln!(
        s,
        "model: washing {:.3}, knowledge {:.3}, risk {:.3}, social capital {:.3}, interaction {:.3}, a1 {:.3}, a2 {:.3}",
        model.washing, model.knowledge, model.risk, model.social_capital, model.interaction, model.a1, model.a2
    );
    let _ = writeln!(
        s,
        "order: washing change, propagation through a1/a2, knowledge multiplier, social capital multiplier"
    );
    let _ = writeln!(
        s,
        "{:<24}{:>10}{:>10}{:>10}{:>10}{:>16}{:>10}",
        "scenario", "base %", "usage %", "+pp", "rel %", "cost", "b/c"
    );
    for x in &outcomes {
        let cost = x.cost.map(|c| format!("{c:.0}")).unwrap_or_else(|| "NA".into());
        let cb = x.cb_ratio.map(|c| format!("{c:.2}")).unwrap_or_else(|| "NA".into());
        let _ = writeln!(
            s,
            "{:<24}{:>10.2}{:>10.2}{:>10.2}{:>10.1}{cost:>16}{cb:>10}",
            x.label,
            100.0 * x.baseline_rate,
            100.0 * x.counterfactual_rate,
            100.0 * x.abs_change,
            100.0 * x.rel_change
        );
    }
    let _ = writeln!(
        s,
        "population scaled to {} households, {platforms} platforms",
        cfg.simulation.population_size
    );
    if let Some(r) = &sens {
        let _ = writeln!(
            s,
            "Sensitivity: {} reps, +/-{:.0}% uniform perturbation",
            cfg.sensitivity.reps,
            100.0 * cfg.sensitivity.perturb
        );
        for label in &r.scenario_order {
            let j = r.joint[label];
            let _ = writeln!(
                s,
                "  {label:<24} median {:.2} pp, 90% band [{:.2}, {:.2}]",
                100.0 * j.median,
                100.0 * j.lo,
                100.0 * j.hi
            );
        }
        let rank: Vec<String> = r
            .ranking
            .iter()
            .map(|p| format!("{} ({:.4})", p.name(), r.elasticity[p]))
            .collect();
        let _ = writeln!(s, "  elasticity ranking: {}", rank.join(" > "));
    }
    o.write_text("reports/simulation.txt", &s)?;
    Ok(StageOutput { notes })
}
