//! Counterfactual scenario engine: push a modified household population
//! through the frozen structural system and summarize uptake, cost-benefit
//! and parameter sensitivity.

use std::collections::BTreeMap;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::glm::{FitResult, INTERCEPT};
use crate::moderation::interaction_name;
use crate::numeric::{self, sigmoid};
use crate::par;
use crate::table::{Column, Table};

/// Population columns the model reads.
#[derive(Debug, Clone, PartialEq)]
pub struct SimColumns {
    pub washing: String,
    pub knowledge: String,
    pub risk: String,
    pub social_capital: String,
}

impl Default for SimColumns {
    fn default() -> Self {
        Self {
            washing: "ai_washing".into(),
            knowledge: "knowledge_exclusion".into(),
            risk: "risk_exclusion".into(),
            social_capital: "social_capital".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoefSource {
    Fitted,
    Supplied,
}

/// Outcome-equation coefficients (with an uncentered washing × social
/// capital product) and the two mediator slopes on washing.
#[derive(Debug, Clone, PartialEq)]
pub struct SimModel {
    pub columns: SimColumns,
    pub intercept: f64,
    pub washing: f64,
    pub knowledge: f64,
    pub risk: f64,
    pub social_capital: f64,
    pub interaction: f64,
    pub controls: Vec<(String, f64)>,
    pub a1: f64,
    pub a2: f64,
    pub source: CoefSource,
}

impl SimModel {
    /// Freeze coefficients from a structural logit fit (which must contain
    /// the four path columns and their product) and the mediator slopes.
    pub fn from_fits(outcome: &FitResult, a1: f64, a2: f64, columns: SimColumns) -> Result<Self> {
        let inter = interaction_name(&columns.washing, &columns.social_capital);
        let path = [
            INTERCEPT,
            columns.washing.as_str(),
            columns.knowledge.as_str(),
            columns.risk.as_str(),
            columns.social_capital.as_str(),
            inter.as_str(),
        ];
        let controls = outcome
            .names
            .iter()
            .zip(&outcome.coef)
            .filter(|(n, _)| !path.contains(&n.as_str()))
            .map(|(n, c)| (n.clone(), *c))
            .collect();
        let m = Self {
            intercept: outcome.coef_of(INTERCEPT)?,
            washing: outcome.coef_of(&columns.washing)?,
            knowledge: outcome.coef_of(&columns.knowledge)?,
            risk: outcome.coef_of(&columns.risk)?,
            social_capital: outcome.coef_of(&columns.social_capital)?,
            interaction: outcome.coef_of(&inter)?,
            columns,
            controls,
            a1,
            a2,
            source: CoefSource::Fitted,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.intercept,
            self.washing,
            self.knowledge,
            self.risk,
            self.social_capital,
            self.interaction,
            self.a1,
            self.a2,
        ];
        if all
            .iter()
            .chain(self.controls.iter().map(|c| &c.1))
            .any(|v| !v.is_finite())
        {
            return Err(Error::InvalidSpec(
                "simulation model has a non-finite coefficient".into(),
            ));
        }
        Ok(())
    }

    fn required_columns(&self) -> Vec<&str> {
        let mut v = vec![
            self.columns.washing.as_str(),
            self.columns.knowledge.as_str(),
            self.columns.risk.as_str(),
            self.columns.social_capital.as_str(),
        ];
        v.extend(self.controls.iter().map(|c| c.0.as_str()));
        v
    }

    fn check_schema(&self, pop: &Table) -> Result<()> {
        for c in self.required_columns() {
            match pop.column(c) {
                Ok(Column::Num(_)) => {}
                _ => return Err(Error::SchemaMismatch(format!("population lacks numeric column `{c}`"))),
            }
        }
        Ok(())
    }

    fn control_index(&self, pop: &Table) -> Result<Vec<f64>> {
        let n = pop.n_rows();
        let mut acc = vec![numeric::CompensatedSum::new(); n];
        for (name, b) in &self.controls {
            for (a, x) in acc.iter_mut().zip(pop.num(name)?) {
                a.add(b * x);
            }
        }
        Ok(acc.iter().map(|a| a.value()).collect())
    }

    fn eta(&self, w: f64, m1: f64, m2: f64, sc: f64, ctrl: f64) -> f64 {
        self.intercept
            + self.washing * w
            + self.knowledge * m1
            + self.risk * m2
            + self.social_capital * sc
            + self.interaction * w * sc
            + ctrl
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub label: String,
    /// In [0, 1]; 1 leaves washing unchanged.
    pub washing_multiplier: f64,
    /// Bring washing above the population mean down to the mean.
    pub washing_cap_at_mean: bool,
    /// In (0, 1]; applied after washing has propagated into the mediator.
    pub knowledge_multiplier: f64,
    /// At least 1.
    pub social_capital_multiplier: f64,
}

impl ScenarioSpec {
    pub fn neutral() -> Self {
        Self {
            label: "neutral".into(),
            washing_multiplier: 1.0,
            washing_cap_at_mean: false,
            knowledge_multiplier: 1.0,
            social_capital_multiplier: 1.0,
        }
    }

    pub fn washing_governance() -> Self {
        Self {
            label: "S1_washing_governance".into(),
            washing_multiplier: 0.5,
            ..Self::neutral()
        }
    }

    pub fn education() -> Self {
        Self {
            label: "S2_education".into(),
            knowledge_multiplier: 0.7,
            ..Self::neutral()
        }
    }

    pub fn social_capital() -> Self {
        Self {
            label: "S3_social_capital".into(),
            social_capital_multiplier: 1.2,
            ..Self::neutral()
        }
    }

    pub fn comprehensive() -> Self {
        Self {
            label: "S4_comprehensive".into(),
            washing_multiplier: 0.5,
            knowledge_multiplier: 0.7,
            social_capital_multiplier: 1.2,
            ..Self::neutral()
        }
    }

    pub fn targeted_cap() -> Self {
        Self {
            label: "S1b_targeted_cap".into(),
            washing_cap_at_mean: true,
            ..Self::neutral()
        }
    }

    /// The four headline scenarios in report order.
    pub fn standard_set() -> Vec<Self> {
        vec![
            Self::washing_governance(),
            Self::education(),
            Self::social_capital(),
            Self::comprehensive(),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.washing_multiplier) {
            return Err(Error::InvalidSpec(format!(
                "{}: washing multiplier outside [0, 1]",
                self.label
            )));
        }
        if !(self.knowledge_multiplier > 0.0 && self.knowledge_multiplier <= 1.0) {
            return Err(Error::InvalidSpec(format!(
                "{}: knowledge multiplier outside (0, 1]",
                self.label
            )));
        }
        if !(self.social_capital_multiplier >= 1.0) || !self.social_capital_multiplier.is_finite() {
            return Err(Error::InvalidSpec(format!(
                "{}: social capital multiplier below 1",
                self.label
            )));
        }
        Ok(())
    }

    pub fn changes_washing(&self) -> bool {
        self.washing_multiplier != 1.0 || self.washing_cap_at_mean
    }
}

/// Counterfactual population. Order: washing changes, the change propagates
/// into both mediators through a1 and a2, then the knowledge multiplier,
/// then the social capital multiplier. Other columns are untouched.
pub fn apply_scenario(pop: &Table, scenario: &ScenarioSpec, model: &SimModel) -> Result<Table> {
    scenario.validate()?;
    model.check_schema(pop)?;
    let c = &model.columns;
    let mut out = pop.clone();
    let w = pop.num(&c.washing)?;
    let new_w: Vec<f64> = if scenario.washing_cap_at_mean {
        let m = numeric::mean(w);
        w.iter().map(|x| x.min(m) * scenario.washing_multiplier).collect()
    } else if scenario.washing_multiplier != 1.0 {
        w.iter().map(|x| x * scenario.washing_multiplier).collect()
    } else {
        w.to_vec()
    };
    let dw: Vec<f64> = new_w.iter().zip(w).map(|(a, b)| a - b).collect();
    if scenario.changes_washing() || scenario.knowledge_multiplier != 1.0 {
        let km = scenario.knowledge_multiplier;
        let m1: Vec<f64> = pop
            .num(&c.knowledge)?
            .iter()
            .zip(&dw)
            .map(|(m, d)| km * (m + model.a1 * d))
            .collect();
        out.set_num(&c.knowledge, m1);
    }
    if scenario.changes_washing() {
        let m2: Vec<f64> = pop
            .num(&c.risk)?
            .iter()
            .zip(&dw)
            .map(|(m, d)| m + model.a2 * d)
            .collect();
        out.set_num(&c.risk, m2);
        out.set_num(&c.washing, new_w);
    }
    if scenario.social_capital_multiplier != 1.0 {
        let f = scenario.social_capital_multiplier;
        let sc: Vec<f64> = pop.num(&c.social_capital)?.iter().map(|s| s * f).collect();
        out.set_num(&c.social_capital, sc);
    }
    Ok(out)
}

/// Per-household adoption probabilities under `model`.
pub fn household_probabilities(pop: &Table, model: &SimModel) -> Result<Vec<f64>> {
    model.check_schema(pop)?;
    let c = &model.columns;
    let ctrl = model.control_index(pop)?;
    let (w, m1, m2, sc) = (
        pop.num(&c.washing)?,
        pop.num(&c.knowledge)?,
        pop.num(&c.risk)?,
        pop.num(&c.social_capital)?,
    );
    Ok((0..pop.n_rows())
        .map(|i| sigmoid(model.eta(w[i], m1[i], m2[i], sc[i], ctrl[i])))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubgroupDelta {
    pub share: f64,
    pub baseline_rate: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutcome {
    pub label: String,
    pub baseline_rate: f64,
    pub counterfactual_rate: f64,
    /// counterfactual − baseline, as a fraction.
    pub abs_change: f64,
    pub rel_change: f64,
    /// Keyed `column=value`.
    pub subgroup_deltas: BTreeMap<String, SubgroupDelta>,
    pub cost: Option<f64>,
    pub benefit: Option<f64>,
    pub cb_ratio: Option<f64>,
}

pub const MIN_POPULATION: usize = 100;

/// Mean adoption probability before and after the scenario, with deltas
/// for every level of each partition column.
pub fn simulate(pop: &Table, scenario: &ScenarioSpec, model: &SimModel, partitions: &[&str]) -> Result<SimOutcome> {
    if pop.n_rows() < MIN_POPULATION {
        return Err(Error::InsufficientData(format!(
            "{} households, need {MIN_POPULATION}",
            pop.n_rows()
        )));
    }
    let cf = apply_scenario(pop, scenario, model)?;
    let p0 = household_probabilities(pop, model)?;
    let p1 = household_probabilities(&cf, model)?;
    let baseline_rate = numeric::mean(&p0);
    let counterfactual_rate = numeric::mean(&p1);
    let n = p0.len() as f64;
    let mut subgroup_deltas = BTreeMap::new();
    for part in partitions {
        let keys = pop.text(part)?;
        let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, k) in keys.iter().enumerate() {
            groups.entry(k.as_str()).or_default().push(i);
        }
        for (k, idx) in groups {
            let b = numeric::sum(idx.iter().map(|&i| p0[i])) / idx.len() as f64;
            let d = numeric::sum(idx.iter().map(|&i| p1[i] - p0[i])) / idx.len() as f64;
            subgroup_deltas.insert(
                format!("{part}={k}"),
                SubgroupDelta {
                    share: idx.len() as f64 / n,
                    baseline_rate: b,
                    delta: d,
                },
            );
        }
    }
    let abs_change = counterfactual_rate - baseline_rate;
    Ok(SimOutcome {
        label: scenario.label.clone(),
        baseline_rate,
        counterfactual_rate,
        abs_change,
        rel_change: abs_change / baseline_rate,
        subgroup_deltas,
        cost: None,
        benefit: None,
        cb_ratio: None,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostModel {
    pub training_cost_per_farmer: f64,
    pub group_setup_cost: f64,
    pub value_per_user_year: f64,
    pub horizon_years: f64,
    pub regulator_cost_per_platform: f64,
    pub households_per_village: f64,
    /// Villages served by one mutual-aid group (one group per 1–2 villages).
    pub villages_per_group: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        Self {
            training_cost_per_farmer: 55.0,
            group_setup_cost: 1800.0,
            value_per_user_year: 700.0,
            horizon_years: 3.0,
            regulator_cost_per_platform: 13_600_000.0,
            households_per_village: 400.0,
            villages_per_group: 1.5,
        }
    }
}

impl CostModel {
    pub fn validate(&self) -> Result<()> {
        let v = [
            self.training_cost_per_farmer,
            self.group_setup_cost,
            self.value_per_user_year,
            self.horizon_years,
            self.regulator_cost_per_platform,
            self.households_per_village,
            self.villages_per_group,
        ];
        if v.iter().any(|x| !(*x > 0.0) || !x.is_finite()) {
            return Err(Error::InvalidSpec("cost model parameters must be positive".into()));
        }
        Ok(())
    }
}

/// Scale the simulated rates to `population_size` households and attach
/// benefit, cost and their ratio. Training is billed for every baseline
/// non-user, mutual-aid groups per village cluster, regulation per platform.
pub fn cost_benefit(
    outcome: &SimOutcome,
    scenario: &ScenarioSpec,
    costs: &CostModel,
    population_size: f64,
    n_platforms: usize,
) -> Result<SimOutcome> {
    costs.validate()?;
    if !(population_size > 0.0) {
        return Err(Error::InvalidSpec("population size must be positive".into()));
    }
    let new_users = outcome.abs_change * population_size;
    let benefit = new_users * costs.value_per_user_year * costs.horizon_years;
    let mut cost = 0.0;
    if scenario.knowledge_multiplier != 1.0 {
        cost += costs.training_cost_per_farmer * population_size * (1.0 - outcome.baseline_rate);
    }
    if scenario.social_capital_multiplier != 1.0 {
        let villages = population_size / costs.households_per_village;
        cost += costs.group_setup_cost * (villages / costs.villages_per_group).ceil();
    }
    if scenario.changes_washing() {
        cost += costs.regulator_cost_per_platform * n_platforms as f64;
    }
    let mut out = outcome.clone();
    out.benefit = Some(benefit);
    out.cost = Some(cost);
    out.cb_ratio = (cost > 0.0).then(|| benefit / cost);
    Ok(out)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_else(|| "NA".into())
}

/// Scenario table: rates in percent, increase in percentage points.
pub fn write_outcomes_csv<W: Write>(outcomes: &[SimOutcome], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record([
        "scenario",
        "baseline_rate_pct",
        "usage_rate_pct",
        "abs_increase_pp",
        "rel_increase_pct",
        "cost",
        "benefit",
        "cb_ratio",
    ])?;
    for o in outcomes {
        wr.write_record([
            o.label.clone(),
            format!("{}", 100.0 * o.baseline_rate),
            format!("{}", 100.0 * o.counterfactual_rate),
            format!("{}", 100.0 * o.abs_change),
            format!("{}", 100.0 * o.rel_change),
            opt(o.cost),
            opt(o.benefit),
            opt(o.cb_ratio),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

pub fn write_subgroups_csv<W: Write>(outcomes: &[SimOutcome], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["scenario", "group", "share", "baseline_rate", "delta"])?;
    for o in outcomes {
        for (g, d) in &o.subgroup_deltas {
            wr.write_record([
                o.label.clone(),
                g.clone(),
                format!("{}", d.share),
                format!("{}", d.baseline_rate),
                format!("{}", d.delta),
            ])?;
        }
    }
    wr.flush()?;
    Ok(())
}

/// Perturbed parameter groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum SensitivityParam {
    /// Washing main effect.
    Direct,
    /// Knowledge path; the factor multiplies b1, so a1·b1 moves with it.
    KnowledgePath,
    /// Risk path; the factor multiplies b2.
    RiskPath,
    /// Washing × social capital coefficient.
    Moderation,
}

impl SensitivityParam {
    pub const ALL: [SensitivityParam; 4] = [
        SensitivityParam::Direct,
        SensitivityParam::KnowledgePath,
        SensitivityParam::RiskPath,
        SensitivityParam::Moderation,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            SensitivityParam::Direct => "direct",
            SensitivityParam::KnowledgePath => "knowledge_path",
            SensitivityParam::RiskPath => "risk_path",
            SensitivityParam::Moderation => "moderation",
        }
    }

    fn scale(&self, m: &mut SimModel, f: f64) {
        match self {
            SensitivityParam::Direct => m.washing *= f,
            SensitivityParam::KnowledgePath => m.knowledge *= f,
            SensitivityParam::RiskPath => m.risk *= f,
            SensitivityParam::Moderation => m.interaction *= f,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityOptions {
    pub perturb_fraction: f64,
    pub reps: usize,
    pub seed: u64,
    /// Scenario label used for the one-at-a-time elasticities.
    pub reference: String,
    pub elasticity_step: f64,
    /// Re-solve the intercept of every perturbed model so it reproduces the
    /// unperturbed baseline uptake.
    pub recalibrate: bool,
}

impl Default for SensitivityOptions {
    fn default() -> Self {
        Self {
            perturb_fraction: 0.2,
            reps: 1000,
            seed: 0,
            reference: ScenarioSpec::comprehensive().label,
            elasticity_step: 0.1,
            recalibrate: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spread {
    pub median: f64,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityReport {
    /// Scenario label → joint-perturbation spread of abs_change.
    pub joint: BTreeMap<String, Spread>,
    /// (scenario, param) → spread when only that parameter is perturbed.
    pub marginal: BTreeMap<(String, SensitivityParam), Spread>,
    /// |Δ abs_change| on the reference scenario per one-at-a-time step.
    pub elasticity: BTreeMap<SensitivityParam, f64>,
    /// Params ordered from most to least sensitive.
    pub ranking: Vec<SensitivityParam>,
    pub scenario_order: Vec<String>,
}

/// Path columns of one population, pre-extracted so perturbed models only
/// recompute the linear index.
struct Frozen {
    w: Vec<f64>,
    m1: Vec<f64>,
    m2: Vec<f64>,
    sc: Vec<f64>,
    ctrl: Vec<f64>,
}

impl Frozen {
    fn new(pop: &Table, model: &SimModel) -> Result<Self> {
        let c = &model.columns;
        Ok(Self {
            w: pop.num(&c.washing)?.to_vec(),
            m1: pop.num(&c.knowledge)?.to_vec(),
            m2: pop.num(&c.risk)?.to_vec(),
            sc: pop.num(&c.social_capital)?.to_vec(),
            ctrl: model.control_index(pop)?,
        })
    }

    fn rate(&self, m: &SimModel) -> f64 {
        numeric::sum(
            (0..self.w.len()).map(|i| sigmoid(m.eta(self.w[i], self.m1[i], self.m2[i], self.sc[i], self.ctrl[i]))),
        ) / self.w.len() as f64
    }

    /// Newton on the intercept until the mean fitted uptake equals `target`.
    fn calibrate(&self, m: &mut SimModel, target: f64) {
        for _ in 0..100 {
            let (mut p, mut d) = (0.0, 0.0);
            for i in 0..self.w.len() {
                let s = sigmoid(m.eta(self.w[i], self.m1[i], self.m2[i], self.sc[i], self.ctrl[i]));
                p += s;
                d += s * (1.0 - s);
            }
            let n = self.w.len() as f64;
            let gap = p / n - target;
            if gap.abs() <= 1e-13 || d <= 0.0 {
                break;
            }
            m.intercept -= gap / (d / n);
        }
    }
}

fn spread(mut v: Vec<f64>) -> Spread {
    v.sort_by(|a, b| a.total_cmp(b));
    Spread {
        median: numeric::quantile_sorted(&v, 0.5),
        lo: numeric::quantile_sorted(&v, 0.05),
        hi: numeric::quantile_sorted(&v, 0.95),
    }
}

/// Uniform ±f perturbation Monte Carlo of every scenario's uptake change
/// plus one-at-a-time elasticities. Rep `r` uses its own seeded stream.
pub fn sensitivity(
    pop: &Table,
    scenarios: &[ScenarioSpec],
    model: &SimModel,
    opts: &SensitivityOptions,
) -> Result<SensitivityReport> {
    if opts.reps < 10 {
        return Err(Error::InvalidSpec(format!(
            "sensitivity needs at least 10 reps, got {}",
            opts.reps
        )));
    }
    if !(0.0..1.0).contains(&opts.perturb_fraction) {
        return Err(Error::InvalidSpec("perturbation fraction outside [0, 1)".into()));
    }
    let base = Frozen::new(pop, model)?;
    let cfs: Vec<Frozen> = scenarios
        .iter()
        .map(|s| Frozen::new(&apply_scenario(pop, s, model)?, model))
        .collect::<Result<_>>()?;
    let change = |m: &SimModel, k: usize| cfs[k].rate(m) - base.rate(m);
    let target = base.rate(model);
    let fix = |m: &mut SimModel| {
        if opts.recalibrate {
            base.calibrate(m, target);
        }
    };
    let f = opts.perturb_fraction;
    let params = SensitivityParam::ALL;
    // per rep: joint change per scenario, then marginal change per (scenario, param)
    let reps: Vec<(Vec<f64>, Vec<f64>)> = par::map_indexed(opts.reps, |r| {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        rng.set_stream(r as u64);
        let factors: Vec<f64> = params
            .iter()
            .map(|_| 1.0 + f * (2.0 * rng.random::<f64>() - 1.0))
            .collect();
        let mut joint = model.clone();
        for (p, fac) in params.iter().zip(&factors) {
            p.scale(&mut joint, *fac);
        }
        fix(&mut joint);
        let j: Vec<f64> = (0..scenarios.len()).map(|k| change(&joint, k)).collect();
        let mut marg = Vec::with_capacity(scenarios.len() * params.len());
        for k in 0..scenarios.len() {
            for (p, fac) in params.iter().zip(&factors) {
                let mut m = model.clone();
                p.scale(&mut m, *fac);
                fix(&mut m);
                marg.push(change(&m, k));
            }
        }
        (j, marg)
    });
    let mut joint = BTreeMap::new();
    let mut marginal = BTreeMap::new();
    for (k, s) in scenarios.iter().enumerate() {
        joint.insert(s.label.clone(), spread(reps.iter().map(|r| r.0[k]).collect()));
        for (pi, p) in params.iter().enumerate() {
            let v = reps.iter().map(|r| r.1[k * params.len() + pi]).collect();
            marginal.insert((s.label.clone(), *p), spread(v));
        }
    }
    let reference = scenarios
        .iter()
        .position(|s| s.label == opts.reference)
        .ok_or_else(|| Error::InvalidSpec(format!("reference scenario `{}` not in the set", opts.reference)))?;
    let point = change(model, reference);
    let elasticity: BTreeMap<SensitivityParam, f64> = params
        .iter()
        .map(|p| {
            let mut m = model.clone();
            p.scale(&mut m, 1.0 + opts.elasticity_step);
            fix(&mut m);
            (*p, (change(&m, reference) - point).abs())
        })
        .collect();
    let mut ranking = params.to_vec();
    ranking.sort_by(|a, b| elasticity[b].total_cmp(&elasticity[a]).then(a.cmp(b)));
    Ok(SensitivityReport {
        joint,
        marginal,
        elasticity,
        ranking,
        scenario_order: scenarios.iter().map(|s| s.label.clone()).collect(),
    })
}

impl SensitivityReport {
    pub fn rank_of(&self, p: SensitivityParam) -> usize {
        self.ranking.iter().position(|q| *q == p).map(|i| i + 1).unwrap_or(0)
    }

    /// `scenario,param,elasticity_rank,median,lo,hi,elasticity`. Rows with
    /// param `all` carry the joint perturbation; changes are fractions.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record([
            "scenario",
            "param",
            "elasticity_rank",
            "median",
            "lo",
            "hi",
            "elasticity",
        ])?;
        for s in &self.scenario_order {
            let j = self.joint[s];
            wr.write_record([
                s.clone(),
                "all".into(),
                "NA".into(),
                format!("{}", j.median),
                format!("{}", j.lo),
                format!("{}", j.hi),
                "NA".into(),
            ])?;
            for p in SensitivityParam::ALL {
                let m = self.marginal[&(s.clone(), p)];
                wr.write_record([
                    s.clone(),
                    p.name().into(),
                    self.rank_of(p).to_string(),
                    format!("{}", m.median),
                    format!("{}", m.lo),
                    format!("{}", m.hi),
                    format!("{}", self.elasticity[&p]),
                ])?;
            }
        }
        wr.flush()?;
        Ok(())
    }
}
