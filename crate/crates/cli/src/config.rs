//! Run configuration: a single TOML file with input paths (or a datagen
//! block), stage toggles, column bindings, scenarios and stochastic sizes.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use washgap::moderation::SplitRule;
use washgap::panel;
use washgap::policy::ScenarioSpec;

use crate::error::{CliError, Result};

/// Output directory override.
pub const OUT_ENV: &str = "WASHGAP_OUT";
pub const DEFAULT_OUT: &str = "washgap_out";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    /// Not part of the config hash.
    #[serde(skip_serializing)]
    pub out: Option<PathBuf>,
    pub inputs: Option<Inputs>,
    pub datagen: Option<DatagenBlock>,
    pub stages: Stages,
    pub columns: Columns,
    pub bootstrap: BootstrapBlock,
    pub sensitivity: SensitivityBlock,
    pub simulation: SimulationBlock,
    pub moderation: ModerationBlock,
    pub validation: ValidationBlock,
}

/// Paths are resolved against the config file's directory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Inputs {
    /// Built-in lexicon when absent.
    pub lexicon: Option<PathBuf>,
    pub corpus_dir: PathBuf,
    pub capability: PathBuf,
    pub firms: PathBuf,
    pub households: PathBuf,
    pub platform_usage: Option<PathBuf>,
    pub usage_rates: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatagenBlock {
    pub households: usize,
    pub solve_sorting: bool,
}

impl Default for DatagenBlock {
    fn default() -> Self {
        let t = washgap::datagen::TruthConfig::default();
        Self {
            households: t.n_households,
            solve_sorting: t.solve_sorting,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Stages {
    pub index: bool,
    pub trend: bool,
    pub fit: bool,
    pub mediate: bool,
    pub bootstrap: bool,
    pub moderate: bool,
    pub iv: bool,
    pub simulate: bool,
    pub sensitivity: bool,
}

impl Default for Stages {
    fn default() -> Self {
        Self {
            index: true,
            trend: true,
            fit: true,
            mediate: true,
            bootstrap: true,
            moderate: true,
            iv: true,
            simulate: true,
            sensitivity: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Columns {
    pub usage: String,
    pub breadth: String,
    pub mediators: [String; 2],
    pub moderator: String,
    /// Columns of the prepared table; log transforms are derived.
    pub controls: Vec<String>,
    pub instruments: Vec<String>,
    /// Text or 0/1 columns used for simulation subgroup deltas.
    pub partitions: Vec<String>,
    /// Analysis year for the platform index; last index year when absent.
    pub year: Option<i32>,
}

impl Default for Columns {
    fn default() -> Self {
        Self {
            usage: panel::USAGE.into(),
            breadth: panel::BREADTH.into(),
            mediators: [panel::KNOWLEDGE.into(), panel::RISK.into()],
            moderator: panel::SOCIAL_CAPITAL.into(),
            controls: panel::CONTROLS.iter().map(|s| s.to_string()).collect(),
            instruments: vec![panel::INDUSTRY_MEAN.into(), panel::FIRM_AGE.into()],
            partitions: vec![panel::REGION.into(), panel::MIGRANT.into()],
            year: None,
        }
    }
}

impl Columns {
    /// Standardized moderator column attached during preparation.
    pub fn moderator_std(&self) -> String {
        format!("{}_std", self.moderator)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BootstrapBlock {
    pub replicates: usize,
    pub level: f64,
}

impl Default for BootstrapBlock {
    fn default() -> Self {
        Self {
            replicates: 500,
            level: 0.95,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensitivityBlock {
    pub reps: usize,
    pub perturb: f64,
}

impl Default for SensitivityBlock {
    fn default() -> Self {
        Self {
            reps: 1000,
            perturb: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub label: String,
    #[serde(default = "one")]
    pub washing_multiplier: f64,
    #[serde(default)]
    pub washing_cap_at_mean: bool,
    #[serde(default = "one")]
    pub knowledge_multiplier: f64,
    #[serde(default = "one")]
    pub social_capital_multiplier: f64,
}

fn one() -> f64 {
    1.0
}

impl From<&ScenarioSpec> for Scenario {
    fn from(s: &ScenarioSpec) -> Self {
        Self {
            label: s.label.clone(),
            washing_multiplier: s.washing_multiplier,
            washing_cap_at_mean: s.washing_cap_at_mean,
            knowledge_multiplier: s.knowledge_multiplier,
            social_capital_multiplier: s.social_capital_multiplier,
        }
    }
}

impl Scenario {
    pub fn spec(&self) -> ScenarioSpec {
        ScenarioSpec {
            label: self.label.clone(),
            washing_multiplier: self.washing_multiplier,
            washing_cap_at_mean: self.washing_cap_at_mean,
            knowledge_multiplier: self.knowledge_multiplier,
            social_capital_multiplier: self.social_capital_multiplier,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationBlock {
    pub scenarios: Vec<Scenario>,
    /// Households the simulated rates are scaled to for cost-benefit.
    pub population_size: f64,
    /// Platforms billed for washing governance; number of firms when absent.
    pub platforms: Option<usize>,
    pub regulator_cost_per_platform: Option<f64>,
}

impl Default for SimulationBlock {
    fn default() -> Self {
        Self {
            scenarios: ScenarioSpec::standard_set().iter().map(Scenario::from).collect(),
            population_size: 1_000_000.0,
            platforms: None,
            regulator_cost_per_platform: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleKind {
    Median,
    AtMost,
    AtLeast,
    Equals,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitDimension {
    pub name: String,
    pub column: String,
    /// Focal group; results are complement minus focal.
    pub rule: RuleKind,
    #[serde(default)]
    pub value: f64,
}

impl SplitDimension {
    pub fn rule(&self) -> SplitRule {
        match self.rule {
            RuleKind::Median => SplitRule::Median,
            RuleKind::AtMost => SplitRule::AtMost(self.value),
            RuleKind::AtLeast => SplitRule::AtLeast(self.value),
            RuleKind::Equals => SplitRule::Equals(self.value),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModerationBlock {
    pub dimensions: Vec<SplitDimension>,
}

impl Default for ModerationBlock {
    fn default() -> Self {
        let d = |name: &str, column: &str, rule, value| SplitDimension {
            name: name.into(),
            column: column.into(),
            rule,
            value,
        };
        Self {
            dimensions: vec![
                d("social_capital_low", panel::SOCIAL_CAPITAL, RuleKind::Median, 0.0),
                d("education_low", panel::EDUCATION, RuleKind::AtMost, 9.0),
                d("migrant", panel::MIGRANT, RuleKind::Equals, 1.0),
                d("no_prior_use", panel::PRIOR_USE, RuleKind::Equals, 0.0),
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidationBlock {
    /// Abort when more than this share of rows violates the schema.
    pub max_violation_share: f64,
}

impl Default for ValidationBlock {
    fn default() -> Self {
        Self {
            max_violation_share: 0.05,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let src = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: RunConfig =
            toml::from_str(&src).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        if let Some(dir) = path.parent() {
            cfg.resolve_paths(dir);
        }
        Ok(cfg)
    }

    /// Datagen defaults with every stage on.
    pub fn synthetic(seed: u64) -> Self {
        Self {
            seed: Some(seed),
            datagen: Some(DatagenBlock::default()),
            ..Self::default()
        }
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(i) = &mut self.inputs {
            i.lexicon.as_mut().map(fix);
            fix(&mut i.corpus_dir);
            fix(&mut i.capability);
            fix(&mut i.firms);
            fix(&mut i.households);
            i.platform_usage.as_mut().map(fix);
            i.usage_rates.as_mut().map(fix);
        }
        if let Some(o) = &mut self.out {
            fix(o);
        }
    }

    pub fn stochastic(&self) -> bool {
        self.datagen.is_some()
            || (self.stages.mediate && self.stages.bootstrap)
            || (self.stages.simulate && self.stages.sensitivity)
    }

    /// Structural checks that need no file access.
    pub fn check(&self) -> Result<()> {
        let bad = |m: String| Err(CliError::Config(m));
        match (&self.inputs, &self.datagen) {
            (None, None) => return bad("config needs an [inputs] or a [datagen] block".into()),
            (Some(_), Some(_)) => return bad("[inputs] and [datagen] are mutually exclusive".into()),
            _ => {}
        }
        if self.stochastic() && self.seed.is_none() {
            return bad("a seed is required when datagen, bootstrap or sensitivity is enabled".into());
        }
        let c = &self.columns;
        if c.mediators[0] == c.mediators[1] {
            return bad("the two mediators must differ".into());
        }
        for m in &c.mediators {
            if c.controls.contains(m) {
                return bad(format!("mediator `{m}` is also a control"));
            }
        }
        for z in &c.instruments {
            if c.controls.contains(z) || *z == c.usage {
                return bad(format!("instrument `{z}` overlaps the controls or outcome"));
            }
        }
        if c.instruments.is_empty() {
            return bad("at least one instrument is required".into());
        }
        if self.stages.bootstrap && self.bootstrap.replicates < washgap::mediation::MIN_REPLICATES {
            return bad(format!(
                "bootstrap needs at least {} replicates",
                washgap::mediation::MIN_REPLICATES
            ));
        }
        if !(self.bootstrap.level > 0.0 && self.bootstrap.level < 1.0) {
            return bad("bootstrap level must lie in (0, 1)".into());
        }
        if self.stages.sensitivity && self.sensitivity.reps < 10 {
            return bad("sensitivity needs at least 10 reps".into());
        }
        if !(0.0..1.0).contains(&self.sensitivity.perturb) {
            return bad("sensitivity perturbation must lie in [0, 1)".into());
        }
        for s in &self.simulation.scenarios {
            s.spec().validate().map_err(|e| CliError::Config(e.to_string()))?;
        }
        if self.simulation.population_size.is_nan() || self.simulation.population_size <= 0.0 {
            return bad("population_size must be positive".into());
        }
        if !(0.0..1.0).contains(&self.validation.max_violation_share) {
            return bad("max_violation_share must lie in [0, 1)".into());
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form; the output directory and thread
    /// count never enter it.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(json))
    }

    /// Precedence: flag, environment, config file, default.
    pub fn resolve_out(&self, flag: Option<&Path>) -> PathBuf {
        if let Some(p) = flag {
            return p.to_path_buf();
        }
        if let Some(p) = std::env::var_os(OUT_ENV).filter(|v| !v.is_empty()) {
            return PathBuf::from(p);
        }
        self.out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
    }
}
