//! Household file schema, firm metadata, and the derived analysis columns
//! that both the generator and the pipeline attach before model fitting.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::iv::leave_one_out_mean;
use crate::numeric;
use crate::table::Table;
use crate::washing_index::FirmYearSeries;

pub const HOUSEHOLD_ID: &str = "household_id";
pub const FIRM_ID: &str = "firm_id";
pub const REGION: &str = "region";
pub const USAGE: &str = "y1_usage";
pub const BREADTH: &str = "y2_breadth";
pub const KNOWLEDGE: &str = "knowledge_exclusion";
pub const RISK: &str = "risk_exclusion";
pub const SOCIAL_CAPITAL: &str = "social_capital";
pub const PRIOR_USE: &str = "prior_use";
pub const AGE: &str = "age";
pub const EDUCATION: &str = "education";
pub const FIN_LITERACY: &str = "financial_literacy";
pub const INCOME: &str = "income";
pub const NET_ASSETS: &str = "net_assets";
pub const MIGRANT: &str = "migrant";
pub const GDP: &str = "gdp_per_capita";

// derived
pub const WASHING: &str = "ai_washing";
pub const INDUSTRY_MEAN: &str = "industry_mean_washing";
pub const FIRM_AGE: &str = "firm_age";
pub const LN_INCOME: &str = "ln_income";
pub const LN_WEALTH: &str = "ln_wealth";
pub const LN_GDP: &str = "ln_gdp";
pub const SOCIAL_CAPITAL_STD: &str = "social_capital_std";

/// Numeric household columns in file order, after the text identifiers.
pub const RAW_NUMERIC: [&str; 18] = [
    PRIOR_USE,
    USAGE,
    BREADTH,
    KNOWLEDGE,
    RISK,
    SOCIAL_CAPITAL,
    AGE,
    EDUCATION,
    FIN_LITERACY,
    INCOME,
    NET_ASSETS,
    MIGRANT,
    GDP,
    "gender",
    "married",
    "health",
    "risk_attitude",
    "family_size",
];

/// Default control set for every household model.
pub const CONTROLS: [&str; 12] = [
    AGE,
    EDUCATION,
    FIN_LITERACY,
    LN_INCOME,
    LN_WEALTH,
    MIGRANT,
    LN_GDP,
    "gender",
    "married",
    "health",
    "risk_attitude",
    "family_size",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FirmInfo {
    pub firm_id: String,
    pub industry: String,
    pub founded: i32,
}

pub fn read_firms_csv<R: Read>(r: R) -> Result<Vec<FirmInfo>> {
    let t = Table::read_csv(r)?;
    let ids = t.text(FIRM_ID)?;
    let ind = t.text("industry")?;
    let founded = t.num("founded")?;
    ids.into_iter()
        .zip(ind)
        .zip(founded)
        .enumerate()
        .map(|(i, ((firm_id, industry), f))| {
            if !f.is_finite() || f.fract() != 0.0 {
                return Err(Error::InvalidOutcome(format!(
                    "firms row {}: founding year `{f}`",
                    i + 2
                )));
            }
            Ok(FirmInfo {
                firm_id,
                industry,
                founded: *f as i32,
            })
        })
        .collect()
}

pub fn write_firms_csv<W: Write>(firms: &[FirmInfo], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record([FIRM_ID, "industry", "founded"])?;
    for f in firms {
        wr.write_record([f.firm_id.clone(), f.industry.clone(), f.founded.to_string()])?;
    }
    wr.flush()?;
    Ok(())
}

/// Platform user shares keyed by firm and year.
pub fn read_shares_csv<R: Read>(r: R) -> Result<HashMap<(String, i32), f64>> {
    let t = Table::read_csv(r)?;
    let ids = t.text(FIRM_ID)?;
    let years = t.num("year")?;
    let shares = t.num("user_share")?;
    Ok(ids
        .into_iter()
        .zip(years)
        .zip(shares)
        .map(|((f, y), s)| ((f, *y as i32), *s))
        .collect())
}

pub fn write_shares_csv<W: Write>(shares: &BTreeMap<(String, i32), f64>, w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record([FIRM_ID, "year", "user_share"])?;
    for ((f, y), s) in shares {
        wr.write_record([f.clone(), y.to_string(), format!("{s}")])?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_usage_rates_csv<R: Read>(r: R) -> Result<BTreeMap<i32, f64>> {
    let t = Table::read_csv(r)?;
    let years = t.num("year")?;
    let rates = t.num("usage_rate")?;
    Ok(years.iter().zip(rates).map(|(y, r)| (*y as i32, *r)).collect())
}

pub fn write_usage_rates_csv<W: Write>(rates: &BTreeMap<i32, f64>, w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["year", "usage_rate"])?;
    for (y, r) in rates {
        wr.write_record([y.to_string(), format!("{r}")])?;
    }
    wr.flush()?;
    Ok(())
}

/// Net assets can be negative; they enter as ln(1 + max(a, 0)).
pub fn ln_wealth(assets: f64) -> f64 {
    assets.max(0.0).ln_1p()
}

/// Industry leave-one-out mean of the index for every firm in `year`.
pub fn industry_loo(index: &FirmYearSeries, firms: &[FirmInfo], year: i32) -> BTreeMap<String, f64> {
    let present: Vec<&FirmInfo> = firms.iter().filter(|f| index.get(&f.firm_id, year).is_some()).collect();
    let values: Vec<f64> = present.iter().map(|f| index.get(&f.firm_id, year).unwrap()).collect();
    let groups: Vec<String> = present.iter().map(|f| f.industry.clone()).collect();
    let loo = leave_one_out_mean(&values, &groups);
    present.iter().zip(loo).map(|(f, v)| (f.firm_id.clone(), v)).collect()
}

/// Attach the platform index for `year`, the industry leave-one-out mean,
/// firm age, log transforms and the standardized moderator. Households on
/// unknown platforms get `NaN` in the firm-level columns.
pub fn prepare(households: &Table, index: &FirmYearSeries, firms: &[FirmInfo], year: i32) -> Result<Table> {
    let mut t = households.clone();
    let ids = t.text(FIRM_ID)?;
    let loo = industry_loo(index, firms, year);
    let founded: HashMap<&str, i32> = firms.iter().map(|f| (f.firm_id.as_str(), f.founded)).collect();
    let w: Vec<f64> = ids.iter().map(|f| index.get(f, year).unwrap_or(f64::NAN)).collect();
    let m: Vec<f64> = ids.iter().map(|f| loo.get(f).copied().unwrap_or(f64::NAN)).collect();
    let age: Vec<f64> = ids
        .iter()
        .map(|f| founded.get(f.as_str()).map(|y| (year - y) as f64).unwrap_or(f64::NAN))
        .collect();
    t.set_num(WASHING, w);
    t.set_num(INDUSTRY_MEAN, m);
    t.set_num(FIRM_AGE, age);
    let inc: Vec<f64> = t.num(INCOME)?.iter().map(|v| v.ln()).collect();
    let wl: Vec<f64> = t.num(NET_ASSETS)?.iter().map(|v| ln_wealth(*v)).collect();
    let gdp: Vec<f64> = t.num(GDP)?.iter().map(|v| v.ln()).collect();
    t.set_num(LN_INCOME, inc);
    t.set_num(LN_WEALTH, wl);
    t.set_num(LN_GDP, gdp);
    let sc = t.num(SOCIAL_CAPITAL)?;
    t.set_num(SOCIAL_CAPITAL_STD, standardized(sc));
    Ok(t)
}

/// z-scores over the finite entries; non-finite entries stay `NaN`.
pub fn standardized(xs: &[f64]) -> Vec<f64> {
    let fin: Vec<f64> = xs.iter().copied().filter(|v| v.is_finite()).collect();
    let (m, s) = (numeric::mean(&fin), numeric::sample_sd(&fin));
    xs.iter()
        .map(|v| {
            if v.is_finite() && s > 0.0 {
                (v - m) / s
            } else {
                f64::NAN
            }
        })
        .collect()
}
