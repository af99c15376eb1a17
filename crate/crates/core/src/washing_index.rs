//! Signal-gap index: standardized talk minus standardized walk, plus the
//! yearly trend statistics.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;

use crate::error::{Error, Result};
use crate::numeric;

/// Values keyed by `(firm_id, year)`, kept in insertion order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FirmYearSeries {
    entries: Vec<(String, i32, f64)>,
}

impl FirmYearSeries {
    pub fn new(entries: Vec<(String, i32, f64)>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        let mut dups = Vec::new();
        for (f, y, v) in &entries {
            if !v.is_finite() {
                return Err(Error::InvalidRecord {
                    firm: f.clone(),
                    year: *y,
                    reason: "non-finite value".into(),
                });
            }
            if !seen.insert((f.as_str(), *y)) {
                dups.push(format!("{f}/{y}"));
            }
        }
        if !dups.is_empty() {
            return Err(Error::SeriesMisaligned(dups));
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[(String, i32, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, firm: &str, year: i32) -> Option<f64> {
        self.entries
            .iter()
            .find(|(f, y, _)| f == firm && *y == year)
            .map(|e| e.2)
    }

    pub fn values(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.2).collect()
    }

    pub fn years(&self) -> Vec<i32> {
        let s: BTreeSet<i32> = self.entries.iter().map(|e| e.1).collect();
        s.into_iter().collect()
    }

    fn key_map(&self) -> HashMap<(&str, i32), f64> {
        self.entries.iter().map(|(f, y, v)| ((f.as_str(), *y), *v)).collect()
    }

    fn with_values(&self, values: Vec<f64>) -> Self {
        Self {
            entries: self
                .entries
                .iter()
                .zip(values)
                .map(|((f, y, _), v)| (f.clone(), *y, v))
                .collect(),
        }
    }
}

/// How talk and walk are put on a common scale before differencing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Standardization {
    #[default]
    WithinYear,
    Pooled,
    Raw,
}

fn standardize(xs: &[f64]) -> Option<Vec<f64>> {
    let m = numeric::mean(xs);
    let sd = numeric::sample_sd(xs);
    if !(sd > 0.0) || !sd.is_finite() {
        return None;
    }
    Some(xs.iter().map(|x| (x - m) / sd).collect())
}

/// Within-year z-scores with the sample standard deviation.
pub fn zscore(series: &FirmYearSeries) -> Result<FirmYearSeries> {
    let mut by_year: BTreeMap<i32, Vec<usize>> = BTreeMap::new();
    for (i, e) in series.entries.iter().enumerate() {
        by_year.entry(e.1).or_default().push(i);
    }
    let mut out = vec![0.0; series.len()];
    for (year, idx) in by_year {
        let xs: Vec<f64> = idx.iter().map(|&i| series.entries[i].2).collect();
        let z = standardize(&xs).ok_or(Error::DegenerateYear(year))?;
        for (k, &i) in idx.iter().enumerate() {
            out[i] = z[k];
        }
    }
    Ok(series.with_values(out))
}

/// z-scores over all firm-years at once.
pub fn zscore_pooled(series: &FirmYearSeries) -> Result<FirmYearSeries> {
    let xs = series.values();
    let z = standardize(&xs).ok_or_else(|| Error::DegenerateYear(series.years().first().copied().unwrap_or(0)))?;
    Ok(series.with_values(z))
}

fn standardize_mode(series: &FirmYearSeries, mode: Standardization) -> Result<FirmYearSeries> {
    match mode {
        Standardization::WithinYear => zscore(series),
        Standardization::Pooled => zscore_pooled(series),
        Standardization::Raw => Ok(series.clone()),
    }
}

fn check_aligned(talk: &FirmYearSeries, walk: &FirmYearSeries) -> Result<()> {
    let a = talk.key_map();
    let b = walk.key_map();
    let mut missing: Vec<String> = a
        .keys()
        .filter(|k| !b.contains_key(*k))
        .chain(b.keys().filter(|k| !a.contains_key(*k)))
        .map(|(f, y)| format!("{f}/{y}"))
        .collect();
    missing.sort();
    if missing.is_empty() {
        Ok(())
    } else {
        Err(Error::SeriesMisaligned(missing))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndexRow {
    pub firm_id: String,
    pub year: i32,
    pub talk_std: f64,
    pub walk_std: f64,
    pub washing: f64,
}

/// Full index table in the key order of `talk`.
pub fn washing_table(talk: &FirmYearSeries, walk: &FirmYearSeries, mode: Standardization) -> Result<Vec<IndexRow>> {
    check_aligned(talk, walk)?;
    let zt = standardize_mode(talk, mode)?;
    let zw = standardize_mode(walk, mode)?;
    let wmap = zw.key_map();
    Ok(zt
        .entries
        .iter()
        .map(|(f, y, t)| {
            let w = wmap[&(f.as_str(), *y)];
            IndexRow {
                firm_id: f.clone(),
                year: *y,
                talk_std: *t,
                walk_std: w,
                washing: t - w,
            }
        })
        .collect())
}

/// zscore(talk) - zscore(walk), within year.
pub fn washing(talk: &FirmYearSeries, walk: &FirmYearSeries) -> Result<FirmYearSeries> {
    let rows = washing_table(talk, walk, Standardization::WithinYear)?;
    FirmYearSeries::new(rows.into_iter().map(|r| (r.firm_id, r.year, r.washing)).collect())
}

pub fn write_index_csv<W: Write>(rows: &[IndexRow], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["firm_id", "year", "ai_talk_std", "ai_walk_std", "ai_washing"])?;
    for r in rows {
        wr.write_record([
            r.firm_id.clone(),
            r.year.to_string(),
            format!("{}", r.talk_std),
            format!("{}", r.walk_std),
            format!("{}", r.washing),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrendReport {
    pub yearly_means: BTreeMap<i32, f64>,
    pub usage_rate: BTreeMap<i32, f64>,
    pub correlation: f64,
    pub scatter_slope: f64,
    pub scatter_se: f64,
    pub scatter_t: f64,
}

/// Simple OLS of y on x: (slope, classical se, t).
pub fn ols_slope(x: &[f64], y: &[f64]) -> Result<(f64, f64, f64)> {
    let n = x.len();
    if n < 3 || y.len() != n {
        return Err(Error::InsufficientData(format!("{n} points for a slope t-statistic")));
    }
    let mx = numeric::mean(x);
    let my = numeric::mean(y);
    let sxx = numeric::sum(x.iter().map(|a| (a - mx) * (a - mx)));
    if !(sxx > 0.0) {
        return Err(Error::InsufficientData("no variation in the index".into()));
    }
    let sxy = numeric::sum(x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)));
    let slope = sxy / sxx;
    let icept = my - slope * mx;
    let rss = numeric::sum(x.iter().zip(y).map(|(a, b)| {
        let e = b - icept - slope * a;
        e * e
    }));
    let se = (rss / (n - 2) as f64 / sxx).sqrt();
    let t = if se > 0.0 {
        slope / se
    } else {
        f64::INFINITY.copysign(slope)
    };
    Ok((slope, se, t))
}

/// Yearly index means. With `weights` (keyed by firm and year) each year
/// uses the weighted mean, otherwise the plain mean.
pub fn yearly_means(index: &FirmYearSeries, weights: Option<&HashMap<(String, i32), f64>>) -> BTreeMap<i32, f64> {
    let mut acc: BTreeMap<i32, (numeric::CompensatedSum, numeric::CompensatedSum)> = BTreeMap::new();
    for (f, y, v) in &index.entries {
        let w = weights
            .map(|m| m.get(&(f.clone(), *y)).copied().unwrap_or(0.0))
            .unwrap_or(1.0);
        let e = acc.entry(*y).or_default();
        e.0.add(w * v);
        e.1.add(w);
    }
    acc.into_iter()
        .map(|(y, (s, w))| {
            (
                y,
                if w.value() > 0.0 {
                    s.value() / w.value()
                } else {
                    f64::NAN
                },
            )
        })
        .collect()
}

/// Correlation of yearly means against usage and the cross-sectional slope
/// of product breadth on the index.
pub fn trend_report(
    index: &FirmYearSeries,
    usage_rate: &BTreeMap<i32, f64>,
    cross_section: &[(f64, f64)],
) -> Result<TrendReport> {
    trend_report_weighted(index, None, usage_rate, cross_section)
}

pub fn trend_report_weighted(
    index: &FirmYearSeries,
    weights: Option<&HashMap<(String, i32), f64>>,
    usage_rate: &BTreeMap<i32, f64>,
    cross_section: &[(f64, f64)],
) -> Result<TrendReport> {
    let means = yearly_means(index, weights);
    let years: Vec<i32> = means.keys().filter(|y| usage_rate.contains_key(y)).copied().collect();
    if years.len() < 2 {
        return Err(Error::InsufficientData(format!("{} matched years", years.len())));
    }
    let mx: Vec<f64> = years.iter().map(|y| means[y]).collect();
    let uy: Vec<f64> = years.iter().map(|y| usage_rate[y]).collect();
    let correlation =
        numeric::pearson(&mx, &uy).ok_or_else(|| Error::InsufficientData("zero variance in yearly series".into()))?;
    let xs: Vec<f64> = cross_section.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = cross_section.iter().map(|p| p.1).collect();
    let (scatter_slope, scatter_se, scatter_t) = ols_slope(&xs, &ys)?;
    Ok(TrendReport {
        yearly_means: means,
        usage_rate: usage_rate.clone(),
        correlation,
        scatter_slope,
        scatter_se,
        scatter_t,
    })
}

impl TrendReport {
    /// Plot-ready `year,mean_index,usage_rate`.
    pub fn write_series_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["year", "mean_index", "usage_rate"])?;
        for (y, m) in &self.yearly_means {
            let u = self
                .usage_rate
                .get(y)
                .map(|u| format!("{u}"))
                .unwrap_or_else(|| "NA".into());
            wr.write_record([y.to_string(), format!("{m}"), u])?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn write_summary_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["statistic", "value"])?;
        for (k, v) in [
            ("correlation", self.correlation),
            ("scatter_slope", self.scatter_slope),
            ("scatter_se", self.scatter_se),
            ("scatter_t", self.scatter_t),
        ] {
            wr.write_record([k.to_string(), format!("{v}")])?;
        }
        wr.flush()?;
        Ok(())
    }
}
