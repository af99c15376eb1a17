//! Entropy-weighted capability composite from talent, patent and R&D
//! indicators.

use std::collections::{BTreeMap, HashSet};
use std::io::{Read, Write};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::washing_index::FirmYearSeries;

#[derive(Debug, Clone, PartialEq)]
pub struct CapabilityRecord {
    pub firm_id: String,
    pub year: i32,
    pub talent_share: f64,
    pub patent_count: u64,
    pub rd_intensity: f64,
}

impl CapabilityRecord {
    pub fn validate(&self) -> Result<()> {
        let bad = |reason: &str| Error::InvalidRecord {
            firm: self.firm_id.clone(),
            year: self.year,
            reason: reason.to_string(),
        };
        if !(0.0..=1.0).contains(&self.talent_share) {
            return Err(bad("talent_share outside [0, 1]"));
        }
        if !(self.rd_intensity >= 0.0) || !self.rd_intensity.is_finite() {
            return Err(bad("rd_intensity must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntropyWeights {
    pub w_talent: f64,
    pub w_patent: f64,
    pub w_rd: f64,
}

impl EntropyWeights {
    pub fn as_array(&self) -> [f64; 3] {
        [self.w_talent, self.w_patent, self.w_rd]
    }
}

/// Whether entropy weights are estimated per year or from the pooled panel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WeightPooling {
    #[default]
    Annual,
    Pooled,
}

/// Min-max scaling to [0, 1]; a constant column maps to 0.5.
pub fn minmax_normalize(column: &[f64]) -> Vec<f64> {
    let lo = column.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = column.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return vec![0.5; column.len()];
    }
    column.iter().map(|x| (x - lo) / (hi - lo)).collect()
}

/// Entropy weights for an `n x m` matrix of normalized indicators (rows are
/// firms). Constant columns carry no information and get zero weight
/// unless every column is constant, in which case weights are uniform.
pub fn entropy_weights_matrix(rows: &[Vec<f64>]) -> Result<Vec<f64>> {
    let n = rows.len();
    if n < 2 {
        return Err(Error::InsufficientFirms(n));
    }
    let m = rows[0].len();
    let ln_n = (n as f64).ln();
    let mut div = vec![0.0; m];
    for j in 0..m {
        let col: Vec<f64> = rows.iter().map(|r| r[j]).collect();
        let total: f64 = col.iter().sum();
        let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !(total > 0.0) || hi == lo {
            continue;
        }
        let h: f64 = col
            .iter()
            .map(|x| {
                let p = x / total;
                if p > 0.0 {
                    p * p.ln()
                } else {
                    0.0
                }
            })
            .sum();
        let e = (-h / ln_n).clamp(0.0, 1.0);
        div[j] = 1.0 - e;
    }
    let s: f64 = div.iter().sum();
    if !(s > 0.0) {
        return Ok(vec![1.0 / m as f64; m]);
    }
    Ok(div.iter().map(|d| d / s).collect())
}

pub fn entropy_weights(rows: &[[f64; 3]]) -> Result<EntropyWeights> {
    let v: Vec<Vec<f64>> = rows.iter().map(|r| r.to_vec()).collect();
    let w = entropy_weights_matrix(&v)?;
    Ok(EntropyWeights {
        w_talent: w[0],
        w_patent: w[1],
        w_rd: w[2],
    })
}

fn normalized_matrix(records: &[CapabilityRecord]) -> Vec<[f64; 3]> {
    let talent: Vec<f64> = records.iter().map(|r| r.talent_share).collect();
    let patents: Vec<f64> = records.iter().map(|r| (r.patent_count as f64).ln_1p()).collect();
    let rd: Vec<f64> = records.iter().map(|r| r.rd_intensity).collect();
    let (t, p, d) = (
        minmax_normalize(&talent),
        minmax_normalize(&patents),
        minmax_normalize(&rd),
    );
    (0..records.len()).map(|i| [t[i], p[i], d[i]]).collect()
}

fn composite(norm: &[[f64; 3]], w: &EntropyWeights) -> Vec<f64> {
    let wa = w.as_array();
    norm.iter()
        .map(|r| (wa[0] * r[0] + wa[1] * r[1] + wa[2] * r[2]).clamp(0.0, 1.0))
        .collect()
}

/// Capability composite for the firms of one year.
pub fn walk_scores(records: &[CapabilityRecord]) -> Result<(FirmYearSeries, EntropyWeights)> {
    let mut seen = HashSet::new();
    for r in records {
        r.validate()?;
        if !seen.insert(r.firm_id.as_str()) {
            return Err(Error::DuplicateFirm(r.firm_id.clone()));
        }
    }
    if records.len() < 2 {
        return Err(Error::InsufficientFirms(records.len()));
    }
    let norm = normalized_matrix(records);
    let w = entropy_weights(&norm)?;
    let scores = composite(&norm, &w);
    let series = FirmYearSeries::new(
        records
            .iter()
            .zip(scores)
            .map(|(r, s)| (r.firm_id.clone(), r.year, s))
            .collect(),
    )?;
    Ok((series, w))
}

/// Walk scores for a multi-year panel, returning per-year weights.
pub fn walk_scores_panel(
    records: &[CapabilityRecord],
    pooling: WeightPooling,
) -> Result<(FirmYearSeries, BTreeMap<i32, EntropyWeights>)> {
    let mut by_year: BTreeMap<i32, Vec<CapabilityRecord>> = BTreeMap::new();
    for r in records {
        by_year.entry(r.year).or_default().push(r.clone());
    }
    match pooling {
        WeightPooling::Annual => {
            let mut entries = Vec::new();
            let mut weights = BTreeMap::new();
            for (year, recs) in &by_year {
                let (s, w) = walk_scores(recs)?;
                entries.extend(s.entries().iter().cloned());
                weights.insert(*year, w);
            }
            Ok((FirmYearSeries::new(entries)?, weights))
        }
        WeightPooling::Pooled => {
            for recs in by_year.values() {
                let mut seen = HashSet::new();
                for r in recs {
                    r.validate()?;
                    if !seen.insert(r.firm_id.as_str()) {
                        return Err(Error::DuplicateFirm(r.firm_id.clone()));
                    }
                }
            }
            let norm = normalized_matrix(records);
            let w = entropy_weights(&norm)?;
            let scores = composite(&norm, &w);
            let series = FirmYearSeries::new(
                records
                    .iter()
                    .zip(scores)
                    .map(|(r, s)| (r.firm_id.clone(), r.year, s))
                    .collect(),
            )?;
            Ok((series, by_year.keys().map(|y| (*y, w)).collect()))
        }
    }
}

#[derive(Debug, Deserialize)]
struct RawCapability {
    firm_id: String,
    year: String,
    talent_share: String,
    patent_count: String,
    rd_intensity: String,
}

/// A rejected input row: 1-based data line number and reason.
#[derive(Debug, Clone, PartialEq)]
pub struct RowRejection {
    pub line: usize,
    pub reason: String,
}

/// Read `firm_id,year,talent_share,patent_count,rd_intensity`. Rows with
/// missing or out-of-range indicators are rejected and reported.
pub fn read_capability_csv<R: Read>(reader: R) -> Result<(Vec<CapabilityRecord>, Vec<RowRejection>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut ok = Vec::new();
    let mut bad = Vec::new();
    for (i, row) in rdr.deserialize::<RawCapability>().enumerate() {
        let line = i + 2;
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                bad.push(RowRejection {
                    line,
                    reason: e.to_string(),
                });
                continue;
            }
        };
        let parsed = (|| -> std::result::Result<CapabilityRecord, String> {
            let year = row.year.parse::<i32>().map_err(|_| "year".to_string())?;
            let talent_share = row
                .talent_share
                .parse::<f64>()
                .map_err(|_| "missing talent_share".to_string())?;
            let patents = row
                .patent_count
                .parse::<f64>()
                .map_err(|_| "missing patent_count".to_string())?;
            if !(patents >= 0.0) || patents.fract() != 0.0 {
                return Err("patent_count must be a non-negative integer".into());
            }
            let rd_intensity = row
                .rd_intensity
                .parse::<f64>()
                .map_err(|_| "missing rd_intensity".to_string())?;
            let rec = CapabilityRecord {
                firm_id: row.firm_id.clone(),
                year,
                talent_share,
                patent_count: patents as u64,
                rd_intensity,
            };
            rec.validate().map_err(|e| e.to_string())?;
            Ok(rec)
        })();
        match parsed {
            Ok(r) => ok.push(r),
            Err(reason) => bad.push(RowRejection { line, reason }),
        }
    }
    Ok((ok, bad))
}

pub fn write_capability_csv<W: Write>(records: &[CapabilityRecord], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["firm_id", "year", "talent_share", "patent_count", "rd_intensity"])?;
    for r in records {
        wr.write_record([
            r.firm_id.clone(),
            r.year.to_string(),
            format!("{}", r.talent_share),
            r.patent_count.to_string(),
            format!("{}", r.rd_intensity),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

pub fn write_weights_csv<W: Write>(weights: &BTreeMap<i32, EntropyWeights>, w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["year", "w_talent", "w_patent", "w_rd"])?;
    for (y, ew) in weights {
        wr.write_record([
            y.to_string(),
            format!("{}", ew.w_talent),
            format!("{}", ew.w_patent),
            format!("{}", ew.w_rd),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(firm: &str, t: f64, p: u64, r: f64) -> CapabilityRecord {
        CapabilityRecord {
            firm_id: firm.into(),
            year: 2019,
            talent_share: t,
            patent_count: p,
            rd_intensity: r,
        }
    }

    #[test]
    fn minmax_examples() {
        assert_eq!(minmax_normalize(&[1.0, 2.0, 3.0]), vec![0.0, 0.5, 1.0]);
        assert_eq!(minmax_normalize(&[7.0, 7.0, 7.0]), vec![0.5, 0.5, 0.5]);
        assert_eq!(minmax_normalize(&[0.0, 10.0]), vec![0.0, 1.0]);
    }

    #[test]
    fn degenerate_second_column_gets_zero_weight() {
        let w = entropy_weights_matrix(&[vec![1.0, 0.5], vec![0.0, 0.5]]).unwrap();
        assert!((w[0] - 1.0).abs() < 1e-15 && w[1].abs() < 1e-15);
    }

    #[test]
    fn symmetric_columns_get_equal_weights() {
        let rows = [[0.0, 1.0, 0.3], [0.3, 0.0, 1.0], [1.0, 0.3, 0.0]];
        let w = entropy_weights(&rows).unwrap();
        for x in w.as_array() {
            assert!((x - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn all_constant_is_uniform_and_one_firm_errors() {
        let w = entropy_weights(&[[0.5; 3], [0.5; 3]]).unwrap();
        assert_eq!(w.as_array(), [1.0 / 3.0; 3]);
        assert_eq!(entropy_weights(&[[0.1, 0.2, 0.3]]), Err(Error::InsufficientFirms(1)));
    }

    #[test]
    fn dominance_and_endpoint() {
        let (s, _) = walk_scores(&[rec("a", 0.1, 50, 0.05), rec("b", 0.02, 3, 0.01)]).unwrap();
        assert!(s.get("a", 2019).unwrap() > s.get("b", 2019).unwrap());
        assert!((s.get("a", 2019).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn duplicate_firm_rejected() {
        let r = walk_scores(&[rec("a", 0.1, 1, 0.1), rec("a", 0.2, 2, 0.2)]);
        assert_eq!(r.unwrap_err(), Error::DuplicateFirm("a".into()));
    }

    #[test]
    fn csv_rejects_missing_indicator() {
        let src = "firm_id,year,talent_share,patent_count,rd_intensity\n\
                   a,2019,0.1,3,0.02\n\
                   b,2019,,3,0.02\n\
                   c,2019,1.5,3,0.02\n";
        let (ok, bad) = read_capability_csv(src.as_bytes()).unwrap();
        assert_eq!(ok.len(), 1);
        assert_eq!(bad.iter().map(|b| b.line).collect::<Vec<_>>(), vec![3, 4]);
    }
}
