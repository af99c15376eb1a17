use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};

use super::TruthConfig;
use crate::capability::{walk_scores_panel, CapabilityRecord, WeightPooling};
use crate::corpus_text::{scan_document_with, talk_scores_by_year, Lexicon, SimpleTokenizer};
use crate::error::{Error, Result};
use crate::numeric::{self, sigmoid};
use crate::panel::{industry_loo, FirmInfo};
use crate::washing_index::{washing, FirmYearSeries};

const INDUSTRIES: [&str; 6] = [
    "payments",
    "lending",
    "banking",
    "insurance",
    "wealth",
    "consumer_credit",
];

const FILLER: [&str; 40] = [
    "the",
    "company",
    "revenue",
    "growth",
    "customers",
    "quarterly",
    "service",
    "market",
    "branch",
    "loan",
    "payment",
    "users",
    "rural",
    "report",
    "year",
    "operating",
    "business",
    "strategy",
    "mobile",
    "network",
    "capital",
    "fund",
    "product",
    "outlets",
    "deposits",
    "merchants",
    "county",
    "village",
    "partners",
    "compliance",
    "settlement",
    "channel",
    "office",
    "staff",
    "expansion",
    "coverage",
    "income",
    "pricing",
    "agents",
    "accounts",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Document {
    pub firm_id: String,
    pub year: i32,
    pub text: String,
}

#[derive(Debug, Clone)]
pub struct FirmPanel {
    pub firms: Vec<FirmInfo>,
    pub capability: Vec<CapabilityRecord>,
    pub documents: Vec<Document>,
    /// Within-year standardized index recomputed from the documents and
    /// capability records.
    pub index: FirmYearSeries,
    /// Platform user shares; each year sums to one.
    pub shares: BTreeMap<(String, i32), f64>,
    /// Standardized first-stage shock per firm.
    pub iv_shock: BTreeMap<String, f64>,
}

fn firm_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    rng
}

/// Filler vocabulary that shares no token with any lexicon phrase.
fn filler_words(lex: &Lexicon) -> Vec<&'static str> {
    let used: HashSet<&str> = lex
        .entries()
        .iter()
        .flat_map(|e| e.tokens.iter().map(String::as_str))
        .collect();
    FILLER.iter().copied().filter(|w| !used.contains(w)).collect()
}

/// Every lexicon phrase once, `extra` more phrases drawn uniformly, and
/// filler up to `len` tokens. Phrases are always separated by filler.
fn synth_document(rng: &mut ChaCha8Rng, lex: &Lexicon, filler: &[&str], len: usize, extra: usize) -> String {
    let phrases: Vec<&str> = lex.entries().iter().map(|e| e.phrase.as_str()).collect();
    let mut units: Vec<&str> = phrases.clone();
    for _ in 0..extra {
        units.push(phrases[rng.random_range(0..phrases.len())]);
    }
    units.shuffle(rng);
    let phrase_tokens: usize = units.iter().map(|p| p.split(' ').count()).sum();
    let n_fill = len.saturating_sub(phrase_tokens).max(units.len());
    // each unit gets one trailing filler, the rest land in random gaps
    let mut gaps = vec![1usize; units.len()];
    for _ in units.len()..n_fill {
        let g = rng.random_range(0..gaps.len());
        gaps[g] += 1;
    }
    let mut words: Vec<&str> = Vec::with_capacity(phrase_tokens + n_fill);
    for (u, g) in units.iter().zip(&gaps) {
        words.push(u);
        for _ in 0..*g {
            words.push(filler[rng.random_range(0..filler.len())]);
        }
    }
    let mut text = String::new();
    for (i, w) in words.iter().enumerate() {
        text.push_str(w);
        if i % 14 == 13 {
            text.push_str(".\n");
        } else {
            text.push(' ');
        }
    }
    text.push('\n');
    text
}

/// Exponential tilt `w ∝ exp(θ x)` whose weighted mean is `target`.
pub(crate) fn tilt_to_mean(x: &[f64], target: f64) -> Option<Vec<f64>> {
    let lo = x.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(target > lo && target < hi) {
        return None;
    }
    let weights = |theta: f64| {
        let m = x.iter().map(|v| theta * v).fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = x.iter().map(|v| (theta * v - m).exp()).collect();
        let s: f64 = w.iter().sum();
        w.into_iter().map(|v| v / s).collect::<Vec<_>>()
    };
    let mean = |w: &[f64]| w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    let (mut a, mut b) = (-200.0, 200.0);
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if mean(&weights(mid)) < target {
            a = mid;
        } else {
            b = mid;
        }
    }
    Some(weights(0.5 * (a + b)))
}

/// Draw latent capability and promotion paths, render capability records
/// and documents, rebuild the index from them with the library scorers,
/// then set user shares and founding years against the configured targets.
pub fn gen_firms(cfg: &TruthConfig, seed: u64) -> Result<FirmPanel> {
    cfg.validate()?;
    let mut rng = firm_rng(seed);
    let lex = Lexicon::default_set();
    let filler = filler_words(&lex);
    let std = Normal::new(0.0, 1.0).unwrap();
    let years = cfg.years();
    let n_ind = cfg.n_industries;

    let mut firms = Vec::with_capacity(cfg.n_firms);
    let mut capability = Vec::new();
    let mut documents = Vec::new();
    let mut stats = Vec::new();
    for f in 0..cfg.n_firms {
        let firm_id = format!("F{:02}", f + 1);
        let industry = INDUSTRIES
            .get(f % n_ind)
            .map(|s| s.to_string())
            .unwrap_or(format!("industry{}", f % n_ind));
        let cap0: f64 = std.sample(&mut rng);
        let hype0: f64 = 0.3 * cap0 + 0.95 * std.sample(&mut rng);
        for (t, &year) in years.iter().enumerate() {
            let t = t as f64;
            let cap = cap0 + 0.15 * t + 0.25 * std.sample(&mut rng);
            let hype = hype0 + 0.2 * t + 0.3 * std.sample(&mut rng);
            let talent = sigmoid(-3.0 + 0.6 * cap + 0.2 * std.sample(&mut rng));
            let lam = (2.0 + 0.9 * cap).exp();
            let patents = Poisson::new(lam).map(|p| p.sample(&mut rng)).unwrap_or(0.0) as u64;
            let rd = (-3.4 + 0.45 * cap + 0.15 * std.sample(&mut rng)).exp();
            capability.push(CapabilityRecord {
                firm_id: firm_id.clone(),
                year,
                talent_share: talent,
                patent_count: patents,
                rd_intensity: rd,
            });
            let len = 1500 + rng.random_range(0..2500usize);
            let rate = len as f64 * 0.006 * (0.8 * hype).exp();
            let extra = Poisson::new(rate).map(|p| p.sample(&mut rng)).unwrap_or(0.0) as usize;
            let text = synth_document(&mut rng, &lex, &filler, len, extra);
            stats.push(scan_document_with(&text, &lex, &SimpleTokenizer, &firm_id, year));
            documents.push(Document {
                firm_id: firm_id.clone(),
                year,
                text,
            });
        }
        firms.push(FirmInfo {
            firm_id,
            industry,
            founded: 0,
        });
    }

    let talk = talk_scores_by_year(&stats, &lex)?;
    let talk = FirmYearSeries::new(talk.into_iter().map(|s| (s.firm_id, s.year, s.score)).collect())?;
    let (walk, _) = walk_scores_panel(&capability, WeightPooling::Annual)?;
    let index = washing(&talk, &walk)?;

    let mut shares = BTreeMap::new();
    for (&year, &target) in years.iter().zip(&cfg.index_trajectory) {
        let ids: Vec<&String> = firms.iter().map(|f| &f.firm_id).collect();
        let vals: Vec<f64> = ids.iter().map(|f| index.get(f, year).unwrap()).collect();
        let w = tilt_to_mean(&vals, target).ok_or_else(|| {
            let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            Error::CalibrationFailure(format!(
                "index mean target {target} for {year} is outside the realized range [{lo:.3}, {hi:.3}]"
            ))
        })?;
        for (f, s) in ids.into_iter().zip(w) {
            shares.insert((f.clone(), year), s);
        }
    }

    // Founding years solve the first-stage equation
    // w = c + k_ind * loo + k_age * age + e for each firm.
    let last = cfg.last_year;
    let loo = industry_loo(&index, &firms, last);
    let noise: Vec<f64> = firms.iter().map(|_| std.sample(&mut rng)).collect();
    let raw: Vec<f64> = firms
        .iter()
        .zip(&noise)
        .map(|(f, e)| {
            let w = index.get(&f.firm_id, last).unwrap();
            (w - cfg.iv_industry_loading * loo[&f.firm_id] - cfg.iv_noise_sd * e) / cfg.iv_age_loading
        })
        .collect();
    let shift = 3.0 - raw.iter().cloned().fold(f64::INFINITY, f64::min);
    for (f, r) in firms.iter_mut().zip(&raw) {
        f.founded = last - (r + shift).round() as i32;
    }
    let (m, s) = (numeric::mean(&noise), numeric::sample_sd(&noise));
    let iv_shock = firms
        .iter()
        .zip(&noise)
        .map(|(f, e)| (f.firm_id.clone(), if s > 0.0 { (e - m) / s } else { 0.0 }))
        .collect();

    Ok(FirmPanel {
        firms,
        capability,
        documents,
        index,
        shares,
        iv_shock,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tilt_hits_target_and_rejects_out_of_range() {
        let x = [-1.0, 0.0, 2.0];
        let w = tilt_to_mean(&x, 0.7).unwrap();
        let m: f64 = w.iter().zip(&x).map(|(a, b)| a * b).sum();
        assert!((m - 0.7).abs() < 1e-9);
        assert!(tilt_to_mean(&x, 2.5).is_none());
    }

    #[test]
    fn panel_shape_and_trajectory() {
        let cfg = TruthConfig::default();
        let p = gen_firms(&cfg, 7).unwrap();
        assert_eq!(p.documents.len(), 72);
        assert_eq!(p.capability.len(), 72);
        let lex = Lexicon::default_set();
        let d = &p.documents[0];
        let st = scan_document_with(&d.text, &lex, &SimpleTokenizer, "x", 0);
        assert!(lex.entries().iter().all(|e| st.count(&e.phrase) > 0));
        for (y, target) in cfg.years().iter().zip(&cfg.index_trajectory) {
            let m: f64 = p
                .firms
                .iter()
                .map(|f| p.shares[&(f.firm_id.clone(), *y)] * p.index.get(&f.firm_id, *y).unwrap())
                .sum();
            assert!((m - target).abs() < 1e-6);
        }
        assert!(p.firms.iter().all(|f| f.founded <= cfg.last_year - 3));
    }
}
