use std::collections::BTreeMap;

use proptest::prelude::*;
use washgap::capability::{entropy_weights, entropy_weights_matrix, minmax_normalize, walk_scores, CapabilityRecord};
use washgap::corpus_text::{tfidf_scores, DocumentTermStats, Lexicon};
use washgap::washing_index::{trend_report, washing, zscore, FirmYearSeries};

fn rec(f: &str, t: f64, p: u64, r: f64) -> CapabilityRecord {
    CapabilityRecord {
        firm_id: f.into(),
        year: 2019,
        talent_share: t,
        patent_count: p,
        rd_intensity: r,
    }
}

fn three_firms() -> Vec<CapabilityRecord> {
    vec![
        rec("A", 0.02, 0, 0.01),
        rec("B", 0.05, 10, 0.03),
        rec("C", 0.10, 100, 0.08),
    ]
}

// Spreadsheet-style route: every step written out by hand.
fn hand_walk() -> ([f64; 3], [f64; 3]) {
    let talent = [0.0, (0.05 - 0.02) / (0.10 - 0.02), 1.0];
    let lp = [0f64.ln_1p(), 10f64.ln_1p(), 100f64.ln_1p()];
    let patent = [0.0, (lp[1] - lp[0]) / (lp[2] - lp[0]), 1.0];
    let rd = [0.0, (0.03 - 0.01) / (0.08 - 0.01), 1.0];
    let cols = [talent, patent, rd];
    let mut d = [0.0; 3];
    for (j, c) in cols.iter().enumerate() {
        let s: f64 = c.iter().sum();
        let mut e = 0.0;
        for x in c {
            let p = x / s;
            if p > 0.0 {
                e -= p * p.ln();
            }
        }
        d[j] = 1.0 - e / 3f64.ln();
    }
    let ds: f64 = d.iter().sum();
    let w = [d[0] / ds, d[1] / ds, d[2] / ds];
    let mut sc = [0.0; 3];
    for i in 0..3 {
        sc[i] = w[0] * cols[0][i] + w[1] * cols[1][i] + w[2] * cols[2][i];
    }
    (w, sc)
}

#[test]
fn three_firm_entropy_oracle() {
    // values from an offline computation of the same recipe
    let w_ref = [0.33335548889443495, 0.29671494847339347, 0.3699295626321717];
    let s_ref = [0.0, 0.38486775463452955, 1.0];
    let (w_hand, s_hand) = hand_walk();
    let (scores, w) = walk_scores(&three_firms()).unwrap();
    for j in 0..3 {
        assert!((w.as_array()[j] - w_ref[j]).abs() < 1e-9);
        assert!((w.as_array()[j] - w_hand[j]).abs() < 1e-9);
    }
    for (i, f) in ["A", "B", "C"].iter().enumerate() {
        let s = scores.get(f, 2019).unwrap();
        assert!((s - s_ref[i]).abs() < 1e-9);
        assert!((s - s_hand[i]).abs() < 1e-9);
    }
}

#[test]
fn zero_heavy_columns_stay_finite() {
    let recs = vec![rec("A", 0.0, 0, 0.0), rec("B", 0.0, 0, 0.0), rec("C", 0.3, 0, 0.02)];
    let (scores, w) = walk_scores(&recs).unwrap();
    assert!(w.as_array().iter().all(|v| v.is_finite()));
    assert!(scores.values().iter().all(|v| v.is_finite()));
    assert_eq!(w.w_patent, 0.0);
}

fn firms_strategy() -> impl Strategy<Value = Vec<(f64, u64, f64)>> {
    prop::collection::vec((0.0f64..1.0, 0u64..500, 0.0f64..0.5), 2..12)
}

fn records(v: &[(f64, u64, f64)]) -> Vec<CapabilityRecord> {
    v.iter()
        .enumerate()
        .map(|(i, (t, p, r))| rec(&format!("F{i:02}"), *t, *p, *r))
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn weights_sum_to_one(rows in prop::collection::vec(prop::array::uniform3(0.0f64..1.0), 2..30)) {
        let w = entropy_weights(&rows).unwrap().as_array();
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(w.iter().all(|v| *v >= 0.0 && v.is_finite()));
    }
}

proptest! {
    #[test]
    fn general_matrix_weights_sum_to_one(rows in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 5), 2..20)) {
        let w = entropy_weights_matrix(&rows).unwrap();
        prop_assert_eq!(w.len(), 5);
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn composite_in_unit_interval(v in firms_strategy()) {
        let (s, _) = walk_scores(&records(&v)).unwrap();
        prop_assert!(s.values().iter().all(|x| (0.0..=1.0 + 1e-12).contains(x)));
    }

    #[test]
    fn composite_ignores_affine_rescaling(v in firms_strategy(), c in 0.1f64..10.0, a in 0.0f64..0.5, b in 0.1f64..0.5) {
        let base = records(&v);
        let moved: Vec<CapabilityRecord> = base
            .iter()
            .map(|r| CapabilityRecord { rd_intensity: r.rd_intensity * c, talent_share: a + b * r.talent_share, ..r.clone() })
            .collect();
        let (s0, _) = walk_scores(&base).unwrap();
        let (s1, _) = walk_scores(&moved).unwrap();
        for (x, y) in s0.values().iter().zip(s1.values()) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn dominance_orders_composite(v in firms_strategy(), dt in 0.0f64..0.2, dp in 0u64..50, dr in 0.0f64..0.2) {
        let mut recs = records(&v);
        let first = recs[0].clone();
        recs.push(CapabilityRecord {
            firm_id: "ZZ".into(),
            talent_share: (first.talent_share + dt).min(1.0),
            patent_count: first.patent_count + dp,
            rd_intensity: first.rd_intensity + dr,
            ..first.clone()
        });
        let (s, _) = walk_scores(&recs).unwrap();
        prop_assert!(s.get("ZZ", 2019).unwrap() >= s.get(&first.firm_id, 2019).unwrap() - 1e-12);
    }

    #[test]
    fn minmax_lands_in_unit_interval(xs in prop::collection::vec(-1e3f64..1e3, 1..40)) {
        let n = minmax_normalize(&xs);
        prop_assert!(n.iter().all(|v| (0.0..=1.0).contains(v)));
    }
}

fn doc(firm: &str, counts: &[(&str, u64)], tokens: u64) -> DocumentTermStats {
    DocumentTermStats {
        firm_id: firm.into(),
        year: 2019,
        term_counts: counts
            .iter()
            .filter(|c| c.1 > 0)
            .map(|(p, c)| (p.to_string(), *c))
            .collect(),
        doc_token_count: tokens,
    }
}

const PHRASES: [&str; 4] = ["machine learning", "big data", "smart risk control", "robo advisor"];

fn corpus_strategy() -> impl Strategy<Value = Vec<(Vec<u64>, u64)>> {
    prop::collection::vec((prop::collection::vec(0u64..6, 4), 30u64..400), 1..10)
}

fn corpus(v: &[(Vec<u64>, u64)]) -> Vec<DocumentTermStats> {
    v.iter()
        .enumerate()
        .map(|(i, (c, t))| {
            let pairs: Vec<(&str, u64)> = PHRASES.iter().copied().zip(c.iter().copied()).collect();
            doc(&format!("F{i:02}"), &pairs, *t)
        })
        .collect()
}

fn lexicon() -> Lexicon {
    Lexicon::from_entries(PHRASES.iter().map(|p| (p.to_string(), 1.0))).unwrap()
}

proptest! {
    #[test]
    fn tfidf_permutation_invariant(v in corpus_strategy(), seed in any::<u64>()) {
        let lex = lexicon();
        let c = corpus(&v);
        let mut shuffled = c.clone();
        let k = (seed as usize) % shuffled.len();
        shuffled.rotate_left(k);
        shuffled.reverse();
        prop_assert_eq!(tfidf_scores(&c, &lex).unwrap(), tfidf_scores(&shuffled, &lex).unwrap());
    }

    #[test]
    fn tfidf_scale_invariant(v in corpus_strategy()) {
        let lex = lexicon();
        let c = corpus(&v);
        let mut doubled = c.clone();
        for cc in doubled[0].term_counts.values_mut() {
            *cc *= 2;
        }
        doubled[0].doc_token_count *= 2;
        let a = tfidf_scores(&c, &lex).unwrap();
        let b = tfidf_scores(&doubled, &lex).unwrap();
        prop_assert!((a[0].score - b[0].score).abs() < 1e-12);
    }

    #[test]
    fn extra_occurrence_never_lowers_score(v in corpus_strategy(), which in 0usize..4) {
        // replaces a filler token, so the token count is unchanged
        let lex = lexicon();
        let c = corpus(&v);
        let before = tfidf_scores(&c, &lex).unwrap();
        let mut more = c.clone();
        *more[0].term_counts.entry(PHRASES[which].to_string()).or_insert(0) += 1;
        let was_present = c[0].count(PHRASES[which]) > 0;
        let after = tfidf_scores(&more, &lex).unwrap();
        if was_present || c.len() == 1 {
            prop_assert!(after[0].score >= before[0].score);
        } else {
            // a new document frequency lowers idf for everyone else only
            prop_assert!(after[0].score >= before[0].score - 1e-15);
        }
    }

    #[test]
    fn no_lexicon_hits_score_zero(v in corpus_strategy(), tokens in 1u64..500) {
        let lex = lexicon();
        let mut c = corpus(&v);
        c.push(doc("ZZ", &[], tokens));
        let s = tfidf_scores(&c, &lex).unwrap();
        prop_assert_eq!(s.iter().find(|t| t.firm_id == "ZZ").unwrap().score, 0.0);
    }
}

fn series(vals: &[(usize, i32, f64)]) -> FirmYearSeries {
    FirmYearSeries::new(vals.iter().map(|(f, y, v)| (format!("F{f:02}"), *y, *v)).collect()).unwrap()
}

fn panel_strategy() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (3usize..10).prop_flat_map(|n| {
        (
            prop::collection::vec(-5.0f64..5.0, n * 2),
            prop::collection::vec(-5.0f64..5.0, n * 2),
        )
    })
}

fn two_year(v: &[f64]) -> FirmYearSeries {
    let n = v.len() / 2;
    let e: Vec<(usize, i32, f64)> = (0..v.len()).map(|i| (i % n, 2018 + (i / n) as i32, v[i])).collect();
    series(&e)
}

proptest! {
    #[test]
    fn zscore_moments((a, _) in panel_strategy()) {
        let z = zscore(&two_year(&a)).unwrap();
        for y in [2018, 2019] {
            let xs: Vec<f64> = z.entries().iter().filter(|e| e.1 == y).map(|e| e.2).collect();
            let m = xs.iter().sum::<f64>() / xs.len() as f64;
            let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
            prop_assert!(m.abs() < 1e-10 && (v.sqrt() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn washing_antisymmetric((a, b) in panel_strategy()) {
        let (t, w) = (two_year(&a), two_year(&b));
        let x = washing(&t, &w).unwrap();
        let y = washing(&w, &t).unwrap();
        for (p, q) in x.values().iter().zip(y.values()) {
            prop_assert!((p + q).abs() < 1e-12);
        }
    }

    #[test]
    fn washing_ignores_talk_shift((a, b) in panel_strategy(), shift in -100.0f64..100.0) {
        let (t, w) = (two_year(&a), two_year(&b));
        let n = a.len() / 2;
        let shifted: Vec<f64> = a.iter().enumerate().map(|(i, v)| if i >= n { v + shift } else { *v }).collect();
        let x = washing(&t, &w).unwrap();
        let y = washing(&two_year(&shifted), &w).unwrap();
        for (p, q) in x.values().iter().zip(y.values()) {
            prop_assert!((p - q).abs() < 1e-9);
        }
    }

    #[test]
    fn trend_correlation_affine_invariant(
        means in prop::collection::vec(-2.0f64..2.0, 4),
        usage in prop::collection::vec(0.05f64..0.5, 4),
        c in 0.1f64..10.0,
        d in -1.0f64..1.0,
    ) {
        prop_assume!(means.windows(2).any(|w| (w[0] - w[1]).abs() > 1e-3));
        prop_assume!(usage.windows(2).any(|w| (w[0] - w[1]).abs() > 1e-3));
        let idx = |scale: f64, off: f64| {
            let e: Vec<(usize, i32, f64)> = means.iter().enumerate().map(|(i, m)| (0, 2016 + i as i32, m * scale + off)).collect();
            series(&e)
        };
        let u: BTreeMap<i32, f64> = usage.iter().enumerate().map(|(i, v)| (2016 + i as i32, *v)).collect();
        let u2: BTreeMap<i32, f64> = u.iter().map(|(k, v)| (*k, v * c)).collect();
        let pts = [(0.0, 1.0), (1.0, 0.5), (2.0, 0.4)];
        let r0 = trend_report(&idx(1.0, 0.0), &u, &pts).unwrap().correlation;
        let r1 = trend_report(&idx(c, d), &u2, &pts).unwrap().correlation;
        prop_assert!((r0 - r1).abs() < 1e-9);
        prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&r0));
    }
}

#[test]
fn zscore_example_and_idempotence() {
    let z = zscore(&series(&[(0, 2019, 1.0), (1, 2019, 3.0)])).unwrap();
    let v = z.values();
    assert!((v[0] + std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
    assert!((v[1] - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
    let again = zscore(&z).unwrap();
    for (a, b) in again.values().iter().zip(&v) {
        assert!((a - b).abs() < 1e-10);
    }
}
