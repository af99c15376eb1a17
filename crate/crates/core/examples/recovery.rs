//! Coverage of the headline estimates over seeds.
//!
//! `cargo run --release -p washgap-core --example recovery -- [seeds]`

use washgap::datagen::{generate, oracle_report, standard_estimates, TruthConfig};

fn main() {
    let seeds: u64 = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(20);
    let cfg = TruthConfig::default();
    let mut hits = std::collections::BTreeMap::<String, (usize, usize, f64)>::new();
    for seed in 1..=seeds {
        let b = generate(&cfg, seed).expect("generate");
        let t = b.analysis_table().expect("prepare");
        let est = standard_estimates(&t).expect("fit");
        let rep = oracle_report(&b.manifest, &est, 0.95);
        for r in &rep.rows {
            let e = hits.entry(r.name.clone()).or_default();
            e.1 += 1;
            e.2 += r.estimate;
            if r.covered == Some(true) {
                e.0 += 1;
            }
        }
        let line: Vec<String> = rep
            .rows
            .iter()
            .map(|r| format!("{}={:.3}", r.name, r.estimate))
            .collect();
        println!("seed {seed}: {}", line.join(" "));
    }
    for (k, (c, n, s)) in hits {
        println!("{k:>16}: covered {c}/{n}  mean estimate {:.4}", s / n as f64);
    }
}
