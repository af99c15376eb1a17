//! Re-derive the latent-model constants behind the default generator.
//!
//! `cargo run --release -p washgap-core --example calibrate -- [n] [seed]`

use washgap::datagen::{calibrate_structural, TruthConfig};

fn main() {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(200_000);
    let seed: u64 = args.next().and_then(|a| a.parse().ok()).unwrap_or(1000);
    let cfg = TruthConfig::default();
    match calibrate_structural(&cfg, n, seed) {
        Ok((s, p)) => {
            println!("{s:#?}");
            println!("{p:#?}");
        }
        Err(e) => {
            eprintln!("calibration failed: {e}");
            std::process::exit(1);
        }
    }
}
