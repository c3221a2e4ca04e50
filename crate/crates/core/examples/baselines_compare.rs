//! Evaluates MRT, ZF, SLNR and wSLNR on a freshly generated dataset and
//! prints mean sum rate and mean Jain's index for each.
//!
//! cargo run --example baselines_compare -- [samples]

use fairbeam::baselines::{Baseline, Method};
use fairbeam::channel::{generate_dataset, ScenarioConfig};
use fairbeam::trainer::evaluate;

fn main() -> fairbeam::Result<()> {
    let samples = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1000);
    let ds = generate_dataset(&ScenarioConfig::default(), samples)?;
    println!("{samples} drops, {} antennas, {} users", ds.config.n_t, ds.config.n_u);
    println!("{:<18} {:>10} {:>8}", "method", "sum rate", "jain");
    let mut methods: Vec<Baseline> = [Method::Mrt, Method::Zf, Method::Slnr].map(Baseline::new).to_vec();
    methods.push(Baseline::wslnr(1.0));
    for b in methods {
        match evaluate(&b, &ds) {
            Ok(s) => println!("{:<18} {:>10.3} {:>8.4}", s.label, s.mean_sum_rate, s.mean_jain),
            Err(e) => println!("{:<18} failed: {e}", b.to_string()),
        }
    }
    Ok(())
}
