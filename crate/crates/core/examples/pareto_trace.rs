//! Small sum-rate/fairness sweep: a few network targets against the wSLNR
//! family, written as report CSVs.
//!
//! cargo run --release --example pareto_trace -- <out-dir> [epochs]

use std::path::PathBuf;

use fairbeam::autonet::ModelConfig;
use fairbeam::channel::{generate_dataset, split_dataset, ScenarioConfig};
use fairbeam::sweep::{baseline_sweep, emit_reports, pair_table, pareto_sweep, reference_points, SweepEntry};
use fairbeam::trainer::TrainConfig;

fn main() -> fairbeam::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "pareto_out".into()));
    let epochs = args.next().and_then(|s| s.parse().ok()).unwrap_or(20);

    let ds = generate_dataset(&ScenarioConfig { n_t: 8, n_u: 4, seed: 2, ..Default::default() }, 3000)?;
    let (tr, va, te) = split_dataset(&ds, (0.64, 0.16, 0.2), 7)?;
    let base = TrainConfig {
        batch_size: 64,
        max_epochs: epochs,
        model: ModelConfig::for_antennas(8, 2, 2, 2, 0),
        ..Default::default()
    };
    let targets = [0.7, 0.8, 0.9];
    let wslnr = baseline_sweep(&[0.0, 1.0, 2.0], &te)?;
    let runs = pareto_sweep(&targets, &tr, &va, &te, &base)?;
    let table = pair_table(
        &wslnr.iter().map(|e| e.point.clone()).collect::<Vec<_>>(),
        &runs.iter().map(|r| r.entry.point.clone()).collect::<Vec<_>>(),
    );
    let entries: Vec<SweepEntry> = wslnr
        .into_iter()
        .chain(reference_points(&te))
        .chain(runs.into_iter().map(|r| r.entry))
        .collect();
    for e in &entries {
        let p = &e.point;
        println!(
            "{:<6} {:>5} sum rate {:>7.3} jain {:.4} lambda {}",
            p.method,
            p.knob.map(|k| k.to_string()).unwrap_or_default(),
            p.mean_sum_rate,
            p.mean_jain,
            p.lambda_final.map(|l| format!("{l:.3}")).unwrap_or_else(|| "-".into())
        );
    }
    let meta = serde_json::json!({ "example": "pareto_trace", "epochs": epochs });
    for p in emit_reports(&entries, &table, &out, &meta)? {
        println!("wrote {}", p.display());
    }
    Ok(())
}
