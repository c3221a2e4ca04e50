//! Trains one fairness-constrained model at desk scale and compares it with
//! wSLNR on held-out drops.
//!
//! cargo run --release --example train_fair -- [j_lb] [epochs]
//! RUST_LOG=info shows per-epoch progress.

use fairbeam::autonet::ModelConfig;
use fairbeam::baselines::Baseline;
use fairbeam::channel::{generate_dataset, ScenarioConfig};
use fairbeam::trainer::{evaluate, train, TrainConfig};

fn main() -> fairbeam::Result<()> {
    env_logger::init();
    let mut args = std::env::args().skip(1);
    let j_lb = args.next().and_then(|s| s.parse().ok()).unwrap_or(0.9);
    let epochs = args.next().and_then(|s| s.parse().ok()).unwrap_or(60);

    let sc = ScenarioConfig { n_t: 8, n_u: 4, seed: 11, ..Default::default() };
    let train_set = generate_dataset(&sc, 4000)?;
    let val = generate_dataset(&ScenarioConfig { seed: 12, ..sc.clone() }, 1000)?;
    let test = generate_dataset(&ScenarioConfig { seed: 13, ..sc }, 1000)?;

    let cfg = TrainConfig {
        j_lb,
        batch_size: 64,
        max_epochs: epochs,
        seed: 1,
        model: ModelConfig::for_antennas(8, 4, 4, 4, 1),
        ..Default::default()
    };
    let out = train(&cfg, &train_set, &val)?;
    let rec = out.selected_record();
    println!(
        "selected epoch {} of {} (feasible: {}), lambda {:.4}",
        out.selected_epoch,
        out.history.epochs.len(),
        out.feasible,
        out.dual.lambda
    );
    println!("validation: sum rate {:.3}, jain {:.4}", rec.val_sum_rate, rec.val_jain);
    let dnn = evaluate(&out.model, &test)?;
    println!("test dnn:   sum rate {:.3}, jain {:.4}", dnn.mean_sum_rate, dnn.mean_jain);
    for alpha in [0.0, 1.0, 2.0] {
        let b = evaluate(&Baseline::wslnr(alpha), &test)?;
        println!("test {:<12} sum rate {:.3}, jain {:.4}", b.label, b.mean_sum_rate, b.mean_jain);
    }
    Ok(())
}
