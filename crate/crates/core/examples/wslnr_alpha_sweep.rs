//! Traces the wSLNR sum-rate/fairness tradeoff as the weight exponent grows.

use fairbeam::channel::{generate_dataset, ScenarioConfig};
use fairbeam::sweep::baseline_sweep;

fn main() -> fairbeam::Result<()> {
    let ds = generate_dataset(&ScenarioConfig { seed: 21, ..Default::default() }, 500)?;
    let alphas = [0.0, 0.25, 0.5, 1.0, 2.0, 3.0, 5.0];
    println!("alpha,mean_sum_rate,mean_jain");
    for e in baseline_sweep(&alphas, &ds)? {
        let p = e.point;
        println!("{},{:.4},{:.4}", p.knob.unwrap_or_default(), p.mean_sum_rate, p.mean_jain);
    }
    Ok(())
}
