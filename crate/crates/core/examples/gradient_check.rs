//! Compares the autodiff gradient of the full training loss with central
//! finite differences on a tiny model, in double precision.
//!
//! The max-min extremes are pinned at their unperturbed values so the
//! difference quotient sees the same (detached) scaling as the backward pass.

use fairbeam::autonet::{Model, ModelConfig};
use fairbeam::channel::{generate_dataset, ChannelSample, ScenarioConfig};
use fairbeam::fairness_loss::DualState;
use fairbeam::trainer::{batch_graph, batch_graph_with};

fn main() -> fairbeam::Result<()> {
    let sc = ScenarioConfig { n_t: 2, n_u: 3, seed: 3, ..Default::default() };
    let ds = generate_dataset(&sc, 4)?;
    let batch: Vec<&ChannelSample> = ds.samples.iter().collect();
    let mut model = Model::<f64>::new(ModelConfig { n_f: 5, d_model: 10, n_att: 2, n_head: 2, n_t: 2, init_seed: 5 })?;
    let dual = DualState::new(1.5, 0.95, 0.003, 0.01)?;
    let power = sc.power_per_user();

    let (mut g, bound, rep) = batch_graph(&model, &batch, power, &dual)?;
    g.backward(rep.loss)?;
    let grads: Vec<Vec<f64>> = bound.vars.iter().map(|&v| g.grad(v).unwrap_or(&[]).to_vec()).collect();

    let h = 1e-6;
    let mut pairs = Vec::new();
    for p in 0..model.params.len() {
        for j in 0..model.params[p].data.len() {
            let orig = model.params[p].data[j];
            let mut loss_at = |v: f64| -> fairbeam::Result<f64> {
                model.params[p].data[j] = v;
                let (g, _, r) = batch_graph_with(&model, &batch, power, &dual, Some(rep.extremes))?;
                Ok(g.scalar(r.loss))
            };
            let fd = (loss_at(orig + h)? - loss_at(orig - h)?) / (2.0 * h);
            model.params[p].data[j] = orig;
            pairs.push((format!("{}[{j}]", model.params[p].name), fd, grads[p][j]));
        }
    }
    // Key biases shift every attention score equally, so their true gradient
    // is zero; compare tiny entries against a floor tied to the largest one.
    let floor = 1e-4 * pairs.iter().fold(0.0f64, |m, p| m.max(p.1.abs()));
    let mut worst = (0.0f64, String::new());
    for (name, fd, an) in pairs {
        let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(floor);
        if rel > worst.0 {
            worst = (rel, name);
        }
    }
    println!("loss {:.6}, batch jain {:.4}", g.scalar(rep.loss), rep.j_bar);
    println!("{} parameters, worst relative error {:.2e} at {}", model.num_params(), worst.0, worst.1);
    Ok(())
}
