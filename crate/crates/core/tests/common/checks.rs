//! One function per acceptance criterion. Each returns a short detail line on
//! success and a description of the first violation on failure, so the same
//! code backs both the ordinary test targets and the acceptance harness.

use std::path::Path;

use fairbeam::autonet::{decode_checkpoint, encode_checkpoint, normalize_columns, Graph, Model, ModelConfig};
use fairbeam::baselines::{wslnr, zf, Baseline};
use fairbeam::channel::{
    decode_fbd, encode_fbd, generate_dataset, load_dataset, save_dataset, ChannelSample, Dataset, ScenarioConfig,
};
use fairbeam::complex_core::hdot;
use fairbeam::fairness_loss::{dual_update, graph_rates, hinge_loss, ChannelBatch, DualState};
use fairbeam::metrics::{evaluate_rates, jain_index};
use fairbeam::sweep::pareto_sweep;
use fairbeam::trainer::{batch_graph, batch_graph_with, evaluate, TrainConfig};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;

use super::{abs_cos, random_sample, rng, wslnr_oracle};

pub type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

/// wSLNR directions against the adjugate oracle and ZF nulling residuals.
pub fn baseline_oracles() -> Check {
    let mut worst_dir = 0.0f64;
    let mut r = rng(101);
    for i in 0..100 {
        let n_t = r.random_range(1..=3);
        let n_u = r.random_range(1..=3);
        let alpha = [0.0, 0.5, 1.0, 2.0, 5.0][i % 5];
        let s = random_sample(n_t, n_u, 1000 + i as u64);
        let bf = wslnr(&s, alpha, 1.0).map_err(|e| e.to_string())?;
        for (f, o) in bf.f_tilde.iter().zip(wslnr_oracle(&s, alpha)) {
            worst_dir = worst_dir.max(1.0 - abs_cos(f, &o));
        }
    }
    ensure(worst_dir <= 1e-8, || format!("wslnr direction deviation {worst_dir:e} > 1e-8"))?;

    let mut worst_null = 0.0f64;
    for i in 0..100 {
        let n_t = r.random_range(2..=8);
        let n_u = r.random_range(1..=n_t);
        let s = random_sample(n_t, n_u, 5000 + i as u64);
        let bf = zf(&s, 1.0).map_err(|e| e.to_string())?;
        for (u, f) in bf.f_tilde.iter().enumerate() {
            for (_, h) in s.h.iter().enumerate().filter(|&(l, _)| l != u) {
                worst_null = worst_null.max(hdot(h, f).unwrap().norm() / (h.norm() * f.norm()));
            }
        }
    }
    ensure(worst_null <= 1e-10, || format!("zf nulling residual {worst_null:e} > 1e-10"))?;
    Ok(format!("wslnr deviation {worst_dir:.1e}, zf residual {worst_null:.1e}"))
}

/// Jain properties, the hand case and graph-vs-reference rate equivalence.
pub fn metric_properties() -> Check {
    let hand = jain_index(&[1.0, 2.0, 3.0]).unwrap();
    ensure((hand - 6.0 / 7.0).abs() < 1e-12, || format!("jain([1,2,3]) = {hand}"))?;
    let mut r = rng(202);
    for _ in 0..200 {
        let n = r.random_range(1..=12);
        let x: Vec<f64> = (0..n).map(|_| r.random_range(0.0..10.0)).collect();
        if x.iter().all(|&v| v == 0.0) {
            continue;
        }
        let j = jain_index(&x).unwrap();
        ensure(j >= 1.0 / n as f64 - 1e-12 && j <= 1.0 + 1e-12, || format!("jain {j} outside [1/{n}, 1]"))?;
        let c = r.random_range(0.01..100.0);
        let scaled: Vec<f64> = x.iter().map(|v| v * c).collect();
        let js = jain_index(&scaled).unwrap();
        ensure((js - j).abs() <= 1e-12, || format!("jain not scale invariant: {j} vs {js}"))?;
    }

    let mut worst = 0.0f64;
    for i in 0..100u64 {
        let n_t = r.random_range(1..=6);
        let n_u = r.random_range(1..=5);
        let n_b: usize = r.random_range(1..=3);
        let samples: Vec<ChannelSample> = (0..n_b as u64).map(|k| random_sample(n_t, n_u, 9000 + 10 * i + k)).collect();
        let refs: Vec<&ChannelSample> = samples.iter().collect();
        let raw: Vec<f32> = (0..n_b * n_u * 2 * n_t).map(|_| r.random_range(-1.0f32..1.0)).collect();
        let power = r.random_range(0.5..4.0);
        let mut g = Graph::<f32>::new();
        let chan = ChannelBatch::<f32>::from_samples(&refs, power).map_err(|e| e.to_string())?;
        let x = g.constant(&[n_b, n_u, 2 * n_t], raw.clone()).unwrap();
        let sr = graph_rates(&mut g, &chan, x).map_err(|e| e.to_string())?;
        for (k, s) in samples.iter().enumerate() {
            let chunk = &raw[k * n_u * 2 * n_t..(k + 1) * n_u * 2 * n_t];
            let (bf, _) = normalize_columns(chunk, n_u, n_t, power).unwrap();
            let rep = evaluate_rates(s, &bf).unwrap();
            let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1e-3);
            for u in 0..n_u {
                worst = worst.max(rel(g.value(sr.rates)[k * n_u + u] as f64, rep.rate[u]));
            }
            worst = worst.max(rel(g.value(sr.sums)[k] as f64, rep.sum_rate));
            worst = worst.max(rel(g.value(sr.jain)[k] as f64, rep.jain));
        }
    }
    ensure(worst <= 1e-4, || format!("graph rates deviate from reference by {worst:e} relative"))?;
    Ok(format!("graph vs reference worst relative deviation {worst:.1e}"))
}

/// Worst per-coordinate relative error between the autodiff gradient of the
/// full batch loss and a central difference taken in `f64` with the max-min
/// extremes held fixed. Coordinates whose gradient is below `1e-4` of the
/// largest are compared against that floor instead of their own size.
fn gradient_error(model: &Model<f64>, samples: &[ChannelSample], power: f64, dual: &DualState, f32_autodiff: bool) -> f64 {
    let refs: Vec<&ChannelSample> = samples.iter().collect();
    let (mut g, bound, rep) = batch_graph(model, &refs, power, dual).unwrap();
    g.backward(rep.loss).unwrap();
    let analytic: Vec<Vec<f64>> = if f32_autodiff {
        let m32: Model<f32> = model.convert();
        let (mut g32, b32, r32) = batch_graph(&m32, &refs, power, dual).unwrap();
        g32.backward(r32.loss).unwrap();
        b32.vars.iter().map(|&v| g32.grad(v).unwrap().iter().map(|&x| x as f64).collect()).collect()
    } else {
        bound.vars.iter().map(|&v| g.grad(v).unwrap().to_vec()).collect()
    };
    let mut m = model.clone();
    let h = 1e-6;
    let mut fd: Vec<Vec<f64>> = Vec::new();
    for p in 0..m.params.len() {
        let mut row = Vec::with_capacity(m.params[p].data.len());
        for j in 0..m.params[p].data.len() {
            let orig = m.params[p].data[j];
            let mut eval = |v: f64| {
                m.params[p].data[j] = v;
                let (g, _, r) = batch_graph_with(&m, &refs, power, dual, Some(rep.extremes)).unwrap();
                g.scalar(r.loss)
            };
            let d = (eval(orig + h) - eval(orig - h)) / (2.0 * h);
            m.params[p].data[j] = orig;
            row.push(d);
        }
        fd.push(row);
    }
    let scale = fd.iter().flatten().fold(0.0f64, |a, &b| a.max(b.abs()));
    let floor = (1e-4 * scale).max(1e-12);
    fd.iter()
        .flatten()
        .zip(analytic.iter().flatten())
        .map(|(&n, &a)| (n - a).abs() / n.abs().max(a.abs()).max(floor))
        .fold(0.0, f64::max)
}

/// Tiny gradient instance: model, batch and dual state.
pub fn gradient_instance(i: u64) -> (Model<f64>, Vec<ChannelSample>, f64, DualState) {
    let mut r = rng(300 + i);
    // With one antenna every unit-norm beam is a pure phase and the loss is
    // flat, so single-antenna instances carry no gradient signal.
    let n_t = r.random_range(2..=3);
    let n_u = r.random_range(2..=4);
    let n_b: u64 = r.random_range(2..=4);
    let n_f = 2 * n_t + 1;
    let heads = if i.is_multiple_of(2) { 1 } else { n_f };
    let config = ModelConfig { n_f, d_model: n_f, n_att: 1 + (i % 2) as usize, n_head: heads, n_t, init_seed: i };
    let model = Model::<f64>::new(config).unwrap();
    let samples = (0..n_b).map(|k| random_sample(n_t, n_u, 40_000 + 10 * i + k)).collect();
    let j_lb = if i % 3 == 2 { 0.05 } else { 0.999 };
    let dual = DualState::new(r.random_range(0.5..3.0), j_lb, 0.003, 0.01).unwrap();
    (model, samples, r.random_range(0.5..2.0), dual)
}

pub fn gradient_suite() -> Check {
    let (mut w32, mut w64) = (0.0f64, 0.0f64);
    for i in 0..20 {
        let (model, samples, power, dual) = gradient_instance(i);
        w64 = w64.max(gradient_error(&model, &samples, power, &dual, false));
        w32 = w32.max(gradient_error(&model, &samples, power, &dual, true));
    }
    ensure(w64 <= 1e-4, || format!("f64 gradient relative error {w64:e} > 1e-4"))?;
    ensure(w32 <= 1e-2, || format!("f32 gradient relative error {w32:e} > 1e-2"))?;
    Ok(format!("20 instances, worst relative error f32 {w32:.1e}, f64 {w64:.1e}"))
}

/// Largest deviation of `forward(P x)` from `P forward(x)` on one triple.
pub fn equivariance_error(seed: u64) -> f64 {
    let mut r = rng(seed);
    let n_t = r.random_range(1..=4);
    let emb = r.random_range(1..=4);
    let n_f = 2 * n_t + 1;
    let divisors: Vec<usize> = (1..=emb * n_f).filter(|h| emb * n_f % h == 0 && *h <= 8).collect();
    let heads = *divisors.choose(&mut r).unwrap();
    let config = ModelConfig::for_antennas(n_t, emb, r.random_range(1..=3), heads, seed);
    let model = Model::<f32>::new(config).unwrap();
    let n_u = r.random_range(2..=8);
    let batch = r.random_range(1..=3);
    let x: Vec<f32> = (0..batch * n_u * n_f).map(|_| r.random_range(-2.0f32..2.0)).collect();
    let mut perm: Vec<usize> = (0..n_u).collect();
    perm.shuffle(&mut r);
    let px: Vec<f32> = (0..batch)
        .flat_map(|b| perm.iter().flat_map(move |&p| (0..n_f).map(move |f| (b, p, f))))
        .map(|(b, p, f)| x[(b * n_u + p) * n_f + f])
        .collect();
    let y = model.predict(&x, batch, n_u).unwrap();
    let py = model.predict(&px, batch, n_u).unwrap();
    let n_o = 2 * n_t;
    let mut worst = 0.0f64;
    for b in 0..batch {
        for (i, &p) in perm.iter().enumerate() {
            for o in 0..n_o {
                let a = py[(b * n_u + i) * n_o + o] as f64;
                let e = y[(b * n_u + p) * n_o + o] as f64;
                worst = worst.max((a - e).abs() / e.abs().max(1.0));
            }
        }
    }
    worst
}

pub fn equivariance_suite() -> Check {
    let worst = (0..50).map(|i| equivariance_error(700 + i)).fold(0.0, f64::max);
    ensure(worst <= 1e-5, || format!("permutation equivariance deviation {worst:e} > 1e-5"))?;
    Ok(format!("50 triples, worst deviation {worst:.1e}"))
}

fn hinge_grad(lambda: f64, j_lb: f64, s: f64, j: f64) -> (f64, f64, f64) {
    let dual = DualState::new(lambda, j_lb, 0.003, 0.01).unwrap();
    let mut g = Graph::<f64>::new();
    let sv = g.param(&[1], vec![s]).unwrap();
    let jv = g.param(&[1], vec![j]).unwrap();
    let l = hinge_loss(&mut g, sv, jv, &dual).unwrap();
    let loss = g.scalar(l);
    g.backward(l).unwrap();
    (loss, g.grad(sv).unwrap()[0], g.grad(jv).unwrap()[0])
}

pub fn dual_mechanism() -> Check {
    let d = |lambda, j_lb| DualState::new(lambda, j_lb, 0.003, 0.01).unwrap();
    // (lambda, j_lb, j_bar, expected lambda)
    let table = [
        (1.0, 0.9, 0.9, 1.0),
        (1.0, 0.9, 0.902, 1.0),
        (1.0, 0.9, 0.898, 1.0),
        (1.0, 0.9, 0.7, 1.002),
        (0.5, 0.8, 0.6, 0.502),
        (0.001, 0.6, 0.95, 0.0),
        (0.0, 0.6, 0.95, 0.0),
        (2.0, 0.7, 0.8, 1.999),
    ];
    for (lambda, j_lb, j_bar, want) in table {
        let got = dual_update(d(lambda, j_lb), j_bar).lambda;
        ensure((got - want).abs() < 1e-12, || {
            format!("dual_update(lambda {lambda}, j_lb {j_lb}, j_bar {j_bar}) = {got}, expected {want}")
        })?;
    }
    for (s, j) in [(0.3, 0.8), (0.7, 0.95), (0.0, 1.0)] {
        let (loss, ds, dj) = hinge_grad(2.5, 0.8, s, j);
        ensure(loss == -s && ds == -1.0 && dj == 0.0, || {
            format!("inactive hinge at s {s}, j {j}: loss {loss}, grads ({ds}, {dj})")
        })?;
    }
    for (lambda, j) in [(0.7, 0.5), (3.771, 0.79), (1.0, 0.1)] {
        let (loss, _, dj) = hinge_grad(lambda, 0.8, 0.4, j);
        let want = -(0.4 + lambda * (j - 0.8));
        ensure((loss - want).abs() < 1e-12 && (dj + lambda).abs() < 1e-12, || {
            format!("active hinge with lambda {lambda}: loss {loss} (want {want}), dloss/dJ {dj}")
        })?;
    }
    Ok("dual table, inactive hinge and active slope all exact".into())
}

/// Reduced-scale datasets: 4000 train, 1000 validation, 1000 test.
pub fn reduced_scale_data() -> (Dataset, Dataset, Dataset) {
    let sc = ScenarioConfig { n_t: 8, n_u: 4, seed: 11, ..Default::default() };
    let train = generate_dataset(&sc, 4000).unwrap();
    let val = generate_dataset(&ScenarioConfig { seed: 12, ..sc.clone() }, 1000).unwrap();
    let test = generate_dataset(&ScenarioConfig { seed: 13, ..sc }, 1000).unwrap();
    (train, val, test)
}

pub fn reduced_scale_config() -> TrainConfig {
    TrainConfig {
        batch_size: 64,
        max_epochs: 300,
        seed: 1,
        model: ModelConfig::for_antennas(8, 4, 4, 4, 1),
        ..Default::default()
    }
}

/// `(j_lb, test mean sum rate, test mean Jain, final lambda)` per sweep point.
pub type SweepPoint = (f64, f64, f64, f64);

pub fn reduced_scale_sweep(j_lbs: &[f64]) -> Result<Vec<SweepPoint>, String> {
    let (train, val, test) = reduced_scale_data();
    let runs = pareto_sweep(j_lbs, &train, &val, &test, &reduced_scale_config()).map_err(|e| e.to_string())?;
    runs.iter()
        .map(|run| {
            let p = &run.entry.point;
            if !p.is_ok() {
                return Err(format!("training for j_lb {:?} failed: {:?}", p.knob, p.status));
            }
            Ok((p.knob.unwrap(), p.mean_sum_rate, p.mean_jain, p.lambda_final.unwrap_or(f64::NAN)))
        })
        .collect()
}

pub fn constraint_satisfaction(points: &[SweepPoint]) -> Check {
    let find = |j: f64| points.iter().find(|p| (p.0 - j).abs() < 1e-12).copied();
    let (lo, hi) = match (find(0.7), find(0.9)) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err("sweep lacks the 0.7 or 0.9 point".into()),
    };
    let desc = |p: SweepPoint| format!("j_lb {}: SR {:.3}, J {:.4}", p.0, p.1, p.2);
    for p in [lo, hi] {
        ensure(p.2 >= p.0 - 0.02, || format!("{} misses its fairness target", desc(p)))?;
    }
    ensure(hi.1 < lo.1, || format!("no Pareto ordering: {} vs {}", desc(hi), desc(lo)))?;
    Ok(format!("{}; {}", desc(lo), desc(hi)))
}

pub fn lambda_monotone(points: &[SweepPoint]) -> Check {
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let inversions = sorted.windows(2).filter(|w| w[1].3 < w[0].3).count();
    let trace: Vec<String> = sorted.iter().map(|p| format!("{}:{:.3}", p.0, p.3)).collect();
    ensure(inversions <= 1, || format!("{inversions} inversions in lambda trace {}", trace.join(" ")))?;
    Ok(format!("lambda trace {} ({inversions} inversions)", trace.join(" ")))
}

pub fn baseline_trend(samples: usize) -> Check {
    let ds = generate_dataset(&ScenarioConfig { seed: 21, ..Default::default() }, samples).map_err(|e| e.to_string())?;
    let mut rows = Vec::new();
    for alpha in [0.0, 0.5, 1.0, 2.0, 5.0] {
        let e = evaluate(&Baseline::wslnr(alpha), &ds).map_err(|e| e.to_string())?;
        rows.push((alpha, e.mean_sum_rate, e.mean_jain));
    }
    let trace: Vec<String> = rows.iter().map(|r| format!("a={} SR {:.3} J {:.4}", r.0, r.1, r.2)).collect();
    let ok = rows.windows(2).all(|w| w[1].2 > w[0].2 && w[1].1 < w[0].1);
    ensure(ok, || format!("not strictly monotone: {}", trace.join(", ")))?;
    Ok(trace.join(", "))
}

pub fn persistence(dir: &Path) -> Check {
    let sc = ScenarioConfig { n_t: 4, n_u: 3, seed: 5, ..Default::default() };
    let ds = generate_dataset(&sc, 50).map_err(|e| e.to_string())?;
    let path = dir.join("rt.fbd");
    save_dataset(&ds, &path).map_err(|e| e.to_string())?;
    let back = load_dataset(&path).map_err(|e| e.to_string())?;
    ensure(back == ds, || "dataset differs after save/load".into())?;
    ensure(encode_fbd(&back) == encode_fbd(&ds), || "dataset bytes differ after round trip".into())?;

    let bytes = encode_fbd(&ds);
    let corruptions: Vec<(&str, Vec<u8>)> = vec![
        ("magic", { let mut b = bytes.clone(); b[0] = b'X'; b }),
        ("version", { let mut b = bytes.clone(); b[4] = 9; b }),
        ("antennas", { let mut b = bytes.clone(); b[8] = 5; b }),
        ("count", { let mut b = bytes.clone(); b[16] = 51; b }),
        ("flags", { let mut b = bytes.clone(); b[24] = 0xff; b }),
        ("truncated header", bytes[..20].to_vec()),
        ("truncated body", bytes[..bytes.len() - 3].to_vec()),
    ];
    for (what, b) in &corruptions {
        ensure(decode_fbd(b, sc.clone(), &path).is_err(), || format!("dataset with corrupted {what} was accepted"))?;
    }

    let mut model = Model::<f32>::new(ModelConfig::for_antennas(2, 2, 2, 1, 9)).unwrap();
    model.input_norm.shift = vec![0.5; model.config.n_f];
    model.input_norm.scale = vec![2.0; model.config.n_f];
    let ck = encode_checkpoint(&model);
    let back = decode_checkpoint(&ck, Path::new("mem.fbck")).map_err(|e| e.to_string())?;
    let same = back.config == model.config
        && back.input_norm == model.input_norm
        && back.flat().iter().zip(model.flat()).all(|(a, b)| a.to_bits() == b.to_bits());
    ensure(same, || "checkpoint differs after round trip".into())?;
    ensure(encode_checkpoint(&back) == ck, || "checkpoint bytes differ after round trip".into())?;
    let bad: Vec<(&str, Vec<u8>)> = vec![
        ("magic", { let mut b = ck.clone(); b[1] = 0; b }),
        ("version", { let mut b = ck.clone(); b[4] = 2; b }),
        ("param count", { let mut b = ck.clone(); b[36] ^= 1; b }),
        ("heads", { let mut b = ck.clone(); b[20] = 3; b }),
        ("truncated", ck[..ck.len() - 4].to_vec()),
        ("empty", vec![]),
    ];
    for (what, b) in &bad {
        ensure(decode_checkpoint(b, Path::new("bad.fbck")).is_err(), || {
            format!("checkpoint with corrupted {what} was accepted")
        })?;
    }
    Ok(format!(
        "dataset and checkpoint round trips bit-exact, {} corrupted images rejected",
        corruptions.len() + bad.len()
    ))
}
