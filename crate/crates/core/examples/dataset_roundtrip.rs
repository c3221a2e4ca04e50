//! Generates a dataset, writes it as `.fbd` plus sidecar, reads it back and
//! checks that nothing changed. Also shows the features fed to the network.

use fairbeam::channel::{encode_features, generate_dataset, load_dataset, save_dataset, sidecar_path, ScenarioConfig};

fn main() -> fairbeam::Result<()> {
    let dir = std::env::temp_dir().join(format!("fairbeam-roundtrip-{}", std::process::id()));
    std::fs::create_dir_all(&dir).map_err(|e| fairbeam::Error::InvalidInput(e.to_string()))?;
    let path = dir.join("drops.fbd");

    let ds = generate_dataset(&ScenarioConfig { n_t: 4, n_u: 3, seed: 9, ..Default::default() }, 200)?;
    save_dataset(&ds, &path)?;
    let back = load_dataset(&path)?;
    println!("wrote {} and {}", path.display(), sidecar_path(&path).display());
    println!("{} samples, sha256 {}", back.len(), back.content_hash());
    println!("round trip exact: {}", back == ds);

    let f = encode_features(&back.samples[0])?;
    for u in 0..f.n_u {
        let row: Vec<String> = f.row(u).iter().map(|v| format!("{v:+.3}")).collect();
        println!("user {u}: [{}]", row.join(" "));
    }
    std::fs::remove_dir_all(&dir).ok();
    Ok(())
}
