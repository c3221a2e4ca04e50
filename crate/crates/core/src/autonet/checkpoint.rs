//! `.fbck` model files: a fixed little-endian header, the input
//! standardization (`n_f` shifts then `n_f` scales), then every parameter
//! tensor in declaration order. All values are `f32`.
//!
//! | offset | field                      |
//! |--------|----------------------------|
//! | 0      | magic `FBCK`               |
//! | 4      | version (u32)              |
//! | 8      | n_f, d_model, n_att, n_head, n_t (u32 each) |
//! | 28     | init_seed (u64)            |
//! | 36     | parameter count (u64)      |
//! | 44     | shift, scale, parameters   |

use std::path::Path;

use super::model::{count_params, InputNorm, Model, ModelConfig};
use crate::error::{Error, Result};

pub const FBCK_MAGIC: [u8; 4] = *b"FBCK";
pub const FBCK_VERSION: u32 = 1;
const HEADER_LEN: usize = 44;

pub fn encode_checkpoint(model: &Model<f32>) -> Vec<u8> {
    let c = &model.config;
    let n = model.num_params();
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * (n + 2 * c.n_f));
    out.extend_from_slice(&FBCK_MAGIC);
    out.extend_from_slice(&FBCK_VERSION.to_le_bytes());
    for v in [c.n_f, c.d_model, c.n_att, c.n_head, c.n_t] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    out.extend_from_slice(&c.init_seed.to_le_bytes());
    out.extend_from_slice(&(n as u64).to_le_bytes());
    let norm = model.input_norm.shift.iter().chain(&model.input_norm.scale);
    for v in norm.chain(model.params.iter().flat_map(|p| p.data.iter())) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(b[at..at + 4].try_into().unwrap())
}

fn u64_at(b: &[u8], at: usize) -> u64 {
    u64::from_le_bytes(b[at..at + 8].try_into().unwrap())
}

pub fn decode_checkpoint(bytes: &[u8], path: &Path) -> Result<Model<f32>> {
    let fail = |msg: String| Err(Error::format(path, msg));
    if bytes.len() < 8 || bytes[..4] != FBCK_MAGIC {
        return fail("not a checkpoint (missing FBCK magic)".into());
    }
    let version = u32_at(bytes, 4);
    if version != FBCK_VERSION {
        return fail(format!(
            "unsupported checkpoint version {version} (this build reads version {FBCK_VERSION})"
        ));
    }
    if bytes.len() < HEADER_LEN {
        return fail(format!("truncated header: {} bytes", bytes.len()));
    }
    let dims: Vec<usize> = (0..5).map(|i| u32_at(bytes, 8 + 4 * i) as usize).collect();
    let config = ModelConfig {
        n_f: dims[0],
        d_model: dims[1],
        n_att: dims[2],
        n_head: dims[3],
        n_t: dims[4],
        init_seed: u64_at(bytes, 28),
    };
    if let Err(e) = config.validate() {
        return fail(format!("invalid model header: {e}"));
    }
    let count = u64_at(bytes, 36) as usize;
    let expected = count_params(&config);
    if count != expected {
        return fail(format!("header declares {count} parameters, configuration implies {expected}"));
    }
    let body = &bytes[HEADER_LEN..];
    let n_f = config.n_f;
    let want = 4 * (count + 2 * n_f);
    if body.len() != want {
        return fail(format!("expected {want} bytes after the header, found {}", body.len()));
    }
    let flat: Vec<f32> = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let mut model = Model::from_flat(config, &flat[2 * n_f..])?;
    model.input_norm = InputNorm { shift: flat[..n_f].to_vec(), scale: flat[n_f..2 * n_f].to_vec() };
    Ok(model)
}

pub fn save_model(model: &Model<f32>, path: &Path) -> Result<()> {
    std::fs::write(path, encode_checkpoint(model)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<Model<f32>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes, path)
}
