//! Scenario configuration, user drops, Rayleigh channels with log-distance
//! pathloss, CSI feature encoding, dataset splits and the `.fbd` file format.
//!
//! Noise is normalized: every user has `sigma^2 = 1`, and the pathloss law is
//! anchored so that a user at `d_min` served with the whole power budget
//! sees `ref_snr_db`. Sample `i` of a dataset draws from its own RNG stream
//! seeded by [`child_seed`]`(seed, i)`, so datasets do not depend on worker
//! count or generation order.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::complex_core::{CVec, C64};
use crate::error::{Error, Result};

/// Noise variance of every user.
pub const NOISE_VARIANCE: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub n_t: usize,
    pub n_u: usize,
    /// Total transmit power (W).
    pub p_tot: f64,
    /// Cell radius (m).
    pub radius: f64,
    /// Minimum BS-UE distance (m).
    pub d_min: f64,
    pub pathloss_exponent: f64,
    /// SNR of a full-power single-user link at `d_min`, in dB.
    pub ref_snr_db: f64,
    /// Carrier frequency (Hz). Metadata only.
    pub carrier_hz: f64,
    /// Subcarrier bandwidth (Hz). Metadata only; rates are in bit/s/Hz.
    pub bandwidth_hz: f64,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            n_t: 16,
            n_u: 12,
            p_tot: 10.0,
            radius: 500.0,
            d_min: 35.0,
            pathloss_exponent: 2.0,
            ref_snr_db: 33.0,
            carrier_hz: 2.0e9,
            bandwidth_hz: 15.0e3,
            seed: 1,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.n_t == 0 || self.n_u == 0 {
            return bad(format!("n_t = {} and n_u = {} must be positive", self.n_t, self.n_u));
        }
        if !(self.p_tot > 0.0) {
            return bad(format!("p_tot must be positive, got {}", self.p_tot));
        }
        if !(self.d_min > 0.0 && self.d_min < self.radius) {
            return bad(format!(
                "need 0 < d_min < radius, got d_min = {}, radius = {}",
                self.d_min, self.radius
            ));
        }
        if !self.pathloss_exponent.is_finite() || self.pathloss_exponent < 0.0 {
            return bad(format!("pathloss exponent {} must be finite and >= 0", self.pathloss_exponent));
        }
        if !self.ref_snr_db.is_finite() {
            return bad("ref_snr_db must be finite".into());
        }
        Ok(())
    }

    /// Number of CSI features per user, `2 n_t + 1`.
    pub fn n_features(&self) -> usize {
        2 * self.n_t + 1
    }

    pub fn power_per_user(&self) -> f64 {
        self.p_tot / self.n_u as f64
    }

    /// Large-scale gain at `d_min`, chosen so that `E||h||^2 P_tot / sigma^2`
    /// equals `ref_snr_db` there.
    pub fn reference_gain(&self) -> f64 {
        10f64.powf(self.ref_snr_db / 10.0) * NOISE_VARIANCE / (self.n_t as f64 * self.p_tot)
    }

    /// Per-antenna large-scale gain at distance `d`.
    pub fn pathloss_gain(&self, d: f64) -> f64 {
        self.reference_gain() * (d / self.d_min).powf(-self.pathloss_exponent)
    }
}

/// One channel drop.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSample {
    /// `n_u` channel rows of length `n_t`.
    pub h: Vec<CVec>,
    pub sigma2: Vec<f64>,
    pub positions: Vec<(f64, f64)>,
}

impl ChannelSample {
    pub fn n_u(&self) -> usize {
        self.h.len()
    }

    pub fn n_t(&self) -> usize {
        self.h.first().map_or(0, CVec::len)
    }

    /// `||h_u||^2` for every user.
    pub fn gains(&self) -> Vec<f64> {
        self.h.iter().map(CVec::norm_sqr).collect()
    }

    /// Common noise variance used by the SLNR family (mean if they differ).
    pub fn common_noise(&self) -> f64 {
        self.sigma2.iter().sum::<f64>() / self.sigma2.len() as f64
    }

    pub fn validate(&self) -> Result<()> {
        let n_u = self.h.len();
        if n_u == 0 {
            return Err(Error::InvalidInput("sample has no users".into()));
        }
        let n_t = self.n_t();
        if n_t == 0 || self.h.iter().any(|row| row.len() != n_t) {
            return Err(Error::Dimension("channel rows have inconsistent lengths".into()));
        }
        if self.sigma2.len() != n_u || self.positions.len() != n_u {
            return Err(Error::Dimension(format!(
                "{n_u} users but {} noise variances and {} positions",
                self.sigma2.len(),
                self.positions.len()
            )));
        }
        if let Some(u) = self.h.iter().position(|row| row.norm_sqr() == 0.0) {
            return Err(Error::InvalidInput(format!("channel row {u} is all zero")));
        }
        if let Some(u) = self.sigma2.iter().position(|&s| !(s > 0.0)) {
            return Err(Error::InvalidInput(format!("noise variance of user {u} is not positive")));
        }
        Ok(())
    }

    /// Same sample with every channel row scaled by `c` and noise by `c^2`.
    pub fn rescaled(&self, c: f64) -> ChannelSample {
        ChannelSample {
            h: self.h.iter().map(|r| r.scale(C64::new(c, 0.0))).collect(),
            sigma2: self.sigma2.iter().map(|s| s * c * c).collect(),
            positions: self.positions.clone(),
        }
    }

    /// Users reordered so that user `i` of the result is user `perm[i]` here.
    pub fn permuted(&self, perm: &[usize]) -> ChannelSample {
        ChannelSample {
            h: perm.iter().map(|&p| self.h[p].clone()).collect(),
            sigma2: perm.iter().map(|&p| self.sigma2[p]).collect(),
            positions: perm.iter().map(|&p| self.positions[p]).collect(),
        }
    }
}

/// Real-valued network input: one row of `2 n_t + 1` features per user.
#[derive(Debug, Clone, PartialEq)]
pub struct CsiFeatureSequence {
    pub n_u: usize,
    pub n_f: usize,
    /// Row-major `n_u x n_f`.
    pub rows: Vec<f32>,
}

impl CsiFeatureSequence {
    pub fn row(&self, u: usize) -> &[f32] {
        &self.rows[u * self.n_f..(u + 1) * self.n_f]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub config: ScenarioConfig,
    pub samples: Vec<ChannelSample>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Checks that every sample has the configured dimensions.
    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        for (i, s) in self.samples.iter().enumerate() {
            s.validate()
                .map_err(|e| Error::InvalidInput(format!("sample {i}: {e}")))?;
            if s.n_u() != self.config.n_u || s.n_t() != self.config.n_t {
                return Err(Error::Dimension(format!(
                    "sample {i} is {}x{}, dataset is configured for {}x{}",
                    s.n_u(),
                    s.n_t(),
                    self.config.n_u,
                    self.config.n_t
                )));
            }
        }
        Ok(())
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            config: self.config.clone(),
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
        }
    }

    /// Hex SHA-256 of the `.fbd` encoding.
    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(encode_fbd(self)))
    }
}

/// SplitMix64 finalizer.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the independent RNG stream for item `index` under `seed`.
pub fn child_seed(seed: u64, index: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ splitmix64(index.wrapping_mul(0xD1B5_4A32_D192_ED03)))
}

pub fn rng_for(seed: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(child_seed(seed, index))
}

/// Drops `n_u` users uniformly (by area) on the annulus `d_min <= d <= radius`.
pub fn drop_users<R: Rng + ?Sized>(config: &ScenarioConfig, rng: &mut R) -> Vec<(f64, f64)> {
    let (r0, r1) = (config.d_min * config.d_min, config.radius * config.radius);
    (0..config.n_u)
        .map(|_| {
            let d2 = r0 + (r1 - r0) * rng.random::<f64>();
            let d = d2.sqrt().clamp(config.d_min, config.radius);
            let theta = std::f64::consts::TAU * rng.random::<f64>();
            (d * theta.cos(), d * theta.sin())
        })
        .collect()
}

fn round_f32(x: f64) -> f64 {
    x as f32 as f64
}

/// Draws one channel sample. Stored values are rounded to single precision
/// so that the sample survives the `.fbd` format bit-exactly.
pub fn generate_sample<R: Rng + ?Sized>(config: &ScenarioConfig, rng: &mut R) -> ChannelSample {
    let positions = drop_users(config, rng);
    let half = std::f64::consts::FRAC_1_SQRT_2;
    let h = positions
        .iter()
        .map(|&(x, y)| {
            let d = x.hypot(y).max(config.d_min);
            let amp = config.pathloss_gain(d).sqrt();
            CVec::new(
                (0..config.n_t)
                    .map(|_| {
                        let re: f64 = rng.sample(StandardNormal);
                        let im: f64 = rng.sample(StandardNormal);
                        C64::new(round_f32(amp * half * re), round_f32(amp * half * im))
                    })
                    .collect(),
            )
        })
        .collect();
    ChannelSample {
        h,
        sigma2: vec![NOISE_VARIANCE; config.n_u],
        positions: positions.iter().map(|&(x, y)| (round_f32(x), round_f32(y))).collect(),
    }
}

/// Generates `count` samples in parallel; the result depends only on
/// `config` (including its seed) and `count`.
pub fn generate_dataset(config: &ScenarioConfig, count: usize) -> Result<Dataset> {
    config.validate()?;
    let samples = (0..count)
        .into_par_iter()
        .map(|i| generate_sample(config, &mut rng_for(config.seed, i as u64)))
        .collect();
    Ok(Dataset { config: config.clone(), samples })
}

/// `[Re(h/|h|), Im(h/|h|), 10 log10(|h|^2 / sigma^2)]` per user.
pub fn encode_features(sample: &ChannelSample) -> Result<CsiFeatureSequence> {
    let n_u = sample.n_u();
    let n_t = sample.n_t();
    let n_f = 2 * n_t + 1;
    let mut rows = Vec::with_capacity(n_u * n_f);
    for (u, h) in sample.h.iter().enumerate() {
        let gain = h.norm_sqr();
        if !(gain > 0.0) {
            return Err(Error::InvalidInput(format!("channel row {u} is all zero")));
        }
        let inv = 1.0 / gain.sqrt();
        rows.extend(h.iter().map(|z| (z.re * inv) as f32));
        rows.extend(h.iter().map(|z| (z.im * inv) as f32));
        rows.push((10.0 * (gain / sample.sigma2[u]).log10()) as f32);
    }
    Ok(CsiFeatureSequence { n_u, n_f, rows })
}

/// Permutes `0..n` with `seed` and cuts it into train/val/test index lists.
/// Sizes are `round(f_train n)`, `round(f_val n)` and the remainder.
pub fn split_indices(n: usize, fractions: (f64, f64, f64), seed: u64) -> Result<[Vec<usize>; 3]> {
    let (a, b, c) = fractions;
    if !(a > 0.0 && b > 0.0 && c > 0.0) {
        return Err(Error::InvalidInput(format!("split fractions must be positive, got {fractions:?}")));
    }
    if ((a + b + c) - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidInput(format!(
            "split fractions must sum to 1, got {}",
            a + b + c
        )));
    }
    let n_train = ((a * n as f64).round() as usize).min(n);
    let n_val = ((b * n as f64).round() as usize).min(n - n_train);
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let test = perm.split_off(n_train + n_val);
    let val = perm.split_off(n_train);
    Ok([perm, val, test])
}

pub fn split_dataset(ds: &Dataset, fractions: (f64, f64, f64), seed: u64) -> Result<(Dataset, Dataset, Dataset)> {
    let [tr, va, te] = split_indices(ds.len(), fractions, seed)?;
    Ok((ds.subset(&tr), ds.subset(&va), ds.subset(&te)))
}

pub const FBD_MAGIC: [u8; 4] = *b"FBDS";
pub const FBD_VERSION: u32 = 1;
const FBD_HEADER_LEN: usize = 32;
const FBD_FLAG_POSITIONS: u32 = 1;

/// JSON sidecar written next to every `.fbd` file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetSidecar {
    pub format_version: u32,
    /// Hex SHA-256 of the binary file.
    pub sha256: String,
    pub seed: u64,
    pub samples: u64,
    pub config: ScenarioConfig,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

fn sample_bytes(n_t: usize, n_u: usize) -> usize {
    4 * (2 * n_u * n_t + n_u + 2 * n_u)
}

/// Encodes a dataset in the `.fbd` layout: a 32-byte header (magic, version,
/// n_t, n_u, sample count as u64, flags, reserved) followed per sample by the
/// channel as interleaved little-endian f32 (re, im), the noise variances and
/// the (x, y) positions.
pub fn encode_fbd(ds: &Dataset) -> Vec<u8> {
    let (n_t, n_u) = (ds.config.n_t, ds.config.n_u);
    let mut out = Vec::with_capacity(FBD_HEADER_LEN + ds.len() * sample_bytes(n_t, n_u));
    out.extend_from_slice(&FBD_MAGIC);
    out.extend_from_slice(&FBD_VERSION.to_le_bytes());
    out.extend_from_slice(&(n_t as u32).to_le_bytes());
    out.extend_from_slice(&(n_u as u32).to_le_bytes());
    out.extend_from_slice(&(ds.len() as u64).to_le_bytes());
    out.extend_from_slice(&FBD_FLAG_POSITIONS.to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    let mut put = |x: f64| out.extend_from_slice(&(x as f32).to_le_bytes());
    for s in &ds.samples {
        for row in &s.h {
            for z in row.iter() {
                put(z.re);
                put(z.im);
            }
        }
        for &v in &s.sigma2 {
            put(v);
        }
        for &(x, y) in &s.positions {
            put(x);
            put(y);
        }
    }
    out
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(b[at..at + 4].try_into().unwrap())
}

/// Decodes an `.fbd` image. `config` supplies the fields the binary format
/// does not carry and must agree with the header dimensions.
pub fn decode_fbd(bytes: &[u8], config: ScenarioConfig, path: &Path) -> Result<Dataset> {
    if bytes.len() < FBD_HEADER_LEN {
        return Err(Error::format(
            path,
            format!("truncated header: {} of {FBD_HEADER_LEN} bytes", bytes.len()),
        ));
    }
    if bytes[0..4] != FBD_MAGIC {
        return Err(Error::format(
            path,
            format!("bad magic bytes {:?}, expected \"FBDS\"", String::from_utf8_lossy(&bytes[0..4])),
        ));
    }
    let version = u32_at(bytes, 4);
    if version > FBD_VERSION || version == 0 {
        return Err(Error::format(
            path,
            format!("unsupported format version {version} (this build reads version {FBD_VERSION})"),
        ));
    }
    let n_t = u32_at(bytes, 8) as usize;
    let n_u = u32_at(bytes, 12) as usize;
    let count = u64::from_le_bytes(bytes[16..24].try_into().unwrap()) as usize;
    let flags = u32_at(bytes, 24);
    if flags != FBD_FLAG_POSITIONS {
        return Err(Error::format(path, format!("unsupported flags {flags:#x}")));
    }
    if n_t != config.n_t || n_u != config.n_u {
        return Err(Error::format(
            path,
            format!(
                "header says {n_u} users x {n_t} antennas, sidecar config says {} x {}",
                config.n_u, config.n_t
            ),
        ));
    }
    let expected = count
        .checked_mul(sample_bytes(n_t, n_u))
        .and_then(|b| b.checked_add(FBD_HEADER_LEN))
        .ok_or_else(|| Error::format(path, "sample count overflows"))?;
    if bytes.len() != expected {
        return Err(Error::format(
            path,
            format!(
                "{} for {count} samples: expected {expected} bytes, found {}",
                if bytes.len() < expected { "truncated" } else { "trailing data" },
                bytes.len()
            ),
        ));
    }
    let mut at = FBD_HEADER_LEN;
    let mut next = || {
        let v = f32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()) as f64;
        at += 4;
        v
    };
    let mut samples = Vec::with_capacity(count);
    for _ in 0..count {
        let h = (0..n_u)
            .map(|_| CVec::new((0..n_t).map(|_| C64::new(next(), next())).collect()))
            .collect();
        let sigma2 = (0..n_u).map(|_| next()).collect();
        let positions = (0..n_u).map(|_| (next(), next())).collect();
        samples.push(ChannelSample { h, sigma2, positions });
    }
    Ok(Dataset { config, samples })
}

/// Writes `path` (binary) and its `.json` sidecar.
pub fn save_dataset(ds: &Dataset, path: &Path) -> Result<()> {
    let bytes = encode_fbd(ds);
    let sidecar = DatasetSidecar {
        format_version: FBD_VERSION,
        sha256: hex::encode(Sha256::digest(&bytes)),
        seed: ds.config.seed,
        samples: ds.len() as u64,
        config: ds.config.clone(),
    };
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))?;
    let side = sidecar_path(path);
    fs::write(&side, serde_json::to_string_pretty(&sidecar)?).map_err(|e| Error::io(&side, e))?;
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let side = sidecar_path(path);
    let text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    let sidecar: DatasetSidecar =
        serde_json::from_str(&text).map_err(|e| Error::format(&side, format!("bad sidecar: {e}")))?;
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let ds = decode_fbd(&bytes, sidecar.config, path)?;
    let digest = hex::encode(Sha256::digest(&bytes));
    if digest != sidecar.sha256 {
        return Err(Error::format(path, format!("content hash {digest} does not match sidecar {}", sidecar.sha256)));
    }
    Ok(ds)
}
