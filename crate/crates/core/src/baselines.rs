//! Closed-form beamformers: MRT, zero-forcing, conventional SLNR and
//! weighted SLNR.
//!
//! The SLNR family maximizes the Rayleigh quotient
//! `|h_u^H f|^2 / (f^H (sum_{l != u} w_l h_l h_l^H + sigma^2 I) f)`, whose
//! maximizer is `(sum_{l != u} w_l h_l h_l^H + sigma^2 I)^{-1} h_u`. Every
//! beamformer is returned with unit norm; its phase is whatever the
//! construction produces, since all metrics are phase invariant.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::channel::ChannelSample;
use crate::complex_core::{hdot_unchecked, pd_solve, rank1_accumulate, CVec, Cholesky, HermMat};
use crate::error::{Error, Result};
use crate::metrics::BeamformerSet;

/// Pivot threshold for the ZF Gram matrix, relative to its largest diagonal
/// entry. Roughly a 1e10 condition-number bound.
const ZF_RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Mrt,
    Zf,
    Slnr,
    Wslnr,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Mrt, Method::Zf, Method::Slnr, Method::Wslnr];

    pub fn name(self) -> &'static str {
        match self {
            Method::Mrt => "mrt",
            Method::Zf => "zf",
            Method::Slnr => "slnr",
            Method::Wslnr => "wslnr",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                Error::InvalidInput(format!("unknown method '{s}' (valid: mrt, zf, slnr, wslnr)"))
            })
    }
}

/// A baseline together with its knob; `alpha` is only used by wSLNR.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Baseline {
    pub method: Method,
    pub alpha: f64,
}

impl Baseline {
    pub fn new(method: Method) -> Self {
        Baseline { method, alpha: 0.0 }
    }

    pub fn wslnr(alpha: f64) -> Self {
        Baseline { method: Method::Wslnr, alpha }
    }

    pub fn beamformers(&self, sample: &ChannelSample, power_per_user: f64) -> Result<BeamformerSet> {
        match self.method {
            Method::Mrt => mrt(sample, power_per_user),
            Method::Zf => zf(sample, power_per_user),
            Method::Slnr => slnr(sample, power_per_user),
            Method::Wslnr => wslnr(sample, self.alpha, power_per_user),
        }
    }
}

impl fmt::Display for Baseline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.method {
            Method::Wslnr => write!(f, "wslnr(alpha={})", self.alpha),
            m => write!(f, "{m}"),
        }
    }
}

fn unit(v: &CVec, what: &str) -> Result<CVec> {
    v.normalized()
        .ok_or_else(|| Error::InvalidInput(format!("{what} produced a zero beamformer")))
}

pub fn mrt(sample: &ChannelSample, power_per_user: f64) -> Result<BeamformerSet> {
    let f_tilde = sample.h.iter().map(|h| unit(h, "MRT")).collect::<Result<_>>()?;
    Ok(BeamformerSet { f_tilde, power_per_user })
}

/// Columns of `H^H (H H^H)^{-1}`, each normalized.
pub fn zf(sample: &ChannelSample, power_per_user: f64) -> Result<BeamformerSet> {
    let (n_u, n_t) = (sample.n_u(), sample.n_t());
    if n_u > n_t {
        return Err(Error::RankDeficient(format!(
            "zero-forcing needs n_u <= n_t, got {n_u} users and {n_t} antennas"
        )));
    }
    // Gram matrix G_ij = h_i^H h_j. Column j of H^H G^{-1} is sum_i h_i (G^{-1})_ij.
    let mut gram = Vec::with_capacity(n_u * n_u);
    for hi in &sample.h {
        for hj in &sample.h {
            gram.push(hdot_unchecked(hi.as_slice(), hj.as_slice()));
        }
    }
    let gram = HermMat::from_rows(n_u, gram).map_err(|_| {
        Error::RankDeficient("channel Gram matrix lost Hermitian symmetry (non-finite entries?)".into())
    })?;
    let chol = Cholesky::factor(&gram, ZF_RANK_TOL).map_err(|e| match e {
        Error::NotPositiveDefinite { pivot, value } => Error::RankDeficient(format!(
            "channel of user {pivot} is (nearly) a combination of users 0..{pivot} \
             (Gram pivot {value:e}, relative threshold {ZF_RANK_TOL:e})"
        )),
        other => other,
    })?;
    let mut f_tilde = Vec::with_capacity(n_u);
    for j in 0..n_u {
        let coef = chol.solve(&CVec::basis(n_u, j))?;
        let mut f = CVec::zeros(n_t);
        for (hi, c) in sample.h.iter().zip(coef.iter()) {
            for (fk, hk) in f.0.iter_mut().zip(hi.iter()) {
                *fk += hk * c;
            }
        }
        f_tilde.push(unit(&f, "ZF")?);
    }
    Ok(BeamformerSet { f_tilde, power_per_user })
}

/// Normalized inverse-gain leakage weights of weighted SLNR.
#[derive(Debug, Clone, PartialEq)]
pub struct WslnrWeights {
    pub omega: Vec<f64>,
    pub alpha: f64,
}

/// `omega_l ∝ (||h_l||^2)^(-alpha)`, normalized to sum to one.
pub fn wslnr_weights(sample: &ChannelSample, alpha: f64) -> Result<WslnrWeights> {
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(Error::InvalidInput(format!("alpha must be finite and >= 0, got {alpha}")));
    }
    let n = sample.n_u();
    if alpha == 0.0 {
        return Ok(WslnrWeights { omega: vec![1.0 / n as f64; n], alpha });
    }
    // Work in the log domain so large alpha cannot overflow.
    let logs: Vec<f64> = sample.gains().iter().map(|g| -alpha * g.ln()).collect();
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let raw: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
    let total: f64 = raw.iter().sum();
    Ok(WslnrWeights { omega: raw.iter().map(|w| w / total).collect(), alpha })
}

/// `(sum_{l != u} w_l h_l h_l^H + sigma^2 I)^{-1} h_u` for every `u`, normalized.
fn leakage_beamformers(sample: &ChannelSample, weights: &[f64], power_per_user: f64) -> Result<BeamformerSet> {
    let n_t = sample.n_t();
    let ridge = sample.common_noise();
    let mut f_tilde = Vec::with_capacity(sample.n_u());
    for (u, hu) in sample.h.iter().enumerate() {
        let (others, w): (Vec<&CVec>, Vec<f64>) = sample
            .h
            .iter()
            .zip(weights)
            .enumerate()
            .filter(|&(l, _)| l != u)
            .map(|(_, (h, &w))| (h, w))
            .unzip();
        let a = rank1_accumulate(n_t, &others, &w, ridge)?;
        let f = pd_solve(&a, hu)?;
        f_tilde.push(unit(&f, "SLNR")?);
    }
    Ok(BeamformerSet { f_tilde, power_per_user })
}

pub fn wslnr(sample: &ChannelSample, alpha: f64, power_per_user: f64) -> Result<BeamformerSet> {
    let w = wslnr_weights(sample, alpha)?;
    leakage_beamformers(sample, &w.omega, power_per_user)
}

/// Conventional SLNR: unit leakage weights.
pub fn slnr(sample: &ChannelSample, power_per_user: f64) -> Result<BeamformerSet> {
    leakage_beamformers(sample, &vec![1.0; sample.n_u()], power_per_user)
}

/// `|<a, b>|` for unit vectors: 1 means same direction up to phase.
pub fn alignment(a: &CVec, b: &CVec) -> f64 {
    hdot_unchecked(a.as_slice(), b.as_slice()).norm() / (a.norm() * b.norm())
}
