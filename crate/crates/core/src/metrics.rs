//! Evaluation-side rates and fairness in double precision.
//!
//! This is the reference path: the differentiable rates computed inside the
//! training graph are checked against [`evaluate_rates`].

use crate::channel::ChannelSample;
use crate::complex_core::{hdot_unchecked, CVec};
use crate::error::{Error, Result};

/// Unit-norm beam directions plus the equal per-user power `P_tot / N_u`.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamformerSet {
    pub f_tilde: Vec<CVec>,
    pub power_per_user: f64,
}

impl BeamformerSet {
    pub fn n_u(&self) -> usize {
        self.f_tilde.len()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.power_per_user > 0.0) {
            return Err(Error::InvalidInput(format!(
                "power per user must be positive, got {}",
                self.power_per_user
            )));
        }
        for (u, f) in self.f_tilde.iter().enumerate() {
            let n = f.norm();
            if (n - 1.0).abs() > 1e-6 {
                return Err(Error::InvalidInput(format!("beamformer {u} has norm {n}, expected 1")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    pub sinr: Vec<f64>,
    /// bit/s/Hz
    pub rate: Vec<f64>,
    pub sum_rate: f64,
    pub jain: f64,
}

/// SINR, per-user rate, sum rate and Jain's index of `bf` on `sample`.
///
/// `SINR_u = P |h_u^H f_u|^2 / (sum_{l != u} P |h_u^H f_l|^2 + sigma_u^2)`.
pub fn evaluate_rates(sample: &ChannelSample, bf: &BeamformerSet) -> Result<RateReport> {
    let n_u = sample.n_u();
    let n_t = sample.n_t();
    if bf.n_u() != n_u || bf.f_tilde.iter().any(|f| f.len() != n_t) {
        return Err(Error::Dimension(format!(
            "{} beamformers for a {n_u}-user, {n_t}-antenna sample",
            bf.n_u()
        )));
    }
    let p = bf.power_per_user;
    let mut sinr = Vec::with_capacity(n_u);
    for (u, h) in sample.h.iter().enumerate() {
        let mut signal = 0.0;
        let mut interference = 0.0;
        for (l, f) in bf.f_tilde.iter().enumerate() {
            let g = p * hdot_unchecked(h.as_slice(), f.as_slice()).norm_sqr();
            if l == u {
                signal = g;
            } else {
                interference += g;
            }
        }
        sinr.push(signal / (interference + sample.sigma2[u]));
    }
    let rate: Vec<f64> = sinr.iter().map(|s| (1.0 + s).log2()).collect();
    let sum_rate = rate.iter().sum();
    let jain = if rate.iter().any(|&r| r > 0.0) { jain_index(&rate)? } else { 0.0 };
    Ok(RateReport { sinr, rate, sum_rate, jain })
}

/// Jain's index `(sum R)^2 / (N sum R^2)`.
pub fn jain_index(rates: &[f64]) -> Result<f64> {
    if rates.is_empty() {
        return Err(Error::InvalidInput("Jain's index of an empty rate list".into()));
    }
    if rates.iter().any(|&r| r < 0.0 || !r.is_finite()) {
        return Err(Error::InvalidInput("rates must be finite and nonnegative".into()));
    }
    let sum: f64 = rates.iter().sum();
    let sq: f64 = rates.iter().map(|r| r * r).sum();
    if sq == 0.0 {
        return Err(Error::InvalidInput("Jain's index is undefined when every rate is zero".into()));
    }
    Ok(sum * sum / (rates.len() as f64 * sq))
}

/// Empirical CDF: sorted values paired with `i / n`.
pub fn ecdf(values: &[f64]) -> Result<Vec<(f64, f64)>> {
    if values.is_empty() {
        return Err(Error::InvalidInput("ECDF of an empty sample".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    Ok(sorted
        .into_iter()
        .enumerate()
        .map(|(i, v)| (v, (i + 1) as f64 / n))
        .collect())
}
