//! Shared helpers and independent oracles for the integration tests.
//!
//! The oracles deliberately avoid the library's own linear algebra: small
//! inverses go through the adjugate, attention is a straight-line loop.

#![allow(dead_code)]

pub mod checks;

use fairbeam::channel::ChannelSample;
use fairbeam::complex_core::{CVec, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn cgauss<R: Rng>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    c(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn random_cvec<R: Rng>(rng: &mut R, n: usize) -> CVec {
    CVec::new((0..n).map(|_| cgauss(rng)).collect())
}

/// Random sample with per-user gains spread over roughly 30 dB and a common
/// noise variance.
pub fn random_sample(n_t: usize, n_u: usize, seed: u64) -> ChannelSample {
    let mut r = rng(seed);
    let sigma2 = r.random_range(0.1..2.0);
    let h = (0..n_u)
        .map(|_| {
            let amp = 10f64.powf(r.random_range(-0.75..0.75));
            random_cvec(&mut r, n_t).scale(c(amp, 0.0))
        })
        .collect();
    ChannelSample { h, sigma2: vec![sigma2; n_u], positions: vec![(0.0, 0.0); n_u] }
}

pub type Mat = Vec<Vec<C64>>;

fn det2(a: C64, b: C64, c_: C64, d: C64) -> C64 {
    a * d - b * c_
}

/// Inverse of a 1x1, 2x2 or 3x3 matrix via cofactors.
pub fn adjugate_inverse(m: &Mat) -> Mat {
    let n = m.len();
    match n {
        1 => vec![vec![C64::new(1.0, 0.0) / m[0][0]]],
        2 => {
            let det = det2(m[0][0], m[0][1], m[1][0], m[1][1]);
            vec![vec![m[1][1] / det, -m[0][1] / det], vec![-m[1][0] / det, m[0][0] / det]]
        }
        3 => {
            let cof = |i: usize, j: usize| {
                let r: Vec<usize> = (0..3).filter(|&k| k != i).collect();
                let s: Vec<usize> = (0..3).filter(|&k| k != j).collect();
                let minor = det2(m[r[0]][s[0]], m[r[0]][s[1]], m[r[1]][s[0]], m[r[1]][s[1]]);
                if (i + j).is_multiple_of(2) {
                    minor
                } else {
                    -minor
                }
            };
            let det = m[0][0] * cof(0, 0) + m[0][1] * cof(0, 1) + m[0][2] * cof(0, 2);
            (0..3).map(|i| (0..3).map(|j| cof(j, i) / det).collect()).collect()
        }
        _ => panic!("adjugate oracle supports n <= 3"),
    }
}

pub fn mat_vec(m: &Mat, v: &CVec) -> CVec {
    CVec::new(m.iter().map(|row| row.iter().zip(v.iter()).map(|(a, b)| a * b).sum()).collect())
}

/// `|<a, b>| / (|a| |b|)`, computed directly.
pub fn abs_cos(a: &CVec, b: &CVec) -> f64 {
    let ip: C64 = a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum();
    ip.norm() / (a.norm() * b.norm())
}

/// Weighted-SLNR directions from the defining formula with an adjugate inverse.
pub fn wslnr_oracle(s: &ChannelSample, alpha: f64) -> Vec<CVec> {
    let n_u = s.h.len();
    let n_t = s.h[0].len();
    let raw: Vec<f64> = s.h.iter().map(|h| h.norm_sqr().powf(-alpha)).collect();
    let total: f64 = raw.iter().sum();
    let w: Vec<f64> = raw.iter().map(|v| v / total).collect();
    let sigma2 = s.sigma2[0];
    (0..n_u)
        .map(|u| {
            let mut a: Mat = (0..n_t)
                .map(|i| (0..n_t).map(|j| if i == j { c(sigma2, 0.0) } else { c(0.0, 0.0) }).collect())
                .collect();
            for l in (0..n_u).filter(|&l| l != u) {
                for i in 0..n_t {
                    for j in 0..n_t {
                        a[i][j] += s.h[l][i] * s.h[l][j].conj() * w[l];
                    }
                }
            }
            mat_vec(&adjugate_inverse(&a), &s.h[u])
        })
        .collect()
}

/// Dense single-block attention sublayer `x + (softmax(QK^T/sqrt(dh)) V) Wo + bo`
/// on one set of rows, written as plain loops. Weights are row-major `[in, out]`.
#[allow(clippy::too_many_arguments)]
pub fn attention_oracle(
    x: &[Vec<f64>],
    wq: &[f64],
    bq: &[f64],
    wk: &[f64],
    bk: &[f64],
    wv: &[f64],
    bv: &[f64],
    wo: &[f64],
    bo: &[f64],
    heads: usize,
) -> Vec<Vec<f64>> {
    let n = x.len();
    let d = x[0].len();
    let dh = d / heads;
    let lin = |w: &[f64], b: &[f64], row: &[f64]| -> Vec<f64> {
        (0..d).map(|o| b[o] + (0..d).map(|i| row[i] * w[i * d + o]).sum::<f64>()).collect()
    };
    let q: Vec<Vec<f64>> = x.iter().map(|r| lin(wq, bq, r)).collect();
    let k: Vec<Vec<f64>> = x.iter().map(|r| lin(wk, bk, r)).collect();
    let v: Vec<Vec<f64>> = x.iter().map(|r| lin(wv, bv, r)).collect();
    let mut cat = vec![vec![0.0; d]; n];
    for h in 0..heads {
        let sl = h * dh..(h + 1) * dh;
        for i in 0..n {
            let scores: Vec<f64> = (0..n)
                .map(|j| sl.clone().map(|t| q[i][t] * k[j][t]).sum::<f64>() / (dh as f64).sqrt())
                .collect();
            let m = scores.iter().cloned().fold(f64::MIN, f64::max);
            let e: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
            let z: f64 = e.iter().sum();
            for t in sl.clone() {
                cat[i][t] = (0..n).map(|j| e[j] / z * v[j][t]).sum();
            }
        }
    }
    x.iter()
        .zip(&cat)
        .map(|(xr, cr)| {
            let o = lin(wo, bo, cr);
            xr.iter().zip(o).map(|(a, b)| a + b).collect()
        })
        .collect()
}
