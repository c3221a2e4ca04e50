//! Differentiable rates and fairness inside the training graph, batch
//! max-min scaling of sum rates, the hinge Lagrangian and the dual update.
//!
//! For a batch of `N_b` channel draws ("streams") the loss is
//!
//! ```text
//! L = -( mean_k S~_k + lambda * min(mean_k J_k - J_LB, 0) )
//! ```
//!
//! where `S~_k` is the sum rate of stream `k` scaled to `[0, 1]` by the
//! batch extremes and `J_k` its Jain index. `lambda` is a constant inside the
//! graph and moves only through [`dual_update`].

use serde::{Deserialize, Serialize};

use crate::autonet::{Graph, Real, UnaryOp, Var};
use crate::channel::ChannelSample;
use crate::error::{Error, Result};

/// Dual multiplier and the fairness constraint it enforces.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualState {
    pub lambda: f64,
    pub j_lb: f64,
    pub eps: f64,
    pub eta: f64,
}

impl DualState {
    pub fn new(lambda: f64, j_lb: f64, eps: f64, eta: f64) -> Result<Self> {
        let d = DualState { lambda, j_lb, eps, eta };
        d.validate()?;
        Ok(d)
    }

    /// `j_lb = 0` is accepted for unconstrained runs.
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) {
            return Err(Error::InvalidConfig(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !(0.0..1.0).contains(&self.j_lb) {
            return Err(Error::InvalidConfig(format!("j_lb must lie in [0, 1), got {}", self.j_lb)));
        }
        if !(self.eps > 0.0) || !(self.eta >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "need eps > 0 and eta >= 0, got eps = {}, eta = {}",
                self.eps, self.eta
            )));
        }
        Ok(())
    }
}

/// Projected dual ascent step. Inside the band `|J - J_LB| <= eps` the
/// multiplier is left alone.
pub fn dual_update(dual: DualState, j_bar: f64) -> DualState {
    if (j_bar - dual.j_lb).abs() > dual.eps {
        DualState { lambda: (dual.lambda + dual.eta * (dual.j_lb - j_bar)).max(0.0), ..dual }
    } else {
        dual
    }
}

/// Channels of a batch as graph constants, split into real and imaginary
/// planes of shape `[n_b, n_u, n_t]`.
#[derive(Debug, Clone)]
pub struct ChannelBatch<T> {
    pub n_b: usize,
    pub n_u: usize,
    pub n_t: usize,
    pub h_re: Vec<T>,
    pub h_im: Vec<T>,
    /// `[n_b, n_u]`
    pub noise: Vec<T>,
    pub power_per_user: T,
}

impl<T: Real> ChannelBatch<T> {
    pub fn from_samples(samples: &[&ChannelSample], power_per_user: f64) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| Error::InvalidInput("empty channel batch".into()))?;
        let (n_u, n_t) = (first.n_u(), first.n_t());
        let mut b = ChannelBatch {
            n_b: samples.len(),
            n_u,
            n_t,
            h_re: Vec::with_capacity(samples.len() * n_u * n_t),
            h_im: Vec::with_capacity(samples.len() * n_u * n_t),
            noise: Vec::with_capacity(samples.len() * n_u),
            power_per_user: T::lit(power_per_user),
        };
        for (k, s) in samples.iter().enumerate() {
            if s.n_u() != n_u || s.n_t() != n_t {
                return Err(Error::Dimension(format!(
                    "stream {k} is {}x{}, batch is {n_u}x{n_t}",
                    s.n_u(),
                    s.n_t()
                )));
            }
            for row in &s.h {
                b.h_re.extend(row.iter().map(|z| T::lit(z.re)));
                b.h_im.extend(row.iter().map(|z| T::lit(z.im)));
            }
            b.noise.extend(s.sigma2.iter().map(|&v| T::lit(v)));
        }
        Ok(b)
    }
}

/// Per-user rates `[n_b, n_u]` from unit-norm beams `[n_b, n_u, 2 n_t]`.
struct RatesOp<T> {
    chan: ChannelBatch<T>,
    /// `h_u^H f_l` per `(k, u, l)`.
    g_re: Vec<T>,
    g_im: Vec<T>,
    total: Vec<T>,
    interf: Vec<T>,
}

impl<T: Real> UnaryOp<T> for RatesOp<T> {
    fn name(&self) -> &'static str {
        "rates"
    }

    fn forward(&mut self, f: &[T], shape: &[usize]) -> Result<(Vec<usize>, Vec<T>)> {
        let c = &self.chan;
        let (nb, nu, nt) = (c.n_b, c.n_u, c.n_t);
        if shape != [nb, nu, 2 * nt] {
            return Err(Error::Dimension(format!(
                "rates: beams {shape:?} for a {nb}x{nu}x{nt} channel batch"
            )));
        }
        let p = c.power_per_user;
        let ln2 = T::lit(std::f64::consts::LN_2);
        self.g_re = vec![T::zero(); nb * nu * nu];
        self.g_im = vec![T::zero(); nb * nu * nu];
        self.total = vec![T::zero(); nb * nu];
        self.interf = vec![T::zero(); nb * nu];
        let mut rates = vec![T::zero(); nb * nu];
        for k in 0..nb {
            for u in 0..nu {
                let hr = &c.h_re[(k * nu + u) * nt..][..nt];
                let hi = &c.h_im[(k * nu + u) * nt..][..nt];
                let noise = c.noise[k * nu + u];
                let (mut tot, mut inter) = (noise, noise);
                for l in 0..nu {
                    let fl = &f[(k * nu + l) * 2 * nt..][..2 * nt];
                    let (fr, fi) = fl.split_at(nt);
                    let (mut re, mut im) = (T::zero(), T::zero());
                    for t in 0..nt {
                        re += hr[t] * fr[t] + hi[t] * fi[t];
                        im += hr[t] * fi[t] - hi[t] * fr[t];
                    }
                    let idx = (k * nu + u) * nu + l;
                    self.g_re[idx] = re;
                    self.g_im[idx] = im;
                    let pw = p * (re * re + im * im);
                    tot += pw;
                    if l != u {
                        inter += pw;
                    }
                }
                self.total[k * nu + u] = tot;
                self.interf[k * nu + u] = inter;
                rates[k * nu + u] = (tot.ln() - inter.ln()) / ln2;
            }
        }
        Ok((vec![nb, nu], rates))
    }

    fn backward(&self, _f: &[T], _rates: &[T], grad_out: &[T], grad_in: &mut [T]) {
        let c = &self.chan;
        let (nb, nu, nt) = (c.n_b, c.n_u, c.n_t);
        let two_p = T::lit(2.0) * c.power_per_user;
        let ln2 = T::lit(std::f64::consts::LN_2);
        for k in 0..nb {
            for u in 0..nu {
                let gr = grad_out[k * nu + u] / ln2;
                if gr == T::zero() {
                    continue;
                }
                let inv_t = T::one() / self.total[k * nu + u];
                let inv_i = T::one() / self.interf[k * nu + u];
                let hr = &c.h_re[(k * nu + u) * nt..][..nt];
                let hi = &c.h_im[(k * nu + u) * nt..][..nt];
                for l in 0..nu {
                    let dp = if l == u { inv_t } else { inv_t - inv_i } * gr;
                    let idx = (k * nu + u) * nu + l;
                    let (re, im) = (self.g_re[idx] * two_p * dp, self.g_im[idx] * two_p * dp);
                    let gl = &mut grad_in[(k * nu + l) * 2 * nt..][..2 * nt];
                    let (gfr, gfi) = gl.split_at_mut(nt);
                    for t in 0..nt {
                        gfr[t] += re * hr[t] - im * hi[t];
                        gfi[t] += re * hi[t] + im * hr[t];
                    }
                }
            }
        }
    }
}

/// Jain's index of each row of `[n_b, n]`; an all-zero row gives 0.
struct JainOp;

impl<T: Real> UnaryOp<T> for JainOp {
    fn name(&self) -> &'static str {
        "jain"
    }

    fn forward(&mut self, x: &[T], shape: &[usize]) -> Result<(Vec<usize>, Vec<T>)> {
        let n = *shape.last().unwrap_or(&0);
        if n == 0 {
            return Err(Error::Dimension("jain: empty rows".into()));
        }
        let nt = T::from_usize(n).unwrap();
        let out = x
            .chunks_exact(n)
            .map(|r| {
                let s: T = r.iter().copied().sum();
                let q: T = r.iter().map(|&v| v * v).sum();
                if q > T::zero() {
                    s * s / (nt * q)
                } else {
                    T::zero()
                }
            })
            .collect::<Vec<_>>();
        Ok((vec![out.len()], out))
    }

    fn backward(&self, x: &[T], _: &[T], grad_out: &[T], grad_in: &mut [T]) {
        let n = x.len() / grad_out.len();
        let nt = T::from_usize(n).unwrap();
        for (k, (r, gi)) in x.chunks_exact(n).zip(grad_in.chunks_exact_mut(n)).enumerate() {
            let s: T = r.iter().copied().sum();
            let q: T = r.iter().map(|&v| v * v).sum();
            if q <= T::zero() {
                continue;
            }
            let a = T::lit(2.0) * s / (nt * q) * grad_out[k];
            for (g, &v) in gi.iter_mut().zip(r) {
                *g += a * (T::one() - s * v / q);
            }
        }
    }
}

/// Graph nodes for the per-stream quantities of a batch.
#[derive(Debug, Clone, Copy)]
pub struct StreamRates {
    /// `[n_b, n_u]` unit-norm beams as seen by the rate computation.
    pub beams: Var,
    /// `[n_b, n_u]`
    pub rates: Var,
    /// `S_k`, `[n_b]`
    pub sums: Var,
    /// `J_k`, `[n_b]`
    pub jain: Var,
}

/// Normalizes raw network rows to unit-norm beams and evaluates rates, sum
/// rates and Jain indices per stream, all differentiable w.r.t. `raw`.
pub fn graph_rates<T: Real>(g: &mut Graph<T>, chan: &ChannelBatch<T>, raw: Var) -> Result<StreamRates> {
    let shape = g.shape(raw).to_vec();
    if shape != [chan.n_b, chan.n_u, 2 * chan.n_t] {
        return Err(Error::Dimension(format!(
            "raw beamformers {shape:?} do not match channels [{}, {}, {}]",
            chan.n_b,
            chan.n_u,
            2 * chan.n_t
        )));
    }
    let beams = g.normalize_rows(raw);
    let op = RatesOp { chan: chan.clone(), g_re: vec![], g_im: vec![], total: vec![], interf: vec![] };
    let rates = g.custom(beams, Box::new(op))?;
    let sums = g.sum_rows(rates);
    let jain = g.custom(rates, Box::new(JainOp))?;
    Ok(StreamRates { beams, rates, sums, jain })
}

/// Max-min scaling of the per-stream sum rates with the batch extremes held
/// constant. Returns the scaled node and whether the batch was degenerate
/// (single stream or spread below `1e-9`), in which case every entry is 0.5.
pub fn maxmin_normalize<T: Real>(g: &mut Graph<T>, sums: Var) -> (Var, bool) {
    let v = g.value(sums);
    let lo = v.iter().copied().fold(T::infinity(), T::min);
    let hi = v.iter().copied().fold(T::neg_infinity(), T::max);
    if v.len() < 2 {
        return (g.scale_shift(sums, T::zero(), T::lit(0.5)), true);
    }
    maxmin_with_extremes(g, sums, lo.as_f64(), hi.as_f64())
}

/// Same scaling with caller-supplied extremes. Finite-difference checks use
/// this to hold the extremes at their unperturbed values.
pub fn maxmin_with_extremes<T: Real>(g: &mut Graph<T>, sums: Var, lo: f64, hi: f64) -> (Var, bool) {
    let spread = hi - lo;
    if !(spread >= 1e-9) {
        (g.scale_shift(sums, T::zero(), T::lit(0.5)), true)
    } else {
        let a = 1.0 / spread;
        (g.scale_shift(sums, T::lit(a), T::lit(-lo * a)), false)
    }
}

/// `-(s_bar + lambda * min(j_bar - j_lb, 0))` with `lambda` and `j_lb` as
/// constants. At `j_bar == j_lb` the hinge passes no gradient.
pub fn hinge_loss<T: Real>(g: &mut Graph<T>, s_bar: Var, j_bar: Var, dual: &DualState) -> Result<Var> {
    let v = g.scale_shift(j_bar, T::one(), T::lit(-dual.j_lb));
    let h = g.min_zero(v);
    let pen = g.scale_shift(h, T::lit(dual.lambda), T::zero());
    let obj = g.add(s_bar, pen)?;
    Ok(g.scale_shift(obj, -T::one(), T::zero()))
}

#[derive(Debug, Clone)]
pub struct BatchLossReport {
    pub loss: Var,
    pub s_bar_node: Var,
    pub j_bar_node: Var,
    pub s_bar: f64,
    pub j_bar: f64,
    /// `j_bar - j_lb`
    pub violation: f64,
    /// `(S_k, J_k)` per stream.
    pub per_stream: Vec<(f64, f64)>,
    pub degenerate: bool,
    /// Batch `(S_min, S_max)`.
    pub extremes: (f64, f64),
}

/// Full loss for one batch of raw network outputs.
pub fn batch_loss<T: Real>(
    g: &mut Graph<T>,
    chan: &ChannelBatch<T>,
    raw: Var,
    dual: &DualState,
) -> Result<BatchLossReport> {
    batch_loss_with(g, chan, raw, dual, None)
}

/// [`batch_loss`] with optionally pinned max-min extremes.
pub fn batch_loss_with<T: Real>(
    g: &mut Graph<T>,
    chan: &ChannelBatch<T>,
    raw: Var,
    dual: &DualState,
    extremes: Option<(f64, f64)>,
) -> Result<BatchLossReport> {
    let sr = graph_rates(g, chan, raw)?;
    let sums = g.value(sr.sums);
    let lo = sums.iter().map(|v| v.as_f64()).fold(f64::INFINITY, f64::min);
    let hi = sums.iter().map(|v| v.as_f64()).fold(f64::NEG_INFINITY, f64::max);
    let (scaled, degenerate) = match extremes {
        Some((a, b)) => maxmin_with_extremes(g, sr.sums, a, b),
        None => maxmin_normalize(g, sr.sums),
    };
    let s_bar = g.mean(scaled);
    let j_bar = g.mean(sr.jain);
    let loss = hinge_loss(g, s_bar, j_bar, dual)?;
    let per_stream = g
        .value(sr.sums)
        .iter()
        .zip(g.value(sr.jain))
        .map(|(s, j)| (s.as_f64(), j.as_f64()))
        .collect();
    let jb = g.scalar(j_bar).as_f64();
    Ok(BatchLossReport {
        loss,
        s_bar_node: s_bar,
        j_bar_node: j_bar,
        s_bar: g.scalar(s_bar).as_f64(),
        j_bar: jb,
        violation: jb - dual.j_lb,
        per_stream,
        degenerate,
        extremes: (lo, hi),
    })
}
