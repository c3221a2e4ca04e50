//! Set-transformer beamforming network.
//!
//! Per-user CSI rows are embedded, mixed across users by `n_att` pre-norm
//! attention blocks, and mapped to `2 n_t` reals per user. There is no
//! positional information, so the map is permutation-equivariant over users.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::graph::{Graph, Var};
use super::real::Real;
use crate::complex_core::{CVec, C64};
use crate::error::{Error, Result};
use crate::metrics::BeamformerSet;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_f: usize,
    pub d_model: usize,
    pub n_att: usize,
    pub n_head: usize,
    pub n_t: usize,
    pub init_seed: u64,
}

impl Default for ModelConfig {
    /// 16 antennas, embedding factor 4 (`d_model = 4 * 33`), 8 blocks, 4 heads.
    fn default() -> Self {
        ModelConfig::for_antennas(16, 4, 8, 4, 0)
    }
}

impl ModelConfig {
    /// `d_model = emb_factor * (2 n_t + 1)`.
    pub fn for_antennas(n_t: usize, emb_factor: usize, n_att: usize, n_head: usize, init_seed: u64) -> Self {
        let n_f = 2 * n_t + 1;
        ModelConfig { n_f, d_model: emb_factor * n_f, n_att, n_head, n_t, init_seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_f == 0 || self.d_model == 0 || self.n_t == 0 || self.n_head == 0 {
            return Err(Error::InvalidConfig(format!("model dimensions must be positive: {self:?}")));
        }
        if self.n_f != 2 * self.n_t + 1 {
            return Err(Error::InvalidConfig(format!(
                "n_f = {} does not match n_t = {} (expected {})",
                self.n_f,
                self.n_t,
                2 * self.n_t + 1
            )));
        }
        if !self.d_model.is_multiple_of(self.n_head) {
            return Err(Error::InvalidConfig(format!(
                "d_model = {} is not divisible by n_head = {}",
                self.d_model, self.n_head
            )));
        }
        Ok(())
    }

    pub fn n_out(&self) -> usize {
        2 * self.n_t
    }

    /// Parameter shapes in declaration order.
    pub fn layout(&self) -> Vec<(String, Vec<usize>)> {
        let (d, f) = (self.d_model, self.n_f);
        let mut out = vec![("embed.w".to_string(), vec![f, d]), ("embed.b".to_string(), vec![d])];
        for i in 0..self.n_att {
            let p = |s: &str| format!("block{i}.{s}");
            out.push((p("ln1.g"), vec![d]));
            out.push((p("ln1.b"), vec![d]));
            for m in ["q", "k", "v", "o"] {
                out.push((p(&format!("{m}.w")), vec![d, d]));
                out.push((p(&format!("{m}.b")), vec![d]));
            }
            out.push((p("ln2.g"), vec![d]));
            out.push((p("ln2.b"), vec![d]));
            out.push((p("ff.w"), vec![d, d]));
            out.push((p("ff.b"), vec![d]));
        }
        out.push(("head.w".to_string(), vec![d, self.n_out()]));
        out.push(("head.b".to_string(), vec![self.n_out()]));
        out
    }
}

/// Number of scalars in a model built from `config`.
pub fn count_params(config: &ModelConfig) -> usize {
    let (d, f, o) = (config.d_model, config.n_f, config.n_out());
    let embed = f * d + d;
    let block = 2 * d + 4 * (d * d + d) + 2 * d + (d * d + d);
    let head = d * o + o;
    embed + config.n_att * block + head
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

/// Parameters bound into one graph, in declaration order.
pub struct Bound {
    pub vars: Vec<Var>,
}

/// Fixed per-feature standardization `(x - shift) / scale` applied to the
/// network input. Not trained; fitted once on the training set.
#[derive(Debug, Clone, PartialEq)]
pub struct InputNorm<T> {
    pub shift: Vec<T>,
    pub scale: Vec<T>,
}

impl<T: Real> InputNorm<T> {
    pub fn identity(n_f: usize) -> Self {
        InputNorm { shift: vec![T::zero(); n_f], scale: vec![T::one(); n_f] }
    }

    /// Mean and standard deviation of every column of row-major `rows`
    /// (`n_f` columns); deviations below `1e-6` are replaced by 1.
    pub fn fit(rows: &[f32], n_f: usize) -> Result<Self> {
        if n_f == 0 || rows.is_empty() || !rows.len().is_multiple_of(n_f) {
            return Err(Error::Dimension(format!("{} values do not form rows of {n_f}", rows.len())));
        }
        let n = (rows.len() / n_f) as f64;
        let mut mean = vec![0.0f64; n_f];
        for r in rows.chunks_exact(n_f) {
            for (m, &v) in mean.iter_mut().zip(r) {
                *m += v as f64;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0f64; n_f];
        for r in rows.chunks_exact(n_f) {
            for ((s, &v), m) in var.iter_mut().zip(r).zip(&mean) {
                *s += (v as f64 - m).powi(2);
            }
        }
        Ok(InputNorm {
            shift: mean.iter().map(|&m| T::lit(m as f32 as f64)).collect(),
            scale: var
                .iter()
                .map(|&v| {
                    let sd = (v / n).sqrt();
                    T::lit(if sd < 1e-6 { 1.0 } else { sd as f32 as f64 })
                })
                .collect(),
        })
    }

    pub fn apply(&self, features: &mut [T]) {
        let n_f = self.shift.len();
        for row in features.chunks_exact_mut(n_f) {
            for ((v, &m), &s) in row.iter_mut().zip(&self.shift).zip(&self.scale) {
                *v = (*v - m) / s;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model<T: Real> {
    pub config: ModelConfig,
    pub input_norm: InputNorm<T>,
    pub params: Vec<Param<T>>,
}

impl<T: Real> Model<T> {
    /// Affine weights and biases ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)); layer
    /// norm gains 1 and biases 0. Draws follow declaration order.
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.init_seed);
        let mut params = Vec::new();
        let mut fan_in = config.n_f;
        for (name, shape) in config.layout() {
            let n: usize = shape.iter().product();
            let data = if name.contains(".ln") {
                let fill = if name.ends_with(".g") { T::one() } else { T::zero() };
                vec![fill; n]
            } else {
                if shape.len() == 2 {
                    fan_in = shape[0];
                }
                let bound = 1.0 / (fan_in as f64).sqrt();
                (0..n).map(|_| T::lit(rng.random_range(-bound..bound))).collect()
            };
            params.push(Param { name, shape, data });
        }
        Ok(Model { input_norm: InputNorm::identity(config.n_f), config, params })
    }

    /// Rebuilds a model from flat parameter data in declaration order.
    pub fn from_flat(config: ModelConfig, flat: &[T]) -> Result<Self> {
        config.validate()?;
        let total = count_params(&config);
        if flat.len() != total {
            return Err(Error::Dimension(format!(
                "model needs {total} parameters, got {}",
                flat.len()
            )));
        }
        let mut at = 0;
        let params = config
            .layout()
            .into_iter()
            .map(|(name, shape)| {
                let n: usize = shape.iter().product();
                let data = flat[at..at + n].to_vec();
                at += n;
                Param { name, shape, data }
            })
            .collect();
        Ok(Model { input_norm: InputNorm::identity(config.n_f), config, params })
    }

    pub fn num_params(&self) -> usize {
        self.params.iter().map(|p| p.data.len()).sum()
    }

    pub fn flat(&self) -> Vec<T> {
        self.params.iter().flat_map(|p| p.data.iter().copied()).collect()
    }

    pub fn param(&self, name: &str) -> Option<&Param<T>> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut Param<T>> {
        self.params.iter_mut().find(|p| p.name == name)
    }

    /// Same parameters in another float type.
    pub fn convert<U: Real>(&self) -> Model<U> {
        Model {
            config: self.config.clone(),
            input_norm: InputNorm {
                shift: self.input_norm.shift.iter().map(|&v| U::lit(v.as_f64())).collect(),
                scale: self.input_norm.scale.iter().map(|&v| U::lit(v.as_f64())).collect(),
            },
            params: self
                .params
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    shape: p.shape.clone(),
                    data: p.data.iter().map(|&v| U::lit(v.as_f64())).collect(),
                })
                .collect(),
        }
    }

    /// Adds the parameters to `g`, trainable or frozen.
    pub fn bind(&self, g: &mut Graph<T>, trainable: bool) -> Result<Bound> {
        let vars = self
            .params
            .iter()
            .map(|p| {
                if trainable {
                    g.param(&p.shape, p.data.clone())
                } else {
                    g.constant(&p.shape, p.data.clone())
                }
            })
            .collect::<Result<_>>()?;
        Ok(Bound { vars })
    }

    /// Raw quasi-beamformers `[batch, n_u, 2 n_t]` for input `[batch, n_u, n_f]`.
    pub fn forward(&self, g: &mut Graph<T>, bound: &Bound, input: Var) -> Result<Var> {
        let shape = g.shape(input).to_vec();
        if shape.len() != 3 || shape[2] != self.config.n_f || shape[1] == 0 {
            return Err(Error::Dimension(format!(
                "model expects [batch, users, {}] input, got {shape:?}",
                self.config.n_f
            )));
        }
        let n_u = shape[1];
        let p = &bound.vars;
        let mut x = g.affine(input, p[0], Some(p[1]))?;
        for blk in p[2..p.len() - 2].chunks_exact(14) {
            let a = g.layer_norm(x, blk[0], blk[1])?;
            let q = g.affine(a, blk[2], Some(blk[3]))?;
            let k = g.affine(a, blk[4], Some(blk[5]))?;
            let v = g.affine(a, blk[6], Some(blk[7]))?;
            let att = g.attention(q, k, v, n_u, self.config.n_head)?;
            let o = g.affine(att, blk[8], Some(blk[9]))?;
            x = g.add(x, o)?;
            let c = g.layer_norm(x, blk[10], blk[11])?;
            let h = g.affine(c, blk[12], Some(blk[13]))?;
            let h = g.relu(h);
            x = g.add(x, h)?;
        }
        g.affine(x, p[p.len() - 2], Some(p[p.len() - 1]))
    }

    /// Standardizes raw features `[batch, n_u, n_f]` and adds them to `g`.
    pub fn input(&self, g: &mut Graph<T>, mut features: Vec<T>, batch: usize, n_u: usize) -> Result<Var> {
        if features.len() != batch * n_u * self.config.n_f {
            return Err(Error::Dimension(format!(
                "{} feature values for [{batch}, {n_u}, {}]",
                features.len(),
                self.config.n_f
            )));
        }
        self.input_norm.apply(&mut features);
        g.constant(&[batch, n_u, self.config.n_f], features)
    }

    /// Inference without gradients. `features` is row-major raw
    /// `[batch, n_u, n_f]`; returns raw outputs `[batch, n_u, 2 n_t]`.
    pub fn predict(&self, features: &[T], batch: usize, n_u: usize) -> Result<Vec<T>> {
        let mut g = Graph::new();
        let bound = self.bind(&mut g, false)?;
        let input = self.input(&mut g, features.to_vec(), batch, n_u)?;
        let out = self.forward(&mut g, &bound, input)?;
        Ok(g.value(out).to_vec())
    }
}

/// Interprets each raw row `[re(n_t) | im(n_t)]` as a complex vector and
/// scales it to unit norm. Rows with norm below `1e-12` become `e_1`; the
/// number of such rows is returned alongside.
pub fn normalize_columns<T: Real>(raw: &[T], n_u: usize, n_t: usize, power_per_user: f64) -> Result<(BeamformerSet, usize)> {
    if raw.len() != n_u * 2 * n_t {
        return Err(Error::Dimension(format!(
            "{} raw values for {n_u} users x {} outputs",
            raw.len(),
            2 * n_t
        )));
    }
    let mut dead = 0;
    let f_tilde = raw
        .chunks_exact(2 * n_t)
        .map(|row| {
            let v = CVec::new((0..n_t).map(|i| C64::new(row[i].as_f64(), row[n_t + i].as_f64())).collect());
            if v.norm() < 1e-12 {
                dead += 1;
                CVec::basis(n_t, 0)
            } else {
                v.normalized().unwrap_or_else(|| CVec::basis(n_t, 0))
            }
        })
        .collect();
    if dead > 0 {
        log::warn!("normalize_columns: {dead} zero-norm row(s) replaced by e1");
    }
    Ok((BeamformerSet { f_tilde, power_per_user }, dead))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_count_is_pinned() {
        let c = ModelConfig::default();
        assert_eq!(c.d_model, 132);
        assert_eq!(count_params(&c), 715_208);
        let m = Model::<f32>::new(ModelConfig { n_att: 1, ..c }).unwrap();
        assert_eq!(m.num_params(), count_params(&m.config));
    }

    #[test]
    fn layout_matches_count() {
        let c = ModelConfig::for_antennas(8, 4, 4, 4, 3);
        let n: usize = c.layout().iter().map(|(_, s)| s.iter().product::<usize>()).sum();
        assert_eq!(n, count_params(&c));
        assert_eq!(n, 97_256);
    }

    #[test]
    fn rejects_indivisible_heads() {
        let c = ModelConfig { n_head: 5, ..ModelConfig::default() };
        assert!(Model::<f32>::new(c).is_err());
    }

    #[test]
    fn init_is_seeded() {
        let c = ModelConfig::for_antennas(2, 2, 1, 1, 9);
        let a = Model::<f32>::new(c.clone()).unwrap();
        let b = Model::<f32>::new(c.clone()).unwrap();
        assert_eq!(a, b);
        let d = Model::<f32>::new(ModelConfig { init_seed: 10, ..c }).unwrap();
        assert_ne!(a.flat(), d.flat());
    }

    #[test]
    fn normalize_examples() {
        let (bf, dead) = normalize_columns(&[3.0f32, 0.0, 4.0, 0.0], 1, 2, 1.0).unwrap();
        assert_eq!(dead, 0);
        assert!((bf.f_tilde[0][0] - C64::new(0.6, 0.8)).norm() < 1e-7);
        let (bf, dead) = normalize_columns(&[0.0f32; 4], 1, 2, 1.0).unwrap();
        assert_eq!(dead, 1);
        assert_eq!(bf.f_tilde[0], CVec::basis(2, 0));
    }
}
