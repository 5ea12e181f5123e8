//! Model hyperparameters and the flat parameter store.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::BASELINE_DIM;
use crate::error::{Error, Result};
use crate::numerics::{Activation, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub num_features: usize,
    #[serde(default = "default_baseline_dim")]
    pub baseline_dim: usize,
    #[serde(default = "default_hidden")]
    pub hidden: usize,
    #[serde(default)]
    pub activation: Activation,
    #[serde(default)]
    pub seed: u64,
}

fn default_baseline_dim() -> usize {
    BASELINE_DIM
}

fn default_hidden() -> usize {
    16
}

impl ModelConfig {
    pub fn new(num_features: usize) -> Self {
        Self {
            num_features,
            baseline_dim: BASELINE_DIM,
            hidden: default_hidden(),
            activation: Activation::Softmax,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_features == 0 || self.hidden == 0 || self.baseline_dim == 0 {
            return Err(Error::Config(format!(
                "model needs N ≥ 1, h ≥ 1 and a baseline; got N = {}, h = {}, N₀ = {}",
                self.num_features, self.hidden, self.baseline_dim
            )));
        }
        Ok(())
    }
}

/// Offsets of one GRU's parameters: input weights `w_* [h×1]`, recurrent
/// weights `u_* [h×h]` and biases `b_* [h]` for the update gate (z), reset
/// gate (r) and candidate (c).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GruOffsets {
    pub w_z: usize,
    pub u_z: usize,
    pub b_z: usize,
    pub w_r: usize,
    pub u_r: usize,
    pub b_r: usize,
    pub w_c: usize,
    pub u_c: usize,
    pub b_c: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChannelOffsets {
    pub forward: GruOffsets,
    pub backward: GruOffsets,
    pub key_w: usize,
    pub key_b: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Offsets {
    pub channels: Vec<ChannelOffsets>,
    pub embed_w: usize,
    pub embed_b: usize,
    pub query_w: usize,
    pub query_b: usize,
    pub head_w: usize,
    pub head_b: usize,
}

/// One named parameter array.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl ParamEntry {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Biases start at zero; weights are `[rows, fan_in]` matrices.
    pub fn is_bias(&self) -> bool {
        self.shape.len() == 1
    }
}

struct LayoutBuilder {
    entries: Vec<ParamEntry>,
    next: usize,
}

impl LayoutBuilder {
    fn add(&mut self, name: String, shape: Vec<usize>) -> usize {
        let offset = self.next;
        self.next += shape.iter().product::<usize>();
        self.entries.push(ParamEntry { name, shape, offset });
        offset
    }

    fn gru(&mut self, prefix: &str, h: usize) -> GruOffsets {
        let mut gate = |g: &str| {
            (
                self.add(format!("{prefix}.w_{g}"), vec![h, 1]),
                self.add(format!("{prefix}.u_{g}"), vec![h, h]),
                self.add(format!("{prefix}.b_{g}"), vec![h]),
            )
        };
        let (w_z, u_z, b_z) = gate("z");
        let (w_r, u_r, b_r) = gate("r");
        let (w_c, u_c, b_c) = gate("c");
        GruOffsets { w_z, u_z, b_z, w_r, u_r, b_r, w_c, u_c, b_c }
    }
}

/// Parameter names, shapes and offsets for a configuration.
pub fn layout(config: &ModelConfig) -> (Vec<ParamEntry>, Offsets, usize) {
    let h = config.hidden;
    let mut b = LayoutBuilder { entries: Vec::new(), next: 0 };
    let channels = (0..config.num_features)
        .map(|n| ChannelOffsets {
            forward: b.gru(&format!("channel.{n}.forward"), h),
            backward: b.gru(&format!("channel.{n}.backward"), h),
            key_w: b.add(format!("channel.{n}.key.weight"), vec![h, h]),
            key_b: b.add(format!("channel.{n}.key.bias"), vec![h]),
        })
        .collect();
    let embed_w = b.add("baseline.weight".into(), vec![h, config.baseline_dim]);
    let embed_b = b.add("baseline.bias".into(), vec![h]);
    let query_w = b.add("query.weight".into(), vec![h, h]);
    let query_b = b.add("query.bias".into(), vec![h]);
    let head_w = b.add("head.weight".into(), vec![1, 2 * h]);
    let head_b = b.add("head.bias".into(), vec![1]);
    let offsets = Offsets { channels, embed_w, embed_b, query_w, query_b, head_w, head_b };
    (b.entries, offsets, b.next)
}

/// All trainable weights in one flat vector, addressed through named
/// entries.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    config: ModelConfig,
    entries: Vec<ParamEntry>,
    offsets: Offsets,
    values: Vec<f64>,
}

impl ModelParams {
    /// Weights ~ U(−1/√fan_in, 1/√fan_in) from the config seed; biases zero.
    pub fn init(config: &ModelConfig) -> Result<Self> {
        let mut params = Self::zeros(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        for e in &params.entries {
            if e.is_bias() {
                continue;
            }
            let bound = 1.0 / (e.shape[1] as f64).sqrt();
            for v in &mut params.values[e.offset..e.offset + e.len()] {
                *v = rng.random_range(-bound..bound);
            }
        }
        Ok(params)
    }

    pub fn zeros(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let (entries, offsets, total) = layout(config);
        Ok(Self {
            config: config.clone(),
            entries,
            offsets,
            values: vec![0.0; total],
        })
    }

    /// Rebuilds parameters from a flat vector laid out for `config`.
    pub fn from_values(config: &ModelConfig, values: Vec<f64>) -> Result<Self> {
        let mut p = Self::zeros(config)?;
        if values.len() != p.values.len() {
            return Err(Error::dim("parameters", &[p.values.len()], &[values.len()]));
        }
        p.values = values;
        Ok(p)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn entries(&self) -> &[ParamEntry] {
        &self.entries
    }

    pub fn offsets(&self) -> &Offsets {
        &self.offsets
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn entry(&self, name: &str) -> Result<&ParamEntry> {
        self.entries
            .iter()
            .find(|e| e.name == name)
            .ok_or_else(|| Error::Usage(format!("no parameter named {name}")))
    }

    pub fn get(&self, name: &str) -> Result<Tensor> {
        let e = self.entry(name)?;
        Tensor::new(e.shape.clone(), self.values[e.offset..e.offset + e.len()].to_vec())
    }

    pub fn set(&mut self, name: &str, value: &Tensor) -> Result<()> {
        let e = self.entry(name)?.clone();
        if value.shape() != e.shape.as_slice() {
            return Err(Error::dim("set parameter", &e.shape, value.shape()));
        }
        self.values[e.offset..e.offset + e.len()].copy_from_slice(value.data());
        Ok(())
    }

    pub(crate) fn slice(&self, offset: usize, len: usize) -> &[f64] {
        &self.values[offset..offset + len]
    }

    pub fn gru(&self, o: &GruOffsets) -> GruParams<'_> {
        let h = self.config.hidden;
        GruParams {
            hidden: h,
            input: 1,
            w_z: self.slice(o.w_z, h),
            u_z: self.slice(o.u_z, h * h),
            b_z: self.slice(o.b_z, h),
            w_r: self.slice(o.w_r, h),
            u_r: self.slice(o.u_r, h * h),
            b_r: self.slice(o.b_r, h),
            w_c: self.slice(o.w_c, h),
            u_c: self.slice(o.u_c, h * h),
            b_c: self.slice(o.b_c, h),
        }
    }

    pub fn channel(&self, n: usize) -> ChannelParams<'_> {
        let o = &self.offsets.channels[n];
        let h = self.config.hidden;
        ChannelParams {
            forward: self.gru(&o.forward),
            backward: self.gru(&o.backward),
            key_w: self.slice(o.key_w, h * h),
            key_b: self.slice(o.key_b, h),
        }
    }
}

/// Borrowed GRU weights. `w_*` are `[hidden × input]`, `u_*` are
/// `[hidden × hidden]`, both row-major.
#[derive(Debug, Clone, Copy)]
pub struct GruParams<'a> {
    pub hidden: usize,
    pub input: usize,
    pub w_z: &'a [f64],
    pub u_z: &'a [f64],
    pub b_z: &'a [f64],
    pub w_r: &'a [f64],
    pub u_r: &'a [f64],
    pub b_r: &'a [f64],
    pub w_c: &'a [f64],
    pub u_c: &'a [f64],
    pub b_c: &'a [f64],
}

impl GruParams<'_> {
    pub fn validate(&self) -> Result<()> {
        let (h, d) = (self.hidden, self.input);
        for (w, u, b) in [(self.w_z, self.u_z, self.b_z), (self.w_r, self.u_r, self.b_r), (self.w_c, self.u_c, self.b_c)] {
            if w.len() != h * d {
                return Err(Error::dim("gru input weight", &[h, d], &[w.len()]));
            }
            if u.len() != h * h {
                return Err(Error::dim("gru recurrent weight", &[h, h], &[u.len()]));
            }
            if b.len() != h {
                return Err(Error::dim("gru bias", &[h], &[b.len()]));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ChannelParams<'a> {
    pub forward: GruParams<'a>,
    pub backward: GruParams<'a>,
    pub key_w: &'a [f64],
    pub key_b: &'a [f64],
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_is_contiguous_and_named() {
        let cfg = ModelConfig { hidden: 3, ..ModelConfig::new(2) };
        let p = ModelParams::init(&cfg).unwrap();
        let mut next = 0;
        for e in p.entries() {
            assert_eq!(e.offset, next);
            next += e.len();
        }
        assert_eq!(next, p.len());
        assert_eq!(p.entry("channel.1.backward.u_c").unwrap().shape, vec![3, 3]);
        assert_eq!(p.entry("head.weight").unwrap().shape, vec![1, 6]);
        assert_eq!(p.entry("baseline.weight").unwrap().shape, vec![3, 4]);
    }

    #[test]
    fn init_bounds_and_zero_biases() {
        let cfg = ModelConfig { hidden: 8, seed: 4, ..ModelConfig::new(3) };
        let p = ModelParams::init(&cfg).unwrap();
        for e in p.entries() {
            let vals = &p.values()[e.offset..e.offset + e.len()];
            if e.is_bias() {
                assert!(vals.iter().all(|v| *v == 0.0), "{}", e.name);
            } else {
                let bound = 1.0 / (e.shape[1] as f64).sqrt();
                assert!(vals.iter().all(|v| v.abs() <= bound), "{}", e.name);
            }
        }
        assert_eq!(p, ModelParams::init(&cfg).unwrap());
    }

    #[test]
    fn invalid_config() {
        assert!(ModelParams::init(&ModelConfig::new(0)).is_err());
        assert!(ModelParams::init(&ModelConfig { hidden: 0, ..ModelConfig::new(2) }).is_err());
    }
}
