use rand::Rng;
use rand_distr::{Distribution, Normal};
use sha2::{Digest, Sha256};

use super::{ModelConfig, CHANNELS};
use crate::error::{invalid, Result};
use crate::nn::Real;
use crate::seed;

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Init {
    Xavier { fan_in: usize, fan_out: usize },
    Normal(f64),
    Zeros,
    Ones,
}

#[derive(Clone, Debug, PartialEq)]
struct Spec {
    name: String,
    shape: Vec<usize>,
    init: Init,
}

/// Indices of one attention layer's tensors.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AttnIdx {
    pub wq: usize,
    pub bq: usize,
    pub wk: usize,
    pub bk: usize,
    pub wv: usize,
    pub bv: usize,
    pub wo: usize,
    pub bo: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlockIdx {
    pub ln_t: (usize, usize),
    pub attn_t: AttnIdx,
    pub ln_s: (usize, usize),
    pub attn_s: AttnIdx,
    pub ln_f: (usize, usize),
    pub ff1: (usize, usize),
    pub ff2: (usize, usize),
}

/// Fixed order of all parameter tensors. This order is also the on-disk
/// order in checkpoints.
#[derive(Clone, Debug, PartialEq)]
pub struct Layout {
    specs: Vec<Spec>,
    pub patch: (usize, usize),
    pub pos_spatial: usize,
    pub pos_temporal: usize,
    pub cls: usize,
    pub blocks: Vec<BlockIdx>,
    pub ln_out: (usize, usize),
    pub convs: Vec<(usize, usize)>,
    pub mg_norm: (usize, usize),
    pub mg_fc1: (usize, usize),
    pub mg_fc2: (usize, usize),
    pub fuse: (usize, usize),
}

struct Builder {
    specs: Vec<Spec>,
}

impl Builder {
    fn push(&mut self, name: String, shape: Vec<usize>, init: Init) -> usize {
        self.specs.push(Spec { name, shape, init });
        self.specs.len() - 1
    }

    fn linear(&mut self, name: &str, dout: usize, din: usize) -> (usize, usize) {
        let w = self.push(format!("{name}.weight"), vec![dout, din], Init::Xavier { fan_in: din, fan_out: dout });
        let b = self.push(format!("{name}.bias"), vec![dout], Init::Zeros);
        (w, b)
    }

    fn norm(&mut self, name: &str, d: usize) -> (usize, usize) {
        let g = self.push(format!("{name}.scale"), vec![d], Init::Ones);
        let b = self.push(format!("{name}.offset"), vec![d], Init::Zeros);
        (g, b)
    }

    fn attn(&mut self, name: &str, d: usize) -> AttnIdx {
        let (wq, bq) = self.linear(&format!("{name}.q"), d, d);
        let (wk, bk) = self.linear(&format!("{name}.k"), d, d);
        let (wv, bv) = self.linear(&format!("{name}.v"), d, d);
        let (wo, bo) = self.linear(&format!("{name}.o"), d, d);
        AttnIdx { wq, bq, wk, bk, wv, bv, wo, bo }
    }
}

impl Layout {
    pub fn new(cfg: &ModelConfig) -> Self {
        let d = cfg.embed_dim;
        let mut b = Builder { specs: Vec::new() };
        let patch = b.linear("st.patch", d, CHANNELS * cfg.patch * cfg.patch);
        let pos_spatial = b.push("st.pos_spatial".into(), vec![cfg.patches(), d], Init::Normal(0.02));
        let pos_temporal = b.push("st.pos_temporal".into(), vec![cfg.frames, d], Init::Normal(0.02));
        let cls = b.push("st.cls".into(), vec![d], Init::Normal(0.02));
        let blocks = (0..cfg.st_blocks)
            .map(|i| BlockIdx {
                ln_t: b.norm(&format!("st.block{i}.norm_t"), d),
                attn_t: b.attn(&format!("st.block{i}.attn_t"), d),
                ln_s: b.norm(&format!("st.block{i}.norm_s"), d),
                attn_s: b.attn(&format!("st.block{i}.attn_s"), d),
                ln_f: b.norm(&format!("st.block{i}.norm_f"), d),
                ff1: b.linear(&format!("st.block{i}.ff1"), 4 * d, d),
                ff2: b.linear(&format!("st.block{i}.ff2"), d, 4 * d),
            })
            .collect();
        let ln_out = b.norm("st.norm_out", d);
        let mut cin = CHANNELS;
        let convs = cfg
            .mg_channels
            .iter()
            .enumerate()
            .map(|(i, &cout)| {
                let idx = b.linear(&format!("mg.conv{i}"), cout, 9 * cin);
                cin = cout;
                idx
            })
            .collect();
        let mg_norm = b.norm("mg.pool_norm", d);
        let mg_fc1 = b.linear("mg.fc1", cfg.mlp_hidden, cfg.frames * d);
        let mg_fc2 = b.linear("mg.fc2", d, cfg.mlp_hidden);
        let fuse = b.linear("fuse", 1, 2 * d);
        Layout {
            specs: b.specs,
            patch,
            pos_spatial,
            pos_temporal,
            cls,
            blocks,
            ln_out,
            convs,
            mg_norm,
            mg_fc1,
            mg_fc2,
            fuse,
        }
    }

    pub fn len(&self) -> usize {
        self.specs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.specs.is_empty()
    }

    pub fn name(&self, i: usize) -> &str {
        &self.specs[i].name
    }

    pub fn shape(&self, i: usize) -> &[usize] {
        &self.specs[i].shape
    }

    /// Indices of the normalization scale tensors.
    pub fn norm_scales(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.blocks.iter().flat_map(|b| [b.ln_t.0, b.ln_s.0, b.ln_f.0]).collect();
        v.push(self.ln_out.0);
        v.push(self.mg_norm.0);
        v
    }

    /// Whether tensor `i` belongs to the spatio-temporal branch.
    pub fn is_st(&self, i: usize) -> bool {
        self.specs[i].name.starts_with("st.")
    }

    pub fn is_mg(&self, i: usize) -> bool {
        self.specs[i].name.starts_with("mg.")
    }
}

/// All learnable tensors of the detector in [`Layout`] order.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T = f32> {
    pub config: ModelConfig,
    pub layout: Layout,
    pub tensors: Vec<Tensor<T>>,
}

impl<T: Real> ModelParams<T> {
    pub fn zeros(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(config);
        let tensors = layout
            .specs
            .iter()
            .map(|s| Tensor { shape: s.shape.clone(), data: vec![T::zero(); s.shape.iter().product()] })
            .collect();
        Ok(Self { config: config.clone(), layout, tensors })
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            config: self.config.clone(),
            layout: self.layout.clone(),
            tensors: self
                .tensors
                .iter()
                .map(|t| Tensor { shape: t.shape.clone(), data: vec![T::zero(); t.data.len()] })
                .collect(),
        }
    }

    /// Replace tensor data from flat vectors, checking every length.
    pub fn from_tensors(config: &ModelConfig, data: Vec<Vec<T>>) -> Result<Self> {
        let mut p = Self::zeros(config)?;
        if data.len() != p.tensors.len() {
            return invalid(format!("expected {} tensors, got {}", p.tensors.len(), data.len()));
        }
        for (i, (t, d)) in p.tensors.iter_mut().zip(data).enumerate() {
            if t.data.len() != d.len() {
                return invalid(format!(
                    "tensor {} has {} values, expected {}",
                    p.layout.name(i),
                    d.len(),
                    t.data.len()
                ));
            }
            t.data = d;
        }
        Ok(p)
    }

    #[inline]
    pub fn t(&self, i: usize) -> &[T] {
        &self.tensors[i].data
    }

    #[inline]
    pub fn t_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.tensors[i].data
    }

    pub fn num_params(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            crate::nn::add_into(&mut a.data, &b.data);
        }
    }

    pub fn scale(&mut self, s: T) {
        for t in &mut self.tensors {
            for v in &mut t.data {
                *v *= s;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.data.iter().all(|v| v.is_finite()))
    }

    pub fn cast<U: Real>(&self) -> ModelParams<U> {
        ModelParams {
            config: self.config.clone(),
            layout: self.layout.clone(),
            tensors: self
                .tensors
                .iter()
                .map(|t| Tensor {
                    shape: t.shape.clone(),
                    data: t.data.iter().map(|v| U::from_f64(v.to_f64().unwrap_or(f64::NAN)).unwrap()).collect(),
                })
                .collect(),
        }
    }
}

impl ModelParams<f32> {
    /// SHA-256 over the little-endian bytes of every tensor, hex encoded.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for t in &self.tensors {
            for v in &t.data {
                h.update(v.to_le_bytes());
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Deterministic initialization: Xavier-uniform weights, zero biases and
/// offsets, unit normalization scales, `N(0, 0.02)` embeddings.
pub fn init_params(config: &ModelConfig, seed: u64) -> Result<ModelParams<f32>> {
    let mut p = ModelParams::<f32>::zeros(config)?;
    let mut rng = seed::rng(seed, &[0x1A17]);
    for (spec, t) in p.layout.specs.iter().zip(p.tensors.iter_mut()) {
        match spec.init {
            Init::Xavier { fan_in, fan_out } => {
                let a = (6.0 / (fan_in + fan_out) as f64).sqrt() as f32;
                for v in &mut t.data {
                    *v = rng.random_range(-a..=a);
                }
            }
            Init::Normal(std) => {
                let n = Normal::new(0.0, std as f32).expect("valid std");
                for v in &mut t.data {
                    *v = n.sample(&mut rng);
                }
            }
            Init::Ones => t.data.fill(1.0),
            Init::Zeros => t.data.fill(0.0),
        }
    }
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_deterministic() {
        let cfg = ModelConfig::default();
        let a = init_params(&cfg, 3).unwrap();
        assert_eq!(a, init_params(&cfg, 3).unwrap());
        assert_ne!(a.tensors, init_params(&cfg, 4).unwrap().tensors);
        for i in a.layout.norm_scales() {
            assert!(a.t(i).iter().all(|&v| v == 1.0));
        }
        let bound = (6.0f32 / (64.0 + 192.0)).sqrt();
        assert!(a.t(a.layout.patch.0).iter().all(|v| v.abs() <= bound));
        assert!(a.t(a.layout.patch.1).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn layout_names_are_unique() {
        let l = Layout::new(&ModelConfig::default());
        let mut names: Vec<&str> = (0..l.len()).map(|i| l.name(i)).collect();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), l.len());
    }

    #[test]
    fn from_tensors_checks_lengths() {
        let cfg = ModelConfig::default();
        let p = init_params(&cfg, 1).unwrap();
        let data: Vec<Vec<f32>> = p.tensors.iter().map(|t| t.data.clone()).collect();
        assert_eq!(ModelParams::from_tensors(&cfg, data.clone()).unwrap(), p);
        let mut short = data;
        short[0].pop();
        assert!(ModelParams::<f32>::from_tensors(&cfg, short).is_err());
    }
}
