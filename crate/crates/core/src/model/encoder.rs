use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ctc::EmissionLattice;
use crate::data::FeatureSequence;
use crate::numerics::{Array, ConvGeometry, Graph, NodeId};

use super::{EncoderConfig, ModelError};

/// Frontend convolution width in the normal mode.
const FRONTEND_KERNEL: usize = 5;

enum Init {
    /// Uniform in `±1/sqrt(fan_in)`.
    Uniform { fan_in: usize },
    Zeros,
    Ones,
}

/// Named parameter blocks. Names and order are a pure function of the config.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderState {
    config: EncoderConfig,
    names: Vec<String>,
    values: Vec<Array>,
}

/// Parameters registered on a graph, in [`EncoderState`] order.
#[derive(Clone, Debug)]
pub struct BoundParams {
    pub ids: Vec<NodeId>,
    index: HashMap<String, usize>,
}

impl BoundParams {
    fn get(&self, name: &str) -> NodeId {
        self.ids[*self.index.get(name).unwrap_or_else(|| panic!("no parameter {name}"))]
    }
}

fn frontend_geometry(cfg: &EncoderConfig, layer: usize, t_in: usize) -> ConvGeometry {
    let in_ch = if layer == 0 { cfg.feature_dim } else { cfg.hidden_dim };
    if cfg.context_free_mode {
        ConvGeometry {
            in_ch,
            out_ch: cfg.hidden_dim,
            kernel: 2,
            stride: 2,
            pad_left: 0,
            pad_right: t_in % 2,
            groups: 1,
        }
    } else {
        ConvGeometry {
            in_ch,
            out_ch: cfg.hidden_dim,
            kernel: FRONTEND_KERNEL,
            stride: 2,
            pad_left: FRONTEND_KERNEL / 2,
            pad_right: FRONTEND_KERNEL / 2,
            groups: 1,
        }
    }
}

fn projection_geometry(cfg: &EncoderConfig) -> ConvGeometry {
    ConvGeometry {
        in_ch: cfg.feature_dim,
        out_ch: cfg.hidden_dim,
        kernel: 1,
        stride: 1,
        pad_left: 0,
        pad_right: 0,
        groups: 1,
    }
}

fn positional_geometry(cfg: &EncoderConfig) -> ConvGeometry {
    let k = cfg.positional_kernel;
    ConvGeometry {
        in_ch: cfg.hidden_dim,
        out_ch: cfg.hidden_dim,
        kernel: k,
        stride: 1,
        pad_left: k / 2,
        pad_right: k - 1 - k / 2,
        groups: cfg.positional_groups,
    }
}

fn layout(cfg: &EncoderConfig) -> Vec<(String, Vec<usize>, Init)> {
    let h = cfg.hidden_dim;
    let ffn = cfg.ffn_multiplier * h;
    let mut out = Vec::new();
    let conv = |out: &mut Vec<_>, name: &str, geo: ConvGeometry| {
        let fan_in = geo.kernel * geo.in_per_group();
        out.push((format!("{name}.weight"), vec![geo.out_ch, fan_in], Init::Uniform { fan_in }));
        out.push((format!("{name}.bias"), vec![geo.out_ch], Init::Zeros));
    };
    if cfg.frontend_layers() == 0 {
        conv(&mut out, "frontend.proj", projection_geometry(cfg));
    }
    for l in 0..cfg.frontend_layers() {
        conv(&mut out, &format!("frontend.{l}"), frontend_geometry(cfg, l, 0));
    }
    if !cfg.context_free_mode {
        conv(&mut out, "positional", positional_geometry(cfg));
    }
    let linear = |out: &mut Vec<_>, name: String, i: usize, o: usize| {
        out.push((format!("{name}.weight"), vec![i, o], Init::Uniform { fan_in: i }));
        out.push((format!("{name}.bias"), vec![o], Init::Zeros));
    };
    let norm = |out: &mut Vec<_>, name: String| {
        out.push((format!("{name}.gain"), vec![h], Init::Ones));
        out.push((format!("{name}.bias"), vec![h], Init::Zeros));
    };
    for b in 0..cfg.layers {
        if !cfg.context_free_mode {
            norm(&mut out, format!("block.{b}.attn_norm"));
            linear(&mut out, format!("block.{b}.qkv"), h, 3 * h);
            linear(&mut out, format!("block.{b}.attn_out"), h, h);
        }
        norm(&mut out, format!("block.{b}.ffn_norm"));
        linear(&mut out, format!("block.{b}.ffn_in"), h, ffn);
        linear(&mut out, format!("block.{b}.ffn_out"), ffn, h);
    }
    norm(&mut out, "final_norm".into());
    linear(&mut out, "head".into(), h, cfg.vocab_size + 1);
    out
}

impl EncoderState {
    pub fn new(config: EncoderConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut names = Vec::new();
        let mut values = Vec::new();
        for (name, shape, init) in layout(&config) {
            let n: usize = shape.iter().product();
            let data = match init {
                Init::Uniform { fan_in } => {
                    let a = 1.0 / (fan_in as f64).sqrt();
                    (0..n).map(|_| rng.gen_range(-a..a)).collect()
                }
                Init::Zeros => vec![0.0; n],
                Init::Ones => vec![1.0; n],
            };
            names.push(name);
            values.push(Array::new(shape, data)?);
        }
        Ok(Self { config, names, values })
    }

    /// Rebuilds a state from named blocks, checking names and shapes against
    /// the layout implied by `config`.
    pub fn from_blocks(config: EncoderConfig, blocks: Vec<(String, Array)>) -> Result<Self, ModelError> {
        config.validate()?;
        let expected = layout(&config);
        if expected.len() != blocks.len() {
            return Err(ModelError::Format(format!(
                "expected {} parameter blocks, found {}",
                expected.len(),
                blocks.len()
            )));
        }
        for ((name, shape, _), (got_name, arr)) in expected.iter().zip(&blocks) {
            if name != got_name || shape.as_slice() != arr.shape() {
                return Err(ModelError::Format(format!(
                    "block {got_name} {:?} does not match {name} {shape:?}",
                    arr.shape()
                )));
            }
        }
        let (names, values) = blocks.into_iter().unzip();
        Ok(Self { config, names, values })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &[Array] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Array] {
        &mut self.values
    }

    pub fn blocks(&self) -> impl Iterator<Item = (&str, &Array)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }

    pub fn parameter_count(&self) -> usize {
        self.values.iter().map(Array::len).sum()
    }

    /// Registers every block on `g`, as trainable leaves or as constants.
    pub fn bind(&self, g: &mut Graph, trainable: bool) -> BoundParams {
        let ids = self
            .values
            .iter()
            .map(|v| if trainable { g.param(v.clone()) } else { g.constant(v.clone()) })
            .collect();
        let index = self.names.iter().cloned().enumerate().map(|(i, n)| (n, i)).collect();
        BoundParams { ids, index }
    }

    fn check_input(&self, frames: usize, dim: usize) -> Result<(), ModelError> {
        if dim != self.config.feature_dim {
            return Err(ModelError::FeatureDim {
                expected: self.config.feature_dim,
                got: dim,
            });
        }
        if frames == 0 {
            return Err(ModelError::Empty);
        }
        Ok(())
    }

    fn conv(g: &mut Graph, p: &BoundParams, name: &str, x: NodeId, geo: ConvGeometry) -> Result<NodeId, ModelError> {
        let w = p.get(&format!("{name}.weight"));
        let b = p.get(&format!("{name}.bias"));
        Ok(g.conv1d(x, w, b, geo)?)
    }

    fn linear(g: &mut Graph, p: &BoundParams, name: &str, x: NodeId) -> Result<NodeId, ModelError> {
        let y = g.matmul(x, p.get(&format!("{name}.weight")))?;
        Ok(g.add_bias(y, p.get(&format!("{name}.bias")))?)
    }

    fn norm(g: &mut Graph, p: &BoundParams, name: &str, x: NodeId) -> Result<NodeId, ModelError> {
        Ok(g.layer_norm(x, p.get(&format!("{name}.gain")), p.get(&format!("{name}.bias")))?)
    }

    /// Strided frontend: `[T × F]` to `[T′ × H]`.
    pub fn subsample_node(&self, g: &mut Graph, p: &BoundParams, x: NodeId) -> Result<NodeId, ModelError> {
        let cfg = &self.config;
        let (t, f) = (g.value(x).rows(), g.value(x).cols());
        self.check_input(t, f)?;
        let mut h = x;
        if cfg.frontend_layers() == 0 {
            h = Self::conv(g, p, "frontend.proj", h, projection_geometry(cfg))?;
            return Ok(g.gelu(h));
        }
        for l in 0..cfg.frontend_layers() {
            let geo = frontend_geometry(cfg, l, g.value(h).rows());
            h = Self::conv(g, p, &format!("frontend.{l}"), h, geo)?;
            h = g.gelu(h);
        }
        Ok(h)
    }

    /// Emission logits `[T′ × (V+1)]` for a `[T × F]` input node.
    pub fn logits_node(&self, g: &mut Graph, p: &BoundParams, x: NodeId) -> Result<NodeId, ModelError> {
        let cfg = &self.config;
        let mut h = self.subsample_node(g, p, x)?;
        if !cfg.context_free_mode {
            let pos = Self::conv(g, p, "positional", h, positional_geometry(cfg))?;
            let pos = g.gelu(pos);
            h = g.add(h, pos)?;
        }
        let dh = cfg.hidden_dim / cfg.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        for b in 0..cfg.layers {
            if !cfg.context_free_mode {
                let n = Self::norm(g, p, &format!("block.{b}.attn_norm"), h)?;
                let qkv = Self::linear(g, p, &format!("block.{b}.qkv"), n)?;
                let mut heads = Vec::with_capacity(cfg.heads);
                for k in 0..cfg.heads {
                    let q = g.slice_cols(qkv, k * dh, (k + 1) * dh)?;
                    let key = g.slice_cols(qkv, cfg.hidden_dim + k * dh, cfg.hidden_dim + (k + 1) * dh)?;
                    let v = g.slice_cols(qkv, 2 * cfg.hidden_dim + k * dh, 2 * cfg.hidden_dim + (k + 1) * dh)?;
                    let kt = g.transpose(key)?;
                    let scores = g.matmul(q, kt)?;
                    let scores = g.scale(scores, scale);
                    let attn = g.softmax(scores)?;
                    heads.push(g.matmul(attn, v)?);
                }
                let ctx = if heads.len() == 1 { heads[0] } else { g.concat_cols(&heads)? };
                let out = Self::linear(g, p, &format!("block.{b}.attn_out"), ctx)?;
                h = g.add(h, out)?;
            }
            let n = Self::norm(g, p, &format!("block.{b}.ffn_norm"), h)?;
            let f = Self::linear(g, p, &format!("block.{b}.ffn_in"), n)?;
            let f = g.gelu(f);
            let f = Self::linear(g, p, &format!("block.{b}.ffn_out"), f)?;
            h = g.add(h, f)?;
        }
        let n = Self::norm(g, p, "final_norm", h)?;
        Self::linear(g, p, "head", n)
    }

    /// Subsampled hidden frames `[T′ × H]`.
    pub fn subsample(&self, features: &FeatureSequence) -> Result<Array, ModelError> {
        let mut g = Graph::new();
        let p = self.bind(&mut g, false);
        let x = g.constant(features.array().clone());
        let h = self.subsample_node(&mut g, &p, x)?;
        Ok(g.value(h).clone())
    }

    /// Emission logits for a whole feature sequence.
    pub fn logits(&self, features: &FeatureSequence) -> Result<Array, ModelError> {
        let mut g = Graph::new();
        let p = self.bind(&mut g, false);
        let x = g.constant(features.array().clone());
        let y = self.logits_node(&mut g, &p, x)?;
        Ok(g.value(y).clone())
    }

    /// Normalized emission lattice over the whole sequence.
    pub fn encode(&self, features: &FeatureSequence) -> Result<EmissionLattice, ModelError> {
        let logits = self.logits(features)?;
        Ok(EmissionLattice::from_logits(
            logits.rows(),
            self.config.vocab_size,
            logits.data(),
        )?)
    }
}
