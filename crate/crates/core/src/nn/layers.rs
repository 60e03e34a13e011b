use rand::Rng;

use super::{Bound, ParamId, ParamStore};
use crate::autodiff::{Graph, Result, Var};

/// Fully connected layer `x W + b` acting on the last axis.
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub inputs: usize,
    pub outputs: usize,
}

impl Linear {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, inputs: usize, outputs: usize, rng: &mut R) -> Self {
        Self {
            weight: store.add_uniform(format!("{name}.weight"), &[inputs, outputs], inputs, rng),
            bias: store.add_zeros(format!("{name}.bias"), &[outputs]),
            inputs,
            outputs,
        }
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<Var> {
        let y = g.matmul(x, p.get(self.weight))?;
        g.add(y, p.get(self.bias))
    }
}

/// Two-layer perceptron with a ReLU in between.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub hidden: Linear,
    pub output: Linear,
}

impl Mlp {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, inputs: usize, hidden: usize, outputs: usize, rng: &mut R) -> Self {
        Self {
            hidden: Linear::new(store, &format!("{name}.fc1"), inputs, hidden, rng),
            output: Linear::new(store, &format!("{name}.fc2"), hidden, outputs, rng),
        }
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<Var> {
        let h = self.hidden.forward(g, p, x)?;
        let h = g.relu(h);
        self.output.forward(g, p, h)
    }
}

#[derive(Debug, Clone)]
pub struct Conv {
    pub weight: ParamId,
    pub bias: ParamId,
    pub stride: usize,
    pub pad: usize,
}

impl Conv {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        rng: &mut R,
    ) -> Self {
        Self {
            weight: store.add_uniform(
                format!("{name}.weight"),
                &[out_ch, in_ch, kernel, kernel],
                in_ch * kernel * kernel,
                rng,
            ),
            bias: store.add_zeros(format!("{name}.bias"), &[out_ch]),
            stride,
            pad: kernel / 2,
        }
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<Var> {
        g.conv2d(x, p.get(self.weight), Some(p.get(self.bias)), self.stride, self.pad)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvStackConfig {
    pub in_channels: usize,
    pub hidden_channels: usize,
    pub out_features: usize,
    /// Strides of the five layers (one 5x5, then four 3x3).
    pub strides: [usize; 5],
}

/// Five convolutions, one 5x5 followed by four 3x3, with ReLU between
/// layers and a global average pool to a feature vector.
#[derive(Debug, Clone)]
pub struct ConvStack {
    pub layers: Vec<Conv>,
    pub config: ConvStackConfig,
}

impl ConvStack {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, config: ConvStackConfig, rng: &mut R) -> Self {
        let c = config.hidden_channels;
        let plan = [
            (config.in_channels, c, 5),
            (c, c, 3),
            (c, c, 3),
            (c, c, 3),
            (c, config.out_features, 3),
        ];
        let layers = plan
            .iter()
            .zip(config.strides)
            .enumerate()
            .map(|(i, (&(inp, out, k), s))| Conv::new(store, &format!("{name}.conv{}", i + 1), inp, out, k, s, rng))
            .collect();
        Self { layers, config }
    }

    /// `[B, C, H, W] -> [B, out_features]`
    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<Var> {
        let mut h = x;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(g, p, h)?;
            if i + 1 < self.layers.len() {
                h = g.relu(h);
            }
        }
        g.global_avg_pool(h)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncoderConfig {
    pub tokens: usize,
    pub dim: usize,
    pub depth: usize,
    pub heads: usize,
    pub mlp_hidden: usize,
    pub positional: bool,
}

#[derive(Debug, Clone)]
struct EncoderLayer {
    norm1_gain: ParamId,
    norm1_bias: ParamId,
    query: Linear,
    key: Linear,
    value: Linear,
    proj: Linear,
    norm2_gain: ParamId,
    norm2_bias: ParamId,
    mlp: Mlp,
}

/// Pre-norm transformer encoder with learned positional embeddings:
/// `h += MHSA(LN(h)); h += MLP(LN(h))` per layer.
#[derive(Debug, Clone)]
pub struct TransformerEncoder {
    pub config: EncoderConfig,
    pub positions: Option<ParamId>,
    layers: Vec<EncoderLayer>,
}

impl TransformerEncoder {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, config: EncoderConfig, rng: &mut R) -> Self {
        assert!(config.dim.is_multiple_of(config.heads), "dim must split evenly across heads");
        let d = config.dim;
        // small random positions break the symmetry between tokens from the start
        let positions = config
            .positional
            .then(|| store.add_uniform(format!("{name}.pos"), &[config.tokens, d], 100 * d, rng));
        let layers = (0..config.depth)
            .map(|i| {
                let n = format!("{name}.layer{i}");
                EncoderLayer {
                    norm1_gain: store.add_filled(format!("{n}.norm1.gain"), &[d], 1.0),
                    norm1_bias: store.add_zeros(format!("{n}.norm1.bias"), &[d]),
                    query: Linear::new(store, &format!("{n}.query"), d, d, rng),
                    key: Linear::new(store, &format!("{n}.key"), d, d, rng),
                    value: Linear::new(store, &format!("{n}.value"), d, d, rng),
                    proj: Linear::new(store, &format!("{n}.proj"), d, d, rng),
                    norm2_gain: store.add_filled(format!("{n}.norm2.gain"), &[d], 1.0),
                    norm2_bias: store.add_zeros(format!("{n}.norm2.bias"), &[d]),
                    mlp: Mlp::new(store, &format!("{n}.mlp"), d, config.mlp_hidden, d, rng),
                }
            })
            .collect();
        Self {
            config,
            positions,
            layers,
        }
    }

    /// Every trainable tensor inside attention and MLP blocks (not norms,
    /// not positions).
    pub fn block_params(&self) -> Vec<ParamId> {
        self.layers
            .iter()
            .flat_map(|l| {
                [&l.query, &l.key, &l.value, &l.proj, &l.mlp.hidden, &l.mlp.output]
                    .into_iter()
                    .flat_map(|lin| [lin.weight, lin.bias])
            })
            .collect()
    }

    fn norm(g: &mut Graph, p: &Bound, x: Var, gain: ParamId, bias: ParamId) -> Result<Var> {
        let n = g.layer_norm(x);
        let n = g.mul(n, p.get(gain))?;
        g.add(n, p.get(bias))
    }

    /// `[B, N, D] -> [B, N, D]`
    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<Var> {
        let mut h = match self.positions {
            Some(pos) => g.add(x, p.get(pos))?,
            None => x,
        };
        let heads = self.config.heads;
        let hd = self.config.dim / heads;
        let scale = 1.0 / (hd as f64).sqrt();
        for layer in &self.layers {
            let a = Self::norm(g, p, h, layer.norm1_gain, layer.norm1_bias)?;
            let q = layer.query.forward(g, p, a)?;
            let k = layer.key.forward(g, p, a)?;
            let v = layer.value.forward(g, p, a)?;
            let mut outs = Vec::with_capacity(heads);
            for head in 0..heads {
                let qh = g.slice_last(q, head * hd, hd)?;
                let kh = g.slice_last(k, head * hd, hd)?;
                let vh = g.slice_last(v, head * hd, hd)?;
                let scores = g.bmm(qh, kh, true)?;
                let scores = g.scale(scores, scale);
                let attn = g.softmax(scores);
                outs.push(g.bmm(attn, vh, false)?);
            }
            let merged = if heads == 1 { outs[0] } else { g.concat(&outs)? };
            let attended = layer.proj.forward(g, p, merged)?;
            h = g.add(h, attended)?;
            let m = Self::norm(g, p, h, layer.norm2_gain, layer.norm2_bias)?;
            let m = layer.mlp.forward(g, p, m)?;
            h = g.add(h, m)?;
        }
        Ok(h)
    }
}
