//! The gaze network: a gist branch predicting the scene-level term μ₀, and a
//! patch branch predicting per-region local gaze μ_j and visit weights w_j.
//! The log gaze is `g = μ₀ + Σ_j μ_j w_j`.

mod config;
pub mod gradsuite;

pub use config::{SignConfig, PATCH_SIZES};

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::autodiff::{AutodiffError, Graph, Tensor, Var};
use crate::gaze::{GazeError, WeightMap};
use crate::imaging::{make_gist_input, patchify, resize, FloatImage, Image, ImageError};
use crate::nn::{
    decode_checkpoint, encode_checkpoint, Bound, CheckpointError, ConvStack, ConvStackConfig, EncoderConfig, Mlp,
    ParamStore, TransformerEncoder,
};

pub type Result<T, E = ModelError> = std::result::Result<T, E>;

const INPUT_CENTER: f64 = 0.5;

/// Shrinks the initial output layers of the local-gaze and weight heads so
/// training starts near `g = μ₀` with weights near one half.
const HEAD_OUTPUT_SCALE: f64 = 0.1;

/// Strides of the five convolutions in both encoders.
pub const CNN_STRIDES: [usize; 5] = [2, 2, 1, 1, 2];

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("parameters do not match the config: {0}")]
    ConfigMismatch(String),
    #[error("empty batch")]
    EmptyBatch,
    #[error("empty ensemble")]
    EmptyEnsemble,
    #[error("{what}: {left} vs {right}")]
    LengthMismatch { what: &'static str, left: usize, right: usize },
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Gaze(#[from] GazeError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// An image (and optional context) preprocessed for the network: gist
/// inputs and patches, all channel-planar, with samples shifted from
/// `[0, 1]` to `[-0.5, 0.5]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SignInput {
    pub gist: Vec<f64>,
    pub context: Option<Vec<f64>>,
    pub patches: Vec<f64>,
}

impl SignInput {
    pub fn new(cfg: &SignConfig, image: &Image, context: Option<&Image>) -> Result<Self> {
        let ctx = context.map(Image::to_float);
        Self::from_float(cfg, &image.to_float(), ctx.as_ref())
    }

    /// Converts channels and resizes to the configured frame as needed.
    /// The context is dropped when the config disables it.
    pub fn from_float(cfg: &SignConfig, image: &FloatImage, context: Option<&FloatImage>) -> Result<Self> {
        cfg.validate()?;
        let image = conform(cfg, image);
        let context = context.filter(|_| cfg.context_enabled).map(|c| conform(cfg, c));
        let (gist, ctx_gist) = make_gist_input(&image, context.as_ref(), cfg.gist_size, cfg.gist_sigma);
        let grid = patchify(&image, cfg.patch_size)?;
        Ok(Self {
            gist: planar(&gist),
            context: ctx_gist.as_ref().map(planar),
            patches: grid.flatten().into_iter().map(|v| v - INPUT_CENTER).collect(),
        })
    }
}

fn conform(cfg: &SignConfig, img: &FloatImage) -> FloatImage {
    let converted = match (img.channels, cfg.channels) {
        (a, b) if a == b => img.clone(),
        (_, 1) => FloatImage {
            height: img.height,
            width: img.width,
            channels: 1,
            data: img
                .data
                .chunks(img.channels)
                .map(|px| px.iter().sum::<f64>() / px.len() as f64)
                .collect(),
        },
        _ => FloatImage {
            height: img.height,
            width: img.width,
            channels: cfg.channels,
            data: img.data.iter().flat_map(|&v| std::iter::repeat_n(v, cfg.channels)).collect(),
        },
    };
    if converted.height == cfg.image_height && converted.width == cfg.image_width {
        converted
    } else {
        resize(&converted, cfg.image_height, cfg.image_width)
    }
}

fn planar(img: &FloatImage) -> Vec<f64> {
    let hw = img.height * img.width;
    let mut out = vec![0.0; img.data.len()];
    for (i, px) in img.data.chunks(img.channels).enumerate() {
        for (c, &v) in px.iter().enumerate() {
            out[c * hw + i] = v - INPUT_CENTER;
        }
    }
    out
}

/// One image's prediction, every quantity in log-seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct SignOutput {
    pub log_gaze: f64,
    pub gist_term: f64,
    /// `Σ_j μ_j w_j`
    pub local_term: f64,
    pub local_gaze: Vec<f64>,
    pub weights: Vec<f64>,
    pub pattern: Vec<f64>,
}

/// Graph handles of a batched forward pass.
#[derive(Debug, Clone, Copy)]
pub struct BatchVars {
    /// `[B]`
    pub log_gaze: Var,
    /// `[B]`
    pub gist_term: Var,
    /// `[B]`
    pub local_term: Var,
    /// `[B, N]`
    pub local_gaze: Var,
    /// `[B, N]`
    pub weights: Var,
}

#[derive(Debug, Clone)]
pub struct SignModel {
    config: SignConfig,
    store: ParamStore,
    gist_cnn: ConvStack,
    local_cnn: ConvStack,
    gist_head: Mlp,
    local_head: Mlp,
    encoder: TransformerEncoder,
    weight_head: Mlp,
}

impl SignModel {
    /// Fresh parameters drawn from `seed`.
    pub fn new(config: SignConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let k = config.feature_dim;
        let stack = ConvStackConfig {
            in_channels: config.channels,
            hidden_channels: config.cnn_channels,
            out_features: k,
            strides: CNN_STRIDES,
        };
        let gist_cnn = ConvStack::new(&mut store, "gist_cnn", stack, &mut rng);
        let gist_head = Mlp::new(&mut store, "gist_head", 2 * k, config.head_hidden, 1, &mut rng);
        let local_cnn = ConvStack::new(&mut store, "local_cnn", stack, &mut rng);
        let local_head = Mlp::new(&mut store, "local_head", k, config.head_hidden, 1, &mut rng);
        let encoder = TransformerEncoder::new(
            &mut store,
            "encoder",
            EncoderConfig {
                tokens: config.regions(),
                dim: k,
                depth: config.depth,
                heads: config.heads,
                mlp_hidden: config.mlp_hidden,
                positional: config.positional,
            },
            &mut rng,
        );
        let weight_head = Mlp::new(&mut store, "weight_head", k, config.head_hidden, 1, &mut rng);
        for id in [local_head.output.weight, weight_head.output.weight] {
            store.get_mut(id).value.data_mut().iter_mut().for_each(|v| *v *= HEAD_OUTPUT_SCALE);
        }
        Ok(Self {
            config,
            store,
            gist_cnn,
            local_cnn,
            gist_head,
            local_head,
            encoder,
            weight_head,
        })
    }

    /// A model for `config` carrying the values in `params`.
    pub fn from_params(config: SignConfig, params: &ParamStore) -> Result<Self> {
        let mut model = Self::new(config, 0)?;
        model
            .store
            .load_values(params)
            .map_err(|e| ModelError::ConfigMismatch(e.to_string()))?;
        Ok(model)
    }

    pub fn config(&self) -> &SignConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn encoder(&self) -> &TransformerEncoder {
        &self.encoder
    }

    /// Output layers of the gist, local-gaze and weight heads.
    pub fn heads(&self) -> [&Mlp; 3] {
        [&self.gist_head, &self.local_head, &self.weight_head]
    }

    /// Sets the output bias of the gist head, e.g. to the mean training
    /// target so optimization starts at the right scale.
    pub fn set_gist_bias(&mut self, value: f64) {
        let id = self.gist_head.output.bias;
        self.store.get_mut(id).value = Tensor::new(&[1], vec![value]);
    }

    /// Names of parameter tensors grouped by branch.
    pub fn branches(&self) -> Vec<(&'static str, Vec<String>)> {
        let group = |prefixes: &[&str]| {
            self.store
                .params()
                .iter()
                .filter(|p| prefixes.iter().any(|pre| p.name.starts_with(pre)))
                .map(|p| p.name.clone())
                .collect()
        };
        vec![
            ("gist", group(&["gist_cnn.", "gist_head."])),
            ("local", group(&["local_cnn.", "local_head."])),
            ("transformer", group(&["encoder."])),
            ("weight_head", group(&["weight_head."])),
        ]
    }

    /// Builds the forward pass for a batch on `g`, reading parameters from
    /// `p` (which must be bound from a store with this model's layout).
    pub fn forward_vars(&self, g: &mut Graph, p: &Bound, inputs: &[&SignInput]) -> Result<BatchVars> {
        let b = inputs.len();
        if b == 0 {
            return Err(ModelError::EmptyBatch);
        }
        let cfg = &self.config;
        let (c, gs, ps, k, n) = (cfg.channels, cfg.gist_size, cfg.patch_size, cfg.feature_dim, cfg.regions());
        let gist_len = c * gs * gs;
        let patch_len = n * c * ps * ps;
        for input in inputs {
            if input.gist.len() != gist_len {
                return Err(ModelError::LengthMismatch { what: "gist input", left: input.gist.len(), right: gist_len });
            }
            if input.patches.len() != patch_len {
                return Err(ModelError::LengthMismatch {
                    what: "patch input",
                    left: input.patches.len(),
                    right: patch_len,
                });
            }
        }

        let gist = g.constant(Tensor::new(&[b, c, gs, gs], inputs.iter().flat_map(|i| i.gist.iter().copied()).collect()));
        let gist_feat = self.gist_cnn.forward(g, p, gist)?;
        let ctx_feat = self.context_features(g, p, inputs)?;
        let joined = g.concat(&[gist_feat, ctx_feat])?;
        let mu0 = self.gist_head.forward(g, p, joined)?;
        let mu0 = g.reshape(mu0, &[b])?;

        let patches = g.constant(Tensor::new(
            &[b * n, c, ps, ps],
            inputs.iter().flat_map(|i| i.patches.iter().copied()).collect(),
        ));
        let feats = self.local_cnn.forward(g, p, patches)?;
        let feats = g.reshape(feats, &[b, n, k])?;
        let mu = self.local_head.forward(g, p, feats)?;
        let mu = g.reshape(mu, &[b, n])?;
        let encoded = self.encoder.forward(g, p, feats)?;
        let logits = self.weight_head.forward(g, p, encoded)?;
        let w = g.sigmoid(logits);
        let w = g.reshape(w, &[b, n])?;

        let weighted = g.mul(mu, w)?;
        let local = g.sum_last(weighted);
        let total = g.add(mu0, local)?;
        Ok(BatchVars {
            log_gaze: total,
            gist_term: mu0,
            local_term: local,
            local_gaze: mu,
            weights: w,
        })
    }

    /// Context gist features, zero for samples without a context or when
    /// the config disables context.
    fn context_features(&self, g: &mut Graph, p: &Bound, inputs: &[&SignInput]) -> Result<Var> {
        let cfg = &self.config;
        let (b, k) = (inputs.len(), cfg.feature_dim);
        if !cfg.context_enabled || inputs.iter().all(|i| i.context.is_none()) {
            return Ok(g.constant(Tensor::zeros(&[b, k])));
        }
        let len = cfg.channels * cfg.gist_size * cfg.gist_size;
        let mut data = Vec::with_capacity(b * len);
        let mut mask = Vec::with_capacity(b * k);
        for input in inputs {
            match &input.context {
                Some(ctx) if ctx.len() == len => data.extend_from_slice(ctx),
                Some(ctx) => return Err(ModelError::LengthMismatch { what: "context input", left: ctx.len(), right: len }),
                None => data.extend(std::iter::repeat_n(0.0, len)),
            }
            let on = if input.context.is_some() { 1.0 } else { 0.0 };
            mask.extend(std::iter::repeat_n(on, k));
        }
        let x = g.constant(Tensor::new(&[b, cfg.channels, cfg.gist_size, cfg.gist_size], data));
        let feat = self.gist_cnn.forward(g, p, x)?;
        if mask.iter().all(|&m| m == 1.0) {
            return Ok(feat);
        }
        let mask = g.constant(Tensor::new(&[b, k], mask));
        Ok(g.mul(feat, mask)?)
    }

    pub fn forward_batch(&self, inputs: &[&SignInput]) -> Result<Vec<SignOutput>> {
        let mut g = Graph::new();
        let bound = self.store.bind(&mut g);
        let vars = self.forward_vars(&mut g, &bound, inputs)?;
        let n = self.config.regions();
        let outputs = (0..inputs.len())
            .map(|i| {
                let row = |v: Var| g.value(v).data()[i * n..(i + 1) * n].to_vec();
                let weights = row(vars.weights);
                let pattern = WeightMap::from_weights(weights.clone())?.pattern().to_vec();
                Ok(SignOutput {
                    log_gaze: g.value(vars.log_gaze).data()[i],
                    gist_term: g.value(vars.gist_term).data()[i],
                    local_term: g.value(vars.local_term).data()[i],
                    local_gaze: row(vars.local_gaze),
                    weights,
                    pattern,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(outputs)
    }

    pub fn forward(&self, input: &SignInput) -> Result<SignOutput> {
        Ok(self.forward_batch(&[input])?.remove(0))
    }

    /// Runs forward and backward on a batch, adds the parameter gradients
    /// to the store and returns the loss.
    pub fn accumulate_gradients(&mut self, inputs: &[&SignInput], targets: &[f64], lambda: f64) -> Result<f64> {
        let mut g = Graph::new();
        let bound = self.store.bind(&mut g);
        let vars = self.forward_vars(&mut g, &bound, inputs)?;
        let loss = loss_var(&mut g, &vars, targets, lambda)?;
        g.backward(loss)?;
        self.store.accumulate_grads(&g, &bound);
        Ok(g.value(loss).item())
    }

    /// Writes the checkpoint to `path` and the config next to it.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, encode_checkpoint(&self.store)).map_err(|source| ModelError::Io {
            path: path.display().to_string(),
            source,
        })?;
        self.config.save(sidecar_path(path))
    }

    /// Loads a checkpoint and its sidecar config.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let config = SignConfig::load(sidecar_path(path))?;
        Self::load_with_config(path, config)
    }

    /// Loads a checkpoint for an expected config, failing with
    /// `ConfigMismatch` if the sidecar or the tensors disagree with it.
    pub fn load_with_config(path: impl AsRef<Path>, config: SignConfig) -> Result<Self> {
        let path = path.as_ref();
        let side = sidecar_path(path);
        if side.exists() {
            let saved = SignConfig::load(&side)?;
            if !same_architecture(&saved, &config) {
                return Err(ModelError::ConfigMismatch(format!("{} differs from the requested config", side.display())));
            }
        }
        let bytes = std::fs::read(path).map_err(|source| ModelError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_params(config, &decode_checkpoint(&bytes)?)
    }
}

/// The config file stored beside a checkpoint.
pub fn sidecar_path(checkpoint: &Path) -> PathBuf {
    checkpoint.with_extension("cfg")
}

fn same_architecture(a: &SignConfig, b: &SignConfig) -> bool {
    SignConfig { lambda: 0.0, ..a.clone() } == SignConfig { lambda: 0.0, ..b.clone() }
}

/// `mean_b (g_b - t_b)^2 + λ mean_{b,j} |w_bj|` on the graph.
pub fn loss_var(g: &mut Graph, vars: &BatchVars, targets: &[f64], lambda: f64) -> Result<Var> {
    let b = g.shape(vars.log_gaze)[0];
    if targets.len() != b {
        return Err(ModelError::LengthMismatch { what: "targets", left: targets.len(), right: b });
    }
    let t = g.constant(Tensor::new(&[b], targets.to_vec()));
    let diff = g.sub(vars.log_gaze, t)?;
    let sq = g.square(diff);
    let mse = g.mean(sq);
    if lambda == 0.0 {
        return Ok(mse);
    }
    let a = g.abs(vars.weights);
    let l1 = g.mean(a);
    let penalty = g.scale(l1, lambda);
    Ok(g.add(mse, penalty)?)
}

pub fn sign_forward(model: &SignModel, image: &Image, context: Option<&Image>) -> Result<SignOutput> {
    model.forward(&SignInput::new(model.config(), image, context)?)
}

/// The training loss evaluated on finished outputs.
pub fn sign_loss(outputs: &[SignOutput], targets: &[f64], lambda: f64) -> Result<f64> {
    if outputs.is_empty() {
        return Err(ModelError::EmptyBatch);
    }
    if outputs.len() != targets.len() {
        return Err(ModelError::LengthMismatch { what: "targets", left: targets.len(), right: outputs.len() });
    }
    let mse = outputs.iter().zip(targets).map(|(o, t)| (o.log_gaze - t).powi(2)).sum::<f64>() / outputs.len() as f64;
    if lambda == 0.0 {
        return Ok(mse);
    }
    let count: usize = outputs.iter().map(|o| o.weights.len()).sum();
    let l1 = outputs.iter().flat_map(|o| o.weights.iter()).map(|w| w.abs()).sum::<f64>() / count as f64;
    Ok(mse + lambda * l1)
}

pub fn extract_pattern(output: &SignOutput) -> Result<WeightMap> {
    Ok(WeightMap::from_weights(output.weights.clone())?)
}

/// Mean predicted log gaze over the ensemble, members evaluated in parallel.
pub fn predict_log_gaze(ensemble: &[SignModel], input: &SignInput) -> Result<f64> {
    let first = ensemble.first().ok_or(ModelError::EmptyEnsemble)?;
    if let Some(odd) = ensemble.iter().find(|m| !same_architecture(m.config(), first.config())) {
        return Err(ModelError::ConfigMismatch(format!(
            "ensemble mixes configs:\n{}vs\n{}",
            first.config().to_kv(),
            odd.config().to_kv()
        )));
    }
    let logs = ensemble
        .par_iter()
        .map(|m| m.forward(input).map(|o| o.log_gaze))
        .collect::<Result<Vec<_>>>()?;
    Ok(logs.iter().sum::<f64>() / logs.len() as f64)
}

/// Averages log gaze over the ensemble, then exponentiates; in seconds this
/// is the geometric mean of the members' predictions.
pub fn predict_gaze_seconds(ensemble: &[SignModel], image: &Image, context: Option<&Image>) -> Result<f64> {
    let first = ensemble.first().ok_or(ModelError::EmptyEnsemble)?;
    let input = SignInput::new(first.config(), image, context)?;
    Ok(predict_log_gaze(ensemble, &input)?.exp())
}
