//! Finite-difference checks of every primitive, every layer and the
//! assembled network loss.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{loss_var, Result, SignConfig, SignInput, SignModel};
use crate::autodiff::{check_gradients, AutodiffError, GradCheck, Graph, Tensor, Var};
use crate::nn::{Bound, ConvStack, ConvStackConfig, EncoderConfig, Linear, Mlp, ParamStore, TransformerEncoder};

pub const GRAD_STEP: f64 = 1e-5;
pub const GRAD_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCase {
    pub name: String,
    pub report: GradCheck,
}

impl GradCase {
    pub fn passes(&self) -> bool {
        self.report.passes(GRAD_TOLERANCE) && self.report.checked > 0
    }
}

type Check = std::result::Result<GradCheck, AutodiffError>;

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
}

/// Reduces any output to a scalar through fixed random weights, so every
/// output element carries a distinct gradient.
fn project(g: &mut Graph, y: Var, seed: u64) -> std::result::Result<Var, AutodiffError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let w = g.constant(random(g.shape(y), &mut rng));
    let prod = g.mul(y, w)?;
    Ok(g.mean(prod))
}

fn unary(x: Tensor, seed: u64, op: impl Fn(&mut Graph, Var) -> std::result::Result<Var, AutodiffError>) -> Check {
    check_gradients(
        &[x],
        |g, v| {
            let y = op(g, v[0])?;
            project(g, y, seed)
        },
        GRAD_STEP,
        None,
    )
}

fn binary(a: Tensor, b: Tensor, seed: u64, op: impl Fn(&mut Graph, Var, Var) -> std::result::Result<Var, AutodiffError>) -> Check {
    check_gradients(
        &[a, b],
        |g, v| {
            let y = op(g, v[0], v[1])?;
            project(g, y, seed)
        },
        GRAD_STEP,
        None,
    )
}

/// Checks a layer with respect to its input and every parameter in `store`.
fn layer(
    store: &ParamStore,
    input: Tensor,
    seed: u64,
    forward: impl Fn(&mut Graph, &Bound, Var) -> std::result::Result<Var, AutodiffError>,
) -> Check {
    let mut inputs = vec![input];
    inputs.extend(store.params().iter().map(|p| p.value.clone()));
    check_gradients(
        &inputs,
        |g, v| {
            let bound = Bound::from_vars(v[1..].to_vec());
            let y = forward(g, &bound, v[0])?;
            project(g, y, seed)
        },
        GRAD_STEP,
        None,
    )
}

/// Moves biases off zero so ReLU pre-activations stay clear of the kink.
fn offset_biases(store: &mut ParamStore, rng: &mut ChaCha8Rng) {
    for p in store.params_mut() {
        if p.name.ends_with(".bias") {
            p.value.data_mut().iter_mut().for_each(|v| *v = rng.random_range(0.05..0.2));
        }
    }
}

/// The small network the assembled check runs on.
pub fn gradcheck_config() -> SignConfig {
    SignConfig {
        image_height: 16,
        image_width: 16,
        channels: 1,
        patch_size: 8,
        feature_dim: 4,
        cnn_channels: 2,
        gist_size: 8,
        gist_sigma: 1.0,
        depth: 1,
        heads: 2,
        mlp_hidden: 6,
        head_hidden: 4,
        positional: true,
        context_enabled: true,
        lambda: 0.01,
    }
}

/// Loss gradient of the full network with respect to all of its parameters,
/// on a batch of two images (one with a context, one without).
pub fn check_network(seed: u64) -> Result<GradCheck> {
    let cfg = gradcheck_config();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = SignModel::new(cfg.clone(), seed)?;
    offset_biases(model.params_mut(), &mut rng);
    let image = |rng: &mut ChaCha8Rng| {
        crate::imaging::FloatImage::new(16, 16, 1, (0..256).map(|_| rng.random_range(0.0..1.0)).collect())
            .expect("16x16 gray")
    };
    let (a, ctx, b) = (image(&mut rng), image(&mut rng), image(&mut rng));
    let inputs = [
        SignInput::from_float(&cfg, &a, Some(&ctx))?,
        SignInput::from_float(&cfg, &b, None)?,
    ];
    let refs: Vec<&SignInput> = inputs.iter().collect();
    let targets = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
    let params: Vec<Tensor> = model.params().params().iter().map(|p| p.value.clone()).collect();
    check_gradients(
        &params,
        |g, v| {
            let bound = Bound::from_vars(v.to_vec());
            let vars = model.forward_vars(g, &bound, &refs)?;
            loss_var(g, &vars, &targets, cfg.lambda)
        },
        GRAD_STEP,
        None,
    )
}

/// Runs every case for one seed.
pub fn run_gradient_suite(seed: u64) -> Result<Vec<GradCase>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cases: Vec<(String, GradCheck)> = Vec::new();
    let mut push = |name: &str, r: Check| -> Result<()> {
        cases.push((name.to_string(), r?));
        Ok(())
    };

    let a = random(&[2, 3, 4], &mut rng);
    push("matmul", binary(a.clone(), random(&[4, 5], &mut rng), seed, |g, x, y| g.matmul(x, y)))?;
    push("bmm", binary(a.clone(), random(&[2, 4, 3], &mut rng), seed, |g, x, y| g.bmm(x, y, false)))?;
    push("bmm_transposed", binary(a.clone(), random(&[2, 5, 4], &mut rng), seed, |g, x, y| g.bmm(x, y, true)))?;
    let img = random(&[2, 2, 6, 5], &mut rng);
    for (k, stride, pad) in [(3, 1, 1), (3, 2, 1), (5, 2, 2), (3, 1, 0)] {
        let w = random(&[3, 2, k, k], &mut rng);
        let bias = random(&[3], &mut rng);
        let r = check_gradients(
            &[img.clone(), w, bias],
            |g, v| {
                let y = g.conv2d(v[0], v[1], Some(v[2]), stride, pad)?;
                project(g, y, seed)
            },
            GRAD_STEP,
            None,
        );
        push(&format!("conv2d_{k}x{k}_s{stride}_p{pad}"), r)?;
    }
    let m = random(&[3, 4], &mut rng);
    let row = random(&[4], &mut rng);
    push("add", binary(m.clone(), row.clone(), seed, |g, x, y| g.add(x, y)))?;
    push("mul", binary(m.clone(), row, seed, |g, x, y| g.mul(x, y)))?;
    push("sub", binary(m.clone(), random(&[3, 4], &mut rng), seed, |g, x, y| g.sub(x, y)))?;
    push("scale", unary(m.clone(), seed, |g, x| Ok(g.scale(x, -1.7))))?;
    push("relu", unary(m.clone(), seed, |g, x| Ok(g.relu(x))))?;
    push("sigmoid", unary(m.clone(), seed, |g, x| Ok(g.sigmoid(x))))?;
    push("abs", unary(m.clone(), seed, |g, x| Ok(g.abs(x))))?;
    push("square", unary(m.clone(), seed, |g, x| Ok(g.square(x))))?;
    push("softmax", unary(a.clone(), seed, |g, x| Ok(g.softmax(x))))?;
    push("layer_norm", unary(a.clone(), seed, |g, x| Ok(g.layer_norm(x))))?;
    push("mean", unary(a.clone(), seed, |g, x| Ok(g.mean(x))))?;
    push("sum_last", unary(a.clone(), seed, |g, x| Ok(g.sum_last(x))))?;
    push("concat", binary(a.clone(), random(&[2, 3, 2], &mut rng), seed, |g, x, y| g.concat(&[x, y])))?;
    push(
        "slice_reshape",
        unary(a.clone(), seed, |g, x| {
            let s = g.slice_last(x, 1, 2)?;
            g.reshape(s, &[12])
        }),
    )?;
    push("global_avg_pool", unary(img.clone(), seed, |g, x| g.global_avg_pool(x)))?;

    let mut store = ParamStore::new();
    let lin = Linear::new(&mut store, "linear", 4, 3, &mut rng);
    push("linear", layer(&store, a.clone(), seed, |g, p, x| lin.forward(g, p, x)))?;

    let mut store = ParamStore::new();
    let mlp = Mlp::new(&mut store, "mlp", 4, 6, 2, &mut rng);
    offset_biases(&mut store, &mut rng);
    push("mlp", layer(&store, a.clone(), seed, |g, p, x| mlp.forward(g, p, x)))?;

    let mut store = ParamStore::new();
    let cnn = ConvStack::new(
        &mut store,
        "conv_stack",
        ConvStackConfig {
            in_channels: 1,
            hidden_channels: 3,
            out_features: 4,
            strides: super::CNN_STRIDES,
        },
        &mut rng,
    );
    offset_biases(&mut store, &mut rng);
    let patches = random(&[2, 1, 8, 8], &mut rng);
    push("conv_stack", layer(&store, patches, seed, |g, p, x| cnn.forward(g, p, x)))?;

    let mut store = ParamStore::new();
    let enc = TransformerEncoder::new(
        &mut store,
        "encoder",
        EncoderConfig {
            tokens: 3,
            dim: 4,
            depth: 2,
            heads: 2,
            mlp_hidden: 6,
            positional: true,
        },
        &mut rng,
    );
    offset_biases(&mut store, &mut rng);
    push("transformer_encoder", layer(&store, a.clone(), seed, |g, p, x| enc.forward(g, p, x)))?;

    let mut cases: Vec<GradCase> = cases.into_iter().map(|(name, report)| GradCase { name, report }).collect();
    cases.push(GradCase {
        name: "sign_loss".into(),
        report: check_network(seed)?,
    });
    Ok(cases)
}
