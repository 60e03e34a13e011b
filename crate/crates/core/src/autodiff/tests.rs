use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

const STEP: f64 = 1e-5;
const TOL: f64 = 1e-4;

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
}

/// Projects an arbitrary tensor onto a scalar with fixed random weights, so
/// every output element contributes a distinct gradient.
fn project(g: &mut Graph, x: Var, seed: u64) -> Result<Var> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37);
    let w = random(g.shape(x), &mut rng);
    let w = g.constant(w);
    let prod = g.mul(x, w)?;
    Ok(g.mean(prod))
}

fn assert_grad<F>(inputs: &[Tensor], f: F)
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let report = check_gradients(inputs, f, STEP, None).unwrap();
    assert!(report.passes(TOL), "{report:?}");
    assert!(report.checked > 0);
}

#[test]
fn primitive_values() {
    let mut g = Graph::new();
    let x = g.constant(Tensor::scalar(0.0));
    let s = g.sigmoid(x);
    assert_eq!(g.value(s).item(), 0.5);

    let z = g.constant(Tensor::zeros(&[1, 3]));
    let sm = g.softmax(z);
    for v in g.value(sm).data() {
        assert!((v - 1.0 / 3.0).abs() < 1e-15);
    }
}

#[test]
fn identity_kernel_conv_is_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = random(&[2, 3, 5, 7], &mut rng);
    let mut w = Tensor::zeros(&[3, 3, 3, 3]);
    for c in 0..3 {
        w.data_mut()[((c * 3 + c) * 3 + 1) * 3 + 1] = 1.0;
    }
    let mut g = Graph::new();
    let xv = g.constant(x.clone());
    let wv = g.constant(w);
    let y = g.conv2d(xv, wv, None, 1, 1).unwrap();
    assert_eq!(g.value(y), &x);
}

#[test]
fn backward_on_square_and_sigmoid() {
    let mut g = Graph::new();
    let x = g.variable(Tensor::scalar(3.0));
    let y = g.mul(x, x).unwrap();
    g.backward(y).unwrap();
    assert_eq!(g.grad(x).unwrap().item(), 6.0);

    let mut g = Graph::new();
    let x = g.variable(Tensor::scalar(0.0));
    let y = g.sigmoid(x);
    g.backward(y).unwrap();
    assert_eq!(g.grad(x).unwrap().item(), 0.25);
}

#[test]
fn backward_accumulates_until_zeroed() {
    let mut g = Graph::new();
    let x = g.variable(Tensor::scalar(2.0));
    let y = g.square(x);
    g.backward(y).unwrap();
    g.backward(y).unwrap();
    assert_eq!(g.grad(x).unwrap().item(), 8.0);
    g.zero_grads();
    assert!(g.grad(x).is_none());
    g.backward(y).unwrap();
    assert_eq!(g.grad(x).unwrap().item(), 4.0);
}

#[test]
fn non_scalar_root_is_rejected() {
    let mut g = Graph::new();
    let x = g.variable(Tensor::zeros(&[2]));
    assert_eq!(g.backward(x), Err(AutodiffError::NonScalarRoot(vec![2])));
}

#[test]
fn constants_receive_no_gradient() {
    let mut g = Graph::new();
    let c = g.constant(Tensor::scalar(2.0));
    let x = g.variable(Tensor::scalar(5.0));
    let y = g.mul(x, c).unwrap();
    g.backward(y).unwrap();
    assert!(g.grad(c).is_none());
    assert_eq!(g.grad(x).unwrap().item(), 2.0);
}

#[test]
fn shape_errors_name_both_shapes() {
    let mut g = Graph::new();
    let a = g.variable(Tensor::zeros(&[2, 3]));
    let b = g.variable(Tensor::zeros(&[4, 5]));
    let err = g.matmul(a, b).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("[2, 3]") && msg.contains("[4, 5]"), "{msg}");
    assert!(g.add(a, b).is_err());
    assert!(g.bmm(a, b, false).is_err());
    assert!(g.slice_last(a, 2, 2).is_err());
    assert!(g.reshape(a, &[7]).is_err());
    assert!(g.global_avg_pool(a).is_err());
}

#[test]
fn softmax_rows_sum_to_one_and_layer_norm_standardizes() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut x = random(&[6, 17], &mut rng);
    x.data_mut().iter_mut().for_each(|v| *v *= 30.0);
    let mut g = Graph::new();
    let xv = g.constant(x);
    let s = g.softmax(xv);
    for row in g.value(s).data().chunks(17) {
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
    let ln = g.layer_norm(xv);
    for row in g.value(ln).data().chunks(17) {
        let mean = row.iter().sum::<f64>() / 17.0;
        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 17.0;
        assert!(mean.abs() < 1e-6);
        assert!((var - 1.0).abs() < 1e-6, "{var}");
    }
}

#[test]
fn gradcheck_matmul_and_bmm() {
    for seed in 0..3 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random(&[2, 3, 4], &mut rng);
        let b = random(&[4, 5], &mut rng);
        assert_grad(&[a, b], |g, v| {
            let y = g.matmul(v[0], v[1])?;
            project(g, y, seed)
        });
        let a = random(&[2, 3, 4], &mut rng);
        let b = random(&[2, 4, 5], &mut rng);
        let bt = random(&[2, 5, 4], &mut rng);
        assert_grad(&[a.clone(), b], |g, v| {
            let y = g.bmm(v[0], v[1], false)?;
            project(g, y, seed)
        });
        assert_grad(&[a, bt], |g, v| {
            let y = g.bmm(v[0], v[1], true)?;
            project(g, y, seed)
        });
    }
}

#[test]
fn gradcheck_conv2d() {
    for seed in 0..3 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random(&[2, 2, 6, 5], &mut rng);
        let w = random(&[3, 2, 3, 3], &mut rng);
        let b = random(&[3], &mut rng);
        for (stride, pad) in [(1, 1), (2, 1), (1, 0)] {
            assert_grad(&[x.clone(), w.clone(), b.clone()], |g, v| {
                let y = g.conv2d(v[0], v[1], Some(v[2]), stride, pad)?;
                project(g, y, seed)
            });
        }
        let w5 = random(&[2, 2, 5, 5], &mut rng);
        assert_grad(&[x.clone(), w5], |g, v| {
            let y = g.conv2d(v[0], v[1], None, 2, 2)?;
            project(g, y, seed)
        });
    }
}

#[test]
fn gradcheck_elementwise() {
    for seed in 0..3 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random(&[3, 4], &mut rng);
        let b = random(&[4], &mut rng);
        let c = random(&[3, 4], &mut rng);
        assert_grad(&[a.clone(), b.clone()], |g, v| {
            let y = g.add(v[0], v[1])?;
            project(g, y, seed)
        });
        assert_grad(&[a.clone(), b.clone()], |g, v| {
            let y = g.mul(v[0], v[1])?;
            project(g, y, seed)
        });
        assert_grad(&[a.clone(), c.clone()], |g, v| {
            let y = g.sub(v[0], v[1])?;
            let y = g.scale(y, 1.7);
            project(g, y, seed)
        });
        for op in 0..4 {
            assert_grad(std::slice::from_ref(&a), |g, v| {
                let y = match op {
                    0 => g.relu(v[0]),
                    1 => g.sigmoid(v[0]),
                    2 => g.abs(v[0]),
                    _ => g.square(v[0]),
                };
                project(g, y, seed)
            });
        }
    }
}

#[test]
fn gradcheck_normalizations() {
    for seed in 0..3 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random(&[2, 3, 6], &mut rng);
        assert_grad(std::slice::from_ref(&x), |g, v| {
            let y = g.softmax(v[0]);
            project(g, y, seed)
        });
        assert_grad(std::slice::from_ref(&x), |g, v| {
            let y = g.layer_norm(v[0]);
            project(g, y, seed)
        });
    }
}

#[test]
fn gradcheck_reductions_and_reshapes() {
    for seed in 0..3 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random(&[2, 3, 4], &mut rng);
        let y = random(&[2, 3, 2], &mut rng);
        assert_grad(std::slice::from_ref(&x), |g, v| {
            let s = g.sum_last(v[0]);
            project(g, s, seed)
        });
        assert_grad(&[x.clone(), y], |g, v| {
            let c = g.concat(&[v[0], v[1]])?;
            project(g, c, seed)
        });
        assert_grad(std::slice::from_ref(&x), |g, v| {
            let s = g.slice_last(v[0], 1, 2)?;
            let r = g.reshape(s, &[12])?;
            project(g, r, seed)
        });
        let img = random(&[2, 3, 4, 5], &mut rng);
        assert_grad(&[img], |g, v| {
            let p = g.global_avg_pool(v[0])?;
            project(g, p, seed)
        });
    }
}

#[test]
fn repeated_parent_gets_both_contributions() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let x = random(&[5], &mut rng);
    assert_grad(&[x], |g, v| {
        let y = g.mul(v[0], v[0])?;
        let z = g.add(y, v[0])?;
        let c = g.concat(&[z, v[0]])?;
        project(g, c, 8)
    });
}
