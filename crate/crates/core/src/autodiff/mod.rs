//! Reverse-mode automatic differentiation over `f64` tensors.
//!
//! A [`Graph`] is a tape: each op evaluates eagerly, appends a node that
//! remembers its parents, and [`Graph::backward`] walks the tape in reverse.
//! Leaves are either variables (receive gradients) or constants.

mod graph;
mod kernels;
mod tensor;

pub use graph::{sigmoid, Graph, Var, LAYER_NORM_EPS};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AutodiffError {
    #[error("{op}: shape mismatch between {left:?} and {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("{op}: got shape {shape:?}, expected {expected}")]
    BadShape {
        op: &'static str,
        shape: Vec<usize>,
        expected: String,
    },
    #[error("backward needs a one-element root, got shape {0:?}")]
    NonScalarRoot(Vec<usize>),
    #[error("{0}: no inputs")]
    Empty(&'static str),
}

pub type Result<T> = std::result::Result<T, AutodiffError>;

/// Outcome of comparing analytic gradients with central differences.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    /// `(input index, element index)` of the worst element.
    pub worst: Option<(usize, usize)>,
    pub checked: usize,
}

impl GradCheck {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_error < tolerance
    }
}

/// Denominator floor for the relative error, so that elements whose true
/// gradient is essentially zero are compared absolutely.
pub const GRAD_CHECK_FLOOR: f64 = 1e-6;

/// `|a - n| / max(|a|, |n|, GRAD_CHECK_FLOOR)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRAD_CHECK_FLOOR)
}

/// Checks the gradient of the scalar built by `f` with respect to each
/// input tensor, using central differences with `step`.
///
/// `max_elems` caps how many elements of each input are probed; elements
/// are spread evenly over the tensor. `None` probes every element.
pub fn check_gradients<F, E>(
    inputs: &[Tensor],
    f: F,
    step: f64,
    max_elems: Option<usize>,
) -> std::result::Result<GradCheck, E>
where
    F: Fn(&mut Graph, &[Var]) -> std::result::Result<Var, E>,
    E: From<AutodiffError>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.variable(t.clone())).collect();
    let root = f(&mut g, &vars)?;
    g.backward(root)?;
    let analytic: Vec<Tensor> = vars
        .iter()
        .zip(inputs)
        .map(|(v, t)| g.grad(*v).cloned().unwrap_or_else(|| Tensor::zeros(t.shape())))
        .collect();

    let eval = |perturbed: &[Tensor]| -> std::result::Result<f64, E> {
        let mut g = Graph::new();
        let vars: Vec<Var> = perturbed.iter().map(|t| g.constant(t.clone())).collect();
        let root = f(&mut g, &vars)?;
        Ok(g.value(root).item())
    };

    let mut report = GradCheck {
        max_rel_error: 0.0,
        worst: None,
        checked: 0,
    };
    let mut work: Vec<Tensor> = inputs.to_vec();
    for (ti, t) in inputs.iter().enumerate() {
        let n = t.len();
        let probes: Vec<usize> = match max_elems {
            Some(cap) if cap < n => (0..cap).map(|i| i * n / cap).collect(),
            _ => (0..n).collect(),
        };
        for e in probes {
            let orig = t.data()[e];
            work[ti].data_mut()[e] = orig + step;
            let up = eval(&work)?;
            work[ti].data_mut()[e] = orig - step;
            let down = eval(&work)?;
            work[ti].data_mut()[e] = orig;
            let numeric = (up - down) / (2.0 * step);
            let err = relative_error(analytic[ti].data()[e], numeric);
            report.checked += 1;
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(err);
                report.worst = Some((ti, e));
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests;
