//! Trainable parameters and the layers built from them.
//!
//! Parameters live in a [`ParamStore`] outside any graph. Each forward pass
//! binds the store into a fresh [`Graph`](crate::autodiff::Graph) as
//! variables; after `backward` the gradients are folded back into the store,
//! where they accumulate until [`ParamStore::zero_grads`].

mod adam;
mod checkpoint;
mod layers;

pub use adam::{lr_schedule, Adam, AdamConfig};
pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CheckpointError, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use layers::{Conv, ConvStack, ConvStackConfig, EncoderConfig, Linear, Mlp, TransformerEncoder};

use rand::Rng;

use crate::autodiff::{Graph, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Param>,
}

/// The graph variables a [`ParamStore`] was bound to.
#[derive(Debug, Clone)]
pub struct Bound {
    vars: Vec<Var>,
}

impl Bound {
    /// Wraps variables that stand in for a store's parameters, in store order.
    pub fn from_vars(vars: Vec<Var>) -> Self {
        Self { vars }
    }

    pub fn get(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        let name = name.into();
        assert!(self.find(&name).is_none(), "duplicate parameter {name}");
        let grad = Tensor::zeros(value.shape());
        self.params.push(Param { name, value, grad });
        ParamId(self.params.len() - 1)
    }

    /// Adds a tensor drawn from `U(-sqrt(6/fan_in), sqrt(6/fan_in))` (He uniform).
    pub fn add_uniform<R: Rng>(&mut self, name: impl Into<String>, shape: &[usize], fan_in: usize, rng: &mut R) -> ParamId {
        let bound = (6.0 / fan_in as f64).sqrt();
        let n = shape.iter().product();
        let data = (0..n).map(|_| rng.random_range(-bound..bound)).collect();
        self.add(name, Tensor::new(shape, data))
    }

    pub fn add_zeros(&mut self, name: impl Into<String>, shape: &[usize]) -> ParamId {
        self.add(name, Tensor::zeros(shape))
    }

    pub fn add_filled(&mut self, name: impl Into<String>, shape: &[usize], value: f64) -> ParamId {
        self.add(name, Tensor::filled(shape, value))
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn get(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param {
        &mut self.params[id.0]
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param] {
        &mut self.params
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn param_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn bind(&self, graph: &mut Graph) -> Bound {
        Bound {
            vars: self.params.iter().map(|p| graph.variable(p.value.clone())).collect(),
        }
    }

    /// Adds the gradients a backward pass left on the bound variables.
    pub fn accumulate_grads(&mut self, graph: &Graph, bound: &Bound) {
        for (p, v) in self.params.iter_mut().zip(&bound.vars) {
            if let Some(g) = graph.grad(*v) {
                p.grad.data_mut().iter_mut().zip(g.data()).for_each(|(a, b)| *a += b);
            }
        }
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
    }

    /// Copies values from `other`, which must hold the same names and shapes.
    pub fn load_values(&mut self, other: &ParamStore) -> Result<(), CheckpointError> {
        if other.len() != self.len() {
            return Err(CheckpointError::Mismatch(format!(
                "{} tensors, expected {}",
                other.len(),
                self.len()
            )));
        }
        for (mine, theirs) in self.params.iter_mut().zip(&other.params) {
            if mine.name != theirs.name || mine.value.shape() != theirs.value.shape() {
                return Err(CheckpointError::Mismatch(format!(
                    "{} {:?} vs {} {:?}",
                    mine.name,
                    mine.value.shape(),
                    theirs.name,
                    theirs.value.shape()
                )));
            }
            mine.value = theirs.value.clone();
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn uniform_init_is_bounded_and_seeded() {
        let mut a = ParamStore::new();
        let mut b = ParamStore::new();
        let mut ra = ChaCha8Rng::seed_from_u64(3);
        let mut rb = ChaCha8Rng::seed_from_u64(3);
        let ia = a.add_uniform("w", &[4, 25], 25, &mut ra);
        b.add_uniform("w", &[4, 25], 25, &mut rb);
        assert_eq!(a, b);
        let bound = (6.0f64 / 25.0).sqrt();
        let data = a.get(ia).value.data();
        assert!(data.iter().all(|v| v.abs() < bound));
        assert!(data.iter().any(|v| v.abs() > 0.5 * bound));
        assert_eq!(a.param_count(), 100);
    }

    #[test]
    fn grads_accumulate_until_zeroed() {
        let mut store = ParamStore::new();
        let id = store.add("x", Tensor::scalar(3.0));
        for expected in [6.0, 12.0] {
            let mut g = Graph::new();
            let bound = store.bind(&mut g);
            let x = bound.get(id);
            let y = g.square(x);
            g.backward(y).unwrap();
            store.accumulate_grads(&g, &bound);
            assert_eq!(store.get(id).grad.item(), expected);
        }
        store.zero_grads();
        assert_eq!(store.get(id).grad.item(), 0.0);
    }

    #[test]
    fn load_values_checks_layout() {
        let mut a = ParamStore::new();
        a.add("w", Tensor::zeros(&[2]));
        let mut b = ParamStore::new();
        b.add("w", Tensor::filled(&[2], 1.5));
        a.load_values(&b).unwrap();
        assert_eq!(a.params()[0].value.data(), &[1.5, 1.5]);
        let mut c = ParamStore::new();
        c.add("v", Tensor::zeros(&[2]));
        assert!(a.load_values(&c).is_err());
    }
}
