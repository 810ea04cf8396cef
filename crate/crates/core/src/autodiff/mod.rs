//! Reverse-mode differentiation over a linear tape.
//!
//! A [`Graph`] records every primitive applied during a forward pass. Values
//! are kept on the tape so that [`Graph::backward`] can replay the records in
//! reverse and accumulate gradients into each input. Parameters enter the tape
//! through [`Graph::param`] and receive their gradients back via
//! [`Graph::accumulate_param_grads`].
//!
//! Activations are laid out `[batch, channels, frames]` for every
//! channel-aware primitive.

mod gemm;
pub mod gradcheck;
mod lstm;
mod ops;

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::{ParamId, ParamStore, Tensor};

pub(crate) use ops::check_conv_geometry;
pub use ops::{AffineOrder, BN_EPS};

/// Handle to a value recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
pub(crate) enum Op {
    Leaf,
    MatMul(Var, Var),
    Conv1d {
        x: Var,
        w: Var,
        dilation: usize,
    },
    Add(Var, Var),
    Mul(Var, Var),
    Affine {
        x: Var,
        scale: f64,
    },
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Dropout {
        x: Var,
        mask: Vec<f64>,
    },
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
        batch_stats: bool,
    },
    ChannelAffine {
        x: Var,
        shift: Var,
        scale: Var,
        order: AffineOrder,
    },
    Concat(Vec<Var>),
    Slice {
        x: Var,
        start: usize,
    },
    Embedding {
        table: Var,
        ids: Vec<usize>,
    },
    Lstm {
        x: Var,
        w_ih: Var,
        w_hh: Var,
        bias: Var,
        reverse: bool,
        cache: lstm::LstmCache,
    },
    Mse(Var, Var),
    Sum(Var),
}

struct Node {
    shape: Vec<usize>,
    value: Vec<f64>,
    op: Op,
    needs_grad: bool,
}

/// Forward tape. One graph per forward/backward pass.
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
    params: HashMap<ParamId, Var>,
    training: bool,
    rng: ChaCha8Rng,
}

impl Graph {
    /// Training-mode graph; `seed` drives dropout masks.
    pub fn train(seed: u64) -> Self {
        Graph::build(true, seed)
    }

    /// Inference graph: dropout disabled, batch norm uses running statistics.
    pub fn eval() -> Self {
        Graph::build(false, 0)
    }

    fn build(training: bool, seed: u64) -> Self {
        Graph {
            nodes: Vec::new(),
            grads: Vec::new(),
            params: HashMap::new(),
            training,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn is_training(&self) -> bool {
        self.training
    }

    pub(crate) fn push(&mut self, shape: Vec<usize>, value: Vec<f64>, op: Op, needs_grad: bool) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        self.nodes.push(Node {
            shape,
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Records a tensor. Gradients are tracked if the tensor requires them.
    pub fn input(&mut self, t: &Tensor) -> Var {
        self.push(t.shape().to_vec(), t.data().to_vec(), Op::Leaf, t.requires_grad())
    }

    /// Records a constant without gradient tracking.
    pub fn constant(&mut self, shape: &[usize], data: Vec<f64>) -> Result<Var> {
        if shape.iter().product::<usize>() != data.len() {
            return Err(Error::dim("constant", shape, &[data.len()]));
        }
        Ok(self.push(shape.to_vec(), data, Op::Leaf, false))
    }

    /// Leaf for a stored parameter. Repeated calls return the same handle.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(v) = self.params.get(&id) {
            return *v;
        }
        let v = self.input(store.get(id));
        self.params.insert(id, v);
        v
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn tensor(&self, v: Var) -> Tensor {
        Tensor::new(self.shape(v), self.value(v).to_vec()).expect("node shape")
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[0]
    }

    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub(crate) fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub(crate) fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    /// Back-propagates from a scalar node.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.nodes[loss.0].value.len() != 1 {
            return Err(Error::dim("backward", &self.nodes[loss.0].shape, &[1]));
        }
        self.grads = (0..self.nodes.len()).map(|_| None).collect();
        self.grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(dy) = self.grads[i].take() else {
                continue;
            };
            if self.nodes[i].needs_grad {
                self.backward_node(i, &dy);
            }
            self.grads[i] = Some(dy);
        }
        Ok(())
    }

    pub(crate) fn acc(&mut self, v: Var, g: Vec<f64>) {
        if !self.nodes[v.0].needs_grad {
            return;
        }
        match &mut self.grads[v.0] {
            Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
            slot @ None => *slot = Some(g),
        }
    }

    /// Adds gradients of every parameter leaf into the store.
    pub fn accumulate_param_grads(&self, store: &mut ParamStore) -> Result<()> {
        for (id, v) in &self.params {
            if let Some(g) = self.grad(*v) {
                store.get_mut(*id).accumulate_grad(g)?;
            }
        }
        Ok(())
    }
}
