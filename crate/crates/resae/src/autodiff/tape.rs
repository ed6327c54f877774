//! Reverse-mode automatic differentiation over dense tensors.
//!
//! A [`Tape`] records every forward operation in construction order, which is
//! already a topological order of the computation graph. [`Tape::backward`]
//! walks it once in reverse, accumulating gradients additively into each
//! node's slot. [`Var`] is a copyable handle (an index) into the tape.
//!
//! Tapes come in two modes: eval tapes run dropout as the identity, train
//! tapes carry a seeded RNG for dropout masks so whole runs stay reproducible.
//! A tape is single-threaded by design; distinct tapes are independent.

use std::cell::RefCell;
use std::rc::Rc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::tensor::Tensor;

/// Handle to a value on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

pub(crate) type BackFn = Box<dyn Fn(&Tensor) -> Vec<(usize, Tensor)>>;

pub(crate) struct Node {
    pub(crate) value: Rc<Tensor>,
    pub(crate) requires: bool,
    pub(crate) back: Option<BackFn>,
}

pub struct Tape {
    pub(crate) nodes: RefCell<Vec<Node>>,
    train: bool,
    pub(crate) rng: RefCell<ChaCha8Rng>,
}

impl Tape {
    /// Evaluation-mode tape: dropout is the identity.
    pub fn new() -> Self {
        Tape {
            nodes: RefCell::new(Vec::new()),
            train: false,
            rng: RefCell::new(ChaCha8Rng::seed_from_u64(0)),
        }
    }

    /// Training-mode tape; `dropout_seed` fixes the dropout mask stream.
    pub fn train(dropout_seed: u64) -> Self {
        Tape {
            nodes: RefCell::new(Vec::new()),
            train: true,
            rng: RefCell::new(ChaCha8Rng::seed_from_u64(dropout_seed)),
        }
    }

    pub fn is_train(&self) -> bool {
        self.train
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub(crate) fn push(&self, value: Tensor, requires: bool, back: Option<BackFn>) -> Var {
        // ops must keep finite inputs finite; leaves/constants are raw inputs
        debug_assert!(
            back.is_none() || value.all_finite(),
            "tape: non-finite value produced at node {}",
            self.nodes.borrow().len()
        );
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value: Rc::new(value),
            requires,
            back,
        });
        Var(nodes.len() - 1)
    }

    /// Gradient-bearing input (a parameter).
    pub fn leaf(&self, value: Tensor) -> Var {
        self.push(value, true, None)
    }

    /// Non-differentiable input (data, masks, precomputed matrices).
    pub fn constant(&self, value: Tensor) -> Var {
        self.push(value, false, None)
    }

    pub fn value(&self, v: Var) -> Rc<Tensor> {
        Rc::clone(&self.nodes.borrow()[v.0].value)
    }

    pub fn shape(&self, v: Var) -> Vec<usize> {
        self.nodes.borrow()[v.0].value.shape().to_vec()
    }

    pub(crate) fn requires(&self, v: Var) -> bool {
        self.nodes.borrow()[v.0].requires
    }

    /// Backpropagate from a scalar `root`. Returns one gradient slot per node;
    /// only gradient-bearing nodes reachable from `root` are populated.
    pub fn backward(&self, root: Var) -> Gradients {
        let nodes = self.nodes.borrow();
        let root_val = &nodes[root.0].value;
        assert!(
            root_val.is_scalar(),
            "backward: root must be scalar, got shape {:?}",
            root_val.shape()
        );
        let mut grads: Vec<Option<Tensor>> = vec![None; nodes.len()];
        grads[root.0] = Some(Tensor::filled(root_val.shape(), 1.0));

        for id in (0..=root.0).rev() {
            let node = &nodes[id];
            if !node.requires {
                continue;
            }
            let Some(back) = &node.back else { continue };
            let Some(grad_out) = grads[id].as_ref() else {
                continue;
            };
            for (parent, contribution) in back(grad_out) {
                if !nodes[parent].requires {
                    continue;
                }
                match grads[parent].as_mut() {
                    Some(existing) => existing.add_assign(&contribution),
                    None => grads[parent] = Some(contribution),
                }
            }
        }
        Gradients { grads }
    }
}

impl Default for Tape {
    fn default() -> Self {
        Tape::new()
    }
}

/// Result of [`Tape::backward`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}
