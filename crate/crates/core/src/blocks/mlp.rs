use rand::Rng;

use crate::autodiff::{ParamId, ParamStore, Tape, Tensor, Var};
use crate::error::Result;

/// Trainable values of one forward pass, one tape leaf per parameter.
pub struct ParamVars(Vec<Var>);

impl ParamVars {
    pub fn new(tape: &mut Tape, store: &ParamStore) -> Self {
        ParamVars(store.ids().map(|id| tape.param(store, id)).collect())
    }

    pub fn get(&self, id: ParamId) -> Var {
        self.0[id.index()]
    }
}

fn glorot<R: Rng + ?Sized>(rng: &mut R, fan_in: usize, fan_out: usize) -> Tensor {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..fan_in * fan_out)
        .map(|_| rng.gen_range(-bound..bound))
        .collect();
    Tensor::new(vec![fan_in, fan_out], data).expect("glorot shape")
}

/// `y = x·W + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Linear {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        rng: &mut R,
    ) -> Self {
        let weight = store.register(format!("{name}.weight"), glorot(rng, in_dim, out_dim));
        let bias = store.register(format!("{name}.bias"), Tensor::zeros(&[out_dim]));
        Linear {
            in_dim,
            out_dim,
            weight,
            bias,
        }
    }

    pub fn forward(&self, tape: &mut Tape, pv: &ParamVars, x: Var) -> Result<Var> {
        let h = tape.matmul(x, pv.get(self.weight))?;
        tape.add_row(h, pv.get(self.bias))
    }
}

/// One swish hidden layer followed by a linear output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub hidden: Linear,
    pub output: Linear,
}

impl Mlp {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        hidden: usize,
        out_dim: usize,
        rng: &mut R,
    ) -> Self {
        Mlp {
            hidden: Linear::new(store, &format!("{name}.hidden"), in_dim, hidden, rng),
            output: Linear::new(store, &format!("{name}.output"), hidden, out_dim, rng),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.hidden.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.output.out_dim
    }

    pub fn forward(&self, tape: &mut Tape, pv: &ParamVars, x: Var) -> Result<Var> {
        let h = self.hidden.forward(tape, pv, x)?;
        let h = tape.swish(h);
        self.output.forward(tape, pv, h)
    }
}
