//! Dense and GRU building blocks with paired plain/taped forward paths.
//!
//! The plain path is used for rollouts, evaluation, and extraction; the taped
//! path for training. Both must call the same tensor kernels in the same
//! order so that replaying a trained network outside the tape reproduces the
//! taped forward bitwise.

use serde::{Deserialize, Serialize};

use crate::rng::Stream;
use crate::tape::{AutodiffError, Tape, Var};
use crate::tensor::{self, Tensor};

/// Uniform init in [-1/sqrt(fan_in), +1/sqrt(fan_in)].
pub fn init_uniform(shape: Vec<usize>, fan_in: usize, stream: &mut Stream) -> Tensor {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let n: usize = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| stream.uniform_in(-bound, bound)).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Dense {
    pub fn init(out_dim: usize, in_dim: usize, stream: &mut Stream) -> Self {
        Dense {
            weight: init_uniform(vec![out_dim, in_dim], in_dim, stream),
            bias: init_uniform(vec![out_dim], in_dim, stream),
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut w = Tensor::zeros(vec![dim, dim]);
        for i in 0..dim {
            w.data_mut()[i * dim + i] = 1.0;
        }
        Dense { weight: w, bias: Tensor::zeros(vec![dim]) }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn forward(&self, x: &Tensor) -> Tensor {
        tensor::add(&tensor::matvec(&self.weight, x), &self.bias)
    }

    pub fn load(&self, tape: &mut Tape) -> TapedDense {
        TapedDense { weight: tape.param(self.weight.clone()), bias: tape.param(self.bias.clone()) }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TapedDense {
    pub weight: Var,
    pub bias: Var,
}

impl TapedDense {
    pub fn apply(&self, tape: &mut Tape, x: Var) -> Result<Var, AutodiffError> {
        let wx = tape.matvec(self.weight, x)?;
        tape.add(wx, self.bias)
    }
}

/// Update/reset-gate recurrent cell: sigmoid gates, tanh candidate,
/// h' = (1-z) * h + z * c.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GruCell {
    pub update_x: Tensor,
    pub update_h: Tensor,
    pub update_b: Tensor,
    pub reset_x: Tensor,
    pub reset_h: Tensor,
    pub reset_b: Tensor,
    pub cand_x: Tensor,
    pub cand_h: Tensor,
    pub cand_b: Tensor,
}

impl GruCell {
    pub fn init(hidden: usize, input: usize, stream: &mut Stream) -> Self {
        let gate = |fan_in: usize, shape: Vec<usize>, stream: &mut Stream| {
            init_uniform(shape, fan_in, stream)
        };
        GruCell {
            update_x: gate(input, vec![hidden, input], stream),
            update_h: gate(hidden, vec![hidden, hidden], stream),
            update_b: gate(hidden, vec![hidden], stream),
            reset_x: gate(input, vec![hidden, input], stream),
            reset_h: gate(hidden, vec![hidden, hidden], stream),
            reset_b: gate(hidden, vec![hidden], stream),
            cand_x: gate(input, vec![hidden, input], stream),
            cand_h: gate(hidden, vec![hidden, hidden], stream),
            cand_b: gate(hidden, vec![hidden], stream),
        }
    }

    pub fn hidden_dim(&self) -> usize {
        self.update_h.rows()
    }

    pub fn input_dim(&self) -> usize {
        self.update_x.cols()
    }

    pub fn step(&self, x: &Tensor, h: &Tensor) -> Tensor {
        let z = tensor::sigmoid(&tensor::add(
            &tensor::add(&tensor::matvec(&self.update_x, x), &tensor::matvec(&self.update_h, h)),
            &self.update_b,
        ));
        let r = tensor::sigmoid(&tensor::add(
            &tensor::add(&tensor::matvec(&self.reset_x, x), &tensor::matvec(&self.reset_h, h)),
            &self.reset_b,
        ));
        let rh = tensor::mul(&r, h);
        let c = tensor::tanh(&tensor::add(
            &tensor::add(&tensor::matvec(&self.cand_x, x), &tensor::matvec(&self.cand_h, &rh)),
            &self.cand_b,
        ));
        let one_minus_z = z.map(|v| -v + 1.0);
        tensor::add(&tensor::mul(&one_minus_z, h), &tensor::mul(&z, &c))
    }

    pub fn load(&self, tape: &mut Tape) -> TapedGru {
        TapedGru {
            update_x: tape.param(self.update_x.clone()),
            update_h: tape.param(self.update_h.clone()),
            update_b: tape.param(self.update_b.clone()),
            reset_x: tape.param(self.reset_x.clone()),
            reset_h: tape.param(self.reset_h.clone()),
            reset_b: tape.param(self.reset_b.clone()),
            cand_x: tape.param(self.cand_x.clone()),
            cand_h: tape.param(self.cand_h.clone()),
            cand_b: tape.param(self.cand_b.clone()),
        }
    }

    pub fn params(&self) -> Vec<&Tensor> {
        vec![
            &self.update_x, &self.update_h, &self.update_b,
            &self.reset_x, &self.reset_h, &self.reset_b,
            &self.cand_x, &self.cand_h, &self.cand_b,
        ]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        vec![
            &mut self.update_x, &mut self.update_h, &mut self.update_b,
            &mut self.reset_x, &mut self.reset_h, &mut self.reset_b,
            &mut self.cand_x, &mut self.cand_h, &mut self.cand_b,
        ]
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TapedGru {
    pub update_x: Var,
    pub update_h: Var,
    pub update_b: Var,
    pub reset_x: Var,
    pub reset_h: Var,
    pub reset_b: Var,
    pub cand_x: Var,
    pub cand_h: Var,
    pub cand_b: Var,
}

impl TapedGru {
    pub fn step(&self, tape: &mut Tape, x: Var, h: Var) -> Result<Var, AutodiffError> {
        let zx = tape.matvec(self.update_x, x)?;
        let zh = tape.matvec(self.update_h, h)?;
        let zs = tape.add(zx, zh)?;
        let zb = tape.add(zs, self.update_b)?;
        let z = tape.sigmoid(zb);

        let rx = tape.matvec(self.reset_x, x)?;
        let rh = tape.matvec(self.reset_h, h)?;
        let rs = tape.add(rx, rh)?;
        let rb = tape.add(rs, self.reset_b)?;
        let r = tape.sigmoid(rb);

        let gated = tape.mul(r, h)?;
        let cx = tape.matvec(self.cand_x, x)?;
        let ch = tape.matvec(self.cand_h, gated)?;
        let cs = tape.add(cx, ch)?;
        let cb = tape.add(cs, self.cand_b)?;
        let c = tape.tanh(cb);

        let one_minus_z = tape.one_minus(z);
        let keep = tape.mul(one_minus_z, h)?;
        let take = tape.mul(z, c)?;
        tape.add(keep, take)
    }

    pub fn vars(&self) -> Vec<Var> {
        vec![
            self.update_x, self.update_h, self.update_b,
            self.reset_x, self.reset_h, self.reset_b,
            self.cand_x, self.cand_h, self.cand_b,
        ]
    }
}
