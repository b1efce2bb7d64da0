//! Reverse-mode differentiation on a Wengert tape.
//!
//! Operations evaluate eagerly as they are recorded, so recording a graph is
//! the forward pass. `backward` walks the record in reverse creation order,
//! which is a valid reverse topological order by construction. The quantize
//! node is the one non-differentiable primitive: its forward snaps to ternary
//! levels and its backward passes incoming gradients through unchanged
//! (straight-through).

use thiserror::Error;

use crate::tensor::{self, Tensor};

#[derive(Debug, Error)]
pub enum AutodiffError {
    #[error("{op}: shape mismatch: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("backward on a tape with no recorded operations")]
    EmptyTape,
    #[error("backward seed for a non-scalar output, shape {0:?}")]
    NonScalarOutput(Vec<usize>),
    #[error("non-finite gradient for parameter slot {index}")]
    NonFiniteGradient { index: usize },
}

/// Reference to a value on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatVec { w: Var, x: Var },
    Add { a: Var, b: Var },
    Sub { a: Var, b: Var },
    Mul { a: Var, b: Var },
    /// y = mul * a + add, elementwise.
    Affine { a: Var, mul: f64, add: f64 },
    Tanh { a: Var },
    Sigmoid { a: Var },
    Relu6 { a: Var },
    Phi { a: Var },
    Quantize { a: Var },
    Concat { a: Var, b: Var },
    Softmax { a: Var },
    Dot { a: Var, b: Var },
    /// Cross-entropy of a fixed target distribution against softmax(logits).
    CeWithLogits { logits: Var, target: Tensor },
}

#[derive(Debug, Clone, Copy, Default)]
pub struct TapeOptions {
    /// Record quantize nodes as pass-throughs in the forward direction.
    ///
    /// This turns the network into its straight-through surrogate, the smooth
    /// function whose true derivative the estimator borrows; finite-difference
    /// checks run against that surrogate.
    pub quantize_identity: bool,
}

pub struct Tape {
    ops: Vec<Op>,
    values: Vec<Tensor>,
    options: TapeOptions,
}

impl Tape {
    pub fn new() -> Self {
        Self::with_options(TapeOptions::default())
    }

    pub fn with_options(options: TapeOptions) -> Self {
        Tape { ops: Vec::new(), values: Vec::new(), options }
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.values[v.0]
    }

    pub fn contains_quantize(&self) -> bool {
        self.ops.iter().any(|op| matches!(op, Op::Quantize { .. }))
    }

    fn push(&mut self, op: Op, value: Tensor) -> Var {
        debug_assert!(value.all_finite(), "non-finite value from {op:?}");
        self.ops.push(op);
        self.values.push(value);
        Var(self.values.len() - 1)
    }

    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(Op::Leaf, t)
    }

    pub fn param(&mut self, t: Tensor) -> Var {
        self.push(Op::Leaf, t)
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(Op::Leaf, t)
    }

    pub fn matvec(&mut self, w: Var, x: Var) -> Result<Var, AutodiffError> {
        let (tw, tx) = (&self.values[w.0], &self.values[x.0]);
        if !tw.is_matrix() || !tx.is_vector() || tw.cols() != tx.len() {
            return Err(AutodiffError::ShapeMismatch {
                op: "matvec",
                detail: format!("{:?} x {:?}", tw.shape(), tx.shape()),
            });
        }
        let value = tensor::matvec(tw, tx);
        Ok(self.push(Op::MatVec { w, x }, value))
    }

    fn binary(
        &mut self,
        op: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(&Tensor, &Tensor) -> Tensor,
        make: impl Fn(Var, Var) -> Op,
    ) -> Result<Var, AutodiffError> {
        let (ta, tb) = (&self.values[a.0], &self.values[b.0]);
        if ta.shape() != tb.shape() {
            return Err(AutodiffError::ShapeMismatch {
                op,
                detail: format!("{:?} vs {:?}", ta.shape(), tb.shape()),
            });
        }
        let value = f(ta, tb);
        Ok(self.push(make(a, b), value))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.binary("add", a, b, tensor::add, |a, b| Op::Add { a, b })
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.binary("sub", a, b, tensor::sub, |a, b| Op::Sub { a, b })
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.binary("mul", a, b, tensor::mul, |a, b| Op::Mul { a, b })
    }

    pub fn affine(&mut self, a: Var, mul: f64, add: f64) -> Var {
        let value = self.values[a.0].map(|v| mul * v + add);
        self.push(Op::Affine { a, mul, add }, value)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.affine(a, c, 0.0)
    }

    pub fn one_minus(&mut self, a: Var) -> Var {
        self.affine(a, -1.0, 1.0)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = tensor::tanh(&self.values[a.0]);
        self.push(Op::Tanh { a }, value)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = tensor::sigmoid(&self.values[a.0]);
        self.push(Op::Sigmoid { a }, value)
    }

    pub fn relu6(&mut self, a: Var) -> Var {
        let value = tensor::relu6(&self.values[a.0]);
        self.push(Op::Relu6 { a }, value)
    }

    pub fn phi(&mut self, a: Var) -> Var {
        let value = tensor::phi(&self.values[a.0]);
        self.push(Op::Phi { a }, value)
    }

    pub fn quantize(&mut self, a: Var) -> Var {
        let value = if self.options.quantize_identity {
            self.values[a.0].clone()
        } else {
            tensor::quantize(&self.values[a.0])
        };
        self.push(Op::Quantize { a }, value)
    }

    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (ta, tb) = (&self.values[a.0], &self.values[b.0]);
        if !ta.is_vector() || !tb.is_vector() {
            return Err(AutodiffError::ShapeMismatch {
                op: "concat",
                detail: format!("{:?} vs {:?}", ta.shape(), tb.shape()),
            });
        }
        let value = tensor::concat(ta, tb);
        Ok(self.push(Op::Concat { a, b }, value))
    }

    pub fn softmax(&mut self, a: Var) -> Result<Var, AutodiffError> {
        if !self.values[a.0].is_vector() {
            return Err(AutodiffError::ShapeMismatch {
                op: "softmax",
                detail: format!("{:?}", self.values[a.0].shape()),
            });
        }
        let value = tensor::softmax(&self.values[a.0]);
        Ok(self.push(Op::Softmax { a }, value))
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (ta, tb) = (&self.values[a.0], &self.values[b.0]);
        if ta.shape() != tb.shape() {
            return Err(AutodiffError::ShapeMismatch {
                op: "dot",
                detail: format!("{:?} vs {:?}", ta.shape(), tb.shape()),
            });
        }
        let value = Tensor::scalar(tensor::dot(ta, tb));
        Ok(self.push(Op::Dot { a, b }, value))
    }

    /// `-sum_i target_i log softmax(logits)_i` with a fixed target distribution.
    pub fn cross_entropy_with_logits(
        &mut self,
        logits: Var,
        target: Tensor,
    ) -> Result<Var, AutodiffError> {
        let tl = &self.values[logits.0];
        if !tl.is_vector() || tl.shape() != target.shape() {
            return Err(AutodiffError::ShapeMismatch {
                op: "cross_entropy_with_logits",
                detail: format!("{:?} vs {:?}", tl.shape(), target.shape()),
            });
        }
        let lse = tensor::log_sum_exp(tl);
        let loss = lse - tensor::dot(tl, &target);
        Ok(self.push(Op::CeWithLogits { logits, target }, Tensor::scalar(loss)))
    }

    /// Recomputes every recorded operation from the leaf values and checks
    /// the results against the stored ones bitwise.
    pub fn replay_matches(&self) -> bool {
        let mut values: Vec<Tensor> = Vec::with_capacity(self.values.len());
        for (i, op) in self.ops.iter().enumerate() {
            let v = match op {
                Op::Leaf => self.values[i].clone(),
                Op::MatVec { w, x } => tensor::matvec(&values[w.0], &values[x.0]),
                Op::Add { a, b } => tensor::add(&values[a.0], &values[b.0]),
                Op::Sub { a, b } => tensor::sub(&values[a.0], &values[b.0]),
                Op::Mul { a, b } => tensor::mul(&values[a.0], &values[b.0]),
                Op::Affine { a, mul, add } => values[a.0].map(|v| mul * v + add),
                Op::Tanh { a } => tensor::tanh(&values[a.0]),
                Op::Sigmoid { a } => tensor::sigmoid(&values[a.0]),
                Op::Relu6 { a } => tensor::relu6(&values[a.0]),
                Op::Phi { a } => tensor::phi(&values[a.0]),
                Op::Quantize { a } => {
                    if self.options.quantize_identity {
                        values[a.0].clone()
                    } else {
                        tensor::quantize(&values[a.0])
                    }
                }
                Op::Concat { a, b } => tensor::concat(&values[a.0], &values[b.0]),
                Op::Softmax { a } => tensor::softmax(&values[a.0]),
                Op::Dot { a, b } => Tensor::scalar(tensor::dot(&values[a.0], &values[b.0])),
                Op::CeWithLogits { logits, target } => {
                    let lse = tensor::log_sum_exp(&values[logits.0]);
                    Tensor::scalar(lse - tensor::dot(&values[logits.0], target))
                }
            };
            if v != self.values[i] {
                return false;
            }
            values.push(v);
        }
        true
    }

    /// Reverse pass from a scalar output, seeding its gradient with 1.
    pub fn backward_scalar(&self, out: Var) -> Result<Gradients, AutodiffError> {
        if self.values[out.0].len() != 1 {
            return Err(AutodiffError::NonScalarOutput(self.values[out.0].shape().to_vec()));
        }
        self.backward_seeded(&[(out, Tensor::scalar(1.0))])
    }

    /// Reverse pass with explicit output gradients.
    pub fn backward_seeded(&self, seeds: &[(Var, Tensor)]) -> Result<Gradients, AutodiffError> {
        if self.ops.is_empty() {
            return Err(AutodiffError::EmptyTape);
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.values.len()];
        for (v, g) in seeds {
            if g.shape() != self.values[v.0].shape() {
                return Err(AutodiffError::ShapeMismatch {
                    op: "backward_seeded",
                    detail: format!("{:?} vs {:?}", g.shape(), self.values[v.0].shape()),
                });
            }
            accumulate(&mut grads[v.0], g);
        }

        for i in (0..self.ops.len()).rev() {
            let g = match grads[i].take() {
                Some(g) => g,
                None => continue,
            };
            match &self.ops[i] {
                Op::Leaf => {
                    grads[i] = Some(g);
                    continue;
                }
                Op::MatVec { w, x } => {
                    let (tw, tx) = (&self.values[w.0], &self.values[x.0]);
                    let (rows, cols) = (tw.rows(), tw.cols());
                    let mut gw = vec![0.0; rows * cols];
                    let mut gx = vec![0.0; cols];
                    for r in 0..rows {
                        let gr = g.data()[r];
                        for c in 0..cols {
                            gw[r * cols + c] = gr * tx.data()[c];
                            gx[c] += tw.data()[r * cols + c] * gr;
                        }
                    }
                    accumulate(&mut grads[w.0], &Tensor::matrix(rows, cols, gw));
                    accumulate(&mut grads[x.0], &Tensor::vector(gx));
                }
                Op::Add { a, b } => {
                    accumulate(&mut grads[a.0], &g);
                    accumulate(&mut grads[b.0], &g);
                }
                Op::Sub { a, b } => {
                    accumulate(&mut grads[a.0], &g);
                    accumulate(&mut grads[b.0], &tensor::scale(&g, -1.0));
                }
                Op::Mul { a, b } => {
                    let ga = tensor::mul(&g, &self.values[b.0]);
                    let gb = tensor::mul(&g, &self.values[a.0]);
                    accumulate(&mut grads[a.0], &ga);
                    accumulate(&mut grads[b.0], &gb);
                }
                Op::Affine { a, mul, .. } => {
                    accumulate(&mut grads[a.0], &tensor::scale(&g, *mul));
                }
                Op::Tanh { a } => {
                    let y = &self.values[i];
                    let ga = Tensor::new(
                        y.shape().to_vec(),
                        y.data()
                            .iter()
                            .zip(g.data())
                            .map(|(&y, &g)| g * (1.0 - y * y))
                            .collect(),
                    );
                    accumulate(&mut grads[a.0], &ga);
                }
                Op::Sigmoid { a } => {
                    let y = &self.values[i];
                    let ga = Tensor::new(
                        y.shape().to_vec(),
                        y.data()
                            .iter()
                            .zip(g.data())
                            .map(|(&y, &g)| g * y * (1.0 - y))
                            .collect(),
                    );
                    accumulate(&mut grads[a.0], &ga);
                }
                Op::Relu6 { a } => {
                    let x = &self.values[a.0];
                    let ga = Tensor::new(
                        x.shape().to_vec(),
                        x.data()
                            .iter()
                            .zip(g.data())
                            .map(|(&x, &g)| if x > 0.0 && x < 6.0 { g } else { 0.0 })
                            .collect(),
                    );
                    accumulate(&mut grads[a.0], &ga);
                }
                Op::Phi { a } => {
                    let x = &self.values[a.0];
                    let ga = Tensor::new(
                        x.shape().to_vec(),
                        x.data()
                            .iter()
                            .zip(g.data())
                            .map(|(&x, &g)| g * tensor::phi_grad_scalar(x))
                            .collect(),
                    );
                    accumulate(&mut grads[a.0], &ga);
                }
                // Straight-through: the quantizer is the identity in the
                // backward direction.
                Op::Quantize { a } => {
                    accumulate(&mut grads[a.0], &g);
                }
                Op::Concat { a, b } => {
                    let na = self.values[a.0].len();
                    let ga = Tensor::vector(g.data()[..na].to_vec());
                    let gb = Tensor::vector(g.data()[na..].to_vec());
                    accumulate(&mut grads[a.0], &ga);
                    accumulate(&mut grads[b.0], &gb);
                }
                Op::Softmax { a } => {
                    let y = &self.values[i];
                    let inner: f64 = y.data().iter().zip(g.data()).map(|(&y, &g)| y * g).sum();
                    let ga = Tensor::new(
                        y.shape().to_vec(),
                        y.data()
                            .iter()
                            .zip(g.data())
                            .map(|(&y, &g)| y * (g - inner))
                            .collect(),
                    );
                    accumulate(&mut grads[a.0], &ga);
                }
                Op::Dot { a, b } => {
                    let gs = g.item();
                    let ga = tensor::scale(&self.values[b.0], gs);
                    let gb = tensor::scale(&self.values[a.0], gs);
                    accumulate(&mut grads[a.0], &ga);
                    accumulate(&mut grads[b.0], &gb);
                }
                Op::CeWithLogits { logits, target } => {
                    let gs = g.item();
                    let p = tensor::softmax(&self.values[logits.0]);
                    let gl = Tensor::new(
                        p.shape().to_vec(),
                        p.data()
                            .iter()
                            .zip(target.data())
                            .map(|(&p, &t)| gs * (p - t))
                            .collect(),
                    );
                    accumulate(&mut grads[logits.0], &gl);
                }
            }
        }
        Ok(Gradients { grads })
    }
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

fn accumulate(slot: &mut Option<Tensor>, g: &Tensor) {
    match slot {
        Some(acc) => {
            debug_assert_eq!(acc.shape(), g.shape());
            for (a, b) in acc.data_mut().iter_mut().zip(g.data()) {
                *a += b;
            }
        }
        None => *slot = Some(g.clone()),
    }
}

/// Gradients per tape variable after a backward pass.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads[v.0].as_ref()
    }

    /// Gradient of a leaf, a zero tensor of the right shape if the leaf was
    /// not reached.
    pub fn get_or_zeros(&self, tape: &Tape, v: Var) -> Tensor {
        match self.grads[v.0].as_ref() {
            Some(g) => g.clone(),
            None => Tensor::zeros(tape.value(v).shape().to_vec()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tanh_gradient_at_zero_is_one() {
        let mut t = Tape::new();
        let x = t.input(Tensor::scalar(0.0));
        let y = t.tanh(x);
        assert_eq!(t.value(y).item(), 0.0);
        let g = t.backward_scalar(y).unwrap();
        assert_eq!(g.get(x).unwrap().item(), 1.0);
    }

    #[test]
    fn quantize_passes_gradient_through_unchanged() {
        let mut t = Tape::new();
        let x = t.input(Tensor::vector(vec![0.3, -0.8, 0.9]));
        let q = t.quantize(x);
        assert_eq!(t.value(q).data(), &[0.0, -1.0, 1.0]);
        let scaled = t.scale(q, 2.5);
        let probe = t.constant(Tensor::vector(vec![1.0, 1.0, 1.0]));
        let out = t.dot(scaled, probe).unwrap();
        let g = t.backward_scalar(out).unwrap();
        // d out / d q = 2.5 per entry, and the quantize node forwards it as-is.
        assert_eq!(g.get(x).unwrap().data(), &[2.5, 2.5, 2.5]);
    }

    #[test]
    fn quantize_changes_forward_but_not_jacobian_contribution() {
        // Same downstream function with and without a quantize node in front:
        // forward outputs differ, while the gradient with the node equals the
        // downstream gradient evaluated at the quantized point.
        let x_val = Tensor::vector(vec![0.7, -0.2]);

        let mut with = Tape::new();
        let x = with.input(x_val.clone());
        let q = with.quantize(x);
        let y = with.tanh(q);
        let probe = with.constant(Tensor::vector(vec![1.0, 1.0]));
        let out = with.dot(y, probe).unwrap();
        let g_with = with.backward_scalar(out).unwrap().get(x).unwrap().clone();

        let mut without = Tape::new();
        let xq = without.input(tensor::quantize(&x_val));
        let y2 = without.tanh(xq);
        let probe2 = without.constant(Tensor::vector(vec![1.0, 1.0]));
        let out2 = without.dot(y2, probe2).unwrap();
        let g_without = without.backward_scalar(out2).unwrap().get(xq).unwrap().clone();

        assert_ne!(with.value(y).data(), tensor::tanh(&x_val).data());
        assert_eq!(g_with.data(), g_without.data());
    }

    #[test]
    fn shape_mismatch_is_rejected_with_op_name() {
        let mut t = Tape::new();
        let a = t.input(Tensor::vector(vec![1.0, 2.0]));
        let b = t.input(Tensor::vector(vec![1.0, 2.0, 3.0]));
        let err = t.add(a, b).unwrap_err();
        assert!(err.to_string().contains("add"));
    }

    #[test]
    fn backward_on_empty_tape_is_rejected() {
        let t = Tape::new();
        assert!(matches!(
            t.backward_seeded(&[]),
            Err(AutodiffError::EmptyTape)
        ));
    }

    #[test]
    fn forward_is_pure_and_replay_matches() {
        let build = || {
            let mut t = Tape::new();
            let x = t.input(Tensor::vector(vec![0.1, -0.4, 2.0]));
            let w = t.param(Tensor::matrix(2, 3, vec![0.3, -1.0, 0.2, 0.8, 0.5, -0.7]));
            let h = t.matvec(w, x).unwrap();
            let s = t.sigmoid(h);
            let sm = t.softmax(s).unwrap();
            let v = t.value(sm).clone();
            (t, v)
        };
        let (t1, v1) = build();
        let (_t2, v2) = build();
        assert_eq!(v1, v2);
        assert!(t1.replay_matches());
    }

    #[test]
    fn cross_entropy_gradient_is_softmax_minus_target() {
        let mut t = Tape::new();
        let z = t.input(Tensor::vector(vec![0.2, -1.0, 0.5]));
        let target = Tensor::vector(vec![0.0, 1.0, 0.0]);
        let loss = t.cross_entropy_with_logits(z, target.clone()).unwrap();
        let g = t.backward_scalar(loss).unwrap();
        let p = tensor::softmax(&Tensor::vector(vec![0.2, -1.0, 0.5]));
        for ((gz, pi), ti) in g.get(z).unwrap().data().iter().zip(p.data()).zip(target.data()) {
            assert!((gz - (pi - ti)).abs() < 1e-12);
        }
    }
}
