//! Dense row-major `f64` tensors.
//!
//! Everything in this crate runs at desk scale, so the representation is a
//! plain `Vec<f64>` plus a shape. The free functions at the bottom are the
//! numeric kernels shared by the taped (training) and untaped (rollout)
//! forward paths; both paths must call the same kernels so their outputs
//! agree bitwise.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Self {
        let n: usize = shape.iter().product();
        assert_eq!(n, data.len(), "shape {shape:?} does not match data length {}", data.len());
        Tensor { shape, data }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Tensor { shape, data: vec![0.0; n] }
    }

    pub fn scalar(v: f64) -> Self {
        Tensor { shape: vec![1], data: vec![v] }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Tensor { shape: vec![data.len()], data }
    }

    /// Row-major matrix, `rows x cols`.
    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(rows * cols, data.len());
        Tensor { shape: vec![rows, cols], data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn item(&self) -> f64 {
        assert_eq!(self.data.len(), 1, "item() on non-scalar tensor");
        self.data[0]
    }

    pub fn is_vector(&self) -> bool {
        self.shape.len() == 1
    }

    pub fn is_matrix(&self) -> bool {
        self.shape.len() == 2
    }

    pub fn rows(&self) -> usize {
        assert!(self.is_matrix());
        self.shape[0]
    }

    pub fn cols(&self) -> usize {
        assert!(self.is_matrix());
        self.shape[1]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

// ---- kernels ----------------------------------------------------------

/// `W x` for a `rows x cols` matrix and a `cols` vector.
pub fn matvec(w: &Tensor, x: &Tensor) -> Tensor {
    assert!(w.is_matrix() && x.is_vector());
    assert_eq!(w.cols(), x.len(), "matvec dims {:?} x {:?}", w.shape(), x.shape());
    let (rows, cols) = (w.rows(), w.cols());
    let mut out = vec![0.0; rows];
    for r in 0..rows {
        let row = &w.data()[r * cols..(r + 1) * cols];
        let mut acc = 0.0;
        for c in 0..cols {
            acc += row[c] * x.data()[c];
        }
        out[r] = acc;
    }
    Tensor::vector(out)
}

pub fn add(a: &Tensor, b: &Tensor) -> Tensor {
    assert_eq!(a.shape(), b.shape(), "add shapes {:?} vs {:?}", a.shape(), b.shape());
    Tensor::new(
        a.shape().to_vec(),
        a.data().iter().zip(b.data()).map(|(x, y)| x + y).collect(),
    )
}

pub fn sub(a: &Tensor, b: &Tensor) -> Tensor {
    assert_eq!(a.shape(), b.shape(), "sub shapes {:?} vs {:?}", a.shape(), b.shape());
    Tensor::new(
        a.shape().to_vec(),
        a.data().iter().zip(b.data()).map(|(x, y)| x - y).collect(),
    )
}

/// Elementwise (Hadamard) product.
pub fn mul(a: &Tensor, b: &Tensor) -> Tensor {
    assert_eq!(a.shape(), b.shape(), "mul shapes {:?} vs {:?}", a.shape(), b.shape());
    Tensor::new(
        a.shape().to_vec(),
        a.data().iter().zip(b.data()).map(|(x, y)| x * y).collect(),
    )
}

pub fn scale(a: &Tensor, c: f64) -> Tensor {
    a.map(|v| v * c)
}

pub fn dot(a: &Tensor, b: &Tensor) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

pub fn concat(a: &Tensor, b: &Tensor) -> Tensor {
    assert!(a.is_vector() && b.is_vector());
    let mut d = a.data().to_vec();
    d.extend_from_slice(b.data());
    Tensor::vector(d)
}

pub fn tanh(a: &Tensor) -> Tensor {
    a.map(f64::tanh)
}

pub fn sigmoid(a: &Tensor) -> Tensor {
    a.map(sigmoid_scalar)
}

pub fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn relu6(a: &Tensor) -> Tensor {
    a.map(|v| v.clamp(0.0, 6.0))
}

/// Bottleneck pre-activation: `1.5 tanh(x) + 0.5 tanh(-3 x)`.
///
/// Odd, bounded in (-1, 1), with zero slope at the origin so the quantizer's
/// 0 level is reachable during training.
pub fn phi_scalar(x: f64) -> f64 {
    1.5 * x.tanh() + 0.5 * (-3.0 * x).tanh()
}

pub fn phi(a: &Tensor) -> Tensor {
    a.map(phi_scalar)
}

pub fn phi_grad_scalar(x: f64) -> f64 {
    let t1 = x.tanh();
    let t3 = (3.0 * x).tanh();
    1.5 * (1.0 - t1 * t1) - 1.5 * (1.0 - t3 * t3)
}

/// Nearest ternary level in {-1, 0, +1}; thresholds at +-0.5, ties map to 0.
pub fn quantize_scalar(x: f64) -> f64 {
    if x > 0.5 {
        1.0
    } else if x < -0.5 {
        -1.0
    } else {
        0.0
    }
}

pub fn quantize(a: &Tensor) -> Tensor {
    a.map(quantize_scalar)
}

pub fn quantize_codes(a: &Tensor) -> Vec<i8> {
    a.data().iter().map(|&v| quantize_scalar(v) as i8).collect()
}

/// Numerically stable softmax over a vector.
pub fn softmax(a: &Tensor) -> Tensor {
    assert!(a.is_vector());
    let max = a.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = a.data().iter().map(|&v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Tensor::vector(exps.into_iter().map(|e| e / total).collect())
}

/// `log sum exp` of a vector, stable.
pub fn log_sum_exp(a: &Tensor) -> f64 {
    let max = a.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = a.data().iter().map(|&v| (v - max).exp()).sum();
    max + s.ln()
}

/// Index of the maximum entry; ties break toward the lowest index.
pub fn argmax(a: &Tensor) -> usize {
    let mut best = 0;
    for i in 1..a.len() {
        if a.data()[i] > a.data()[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn matvec_basics() {
        let w = Tensor::matrix(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let x = Tensor::vector(vec![1.0, 0.0, -1.0]);
        assert_eq!(matvec(&w, &x).data(), &[-2.0, -2.0]);
    }

    #[test]
    fn relu6_clamps() {
        let t = Tensor::vector(vec![7.0, -1.0, 3.0]);
        assert_eq!(relu6(&t).data(), &[6.0, 0.0, 3.0]);
    }

    #[test]
    fn softmax_of_zeros_is_uniform() {
        let s = softmax(&Tensor::vector(vec![0.0, 0.0]));
        assert_eq!(s.data(), &[0.5, 0.5]);
    }

    #[test]
    fn phi_values() {
        assert_eq!(phi_scalar(0.0), 0.0);
        // Direct evaluation of 1.5*tanh(5) + 0.5*tanh(-15).
        assert!((phi_scalar(5.0) - 0.9998638063939862).abs() < 1e-12);
        assert!(phi_grad_scalar(0.0).abs() < 1e-15);
    }

    #[test]
    fn quantize_thresholds() {
        assert_eq!(quantize_scalar(0.0), 0.0);
        assert_eq!(quantize_scalar(0.5), 0.0);
        assert_eq!(quantize_scalar(-0.5), 0.0);
        assert_eq!(quantize_scalar(0.51), 1.0);
        assert_eq!(quantize_scalar(0.9), 1.0);
        assert_eq!(quantize_scalar(-0.9), -1.0);
    }

    proptest! {
        #[test]
        fn softmax_rows_sum_to_one(xs in proptest::collection::vec(-30.0f64..30.0, 1..12)) {
            let s = softmax(&Tensor::vector(xs));
            let total: f64 = s.data().iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-9);
            prop_assert!(s.data().iter().all(|&p| p >= 0.0));
        }

        #[test]
        fn quantize_is_idempotent(xs in proptest::collection::vec(-1.0f64..1.0, 1..16)) {
            let t = Tensor::vector(xs);
            let q = quantize(&t);
            let qq = quantize(&q);
            prop_assert_eq!(qq.data(), q.data());
        }

        #[test]
        fn phi_is_odd_bounded_monotone(x in -60.0f64..60.0, y in -60.0f64..60.0) {
            prop_assert!((phi_scalar(x) + phi_scalar(-x)).abs() < 1e-12);
            // Strictly inside (-1, 1) until tanh itself saturates to 1.0 in f64.
            prop_assert!(phi_scalar(x).abs() <= 1.0);
            if x.abs() < 18.0 {
                prop_assert!(phi_scalar(x).abs() < 1.0);
            }
            let (lo, hi) = if x < y { (x, y) } else { (y, x) };
            prop_assert!(phi_scalar(lo) <= phi_scalar(hi) + 1e-12);
        }
    }
}
