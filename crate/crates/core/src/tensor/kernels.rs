//! Value-level kernels shared by the tape and by the analysis code.
//!
//! Every reduction runs in a fixed index order, so a row's result never
//! depends on which other rows are in the same call. Specialized routing
//! relies on this: splitting rows into CLS and patch groups must reproduce
//! the unsplit computation bit for bit.

use super::{Result, Tensor, TensorError};
use crate::exec;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ElementwiseOp {
    Add,
    Sub,
    Mul,
    Div,
    Gelu,
    Scale(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReduceOp {
    Mean,
    /// Population variance (divides by the extent).
    Var,
    Sum,
    Max,
}

fn as_matrix(t: &Tensor, op: &'static str) -> Result<(usize, usize)> {
    if t.rank() != 2 {
        return Err(TensorError::Contract(format!(
            "{op}: expected a matrix, got shape {:?}",
            t.shape()
        )));
    }
    Ok((t.shape()[0], t.shape()[1]))
}

pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (m, k) = as_matrix(a, "matmul")?;
    let (k2, n) = as_matrix(b, "matmul")?;
    if k != k2 {
        return Err(TensorError::ShapeMismatch {
            op: "matmul",
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    let mut out = vec![0.0; m * n];
    let (ad, bd) = (a.data(), b.data());
    exec::for_each_row_mut(&mut out, n, m * k * n, |i, row| {
        let arow = &ad[i * k..(i + 1) * k];
        for (t, &av) in arow.iter().enumerate() {
            let brow = &bd[t * n..(t + 1) * n];
            for (c, &bv) in row.iter_mut().zip(brow) {
                *c += av * bv;
            }
        }
    });
    Tensor::new([m, n], out)
}

pub fn transpose(a: &Tensor) -> Result<Tensor> {
    let (m, n) = as_matrix(a, "transpose")?;
    let d = a.data();
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            out[j * m + i] = d[i * n + j];
        }
    }
    Tensor::new([n, m], out)
}

pub fn softmax_rows(a: &Tensor) -> Result<Tensor> {
    let n = a.cols();
    let mut out = a.data().to_vec();
    for row in out.chunks_mut(n) {
        softmax_in_place(row);
    }
    Tensor::new(a.shape().to_vec(), out)
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// Standard normal CDF.
pub fn phi(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

/// Exact GELU, x·Φ(x).
pub fn gelu(x: f64) -> f64 {
    x * phi(x)
}

pub fn gelu_grad(x: f64) -> f64 {
    let pdf = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    phi(x) + x * pdf
}

fn broadcast_binary(
    op: &'static str,
    a: &Tensor,
    b: &Tensor,
    f: impl Fn(f64, f64) -> f64,
) -> Result<Tensor> {
    if a.shape() == b.shape() {
        let data = a
            .data()
            .iter()
            .zip(b.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        Tensor::new(a.shape().to_vec(), data)
    } else if b.numel() == 1 {
        let y = b.data()[0];
        Tensor::new(
            a.shape().to_vec(),
            a.data().iter().map(|&x| f(x, y)).collect(),
        )
    } else if a.numel() == 1 {
        let x = a.data()[0];
        Tensor::new(
            b.shape().to_vec(),
            b.data().iter().map(|&y| f(x, y)).collect(),
        )
    } else {
        Err(TensorError::ShapeMismatch {
            op,
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        })
    }
}

pub fn elementwise(op: ElementwiseOp, a: &Tensor, b: Option<&Tensor>) -> Result<Tensor> {
    let need = |name: &'static str| {
        b.ok_or_else(|| TensorError::Contract(format!("{name} needs two operands")))
    };
    match op {
        ElementwiseOp::Add => broadcast_binary("add", a, need("add")?, |x, y| x + y),
        ElementwiseOp::Sub => broadcast_binary("sub", a, need("sub")?, |x, y| x - y),
        ElementwiseOp::Mul => broadcast_binary("mul", a, need("mul")?, |x, y| x * y),
        ElementwiseOp::Div => broadcast_binary("div", a, need("div")?, |x, y| x / y),
        ElementwiseOp::Gelu => Tensor::new(
            a.shape().to_vec(),
            a.data().iter().map(|&x| gelu(x)).collect(),
        ),
        ElementwiseOp::Scale(k) => Tensor::new(
            a.shape().to_vec(),
            a.data().iter().map(|&x| k * x).collect(),
        ),
    }
}

/// Splits a shape around `axis` into (outer, extent, inner) strides.
pub(crate) fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

pub(crate) fn reduced_shape(shape: &[usize], axis: usize) -> Vec<usize> {
    let mut s: Vec<usize> = shape.to_vec();
    s.remove(axis);
    if s.is_empty() {
        s.push(1);
    }
    s
}

pub fn reduce(a: &Tensor, op: ReduceOp, axis: usize) -> Result<Tensor> {
    if axis >= a.rank() {
        return Err(TensorError::Axis {
            op: "reduce",
            axis,
            rank: a.rank(),
        });
    }
    let (outer, extent, inner) = axis_split(a.shape(), axis);
    let d = a.data();
    let mut out = vec![0.0; outer * inner];
    for o in 0..outer {
        for i in 0..inner {
            let at = |t: usize| d[(o * extent + t) * inner + i];
            let v = match op {
                ReduceOp::Sum => (0..extent).map(at).sum(),
                ReduceOp::Mean => (0..extent).map(at).sum::<f64>() / extent as f64,
                ReduceOp::Var => {
                    let mean = (0..extent).map(at).sum::<f64>() / extent as f64;
                    (0..extent).map(|t| (at(t) - mean).powi(2)).sum::<f64>() / extent as f64
                }
                ReduceOp::Max => (0..extent).map(at).fold(f64::NEG_INFINITY, f64::max),
            };
            out[o * inner + i] = v;
        }
    }
    Tensor::new(reduced_shape(a.shape(), axis), out)
}

/// Per-row normalization statistics kept for the backward pass.
#[derive(Debug, Clone)]
pub struct LayerNormCache {
    pub normalized: Vec<f64>,
    pub inv_std: Vec<f64>,
}

/// LayerNorm over the last axis: `(x − mean) / sqrt(var + eps) · γ + β`.
pub fn layer_norm(
    x: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    eps: f64,
) -> Result<(Tensor, LayerNormCache)> {
    let d = x.cols();
    if gamma.numel() != d || beta.numel() != d {
        return Err(TensorError::ShapeMismatch {
            op: "layer_norm",
            lhs: x.shape().to_vec(),
            rhs: gamma.shape().to_vec(),
        });
    }
    let rows = x.rows();
    let mut out = vec![0.0; x.numel()];
    let mut normalized = vec![0.0; x.numel()];
    let mut inv_std = vec![0.0; rows];
    let (g, b) = (gamma.data(), beta.data());
    for r in 0..rows {
        let xr = x.row(r);
        let mean = xr.iter().sum::<f64>() / d as f64;
        let var = xr.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d as f64;
        let is = 1.0 / (var + eps).sqrt();
        inv_std[r] = is;
        for j in 0..d {
            let h = (xr[j] - mean) * is;
            normalized[r * d + j] = h;
            out[r * d + j] = h * g[j] + b[j];
        }
    }
    Ok((
        Tensor::new(x.shape().to_vec(), out)?,
        LayerNormCache {
            normalized,
            inv_std,
        },
    ))
}
