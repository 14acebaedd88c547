use super::kernels::{self, ElementwiseOp, LayerNormCache, ReduceOp};
use super::{Result, Tensor, TensorError};

/// Handle to a node recorded on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy)]
enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Binary(BinOp, Var, Var),
    Scale(Var, f64),
    Gelu(Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    Transpose(Var),
    Softmax(Var),
    Reduce(ReduceOp, Var, usize),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        cache: LayerNormCache,
    },
    SelectRows(Var, Vec<usize>),
    StitchRows(Vec<(Var, Vec<usize>)>),
    SliceCols(Var, usize, usize),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    Reshape(Var),
    SumAll(Var),
    MeanAll(Var),
    CrossEntropy {
        logits: Var,
        labels: Vec<usize>,
        probs: Vec<f64>,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// A reverse-mode tape. Nodes are appended in execution order, so every
/// node's parents precede it and reverse iteration is a valid topological
/// order for the backward sweep. One graph per forward pass.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    madds: u64,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Multiply-adds performed by matmuls recorded so far.
    pub fn multiply_adds(&self) -> u64 {
        self.madds
    }

    /// Records a leaf. Its `requires_grad` flag decides whether backward
    /// accumulates into it.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf)
    }

    pub fn param(&mut self, t: Tensor) -> Var {
        self.leaf(t.with_requires_grad(true))
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.leaf(t.with_requires_grad(false))
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Accumulated gradient of a leaf, if backward reached it.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].value.grad()
    }

    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.value.zero_grad();
        }
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    fn needs_grad(&self, v: Var) -> bool {
        self.nodes[v.0].value.requires_grad()
    }

    fn derived(&mut self, value: Tensor, op: Op, parents: &[Var]) -> Var {
        let rg = parents.iter().any(|&p| self.needs_grad(p));
        self.push(value.with_requires_grad(rg), op)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = kernels::matmul(self.value(a), self.value(b))?;
        let (m, k) = (self.value(a).shape()[0], self.value(a).shape()[1]);
        self.madds += (m * k * self.value(b).shape()[1]) as u64;
        Ok(self.derived(out, Op::MatMul(a, b), &[a, b]))
    }

    pub fn elementwise(&mut self, op: ElementwiseOp, a: Var, b: Option<Var>) -> Result<Var> {
        let bin = |o| {
            b.map(|b| (o, b))
                .ok_or_else(|| TensorError::Contract(format!("{op:?} needs two operands")))
        };
        match op {
            ElementwiseOp::Add => {
                let (o, b) = bin(BinOp::Add)?;
                self.binary(o, a, b)
            }
            ElementwiseOp::Sub => {
                let (o, b) = bin(BinOp::Sub)?;
                self.binary(o, a, b)
            }
            ElementwiseOp::Mul => {
                let (o, b) = bin(BinOp::Mul)?;
                self.binary(o, a, b)
            }
            ElementwiseOp::Div => {
                let (o, b) = bin(BinOp::Div)?;
                self.binary(o, a, b)
            }
            ElementwiseOp::Gelu => self.gelu(a),
            ElementwiseOp::Scale(k) => self.scale(a, k),
        }
    }

    fn binary(&mut self, op: BinOp, a: Var, b: Var) -> Result<Var> {
        let eop = match op {
            BinOp::Add => ElementwiseOp::Add,
            BinOp::Sub => ElementwiseOp::Sub,
            BinOp::Mul => ElementwiseOp::Mul,
            BinOp::Div => ElementwiseOp::Div,
        };
        let out = kernels::elementwise(eop, self.value(a), Some(self.value(b)))?;
        Ok(self.derived(out, Op::Binary(op, a, b), &[a, b]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinOp::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinOp::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinOp::Mul, a, b)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinOp::Div, a, b)
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Result<Var> {
        let out = kernels::elementwise(ElementwiseOp::Scale(k), self.value(a), None)?;
        Ok(self.derived(out, Op::Scale(a, k), &[a]))
    }

    pub fn gelu(&mut self, a: Var) -> Result<Var> {
        let out = kernels::elementwise(ElementwiseOp::Gelu, self.value(a), None)?;
        Ok(self.derived(out, Op::Gelu(a), &[a]))
    }

    fn check_row_operand(&self, op: &'static str, x: Var, r: Var) -> Result<()> {
        if self.value(r).numel() != self.value(x).cols() {
            return Err(TensorError::ShapeMismatch {
                op,
                lhs: self.value(x).shape().to_vec(),
                rhs: self.value(r).shape().to_vec(),
            });
        }
        Ok(())
    }

    /// Adds a length-`cols` vector to every row.
    pub fn add_row(&mut self, x: Var, r: Var) -> Result<Var> {
        self.check_row_operand("add_row", x, r)?;
        let (xv, rv) = (self.value(x), self.value(r));
        let c = xv.cols();
        let data = xv
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| v + rv.data()[i % c])
            .collect();
        let out = Tensor::new(xv.shape().to_vec(), data)?;
        Ok(self.derived(out, Op::AddRow(x, r), &[x, r]))
    }

    /// Multiplies column `j` of every row by `r[j]`.
    pub fn mul_row(&mut self, x: Var, r: Var) -> Result<Var> {
        self.check_row_operand("mul_row", x, r)?;
        let (xv, rv) = (self.value(x), self.value(r));
        let c = xv.cols();
        let data = xv
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| v * rv.data()[i % c])
            .collect();
        let out = Tensor::new(xv.shape().to_vec(), data)?;
        Ok(self.derived(out, Op::MulRow(x, r), &[x, r]))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let out = kernels::transpose(self.value(a))?;
        Ok(self.derived(out, Op::Transpose(a), &[a]))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let out = kernels::softmax_rows(self.value(a))?;
        Ok(self.derived(out, Op::Softmax(a), &[a]))
    }

    pub fn reduce(&mut self, op: ReduceOp, a: Var, axis: usize) -> Result<Var> {
        let out = kernels::reduce(self.value(a), op, axis)?;
        Ok(self.derived(out, Op::Reduce(op, a, axis), &[a]))
    }

    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        let (out, cache) =
            kernels::layer_norm(self.value(x), self.value(gamma), self.value(beta), eps)?;
        Ok(self.derived(
            out,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                cache,
            },
            &[x, gamma, beta],
        ))
    }

    /// Gathers the listed rows of a matrix, in the listed order.
    pub fn select_rows(&mut self, x: Var, rows: &[usize]) -> Result<Var> {
        let xv = self.value(x);
        let (n, c) = (xv.rows(), xv.cols());
        let mut data = Vec::with_capacity(rows.len() * c);
        for &r in rows {
            if r >= n {
                return Err(TensorError::Index {
                    op: "select_rows",
                    index: r,
                    extent: n,
                });
            }
            data.extend_from_slice(xv.row(r));
        }
        let out = Tensor::new([rows.len(), c], data)?;
        Ok(self.derived(out, Op::SelectRows(x, rows.to_vec()), &[x]))
    }

    /// Inverse of a partition into row groups: row `k` of part `p` lands at
    /// output row `parts[p].1[k]`. The index lists must tile `0..n` exactly.
    pub fn stitch_rows(&mut self, parts: &[(Var, &[usize])]) -> Result<Var> {
        let n: usize = parts.iter().map(|(_, idx)| idx.len()).sum();
        let c = self.value(parts[0].0).cols();
        let mut data = vec![0.0; n * c];
        let mut seen = vec![false; n];
        for (v, idx) in parts {
            let pv = self.value(*v);
            if pv.cols() != c || pv.rows() != idx.len() {
                return Err(TensorError::ShapeMismatch {
                    op: "stitch_rows",
                    lhs: pv.shape().to_vec(),
                    rhs: vec![idx.len(), c],
                });
            }
            for (k, &dst) in idx.iter().enumerate() {
                if dst >= n || seen[dst] {
                    return Err(TensorError::Contract(format!(
                        "stitch_rows: row {dst} duplicated or out of range"
                    )));
                }
                seen[dst] = true;
                data[dst * c..(dst + 1) * c].copy_from_slice(pv.row(k));
            }
        }
        let out = Tensor::new([n, c], data)?;
        let owned: Vec<(Var, Vec<usize>)> = parts.iter().map(|(v, i)| (*v, i.to_vec())).collect();
        let parents: Vec<Var> = parts.iter().map(|(v, _)| *v).collect();
        Ok(self.derived(out, Op::StitchRows(owned), &parents))
    }

    pub fn slice_cols(&mut self, x: Var, lo: usize, hi: usize) -> Result<Var> {
        let xv = self.value(x);
        let c = xv.cols();
        if lo >= hi || hi > c {
            return Err(TensorError::Index {
                op: "slice_cols",
                index: hi,
                extent: c,
            });
        }
        let data = (0..xv.rows())
            .flat_map(|r| xv.row(r)[lo..hi].iter().copied())
            .collect();
        let out = Tensor::new([xv.rows(), hi - lo], data)?;
        Ok(self.derived(out, Op::SliceCols(x, lo, hi), &[x]))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let n = self.value(parts[0]).rows();
        if parts.iter().any(|&p| self.value(p).rows() != n) {
            return Err(TensorError::Contract(
                "concat_cols: row counts differ".into(),
            ));
        }
        let total: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut data = Vec::with_capacity(n * total);
        for r in 0..n {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(r));
            }
        }
        let out = Tensor::new([n, total], data)?;
        Ok(self.derived(out, Op::ConcatCols(parts.to_vec()), parts))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let c = self.value(parts[0]).cols();
        if parts.iter().any(|&p| self.value(p).cols() != c) {
            return Err(TensorError::Contract(
                "concat_rows: column counts differ".into(),
            ));
        }
        let mut data = Vec::new();
        for &p in parts {
            data.extend_from_slice(self.value(p).data());
        }
        let n = data.len() / c;
        let out = Tensor::new([n, c], data)?;
        Ok(self.derived(out, Op::ConcatRows(parts.to_vec()), parts))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(x).reshape(shape.to_vec())?;
        Ok(self.derived(out, Op::Reshape(x), &[x]))
    }

    pub fn sum_all(&mut self, x: Var) -> Result<Var> {
        let s = self.value(x).data().iter().sum();
        Ok(self.derived(Tensor::scalar(s), Op::SumAll(x), &[x]))
    }

    pub fn mean_all(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        let s = xv.data().iter().sum::<f64>() / xv.numel() as f64;
        Ok(self.derived(Tensor::scalar(s), Op::MeanAll(x), &[x]))
    }

    /// Mean over rows of `-log softmax(logits[i])[labels[i]]`.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let lv = self.value(logits);
        let (n, c) = (lv.rows(), lv.cols());
        if labels.len() != n {
            return Err(TensorError::Contract(format!(
                "cross_entropy: {} labels for {n} rows",
                labels.len()
            )));
        }
        let mut probs = lv.data().to_vec();
        let mut loss = 0.0;
        for (r, &y) in labels.iter().enumerate() {
            if y >= c {
                return Err(TensorError::Index {
                    op: "cross_entropy",
                    index: y,
                    extent: c,
                });
            }
            let row = lv.row(r);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            loss += lse - row[y];
            kernels::softmax_in_place(&mut probs[r * c..(r + 1) * c]);
        }
        let out = Tensor::scalar(loss / n as f64);
        Ok(self.derived(
            out,
            Op::CrossEntropy {
                logits,
                labels: labels.to_vec(),
                probs,
            },
            &[logits],
        ))
    }

    /// Reverse sweep from a scalar root. Leaf gradients accumulate, so a
    /// second call without [`Graph::zero_grad`] doubles them.
    pub fn backward(&mut self, root: Var) -> Result<()> {
        let rv = self.value(root);
        if rv.numel() != 1 {
            return Err(TensorError::NonScalarRoot(rv.shape().to_vec()));
        }
        if !rv.requires_grad() {
            return Ok(());
        }
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; root.0 + 1];
        adj[root.0] = Some(vec![1.0]);
        for i in (0..=root.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            if !self.nodes[i].value.requires_grad() {
                continue;
            }
            if let Op::Leaf = self.nodes[i].op {
                self.nodes[i].value.accumulate_grad(&g);
                continue;
            }
            self.propagate(i, &g, &mut adj);
        }
        Ok(())
    }

    fn send(&self, adj: &mut [Option<Vec<f64>>], v: Var, delta: Vec<f64>) {
        if !self.needs_grad(v) {
            return;
        }
        match &mut adj[v.0] {
            Some(acc) => acc.iter_mut().zip(&delta).for_each(|(a, d)| *a += d),
            slot => *slot = Some(delta),
        }
    }

    /// Folds a gradient computed for a broadcast operand back to its shape.
    fn unbroadcast(&self, v: Var, g: Vec<f64>) -> Vec<f64> {
        if self.value(v).numel() == 1 && g.len() != 1 {
            vec![g.iter().sum()]
        } else {
            g
        }
    }

    fn propagate(&self, i: usize, g: &[f64], adj: &mut [Option<Vec<f64>>]) {
        let out = &self.nodes[i].value;
        match &self.nodes[i].op {
            Op::Leaf => unreachable!(),
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (m, k, n) = (av.shape()[0], av.shape()[1], bv.shape()[1]);
                if self.needs_grad(*a) {
                    let mut ga = vec![0.0; m * k];
                    for r in 0..m {
                        for t in 0..k {
                            let brow = &bv.data()[t * n..(t + 1) * n];
                            ga[r * k + t] = g[r * n..(r + 1) * n]
                                .iter()
                                .zip(brow)
                                .map(|(x, y)| x * y)
                                .sum();
                        }
                    }
                    self.send(adj, *a, ga);
                }
                if self.needs_grad(*b) {
                    let mut gb = vec![0.0; k * n];
                    for r in 0..m {
                        for t in 0..k {
                            let a_rt = av.data()[r * k + t];
                            for c in 0..n {
                                gb[t * n + c] += a_rt * g[r * n + c];
                            }
                        }
                    }
                    self.send(adj, *b, gb);
                }
            }
            Op::Binary(op, a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let len = out.numel();
                let at = |t: &Tensor, j: usize| t.data()[if t.numel() == 1 { 0 } else { j }];
                let (mut ga, mut gb) = (vec![0.0; len], vec![0.0; len]);
                for j in 0..len {
                    let (x, y) = (at(av, j), at(bv, j));
                    let (dx, dy) = match op {
                        BinOp::Add => (1.0, 1.0),
                        BinOp::Sub => (1.0, -1.0),
                        BinOp::Mul => (y, x),
                        BinOp::Div => (1.0 / y, -x / (y * y)),
                    };
                    ga[j] = g[j] * dx;
                    gb[j] = g[j] * dy;
                }
                let ga = self.unbroadcast(*a, ga);
                let gb = self.unbroadcast(*b, gb);
                self.send(adj, *a, ga);
                self.send(adj, *b, gb);
            }
            Op::Scale(a, k) => self.send(adj, *a, g.iter().map(|v| v * k).collect()),
            Op::Gelu(a) => {
                let x = self.value(*a).data();
                let d = g
                    .iter()
                    .zip(x)
                    .map(|(g, &x)| g * kernels::gelu_grad(x))
                    .collect();
                self.send(adj, *a, d);
            }
            Op::AddRow(x, r) => {
                let c = out.cols();
                let mut gr = vec![0.0; c];
                for (j, v) in g.iter().enumerate() {
                    gr[j % c] += v;
                }
                self.send(adj, *x, g.to_vec());
                self.send(adj, *r, gr);
            }
            Op::MulRow(x, r) => {
                let (xv, rv) = (self.value(*x), self.value(*r));
                let c = out.cols();
                let mut gr = vec![0.0; c];
                let mut gx = vec![0.0; g.len()];
                for (j, v) in g.iter().enumerate() {
                    gr[j % c] += v * xv.data()[j];
                    gx[j] = v * rv.data()[j % c];
                }
                self.send(adj, *x, gx);
                self.send(adj, *r, gr);
            }
            Op::Transpose(a) => {
                let (m, n) = (out.shape()[0], out.shape()[1]);
                let mut ga = vec![0.0; m * n];
                for r in 0..m {
                    for c in 0..n {
                        ga[c * m + r] = g[r * n + c];
                    }
                }
                self.send(adj, *a, ga);
            }
            Op::Softmax(a) => {
                let c = out.cols();
                let y = out.data();
                let mut ga = vec![0.0; y.len()];
                for r in 0..out.rows() {
                    let s = r * c..(r + 1) * c;
                    let dot: f64 = g[s.clone()]
                        .iter()
                        .zip(&y[s.clone()])
                        .map(|(a, b)| a * b)
                        .sum();
                    for j in s {
                        ga[j] = y[j] * (g[j] - dot);
                    }
                }
                self.send(adj, *a, ga);
            }
            Op::Reduce(op, a, axis) => {
                let av = self.value(*a);
                let (outer, extent, inner) = kernels::axis_split(av.shape(), *axis);
                let d = av.data();
                let mut ga = vec![0.0; d.len()];
                for o in 0..outer {
                    for k in 0..inner {
                        let gi = g[o * inner + k];
                        let idx = |t: usize| (o * extent + t) * inner + k;
                        match op {
                            ReduceOp::Sum => (0..extent).for_each(|t| ga[idx(t)] = gi),
                            ReduceOp::Mean => {
                                (0..extent).for_each(|t| ga[idx(t)] = gi / extent as f64)
                            }
                            ReduceOp::Var => {
                                let mean =
                                    (0..extent).map(|t| d[idx(t)]).sum::<f64>() / extent as f64;
                                for t in 0..extent {
                                    ga[idx(t)] = gi * 2.0 * (d[idx(t)] - mean) / extent as f64;
                                }
                            }
                            ReduceOp::Max => {
                                let target = out.data()[o * inner + k];
                                let first = (0..extent).find(|&t| d[idx(t)] == target);
                                if let Some(t) = first {
                                    ga[idx(t)] = gi;
                                }
                            }
                        }
                    }
                }
                self.send(adj, *a, ga);
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                cache,
            } => {
                let c = out.cols();
                let gam = self.value(*gamma).data();
                let mut gx = vec![0.0; g.len()];
                let mut gg = vec![0.0; c];
                let mut gb = vec![0.0; c];
                for r in 0..out.rows() {
                    let s = r * c;
                    let h = &cache.normalized[s..s + c];
                    let mut sum_dh = 0.0;
                    let mut sum_dh_h = 0.0;
                    for j in 0..c {
                        let dh = g[s + j] * gam[j];
                        sum_dh += dh;
                        sum_dh_h += dh * h[j];
                        gg[j] += g[s + j] * h[j];
                        gb[j] += g[s + j];
                    }
                    let is = cache.inv_std[r];
                    for j in 0..c {
                        let dh = g[s + j] * gam[j];
                        gx[s + j] = is / c as f64 * (c as f64 * dh - sum_dh - h[j] * sum_dh_h);
                    }
                }
                self.send(adj, *x, gx);
                self.send(adj, *gamma, gg);
                self.send(adj, *beta, gb);
            }
            Op::SelectRows(x, rows) => {
                let c = out.cols();
                let mut gx = vec![0.0; self.value(*x).numel()];
                for (k, &r) in rows.iter().enumerate() {
                    for j in 0..c {
                        gx[r * c + j] += g[k * c + j];
                    }
                }
                self.send(adj, *x, gx);
            }
            Op::StitchRows(parts) => {
                let c = out.cols();
                for (v, idx) in parts {
                    let gp = idx
                        .iter()
                        .flat_map(|&dst| g[dst * c..(dst + 1) * c].iter().copied())
                        .collect();
                    self.send(adj, *v, gp);
                }
            }
            Op::SliceCols(x, lo, hi) => {
                let xv = self.value(*x);
                let (c, w) = (xv.cols(), hi - lo);
                let mut gx = vec![0.0; xv.numel()];
                for r in 0..xv.rows() {
                    gx[r * c + lo..r * c + hi].copy_from_slice(&g[r * w..(r + 1) * w]);
                }
                self.send(adj, *x, gx);
            }
            Op::ConcatCols(parts) => {
                let total = out.cols();
                let mut off = 0;
                for &p in parts {
                    let w = self.value(p).cols();
                    let gp = (0..out.rows())
                        .flat_map(|r| g[r * total + off..r * total + off + w].iter().copied())
                        .collect();
                    self.send(adj, p, gp);
                    off += w;
                }
            }
            Op::ConcatRows(parts) => {
                let mut off = 0;
                for &p in parts {
                    let len = self.value(p).numel();
                    self.send(adj, p, g[off..off + len].to_vec());
                    off += len;
                }
            }
            Op::Reshape(x) => self.send(adj, *x, g.to_vec()),
            Op::SumAll(x) => {
                let n = self.value(*x).numel();
                self.send(adj, *x, vec![g[0]; n]);
            }
            Op::MeanAll(x) => {
                let n = self.value(*x).numel();
                self.send(adj, *x, vec![g[0] / n as f64; n]);
            }
            Op::CrossEntropy {
                logits,
                labels,
                probs,
            } => {
                let c = self.value(*logits).cols();
                let scale = g[0] / labels.len() as f64;
                let mut gl: Vec<f64> = probs.iter().map(|p| p * scale).collect();
                for (r, &y) in labels.iter().enumerate() {
                    gl[r * c + y] -= scale;
                }
                self.send(adj, *logits, gl);
            }
        }
    }
}
