use super::array::{log_softmax_rows, logsumexp, Array};
use super::kernels::{self, ConvGeometry};
use super::NumericsError;

/// Handle to a node recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    Transpose(NodeId),
    Add(NodeId, NodeId),
    AddBias(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    Relu(NodeId),
    Gelu(NodeId),
    LayerNorm {
        x: NodeId,
        gain: NodeId,
        bias: NodeId,
        normed: Vec<f64>,
        inv_std: Vec<f64>,
    },
    LogSoftmax(NodeId),
    Softmax(NodeId),
    LogSumExp(NodeId),
    SliceRows(NodeId, usize),
    ConcatRows(Vec<NodeId>),
    SliceCols(NodeId, usize),
    ConcatCols(Vec<NodeId>),
    Conv1d {
        x: NodeId,
        w: NodeId,
        b: NodeId,
        geo: ConvGeometry,
    },
    Gather(NodeId, Vec<usize>),
    Sum(NodeId),
    /// Scalar whose gradient w.r.t. its input was computed during forward.
    Precomputed(NodeId, Vec<f64>),
}

#[derive(Debug)]
struct Node {
    value: Array,
    op: Op,
    requires_grad: bool,
    trainable: bool,
}

/// Reverse-mode tape. Nodes are appended in creation order, which is a
/// valid topological order, so backward is a single reverse sweep.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
    backward_done: bool,
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const LN_EPS: f64 = 1e-5;

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

    fn push(&mut self, value: Array, op: Op, requires_grad: bool) -> NodeId {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            trainable: false,
        });
        self.grads.push(None);
        NodeId(self.nodes.len() - 1)
    }

    fn rg(&self, ids: &[NodeId]) -> bool {
        ids.iter().any(|id| self.nodes[id.0].requires_grad)
    }

    pub fn value(&self, id: NodeId) -> &Array {
        &self.nodes[id.0].value
    }

    /// Gradient of the last backward pass; `None` if nothing flowed here.
    pub fn grad(&self, id: NodeId) -> Option<&[f64]> {
        self.grads[id.0].as_deref()
    }

    /// Gradient as an array of the node's shape, zeros when nothing flowed.
    pub fn grad_array(&self, id: NodeId) -> Array {
        let shape = self.nodes[id.0].value.shape().to_vec();
        match &self.grads[id.0] {
            Some(g) => Array::new(shape, g.clone()).expect("gradient shape"),
            None => Array::zeros(&shape),
        }
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Array) -> NodeId {
        let id = self.push(value, Op::Leaf, true);
        self.nodes[id.0].trainable = true;
        id
    }

    /// Non-trainable leaf (inputs, fixed tensors).
    pub fn constant(&mut self, value: Array) -> NodeId {
        self.push(value, Op::Leaf, false)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NumericsError> {
        let (m, k) = self.value(a).require_matrix("matmul lhs")?;
        let (k2, n) = self.value(b).require_matrix("matmul rhs")?;
        if k != k2 {
            return Err(NumericsError::Shape(format!(
                "matmul inner dimensions differ: [{m}×{k}] · [{k2}×{n}]"
            )));
        }
        let mut out = vec![0.0; m * n];
        kernels::gemm_nn(self.value(a).data(), self.value(b).data(), &mut out, m, k, n);
        let rg = self.rg(&[a, b]);
        Ok(self.push(Array::from_rows(m, n, out)?, Op::MatMul(a, b), rg))
    }

    pub fn transpose(&mut self, a: NodeId) -> Result<NodeId, NumericsError> {
        let (m, n) = self.value(a).require_matrix("transpose")?;
        let src = self.value(a).data();
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = src[i * n + j];
            }
        }
        let rg = self.rg(&[a]);
        Ok(self.push(Array::from_rows(n, m, out)?, Op::Transpose(a), rg))
    }

    fn same_shape(&self, a: NodeId, b: NodeId, what: &str) -> Result<(), NumericsError> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(NumericsError::Shape(format!(
                "{what}: shapes {:?} and {:?} differ",
                self.value(a).shape(),
                self.value(b).shape()
            )));
        }
        Ok(())
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NumericsError> {
        self.same_shape(a, b, "add")?;
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x + y)
            .collect();
        let shape = self.value(a).shape().to_vec();
        let rg = self.rg(&[a, b]);
        Ok(self.push(Array::new(shape, data)?, Op::Add(a, b), rg))
    }

    /// Adds a length-`n` vector to every row of an `m×n` matrix.
    pub fn add_bias(&mut self, a: NodeId, bias: NodeId) -> Result<NodeId, NumericsError> {
        let (m, n) = self.value(a).require_matrix("add_bias")?;
        if self.value(bias).len() != n {
            return Err(NumericsError::Shape(format!(
                "add_bias: bias of {} values for {n} columns",
                self.value(bias).len()
            )));
        }
        let b = self.value(bias).data();
        let mut out = self.value(a).data().to_vec();
        for row in out.chunks_exact_mut(n) {
            for (o, bv) in row.iter_mut().zip(b) {
                *o += bv;
            }
        }
        let rg = self.rg(&[a, bias]);
        Ok(self.push(Array::from_rows(m, n, out)?, Op::AddBias(a, bias), rg))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NumericsError> {
        self.same_shape(a, b, "mul")?;
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x * y)
            .collect();
        let shape = self.value(a).shape().to_vec();
        let rg = self.rg(&[a, b]);
        Ok(self.push(Array::new(shape, data)?, Op::Mul(a, b), rg))
    }

    pub fn scale(&mut self, a: NodeId, s: f64) -> NodeId {
        let v = self.value(a);
        let value = Array::new(v.shape().to_vec(), v.data().iter().map(|x| x * s).collect())
            .expect("same shape");
        let rg = self.rg(&[a]);
        self.push(value, Op::Scale(a, s), rg)
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a);
        let value = Array::new(v.shape().to_vec(), v.data().iter().map(|x| x.max(0.0)).collect())
            .expect("same shape");
        let rg = self.rg(&[a]);
        self.push(value, Op::Relu(a), rg)
    }

    /// tanh approximation of GELU.
    pub fn gelu(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a);
        let value = Array::new(
            v.shape().to_vec(),
            v.data()
                .iter()
                .map(|&x| 0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh()))
                .collect(),
        )
        .expect("same shape");
        let rg = self.rg(&[a]);
        self.push(value, Op::Gelu(a), rg)
    }

    /// Row-wise layer normalization with learned gain and bias.
    pub fn layer_norm(&mut self, x: NodeId, gain: NodeId, bias: NodeId) -> Result<NodeId, NumericsError> {
        let (m, n) = self.value(x).require_matrix("layer_norm")?;
        if self.value(gain).len() != n || self.value(bias).len() != n {
            return Err(NumericsError::Shape(format!(
                "layer_norm: gain/bias must have {n} values"
            )));
        }
        let src = self.value(x).data();
        let g = self.value(gain).data();
        let b = self.value(bias).data();
        let mut normed = vec![0.0; m * n];
        let mut inv_std = vec![0.0; m];
        let mut out = vec![0.0; m * n];
        for r in 0..m {
            let row = &src[r * n..(r + 1) * n];
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let is = 1.0 / (var + LN_EPS).sqrt();
            inv_std[r] = is;
            for c in 0..n {
                let h = (row[c] - mean) * is;
                normed[r * n + c] = h;
                out[r * n + c] = h * g[c] + b[c];
            }
        }
        let rg = self.rg(&[x, gain, bias]);
        Ok(self.push(
            Array::from_rows(m, n, out)?,
            Op::LayerNorm {
                x,
                gain,
                bias,
                normed,
                inv_std,
            },
            rg,
        ))
    }

    /// Log-softmax over the last axis. Rejects non-finite inputs.
    pub fn log_softmax(&mut self, a: NodeId) -> Result<NodeId, NumericsError> {
        let (m, n) = self.value(a).require_matrix("log_softmax")?;
        if n < 2 {
            return Err(NumericsError::Shape("log_softmax needs at least 2 classes".into()));
        }
        if !self.value(a).is_finite() {
            return Err(NumericsError::NonFinite("log_softmax input"));
        }
        let out = log_softmax_rows(self.value(a).data(), n);
        let rg = self.rg(&[a]);
        Ok(self.push(Array::from_rows(m, n, out)?, Op::LogSoftmax(a), rg))
    }

    pub fn softmax(&mut self, a: NodeId) -> Result<NodeId, NumericsError> {
        let (m, n) = self.value(a).require_matrix("softmax")?;
        if !self.value(a).is_finite() {
            return Err(NumericsError::NonFinite("softmax input"));
        }
        let mut out = log_softmax_rows(self.value(a).data(), n);
        out.iter_mut().for_each(|v| *v = v.exp());
        let rg = self.rg(&[a]);
        Ok(self.push(Array::from_rows(m, n, out)?, Op::Softmax(a), rg))
    }

    /// Row-wise logsumexp of an `m×n` matrix, giving a length-`m` vector.
    pub fn logsumexp_rows(&mut self, a: NodeId) -> Result<NodeId, NumericsError> {
        let (_, n) = self.value(a).require_matrix("logsumexp")?;
        let out: Vec<f64> = self.value(a).data().chunks_exact(n).map(logsumexp).collect();
        let rg = self.rg(&[a]);
        Ok(self.push(Array::vector(out), Op::LogSumExp(a), rg))
    }

    pub fn slice_rows(&mut self, a: NodeId, start: usize, end: usize) -> Result<NodeId, NumericsError> {
        let value = self.value(a).slice_rows(start, end)?;
        let rg = self.rg(&[a]);
        Ok(self.push(value, Op::SliceRows(a, start), rg))
    }

    pub fn concat_rows(&mut self, parts: &[NodeId]) -> Result<NodeId, NumericsError> {
        let Some(&first) = parts.first() else {
            return Err(NumericsError::Shape("concat_rows of nothing".into()));
        };
        let (_, n) = self.value(first).require_matrix("concat_rows")?;
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let (m, c) = self.value(p).require_matrix("concat_rows")?;
            if c != n {
                return Err(NumericsError::Shape(format!(
                    "concat_rows: column count {c} differs from {n}"
                )));
            }
            rows += m;
            data.extend_from_slice(self.value(p).data());
        }
        let rg = self.rg(parts);
        Ok(self.push(Array::from_rows(rows, n, data)?, Op::ConcatRows(parts.to_vec()), rg))
    }

    pub fn slice_cols(&mut self, a: NodeId, start: usize, end: usize) -> Result<NodeId, NumericsError> {
        let (m, n) = self.value(a).require_matrix("slice_cols")?;
        if start > end || end > n {
            return Err(NumericsError::Shape(format!(
                "column range {start}..{end} out of bounds for {n} columns"
            )));
        }
        let w = end - start;
        let src = self.value(a).data();
        let mut out = Vec::with_capacity(m * w);
        for r in 0..m {
            out.extend_from_slice(&src[r * n + start..r * n + end]);
        }
        let rg = self.rg(&[a]);
        Ok(self.push(Array::from_rows(m, w, out)?, Op::SliceCols(a, start), rg))
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId, NumericsError> {
        let Some(&first) = parts.first() else {
            return Err(NumericsError::Shape("concat_cols of nothing".into()));
        };
        let (m, _) = self.value(first).require_matrix("concat_cols")?;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = self.value(p).require_matrix("concat_cols")?;
            if r != m {
                return Err(NumericsError::Shape(format!(
                    "concat_cols: row count {r} differs from {m}"
                )));
            }
            widths.push(c);
        }
        let n: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(m * n);
        for r in 0..m {
            for (&p, &w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.value(p).data()[r * w..(r + 1) * w]);
            }
        }
        let rg = self.rg(parts);
        Ok(self.push(Array::from_rows(m, n, out)?, Op::ConcatCols(parts.to_vec()), rg))
    }

    /// Grouped, strided 1-D convolution along the row (time) axis.
    pub fn conv1d(&mut self, x: NodeId, w: NodeId, b: NodeId, geo: ConvGeometry) -> Result<NodeId, NumericsError> {
        let (t, c) = self.value(x).require_matrix("conv1d input")?;
        if c != geo.in_ch || geo.in_ch % geo.groups != 0 || geo.out_ch % geo.groups != 0 {
            return Err(NumericsError::Shape(format!(
                "conv1d: input has {c} channels, geometry {geo:?}"
            )));
        }
        if self.value(w).len() != geo.weight_len() || self.value(b).len() != geo.out_ch {
            return Err(NumericsError::Shape(format!(
                "conv1d: weight has {} values, bias {}, geometry {geo:?}",
                self.value(w).len(),
                self.value(b).len()
            )));
        }
        let t_out = geo.out_len(t);
        let out = kernels::conv1d_forward(
            self.value(x).data(),
            t,
            self.value(w).data(),
            self.value(b).data(),
            &geo,
        );
        let rg = self.rg(&[x, w, b]);
        Ok(self.push(Array::from_rows(t_out, geo.out_ch, out)?, Op::Conv1d { x, w, b, geo }, rg))
    }

    /// Picks flat-indexed elements into a vector.
    pub fn gather(&mut self, a: NodeId, indices: &[usize]) -> Result<NodeId, NumericsError> {
        let len = self.value(a).len();
        if let Some(&bad) = indices.iter().find(|&&i| i >= len) {
            return Err(NumericsError::Shape(format!("gather index {bad} out of {len}")));
        }
        let src = self.value(a).data();
        let out = indices.iter().map(|&i| src[i]).collect();
        let rg = self.rg(&[a]);
        Ok(self.push(Array::vector(out), Op::Gather(a, indices.to_vec()), rg))
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let s = self.value(a).data().iter().sum();
        let rg = self.rg(&[a]);
        self.push(Array::scalar(s), Op::Sum(a), rg)
    }

    /// Records a scalar computed outside the tape together with its gradient
    /// w.r.t. `input`. Used for fused losses whose adjoint falls out of the
    /// forward computation.
    pub fn scalar_with_gradient(&mut self, input: NodeId, value: f64, grad: Vec<f64>) -> Result<NodeId, NumericsError> {
        if grad.len() != self.value(input).len() {
            return Err(NumericsError::Shape(format!(
                "precomputed gradient has {} values for input of {}",
                grad.len(),
                self.value(input).len()
            )));
        }
        let rg = self.rg(&[input]);
        Ok(self.push(Array::scalar(value), Op::Precomputed(input, grad), rg))
    }

    /// Clears gradients so another backward pass may run.
    pub fn reset_grads(&mut self) {
        self.grads.iter_mut().for_each(|g| *g = None);
        self.backward_done = false;
    }

    /// Indices of trainable leaves, in creation order.
    pub fn trainable(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.trainable)
            .map(|(i, _)| NodeId(i))
    }

    pub fn backward(&mut self, loss: NodeId) -> Result<(), NumericsError> {
        if self.value(loss).len() != 1 {
            return Err(NumericsError::NonScalarLoss(self.value(loss).shape().to_vec()));
        }
        if self.backward_done {
            return Err(NumericsError::BackwardTwice);
        }
        self.backward_done = true;
        self.grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = self.grads[i].take() else { continue };
            self.propagate(i, &g);
            self.grads[i] = Some(g);
        }
        Ok(())
    }

    fn acc(&mut self, id: NodeId) -> Option<&mut [f64]> {
        if !self.nodes[id.0].requires_grad {
            return None;
        }
        let len = self.nodes[id.0].value.len();
        Some(self.grads[id.0].get_or_insert_with(|| vec![0.0; len]).as_mut_slice())
    }

    fn accumulate(&mut self, id: NodeId, delta: &[f64]) {
        if let Some(g) = self.acc(id) {
            for (a, d) in g.iter_mut().zip(delta) {
                *a += d;
            }
        }
    }

    fn propagate(&mut self, i: usize, g: &[f64]) {
        // Temporarily move the op out so we can borrow other nodes mutably.
        let op = std::mem::replace(&mut self.nodes[i].op, Op::Leaf);
        match &op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = self.dims(*a);
                let n = self.dims(*b).1;
                if self.nodes[a.0].requires_grad {
                    let mut da = vec![0.0; m * k];
                    kernels::gemm_nt(g, self.value(*b).data(), &mut da, m, n, k);
                    self.accumulate(*a, &da);
                }
                if self.nodes[b.0].requires_grad {
                    let mut db = vec![0.0; k * n];
                    kernels::gemm_tn(self.value(*a).data(), g, &mut db, m, k, n);
                    self.accumulate(*b, &db);
                }
            }
            Op::Transpose(a) => {
                let (m, n) = self.dims(*a);
                let mut da = vec![0.0; m * n];
                for r in 0..m {
                    for c in 0..n {
                        da[r * n + c] = g[c * m + r];
                    }
                }
                self.accumulate(*a, &da);
            }
            Op::Add(a, b) => {
                self.accumulate(*a, g);
                self.accumulate(*b, g);
            }
            Op::AddBias(a, bias) => {
                self.accumulate(*a, g);
                let n = self.value(*bias).len();
                let mut db = vec![0.0; n];
                for row in g.chunks_exact(n) {
                    for (d, v) in db.iter_mut().zip(row) {
                        *d += v;
                    }
                }
                self.accumulate(*bias, &db);
            }
            Op::Mul(a, b) => {
                let da: Vec<f64> = g.iter().zip(self.value(*b).data()).map(|(x, y)| x * y).collect();
                let db: Vec<f64> = g.iter().zip(self.value(*a).data()).map(|(x, y)| x * y).collect();
                self.accumulate(*a, &da);
                self.accumulate(*b, &db);
            }
            Op::Scale(a, s) => {
                let da: Vec<f64> = g.iter().map(|x| x * s).collect();
                self.accumulate(*a, &da);
            }
            Op::Relu(a) => {
                let da: Vec<f64> = g
                    .iter()
                    .zip(self.value(*a).data())
                    .map(|(d, &x)| if x > 0.0 { *d } else { 0.0 })
                    .collect();
                self.accumulate(*a, &da);
            }
            Op::Gelu(a) => {
                let da: Vec<f64> = g
                    .iter()
                    .zip(self.value(*a).data())
                    .map(|(d, &x)| {
                        let u = GELU_C * (x + 0.044715 * x * x * x);
                        let th = u.tanh();
                        let du = GELU_C * (1.0 + 3.0 * 0.044715 * x * x);
                        d * (0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * du)
                    })
                    .collect();
                self.accumulate(*a, &da);
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                normed,
                inv_std,
            } => {
                let (m, n) = self.dims(*x);
                let gv = self.value(*gain).data().to_vec();
                let mut dgain = vec![0.0; n];
                let mut dbias = vec![0.0; n];
                let mut dx = vec![0.0; m * n];
                for r in 0..m {
                    let gr = &g[r * n..(r + 1) * n];
                    let hr = &normed[r * n..(r + 1) * n];
                    let mut mean_dh = 0.0;
                    let mut mean_dh_h = 0.0;
                    for c in 0..n {
                        dgain[c] += gr[c] * hr[c];
                        dbias[c] += gr[c];
                        let dh = gr[c] * gv[c];
                        mean_dh += dh;
                        mean_dh_h += dh * hr[c];
                    }
                    mean_dh /= n as f64;
                    mean_dh_h /= n as f64;
                    for c in 0..n {
                        let dh = gr[c] * gv[c];
                        dx[r * n + c] = inv_std[r] * (dh - mean_dh - hr[c] * mean_dh_h);
                    }
                }
                self.accumulate(*x, &dx);
                self.accumulate(*gain, &dgain);
                self.accumulate(*bias, &dbias);
            }
            Op::LogSoftmax(a) => {
                let n = self.dims(*a).1;
                let y = self.nodes[i].value.data();
                let mut da = vec![0.0; y.len()];
                for ((dr, gr), yr) in da.chunks_exact_mut(n).zip(g.chunks_exact(n)).zip(y.chunks_exact(n)) {
                    let s: f64 = gr.iter().sum();
                    for c in 0..n {
                        dr[c] = gr[c] - yr[c].exp() * s;
                    }
                }
                self.accumulate(*a, &da);
            }
            Op::Softmax(a) => {
                let n = self.dims(*a).1;
                let y = self.nodes[i].value.data();
                let mut da = vec![0.0; y.len()];
                for ((dr, gr), yr) in da.chunks_exact_mut(n).zip(g.chunks_exact(n)).zip(y.chunks_exact(n)) {
                    let s: f64 = gr.iter().zip(yr).map(|(a, b)| a * b).sum();
                    for c in 0..n {
                        dr[c] = yr[c] * (gr[c] - s);
                    }
                }
                self.accumulate(*a, &da);
            }
            Op::LogSumExp(a) => {
                let n = self.dims(*a).1;
                let x = self.value(*a).data();
                let out = self.nodes[i].value.data();
                let mut da = vec![0.0; x.len()];
                for (r, (dr, xr)) in da.chunks_exact_mut(n).zip(x.chunks_exact(n)).enumerate() {
                    for c in 0..n {
                        dr[c] = g[r] * (xr[c] - out[r]).exp();
                    }
                }
                self.accumulate(*a, &da);
            }
            Op::SliceRows(a, start) => {
                let n = self.dims(*a).1;
                let start = *start;
                if let Some(da) = self.acc(*a) {
                    for (d, v) in da[start * n..start * n + g.len()].iter_mut().zip(g) {
                        *d += v;
                    }
                }
            }
            Op::ConcatRows(parts) => {
                let mut off = 0;
                for &p in parts {
                    let len = self.value(p).len();
                    self.accumulate(p, &g[off..off + len]);
                    off += len;
                }
            }
            Op::SliceCols(a, start) => {
                let n = self.dims(*a).1;
                let w = self.nodes[i].value.cols();
                let start = *start;
                if let Some(da) = self.acc(*a) {
                    for (r, gr) in g.chunks_exact(w).enumerate() {
                        for (d, v) in da[r * n + start..r * n + start + w].iter_mut().zip(gr) {
                            *d += v;
                        }
                    }
                }
            }
            Op::ConcatCols(parts) => {
                let n = self.nodes[i].value.cols();
                let mut off = 0;
                for &p in parts {
                    let (m, w) = self.dims(p);
                    let mut dp = Vec::with_capacity(m * w);
                    for r in 0..m {
                        dp.extend_from_slice(&g[r * n + off..r * n + off + w]);
                    }
                    self.accumulate(p, &dp);
                    off += w;
                }
            }
            Op::Conv1d { x, w, b, geo } => {
                let t = self.dims(*x).0;
                let xv = self.value(*x).data().to_vec();
                let wv = self.value(*w).data().to_vec();
                let mut dx = self.nodes[x.0].requires_grad.then(|| vec![0.0; xv.len()]);
                let mut dw = self.nodes[w.0].requires_grad.then(|| vec![0.0; wv.len()]);
                let mut db = self.nodes[b.0].requires_grad.then(|| vec![0.0; geo.out_ch]);
                kernels::conv1d_backward(
                    &xv,
                    t,
                    &wv,
                    g,
                    geo,
                    dx.as_deref_mut(),
                    dw.as_deref_mut(),
                    db.as_deref_mut(),
                );
                if let Some(dx) = dx {
                    self.accumulate(*x, &dx);
                }
                if let Some(dw) = dw {
                    self.accumulate(*w, &dw);
                }
                if let Some(db) = db {
                    self.accumulate(*b, &db);
                }
            }
            Op::Gather(a, idx) => {
                if let Some(da) = self.acc(*a) {
                    for (&k, v) in idx.iter().zip(g) {
                        da[k] += v;
                    }
                }
            }
            Op::Sum(a) => {
                let s = g[0];
                if let Some(da) = self.acc(*a) {
                    da.iter_mut().for_each(|d| *d += s);
                }
            }
            Op::Precomputed(a, grad) => {
                let s = g[0];
                if let Some(da) = self.acc(*a) {
                    for (d, v) in da.iter_mut().zip(grad) {
                        *d += s * v;
                    }
                }
            }
        }
        self.nodes[i].op = op;
    }

    fn dims(&self, id: NodeId) -> (usize, usize) {
        let v = self.value(id);
        (v.rows(), v.cols())
    }
}
