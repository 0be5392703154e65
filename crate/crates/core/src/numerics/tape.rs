//! Reverse-mode differentiation over row-major matrices.
//!
//! A [`Tape`] records every forward operation together with the inputs it
//! needs for its vector-Jacobian product. Parameters are read in place from a
//! borrowed [`ParamStore`]; [`Tape::backward`] returns a [`Gradients`] value
//! aligned with that store.

use std::collections::HashMap;

use super::tensor::sigmoid;
use super::{Gradients, NumericsError, ParamId, ParamStore};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

#[derive(Debug)]
enum Op {
    Constant,
    Param(ParamId),
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    AddRow(NodeId, NodeId),
    Mul(NodeId, NodeId),
    OneMinus(NodeId),
    Tanh(NodeId),
    Sigmoid(NodeId),
    Scale(NodeId, f64),
    ConstMul(NodeId, Vec<f64>),
    Concat(Vec<NodeId>),
    Slice(NodeId, usize),
    Gather(NodeId, Vec<usize>),
    Blend {
        new: NodeId,
        old: NodeId,
        mask: Vec<f64>,
    },
    MaskedSoftmax(NodeId),
    Stack(Vec<NodeId>),
    AdditiveScores {
        proj: NodeId,
        keys: NodeId,
        v: NodeId,
        len: usize,
        tanh: Vec<f64>,
    },
    AttendSum {
        alpha: NodeId,
        values: NodeId,
        len: usize,
    },
    CrossEntropy {
        logits: NodeId,
        probs: Vec<f64>,
        targets: Vec<usize>,
        weights: Vec<f64>,
    },
    SumAll(NodeId),
}

#[derive(Debug)]
struct Node {
    rows: usize,
    cols: usize,
    // Empty for parameter leaves, which are read from the store.
    value: Vec<f64>,
    op: Op,
}

/// Gradient tape for one forward/backward pass.
pub struct Tape<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
    param_nodes: HashMap<ParamId, NodeId>,
}

fn shape_err(op: &'static str, a: (usize, usize), b: (usize, usize)) -> NumericsError {
    NumericsError::ShapeMismatch {
        op,
        left: vec![a.0, a.1],
        right: vec![b.0, b.1],
    }
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Self {
            params,
            nodes: Vec::new(),
            param_nodes: HashMap::new(),
        }
    }

    pub fn params(&self) -> &'p ParamStore {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn shape(&self, id: NodeId) -> (usize, usize) {
        let n = &self.nodes[id.0];
        (n.rows, n.cols)
    }

    pub fn value(&self, id: NodeId) -> &[f64] {
        let n = &self.nodes[id.0];
        match n.op {
            Op::Param(p) => self.params.value(p).data(),
            _ => &n.value,
        }
    }

    /// Value of a `1 x 1` node.
    pub fn scalar(&self, id: NodeId) -> Option<f64> {
        match self.shape(id) {
            (1, 1) => Some(self.value(id)[0]),
            _ => None,
        }
    }

    fn push(&mut self, rows: usize, cols: usize, value: Vec<f64>, op: Op) -> NodeId {
        debug_assert!(matches!(op, Op::Param(_)) || value.len() == rows * cols);
        self.nodes.push(Node {
            rows,
            cols,
            value,
            op,
        });
        NodeId(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, rows: usize, cols: usize, value: Vec<f64>) -> Result<NodeId, NumericsError> {
        if value.len() != rows * cols {
            return Err(NumericsError::DataLength {
                shape: vec![rows, cols],
                len: value.len(),
            });
        }
        Ok(self.push(rows, cols, value, Op::Constant))
    }

    pub fn zeros(&mut self, rows: usize, cols: usize) -> NodeId {
        self.push(rows, cols, vec![0.0; rows * cols], Op::Constant)
    }

    /// Leaf node for a parameter. Repeated calls return the same node.
    pub fn param(&mut self, id: ParamId) -> NodeId {
        if let Some(&n) = self.param_nodes.get(&id) {
            return n;
        }
        let t = self.params.value(id);
        let node = self.push(t.rows(), t.cols(), Vec::new(), Op::Param(id));
        self.param_nodes.insert(id, node);
        node
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NumericsError> {
        let (m, k) = self.shape(a);
        let (k2, n) = self.shape(b);
        if k != k2 {
            return Err(shape_err("matmul", (m, k), (k2, n)));
        }
        let av = self.value(a);
        let bv = self.value(b);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let orow = &mut out[i * n..(i + 1) * n];
            for (kk, &x) in av[i * k..(i + 1) * k].iter().enumerate() {
                let brow = &bv[kk * n..(kk + 1) * n];
                for (o, &w) in orow.iter_mut().zip(brow) {
                    *o += x * w;
                }
            }
        }
        Ok(self.push(m, n, out, Op::MatMul(a, b)))
    }

    fn same_shape(&self, op: &'static str, a: NodeId, b: NodeId) -> Result<(usize, usize), NumericsError> {
        let sa = self.shape(a);
        let sb = self.shape(b);
        if sa != sb {
            return Err(shape_err(op, sa, sb));
        }
        Ok(sa)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NumericsError> {
        let (r, c) = self.same_shape("add", a, b)?;
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x + y).collect();
        Ok(self.push(r, c, out, Op::Add(a, b)))
    }

    /// Adds a `1 x c` row to every row of `a`.
    pub fn add_row(&mut self, a: NodeId, row: NodeId) -> Result<NodeId, NumericsError> {
        let (r, c) = self.shape(a);
        if self.shape(row) != (1, c) {
            return Err(shape_err("add_row", (r, c), self.shape(row)));
        }
        let bv = self.value(row);
        let out = self
            .value(a)
            .chunks(c)
            .flat_map(|ar| ar.iter().zip(bv).map(|(x, y)| x + y))
            .collect();
        Ok(self.push(r, c, out, Op::AddRow(a, row)))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NumericsError> {
        let (r, c) = self.same_shape("mul", a, b)?;
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x * y).collect();
        Ok(self.push(r, c, out, Op::Mul(a, b)))
    }

    pub fn one_minus(&mut self, a: NodeId) -> NodeId {
        let (r, c) = self.shape(a);
        let out = self.value(a).iter().map(|x| 1.0 - x).collect();
        self.push(r, c, out, Op::OneMinus(a))
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let (r, c) = self.shape(a);
        let out = self.value(a).iter().map(|x| x.tanh()).collect();
        self.push(r, c, out, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let (r, c) = self.shape(a);
        let out = self.value(a).iter().map(|&x| sigmoid(x)).collect();
        self.push(r, c, out, Op::Sigmoid(a))
    }

    pub fn scale(&mut self, a: NodeId, factor: f64) -> NodeId {
        let (r, c) = self.shape(a);
        let out = self.value(a).iter().map(|x| x * factor).collect();
        self.push(r, c, out, Op::Scale(a, factor))
    }

    /// Elementwise product with a constant (used for dropout masks).
    pub fn const_mul(&mut self, a: NodeId, factors: Vec<f64>) -> Result<NodeId, NumericsError> {
        let (r, c) = self.shape(a);
        if factors.len() != r * c {
            return Err(shape_err("const_mul", (r, c), (factors.len(), 1)));
        }
        let out = self.value(a).iter().zip(&factors).map(|(x, f)| x * f).collect();
        Ok(self.push(r, c, out, Op::ConstMul(a, factors)))
    }

    /// Column-wise concatenation of nodes with equal row counts.
    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId, NumericsError> {
        let Some(&first) = parts.first() else {
            return Err(NumericsError::Empty("concat"));
        };
        let rows = self.shape(first).0;
        let mut cols = 0;
        for &p in parts {
            let (r, c) = self.shape(p);
            if r != rows {
                return Err(shape_err("concat", self.shape(first), (r, c)));
            }
            cols += c;
        }
        let mut out = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for &p in parts {
                let c = self.shape(p).1;
                out.extend_from_slice(&self.value(p)[i * c..(i + 1) * c]);
            }
        }
        Ok(self.push(rows, cols, out, Op::Concat(parts.to_vec())))
    }

    /// Columns `start..start + len` of `a`.
    pub fn slice(&mut self, a: NodeId, start: usize, len: usize) -> Result<NodeId, NumericsError> {
        let (r, c) = self.shape(a);
        if len == 0 || start + len > c {
            return Err(shape_err("slice", (r, c), (start, len)));
        }
        let av = self.value(a);
        let out = (0..r)
            .flat_map(|i| av[i * c + start..i * c + start + len].iter().copied())
            .collect();
        Ok(self.push(r, len, out, Op::Slice(a, start)))
    }

    /// Row lookup: output row `i` is row `ids[i]` of `table`.
    pub fn gather(&mut self, table: NodeId, ids: &[usize]) -> Result<NodeId, NumericsError> {
        let (r, c) = self.shape(table);
        if let Some(&bad) = ids.iter().find(|&&i| i >= r) {
            return Err(NumericsError::IndexOutOfRange { op: "gather", index: bad, len: r });
        }
        if ids.is_empty() {
            return Err(NumericsError::Empty("gather"));
        }
        let tv = self.value(table);
        let out = ids.iter().flat_map(|&i| tv[i * c..(i + 1) * c].iter().copied()).collect();
        Ok(self.push(ids.len(), c, out, Op::Gather(table, ids.to_vec())))
    }

    /// Row-wise select: `mask[i] * new[i] + (1 - mask[i]) * old[i]`, with one
    /// constant mask value per row.
    pub fn blend(&mut self, new: NodeId, old: NodeId, mask: &[f64]) -> Result<NodeId, NumericsError> {
        let (r, c) = self.same_shape("blend", new, old)?;
        if mask.len() != r {
            return Err(shape_err("blend", (r, c), (mask.len(), 1)));
        }
        let nv = self.value(new);
        let ov = self.value(old);
        let mut out = Vec::with_capacity(r * c);
        for i in 0..r {
            let m = mask[i];
            for j in 0..c {
                out.push(m * nv[i * c + j] + (1.0 - m) * ov[i * c + j]);
            }
        }
        Ok(self.push(
            r,
            c,
            out,
            Op::Blend {
                new,
                old,
                mask: mask.to_vec(),
            },
        ))
    }

    /// Row-wise softmax restricted to positions where `mask` is true.
    /// Masked positions receive exactly zero.
    pub fn masked_softmax(&mut self, a: NodeId, mask: &[bool]) -> Result<NodeId, NumericsError> {
        let (r, c) = self.shape(a);
        if mask.len() != r * c {
            return Err(shape_err("masked_softmax", (r, c), (mask.len(), 1)));
        }
        let av = self.value(a);
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            let row = &av[i * c..(i + 1) * c];
            let m = &mask[i * c..(i + 1) * c];
            masked_softmax_into(row, m, &mut out[i * c..(i + 1) * c])
                .ok_or(NumericsError::AllMasked)?;
        }
        Ok(self.push(r, c, out, Op::MaskedSoftmax(a)))
    }

    /// Interleaves `parts` (each `b x d`) into a `(b * len) x d` matrix whose
    /// row `i * len + t` is row `i` of `parts[t]`.
    pub fn stack(&mut self, parts: &[NodeId]) -> Result<NodeId, NumericsError> {
        let Some(&first) = parts.first() else {
            return Err(NumericsError::Empty("stack"));
        };
        let (b, d) = self.shape(first);
        for &p in parts {
            if self.shape(p) != (b, d) {
                return Err(shape_err("stack", (b, d), self.shape(p)));
            }
        }
        let len = parts.len();
        let mut out = Vec::with_capacity(b * len * d);
        for i in 0..b {
            for &p in parts {
                out.extend_from_slice(&self.value(p)[i * d..(i + 1) * d]);
            }
        }
        Ok(self.push(b * len, d, out, Op::Stack(parts.to_vec())))
    }

    /// Additive attention scores.
    ///
    /// `proj` is `b x a`, `keys` is `(b * len) x a` laid out as by [`Tape::stack`],
    /// `v` is `a x 1`. Output is `b x len` with
    /// `out[i][t] = sum_k v[k] * tanh(proj[i][k] + keys[i * len + t][k])`.
    pub fn additive_scores(&mut self, proj: NodeId, keys: NodeId, v: NodeId) -> Result<NodeId, NumericsError> {
        let (b, a) = self.shape(proj);
        let (bl, a2) = self.shape(keys);
        if a != a2 || bl % b != 0 {
            return Err(shape_err("additive_scores", (b, a), (bl, a2)));
        }
        if self.shape(v) != (a, 1) {
            return Err(shape_err("additive_scores", (a, 1), self.shape(v)));
        }
        let len = bl / b;
        let pv = self.value(proj);
        let kv = self.value(keys);
        let vv = self.value(v);
        let mut tanh = vec![0.0; bl * a];
        let mut out = vec![0.0; b * len];
        for i in 0..b {
            let prow = &pv[i * a..(i + 1) * a];
            for t in 0..len {
                let r = i * len + t;
                let krow = &kv[r * a..(r + 1) * a];
                let trow = &mut tanh[r * a..(r + 1) * a];
                let mut s = 0.0;
                for k in 0..a {
                    let th = (prow[k] + krow[k]).tanh();
                    trow[k] = th;
                    s += vv[k] * th;
                }
                out[r] = s;
            }
        }
        Ok(self.push(
            b,
            len,
            out,
            Op::AdditiveScores {
                proj,
                keys,
                v,
                len,
                tanh,
            },
        ))
    }

    /// Weighted sum of stacked rows: `out[i] = sum_t alpha[i][t] * values[i * len + t]`.
    pub fn attend_sum(&mut self, alpha: NodeId, values: NodeId) -> Result<NodeId, NumericsError> {
        let (b, len) = self.shape(alpha);
        let (bl, d) = self.shape(values);
        if bl != b * len {
            return Err(shape_err("attend_sum", (b, len), (bl, d)));
        }
        let av = self.value(alpha);
        let vv = self.value(values);
        let mut out = vec![0.0; b * d];
        for i in 0..b {
            let orow = &mut out[i * d..(i + 1) * d];
            for t in 0..len {
                let w = av[i * len + t];
                let r = i * len + t;
                for (o, &x) in orow.iter_mut().zip(&vv[r * d..(r + 1) * d]) {
                    *o += w * x;
                }
            }
        }
        Ok(self.push(b, d, out, Op::AttendSum { alpha, values, len }))
    }

    /// Per-row negative log-likelihood of `targets` under a softmax of
    /// `logits` restricted to `support`, multiplied by `weights`. Output is
    /// `b x 1`. Rows with zero weight contribute exactly zero.
    pub fn cross_entropy(
        &mut self,
        logits: NodeId,
        support: &[bool],
        targets: &[usize],
        weights: &[f64],
    ) -> Result<NodeId, NumericsError> {
        let (b, v) = self.shape(logits);
        if support.len() != v || targets.len() != b || weights.len() != b {
            return Err(shape_err("cross_entropy", (b, v), (targets.len(), support.len())));
        }
        let lv = self.value(logits);
        let mut probs = vec![0.0; b * v];
        let mut out = vec![0.0; b];
        for i in 0..b {
            if weights[i] == 0.0 {
                continue;
            }
            let y = targets[i];
            if y >= v || !support[y] {
                return Err(NumericsError::IndexOutOfRange {
                    op: "cross_entropy",
                    index: y,
                    len: v,
                });
            }
            let row = &lv[i * v..(i + 1) * v];
            let lse = masked_log_sum_exp(row, support).ok_or(NumericsError::AllMasked)?;
            masked_softmax_into(row, support, &mut probs[i * v..(i + 1) * v])
                .ok_or(NumericsError::AllMasked)?;
            out[i] = weights[i] * (lse - row[y]);
        }
        Ok(self.push(
            b,
            1,
            out,
            Op::CrossEntropy {
                logits,
                probs,
                targets: targets.to_vec(),
                weights: weights.to_vec(),
            },
        ))
    }

    /// Sum of all entries as a `1 x 1` node.
    pub fn sum_all(&mut self, a: NodeId) -> NodeId {
        let s = self.value(a).iter().sum();
        self.push(1, 1, vec![s], Op::SumAll(a))
    }

    /// Reverse pass from a scalar node. Parameters the loss does not reach
    /// get zero gradients.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients, NumericsError> {
        let (r, c) = self.shape(loss);
        if (r, c) != (1, 1) {
            return Err(NumericsError::NonScalarLoss(vec![r, c]));
        }
        let mut grads: Vec<Option<Vec<f64>>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);
        let mut out = Gradients::zeros_like(self.params);

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            let (rows, cols) = (node.rows, node.cols);
            match &node.op {
                Op::Constant => {}
                Op::Param(p) => {
                    for (o, v) in out.get_mut(*p).data_mut().iter_mut().zip(&g) {
                        *o += v;
                    }
                }
                Op::MatMul(a, b) => {
                    let (m, k) = self.shape(*a);
                    let n = cols;
                    let av = self.value(*a);
                    let bv = self.value(*b);
                    {
                        let ga = acc(&mut grads, *a, m * k);
                        for i in 0..m {
                            let grow = &g[i * n..(i + 1) * n];
                            for kk in 0..k {
                                let brow = &bv[kk * n..(kk + 1) * n];
                                let mut s = 0.0;
                                for (x, y) in grow.iter().zip(brow) {
                                    s += x * y;
                                }
                                ga[i * k + kk] += s;
                            }
                        }
                    }
                    let gb = acc(&mut grads, *b, k * n);
                    for i in 0..m {
                        let grow = &g[i * n..(i + 1) * n];
                        for kk in 0..k {
                            let x = av[i * k + kk];
                            if x == 0.0 {
                                continue;
                            }
                            let brow = &mut gb[kk * n..(kk + 1) * n];
                            for (o, y) in brow.iter_mut().zip(grow) {
                                *o += x * y;
                            }
                        }
                    }
                }
                Op::Add(a, b) => {
                    add_into(acc(&mut grads, *a, g.len()), &g);
                    add_into(acc(&mut grads, *b, g.len()), &g);
                }
                Op::AddRow(a, row) => {
                    add_into(acc(&mut grads, *a, g.len()), &g);
                    let gr = acc(&mut grads, *row, cols);
                    for chunk in g.chunks(cols) {
                        add_into(gr, chunk);
                    }
                }
                Op::Mul(a, b) => {
                    let av = self.value(*a);
                    let bv = self.value(*b);
                    {
                        let ga = acc(&mut grads, *a, g.len());
                        for ((o, gi), y) in ga.iter_mut().zip(&g).zip(bv) {
                            *o += gi * y;
                        }
                    }
                    let gb = acc(&mut grads, *b, g.len());
                    for ((o, gi), x) in gb.iter_mut().zip(&g).zip(av) {
                        *o += gi * x;
                    }
                }
                Op::OneMinus(a) => {
                    let ga = acc(&mut grads, *a, g.len());
                    for (o, gi) in ga.iter_mut().zip(&g) {
                        *o -= gi;
                    }
                }
                Op::Tanh(a) => {
                    let ga = acc(&mut grads, *a, g.len());
                    for ((o, gi), y) in ga.iter_mut().zip(&g).zip(&node.value) {
                        *o += gi * (1.0 - y * y);
                    }
                }
                Op::Sigmoid(a) => {
                    let ga = acc(&mut grads, *a, g.len());
                    for ((o, gi), y) in ga.iter_mut().zip(&g).zip(&node.value) {
                        *o += gi * y * (1.0 - y);
                    }
                }
                Op::Scale(a, f) => {
                    let ga = acc(&mut grads, *a, g.len());
                    for (o, gi) in ga.iter_mut().zip(&g) {
                        *o += gi * f;
                    }
                }
                Op::ConstMul(a, f) => {
                    let ga = acc(&mut grads, *a, g.len());
                    for ((o, gi), fi) in ga.iter_mut().zip(&g).zip(f) {
                        *o += gi * fi;
                    }
                }
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let pc = self.shape(*p).1;
                        let gp = acc(&mut grads, *p, rows * pc);
                        for i in 0..rows {
                            add_into(
                                &mut gp[i * pc..(i + 1) * pc],
                                &g[i * cols + offset..i * cols + offset + pc],
                            );
                        }
                        offset += pc;
                    }
                }
                Op::Slice(a, start) => {
                    let ac = self.shape(*a).1;
                    let ga = acc(&mut grads, *a, rows * ac);
                    for i in 0..rows {
                        add_into(
                            &mut ga[i * ac + start..i * ac + start + cols],
                            &g[i * cols..(i + 1) * cols],
                        );
                    }
                }
                Op::Gather(table, ids) => {
                    let (tr, tc) = self.shape(*table);
                    let gt = acc(&mut grads, *table, tr * tc);
                    for (i, &id) in ids.iter().enumerate() {
                        add_into(&mut gt[id * tc..(id + 1) * tc], &g[i * tc..(i + 1) * tc]);
                    }
                }
                Op::Blend { new, old, mask } => {
                    {
                        let gn = acc(&mut grads, *new, g.len());
                        for i in 0..rows {
                            let m = mask[i];
                            for j in 0..cols {
                                gn[i * cols + j] += m * g[i * cols + j];
                            }
                        }
                    }
                    let go = acc(&mut grads, *old, g.len());
                    for i in 0..rows {
                        let m = 1.0 - mask[i];
                        for j in 0..cols {
                            go[i * cols + j] += m * g[i * cols + j];
                        }
                    }
                }
                Op::MaskedSoftmax(a) => {
                    let ga = acc(&mut grads, *a, g.len());
                    for i in 0..rows {
                        let y = &node.value[i * cols..(i + 1) * cols];
                        let gi = &g[i * cols..(i + 1) * cols];
                        let dot: f64 = y.iter().zip(gi).map(|(p, q)| p * q).sum();
                        for j in 0..cols {
                            ga[i * cols + j] += y[j] * (gi[j] - dot);
                        }
                    }
                }
                Op::Stack(parts) => {
                    let len = parts.len();
                    let (b, d) = self.shape(parts[0]);
                    for (t, p) in parts.iter().enumerate() {
                        let gp = acc(&mut grads, *p, b * d);
                        for i in 0..b {
                            let r = i * len + t;
                            add_into(&mut gp[i * d..(i + 1) * d], &g[r * d..(r + 1) * d]);
                        }
                    }
                }
                Op::AdditiveScores {
                    proj,
                    keys,
                    v,
                    len,
                    tanh,
                } => {
                    let (b, a) = self.shape(*proj);
                    let len = *len;
                    let vv = self.value(*v);
                    // d(score)/d(pre-activation), shared by proj and keys.
                    let mut dpre = vec![0.0; b * len * a];
                    let mut dv = vec![0.0; a];
                    for i in 0..b {
                        for t in 0..len {
                            let r = i * len + t;
                            let gs = g[r];
                            if gs == 0.0 {
                                continue;
                            }
                            let trow = &tanh[r * a..(r + 1) * a];
                            for k in 0..a {
                                dpre[r * a + k] = gs * vv[k] * (1.0 - trow[k] * trow[k]);
                                dv[k] += gs * trow[k];
                            }
                        }
                    }
                    {
                        let gp = acc(&mut grads, *proj, b * a);
                        for i in 0..b {
                            for t in 0..len {
                                let r = i * len + t;
                                add_into(&mut gp[i * a..(i + 1) * a], &dpre[r * a..(r + 1) * a]);
                            }
                        }
                    }
                    add_into(acc(&mut grads, *keys, b * len * a), &dpre);
                    add_into(acc(&mut grads, *v, a), &dv);
                }
                Op::AttendSum { alpha, values, len } => {
                    let len = *len;
                    let b = rows;
                    let d = cols;
                    let av = self.value(*alpha);
                    let vv = self.value(*values);
                    {
                        let ga = acc(&mut grads, *alpha, b * len);
                        for i in 0..b {
                            let grow = &g[i * d..(i + 1) * d];
                            for t in 0..len {
                                let r = i * len + t;
                                let dot: f64 = grow.iter().zip(&vv[r * d..(r + 1) * d]).map(|(x, y)| x * y).sum();
                                ga[r] += dot;
                            }
                        }
                    }
                    let gv = acc(&mut grads, *values, b * len * d);
                    for i in 0..b {
                        let grow = &g[i * d..(i + 1) * d];
                        for t in 0..len {
                            let r = i * len + t;
                            let w = av[r];
                            for (o, x) in gv[r * d..(r + 1) * d].iter_mut().zip(grow) {
                                *o += w * x;
                            }
                        }
                    }
                }
                Op::CrossEntropy {
                    logits,
                    probs,
                    targets,
                    weights,
                } => {
                    let (b, v) = self.shape(*logits);
                    let gl = acc(&mut grads, *logits, b * v);
                    for i in 0..b {
                        let w = weights[i] * g[i];
                        if w == 0.0 {
                            continue;
                        }
                        for j in 0..v {
                            gl[i * v + j] += w * probs[i * v + j];
                        }
                        gl[i * v + targets[i]] -= w;
                    }
                }
                Op::SumAll(a) => {
                    let n = self.value(*a).len();
                    let ga = acc(&mut grads, *a, n);
                    for o in ga.iter_mut() {
                        *o += g[0];
                    }
                }
            }
        }
        Ok(out)
    }
}

fn acc(grads: &mut [Option<Vec<f64>>], id: NodeId, len: usize) -> &mut [f64] {
    grads[id.0].get_or_insert_with(|| vec![0.0; len])
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

/// Numerically stable softmax over the positions where `mask` holds; masked
/// entries are set to exactly zero. Returns `None` when everything is masked.
pub fn masked_softmax_into(x: &[f64], mask: &[bool], out: &mut [f64]) -> Option<()> {
    let max = x
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(&v, _)| v)
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return None;
    }
    let mut z = 0.0;
    for ((o, &v), &m) in out.iter_mut().zip(x).zip(mask) {
        *o = if m { (v - max).exp() } else { 0.0 };
        z += *o;
    }
    for o in out.iter_mut() {
        *o /= z;
    }
    Some(())
}

/// `log(sum_{mask} exp(x))`, computed stably.
pub fn masked_log_sum_exp(x: &[f64], mask: &[bool]) -> Option<f64> {
    let max = x
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(&v, _)| v)
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return None;
    }
    let s: f64 = x
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(&v, _)| (v - max).exp())
        .sum();
    Some(max + s.ln())
}
