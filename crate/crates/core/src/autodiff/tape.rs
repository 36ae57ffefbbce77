//! Reverse-mode differentiation over dense `f64` matrices.
//!
//! Every value is a 2-D matrix (vectors are `1 x d`, scalars `1 x 1`). A
//! [`Tape`] records each operation as it is evaluated; [`Tape::backward`]
//! walks the record in reverse and returns the gradient of a scalar node with
//! respect to every node that influences it.

use std::sync::Arc;

use ndarray::{Array2, Axis, Zip};

use crate::graph::Adjacency;

pub type Mat = Array2<f64>;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    /// constant on the left
    ConstMatMul(Arc<Mat>, Var),
    Add(Var, Var),
    /// `x (n x d) + b (1 x d)`
    AddRow(Var, Var),
    AddConst(Var),
    Mul(Var, Var),
    /// `gamma * x + beta` with constant scalars
    Affine(Var, f64),
    /// `s (1 x 1) * x`
    ScalarMul(Var, Var),
    /// `s (n x 1)` scales row i of x
    RowScale(Var, Var),
    Aggregate(Var, Arc<Adjacency>),
    Swish(Var),
    Relu(Var),
    Sigmoid(Var),
    Square(Var),
    MaskMul(Var, Arc<Mat>),
    SegmentMean(Var, Arc<Vec<usize>>),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SelectRows(Var, Arc<Vec<usize>>),
    Column(Var, usize),
    SoftmaxRows(Var),
    SqDist(Var, Var),
    Cosine(Var, Var),
    CrossEntropy(Var, Arc<Vec<usize>>),
    NllProbs(Var, Arc<Vec<usize>>),
    SumAll(Var),
    L2NormalizeRows(Var),
}

#[derive(Debug)]
struct Node {
    value: Mat,
    op: Op,
}

/// Records a computation for reverse-mode differentiation.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    first_nonfinite: Option<(usize, &'static str)>,
}

/// Per-node gradients produced by [`Tape::backward`].
#[derive(Debug)]
pub struct Grads {
    grads: Vec<Option<Mat>>,
}

impl Grads {
    /// Gradient with respect to `v`; `None` when `v` does not reach the output.
    pub fn get(&self, v: Var) -> Option<&Mat> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Mat> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Mat {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[[0, 0]]
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.dim()
    }

    /// First node whose value contained NaN or infinity, with its op name.
    pub fn first_nonfinite(&self) -> Option<(usize, &'static str)> {
        self.first_nonfinite
    }

    fn push(&mut self, value: Mat, op: Op) -> Var {
        if self.first_nonfinite.is_none() && value.iter().any(|x| !x.is_finite()) {
            self.first_nonfinite = Some((self.nodes.len(), op_name(&op)));
        }
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Input or parameter.
    pub fn leaf(&mut self, value: Mat) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    /// `m @ x` for a constant `m`.
    pub fn const_matmul(&mut self, m: Arc<Mat>, x: Var) -> Var {
        let v = m.dot(self.value(x));
        self.push(v, Op::ConstMatMul(m, x))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        self.push(v, Op::Add(a, b))
    }

    /// Adds a `1 x d` row to every row of `x`.
    pub fn add_row(&mut self, x: Var, row: Var) -> Var {
        let v = self.value(x) + self.value(row);
        self.push(v, Op::AddRow(x, row))
    }

    pub fn add_const(&mut self, x: Var, c: &Mat) -> Var {
        let v = self.value(x) + c;
        self.push(v, Op::AddConst(x))
    }

    pub fn add_scalar(&mut self, x: Var, c: f64) -> Var {
        let v = self.value(x) + c;
        self.push(v, Op::AddConst(x))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) * self.value(b);
        self.push(v, Op::Mul(a, b))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        self.affine(x, c, 0.0)
    }

    pub fn affine(&mut self, x: Var, gamma: f64, beta: f64) -> Var {
        let v = self.value(x).mapv(|e| gamma * e + beta);
        self.push(v, Op::Affine(x, gamma))
    }

    /// Multiplies `x` by the `1 x 1` node `s`.
    pub fn scalar_mul(&mut self, s: Var, x: Var) -> Var {
        let k = self.scalar(s);
        let v = self.value(x) * k;
        self.push(v, Op::ScalarMul(s, x))
    }

    /// Scales row `i` of `x` by `s[i, 0]`.
    pub fn row_scale(&mut self, x: Var, s: Var) -> Var {
        let v = self.value(x) * self.value(s);
        self.push(v, Op::RowScale(x, s))
    }

    /// Neighbor sum: `out[v] = sum_{u in N(v)} x[u]`.
    pub fn aggregate(&mut self, x: Var, adj: Arc<Adjacency>) -> Var {
        let v = neighbor_sum(&adj, self.value(x));
        self.push(v, Op::Aggregate(x, adj))
    }

    pub fn swish(&mut self, x: Var) -> Var {
        let v = self.value(x).mapv(|e| e * sigmoid(e));
        self.push(v, Op::Swish(x))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let v = self.value(x).mapv(|e| e.max(0.0));
        self.push(v, Op::Relu(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let v = self.value(x).mapv(sigmoid);
        self.push(v, Op::Sigmoid(x))
    }

    pub fn square(&mut self, x: Var) -> Var {
        let v = self.value(x).mapv(|e| e * e);
        self.push(v, Op::Square(x))
    }

    /// Elementwise product with a constant mask (dropout).
    pub fn mask_mul(&mut self, x: Var, mask: Arc<Mat>) -> Var {
        let v = self.value(x) * &*mask;
        self.push(v, Op::MaskMul(x, mask))
    }

    /// Row means over consecutive segments `offsets[i]..offsets[i + 1]`.
    pub fn segment_mean(&mut self, x: Var, offsets: Arc<Vec<usize>>) -> Var {
        let xv = self.value(x);
        let segs = offsets.len() - 1;
        let mut out = Mat::zeros((segs, xv.ncols()));
        for s in 0..segs {
            let (lo, hi) = (offsets[s], offsets[s + 1]);
            let n = (hi - lo) as f64;
            let mut row = out.row_mut(s);
            for r in lo..hi {
                row += &xv.row(r);
            }
            row.mapv_inplace(|e| e / n);
        }
        self.push(out, Op::SegmentMean(x, offsets))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let v = ndarray::concatenate(Axis(1), &views).expect("row counts must agree");
        self.push(v, Op::ConcatCols(parts.to_vec()))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let v = ndarray::concatenate(Axis(0), &views).expect("column counts must agree");
        self.push(v, Op::ConcatRows(parts.to_vec()))
    }

    /// Gathers rows by index (repetition allowed).
    pub fn select_rows(&mut self, x: Var, rows: Arc<Vec<usize>>) -> Var {
        let v = self.value(x).select(Axis(0), &rows);
        self.push(v, Op::SelectRows(x, rows))
    }

    pub fn column(&mut self, x: Var, j: usize) -> Var {
        let v = self.value(x).column(j).to_owned().insert_axis(Axis(1));
        self.push(v, Op::Column(x, j))
    }

    /// Row-wise softmax. Entries equal to `-inf` get probability exactly 0.
    pub fn softmax_rows(&mut self, x: Var) -> Var {
        let mut v = self.value(x).clone();
        for mut row in v.rows_mut() {
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            row.mapv_inplace(|e| if e == f64::NEG_INFINITY { 0.0 } else { (e - m).exp() });
            let s = row.sum();
            row.mapv_inplace(|e| e / s);
        }
        self.push(v, Op::SoftmaxRows(x))
    }

    /// Row-wise softmax restricted to columns where `keep` is true; masked
    /// columns get probability exactly 0 and no gradient.
    pub fn masked_softmax_rows(&mut self, x: Var, keep: &[bool]) -> Var {
        let (rows, cols) = self.shape(x);
        let mut mask = Mat::zeros((rows, cols));
        for j in 0..cols {
            if !keep[j] {
                mask.column_mut(j).fill(f64::NEG_INFINITY);
            }
        }
        // -inf only ever appears in the constant, never in a recorded value
        let v = self.value(x) + &mask;
        let logits = self.nodes.len();
        self.nodes.push(Node {
            value: v,
            op: Op::AddConst(x),
        });
        self.softmax_rows(Var(logits))
    }

    /// Squared Euclidean distances between rows of `a` (n x d) and `b` (k x d).
    pub fn sq_dist(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        let mut out = Mat::zeros((av.nrows(), bv.nrows()));
        for (i, ar) in av.rows().into_iter().enumerate() {
            for (j, br) in bv.rows().into_iter().enumerate() {
                out[[i, j]] = Zip::from(&ar).and(&br).fold(0.0, |acc, &x, &y| acc + (x - y) * (x - y));
            }
        }
        self.push(out, Op::SqDist(a, b))
    }

    /// Cosine similarity between rows of `a` and rows of `b`; pairs with a
    /// zero-norm row give 0.
    pub fn cosine(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        let an = row_norms(av);
        let bn = row_norms(bv);
        let mut out = av.dot(&bv.t());
        for ((i, j), e) in out.indexed_iter_mut() {
            let d = an[i] * bn[j];
            *e = if d > 0.0 { *e / d } else { 0.0 };
        }
        self.push(out, Op::Cosine(a, b))
    }

    /// Summed softmax cross-entropy of `logits` (n x k) against class indices.
    pub fn cross_entropy(&mut self, logits: Var, targets: Arc<Vec<usize>>) -> Var {
        let lv = self.value(logits);
        let mut total = 0.0;
        for (row, &t) in lv.rows().into_iter().zip(targets.iter()) {
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + row.iter().map(|&e| (e - m).exp()).sum::<f64>().ln();
            total += lse - row[t];
        }
        self.push(Mat::from_elem((1, 1), total), Op::CrossEntropy(logits, targets))
    }

    /// Summed negative log-likelihood of already-normalized probabilities.
    pub fn nll_probs(&mut self, probs: Var, targets: Arc<Vec<usize>>) -> Var {
        let pv = self.value(probs);
        let total: f64 = targets.iter().enumerate().map(|(i, &t)| -pv[[i, t]].ln()).sum();
        self.push(Mat::from_elem((1, 1), total), Op::NllProbs(probs, targets))
    }

    /// Rows scaled to unit Euclidean norm; zero rows stay zero.
    pub fn l2_normalize_rows(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let norms = row_norms(xv);
        let mut out = xv.clone();
        for (mut row, &n) in out.rows_mut().into_iter().zip(&norms) {
            if n > 0.0 {
                row /= n;
            }
        }
        self.push(out, Op::L2NormalizeRows(x))
    }

    pub fn sum_all(&mut self, x: Var) -> Var {
        let v = self.value(x).sum();
        self.push(Mat::from_elem((1, 1), v), Op::SumAll(x))
    }

    /// Gradients of the scalar node `out` with respect to all nodes.
    pub fn backward(&self, out: Var) -> Grads {
        assert_eq!(self.shape(out), (1, 1), "backward needs a scalar output");
        let mut grads: Vec<Option<Mat>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[out.0] = Some(Mat::ones((1, 1)));
        for idx in (0..=out.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Grads { grads }
    }

    fn propagate(&self, idx: usize, g: &Mat, grads: &mut [Option<Mat>]) {
        let node = &self.nodes[idx];
        let val = |v: Var| &self.nodes[v.0].value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                accumulate(grads, *a, g.dot(&val(*b).t()));
                accumulate(grads, *b, val(*a).t().dot(g));
            }
            Op::ConstMatMul(m, x) => accumulate(grads, *x, m.t().dot(g)),
            Op::Add(a, b) => {
                accumulate(grads, *a, g.clone());
                accumulate(grads, *b, g.clone());
            }
            Op::AddRow(x, row) => {
                accumulate(grads, *x, g.clone());
                accumulate(grads, *row, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
            }
            Op::AddConst(x) => accumulate(grads, *x, g.clone()),
            Op::Mul(a, b) => {
                accumulate(grads, *a, g * val(*b));
                accumulate(grads, *b, g * val(*a));
            }
            Op::Affine(x, gamma) => accumulate(grads, *x, g * *gamma),
            Op::ScalarMul(s, x) => {
                let k = val(*s)[[0, 0]];
                let ds = (g * val(*x)).sum();
                accumulate(grads, *s, Mat::from_elem((1, 1), ds));
                accumulate(grads, *x, g * k);
            }
            Op::RowScale(x, s) => {
                accumulate(grads, *x, g * val(*s));
                let ds = (g * val(*x)).sum_axis(Axis(1)).insert_axis(Axis(1));
                accumulate(grads, *s, ds);
            }
            // symmetric adjacency: the adjoint of a neighbor sum is itself
            Op::Aggregate(x, adj) => accumulate(grads, *x, neighbor_sum(adj, g)),
            Op::Swish(x) => {
                let d = val(*x).mapv(|e| {
                    let s = sigmoid(e);
                    s + e * s * (1.0 - s)
                });
                accumulate(grads, *x, g * &d);
            }
            Op::Relu(x) => {
                let d = val(*x).mapv(|e| if e > 0.0 { 1.0 } else { 0.0 });
                accumulate(grads, *x, g * &d);
            }
            Op::Sigmoid(x) => {
                let d = node.value.mapv(|s| s * (1.0 - s));
                accumulate(grads, *x, g * &d);
            }
            Op::Square(x) => accumulate(grads, *x, g * &(val(*x) * 2.0)),
            Op::MaskMul(x, mask) => accumulate(grads, *x, g * &**mask),
            Op::SegmentMean(x, offsets) => {
                let (rows, cols) = val(*x).dim();
                let mut dx = Mat::zeros((rows, cols));
                for s in 0..offsets.len() - 1 {
                    let (lo, hi) = (offsets[s], offsets[s + 1]);
                    let share = g.row(s).mapv(|e| e / (hi - lo) as f64);
                    for r in lo..hi {
                        dx.row_mut(r).assign(&share);
                    }
                }
                accumulate(grads, *x, dx);
            }
            Op::ConcatCols(parts) => {
                let mut at = 0;
                for &p in parts {
                    let w = val(p).ncols();
                    accumulate(grads, p, g.slice(ndarray::s![.., at..at + w]).to_owned());
                    at += w;
                }
            }
            Op::ConcatRows(parts) => {
                let mut at = 0;
                for &p in parts {
                    let h = val(p).nrows();
                    accumulate(grads, p, g.slice(ndarray::s![at..at + h, ..]).to_owned());
                    at += h;
                }
            }
            Op::SelectRows(x, rows) => {
                let mut dx = Mat::zeros(val(*x).dim());
                for (i, &r) in rows.iter().enumerate() {
                    let mut dst = dx.row_mut(r);
                    dst += &g.row(i);
                }
                accumulate(grads, *x, dx);
            }
            Op::Column(x, j) => {
                let mut dx = Mat::zeros(val(*x).dim());
                dx.column_mut(*j).assign(&g.column(0));
                accumulate(grads, *x, dx);
            }
            Op::SoftmaxRows(x) => {
                let p = &node.value;
                let dot = (g * p).sum_axis(Axis(1)).insert_axis(Axis(1));
                let dx = p * &(g - &dot);
                accumulate(grads, *x, dx);
            }
            Op::SqDist(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                let mut da = Mat::zeros(av.dim());
                let mut db = Mat::zeros(bv.dim());
                for i in 0..av.nrows() {
                    for j in 0..bv.nrows() {
                        let w = 2.0 * g[[i, j]];
                        if w == 0.0 {
                            continue;
                        }
                        for c in 0..av.ncols() {
                            let diff = av[[i, c]] - bv[[j, c]];
                            da[[i, c]] += w * diff;
                            db[[j, c]] -= w * diff;
                        }
                    }
                }
                accumulate(grads, *a, da);
                accumulate(grads, *b, db);
            }
            Op::Cosine(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                let cos = &node.value;
                let an = row_norms(av);
                let bn = row_norms(bv);
                let mut da = Mat::zeros(av.dim());
                let mut db = Mat::zeros(bv.dim());
                for i in 0..av.nrows() {
                    for j in 0..bv.nrows() {
                        let d = an[i] * bn[j];
                        if d == 0.0 {
                            continue;
                        }
                        let w = g[[i, j]];
                        let c = cos[[i, j]];
                        for k in 0..av.ncols() {
                            da[[i, k]] += w * (bv[[j, k]] / d - c * av[[i, k]] / (an[i] * an[i]));
                            db[[j, k]] += w * (av[[i, k]] / d - c * bv[[j, k]] / (bn[j] * bn[j]));
                        }
                    }
                }
                accumulate(grads, *a, da);
                accumulate(grads, *b, db);
            }
            Op::CrossEntropy(logits, targets) => {
                let lv = val(*logits);
                let scale = g[[0, 0]];
                let mut dl = lv.clone();
                for (mut row, &t) in dl.rows_mut().into_iter().zip(targets.iter()) {
                    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    row.mapv_inplace(|e| (e - m).exp());
                    let s = row.sum();
                    row.mapv_inplace(|e| scale * e / s);
                    row[t] -= scale;
                }
                accumulate(grads, *logits, dl);
            }
            Op::NllProbs(probs, targets) => {
                let pv = val(*probs);
                let mut dp = Mat::zeros(pv.dim());
                for (i, &t) in targets.iter().enumerate() {
                    dp[[i, t]] = -g[[0, 0]] / pv[[i, t]];
                }
                accumulate(grads, *probs, dp);
            }
            Op::L2NormalizeRows(x) => {
                let norms = row_norms(val(*x));
                let y = &node.value;
                let mut dx = Mat::zeros(y.dim());
                for i in 0..y.nrows() {
                    if norms[i] == 0.0 {
                        continue;
                    }
                    let dot = y.row(i).dot(&g.row(i));
                    for k in 0..y.ncols() {
                        dx[[i, k]] = (g[[i, k]] - y[[i, k]] * dot) / norms[i];
                    }
                }
                accumulate(grads, *x, dx);
            }
            Op::SumAll(x) => {
                accumulate(grads, *x, Mat::from_elem(val(*x).dim(), g[[0, 0]]));
            }
        }
    }
}

fn accumulate(grads: &mut [Option<Mat>], v: Var, g: Mat) {
    match &mut grads[v.0] {
        Some(existing) => *existing += &g,
        slot @ None => *slot = Some(g),
    }
}

fn neighbor_sum(adj: &Adjacency, x: &Mat) -> Mat {
    let mut out = Mat::zeros(x.dim());
    for v in 0..adj.n_nodes() {
        let mut row = out.row_mut(v);
        for &u in adj.neighbors(v) {
            row += &x.row(u);
        }
    }
    out
}

fn row_norms(x: &Mat) -> Vec<f64> {
    x.rows().into_iter().map(|r| r.dot(&r).sqrt()).collect()
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn op_name(op: &Op) -> &'static str {
    match op {
        Op::Leaf => "leaf",
        Op::MatMul(..) => "matmul",
        Op::ConstMatMul(..) => "const_matmul",
        Op::Add(..) => "add",
        Op::AddRow(..) => "add_row",
        Op::AddConst(..) => "add_const",
        Op::Mul(..) => "mul",
        Op::Affine(..) => "affine",
        Op::ScalarMul(..) => "scalar_mul",
        Op::RowScale(..) => "row_scale",
        Op::Aggregate(..) => "aggregate",
        Op::Swish(..) => "swish",
        Op::Relu(..) => "relu",
        Op::Sigmoid(..) => "sigmoid",
        Op::Square(..) => "square",
        Op::MaskMul(..) => "mask_mul",
        Op::SegmentMean(..) => "segment_mean",
        Op::ConcatCols(..) => "concat_cols",
        Op::ConcatRows(..) => "concat_rows",
        Op::SelectRows(..) => "select_rows",
        Op::Column(..) => "column",
        Op::SoftmaxRows(..) => "softmax_rows",
        Op::SqDist(..) => "sq_dist",
        Op::Cosine(..) => "cosine",
        Op::CrossEntropy(..) => "cross_entropy",
        Op::NllProbs(..) => "nll_probs",
        Op::SumAll(..) => "sum_all",
        Op::L2NormalizeRows(..) => "l2_normalize_rows",
    }
}
