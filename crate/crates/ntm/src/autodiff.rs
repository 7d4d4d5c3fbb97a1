//! Reverse-mode differentiation over matrix-valued nodes.
//!
//! A [`Tape`] records every value together with the op that produced it.
//! Nodes are appended in evaluation order, so a single reverse sweep visits
//! children before parents.

use matcap_core::Mat;
use thiserror::Error;

/// Denominator offset in cosine similarity.
pub const COSINE_DELTA: f64 = 1e-8;
/// Offset inside the log of the sharpening power.
pub const SHARPEN_FLOOR: f64 = 1e-16;
/// Probability clamp applied before the logs of the cross-entropy.
pub const BCE_CLAMP: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AdError {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("loss must be 1x1, got {rows}x{cols}")]
    NotScalarLoss { rows: usize, cols: usize },
}

pub type AdResult<T> = Result<T, AdError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeRef(usize);

impl NodeRef {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Param(usize),
    MatMul(usize, usize),
    /// Keeps `U^T X` for the backward pass.
    Bilinear(usize, usize, usize, Mat),
    Add(usize, usize),
    Sub(usize, usize),
    Hadamard(usize, usize),
    Scale(usize, f64),
    Affine(usize, f64),
    ScaleBy(usize, usize),
    Tanh(usize),
    Sigmoid(usize),
    Relu(usize),
    Softplus(usize),
    SoftmaxVec(usize),
    CosineSim(usize, usize),
    RowCosine(usize, usize),
    CircularConvolve(usize, usize),
    SharpenPow(usize, usize),
    SumElements(usize),
    Bce(usize, Mat),
    Reshape(usize),
    Transpose(usize),
    OuterSum(usize, usize),
    MemWrite(usize, usize, usize, usize),
}

#[derive(Clone, Debug)]
struct Node {
    value: Mat,
    op: Op,
    requires_grad: bool,
}

/// Gradients of a loss with respect to parameter ids.
#[derive(Clone, Debug, Default)]
pub struct Gradients {
    grads: Vec<Option<Mat>>,
}

impl Gradients {
    pub fn get(&self, id: usize) -> Option<&Mat> {
        self.grads.get(id).and_then(|g| g.as_ref())
    }

    pub fn into_vec(self) -> Vec<Option<Mat>> {
        self.grads
    }
}

#[derive(Clone, Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

fn shift_offset(j: usize, k: usize) -> isize {
    j as isize - (k as isize - 1) / 2
}

fn same_shape(op: &'static str, a: &Mat, b: &Mat) -> AdResult<()> {
    if a.shape() == b.shape() {
        Ok(())
    } else {
        Err(AdError::ShapeMismatch {
            op,
            left: a.shape(),
            right: b.shape(),
        })
    }
}

fn scalar_shape(op: &'static str, a: &Mat) -> AdResult<()> {
    if a.shape() == (1, 1) {
        Ok(())
    } else {
        Err(AdError::ShapeMismatch {
            op,
            left: (1, 1),
            right: a.shape(),
        })
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn reset(&mut self) {
        self.nodes.clear();
    }

    pub fn value(&self, n: NodeRef) -> &Mat {
        &self.nodes[n.0].value
    }

    pub fn scalar(&self, n: NodeRef) -> f64 {
        self.value(n)[(0, 0)]
    }

    fn push(&mut self, value: Mat, op: Op, parents: &[usize]) -> NodeRef {
        let requires_grad = match op {
            Op::Param(_) => true,
            _ => parents.iter().any(|p| self.nodes[*p].requires_grad),
        };
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        NodeRef(self.nodes.len() - 1)
    }

    /// Constant input.
    pub fn leaf(&mut self, value: Mat) -> NodeRef {
        self.push(value, Op::Leaf, &[])
    }

    /// Trainable input; its gradient is reported under `id`.
    pub fn param(&mut self, id: usize, value: Mat) -> NodeRef {
        self.push(value, Op::Param(id), &[])
    }

    pub fn matmul(&mut self, a: NodeRef, b: NodeRef) -> AdResult<NodeRef> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.cols() != vb.rows() {
            return Err(AdError::ShapeMismatch {
                op: "matmul",
                left: va.shape(),
                right: vb.shape(),
            });
        }
        let v = va.matmul(vb);
        Ok(self.push(v, Op::MatMul(a.0, b.0), &[a.0, b.0]))
    }

    /// `U^T X V`.
    pub fn bilinear(&mut self, u: NodeRef, x: NodeRef, v: NodeRef) -> AdResult<NodeRef> {
        let (vu, vx, vv) = (self.value(u), self.value(x), self.value(v));
        if vu.rows() != vx.rows() {
            return Err(AdError::ShapeMismatch {
                op: "bilinear U^T X",
                left: vu.shape(),
                right: vx.shape(),
            });
        }
        if vx.cols() != vv.rows() {
            return Err(AdError::ShapeMismatch {
                op: "bilinear X V",
                left: vx.shape(),
                right: vv.shape(),
            });
        }
        let p = vu.t_matmul(vx);
        let val = p.matmul(vv);
        Ok(self.push(val, Op::Bilinear(u.0, x.0, v.0, p), &[u.0, x.0, v.0]))
    }

    pub fn add(&mut self, a: NodeRef, b: NodeRef) -> AdResult<NodeRef> {
        same_shape("add", self.value(a), self.value(b))?;
        let v = self.value(a).add(self.value(b));
        Ok(self.push(v, Op::Add(a.0, b.0), &[a.0, b.0]))
    }

    pub fn sub(&mut self, a: NodeRef, b: NodeRef) -> AdResult<NodeRef> {
        same_shape("sub", self.value(a), self.value(b))?;
        let v = self.value(a).sub(self.value(b));
        Ok(self.push(v, Op::Sub(a.0, b.0), &[a.0, b.0]))
    }

    pub fn hadamard(&mut self, a: NodeRef, b: NodeRef) -> AdResult<NodeRef> {
        same_shape("hadamard", self.value(a), self.value(b))?;
        let v = self.value(a).hadamard(self.value(b));
        Ok(self.push(v, Op::Hadamard(a.0, b.0), &[a.0, b.0]))
    }

    pub fn scale(&mut self, a: NodeRef, s: f64) -> NodeRef {
        let v = self.value(a).scale(s);
        self.push(v, Op::Scale(a.0, s), &[a.0])
    }

    /// `a x + b` elementwise.
    pub fn affine(&mut self, x: NodeRef, a: f64, b: f64) -> NodeRef {
        let v = self.value(x).map(|t| a * t + b);
        self.push(v, Op::Affine(x.0, a), &[x.0])
    }

    /// `1 - x`.
    pub fn one_minus(&mut self, x: NodeRef) -> NodeRef {
        self.affine(x, -1.0, 1.0)
    }

    /// Matrix `a` times the 1x1 node `s`.
    pub fn scale_by(&mut self, s: NodeRef, a: NodeRef) -> AdResult<NodeRef> {
        scalar_shape("scale_by", self.value(s))?;
        let v = self.value(a).scale(self.scalar(s));
        Ok(self.push(v, Op::ScaleBy(s.0, a.0), &[s.0, a.0]))
    }

    pub fn tanh(&mut self, a: NodeRef) -> NodeRef {
        let v = self.value(a).map(f64::tanh);
        self.push(v, Op::Tanh(a.0), &[a.0])
    }

    pub fn sigmoid(&mut self, a: NodeRef) -> NodeRef {
        let v = self.value(a).map(sigmoid);
        self.push(v, Op::Sigmoid(a.0), &[a.0])
    }

    pub fn relu(&mut self, a: NodeRef) -> NodeRef {
        let v = self.value(a).map(|x| x.max(0.0));
        self.push(v, Op::Relu(a.0), &[a.0])
    }

    pub fn softplus(&mut self, a: NodeRef) -> NodeRef {
        let v = self.value(a).map(softplus);
        self.push(v, Op::Softplus(a.0), &[a.0])
    }

    /// Softmax over all entries, keeping the shape.
    pub fn softmax_vec(&mut self, a: NodeRef) -> NodeRef {
        let x = self.value(a);
        let m = x.data().iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v));
        let e = x.map(|v| (v - m).exp());
        let z = e.sum();
        let v = e.scale(1.0 / z);
        self.push(v, Op::SoftmaxVec(a.0), &[a.0])
    }

    /// `Tr(A^T B) / (|A|_F |B|_F + delta)`.
    pub fn cosine_sim(&mut self, a: NodeRef, b: NodeRef) -> AdResult<NodeRef> {
        let (va, vb) = (self.value(a), self.value(b));
        same_shape("cosine_sim", va, vb)?;
        let c = cosine(va.data(), vb.data());
        Ok(self.push(Mat::scalar(c), Op::CosineSim(a.0, b.0), &[a.0, b.0]))
    }

    /// Cosine similarity of a key (any shape with `d` entries) against each
    /// row of an `S x d` matrix; returns `1 x S`.
    pub fn row_cosine(&mut self, key: NodeRef, rows: NodeRef) -> AdResult<NodeRef> {
        let (k, m) = (self.value(key), self.value(rows));
        if k.len() != m.cols() {
            return Err(AdError::ShapeMismatch {
                op: "row_cosine",
                left: k.shape(),
                right: m.shape(),
            });
        }
        let out = Mat::from_fn(1, m.rows(), |_, i| cosine(k.data(), m.row(i)));
        Ok(self.push(out, Op::RowCosine(key.0, rows.0), &[key.0, rows.0]))
    }

    /// Circular convolution of a `1 x S` weighting with an odd-length `1 x K`
    /// kernel; kernel entry `j` moves weight by `j - (K-1)/2` slots.
    pub fn circular_convolve(&mut self, w: NodeRef, s: NodeRef) -> AdResult<NodeRef> {
        let (vw, vs) = (self.value(w), self.value(s));
        if vw.rows() != 1 || vs.rows() != 1 || vs.cols() % 2 == 0 {
            return Err(AdError::ShapeMismatch {
                op: "circular_convolve",
                left: vw.shape(),
                right: vs.shape(),
            });
        }
        let n = vw.cols() as isize;
        let k = vs.cols();
        let out = Mat::from_fn(1, vw.cols(), |_, i| {
            (0..k)
                .map(|j| {
                    let src = (i as isize - shift_offset(j, k)).rem_euclid(n) as usize;
                    vs[(0, j)] * vw[(0, src)]
                })
                .sum()
        });
        Ok(self.push(out, Op::CircularConvolve(w.0, s.0), &[w.0, s.0]))
    }

    /// `(w + floor)^gamma`, renormalised to sum 1, computed as
    /// `exp(gamma ln(w + floor))`.
    pub fn sharpen(&mut self, w: NodeRef, gamma: NodeRef) -> AdResult<NodeRef> {
        scalar_shape("sharpen gamma", self.value(gamma))?;
        let g = self.scalar(gamma);
        let z = self.value(w).map(|x| g * (x + SHARPEN_FLOOR).ln());
        let m = z.data().iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v));
        let e = z.map(|v| (v - m).exp());
        let out = e.scale(1.0 / e.sum());
        Ok(self.push(out, Op::SharpenPow(w.0, gamma.0), &[w.0, gamma.0]))
    }

    pub fn sum_elements(&mut self, a: NodeRef) -> NodeRef {
        let v = Mat::scalar(self.value(a).sum());
        self.push(v, Op::SumElements(a.0), &[a.0])
    }

    /// Mean binary cross-entropy of probabilities against fixed targets.
    pub fn bce_loss(&mut self, probs: NodeRef, targets: &Mat) -> AdResult<NodeRef> {
        same_shape("bce_loss", self.value(probs), targets)?;
        let v = bce_value(self.value(probs), targets);
        Ok(self.push(Mat::scalar(v), Op::Bce(probs.0, targets.clone()), &[probs.0]))
    }

    pub fn reshape(&mut self, a: NodeRef, rows: usize, cols: usize) -> AdResult<NodeRef> {
        let v = self.value(a);
        if v.len() != rows * cols {
            return Err(AdError::ShapeMismatch {
                op: "reshape",
                left: v.shape(),
                right: (rows, cols),
            });
        }
        let v = v.clone().reshaped(rows, cols);
        Ok(self.push(v, Op::Reshape(a.0), &[a.0]))
    }

    pub fn transpose(&mut self, a: NodeRef) -> NodeRef {
        let v = self.value(a).transpose();
        self.push(v, Op::Transpose(a.0), &[a.0])
    }

    /// `c 1^T + 1 r` for a column `c` (`n x 1`) and a row `r` (`1 x m`).
    pub fn outer_sum(&mut self, col: NodeRef, row: NodeRef) -> AdResult<NodeRef> {
        let (c, r) = (self.value(col), self.value(row));
        if c.cols() != 1 || r.rows() != 1 {
            return Err(AdError::ShapeMismatch {
                op: "outer_sum",
                left: c.shape(),
                right: r.shape(),
            });
        }
        let v = Mat::from_fn(c.rows(), r.cols(), |i, j| c[(i, 0)] + r[(0, j)]);
        Ok(self.push(v, Op::OuterSum(col.0, row.0), &[col.0, row.0]))
    }

    /// Erase/add update of an `S x d` memory with a `1 x S` weighting:
    /// `M'[i][j] = M[i][j] (1 - w_i e_j) + w_i a_j`, with `e` and `a` read
    /// row-major (any shape with `d` entries).
    pub fn mem_write(&mut self, memory: NodeRef, w: NodeRef, erase: NodeRef, add: NodeRef) -> AdResult<NodeRef> {
        let (m, vw, e, a) = (self.value(memory), self.value(w), self.value(erase), self.value(add));
        if vw.shape() != (1, m.rows()) || e.len() != m.cols() || a.len() != m.cols() {
            return Err(AdError::ShapeMismatch {
                op: "mem_write",
                left: m.shape(),
                right: vw.shape(),
            });
        }
        let (e, a, vw) = (e.data(), a.data(), vw.data());
        let out = Mat::from_fn(m.rows(), m.cols(), |i, j| m[(i, j)] * (1.0 - vw[i] * e[j]) + vw[i] * a[j]);
        Ok(self.push(
            out,
            Op::MemWrite(memory.0, w.0, erase.0, add.0),
            &[memory.0, w.0, erase.0, add.0],
        ))
    }

    /// Reverse sweep from a 1x1 loss. Parameters that do not reach the loss
    /// get `None`.
    pub fn backward(&self, loss: NodeRef) -> AdResult<Gradients> {
        let lv = self.value(loss);
        if lv.shape() != (1, 1) {
            return Err(AdError::NotScalarLoss {
                rows: lv.rows(),
                cols: lv.cols(),
            });
        }
        let mut grads: Vec<Option<Mat>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Mat::scalar(1.0));
        let mut out = Gradients::default();

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let needs = |p: usize| self.nodes[p].requires_grad;
            let mut send = |p: usize, d: Mat| {
                if !self.nodes[p].requires_grad {
                    return;
                }
                match &mut grads[p] {
                    Some(acc) => acc.add_assign(&d),
                    slot @ None => *slot = Some(d),
                }
            };
            match &node.op {
                Op::Leaf => {}
                Op::Param(id) => {
                    if out.grads.len() <= *id {
                        out.grads.resize(*id + 1, None);
                    }
                    match &mut out.grads[*id] {
                        Some(acc) => acc.add_assign(&g),
                        slot @ None => *slot = Some(g),
                    }
                }
                Op::MatMul(a, b) => {
                    let (va, vb) = (&self.nodes[*a].value, &self.nodes[*b].value);
                    if needs(*a) {
                        send(*a, g.matmul_t(vb));
                    }
                    if needs(*b) {
                        send(*b, va.t_matmul(&g));
                    }
                }
                Op::Bilinear(u, x, v, p) => {
                    let (vu, vx, vv) = (&self.nodes[*u].value, &self.nodes[*x].value, &self.nodes[*v].value);
                    // Y = P V with P = U^T X
                    if needs(*v) {
                        send(*v, p.t_matmul(&g));
                    }
                    if needs(*u) || needs(*x) {
                        let dp = g.matmul_t(vv);
                        if needs(*u) {
                            send(*u, vx.matmul_t(&dp));
                        }
                        if needs(*x) {
                            send(*x, vu.matmul(&dp));
                        }
                    }
                }
                Op::Add(a, b) => {
                    send(*a, g.clone());
                    send(*b, g);
                }
                Op::Sub(a, b) => {
                    send(*a, g.clone());
                    send(*b, g.scale(-1.0));
                }
                Op::Hadamard(a, b) => {
                    let (va, vb) = (&self.nodes[*a].value, &self.nodes[*b].value);
                    send(*a, g.hadamard(vb));
                    send(*b, g.hadamard(va));
                }
                Op::Scale(a, s) | Op::Affine(a, s) => send(*a, g.scale(*s)),
                Op::ScaleBy(s, a) => {
                    let (vs, va) = (self.nodes[*s].value[(0, 0)], &self.nodes[*a].value);
                    send(*s, Mat::scalar(g.hadamard(va).sum()));
                    send(*a, g.scale(vs));
                }
                Op::Tanh(a) => {
                    let y = &node.value;
                    send(*a, Mat::from_fn(y.rows(), y.cols(), |r, c| g[(r, c)] * (1.0 - y[(r, c)] * y[(r, c)])));
                }
                Op::Sigmoid(a) => {
                    let y = &node.value;
                    send(*a, Mat::from_fn(y.rows(), y.cols(), |r, c| g[(r, c)] * y[(r, c)] * (1.0 - y[(r, c)])));
                }
                Op::Relu(a) => {
                    let x = &self.nodes[*a].value;
                    send(*a, Mat::from_fn(x.rows(), x.cols(), |r, c| if x[(r, c)] > 0.0 { g[(r, c)] } else { 0.0 }));
                }
                Op::Softplus(a) => {
                    let x = &self.nodes[*a].value;
                    send(*a, Mat::from_fn(x.rows(), x.cols(), |r, c| g[(r, c)] * sigmoid(x[(r, c)])));
                }
                Op::SoftmaxVec(a) => send(*a, softmax_backward(&node.value, &g)),
                Op::CosineSim(a, b) => {
                    let (va, vb) = (&self.nodes[*a].value, &self.nodes[*b].value);
                    let mut da = Mat::zeros(va.rows(), va.cols());
                    let mut db = Mat::zeros(vb.rows(), vb.cols());
                    cosine_grads_into(va.data(), vb.data(), g[(0, 0)], da.data_mut(), db.data_mut());
                    send(*a, da);
                    send(*b, db);
                }
                Op::RowCosine(k, m) => {
                    let (vk, vm) = (&self.nodes[*k].value, &self.nodes[*m].value);
                    let mut dk = vec![0.0; vk.len()];
                    let mut dm = Mat::zeros(vm.rows(), vm.cols());
                    for i in 0..vm.rows() {
                        let s = g[(0, i)];
                        if s == 0.0 {
                            continue;
                        }
                        let cols = vm.cols();
                        let row = &mut dm.data_mut()[i * cols..(i + 1) * cols];
                        cosine_grads_into(vk.data(), vm.row(i), s, &mut dk, row);
                    }
                    send(*k, Mat::from_vec(vk.rows(), vk.cols(), dk).expect("shape"));
                    send(*m, dm);
                }
                Op::CircularConvolve(w, s) => {
                    let (vw, vs) = (&self.nodes[*w].value, &self.nodes[*s].value);
                    let n = vw.cols() as isize;
                    let k = vs.cols();
                    let mut dw = Mat::zeros(1, vw.cols());
                    let mut ds = Mat::zeros(1, k);
                    for i in 0..vw.cols() {
                        for j in 0..k {
                            let src = (i as isize - shift_offset(j, k)).rem_euclid(n) as usize;
                            dw[(0, src)] += vs[(0, j)] * g[(0, i)];
                            ds[(0, j)] += vw[(0, src)] * g[(0, i)];
                        }
                    }
                    send(*w, dw);
                    send(*s, ds);
                }
                Op::SharpenPow(w, gamma) => {
                    // out = softmax(gamma * ln(w + floor))
                    let (vw, vg) = (&self.nodes[*w].value, self.nodes[*gamma].value[(0, 0)]);
                    let dz = softmax_backward(&node.value, &g);
                    let mut dgamma = 0.0;
                    let dw = Mat::from_fn(vw.rows(), vw.cols(), |r, c| {
                        let x = vw[(r, c)] + SHARPEN_FLOOR;
                        dgamma += dz[(r, c)] * x.ln();
                        dz[(r, c)] * vg / x
                    });
                    send(*w, dw);
                    send(*gamma, Mat::scalar(dgamma));
                }
                Op::SumElements(a) => {
                    let v = &self.nodes[*a].value;
                    send(*a, Mat::filled(v.rows(), v.cols(), g[(0, 0)]));
                }
                Op::Bce(p, t) => {
                    let vp = &self.nodes[*p].value;
                    let count = vp.len() as f64;
                    let s = g[(0, 0)] / count;
                    send(
                        *p,
                        Mat::from_fn(vp.rows(), vp.cols(), |r, c| {
                            let x = vp[(r, c)];
                            if !(BCE_CLAMP..=1.0 - BCE_CLAMP).contains(&x) {
                                return 0.0;
                            }
                            s * (x - t[(r, c)]) / (x * (1.0 - x))
                        }),
                    );
                }
                Op::Reshape(a) => {
                    let v = &self.nodes[*a].value;
                    send(*a, g.reshaped(v.rows(), v.cols()));
                }
                Op::Transpose(a) => send(*a, g.transpose()),
                Op::MemWrite(m, w, e, a) => {
                    let (vm, vw, ve, va) = (
                        &self.nodes[*m].value,
                        self.nodes[*w].value.data(),
                        &self.nodes[*e].value,
                        &self.nodes[*a].value,
                    );
                    let (rows, cols) = vm.shape();
                    let mut dm = Mat::zeros(rows, cols);
                    let mut dw = Mat::zeros(1, rows);
                    let mut de = vec![0.0; cols];
                    let mut da = vec![0.0; cols];
                    for i in 0..rows {
                        let (gr, mr) = (g.row(i), vm.row(i));
                        let mut acc = 0.0;
                        let dmr = &mut dm.data_mut()[i * cols..(i + 1) * cols];
                        for j in 0..cols {
                            let (gij, mij, ej, aj) = (gr[j], mr[j], ve.data()[j], va.data()[j]);
                            dmr[j] = gij * (1.0 - vw[i] * ej);
                            acc += gij * (aj - mij * ej);
                            de[j] -= gij * mij * vw[i];
                            da[j] += gij * vw[i];
                        }
                        dw[(0, i)] = acc;
                    }
                    send(*m, dm);
                    send(*w, dw);
                    send(*e, Mat::from_vec(ve.rows(), ve.cols(), de).expect("shape"));
                    send(*a, Mat::from_vec(va.rows(), va.cols(), da).expect("shape"));
                }
                Op::OuterSum(c, r) => {
                    let dc = Mat::from_fn(g.rows(), 1, |i, _| g.row(i).iter().sum());
                    let dr = Mat::from_fn(1, g.cols(), |_, j| (0..g.rows()).map(|i| g[(i, j)]).sum());
                    send(*c, dc);
                    send(*r, dr);
                }
            }
        }
        Ok(out)
    }
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb + COSINE_DELTA)
}

/// Adds `s * d cos/da` into `da` and writes `s * d cos/db` into `db`.
fn cosine_grads_into(a: &[f64], b: &[f64], s: f64, da: &mut [f64], db: &mut [f64]) {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let d = na * nb + COSINE_DELTA;
    let ca = if na > 0.0 { dot * nb / (na * d * d) } else { 0.0 };
    let cb = if nb > 0.0 { dot * na / (nb * d * d) } else { 0.0 };
    for (((x, y), ga), gb) in a.iter().zip(b).zip(da.iter_mut()).zip(db.iter_mut()) {
        *ga += s * (y / d - ca * x);
        *gb = s * (x / d - cb * y);
    }
}

fn softmax_backward(y: &Mat, g: &Mat) -> Mat {
    let dot = y.hadamard(g).sum();
    Mat::from_fn(y.rows(), y.cols(), |r, c| y[(r, c)] * (g[(r, c)] - dot))
}

/// Mean of `-[t ln p + (1-t) ln(1-p)]` with `p` clamped to `[1e-7, 1-1e-7]`.
pub fn bce_value(probs: &Mat, targets: &Mat) -> f64 {
    let total: f64 = probs
        .data()
        .iter()
        .zip(targets.data())
        .map(|(p, t)| {
            let p = p.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
            -(t * p.ln() + (1.0 - t) * (1.0 - p).ln())
        })
        .sum();
    total / probs.len() as f64
}
