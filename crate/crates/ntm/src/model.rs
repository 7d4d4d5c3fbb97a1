//! Matrix NTM: a stack of bilinear tanh layers as controller, one read and one
//! write head over a slot memory of small matrices, and the memory-free
//! matrix RNN baseline.

use matcap_core::{Mat, SeededRng};
use serde::{Deserialize, Serialize};

use crate::autodiff::{AdError, AdResult, NodeRef, Tape};

/// Value every memory entry holds at the start of a sequence.
pub const MEMORY_INIT: f64 = 1e-6;
/// Number of shift offsets in the location kernel (`-1, 0, +1`).
pub const SHIFT_WIDTH: usize = 3;

/// Row of the token that carries the channel flags, and the flag columns.
pub const FLAG_SOF: usize = 0;
pub const FLAG_EOF: usize = 1;
pub const FLAG_QUERY: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    MatNtm,
    MatRnn,
}

impl std::str::FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "matntm" => Ok(ModelKind::MatNtm),
            "matrnn" => Ok(ModelKind::MatRnn),
            other => Err(format!("unknown model {other:?} (expected matntm or matrnn)")),
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelKind::MatNtm => "matntm",
            ModelKind::MatRnn => "matrnn",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub kind: ModelKind,
    /// Content side `n`; tokens are `(n+1) x (n+1)`, outputs `n x n`.
    pub content: usize,
    pub layers: usize,
    pub hidden: [usize; 2],
    pub slots: usize,
    pub slot_dim: usize,
}

impl ModelConfig {
    pub fn copy(kind: ModelKind) -> Self {
        ModelConfig {
            kind,
            content: 5,
            layers: 3,
            hidden: [15, 15],
            slots: 120,
            slot_dim: 6,
        }
    }

    pub fn recall(kind: ModelKind) -> Self {
        ModelConfig {
            layers: 4,
            hidden: [20, 20],
            ..Self::copy(kind)
        }
    }

    /// Small model for smoke runs and gradient checks.
    pub fn tiny(kind: ModelKind) -> Self {
        ModelConfig {
            kind,
            content: 2,
            layers: 1,
            hidden: [8, 8],
            slots: 8,
            slot_dim: 3,
        }
    }

    pub fn token(&self) -> usize {
        self.content + 1
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.content < 2 {
            return Err(format!("content must be >= 2 to fit the flag row, got {}", self.content));
        }
        if self.layers == 0 || self.hidden.contains(&0) {
            return Err("controller needs at least one layer of nonzero size".into());
        }
        if self.kind == ModelKind::MatNtm && (self.slots == 0 || self.slot_dim == 0) {
            return Err("memory needs at least one slot of nonzero size".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

impl ParamSpec {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Name up to the last dot, used for the per-layer table.
    pub fn group(&self) -> &str {
        self.name.rsplit_once('.').map_or(&self.name, |(g, _)| g)
    }
}

/// `U^T H V + B`.
#[derive(Clone, Copy, Debug)]
struct Fc {
    u: usize,
    v: usize,
    b: usize,
}

#[derive(Clone, Copy, Debug)]
struct Layer {
    ux: usize,
    vx: usize,
    uh: usize,
    vh: usize,
    read_in: Option<(usize, usize)>,
    b_row: usize,
    b_col: usize,
}

#[derive(Clone, Copy, Debug)]
struct Head {
    key: Fc,
    beta: Fc,
    gate: Fc,
    shift: Fc,
    gamma: Fc,
    erase_add: Option<(Fc, Fc)>,
}

#[derive(Clone, Debug)]
struct Layout {
    specs: Vec<ParamSpec>,
    layers: Vec<Layer>,
    out: Fc,
    heads: Option<(Head, Head)>,
}

impl Layout {
    fn build(c: &ModelConfig) -> Layout {
        let mut specs = Vec::new();
        let mut add = |name: String, rows: usize, cols: usize| {
            specs.push(ParamSpec { name, rows, cols });
            specs.len() - 1
        };
        let [hr, hc] = c.hidden;
        let t = c.token();
        let d = c.slot_dim;
        let ntm = c.kind == ModelKind::MatNtm;

        let mut layers = Vec::with_capacity(c.layers);
        for l in 0..c.layers {
            let (ir, ic) = if l == 0 { (t, t) } else { (hr, hc) };
            let p = format!("ctrl{l}");
            layers.push(Layer {
                ux: add(format!("{p}.u_x"), ir, hr),
                vx: add(format!("{p}.v_x"), ic, hc),
                uh: add(format!("{p}.u_h"), hr, hr),
                vh: add(format!("{p}.v_h"), hc, hc),
                read_in: (ntm && l == 0).then(|| (add(format!("{p}.u_r"), d, hr), add(format!("{p}.v_r"), d, hc))),
                b_row: add(format!("{p}.b_row"), hr, 1),
                b_col: add(format!("{p}.b_col"), 1, hc),
            });
        }
        let mut fc = |name: &str, or: usize, oc: usize| Fc {
            u: add(format!("{name}.u"), hr, or),
            v: add(format!("{name}.v"), hc, oc),
            b: add(format!("{name}.b"), or, oc),
        };
        let out = fc("out", c.content, c.content);
        let heads = ntm.then(|| {
            let mut head = |h: &str, write: bool| Head {
                key: fc(&format!("{h}.key"), d, d),
                beta: fc(&format!("{h}.beta"), 1, 1),
                gate: fc(&format!("{h}.gate"), 1, 1),
                shift: fc(&format!("{h}.shift"), 1, SHIFT_WIDTH),
                gamma: fc(&format!("{h}.gamma"), 1, 1),
                erase_add: write.then(|| (fc(&format!("{h}.erase"), d, d), fc(&format!("{h}.add"), d, d))),
            };
            (head("read", false), head("write", true))
        });
        Layout {
            specs,
            layers,
            out,
            heads,
        }
    }
}

/// Per-step head weights and memory snapshots from one forward pass.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Diagnostics {
    pub read_weights: Vec<Vec<f64>>,
    pub write_weights: Vec<Vec<f64>>,
    /// Memory (`S x d^2`, slot `i` in row `i`) after the input phase.
    pub memory_after_input: Option<Mat>,
    pub memory_final: Option<Mat>,
}

#[derive(Clone, Debug)]
pub struct Model {
    config: ModelConfig,
    layout: Layout,
    params: Vec<Mat>,
}

/// Nodes of one addressing pass, returned for inspection in tests.
#[derive(Clone, Copy, Debug)]
pub struct Addressing {
    pub content: NodeRef,
    pub gated: NodeRef,
    pub shifted: NodeRef,
    pub weights: NodeRef,
}

/// Content then location addressing. Inputs are already squashed: `beta >= 0`,
/// `g` in `[0,1]`, `s` a distribution over `-1, 0, +1`, `gamma >= 1`.
#[allow(clippy::too_many_arguments)]
pub fn address(
    tape: &mut Tape,
    memory: NodeRef,
    prev_w: NodeRef,
    key: NodeRef,
    beta: NodeRef,
    g: NodeRef,
    s: NodeRef,
    gamma: NodeRef,
) -> AdResult<Addressing> {
    let cos = tape.row_cosine(key, memory)?;
    let z = tape.scale_by(beta, cos)?;
    let content = tape.softmax_vec(z);
    let a = tape.scale_by(g, content)?;
    let one_minus_g = tape.one_minus(g);
    let b = tape.scale_by(one_minus_g, prev_w)?;
    let gated = tape.add(a, b)?;
    let shifted = tape.circular_convolve(gated, s)?;
    let weights = tape.sharpen(shifted, gamma)?;
    Ok(Addressing {
        content,
        gated,
        shifted,
        weights,
    })
}

/// `R = sum_i w_i slot_i`, reshaped to `d x d`.
pub fn read(tape: &mut Tape, memory: NodeRef, w: NodeRef, d: usize) -> AdResult<NodeRef> {
    let r = tape.matmul(w, memory)?;
    tape.reshape(r, d, d)
}

/// `slot_i <- slot_i * (1 - w_i Er) + w_i A` for every slot.
pub fn write(tape: &mut Tape, memory: NodeRef, w: NodeRef, erase: NodeRef, add: NodeRef) -> AdResult<NodeRef> {
    tape.mem_write(memory, w, erase, add)
}

impl Model {
    /// Random initialisation: controller maps `N(0, 1/rows)`, heads and
    /// output at a quarter of that variance, biases zero.
    pub fn new(config: ModelConfig, seed: u64) -> Self {
        let layout = Layout::build(&config);
        let mut rng = SeededRng::with_stream(seed, 0x1417);
        let params = layout
            .specs
            .iter()
            .map(|s| {
                let bias = s.name.ends_with(".b") || s.name.ends_with(".b_row") || s.name.ends_with(".b_col");
                if bias {
                    return Mat::zeros(s.rows, s.cols);
                }
                let scale = if s.name.starts_with("ctrl") { 1.0 } else { 0.5 };
                let std = scale / (s.rows as f64).sqrt();
                Mat::from_fn(s.rows, s.cols, |_, _| std * rng.normal())
            })
            .collect();
        Model { config, layout, params }
    }

    /// Every parameter set to zero.
    pub fn zeros(config: ModelConfig) -> Self {
        let mut m = Model::new(config, 0);
        for p in &mut m.params {
            p.scale_in_place(0.0);
        }
        m
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn specs(&self) -> &[ParamSpec] {
        &self.layout.specs
    }

    pub fn params(&self) -> &[Mat] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Mat] {
        &mut self.params
    }

    /// Replaces all parameters; shapes must match the layout.
    pub fn set_params(&mut self, params: Vec<Mat>) -> AdResult<()> {
        if params.len() != self.params.len() {
            return Err(AdError::ShapeMismatch {
                op: "set_params",
                left: (self.params.len(), 1),
                right: (params.len(), 1),
            });
        }
        for (s, p) in self.layout.specs.iter().zip(&params) {
            if p.shape() != (s.rows, s.cols) {
                return Err(AdError::ShapeMismatch {
                    op: "set_params",
                    left: (s.rows, s.cols),
                    right: p.shape(),
                });
            }
        }
        self.params = params;
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.layout.specs.iter().map(ParamSpec::len).sum()
    }

    /// Parameter totals per group (`ctrl0`, `read.key`, ...) in layout order.
    pub fn param_breakdown(&self) -> Vec<(String, usize)> {
        let mut out: Vec<(String, usize)> = Vec::new();
        for s in &self.layout.specs {
            match out.last_mut() {
                Some((g, n)) if g == s.group() => *n += s.len(),
                _ => out.push((s.group().to_string(), s.len())),
            }
        }
        out
    }

    fn fc(&self, tape: &mut Tape, p: &[NodeRef], f: Fc, h: NodeRef) -> AdResult<NodeRef> {
        let y = tape.bilinear(p[f.u], h, p[f.v])?;
        tape.add(y, p[f.b])
    }

    fn check_input(&self, x: &Mat) -> AdResult<()> {
        let t = self.config.token();
        if x.shape() != (t, t) {
            return Err(AdError::ShapeMismatch {
                op: "input token",
                left: (t, t),
                right: x.shape(),
            });
        }
        Ok(())
    }

    /// Runs the input phase then `target_len` steps on zero tokens, recording
    /// on `tape`. Returns the output probability nodes of the second phase.
    pub fn forward_on_tape(
        &self,
        tape: &mut Tape,
        inputs: &[Mat],
        target_len: usize,
    ) -> AdResult<(Vec<NodeRef>, Diagnostics)> {
        for x in inputs {
            self.check_input(x)?;
        }
        let c = &self.config;
        let [hr, hc] = c.hidden;
        let d = c.slot_dim;
        let p: Vec<NodeRef> = self.params.iter().enumerate().map(|(i, m)| tape.param(i, m.clone())).collect();

        let zero_h = tape.leaf(Mat::zeros(hr, hc));
        let mut hidden = vec![zero_h; c.layers];
        let mut mem_state = self.layout.heads.map(|_| {
            let memory = tape.leaf(Mat::filled(c.slots, d * d, MEMORY_INIT));
            let one_hot = Mat::from_fn(1, c.slots, |_, j| if j == 0 { 1.0 } else { 0.0 });
            let rw = tape.leaf(one_hot.clone());
            let ww = tape.leaf(one_hot);
            let r = tape.leaf(Mat::filled(d, d, MEMORY_INIT));
            (memory, rw, ww, r)
        });

        let zero_x = Mat::zeros(c.token(), c.token());
        let mut diag = Diagnostics::default();
        let mut outputs = Vec::with_capacity(target_len);
        let total = inputs.len() + target_len;
        for step in 0..total {
            let x = tape.leaf(inputs.get(step).cloned().unwrap_or_else(|| zero_x.clone()));
            let mut below = x;
            for (l, layer) in self.layout.layers.iter().enumerate() {
                let a = tape.bilinear(p[layer.ux], below, p[layer.vx])?;
                let b = tape.bilinear(p[layer.uh], hidden[l], p[layer.vh])?;
                let mut pre = tape.add(a, b)?;
                if let (Some((ur, vr)), Some((_, _, _, r))) = (layer.read_in, mem_state) {
                    let rr = tape.bilinear(p[ur], r, p[vr])?;
                    pre = tape.add(pre, rr)?;
                }
                let bias = tape.outer_sum(p[layer.b_row], p[layer.b_col])?;
                let pre = tape.add(pre, bias)?;
                hidden[l] = tape.tanh(pre);
                below = hidden[l];
            }
            let top = below;

            if let (Some((read_head, write_head)), Some((memory, rw, ww, _))) = (self.layout.heads, mem_state) {
                let wa = self.head(tape, &p, write_head, top, memory, ww)?;
                let (ef, af) = write_head.erase_add.expect("write head");
                let er = self.fc(tape, &p, ef, top)?;
                let er = tape.sigmoid(er);
                let ad = self.fc(tape, &p, af, top)?;
                let ad = tape.tanh(ad);
                let memory = write(tape, memory, wa.weights, er, ad)?;

                let ra = self.head(tape, &p, read_head, top, memory, rw)?;
                let r = read(tape, memory, ra.weights, d)?;
                diag.write_weights.push(tape.value(wa.weights).data().to_vec());
                diag.read_weights.push(tape.value(ra.weights).data().to_vec());
                mem_state = Some((memory, ra.weights, wa.weights, r));
                if step + 1 == inputs.len() {
                    diag.memory_after_input = Some(tape.value(memory).clone());
                }
            }

            if step >= inputs.len() {
                let logits = self.fc(tape, &p, self.layout.out, top)?;
                outputs.push(tape.sigmoid(logits));
            }
        }
        if let Some((memory, ..)) = mem_state {
            diag.memory_final = Some(tape.value(memory).clone());
        }
        Ok((outputs, diag))
    }

    fn head(
        &self,
        tape: &mut Tape,
        p: &[NodeRef],
        h: Head,
        top: NodeRef,
        memory: NodeRef,
        prev_w: NodeRef,
    ) -> AdResult<Addressing> {
        let key = self.fc(tape, p, h.key, top)?;
        let beta = self.fc(tape, p, h.beta, top)?;
        let beta = tape.softplus(beta);
        let g = self.fc(tape, p, h.gate, top)?;
        let g = tape.sigmoid(g);
        let s = self.fc(tape, p, h.shift, top)?;
        let s = tape.softmax_vec(s);
        let gamma = self.fc(tape, p, h.gamma, top)?;
        let gamma = tape.softplus(gamma);
        let gamma = tape.affine(gamma, 1.0, 1.0);
        address(tape, memory, prev_w, key, beta, g, s, gamma)
    }

    /// Output probabilities for the `target_len` steps after the inputs.
    pub fn forward_sequence(&self, inputs: &[Mat], target_len: usize) -> AdResult<(Vec<Mat>, Diagnostics)> {
        let mut tape = Tape::new();
        let (outs, diag) = self.forward_on_tape(&mut tape, inputs, target_len)?;
        Ok((outs.iter().map(|n| tape.value(*n).clone()).collect(), diag))
    }

    /// Mean BCE over all output bits, the loss node, and the output nodes.
    pub fn loss_on_tape(&self, tape: &mut Tape, inputs: &[Mat], targets: &[Mat]) -> AdResult<(NodeRef, Vec<NodeRef>)> {
        let (outs, _) = self.forward_on_tape(tape, inputs, targets.len())?;
        let mut total: Option<NodeRef> = None;
        for (o, t) in outs.iter().zip(targets) {
            let l = tape.bce_loss(*o, t)?;
            total = Some(match total {
                Some(acc) => tape.add(acc, l)?,
                None => l,
            });
        }
        let total = match total {
            Some(t) => t,
            None => tape.leaf(Mat::scalar(0.0)),
        };
        let loss = tape.scale(total, 1.0 / targets.len().max(1) as f64);
        Ok((loss, outs))
    }

    /// Loss, output probabilities and the gradient for every parameter
    /// (zeros where the loss does not depend on it).
    pub fn loss_and_grads(&self, inputs: &[Mat], targets: &[Mat]) -> AdResult<(f64, Vec<Mat>, Vec<Mat>)> {
        let mut tape = Tape::new();
        let (loss, outs) = self.loss_on_tape(&mut tape, inputs, targets)?;
        let grads = tape.backward(loss)?.into_vec();
        let grads = self
            .params
            .iter()
            .enumerate()
            .map(|(i, p)| {
                grads
                    .get(i)
                    .and_then(|g| g.clone())
                    .unwrap_or_else(|| Mat::zeros(p.rows(), p.cols()))
            })
            .collect();
        let probs = outs.iter().map(|n| tape.value(*n).clone()).collect();
        Ok((tape.scalar(loss), probs, grads))
    }

    /// Loss only, without a backward pass.
    pub fn loss(&self, inputs: &[Mat], targets: &[Mat]) -> AdResult<f64> {
        let mut tape = Tape::new();
        let (loss, _) = self.loss_on_tape(&mut tape, inputs, targets)?;
        Ok(tape.scalar(loss))
    }
}

/// Mean of `|round(p) - t|` over all bits.
pub fn bit_error(probs: &[Mat], targets: &[Mat]) -> f64 {
    let mut wrong = 0usize;
    let mut total = 0usize;
    for (p, t) in probs.iter().zip(targets) {
        for (a, b) in p.data().iter().zip(t.data()) {
            let bit = if *a >= 0.5 { 1.0 } else { 0.0 };
            if bit != *b {
                wrong += 1;
            }
            total += 1;
        }
    }
    if total == 0 {
        0.0
    } else {
        wrong as f64 / total as f64
    }
}
