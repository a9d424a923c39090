//! The tape: a flat list of nodes in creation (hence topological) order.

use rand::Rng;

use super::kernels::{self, ConvDims, LstmCache, LstmDims};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddConst(Var),
    /// vector times a scalar node
    MulScalar(Var, Var),
    /// vector plus a scalar node, broadcast
    AddScalar(Var, Var),
    Recip(Var),
    Log(Var),
    Abs(Var),
    Square(Var),
    Relu(Var),
    Sum(Var),
    Mean(Var),
    Reshape(Var),
    Index(Var, usize),
    Concat {
        inputs: Vec<Var>,
        axis: usize,
    },
    Dropout(Var, Vec<f64>),
    Softmax(Var),
    MatVec(Var, Var),
    CausalConv {
        x: Var,
        w: Var,
        b: Var,
        dims: ConvDims,
        dilation: usize,
    },
    CorrConv {
        x: Var,
        w: Var,
        b: Var,
        dims: ConvDims,
    },
    TimeConv {
        x: Var,
        w: Var,
        b: Var,
        dims: ConvDims,
    },
    Lstm {
        x: Var,
        w_ih: Var,
        w_hh: Var,
        b: Var,
        dims: LstmDims,
        cache: Box<LstmCache>,
    },
}

#[derive(Clone, Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
    param: Option<usize>,
}

/// Reverse-mode tape. Build the forward pass with the methods below, then
/// call [`Graph::backward`] on a scalar node.
#[derive(Clone, Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Result of one backward pass: a gradient for every node that reaches the
/// root through differentiable inputs.
#[derive(Clone, Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads[v.0].as_deref()
    }
}

fn same_shape(a: &Tensor, b: &Tensor, what: &str) -> Result<()> {
    if a.shape != b.shape {
        return Err(Error::contract(format!("{what}: shapes {:?} and {:?} differ", a.shape, b.shape)));
    }
    Ok(())
}

fn accumulate(slot: &mut Option<Vec<f64>>, g: &[f64]) {
    match slot {
        Some(acc) => {
            for (a, v) in acc.iter_mut().zip(g) {
                *a += v;
            }
        }
        None => *slot = Some(g.to_vec()),
    }
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

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let needs_grad = inputs.iter().any(|v| self.nodes[v.0].needs_grad);
        self.nodes.push(Node { value, op, needs_grad, param: None });
        Var(self.nodes.len() - 1)
    }

    /// A differentiable leaf.
    pub fn input(&mut self, t: Tensor) -> Var {
        self.nodes.push(Node { value: t, op: Op::Leaf, needs_grad: true, param: None });
        Var(self.nodes.len() - 1)
    }

    /// A leaf standing for parameter slot `id`; its gradient is collected by
    /// [`Graph::param_gradients`].
    pub fn param(&mut self, id: usize, t: Tensor) -> Var {
        self.nodes.push(Node { value: t, op: Op::Leaf, needs_grad: true, param: Some(id) });
        Var(self.nodes.len() - 1)
    }

    /// A leaf that never receives a gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.nodes.push(Node { value: t, op: Op::Leaf, needs_grad: false, param: None });
        Var(self.nodes.len() - 1)
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let x = &self.nodes[a.0].value;
        let value = Tensor { shape: x.shape.clone(), data: x.data.iter().map(|&v| f(v)).collect() };
        self.push(value, op, &[a])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape(self.value(a), self.value(b), "add")?;
        let data = self.value(a).data.iter().zip(&self.value(b).data).map(|(x, y)| x + y).collect();
        let shape = self.value(a).shape.clone();
        Ok(self.push(Tensor { shape, data }, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape(self.value(a), self.value(b), "sub")?;
        let data = self.value(a).data.iter().zip(&self.value(b).data).map(|(x, y)| x - y).collect();
        let shape = self.value(a).shape.clone();
        Ok(self.push(Tensor { shape, data }, Op::Sub(a, b), &[a, b]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape(self.value(a), self.value(b), "mul")?;
        let data = self.value(a).data.iter().zip(&self.value(b).data).map(|(x, y)| x * y).collect();
        let shape = self.value(a).shape.clone();
        Ok(self.push(Tensor { shape, data }, Op::Mul(a, b), &[a, b]))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        self.unary(a, |v| v * k, Op::Scale(a, k))
    }

    pub fn add_const(&mut self, a: Var, k: f64) -> Var {
        self.unary(a, |v| v + k, Op::AddConst(a))
    }

    pub fn mul_scalar(&mut self, a: Var, s: Var) -> Result<Var> {
        if !self.value(s).is_scalar() {
            return Err(Error::contract("mul_scalar: second operand is not a scalar"));
        }
        let k = self.value(s).item();
        let x = self.value(a);
        let value = Tensor { shape: x.shape.clone(), data: x.data.iter().map(|v| v * k).collect() };
        Ok(self.push(value, Op::MulScalar(a, s), &[a, s]))
    }

    pub fn add_scalar(&mut self, a: Var, s: Var) -> Result<Var> {
        if !self.value(s).is_scalar() {
            return Err(Error::contract("add_scalar: second operand is not a scalar"));
        }
        let k = self.value(s).item();
        let x = self.value(a);
        let value = Tensor { shape: x.shape.clone(), data: x.data.iter().map(|v| v + k).collect() };
        Ok(self.push(value, Op::AddScalar(a, s), &[a, s]))
    }

    pub fn recip(&mut self, a: Var) -> Var {
        self.unary(a, |v| 1.0 / v, Op::Recip(a))
    }

    pub fn log(&mut self, a: Var) -> Var {
        self.unary(a, f64::ln, Op::Log(a))
    }

    pub fn abs(&mut self, a: Var) -> Var {
        self.unary(a, f64::abs, Op::Abs(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(a, |v| v * v, Op::Square(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, |v| v.max(0.0), Op::Relu(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data.iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(a), &[a])
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        if x.is_empty() {
            return Err(Error::contract("mean of an empty tensor"));
        }
        let m = x.data.iter().sum::<f64>() / x.len() as f64;
        Ok(self.push(Tensor::scalar(m), Op::Mean(a), &[a]))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let t = Tensor::new(shape.to_vec(), self.value(a).data.clone())?;
        Ok(self.push(t, Op::Reshape(a), &[a]))
    }

    /// Element `i` of the flattened tensor, as a scalar.
    pub fn index(&mut self, a: Var, i: usize) -> Result<Var> {
        let v = *self.value(a).data.get(i).ok_or_else(|| Error::contract(format!("index {i} out of range")))?;
        Ok(self.push(Tensor::scalar(v), Op::Index(a, i), &[a]))
    }

    /// Concatenation along `axis`; all other dimensions must agree. Scalars
    /// are treated as shape `[1]`.
    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        let first = inputs.first().ok_or_else(|| Error::contract("concat of nothing"))?;
        let shape_of = |g: &Graph, v: &Var| {
            let s = &g.value(*v).shape;
            if s.is_empty() {
                vec![1]
            } else {
                s.clone()
            }
        };
        let base = shape_of(self, first);
        if axis >= base.len() {
            return Err(Error::contract(format!("concat axis {axis} out of range for rank {}", base.len())));
        }
        let mut total = 0;
        for v in inputs {
            let s = shape_of(self, v);
            if s.len() != base.len() || s.iter().enumerate().any(|(d, &n)| d != axis && n != base[d]) {
                return Err(Error::contract(format!("concat: shape {s:?} incompatible with {base:?} on axis {axis}")));
            }
            total += s[axis];
        }
        let outer: usize = base[..axis].iter().product();
        let inner: usize = base[axis + 1..].iter().product();
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for v in inputs {
                let len = shape_of(self, v)[axis] * inner;
                data.extend_from_slice(&self.value(*v).data[o * len..(o + 1) * len]);
            }
        }
        let mut shape = base;
        shape[axis] = total;
        Ok(self.push(Tensor { shape, data }, Op::Concat { inputs: inputs.to_vec(), axis }, inputs))
    }

    /// Inverted dropout. `rng = None` (evaluation) or `rate = 0` is the
    /// identity and records nothing.
    pub fn dropout<R: Rng>(&mut self, a: Var, rate: f64, rng: Option<&mut R>) -> Var {
        match rng {
            Some(rng) if rate > 0.0 => {
                let mask = kernels::dropout_mask(self.value(a).len(), rate, rng);
                let x = self.value(a);
                let value = Tensor { shape: x.shape.clone(), data: x.data.iter().zip(&mask).map(|(v, m)| v * m).collect() };
                self.push(value, Op::Dropout(a, mask), &[a])
            }
            _ => a,
        }
    }

    /// Softmax along the last axis.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        let width = *x.shape.last().unwrap_or(&1);
        if width == 0 || x.is_empty() {
            return Err(Error::contract("softmax over an empty axis"));
        }
        let mut data = x.data.clone();
        for row in data.chunks_mut(width) {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut s = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                s += *v;
            }
            for v in row.iter_mut() {
                *v /= s;
            }
        }
        let shape = x.shape.clone();
        Ok(self.push(Tensor { shape, data }, Op::Softmax(a), &[a]))
    }

    /// `(r, c) × (c) → (r)`: a 1×1 convolution without bias.
    pub fn matvec(&mut self, x: Var, w: Var) -> Result<Var> {
        let (xs, ws) = (self.value(x), self.value(w));
        if xs.rank() != 2 || ws.rank() != 1 || xs.shape[1] != ws.shape[0] {
            return Err(Error::contract(format!("matvec: shapes {:?} and {:?}", xs.shape, ws.shape)));
        }
        let c = ws.shape[0];
        let data = xs.data.chunks(c).map(|row| row.iter().zip(&ws.data).map(|(a, b)| a * b).sum()).collect();
        let shape = vec![xs.shape[0]];
        Ok(self.push(Tensor { shape, data }, Op::MatVec(x, w), &[x, w]))
    }

    fn conv_dims(&self, x: Var, w: Var, b: Var, what: &str) -> Result<ConvDims> {
        let (xs, ws, bs) = (&self.value(x).shape, &self.value(w).shape, &self.value(b).shape);
        if xs.len() != 3 || ws.len() != 3 || bs.len() != 1 || ws[1] != xs[2] || bs[0] != ws[0] {
            return Err(Error::contract(format!("{what}: input {xs:?}, weights {ws:?}, bias {bs:?} do not fit")));
        }
        Ok(ConvDims { rows: xs[0], time: xs[1], c_in: xs[2], c_out: ws[0], kernel: ws[2] })
    }

    /// Dilated causal convolution along time: `(m,k,C_in)` with weights
    /// `(C_out,C_in,K)` → `(m,k,C_out)`.
    pub fn causal_conv(&mut self, x: Var, w: Var, b: Var, dilation: usize) -> Result<Var> {
        let dims = self.conv_dims(x, w, b, "causal_conv")?;
        if dilation == 0 {
            return Err(Error::contract("causal_conv: dilation must be positive"));
        }
        let out = kernels::causal_conv_forward(&self.value(x).data, &self.value(w).data, &self.value(b).data, dims, dilation);
        let t = Tensor { shape: vec![dims.rows, dims.time, dims.c_out], data: out };
        Ok(self.push(t, Op::CausalConv { x, w, b, dims, dilation }, &[x, w, b]))
    }

    /// Correlational convolution across assets with SAME padding:
    /// `(m,k,C_in)` with weights `(C_out,C_in,K)` → `(m,k,C_out)`.
    pub fn corr_conv(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let dims = self.conv_dims(x, w, b, "corr_conv")?;
        let out = kernels::corr_conv_forward(&self.value(x).data, &self.value(w).data, &self.value(b).data, dims);
        let t = Tensor { shape: vec![dims.rows, dims.time, dims.c_out], data: out };
        Ok(self.push(t, Op::CorrConv { x, w, b, dims }, &[x, w, b]))
    }

    /// Valid convolution over the full time axis: `(m,k,C_in)` with weights
    /// `(C_out,C_in,k)` → `(m,C_out)`.
    pub fn time_conv(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let dims = self.conv_dims(x, w, b, "time_conv")?;
        if dims.kernel != dims.time {
            return Err(Error::contract(format!("time_conv: kernel {} must span the window {}", dims.kernel, dims.time)));
        }
        let out = kernels::time_conv_forward(&self.value(x).data, &self.value(w).data, &self.value(b).data, dims);
        let t = Tensor { shape: vec![dims.rows, dims.c_out], data: out };
        Ok(self.push(t, Op::TimeConv { x, w, b, dims }, &[x, w, b]))
    }

    /// Shared LSTM over each row of `(m,k,F)`; weights `(4H,F)`, `(4H,H)`,
    /// bias `(4H)`, gate order i, f, g, o. Returns the final hidden states
    /// `(m,H)`.
    pub fn lstm(&mut self, x: Var, w_ih: Var, w_hh: Var, b: Var) -> Result<Var> {
        let (xs, wi, wh, bs) = (&self.value(x).shape, &self.value(w_ih).shape, &self.value(w_hh).shape, &self.value(b).shape);
        let ok = xs.len() == 3
            && wi.len() == 2
            && wh.len() == 2
            && bs.len() == 1
            && wi[1] == xs[2]
            && wi[0] % 4 == 0
            && wh[0] == wi[0]
            && wh[1] * 4 == wh[0]
            && bs[0] == wi[0];
        if !ok {
            return Err(Error::contract(format!("lstm: input {xs:?}, w_ih {wi:?}, w_hh {wh:?}, bias {bs:?} do not fit")));
        }
        let dims = LstmDims { rows: xs[0], time: xs[1], input: xs[2], hidden: wh[1] };
        let (out, cache) =
            kernels::lstm_forward(&self.value(x).data, &self.value(w_ih).data, &self.value(w_hh).data, &self.value(b).data, dims);
        let t = Tensor { shape: vec![dims.rows, dims.hidden], data: out };
        Ok(self.push(t, Op::Lstm { x, w_ih, w_hh, b, dims, cache: Box::new(cache) }, &[x, w_ih, w_hh, b]))
    }

    /// Which side of its kink every `relu` and `abs` input lies on. Two
    /// evaluations with equal signatures lie in the same smooth piece.
    pub fn kink_signature(&self) -> Vec<bool> {
        let mut out = Vec::new();
        for node in &self.nodes {
            if let Op::Relu(a) | Op::Abs(a) = node.op {
                out.extend(self.nodes[a.0].value.data.iter().map(|&v| v > 0.0));
            }
        }
        out
    }

    /// Backpropagates from a scalar `root`.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        if !self.value(root).is_scalar() {
            return Err(Error::contract(format!("backward needs a scalar root, got shape {:?}", self.value(root).shape)));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; root.0 + 1];
        grads[root.0] = Some(vec![1.0]);
        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if node.needs_grad {
                self.propagate(node, &g, &mut grads);
            }
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let val = |v: Var| &self.nodes[v.0].value.data;
        let mut send = |v: Var, gv: &[f64]| {
            if self.nodes[v.0].needs_grad {
                accumulate(&mut grads[v.0], gv);
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                send(*a, g);
                send(*b, g);
            }
            Op::Sub(a, b) => {
                send(*a, g);
                let neg: Vec<f64> = g.iter().map(|v| -v).collect();
                send(*b, &neg);
            }
            Op::Mul(a, b) => {
                let ga: Vec<f64> = g.iter().zip(val(*b)).map(|(g, y)| g * y).collect();
                let gb: Vec<f64> = g.iter().zip(val(*a)).map(|(g, x)| g * x).collect();
                send(*a, &ga);
                send(*b, &gb);
            }
            Op::Scale(a, k) => {
                let ga: Vec<f64> = g.iter().map(|v| v * k).collect();
                send(*a, &ga);
            }
            Op::AddConst(a) | Op::Reshape(a) => send(*a, g),
            Op::MulScalar(a, s) => {
                let k = val(*s)[0];
                let ga: Vec<f64> = g.iter().map(|v| v * k).collect();
                let gs: f64 = g.iter().zip(val(*a)).map(|(g, x)| g * x).sum();
                send(*a, &ga);
                send(*s, &[gs]);
            }
            Op::AddScalar(a, s) => {
                send(*a, g);
                send(*s, &[g.iter().sum()]);
            }
            Op::Recip(a) => {
                let ga: Vec<f64> = g.iter().zip(val(*a)).map(|(g, x)| -g / (x * x)).collect();
                send(*a, &ga);
            }
            Op::Log(a) => {
                let ga: Vec<f64> = g.iter().zip(val(*a)).map(|(g, x)| g / x).collect();
                send(*a, &ga);
            }
            Op::Abs(a) => {
                // subgradient 0 at the kink
                let ga: Vec<f64> = g
                    .iter()
                    .zip(val(*a))
                    .map(|(g, x)| {
                        if *x > 0.0 {
                            *g
                        } else if *x < 0.0 {
                            -g
                        } else {
                            0.0
                        }
                    })
                    .collect();
                send(*a, &ga);
            }
            Op::Square(a) => {
                let ga: Vec<f64> = g.iter().zip(val(*a)).map(|(g, x)| 2.0 * g * x).collect();
                send(*a, &ga);
            }
            Op::Relu(a) => {
                let ga: Vec<f64> = g.iter().zip(val(*a)).map(|(g, x)| if *x > 0.0 { *g } else { 0.0 }).collect();
                send(*a, &ga);
            }
            Op::Sum(a) => {
                let ga = vec![g[0]; val(*a).len()];
                send(*a, &ga);
            }
            Op::Mean(a) => {
                let n = val(*a).len();
                let ga = vec![g[0] / n as f64; n];
                send(*a, &ga);
            }
            Op::Index(a, i) => {
                let mut ga = vec![0.0; val(*a).len()];
                ga[*i] = g[0];
                send(*a, &ga);
            }
            Op::Concat { inputs, axis } => {
                let shape_of = |v: &Var| {
                    let s = &self.nodes[v.0].value.shape;
                    if s.is_empty() {
                        vec![1]
                    } else {
                        s.clone()
                    }
                };
                let base = shape_of(&inputs[0]);
                let outer: usize = base[..*axis].iter().product();
                let inner: usize = base[axis + 1..].iter().product();
                let mut parts: Vec<Vec<f64>> = inputs.iter().map(|v| Vec::with_capacity(val(*v).len())).collect();
                let mut pos = 0;
                for _ in 0..outer {
                    for (k, v) in inputs.iter().enumerate() {
                        let len = shape_of(v)[*axis] * inner;
                        parts[k].extend_from_slice(&g[pos..pos + len]);
                        pos += len;
                    }
                }
                for (v, p) in inputs.iter().zip(parts) {
                    send(*v, &p);
                }
            }
            Op::Dropout(a, mask) => {
                let ga: Vec<f64> = g.iter().zip(mask).map(|(g, m)| g * m).collect();
                send(*a, &ga);
            }
            Op::Softmax(a) => {
                let y = &node.value.data;
                let width = *node.value.shape.last().unwrap_or(&1);
                let mut ga = vec![0.0; y.len()];
                for ((gr, yr), out) in g.chunks(width).zip(y.chunks(width)).zip(ga.chunks_mut(width)) {
                    let s: f64 = gr.iter().zip(yr).map(|(a, b)| a * b).sum();
                    for ((o, gv), yv) in out.iter_mut().zip(gr).zip(yr) {
                        *o = yv * (gv - s);
                    }
                }
                send(*a, &ga);
            }
            Op::MatVec(x, w) => {
                let wv = val(*w);
                let xv = val(*x);
                let c = wv.len();
                let mut gx = vec![0.0; xv.len()];
                let mut gw = vec![0.0; c];
                for (r, &gr) in g.iter().enumerate() {
                    for j in 0..c {
                        gx[r * c + j] = gr * wv[j];
                        gw[j] += gr * xv[r * c + j];
                    }
                }
                send(*x, &gx);
                send(*w, &gw);
            }
            Op::CausalConv { x, w, b, dims, dilation } => {
                let (dx, dw, db) = kernels::causal_conv_backward(val(*x), val(*w), g, *dims, *dilation);
                send(*x, &dx);
                send(*w, &dw);
                send(*b, &db);
            }
            Op::CorrConv { x, w, b, dims } => {
                let (dx, dw, db) = kernels::corr_conv_backward(val(*x), val(*w), g, *dims);
                send(*x, &dx);
                send(*w, &dw);
                send(*b, &db);
            }
            Op::TimeConv { x, w, b, dims } => {
                let (dx, dw, db) = kernels::time_conv_backward(val(*x), val(*w), g, *dims);
                send(*x, &dx);
                send(*w, &dw);
                send(*b, &db);
            }
            Op::Lstm { x, w_ih, w_hh, b, dims, cache } => {
                let (dx, dwi, dwh, db) = kernels::lstm_backward(val(*x), val(*w_ih), val(*w_hh), cache, g, *dims);
                send(*x, &dx);
                send(*w_ih, &dwi);
                send(*w_hh, &dwh);
                send(*b, &db);
            }
        }
    }

    /// Sums the gradients of every leaf tagged with parameter slot `id`,
    /// for `id < n_params`. Unreached slots get zeros of the right length
    /// when `lens` is given.
    pub fn param_gradients(&self, grads: &Gradients, lens: &[usize]) -> Vec<Vec<f64>> {
        let mut out: Vec<Vec<f64>> = lens.iter().map(|&n| vec![0.0; n]).collect();
        for (i, node) in self.nodes.iter().enumerate().take(grads.grads.len()) {
            if let (Some(id), Some(g)) = (node.param, grads.grads[i].as_ref()) {
                for (a, v) in out[id].iter_mut().zip(g) {
                    *a += v;
                }
            }
        }
        out
    }
}
