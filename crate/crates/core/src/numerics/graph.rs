//! Tape-based reverse-mode automatic differentiation.
//!
//! A [`Graph`] records every operation as a node holding its forward value.
//! [`Graph::backward`] walks the tape in reverse and returns gradients for the
//! leaf nodes. Graphs are rebuilt every training iteration.

use std::rc::Rc;

use rand::Rng;

use super::kernels as k;
use super::laplace;
use super::quant::{hard_round, soft_round, soft_round_grad, QuantizerMode};
use super::{Scalar, Tensor};
use crate::error::{dim_err, Error, Result};

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum QuantGrad<T> {
    Identity,
    SoftRound(T),
}

#[derive(Clone, Debug)]
enum Op<T> {
    Leaf,
    Linear { x: Var, w: Var, b: Var, rows: usize, n_in: usize, n_out: usize },
    Conv2d { x: Var, w: Var, b: Var, cin: usize, cout: usize, k: usize, h: usize, w_: usize },
    TConv { x: Var, k: Var, b: Var, h: usize, w: usize },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    /// (1, h, w) mask times (c, h, w) tensor.
    MulBcast { mask: Var, x: Var, c: usize },
    OneMinus(Var),
    Scale(Var, T),
    Relu(Var),
    ClampSte(Var),
    Quantize { x: Var, grad: QuantGrad<T> },
    Warp { src: Var, flow: Var, c: usize, h: usize, w: usize },
    Slice { x: Var, start: usize },
    Concat(Vec<Var>),
    AvgPool2 { x: Var, c: usize, h: usize, w: usize },
    Sum(Var),
    Sse(Var, Var),
    LaplaceBits { values: Var, params: Var },
    Gather { x: Var, idx: Rc<[i32]> },
    Reshape(Var),
}

#[derive(Clone, Debug)]
struct Node<T> {
    shape: Vec<usize>,
    value: Vec<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// Gradients of the leaves reached by a backward pass.
#[derive(Debug)]
pub struct Grads<T> {
    grads: Vec<Option<Vec<T>>>,
}

impl<T: Scalar> Grads<T> {
    pub fn get(&self, v: Var) -> Option<&[T]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Gradient of `v`, or zeros of `len` when nothing reached it.
    pub fn get_or_zeros(&self, v: Var, len: usize) -> Vec<T> {
        self.get(v).map(|g| g.to_vec()).unwrap_or_else(|| vec![T::zero(); len])
    }

    pub fn take(&mut self, v: Var) -> Option<Vec<T>> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

#[derive(Debug, Default)]
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
}

fn lit<T: Scalar>(v: f64) -> T {
    T::from_f64(v).unwrap()
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &[T] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn scalar_value(&self, v: Var) -> T {
        self.nodes[v.0].value[0]
    }

    pub fn needs_grad(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Copies the node's value out as a tensor.
    pub fn tensor(&self, v: Var) -> Tensor<T> {
        let n = &self.nodes[v.0];
        Tensor::new(&n.shape, n.value.clone()).expect("node shape is consistent")
    }

    fn push(&mut self, shape: Vec<usize>, value: Vec<T>, op: Op<T>, needs_grad: bool) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        self.nodes.push(Node { shape, value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].needs_grad)
    }

    /// Leaf that tracks the tensor's `requires_grad` flag.
    pub fn param(&mut self, t: &Tensor<T>) -> Var {
        self.push(t.shape().to_vec(), t.data().to_vec(), Op::Leaf, t.requires_grad)
    }

    /// Leaf excluded from differentiation.
    pub fn constant(&mut self, shape: &[usize], data: Vec<T>) -> Result<Var> {
        if shape.iter().product::<usize>() != data.len() {
            return Err(dim_err!("constant of shape {:?} with {} values", shape, data.len()));
        }
        Ok(self.push(shape.to_vec(), data, Op::Leaf, false))
    }

    pub fn constant_tensor(&mut self, t: &Tensor<T>) -> Var {
        self.push(t.shape().to_vec(), t.data().to_vec(), Op::Leaf, false)
    }

    fn check_same(&self, a: Var, b: Var, what: &str) -> Result<()> {
        if self.nodes[a.0].shape != self.nodes[b.0].shape {
            return Err(dim_err!(
                "{what}: shapes {:?} and {:?} differ",
                self.nodes[a.0].shape,
                self.nodes[b.0].shape
            ));
        }
        Ok(())
    }

    /// Batched affine map: x is (rows, in) or (in), w is (out, in), b is (out).
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        let bs = self.shape(b).to_vec();
        if ws.len() != 2 {
            return Err(dim_err!("linear: weight must be 2-D, got {:?}", ws));
        }
        let (n_out, n_in) = (ws[0], ws[1]);
        let (rows, in_x) = match xs.as_slice() {
            [n] => (1, *n),
            [r, n] => (*r, *n),
            _ => return Err(dim_err!("linear: input must be 1-D or 2-D, got {:?}", xs)),
        };
        if in_x != n_in || bs.iter().product::<usize>() != n_out {
            return Err(dim_err!("linear: input {:?}, weight {:?}, bias {:?}", xs, ws, bs));
        }
        let mut y = vec![T::zero(); rows * n_out];
        k::linear_forward(self.value(x), self.value(w), self.value(b), rows, n_in, n_out, &mut y);
        let shape = if xs.len() == 1 { vec![n_out] } else { vec![rows, n_out] };
        let ng = self.ng(&[x, w, b]);
        Ok(self.push(shape, y, Op::Linear { x, w, b, rows, n_in, n_out }, ng))
    }

    /// Same-size convolution of a (cin, h, w) input with an odd kernel.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        if xs.len() != 3 || ws.len() != 4 || ws[2] != ws[3] || ws[2] % 2 == 0 {
            return Err(dim_err!("conv2d: input {:?} / weight {:?}", xs, ws));
        }
        let (cin, h, wd) = (xs[0], xs[1], xs[2]);
        let (cout, k) = (ws[0], ws[2]);
        if ws[1] != cin {
            return Err(dim_err!("conv2d: {} input channels, weight expects {}", cin, ws[1]));
        }
        if self.shape(b).iter().product::<usize>() != cout {
            return Err(dim_err!("conv2d: bias {:?} for {} outputs", self.shape(b), cout));
        }
        let mut y = vec![T::zero(); cout * h * wd];
        k::conv2d_forward(self.value(x), self.value(w), self.value(b), cin, cout, k, h, wd, &mut y);
        let ng = self.ng(&[x, w, b]);
        Ok(self.push(vec![cout, h, wd], y, Op::Conv2d { x, w, b, cin, cout, k, h, w_: wd }, ng))
    }

    /// Stride-2 transposed convolution of a (1, h, w) plane; output (1, 2h, 2w).
    pub fn tconv2d_stride2(&mut self, x: Var, kernel: Var, b: Var) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let (h, w) = match xs.as_slice() {
            [1, h, w] | [h, w] => (*h, *w),
            _ => return Err(dim_err!("tconv2d: single-channel input expected, got {:?}", xs)),
        };
        if self.value(kernel).len() != k::TCONV_KERNEL * k::TCONV_KERNEL || self.value(b).len() != 1 {
            return Err(dim_err!(
                "tconv2d: kernel {:?} / bias {:?}",
                self.shape(kernel),
                self.shape(b)
            ));
        }
        let mut y = vec![T::zero(); 4 * h * w];
        let bias = self.value(b)[0];
        k::tconv2d_forward(self.value(x), self.value(kernel), bias, h, w, &mut y);
        let ng = self.ng(&[x, kernel, b]);
        Ok(self.push(vec![1, 2 * h, 2 * w], y, Op::TConv { x, k: kernel, b, h, w }, ng))
    }

    fn binary(&mut self, a: Var, b: Var, what: &str, f: impl Fn(T, T) -> T, op: Op<T>) -> Result<Var> {
        self.check_same(a, b, what)?;
        let y: Vec<T> = self.value(a).iter().zip(self.value(b)).map(|(&x, &y)| f(x, y)).collect();
        let ng = self.ng(&[a, b]);
        Ok(self.push(self.shape(a).to_vec(), y, op, ng))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    /// Multiplies every channel of `x` (c, h, w) by the (1, h, w) `mask`.
    pub fn mul_bcast(&mut self, mask: Var, x: Var) -> Result<Var> {
        let ms = self.shape(mask).to_vec();
        let xs = self.shape(x).to_vec();
        if xs.len() != 3 || ms.len() != 3 || ms[0] != 1 || ms[1..] != xs[1..] {
            return Err(dim_err!("mul_bcast: mask {:?} vs input {:?}", ms, xs));
        }
        let c = xs[0];
        let hw = xs[1] * xs[2];
        let m = self.value(mask);
        let y: Vec<T> = self.value(x).iter().enumerate().map(|(i, &v)| m[i % hw] * v).collect();
        let ng = self.ng(&[mask, x]);
        Ok(self.push(xs, y, Op::MulBcast { mask, x, c }, ng))
    }

    pub fn one_minus(&mut self, a: Var) -> Var {
        let y = self.value(a).iter().map(|&v| T::one() - v).collect();
        let ng = self.ng(&[a]);
        self.push(self.shape(a).to_vec(), y, Op::OneMinus(a), ng)
    }

    pub fn scale(&mut self, a: Var, s: T) -> Var {
        let y = self.value(a).iter().map(|&v| v * s).collect();
        let ng = self.ng(&[a]);
        self.push(self.shape(a).to_vec(), y, Op::Scale(a, s), ng)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let y = self.value(a).iter().map(|&v| v.max(T::zero())).collect();
        let ng = self.ng(&[a]);
        self.push(self.shape(a).to_vec(), y, Op::Relu(a), ng)
    }

    /// Clamp to [0, 1] forward; gradient passes through unchanged.
    pub fn clamp01_ste(&mut self, a: Var) -> Var {
        let y = self.value(a).iter().map(|&v| v.max(T::zero()).min(T::one())).collect();
        let ng = self.ng(&[a]);
        self.push(self.shape(a).to_vec(), y, Op::ClampSte(a), ng)
    }

    /// Applies a quantization surrogate. Only `AdditiveNoise` draws from `rng`.
    pub fn quantize<R: Rng + ?Sized>(&mut self, x: Var, mode: QuantizerMode, rng: &mut R) -> Result<Var> {
        mode.validate()?;
        let xv = self.value(x);
        let (y, grad) = match mode {
            QuantizerMode::AdditiveNoise(a) => {
                let y = xv
                    .iter()
                    .map(|&v| {
                        let u: f64 = rng.gen::<f64>() - 0.5;
                        v + lit::<T>(u * a)
                    })
                    .collect();
                (y, QuantGrad::Identity)
            }
            QuantizerMode::SoftRound(t) => {
                let t = lit::<T>(t);
                (xv.iter().map(|&v| soft_round(v, t)).collect(), QuantGrad::SoftRound(t))
            }
            QuantizerMode::HardRoundSte => (xv.iter().map(|&v| hard_round(v)).collect(), QuantGrad::Identity),
        };
        let ng = self.ng(&[x]);
        Ok(self.push(self.shape(x).to_vec(), y, Op::Quantize { x, grad }, ng))
    }

    /// Bilinear backward warp of a (c, h, w) source by a (2, h, w) flow.
    pub fn warp(&mut self, src: Var, flow: Var) -> Result<Var> {
        let ss = self.shape(src).to_vec();
        let fs = self.shape(flow).to_vec();
        if ss.len() != 3 || fs.len() != 3 || fs[0] != 2 || ss[1..] != fs[1..] {
            return Err(dim_err!("warp: source {:?} / flow {:?}", ss, fs));
        }
        let (c, h, w) = (ss[0], ss[1], ss[2]);
        let mut y = vec![T::zero(); c * h * w];
        k::warp_forward(self.value(src), self.value(flow), c, h, w, &mut y);
        let ng = self.ng(&[src, flow]);
        Ok(self.push(ss, y, Op::Warp { src, flow, c, h, w }, ng))
    }

    /// Channels `[start, start + count)` of a (c, h, w) tensor.
    pub fn slice_channels(&mut self, x: Var, start: usize, count: usize) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        if xs.len() != 3 || start + count > xs[0] || count == 0 {
            return Err(dim_err!("slice_channels: [{start}, {}) of {:?}", start + count, xs));
        }
        let hw = xs[1] * xs[2];
        let y = self.value(x)[start * hw..(start + count) * hw].to_vec();
        let ng = self.ng(&[x]);
        Ok(self.push(vec![count, xs[1], xs[2]], y, Op::Slice { x, start: start * hw }, ng))
    }

    /// Column `col` of a (rows, cols) matrix as a flat vector.
    pub fn column(&mut self, x: Var, col: usize) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        if xs.len() != 2 || col >= xs[1] {
            return Err(dim_err!("column {col} of {:?}", xs));
        }
        let (rows, cols) = (xs[0], xs[1]);
        let idx: Rc<[i32]> = (0..rows).map(|r| (r * cols + col) as i32).collect();
        self.gather(x, idx, &[rows])
    }

    /// Stacks (c_i, h, w) tensors along the channel axis.
    pub fn concat_channels(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts.first().ok_or_else(|| dim_err!("concat of nothing"))?;
        let fs = self.shape(*first).to_vec();
        if fs.len() != 3 {
            return Err(dim_err!("concat_channels: expected (c, h, w), got {:?}", fs));
        }
        let mut c = 0;
        let mut y = Vec::new();
        for &p in parts {
            let ps = self.shape(p);
            if ps.len() != 3 || ps[1..] != fs[1..] {
                return Err(dim_err!("concat_channels: {:?} vs {:?}", ps, fs));
            }
            c += ps[0];
            y.extend_from_slice(self.value(p));
        }
        let ng = self.ng(parts);
        Ok(self.push(vec![c, fs[1], fs[2]], y, Op::Concat(parts.to_vec()), ng))
    }

    /// 2x2 average pooling of a (c, h, w) tensor with even h, w.
    pub fn avgpool2(&mut self, x: Var) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        if xs.len() != 3 || xs[1] % 2 != 0 || xs[2] % 2 != 0 {
            return Err(dim_err!("avgpool2 needs (c, even h, even w), got {:?}", xs));
        }
        let (c, h, w) = (xs[0], xs[1], xs[2]);
        let mut y = vec![T::zero(); c * h * w / 4];
        k::avgpool2_forward(self.value(x), c, h, w, &mut y);
        let ng = self.ng(&[x]);
        Ok(self.push(vec![c, h / 2, w / 2], y, Op::AvgPool2 { x, c, h, w }, ng))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let mut acc = T::zero();
        for &v in self.value(x) {
            acc += v;
        }
        let ng = self.ng(&[x]);
        self.push(vec![1], vec![acc], Op::Sum(x), ng)
    }

    /// Sum of squared differences.
    pub fn sse(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_same(a, b, "sse")?;
        let mut acc = T::zero();
        for (&x, &y) in self.value(a).iter().zip(self.value(b)) {
            acc += (x - y) * (x - y);
        }
        let ng = self.ng(&[a, b]);
        Ok(self.push(vec![1], vec![acc], Op::Sse(a, b), ng))
    }

    /// Per-element bits `-log2(max(P, 2^-16))` of `values` (n) under discretized
    /// Laplace distributions whose (mu, raw log-scale) are the rows of `params` (n, 2).
    /// The log-scale is clamped to [-10, 10] with zero gradient outside.
    pub fn laplace_bits(&mut self, values: Var, params: Var) -> Result<Var> {
        let n = self.value(values).len();
        let ps = self.shape(params);
        if ps != [n, 2] {
            return Err(dim_err!("laplace_bits: {} values vs params {:?}", n, ps));
        }
        let v = self.value(values);
        let p = self.value(params);
        let floor = lit::<T>(laplace::PROB_FLOOR);
        let y = (0..n)
            .map(|i| {
                let ls = laplace::clamp_log_scale(p[2 * i + 1]);
                let (m, ..) = laplace::mass_and_grads(v[i], p[2 * i], ls);
                -(m.max(floor)).log2()
            })
            .collect();
        let ng = self.ng(&[values, params]);
        Ok(self.push(vec![n], y, Op::LaplaceBits { values, params }, ng))
    }

    /// `y[j] = x[idx[j]]`, or zero where `idx[j] < 0`.
    pub fn gather(&mut self, x: Var, idx: Rc<[i32]>, shape: &[usize]) -> Result<Var> {
        if shape.iter().product::<usize>() != idx.len() {
            return Err(dim_err!("gather: {} indices for shape {:?}", idx.len(), shape));
        }
        let xv = self.value(x);
        if let Some(bad) = idx.iter().find(|&&i| i >= xv.len() as i32) {
            return Err(dim_err!("gather: index {bad} out of {}", xv.len()));
        }
        let y = idx.iter().map(|&i| if i < 0 { T::zero() } else { xv[i as usize] }).collect();
        let ng = self.ng(&[x]);
        Ok(self.push(shape.to_vec(), y, Op::Gather { x, idx }, ng))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        if shape.iter().product::<usize>() != self.value(x).len() {
            return Err(dim_err!("reshape {:?} -> {:?}", self.shape(x), shape));
        }
        let y = self.value(x).to_vec();
        let ng = self.ng(&[x]);
        Ok(self.push(shape.to_vec(), y, Op::Reshape(x), ng))
    }

    /// Verifies that every node value is finite.
    pub fn check_finite(&self) -> Result<()> {
        for (i, n) in self.nodes.iter().enumerate() {
            if n.value.iter().any(|v| !v.is_finite()) {
                return Err(Error::Training(format!("non-finite value in node {i} ({:?})", op_name(&n.op))));
            }
        }
        Ok(())
    }

    /// Hash of every discrete decision taken in the forward pass (ReLU masks,
    /// rounding results, bilinear taps, probability floors). Two evaluations
    /// with equal signatures lie on the same smooth piece of the function.
    pub fn kink_signature(&self) -> u64 {
        let mut acc = 0xcbf2_9ce4_8422_2325u64;
        let mut mix = |v: u64| acc = (acc ^ v).wrapping_mul(0x0100_0000_01b3);
        for n in &self.nodes {
            match &n.op {
                Op::Relu(x) => self.nodes[x.0].value.iter().for_each(|&v| mix((v > T::zero()) as u64)),
                Op::ClampSte(x) => self.nodes[x.0].value.iter().for_each(|&v| {
                    mix((v < T::zero()) as u64 | (((v > T::one()) as u64) << 1));
                }),
                Op::Quantize { x, .. } => {
                    self.nodes[x.0].value.iter().for_each(|&v| mix(v.floor().to_i64().unwrap_or(0) as u64));
                    n.value.iter().for_each(|&v| mix(v.round().to_i64().unwrap_or(0) as u64));
                }
                Op::Warp { flow, h, w, .. } => mix(k::warp_tap_signature(&self.nodes[flow.0].value, *h, *w)),
                Op::LaplaceBits { values, params } => {
                    let v = &self.nodes[values.0].value;
                    let p = &self.nodes[params.0].value;
                    let floor = lit::<T>(laplace::PROB_FLOOR);
                    for i in 0..v.len() {
                        let raw = p[2 * i + 1];
                        let ls = laplace::clamp_log_scale(raw);
                        let (m, ..) = laplace::mass_and_grads(v[i], p[2 * i], ls);
                        let half = lit::<T>(0.5);
                        let side = ((v[i] - half - p[2 * i]) >= T::zero()) as u64
                            | ((((v[i] + half - p[2 * i]) <= T::zero()) as u64) << 1);
                        mix((m < floor) as u64 | ((ls != raw) as u64) << 2 | side << 3);
                    }
                }
                _ => {}
            }
        }
        acc
    }

    /// Reverse pass from the scalar `loss`. Returns gradients for leaves.
    pub fn backward(&self, loss: Var) -> Result<Grads<T>> {
        if self.nodes[loss.0].value.len() != 1 {
            return Err(dim_err!("backward needs a scalar loss, got shape {:?}", self.shape(loss)));
        }
        let n = self.nodes.len();
        let mut grads: Vec<Option<Vec<T>>> = vec![None; n];
        grads[loss.0] = Some(vec![T::one()]);
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if matches!(node.op, Op::Leaf) || !node.needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backward_node(node, &g, &mut grads);
        }
        // keep only leaf gradients
        for (i, node) in self.nodes.iter().enumerate() {
            if !matches!(node.op, Op::Leaf) {
                grads[i] = None;
            }
        }
        for g in grads.iter().flatten() {
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::Training("non-finite gradient".into()));
            }
        }
        Ok(Grads { grads })
    }

    fn buf(&self, grads: &mut [Option<Vec<T>>], v: Var) -> Option<Vec<T>> {
        if !self.nodes[v.0].needs_grad {
            return None;
        }
        Some(grads[v.0].take().unwrap_or_else(|| vec![T::zero(); self.nodes[v.0].value.len()]))
    }

    fn with_buf(&self, grads: &mut [Option<Vec<T>>], v: Var, f: impl FnOnce(&mut [T])) {
        if let Some(mut b) = self.buf(grads, v) {
            f(&mut b);
            grads[v.0] = Some(b);
        }
    }

    fn backward_node(&self, node: &Node<T>, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let val = |v: &Var| &self.nodes[v.0].value[..];
        match &node.op {
            Op::Leaf => {}
            Op::Linear { x, w, b, rows, n_in, n_out } => {
                debug_assert!(x != w && w != b && x != b);
                let mut gx = self.buf(grads, *x);
                let mut gw = self.buf(grads, *w);
                let mut gb = self.buf(grads, *b);
                k::linear_backward(
                    val(x),
                    val(w),
                    g,
                    *rows,
                    *n_in,
                    *n_out,
                    gx.as_deref_mut(),
                    gw.as_deref_mut(),
                    gb.as_deref_mut(),
                );
                for (v, bf) in [(x, gx), (w, gw), (b, gb)] {
                    if bf.is_some() {
                        grads[v.0] = bf;
                    }
                }
            }
            Op::Conv2d { x, w, b, cin, cout, k: ks, h, w_ } => {
                debug_assert!(x != w && w != b && x != b);
                let mut gx = self.buf(grads, *x);
                let mut gw = self.buf(grads, *w);
                let mut gb = self.buf(grads, *b);
                k::conv2d_backward(
                    val(x),
                    val(w),
                    g,
                    *cin,
                    *cout,
                    *ks,
                    *h,
                    *w_,
                    gx.as_deref_mut(),
                    gw.as_deref_mut(),
                    gb.as_deref_mut(),
                );
                for (v, bf) in [(x, gx), (w, gw), (b, gb)] {
                    if bf.is_some() {
                        grads[v.0] = bf;
                    }
                }
            }
            Op::TConv { x, k: kv, b, h, w } => {
                let mut gx = self.buf(grads, *x);
                let mut gk = self.buf(grads, *kv);
                let mut gb = self.buf(grads, *b);
                k::tconv2d_backward(
                    val(x),
                    val(kv),
                    g,
                    *h,
                    *w,
                    gx.as_deref_mut(),
                    gk.as_deref_mut(),
                    gb.as_mut().map(|v| &mut v[0]),
                );
                for (v, bf) in [(x, gx), (kv, gk), (b, gb)] {
                    if bf.is_some() {
                        grads[v.0] = bf;
                    }
                }
            }
            Op::Add(a, b) => {
                self.with_buf(grads, *a, |d| d.iter_mut().zip(g).for_each(|(d, &g)| *d += g));
                self.with_buf(grads, *b, |d| d.iter_mut().zip(g).for_each(|(d, &g)| *d += g));
            }
            Op::Sub(a, b) => {
                self.with_buf(grads, *a, |d| d.iter_mut().zip(g).for_each(|(d, &g)| *d += g));
                self.with_buf(grads, *b, |d| d.iter_mut().zip(g).for_each(|(d, &g)| *d -= g));
            }
            Op::Mul(a, b) => {
                let (av, bv) = (val(a), val(b));
                self.with_buf(grads, *a, |d| {
                    for i in 0..d.len() {
                        d[i] += g[i] * bv[i];
                    }
                });
                self.with_buf(grads, *b, |d| {
                    for i in 0..d.len() {
                        d[i] += g[i] * av[i];
                    }
                });
            }
            Op::MulBcast { mask, x, c } => {
                let (mv, xv) = (val(mask), val(x));
                let hw = mv.len();
                self.with_buf(grads, *mask, |d| {
                    for ch in 0..*c {
                        for p in 0..hw {
                            d[p] += g[ch * hw + p] * xv[ch * hw + p];
                        }
                    }
                });
                self.with_buf(grads, *x, |d| {
                    for i in 0..d.len() {
                        d[i] += g[i] * mv[i % hw];
                    }
                });
            }
            Op::OneMinus(a) => {
                self.with_buf(grads, *a, |d| d.iter_mut().zip(g).for_each(|(d, &g)| *d -= g));
            }
            Op::Scale(a, s) => {
                self.with_buf(grads, *a, |d| d.iter_mut().zip(g).for_each(|(d, &g)| *d += g * *s));
            }
            Op::Relu(a) => {
                let av = val(a);
                self.with_buf(grads, *a, |d| {
                    for i in 0..d.len() {
                        if av[i] > T::zero() {
                            d[i] += g[i];
                        }
                    }
                });
            }
            Op::ClampSte(a) | Op::Reshape(a) => {
                self.with_buf(grads, *a, |d| d.iter_mut().zip(g).for_each(|(d, &g)| *d += g));
            }
            Op::Quantize { x, grad } => {
                let xv = val(x);
                self.with_buf(grads, *x, |d| match grad {
                    QuantGrad::Identity => d.iter_mut().zip(g).for_each(|(d, &g)| *d += g),
                    QuantGrad::SoftRound(t) => {
                        for i in 0..d.len() {
                            d[i] += g[i] * soft_round_grad(xv[i], *t);
                        }
                    }
                });
            }
            Op::Warp { src, flow, c, h, w } => {
                let mut gs = self.buf(grads, *src);
                let mut gf = self.buf(grads, *flow);
                k::warp_backward(val(src), val(flow), g, *c, *h, *w, gs.as_deref_mut(), gf.as_deref_mut());
                if gs.is_some() {
                    grads[src.0] = gs;
                }
                if gf.is_some() {
                    grads[flow.0] = gf;
                }
            }
            Op::Slice { x, start } => {
                self.with_buf(grads, *x, |d| {
                    d[*start..*start + g.len()].iter_mut().zip(g).for_each(|(d, &g)| *d += g)
                });
            }
            Op::Concat(parts) => {
                let mut off = 0;
                for p in parts {
                    let len = self.nodes[p.0].value.len();
                    let gs = &g[off..off + len];
                    self.with_buf(grads, *p, |d| d.iter_mut().zip(gs).for_each(|(d, &g)| *d += g));
                    off += len;
                }
            }
            Op::AvgPool2 { x, c, h, w } => {
                self.with_buf(grads, *x, |d| k::avgpool2_backward(g, *c, *h, *w, d));
            }
            Op::Sum(x) => {
                let g0 = g[0];
                self.with_buf(grads, *x, |d| d.iter_mut().for_each(|d| *d += g0));
            }
            Op::Sse(a, b) => {
                let (av, bv) = (val(a), val(b));
                let two = g[0] + g[0];
                self.with_buf(grads, *a, |d| {
                    for i in 0..d.len() {
                        d[i] += two * (av[i] - bv[i]);
                    }
                });
                self.with_buf(grads, *b, |d| {
                    for i in 0..d.len() {
                        d[i] -= two * (av[i] - bv[i]);
                    }
                });
            }
            Op::LaplaceBits { values, params } => {
                let (v, p) = (val(values), val(params));
                let n = v.len();
                let floor = lit::<T>(laplace::PROB_FLOOR);
                let inv_ln2 = lit::<T>(std::f64::consts::LOG2_E);
                let lo = lit::<T>(laplace::LOG_SCALE_MIN);
                let hi = lit::<T>(laplace::LOG_SCALE_MAX);
                let mut dv = vec![T::zero(); n];
                let mut dp = vec![T::zero(); 2 * n];
                for i in 0..n {
                    let raw = p[2 * i + 1];
                    let ls = laplace::clamp_log_scale(raw);
                    let (m, d_val, d_mu, d_ls) = laplace::mass_and_grads(v[i], p[2 * i], ls);
                    if m < floor {
                        continue;
                    }
                    let dbits = -g[i] * inv_ln2 / m;
                    dv[i] = dbits * d_val;
                    dp[2 * i] = dbits * d_mu;
                    if raw > lo && raw < hi {
                        dp[2 * i + 1] = dbits * d_ls;
                    }
                }
                self.with_buf(grads, *values, |d| d.iter_mut().zip(&dv).for_each(|(d, &g)| *d += g));
                self.with_buf(grads, *params, |d| d.iter_mut().zip(&dp).for_each(|(d, &g)| *d += g));
            }
            Op::Gather { x, idx } => {
                self.with_buf(grads, *x, |d| {
                    for (j, &i) in idx.iter().enumerate() {
                        if i >= 0 {
                            d[i as usize] += g[j];
                        }
                    }
                });
            }
        }
    }
}

fn op_name<T>(op: &Op<T>) -> &'static str {
    match op {
        Op::Leaf => "leaf",
        Op::Linear { .. } => "linear",
        Op::Conv2d { .. } => "conv2d",
        Op::TConv { .. } => "tconv2d",
        Op::Add(..) => "add",
        Op::Sub(..) => "sub",
        Op::Mul(..) => "mul",
        Op::MulBcast { .. } => "mul_bcast",
        Op::OneMinus(_) => "one_minus",
        Op::Scale(..) => "scale",
        Op::Relu(_) => "relu",
        Op::ClampSte(_) => "clamp",
        Op::Quantize { .. } => "quantize",
        Op::Warp { .. } => "warp",
        Op::Slice { .. } => "slice",
        Op::Concat(_) => "concat",
        Op::AvgPool2 { .. } => "avgpool2",
        Op::Sum(_) => "sum",
        Op::Sse(..) => "sse",
        Op::LaplaceBits { .. } => "laplace_bits",
        Op::Gather { .. } => "gather",
        Op::Reshape(_) => "reshape",
    }
}
