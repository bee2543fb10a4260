//! Tensor-level reverse-mode automatic differentiation.
//!
//! Every operation appends a node holding its output value to the [`Tape`].
//! [`Tape::backward_from`] walks the nodes in reverse, propagating the seed
//! gradient into every node and every parameter it touched. Feature maps are
//! rank-3 `[C, H, W]` tensors for a single image.

use crate::error::{Error, Result};

use super::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Conv { input: NodeId, weight: usize, bias: usize },
    Relu(NodeId),
    AvgPool2(NodeId),
    Upsample2(NodeId),
    Concat(NodeId, NodeId),
    Sigmoid(NodeId),
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    value: Tensor,
}

#[derive(Debug, Clone, Default)]
pub struct Tape {
    params: Vec<Tensor>,
    nodes: Vec<Node>,
    output: Option<NodeId>,
}

/// Result of a backward pass.
#[derive(Debug, Clone)]
pub struct Gradients {
    params: Vec<Vec<f64>>,
    nodes: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn param(&self, index: usize) -> &[f64] {
        &self.params[index]
    }

    pub fn params(&self) -> &[Vec<f64>] {
        &self.params
    }

    pub fn into_params(self) -> Vec<Vec<f64>> {
        self.params
    }

    /// Gradient reaching `node`; `None` if the output does not depend on it.
    pub fn node(&self, node: NodeId) -> Option<&[f64]> {
        self.nodes[node.0].as_deref()
    }
}

impl Tape {
    /// Start a tape that records operations over a snapshot of `params`.
    pub fn new(params: &[Tensor]) -> Self {
        Self { params: params.to_vec(), nodes: Vec::new(), output: None }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn value(&self, node: NodeId) -> &Tensor {
        &self.nodes[node.0].value
    }

    pub fn output(&self) -> Option<NodeId> {
        self.output
    }

    pub fn set_output(&mut self, node: NodeId) {
        self.output = Some(node);
    }

    fn push(&mut self, op: Op, value: Tensor) -> NodeId {
        self.nodes.push(Node { op, value });
        NodeId(self.nodes.len() - 1)
    }

    pub fn input(&mut self, value: Tensor) -> Result<NodeId> {
        if value.shape().len() != 3 {
            return Err(Error::ShapeMismatch(format!("feature map must be [C, H, W], got {:?}", value.shape())));
        }
        Ok(self.push(Op::Leaf, value))
    }

    /// Same-padded stride-1 convolution. `weight` is `[out, in, k, k]` with
    /// odd `k`, `bias` is `[out]`; both are parameter indices.
    pub fn conv(&mut self, input: NodeId, weight: usize, bias: usize) -> Result<NodeId> {
        let x = &self.nodes[input.0].value;
        let (c_in, h, w) = x.chw();
        let wt = self.params.get(weight).ok_or_else(|| bad_param(weight))?;
        let bt = self.params.get(bias).ok_or_else(|| bad_param(bias))?;
        let ws = wt.shape();
        if ws.len() != 4 || ws[1] != c_in || ws[2] != ws[3] || ws[2] % 2 == 0 || bt.shape() != [ws[0]] {
            return Err(Error::ShapeMismatch(format!(
                "conv weight {ws:?} / bias {:?} incompatible with {c_in}-channel input",
                bt.shape()
            )));
        }
        let (c_out, k) = (ws[0], ws[2]);
        let mut out = vec![0.0; c_out * h * w];
        conv_forward(x.values(), c_in, h, w, wt.values(), bt.values(), c_out, k, &mut out);
        Ok(self.push(Op::Conv { input, weight, bias }, Tensor::new(vec![c_out, h, w], out)?))
    }

    pub fn relu(&mut self, input: NodeId) -> NodeId {
        let x = &self.nodes[input.0].value;
        let v = x.values().iter().map(|&v| v.max(0.0)).collect();
        let t = Tensor::new(x.shape().to_vec(), v).expect("same shape");
        self.push(Op::Relu(input), t)
    }

    pub fn sigmoid(&mut self, input: NodeId) -> NodeId {
        let x = &self.nodes[input.0].value;
        let v = x.values().iter().map(|&v| sigmoid(v)).collect();
        let t = Tensor::new(x.shape().to_vec(), v).expect("same shape");
        self.push(Op::Sigmoid(input), t)
    }

    /// 2x2 average pooling, stride 2.
    pub fn avg_pool2(&mut self, input: NodeId) -> Result<NodeId> {
        let x = &self.nodes[input.0].value;
        let (c, h, w) = x.chw();
        if h % 2 != 0 || w % 2 != 0 {
            return Err(Error::ShapeMismatch(format!("cannot pool odd-sized {w}x{h} map")));
        }
        let (ho, wo) = (h / 2, w / 2);
        let xv = x.values();
        let mut out = vec![0.0; c * ho * wo];
        for ch in 0..c {
            for y in 0..ho {
                for xo in 0..wo {
                    let base = ch * h * w + 2 * y * w + 2 * xo;
                    out[ch * ho * wo + y * wo + xo] =
                        0.25 * (xv[base] + xv[base + 1] + xv[base + w] + xv[base + w + 1]);
                }
            }
        }
        Ok(self.push(Op::AvgPool2(input), Tensor::new(vec![c, ho, wo], out)?))
    }

    /// 2x nearest-neighbour upsampling.
    pub fn upsample2(&mut self, input: NodeId) -> NodeId {
        let x = &self.nodes[input.0].value;
        let (c, h, w) = x.chw();
        let (ho, wo) = (2 * h, 2 * w);
        let xv = x.values();
        let mut out = vec![0.0; c * ho * wo];
        for ch in 0..c {
            for y in 0..ho {
                let src = &xv[ch * h * w + (y / 2) * w..][..w];
                let dst = &mut out[ch * ho * wo + y * wo..][..wo];
                for (xo, d) in dst.iter_mut().enumerate() {
                    *d = src[xo / 2];
                }
            }
        }
        self.push(Op::Upsample2(input), Tensor::new(vec![c, ho, wo], out).expect("sized"))
    }

    /// Channel concatenation `[a; b]`.
    pub fn concat(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let ((ca, ha, wa), (cb, hb, wb)) = (ta.chw(), tb.chw());
        if (ha, wa) != (hb, wb) {
            return Err(Error::ShapeMismatch(format!("concat of {wa}x{ha} and {wb}x{hb} maps")));
        }
        let mut v = Vec::with_capacity(ta.len() + tb.len());
        v.extend_from_slice(ta.values());
        v.extend_from_slice(tb.values());
        Ok(self.push(Op::Concat(a, b), Tensor::new(vec![ca + cb, ha, wa], v)?))
    }

    /// Propagate `seed` (dOutput/d`from`) back through the tape.
    pub fn backward_from(&self, from: NodeId, seed: &[f64]) -> Result<Gradients> {
        if self.nodes.is_empty() {
            return Err(Error::EmptyTape);
        }
        if seed.len() != self.nodes[from.0].value.len() {
            return Err(Error::ShapeMismatch(format!(
                "seed gradient has {} values, node has {}",
                seed.len(),
                self.nodes[from.0].value.len()
            )));
        }
        let mut params: Vec<Vec<f64>> = self.params.iter().map(|p| vec![0.0; p.len()]).collect();
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[from.0] = Some(seed.to_vec());

        for idx in (0..=from.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match node.op {
                Op::Leaf => {}
                Op::Relu(x) => {
                    let xv = self.nodes[x.0].value.values();
                    let gx = g.iter().zip(xv).map(|(&g, &v)| if v > 0.0 { g } else { 0.0 });
                    accumulate(&mut grads[x.0], gx, xv.len());
                }
                Op::Sigmoid(x) => {
                    let yv = node.value.values();
                    let gx = g.iter().zip(yv).map(|(&g, &y)| g * y * (1.0 - y));
                    accumulate(&mut grads[x.0], gx, yv.len());
                }
                Op::AvgPool2(x) => {
                    let (c, h, w) = self.nodes[x.0].value.chw();
                    let (ho, wo) = (h / 2, w / 2);
                    let mut gx = vec![0.0; c * h * w];
                    for ch in 0..c {
                        for y in 0..h {
                            for xx in 0..w {
                                gx[ch * h * w + y * w + xx] = 0.25 * g[ch * ho * wo + (y / 2) * wo + xx / 2];
                            }
                        }
                    }
                    accumulate(&mut grads[x.0], gx.into_iter(), c * h * w);
                }
                Op::Upsample2(x) => {
                    let (c, h, w) = self.nodes[x.0].value.chw();
                    let (ho, wo) = (2 * h, 2 * w);
                    let mut gx = vec![0.0; c * h * w];
                    for ch in 0..c {
                        for y in 0..ho {
                            for xo in 0..wo {
                                gx[ch * h * w + (y / 2) * w + xo / 2] += g[ch * ho * wo + y * wo + xo];
                            }
                        }
                    }
                    accumulate(&mut grads[x.0], gx.into_iter(), c * h * w);
                }
                Op::Concat(a, b) => {
                    let na = self.nodes[a.0].value.len();
                    let nb = self.nodes[b.0].value.len();
                    accumulate(&mut grads[a.0], g[..na].iter().copied(), na);
                    accumulate(&mut grads[b.0], g[na..].iter().copied(), nb);
                }
                Op::Conv { input, weight, bias } => {
                    let x = &self.nodes[input.0].value;
                    let (c_in, h, w) = x.chw();
                    let ws = self.params[weight].shape();
                    let (c_out, k) = (ws[0], ws[2]);
                    let mut gx = vec![0.0; x.len()];
                    let (gw, gb) = two_mut(&mut params, weight, bias);
                    conv_backward(
                        x.values(),
                        c_in,
                        h,
                        w,
                        self.params[weight].values(),
                        c_out,
                        k,
                        &g,
                        &mut gx,
                        gw,
                        gb,
                    );
                    accumulate(&mut grads[input.0], gx.into_iter(), x.len());
                }
            }
            grads[idx] = Some(g);
        }
        Ok(Gradients { params, nodes: grads })
    }
}

fn bad_param(i: usize) -> Error {
    Error::InvalidArgument(format!("no parameter tensor at index {i}"))
}

fn accumulate(slot: &mut Option<Vec<f64>>, g: impl Iterator<Item = f64>, len: usize) {
    match slot {
        Some(acc) => acc.iter_mut().zip(g).for_each(|(a, g)| *a += g),
        None => {
            let v: Vec<f64> = g.collect();
            debug_assert_eq!(v.len(), len);
            *slot = Some(v);
        }
    }
}

fn two_mut(v: &mut [Vec<f64>], a: usize, b: usize) -> (&mut [f64], &mut [f64]) {
    assert_ne!(a, b, "weight and bias must be distinct parameters");
    if a < b {
        let (lo, hi) = v.split_at_mut(b);
        (&mut lo[a], &mut hi[0])
    } else {
        let (lo, hi) = v.split_at_mut(a);
        (&mut hi[0], &mut lo[b])
    }
}

/// Largest f64 below 1.
const BELOW_ONE: f64 = 1.0 - f64::EPSILON / 2.0;

/// Logistic function, kept inside the open interval (0, 1) where it would
/// otherwise round to an endpoint.
pub(crate) fn sigmoid(x: f64) -> f64 {
    let y = if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    };
    y.clamp(f64::MIN_POSITIVE, BELOW_ONE)
}

#[allow(clippy::too_many_arguments)]
fn conv_forward(
    x: &[f64],
    c_in: usize,
    h: usize,
    w: usize,
    weight: &[f64],
    bias: &[f64],
    c_out: usize,
    k: usize,
    out: &mut [f64],
) {
    let p = k / 2;
    let xp = pad(x, c_in, h, w, p);
    correlate(&xp, c_in, h + 2 * p, w + 2 * p, weight, Some(bias), c_out, k, out);
}

/// Copy `c` planes of `h x w` into zero-bordered planes of `(h + 2p) x (w + 2p)`.
fn pad(x: &[f64], c: usize, h: usize, w: usize, p: usize) -> Vec<f64> {
    let (hp, wp) = (h + 2 * p, w + 2 * p);
    let mut out = vec![0.0; c * hp * wp];
    for ch in 0..c {
        for y in 0..h {
            let dst = ch * hp * wp + (y + p) * wp + p;
            out[dst..dst + w].copy_from_slice(&x[(ch * h + y) * w..][..w]);
        }
    }
    out
}

const LANES: usize = 8;

/// Valid cross-correlation of padded planes `xp` (`c_in x hp x wp`) with
/// `c_out x c_in x k x k` kernels; writes `c_out x (hp-k+1) x (wp-k+1)`.
#[allow(clippy::too_many_arguments)]
fn correlate(
    xp: &[f64],
    c_in: usize,
    hp: usize,
    wp: usize,
    weight: &[f64],
    bias: Option<&[f64]>,
    c_out: usize,
    k: usize,
    out: &mut [f64],
) {
    match k {
        1 => correlate_k::<1>(xp, c_in, hp, wp, weight, bias, c_out, out),
        3 => correlate_k::<3>(xp, c_in, hp, wp, weight, bias, c_out, out),
        5 => correlate_k::<5>(xp, c_in, hp, wp, weight, bias, c_out, out),
        _ => correlate_any(xp, c_in, hp, wp, weight, bias, c_out, k, out),
    }
}

#[allow(clippy::too_many_arguments)]
fn correlate_k<const K: usize>(
    xp: &[f64],
    c_in: usize,
    hp: usize,
    wp: usize,
    weight: &[f64],
    bias: Option<&[f64]>,
    c_out: usize,
    out: &mut [f64],
) {
    let (ho, wo) = (hp + 1 - K, wp + 1 - K);
    let plane = hp * wp;
    let kk = K * K;
    for o in 0..c_out {
        let b = bias.map_or(0.0, |b| b[o]);
        let w_o = &weight[o * c_in * kk..(o + 1) * c_in * kk];
        for y in 0..ho {
            let out_row = &mut out[(o * ho + y) * wo..][..wo];
            let mut x = 0;
            while x + LANES <= wo {
                let mut acc = [b; LANES];
                for (i, w_i) in w_o.chunks_exact(kk).enumerate() {
                    for ky in 0..K {
                        let start = i * plane + (y + ky) * wp + x;
                        let row = &xp[start..start + LANES + K - 1];
                        for kx in 0..K {
                            let wv = w_i[ky * K + kx];
                            for j in 0..LANES {
                                acc[j] += wv * row[kx + j];
                            }
                        }
                    }
                }
                out_row[x..x + LANES].copy_from_slice(&acc);
                x += LANES;
            }
            for (xx, o_v) in out_row.iter_mut().enumerate().skip(x) {
                let mut acc = b;
                for (i, w_i) in w_o.chunks_exact(kk).enumerate() {
                    for ky in 0..K {
                        let row = &xp[i * plane + (y + ky) * wp + xx..][..K];
                        for kx in 0..K {
                            acc += w_i[ky * K + kx] * row[kx];
                        }
                    }
                }
                *o_v = acc;
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn correlate_any(
    xp: &[f64],
    c_in: usize,
    hp: usize,
    wp: usize,
    weight: &[f64],
    bias: Option<&[f64]>,
    c_out: usize,
    k: usize,
    out: &mut [f64],
) {
    let (ho, wo) = (hp + 1 - k, wp + 1 - k);
    let kk = k * k;
    for o in 0..c_out {
        let b = bias.map_or(0.0, |b| b[o]);
        for y in 0..ho {
            for x in 0..wo {
                let mut acc = b;
                for i in 0..c_in {
                    for ky in 0..k {
                        for kx in 0..k {
                            acc += weight[(o * c_in + i) * kk + ky * k + kx] * xp[(i * hp + y + ky) * wp + x + kx];
                        }
                    }
                }
                out[(o * ho + y) * wo + x] = acc;
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn conv_backward(
    x: &[f64],
    c_in: usize,
    h: usize,
    w: usize,
    weight: &[f64],
    c_out: usize,
    k: usize,
    gy: &[f64],
    gx: &mut [f64],
    gw: &mut [f64],
    gb: &mut [f64],
) {
    let hw = h * w;
    let p = k / 2;
    let kk = k * k;
    for o in 0..c_out {
        gb[o] += gy[o * hw..(o + 1) * hw].iter().sum::<f64>();
    }

    // dL/dx: correlate the padded output gradient with flipped, transposed kernels
    let mut flipped = vec![0.0; weight.len()];
    for o in 0..c_out {
        for i in 0..c_in {
            for t in 0..kk {
                flipped[(i * c_out + o) * kk + (kk - 1 - t)] = weight[(o * c_in + i) * kk + t];
            }
        }
    }
    let gyp = pad(gy, c_out, h, w, p);
    let mut dx = vec![0.0; c_in * hw];
    correlate(&gyp, c_out, h + 2 * p, w + 2 * p, &flipped, None, c_in, k, &mut dx);
    for (g, d) in gx.iter_mut().zip(&dx) {
        *g += d;
    }

    // dL/dW: per tap, a dot product of the output gradient with the shifted input
    let xp = pad(x, c_in, h, w, p);
    match k {
        1 => weight_grad::<1>(&xp, gy, c_in, c_out, h, w, gw),
        3 => weight_grad::<3>(&xp, gy, c_in, c_out, h, w, gw),
        5 => weight_grad::<5>(&xp, gy, c_in, c_out, h, w, gw),
        _ => {
            let (hp, wp) = (h + 2 * p, w + 2 * p);
            for o in 0..c_out {
                let gy_o = &gy[o * hw..(o + 1) * hw];
                for i in 0..c_in {
                    let xp_i = &xp[i * hp * wp..(i + 1) * hp * wp];
                    for ky in 0..k {
                        for kx in 0..k {
                            let mut acc = 0.0;
                            for y in 0..h {
                                acc += dot(&gy_o[y * w..(y + 1) * w], &xp_i[(y + ky) * wp + kx..][..w]);
                            }
                            gw[((o * c_in + i) * k + ky) * k + kx] += acc;
                        }
                    }
                }
            }
        }
    }
}

/// Accumulate `gw[o, i, ky, kx] += sum_{y,x} gy[o, y, x] * xp[i, y + ky, x + kx]`.
#[allow(clippy::too_many_arguments)]
fn weight_grad<const K: usize>(xp: &[f64], gy: &[f64], c_in: usize, c_out: usize, h: usize, w: usize, gw: &mut [f64]) {
    let (hp, wp) = (h + K - 1, w + K - 1);
    let hw = h * w;
    for o in 0..c_out {
        let gy_o = &gy[o * hw..(o + 1) * hw];
        for i in 0..c_in {
            let xp_i = &xp[i * hp * wp..(i + 1) * hp * wp];
            for ky in 0..K {
                for kx in 0..K {
                    let mut lanes = [0.0; LANES];
                    let mut tail = 0.0;
                    for y in 0..h {
                        let g_row = &gy_o[y * w..(y + 1) * w];
                        let x_row = &xp_i[(y + ky) * wp + kx..][..w];
                        let (g8, x8) = (g_row.chunks_exact(LANES), x_row.chunks_exact(LANES));
                        tail += g8.remainder().iter().zip(x8.remainder()).map(|(a, b)| a * b).sum::<f64>();
                        for (g, xv) in g8.zip(x8) {
                            for j in 0..LANES {
                                lanes[j] += g[j] * xv[j];
                            }
                        }
                    }
                    gw[((o * c_in + i) * K + ky) * K + kx] += lanes.iter().sum::<f64>() + tail;
                }
            }
        }
    }
}

/// Dot product with four independent partial sums.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut lanes = [0.0; 4];
    let (a4, b4) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = a4.remainder().iter().zip(b4.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in a4.zip(b4) {
        for l in 0..4 {
            lanes[l] += x[l] * y[l];
        }
    }
    (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]) + tail
}
