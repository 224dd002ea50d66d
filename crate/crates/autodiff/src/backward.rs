use crate::error::{AdError, Result};
use crate::kernels;
use crate::real::Real;
use crate::tape::{conv_dims, Node, Op, PrimitiveKind, Tape, Var};
use crate::tensor::Tensor;

/// Gradients of a scalar with respect to every leaf that requires one.
pub struct Gradients<T> {
    grads: Vec<Option<Vec<T>>>,
    shapes: Vec<Vec<usize>>,
}

impl<T: Real> Gradients<T> {
    /// Gradient of `v`, or `None` when it does not influence the loss or is
    /// not a gradient-carrying leaf.
    pub fn get(&self, v: Var<'_, T>) -> Option<Tensor<T>> {
        let g = self.grads.get(v.id)?.as_ref()?;
        Some(Tensor::new(self.shapes[v.id].clone(), g.clone()).expect("gradient shape"))
    }

    /// Like [`get`](Self::get) but zeros instead of `None`.
    pub fn wrt(&self, v: Var<'_, T>) -> Tensor<T> {
        self.get(v).unwrap_or_else(|| Tensor::zeros(v.shape()))
    }
}

fn accumulate<T: Real>(grads: &mut [Option<Vec<T>>], nodes: &[Node<T>], id: usize, g: Vec<T>) {
    if !nodes[id].requires_grad {
        return;
    }
    match &mut grads[id] {
        Some(existing) => existing.iter_mut().zip(g).for_each(|(a, b)| *a += b),
        slot @ None => *slot = Some(g),
    }
}

/// Reduces a gradient of the broadcast result back to `b`'s trailing shape.
fn reduce_trailing<T: Real>(g: &[T], inner: usize) -> Vec<T> {
    let mut out = vec![T::zero(); inner];
    for chunk in g.chunks(inner.max(1)) {
        out.iter_mut().zip(chunk).for_each(|(o, &v)| *o += v);
    }
    out
}

impl<T: Real> Tape<T> {
    /// Reverse sweep from a one-element `loss`.
    pub fn backward(&self, loss: Var<'_, T>) -> Result<Gradients<T>> {
        if !std::ptr::eq(loss.tape, self) {
            return Err(AdError::contract("loss belongs to a different tape"));
        }
        let nodes = self.nodes.borrow();
        if nodes[loss.id].value.numel() != 1 {
            return Err(AdError::contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                nodes[loss.id].value.shape()
            )));
        }
        let n = loss.id + 1;
        let mut grads: Vec<Option<Vec<T>>> = vec![None; n];
        if nodes[loss.id].requires_grad {
            grads[loss.id] = Some(vec![T::one()]);
        }
        let fault = self.fault.get();
        for id in (0..n).rev() {
            let node = &nodes[id];
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(mut g) = grads[id].take() else {
                continue;
            };
            if fault == Some(node.op.kind()) && fault != Some(PrimitiveKind::Leaf) {
                let k = T::lit(1.5);
                g.iter_mut().for_each(|v| *v *= k);
            }
            propagate(&nodes, &mut grads, id, &g)?;
        }
        let shapes = nodes[..n].iter().map(|nd| nd.value.shape().to_vec()).collect();
        Ok(Gradients { grads, shapes })
    }
}

fn propagate<T: Real>(nodes: &[Node<T>], grads: &mut [Option<Vec<T>>], id: usize, g: &[T]) -> Result<()> {
    let node = &nodes[id];
    let out = node.value.data();
    let val = |i: usize| &nodes[i].value;
    let rg = |i: usize| nodes[i].requires_grad;
    match &node.op {
        Op::Leaf => {}
        Op::Add { a, b } => {
            accumulate(grads, nodes, *a, g.to_vec());
            if rg(*b) {
                let gb = reduce_trailing(g, val(*b).numel());
                accumulate(grads, nodes, *b, gb);
            }
        }
        Op::Sub { a, b } => {
            accumulate(grads, nodes, *a, g.to_vec());
            accumulate(grads, nodes, *b, g.iter().map(|&v| -v).collect());
        }
        Op::Mul { a, b } => {
            let (av, bv) = (val(*a).data(), val(*b).data());
            let inner = bv.len().max(1);
            if rg(*a) {
                let ga = g.iter().enumerate().map(|(i, &v)| v * bv[i % inner]).collect();
                accumulate(grads, nodes, *a, ga);
            }
            if rg(*b) {
                let prod: Vec<T> = g.iter().zip(av).map(|(&v, &x)| v * x).collect();
                accumulate(grads, nodes, *b, reduce_trailing(&prod, inner));
            }
        }
        Op::ScalarMul { a, s } => accumulate(grads, nodes, *a, g.iter().map(|&v| v * *s).collect()),
        Op::Relu { a } => {
            let x = val(*a).data();
            let ga = g.iter().zip(x).map(|(&v, &x)| if x > T::zero() { v } else { T::zero() }).collect();
            accumulate(grads, nodes, *a, ga);
        }
        Op::Sigmoid { a } => {
            let ga = g.iter().zip(out).map(|(&v, &y)| v * y * (T::one() - y)).collect();
            accumulate(grads, nodes, *a, ga);
        }
        Op::Tanh { a } => {
            let ga = g.iter().zip(out).map(|(&v, &y)| v * (T::one() - y * y)).collect();
            accumulate(grads, nodes, *a, ga);
        }
        Op::SoftmaxLastDim { a } => {
            let n = *node.value.shape().last().unwrap_or(&1);
            let mut ga = vec![T::zero(); g.len()];
            if n > 0 {
                for ((gr, yr), dst) in g.chunks(n).zip(out.chunks(n)).zip(ga.chunks_mut(n)) {
                    let dot: T = gr.iter().zip(yr).map(|(&u, &y)| u * y).sum();
                    for ((d, &u), &y) in dst.iter_mut().zip(gr).zip(yr) {
                        *d = y * (u - dot);
                    }
                }
            }
            accumulate(grads, nodes, *a, ga);
        }
        Op::Sum { a } => accumulate(grads, nodes, *a, vec![g[0]; val(*a).numel()]),
        Op::Mean { a } => {
            let n = val(*a).numel();
            let v = g[0] / T::lit(n.max(1) as f64);
            accumulate(grads, nodes, *a, vec![v; n]);
        }
        Op::Reshape { a } => accumulate(grads, nodes, *a, g.to_vec()),
        Op::Transpose { a } => {
            let s = node.value.shape();
            let (n, m) = (s[0], s[1]);
            // output [n×m] is the transpose of input [m×n]
            let mut ga = vec![T::zero(); g.len()];
            for j in 0..n {
                for i in 0..m {
                    ga[i * n + j] = g[j * m + i];
                }
            }
            accumulate(grads, nodes, *a, ga);
        }
        Op::MatMul { a, b } => {
            let (av, bv) = (val(*a), val(*b));
            let (m, k, n) = (av.shape()[0], av.shape()[1], bv.shape()[1]);
            if rg(*a) {
                // dA = G · Bᵀ
                let mut ga = vec![T::zero(); m * k];
                T::gemm(m, n, k, T::one(), g, n as isize, 1, bv.data(), 1, n as isize, T::zero(), &mut ga, k as isize, 1);
                accumulate(grads, nodes, *a, ga);
            }
            if rg(*b) {
                // dB = Aᵀ · G
                let mut gb = vec![T::zero(); k * n];
                T::gemm(k, m, n, T::one(), av.data(), 1, k as isize, g, n as isize, 1, T::zero(), &mut gb, n as isize, 1);
                accumulate(grads, nodes, *b, gb);
            }
        }
        Op::Conv2d { input, kernel, bias, geom } => {
            let (x, w) = (val(*input), val(*kernel));
            let (c_out, dims) = conv_dims(x.shape(), w.shape(), *geom)?;
            let want_b = bias.map(&rg).unwrap_or(false);
            let (gi, gk, gb) = kernels::conv2d_backward(
                x.data(),
                w.data(),
                g,
                c_out,
                &dims,
                *geom,
                rg(*input),
                rg(*kernel),
                want_b,
            );
            if let Some(gi) = gi {
                accumulate(grads, nodes, *input, gi);
            }
            if let Some(gk) = gk {
                accumulate(grads, nodes, *kernel, gk);
            }
            if let (Some(b), Some(gb)) = (bias, gb) {
                accumulate(grads, nodes, *b, gb);
            }
        }
        Op::Concat { inputs, axis } => {
            let shape = node.value.shape();
            let outer: usize = shape[..*axis].iter().product();
            let inner: usize = shape[axis + 1..].iter().product();
            let row = shape[*axis] * inner;
            let mut offset = 0;
            for &p in inputs {
                let block = val(p).shape()[*axis] * inner;
                if rg(p) {
                    let mut gp = Vec::with_capacity(outer * block);
                    for o in 0..outer {
                        let base = o * row + offset;
                        gp.extend_from_slice(&g[base..base + block]);
                    }
                    accumulate(grads, nodes, p, gp);
                }
                offset += block;
            }
        }
        Op::Slice { a, axis, start } => {
            let src = val(*a).shape();
            let outer: usize = src[..*axis].iter().product();
            let inner: usize = src[axis + 1..].iter().product();
            let len = node.value.shape()[*axis];
            let mut ga = vec![T::zero(); val(*a).numel()];
            for o in 0..outer {
                let dst = o * src[*axis] * inner + start * inner;
                let s = o * len * inner;
                ga[dst..dst + len * inner].copy_from_slice(&g[s..s + len * inner]);
            }
            accumulate(grads, nodes, *a, ga);
        }
        Op::GlobalAvgPool2d { a } => {
            let s = val(*a).shape();
            let hw = s[1] * s[2];
            let inv = T::one() / T::lit(hw as f64);
            let ga = g.iter().flat_map(|&v| std::iter::repeat_n(v * inv, hw)).collect();
            accumulate(grads, nodes, *a, ga);
        }
        Op::AdaptiveAvgPool1d { a } => {
            let len = val(*a).numel();
            let out_len = g.len();
            let mut ga = vec![T::zero(); len];
            for (j, &v) in g.iter().enumerate() {
                let (s, e) = kernels::adaptive_bucket(j, len, out_len);
                let share = v / T::lit((e - s) as f64);
                ga[s..e].iter_mut().for_each(|x| *x += share);
            }
            accumulate(grads, nodes, *a, ga);
        }
        Op::UpsampleNearest2x { a } => {
            let s = val(*a).shape();
            let (c, h, w) = (s[0], s[1], s[2]);
            let mut ga = vec![T::zero(); c * h * w];
            for ch in 0..c {
                for y in 0..2 * h {
                    for x in 0..2 * w {
                        ga[ch * h * w + (y / 2) * w + x / 2] += g[ch * 4 * h * w + y * 2 * w + x];
                    }
                }
            }
            accumulate(grads, nodes, *a, ga);
        }
        Op::BroadcastSpatial { a } => {
            let s = node.value.shape();
            let hw = s[1] * s[2];
            let ga = g.chunks(hw).map(|c| c.iter().copied().sum()).collect();
            accumulate(grads, nodes, *a, ga);
        }
        Op::GatherRows { a, idx } => {
            let d = val(*a).shape()[1];
            let mut ga = vec![T::zero(); val(*a).numel()];
            for (r, &i) in idx.iter().enumerate() {
                ga[i * d..(i + 1) * d]
                    .iter_mut()
                    .zip(&g[r * d..(r + 1) * d])
                    .for_each(|(x, &v)| *x += v);
            }
            accumulate(grads, nodes, *a, ga);
        }
        Op::L1LossMasked { pred, target, mask, count } => {
            let p = val(*pred).data();
            let mut ga = vec![T::zero(); p.len()];
            if *count > 0 {
                let scale = g[0] / T::lit(*count as f64);
                for i in 0..p.len() {
                    if mask[i] {
                        let d = p[i] - target[i];
                        ga[i] = if d > T::zero() {
                            scale
                        } else if d < T::zero() {
                            -scale
                        } else {
                            T::zero()
                        };
                    }
                }
            }
            accumulate(grads, nodes, *pred, ga);
        }
        Op::CrossEntropyLogits { logits, label, probs } => {
            let mut ga: Vec<T> = probs.iter().map(|&p| p * g[0]).collect();
            ga[*label] -= g[0];
            accumulate(grads, nodes, *logits, ga);
        }
        Op::LstmCell { x, h, c, w_ih, w_hh, b, gates } => {
            let ct = node.value.shape()[1];
            let cin = val(*x).numel();
            let (dh, dc_out) = (&g[..ct], &g[ct..]);
            let c_prev = val(*c).data();
            let c_new = &out[ct..];
            let mut dz = vec![T::zero(); 4 * ct];
            let mut dc_prev = vec![T::zero(); ct];
            for j in 0..ct {
                let (i, f, gg, o) = (gates[j], gates[ct + j], gates[2 * ct + j], gates[3 * ct + j]);
                let tc = c_new[j].tanh();
                let d_o = dh[j] * tc;
                let dct = dc_out[j] + dh[j] * o * (T::one() - tc * tc);
                let d_f = dct * c_prev[j];
                let d_i = dct * gg;
                let d_g = dct * i;
                dc_prev[j] = dct * f;
                dz[j] = d_i * i * (T::one() - i);
                dz[ct + j] = d_f * f * (T::one() - f);
                dz[2 * ct + j] = d_g * (T::one() - gg * gg);
                dz[3 * ct + j] = d_o * o * (T::one() - o);
            }
            if rg(*w_ih) {
                let xv = val(*x).data();
                let mut gw = vec![T::zero(); 4 * ct * cin];
                T::gemm(4 * ct, 1, cin, T::one(), &dz, 1, 1, xv, cin as isize, 1, T::zero(), &mut gw, cin as isize, 1);
                accumulate(grads, nodes, *w_ih, gw);
            }
            if rg(*w_hh) {
                let hv = val(*h).data();
                let mut gw = vec![T::zero(); 4 * ct * ct];
                T::gemm(4 * ct, 1, ct, T::one(), &dz, 1, 1, hv, ct as isize, 1, T::zero(), &mut gw, ct as isize, 1);
                accumulate(grads, nodes, *w_hh, gw);
            }
            if rg(*x) {
                let wv = val(*w_ih).data();
                let mut gx = vec![T::zero(); cin];
                T::gemm(cin, 4 * ct, 1, T::one(), wv, 1, cin as isize, &dz, 1, 1, T::zero(), &mut gx, 1, 1);
                accumulate(grads, nodes, *x, gx);
            }
            if rg(*h) {
                let wv = val(*w_hh).data();
                let mut gh = vec![T::zero(); ct];
                T::gemm(ct, 4 * ct, 1, T::one(), wv, 1, ct as isize, &dz, 1, 1, T::zero(), &mut gh, 1, 1);
                accumulate(grads, nodes, *h, gh);
            }
            accumulate(grads, nodes, *c, dc_prev);
            accumulate(grads, nodes, *b, dz);
        }
    }
    Ok(())
}
