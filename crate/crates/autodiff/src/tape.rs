//! Wengert tape: every primitive applied to a [`Var`] is appended to the
//! tape together with the activations its backward rule needs.

use std::cell::{Cell, Ref, RefCell};
use std::fmt;
use std::ops::Range;

use crate::error::{AdError, Result};
use crate::kernels::{self, ConvDims, ConvGeom};
use crate::real::Real;
use crate::tensor::Tensor;

/// The primitive inventory. Every kind has a shape rule and a backward rule.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PrimitiveKind {
    Leaf,
    MatMul,
    Conv2d,
    Add,
    Mul,
    Sub,
    Relu,
    Sigmoid,
    Tanh,
    SoftmaxLastDim,
    Concat,
    Slice,
    Sum,
    Mean,
    GlobalAvgPool2d,
    AdaptiveAvgPool1d,
    UpsampleNearest2x,
    LstmCell,
    L1LossMasked,
    CrossEntropyLogits,
    ScalarMul,
    BroadcastSpatial,
    Reshape,
    Transpose,
    GatherRows,
}

impl fmt::Display for PrimitiveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            PrimitiveKind::Leaf => "leaf",
            PrimitiveKind::MatMul => "matmul",
            PrimitiveKind::Conv2d => "conv2d",
            PrimitiveKind::Add => "add",
            PrimitiveKind::Mul => "mul",
            PrimitiveKind::Sub => "sub",
            PrimitiveKind::Relu => "relu",
            PrimitiveKind::Sigmoid => "sigmoid",
            PrimitiveKind::Tanh => "tanh",
            PrimitiveKind::SoftmaxLastDim => "softmax_lastdim",
            PrimitiveKind::Concat => "concat",
            PrimitiveKind::Slice => "slice",
            PrimitiveKind::Sum => "sum",
            PrimitiveKind::Mean => "mean",
            PrimitiveKind::GlobalAvgPool2d => "global_avg_pool_2d",
            PrimitiveKind::AdaptiveAvgPool1d => "adaptive_avg_pool_1d",
            PrimitiveKind::UpsampleNearest2x => "upsample_nearest_2x",
            PrimitiveKind::LstmCell => "lstm_cell",
            PrimitiveKind::L1LossMasked => "l1_loss_masked",
            PrimitiveKind::CrossEntropyLogits => "cross_entropy_logits",
            PrimitiveKind::ScalarMul => "scalar_mul",
            PrimitiveKind::BroadcastSpatial => "broadcast_spatial",
            PrimitiveKind::Reshape => "reshape",
            PrimitiveKind::Transpose => "transpose",
            PrimitiveKind::GatherRows => "gather_rows",
        };
        f.write_str(name)
    }
}

impl std::str::FromStr for PrimitiveKind {
    type Err = AdError;

    fn from_str(s: &str) -> Result<Self> {
        ALL_KINDS
            .iter()
            .copied()
            .find(|k| k.to_string() == s)
            .ok_or_else(|| AdError::contract(format!("unknown primitive '{s}'")))
    }
}

const ALL_KINDS: [PrimitiveKind; 25] = [
    PrimitiveKind::Leaf,
    PrimitiveKind::MatMul,
    PrimitiveKind::Conv2d,
    PrimitiveKind::Add,
    PrimitiveKind::Mul,
    PrimitiveKind::Sub,
    PrimitiveKind::Relu,
    PrimitiveKind::Sigmoid,
    PrimitiveKind::Tanh,
    PrimitiveKind::SoftmaxLastDim,
    PrimitiveKind::Concat,
    PrimitiveKind::Slice,
    PrimitiveKind::Sum,
    PrimitiveKind::Mean,
    PrimitiveKind::GlobalAvgPool2d,
    PrimitiveKind::AdaptiveAvgPool1d,
    PrimitiveKind::UpsampleNearest2x,
    PrimitiveKind::LstmCell,
    PrimitiveKind::L1LossMasked,
    PrimitiveKind::CrossEntropyLogits,
    PrimitiveKind::ScalarMul,
    PrimitiveKind::BroadcastSpatial,
    PrimitiveKind::Reshape,
    PrimitiveKind::Transpose,
    PrimitiveKind::GatherRows,
];

pub(crate) enum Op<T> {
    Leaf,
    MatMul { a: usize, b: usize },
    Conv2d { input: usize, kernel: usize, bias: Option<usize>, geom: ConvGeom },
    Add { a: usize, b: usize },
    Mul { a: usize, b: usize },
    Sub { a: usize, b: usize },
    Relu { a: usize },
    Sigmoid { a: usize },
    Tanh { a: usize },
    SoftmaxLastDim { a: usize },
    Concat { inputs: Vec<usize>, axis: usize },
    Slice { a: usize, axis: usize, start: usize },
    Sum { a: usize },
    Mean { a: usize },
    GlobalAvgPool2d { a: usize },
    AdaptiveAvgPool1d { a: usize },
    UpsampleNearest2x { a: usize },
    LstmCell { x: usize, h: usize, c: usize, w_ih: usize, w_hh: usize, b: usize, gates: Vec<T> },
    L1LossMasked { pred: usize, target: Vec<T>, mask: Vec<bool>, count: usize },
    CrossEntropyLogits { logits: usize, label: usize, probs: Vec<T> },
    ScalarMul { a: usize, s: T },
    BroadcastSpatial { a: usize },
    Reshape { a: usize },
    Transpose { a: usize },
    GatherRows { a: usize, idx: Vec<usize> },
}

impl<T> Op<T> {
    pub(crate) fn kind(&self) -> PrimitiveKind {
        match self {
            Op::Leaf => PrimitiveKind::Leaf,
            Op::MatMul { .. } => PrimitiveKind::MatMul,
            Op::Conv2d { .. } => PrimitiveKind::Conv2d,
            Op::Add { .. } => PrimitiveKind::Add,
            Op::Mul { .. } => PrimitiveKind::Mul,
            Op::Sub { .. } => PrimitiveKind::Sub,
            Op::Relu { .. } => PrimitiveKind::Relu,
            Op::Sigmoid { .. } => PrimitiveKind::Sigmoid,
            Op::Tanh { .. } => PrimitiveKind::Tanh,
            Op::SoftmaxLastDim { .. } => PrimitiveKind::SoftmaxLastDim,
            Op::Concat { .. } => PrimitiveKind::Concat,
            Op::Slice { .. } => PrimitiveKind::Slice,
            Op::Sum { .. } => PrimitiveKind::Sum,
            Op::Mean { .. } => PrimitiveKind::Mean,
            Op::GlobalAvgPool2d { .. } => PrimitiveKind::GlobalAvgPool2d,
            Op::AdaptiveAvgPool1d { .. } => PrimitiveKind::AdaptiveAvgPool1d,
            Op::UpsampleNearest2x { .. } => PrimitiveKind::UpsampleNearest2x,
            Op::LstmCell { .. } => PrimitiveKind::LstmCell,
            Op::L1LossMasked { .. } => PrimitiveKind::L1LossMasked,
            Op::CrossEntropyLogits { .. } => PrimitiveKind::CrossEntropyLogits,
            Op::ScalarMul { .. } => PrimitiveKind::ScalarMul,
            Op::BroadcastSpatial { .. } => PrimitiveKind::BroadcastSpatial,
            Op::Reshape { .. } => PrimitiveKind::Reshape,
            Op::Transpose { .. } => PrimitiveKind::Transpose,
            Op::GatherRows { .. } => PrimitiveKind::GatherRows,
        }
    }
}

pub(crate) struct Node<T> {
    pub value: Tensor<T>,
    pub op: Op<T>,
    pub requires_grad: bool,
}

/// Single-threaded computation tape. Build a fresh tape per forward pass.
pub struct Tape<T: Real> {
    pub(crate) nodes: RefCell<Vec<Node<T>>>,
    pub(crate) fault: Cell<Option<PrimitiveKind>>,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Tape {
            nodes: RefCell::new(Vec::new()),
            fault: Cell::new(None),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Leaf that receives a gradient.
    pub fn param(&self, value: Tensor<T>) -> Var<'_, T> {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf without gradient.
    pub fn constant(&self, value: Tensor<T>) -> Var<'_, T> {
        self.push(value, Op::Leaf, false)
    }

    /// Test fixture: scale every gradient contribution of `kind` by 1.5 in
    /// the backward sweep so gradient checks have a negative control.
    #[doc(hidden)]
    pub fn inject_fault(&self, kind: Option<PrimitiveKind>) {
        self.fault.set(kind);
    }

    pub fn value(&self, v: Var<'_, T>) -> Ref<'_, Tensor<T>> {
        Ref::map(self.nodes.borrow(), |n| &n[v.id].value)
    }

    pub(crate) fn push(&self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var<'_, T> {
        let mut nodes = self.nodes.borrow_mut();
        let id = nodes.len();
        let op = if requires_grad || matches!(op, Op::Leaf) {
            op
        } else {
            Op::Leaf
        };
        nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var { tape: self, id }
    }

    fn requires(&self, ids: &[usize]) -> bool {
        let nodes = self.nodes.borrow();
        ids.iter().any(|&i| nodes[i].requires_grad)
    }
}

/// Handle to a tape node.
pub struct Var<'t, T: Real> {
    pub(crate) tape: &'t Tape<T>,
    pub(crate) id: usize,
}

impl<T: Real> Clone for Var<'_, T> {
    fn clone(&self) -> Self {
        *self
    }
}

impl<T: Real> Copy for Var<'_, T> {}

impl<T: Real> fmt::Debug for Var<'_, T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Var#{}{:?}", self.id, self.shape())
    }
}

fn trailing_broadcast(a: &[usize], b: &[usize]) -> bool {
    b.len() <= a.len() && a[a.len() - b.len()..] == *b
}

fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

impl<'t, T: Real> Var<'t, T> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn tape(&self) -> &'t Tape<T> {
        self.tape
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.nodes.borrow()[self.id].value.shape().to_vec()
    }

    pub fn numel(&self) -> usize {
        self.tape.nodes.borrow()[self.id].value.numel()
    }

    pub fn value(&self) -> Tensor<T> {
        self.tape.nodes.borrow()[self.id].value.clone()
    }

    /// Value of a one-element node.
    pub fn item(&self) -> T {
        self.tape.nodes.borrow()[self.id].value.data()[0]
    }

    fn same_tape(&self, other: &Var<'_, T>) -> Result<()> {
        if std::ptr::eq(self.tape, other.tape) {
            Ok(())
        } else {
            Err(AdError::contract("vars belong to different tapes"))
        }
    }

    fn unary(self, op: Op<T>, f: impl FnOnce(&Tensor<T>) -> Tensor<T>) -> Var<'t, T> {
        let value = f(&self.tape.nodes.borrow()[self.id].value);
        let rg = self.tape.requires(&[self.id]);
        self.tape.push(value, op, rg)
    }

    fn elementwise(
        self,
        other: Var<'t, T>,
        name: &str,
        op: Op<T>,
        f: impl Fn(T, T) -> T,
        broadcast: bool,
    ) -> Result<Var<'t, T>> {
        self.same_tape(&other)?;
        let value = {
            let nodes = self.tape.nodes.borrow();
            let (a, b) = (&nodes[self.id].value, &nodes[other.id].value);
            let ok = if broadcast {
                trailing_broadcast(a.shape(), b.shape())
            } else {
                a.shape() == b.shape()
            };
            if !ok {
                return Err(AdError::dim(format!(
                    "{name}: shapes {:?} and {:?} are incompatible",
                    a.shape(),
                    b.shape()
                )));
            }
            let inner = b.numel().max(1);
            let bd = b.data();
            let data = a.data().iter().enumerate().map(|(i, &x)| f(x, bd[i % inner])).collect();
            Tensor::new(a.shape().to_vec(), data)?
        };
        let rg = self.tape.requires(&[self.id, other.id]);
        Ok(self.tape.push(value, op, rg))
    }

    /// Elementwise sum; `other` may broadcast over leading axes.
    pub fn add(self, other: Var<'t, T>) -> Result<Var<'t, T>> {
        let op = Op::Add { a: self.id, b: other.id };
        self.elementwise(other, "add", op, |x, y| x + y, true)
    }

    /// Elementwise product; `other` may broadcast over leading axes.
    pub fn mul(self, other: Var<'t, T>) -> Result<Var<'t, T>> {
        let op = Op::Mul { a: self.id, b: other.id };
        self.elementwise(other, "mul", op, |x, y| x * y, true)
    }

    pub fn sub(self, other: Var<'t, T>) -> Result<Var<'t, T>> {
        let op = Op::Sub { a: self.id, b: other.id };
        self.elementwise(other, "sub", op, |x, y| x - y, false)
    }

    pub fn scale(self, s: T) -> Var<'t, T> {
        self.unary(Op::ScalarMul { a: self.id, s }, |t| t.map(|v| v * s))
    }

    pub fn relu(self) -> Var<'t, T> {
        self.unary(Op::Relu { a: self.id }, |t| t.map(|v| v.max(T::zero())))
    }

    pub fn sigmoid(self) -> Var<'t, T> {
        self.unary(Op::Sigmoid { a: self.id }, |t| t.map(kernels::sigmoid))
    }

    pub fn tanh(self) -> Var<'t, T> {
        self.unary(Op::Tanh { a: self.id }, |t| t.map(|v| v.tanh()))
    }

    /// Softmax over the last axis.
    pub fn softmax_lastdim(self) -> Var<'t, T> {
        self.unary(Op::SoftmaxLastDim { a: self.id }, |t| {
            let n = *t.shape().last().unwrap_or(&1);
            let mut out = t.clone();
            if n > 0 {
                for row in out.data_mut().chunks_mut(n) {
                    let m = row.iter().copied().fold(T::neg_infinity(), T::max);
                    let mut z = T::zero();
                    for v in row.iter_mut() {
                        *v = (*v - m).exp();
                        z += *v;
                    }
                    row.iter_mut().for_each(|v| *v /= z);
                }
            }
            out
        })
    }

    pub fn sum(self) -> Var<'t, T> {
        self.unary(Op::Sum { a: self.id }, |t| Tensor::scalar(t.data().iter().copied().sum()))
    }

    pub fn mean(self) -> Var<'t, T> {
        self.unary(Op::Mean { a: self.id }, |t| {
            let n = T::lit(t.numel().max(1) as f64);
            Tensor::scalar(t.data().iter().copied().sum::<T>() / n)
        })
    }

    pub fn reshape(self, shape: impl Into<Vec<usize>>) -> Result<Var<'t, T>> {
        let shape = shape.into();
        let numel: usize = shape.iter().product();
        if numel != self.numel() {
            return Err(AdError::dim(format!(
                "reshape: {:?} cannot become {:?}",
                self.shape(),
                shape
            )));
        }
        Ok(self.unary(Op::Reshape { a: self.id }, |t| t.clone().reshape(shape).expect("checked")))
    }

    /// Transpose of a rank-2 tensor.
    pub fn transpose(self) -> Result<Var<'t, T>> {
        let s = self.shape();
        if s.len() != 2 {
            return Err(AdError::dim(format!("transpose expects rank 2, got {s:?}")));
        }
        let (m, n) = (s[0], s[1]);
        Ok(self.unary(Op::Transpose { a: self.id }, |t| {
            let d = t.data();
            let mut out = Vec::with_capacity(m * n);
            for j in 0..n {
                for i in 0..m {
                    out.push(d[i * n + j]);
                }
            }
            Tensor::new(vec![n, m], out).expect("transpose shape")
        }))
    }

    /// `[m×k] · [k×n] → [m×n]`.
    pub fn matmul(self, other: Var<'t, T>) -> Result<Var<'t, T>> {
        self.same_tape(&other)?;
        let value = {
            let nodes = self.tape.nodes.borrow();
            let (a, b) = (&nodes[self.id].value, &nodes[other.id].value);
            let (sa, sb) = (a.shape(), b.shape());
            if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
                return Err(AdError::dim(format!("matmul: {sa:?} × {sb:?}")));
            }
            let (m, k, n) = (sa[0], sa[1], sb[1]);
            let mut c = vec![T::zero(); m * n];
            T::gemm(m, k, n, T::one(), a.data(), k as isize, 1, b.data(), n as isize, 1, T::zero(), &mut c, n as isize, 1);
            Tensor::new(vec![m, n], c)?
        };
        let rg = self.tape.requires(&[self.id, other.id]);
        Ok(self.tape.push(value, Op::MatMul { a: self.id, b: other.id }, rg))
    }

    /// Cross-correlation of a `[C_in×H×W]` input with a `[C_out×C_in×k×k]`
    /// kernel, zero padding, optional per-channel bias.
    pub fn conv2d(self, kernel: Var<'t, T>, bias: Option<Var<'t, T>>, geom: ConvGeom) -> Result<Var<'t, T>> {
        self.same_tape(&kernel)?;
        if let Some(b) = &bias {
            self.same_tape(b)?;
        }
        let value = {
            let nodes = self.tape.nodes.borrow();
            let (x, w) = (&nodes[self.id].value, &nodes[kernel.id].value);
            let (c_out, dims) = conv_dims(x.shape(), w.shape(), geom)?;
            let b = match bias {
                Some(b) => {
                    let bt = &nodes[b.id].value;
                    if bt.shape() != [c_out] {
                        return Err(AdError::dim(format!("conv2d bias {:?}, expected [{c_out}]", bt.shape())));
                    }
                    Some(bt.data())
                }
                None => None,
            };
            let out = kernels::conv2d_forward(x.data(), w.data(), b, c_out, &dims, geom);
            Tensor::new(vec![c_out, dims.h_out, dims.w_out], out)?
        };
        let mut ids = vec![self.id, kernel.id];
        ids.extend(bias.map(|b| b.id));
        let rg = self.tape.requires(&ids);
        let op = Op::Conv2d {
            input: self.id,
            kernel: kernel.id,
            bias: bias.map(|b| b.id),
            geom,
        };
        Ok(self.tape.push(value, op, rg))
    }

    /// Concatenation along `axis`; all other extents must agree.
    pub fn concat(parts: &[Var<'t, T>], axis: usize) -> Result<Var<'t, T>> {
        let first = parts.first().ok_or_else(|| AdError::contract("concat of zero tensors"))?;
        let tape = first.tape;
        for p in parts {
            first.same_tape(p)?;
        }
        let value = {
            let nodes = tape.nodes.borrow();
            let base = nodes[first.id].value.shape().to_vec();
            if axis >= base.len() {
                return Err(AdError::dim(format!("concat axis {axis} out of range for {base:?}")));
            }
            let mut axis_total = 0;
            for p in parts {
                let s = nodes[p.id].value.shape();
                let mut a = s.to_vec();
                let mut b = base.clone();
                if a.len() != b.len() {
                    return Err(AdError::dim(format!("concat rank mismatch {s:?} vs {base:?}")));
                }
                axis_total += a[axis];
                a[axis] = 0;
                b[axis] = 0;
                if a != b {
                    return Err(AdError::dim(format!("concat extents {s:?} vs {base:?}")));
                }
            }
            let (outer, _, inner) = split_axis(&base, axis);
            let mut data = Vec::with_capacity(outer * axis_total * inner);
            for o in 0..outer {
                for p in parts {
                    let t = &nodes[p.id].value;
                    let block = t.shape()[axis] * inner;
                    data.extend_from_slice(&t.data()[o * block..(o + 1) * block]);
                }
            }
            let mut shape = base;
            shape[axis] = axis_total;
            Tensor::new(shape, data)?
        };
        let ids: Vec<usize> = parts.iter().map(|p| p.id).collect();
        let rg = tape.requires(&ids);
        Ok(tape.push(value, Op::Concat { inputs: ids, axis }, rg))
    }

    /// Sub-range `range` of `axis`.
    pub fn slice(self, axis: usize, range: Range<usize>) -> Result<Var<'t, T>> {
        let shape = self.shape();
        if axis >= shape.len() || range.start > range.end || range.end > shape[axis] {
            return Err(AdError::dim(format!("slice {range:?} on axis {axis} of {shape:?}")));
        }
        let (outer, n, inner) = split_axis(&shape, axis);
        let len = range.end - range.start;
        let start = range.start;
        Ok(self.unary(Op::Slice { a: self.id, axis, start }, |t| {
            let mut data = Vec::with_capacity(outer * len * inner);
            for o in 0..outer {
                let base = o * n * inner + start * inner;
                data.extend_from_slice(&t.data()[base..base + len * inner]);
            }
            let mut s = shape.clone();
            s[axis] = len;
            Tensor::new(s, data).expect("slice shape")
        }))
    }

    /// `[C×H×W] → [C]` spatial mean.
    pub fn global_avg_pool_2d(self) -> Result<Var<'t, T>> {
        let s = self.shape();
        if s.len() != 3 {
            return Err(AdError::dim(format!("global_avg_pool_2d expects [C,H,W], got {s:?}")));
        }
        let hw = s[1] * s[2];
        let n = T::lit(hw as f64);
        Ok(self.unary(Op::GlobalAvgPool2d { a: self.id }, |t| {
            let data = t.data().chunks(hw).map(|c| c.iter().copied().sum::<T>() / n).collect();
            Tensor::new(vec![s[0]], data).expect("gap shape")
        }))
    }

    /// `[L] → [out]` with bucket `j` averaging `[floor(jL/out), ceil((j+1)L/out))`.
    pub fn adaptive_avg_pool_1d(self, out: usize) -> Result<Var<'t, T>> {
        let s = self.shape();
        if s.len() != 1 || out == 0 || out > s[0] {
            return Err(AdError::dim(format!("adaptive_avg_pool_1d: {s:?} → [{out}]")));
        }
        let len = s[0];
        Ok(self.unary(Op::AdaptiveAvgPool1d { a: self.id }, |t| {
            let d = t.data();
            let data = (0..out)
                .map(|j| {
                    let (a, b) = kernels::adaptive_bucket(j, len, out);
                    d[a..b].iter().copied().sum::<T>() / T::lit((b - a) as f64)
                })
                .collect();
            Tensor::new(vec![out], data).expect("pool shape")
        }))
    }

    /// `[C×H×W] → [C×2H×2W]` nearest-neighbour.
    pub fn upsample_nearest_2x(self) -> Result<Var<'t, T>> {
        let s = self.shape();
        if s.len() != 3 {
            return Err(AdError::dim(format!("upsample expects [C,H,W], got {s:?}")));
        }
        let (c, h, w) = (s[0], s[1], s[2]);
        Ok(self.unary(Op::UpsampleNearest2x { a: self.id }, |t| {
            let d = t.data();
            let mut out = Vec::with_capacity(c * 4 * h * w);
            for ch in 0..c {
                for y in 0..2 * h {
                    let row = &d[ch * h * w + (y / 2) * w..ch * h * w + (y / 2 + 1) * w];
                    for &v in row {
                        out.push(v);
                        out.push(v);
                    }
                }
            }
            Tensor::new(vec![c, 2 * h, 2 * w], out).expect("upsample shape")
        }))
    }

    /// `[C] → [C×h×w]`, repeating each channel value over the plane.
    pub fn broadcast_spatial(self, h: usize, w: usize) -> Result<Var<'t, T>> {
        let s = self.shape();
        if s.len() != 1 {
            return Err(AdError::dim(format!("broadcast_spatial expects [C], got {s:?}")));
        }
        Ok(self.unary(Op::BroadcastSpatial { a: self.id }, |t| {
            let mut out = Vec::with_capacity(s[0] * h * w);
            for &v in t.data() {
                out.extend(std::iter::repeat_n(v, h * w));
            }
            Tensor::new(vec![s[0], h, w], out).expect("broadcast shape")
        }))
    }

    /// Rows `idx` of a `[N×D]` table.
    pub fn gather_rows(self, idx: &[usize]) -> Result<Var<'t, T>> {
        let s = self.shape();
        if s.len() != 2 {
            return Err(AdError::dim(format!("gather_rows expects [N,D], got {s:?}")));
        }
        if let Some(&bad) = idx.iter().find(|&&i| i >= s[0]) {
            return Err(AdError::contract(format!("row index {bad} out of range for {} rows", s[0])));
        }
        let d = s[1];
        let idx = idx.to_vec();
        let rows = idx.len();
        Ok(self.unary(Op::GatherRows { a: self.id, idx: idx.clone() }, |t| {
            let mut out = Vec::with_capacity(rows * d);
            for &i in &idx {
                out.extend_from_slice(&t.data()[i * d..(i + 1) * d]);
            }
            Tensor::new(vec![rows, d], out).expect("gather shape")
        }))
    }

    /// Masked mean absolute error against a constant target:
    /// `Σ_{mask} |target − self| / |mask|`, or 0 when the mask is empty.
    pub fn l1_loss_masked(self, target: &[T], mask: &[bool]) -> Result<Var<'t, T>> {
        let n = self.numel();
        if target.len() != n || mask.len() != n {
            return Err(AdError::dim(format!(
                "l1_loss_masked: prediction has {n} elements, target {} and mask {}",
                target.len(),
                mask.len()
            )));
        }
        let count = mask.iter().filter(|&&m| m).count();
        let value = {
            let nodes = self.tape.nodes.borrow();
            let p = nodes[self.id].value.data();
            let total: T = p
                .iter()
                .zip(target)
                .zip(mask)
                .filter(|(_, &m)| m)
                .map(|((&p, &t), _)| (t - p).abs())
                .sum();
            let v = if count == 0 { T::zero() } else { total / T::lit(count as f64) };
            Tensor::scalar(v)
        };
        let rg = self.tape.requires(&[self.id]);
        let op = Op::L1LossMasked {
            pred: self.id,
            target: target.to_vec(),
            mask: mask.to_vec(),
            count,
        };
        Ok(self.tape.push(value, op, rg))
    }

    /// `−log softmax(self)[label]` for a logit vector.
    pub fn cross_entropy_logits(self, label: usize) -> Result<Var<'t, T>> {
        let n = self.numel();
        if label >= n {
            return Err(AdError::contract(format!("label {label} out of range for {n} logits")));
        }
        let (value, probs) = {
            let nodes = self.tape.nodes.borrow();
            let z = nodes[self.id].value.data();
            let m = z.iter().copied().fold(T::neg_infinity(), T::max);
            let exps: Vec<T> = z.iter().map(|&v| (v - m).exp()).collect();
            let s: T = exps.iter().copied().sum();
            let lse = m + s.ln();
            let probs: Vec<T> = exps.iter().map(|&e| e / s).collect();
            (Tensor::scalar(lse - z[label]), probs)
        };
        let rg = self.tape.requires(&[self.id]);
        Ok(self.tape.push(value, Op::CrossEntropyLogits { logits: self.id, label, probs }, rg))
    }
}

/// Weights of one LSTM cell, gate order (input, forget, cell, output).
#[derive(Clone, Copy, Debug)]
pub struct LstmWeights<'t, T: Real> {
    /// `[4·C_t × C]`
    pub w_ih: Var<'t, T>,
    /// `[4·C_t × C_t]`
    pub w_hh: Var<'t, T>,
    /// `[4·C_t]`
    pub bias: Var<'t, T>,
}

/// One LSTM step. Returns `(h', c')`.
pub fn lstm_cell<'t, T: Real>(
    x: Var<'t, T>,
    h: Var<'t, T>,
    c: Var<'t, T>,
    w: LstmWeights<'t, T>,
) -> Result<(Var<'t, T>, Var<'t, T>)> {
    let tape = x.tape;
    for v in [h, c, w.w_ih, w.w_hh, w.bias] {
        x.same_tape(&v)?;
    }
    let (value, gates) = {
        let nodes = tape.nodes.borrow();
        let xv = &nodes[x.id].value;
        let hv = &nodes[h.id].value;
        let cv = &nodes[c.id].value;
        let wih = &nodes[w.w_ih.id].value;
        let whh = &nodes[w.w_hh.id].value;
        let b = &nodes[w.bias.id].value;
        let (cin, ct) = (xv.numel(), hv.numel());
        if cv.numel() != ct
            || wih.shape() != [4 * ct, cin]
            || whh.shape() != [4 * ct, ct]
            || b.shape() != [4 * ct]
        {
            return Err(AdError::dim(format!(
                "lstm_cell: x {:?}, h {:?}, c {:?}, w_ih {:?}, w_hh {:?}, b {:?}",
                xv.shape(),
                hv.shape(),
                cv.shape(),
                wih.shape(),
                whh.shape(),
                b.shape()
            )));
        }
        let mut z = b.data().to_vec();
        T::gemm(4 * ct, cin, 1, T::one(), wih.data(), cin as isize, 1, xv.data(), 1, 1, T::one(), &mut z, 1, 1);
        T::gemm(4 * ct, ct, 1, T::one(), whh.data(), ct as isize, 1, hv.data(), 1, 1, T::one(), &mut z, 1, 1);
        let mut gates = z;
        for (k, g) in gates.iter_mut().enumerate() {
            *g = if k / ct == 2 { g.tanh() } else { kernels::sigmoid(*g) };
        }
        let mut out = vec![T::zero(); 2 * ct];
        for j in 0..ct {
            let (i, f, g, o) = (gates[j], gates[ct + j], gates[2 * ct + j], gates[3 * ct + j]);
            let c_new = f * cv.data()[j] + i * g;
            out[ct + j] = c_new;
            out[j] = o * c_new.tanh();
        }
        (Tensor::new(vec![2, ct], out)?, gates)
    };
    let ids = [x.id, h.id, c.id, w.w_ih.id, w.w_hh.id, w.bias.id];
    let rg = tape.requires(&ids);
    let op = Op::LstmCell {
        x: x.id,
        h: h.id,
        c: c.id,
        w_ih: w.w_ih.id,
        w_hh: w.w_hh.id,
        b: w.bias.id,
        gates,
    };
    let both = tape.push(value, op, rg);
    let ct = both.shape()[1];
    let h_new = both.slice(0, 0..1)?.reshape(vec![ct])?;
    let c_new = both.slice(0, 1..2)?.reshape(vec![ct])?;
    Ok((h_new, c_new))
}

pub(crate) fn conv_dims(x: &[usize], w: &[usize], geom: ConvGeom) -> Result<(usize, ConvDims)> {
    if x.len() != 3 || w.len() != 4 {
        return Err(AdError::dim(format!("conv2d: input {x:?}, kernel {w:?}")));
    }
    let (c_out, c_in, k, k2) = (w[0], w[1], w[2], w[3]);
    if c_in != x[0] || k != k2 || k % 2 == 0 {
        return Err(AdError::dim(format!("conv2d: input {x:?} incompatible with kernel {w:?}")));
    }
    let h_out = geom.out_extent(x[1], k);
    let w_out = geom.out_extent(x[2], k);
    match (h_out, w_out) {
        (Some(h_out), Some(w_out)) if h_out > 0 && w_out > 0 => Ok((
            c_out,
            ConvDims {
                c_in,
                h: x[1],
                w: x[2],
                k,
                h_out,
                w_out,
            },
        )),
        _ => Err(AdError::dim(format!(
            "conv2d: non-positive output extent for input {x:?}, kernel {w:?}, {geom:?}"
        ))),
    }
}
