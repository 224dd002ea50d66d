//! Scaled dot-product cross-attention and the General / Regional attention
//! blocks that inject text features into decoder features.

use tride_autodiff::{Real, Var};

use crate::error::{Error, Result};
use crate::nn::{Bound, Conv, ParamId, ParamStore};

/// `softmax(Q·Kᵀ / √d)` for `Q [n_q × d]`, `K [n_k × d]`.
pub fn attention_weights<'t, T: Real>(q: Var<'t, T>, k: Var<'t, T>) -> Result<Var<'t, T>> {
    let d = q.shape()[1];
    let scores = q.matmul(k.transpose()?)?.scale(T::lit(1.0 / (d as f64).sqrt()));
    Ok(scores.softmax_lastdim())
}

/// `softmax(Q·Kᵀ / √d)·V`.
pub fn cross_attention<'t, T: Real>(q: Var<'t, T>, k: Var<'t, T>, v: Var<'t, T>) -> Result<Var<'t, T>> {
    Ok(attention_weights(q, k)?.matmul(v)?)
}

/// Bi-directional cross-attention between a feature map and one text
/// vector. Text→feature (one output token, broadcast) and feature→text
/// (one token per position) outputs are concatenated, mapped back to the
/// feature width by a 1×1 convolution and added residually.
#[derive(Clone, Debug)]
pub struct GeneralAttention {
    pub text_q: ParamId,
    pub feat_k: ParamId,
    pub feat_v: ParamId,
    pub feat_q: ParamId,
    pub text_k: ParamId,
    pub text_v: ParamId,
    pub out: Conv,
    pub channels: usize,
    pub text_dim: usize,
}

impl GeneralAttention {
    pub fn new<T: Real>(store: &mut ParamStore<T>, name: &str, channels: usize, text_dim: usize) -> Self {
        let (c, t) = (channels, text_dim);
        GeneralAttention {
            text_q: store.kaiming(&format!("{name}.text_q"), &[t, t], t),
            feat_k: store.kaiming(&format!("{name}.feat_k"), &[c, t], c),
            feat_v: store.kaiming(&format!("{name}.feat_v"), &[c, t], c),
            feat_q: store.kaiming(&format!("{name}.feat_q"), &[c, t], c),
            text_k: store.kaiming(&format!("{name}.text_k"), &[t, t], t),
            text_v: store.kaiming(&format!("{name}.text_v"), &[t, t], t),
            out: Conv::same(store, &format!("{name}.out"), 2 * t, c, 1),
            channels,
            text_dim,
        }
    }

    /// `f [C × h × w]`, `text [C_t]` → `[C × h × w]`.
    pub fn forward<'t, T: Real>(&self, p: &Bound<'t, T>, f: Var<'t, T>, text: Var<'t, T>) -> Result<Var<'t, T>> {
        let s = f.shape();
        if s.len() != 3 || s[0] != self.channels {
            return Err(Error::dim(format!(
                "attention expects [{}, h, w], got {s:?}",
                self.channels
            )));
        }
        let (h, w) = (s[1], s[2]);
        let ct = self.text_dim;
        let tokens = f.reshape(vec![s[0], h * w])?.transpose()?;
        let t = text.reshape(vec![1, ct])?;

        let a1 = cross_attention(
            t.matmul(p[self.text_q])?,
            tokens.matmul(p[self.feat_k])?,
            tokens.matmul(p[self.feat_v])?,
        )?;
        let a2 = cross_attention(
            tokens.matmul(p[self.feat_q])?,
            t.matmul(p[self.text_k])?,
            t.matmul(p[self.text_v])?,
        )?;
        let a1 = a1.reshape(vec![ct])?.broadcast_spatial(h, w)?;
        let a2 = a2.transpose()?.reshape(vec![ct, h, w])?;
        let mixed = self.out.forward(p, Var::concat(&[a1, a2], 0)?)?;
        Ok(f.add(mixed)?)
    }
}

/// General attention applied separately to four equal-width bands, each
/// with its own regional text vector, sharing one set of weights.
#[derive(Clone, Debug)]
pub struct RegionalAttention {
    pub inner: GeneralAttention,
}

impl RegionalAttention {
    pub fn new<T: Real>(store: &mut ParamStore<T>, name: &str, channels: usize, text_dim: usize) -> Self {
        RegionalAttention {
            inner: GeneralAttention::new(store, name, channels, text_dim),
        }
    }

    pub fn forward<'t, T: Real>(
        &self,
        p: &Bound<'t, T>,
        f: Var<'t, T>,
        t_reg: [Var<'t, T>; 4],
    ) -> Result<Var<'t, T>> {
        let w = f.shape()[2];
        if w % 4 != 0 {
            return Err(Error::contract(format!("feature width {w} is not divisible by 4")));
        }
        let b = w / 4;
        let bands = (0..4)
            .map(|r| self.inner.forward(p, f.slice(2, r * b..(r + 1) * b)?, t_reg[r]))
            .collect::<Result<Vec<_>>>()?;
        Ok(Var::concat(&bands, 2)?)
    }
}
