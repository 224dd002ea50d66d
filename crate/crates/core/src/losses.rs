//! Training objective: masked L1 depth loss against dense and sparse ground
//! truth, and weather cross-entropy.

use serde::{Deserialize, Serialize};
use tride_autodiff::{Real, Var};

use crate::error::{Error, Result};
use crate::geometry::DepthMap;
use crate::text::WeatherLabel;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub w_depth: f64,
    pub w_cls: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            w_depth: 1.0,
            w_cls: 1.0,
        }
    }
}

/// `mean_{Ω_s} |D_s − D̂| + mean_Ω |D − D̂|`; a term with an empty mask
/// contributes nothing.
pub fn loss_depth<'t, T: Real>(pred: Var<'t, T>, dense: &DepthMap, sparse: &DepthMap) -> Result<Var<'t, T>> {
    let n = pred.numel();
    if dense.data.len() != n || sparse.data.len() != n {
        return Err(Error::dim(format!(
            "prediction has {n} pixels, dense {} and sparse {}",
            dense.data.len(),
            sparse.data.len()
        )));
    }
    let mut terms = Vec::with_capacity(2);
    for gt in [sparse, dense] {
        let mask: Vec<bool> = gt.data.iter().map(|&d| d > 0.0).collect();
        if mask.iter().any(|&m| m) {
            let target: Vec<T> = gt.data.iter().map(|&d| T::lit(d as f64)).collect();
            terms.push(pred.l1_loss_masked(&target, &mask)?);
        }
    }
    match terms.as_slice() {
        [] => Err(Error::contract("sample has neither dense nor sparse ground truth")),
        [a] => Ok(*a),
        [a, b] => Ok(a.add(*b)?),
        _ => unreachable!(),
    }
}

pub fn loss_cls<'t, T: Real>(logits: Var<'t, T>, label: WeatherLabel) -> Result<Var<'t, T>> {
    Ok(logits.cross_entropy_logits(label.index())?)
}

/// `w_D·L_depth + w_C·L_cls`.
pub fn total_loss<'t, T: Real>(depth: Var<'t, T>, cls: Option<Var<'t, T>>, w: LossWeights) -> Result<Var<'t, T>> {
    if w.w_depth < 0.0 || w.w_cls < 0.0 {
        return Err(Error::contract("loss weights must be non-negative"));
    }
    let d = depth.scale(T::lit(w.w_depth));
    match cls {
        Some(c) => Ok(d.add(c.scale(T::lit(w.w_cls)))?),
        None => Ok(d),
    }
}
