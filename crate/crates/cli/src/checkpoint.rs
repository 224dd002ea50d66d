//! Training checkpoints: model parameters and Adam moments in the named
//! tensor format, plus a `<stem>.meta.json` sidecar holding the run config
//! and step counter.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tride_autodiff::checkpoint::{load_checkpoint, save_checkpoint};
use tride_autodiff::{AdamState, Tensor};
use tride_core::TrideModel;

use crate::config::RunConfig;
use crate::error::{CliError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    pub config: RunConfig,
    /// Optimiser steps taken.
    pub step: u64,
    /// Validation MAE at this step, when measured.
    pub val_mae: Option<f64>,
}

pub fn meta_path(stem: &Path) -> PathBuf {
    let mut p = stem.as_os_str().to_owned();
    p.push(".meta.json");
    p.into()
}

const PARAM: &str = "param/";
const MOMENT1: &str = "adam.m/";
const MOMENT2: &str = "adam.v/";

pub fn save(stem: &Path, model: &TrideModel<f32>, adam: Option<&AdamState<f32>>, meta: &CheckpointMeta) -> Result<()> {
    if let Some(dir) = stem.parent() {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let names = model.params.names();
    let mut tensors: Vec<(String, Tensor<f32>)> = names
        .iter()
        .zip(model.params.tensors())
        .map(|(n, t)| (format!("{PARAM}{n}"), t.clone()))
        .collect();
    if let Some(a) = adam {
        for (prefix, moments) in [(MOMENT1, &a.m), (MOMENT2, &a.v)] {
            tensors.extend(names.iter().zip(moments).map(|(n, t)| (format!("{prefix}{n}"), t.clone())));
        }
    }
    save_checkpoint(stem, &tensors)?;
    let path = meta_path(stem);
    let json = serde_json::to_string_pretty(meta).expect("meta serialises");
    std::fs::write(&path, json).map_err(|e| CliError::io(&path, e))
}

pub fn load_meta(stem: &Path) -> Result<CheckpointMeta> {
    let path = meta_path(stem);
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config {
        path,
        msg: e.to_string(),
    })
}

pub struct Loaded {
    pub meta: CheckpointMeta,
    pub model: TrideModel<f32>,
    /// Present when the checkpoint carries optimiser state.
    pub adam: Option<AdamState<f32>>,
}

pub fn load(stem: &Path) -> Result<Loaded> {
    let meta = load_meta(stem)?;
    let mut model = TrideModel::<f32>::new(meta.config.model.clone(), meta.config.seed)?;
    let all = load_checkpoint(stem)?;
    let pick = |prefix: &str| -> Vec<(String, Tensor<f32>)> {
        all.iter()
            .filter_map(|(n, t)| n.strip_prefix(prefix).map(|n| (n.to_string(), t.clone())))
            .collect()
    };
    let params = pick(PARAM);
    if params.len() != model.params.len() {
        return Err(CliError::contract(format!(
            "checkpoint {} holds {} parameter tensors, the configured model has {}",
            stem.display(),
            params.len(),
            model.params.len()
        )));
    }
    model.params.load_named(&params)?;
    let (m, v) = (pick(MOMENT1), pick(MOMENT2));
    let adam = if m.is_empty() && v.is_empty() {
        None
    } else {
        let order = |named: Vec<(String, Tensor<f32>)>| -> Result<Vec<Tensor<f32>>> {
            let mut store = model.params.clone();
            store.load_named(&named)?;
            Ok(store.tensors().to_vec())
        };
        Some(AdamState {
            m: order(m)?,
            v: order(v)?,
            step: meta.step,
        })
    };
    Ok(Loaded { meta, model, adam })
}
