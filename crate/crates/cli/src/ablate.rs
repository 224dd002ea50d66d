//! Ablation sweeps: train and evaluate every arm of a grid under several
//! seeds, then report long-format metrics and per-arm medians.

use std::collections::HashSet;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use tride_core::synth::SceneSample;
use tride_core::decoder::effective_fusion;
use tride_core::{FusionKind, Modalities, ModelConfig};

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::eval::{evaluate, GroundTruth, Predictor, Subset, DEFAULT_CAPS};
use crate::train::{train, TrainRequest};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblationGrid {
    pub modalities: Vec<Modalities>,
    pub fusion: Vec<FusionKind>,
    /// `(ga_scale, ra_scale)` pairs.
    pub attention: Vec<(u32, u32)>,
    /// `(C_t, C_r')` pairs.
    pub dims: Vec<(usize, usize)>,
    pub seeds: Vec<u64>,
}

impl AblationGrid {
    /// The grid that varies nothing but the seed.
    pub fn single(base: &ModelConfig, seeds: Vec<u64>) -> Self {
        AblationGrid {
            modalities: vec![base.modalities],
            fusion: vec![base.fusion],
            attention: vec![(base.ga_scale, base.ra_scale)],
            dims: vec![(base.text_dim, base.point_dim)],
            seeds,
        }
    }

    pub fn from_json(text: &str, origin: &Path) -> Result<Self> {
        let grid: AblationGrid = serde_json::from_str(text).map_err(|e| CliError::Config {
            path: origin.to_path_buf(),
            msg: e.to_string(),
        })?;
        if grid.modalities.is_empty()
            || grid.fusion.is_empty()
            || grid.attention.is_empty()
            || grid.dims.is_empty()
            || grid.seeds.is_empty()
        {
            return Err(CliError::Config {
                path: origin.to_path_buf(),
                msg: "every grid axis needs at least one entry".into(),
            });
        }
        Ok(grid)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_json(&text, path)
    }

    /// Distinct arms in grid order, plus a warning per duplicate dropped.
    pub fn arms(&self, base: &ModelConfig) -> (Vec<Arm>, Vec<String>) {
        let mut seen = HashSet::new();
        let mut arms = Vec::new();
        let mut warnings = Vec::new();
        for &m in &self.modalities {
            for &f in &self.fusion {
                for &(ga, ra) in &self.attention {
                    for &(ct, cr) in &self.dims {
                        let mut model = base.clone();
                        model.modalities = m;
                        model.fusion = f;
                        model.ga_scale = ga;
                        model.ra_scale = ra;
                        model.text_dim = ct;
                        model.point_dim = cr;
                        let name = arm_name(&model);
                        if seen.insert(name.clone()) {
                            arms.push(Arm { name, model });
                        } else {
                            warnings.push(format!("duplicate arm {name} ({m}, {f}) dropped"));
                        }
                    }
                }
            }
        }
        (arms, warnings)
    }
}

/// Arm label built from the settings the model actually uses: fusion is
/// meaningless without radar, and weather-aware fusion without text is
/// gated fusion, so such arms share a name and are deduplicated.
pub fn arm_name(model: &ModelConfig) -> String {
    let m = model.modalities;
    let fusion = if m.radar { effective_fusion(model).to_string() } else { "nofusion".into() };
    let mut name = format!("{m}_{fusion}");
    if m.text {
        name.push_str(&format!("_ga{}_ra{}_ct{}", model.ga_scale, model.ra_scale, model.text_dim));
        if model.uses_point_branch() {
            name.push_str(&format!("_cr{}", model.point_dim));
        }
    }
    name
}

#[derive(Clone, Debug, PartialEq)]
pub struct Arm {
    pub name: String,
    pub model: ModelConfig,
}

/// Outcome of one (arm, seed) run: named metrics, or the error.
#[derive(Clone, Debug)]
pub struct RunRecord {
    pub arm: String,
    pub seed: u64,
    pub result: std::result::Result<Vec<(String, f64)>, String>,
}

#[derive(Clone, Debug, Default)]
pub struct AblationReport {
    pub runs: Vec<RunRecord>,
    pub warnings: Vec<String>,
}

fn metric_pairs(eval: &crate::eval::Evaluation) -> Vec<(String, f64)> {
    let mut out = Vec::new();
    for row in &eval.rows {
        let r = &row.report;
        let key = format!("{}/{}", row.subset, row.cap);
        for (m, v) in [
            ("mae", r.mae),
            ("rmse", r.rmse),
            ("absrel", r.absrel),
            ("log10", r.log10),
            ("rmselog", r.rmselog),
            ("d1", r.d1),
            ("d2", r.d2),
            ("d3", r.d3),
        ] {
            out.push((format!("{key}/{m}"), v));
        }
    }
    if let Some(acc) = eval.weather_accuracy {
        out.push(("weather_acc".into(), acc));
    }
    out
}

impl AblationReport {
    pub fn value(&self, arm: &str, seed: u64, metric: &str) -> Option<f64> {
        let run = self.runs.iter().find(|r| r.arm == arm && r.seed == seed)?;
        run.result.as_ref().ok()?.iter().find(|(m, _)| m == metric).map(|p| p.1)
    }

    /// Median over the successful seeds of `arm`, ignoring undefined values.
    pub fn median(&self, arm: &str, metric: &str) -> Option<f64> {
        let mut v: Vec<f64> = self
            .runs
            .iter()
            .filter(|r| r.arm == arm)
            .filter_map(|r| r.result.as_ref().ok())
            .filter_map(|ms| ms.iter().find(|(m, _)| m == metric).map(|p| p.1))
            .filter(|x| x.is_finite())
            .collect();
        if v.is_empty() {
            return None;
        }
        v.sort_by(f64::total_cmp);
        let n = v.len();
        Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
    }

    fn arm_names(&self) -> Vec<&str> {
        let mut names: Vec<&str> = Vec::new();
        for r in &self.runs {
            if !names.contains(&r.arm.as_str()) {
                names.push(&r.arm);
            }
        }
        names
    }

    fn metric_names(&self) -> Vec<&str> {
        let mut names: Vec<&str> = Vec::new();
        for r in &self.runs {
            if let Ok(ms) = &r.result {
                for (m, _) in ms {
                    if !names.contains(&m.as_str()) {
                        names.push(m);
                    }
                }
            }
        }
        names
    }

    /// `arm,seed,metric,value`; a failed run gives one `error` row.
    pub fn long_csv(&self) -> String {
        let mut s = String::from("arm,seed,metric,value\n");
        for r in &self.runs {
            match &r.result {
                Ok(ms) => {
                    for (m, v) in ms {
                        let v = if v.is_finite() { v.to_string() } else { "NA".into() };
                        s.push_str(&format!("{},{},{m},{v}\n", r.arm, r.seed));
                    }
                }
                Err(e) => s.push_str(&format!("{},{},error,\"{}\"\n", r.arm, r.seed, e.replace('"', "'"))),
            }
        }
        s
    }

    /// One row per arm: run counts and the median of every metric.
    pub fn medians_csv(&self) -> String {
        let metrics = self.metric_names();
        let mut s = format!("arm,runs,failed,{}\n", metrics.join(","));
        for arm in self.arm_names() {
            let runs = self.runs.iter().filter(|r| r.arm == arm).count();
            let failed = self.runs.iter().filter(|r| r.arm == arm && r.result.is_err()).count();
            let vals: Vec<String> = metrics
                .iter()
                .map(|m| self.median(arm, m).map_or("NA".into(), |v| v.to_string()))
                .collect();
            s.push_str(&format!("{arm},{runs},{failed},{}\n", vals.join(",")));
        }
        s
    }
}

pub struct AblationRequest<'a> {
    pub base: &'a RunConfig,
    pub grid: &'a AblationGrid,
    pub train: &'a [SceneSample],
    pub val: &'a [SceneSample],
    pub test: &'a [SceneSample],
    pub out_dir: &'a Path,
    pub progress: Option<&'a mut dyn Write>,
}

/// Runs every (arm, seed); a failing run is recorded and the sweep goes on.
pub fn ablate(mut req: AblationRequest<'_>) -> Result<AblationReport> {
    let (arms, warnings) = req.grid.arms(&req.base.model);
    let mut report = AblationReport {
        runs: Vec::new(),
        warnings,
    };
    if let Some(out) = req.progress.as_mut() {
        for w in &report.warnings {
            let _ = writeln!(out, "warning: {w}");
        }
    }
    let subsets = Subset::ALL;
    for arm in &arms {
        for &seed in &req.grid.seeds {
            let mut cfg = req.base.clone();
            cfg.model = arm.model.clone();
            cfg.seed = seed;
            let dir = req.out_dir.join("runs").join(&arm.name).join(format!("seed{seed}"));
            let result = train(TrainRequest {
                config: &cfg,
                train: req.train,
                val: req.val,
                out_dir: &dir,
                resume: None,
                stop_after: None,
                progress: None,
            })
            .and_then(|o| evaluate(&Predictor::Model(&o.model), req.test, &DEFAULT_CAPS, &subsets, GroundTruth::Dense))
            .map(|e| metric_pairs(&e))
            .map_err(|e| e.to_string());
            if let Some(out) = req.progress.as_mut() {
                let _ = match &result {
                    Ok(ms) => {
                        let mae = ms.iter().find(|(m, _)| m == "all/80/mae").map_or(f64::NAN, |p| p.1);
                        writeln!(out, "{} seed {seed}: all/80 MAE {mae:.4}", arm.name)
                    }
                    Err(e) => writeln!(out, "{} seed {seed}: FAILED: {e}", arm.name),
                };
            }
            report.runs.push(RunRecord {
                arm: arm.name.clone(),
                seed,
                result,
            });
        }
    }
    std::fs::create_dir_all(req.out_dir).map_err(|e| CliError::io(req.out_dir, e))?;
    for (name, body) in [("ablation.csv", report.long_csv()), ("medians.csv", report.medians_csv())] {
        let path = req.out_dir.join(name);
        std::fs::write(&path, body).map_err(|e| CliError::io(&path, e))?;
    }
    Ok(report)
}
