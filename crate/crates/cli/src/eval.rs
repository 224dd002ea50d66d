//! Metrics per (distance cap × weather subset), for a trained model or for
//! the ground-truth oracle.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use tride_core::metrics::{csv_row, MetricsAccumulator, MetricsReport, CSV_HEADER};
use tride_core::synth::SceneSample;
use tride_core::{ModelInput, TrideModel, WeatherLabel};

use crate::dataset::Dataset;
use crate::error::{CliError, Result};

pub const DEFAULT_CAPS: [f64; 3] = [50.0, 70.0, 80.0];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Subset {
    All,
    Weather(WeatherLabel),
}

impl Subset {
    pub const ALL: [Subset; 4] = [
        Subset::All,
        Subset::Weather(WeatherLabel::Normal),
        Subset::Weather(WeatherLabel::Rainy),
        Subset::Weather(WeatherLabel::Night),
    ];

    pub fn contains(self, w: WeatherLabel) -> bool {
        match self {
            Subset::All => true,
            Subset::Weather(x) => x == w,
        }
    }
}

impl fmt::Display for Subset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Subset::All => f.write_str("all"),
            Subset::Weather(w) => f.write_str(w.name()),
        }
    }
}

impl FromStr for Subset {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        if s == "all" {
            return Ok(Subset::All);
        }
        s.parse::<WeatherLabel>()
            .map(Subset::Weather)
            .map_err(|_| CliError::contract(format!("unknown subset '{s}' (all, normal, rainy, night)")))
    }
}

/// Which ground truth the metrics compare against.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, clap::ValueEnum)]
pub enum GroundTruth {
    /// Exact dense depth.
    #[default]
    Dense,
    /// Single-scan style sparse depth only.
    Sparse,
}

pub enum Predictor<'a> {
    Model(&'a TrideModel<f32>),
    /// Feeds the ground truth back as the prediction.
    Oracle,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalRow {
    pub subset: Subset,
    pub cap: f64,
    pub report: MetricsReport,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub rows: Vec<EvalRow>,
    /// Weather top-1 accuracy over all scenes, when the model classifies.
    pub weather_accuracy: Option<f64>,
}

impl Evaluation {
    pub fn row(&self, subset: Subset, cap: f64) -> Option<&MetricsReport> {
        self.rows.iter().find(|r| r.subset == subset && r.cap == cap).map(|r| &r.report)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            s.push_str(&csv_row(&r.subset.to_string(), r.cap, &r.report));
            s.push('\n');
        }
        s
    }
}

/// Fails when the model needs a modality the dataset lacks.
pub fn check_compatible(model: &TrideModel<f32>, data: &Dataset) -> Result<()> {
    let (need, have) = (model.config.modalities, data.modalities);
    let missing: Vec<&str> = [
        (need.radar && !have.radar, "radar"),
        (need.text && !have.text, "text"),
    ]
    .iter()
    .filter(|(m, _)| *m)
    .map(|(_, n)| *n)
    .collect();
    if !missing.is_empty() {
        return Err(CliError::contract(format!(
            "modality mismatch: checkpoint model uses {need} but dataset {} provides {have} (missing {})",
            data.root.display(),
            missing.join(", ")
        )));
    }
    Ok(())
}

/// Index of the largest logit.
pub fn argmax(xs: &[f32]) -> usize {
    xs.iter()
        .enumerate()
        .fold((0, f32::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
        .0
}

pub fn evaluate(
    predictor: &Predictor<'_>,
    scenes: &[SceneSample],
    caps: &[f64],
    subsets: &[Subset],
    gt: GroundTruth,
) -> Result<Evaluation> {
    let mut acc = vec![MetricsAccumulator::new(); caps.len() * subsets.len()];
    let mut correct = 0usize;
    let mut classified = 0usize;
    for scene in scenes {
        let target = match gt {
            GroundTruth::Dense => &scene.depth.data,
            GroundTruth::Sparse => &scene.sparse.data,
        };
        let pred: Vec<f32> = match predictor {
            Predictor::Oracle => target.clone(),
            Predictor::Model(model) => {
                let input = ModelInput::<f32>::from_sample(scene, &model.config)?;
                let (depth, logits) = model.predict(&input)?;
                if let Some(l) = logits {
                    classified += 1;
                    correct += usize::from(argmax(&l) == scene.weather.index());
                }
                depth
            }
        };
        for (si, subset) in subsets.iter().enumerate() {
            if !subset.contains(scene.weather) {
                continue;
            }
            for (ci, &cap) in caps.iter().enumerate() {
                acc[si * caps.len() + ci].add(&pred, target, cap)?;
            }
        }
    }
    let mut rows = Vec::with_capacity(acc.len());
    for (si, &subset) in subsets.iter().enumerate() {
        for (ci, &cap) in caps.iter().enumerate() {
            rows.push(EvalRow {
                subset,
                cap,
                report: acc[si * caps.len() + ci].report(),
            });
        }
    }
    Ok(Evaluation {
        rows,
        weather_accuracy: (classified > 0).then(|| correct as f64 / classified as f64),
    })
}

pub fn write_csv(eval: &Evaluation, path: &Path) -> Result<()> {
    std::fs::write(path, eval.to_csv()).map_err(|e| CliError::io(path, e))
}

/// Parses `"50,70,80"`.
pub fn parse_caps(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|c| {
            c.trim()
                .parse::<f64>()
                .ok()
                .filter(|&v| v > 0.0)
                .ok_or_else(|| CliError::contract(format!("invalid cap '{c}'")))
        })
        .collect()
}

pub fn parse_subsets(s: &str) -> Result<Vec<Subset>> {
    s.split(',').map(|x| x.trim().parse()).collect()
}
