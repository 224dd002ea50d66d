//! Mini-batch Adam training with polynomial learning-rate decay.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tride_autodiff::{adam_step, poly_lr, AdamConfig, AdamState, Tape, Tensor};
use tride_core::geometry::DepthMap;
use tride_core::losses::{loss_cls, loss_depth, total_loss};
use tride_core::synth::SceneSample;
use tride_core::{ModelInput, TrideModel, WeatherLabel};

use crate::checkpoint::{self, CheckpointMeta};
use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::eval::{evaluate, GroundTruth, Predictor, Subset};

pub const LOSS_CSV_HEADER: &str = "step,lr,loss_depth,loss_cls,loss_total";

/// One precomputed training example.
struct Example {
    input: ModelInput<f32>,
    dense: DepthMap,
    sparse: DepthMap,
    weather: WeatherLabel,
}

impl Example {
    fn new(s: &SceneSample, model: &TrideModel<f32>) -> Result<Self> {
        Ok(Example {
            input: ModelInput::from_sample(s, &model.config)?,
            dense: s.depth.clone(),
            sparse: s.sparse.clone(),
            weather: s.weather,
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepLosses {
    pub depth: f64,
    pub cls: f64,
    pub total: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: TrideModel<f32>,
    pub steps: u64,
    pub last: StepLosses,
    pub best_val_mae: Option<f64>,
    pub best_step: Option<u64>,
    pub loss_csv: PathBuf,
}

/// Loss, learning rate and gradient of one mini-batch, averaged over it.
fn batch_gradients(
    model: &TrideModel<f32>,
    batch: &[&Example],
    cfg: &RunConfig,
) -> Result<(StepLosses, Vec<Tensor<f32>>)> {
    let mut grads: Vec<Tensor<f32>> = model.params.tensors().iter().map(|t| Tensor::zeros(t.shape().to_vec())).collect();
    let mut losses = StepLosses::default();
    let scale = 1.0 / batch.len() as f32;
    for ex in batch {
        let tape = Tape::new();
        let p = model.params.bind(&tape, true);
        let out = model.forward(&p, &tape, &ex.input)?;
        let ld = loss_depth(out.depth, &ex.dense, &ex.sparse)?;
        let lc = out.weather_logits.map(|l| loss_cls(l, ex.weather)).transpose()?;
        let total = total_loss(ld, lc, cfg.loss)?;
        losses.depth += ld.item() as f64;
        losses.cls += lc.map_or(0.0, |l| l.item() as f64);
        losses.total += total.item() as f64;
        let g = tape.backward(total.scale(scale))?;
        for (acc, v) in grads.iter_mut().zip(p.vars()) {
            if let Some(gv) = g.get(*v) {
                acc.data_mut().iter_mut().zip(gv.data()).for_each(|(a, b)| *a += b);
            }
        }
    }
    let n = batch.len() as f64;
    losses.depth /= n;
    losses.cls /= n;
    losses.total /= n;
    Ok((losses, grads))
}

fn validation_mae(model: &TrideModel<f32>, val: &[SceneSample], cap: f64) -> Result<f64> {
    let e = evaluate(&Predictor::Model(model), val, &[cap], &[Subset::All], GroundTruth::Dense)?;
    Ok(e.rows[0].report.mae)
}

/// Keeps the rows of an existing loss log up to `step`.
fn resume_log(path: &Path, step: u64) -> Result<String> {
    let mut out = format!("{LOSS_CSV_HEADER}\n");
    if let Ok(text) = std::fs::read_to_string(path) {
        for line in text.lines().skip(1) {
            let s: u64 = line.split(',').next().and_then(|x| x.parse().ok()).unwrap_or(u64::MAX);
            if s <= step {
                out.push_str(line);
                out.push('\n');
            }
        }
    }
    Ok(out)
}

pub struct TrainRequest<'a> {
    pub config: &'a RunConfig,
    pub train: &'a [SceneSample],
    pub val: &'a [SceneSample],
    pub out_dir: &'a Path,
    /// Continue from this checkpoint stem.
    pub resume: Option<&'a Path>,
    /// Stop after this many total steps (the schedule still spans
    /// `optim.steps`, so a later resume continues it unchanged).
    pub stop_after: Option<u64>,
    /// Progress lines go here (e.g. stderr); `None` keeps quiet.
    pub progress: Option<&'a mut dyn std::io::Write>,
}

/// Trains for `config.optim.steps` steps, writing `loss.csv` and the `best`
/// and `final` checkpoints into `out_dir`. `final` holds the state at the end
/// of this call, optimiser moments included, and is what `resume` expects.
pub fn train(mut req: TrainRequest<'_>) -> Result<TrainOutcome> {
    let cfg = req.config;
    cfg.validate()?;
    if req.train.is_empty() {
        return Err(CliError::contract("empty split 'train'"));
    }
    std::fs::create_dir_all(req.out_dir).map_err(|e| CliError::io(req.out_dir, e))?;
    let loss_csv = req.out_dir.join("loss.csv");

    let (mut model, mut adam, start, mut best) = match req.resume {
        Some(stem) => {
            let loaded = checkpoint::load(stem)?;
            if loaded.meta.config.model != cfg.model {
                return Err(CliError::contract(format!(
                    "checkpoint {} was trained with a different model config",
                    stem.display()
                )));
            }
            let adam = loaded
                .adam
                .ok_or_else(|| CliError::contract(format!("checkpoint {} has no optimiser state", stem.display())))?;
            let best = match checkpoint::load_meta(&req.out_dir.join("best")) {
                Ok(m) => m.val_mae.map(|v| (v, m.step)),
                Err(_) => None,
            };
            (loaded.model, adam, loaded.meta.step, best)
        }
        None => {
            let model = TrideModel::<f32>::new(cfg.model.clone(), cfg.seed)?;
            let adam = AdamState::new(model.params.tensors());
            (model, adam, 0, None)
        }
    };
    let mut log = resume_log(&loss_csv, start)?;

    let order = model.config.paragraph_order;
    let mut examples = Vec::with_capacity(req.train.len());
    let mut flipped = Vec::new();
    for s in req.train {
        examples.push(Example::new(s, &model)?);
        if cfg.train.flip {
            flipped.push(Example::new(&s.flip_horizontal(order)?, &model)?);
        }
    }
    let val: Vec<SceneSample> = match cfg.train.val_limit {
        Some(n) => req.val.iter().take(n).cloned().collect(),
        None => req.val.to_vec(),
    };
    let adam_cfg = AdamConfig {
        beta1: cfg.optim.beta1,
        beta2: cfg.optim.beta2,
        eps: cfg.optim.eps,
    };
    let cap = cfg.model.depth_cap;
    let mut last = StepLosses::default();

    let meta = |step: u64, val_mae: Option<f64>| CheckpointMeta {
        config: cfg.clone(),
        step,
        val_mae,
    };
    let end = req.stop_after.map_or(cfg.optim.steps, |s| s.min(cfg.optim.steps));
    for step in start..end {
        // per-step stream, so a resumed run draws the same batches
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(step + 1);
        let batch: Vec<&Example> = (0..cfg.optim.batch_size)
            .map(|_| {
                let i = rng.random_range(0..examples.len());
                if cfg.train.flip && rng.random_bool(0.5) {
                    &flipped[i]
                } else {
                    &examples[i]
                }
            })
            .collect();
        let lr = poly_lr(step, cfg.optim.steps, cfg.optim.base_lr, cfg.optim.power);
        let (losses, grads) = batch_gradients(&model, &batch, cfg)?;
        if !losses.total.is_finite() || grads.iter().any(|g| !g.is_finite()) {
            let value = if losses.total.is_finite() { f64::NAN } else { losses.total };
            std::fs::write(&loss_csv, &log).map_err(|e| CliError::io(&loss_csv, e))?;
            return Err(CliError::NonFinite { step: step + 1, value });
        }
        adam_step(model.params.tensors_mut(), &grads, &mut adam, lr, adam_cfg)?;
        last = losses;
        writeln!(log, "{},{lr:e},{:.6},{:.6},{:.6}", step + 1, losses.depth, losses.cls, losses.total).expect("string write");

        let done = step + 1;
        if (done % cfg.train.val_every == 0 || done == cfg.optim.steps) && !val.is_empty() {
            let mae = validation_mae(&model, &val, cap)?;
            if let Some(out) = req.progress.as_mut() {
                let _ = writeln!(
                    out,
                    "step {done}/{}: loss_depth {:.4} loss_cls {:.4} val_mae {mae:.4}",
                    cfg.optim.steps, losses.depth, losses.cls
                );
            }
            if best.is_none_or(|(b, _)| mae < b) {
                best = Some((mae, done));
                checkpoint::save(&req.out_dir.join("best"), &model, None, &meta(done, Some(mae)))?;
            }
        }
    }
    std::fs::write(&loss_csv, &log).map_err(|e| CliError::io(&loss_csv, e))?;
    let steps = end.max(start);
    checkpoint::save(&req.out_dir.join("final"), &model, Some(&adam), &meta(steps, None))?;
    Ok(TrainOutcome {
        model,
        steps,
        last,
        best_val_mae: best.map(|b| b.0),
        best_step: best.map(|b| b.1),
        loss_csv,
    })
}
