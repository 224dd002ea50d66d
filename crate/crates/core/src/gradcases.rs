//! Gradient-check cases for every model block and for a micro model.
//! Parameters are checked alongside the block inputs.

use std::sync::Arc;

use tride_autodiff::gradcheck::{grad_check_inputs, GradCheckOptions, GradCheckReport};
use tride_autodiff::suite::{probe, random_tensor, GradCase};
use tride_autodiff::{Tape, Tensor, Var};

use crate::attention::{GeneralAttention, RegionalAttention};
use crate::config::{FusionKind, ModelConfig};
use crate::decoder::Daspp;
use crate::encoders::{PointEncoder, PyramidEncoder};
use crate::error::Result;
use crate::fusion::FusionBlock;
use crate::geometry::RegionAssignment;
use crate::losses;
use crate::model::{ModelInput, TrideModel};
use crate::nn::{Bound, LstmParams, ParamStore};
use crate::synth::{generate_scene, GenParams};
use crate::text::{encode_paragraph, weather_feature, RadarEnrichment, WeatherClassifier, WeatherLabel};

type BlockFn = dyn for<'t> Fn(&'t Tape<f64>, &Bound<'t, f64>, &[Var<'t, f64>]) -> Result<Var<'t, f64>> + Send + Sync;

/// Gradient check over `inputs` followed by every parameter in `store`,
/// with parameters randomised away from their (often zero) initial values.
fn block_case(name: &str, store: ParamStore<f64>, inputs: Vec<Tensor<f64>>, f: Arc<BlockFn>) -> GradCase {
    let params = store
        .tensors()
        .iter()
        .enumerate()
        .map(|(i, t)| random_tensor(t.shape(), -0.5, 0.5, 1000 + i as u64))
        .collect();
    case_with_params(name, params, inputs, f)
}

fn case_with_params(name: &str, params: Vec<Tensor<f64>>, inputs: Vec<Tensor<f64>>, f: Arc<BlockFn>) -> GradCase {
    let n_in = inputs.len();
    let mut all = inputs;
    all.extend(params);
    GradCase::new(name, None, move |opts: &GradCheckOptions| -> tride_autodiff::Result<GradCheckReport> {
        let f = f.clone();
        grad_check_inputs(
            move |tape, xs| {
                let p = Bound::from_vars(xs[n_in..].to_vec());
                f(tape, &p, &xs[..n_in]).map_err(into_ad)
            },
            &all,
            opts,
        )
    })
}

fn into_ad(e: crate::Error) -> tride_autodiff::AdError {
    match e {
        crate::Error::Autodiff(a) => a,
        other => tride_autodiff::AdError::Contract(other.to_string()),
    }
}

fn r(shape: &[usize], seed: u64) -> Tensor<f64> {
    random_tensor(shape, -1.0, 1.0, seed)
}

/// One case per block: fusion variants, attention, radar enrichment,
/// DASPP, paragraph LSTM, weather feature and classifier, encoders, losses.
pub fn block_cases() -> Vec<GradCase> {
    let mut cases = Vec::new();
    let (c, ct) = (4, 6);

    for kind in [FusionKind::Wafb, FusionKind::Gated, FusionKind::Concat, FusionKind::Add] {
        let mut store = ParamStore::new(1);
        let block = FusionBlock::new(&mut store, "fuse", kind, c, ct, 3);
        let name = format!("fusion {kind}");
        cases.push(block_case(
            &name,
            store,
            vec![r(&[c, 3, 4], 1), r(&[c, 3, 4], 2), r(&[ct], 3)],
            Arc::new(move |t, p, x| {
                let t_wea = (kind == FusionKind::Wafb).then_some(x[2]);
                let y = block.forward(p, x[0], x[1], t_wea)?;
                // keep the unused weather input on the tape for other kinds
                Ok(probe(t, y)?.add(x[2].sum().scale(0.0))?)
            }),
        ));
    }

    {
        let mut store = ParamStore::new(2);
        let ga = GeneralAttention::new(&mut store, "ga", 8, ct);
        cases.push(block_case(
            "general attention",
            store,
            vec![r(&[8, 2, 3], 4), r(&[ct], 5)],
            Arc::new(move |t, p, x| Ok(probe(t, ga.forward(p, x[0], x[1])?)?)),
        ));
    }
    {
        let mut store = ParamStore::new(3);
        let ra = RegionalAttention::new(&mut store, "ra", 8, ct);
        cases.push(block_case(
            "regional attention",
            store,
            vec![r(&[8, 2, 8], 6), r(&[ct], 7), r(&[ct], 8), r(&[ct], 9), r(&[ct], 10)],
            Arc::new(move |t, p, x| Ok(probe(t, ra.forward(p, x[0], [x[1], x[2], x[3], x[4]])?)?)),
        ));
    }
    {
        let mut store = ParamStore::new(4);
        let reb = RadarEnrichment::new(&mut store, 10, ct);
        let regions = RegionAssignment {
            bands: [vec![0, 3], vec![], vec![1], vec![2, 4, 5]],
        };
        cases.push(block_case(
            "radar enrichment",
            store,
            vec![r(&[ct], 11), r(&[ct], 12), r(&[ct], 13), r(&[ct], 14), r(&[6, 10], 15)],
            Arc::new(move |t, p, x| {
                let out = reb.forward(p, [x[0], x[1], x[2], x[3]], Some(x[4]), &regions)?;
                Ok(probe(t, Var::concat(&out, 0)?)?)
            }),
        ));
    }
    {
        let mut store = ParamStore::new(5);
        let daspp = Daspp::new(&mut store, "daspp", 4, &[1, 2, 4]);
        cases.push(block_case(
            "daspp",
            store,
            vec![r(&[4, 5, 6], 16)],
            Arc::new(move |t, p, x| Ok(probe(t, daspp.forward(p, x[0])?)?)),
        ));
    }
    {
        let mut store = ParamStore::new(6);
        let cell = LstmParams::new(&mut store, "lstm", 10, ct);
        cases.push(block_case(
            "paragraph lstm",
            store,
            vec![r(&[10], 17), r(&[10], 18), r(&[10], 19)],
            Arc::new(move |t, p, x| Ok(probe(t, encode_paragraph(p, &cell, x)?)?)),
        ));
    }
    cases.push(block_case(
        "weather feature",
        ParamStore::new(7),
        vec![r(&[10, 2, 3], 20), r(&[ct], 21)],
        Arc::new(|t, _, x| Ok(probe(t, weather_feature(x[0], x[1])?)?)),
    ));
    {
        let mut store = ParamStore::new(8);
        let mlp = WeatherClassifier::new(&mut store, ct);
        cases.push(block_case(
            "weather classifier",
            store,
            vec![r(&[ct], 22)],
            Arc::new(move |_, p, x| Ok(losses::loss_cls(mlp.logits(p, x[0])?, WeatherLabel::Rainy)?)),
        ));
    }
    {
        let mut store = ParamStore::new(9);
        let enc = PyramidEncoder::new(&mut store, "enc", 3, [4, 4, 4, 4, 4], 2);
        let stage = enc.stages[0].clone();
        let mut small = ParamStore::new(9);
        // only the first stage's parameters take part
        let stage_ids: Vec<_> = [stage.down.weight, stage.down.bias.unwrap()]
            .into_iter()
            .chain(stage.blocks.iter().flat_map(|b| {
                [b.conv1.weight, b.conv1.bias.unwrap(), b.conv2.weight, b.conv2.bias.unwrap()]
            }))
            .collect();
        let remap: Vec<_> = stage_ids
            .iter()
            .map(|&id| small.add(format!("p{}", small.len()), store.get(id).clone()))
            .collect();
        let mut stage = stage;
        let mut it = remap.into_iter();
        stage.down.weight = it.next().unwrap();
        stage.down.bias = it.next();
        for b in stage.blocks.iter_mut() {
            b.conv1.weight = it.next().unwrap();
            b.conv1.bias = it.next();
            b.conv2.weight = it.next().unwrap();
            b.conv2.bias = it.next();
        }
        cases.push(block_case(
            "image encoder stage",
            small,
            vec![r(&[3, 6, 8], 23)],
            Arc::new(move |t, p, x| Ok(probe(t, stage.forward(p, x[0])?)?)),
        ));
    }
    {
        let mut store = ParamStore::new(10);
        let enc = PyramidEncoder::new(&mut store, "radar", 3, [2, 2, 3, 3, 3], 1);
        cases.push(block_case(
            "radar encoder",
            store,
            vec![r(&[3, 32, 32], 24)],
            Arc::new(move |t, p, x| {
                let levels = enc.forward(p, x[0])?;
                let mut total = probe(t, levels[0])?;
                for l in &levels[1..] {
                    total = total.add(probe(t, *l)?)?;
                }
                Ok(total)
            }),
        ));
    }
    {
        let mut store = ParamStore::new(11);
        let enc = PointEncoder::new(&mut store, 8, 7);
        cases.push(block_case(
            "point encoder",
            store,
            vec![r(&[5, 5], 25)],
            Arc::new(move |t, p, x| Ok(probe(t, enc.forward(p, Some(x[0]))?.expect("points"))?)),
        ));
    }
    {
        // predictions kept away from the targets so |·| stays differentiable
        let dense = crate::geometry::DepthMap::new(2, 3, vec![5.0, 6.0, 0.0, 7.0, 8.0, 9.0]).unwrap();
        let sparse = crate::geometry::DepthMap::new(2, 3, vec![0.0, 6.5, 0.0, 0.0, 7.5, 0.0]).unwrap();
        cases.push(block_case(
            "depth loss",
            ParamStore::new(12),
            vec![Tensor::from_f64(vec![1, 2, 3], &[4.0, 7.1, 3.0, 8.2, 6.0, 9.9]).unwrap()],
            Arc::new(move |_, _, x| losses::loss_depth(x[0], &dense, &sparse)),
        ));
    }
    cases
}

/// Configuration of the 32×64 micro model used by the model-level check.
pub fn micro_config() -> ModelConfig {
    ModelConfig {
        base_channels: 4,
        text_dim: 8,
        point_dim: 8,
        point_hidden: 8,
        sentence_dim: 16,
        ..Default::default()
    }
}

/// Full I+R+T forward pass (depth probe plus weather cross-entropy) on a
/// 32×64 synthetic scene, checked against every parameter tensor.
/// Parameters keep their initial values except all-zero tensors (biases),
/// which get small random values.
pub fn model_case() -> GradCase {
    let config = micro_config();
    // a dense radar sweep keeps the radar branch away from its all-zero regime
    let gen = GenParams {
        height: 32,
        width: 64,
        radar_points: 256,
        ..Default::default()
    };
    let scene = generate_scene(5, &gen).expect("scene");
    let model = TrideModel::<f64>::new(config.clone(), 3).expect("model");
    let input = ModelInput::<f64>::from_sample(&scene, &config).expect("input");
    let label = scene.weather;
    // zero-initialised biases would put sparse-radar activations exactly on
    // ReLU kinks; check at a generic point instead
    let params = model
        .params
        .tensors()
        .iter()
        .enumerate()
        .map(|(i, t)| {
            if t.data().iter().all(|&v| v == 0.0) {
                random_tensor(t.shape(), -0.1, 0.1, 2000 + i as u64)
            } else {
                t.clone()
            }
        })
        .collect();
    let arch = Arc::new(model);
    case_with_params(
        "micro model I+R+T 32x64",
        params,
        vec![],
        Arc::new(move |t, p, _| {
            let out = arch.forward(p, t, &input)?;
            let d = probe(t, out.depth.scale(1.0 / 40.0))?;
            let c = losses::loss_cls(out.weather_logits.expect("text branch"), label)?;
            Ok(d.add(c)?)
        }),
    )
}
