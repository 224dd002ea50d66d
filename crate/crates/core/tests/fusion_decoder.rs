use tride_autodiff::suite::random_tensor;
use tride_autodiff::{ConvGeom, Real, Tape, Tensor, Var};
use tride_core::attention::{attention_weights, GeneralAttention, RegionalAttention};
use tride_core::decoder::Daspp;
use tride_core::fusion::FusionBlock;
use tride_core::nn::ParamStore;
use tride_core::{synth, FusionKind, Modalities, ModelConfig, ModelInput, TrideModel};

fn rand_f32(shape: &[usize], seed: u64) -> Tensor<f32> {
    random_tensor(shape, -1.0, 1.0, seed).cast()
}

/// Overwrites every parameter with U(lo, hi) so biases are non-zero too.
fn randomize<T: Real>(store: &mut ParamStore<T>, lo: f64, hi: f64, seed: u64) {
    for (i, t) in store.tensors_mut().iter_mut().enumerate() {
        *t = random_tensor(t.shape(), lo, hi, seed + i as u64).cast();
    }
}

#[test]
fn wafb_with_zero_radar_and_zero_biases_returns_image_feature_bitwise() {
    let mut store = ParamStore::<f32>::new(1);
    let block = FusionBlock::new(&mut store, "f", FusionKind::Wafb, 4, 6, 3);
    let tape = Tape::new();
    let p = store.bind(&tape, false);
    let img = rand_f32(&[4, 5, 6], 10);
    let out = block
        .forward(
            &p,
            tape.constant(img.clone()),
            tape.constant(Tensor::zeros(vec![4, 5, 6])),
            Some(tape.constant(rand_f32(&[6], 11))),
        )
        .unwrap()
        .value();
    assert_eq!(out.data(), img.data());
    let gated = FusionBlock::new(&mut store, "g", FusionKind::Gated, 4, 6, 3);
    let p = store.bind(&tape, false);
    let out = gated
        .forward(&p, tape.constant(img.clone()), tape.constant(Tensor::zeros(vec![4, 5, 6])), None)
        .unwrap()
        .value();
    assert_eq!(out.data(), img.data());
}

#[test]
fn wafb_minus_gated_is_gamma_times_beta() {
    for seed in 0..5 {
        let mut store = ParamStore::<f32>::new(seed);
        let block = FusionBlock::new(&mut store, "f", FusionKind::Wafb, 5, 8, 3);
        randomize(&mut store, -0.5, 0.5, 100 * seed);
        let tape = Tape::new();
        let p = store.bind(&tape, false);
        let img = tape.constant(rand_f32(&[5, 4, 8], seed + 1));
        let rad = tape.constant(rand_f32(&[5, 4, 8], seed + 2));
        let t = tape.constant(rand_f32(&[8], seed + 3));
        let wafb = block.wafb(&p, img, rad, t).unwrap().value();
        let gated = block.gated(&p, img, rad).unwrap().value();
        let (_, beta) = block.alpha_beta(&p, rad).unwrap();
        let gamma = block.gamma(&p, rad, t).unwrap();
        let gb = gamma.mul(beta).unwrap().value();
        for i in 0..wafb.numel() {
            let d = wafb.data()[i] - gated.data()[i];
            assert!((d - gb.data()[i]).abs() <= 1e-6, "seed {seed} index {i}: {d} vs {}", gb.data()[i]);
        }
    }
}

/// The weather gate as written: concatenate the broadcast weather feature
/// with the radar feature and run one convolution over both.
fn gamma_by_concatenation(block: &FusionBlock, store: &ParamStore<f64>, rad: &Tensor<f64>, t: &Tensor<f64>) -> Tensor<f64> {
    let (c, ct, k) = (block.channels, block.text_dim, block.kernel);
    let g = block.gamma.as_ref().unwrap();
    let w_rad = store.get(g.weight);
    let w_text = store.get(block.gamma_text.unwrap());
    // full kernel [c × (ct + c) × k × k], text channels first
    let mut kernel = vec![0.0; c * (ct + c) * k * k];
    for o in 0..c {
        for i in 0..ct {
            for q in 0..k * k {
                kernel[((o * (ct + c)) + i) * k * k + q] = w_text.data()[i * c * k * k + o * k * k + q];
            }
        }
        for i in 0..c {
            for q in 0..k * k {
                kernel[((o * (ct + c)) + ct + i) * k * k + q] = w_rad.data()[((o * c) + i) * k * k + q];
            }
        }
    }
    let tape = Tape::new();
    let s = rad.shape();
    let text_plane = tape.constant(t.clone()).broadcast_spatial(s[1], s[2]).unwrap();
    let x = Var::concat(&[text_plane, tape.constant(rad.clone())], 0).unwrap();
    let kernel = tape.constant(Tensor::new(vec![c, ct + c, k, k], kernel).unwrap());
    let bias = tape.constant(store.get(g.bias.unwrap()).clone());
    x.conv2d(kernel, Some(bias), ConvGeom::same(k, 1)).unwrap().sigmoid().value()
}

#[test]
fn split_weather_gate_matches_concatenated_convolution() {
    let mut store = ParamStore::<f64>::new(3);
    let block = FusionBlock::new(&mut store, "f", FusionKind::Wafb, 3, 5, 3);
    randomize(&mut store, -0.7, 0.7, 40);
    let rad = random_tensor(&[3, 4, 6], -1.0, 1.0, 41);
    let t = random_tensor(&[5], -1.0, 1.0, 42);
    let expected = gamma_by_concatenation(&block, &store, &rad, &t);
    let tape = Tape::new();
    let p = store.bind(&tape, false);
    let got = block.gamma(&p, tape.constant(rad), tape.constant(t)).unwrap().value();
    for (a, b) in got.data().iter().zip(expected.data()) {
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }
}

#[test]
fn different_weather_features_change_wafb_output() {
    let mut store = ParamStore::<f64>::new(4);
    let block = FusionBlock::new(&mut store, "f", FusionKind::Wafb, 4, 6, 3);
    let tape = Tape::new();
    let p = store.bind(&tape, false);
    let img = tape.constant(random_tensor(&[4, 4, 4], -1.0, 1.0, 1));
    let rad = tape.constant(random_tensor(&[4, 4, 4], 0.0, 1.0, 2));
    let a = block.wafb(&p, img, rad, tape.constant(random_tensor(&[6], -1.0, 1.0, 3))).unwrap().value();
    let b = block.wafb(&p, img, rad, tape.constant(random_tensor(&[6], -1.0, 1.0, 4))).unwrap().value();
    assert_ne!(a, b);
}

#[test]
fn fusion_rejects_mismatched_shapes_and_missing_weather() {
    let mut store = ParamStore::<f64>::new(5);
    let block = FusionBlock::new(&mut store, "f", FusionKind::Wafb, 2, 3, 3);
    let tape = Tape::new();
    let p = store.bind(&tape, false);
    let a = tape.constant(Tensor::zeros(vec![2, 4, 4]));
    let b = tape.constant(Tensor::zeros(vec![2, 4, 2]));
    assert!(block.forward(&p, a, b, Some(tape.constant(Tensor::zeros(vec![3])))).is_err());
    assert!(block.forward(&p, a, a, None).is_err());
    let add = FusionBlock::new(&mut store, "a", FusionKind::Add, 2, 3, 3);
    let out = add.forward(&p, a, a, None).unwrap();
    assert_eq!(out.shape(), vec![2, 4, 4]);
}

fn zero_all<T: Real>(store: &mut ParamStore<T>) {
    for t in store.tensors_mut() {
        *t = Tensor::zeros(t.shape().to_vec());
    }
}

#[test]
fn attention_with_zero_weights_is_identity() {
    let mut store = ParamStore::<f64>::new(6);
    let ga = GeneralAttention::new(&mut store, "ga", 4, 6);
    let ra = RegionalAttention::new(&mut store, "ra", 4, 6);
    let daspp = Daspp::new(&mut store, "daspp", 4, &[1, 2, 4]);
    zero_all(&mut store);
    let tape = Tape::new();
    let p = store.bind(&tape, false);
    let f = random_tensor(&[4, 3, 8], -1.0, 1.0, 7);
    let t = |s| tape.constant(random_tensor(&[6], -1.0, 1.0, s));
    let x = tape.constant(f.clone());
    assert_eq!(ga.forward(&p, x, t(1)).unwrap().value(), f);
    assert_eq!(ra.forward(&p, x, [t(1), t(2), t(3), t(4)]).unwrap().value(), f);
    assert_eq!(daspp.forward(&p, x).unwrap().value(), f);
}

#[test]
fn attention_rows_are_distributions() {
    let tape = Tape::new();
    let q = tape.constant(random_tensor(&[5, 4], -2.0, 2.0, 1));
    let k = tape.constant(random_tensor(&[7, 4], -2.0, 2.0, 2));
    let a = attention_weights(q, k).unwrap().value();
    assert_eq!(a.shape(), &[5, 7]);
    for row in a.data().chunks(7) {
        assert!(row.iter().all(|&v| v > 0.0));
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn regional_attention_preserves_horizontal_uniformity() {
    let mut store = ParamStore::<f64>::new(8);
    let ra = RegionalAttention::new(&mut store, "ra", 3, 4);
    randomize(&mut store, -0.5, 0.5, 9);
    let (c, h, w) = (3, 2, 8);
    let column = random_tensor(&[c, h], -1.0, 1.0, 10);
    let data = (0..c * h * w).map(|i| column.data()[i / w]).collect();
    let f = Tensor::new(vec![c, h, w], data).unwrap();
    let tape = Tape::new();
    let p = store.bind(&tape, false);
    let t = tape.constant(random_tensor(&[4], -1.0, 1.0, 11));
    let out = ra.forward(&p, tape.constant(f), [t, t, t, t]).unwrap().value();
    for row in out.data().chunks(w) {
        for v in row {
            assert!((v - row[0]).abs() < 1e-12);
        }
    }
}

#[test]
fn regional_attention_is_flip_equivariant() {
    let mut store = ParamStore::<f64>::new(12);
    let ra = RegionalAttention::new(&mut store, "ra", 3, 4);
    randomize(&mut store, -0.5, 0.5, 13);
    let f = random_tensor(&[3, 2, 8], -1.0, 1.0, 14);
    let tape = Tape::new();
    let p = store.bind(&tape, false);
    let t: Vec<_> = (0..4).map(|s| tape.constant(random_tensor(&[4], -1.0, 1.0, 20 + s))).collect();
    let out = ra.forward(&p, tape.constant(f.clone()), [t[0], t[1], t[2], t[3]]).unwrap().value();
    let flipped = ra
        .forward(&p, tape.constant(f.flip_last_axis()), [t[3], t[2], t[1], t[0]])
        .unwrap()
        .value();
    for (a, b) in flipped.data().iter().zip(out.flip_last_axis().data()) {
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }
}

#[test]
fn regional_attention_needs_width_divisible_by_four() {
    let mut store = ParamStore::<f64>::new(15);
    let ra = RegionalAttention::new(&mut store, "ra", 2, 3);
    let tape = Tape::new();
    let p = store.bind(&tape, false);
    let t = tape.constant(Tensor::zeros(vec![3]));
    let err = ra.forward(&p, tape.constant(Tensor::zeros(vec![2, 2, 6])), [t, t, t, t]).unwrap_err();
    assert!(err.to_string().contains("divisible by 4"), "{err}");
}

#[test]
fn daspp_keeps_shape() {
    let mut store = ParamStore::<f64>::new(16);
    let daspp = Daspp::new(&mut store, "d", 6, &[1, 2, 4]);
    let tape = Tape::new();
    let p = store.bind(&tape, false);
    let out = daspp.forward(&p, tape.constant(random_tensor(&[6, 4, 8], -1.0, 1.0, 17))).unwrap();
    assert_eq!(out.shape(), vec![6, 4, 8]);
}

fn small(modalities: Modalities, fusion: FusionKind) -> ModelConfig {
    ModelConfig {
        modalities,
        fusion,
        base_channels: 4,
        text_dim: 8,
        point_dim: 8,
        point_hidden: 8,
        sentence_dim: 16,
        ..Default::default()
    }
}

fn scene(h: usize, w: usize, seed: u64) -> synth::SceneSample {
    let gen = synth::GenParams {
        height: h,
        width: w,
        ..Default::default()
    };
    synth::generate_scene(seed, &gen).unwrap()
}

#[test]
fn every_modality_set_predicts_in_range_at_image_size() {
    let sets = [Modalities::I, Modalities::IR, Modalities::IT, Modalities::IRT];
    for (h, w) in [(32, 64), (64, 128), (32, 32)] {
        let s = scene(h, w, 3);
        for m in sets {
            if m.text && w % 64 != 0 {
                // four attention bands at 1/16 scale need W divisible by 64
                continue;
            }
            let config = small(m, FusionKind::Wafb);
            let model = TrideModel::<f32>::new(config.clone(), 1).unwrap();
            let input = ModelInput::from_sample(&s, &config).unwrap();
            let (depth, logits) = model.predict(&input).unwrap();
            assert_eq!(depth.len(), h * w, "{m} at {h}x{w}");
            assert!(depth.iter().all(|&d| d > 0.0 && d < 80.0), "{m}");
            assert_eq!(logits.is_some(), m.text, "{m}");
        }
    }
}

#[test]
fn text_model_rejects_width_without_four_bands() {
    let s = scene(32, 32, 3);
    let config = small(Modalities::IRT, FusionKind::Wafb);
    let model = TrideModel::<f32>::new(config.clone(), 1).unwrap();
    let err = model.predict(&ModelInput::from_sample(&s, &config).unwrap()).unwrap_err();
    assert!(err.to_string().contains("divisible by 4"), "{err}");
}

#[test]
fn prediction_is_deterministic() {
    let s = scene(32, 64, 4);
    let config = small(Modalities::IRT, FusionKind::Wafb);
    let model = TrideModel::<f32>::new(config.clone(), 2).unwrap();
    let input = ModelInput::from_sample(&s, &config).unwrap();
    let a = model.predict(&input).unwrap();
    let b = TrideModel::<f32>::new(config, 2).unwrap().predict(&input).unwrap();
    assert_eq!(a, b);
}

#[test]
fn text_minus_drops_point_encoder_and_enrichment() {
    let full = TrideModel::<f32>::new(small(Modalities::IRT, FusionKind::Wafb), 0).unwrap();
    let minus = TrideModel::<f32>::new(
        ModelConfig {
            text_minus: true,
            ..small(Modalities::IRT, FusionKind::Wafb)
        },
        0,
    )
    .unwrap();
    let has = |m: &TrideModel<f32>, prefix: &str| m.params.names().iter().any(|n| n.starts_with(prefix));
    assert!(has(&full, "points.") && has(&full, "reb."));
    assert!(!has(&minus, "points.") && !has(&minus, "reb."));
    assert!(minus.arch.points.is_none() && minus.arch.reb.is_none());
}

#[test]
fn missing_modality_input_is_rejected() {
    let s = scene(32, 64, 5);
    let model = TrideModel::<f32>::new(small(Modalities::IRT, FusionKind::Wafb), 0).unwrap();
    let image_only = ModelInput::from_sample(&s, &small(Modalities::I, FusionKind::Wafb)).unwrap();
    let err = model.predict(&image_only).unwrap_err();
    assert!(err.to_string().contains("radar"), "{err}");
}

#[test]
fn night_scene_depth_stays_in_range() {
    let gen = synth::GenParams {
        height: 32,
        width: 64,
        ..Default::default()
    };
    let s = synth::generate_scene_with_weather(9, &gen, tride_core::WeatherLabel::Night).unwrap();
    for fusion in [FusionKind::Concat, FusionKind::Add, FusionKind::Gated, FusionKind::Wafb] {
        let config = small(Modalities::IRT, fusion);
        let model = TrideModel::<f32>::new(config.clone(), 7).unwrap();
        let (depth, _) = model.predict(&ModelInput::from_sample(&s, &config).unwrap()).unwrap();
        assert!(depth.iter().all(|&d| d > 0.0 && d < 80.0), "{fusion}");
    }
}
