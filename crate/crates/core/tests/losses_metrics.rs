use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tride_autodiff::{Tape, Tensor};
use tride_core::geometry::DepthMap;
use tride_core::losses::{loss_cls, loss_depth, total_loss, LossWeights};
use tride_core::metrics::{compute_metrics, csv_row, MetricsAccumulator, MetricsReport, CSV_HEADER};
use tride_core::WeatherLabel;

/// Straight-line reference: gather the valid pixels, then evaluate each
/// metric on its own from its textbook definition.
fn reference(pred: &[f32], gt: &[f32], cap: f64) -> Option<[f64; 8]> {
    let pairs: Vec<(f64, f64)> = pred
        .iter()
        .zip(gt)
        .map(|(&p, &d)| (p as f64, d as f64))
        .filter(|&(_, d)| d > 0.0 && d <= cap)
        .collect();
    if pairs.is_empty() {
        return None;
    }
    let n = pairs.len() as f64;
    let lg = |x: f64| x.max(1e-3).ln() / std::f64::consts::LN_10;
    let mae = pairs.iter().map(|(p, d)| (p - d).abs()).sum::<f64>() / n;
    let rmse = (pairs.iter().map(|(p, d)| (p - d).powi(2)).sum::<f64>() / n).sqrt();
    let absrel = pairs.iter().map(|(p, d)| (p - d).abs() / d).sum::<f64>() / n;
    let log10 = pairs.iter().map(|(p, d)| (lg(*p) - lg(*d)).abs()).sum::<f64>() / n;
    let rmselog = (pairs.iter().map(|(p, d)| (lg(*p) - lg(*d)).powi(2)).sum::<f64>() / n).sqrt();
    let delta = |k: i32| {
        pairs
            .iter()
            .filter(|(p, d)| {
                let p = p.max(1e-3);
                f64::max(p / d, d / p) < 1.25f64.powi(k)
            })
            .count() as f64
            / n
    };
    Some([mae, rmse, absrel, log10, rmselog, delta(1), delta(2), delta(3)])
}

fn values(r: &MetricsReport) -> [f64; 8] {
    [r.mae, r.rmse, r.absrel, r.log10, r.rmselog, r.d1, r.d2, r.d3]
}

fn random_pair(rng: &mut ChaCha8Rng) -> (Vec<f32>, Vec<f32>) {
    let pred = (0..64).map(|_| rng.random_range(0.5f32..90.0)).collect();
    let gt = (0..64)
        .map(|_| match rng.random_range(0..10) {
            0 => 0.0,
            1 => rng.random_range(80.5f32..100.0),
            _ => rng.random_range(0.5f32..80.0),
        })
        .collect();
    (pred, gt)
}

#[test]
fn metrics_match_brute_force_reference_on_random_maps() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for trial in 0..100 {
        let (pred, gt) = random_pair(&mut rng);
        for cap in [50.0, 70.0, 80.0] {
            let got = compute_metrics(&pred, &gt, cap).unwrap();
            let want = reference(&pred, &gt, cap).expect("random maps have valid pixels");
            for (k, (a, b)) in values(&got).iter().zip(want).enumerate() {
                assert!((a - b).abs() <= 1e-9, "trial {trial} cap {cap} metric {k}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn single_pixel_hand_case() {
    let r = compute_metrics(&[2.0], &[1.0], 80.0).unwrap();
    assert_eq!(r.n_pixels, 1);
    assert_eq!(r.mae, 1.0);
    assert_eq!(r.rmse, 1.0);
    assert_eq!(r.absrel, 1.0);
    assert_eq!(r.d1, 0.0);
    assert_eq!(r.d2, 0.0);
    assert_eq!(r.d3, 0.0);
}

#[test]
fn two_pixel_hand_case() {
    let r = compute_metrics(&[2.0, 2.0], &[1.0, 4.0], 80.0).unwrap();
    assert_eq!(r.mae, 1.5);
    assert_eq!(r.rmse, 2.5f64.sqrt());
}

#[test]
fn perfect_prediction() {
    let d = [3.0, 10.0, 55.0, 79.0];
    let r = compute_metrics(&d, &d, 80.0).unwrap();
    assert_eq!((r.mae, r.rmse, r.absrel, r.log10, r.rmselog), (0.0, 0.0, 0.0, 0.0, 0.0));
    assert_eq!((r.d1, r.d2, r.d3), (1.0, 1.0, 1.0));
}

#[test]
fn empty_valid_set_is_undefined_and_written_as_na() {
    let r = compute_metrics(&[1.0, 2.0], &[0.0, 90.0], 80.0).unwrap();
    assert_eq!(r.n_pixels, 0);
    assert!(!r.is_defined() && r.mae.is_nan());
    let row = csv_row("night", 50.0, &r);
    assert_eq!(row, "night,50,0,NA,NA,NA,NA,NA,NA,NA,NA");
    assert_eq!(CSV_HEADER.split(',').count(), row.split(',').count());
}

#[test]
fn cap_masks_ground_truth_only() {
    // the prediction is far beyond the cap but the pixel still counts
    let r = compute_metrics(&[200.0, 1.0], &[40.0, 60.0], 50.0).unwrap();
    assert_eq!(r.n_pixels, 1);
    assert_eq!(r.mae, 160.0);
}

#[test]
fn accumulator_merge_equals_pooled_pixels() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (p1, g1) = random_pair(&mut rng);
    let (p2, g2) = random_pair(&mut rng);
    let mut a = MetricsAccumulator::new();
    a.add(&p1, &g1, 80.0).unwrap();
    let mut b = MetricsAccumulator::new();
    b.add(&p2, &g2, 80.0).unwrap();
    a.merge(&b);
    let pooled = compute_metrics(&[p1, p2].concat(), &[g1, g2].concat(), 80.0).unwrap();
    for (x, y) in values(&a.report()).iter().zip(values(&pooled)) {
        assert!((x - y).abs() < 1e-12);
    }
}

#[test]
fn mismatched_lengths_and_bad_cap_are_errors() {
    assert!(compute_metrics(&[1.0], &[1.0, 2.0], 80.0).is_err());
    assert!(compute_metrics(&[1.0], &[1.0], 0.0).is_err());
}

proptest! {
    #[test]
    fn report_invariants(
        pairs in prop::collection::vec((0.01f32..100.0, 0.0f32..100.0), 1..80),
        cap in prop::sample::select(vec![50.0, 70.0, 80.0]),
    ) {
        let (pred, gt): (Vec<f32>, Vec<f32>) = pairs.into_iter().unzip();
        let r = compute_metrics(&pred, &gt, cap).unwrap();
        if r.is_defined() {
            prop_assert!(r.mae <= r.rmse + 1e-12);
            prop_assert!(r.d1 <= r.d2 && r.d2 <= r.d3 && r.d3 <= 1.0);
            prop_assert!(r.mae >= 0.0 && r.absrel >= 0.0 && r.log10 >= 0.0 && r.rmselog >= 0.0);
        }
        let n50 = compute_metrics(&pred, &gt, 50.0).unwrap().n_pixels;
        let n80 = compute_metrics(&pred, &gt, 80.0).unwrap().n_pixels;
        prop_assert!(n50 <= n80);
    }

    #[test]
    fn subset_metrics_match_their_own_pixels(
        pairs in prop::collection::vec((0.01f32..100.0, 0.1f32..80.0, any::<bool>()), 1..60),
    ) {
        let keep: Vec<(f32, f32)> = pairs.iter().filter(|t| t.2).map(|t| (t.0, t.1)).collect();
        // masking out a pixel = setting its ground truth to 0
        let pred: Vec<f32> = pairs.iter().map(|t| t.0).collect();
        let gt: Vec<f32> = pairs.iter().map(|t| if t.2 { t.1 } else { 0.0 }).collect();
        let masked = compute_metrics(&pred, &gt, 80.0).unwrap();
        let (kp, kg): (Vec<f32>, Vec<f32>) = keep.into_iter().unzip();
        let direct = compute_metrics(&kp, &kg, 80.0).unwrap();
        prop_assert_eq!(masked.n_pixels, direct.n_pixels);
        if direct.is_defined() {
            for (a, b) in values(&masked).iter().zip(values(&direct)) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}

fn depth(h: usize, w: usize, f: impl Fn(usize) -> f32) -> DepthMap {
    DepthMap::new(h, w, (0..h * w).map(f).collect()).unwrap()
}

#[test]
fn depth_loss_examples() {
    let tape = Tape::<f64>::new();
    let pred = tape.param(Tensor::full(vec![1, 2, 3], 7.0));
    let dense = depth(2, 3, |_| 5.0);
    let none = depth(2, 3, |_| 0.0);
    assert_eq!(loss_depth(pred, &dense, &none).unwrap().item(), 2.0);

    let exact = tape.param(Tensor::full(vec![1, 2, 3], 5.0));
    assert_eq!(loss_depth(exact, &dense, &dense).unwrap().item(), 0.0);

    assert!(loss_depth(pred, &none, &none).is_err());
}

#[test]
fn depth_loss_gradient_is_sign_over_mask_size() {
    let tape = Tape::<f64>::new();
    let pred = tape.param(Tensor::from_f64(vec![1, 2, 2], &[7.0, 3.0, 5.5, 9.0]).unwrap());
    let dense = depth(2, 2, |i| [5.0, 5.0, 5.0, 0.0][i]);
    let sparse = depth(2, 2, |i| [4.0, 0.0, 0.0, 0.0][i]);
    let loss = loss_depth(pred, &dense, &sparse).unwrap();
    let g = tape.backward(loss).unwrap();
    let expect = [1.0 / 3.0 + 1.0, -1.0 / 3.0, 1.0 / 3.0, 0.0];
    for (a, b) in g.wrt(pred).data().iter().zip(expect) {
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }
}

#[test]
fn classification_loss_examples() {
    let tape = Tape::<f64>::new();
    let saturated = tape.param(Tensor::from_f64(vec![3], &[10.0, -10.0, -10.0]).unwrap());
    assert!(loss_cls(saturated, WeatherLabel::Normal).unwrap().item() < 1e-8);
    let uniform = tape.param(Tensor::zeros(vec![3]));
    let l = loss_cls(uniform, WeatherLabel::Night).unwrap();
    assert!((l.item() - 3f64.ln()).abs() < 1e-12);

    let logits = tape.param(Tensor::from_f64(vec![3], &[0.3, -1.2, 2.0]).unwrap());
    let l = loss_cls(logits, WeatherLabel::Rainy).unwrap();
    let g = tape.backward(l).unwrap();
    let e: Vec<f64> = [0.3f64, -1.2, 2.0].iter().map(|v| v.exp()).collect();
    let z: f64 = e.iter().sum();
    for (k, gk) in g.wrt(logits).data().iter().enumerate() {
        let want = e[k] / z - if k == 1 { 1.0 } else { 0.0 };
        assert!((gk - want).abs() < 1e-12);
    }
}

#[test]
fn total_loss_weighting() {
    let tape = Tape::<f64>::new();
    let d = tape.constant(Tensor::scalar(2.0));
    let c = tape.constant(Tensor::scalar(0.5));
    let default = total_loss(d, Some(c), LossWeights::default()).unwrap().item();
    assert_eq!(default, 2.5);
    let no_cls = LossWeights { w_depth: 1.0, w_cls: 0.0 };
    assert_eq!(total_loss(d, Some(c), no_cls).unwrap().item(), 2.0);
    let double = LossWeights { w_depth: 2.0, w_cls: 1.0 };
    assert_eq!(total_loss(d, Some(c), double).unwrap().item(), 4.5);
    assert!(total_loss(d, None, LossWeights { w_depth: -1.0, w_cls: 1.0 }).is_err());
}

#[test]
fn loss_weights_reject_unknown_keys() {
    let w: LossWeights = serde_json::from_str(r#"{"w_cls": 0.5}"#).unwrap();
    assert_eq!(w, LossWeights { w_depth: 1.0, w_cls: 0.5 });
    assert!(serde_json::from_str::<LossWeights>(r#"{"w_dpeth": 1}"#).is_err());
}
