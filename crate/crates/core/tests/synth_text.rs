use std::collections::HashSet;

use proptest::prelude::*;
use tride_core::geometry::{merge_sparse_into_dense, project_points, Intrinsics, Region};
use tride_core::synth::{
    self, generate_layout, generate_scene, generate_scene_with_weather, load_scene, render_clean_image, render_depth,
    render_text, round_distance, save_scene, scene_from_bytes, scene_to_bytes, GenParams, ObjectKind, SceneLayout,
    SceneObject,
};
use tride_core::text::{parse_description, render_prompt, ParagraphOrder, SentenceFeatures};
use tride_core::WeatherLabel;

fn params() -> GenParams {
    GenParams::default()
}

#[test]
fn same_seed_gives_identical_scene() {
    for seed in [0, 1, 77] {
        let a = generate_scene(seed, &params()).unwrap();
        let b = generate_scene(seed, &params()).unwrap();
        assert_eq!(scene_to_bytes(&a), scene_to_bytes(&b));
    }
    assert_ne!(
        scene_to_bytes(&generate_scene(1, &params()).unwrap()),
        scene_to_bytes(&generate_scene(2, &params()).unwrap())
    );
}

#[test]
fn normal_weather_image_is_the_clean_render() {
    let p = params();
    let s = generate_scene_with_weather(5, &p, WeatherLabel::Normal).unwrap();
    let layout = generate_layout(5, &p, WeatherLabel::Normal);
    let (depth, owner) = render_depth(&layout, &p);
    assert_eq!(s.image, render_clean_image(&layout, &depth, &owner));
}

#[test]
fn weather_changes_only_image_and_text() {
    let p = params();
    for seed in 0..10 {
        let normal = generate_scene_with_weather(seed, &p, WeatherLabel::Normal).unwrap();
        for w in [WeatherLabel::Rainy, WeatherLabel::Night] {
            let other = generate_scene_with_weather(seed, &p, w).unwrap();
            let bytes = |s: &synth::SceneSample| s.radar.iter().flat_map(|r| r.to_array()).flat_map(f32::to_le_bytes).collect::<Vec<u8>>();
            assert_eq!(bytes(&normal), bytes(&other), "seed {seed} {w}");
            assert_eq!(normal.depth, other.depth);
            assert_eq!(normal.sparse, other.sparse);
            assert_ne!(normal.image, other.image);
        }
    }
}

#[test]
fn night_dims_to_a_quarter() {
    let p = params();
    for seed in 0..5 {
        let clean = generate_scene_with_weather(seed, &p, WeatherLabel::Normal).unwrap();
        let night = generate_scene_with_weather(seed, &p, WeatherLabel::Night).unwrap();
        let mean = |x: &[f32]| x.iter().map(|&v| v as f64).sum::<f64>() / x.len() as f64;
        let (c, n) = (mean(&clean.image), mean(&night.image));
        assert!((n - 0.25 * c).abs() < 0.02, "seed {seed}: night {n} vs clean {c}");
    }
}

#[test]
fn corrupted_images_stay_in_unit_range() {
    let p = params();
    for w in WeatherLabel::ALL {
        let s = generate_scene_with_weather(11, &p, w).unwrap();
        assert!(s.image.iter().all(|v| (0.0..=1.0).contains(v)), "{w}");
    }
}

#[test]
fn noiseless_radar_projects_back_onto_ground_truth() {
    let p = GenParams {
        radar_sigma: 0.0,
        clutter_fraction: 0.0,
        radar_points: 200,
        ..params()
    };
    for seed in 0..10 {
        let s = generate_scene(seed, &p).unwrap();
        assert_eq!(s.radar.len(), 200);
        let proj = project_points(&s.radar, &Intrinsics::for_image(p.height, p.width), p.height, p.width, p.depth_cap)
            .unwrap();
        assert_eq!(proj.dropped, 0, "seed {seed}");
        for (u, v) in proj.surviving_pixels() {
            let i = v * p.width + u;
            assert_eq!(proj.image.channel(0)[i], s.depth.data[i], "seed {seed} pixel ({u}, {v})");
        }
    }
}

#[test]
fn radar_point_count_and_channel_ranges() {
    let p = params();
    for seed in 0..20 {
        let s = generate_scene(seed, &p).unwrap();
        assert_eq!(s.radar.len(), p.radar_points);
        for r in &s.radar {
            assert!((-20.0..=20.0).contains(&r.v_r) && (-10.0..=40.0).contains(&r.rcs));
            assert!(r.z > 0.0 && r.z as f64 <= p.depth_cap);
        }
    }
}

#[test]
fn depth_supports_are_nested() {
    let p = params();
    for seed in 0..20 {
        let s = generate_scene(seed, &p).unwrap();
        assert!(s.depth.data.iter().all(|&d| d > 0.0 && d as f64 <= p.depth_cap));
        let sparse: Vec<usize> = (0..s.sparse.data.len()).filter(|&i| s.sparse.data[i] > 0.0).collect();
        assert!(!sparse.is_empty() && sparse.len() < s.depth.data.len());
        for &i in &sparse {
            assert_eq!(s.sparse.data[i], s.depth.data[i]);
            assert_eq!((i / p.width) % p.sparse_row_step, p.sparse_row_step / 2);
        }
        assert_eq!(merge_sparse_into_dense(&s.depth, &s.sparse).unwrap(), s.depth);
    }
}

#[test]
fn layouts_respect_their_invariants() {
    let p = params();
    for seed in 0..200 {
        let l = generate_layout(seed, &p, WeatherLabel::Normal);
        assert!((1..=8).contains(&l.objects.len()));
        for o in &l.objects {
            assert!(o.left < o.right && o.right <= p.width && o.top < o.bottom && o.bottom <= p.height);
            assert!((4.0..=75.0).contains(&o.depth));
        }
        assert!(l.objects.windows(2).all(|w| w[0].depth >= w[1].depth), "far to near");
    }
}

#[test]
fn weather_mix_is_respected() {
    let only_normal = GenParams {
        weather_mix: [1.0, 0.0, 0.0],
        ..params()
    };
    assert!((0..50).all(|s| generate_scene(s, &only_normal).unwrap().weather == WeatherLabel::Normal));
    let seen: HashSet<WeatherLabel> = (0..100).map(|s| generate_scene(s, &params()).unwrap().weather).collect();
    assert_eq!(seen.len(), 3);
}

#[test]
fn invalid_params_are_rejected() {
    for bad in [
        GenParams { height: 48, ..params() },
        GenParams { clutter_fraction: 1.5, ..params() },
        GenParams { weather_mix: [0.0; 3], ..params() },
    ] {
        assert!(generate_scene(0, &bad).is_err());
    }
    assert!(serde_json::from_str::<GenParams>(r#"{"heigth": 64}"#).is_err());
}

#[test]
fn every_generated_description_parses() {
    let p = params();
    for seed in 0..300 {
        let s = generate_scene(seed, &p).unwrap();
        let d = parse_description(&s.text, ParagraphOrder::LeftToRight)
            .unwrap_or_else(|e| panic!("seed {seed}: {e}\n{}", s.text));
        assert!(d.general[0].contains(s.weather.describe()), "seed {seed}");
        assert_eq!(s.text.lines().filter(|l| l.starts_with("- ")).count(), 5);
        assert!(d.regional.iter().all(|r| !r.is_empty()));
        let total: usize = d.regional.iter().map(|r| r.iter().filter(|s| s.starts_with("A ")).count()).sum();
        assert_eq!(total, generate_layout(seed, &p, s.weather).objects.len());
    }
}

fn single_object(depth: f64, center_u: f64) -> SceneLayout {
    SceneLayout {
        height: 64,
        width: 128,
        objects: vec![SceneObject {
            kind: ObjectKind::Car,
            left: 10,
            right: 20,
            top: 20,
            bottom: 30,
            depth,
            center_u,
            albedo: [0.5; 3],
        }],
        weather: WeatherLabel::Rainy,
    }
}

#[test]
fn described_distance_rounds_to_five_metres() {
    assert_eq!(round_distance(23.0, 5.0), 25.0);
    assert_eq!(round_distance(22.4, 5.0), 20.0);
    assert_eq!(round_distance(1.0, 5.0), 5.0);
    let p = GenParams {
        text_noise: 0.0,
        ..params()
    };
    let mut rng = synth::stream_rng(0, synth::Stream::Text);
    let text = render_text(&single_object(23.0, 100.0), WeatherLabel::Rainy, &p, &mut rng);
    let d = parse_description(&text, ParagraphOrder::LeftToRight).unwrap();
    assert_eq!(d.region(Region::R), ["A car is about 25 meters away"]);
    assert_eq!(d.region(Region::L), ["There are no notable objects here"]);
    assert!(d.general[0].contains("rainy"));
}

#[test]
fn scene_round_trips_bitwise_through_a_file() {
    let dir = tempfile::tempdir().unwrap();
    for seed in 0..5 {
        let s = generate_scene(seed, &params()).unwrap();
        let path = dir.path().join(format!("{seed}.scn"));
        save_scene(&s, &path).unwrap();
        let back = load_scene(&path).unwrap();
        assert_eq!(scene_to_bytes(&back), scene_to_bytes(&s));
        assert_eq!(back, s);
    }
}

#[test]
fn scene_format_errors() {
    let bytes = scene_to_bytes(&generate_scene(3, &params()).unwrap());
    for cut in [0, 7, 12, 100, bytes.len() - 1] {
        let err = scene_from_bytes(&bytes[..cut]).unwrap_err();
        assert!(err.to_string().contains("offset"), "cut {cut}: {err}");
    }
    let mut v2 = bytes.clone();
    v2[8..12].copy_from_slice(&2u32.to_le_bytes());
    assert!(scene_from_bytes(&v2).unwrap_err().to_string().contains("unsupported version 2"));
    let mut magic = bytes.clone();
    magic[0] = b'X';
    assert!(scene_from_bytes(&magic).unwrap_err().to_string().contains("magic"));
    let mut long = bytes;
    long.push(0);
    assert!(scene_from_bytes(&long).is_err());
}

#[test]
fn sentence_features_round_trip_through_a_file() {
    let dir = tempfile::tempdir().unwrap();
    for seed in 0..5 {
        let s = generate_scene(seed, &params()).unwrap();
        let d = parse_description(&s.text, ParagraphOrder::LeftToRight).unwrap();
        let f = SentenceFeatures::from_description(&d, 64);
        let path = dir.path().join("f.txf");
        f.save(&path).unwrap();
        let back = SentenceFeatures::load(&path).unwrap();
        assert_eq!(back.to_bytes(), f.to_bytes());
    }
}

#[test]
fn appendix_style_transcript_parses() {
    let text = include_str!("data/transcript_overcast.txt");
    let d = parse_description(text, ParagraphOrder::LeftToRight).unwrap();
    assert_eq!(d.paragraphs().count(), 5);
    assert!(d.general.iter().any(|s| s.contains("overcast")));
    assert!(d.region(Region::L)[0].contains("left part"));
    assert!(d.region(Region::R)[0].contains("right part"));
    let rtl = parse_description(text, ParagraphOrder::RightToLeft).unwrap();
    assert_eq!(rtl.region(Region::L), d.region(Region::R));
}

#[test]
fn prompt_mentions_five_parts_and_range() {
    let p = render_prompt();
    assert!(p.contains("five parts") && p.contains("maximum 80 meters"));
}

#[test]
fn flipping_a_scene_mirrors_everything() {
    let p = params();
    for seed in 0..10 {
        let s = generate_scene(seed, &p).unwrap();
        let f = s.flip_horizontal(ParagraphOrder::LeftToRight).unwrap();
        let k = Intrinsics::for_image(p.height, p.width);
        let a = project_points(&s.radar, &k, p.height, p.width, p.depth_cap).unwrap();
        let b = project_points(&f.radar, &k, p.height, p.width, p.depth_cap).unwrap();
        for (pa, pb) in a.pixels.iter().zip(&b.pixels) {
            if let (Some((ua, va)), Some((ub, vb))) = (pa, pb) {
                assert_eq!((*ub, *vb), (p.width - 1 - ua, *va));
            }
        }
        let da = parse_description(&s.text, ParagraphOrder::LeftToRight).unwrap();
        let db = parse_description(&f.text, ParagraphOrder::LeftToRight).unwrap();
        assert_eq!(db, da.mirrored());
        assert_eq!(f.depth.flip_horizontal(), s.depth);
        assert_eq!(f.flip_horizontal(ParagraphOrder::LeftToRight).unwrap().image, s.image);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn any_seed_generates_a_valid_scene(seed in any::<u64>()) {
        let p = GenParams { height: 32, width: 64, ..params() };
        let s = generate_scene(seed, &p).unwrap();
        prop_assert_eq!(s.image.len(), 3 * 32 * 64);
        prop_assert!(parse_description(&s.text, ParagraphOrder::LeftToRight).is_ok());
        prop_assert_eq!(scene_from_bytes(&scene_to_bytes(&s)).unwrap(), s);
    }
}
