use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::geometry::{DepthMap, Intrinsics, RadarPoint, RadarPointCloud};
use crate::synth::{GenParams, ObjectKind, Owner, SceneLayout};

fn velocity_range(kind: Option<ObjectKind>) -> (f64, f64) {
    match kind {
        Some(ObjectKind::Car) => (-15.0, 15.0),
        Some(ObjectKind::Truck | ObjectKind::Bus) => (-10.0, 10.0),
        Some(ObjectKind::Person) => (-2.0, 2.0),
        Some(ObjectKind::Sign) | None => (-0.2, 0.2),
    }
}

fn rcs_range(kind: Option<ObjectKind>) -> (f64, f64) {
    match kind {
        Some(ObjectKind::Car) => (5.0, 15.0),
        Some(ObjectKind::Truck | ObjectKind::Bus) => (15.0, 30.0),
        Some(ObjectKind::Person) => (-5.0, 5.0),
        Some(ObjectKind::Sign) => (0.0, 10.0),
        None => (-10.0, 0.0),
    }
}

/// `M` returns: 70% on object pixels, 30% on ground pixels (falling back to
/// whichever exists), back-projected with range noise σ_r; a clutter
/// fraction is replaced by uniform-random depths at random pixels. Never
/// looks at the weather.
pub fn sample_radar(
    depth: &DepthMap,
    owner: &[Owner],
    layout: &SceneLayout,
    params: &GenParams,
    rng: &mut impl Rng,
    k: &Intrinsics,
) -> RadarPointCloud {
    let (h, w) = (depth.h, depth.w);
    let object_px: Vec<usize> = (0..h * w).filter(|&i| matches!(owner[i], Owner::Object(_))).collect();
    let ground_px: Vec<usize> = (0..h * w).filter(|&i| owner[i] == Owner::Ground).collect();
    let m = params.radar_points;
    let n_clutter = (m as f64 * params.clutter_fraction).round() as usize;
    let noise = Normal::new(0.0, params.radar_sigma).expect("valid sigma");
    let cap = params.depth_cap;
    let mut cloud = Vec::with_capacity(m);
    for j in 0..m {
        if j >= m - n_clutter || (object_px.is_empty() && ground_px.is_empty()) {
            let (u, v) = (rng.random_range(0..w), rng.random_range(0..h));
            let z = rng.random_range(1.0..cap);
            let v_r = rng.random_range(-20.0..20.0);
            let rcs = rng.random_range(-10.0..40.0);
            cloud.push(back_project(u, v, z, v_r, rcs, k));
            continue;
        }
        let on_object = !object_px.is_empty() && (ground_px.is_empty() || rng.random::<f64>() < 0.7);
        let pool = if on_object { &object_px } else { &ground_px };
        let i = pool[rng.random_range(0..pool.len())];
        let kind = match owner[i] {
            Owner::Object(o) => Some(layout.objects[o].kind),
            _ => None,
        };
        let z = (depth.data[i] as f64 + noise.sample(rng)).clamp(0.5, cap);
        let (vlo, vhi) = velocity_range(kind);
        let (rlo, rhi) = rcs_range(kind);
        let v_r = rng.random_range(vlo..=vhi);
        let rcs = rng.random_range(rlo..=rhi);
        cloud.push(back_project(i % w, i / w, z, v_r, rcs, k));
    }
    cloud
}

fn back_project(u: usize, v: usize, z: f64, v_r: f64, rcs: f64, k: &Intrinsics) -> RadarPoint {
    let z32 = z as f32;
    let z = z32 as f64;
    RadarPoint {
        x: ((u as f64 - k.cx) * z / k.fx) as f32,
        y: ((v as f64 - k.cy) * z / k.fy) as f32,
        z: z32,
        v_r: v_r as f32,
        rcs: rcs as f32,
    }
}
