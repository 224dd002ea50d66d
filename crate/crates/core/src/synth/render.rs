use crate::geometry::DepthMap;
use crate::synth::{GenParams, SceneLayout, CAMERA_HEIGHT};

/// What a pixel shows.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Owner {
    Sky,
    Ground,
    /// Index into `SceneLayout::objects`.
    Object(usize),
}

/// Dense depth: sky at the cap, a flat ground plane below the horizon
/// (`f_y·h_cam / (v − c_y)`, capped), and objects at constant depth drawn
/// far to near.
pub fn render_depth(layout: &SceneLayout, params: &GenParams) -> (DepthMap, Vec<Owner>) {
    let (h, w) = (layout.height, layout.width);
    let k = params.intrinsics();
    let cap = params.depth_cap;
    let mut depth = DepthMap::filled(h, w, cap as f32);
    let mut owner = vec![Owner::Sky; h * w];
    for v in 0..h {
        let dv = v as f64 + 0.5 - k.cy;
        if dv <= 0.0 {
            continue;
        }
        let d = (k.fy * CAMERA_HEIGHT / dv).min(cap);
        if d >= cap {
            continue;
        }
        for u in 0..w {
            depth.data[v * w + u] = d as f32;
            owner[v * w + u] = Owner::Ground;
        }
    }
    for (i, o) in layout.objects.iter().enumerate() {
        for v in o.top..o.bottom {
            for u in o.left..o.right {
                depth.data[v * w + u] = o.depth as f32;
                owner[v * w + u] = Owner::Object(i);
            }
        }
    }
    (depth, owner)
}

const SKY: [f64; 3] = [0.55, 0.7, 0.92];
const GROUND: [f64; 3] = [0.42, 0.4, 0.38];
const HAZE: [f64; 3] = [0.78, 0.8, 0.82];

/// Albedo attenuated with distance towards a haze colour; channel-major.
pub fn render_clean_image(layout: &SceneLayout, depth: &DepthMap, owner: &[Owner]) -> Vec<f32> {
    let n = depth.h * depth.w;
    let mut image = vec![0f32; 3 * n];
    for i in 0..n {
        let rgb = match owner[i] {
            Owner::Sky => SKY,
            Owner::Ground | Owner::Object(_) => {
                let albedo = match owner[i] {
                    Owner::Object(j) => layout.objects[j].albedo,
                    _ => GROUND,
                };
                let t = (-(depth.data[i] as f64) / 60.0).exp();
                std::array::from_fn(|c| albedo[c] * t + HAZE[c] * (1.0 - t))
            }
        };
        for c in 0..3 {
            image[c * n + i] = rgb[c].clamp(0.0, 1.0) as f32;
        }
    }
    image
}
