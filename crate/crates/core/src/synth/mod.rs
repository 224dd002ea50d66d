//! Procedural multimodal scenes: a ground plane with upright box objects,
//! rendered to an image, dense and sparse depth, a radar point cloud, and a
//! five-paragraph description.
//!
//! Every random decision draws from one of several independent streams
//! derived from the scene seed, so e.g. the radar cloud does not change
//! when only the weather changes.

mod io;
mod radar;
mod render;
mod text;
mod weather;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{DepthMap, Intrinsics, RadarPointCloud};
use crate::text::WeatherLabel;

pub use io::{load_scene, save_scene, scene_from_bytes, scene_to_bytes, SCENE_MAGIC, SCENE_VERSION};
pub use radar::sample_radar;
pub use render::{render_clean_image, render_depth, Owner};
pub use text::{render_text, round_distance};
pub use weather::corrupt_weather;

/// Mounting height of the camera above the ground, metres.
pub const CAMERA_HEIGHT: f64 = 1.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenParams {
    pub height: usize,
    pub width: usize,
    /// Radar points per scene.
    pub radar_points: usize,
    /// Radar range noise σ, metres.
    pub radar_sigma: f64,
    pub clutter_fraction: f64,
    /// Described distances are rounded to this step (metres).
    pub text_round: f64,
    /// Relative noise on described distances, uniform in ±this.
    pub text_noise: f64,
    pub depth_cap: f64,
    /// Probabilities of normal / rainy / night scenes.
    pub weather_mix: [f64; 3],
    /// Fraction of columns kept on each sparse ground-truth row.
    pub sparse_keep: f64,
    /// Every n-th row carries sparse ground truth.
    pub sparse_row_step: usize,
}

impl Default for GenParams {
    fn default() -> Self {
        GenParams {
            height: 64,
            width: 128,
            radar_points: 24,
            radar_sigma: 0.3,
            clutter_fraction: 0.1,
            text_round: 5.0,
            text_noise: 0.2,
            depth_cap: 80.0,
            weather_mix: [0.7, 0.15, 0.15],
            sparse_keep: 0.3,
            sparse_row_step: 4,
        }
    }
}

impl GenParams {
    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 || self.height % 32 != 0 || self.width % 32 != 0 {
            return Err(Error::contract(format!(
                "image size {}×{} must be positive multiples of 32",
                self.height, self.width
            )));
        }
        for (name, v) in [
            ("clutter_fraction", self.clutter_fraction),
            ("sparse_keep", self.sparse_keep),
            ("text_noise", self.text_noise),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::contract(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        if self.weather_mix.iter().any(|&p| p < 0.0 || !p.is_finite()) || self.weather_mix.iter().sum::<f64>() <= 0.0 {
            return Err(Error::contract("weather_mix must be non-negative with a positive sum"));
        }
        if !(self.radar_sigma >= 0.0) || !(self.depth_cap > 4.0) || !(self.text_round > 0.0) || self.sparse_row_step == 0 {
            return Err(Error::contract("radar_sigma ≥ 0, depth_cap > 4, text_round > 0, sparse_row_step ≥ 1 required"));
        }
        Ok(())
    }

    pub fn intrinsics(&self) -> Intrinsics {
        Intrinsics::for_image(self.height, self.width)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectKind {
    Car,
    Truck,
    Bus,
    Person,
    Sign,
}

impl ObjectKind {
    pub const ALL: [ObjectKind; 5] = [
        ObjectKind::Car,
        ObjectKind::Truck,
        ObjectKind::Bus,
        ObjectKind::Person,
        ObjectKind::Sign,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ObjectKind::Car => "car",
            ObjectKind::Truck => "truck",
            ObjectKind::Bus => "bus",
            ObjectKind::Person => "person",
            ObjectKind::Sign => "sign",
        }
    }

    /// Physical (width, height) in metres.
    pub fn size(self) -> (f64, f64) {
        match self {
            ObjectKind::Car => (1.8, 1.5),
            ObjectKind::Truck => (2.5, 3.5),
            ObjectKind::Bus => (2.6, 3.2),
            ObjectKind::Person => (0.6, 1.75),
            ObjectKind::Sign => (0.8, 2.4),
        }
    }

    fn albedo(self) -> [f64; 3] {
        match self {
            ObjectKind::Car => [0.75, 0.2, 0.2],
            ObjectKind::Truck => [0.85, 0.8, 0.3],
            ObjectKind::Bus => [0.25, 0.45, 0.85],
            ObjectKind::Person => [0.9, 0.6, 0.45],
            ObjectKind::Sign => [0.95, 0.95, 0.95],
        }
    }
}

/// Upright object facing the camera. The rectangle is in pixels,
/// half-open: columns `left..right`, rows `top..bottom`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub kind: ObjectKind,
    pub left: usize,
    pub right: usize,
    pub top: usize,
    pub bottom: usize,
    /// Distance along the optical axis, metres.
    pub depth: f64,
    /// Unclipped horizontal centre, pixels.
    pub center_u: f64,
    pub albedo: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneLayout {
    pub height: usize,
    pub width: usize,
    /// Far to near, i.e. in drawing order.
    pub objects: Vec<SceneObject>,
    pub weather: WeatherLabel,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneSample {
    pub height: usize,
    pub width: usize,
    /// `[3 × H × W]` channel-major, values in [0, 1].
    pub image: Vec<f32>,
    pub radar: RadarPointCloud,
    pub depth: DepthMap,
    pub sparse: DepthMap,
    pub weather: WeatherLabel,
    pub text: String,
}

/// Independent random streams of one scene.
#[derive(Clone, Copy, Debug)]
pub enum Stream {
    Layout,
    Weather,
    Corruption,
    Radar,
    Text,
    Sparse,
}

pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64 + 1);
    rng
}

/// Draws a label from the (unnormalised) mix.
pub fn draw_weather(mix: [f64; 3], rng: &mut impl Rng) -> WeatherLabel {
    let total: f64 = mix.iter().sum();
    let mut x = rng.random::<f64>() * total;
    for (w, &p) in WeatherLabel::ALL.iter().zip(&mix) {
        if x < p {
            return *w;
        }
        x -= p;
    }
    // only reachable through rounding; take the last class with mass
    *WeatherLabel::ALL.iter().zip(&mix).rev().find(|(_, &p)| p > 0.0).unwrap().0
}

/// Samples 1–8 objects standing on the ground plane.
pub fn generate_layout(seed: u64, params: &GenParams, weather: WeatherLabel) -> SceneLayout {
    let mut rng = stream_rng(seed, Stream::Layout);
    let k = params.intrinsics();
    let (h, w) = (params.height as f64, params.width as f64);
    let n = rng.random_range(1..=8usize);
    let mut objects = Vec::with_capacity(n);
    while objects.len() < n {
        let kind = ObjectKind::ALL[rng.random_range(0..ObjectKind::ALL.len())];
        let depth = rng.random_range(4.0..75.0f64).min(params.depth_cap - 1.0);
        let lateral = rng.random_range(-10.0..10.0f64);
        let jitter: [f64; 3] = std::array::from_fn(|_| rng.random_range(-0.08..0.08));
        let (size_w, size_h) = kind.size();
        let center_u = k.cx + k.fx * lateral / depth;
        let half = 0.5 * k.fx * size_w / depth;
        let bottom_v = k.cy + k.fy * CAMERA_HEIGHT / depth;
        let top_v = bottom_v - k.fy * size_h / depth;
        let left = (center_u - half).round().clamp(0.0, w) as usize;
        let right = (center_u + half).round().clamp(0.0, w) as usize;
        let top = top_v.round().clamp(0.0, h) as usize;
        let bottom = bottom_v.round().clamp(0.0, h) as usize;
        if right <= left || bottom <= top || !(0.0..w).contains(&center_u) {
            continue;
        }
        let albedo = std::array::from_fn(|c| (kind.albedo()[c] + jitter[c]).clamp(0.0, 1.0));
        objects.push(SceneObject {
            kind,
            left,
            right,
            top,
            bottom,
            depth,
            center_u,
            albedo,
        });
    }
    objects.sort_by(|a, b| b.depth.total_cmp(&a.depth));
    SceneLayout {
        height: params.height,
        width: params.width,
        objects,
        weather,
    }
}

/// Deterministic scene for `seed`; the weather is drawn from the mix.
pub fn generate_scene(seed: u64, params: &GenParams) -> Result<SceneSample> {
    params.validate()?;
    let weather = draw_weather(params.weather_mix, &mut stream_rng(seed, Stream::Weather));
    generate_scene_with_weather(seed, params, weather)
}

/// Same as [`generate_scene`] with the weather forced. Layout, depth and
/// radar are identical across weathers for one seed.
pub fn generate_scene_with_weather(seed: u64, params: &GenParams, weather: WeatherLabel) -> Result<SceneSample> {
    params.validate()?;
    let k = params.intrinsics();
    let layout = generate_layout(seed, params, weather);
    let (depth, owner) = render_depth(&layout, params);
    let clean = render_clean_image(&layout, &depth, &owner);
    let image = corrupt_weather(&clean, params.height, params.width, weather, &mut stream_rng(seed, Stream::Corruption));
    let radar = sample_radar(&depth, &owner, &layout, params, &mut stream_rng(seed, Stream::Radar), &k);
    let sparse = sparse_ground_truth(&depth, &owner, params, &mut stream_rng(seed, Stream::Sparse));
    let text = render_text(&layout, weather, params, &mut stream_rng(seed, Stream::Text));
    Ok(SceneSample {
        height: params.height,
        width: params.width,
        image,
        radar,
        depth,
        sparse,
        weather,
        text,
    })
}

/// Single-scan style supervision: every `sparse_row_step`-th row, a random
/// subset of columns, never on the sky.
pub fn sparse_ground_truth(depth: &DepthMap, owner: &[Owner], params: &GenParams, rng: &mut impl Rng) -> DepthMap {
    let mut out = DepthMap::filled(depth.h, depth.w, 0.0);
    let offset = params.sparse_row_step / 2;
    for v in (offset..depth.h).step_by(params.sparse_row_step) {
        for u in 0..depth.w {
            let keep = rng.random::<f64>() < params.sparse_keep;
            let i = v * depth.w + u;
            if keep && owner[i] != Owner::Sky {
                out.data[i] = depth.data[i];
            }
        }
    }
    out
}

impl SceneSample {
    /// Mirror image: image, depths and radar are flipped left–right and the
    /// regional paragraphs swap (L↔R, ML↔MR).
    pub fn flip_horizontal(&self, order: crate::text::ParagraphOrder) -> Result<SceneSample> {
        let (h, w) = (self.height, self.width);
        let mut image = Vec::with_capacity(self.image.len());
        for row in self.image.chunks(w) {
            image.extend(row.iter().rev());
        }
        debug_assert_eq!(image.len(), 3 * h * w);
        let k = Intrinsics::for_image(h, w);
        // u ↦ (W−1) − u on the image plane
        let radar = self
            .radar
            .iter()
            .map(|p| {
                let z = p.z as f64;
                let x = ((w as f64 - 1.0 - 2.0 * k.cx) * z / k.fx - p.x as f64) as f32;
                crate::geometry::RadarPoint { x, ..*p }
            })
            .collect();
        let desc = crate::text::parse_description(&self.text, order)?;
        Ok(SceneSample {
            height: h,
            width: w,
            image,
            radar,
            depth: self.depth.flip_horizontal(),
            sparse: self.sparse.flip_horizontal(),
            weather: self.weather,
            text: desc.mirrored().to_text_ordered(order),
        })
    }
}
