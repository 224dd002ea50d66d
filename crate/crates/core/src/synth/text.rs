use rand::Rng;

use crate::geometry::Region;
use crate::synth::{GenParams, SceneLayout};
use crate::text::{SceneDescription, WeatherLabel};

const FILLERS: [&str; 4] = [
    "The road stretches ahead toward the horizon",
    "Buildings and trees line both sides of the street",
    "Lane markings are visible on the asphalt",
    "The traffic appears to be moving steadily",
];

/// Nearest multiple of `step`, at least `step`.
pub fn round_distance(d: f64, step: f64) -> f64 {
    ((d / step).round() * step).max(step)
}

/// Five-paragraph description in the dash grammar, regional paragraphs
/// left to right.
pub fn render_text(layout: &SceneLayout, weather: WeatherLabel, params: &GenParams, rng: &mut impl Rng) -> String {
    let general = vec![
        format!("The image depicts a street scene in {} conditions", weather.describe()),
        FILLERS[rng.random_range(0..FILLERS.len())].to_string(),
    ];
    let mut banded: [Vec<(f64, String)>; 4] = Default::default();
    // nearest objects first within a band
    let mut objs: Vec<_> = layout.objects.iter().collect();
    objs.sort_by(|a, b| a.depth.total_cmp(&b.depth));
    for o in objs {
        let noise = if params.text_noise > 0.0 {
            rng.random_range(-params.text_noise..=params.text_noise)
        } else {
            0.0
        };
        let d = round_distance(o.depth * (1.0 + noise), params.text_round).min(params.depth_cap);
        let u = (o.center_u.floor().max(0.0) as usize).min(layout.width - 1);
        let band = Region::of_column(u, layout.width).index();
        banded[band].push((o.depth, format!("A {} is about {} meters away", o.kind.name(), d)));
    }
    let regional = banded.map(|b| {
        if b.is_empty() {
            vec!["There are no notable objects here".to_string()]
        } else {
            b.into_iter().map(|(_, s)| s).collect()
        }
    });
    SceneDescription { general, regional }.to_text()
}
