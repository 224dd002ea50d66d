use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::text::WeatherLabel;

/// Rain: 3×3 box blur plus additive vertical streaks (one N(0, 0.08)
/// offset per column). Night: ×0.25 plus per-pixel N(0, 0.05). Both clamp
/// to [0, 1]; normal weather returns the image unchanged.
pub fn corrupt_weather(image: &[f32], h: usize, w: usize, weather: WeatherLabel, rng: &mut impl Rng) -> Vec<f32> {
    let n = h * w;
    match weather {
        WeatherLabel::Normal => image.to_vec(),
        WeatherLabel::Rainy => {
            let streak = Normal::new(0.0, 0.08).expect("valid sigma");
            let offsets: Vec<f64> = (0..w).map(|_| streak.sample(rng)).collect();
            let mut out = vec![0f32; image.len()];
            for c in 0..3 {
                let plane = &image[c * n..(c + 1) * n];
                for v in 0..h {
                    for u in 0..w {
                        let mut acc = 0.0f64;
                        let mut cnt = 0.0;
                        for dv in v.saturating_sub(1)..(v + 2).min(h) {
                            for du in u.saturating_sub(1)..(u + 2).min(w) {
                                acc += plane[dv * w + du] as f64;
                                cnt += 1.0;
                            }
                        }
                        out[c * n + v * w + u] = (acc / cnt + offsets[u]).clamp(0.0, 1.0) as f32;
                    }
                }
            }
            out
        }
        WeatherLabel::Night => {
            let noise = Normal::new(0.0, 0.05).expect("valid sigma");
            image
                .iter()
                .map(|&x| (0.25 * x as f64 + noise.sample(rng)).clamp(0.0, 1.0) as f32)
                .collect()
        }
    }
}
