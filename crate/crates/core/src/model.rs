//! The full network: encoders, text branch, decoder, wired per config.

use tride_autodiff::{Real, Tape, Tensor, Var};

use crate::config::ModelConfig;
use crate::decoder::{Decoder, DecoderInputs};
use crate::encoders::{PointEncoder, PyramidEncoder};
use crate::error::{Error, Result};
use crate::geometry::{partition_regions, project_points, Intrinsics, RegionAssignment};
use crate::nn::{Bound, ParamStore};
use crate::synth::SceneSample;
use crate::text::{
    parse_description, weather_feature, ParagraphEncoder, RadarEnrichment, SentenceFeatures, TextFeatures,
    WeatherClassifier,
};

/// Normalisers for radar velocity and RCS channels.
pub const VELOCITY_SCALE: f64 = 20.0;
pub const RCS_SCALE: f64 = 40.0;

/// Radar inputs after projection and normalisation.
#[derive(Clone, Debug)]
pub struct RadarInput<T> {
    /// `[3 × H × W]`: depth/cap, v_r/20, rcs/40.
    pub image: Tensor<T>,
    /// `[N × 5]` surviving points: x, y, z divided by the cap, v_r/20, rcs/40.
    pub points: Tensor<T>,
    pub regions: RegionAssignment,
}

#[derive(Clone, Debug)]
pub struct ModelInput<T> {
    /// `[3 × H × W]` in [0, 1].
    pub image: Tensor<T>,
    pub radar: Option<RadarInput<T>>,
    pub sentences: Option<SentenceFeatures>,
}

impl<T: Real> ModelInput<T> {
    /// Builds exactly the inputs `config` consumes from a scene.
    pub fn from_sample(sample: &SceneSample, config: &ModelConfig) -> Result<Self> {
        let (h, w) = (sample.height, sample.width);
        let image = Tensor::new(vec![3, h, w], sample.image.iter().map(|&x| T::lit(x as f64)).collect())?;
        let radar = if config.modalities.radar {
            let k = Intrinsics::for_image(h, w);
            let cap = config.depth_cap;
            let proj = project_points(&sample.radar, &k, h, w, cap)?;
            let scales = [cap, VELOCITY_SCALE, RCS_SCALE];
            let n = h * w;
            let img: Vec<T> = proj
                .image
                .data
                .iter()
                .enumerate()
                .map(|(i, &x)| T::lit(x as f64 / scales[i / n]))
                .collect();
            let surviving = proj.surviving();
            let mut rows = Vec::with_capacity(surviving.len() * 5);
            for &i in &surviving {
                let p = sample.radar[i];
                let s = [cap, cap, cap, VELOCITY_SCALE, RCS_SCALE];
                rows.extend(p.to_array().iter().zip(s).map(|(&v, s)| T::lit(v as f64 / s)));
            }
            Some(RadarInput {
                image: Tensor::new(vec![3, h, w], img)?,
                points: Tensor::new(vec![surviving.len(), 5], rows)?,
                regions: partition_regions(&proj.surviving_pixels(), w),
            })
        } else {
            None
        };
        let sentences = if config.modalities.text {
            let desc = parse_description(&sample.text, config.paragraph_order)?;
            Some(SentenceFeatures::from_description(&desc, config.sentence_dim))
        } else {
            None
        };
        Ok(ModelInput { image, radar, sentences })
    }

    pub fn height(&self) -> usize {
        self.image.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.image.shape()[2]
    }
}

/// Layer structure (parameter handles only).
#[derive(Clone, Debug)]
pub struct Architecture {
    pub image: PyramidEncoder,
    pub radar: Option<PyramidEncoder>,
    pub points: Option<PointEncoder>,
    pub paragraphs: Option<ParagraphEncoder>,
    pub reb: Option<RadarEnrichment>,
    pub classifier: Option<WeatherClassifier>,
    pub decoder: Decoder,
}

impl Architecture {
    pub fn build<T: Real>(config: &ModelConfig, store: &mut ParamStore<T>) -> Self {
        let widths = std::array::from_fn(|i| config.level_channels(i + 1));
        let m = config.modalities;
        let image = PyramidEncoder::new(store, "image", 3, widths, 2);
        let radar = m.radar.then(|| PyramidEncoder::new(store, "radar", 3, widths, 1));
        let points = config
            .uses_point_branch()
            .then(|| PointEncoder::new(store, config.point_hidden, config.point_dim));
        let paragraphs = m
            .text
            .then(|| ParagraphEncoder::new(store, config.sentence_dim, config.text_dim, config.shared_lstm));
        let reb = config
            .uses_point_branch()
            .then(|| RadarEnrichment::new(store, config.point_dim, config.text_dim));
        let classifier = m.text.then(|| WeatherClassifier::new(store, config.text_dim));
        let decoder = Decoder::new(store, config);
        Architecture {
            image,
            radar,
            points,
            paragraphs,
            reb,
            classifier,
            decoder,
        }
    }
}

pub struct ModelOutput<'t, T: Real> {
    /// `[1 × H × W]`, metres.
    pub depth: Var<'t, T>,
    pub weather_logits: Option<Var<'t, T>>,
    pub text: Option<TextFeatures<'t, T>>,
    pub t_wea: Option<Var<'t, T>>,
    pub decoder_features: Vec<Var<'t, T>>,
}

#[derive(Clone, Debug)]
pub struct TrideModel<T> {
    pub config: ModelConfig,
    pub arch: Architecture,
    pub params: ParamStore<T>,
}

impl<T: Real> TrideModel<T> {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut params = ParamStore::new(seed);
        let arch = Architecture::build(&config, &mut params);
        Ok(TrideModel { config, arch, params })
    }

    /// Same architecture, parameters converted to another precision.
    pub fn cast<U: Real>(&self) -> TrideModel<U> {
        TrideModel {
            config: self.config.clone(),
            arch: self.arch.clone(),
            params: self.params.cast(),
        }
    }

    pub fn forward<'t>(
        &self,
        p: &Bound<'t, T>,
        tape: &'t Tape<T>,
        input: &ModelInput<T>,
    ) -> Result<ModelOutput<'t, T>> {
        let m = self.config.modalities;
        let s = input.image.shape();
        if s.len() != 3 || s[0] != 3 {
            return Err(Error::dim(format!("image must be [3, H, W], got {s:?}")));
        }
        let radar_in = match (m.radar, &input.radar) {
            (true, None) => return Err(Error::contract("config uses radar but the sample has no radar input")),
            (true, Some(r)) => Some(r),
            (false, _) => None,
        };
        let sentences = match (m.text, &input.sentences) {
            (true, None) => return Err(Error::contract("config uses text but the sample has no sentence features")),
            (true, Some(f)) => Some(f),
            (false, _) => None,
        };

        let image = tape.constant(input.image.clone());
        let img = self.arch.image.forward(p, image)?;
        let rad = match (radar_in, &self.arch.radar) {
            (Some(r), Some(enc)) => {
                if r.image.shape() != s {
                    return Err(Error::dim(format!(
                        "radar image {:?} does not match image {s:?}",
                        r.image.shape()
                    )));
                }
                Some(enc.forward(p, tape.constant(r.image.clone()))?)
            }
            _ => None,
        };

        let (text, t_wea, weather_logits) = match (sentences, &self.arch.paragraphs) {
            (Some(feats), Some(enc)) => {
                let mut tf = enc.encode(p, tape, feats)?;
                if let (Some(pe), Some(reb), Some(r)) = (&self.arch.points, &self.arch.reb, radar_in) {
                    let pts = (r.points.shape()[0] > 0).then(|| tape.constant(r.points.clone()));
                    let pf = pe.forward(p, pts)?;
                    tf.t_reg = reb.forward(p, tf.t_reg, pf, &r.regions)?;
                }
                let t_wea = weather_feature(img[4], tf.t_gen)?;
                let logits = self
                    .arch
                    .classifier
                    .as_ref()
                    .map(|c| c.logits(p, t_wea))
                    .transpose()?;
                (Some(tf), Some(t_wea), logits)
            }
            _ => (None, None, None),
        };

        let (depth, decoder_features) = self.arch.decoder.forward(
            p,
            &DecoderInputs {
                image,
                img: &img,
                rad: rad.as_deref(),
                text,
                t_wea,
            },
        )?;
        Ok(ModelOutput {
            depth,
            weather_logits,
            text,
            t_wea,
            decoder_features,
        })
    }

    /// Inference without gradients: depth `[H·W]` and weather logits.
    pub fn predict(&self, input: &ModelInput<T>) -> Result<(Vec<T>, Option<Vec<T>>)> {
        let tape = Tape::new();
        let p = self.params.bind(&tape, false);
        let out = self.forward(&p, &tape, input)?;
        let depth = out.depth.value().into_data();
        let logits = out.weather_logits.map(|l| l.value().into_data());
        Ok((depth, logits))
    }
}
