//! UNet-style decoder: fusion at every scale, text attention at the
//! configured scales, a dense dilated context block, and the bounded depth
//! head.

use tride_autodiff::{ConvGeom, Real, Var};

use crate::attention::{GeneralAttention, RegionalAttention};
use crate::config::{FusionKind, ModelConfig};
use crate::error::{Error, Result};
use crate::fusion::FusionBlock;
use crate::nn::{Bound, Conv, ParamStore};
use crate::text::TextFeatures;

/// Densely connected dilated convolutions with a residual 1×1 merge.
#[derive(Clone, Debug)]
pub struct Daspp {
    pub branches: Vec<Conv>,
    pub merge: Conv,
}

impl Daspp {
    pub fn new<T: Real>(store: &mut ParamStore<T>, name: &str, channels: usize, dilations: &[usize]) -> Self {
        let growth = (channels / 2).max(1);
        let mut c_in = channels;
        let branches = dilations
            .iter()
            .enumerate()
            .map(|(i, &d)| {
                let conv = Conv::new(
                    store,
                    &format!("{name}.branch{i}"),
                    c_in,
                    growth,
                    3,
                    ConvGeom::same(3, d),
                    true,
                );
                c_in += growth;
                conv
            })
            .collect();
        let merge = Conv::same(store, &format!("{name}.merge"), c_in, channels, 1);
        Daspp { branches, merge }
    }

    pub fn forward<'t, T: Real>(&self, p: &Bound<'t, T>, x: Var<'t, T>) -> Result<Var<'t, T>> {
        let mut feats = vec![x];
        for b in &self.branches {
            let input = if feats.len() == 1 { x } else { Var::concat(&feats, 0)? };
            feats.push(b.forward(p, input)?.relu());
        }
        let merged = self.merge.forward(p, Var::concat(&feats, 0)?)?;
        Ok(x.add(merged)?)
    }
}

/// Two 3×3 conv + ReLU layers.
#[derive(Clone, Debug)]
pub struct DecoderStage {
    pub conv1: Conv,
    pub conv2: Conv,
}

impl DecoderStage {
    pub fn new<T: Real>(store: &mut ParamStore<T>, name: &str, c_in: usize, c_out: usize) -> Self {
        DecoderStage {
            conv1: Conv::same(store, &format!("{name}.conv1"), c_in, c_out, 3),
            conv2: Conv::same(store, &format!("{name}.conv2"), c_out, c_out, 3),
        }
    }

    pub fn forward<'t, T: Real>(&self, p: &Bound<'t, T>, x: Var<'t, T>) -> Result<Var<'t, T>> {
        let y = self.conv1.forward(p, x)?.relu();
        Ok(self.conv2.forward(p, y)?.relu())
    }
}

/// Inputs to [`Decoder::forward`].
pub struct DecoderInputs<'a, 't, T: Real> {
    /// The normalised input image, used as the full-resolution skip.
    pub image: Var<'t, T>,
    pub img: &'a [Var<'t, T>],
    pub rad: Option<&'a [Var<'t, T>]>,
    pub text: Option<TextFeatures<'t, T>>,
    pub t_wea: Option<Var<'t, T>>,
}

#[derive(Clone, Debug)]
pub struct Decoder {
    /// Fusion blocks for pyramid levels 1..=5 (index 0 is level 1).
    pub fusion: Option<Vec<FusionBlock>>,
    pub ga: Option<GeneralAttention>,
    pub ra: Option<RegionalAttention>,
    pub ga_scale: u32,
    pub ra_scale: u32,
    pub daspp: Daspp,
    /// Stages for levels 4, 3, 2, 1 and the full-resolution stage.
    pub stages: Vec<DecoderStage>,
    pub head: Conv,
    pub depth_cap: f64,
}

/// Fusion kind actually used: weather-aware fusion without a text branch
/// has no weather feature and degrades to gated fusion.
pub fn effective_fusion(config: &ModelConfig) -> FusionKind {
    if config.fusion == FusionKind::Wafb && !config.uses_weather_feature() {
        FusionKind::Gated
    } else {
        config.fusion
    }
}

impl Decoder {
    pub fn new<T: Real>(store: &mut ParamStore<T>, config: &ModelConfig) -> Self {
        let ch = |l: usize| config.level_channels(l);
        let text = config.modalities.text;
        let fusion = config.modalities.radar.then(|| {
            let kind = effective_fusion(config);
            (1..=5)
                .map(|l| {
                    FusionBlock::new(
                        store,
                        &format!("decoder.fuse{l}"),
                        kind,
                        ch(l),
                        config.text_dim,
                        config.fusion_kernel,
                    )
                })
                .collect()
        });
        // every attention entry point (1/32, 1/16, 1/8) carries the deepest width
        let ga = text.then(|| GeneralAttention::new(store, "decoder.ga", ch(5), config.text_dim));
        let ra = text.then(|| RegionalAttention::new(store, "decoder.ra", ch(5), config.text_dim));
        let daspp = Daspp::new(store, "decoder.daspp", ch(5), &config.daspp_dilations);
        let mut stages = Vec::new();
        let mut prev = ch(5);
        for l in (1..=4).rev() {
            stages.push(DecoderStage::new(store, &format!("decoder.stage{l}"), prev + ch(l), ch(l)));
            prev = ch(l);
        }
        let full = (config.base_channels / 2).max(4);
        stages.push(DecoderStage::new(store, "decoder.stage0", prev + 3, full));
        let head = Conv::same(store, "decoder.head", full, 1, 3);
        Decoder {
            fusion,
            ga,
            ra,
            ga_scale: config.ga_scale,
            ra_scale: config.ra_scale,
            daspp,
            stages,
            head,
            depth_cap: config.depth_cap,
        }
    }

    fn fuse<'t, T: Real>(&self, p: &Bound<'t, T>, inp: &DecoderInputs<'_, 't, T>, level: usize) -> Result<Var<'t, T>> {
        let img = inp.img[level - 1];
        match (&self.fusion, inp.rad) {
            (Some(blocks), Some(rad)) => blocks[level - 1].forward(p, img, rad[level - 1], inp.t_wea),
            (None, None) => Ok(img),
            (Some(_), None) => Err(Error::contract("model expects radar features")),
            (None, Some(_)) => Err(Error::contract("radar features given to a model without a radar branch")),
        }
    }

    fn attend<'t, T: Real>(
        &self,
        p: &Bound<'t, T>,
        x: Var<'t, T>,
        text: Option<TextFeatures<'t, T>>,
        scale: u32,
    ) -> Result<Var<'t, T>> {
        let mut x = x;
        if let (Some(ga), Some(t)) = (&self.ga, text) {
            if self.ga_scale == scale {
                x = ga.forward(p, x, t.t_gen)?;
            }
        }
        if let (Some(ra), Some(t)) = (&self.ra, text) {
            if self.ra_scale == scale {
                x = ra.forward(p, x, t.t_reg)?;
            }
        }
        Ok(x)
    }

    /// Returns the depth map `[1 × H × W]` in metres and the decoder
    /// features after each stage (coarse to fine).
    pub fn forward<'t, T: Real>(
        &self,
        p: &Bound<'t, T>,
        inp: &DecoderInputs<'_, 't, T>,
    ) -> Result<(Var<'t, T>, Vec<Var<'t, T>>)> {
        if inp.img.len() != 5 || inp.rad.is_some_and(|r| r.len() != 5) {
            return Err(Error::contract("decoder needs five-level pyramids"));
        }
        if self.ga.is_some() != inp.text.is_some() {
            return Err(Error::contract("text features must be given exactly when the model has a text branch"));
        }
        let mut inter = Vec::with_capacity(6);
        let mut x = self.fuse(p, inp, 5)?;
        x = self.attend(p, x, inp.text, 32)?;
        inter.push(x);
        x = self.daspp.forward(p, x.upsample_nearest_2x()?)?;
        for (i, level) in (1..=4).rev().enumerate() {
            let scale = 1u32 << level;
            x = self.attend(p, x, inp.text, scale)?;
            let skip = self.fuse(p, inp, level)?;
            x = self.stages[i].forward(p, Var::concat(&[x, skip], 0)?)?;
            inter.push(x);
            x = x.upsample_nearest_2x()?;
        }
        x = self.stages[4].forward(p, Var::concat(&[x, inp.image], 0)?)?;
        inter.push(x);
        let logit = self.head.forward(p, x)?;
        let depth = logit.sigmoid().scale(T::lit(self.depth_cap));
        Ok((depth, inter))
    }
}
