//! Model configuration: the ablation axes (modalities, fusion kind,
//! attention placement, feature widths).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::text::ParagraphOrder;

/// Active input branches. The image branch is always present.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Modalities {
    pub image: bool,
    pub radar: bool,
    pub text: bool,
}

impl Modalities {
    pub const I: Modalities = Modalities {
        image: true,
        radar: false,
        text: false,
    };
    pub const IR: Modalities = Modalities {
        image: true,
        radar: true,
        text: false,
    };
    pub const IT: Modalities = Modalities {
        image: true,
        radar: false,
        text: true,
    };
    pub const IRT: Modalities = Modalities {
        image: true,
        radar: true,
        text: true,
    };
}

impl fmt::Display for Modalities {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        if self.image {
            parts.push("I");
        }
        if self.radar {
            parts.push("R");
        }
        if self.text {
            parts.push("T");
        }
        f.write_str(&parts.join("+"))
    }
}

impl FromStr for Modalities {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut m = Modalities {
            image: false,
            radar: false,
            text: false,
        };
        for part in s.split('+').map(str::trim) {
            let slot = match part {
                "I" | "i" => &mut m.image,
                "R" | "r" => &mut m.radar,
                "T" | "t" => &mut m.text,
                _ => return Err(Error::Parse(format!("unknown modality '{part}' in '{s}'"))),
            };
            if *slot {
                return Err(Error::Parse(format!("modality '{part}' repeated in '{s}'")));
            }
            *slot = true;
        }
        Ok(m)
    }
}

impl Serialize for Modalities {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Modalities {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FusionKind {
    Concat,
    Add,
    Gated,
    Wafb,
}

impl fmt::Display for FusionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FusionKind::Concat => "concat",
            FusionKind::Add => "add",
            FusionKind::Gated => "gated",
            FusionKind::Wafb => "wafb",
        })
    }
}

impl FromStr for FusionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "concat" => Ok(FusionKind::Concat),
            "add" => Ok(FusionKind::Add),
            "gated" => Ok(FusionKind::Gated),
            "wafb" => Ok(FusionKind::Wafb),
            _ => Err(Error::Parse(format!("unknown fusion kind '{s}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub modalities: Modalities,
    pub fusion: FusionKind,
    /// Text feature width C_t.
    pub text_dim: usize,
    /// Per-point radar feature width C_r'.
    pub point_dim: usize,
    pub point_hidden: usize,
    /// Sentence embedding width C.
    pub sentence_dim: usize,
    /// Image pyramid widths are (c, 2c, 4c, 8c, 8c).
    pub base_channels: usize,
    /// Decoder scale (as 1/n) where general attention runs.
    pub ga_scale: u32,
    /// Decoder scale (as 1/n) where regional attention runs.
    pub ra_scale: u32,
    pub depth_cap: f64,
    /// Drop the point encoder and radar enrichment (T⁻).
    pub text_minus: bool,
    /// One paragraph LSTM for all five paragraphs; otherwise general and
    /// regional paragraphs get separate cells.
    pub shared_lstm: bool,
    pub paragraph_order: ParagraphOrder,
    pub daspp_dilations: Vec<usize>,
    /// Kernel size of the convolutions inside the fusion blocks.
    pub fusion_kernel: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            modalities: Modalities::IRT,
            fusion: FusionKind::Wafb,
            text_dim: 128,
            point_dim: 256,
            point_hidden: 64,
            sentence_dim: 512,
            base_channels: 16,
            ga_scale: 32,
            ra_scale: 16,
            depth_cap: 80.0,
            text_minus: false,
            shared_lstm: true,
            paragraph_order: ParagraphOrder::LeftToRight,
            daspp_dilations: vec![1, 2, 4],
            fusion_kernel: 3,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.modalities.image {
            return Err(Error::contract("the image modality is required"));
        }
        for (name, s) in [("ga_scale", self.ga_scale), ("ra_scale", self.ra_scale)] {
            if ![32, 16, 8].contains(&s) {
                return Err(Error::contract(format!("{name} must be 32, 16 or 8 (meaning 1/n), got {s}")));
            }
        }
        if self.text_minus && !self.modalities.text {
            return Err(Error::contract("text_minus requires the text modality"));
        }
        if self.base_channels == 0 || self.text_dim == 0 || self.point_dim == 0 || self.sentence_dim == 0 {
            return Err(Error::contract("feature widths must be positive"));
        }
        if self.modalities.text && 8 * self.base_channels < self.text_dim {
            return Err(Error::contract(format!(
                "deepest image width {} is smaller than text_dim {}",
                8 * self.base_channels,
                self.text_dim
            )));
        }
        if self.fusion_kernel % 2 == 0 {
            return Err(Error::contract("fusion_kernel must be odd"));
        }
        if !(self.depth_cap > 0.0) {
            return Err(Error::contract("depth_cap must be positive"));
        }
        Ok(())
    }

    /// Image/radar pyramid width at level `i` (1..=5).
    pub fn level_channels(&self, level: usize) -> usize {
        self.base_channels * [1, 2, 4, 8, 8][level - 1]
    }

    /// Whether WaFB actually receives a weather feature.
    pub fn uses_weather_feature(&self) -> bool {
        self.modalities.text
    }

    pub fn uses_point_branch(&self) -> bool {
        self.modalities.radar && self.modalities.text && !self.text_minus
    }
}
