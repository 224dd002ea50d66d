//! Text branch: prompt, description grammar, sentence embedding, feature
//! files, and the trainable paragraph/radar-enrichment/weather blocks.

pub mod description;
pub mod embed;
pub mod encode;
pub mod features_file;
pub mod prompt;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use description::{parse_description, ParagraphOrder, SceneDescription};
pub use embed::embed_sentence;
pub use encode::{
    encode_paragraph, weather_feature, ParagraphEncoder, RadarEnrichment, TextFeatures, WeatherClassifier,
};
pub use features_file::SentenceFeatures;
pub use prompt::{render_prompt, PROMPT};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeatherLabel {
    Normal,
    Rainy,
    Night,
}

impl WeatherLabel {
    pub const ALL: [WeatherLabel; 3] = [WeatherLabel::Normal, WeatherLabel::Rainy, WeatherLabel::Night];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Result<Self> {
        Self::ALL
            .get(i)
            .copied()
            .ok_or_else(|| Error::contract(format!("weather index {i} out of range")))
    }

    /// Word used in generated descriptions.
    pub fn describe(self) -> &'static str {
        match self {
            WeatherLabel::Normal => "sunny",
            WeatherLabel::Rainy => "rainy",
            WeatherLabel::Night => "night-time",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            WeatherLabel::Normal => "normal",
            WeatherLabel::Rainy => "rainy",
            WeatherLabel::Night => "night",
        }
    }
}

impl fmt::Display for WeatherLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for WeatherLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|w| w.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown weather '{s}'")))
    }
}
