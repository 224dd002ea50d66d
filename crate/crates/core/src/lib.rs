//! Radar–camera–text depth estimation at desk scale.
//!
//! Image and radar pyramids are fused in a UNet decoder by weather-aware
//! fusion blocks; five-paragraph scene descriptions are encoded per
//! paragraph, enriched with radar points per image band, and injected by
//! general and regional cross-attention. Also here: the training losses,
//! the evaluation metrics and a procedural scene generator.
//!
//! ```
//! use tride_core::{synth, ModelConfig, ModelInput, TrideModel};
//!
//! let params = synth::GenParams { height: 32, width: 64, ..Default::default() };
//! let scene = synth::generate_scene(1, &params).unwrap();
//! let config = ModelConfig { base_channels: 4, text_dim: 16, point_dim: 16, sentence_dim: 32, ..Default::default() };
//! let model = TrideModel::<f32>::new(config.clone(), 0).unwrap();
//! let input = ModelInput::from_sample(&scene, &config).unwrap();
//! let (depth, logits) = model.predict(&input).unwrap();
//! assert_eq!(depth.len(), 32 * 64);
//! assert!(depth.iter().all(|&d| d > 0.0 && d < 80.0));
//! assert_eq!(logits.unwrap().len(), 3);
//! ```

pub mod attention;
pub mod config;
pub mod decoder;
pub mod encoders;
mod error;
pub mod fusion;
pub mod geometry;
pub mod gradcases;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod synth;
pub mod text;

pub use config::{FusionKind, Modalities, ModelConfig};
pub use error::{Error, Result};
pub use model::{ModelInput, ModelOutput, TrideModel};
pub use text::WeatherLabel;
