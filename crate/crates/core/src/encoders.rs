//! Small residual image / radar encoders producing five-level pyramids, and
//! the shared per-point MLP for radar points.

use tride_autodiff::{ConvGeom, Real, Var};

use crate::error::{Error, Result};
use crate::nn::{Bound, Conv, Linear, ParamStore};

/// `relu(x + conv2(relu(conv1(x))))`.
#[derive(Clone, Debug)]
pub struct ResBlock {
    pub conv1: Conv,
    pub conv2: Conv,
}

impl ResBlock {
    pub fn new<T: Real>(store: &mut ParamStore<T>, name: &str, channels: usize) -> Self {
        ResBlock {
            conv1: Conv::same(store, &format!("{name}.conv1"), channels, channels, 3),
            conv2: Conv::same(store, &format!("{name}.conv2"), channels, channels, 3),
        }
    }

    pub fn forward<'t, T: Real>(&self, p: &Bound<'t, T>, x: Var<'t, T>) -> Result<Var<'t, T>> {
        let y = self.conv1.forward(p, x)?.relu();
        let y = self.conv2.forward(p, y)?;
        Ok(x.add(y)?.relu())
    }
}

/// Stride-2 3×3 convolution followed by residual blocks.
#[derive(Clone, Debug)]
pub struct EncoderStage {
    pub down: Conv,
    pub blocks: Vec<ResBlock>,
}

impl EncoderStage {
    pub fn forward<'t, T: Real>(&self, p: &Bound<'t, T>, x: Var<'t, T>) -> Result<Var<'t, T>> {
        let mut y = self.down.forward(p, x)?.relu();
        for b in &self.blocks {
            y = b.forward(p, y)?;
        }
        Ok(y)
    }
}

/// Five-stage encoder; level `i` is at scale `1/2^i`.
#[derive(Clone, Debug)]
pub struct PyramidEncoder {
    pub stages: Vec<EncoderStage>,
}

impl PyramidEncoder {
    /// `widths` are the five level widths; `blocks` residual blocks per stage.
    pub fn new<T: Real>(store: &mut ParamStore<T>, name: &str, c_in: usize, widths: [usize; 5], blocks: usize) -> Self {
        let mut prev = c_in;
        let stages = widths
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                let stage = EncoderStage {
                    down: Conv::new(
                        store,
                        &format!("{name}.stage{}.down", i + 1),
                        prev,
                        c,
                        3,
                        ConvGeom::new(2, 1, 1),
                        true,
                    ),
                    blocks: (0..blocks)
                        .map(|b| ResBlock::new(store, &format!("{name}.stage{}.block{b}", i + 1), c))
                        .collect(),
                };
                prev = c;
                stage
            })
            .collect();
        PyramidEncoder { stages }
    }

    /// `x [C_in × H × W]` with H, W divisible by 32 → five feature maps.
    pub fn forward<'t, T: Real>(&self, p: &Bound<'t, T>, x: Var<'t, T>) -> Result<Vec<Var<'t, T>>> {
        let s = x.shape();
        if s.len() != 3 || s[1] % 32 != 0 || s[2] % 32 != 0 || s[1] == 0 || s[2] == 0 {
            return Err(Error::contract(format!(
                "encoder input must be [C, H, W] with H, W positive multiples of 32, got {s:?}"
            )));
        }
        let mut out = Vec::with_capacity(5);
        let mut y = x;
        for stage in &self.stages {
            y = stage.forward(p, y)?;
            out.push(y);
        }
        Ok(out)
    }
}

/// Per-point MLP `5 → hidden → C_r'` without pooling.
#[derive(Clone, Debug)]
pub struct PointEncoder {
    pub fc1: Linear,
    pub fc2: Linear,
}

impl PointEncoder {
    pub fn new<T: Real>(store: &mut ParamStore<T>, hidden: usize, out: usize) -> Self {
        PointEncoder {
            fc1: Linear::new(store, "points.fc1", 5, hidden),
            fc2: Linear::new(store, "points.fc2", hidden, out),
        }
    }

    /// `points [N × 5]` → `[N × C_r']`; `None` for an empty cloud.
    pub fn forward<'t, T: Real>(&self, p: &Bound<'t, T>, points: Option<Var<'t, T>>) -> Result<Option<Var<'t, T>>> {
        let Some(x) = points else { return Ok(None) };
        if x.shape()[0] == 0 {
            return Ok(None);
        }
        let h = self.fc1.rows(p, x)?.relu();
        Ok(Some(self.fc2.rows(p, h)?))
    }
}
