//! Image/radar feature fusion: the weather-aware block and its baselines.

use tride_autodiff::{ConvGeom, Real, Tensor, Var};

use crate::config::FusionKind;
use crate::error::{Error, Result};
use crate::nn::{Bound, Conv, ParamId, ParamStore};

/// One fusion block at a single decoder scale.
///
/// * concat: `conv(f_img ‖ f_rad)`
/// * add: `f_img + f_rad`
/// * gated: `α⊙β + f_img`, `α = σ(conv f_rad)`, `β = relu(conv f_rad)`
/// * wafb: `α⊙β + γ⊙β + f_img`, `γ = σ(conv(T_wea ‖ f_rad))`
#[derive(Clone, Debug)]
pub struct FusionBlock {
    pub kind: FusionKind,
    pub alpha: Option<Conv>,
    pub beta: Option<Conv>,
    /// Radar part of the γ convolution.
    pub gamma: Option<Conv>,
    /// Text part of the γ convolution, `[C_t × (C·k·k)]`: the kernel slice
    /// that sees the broadcast weather feature.
    pub gamma_text: Option<ParamId>,
    pub kernel: usize,
    pub mix: Option<Conv>,
    pub channels: usize,
    pub text_dim: usize,
}

impl FusionBlock {
    pub fn new<T: Real>(
        store: &mut ParamStore<T>,
        name: &str,
        kind: FusionKind,
        channels: usize,
        text_dim: usize,
        kernel: usize,
    ) -> Self {
        let c = channels;
        let conv = |store: &mut ParamStore<T>, part: &str, c_in: usize| {
            Conv::same(store, &format!("{name}.{part}"), c_in, c, kernel)
        };
        let gated = matches!(kind, FusionKind::Gated | FusionKind::Wafb);
        let alpha = gated.then(|| conv(store, "alpha", c));
        let beta = gated.then(|| conv(store, "beta", c));
        let wafb = kind == FusionKind::Wafb;
        let fan_in = (c + text_dim) * kernel * kernel;
        let gamma = wafb.then(|| {
            let weight = store.kaiming(&format!("{name}.gamma.weight"), &[c, c, kernel, kernel], fan_in);
            let bias = Some(store.zeros(&format!("{name}.gamma.bias"), &[c]));
            Conv {
                weight,
                bias,
                geom: ConvGeom::same(kernel, 1),
            }
        });
        let gamma_text = wafb.then(|| store.kaiming(&format!("{name}.gamma.text"), &[text_dim, c * kernel * kernel], fan_in));
        let mix = (kind == FusionKind::Concat).then(|| conv(store, "mix", 2 * c));
        FusionBlock {
            kind,
            alpha,
            beta,
            gamma,
            gamma_text,
            kernel,
            mix,
            channels,
            text_dim,
        }
    }

    fn check<T: Real>(&self, f_img: Var<'_, T>, f_rad: Var<'_, T>) -> Result<()> {
        let (a, b) = (f_img.shape(), f_rad.shape());
        if a != b || a.len() != 3 || a[0] != self.channels {
            return Err(Error::dim(format!(
                "fusion of image {a:?} and radar {b:?} (expected {} channels each)",
                self.channels
            )));
        }
        Ok(())
    }

    /// `(α, β)` from the radar feature.
    pub fn alpha_beta<'t, T: Real>(&self, p: &Bound<'t, T>, f_rad: Var<'t, T>) -> Result<(Var<'t, T>, Var<'t, T>)> {
        let (Some(a), Some(b)) = (&self.alpha, &self.beta) else {
            return Err(Error::contract(format!("{} fusion has no radar gates", self.kind)));
        };
        Ok((a.forward(p, f_rad)?.sigmoid(), b.forward(p, f_rad)?.relu()))
    }

    /// Weather gate `γ = σ(conv(T_wea ‖ f_rad))`. The convolution is split
    /// by input channels: the text half acts on a spatially constant map, so
    /// it equals a convolution of an all-ones plane with the kernel
    /// `W_text·T_wea`, which is far cheaper than materialising the broadcast.
    pub fn gamma<'t, T: Real>(&self, p: &Bound<'t, T>, f_rad: Var<'t, T>, t_wea: Var<'t, T>) -> Result<Var<'t, T>> {
        let (Some(g), Some(gt)) = (&self.gamma, self.gamma_text) else {
            return Err(Error::contract(format!("{} fusion has no weather gate", self.kind)));
        };
        if t_wea.numel() != self.text_dim {
            return Err(Error::dim(format!(
                "weather feature has {} entries, expected {}",
                t_wea.numel(),
                self.text_dim
            )));
        }
        let s = f_rad.shape();
        let k = self.kernel;
        let tape = f_rad.tape();
        let text_kernel = t_wea
            .reshape(vec![1, self.text_dim])?
            .matmul(p[gt])?
            .reshape(vec![self.channels, 1, k, k])?;
        let ones = tape.constant(Tensor::ones(vec![1, s[1], s[2]]));
        let text_part = ones.conv2d(text_kernel, None, ConvGeom::same(k, 1))?;
        Ok(g.forward(p, f_rad)?.add(text_part)?.sigmoid())
    }

    /// `α⊙β + f_img` using this block's α/β weights.
    pub fn gated<'t, T: Real>(&self, p: &Bound<'t, T>, f_img: Var<'t, T>, f_rad: Var<'t, T>) -> Result<Var<'t, T>> {
        self.check(f_img, f_rad)?;
        let (a, b) = self.alpha_beta(p, f_rad)?;
        Ok(a.mul(b)?.add(f_img)?)
    }

    /// `α⊙β + γ⊙β + f_img`.
    pub fn wafb<'t, T: Real>(
        &self,
        p: &Bound<'t, T>,
        f_img: Var<'t, T>,
        f_rad: Var<'t, T>,
        t_wea: Var<'t, T>,
    ) -> Result<Var<'t, T>> {
        self.check(f_img, f_rad)?;
        let (a, b) = self.alpha_beta(p, f_rad)?;
        let g = self.gamma(p, f_rad, t_wea)?;
        Ok(a.mul(b)?.add(g.mul(b)?)?.add(f_img)?)
    }

    pub fn forward<'t, T: Real>(
        &self,
        p: &Bound<'t, T>,
        f_img: Var<'t, T>,
        f_rad: Var<'t, T>,
        t_wea: Option<Var<'t, T>>,
    ) -> Result<Var<'t, T>> {
        self.check(f_img, f_rad)?;
        match self.kind {
            FusionKind::Add => Ok(f_img.add(f_rad)?),
            FusionKind::Concat => {
                let mix = self.mix.as_ref().expect("concat block has a mixing conv");
                mix.forward(p, Var::concat(&[f_img, f_rad], 0)?)
            }
            FusionKind::Gated => self.gated(p, f_img, f_rad),
            FusionKind::Wafb => {
                let t = t_wea.ok_or_else(|| Error::contract("weather-aware fusion needs a weather feature"))?;
                self.wafb(p, f_img, f_rad, t)
            }
        }
    }
}
