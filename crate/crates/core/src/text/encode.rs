//! Trainable text blocks: paragraph LSTM, radar enrichment, weather
//! feature and weather classifier.

use tride_autodiff::{lstm_cell, Real, Tape, Tensor, Var};

use crate::attention::cross_attention;
use crate::error::{Error, Result};
use crate::geometry::RegionAssignment;
use crate::nn::{Bound, Linear, LstmParams, ParamId, ParamStore};
use crate::text::SentenceFeatures;

/// Paragraph-level features: `t_gen` and one vector per band (L, ML, MR, R).
#[derive(Clone, Copy, Debug)]
pub struct TextFeatures<'t, T: Real> {
    pub t_gen: Var<'t, T>,
    pub t_reg: [Var<'t, T>; 4],
}

/// Runs the LSTM over `sentences` from a zero state and returns the last
/// hidden state.
pub fn encode_paragraph<'t, T: Real>(
    p: &Bound<'t, T>,
    cell: &LstmParams,
    sentences: &[Var<'t, T>],
) -> Result<Var<'t, T>> {
    let first = sentences
        .first()
        .ok_or_else(|| Error::contract("cannot encode an empty paragraph"))?;
    let tape = first.tape();
    let mut h = tape.constant(Tensor::zeros(vec![cell.hidden]));
    let mut c = tape.constant(Tensor::zeros(vec![cell.hidden]));
    let w = cell.weights(p);
    for &x in sentences {
        (h, c) = lstm_cell(x, h, c, w)?;
    }
    Ok(h)
}

#[derive(Clone, Debug)]
pub struct ParagraphEncoder {
    pub general: LstmParams,
    /// Same as `general` when the cell is shared.
    pub regional: LstmParams,
    pub sentence_dim: usize,
}

impl ParagraphEncoder {
    pub fn new<T: Real>(store: &mut ParamStore<T>, sentence_dim: usize, text_dim: usize, shared: bool) -> Self {
        let general = LstmParams::new(store, if shared { "text.lstm" } else { "text.lstm_gen" }, sentence_dim, text_dim);
        let regional = if shared {
            general.clone()
        } else {
            LstmParams::new(store, "text.lstm_reg", sentence_dim, text_dim)
        };
        ParagraphEncoder {
            general,
            regional,
            sentence_dim,
        }
    }

    pub fn encode<'t, T: Real>(
        &self,
        p: &Bound<'t, T>,
        tape: &'t Tape<T>,
        feats: &SentenceFeatures,
    ) -> Result<TextFeatures<'t, T>> {
        if feats.dim != self.sentence_dim {
            return Err(Error::dim(format!(
                "sentence features have dim {}, model expects {}",
                feats.dim, self.sentence_dim
            )));
        }
        let mut out = Vec::with_capacity(5);
        for (i, para) in feats.paragraphs.iter().enumerate() {
            let xs: Vec<Var<'t, T>> = para
                .iter()
                .map(|v| Tensor::new(vec![v.len()], v.iter().map(|&x| T::lit(x as f64)).collect()).map(|t| tape.constant(t)))
                .collect::<std::result::Result<_, _>>()?;
            let cell = if i == 0 { &self.general } else { &self.regional };
            out.push(encode_paragraph(p, cell, &xs)?);
        }
        Ok(TextFeatures {
            t_gen: out[0],
            t_reg: [out[1], out[2], out[3], out[4]],
        })
    }
}

/// Residual single-query cross-attention from each regional text feature
/// onto the radar points of its band.
#[derive(Clone, Debug)]
pub struct RadarEnrichment {
    /// `[C_t × C_t]`
    pub w_q: ParamId,
    /// `[C_r' × C_t]`
    pub w_k: ParamId,
    /// `[C_r' × C_t]`
    pub w_v: ParamId,
    pub text_dim: usize,
}

impl RadarEnrichment {
    pub fn new<T: Real>(store: &mut ParamStore<T>, point_dim: usize, text_dim: usize) -> Self {
        RadarEnrichment {
            w_q: store.kaiming("reb.w_q", &[text_dim, text_dim], text_dim),
            w_k: store.kaiming("reb.w_k", &[point_dim, text_dim], point_dim),
            w_v: store.kaiming("reb.w_v", &[point_dim, text_dim], point_dim),
            text_dim,
        }
    }

    /// `points` is the `[N × C_r']` table (`None` when there are no points);
    /// `regions` index its rows. `T_gen` never passes through here.
    pub fn forward<'t, T: Real>(
        &self,
        p: &Bound<'t, T>,
        f_reg: [Var<'t, T>; 4],
        points: Option<Var<'t, T>>,
        regions: &RegionAssignment,
    ) -> Result<[Var<'t, T>; 4]> {
        let n = points.map_or(0, |pt| pt.shape()[0]);
        if let Some(&bad) = regions.bands.iter().flatten().find(|&&i| i >= n) {
            return Err(Error::contract(format!("region index {bad} out of range for {n} points")));
        }
        let mut out = f_reg;
        for (r, idx) in regions.bands.iter().enumerate() {
            let Some(points) = points else { break };
            if idx.is_empty() {
                continue;
            }
            let pr = points.gather_rows(idx)?;
            let q = f_reg[r].reshape(vec![1, self.text_dim])?.matmul(p[self.w_q])?;
            let k = pr.matmul(p[self.w_k])?;
            let v = pr.matmul(p[self.w_v])?;
            let a = cross_attention(q, k, v)?.reshape(vec![self.text_dim])?;
            out[r] = f_reg[r].add(a)?;
        }
        Ok(out)
    }
}

/// `T_wea = pool_{C_t}(GAP(f_img5)) + T_gen`.
pub fn weather_feature<'t, T: Real>(f_img5: Var<'t, T>, t_gen: Var<'t, T>) -> Result<Var<'t, T>> {
    let c_img = f_img5.shape()[0];
    let c_t = t_gen.numel();
    if c_img < c_t {
        return Err(Error::contract(format!(
            "image feature width {c_img} is smaller than text width {c_t}"
        )));
    }
    let g = f_img5.global_avg_pool_2d()?.adaptive_avg_pool_1d(c_t)?;
    Ok(g.add(t_gen)?)
}

/// Two-layer MLP `C_t → C_t → 3`.
#[derive(Clone, Debug)]
pub struct WeatherClassifier {
    pub hidden: Linear,
    pub out: Linear,
}

impl WeatherClassifier {
    pub fn new<T: Real>(store: &mut ParamStore<T>, text_dim: usize) -> Self {
        WeatherClassifier {
            hidden: Linear::new(store, "weather.fc1", text_dim, text_dim),
            out: Linear::new(store, "weather.fc2", text_dim, 3),
        }
    }

    pub fn logits<'t, T: Real>(&self, p: &Bound<'t, T>, t_wea: Var<'t, T>) -> Result<Var<'t, T>> {
        let h = self.hidden.vector(p, t_wea)?.relu();
        self.out.vector(p, h)
    }
}
