//! Single-file scene container:
//! `"TRIDESCN"`, u32 version, u32 H, u32 W, f32 image `[3·H·W]`, f32 D
//! `[H·W]`, f32 D_s `[H·W]`, u32 N, N × 5 f32 point rows, u8 weather,
//! u32 text length, UTF-8 text. All little-endian.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{DepthMap, RadarPoint};
use crate::synth::SceneSample;
use crate::text::features_file::Reader;
use crate::text::WeatherLabel;

pub const SCENE_MAGIC: &[u8; 8] = b"TRIDESCN";
pub const SCENE_VERSION: u32 = 1;

fn put_f32s(out: &mut Vec<u8>, xs: &[f32]) {
    for x in xs {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

pub fn scene_to_bytes(s: &SceneSample) -> Vec<u8> {
    let n = s.height * s.width;
    let mut out = Vec::with_capacity(8 + 16 + 4 * 5 * n + 20 * s.radar.len() + s.text.len() + 16);
    out.extend_from_slice(SCENE_MAGIC);
    out.extend_from_slice(&SCENE_VERSION.to_le_bytes());
    out.extend_from_slice(&(s.height as u32).to_le_bytes());
    out.extend_from_slice(&(s.width as u32).to_le_bytes());
    put_f32s(&mut out, &s.image);
    put_f32s(&mut out, &s.depth.data);
    put_f32s(&mut out, &s.sparse.data);
    out.extend_from_slice(&(s.radar.len() as u32).to_le_bytes());
    for p in &s.radar {
        put_f32s(&mut out, &p.to_array());
    }
    out.push(s.weather.index() as u8);
    out.extend_from_slice(&(s.text.len() as u32).to_le_bytes());
    out.extend_from_slice(s.text.as_bytes());
    out
}

fn f32s(r: &mut Reader<'_>, n: usize) -> Result<Vec<f32>> {
    let b = r.take(n.checked_mul(4).ok_or_else(|| Error::format(r.pos as u64, "length overflow"))?)?;
    Ok(b.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect())
}

pub fn scene_from_bytes(bytes: &[u8]) -> Result<SceneSample> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != SCENE_MAGIC {
        return Err(Error::format(0, "bad magic, expected TRIDESCN"));
    }
    let version = r.u32()?;
    if version != SCENE_VERSION {
        return Err(Error::format(8, format!("unsupported version {version}")));
    }
    let h = r.u32()? as usize;
    let w = r.u32()? as usize;
    let n = h * w;
    let image = f32s(&mut r, 3 * n)?;
    let depth = DepthMap::new(h, w, f32s(&mut r, n)?)?;
    let sparse = DepthMap::new(h, w, f32s(&mut r, n)?)?;
    let count = r.u32()? as usize;
    let rows = f32s(&mut r, count * 5)?;
    let radar = rows
        .chunks_exact(5)
        .map(|c| RadarPoint::from_array([c[0], c[1], c[2], c[3], c[4]]))
        .collect();
    let weather_at = r.pos as u64;
    let weather = WeatherLabel::from_index(r.u8()? as usize)
        .map_err(|_| Error::format(weather_at, "invalid weather label"))?;
    let len = r.u32()? as usize;
    let text_at = r.pos as u64;
    let text = std::str::from_utf8(r.take(len)?)
        .map_err(|e| Error::format(text_at + e.valid_up_to() as u64, "text is not UTF-8"))?
        .to_string();
    if r.pos != bytes.len() {
        return Err(Error::format(r.pos as u64, "trailing bytes after scene"));
    }
    Ok(SceneSample {
        height: h,
        width: w,
        image,
        radar,
        depth,
        sparse,
        weather,
        text,
    })
}

pub fn save_scene(sample: &SceneSample, path: &Path) -> Result<()> {
    fs::write(path, scene_to_bytes(sample)).map_err(|e| Error::io(path, e))
}

pub fn load_scene(path: &Path) -> Result<SceneSample> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    scene_from_bytes(&bytes)
}
