//! Named-tensor checkpoints: a JSON manifest plus a raw little-endian f32
//! blob. Round trips are bit-exact.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{AdError, Result};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: String,
    pub byte_offset: u64,
}

/// `<stem>.json` and `<stem>.bin`.
pub fn checkpoint_paths(stem: &Path) -> (PathBuf, PathBuf) {
    let mut manifest = stem.as_os_str().to_owned();
    manifest.push(".json");
    let mut blob = stem.as_os_str().to_owned();
    blob.push(".bin");
    (manifest.into(), blob.into())
}

/// Encodes tensors into (manifest JSON, blob bytes).
pub fn encode(tensors: &[(String, Tensor<f32>)]) -> (String, Vec<u8>) {
    let mut blob = Vec::new();
    let mut entries = Vec::with_capacity(tensors.len());
    for (name, t) in tensors {
        entries.push(ManifestEntry {
            name: name.clone(),
            shape: t.shape().to_vec(),
            dtype: "f32".into(),
            byte_offset: blob.len() as u64,
        });
        for v in t.data() {
            blob.extend_from_slice(&v.to_le_bytes());
        }
    }
    let manifest = serde_json::to_string_pretty(&entries).expect("manifest serializes");
    (manifest, blob)
}

pub fn decode(manifest: &str, blob: &[u8]) -> Result<Vec<(String, Tensor<f32>)>> {
    let entries: Vec<ManifestEntry> = serde_json::from_str(manifest).map_err(|e| AdError::Format {
        offset: 0,
        msg: format!("manifest: {e}"),
    })?;
    let mut out = Vec::with_capacity(entries.len());
    for e in entries {
        if e.dtype != "f32" {
            return Err(AdError::Format {
                offset: e.byte_offset,
                msg: format!("tensor '{}' has unsupported dtype '{}'", e.name, e.dtype),
            });
        }
        let n: usize = e.shape.iter().product();
        let start = e.byte_offset as usize;
        let end = start + 4 * n;
        if end > blob.len() {
            return Err(AdError::Format {
                offset: blob.len() as u64,
                msg: format!("tensor '{}' needs bytes {start}..{end} but blob is shorter", e.name),
            });
        }
        let data = blob[start..end]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        out.push((e.name, Tensor::new(e.shape, data)?));
    }
    Ok(out)
}

pub fn save_checkpoint(stem: &Path, tensors: &[(String, Tensor<f32>)]) -> Result<()> {
    let (mp, bp) = checkpoint_paths(stem);
    let (manifest, blob) = encode(tensors);
    fs::write(&mp, manifest).map_err(|e| AdError::io(&mp, e))?;
    fs::write(&bp, blob).map_err(|e| AdError::io(&bp, e))?;
    Ok(())
}

pub fn load_checkpoint(stem: &Path) -> Result<Vec<(String, Tensor<f32>)>> {
    let (mp, bp) = checkpoint_paths(stem);
    let manifest = fs::read_to_string(&mp).map_err(|e| AdError::io(&mp, e))?;
    let blob = fs::read(&bp).map_err(|e| AdError::io(&bp, e))?;
    decode(&manifest, &blob)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn truncated_blob_is_a_format_error() {
        let t = Tensor::<f32>::from_f64(vec![2, 2], &[1.0, 2.0, 3.0, 4.0]).unwrap();
        let (m, b) = encode(&[("w".into(), t)]);
        let err = decode(&m, &b[..10]).unwrap_err();
        assert!(matches!(err, AdError::Format { offset: 10, .. }), "{err}");
    }

    #[test]
    fn unknown_manifest_keys_are_rejected() {
        let m = r#"[{"name":"w","shape":[1],"dtype":"f32","byte_offset":0,"extra":1}]"#;
        assert!(decode(m, &[0, 0, 0, 0]).is_err());
    }

    #[test]
    fn special_values_survive() {
        let vals = vec![f32::NAN, -0.0, f32::INFINITY, f32::MIN_POSITIVE / 2.0];
        let t = Tensor::new(vec![4], vals.clone()).unwrap();
        let (m, b) = encode(&[("x".into(), t)]);
        let back = decode(&m, &b).unwrap();
        let bits: Vec<u32> = back[0].1.data().iter().map(|v| v.to_bits()).collect();
        assert_eq!(bits, vals.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }
}
