//! Checkpoint format: a JSON manifest next to a raw little-endian `f64`
//! blob holding the live parameters (base layers, then injected heads, each
//! as weight, bias, norm gain, norm offset) followed by the init snapshot.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::network::{InjectedHead, NetworkState};
use super::params::{LayerParams, NormAffine};
use super::spec::LayerSpec;
use crate::error::{Error, Result};
use crate::numkit::Matrix;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorMeta {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadMeta {
    pub sign: f64,
    pub trainable: bool,
    /// `f64::to_bits` of the head's initial weight norm.
    pub init_norm_bits: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub version: u32,
    pub layers: Vec<LayerSpec>,
    pub frozen: Vec<bool>,
    pub heads: Vec<HeadMeta>,
    pub params: Vec<TensorMeta>,
    pub snapshot: Vec<TensorMeta>,
    pub blob: String,
    pub blob_bytes: u64,
    pub sha256: String,
    #[serde(default)]
    pub meta: serde_json::Value,
}

fn tensor_metas(prefix: &str, idx: usize, p: &LayerParams) -> Vec<TensorMeta> {
    let mut v = vec![
        TensorMeta {
            name: format!("{prefix}{idx}.weight"),
            shape: vec![p.weight.rows(), p.weight.cols()],
        },
        TensorMeta {
            name: format!("{prefix}{idx}.bias"),
            shape: vec![p.bias.len()],
        },
    ];
    if let Some(n) = &p.norm {
        v.push(TensorMeta {
            name: format!("{prefix}{idx}.norm_gain"),
            shape: vec![n.gain.len()],
        });
        v.push(TensorMeta {
            name: format!("{prefix}{idx}.norm_offset"),
            shape: vec![n.offset.len()],
        });
    }
    v
}

fn blob_path(manifest_path: &Path, blob: &str) -> PathBuf {
    manifest_path
        .parent()
        .map(|d| d.join(blob))
        .unwrap_or_else(|| PathBuf::from(blob))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Serializes the network to `manifest_path` (JSON) and a sibling `.bin`.
pub fn save_checkpoint(
    net: &NetworkState,
    manifest_path: &Path,
    meta: serde_json::Value,
) -> Result<Manifest> {
    let mut blob: Vec<u8> = Vec::with_capacity(net.param_count() * 16);
    let mut params = Vec::new();
    for u in 0..net.unit_count() {
        let p = net.unit_params(u);
        let (prefix, idx) = if u < net.num_layers() {
            ("layer", u)
        } else {
            ("head", u - net.num_layers())
        };
        params.extend(tensor_metas(prefix, idx, p));
        for s in p.slices() {
            s.iter().for_each(|v| blob.extend_from_slice(&v.to_le_bytes()));
        }
    }
    let mut snapshot = Vec::new();
    for (i, p) in net.init_snapshot().iter().enumerate() {
        snapshot.extend(tensor_metas("init", i, p));
        for s in p.slices() {
            s.iter().for_each(|v| blob.extend_from_slice(&v.to_le_bytes()));
        }
    }
    let blob_name = manifest_path
        .with_extension("bin")
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| Error::Checkpoint(format!("bad path {}", manifest_path.display())))?
        .to_string();
    let manifest = Manifest {
        version: CHECKPOINT_VERSION,
        layers: net.specs().to_vec(),
        frozen: net.frozen().to_vec(),
        heads: net
            .heads()
            .iter()
            .map(|h| HeadMeta {
                sign: h.sign,
                trainable: h.trainable,
                init_norm_bits: h.init_norm.to_bits(),
            })
            .collect(),
        params,
        snapshot,
        blob_bytes: blob.len() as u64,
        sha256: hex(&Sha256::digest(&blob)),
        blob: blob_name,
        meta,
    };
    // blob first so a manifest never points at a missing blob
    write_atomic(&blob_path(manifest_path, &manifest.blob), &blob)?;
    let json = serde_json::to_vec_pretty(&manifest)
        .map_err(|e| Error::Checkpoint(format!("manifest encode: {e}")))?;
    write_atomic(manifest_path, &json)?;
    Ok(manifest)
}

pub fn read_manifest(manifest_path: &Path) -> Result<Manifest> {
    let text = fs::read(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let manifest: Manifest = serde_json::from_slice(&text)
        .map_err(|e| Error::Checkpoint(format!("manifest parse: {e}")))?;
    if manifest.version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "version mismatch: found {}, expected {CHECKPOINT_VERSION}",
            manifest.version
        )));
    }
    Ok(manifest)
}

/// Loads a checkpoint, verifying blob length and digest before building
/// anything.
pub fn load_checkpoint(manifest_path: &Path) -> Result<(NetworkState, Manifest)> {
    let manifest = read_manifest(manifest_path)?;
    let path = blob_path(manifest_path, &manifest.blob);
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    if bytes.len() as u64 != manifest.blob_bytes || bytes.len() % 8 != 0 {
        return Err(Error::Checkpoint(format!(
            "blob is {} bytes, manifest declares {}",
            bytes.len(),
            manifest.blob_bytes
        )));
    }
    if hex(&Sha256::digest(&bytes)) != manifest.sha256 {
        return Err(Error::Checkpoint("blob digest mismatch".into()));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    let mut cursor = values.as_slice();
    let specs = manifest.layers.clone();
    let last = specs
        .last()
        .ok_or_else(|| Error::Checkpoint("no layers".into()))?
        .clone();

    let mut take_layer = |spec: &LayerSpec| -> Result<LayerParams> {
        let mut take = |n: usize| -> Result<Vec<f64>> {
            if cursor.len() < n {
                return Err(Error::Checkpoint("blob shorter than declared tensors".into()));
            }
            let (head, rest) = cursor.split_at(n);
            cursor = rest;
            Ok(head.to_vec())
        };
        let weight = Matrix::from_vec(spec.out_dim, spec.in_dim, take(spec.out_dim * spec.in_dim)?)?;
        let bias = take(spec.out_dim)?;
        let norm = if spec.layer_norm {
            Some(NormAffine {
                gain: take(spec.out_dim)?,
                offset: take(spec.out_dim)?,
            })
        } else {
            None
        };
        Ok(LayerParams { weight, bias, norm })
    };

    let params = specs.iter().map(&mut take_layer).collect::<Result<Vec<_>>>()?;
    let mut heads = Vec::with_capacity(manifest.heads.len());
    for h in &manifest.heads {
        heads.push(InjectedHead {
            params: take_layer(&last)?,
            sign: h.sign,
            trainable: h.trainable,
            init_norm: f64::from_bits(h.init_norm_bits),
        });
    }
    let snapshot = specs.iter().map(&mut take_layer).collect::<Result<Vec<_>>>()?;
    if !cursor.is_empty() {
        return Err(Error::Checkpoint("blob longer than declared tensors".into()));
    }
    let net = NetworkState::from_parts(specs, params, snapshot, manifest.frozen.clone(), heads)
        .map_err(|e| Error::Checkpoint(e.to_string()))?;
    Ok((net, manifest))
}
