//! Named tensor collections and their on-disk safetensors form.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use ndarray::{ArrayD, IxDyn};
use safetensors::tensor::{Dtype, SafeTensors, TensorView};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Tensors keyed by parameter name, iterated in name order.
pub type TensorMap = BTreeMap<String, ArrayD<f32>>;

/// Writes `tensors` as little-endian f32 with string `metadata` in the header.
pub fn write_safetensors(path: &Path, tensors: &TensorMap, metadata: &BTreeMap<String, String>) -> Result<()> {
    let bytes: Vec<(String, Vec<u8>, Vec<usize>)> = tensors
        .iter()
        .map(|(k, v)| (k.clone(), le_bytes(v), v.shape().to_vec()))
        .collect();
    let views = bytes
        .iter()
        .map(|(k, b, shape)| {
            TensorView::new(Dtype::F32, shape.clone(), b)
                .map(|v| (k.as_str(), v))
                .map_err(|e| corrupt(path, e))
        })
        .collect::<Result<Vec<_>>>()?;
    let info: HashMap<String, String> = metadata.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
    let buffer = safetensors::serialize(views, Some(info)).map_err(|e| corrupt(path, e))?;
    std::fs::write(path, buffer).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

/// Reads every tensor (converted to f32) and the header metadata.
pub fn read_safetensors(path: &Path) -> Result<(TensorMap, BTreeMap<String, String>)> {
    read_safetensors_where(path, |_| true)
}

/// Like [`read_safetensors`] but decodes only tensors whose name passes `keep`.
pub fn read_safetensors_where(
    path: &Path,
    keep: impl Fn(&str) -> bool,
) -> Result<(TensorMap, BTreeMap<String, String>)> {
    let buffer = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let st = SafeTensors::deserialize(&buffer).map_err(|e| corrupt(path, e))?;
    let (_, header) = SafeTensors::read_metadata(&buffer).map_err(|e| corrupt(path, e))?;
    let metadata = header
        .metadata()
        .as_ref()
        .map(|m| m.iter().map(|(k, v)| (k.clone(), v.clone())).collect())
        .unwrap_or_default();
    let mut tensors = TensorMap::new();
    for (name, view) in st.iter().filter(|(n, _)| keep(n)) {
        let values = decode(view.dtype(), view.data()).ok_or_else(|| Error::CorruptArchive {
            path: path.to_path_buf(),
            reason: format!("tensor {name}: unsupported dtype {:?}", view.dtype()),
        })?;
        let array = ArrayD::from_shape_vec(IxDyn(view.shape()), values).map_err(|e| corrupt(path, e))?;
        tensors.insert(name.to_string(), array);
    }
    Ok((tensors, metadata))
}

/// SHA-256 over every tensor's name, shape and little-endian f32 bytes,
/// in name order. Hex encoded.
pub fn tensor_hash(tensors: &TensorMap) -> String {
    let mut h = Sha256::new();
    for (name, t) in tensors {
        h.update((name.len() as u64).to_le_bytes());
        h.update(name.as_bytes());
        h.update((t.ndim() as u64).to_le_bytes());
        for &d in t.shape() {
            h.update((d as u64).to_le_bytes());
        }
        h.update(le_bytes(t));
    }
    hex::encode(h.finalize())
}

fn le_bytes(t: &ArrayD<f32>) -> Vec<u8> {
    t.iter().flat_map(|v| v.to_le_bytes()).collect()
}

fn corrupt(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::CorruptArchive {
        path: path.to_path_buf(),
        reason: e.to_string(),
    }
}

fn decode(dtype: Dtype, data: &[u8]) -> Option<Vec<f32>> {
    Some(match dtype {
        Dtype::F32 => data.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect(),
        Dtype::F64 => data
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()) as f32)
            .collect(),
        Dtype::BF16 => data
            .chunks_exact(2)
            .map(|c| f32::from_bits((u16::from_le_bytes([c[0], c[1]]) as u32) << 16))
            .collect(),
        Dtype::F16 => data
            .chunks_exact(2)
            .map(|c| f16_to_f32(u16::from_le_bytes([c[0], c[1]])))
            .collect(),
        _ => return None,
    })
}

fn f16_to_f32(h: u16) -> f32 {
    let sign = ((h >> 15) as u32) << 31;
    let exp = ((h >> 10) & 0x1f) as u32;
    let frac = (h & 0x3ff) as u32;
    let bits = match (exp, frac) {
        (0, 0) => sign,
        (0, f) => {
            // Subnormal: renormalize.
            let shift = f.leading_zeros() - 21;
            sign | ((113 - shift) << 23) | (((f << shift) & 0x3ff) << 13)
        }
        (31, 0) => sign | 0x7f80_0000,
        (31, f) => sign | 0x7f80_0000 | (f << 13),
        (e, f) => sign | ((e + 112) << 23) | (f << 13),
    };
    f32::from_bits(bits)
}
