use std::path::Path;

use crate::codec::write_file;
use crate::error::{Error, Result};
use crate::memory::Label;

use super::{DenseDataset, Sample};

const IDX_U8: u8 = 0x08;

/// Decoded unsigned-byte IDX payload.
#[derive(Debug, Clone, PartialEq)]
pub struct IdxArray {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

/// Parses an unsigned-byte IDX container: `0x00 0x00 0x08 rank`, `rank`
/// big-endian `u32` dimensions, then the payload.
pub fn read_idx(bytes: &[u8]) -> Result<IdxArray> {
    if bytes.len() < 4 {
        return Err(Error::Truncated {
            expected: 4,
            missing: (4 - bytes.len()) as u64,
        });
    }
    if bytes[0] != 0 || bytes[1] != 0 || bytes[2] != IDX_U8 {
        return Err(Error::Format(format!(
            "bad IDX magic {:02x}{:02x}{:02x}{:02x}",
            bytes[0], bytes[1], bytes[2], bytes[3]
        )));
    }
    let rank = bytes[3] as usize;
    if rank == 0 {
        return Err(Error::Format("IDX rank must be at least 1".into()));
    }
    let header = 4 + 4 * rank;
    if bytes.len() < header {
        return Err(Error::Truncated {
            expected: header as u64,
            missing: (header - bytes.len()) as u64,
        });
    }
    let dims: Vec<usize> = bytes[4..header]
        .chunks_exact(4)
        .map(|c| u32::from_be_bytes([c[0], c[1], c[2], c[3]]) as usize)
        .collect();
    let count = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .and_then(|c| c.checked_add(header))
        .ok_or_else(|| Error::Format(format!("IDX dimensions {dims:?} overflow")))?;
    if bytes.len() < count {
        return Err(Error::Truncated {
            expected: count as u64,
            missing: (count - bytes.len()) as u64,
        });
    }
    if bytes.len() > count {
        return Err(Error::Format(format!(
            "{} trailing bytes after IDX payload",
            bytes.len() - count
        )));
    }
    Ok(IdxArray {
        dims,
        data: bytes[header..].to_vec(),
    })
}

/// Loads an image file (rank ≥ 2) and an optional rank-1 label file.
/// Without labels every sample gets label 0.
pub fn load_idx(images: &Path, labels: Option<&Path>) -> Result<DenseDataset> {
    let img = read_idx(&std::fs::read(images)?)?;
    if img.dims.len() < 2 {
        return Err(Error::Format(format!(
            "image IDX needs rank ≥ 2, got {}",
            img.dims.len()
        )));
    }
    let count = img.dims[0];
    let per: usize = img.dims[1..].iter().product();
    let tags: Vec<Label> = match labels {
        Some(p) => {
            let lab = read_idx(&std::fs::read(p)?)?;
            if lab.dims.len() != 1 {
                return Err(Error::Format("label IDX must have rank 1".into()));
            }
            if lab.dims[0] != count {
                return Err(Error::Shape {
                    expected: count,
                    actual: lab.dims[0],
                    context: "IDX label count",
                });
            }
            lab.data.iter().map(|&b| b as Label).collect()
        }
        None => vec![0; count],
    };
    let mut declared: Vec<Label> = tags.clone();
    declared.sort_unstable();
    declared.dedup();
    let samples = img
        .data
        .chunks_exact(per.max(1))
        .take(count)
        .zip(&tags)
        .map(|(px, &label)| Sample {
            values: px.iter().map(|&b| b as f64 / 255.0).collect(),
            label,
        })
        .collect();
    let name = images
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    DenseDataset::new(&name, "idx", declared, samples)
}

fn encode_idx(dims: &[usize], data: &[u8]) -> Vec<u8> {
    let mut out = vec![0, 0, IDX_U8, dims.len() as u8];
    for &d in dims {
        out.extend_from_slice(&(d as u32).to_be_bytes());
    }
    out.extend_from_slice(data);
    out
}

/// Writes samples as a `count × side × side` byte image file.
/// Values are quantized with `round(v · 255)`.
pub fn write_idx_images(path: &Path, dataset: &DenseDataset) -> Result<()> {
    let n = dataset.feature_dim();
    let side = (n as f64).sqrt().round() as usize;
    let dims = if side * side == n {
        vec![dataset.len(), side, side]
    } else {
        vec![dataset.len(), n]
    };
    let mut data = Vec::with_capacity(dataset.len() * n);
    for s in &dataset.samples {
        if s.values.len() != n {
            return Err(Error::Shape {
                expected: n,
                actual: s.values.len(),
                context: "IDX image sample",
            });
        }
        data.extend(s.values.iter().map(|v| (v * 255.0).round() as u8));
    }
    write_file(path, &encode_idx(&dims, &data))
}

pub fn write_idx_labels(path: &Path, dataset: &DenseDataset) -> Result<()> {
    let mut data = Vec::with_capacity(dataset.len());
    for s in &dataset.samples {
        let b = u8::try_from(s.label)
            .map_err(|_| Error::InvalidArgument(format!("label {} exceeds one byte", s.label)))?;
        data.push(b);
    }
    write_file(path, &encode_idx(&[dataset.len()], &data))
}
