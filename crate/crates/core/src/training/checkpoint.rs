//! Binary checkpoints: magic, little-endian u64 header length, JSON header,
//! then every tensor as consecutive little-endian f64 values.
//!
//! Reservoir and inter-layer matrices are not stored; they are rebuilt from
//! the seeds in the config, and the header records their spectral radii so a
//! rebuild that drifts is caught.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::model::{ModelConfig, ViRModel};
use super::tail::Pooling;
use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::patches::PatchGrid;

const MAGIC: &[u8; 8] = b"VIRCKPT\x01";

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    grid: PatchGrid,
    classes: usize,
    pooling: Pooling,
    shape_hash: String,
    reservoir_rho: Vec<f64>,
    tensors: Vec<TensorEntry>,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    len: usize,
    shape: (usize, usize),
}

/// SHA-256 over the architecture-defining fields, hex encoded.
pub fn shape_hash(config: &ModelConfig, grid: &PatchGrid, classes: usize) -> String {
    let text = serde_json::to_string(&(config, grid, classes)).expect("config serializes");
    let digest = Sha256::digest(text.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn ridge_name(i: usize) -> String {
    format!("ridge{i}")
}

pub fn write_checkpoint(path: &Path, model: &ViRModel) -> Result<()> {
    let mut entries = Vec::new();
    let mut payload: Vec<&[f64]> = Vec::new();
    for (name, t) in model.tail.tensors() {
        entries.push(TensorEntry {
            name,
            len: t.len(),
            shape: (t.len(), 1),
        });
        payload.push(t);
    }
    for (i, nm) in model.tail.norms.iter().enumerate() {
        for (suffix, t) in [("shift", &nm.shift), ("scale", &nm.scale)] {
            entries.push(TensorEntry {
                name: format!("norm{i}.{suffix}"),
                len: t.len(),
                shape: (t.len(), 1),
            });
            payload.push(t);
        }
    }
    for (i, w) in model.ridge.iter().flatten().enumerate() {
        entries.push(TensorEntry {
            name: ridge_name(i),
            len: w.data().len(),
            shape: w.shape(),
        });
        payload.push(w.data());
    }
    let header = Header {
        config: model.config.clone(),
        grid: model.grid,
        classes: model.classes,
        pooling: model.pooling,
        shape_hash: shape_hash(&model.config, &model.grid, model.classes),
        reservoir_rho: model.deep.layers.iter().map(|m| m.rho).collect(),
        tensors: entries,
    };
    let json = serde_json::to_vec(&header)?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    for t in payload {
        for v in t {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn format_err(path: &Path, offset: u64, message: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        offset,
        message: message.into(),
    }
}

/// Rebuilds the model described by the header and loads its tensors.
///
/// When `expected` is given, the stored architecture must match it exactly;
/// otherwise [`Error::CheckpointMismatch`] is returned.
pub fn read_checkpoint(path: &Path, expected: Option<&ModelConfig>) -> Result<ViRModel> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|_| format_err(path, 0, "file too short for magic"))?;
    if &magic != MAGIC {
        return Err(format_err(path, 0, "not a checkpoint file"));
    }
    let mut len = [0u8; 8];
    r.read_exact(&mut len).map_err(|_| format_err(path, 8, "missing header length"))?;
    let len = u64::from_le_bytes(len);
    let file_len = std::fs::metadata(path)?.len();
    if len > file_len.saturating_sub(16) {
        return Err(format_err(path, 8, format!("header length {len} exceeds file size")));
    }
    let mut json = vec![0u8; len as usize];
    r.read_exact(&mut json).map_err(|_| format_err(path, 16, "truncated header"))?;
    let header: Header = serde_json::from_slice(&json).map_err(|e| format_err(path, 16, e.to_string()))?;

    if header.shape_hash != shape_hash(&header.config, &header.grid, header.classes) {
        return Err(Error::CheckpointMismatch("header hash does not match its own config".into()));
    }
    if let Some(cfg) = expected {
        if cfg != &header.config {
            return Err(Error::CheckpointMismatch(format!(
                "checkpoint was written for a different model (hash {})",
                header.shape_hash
            )));
        }
    }

    let g = header.grid;
    let mut model = ViRModel::new(header.config, g.height, g.width, g.channels, header.classes)
        .map_err(|e| Error::CheckpointMismatch(format!("cannot rebuild model: {e}")))?;
    if model.grid != g {
        return Err(Error::CheckpointMismatch("patch grid differs from rebuilt model".into()));
    }
    model.pooling = header.pooling;
    let rebuilt: Vec<f64> = model.deep.layers.iter().map(|m| m.rho).collect();
    if rebuilt.len() != header.reservoir_rho.len()
        || rebuilt.iter().zip(&header.reservoir_rho).any(|(a, b)| (a - b).abs() > 1e-9 * b.abs().max(1.0))
    {
        return Err(Error::CheckpointMismatch("rebuilt reservoirs differ from the stored ones".into()));
    }

    let mut offset = 16 + len;
    let mut read_tensor = |entry: &TensorEntry, out: &mut [f64]| -> Result<()> {
        if entry.len != out.len() {
            return Err(Error::CheckpointMismatch(format!(
                "tensor {} has {} values, model expects {}",
                entry.name,
                entry.len,
                out.len()
            )));
        }
        let mut buf = [0u8; 8];
        for v in out.iter_mut() {
            r.read_exact(&mut buf).map_err(|_| format_err(path, offset, format!("truncated tensor {}", entry.name)))?;
            *v = f64::from_le_bytes(buf);
            offset += 8;
        }
        Ok(())
    };

    let n_tail = model.tail.tensors().len();
    let n_norm = 2 * model.tail.norms.len();
    if header.tensors.len() < n_tail + n_norm {
        return Err(Error::CheckpointMismatch(format!(
            "{} tensors stored, model has {}",
            header.tensors.len(),
            n_tail + n_norm
        )));
    }
    for (entry, (name, slot)) in header.tensors.iter().zip(model.tail.tensors_mut()) {
        if entry.name != name {
            return Err(Error::CheckpointMismatch(format!("expected tensor {name}, found {}", entry.name)));
        }
        read_tensor(entry, slot)?;
    }
    let norm_entries = &header.tensors[n_tail..n_tail + n_norm];
    for (i, nm) in model.tail.norms.iter_mut().enumerate() {
        for (j, (suffix, slot)) in [("shift", &mut nm.shift), ("scale", &mut nm.scale)].into_iter().enumerate() {
            let entry = &norm_entries[2 * i + j];
            let name = format!("norm{i}.{suffix}");
            if entry.name != name {
                return Err(Error::CheckpointMismatch(format!("expected tensor {name}, found {}", entry.name)));
            }
            read_tensor(entry, slot)?;
        }
    }
    let extra = &header.tensors[n_tail + n_norm..];
    if !extra.is_empty() {
        if extra.len() != model.deep.feature_dims().len() {
            return Err(Error::CheckpointMismatch(format!(
                "{} ridge readouts for {} branches",
                extra.len(),
                model.deep.feature_dims().len()
            )));
        }
        let mut ridge = Vec::new();
        for (i, entry) in extra.iter().enumerate() {
            if entry.name != ridge_name(i) {
                return Err(Error::CheckpointMismatch(format!("unexpected tensor {}", entry.name)));
            }
            let mut m = Matrix::zeros(entry.shape.0, entry.shape.1);
            read_tensor(entry, m.data_mut())?;
            ridge.push(m);
        }
        model.ridge = Some(ridge);
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reservoir::DeepMode;
    use crate::topology::ReservoirSpec;

    fn small() -> ModelConfig {
        ModelConfig {
            reservoir: ReservoirSpec {
                n: 12,
                jump_size: 5,
                input_dim: 6,
                seed: 9,
                ..ReservoirSpec::default()
            },
            mode: DeepMode::Parallel,
            layers: 2,
            patch: 2,
            ff_dim: 8,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn roundtrip_preserves_every_tensor() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.ckpt");
        let mut model = ViRModel::new(small(), 4, 4, 1, 3).unwrap();
        model.tail.head.bias[1] = 0.25;
        model.tail.norms[1].scale[3] = 7.0;
        model.ridge = Some(vec![Matrix::filled(13 * 2 + 6 * 2 + 1, 3, 0.5), Matrix::filled(39, 3, -1.0)]);
        model.pooling = Pooling::LastStep;
        write_checkpoint(&p, &model).unwrap();
        let back = read_checkpoint(&p, Some(&small())).unwrap();
        assert_eq!(back, model);
    }

    #[test]
    fn different_config_is_a_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.ckpt");
        write_checkpoint(&p, &ViRModel::new(small(), 4, 4, 1, 3).unwrap()).unwrap();
        let mut other = small();
        other.ff_dim = 9;
        assert!(matches!(read_checkpoint(&p, Some(&other)), Err(Error::CheckpointMismatch(_))));
    }

    #[test]
    fn garbage_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("junk");
        std::fs::write(&p, b"hello world, definitely not a checkpoint").unwrap();
        assert!(matches!(read_checkpoint(&p, None), Err(Error::Format { offset: 0, .. })));
    }

    #[test]
    fn truncated_payload_reports_offset() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.ckpt");
        write_checkpoint(&p, &ViRModel::new(small(), 4, 4, 1, 3).unwrap()).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        std::fs::write(&p, &bytes[..bytes.len() - 4]).unwrap();
        match read_checkpoint(&p, None) {
            Err(Error::Format { offset, .. }) => assert!(offset > 16),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn hash_depends_on_config() {
        let g = PatchGrid::new(4, 4, 1, 2).unwrap();
        let a = shape_hash(&small(), &g, 3);
        assert_eq!(a.len(), 64);
        assert_eq!(a, shape_hash(&small(), &g, 3));
        assert_ne!(a, shape_hash(&small(), &g, 4));
    }
}
