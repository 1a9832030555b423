//! Portable matrix files.
//!
//! A `.bin` file is an 8-byte little-endian column count followed by the
//! row-major entries as little-endian `f64`. The row count is implied by the
//! file length. A JSON sidecar carries the generating [`ReservoirSpec`].

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ReservoirMatrices, ReservoirSpec};
use crate::error::{Error, Result};
use crate::numerics::Matrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixSidecar {
    pub format: String,
    pub spec: ReservoirSpec,
    pub rho: f64,
    pub disconnected_pair: (usize, usize),
    pub w_file: String,
    pub w_shape: (usize, usize),
    pub v_file: String,
    pub v_shape: (usize, usize),
}

pub const FORMAT_TAG: &str = "u64le-cols+f64le-row-major";

pub fn write_matrix_bin(path: &Path, m: &Matrix) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    out.write_all(&(m.cols() as u64).to_le_bytes())?;
    for x in m.data() {
        out.write_all(&x.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_matrix_bin(path: &Path) -> Result<Matrix> {
    let bytes = fs::read(path)?;
    let format = |offset: usize, message: String| Error::Format {
        path: path.to_path_buf(),
        offset: offset as u64,
        message,
    };
    if bytes.len() < 8 {
        return Err(format(bytes.len(), "missing column-count header".into()));
    }
    let cols = u64::from_le_bytes(bytes[..8].try_into().expect("8 bytes")) as usize;
    let body = &bytes[8..];
    if body.len() % 8 != 0 {
        return Err(format(bytes.len(), "payload is not a whole number of f64 values".into()));
    }
    let count = body.len() / 8;
    if cols == 0 {
        if count != 0 {
            return Err(format(0, "zero columns but non-empty payload".into()));
        }
        return Matrix::from_vec(0, 0, Vec::new());
    }
    if count % cols != 0 {
        return Err(format(bytes.len(), format!("{count} values do not fill rows of {cols} columns")));
    }
    let data = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Matrix::from_vec(count / cols, cols, data)
}

/// Writes `W.bin`, `V.bin` and `reservoir.json` into `dir`.
pub fn export_matrices(dir: &Path, spec: &ReservoirSpec, m: &ReservoirMatrices) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    write_matrix_bin(&dir.join("W.bin"), &m.w)?;
    write_matrix_bin(&dir.join("V.bin"), &m.v)?;
    let sidecar = MatrixSidecar {
        format: FORMAT_TAG.into(),
        spec: spec.clone(),
        rho: m.rho,
        disconnected_pair: m.disconnected_pair,
        w_file: "W.bin".into(),
        w_shape: m.w.shape(),
        v_file: "V.bin".into(),
        v_shape: m.v.shape(),
    };
    let path = dir.join("reservoir.json");
    fs::write(&path, serde_json::to_string_pretty(&sidecar)?)?;
    Ok(path)
}
