//! MNIST IDX and CIFAR binary readers.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;

use super::ImageBatch;
use crate::error::{Error, Result};

const IDX_IMAGES: u32 = 0x0000_0803;
const IDX_LABELS: u32 = 0x0000_0801;
const CIFAR_PIXELS: usize = 32 * 32 * 3;

fn format_error(path: &Path, offset: usize, message: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        offset: offset as u64,
        message: message.into(),
    }
}

/// File contents, transparently gunzipped when the gzip magic is present.
fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let raw = fs::read(path)?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| format_error(path, 0, format!("gzip stream: {e}")))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn be_u32(bytes: &[u8], offset: usize, path: &Path) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes(b.try_into().expect("4 bytes")))
        .ok_or_else(|| format_error(path, bytes.len(), "file ends inside the header"))
}

fn idx_payload<'a>(bytes: &'a [u8], path: &Path, magic: u32, dims: usize) -> Result<(Vec<usize>, &'a [u8])> {
    let found = be_u32(bytes, 0, path)?;
    if found != magic {
        return Err(format_error(path, 0, format!("magic {found:#010x}, expected {magic:#010x}")));
    }
    let shape = (0..dims)
        .map(|d| be_u32(bytes, 4 + 4 * d, path).map(|v| v as usize))
        .collect::<Result<Vec<_>>>()?;
    let start = 4 + 4 * dims;
    let expected: usize = shape.iter().product();
    let body = &bytes[start..];
    if body.len() < expected {
        return Err(format_error(
            path,
            bytes.len(),
            format!("truncated: header declares {expected} payload bytes, found {}", body.len()),
        ));
    }
    if body.len() > expected {
        return Err(format_error(path, start + expected, "trailing bytes after payload"));
    }
    Ok((shape, body))
}

/// Reads an IDX image file and its label file (each optionally gzipped).
pub fn load_mnist_idx(images_path: &Path, labels_path: &Path) -> Result<ImageBatch> {
    let images = read_maybe_gz(images_path)?;
    let labels = read_maybe_gz(labels_path)?;
    let (ishape, ibody) = idx_payload(&images, images_path, IDX_IMAGES, 3)?;
    let (lshape, lbody) = idx_payload(&labels, labels_path, IDX_LABELS, 1)?;
    if ishape[0] != lshape[0] {
        return Err(format_error(
            labels_path,
            4,
            format!("{} labels for {} images", lshape[0], ishape[0]),
        ));
    }
    if let Some(pos) = lbody.iter().position(|&l| l > 9) {
        return Err(format_error(labels_path, 8 + pos, format!("label {} out of range", lbody[pos])));
    }
    let pixels = ibody.iter().map(|&b| b as f32 / 255.0).collect();
    ImageBatch::new(ishape[1], ishape[2], 1, 10, pixels, lbody.to_vec())
}

/// Train and test file paths inside an MNIST directory, preferring
/// uncompressed files and falling back to `.gz`.
pub fn mnist_paths(dir: &Path, train: bool) -> Result<(PathBuf, PathBuf)> {
    let prefix = if train { "train" } else { "t10k" };
    let pick = |stem: String| -> Result<PathBuf> {
        for name in [stem.clone(), format!("{stem}.gz")] {
            let p = dir.join(&name);
            if p.is_file() {
                return Ok(p);
            }
        }
        Err(Error::DatasetMissing(format!("{} (or .gz) not found", dir.join(stem).display())))
    };
    Ok((
        pick(format!("{prefix}-images-idx3-ubyte"))?,
        pick(format!("{prefix}-labels-idx1-ubyte"))?,
    ))
}

pub fn load_mnist_dir(dir: &Path, train: bool) -> Result<ImageBatch> {
    let (images, labels) = mnist_paths(dir, train)?;
    load_mnist_idx(&images, &labels)
}

fn load_cifar(paths: &[PathBuf], label_bytes: usize, classes: usize) -> Result<ImageBatch> {
    let record = label_bytes + CIFAR_PIXELS;
    let mut pixels = Vec::new();
    let mut labels = Vec::new();
    for path in paths {
        let bytes = fs::read(path)?;
        if bytes.is_empty() || bytes.len() % record != 0 {
            return Err(format_error(
                path,
                bytes.len() - bytes.len() % record,
                format!("length {} is not a multiple of the {record}-byte record", bytes.len()),
            ));
        }
        for (r, rec) in bytes.chunks_exact(record).enumerate() {
            let label = rec[label_bytes - 1];
            if label as usize >= classes {
                return Err(format_error(path, r * record + label_bytes - 1, format!("label {label} out of range")));
            }
            labels.push(label);
            let planes = &rec[label_bytes..];
            // channel-planar on disk, interleaved in memory
            for i in 0..32 * 32 {
                for c in 0..3 {
                    pixels.push(planes[c * 1024 + i] as f32 / 255.0);
                }
            }
        }
    }
    ImageBatch::new(32, 32, 3, classes, pixels, labels)
}

/// CIFAR-10 binary batches: one label byte and 3072 planar pixel bytes per record.
pub fn load_cifar10_bin(paths: &[PathBuf]) -> Result<ImageBatch> {
    load_cifar(paths, 1, 10)
}

/// CIFAR-100 binary batches: coarse and fine label bytes, then pixels. Fine labels are used.
pub fn load_cifar100_bin(paths: &[PathBuf]) -> Result<ImageBatch> {
    load_cifar(paths, 2, 100)
}
