//! Images, patch sequences, dataset readers and procedural corruptions.
//!
//! Pixels are stored as `f32` in `[0, 1]`, laid out `H × W × C` per image.
//! Patches are scanned row-major over the patch grid and each patch is
//! flattened in `(row, col, channel)` order.

mod corrupt;
mod io;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use corrupt::{corrupt, corrupt_batch, severity_table, Corruption, CorruptionType, SeverityTable, CORRUPTION_TABLE_JSON};
pub use io::{load_cifar100_bin, load_cifar10_bin, load_mnist_dir, load_mnist_idx, mnist_paths};

/// One image, `height × width × channels`, values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Image {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

impl Image {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != height * width * channels {
            return Err(Error::Shape(format!(
                "{}x{}x{} image needs {} values, got {}",
                height,
                width,
                channels,
                height * width * channels,
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f32) -> Self {
        Self {
            height,
            width,
            channels,
            data: vec![value; height * width * channels],
        }
    }

    #[inline]
    pub fn at(&self, y: usize, x: usize, ch: usize) -> f32 {
        self.data[(y * self.width + x) * self.channels + ch]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// A labelled set of same-shaped images.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageBatch {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub classes: usize,
    pixels: Vec<f32>,
    labels: Vec<u8>,
}

impl ImageBatch {
    pub fn new(
        height: usize,
        width: usize,
        channels: usize,
        classes: usize,
        pixels: Vec<f32>,
        labels: Vec<u8>,
    ) -> Result<Self> {
        let size = height * width * channels;
        if size == 0 {
            return Err(Error::Shape("images must have a non-zero size".into()));
        }
        if pixels.len() != size * labels.len() {
            return Err(Error::Shape(format!(
                "{} labels need {} pixel values, got {}",
                labels.len(),
                size * labels.len(),
                pixels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l as usize >= classes) {
            return Err(Error::Input(format!("label {bad} out of range for {classes} classes")));
        }
        Ok(Self {
            height,
            width,
            channels,
            classes,
            pixels,
            labels,
        })
    }

    pub fn from_images(images: &[Image], labels: Vec<u8>, classes: usize) -> Result<Self> {
        let first = images.first().ok_or_else(|| Error::Input("no images".into()))?;
        let (h, w, c) = (first.height, first.width, first.channels);
        let mut pixels = Vec::with_capacity(images.len() * first.len());
        for img in images {
            if (img.height, img.width, img.channels) != (h, w, c) {
                return Err(Error::Shape("images in a batch must share one shape".into()));
            }
            pixels.extend_from_slice(&img.data);
        }
        Self::new(h, w, c, classes, pixels, labels)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image_size(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn pixels(&self, i: usize) -> &[f32] {
        let s = self.image_size();
        &self.pixels[i * s..(i + 1) * s]
    }

    pub fn image(&self, i: usize) -> Image {
        Image {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data: self.pixels(i).to_vec(),
        }
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i] as usize
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn subset(&self, indices: &[usize]) -> ImageBatch {
        let s = self.image_size();
        let mut pixels = Vec::with_capacity(indices.len() * s);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            pixels.extend_from_slice(self.pixels(i));
            labels.push(self.labels[i]);
        }
        ImageBatch {
            height: self.height,
            width: self.width,
            channels: self.channels,
            classes: self.classes,
            pixels,
            labels,
        }
    }

    /// The first `n` images (all of them when `n` exceeds the length).
    pub fn take(&self, n: usize) -> ImageBatch {
        let n = n.min(self.len());
        self.subset(&(0..n).collect::<Vec<_>>())
    }
}

/// Geometry of the patch grid for a given image shape and patch side.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchGrid {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub patch: usize,
}

impl PatchGrid {
    pub fn new(height: usize, width: usize, channels: usize, patch: usize) -> Result<Self> {
        if patch == 0 || height % patch != 0 || width % patch != 0 {
            return Err(Error::Shape(format!(
                "patch side {patch} must divide the {height}x{width} image"
            )));
        }
        Ok(Self {
            height,
            width,
            channels,
            patch,
        })
    }

    pub fn for_batch(batch: &ImageBatch, patch: usize) -> Result<Self> {
        Self::new(batch.height, batch.width, batch.channels, patch)
    }

    /// Sequence length `T = HW / P²`.
    pub fn steps(&self) -> usize {
        (self.height / self.patch) * (self.width / self.patch)
    }

    /// Flattened patch length `P²·C`.
    pub fn patch_dim(&self) -> usize {
        self.patch * self.patch * self.channels
    }

    /// Writes the `T × P²C` patch rows of `pixels` into `out`.
    pub fn extract_into(&self, pixels: &[f32], out: &mut [f64]) {
        let (p, c, w) = (self.patch, self.channels, self.width);
        let per_row = self.width / p;
        let dim = self.patch_dim();
        debug_assert_eq!(pixels.len(), self.height * w * c);
        debug_assert_eq!(out.len(), self.steps() * dim);
        for t in 0..self.steps() {
            let (gy, gx) = (t / per_row, t % per_row);
            let row = &mut out[t * dim..(t + 1) * dim];
            for dy in 0..p {
                let src = ((gy * p + dy) * w + gx * p) * c;
                for (k, v) in pixels[src..src + p * c].iter().enumerate() {
                    row[dy * p * c + k] = *v as f64;
                }
            }
        }
    }

    /// Inverse of [`PatchGrid::extract_into`].
    pub fn reassemble(&self, patches: &[f64]) -> Vec<f32> {
        let (p, c, w) = (self.patch, self.channels, self.width);
        let per_row = self.width / p;
        let dim = self.patch_dim();
        let mut pixels = vec![0.0f32; self.height * w * c];
        for t in 0..self.steps() {
            let (gy, gx) = (t / per_row, t % per_row);
            for dy in 0..p {
                let dst = ((gy * p + dy) * w + gx * p) * c;
                for k in 0..p * c {
                    pixels[dst + k] = patches[t * dim + dy * p * c + k] as f32;
                }
            }
        }
        pixels
    }
}

/// An image flattened into `steps` patch vectors of length `patch_dim`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatchSequence {
    pub steps: usize,
    pub patch_dim: usize,
    pub data: Vec<f64>,
}

impl PatchSequence {
    pub fn step(&self, t: usize) -> &[f64] {
        &self.data[t * self.patch_dim..(t + 1) * self.patch_dim]
    }
}

pub fn extract_patches(img: &Image, patch: usize) -> Result<PatchSequence> {
    let grid = PatchGrid::new(img.height, img.width, img.channels, patch)?;
    let mut data = vec![0.0; grid.steps() * grid.patch_dim()];
    grid.extract_into(&img.data, &mut data);
    Ok(PatchSequence {
        steps: grid.steps(),
        patch_dim: grid.patch_dim(),
        data,
    })
}

pub fn reassemble_patches(seq: &PatchSequence, height: usize, width: usize, channels: usize, patch: usize) -> Result<Image> {
    let grid = PatchGrid::new(height, width, channels, patch)?;
    if seq.steps != grid.steps() || seq.patch_dim != grid.patch_dim() {
        return Err(Error::Shape(format!(
            "{} patches of dim {} do not tile a {height}x{width}x{channels} image with side {patch}",
            seq.steps, seq.patch_dim
        )));
    }
    Image::new(height, width, channels, grid.reassemble(&seq.data))
}
