//! Procedural image corruptions at five severity levels.
//!
//! Per-severity parameters live in `docs/corruptions.json`, which is compiled
//! into the crate and parsed on first use.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use super::{Image, ImageBatch};
use crate::error::{Error, Result};
use crate::numerics::{gaussian, RngStream};

pub const CORRUPTION_TABLE_JSON: &str = include_str!("../../docs/corruptions.json");

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorruptionType {
    GaussianNoise,
    ShotNoise,
    DefocusBlur,
    Contrast,
}

impl CorruptionType {
    pub const ALL: [CorruptionType; 4] = [
        CorruptionType::GaussianNoise,
        CorruptionType::ShotNoise,
        CorruptionType::DefocusBlur,
        CorruptionType::Contrast,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CorruptionType::GaussianNoise => "gaussian_noise",
            CorruptionType::ShotNoise => "shot_noise",
            CorruptionType::DefocusBlur => "defocus_blur",
            CorruptionType::Contrast => "contrast",
        }
    }
}

impl fmt::Display for CorruptionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CorruptionType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CorruptionType::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Parameter(format!("unknown corruption kind {s:?}")))
    }
}

/// A corruption kind at a severity in `1..=5`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Corruption {
    pub kind: CorruptionType,
    pub severity: u8,
}

impl Corruption {
    pub fn new(kind: CorruptionType, severity: u8) -> Result<Self> {
        if !(1..=5).contains(&severity) {
            return Err(Error::Parameter(format!("severity must be 1..=5, got {severity}")));
        }
        Ok(Self { kind, severity })
    }

    pub fn parse(kind: &str, severity: u8) -> Result<Self> {
        Self::new(kind.parse()?, severity)
    }

    pub fn parameter(&self) -> f64 {
        severity_table()[&self.kind].values[self.severity as usize - 1]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeverityTable {
    pub parameter: String,
    pub description: String,
    pub values: [f64; 5],
}

pub fn severity_table() -> &'static BTreeMap<CorruptionType, SeverityTable> {
    static TABLE: OnceLock<BTreeMap<CorruptionType, SeverityTable>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let table: BTreeMap<CorruptionType, SeverityTable> =
            serde_json::from_str(CORRUPTION_TABLE_JSON).expect("bundled corruption table is valid JSON");
        assert!(
            CorruptionType::ALL.iter().all(|k| table.contains_key(k)),
            "bundled corruption table misses a kind"
        );
        table
    })
}

pub fn corrupt(img: &Image, c: Corruption, stream: &RngStream) -> Result<Image> {
    let mut data = img.data.clone();
    apply(&mut data, img.height, img.width, img.channels, c, stream)?;
    Ok(Image { data, ..img.clone() })
}

/// Corrupts every image of a batch; image `i` uses `stream.indexed(i)`.
pub fn corrupt_batch(batch: &ImageBatch, c: Corruption, stream: &RngStream) -> Result<ImageBatch> {
    let mut pixels = Vec::with_capacity(batch.len() * batch.image_size());
    for i in 0..batch.len() {
        let mut data = batch.pixels(i).to_vec();
        apply(&mut data, batch.height, batch.width, batch.channels, c, &stream.indexed(i as u64))?;
        pixels.extend_from_slice(&data);
    }
    ImageBatch::new(
        batch.height,
        batch.width,
        batch.channels,
        batch.classes,
        pixels,
        batch.labels().to_vec(),
    )
}

fn apply(data: &mut [f32], h: usize, w: usize, ch: usize, c: Corruption, stream: &RngStream) -> Result<()> {
    let c = Corruption::new(c.kind, c.severity)?;
    let p = c.parameter();
    match c.kind {
        CorruptionType::GaussianNoise => {
            let mut rng = stream.rng();
            for x in data.iter_mut() {
                *x = (*x as f64 + gaussian(&mut rng, 0.0, p)) as f32;
            }
        }
        CorruptionType::ShotNoise => {
            let mut rng = stream.rng();
            for x in data.iter_mut() {
                let rate = (*x as f64).max(0.0) * p;
                *x = if rate > 0.0 {
                    let d = Poisson::new(rate).map_err(|e| Error::Parameter(e.to_string()))?;
                    (d.sample(&mut rng) / p) as f32
                } else {
                    0.0
                };
            }
        }
        CorruptionType::DefocusBlur => {
            let blurred = disk_blur(data, h, w, ch, p);
            data.copy_from_slice(&blurred);
        }
        CorruptionType::Contrast => contrast(data, p),
    }
    for x in data.iter_mut() {
        *x = x.clamp(0.0, 1.0);
    }
    Ok(())
}

fn contrast(data: &mut [f32], blend: f64) {
    if data.is_empty() {
        return;
    }
    let mean = data.iter().map(|&x| x as f64).sum::<f64>() / data.len() as f64;
    for x in data.iter_mut() {
        *x = ((1.0 - blend) * *x as f64 + blend * mean) as f32;
    }
}

fn disk_blur(data: &[f32], h: usize, w: usize, ch: usize, radius: f64) -> Vec<f32> {
    let r = radius.floor() as isize;
    let taps: Vec<(isize, isize)> = (-r..=r)
        .flat_map(|dy| (-r..=r).map(move |dx| (dy, dx)))
        .filter(|&(dy, dx)| ((dy * dy + dx * dx) as f64) <= radius * radius)
        .collect();
    let mut out = vec![0.0f32; data.len()];
    for y in 0..h as isize {
        for x in 0..w as isize {
            for c in 0..ch {
                let (mut sum, mut count) = (0.0f64, 0usize);
                for &(dy, dx) in &taps {
                    let (yy, xx) = (y + dy, x + dx);
                    if yy >= 0 && yy < h as isize && xx >= 0 && xx < w as isize {
                        sum += data[(yy as usize * w + xx as usize) * ch + c] as f64;
                        count += 1;
                    }
                }
                out[(y as usize * w + x as usize) * ch + c] = (sum / count as f64) as f32;
            }
        }
    }
    out
}
