//! Corruption error over the severity ladder.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::RngStream;
use crate::patches::{corrupt_batch, Corruption, CorruptionType, ImageBatch};
use crate::training::ViRModel;

pub const SEVERITIES: usize = 5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorruptionRow {
    pub kind: CorruptionType,
    /// Top-1 error at severities 1 to 5.
    pub errors: Vec<f64>,
    /// Summed severity errors minus the clean error.
    pub ce: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorruptionReport {
    pub clean_error: f64,
    pub rows: Vec<CorruptionRow>,
    /// Mean of the per-type scores.
    pub mean_ce: f64,
}

/// `CE_c = Σ_s E_{s,c} − E_clean` per type and their mean.
pub fn corruption_error(clean_error: f64, errors: &[(CorruptionType, Vec<f64>)]) -> Result<CorruptionReport> {
    if errors.is_empty() {
        return Err(Error::Input("no corruption types given".into()));
    }
    let mut rows = Vec::with_capacity(errors.len());
    for (kind, e) in errors {
        if e.len() != SEVERITIES {
            return Err(Error::Input(format!("{} has {} severity levels, expected {SEVERITIES}", kind.name(), e.len())));
        }
        rows.push(CorruptionRow {
            kind: *kind,
            errors: e.clone(),
            ce: e.iter().sum::<f64>() - clean_error,
        });
    }
    let mean_ce = rows.iter().map(|r| r.ce).sum::<f64>() / rows.len() as f64;
    Ok(CorruptionReport {
        clean_error,
        rows,
        mean_ce,
    })
}

/// Top-1 error of `model` on the clean set and on every corrupted copy.
/// Severity `s` of type `c` draws its noise from
/// `stream.child(c.name()).indexed(s)`.
pub fn evaluate_robustness(
    model: &ViRModel,
    clean: &ImageBatch,
    kinds: &[CorruptionType],
    stream: &RngStream,
    chunk: usize,
) -> Result<CorruptionReport> {
    let clean_error = 1.0 - model.accuracy(clean, chunk)?;
    let mut errors = Vec::with_capacity(kinds.len());
    for &kind in kinds {
        let mut per = Vec::with_capacity(SEVERITIES);
        for s in 1..=SEVERITIES as u8 {
            let c = Corruption::new(kind, s)?;
            let batch = corrupt_batch(clean, c, &stream.child(kind.name()).indexed(u64::from(s)))?;
            per.push(1.0 - model.accuracy(&batch, chunk)?);
        }
        errors.push((kind, per));
    }
    corruption_error(clean_error, &errors)
}

impl CorruptionReport {
    /// One row per type plus a final `mean` row.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["corruption".to_string(), "clean_error".to_string()];
        header.extend((1..=SEVERITIES).map(|s| format!("error_s{s}")));
        header.push("ce".into());
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![r.kind.name().to_string(), format!("{}", self.clean_error)];
            rec.extend(r.errors.iter().map(|e| format!("{e}")));
            rec.push(format!("{}", r.ce));
            w.write_record(&rec)?;
        }
        let mut rec = vec!["mean".to_string(), format!("{}", self.clean_error)];
        rec.extend(std::iter::repeat_n(String::new(), SEVERITIES));
        rec.push(format!("{}", self.mean_ce));
        w.write_record(&rec)?;
        w.flush()?;
        Ok(())
    }
}
