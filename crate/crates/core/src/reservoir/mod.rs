//! Reservoir dynamics over input sequences.
//!
//! The state update is `x(t) = f(V u(t) + W x(t-1) + b(t))` with `x(0) = 0`
//! by default and `b` an optional uniform noise term. Feature vectors are
//! `[u; x; y_prev; u²; x²; y_prev²]`, the `y` blocks present only when
//! output feedback is supplied.
//!
//! This module holds the per-sequence reference path. [`batch`] runs the
//! same recurrence over many sequences at once with matrix products, and
//! supplies the reverse pass used by gradient training.

pub mod batch;
mod deep;

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Matrix, RngStream};
use crate::topology::ReservoirMatrices;

pub use deep::{build_inter_weights, mean_combine, run_parallel, run_series, DeepConfig, DeepMode, DeepReservoir};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Tanh,
    /// Linear neurons; used for analytic test cases.
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the output `x = f(z)`.
    #[inline]
    pub fn derivative_from_output(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - x * x,
            Activation::Identity => 1.0,
        }
    }
}

fn check_dims(m: &ReservoirMatrices, x: &[f64], u: &[f64]) -> Result<()> {
    if x.len() != m.neurons() {
        return Err(Error::Shape(format!("state has {} entries, reservoir has {} neurons", x.len(), m.neurons())));
    }
    if u.len() != m.input_dim() {
        return Err(Error::Shape(format!("input has {} entries, reservoir expects {}", u.len(), m.input_dim())));
    }
    Ok(())
}

fn step_inner<R: Rng>(
    m: &ReservoirMatrices,
    act: Activation,
    x: &[f64],
    u: &[f64],
    noise: Option<(f64, &mut R)>,
) -> Vec<f64> {
    let mut pre = m.v.matvec(u).expect("checked input dimension");
    let recur = m.w.matvec(x).expect("checked state dimension");
    for (p, r) in pre.iter_mut().zip(&recur) {
        *p += r;
    }
    if let Some((amp, rng)) = noise {
        if amp > 0.0 {
            for p in pre.iter_mut() {
                *p += rng.random_range(-amp..amp);
            }
        }
    }
    pre.into_iter().map(|z| act.apply(z)).collect()
}

/// One tanh update `x' = tanh(Vu + Wx + b)`, `b ~ U(-noise_amp, noise_amp)`.
pub fn step(m: &ReservoirMatrices, x: &[f64], u: &[f64], noise_amp: f64, stream: &RngStream) -> Result<Vec<f64>> {
    step_with(m, Activation::Tanh, x, u, noise_amp, stream)
}

pub fn step_with(
    m: &ReservoirMatrices,
    act: Activation,
    x: &[f64],
    u: &[f64],
    noise_amp: f64,
    stream: &RngStream,
) -> Result<Vec<f64>> {
    check_dims(m, x, u)?;
    if !(noise_amp >= 0.0) {
        return Err(Error::Parameter(format!("noise amplitude must be >= 0, got {noise_amp}")));
    }
    let mut rng = stream.rng();
    Ok(step_inner(m, act, x, u, Some((noise_amp, &mut rng))))
}

/// Noise-free update without the dimension checks.
pub(crate) fn advance(m: &ReservoirMatrices, act: Activation, x: &[f64], u: &[f64]) -> Vec<f64> {
    step_inner::<rand_chacha::ChaCha20Rng>(m, act, x, u, None)
}

/// Inputs and states of one run, one row per step.
#[derive(Clone, Debug, PartialEq)]
pub struct StateTrace {
    pub inputs: Matrix,
    pub states: Matrix,
    /// Leading steps excluded from harvesting.
    pub washout: usize,
}

impl StateTrace {
    pub fn len(&self) -> usize {
        self.states.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.states.rows() == 0
    }

    /// One CSV row per step: `step, harvested, u0.., x0..`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["step".to_string(), "harvested".to_string()];
        header.extend((0..self.inputs.cols()).map(|k| format!("u{k}")));
        header.extend((0..self.states.cols()).map(|i| format!("x{i}")));
        w.write_record(&header)?;
        for t in 0..self.len() {
            let mut rec = vec![t.to_string(), u8::from(t >= self.washout).to_string()];
            rec.extend(self.inputs.row(t).iter().map(|v| format!("{v:e}")));
            rec.extend(self.states.row(t).iter().map(|v| format!("{v:e}")));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Drives the reservoir with `seq` (one row per step, `K` columns).
pub fn run_sequence(
    m: &ReservoirMatrices,
    seq: &Matrix,
    x0: Option<&[f64]>,
    washout: usize,
    noise_amp: f64,
    stream: &RngStream,
) -> Result<StateTrace> {
    run_sequence_with(m, Activation::Tanh, seq, x0, washout, noise_amp, stream)
}

pub fn run_sequence_with(
    m: &ReservoirMatrices,
    act: Activation,
    seq: &Matrix,
    x0: Option<&[f64]>,
    washout: usize,
    noise_amp: f64,
    stream: &RngStream,
) -> Result<StateTrace> {
    let t_len = seq.rows();
    if t_len == 0 {
        return Err(Error::Input("empty input sequence".into()));
    }
    if washout >= t_len {
        return Err(Error::Input(format!("washout {washout} leaves nothing of a {t_len}-step sequence")));
    }
    if seq.cols() != m.input_dim() {
        return Err(Error::Shape(format!("sequence has {} columns, reservoir expects {}", seq.cols(), m.input_dim())));
    }
    if !(noise_amp >= 0.0) {
        return Err(Error::Parameter(format!("noise amplitude must be >= 0, got {noise_amp}")));
    }
    let n = m.neurons();
    let mut x = match x0 {
        Some(x0) if x0.len() != n => {
            return Err(Error::Shape(format!("initial state has {} entries, expected {n}", x0.len())));
        }
        Some(x0) => x0.to_vec(),
        None => vec![0.0; n],
    };
    let mut rng = stream.rng();
    let mut states = Matrix::zeros(t_len, n);
    for t in 0..t_len {
        x = step_inner(m, act, &x, seq.row(t), Some((noise_amp, &mut rng)));
        states.row_mut(t).copy_from_slice(&x);
    }
    Ok(StateTrace {
        inputs: seq.clone(),
        states,
        washout,
    })
}

/// Per-step feature rows for the harvested part of a trace.
///
/// `feedback`, when given, has one row per step holding `y(t-1)`.
pub fn harvest(trace: &StateTrace, feedback: Option<&Matrix>) -> Result<Matrix> {
    let (k, n) = (trace.inputs.cols(), trace.states.cols());
    let q = match feedback {
        Some(f) if f.rows() != trace.len() => {
            return Err(Error::Shape(format!("{} feedback rows for a {}-step trace", f.rows(), trace.len())));
        }
        Some(f) => f.cols(),
        None => 0,
    };
    let dim = 2 * (k + n + q);
    let rows = trace.len() - trace.washout;
    let mut out = Matrix::zeros(rows, dim);
    for (r, t) in (trace.washout..trace.len()).enumerate() {
        let row = out.row_mut(r);
        let u = trace.inputs.row(t);
        let x = trace.states.row(t);
        let y: &[f64] = feedback.map_or(&[], |f| f.row(t));
        let half = k + n + q;
        row[..k].copy_from_slice(u);
        row[k..k + n].copy_from_slice(x);
        row[k + n..half].copy_from_slice(y);
        for (dst, src) in row[half..].iter_mut().zip(u.iter().chain(x).chain(y)) {
            *dst = src * src;
        }
    }
    Ok(out)
}

/// Column means of a feature matrix.
pub fn mean_pool(features: &Matrix) -> Vec<f64> {
    let mut out = vec![0.0; features.cols()];
    for r in 0..features.rows() {
        for (o, v) in out.iter_mut().zip(features.row(r)) {
            *o += v;
        }
    }
    let n = features.rows().max(1) as f64;
    out.iter_mut().for_each(|o| *o /= n);
    out
}
