//! Largest Lyapunov exponent, memory capacity and sweeps over `(ρ, IS)`.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{draw_gaussian, norm2, Matrix, NormalEquations, RngStream};
use crate::reservoir::{advance, run_sequence_with, Activation};
use crate::topology::{ReservoirMatrices, ReservoirSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LyapunovConfig {
    pub washout: usize,
    pub steps: usize,
    pub gamma0: f64,
    /// Standard deviation of each Gaussian input component.
    pub input_std: f64,
    pub activation: Activation,
}

impl Default for LyapunovConfig {
    fn default() -> Self {
        Self {
            washout: 100,
            steps: 5000,
            gamma0: 1e-8,
            input_std: 1.0,
            activation: Activation::Tanh,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LyapunovEstimate {
    /// Mean log divergence rate per step.
    pub lambda: f64,
    pub steps: usize,
    pub gamma0: f64,
}

/// Largest Lyapunov exponent from a reference and a perturbed trajectory
/// driven by the same Gaussian input. After every step the log growth of the
/// separation is accumulated and the perturbed state is pulled back to
/// distance `γ₀` along the current offset.
pub fn lyapunov_exponent(m: &ReservoirMatrices, stream: &RngStream, cfg: &LyapunovConfig) -> Result<LyapunovEstimate> {
    if cfg.steps == 0 {
        return Err(Error::Parameter("lyapunov needs at least one measured step".into()));
    }
    if !(cfg.gamma0 > 0.0 && cfg.gamma0.is_finite()) {
        return Err(Error::Parameter(format!("gamma0 must be positive, got {}", cfg.gamma0)));
    }
    let (n, k) = (m.neurons(), m.input_dim());
    let inputs = draw_gaussian(&stream.child("input"), 0.0, cfg.input_std, (cfg.washout + cfg.steps) * k)?;
    let mut x = vec![0.0; n];
    for t in 0..cfg.washout {
        x = advance(m, cfg.activation, &x, &inputs[t * k..(t + 1) * k]);
    }
    let dir = draw_gaussian(&stream.child("direction"), 0.0, 1.0, n)?;
    let norm = norm2(&dir);
    let mut y: Vec<f64> = x.iter().zip(&dir).map(|(a, d)| a + cfg.gamma0 * d / norm).collect();
    let mut acc = 0.0;
    for t in cfg.washout..cfg.washout + cfg.steps {
        let u = &inputs[t * k..(t + 1) * k];
        x = advance(m, cfg.activation, &x, u);
        y = advance(m, cfg.activation, &y, u);
        let gamma = x.iter().zip(&y).map(|(a, b)| (b - a) * (b - a)).sum::<f64>().sqrt();
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::DegenerateDynamics(format!("separation became {gamma} at step {t}")));
        }
        acc += (gamma / cfg.gamma0).ln();
        let s = cfg.gamma0 / gamma;
        for (yi, xi) in y.iter_mut().zip(&x) {
            *yi = xi + (*yi - xi) * s;
        }
    }
    Ok(LyapunovEstimate {
        lambda: acc / cfg.steps as f64,
        steps: cfg.steps,
        gamma0: cfg.gamma0,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MemoryCapacityConfig {
    /// Largest delay; `1.5·N` when unset.
    pub t_max: Option<usize>,
    pub washout: usize,
    pub train_len: usize,
    pub test_len: usize,
    pub ridge_k: f64,
    pub input_std: f64,
    pub activation: Activation,
}

impl Default for MemoryCapacityConfig {
    fn default() -> Self {
        Self {
            t_max: None,
            washout: 100,
            train_len: 2000,
            test_len: 1000,
            ridge_k: 1e-6,
            input_std: 1.0,
            activation: Activation::Tanh,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MemoryCapacityCurve {
    /// `MC_τ` for `τ = 1..=T_max`.
    pub per_delay: Vec<f64>,
    pub total: f64,
}

/// Squared correlation `cov²(a, b) / (var(a) var(b))`, clamped to `[0, 1]`;
/// 0 when either series is constant.
pub fn squared_correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len()) as f64;
    if n == 0.0 {
        return 0.0;
    }
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va <= 0.0 || vb <= 0.0 {
        return 0.0;
    }
    (cov * cov / (va * vb)).clamp(0.0, 1.0)
}

/// Fits one ridge readout per target column on `train` states and returns the
/// squared correlation of each prediction with its target on `test` states.
/// A constant column joins the states; the input itself does not.
pub fn recall_scores(train: &Matrix, train_targets: &Matrix, test: &Matrix, test_targets: &Matrix, k: f64) -> Result<Vec<f64>> {
    let bias = |x: &Matrix| Matrix::from_fn(x.rows(), x.cols() + 1, |r, c| if c < x.cols() { x[(r, c)] } else { 1.0 });
    let (xtr, xte) = (bias(train), bias(test));
    let mut ne = NormalEquations::new(xtr.cols(), train_targets.cols());
    ne.add(&xtr, train_targets)?;
    let w = ne.solve(k)?;
    let pred = xte.matmul(&w)?;
    Ok((0..test_targets.cols()).map(|c| squared_correlation(&test_targets.column(c), &pred.column(c))).collect())
}

/// Memory capacity of a reservoir driven by a scalar Gaussian input.
pub fn memory_capacity(m: &ReservoirMatrices, stream: &RngStream, cfg: &MemoryCapacityConfig) -> Result<MemoryCapacityCurve> {
    if m.input_dim() != 1 {
        return Err(Error::Shape(format!("memory capacity needs a scalar input, reservoir takes {}", m.input_dim())));
    }
    let t_max = cfg.t_max.unwrap_or(m.neurons() * 3 / 2);
    if t_max == 0 || cfg.train_len == 0 || cfg.test_len < 2 {
        return Err(Error::Parameter("t_max, train_len and test_len must be positive".into()));
    }
    let start = cfg.washout.max(t_max);
    let total = start + cfg.train_len + cfg.test_len;
    let u = draw_gaussian(&stream.child("input"), 0.0, cfg.input_std, total)?;
    let seq = Matrix::from_vec(total, 1, u.clone())?;
    let trace = run_sequence_with(m, cfg.activation, &seq, None, 0, 0.0, stream)?;
    let window = |from: usize, len: usize| {
        let states = Matrix::from_fn(len, m.neurons(), |r, c| trace.states[(from + r, c)]);
        let targets = Matrix::from_fn(len, t_max, |r, c| u[from + r - (c + 1)]);
        (states, targets)
    };
    let (xtr, ytr) = window(start, cfg.train_len);
    let (xte, yte) = window(start + cfg.train_len, cfg.test_len);
    let per_delay = recall_scores(&xtr, &ytr, &xte, &yte, cfg.ridge_k)?;
    Ok(MemoryCapacityCurve {
        total: per_delay.iter().sum(),
        per_delay,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub rho: f64,
    pub input_scaling: f64,
    pub lambda: Option<f64>,
    pub mc: Option<f64>,
}

/// Evaluates every `(ρ, IS)` pair on the reservoir built from `spec`,
/// rescaling `W` and `V` per point. Points run in parallel; the result keeps
/// grid order with `ρ` varying fastest.
pub fn sweep(
    spec: &ReservoirSpec,
    rhos: &[f64],
    scalings: &[f64],
    lyapunov: Option<&LyapunovConfig>,
    mc: Option<&MemoryCapacityConfig>,
) -> Result<Vec<SweepPoint>> {
    let base = ReservoirMatrices::build_with_radius(spec, 1.0)?;
    let grid: Vec<(f64, f64)> = scalings.iter().flat_map(|&s| rhos.iter().map(move |&r| (r, s))).collect();
    grid.par_iter()
        .map(|&(rho, is)| {
            if !(is > 0.0) {
                return Err(Error::Parameter(format!("input scaling must be positive, got {is}")));
            }
            let m = base.with_radius(rho)?.with_input_scale(is / spec.input_scaling);
            let stream = spec.stream("diagnostics");
            let lambda = lyapunov.map(|c| lyapunov_exponent(&m, &stream, c).map(|e| e.lambda)).transpose()?;
            let mc = mc.map(|c| memory_capacity(&m, &stream, c).map(|e| e.total)).transpose()?;
            Ok(SweepPoint {
                rho,
                input_scaling: is,
                lambda,
                mc,
            })
        })
        .collect()
}

/// CSV with columns `rho, input_scaling, lambda, mc`; absent values stay empty.
pub fn write_sweep_csv(path: &Path, points: &[SweepPoint]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["rho", "input_scaling", "lambda", "mc"])?;
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x}"));
    for p in points {
        w.write_record([format!("{}", p.rho), format!("{}", p.input_scaling), opt(p.lambda), opt(p.mc)])?;
    }
    w.flush()?;
    Ok(())
}
