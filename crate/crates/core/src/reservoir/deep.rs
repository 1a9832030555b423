use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{batch, run_sequence_with, Activation, StateTrace};
use crate::error::{Error, Result};
use crate::numerics::{uniform, Matrix, RngStream};
use crate::topology::{ReservoirMatrices, ReservoirSpec};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeepMode {
    /// Each reservoir feeds the next through a fixed random projection.
    #[default]
    Series,
    /// Reservoirs see the same input; their readouts are averaged.
    Parallel,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeepConfig {
    pub mode: DeepMode,
    pub layers: Vec<ReservoirSpec>,
}

impl DeepConfig {
    pub fn single(spec: ReservoirSpec) -> Self {
        Self {
            mode: DeepMode::Series,
            layers: vec![spec],
        }
    }

    /// `count` copies of `base` whose seeds are `base.seed + i`.
    pub fn stacked(mode: DeepMode, base: &ReservoirSpec, count: usize) -> Self {
        let layers = (0..count)
            .map(|i| ReservoirSpec {
                seed: base.seed.wrapping_add(i as u64),
                ..base.clone()
            })
            .collect();
        Self { mode, layers }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Config("a deep reservoir needs at least one layer".into()));
        }
        for (i, spec) in self.layers.iter().enumerate() {
            spec.validate().map_err(|e| Error::Config(format!("layer {i}: {e}")))?;
        }
        if self.mode == DeepMode::Parallel {
            let k = self.layers[0].input_dim;
            if let Some(i) = self.layers.iter().position(|s| s.input_dim != k) {
                return Err(Error::Config(format!(
                    "parallel branches must share the input dimension: layer 0 has {k}, layer {i} has {}",
                    self.layers[i].input_dim
                )));
            }
        }
        Ok(())
    }
}

/// Built matrices of a stack. `inter[l]` maps layer `l` to layer `l + 1`
/// and exists only in series mode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeepReservoir {
    pub mode: DeepMode,
    pub layers: Vec<ReservoirMatrices>,
    pub inter: Vec<Matrix>,
}

impl DeepReservoir {
    pub fn build(config: &DeepConfig) -> Result<Self> {
        config.validate()?;
        let layers = config
            .layers
            .iter()
            .map(ReservoirMatrices::build)
            .collect::<Result<Vec<_>>>()?;
        let mut inter = Vec::new();
        if config.mode == DeepMode::Series {
            for l in 0..layers.len() - 1 {
                let next = &config.layers[l + 1];
                let stream = RngStream::new(config.layers[l].seed, "inter-weights");
                inter.push(build_inter_weights(next.input_dim, layers[l].neurons(), next.input_sparsity, &stream)?);
            }
        }
        Ok(Self {
            mode: config.mode,
            layers,
            inter,
        })
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    /// Pooled feature width seen by each readout.
    pub fn feature_dims(&self) -> Vec<usize> {
        match self.mode {
            DeepMode::Series => {
                let last = self.layers.last().expect("non-empty stack");
                vec![2 * (last.input_dim() + last.neurons())]
            }
            DeepMode::Parallel => self.layers.iter().map(|m| 2 * (m.input_dim() + m.neurons())).collect(),
        }
    }
}

/// Fixed `out_dim × 2(out_dim + state_dim)` projection for series stacks.
///
/// Entries are drawn like the input matrix (kept with probability
/// `sparsity`, uniform in `(-1, 1)`), then scaled by `1/sqrt(sparsity·fan_in)`
/// so each output has roughly unit gain.
pub fn build_inter_weights(out_dim: usize, state_dim: usize, sparsity: f64, stream: &RngStream) -> Result<Matrix> {
    if !(sparsity > 0.0 && sparsity <= 1.0) {
        return Err(Error::Config(format!("sparsity must lie in (0, 1], got {sparsity}")));
    }
    let fan_in = 2 * (out_dim + state_dim);
    let scale = 1.0 / (sparsity * fan_in as f64).sqrt();
    let mut rng = stream.rng();
    let mut u = Matrix::zeros(out_dim, fan_in);
    for x in u.data_mut() {
        let keep = rng.random::<f64>() < sparsity;
        let value = uniform(&mut rng, -1.0, 1.0);
        if keep {
            *x = value * scale;
        }
    }
    Ok(u)
}

/// Runs a series stack on one sequence and returns the last layer's trace,
/// whose inputs are the previous layer's projected outputs.
pub fn run_series(deep: &DeepReservoir, seq: &Matrix, washout: usize) -> Result<StateTrace> {
    if deep.mode != DeepMode::Series {
        return Err(Error::Config("run_series needs a series stack".into()));
    }
    let stream = RngStream::new(0, "series");
    let mut input = seq.clone();
    let last = deep.depth() - 1;
    for (l, m) in deep.layers.iter().enumerate() {
        if input.cols() != m.input_dim() {
            return Err(Error::Config(format!(
                "layer {l} expects {} inputs but receives {}",
                m.input_dim(),
                input.cols()
            )));
        }
        let trace = run_sequence_with(m, Activation::Tanh, &input, None, washout, 0.0, &stream)?;
        if l == last {
            return Ok(trace);
        }
        input = batch::project_forward(&deep.inter[l], &trace.states, trace.len())?;
    }
    unreachable!("loop returns on the last layer")
}

/// Runs every branch of a parallel stack on the same sequence.
///
/// Branches are evaluated concurrently; the result order is the branch order.
pub fn run_parallel(deep: &DeepReservoir, seq: &Matrix, washout: usize) -> Result<Vec<StateTrace>> {
    if deep.mode != DeepMode::Parallel {
        return Err(Error::Config("run_parallel needs a parallel stack".into()));
    }
    let stream = RngStream::new(0, "parallel");
    deep.layers
        .par_iter()
        .map(|m| run_sequence_with(m, Activation::Tanh, seq, None, washout, 0.0, &stream))
        .collect()
}

/// Element-wise arithmetic mean of branch outputs.
pub fn mean_combine(outputs: &[Matrix]) -> Result<Matrix> {
    let first = outputs.first().ok_or_else(|| Error::Input("no branch outputs to combine".into()))?;
    let mut acc = Matrix::zeros(first.rows(), first.cols());
    for o in outputs {
        if o.shape() != first.shape() {
            return Err(Error::Shape("branch outputs differ in shape".into()));
        }
        acc.add_scaled(1.0, o);
    }
    acc.scale_mut(1.0 / outputs.len() as f64);
    Ok(acc)
}
