//! The assembled classifier and its batched feature pipeline.

use serde::{Deserialize, Serialize};

use super::tail::{Pooling, TailNetwork, TailShape};
use crate::error::{Error, Result};
use crate::numerics::{gemm, Matrix, RngStream};
use crate::patches::{ImageBatch, PatchGrid};
use crate::reservoir::batch::{backward_layer, forward_layer, pool_features, pool_features_backward, project_backward, project_forward};
use crate::reservoir::{Activation, DeepConfig, DeepMode, DeepReservoir};
use crate::topology::ReservoirSpec;

/// Architecture. The reservoir template's `input_dim` is the embedding width `D`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub reservoir: ReservoirSpec,
    pub mode: DeepMode,
    /// Reservoirs in the stack; layer `i` uses seed `reservoir.seed + i`.
    pub layers: usize,
    /// Patch side `P`.
    pub patch: usize,
    pub ff_dim: usize,
    /// Embedding init standard deviation times `sqrt(patch_dim)`.
    pub embed_scale: f64,
    /// Leading steps left out of pooling.
    pub washout: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            reservoir: ReservoirSpec::default(),
            mode: DeepMode::Series,
            layers: 1,
            patch: 4,
            ff_dim: 1024,
            embed_scale: 0.5,
            washout: 0,
        }
    }
}

impl ModelConfig {
    pub fn deep_config(&self) -> DeepConfig {
        DeepConfig::stacked(self.mode, &self.reservoir, self.layers)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 {
            return Err(Error::Config("model needs at least one reservoir layer".into()));
        }
        if self.patch == 0 || self.ff_dim == 0 {
            return Err(Error::Config("patch and ff_dim must be positive".into()));
        }
        if !(self.embed_scale > 0.0 && self.embed_scale.is_finite()) {
            return Err(Error::Config(format!("embed_scale must be positive, got {}", self.embed_scale)));
        }
        self.deep_config().validate()
    }
}

/// Reservoir stack plus trainable tail. `ridge`, when present, holds one
/// closed-form readout per branch (features plus a trailing bias column to
/// class scores) and replaces the tail at prediction time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViRModel {
    pub config: ModelConfig,
    pub grid: PatchGrid,
    pub classes: usize,
    pub pooling: Pooling,
    pub deep: DeepReservoir,
    pub tail: TailNetwork,
    pub ridge: Option<Vec<Matrix>>,
}

/// Everything the reverse pass needs from one batched forward pass.
pub struct FeatureCache {
    pub steps: usize,
    pub batch: usize,
    patches: Matrix,
    embedded: Matrix,
    layers: Vec<LayerCache>,
}

struct LayerCache {
    states: Matrix,
    /// Projected output handed to the next series layer.
    projected: Option<Matrix>,
}

impl ViRModel {
    pub fn new(config: ModelConfig, height: usize, width: usize, channels: usize, classes: usize) -> Result<Self> {
        config.validate()?;
        let grid = PatchGrid::new(height, width, channels, config.patch)?;
        if classes < 2 {
            return Err(Error::Config(format!("need at least 2 classes, got {classes}")));
        }
        if grid.steps() <= config.washout {
            return Err(Error::Config(format!("washout {} leaves nothing of {} steps", config.washout, grid.steps())));
        }
        let deep = DeepReservoir::build(&config.deep_config())?;
        let shape = TailShape {
            patch_dim: grid.patch_dim(),
            embed_dim: config.reservoir.input_dim,
            ff_dim: config.ff_dim,
            classes,
        };
        let tail = TailNetwork::init(shape, &deep.feature_dims(), config.embed_scale, &RngStream::new(config.reservoir.seed, "tail"));
        Ok(Self {
            config,
            grid,
            classes,
            pooling: Pooling::MeanOverSteps,
            deep,
            tail,
            ridge: None,
        })
    }

    pub fn for_batch(config: ModelConfig, data: &ImageBatch) -> Result<Self> {
        Self::new(config, data.height, data.width, data.channels, data.classes)
    }

    fn pool_washout(&self) -> usize {
        match self.pooling {
            Pooling::MeanOverSteps => self.config.washout,
            Pooling::LastStep => self.grid.steps() - 1,
        }
    }

    pub fn check_data(&self, data: &ImageBatch) -> Result<()> {
        if (data.height, data.width, data.channels) != (self.grid.height, self.grid.width, self.grid.channels) {
            return Err(Error::Shape(format!(
                "images are {}x{}x{}, model expects {}x{}x{}",
                data.height, data.width, data.channels, self.grid.height, self.grid.width, self.grid.channels
            )));
        }
        if data.classes != self.classes {
            return Err(Error::Shape(format!("data has {} classes, model has {}", data.classes, self.classes)));
        }
        Ok(())
    }

    /// Time-major patch rows for the selected images.
    pub fn patch_rows(&self, data: &ImageBatch, idx: &[usize]) -> Matrix {
        let (steps, dim, b) = (self.grid.steps(), self.grid.patch_dim(), idx.len());
        let mut seq = vec![0.0; steps * dim];
        let mut out = Matrix::zeros(steps * b, dim);
        for (j, &i) in idx.iter().enumerate() {
            self.grid.extract_into(data.pixels(i), &mut seq);
            for t in 0..steps {
                out.row_mut(t * b + j).copy_from_slice(&seq[t * dim..(t + 1) * dim]);
            }
        }
        out
    }

    /// Pooled reservoir features, one `batch × F_b` matrix per readout.
    pub fn features(&self, data: &ImageBatch, idx: &[usize]) -> Result<(Vec<Matrix>, FeatureCache)> {
        if idx.is_empty() {
            return Err(Error::Input("empty batch".into()));
        }
        let steps = self.grid.steps();
        let patches = self.patch_rows(data, idx);
        let mut embedded = Matrix::zeros(patches.rows(), self.tail.embed_dim());
        gemm(1.0, &patches, false, &self.tail.embed, false, 0.0, &mut embedded);
        let washout = self.pool_washout();
        let mut layers = Vec::with_capacity(self.deep.depth());
        let pooled = match self.deep.mode {
            DeepMode::Parallel => {
                let mut pooled = Vec::new();
                for m in &self.deep.layers {
                    let states = forward_layer(m, Activation::Tanh, &embedded, steps, None)?;
                    pooled.push(pool_features(&embedded, &states, steps, washout)?);
                    layers.push(LayerCache {
                        states,
                        projected: None,
                    });
                }
                pooled
            }
            DeepMode::Series => {
                let last = self.deep.depth() - 1;
                let mut pooled = Vec::new();
                for (l, m) in self.deep.layers.iter().enumerate() {
                    let input = if l == 0 { &embedded } else { layers[l - 1].projected.as_ref().expect("series output") };
                    let states = forward_layer(m, Activation::Tanh, input, steps, None)?;
                    if l == last {
                        pooled.push(pool_features(input, &states, steps, washout)?);
                        layers.push(LayerCache {
                            states,
                            projected: None,
                        });
                    } else {
                        let y = project_forward(&self.deep.inter[l], &states, steps)?;
                        layers.push(LayerCache {
                            states,
                            projected: Some(y),
                        });
                    }
                }
                pooled
            }
        };
        Ok((
            pooled,
            FeatureCache {
                steps,
                batch: idx.len(),
                patches,
                embedded,
                layers,
            },
        ))
    }

    /// Gradient of the loss with respect to `E`, given gradients with respect
    /// to the pooled features, through the frozen reservoirs.
    pub fn features_backward(&self, cache: &FeatureCache, grad_pooled: &[Matrix]) -> Result<Matrix> {
        let steps = cache.steps;
        let washout = self.pool_washout();
        let mut g_embedded = Matrix::zeros(cache.embedded.rows(), cache.embedded.cols());
        match self.deep.mode {
            DeepMode::Parallel => {
                for ((m, lc), gp) in self.deep.layers.iter().zip(&cache.layers).zip(grad_pooled) {
                    let (gu, gx) = pool_features_backward(&cache.embedded, &lc.states, steps, washout, gp)?;
                    g_embedded.add_scaled(1.0, &gu);
                    g_embedded.add_scaled(1.0, &backward_layer(m, Activation::Tanh, &lc.states, steps, gx)?);
                }
            }
            DeepMode::Series => {
                let last = self.deep.depth() - 1;
                let input_of = |l: usize| -> &Matrix {
                    if l == 0 {
                        &cache.embedded
                    } else {
                        cache.layers[l - 1].projected.as_ref().expect("series output")
                    }
                };
                let lc = &cache.layers[last];
                let (mut g_in, gx) = pool_features_backward(input_of(last), &lc.states, steps, washout, &grad_pooled[0])?;
                g_in.add_scaled(1.0, &backward_layer(&self.deep.layers[last], Activation::Tanh, &lc.states, steps, gx)?);
                for l in (0..last).rev() {
                    let lc = &cache.layers[l];
                    let y = lc.projected.as_ref().expect("series output");
                    let gx = project_backward(&self.deep.inter[l], y, &lc.states, steps, &g_in)?;
                    g_in = backward_layer(&self.deep.layers[l], Activation::Tanh, &lc.states, steps, gx)?;
                }
                g_embedded = g_in;
            }
        }
        let mut g_e = Matrix::zeros(self.tail.embed.rows(), self.tail.embed.cols());
        gemm(1.0, &cache.patches, true, &g_embedded, false, 0.0, &mut g_e);
        Ok(g_e)
    }

    /// Class scores for the selected images.
    pub fn scores(&self, data: &ImageBatch, idx: &[usize]) -> Result<Matrix> {
        let (pooled, _) = self.features(data, idx)?;
        self.scores_from_features(&pooled)
    }

    pub fn scores_from_features(&self, pooled: &[Matrix]) -> Result<Matrix> {
        match &self.ridge {
            Some(w_out) => super::ridge::ridge_scores(pooled, w_out),
            None => Ok(self.tail.forward(pooled)?.0),
        }
    }

    /// Predicted class per image, evaluated in chunks of `chunk` images.
    pub fn predict(&self, data: &ImageBatch, chunk: usize) -> Result<Vec<usize>> {
        self.check_data(data)?;
        let idx: Vec<usize> = (0..data.len()).collect();
        let mut out = Vec::with_capacity(data.len());
        for part in idx.chunks(chunk.max(1)) {
            let s = self.scores(data, part)?;
            out.extend((0..s.rows()).map(|r| s.argmax_row(r)));
        }
        Ok(out)
    }

    pub fn accuracy(&self, data: &ImageBatch, chunk: usize) -> Result<f64> {
        if data.is_empty() {
            return Err(Error::Input("cannot score an empty dataset".into()));
        }
        let pred = self.predict(data, chunk)?;
        let hits = pred.iter().enumerate().filter(|(i, p)| **p == data.label(*i)).count();
        Ok(hits as f64 / data.len() as f64)
    }
}
