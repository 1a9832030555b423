//! Trainable tail: patch embedding, readouts, residual LayerNorm/FF block, head.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{gaussian, gemm, Matrix, RngStream};

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Affine map `y = x W + b` with `W` stored `in × out`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl Linear {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            weight: Matrix::zeros(input, output),
            bias: vec![0.0; output],
        }
    }

    /// Gaussian weights with standard deviation `scale / sqrt(input)`, zero bias.
    pub fn init(input: usize, output: usize, scale: f64, stream: &RngStream) -> Self {
        let mut rng = stream.rng();
        let std = scale / (input as f64).sqrt();
        Self {
            weight: Matrix::from_fn(input, output, |_, _| gaussian(&mut rng, 0.0, std)),
            bias: vec![0.0; output],
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn forward(&self, x: &Matrix) -> Matrix {
        let mut y = Matrix::zeros(x.rows(), self.output_dim());
        for r in 0..y.rows() {
            y.row_mut(r).copy_from_slice(&self.bias);
        }
        gemm(1.0, x, false, &self.weight, false, 1.0, &mut y);
        y
    }

    /// Accumulates parameter gradients into `grad` and returns `dL/dx`.
    pub fn backward(&self, x: &Matrix, dy: &Matrix, grad: &mut Linear) -> Matrix {
        gemm(1.0, x, true, dy, false, 1.0, &mut grad.weight);
        for r in 0..dy.rows() {
            for (g, d) in grad.bias.iter_mut().zip(dy.row(r)) {
                *g += d;
            }
        }
        let mut dx = Matrix::zeros(x.rows(), x.cols());
        gemm(1.0, dy, false, &self.weight, true, 0.0, &mut dx);
        dx
    }

    pub fn parameter_count(&self) -> usize {
        self.weight.data().len() + self.bias.len()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerNorm {
    pub gain: Vec<f64>,
    pub bias: Vec<f64>,
}

struct NormCache {
    xhat: Matrix,
    inv_std: Vec<f64>,
}

impl LayerNorm {
    pub fn new(dim: usize) -> Self {
        Self {
            gain: vec![1.0; dim],
            bias: vec![0.0; dim],
        }
    }

    fn zeros(dim: usize) -> Self {
        Self {
            gain: vec![0.0; dim],
            bias: vec![0.0; dim],
        }
    }

    fn forward(&self, x: &Matrix) -> (Matrix, NormCache) {
        let d = x.cols();
        let mut xhat = Matrix::zeros(x.rows(), d);
        let mut y = Matrix::zeros(x.rows(), d);
        let mut inv_std = Vec::with_capacity(x.rows());
        for r in 0..x.rows() {
            let row = x.row(r);
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let is = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            inv_std.push(is);
            for (hv, v) in xhat.row_mut(r).iter_mut().zip(row) {
                *hv = (v - mean) * is;
            }
            for (i, yv) in y.row_mut(r).iter_mut().enumerate() {
                *yv = self.gain[i] * xhat[(r, i)] + self.bias[i];
            }
        }
        (y, NormCache { xhat, inv_std })
    }

    fn backward(&self, cache: &NormCache, dy: &Matrix, grad: &mut LayerNorm) -> Matrix {
        let d = dy.cols();
        let mut dx = Matrix::zeros(dy.rows(), d);
        let mut dxhat = vec![0.0; d];
        for r in 0..dy.rows() {
            let xh = cache.xhat.row(r);
            for i in 0..d {
                let g = dy[(r, i)];
                grad.gain[i] += g * xh[i];
                grad.bias[i] += g;
                dxhat[i] = g * self.gain[i];
            }
            let m1 = dxhat.iter().sum::<f64>() / d as f64;
            let m2 = dxhat.iter().zip(xh).map(|(a, b)| a * b).sum::<f64>() / d as f64;
            for (i, o) in dx.row_mut(r).iter_mut().enumerate() {
                *o = cache.inv_std[r] * (dxhat[i] - m1 - xh[i] * m2);
            }
        }
        dx
    }
}

/// Exact GELU `x Φ(x)`.
#[inline]
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

#[inline]
pub fn gelu_derivative(x: f64) -> f64 {
    let cdf = 0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2));
    let pdf = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    cdf + x * pdf
}

/// Fixed per-feature standardization `(f − shift) · scale` in front of a
/// readout. Not trained; identity unless fitted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureNorm {
    pub shift: Vec<f64>,
    pub scale: Vec<f64>,
}

/// How readout inputs are normalized before gradient training.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    /// Per-feature mean and variance.
    Standardize,
    /// Per-feature mean, one scale per readout.
    #[default]
    Center,
}

fn column_moments(features: &Matrix) -> (Vec<f64>, Vec<f64>) {
    let n = features.rows().max(1) as f64;
    let mut mean = vec![0.0; features.cols()];
    for r in 0..features.rows() {
        for (m, v) in mean.iter_mut().zip(features.row(r)) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; features.cols()];
    for r in 0..features.rows() {
        for ((s, v), m) in var.iter_mut().zip(features.row(r)).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    var.iter_mut().for_each(|s| *s /= n);
    (mean, var)
}

impl FeatureNorm {
    pub fn identity(dim: usize) -> Self {
        Self {
            shift: vec![0.0; dim],
            scale: vec![1.0; dim],
        }
    }

    /// Column means and inverse standard deviations of `features`; columns
    /// with variance below `floor` are scaled by `1/sqrt(floor)`.
    pub fn fit(features: &Matrix, floor: f64) -> Self {
        let (shift, var) = column_moments(features);
        let scale = var.iter().map(|v| 1.0 / v.max(floor).sqrt()).collect();
        Self { shift, scale }
    }

    /// Column means, with one shared scale: the inverse root of the mean
    /// column variance. Relative feature magnitudes are kept.
    pub fn fit_centered(features: &Matrix, floor: f64) -> Self {
        let (shift, var) = column_moments(features);
        let mean_var = var.iter().sum::<f64>() / var.len().max(1) as f64;
        let s = 1.0 / mean_var.max(floor).sqrt();
        Self {
            scale: vec![s; shift.len()],
            shift,
        }
    }

    pub fn dim(&self) -> usize {
        self.shift.len()
    }

    pub fn apply(&self, f: &Matrix) -> Matrix {
        let mut out = f.clone();
        for r in 0..out.rows() {
            for ((v, m), s) in out.row_mut(r).iter_mut().zip(&self.shift).zip(&self.scale) {
                *v = (*v - m) * s;
            }
        }
        out
    }

    fn backward(&self, mut grad: Matrix) -> Matrix {
        for r in 0..grad.rows() {
            for (g, s) in grad.row_mut(r).iter_mut().zip(&self.scale) {
                *g *= s;
            }
        }
        grad
    }
}

/// All trainable tensors, plus the fixed feature standardizers.
///
/// `readouts` has one entry per readout branch: one for single and series
/// models, one per branch for parallel models, whose outputs are averaged.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailNetwork {
    /// Patch embedding `E`, `patch_dim × D`, applied without bias.
    pub embed: Matrix,
    pub readouts: Vec<Linear>,
    /// One standardizer per readout, applied to its input features.
    pub norms: Vec<FeatureNorm>,
    pub ln1: LayerNorm,
    pub ff1: Linear,
    pub ff2: Linear,
    pub ln2: LayerNorm,
    pub head: Linear,
}

/// Gradients share the parameter layout.
pub type Gradients = TailNetwork;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailShape {
    pub patch_dim: usize,
    pub embed_dim: usize,
    pub ff_dim: usize,
    pub classes: usize,
}

impl TailNetwork {
    pub fn init(shape: TailShape, feature_dims: &[usize], embed_scale: f64, stream: &RngStream) -> Self {
        let TailShape {
            patch_dim,
            embed_dim: d,
            ff_dim,
            classes,
        } = shape;
        let mut rng = stream.child("embed").rng();
        let std = embed_scale / (patch_dim as f64).sqrt();
        let embed = Matrix::from_fn(patch_dim, d, |_, _| gaussian(&mut rng, 0.0, std));
        Self {
            embed,
            readouts: feature_dims
                .iter()
                .enumerate()
                .map(|(i, &f)| Linear::init(f, d, 1.0, &stream.child("readout").indexed(i as u64)))
                .collect(),
            norms: feature_dims.iter().map(|&f| FeatureNorm::identity(f)).collect(),
            ln1: LayerNorm::new(d),
            ff1: Linear::init(d, ff_dim, 1.0, &stream.child("ff1")),
            ff2: Linear::init(ff_dim, d, 1.0, &stream.child("ff2")),
            ln2: LayerNorm::new(d),
            head: Linear::init(d, classes, 1.0, &stream.child("head")),
        }
    }

    pub fn zeros_like(&self) -> Self {
        let lin = |l: &Linear| Linear::zeros(l.input_dim(), l.output_dim());
        Self {
            embed: Matrix::zeros(self.embed.rows(), self.embed.cols()),
            readouts: self.readouts.iter().map(lin).collect(),
            norms: self.norms.clone(),
            ln1: LayerNorm::zeros(self.ln1.gain.len()),
            ff1: lin(&self.ff1),
            ff2: lin(&self.ff2),
            ln2: LayerNorm::zeros(self.ln2.gain.len()),
            head: lin(&self.head),
        }
    }

    pub fn embed_dim(&self) -> usize {
        self.embed.cols()
    }

    pub fn classes(&self) -> usize {
        self.head.output_dim()
    }

    /// Named parameter tensors in a fixed order.
    pub fn tensors(&self) -> Vec<(String, &[f64])> {
        let mut out: Vec<(String, &[f64])> = vec![("embed".into(), self.embed.data())];
        for (i, r) in self.readouts.iter().enumerate() {
            out.push((format!("readout{i}.weight"), r.weight.data()));
            out.push((format!("readout{i}.bias"), &r.bias));
        }
        out.push(("ln1.gain".into(), &self.ln1.gain));
        out.push(("ln1.bias".into(), &self.ln1.bias));
        out.push(("ff1.weight".into(), self.ff1.weight.data()));
        out.push(("ff1.bias".into(), &self.ff1.bias));
        out.push(("ff2.weight".into(), self.ff2.weight.data()));
        out.push(("ff2.bias".into(), &self.ff2.bias));
        out.push(("ln2.gain".into(), &self.ln2.gain));
        out.push(("ln2.bias".into(), &self.ln2.bias));
        out.push(("head.weight".into(), self.head.weight.data()));
        out.push(("head.bias".into(), &self.head.bias));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut out: Vec<(String, &mut [f64])> = vec![("embed".into(), self.embed.data_mut())];
        for (i, r) in self.readouts.iter_mut().enumerate() {
            out.push((format!("readout{i}.weight"), r.weight.data_mut()));
            out.push((format!("readout{i}.bias"), &mut r.bias));
        }
        out.push(("ln1.gain".into(), &mut self.ln1.gain));
        out.push(("ln1.bias".into(), &mut self.ln1.bias));
        out.push(("ff1.weight".into(), self.ff1.weight.data_mut()));
        out.push(("ff1.bias".into(), &mut self.ff1.bias));
        out.push(("ff2.weight".into(), self.ff2.weight.data_mut()));
        out.push(("ff2.bias".into(), &mut self.ff2.bias));
        out.push(("ln2.gain".into(), &mut self.ln2.gain));
        out.push(("ln2.bias".into(), &mut self.ln2.bias));
        out.push(("head.weight".into(), self.head.weight.data_mut()));
        out.push(("head.bias".into(), &mut self.head.bias));
        out
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.iter().all(|v| v.is_finite()))
    }

    /// Forward pass from readout outputs onwards: `y_c = FF(LN1(y_r)) + y_r`,
    /// `logits = head(LN2(y_c))`.
    fn block_forward(&self, yr: Matrix) -> (Matrix, BlockCache) {
        let (h1, n1) = self.ln1.forward(&yr);
        let a = self.ff1.forward(&h1);
        let mut g = a.clone();
        g.data_mut().iter_mut().for_each(|v| *v = gelu(*v));
        let mut yc = self.ff2.forward(&g);
        yc.add_scaled(1.0, &yr);
        let (h2, n2) = self.ln2.forward(&yc);
        let logits = self.head.forward(&h2);
        (
            logits,
            BlockCache {
                h1,
                n1,
                a,
                g,
                h2,
                n2,
            },
        )
    }

    fn block_backward(&self, cache: &BlockCache, dlogits: &Matrix, grad: &mut Gradients) -> Matrix {
        let dh2 = self.head.backward(&cache.h2, dlogits, &mut grad.head);
        let dyc = self.ln2.backward(&cache.n2, &dh2, &mut grad.ln2);
        let dg = self.ff2.backward(&cache.g, &dyc, &mut grad.ff2);
        let mut da = dg;
        for (d, a) in da.data_mut().iter_mut().zip(cache.a.data()) {
            *d *= gelu_derivative(*a);
        }
        let dh1 = self.ff1.backward(&cache.h1, &da, &mut grad.ff1);
        let mut dyr = self.ln1.backward(&cache.n1, &dh1, &mut grad.ln1);
        dyr.add_scaled(1.0, &dyc);
        dyr
    }

    /// Logits from pooled features, one matrix (`batch × F_b`) per readout.
    pub fn forward(&self, pooled: &[Matrix]) -> Result<(Matrix, TailCache)> {
        if pooled.len() != self.readouts.len() {
            return Err(Error::Shape(format!("{} feature sets for {} readouts", pooled.len(), self.readouts.len())));
        }
        let rows = pooled[0].rows();
        let mut yr = Matrix::zeros(rows, self.embed_dim());
        let mut normed = Vec::with_capacity(pooled.len());
        for ((f, r), nm) in pooled.iter().zip(&self.readouts).zip(&self.norms) {
            if f.cols() != r.input_dim() || f.rows() != rows {
                return Err(Error::Shape(format!(
                    "features are {:?}, readout expects {} columns",
                    f.shape(),
                    r.input_dim()
                )));
            }
            let z = nm.apply(f);
            yr.add_scaled(1.0, &r.forward(&z));
            normed.push(z);
        }
        yr.scale_mut(1.0 / self.readouts.len() as f64);
        let (logits, block) = self.block_forward(yr);
        Ok((logits, TailCache { block, normed }))
    }

    /// Accumulates tail gradients into `grad` and returns `dL/d pooled` per readout.
    pub fn backward(&self, cache: &TailCache, dlogits: &Matrix, grad: &mut Gradients) -> Vec<Matrix> {
        let mut dyr = self.block_backward(&cache.block, dlogits, grad);
        dyr.scale_mut(1.0 / self.readouts.len() as f64);
        cache
            .normed
            .iter()
            .zip(&self.readouts)
            .zip(&self.norms)
            .zip(grad.readouts.iter_mut())
            .map(|(((z, r), nm), g)| nm.backward(r.backward(z, &dyr, g)))
            .collect()
    }

    pub fn parameter_counts(&self) -> ParameterCounts {
        let readouts: Vec<usize> = self.readouts.iter().map(Linear::parameter_count).collect();
        let ln = |l: &LayerNorm| l.gain.len() + l.bias.len();
        let counts = ParameterCounts {
            embed: self.embed.data().len(),
            readout: readouts.iter().sum(),
            readouts,
            ln1: ln(&self.ln1),
            feed_forward: self.ff1.parameter_count() + self.ff2.parameter_count(),
            ln2: ln(&self.ln2),
            head: self.head.parameter_count(),
            total: 0,
        };
        ParameterCounts {
            total: counts.embed + counts.readout + counts.ln1 + counts.feed_forward + counts.ln2 + counts.head,
            ..counts
        }
    }
}

struct BlockCache {
    h1: Matrix,
    n1: NormCache,
    a: Matrix,
    g: Matrix,
    h2: Matrix,
    n2: NormCache,
}

/// Intermediates kept by [`TailNetwork::forward`] for the reverse pass.
pub struct TailCache {
    block: BlockCache,
    normed: Vec<Matrix>,
}

/// Trainable parameter counts; the fixed reservoir matrices are excluded.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParameterCounts {
    pub embed: usize,
    pub readout: usize,
    pub readouts: Vec<usize>,
    pub ln1: usize,
    pub feed_forward: usize,
    pub ln2: usize,
    pub head: usize,
    pub total: usize,
}

/// How per-step readout outputs become one vector per image.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    #[default]
    MeanOverSteps,
    LastStep,
}

/// Logits for one image from per-step feature rows (`T × F_b` per readout).
///
/// Readout outputs are computed per step and then pooled, as written; the
/// batched training path pools features first, which is equivalent because
/// the readout is affine.
pub fn forward_tail(tail: &TailNetwork, step_features: &[Matrix], pooling: Pooling) -> Result<Vec<f64>> {
    if step_features.len() != tail.readouts.len() {
        return Err(Error::Shape(format!(
            "{} feature sets for {} readouts",
            step_features.len(),
            tail.readouts.len()
        )));
    }
    let mut yr = Matrix::zeros(1, tail.embed_dim());
    for ((f, r), nm) in step_features.iter().zip(&tail.readouts).zip(&tail.norms) {
        if f.cols() != r.input_dim() || f.rows() == 0 {
            return Err(Error::Shape(format!("features are {:?}, readout expects {} columns", f.shape(), r.input_dim())));
        }
        let per_step = r.forward(&nm.apply(f));
        let pooled = match pooling {
            Pooling::MeanOverSteps => crate::reservoir::mean_pool(&per_step),
            Pooling::LastStep => per_step.row(per_step.rows() - 1).to_vec(),
        };
        for (y, p) in yr.row_mut(0).iter_mut().zip(&pooled) {
            *y += p / tail.readouts.len() as f64;
        }
    }
    Ok(tail.block_forward(yr).0.into_vec())
}

/// Mean softmax cross-entropy and its gradient with respect to the logits.
pub fn softmax_cross_entropy(logits: &Matrix, labels: &[usize]) -> Result<(f64, Matrix)> {
    if logits.rows() != labels.len() || labels.is_empty() {
        return Err(Error::Shape(format!("{} logit rows for {} labels", logits.rows(), labels.len())));
    }
    let b = labels.len() as f64;
    let mut grad = Matrix::zeros(logits.rows(), logits.cols());
    let mut loss = 0.0;
    for (r, &y) in labels.iter().enumerate() {
        let row = logits.row(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
        let log_z = max + sum.ln();
        loss += log_z - row[y];
        for (g, v) in grad.row_mut(r).iter_mut().zip(row) {
            *g = (v - log_z).exp() / b;
        }
        grad[(r, y)] -= 1.0 / b;
    }
    Ok((loss / b, grad))
}
