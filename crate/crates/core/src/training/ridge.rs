use super::model::ViRModel;
use crate::error::{Error, Result};
use crate::numerics::{ridge_solve, Matrix, NormalEquations};
use crate::patches::ImageBatch;

/// Closed-form readout `(kI + XᵀX)⁻¹XᵀY`.
pub fn fit_ridge(x: &Matrix, y: &Matrix, k: f64) -> Result<Matrix> {
    if x.rows() != y.rows() {
        return Err(Error::Dimension(format!("X has {} rows but Y has {}", x.rows(), y.rows())));
    }
    ridge_solve(x, y, k)
}

/// One-hot target rows.
pub fn one_hot(labels: &[usize], classes: usize) -> Matrix {
    let mut y = Matrix::zeros(labels.len(), classes);
    for (r, &l) in labels.iter().enumerate() {
        y[(r, l)] = 1.0;
    }
    y
}

/// Appends a constant-one column.
pub fn with_bias_column(x: &Matrix) -> Matrix {
    Matrix::from_fn(x.rows(), x.cols() + 1, |r, c| if c < x.cols() { x[(r, c)] } else { 1.0 })
}

/// Mean over branches of `[features, 1] · W_out`.
pub fn ridge_scores(pooled: &[Matrix], w_out: &[Matrix]) -> Result<Matrix> {
    if pooled.len() != w_out.len() || pooled.is_empty() {
        return Err(Error::Shape(format!("{} feature sets for {} ridge readouts", pooled.len(), w_out.len())));
    }
    let mut acc = Matrix::zeros(pooled[0].rows(), w_out[0].cols());
    for (f, w) in pooled.iter().zip(w_out) {
        if f.cols() + 1 != w.rows() {
            return Err(Error::Shape(format!("features have {} columns, readout expects {}", f.cols(), w.rows() - 1)));
        }
        acc.add_scaled(1.0, &with_bias_column(f).matmul(w)?);
    }
    acc.scale_mut(1.0 / pooled.len() as f64);
    Ok(acc)
}

/// Result of a streamed ridge fit.
pub struct RidgeFit {
    pub readouts: Vec<Matrix>,
    /// Training accuracy over the retained prefix of the training set.
    pub train_accuracy: f64,
    /// Mean squared error of the fit over the same prefix.
    pub train_mse: f64,
    pub retained: usize,
}

/// Streams the training set through the reservoirs once, accumulating the
/// normal equations per branch, then solves them.
///
/// Pooled features of the first `retain` images are kept so training
/// accuracy needs no second pass.
pub fn fit_ridge_streaming(model: &ViRModel, data: &ImageBatch, k: f64, chunk: usize, retain: usize) -> Result<RidgeFit> {
    model.check_data(data)?;
    if data.is_empty() {
        return Err(Error::Input("empty training set".into()));
    }
    let dims = model.deep.feature_dims();
    let mut normal: Vec<NormalEquations> = dims.iter().map(|&f| NormalEquations::new(f + 1, model.classes)).collect();
    let retain = retain.min(data.len());
    let mut kept: Vec<Vec<Matrix>> = vec![Vec::new(); dims.len()];
    let idx: Vec<usize> = (0..data.len()).collect();
    for (c, part) in idx.chunks(chunk.max(1)).enumerate() {
        let (pooled, _) = model.features(data, part)?;
        let labels: Vec<usize> = part.iter().map(|&i| data.label(i)).collect();
        let y = one_hot(&labels, model.classes);
        for (b, f) in pooled.iter().enumerate() {
            normal[b].add(&with_bias_column(f), &y)?;
            let start = c * chunk.max(1);
            if start < retain {
                let n = (retain - start).min(f.rows());
                kept[b].push(f.select_rows(&(0..n).collect::<Vec<_>>()));
            }
        }
    }
    let readouts = normal.iter().map(|ne| ne.solve(k)).collect::<Result<Vec<_>>>()?;
    let mut train_accuracy = 0.0;
    let mut train_mse = 0.0;
    if retain > 0 {
        let pooled: Vec<Matrix> = kept.iter().map(|parts| Matrix::vstack(parts)).collect::<Result<_>>()?;
        let scores = ridge_scores(&pooled, &readouts)?;
        let labels: Vec<usize> = (0..retain).map(|i| data.label(i)).collect();
        let y = one_hot(&labels, model.classes);
        train_accuracy = (0..retain).filter(|&r| scores.argmax_row(r) == labels[r]).count() as f64 / retain as f64;
        train_mse = scores.data().iter().zip(y.data()).map(|(s, t)| (s - t) * (s - t)).sum::<f64>()
            / (retain * model.classes) as f64;
    }
    Ok(RidgeFit {
        readouts,
        train_accuracy,
        train_mse,
        retained: retain,
    })
}
