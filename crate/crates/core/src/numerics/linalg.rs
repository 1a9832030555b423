use crate::error::{Error, Result};
use crate::numerics::matrix::{dot, gemm, Matrix};

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
///
/// Fails with [`Error::Singular`] when a pivot drops below a small multiple
/// of the largest diagonal entry.
pub fn cholesky(a: &Matrix) -> Result<Matrix> {
    if !a.is_square() {
        return Err(Error::Dimension(format!("cholesky of a {}x{} matrix", a.rows(), a.cols())));
    }
    let n = a.rows();
    let max_diag = (0..n).fold(0.0f64, |m, i| m.max(a[(i, i)].abs()));
    let floor = max_diag * 1e-13;
    let mut l = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let s = {
                let (li, lj) = (&l.row(i)[..j], &l.row(j)[..j]);
                a[(i, j)] - dot(li, lj)
            };
            if i == j {
                if !(s > floor) {
                    return Err(Error::Singular(format!("pivot {i} is {s:e}, matrix is not positive definite")));
                }
                l[(i, i)] = s.sqrt();
            } else {
                l[(i, j)] = s / l[(j, j)];
            }
        }
    }
    Ok(l)
}

/// Solves `L Lᵀ X = B` for every column of `B`.
pub fn cholesky_solve(l: &Matrix, b: &Matrix) -> Result<Matrix> {
    let n = l.rows();
    if b.rows() != n {
        return Err(Error::Dimension(format!("factor is {n}x{n} but right-hand side has {} rows", b.rows())));
    }
    // work on Bᵀ so each right-hand side is a contiguous row
    let mut z = b.transpose();
    for r in 0..z.rows() {
        let col = z.row_mut(r);
        for i in 0..n {
            let s = col[i] - dot(&l.row(i)[..i], &col[..i]);
            col[i] = s / l[(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = col[i];
            for k in i + 1..n {
                s -= l[(k, i)] * col[k];
            }
            col[i] = s / l[(i, i)];
        }
    }
    Ok(z.transpose())
}

/// Streaming accumulator for the normal equations `XᵀX` and `XᵀY`.
///
/// Lets a ridge readout be fitted over more rows than fit in memory at once.
#[derive(Clone, Debug)]
pub struct NormalEquations {
    gram: Matrix,
    cross: Matrix,
    samples: usize,
}

impl NormalEquations {
    pub fn new(features: usize, outputs: usize) -> Self {
        Self {
            gram: Matrix::zeros(features, features),
            cross: Matrix::zeros(features, outputs),
            samples: 0,
        }
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn add(&mut self, x: &Matrix, y: &Matrix) -> Result<()> {
        if x.rows() != y.rows() {
            return Err(Error::Dimension(format!("X has {} rows but Y has {}", x.rows(), y.rows())));
        }
        if x.cols() != self.gram.rows() || y.cols() != self.cross.cols() {
            return Err(Error::Dimension(format!(
                "batch is {}+{} wide, accumulator expects {}+{}",
                x.cols(),
                y.cols(),
                self.gram.rows(),
                self.cross.cols()
            )));
        }
        gemm(1.0, x, true, x, false, 1.0, &mut self.gram);
        gemm(1.0, x, true, y, false, 1.0, &mut self.cross);
        self.samples += x.rows();
        Ok(())
    }

    /// `(kI + XᵀX)⁻¹ XᵀY`; with `k = 0` this is the plain least-squares solution.
    pub fn solve(&self, k: f64) -> Result<Matrix> {
        if !(k >= 0.0) || !k.is_finite() {
            return Err(Error::Parameter(format!("ridge coefficient must be a finite k >= 0, got {k}")));
        }
        let mut a = self.gram.clone();
        for i in 0..a.rows() {
            a[(i, i)] += k;
        }
        let l = cholesky(&a).map_err(|e| match e {
            Error::Singular(msg) if k == 0.0 => {
                Error::Singular(format!("XᵀX is not invertible ({msg}); use a ridge coefficient k > 0"))
            }
            other => other,
        })?;
        cholesky_solve(&l, &self.cross)
    }

    /// Max-abs residual of the normal equations for a candidate solution.
    pub fn residual(&self, w: &Matrix, k: f64) -> f64 {
        let mut r = self.cross.scaled(-1.0);
        gemm(1.0, &self.gram, false, w, false, 1.0, &mut r);
        r.add_scaled(k, w);
        r.max_abs()
    }
}

/// Ridge regression readout `W_out = (kI + XᵀX)⁻¹XᵀY`.
pub fn ridge_solve(x: &Matrix, y: &Matrix, k: f64) -> Result<Matrix> {
    let mut ne = NormalEquations::new(x.cols(), y.cols());
    ne.add(x, y)?;
    ne.solve(k)
}
