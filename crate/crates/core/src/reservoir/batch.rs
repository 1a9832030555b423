//! Batched reservoir recurrence and its reverse pass.
//!
//! Sequences of a batch are stored time-major: row `t * batch + b` holds
//! step `t` of sequence `b`. Each step is then one contiguous `batch × N`
//! block and the recurrence is a single matrix product per step.

use rand::Rng;

use super::Activation;
use crate::error::{Error, Result};
use crate::numerics::{gemm, gemm_slices, Matrix, RngStream};
use crate::topology::ReservoirMatrices;

/// Per-coordinate uniform noise; sequence `b` draws from
/// `stream.indexed(first_index + b)`, matching the per-sequence path.
#[derive(Clone, Copy, Debug)]
pub struct Noise<'a> {
    pub amp: f64,
    pub stream: &'a RngStream,
    pub first_index: u64,
}

fn check_layout(rows: usize, steps: usize) -> Result<usize> {
    if steps == 0 || rows % steps != 0 {
        return Err(Error::Shape(format!("{rows} rows do not split into {steps} steps")));
    }
    Ok(rows / steps)
}

/// States `x(t)` for every step of every sequence, from `x(0) = 0`.
pub fn forward_layer(
    m: &ReservoirMatrices,
    act: Activation,
    inputs: &Matrix,
    steps: usize,
    noise: Option<Noise<'_>>,
) -> Result<Matrix> {
    let batch = check_layout(inputs.rows(), steps)?;
    if inputs.cols() != m.input_dim() {
        return Err(Error::Shape(format!("inputs have {} columns, reservoir expects {}", inputs.cols(), m.input_dim())));
    }
    let n = m.neurons();
    let mut states = Matrix::zeros(inputs.rows(), n);
    gemm(1.0, inputs, false, &m.v, true, 0.0, &mut states);
    if let Some(noise) = noise.filter(|z| z.amp > 0.0) {
        for b in 0..batch {
            let mut rng = noise.stream.indexed(noise.first_index + b as u64).rng();
            for t in 0..steps {
                for p in states.row_mut(t * batch + b) {
                    *p += rng.random_range(-noise.amp..noise.amp);
                }
            }
        }
    }
    let block = batch * n;
    let data = states.data_mut();
    for t in 0..steps {
        let (done, rest) = data.split_at_mut(t * block);
        let cur = &mut rest[..block];
        if t > 0 {
            let prev = &done[(t - 1) * block..];
            gemm_slices(batch, n, n, 1.0, prev, false, m.w.data(), true, 1.0, cur);
        }
        if act == Activation::Tanh {
            cur.iter_mut().for_each(|z| *z = z.tanh());
        }
    }
    Ok(states)
}

/// Reverse pass through the recurrence.
///
/// `grad_states` holds the loss gradient with respect to each `x(t)` from
/// everything except the recurrence itself; the result is the gradient with
/// respect to each input `u(t)`.
pub fn backward_layer(
    m: &ReservoirMatrices,
    act: Activation,
    states: &Matrix,
    steps: usize,
    mut grad_states: Matrix,
) -> Result<Matrix> {
    let batch = check_layout(states.rows(), steps)?;
    if grad_states.shape() != states.shape() {
        return Err(Error::Shape("state gradient and states differ in shape".into()));
    }
    let n = m.neurons();
    let block = batch * n;
    let x = states.data();
    let g = grad_states.data_mut();
    for t in (0..steps).rev() {
        if t + 1 < steps {
            let (head, tail) = g.split_at_mut((t + 1) * block);
            let next_delta = &tail[..block];
            // dL/dx(t) += δ(t+1) W
            gemm_slices(batch, n, n, 1.0, next_delta, false, m.w.data(), false, 1.0, &mut head[t * block..]);
        }
        // δ(t) = dL/dx(t) ⊙ f'(z(t))
        for (gi, xi) in g[t * block..(t + 1) * block].iter_mut().zip(&x[t * block..(t + 1) * block]) {
            *gi *= act.derivative_from_output(*xi);
        }
    }
    let mut grad_inputs = Matrix::zeros(states.rows(), m.input_dim());
    gemm(1.0, &grad_states, false, &m.v, false, 0.0, &mut grad_inputs);
    Ok(grad_inputs)
}

/// Mean over steps `washout..T` of `[u; x; u²; x²]`, one row per sequence.
pub fn pool_features(inputs: &Matrix, states: &Matrix, steps: usize, washout: usize) -> Result<Matrix> {
    let batch = check_layout(inputs.rows(), steps)?;
    if states.rows() != inputs.rows() {
        return Err(Error::Shape("inputs and states differ in row count".into()));
    }
    if washout >= steps {
        return Err(Error::Input(format!("washout {washout} leaves nothing of {steps} steps")));
    }
    let (k, n) = (inputs.cols(), states.cols());
    let half = k + n;
    let scale = 1.0 / (steps - washout) as f64;
    let mut out = Matrix::zeros(batch, 2 * half);
    for t in washout..steps {
        for b in 0..batch {
            let r = t * batch + b;
            let row = out.row_mut(b);
            for (i, &u) in inputs.row(r).iter().enumerate() {
                row[i] += u * scale;
                row[half + i] += u * u * scale;
            }
            for (i, &x) in states.row(r).iter().enumerate() {
                row[k + i] += x * scale;
                row[half + k + i] += x * x * scale;
            }
        }
    }
    Ok(out)
}

/// Gradients of [`pool_features`] with respect to its inputs and states.
pub fn pool_features_backward(
    inputs: &Matrix,
    states: &Matrix,
    steps: usize,
    washout: usize,
    grad: &Matrix,
) -> Result<(Matrix, Matrix)> {
    let batch = check_layout(inputs.rows(), steps)?;
    let (k, n) = (inputs.cols(), states.cols());
    let half = k + n;
    if grad.shape() != (batch, 2 * half) {
        return Err(Error::Shape(format!("feature gradient is {:?}, expected ({batch}, {})", grad.shape(), 2 * half)));
    }
    let scale = 1.0 / (steps - washout) as f64;
    let mut gu = Matrix::zeros(inputs.rows(), k);
    let mut gx = Matrix::zeros(states.rows(), n);
    for t in washout..steps {
        for b in 0..batch {
            let r = t * batch + b;
            let g = grad.row(b);
            for ((o, &u), i) in gu.row_mut(r).iter_mut().zip(inputs.row(r)).zip(0..) {
                *o = (g[i] + 2.0 * u * g[half + i]) * scale;
            }
            for ((o, &x), i) in gx.row_mut(r).iter_mut().zip(states.row(r)).zip(0..) {
                *o = (g[k + i] + 2.0 * x * g[half + k + i]) * scale;
            }
        }
    }
    Ok((gu, gx))
}

fn concat_block(z: &mut [f64], y_prev: Option<&[f64]>, x: &[f64], ky: usize) {
    let n = x.len();
    let half = ky + n;
    match y_prev {
        Some(y) => {
            z[..ky].copy_from_slice(y);
            for (d, v) in z[half..half + ky].iter_mut().zip(y) {
                *d = v * v;
            }
        }
        None => {
            z[..ky].fill(0.0);
            z[half..half + ky].fill(0.0);
        }
    }
    z[ky..half].copy_from_slice(x);
    for (d, v) in z[half + ky..].iter_mut().zip(x) {
        *d = v * v;
    }
}

/// Series inter-layer signal `y(t) = U [y(t-1); x(t); y(t-1)²; x(t)²]`, `y(0) = 0`.
pub fn project_forward(u: &Matrix, states: &Matrix, steps: usize) -> Result<Matrix> {
    let batch = check_layout(states.rows(), steps)?;
    let (ky, n) = (u.rows(), states.cols());
    let zdim = 2 * (ky + n);
    if u.cols() != zdim {
        return Err(Error::Config(format!("inter-layer matrix has {} columns, expected 2({ky}+{n}) = {zdim}", u.cols())));
    }
    let mut y = Matrix::zeros(states.rows(), ky);
    let mut z = Matrix::zeros(batch, zdim);
    for t in 0..steps {
        for b in 0..batch {
            let prev = (t > 0).then(|| y.row((t - 1) * batch + b).to_vec());
            concat_block(z.row_mut(b), prev.as_deref(), states.row(t * batch + b), ky);
        }
        let out = &mut y.data_mut()[t * batch * ky..(t + 1) * batch * ky];
        gemm_slices(batch, zdim, ky, 1.0, z.data(), false, u.data(), true, 0.0, out);
    }
    Ok(y)
}

/// Reverse pass of [`project_forward`]: gradient with respect to the states
/// given the gradient with respect to every `y(t)`.
pub fn project_backward(u: &Matrix, y: &Matrix, states: &Matrix, steps: usize, grad_y: &Matrix) -> Result<Matrix> {
    let batch = check_layout(states.rows(), steps)?;
    let (ky, n) = (u.rows(), states.cols());
    let half = ky + n;
    if grad_y.shape() != y.shape() {
        return Err(Error::Shape("output gradient and outputs differ in shape".into()));
    }
    let mut gx = Matrix::zeros(states.rows(), n);
    let mut carry = Matrix::zeros(batch, ky);
    let mut acc = Matrix::zeros(batch, ky);
    let mut gz = Matrix::zeros(batch, 2 * half);
    for t in (0..steps).rev() {
        for b in 0..batch {
            for ((a, g), c) in acc.row_mut(b).iter_mut().zip(grad_y.row(t * batch + b)).zip(carry.row(b)) {
                *a = g + c;
            }
        }
        gemm(1.0, &acc, false, u, false, 0.0, &mut gz);
        for b in 0..batch {
            let r = t * batch + b;
            let g = gz.row(b);
            for (i, (o, &x)) in gx.row_mut(r).iter_mut().zip(states.row(r)).enumerate() {
                *o = g[ky + i] + 2.0 * x * g[half + ky + i];
            }
            let c = carry.row_mut(b);
            if t > 0 {
                let yp = y.row((t - 1) * batch + b);
                for i in 0..ky {
                    c[i] = g[i] + 2.0 * yp[i] * g[half + i];
                }
            } else {
                c.fill(0.0);
            }
        }
    }
    Ok(gx)
}

/// Rearranges sequence-major rows (`b * steps + t`) into time-major order.
pub fn to_time_major(seq_major: &Matrix, steps: usize) -> Result<Matrix> {
    let batch = check_layout(seq_major.rows(), steps)?;
    let mut out = Matrix::zeros(seq_major.rows(), seq_major.cols());
    for b in 0..batch {
        for t in 0..steps {
            out.row_mut(t * batch + b).copy_from_slice(seq_major.row(b * steps + t));
        }
    }
    Ok(out)
}

/// Rows of sequence `b` in a time-major matrix, as a `steps × cols` matrix.
pub fn sequence_of(time_major: &Matrix, steps: usize, b: usize) -> Result<Matrix> {
    let batch = check_layout(time_major.rows(), steps)?;
    if b >= batch {
        return Err(Error::Input(format!("sequence {b} out of range for batch {batch}")));
    }
    let idx: Vec<usize> = (0..steps).map(|t| t * batch + b).collect();
    Ok(time_major.select_rows(&idx))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reservoir::{run_sequence_with, StateTrace};
    use crate::topology::ReservoirSpec;

    fn small(n: usize, k: usize, seed: u64) -> ReservoirMatrices {
        let spec = ReservoirSpec {
            n,
            jump_size: 2,
            input_dim: k,
            input_sparsity: 0.7,
            alpha: 0.95,
            seed,
            ..ReservoirSpec::default()
        };
        ReservoirMatrices::build(&spec).unwrap()
    }

    fn inputs(rows: usize, k: usize, seed: u64) -> Matrix {
        let v = crate::numerics::draw_gaussian(&RngStream::new(seed, "inputs"), 0.0, 1.0, rows * k).unwrap();
        Matrix::from_vec(rows, k, v).unwrap()
    }

    #[test]
    fn batch_matches_per_sequence_runs() {
        let m = small(6, 3, 4);
        let (steps, batch) = (5, 4);
        let u = inputs(steps * batch, 3, 1);
        let stream = RngStream::new(9, "noise");
        let noise = Noise {
            amp: 0.02,
            stream: &stream,
            first_index: 10,
        };
        let x = forward_layer(&m, Activation::Tanh, &u, steps, Some(noise)).unwrap();
        for b in 0..batch {
            let seq = sequence_of(&u, steps, b).unwrap();
            let single = run_sequence_with(&m, Activation::Tanh, &seq, None, 0, 0.02, &stream.indexed(10 + b as u64))
                .unwrap();
            assert!(sequence_of(&x, steps, b).unwrap().max_abs_diff(&single.states) < 1e-12);
        }
    }

    #[test]
    fn pooled_features_match_harvest_mean() {
        let m = small(5, 2, 2);
        let (steps, batch) = (4, 3);
        let u = inputs(steps * batch, 2, 3);
        let x = forward_layer(&m, Activation::Tanh, &u, steps, None).unwrap();
        let pooled = pool_features(&u, &x, steps, 1).unwrap();
        for b in 0..batch {
            let trace = StateTrace {
                inputs: sequence_of(&u, steps, b).unwrap(),
                states: sequence_of(&x, steps, b).unwrap(),
                washout: 1,
            };
            let mean = crate::reservoir::mean_pool(&crate::reservoir::harvest(&trace, None).unwrap());
            for (p, q) in pooled.row(b).iter().zip(&mean) {
                assert!((p - q).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn layout_round_trip() {
        let sm = Matrix::from_fn(6, 2, |r, c| (r * 2 + c) as f64);
        let tm = to_time_major(&sm, 3).unwrap();
        assert_eq!(tm.row(1), sm.row(3));
        assert_eq!(sequence_of(&tm, 3, 1).unwrap(), sm.select_rows(&[3, 4, 5]));
        assert!(to_time_major(&sm, 4).is_err());
    }

    /// Scalar loss `Σ c ⊙ pooled(u, x(u))` for finite differences.
    fn loss(m: &ReservoirMatrices, u: &Matrix, steps: usize, c: &Matrix) -> f64 {
        let x = forward_layer(m, Activation::Tanh, u, steps, None).unwrap();
        let f = pool_features(u, &x, steps, 0).unwrap();
        f.data().iter().zip(c.data()).map(|(a, b)| a * b).sum()
    }

    #[test]
    fn reverse_pass_matches_finite_differences() {
        let m = small(6, 3, 7);
        let (steps, batch) = (4, 2);
        let u = inputs(steps * batch, 3, 5).scaled(0.7);
        let c = inputs(batch, 18, 6);
        let x = forward_layer(&m, Activation::Tanh, &u, steps, None).unwrap();
        let (mut gu, gx) = pool_features_backward(&u, &x, steps, 0, &c).unwrap();
        gu.add_scaled(1.0, &backward_layer(&m, Activation::Tanh, &x, steps, gx).unwrap());
        let eps = 1e-6;
        for r in 0..u.rows() {
            for k in 0..3 {
                let mut up = u.clone();
                up[(r, k)] += eps;
                let mut dn = u.clone();
                dn[(r, k)] -= eps;
                let fd = (loss(&m, &up, steps, &c) - loss(&m, &dn, steps, &c)) / (2.0 * eps);
                assert!((fd - gu[(r, k)]).abs() < 1e-7 * (1.0 + fd.abs()), "({r},{k}) {fd} vs {}", gu[(r, k)]);
            }
        }
    }

    #[test]
    fn projection_reverse_pass_matches_finite_differences() {
        let (steps, batch, n, ky) = (3, 2, 4, 2);
        let x = inputs(steps * batch, n, 8).scaled(0.5);
        let u = inputs(ky, 2 * (ky + n), 9).scaled(0.3);
        let c = inputs(steps * batch, ky, 10);
        let obj = |x: &Matrix| -> f64 {
            let y = project_forward(&u, x, steps).unwrap();
            y.data().iter().zip(c.data()).map(|(a, b)| a * b).sum()
        };
        let y = project_forward(&u, &x, steps).unwrap();
        let gx = project_backward(&u, &y, &x, steps, &c).unwrap();
        let eps = 1e-6;
        for r in 0..x.rows() {
            for i in 0..n {
                let mut up = x.clone();
                up[(r, i)] += eps;
                let mut dn = x.clone();
                dn[(r, i)] -= eps;
                let fd = (obj(&up) - obj(&dn)) / (2.0 * eps);
                assert!((fd - gx[(r, i)]).abs() < 1e-7 * (1.0 + fd.abs()), "({r},{i}) {fd} vs {}", gx[(r, i)]);
            }
        }
    }

    #[test]
    fn projection_matches_scalar_recursion() {
        let (steps, n, ky) = (4, 3, 2);
        let x = inputs(steps, n, 11).scaled(0.5);
        let u = inputs(ky, 2 * (ky + n), 12).scaled(0.3);
        let y = project_forward(&u, &x, steps).unwrap();
        let mut prev = vec![0.0; ky];
        for t in 0..steps {
            let xt = x.row(t);
            let z: Vec<f64> = prev
                .iter()
                .chain(xt)
                .copied()
                .chain(prev.iter().chain(xt).map(|v| v * v))
                .collect();
            let expect = u.matvec(&z).unwrap();
            for i in 0..ky {
                assert!((y[(t, i)] - expect[i]).abs() < 1e-12);
            }
            prev = expect;
        }
    }
}
