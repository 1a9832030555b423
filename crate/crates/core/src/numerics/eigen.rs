//! Spectral radius of dense real matrices.
//!
//! [`power_iteration`] fits the two-term recurrence `A²v ≈ p·Av + q·v` at every
//! step, which resolves a dominant complex-conjugate pair as well as a single
//! real eigenvalue. When the dominant moduli are too close for it to settle,
//! [`spectral_radius`] falls back to the full eigenvalue set computed by
//! balancing, Hessenberg reduction and shifted QR sweeps ([`eigenvalues`]).

use crate::error::{Error, Result};
use crate::numerics::matrix::{dot, norm2, Matrix};
use crate::numerics::rng::{gaussian, RngStream};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Eigenvalue {
    pub re: f64,
    pub im: f64,
}

impl Eigenvalue {
    pub fn modulus(&self) -> f64 {
        self.re.hypot(self.im)
    }
}

/// Largest eigenvalue modulus, power iteration first and dense QR as fallback.
pub fn spectral_radius(m: &Matrix, tol: f64, max_iters: usize) -> Result<f64> {
    match power_iteration(m, tol, max_iters) {
        Ok(rho) => Ok(rho),
        Err(Error::NoConvergence { iterations, last_estimate }) => match eigenvalues(m) {
            Ok(ev) => Ok(ev.iter().fold(0.0, |r, e| r.max(e.modulus()))),
            Err(_) => Err(Error::NoConvergence { iterations, last_estimate }),
        },
        Err(e) => Err(e),
    }
}

/// Power iteration with per-step normalization.
///
/// Converged once successive estimates differ by less than `tol` and the
/// iterate lies in a (numerically) invariant subspace of dimension at most two.
pub fn power_iteration(m: &Matrix, tol: f64, max_iters: usize) -> Result<f64> {
    if !m.is_square() {
        return Err(Error::Dimension(format!("spectral radius of a {}x{} matrix", m.rows(), m.cols())));
    }
    if max_iters == 0 {
        return Err(Error::Parameter("max_iters must be at least 1".into()));
    }
    let n = m.rows();
    if n == 0 {
        return Ok(0.0);
    }
    let mut rng = RngStream::new(0x5eed, "power-iteration").rng();
    let mut v: Vec<f64> = (0..n).map(|_| gaussian(&mut rng, 0.0, 1.0)).collect();
    normalize(&mut v);
    let mut w1 = m.matvec(&v)?;
    let mut prev = f64::NAN;
    let mut est = 0.0;
    for it in 1..=max_iters {
        let n1 = norm2(&w1);
        if n1 == 0.0 {
            // v is in the kernel; only happens for nilpotent-like inputs
            return Ok(0.0);
        }
        let w2 = m.matvec(&w1)?;
        let (e, resid) = two_step_estimate(&v, &w1, &w2);
        est = e;
        if (est - prev).abs() < tol && resid <= 100.0 * tol {
            return Ok(est);
        }
        prev = est;
        // advance: v <- w1/|w1|, and A v = w2/|w1|
        v = w1.iter().map(|x| x / n1).collect();
        w1 = w2.iter().map(|x| x / n1).collect();
        if it == max_iters {
            break;
        }
    }
    Err(Error::NoConvergence {
        iterations: max_iters,
        last_estimate: est,
    })
}

fn normalize(v: &mut [f64]) {
    let n = norm2(v);
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

/// Returns the dominant modulus implied by `w2 ≈ p·w1 + q·v` and the relative
/// residual of that fit. `v` is unit length and `w1 = Av`, `w2 = Aw1`.
fn two_step_estimate(v: &[f64], w1: &[f64], w2: &[f64]) -> (f64, f64) {
    let a11 = dot(w1, w1);
    let a12 = dot(w1, v);
    let a22 = dot(v, v);
    let b1 = dot(w1, w2);
    let b2 = dot(v, w2);
    let w2n = norm2(w2).max(f64::MIN_POSITIVE);
    let det = a11 * a22 - a12 * a12;
    if det <= 1e-12 * a11 * a22 {
        // iterate is (numerically) an eigenvector
        let lambda = b1 / a11;
        let resid = w2.iter().zip(w1).map(|(a, b)| (a - lambda * b).powi(2)).sum::<f64>().sqrt() / w2n;
        return (lambda.abs(), resid);
    }
    let p = (b1 * a22 - b2 * a12) / det;
    let q = (a11 * b2 - a12 * b1) / det;
    let resid = w2
        .iter()
        .zip(w1.iter().zip(v))
        .map(|(c, (b, a))| (c - p * b - q * a).powi(2))
        .sum::<f64>()
        .sqrt()
        / w2n;
    let disc = p * p + 4.0 * q;
    let modulus = if disc >= 0.0 {
        let s = disc.sqrt();
        ((p + s) / 2.0).abs().max(((p - s) / 2.0).abs())
    } else {
        (-q).sqrt()
    };
    (modulus, resid)
}

/// All eigenvalues of a real square matrix.
pub fn eigenvalues(m: &Matrix) -> Result<Vec<Eigenvalue>> {
    if !m.is_square() {
        return Err(Error::Dimension(format!("eigenvalues of a {}x{} matrix", m.rows(), m.cols())));
    }
    let n = m.rows();
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut a = OneBased::from_matrix(m);
    balance(&mut a);
    hessenberg(&mut a);
    hqr(&mut a)
}

/// Square work array addressed with 1-based indices, as in the classic
/// EISPACK-style formulations the QR sweep follows.
struct OneBased {
    n: usize,
    stride: usize,
    data: Vec<f64>,
}

impl OneBased {
    fn from_matrix(m: &Matrix) -> Self {
        let n = m.rows();
        let stride = n + 1;
        let mut data = vec![0.0; stride * stride];
        for i in 0..n {
            data[(i + 1) * stride + 1..(i + 1) * stride + 1 + n].copy_from_slice(m.row(i));
        }
        Self { n, stride, data }
    }

    #[inline]
    fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.stride + j]
    }

    #[inline]
    fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.stride + j] = v;
    }

    #[inline]
    fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.stride..(i + 1) * self.stride]
    }
}

fn balance(a: &mut OneBased) {
    const RADIX: f64 = 2.0;
    let n = a.n;
    let sqrdx = RADIX * RADIX;
    let mut done = false;
    while !done {
        done = true;
        for i in 1..=n {
            let mut r = 0.0;
            let mut c = 0.0;
            for j in 1..=n {
                if j != i {
                    c += a.get(j, i).abs();
                    r += a.get(i, j).abs();
                }
            }
            if c != 0.0 && r != 0.0 {
                let mut g = r / RADIX;
                let mut f = 1.0;
                let s = c + r;
                while c < g {
                    f *= RADIX;
                    c *= sqrdx;
                }
                g = r * RADIX;
                while c > g {
                    f /= RADIX;
                    c /= sqrdx;
                }
                if (c + r) / f < 0.95 * s {
                    done = false;
                    let g = 1.0 / f;
                    for j in 1..=n {
                        let v = a.get(i, j) * g;
                        a.set(i, j, v);
                    }
                    for j in 1..=n {
                        let v = a.get(j, i) * f;
                        a.set(j, i, v);
                    }
                }
            }
        }
    }
}

/// Reduction to upper Hessenberg form by stabilized elementary similarity
/// transforms. Row and column updates of one elimination step commute, so
/// both are applied in row-major order.
fn hessenberg(a: &mut OneBased) {
    let n = a.n;
    let stride = a.stride;
    let mut y = vec![0.0; n + 1];
    for m in 2..n {
        let mut x = 0.0f64;
        let mut piv = m;
        for j in m..=n {
            if a.get(j, m - 1).abs() > x.abs() {
                x = a.get(j, m - 1);
                piv = j;
            }
        }
        if piv != m {
            for j in m - 1..=n {
                a.data.swap(piv * stride + j, m * stride + j);
            }
            for j in 1..=n {
                a.data.swap(j * stride + piv, j * stride + m);
            }
        }
        if x == 0.0 {
            continue;
        }
        let pivot_row: Vec<f64> = a.row(m)[m..=n].to_vec();
        for i in m + 1..=n {
            let yi = a.get(i, m - 1) / x;
            y[i] = yi;
            a.set(i, m - 1, 0.0);
            if yi != 0.0 {
                let row = &mut a.data[i * stride + m..i * stride + n + 1];
                for (r, p) in row.iter_mut().zip(&pivot_row) {
                    *r -= yi * p;
                }
            }
        }
        for j in 1..=n {
            let row = a.row(j);
            let s = dot(&row[m + 1..=n], &y[m + 1..=n]);
            let v = a.get(j, m) + s;
            a.set(j, m, v);
        }
    }
    for i in 3..=n {
        for j in 1..i - 1 {
            a.set(i, j, 0.0);
        }
    }
}

fn sign(a: f64, b: f64) -> f64 {
    if b >= 0.0 {
        a.abs()
    } else {
        -a.abs()
    }
}

/// Eigenvalues of an upper Hessenberg matrix by Francis double-shift QR.
fn hqr(a: &mut OneBased) -> Result<Vec<Eigenvalue>> {
    const MAX_ITS: usize = 60;
    let n = a.n;
    let mut wr = vec![0.0; n + 1];
    let mut wi = vec![0.0; n + 1];
    let mut anorm = 0.0;
    for i in 1..=n {
        for j in i.saturating_sub(1).max(1)..=n {
            anorm += a.get(i, j).abs();
        }
    }
    let mut nn = n;
    let mut t = 0.0;
    let (mut p, mut q, mut r): (f64, f64, f64);
    while nn >= 1 {
        let mut its = 0;
        loop {
            let mut l = nn;
            while l >= 2 {
                let mut s = a.get(l - 1, l - 1).abs() + a.get(l, l).abs();
                if s == 0.0 {
                    s = anorm;
                }
                if a.get(l, l - 1).abs() + s == s {
                    a.set(l, l - 1, 0.0);
                    break;
                }
                l -= 1;
            }
            let mut x = a.get(nn, nn);
            if l == nn {
                wr[nn] = x + t;
                wi[nn] = 0.0;
                nn -= 1;
            } else {
                let mut y = a.get(nn - 1, nn - 1);
                let mut w = a.get(nn, nn - 1) * a.get(nn - 1, nn);
                if l == nn - 1 {
                    p = 0.5 * (y - x);
                    q = p * p + w;
                    let mut z = q.abs().sqrt();
                    x += t;
                    if q >= 0.0 {
                        z = p + sign(z, p);
                        wr[nn - 1] = x + z;
                        wr[nn] = x + z;
                        if z != 0.0 {
                            wr[nn] = x - w / z;
                        }
                        wi[nn - 1] = 0.0;
                        wi[nn] = 0.0;
                    } else {
                        wr[nn - 1] = x + p;
                        wr[nn] = x + p;
                        wi[nn - 1] = -z;
                        wi[nn] = z;
                    }
                    nn -= 2;
                } else {
                    if its == MAX_ITS {
                        return Err(Error::NoConvergence {
                            iterations: its,
                            last_estimate: wr.iter().zip(&wi).fold(0.0, |m, (a, b)| m.max(a.hypot(*b))),
                        });
                    }
                    if its > 0 && its % 10 == 0 {
                        // exceptional shift
                        t += x;
                        for i in 1..=nn {
                            let v = a.get(i, i) - x;
                            a.set(i, i, v);
                        }
                        let s = a.get(nn, nn - 1).abs() + a.get(nn - 1, nn - 2).abs();
                        x = 0.75 * s;
                        y = x;
                        w = -0.4375 * s * s;
                    }
                    its += 1;
                    let mut m = nn - 2;
                    let mut z;
                    loop {
                        z = a.get(m, m);
                        let rr = x - z;
                        let ss = y - z;
                        p = (rr * ss - w) / a.get(m + 1, m) + a.get(m, m + 1);
                        q = a.get(m + 1, m + 1) - z - rr - ss;
                        r = a.get(m + 2, m + 1);
                        let s = p.abs() + q.abs() + r.abs();
                        p /= s;
                        q /= s;
                        r /= s;
                        if m == l {
                            break;
                        }
                        let u = a.get(m, m - 1).abs() * (q.abs() + r.abs());
                        let v = p.abs() * (a.get(m - 1, m - 1).abs() + z.abs() + a.get(m + 1, m + 1).abs());
                        if u + v == v {
                            break;
                        }
                        m -= 1;
                    }
                    for i in m + 2..=nn {
                        a.set(i, i - 2, 0.0);
                        if i != m + 2 {
                            a.set(i, i - 3, 0.0);
                        }
                    }
                    let mut k = m;
                    while k + 1 <= nn {
                        if k != m {
                            p = a.get(k, k - 1);
                            q = a.get(k + 1, k - 1);
                            r = 0.0;
                            if k != nn - 1 {
                                r = a.get(k + 2, k - 1);
                            }
                            x = p.abs() + q.abs() + r.abs();
                            if x != 0.0 {
                                p /= x;
                                q /= x;
                                r /= x;
                            }
                        }
                        let s = sign((p * p + q * q + r * r).sqrt(), p);
                        if s != 0.0 {
                            if k == m {
                                if l != m {
                                    let v = -a.get(k, k - 1);
                                    a.set(k, k - 1, v);
                                }
                            } else {
                                a.set(k, k - 1, -s * x);
                            }
                            p += s;
                            x = p / s;
                            y = q / s;
                            z = r / s;
                            q /= p;
                            r /= p;
                            for j in k..=nn {
                                let mut pp = a.get(k, j) + q * a.get(k + 1, j);
                                if k != nn - 1 {
                                    pp += r * a.get(k + 2, j);
                                    let v = a.get(k + 2, j) - pp * z;
                                    a.set(k + 2, j, v);
                                }
                                let v = a.get(k + 1, j) - pp * y;
                                a.set(k + 1, j, v);
                                let v = a.get(k, j) - pp * x;
                                a.set(k, j, v);
                            }
                            let mmin = nn.min(k + 3);
                            for i in l..=mmin {
                                let mut pp = x * a.get(i, k) + y * a.get(i, k + 1);
                                if k != nn - 1 {
                                    pp += z * a.get(i, k + 2);
                                    let v = a.get(i, k + 2) - pp * r;
                                    a.set(i, k + 2, v);
                                }
                                let v = a.get(i, k + 1) - pp * q;
                                a.set(i, k + 1, v);
                                let v = a.get(i, k) - pp;
                                a.set(i, k, v);
                            }
                        }
                        k += 1;
                    }
                }
            }
            if nn < 2 || l + 1 >= nn {
                break;
            }
        }
    }
    Ok((1..=n).map(|i| Eigenvalue { re: wr[i], im: wi[i] }).collect())
}
