//! Nearly-fully-connected reservoir construction.
//!
//! `W[i][j]` is the weight from neuron `j` to neuron `i`, so the state update
//! reads `x' = f(Vu + Wx)`. Indices are 0-based; the ring closes with
//! `W[0][N-1]` and jumps run `0 ↔ ℓ ↔ 2ℓ ↔ …` without wrapping.
//!
//! Construction is a fixed pipeline, each stage keyed to its own random
//! stream under the reservoir seed:
//!
//! 1. every entry (self-loops included) set to `r_k`,
//! 2. ring entries `W[q+1][q]` and `W[0][N-1]` set to `r_i`,
//! 3. bidirectional jump entries set to `r_j` (after the ring, so jumps win),
//! 4. random signs (`"signs"` stream),
//! 5. one symmetric off-diagonal pair zeroed (`"disconnect"` stream),
//! 6. rescaling to spectral radius `α`.
//!
//! The input matrix `V` is drawn from the `"input-weights"` stream.

mod export;
mod graph;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{spectral_radius, uniform, unit_open_closed, Matrix, RngStream};

pub use export::{export_matrices, read_matrix_bin, write_matrix_bin, MatrixSidecar};
pub use graph::Graph;

/// Tolerance and iteration cap used whenever a construction step needs `|λ_max|`.
pub const RADIUS_TOL: f64 = 1e-12;
pub const RADIUS_MAX_ITERS: usize = 400;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReservoirSpec {
    /// Neuron count `N`.
    pub n: usize,
    /// Ring weight `r_i`.
    pub ring_weight: f64,
    /// Jump weight `r_j`.
    pub jump_weight: f64,
    /// Base weight `r_k` of every other connection.
    pub base_weight: f64,
    /// Jump size `ℓ`, `1 < ℓ < N`.
    pub jump_size: usize,
    /// Target spectral radius `α ∈ (0, 1)`.
    pub alpha: f64,
    /// Input dimension `K`.
    pub input_dim: usize,
    /// Fraction of nonzero input weights.
    pub input_sparsity: f64,
    /// Multiplier applied to every input weight.
    pub input_scaling: f64,
    pub seed: u64,
}

impl Default for ReservoirSpec {
    fn default() -> Self {
        Self {
            n: 1000,
            ring_weight: 0.05,
            jump_weight: 0.5,
            base_weight: 0.08,
            jump_size: 137,
            alpha: 0.9,
            input_dim: 256,
            input_sparsity: 0.05,
            input_scaling: 1.0,
            seed: 42,
        }
    }
}

impl ReservoirSpec {
    pub fn validate(&self) -> Result<()> {
        self.validate_structure()?;
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Spec(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        Ok(())
    }

    /// Everything except the bound on `α`; diagnostics sweep radii above 1.
    pub fn validate_structure(&self) -> Result<()> {
        if self.n < 3 {
            return Err(Error::Spec(format!("need at least 3 neurons, got {}", self.n)));
        }
        if !(self.jump_size > 1 && self.jump_size < self.n) {
            return Err(Error::Spec(format!(
                "jump size must satisfy 1 < ℓ < N, got ℓ={} with N={}",
                self.jump_size, self.n
            )));
        }
        for (name, w) in [
            ("ring_weight", self.ring_weight),
            ("jump_weight", self.jump_weight),
            ("base_weight", self.base_weight),
        ] {
            if !(w > 0.0 && w <= 1.0) {
                return Err(Error::Spec(format!("{name} must lie in (0, 1], got {w}")));
            }
        }
        if self.input_dim == 0 {
            return Err(Error::Spec("input_dim must be at least 1".into()));
        }
        if !(self.input_sparsity > 0.0 && self.input_sparsity <= 1.0) {
            return Err(Error::Spec(format!("input_sparsity must lie in (0, 1], got {}", self.input_sparsity)));
        }
        if !(self.input_scaling > 0.0 && self.input_scaling.is_finite()) {
            return Err(Error::Spec(format!("input_scaling must be positive, got {}", self.input_scaling)));
        }
        Ok(())
    }

    pub fn stream(&self, label: &str) -> RngStream {
        RngStream::new(self.seed, label)
    }
}

/// The fixed matrices a [`ReservoirSpec`] produces.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReservoirMatrices {
    /// Recurrent weights, `N × N`.
    pub w: Matrix,
    /// Input weights, `N × K`.
    pub v: Matrix,
    /// Spectral radius of `w` as re-measured after scaling.
    pub rho: f64,
    pub disconnected_pair: (usize, usize),
}

impl ReservoirMatrices {
    pub fn build(spec: &ReservoirSpec) -> Result<Self> {
        spec.validate()?;
        Self::build_with_radius(spec, spec.alpha)
    }

    /// Full pipeline with an arbitrary positive target radius.
    pub fn build_with_radius(spec: &ReservoirSpec, radius: f64) -> Result<Self> {
        spec.validate_structure()?;
        let magnitudes = build_magnitudes(spec)?;
        let signed = assign_signs(&magnitudes, &spec.stream("signs"));
        let (cut, pair) = apply_disconnect(&signed, &spec.stream("disconnect"))?;
        let (w, rho) = scale_to_radius(&cut, radius)?;
        let v = build_input_matrix(spec, &spec.stream("input-weights"))?;
        Ok(Self {
            w,
            v,
            rho,
            disconnected_pair: pair,
        })
    }

    pub fn neurons(&self) -> usize {
        self.w.rows()
    }

    pub fn input_dim(&self) -> usize {
        self.v.cols()
    }

    /// Same matrices with `W` rescaled to a new spectral radius.
    pub fn with_radius(&self, radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::Parameter(format!("radius must be positive, got {radius}")));
        }
        let factor = radius / self.rho;
        Ok(Self {
            w: self.w.scaled(factor),
            v: self.v.clone(),
            rho: radius,
            disconnected_pair: self.disconnected_pair,
        })
    }

    /// Same matrices with `V` multiplied by `factor`.
    pub fn with_input_scale(&self, factor: f64) -> Self {
        Self {
            w: self.w.clone(),
            v: self.v.scaled(factor),
            rho: self.rho,
            disconnected_pair: self.disconnected_pair,
        }
    }
}

/// Unsigned weight magnitudes before the random stages.
pub fn build_magnitudes(spec: &ReservoirSpec) -> Result<Matrix> {
    let n = spec.n;
    let l = spec.jump_size;
    if n < 2 {
        return Err(Error::Spec(format!("need at least 2 neurons, got {n}")));
    }
    if !(l > 1 && l < n) {
        return Err(Error::Spec(format!("jump size must satisfy 1 < ℓ < N, got ℓ={l} with N={n}")));
    }
    let mut w = Matrix::filled(n, n, spec.base_weight);
    for q in 0..n - 1 {
        w[(q + 1, q)] = spec.ring_weight;
    }
    w[(0, n - 1)] = spec.ring_weight;
    let mut a = 0;
    while a + l < n {
        let b = a + l;
        w[(a, b)] = spec.jump_weight;
        w[(b, a)] = spec.jump_weight;
        a = b;
    }
    Ok(w)
}

/// Negates each entry whose paired draw `e ∈ (0, 1]` falls below 0.5.
///
/// One draw is consumed per cell in row-major order, zeros included, so the
/// sign pattern depends only on the stream and the shape.
pub fn assign_signs(magnitudes: &Matrix, stream: &RngStream) -> Matrix {
    let mut rng = stream.rng();
    let mut out = magnitudes.clone();
    for x in out.data_mut() {
        let e = unit_open_closed(&mut rng);
        if e < 0.5 {
            *x = -*x;
        }
    }
    out
}

/// Zeroes one uniformly drawn off-diagonal entry together with its mirror.
pub fn apply_disconnect(w: &Matrix, stream: &RngStream) -> Result<(Matrix, (usize, usize))> {
    if !w.is_square() {
        return Err(Error::Dimension(format!("disconnect needs a square matrix, got {:?}", w.shape())));
    }
    let n = w.rows();
    if n < 2 {
        return Err(Error::Spec("disconnect needs at least 2 neurons".into()));
    }
    let mut rng = stream.rng();
    let idx = rng.random_range(0..n * (n - 1));
    let i = idx / (n - 1);
    let mut j = idx % (n - 1);
    if j >= i {
        j += 1;
    }
    let mut out = w.clone();
    out[(i, j)] = 0.0;
    out[(j, i)] = 0.0;
    Ok((out, (i, j)))
}

/// Returns `αW/|λ_max|` and its re-measured spectral radius.
pub fn scale_to_radius(w: &Matrix, alpha: f64) -> Result<(Matrix, f64)> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::Parameter(format!("alpha must be positive, got {alpha}")));
    }
    let lambda = spectral_radius(w, RADIUS_TOL, RADIUS_MAX_ITERS)?;
    if !(lambda > f64::MIN_POSITIVE) {
        return Err(Error::DegenerateSpectrum("spectral radius is zero, nothing to scale".into()));
    }
    let scaled = w.scaled(alpha / lambda);
    let rho = spectral_radius(&scaled, RADIUS_TOL, RADIUS_MAX_ITERS)?;
    Ok((scaled, rho))
}

/// Sparse `N × K` input matrix.
///
/// Each cell consumes two draws: a keep/drop draw against the sparsity and a
/// value draw in `(-1, 1)`, so the layout does not depend on `input_scaling`.
pub fn build_input_matrix(spec: &ReservoirSpec, stream: &RngStream) -> Result<Matrix> {
    if !(spec.input_sparsity > 0.0 && spec.input_sparsity <= 1.0) {
        return Err(Error::Spec(format!("input_sparsity must lie in (0, 1], got {}", spec.input_sparsity)));
    }
    let mut rng = stream.rng();
    let mut v = Matrix::zeros(spec.n, spec.input_dim);
    for x in v.data_mut() {
        let keep = rng.random::<f64>() < spec.input_sparsity;
        let mut value = uniform(&mut rng, -1.0, 1.0);
        if value == -1.0 {
            value = 0.0;
        }
        if keep {
            *x = value * spec.input_scaling;
        }
    }
    Ok(v)
}

/// Unweighted undirected view: `{i, j}` is an edge iff either direction is nonzero.
pub fn undirected_adjacency(w: &Matrix, include_self_loops: bool) -> Result<Graph> {
    if !w.is_square() {
        return Err(Error::Dimension(format!("adjacency needs a square matrix, got {:?}", w.shape())));
    }
    let n = w.rows();
    let mut g = Graph::empty(n);
    for i in 0..n {
        for j in i..n {
            if i == j {
                if include_self_loops && w[(i, i)] != 0.0 {
                    g.add_edge(i, i);
                }
            } else if w[(i, j)] != 0.0 || w[(j, i)] != 0.0 {
                g.add_edge(i, j);
            }
        }
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(n: usize, l: usize) -> ReservoirSpec {
        ReservoirSpec {
            n,
            jump_size: l,
            input_dim: 3,
            ..ReservoirSpec::default()
        }
    }

    #[test]
    fn magnitudes_n5_l2() {
        let m = build_magnitudes(&spec(5, 2)).unwrap();
        // 1-based (row, col) pairs from the construction rule
        let ring = [(2, 1), (3, 2), (4, 3), (5, 4), (1, 5)];
        let jump = [(1, 3), (3, 1), (3, 5), (5, 3)];
        for i in 1..=5 {
            for j in 1..=5 {
                let expected = if jump.contains(&(i, j)) {
                    0.5
                } else if ring.contains(&(i, j)) {
                    0.05
                } else {
                    0.08
                };
                assert_eq!(m[(i - 1, j - 1)], expected, "cell ({i},{j})");
            }
        }
    }

    #[test]
    fn magnitudes_n3_jump_overrides_ring() {
        let m = build_magnitudes(&spec(3, 2)).unwrap();
        assert_eq!(m[(1, 0)], 0.05);
        assert_eq!(m[(2, 1)], 0.05);
        // (1,3) is both a ring and a jump cell; the jump is written last
        assert_eq!(m[(0, 2)], 0.5);
        assert_eq!(m[(2, 0)], 0.5);
        assert_eq!(m[(0, 0)], 0.08);
    }

    #[test]
    fn magnitudes_have_no_zeros() {
        for (n, l) in [(3, 2), (10, 3), (50, 7), (64, 63)] {
            assert_eq!(build_magnitudes(&spec(n, l)).unwrap().count_zeros(), 0);
        }
    }

    #[test]
    fn jump_size_must_be_below_n() {
        assert!(matches!(build_magnitudes(&spec(5, 5)), Err(Error::Spec(_))));
        assert!(matches!(build_magnitudes(&spec(5, 1)), Err(Error::Spec(_))));
    }

    #[test]
    fn signs_are_reproducible_and_keep_zeros() {
        let mut m = Matrix::filled(20, 20, 0.08);
        m[(3, 4)] = 0.0;
        let s = RngStream::new(9, "signs");
        let a = assign_signs(&m, &s);
        assert_eq!(a, assign_signs(&m, &s));
        assert_eq!(a[(3, 4)], 0.0);
        assert!(a.data().iter().all(|x| x.abs() == 0.08 || *x == 0.0));
    }

    #[test]
    fn signs_are_balanced() {
        let m = Matrix::filled(1000, 1000, 1.0);
        let a = assign_signs(&m, &RngStream::new(1, "signs"));
        let neg = a.data().iter().filter(|x| **x < 0.0).count() as f64 / 1e6;
        assert!((neg - 0.5).abs() < 0.002, "{neg}");
    }

    #[test]
    fn disconnect_zeroes_a_symmetric_off_diagonal_pair() {
        let m = Matrix::filled(30, 30, 0.08);
        for seed in 0..50 {
            let s = RngStream::new(seed, "disconnect");
            let (w, (i, j)) = apply_disconnect(&m, &s).unwrap();
            assert_ne!(i, j);
            assert_eq!(w.count_zeros(), 2);
            assert_eq!(w[(i, j)], 0.0);
            assert_eq!(w[(j, i)], 0.0);
            assert_eq!(apply_disconnect(&m, &s).unwrap().1, (i, j));
        }
        assert!(apply_disconnect(&Matrix::filled(1, 1, 1.0), &RngStream::new(0, "d")).is_err());
    }

    #[test]
    fn scaling_a_scalar_matrix() {
        let (w, rho) = scale_to_radius(&Matrix::identity(2).scaled(2.0), 0.9).unwrap();
        assert!(w.max_abs_diff(&Matrix::identity(2).scaled(0.9)) < 1e-12);
        assert!((rho - 0.9).abs() < 1e-12);
        let (w2, rho2) = scale_to_radius(&w, 0.9).unwrap();
        assert!((rho2 - 0.9).abs() < 1e-12);
        assert!(w2.max_abs_diff(&w) < 1e-12);
    }

    #[test]
    fn zero_matrix_cannot_be_scaled() {
        assert!(matches!(
            scale_to_radius(&Matrix::zeros(3, 3), 0.9),
            Err(Error::DegenerateSpectrum(_))
        ));
    }

    #[test]
    fn dense_input_matrix_in_open_interval() {
        let s = ReservoirSpec {
            n: 40,
            input_dim: 7,
            input_sparsity: 1.0,
            input_scaling: 1.0,
            ..ReservoirSpec::default()
        };
        let v = build_input_matrix(&s, &RngStream::new(1, "input-weights")).unwrap();
        assert!(v.data().iter().all(|x| *x > -1.0 && *x < 1.0));
        assert!(v.count_zeros() == 0);
    }

    #[test]
    fn input_sparsity_matches_fraction() {
        let s = ReservoirSpec {
            n: 1000,
            input_dim: 256,
            ..ReservoirSpec::default()
        };
        let v = build_input_matrix(&s, &s.stream("input-weights")).unwrap();
        let frac = 1.0 - v.count_zeros() as f64 / (1000.0 * 256.0);
        assert!((frac - 0.05).abs() < 0.005, "{frac}");
    }

    #[test]
    fn input_scaling_is_linear() {
        let base = ReservoirSpec {
            n: 50,
            input_dim: 10,
            input_sparsity: 0.3,
            ..ReservoirSpec::default()
        };
        let doubled = ReservoirSpec {
            input_scaling: 2.0,
            ..base.clone()
        };
        let stream = RngStream::new(4, "input-weights");
        let a = build_input_matrix(&base, &stream).unwrap();
        let b = build_input_matrix(&doubled, &stream).unwrap();
        assert_eq!(a.scaled(2.0), b);
    }

    #[test]
    fn adjacency_rules() {
        let d = Matrix::diag(&[1.0, 2.0, 3.0]);
        let g = undirected_adjacency(&d, false).unwrap();
        assert_eq!(g.edge_count(), 0);
        assert!(!g.has_self_loop(0));
        assert!(undirected_adjacency(&d, true).unwrap().has_self_loop(0));

        let mut m = Matrix::zeros(3, 3);
        m[(1, 0)] = 0.3;
        let g = undirected_adjacency(&m, false).unwrap();
        assert!(g.has_edge(0, 1) && g.has_edge(1, 0));
        assert_eq!(g.edge_count(), 1);
    }

    #[test]
    fn validation_rejects_out_of_range_alpha() {
        let mut s = ReservoirSpec::default();
        s.alpha = 1.5;
        assert!(s.validate().is_err());
        assert!(s.validate_structure().is_ok());
        s.alpha = 0.9;
        s.ring_weight = 0.0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn small_pipeline_properties() {
        let s = ReservoirSpec {
            n: 40,
            jump_size: 7,
            input_dim: 5,
            ..ReservoirSpec::default()
        };
        let m = ReservoirMatrices::build(&s).unwrap();
        assert_eq!(m.w.count_zeros(), 2);
        assert!((m.rho - 0.9).abs() < 1e-6);
        assert_eq!(m, ReservoirMatrices::build(&s).unwrap());
        let g = undirected_adjacency(&m.w, false).unwrap();
        let (i, j) = m.disconnected_pair;
        assert!(!g.has_edge(i, j));
        assert_eq!(g.edge_count(), 40 * 39 / 2 - 1);
    }
}
