use std::collections::VecDeque;

use proptest::prelude::*;

use vir::metrics::{
    average_path_length, clustering_coefficient, corruption_error, recall_scores, squared_correlation,
};
use vir::numerics::{draw_gaussian, draw_uniform, ridge_solve, spectral_radius, Matrix, RngStream};
use vir::patches::{corrupt, extract_patches, reassemble_patches, Corruption, CorruptionType, Image};
use vir::reservoir::{mean_combine, run_sequence, step};
use vir::topology::{Graph, ReservoirMatrices, ReservoirSpec};

fn gaussian_matrix(rows: usize, cols: usize, seed: u64, label: &str) -> Matrix {
    Matrix::from_vec(rows, cols, draw_gaussian(&RngStream::new(seed, label), 0.0, 1.0, rows * cols).unwrap()).unwrap()
}

fn small_spec() -> impl Strategy<Value = ReservoirSpec> {
    (4usize..40, any::<u64>(), 0.1f64..0.99).prop_flat_map(|(n, seed, alpha)| {
        (2..n).prop_map(move |l| ReservoirSpec {
            n,
            jump_size: l,
            alpha,
            input_dim: 3,
            input_sparsity: 0.5,
            seed,
            ..ReservoirSpec::default()
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn ridge_solution_satisfies_normal_equations(
        rows in 1usize..200, cols in 1usize..200, q in 1usize..4, k in 1e-3f64..10.0, seed in any::<u64>()
    ) {
        let x = gaussian_matrix(rows, cols, seed, "x");
        let y = gaussian_matrix(rows, q, seed, "y");
        let w = ridge_solve(&x, &y, k).unwrap();
        let xtx = x.transpose().matmul(&x).unwrap();
        let xty = x.transpose().matmul(&y).unwrap();
        let lhs = xtx.matmul(&w).unwrap();
        let scale = 1.0 + xty.data().iter().fold(0.0f64, |a, v| a.max(v.abs()));
        for i in 0..cols {
            for c in 0..q {
                let r = lhs[(i, c)] + k * w[(i, c)] - xty[(i, c)];
                prop_assert!(r.abs() < 1e-8 * scale, "residual {r}");
            }
        }
    }

    #[test]
    fn rescaled_matrix_has_requested_radius(n in 2usize..30, alpha in 0.05f64..2.0, seed in any::<u64>()) {
        let a = gaussian_matrix(n, n, seed, "m");
        // symmetric, so the spectrum is real and its dominant modulus is simple almost surely
        let s = Matrix::from_fn(n, n, |i, j| a[(i, j)] + a[(j, i)]);
        let rho = spectral_radius(&s, 1e-12, 100_000).unwrap();
        let scaled = s.scaled(alpha / rho);
        let back = spectral_radius(&scaled, 1e-12, 100_000).unwrap();
        prop_assert!((back - alpha).abs() < 1e-6, "{back} vs {alpha}");
    }

    #[test]
    fn streams_replay(seed in any::<u64>(), label in "[a-z]{1,8}") {
        let a = draw_uniform(&RngStream::new(seed, label.clone()), -1.0, 1.0, 32).unwrap();
        let b = draw_uniform(&RngStream::new(seed, label), -1.0, 1.0, 32).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn reservoir_build_is_pure_and_scaled(spec in small_spec()) {
        let a = ReservoirMatrices::build(&spec).unwrap();
        let b = ReservoirMatrices::build(&spec).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(a.w.data().iter().filter(|v| **v == 0.0).count(), 2);
        let rho = spectral_radius(&a.w, 1e-12, 100_000).unwrap();
        prop_assert!((rho - spec.alpha).abs() < 1e-6, "{rho} vs {}", spec.alpha);
    }

    #[test]
    fn patches_reassemble_exactly(
        gh in 1usize..6, gw in 1usize..6, p in 1usize..5, ch in 1usize..4, seed in any::<u64>()
    ) {
        let (h, w) = (gh * p, gw * p);
        let data: Vec<f32> = draw_uniform(&RngStream::new(seed, "img"), 0.0, 1.0, h * w * ch)
            .unwrap()
            .into_iter()
            .map(|v| v as f32)
            .collect();
        let img = Image::new(h, w, ch, data).unwrap();
        let seq = extract_patches(&img, p).unwrap();
        prop_assert_eq!(seq.steps, gh * gw);
        prop_assert_eq!(reassemble_patches(&seq, h, w, ch, p).unwrap(), img);
    }

    #[test]
    fn corruptions_keep_shape_and_range(
        kind in prop::sample::select(CorruptionType::ALL.to_vec()),
        severity in 1u8..=5,
        h in 3usize..12, w in 3usize..12, ch in 1usize..4,
        seed in any::<u64>()
    ) {
        let data: Vec<f32> = draw_uniform(&RngStream::new(seed, "img"), 0.0, 1.0, h * w * ch)
            .unwrap()
            .into_iter()
            .map(|v| v as f32)
            .collect();
        let img = Image::new(h, w, ch, data).unwrap();
        let c = Corruption::new(kind, severity).unwrap();
        let stream = RngStream::new(seed, "noise");
        let out = corrupt(&img, c, &stream).unwrap();
        prop_assert_eq!((out.height, out.width, out.channels), (h, w, ch));
        prop_assert!(out.data.iter().all(|v| (0.0..=1.0).contains(v)));
        prop_assert_eq!(out, corrupt(&img, c, &stream).unwrap());
    }

    // f64 tanh rounds to ±1 once |z| exceeds about 19, so inputs stay below that
    #[test]
    fn states_stay_inside_open_interval(spec in small_spec(), scale in 0.1f64..5.0) {
        let m = ReservoirMatrices::build(&spec).unwrap();
        let stream = RngStream::new(spec.seed, "u");
        let x = draw_uniform(&stream.child("x"), -1.0, 1.0, spec.n).unwrap();
        let u = draw_uniform(&stream, -scale, scale, spec.input_dim).unwrap();
        let next = step(&m, &x, &u, 0.0, &stream).unwrap();
        prop_assert!(next.iter().all(|v| v.abs() < 1.0));
    }

    #[test]
    fn fading_memory_at_default_radius(seed in any::<u64>(), n in 20usize..80) {
        let spec = ReservoirSpec { n, jump_size: n / 7 + 2, input_dim: 1, seed, ..ReservoirSpec::default() };
        let m = ReservoirMatrices::build(&spec).unwrap();
        let zeros = Matrix::zeros(200, 1);
        let s = RngStream::new(seed, "x0");
        let x0 = draw_uniform(&s.child("a"), -1.0, 1.0, n).unwrap();
        let x1 = draw_uniform(&s.child("b"), -1.0, 1.0, n).unwrap();
        let a = run_sequence(&m, &zeros, Some(&x0), 0, 0.0, &s).unwrap();
        let b = run_sequence(&m, &zeros, Some(&x1), 0, 0.0, &s).unwrap();
        let d: f64 = a.states.row(199).iter().zip(b.states.row(199)).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
        prop_assert!(d < 1e-6, "distance {d}");
    }

    #[test]
    fn run_sequence_matches_scalar_loops(n in 3usize..=6, t in 1usize..=5, k in 1usize..4, seed in any::<u64>()) {
        let spec = ReservoirSpec { n, jump_size: 2, input_dim: k, input_sparsity: 0.7, seed, ..ReservoirSpec::default() };
        let m = ReservoirMatrices::build(&spec).unwrap();
        let seq = gaussian_matrix(t, k, seed, "seq");
        let trace = run_sequence(&m, &seq, None, 0, 0.0, &RngStream::new(seed, "n")).unwrap();
        let mut x = vec![0.0; n];
        for step in 0..t {
            let mut next = vec![0.0; n];
            for i in 0..n {
                let mut z = 0.0;
                for j in 0..k {
                    z += m.v[(i, j)] * seq[(step, j)];
                }
                for j in 0..n {
                    z += m.w[(i, j)] * x[j];
                }
                next[i] = z.tanh();
            }
            x = next;
            for i in 0..n {
                prop_assert!((trace.states[(step, i)] - x[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn branch_mean_ignores_order(branches in 1usize..5, rows in 1usize..6, cols in 1usize..6, seed in any::<u64>()) {
        let outs: Vec<Matrix> = (0..branches).map(|b| gaussian_matrix(rows, cols, seed, &format!("b{b}"))).collect();
        let mut rev = outs.clone();
        rev.reverse();
        let a = mean_combine(&outs).unwrap();
        let b = mean_combine(&rev).unwrap();
        for (p, q) in a.data().iter().zip(b.data()) {
            prop_assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn graph_metrics_match_brute_force(n in 2usize..=12, density in 0.0f64..1.0, seed in any::<u64>()) {
        let draws = draw_uniform(&RngStream::new(seed, "edges"), 0.0, 1.0, n * n).unwrap();
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if draws[i * n + j] < density {
                    edges.push((i, j));
                }
            }
        }
        let g = Graph::from_edges(n, &edges);
        let adj = |a: usize, b: usize| edges.contains(&(a.min(b), a.max(b)));

        // all-pairs BFS over the edge list
        let mut total = 0usize;
        let mut disconnected = false;
        for s in 0..n {
            let mut dist = vec![usize::MAX; n];
            dist[s] = 0;
            let mut queue = VecDeque::from([s]);
            while let Some(v) = queue.pop_front() {
                for u in 0..n {
                    if u != v && adj(u, v) && dist[u] == usize::MAX {
                        dist[u] = dist[v] + 1;
                        queue.push_back(u);
                    }
                }
            }
            for t in s + 1..n {
                if dist[t] == usize::MAX {
                    disconnected = true;
                } else {
                    total += dist[t];
                }
            }
        }
        match average_path_length(&g, false) {
            Ok(l) => {
                prop_assert!(!disconnected);
                prop_assert_eq!(l, 2.0 * total as f64 / (n * (n - 1)) as f64);
            }
            Err(_) => prop_assert!(disconnected),
        }

        // triangles through each node
        let (per_node, mean) = clustering_coefficient(&g);
        let mut sum = 0.0;
        for i in 0..n {
            let nb: Vec<usize> = (0..n).filter(|&j| j != i && adj(i, j)).collect();
            let k = nb.len();
            let c = if k < 2 {
                0.0
            } else {
                let mut links = 0;
                for a in 0..k {
                    for b in a + 1..k {
                        if adj(nb[a], nb[b]) {
                            links += 1;
                        }
                    }
                }
                2.0 * links as f64 / (k * (k - 1)) as f64
            };
            prop_assert_eq!(per_node[i], c);
            sum += c;
        }
        prop_assert!((mean - sum / n as f64).abs() < 1e-15);
    }

    #[test]
    fn recall_is_affine_invariant(scale in prop_oneof![-50.0f64..-0.01, 0.01f64..50.0], shift in -10.0f64..10.0, seed in any::<u64>()) {
        let (rows, f, q) = (60, 5, 3);
        let train = gaussian_matrix(rows, f, seed, "train");
        let test = gaussian_matrix(rows, f, seed, "test");
        let mix = gaussian_matrix(f, q, seed, "mix");
        let noise = gaussian_matrix(rows, q, seed, "noise");
        let mut ytr = train.matmul(&mix).unwrap();
        ytr.add_scaled(0.3, &noise);
        let yte = test.matmul(&mix).unwrap();
        let affine = |m: &Matrix| Matrix::from_fn(m.rows(), m.cols(), |i, j| scale * m[(i, j)] + shift);
        let a = recall_scores(&train, &ytr, &test, &yte, 1e-6).unwrap();
        let b = recall_scores(&train, &affine(&ytr), &test, &affine(&yte), 1e-6).unwrap();
        for (p, q) in a.iter().zip(&b) {
            prop_assert!((p - q).abs() < 1e-6, "{p} vs {q}");
        }
        let col: Vec<f64> = (0..rows).map(|i| yte[(i, 0)]).collect();
        let moved: Vec<f64> = col.iter().map(|v| scale * v + shift).collect();
        let pred: Vec<f64> = (0..rows).map(|i| test[(i, 0)]).collect();
        prop_assert!((squared_correlation(&pred, &col) - squared_correlation(&pred, &moved)).abs() < 1e-10);
    }

    #[test]
    fn corruption_error_ignores_type_order(
        clean in 0.0f64..0.5,
        errs in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 5), 4),
        rotate in 0usize..4
    ) {
        let rows: Vec<(CorruptionType, Vec<f64>)> = CorruptionType::ALL.iter().copied().zip(errs).collect();
        let mut shuffled = rows.clone();
        shuffled.rotate_left(rotate);
        shuffled.swap(0, 3);
        let a = corruption_error(clean, &rows).unwrap();
        let b = corruption_error(clean, &shuffled).unwrap();
        prop_assert!((a.mean_ce - b.mean_ce).abs() < 1e-12);
        for row in &a.rows {
            let other = b.rows.iter().find(|r| r.kind == row.kind).unwrap();
            prop_assert_eq!(row.ce, other.ce);
        }
    }
}
