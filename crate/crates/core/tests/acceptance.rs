//! Exit criteria, one PASS/FAIL line each.
//!
//! Runs as a plain binary (`harness = false`). Set `VIR_ACCEPTANCE=1,3,7`
//! to run a subset. MNIST is looked up under `$VIR_DATA_DIR/mnist`,
//! `$VIR_DATA_DIR` and `<workspace>/data/mnist`.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::Rng;

use vir::cli::{train_experiment, DatasetKind, ExperimentConfig};
use vir::metrics::{
    corruption_error, evaluate_robustness, lyapunov_exponent, memory_capacity, reservoir_small_worldness, sweep,
    LyapunovConfig, MemoryCapacityConfig,
};
use vir::numerics::{draw_gaussian, unit_open_closed, Matrix, RngStream};
use vir::patches::{load_mnist_dir, CorruptionType, Image, ImageBatch};
use vir::reservoir::{Activation, DeepMode};
use vir::topology::{ReservoirMatrices, ReservoirSpec};
use vir::training::{
    count_parameters, fit_ridge, loss_and_grad, train, ModelConfig, TrainConfig, TrainMode, ViRModel,
};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(limit: Duration, elapsed: Duration) -> bool {
    elapsed < limit
}

fn mnist_dir() -> Result<PathBuf, String> {
    let mut candidates = Vec::new();
    if let Ok(d) = std::env::var("VIR_DATA_DIR") {
        candidates.push(Path::new(&d).join("mnist"));
        candidates.push(PathBuf::from(d));
    }
    candidates.push(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist"));
    candidates
        .into_iter()
        .find(|d| vir::patches::mnist_paths(d, true).is_ok())
        .ok_or_else(|| "MNIST not found; set VIR_DATA_DIR".to_string())
}

struct Mnist {
    train: ImageBatch,
    test: ImageBatch,
    dir: PathBuf,
}

fn load_mnist() -> Result<Mnist, String> {
    let dir = mnist_dir()?;
    let train = load_mnist_dir(&dir, true).map_err(|e| e.to_string())?;
    let test = load_mnist_dir(&dir, false).map_err(|e| e.to_string())?;
    Ok(Mnist { train, test, dir })
}

// 1. Topology oracle --------------------------------------------------------

/// Weight magnitude of cell `(i, j)` in 1-based indices: jumps `1 → 1+ℓ →
/// 1+2ℓ …` in both directions, then the ring `W[q+1][q]` and `W[1][N]`, then
/// the base weight.
fn oracle_magnitude(spec: &ReservoirSpec, i: usize, j: usize) -> f64 {
    let (n, l) = (spec.n, spec.jump_size);
    let (lo, hi) = (i.min(j), i.max(j));
    if lo != hi && (lo - 1) % l == 0 && hi - lo == l && hi <= n {
        return spec.jump_weight;
    }
    if i == j + 1 || (i == 1 && j == n) {
        return spec.ring_weight;
    }
    spec.base_weight
}

fn oracle_w(spec: &ReservoirSpec) -> DMatrix<f64> {
    let n = spec.n;
    let mut w = DMatrix::zeros(n, n);
    let mut signs = spec.stream("signs").rng();
    for i in 1..=n {
        for j in 1..=n {
            let e = unit_open_closed(&mut signs);
            let m = oracle_magnitude(spec, i, j);
            w[(i - 1, j - 1)] = if e < 0.5 { -m } else { m };
        }
    }
    let mut cut = spec.stream("disconnect").rng();
    let idx = cut.random_range(0..n * (n - 1));
    let (a, mut b) = (idx / (n - 1), idx % (n - 1));
    if b >= a {
        b += 1;
    }
    w[(a, b)] = 0.0;
    w[(b, a)] = 0.0;
    w
}

fn nalgebra_radius(w: &DMatrix<f64>) -> f64 {
    w.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn criterion_1() -> Outcome {
    let t = Instant::now();
    let mut cases = 0;
    let mut worst_rho = 0.0f64;
    for n in 3..=8 {
        for l in 2..n {
            for seed in 0..4 {
                let spec = ReservoirSpec {
                    n,
                    jump_size: l,
                    input_dim: 2,
                    alpha: 0.9,
                    seed,
                    ..ReservoirSpec::default()
                };
                let built = ReservoirMatrices::build(&spec).map_err(|e| e.to_string())?;
                let raw = oracle_w(&spec);
                let scale = spec.alpha / nalgebra_radius(&raw);
                for i in 0..n {
                    for j in 0..n {
                        let (got, want) = (built.w[(i, j)], raw[(i, j)]);
                        if want == 0.0 {
                            if got != 0.0 {
                                return Err(format!("N={n} ℓ={l} seed={seed}: W[{i}][{j}] = {got}, oracle has 0"));
                            }
                        } else if (got / want - scale).abs() > 1e-9 * scale {
                            return Err(format!(
                                "N={n} ℓ={l} seed={seed}: W[{i}][{j}] = {got}, oracle {want} × {scale}"
                            ));
                        }
                    }
                }
                let w = DMatrix::from_row_slice(n, n, built.w.data());
                worst_rho = worst_rho.max((nalgebra_radius(&w) - spec.alpha).abs());
                cases += 1;
            }
        }
    }
    let elapsed = t.elapsed();
    check(
        worst_rho <= 1e-6 && within(Duration::from_secs(1), elapsed),
        format!("{cases} specs match cell by cell, max |ρ−α| = {worst_rho:.2e}, {elapsed:.2?}"),
    )
}

// 2. Small-worldness ---------------------------------------------------------

fn criterion_2() -> Outcome {
    let t = Instant::now();
    let spec = ReservoirSpec::default();
    let m = ReservoirMatrices::build(&spec).map_err(|e| e.to_string())?;
    let report = reservoir_small_worldness(&m, &RngStream::new(spec.seed, "random-graph")).map_err(|e| e.to_string())?;
    let ours = report.delta;
    let random = report
        .rows
        .iter()
        .find(|r| r.network == "random")
        .map(|r| r.delta)
        .ok_or("no random row")?;
    let elapsed = t.elapsed();
    let a = ours > 1.0 && (1.0..=1.1).contains(&ours);
    let b = random < 1.0;
    check(
        a && b && within(Duration::from_secs(120), elapsed),
        format!(
            "(a) δ_ours = {ours:.4} {}; (b) δ_random = {random:.4} {}; {elapsed:.1?}",
            if a { "ok" } else { "out of [1.0, 1.1]" },
            if b { "ok" } else { "not below 1" }
        ),
    )
}

// 3. Lyapunov shape ----------------------------------------------------------

fn sweep_spec() -> ReservoirSpec {
    ReservoirSpec {
        n: 100,
        jump_size: 14,
        input_dim: 1,
        input_scaling: 1.0,
        ..ReservoirSpec::default()
    }
}

fn criterion_3() -> Outcome {
    let t = Instant::now();
    let rhos = [0.5, 0.75, 0.9, 1.0, 1.1, 1.25, 1.5, 1.75, 2.0];
    let points = sweep(&sweep_spec(), &rhos, &[1.0], Some(&LyapunovConfig::default()), None).map_err(|e| e.to_string())?;
    let lambdas: Vec<f64> = points.iter().map(|p| p.lambda.unwrap()).collect();
    let crossing = lambdas
        .windows(2)
        .position(|w| w[0] < 0.0 && w[1] >= 0.0)
        .map(|i| rhos[i] + (rhos[i + 1] - rhos[i]) * (-lambdas[i]) / (lambdas[i + 1] - lambdas[i]));

    let one = ReservoirMatrices {
        w: Matrix::from_vec(1, 1, vec![0.5]).unwrap(),
        v: Matrix::from_vec(1, 1, vec![1.0]).unwrap(),
        rho: 0.5,
        disconnected_pair: (0, 0),
    };
    let linear = LyapunovConfig {
        activation: Activation::Identity,
        ..LyapunovConfig::default()
    };
    let analytic = lyapunov_exponent(&one, &RngStream::new(0, "lle"), &linear).map_err(|e| e.to_string())?.lambda;
    let analytic_err = (analytic - 0.5f64.ln()).abs();
    let elapsed = t.elapsed();
    let ok = lambdas[0] < 0.0
        && *lambdas.last().unwrap() > 0.0
        && crossing.is_some_and(|c| (0.9..=1.6).contains(&c))
        && analytic_err < 1e-3
        && within(Duration::from_secs(120), elapsed);
    check(
        ok,
        format!(
            "λ(0.5) = {:.4}, λ(2.0) = {:.4}, zero crossing at ρ ≈ {}, linear case off by {analytic_err:.1e}, {elapsed:.1?}",
            lambdas[0],
            lambdas.last().unwrap(),
            crossing.map_or("none".into(), |c| format!("{c:.3}"))
        ),
    )
}

// 4. Memory capacity ---------------------------------------------------------

fn criterion_4() -> Outcome {
    let t = Instant::now();
    let rhos = [0.5, 0.9, 1.0, 1.25, 1.5, 2.0];
    let points = sweep(&sweep_spec(), &rhos, &[1.0], None, Some(&MemoryCapacityConfig::default())).map_err(|e| e.to_string())?;
    let mcs: Vec<f64> = points.iter().map(|p| p.mc.unwrap()).collect();
    let best = (0..mcs.len()).max_by(|&a, &b| mcs[a].total_cmp(&mcs[b])).unwrap();

    let n = 100;
    let mut w = Matrix::zeros(n, n);
    for i in 1..n {
        w[(i, i - 1)] = 1.0;
    }
    let mut v = Matrix::zeros(n, 1);
    v[(0, 0)] = 1.0;
    let delay = ReservoirMatrices {
        w,
        v,
        rho: 0.0,
        disconnected_pair: (0, 0),
    };
    let linear = MemoryCapacityConfig {
        activation: Activation::Identity,
        ..MemoryCapacityConfig::default()
    };
    let delay_mc = memory_capacity(&delay, &RngStream::new(0, "mc"), &linear).map_err(|e| e.to_string())?.total;
    let elapsed = t.elapsed();
    let ok = (0.8..=1.3).contains(&rhos[best]) && delay_mc >= 0.9 * n as f64 && within(Duration::from_secs(300), elapsed);
    let curve: Vec<String> = rhos.iter().zip(&mcs).map(|(r, m)| format!("{r}:{m:.1}")).collect();
    check(
        ok,
        format!(
            "MC by ρ [{}], peak at ρ = {}; delay line MC = {delay_mc:.2} of N = {n}; {elapsed:.1?}",
            curve.join(" "),
            rhos[best]
        ),
    )
}

// 5. Ridge oracle ------------------------------------------------------------

fn criterion_5() -> Outcome {
    let t = Instant::now();
    let (rows, f, q, k) = (100, 50, 3, 0.1);
    let x = draw_gaussian(&RngStream::new(5, "ridge-x"), 0.0, 1.0, rows * f).unwrap();
    let y = draw_gaussian(&RngStream::new(5, "ridge-y"), 0.0, 1.0, rows * q).unwrap();
    let xm = Matrix::from_vec(rows, f, x.clone()).unwrap();
    let ym = Matrix::from_vec(rows, q, y.clone()).unwrap();
    let fitted = fit_ridge(&xm, &ym, k).map_err(|e| e.to_string())?;

    // Full-batch gradient descent on ‖XW − Y‖² + k‖W‖² with plain loops.
    let mut xtx = vec![0.0; f * f];
    let mut xty = vec![0.0; f * q];
    for r in 0..rows {
        for a in 0..f {
            for b in 0..f {
                xtx[a * f + b] += x[r * f + a] * x[r * f + b];
            }
            for c in 0..q {
                xty[a * q + c] += x[r * f + a] * y[r * q + c];
            }
        }
    }
    let trace: f64 = (0..f).map(|a| xtx[a * f + a]).sum();
    let step = 1.0 / (2.0 * (trace + k));
    let mut w = vec![0.0; f * q];
    for _ in 0..200_000 {
        let mut grad = vec![0.0; f * q];
        let mut gmax = 0.0f64;
        for a in 0..f {
            for c in 0..q {
                let mut s = k * w[a * q + c] - xty[a * q + c];
                for b in 0..f {
                    s += xtx[a * f + b] * w[b * q + c];
                }
                grad[a * q + c] = 2.0 * s;
                gmax = gmax.max((2.0 * s).abs());
            }
        }
        for (wi, g) in w.iter_mut().zip(&grad) {
            *wi -= step * g;
        }
        if gmax < 1e-10 {
            break;
        }
    }
    let gd_err = fitted.data().iter().zip(&w).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let mut residual = 0.0f64;
    for a in 0..f {
        for c in 0..q {
            let mut s = k * fitted[(a, c)] - xty[a * q + c];
            for b in 0..f {
                s += xtx[a * f + b] * fitted[(b, c)];
            }
            residual = residual.max(s.abs());
        }
    }
    let elapsed = t.elapsed();
    check(
        gd_err < 1e-3 && residual < 1e-8 && within(Duration::from_secs(10), elapsed),
        format!("max |W − W_gd| = {gd_err:.2e}, normal-equation residual {residual:.2e}, {elapsed:.2?}"),
    )
}

// 6. Gradient correctness ----------------------------------------------------

fn micro_data() -> ImageBatch {
    let noise = vir::numerics::draw_uniform(&RngStream::new(6, "micro"), 0.0, 0.3, 6 * 12).unwrap();
    let mut images = Vec::new();
    let mut labels = Vec::new();
    for i in 0..6 {
        let label = (i % 3) as u8;
        let mut data: Vec<f32> = noise[i * 12..(i + 1) * 12].iter().map(|v| *v as f32).collect();
        for j in 0..4 {
            data[label as usize * 4 + j] += 0.6;
        }
        images.push(Image::new(2, 6, 1, data).unwrap());
        labels.push(label);
    }
    ImageBatch::from_images(&images, labels, 3).unwrap()
}

fn criterion_6() -> Outcome {
    let t = Instant::now();
    let data = micro_data();
    let config = ModelConfig {
        reservoir: ReservoirSpec {
            n: 6,
            jump_size: 2,
            input_dim: 4,
            input_sparsity: 0.6,
            seed: 3,
            ..ReservoirSpec::default()
        },
        patch: 2,
        ff_dim: 5,
        embed_scale: 1.0,
        ..ModelConfig::default()
    };
    let model = ViRModel::for_batch(config, &data).map_err(|e| e.to_string())?;
    if model.grid.steps() != 3 {
        return Err(format!("micro model has T = {}", model.grid.steps()));
    }
    let idx = [0, 1, 2, 4];
    let analytic = loss_and_grad(&model, &data, &idx, 0).map_err(|e| e.to_string())?;
    let loss = |m: &ViRModel| loss_and_grad(m, &data, &idx, 0).unwrap().loss;
    let eps = 1e-5;
    let mut worst = 0.0f64;
    let mut checked = 0;
    let names: Vec<String> = model.tail.tensors().into_iter().map(|(n, _)| n).collect();
    for (ti, name) in names.iter().enumerate() {
        for i in 0..model.tail.tensors()[ti].1.len() {
            let mut plus = model.clone();
            plus.tail.tensors_mut()[ti].1[i] += eps;
            let mut minus = model.clone();
            minus.tail.tensors_mut()[ti].1[i] -= eps;
            let fd = (loss(&plus) - loss(&minus)) / (2.0 * eps);
            let an = analytic.grads.tensors()[ti].1[i];
            let scale = fd.abs().max(an.abs());
            let err = (fd - an).abs();
            if err > 1e-9 {
                worst = worst.max(err / scale);
            }
            if err > 1e-9 && err > 1e-4 * scale {
                return Err(format!("{name}[{i}]: finite difference {fd:.6e}, analytic {an:.6e}"));
            }
            checked += 1;
        }
    }
    let elapsed = t.elapsed();
    check(
        within(Duration::from_secs(30), elapsed),
        format!("{checked} entries over {} tensors, worst relative error {worst:.1e}, {elapsed:.2?}", names.len()),
    )
}

// 7. Desk-scale classification -----------------------------------------------

fn criterion_7a(mnist: &Mnist, trained: &mut Option<ViRModel>) -> Result<String, String> {
    let t = Instant::now();
    let mut model = ViRModel::for_batch(ModelConfig::default(), &mnist.train).map_err(|e| e.to_string())?;
    let cfg = TrainConfig {
        mode: TrainMode::Ridge,
        ..TrainConfig::default()
    };
    let out = train(&mut model, &mnist.train, Some(&mnist.test), &cfg).map_err(|e| e.to_string())?;
    let elapsed = t.elapsed();
    let acc = out.test_accuracy.unwrap_or(0.0);
    *trained = Some(model);
    check(
        acc >= 0.92 && within(Duration::from_secs(15 * 60), elapsed),
        format!("ridge full MNIST test {acc:.4} in {:.0}s", elapsed.as_secs_f64()),
    )
}

fn criterion_7b(mnist: &Mnist) -> Result<String, String> {
    let t = Instant::now();
    let subset = mnist.train.take(10_000);
    let mut model = ViRModel::for_batch(ModelConfig::default(), &subset).map_err(|e| e.to_string())?;
    let cfg = TrainConfig {
        mode: TrainMode::Gradient,
        eval_limit: Some(2000),
        ..TrainConfig::default()
    };
    let out = train(&mut model, &subset, Some(&mnist.test), &cfg).map_err(|e| e.to_string())?;
    let elapsed = t.elapsed();
    let acc = out.test_accuracy.unwrap_or(0.0);
    check(
        acc >= 0.95 && cfg.epochs <= 20 && within(Duration::from_secs(30 * 60), elapsed),
        format!("gradient 10k subset test {acc:.4} after {} epochs in {:.0}s", cfg.epochs, elapsed.as_secs_f64()),
    )
}

fn criterion_7(mnist: &Result<Mnist, String>, trained: &mut Option<ViRModel>) -> Outcome {
    let mnist = mnist.as_ref().map_err(Clone::clone)?;
    let a = criterion_7a(mnist, trained);
    let b = criterion_7b(mnist);
    let text = |r: &Outcome| match r {
        Ok(s) => format!("{s} ok"),
        Err(s) => format!("{s} FAILED"),
    };
    check(a.is_ok() && b.is_ok(), format!("(a) {}; (b) {}", text(&a), text(&b)))
}

// 8. Deep-stack ordering -----------------------------------------------------

fn criterion_8(mnist: &Result<Mnist, String>) -> Outcome {
    let mnist = mnist.as_ref().map_err(Clone::clone)?;
    let t = Instant::now();
    let subset = mnist.train.take(10_000);
    let test = mnist.test.take(2000);
    let run = |mode: DeepMode| -> Result<f64, String> {
        let config = ModelConfig {
            mode,
            layers: 3,
            ..ModelConfig::default()
        };
        let mut model = ViRModel::for_batch(config, &subset).map_err(|e| e.to_string())?;
        let out = train(&mut model, &subset, Some(&test), &TrainConfig::default()).map_err(|e| e.to_string())?;
        Ok(out.test_accuracy.unwrap_or(0.0))
    };
    let parallel = run(DeepMode::Parallel)?;
    let series = run(DeepMode::Series)?;
    check(
        parallel >= series,
        format!(
            "ridge, 10k train / 2k test: Parallel-3 {parallel:.4} vs Series-3 {series:.4}, {:.0}s",
            t.elapsed().as_secs_f64()
        ),
    )
}

// 9. Parameter count ---------------------------------------------------------

fn criterion_9() -> Outcome {
    let model = ViRModel::new(ModelConfig::default(), 32, 32, 3, 10).map_err(|e| e.to_string())?;
    let p = count_parameters(&model);
    let sum = p.embed + p.readout + p.ln1 + p.feed_forward + p.ln2 + p.head;
    check(
        (300_000..=1_200_000).contains(&p.total) && sum == p.total,
        format!(
            "ViR-1 CIFAR-10 total {} = embed {} + readout {} + ln1 {} + ff {} + ln2 {} + head {}",
            p.total, p.embed, p.readout, p.ln1, p.feed_forward, p.ln2, p.head
        ),
    )
}

// 10. Robustness monotonicity ------------------------------------------------

fn criterion_10(mnist: &Result<Mnist, String>, trained: &mut Option<ViRModel>) -> Outcome {
    let mnist = mnist.as_ref().map_err(Clone::clone)?;
    if trained.is_none() {
        let subset = mnist.train.take(10_000);
        let mut model = ViRModel::for_batch(ModelConfig::default(), &subset).map_err(|e| e.to_string())?;
        train(&mut model, &subset, None, &TrainConfig::default()).map_err(|e| e.to_string())?;
        *trained = Some(model);
    }
    let model = trained.as_ref().unwrap();
    let t = Instant::now();
    let clean = mnist.test.take(2000);
    let report = evaluate_robustness(model, &clean, &CorruptionType::ALL, &RngStream::new(42, "corruption"), 256)
        .map_err(|e| e.to_string())?;
    let elapsed = t.elapsed();

    let mut notes = Vec::new();
    let mut ok = report.rows.len() == CorruptionType::ALL.len();
    for row in &report.rows {
        let literal: f64 = row.errors.iter().sum::<f64>() - report.clean_error;
        let monotone = row.errors[4] >= row.errors[0];
        ok &= monotone && (row.ce - literal).abs() < 1e-12;
        notes.push(format!("{} {:.3}→{:.3}", row.kind.name(), row.errors[0], row.errors[4]));
    }
    let recomputed = corruption_error(
        report.clean_error,
        &report.rows.iter().map(|r| (r.kind, r.errors.clone())).collect::<Vec<_>>(),
    )
    .map_err(|e| e.to_string())?;
    ok &= recomputed == report && within(Duration::from_secs(600), elapsed);
    check(
        ok,
        format!(
            "clean error {:.4}; s1→s5: {}; mean CE {:.4}; {:.0}s",
            report.clean_error,
            notes.join(", "),
            report.mean_ce,
            elapsed.as_secs_f64()
        ),
    )
}

// 11. Determinism ------------------------------------------------------------

fn report_without_timing(dir: &Path) -> Result<serde_json::Value, String> {
    let text = std::fs::read_to_string(dir.join("report.json")).map_err(|e| e.to_string())?;
    let mut v: serde_json::Value = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    v.as_object_mut().ok_or("report is not an object")?.remove("timing");
    Ok(v)
}

fn criterion_11(mnist: &Result<Mnist, String>) -> Outcome {
    let mnist = mnist.as_ref().map_err(Clone::clone)?;
    let fixture = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/tiny-smoke.toml");
    let mut cfg = ExperimentConfig::load(&fixture, None).map_err(|e| e.to_string())?;
    cfg.dataset.kind = DatasetKind::Mnist;
    cfg.dataset.path = Some(mnist.dir.clone());
    let root = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut reports = Vec::new();
    for run in 0..2 {
        let out = root.path().join(format!("run{run}"));
        train_experiment(&cfg, &out).map_err(|e| e.to_string())?;
        reports.push(report_without_timing(&out)?);
    }
    let ckpt_equal = std::fs::read(root.path().join("run0/model.ckpt")).ok()
        == std::fs::read(root.path().join("run1/model.ckpt")).ok();
    let acc = reports[0]["accuracy"]["test"].as_f64().unwrap_or(f64::NAN);
    check(
        reports[0] == reports[1] && ckpt_equal,
        format!(
            "two runs of tiny-smoke: report.json numeric fields {}, checkpoints {} (test accuracy {acc})",
            if reports[0] == reports[1] { "identical" } else { "differ" },
            if ckpt_equal { "identical" } else { "differ" }
        ),
    )
}

fn main() {
    let only: Option<Vec<u32>> = std::env::var("VIR_ACCEPTANCE")
        .ok()
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let wanted = |c: u32| only.as_ref().is_none_or(|v| v.contains(&c));
    let needs_data = [7, 8, 10, 11].iter().any(|&c| wanted(c));
    let mnist = if needs_data { load_mnist() } else { Err("not loaded".into()) };
    let mut trained = None;

    let mut failed = Vec::new();
    for c in 1..=11u32 {
        if !wanted(c) {
            continue;
        }
        let started = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(|| match c {
            1 => criterion_1(),
            2 => criterion_2(),
            3 => criterion_3(),
            4 => criterion_4(),
            5 => criterion_5(),
            6 => criterion_6(),
            7 => criterion_7(&mnist, &mut trained),
            8 => criterion_8(&mnist),
            9 => criterion_9(),
            10 => criterion_10(&mnist, &mut trained),
            11 => criterion_11(&mnist),
            _ => unreachable!(),
        }))
        .unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = started.elapsed().as_secs_f64();
        match result {
            Ok(d) => println!("criterion {c:>2}: PASS  {d}  [{secs:.1}s]"),
            Err(d) => {
                println!("criterion {c:>2}: FAIL  {d}  [{secs:.1}s]");
                failed.push(c);
            }
        }
    }
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
