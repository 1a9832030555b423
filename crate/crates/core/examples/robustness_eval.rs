//! Trains a ridge ViR-1 on clean MNIST and reports corruption errors.
//!
//! cargo run --release --example robustness_eval -- [mnist_dir] [train_limit] [test_limit]

use std::path::PathBuf;

use vir::metrics::evaluate_robustness;
use vir::numerics::RngStream;
use vir::patches::{load_mnist_dir, CorruptionType};
use vir::training::{train, ModelConfig, TrainConfig, ViRModel};

fn main() -> vir::Result<()> {
    let mut args = std::env::args().skip(1);
    let dir: PathBuf = args
        .next()
        .or_else(|| std::env::var("VIR_DATA_DIR").ok().map(|d| format!("{d}/mnist")))
        .unwrap_or_else(|| "data/mnist".into())
        .into();
    let train_limit: usize = args.next().map_or(10_000, |s| s.parse().expect("train_limit"));
    let test_limit: usize = args.next().map_or(1_000, |s| s.parse().expect("test_limit"));

    let train_set = load_mnist_dir(&dir, true)?.take(train_limit);
    let test_set = load_mnist_dir(&dir, false)?.take(test_limit);
    let mut model = ViRModel::for_batch(ModelConfig::default(), &train_set)?;
    train(&mut model, &train_set, None, &TrainConfig::default())?;
    let report = evaluate_robustness(&model, &test_set, &CorruptionType::ALL, &RngStream::new(42, "corruption"), 256)?;
    println!("clean error {:.4}", report.clean_error);
    for row in &report.rows {
        let e: Vec<String> = row.errors.iter().map(|e| format!("{e:.3}")).collect();
        println!("{:<14} [{}]  CE {:.4}", row.kind.name(), e.join(", "), row.ce);
    }
    println!("mean CE {:.4}", report.mean_ce);
    Ok(())
}
