//! ViR-1 with a closed-form ridge readout on MNIST.
//!
//! cargo run --release --example ridge_mnist -- [mnist_dir] [train_limit]

use std::path::PathBuf;
use std::time::Instant;

use vir::patches::load_mnist_dir;
use vir::training::{count_parameters, train, ModelConfig, TrainConfig, TrainMode, ViRModel};

fn main() -> vir::Result<()> {
    let mut args = std::env::args().skip(1);
    let dir: PathBuf = args
        .next()
        .or_else(|| std::env::var("VIR_DATA_DIR").ok().map(|d| format!("{d}/mnist")))
        .unwrap_or_else(|| "data/mnist".into())
        .into();
    let limit: Option<usize> = args.next().map(|s| s.parse().expect("train_limit must be an integer"));

    let mut train_set = load_mnist_dir(&dir, true)?;
    if let Some(n) = limit {
        train_set = train_set.take(n);
    }
    let test_set = load_mnist_dir(&dir, false)?;
    let t = Instant::now();
    let mut model = ViRModel::for_batch(ModelConfig::default(), &train_set)?;
    let cfg = TrainConfig {
        mode: TrainMode::Ridge,
        ..TrainConfig::default()
    };
    let out = train(&mut model, &train_set, Some(&test_set), &cfg)?;
    println!("train images {}, ridge k {}", train_set.len(), cfg.ridge_k);
    println!("train accuracy {:.4}", out.train_accuracy);
    println!("test accuracy  {:.4}", out.test_accuracy.unwrap_or(f64::NAN));
    println!("readout parameters {}", count_parameters(&model).readout);
    println!("elapsed {:.1?}", t.elapsed());
    Ok(())
}
