//! End-to-end SGD training of ViR-1 on an MNIST subset, printing one line per
//! epoch.
//!
//! cargo run --release --example gradient_mnist -- [mnist_dir] [train_limit] [epochs]

use std::path::PathBuf;

use vir::patches::load_mnist_dir;
use vir::training::{count_parameters, train_with_progress, ModelConfig, TrainConfig, TrainMode, ViRModel};

fn main() -> vir::Result<()> {
    let mut args = std::env::args().skip(1);
    let dir: PathBuf = args
        .next()
        .or_else(|| std::env::var("VIR_DATA_DIR").ok().map(|d| format!("{d}/mnist")))
        .unwrap_or_else(|| "data/mnist".into())
        .into();
    let limit: usize = args.next().map_or(10_000, |s| s.parse().expect("train_limit"));
    let epochs: usize = args.next().map_or(10, |s| s.parse().expect("epochs"));

    let train_set = load_mnist_dir(&dir, true)?.take(limit);
    let test_set = load_mnist_dir(&dir, false)?;
    let mut model = ViRModel::for_batch(ModelConfig::default(), &train_set)?;
    let p = count_parameters(&model);
    println!(
        "trainable parameters {} (embed {}, readout {}, ff {}, head {})",
        p.total, p.embed, p.readout, p.feed_forward, p.head
    );
    let cfg = TrainConfig {
        mode: TrainMode::Gradient,
        epochs,
        eval_limit: Some(2000),
        ..TrainConfig::default()
    };
    let out = train_with_progress(&mut model, &train_set, Some(&test_set), &cfg, &mut |r| {
        println!(
            "epoch {:>2}  loss {:.4}  train {:.4}  test {:.4}  {:.0}s",
            r.epoch,
            r.loss,
            r.train_acc,
            r.test_acc.unwrap_or(f64::NAN),
            r.seconds
        )
    })?;
    println!("final test accuracy {:.4}", out.test_accuracy.unwrap_or(f64::NAN));
    Ok(())
}
