//! Trains a small model on synthetic stripes, writes a checkpoint, reloads
//! it and compares predictions.
//!
//! cargo run --release --example checkpoint_roundtrip

use vir::patches::{Image, ImageBatch};
use vir::topology::ReservoirSpec;
use vir::training::{read_checkpoint, train, write_checkpoint, ModelConfig, TrainConfig, ViRModel};

fn stripes(n: usize) -> vir::Result<ImageBatch> {
    let mut images = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let label = (i % 2) as u8;
        let phase = (i / 2) % 4;
        let data = (0..64)
            .map(|p| {
                let (y, x) = (p / 8, p % 8);
                let k = if label == 0 { y } else { x };
                if (k + phase) % 4 < 2 { 1.0 } else { 0.0 }
            })
            .collect();
        images.push(Image::new(8, 8, 1, data)?);
        labels.push(label);
    }
    ImageBatch::from_images(&images, labels, 2)
}

fn main() -> vir::Result<()> {
    let data = stripes(64)?;
    let config = ModelConfig {
        reservoir: ReservoirSpec {
            n: 40,
            jump_size: 7,
            input_dim: 8,
            ..ReservoirSpec::default()
        },
        ff_dim: 16,
        ..ModelConfig::default()
    };
    let mut model = ViRModel::for_batch(config.clone(), &data)?;
    let out = train(&mut model, &data, None, &TrainConfig::default())?;
    println!("train accuracy {:.3}", out.train_accuracy);

    let dir = std::env::temp_dir().join("vir-checkpoint-example");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("model.ckpt");
    write_checkpoint(&path, &model)?;
    println!("wrote {} ({} bytes)", path.display(), std::fs::metadata(&path)?.len());
    let back = read_checkpoint(&path, Some(&config))?;
    println!("identical model: {}", back == model);
    println!("identical predictions: {}", back.predict(&data, 32)? == model.predict(&data, 32)?);

    let mut other = config;
    other.ff_dim = 32;
    match read_checkpoint(&path, Some(&other)) {
        Err(e) => println!("mismatched config rejected: {e}"),
        Ok(_) => println!("mismatched config unexpectedly accepted"),
    }
    Ok(())
}
