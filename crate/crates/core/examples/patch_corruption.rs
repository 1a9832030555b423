//! Cuts an MNIST digit into 4×4 patches, reassembles it, and applies every
//! corruption at every severity.
//!
//! cargo run --release --example patch_corruption -- [mnist_dir]

use std::path::PathBuf;

use vir::numerics::RngStream;
use vir::patches::{
    corrupt, extract_patches, load_mnist_dir, reassemble_patches, severity_table, Corruption, CorruptionType,
};

fn mnist_dir() -> PathBuf {
    std::env::args()
        .nth(1)
        .or_else(|| std::env::var("VIR_DATA_DIR").ok().map(|d| format!("{d}/mnist")))
        .unwrap_or_else(|| "data/mnist".into())
        .into()
}

fn main() -> vir::Result<()> {
    let test = load_mnist_dir(&mnist_dir(), false)?;
    let img = test.image(0);
    let seq = extract_patches(&img, 4)?;
    println!("label {} -> {} patches of {} pixels", test.label(0), seq.steps, seq.patch_dim);
    let back = reassemble_patches(&seq, img.height, img.width, img.channels, 4)?;
    println!("reassembly exact: {}", back == img);

    let mean = |v: &[f32]| v.iter().map(|&x| f64::from(x)).sum::<f64>() / v.len() as f64;
    println!("clean mean intensity {:.4}", mean(&img.data));
    let stream = RngStream::new(0, "corruption");
    for kind in CorruptionType::ALL {
        let table = &severity_table()[&kind];
        print!("{:<14} ({}):", kind.name(), table.parameter);
        for s in 1..=5u8 {
            let c = Corruption::new(kind, s)?;
            let out = corrupt(&img, c, &stream.child(kind.name()).indexed(u64::from(s)))?;
            let diff = out.data.iter().zip(&img.data).map(|(a, b)| f64::from((a - b).abs())).sum::<f64>();
            print!("  s{s} |Δ|={:.1}", diff);
        }
        println!();
    }
    Ok(())
}
