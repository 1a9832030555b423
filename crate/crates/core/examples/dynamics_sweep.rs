//! Largest Lyapunov exponent and memory capacity across spectral radii for a
//! 100-neuron reservoir.
//!
//! cargo run --release --example dynamics_sweep -- [out.csv]

use vir::metrics::{sweep, write_sweep_csv, LyapunovConfig, MemoryCapacityConfig};
use vir::topology::ReservoirSpec;

fn main() -> vir::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "sweep.csv".into());
    let spec = ReservoirSpec {
        n: 100,
        jump_size: 14,
        input_dim: 1,
        ..ReservoirSpec::default()
    };
    let rhos = [0.5, 0.75, 0.9, 1.0, 1.1, 1.25, 1.5, 1.75, 2.0];
    let points = sweep(
        &spec,
        &rhos,
        &[1.0],
        Some(&LyapunovConfig::default()),
        Some(&MemoryCapacityConfig::default()),
    )?;
    println!("{:>6} {:>10} {:>8}", "rho", "lambda", "MC");
    for p in &points {
        println!("{:>6.2} {:>10.4} {:>8.2}", p.rho, p.lambda.unwrap_or(f64::NAN), p.mc.unwrap_or(f64::NAN));
    }
    write_sweep_csv(out.as_ref(), &points)?;
    println!("wrote {out}");
    Ok(())
}
