//! Drives a 100-neuron scalar-input reservoir with a noisy sine wave and
//! writes the state trace as CSV.
//!
//! cargo run --release --example reservoir_trace -- [out.csv]

use vir::numerics::{Matrix, RngStream};
use vir::reservoir::{harvest, mean_pool, run_sequence};
use vir::topology::{ReservoirMatrices, ReservoirSpec};

fn main() -> vir::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "trace.csv".into());
    let spec = ReservoirSpec {
        n: 100,
        jump_size: 14,
        input_dim: 1,
        ..ReservoirSpec::default()
    };
    let m = ReservoirMatrices::build(&spec)?;
    let steps = 300;
    let mut seq = Matrix::zeros(steps, 1);
    for t in 0..steps {
        seq[(t, 0)] = (t as f64 * 0.2).sin();
    }
    let trace = run_sequence(&m, &seq, None, 50, 1e-3, &RngStream::new(spec.seed, "noise"))?;
    let features = harvest(&trace, None)?;
    let pooled = mean_pool(&features);
    let peak = trace.states.data().iter().fold(0.0f64, |a, v| a.max(v.abs()));
    println!("{} steps, {} harvested rows of {} features", trace.len(), features.rows(), features.cols());
    println!("max |x| = {peak:.4}, pooled[0..4] = {:?}", &pooled[..4]);
    trace.write_csv(out.as_ref())?;
    println!("wrote {out}");
    Ok(())
}
