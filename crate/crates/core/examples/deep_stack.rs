//! Builds series and parallel three-layer stacks and runs a random sequence
//! through both.
//!
//! cargo run --release --example deep_stack

use vir::numerics::{draw_gaussian, Matrix, RngStream};
use vir::reservoir::{harvest, run_parallel, run_series, DeepConfig, DeepMode, DeepReservoir};
use vir::topology::ReservoirSpec;

fn main() -> vir::Result<()> {
    let base = ReservoirSpec {
        n: 200,
        jump_size: 27,
        input_dim: 16,
        ..ReservoirSpec::default()
    };
    let steps = 49;
    let seq = Matrix::from_vec(steps, 16, draw_gaussian(&RngStream::new(1, "input"), 0.0, 0.5, steps * 16)?)?;

    let series = DeepReservoir::build(&DeepConfig::stacked(DeepMode::Series, &base, 3))?;
    let last = run_series(&series, &seq, 0)?;
    println!("series: {} layers, feature dims {:?}", series.depth(), series.feature_dims());
    println!("  last layer trace {}x{}, features {}", last.len(), last.states.cols(), harvest(&last, None)?.cols());

    let parallel = DeepReservoir::build(&DeepConfig::stacked(DeepMode::Parallel, &base, 3))?;
    let branches = run_parallel(&parallel, &seq, 0)?;
    println!("parallel: {} branches, feature dims {:?}", branches.len(), parallel.feature_dims());
    for (i, (b, m)) in branches.iter().zip(&parallel.layers).enumerate() {
        println!("  branch {i}: rho {:.6}, final |x|_inf {:.4}", m.rho, b.states.row(steps - 1).iter().fold(0.0f64, |a, v| a.max(v.abs())));
    }
    Ok(())
}
