//! Small-world table for the default reservoir graph.
//!
//! cargo run --release --example small_world

use vir::metrics::reservoir_small_worldness;
use vir::numerics::RngStream;
use vir::topology::{ReservoirMatrices, ReservoirSpec};

fn main() -> vir::Result<()> {
    let spec = ReservoirSpec::default();
    let m = ReservoirMatrices::build(&spec)?;
    let report = reservoir_small_worldness(&m, &RngStream::new(spec.seed, "random-graph"))?;
    print!("{}", report.to_markdown());
    Ok(())
}
