//! Builds the default 1000-neuron reservoir and exports W and V.
//!
//! cargo run --release --example build_reservoir -- [out_dir]

use std::path::PathBuf;
use std::time::Instant;

use vir::topology::{export_matrices, undirected_adjacency, ReservoirMatrices, ReservoirSpec};

fn main() -> vir::Result<()> {
    let out: PathBuf = std::env::args().nth(1).unwrap_or_else(|| "reservoir-export".into()).into();
    let spec = ReservoirSpec::default();
    let t = Instant::now();
    let m = ReservoirMatrices::build(&spec)?;
    println!("built N={} K={} in {:.2?}", m.neurons(), m.input_dim(), t.elapsed());
    println!("spectral radius after scaling: {:.9}", m.rho);
    println!("disconnected pair: {:?}", m.disconnected_pair);
    let nonzero_v = m.v.data().iter().filter(|x| **x != 0.0).count();
    println!("V density: {:.4}", nonzero_v as f64 / m.v.data().len() as f64);
    let g = undirected_adjacency(&m.w, false)?;
    println!("undirected edges: {} of {}", g.edge_count(), m.neurons() * (m.neurons() - 1) / 2);
    let sidecar = export_matrices(&out, &spec, &m)?;
    println!("wrote {}", sidecar.display());
    Ok(())
}
