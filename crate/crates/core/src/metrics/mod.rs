//! Reservoir diagnostics: graph structure, dynamics and corruption robustness.

mod dynamics;
mod graph;
mod robustness;

pub use dynamics::{
    lyapunov_exponent, memory_capacity, recall_scores, squared_correlation, sweep, write_sweep_csv, LyapunovConfig,
    LyapunovEstimate, MemoryCapacityConfig, MemoryCapacityCurve, SweepPoint,
};
pub use graph::{
    average_path_length, clustering_coefficient, random_baseline, regular_baseline, small_worldness, GraphStats,
    SmallWorldReport, SmallWorldRow,
};
pub use robustness::{corruption_error, evaluate_robustness, CorruptionReport, CorruptionRow, SEVERITIES};

use crate::error::Result;
use crate::numerics::RngStream;
use crate::topology::{undirected_adjacency, ReservoirMatrices};

/// Small-world table for a built reservoir: self-loops dropped, ring-lattice
/// baseline of equal mean degree, random graph of equal edge count.
pub fn reservoir_small_worldness(m: &ReservoirMatrices, stream: &RngStream) -> Result<SmallWorldReport> {
    let g = undirected_adjacency(&m.w, false)?;
    let regular = regular_baseline(&g)?;
    let random = random_baseline(&g, stream)?;
    small_worldness(&g, &regular, Some(&random))
}
