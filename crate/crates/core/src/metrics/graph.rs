//! Path length, clustering and small-worldness of unweighted graphs.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::RngStream;
use crate::topology::Graph;

/// BFS distances from `src`; `None` marks unreachable vertices.
fn bfs(g: &Graph, src: usize) -> Vec<Option<u32>> {
    let n = g.len();
    let words = g.words();
    let mut dist = vec![None; n];
    let mut visited = vec![0u64; words];
    let mut frontier = vec![0u64; words];
    let mut next = vec![0u64; words];
    visited[src / 64] |= 1 << (src % 64);
    frontier[src / 64] |= 1 << (src % 64);
    dist[src] = Some(0);
    let mut d = 0;
    loop {
        next.iter_mut().for_each(|w| *w = 0);
        for (wi, &fw) in frontier.iter().enumerate() {
            let mut bits = fw;
            while bits != 0 {
                let v = wi * 64 + bits.trailing_zeros() as usize;
                bits &= bits - 1;
                for (n_w, r_w) in next.iter_mut().zip(g.row(v)) {
                    *n_w |= r_w;
                }
            }
        }
        let mut any = false;
        for (n_w, v_w) in next.iter_mut().zip(visited.iter_mut()) {
            *n_w &= !*v_w;
            *v_w |= *n_w;
            any |= *n_w != 0;
        }
        if !any {
            return dist;
        }
        d += 1;
        for (wi, &nw) in next.iter().enumerate() {
            let mut bits = nw;
            while bits != 0 {
                dist[wi * 64 + bits.trailing_zeros() as usize] = Some(d);
                bits &= bits - 1;
            }
        }
        std::mem::swap(&mut frontier, &mut next);
    }
}

/// Mean geodesic distance over vertex pairs.
///
/// With `include_self` off the mean runs over the `M(M−1)/2` pairs of
/// distinct vertices; with it on, the `M` zero self-distances join the
/// average, giving the normalization `2/(M(M+1))`.
pub fn average_path_length(g: &Graph, include_self: bool) -> Result<f64> {
    let m = g.len();
    if m < 2 {
        return Err(Error::Input(format!("path length needs at least 2 vertices, got {m}")));
    }
    let mut total: u64 = 0;
    for i in 0..m {
        let dist = bfs(g, i);
        for (j, d) in dist.iter().enumerate().skip(i + 1) {
            match d {
                Some(d) => total += u64::from(*d),
                None => return Err(Error::Disconnected(i, j)),
            }
        }
    }
    let m = m as f64;
    let pairs = if include_self { m * (m + 1.0) / 2.0 } else { m * (m - 1.0) / 2.0 };
    Ok(total as f64 / pairs)
}

/// Local clustering `C_i = 2 e_i / (k_i (k_i − 1))` with `k_i` the degree of
/// `i` and `e_i` the edges among its neighbours, plus the mean over vertices.
/// Self-loops are ignored; vertices with fewer than two neighbours get 0.
pub fn clustering_coefficient(g: &Graph) -> (Vec<f64>, f64) {
    let n = g.len();
    let words = g.words();
    let mut local = Vec::with_capacity(n);
    let mut hood = vec![0u64; words];
    for i in 0..n {
        hood.copy_from_slice(g.row(i));
        hood[i / 64] &= !(1 << (i % 64));
        let k = g.degree(i);
        if k < 2 {
            local.push(0.0);
            continue;
        }
        let mut twice_edges: u64 = 0;
        for j in g.neighbors(i) {
            let row = g.row(j);
            let mut c: u32 = 0;
            for (a, b) in hood.iter().zip(row) {
                c += (a & b).count_ones();
            }
            // hood contains j, so a self-loop on j would count as a triangle edge
            if g.has_self_loop(j) {
                c -= 1;
            }
            twice_edges += u64::from(c);
        }
        local.push(twice_edges as f64 / (k as f64 * (k as f64 - 1.0)));
    }
    let mean = if n == 0 { 0.0 } else { local.iter().sum::<f64>() / n as f64 };
    (local, mean)
}

/// Ring lattice with the same vertex count and mean degree rounded down to
/// an even number.
pub fn regular_baseline(g: &Graph) -> Result<Graph> {
    let n = g.len();
    if n < 3 {
        return Err(Error::Input(format!("regular baseline needs at least 3 vertices, got {n}")));
    }
    let mut k = g.mean_degree().floor() as usize;
    k -= k % 2;
    k = k.min(if n % 2 == 0 { n - 2 } else { n - 1 });
    Graph::ring_lattice(n, k)
}

/// Uniform random simple graph with the same vertex and edge counts.
pub fn random_baseline(g: &Graph, stream: &RngStream) -> Result<Graph> {
    Graph::random_with_edges(g.len(), g.edge_count(), stream)
}

/// Raw measurements of one graph.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphStats {
    pub path_length: f64,
    pub clustering: f64,
    pub mean_degree: f64,
    pub edges: usize,
}

impl GraphStats {
    pub fn measure(g: &Graph) -> Result<Self> {
        Ok(Self {
            path_length: average_path_length(g, false)?,
            clustering: clustering_coefficient(g).1,
            mean_degree: g.mean_degree(),
            edges: g.edge_count(),
        })
    }
}

/// One row of the comparison table, normalized by the regular baseline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmallWorldRow {
    pub network: String,
    pub stats: GraphStats,
    pub l_ratio: f64,
    pub c_ratio: f64,
    pub delta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmallWorldReport {
    pub l_g: f64,
    pub c_bar: f64,
    pub l_0: f64,
    pub c_0: f64,
    /// `(C/C_0) / (l_G/l_0)`.
    pub delta: f64,
    /// How the regular baseline was built.
    pub baseline: String,
    /// Regular, ours and (when given) random rows.
    pub rows: Vec<SmallWorldRow>,
}

fn row(network: &str, stats: GraphStats, reg: &GraphStats) -> SmallWorldRow {
    let l_ratio = stats.path_length / reg.path_length;
    let c_ratio = stats.clustering / reg.clustering;
    SmallWorldRow {
        network: network.into(),
        stats,
        l_ratio,
        c_ratio,
        delta: c_ratio / l_ratio,
    }
}

/// Small-worldness of `g` against `regular`, with an optional random-graph row.
pub fn small_worldness(g: &Graph, regular: &Graph, random: Option<&Graph>) -> Result<SmallWorldReport> {
    let reg = GraphStats::measure(regular)?;
    if !(reg.clustering > 0.0) {
        return Err(Error::Input("regular baseline has zero clustering".into()));
    }
    let ours = GraphStats::measure(g)?;
    let mut rows = vec![row("regular", reg.clone(), &reg), row("ours", ours.clone(), &reg)];
    if let Some(r) = random {
        rows.push(row("random", GraphStats::measure(r)?, &reg));
    }
    let delta = rows[1].delta;
    Ok(SmallWorldReport {
        l_g: ours.path_length,
        c_bar: ours.clustering,
        l_0: reg.path_length,
        c_0: reg.clustering,
        delta,
        baseline: format!(
            "ring lattice on {} vertices with degree {:.0} (mean degree {:.3} rounded down to even)",
            regular.len(),
            reg.mean_degree,
            ours.mean_degree
        ),
        rows,
    })
}

impl SmallWorldReport {
    /// Markdown table with columns `l_G/l_0`, `C/C_0` and `δ`.
    pub fn to_markdown(&self) -> String {
        let mut s = String::from("| network | l_G/l_0 | C/C_0 | delta |\n|---|---|---|---|\n");
        for r in &self.rows {
            let _ = writeln!(s, "| {} | {:.4} | {:.4} | {:.4} |", r.network, r.l_ratio, r.c_ratio, r.delta);
        }
        let _ = writeln!(s, "\nBaseline: {}.", self.baseline);
        s
    }
}
