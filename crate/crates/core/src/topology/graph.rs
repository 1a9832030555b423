use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::RngStream;

/// Unweighted undirected graph stored as one adjacency bitset per vertex.
///
/// Dense storage keeps the nearly-complete reservoir graphs cheap to query:
/// neighbourhood intersections and BFS frontiers are word-wise ANDs and ORs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    words: usize,
    bits: Vec<u64>,
}

impl Graph {
    pub fn empty(n: usize) -> Self {
        let words = n.div_ceil(64).max(1);
        Self {
            n,
            words,
            bits: vec![0; n * words],
        }
    }

    pub fn complete(n: usize) -> Self {
        let mut g = Self::empty(n);
        for i in 0..n {
            for j in i + 1..n {
                g.add_edge(i, j);
            }
        }
        g
    }

    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Self {
        let mut g = Self::empty(n);
        for &(i, j) in edges {
            g.add_edge(i, j);
        }
        g
    }

    /// Ring lattice: every vertex linked to its `k/2` nearest neighbours on
    /// each side. `k` must be even and below `n`.
    pub fn ring_lattice(n: usize, k: usize) -> Result<Self> {
        if k % 2 != 0 || k >= n {
            return Err(Error::Parameter(format!("ring lattice needs an even degree below n={n}, got {k}")));
        }
        let mut g = Self::empty(n);
        for i in 0..n {
            for d in 1..=k / 2 {
                g.add_edge(i, (i + d) % n);
            }
        }
        Ok(g)
    }

    /// Uniformly random simple graph with exactly `m` edges.
    pub fn random_with_edges(n: usize, m: usize, stream: &RngStream) -> Result<Self> {
        let max = n * n.saturating_sub(1) / 2;
        if m > max {
            return Err(Error::Parameter(format!("{m} edges do not fit in a simple graph on {n} vertices")));
        }
        let mut rng = stream.rng();
        // sample whichever of the edge set or its complement is smaller
        let dense = m > max / 2;
        let target = if dense { max - m } else { m };
        let mut picked = Self::empty(n);
        let mut count = 0;
        while count < target {
            let i = rng.random_range(0..n);
            let j = rng.random_range(0..n);
            if i != j && !picked.has_edge(i, j) {
                picked.add_edge(i, j);
                count += 1;
            }
        }
        if !dense {
            return Ok(picked);
        }
        let mut g = Self::complete(n);
        for i in 0..n {
            for j in i + 1..n {
                if picked.has_edge(i, j) {
                    g.remove_edge(i, j);
                }
            }
        }
        Ok(g)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn add_edge(&mut self, i: usize, j: usize) {
        self.set(i, j, true);
        self.set(j, i, true);
    }

    pub fn remove_edge(&mut self, i: usize, j: usize) {
        self.set(i, j, false);
        self.set(j, i, false);
    }

    #[inline]
    fn set(&mut self, i: usize, j: usize, on: bool) {
        let w = &mut self.bits[i * self.words + j / 64];
        if on {
            *w |= 1 << (j % 64);
        } else {
            *w &= !(1 << (j % 64));
        }
    }

    #[inline]
    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.words + j / 64] >> (j % 64) & 1 == 1
    }

    pub fn has_self_loop(&self, i: usize) -> bool {
        self.has_edge(i, i)
    }

    /// Adjacency bitset of vertex `i` (self-loop bit included when present).
    #[inline]
    pub fn row(&self, i: usize) -> &[u64] {
        &self.bits[i * self.words..(i + 1) * self.words]
    }

    pub fn words(&self) -> usize {
        self.words
    }

    /// Neighbours of `i`, excluding `i` itself.
    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.n).filter(move |&j| j != i && self.has_edge(i, j))
    }

    /// Degree of `i`, self-loops not counted.
    pub fn degree(&self, i: usize) -> usize {
        let total: u32 = self.row(i).iter().map(|w| w.count_ones()).sum();
        total as usize - usize::from(self.has_self_loop(i))
    }

    /// Number of undirected edges between distinct vertices.
    pub fn edge_count(&self) -> usize {
        (0..self.n).map(|i| self.degree(i)).sum::<usize>() / 2
    }

    pub fn mean_degree(&self) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        2.0 * self.edge_count() as f64 / self.n as f64
    }
}
