use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Node positions in metres. Planar layouts use `z = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeGeometry {
    positions: Vec<[f64; 3]>,
}

impl NodeGeometry {
    pub fn new(positions: Vec<[f64; 3]>) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::Dimension("geometry needs at least one node".into()));
        }
        for (i, p) in positions.iter().enumerate() {
            if p.iter().any(|c| !c.is_finite()) {
                return Err(Error::Config(format!(
                    "node {i} has a non-finite coordinate"
                )));
            }
            for (j, q) in positions.iter().enumerate().skip(i + 1) {
                if p == q {
                    return Err(Error::Config(format!("nodes {i} and {j} share a position")));
                }
            }
        }
        Ok(Self { positions })
    }

    /// `nx x ny` grid with the given spacing; node index is `y * nx + x`.
    pub fn grid(nx: usize, ny: usize, spacing: f64) -> Result<Self> {
        if nx == 0 || ny == 0 || !(spacing > 0.0) {
            return Err(Error::Config(format!(
                "degenerate grid {nx}x{ny} with spacing {spacing}"
            )));
        }
        let positions = (0..ny)
            .flat_map(|y| (0..nx).map(move |x| [x as f64 * spacing, y as f64 * spacing, 0.0]))
            .collect();
        Ok(Self { positions })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[[f64; 3]] {
        &self.positions
    }

    pub fn distance(&self, a: usize, b: usize) -> f64 {
        dist(&self.positions[a], &self.positions[b])
    }

    /// The `k` nodes closest to `node` (excluding itself), nearest first.
    /// Equal distances are ordered by node index.
    pub fn nearest_neighbors(&self, node: usize, k: usize) -> Result<Vec<usize>> {
        let n = self.positions.len();
        if k >= n {
            return Err(Error::InsufficientNodes { k, n });
        }
        if node >= n {
            return Err(Error::Dimension(format!(
                "node {node} out of range for {n} nodes"
            )));
        }
        let origin = self.positions[node];
        let mut others: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != node)
            .map(|j| (dist2(&origin, &self.positions[j]), j))
            .collect();
        others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        Ok(others.into_iter().take(k).map(|(_, j)| j).collect())
    }

    /// Neighbour lists for every node.
    pub fn neighbor_table(&self, k: usize) -> Result<Vec<Vec<usize>>> {
        (0..self.len())
            .map(|i| self.nearest_neighbors(i, k))
            .collect()
    }

    /// Unordered `(a, b)` pairs with `a < b` such that one is among the
    /// other's `k` nearest neighbours, sorted.
    pub fn neighbor_pairs(&self, k: usize) -> Result<Vec<(usize, usize)>> {
        let mut pairs = Vec::new();
        for (i, nbrs) in self.neighbor_table(k)?.into_iter().enumerate() {
            for j in nbrs {
                pairs.push((i.min(j), i.max(j)));
            }
        }
        pairs.sort_unstable();
        pairs.dedup();
        Ok(pairs)
    }
}

fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    dist2(a, b).sqrt()
}
