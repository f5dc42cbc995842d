//! Fingerprint separability: total variation distance between per-node
//! empirical amplitude measures.

use serde::{Deserialize, Serialize};

use crate::csi::RealView;
use crate::error::{Error, Result};
use crate::pca::PcaBasis;

pub const DEFAULT_BINS: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalMeasure {
    pub bin_edges: Vec<f64>,
    pub probs: Vec<f64>,
    /// Samples that fell outside the edges and were clipped into an end bin.
    pub clipped: usize,
}

fn check_edges(edges: &[f64]) -> Result<()> {
    if edges.len() < 2 {
        return Err(Error::Config(format!(
            "need at least two bin edges, got {}",
            edges.len()
        )));
    }
    if edges.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::NonMonotoneEdges);
    }
    Ok(())
}

/// `bins` equal-width bins spanning `[lo, hi]`. A zero-width range is
/// widened symmetrically so that all samples land in the middle bin.
pub fn equal_width_edges(lo: f64, hi: f64, bins: usize) -> Result<Vec<f64>> {
    if bins == 0 {
        return Err(Error::Config("bin count must be positive".into()));
    }
    let (lo, hi) = if hi > lo {
        (lo, hi)
    } else {
        let pad = 1e-9 * lo.abs().max(1.0);
        (lo - pad, hi + pad)
    };
    let w = (hi - lo) / bins as f64;
    let mut edges: Vec<f64> = (0..=bins).map(|i| lo + w * i as f64).collect();
    edges[bins] = hi;
    Ok(edges)
}

/// Normalised bin counts. Bins are half-open except the last, which also
/// holds its right edge.
pub fn histogram(samples: &[f64], edges: &[f64]) -> Result<EmpiricalMeasure> {
    check_edges(edges)?;
    if samples.is_empty() {
        return Err(Error::InsufficientSamples("histogram of no samples".into()));
    }
    let bins = edges.len() - 1;
    let mut counts = vec![0usize; bins];
    let mut clipped = 0;
    for &x in samples {
        let idx = if x < edges[0] {
            clipped += 1;
            0
        } else if x > edges[bins] {
            clipped += 1;
            bins - 1
        } else {
            // first edge strictly greater than x, minus one
            edges
                .partition_point(|&e| e <= x)
                .saturating_sub(1)
                .min(bins - 1)
        };
        counts[idx] += 1;
    }
    let n = samples.len() as f64;
    Ok(EmpiricalMeasure {
        bin_edges: edges.to_vec(),
        probs: counts.into_iter().map(|c| c as f64 / n).collect(),
        clipped,
    })
}

/// Half the L1 distance between two measures on the same grid.
pub fn tvd(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Result<f64> {
    if mu.bin_edges != nu.bin_edges || mu.probs.len() != nu.probs.len() {
        return Err(Error::GridMismatch);
    }
    Ok(tvd_probs(&mu.probs, &nu.probs))
}

fn tvd_probs(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// TVD between two sample sets on a shared grid spanning their joint range.
pub fn pair_tvd(a: &[f64], b: &[f64], bins: usize) -> Result<f64> {
    let (lo, hi) = a
        .iter()
        .chain(b)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        });
    let edges = equal_width_edges(lo, hi, bins)?;
    tvd(&histogram(a, &edges)?, &histogram(b, &edges)?)
}

/// Mean pairwise TVD over `(node, neighbour)` pairs, in node order.
pub fn avg_neighbor_tvd(
    fingerprints: &[Vec<f64>],
    neighbors: &[Vec<usize>],
    bins: usize,
) -> Result<f64> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for (node, nbrs) in neighbors.iter().enumerate() {
        for &j in nbrs {
            sum += pair_tvd(&fingerprints[node], &fingerprints[j], bins)?;
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::Config("no neighbour pairs".into()));
    }
    Ok(sum / count as f64)
}

/// Per-node amplitude fingerprints of the rank-`d_hat` predictable
/// component (node mean restored); `d_hat = 0` gives the raw amplitudes.
pub fn fingerprints(view: &RealView, basis: &PcaBasis, d_hat: usize) -> Result<Vec<Vec<f64>>> {
    let source = if d_hat == 0 {
        view.clone()
    } else {
        let mut data = basis.project_band(view, 1, d_hat)?;
        for mut col in data.column_iter_mut() {
            for (x, mu) in col.iter_mut().zip(&basis.mean) {
                *x += mu;
            }
        }
        RealView::new(data)
    };
    Ok((0..source.nodes()).map(|n| source.amplitude(n)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TvdPoint {
    pub d_hat: usize,
    pub avg_tvd: f64,
}

/// Average neighbour TVD for `d_hat = 0..=d_hat_max`.
pub fn tvd_curve(
    view: &RealView,
    basis: &PcaBasis,
    neighbors: &[Vec<usize>],
    d_hat_max: usize,
    bins: usize,
) -> Result<Vec<TvdPoint>> {
    (0..=d_hat_max.min(basis.dim()))
        .map(|d_hat| {
            let fp = fingerprints(view, basis, d_hat)?;
            Ok(TvdPoint {
                d_hat,
                avg_tvd: avg_neighbor_tvd(&fp, neighbors, bins)?,
            })
        })
        .collect()
}
