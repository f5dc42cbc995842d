//! One-bit median quantisation and uplink/downlink mismatch probability.

use serde::{Deserialize, Serialize};

use crate::csi::{Direction, RealView};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BitSequence {
    pub bits: Vec<bool>,
    pub node: usize,
    pub direction: Direction,
    /// Set when some quantised segment was constant.
    pub degenerate: bool,
}

/// `x_t > median(x)`, using the lower middle order statistic for even
/// lengths. Returns the bits and whether `x` was constant.
pub fn quantize_median(x: &[f64]) -> Result<(Vec<bool>, bool)> {
    if x.len() < 2 {
        return Err(Error::InsufficientSamples(format!(
            "quantiser needs at least two samples, got {}",
            x.len()
        )));
    }
    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[(sorted.len() - 1) / 2];
    let degenerate = sorted[0] == sorted[sorted.len() - 1];
    Ok((x.iter().map(|&v| v > median).collect(), degenerate))
}

/// Quantises a node's real-view column: the real half and the imaginary half
/// are each quantised about their own median along time and concatenated.
pub fn quantize_node(view: &RealView, node: usize, direction: Direction) -> Result<BitSequence> {
    let col = view.column(node);
    let m = col.len() / 2;
    let (mut bits, deg_re) = quantize_median(&col[..m])?;
    let (im_bits, deg_im) = quantize_median(&col[m..])?;
    bits.extend(im_bits);
    Ok(BitSequence {
        bits,
        node,
        direction,
        degenerate: deg_re || deg_im,
    })
}

/// Fraction of disagreeing bits.
pub fn mismatch_probability(a: &BitSequence, b: &BitSequence) -> Result<f64> {
    mismatch_bits(&a.bits, &b.bits)
}

pub fn mismatch_bits(a: &[bool], b: &[bool]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(Error::InsufficientSamples("empty bit sequences".into()));
    }
    let diff = a.iter().zip(b).filter(|(x, y)| x != y).count();
    Ok(diff as f64 / a.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkgReport {
    pub per_node_mp: Vec<f64>,
    pub avg_mp: f64,
    pub degenerate_nodes: Vec<usize>,
}

/// Average uplink/downlink mismatch probability over nodes.
pub fn avg_mp(uplink: &RealView, downlink: &RealView) -> Result<SkgReport> {
    if uplink.data.shape() != downlink.data.shape() {
        return Err(Error::Dimension(format!(
            "uplink {:?} vs downlink {:?}",
            uplink.data.shape(),
            downlink.data.shape()
        )));
    }
    if uplink.rows() % 2 != 0 {
        return Err(Error::Dimension("real view needs an even row count".into()));
    }
    let mut per_node_mp = Vec::with_capacity(uplink.nodes());
    let mut degenerate_nodes = Vec::new();
    for node in 0..uplink.nodes() {
        let a = quantize_node(uplink, node, Direction::Uplink)?;
        let b = quantize_node(downlink, node, Direction::Downlink)?;
        if a.degenerate || b.degenerate {
            degenerate_nodes.push(node);
        }
        per_node_mp.push(mismatch_probability(&a, &b)?);
    }
    let avg_mp = per_node_mp.iter().sum::<f64>() / per_node_mp.len() as f64;
    Ok(SkgReport {
        per_node_mp,
        avg_mp,
        degenerate_nodes,
    })
}
