use std::io;

use thiserror::Error;

/// Errors produced by the decomposition and metric routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimensions: {0}")]
    Dimension(String),
    #[error("non-finite value at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("insufficient nodes: asked for {k} neighbours among {n} nodes")]
    InsufficientNodes { k: usize, n: usize },
    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },
    #[error("truncated header")]
    TruncatedHeader,
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: usize, found: usize },
    #[error("dimension overflow: {m} x {n}")]
    DimensionOverflow { m: u64, n: u64 },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("degenerate bandwidth: all pairwise distances are zero")]
    DegenerateBandwidth,
    #[error("zero variance sequence")]
    ZeroVariance,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("bin grids differ")]
    GridMismatch,
    #[error("non-monotone bin edges")]
    NonMonotoneEdges,
    #[error("optimizer did not converge after {iterations} iterations (last iterate {last:?})")]
    NoConvergence { iterations: usize, last: Vec<f64> },
    #[error("non-finite loss {loss} at epoch {epoch}")]
    NonFiniteLoss { epoch: usize, loss: f64 },
    #[error("missing neighbour sets for the dot-product loss")]
    MissingNeighbours,
    #[error("sample outside the support: {0}")]
    Domain(String),
    #[error("linear solve failed: {0}")]
    Solve(String),
    #[error("csv: {0}")]
    Csv(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
