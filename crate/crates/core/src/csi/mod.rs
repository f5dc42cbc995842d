//! CSI data model: complex snapshot matrices, their real-concatenated
//! view and node geometry.

mod geometry;
mod io;

pub use geometry::NodeGeometry;
pub use io::{read_csi_csv, read_csi_file, write_csi_file, MAGIC};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One complex channel coefficient.
pub type ComplexSample = Complex64;

/// Link direction of an observation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Uplink,
    Downlink,
}

impl Direction {
    pub(crate) fn to_byte(self) -> u8 {
        match self {
            Direction::Uplink => 0,
            Direction::Downlink => 1,
        }
    }

    pub(crate) fn from_byte(b: u8) -> Option<Self> {
        match b {
            0 => Some(Direction::Uplink),
            1 => Some(Direction::Downlink),
            _ => None,
        }
    }
}

/// An `m x n` matrix of channel snapshots: rows are time samples, columns
/// are nodes. Every entry is finite.
#[derive(Debug, Clone, PartialEq)]
pub struct CsiMatrix {
    data: DMatrix<Complex64>,
    direction: Direction,
    snr_db: Option<f64>,
}

impl CsiMatrix {
    pub fn new(
        data: DMatrix<Complex64>,
        direction: Direction,
        snr_db: Option<f64>,
    ) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(Error::Dimension(format!(
                "CSI matrix must be at least 1x1, got {}x{}",
                data.nrows(),
                data.ncols()
            )));
        }
        for c in 0..data.ncols() {
            for r in 0..data.nrows() {
                let z = data[(r, c)];
                if !z.re.is_finite() || !z.im.is_finite() {
                    return Err(Error::NonFinite { row: r, col: c });
                }
            }
        }
        Ok(Self {
            data,
            direction,
            snr_db,
        })
    }

    /// Snapshot count.
    pub fn m(&self) -> usize {
        self.data.nrows()
    }

    /// Node count.
    pub fn n(&self) -> usize {
        self.data.ncols()
    }

    pub fn data(&self) -> &DMatrix<Complex64> {
        &self.data
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn snr_db(&self) -> Option<f64> {
        self.snr_db
    }

    pub fn column(&self, node: usize) -> Vec<Complex64> {
        self.data.column(node).iter().copied().collect()
    }

    /// Per-snapshot amplitude of one node.
    pub fn amplitude(&self, node: usize) -> Vec<f64> {
        self.data.column(node).iter().map(|z| z.norm()).collect()
    }

    /// Per-snapshot phase of one node in `(-pi, pi]`.
    pub fn phase(&self, node: usize) -> Vec<f64> {
        self.data.column(node).iter().map(|z| z.arg()).collect()
    }

    pub fn with_direction(mut self, direction: Direction) -> Self {
        self.direction = direction;
        self
    }

    /// `[Re; Im]` column stacking.
    pub fn to_real_view(&self) -> RealView {
        let (m, n) = self.data.shape();
        let data = DMatrix::from_fn(2 * m, n, |r, c| {
            if r < m {
                self.data[(r, c)].re
            } else {
                self.data[(r - m, c)].im
            }
        });
        RealView { data }
    }

    pub fn from_real_view(
        view: &RealView,
        direction: Direction,
        snr_db: Option<f64>,
    ) -> Result<Self> {
        let rows = view.data.nrows();
        if rows % 2 != 0 {
            return Err(Error::Dimension(format!(
                "real view must have an even row count, got {rows}"
            )));
        }
        let m = rows / 2;
        let data = DMatrix::from_fn(m, view.data.ncols(), |r, c| {
            Complex64::new(view.data[(r, c)], view.data[(r + m, c)])
        });
        Self::new(data, direction, snr_db)
    }
}

/// Real parts of each column stacked above the imaginary parts: `2m x n`.
#[derive(Debug, Clone, PartialEq)]
pub struct RealView {
    pub data: DMatrix<f64>,
}

impl RealView {
    pub fn new(data: DMatrix<f64>) -> Self {
        Self { data }
    }

    /// Number of real features (`2m`).
    pub fn rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn nodes(&self) -> usize {
        self.data.ncols()
    }

    pub fn column(&self, node: usize) -> &[f64] {
        let rows = self.data.nrows();
        &self.data.as_slice()[node * rows..(node + 1) * rows]
    }

    /// Amplitude per snapshot of one node, treating the halves as `[Re; Im]`.
    pub fn amplitude(&self, node: usize) -> Vec<f64> {
        let col = self.column(node);
        let m = col.len() / 2;
        (0..m).map(|t| col[t].hypot(col[t + m])).collect()
    }

    /// Column-wise mean over nodes.
    pub fn node_mean(&self) -> Vec<f64> {
        let n = self.data.ncols() as f64;
        self.data.column_sum().iter().map(|s| s / n).collect()
    }

    /// Copy with the node mean removed from every column.
    pub fn centered(&self) -> (RealView, Vec<f64>) {
        let mean = self.node_mean();
        let mut data = self.data.clone();
        for mut col in data.column_iter_mut() {
            for (x, mu) in col.iter_mut().zip(&mean) {
                *x -= mu;
            }
        }
        (RealView { data }, mean)
    }
}
