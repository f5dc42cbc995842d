//! Grid evaluation of the unpredictable band `(d1, d2)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::csi::RealView;
use crate::dep::{avg_neighbor_cc, neighbor_dependence};
use crate::error::{Error, Result};
use crate::pca::PcaBasis;
use crate::skg::avg_mp;

/// Permutation-test settings for the dependence metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DependenceConfig {
    pub alpha: f64,
    pub permutations: usize,
    pub seed: u64,
}

impl Default for DependenceConfig {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            permutations: 1000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub d1_min: usize,
    pub d1_max: usize,
    pub d2_min: usize,
    pub d2_max: usize,
    pub step: usize,
    /// When set, each cell also reports the average dependence metric.
    pub dependence: Option<DependenceConfig>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            d1_min: 1,
            d1_max: 29,
            d2_min: 2,
            d2_max: 30,
            step: 2,
            dependence: None,
        }
    }
}

impl SweepConfig {
    /// Cells with `d1 <= d2 <= dim`, ordered by `(d1, d2)`.
    pub fn cells(&self, dim: usize) -> Result<Vec<(usize, usize)>> {
        if self.step == 0
            || self.d1_min == 0
            || self.d1_min > self.d1_max
            || self.d2_min > self.d2_max
        {
            return Err(Error::Config(format!("invalid sweep bounds {self:?}")));
        }
        let d2_max = self.d2_max.min(dim);
        let mut cells = Vec::new();
        for d1 in (self.d1_min..=self.d1_max).step_by(self.step) {
            for d2 in (self.d2_min..=d2_max).step_by(self.step) {
                if d1 <= d2 {
                    cells.push((d1, d2));
                }
            }
        }
        if cells.is_empty() {
            return Err(Error::Config("sweep grid is empty".into()));
        }
        Ok(cells)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub d1: usize,
    pub d2: usize,
    pub avg_cc: f64,
    pub avg_mp: f64,
    pub delta_bar: Option<f64>,
}

/// Evaluates every cell of the grid on the band projections of both sides.
/// `neighbors` drives the correlation average and `pairs` the dependence test.
pub fn sweep(
    uplink: &RealView,
    downlink: &RealView,
    basis: &PcaBasis,
    neighbors: &[Vec<usize>],
    pairs: &[(usize, usize)],
    cfg: &SweepConfig,
) -> Result<Vec<SweepRecord>> {
    let cells = cfg.cells(basis.dim())?;
    cells
        .into_par_iter()
        .map(|(d1, d2)| {
            let ul = RealView::new(basis.project_band(uplink, d1, d2)?);
            let dl = RealView::new(basis.project_band(downlink, d1, d2)?);
            let delta_bar = match cfg.dependence {
                Some(dc) => Some(
                    neighbor_dependence(&ul, pairs, dc.alpha, dc.permutations, dc.seed)?
                        .avg_delta_bar,
                ),
                None => None,
            };
            Ok(SweepRecord {
                d1,
                d2,
                avg_cc: avg_neighbor_cc(&ul, neighbors)?,
                avg_mp: avg_mp(&ul, &dl)?.avg_mp,
                delta_bar,
            })
        })
        .collect()
}
