//! Benchmark fixtures shared by the criterion targets.

use powersplit::sim::{simulate, SimConfig, SimOutput};

/// Simulated dataset on an `nx x ny` grid with `m` snapshots.
pub fn dataset(nx: usize, ny: usize, m: usize) -> SimOutput {
    simulate(&SimConfig {
        grid_nx: nx,
        grid_ny: ny,
        m,
        ..SimConfig::default()
    })
    .expect("valid simulator settings")
}
