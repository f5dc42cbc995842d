//! Synthetic composite-fading CSI generator.
//!
//! Each node sees `h_n[t] = L_n * g_n[t]` where `L_n` is the large-scale
//! amplitude (distance path loss times log-normal shadowing drawn from a
//! spatial Gaussian field with exponential correlation) and `g_n[t]` is a
//! unit-power Rician process whose scattered part evolves as a first-order
//! Gauss-Markov process with one-step correlation `J0(2 pi f_d dt)`.
//! The specular term carries a common phase reference, so the large-scale
//! component is real-valued.
//!
//! Uplink and downlink observations are zero-forcing estimates of the same
//! `h_n[t]` from BPSK pilots with independent circular Gaussian noise; with
//! `s = +-1` the estimate is `h + n * s`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::csi::{CsiMatrix, Direction, NodeGeometry};
use crate::error::{Error, Result};
use crate::special::bessel_j0;

const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub grid_nx: usize,
    pub grid_ny: usize,
    pub grid_spacing_m: f64,
    pub bs_position: [f64; 3],
    /// Snapshots per node.
    pub m: usize,
    pub carrier_hz: f64,
    pub speed_mps: f64,
    pub snapshot_interval_s: f64,
    /// Rician K-factor (linear). `0` gives Rayleigh, `inf` a pure specular channel.
    pub rician_k: f64,
    pub path_loss_exponent: f64,
    pub shadowing_sigma_db: f64,
    pub shadowing_corr_m: f64,
    /// Per-node SNR. `+inf` disables noise.
    pub snr_db: f64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            grid_nx: 20,
            grid_ny: 20,
            grid_spacing_m: 1.0,
            bs_position: [0.0, 0.0, 10.0],
            m: 256,
            carrier_hz: 2.68e9,
            speed_mps: 0.5,
            snapshot_interval_s: 0.01,
            rician_k: 4.0,
            path_loss_exponent: 3.5,
            shadowing_sigma_db: 6.0,
            shadowing_corr_m: 50.0,
            snr_db: 20.0,
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if self.m < 2 {
            return bad("m must be at least 2");
        }
        if self.grid_nx == 0 || self.grid_ny == 0 || self.grid_nx * self.grid_ny < 2 {
            return bad("grid must hold at least two nodes");
        }
        if !(self.grid_spacing_m > 0.0) {
            return bad("grid spacing must be positive");
        }
        if self.snr_db.is_nan() || self.snr_db == f64::NEG_INFINITY {
            return bad("snr_db must be finite or +inf");
        }
        if !(self.rician_k >= 0.0) {
            return bad("rician_k must be non-negative");
        }
        if !(self.path_loss_exponent > 0.0) {
            return bad("path_loss_exponent must be positive");
        }
        if !(self.shadowing_sigma_db >= 0.0) || !self.shadowing_sigma_db.is_finite() {
            return bad("shadowing_sigma_db must be finite and non-negative");
        }
        if !(self.shadowing_corr_m > 0.0) {
            return bad("shadowing_corr_m must be positive");
        }
        if !(self.carrier_hz > 0.0) || !(self.speed_mps >= 0.0) || !(self.snapshot_interval_s > 0.0)
        {
            return bad("carrier, speed and snapshot interval must be positive");
        }
        Ok(())
    }

    pub fn doppler_hz(&self) -> f64 {
        self.speed_mps * self.carrier_hz / SPEED_OF_LIGHT
    }

    /// One-step correlation of the scattered component.
    pub fn temporal_correlation(&self) -> f64 {
        bessel_j0(2.0 * PI * self.doppler_hz() * self.snapshot_interval_s)
    }

    pub fn geometry(&self) -> Result<NodeGeometry> {
        NodeGeometry::grid(self.grid_nx, self.grid_ny, self.grid_spacing_m)
    }
}

#[derive(Debug, Clone)]
pub struct SimOutput {
    pub uplink: CsiMatrix,
    pub downlink: CsiMatrix,
    /// Noise-free specular large-scale component `L_n * sqrt(K / (K + 1))`.
    pub truth_large_scale: CsiMatrix,
    /// Noise-free channel `h_n[t]` shared by both directions.
    pub channel: CsiMatrix,
    pub geometry: NodeGeometry,
    /// Large-scale amplitude `L_n` per node.
    pub large_scale: Vec<f64>,
    /// Shadowing draw per node in dB.
    pub shadowing_db: Vec<f64>,
}

struct NodeDraw {
    channel: Vec<Complex64>,
    uplink: Vec<Complex64>,
    downlink: Vec<Complex64>,
}

pub fn simulate(cfg: &SimConfig) -> Result<SimOutput> {
    cfg.validate()?;
    let geometry = cfg.geometry()?;
    let n = geometry.len();
    let shadowing_db = shadowing_field(
        &geometry,
        cfg.shadowing_sigma_db,
        cfg.shadowing_corr_m,
        cfg.seed,
    )?;

    let large_scale: Vec<f64> = geometry
        .positions()
        .iter()
        .zip(&shadowing_db)
        .map(|(p, x_db)| {
            let d = p
                .iter()
                .zip(&cfg.bs_position)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
                .max(1.0);
            d.powf(-cfg.path_loss_exponent / 2.0) * 10f64.powf(x_db / 20.0)
        })
        .collect();

    let (los, scatter) = if cfg.rician_k.is_infinite() {
        (1.0, 0.0)
    } else {
        let k = cfg.rician_k;
        ((k / (k + 1.0)).sqrt(), (1.0 / (k + 1.0)).sqrt())
    };
    let rho = cfg.temporal_correlation();
    let innovation = (1.0 - rho * rho).max(0.0).sqrt();
    let noise_on = cfg.snr_db.is_finite();
    let snr_lin = 10f64.powf(cfg.snr_db / 10.0);

    let draws: Vec<NodeDraw> = (0..n)
        .into_par_iter()
        .map(|node| {
            let mut rng = node_rng(cfg.seed, node as u64 + 1);
            let amp = large_scale[node];
            let noise_std = if noise_on {
                amp / (2.0 * snr_lin).sqrt()
            } else {
                0.0
            };
            let mut s = cgauss(&mut rng, std::f64::consts::FRAC_1_SQRT_2);
            let mut channel = Vec::with_capacity(cfg.m);
            for t in 0..cfg.m {
                if t > 0 {
                    s = s * rho + cgauss(&mut rng, std::f64::consts::FRAC_1_SQRT_2) * innovation;
                }
                channel.push(amp * (Complex64::new(los, 0.0) + s * scatter));
            }
            let observe = |rng: &mut ChaCha8Rng| -> Vec<Complex64> {
                channel
                    .iter()
                    .map(|h| {
                        if !noise_on {
                            return *h;
                        }
                        let pilot = if rng.random::<bool>() { 1.0 } else { -1.0 };
                        h + cgauss(rng, noise_std) * pilot
                    })
                    .collect()
            };
            let uplink = observe(&mut rng);
            let downlink = observe(&mut rng);
            NodeDraw {
                channel,
                uplink,
                downlink,
            }
        })
        .collect();

    let m = cfg.m;
    let assemble = |pick: &dyn Fn(&NodeDraw) -> &Vec<Complex64>| {
        DMatrix::from_fn(m, n, |r, c| pick(&draws[c])[r])
    };
    let snr = if noise_on { Some(cfg.snr_db) } else { None };
    let uplink = CsiMatrix::new(assemble(&|d| &d.uplink), Direction::Uplink, snr)?;
    let downlink = CsiMatrix::new(assemble(&|d| &d.downlink), Direction::Downlink, snr)?;
    let channel = CsiMatrix::new(assemble(&|d| &d.channel), Direction::Uplink, None)?;
    let truth_large_scale = CsiMatrix::new(
        DMatrix::from_fn(m, n, |_, c| Complex64::new(large_scale[c] * los, 0.0)),
        Direction::Uplink,
        None,
    )?;
    Ok(SimOutput {
        uplink,
        downlink,
        truth_large_scale,
        channel,
        geometry,
        large_scale,
        shadowing_db,
    })
}

/// Independent stream per node so output does not depend on thread count.
fn node_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn cgauss<R: Rng>(rng: &mut R, std: f64) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re * std, im * std)
}

/// Zero-mean Gaussian field with covariance `sigma^2 exp(-d / corr)`, drawn by
/// Cholesky factorisation over the node positions.
pub fn shadowing_field(
    geometry: &NodeGeometry,
    sigma_db: f64,
    corr_m: f64,
    seed: u64,
) -> Result<Vec<f64>> {
    let n = geometry.len();
    if sigma_db == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let cov = DMatrix::from_fn(n, n, |i, j| {
        sigma_db * sigma_db * (-geometry.distance(i, j) / corr_m).exp()
    });
    let chol = nalgebra::Cholesky::new(cov)
        .ok_or_else(|| Error::Solve("shadowing covariance is not positive definite".into()))?;
    let mut rng = node_rng(seed, 0);
    let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    Ok((chol.l() * z).iter().copied().collect())
}
