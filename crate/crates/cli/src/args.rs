use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use powersplit::sim::SimConfig;
use serde::Serialize;

#[derive(Parser, Debug)]
#[command(
    name = "powersplit",
    version,
    about = "Split CSI into fingerprint and secret-key components"
)]
pub struct Cli {
    /// Master seed for simulation, training and permutation tests.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads (defaults to the number of cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true, default_value = ".")]
    pub output_dir: PathBuf,
    /// Flat `key = value` file; its entries override command-line flags.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate uplink, downlink and noise-free CSI on a node grid.
    #[command(args_override_self = true)]
    Simulate(SimulateArgs),
    /// PCA split into predictable and unpredictable bands.
    #[command(args_override_self = true)]
    Decompose(DecomposeArgs),
    /// Kernel PCA split with kernel ridge reconstruction.
    #[command(args_override_self = true)]
    Kpca(KpcaCmdArgs),
    /// Train an autoencoder on one side's CSI.
    #[command(args_override_self = true)]
    AeTrain(AeTrainArgs),
    /// Apply trained autoencoder weights.
    #[command(args_override_self = true)]
    AeDecompose(AeDecomposeArgs),
    /// Permutation dHSIC test between selected nodes.
    #[command(args_override_self = true)]
    Dhsic(DhsicArgs),
    /// Average neighbour TVD of PCA fingerprints against the rank.
    #[command(args_override_self = true)]
    TvdCurve(TvdCurveArgs),
    /// Uplink/downlink bit mismatch probability.
    #[command(args_override_self = true)]
    SkgMp(SkgMpArgs),
    /// Fit amplitude or phase distributions and rank them by AIC.
    #[command(args_override_self = true)]
    FitDist(FitDistArgs),
    /// Correlation, mismatch and dependence over a (d1, d2) grid.
    #[command(args_override_self = true)]
    Sweep(SweepArgs),
    /// Original and residual metrics for several methods on one dataset.
    #[command(args_override_self = true)]
    Compare(CompareArgs),
    /// Full pipeline for one method.
    #[command(args_override_self = true)]
    Run(RunArgs),
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct SimArgs {
    #[arg(long, default_value_t = 20)]
    pub grid_nx: usize,
    #[arg(long, default_value_t = 20)]
    pub grid_ny: usize,
    #[arg(long, default_value_t = 1.0)]
    pub grid_spacing_m: f64,
    #[arg(long, default_value_t = 0.0)]
    pub bs_x: f64,
    #[arg(long, default_value_t = 0.0)]
    pub bs_y: f64,
    #[arg(long, default_value_t = 10.0)]
    pub bs_z: f64,
    /// Snapshots per node.
    #[arg(long, default_value_t = 256)]
    pub m: usize,
    #[arg(long, default_value_t = 2.68e9)]
    pub carrier_hz: f64,
    #[arg(long, default_value_t = 0.5)]
    pub speed_mps: f64,
    #[arg(long, default_value_t = 0.01)]
    pub snapshot_interval_s: f64,
    #[arg(long, default_value_t = 4.0)]
    pub rician_k: f64,
    #[arg(long, default_value_t = 3.5)]
    pub path_loss_exponent: f64,
    #[arg(long, default_value_t = 6.0)]
    pub shadowing_sigma_db: f64,
    #[arg(long, default_value_t = 50.0)]
    pub shadowing_corr_m: f64,
    /// Per-node SNR; `inf` disables noise.
    #[arg(long, default_value_t = 20.0)]
    pub snr_db: f64,
}

impl SimArgs {
    pub fn to_config(&self, seed: u64) -> SimConfig {
        SimConfig {
            grid_nx: self.grid_nx,
            grid_ny: self.grid_ny,
            grid_spacing_m: self.grid_spacing_m,
            bs_position: [self.bs_x, self.bs_y, self.bs_z],
            m: self.m,
            carrier_hz: self.carrier_hz,
            speed_mps: self.speed_mps,
            snapshot_interval_s: self.snapshot_interval_s,
            rician_k: self.rician_k,
            path_loss_exponent: self.path_loss_exponent,
            shadowing_sigma_db: self.shadowing_sigma_db,
            shadowing_corr_m: self.shadowing_corr_m,
            snr_db: self.snr_db,
            seed,
        }
    }
}

/// Input files, or simulator settings when no file is given. With files the
/// grid settings still define the node layout.
#[derive(Args, Debug, Clone, Serialize)]
pub struct DataArgs {
    #[arg(long)]
    pub uplink: Option<PathBuf>,
    #[arg(long)]
    pub downlink: Option<PathBuf>,
    #[command(flatten)]
    pub sim: SimArgs,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Uplink,
    Downlink,
}

/// Which direction a single-sided command reads. `--input` replaces the
/// side's file when given.
#[derive(Args, Debug, Clone, Serialize)]
pub struct SideArgs {
    #[arg(long, value_enum, default_value_t = Side::Uplink)]
    pub side: Side,
    #[arg(long)]
    pub input: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct PcaArgs {
    #[arg(long, default_value_t = 1)]
    pub d_hat: usize,
    #[arg(long, default_value_t = 3)]
    pub d1: usize,
    #[arg(long, default_value_t = 20)]
    pub d2: usize,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct KpcaArgs {
    /// Ridge parameter; defaults to 1e-3 * trace(K_Y) / N.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// CSI kernel bandwidth; defaults to the median heuristic.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// `as-written` or `standard`.
    #[arg(long, default_value = "as-written")]
    pub kernel_variant: String,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct AeArgs {
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    /// Weight of the reconstruction term in the dot-product objective.
    #[arg(long, default_value_t = 1.0)]
    pub mu: f64,
    /// `localized` or `centralized`.
    #[arg(long, default_value = "localized")]
    pub mode: String,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct MetricArgs {
    #[arg(long, default_value_t = 8)]
    pub k_neighbors: usize,
    /// Nearest neighbours whose pairs enter the dependence test.
    #[arg(long, default_value_t = 1)]
    pub dependence_k: usize,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long = "permutations", visible_alias = "b", default_value_t = 1000)]
    pub permutations: usize,
    #[arg(long, default_value_t = 32)]
    pub bins: usize,
    #[arg(long, default_value_t = 10)]
    pub tvd_d_hat_max: usize,
    /// Comma-separated subset of tvd, cc, delta_bar, mp.
    #[arg(long, default_value = "tvd,cc,delta_bar,mp")]
    pub metrics: String,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct PipelineArgs {
    #[command(flatten)]
    pub pca: PcaArgs,
    #[arg(long, default_value_t = 2)]
    pub kpca_d_hat: usize,
    #[command(flatten)]
    pub kpca: KpcaArgs,
    /// Autoencoder bottleneck width.
    #[arg(long, default_value_t = 1)]
    pub ae_d_hat: usize,
    #[command(flatten)]
    pub ae: AeArgs,
    #[command(flatten)]
    pub metrics: MetricArgs,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub sim: SimArgs,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct DecomposeArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub pca: PcaArgs,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct KpcaCmdArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 2)]
    pub d_hat: usize,
    #[command(flatten)]
    pub kpca: KpcaArgs,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct AeTrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub side: SideArgs,
    #[arg(long, default_value_t = 1)]
    pub d_hat: usize,
    #[command(flatten)]
    pub ae: AeArgs,
    /// `e1` (reconstruction) or `e2` (neighbour dot product).
    #[arg(long, default_value = "e1")]
    pub loss: String,
    #[arg(long, default_value_t = 8)]
    pub k_neighbors: usize,
    /// Weights file; defaults to `ae_weights.aew` in the output directory.
    #[arg(long)]
    pub weights: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct AeDecomposeArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub side: SideArgs,
    #[arg(long)]
    pub weights: PathBuf,
    /// Neighbours per node when the weights expect paired inputs.
    #[arg(long, default_value_t = 8)]
    pub k_neighbors: usize,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct DhsicArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub side: SideArgs,
    /// Comma-separated node indices, at least two.
    #[arg(long, default_value = "0,1")]
    pub nodes: String,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long = "permutations", visible_alias = "b", default_value_t = 1000)]
    pub permutations: usize,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct TvdCurveArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub side: SideArgs,
    #[arg(long, default_value_t = 8)]
    pub k_neighbors: usize,
    #[arg(long, default_value_t = 32)]
    pub bins: usize,
    #[arg(long, default_value_t = 10)]
    pub d_hat_max: usize,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct SkgMpArgs {
    #[command(flatten)]
    pub data: DataArgs,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Component {
    Amplitude,
    Phase,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct FitDistArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub side: SideArgs,
    #[arg(long, value_enum, default_value_t = Component::Amplitude)]
    pub component: Component,
    /// Single node to fit; all nodes are pooled when absent.
    #[arg(long)]
    pub node: Option<usize>,
    /// Comma-separated families, or `all`.
    #[arg(long, default_value = "all")]
    pub families: String,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct SweepArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 1)]
    pub d1_min: usize,
    #[arg(long, default_value_t = 29)]
    pub d1_max: usize,
    #[arg(long, default_value_t = 2)]
    pub d2_min: usize,
    #[arg(long, default_value_t = 30)]
    pub d2_max: usize,
    #[arg(long, default_value_t = 2)]
    pub step: usize,
    #[arg(long, default_value_t = 8)]
    pub k_neighbors: usize,
    #[arg(long, default_value_t = 1)]
    pub dependence_k: usize,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Permutations per dependence test; 0 skips the dependence metric.
    #[arg(long = "permutations", visible_alias = "b", default_value_t = 0)]
    pub permutations: usize,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct CompareArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Comma-separated methods among none, pca, kpca, ae1, ae2.
    #[arg(long, default_value = "pca,kpca,ae1,ae2")]
    pub methods: String,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct RunArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// One of none, pca, kpca, ae1, ae2.
    #[arg(long, default_value = "pca")]
    pub method: String,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
}
