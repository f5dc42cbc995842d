//! End-to-end evaluation: load or simulate a dataset, split it with one
//! method, and measure the fingerprint and key-generation metrics.
//!
//! The "original" metrics are taken on the node-centred signal, using the
//! uplink node mean for both directions. A PCA split whose unpredictable
//! band spans every component therefore reproduces them exactly.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::ae::{self, LossKind, TrainConfig};
use crate::csi::{read_csi_csv, read_csi_file, CsiMatrix, Direction, NodeGeometry, RealView};
use crate::dep::{avg_neighbor_cc, neighbor_dependence};
use crate::error::{Error, Result};
use crate::fp::{self, avg_neighbor_tvd, TvdPoint};
use crate::kpca::{self, KpcaConfig, KpcaDiagnostics};
use crate::pca::{decompose, fit_pca, DecompConfig, PcaBasis};
use crate::sim::{simulate, SimConfig};
use crate::skg::avg_mp;
use crate::sweep::DependenceConfig;

pub const TOOL_NAME: &str = env!("CARGO_PKG_NAME");
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    None,
    #[default]
    Pca,
    Kpca,
    Ae1,
    Ae2,
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Self::None),
            "pca" => Ok(Self::Pca),
            "kpca" => Ok(Self::Kpca),
            "ae1" => Ok(Self::Ae1),
            "ae2" => Ok(Self::Ae2),
            other => Err(Error::Config(format!("unknown method {other}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Tvd,
    Cc,
    DeltaBar,
    Mp,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::Tvd, Metric::Cc, Metric::DeltaBar, Metric::Mp];
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tvd" => Ok(Self::Tvd),
            "cc" => Ok(Self::Cc),
            "delta_bar" | "delta-bar" | "dbar" => Ok(Self::DeltaBar),
            "mp" => Ok(Self::Mp),
            other => Err(Error::Config(format!("unknown metric {other}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Source {
    /// Generate both directions with the simulator.
    Simulate,
    /// Binary CSI files, or CSV when the extension is `.csv`. Node geometry
    /// is taken from the simulator grid settings.
    Files { uplink: PathBuf, downlink: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub source: Source,
    pub sim: SimConfig,
    pub method: Method,
    pub pca: DecompConfig,
    pub kpca: KpcaConfig,
    pub ae: TrainConfig,
    pub metrics: Vec<Metric>,
    /// Neighbours per node for the correlation, TVD and E2 averages.
    pub k_neighbors: usize,
    /// Nearest neighbours whose unordered pairs enter the dependence test.
    pub dependence_k: usize,
    pub dependence: DependenceConfig,
    pub tvd_bins: usize,
    /// Upper end of the TVD curve reported for the PCA method.
    pub tvd_d_hat_max: usize,
    /// Master seed; simulator, training and permutation seeds derive from it.
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            source: Source::Simulate,
            sim: SimConfig::default(),
            method: Method::Pca,
            pca: DecompConfig::default(),
            kpca: KpcaConfig::default(),
            ae: TrainConfig::default(),
            metrics: Metric::ALL.to_vec(),
            k_neighbors: 8,
            dependence_k: 1,
            dependence: DependenceConfig::default(),
            tvd_bins: fp::DEFAULT_BINS,
            tvd_d_hat_max: 10,
            seed: 0,
        }
    }
}

impl PipelineConfig {
    /// Copies the master seed into every stage and fixes the metric order.
    pub fn resolved(&self) -> Self {
        let mut c = self.clone();
        c.sim.seed = c.seed;
        c.ae.seed = c.seed;
        c.dependence.seed = c.seed;
        c.ae.loss = match c.method {
            Method::Ae2 => LossKind::E2,
            _ => LossKind::E1,
        };
        c.ae.k_neighbors = c.k_neighbors;
        c.metrics.sort();
        c.metrics.dedup();
        c
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_neighbors == 0 || self.dependence_k == 0 {
            return Err(Error::Config("neighbour counts must be at least 1".into()));
        }
        if self.tvd_bins == 0 {
            return Err(Error::Config("tvd_bins must be at least 1".into()));
        }
        if !(self.dependence.alpha > 0.0 && self.dependence.alpha < 1.0)
            || self.dependence.permutations == 0
        {
            return Err(Error::Config(
                "dependence test needs 0 < alpha < 1 and permutations >= 1".into(),
            ));
        }
        match self.method {
            Method::Kpca if self.kpca.d_hat == 0 => {
                Err(Error::Config("kpca needs d_hat >= 1".into()))
            }
            Method::Ae1 | Method::Ae2 => self.ae.validate(),
            _ => Ok(()),
        }
    }

    fn same_dataset(&self, other: &Self) -> bool {
        self.source == other.source && self.sim == other.sim && self.seed == other.seed
    }
}

/// Uplink and downlink observations with their node layout.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub uplink: CsiMatrix,
    pub downlink: CsiMatrix,
    pub geometry: NodeGeometry,
}

/// Reads a binary CSI file, or CSV when the extension is `.csv`.
pub fn read_csi_auto(path: &Path, direction: Direction) -> Result<CsiMatrix> {
    let csi = match path.extension().and_then(|e| e.to_str()) {
        Some(ext) if ext.eq_ignore_ascii_case("csv") => read_csi_csv(path)?,
        _ => read_csi_file(path)?,
    };
    Ok(csi.with_direction(direction))
}

impl Dataset {
    pub fn load(cfg: &PipelineConfig) -> Result<Self> {
        let cfg = cfg.resolved();
        match &cfg.source {
            Source::Simulate => {
                let out = simulate(&cfg.sim)?;
                Ok(Self {
                    uplink: out.uplink,
                    downlink: out.downlink,
                    geometry: out.geometry,
                })
            }
            Source::Files { uplink, downlink } => {
                let uplink = read_csi_auto(uplink, Direction::Uplink)?;
                let downlink = read_csi_auto(downlink, Direction::Downlink)?;
                if uplink.data().shape() != downlink.data().shape() {
                    return Err(Error::Dimension(format!(
                        "uplink {:?} and downlink {:?} differ",
                        uplink.data().shape(),
                        downlink.data().shape()
                    )));
                }
                let geometry = cfg.sim.geometry()?;
                if geometry.len() != uplink.n() {
                    return Err(Error::Dimension(format!(
                        "grid has {} nodes, files have {}",
                        geometry.len(),
                        uplink.n()
                    )));
                }
                Ok(Self {
                    uplink,
                    downlink,
                    geometry,
                })
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolInfo {
    pub name: String,
    pub version: String,
}

impl Default for ToolInfo {
    fn default() -> Self {
        Self {
            name: TOOL_NAME.into(),
            version: TOOL_VERSION.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub snapshots: usize,
    pub nodes: usize,
}

/// Metrics of one split; a field is absent when its metric was not requested.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MethodMetrics {
    pub original_cc: Option<f64>,
    pub residual_cc: Option<f64>,
    pub original_delta_bar: Option<f64>,
    pub residual_delta_bar: Option<f64>,
    pub original_mp: Option<f64>,
    pub residual_mp: Option<f64>,
    /// Average neighbour TVD of the predictable-part amplitudes.
    pub tvd: Option<f64>,
    pub tvd_curve: Option<Vec<TvdPoint>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AeSummary {
    pub uplink_final_loss: f64,
    pub downlink_final_loss: f64,
    pub epochs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub tool: ToolInfo,
    pub config: PipelineConfig,
    pub dataset: DatasetInfo,
    pub method: Method,
    pub metrics: MethodMetrics,
    pub kpca: Option<KpcaDiagnostics>,
    pub ae: Option<AeSummary>,
}

/// Predictable fingerprint source and unpredictable parts of both sides.
pub struct Split {
    pub predictable_uplink: RealView,
    pub unpredictable_uplink: RealView,
    pub unpredictable_downlink: RealView,
    pub kpca: Option<KpcaDiagnostics>,
    pub ae: Option<AeSummary>,
}

/// Shared per-dataset state: real views, the uplink PCA basis, centred
/// baselines and neighbour structures.
pub struct Prepared {
    pub uplink: RealView,
    pub downlink: RealView,
    pub basis: PcaBasis,
    pub original_uplink: RealView,
    pub original_downlink: RealView,
    pub neighbors: Vec<Vec<usize>>,
    pub pairs: Vec<(usize, usize)>,
}

fn stage<T>(name: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| {
        log::error!("{name} stage failed: {e}");
        e
    })
}

impl Prepared {
    pub fn new(data: &Dataset, cfg: &PipelineConfig) -> Result<Self> {
        let uplink = data.uplink.to_real_view();
        let downlink = data.downlink.to_real_view();
        let basis = stage("pca", fit_pca(&uplink))?;
        let original_uplink = RealView::new(basis.centered(&uplink)?);
        let original_downlink = RealView::new(basis.centered(&downlink)?);
        let neighbors = data.geometry.neighbor_table(cfg.k_neighbors)?;
        let pairs = data.geometry.neighbor_pairs(cfg.dependence_k)?;
        Ok(Self {
            uplink,
            downlink,
            basis,
            original_uplink,
            original_downlink,
            neighbors,
            pairs,
        })
    }
}

fn real(csi: &CsiMatrix) -> RealView {
    csi.to_real_view()
}

/// Applies the configured method.
pub fn split(data: &Dataset, prep: &Prepared, cfg: &PipelineConfig) -> Result<Split> {
    match cfg.method {
        Method::None => Ok(Split {
            predictable_uplink: prep.uplink.clone(),
            unpredictable_uplink: prep.original_uplink.clone(),
            unpredictable_downlink: prep.original_downlink.clone(),
            kpca: None,
            ae: None,
        }),
        Method::Pca => {
            let ul = stage("decompose", decompose(&prep.uplink, &prep.basis, cfg.pca))?;
            let dl = stage("decompose", decompose(&prep.downlink, &prep.basis, cfg.pca))?;
            let predictable_uplink = if cfg.pca.d_hat == 0 {
                prep.uplink.clone()
            } else {
                ul.predictable_with_mean()
            };
            Ok(Split {
                predictable_uplink,
                unpredictable_uplink: ul.unpredictable,
                unpredictable_downlink: dl.unpredictable,
                kpca: None,
                ae: None,
            })
        }
        Method::Kpca => {
            let model = stage("kpca", kpca::fit_kpca(&data.uplink, &cfg.kpca))?;
            let pul = kpca::reconstruct_predictable(&model, &data.uplink)?;
            let pdl = kpca::reconstruct_predictable(&model, &data.downlink)?;
            Ok(Split {
                unpredictable_uplink: real(&kpca::residual(&data.uplink, &pul)?),
                unpredictable_downlink: real(&kpca::residual(&data.downlink, &pdl)?),
                predictable_uplink: real(&pul),
                kpca: Some(model.diagnostics()),
                ae: None,
            })
        }
        Method::Ae1 | Method::Ae2 => {
            let layout = ae::layout_for(&cfg.ae, &prep.neighbors);
            let models = stage(
                "ae-train",
                ae::train_split(&prep.uplink, &prep.downlink, &layout, &cfg.ae),
            )?;
            let ul = ae::decompose_ae(&models.uplink, &prep.uplink, &layout)?;
            let dl = ae::decompose_ae(&models.downlink, &prep.downlink, &layout)?;
            let last = |log: &[ae::EpochLog]| log.last().map_or(f64::NAN, |e| e.loss);
            Ok(Split {
                predictable_uplink: ul.predictable,
                unpredictable_uplink: ul.unpredictable,
                unpredictable_downlink: dl.unpredictable,
                kpca: None,
                ae: Some(AeSummary {
                    uplink_final_loss: last(&models.uplink_log),
                    downlink_final_loss: last(&models.downlink_log),
                    epochs: cfg.ae.epochs,
                }),
            })
        }
    }
}

/// Metrics on the centred baseline; shared by every method on one dataset.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Baseline {
    pub cc: Option<f64>,
    pub delta_bar: Option<f64>,
    pub mp: Option<f64>,
}

pub fn baseline(prep: &Prepared, cfg: &PipelineConfig) -> Result<Baseline> {
    let want = |m| cfg.metrics.contains(&m);
    let dc = cfg.dependence;
    Ok(Baseline {
        cc: want(Metric::Cc)
            .then(|| avg_neighbor_cc(&prep.original_uplink, &prep.neighbors))
            .transpose()?,
        delta_bar: want(Metric::DeltaBar)
            .then(|| {
                stage(
                    "dhsic",
                    neighbor_dependence(
                        &prep.original_uplink,
                        &prep.pairs,
                        dc.alpha,
                        dc.permutations,
                        dc.seed,
                    ),
                )
                .map(|r| r.avg_delta_bar)
            })
            .transpose()?,
        mp: want(Metric::Mp)
            .then(|| avg_mp(&prep.original_uplink, &prep.original_downlink).map(|r| r.avg_mp))
            .transpose()?,
    })
}

pub fn evaluate(
    prep: &Prepared,
    split: &Split,
    base: &Baseline,
    cfg: &PipelineConfig,
) -> Result<MethodMetrics> {
    let want = |m| cfg.metrics.contains(&m);
    let dc = cfg.dependence;
    let residual_cc = want(Metric::Cc)
        .then(|| avg_neighbor_cc(&split.unpredictable_uplink, &prep.neighbors))
        .transpose()?;
    let residual_delta_bar = want(Metric::DeltaBar)
        .then(|| {
            stage(
                "dhsic",
                neighbor_dependence(
                    &split.unpredictable_uplink,
                    &prep.pairs,
                    dc.alpha,
                    dc.permutations,
                    dc.seed,
                ),
            )
            .map(|r| r.avg_delta_bar)
        })
        .transpose()?;
    let residual_mp = want(Metric::Mp)
        .then(|| {
            avg_mp(&split.unpredictable_uplink, &split.unpredictable_downlink).map(|r| r.avg_mp)
        })
        .transpose()?;
    let (tvd, tvd_curve) = if want(Metric::Tvd) {
        let fps: Vec<Vec<f64>> = (0..split.predictable_uplink.nodes())
            .map(|n| split.predictable_uplink.amplitude(n))
            .collect();
        let tvd = stage("tvd", avg_neighbor_tvd(&fps, &prep.neighbors, cfg.tvd_bins))?;
        let curve = match cfg.method {
            Method::Pca | Method::None => Some(fp::tvd_curve(
                &prep.uplink,
                &prep.basis,
                &prep.neighbors,
                cfg.tvd_d_hat_max,
                cfg.tvd_bins,
            )?),
            _ => None,
        };
        (Some(tvd), curve)
    } else {
        (None, None)
    };
    Ok(MethodMetrics {
        original_cc: base.cc,
        residual_cc,
        original_delta_bar: base.delta_bar,
        residual_delta_bar,
        original_mp: base.mp,
        residual_mp,
        tvd,
        tvd_curve,
    })
}

fn report(
    data: &Dataset,
    cfg: &PipelineConfig,
    split: Split,
    metrics: MethodMetrics,
) -> PipelineReport {
    PipelineReport {
        tool: ToolInfo::default(),
        config: cfg.clone(),
        dataset: DatasetInfo {
            snapshots: data.uplink.m(),
            nodes: data.uplink.n(),
        },
        method: cfg.method,
        metrics,
        kpca: split.kpca,
        ae: split.ae,
    }
}

/// Simulate or load, split and measure.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineReport> {
    let cfg = cfg.resolved();
    cfg.validate()?;
    let data = stage("load", Dataset::load(&cfg))?;
    run_on(&data, &cfg)
}

/// As [`run_pipeline`] on an already loaded dataset.
pub fn run_on(data: &Dataset, cfg: &PipelineConfig) -> Result<PipelineReport> {
    let cfg = cfg.resolved();
    cfg.validate()?;
    let prep = Prepared::new(data, &cfg)?;
    let base = baseline(&prep, &cfg)?;
    let s = split(data, &prep, &cfg)?;
    let metrics = evaluate(&prep, &s, &base, &cfg)?;
    Ok(report(data, &cfg, s, metrics))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub method: Method,
    pub original_cc: Option<f64>,
    pub residual_cc: Option<f64>,
    pub original_delta_bar: Option<f64>,
    pub residual_delta_bar: Option<f64>,
    pub mp: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub tool: ToolInfo,
    pub configs: Vec<PipelineConfig>,
    pub rows: Vec<ComparisonRow>,
}

/// Runs every configuration on one shared dataset; all configurations must
/// describe the same source, simulator settings and seed.
pub fn compare_methods(cfgs: &[PipelineConfig]) -> Result<ComparisonTable> {
    let first = cfgs
        .first()
        .ok_or_else(|| Error::Config("no configurations to compare".into()))?;
    let resolved: Vec<PipelineConfig> = cfgs.iter().map(PipelineConfig::resolved).collect();
    if resolved.iter().any(|c| !c.same_dataset(&resolved[0])) {
        return Err(Error::Config(
            "configurations describe different datasets".into(),
        ));
    }
    for c in &resolved {
        c.validate()?;
    }
    let data = stage("load", Dataset::load(first))?;
    // baselines depend only on the neighbour structure and metric settings
    type Key = (usize, usize, Vec<Metric>, DependenceConfig);
    let mut cache: Vec<(Key, Prepared, Baseline)> = Vec::new();
    let mut rows = Vec::with_capacity(resolved.len());
    for c in &resolved {
        let key: Key = (
            c.k_neighbors,
            c.dependence_k,
            c.metrics.clone(),
            c.dependence,
        );
        let idx = match cache.iter().position(|(k, _, _)| *k == key) {
            Some(i) => i,
            None => {
                let prep = Prepared::new(&data, c)?;
                let base = baseline(&prep, c)?;
                cache.push((key, prep, base));
                cache.len() - 1
            }
        };
        let (_, prep, base) = &cache[idx];
        let s = split(&data, prep, c)?;
        let m = evaluate(prep, &s, base, c)?;
        rows.push(ComparisonRow {
            method: c.method,
            original_cc: m.original_cc,
            residual_cc: m.residual_cc,
            original_delta_bar: m.original_delta_bar,
            residual_delta_bar: m.residual_delta_bar,
            mp: m.residual_mp,
        });
    }
    Ok(ComparisonTable {
        tool: ToolInfo::default(),
        configs: resolved,
        rows,
    })
}
