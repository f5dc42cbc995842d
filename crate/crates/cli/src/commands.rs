use std::fs;
use std::io::BufWriter;

use anyhow::{anyhow, bail, Context, Result};
use powersplit::ae::{self, Layout, LossKind, TrainConfig, TrainingMode};
use powersplit::csi::write_csi_file;
use powersplit::dep::{dependence_test, DhsicInput};
use powersplit::fit::{fit_all, Family};
use powersplit::fp::tvd_curve;
use powersplit::kpca::{self, KernelVariant, KpcaConfig};
use powersplit::pca::{decompose, fit_pca, DecompConfig};
use powersplit::pipeline::{
    compare_methods, read_csi_auto, run_pipeline, Method, Metric, PipelineConfig, Source,
};
use powersplit::sim::simulate;
use powersplit::skg::avg_mp;
use powersplit::sweep::{sweep, DependenceConfig, SweepConfig};
use powersplit::{CsiMatrix, Direction, NodeGeometry, RealView};
use serde::Serialize;

use crate::args::*;
use crate::output::Output;

fn direction(side: Side) -> Direction {
    match side {
        Side::Uplink => Direction::Uplink,
        Side::Downlink => Direction::Downlink,
    }
}

fn split_list(s: &str) -> impl Iterator<Item = &str> {
    s.split(',').map(str::trim).filter(|x| !x.is_empty())
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    let items: Vec<T> = split_list(s)
        .map(|x| x.parse::<T>().map_err(|e| anyhow!("{what}: {e}")))
        .collect::<Result<_>>()?;
    if items.is_empty() {
        bail!("{what}: empty list");
    }
    Ok(items)
}

struct Loaded {
    uplink: CsiMatrix,
    downlink: CsiMatrix,
    geometry: NodeGeometry,
}

fn check_nodes(geometry: &NodeGeometry, csi: &CsiMatrix) -> Result<()> {
    if geometry.len() != csi.n() {
        bail!(
            "grid has {} nodes but the CSI file has {}",
            geometry.len(),
            csi.n()
        );
    }
    Ok(())
}

fn load_both(data: &DataArgs, seed: u64) -> Result<Loaded> {
    let cfg = data.sim.to_config(seed);
    match (&data.uplink, &data.downlink) {
        (None, None) => {
            let out = simulate(&cfg)?;
            Ok(Loaded {
                uplink: out.uplink,
                downlink: out.downlink,
                geometry: out.geometry,
            })
        }
        (Some(u), Some(d)) => {
            let uplink = read_csi_auto(u, Direction::Uplink)?;
            let downlink = read_csi_auto(d, Direction::Downlink)?;
            if uplink.data().shape() != downlink.data().shape() {
                bail!("uplink and downlink shapes differ");
            }
            let geometry = cfg.geometry()?;
            check_nodes(&geometry, &uplink)?;
            Ok(Loaded {
                uplink,
                downlink,
                geometry,
            })
        }
        _ => bail!("give both --uplink and --downlink, or neither to simulate"),
    }
}

fn load_side(data: &DataArgs, s: &SideArgs, seed: u64) -> Result<(CsiMatrix, NodeGeometry)> {
    let side = s.side;
    let file = s.input.as_ref().or(match side {
        Side::Uplink => data.uplink.as_ref(),
        Side::Downlink => data.downlink.as_ref(),
    });
    match file {
        Some(path) => {
            let csi = read_csi_auto(path, direction(side))?;
            let geometry = data.sim.to_config(seed).geometry()?;
            check_nodes(&geometry, &csi)?;
            Ok((csi, geometry))
        }
        None => {
            let out = simulate(&data.sim.to_config(seed))?;
            let csi = match side {
                Side::Uplink => out.uplink,
                Side::Downlink => out.downlink,
            };
            Ok((csi, out.geometry))
        }
    }
}

fn write_view(
    out: &Output,
    name: &str,
    view: &RealView,
    dir: Direction,
    snr: Option<f64>,
) -> Result<()> {
    let csi = CsiMatrix::from_real_view(view, dir, snr)?;
    write_csi_file(&csi, out.path(name))?;
    Ok(())
}

fn kpca_config(d_hat: usize, k: &KpcaArgs) -> Result<KpcaConfig> {
    Ok(KpcaConfig {
        d_hat,
        gamma: k.gamma,
        sigma: k.sigma,
        variant: k.kernel_variant.parse::<KernelVariant>()?,
    })
}

fn train_config(
    d_hat: usize,
    a: &AeArgs,
    loss: LossKind,
    k_neighbors: usize,
    seed: u64,
) -> Result<TrainConfig> {
    Ok(TrainConfig {
        loss,
        mu: a.mu,
        learning_rate: a.learning_rate,
        batch_size: a.batch_size,
        epochs: a.epochs,
        seed,
        mode: a.mode.parse::<TrainingMode>()?,
        k_neighbors,
        d_hat,
    })
}

#[derive(Serialize)]
struct NodeRow {
    node: usize,
    x: f64,
    y: f64,
    z: f64,
    large_scale: f64,
    shadowing_db: f64,
}

#[derive(Serialize)]
struct SimulateResult {
    snapshots: usize,
    nodes: usize,
    doppler_hz: f64,
    temporal_correlation: f64,
    files: Vec<&'static str>,
}

pub fn simulate_cmd(a: &SimulateArgs, seed: u64, out: &Output) -> Result<()> {
    let cfg = a.sim.to_config(seed);
    let sim = simulate(&cfg)?;
    write_csi_file(&sim.uplink, out.path("uplink.csi"))?;
    write_csi_file(&sim.downlink, out.path("downlink.csi"))?;
    write_csi_file(&sim.truth_large_scale, out.path("truth.csi"))?;
    let mut geo = serde_json::to_string_pretty(&sim.geometry)?;
    geo.push('\n');
    fs::write(out.path("geometry.json"), geo)?;
    let rows: Vec<NodeRow> = sim
        .geometry
        .positions()
        .iter()
        .enumerate()
        .map(|(node, p)| NodeRow {
            node,
            x: p[0],
            y: p[1],
            z: p[2],
            large_scale: sim.large_scale[node],
            shadowing_db: sim.shadowing_db[node],
        })
        .collect();
    let result = SimulateResult {
        snapshots: cfg.m,
        nodes: sim.geometry.len(),
        doppler_hz: cfg.doppler_hz(),
        temporal_correlation: cfg.temporal_correlation(),
        files: vec!["uplink.csi", "downlink.csi", "truth.csi", "geometry.json"],
    };
    out.json("simulate", "simulate", a, &result)?;
    out.csv("simulate", &rows)
}

#[derive(Serialize)]
struct EigenRow {
    index: usize,
    eigenvalue: f64,
}

fn eigen_rows(values: &[f64]) -> Vec<EigenRow> {
    values
        .iter()
        .enumerate()
        .map(|(i, &eigenvalue)| EigenRow {
            index: i + 1,
            eigenvalue,
        })
        .collect()
}

#[derive(Serialize)]
struct DecomposeResult {
    eigenvalues: Vec<f64>,
    explained_predictable: f64,
    explained_unpredictable: f64,
}

pub fn decompose_cmd(a: &DecomposeArgs, seed: u64, out: &Output) -> Result<()> {
    let data = load_both(&a.data, seed)?;
    let ul = data.uplink.to_real_view();
    let dl = data.downlink.to_real_view();
    let basis = fit_pca(&ul)?;
    let cfg = DecompConfig {
        d_hat: a.pca.d_hat,
        d1: a.pca.d1,
        d2: a.pca.d2,
    };
    let du = decompose(&ul, &basis, cfg)?;
    let dd = decompose(&dl, &basis, cfg)?;
    let snr = data.uplink.snr_db();
    write_view(
        out,
        "uplink_predictable.csi",
        &du.predictable_with_mean(),
        Direction::Uplink,
        snr,
    )?;
    write_view(
        out,
        "uplink_unpredictable.csi",
        &du.unpredictable,
        Direction::Uplink,
        snr,
    )?;
    write_view(
        out,
        "downlink_predictable.csi",
        &dd.predictable_with_mean(),
        Direction::Downlink,
        snr,
    )?;
    write_view(
        out,
        "downlink_unpredictable.csi",
        &dd.unpredictable,
        Direction::Downlink,
        snr,
    )?;
    let total: f64 = basis.eigenvalues.iter().sum();
    let band = |lo: usize, hi: usize| -> f64 {
        if total > 0.0 && hi >= lo && lo >= 1 {
            basis.eigenvalues[lo - 1..hi].iter().sum::<f64>() / total
        } else {
            0.0
        }
    };
    let result = DecomposeResult {
        explained_predictable: band(1, cfg.d_hat),
        explained_unpredictable: band(cfg.d1, cfg.d2),
        eigenvalues: basis.eigenvalues.clone(),
    };
    out.json("decompose", "decompose", a, &result)?;
    out.csv("decompose", &eigen_rows(&basis.eigenvalues))
}

pub fn kpca_cmd(a: &KpcaCmdArgs, seed: u64, out: &Output) -> Result<()> {
    let data = load_both(&a.data, seed)?;
    let cfg = kpca_config(a.d_hat, &a.kpca)?;
    let model = kpca::fit_kpca(&data.uplink, &cfg)?;
    for csi in [&data.uplink, &data.downlink] {
        let pred = kpca::reconstruct_predictable(&model, csi)?;
        let res = kpca::residual(csi, &pred)?;
        let tag = match csi.direction() {
            Direction::Uplink => "uplink",
            Direction::Downlink => "downlink",
        };
        write_csi_file(&pred, out.path(&format!("{tag}_predictable.csi")))?;
        write_csi_file(&res, out.path(&format!("{tag}_residual.csi")))?;
    }
    let d = model.diagnostics();
    out.json("kpca", "kpca", a, &d)?;
    out.csv("kpca", &eigen_rows(&d.eigenvalues))
}

#[derive(Serialize)]
struct AeTrainResult {
    weights: String,
    log: String,
    parameters: usize,
    input_dim: usize,
    scale: f64,
    final_loss: f64,
}

pub fn ae_train_cmd(a: &AeTrainArgs, seed: u64, out: &Output) -> Result<()> {
    let loss = a.loss.parse::<LossKind>()?;
    let cfg = train_config(a.d_hat, &a.ae, loss, a.k_neighbors, seed)?;
    let (csi, geometry) = load_side(&a.data, &a.side, seed)?;
    let neighbors = geometry.neighbor_table(a.k_neighbors)?;
    let layout = ae::layout_for(&cfg, &neighbors);
    let (model, log) = ae::train(&csi.to_real_view(), &layout, &cfg)?;
    let weights_path = a
        .weights
        .clone()
        .unwrap_or_else(|| out.path("ae_weights.aew"));
    let file = fs::File::create(&weights_path)
        .with_context(|| format!("writing {}", weights_path.display()))?;
    ae::write_weights(BufWriter::new(file), &model)?;
    let log_path = out.path("ae_train_log.jsonl");
    ae::write_log(BufWriter::new(fs::File::create(&log_path)?), &log)?;
    let result = AeTrainResult {
        weights: file_name(&weights_path),
        log: "ae_train_log.jsonl".into(),
        parameters: model.weights.parameter_count(),
        input_dim: model.spec.input_dim(),
        scale: model.scale,
        final_loss: log.last().map_or(f64::NAN, |e| e.loss),
    };
    out.json("ae_train", "ae-train", a, &result)?;
    out.csv("ae_train", &log)
}

fn file_name(p: &std::path::Path) -> String {
    p.file_name().map_or_else(
        || p.display().to_string(),
        |f| f.to_string_lossy().into_owned(),
    )
}

#[derive(Serialize)]
struct ResidualRow {
    node: usize,
    input_energy: f64,
    residual_energy: f64,
}

#[derive(Serialize)]
struct AeDecomposeResult {
    layout: &'static str,
    mean_residual_energy: f64,
    mean_input_energy: f64,
}

pub fn ae_decompose_cmd(a: &AeDecomposeArgs, seed: u64, out: &Output) -> Result<()> {
    let bytes = fs::read(&a.weights).with_context(|| format!("reading {}", a.weights.display()))?;
    let model = ae::decode_weights(&bytes)?;
    let (csi, geometry) = load_side(&a.data, &a.side, seed)?;
    let view = csi.to_real_view();
    let (layout, name) = if model.spec.input_dim() == view.rows() {
        (Layout::Single, "single")
    } else if model.spec.input_dim() == 2 * view.rows() {
        (
            Layout::Paired {
                neighbors: geometry.neighbor_table(a.k_neighbors)?,
            },
            "paired",
        )
    } else {
        bail!(
            "weights expect {} inputs but the data has {} rows per node",
            model.spec.input_dim(),
            view.rows()
        );
    };
    let dec = ae::decompose_ae(&model, &view, &layout)?;
    let dir = direction(a.side.side);
    write_view(out, "predictable.csi", &dec.predictable, dir, csi.snr_db())?;
    write_view(out, "residual.csi", &dec.unpredictable, dir, csi.snr_db())?;
    let rows: Vec<ResidualRow> = (0..view.nodes())
        .map(|node| ResidualRow {
            node,
            input_energy: view.data.column(node).norm_squared(),
            residual_energy: dec.unpredictable.data.column(node).norm_squared(),
        })
        .collect();
    let n = rows.len() as f64;
    let result = AeDecomposeResult {
        layout: name,
        mean_residual_energy: rows.iter().map(|r| r.residual_energy).sum::<f64>() / n,
        mean_input_energy: rows.iter().map(|r| r.input_energy).sum::<f64>() / n,
    };
    out.json("ae_decompose", "ae-decompose", a, &result)?;
    out.csv("ae_decompose", &rows)
}

#[derive(Serialize)]
struct DhsicRow {
    nodes: String,
    statistic: f64,
    critical_value: f64,
    delta_bar: f64,
    ratio: f64,
    reject: bool,
}

pub fn dhsic_cmd(a: &DhsicArgs, seed: u64, out: &Output) -> Result<()> {
    let nodes: Vec<usize> = parse_list(&a.nodes, "nodes")?;
    if nodes.len() < 2 {
        bail!("dhsic needs at least two nodes");
    }
    let (csi, _) = load_side(&a.data, &a.side, seed)?;
    let view = csi.to_real_view();
    if let Some(&bad) = nodes.iter().find(|&&n| n >= view.nodes()) {
        bail!("node {bad} out of range (0..{})", view.nodes());
    }
    let input = DhsicInput::new(nodes.iter().map(|&n| view.column(n).to_vec()).collect())?;
    let report = dependence_test(&input, a.alpha, a.permutations, seed)?;
    let row = DhsicRow {
        nodes: a.nodes.clone(),
        statistic: report.statistic,
        critical_value: report.critical_value,
        delta_bar: report.delta_bar,
        ratio: report.ratio,
        reject: report.reject,
    };
    out.json("dhsic", "dhsic", a, &report)?;
    out.csv("dhsic", &[row])
}

pub fn tvd_curve_cmd(a: &TvdCurveArgs, seed: u64, out: &Output) -> Result<()> {
    let (csi, geometry) = load_side(&a.data, &a.side, seed)?;
    let view = csi.to_real_view();
    let basis = fit_pca(&view)?;
    let neighbors = geometry.neighbor_table(a.k_neighbors)?;
    let curve = tvd_curve(&view, &basis, &neighbors, a.d_hat_max, a.bins)?;
    out.json("tvd_curve", "tvd-curve", a, &curve)?;
    out.csv("tvd_curve", &curve)
}

#[derive(Serialize)]
struct MpRow {
    node: usize,
    mp: f64,
}

pub fn skg_mp_cmd(a: &SkgMpArgs, seed: u64, out: &Output) -> Result<()> {
    let data = load_both(&a.data, seed)?;
    let report = avg_mp(&data.uplink.to_real_view(), &data.downlink.to_real_view())?;
    let rows: Vec<MpRow> = report
        .per_node_mp
        .iter()
        .enumerate()
        .map(|(node, &mp)| MpRow { node, mp })
        .collect();
    out.json("skg_mp", "skg-mp", a, &report)?;
    out.csv("skg_mp", &rows)
}

#[derive(Serialize)]
struct FitRow {
    family: Family,
    param_1: f64,
    param_2: f64,
    log_likelihood: f64,
    aic: f64,
    ks_stat: f64,
    p_value: f64,
}

pub fn fit_dist_cmd(a: &FitDistArgs, seed: u64, out: &Output) -> Result<()> {
    let families: Vec<Family> = if a.families.trim().eq_ignore_ascii_case("all") {
        Family::ALL.to_vec()
    } else {
        parse_list(&a.families, "families")?
    };
    let (csi, _) = load_side(&a.data, &a.side, seed)?;
    let nodes: Vec<usize> = match a.node {
        Some(n) if n >= csi.n() => bail!("node {n} out of range (0..{})", csi.n()),
        Some(n) => vec![n],
        None => (0..csi.n()).collect(),
    };
    let xs: Vec<f64> = nodes
        .iter()
        .flat_map(|&n| match a.component {
            Component::Amplitude => csi.amplitude(n),
            Component::Phase => csi.phase(n),
        })
        .collect();
    let fits = fit_all(&xs, &families);
    if fits.is_empty() {
        bail!("no family could be fitted to {} samples", xs.len());
    }
    let rows: Vec<FitRow> = fits
        .iter()
        .map(|f| FitRow {
            family: f.family,
            param_1: f.params[0],
            param_2: f.params[1],
            log_likelihood: f.log_likelihood,
            aic: f.aic,
            ks_stat: f.ks_stat,
            p_value: f.p_value,
        })
        .collect();
    // sorted by ascending AIC; families whose fit failed are omitted
    out.json("fit_dist", "fit-dist", a, &fits)?;
    out.csv("fit_dist", &rows)
}

pub fn sweep_cmd(a: &SweepArgs, seed: u64, out: &Output) -> Result<()> {
    let data = load_both(&a.data, seed)?;
    let ul = data.uplink.to_real_view();
    let dl = data.downlink.to_real_view();
    let basis = fit_pca(&ul)?;
    let neighbors = data.geometry.neighbor_table(a.k_neighbors)?;
    let pairs = data.geometry.neighbor_pairs(a.dependence_k)?;
    let cfg = SweepConfig {
        d1_min: a.d1_min,
        d1_max: a.d1_max,
        d2_min: a.d2_min,
        d2_max: a.d2_max,
        step: a.step,
        dependence: (a.permutations > 0).then_some(DependenceConfig {
            alpha: a.alpha,
            permutations: a.permutations,
            seed,
        }),
    };
    let records = sweep(&ul, &dl, &basis, &neighbors, &pairs, &cfg)?;
    out.json("sweep", "sweep", a, &records)?;
    out.csv("sweep", &records)
}

fn pipeline_config(
    data: &DataArgs,
    p: &PipelineArgs,
    method: Method,
    seed: u64,
) -> Result<PipelineConfig> {
    let source = match (&data.uplink, &data.downlink) {
        (None, None) => Source::Simulate,
        (Some(u), Some(d)) => Source::Files {
            uplink: u.clone(),
            downlink: d.clone(),
        },
        _ => bail!("give both --uplink and --downlink, or neither to simulate"),
    };
    let loss = if method == Method::Ae2 {
        LossKind::E2
    } else {
        LossKind::E1
    };
    let cfg = PipelineConfig {
        source,
        sim: data.sim.to_config(seed),
        method,
        pca: DecompConfig {
            d_hat: p.pca.d_hat,
            d1: p.pca.d1,
            d2: p.pca.d2,
        },
        kpca: kpca_config(p.kpca_d_hat, &p.kpca)?,
        ae: train_config(p.ae_d_hat, &p.ae, loss, p.metrics.k_neighbors, seed)?,
        metrics: parse_list::<Metric>(&p.metrics.metrics, "metrics")?,
        k_neighbors: p.metrics.k_neighbors,
        dependence_k: p.metrics.dependence_k,
        dependence: DependenceConfig {
            alpha: p.metrics.alpha,
            permutations: p.metrics.permutations,
            seed,
        },
        tvd_bins: p.metrics.bins,
        tvd_d_hat_max: p.metrics.tvd_d_hat_max,
        seed,
    };
    Ok(cfg.resolved())
}

pub fn compare_cmd(a: &CompareArgs, seed: u64, out: &Output) -> Result<()> {
    let methods: Vec<Method> = parse_list(&a.methods, "methods")?;
    let cfgs: Vec<PipelineConfig> = methods
        .iter()
        .map(|&m| pipeline_config(&a.data, &a.pipeline, m, seed))
        .collect::<Result<_>>()?;
    let table = compare_methods(&cfgs)?;
    out.json("compare", "compare", a, &table)?;
    out.csv("compare", &table.rows)
}

#[derive(Serialize)]
struct RunRow {
    method: Method,
    original_cc: Option<f64>,
    residual_cc: Option<f64>,
    original_delta_bar: Option<f64>,
    residual_delta_bar: Option<f64>,
    original_mp: Option<f64>,
    residual_mp: Option<f64>,
    tvd: Option<f64>,
}

pub fn run_cmd(a: &RunArgs, seed: u64, out: &Output) -> Result<()> {
    let method: Method = a.method.parse()?;
    let cfg = pipeline_config(&a.data, &a.pipeline, method, seed)?;
    cfg.validate()?;
    let report = run_pipeline(&cfg)?;
    let m = &report.metrics;
    let row = RunRow {
        method,
        original_cc: m.original_cc,
        residual_cc: m.residual_cc,
        original_delta_bar: m.original_delta_bar,
        residual_delta_bar: m.residual_delta_bar,
        original_mp: m.original_mp,
        residual_mp: m.residual_mp,
        tvd: m.tvd,
    };
    out.json("run", "run", a, &report)?;
    out.csv("run", &[row])?;
    if let Some(curve) = &m.tvd_curve {
        out.csv("run_tvd_curve", curve)?;
    }
    Ok(())
}
