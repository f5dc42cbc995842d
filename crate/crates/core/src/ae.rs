//! Dense autoencoder with hand-written reverse mode, Adam training, and the
//! reconstruction (E1) and neighbour dot-product (E2) losses.
//!
//! Samples are columns. For E2 each sample is the pair `[h_a; h_b]` of a node
//! and one of its neighbours, so the residual of a sample splits into two
//! halves whose inner product is the E2 term.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::csi::RealView;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Linear,
    Tanh,
    Softplus,
    Relu,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Self::Linear => z,
            Self::Tanh => z.tanh(),
            // ln(1 + e^z) without overflow
            Self::Softplus => z.max(0.0) + (-z.abs()).exp().ln_1p(),
            Self::Relu => z.max(0.0),
        }
    }

    /// Derivative at pre-activation `z` given the output `a`.
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Self::Linear => 1.0,
            Self::Tanh => 1.0 - a * a,
            Self::Softplus => 1.0 / (1.0 + (-z).exp()),
            Self::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    fn to_byte(self) -> u8 {
        match self {
            Self::Linear => 0,
            Self::Tanh => 1,
            Self::Softplus => 2,
            Self::Relu => 3,
        }
    }

    fn from_byte(b: u8) -> Option<Self> {
        Some(match b {
            0 => Self::Linear,
            1 => Self::Tanh,
            2 => Self::Softplus,
            3 => Self::Relu,
            _ => return None,
        })
    }
}

/// Layer widths from input to output and one activation per non-input layer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub layer_dims: Vec<usize>,
    pub activations: Vec<Activation>,
}

impl MlpSpec {
    /// The seven-hidden-layer autoencoder with a linear bottleneck of width `d_hat`.
    pub fn symmetric(input_dim: usize, d_hat: usize) -> Self {
        use Activation::*;
        Self {
            layer_dims: vec![input_dim, 100, 50, 20, d_hat, 20, 50, 100, input_dim],
            activations: vec![Tanh, Softplus, Tanh, Linear, Relu, Softplus, Tanh, Linear],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let l = self.layer_dims.len();
        if l < 2 || self.activations.len() != l - 1 {
            return Err(Error::Config(format!(
                "{} layer widths need {} activations, got {}",
                l,
                l.saturating_sub(1),
                self.activations.len()
            )));
        }
        if self.layer_dims.contains(&0) {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        let mirrored = self.layer_dims.iter().eq(self.layer_dims.iter().rev());
        if !mirrored {
            return Err(Error::Config(format!(
                "encoder and decoder widths must mirror, got {:?}",
                self.layer_dims
            )));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn d_hat(&self) -> usize {
        self.layer_dims[self.layer_dims.len() / 2]
    }

    fn bottleneck_layer(&self) -> usize {
        self.layer_dims.len() / 2
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `out x in`.
    pub w: DMatrix<f64>,
    pub b: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    pub layers: Vec<Layer>,
}

impl Weights {
    /// Uniform on `[-sqrt(3 / fan_in), sqrt(3 / fan_in)]`, zero biases.
    pub fn init(spec: &MlpSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = spec
            .layer_dims
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (3.0 / fan_in as f64).sqrt();
                Layer {
                    w: DMatrix::from_fn(fan_out, fan_in, |_, _| rng.random_range(-limit..limit)),
                    b: DVector::zeros(fan_out),
                }
            })
            .collect();
        Ok(Self { layers })
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    w: DMatrix::zeros(l.w.nrows(), l.w.ncols()),
                    b: DVector::zeros(l.b.len()),
                })
                .collect(),
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    /// Flat view in layer order, weights column-major then bias.
    pub fn get(&self, mut idx: usize) -> f64 {
        for l in &self.layers {
            if idx < l.w.len() {
                return l.w.as_slice()[idx];
            }
            idx -= l.w.len();
            if idx < l.b.len() {
                return l.b[idx];
            }
            idx -= l.b.len();
        }
        panic!("parameter index out of range")
    }

    pub fn set(&mut self, mut idx: usize, v: f64) {
        for l in &mut self.layers {
            if idx < l.w.len() {
                l.w.as_mut_slice()[idx] = v;
                return;
            }
            idx -= l.w.len();
            if idx < l.b.len() {
                l.b[idx] = v;
                return;
            }
            idx -= l.b.len();
        }
        panic!("parameter index out of range")
    }

    fn check(&self, spec: &MlpSpec) -> Result<()> {
        let ok = self.layers.len() + 1 == spec.layer_dims.len()
            && self
                .layers
                .iter()
                .zip(spec.layer_dims.windows(2))
                .all(|(l, w)| l.w.ncols() == w[0] && l.w.nrows() == w[1] && l.b.len() == w[1]);
        if ok {
            Ok(())
        } else {
            Err(Error::Dimension(
                "weights do not match the layer spec".into(),
            ))
        }
    }
}

/// Pre-activations and outputs of every layer for one batch.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    /// `outputs[0]` is the input batch.
    pub outputs: Vec<DMatrix<f64>>,
    pub pre: Vec<DMatrix<f64>>,
    bottleneck: usize,
}

impl ForwardPass {
    pub fn output(&self) -> &DMatrix<f64> {
        self.outputs.last().expect("at least one layer")
    }

    pub fn bottleneck(&self) -> &DMatrix<f64> {
        &self.outputs[self.bottleneck]
    }
}

/// Forward pass over a batch whose columns are samples.
pub fn forward(spec: &MlpSpec, weights: &Weights, x: &DMatrix<f64>) -> Result<ForwardPass> {
    spec.validate()?;
    weights.check(spec)?;
    if x.nrows() != spec.input_dim() {
        return Err(Error::Dimension(format!(
            "input has {} rows, network expects {}",
            x.nrows(),
            spec.input_dim()
        )));
    }
    let mut outputs = Vec::with_capacity(weights.layers.len() + 1);
    let mut pre = Vec::with_capacity(weights.layers.len());
    outputs.push(x.clone());
    for (layer, &act) in weights.layers.iter().zip(&spec.activations) {
        let mut z = &layer.w * outputs.last().unwrap();
        for mut col in z.column_iter_mut() {
            col += &layer.b;
        }
        let a = z.map(|v| act.apply(v));
        pre.push(z);
        outputs.push(a);
    }
    Ok(ForwardPass {
        outputs,
        pre,
        bottleneck: spec.bottleneck_layer(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Loss {
    /// Mean squared reconstruction error per sample.
    E1,
    /// Neighbour dot-product of the two residual halves plus `mu * E1`.
    E2 { mu: f64 },
}

impl Loss {
    /// Mean loss over the batch and its gradient with respect to the network output.
    fn value_and_output_grad(self, x: &DMatrix<f64>, y: &DMatrix<f64>) -> (f64, DMatrix<f64>) {
        let b = x.ncols() as f64;
        let r = x - y;
        match self {
            Self::E1 => (r.norm_squared() / b, r * (-2.0 / b)),
            Self::E2 { mu } => {
                let half = x.nrows() / 2;
                let ra = r.rows(0, half);
                let rb = r.rows(half, half);
                let dot: f64 = ra.iter().zip(rb.iter()).map(|(p, q)| p * q).sum();
                let mut g = &r * (-2.0 * mu / b);
                {
                    let mut top = g.rows_mut(0, half);
                    top -= rb * (1.0 / b);
                }
                {
                    let mut bottom = g.rows_mut(half, half);
                    bottom -= ra * (1.0 / b);
                }
                ((dot + mu * r.norm_squared()) / b, g)
            }
        }
    }
}

/// `E1 = (1/N) sum_n |h_n - h_hat_n|^2` over columns.
pub fn loss_e1(inputs: &DMatrix<f64>, outputs: &DMatrix<f64>) -> Result<f64> {
    if inputs.shape() != outputs.shape() {
        return Err(Error::Dimension("E1 operands differ in shape".into()));
    }
    Ok((inputs - outputs).norm_squared() / inputs.ncols() as f64)
}

/// `E2 = (1/N) sum_n sum_{u in U(n)} r_n . r_u` over residual columns.
pub fn loss_e2(residuals: &DMatrix<f64>, neighbors: &[Vec<usize>]) -> Result<f64> {
    let n = residuals.ncols();
    if neighbors.len() != n || neighbors.iter().any(|u| u.is_empty()) {
        return Err(Error::MissingNeighbours);
    }
    let mut total = 0.0;
    for (a, us) in neighbors.iter().enumerate() {
        for &u in us {
            if u >= n {
                return Err(Error::MissingNeighbours);
            }
            total += residuals.column(a).dot(&residuals.column(u));
        }
    }
    Ok(total / n as f64)
}

/// Exact reverse-mode gradient of the mean batch loss.
pub fn loss_and_gradient(
    spec: &MlpSpec,
    weights: &Weights,
    x: &DMatrix<f64>,
    loss: Loss,
) -> Result<(f64, Weights)> {
    let pass = forward(spec, weights, x)?;
    let (value, mut delta) = loss.value_and_output_grad(x, pass.output());
    let mut grads = weights.zeros_like();
    for l in (0..weights.layers.len()).rev() {
        let act = spec.activations[l];
        delta.zip_apply(
            &pass.pre[l].zip_map(&pass.outputs[l + 1], |z, a| act.derivative(z, a)),
            |d, f| *d *= f,
        );
        grads.layers[l].w = &delta * pass.outputs[l].transpose();
        grads.layers[l].b = delta.column_sum();
        if l > 0 {
            delta = weights.layers[l].w.transpose() * &delta;
        }
    }
    Ok((value, grads))
}

pub fn loss_value(spec: &MlpSpec, weights: &Weights, x: &DMatrix<f64>, loss: Loss) -> Result<f64> {
    let pass = forward(spec, weights, x)?;
    Ok(loss.value_and_output_grad(x, pass.output()).0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainingMode {
    /// Each side trains on its own observations.
    #[default]
    Localized,
    /// One model trained on the base-station side and shared.
    Centralized,
}

impl std::str::FromStr for TrainingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "localized" => Ok(Self::Localized),
            "centralized" => Ok(Self::Centralized),
            other => Err(Error::Config(format!("unknown training mode {other}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    #[default]
    E1,
    E2,
}

impl std::str::FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "e1" | "ae1" => Ok(Self::E1),
            "e2" | "ae2" => Ok(Self::E2),
            other => Err(Error::Config(format!("unknown loss {other}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub loss: LossKind,
    /// Weight of the reconstruction term in the E2 objective.
    pub mu: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub mode: TrainingMode,
    pub k_neighbors: usize,
    pub d_hat: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            loss: LossKind::E1,
            mu: 1.0,
            learning_rate: 1e-3,
            batch_size: 32,
            epochs: 200,
            seed: 0,
            mode: TrainingMode::Localized,
            k_neighbors: 8,
            d_hat: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config(
                "epochs and batch size must be at least 1".into(),
            ));
        }
        if !(self.mu >= 0.0) {
            return Err(Error::Config("mu must be non-negative".into()));
        }
        if self.d_hat == 0 {
            return Err(Error::Config("bottleneck width must be at least 1".into()));
        }
        if self.loss == LossKind::E2 && self.k_neighbors == 0 {
            return Err(Error::Config("E2 needs at least one neighbour".into()));
        }
        Ok(())
    }

    pub fn objective(&self) -> Loss {
        match self.loss {
            LossKind::E1 => Loss::E1,
            LossKind::E2 => Loss::E2 { mu: self.mu },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: f64,
}

struct Adam {
    m: Weights,
    v: Weights,
    t: i32,
    lr: f64,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(w: &Weights, lr: f64) -> Self {
        Self {
            m: w.zeros_like(),
            v: w.zeros_like(),
            t: 0,
            lr,
        }
    }

    fn step(&mut self, w: &mut Weights, g: &Weights) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        let lr = self.lr;
        let update = |p: &mut [f64], m: &mut [f64], v: &mut [f64], g: &[f64]| {
            for i in 0..p.len() {
                m[i] = Self::B1 * m[i] + (1.0 - Self::B1) * g[i];
                v[i] = Self::B2 * v[i] + (1.0 - Self::B2) * g[i] * g[i];
                p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + Self::EPS);
            }
        };
        for (((p, m), v), g) in w
            .layers
            .iter_mut()
            .zip(&mut self.m.layers)
            .zip(&mut self.v.layers)
            .zip(&g.layers)
        {
            update(
                p.w.as_mut_slice(),
                m.w.as_mut_slice(),
                v.w.as_mut_slice(),
                g.w.as_slice(),
            );
            update(
                p.b.as_mut_slice(),
                m.b.as_mut_slice(),
                v.b.as_mut_slice(),
                g.b.as_slice(),
            );
        }
    }
}

/// Mini-batch Adam on the columns of `data`. Returns the final weights and the
/// full-dataset loss after every epoch.
pub fn train_weights(
    spec: &MlpSpec,
    data: &DMatrix<f64>,
    loss: Loss,
    cfg: &TrainConfig,
) -> Result<(Weights, Vec<EpochLog>)> {
    cfg.validate()?;
    spec.validate()?;
    if data.nrows() != spec.input_dim() {
        return Err(Error::Dimension(format!(
            "dataset rows {} do not match input width {}",
            data.nrows(),
            spec.input_dim()
        )));
    }
    if data.ncols() == 0 {
        return Err(Error::InsufficientSamples("empty training set".into()));
    }
    let mut weights = Weights::init(spec, cfg.seed)?;
    let mut opt = Adam::new(&weights, cfg.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_ba7c);
    let mut order: Vec<usize> = (0..data.ncols()).collect();
    let mut log = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let batch = data.select_columns(chunk);
            let (value, grads) = loss_and_gradient(spec, &weights, &batch, loss)?;
            if !value.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, loss: value });
            }
            opt.step(&mut weights, &grads);
        }
        let value = loss_value(spec, &weights, data, loss)?;
        if !value.is_finite() {
            return Err(Error::NonFiniteLoss { epoch, loss: value });
        }
        log::debug!("epoch {epoch}: loss {value:.6e}");
        log.push(EpochLog { epoch, loss: value });
    }
    Ok((weights, log))
}

/// How node vectors are arranged into network inputs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Layout {
    /// One column per node.
    Single,
    /// `[h_n; h_u]` for each neighbour `u` of `n`.
    Paired { neighbors: Vec<Vec<usize>> },
}

impl Layout {
    pub fn build(&self, view: &RealView) -> Result<DMatrix<f64>> {
        match self {
            Self::Single => Ok(view.data.clone()),
            Self::Paired { neighbors } => {
                let (p, n) = (view.rows(), view.nodes());
                if neighbors.len() != n
                    || neighbors
                        .iter()
                        .any(|u| u.is_empty() || u.iter().any(|&v| v >= n))
                {
                    return Err(Error::MissingNeighbours);
                }
                let total: usize = neighbors.iter().map(Vec::len).sum();
                let mut out = DMatrix::zeros(2 * p, total);
                let mut c = 0;
                for (a, us) in neighbors.iter().enumerate() {
                    for &u in us {
                        out.view_mut((0, c), (p, 1)).copy_from(&view.data.column(a));
                        out.view_mut((p, c), (p, 1)).copy_from(&view.data.column(u));
                        c += 1;
                    }
                }
                Ok(out)
            }
        }
    }

    /// Per-node reconstruction from network outputs; paired outputs are averaged
    /// over the samples in which the node is the leading half.
    fn collapse(&self, out: &DMatrix<f64>, p: usize, n: usize) -> DMatrix<f64> {
        match self {
            Self::Single => out.clone(),
            Self::Paired { neighbors } => {
                let mut rec = DMatrix::zeros(p, n);
                let mut c = 0;
                for (a, us) in neighbors.iter().enumerate() {
                    let mut acc = DVector::zeros(p);
                    for _ in us {
                        acc += out.view((0, c), (p, 1));
                        c += 1;
                    }
                    rec.set_column(a, &(acc / us.len() as f64));
                }
                rec
            }
        }
    }
}

/// A trained network with the input scale it was fitted under.
#[derive(Debug, Clone, PartialEq)]
pub struct AeModel {
    pub spec: MlpSpec,
    pub weights: Weights,
    /// Inputs are divided by this before entering the network.
    pub scale: f64,
    pub loss: Loss,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AeDecomposition {
    pub predictable: RealView,
    pub unpredictable: RealView,
}

fn rms(m: &DMatrix<f64>) -> f64 {
    (m.norm_squared() / m.len() as f64).sqrt()
}

/// Trains one model on a real view.
pub fn train(
    view: &RealView,
    layout: &Layout,
    cfg: &TrainConfig,
) -> Result<(AeModel, Vec<EpochLog>)> {
    cfg.validate()?;
    let data = layout.build(view)?;
    let scale = match rms(&data) {
        s if s > 0.0 => s,
        _ => 1.0,
    };
    let spec = MlpSpec::symmetric(data.nrows(), cfg.d_hat);
    let loss = cfg.objective();
    let (weights, log) = train_weights(&spec, &(data / scale), loss, cfg)?;
    Ok((
        AeModel {
            spec,
            weights,
            scale,
            loss,
        },
        log,
    ))
}

/// Reconstruction and residual for every node; the residual is the input minus
/// the reconstruction.
pub fn decompose_ae(model: &AeModel, view: &RealView, layout: &Layout) -> Result<AeDecomposition> {
    let data = layout.build(view)? / model.scale;
    let pass = forward(&model.spec, &model.weights, &data)?;
    let out = pass.output() * model.scale;
    let predictable = layout.collapse(&out, view.rows(), view.nodes());
    let unpredictable = &view.data - &predictable;
    Ok(AeDecomposition {
        predictable: RealView::new(predictable),
        unpredictable: RealView::new(unpredictable),
    })
}

/// Uplink and downlink models for one training mode.
#[derive(Debug, Clone)]
pub struct SplitModels {
    pub uplink: AeModel,
    pub downlink: AeModel,
    pub uplink_log: Vec<EpochLog>,
    pub downlink_log: Vec<EpochLog>,
}

pub fn layout_for(cfg: &TrainConfig, neighbors: &[Vec<usize>]) -> Layout {
    match cfg.loss {
        LossKind::E1 => Layout::Single,
        LossKind::E2 => Layout::Paired {
            neighbors: neighbors
                .iter()
                .map(|u| u.iter().copied().take(cfg.k_neighbors).collect())
                .collect(),
        },
    }
}

/// Centralized: one model trained on the uplink and used on both sides.
/// Localized: each side trains on its own view with the same seed.
pub fn train_split(
    uplink: &RealView,
    downlink: &RealView,
    layout: &Layout,
    cfg: &TrainConfig,
) -> Result<SplitModels> {
    match cfg.mode {
        TrainingMode::Centralized => {
            let (model, log) = train(uplink, layout, cfg)?;
            Ok(SplitModels {
                downlink: model.clone(),
                uplink: model,
                downlink_log: log.clone(),
                uplink_log: log,
            })
        }
        TrainingMode::Localized => {
            let (ul, dl) = rayon::join(
                || train(uplink, layout, cfg),
                || train(downlink, layout, cfg),
            );
            let (uplink, uplink_log) = ul?;
            let (downlink, downlink_log) = dl?;
            Ok(SplitModels {
                uplink,
                downlink,
                uplink_log,
                downlink_log,
            })
        }
    }
}

pub fn write_log<W: Write>(mut w: W, log: &[EpochLog]) -> Result<()> {
    for entry in log {
        let line = serde_json::to_string(entry).map_err(|e| Error::Config(e.to_string()))?;
        writeln!(w, "{line}")?;
    }
    Ok(())
}

pub const WEIGHTS_MAGIC: &[u8; 4] = b"AEW1";

/// Layout: magic, u32 layer count, u32 widths, u8 activations, f64 scale,
/// u8 loss tag, f64 mu, then per layer `w` column-major followed by `b`.
/// Integers and floats are little-endian.
pub fn write_weights<W: Write>(mut w: W, model: &AeModel) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(WEIGHTS_MAGIC);
    buf.extend_from_slice(&(model.spec.layer_dims.len() as u32).to_le_bytes());
    for &d in &model.spec.layer_dims {
        buf.extend_from_slice(&(d as u32).to_le_bytes());
    }
    buf.extend(model.spec.activations.iter().map(|a| a.to_byte()));
    buf.extend_from_slice(&model.scale.to_le_bytes());
    let (tag, mu) = match model.loss {
        Loss::E1 => (0u8, 0.0),
        Loss::E2 { mu } => (1u8, mu),
    };
    buf.push(tag);
    buf.extend_from_slice(&mu.to_le_bytes());
    for l in &model.weights.layers {
        for v in l.w.iter().chain(l.b.iter()) {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_weights<R: Read>(mut r: R) -> Result<AeModel> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    decode_weights(&bytes)
}

fn take<'a>(bytes: &'a [u8], pos: &mut usize, len: usize) -> Result<&'a [u8]> {
    let end = pos.checked_add(len).ok_or(Error::TruncatedHeader)?;
    let s = bytes.get(*pos..end).ok_or(Error::TruncatedHeader)?;
    *pos = end;
    Ok(s)
}

pub fn decode_weights(bytes: &[u8]) -> Result<AeModel> {
    let mut pos = 0;
    let magic = take(bytes, &mut pos, 4)?;
    if magic != WEIGHTS_MAGIC {
        return Err(Error::BadMagic {
            expected: *WEIGHTS_MAGIC,
            found: magic.try_into().expect("four bytes"),
        });
    }
    let u32_at = |pos: &mut usize| -> Result<usize> {
        Ok(u32::from_le_bytes(take(bytes, pos, 4)?.try_into().unwrap()) as usize)
    };
    let f64_at = |pos: &mut usize| -> Result<f64> {
        Ok(f64::from_le_bytes(take(bytes, pos, 8)?.try_into().unwrap()))
    };
    let count = u32_at(&mut pos)?;
    if count < 2 || count > 64 {
        return Err(Error::Config(format!("implausible layer count {count}")));
    }
    let layer_dims = (0..count)
        .map(|_| u32_at(&mut pos))
        .collect::<Result<Vec<_>>>()?;
    let activations = take(bytes, &mut pos, count - 1)?
        .iter()
        .map(|&b| {
            Activation::from_byte(b)
                .ok_or_else(|| Error::Config(format!("unknown activation tag {b}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let spec = MlpSpec {
        layer_dims,
        activations,
    };
    spec.validate()?;
    let scale = f64_at(&mut pos)?;
    let tag = take(bytes, &mut pos, 1)?[0];
    let mu = f64_at(&mut pos)?;
    let loss = match tag {
        0 => Loss::E1,
        1 => Loss::E2 { mu },
        other => return Err(Error::Config(format!("unknown loss tag {other}"))),
    };
    let expected: usize = spec
        .layer_dims
        .windows(2)
        .map(|w| (w[0] * w[1] + w[1]) * 8)
        .sum();
    let found = bytes.len() - pos;
    if found != expected {
        return Err(Error::TruncatedPayload { expected, found });
    }
    let mut layers = Vec::with_capacity(count - 1);
    for w in spec.layer_dims.windows(2) {
        let mut vals = Vec::with_capacity(w[0] * w[1] + w[1]);
        for _ in 0..w[0] * w[1] + w[1] {
            vals.push(f64_at(&mut pos)?);
        }
        let b = DVector::from_column_slice(&vals[w[0] * w[1]..]);
        let wm = DMatrix::from_column_slice(w[1], w[0], &vals[..w[0] * w[1]]);
        layers.push(Layer { w: wm, b });
    }
    Ok(AeModel {
        spec,
        weights: Weights { layers },
        scale,
        loss,
    })
}
