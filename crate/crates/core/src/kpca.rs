//! Kernel PCA split: Gaussian Gram over CSI columns, centred eigenproblem,
//! nonlinear scores, and kernel ridge reconstruction of the predictable
//! part. The unpredictable part is the plain residual; no denoising band is
//! applied.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::csi::CsiMatrix;
use crate::dep::median_in_place;
use crate::error::{Error, Result};

const EIGEN_FLOOR: f64 = 1e-12;

/// Distance used inside the Gaussian kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelVariant {
    /// `|h_i - conj(h_j)|^2`.
    #[default]
    AsWritten,
    /// `|h_i - h_j|^2`.
    Standard,
}

impl std::str::FromStr for KernelVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "as-written" => Ok(Self::AsWritten),
            "standard" => Ok(Self::Standard),
            other => Err(Error::Config(format!("unknown kernel variant {other}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    pub k: DMatrix<f64>,
    pub bandwidth_sigma: f64,
    /// Frobenius norm of `K - K^T` before symmetrisation.
    pub asymmetry: f64,
}

fn complex_dist2(a: &[Complex64], b: &[Complex64], variant: KernelVariant) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| match variant {
            KernelVariant::AsWritten => (x - y.conj()).norm_sqr(),
            KernelVariant::Standard => (x - y).norm_sqr(),
        })
        .sum()
}

/// `sigma = sqrt(median / 2)` of the off-diagonal squared distances.
fn median_sigma(d2: &DMatrix<f64>) -> Result<f64> {
    let n = d2.nrows();
    let mut off: Vec<f64> = (0..n)
        .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
        .map(|(i, j)| d2[(i, j)])
        .collect();
    let med = median_in_place(&mut off).ok_or(Error::DegenerateBandwidth)?;
    if !(med > 0.0) {
        return Err(Error::DegenerateBandwidth);
    }
    Ok((med / 2.0).sqrt())
}

fn gram_from_dist2(d2: &DMatrix<f64>, sigma: Option<f64>) -> Result<GramMatrix> {
    let sigma = match sigma {
        Some(s) if s > 0.0 => s,
        Some(s) => {
            return Err(Error::Config(format!(
                "bandwidth must be positive, got {s}"
            )))
        }
        None => median_sigma(d2)?,
    };
    let raw = d2.map(|v| (-v / (2.0 * sigma * sigma)).exp());
    let asymmetry = (&raw - raw.transpose()).norm();
    let k = (&raw + raw.transpose()) * 0.5;
    Ok(GramMatrix {
        k,
        bandwidth_sigma: sigma,
        asymmetry,
    })
}

/// `K_ij = exp(-d(h_i, h_j) / (2 sigma^2))`, symmetrised. Without an explicit
/// `sigma` the median heuristic over off-diagonal pairs is used.
pub fn gaussian_gram(
    columns: &[Vec<Complex64>],
    sigma: Option<f64>,
    variant: KernelVariant,
) -> Result<GramMatrix> {
    let n = columns.len();
    if n < 2 {
        return Err(Error::InsufficientSamples(format!(
            "Gram needs two columns, got {n}"
        )));
    }
    let d2 = DMatrix::from_fn(n, n, |i, j| {
        complex_dist2(&columns[i], &columns[j], variant)
    });
    gram_from_dist2(&d2, sigma)
}

/// Real Gaussian Gram over the columns of `y` with median bandwidth.
pub fn real_gaussian_gram(y: &DMatrix<f64>) -> Result<GramMatrix> {
    let n = y.ncols();
    if n < 2 {
        return Err(Error::InsufficientSamples(format!(
            "Gram needs two columns, got {n}"
        )));
    }
    let d2 = DMatrix::from_fn(n, n, |i, j| (y.column(i) - y.column(j)).norm_squared());
    gram_from_dist2(&d2, None)
}

/// `K - 1K/N - K1/N + 1K1/N^2`.
pub fn center_gram(k: &DMatrix<f64>) -> DMatrix<f64> {
    let n = k.nrows();
    let nf = n as f64;
    let row_means: Vec<f64> = (0..n).map(|i| k.row(i).sum() / nf).collect();
    let col_means: Vec<f64> = (0..n).map(|j| k.column(j).sum() / nf).collect();
    let grand = row_means.iter().sum::<f64>() / nf;
    DMatrix::from_fn(n, n, |i, j| k[(i, j)] - col_means[j] - row_means[i] + grand)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KpcaConfig {
    pub d_hat: usize,
    /// Ridge parameter; defaults to `1e-3 * trace(K_Y) / N`.
    pub gamma: Option<f64>,
    /// Bandwidth override for the CSI Gram.
    pub sigma: Option<f64>,
    pub variant: KernelVariant,
}

impl Default for KpcaConfig {
    fn default() -> Self {
        Self {
            d_hat: 2,
            gamma: None,
            sigma: None,
            variant: KernelVariant::AsWritten,
        }
    }
}

#[derive(Debug, Clone)]
pub struct KpcaModel {
    pub gram_sigma: f64,
    pub asymmetry: f64,
    pub centered_gram: DMatrix<f64>,
    /// `lambda` with `K~ V = N lambda V`, descending, clamped at zero.
    pub eigenvalues: Vec<f64>,
    /// `alpha_i = V_i / sqrt(lambda_i)` for the retained components (columns).
    pub alphas: DMatrix<f64>,
    /// Scores `alpha^T K~`, one column per node.
    pub scores: DMatrix<f64>,
    pub score_sigma: f64,
    pub ridge_gamma: f64,
    /// `(K_Y + gamma I)^-1 K_Y`; the predictable part is `H * smoother`.
    pub smoother: DMatrix<f64>,
    pub condition_estimate: f64,
    pub d_hat_requested: usize,
    pub d_hat: usize,
    pub nodes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KpcaDiagnostics {
    pub eigenvalues: Vec<f64>,
    pub asymmetry_norm: f64,
    pub condition_estimate: f64,
    pub gram_sigma: f64,
    pub score_sigma: f64,
    pub ridge_gamma: f64,
    pub d_hat_requested: usize,
    pub d_hat: usize,
}

impl KpcaModel {
    pub fn diagnostics(&self) -> KpcaDiagnostics {
        KpcaDiagnostics {
            eigenvalues: self.eigenvalues.clone(),
            asymmetry_norm: self.asymmetry,
            condition_estimate: self.condition_estimate,
            gram_sigma: self.gram_sigma,
            score_sigma: self.score_sigma,
            ridge_gamma: self.ridge_gamma,
            d_hat_requested: self.d_hat_requested,
            d_hat: self.d_hat,
        }
    }
}

pub fn fit_kpca(csi: &CsiMatrix, cfg: &KpcaConfig) -> Result<KpcaModel> {
    let n = csi.n();
    if cfg.d_hat == 0 {
        return Err(Error::Config("kernel PCA needs d_hat >= 1".into()));
    }
    let columns: Vec<Vec<Complex64>> = (0..n).map(|j| csi.column(j)).collect();
    let gram = gaussian_gram(&columns, cfg.sigma, cfg.variant)?;
    let centered = center_gram(&gram.k);

    let eig = SymmetricEigen::new(centered.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .total_cmp(&eig.eigenvalues[a])
            .then(a.cmp(&b))
    });
    let nf = n as f64;
    let eigenvalues: Vec<f64> = order
        .iter()
        .map(|&i| (eig.eigenvalues[i] / nf).max(0.0))
        .collect();

    let rank = eigenvalues
        .iter()
        .take_while(|&&l| l >= EIGEN_FLOOR)
        .count();
    let d_hat = cfg.d_hat.min(rank);
    if d_hat < cfg.d_hat {
        log::warn!(
            "d_hat {} exceeds numerical rank {rank}; truncating",
            cfg.d_hat
        );
    }
    if d_hat == 0 {
        return Err(Error::Config(
            "centred Gram has no component above the eigenvalue floor".into(),
        ));
    }

    let mut alphas = DMatrix::zeros(n, d_hat);
    for (c, &idx) in order.iter().take(d_hat).enumerate() {
        let v = eig.eigenvectors.column(idx);
        let scale = v.iter().map(|x| x.abs()).fold(0.0, f64::max);
        let sign = v
            .iter()
            .find(|x| x.abs() > 1e-10 * scale)
            .map_or(1.0, |x| x.signum());
        let inv = sign / eigenvalues[c].sqrt();
        alphas.set_column(c, &(v * inv));
    }
    let scores = alphas.transpose() * &centered;

    let ky = real_gaussian_gram(&scores)?;
    let gamma = match cfg.gamma {
        Some(g) if g > 0.0 => g,
        Some(g) => {
            return Err(Error::Config(format!(
                "ridge gamma must be positive, got {g}"
            )))
        }
        None => 1e-3 * ky.k.trace() / nf,
    };
    let (smoother, condition_estimate) = ridge_smoother(&ky.k, gamma)?;
    if condition_estimate > 1e12 {
        log::warn!("ridge system is ill-conditioned (condition estimate {condition_estimate:.3e})");
    }

    Ok(KpcaModel {
        gram_sigma: gram.bandwidth_sigma,
        asymmetry: gram.asymmetry,
        centered_gram: centered,
        eigenvalues,
        alphas,
        scores,
        score_sigma: ky.bandwidth_sigma,
        ridge_gamma: gamma,
        smoother,
        condition_estimate,
        d_hat_requested: cfg.d_hat,
        d_hat,
        nodes: n,
    })
}

/// Solves `(K + gamma I) S = K` by Cholesky and returns `S` with the
/// eigenvalue ratio of `K + gamma I`.
fn ridge_smoother(k: &DMatrix<f64>, gamma: f64) -> Result<(DMatrix<f64>, f64)> {
    let n = k.nrows();
    let system = k + DMatrix::<f64>::identity(n, n) * gamma;
    let spectrum = SymmetricEigen::new(system.clone()).eigenvalues;
    let (lo, hi) = spectrum
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    let chol = nalgebra::Cholesky::new(system)
        .ok_or_else(|| Error::Solve("ridge system is not positive definite".into()))?;
    Ok((chol.solve(k), condition))
}

/// Kernel ridge reconstruction `H (K_Y + gamma I)^-1 K_Y` of a CSI matrix over
/// the model's nodes.
pub fn reconstruct_predictable(model: &KpcaModel, csi: &CsiMatrix) -> Result<CsiMatrix> {
    if csi.n() != model.nodes {
        return Err(Error::Dimension(format!(
            "model fitted on {} nodes, got {}",
            model.nodes,
            csi.n()
        )));
    }
    let re = csi.data().map(|z| z.re) * &model.smoother;
    let im = csi.data().map(|z| z.im) * &model.smoother;
    let data = DMatrix::from_fn(csi.m(), csi.n(), |r, c| {
        Complex64::new(re[(r, c)], im[(r, c)])
    });
    CsiMatrix::new(data, csi.direction(), csi.snr_db())
}

/// `H - H_hat`.
pub fn residual(csi: &CsiMatrix, predictable: &CsiMatrix) -> Result<CsiMatrix> {
    if csi.data().shape() != predictable.data().shape() {
        return Err(Error::Dimension("residual operands differ in shape".into()));
    }
    CsiMatrix::new(
        csi.data() - predictable.data(),
        csi.direction(),
        csi.snr_db(),
    )
}
