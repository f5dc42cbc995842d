//! Linear split of a real CSI view into a predictable band (leading
//! principal components) and an unpredictable band of components
//! `d1..=d2`. Components past `d2` are discarded as noise.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::csi::RealView;
use crate::error::{Error, Result};

/// Eigenbasis of the feature covariance (features = `2m` real rows, samples =
/// nodes). Rows of `eigenvectors` are orthonormal and ordered by descending
/// eigenvalue; each row's first non-negligible entry is positive.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaBasis {
    pub eigenvectors: DMatrix<f64>,
    pub eigenvalues: Vec<f64>,
    /// Node mean removed before projection.
    pub mean: Vec<f64>,
}

impl PcaBasis {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Rows `from..to` (0-based, exclusive end) of the eigenvector matrix.
    fn band(&self, from: usize, to: usize) -> DMatrix<f64> {
        self.eigenvectors.rows(from, to - from).into_owned()
    }

    fn center(&self, view: &RealView) -> Result<DMatrix<f64>> {
        if view.rows() != self.dim() {
            return Err(Error::Dimension(format!(
                "view has {} features, basis has {}",
                view.rows(),
                self.dim()
            )));
        }
        let mut data = view.data.clone();
        for mut col in data.column_iter_mut() {
            for (x, mu) in col.iter_mut().zip(&self.mean) {
                *x -= mu;
            }
        }
        Ok(data)
    }

    /// Projection of the centred data onto components `first..=last`
    /// (1-based), mapped back to feature space. An empty band gives zeros.
    pub fn project_band(&self, view: &RealView, first: usize, last: usize) -> Result<DMatrix<f64>> {
        let centered = self.center(view)?;
        Ok(self.project_centered(&centered, first, last))
    }

    pub(crate) fn project_centered(
        &self,
        centered: &DMatrix<f64>,
        first: usize,
        last: usize,
    ) -> DMatrix<f64> {
        if first == 0 || last < first {
            return DMatrix::zeros(centered.nrows(), centered.ncols());
        }
        let u = self.band(first - 1, last.min(self.dim()));
        u.transpose() * (&u * centered)
    }

    pub fn centered(&self, view: &RealView) -> Result<DMatrix<f64>> {
        self.center(view)
    }
}

pub fn fit_pca(view: &RealView) -> Result<PcaBasis> {
    let n = view.nodes();
    if n < 2 {
        return Err(Error::InsufficientSamples(format!(
            "PCA needs at least two nodes, got {n}"
        )));
    }
    let (centered, mean) = view.centered();
    let cov = (&centered.data * centered.data.transpose()) / (n as f64 - 1.0);
    let eig = SymmetricEigen::new(cov);

    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .total_cmp(&eig.eigenvalues[a])
            .then(a.cmp(&b))
    });

    let dim = order.len();
    let mut eigenvectors = DMatrix::zeros(dim, dim);
    let mut eigenvalues = Vec::with_capacity(dim);
    for (row, &idx) in order.iter().enumerate() {
        let v = eig.eigenvectors.column(idx);
        let scale = v.iter().map(|x| x.abs()).fold(0.0, f64::max);
        let sign = v
            .iter()
            .find(|x| x.abs() > 1e-10 * scale)
            .map_or(1.0, |x| x.signum());
        for (c, x) in v.iter().enumerate() {
            eigenvectors[(row, c)] = sign * x;
        }
        eigenvalues.push(eig.eigenvalues[idx].max(0.0));
    }
    Ok(PcaBasis {
        eigenvectors,
        eigenvalues,
        mean,
    })
}

/// The triplet selecting the predictable band `1..=d_hat` and the
/// unpredictable band `d1..=d2` (1-based, so `d1 - 1` components are omitted).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecompConfig {
    pub d_hat: usize,
    pub d1: usize,
    pub d2: usize,
}

impl Default for DecompConfig {
    fn default() -> Self {
        Self {
            d_hat: 1,
            d1: 3,
            d2: 20,
        }
    }
}

impl DecompConfig {
    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.d_hat > dim {
            return Err(Error::Config(format!("d_hat {} exceeds {dim}", self.d_hat)));
        }
        if self.d1 < 1 || self.d2 < self.d1 || self.d2 > dim {
            return Err(Error::Config(format!(
                "band {}..={} outside 1..={dim}",
                self.d1, self.d2
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub predictable: RealView,
    pub unpredictable: RealView,
    pub config: DecompConfig,
    /// Mean subtracted before projection; add it back to obtain absolute
    /// predictable channels.
    pub mean: Vec<f64>,
}

impl Decomposition {
    /// Predictable component with the node mean restored.
    pub fn predictable_with_mean(&self) -> RealView {
        let mut data = self.predictable.data.clone();
        for mut col in data.column_iter_mut() {
            for (x, mu) in col.iter_mut().zip(&self.mean) {
                *x += mu;
            }
        }
        RealView::new(data)
    }
}

pub fn decompose(view: &RealView, basis: &PcaBasis, cfg: DecompConfig) -> Result<Decomposition> {
    cfg.validate(basis.dim())?;
    let centered = basis.centered(view)?;
    let predictable = basis.project_centered(&centered, 1, cfg.d_hat);
    let unpredictable = basis.project_centered(&centered, cfg.d1, cfg.d2);
    Ok(Decomposition {
        predictable: RealView::new(predictable),
        unpredictable: RealView::new(unpredictable),
        config: cfg,
        mean: basis.mean.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut rng))
    }

    fn correlated(rows: usize, cols: usize, seed: u64) -> RealView {
        let mix = gaussian(rows, rows, seed ^ 0xabc);
        RealView::new(mix * gaussian(rows, cols, seed))
    }

    fn frob(m: &DMatrix<f64>) -> f64 {
        m.norm()
    }

    #[test]
    fn too_few_nodes() {
        let v = RealView::new(DMatrix::from_element(4, 1, 1.0));
        assert!(matches!(fit_pca(&v), Err(Error::InsufficientSamples(_))));
    }

    #[test]
    fn rank_one_data() {
        let base = [1.0, -2.0, 0.5, 3.0, 0.0, 1.5];
        let scales = [0.3, -1.0, 2.0, 4.5, -0.7, 1.1, 0.0];
        let data = DMatrix::from_fn(6, scales.len(), |r, c| base[r] * scales[c]);
        let basis = fit_pca(&RealView::new(data)).unwrap();
        let l1 = basis.eigenvalues[0];
        assert_eq!(
            basis.eigenvalues.iter().filter(|&&l| l > 1e-8 * l1).count(),
            1
        );
    }

    #[test]
    fn white_data_is_isotropic() {
        let basis = fit_pca(&RealView::new(gaussian(8, 10_000, 4))).unwrap();
        for l in &basis.eigenvalues {
            assert!((0.9..=1.1).contains(l), "eigenvalue {l}");
        }
    }

    #[test]
    fn two_by_two_closed_form() {
        // x1 ~ N(0, 2), x2 ~ N(0, 1), independent: eigenvalues ~ (2, 1), u1 ~ e1
        let z = gaussian(2, 20_000, 8);
        let data = DMatrix::from_fn(2, z.ncols(), |r, c| {
            z[(r, c)] * if r == 0 { 2f64.sqrt() } else { 1.0 }
        });
        let basis = fit_pca(&RealView::new(data)).unwrap();
        assert!((basis.eigenvalues[0] - 2.0).abs() < 0.06);
        assert!((basis.eigenvalues[1] - 1.0).abs() < 0.04);
        assert!(basis.eigenvectors[(0, 0)] > 0.999);
    }

    #[test]
    fn basis_is_orthonormal_and_reconstructs_covariance() {
        let view = correlated(10, 60, 2);
        let basis = fit_pca(&view).unwrap();
        let u = &basis.eigenvectors;
        let eye = DMatrix::<f64>::identity(10, 10);
        assert!(frob(&(u * u.transpose() - &eye)) < 1e-8);

        let (c, _) = view.centered();
        let cov = (&c.data * c.data.transpose()) / 59.0;
        let lambda =
            DMatrix::from_diagonal(&nalgebra::DVector::from_vec(basis.eigenvalues.clone()));
        let rebuilt = u.transpose() * lambda * u;
        assert!(frob(&(rebuilt - &cov)) / frob(&cov) < 1e-6);
        let trace: f64 = cov.trace();
        let sum: f64 = basis.eigenvalues.iter().sum();
        assert!((trace - sum).abs() < 1e-8 * trace);
        assert!(basis.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn sign_convention() {
        let basis = fit_pca(&correlated(6, 30, 5)).unwrap();
        for row in basis.eigenvectors.row_iter() {
            let first = row.iter().find(|x| x.abs() > 1e-10).unwrap();
            assert!(*first > 0.0);
        }
    }

    #[test]
    fn full_basis_predictable_is_centered_input() {
        let view = correlated(8, 40, 3);
        let basis = fit_pca(&view).unwrap();
        let d = decompose(
            &view,
            &basis,
            DecompConfig {
                d_hat: 8,
                d1: 1,
                d2: 8,
            },
        )
        .unwrap();
        let (c, _) = view.centered();
        assert!(frob(&(d.predictable.data - &c.data)) < 1e-8 * frob(&c.data));
    }

    #[test]
    fn zero_d_hat_gives_zero_predictable() {
        let view = correlated(8, 40, 3);
        let basis = fit_pca(&view).unwrap();
        let d = decompose(
            &view,
            &basis,
            DecompConfig {
                d_hat: 0,
                d1: 1,
                d2: 4,
            },
        )
        .unwrap();
        assert!(d.predictable.data.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn complementary_bands_tile() {
        let view = correlated(12, 50, 6);
        let basis = fit_pca(&view).unwrap();
        let (c, _) = view.centered();
        for d_hat in 0..12 {
            let cfg = DecompConfig {
                d_hat,
                d1: d_hat + 1,
                d2: 12,
            };
            let d = decompose(&view, &basis, cfg).unwrap();
            let sum = &d.predictable.data + &d.unpredictable.data;
            assert!(
                frob(&(sum - &c.data)) < 1e-8 * frob(&c.data),
                "d_hat {d_hat}"
            );
            for j in 0..50 {
                let dot = d
                    .predictable
                    .data
                    .column(j)
                    .dot(&d.unpredictable.data.column(j));
                assert!(dot.abs() < 1e-8 * frob(&c.data).powi(2));
            }
        }
    }

    #[test]
    fn projection_is_idempotent() {
        let view = correlated(10, 40, 7);
        let basis = fit_pca(&view).unwrap();
        let cfg = DecompConfig {
            d_hat: 3,
            d1: 4,
            d2: 7,
        };
        let d = decompose(&view, &basis, cfg).unwrap();
        let again = decompose(&d.predictable_with_mean(), &basis, cfg).unwrap();
        let diff = frob(&(again.predictable.data - &d.predictable.data));
        assert!(diff <= 1e-10 * frob(&d.predictable.data).max(1.0));
    }

    #[test]
    fn energy_is_bounded() {
        let view = correlated(10, 40, 8);
        let basis = fit_pca(&view).unwrap();
        let (c, _) = view.centered();
        let total = frob(&c.data).powi(2);
        for (d_hat, d1, d2) in [(2, 3, 5), (1, 4, 10), (0, 2, 9), (4, 5, 10)] {
            let d = decompose(&view, &basis, DecompConfig { d_hat, d1, d2 }).unwrap();
            let e = frob(&d.predictable.data).powi(2) + frob(&d.unpredictable.data).powi(2);
            assert!(e <= total + 1e-8);
        }
    }

    #[test]
    fn config_out_of_range() {
        let view = correlated(6, 20, 1);
        let basis = fit_pca(&view).unwrap();
        for cfg in [
            DecompConfig {
                d_hat: 7,
                d1: 1,
                d2: 2,
            },
            DecompConfig {
                d_hat: 1,
                d1: 0,
                d2: 2,
            },
            DecompConfig {
                d_hat: 1,
                d1: 3,
                d2: 2,
            },
            DecompConfig {
                d_hat: 1,
                d1: 2,
                d2: 7,
            },
        ] {
            assert!(matches!(
                decompose(&view, &basis, cfg),
                Err(Error::Config(_))
            ));
        }
    }
}
