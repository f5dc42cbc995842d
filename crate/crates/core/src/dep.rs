//! Kernel dependence measure across nodes: the d-variable HSIC statistic,
//! its permutation critical value, and the normalised dependence level
//! `delta_bar`. Pearson correlation is provided as the linear baseline.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::csi::RealView;
use crate::error::{Error, Result};

/// `d >= 2` scalar sequences of equal length `M >= 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct DhsicInput {
    variables: Vec<Vec<f64>>,
}

impl DhsicInput {
    pub fn new(variables: Vec<Vec<f64>>) -> Result<Self> {
        if variables.len() < 2 {
            return Err(Error::Config(format!(
                "dHSIC needs at least two variables, got {}",
                variables.len()
            )));
        }
        let m = variables[0].len();
        if m < 2 {
            return Err(Error::InsufficientSamples(format!("sequence length {m}")));
        }
        if let Some(v) = variables.iter().find(|v| v.len() != m) {
            return Err(Error::LengthMismatch(m, v.len()));
        }
        if variables.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::Config("non-finite observation".into()));
        }
        Ok(Self { variables })
    }

    pub fn d(&self) -> usize {
        self.variables.len()
    }

    pub fn len(&self) -> usize {
        self.variables[0].len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn variables(&self) -> &[Vec<f64>] {
        &self.variables
    }
}

/// Gram matrix of one variable, row-major `M x M`.
#[derive(Debug, Clone)]
pub struct ScalarGram {
    m: usize,
    k: Vec<f64>,
    row_sums: Vec<f64>,
    total: f64,
    /// Bandwidth `sigma` with `k(x, y) = exp(-|x - y|^2 / sigma^2)`; `None`
    /// when the sequence is constant and the Gram is all ones.
    pub sigma: Option<f64>,
}

impl ScalarGram {
    pub fn new(x: &[f64]) -> Self {
        let m = x.len();
        let sigma = median_bandwidth(x);
        let mut k = vec![1.0; m * m];
        if let Some(s) = sigma {
            let inv = 1.0 / (s * s);
            for i in 0..m {
                for j in (i + 1)..m {
                    let d = x[i] - x[j];
                    let v = (-d * d * inv).exp();
                    k[i * m + j] = v;
                    k[j * m + i] = v;
                }
            }
        }
        let row_sums: Vec<f64> = k.chunks_exact(m).map(|r| r.iter().sum()).collect();
        let total = row_sums.iter().sum();
        Self {
            m,
            k,
            row_sums,
            total,
            sigma,
        }
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.k[i * self.m + j]
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.k[i * self.m..(i + 1) * self.m]
    }
}

/// `sigma = sqrt(med(|x_i - x_j|^2) / 2)` over pairs `i < j`. If more than
/// half the pairs coincide the median of the non-zero distances is used;
/// `None` for a constant sequence.
pub fn median_bandwidth(x: &[f64]) -> Option<f64> {
    let mut d2: Vec<f64> = Vec::with_capacity(x.len() * (x.len() - 1) / 2);
    for i in 0..x.len() {
        for j in (i + 1)..x.len() {
            let d = x[i] - x[j];
            d2.push(d * d);
        }
    }
    let mut med = median_in_place(&mut d2)?;
    if med == 0.0 {
        d2.retain(|&v| v > 0.0);
        med = median_in_place(&mut d2)?;
    }
    Some((med / 2.0).sqrt())
}

pub(crate) fn median_in_place(v: &mut [f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    let len = v.len();
    let mid = len / 2;
    let (lo, upper, _) = v.select_nth_unstable_by(mid, f64::total_cmp);
    let upper = *upper;
    if len % 2 == 1 {
        Some(upper)
    } else {
        let lower = lo.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Some((lower + upper) / 2.0)
    }
}

/// Evaluates the statistic for Gram matrices whose sample orders are
/// relabelled by `perms` (`None` = identity).
fn statistic_from_grams(grams: &[ScalarGram], perms: &[Option<Vec<usize>>]) -> f64 {
    let m = grams[0].m;
    let d = grams.len();
    let mf = m as f64;
    let idx = |l: usize, i: usize| perms[l].as_ref().map_or(i, |p| p[i]);

    let joint = if d == 2 {
        let (g0, g1) = (&grams[0], &grams[1]);
        let mut s = 0.0;
        for i in 0..m {
            let a = g0.row(idx(0, i));
            let b = g1.row(idx(1, i));
            let row: f64 = match (&perms[0], &perms[1]) {
                (None, None) => a[i + 1..].iter().zip(&b[i + 1..]).map(|(x, y)| x * y).sum(),
                (None, Some(p1)) => a[i + 1..]
                    .iter()
                    .zip(&p1[i + 1..])
                    .map(|(x, &q)| x * b[q])
                    .sum(),
                _ => ((i + 1)..m).map(|j| a[idx(0, j)] * b[idx(1, j)]).sum(),
            };
            s += 2.0 * row + a[idx(0, i)] * b[idx(1, i)];
        }
        s
    } else {
        let mut s = 0.0;
        for i in 0..m {
            let rows: Vec<&[f64]> = (0..d).map(|l| grams[l].row(idx(l, i))).collect();
            let mut row = 0.0;
            for j in (i + 1)..m {
                row += (0..d).map(|l| rows[l][idx(l, j)]).product::<f64>();
            }
            s += 2.0 * row + (0..d).map(|l| rows[l][idx(l, i)]).product::<f64>();
        }
        s
    };

    let term1 = joint / (mf * mf);
    let term2 = grams.iter().map(|g| g.total).product::<f64>() / mf.powi(2 * d as i32);
    let term3: f64 = (0..m)
        .map(|i| {
            (0..d)
                .map(|l| grams[l].row_sums[idx(l, i)])
                .product::<f64>()
        })
        .sum::<f64>()
        * 2.0
        / mf.powi(d as i32 + 1);
    term1 + term2 - term3
}

/// The d-variable HSIC estimator with median-heuristic Gaussian kernels.
pub fn dhsic_statistic(input: &DhsicInput) -> f64 {
    let grams: Vec<ScalarGram> = input.variables.iter().map(|v| ScalarGram::new(v)).collect();
    let perms = vec![None; grams.len()];
    statistic_from_grams(&grams, &perms)
}

fn replicate_rng(seed: u64, replicate: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate);
    rng
}

/// `b` permutation replicates, sorted ascending. Variables `1..d` are
/// shuffled independently; the statistic is invariant under a common
/// relabelling, so shuffling the first variable as well adds nothing.
fn permutation_replicates(grams: &[ScalarGram], b: usize, seed: u64) -> Vec<f64> {
    let m = grams[0].m;
    let mut reps: Vec<f64> = (0..b)
        .into_par_iter()
        .map(|r| {
            let mut rng = replicate_rng(seed, r as u64);
            let perms: Vec<Option<Vec<usize>>> = (0..grams.len())
                .map(|l| {
                    (l > 0).then(|| {
                        let mut p: Vec<usize> = (0..m).collect();
                        p.shuffle(&mut rng);
                        p
                    })
                })
                .collect();
            statistic_from_grams(grams, &perms)
        })
        .collect();
    reps.sort_by(f64::total_cmp);
    reps
}

fn check_test_params(alpha: f64, b: usize) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Config(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    if b < 100 {
        return Err(Error::Config(format!(
            "need at least 100 permutations, got {b}"
        )));
    }
    Ok(())
}

/// 1-based position `ceil((B + 1)(1 - alpha)) + ties` into the sorted
/// replicates, clamped to `B`.
fn critical_index(b: usize, alpha: f64, ties: usize) -> usize {
    let base = ((b as f64 + 1.0) * (1.0 - alpha) - 1e-9).ceil() as usize;
    let idx = base + ties;
    if idx > b {
        log::warn!("critical value index {idx} exceeds {b} permutations; clamping");
        b
    } else {
        idx.max(1)
    }
}

fn critical_from_replicates(sorted: &[f64], alpha: f64, observed: f64) -> f64 {
    let ties = sorted.iter().filter(|&&v| v == observed).count();
    sorted[critical_index(sorted.len(), alpha, ties) - 1]
}

/// Monte-Carlo critical value at level `alpha` from `b` permutations.
pub fn critical_value(input: &DhsicInput, alpha: f64, b: usize, seed: u64) -> Result<f64> {
    check_test_params(alpha, b)?;
    let grams: Vec<ScalarGram> = input.variables.iter().map(|v| ScalarGram::new(v)).collect();
    let observed = statistic_from_grams(&grams, &vec![None; grams.len()]);
    let reps = permutation_replicates(&grams, b, seed);
    Ok(critical_from_replicates(&reps, alpha, observed))
}

/// `statistic / cv` when the test rejects, otherwise zero.
pub fn delta_bar(statistic: f64, cv: f64) -> Result<f64> {
    if !(cv > 0.0) {
        return Err(Error::Config(format!(
            "critical value must be positive, got {cv}"
        )));
    }
    Ok(if statistic > cv { statistic / cv } else { 0.0 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DependenceReport {
    pub statistic: f64,
    pub critical_value: f64,
    pub delta_bar: f64,
    /// `statistic / critical_value` without the rejection gate.
    pub ratio: f64,
    pub alpha: f64,
    pub b: usize,
    pub reject: bool,
    /// Variables whose sequence was constant (all-ones Gram).
    pub degenerate_variables: Vec<usize>,
}

/// Full permutation test on one input.
pub fn dependence_test(
    input: &DhsicInput,
    alpha: f64,
    b: usize,
    seed: u64,
) -> Result<DependenceReport> {
    check_test_params(alpha, b)?;
    let grams: Vec<ScalarGram> = input.variables.iter().map(|v| ScalarGram::new(v)).collect();
    let statistic = statistic_from_grams(&grams, &vec![None; grams.len()]);
    if statistic < -1e-10 {
        log::warn!("negative dHSIC statistic {statistic}");
    }
    let reps = permutation_replicates(&grams, b, seed);
    let cv = critical_from_replicates(&reps, alpha, statistic);
    let degenerate_variables = grams
        .iter()
        .enumerate()
        .filter(|(_, g)| g.sigma.is_none())
        .map(|(i, _)| i)
        .collect();
    let (delta, ratio) = if cv > 0.0 {
        (delta_bar(statistic, cv)?, statistic / cv)
    } else {
        (0.0, 0.0)
    };
    Ok(DependenceReport {
        statistic,
        critical_value: cv,
        delta_bar: delta,
        ratio,
        alpha,
        b,
        reject: statistic > cv,
        degenerate_variables,
    })
}

/// Sample Pearson correlation.
pub fn pearson_cc(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(Error::InsufficientSamples(
            "correlation needs two samples".into(),
        ));
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::ZeroVariance);
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Mean Pearson correlation over `(node, neighbour)` pairs of a real view.
pub fn avg_neighbor_cc(view: &RealView, neighbors: &[Vec<usize>]) -> Result<f64> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for (node, nbrs) in neighbors.iter().enumerate() {
        for &j in nbrs {
            sum += pearson_cc(view.column(node), view.column(j))?;
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::Config("no neighbour pairs".into()));
    }
    Ok(sum / count as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborDependence {
    pub avg_delta_bar: f64,
    pub avg_ratio: f64,
    pub reject_fraction: f64,
    pub pairs: usize,
}

/// Average `delta_bar` over node pairs; each pair is tested as a
/// two-variable problem on the nodes' real-view columns. Pair `i` uses the
/// permutation stream derived from `seed` and `i`.
pub fn neighbor_dependence(
    view: &RealView,
    pairs: &[(usize, usize)],
    alpha: f64,
    b: usize,
    seed: u64,
) -> Result<NeighborDependence> {
    check_test_params(alpha, b)?;
    if pairs.is_empty() {
        return Err(Error::Config("no node pairs".into()));
    }
    let reports: Vec<DependenceReport> = pairs
        .iter()
        .enumerate()
        .map(|(i, &(a, c))| {
            let input = DhsicInput::new(vec![view.column(a).to_vec(), view.column(c).to_vec()])?;
            dependence_test(&input, alpha, b, seed.wrapping_add((i as u64) << 20))
        })
        .collect::<Result<_>>()?;
    let n = reports.len() as f64;
    Ok(NeighborDependence {
        avg_delta_bar: reports.iter().map(|r| r.delta_bar).sum::<f64>() / n,
        avg_ratio: reports.iter().map(|r| r.ratio).sum::<f64>() / n,
        reject_fraction: reports.iter().filter(|r| r.reject).count() as f64 / n,
        pairs: reports.len(),
    })
}
