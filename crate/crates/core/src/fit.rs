//! Maximum-likelihood fits of amplitude and phase families, AIC ranking and
//! one-sample Kolmogorov-Smirnov tests.
//!
//! Parameter conventions: Rician `(nu, sigma)`, Rayleigh `(sigma)`, Nakagami
//! `(m, omega)`, Weibull `(lambda, k)` as scale and shape, Normal `(mu, sigma)`,
//! Uniform `(a, b)`.

use std::f64::consts::{PI, SQRT_2};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use statrs::function::gamma::{digamma, gamma_lr, ln_gamma};

use crate::error::{Error, Result};
use crate::special::{bessel_ratio, ln_bessel_i0, trigamma};

pub const MAX_ITERATIONS: usize = 500;
pub const STEP_TOLERANCE: f64 = 1e-8;
pub const MIN_SAMPLES: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    Rician,
    Rayleigh,
    Nakagami,
    Weibull,
    Normal,
    Uniform,
}

impl Family {
    pub const ALL: [Family; 6] = [
        Family::Rician,
        Family::Rayleigh,
        Family::Nakagami,
        Family::Weibull,
        Family::Normal,
        Family::Uniform,
    ];

    pub fn parameter_count(self) -> usize {
        match self {
            Self::Rayleigh => 1,
            _ => 2,
        }
    }

    fn positive_support(self) -> bool {
        matches!(
            self,
            Self::Rician | Self::Rayleigh | Self::Nakagami | Self::Weibull
        )
    }
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|f| format!("{f:?}").eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown family {s}")))
    }
}

/// A fitted distribution; `params` follow the module-level conventions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    pub family: Family,
    pub params: [f64; 2],
}

impl Distribution {
    pub fn cdf(&self, x: f64) -> f64 {
        let [p, q] = self.params;
        match self.family {
            Family::Rician => rician_cdf(x, p, q),
            Family::Rayleigh => {
                if x <= 0.0 {
                    0.0
                } else {
                    -(-x * x / (2.0 * p * p)).exp_m1()
                }
            }
            Family::Nakagami => {
                if x <= 0.0 {
                    0.0
                } else {
                    gamma_lr(p, p * x * x / q)
                }
            }
            Family::Weibull => {
                if x <= 0.0 {
                    0.0
                } else {
                    -(-(x / p).powf(q)).exp_m1()
                }
            }
            Family::Normal => 0.5 * erfc(-(x - p) / (q * SQRT_2)),
            Family::Uniform => ((x - p) / (q - p)).clamp(0.0, 1.0),
        }
    }

    pub fn log_likelihood(&self, xs: &[f64]) -> f64 {
        let [p, q] = self.params;
        let n = xs.len() as f64;
        match self.family {
            Family::Rician => {
                let s = q * q;
                xs.iter()
                    .map(|&x| {
                        x.ln() - s.ln() - (x * x + p * p) / (2.0 * s) + ln_bessel_i0(x * p / s)
                    })
                    .sum()
            }
            Family::Rayleigh => {
                let s = p * p;
                xs.iter()
                    .map(|&x| x.ln() - s.ln() - x * x / (2.0 * s))
                    .sum()
            }
            Family::Nakagami => {
                let (m, om) = (p, q);
                n * (2f64.ln() + m * (m / om).ln() - ln_gamma(m))
                    + xs.iter()
                        .map(|&x| (2.0 * m - 1.0) * x.ln() - m * x * x / om)
                        .sum::<f64>()
            }
            Family::Weibull => {
                let (lam, k) = (p, q);
                n * (k.ln() - k * lam.ln())
                    + xs.iter()
                        .map(|&x| (k - 1.0) * x.ln() - (x / lam).powf(k))
                        .sum::<f64>()
            }
            Family::Normal => {
                let s2 = q * q;
                -0.5 * n * (2.0 * PI * s2).ln()
                    - xs.iter().map(|&x| (x - p) * (x - p)).sum::<f64>() / (2.0 * s2)
            }
            Family::Uniform => {
                if xs.iter().all(|&x| x >= p && x <= q) {
                    -n * (q - p).ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }
}

/// `1 - Q1(nu / sigma, x / sigma)` as a Poisson mixture of regularised gamma terms.
fn rician_cdf(x: f64, nu: f64, sigma: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let lam = nu * nu / (2.0 * sigma * sigma);
    let t = x * x / (2.0 * sigma * sigma);
    if lam == 0.0 {
        return -(-t).exp_m1();
    }
    let centre = lam.floor() as usize;
    let span = (12.0 * lam.sqrt() + 40.0) as usize;
    let lo = centre.saturating_sub(span);
    let hi = centre + span;
    let mut acc = 0.0;
    for k in lo..=hi {
        let kf = k as f64;
        let lw = -lam + kf * lam.ln() - ln_gamma(kf + 1.0);
        if lw < -40.0 {
            if k > centre {
                break;
            }
            continue;
        }
        acc += lw.exp() * gamma_lr(kf + 1.0, t);
    }
    acc.clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub family: Family,
    pub params: [f64; 2],
    pub log_likelihood: f64,
    pub aic: f64,
    pub ks_stat: f64,
    pub p_value: f64,
}

impl FitResult {
    pub fn distribution(&self) -> Distribution {
        Distribution {
            family: self.family,
            params: self.params,
        }
    }
}

/// `-2 ln L + 2k` from a log-likelihood.
pub fn aic(log_likelihood: f64, k: usize) -> f64 {
    -2.0 * log_likelihood + 2.0 * k as f64
}

fn validate(xs: &[f64], family: Family) -> Result<()> {
    if xs.len() < MIN_SAMPLES {
        return Err(Error::InsufficientSamples(format!(
            "fitting needs at least {MIN_SAMPLES} samples, got {}",
            xs.len()
        )));
    }
    if let Some(x) = xs.iter().find(|x| !x.is_finite()) {
        return Err(Error::Domain(format!("non-finite sample {x}")));
    }
    if family.positive_support() {
        if let Some(x) = xs.iter().find(|&&x| x <= 0.0) {
            return Err(Error::Domain(format!(
                "{family:?} needs positive samples, got {x}"
            )));
        }
    }
    Ok(())
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn converged(step: f64, at: f64) -> bool {
    step.abs() <= STEP_TOLERANCE * (1.0 + at.abs())
}

/// Newton iteration for a scalar root of a decreasing function.
fn newton_1d(mut x: f64, lower: f64, f: impl Fn(f64) -> (f64, f64)) -> Result<f64> {
    for _ in 0..MAX_ITERATIONS {
        let (v, d) = f(x);
        let mut step = -v / d;
        if !step.is_finite() {
            return Err(Error::NoConvergence {
                iterations: 0,
                last: vec![x],
            });
        }
        // keep the iterate inside the domain by halving towards the bound
        while x + step <= lower {
            step = (lower - x) / 2.0;
        }
        x += step;
        if converged(step, x) {
            return Ok(x);
        }
    }
    Err(Error::NoConvergence {
        iterations: MAX_ITERATIONS,
        last: vec![x],
    })
}

fn fit_rician(xs: &[f64]) -> Result<[f64; 2]> {
    let n = xs.len() as f64;
    let m2 = xs.iter().map(|x| x * x).sum::<f64>() / n;
    let m4 = xs.iter().map(|x| x.powi(4)).sum::<f64>() / n;
    let nu4 = 2.0 * m2 * m2 - m4;
    let mut nu = if nu4 > 0.0 { nu4.powf(0.25) } else { 0.0 };
    nu = nu.max(0.1 * m2.sqrt());
    let mut s = ((m2 - nu * nu) / 2.0).max(0.05 * m2);

    let loglik = |nu: f64, s: f64| -> f64 {
        xs.iter()
            .map(|&x| -s.ln() - (x * x + nu * nu) / (2.0 * s) + ln_bessel_i0(x * nu / s))
            .sum()
    };
    let sum_x2 = m2 * n;
    let mut current = loglik(nu, s);
    for _ in 0..MAX_ITERATIONS {
        let (mut sr, mut srx2, mut sdx2) = (0.0, 0.0, 0.0);
        for &x in xs {
            let z = x * nu / s;
            let r = bessel_ratio(z);
            let dr = if z < 1e-8 { 0.5 } else { 1.0 - r / z - r * r };
            sr += r * x;
            srx2 += dr * x * x;
            sdx2 += dr * x * x * nu * nu;
        }
        // gradient and Hessian in (nu, s) with s = sigma^2
        let q = sum_x2 + n * nu * nu;
        let g_nu = -n * nu / s + sr / s;
        let g_s = -n / s + q / (2.0 * s * s) - sr * nu / (s * s);
        let h_nn = -n / s + srx2 / (s * s);
        let h_ns = n * nu / (s * s) - sr / (s * s) - srx2 * nu / s.powi(3);
        let h_ss = n / (s * s) - q / s.powi(3) + 2.0 * sr * nu / s.powi(3) + sdx2 / s.powi(4);
        let det = h_nn * h_ss - h_ns * h_ns;
        let (mut d_nu, mut d_s) = if h_nn < 0.0 && det > 0.0 {
            (
                (-h_ss * g_nu + h_ns * g_s) / det,
                (h_ns * g_nu - h_nn * g_s) / det,
            )
        } else {
            // ascent step scaled by the diagonal curvature
            (g_nu * s / n, g_s * s * s / n)
        };
        let mut accepted = false;
        for _ in 0..60 {
            let (cn, cs) = (nu + d_nu, s + d_s);
            if cs > 0.0 {
                let v = loglik(cn, cs);
                if v >= current - 1e-12 * current.abs() {
                    nu = cn;
                    s = cs;
                    current = v;
                    accepted = true;
                    break;
                }
            }
            d_nu /= 2.0;
            d_s /= 2.0;
        }
        if !accepted || (converged(d_nu, nu) && converged(d_s, s)) {
            return Ok([nu.abs(), s.sqrt()]);
        }
    }
    Err(Error::NoConvergence {
        iterations: MAX_ITERATIONS,
        last: vec![nu.abs(), s.sqrt()],
    })
}

fn fit_nakagami(xs: &[f64]) -> Result<[f64; 2]> {
    let omega = xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64;
    let s = omega.ln() - mean(&xs.iter().map(|x| (x * x).ln()).collect::<Vec<_>>());
    if !(s > 0.0) {
        return Err(Error::Domain("samples have no spread".into()));
    }
    // gamma-shape starting point
    let m0 = (3.0 - s + ((s - 3.0).powi(2) + 24.0 * s).sqrt()) / (12.0 * s);
    let m = newton_1d(m0, 0.0, |m| {
        (m.ln() - digamma(m) - s, 1.0 / m - trigamma(m))
    })?;
    Ok([m, omega])
}

fn fit_weibull(xs: &[f64]) -> Result<[f64; 2]> {
    let xmax = xs.iter().copied().fold(0.0, f64::max);
    let ys: Vec<f64> = xs.iter().map(|x| x / xmax).collect();
    let logs: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let mean_log = mean(&logs);
    let var_log = logs.iter().map(|l| (l - mean_log).powi(2)).sum::<f64>() / logs.len() as f64;
    if !(var_log > 0.0) {
        return Err(Error::Domain("samples have no spread".into()));
    }
    let k0 = PI / (6.0 * var_log).sqrt();
    let k = newton_1d(k0, 0.0, |k| {
        let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
        for (y, l) in ys.iter().zip(&logs) {
            let yk = y.powf(k);
            a += yk * l;
            b += yk;
            c += yk * l * l;
        }
        (
            1.0 / k + mean_log - a / b,
            -1.0 / (k * k) - (c * b - a * a) / (b * b),
        )
    })?;
    let lam = (ys.iter().map(|y| y.powf(k)).sum::<f64>() / ys.len() as f64).powf(1.0 / k) * xmax;
    Ok([lam, k])
}

/// Maximum-likelihood fit with AIC and KS goodness of fit.
pub fn fit_mle(xs: &[f64], family: Family) -> Result<FitResult> {
    validate(xs, family)?;
    let n = xs.len() as f64;
    let params = match family {
        Family::Rayleigh => [
            (xs.iter().map(|x| x * x).sum::<f64>() / (2.0 * n)).sqrt(),
            0.0,
        ],
        Family::Normal => {
            let mu = mean(xs);
            [
                mu,
                (xs.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / n).sqrt(),
            ]
        }
        Family::Uniform => [
            xs.iter().copied().fold(f64::INFINITY, f64::min),
            xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        ],
        Family::Rician => fit_rician(xs)?,
        Family::Nakagami => fit_nakagami(xs)?,
        Family::Weibull => fit_weibull(xs)?,
    };
    let dist = Distribution { family, params };
    let log_likelihood = dist.log_likelihood(xs);
    let (ks_stat, p_value) = ks_test(xs, |x| dist.cdf(x));
    Ok(FitResult {
        family,
        params,
        log_likelihood,
        aic: aic(log_likelihood, family.parameter_count()),
        ks_stat,
        p_value,
    })
}

/// Fits every requested family in parallel and returns the successful fits
/// sorted by AIC. Families that fail are logged and skipped.
pub fn fit_all(xs: &[f64], families: &[Family]) -> Vec<FitResult> {
    let mut fits: Vec<FitResult> = families
        .par_iter()
        .filter_map(|&f| match fit_mle(xs, f) {
            Ok(r) => Some(r),
            Err(e) => {
                log::warn!("{f:?} fit skipped: {e}");
                None
            }
        })
        .collect();
    fits.sort_by(|a, b| a.aic.total_cmp(&b.aic));
    fits
}

/// One-sample KS statistic and asymptotic p-value. The statistic is scaled by
/// `sqrt(M) + 0.12 + 0.11 / sqrt(M)` before entering the Kolmogorov series.
pub fn ks_test(xs: &[f64], cdf: impl Fn(f64) -> f64) -> (f64, f64) {
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let m = sorted.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i as f64 + 1.0) / m - f).max(f - i as f64 / m);
    }
    let d = d.clamp(0.0, 1.0);
    let sq = m.sqrt();
    (d, kolmogorov_q((sq + 0.12 + 0.11 / sq) * d))
}

/// Survival function of the Kolmogorov distribution.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    let p = if lambda < 1.18 {
        // complementary theta-function form converges fast for small lambda
        let mut s = 0.0;
        for k in 1..=100 {
            let j = (2 * k - 1) as f64;
            let term = (-j * j * PI * PI / (8.0 * lambda * lambda)).exp();
            s += term;
            if term < 1e-10 {
                break;
            }
        }
        1.0 - (2.0 * PI).sqrt() / lambda * s
    } else {
        let mut s = 0.0;
        for k in 1..=100 {
            let kf = k as f64;
            let term = (-2.0 * kf * kf * lambda * lambda).exp();
            s += if k % 2 == 1 { term } else { -term };
            if term < 1e-10 {
                break;
            }
        }
        2.0 * s
    };
    p.clamp(0.0, 1.0)
}
