//! Bessel and polygamma helpers not covered by `statrs`.

use std::f64::consts::PI;

const SERIES_LIMIT: f64 = 30.0;

/// `exp(-|x|) * I0(x)`.
pub fn bessel_i0e(x: f64) -> f64 {
    let x = x.abs();
    if x <= SERIES_LIMIT {
        let q = x * x / 4.0;
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut k = 1.0;
        while term > 1e-17 * sum {
            term *= q / (k * k);
            sum += term;
            k += 1.0;
        }
        sum * (-x).exp()
    } else {
        asymptotic_scaled(0.0, x)
    }
}

/// `exp(-|x|) * I1(x)`, odd in `x`.
pub fn bessel_i1e(x: f64) -> f64 {
    let ax = x.abs();
    let v = if ax <= SERIES_LIMIT {
        let q = ax * ax / 4.0;
        let mut term = ax / 2.0;
        let mut sum = term;
        let mut k = 1.0;
        while term > 1e-17 * sum {
            term *= q / (k * (k + 1.0));
            sum += term;
            k += 1.0;
        }
        sum * (-ax).exp()
    } else {
        asymptotic_scaled(1.0, ax)
    };
    v.copysign(x)
}

// Hankel expansion of e^{-x} I_nu(x) for large x.
fn asymptotic_scaled(nu: f64, x: f64) -> f64 {
    let mu = 4.0 * nu * nu;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..30 {
        let kf = k as f64;
        let odd = 2.0 * kf - 1.0;
        term *= -(mu - odd * odd) / (kf * 8.0 * x);
        sum += term;
        if term.abs() < 1e-17 * sum.abs() {
            break;
        }
    }
    sum / (2.0 * PI * x).sqrt()
}

/// `ln I0(x)` without overflow.
pub fn ln_bessel_i0(x: f64) -> f64 {
    bessel_i0e(x).ln() + x.abs()
}

/// `I1(x) / I0(x)`.
pub fn bessel_ratio(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        bessel_i1e(x) / bessel_i0e(x)
    }
}

/// Bessel function of the first kind, order zero.
pub fn bessel_j0(x: f64) -> f64 {
    let x = x.abs();
    if x < 12.0 {
        let q = x * x / 4.0;
        let mut term: f64 = 1.0;
        let mut sum = 1.0;
        let mut k = 1.0;
        while term.abs() > 1e-18 {
            term *= -q / (k * k);
            sum += term;
            k += 1.0;
        }
        sum
    } else {
        // Hankel asymptotic form with P/Q series.
        let z = 8.0 * x;
        let mut p = 1.0;
        let mut q = -1.0 / z;
        let mut tp = 1.0;
        let mut tq = -1.0 / z;
        for k in 1..12 {
            let a = (4 * k - 3) as f64;
            let b = (4 * k - 1) as f64;
            let c = (4 * k + 1) as f64;
            tp *= -(a * a) * (b * b) / ((2 * k - 1) as f64 * (2 * k) as f64 * z * z);
            tq *= -(b * b) * (c * c) / ((2 * k) as f64 * (2 * k + 1) as f64 * z * z);
            p += tp;
            q += tq;
        }
        let chi = x - PI / 4.0;
        (2.0 / (PI * x)).sqrt() * (p * chi.cos() - q * chi.sin())
    }
}

/// Trigamma function `psi'(x)` for `x > 0`.
pub fn trigamma(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < 12.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let x2 = 1.0 / (x * x);
    acc + 1.0 / x
        + x2 / 2.0
        + (1.0 / x) * x2 * (1.0 / 6.0 - x2 * (1.0 / 30.0 - x2 * (1.0 / 42.0 - x2 / 30.0)))
}
