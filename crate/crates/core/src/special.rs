//! Special functions needed by the directional and Dirichlet models.
//!
//! The modified Bessel function of the first kind is evaluated entirely in
//! log space so that concentrations of order 1e4 (and far beyond, for the
//! mean-resultant inversion) never overflow.

use std::f64::consts::PI;

use statrs::function::gamma;

use crate::error::{Error, Result};

/// Below this the ascending series is used; above it the Hankel expansion.
fn hankel_threshold(nu: f64) -> f64 {
    (nu * nu).max(50.0)
}

/// `ln Γ(x)` with exact zeros at 1 and 2.
pub fn ln_gamma(x: f64) -> f64 {
    if x == 1.0 || x == 2.0 {
        0.0
    } else {
        gamma::ln_gamma(x)
    }
}

pub fn digamma(x: f64) -> f64 {
    gamma::digamma(x)
}

/// Polygamma of order one, by upward recurrence into the asymptotic range.
pub fn trigamma(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < 20.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let x2 = 1.0 / (x * x);
    let tail = 1.0 / x
        + x2 / 2.0
        + (1.0 / x) * x2 * (1.0 / 6.0 - x2 * (1.0 / 30.0 - x2 * (1.0 / 42.0 - x2 / 30.0)));
    acc + tail
}

/// Solves `digamma(x) = y` for `x > 0`.
pub fn inv_digamma(y: f64) -> f64 {
    // Minka's initialisation followed by Newton.
    let mut x = if y >= -2.22 {
        y.exp() + 0.5
    } else {
        -1.0 / (y + 0.577_215_664_901_532_9)
    };
    for _ in 0..8 {
        let step = (digamma(x) - y) / trigamma(x);
        x -= step;
        if x <= 0.0 {
            x = f64::MIN_POSITIVE.max((x + step) * 0.5);
        }
    }
    x
}

pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// `ln` of the surface area of the unit sphere `S^{d-1}` embedded in `R^d`.
pub fn ln_sphere_area(d: usize) -> f64 {
    let h = d as f64 / 2.0;
    std::f64::consts::LN_2 + h * PI.ln() - ln_gamma(h)
}

/// `ln I_nu(z)` for the modified Bessel function of the first kind.
pub fn log_bessel_i(nu: f64, z: f64) -> Result<f64> {
    if !(nu >= 0.0) || !(z >= 0.0) {
        return Err(Error::Domain(format!(
            "log_bessel_i needs nu >= 0 and z >= 0, got nu={nu}, z={z}"
        )));
    }
    if z == 0.0 {
        return Ok(if nu == 0.0 { 0.0 } else { f64::NEG_INFINITY });
    }
    if z.is_infinite() {
        return Ok(f64::INFINITY);
    }
    if z >= hankel_threshold(nu) {
        Ok(log_bessel_i_hankel(nu, z))
    } else {
        Ok(log_bessel_i_series(nu, z))
    }
}

/// Ascending series `sum_k (z/2)^{2k+nu} / (k! Gamma(k+nu+1))`.
///
/// All terms are positive, so the sum is evaluated relative to its largest
/// term without cancellation.
pub(crate) fn log_bessel_i_series(nu: f64, z: f64) -> f64 {
    let q = 0.25 * z * z;
    let k_peak = ((-nu + (nu * nu + z * z).sqrt()) / 2.0).floor().max(0.0);
    let log_peak =
        (2.0 * k_peak + nu) * (0.5 * z).ln() - ln_gamma(k_peak + 1.0) - ln_gamma(k_peak + nu + 1.0);

    let mut rest = 0.0;
    let mut term = 1.0;
    let mut k = k_peak;
    loop {
        term *= q / ((k + 1.0) * (k + 1.0 + nu));
        rest += term;
        k += 1.0;
        if term < 1e-18 * (1.0 + rest) {
            break;
        }
    }
    let mut term = 1.0;
    let mut k = k_peak;
    while k > 0.0 {
        term *= k * (k + nu) / q;
        rest += term;
        k -= 1.0;
        if term < 1e-18 * (1.0 + rest) {
            break;
        }
    }
    log_peak + rest.ln_1p()
}

/// Sum of the Hankel large-argument expansion `sum_k (-1)^k a_k(nu) / z^k`.
fn hankel_sum(nu: f64, z: f64) -> f64 {
    let mu = 4.0 * nu * nu;
    let mut sum = 1.0;
    let mut term = 1.0_f64;
    for k in 1..200 {
        let odd = (2 * k - 1) as f64;
        let next = -term * (mu - odd * odd) / (8.0 * k as f64 * z);
        if next.abs() > term.abs() {
            break;
        }
        term = next;
        sum += term;
        if term.abs() < 1e-18 * sum.abs() {
            break;
        }
    }
    sum
}

pub(crate) fn log_bessel_i_hankel(nu: f64, z: f64) -> f64 {
    z - 0.5 * (2.0 * PI * z).ln() + hankel_sum(nu, z).ln()
}

/// Ratio `I_{nu+1}(z) / I_nu(z)`.
pub fn bessel_ratio(nu: f64, z: f64) -> Result<f64> {
    if !(nu >= 0.0) || !(z >= 0.0) {
        return Err(Error::Domain(format!(
            "bessel_ratio needs nu >= 0 and z >= 0, got nu={nu}, z={z}"
        )));
    }
    if z == 0.0 {
        return Ok(0.0);
    }
    if z.is_infinite() {
        return Ok(1.0);
    }
    if z >= hankel_threshold(nu + 1.0) {
        // The exponential prefactors cancel exactly.
        return Ok(hankel_sum(nu + 1.0, z) / hankel_sum(nu, z));
    }
    Ok((log_bessel_i(nu + 1.0, z)? - log_bessel_i(nu, z)?).exp())
}
