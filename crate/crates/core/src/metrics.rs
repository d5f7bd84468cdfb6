//! Recovery quality against a known ground truth, and channel-space
//! activation patterns.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{MerlinError, Result};

const BETA_CF_TOL: f64 = 1e-12;
const BETA_CF_MAX_ITERS: usize = 300;

/// Lanczos coefficients for g = 7, n = 9.
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// `ln Γ(x)` for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection: Γ(x) Γ(1 − x) = π / sin(πx)
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let t = x + 7.5;
    let series = LANCZOS[1..]
        .iter()
        .enumerate()
        .fold(LANCZOS[0], |acc, (i, c)| acc + c / (x + i as f64 + 1.0));
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + series.ln()
}

fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// Continued fraction for `I_x(a, b)`, modified Lentz.
fn beta_cf(x: f64, a: f64, b: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=BETA_CF_MAX_ITERS {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < BETA_CF_TOL {
            break;
        }
    }
    h
}

/// Regularised incomplete beta function `I_x(a, b)`.
pub fn reg_inc_beta(x: f64, a: f64, b: f64) -> Result<f64> {
    if !(a > 0.0 && b > 0.0) {
        return Err(MerlinError::InvalidParameter(format!(
            "incomplete beta needs a, b > 0, got a = {a}, b = {b}"
        )));
    }
    if !(0.0..=1.0).contains(&x) {
        return Err(MerlinError::InvalidParameter(format!(
            "incomplete beta argument {x} outside [0, 1]"
        )));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x == 1.0 {
        return Ok(1.0);
    }
    let front = (a * x.ln() + b * (1.0 - x).ln() - ln_beta(a, b)).exp();
    let value = if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(x, a, b) / a
    } else {
        1.0 - front * beta_cf(1.0 - x, b, a) / b
    };
    Ok(value.clamp(0.0, 1.0))
}

fn check_pair(w: &DVector<f64>, w_g0: &DVector<f64>) -> Result<()> {
    if w.len() != w_g0.len() {
        return Err(MerlinError::DimensionMismatch(format!(
            "w has length {}, ground truth has length {}",
            w.len(),
            w_g0.len()
        )));
    }
    Ok(())
}

/// `|w·w_G0|` clamped to `[0, 1]`.
fn overlap(w: &DVector<f64>, w_g0: &DVector<f64>) -> f64 {
    w.dot(w_g0).abs().min(1.0)
}

/// Angle to the ground truth modulo sign, in `[0, π/2]`.
pub fn andi(w: &DVector<f64>, w_g0: &DVector<f64>) -> Result<f64> {
    check_pair(w, w_g0)?;
    Ok(overlap(w, w_g0).acos())
}

/// Probability that a uniformly random unit vector is closer (modulo sign)
/// to the ground truth than `w`: `I_{h(2-h)}((d-1)/2, 1/2)` with `h = 1 - |w·w_G0|`.
pub fn pobv(w: &DVector<f64>, w_g0: &DVector<f64>) -> Result<f64> {
    check_pair(w, w_g0)?;
    let d = w.len();
    if d < 2 {
        return Err(MerlinError::InvalidParameter(
            "pobv needs dimension >= 2".into(),
        ));
    }
    let h = 1.0 - overlap(w, w_g0);
    reg_inc_beta((h * (2.0 - h)).clamp(0.0, 1.0), (d as f64 - 1.0) / 2.0, 0.5)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MetricReport {
    pub andi: f64,
    pub pobv: f64,
    pub cap_height: f64,
}

pub fn metric_report(w: &DVector<f64>, w_g0: &DVector<f64>) -> Result<MetricReport> {
    Ok(MetricReport {
        andi: andi(w, w_g0)?,
        pobv: pobv(w, w_g0)?,
        cap_height: 1.0 - overlap(w, w_g0),
    })
}

/// Channel-space pattern `Σw`, scaled to unit norm.
pub fn activation_pattern(w: &DVector<f64>, sigma: &DMatrix<f64>) -> Result<DVector<f64>> {
    if sigma.nrows() != w.len() || sigma.ncols() != w.len() {
        return Err(MerlinError::DimensionMismatch(format!(
            "covariance is {}x{}, w has length {}",
            sigma.nrows(),
            sigma.ncols(),
            w.len()
        )));
    }
    let a = sigma * w;
    let norm = a.norm();
    if !(norm > 0.0) {
        return Err(MerlinError::InvalidParameter(
            "activation pattern is the zero vector".into(),
        ));
    }
    Ok(a / norm)
}
