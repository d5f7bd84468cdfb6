//! Seeded synthetic benchmarks with known ground truth.
//!
//! Causal variables follow the SEM
//!
//! ```text
//! S  = N₀                        (N(0,1), or ±1 for binary stimuli)
//! C₁ = μ₁ + N₁ + S + b·h₁
//! C₂ = μ₂ + a·N₂ + C₁
//! C₃ = μ₃ + N₃ + S
//! C₄ = μ₄ + N₄ + b·h₁
//! Cₖ = μₖ + Nₖ                   (k ≥ 5)
//! ```
//!
//! with `h₁ ~ N(μ_h, 1)` and means drawn once per dataset, and are observed
//! through a random orthogonal mixing `F = A C`. The extractor is the first
//! row of `Aᵀ` (so `vᵀF = C₁`) and the ground truth the second (`w_G0ᵀF = C₂`).

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::dataset::{BandSpec, Dataset2D, Dataset3D, TrialTensor};
use crate::error::{MerlinError, Result};
use crate::spectral::{band_bins, BinRange, SpectrumPlan};

const CARRIER_ATTEMPTS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StimulusKind {
    /// `S ~ N(0, 1)`
    #[serde(rename = "G")]
    Gaussian,
    /// `S ~ Unif{−1, +1}`
    #[serde(rename = "B")]
    Binary,
}

impl std::str::FromStr for StimulusKind {
    type Err = MerlinError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "G" | "g" => Ok(StimulusKind::Gaussian),
            "B" | "b" => Ok(StimulusKind::Binary),
            other => Err(MerlinError::Parse(format!(
                "stimulus kind must be G or B, got {other:?}"
            ))),
        }
    }
}

impl std::fmt::Display for StimulusKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            StimulusKind::Gaussian => "G",
            StimulusKind::Binary => "B",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub d: usize,
    pub m: usize,
    pub a: f64,
    pub b: f64,
    #[serde(rename = "T")]
    pub stimulus: StimulusKind,
    pub seed: u64,
}

impl SynthParams {
    pub fn validate(&self) -> Result<()> {
        if self.d < 5 {
            return Err(MerlinError::InvalidParameter(format!(
                "synthetic data needs d >= 5, got {}",
                self.d
            )));
        }
        if self.m < 1 {
            return Err(MerlinError::InvalidParameter("m must be >= 1".into()));
        }
        if !(self.a >= 0.0 && self.b >= 0.0 && self.a.is_finite() && self.b.is_finite()) {
            return Err(MerlinError::InvalidParameter(format!(
                "need finite a, b >= 0, got a = {}, b = {}",
                self.a, self.b
            )));
        }
        Ok(())
    }
}

/// Draws of one dataset before mixing.
#[derive(Debug, Clone)]
pub struct Latent {
    pub s: DVector<f64>,
    /// `d × m` causal variables.
    pub c: DMatrix<f64>,
    /// Orthogonal mixing matrix.
    pub mixing: DMatrix<f64>,
}

/// Modified Gram-Schmidt on the columns of `a`, in place.
fn orthonormalize_columns(a: &mut DMatrix<f64>) {
    let d = a.ncols();
    for j in 0..d {
        for k in 0..j {
            let proj = a.column(k).dot(&a.column(j));
            let qk = a.column(k).into_owned();
            a.column_mut(j).axpy(-proj, &qk, 1.0);
        }
        let norm = a.column(j).norm();
        a.column_mut(j).unscale_mut(norm);
    }
}

/// Random orthogonal matrix: Gram-Schmidt (applied twice) on a Gaussian matrix.
pub fn random_orthogonal<R: Rng>(d: usize, rng: &mut R) -> DMatrix<f64> {
    let mut a = DMatrix::from_fn(d, d, |_, _| rng.sample(StandardNormal));
    orthonormalize_columns(&mut a);
    orthonormalize_columns(&mut a);
    a
}

/// Samples the SEM and the mixing matrix.
pub fn gen_latent(p: &SynthParams) -> Result<Latent> {
    p.validate()?;
    let (d, m) = (p.d, p.m);
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let mixing = random_orthogonal(d, &mut rng);
    let mu: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    let mu_h: f64 = rng.sample(StandardNormal);

    let mut s = DVector::zeros(m);
    let mut c = DMatrix::zeros(d, m);
    for j in 0..m {
        let sj = match p.stimulus {
            StimulusKind::Gaussian => rng.sample(StandardNormal),
            StimulusKind::Binary => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
        };
        let h: f64 = mu_h + rng.sample::<f64, _>(StandardNormal);
        let noise: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let c1 = mu[0] + noise[0] + sj + p.b * h;
        c[(0, j)] = c1;
        c[(1, j)] = mu[1] + p.a * noise[1] + c1;
        c[(2, j)] = mu[2] + noise[2] + sj;
        c[(3, j)] = mu[3] + noise[3] + p.b * h;
        for k in 4..d {
            c[(k, j)] = mu[k] + noise[k];
        }
        s[j] = sj;
    }
    Ok(Latent { s, c, mixing })
}

/// The orthogonally mixed dataset, with `v` and `w_G0` from the mixing matrix.
pub fn gen_dataset(p: &SynthParams) -> Result<Dataset2D> {
    let latent = gen_latent(p)?;
    let f = &latent.mixing * &latent.c;
    let v = latent.mixing.column(0).into_owned();
    let w_g0 = latent.mixing.column(1).into_owned();
    Dataset2D::new(latent.s, f, v, Some(w_g0))
}

/// Same draws as [`gen_dataset`] but with identity mixing: `F = C`,
/// `v = e₁`, `w_G0 = e₂`.
pub fn gen_identity_dataset(p: &SynthParams) -> Result<Dataset2D> {
    let latent = gen_latent(p)?;
    let unit = |k: usize| DVector::from_fn(p.d, |i, _| if i == k { 1.0 } else { 0.0 });
    Dataset2D::new(latent.s, latent.c, unit(0), Some(unit(1)))
}

/// Seeded noise with a `1/√f` magnitude profile (zero mean).
pub fn pink_carrier<R: Rng>(n: usize, fs: f64, rng: &mut R, planner: &mut FftPlanner<f64>) -> Vec<f64> {
    let mut buf: Vec<Complex64> = (0..n)
        .map(|_| Complex64::new(rng.sample(StandardNormal), 0.0))
        .collect();
    planner.plan_fft_forward(n).process(&mut buf);
    for (k, x) in buf.iter_mut().enumerate() {
        let bin = k.min(n - k);
        if bin == 0 {
            *x = Complex64::new(0.0, 0.0);
        } else {
            *x /= (bin as f64 * fs / n as f64).sqrt();
        }
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    buf.iter().map(|x| x.re / n as f64).collect()
}

/// Mean log modulus over the band of the windowed spectrum, or `None` when
/// some in-band bin is exactly zero.
fn band_log_level(plan: &SpectrumPlan, series: &[f64], range: BinRange) -> Option<f64> {
    let n = series.len() as f64;
    let spectrum = plan.spectrum(series);
    let band = &spectrum[range.first..=range.last];
    if band.iter().any(|x| !(x.norm() > 0.0)) {
        return None;
    }
    Some(band.iter().map(|x| (x.norm() / n).ln()).sum::<f64>() / band.len() as f64)
}

/// Trial data whose per-trial log-bandpower in `band` reproduces the
/// identity-mixed dataset: channel `i` of trial `j` is a pink-noise carrier
/// scaled so its windowed in-band log-bandpower equals `F[i, j]`.
///
/// `carrier_seed` only affects the carriers; the targets come from `p.seed`.
pub fn gen_timeseries_dataset(
    p: &SynthParams,
    n: usize,
    fs: f64,
    band: &BandSpec,
    carrier_seed: u64,
) -> Result<Dataset3D> {
    let base = gen_identity_dataset(p)?;
    if n < 4 {
        return Err(MerlinError::InvalidParameter(format!(
            "time series need n >= 4, got {n}"
        )));
    }
    let range = band_bins(fs, n, band)?;
    let plan = SpectrumPlan::new(n);
    let mut planner = FftPlanner::new();
    let mut rng = ChaCha8Rng::seed_from_u64(carrier_seed);
    let (d, m) = (base.d(), base.m());
    let mut tensor = TrialTensor::zeros(d, m, n);

    for i in 0..d {
        for j in 0..m {
            let mut attempt = 0;
            let (carrier, level) = loop {
                if attempt == CARRIER_ATTEMPTS {
                    return Err(MerlinError::CarrierExhausted(CARRIER_ATTEMPTS));
                }
                attempt += 1;
                let carrier = pink_carrier(n, fs, &mut rng, &mut planner);
                if let Some(level) = band_log_level(&plan, &carrier, range) {
                    break (carrier, level);
                }
            };
            // Uniform scaling by γ shifts every log modulus by ln γ.
            let gamma = (base.f()[(i, j)] - level).exp();
            for (dst, x) in tensor.series_mut(i, j).iter_mut().zip(&carrier) {
                *dst = gamma * x;
            }
        }
    }

    Dataset3D::new(
        base.s().clone(),
        tensor,
        base.v().clone(),
        fs,
        base.w_g0().cloned(),
    )
}
