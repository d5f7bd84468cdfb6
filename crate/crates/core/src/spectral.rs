//! Band-limited Fourier features of trial data.
//!
//! Each channel/trial series is centred, Hann-windowed and transformed; the
//! bins inside the band are kept and combined once with the extractor `v`
//! and once with the complement projector `P(v)`. Windowing and the DFT are
//! linear, so combining spectra equals the spectrum of the combined signal.

use std::sync::Arc;

use nalgebra::DVector;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::dataset::{BandSpec, Dataset3D};
use crate::error::{MerlinError, Result};
use crate::par;
use crate::stats::Projector;

/// Inclusive range of 0-based FFT bins; bin `k` sits at `k * fs / n` Hz.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BinRange {
    pub first: usize,
    pub last: usize,
}

impl BinRange {
    pub fn len(&self) -> usize {
        self.last - self.first + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// `floor(x)` that snaps values within rounding distance of an integer.
fn exact_floor(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() <= 1e-9 * r.abs().max(1.0) {
        r
    } else {
        x.floor()
    }
}

/// Bins `floor(lo * n / fs) ..= floor(hi * n / fs)`.
pub fn band_bins(fs: f64, n: usize, band: &BandSpec) -> Result<BinRange> {
    band.validate(fs)?;
    let first = exact_floor(band.lo * n as f64 / fs) as usize;
    let last = exact_floor(band.hi * n as f64 / fs) as usize;
    if first > last {
        return Err(MerlinError::EmptyBand { first, last });
    }
    if last >= n {
        return Err(MerlinError::InvalidParameter(format!(
            "band reaches bin {last} but the series has only {n} bins"
        )));
    }
    Ok(BinRange { first, last })
}

/// Symmetric Hann window `½(1 − cos(2πk/(n−1)))`, `k = 0..n`.
pub fn hann_window(n: usize) -> Vec<f64> {
    let denom = (n - 1) as f64;
    (0..n)
        .map(|k| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * k as f64 / denom).cos()))
        .collect()
}

/// Centres, windows and transforms real series of one fixed length.
#[derive(Clone)]
pub struct SpectrumPlan {
    window: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl SpectrumPlan {
    pub fn new(n: usize) -> Self {
        Self {
            window: hann_window(n),
            fft: FftPlanner::new().plan_fft_forward(n),
        }
    }

    pub fn len(&self) -> usize {
        self.window.len()
    }

    pub fn is_empty(&self) -> bool {
        self.window.is_empty()
    }

    pub fn window(&self) -> &[f64] {
        &self.window
    }

    /// Full spectrum of the centred, windowed series (kernel `exp(-2πi kl/n)`).
    pub fn spectrum(&self, series: &[f64]) -> Vec<Complex64> {
        assert_eq!(series.len(), self.window.len(), "series length");
        let mu = series.iter().sum::<f64>() / series.len() as f64;
        let mut buf: Vec<Complex64> = series
            .iter()
            .zip(&self.window)
            .map(|(x, w)| Complex64::new((x - mu) * w, 0.0))
            .collect();
        self.fft.process(&mut buf);
        buf
    }
}

/// `(1/n′) Σ log*(|X_k| / n)` with `log*(0) = 0`.
pub fn log_bandpower(spec_im: &[f64], spec_re: &[f64], n: usize) -> f64 {
    let n = n as f64;
    let total: f64 = spec_im
        .iter()
        .zip(spec_re)
        .map(|(im, re)| log_star(im.hypot(*re) / n))
        .sum();
    total / spec_im.len() as f64
}

#[inline]
pub fn log_star(x: f64) -> f64 {
    if x > 0.0 {
        x.ln()
    } else {
        0.0
    }
}

/// In-band Fourier parts of the `v`-signal and of the `P(v)`-projected channels.
///
/// The projected parts are stored trial-major and bin-major with the `d-1`
/// components contiguous, so `w·F[:, trial, bin]` is a dot product over a slice.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralBundle {
    trials: usize,
    bins: usize,
    components: usize,
    v_im: Vec<f64>,
    v_re: Vec<f64>,
    f_im: Vec<f64>,
    f_re: Vec<f64>,
    bin_range: BinRange,
    n_original: usize,
    fs: f64,
}

impl SpectralBundle {
    /// Assembles a bundle from raw arrays in the internal layout
    /// (`v_*` indexed `trial * bins + bin`, `f_*` indexed
    /// `(trial * bins + bin) * components + component`).
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        components: usize,
        trials: usize,
        bin_range: BinRange,
        n_original: usize,
        fs: f64,
        v_im: Vec<f64>,
        v_re: Vec<f64>,
        f_im: Vec<f64>,
        f_re: Vec<f64>,
    ) -> Result<Self> {
        let bins = bin_range.len();
        if v_im.len() != trials * bins
            || v_re.len() != trials * bins
            || f_im.len() != trials * bins * components
            || f_re.len() != trials * bins * components
        {
            return Err(MerlinError::DimensionMismatch(
                "spectral bundle arrays do not match its shape".into(),
            ));
        }
        if [&v_im, &v_re, &f_im, &f_re]
            .iter()
            .any(|a| a.iter().any(|x| !x.is_finite()))
        {
            return Err(MerlinError::NonFinite("spectral bundle"));
        }
        Ok(Self {
            trials,
            bins,
            components,
            v_im,
            v_re,
            f_im,
            f_re,
            bin_range,
            n_original,
            fs,
        })
    }

    pub fn trials(&self) -> usize {
        self.trials
    }

    /// `n′`, the number of kept bins.
    pub fn bins(&self) -> usize {
        self.bins
    }

    /// `d - 1`.
    pub fn components(&self) -> usize {
        self.components
    }

    pub fn bin_range(&self) -> BinRange {
        self.bin_range
    }

    pub fn n_original(&self) -> usize {
        self.n_original
    }

    pub fn fs(&self) -> f64 {
        self.fs
    }

    pub fn v_im(&self, trial: usize) -> &[f64] {
        &self.v_im[trial * self.bins..(trial + 1) * self.bins]
    }

    pub fn v_re(&self, trial: usize) -> &[f64] {
        &self.v_re[trial * self.bins..(trial + 1) * self.bins]
    }

    #[inline]
    fn f_offset(&self, trial: usize, bin: usize) -> usize {
        (trial * self.bins + bin) * self.components
    }

    /// Imaginary parts of the projected channels at `(trial, bin)`.
    pub fn f_im(&self, trial: usize, bin: usize) -> &[f64] {
        let o = self.f_offset(trial, bin);
        &self.f_im[o..o + self.components]
    }

    pub fn f_re(&self, trial: usize, bin: usize) -> &[f64] {
        let o = self.f_offset(trial, bin);
        &self.f_re[o..o + self.components]
    }

    /// Per-trial log-bandpower of the `v`-signal.
    pub fn v_log_bandpower(&self) -> Vec<f64> {
        (0..self.trials)
            .map(|j| log_bandpower(self.v_im(j), self.v_re(j), self.n_original))
            .collect()
    }

    /// Per-trial log-bandpower of the combination `wᵀ F` in projected space.
    pub fn combined_log_bandpower(&self, w: &DVector<f64>) -> Vec<f64> {
        let w = w.as_slice();
        (0..self.trials)
            .map(|j| {
                let (im, re): (Vec<f64>, Vec<f64>) = (0..self.bins)
                    .map(|k| (dot(w, self.f_im(j, k)), dot(w, self.f_re(j, k))))
                    .unzip();
                log_bandpower(&im, &re, self.n_original)
            })
            .collect()
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn preprocess(ds: &Dataset3D, band: &BandSpec) -> Result<SpectralBundle> {
    let (d, m, n) = (ds.d(), ds.m(), ds.n());
    let range = band_bins(ds.fs(), n, band)?;
    let bins = range.len();
    let projector = Projector::new(ds.v())?;
    let p = projector.matrix();
    let v = ds.v();
    let plan = SpectrumPlan::new(n);
    let tensor = ds.f();

    // One task per trial: transform every channel, then combine.
    let per_trial = par::map_indexed(m, |j| {
        let spectra: Vec<Vec<Complex64>> = (0..d)
            .map(|i| plan.spectrum(tensor.series(i, j))[range.first..=range.last].to_vec())
            .collect();
        let mut v_part = vec![Complex64::new(0.0, 0.0); bins];
        let mut f_part = vec![Complex64::new(0.0, 0.0); bins * (d - 1)];
        for k in 0..bins {
            for (i, spec) in spectra.iter().enumerate() {
                let x = spec[k];
                v_part[k] += x * v[i];
                for r in 0..d - 1 {
                    f_part[k * (d - 1) + r] += x * p[(r, i)];
                }
            }
        }
        (v_part, f_part)
    });

    let mut v_im = Vec::with_capacity(m * bins);
    let mut v_re = Vec::with_capacity(m * bins);
    let mut f_im = Vec::with_capacity(m * bins * (d - 1));
    let mut f_re = Vec::with_capacity(m * bins * (d - 1));
    for (v_part, f_part) in per_trial {
        v_im.extend(v_part.iter().map(|c| c.im));
        v_re.extend(v_part.iter().map(|c| c.re));
        f_im.extend(f_part.iter().map(|c| c.im));
        f_re.extend(f_part.iter().map(|c| c.re));
    }
    SpectralBundle::from_parts(d - 1, m, range, n, ds.fs(), v_im, v_re, f_im, f_re)
}
