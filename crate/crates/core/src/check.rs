//! Built-in verification battery behind `merlin check`.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;
use serde::Serialize;

use crate::algorithm::{basic_objective, BandFeatures, Variant};
use crate::dataset::BandSpec;
use crate::error::{MerlinError, Result};
use crate::metrics::pobv;
use crate::objective::ObjectiveConfig;
use crate::spectral::SpectrumPlan;
use crate::sphere::{check_gradient, restart_rng, uniform_sphere_sample, Objective};
use crate::synth::{gen_dataset, gen_latent, gen_timeseries_dataset, StimulusKind, SynthParams};

pub const GRADIENT_TOLERANCE: f64 = 1e-5;
pub const POBV_TOLERANCE: f64 = 0.01;
pub const POPULATION_TOLERANCE: f64 = 0.05;
pub const CORRELATION_TOLERANCE: f64 = 0.02;
pub const DFT_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, Default)]
pub struct CheckOptions {
    /// Smaller sample sizes and fewer points.
    pub quick: bool,
    /// Corrupts the gradient of one objective; used to exercise the failure path.
    pub gradient_fault: Option<Variant>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    /// Worst observed discrepancy.
    pub value: f64,
    pub tolerance: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub passed: bool,
    pub checks: Vec<CheckOutcome>,
}

impl CheckReport {
    pub fn failures(&self) -> impl Iterator<Item = &CheckOutcome> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

fn outcome(name: impl Into<String>, tolerance: f64, worst: Result<f64>) -> CheckOutcome {
    let name = name.into();
    match worst {
        Ok(value) => CheckOutcome {
            name,
            passed: value.is_finite() && value < tolerance,
            value,
            tolerance,
            error: None,
        },
        Err(e) => CheckOutcome {
            name,
            passed: false,
            value: f64::NAN,
            tolerance,
            error: Some(e.to_string()),
        },
    }
}

/// Scales the gradient by 1.01, a bug the gradient check must catch.
struct Faulty<'a>(&'a dyn Objective);

impl Objective for Faulty<'_> {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn value_and_gradient(&self, w: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
        let (f, g) = self.0.value_and_gradient(w)?;
        Ok((f, g * 1.01))
    }
}

fn worst_gradient_error(obj: &dyn Objective, points: usize, seed: u64) -> Result<f64> {
    let mut rng = restart_rng(seed, 0);
    let mut worst = 0.0f64;
    for _ in 0..points {
        let w = uniform_sphere_sample(obj.dim(), &mut rng);
        worst = worst.max(check_gradient(obj, &w, 1e-5)?);
    }
    Ok(worst)
}

fn synth(d: usize, m: usize, a: f64, b: f64, seed: u64) -> SynthParams {
    SynthParams {
        d,
        m,
        a,
        b,
        stimulus: StimulusKind::Gaussian,
        seed,
    }
}

fn gradient_checks(opts: &CheckOptions, out: &mut Vec<CheckOutcome>) {
    let points = if opts.quick { 5 } else { 20 };
    let cfg = ObjectiveConfig::default();
    let run = |variant: Variant, obj: &dyn Objective| -> Result<f64> {
        if opts.gradient_fault == Some(variant) {
            worst_gradient_error(&Faulty(obj), points, 7)
        } else {
            worst_gradient_error(obj, points, 7)
        }
    };

    let basic = gen_dataset(&synth(5, 300, 0.5, 0.5, 7))
        .and_then(|ds| basic_objective(&ds, &cfg))
        .and_then(|(obj, _)| run(Variant::Basic, &obj));
    out.push(outcome("gradient basic", GRADIENT_TOLERANCE, basic));

    let band = BandSpec::new(55.0, 85.0);
    let features = gen_timeseries_dataset(&synth(5, 60, 0.5, 0.0, 7), 128, 250.0, &band, 7)
        .and_then(|ds| Ok((BandFeatures::new(&ds, &band)?, ds.s().clone())));
    for variant in [Variant::Bp, Variant::BpPlus] {
        let worst = match &features {
            Ok((f, s)) => f
                .objective(s, variant == Variant::BpPlus, &cfg)
                .and_then(|obj| run(variant, &obj)),
            Err(e) => Err(MerlinError::InvalidParameter(format!("spectral test data: {e}"))),
        };
        out.push(outcome(format!("gradient {variant}"), GRADIENT_TOLERANCE, worst));
    }
}

fn pobv_check(opts: &CheckOptions) -> CheckOutcome {
    let samples = if opts.quick { 20_000 } else { 100_000 };
    let tolerance = if opts.quick { 0.02 } else { POBV_TOLERANCE };
    let worst = (|| {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut worst = 0.0f64;
        for d in [2usize, 5, 20] {
            let w = uniform_sphere_sample(d, &mut rng);
            let g = uniform_sphere_sample(d, &mut rng);
            let target = w.dot(&g).abs();
            let hits = (0..samples)
                .filter(|_| uniform_sphere_sample(d, &mut rng).dot(&g).abs() >= target)
                .count();
            worst = worst.max((pobv(&w, &g)? - hits as f64 / samples as f64).abs());
        }
        Ok(worst)
    })();
    outcome("pobv vs monte carlo", tolerance, worst)
}

fn population_check(opts: &CheckOptions) -> CheckOutcome {
    let m = if opts.quick { 20_000 } else { 50_000 };
    let cfg = ObjectiveConfig::default();
    let worst = (|| {
        let mut worst = 0.0f64;
        for a in [0.5, 1.0, 2.0] {
            let ds = gen_dataset(&synth(5, m, a, 0.0, 21))?;
            let (obj, projector) = basic_objective(&ds, &cfg)?;
            let w = projector.apply(ds.w_g0().expect("synthetic data has ground truth"));
            let value = obj.evaluate(&w)?.unweighted(cfg.epsilon);
            let expected = 1.0 / (a * a);
            worst = worst.max((value - expected).abs() / expected);
        }
        Ok(worst)
    })();
    outcome("objective at ground truth = 1/a^2", POPULATION_TOLERANCE, worst)
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}

fn correlation_check(opts: &CheckOptions) -> CheckOutcome {
    let m = if opts.quick { 50_000 } else { 100_000 };
    let worst = (|| {
        let mut worst = 0.0f64;
        for (a, b) in [(1.0, 0.0), (1.0, 1.0), (2.0, 2.0)] {
            let latent = gen_latent(&synth(5, m, a, b, 31))?;
            let c1: Vec<f64> = latent.c.row(0).iter().copied().collect();
            let c2: Vec<f64> = latent.c.row(1).iter().copied().collect();
            let denom = 2.0 + b * b + a * a;
            let e1 = (pearson(latent.s.as_slice(), &c2).powi(2) - 1.0 / denom).abs();
            let e2 = (pearson(&c1, &c2).powi(2) - (2.0 + b * b) / denom).abs();
            worst = worst.max(e1).max(e2);
        }
        Ok(worst)
    })();
    outcome("sem correlation identities", CORRELATION_TOLERANCE, worst)
}

fn direct_dft(series: &[f64]) -> Vec<Complex64> {
    let n = series.len();
    let mu = series.iter().sum::<f64>() / n as f64;
    let tau = 2.0 * std::f64::consts::PI;
    (0..n)
        .map(|k| {
            (0..n)
                .map(|l| {
                    let win = 0.5 - 0.5 * (tau * l as f64 / (n - 1) as f64).cos();
                    let angle = -tau * ((k * l) % n) as f64 / n as f64;
                    Complex64::from_polar((series[l] - mu) * win, angle)
                })
                .sum()
        })
        .collect()
}

fn dft_check() -> CheckOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut worst = 0.0f64;
    for n in [8usize, 64, 257] {
        let x: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
        let fast = SpectrumPlan::new(n).spectrum(&x);
        let slow = direct_dft(&x);
        let scale = slow.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let err = fast.iter().zip(&slow).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        worst = worst.max(err / scale);
    }
    outcome("fft vs direct dft", DFT_TOLERANCE, Ok(worst))
}

pub fn run_checks(opts: &CheckOptions) -> CheckReport {
    let mut checks = Vec::new();
    gradient_checks(opts, &mut checks);
    checks.push(pobv_check(opts));
    checks.push(population_check(opts));
    checks.push(correlation_check(opts));
    checks.push(dft_check());
    CheckReport {
        passed: checks.iter().all(|c| c.passed),
        checks,
    }
}
