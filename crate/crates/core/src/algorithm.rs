//! End-to-end recovery: read out the cause variable with `v`, project the
//! mixture onto `v⊥`, maximise the chosen objective on the sphere there, and
//! map the optimum back to channel space.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataset::{BandSpec, Dataset2D, Dataset3D};
use crate::error::{MerlinError, Result};
use crate::objective::{BandpowerObjective, BasicObjective, ObjectiveConfig};
use crate::spectral::{preprocess, SpectralBundle};
use crate::sphere::{maximize_on_sphere, OptConfig, OptResult};
use crate::stats::Projector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    /// Precision objective on raw mixture samples.
    #[serde(rename = "basic")]
    Basic,
    /// Precision objective on per-trial log-bandpower.
    #[serde(rename = "bp")]
    Bp,
    /// Bandpower objective weighted by summed imaginary coherency with the cause.
    #[serde(rename = "bp+", alias = "bpPlus")]
    BpPlus,
}

impl Variant {
    pub fn needs_timeseries(self) -> bool {
        !matches!(self, Variant::Basic)
    }
}

impl std::str::FromStr for Variant {
    type Err = MerlinError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "basic" => Ok(Variant::Basic),
            "bp" => Ok(Variant::Bp),
            "bp+" | "bpPlus" | "bpplus" => Ok(Variant::BpPlus),
            other => Err(MerlinError::Parse(format!(
                "variant must be basic, bp or bp+, got {other:?}"
            ))),
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Variant::Basic => "basic",
            Variant::Bp => "bp",
            Variant::BpPlus => "bp+",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MerlinResult {
    /// Recovered unit vector in channel space, orthogonal to `v`.
    pub w: DVector<f64>,
    pub objective: f64,
    pub diagnostics: OptResult,
    pub variant: Variant,
}

fn lift(projector: &Projector, opt: OptResult, variant: Variant) -> MerlinResult {
    let w = projector.lift(&opt.w_star).normalize();
    MerlinResult {
        w,
        objective: opt.f_star,
        diagnostics: opt,
        variant,
    }
}

/// Cause readout `C = Fᵀv`, projected mixture `P(v) F` and the projector.
pub fn split_mixture(ds: &Dataset2D) -> Result<(Vec<f64>, DMatrix<f64>, Projector)> {
    let projector = Projector::new(ds.v())?;
    let c = (ds.f().transpose() * ds.v()).as_slice().to_vec();
    let f_proj = projector.project_columns(ds.f());
    Ok((c, f_proj, projector))
}

/// Builds the objective that [`merlin_basic`] maximises.
pub fn basic_objective(ds: &Dataset2D, cfg: &ObjectiveConfig) -> Result<(BasicObjective, Projector)> {
    let (c, f_proj, projector) = split_mixture(ds)?;
    let obj = BasicObjective::new(ds.s().as_slice(), &c, &f_proj, *cfg)?;
    Ok((obj, projector))
}

pub fn merlin_basic(ds: &Dataset2D, cfg: &ObjectiveConfig, opt: &OptConfig) -> Result<MerlinResult> {
    if ds.d() > ds.m() {
        return Err(MerlinError::TooFewSamples {
            d: ds.d(),
            m: ds.m(),
        });
    }
    let (obj, projector) = basic_objective(ds, cfg)?;
    let best = maximize_on_sphere(&obj, opt)?;
    Ok(lift(&projector, best, Variant::Basic))
}

/// Band features shared by both bandpower variants.
pub struct BandFeatures {
    pub bundle: SpectralBundle,
    pub c_bp: Vec<f64>,
    pub projector: Projector,
}

impl BandFeatures {
    pub fn new(ds: &Dataset3D, band: &BandSpec) -> Result<Self> {
        let bundle = preprocess(ds, band)?;
        let c_bp = bundle.v_log_bandpower();
        Ok(Self {
            bundle,
            c_bp,
            projector: Projector::new(ds.v())?,
        })
    }

    pub fn objective<'a>(
        &'a self,
        s: &DVector<f64>,
        with_coherency: bool,
        cfg: &ObjectiveConfig,
    ) -> Result<BandpowerObjective<'a>> {
        BandpowerObjective::new(s.as_slice(), &self.c_bp, &self.bundle, with_coherency, *cfg)
    }
}

fn merlin_band(
    ds: &Dataset3D,
    band: &BandSpec,
    cfg: &ObjectiveConfig,
    opt: &OptConfig,
    variant: Variant,
) -> Result<MerlinResult> {
    let features = BandFeatures::new(ds, band)?;
    let obj = features.objective(ds.s(), variant == Variant::BpPlus, cfg)?;
    let best = maximize_on_sphere(&obj, opt)?;
    Ok(lift(&features.projector, best, variant))
}

pub fn merlin_bp(
    ds: &Dataset3D,
    band: &BandSpec,
    cfg: &ObjectiveConfig,
    opt: &OptConfig,
) -> Result<MerlinResult> {
    merlin_band(ds, band, cfg, opt, Variant::Bp)
}

pub fn merlin_bpplus(
    ds: &Dataset3D,
    band: &BandSpec,
    cfg: &ObjectiveConfig,
    opt: &OptConfig,
) -> Result<MerlinResult> {
    merlin_band(ds, band, cfg, opt, Variant::BpPlus)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::andi;
    use crate::synth::{gen_dataset, gen_identity_dataset, gen_timeseries_dataset, StimulusKind, SynthParams};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn params(d: usize, m: usize, a: f64, seed: u64) -> SynthParams {
        SynthParams {
            d,
            m,
            a,
            b: 0.0,
            stimulus: StimulusKind::Gaussian,
            seed,
        }
    }

    #[test]
    fn recovers_ground_truth_on_easy_data() {
        let ds = gen_dataset(&params(5, 10_000, 0.1, 3)).unwrap();
        let res = merlin_basic(&ds, &ObjectiveConfig::default(), &OptConfig::default()).unwrap();
        assert!(andi(&res.w, ds.w_g0().unwrap()).unwrap() < 0.05);
        assert!((res.w.norm() - 1.0).abs() < 1e-10);
        assert!(res.w.dot(ds.v()).abs() < 1e-10);
    }

    #[test]
    fn pure_noise_gives_small_objective() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (d, m) = (5, 10_000);
        let s = DVector::from_fn(m, |_, _| rng.sample(StandardNormal));
        let mut f = DMatrix::from_fn(d, m, |_, _| rng.sample(StandardNormal));
        for j in 0..m {
            f[(0, j)] += s[j];
        }
        let v = DVector::from_fn(d, |i, _| if i == 0 { 1.0 } else { 0.0 });
        let ds = Dataset2D::new(s, f, v, None).unwrap();
        let res = merlin_basic(&ds, &ObjectiveConfig::default(), &OptConfig::default()).unwrap();
        assert!(res.objective.abs() < 0.1, "{}", res.objective);
    }

    #[test]
    fn refuses_more_channels_than_samples() {
        let ds = gen_dataset(&params(100, 50, 1.0, 1)).unwrap();
        let err = merlin_basic(&ds, &ObjectiveConfig::default(), &OptConfig::default()).unwrap_err();
        assert!(matches!(err, MerlinError::TooFewSamples { d: 100, m: 50 }));
    }

    #[test]
    fn two_channels_evaluate_both_signs() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let m = 500;
        let s = DVector::from_fn(m, |_, _| rng.sample(StandardNormal));
        let f = DMatrix::from_fn(2, m, |i, j| {
            let n: f64 = rng.sample(StandardNormal);
            if i == 0 { s[j] + n } else { n }
        });
        let ds = Dataset2D::new(s, f, DVector::from_vec(vec![1.0, 0.0]), None).unwrap();
        let res = merlin_basic(&ds, &ObjectiveConfig::default(), &OptConfig::default()).unwrap();
        assert_eq!(res.w.len(), 2);
        assert!(res.w[0].abs() < 1e-12);
        assert_eq!(res.w[1].abs(), 1.0);
    }

    #[test]
    fn bandpower_objective_agrees_with_basic_at_ground_truth() {
        let p = params(5, 300, 0.1, 4);
        let band = BandSpec::new(55.0, 85.0);
        let base = gen_identity_dataset(&p).unwrap();
        let ts = gen_timeseries_dataset(&p, 256, 250.0, &band, 4).unwrap();
        let cfg = ObjectiveConfig::default();
        let features = BandFeatures::new(&ts, &band).unwrap();
        let bp = features.objective(ts.s(), false, &cfg).unwrap();
        let (basic, projector) = basic_objective(&base, &cfg).unwrap();
        let w = projector.apply(base.w_g0().unwrap());
        let a = bp.evaluate(&w).unwrap().value;
        let b = basic.evaluate(&w).unwrap().value;
        assert!((a - b).abs() < 0.05 * b.abs(), "{a} vs {b}");
    }

    #[test]
    fn band_without_content_is_singular() {
        // constant trials carry no spectral content anywhere
        let (d, m, n) = (3, 10, 64);
        let tensor = crate::dataset::TrialTensor::zeros(d, m, n);
        let s = DVector::from_fn(m, |j, _| j as f64);
        let v = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        let ds = Dataset3D::new(s, tensor, v, 64.0, None).unwrap();
        let err = merlin_bp(&ds, &BandSpec::new(5.0, 20.0), &ObjectiveConfig::default(), &OptConfig::default())
            .unwrap_err();
        assert_eq!(err.kind(), "singular_covariance");
    }
}
