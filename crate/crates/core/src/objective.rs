//! Precision-matrix objectives and their analytic gradients.
//!
//! All three objectives score a unit vector `w` in the projected space
//! (`d - 1` dimensions) through the 3×3 precision matrix `Σ⁻¹` of
//! `(S, C, Y_w)`: they reward a large `|Σ⁻¹₂₃|` (Y depends on C given S) and
//! penalise `|Σ⁻¹₁₃|` (Y depends on S given C). With weight `λ` the value is
//!
//! ```text
//! f(w) = (1 − λ) · K(w) · |Σ⁻¹₂₃|ε − λ · |Σ⁻¹₁₃|ε
//! ```
//!
//! where `|x|ε = √(x² + ε)` and `K ≡ 1` except for the coherency-weighted
//! variant, where `K = |Σⱼ icoh(j)|ε`. At `λ = ½` this is exactly half of the
//! unweighted difference, so the maximisers coincide.
//!
//! Gradients use `d(Σ⁻¹) = −Σ⁻¹ (dΣ) Σ⁻¹`; only the third row/column of Σ
//! depends on `w`.

use nalgebra::{DMatrix, DVector, Matrix3};
use serde::{Deserialize, Serialize};

use crate::error::{MerlinError, Result};
use crate::spectral::{dot, log_star, SpectralBundle};
use crate::sphere::Objective;
use crate::stats::{centered, precision_from_covariance};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ObjectiveConfig {
    pub epsilon: f64,
    pub lambda: f64,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-12,
            lambda: 0.5,
        }
    }
}

impl ObjectiveConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epsilon > 0.0 && (0.0..=1.0).contains(&self.lambda) {
            Ok(())
        } else {
            Err(MerlinError::InvalidParameter(format!(
                "objective needs epsilon > 0 and 0 <= lambda <= 1, got {self:?}"
            )))
        }
    }
}

/// `√(x² + ε)`.
#[inline]
pub fn smooth_abs(x: f64, eps: f64) -> f64 {
    (x * x + eps).sqrt()
}

#[inline]
fn smooth_abs_deriv(x: f64, eps: f64) -> f64 {
    x / (x * x + eps).sqrt()
}

/// One objective evaluation with its ingredients.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub value: f64,
    pub gradient: DVector<f64>,
    /// `|Σ⁻¹₂₃|ε`
    pub dependence: f64,
    /// `|Σ⁻¹₁₃|ε`
    pub independence: f64,
    /// `Σⱼ icoh(j)` for the coherency-weighted variant.
    pub icoh_sum: Option<f64>,
}

impl Evaluation {
    /// Unweighted difference `|Σ⁻¹₂₃| − |Σ⁻¹₁₃|` (times `K` when present).
    pub fn unweighted(&self, eps: f64) -> f64 {
        let k = self.icoh_sum.map_or(1.0, |s| smooth_abs(s, eps));
        k * self.dependence - self.independence
    }
}

/// Derivatives of the w-dependent covariance entries `Σ₁₃`, `Σ₂₃`, `Σ₃₃`.
struct CovarianceJet {
    cov: Matrix3<f64>,
    d_sy: DVector<f64>,
    d_cy: DVector<f64>,
    d_yy: DVector<f64>,
}

/// Precision entries `p₂₃`, `p₁₃` and their gradients.
struct PrecisionJet {
    p_cy: f64,
    p_sy: f64,
    grad_cy: DVector<f64>,
    grad_sy: DVector<f64>,
}

impl CovarianceJet {
    fn precision(&self) -> Result<PrecisionJet> {
        let p = precision_from_covariance(&self.cov)?;
        // ∂p_ij = −[(p_i0 p_2j + p_i2 p_0j) ∂Σ₀₂ + (p_i1 p_2j + p_i2 p_1j) ∂Σ₁₂ + p_i2 p_2j ∂Σ₂₂]
        let entry_grad = |i: usize, j: usize| {
            let a_sy = p[(i, 0)] * p[(2, j)] + p[(i, 2)] * p[(0, j)];
            let a_cy = p[(i, 1)] * p[(2, j)] + p[(i, 2)] * p[(1, j)];
            let a_yy = p[(i, 2)] * p[(2, j)];
            -(&self.d_sy * a_sy + &self.d_cy * a_cy + &self.d_yy * a_yy)
        };
        Ok(PrecisionJet {
            p_cy: p[(1, 2)],
            p_sy: p[(0, 2)],
            grad_cy: entry_grad(1, 2),
            grad_sy: entry_grad(0, 2),
        })
    }
}

/// Combines precision entries (and an optional coherency factor with its
/// gradient) into the weighted objective.
fn combine(
    jet: &PrecisionJet,
    coherency: Option<(f64, &DVector<f64>)>,
    cfg: &ObjectiveConfig,
) -> Evaluation {
    let eps = cfg.epsilon;
    let dependence = smooth_abs(jet.p_cy, eps);
    let independence = smooth_abs(jet.p_sy, eps);
    let w_dep = 1.0 - cfg.lambda;
    let w_ind = cfg.lambda;

    let mut gradient = &jet.grad_cy * (smooth_abs_deriv(jet.p_cy, eps));
    let factor = match coherency {
        Some((k, grad_k)) => {
            let factor = smooth_abs(k, eps);
            gradient = gradient * factor + grad_k * (smooth_abs_deriv(k, eps) * dependence);
            factor
        }
        None => 1.0,
    };
    gradient = gradient * w_dep - &jet.grad_sy * (w_ind * smooth_abs_deriv(jet.p_sy, eps));

    Evaluation {
        value: w_dep * factor * dependence - w_ind * independence,
        gradient,
        dependence,
        independence,
        icoh_sum: coherency.map(|(k, _)| k),
    }
}

/// Moments of the fixed columns S and C.
#[derive(Debug, Clone)]
struct FixedColumns {
    s: Vec<f64>,
    c: Vec<f64>,
    var_s: f64,
    var_c: f64,
    cov_sc: f64,
}

impl FixedColumns {
    fn new(s: &[f64], c: &[f64]) -> Result<Self> {
        let m = s.len();
        if c.len() != m {
            return Err(MerlinError::DimensionMismatch(format!(
                "S has {m} samples, C has {}",
                c.len()
            )));
        }
        if m < 4 {
            return Err(MerlinError::InvalidParameter(format!(
                "need at least 4 samples, got {m}"
            )));
        }
        let s = centered(s);
        let c = centered(c);
        let denom = (m - 1) as f64;
        let var_s = dot(&s, &s) / denom;
        let var_c = dot(&c, &c) / denom;
        let cov_sc = dot(&s, &c) / denom;
        Ok(Self {
            s,
            c,
            var_s,
            var_c,
            cov_sc,
        })
    }

    fn m(&self) -> usize {
        self.s.len()
    }

    fn covariance(&self, sy: f64, cy: f64, yy: f64) -> Matrix3<f64> {
        Matrix3::new(
            self.var_s,
            self.cov_sc,
            sy,
            self.cov_sc,
            self.var_c,
            cy,
            sy,
            cy,
            yy,
        )
    }
}

/// Objective on raw mixture samples: `Y = wᵀ F` with `F` already projected.
#[derive(Debug, Clone)]
pub struct BasicObjective {
    cols: FixedColumns,
    /// `F_c S_c / (m−1)`
    cross_s: DVector<f64>,
    /// `F_c C_c / (m−1)`
    cross_c: DVector<f64>,
    /// `F_c F_cᵀ / (m−1)`
    gram: DMatrix<f64>,
    cfg: ObjectiveConfig,
}

impl BasicObjective {
    pub fn new(s: &[f64], c: &[f64], f_proj: &DMatrix<f64>, cfg: ObjectiveConfig) -> Result<Self> {
        cfg.validate()?;
        let cols = FixedColumns::new(s, c)?;
        let m = cols.m();
        if f_proj.ncols() != m {
            return Err(MerlinError::DimensionMismatch(format!(
                "projected mixture has {} samples, S has {m}",
                f_proj.ncols()
            )));
        }
        let mut fc = f_proj.clone();
        for mut row in fc.row_iter_mut() {
            let mu = row.mean();
            row.add_scalar_mut(-mu);
        }
        let denom = (m - 1) as f64;
        let cross_s = &fc * DVector::from_column_slice(&cols.s) / denom;
        let cross_c = &fc * DVector::from_column_slice(&cols.c) / denom;
        let gram = &fc * fc.transpose() / denom;
        Ok(Self {
            cols,
            cross_s,
            cross_c,
            gram,
            cfg,
        })
    }

    pub fn evaluate(&self, w: &DVector<f64>) -> Result<Evaluation> {
        check_dim(w, self.gram.nrows())?;
        let gw = &self.gram * w;
        let jet = CovarianceJet {
            cov: self
                .cols
                .covariance(self.cross_s.dot(w), self.cross_c.dot(w), w.dot(&gw)),
            d_sy: self.cross_s.clone(),
            d_cy: self.cross_c.clone(),
            d_yy: gw * 2.0,
        };
        Ok(combine(&jet.precision()?, None, &self.cfg))
    }
}

impl Objective for BasicObjective {
    fn dim(&self) -> usize {
        self.gram.nrows()
    }

    fn value_and_gradient(&self, w: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
        self.evaluate(w).map(|e| (e.value, e.gradient))
    }
}

/// Evaluates the mixture objective once.
pub fn objective_basic(
    w: &DVector<f64>,
    s: &[f64],
    c: &[f64],
    f_proj: &DMatrix<f64>,
    cfg: &ObjectiveConfig,
) -> Result<(f64, DVector<f64>)> {
    BasicObjective::new(s, c, f_proj, *cfg)?.value_and_gradient(w)
}

/// Per-trial log-bandpower `D_w` and its gradient, plus the in-band
/// combined spectra needed for coherency.
struct BandpowerJet {
    d: Vec<f64>,
    grad: Vec<DVector<f64>>,
    /// `w·F_im`, `w·F_re`, indexed `trial * bins + bin`.
    y_im: Vec<f64>,
    y_re: Vec<f64>,
}

fn bandpower_jet(bundle: &SpectralBundle, w: &DVector<f64>) -> BandpowerJet {
    let (m, bins, dim) = (bundle.trials(), bundle.bins(), bundle.components());
    let n = bundle.n_original() as f64;
    let inv_bins = 1.0 / bins as f64;
    let ws = w.as_slice();
    let mut d = Vec::with_capacity(m);
    let mut grad = Vec::with_capacity(m);
    let mut y_im = Vec::with_capacity(m * bins);
    let mut y_re = Vec::with_capacity(m * bins);
    for j in 0..m {
        let mut dj = 0.0;
        let mut gj = DVector::zeros(dim);
        for k in 0..bins {
            let fim = bundle.f_im(j, k);
            let fre = bundle.f_re(j, k);
            let a = dot(ws, fim);
            let b = dot(ws, fre);
            let r2 = a * a + b * b;
            dj += log_star(r2.sqrt() / n);
            if r2 > 0.0 {
                // ∂ log(|y|/n) = (a ∂a + b ∂b) / |y|²
                let (ca, cb) = (a / r2, b / r2);
                for (g, (xi, xr)) in gj.iter_mut().zip(fim.iter().zip(fre)) {
                    *g += ca * xi + cb * xr;
                }
            }
            y_im.push(a);
            y_re.push(b);
        }
        d.push(dj * inv_bins);
        grad.push(gj * inv_bins);
    }
    BandpowerJet {
        d,
        grad,
        y_im,
        y_re,
    }
}

/// Objective on band-limited trial features: `Y = D_w`, the per-trial
/// log-bandpower of the `w`-combination. With `with_coherency` the
/// dependence term is multiplied by `|Σⱼ icoh(j)|`.
#[derive(Debug, Clone)]
pub struct BandpowerObjective<'a> {
    cols: FixedColumns,
    bundle: &'a SpectralBundle,
    with_coherency: bool,
    cfg: ObjectiveConfig,
}

impl<'a> BandpowerObjective<'a> {
    pub fn new(
        s: &[f64],
        c_bp: &[f64],
        bundle: &'a SpectralBundle,
        with_coherency: bool,
        cfg: ObjectiveConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        let cols = FixedColumns::new(s, c_bp)?;
        if bundle.trials() != cols.m() {
            return Err(MerlinError::DimensionMismatch(format!(
                "spectral bundle has {} trials, S has {}",
                bundle.trials(),
                cols.m()
            )));
        }
        Ok(Self {
            cols,
            bundle,
            with_coherency,
            cfg,
        })
    }

    pub fn evaluate(&self, w: &DVector<f64>) -> Result<Evaluation> {
        check_dim(w, self.bundle.components())?;
        let jet = bandpower_jet(self.bundle, w);
        let m = self.cols.m();
        let dim = w.len();
        let denom = (m - 1) as f64;
        let mean_d = jet.d.iter().sum::<f64>() / m as f64;

        let mut sy = 0.0;
        let mut cy = 0.0;
        let mut yy = 0.0;
        let mut d_sy = DVector::zeros(dim);
        let mut d_cy = DVector::zeros(dim);
        let mut d_yy = DVector::zeros(dim);
        for j in 0..m {
            let dc = jet.d[j] - mean_d;
            let (s, c) = (self.cols.s[j], self.cols.c[j]);
            sy += s * dc;
            cy += c * dc;
            yy += dc * dc;
            d_sy.axpy(s, &jet.grad[j], 1.0);
            d_cy.axpy(c, &jet.grad[j], 1.0);
            d_yy.axpy(2.0 * dc, &jet.grad[j], 1.0);
        }
        let cov_jet = CovarianceJet {
            cov: self.cols.covariance(sy / denom, cy / denom, yy / denom),
            d_sy: d_sy / denom,
            d_cy: d_cy / denom,
            d_yy: d_yy / denom,
        };
        let precision = cov_jet.precision()?;
        if self.with_coherency {
            let (sum, grad) = icoh_sum_jet(self.bundle, &jet)?;
            Ok(combine(&precision, Some((sum, &grad)), &self.cfg))
        } else {
            Ok(combine(&precision, None, &self.cfg))
        }
    }

    /// Imaginary coherency between the `v`- and `w`-signals at each kept bin.
    pub fn icoh(&self, w: &DVector<f64>) -> Result<Vec<f64>> {
        check_dim(w, self.bundle.components())?;
        let jet = bandpower_jet(self.bundle, w);
        icoh_terms(self.bundle, &jet).map(|terms| terms.into_iter().map(|t| t.value).collect())
    }
}

impl Objective for BandpowerObjective<'_> {
    fn dim(&self) -> usize {
        self.bundle.components()
    }

    fn value_and_gradient(&self, w: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
        self.evaluate(w).map(|e| (e.value, e.gradient))
    }
}

struct IcohTerm {
    value: f64,
    numerator: f64,
    v_power: f64,
    w_power: f64,
}

fn icoh_terms(bundle: &SpectralBundle, jet: &BandpowerJet) -> Result<Vec<IcohTerm>> {
    let (m, bins) = (bundle.trials(), bundle.bins());
    let inv_m = 1.0 / m as f64;
    (0..bins)
        .map(|k| {
            let mut numerator = 0.0;
            let mut v_power = 0.0;
            let mut w_power = 0.0;
            for j in 0..m {
                let (vi, vr) = (bundle.v_im(j)[k], bundle.v_re(j)[k]);
                let (yi, yr) = (jet.y_im[j * bins + k], jet.y_re[j * bins + k]);
                numerator += vi * yr - vr * yi;
                v_power += vi * vi + vr * vr;
                w_power += yi * yi + yr * yr;
            }
            let (numerator, v_power, w_power) =
                (numerator * inv_m, v_power * inv_m, w_power * inv_m);
            if !(v_power > 0.0 && w_power > 0.0) {
                return Err(MerlinError::ZeroCoherencyPower(k));
            }
            Ok(IcohTerm {
                value: numerator / (v_power * w_power).sqrt(),
                numerator,
                v_power,
                w_power,
            })
        })
        .collect()
}

fn icoh_sum_jet(bundle: &SpectralBundle, jet: &BandpowerJet) -> Result<(f64, DVector<f64>)> {
    let terms = icoh_terms(bundle, jet)?;
    let (m, bins, dim) = (bundle.trials(), bundle.bins(), bundle.components());
    let inv_m = 1.0 / m as f64;
    let mut sum = 0.0;
    let mut grad = DVector::zeros(dim);
    for (k, t) in terms.iter().enumerate() {
        sum += t.value;
        // icoh = N / √(Pv Pw):  ∂icoh = ∂N / √(Pv Pw) − ½ N Pv^{-½} Pw^{-3/2} ∂Pw
        let scale_n = inv_m / (t.v_power * t.w_power).sqrt();
        let scale_p = -0.5 * t.numerator / t.v_power.sqrt() * t.w_power.powf(-1.5) * 2.0 * inv_m;
        for j in 0..m {
            let (vi, vr) = (bundle.v_im(j)[k], bundle.v_re(j)[k]);
            let (yi, yr) = (jet.y_im[j * bins + k], jet.y_re[j * bins + k]);
            let fim = bundle.f_im(j, k);
            let fre = bundle.f_re(j, k);
            for (g, (xi, xr)) in grad.iter_mut().zip(fim.iter().zip(fre)) {
                *g += scale_n * (vi * xr - vr * xi) + scale_p * (yi * xi + yr * xr);
            }
        }
    }
    Ok((sum, grad))
}

fn check_dim(w: &DVector<f64>, dim: usize) -> Result<()> {
    if w.len() == dim {
        Ok(())
    } else {
        Err(MerlinError::DimensionMismatch(format!(
            "w has length {}, objective expects {dim}",
            w.len()
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sphere::{check_gradient, restart_rng, uniform_sphere_sample};
    use crate::spectral::BinRange;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn normals(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
        (0..len).map(|_| rng.sample(StandardNormal)).collect()
    }

    fn random_basic(seed: u64, dim: usize, m: usize, cfg: ObjectiveConfig) -> BasicObjective {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = normals(&mut rng, m);
        let c: Vec<f64> = normals(&mut rng, m).iter().zip(&s).map(|(n, s)| n + s).collect();
        let mut f = DMatrix::from_fn(dim, m, |_, _| rng.sample(StandardNormal));
        for j in 0..m {
            f[(0, j)] += 0.8 * c[j];
        }
        BasicObjective::new(&s, &c, &f, cfg).unwrap()
    }

    fn random_bundle(seed: u64, dim: usize, m: usize, bins: usize) -> SpectralBundle {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let range = BinRange {
            first: 3,
            last: 3 + bins - 1,
        };
        SpectralBundle::from_parts(
            dim,
            m,
            range,
            64,
            64.0,
            normals(&mut rng, m * bins),
            normals(&mut rng, m * bins),
            normals(&mut rng, m * bins * dim),
            normals(&mut rng, m * bins * dim),
        )
        .unwrap()
    }

    #[test]
    fn basic_matches_direct_precision() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = 200;
        let s = normals(&mut rng, m);
        let c = normals(&mut rng, m);
        let f = DMatrix::from_fn(3, m, |_, _| rng.sample(StandardNormal));
        let w = DVector::from_vec(vec![0.3, -0.5, 0.8]).normalize();
        let cfg = ObjectiveConfig {
            lambda: 0.25,
            ..Default::default()
        };
        let e = BasicObjective::new(&s, &c, &f, cfg).unwrap().evaluate(&w).unwrap();
        let y: Vec<f64> = (0..m).map(|j| f.column(j).dot(&w)).collect();
        let p = crate::stats::empirical_precision(&s, &c, &y).unwrap().entries;
        let expected = 0.75 * smooth_abs(p[(1, 2)], 1e-12) - 0.25 * smooth_abs(p[(0, 2)], 1e-12);
        assert!((e.value - expected).abs() < 1e-10 * expected.abs().max(1.0));
    }

    #[test]
    fn independent_population_value_vanishes() {
        // diagonal covariance -> zero off-diagonal precision
        let jet = CovarianceJet {
            cov: Matrix3::from_diagonal(&nalgebra::Vector3::new(1.0, 2.0, 3.0)),
            d_sy: DVector::zeros(2),
            d_cy: DVector::zeros(2),
            d_yy: DVector::zeros(2),
        };
        let e = combine(&jet.precision().unwrap(), None, &ObjectiveConfig::default());
        assert!(e.value.abs() < 1e-6);
    }

    #[test]
    fn half_lambda_is_half_of_unweighted() {
        let obj = random_basic(8, 4, 300, ObjectiveConfig::default());
        let mut rng = restart_rng(8, 0);
        for _ in 0..100 {
            let w = uniform_sphere_sample(4, &mut rng);
            let e = obj.evaluate(&w).unwrap();
            assert!((e.value - 0.5 * (e.dependence - e.independence)).abs() <= 1e-12 * e.value.abs().max(1.0));
        }
    }

    #[test]
    fn smoothing_bias_bounded() {
        for eps in [1e-12, 1e-6, 1e-2] {
            for x in [-3.0, -1e-4, 0.0, 1e-7, 0.5, 1e3] {
                assert!((smooth_abs(x, eps) - f64::abs(x)).abs() <= eps.sqrt() + 1e-15);
            }
        }
    }

    #[test]
    fn basic_gradient_matches_finite_differences() {
        for lambda in [0.0, 0.5, 0.9] {
            let obj = random_basic(1, 5, 400, ObjectiveConfig { lambda, ..Default::default() });
            let mut rng = restart_rng(1, 1);
            for _ in 0..20 {
                let w = uniform_sphere_sample(5, &mut rng);
                let err = check_gradient(&obj, &w, 1e-5).unwrap();
                assert!(err < 1e-5, "lambda {lambda}: {err}");
            }
        }
    }

    #[test]
    fn basic_is_even() {
        let obj = random_basic(2, 4, 100, ObjectiveConfig::default());
        let w = DVector::from_vec(vec![0.1, 0.2, -0.7, 0.4]).normalize();
        let a = obj.value(&w).unwrap();
        let b = obj.value(&-w).unwrap();
        assert!((a - b).abs() < 1e-12 * a.abs().max(1.0));
    }

    #[test]
    fn bandpower_gradients_match_finite_differences() {
        let bundle = random_bundle(3, 4, 40, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(30);
        let s = normals(&mut rng, 40);
        let c = normals(&mut rng, 40);
        for coherent in [false, true] {
            for lambda in [0.5, 0.2] {
                let cfg = ObjectiveConfig { lambda, ..Default::default() };
                let obj = BandpowerObjective::new(&s, &c, &bundle, coherent, cfg).unwrap();
                let mut rng = restart_rng(3, 2);
                for _ in 0..20 {
                    let w = uniform_sphere_sample(4, &mut rng);
                    let err = check_gradient(&obj, &w, 1e-5).unwrap();
                    assert!(err < 1e-5, "coherent {coherent}: {err}");
                }
            }
        }
    }

    #[test]
    fn bandpower_objectives_are_even() {
        let bundle = random_bundle(5, 3, 30, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(50);
        let s = normals(&mut rng, 30);
        let c = normals(&mut rng, 30);
        let w = DVector::from_vec(vec![0.2, -0.9, 0.4]).normalize();
        for coherent in [false, true] {
            let obj = BandpowerObjective::new(&s, &c, &bundle, coherent, Default::default()).unwrap();
            let a = obj.value(&w).unwrap();
            let b = obj.value(&-w.clone()).unwrap();
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn zero_spectra_give_singular_covariance() {
        let range = BinRange { first: 1, last: 2 };
        let bundle = SpectralBundle::from_parts(
            2,
            10,
            range,
            16,
            16.0,
            vec![1.0; 20],
            vec![0.5; 20],
            vec![0.0; 40],
            vec![0.0; 40],
        )
        .unwrap();
        let s: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let c: Vec<f64> = (0..10).map(|i| ((i * 7) % 5) as f64).collect();
        let obj = BandpowerObjective::new(&s, &c, &bundle, false, Default::default()).unwrap();
        let w = DVector::from_vec(vec![1.0, 0.0]);
        assert!(matches!(obj.evaluate(&w), Err(MerlinError::SingularCovariance { .. })));
        let obj = BandpowerObjective::new(&s, &c, &bundle, true, Default::default()).unwrap();
        assert!(obj.icoh(&w).is_err());
    }

    #[test]
    fn icoh_bounded_and_zero_for_identical_signals() {
        let bundle = random_bundle(6, 3, 25, 5);
        let s: Vec<f64> = (0..25).map(|i| (i as f64).sin()).collect();
        let c: Vec<f64> = (0..25).map(|i| (i as f64 * 0.3).cos()).collect();
        let obj = BandpowerObjective::new(&s, &c, &bundle, true, Default::default()).unwrap();
        let mut rng = restart_rng(6, 0);
        for _ in 0..50 {
            let w = uniform_sphere_sample(3, &mut rng);
            assert!(obj.icoh(&w).unwrap().iter().all(|x| x.abs() <= 1.0 + 1e-12));
        }

        // w-signal equal to the v-signal in every trial
        let m = 25;
        let bins = 5;
        let mut rng = ChaCha8Rng::seed_from_u64(60);
        let v_im = normals(&mut rng, m * bins);
        let v_re = normals(&mut rng, m * bins);
        let f_im: Vec<f64> = v_im.iter().flat_map(|&x| [x, 0.0]).collect();
        let f_re: Vec<f64> = v_re.iter().flat_map(|&x| [x, 0.0]).collect();
        let range = BinRange { first: 2, last: 6 };
        let bundle =
            SpectralBundle::from_parts(2, m, range, 32, 32.0, v_im, v_re, f_im, f_re).unwrap();
        let obj = BandpowerObjective::new(&s, &c, &bundle, true, Default::default()).unwrap();
        let icoh = obj.icoh(&DVector::from_vec(vec![1.0, 0.0])).unwrap();
        assert!(icoh.iter().all(|x| x.abs() < 1e-12));
    }
}
