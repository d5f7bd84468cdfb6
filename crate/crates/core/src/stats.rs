//! Covariance and precision of the (S, C, Y) system, partial correlations,
//! and the orthonormal projector onto the complement of the extractor.

use nalgebra::{DMatrix, DVector, Matrix3};

use crate::error::{MerlinError, Result};

/// Covariances with a larger eigenvalue ratio are treated as singular.
pub const MAX_CONDITION: f64 = 1e12;

/// `(d-1) × d` matrix whose orthonormal rows span the orthogonal complement of `v`.
#[derive(Debug, Clone, PartialEq)]
pub struct Projector {
    rows: DMatrix<f64>,
}

impl Projector {
    /// Builds the projector from the Householder reflection that maps `e1` to `±v`;
    /// its remaining rows are the basis of `v⊥`.
    pub fn new(v: &DVector<f64>) -> Result<Self> {
        let d = v.len();
        if d < 2 {
            return Err(MerlinError::InvalidParameter(format!(
                "projector needs d >= 2, got {d}"
            )));
        }
        let norm = v.norm();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(MerlinError::DegenerateExtractor);
        }
        let v = v / norm;
        // u = e1 + v when v1 > 0 (reflects e1 to -v), else e1 - v; avoids cancellation.
        let mut u = if v[0] > 0.0 { v.clone() } else { -&v };
        u[0] += 1.0;
        let scale = 2.0 / u.norm_squared();
        let rows = DMatrix::from_fn(d - 1, d, |r, c| {
            let i = r + 1;
            let delta = if i == c { 1.0 } else { 0.0 };
            delta - scale * u[i] * u[c]
        });
        Ok(Self { rows })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.rows
    }

    /// Ambient dimension `d`.
    pub fn dim(&self) -> usize {
        self.rows.ncols()
    }

    /// `P x`, from `R^d` to `R^{d-1}`.
    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.rows * x
    }

    /// `Pᵀ w`, from `R^{d-1}` back to `R^d`.
    pub fn lift(&self, w: &DVector<f64>) -> DVector<f64> {
        self.rows.tr_mul(w)
    }

    /// `P F` for a `d × m` matrix.
    pub fn project_columns(&self, f: &DMatrix<f64>) -> DMatrix<f64> {
        &self.rows * f
    }
}

/// Convenience wrapper for [`Projector::new`].
pub fn projector(v: &DVector<f64>) -> Result<Projector> {
    Projector::new(v)
}

/// Precision matrix of `(S, C, Y)` in that order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThreeVarPrecision {
    pub entries: Matrix3<f64>,
    pub sample_count: usize,
}

/// `ρ_{i,j|k}` for every pair of the three variables.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PartialCorrelations {
    pub sc_given_y: f64,
    pub sy_given_c: f64,
    pub cy_given_s: f64,
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

pub fn centered(x: &[f64]) -> Vec<f64> {
    let mu = mean(x);
    x.iter().map(|v| v - mu).collect()
}

/// Unbiased (`1/(m-1)`) covariance of three columns.
pub fn covariance3(s: &[f64], c: &[f64], y: &[f64]) -> Result<Matrix3<f64>> {
    let m = s.len();
    if c.len() != m || y.len() != m {
        return Err(MerlinError::DimensionMismatch(format!(
            "columns of length {}, {}, {}",
            m,
            c.len(),
            y.len()
        )));
    }
    let cols = [centered(s), centered(c), centered(y)];
    let denom = (m - 1) as f64;
    Ok(Matrix3::from_fn(|i, j| {
        cols[i].iter().zip(&cols[j]).map(|(a, b)| a * b).sum::<f64>() / denom
    }))
}

/// Inverts a 3×3 covariance, rejecting it when it is not positive definite
/// or its condition number exceeds [`MAX_CONDITION`].
pub fn precision_from_covariance(cov: &Matrix3<f64>) -> Result<Matrix3<f64>> {
    if cov.iter().any(|x| !x.is_finite()) {
        return Err(MerlinError::NonFinite("covariance"));
    }
    let sym = (cov + cov.transpose()) * 0.5;
    let eig = sym.symmetric_eigenvalues();
    let hi = eig.max();
    let lo = eig.min();
    if !(lo > 0.0) || hi / lo > MAX_CONDITION {
        let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
        return Err(MerlinError::SingularCovariance { condition });
    }
    let inv = sym
        .try_inverse()
        .ok_or(MerlinError::SingularCovariance {
            condition: f64::INFINITY,
        })?;
    Ok((inv + inv.transpose()) * 0.5)
}

pub fn empirical_precision(s: &[f64], c: &[f64], y: &[f64]) -> Result<ThreeVarPrecision> {
    let m = s.len();
    if m < 4 {
        return Err(MerlinError::InvalidParameter(format!(
            "empirical precision needs m >= 4 samples, got {m}"
        )));
    }
    let cov = covariance3(s, c, y)?;
    Ok(ThreeVarPrecision {
        entries: precision_from_covariance(&cov)?,
        sample_count: m,
    })
}

pub fn partial_correlations(p: &ThreeVarPrecision) -> Result<PartialCorrelations> {
    let e = &p.entries;
    if !(e[(0, 0)] > 0.0 && e[(1, 1)] > 0.0 && e[(2, 2)] > 0.0) {
        return Err(MerlinError::NonPositiveDiagonal);
    }
    let rho = |i: usize, j: usize| (-e[(i, j)] / (e[(i, i)] * e[(j, j)]).sqrt()).clamp(-1.0, 1.0);
    Ok(PartialCorrelations {
        sc_given_y: rho(0, 1),
        sy_given_c: rho(0, 2),
        cy_given_s: rho(1, 2),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(rng: &mut ChaCha8Rng, m: usize) -> Vec<f64> {
        (0..m).map(|_| StandardNormal.sample(rng)).collect()
    }

    fn corr(x: &[f64], y: &[f64]) -> f64 {
        let (x, y) = (centered(x), centered(y));
        let xy: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
        let xx: f64 = x.iter().map(|a| a * a).sum();
        let yy: f64 = y.iter().map(|a| a * a).sum();
        xy / (xx * yy).sqrt()
    }

    // ρ_{xy|z} = (ρxy − ρxz ρyz) / √((1 − ρxz²)(1 − ρyz²))
    fn recursive_partial(x: &[f64], y: &[f64], z: &[f64]) -> f64 {
        let (rxy, rxz, ryz) = (corr(x, y), corr(x, z), corr(y, z));
        (rxy - rxz * ryz) / ((1.0 - rxz * rxz) * (1.0 - ryz * ryz)).sqrt()
    }

    #[test]
    fn projector_axis_aligned() {
        let v = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        let p = projector(&v).unwrap();
        let m = p.matrix();
        for (r, axis) in [(0, 1), (1, 2)] {
            for c in 0..3 {
                let expected = if c == axis { 1.0 } else { 0.0 };
                assert!((m[(r, c)].abs() - expected).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn projector_two_dimensional() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let p = projector(&DVector::from_vec(vec![h, h])).unwrap();
        let row = p.matrix().row(0);
        assert!((row[0].abs() - h).abs() < 1e-15);
        assert!((row[0] + row[1]).abs() < 1e-15);
    }

    #[test]
    fn projector_rejects_one_dimension() {
        assert!(projector(&DVector::from_vec(vec![1.0])).is_err());
    }

    proptest! {
        #[test]
        fn projector_is_orthonormal_and_annihilates_v(
            raw in prop::collection::vec(-1.0f64..1.0, 2..12)
        ) {
            let v = DVector::from_vec(raw);
            prop_assume!(v.norm() > 1e-3);
            let v = v.normalize();
            let p = projector(&v).unwrap();
            let gram = p.matrix() * p.matrix().transpose();
            let eye = DMatrix::<f64>::identity(v.len() - 1, v.len() - 1);
            prop_assert!((gram - eye).amax() < 1e-12);
            prop_assert!(p.apply(&v).amax() < 1e-12);
        }

        #[test]
        fn precision_ignores_column_offsets(seed in 0u64..500, a in -50.0f64..50.0, b in -50.0f64..50.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = gaussian(&mut rng, 50);
            let c = gaussian(&mut rng, 50);
            let y = gaussian(&mut rng, 50);
            let p0 = empirical_precision(&s, &c, &y).unwrap();
            let c2: Vec<f64> = c.iter().map(|x| x + a).collect();
            let y2: Vec<f64> = y.iter().map(|x| x + b).collect();
            let p1 = empirical_precision(&s, &c2, &y2).unwrap();
            prop_assert!((p0.entries - p1.entries).amax() < 1e-9 * p0.entries.amax());
        }

        #[test]
        fn partials_match_recursive_formula(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = gaussian(&mut rng, 200);
            let c: Vec<f64> = gaussian(&mut rng, 200).iter().zip(&s).map(|(n, s)| n + 0.7 * s).collect();
            let y: Vec<f64> = gaussian(&mut rng, 200).iter().zip(&c).map(|(n, c)| n - 0.4 * c).collect();
            let pc = partial_correlations(&empirical_precision(&s, &c, &y).unwrap()).unwrap();
            prop_assert!((pc.sc_given_y - recursive_partial(&s, &c, &y)).abs() < 1e-10);
            prop_assert!((pc.sy_given_c - recursive_partial(&s, &y, &c)).abs() < 1e-10);
            prop_assert!((pc.cy_given_s - recursive_partial(&c, &y, &s)).abs() < 1e-10);
        }
    }

    #[test]
    fn independent_columns_give_identity_precision() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let m = 100_000;
        let (s, c, y) = (gaussian(&mut rng, m), gaussian(&mut rng, m), gaussian(&mut rng, m));
        let p = empirical_precision(&s, &c, &y).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let target = if i == j { 1.0 } else { 0.0 };
                assert!((p.entries[(i, j)] - target).abs() < 0.02, "{:?}", p.entries);
            }
        }
    }

    #[test]
    fn affine_dependence_is_singular() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = gaussian(&mut rng, 100);
        let c = gaussian(&mut rng, 100);
        let y: Vec<f64> = c.iter().map(|x| 2.0 * x - 1.0).collect();
        assert!(matches!(
            empirical_precision(&s, &c, &y),
            Err(MerlinError::SingularCovariance { .. })
        ));
    }

    #[test]
    fn chain_population_precision_has_zero_pattern() {
        // S -> C -> Y with unit coefficients and unit noise.
        let cov = Matrix3::new(1.0, 1.0, 1.0, 1.0, 2.0, 2.0, 1.0, 2.0, 3.0);
        let p = ThreeVarPrecision {
            entries: precision_from_covariance(&cov).unwrap(),
            sample_count: usize::MAX,
        };
        assert!(p.entries[(0, 2)].abs() < 1e-12);
        let pc = partial_correlations(&p).unwrap();
        assert!(pc.sy_given_c.abs() < 1e-12);
        assert!(pc.cy_given_s.abs() > 0.1);
    }

    #[test]
    fn chain_empirical_entry_within_three_standard_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = 100_000;
        let s = gaussian(&mut rng, m);
        let c: Vec<f64> = gaussian(&mut rng, m).iter().zip(&s).map(|(n, s)| n + s).collect();
        let y: Vec<f64> = gaussian(&mut rng, m).iter().zip(&c).map(|(n, c)| n + c).collect();
        let pc = partial_correlations(&empirical_precision(&s, &c, &y).unwrap()).unwrap();
        // standard error of a partial correlation near zero is ~1/sqrt(m - 3)
        assert!(pc.sy_given_c.abs() < 3.0 / ((m - 3) as f64).sqrt());
    }

    #[test]
    fn identity_precision_partials_vanish() {
        let p = ThreeVarPrecision {
            entries: Matrix3::identity(),
            sample_count: 10,
        };
        let pc = partial_correlations(&p).unwrap();
        assert_eq!(
            (pc.sc_given_y, pc.sy_given_c, pc.cy_given_s),
            (0.0, 0.0, 0.0)
        );
        let bad = ThreeVarPrecision {
            entries: Matrix3::from_diagonal(&nalgebra::Vector3::new(1.0, 0.0, 1.0)),
            sample_count: 10,
        };
        assert!(matches!(
            partial_correlations(&bad),
            Err(MerlinError::NonPositiveDiagonal)
        ));
    }
}
