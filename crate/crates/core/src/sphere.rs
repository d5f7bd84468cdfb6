//! Steepest ascent with backtracking line search on the unit sphere.
//!
//! Iterates are kept on the sphere by renormalisation. Each restart draws its
//! starting point from its own ChaCha stream (stream = restart index), so
//! restarts can run in any order and still merge to the same result.

use nalgebra::DVector;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{MerlinError, Result};
use crate::par;

/// A differentiable scalar function on `R^dim`.
pub trait Objective: Sync {
    fn dim(&self) -> usize;

    /// Value and Euclidean gradient at `w`.
    fn value_and_gradient(&self, w: &DVector<f64>) -> Result<(f64, DVector<f64>)>;

    fn value(&self, w: &DVector<f64>) -> Result<f64> {
        self.value_and_gradient(w).map(|(f, _)| f)
    }
}

/// Adapts a closure `w -> (f, grad)` into an [`Objective`].
pub struct FnObjective<F> {
    dim: usize,
    func: F,
}

impl<F> FnObjective<F>
where
    F: Fn(&DVector<f64>) -> (f64, DVector<f64>) + Sync,
{
    pub fn new(dim: usize, func: F) -> Self {
        Self { dim, func }
    }
}

impl<F> Objective for FnObjective<F>
where
    F: Fn(&DVector<f64>) -> (f64, DVector<f64>) + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn value_and_gradient(&self, w: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
        Ok((self.func)(w))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "camelCase")]
pub struct OptConfig {
    pub max_iters: usize,
    pub min_step_size: f64,
    pub min_grad_norm: f64,
    pub armijo_slope: f64,
    pub backtrack_factor: f64,
    pub initial_step: f64,
    pub restarts: usize,
    pub seed: u64,
    pub record_trace: bool,
}

impl Default for OptConfig {
    fn default() -> Self {
        Self {
            max_iters: 500,
            min_step_size: 1e-10,
            min_grad_norm: 1e-10,
            armijo_slope: 1e-4,
            backtrack_factor: 0.5,
            initial_step: 1.0,
            restarts: 10,
            seed: 0,
            record_trace: false,
        }
    }
}

impl OptConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.max_iters >= 1
            && self.backtrack_factor > 0.0
            && self.backtrack_factor < 1.0
            && self.armijo_slope > 0.0
            && self.armijo_slope < 1.0
            && self.restarts >= 1
            && self.initial_step > 0.0
            && self.min_step_size >= 0.0
            && self.min_grad_norm >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(MerlinError::InvalidParameter(format!(
                "invalid optimiser configuration {self:?}"
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Termination {
    GradNorm,
    StepSize,
    MaxIters,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub value: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct OptResult {
    pub w_star: DVector<f64>,
    pub f_star: f64,
    pub iterations: usize,
    pub termination: Termination,
    pub restart_index: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace: Option<Vec<TraceEntry>>,
}

/// Standard-normal vector scaled to unit norm.
pub fn uniform_sphere_sample<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> DVector<f64> {
    loop {
        let x = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        let norm = x.norm();
        if norm > 0.0 {
            return x / norm;
        }
    }
}

/// RNG for one restart: `seed` selects the key, the restart index the stream.
pub fn restart_rng(seed: u64, restart: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(restart as u64);
    rng
}

/// Starting point used by restart `restart`.
pub fn restart_start(seed: u64, restart: usize, dim: usize) -> DVector<f64> {
    uniform_sphere_sample(dim, &mut restart_rng(seed, restart))
}

fn checked(objective: &dyn Objective, w: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
    let (f, g) = objective.value_and_gradient(w)?;
    if !f.is_finite() || g.iter().any(|x| !x.is_finite()) {
        return Err(MerlinError::NonFiniteObjective);
    }
    Ok((f, g))
}

/// Tangent component of `g` at the unit vector `w`.
pub fn tangent(w: &DVector<f64>, g: &DVector<f64>) -> DVector<f64> {
    g - w * g.dot(w)
}

/// One steepest-ascent run from `start`.
pub fn ascend_from(
    objective: &dyn Objective,
    start: DVector<f64>,
    cfg: &OptConfig,
    restart_index: usize,
) -> Result<OptResult> {
    let mut w = start.normalize();
    let (mut f, mut g) = checked(objective, &w)?;
    let mut trace = cfg.record_trace.then(Vec::new);
    let mut iterations = 0;
    let mut previous_f: Option<f64> = None;

    let termination = loop {
        let direction = tangent(&w, &g);
        let grad_norm = direction.norm();
        if let Some(t) = trace.as_mut() {
            t.push(TraceEntry {
                value: f,
                grad_norm,
            });
        }
        if grad_norm < cfg.min_grad_norm {
            break Termination::GradNorm;
        }
        if iterations >= cfg.max_iters {
            break Termination::MaxIters;
        }

        let slope = grad_norm * grad_norm;
        // First trial move has length `initial_step`; afterwards guess from the
        // last increase, 1.1 * 2 (f - f_prev) / slope.
        let mut step = match previous_f {
            Some(prev) if f > prev => 2.2 * (f - prev) / slope,
            _ => cfg.initial_step / grad_norm,
        };
        let accepted = loop {
            if step * grad_norm < cfg.min_step_size {
                break None;
            }
            let candidate = (&w + &direction * step).normalize();
            let (fc, gc) = checked(objective, &candidate)?;
            if fc >= f + cfg.armijo_slope * step * slope {
                break Some((candidate, fc, gc));
            }
            step *= cfg.backtrack_factor;
        };

        let Some((candidate, fc, gc)) = accepted else {
            break Termination::StepSize;
        };
        let moved = (&candidate - &w).norm();
        previous_f = Some(f);
        w = candidate;
        f = fc;
        g = gc;
        iterations += 1;
        if moved < cfg.min_step_size {
            break Termination::StepSize;
        }
    };

    Ok(OptResult {
        w_star: w,
        f_star: f,
        iterations,
        termination,
        restart_index,
        trace,
    })
}

/// Maximises `objective` over the unit sphere in `R^dim` with `cfg.restarts`
/// random starts, returning the restart with the largest final value (ties go
/// to the lowest restart index). A restart that fails is skipped; if all fail
/// the last error is returned.
///
/// For `dim == 1` the sphere is `{+1, -1}` and both points are evaluated.
pub fn maximize_on_sphere(objective: &dyn Objective, cfg: &OptConfig) -> Result<OptResult> {
    cfg.validate()?;
    let dim = objective.dim();
    if dim == 0 {
        return Err(MerlinError::InvalidParameter("sphere of dimension 0".into()));
    }
    if dim == 1 {
        return maximize_on_two_points(objective);
    }

    let runs = par::map_indexed(cfg.restarts, |r| {
        ascend_from(objective, restart_start(cfg.seed, r, dim), cfg, r)
    });
    merge_restarts(runs)
}

fn merge_restarts(runs: Vec<Result<OptResult>>) -> Result<OptResult> {
    let mut best: Option<OptResult> = None;
    let mut last_err = None;
    for run in runs {
        match run {
            Ok(r) => {
                if best.as_ref().is_none_or(|b| r.f_star > b.f_star) {
                    best = Some(r);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    best.ok_or_else(|| {
        MerlinError::AllRestartsFailed(Box::new(
            last_err.unwrap_or(MerlinError::NonFiniteObjective),
        ))
    })
}

fn maximize_on_two_points(objective: &dyn Objective) -> Result<OptResult> {
    let candidates = [1.0, -1.0].map(|s| {
        let w = DVector::from_element(1, s);
        checked(objective, &w).map(|(f, _)| (w, f))
    });
    let runs = candidates
        .into_iter()
        .enumerate()
        .map(|(i, c)| {
            c.map(|(w, f)| OptResult {
                w_star: w,
                f_star: f,
                iterations: 0,
                termination: Termination::GradNorm,
                restart_index: i,
                trace: None,
            })
        })
        .collect();
    merge_restarts(runs)
}

/// Largest relative discrepancy between the supplied gradient and a
/// fourth-order central difference along each coordinate, over components
/// whose magnitude exceeds `1e-8`.
pub fn check_gradient(objective: &dyn Objective, w: &DVector<f64>, h: f64) -> Result<f64> {
    if !(h > 1e-8 && h < 1e-3) {
        return Err(MerlinError::InvalidParameter(format!(
            "finite-difference scale {h} outside (1e-8, 1e-3)"
        )));
    }
    let (_, grad) = checked(objective, w)?;
    let eval = |k: usize, delta: f64| -> Result<f64> {
        let mut x = w.clone();
        x[k] += delta;
        let (f, _) = checked(objective, &x)?;
        Ok(f)
    };
    let mut worst = 0.0f64;
    for k in 0..w.len() {
        let fd = (-eval(k, 2.0 * h)? + 8.0 * eval(k, h)? - 8.0 * eval(k, -h)? + eval(k, -2.0 * h)?)
            / (12.0 * h);
        let scale = grad[k].abs().max(fd.abs());
        if scale > 1e-8 {
            worst = worst.max((grad[k] - fd).abs() / scale);
        }
    }
    Ok(worst)
}
