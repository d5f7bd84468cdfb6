//! Grid sweeps over synthetic benchmark parameters.
//!
//! Every (cell, run) pair gets a fresh dataset whose seed is derived from the
//! base seed with a SplitMix64 mix, so results do not depend on how runs are
//! scheduled across workers.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::algorithm::{merlin_basic, merlin_bp, merlin_bpplus, MerlinResult, Variant};
use crate::dataset::BandSpec;
use crate::error::{MerlinError, Result};
use crate::metrics::metric_report;
use crate::objective::ObjectiveConfig;
use crate::par;
use crate::sphere::{OptConfig, Termination};
use crate::synth::{gen_dataset, gen_timeseries_dataset, StimulusKind, SynthParams};

/// Cells with more failed runs than this fraction are flagged.
pub const FAILURE_FLAG_FRACTION: f64 = 0.2;

pub const SEED_DERIVATION: &str =
    "seed = splitmix64(splitmix64(splitmix64(baseSeed) ^ cellIndex) ^ runIndex); \
     optimiser seed = splitmix64(seed ^ 0x6f7074), carrier seed = splitmix64(seed ^ 0x636172)";

/// One step of SplitMix64.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn run_seed(base: u64, cell: usize, run: usize) -> u64 {
    splitmix64(splitmix64(splitmix64(base) ^ cell as u64) ^ run as u64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    #[serde(rename = "T")]
    pub stimulus: Vec<StimulusKind>,
    pub d: Vec<usize>,
    pub m: Vec<usize>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeseriesParams {
    pub n: usize,
    pub fs: f64,
    pub band: BandSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SweepSpec {
    pub variant: Variant,
    pub grid: Grid,
    #[serde(default = "default_runs")]
    pub runs_per_cell: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default)]
    pub opt: OptConfig,
    #[serde(default)]
    pub objective: ObjectiveConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timeseries: Option<TimeseriesParams>,
}

fn default_runs() -> usize {
    20
}

impl SweepSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: SweepSpec =
            serde_json::from_str(text).map_err(|e| MerlinError::Parse(format!("sweep spec: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.runs_per_cell < 1 {
            return Err(MerlinError::InvalidParameter("runsPerCell must be >= 1".into()));
        }
        self.opt.validate()?;
        self.objective.validate()?;
        if self.variant.needs_timeseries() && self.timeseries.is_none() {
            return Err(MerlinError::InvalidParameter(format!(
                "variant {} needs \"timeseries\" parameters",
                self.variant
            )));
        }
        Ok(())
    }

    /// Grid cells in row-major order over (T, d, m, a, b).
    pub fn cells(&self) -> Vec<CellParams> {
        let g = &self.grid;
        let mut out = Vec::new();
        for &stimulus in &g.stimulus {
            for &d in &g.d {
                for &m in &g.m {
                    for &a in &g.a {
                        for &b in &g.b {
                            out.push(CellParams { stimulus, d, m, a, b });
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellParams {
    #[serde(rename = "T")]
    pub stimulus: StimulusKind,
    pub d: usize,
    pub m: usize,
    pub a: f64,
    pub b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunError {
    pub kind: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RunRecord {
    pub run: usize,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub andi: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pobv: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub objective: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub termination: Option<Termination>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<RunError>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quantiles {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

impl Quantiles {
    /// Five-number summary with linear interpolation between order statistics.
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let at = |q: f64| {
            let pos = q * (v.len() - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
        };
        Some(Self {
            min: v[0],
            q1: at(0.25),
            median: at(0.5),
            q3: at(0.75),
            max: v[v.len() - 1],
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub andi: Quantiles,
    pub pobv: Quantiles,
    pub objective: Quantiles,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CellResult {
    pub index: usize,
    pub params: CellParams,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub skipped: Option<String>,
    pub runs: Vec<RunRecord>,
    pub failures: usize,
    pub flagged: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub summary: Option<CellSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SweepResult {
    pub spec: SweepSpec,
    pub seed_derivation: String,
    pub cells: Vec<CellResult>,
}

fn skip_reason(variant: Variant, cell: &CellParams) -> Option<String> {
    if cell.d < 5 {
        return Some(format!("d = {} < 5 is not a valid synthetic dataset", cell.d));
    }
    if cell.m < 4 {
        return Some(format!("m = {} < 4 samples", cell.m));
    }
    if variant == Variant::Basic && cell.d > cell.m {
        return Some(format!(
            "basic variant needs d <= m (d = {}, m = {})",
            cell.d, cell.m
        ));
    }
    None
}

/// Generates the run's dataset, recovers `w`, and returns it with the ground truth.
fn execute_run(
    spec: &SweepSpec,
    cell: &CellParams,
    seed: u64,
) -> Result<(MerlinResult, nalgebra::DVector<f64>)> {
    let params = SynthParams {
        d: cell.d,
        m: cell.m,
        a: cell.a,
        b: cell.b,
        stimulus: cell.stimulus,
        seed,
    };
    let opt = OptConfig {
        seed: splitmix64(seed ^ 0x6f7074),
        ..spec.opt
    };
    let missing_truth = || MerlinError::InvalidParameter("dataset lacks ground truth".into());
    match spec.variant {
        Variant::Basic => {
            let ds = gen_dataset(&params)?;
            let res = merlin_basic(&ds, &spec.objective, &opt)?;
            Ok((res, ds.w_g0().cloned().ok_or_else(missing_truth)?))
        }
        Variant::Bp | Variant::BpPlus => {
            let ts = spec.timeseries.ok_or_else(|| {
                MerlinError::InvalidParameter("missing timeseries parameters".into())
            })?;
            let ds = gen_timeseries_dataset(
                &params,
                ts.n,
                ts.fs,
                &ts.band,
                splitmix64(seed ^ 0x636172),
            )?;
            let res = if spec.variant == Variant::Bp {
                merlin_bp(&ds, &ts.band, &spec.objective, &opt)?
            } else {
                merlin_bpplus(&ds, &ts.band, &spec.objective, &opt)?
            };
            Ok((res, ds.w_g0().cloned().ok_or_else(missing_truth)?))
        }
    }
}

fn record(spec: &SweepSpec, cell: &CellParams, run: usize, seed: u64) -> RunRecord {
    let outcome = execute_run(spec, cell, seed)
        .and_then(|(res, truth)| Ok((metric_report(&res.w, &truth)?, res)));
    match outcome {
        Ok((metrics, res)) => RunRecord {
            run,
            seed,
            andi: Some(metrics.andi),
            pobv: Some(metrics.pobv),
            objective: Some(res.objective),
            termination: Some(res.diagnostics.termination),
            error: None,
        },
        Err(e) => RunRecord {
            run,
            seed,
            andi: None,
            pobv: None,
            objective: None,
            termination: None,
            error: Some(RunError {
                kind: e.kind().to_string(),
                message: e.to_string(),
            }),
        },
    }
}

/// Runs every cell of `spec` with at most `parallelism` workers.
pub fn run_sweep(spec: &SweepSpec, parallelism: Option<usize>) -> Result<SweepResult> {
    spec.validate()?;
    let cells = spec.cells();
    let reps = spec.runs_per_cell;
    let tasks: Vec<(usize, usize)> = cells
        .iter()
        .enumerate()
        .filter(|(_, c)| skip_reason(spec.variant, c).is_none())
        .flat_map(|(ci, _)| (0..reps).map(move |r| (ci, r)))
        .collect();

    let records = par::with_threads(parallelism, || {
        par::map_indexed(tasks.len(), |t| {
            let (ci, r) = tasks[t];
            record(spec, &cells[ci], r, run_seed(spec.base_seed, ci, r))
        })
    });

    let mut per_cell: Vec<Vec<RunRecord>> = vec![Vec::new(); cells.len()];
    for ((ci, _), rec) in tasks.iter().zip(records) {
        per_cell[*ci].push(rec);
    }

    let cells = cells
        .into_iter()
        .zip(per_cell)
        .enumerate()
        .map(|(index, (params, runs))| {
            let skipped = skip_reason(spec.variant, &params);
            let failures = runs.iter().filter(|r| r.error.is_some()).count();
            let flagged = skipped.is_none() && failures as f64 > FAILURE_FLAG_FRACTION * reps as f64;
            let pick = |f: fn(&RunRecord) -> Option<f64>| runs.iter().filter_map(f).collect::<Vec<_>>();
            let summary = match (
                Quantiles::of(&pick(|r| r.andi)),
                Quantiles::of(&pick(|r| r.pobv)),
                Quantiles::of(&pick(|r| r.objective)),
            ) {
                (Some(andi), Some(pobv), Some(objective)) => Some(CellSummary {
                    andi,
                    pobv,
                    objective,
                }),
                _ => None,
            };
            CellResult {
                index,
                params,
                skipped,
                runs,
                failures,
                flagged,
                summary,
            }
        })
        .collect();

    Ok(SweepResult {
        spec: spec.clone(),
        seed_derivation: SEED_DERIVATION.to_string(),
        cells,
    })
}

impl SweepResult {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| MerlinError::Parse(format!("results: {e}")))
    }

    /// One row per cell: grid values, status, and quantiles of each metric.
    pub fn summary_csv(&self) -> String {
        let mut out = String::from("variant,T,d,m,a,b,status,runs,failures,flagged");
        for metric in ["andi", "pobv", "objective"] {
            for q in ["min", "q1", "median", "q3", "max"] {
                let _ = write!(out, ",{metric}_{q}");
            }
        }
        out.push('\n');
        for cell in &self.cells {
            let p = &cell.params;
            let status = if cell.skipped.is_some() { "skipped" } else { "ok" };
            let _ = write!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                self.spec.variant,
                p.stimulus,
                p.d,
                p.m,
                p.a,
                p.b,
                status,
                cell.runs.len(),
                cell.failures,
                cell.flagged
            );
            for q in [
                cell.summary.as_ref().map(|s| s.andi),
                cell.summary.as_ref().map(|s| s.pobv),
                cell.summary.as_ref().map(|s| s.objective),
            ] {
                match q {
                    Some(q) => {
                        let _ = write!(out, ",{},{},{},{},{}", q.min, q.q1, q.median, q.q3, q.max);
                    }
                    None => out.push_str(",,,,,"),
                }
            }
            out.push('\n');
        }
        out
    }

    /// Writes `results.json` and `summary.csv` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| MerlinError::io(dir, e))?;
        let json = dir.join("results.json");
        fs::write(&json, self.to_json()?).map_err(|e| MerlinError::io(&json, e))?;
        let csv = dir.join("summary.csv");
        fs::write(&csv, self.summary_csv()).map_err(|e| MerlinError::io(&csv, e))
    }
}
