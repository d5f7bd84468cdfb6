use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;
use serde_json::{json, Value};

use merlin::check::{run_checks, CheckOptions};
use merlin::dataset::{load_bundle, read_square_matrix_file, read_vector_file, save_bundle};
use merlin::experiments::{run_sweep, SweepSpec};
use merlin::metrics::{activation_pattern, metric_report};
use merlin::par;
use merlin::synth::{gen_dataset, gen_timeseries_dataset, StimulusKind, SynthParams};
use merlin::{
    merlin_basic, merlin_bp, merlin_bpplus, BandSpec, Dataset, MerlinError, ObjectiveConfig,
    OptConfig, Variant,
};

const EXIT_CHECK_FAILED: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

/// Recover causal effect variables from linear mixtures.
#[derive(Parser)]
#[command(name = "merlin", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset bundle with known ground truth.
    Synth(SynthArgs),
    /// Run a MERLiN variant on a dataset bundle.
    Run(RunArgs),
    /// Score a recovered vector against the ground truth.
    Eval(EvalArgs),
    /// Execute a parameter sweep described by a JSON file.
    Sweep(SweepArgs),
    /// Run the built-in verification battery.
    Check(CheckArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    d: usize,
    #[arg(long)]
    m: usize,
    #[arg(long)]
    a: f64,
    #[arg(long, default_value_t = 0.0)]
    b: f64,
    /// Stimulus kind: G (Gaussian) or B (binary).
    #[arg(long = "T", default_value = "G")]
    stimulus: StimulusKind,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Write trial time series instead of plain samples.
    #[arg(long)]
    timeseries: bool,
    #[arg(long, default_value_t = 256, requires = "timeseries")]
    n: usize,
    #[arg(long, default_value_t = 250.0, requires = "timeseries")]
    fs: f64,
    /// Band whose log-bandpower carries the causal variables, LO:HI in Hz.
    #[arg(long, default_value = "55:85", requires = "timeseries")]
    band: BandSpec,
    /// Seed for the noise carriers; defaults to --seed.
    #[arg(long, requires = "timeseries")]
    carrier_seed: Option<u64>,
}

#[derive(Args)]
struct OptArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    max_iters: Option<usize>,
    /// Weight of the independence term.
    #[arg(long)]
    lambda: Option<f64>,
    /// Smoothing constant of the absolute value.
    #[arg(long)]
    epsilon: Option<f64>,
}

impl OptArgs {
    fn configs(&self) -> (ObjectiveConfig, OptConfig) {
        let mut obj = ObjectiveConfig::default();
        if let Some(l) = self.lambda {
            obj.lambda = l;
        }
        if let Some(e) = self.epsilon {
            obj.epsilon = e;
        }
        let mut opt = OptConfig {
            seed: self.seed,
            ..OptConfig::default()
        };
        if let Some(r) = self.restarts {
            opt.restarts = r;
        }
        if let Some(k) = self.max_iters {
            opt.max_iters = k;
        }
        (obj, opt)
    }
}

#[derive(Args)]
struct RunArgs {
    /// Dataset bundle directory.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "basic")]
    variant: Variant,
    /// Frequency band LO:HI in Hz (bandpower variants).
    #[arg(long)]
    band: Option<BandSpec>,
    #[command(flatten)]
    opt: OptArgs,
    /// Also write the result JSON to this file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Recovered vector: a file or inline comma-separated values.
    #[arg(long, allow_hyphen_values = true)]
    w: String,
    /// Ground truth: a file or inline comma-separated values.
    #[arg(long = "wG0", alias = "w-g0", allow_hyphen_values = true)]
    w_g0: String,
    /// Channel covariance CSV; emits the activation pattern of w.
    #[arg(long)]
    pattern: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Sweep specification (JSON).
    #[arg(long)]
    spec: PathBuf,
    /// Directory receiving results.json and summary.csv.
    #[arg(long)]
    out: PathBuf,
    /// Worker count; overrides MERLIN_THREADS.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct CheckArgs {
    /// Reduced battery.
    #[arg(long)]
    quick: bool,
    /// Corrupt one objective's gradient to exercise the failure path.
    #[arg(long, hide = true)]
    inject_gradient_fault: Option<Variant>,
}

enum Failure {
    Error(MerlinError),
    Check,
}

impl From<MerlinError> for Failure {
    fn from(e: MerlinError) -> Self {
        Failure::Error(e)
    }
}

type CmdResult = Result<(), Failure>;

fn emit(value: &Value) {
    println!("{}", serde_json::to_string_pretty(value).expect("JSON values serialise"));
}

fn cmd_synth(args: &SynthArgs) -> CmdResult {
    let params = SynthParams {
        d: args.d,
        m: args.m,
        a: args.a,
        b: args.b,
        stimulus: args.stimulus,
        seed: args.seed,
    };
    let mut summary = json!({
        "out": args.out,
        "d": args.d,
        "m": args.m,
        "a": args.a,
        "b": args.b,
        "T": args.stimulus,
        "seed": args.seed,
    });
    let ds: Dataset = if args.timeseries {
        let carrier_seed = args.carrier_seed.unwrap_or(args.seed);
        summary["kind"] = json!("3d");
        summary["n"] = json!(args.n);
        summary["fs"] = json!(args.fs);
        summary["band"] = json!(format!("{}:{}", args.band.lo, args.band.hi));
        summary["carrierSeed"] = json!(carrier_seed);
        gen_timeseries_dataset(&params, args.n, args.fs, &args.band, carrier_seed)?.into()
    } else {
        summary["kind"] = json!("2d");
        gen_dataset(&params)?.into()
    };
    save_bundle(&ds, &args.out)?;
    eprintln!(
        "wrote {} bundle to {} (d={}, m={}, a={}, b={}, T={}, seed={})",
        summary["kind"].as_str().unwrap_or_default(),
        args.out.display(),
        args.d,
        args.m,
        args.a,
        args.b,
        args.stimulus,
        args.seed
    );
    emit(&summary);
    Ok(())
}

fn cmd_run(args: &RunArgs) -> CmdResult {
    let (obj_cfg, opt_cfg) = args.opt.configs();
    let ds = load_bundle(&args.data)?;
    let (res, w_g0) = match (&ds, args.variant) {
        (Dataset::TwoD(ds), Variant::Basic) => (merlin_basic(ds, &obj_cfg, &opt_cfg)?, ds.w_g0()),
        (Dataset::ThreeD(ds), Variant::Bp | Variant::BpPlus) => {
            let band = args.band.ok_or_else(|| {
                MerlinError::InvalidParameter(format!("variant {} needs --band LO:HI", args.variant))
            })?;
            let res = if args.variant == Variant::Bp {
                merlin_bp(ds, &band, &obj_cfg, &opt_cfg)?
            } else {
                merlin_bpplus(ds, &band, &obj_cfg, &opt_cfg)?
            };
            (res, ds.w_g0())
        }
        (ds, variant) => {
            return Err(MerlinError::InvalidParameter(format!(
                "variant {variant} cannot run on a {} bundle",
                match ds.kind() {
                    merlin::dataset::BundleKind::TwoD => "2d",
                    merlin::dataset::BundleKind::ThreeD => "3d",
                }
            ))
            .into())
        }
    };

    let mut out = json!({
        "variant": res.variant,
        "w": res.w.as_slice(),
        "objective": res.objective,
        "iterations": res.diagnostics.iterations,
        "terminationReason": res.diagnostics.termination,
        "restarts": opt_cfg.restarts,
        "bestRestart": res.diagnostics.restart_index,
        "seed": opt_cfg.seed,
    });
    if let Some(g) = w_g0 {
        let report = metric_report(&res.w, g)?;
        out["andi"] = json!(report.andi);
        out["pobv"] = json!(report.pobv);
        eprintln!(
            "{}: objective {:.6}, andi {:.4} rad, pobv {:.4}",
            res.variant, res.objective, report.andi, report.pobv
        );
    } else {
        eprintln!("{}: objective {:.6}", res.variant, res.objective);
    }
    if let Some(path) = &args.out {
        let text = serde_json::to_string_pretty(&out).expect("JSON values serialise");
        std::fs::write(path, text).map_err(|e| MerlinError::io(path, e))?;
    }
    emit(&out);
    Ok(())
}

/// Inline `x,y,z` if every token parses, otherwise a file path.
fn vector_arg(arg: &str) -> Result<DVector<f64>, MerlinError> {
    let inline: Result<Vec<f64>, _> = arg.split(',').map(|t| t.trim().parse::<f64>()).collect();
    match inline {
        Ok(v) if !v.is_empty() => Ok(DVector::from_vec(v)),
        _ => read_vector_file(Path::new(arg)),
    }
}

fn cmd_eval(args: &EvalArgs) -> CmdResult {
    let w = vector_arg(&args.w)?;
    let w_g0 = vector_arg(&args.w_g0)?;
    let report = metric_report(&w, &w_g0)?;
    let mut out = serde_json::to_value(report).expect("metrics serialise");
    if let Some(path) = &args.pattern {
        let sigma = read_square_matrix_file(path)?;
        out["pattern"] = json!(activation_pattern(&w, &sigma)?.as_slice());
    }
    eprintln!(
        "andi {:.4} rad, pobv {:.4}, cap height {:.4}",
        report.andi, report.pobv, report.cap_height
    );
    emit(&out);
    Ok(())
}

fn cmd_sweep(args: &SweepArgs) -> CmdResult {
    let text = std::fs::read_to_string(&args.spec).map_err(|e| MerlinError::io(&args.spec, e))?;
    let spec = SweepSpec::from_json(&text)?;
    let threads = args.threads.or_else(par::threads_from_env);
    let result = run_sweep(&spec, threads)?;
    result.write(&args.out)?;
    let skipped = result.cells.iter().filter(|c| c.skipped.is_some()).count();
    let flagged = result.cells.iter().filter(|c| c.flagged).count();
    let failures: usize = result.cells.iter().map(|c| c.failures).sum();
    for cell in &result.cells {
        let p = &cell.params;
        let status = match (&cell.skipped, &cell.summary) {
            (Some(reason), _) => format!("skipped: {reason}"),
            (None, Some(s)) => format!(
                "median andi {:.4}, median pobv {:.4}{}",
                s.andi.median,
                s.pobv.median,
                if cell.flagged { " [flagged]" } else { "" }
            ),
            (None, None) => "all runs failed".to_string(),
        };
        eprintln!(
            "T={} d={} m={} a={} b={}: {status}",
            p.stimulus, p.d, p.m, p.a, p.b
        );
    }
    emit(&json!({
        "out": args.out,
        "cells": result.cells.len(),
        "skipped": skipped,
        "flagged": flagged,
        "failedRuns": failures,
    }));
    Ok(())
}

fn cmd_check(args: &CheckArgs) -> CmdResult {
    let report = run_checks(&CheckOptions {
        quick: args.quick,
        gradient_fault: args.inject_gradient_fault,
    });
    for c in &report.checks {
        eprintln!(
            "{} {}: {:.3e} (tolerance {:.1e}){}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.value,
            c.tolerance,
            c.error.as_deref().map(|e| format!(" — {e}")).unwrap_or_default()
        );
    }
    emit(&serde_json::to_value(&report).expect("report serialises"));
    if report.passed {
        Ok(())
    } else {
        Err(Failure::Check)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = par::with_threads(par::threads_from_env(), || match &cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Run(a) => cmd_run(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Check(a) => cmd_check(a),
    });
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Check) => ExitCode::from(EXIT_CHECK_FAILED),
        Err(Failure::Error(e)) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                ExitCode::from(EXIT_NUMERICAL)
            } else {
                ExitCode::from(EXIT_USAGE)
            }
        }
    }
}
