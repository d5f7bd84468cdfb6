//! Recovery of a causal effect of a known cause variable from samples of a
//! linear mixture, by maximising precision-matrix objectives on the unit sphere.
//!
//! The pipeline: [`dataset`] holds inputs, [`synth`] generates benchmarks
//! with ground truth, [`spectral`] turns trial data into band features,
//! [`objective`] scores candidate unmixing vectors, [`sphere`] maximises
//! them, [`algorithm`] ties the steps together, [`metrics`] scores the
//! result, and [`experiments`] runs parameter sweeps.

pub mod algorithm;
pub mod check;
pub mod dataset;
pub mod error;
pub mod experiments;
pub mod metrics;
pub mod objective;
pub mod par;
pub mod spectral;
pub mod sphere;
pub mod stats;
pub mod synth;

pub use algorithm::{merlin_basic, merlin_bp, merlin_bpplus, MerlinResult, Variant};
pub use dataset::{BandSpec, Dataset, Dataset2D, Dataset3D};
pub use error::{MerlinError, Result};
pub use objective::ObjectiveConfig;
pub use sphere::{OptConfig, OptResult};
