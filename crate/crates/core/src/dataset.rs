//! Dataset types and the on-disk bundle format.
//!
//! A bundle is a directory holding `meta.json`, `S.csv`, `v.csv`, an optional
//! `wG0.csv`, and either `F.csv` (2D, one channel per line) or `F.bin`
//! (3D, raw little-endian `f64`, channel-major then trial then time).

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{MerlinError, Result};

/// Vectors whose norm is within this of 1 are kept bit-for-bit.
const UNIT_SLACK: f64 = 1e-14;

/// Real tensor of shape `channels × trials × time`, stored contiguously with
/// element `(i, j, k)` at offset `((i * trials) + j) * time + k`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialTensor {
    channels: usize,
    trials: usize,
    time: usize,
    data: Vec<f64>,
}

impl TrialTensor {
    pub fn zeros(channels: usize, trials: usize, time: usize) -> Self {
        Self {
            channels,
            trials,
            time,
            data: vec![0.0; channels * trials * time],
        }
    }

    pub fn from_vec(channels: usize, trials: usize, time: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != channels * trials * time {
            return Err(MerlinError::DimensionMismatch(format!(
                "tensor of {channels}x{trials}x{time} needs {} values, got {}",
                channels * trials * time,
                data.len()
            )));
        }
        Ok(Self {
            channels,
            trials,
            time,
            data,
        })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn trials(&self) -> usize {
        self.trials
    }

    pub fn time(&self) -> usize {
        self.time
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    fn offset(&self, channel: usize, trial: usize) -> usize {
        (channel * self.trials + trial) * self.time
    }

    /// Time series of one channel in one trial.
    pub fn series(&self, channel: usize, trial: usize) -> &[f64] {
        let o = self.offset(channel, trial);
        &self.data[o..o + self.time]
    }

    pub fn series_mut(&mut self, channel: usize, trial: usize) -> &mut [f64] {
        let o = self.offset(channel, trial);
        &mut self.data[o..o + self.time]
    }
}

/// Stimulus samples, a `d × m` mixture, and the extractor of the cause variable.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset2D {
    s: DVector<f64>,
    f: DMatrix<f64>,
    v: DVector<f64>,
    w_g0: Option<DVector<f64>>,
}

impl Dataset2D {
    pub fn new(
        s: DVector<f64>,
        f: DMatrix<f64>,
        v: DVector<f64>,
        w_g0: Option<DVector<f64>>,
    ) -> Result<Self> {
        let (d, m) = f.shape();
        if m < 3 || d < 2 {
            return Err(MerlinError::InvalidParameter(format!(
                "2D dataset needs d >= 2 and m >= 3, got d = {d}, m = {m}"
            )));
        }
        if s.len() != m {
            return Err(MerlinError::DimensionMismatch(format!(
                "S has {} samples but F has {m} columns",
                s.len()
            )));
        }
        check_finite(s.as_slice(), "S")?;
        check_finite(f.as_slice(), "F")?;
        let v = unit_extractor(v, d)?;
        let w_g0 = w_g0.map(|w| unit_ground_truth(w, d)).transpose()?;
        Ok(Self { s, f, v, w_g0 })
    }

    pub fn d(&self) -> usize {
        self.f.nrows()
    }

    pub fn m(&self) -> usize {
        self.f.ncols()
    }

    pub fn s(&self) -> &DVector<f64> {
        &self.s
    }

    pub fn f(&self) -> &DMatrix<f64> {
        &self.f
    }

    pub fn v(&self) -> &DVector<f64> {
        &self.v
    }

    pub fn w_g0(&self) -> Option<&DVector<f64>> {
        self.w_g0.as_ref()
    }
}

/// Trial time series `d × m × n` sampled at `fs` Hz.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset3D {
    s: DVector<f64>,
    f: TrialTensor,
    v: DVector<f64>,
    fs: f64,
    w_g0: Option<DVector<f64>>,
}

impl Dataset3D {
    pub fn new(
        s: DVector<f64>,
        f: TrialTensor,
        v: DVector<f64>,
        fs: f64,
        w_g0: Option<DVector<f64>>,
    ) -> Result<Self> {
        let (d, m, n) = (f.channels(), f.trials(), f.time());
        if m < 3 || d < 2 || n < 4 {
            return Err(MerlinError::InvalidParameter(format!(
                "3D dataset needs d >= 2, m >= 3, n >= 4, got {d}x{m}x{n}"
            )));
        }
        if !(fs.is_finite() && fs > 0.0) {
            return Err(MerlinError::InvalidParameter(format!(
                "sampling frequency must be positive, got {fs}"
            )));
        }
        if s.len() != m {
            return Err(MerlinError::DimensionMismatch(format!(
                "S has {} samples but the tensor has {m} trials",
                s.len()
            )));
        }
        check_finite(s.as_slice(), "S")?;
        check_finite(f.as_slice(), "Ftilde")?;
        let v = unit_extractor(v, d)?;
        let w_g0 = w_g0.map(|w| unit_ground_truth(w, d)).transpose()?;
        Ok(Self { s, f, v, fs, w_g0 })
    }

    pub fn d(&self) -> usize {
        self.f.channels()
    }

    pub fn m(&self) -> usize {
        self.f.trials()
    }

    pub fn n(&self) -> usize {
        self.f.time()
    }

    pub fn fs(&self) -> f64 {
        self.fs
    }

    pub fn s(&self) -> &DVector<f64> {
        &self.s
    }

    pub fn f(&self) -> &TrialTensor {
        &self.f
    }

    pub fn v(&self) -> &DVector<f64> {
        &self.v
    }

    pub fn w_g0(&self) -> Option<&DVector<f64>> {
        self.w_g0.as_ref()
    }
}

/// Either kind of dataset, as read from a bundle.
#[derive(Debug, Clone, PartialEq)]
pub enum Dataset {
    TwoD(Dataset2D),
    ThreeD(Dataset3D),
}

impl Dataset {
    pub fn kind(&self) -> BundleKind {
        match self {
            Dataset::TwoD(_) => BundleKind::TwoD,
            Dataset::ThreeD(_) => BundleKind::ThreeD,
        }
    }

    pub fn w_g0(&self) -> Option<&DVector<f64>> {
        match self {
            Dataset::TwoD(ds) => ds.w_g0(),
            Dataset::ThreeD(ds) => ds.w_g0(),
        }
    }
}

impl From<Dataset2D> for Dataset {
    fn from(ds: Dataset2D) -> Self {
        Dataset::TwoD(ds)
    }
}

impl From<Dataset3D> for Dataset {
    fn from(ds: Dataset3D) -> Self {
        Dataset::ThreeD(ds)
    }
}

/// Frequency band `[lo, hi]` in Hz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandSpec {
    pub lo: f64,
    pub hi: f64,
}

impl BandSpec {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    /// Checks `0 <= lo < hi <= fs / 2`.
    pub fn validate(&self, fs: f64) -> Result<()> {
        let ok = self.lo.is_finite()
            && self.hi.is_finite()
            && self.lo >= 0.0
            && self.lo < self.hi
            && self.hi <= fs / 2.0;
        if ok {
            Ok(())
        } else {
            Err(MerlinError::InvalidParameter(format!(
                "band {}:{} Hz is not within 0 <= lo < hi <= {} Hz",
                self.lo,
                self.hi,
                fs / 2.0
            )))
        }
    }
}

impl std::str::FromStr for BandSpec {
    type Err = MerlinError;

    /// Parses `LO:HI`.
    fn from_str(s: &str) -> Result<Self> {
        let (lo, hi) = s
            .split_once(':')
            .ok_or_else(|| MerlinError::Parse(format!("band must be LO:HI, got {s:?}")))?;
        let lo = lo
            .trim()
            .parse::<f64>()
            .map_err(|e| MerlinError::Parse(format!("band lower edge: {e}")))?;
        let hi = hi
            .trim()
            .parse::<f64>()
            .map_err(|e| MerlinError::Parse(format!("band upper edge: {e}")))?;
        Ok(Self { lo, hi })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BundleKind {
    #[serde(rename = "2d")]
    TwoD,
    #[serde(rename = "3d")]
    ThreeD,
}

/// Contents of `meta.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleMeta {
    pub kind: BundleKind,
    pub d: usize,
    pub m: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fs: Option<f64>,
    #[serde(rename = "has_wG0")]
    pub has_w_g0: bool,
}

pub fn load_bundle(dir: impl AsRef<Path>) -> Result<Dataset> {
    let dir = dir.as_ref();
    let meta_path = dir.join("meta.json");
    let meta_text = read_text(&meta_path)?;
    let meta: BundleMeta = serde_json::from_str(&meta_text)
        .map_err(|e| MerlinError::Parse(format!("{}: {e}", meta_path.display())))?;

    let s = read_vector(&dir.join("S.csv"), meta.m, "S")?;
    let v = read_vector(&dir.join("v.csv"), meta.d, "v")?;
    let w_g0 = if meta.has_w_g0 {
        Some(read_vector(&dir.join("wG0.csv"), meta.d, "wG0")?)
    } else {
        None
    };

    match meta.kind {
        BundleKind::TwoD => {
            let f = read_matrix(&dir.join("F.csv"), meta.d, meta.m)?;
            Ok(Dataset2D::new(s, f, v, w_g0)?.into())
        }
        BundleKind::ThreeD => {
            let n = meta
                .n
                .ok_or_else(|| MerlinError::Parse("3d meta.json lacks \"n\"".into()))?;
            let fs = meta
                .fs
                .ok_or_else(|| MerlinError::Parse("3d meta.json lacks \"fs\"".into()))?;
            let f = read_tensor(&dir.join("F.bin"), meta.d, meta.m, n)?;
            Ok(Dataset3D::new(s, f, v, fs, w_g0)?.into())
        }
    }
}

pub fn save_bundle(ds: &Dataset, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| MerlinError::io(dir, e))?;

    let (meta, s, v, w_g0) = match ds {
        Dataset::TwoD(ds) => (
            BundleMeta {
                kind: BundleKind::TwoD,
                d: ds.d(),
                m: ds.m(),
                n: None,
                fs: None,
                has_w_g0: ds.w_g0().is_some(),
            },
            ds.s(),
            ds.v(),
            ds.w_g0(),
        ),
        Dataset::ThreeD(ds) => (
            BundleMeta {
                kind: BundleKind::ThreeD,
                d: ds.d(),
                m: ds.m(),
                n: Some(ds.n()),
                fs: Some(ds.fs()),
                has_w_g0: ds.w_g0().is_some(),
            },
            ds.s(),
            ds.v(),
            ds.w_g0(),
        ),
    };

    let meta_path = dir.join("meta.json");
    let text = serde_json::to_string_pretty(&meta)
        .map_err(|e| MerlinError::Parse(format!("meta.json: {e}")))?;
    fs::write(&meta_path, text).map_err(|e| MerlinError::io(&meta_path, e))?;

    write_vector(&dir.join("S.csv"), s.as_slice())?;
    write_vector(&dir.join("v.csv"), v.as_slice())?;
    if let Some(w) = w_g0 {
        write_vector(&dir.join("wG0.csv"), w.as_slice())?;
    }

    match ds {
        Dataset::TwoD(ds) => write_matrix(&dir.join("F.csv"), ds.f()),
        Dataset::ThreeD(ds) => write_tensor(&dir.join("F.bin"), ds.f()),
    }
}

fn check_finite(values: &[f64], what: &'static str) -> Result<()> {
    if values.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(MerlinError::NonFinite(what))
    }
}

fn unit_extractor(v: DVector<f64>, d: usize) -> Result<DVector<f64>> {
    if v.len() != d {
        return Err(MerlinError::DimensionMismatch(format!(
            "v has length {} but the data has {d} channels",
            v.len()
        )));
    }
    check_finite(v.as_slice(), "v")?;
    let norm = v.norm();
    if norm == 0.0 {
        return Err(MerlinError::DegenerateExtractor);
    }
    Ok(renormalize(v, norm))
}

fn unit_ground_truth(w: DVector<f64>, d: usize) -> Result<DVector<f64>> {
    if w.len() != d {
        return Err(MerlinError::DimensionMismatch(format!(
            "wG0 has length {} but the data has {d} channels",
            w.len()
        )));
    }
    check_finite(w.as_slice(), "wG0")?;
    let norm = w.norm();
    if norm == 0.0 {
        return Err(MerlinError::InvalidParameter("wG0 has zero norm".into()));
    }
    Ok(renormalize(w, norm))
}

fn renormalize(v: DVector<f64>, norm: f64) -> DVector<f64> {
    if (norm - 1.0).abs() <= UNIT_SLACK {
        v
    } else {
        v / norm
    }
}

fn read_text(path: &Path) -> Result<String> {
    match fs::read_to_string(path) {
        Ok(t) => Ok(t),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            Err(MerlinError::MissingFile(path.to_path_buf()))
        }
        Err(e) => Err(MerlinError::io(path, e)),
    }
}

fn parse_rows(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = read_text(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(lineno, line)| {
            line.split(',')
                .map(|tok| {
                    tok.trim().parse::<f64>().map_err(|e| {
                        MerlinError::Parse(format!(
                            "{}:{}: {tok:?}: {e}",
                            path.display(),
                            lineno + 1
                        ))
                    })
                })
                .collect()
        })
        .collect()
}

/// Reads a vector stored either one value per line or as a single row.
pub fn read_vector_file(path: impl AsRef<Path>) -> Result<DVector<f64>> {
    let path = path.as_ref();
    let rows = parse_rows(path)?;
    let values: Vec<f64> = if rows.len() == 1 {
        rows.into_iter().next().unwrap_or_default()
    } else {
        let mut out = Vec::with_capacity(rows.len());
        for row in rows {
            if row.len() != 1 {
                return Err(MerlinError::DimensionMismatch(format!(
                    "expected one value per line in {}",
                    path.display()
                )));
            }
            out.push(row[0]);
        }
        out
    };
    check_finite(&values, "vector")?;
    Ok(DVector::from_vec(values))
}

/// Reads a square CSV matrix, one row per line.
pub fn read_square_matrix_file(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    let path = path.as_ref();
    let rows = parse_rows(path)?;
    let n = rows.len();
    read_matrix(path, n, n)
}

fn read_vector(path: &Path, len: usize, what: &'static str) -> Result<DVector<f64>> {
    let values = read_vector_file(path)?;
    if values.len() != len {
        return Err(MerlinError::DimensionMismatch(format!(
            "{what}: expected {len} values, found {}",
            values.len()
        )));
    }
    Ok(values)
}

fn read_matrix(path: &Path, rows: usize, cols: usize) -> Result<DMatrix<f64>> {
    let parsed = parse_rows(path)?;
    if parsed.len() != rows || parsed.iter().any(|r| r.len() != cols) {
        return Err(MerlinError::DimensionMismatch(format!(
            "expected a {rows}x{cols} matrix in {}",
            path.display()
        )));
    }
    Ok(DMatrix::from_fn(rows, cols, |i, j| parsed[i][j]))
}

fn read_tensor(path: &Path, d: usize, m: usize, n: usize) -> Result<TrialTensor> {
    let bytes = match fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(MerlinError::MissingFile(path.to_path_buf()))
        }
        Err(e) => return Err(MerlinError::io(path, e)),
    };
    let expected = d * m * n * 8;
    if bytes.len() != expected {
        return Err(MerlinError::DimensionMismatch(format!(
            "F.bin: expected {expected} bytes for {d}x{m}x{n}, found {}",
            bytes.len()
        )));
    }
    let data = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    TrialTensor::from_vec(d, m, n, data)
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    fs::File::create(path)
        .map(BufWriter::new)
        .map_err(|e| MerlinError::io(path, e))
}

// `{}` on f64 prints the shortest string that parses back to the same bits.
fn write_vector(path: &Path, values: &[f64]) -> Result<()> {
    let mut out = create(path)?;
    for x in values {
        writeln!(out, "{x}").map_err(|e| MerlinError::io(path, e))?;
    }
    out.flush().map_err(|e| MerlinError::io(path, e))
}

fn write_matrix(path: &Path, f: &DMatrix<f64>) -> Result<()> {
    let mut out = create(path)?;
    for row in f.row_iter() {
        let line = row
            .iter()
            .map(|x| x.to_string())
            .collect::<Vec<_>>()
            .join(",");
        writeln!(out, "{line}").map_err(|e| MerlinError::io(path, e))?;
    }
    out.flush().map_err(|e| MerlinError::io(path, e))
}

fn write_tensor(path: &Path, f: &TrialTensor) -> Result<()> {
    let mut out = create(path)?;
    for x in f.as_slice() {
        out.write_all(&x.to_le_bytes())
            .map_err(|e| MerlinError::io(path, e))?;
    }
    out.flush().map_err(|e| MerlinError::io(path, e))
}
