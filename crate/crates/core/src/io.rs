//! On-disk formats.
//!
//! Images travel in a small binary tensor format:
//!
//! ```text
//! "IOSR" | version: u32 = 1 | rank: u32 | dims: rank x u32 | payload: f64 x prod(dims)
//! ```
//!
//! with every integer and float little-endian and the payload row-major.
//! Covariates are a headerless CSV with one subject per line. A dataset
//! directory holds `covariates.csv` and `responses.iosr` (`n x rows x cols`).
//!
//! Every write goes to a temporary file in the target directory that is
//! renamed into place once complete.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tempfile::NamedTempFile;

use crate::error::{Error, Result};
use crate::synth::SynthConfig;
use crate::types::{CoefficientField, Dataset, FitResult, GridShape, Image, PenaltyKind, SolverConfig, TileSummary};

pub const MAGIC: [u8; 4] = *b"IOSR";
pub const VERSION: u32 = 1;

pub const COVARIATES_FILE: &str = "covariates.csv";
pub const RESPONSES_FILE: &str = "responses.iosr";
pub const TRUTH_FILE: &str = "truth.iosr";
pub const BETA_FILE: &str = "beta.iosr";
pub const BETA_SPARSE_FILE: &str = "beta_sparse.iosr";
pub const ALPHA_FILE: &str = "alpha.iosr";
pub const FIT_RECORD_FILE: &str = "fit.json";

/// A dense row-major array of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    dims: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected = dims.iter().product::<usize>();
        if dims.is_empty() || expected != data.len() {
            return Err(Error::LengthMismatch {
                expected,
                actual: data.len(),
            });
        }
        Ok(Self { dims, data })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::with_capacity(12 + 4 * self.dims.len() + 8 * self.data.len());
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        let rank = u32::try_from(self.dims.len()).map_err(|_| Error::invalid("rank", "does not fit in u32"))?;
        out.extend_from_slice(&rank.to_le_bytes());
        for d in &self.dims {
            let d = u32::try_from(*d).map_err(|_| Error::invalid("dims", format!("{d} does not fit in u32")))?;
            out.extend_from_slice(&d.to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    /// Parses a tensor; `path` only labels errors.
    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let bad = |m: String| Error::format(path, m);
        let word = |at: usize| -> Result<u32> {
            bytes
                .get(at..at + 4)
                .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
                .ok_or_else(|| bad(format!("truncated header ({} bytes)", bytes.len())))
        };
        if bytes.get(..4) != Some(&MAGIC[..]) {
            return Err(bad("not a tensor file (bad magic)".into()));
        }
        let version = word(4)?;
        if version != VERSION {
            return Err(bad(format!("unsupported version {version}, expected {VERSION}")));
        }
        let rank = word(8)? as usize;
        if rank == 0 {
            return Err(bad("rank 0".into()));
        }
        let dims = (0..rank)
            .map(|k| word(12 + 4 * k).map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let header = 12 + 4 * rank;
        let count = dims
            .iter()
            .try_fold(1usize, |acc, d| acc.checked_mul(*d))
            .ok_or_else(|| bad(format!("dims {dims:?} overflow")))?;
        let expected = count.checked_mul(8).and_then(|b| b.checked_add(header));
        if expected != Some(bytes.len()) {
            return Err(bad(format!(
                "payload holds {} bytes, dims {dims:?} need {}",
                bytes.len().saturating_sub(header),
                count.saturating_mul(8)
            )));
        }
        let mut data = Vec::with_capacity(count);
        for (i, chunk) in bytes[header..].chunks_exact(8).enumerate() {
            let v = f64::from_le_bytes(chunk.try_into().unwrap());
            if !v.is_finite() {
                return Err(bad(format!("non-finite value at index {i}")));
            }
            data.push(v);
        }
        Ok(Self { dims, data })
    }

    /// Stacks equally shaped images into an `len x rows x cols` tensor.
    pub fn from_images(images: &[Image]) -> Result<Self> {
        let first = images.first().ok_or_else(|| Error::invalid("images", "nothing to stack"))?;
        let shape = first.shape();
        let mut data = Vec::with_capacity(images.len() * shape.len());
        for im in images {
            if im.shape() != shape {
                return Err(Error::ShapeMismatch(format!("{} vs {}", im.shape(), shape)));
            }
            data.extend_from_slice(im.values());
        }
        Self::new(vec![images.len(), shape.rows(), shape.cols()], data)
    }

    /// Splits a rank-3 tensor into images.
    pub fn to_images(&self) -> Result<Vec<Image>> {
        let [n, rows, cols] = self.dims[..] else {
            return Err(Error::ShapeMismatch(format!("expected a rank-3 tensor, got dims {:?}", self.dims)));
        };
        let shape = GridShape::new(rows, cols)?;
        if n == 0 {
            return Err(Error::ShapeMismatch("tensor holds no image".into()));
        }
        self.data
            .chunks_exact(shape.len())
            .map(|c| Image::new(shape, c.to_vec()))
            .collect()
    }

    pub fn from_field(field: &CoefficientField) -> Result<Self> {
        Self::from_images(field.images())
    }

    pub fn to_field(&self) -> Result<CoefficientField> {
        CoefficientField::new(self.to_images()?)
    }
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn write_tensor(path: &Path, tensor: &Tensor) -> Result<()> {
    write_atomic(path, &tensor.to_bytes()?)
}

pub fn read_tensor(path: &Path) -> Result<Tensor> {
    Tensor::from_bytes(&read_bytes(path)?, path)
}

pub fn write_images(path: &Path, images: &[Image]) -> Result<()> {
    write_tensor(path, &Tensor::from_images(images)?)
}

pub fn read_images(path: &Path) -> Result<Vec<Image>> {
    read_tensor(path)?.to_images().map_err(|e| Error::format(path, e.to_string()))
}

pub fn write_field(path: &Path, field: &CoefficientField) -> Result<()> {
    write_tensor(path, &Tensor::from_field(field)?)
}

pub fn read_field(path: &Path) -> Result<CoefficientField> {
    read_tensor(path)?.to_field().map_err(|e| Error::format(path, e.to_string()))
}

pub fn write_covariates(path: &Path, covariates: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    for row in covariates {
        w.write_record(row.iter().map(|v| v.to_string()))
            .map_err(|e| Error::format(path, e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::format(path, e.to_string()))?;
    write_atomic(path, &bytes)
}

pub fn read_covariates(path: &Path) -> Result<Vec<Vec<f64>>> {
    let bytes = read_bytes(path)?;
    let mut rows = Vec::new();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(&bytes[..]);
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::format(path, e.to_string()))?;
        let row = record
            .iter()
            .map(|f| match f.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                Ok(_) => Err(Error::format(path, format!("line {}: non-finite value {f:?}", line + 1))),
                Err(_) => Err(Error::format(path, format!("line {}: cannot parse {f:?}", line + 1))),
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::format(path, "no covariate rows"));
    }
    Ok(rows)
}

pub fn write_dataset(dataset: &Dataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_covariates(&dir.join(COVARIATES_FILE), dataset.covariates())?;
    write_images(&dir.join(RESPONSES_FILE), dataset.responses())
}

pub fn read_dataset(dir: &Path) -> Result<Dataset> {
    let cov_path = dir.join(COVARIATES_FILE);
    let resp_path = dir.join(RESPONSES_FILE);
    let covariates = read_covariates(&cov_path)?;
    let responses = read_images(&resp_path)?;
    if covariates.len() != responses.len() {
        return Err(Error::format(
            dir,
            format!(
                "{COVARIATES_FILE} has {} subjects but {RESPONSES_FILE} has {}",
                covariates.len(),
                responses.len()
            ),
        ));
    }
    Dataset::new(covariates, responses).map_err(|e| Error::format(&cov_path, e.to_string()))
}

/// Tiling parameters of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TilingConfig {
    pub tile_rows: usize,
    pub tile_cols: usize,
    #[serde(default = "default_halo")]
    pub halo: usize,
}

fn default_halo() -> usize {
    1
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Directory for fit outputs or simulated data.
    pub dir: Option<PathBuf>,
    /// File for JSON reports.
    pub report: Option<PathBuf>,
}

/// A run configuration, read from TOML.
///
/// ```toml
/// methods = ["scad2tv", "tvl1", "graphnet"]
///
/// [solver]          # lambda = 5, gamma = 0.5, rho = 1, a = 3.7
/// lambda = 5.0
///
/// [synth]           # 64x64, n = 100, sigma = 1
/// sigma = 0.1
///
/// [tiling]          # absent: fit the whole grid at once
/// tile_rows = 16
/// tile_cols = 16
/// halo = 2
///
/// [output]
/// dir = "out"
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfigFile {
    pub solver: SolverConfig,
    pub synth: SynthConfig,
    pub tiling: Option<TilingConfig>,
    pub methods: Vec<PenaltyKind>,
    pub workers: Option<usize>,
    pub replicates: usize,
    pub folds: usize,
    pub output: OutputConfig,
}

impl Default for RunConfigFile {
    fn default() -> Self {
        Self {
            solver: SolverConfig::default(),
            synth: SynthConfig::default(),
            tiling: None,
            methods: PenaltyKind::ALL.to_vec(),
            workers: None,
            replicates: 10,
            folds: 5,
            output: OutputConfig::default(),
        }
    }
}

impl RunConfigFile {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::format(path, e.to_string()))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = read_bytes(path)?;
        let text = String::from_utf8(bytes).map_err(|_| Error::format(path, "not UTF-8"))?;
        Self::from_toml(&text, path)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Internal(format!("config serialization: {e}")))
    }
}

/// The JSON record written next to the estimates of a fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRecord {
    pub solver: SolverConfig,
    pub tiling: Option<TilingConfig>,
    pub rows: usize,
    pub cols: usize,
    pub n: usize,
    pub p: usize,
    pub iterations: usize,
    pub converged: bool,
    pub ridge: f64,
    pub primal_residuals: Vec<f64>,
    pub dual_residuals: Vec<f64>,
    pub objective_trace: Vec<f64>,
    pub solve_residuals: Vec<f64>,
    pub tiles: Vec<TileSummary>,
}

impl FitRecord {
    pub fn new(result: &FitResult, dataset: &Dataset, solver: SolverConfig, tiling: Option<TilingConfig>) -> Self {
        Self {
            solver,
            tiling,
            rows: dataset.shape().rows(),
            cols: dataset.shape().cols(),
            n: dataset.n(),
            p: dataset.p(),
            iterations: result.iterations,
            converged: result.converged,
            ridge: result.ridge,
            primal_residuals: result.primal_residuals.clone(),
            dual_residuals: result.dual_residuals.clone(),
            objective_trace: result.objective_trace.clone(),
            solve_residuals: result.solve_residuals.clone(),
            tiles: result.tiles.clone(),
        }
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Internal(e.to_string()))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    serde_json::from_slice(&read_bytes(path)?).map_err(|e| Error::format(path, e.to_string()))
}

/// Writes `beta.iosr`, `beta_sparse.iosr`, `alpha.iosr` and `fit.json`.
pub fn write_fit(dir: &Path, result: &FitResult, record: &FitRecord) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_field(&dir.join(BETA_FILE), &result.beta)?;
    write_field(&dir.join(BETA_SPARSE_FILE), &result.beta_sparse)?;
    write_tensor(&dir.join(ALPHA_FILE), &Tensor::new(vec![result.alpha.len()], result.alpha.clone())?)?;
    write_json(&dir.join(FIT_RECORD_FILE), record)
}
