//! Shared plumbing: exit-code policy, mapper specs, key=value config
//! files, and the dataset manifest.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};

use playstyle_core::dataset::DatasetError;
use playstyle_core::discretizer::{MapError, StateMapper};
use playstyle_core::experiment::ExperimentError;
use playstyle_core::hsd::{load_model, HsdError};
use playstyle_core::metric::{Aggregation, DistanceKind, MetricError};

/// Exit codes beyond clap's usage errors (2): data/format problems (3),
/// undefined distances (4), training divergence (5), anything else (1).
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_DATA: u8 = 3;
pub const EXIT_UNDEFINED: u8 = 4;
pub const EXIT_DIVERGED: u8 = 5;

/// Classifies an error chain into the documented exit codes.
pub fn exit_code_for(err: &anyhow::Error) -> ExitCode {
    for cause in err.chain() {
        if cause.downcast_ref::<UsageError>().is_some() {
            return ExitCode::from(EXIT_USAGE);
        }
        if let Some(e) = cause.downcast_ref::<HsdError>() {
            return match e {
                HsdError::Diverged { .. } => ExitCode::from(EXIT_DIVERGED),
                HsdError::Format(_) | HsdError::Map(_) | HsdError::Config(_)
                | HsdError::Shape(_) | HsdError::EmptyDataset => ExitCode::from(EXIT_DATA),
                _ => ExitCode::FAILURE,
            };
        }
        if let Some(e) = cause.downcast_ref::<MetricError>() {
            return match e {
                MetricError::NoPrediction => ExitCode::from(EXIT_UNDEFINED),
                _ => ExitCode::from(EXIT_DATA),
            };
        }
        if let Some(e) = cause.downcast_ref::<ExperimentError>() {
            return match e {
                ExperimentError::Metric(MetricError::NoPrediction) => {
                    ExitCode::from(EXIT_UNDEFINED)
                }
                _ => ExitCode::from(EXIT_DATA),
            };
        }
        if cause.downcast_ref::<DatasetError>().is_some()
            || cause.downcast_ref::<MapError>().is_some()
        {
            return ExitCode::from(EXIT_DATA);
        }
        if cause.downcast_ref::<UndefinedDistance>().is_some() {
            return ExitCode::from(EXIT_UNDEFINED);
        }
    }
    ExitCode::FAILURE
}

/// A semantically invalid flag value (clap only catches syntactic ones);
/// maps to the usage-error exit code.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for UsageError {}

/// Marker error for an undefined (empty-intersection) distance result.
#[derive(Debug)]
pub struct UndefinedDistance;

impl std::fmt::Display for UndefinedDistance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "the playstyle distance is undefined: no state is shared at this threshold")
    }
}

impl std::error::Error for UndefinedDistance {}

/// Parses a mapper spec: `pixel`, `lrd:HxW:DIV`, or `hsd:PATH:HIERARCHY`.
pub fn parse_mapper(spec: &str) -> Result<StateMapper> {
    if spec == "pixel" {
        return Ok(StateMapper::Pixel);
    }
    if let Some(rest) = spec.strip_prefix("lrd:") {
        let (size, div) = rest
            .rsplit_once(':')
            .ok_or_else(|| anyhow!("lrd spec needs lrd:HxW:DIV, got {spec:?}"))?;
        let (h, w) = size
            .split_once('x')
            .ok_or_else(|| anyhow!("lrd size needs HxW, got {size:?}"))?;
        return Ok(StateMapper::Lrd {
            out_h: h.parse().with_context(|| format!("bad lrd height {h:?}"))?,
            out_w: w.parse().with_context(|| format!("bad lrd width {w:?}"))?,
            intensity_div: div.parse().with_context(|| format!("bad lrd divisor {div:?}"))?,
        });
    }
    if let Some(rest) = spec.strip_prefix("hsd:") {
        let (path, hierarchy) = rest
            .rsplit_once(':')
            .ok_or_else(|| anyhow!("hsd spec needs hsd:PATH:HIERARCHY, got {spec:?}"))?;
        let model = load_model(Path::new(path))
            .with_context(|| format!("loading model from {path}"))?;
        return Ok(StateMapper::Hsd {
            model: Arc::new(model),
            hierarchy: hierarchy
                .parse()
                .with_context(|| format!("bad hierarchy {hierarchy:?}"))?,
        });
    }
    bail!("unknown mapper {spec:?} (expected pixel, lrd:HxW:DIV, or hsd:PATH:HIERARCHY)")
}

pub fn parse_distance(s: &str) -> Result<DistanceKind> {
    DistanceKind::parse(s).ok_or_else(|| anyhow!("unknown distance {s:?} (w1, w2, kl, mkl)"))
}

pub fn parse_aggregation(s: &str) -> Result<Aggregation> {
    match s {
        "expected" => Ok(Aggregation::Expected),
        "uniform" => Ok(Aggregation::Uniform),
        _ => bail!("unknown aggregation {s:?} (expected or uniform)"),
    }
}

/// A `key=value` config file: one pair per line, `#` comments and blank
/// lines ignored.  Values from the file fill in flags the command line
/// left unset; explicit flags always win.
#[derive(Clone, Debug, Default)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn load(path: Option<&Path>) -> Result<ConfigFile> {
        let mut values = BTreeMap::new();
        if let Some(path) = path {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            for (lineno, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let (key, value) = line.split_once('=').ok_or_else(|| {
                    anyhow!("{}:{}: expected key=value", path.display(), lineno + 1)
                })?;
                values.insert(key.trim().to_string(), value.trim().to_string());
            }
        }
        Ok(ConfigFile { values })
    }

    /// Flag value if set, else the config value, else the default.
    pub fn resolve<T: std::str::FromStr>(
        &self,
        flag: Option<T>,
        key: &str,
        default: T,
    ) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        if let Some(v) = flag {
            return Ok(v);
        }
        match self.values.get(key) {
            Some(raw) => raw
                .parse()
                .map_err(|e| anyhow!("config key {key}={raw:?}: {e}")),
            None => Ok(default),
        }
    }
}

/// One row of a dataset manifest.
#[derive(Clone, Debug)]
pub struct ManifestRow {
    pub id: String,
    pub file: String,
    pub speed: f64,
    pub noise_level: u32,
    pub sigma_steer: f64,
    pub sigma_accel: f64,
    pub samples: usize,
    pub seed: u64,
}

pub const MANIFEST_HEADER: &str =
    "id,file,speed,noise_level,sigma_steer,sigma_accel,samples,seed";

pub fn write_manifest(path: &Path, rows: &[ManifestRow]) -> Result<()> {
    let mut out = String::new();
    writeln!(out, "{MANIFEST_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.id, r.file, r.speed, r.noise_level, r.sigma_steer, r.sigma_accel, r.samples, r.seed
        )?;
    }
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRow>> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == MANIFEST_HEADER => {}
        other => bail!(
            "{}: expected manifest header {MANIFEST_HEADER:?}, found {other:?}",
            path.display()
        ),
    }
    let mut rows = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 8 {
            bail!("{}:{}: expected 8 fields", path.display(), lineno + 2);
        }
        let ctx = |what: &str| format!("{}:{}: bad {what}", path.display(), lineno + 2);
        rows.push(ManifestRow {
            id: f[0].to_string(),
            file: f[1].to_string(),
            speed: f[2].parse().with_context(|| ctx("speed"))?,
            noise_level: f[3].parse().with_context(|| ctx("noise_level"))?,
            sigma_steer: f[4].parse().with_context(|| ctx("sigma_steer"))?,
            sigma_accel: f[5].parse().with_context(|| ctx("sigma_accel"))?,
            samples: f[6].parse().with_context(|| ctx("samples"))?,
            seed: f[7].parse().with_context(|| ctx("seed"))?,
        });
    }
    if rows.is_empty() {
        bail!("{}: manifest lists no datasets", path.display());
    }
    Ok(rows)
}

/// Parses a comma-separated list (`"1,2,4"`).
pub fn parse_list<T: std::str::FromStr>(raw: &str, what: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    let items: Result<Vec<T>> = raw
        .split(',')
        .filter(|s| !s.is_empty())
        .map(|s| s.trim().parse::<T>().map_err(|e| anyhow!("bad {what} {s:?}: {e}")))
        .collect();
    let items = items?;
    if items.is_empty() {
        bail!("empty {what} list");
    }
    Ok(items)
}

/// Parses a comma-separated list of levels where each piece may also be an
/// inclusive range: `"0,2"`, `"1..5"` (= 1,2,3,4,5), or a mix of both.
pub fn parse_ranged_list(raw: &str, what: &str) -> Result<Vec<u32>> {
    let mut items = Vec::new();
    for piece in raw.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        if let Some((lo, hi)) = piece.split_once("..") {
            let lo: u32 = lo.trim().parse().map_err(|e| anyhow!("bad {what} {piece:?}: {e}"))?;
            let hi: u32 = hi.trim().parse().map_err(|e| anyhow!("bad {what} {piece:?}: {e}"))?;
            if hi < lo {
                bail!("bad {what} range {piece:?}: end below start");
            }
            items.extend(lo..=hi);
        } else {
            items.push(piece.parse().map_err(|e| anyhow!("bad {what} {piece:?}: {e}"))?);
        }
    }
    if items.is_empty() {
        bail!("empty {what} list");
    }
    Ok(items)
}

/// Canonical dataset path for an id inside a directory.
pub fn dataset_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.psty"))
}
