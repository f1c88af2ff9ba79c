//! Recorded play datasets and the `.psty` on-disk container.
//!
//! A dataset is an unordered bag of (observation, action) samples recorded
//! from one actor.  Observations are dense `u8` tensors (for image-like
//! inputs: frames x height x width); actions are either a discrete choice
//! index or a fixed-width vector of reals.
//!
//! On disk a dataset is a single little-endian binary file:
//!
//! ```text
//! magic   4 bytes  50 53 54 59 ("PSTY")
//! version u16      currently 1
//! rank    u8       number of observation dims
//! dims    u32 each observation shape, row-major
//! action  u8       0 = discrete, 1 = continuous
//! size    u32      action count (discrete) or vector width (continuous)
//! count   u64      number of samples
//! records          per sample: obs payload (u8, row-major), then the
//!                  action: one u32 index, or `size` f32 values
//! ```
//!
//! The writer is deterministic: the same dataset content always produces
//! the same bytes, so files can be compared and exchanged bit-exactly.

use std::fmt;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// File magic: "PSTY".
pub const PSTY_MAGIC: [u8; 4] = [0x50, 0x53, 0x54, 0x59];
/// Current container version.
pub const PSTY_VERSION: u16 = 1;

/// Shape of an observation tensor, e.g. `[frames, height, width]`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ObsShape(pub Vec<usize>);

impl ObsShape {
    /// Total number of `u8` elements an observation of this shape holds.
    pub fn element_count(&self) -> usize {
        self.0.iter().product()
    }

    /// Interpret the shape as stacked frames: `(frames, height, width)`.
    /// Returns `None` for ranks other than 3.
    pub fn as_frames_hw(&self) -> Option<(usize, usize, usize)> {
        match self.0.as_slice() {
            &[f, h, w] => Some((f, h, w)),
            _ => None,
        }
    }
}

impl fmt::Display for ObsShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let dims: Vec<String> = self.0.iter().map(|d| d.to_string()).collect();
        write!(f, "{}", dims.join("x"))
    }
}

/// A dense `u8` observation tensor.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Observation {
    shape: ObsShape,
    data: Vec<u8>,
}

impl Observation {
    /// Build an observation, checking that `data` fills `shape` exactly.
    pub fn new(shape: ObsShape, data: Vec<u8>) -> Result<Self, DatasetError> {
        if shape.element_count() != data.len() {
            return Err(DatasetError::ShapeMismatch {
                expected: shape.element_count(),
                got: data.len(),
            });
        }
        Ok(Observation { shape, data })
    }

    pub fn shape(&self) -> &ObsShape {
        &self.shape
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }
}

/// What kind of actions a dataset records.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ActionSpace {
    /// A finite choice with `n_actions` alternatives, recorded as an index.
    Discrete { n_actions: usize },
    /// A fixed-width real vector, e.g. (steer, accel).
    Continuous { dim: usize },
}

impl ActionSpace {
    /// Width of the "size" field written to the container.
    fn size_field(&self) -> usize {
        match self {
            ActionSpace::Discrete { n_actions } => *n_actions,
            ActionSpace::Continuous { dim } => *dim,
        }
    }
}

/// One recorded action.
#[derive(Clone, Debug, PartialEq)]
pub enum Action {
    Discrete(u32),
    Continuous(Vec<f32>),
}

impl Action {
    /// Check the action against its declared space.
    fn validate(&self, space: &ActionSpace) -> Result<(), String> {
        match (self, space) {
            (Action::Discrete(idx), ActionSpace::Discrete { n_actions }) => {
                if (*idx as usize) < *n_actions {
                    Ok(())
                } else {
                    Err(format!("action index {idx} out of range (< {n_actions})"))
                }
            }
            (Action::Continuous(v), ActionSpace::Continuous { dim }) => {
                if v.len() != *dim {
                    Err(format!("action has {} dims, expected {dim}", v.len()))
                } else if let Some(x) = v.iter().find(|x| !x.is_finite()) {
                    Err(format!("non-finite action component {x}"))
                } else {
                    Ok(())
                }
            }
            _ => Err("action kind does not match the dataset's action space".to_string()),
        }
    }
}

/// One (observation, action) sample.
#[derive(Clone, Debug, PartialEq)]
pub struct PlaySample {
    pub observation: Observation,
    pub action: Action,
}

/// A labelled bag of samples sharing one observation shape and action space.
#[derive(Clone, Debug, PartialEq)]
pub struct PlayDataset {
    id: String,
    obs_shape: ObsShape,
    action_space: ActionSpace,
    samples: Vec<PlaySample>,
}

/// Errors from dataset construction, I/O, and subsetting.
#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("not a .psty file (bad magic)")]
    BadMagic,
    #[error("unsupported .psty version {0} (expected {PSTY_VERSION})")]
    UnsupportedVersion(u16),
    #[error("corrupt dataset at record {record}: {reason}")]
    Corrupt { record: usize, reason: String },
    #[error("header field out of range: {0}")]
    BadHeader(String),
    #[error("trailing bytes after the last record")]
    TrailingBytes,
    #[error("observation payload is {got} bytes, shape needs {expected}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("sample {index} invalid: {reason}")]
    BadSample { index: usize, reason: String },
    #[error("requested a subset of {requested} from a dataset of {available}")]
    SubsetTooLarge { requested: usize, available: usize },
}

impl PlayDataset {
    /// Build a dataset, validating that every sample conforms to the
    /// declared observation shape and action space.
    pub fn new(
        id: impl Into<String>,
        obs_shape: ObsShape,
        action_space: ActionSpace,
        samples: Vec<PlaySample>,
    ) -> Result<Self, DatasetError> {
        for (index, sample) in samples.iter().enumerate() {
            if sample.observation.shape() != &obs_shape {
                return Err(DatasetError::BadSample {
                    index,
                    reason: format!(
                        "observation shape {} differs from dataset shape {}",
                        sample.observation.shape(),
                        obs_shape
                    ),
                });
            }
            sample
                .action
                .validate(&action_space)
                .map_err(|reason| DatasetError::BadSample { index, reason })?;
        }
        Ok(PlayDataset {
            id: id.into(),
            obs_shape,
            action_space,
            samples,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn set_id(&mut self, id: impl Into<String>) {
        self.id = id.into();
    }

    pub fn obs_shape(&self) -> &ObsShape {
        &self.obs_shape
    }

    pub fn action_space(&self) -> ActionSpace {
        self.action_space
    }

    pub fn samples(&self) -> &[PlaySample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Draw `n` samples without replacement, deterministically per seed.
    ///
    /// Selected samples keep their original relative order.  The subset id
    /// is derived from the parent id and the seed.
    pub fn sample_subset(&self, n: usize, seed: u64) -> Result<PlayDataset, DatasetError> {
        if n > self.samples.len() {
            return Err(DatasetError::SubsetTooLarge {
                requested: n,
                available: self.samples.len(),
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut picked = rand::seq::index::sample(&mut rng, self.samples.len(), n).into_vec();
        picked.sort_unstable();
        let samples = picked.iter().map(|&i| self.samples[i].clone()).collect();
        Ok(PlayDataset {
            id: format!("{}-sub{}", self.id, seed),
            obs_shape: self.obs_shape.clone(),
            action_space: self.action_space,
            samples,
        })
    }
}

// ---------------------------------------------------------------------------
// Binary container
// ---------------------------------------------------------------------------

fn write_u16(w: &mut impl Write, v: u16) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn write_u32(w: &mut impl Write, v: u32) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn write_u64(w: &mut impl Write, v: u64) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn read_exact_or(r: &mut impl Read, buf: &mut [u8], on_eof: DatasetError) -> Result<(), DatasetError> {
    match r.read_exact(buf) {
        Ok(()) => Ok(()),
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => Err(on_eof),
        Err(e) => Err(DatasetError::Io(e)),
    }
}

fn read_u16(r: &mut impl Read, on_eof: impl Fn() -> DatasetError) -> Result<u16, DatasetError> {
    let mut b = [0u8; 2];
    read_exact_or(r, &mut b, on_eof())?;
    Ok(u16::from_le_bytes(b))
}

fn read_u32(r: &mut impl Read, on_eof: impl Fn() -> DatasetError) -> Result<u32, DatasetError> {
    let mut b = [0u8; 4];
    read_exact_or(r, &mut b, on_eof())?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read, on_eof: impl Fn() -> DatasetError) -> Result<u64, DatasetError> {
    let mut b = [0u8; 8];
    read_exact_or(r, &mut b, on_eof())?;
    Ok(u64::from_le_bytes(b))
}

fn truncated_header() -> DatasetError {
    DatasetError::Corrupt {
        record: 0,
        reason: "file ends inside the header".to_string(),
    }
}

/// Serialize a dataset to any writer in `.psty` layout.
pub fn write_dataset(ds: &PlayDataset, w: &mut impl Write) -> Result<(), DatasetError> {
    w.write_all(&PSTY_MAGIC)?;
    write_u16(w, PSTY_VERSION)?;
    let dims = &ds.obs_shape.0;
    if dims.is_empty() || dims.len() > u8::MAX as usize {
        return Err(DatasetError::BadHeader(format!("rank {} not in 1..=255", dims.len())));
    }
    w.write_all(&[dims.len() as u8])?;
    for &d in dims {
        let d = u32::try_from(d).map_err(|_| DatasetError::BadHeader(format!("dim {d} exceeds u32")))?;
        write_u32(w, d)?;
    }
    let (tag, size) = match ds.action_space {
        ActionSpace::Discrete { .. } => (0u8, ds.action_space.size_field()),
        ActionSpace::Continuous { .. } => (1u8, ds.action_space.size_field()),
    };
    w.write_all(&[tag])?;
    let size = u32::try_from(size).map_err(|_| DatasetError::BadHeader("action size exceeds u32".into()))?;
    write_u32(w, size)?;
    write_u64(w, ds.samples.len() as u64)?;
    for sample in &ds.samples {
        w.write_all(sample.observation.data())?;
        match &sample.action {
            Action::Discrete(idx) => write_u32(w, *idx)?,
            Action::Continuous(v) => {
                for &x in v {
                    w.write_all(&x.to_le_bytes())?;
                }
            }
        }
    }
    Ok(())
}

/// Write a dataset to `path`, creating or replacing the file.
pub fn save_dataset(ds: &PlayDataset, path: impl AsRef<Path>) -> Result<(), DatasetError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_dataset(ds, &mut w)?;
    w.flush()?;
    Ok(())
}

/// Deserialize a dataset from any reader.  `id` labels the result.
pub fn read_dataset(r: &mut impl Read, id: impl Into<String>) -> Result<PlayDataset, DatasetError> {
    let mut magic = [0u8; 4];
    read_exact_or(r, &mut magic, DatasetError::BadMagic)?;
    if magic != PSTY_MAGIC {
        return Err(DatasetError::BadMagic);
    }
    let version = read_u16(r, truncated_header)?;
    if version != PSTY_VERSION {
        return Err(DatasetError::UnsupportedVersion(version));
    }
    let mut rank = [0u8; 1];
    read_exact_or(r, &mut rank, truncated_header())?;
    if rank[0] == 0 {
        return Err(DatasetError::BadHeader("rank 0 observation".into()));
    }
    let mut dims = Vec::with_capacity(rank[0] as usize);
    for _ in 0..rank[0] {
        dims.push(read_u32(r, truncated_header)? as usize);
    }
    let shape = ObsShape(dims);
    let obs_len = shape.element_count();
    if obs_len == 0 {
        return Err(DatasetError::BadHeader("zero-sized observation shape".into()));
    }
    let mut tag = [0u8; 1];
    read_exact_or(r, &mut tag, truncated_header())?;
    let size = read_u32(r, truncated_header)? as usize;
    let action_space = match tag[0] {
        0 => ActionSpace::Discrete { n_actions: size },
        1 => ActionSpace::Continuous { dim: size },
        t => return Err(DatasetError::BadHeader(format!("unknown action tag {t}"))),
    };
    if size == 0 {
        return Err(DatasetError::BadHeader("action size 0".into()));
    }
    let count = read_u64(r, truncated_header)? as usize;

    let truncated = |record: usize| DatasetError::Corrupt {
        record,
        reason: "file ends inside this record".to_string(),
    };
    let mut samples = Vec::with_capacity(count.min(1 << 20));
    for record in 0..count {
        let mut data = vec![0u8; obs_len];
        read_exact_or(r, &mut data, truncated(record))?;
        let action = match action_space {
            ActionSpace::Discrete { n_actions } => {
                let idx = read_u32(r, || truncated(record))?;
                if idx as usize >= n_actions {
                    return Err(DatasetError::Corrupt {
                        record,
                        reason: format!("action index {idx} out of range (< {n_actions})"),
                    });
                }
                Action::Discrete(idx)
            }
            ActionSpace::Continuous { dim } => {
                let mut v = Vec::with_capacity(dim);
                for _ in 0..dim {
                    let mut b = [0u8; 4];
                    read_exact_or(r, &mut b, truncated(record))?;
                    let x = f32::from_le_bytes(b);
                    if !x.is_finite() {
                        return Err(DatasetError::Corrupt {
                            record,
                            reason: format!("non-finite action component {x}"),
                        });
                    }
                    v.push(x);
                }
                Action::Continuous(v)
            }
        };
        samples.push(PlaySample {
            observation: Observation { shape: shape.clone(), data },
            action,
        });
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(DatasetError::TrailingBytes);
    }
    Ok(PlayDataset {
        id: id.into(),
        obs_shape: shape,
        action_space,
        samples,
    })
}

/// Load a `.psty` file.  The dataset id is the file stem.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<PlayDataset, DatasetError> {
    let path = path.as_ref();
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".to_string());
    let mut r = BufReader::new(File::open(path)?);
    read_dataset(&mut r, id)
}
