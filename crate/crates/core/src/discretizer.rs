//! Observation-to-state mappers and per-dataset state tables.
//!
//! A *discrete state* is a fixed-length code of small integers.  Three
//! mapper families produce them:
//!
//! * [`StateMapper::Pixel`] — the raw intensity tensor itself (every pixel
//!   becomes a code symbol).  Mostly a baseline: real image streams almost
//!   never repeat exactly, so pixel states rarely intersect across datasets.
//! * [`StateMapper::Lrd`] — low-resolution downsample: each frame is
//!   bilinearly resized and intensities are floor-divided, which coarsens
//!   both space and intensity so states recur.
//! * [`StateMapper::Hsd`] — codes from a trained hierarchical state
//!   discretization model (see [`crate::hsd`]).
//!
//! [`build_state_table`] folds a dataset through a mapper into a
//! [`StateTable`]: per state, the visit count and the multiset of recorded
//! actions taken there.

use std::collections::HashMap;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use ndarray::{Array2, ArrayView2};
use thiserror::Error;

use crate::dataset::{Action, ActionSpace, Observation, PlayDataset};
use crate::hsd::HsdModel;

/// Errors from state mapping and table building.
#[derive(Debug, Error)]
pub enum MapError {
    #[error("mapper requires rank-3 observations (frames x height x width), got rank {0}")]
    NeedsFrames(usize),
    #[error("mapper configured with {0}")]
    BadConfig(String),
    #[error("observation shape {got} does not match the mapper's expected {expected}")]
    ShapeMismatch { expected: String, got: String },
    #[error("feature/codebook width mismatch: {0} vs {1}")]
    WidthMismatch(usize, usize),
    #[error("codebook is empty")]
    EmptyCodebook,
    #[error("code symbol {0} exceeds the u16 symbol range")]
    SymbolRange(usize),
}

// ---------------------------------------------------------------------------
// Discrete states
// ---------------------------------------------------------------------------

/// A discrete state: a fixed-length code of small integers.
///
/// Equality compares the full code; the precomputed 64-bit digest only
/// feeds hashing, so hash collisions can never merge distinct codes.
#[derive(Clone, Debug, Eq)]
pub struct DiscreteState {
    code: Vec<u16>,
    digest: u64,
}

impl DiscreteState {
    pub fn new(code: Vec<u16>) -> Self {
        let digest = fnv1a(&code);
        DiscreteState { code, digest }
    }

    /// Build from raw indices, checking the u16 symbol range.
    pub fn from_indices(indices: &[usize]) -> Result<Self, MapError> {
        let code = indices
            .iter()
            .map(|&i| u16::try_from(i).map_err(|_| MapError::SymbolRange(i)))
            .collect::<Result<Vec<u16>, _>>()?;
        Ok(DiscreteState::new(code))
    }

    pub fn code(&self) -> &[u16] {
        &self.code
    }

    /// Stable 64-bit digest, handy as a compact display label.
    pub fn digest(&self) -> u64 {
        self.digest
    }
}

impl PartialEq for DiscreteState {
    fn eq(&self, other: &Self) -> bool {
        self.code == other.code
    }
}

impl Hash for DiscreteState {
    fn hash<H: Hasher>(&self, state: &mut H) {
        state.write_u64(self.digest);
    }
}

impl PartialOrd for DiscreteState {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for DiscreteState {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.code.cmp(&other.code)
    }
}

/// FNV-1a over the little-endian bytes of the code.  Stable across runs
/// and platforms, unlike the std hasher's random keys.
fn fnv1a(code: &[u16]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &sym in code {
        for b in sym.to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}

// ---------------------------------------------------------------------------
// Primitive transforms
// ---------------------------------------------------------------------------

/// Bilinear resize with half-pixel-center alignment: output pixel centers
/// are mapped uniformly into the input extent (`src = (dst + 0.5) * in/out
/// - 0.5`), with edge clamping.  Resizing to the input size is the
/// identity, constant images stay constant, and outputs never leave the
/// input value range.
pub fn bilinear_resize(img: ArrayView2<'_, f64>, out_h: usize, out_w: usize) -> Array2<f64> {
    let (in_h, in_w) = img.dim();
    assert!(in_h > 0 && in_w > 0 && out_h > 0 && out_w > 0, "empty resize");
    let mut out = Array2::zeros((out_h, out_w));
    let sy = in_h as f64 / out_h as f64;
    let sx = in_w as f64 / out_w as f64;
    for oy in 0..out_h {
        let fy = ((oy as f64 + 0.5) * sy - 0.5).clamp(0.0, (in_h - 1) as f64);
        let y0 = fy.floor() as usize;
        let y1 = (y0 + 1).min(in_h - 1);
        let wy = fy - y0 as f64;
        for ox in 0..out_w {
            let fx = ((ox as f64 + 0.5) * sx - 0.5).clamp(0.0, (in_w - 1) as f64);
            let x0 = fx.floor() as usize;
            let x1 = (x0 + 1).min(in_w - 1);
            let wx = fx - x0 as f64;
            let top = img[(y0, x0)] * (1.0 - wx) + img[(y0, x1)] * wx;
            let bot = img[(y1, x0)] * (1.0 - wx) + img[(y1, x1)] * wx;
            out[(oy, ox)] = top * (1.0 - wy) + bot * wy;
        }
    }
    out
}

/// View one frame of a rank-3 observation as an `f64` grid.
fn frame_grid(obs: &Observation, frame: usize, h: usize, w: usize) -> Array2<f64> {
    let base = frame * h * w;
    Array2::from_shape_fn((h, w), |(y, x)| obs.data()[base + y * w + x] as f64)
}

/// Raw-pixel state: every intensity is a code symbol.
pub fn pixel_map(obs: &Observation) -> DiscreteState {
    DiscreteState::new(obs.data().iter().map(|&b| b as u16).collect())
}

/// Low-resolution downsample state: each frame is bilinearly resized to
/// `out_h x out_w`, then intensities are floor-divided by `intensity_div`.
pub fn lrd_map(
    obs: &Observation,
    out_h: usize,
    out_w: usize,
    intensity_div: u32,
) -> Result<DiscreteState, MapError> {
    let (frames, h, w) = obs
        .shape()
        .as_frames_hw()
        .ok_or(MapError::NeedsFrames(obs.shape().0.len()))?;
    if intensity_div == 0 {
        return Err(MapError::BadConfig("intensity divisor 0".into()));
    }
    if out_h == 0 || out_w == 0 {
        return Err(MapError::BadConfig("zero output size".into()));
    }
    let mut code = Vec::with_capacity(frames * out_h * out_w);
    for f in 0..frames {
        let grid = frame_grid(obs, f, h, w);
        let small = bilinear_resize(grid.view(), out_h, out_w);
        for &v in small.iter() {
            code.push((v / intensity_div as f64).floor() as u16);
        }
    }
    Ok(DiscreteState::new(code))
}

/// Nearest-codebook-row quantization.
///
/// For each row of `z` the index of the codebook row with the smallest
/// squared Euclidean distance is chosen; exact ties break toward the
/// lowest index.  Returns the indices and the quantized matrix whose rows
/// are the selected codebook rows, copied bit-exactly.
pub fn quantize(
    z: ArrayView2<'_, f64>,
    codebook: ArrayView2<'_, f64>,
) -> Result<(Vec<usize>, Array2<f64>), MapError> {
    let (cells, dim) = z.dim();
    let (k, cdim) = codebook.dim();
    if k == 0 {
        return Err(MapError::EmptyCodebook);
    }
    if dim != cdim {
        return Err(MapError::WidthMismatch(dim, cdim));
    }
    let mut indices = Vec::with_capacity(cells);
    let mut z_q = Array2::zeros((cells, dim));
    for (row_idx, row) in z.outer_iter().enumerate() {
        let mut best = 0usize;
        let mut best_d = f64::INFINITY;
        for (j, entry) in codebook.outer_iter().enumerate() {
            let mut d = 0.0;
            for (a, b) in row.iter().zip(entry.iter()) {
                let r = a - b;
                d += r * r;
            }
            if d < best_d {
                best_d = d;
                best = j;
            }
        }
        indices.push(best);
        z_q.row_mut(row_idx).assign(&codebook.row(best));
    }
    Ok((indices, z_q))
}

/// State from a trained hierarchical discretization model.
pub fn hsd_map(
    model: &HsdModel,
    obs: &Observation,
    hierarchy: usize,
) -> Result<DiscreteState, MapError> {
    let codes = model.encode_states(std::slice::from_ref(obs), hierarchy)?;
    Ok(codes.into_iter().next().expect("one observation in, one code out"))
}

// ---------------------------------------------------------------------------
// Mappers and state tables
// ---------------------------------------------------------------------------

/// An immutable, shareable observation-to-state mapper.
#[derive(Clone)]
pub enum StateMapper {
    /// Raw intensities.
    Pixel,
    /// Low-resolution downsample.
    Lrd { out_h: usize, out_w: usize, intensity_div: u32 },
    /// Trained hierarchical discretization model at a given hierarchy
    /// (0 = base, 1 = top).
    Hsd { model: Arc<HsdModel>, hierarchy: usize },
}

impl StateMapper {
    /// Map one observation to its state.
    pub fn map(&self, obs: &Observation) -> Result<DiscreteState, MapError> {
        match self {
            StateMapper::Pixel => Ok(pixel_map(obs)),
            StateMapper::Lrd { out_h, out_w, intensity_div } => {
                lrd_map(obs, *out_h, *out_w, *intensity_div)
            }
            StateMapper::Hsd { model, hierarchy } => hsd_map(model, obs, *hierarchy),
        }
    }

    /// Map a batch of observations.  The learned mapper encodes the whole
    /// batch with matrix products, which is much faster than per-sample
    /// calls; the cheap mappers just loop.
    pub fn map_batch(&self, observations: &[Observation]) -> Result<Vec<DiscreteState>, MapError> {
        match self {
            StateMapper::Hsd { model, hierarchy } => model.encode_states(observations, *hierarchy),
            _ => observations.iter().map(|o| self.map(o)).collect(),
        }
    }

    /// Short human-readable description for logs and config echoes.
    pub fn describe(&self) -> String {
        match self {
            StateMapper::Pixel => "pixel".to_string(),
            StateMapper::Lrd { out_h, out_w, intensity_div } => {
                format!("lrd:{out_h}x{out_w}:{intensity_div}")
            }
            StateMapper::Hsd { hierarchy, .. } => format!("hsd:h{hierarchy}"),
        }
    }
}

/// Everything recorded about one state in one dataset.
#[derive(Clone, Debug)]
pub struct StateEntry {
    actions: Vec<Action>,
}

impl StateEntry {
    /// Visit count; by construction equal to the number of recorded actions.
    pub fn count(&self) -> usize {
        self.actions.len()
    }

    pub fn actions(&self) -> &[Action] {
        &self.actions
    }
}

/// Per-dataset index: state -> visit count and recorded actions.
#[derive(Clone, Debug)]
pub struct StateTable {
    action_space: ActionSpace,
    entries: HashMap<DiscreteState, StateEntry>,
    total: usize,
}

impl StateTable {
    /// Assemble a table directly from (state, actions) pairs — used by
    /// tests and synthetic fixtures.  Pairs with duplicate states merge.
    pub fn from_entries(
        action_space: ActionSpace,
        pairs: impl IntoIterator<Item = (DiscreteState, Vec<Action>)>,
    ) -> Self {
        let mut table = StateTable { action_space, entries: HashMap::new(), total: 0 };
        for (state, actions) in pairs {
            table.total += actions.len();
            table.entries.entry(state).or_insert_with(|| StateEntry { actions: Vec::new() })
                .actions
                .extend(actions);
        }
        table
    }

    pub fn action_space(&self) -> ActionSpace {
        self.action_space
    }

    /// Number of distinct states.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total samples folded into the table.
    pub fn total_samples(&self) -> usize {
        self.total
    }

    /// Visit count for a state (0 if absent).
    pub fn count(&self, state: &DiscreteState) -> usize {
        self.entries.get(state).map_or(0, StateEntry::count)
    }

    pub fn entry(&self, state: &DiscreteState) -> Option<&StateEntry> {
        self.entries.get(state)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&DiscreteState, &StateEntry)> {
        self.entries.iter()
    }

    /// States in deterministic (lexicographic code) order.
    pub fn sorted_states(&self) -> Vec<&DiscreteState> {
        let mut states: Vec<&DiscreteState> = self.entries.keys().collect();
        states.sort();
        states
    }
}

/// Fold a dataset through a mapper into its state table.
pub fn build_state_table(mapper: &StateMapper, ds: &PlayDataset) -> Result<StateTable, MapError> {
    // Surface incompatibilities before doing any work.
    match mapper {
        StateMapper::Lrd { .. } => {
            if ds.obs_shape().as_frames_hw().is_none() {
                return Err(MapError::NeedsFrames(ds.obs_shape().0.len()));
            }
        }
        StateMapper::Hsd { model, .. } => {
            if model.config().obs_shape != *ds.obs_shape() {
                return Err(MapError::ShapeMismatch {
                    expected: model.config().obs_shape.to_string(),
                    got: ds.obs_shape().to_string(),
                });
            }
        }
        StateMapper::Pixel => {}
    }
    let observations: Vec<Observation> =
        ds.samples().iter().map(|s| s.observation.clone()).collect();
    let states = mapper.map_batch(&observations)?;
    let mut entries: HashMap<DiscreteState, StateEntry> = HashMap::new();
    for (state, sample) in states.into_iter().zip(ds.samples()) {
        entries
            .entry(state)
            .or_insert_with(|| StateEntry { actions: Vec::new() })
            .actions
            .push(sample.action.clone());
    }
    Ok(StateTable { action_space: ds.action_space(), entries, total: ds.len() })
}
