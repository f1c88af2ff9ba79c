//! Hierarchical state discretization (HSD).
//!
//! A two-level vector-quantized autoencoder trained on recorded play.  The
//! base level encodes an observation patch-wise into a grid of latent
//! cells and quantizes each cell against a base codebook.  A
//! fully-connected encoder then compresses the quantized base latent into
//! a narrow code, folds it into `cells` chunks, and quantizes each chunk
//! against a tiny top codebook — the top-level code (e.g. 20 cells of a
//! 2-entry codebook, a 2^20 state space) is the discrete state used by the
//! playstyle metric.
//!
//! Two decoders drive the training signal: an observation reconstructor
//! and an action (policy) head.  The hierarchy decoder reconstructs the
//! base latent from the top code, and the decoders consume a per-batch
//! random blend `alpha * zq0 + (1 - alpha) * dec1(zq1)` of the two, so
//! both levels learn to carry the information alone.
//!
//! Quantization has no gradient; training copies the task-loss gradient
//! across each quantizer onto the encoder side and adds `beta` times the
//! quantization (commitment) gradient.  Codebooks update only from their
//! own quantization loss.  All of it is hand-derived backpropagation —
//! see [`backward`] — and is verified against central finite differences
//! in the test suite.

mod backward;
mod forward;
mod io;
mod model;
mod optim;
mod train;


pub use backward::{backward, Gradients};
pub use forward::{forward, forward_frozen, ForwardTrace, Losses};
pub use io::{load_model, read_model, save_model, write_model, HSDM_MAGIC, HSDM_VERSION};
pub use model::{codebook_usage, HsdModel};
pub use train::{train, StepRecord, TrainLog};

use std::io as stdio;

use thiserror::Error;

use crate::dataset::{ActionSpace, ObsShape};
use crate::discretizer::MapError;

/// Model and training configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct HsdConfig {
    /// Observation shape, `(frames, height, width)`.
    pub obs_shape: ObsShape,
    /// What the policy head predicts.
    pub action_space: ActionSpace,
    /// Patch edge length for the base (patch-affine) encoder; must divide
    /// both height and width.
    pub patch: usize,
    /// Latent width of one base cell.
    pub base_dim: usize,
    /// Base codebook entries.
    pub base_codebook: usize,
    /// Width of the top hierarchy's latent code; must be divisible by
    /// `cells`.
    pub latent_width: usize,
    /// Number of top-level code cells.
    pub cells: usize,
    /// Top codebook entries (per cell).
    pub codebook: usize,
    /// Hidden width of the observation reconstructor.
    pub rec_hidden: usize,
    /// Hidden width of the policy head.
    pub pi_hidden: usize,
    /// Weight of the quantization-loss gradient into the encoders.
    pub beta: f64,
    /// Huber transition point for all regression losses.
    pub huber_delta: f64,
    /// Adam step size.
    pub learn_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Std of the Gaussian pixel noise added on the 0-255 scale during
    /// training (0 disables it).
    pub pixel_noise_std: f64,
    pub seed: u64,
}

impl HsdConfig {
    /// Defaults for the given data: a 2^20 top state space (20 cells of a
    /// 2-entry codebook over a 500-wide latent).
    pub fn new(obs_shape: ObsShape, action_space: ActionSpace) -> Self {
        HsdConfig {
            obs_shape,
            action_space,
            patch: 8,
            base_dim: 32,
            base_codebook: 64,
            latent_width: 500,
            cells: 20,
            codebook: 2,
            rec_hidden: 128,
            pi_hidden: 64,
            beta: 0.25,
            huber_delta: 1.0,
            learn_rate: 3e-4,
            batch_size: 32,
            epochs: 12,
            pixel_noise_std: 4.0,
            seed: 1,
        }
    }

    pub fn validate(&self) -> Result<(), HsdError> {
        let (_f, h, w) = self
            .obs_shape
            .as_frames_hw()
            .ok_or_else(|| HsdError::Config("observations must be frames x height x width".into()))?;
        if self.patch == 0 || h % self.patch != 0 || w % self.patch != 0 {
            return Err(HsdError::Config(format!(
                "patch {} must divide the {h}x{w} frame",
                self.patch
            )));
        }
        if self.cells == 0 || self.latent_width % self.cells != 0 {
            return Err(HsdError::Config(format!(
                "latent width {} must be divisible by {} cells",
                self.latent_width, self.cells
            )));
        }
        if self.codebook == 0 || self.base_codebook == 0 {
            return Err(HsdError::Config("codebooks need at least one entry".into()));
        }
        if self.codebook > (u16::MAX as usize + 1) || self.base_codebook > (u16::MAX as usize + 1) {
            return Err(HsdError::Config("codebook sizes beyond the u16 symbol range".into()));
        }
        if self.base_dim == 0 || self.rec_hidden == 0 || self.pi_hidden == 0 {
            return Err(HsdError::Config("layer widths must be positive".into()));
        }
        match self.action_space {
            ActionSpace::Discrete { n_actions } if n_actions == 0 => {
                return Err(HsdError::Config("discrete action space needs actions".into()));
            }
            ActionSpace::Continuous { dim } if dim == 0 => {
                return Err(HsdError::Config("continuous action space needs dimensions".into()));
            }
            _ => {}
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(HsdError::Config("beta must be finite and non-negative".into()));
        }
        if !(self.huber_delta > 0.0) {
            return Err(HsdError::Config("huber delta must be positive".into()));
        }
        if !(self.learn_rate > 0.0) {
            return Err(HsdError::Config("learn rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(HsdError::Config("batch size must be positive".into()));
        }
        if !(self.pixel_noise_std >= 0.0) {
            return Err(HsdError::Config("pixel noise std must be non-negative".into()));
        }
        Ok(())
    }

    /// Cells in the base latent grid: `(h / patch) * (w / patch)`.
    pub fn base_cells(&self) -> usize {
        let (_f, h, w) = self.obs_shape.as_frames_hw().expect("validated");
        (h / self.patch) * (w / self.patch)
    }

    /// Inputs to one base cell: `frames * patch * patch`.
    pub fn patch_input(&self) -> usize {
        let (f, ..) = self.obs_shape.as_frames_hw().expect("validated");
        f * self.patch * self.patch
    }

    /// Width of the flattened base latent.
    pub fn base_width(&self) -> usize {
        self.base_cells() * self.base_dim
    }

    /// Width of one top-level cell: `latent_width / cells`.
    pub fn cell_dim(&self) -> usize {
        self.latent_width / self.cells
    }

    /// Total observation elements.
    pub fn obs_len(&self) -> usize {
        self.obs_shape.element_count()
    }

    /// Policy head output width.
    pub fn action_out(&self) -> usize {
        match self.action_space {
            ActionSpace::Discrete { n_actions } => n_actions,
            ActionSpace::Continuous { dim } => dim,
        }
    }
}

/// Errors from model construction, training, and serialization.
#[derive(Debug, Error)]
pub enum HsdError {
    #[error("bad model config: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("forward trace does not match this batch")]
    StaleTrace,
    #[error("training diverged (non-finite loss) at step {step}")]
    Diverged { step: usize },
    #[error("cannot train on an empty dataset")]
    EmptyDataset,
    #[error(transparent)]
    Map(#[from] MapError),
    #[error("i/o error: {0}")]
    Io(#[from] stdio::Error),
    #[error("not a valid model file: {0}")]
    Format(String),
}

/// Huber value with transition point `delta`, elementwise on a residual.
#[inline]
pub(crate) fn huber(r: f64, delta: f64) -> f64 {
    let a = r.abs();
    if a <= delta {
        0.5 * r * r
    } else {
        delta * (a - 0.5 * delta)
    }
}

/// Derivative of [`huber`] with respect to the residual.
#[inline]
pub(crate) fn huber_grad(r: f64, delta: f64) -> f64 {
    if r.abs() <= delta {
        r
    } else {
        delta * r.signum()
    }
}
