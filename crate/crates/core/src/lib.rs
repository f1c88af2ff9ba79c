//! Playstyle similarity toolkit.
//!
//! The crate measures how similarly two actors play a game by comparing
//! what they *do* in comparable situations.  Observations are mapped to
//! discrete states, per-state action distributions are estimated from
//! recorded play, and a weighted aggregate of per-state distribution
//! distances yields a playstyle distance between two datasets.
//!
//! Pipeline overview:
//!
//! 1. [`dataset`] — recorded observation/action pairs and the `.psty`
//!    on-disk container.
//! 2. [`discretizer`] — observation-to-state mappers (raw pixels, a
//!    low-resolution downsample, or a learned hierarchical encoder) and
//!    per-dataset state tables.
//! 3. [`distribution`] — categorical and Gaussian action models plus the
//!    distances between them.
//! 4. [`metric`] — intersection-state selection and the playstyle
//!    distance itself, together with style prediction and accuracy.
//! 5. [`hsd`] — the trainable hierarchical state discretization model.
//! 6. [`sim`] — a small styled racer used to generate labelled corpora.
//! 7. [`experiment`] — grid-generation and prediction-accuracy protocols
//!    built from the pieces above.

pub mod dataset;
pub mod discretizer;
pub mod distribution;
pub mod experiment;
pub mod golden;
pub mod hsd;
pub mod metric;
pub mod sim;

pub use dataset::{Action, ActionSpace, DatasetError, ObsShape, Observation, PlayDataset, PlaySample};
pub use discretizer::{DiscreteState, MapError, StateMapper, StateTable};
pub use distribution::{CategoricalDist, DistError, GaussianDist, SquareMat};
pub use hsd::{HsdConfig, HsdError, HsdModel, TrainLog};
pub use metric::{Aggregation, DistanceKind, DistanceResult, MetricConfig, MetricError};
pub use sim::{SimConfig, StyleSpec};
