//! Model parameters, seeded initialization, and discrete-state encoding.

use std::collections::HashSet;

use ndarray::{Array2, ArrayView2, ArrayViewMut2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{Observation, PlayDataset};
use crate::discretizer::{quantize, DiscreteState, MapError};

use super::{HsdConfig, HsdError};

/// Samples encoded per block when mapping whole datasets, to bound the
/// transient patch matrices.
const ENCODE_BLOCK: usize = 1024;

/// All learnable tensors.  Biases are stored as single-row matrices so
/// every parameter is uniformly rank 2; that keeps the optimizer and the
/// on-disk container free of rank special cases.
#[derive(Clone, Debug)]
pub(crate) struct Params {
    pub enc0_w: Array2<f64>,
    pub enc0_b: Array2<f64>,
    pub embed0: Array2<f64>,
    pub enc1_w: Array2<f64>,
    pub enc1_b: Array2<f64>,
    pub embed1: Array2<f64>,
    pub dec1_w: Array2<f64>,
    pub dec1_b: Array2<f64>,
    pub rec_w1: Array2<f64>,
    pub rec_b1: Array2<f64>,
    pub rec_w2: Array2<f64>,
    pub rec_b2: Array2<f64>,
    pub pi_w1: Array2<f64>,
    pub pi_b1: Array2<f64>,
    pub pi_w2: Array2<f64>,
    pub pi_b2: Array2<f64>,
}

/// Canonical tensor order; serialization, the optimizer, and gradient
/// accumulation all iterate in this order.
macro_rules! for_each_tensor {
    ($mac:ident) => {
        $mac!(
            enc0_w, enc0_b, embed0, enc1_w, enc1_b, embed1, dec1_w, dec1_b, rec_w1, rec_b1,
            rec_w2, rec_b2, pi_w1, pi_b1, pi_w2, pi_b2
        )
    };
}

impl Params {
    /// Tensor shapes implied by a (validated) config.
    fn shapes(cfg: &HsdConfig) -> [(&'static str, (usize, usize)); 16] {
        let pin = cfg.patch_input();
        let d0 = cfg.base_dim;
        let bw = cfg.base_width();
        let l1 = cfg.latent_width;
        let cd = cfg.cell_dim();
        [
            ("enc0_w", (pin, d0)),
            ("enc0_b", (1, d0)),
            ("embed0", (cfg.base_codebook, d0)),
            ("enc1_w", (bw, l1)),
            ("enc1_b", (1, l1)),
            ("embed1", (cfg.codebook, cd)),
            ("dec1_w", (l1, bw)),
            ("dec1_b", (1, bw)),
            ("rec_w1", (bw, cfg.rec_hidden)),
            ("rec_b1", (1, cfg.rec_hidden)),
            ("rec_w2", (cfg.rec_hidden, cfg.obs_len())),
            ("rec_b2", (1, cfg.obs_len())),
            ("pi_w1", (bw, cfg.pi_hidden)),
            ("pi_b1", (1, cfg.pi_hidden)),
            ("pi_w2", (cfg.pi_hidden, cfg.action_out())),
            ("pi_b2", (1, cfg.action_out())),
        ]
    }

    pub(crate) fn zeros(cfg: &HsdConfig) -> Params {
        let mut it = Params::shapes(cfg).into_iter().map(|(_, s)| Array2::zeros(s));
        macro_rules! take {
            ($($f:ident),* $(,)?) => {
                Params { $($f: it.next().expect("shape list covers all fields")),* }
            };
        }
        for_each_tensor!(take)
    }

    pub(crate) fn named(&self) -> Vec<(&'static str, &Array2<f64>)> {
        macro_rules! list {
            ($($f:ident),* $(,)?) => { vec![$((stringify!($f), &self.$f)),*] };
        }
        for_each_tensor!(list)
    }

    pub(crate) fn named_mut(&mut self) -> Vec<(&'static str, &mut Array2<f64>)> {
        macro_rules! list {
            ($($f:ident),* $(,)?) => { vec![$((stringify!($f), &mut self.$f)),*] };
        }
        for_each_tensor!(list)
    }
}

/// A trained (or freshly initialized) discretization model.
#[derive(Clone, Debug)]
pub struct HsdModel {
    cfg: HsdConfig,
    pub(crate) params: Params,
}

impl HsdModel {
    /// Builds a model with seeded random parameters: codebooks from a
    /// truncated normal (sigma 0.02, resampled beyond two sigma), weights
    /// uniform in `+-sqrt(1 / fan_in)`, biases zero.
    pub fn init(cfg: HsdConfig) -> Result<HsdModel, HsdError> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut params = Params::zeros(&cfg);
        for (name, tensor) in params.named_mut() {
            match name {
                "embed0" | "embed1" => fill_trunc_normal(tensor, 0.02, &mut rng),
                _ if name.ends_with("_b") => {} // biases stay zero
                _ => {
                    let fan_in = tensor.nrows();
                    let bound = (1.0 / fan_in as f64).sqrt();
                    for v in tensor.iter_mut() {
                        *v = rng.random_range(-bound..bound);
                    }
                }
            }
        }
        Ok(HsdModel { cfg, params })
    }

    pub fn config(&self) -> &HsdConfig {
        &self.cfg
    }

    pub(crate) fn from_parts(cfg: HsdConfig, params: Params) -> HsdModel {
        HsdModel { cfg, params }
    }

    /// Normalizes raw observations into a `(n, obs_len)` matrix in `[0, 1]`.
    pub(crate) fn normalize(&self, obs: &[&Observation]) -> Result<Array2<f64>, MapError> {
        let len = self.cfg.obs_len();
        let mut x = Array2::zeros((obs.len(), len));
        for (i, o) in obs.iter().enumerate() {
            if *o.shape() != self.cfg.obs_shape {
                return Err(MapError::ShapeMismatch {
                    expected: self.cfg.obs_shape.to_string(),
                    got: o.shape().to_string(),
                });
            }
            let mut row = x.row_mut(i);
            for (dst, src) in row.iter_mut().zip(o.data()) {
                *dst = f64::from(*src) / 255.0;
            }
        }
        Ok(x)
    }

    /// Rearranges normalized observations into per-cell patch rows:
    /// `(n * base_cells, frames * patch * patch)`, cells in row-major grid
    /// order, columns ordered frame-major then row-major within the patch.
    pub(crate) fn patches(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let (f, h, w) = self.cfg.obs_shape.as_frames_hw().expect("validated");
        let p = self.cfg.patch;
        let (gh, gw) = (h / p, w / p);
        let n = x.nrows();
        let mut out = Array2::zeros((n * gh * gw, f * p * p));
        for b in 0..n {
            let row = x.row(b);
            for gy in 0..gh {
                for gx in 0..gw {
                    let mut dst = out.row_mut(b * gh * gw + gy * gw + gx);
                    let mut c = 0;
                    for fr in 0..f {
                        for dy in 0..p {
                            let base = fr * h * w + (gy * p + dy) * w + gx * p;
                            for dx in 0..p {
                                dst[c] = row[base + dx];
                                c += 1;
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// Base-level pre-quantization latent for normalized input rows.
    pub(crate) fn encode_base(&self, x: ArrayView2<f64>) -> (Array2<f64>, Array2<f64>) {
        let patches = self.patches(x);
        let mut z = patches.dot(&self.params.enc0_w) + &self.params.enc0_b;
        z.mapv_inplace(f64::tanh);
        (patches, z)
    }

    /// Top-level pre-quantization latent from the flattened quantized base
    /// latent, reshaped to `(n * cells, cell_dim)`.
    pub(crate) fn encode_top(&self, zq0_flat: ArrayView2<f64>) -> Array2<f64> {
        let mut z = zq0_flat.dot(&self.params.enc1_w) + &self.params.enc1_b;
        z.mapv_inplace(f64::tanh);
        let n = z.nrows();
        z.into_shape_with_order((n * self.cfg.cells, self.cfg.cell_dim()))
            .expect("latent folds into cells")
    }

    /// Encodes observations to discrete states at the given hierarchy
    /// (0 = base codes, 1 = top codes).  No noise, no sampling: the same
    /// observation always maps to the same state.
    pub fn encode_states(
        &self,
        obs: &[Observation],
        hierarchy: usize,
    ) -> Result<Vec<DiscreteState>, MapError> {
        if hierarchy > 1 {
            return Err(MapError::BadConfig(format!(
                "hierarchy {hierarchy} out of range (this model has levels 0 and 1)"
            )));
        }
        let mut states = Vec::with_capacity(obs.len());
        for block in obs.chunks(ENCODE_BLOCK.max(1)) {
            let refs: Vec<&Observation> = block.iter().collect();
            let x = self.normalize(&refs)?;
            let (_, z_e0) = self.encode_base(x.view());
            let (code0, z_q0) = quantize(z_e0.view(), self.params.embed0.view())?;
            if hierarchy == 0 {
                let width = self.cfg.base_cells();
                for chunk in code0.chunks(width) {
                    states.push(DiscreteState::from_indices(chunk)?);
                }
                continue;
            }
            let zq0_flat = z_q0
                .into_shape_with_order((block.len(), self.cfg.base_width()))
                .expect("cell rows regroup by sample");
            let z_e1 = self.encode_top(zq0_flat.view());
            let (code1, _) = quantize(z_e1.view(), self.params.embed1.view())?;
            for chunk in code1.chunks(self.cfg.cells) {
                states.push(DiscreteState::from_indices(chunk)?);
            }
        }
        Ok(states)
    }

    /// Names of all learnable tensors, in canonical order.
    pub fn tensor_names() -> [&'static str; 16] {
        [
            "enc0_w", "enc0_b", "embed0", "enc1_w", "enc1_b", "embed1", "dec1_w", "dec1_b",
            "rec_w1", "rec_b1", "rec_w2", "rec_b2", "pi_w1", "pi_b1", "pi_w2", "pi_b2",
        ]
    }

    /// A learnable tensor by name (biases are single-row matrices).
    pub fn tensor(&self, name: &str) -> Option<ArrayView2<'_, f64>> {
        self.params
            .named()
            .into_iter()
            .find(|(n, _)| *n == name)
            .map(|(_, t)| t.view())
    }

    /// Mutable access to a learnable tensor, for parameter perturbation in
    /// derivative checks.
    pub fn tensor_mut(&mut self, name: &str) -> Option<ArrayViewMut2<'_, f64>> {
        self.params
            .named_mut()
            .into_iter()
            .find(|(n, _)| *n == name)
            .map(|(_, t)| t.view_mut())
    }

    /// Mean squared parameter magnitude, a cheap fingerprint used by
    /// training diagnostics.
    pub fn param_norm(&self) -> f64 {
        let mut sum = 0.0;
        let mut n = 0usize;
        for (_, t) in self.params.named() {
            sum += t.iter().map(|v| v * v).sum::<f64>();
            n += t.len();
        }
        (sum / n as f64).sqrt()
    }
}

/// Distinct discrete states the dataset occupies at a hierarchy level.
/// After training on data that mixes several styles this should exceed
/// the number of action classes — a collapsed model funnels everything
/// into a handful of states and cannot separate styles.
pub fn codebook_usage(
    model: &HsdModel,
    ds: &PlayDataset,
    hierarchy: usize,
) -> Result<usize, MapError> {
    let obs: Vec<Observation> = ds.samples().iter().map(|s| s.observation.clone()).collect();
    let states = model.encode_states(&obs, hierarchy)?;
    let distinct: HashSet<&DiscreteState> = states.iter().collect();
    Ok(distinct.len())
}

/// Fills a tensor with a truncated normal: `N(0, sigma^2)` resampled until
/// every draw lies within two sigma.
fn fill_trunc_normal(t: &mut Array2<f64>, sigma: f64, rng: &mut ChaCha8Rng) {
    let bound = 2.0 * sigma;
    for v in t.iter_mut() {
        *v = loop {
            let draw = sigma * crate::sim::standard_normal(rng);
            if draw.abs() <= bound {
                break draw;
            }
        };
    }
}

/// Splits a batch matrix `(n, cells * dim)` into cell rows `(n * cells, dim)`.
pub(crate) fn fold_cells(a: Array2<f64>, cells: usize) -> Array2<f64> {
    let n = a.nrows();
    let dim = a.ncols() / cells;
    a.into_shape_with_order((n * cells, dim)).expect("width divides into cells")
}

/// Inverse of [`fold_cells`].
pub(crate) fn unfold_cells(a: Array2<f64>, cells: usize) -> Array2<f64> {
    let rows = a.nrows() / cells;
    let width = a.ncols() * cells;
    a.into_shape_with_order((rows, width)).expect("cell rows regroup by sample")
}

/// Sums rows into a single-row matrix (bias-gradient helper).
pub(crate) fn row_sum(a: &Array2<f64>) -> Array2<f64> {
    a.sum_axis(Axis(0)).insert_axis(Axis(0))
}
