//! Forward pass with full activation trace.

use ndarray::Array2;
use rand_chacha::ChaCha8Rng;

use crate::dataset::{Action, ActionSpace, PlaySample};
use crate::discretizer::quantize;
use crate::sim::standard_normal;

use super::model::{unfold_cells, HsdModel};
use super::{huber, HsdError};

/// The four training losses of one batch, each already averaged over the
/// batch (and over elements, for the regression terms).
#[derive(Clone, Copy, Debug)]
pub struct Losses {
    /// Observation reconstruction (mean elementwise Huber).
    pub l_rec: f64,
    /// Base-level quantization loss (mean elementwise Huber between the
    /// encoder output and its selected codebook rows).
    pub l_vq0: f64,
    /// Top-level quantization loss.
    pub l_vq1: f64,
    /// Policy loss: cross-entropy for discrete actions, mean elementwise
    /// Huber for continuous ones.
    pub l_pi: f64,
}

impl Losses {
    pub fn total(&self) -> f64 {
        self.l_rec + self.l_vq0 + self.l_vq1 + self.l_pi
    }

    pub fn is_finite(&self) -> bool {
        self.total().is_finite()
    }
}

/// Every intermediate activation of one forward pass, kept for the
/// hand-derived backward pass.
#[derive(Clone, Debug)]
pub struct ForwardTrace {
    pub(crate) batch_len: usize,
    /// Decoder input blend weight used for this batch.
    pub alpha: f64,
    /// Normalized (and possibly noised) input, `(n, obs_len)`.
    pub(crate) x: Array2<f64>,
    /// Patch rows, `(n * base_cells, patch_input)`.
    pub(crate) patches: Array2<f64>,
    /// Base encoder output (tanh), same rows as `patches`.
    pub(crate) z_e0: Array2<f64>,
    pub(crate) code0: Vec<usize>,
    /// Selected base codebook rows, same shape as `z_e0`.
    pub(crate) z_q0: Array2<f64>,
    /// Top encoder output folded to cell rows, `(n * cells, cell_dim)`.
    pub(crate) z_e1: Array2<f64>,
    pub(crate) code1: Vec<usize>,
    pub(crate) z_q1: Array2<f64>,
    /// Hierarchy decoder output (tanh), `(n, base_width)`.
    pub(crate) dec1_out: Array2<f64>,
    /// Blended decoder input `alpha * zq0 + (1 - alpha) * dec1_out`.
    pub(crate) u: Array2<f64>,
    pub(crate) rec_h: Array2<f64>,
    pub(crate) recon: Array2<f64>,
    pub(crate) pi_h: Array2<f64>,
    pub(crate) pi_out: Array2<f64>,
    pub losses: Losses,
}

impl ForwardTrace {
    /// Base-level code assignments, one row of `base_cells` symbols per
    /// batch sample.
    pub fn base_codes(&self) -> &[usize] {
        &self.code0
    }

    /// Top-level code assignments, one row of `cells` symbols per sample.
    pub fn top_codes(&self) -> &[usize] {
        &self.code1
    }
}

/// Runs the model on a batch with the codes chosen by nearest-neighbour
/// quantization and no input noise.  `alpha` is the decoder blend weight.
pub fn forward(model: &HsdModel, batch: &[PlaySample], alpha: f64) -> Result<ForwardTrace, HsdError> {
    forward_impl(model, batch, alpha, None, None)
}

/// Training-time forward: adds seeded Gaussian pixel noise (std on the
/// 0-255 scale) to the observations before normalization.
pub(crate) fn forward_noisy(
    model: &HsdModel,
    batch: &[PlaySample],
    alpha: f64,
    rng: &mut ChaCha8Rng,
    noise_std: f64,
) -> Result<ForwardTrace, HsdError> {
    forward_impl(model, batch, alpha, Some((rng, noise_std)), None)
}

/// Forward pass with the quantizer pinned to the given code assignments
/// (lengths `n * base_cells` and `n * cells`).  With codes, alpha, and
/// noise all fixed, the network is a plain differentiable function of its
/// parameters — the form the finite-difference checks exercise.
pub fn forward_frozen(
    model: &HsdModel,
    batch: &[PlaySample],
    alpha: f64,
    base_codes: &[usize],
    top_codes: &[usize],
) -> Result<ForwardTrace, HsdError> {
    forward_impl(model, batch, alpha, None, Some((base_codes, top_codes)))
}

fn forward_impl(
    model: &HsdModel,
    batch: &[PlaySample],
    alpha: f64,
    noise: Option<(&mut ChaCha8Rng, f64)>,
    frozen: Option<(&[usize], &[usize])>,
) -> Result<ForwardTrace, HsdError> {
    let cfg = model.config();
    if batch.is_empty() {
        return Err(HsdError::Shape("empty batch".into()));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(HsdError::Config(format!("alpha {alpha} outside [0, 1]")));
    }
    for s in batch {
        if *s.observation.shape() != cfg.obs_shape {
            return Err(HsdError::Shape(format!(
                "observation shape {} does not match the model's {}",
                s.observation.shape(),
                cfg.obs_shape
            )));
        }
        if !action_matches(&s.action, &cfg.action_space) {
            return Err(HsdError::Shape("action does not match the model's action space".into()));
        }
    }
    let n = batch.len();

    // Input matrix, with optional pixel noise applied on the raw scale.
    let refs: Vec<&crate::dataset::Observation> = batch.iter().map(|s| &s.observation).collect();
    let mut x = model.normalize(&refs)?;
    if let Some((rng, std)) = noise {
        if std > 0.0 {
            for v in x.iter_mut() {
                *v += std * standard_normal(rng) / 255.0;
            }
        }
    }

    // Base level: patch-affine encoder, tanh, quantize.
    let (patches, z_e0) = model.encode_base(x.view());
    let (code0, z_q0) = match frozen {
        Some((base, _)) => pinned_rows(&model.params.embed0, base, n * cfg.base_cells())?,
        None => quantize(z_e0.view(), model.params.embed0.view())?,
    };
    let zq0_flat = unfold_cells(z_q0.clone(), cfg.base_cells());

    // Top level: FC encoder, fold into cells, quantize.
    let z_e1 = model.encode_top(zq0_flat.view());
    let (code1, z_q1) = match frozen {
        Some((_, top)) => pinned_rows(&model.params.embed1, top, n * cfg.cells)?,
        None => quantize(z_e1.view(), model.params.embed1.view())?,
    };
    let zq1_flat = unfold_cells(z_q1.clone(), cfg.cells);

    // Hierarchy decoder reconstructs the base latent from the top code.
    let mut dec1_out = zq1_flat.dot(&model.params.dec1_w) + &model.params.dec1_b;
    dec1_out.mapv_inplace(f64::tanh);

    // Blend the two latent sources and run both decoders.
    let u = alpha * &zq0_flat + (1.0 - alpha) * &dec1_out;
    let mut rec_h = u.dot(&model.params.rec_w1) + &model.params.rec_b1;
    rec_h.mapv_inplace(f64::tanh);
    let recon = rec_h.dot(&model.params.rec_w2) + &model.params.rec_b2;
    let mut pi_h = u.dot(&model.params.pi_w1) + &model.params.pi_b1;
    pi_h.mapv_inplace(f64::tanh);
    let pi_out = pi_h.dot(&model.params.pi_w2) + &model.params.pi_b2;

    // Losses.
    let delta = cfg.huber_delta;
    let l_rec = mean_huber(&recon, &x, delta);
    let l_vq0 = mean_huber(&z_e0, &z_q0, delta);
    let l_vq1 = mean_huber(&z_e1, &z_q1, delta);
    let l_pi = policy_loss(&pi_out, batch, &cfg.action_space, delta);

    Ok(ForwardTrace {
        batch_len: n,
        alpha,
        x,
        patches,
        z_e0,
        code0,
        z_q0,
        z_e1,
        code1,
        z_q1,
        dec1_out,
        u,
        rec_h,
        recon,
        pi_h,
        pi_out,
        losses: Losses { l_rec, l_vq0, l_vq1, l_pi },
    })
}

/// Builds the quantizer output from externally fixed code assignments.
fn pinned_rows(
    codebook: &Array2<f64>,
    codes: &[usize],
    expect_rows: usize,
) -> Result<(Vec<usize>, Array2<f64>), HsdError> {
    if codes.len() != expect_rows {
        return Err(HsdError::Shape(format!(
            "{} pinned codes for {} quantizer rows",
            codes.len(),
            expect_rows
        )));
    }
    let mut z_q = Array2::zeros((codes.len(), codebook.ncols()));
    for (r, &k) in codes.iter().enumerate() {
        if k >= codebook.nrows() {
            return Err(HsdError::Shape(format!(
                "pinned code {k} outside the {}-entry codebook",
                codebook.nrows()
            )));
        }
        z_q.row_mut(r).assign(&codebook.row(k));
    }
    Ok((codes.to_vec(), z_q))
}

fn mean_huber(a: &Array2<f64>, b: &Array2<f64>, delta: f64) -> f64 {
    let mut sum = 0.0;
    for (x, y) in a.iter().zip(b.iter()) {
        sum += huber(x - y, delta);
    }
    sum / a.len() as f64
}

fn policy_loss(pi_out: &Array2<f64>, batch: &[PlaySample], space: &ActionSpace, delta: f64) -> f64 {
    match space {
        ActionSpace::Discrete { .. } => {
            let mut sum = 0.0;
            for (row, s) in pi_out.rows().into_iter().zip(batch) {
                let label = match s.action {
                    Action::Discrete(a) => a as usize,
                    Action::Continuous(_) => unreachable!("validated against the space"),
                };
                let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
                sum += lse - row[label];
            }
            sum / batch.len() as f64
        }
        ActionSpace::Continuous { dim } => {
            let mut sum = 0.0;
            for (row, s) in pi_out.rows().into_iter().zip(batch) {
                let target = match &s.action {
                    Action::Continuous(v) => v,
                    Action::Discrete(_) => unreachable!("validated against the space"),
                };
                for (p, t) in row.iter().zip(target.iter()) {
                    sum += huber(p - f64::from(*t), delta);
                }
            }
            sum / (batch.len() * dim) as f64
        }
    }
}

fn action_matches(action: &Action, space: &ActionSpace) -> bool {
    match (action, space) {
        (Action::Discrete(a), ActionSpace::Discrete { n_actions }) => (*a as usize) < *n_actions,
        (Action::Continuous(v), ActionSpace::Continuous { dim }) => v.len() == *dim,
        _ => false,
    }
}

/// Softmax probabilities of the policy logits, row-wise (used by the
/// backward pass and by diagnostics).
pub(crate) fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}
