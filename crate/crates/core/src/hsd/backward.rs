//! Hand-derived backward pass.
//!
//! Quantization has no derivative, so gradients follow the straight-copy
//! rule: the task-loss gradient arriving at a quantizer output is copied
//! unchanged onto the encoder output.  Each encoder's parameters then see
//! that copied gradient plus `beta` times the quantization-loss gradient,
//! but only the task component continues to layers further upstream.
//! Codebook rows receive gradient solely from their own quantization
//! loss, and only the rows actually selected in the batch.

use ndarray::{Array2, ArrayView2};

use crate::dataset::{Action, ActionSpace, PlaySample};

use super::forward::{softmax_rows, ForwardTrace};
use super::model::{fold_cells, row_sum, unfold_cells, HsdModel, Params};
use super::{huber_grad, HsdError};

/// Parameter gradients of one batch, addressable by tensor name (same
/// names and shapes as [`HsdModel::tensor`]).
#[derive(Clone, Debug)]
pub struct Gradients {
    pub(crate) p: Params,
}

impl Gradients {
    pub fn tensor(&self, name: &str) -> Option<ArrayView2<'_, f64>> {
        self.p
            .named()
            .into_iter()
            .find(|(n, _)| *n == name)
            .map(|(_, t)| t.view())
    }
}

/// Gradients of the summed batch losses with respect to every parameter.
/// `batch` must be the slice the trace was computed from.
pub fn backward(
    model: &HsdModel,
    trace: &ForwardTrace,
    batch: &[PlaySample],
) -> Result<Gradients, HsdError> {
    if batch.len() != trace.batch_len {
        return Err(HsdError::StaleTrace);
    }
    let cfg = model.config();
    let p = &model.params;
    let n = batch.len();
    let delta = cfg.huber_delta;
    let beta = cfg.beta;
    let mut g = Params::zeros(cfg);

    // Reconstruction head.
    let obs_elems = (n * cfg.obs_len()) as f64;
    let mut d_recon = &trace.recon - &trace.x;
    d_recon.mapv_inplace(|r| huber_grad(r, delta) / obs_elems);
    g.rec_w2 = trace.rec_h.t().dot(&d_recon);
    g.rec_b2 = row_sum(&d_recon);
    let d_rec_h = d_recon.dot(&p.rec_w2.t());
    let d_rec_a = tanh_back(&d_rec_h, &trace.rec_h);
    g.rec_w1 = trace.u.t().dot(&d_rec_a);
    g.rec_b1 = row_sum(&d_rec_a);
    let mut d_u = d_rec_a.dot(&p.rec_w1.t());

    // Policy head.
    let d_pi_out = policy_out_grad(trace, batch, &cfg.action_space, delta);
    g.pi_w2 = trace.pi_h.t().dot(&d_pi_out);
    g.pi_b2 = row_sum(&d_pi_out);
    let d_pi_h = d_pi_out.dot(&p.pi_w2.t());
    let d_pi_a = tanh_back(&d_pi_h, &trace.pi_h);
    g.pi_w1 = trace.u.t().dot(&d_pi_a);
    g.pi_b1 = row_sum(&d_pi_a);
    d_u += &d_pi_a.dot(&p.pi_w1.t());

    // The blend splits the task gradient between the two latent sources.
    let d_zq0_direct = trace.alpha * &d_u;
    let d_dec1 = (1.0 - trace.alpha) * &d_u;

    // Hierarchy decoder.
    let d_dec1_a = tanh_back(&d_dec1, &trace.dec1_out);
    let zq1_flat = unfold_cells(trace.z_q1.clone(), cfg.cells);
    g.dec1_w = zq1_flat.t().dot(&d_dec1_a);
    g.dec1_b = row_sum(&d_dec1_a);
    // Task gradient at the top quantizer output, copied to the encoder.
    let d_ze1_task = d_dec1_a.dot(&p.dec1_w.t());

    // Top encoder: parameters see task + beta * quantization gradient...
    let vq1_elems = trace.z_e1.len() as f64;
    let mut commit1 = &trace.z_e1 - &trace.z_q1;
    commit1.mapv_inplace(|r| huber_grad(r, delta) / vq1_elems);
    let commit1_flat = unfold_cells(commit1, cfg.cells);
    let z_e1_flat = unfold_cells(trace.z_e1.clone(), cfg.cells);
    let combined1 = &d_ze1_task + &(beta * &commit1_flat);
    let d_a1_comb = tanh_back(&combined1, &z_e1_flat);
    let zq0_flat = unfold_cells(trace.z_q0.clone(), cfg.base_cells());
    g.enc1_w = zq0_flat.t().dot(&d_a1_comb);
    g.enc1_b = row_sum(&d_a1_comb);
    // ...but only the task part flows further upstream.
    let d_a1_task = tanh_back(&d_ze1_task, &z_e1_flat);
    let d_zq0_flat = &d_zq0_direct + &d_a1_task.dot(&p.enc1_w.t());

    // Base quantizer copy and base encoder.
    let d_ze0_task = fold_cells(d_zq0_flat, cfg.base_cells());
    let vq0_elems = trace.z_e0.len() as f64;
    let mut commit0 = &trace.z_e0 - &trace.z_q0;
    commit0.mapv_inplace(|r| huber_grad(r, delta) / vq0_elems);
    let combined0 = &d_ze0_task + &(beta * &commit0);
    let d_a0 = tanh_back(&combined0, &trace.z_e0);
    g.enc0_w = trace.patches.t().dot(&d_a0);
    g.enc0_b = row_sum(&d_a0);

    // Codebooks: quantization loss only, selected rows only.
    scatter_codebook_grad(&mut g.embed0, &trace.z_q0, &trace.z_e0, &trace.code0, delta);
    scatter_codebook_grad(&mut g.embed1, &trace.z_q1, &trace.z_e1, &trace.code1, delta);

    Ok(Gradients { p: g })
}

/// Gradient through a tanh whose output `y` was cached: `d * (1 - y^2)`.
fn tanh_back(d: &Array2<f64>, y: &Array2<f64>) -> Array2<f64> {
    let mut out = d.clone();
    out.zip_mut_with(y, |g, &v| *g *= 1.0 - v * v);
    out
}

/// d(loss)/d(logits or regression outputs), already divided by the count
/// the loss was averaged over.
fn policy_out_grad(
    trace: &ForwardTrace,
    batch: &[PlaySample],
    space: &ActionSpace,
    delta: f64,
) -> Array2<f64> {
    let n = batch.len() as f64;
    match space {
        ActionSpace::Discrete { .. } => {
            let mut d = softmax_rows(&trace.pi_out);
            for (mut row, s) in d.rows_mut().into_iter().zip(batch) {
                if let Action::Discrete(a) = s.action {
                    row[a as usize] -= 1.0;
                }
            }
            d.mapv_inplace(|v| v / n);
            d
        }
        ActionSpace::Continuous { dim } => {
            let scale = n * *dim as f64;
            let mut d = trace.pi_out.clone();
            for (mut row, s) in d.rows_mut().into_iter().zip(batch) {
                if let Action::Continuous(t) = &s.action {
                    for (v, tv) in row.iter_mut().zip(t.iter()) {
                        *v = huber_grad(*v - f64::from(*tv), delta) / scale;
                    }
                }
            }
            d
        }
    }
}

/// Adds the quantization-loss gradient to the selected codebook rows:
/// `d(mean huber(z_e - z_q)) / d(codebook row k)` accumulated over the
/// quantizer rows that picked `k`.  Unselected rows stay exactly zero.
fn scatter_codebook_grad(
    g: &mut Array2<f64>,
    z_q: &Array2<f64>,
    z_e: &Array2<f64>,
    codes: &[usize],
    delta: f64,
) {
    let elems = z_e.len() as f64;
    for (r, &k) in codes.iter().enumerate() {
        let mut dst = g.row_mut(k);
        for (c, d) in dst.iter_mut().enumerate() {
            *d += huber_grad(z_q[(r, c)] - z_e[(r, c)], delta) / elems;
        }
    }
}
