//! Adam optimizer (adaptive per-parameter step sizes with bias-corrected
//! first and second moment estimates).

use ndarray::Array2;

use super::backward::Gradients;
use super::model::Params;
use super::HsdConfig;

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

pub(crate) struct Adam {
    lr: f64,
    t: u64,
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
}

impl Adam {
    pub(crate) fn new(cfg: &HsdConfig) -> Adam {
        let zero = Params::zeros(cfg);
        let m: Vec<Array2<f64>> = zero.named().into_iter().map(|(_, t)| t.clone()).collect();
        let v = m.clone();
        Adam { lr: cfg.learn_rate, t: 0, m, v }
    }

    pub(crate) fn step(&mut self, params: &mut Params, grads: &Gradients) {
        self.t += 1;
        let bc1 = 1.0 - BETA1.powi(self.t as i32);
        let bc2 = 1.0 - BETA2.powi(self.t as i32);
        let grad_list = grads.p.named();
        for (i, (p, (_, g))) in params
            .named_mut()
            .into_iter()
            .map(|(_, t)| t)
            .zip(grad_list)
            .enumerate()
        {
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            for ((pv, gv), (mv, vv)) in p
                .iter_mut()
                .zip(g.iter())
                .zip(m.iter_mut().zip(v.iter_mut()))
            {
                *mv = BETA1 * *mv + (1.0 - BETA1) * gv;
                *vv = BETA2 * *vv + (1.0 - BETA2) * gv * gv;
                let m_hat = *mv / bc1;
                let v_hat = *vv / bc2;
                *pv -= self.lr * m_hat / (v_hat.sqrt() + EPS);
            }
        }
    }
}
