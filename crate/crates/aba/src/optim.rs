//! Parameter update rules for the outer (classifier) and inner (augmenter) loops.

use crate::error::{AbaError, Result};
use crate::tensor::{Scalar, Tensor};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// SGD or bias-corrected Adam. Moment buffers are allocated lazily with the
/// shapes of the first parameter set seen; the step counter increases by one
/// per call.
pub enum Optimizer<T> {
    Sgd {
        lr: f64,
    },
    Adam {
        lr: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
        step: u64,
        m: Vec<Tensor<T>>,
        v: Vec<Tensor<T>>,
    },
}

impl<T: Scalar> Optimizer<T> {
    pub fn sgd(lr: f64) -> Self {
        Optimizer::Sgd { lr }
    }

    pub fn adam(lr: f64) -> Self {
        Optimizer::Adam {
            lr,
            beta1: ADAM_BETA1,
            beta2: ADAM_BETA2,
            eps: ADAM_EPS,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        match self {
            Optimizer::Sgd { .. } => 0,
            Optimizer::Adam { step, .. } => *step,
        }
    }

    /// Apply one update to every parameter given its gradient.
    pub fn step(&mut self, params: &mut [&mut Tensor<T>], grads: &[Tensor<T>]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(AbaError::shape(
                "optimizer_step",
                format!("{} params", params.len()),
                format!("{} grads", grads.len()),
            ));
        }
        for (p, g) in params.iter().zip(grads.iter()) {
            if p.shape() != g.shape() {
                return Err(AbaError::shape(
                    "optimizer_step",
                    format!("{:?}", p.shape()),
                    format!("{:?}", g.shape()),
                ));
            }
        }
        match self {
            Optimizer::Sgd { lr } => {
                let lr = T::from_f64(*lr);
                for (p, g) in params.iter_mut().zip(grads.iter()) {
                    p.add_scaled(g, -lr)?;
                }
            }
            Optimizer::Adam {
                lr,
                beta1,
                beta2,
                eps,
                step,
                m,
                v,
            } => {
                if m.is_empty() {
                    *m = params.iter().map(|p| Tensor::zeros(p.shape())).collect();
                    *v = params.iter().map(|p| Tensor::zeros(p.shape())).collect();
                }
                if m.len() != params.len() {
                    return Err(AbaError::shape(
                        "optimizer_step",
                        format!("{} moment buffers", m.len()),
                        format!("{} params", params.len()),
                    ));
                }
                *step += 1;
                let t = *step as i32;
                let b1 = T::from_f64(*beta1);
                let b2 = T::from_f64(*beta2);
                let lr_t = T::from_f64(*lr);
                let eps_t = T::from_f64(*eps);
                let bc1 = T::one() - b1.powi(t);
                let bc2 = T::one() - b2.powi(t);
                for ((p, g), (mb, vb)) in params
                    .iter_mut()
                    .zip(grads.iter())
                    .zip(m.iter_mut().zip(v.iter_mut()))
                {
                    for ((pv, &gv), (mv, vv)) in p
                        .data_mut()
                        .iter_mut()
                        .zip(g.data().iter())
                        .zip(mb.data_mut().iter_mut().zip(vb.data_mut().iter_mut()))
                    {
                        *mv = b1 * *mv + (T::one() - b1) * gv;
                        *vv = b2 * *vv + (T::one() - b2) * gv * gv;
                        let m_hat = *mv / bc1;
                        let v_hat = *vv / bc2;
                        *pv = *pv - lr_t * m_hat / (v_hat.sqrt() + eps_t);
                    }
                }
            }
        }
        Ok(())
    }
}
