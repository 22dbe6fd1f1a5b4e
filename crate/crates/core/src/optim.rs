//! Gradient-based optimizers over a [`ParamStore`].

use std::collections::BTreeMap;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::params::ParamStore;

pub type GradMap = BTreeMap<String, Tensor>;

pub trait Optimizer {
    /// Applies one update. Parameters without a gradient are left untouched.
    fn step(&mut self, params: &mut ParamStore, grads: &GradMap) -> Result<()>;
}

/// Euclidean norm over every gradient entry, in name order.
pub fn global_norm(grads: &GradMap) -> f64 {
    grads
        .values()
        .flat_map(|g| g.data().iter())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt()
}

/// Rescales all gradients so their global norm is at most `max_norm`
/// (no-op when `max_norm` is 0). Returns the norm before clipping.
pub fn clip_grad_norm(grads: &mut GradMap, max_norm: f64) -> f64 {
    let norm = global_norm(grads);
    if max_norm > 0.0 && norm > max_norm {
        let s = max_norm / (norm + 1e-6);
        for g in grads.values_mut() {
            for v in g.data_mut() {
                *v *= s;
            }
        }
    }
    norm
}

fn target<'a>(params: &'a mut ParamStore, name: &str, grad: &Tensor) -> Result<&'a mut Tensor> {
    let p = params
        .get_mut(name)
        .ok_or_else(|| Error::Config(format!("gradient for unknown parameter `{name}`")))?;
    if p.shape() != grad.shape() {
        return Err(Error::shape(
            "optimizer",
            format!("`{name}`: {:?} vs {:?}", p.shape(), grad.shape()),
        ));
    }
    Ok(p)
}

#[derive(Clone, Debug)]
pub struct Sgd {
    pub lr: f64,
}

impl Optimizer for Sgd {
    fn step(&mut self, params: &mut ParamStore, grads: &GradMap) -> Result<()> {
        for (name, g) in grads {
            let p = target(params, name, g)?;
            for (w, d) in p.data_mut().iter_mut().zip(g.data()) {
                *w -= self.lr * d;
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
struct Moments {
    step: i32,
    m: Vec<f64>,
    v: Vec<f64>,
}

/// Adam with bias correction; state is kept per parameter name.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    state: BTreeMap<String, Moments>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            state: BTreeMap::new(),
        }
    }
}

impl Optimizer for Adam {
    fn step(&mut self, params: &mut ParamStore, grads: &GradMap) -> Result<()> {
        for (name, g) in grads {
            let p = target(params, name, g)?;
            let st = self.state.entry(name.clone()).or_insert_with(|| Moments {
                step: 0,
                m: vec![0.0; g.len()],
                v: vec![0.0; g.len()],
            });
            st.step += 1;
            let bc1 = 1.0 - self.beta1.powi(st.step);
            let bc2 = 1.0 - self.beta2.powi(st.step);
            for (i, (w, &d)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                st.m[i] = self.beta1 * st.m[i] + (1.0 - self.beta1) * d;
                st.v[i] = self.beta2 * st.v[i] + (1.0 - self.beta2) * d * d;
                let m_hat = st.m[i] / bc1;
                let v_hat = st.v[i] / bc2;
                *w -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}
