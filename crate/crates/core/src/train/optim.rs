use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::layers::{Grads, Params};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerConfig {
    Sgd {
        lr: f64,
        #[serde(default)]
        momentum: f64,
    },
    Adam {
        lr: f64,
        #[serde(default = "default_beta1")]
        beta1: f64,
        #[serde(default = "default_beta2")]
        beta2: f64,
        #[serde(default = "default_adam_eps")]
        eps: f64,
    },
}

fn default_beta1() -> f64 {
    0.9
}

fn default_beta2() -> f64 {
    0.999
}

fn default_adam_eps() -> f64 {
    1e-8
}

impl OptimizerConfig {
    pub fn adam(lr: f64) -> Self {
        OptimizerConfig::Adam {
            lr,
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps: default_adam_eps(),
        }
    }

    pub fn sgd(lr: f64, momentum: f64) -> Self {
        OptimizerConfig::Sgd { lr, momentum }
    }
}

/// Moment buffers, laid out like the parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct OptState {
    pub step: u64,
    first: Grads,
    second: Grads,
}

impl OptState {
    pub fn new(params: &dyn Params) -> Self {
        OptState {
            step: 0,
            first: params.zero_grads(),
            second: params.zero_grads(),
        }
    }
}

/// Applies one update in place.
///
/// SGD: `v ← μv + g`, `p ← p − lr·v`. Adam uses bias-corrected moments.
pub fn optimizer_step(
    params: &mut dyn Params,
    grads: &Grads,
    state: &mut OptState,
    config: &OptimizerConfig,
) -> Result<()> {
    let layout: Vec<usize> = params.zero_grads().iter().map(Vec::len).collect();
    let given: Vec<usize> = grads.iter().map(Vec::len).collect();
    if layout != given || state.first.len() != layout.len() {
        return Err(shape_err!("gradient layout {given:?} does not match parameters {layout:?}"));
    }
    state.step += 1;
    let t = state.step as f64;
    let mut idx = 0;
    let mut bad = None;
    params.visit_mut(&mut |name, p| {
        let g = &grads[idx];
        let m = &mut state.first[idx];
        let v = &mut state.second[idx];
        match *config {
            OptimizerConfig::Sgd { lr, momentum } => {
                for ((pi, gi), mi) in p.iter_mut().zip(g).zip(m.iter_mut()) {
                    *mi = momentum * *mi + gi;
                    *pi -= lr * *mi;
                }
            }
            OptimizerConfig::Adam {
                lr,
                beta1,
                beta2,
                eps,
            } => {
                let c1 = 1.0 - beta1.powf(t);
                let c2 = 1.0 - beta2.powf(t);
                for (((pi, gi), mi), vi) in p.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                    *mi = beta1 * *mi + (1.0 - beta1) * gi;
                    *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                    *pi -= lr * (*mi / c1) / ((*vi / c2).sqrt() + eps);
                }
            }
        }
        if bad.is_none() && p.iter().any(|x| !x.is_finite()) {
            bad = Some(name.to_string());
        }
        idx += 1;
    });
    match bad {
        Some(name) => Err(Error::NonFinite(format!("parameter {name} after update {}", state.step))),
        None => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Scalar(f64);

    impl Params for Scalar {
        fn visit(&self, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
            f("p", &[1], std::slice::from_ref(&self.0));
        }
        fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64])) {
            f("p", std::slice::from_mut(&mut self.0));
        }
    }

    #[test]
    fn sgd_hand_step() {
        let mut p = Scalar(1.0);
        let mut s = OptState::new(&p);
        optimizer_step(&mut p, &vec![vec![2.0]], &mut s, &OptimizerConfig::sgd(0.1, 0.0)).unwrap();
        assert!((p.0 - 0.8).abs() < 1e-15);
        optimizer_step(&mut p, &vec![vec![0.0]], &mut s, &OptimizerConfig::sgd(0.1, 0.0)).unwrap();
        assert!((p.0 - 0.8).abs() < 1e-15);
    }

    #[test]
    fn momentum_accumulates() {
        let mut p = Scalar(0.0);
        let mut s = OptState::new(&p);
        let cfg = OptimizerConfig::sgd(1.0, 0.5);
        optimizer_step(&mut p, &vec![vec![1.0]], &mut s, &cfg).unwrap();
        optimizer_step(&mut p, &vec![vec![1.0]], &mut s, &cfg).unwrap();
        assert!((p.0 + 2.5).abs() < 1e-15);
    }

    #[test]
    fn adam_first_step_is_lr() {
        let mut p = Scalar(0.0);
        let mut s = OptState::new(&p);
        optimizer_step(&mut p, &vec![vec![1.0]], &mut s, &OptimizerConfig::adam(1e-3)).unwrap();
        assert!((p.0 + 1e-3).abs() < 1e-10);
    }

    #[test]
    fn layout_and_finiteness_checked() {
        let mut p = Scalar(0.0);
        let mut s = OptState::new(&p);
        let cfg = OptimizerConfig::sgd(0.1, 0.0);
        assert!(optimizer_step(&mut p, &vec![vec![1.0, 2.0]], &mut s, &cfg).is_err());
        let err = optimizer_step(&mut p, &vec![vec![f64::INFINITY]], &mut s, &cfg).unwrap_err();
        assert!(matches!(err, Error::NonFinite(ref m) if m.contains("parameter p")));
    }
}
