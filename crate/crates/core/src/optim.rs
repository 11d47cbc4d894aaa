//! First-order optimizers over [`ModelParams`], chosen by name.

use thiserror::Error;

use crate::models::{Groups, ModelParams};

#[derive(Debug, Error, PartialEq)]
pub enum OptimError {
    #[error("unknown optimizer '{name}' (known: {known})")]
    Unknown { name: String, known: String },
    #[error("learning rate must be positive and finite, got {0}")]
    LearningRate(f64),
}

/// Updates the parameters of the selected groups in place from a gradient
/// of matching shape.
pub trait Optimizer: Send {
    fn name(&self) -> &'static str;

    fn step(&mut self, params: &mut ModelParams, grads: &ModelParams, groups: Groups);
}

/// `θ ← θ − η ∇`
#[derive(Debug, Clone)]
pub struct Sgd {
    pub lr: f64,
}

impl Optimizer for Sgd {
    fn name(&self) -> &'static str {
        "sgd"
    }

    fn step(&mut self, params: &mut ModelParams, grads: &ModelParams, groups: Groups) {
        for ((group, p), (_, g)) in params.iter_mut().zip(grads.iter()) {
            if groups.contains(group) {
                p.add_scaled_assign(g, -self.lr);
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u32,
    moments: Option<(ModelParams, ModelParams)>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            moments: None,
        }
    }
}

impl Optimizer for Adam {
    fn name(&self) -> &'static str {
        "adam"
    }

    fn step(&mut self, params: &mut ModelParams, grads: &ModelParams, groups: Groups) {
        let (m, v) = self
            .moments
            .get_or_insert_with(|| (params.zeros_like(), params.zeros_like()));
        self.t += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(self.t as i32);
        let c2 = 1.0 - b2.powi(self.t as i32);
        let entries = params.iter_mut().zip(grads.iter()).zip(m.iter_mut().zip(v.iter_mut()));
        for (((group, p), (_, g)), ((_, m), (_, v))) in entries {
            if !groups.contains(group) {
                continue;
            }
            let (p, g, m, v) = (p.values_mut(), g.values(), m.values_mut(), v.values_mut());
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                p[i] -= self.lr * (m[i] / c1) / ((v[i] / c2).sqrt() + self.eps);
            }
        }
    }
}

type Factory = fn(f64) -> Box<dyn Optimizer>;

static REGISTRY: &[(&str, Factory)] = &[
    ("adam", |lr| Box::new(Adam::new(lr))),
    ("sgd", |lr| Box::new(Sgd { lr })),
];

/// Builds a fresh optimizer by (case-insensitive) name.
pub fn build(name: &str, lr: f64) -> Result<Box<dyn Optimizer>, OptimError> {
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(OptimError::LearningRate(lr));
    }
    let key = name.to_ascii_lowercase();
    REGISTRY
        .iter()
        .find(|(n, _)| *n == key)
        .map(|(_, f)| f(lr))
        .ok_or_else(|| OptimError::Unknown {
            name: name.to_string(),
            known: names().join(", "),
        })
}

pub fn names() -> Vec<&'static str> {
    REGISTRY.iter().map(|(n, _)| *n).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{init_params, GnnConfig, ParamGroup};

    fn setup() -> (ModelParams, ModelParams) {
        let cfg = GnnConfig::new("gcn", 2, 3, 1, 2, 2).unwrap();
        let p = init_params(&cfg, 0).unwrap();
        let g = p.map(|_, m| m.map(|_| 0.5));
        (p, g)
    }

    #[test]
    fn registry() {
        assert_eq!(build("ADAM", 0.1).unwrap().name(), "adam");
        assert_eq!(build("sgd", 0.1).unwrap().name(), "sgd");
        assert!(matches!(build("rmsprop", 0.1), Err(OptimError::Unknown { .. })));
        assert!(matches!(build("sgd", 0.0), Err(OptimError::LearningRate(_))));
    }

    #[test]
    fn sgd_step() {
        let (p0, g) = setup();
        let mut p = p0.clone();
        build("sgd", 0.1).unwrap().step(&mut p, &g, Groups::ALL);
        for ((_, a), (_, b)) in p.iter().zip(p0.iter()) {
            assert!(a.sub(b).unwrap().values().iter().all(|d| (d + 0.05).abs() < 1e-15));
        }
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let (p0, g) = setup();
        let mut p = p0.clone();
        build("adam", 0.01).unwrap().step(&mut p, &g, Groups::ALL);
        for ((_, a), (_, b)) in p.iter().zip(p0.iter()) {
            assert!(a.sub(b).unwrap().values().iter().all(|d| (d + 0.01).abs() < 1e-9));
        }
    }

    #[test]
    fn frozen_groups_stay_bit_identical() {
        let (p0, g) = setup();
        for name in names() {
            let mut p = p0.clone();
            let mut opt = build(name, 0.01).unwrap();
            for _ in 0..3 {
                opt.step(&mut p, &g, Groups::ADAPT);
            }
            for ((group, a), (_, b)) in p.iter().zip(p0.iter()) {
                if group == ParamGroup::Main {
                    assert_eq!(a, b);
                } else {
                    assert_ne!(a, b);
                }
            }
        }
    }
}
