use serde::{Deserialize, Serialize};

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

/// Optimizer with its running state, applied to a loss gradient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Optimizer {
    Sgd,
    Adam { m: Vec<f64>, v: Vec<f64>, t: u64 },
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, n: usize) -> Self {
        match kind {
            OptimizerKind::Sgd => Optimizer::Sgd,
            OptimizerKind::Adam => Optimizer::Adam { m: vec![0.0; n], v: vec![0.0; n], t: 0 },
        }
    }

    /// Descent direction for a loss gradient; the caller scales by the
    /// learning rate.
    pub fn direction(&mut self, grad: &[f64]) -> Vec<f64> {
        match self {
            Optimizer::Sgd => grad.iter().map(|g| -g).collect(),
            Optimizer::Adam { m, v, t } => {
                *t += 1;
                let c1 = 1.0 - BETA1.powi(*t as i32);
                let c2 = 1.0 - BETA2.powi(*t as i32);
                grad.iter()
                    .zip(m.iter_mut().zip(v.iter_mut()))
                    .map(|(&g, (m, v))| {
                        *m = BETA1 * *m + (1.0 - BETA1) * g;
                        *v = BETA2 * *v + (1.0 - BETA2) * g * g;
                        -(*m / c1) / ((*v / c2).sqrt() + ADAM_EPS)
                    })
                    .collect()
            }
        }
    }
}
