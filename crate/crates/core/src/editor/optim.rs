use alloc::vec::Vec;

use crate::latent::Latent;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum OptimizerKind {
    #[default]
    Sgd,
    Adam,
}

/// Optimiser state carried across editing steps.
#[derive(Debug, Clone, PartialEq)]
pub enum Optimizer {
    Sgd,
    Adam { m: Vec<f64>, v: Vec<f64>, step: u32 },
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, dim: usize) -> Self {
        match kind {
            OptimizerKind::Sgd => Optimizer::Sgd,
            OptimizerKind::Adam => Optimizer::Adam {
                m: alloc::vec![0.0; dim],
                v: alloc::vec![0.0; dim],
                step: 0,
            },
        }
    }

    /// Applies one update of `x` against gradient `g` with rate `lr`.
    pub fn step(&mut self, x: &mut Latent, g: &[f64], lr: f64) {
        match self {
            Optimizer::Sgd => x.axpy(-lr, g),
            Optimizer::Adam { m, v, step } => {
                *step += 1;
                let c1 = 1.0 - libm::pow(ADAM_BETA1, *step as f64);
                let c2 = 1.0 - libm::pow(ADAM_BETA2, *step as f64);
                for i in 0..x.len() {
                    m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g[i];
                    v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g[i] * g[i];
                    let m_hat = m[i] / c1;
                    let v_hat = v[i] / c2;
                    x[i] -= lr * m_hat / (libm::sqrt(v_hat) + ADAM_EPS);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sgd_updates() {
        let mut opt = Optimizer::new(OptimizerKind::Sgd, 3);
        let mut x = Latent(alloc::vec![1.0, -2.0, 0.5]);
        opt.step(&mut x, &[0.0; 3], 0.3);
        assert_eq!(x.0, alloc::vec![1.0, -2.0, 0.5]);
        let mut z = Latent::zeros(3);
        opt.step(&mut z, &[1.0, 2.0, -1.0], 0.02);
        assert_eq!(z.0, alloc::vec![-0.02, -0.04, 0.02]);
    }

    #[test]
    fn adam_step_saturates_at_lr() {
        let mut opt = Optimizer::new(OptimizerKind::Adam, 2);
        let mut x = Latent::zeros(2);
        let g = [0.3, -4.0];
        let lr = 0.01;
        let mut prev = x.clone();
        let mut last = 0.0;
        for _ in 0..5000 {
            opt.step(&mut x, &g, lr);
            last = (x[0] - prev[0]).abs();
            prev = x.clone();
        }
        // with a constant gradient m̂ = g and v̂ = g², so each move is lr·sign(g)
        assert!((last - lr).abs() < 1e-6 * lr);
        assert!(x[1] > 0.0 && x[0] < 0.0);
    }
}
