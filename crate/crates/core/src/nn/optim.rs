use serde::{Deserialize, Serialize};

use super::ParamVector;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Adagrad,
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Ascent,
    Descent,
}

impl Direction {
    fn sign(self) -> f64 {
        match self {
            Direction::Ascent => 1.0,
            Direction::Descent => -1.0,
        }
    }
}

/// Optimizer hyperparameters; [`OptimizerState::new`] instantiates one per run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub step_size: f64,
    pub epsilon: f64,
    pub beta1: f64,
    pub beta2: f64,
}

impl OptimizerConfig {
    pub fn adagrad(step_size: f64) -> Self {
        OptimizerConfig {
            kind: OptimizerKind::Adagrad,
            step_size,
            epsilon: 1e-8,
            beta1: 0.9,
            beta2: 0.999,
        }
    }

    pub fn adam(step_size: f64) -> Self {
        OptimizerConfig {
            kind: OptimizerKind::Adam,
            step_size,
            epsilon: 1e-8,
            beta1: 0.9,
            beta2: 0.999,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub config: OptimizerConfig,
    /// AdaGrad: running sum of squared gradients. Adam: first moment.
    pub first: Vec<f64>,
    /// Adam second moment; unused by AdaGrad.
    pub second: Vec<f64>,
    pub steps: u64,
}

impl OptimizerState {
    pub fn new(config: OptimizerConfig, len: usize) -> Result<Self> {
        if !(config.step_size > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "step size must be positive, got {}",
                config.step_size
            )));
        }
        Ok(OptimizerState {
            config,
            first: vec![0.0; len],
            second: vec![0.0; len],
            steps: 0,
        })
    }

    /// Applies one update in place.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64], direction: Direction) -> Result<()> {
        if params.len() != self.first.len() || grad.len() != params.len() {
            return Err(Error::Shape(format!(
                "optimizer holds {} slots, params {}, grad {}",
                self.first.len(),
                params.len(),
                grad.len()
            )));
        }
        let c = self.config;
        let sign = direction.sign();
        self.steps += 1;
        match c.kind {
            OptimizerKind::Adagrad => {
                for ((p, &g), acc) in params.iter_mut().zip(grad).zip(self.first.iter_mut()) {
                    *acc += g * g;
                    *p += sign * c.step_size * g / (*acc + c.epsilon).sqrt();
                }
            }
            OptimizerKind::Adam => {
                let t = self.steps as i32;
                let bc1 = 1.0 - c.beta1.powi(t);
                let bc2 = 1.0 - c.beta2.powi(t);
                for (((p, &g), m), v) in params
                    .iter_mut()
                    .zip(grad)
                    .zip(self.first.iter_mut())
                    .zip(self.second.iter_mut())
                {
                    *m = c.beta1 * *m + (1.0 - c.beta1) * g;
                    *v = c.beta2 * *v + (1.0 - c.beta2) * g * g;
                    let m_hat = *m / bc1;
                    let v_hat = *v / bc2;
                    *p += sign * c.step_size * m_hat / (v_hat.sqrt() + c.epsilon);
                }
            }
        }
        Ok(())
    }
}

/// Pure form of [`OptimizerState::step`].
pub fn opt_step(
    state: &OptimizerState,
    params: &ParamVector,
    grad: &ParamVector,
    direction: Direction,
) -> Result<(ParamVector, OptimizerState)> {
    let mut next_state = state.clone();
    let mut next = params.clone();
    next_state.step(&mut next.values, &grad.values, direction)?;
    Ok((next, next_state))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adagrad_first_step() {
        let s = OptimizerState::new(OptimizerConfig::adagrad(0.1), 1).unwrap();
        let p = ParamVector::new(vec![1], vec![0.0]);
        let g = ParamVector::new(vec![1], vec![1.0]);
        let (up, _) = opt_step(&s, &p, &g, Direction::Ascent).unwrap();
        assert!((up.values[0] - 0.1 / (1.0f64 + 1e-8).sqrt()).abs() < 1e-15);
        let (down, _) = opt_step(&s, &p, &g, Direction::Descent).unwrap();
        assert_eq!(down.values[0], -up.values[0]);
    }

    #[test]
    fn adam_first_step_is_sign_times_lr() {
        let s = OptimizerState::new(OptimizerConfig::adam(1e-3), 3).unwrap();
        let p = ParamVector::new(vec![3], vec![0.0; 3]);
        let g = ParamVector::new(vec![3], vec![5.0, -0.01, 1e3]);
        let (up, _) = opt_step(&s, &p, &g, Direction::Descent).unwrap();
        for (dp, gi) in up.values.iter().zip(&g.values) {
            assert!((dp + 1e-3 * gi.signum()).abs() < 1e-9, "{dp}");
        }
    }

    #[test]
    fn zero_gradient_leaves_params() {
        for cfg in [OptimizerConfig::adagrad(0.1), OptimizerConfig::adam(1e-3)] {
            let s = OptimizerState::new(cfg, 2).unwrap();
            let p = ParamVector::new(vec![2], vec![0.7, -3.0]);
            let (next, _) = opt_step(&s, &p, &p.zeros_like(), Direction::Ascent).unwrap();
            assert_eq!(next, p);
        }
    }

    #[test]
    fn replaying_gradient_log_is_bit_exact() {
        let log: Vec<Vec<f64>> = (0..50)
            .map(|i| vec![(i as f64 * 0.37).sin(), (i as f64 * 1.3).cos()])
            .collect();
        let run = || {
            let mut s = OptimizerState::new(OptimizerConfig::adam(1e-2), 2).unwrap();
            let mut p = vec![0.5, -0.5];
            for g in &log {
                s.step(&mut p, g, Direction::Descent).unwrap();
            }
            p
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn adam_descends_quadratic() {
        let c = [0.3, -0.8, 0.5];
        for start in [[1.0, -0.8, 0.5], [0.3, 0.2, 0.5], [-0.1, -0.5, 1.0]] {
            let mut s = OptimizerState::new(OptimizerConfig::adam(1e-3), 3).unwrap();
            let mut p = start.to_vec();
            let mut reached = false;
            for _ in 0..10_000 {
                let g: Vec<f64> = p.iter().zip(&c).map(|(pi, ci)| 2.0 * (pi - ci)).collect();
                s.step(&mut p, &g, Direction::Descent).unwrap();
                let dist = p.iter().zip(&c).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                if dist < 1e-3 {
                    reached = true;
                    break;
                }
            }
            assert!(reached, "start {start:?} ended at {p:?}");
        }
    }

    #[test]
    fn rejects_nonpositive_step() {
        assert!(OptimizerState::new(OptimizerConfig::adam(0.0), 1).is_err());
    }
}
