//! Client optimizers (SGD, Adam), the FedAdam server optimizer and the
//! staircase learning-rate schedule.
//!
//! FedAdam follows the adaptive server formulation: the aggregated client
//! delta `Δ` is the negative gradient, moments are not bias-corrected and
//! `tau` bounds the adaptive denominator away from zero.

use serde::{Deserialize, Serialize};

use crate::nn::ParamVector;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Adam,
    #[serde(rename = "fedadam")]
    FedAdam,
}

/// Hyperparameters of one optimizer. `epsilon` is Adam's `ε` and FedAdam's
/// `τ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub lr: f64,
    #[serde(default = "OptimizerConfig::default_beta1")]
    pub beta1: f64,
    #[serde(default)]
    pub beta2: Option<f64>,
    #[serde(default)]
    pub epsilon: Option<f64>,
}

impl OptimizerConfig {
    fn default_beta1() -> f64 {
        0.9
    }

    pub fn sgd(lr: f64) -> Self {
        OptimizerConfig {
            kind: OptimizerKind::Sgd,
            lr,
            beta1: 0.9,
            beta2: None,
            epsilon: None,
        }
    }

    pub fn adam(lr: f64) -> Self {
        OptimizerConfig {
            kind: OptimizerKind::Adam,
            ..Self::sgd(lr)
        }
    }

    pub fn fedadam(lr: f64) -> Self {
        OptimizerConfig {
            kind: OptimizerKind::FedAdam,
            ..Self::sgd(lr)
        }
    }

    pub fn with_betas(mut self, beta1: f64, beta2: f64) -> Self {
        self.beta1 = beta1;
        self.beta2 = Some(beta2);
        self
    }

    pub fn with_epsilon(mut self, eps: f64) -> Self {
        self.epsilon = Some(eps);
        self
    }

    /// β2 with the per-kind default (0.999 for Adam, 0.99 for FedAdam).
    pub fn beta2(&self) -> f64 {
        self.beta2.unwrap_or(match self.kind {
            OptimizerKind::FedAdam => 0.99,
            _ => 0.999,
        })
    }

    /// ε (Adam, default 1e-8) or τ (FedAdam, default 1e-3).
    pub fn epsilon(&self) -> f64 {
        self.epsilon.unwrap_or(match self.kind {
            OptimizerKind::FedAdam => 1e-3,
            _ => 1e-8,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return bad("optimizer lr must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2()) {
            return bad("optimizer betas must lie in [0, 1)");
        }
        if !(self.epsilon() > 0.0) {
            return bad("optimizer epsilon/tau must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub config: OptimizerConfig,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step_count: u64,
}

impl OptimizerState {
    pub fn new(config: OptimizerConfig, n_params: usize) -> Self {
        let moments = if config.kind == OptimizerKind::Sgd { 0 } else { n_params };
        OptimizerState {
            config,
            m: vec![0.0; moments],
            v: vec![0.0; moments],
            step_count: 0,
        }
    }

    /// One in-place step with an explicit learning rate. For SGD and Adam
    /// `direction` is the loss gradient; for FedAdam it is the pseudo-gradient
    /// `Δ`, which the server ascends.
    pub fn apply(&mut self, params: &mut [f64], direction: &[f64], lr: f64) -> Result<()> {
        if params.len() != direction.len() {
            return Err(Error::LengthMismatch {
                expected: params.len(),
                got: direction.len(),
            });
        }
        let c = self.config;
        if c.kind != OptimizerKind::Sgd && self.m.len() != params.len() {
            return Err(Error::LengthMismatch {
                expected: self.m.len(),
                got: params.len(),
            });
        }
        self.step_count += 1;
        match c.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(direction) {
                    *p -= lr * g;
                }
            }
            OptimizerKind::Adam => {
                let (b1, b2, eps) = (c.beta1, c.beta2(), c.epsilon());
                let t = self.step_count as i32;
                let bc1 = 1.0 - b1.powi(t);
                let bc2 = 1.0 - b2.powi(t);
                for i in 0..params.len() {
                    let g = direction[i];
                    self.m[i] = b1 * self.m[i] + (1.0 - b1) * g;
                    self.v[i] = b2 * self.v[i] + (1.0 - b2) * g * g;
                    let m_hat = self.m[i] / bc1;
                    let v_hat = self.v[i] / bc2;
                    params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
                }
            }
            OptimizerKind::FedAdam => {
                let (b1, b2, tau) = (c.beta1, c.beta2(), c.epsilon());
                for i in 0..params.len() {
                    let d = direction[i];
                    self.m[i] = b1 * self.m[i] + (1.0 - b1) * d;
                    self.v[i] = b2 * self.v[i] + (1.0 - b2) * d * d;
                    params[i] += lr * self.m[i] / (self.v[i].sqrt() + tau);
                }
            }
        }
        Ok(())
    }

    fn step_owned(mut self, mut params: ParamVector, direction: &ParamVector, kind: OptimizerKind) -> Result<(ParamVector, Self)> {
        if self.config.kind != kind {
            return Err(Error::Config(format!(
                "optimizer state is {:?}, step requires {kind:?}",
                self.config.kind
            )));
        }
        params.check_same_len(direction)?;
        let lr = self.config.lr;
        self.apply(params.values_mut(), direction.values(), lr)?;
        Ok((params, self))
    }
}

/// `params' = params - lr * gradient`.
pub fn sgd_step(state: OptimizerState, params: ParamVector, gradient: &ParamVector) -> Result<(ParamVector, OptimizerState)> {
    state.step_owned(params, gradient, OptimizerKind::Sgd)
}

/// Bias-corrected Adam.
pub fn adam_step(state: OptimizerState, params: ParamVector, gradient: &ParamVector) -> Result<(ParamVector, OptimizerState)> {
    state.step_owned(params, gradient, OptimizerKind::Adam)
}

/// Server update from the aggregated client delta.
pub fn fedadam_step(
    state: OptimizerState,
    server_params: ParamVector,
    pseudo_gradient: &ParamVector,
) -> Result<(ParamVector, OptimizerState)> {
    state.step_owned(server_params, pseudo_gradient, OptimizerKind::FedAdam)
}

/// `lr(e) = base_lr * decay_factor^floor(e / decay_every)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LrSchedule {
    pub base_lr: f64,
    pub decay_every: usize,
    pub decay_factor: f64,
}

impl LrSchedule {
    pub fn constant(lr: f64) -> Self {
        LrSchedule {
            base_lr: lr,
            decay_every: 1,
            decay_factor: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.base_lr > 0.0 && self.decay_factor > 0.0 && self.decay_every > 0) {
            return Err(Error::Config(
                "lr schedule needs positive base_lr, decay_every and decay_factor".into(),
            ));
        }
        Ok(())
    }
}

pub fn schedule_lr(schedule: &LrSchedule, epoch: usize) -> f64 {
    schedule.base_lr * schedule.decay_factor.powi((epoch / schedule.decay_every) as i32)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, InputKind, Layer, ModelSpec};
    use proptest::prelude::*;

    fn spec(n: usize) -> ModelSpec {
        // n = in_dim + 1 parameters with one output unit
        ModelSpec::new(
            InputKind::Flat { dim: n - 1 },
            vec![Layer::Dense {
                in_dim: n - 1,
                out_dim: 1,
                activation: Activation::Linear,
            }],
        )
        .unwrap()
    }

    fn pv(values: &[f64]) -> ParamVector {
        ParamVector::from_values(&spec(values.len()), values.to_vec()).unwrap()
    }

    #[test]
    fn sgd_examples() {
        let s = OptimizerState::new(OptimizerConfig::sgd(0.8), 2);
        let (p, s) = sgd_step(s, pv(&[1.0, 0.0]), &pv(&[0.5, 0.0])).unwrap();
        assert!((p.values()[0] - 0.6).abs() < 1e-15);
        assert_eq!(s.step_count, 1);
        let (q, _) = sgd_step(s, p.clone(), &pv(&[0.0, 0.0])).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn sgd_two_steps_equal_one_summed() {
        let g1 = pv(&[0.25, -1.0]);
        let g2 = pv(&[0.5, 2.0]);
        let s = OptimizerState::new(OptimizerConfig::sgd(0.5), 2);
        let (a, s) = sgd_step(s, pv(&[1.0, 1.0]), &g1).unwrap();
        let (a, _) = sgd_step(s, a, &g2).unwrap();
        let mut sum = g1.clone();
        sum.add_scaled(1.0, &g2).unwrap();
        let (b, _) = sgd_step(OptimizerState::new(OptimizerConfig::sgd(0.5), 2), pv(&[1.0, 1.0]), &sum).unwrap();
        assert!(a.max_abs_diff(&b) < 1e-15);
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let s = OptimizerState::new(OptimizerConfig::adam(0.1), 2);
        let (p, s) = adam_step(s, pv(&[0.0, 0.0]), &pv(&[2.0, 0.0])).unwrap();
        // m_hat = 2, v_hat = 4 -> update = 0.1 * 2 / (2 + 1e-8)
        let expected = -0.1 * 2.0 / (2.0 + 1e-8);
        assert!((p.values()[0] - expected).abs() < 1e-15);
        assert!((p.values()[0] + 0.1).abs() < 1e-8);
        assert_eq!(p.values()[1], 0.0);
        assert_eq!(s.m[1], 0.0);
        assert_eq!(s.v[1], 0.0);
    }

    #[test]
    fn adam_zero_gradient_keeps_params() {
        let s = OptimizerState::new(OptimizerConfig::adam(0.1), 2);
        let (p, s) = adam_step(s, pv(&[0.3, -0.7]), &pv(&[0.0, 0.0])).unwrap();
        assert_eq!(p.values(), &[0.3, -0.7]);
        assert!(s.m.iter().chain(&s.v).all(|&v| v == 0.0));
    }

    #[test]
    fn fedadam_zero_delta_keeps_params() {
        let s = OptimizerState::new(OptimizerConfig::fedadam(0.05), 2);
        let (p, _) = fedadam_step(s, pv(&[0.3, -0.7]), &pv(&[0.0, 0.0])).unwrap();
        assert_eq!(p.values(), &[0.3, -0.7]);
    }

    #[test]
    fn fedadam_sign_limit() {
        let cfg = OptimizerConfig::fedadam(0.5).with_betas(0.0, 0.0).with_epsilon(1e-9);
        let s = OptimizerState::new(cfg, 3);
        let delta = pv(&[3.0, -0.2, 50.0]);
        let (p, _) = fedadam_step(s, pv(&[0.0, 0.0, 0.0]), &delta).unwrap();
        // each coordinate moves by lr * |d| / (|d| + tau) * sign(d)
        for (x, d) in p.values().iter().zip(delta.values()) {
            let exact = 0.5 * d / (d.abs() + 1e-9);
            assert!((x - exact).abs() < 1e-15);
            assert!((x - 0.5 * d.signum()).abs() < 1e-8);
        }
    }

    #[test]
    fn fedadam_large_tau_damps() {
        let cfg = OptimizerConfig::fedadam(1.0).with_betas(0.0, 0.0).with_epsilon(1e6);
        let s = OptimizerState::new(cfg, 2);
        let delta = pv(&[0.01, -0.02]);
        let (p, _) = fedadam_step(s, pv(&[0.0, 0.0]), &delta).unwrap();
        for (x, d) in p.values().iter().zip(delta.values()) {
            assert!((x - d / 1e6).abs() < 1e-14);
        }
    }

    #[test]
    fn mismatched_lengths_error() {
        let s = OptimizerState::new(OptimizerConfig::sgd(0.1), 2);
        assert!(matches!(
            sgd_step(s, pv(&[0.0, 0.0]), &pv(&[0.0, 0.0, 0.0])),
            Err(Error::LengthMismatch { .. })
        ));
        let s = OptimizerState::new(OptimizerConfig::adam(0.1), 2);
        assert!(sgd_step(s, pv(&[0.0, 0.0]), &pv(&[0.0, 0.0])).is_err());
    }

    #[test]
    fn staircase_schedule() {
        let s = LrSchedule {
            base_lr: 0.005,
            decay_every: 64,
            decay_factor: 0.1,
        };
        assert_eq!(schedule_lr(&s, 0), 0.005);
        assert_eq!(schedule_lr(&s, 63), 0.005);
        assert!((schedule_lr(&s, 64) - 0.0005).abs() < 1e-18);
        assert!((schedule_lr(&s, 128) - 0.00005).abs() < 1e-18);
        let c = LrSchedule::constant(0.3);
        assert!((0..500).all(|e| schedule_lr(&c, e) == 0.3));
    }

    proptest! {
        #[test]
        fn adaptive_steps_stay_finite(
            grads in proptest::collection::vec(proptest::collection::vec(-1e6f64..1e6, 3), 1..20),
            fed in any::<bool>(),
        ) {
            let cfg = if fed { OptimizerConfig::fedadam(0.05) } else { OptimizerConfig::adam(0.05) };
            let mut s = OptimizerState::new(cfg, 3);
            let mut p = vec![0.1, -0.2, 0.3];
            for (t, g) in grads.iter().enumerate() {
                s.apply(&mut p, g, cfg.lr).unwrap();
                prop_assert!(p.iter().all(|v| v.is_finite()));
                prop_assert!(s.v.iter().all(|&v| v >= 0.0));
                prop_assert_eq!(s.step_count, t as u64 + 1);
            }
        }

        #[test]
        fn adam_update_opposes_first_moment(g in proptest::collection::vec(-10f64..10.0, 3)) {
            let mut s = OptimizerState::new(OptimizerConfig::adam(0.01), 3);
            let mut p = vec![0.0; 3];
            s.apply(&mut p, &g, 0.01).unwrap();
            for (x, m) in p.iter().zip(&s.m) {
                if *m != 0.0 {
                    prop_assert_eq!(x.signum(), -m.signum());
                }
            }
        }
    }
}
