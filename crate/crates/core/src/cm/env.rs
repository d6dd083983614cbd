use std::sync::Arc;

use crate::rl::{argmax, Environment, QNetwork, RlError, Step, Tensor3};

use super::reward::{eam_reward, sam_step, RewardConfig};
use super::{AllocationAction, CmError, Signal};

fn check_episode(states: &[Arc<Tensor3>], ratios: &[f64]) -> Result<(), CmError> {
    if states.len() < 2 || ratios.len() + 1 != states.len() {
        return Err(CmError::InsufficientData(format!(
            "episode needs n+1 states for n price ratios (got {} and {})",
            states.len(),
            ratios.len()
        )));
    }
    if let Some(r) = ratios.iter().find(|r| !(**r > 0.0) || !r.is_finite()) {
        return Err(CmError::NonPositive(format!("price ratio {r}")));
    }
    Ok(())
}

/// Allocation environment over a fixed decision span. `states[i]` is the
/// observation at decision `i`; `ratios[i]` is the close-to-close price
/// relative over the bar that follows it. Each episode starts in cash.
pub struct SamEnv {
    states: Vec<Arc<Tensor3>>,
    ratios: Vec<f64>,
    cfg: RewardConfig,
    pos: usize,
    weights: [f64; 2],
}

impl SamEnv {
    pub fn new(states: Vec<Arc<Tensor3>>, ratios: Vec<f64>, cfg: RewardConfig) -> Result<Self, CmError> {
        check_episode(&states, &ratios)?;
        Ok(Self { states, ratios, cfg, pos: 0, weights: AllocationAction::Cash.weights() })
    }
}

impl Environment for SamEnv {
    fn action_count(&self) -> usize {
        2
    }

    fn reset(&mut self) -> Arc<Tensor3> {
        self.pos = 0;
        self.weights = AllocationAction::Cash.weights();
        self.states[0].clone()
    }

    fn step(&mut self, action: usize) -> Result<Step, RlError> {
        let action = AllocationAction::from_index(action).ok_or_else(|| RlError::Shape(format!("action {action}")))?;
        let (reward, _) = sam_step(self.weights, action, self.ratios[self.pos], &self.cfg)
            .map_err(|e| RlError::Config(e.to_string()))?;
        self.weights = action.weights();
        self.pos += 1;
        Ok(Step { reward, next_state: self.states[self.pos].clone(), terminal: self.pos == self.ratios.len() })
    }
}

/// Signal environment: rewards are signal-aligned log returns.
pub struct EamEnv {
    states: Vec<Arc<Tensor3>>,
    log_returns: Vec<f64>,
    cfg: RewardConfig,
    pos: usize,
}

impl EamEnv {
    pub fn new(states: Vec<Arc<Tensor3>>, ratios: &[f64], cfg: RewardConfig) -> Result<Self, CmError> {
        check_episode(&states, ratios)?;
        Ok(Self { states, log_returns: ratios.iter().map(|r| r.ln()).collect(), cfg, pos: 0 })
    }
}

impl Environment for EamEnv {
    fn action_count(&self) -> usize {
        3
    }

    fn reset(&mut self) -> Arc<Tensor3> {
        self.pos = 0;
        self.states[0].clone()
    }

    fn step(&mut self, action: usize) -> Result<Step, RlError> {
        let signal = Signal::from_index(action).ok_or_else(|| RlError::Shape(format!("action {action}")))?;
        let reward = eam_reward(signal, self.log_returns[self.pos], &self.cfg);
        self.pos += 1;
        Ok(Step { reward, next_state: self.states[self.pos].clone(), terminal: self.pos == self.log_returns.len() })
    }
}

/// Log wealth of the greedy allocation policy over a span, starting in cash.
/// `states` may have one more entry than `ratios`; the extra is unused.
pub fn greedy_log_wealth(
    net: &QNetwork,
    states: &[Arc<Tensor3>],
    ratios: &[f64],
    cfg: &RewardConfig,
) -> Result<f64, CmError> {
    let mut weights = AllocationAction::Cash.weights();
    let mut total = 0.0;
    for (s, r) in states.iter().zip(ratios) {
        let action = AllocationAction::from_index(argmax(&net.q_values(s)?)).expect("two actions");
        total += sam_step(weights, action, *r, cfg)?.0;
        weights = action.weights();
    }
    Ok(total)
}

/// Sum of signal rewards of the greedy signal policy.
pub fn greedy_signal_reward(
    net: &QNetwork,
    states: &[Arc<Tensor3>],
    ratios: &[f64],
    cfg: &RewardConfig,
) -> Result<f64, CmError> {
    let mut total = 0.0;
    for (s, r) in states.iter().zip(ratios) {
        let signal = Signal::from_index(argmax(&net.q_values(s)?)).expect("three actions");
        total += eam_reward(signal, r.ln(), cfg);
    }
    Ok(total)
}
