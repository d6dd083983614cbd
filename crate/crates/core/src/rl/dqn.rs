use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{QNetwork, ReplayBuffer, RlError, Tensor3, Transition};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub gamma: f64,
    pub lr: f64,
    pub batch: usize,
    /// Training steps between target-network syncs.
    pub target_sync: usize,
    pub buffer_capacity: usize,
    pub eps_start: f64,
    pub eps_end: f64,
    pub eps_decay_steps: usize,
    /// Environment steps.
    pub max_steps: usize,
    /// Global gradient-norm clip.
    pub grad_clip: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            lr: 1e-3,
            batch: 32,
            target_sync: 200,
            buffer_capacity: 10_000,
            eps_start: 1.0,
            eps_end: 0.05,
            eps_decay_steps: 5_000,
            max_steps: 20_000,
            grad_clip: 10.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), RlError> {
        let bad = |m: &str| Err(RlError::Config(m.to_string()));
        if !(0.0..1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1)");
        }
        if !(self.lr > 0.0) || !(self.grad_clip > 0.0) {
            return bad("lr and grad_clip must be positive");
        }
        if self.batch == 0 || self.target_sync == 0 || self.buffer_capacity == 0 || self.max_steps == 0 {
            return bad("batch, target_sync, buffer_capacity and max_steps must be positive");
        }
        if self.eps_decay_steps == 0 {
            return bad("eps_decay_steps must be positive");
        }
        if !(0.0 <= self.eps_end && self.eps_end <= self.eps_start && self.eps_start <= 1.0) {
            return bad("need 0 <= eps_end <= eps_start <= 1");
        }
        Ok(())
    }

    /// Linear decay from `eps_start` to `eps_end` over `eps_decay_steps`.
    pub fn epsilon_at(&self, step: usize) -> f64 {
        if step >= self.eps_decay_steps {
            return self.eps_end;
        }
        let frac = step as f64 / self.eps_decay_steps as f64;
        self.eps_start + (self.eps_end - self.eps_start) * frac
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(q: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in q.iter().enumerate().skip(1) {
        if *v > q[best] {
            best = i;
        }
    }
    best
}

/// With probability `eps` a uniformly random action, otherwise [`argmax`].
pub fn epsilon_greedy<R: Rng + ?Sized>(q: &[f64], eps: f64, rng: &mut R) -> usize {
    assert!(!q.is_empty(), "empty action-value vector");
    if eps > 0.0 && rng.random::<f64>() < eps {
        rng.random_range(0..q.len())
    } else {
        argmax(q)
    }
}

/// One SGD step on the mean squared TD error
/// `(Q(s, a) - (r + gamma * max_a' Q_target(s', a') * (1 - terminal)))^2`.
/// Returns the loss before the update; a non-finite loss leaves the network
/// untouched.
pub fn train_step(
    net: &mut QNetwork,
    target: &QNetwork,
    batch: &[&Transition],
    cfg: &TrainConfig,
) -> Result<f64, RlError> {
    if batch.is_empty() {
        return Err(RlError::EmptyBatch);
    }
    if !net.same_shape(target) {
        return Err(RlError::ArchitectureMismatch);
    }
    let scale = 1.0 / batch.len() as f64;
    let mut grad = vec![0.0; net.params().len()];
    let mut loss = 0.0;
    for t in batch {
        if t.action >= net.action_count() {
            return Err(RlError::Shape(format!("action {} out of range", t.action)));
        }
        let pass = net.forward(&t.state)?;
        let y = if t.terminal || cfg.gamma == 0.0 {
            t.reward
        } else {
            let next = target.q_values(&t.next_state)?;
            t.reward + cfg.gamma * next.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        };
        let diff = pass.output()[t.action] - y;
        loss += diff * diff * scale;
        let mut g_out = vec![0.0; net.action_count()];
        g_out[t.action] = 2.0 * diff * scale;
        net.backward(&pass, &g_out, &mut grad);
    }
    if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(RlError::Divergence(loss));
    }
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    let clip = if norm > cfg.grad_clip { cfg.grad_clip / norm } else { 1.0 };
    for (p, g) in net.params_mut().iter_mut().zip(&grad) {
        *p -= cfg.lr * clip * g;
    }
    Ok(loss)
}

/// Copies online parameters into the target network.
pub fn sync_target(net: &QNetwork, target: &mut QNetwork) -> Result<(), RlError> {
    if !net.same_shape(target) {
        return Err(RlError::ArchitectureMismatch);
    }
    target.params_mut().copy_from_slice(net.params());
    Ok(())
}

pub struct Step {
    pub reward: f64,
    pub next_state: Arc<Tensor3>,
    pub terminal: bool,
}

/// Episodic environment driven by discrete actions.
pub trait Environment {
    fn action_count(&self) -> usize;
    fn reset(&mut self) -> Arc<Tensor3>;
    fn step(&mut self, action: usize) -> Result<Step, RlError>;
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// The best checkpoint by evaluation score, or the final network when no
    /// evaluator was given.
    pub network: QNetwork,
    pub best_score: Option<f64>,
    /// Step at which `network` was captured.
    pub best_step: usize,
    pub losses: Vec<f64>,
}

/// Periodic checkpoint scoring: higher is better.
pub struct Evaluator<'a> {
    pub every: usize,
    pub score: &'a mut dyn FnMut(&QNetwork) -> Result<f64, RlError>,
}

/// Standard DQN loop: epsilon-greedy acting, uniform replay, a train step per
/// environment step once the buffer holds a batch, and periodic target sync.
pub fn train_dqn(
    mut net: QNetwork,
    env: &mut dyn Environment,
    cfg: &TrainConfig,
    mut evaluator: Option<Evaluator<'_>>,
) -> Result<TrainOutcome, RlError> {
    cfg.validate()?;
    if env.action_count() != net.action_count() {
        return Err(RlError::Shape(format!(
            "environment has {} actions, network {}",
            env.action_count(),
            net.action_count()
        )));
    }
    let mut target = net.clone();
    let mut explore = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(1));
    let mut buffer = ReplayBuffer::new(cfg.buffer_capacity, cfg.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(2));

    let mut best: Option<(f64, QNetwork, usize)> = None;
    let consider = |net: &QNetwork, step: usize, ev: &mut Evaluator<'_>, best: &mut Option<(f64, QNetwork, usize)>| {
        let s = (ev.score)(net)?;
        if best.as_ref().is_none_or(|(b, _, _)| s >= *b) {
            *best = Some((s, net.clone(), step));
        }
        Ok::<(), RlError>(())
    };

    let mut losses = Vec::new();
    let mut train_steps = 0usize;
    let mut state = env.reset();
    for step in 0..cfg.max_steps {
        let q = net.q_values(&state)?;
        let action = epsilon_greedy(&q, cfg.epsilon_at(step), &mut explore);
        let out = env.step(action)?;
        buffer.push(Transition {
            state: state.clone(),
            action,
            reward: out.reward,
            next_state: out.next_state.clone(),
            terminal: out.terminal,
        });
        state = if out.terminal { env.reset() } else { out.next_state };

        if buffer.len() >= cfg.batch {
            let batch = buffer.sample(cfg.batch);
            losses.push(train_step(&mut net, &target, &batch, cfg)?);
            train_steps += 1;
            if train_steps.is_multiple_of(cfg.target_sync) {
                sync_target(&net, &mut target)?;
            }
        }
        if let Some(ev) = evaluator.as_mut() {
            if (step + 1).is_multiple_of(ev.every) {
                consider(&net, step + 1, ev, &mut best)?;
            }
        }
    }
    if let Some(ev) = evaluator.as_mut() {
        if !cfg.max_steps.is_multiple_of(ev.every) {
            consider(&net, cfg.max_steps, ev, &mut best)?;
        }
    }
    Ok(match best {
        Some((score, network, step)) => TrainOutcome { network, best_score: Some(score), best_step: step, losses },
        None => TrainOutcome { network: net, best_score: None, best_step: cfg.max_steps, losses },
    })
}
