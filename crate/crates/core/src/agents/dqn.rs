//! Deep Q-learning with uniform replay and a periodically synced target net.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{
    select_action, Activations, Adam, AgentError, Exploration, Greedy, MlpParams, DEFAULT_HIDDEN,
};
use crate::env::Action;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DqnConfig {
    pub hidden: usize,
    pub lr: f64,
    pub gamma: f64,
    pub exploration: Exploration,
    pub buffer_capacity: usize,
    pub batch_size: usize,
    /// Environment steps between target-network syncs.
    pub target_sync: usize,
    /// Stored transitions before the first update.
    pub learning_starts: usize,
    /// Environment steps between updates.
    pub train_freq: usize,
    /// Multiplier applied to rewards before storage.
    pub reward_scale: f64,
}

impl Default for DqnConfig {
    fn default() -> Self {
        DqnConfig {
            hidden: DEFAULT_HIDDEN,
            lr: 1e-3,
            gamma: 0.99,
            exploration: Exploration::default(),
            buffer_capacity: 100_000,
            batch_size: 64,
            target_sync: 1_000,
            learning_starts: 1_000,
            train_freq: 4,
            reward_scale: 0.01,
        }
    }
}

/// A minibatch with flat observation storage.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Batch {
    pub dim: usize,
    pub obs: Vec<f64>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    pub next_obs: Vec<f64>,
    pub terminal: Vec<bool>,
}

impl Batch {
    pub fn new(dim: usize) -> Batch {
        Batch {
            dim,
            ..Default::default()
        }
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn push(&mut self, s: &[f64], a: usize, r: f64, s2: &[f64], terminal: bool) {
        self.obs.extend_from_slice(s);
        self.actions.push(a);
        self.rewards.push(r);
        self.next_obs.extend_from_slice(s2);
        self.terminal.push(terminal);
    }

    fn clear(&mut self) {
        self.obs.clear();
        self.actions.clear();
        self.rewards.clear();
        self.next_obs.clear();
        self.terminal.clear();
    }

    fn obs(&self, i: usize) -> &[f64] {
        &self.obs[i * self.dim..(i + 1) * self.dim]
    }

    fn next(&self, i: usize) -> &[f64] {
        &self.next_obs[i * self.dim..(i + 1) * self.dim]
    }
}

/// Ring buffer of transitions stored in single precision.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    dim: usize,
    capacity: usize,
    head: usize,
    obs: Vec<f32>,
    next_obs: Vec<f32>,
    actions: Vec<u8>,
    rewards: Vec<f32>,
    terminal: Vec<bool>,
}

impl ReplayBuffer {
    pub fn new(dim: usize, capacity: usize) -> ReplayBuffer {
        ReplayBuffer {
            dim,
            capacity: capacity.max(1),
            head: 0,
            obs: Vec::new(),
            next_obs: Vec::new(),
            actions: Vec::new(),
            rewards: Vec::new(),
            terminal: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn push(&mut self, s: &[f64], a: usize, r: f64, s2: &[f64], terminal: bool) {
        let d = self.dim;
        if self.len() < self.capacity {
            self.obs.extend(s.iter().map(|v| *v as f32));
            self.next_obs.extend(s2.iter().map(|v| *v as f32));
            self.actions.push(a as u8);
            self.rewards.push(r as f32);
            self.terminal.push(terminal);
        } else {
            let i = self.head;
            for (dst, src) in self.obs[i * d..(i + 1) * d].iter_mut().zip(s) {
                *dst = *src as f32;
            }
            for (dst, src) in self.next_obs[i * d..(i + 1) * d].iter_mut().zip(s2) {
                *dst = *src as f32;
            }
            self.actions[i] = a as u8;
            self.rewards[i] = r as f32;
            self.terminal[i] = terminal;
        }
        self.head = (self.head + 1) % self.capacity;
    }

    /// Uniform sample with replacement into `out`.
    pub fn sample_into<R: Rng + ?Sized>(&self, n: usize, rng: &mut R, out: &mut Batch) {
        out.clear();
        out.dim = self.dim;
        let d = self.dim;
        for _ in 0..n {
            let i = rng.random_range(0..self.len());
            out.obs
                .extend(self.obs[i * d..(i + 1) * d].iter().map(|v| f64::from(*v)));
            out.next_obs.extend(
                self.next_obs[i * d..(i + 1) * d]
                    .iter()
                    .map(|v| f64::from(*v)),
            );
            out.actions.push(self.actions[i] as usize);
            out.rewards.push(f64::from(self.rewards[i]));
            out.terminal.push(self.terminal[i]);
        }
    }
}

/// `y = r` for terminal transitions, else `r + gamma * max_a' Q_target(s', a')`.
pub fn td_targets(target: &MlpParams, batch: &Batch, gamma: f64) -> Vec<f64> {
    let mut act = Activations::default();
    (0..batch.len())
        .map(|i| {
            if batch.terminal[i] || gamma == 0.0 {
                batch.rewards[i]
            } else {
                target.forward_into(batch.next(i), &mut act);
                let best = act.out.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                batch.rewards[i] + gamma * best
            }
        })
        .collect()
}

/// Mean squared TD error against fixed targets.
pub fn td_loss(q: &MlpParams, batch: &Batch, targets: &[f64]) -> f64 {
    let mut act = Activations::default();
    let n = batch.len() as f64;
    (0..batch.len())
        .map(|i| {
            q.forward_into(batch.obs(i), &mut act);
            (act.out[batch.actions[i]] - targets[i]).powi(2)
        })
        .sum::<f64>()
        / n
}

/// Analytic gradient of [`td_loss`].
pub fn td_loss_gradient(q: &MlpParams, batch: &Batch, targets: &[f64]) -> Vec<f64> {
    let mut grad = vec![0.0; q.len()];
    let mut act = Activations::default();
    let mut dout = vec![0.0; q.output];
    let n = batch.len() as f64;
    for i in 0..batch.len() {
        q.forward_into(batch.obs(i), &mut act);
        let a = batch.actions[i];
        dout.iter_mut().for_each(|v| *v = 0.0);
        dout[a] = 2.0 * (act.out[a] - targets[i]) / n;
        q.accumulate_grad(batch.obs(i), &act.hidden, &dout, &mut grad);
    }
    grad
}

/// One gradient step on the TD loss; returns the pre-step loss.
pub fn dqn_update(
    q: &mut MlpParams,
    target: &MlpParams,
    batch: &Batch,
    gamma: f64,
    adam: &mut Adam,
) -> Result<f64, AgentError> {
    let y = td_targets(target, batch, gamma);
    let loss = td_loss(q, batch, &y);
    let grad = td_loss_gradient(q, batch, &y);
    adam.step(&mut q.data, &grad)?;
    Ok(loss)
}

#[derive(Debug, Clone)]
pub struct DqnAgent {
    cfg: DqnConfig,
    q: MlpParams,
    target: MlpParams,
    adam: Adam,
    buffer: ReplayBuffer,
    batch: Batch,
    act: Activations,
    steps: usize,
}

impl DqnAgent {
    pub fn new(cfg: DqnConfig, q: MlpParams) -> DqnAgent {
        let adam = Adam::new(q.len(), cfg.lr);
        let buffer = ReplayBuffer::new(q.input, cfg.buffer_capacity);
        DqnAgent {
            cfg,
            target: q.clone(),
            batch: Batch::new(q.input),
            q,
            adam,
            buffer,
            act: Activations::default(),
            steps: 0,
        }
    }

    pub fn policy(&self) -> &MlpParams {
        &self.q
    }

    pub fn into_policy(self) -> MlpParams {
        self.q
    }

    pub fn act<R: Rng + ?Sized>(&mut self, x: &[f64], epsilon: f64, rng: &mut R) -> Action {
        if epsilon > 0.0 && rng.random::<f64>() < epsilon {
            return Action::from_index(rng.random_range(0..Action::COUNT));
        }
        self.q.forward_into(x, &mut self.act);
        select_action(&self.act.out, 0.0, Greedy::Argmax, rng)
    }

    /// Stores a transition and trains on the configured schedule. `terminal`
    /// must be false for cap truncations so they keep bootstrapping.
    pub fn observe<R: Rng + ?Sized>(
        &mut self,
        s: &[f64],
        a: Action,
        r: f64,
        s2: &[f64],
        terminal: bool,
        rng: &mut R,
    ) -> Result<(), AgentError> {
        self.buffer
            .push(s, a.index(), r * self.cfg.reward_scale, s2, terminal);
        self.steps += 1;
        let ready = self.buffer.len() >= self.cfg.learning_starts.max(self.cfg.batch_size);
        if ready && self.steps.is_multiple_of(self.cfg.train_freq.max(1)) {
            self.buffer
                .sample_into(self.cfg.batch_size, rng, &mut self.batch);
            dqn_update(
                &mut self.q,
                &self.target,
                &self.batch,
                self.cfg.gamma,
                &mut self.adam,
            )?;
        }
        if self.steps.is_multiple_of(self.cfg.target_sync.max(1)) {
            self.target = self.q.clone();
        }
        Ok(())
    }
}
