//! Hand-written learners over a one-hidden-layer tanh network.
//!
//! [`MlpParams`] is the transferable unit: a flat weight vector plus its
//! shape. REINFORCE reads the outputs as action logits, DQN as Q-values.

pub mod dqn;
pub mod learn;
pub mod reinforce;

use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{Action, EnvError};

pub use dqn::{DqnAgent, DqnConfig};
pub use learn::{learn, record_episode, LearnResult, LearnerConfig, StopCriterion};
pub use reinforce::{ReinforceAgent, ReinforceConfig, ReturnNormalization};

pub const DEFAULT_HIDDEN: usize = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AgentError {
    #[error("shape mismatch: expected {expected} inputs, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("non-finite gradient")]
    NonFiniteGradient,
    #[error("invalid stop criterion: {0}")]
    InvalidStop(&'static str),
    #[error("{field}: {rule}")]
    InvalidConfig {
        field: &'static str,
        rule: &'static str,
    },
    #[error(transparent)]
    Env(#[from] EnvError),
}

/// Weights of `input -> hidden (tanh) -> output`.
///
/// `data` holds `w1` (input x hidden, row-major, so the weights fanning out
/// of one input are contiguous), `b1`, `w2` (output x hidden, row-major) and
/// `b2`, in that order. Observations are mostly zeros, and both passes skip
/// zero inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub input: usize,
    pub hidden: usize,
    pub output: usize,
    pub data: Vec<f64>,
}

/// Hidden activations of one forward pass, reused by backprop.
#[derive(Debug, Clone, Default)]
pub struct Activations {
    pub hidden: Vec<f64>,
    pub out: Vec<f64>,
}

type Span = (usize, usize);

impl MlpParams {
    pub fn param_count(input: usize, hidden: usize, output: usize) -> usize {
        hidden * input + hidden + output * hidden + output
    }

    pub fn zeros(input: usize, hidden: usize, output: usize) -> MlpParams {
        MlpParams {
            input,
            hidden,
            output,
            data: vec![0.0; Self::param_count(input, hidden, output)],
        }
    }

    /// Glorot-uniform hidden layer; output layer scaled down so the initial
    /// policy is close to uniform.
    pub fn init<R: Rng + ?Sized>(
        input: usize,
        hidden: usize,
        output: usize,
        rng: &mut R,
    ) -> MlpParams {
        let mut p = MlpParams::zeros(input, hidden, output);
        let l1 = (6.0 / (input + hidden) as f64).sqrt();
        let l2 = 0.1 * (6.0 / (hidden + output) as f64).sqrt();
        let d1 = Uniform::new_inclusive(-l1, l1).expect("finite bound");
        let d2 = Uniform::new_inclusive(-l2, l2).expect("finite bound");
        let (w1, _, w2, _) = p.offsets();
        for v in &mut p.data[w1.0..w1.1] {
            *v = d1.sample(rng);
        }
        for v in &mut p.data[w2.0..w2.1] {
            *v = d2.sample(rng);
        }
        p
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// `[start, end)` of w1, b1, w2 and b2 in `data`.
    fn offsets(&self) -> (Span, Span, Span, Span) {
        let w1 = self.input * self.hidden;
        let b1 = w1 + self.hidden;
        let w2 = b1 + self.output * self.hidden;
        let b2 = w2 + self.output;
        ((0, w1), (w1, b1), (b1, w2), (w2, b2))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Output vector for `x`.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, AgentError> {
        if x.len() != self.input {
            return Err(AgentError::ShapeMismatch {
                expected: self.input,
                got: x.len(),
            });
        }
        let mut act = Activations::default();
        self.forward_into(x, &mut act);
        Ok(act.out)
    }

    /// Forward pass without the shape check.
    pub fn forward_into(&self, x: &[f64], act: &mut Activations) {
        let ((w1s, _), (b1s, b1e), (w2s, _), (b2s, _)) = self.offsets();
        let d = &self.data;
        let h = self.hidden;
        act.hidden.clear();
        act.hidden.extend_from_slice(&d[b1s..b1e]);
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            let col = &d[w1s + i * h..w1s + (i + 1) * h];
            for (z, w) in act.hidden.iter_mut().zip(col) {
                *z += w * xi;
            }
        }
        for z in act.hidden.iter_mut() {
            *z = z.tanh();
        }
        act.out.clear();
        for k in 0..self.output {
            let row = &d[w2s + k * h..w2s + (k + 1) * h];
            let mut z = d[b2s + k];
            for (w, hj) in row.iter().zip(&act.hidden) {
                z += w * hj;
            }
            act.out.push(z);
        }
    }

    /// Adds `d(out . dout)/d(theta)` for the pass that produced `hidden`.
    pub fn accumulate_grad(&self, x: &[f64], hidden: &[f64], dout: &[f64], grad: &mut [f64]) {
        let ((w1s, _), (b1s, _), (w2s, _), (b2s, _)) = self.offsets();
        let d = &self.data;
        let h = self.hidden;
        let mut dz = vec![0.0; h];
        for (k, &g) in dout.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            grad[b2s + k] += g;
            let base = w2s + k * h;
            for j in 0..h {
                grad[base + j] += g * hidden[j];
                dz[j] += g * d[base + j];
            }
        }
        for j in 0..h {
            dz[j] *= 1.0 - hidden[j] * hidden[j];
            grad[b1s + j] += dz[j];
        }
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            let col = &mut grad[w1s + i * h..w1s + (i + 1) * h];
            for (g, dzj) in col.iter_mut().zip(&dz) {
                *g += xi * dzj;
            }
        }
    }

    /// Little-endian bytes of `data`.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        self.data.iter().flat_map(|v| v.to_le_bytes()).collect()
    }

    pub fn from_le_bytes(
        input: usize,
        hidden: usize,
        output: usize,
        bytes: &[u8],
    ) -> Option<MlpParams> {
        let n = Self::param_count(input, hidden, output);
        if bytes.len() != 8 * n {
            return None;
        }
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        Some(MlpParams {
            input,
            hidden,
            output,
            data,
        })
    }
}

/// Deep copy used when a policy is carried to the next task.
pub fn clone_policy(p: &MlpParams) -> MlpParams {
    p.clone()
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|z| (z - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// First index of the largest value.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// How the greedy part of an epsilon-greedy choice is made.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Greedy {
    /// Sample from `softmax(outputs)`.
    Sample,
    /// Take `argmax(outputs)`.
    Argmax,
}

/// With probability `epsilon` a uniform action, otherwise the greedy rule.
pub fn select_action<R: Rng + ?Sized>(
    outputs: &[f64],
    epsilon: f64,
    greedy: Greedy,
    rng: &mut R,
) -> Action {
    if epsilon > 0.0 && rng.random::<f64>() < epsilon {
        return Action::from_index(rng.random_range(0..Action::COUNT));
    }
    match greedy {
        Greedy::Argmax => Action::from_index(argmax(outputs)),
        Greedy::Sample => Action::from_index(sample_categorical(&softmax(outputs), rng)),
    }
}

pub(crate) fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Linear epsilon annealing over a fraction of the episode budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Exploration {
    pub start: f64,
    pub end: f64,
    pub decay_fraction: f64,
}

impl Default for Exploration {
    fn default() -> Self {
        Exploration {
            start: 0.3,
            end: 0.05,
            decay_fraction: 0.6,
        }
    }
}

impl Exploration {
    pub fn epsilon(&self, episode: usize, budget: usize) -> f64 {
        let horizon = self.decay_fraction * budget as f64;
        if horizon <= 0.0 {
            return self.end;
        }
        let t = (episode as f64 / horizon).min(1.0);
        self.start + t * (self.end - self.start)
    }
}

/// Adam over a flat parameter vector, minimizing.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(len: usize, lr: f64) -> Adam {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) -> Result<(), AgentError> {
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(AgentError::NonFiniteGradient);
        }
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= self.lr * mh / (vh.sqrt() + self.eps);
        }
        Ok(())
    }
}
