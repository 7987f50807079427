//! Monte-Carlo policy gradient with epsilon-greedy behaviour.
//!
//! Actions come from the mixture `mu = (1 - eps) * pi + eps / |A|`. After
//! every episode the agent ascends `sum_t A_t * grad log mu(a_t | s_t)`, where
//! `A_t` is the normalized return-to-go, and takes one Adam step. Using the
//! mixture keeps the gradient on-policy for the behaviour actually executed;
//! `grad log mu(a) = w * grad log pi(a)` with `w = (1 - eps) pi(a) / mu(a)`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{
    select_action, softmax, Activations, Adam, AgentError, Exploration, Greedy, MlpParams,
    DEFAULT_HIDDEN,
};
use crate::env::Action;

/// How returns-to-go are turned into advantages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReturnNormalization {
    /// Standardize within each episode. Successful and failed episodes end
    /// up with the same advantage profile, so this mostly suits dense rewards.
    PerEpisode,
    /// Standardize with exponential moving statistics across episodes, which
    /// keeps a successful episode's returns above a failed one's.
    Running,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReinforceConfig {
    pub hidden: usize,
    pub lr: f64,
    pub gamma: f64,
    pub exploration: Exploration,
    pub normalization: ReturnNormalization,
    /// Weight of the newest episode in the running statistics.
    pub running_rate: f64,
}

impl Default for ReinforceConfig {
    fn default() -> Self {
        ReinforceConfig {
            hidden: DEFAULT_HIDDEN,
            lr: 1e-3,
            gamma: 0.99,
            exploration: Exploration::default(),
            normalization: ReturnNormalization::Running,
            running_rate: 0.05,
        }
    }
}

/// `G_t = r_t + gamma * G_{t+1}` for every step.
pub fn returns_to_go(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for t in (0..rewards.len()).rev() {
        acc = rewards[t] + gamma * acc;
        out[t] = acc;
    }
    out
}

const SD_FLOOR: f64 = 1e-8;

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Standardizes in place; an episode with no spread becomes all zeros.
pub fn normalize_per_episode(v: &mut [f64]) {
    if v.is_empty() {
        return;
    }
    let (mean, sd) = mean_sd(v);
    for x in v.iter_mut() {
        *x = if sd < SD_FLOOR { 0.0 } else { (*x - mean) / sd };
    }
}

/// Probability of `a` under the epsilon mixture of `probs`.
pub fn mixture_prob(probs: &[f64], a: usize, epsilon: f64) -> f64 {
    (1.0 - epsilon) * probs[a] + epsilon / probs.len() as f64
}

/// `J = sum_t A_t * log mu(a_t | x_t)` for the epsilon mixture `mu`.
pub fn surrogate(
    p: &MlpParams,
    xs: &[Vec<f64>],
    actions: &[usize],
    adv: &[f64],
    epsilon: f64,
) -> f64 {
    xs.iter()
        .zip(actions)
        .zip(adv)
        .map(|((x, &a), &g)| {
            let probs = softmax(&p.forward(x).expect("shape checked by caller"));
            g * mixture_prob(&probs, a, epsilon).ln()
        })
        .sum()
}

/// Logit-space gradient of `A * log mu(a)`.
fn logit_grad(probs: &[f64], a: usize, adv: f64, epsilon: f64, dout: &mut [f64]) {
    let w = (1.0 - epsilon) * probs[a] / mixture_prob(probs, a, epsilon);
    for k in 0..probs.len() {
        dout[k] = adv * w * (f64::from(u8::from(k == a)) - probs[k]);
    }
}

/// Analytic `dJ/dtheta` of [`surrogate`].
pub fn surrogate_gradient(
    p: &MlpParams,
    xs: &[Vec<f64>],
    actions: &[usize],
    adv: &[f64],
    epsilon: f64,
) -> Vec<f64> {
    let mut grad = vec![0.0; p.len()];
    let mut act = Activations::default();
    let mut dout = vec![0.0; p.output];
    for ((x, &a), &g) in xs.iter().zip(actions).zip(adv) {
        p.forward_into(x, &mut act);
        logit_grad(&softmax(&act.out), a, g, epsilon, &mut dout);
        p.accumulate_grad(x, &act.hidden, &dout, &mut grad);
    }
    grad
}

/// One policy-gradient step on a single greedy-sampled episode with
/// per-episode standardized returns.
pub fn reinforce_update(
    p: &mut MlpParams,
    adam: &mut Adam,
    xs: &[Vec<f64>],
    actions: &[usize],
    rewards: &[f64],
    gamma: f64,
) -> Result<(), AgentError> {
    let mut adv = returns_to_go(rewards, gamma);
    normalize_per_episode(&mut adv);
    let mut grad = surrogate_gradient(p, xs, actions, &adv, 0.0);
    for g in &mut grad {
        *g = -*g;
    }
    adam.step(&mut p.data, &grad)
}

#[derive(Debug, Clone, Copy, Default)]
struct RunningStats {
    mean: f64,
    var: f64,
    seeded: bool,
}

impl RunningStats {
    fn update(&mut self, v: &[f64], rate: f64) {
        let (m, sd) = mean_sd(v);
        if self.seeded {
            self.mean += rate * (m - self.mean);
            self.var += rate * (sd * sd + (m - self.mean).powi(2) - self.var);
        } else {
            self.mean = m;
            self.var = sd * sd;
            self.seeded = true;
        }
    }

    fn standardize(&self, v: &mut [f64]) {
        let sd = self.var.sqrt();
        let scale = if sd < SD_FLOOR { 1.0 } else { 1.0 / sd };
        for x in v.iter_mut() {
            *x = (*x - self.mean) * scale;
        }
    }
}

/// Episode-buffering REINFORCE learner.
#[derive(Debug, Clone)]
pub struct ReinforceAgent {
    cfg: ReinforceConfig,
    policy: MlpParams,
    adam: Adam,
    stats: RunningStats,
    act: Activations,
    xs: Vec<f64>,
    hs: Vec<f64>,
    probs: Vec<f64>,
    actions: Vec<usize>,
    epsilons: Vec<f64>,
    rewards: Vec<f64>,
}

impl ReinforceAgent {
    pub fn new(cfg: ReinforceConfig, policy: MlpParams) -> ReinforceAgent {
        let adam = Adam::new(policy.len(), cfg.lr);
        ReinforceAgent {
            cfg,
            policy,
            adam,
            stats: RunningStats::default(),
            act: Activations::default(),
            xs: Vec::new(),
            hs: Vec::new(),
            probs: Vec::new(),
            actions: Vec::new(),
            epsilons: Vec::new(),
            rewards: Vec::new(),
        }
    }

    pub fn policy(&self) -> &MlpParams {
        &self.policy
    }

    pub fn into_policy(self) -> MlpParams {
        self.policy
    }

    pub fn act<R: Rng + ?Sized>(&mut self, x: &[f64], epsilon: f64, rng: &mut R) -> Action {
        self.policy.forward_into(x, &mut self.act);
        let probs = softmax(&self.act.out);
        let a = select_action(&self.act.out, epsilon, Greedy::Sample, rng);
        self.xs.extend_from_slice(x);
        self.hs.extend_from_slice(&self.act.hidden);
        self.probs.extend_from_slice(&probs);
        self.actions.push(a.index());
        self.epsilons.push(epsilon);
        a
    }

    pub fn reward(&mut self, r: f64) {
        self.rewards.push(r);
    }

    pub fn finish_episode(&mut self) -> Result<(), AgentError> {
        if self.rewards.is_empty() {
            return Ok(());
        }
        let mut adv = returns_to_go(&self.rewards, self.cfg.gamma);
        match self.cfg.normalization {
            ReturnNormalization::PerEpisode => normalize_per_episode(&mut adv),
            ReturnNormalization::Running => {
                self.stats.update(&adv, self.cfg.running_rate);
                self.stats.standardize(&mut adv);
            }
        }
        let (ni, nh, no) = (self.policy.input, self.policy.hidden, self.policy.output);
        let mut grad = vec![0.0; self.policy.len()];
        let mut dout = vec![0.0; no];
        for (t, &g) in adv.iter().enumerate() {
            // descend on -J
            logit_grad(
                &self.probs[t * no..(t + 1) * no],
                self.actions[t],
                -g,
                self.epsilons[t],
                &mut dout,
            );
            self.policy.accumulate_grad(
                &self.xs[t * ni..(t + 1) * ni],
                &self.hs[t * nh..(t + 1) * nh],
                &dout,
                &mut grad,
            );
        }
        self.xs.clear();
        self.hs.clear();
        self.probs.clear();
        self.actions.clear();
        self.epsilons.clear();
        self.rewards.clear();
        self.adam.step(&mut self.policy.data, &grad)
    }
}
