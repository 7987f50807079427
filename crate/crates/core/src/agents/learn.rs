//! Episode loop with the trailing-window stopping rule.

use serde::{Deserialize, Serialize};

use super::{
    select_action, AgentError, DqnAgent, DqnConfig, Exploration, Greedy, MlpParams, ReinforceAgent,
    ReinforceConfig,
};
use crate::env::{
    Action, EnvError, Environment, EpisodeLog, RewardScheme, Trajectory, TrajectoryStep,
};
use crate::params::TaskParams;
use crate::seed::SimRng;

/// Stop once the success rate over the last `window_s` episodes reaches
/// `delta_g`, or after `budget_b` episodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StopCriterion {
    pub delta_g: f64,
    pub window_s: usize,
    pub budget_b: usize,
}

impl Default for StopCriterion {
    fn default() -> Self {
        StopCriterion {
            delta_g: 0.85,
            window_s: 100,
            budget_b: 5000,
        }
    }
}

impl StopCriterion {
    pub fn validate(&self) -> Result<(), AgentError> {
        if !(self.delta_g > 0.0 && self.delta_g <= 1.0) {
            return Err(AgentError::InvalidStop("delta_g must lie in (0, 1]"));
        }
        if self.window_s == 0 {
            return Err(AgentError::InvalidStop("window_s must be at least 1"));
        }
        if self.budget_b < self.window_s {
            return Err(AgentError::InvalidStop(
                "budget_b must be at least window_s",
            ));
        }
        Ok(())
    }

    /// Whether `successes` out of the last `window_s` episodes meet the bar.
    pub fn met(&self, successes: usize, episodes: usize) -> bool {
        episodes >= self.window_s && successes as f64 >= self.delta_g * self.window_s as f64 - 1e-9
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algorithm", rename_all = "snake_case")]
pub enum LearnerConfig {
    Reinforce(ReinforceConfig),
    Dqn(DqnConfig),
}

impl Default for LearnerConfig {
    fn default() -> Self {
        LearnerConfig::Reinforce(ReinforceConfig::default())
    }
}

impl LearnerConfig {
    pub fn hidden(&self) -> usize {
        match self {
            LearnerConfig::Reinforce(c) => c.hidden,
            LearnerConfig::Dqn(c) => c.hidden,
        }
    }

    pub fn exploration(&self) -> Exploration {
        match self {
            LearnerConfig::Reinforce(c) => c.exploration,
            LearnerConfig::Dqn(c) => c.exploration,
        }
    }

    pub fn greedy(&self) -> Greedy {
        match self {
            LearnerConfig::Reinforce(_) => Greedy::Sample,
            LearnerConfig::Dqn(_) => Greedy::Argmax,
        }
    }

    /// Checks every hyperparameter; the error names the offending field.
    pub fn validate(&self) -> Result<(), AgentError> {
        let bad = |field, rule| Err(AgentError::InvalidConfig { field, rule });
        let (hidden, lr, gamma) = match self {
            LearnerConfig::Reinforce(c) => (c.hidden, c.lr, c.gamma),
            LearnerConfig::Dqn(c) => (c.hidden, c.lr, c.gamma),
        };
        if hidden == 0 {
            return bad("hidden", "must be at least 1");
        }
        if !(lr.is_finite() && lr > 0.0) {
            return bad("lr", "must be positive and finite");
        }
        if !(0.0..=1.0).contains(&gamma) {
            return bad("gamma", "must lie in [0, 1]");
        }
        let e = self.exploration();
        if !(0.0..=1.0).contains(&e.start) || !(0.0..=1.0).contains(&e.end) {
            return bad("exploration", "start and end must lie in [0, 1]");
        }
        if !(e.decay_fraction > 0.0 && e.decay_fraction <= 1.0) {
            return bad("exploration.decay_fraction", "must lie in (0, 1]");
        }
        match self {
            LearnerConfig::Reinforce(c) => {
                if !(c.running_rate > 0.0 && c.running_rate <= 1.0) {
                    return bad("running_rate", "must lie in (0, 1]");
                }
            }
            LearnerConfig::Dqn(c) => {
                if c.batch_size == 0 || c.buffer_capacity < c.batch_size {
                    return bad("buffer_capacity", "must hold at least one batch");
                }
                if c.target_sync == 0 || c.train_freq == 0 {
                    return bad(
                        "target_sync",
                        "target_sync and train_freq must be at least 1",
                    );
                }
                if !(c.reward_scale.is_finite() && c.reward_scale > 0.0) {
                    return bad("reward_scale", "must be positive and finite");
                }
            }
        }
        Ok(())
    }

    /// Fresh weights for an environment with `obs_dim` inputs.
    pub fn init_policy(&self, obs_dim: usize, rng: &mut SimRng) -> MlpParams {
        MlpParams::init(obs_dim, self.hidden(), Action::COUNT, rng)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnResult {
    pub episodes_used: usize,
    pub timesteps_used: usize,
    pub final_policy: MlpParams,
    pub success_history: Vec<bool>,
    pub return_history: Vec<f64>,
    pub length_history: Vec<usize>,
    pub converged: bool,
}

enum Agent {
    Reinforce(ReinforceAgent),
    Dqn(DqnAgent),
}

/// Trains from `init` on `task` until `stop` fires.
pub fn learn<E: Environment + ?Sized>(
    env: &mut E,
    task: &TaskParams,
    cfg: &LearnerConfig,
    init: &MlpParams,
    stop: &StopCriterion,
    scheme: RewardScheme,
    rng: &mut SimRng,
) -> Result<LearnResult, AgentError> {
    stop.validate()?;
    if init.input != env.obs_dim() {
        return Err(AgentError::ShapeMismatch {
            expected: env.obs_dim(),
            got: init.input,
        });
    }
    env.set_reward_scheme(scheme);
    let mut agent = match cfg {
        LearnerConfig::Reinforce(c) => Agent::Reinforce(ReinforceAgent::new(*c, init.clone())),
        LearnerConfig::Dqn(c) => Agent::Dqn(DqnAgent::new(*c, init.clone())),
    };
    let exploration = cfg.exploration();
    let mut x = Vec::with_capacity(init.input);
    let mut x2 = Vec::with_capacity(init.input);
    let mut success_history = Vec::new();
    let mut return_history = Vec::new();
    let mut length_history = Vec::new();
    let mut timesteps = 0;
    let mut in_window = 0;
    let mut converged = false;

    for ep in 0..stop.budget_b {
        let eps = exploration.epsilon(ep, stop.budget_b);
        env.reset(task, rng)?.encode_into(&mut x);
        let mut ret = 0.0;
        let mut len = 0;
        let success = loop {
            let a = match &mut agent {
                Agent::Reinforce(r) => r.act(&x, eps, rng),
                Agent::Dqn(d) => d.act(&x, eps, rng),
            };
            let out = env.step(a)?;
            ret += out.reward;
            len += 1;
            match &mut agent {
                Agent::Reinforce(r) => r.reward(out.reward),
                Agent::Dqn(d) => {
                    out.observation.encode_into(&mut x2);
                    d.observe(
                        &x,
                        a,
                        out.reward,
                        &x2,
                        out.terminated && !out.truncated,
                        rng,
                    )?;
                    std::mem::swap(&mut x, &mut x2);
                }
            }
            if out.terminated {
                break out.success;
            }
            if let Agent::Reinforce(_) = agent {
                out.observation.encode_into(&mut x);
            }
        };
        if let Agent::Reinforce(r) = &mut agent {
            r.finish_episode()?;
        }
        timesteps += len;
        success_history.push(success);
        return_history.push(ret);
        length_history.push(len);
        in_window += usize::from(success);
        if success_history.len() > stop.window_s {
            in_window -= usize::from(success_history[success_history.len() - 1 - stop.window_s]);
        }
        if stop.met(in_window, success_history.len()) {
            converged = true;
            break;
        }
    }

    let final_policy = match agent {
        Agent::Reinforce(r) => r.into_policy(),
        Agent::Dqn(d) => d.into_policy(),
    };
    Ok(LearnResult {
        episodes_used: success_history.len(),
        timesteps_used: timesteps,
        final_policy,
        success_history,
        return_history,
        length_history,
        converged,
    })
}

/// Plays one episode without learning and records the path.
pub fn record_episode<E: Environment + ?Sized>(
    env: &mut E,
    task: &TaskParams,
    policy: &MlpParams,
    greedy: Greedy,
    epsilon: f64,
    scheme: RewardScheme,
    rng: &mut SimRng,
) -> Result<(Trajectory, EpisodeLog), AgentError> {
    env.set_reward_scheme(scheme);
    let mut x = env.reset(task, rng)?.to_features();
    let layout = env
        .layout()
        .ok_or(EnvError::ProtocolViolation("no layout after reset"))?;
    let mut log = EpisodeLog::default();
    let mut steps = Vec::new();
    loop {
        let out_q = policy.forward(&x)?;
        let a = select_action(&out_q, epsilon, greedy, rng);
        let out = env.step(a)?;
        log.push(a, out.reward);
        let agent = env.layout().map(|l| l.agent).unwrap_or(layout.agent);
        steps.push(TrajectoryStep {
            step: steps.len() + 1,
            action: a,
            reward: out.reward,
            agent,
        });
        if out.terminated {
            log.success = out.success;
            break;
        }
        out.observation.encode_into(&mut x);
    }
    Ok((Trajectory { layout, steps }, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{BeamReading, EnvError, HitKind, Observation, StepOutcome};
    use crate::params::{target_task_params, Fidelity, Variant};
    use crate::seed::stream;

    /// Two-step episodes whose outcome is fixed in advance.
    struct Scripted {
        succeed: bool,
        t: usize,
    }

    impl Environment for Scripted {
        fn fidelity(&self) -> Fidelity {
            Fidelity::Low
        }
        fn obs_dim(&self) -> usize {
            8
        }
        fn episode_cap(&self) -> usize {
            2
        }
        fn set_reward_scheme(&mut self, _: RewardScheme) {}
        fn reset(&mut self, _: &TaskParams, _: &mut SimRng) -> Result<Observation, EnvError> {
            self.t = 0;
            Ok(obs())
        }
        fn step(&mut self, _: Action) -> Result<StepOutcome, EnvError> {
            self.t += 1;
            let done = self.t == 2;
            Ok(StepOutcome {
                observation: obs(),
                reward: if done && self.succeed { 999.0 } else { -1.0 },
                terminated: done,
                truncated: done && !self.succeed,
                success: done && self.succeed,
            })
        }
        fn layout(&self) -> Option<crate::env::Layout> {
            None
        }
    }

    fn obs() -> Observation {
        Observation {
            beams: vec![BeamReading {
                hit: HitKind::Wall,
                distance: 0.5,
            }],
            wood: 0.0,
            stone: 0.0,
        }
    }

    fn run(succeed: bool, cfg: LearnerConfig) -> LearnResult {
        let stop = StopCriterion {
            delta_g: 0.85,
            window_s: 10,
            budget_b: 40,
        };
        let mut rng = stream(0, &[]);
        let init = cfg.init_policy(8, &mut rng);
        let task = target_task_params(Variant::Plain);
        learn(
            &mut Scripted { succeed, t: 0 },
            &task,
            &cfg,
            &init,
            &stop,
            RewardScheme::target(),
            &mut rng,
        )
        .unwrap()
    }

    #[test]
    fn always_succeeding_converges_after_one_window() {
        for cfg in [
            LearnerConfig::default(),
            LearnerConfig::Dqn(DqnConfig::default()),
        ] {
            let r = run(true, cfg);
            assert!(r.converged);
            assert_eq!(r.episodes_used, 10);
            assert_eq!(r.timesteps_used, 20);
            assert_eq!(r.return_history.len(), 10);
        }
    }

    #[test]
    fn learner_validation_names_the_field() {
        assert!(LearnerConfig::default().validate().is_ok());
        assert!(LearnerConfig::Dqn(DqnConfig::default()).validate().is_ok());
        let bad = LearnerConfig::Reinforce(ReinforceConfig {
            lr: 0.0,
            ..Default::default()
        });
        assert!(matches!(
            bad.validate(),
            Err(AgentError::InvalidConfig { field: "lr", .. })
        ));
        let bad = LearnerConfig::Dqn(DqnConfig {
            batch_size: 0,
            ..Default::default()
        });
        assert!(matches!(
            bad.validate(),
            Err(AgentError::InvalidConfig {
                field: "buffer_capacity",
                ..
            })
        ));
    }

    #[test]
    fn never_succeeding_spends_the_budget() {
        let r = run(false, LearnerConfig::default());
        assert!(!r.converged);
        assert_eq!(r.episodes_used, 40);
        assert_eq!(r.success_history, vec![false; 40]);
        assert!(r.length_history.iter().all(|l| *l == 2));
    }

    #[test]
    fn stop_rule_needs_a_full_window() {
        let s = StopCriterion {
            delta_g: 0.85,
            window_s: 100,
            budget_b: 200,
        };
        assert!(!s.met(99, 99));
        assert!(s.met(85, 100));
        assert!(!s.met(84, 150));
    }

    #[test]
    fn invalid_stop_rejected() {
        assert!(StopCriterion {
            delta_g: 0.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(StopCriterion {
            budget_b: 10,
            ..Default::default()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let cfg = LearnerConfig::default();
        let init = cfg.init_policy(9, &mut stream(0, &[]));
        let err = learn(
            &mut Scripted {
                succeed: true,
                t: 0,
            },
            &target_task_params(Variant::Plain),
            &cfg,
            &init,
            &StopCriterion::default(),
            RewardScheme::target(),
            &mut stream(0, &[]),
        )
        .unwrap_err();
        assert_eq!(
            err,
            AgentError::ShapeMismatch {
                expected: 8,
                got: 9
            }
        );
    }
}
