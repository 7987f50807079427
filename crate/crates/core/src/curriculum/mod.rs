//! Curriculum search in the grid world and curriculum execution in the
//! continuous world.
//!
//! The search ([`beam::generate_ac`]) is generic over a [`TaskTrainer`] and a
//! [`TaskProposer`], so the same code runs with real learners and with the
//! cost-table domain in [`synthetic`] used to check it against brute force.

pub mod beam;
pub mod hc;
pub mod pipeline;
pub mod synthetic;

use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{learn, AgentError, LearnerConfig, MlpParams, StopCriterion};
use crate::env::{Environment, GridWorld, PlanarWorld, RewardScheme};
use crate::mapping::MappingError;
use crate::params::{
    goal_categories, random_task, Fidelity, GoalCategory, ParamRanges, ParamsError, TaskParams,
};
use crate::seed::{stream, SimRng};

pub use beam::{best_candidates, generate_ac, BeamNode, BeamOutcome, LevelTrace};
pub use hc::{load_hc, parse_hc, validate_hc};
pub use pipeline::{
    lf_target_for, map_curriculum, optimize_lf, run_acute, run_hf, unpriced, AcuteConfig, AcuteRun,
    CurriculumSource, HfTaskLog,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CurriculumError {
    #[error("invalid beam config: {0}")]
    InvalidConfig(String),
    #[error("no feasible goal for a new task")]
    NoFeasibleGoal,
    #[error("curriculum entry {entry}: {rule}")]
    Validation { entry: usize, rule: String },
    #[error("mapped task {index} is infeasible in the continuous world")]
    InfeasibleHfTask { index: usize },
    #[error("io: {0}")]
    Io(String),
    #[error(transparent)]
    Params(#[from] ParamsError),
    #[error(transparent)]
    Mapping(#[from] MappingError),
    #[error(transparent)]
    Agent(#[from] AgentError),
}

/// Beam width `W`, branching `N` and curriculum length `U`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct BeamConfig {
    pub width_w: usize,
    pub branch_n: usize,
    pub length_u: usize,
}

impl Default for BeamConfig {
    fn default() -> Self {
        BeamConfig {
            width_w: 4,
            branch_n: 20,
            length_u: 4,
        }
    }
}

impl BeamConfig {
    pub fn validate(&self) -> Result<(), CurriculumError> {
        if self.width_w == 0 {
            return Err(CurriculumError::InvalidConfig(
                "width_w must be at least 1".into(),
            ));
        }
        if self.branch_n == 0 {
            return Err(CurriculumError::InvalidConfig(
                "branch_n must be at least 1".into(),
            ));
        }
        let k = goal_categories().len();
        if self.length_u < k {
            return Err(CurriculumError::InvalidConfig(format!(
                "length_u must be at least the number of goal categories ({k})"
            )));
        }
        Ok(())
    }
}

/// Per-episode record of one training run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EpisodeHistory {
    pub returns: Vec<f64>,
    pub successes: Vec<bool>,
    pub lengths: Vec<usize>,
}

/// What training one task produced.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome<P> {
    pub episodes: usize,
    pub timesteps: usize,
    pub converged: bool,
    pub policy: P,
    pub history: EpisodeHistory,
}

/// Trains a policy on one task.
pub trait TaskTrainer: Sync {
    type Policy: Clone + Send + Sync;

    /// The policy every first-level node starts from.
    fn initial_policy(&self, seed: u64) -> Self::Policy;

    fn train(
        &self,
        task: &TaskParams,
        init: &Self::Policy,
        is_target: bool,
        seed: u64,
    ) -> Result<TrainOutcome<Self::Policy>, CurriculumError>;
}

/// Generates candidate tasks for the search.
pub trait TaskProposer: Sync {
    /// Candidate `n` for the first level.
    fn source(&self, n: usize, rng: &mut SimRng) -> Result<TaskParams, CurriculumError>;

    /// Candidate `n` following a path that has covered `seen`.
    fn successor(
        &self,
        seen: &BTreeSet<GoalCategory>,
        n: usize,
        rng: &mut SimRng,
    ) -> Result<TaskParams, CurriculumError>;
}

/// Random grid-world tasks inside `ranges`.
///
/// Successors take a goal category the path has not covered yet; once every
/// category is covered they take Break again, and when nothing feasible
/// remains they fall back to the target.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomTaskProposer {
    pub ranges: ParamRanges,
    pub target: TaskParams,
}

impl RandomTaskProposer {
    fn first_feasible(&self, mut cats: Vec<GoalCategory>, rng: &mut SimRng) -> Option<TaskParams> {
        while !cats.is_empty() {
            let c = cats.remove(rng.random_range(0..cats.len()));
            if let Ok(p) = random_task(rng, &self.ranges, c) {
                return Some(p);
            }
        }
        None
    }
}

impl TaskProposer for RandomTaskProposer {
    fn source(&self, _n: usize, rng: &mut SimRng) -> Result<TaskParams, CurriculumError> {
        self.first_feasible(goal_categories().to_vec(), rng)
            .ok_or(CurriculumError::NoFeasibleGoal)
    }

    fn successor(
        &self,
        seen: &BTreeSet<GoalCategory>,
        _n: usize,
        rng: &mut SimRng,
    ) -> Result<TaskParams, CurriculumError> {
        let unseen: Vec<GoalCategory> = goal_categories()
            .into_iter()
            .filter(|c| !seen.contains(c))
            .collect();
        let cats = if unseen.is_empty() {
            vec![GoalCategory::Break]
        } else {
            unseen
        };
        Ok(self.first_feasible(cats, rng).unwrap_or(self.target))
    }
}

/// Trains MLP policies with [`learn`] in a world of the given fidelity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearnTrainer {
    pub fidelity: Fidelity,
    pub learner: LearnerConfig,
    pub stop: StopCriterion,
}

impl LearnTrainer {
    pub fn obs_dim(&self) -> usize {
        match self.fidelity {
            Fidelity::Low => GridWorld::new().obs_dim(),
            Fidelity::High => PlanarWorld::new().obs_dim(),
        }
    }
}

impl TaskTrainer for LearnTrainer {
    type Policy = MlpParams;

    fn initial_policy(&self, seed: u64) -> MlpParams {
        self.learner
            .init_policy(self.obs_dim(), &mut stream(seed, &[]))
    }

    fn train(
        &self,
        task: &TaskParams,
        init: &MlpParams,
        is_target: bool,
        seed: u64,
    ) -> Result<TrainOutcome<MlpParams>, CurriculumError> {
        let mut rng = stream(seed, &[]);
        let scheme = RewardScheme::for_task(is_target);
        let r = match self.fidelity {
            Fidelity::Low => learn(
                &mut GridWorld::new(),
                task,
                &self.learner,
                init,
                &self.stop,
                scheme,
                &mut rng,
            )?,
            Fidelity::High => learn(
                &mut PlanarWorld::new(),
                task,
                &self.learner,
                init,
                &self.stop,
                scheme,
                &mut rng,
            )?,
        };
        Ok(TrainOutcome {
            episodes: r.episodes_used,
            timesteps: r.timesteps_used,
            converged: r.converged,
            policy: r.final_policy,
            history: EpisodeHistory {
                returns: r.return_history,
                successes: r.success_history,
                lengths: r.length_history,
            },
        })
    }
}

/// One entry of a finished curriculum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurriculumTask {
    pub params: TaskParams,
    pub episodes: usize,
    pub timesteps: usize,
    pub converged: bool,
}

/// The chosen grid-world curriculum and what the search spent finding it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurriculumResult {
    pub tasks: Vec<CurriculumTask>,
    /// Every grid-world step taken by every node of the search.
    pub sunk_cost_timesteps: usize,
    pub sunk_cost_episodes: usize,
}

impl CurriculumResult {
    pub fn params(&self) -> Vec<TaskParams> {
        self.tasks.iter().map(|t| t.params).collect()
    }

    pub fn path_episodes(&self) -> usize {
        self.tasks.iter().map(|t| t.episodes).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{feasible, target_task_params, Variant};

    #[test]
    fn beam_config_rules() {
        assert!(BeamConfig::default().validate().is_ok());
        assert!(BeamConfig {
            length_u: 2,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(BeamConfig {
            width_w: 0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(BeamConfig {
            branch_n: 0,
            ..Default::default()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn proposer_covers_unseen_categories_then_break() {
        let target = target_task_params(Variant::Plain);
        let prop = RandomTaskProposer {
            ranges: ParamRanges::lf_default(Variant::Plain),
            target,
        };
        let mut rng = stream(1, &[]);
        for _ in 0..50 {
            let seen: BTreeSet<_> = [GoalCategory::Navigate].into();
            let p = prop.successor(&seen, 0, &mut rng).unwrap();
            assert_ne!(p.goal.category(), GoalCategory::Navigate);
            assert!(feasible(&p, Fidelity::Low));
            let all: BTreeSet<_> = goal_categories().into();
            assert_eq!(
                prop.successor(&all, 0, &mut rng).unwrap().goal.category(),
                GoalCategory::Break
            );
        }
    }

    #[test]
    fn proposer_falls_back_to_target() {
        let target = target_task_params(Variant::Plain);
        let mut ranges = ParamRanges::lf_default(Variant::Plain);
        ranges.trees_env = crate::params::Bounds::new(0.0, 0.0);
        ranges.rocks_env = crate::params::Bounds::new(0.0, 0.0);
        let prop = RandomTaskProposer { ranges, target };
        let seen: BTreeSet<_> = [GoalCategory::Navigate, GoalCategory::Craft].into();
        assert_eq!(
            prop.successor(&seen, 0, &mut stream(2, &[])).unwrap(),
            target
        );
    }
}
