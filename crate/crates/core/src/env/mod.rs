//! Agent/environment contract shared by the grid world ([`grid`]) and the
//! continuous world ([`planar`]).
//!
//! Both worlds expose the same five actions and the same observation layout:
//! a fixed ring of range beams, each reporting the kind of the first thing it
//! hits (one-hot over tree, rock, crafting table, wall, fire) and the hit
//! distance normalized by the arena diagonal, followed by two inventory
//! readings. The observation length depends only on the fidelity, never on
//! the task, so a policy can be carried from one task to the next.

pub mod audit;
pub mod grid;
pub mod planar;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::params::{Fidelity, TaskParams, RECIPE_STONE, RECIPE_WOOD};
use crate::seed::SimRng;

pub use grid::GridWorld;
pub use planar::PlanarWorld;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("protocol violation: {0}")]
    ProtocolViolation(&'static str),
    #[error("placement failure: {0}")]
    PlacementFailure(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Forward,
    RotateCw,
    RotateCcw,
    Break,
    Craft,
}

impl Action {
    pub const COUNT: usize = 5;
    pub const ALL: [Action; Action::COUNT] = [
        Action::Forward,
        Action::RotateCw,
        Action::RotateCcw,
        Action::Break,
        Action::Craft,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Action {
        Action::ALL[i]
    }
}

/// Physical objects that can occupy the arena.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectKind {
    Tree,
    Rock,
    CraftingTable,
    Fire,
}

/// What a beam can report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HitKind {
    Tree,
    Rock,
    CraftingTable,
    Wall,
    Fire,
}

impl HitKind {
    pub const COUNT: usize = 5;

    pub fn index(self) -> usize {
        self as usize
    }
}

impl From<ObjectKind> for HitKind {
    fn from(k: ObjectKind) -> HitKind {
        match k {
            ObjectKind::Tree => HitKind::Tree,
            ObjectKind::Rock => HitKind::Rock,
            ObjectKind::CraftingTable => HitKind::CraftingTable,
            ObjectKind::Fire => HitKind::Fire,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeamReading {
    pub hit: HitKind,
    /// Hit distance over the arena diagonal, in `[0, 1]`.
    pub distance: f64,
}

/// Features per beam: one-hot kind plus distance.
pub const BEAM_FEATURES: usize = HitKind::COUNT + 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub beams: Vec<BeamReading>,
    /// Wood held over the recipe requirement, capped at 1.
    pub wood: f64,
    /// Stone held over the recipe requirement, capped at 1.
    pub stone: f64,
}

impl Observation {
    pub fn dim(&self) -> usize {
        observation_dim(self.beams.len())
    }

    pub fn encode_into(&self, out: &mut Vec<f64>) {
        out.clear();
        for b in &self.beams {
            let mut one_hot = [0.0; HitKind::COUNT];
            one_hot[b.hit.index()] = 1.0;
            out.extend_from_slice(&one_hot);
            out.push(b.distance);
        }
        out.push(self.wood);
        out.push(self.stone);
    }

    pub fn to_features(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.dim());
        self.encode_into(&mut v);
        v
    }
}

pub fn observation_dim(beams: usize) -> usize {
    beams * BEAM_FEATURES + 2
}

pub(crate) fn inventory_readings(wood: u32, stone: u32) -> (f64, f64) {
    (
        (wood as f64 / RECIPE_WOOD as f64).min(1.0),
        (stone as f64 / RECIPE_STONE as f64).min(1.0),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub observation: Observation,
    pub reward: f64,
    pub terminated: bool,
    /// Terminated only because the step cap was reached.
    pub truncated: bool,
    pub success: bool,
}

/// Reward constants for one task.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardScheme {
    pub step_penalty: f64,
    pub success_bonus: f64,
    pub break_bonus: f64,
    pub fire_penalty: f64,
    pub shaping_enabled: bool,
}

impl RewardScheme {
    /// Source tasks: the break bonus for needed items is paid.
    pub fn source() -> RewardScheme {
        RewardScheme {
            step_penalty: -1.0,
            success_bonus: 1000.0,
            break_bonus: 50.0,
            fire_penalty: -1000.0,
            shaping_enabled: true,
        }
    }

    /// The target task carries no shaping.
    pub fn target() -> RewardScheme {
        RewardScheme {
            shaping_enabled: false,
            ..RewardScheme::source()
        }
    }

    pub fn for_task(is_target: bool) -> RewardScheme {
        if is_target {
            RewardScheme::target()
        } else {
            RewardScheme::source()
        }
    }
}

impl Default for RewardScheme {
    fn default() -> Self {
        RewardScheme::target()
    }
}

/// Per-episode record of actions and rewards.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub steps: Vec<(Action, f64)>,
    pub total_return: f64,
    pub success: bool,
}

impl EpisodeLog {
    pub fn push(&mut self, action: Action, reward: f64) {
        self.steps.push((action, reward));
        self.total_return += reward;
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn rewards(&self) -> impl DoubleEndedIterator<Item = f64> + '_ {
        self.steps.iter().map(|(_, r)| *r)
    }
}

/// `G_0 = sum_k gamma^k r_k`.
pub fn discounted_return(log: &EpisodeLog, gamma: f64) -> f64 {
    discounted_sum(log.rewards(), gamma)
}

pub(crate) fn discounted_sum(rewards: impl DoubleEndedIterator<Item = f64>, gamma: f64) -> f64 {
    rewards.rev().fold(0.0, |acc, r| r + gamma * acc)
}

/// A top-down snapshot for debugging dumps and replay plots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub fidelity: Fidelity,
    pub width: f64,
    pub height: f64,
    pub agent: Pose,
    pub objects: Vec<PlacedObject>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlacedObject {
    pub kind: ObjectKind,
    pub x: f64,
    pub y: f64,
    pub radius: f64,
}

/// One step of a recorded trajectory, one JSON line each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryStep {
    pub step: usize,
    pub action: Action,
    pub reward: f64,
    pub agent: Pose,
}

/// Layout at reset plus the agent path through one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub layout: Layout,
    pub steps: Vec<TrajectoryStep>,
}

impl Trajectory {
    pub fn to_json_lines(&self) -> String {
        let mut s = String::new();
        for step in &self.steps {
            s.push_str(&serde_json::to_string(step).expect("serializable"));
            s.push('\n');
        }
        s
    }
}

/// Contract implemented by both worlds.
pub trait Environment {
    fn fidelity(&self) -> Fidelity;
    fn obs_dim(&self) -> usize;
    fn episode_cap(&self) -> usize;
    fn set_reward_scheme(&mut self, scheme: RewardScheme);
    fn reset(&mut self, params: &TaskParams, rng: &mut SimRng) -> Result<Observation, EnvError>;
    fn step(&mut self, action: Action) -> Result<StepOutcome, EnvError>;
    /// Current arena snapshot, if an episode has been started.
    fn layout(&self) -> Option<Layout>;
}

/// Bookkeeping shared by both worlds: step budget and episode status.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct EpisodeClock {
    pub steps_used: usize,
    pub active: bool,
    pub started: bool,
}

impl EpisodeClock {
    pub fn begin(&mut self) {
        self.steps_used = 0;
        self.active = true;
        self.started = true;
    }

    pub fn tick(&mut self) -> Result<(), EnvError> {
        if !self.started {
            return Err(EnvError::ProtocolViolation("step before reset"));
        }
        if !self.active {
            return Err(EnvError::ProtocolViolation("step after terminal"));
        }
        self.steps_used += 1;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn log(rewards: &[f64]) -> EpisodeLog {
        let mut l = EpisodeLog::default();
        for r in rewards {
            l.push(Action::Forward, *r);
        }
        l
    }

    #[test]
    fn discounted_return_examples() {
        assert_eq!(discounted_return(&log(&[5.0]), 0.3), 5.0);
        assert_eq!(discounted_return(&log(&[-1.0, -1.0, 1000.0]), 1.0), 998.0);
        assert_eq!(discounted_return(&log(&[7.0, 3.0, 2.0]), 0.0), 7.0);
        let l = log(&[1.0, 2.0, 4.0]);
        assert!((discounted_return(&l, 0.5) - (1.0 + 1.0 + 1.0)).abs() < 1e-12);
        assert_eq!(discounted_return(&l, 1.0), l.total_return);
    }

    #[test]
    fn observation_dims() {
        assert_eq!(observation_dim(8), 50);
        assert_eq!(observation_dim(20), 122);
        let obs = Observation {
            beams: vec![BeamReading {
                hit: HitKind::Fire,
                distance: 0.5,
            }],
            wood: 0.5,
            stone: 1.0,
        };
        assert_eq!(
            obs.to_features(),
            vec![0.0, 0.0, 0.0, 0.0, 1.0, 0.5, 0.5, 1.0]
        );
    }

    #[test]
    fn reward_schemes() {
        assert!(RewardScheme::source().shaping_enabled);
        assert!(!RewardScheme::target().shaping_enabled);
        assert_eq!(RewardScheme::for_task(true), RewardScheme::target());
    }
}
