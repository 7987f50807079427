//! End-to-end runs: find or load a grid-world curriculum, map it to the
//! continuous world, and train through it.
//!
//! Only task parameters cross from the grid world to the continuous world.
//! The continuous-world policy always starts from fresh weights, drawn from
//! the same seed whichever curriculum source is used, so a curriculum run and
//! a scratch run differ only in what they train on before the target.

use serde::{Deserialize, Serialize};

use super::beam::{generate_ac, BeamOutcome};
use super::{
    BeamConfig, CurriculumError, CurriculumResult, CurriculumTask, EpisodeHistory, LearnTrainer,
    RandomTaskProposer, TaskTrainer,
};
use crate::agents::{LearnerConfig, MlpParams, StopCriterion};
use crate::mapping::{AffineMap, NoiseModel};
use crate::metrics::LearningCurve;
use crate::params::{feasible, Fidelity, TaskParams};
use crate::seed::{derive_seed, stream};

/// Seed-path tags separating the grid-world search from the continuous run.
const LF_STREAM: u64 = 1;
const HF_STREAM: u64 = 2;

/// Where the grid-world curriculum comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "tasks", rename_all = "snake_case")]
pub enum CurriculumSource {
    /// Beam search in the grid world.
    Ac,
    /// A fixed, already validated task list ending in the target.
    Hc(Vec<TaskParams>),
    /// Train on the target only.
    Scratch,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AcuteConfig {
    pub beam: BeamConfig,
    pub stop_lf: StopCriterion,
    pub stop_hf: StopCriterion,
    pub lf_learner: LearnerConfig,
    pub hf_learner: LearnerConfig,
}

/// One continuous-world task of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HfTaskLog {
    pub index: usize,
    pub lf_params: TaskParams,
    pub hf_params: TaskParams,
    pub is_target: bool,
    pub shaping_enabled: bool,
    pub episodes: usize,
    pub timesteps: usize,
    pub converged: bool,
    pub seed: u64,
    pub history: EpisodeHistory,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AcuteRun {
    /// The grid-world curriculum; for scratch runs, the target alone.
    pub lf: CurriculumResult,
    pub hf_tasks: Vec<HfTaskLog>,
    pub final_policy: MlpParams,
}

impl AcuteRun {
    pub fn target(&self) -> &HfTaskLog {
        self.hf_tasks
            .last()
            .expect("a run trains at least the target")
    }

    /// Continuous-world steps spent on source tasks.
    pub fn hf_source_timesteps(&self) -> usize {
        self.hf_tasks
            .iter()
            .filter(|t| !t.is_target)
            .map(|t| t.timesteps)
            .sum()
    }

    /// Every step taken before target training began: the whole grid-world
    /// search plus the continuous-world source tasks, counted 1:1.
    pub fn sunk_cost_timesteps(&self) -> usize {
        self.lf.sunk_cost_timesteps + self.hf_source_timesteps()
    }

    /// Target-task learning curve offset by the sunk cost.
    pub fn target_curve(&self) -> LearningCurve {
        let h = &self.target().history;
        LearningCurve::from_episodes(
            self.sunk_cost_timesteps(),
            &h.lengths,
            &h.returns,
            &h.successes,
        )
    }

    /// Sunk cost plus target-task steps.
    pub fn total_timesteps(&self) -> usize {
        self.sunk_cost_timesteps() + self.target().timesteps
    }
}

/// Runs the beam search for `lf_target` with the map's grid-world ranges.
pub fn optimize_lf(
    lf_target: &TaskParams,
    map: &AffineMap,
    cfg: &AcuteConfig,
    seed: u64,
) -> Result<BeamOutcome<MlpParams>, CurriculumError> {
    let trainer = LearnTrainer {
        fidelity: Fidelity::Low,
        learner: cfg.lf_learner,
        stop: cfg.stop_lf,
    };
    let proposer = RandomTaskProposer {
        ranges: map.lf_ranges.clone(),
        target: *lf_target,
    };
    generate_ac(
        lf_target,
        &cfg.beam,
        &trainer,
        &proposer,
        derive_seed(seed, &[LF_STREAM]),
    )
}

/// The grid-world counterpart of `hf_target`, checked to map back exactly.
pub fn lf_target_for(
    hf_target: &TaskParams,
    map: &AffineMap,
) -> Result<TaskParams, CurriculumError> {
    let lf_target = map.inverse(hf_target)?;
    map.check_anchoring(&lf_target, hf_target)?;
    Ok(lf_target)
}

/// Maps each grid-world task to the continuous world. Source tasks take
/// noise when a model is given; the last entry always maps to `hf_target`.
pub fn map_curriculum(
    lf_tasks: &[TaskParams],
    hf_target: &TaskParams,
    map: &AffineMap,
    noise: Option<&NoiseModel>,
    seed: u64,
) -> Result<Vec<TaskParams>, CurriculumError> {
    let mut rng = stream(seed, &[HF_STREAM, 2]);
    let last = lf_tasks.len().saturating_sub(1);
    lf_tasks
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let hf = if i == last {
                *hf_target
            } else if let Some(n) = noise {
                map.forward_noisy(n, p, &mut rng)?
            } else {
                map.forward(p)
            };
            if !feasible(&hf, Fidelity::High) {
                return Err(CurriculumError::InfeasibleHfTask { index: i });
            }
            Ok(hf)
        })
        .collect()
}

/// Trains a fresh continuous-world policy through `lf` mapped by `map`.
pub fn run_hf(
    lf: CurriculumResult,
    hf_target: &TaskParams,
    map: &AffineMap,
    noise: Option<&NoiseModel>,
    learner: &LearnerConfig,
    stop: &StopCriterion,
    seed: u64,
) -> Result<AcuteRun, CurriculumError> {
    let lf_tasks = lf.params();
    let hf_params = map_curriculum(&lf_tasks, hf_target, map, noise, seed)?;
    let trainer = LearnTrainer {
        fidelity: Fidelity::High,
        learner: *learner,
        stop: *stop,
    };
    let mut policy = trainer.initial_policy(derive_seed(seed, &[HF_STREAM, 0]));
    let last = hf_params.len() - 1;
    let mut hf_tasks = Vec::with_capacity(hf_params.len());
    for (i, (lf_p, hf_p)) in lf_tasks.iter().zip(&hf_params).enumerate() {
        let is_target = i == last;
        let task_seed = derive_seed(seed, &[HF_STREAM, 1, i as u64]);
        let out = trainer.train(hf_p, &policy, is_target, task_seed)?;
        policy = out.policy;
        hf_tasks.push(HfTaskLog {
            index: i,
            lf_params: *lf_p,
            hf_params: *hf_p,
            is_target,
            shaping_enabled: !is_target,
            episodes: out.episodes,
            timesteps: out.timesteps,
            converged: out.converged,
            seed: task_seed,
            history: out.history,
        });
    }
    Ok(AcuteRun {
        lf,
        hf_tasks,
        final_policy: policy,
    })
}

/// The whole pipeline for one trial seed.
pub fn run_acute(
    hf_target: &TaskParams,
    map: &AffineMap,
    noise: Option<&NoiseModel>,
    cfg: &AcuteConfig,
    source: &CurriculumSource,
    seed: u64,
) -> Result<AcuteRun, CurriculumError> {
    let lf_target = lf_target_for(hf_target, map)?;
    let lf = match source {
        CurriculumSource::Ac => optimize_lf(&lf_target, map, cfg, seed)?.result,
        CurriculumSource::Hc(tasks) => {
            super::validate_hc(tasks, &lf_target)?;
            unpriced(tasks)
        }
        CurriculumSource::Scratch => unpriced(&[lf_target]),
    };
    run_hf(
        lf,
        hf_target,
        map,
        noise,
        &cfg.hf_learner,
        &cfg.stop_hf,
        seed,
    )
}

/// A curriculum that cost nothing to find.
pub fn unpriced(tasks: &[TaskParams]) -> CurriculumResult {
    CurriculumResult {
        tasks: tasks
            .iter()
            .map(|p| CurriculumTask {
                params: *p,
                episodes: 0,
                timesteps: 0,
                converged: false,
            })
            .collect(),
        sunk_cost_timesteps: 0,
        sunk_cost_episodes: 0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::ReinforceConfig;
    use crate::params::{GoalSpec, ItemKind, ParamRanges, Variant};

    fn small_target() -> (TaskParams, AffineMap) {
        let lf = TaskParams {
            width: 4.0,
            height: 4.0,
            trees_env: 1,
            rocks_env: 0,
            crafting_tables: 0,
            wood_inv: 0,
            stone_inv: 0,
            fires_env: 0,
            goal: GoalSpec::Navigate {
                item: ItemKind::Tree,
            },
        };
        let map = AffineMap::default_for(ParamRanges::for_target(&lf, Variant::Plain));
        (map.forward(&lf), map)
    }

    fn quick_cfg() -> AcuteConfig {
        let stop = StopCriterion {
            delta_g: 0.5,
            window_s: 5,
            budget_b: 10,
        };
        let learner = LearnerConfig::Reinforce(ReinforceConfig {
            hidden: 8,
            ..Default::default()
        });
        AcuteConfig {
            beam: BeamConfig {
                width_w: 1,
                branch_n: 2,
                length_u: 3,
            },
            stop_lf: stop,
            stop_hf: stop,
            lf_learner: learner,
            hf_learner: learner,
        }
    }

    #[test]
    fn scratch_trains_only_the_target() {
        let (hf, map) = small_target();
        let run = run_acute(&hf, &map, None, &quick_cfg(), &CurriculumSource::Scratch, 1).unwrap();
        assert_eq!(run.hf_tasks.len(), 1);
        assert!(run.target().is_target && !run.target().shaping_enabled);
        assert_eq!(run.sunk_cost_timesteps(), 0);
        assert_eq!(run.target().hf_params, hf);
    }

    #[test]
    fn hc_sequence_is_forward_image_with_shaping_on_sources() {
        let (hf, map) = small_target();
        let lf_target = lf_target_for(&hf, &map).unwrap();
        let tasks = vec![
            TaskParams {
                crafting_tables: 1,
                trees_env: 1,
                rocks_env: 0,
                wood_inv: 2,
                stone_inv: 1,
                goal: GoalSpec::Craft,
                ..lf_target
            },
            lf_target.with_goal(GoalSpec::Break { trees: 1, rocks: 0 }),
            lf_target,
        ];
        let run = run_acute(
            &hf,
            &map,
            None,
            &quick_cfg(),
            &CurriculumSource::Hc(tasks.clone()),
            2,
        )
        .unwrap();
        assert_eq!(run.hf_tasks.len(), 3);
        for (log, lf) in run.hf_tasks.iter().zip(&tasks) {
            assert_eq!(log.hf_params, map.forward(lf));
            assert_eq!(log.shaping_enabled, !log.is_target);
        }
        assert_eq!(
            run.sunk_cost_timesteps(),
            run.hf_tasks[0].timesteps + run.hf_tasks[1].timesteps
        );
    }

    #[test]
    fn ac_run_is_deterministic_and_counts_search_cost() {
        let (hf, map) = small_target();
        let a = run_acute(&hf, &map, None, &quick_cfg(), &CurriculumSource::Ac, 3).unwrap();
        let b = run_acute(&hf, &map, None, &quick_cfg(), &CurriculumSource::Ac, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.hf_tasks.len(), 3);
        assert!(a.lf.sunk_cost_timesteps >= a.lf.tasks.iter().map(|t| t.timesteps).sum::<usize>());
        assert_eq!(
            a.sunk_cost_timesteps(),
            a.lf.sunk_cost_timesteps + a.hf_source_timesteps()
        );
        assert_eq!(a.target().hf_params, hf);
    }

    #[test]
    fn noise_moves_sources_but_not_the_target() {
        let lf_target = crate::params::target_task_params(Variant::Plain);
        let map = AffineMap::default_for(ParamRanges::lf_default(Variant::Plain));
        let hf = map.forward(&lf_target);
        let noise = NoiseModel::from_ranges(&map.hf_ranges);
        let src = lf_target.with_goal(GoalSpec::Break { trees: 1, rocks: 0 });
        let tasks = [src, src, lf_target];
        let noisy = map_curriculum(&tasks, &hf, &map, Some(&noise), 4).unwrap();
        assert_eq!(noisy[2], hf);
        assert_ne!(noisy[0], map.forward(&src));
        assert!(noisy.iter().all(|p| feasible(p, Fidelity::High)));
        assert_eq!(
            noisy,
            map_curriculum(&tasks, &hf, &map, Some(&noise), 4).unwrap()
        );
    }
}
