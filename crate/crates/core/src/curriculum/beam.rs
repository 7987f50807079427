//! Level-by-level beam search over task sequences.
//!
//! Level 1 trains `N` proposed source tasks from one shared initial policy.
//! Each later level expands every kept node into `N` successors that start
//! from a copy of the parent's final policy, then keeps the `W` cheapest
//! children overall. The last level is the target itself, one child per kept
//! node. The returned curriculum is the root-to-leaf path with the fewest
//! cumulative episodes.
//!
//! Nodes of one level train in parallel. Each node draws from its own stream
//! keyed by `(level, parent slot, branch)`, and ranking uses a total order,
//! so the outcome does not depend on scheduling.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use rayon::prelude::*;

use super::{
    BeamConfig, CurriculumError, CurriculumResult, CurriculumTask, EpisodeHistory, TaskProposer,
    TaskTrainer,
};
use crate::params::{feasible, Fidelity, GoalCategory, TaskParams};
use crate::seed::{derive_seed, stream};

/// A trained candidate in the search tree.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamNode<P> {
    /// Creation index; also the node's slot in [`BeamOutcome::nodes`].
    pub id: usize,
    /// 1-based level.
    pub level: usize,
    pub params: TaskParams,
    pub policy: P,
    pub episodes_used: usize,
    pub timesteps_used: usize,
    pub converged: bool,
    pub cumulative_episodes: usize,
    pub cumulative_timesteps: usize,
    pub goal_categories_seen: BTreeSet<GoalCategory>,
    pub parent: Option<usize>,
    pub seed: u64,
    pub history: EpisodeHistory,
}

/// Which nodes competed at one level and which survived.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LevelTrace {
    pub level: usize,
    pub candidates: Vec<usize>,
    pub selected: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeamOutcome<P> {
    pub nodes: Vec<BeamNode<P>>,
    pub levels: Vec<LevelTrace>,
    /// Root-to-leaf node ids of the chosen curriculum.
    pub best_path: Vec<usize>,
    pub result: CurriculumResult,
}

impl<P> BeamOutcome<P> {
    pub fn best_leaf(&self) -> &BeamNode<P> {
        &self.nodes[*self.best_path.last().expect("non-empty path")]
    }
}

fn rank<P>(a: &BeamNode<P>, b: &BeamNode<P>) -> Ordering {
    a.episodes_used
        .cmp(&b.episodes_used)
        .then(a.timesteps_used.cmp(&b.timesteps_used))
        .then_with(|| a.params.total_cmp(&b.params))
        .then(a.id.cmp(&b.id))
}

/// The `width` cheapest nodes by episodes, then timesteps, then parameters,
/// then creation order.
pub fn best_candidates<P>(nodes: &[&BeamNode<P>], width: usize) -> Vec<usize> {
    let mut sorted: Vec<&BeamNode<P>> = nodes.to_vec();
    sorted.sort_by(|a, b| rank(a, b));
    sorted.into_iter().take(width).map(|n| n.id).collect()
}

struct Pending<'a, P> {
    params: TaskParams,
    parent: Option<usize>,
    init: &'a P,
    seed: u64,
    is_target: bool,
}

/// Runs the beam search and returns every node plus the chosen curriculum.
pub fn generate_ac<T: TaskTrainer, Q: TaskProposer>(
    lf_target: &TaskParams,
    cfg: &BeamConfig,
    trainer: &T,
    proposer: &Q,
    master_seed: u64,
) -> Result<BeamOutcome<T::Policy>, CurriculumError> {
    cfg.validate()?;
    if !feasible(lf_target, Fidelity::Low) {
        return Err(CurriculumError::Validation {
            entry: cfg.length_u - 1,
            rule: "target task is infeasible".into(),
        });
    }
    let root_policy = trainer.initial_policy(derive_seed(master_seed, &[0]));
    let mut nodes: Vec<BeamNode<T::Policy>> = Vec::new();
    let mut levels = Vec::new();
    let mut kept: Vec<usize> = Vec::new();

    for level in 1..=cfg.length_u {
        let u = level as u64;
        let last = level == cfg.length_u;
        let mut pending: Vec<Pending<T::Policy>> = Vec::new();
        if level == 1 {
            for n in 0..cfg.branch_n {
                let path = [u, 0, n as u64];
                let params = if last {
                    *lf_target
                } else {
                    proposer.source(n, &mut stream(master_seed, &[u, 0, n as u64, 0]))?
                };
                pending.push(Pending {
                    params,
                    parent: None,
                    init: &root_policy,
                    seed: derive_seed(master_seed, &path),
                    is_target: last,
                });
            }
        } else {
            for (w, &pid) in kept.iter().enumerate() {
                let parent = &nodes[pid];
                let branches = if last { 1 } else { cfg.branch_n };
                for n in 0..branches {
                    let path = [u, w as u64, n as u64];
                    let params = if last {
                        *lf_target
                    } else {
                        proposer.successor(
                            &parent.goal_categories_seen,
                            n,
                            &mut stream(master_seed, &[u, w as u64, n as u64, 0]),
                        )?
                    };
                    pending.push(Pending {
                        params,
                        parent: Some(pid),
                        init: &parent.policy,
                        seed: derive_seed(master_seed, &path),
                        is_target: last,
                    });
                }
            }
        }

        let outcomes: Vec<_> = pending
            .par_iter()
            .map(|s| trainer.train(&s.params, s.init, s.is_target, s.seed))
            .collect::<Result<_, _>>()?;

        let first_id = nodes.len();
        let mut fresh = Vec::with_capacity(pending.len());
        for (i, (job, out)) in pending.into_iter().zip(outcomes).enumerate() {
            let (cum_e, cum_t, mut seen) = match job.parent {
                Some(p) => {
                    let pn = &nodes[p];
                    (
                        pn.cumulative_episodes,
                        pn.cumulative_timesteps,
                        pn.goal_categories_seen.clone(),
                    )
                }
                None => (0, 0, BTreeSet::new()),
            };
            seen.insert(job.params.goal.category());
            fresh.push(BeamNode {
                id: first_id + i,
                level,
                params: job.params,
                policy: out.policy,
                episodes_used: out.episodes,
                timesteps_used: out.timesteps,
                converged: out.converged,
                cumulative_episodes: cum_e + out.episodes,
                cumulative_timesteps: cum_t + out.timesteps,
                goal_categories_seen: seen,
                parent: job.parent,
                seed: job.seed,
                history: out.history,
            });
        }
        nodes.extend(fresh);
        let candidates: Vec<usize> = (first_id..nodes.len()).collect();
        let refs: Vec<&BeamNode<T::Policy>> = candidates.iter().map(|&i| &nodes[i]).collect();
        let selected = if last {
            candidates.clone()
        } else {
            best_candidates(&refs, cfg.width_w)
        };
        levels.push(LevelTrace {
            level,
            candidates,
            selected: selected.clone(),
        });
        kept = selected;
    }

    let leaf = kept
        .iter()
        .copied()
        .min_by(|&a, &b| {
            let (x, y) = (&nodes[a], &nodes[b]);
            x.cumulative_episodes
                .cmp(&y.cumulative_episodes)
                .then(x.cumulative_timesteps.cmp(&y.cumulative_timesteps))
                .then(a.cmp(&b))
        })
        .expect("at least one leaf");
    let mut best_path = vec![leaf];
    while let Some(p) = nodes[*best_path.last().expect("non-empty")].parent {
        best_path.push(p);
    }
    best_path.reverse();

    let result = CurriculumResult {
        tasks: best_path
            .iter()
            .map(|&i| CurriculumTask {
                params: nodes[i].params,
                episodes: nodes[i].episodes_used,
                timesteps: nodes[i].timesteps_used,
                converged: nodes[i].converged,
            })
            .collect(),
        sunk_cost_timesteps: nodes.iter().map(|n| n.timesteps_used).sum(),
        sunk_cost_episodes: nodes.iter().map(|n| n.episodes_used).sum(),
    };
    Ok(BeamOutcome {
        nodes,
        levels,
        best_path,
        result,
    })
}
