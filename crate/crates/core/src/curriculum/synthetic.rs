//! A finite task domain with a fixed episode-cost table.
//!
//! Six source tasks (two per goal category) plus the target. Training task
//! `j` right after task `i` costs `pair[i][j]` episodes; a first task costs
//! `first[j]`. The "policy" is the list of tasks trained so far, so warm
//! starts are visible in the output. With a wide enough beam the search must
//! reproduce [`brute_force_optimum`].

use std::collections::BTreeSet;

use rand::Rng;

use super::{CurriculumError, EpisodeHistory, TaskProposer, TaskTrainer, TrainOutcome};
use crate::params::{goal_categories, GoalCategory, GoalSpec, ItemKind, TaskParams};
use crate::seed::{stream, SimRng};

pub const TASKS_PER_CATEGORY: usize = 2;
pub const SOURCE_TASKS: usize = 3 * TASKS_PER_CATEGORY;
/// Timesteps charged per episode.
pub const STEPS_PER_EPISODE: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct CostTable {
    pub tasks: Vec<TaskParams>,
    target: TaskParams,
    pub first: Vec<usize>,
    /// `pair[i][j]`, where index `SOURCE_TASKS` is the target.
    pub pair: Vec<Vec<usize>>,
}

impl CostTable {
    /// Costs drawn uniformly from `[10, 200]` with a fixed seed.
    pub fn seeded(seed: u64) -> CostTable {
        let mut rng = stream(seed, &[]);
        let base = |w: f64, goal: GoalSpec| TaskParams {
            width: w,
            height: w,
            trees_env: 2,
            rocks_env: 1,
            crafting_tables: 1,
            wood_inv: 0,
            stone_inv: 0,
            fires_env: 0,
            goal,
        };
        let mut tasks = Vec::new();
        for w in [4.0, 5.0] {
            tasks.push(base(
                w,
                GoalSpec::Navigate {
                    item: ItemKind::Tree,
                },
            ));
            tasks.push(base(w, GoalSpec::Break { trees: 1, rocks: 0 }));
            tasks.push(base(w, GoalSpec::Craft));
        }
        let n = SOURCE_TASKS + 1;
        let first = (0..n).map(|_| rng.random_range(10..=200)).collect();
        let pair = (0..n)
            .map(|_| (0..n).map(|_| rng.random_range(10..=200)).collect())
            .collect();
        CostTable {
            tasks,
            target: base(6.0, GoalSpec::Craft),
            first,
            pair,
        }
    }

    pub fn target(&self) -> TaskParams {
        self.target
    }

    fn index(&self, p: &TaskParams) -> usize {
        if *p == self.target {
            return SOURCE_TASKS;
        }
        self.tasks
            .iter()
            .position(|t| t == p)
            .expect("task from this table")
    }

    /// Episodes to train `p` after the history `prev`.
    pub fn cost(&self, prev: Option<&TaskParams>, p: &TaskParams) -> usize {
        let j = self.index(p);
        match prev {
            None => self.first[j],
            Some(q) => self.pair[self.index(q)][j],
        }
    }

    fn of_categories(&self, cats: &[GoalCategory]) -> Vec<&TaskParams> {
        self.tasks
            .iter()
            .filter(|t| cats.contains(&t.goal.category()))
            .collect()
    }
}

pub struct TableTrainer<'a> {
    pub table: &'a CostTable,
}

impl TaskTrainer for TableTrainer<'_> {
    type Policy = Vec<TaskParams>;

    fn initial_policy(&self, _seed: u64) -> Vec<TaskParams> {
        Vec::new()
    }

    fn train(
        &self,
        task: &TaskParams,
        init: &Vec<TaskParams>,
        _is_target: bool,
        _seed: u64,
    ) -> Result<TrainOutcome<Vec<TaskParams>>, CurriculumError> {
        let episodes = self.table.cost(init.last(), task);
        let mut policy = init.clone();
        policy.push(*task);
        Ok(TrainOutcome {
            episodes,
            timesteps: episodes * STEPS_PER_EPISODE,
            converged: true,
            policy,
            history: EpisodeHistory::default(),
        })
    }
}

/// Proposes candidate `n` of the admissible tasks, cycling when `n` exceeds
/// their number.
pub struct EnumeratingProposer<'a> {
    table: &'a CostTable,
}

impl<'a> EnumeratingProposer<'a> {
    pub fn new(table: &'a CostTable) -> Self {
        EnumeratingProposer { table }
    }
}

impl TaskProposer for EnumeratingProposer<'_> {
    fn source(&self, n: usize, _rng: &mut SimRng) -> Result<TaskParams, CurriculumError> {
        Ok(self.table.tasks[n % SOURCE_TASKS])
    }

    fn successor(
        &self,
        seen: &BTreeSet<GoalCategory>,
        n: usize,
        _rng: &mut SimRng,
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
        let pool = self.table.of_categories(&cats);
        Ok(*pool[n % pool.len()])
    }
}

/// Cheapest curriculum of length `u` by exhaustive enumeration, with the
/// same admissibility rule as [`EnumeratingProposer`]. Returns the total
/// episodes and the task sequence.
pub fn brute_force_optimum(table: &CostTable, u: usize) -> (usize, Vec<TaskParams>) {
    fn go(
        table: &CostTable,
        path: &mut Vec<TaskParams>,
        cost: usize,
        remaining: usize,
        best: &mut (usize, Vec<TaskParams>),
    ) {
        if remaining == 0 {
            let target = table.target();
            let total = cost + table.cost(path.last(), &target);
            if total < best.0 {
                let mut p = path.clone();
                p.push(target);
                *best = (total, p);
            }
            return;
        }
        let seen: BTreeSet<GoalCategory> = path.iter().map(|t| t.goal.category()).collect();
        let unseen: Vec<GoalCategory> = goal_categories()
            .into_iter()
            .filter(|c| !seen.contains(c))
            .collect();
        let cats = if path.is_empty() {
            goal_categories().to_vec()
        } else if unseen.is_empty() {
            vec![GoalCategory::Break]
        } else {
            unseen
        };
        for t in table.of_categories(&cats) {
            let c = table.cost(path.last(), t);
            path.push(*t);
            go(table, path, cost + c, remaining - 1, best);
            path.pop();
        }
    }
    let mut best = (usize::MAX, Vec::new());
    go(table, &mut Vec::new(), 0, u - 1, &mut best);
    best
}

/// Number of admissible curricula of length `u`.
pub fn curriculum_count(u: usize) -> usize {
    let k = goal_categories().len();
    let mut count = 1;
    let mut open = k;
    for level in 0..u.saturating_sub(1) {
        let choices = if level == 0 {
            SOURCE_TASKS
        } else if open > 0 {
            open * TASKS_PER_CATEGORY
        } else {
            TASKS_PER_CATEGORY
        };
        count *= choices;
        open = open.saturating_sub(1);
    }
    count
}
