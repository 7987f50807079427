//! Task parameterization: the parametric-variable vector that identifies one
//! crafting task, the goal taxonomy, feasibility rules and random task
//! generation used by the curriculum search.
//!
//! The same [`TaskParams`] type describes tasks in both fidelities. In the
//! grid world `width`/`height` count cells; in the continuous world they are
//! meters. Object counts and inventory are identical in meaning.

use std::collections::BTreeSet;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::planar::BODY_RADIUS;

/// Number of numeric parametric variables (everything except the goal).
pub const NUM_PARAMS: usize = 8;

/// Names of the numeric parameters, in vector order.
pub const PARAM_NAMES: [&str; NUM_PARAMS] = [
    "width",
    "height",
    "trees_env",
    "rocks_env",
    "crafting_tables",
    "wood_inv",
    "stone_inv",
    "fires_env",
];

/// Index of the first count-valued parameter; the two before it are lengths.
pub const FIRST_COUNT: usize = 2;

/// Wood needed by the stone-axe recipe.
pub const RECIPE_WOOD: u32 = 2;
/// Stone needed by the stone-axe recipe.
pub const RECIPE_STONE: u32 = 1;

/// Fire objects in the fire-variant target task unless configured otherwise.
pub const DEFAULT_FIRE_COUNT: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParamsError {
    #[error("infeasible ranges: no feasible {goal} task after {attempts} samples")]
    InfeasibleRanges { goal: String, attempts: usize },
    #[error("invalid range for {name}: min {min} > max {max}")]
    InvalidRange {
        name: &'static str,
        min: f64,
        max: f64,
    },
}

/// Which world a parameter vector lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fidelity {
    /// Discrete grid world.
    Low,
    /// Continuous planar world.
    High,
}

/// Plain crafting world or the variant with fire hazards.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    #[default]
    Plain,
    Fire,
}

/// Items an agent can be asked to navigate to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemKind {
    Tree,
    Rock,
    CraftingTable,
}

impl ItemKind {
    pub const ALL: [ItemKind; 3] = [ItemKind::Tree, ItemKind::Rock, ItemKind::CraftingTable];
}

/// Terminal objective of a task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GoalSpec {
    Navigate { item: ItemKind },
    Break { trees: u32, rocks: u32 },
    Craft,
}

impl GoalSpec {
    pub fn category(&self) -> GoalCategory {
        match self {
            GoalSpec::Navigate { .. } => GoalCategory::Navigate,
            GoalSpec::Break { .. } => GoalCategory::Break,
            GoalSpec::Craft => GoalCategory::Craft,
        }
    }
}

impl fmt::Display for GoalSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GoalSpec::Navigate { item } => write!(f, "navigate({item:?})"),
            GoalSpec::Break { trees, rocks } => write!(f, "break({trees} trees, {rocks} rocks)"),
            GoalSpec::Craft => write!(f, "craft"),
        }
    }
}

/// Coarse goal class; a curriculum must visit every category.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GoalCategory {
    Navigate,
    Break,
    Craft,
}

impl fmt::Display for GoalCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            GoalCategory::Navigate => "navigate",
            GoalCategory::Break => "break",
            GoalCategory::Craft => "craft",
        };
        f.write_str(s)
    }
}

/// The goal categories in canonical order.
pub fn goal_categories() -> [GoalCategory; 3] {
    [
        GoalCategory::Navigate,
        GoalCategory::Break,
        GoalCategory::Craft,
    ]
}

/// One task, in either fidelity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskParams {
    pub width: f64,
    pub height: f64,
    pub trees_env: u32,
    pub rocks_env: u32,
    pub crafting_tables: u32,
    pub wood_inv: u32,
    pub stone_inv: u32,
    #[serde(default)]
    pub fires_env: u32,
    pub goal: GoalSpec,
}

impl TaskParams {
    /// Numeric parameters in [`PARAM_NAMES`] order.
    pub fn to_numeric(&self) -> [f64; NUM_PARAMS] {
        [
            self.width,
            self.height,
            self.trees_env as f64,
            self.rocks_env as f64,
            self.crafting_tables as f64,
            self.wood_inv as f64,
            self.stone_inv as f64,
            self.fires_env as f64,
        ]
    }

    /// Rebuilds a task from a numeric vector. Counts are rounded half-to-even;
    /// returns `None` when a count is negative or any value is non-finite.
    pub fn from_numeric(values: &[f64; NUM_PARAMS], goal: GoalSpec) -> Option<TaskParams> {
        if values.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let mut counts = [0u32; NUM_PARAMS - FIRST_COUNT];
        for (slot, v) in counts.iter_mut().zip(&values[FIRST_COUNT..]) {
            let r = v.round_ties_even();
            if r < 0.0 || r > u32::MAX as f64 {
                return None;
            }
            *slot = r as u32;
        }
        Some(TaskParams {
            width: values[0],
            height: values[1],
            trees_env: counts[0],
            rocks_env: counts[1],
            crafting_tables: counts[2],
            wood_inv: counts[3],
            stone_inv: counts[4],
            fires_env: counts[5],
            goal,
        })
    }

    /// Objects placed in the arena (the agent excluded).
    pub fn object_count(&self) -> u32 {
        self.trees_env + self.rocks_env + self.crafting_tables + self.fires_env
    }

    pub fn with_goal(mut self, goal: GoalSpec) -> Self {
        self.goal = goal;
        self
    }

    pub fn with_fires(mut self, fires: u32) -> Self {
        self.fires_env = fires;
        self
    }

    /// Total order used for deterministic tie-breaking.
    pub fn total_cmp(&self, other: &TaskParams) -> std::cmp::Ordering {
        let a = self.to_numeric();
        let b = other.to_numeric();
        for (x, y) in a.iter().zip(&b) {
            let o = x.total_cmp(y);
            if o.is_ne() {
                return o;
            }
        }
        self.goal.cmp(&other.goal)
    }
}

impl fmt::Display for TaskParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}x{} trees={} rocks={} tables={} inv=({}, {}) fires={} goal={}",
            self.width,
            self.height,
            self.trees_env,
            self.rocks_env,
            self.crafting_tables,
            self.wood_inv,
            self.stone_inv,
            self.fires_env,
            self.goal
        )
    }
}

/// The canonical grid-world target: a 10x10 grid with 4 trees, 2 rocks, one
/// crafting table, empty inventory, goal craft.
pub fn target_task_params(variant: Variant) -> TaskParams {
    let base = TaskParams {
        width: 10.0,
        height: 10.0,
        trees_env: 4,
        rocks_env: 2,
        crafting_tables: 1,
        wood_inv: 0,
        stone_inv: 0,
        fires_env: 0,
        goal: GoalSpec::Craft,
    };
    match variant {
        Variant::Plain => base,
        Variant::Fire => base.with_fires(DEFAULT_FIRE_COUNT),
    }
}

/// Inclusive bounds for one parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub min: f64,
    pub max: f64,
}

impl Bounds {
    pub const fn new(min: f64, max: f64) -> Self {
        Bounds { min, max }
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.min && v <= self.max
    }

    pub fn span(&self) -> f64 {
        self.max - self.min
    }
}

/// Per-parameter bounds over which source tasks are sampled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamRanges {
    pub width: Bounds,
    pub height: Bounds,
    pub trees_env: Bounds,
    pub rocks_env: Bounds,
    pub crafting_tables: Bounds,
    pub wood_inv: Bounds,
    pub stone_inv: Bounds,
    pub fires_env: Bounds,
}

impl ParamRanges {
    /// Default grid-world ranges: the target task's values are the maxima.
    pub fn lf_default(variant: Variant) -> ParamRanges {
        ParamRanges::for_target(&target_task_params(variant), variant)
    }

    /// Ranges whose maxima are the given target's values, with the standard
    /// minimum arena of 4 cells and the recipe-sized inventory spans.
    pub fn for_target(target: &TaskParams, variant: Variant) -> ParamRanges {
        let fires_max = match variant {
            Variant::Plain => target.fires_env as f64,
            Variant::Fire => (target.fires_env as f64).max(2.0),
        };
        ParamRanges {
            width: Bounds::new(target.width.min(4.0), target.width),
            height: Bounds::new(target.height.min(4.0), target.height),
            trees_env: Bounds::new(0.0, target.trees_env as f64),
            rocks_env: Bounds::new(0.0, target.rocks_env as f64),
            crafting_tables: Bounds::new(0.0, 1.0),
            wood_inv: Bounds::new(0.0, (target.wood_inv.max(RECIPE_WOOD)) as f64),
            stone_inv: Bounds::new(0.0, (target.stone_inv.max(RECIPE_STONE)) as f64),
            fires_env: Bounds::new(0.0, fires_max),
        }
    }

    pub fn as_array(&self) -> [Bounds; NUM_PARAMS] {
        [
            self.width,
            self.height,
            self.trees_env,
            self.rocks_env,
            self.crafting_tables,
            self.wood_inv,
            self.stone_inv,
            self.fires_env,
        ]
    }

    pub fn from_array(b: [Bounds; NUM_PARAMS]) -> ParamRanges {
        ParamRanges {
            width: b[0],
            height: b[1],
            trees_env: b[2],
            rocks_env: b[3],
            crafting_tables: b[4],
            wood_inv: b[5],
            stone_inv: b[6],
            fires_env: b[7],
        }
    }

    pub fn validate(&self) -> Result<(), ParamsError> {
        for (name, b) in PARAM_NAMES.iter().zip(self.as_array()) {
            if !(b.min <= b.max) {
                return Err(ParamsError::InvalidRange {
                    name,
                    min: b.min,
                    max: b.max,
                });
            }
        }
        Ok(())
    }

    pub fn contains(&self, p: &TaskParams) -> bool {
        self.as_array()
            .iter()
            .zip(p.to_numeric())
            .all(|(b, v)| b.contains(v))
    }
}

/// True iff the goal is achievable and the arena can hold every object.
pub fn feasible(p: &TaskParams, fidelity: Fidelity) -> bool {
    goal_achievable(p) && fits_arena(p, fidelity)
}

fn goal_achievable(p: &TaskParams) -> bool {
    if p.crafting_tables > 1 {
        return false;
    }
    match p.goal {
        GoalSpec::Craft => {
            p.crafting_tables == 1
                && p.wood_inv + p.trees_env >= RECIPE_WOOD
                && p.stone_inv + p.rocks_env >= RECIPE_STONE
        }
        GoalSpec::Break { trees, rocks } => {
            (trees > 0 || rocks > 0) && p.trees_env >= trees && p.rocks_env >= rocks
        }
        GoalSpec::Navigate { item } => match item {
            ItemKind::Tree => p.trees_env >= 1,
            ItemKind::Rock => p.rocks_env >= 1,
            ItemKind::CraftingTable => p.crafting_tables >= 1,
        },
    }
}

fn fits_arena(p: &TaskParams, fidelity: Fidelity) -> bool {
    if !(p.width.is_finite() && p.height.is_finite() && p.width > 0.0 && p.height > 0.0) {
        return false;
    }
    let bodies = p.object_count() as f64 + 1.0;
    match fidelity {
        Fidelity::Low => {
            p.width.fract() == 0.0 && p.height.fract() == 0.0 && bodies <= p.width * p.height
        }
        Fidelity::High => {
            let d = 2.0 * BODY_RADIUS;
            let footprint = bodies * std::f64::consts::PI * BODY_RADIUS * BODY_RADIUS;
            p.width > d && p.height > d && footprint < p.width * p.height
        }
    }
}

const MAX_RESAMPLES: usize = 1000;

fn int_bounds(b: Bounds, floor: u32) -> Option<(u32, u32)> {
    let lo = (b.min.ceil().max(0.0) as u32).max(floor);
    let hi = b.max.floor();
    if hi < 0.0 || (hi as u32) < lo {
        return None;
    }
    Some((lo, hi as u32))
}

fn draw<R: Rng + ?Sized>(rng: &mut R, b: Bounds, floor: u32) -> Option<u32> {
    let (lo, hi) = int_bounds(b, floor)?;
    Some(rng.random_range(lo..=hi))
}

/// Samples a grid-world task with the given goal. Every numeric parameter is
/// drawn uniformly from `[max(range min, goal minimum), range max]`; arena
/// dimensions are redrawn until all objects fit.
pub fn random_source_params<R: Rng + ?Sized>(
    rng: &mut R,
    ranges: &ParamRanges,
    goal: GoalSpec,
) -> Result<TaskParams, ParamsError> {
    let infeasible = || ParamsError::InfeasibleRanges {
        goal: goal.to_string(),
        attempts: MAX_RESAMPLES,
    };
    let (need_trees, need_rocks, need_tables) = match goal {
        GoalSpec::Break { trees, rocks } => (trees, rocks, 0),
        GoalSpec::Navigate {
            item: ItemKind::Tree,
        } => (1, 0, 0),
        GoalSpec::Navigate {
            item: ItemKind::Rock,
        } => (0, 1, 0),
        GoalSpec::Navigate {
            item: ItemKind::CraftingTable,
        } => (0, 0, 1),
        GoalSpec::Craft => (0, 0, 1),
    };
    for _ in 0..MAX_RESAMPLES {
        let wood_inv = draw(rng, ranges.wood_inv, 0).ok_or_else(infeasible)?;
        let stone_inv = draw(rng, ranges.stone_inv, 0).ok_or_else(infeasible)?;
        let (tree_floor, rock_floor) = match goal {
            GoalSpec::Craft => (
                need_trees.max(RECIPE_WOOD.saturating_sub(wood_inv)),
                need_rocks.max(RECIPE_STONE.saturating_sub(stone_inv)),
            ),
            _ => (need_trees, need_rocks),
        };
        let (Some(trees_env), Some(rocks_env), Some(crafting_tables), Some(fires_env)) = (
            draw(rng, ranges.trees_env, tree_floor),
            draw(rng, ranges.rocks_env, rock_floor),
            draw(rng, ranges.crafting_tables, need_tables),
            draw(rng, ranges.fires_env, 0),
        ) else {
            // the inventory draw may have raised a floor past the range max
            continue;
        };
        let width = draw(rng, ranges.width, 1).ok_or_else(infeasible)?;
        let height = draw(rng, ranges.height, 1).ok_or_else(infeasible)?;
        let p = TaskParams {
            width: width as f64,
            height: height as f64,
            trees_env,
            rocks_env,
            crafting_tables,
            wood_inv,
            stone_inv,
            fires_env,
            goal,
        };
        if feasible(&p, Fidelity::Low) {
            return Ok(p);
        }
    }
    Err(infeasible())
}

/// Samples a grid-world task from a goal category, choosing the concrete goal
/// as well: a reachable item for navigate, and for break a subset
/// `trees in [1, trees_env]`, `rocks in [0, rocks_env]` of what is present.
pub fn random_task<R: Rng + ?Sized>(
    rng: &mut R,
    ranges: &ParamRanges,
    category: GoalCategory,
) -> Result<TaskParams, ParamsError> {
    match category {
        GoalCategory::Craft => random_source_params(rng, ranges, GoalSpec::Craft),
        GoalCategory::Navigate => {
            let kinds: Vec<ItemKind> = ItemKind::ALL
                .into_iter()
                .filter(|k| {
                    let b = match k {
                        ItemKind::Tree => ranges.trees_env,
                        ItemKind::Rock => ranges.rocks_env,
                        ItemKind::CraftingTable => ranges.crafting_tables,
                    };
                    b.max >= 1.0
                })
                .collect();
            if kinds.is_empty() {
                return Err(ParamsError::InfeasibleRanges {
                    goal: category.to_string(),
                    attempts: 0,
                });
            }
            let item = kinds[rng.random_range(0..kinds.len())];
            random_source_params(rng, ranges, GoalSpec::Navigate { item })
        }
        GoalCategory::Break => {
            // sample the arena for "at least one tree" and then pick the subset
            let p = random_source_params(rng, ranges, GoalSpec::Break { trees: 1, rocks: 0 })?;
            let trees = rng.random_range(1..=p.trees_env);
            let rocks = rng.random_range(0..=p.rocks_env);
            Ok(p.with_goal(GoalSpec::Break { trees, rocks }))
        }
    }
}

/// Goal categories present along a sequence of tasks.
pub fn categories_seen<'a>(
    tasks: impl IntoIterator<Item = &'a TaskParams>,
) -> BTreeSet<GoalCategory> {
    tasks.into_iter().map(|t| t.goal.category()).collect()
}
