//! Step-by-step invariant checks for both worlds, driven by random actions.
//!
//! Each transition is checked for item conservation, the crafting recipe,
//! arena bounds, the step cap, fire termination and the exact reward.

use rand::Rng;

use super::grid::{GridState, GridWorld, Inventory};
use super::planar::{PlanarState, PlanarWorld, BODY_RADIUS};
use super::{Action, EnvError, Environment, ObjectKind, RewardScheme, StepOutcome};
use crate::params::{TaskParams, RECIPE_STONE, RECIPE_WOOD};
use crate::seed::SimRng;

/// World state reduced to what the invariants talk about.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Snapshot {
    pub width: f64,
    pub height: f64,
    pub x: f64,
    pub y: f64,
    /// Whether the agent lies inside the walkable part of the arena.
    pub in_bounds: bool,
    pub on_fire: bool,
    pub trees: u32,
    pub rocks: u32,
    pub tables: u32,
    pub fires: u32,
    pub inventory: Inventory,
    pub initial_inventory: Inventory,
    pub trees_broken: u32,
    pub rocks_broken: u32,
    pub crafted: u32,
    pub steps_used: usize,
}

impl Snapshot {
    pub fn of_grid(s: &GridState) -> Snapshot {
        Snapshot {
            width: s.width as f64,
            height: s.height as f64,
            x: s.agent.x as f64,
            y: s.agent.y as f64,
            in_bounds: s.in_bounds(s.agent.x, s.agent.y),
            on_fire: s.object_at(s.agent.x, s.agent.y) == Some(ObjectKind::Fire),
            trees: s.count(ObjectKind::Tree),
            rocks: s.count(ObjectKind::Rock),
            tables: s.count(ObjectKind::CraftingTable),
            fires: s.count(ObjectKind::Fire),
            inventory: s.inventory,
            initial_inventory: s.initial_inventory,
            trees_broken: s.trees_broken,
            rocks_broken: s.rocks_broken,
            crafted: s.crafted,
            steps_used: s.steps_used,
        }
    }

    pub fn of_planar(s: &PlanarState) -> Snapshot {
        let a = s.agent;
        let r = BODY_RADIUS;
        Snapshot {
            width: s.width,
            height: s.height,
            x: a.x,
            y: a.y,
            in_bounds: a.x >= r
                && a.y >= r
                && a.x <= s.width - r
                && a.y <= s.height - r
                && (0.0..std::f64::consts::TAU).contains(&a.theta),
            on_fire: s
                .objects
                .iter()
                .any(|o| o.kind == ObjectKind::Fire && (o.x - a.x).hypot(o.y - a.y) < r + o.radius),
            trees: s.count(ObjectKind::Tree),
            rocks: s.count(ObjectKind::Rock),
            tables: s.count(ObjectKind::CraftingTable),
            fires: s.count(ObjectKind::Fire),
            inventory: s.inventory,
            initial_inventory: s.initial_inventory,
            trees_broken: s.trees_broken,
            rocks_broken: s.rocks_broken,
            crafted: s.crafted,
            steps_used: s.steps_used,
        }
    }
}

/// A world whose state can be snapshotted.
pub trait Audited: Environment {
    fn snapshot(&self) -> Option<Snapshot>;
}

impl Audited for GridWorld {
    fn snapshot(&self) -> Option<Snapshot> {
        self.state().map(Snapshot::of_grid)
    }
}

impl Audited for PlanarWorld {
    fn snapshot(&self) -> Option<Snapshot> {
        self.state().map(Snapshot::of_planar)
    }
}

/// Problems with a freshly reset world.
pub fn check_reset(task: &TaskParams, s: &Snapshot) -> Vec<String> {
    let mut v = Vec::new();
    let counts = [s.trees, s.rocks, s.tables, s.fires];
    let wanted = [
        task.trees_env,
        task.rocks_env,
        task.crafting_tables,
        task.fires_env,
    ];
    if counts != wanted {
        v.push(format!(
            "reset placed {counts:?} objects, task asks for {wanted:?}"
        ));
    }
    if (s.inventory.wood, s.inventory.stone) != (task.wood_inv, task.stone_inv) {
        v.push("reset inventory differs from the task".into());
    }
    if !s.in_bounds || s.on_fire {
        v.push("reset put the agent out of bounds or on a fire".into());
    }
    if s.steps_used != 0 {
        v.push("reset did not clear the step counter".into());
    }
    v
}

/// Problems with one transition.
pub fn check_step(
    before: &Snapshot,
    after: &Snapshot,
    out: &StepOutcome,
    scheme: &RewardScheme,
    cap: usize,
) -> Vec<String> {
    let mut v = Vec::new();
    let a = after;
    // conservation: every item is in the world, in the inventory or spent
    if a.trees + a.trees_broken != before.trees + before.trees_broken {
        v.push("trees not conserved".into());
    }
    if a.rocks + a.rocks_broken != before.rocks + before.rocks_broken {
        v.push("rocks not conserved".into());
    }
    if a.inventory.wood + RECIPE_WOOD * a.crafted != a.initial_inventory.wood + a.trees_broken {
        v.push("wood not conserved".into());
    }
    if a.inventory.stone + RECIPE_STONE * a.crafted != a.initial_inventory.stone + a.rocks_broken {
        v.push("stone not conserved".into());
    }
    if (a.tables, a.fires) != (before.tables, before.fires) {
        v.push("tables or fires changed".into());
    }
    if (a.width, a.height) != (before.width, before.height) {
        v.push("arena resized".into());
    }
    let delta = |x: u32, y: u32| i64::from(x) - i64::from(y);
    let broke = delta(
        a.trees_broken + a.rocks_broken,
        before.trees_broken + before.rocks_broken,
    );
    let crafted = delta(a.crafted, before.crafted);
    if broke < 0 || crafted < 0 || broke + crafted > 1 {
        v.push("item counters went backwards or moved twice in one step".into());
    }
    let spent = (
        delta(before.inventory.wood, a.inventory.wood),
        delta(before.inventory.stone, a.inventory.stone),
    );
    if crafted == 1 && spent != (i64::from(RECIPE_WOOD), i64::from(RECIPE_STONE)) {
        v.push("craft did not consume the recipe".into());
    }
    if crafted == 1 && !a.inventory.has_axe {
        v.push("craft produced nothing".into());
    }
    if !a.in_bounds {
        v.push(format!("agent out of bounds at ({}, {})", a.x, a.y));
    }
    if a.steps_used != before.steps_used + 1 || a.steps_used > cap {
        v.push(format!(
            "step counter {} after {}, cap {cap}",
            a.steps_used, before.steps_used
        ));
    }
    if a.steps_used == cap && !out.terminated {
        v.push("episode ran past its cap".into());
    }
    if out.truncated && (a.steps_used != cap || out.success) {
        v.push("truncated before the cap or on success".into());
    }
    if out.success && !out.terminated {
        v.push("success without termination".into());
    }

    let expected = if a.on_fire {
        if !out.terminated || out.success {
            v.push("fire did not end the episode".into());
        }
        scheme.fire_penalty
    } else {
        let mut r = scheme.step_penalty;
        if scheme.shaping_enabled {
            if a.trees_broken > before.trees_broken && before.inventory.wood < RECIPE_WOOD {
                r += scheme.break_bonus;
            }
            if a.rocks_broken > before.rocks_broken && before.inventory.stone < RECIPE_STONE {
                r += scheme.break_bonus;
            }
        }
        if out.success {
            r += scheme.success_bonus;
        }
        r
    };
    if out.reward != expected {
        v.push(format!("reward {} where {expected} was due", out.reward));
    }
    let features = out.observation.to_features();
    if features.iter().any(|x| !(0.0..=1.0).contains(x)) {
        v.push("observation feature outside [0, 1]".into());
    }
    v
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AuditReport {
    pub steps: usize,
    pub episodes: usize,
    pub breaks: usize,
    pub crafts: usize,
    pub fire_deaths: usize,
    pub truncations: usize,
    pub successes: usize,
    /// First violations found, with the step they occurred at.
    pub violations: Vec<(usize, String)>,
    pub violation_count: usize,
}

impl AuditReport {
    fn record(&mut self, found: Vec<String>) {
        self.violation_count += found.len();
        for f in found {
            if self.violations.len() < 20 {
                self.violations.push((self.steps, f));
            }
        }
    }
}

/// Plays `steps` uniformly random actions, cycling through `tasks` and
/// alternating source and target rewards between episodes.
pub fn audit_random_walk<E: Audited + ?Sized>(
    env: &mut E,
    tasks: &[TaskParams],
    steps: usize,
    rng: &mut SimRng,
) -> Result<AuditReport, EnvError> {
    let cap = env.episode_cap();
    let mut report = AuditReport::default();
    let mut before: Option<Snapshot> = None;
    let mut scheme = RewardScheme::source();
    while report.steps < steps {
        let snap = match before {
            Some(s) => s,
            None => {
                let task = &tasks[report.episodes % tasks.len()];
                scheme = RewardScheme::for_task(report.episodes % 2 == 1);
                env.set_reward_scheme(scheme);
                let obs = env.reset(task, rng)?;
                if obs.dim() != env.obs_dim() {
                    report.record(vec!["observation length differs from obs_dim".into()]);
                }
                let s = env
                    .snapshot()
                    .ok_or(EnvError::ProtocolViolation("no state after reset"))?;
                report.record(check_reset(task, &s));
                report.episodes += 1;
                s
            }
        };
        let action = Action::from_index(rng.random_range(0..Action::COUNT));
        let out = env.step(action)?;
        let after = env
            .snapshot()
            .ok_or(EnvError::ProtocolViolation("no state after step"))?;
        report.steps += 1;
        report.record(check_step(&snap, &after, &out, &scheme, cap));
        report.breaks += (after.trees_broken + after.rocks_broken
            - snap.trees_broken
            - snap.rocks_broken) as usize;
        report.crafts += (after.crafted - snap.crafted) as usize;
        report.fire_deaths += usize::from(after.on_fire);
        report.truncations += usize::from(out.truncated);
        report.successes += usize::from(out.success);
        before = if out.terminated { None } else { Some(after) };
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{target_task_params, Variant};
    use crate::seed::stream;

    #[test]
    fn random_walks_are_clean_in_both_worlds() {
        let tasks = [
            target_task_params(Variant::Fire),
            target_task_params(Variant::Plain),
        ];
        let g =
            audit_random_walk(&mut GridWorld::new(), &tasks, 5_000, &mut stream(1, &[])).unwrap();
        assert_eq!(g.violations, vec![]);
        let hf: Vec<TaskParams> = tasks
            .iter()
            .map(|t| TaskParams {
                width: t.width * 0.4,
                height: t.height * 0.4,
                ..*t
            })
            .collect();
        let p =
            audit_random_walk(&mut PlanarWorld::new(), &hf, 5_000, &mut stream(2, &[])).unwrap();
        assert_eq!(p.violations, vec![]);
        assert!(g.episodes > 1 && p.episodes > 1);
    }

    #[test]
    fn a_wrong_reward_is_caught() {
        let mut w = GridWorld::new();
        let task = target_task_params(Variant::Plain);
        w.reset(&task, &mut stream(3, &[])).unwrap();
        let before = w.snapshot().unwrap();
        let mut out = w.step(Action::RotateCw).unwrap();
        let after = w.snapshot().unwrap();
        let scheme = RewardScheme::target();
        assert!(check_step(&before, &after, &out, &scheme, 100).is_empty());
        out.reward = 0.0;
        assert_eq!(check_step(&before, &after, &out, &scheme, 100).len(), 1);
    }
}
