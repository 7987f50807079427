//! High-fidelity continuous crafting world.
//!
//! The agent is a disc with a heading. `Forward` translates it by
//! [`FORWARD_STEP`] meters; rotations turn it by [`TURN_STEP`]. Objects are
//! discs placed by rejection sampling. Twenty beams spaced `pi/10` apart are
//! traced with exact ray/circle and ray/wall intersection.

use std::f64::consts::{PI, TAU};

use rand::Rng;

use super::{
    inventory_readings, observation_dim, Action, BeamReading, EnvError, Environment, EpisodeClock,
    HitKind, Layout, ObjectKind, Observation, PlacedObject, Pose, RewardScheme, StepOutcome,
};
use crate::env::grid::Inventory;
use crate::params::{Fidelity, GoalSpec, ItemKind, TaskParams, RECIPE_STONE, RECIPE_WOOD};
use crate::seed::SimRng;

pub const PLANAR_BEAMS: usize = 20;
pub const PLANAR_EPISODE_CAP: usize = 600;
/// Radius of the agent and of every object disc, meters.
pub const BODY_RADIUS: f64 = 0.15;
pub const FORWARD_STEP: f64 = 0.25;
pub const TURN_STEP: f64 = PI / 9.0;
/// Largest center distance at which break/craft act on an object.
pub const INTERACT_RANGE: f64 = 0.6;
/// Largest bearing error at which break/craft act on an object.
pub const INTERACT_BEARING: f64 = PI / 9.0;
/// Navigate goals complete when the forward beam hits the item this close.
pub const NAVIGATE_RANGE: f64 = 0.5;
pub const MAX_LAYOUT_ATTEMPTS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Disc {
    pub kind: ObjectKind,
    pub x: f64,
    pub y: f64,
    pub radius: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanarAgent {
    pub x: f64,
    pub y: f64,
    /// Radians in `[0, 2pi)`.
    pub theta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanarState {
    pub width: f64,
    pub height: f64,
    pub agent: PlanarAgent,
    pub objects: Vec<Disc>,
    pub inventory: Inventory,
    pub initial_inventory: Inventory,
    pub trees_broken: u32,
    pub rocks_broken: u32,
    pub crafted: u32,
    pub steps_used: usize,
}

impl PlanarState {
    pub fn empty(width: f64, height: f64, agent: PlanarAgent) -> PlanarState {
        PlanarState {
            width,
            height,
            agent,
            objects: Vec::new(),
            inventory: Inventory::default(),
            initial_inventory: Inventory::default(),
            trees_broken: 0,
            rocks_broken: 0,
            crafted: 0,
            steps_used: 0,
        }
    }

    pub fn with_inventory(mut self, wood: u32, stone: u32) -> PlanarState {
        self.inventory = Inventory {
            wood,
            stone,
            has_axe: false,
        };
        self.initial_inventory = self.inventory;
        self
    }

    pub fn place(&mut self, kind: ObjectKind, x: f64, y: f64) {
        self.objects.push(Disc {
            kind,
            x,
            y,
            radius: BODY_RADIUS,
        });
    }

    pub fn count(&self, kind: ObjectKind) -> u32 {
        self.objects.iter().filter(|o| o.kind == kind).count() as u32
    }

    fn diagonal(&self) -> f64 {
        self.width.hypot(self.height)
    }

    /// Center distance and absolute bearing error from the agent to `d`.
    pub fn relative(&self, d: &Disc) -> (f64, f64) {
        let dx = d.x - self.agent.x;
        let dy = d.y - self.agent.y;
        let dist = dx.hypot(dy);
        let bearing = dy.atan2(dx) - self.agent.theta;
        let err = (bearing + PI).rem_euclid(TAU) - PI;
        (dist, err.abs())
    }

    /// Index of the nearest object of one of `kinds` within interaction range
    /// and bearing tolerance.
    fn reachable(&self, kinds: &[ObjectKind]) -> Option<usize> {
        self.objects
            .iter()
            .enumerate()
            .filter(|(_, o)| kinds.contains(&o.kind))
            .filter_map(|(i, o)| {
                let (d, err) = self.relative(o);
                (d <= INTERACT_RANGE && err <= INTERACT_BEARING).then_some((i, d))
            })
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(i, _)| i)
    }

    fn inside_arena(&self, x: f64, y: f64) -> bool {
        x >= BODY_RADIUS
            && y >= BODY_RADIUS
            && x <= self.width - BODY_RADIUS
            && y <= self.height - BODY_RADIUS
    }
}

/// Distance along a unit ray from `(px, py)` to the circle, if it is hit.
fn ray_circle(px: f64, py: f64, dx: f64, dy: f64, c: &Disc) -> Option<f64> {
    let ox = c.x - px;
    let oy = c.y - py;
    let b = ox * dx + oy * dy;
    let c2 = ox * ox + oy * oy - c.radius * c.radius;
    if c2 <= 0.0 {
        return Some(0.0);
    }
    let disc = b * b - c2;
    if b <= 0.0 || disc < 0.0 {
        return None;
    }
    Some(b - disc.sqrt())
}

/// Distance along a unit ray from an interior point to the arena boundary.
fn ray_walls(px: f64, py: f64, dx: f64, dy: f64, w: f64, h: f64) -> f64 {
    let tx = if dx > 0.0 {
        (w - px) / dx
    } else if dx < 0.0 {
        -px / dx
    } else {
        f64::INFINITY
    };
    let ty = if dy > 0.0 {
        (h - py) / dy
    } else if dy < 0.0 {
        -py / dy
    } else {
        f64::INFINITY
    };
    tx.min(ty).max(0.0)
}

/// Traces the twenty beams and appends the inventory readings.
pub fn raycast(state: &PlanarState) -> Observation {
    let diag = state.diagonal();
    let a = state.agent;
    let beams = (0..PLANAR_BEAMS)
        .map(|k| {
            let angle = a.theta + k as f64 * PI / 10.0;
            let (dy, dx) = angle.sin_cos();
            let mut best = ray_walls(a.x, a.y, dx, dy, state.width, state.height);
            let mut hit = HitKind::Wall;
            for o in &state.objects {
                if let Some(t) = ray_circle(a.x, a.y, dx, dy, o) {
                    if t < best {
                        best = t;
                        hit = o.kind.into();
                    }
                }
            }
            BeamReading {
                hit,
                distance: (best / diag).clamp(0.0, 1.0),
            }
        })
        .collect();
    let (wood, stone) = inventory_readings(state.inventory.wood, state.inventory.stone);
    Observation { beams, wood, stone }
}

#[derive(Debug, Clone)]
pub struct PlanarWorld {
    cap: usize,
    scheme: RewardScheme,
    goal: GoalSpec,
    state: Option<PlanarState>,
    clock: EpisodeClock,
}

impl Default for PlanarWorld {
    fn default() -> Self {
        PlanarWorld::new()
    }
}

impl PlanarWorld {
    pub fn new() -> PlanarWorld {
        PlanarWorld::with_cap(PLANAR_EPISODE_CAP)
    }

    pub fn with_cap(cap: usize) -> PlanarWorld {
        PlanarWorld {
            cap,
            scheme: RewardScheme::default(),
            goal: GoalSpec::Craft,
            state: None,
            clock: EpisodeClock::default(),
        }
    }

    pub fn state(&self) -> Option<&PlanarState> {
        self.state.as_ref()
    }

    pub fn load_state(&mut self, state: PlanarState, goal: GoalSpec) -> Observation {
        self.goal = goal;
        self.clock.begin();
        self.clock.steps_used = state.steps_used;
        let obs = raycast(&state);
        self.state = Some(state);
        obs
    }

    fn goal_met(&self, s: &PlanarState, obs: &Observation) -> bool {
        match self.goal {
            GoalSpec::Craft => s.inventory.has_axe,
            GoalSpec::Break { trees, rocks } => s.trees_broken >= trees && s.rocks_broken >= rocks,
            GoalSpec::Navigate { item } => {
                let want = match item {
                    ItemKind::Tree => HitKind::Tree,
                    ItemKind::Rock => HitKind::Rock,
                    ItemKind::CraftingTable => HitKind::CraftingTable,
                };
                let front = obs.beams[0];
                front.hit == want && front.distance * s.diagonal() <= NAVIGATE_RANGE
            }
        }
    }
}

fn sample_layout(params: &TaskParams, rng: &mut SimRng) -> Option<PlanarState> {
    let (w, h) = (params.width, params.height);
    let r = BODY_RADIUS;
    let kinds: Vec<ObjectKind> = std::iter::repeat_n(ObjectKind::Tree, params.trees_env as usize)
        .chain(std::iter::repeat_n(
            ObjectKind::Rock,
            params.rocks_env as usize,
        ))
        .chain(std::iter::repeat_n(
            ObjectKind::CraftingTable,
            params.crafting_tables as usize,
        ))
        .chain(std::iter::repeat_n(
            ObjectKind::Fire,
            params.fires_env as usize,
        ))
        .collect();
    let mut centers: Vec<(f64, f64)> = Vec::with_capacity(kinds.len() + 1);
    for _ in 0..=kinds.len() {
        let x = rng.random_range(r..=w - r);
        let y = rng.random_range(r..=h - r);
        if centers
            .iter()
            .any(|(cx, cy)| (cx - x).hypot(cy - y) < 2.0 * r)
        {
            return None;
        }
        centers.push((x, y));
    }
    let theta = rng.random_range(0.0..TAU);
    let (ax, ay) = centers.pop().expect("agent center");
    let mut state = PlanarState::empty(
        w,
        h,
        PlanarAgent {
            x: ax,
            y: ay,
            theta,
        },
    )
    .with_inventory(params.wood_inv, params.stone_inv);
    for (kind, (x, y)) in kinds.into_iter().zip(centers) {
        state.place(kind, x, y);
    }
    Some(state)
}

impl Environment for PlanarWorld {
    fn fidelity(&self) -> Fidelity {
        Fidelity::High
    }

    fn obs_dim(&self) -> usize {
        observation_dim(PLANAR_BEAMS)
    }

    fn episode_cap(&self) -> usize {
        self.cap
    }

    fn set_reward_scheme(&mut self, scheme: RewardScheme) {
        self.scheme = scheme;
    }

    fn reset(&mut self, params: &TaskParams, rng: &mut SimRng) -> Result<Observation, EnvError> {
        if !(params.width > 2.0 * BODY_RADIUS && params.height > 2.0 * BODY_RADIUS) {
            return Err(EnvError::PlacementFailure(format!(
                "arena {}x{} cannot hold a body",
                params.width, params.height
            )));
        }
        let state = (0..MAX_LAYOUT_ATTEMPTS)
            .find_map(|_| sample_layout(params, rng))
            .ok_or_else(|| {
                EnvError::PlacementFailure(format!(
                    "no overlap-free layout after {MAX_LAYOUT_ATTEMPTS} attempts"
                ))
            })?;
        Ok(self.load_state(state, params.goal))
    }

    fn step(&mut self, action: Action) -> Result<StepOutcome, EnvError> {
        self.clock.tick()?;
        let scheme = self.scheme;
        let mut s = self.state.take().expect("state exists once started");
        s.steps_used = self.clock.steps_used;
        let mut reward = scheme.step_penalty;
        let mut burned = false;
        match action {
            Action::Forward => {
                let (sin, cos) = s.agent.theta.sin_cos();
                let nx = s.agent.x + FORWARD_STEP * cos;
                let ny = s.agent.y + FORWARD_STEP * sin;
                let blocked = !s.inside_arena(nx, ny)
                    || s.objects.iter().any(|o| {
                        o.kind != ObjectKind::Fire
                            && (o.x - nx).hypot(o.y - ny) < BODY_RADIUS + o.radius
                    });
                if !blocked {
                    s.agent.x = nx;
                    s.agent.y = ny;
                    burned = s.objects.iter().any(|o| {
                        o.kind == ObjectKind::Fire
                            && (o.x - nx).hypot(o.y - ny) < BODY_RADIUS + o.radius
                    });
                }
            }
            Action::RotateCw => s.agent.theta = (s.agent.theta - TURN_STEP).rem_euclid(TAU),
            Action::RotateCcw => s.agent.theta = (s.agent.theta + TURN_STEP).rem_euclid(TAU),
            Action::Break => {
                if let Some(i) = s.reachable(&[ObjectKind::Tree, ObjectKind::Rock]) {
                    let o = s.objects.remove(i);
                    if o.kind == ObjectKind::Tree {
                        if scheme.shaping_enabled && s.inventory.wood < RECIPE_WOOD {
                            reward += scheme.break_bonus;
                        }
                        s.inventory.wood += 1;
                        s.trees_broken += 1;
                    } else {
                        if scheme.shaping_enabled && s.inventory.stone < RECIPE_STONE {
                            reward += scheme.break_bonus;
                        }
                        s.inventory.stone += 1;
                        s.rocks_broken += 1;
                    }
                }
            }
            Action::Craft => {
                if s.inventory.wood >= RECIPE_WOOD
                    && s.inventory.stone >= RECIPE_STONE
                    && s.reachable(&[ObjectKind::CraftingTable]).is_some()
                {
                    s.inventory.wood -= RECIPE_WOOD;
                    s.inventory.stone -= RECIPE_STONE;
                    s.inventory.has_axe = true;
                    s.crafted += 1;
                }
            }
        }
        // rem_euclid can round up to exactly TAU
        if s.agent.theta >= TAU {
            s.agent.theta = 0.0;
        }

        let observation = raycast(&s);
        let (terminated, truncated, success) = if burned {
            reward = scheme.fire_penalty;
            (true, false, false)
        } else if self.goal_met(&s, &observation) {
            reward += scheme.success_bonus;
            (true, false, true)
        } else if self.clock.steps_used >= self.cap {
            (true, true, false)
        } else {
            (false, false, false)
        };
        if terminated {
            self.clock.active = false;
        }
        self.state = Some(s);
        Ok(StepOutcome {
            observation,
            reward,
            terminated,
            truncated,
            success,
        })
    }

    fn layout(&self) -> Option<Layout> {
        let s = self.state.as_ref()?;
        Some(Layout {
            fidelity: Fidelity::High,
            width: s.width,
            height: s.height,
            agent: Pose {
                x: s.agent.x,
                y: s.agent.y,
                heading: s.agent.theta,
            },
            objects: s
                .objects
                .iter()
                .map(|o| PlacedObject {
                    kind: o.kind,
                    x: o.x,
                    y: o.y,
                    radius: o.radius,
                })
                .collect(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{target_task_params, Variant};
    use crate::seed::stream;

    fn hf_target() -> TaskParams {
        TaskParams {
            width: 4.0,
            height: 4.0,
            ..target_task_params(Variant::Plain)
        }
    }

    fn agent(x: f64, y: f64, theta: f64) -> PlanarAgent {
        PlanarAgent { x, y, theta }
    }

    fn world(state: PlanarState, goal: GoalSpec, scheme: RewardScheme) -> PlanarWorld {
        let mut w = PlanarWorld::new();
        w.set_reward_scheme(scheme);
        w.load_state(state, goal);
        w
    }

    #[test]
    fn reset_places_non_overlapping_discs() {
        let mut w = PlanarWorld::new();
        let obs = w.reset(&hf_target(), &mut stream(2, &[])).unwrap();
        assert_eq!(obs.dim(), 122);
        let s = w.state().unwrap();
        assert_eq!(s.objects.len(), 7);
        let mut all: Vec<(f64, f64)> = s.objects.iter().map(|o| (o.x, o.y)).collect();
        all.push((s.agent.x, s.agent.y));
        for i in 0..all.len() {
            assert!(s.inside_arena(all[i].0, all[i].1));
            for j in i + 1..all.len() {
                assert!((all[i].0 - all[j].0).hypot(all[i].1 - all[j].1) >= 2.0 * BODY_RADIUS);
            }
        }
    }

    #[test]
    fn reset_is_deterministic() {
        let mut a = PlanarWorld::new();
        let mut b = PlanarWorld::new();
        a.reset(&hf_target(), &mut stream(3, &[])).unwrap();
        b.reset(&hf_target(), &mut stream(3, &[])).unwrap();
        assert_eq!(a.layout(), b.layout());
    }

    #[test]
    fn crowded_arena_fails_placement() {
        let p = TaskParams {
            width: 0.7,
            height: 0.7,
            ..hf_target()
        };
        assert!(matches!(
            PlanarWorld::new().reset(&p, &mut stream(0, &[])),
            Err(EnvError::PlacementFailure(_))
        ));
    }

    #[test]
    fn forward_advances_a_quarter_meter() {
        let mut w = world(
            PlanarState::empty(4.0, 4.0, agent(1.0, 1.0, 0.0)),
            GoalSpec::Craft,
            RewardScheme::target(),
        );
        let out = w.step(Action::Forward).unwrap();
        assert_eq!(out.reward, -1.0);
        let a = w.state().unwrap().agent;
        assert!((a.x - 1.25).abs() < 1e-12 && (a.y - 1.0).abs() < 1e-12);
    }

    #[test]
    fn forward_into_object_or_wall_is_rejected() {
        let mut s = PlanarState::empty(4.0, 4.0, agent(1.0, 1.0, 0.0));
        s.place(ObjectKind::Rock, 1.5, 1.0);
        let mut w = world(s, GoalSpec::Craft, RewardScheme::target());
        w.step(Action::Forward).unwrap();
        assert_eq!(w.state().unwrap().agent.x, 1.0);

        let mut w = world(
            PlanarState::empty(4.0, 4.0, agent(3.8, 1.0, 0.0)),
            GoalSpec::Craft,
            RewardScheme::target(),
        );
        w.step(Action::Forward).unwrap();
        assert_eq!(w.state().unwrap().agent.x, 3.8);
    }

    #[test]
    fn rotation_wraps_heading() {
        let mut w = world(
            PlanarState::empty(4.0, 4.0, agent(1.0, 1.0, 0.0)),
            GoalSpec::Craft,
            RewardScheme::target(),
        );
        w.step(Action::RotateCw).unwrap();
        let th = w.state().unwrap().agent.theta;
        assert!((th - (TAU - PI / 9.0)).abs() < 1e-12);
        for _ in 0..9 {
            w.step(Action::RotateCcw).unwrap();
        }
        let th = w.state().unwrap().agent.theta;
        assert!((0.0..TAU).contains(&th));
        assert!((th - (8.0 * PI / 9.0)).abs() < 1e-9);
    }

    #[test]
    fn craft_at_table_succeeds() {
        let mut s = PlanarState::empty(4.0, 4.0, agent(1.0, 1.0, 0.0)).with_inventory(2, 1);
        s.place(ObjectKind::CraftingTable, 1.45, 1.0);
        let mut w = world(s, GoalSpec::Craft, RewardScheme::target());
        let out = w.step(Action::Craft).unwrap();
        assert_eq!(out.reward, 999.0);
        assert!(out.terminated && out.success);
        assert_eq!(
            w.state().unwrap().inventory,
            Inventory {
                wood: 0,
                stone: 0,
                has_axe: true
            }
        );
    }

    #[test]
    fn break_out_of_range_or_bearing_is_a_no_op() {
        let mut s = PlanarState::empty(4.0, 4.0, agent(1.0, 1.0, 0.0));
        s.place(ObjectKind::Tree, 3.0, 1.0);
        s.place(ObjectKind::Tree, 1.0, 1.45); // in range but 90 degrees off
        let mut w = world(s, GoalSpec::Craft, RewardScheme::source());
        let out = w.step(Action::Break).unwrap();
        assert_eq!(out.reward, -1.0);
        assert_eq!(w.state().unwrap().objects.len(), 2);
    }

    #[test]
    fn break_in_range_collects_wood() {
        let mut s = PlanarState::empty(4.0, 4.0, agent(1.0, 1.0, 0.2));
        s.place(ObjectKind::Tree, 1.5, 1.05);
        let mut w = world(s, GoalSpec::Craft, RewardScheme::source());
        let out = w.step(Action::Break).unwrap();
        assert_eq!(out.reward, 49.0);
        assert_eq!(w.state().unwrap().inventory.wood, 1);
        assert!(w.state().unwrap().objects.is_empty());
    }

    #[test]
    fn blocked_approach_still_reaches_interaction_range() {
        // from 0.56 m a forward step would collide, so the object must already be in range
        let mut s = PlanarState::empty(4.0, 4.0, agent(1.0, 1.0, 0.0));
        s.place(ObjectKind::Rock, 1.0 + 0.3 + FORWARD_STEP - 1e-9, 1.0);
        let mut w = world(s, GoalSpec::Craft, RewardScheme::source());
        w.step(Action::Forward).unwrap();
        assert_eq!(w.state().unwrap().agent.x, 1.0);
        w.step(Action::Break).unwrap();
        assert_eq!(w.state().unwrap().inventory.stone, 1);
    }

    #[test]
    fn fire_contact_terminates() {
        let mut s = PlanarState::empty(4.0, 4.0, agent(1.0, 1.0, 0.0));
        s.place(ObjectKind::Fire, 1.5, 1.0);
        let mut w = world(s, GoalSpec::Craft, RewardScheme::source());
        let out = w.step(Action::Forward).unwrap();
        assert_eq!(out.reward, -1000.0);
        assert!(out.terminated && !out.success);
    }

    #[test]
    fn single_tree_dead_ahead() {
        let mut s = PlanarState::empty(4.0, 4.0, agent(1.0, 2.0, 0.0));
        s.place(ObjectKind::Tree, 2.0, 2.0);
        let obs = raycast(&s);
        assert_eq!(obs.beams.len(), 20);
        assert_eq!(obs.beams[0].hit, HitKind::Tree);
        assert!((obs.beams[0].distance - 0.85 / 32f64.sqrt()).abs() < 1e-12);
        // straight behind: wall at x = 0
        assert_eq!(obs.beams[10].hit, HitKind::Wall);
        assert!((obs.beams[10].distance - 1.0 / 32f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn empty_arena_sees_only_walls() {
        let s = PlanarState::empty(4.0, 4.0, agent(2.0, 2.0, 0.3));
        assert!(raycast(&s).beams.iter().all(|b| b.hit == HitKind::Wall));
    }

    #[test]
    fn navigate_goal_uses_forward_beam() {
        let mut s = PlanarState::empty(4.0, 4.0, agent(1.0, 1.0, 0.0));
        s.place(ObjectKind::CraftingTable, 1.9, 1.0);
        let mut w = world(
            s,
            GoalSpec::Navigate {
                item: ItemKind::CraftingTable,
            },
            RewardScheme::source(),
        );
        let out = w.step(Action::Forward).unwrap();
        // surface distance 0.9 - 0.25 - 0.15 = 0.5
        assert!(out.success);
    }
}
