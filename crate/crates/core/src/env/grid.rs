//! Low-fidelity crafting grid world.
//!
//! The agent occupies one cell and faces one of four headings. `Forward`
//! enters the cell ahead when it is inside the grid and free (fire cells can
//! be entered, fatally). `Break` and `Craft` act on the cell ahead. Eight
//! beams at quarter-right-angle increments walk outward cell by cell; diagonal
//! beams advance one diagonal cell per step.

use rand::seq::index::sample;
use rand::Rng;

use super::{
    inventory_readings, observation_dim, Action, BeamReading, EnvError, Environment, EpisodeClock,
    HitKind, Layout, ObjectKind, Observation, PlacedObject, Pose, RewardScheme, StepOutcome,
};
use crate::params::{Fidelity, GoalSpec, ItemKind, TaskParams, RECIPE_STONE, RECIPE_WOOD};
use crate::seed::SimRng;

pub const GRID_BEAMS: usize = 8;
pub const GRID_EPISODE_CAP: usize = 100;

/// Unit steps for the eight octants, counter-clockwise from east.
const OCTANTS: [(i32, i32); 8] = [
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
    (-1, 0),
    (-1, -1),
    (0, -1),
    (1, -1),
];

/// Quarter turns counter-clockwise from east.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Heading {
    East = 0,
    North = 1,
    West = 2,
    South = 3,
}

impl Heading {
    fn from_quarter(q: usize) -> Heading {
        [Heading::East, Heading::North, Heading::West, Heading::South][q % 4]
    }

    pub fn ccw(self) -> Heading {
        Heading::from_quarter(self as usize + 1)
    }

    pub fn cw(self) -> Heading {
        Heading::from_quarter(self as usize + 3)
    }

    pub fn delta(self) -> (i32, i32) {
        OCTANTS[2 * self as usize]
    }

    pub fn angle(self) -> f64 {
        self as usize as f64 * std::f64::consts::FRAC_PI_2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridAgent {
    pub x: i32,
    pub y: i32,
    pub heading: Heading,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Inventory {
    pub wood: u32,
    pub stone: u32,
    pub has_axe: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridState {
    pub width: i32,
    pub height: i32,
    pub agent: GridAgent,
    cells: Vec<Option<ObjectKind>>,
    pub inventory: Inventory,
    pub initial_inventory: Inventory,
    pub trees_broken: u32,
    pub rocks_broken: u32,
    pub crafted: u32,
    pub steps_used: usize,
}

impl GridState {
    pub fn in_bounds(&self, x: i32, y: i32) -> bool {
        x >= 0 && y >= 0 && x < self.width && y < self.height
    }

    pub fn object_at(&self, x: i32, y: i32) -> Option<ObjectKind> {
        if self.in_bounds(x, y) {
            self.cells[(y * self.width + x) as usize]
        } else {
            None
        }
    }

    fn set(&mut self, x: i32, y: i32, v: Option<ObjectKind>) {
        let i = (y * self.width + x) as usize;
        self.cells[i] = v;
    }

    pub fn front(&self) -> (i32, i32) {
        let (dx, dy) = self.agent.heading.delta();
        (self.agent.x + dx, self.agent.y + dy)
    }

    /// All objects as `(x, y, kind)`, row-major.
    pub fn objects(&self) -> impl Iterator<Item = (i32, i32, ObjectKind)> + '_ {
        self.cells.iter().enumerate().filter_map(move |(i, c)| {
            c.map(|k| ((i as i32) % self.width, (i as i32) / self.width, k))
        })
    }

    pub fn count(&self, kind: ObjectKind) -> u32 {
        self.cells.iter().filter(|c| **c == Some(kind)).count() as u32
    }

    fn diagonal(&self) -> f64 {
        ((self.width * self.width + self.height * self.height) as f64).sqrt()
    }
}

/// Casts the eight beams and appends the inventory readings.
pub fn raycast(state: &GridState) -> Observation {
    let diag = state.diagonal();
    let base = 2 * state.agent.heading as usize;
    let beams = (0..GRID_BEAMS)
        .map(|k| {
            let (dx, dy) = OCTANTS[(base + k) % 8];
            let step_len = if dx != 0 && dy != 0 {
                std::f64::consts::SQRT_2
            } else {
                1.0
            };
            let (mut x, mut y) = (state.agent.x, state.agent.y);
            let mut steps = 0;
            let hit = loop {
                x += dx;
                y += dy;
                steps += 1;
                if !state.in_bounds(x, y) {
                    break HitKind::Wall;
                }
                if let Some(kind) = state.object_at(x, y) {
                    break kind.into();
                }
            };
            BeamReading {
                hit,
                distance: (steps as f64 * step_len / diag).min(1.0),
            }
        })
        .collect();
    let (wood, stone) = inventory_readings(state.inventory.wood, state.inventory.stone);
    Observation { beams, wood, stone }
}

#[derive(Debug, Clone)]
pub struct GridWorld {
    cap: usize,
    scheme: RewardScheme,
    goal: GoalSpec,
    state: Option<GridState>,
    clock: EpisodeClock,
}

impl Default for GridWorld {
    fn default() -> Self {
        GridWorld::new()
    }
}

impl GridWorld {
    pub fn new() -> GridWorld {
        GridWorld::with_cap(GRID_EPISODE_CAP)
    }

    pub fn with_cap(cap: usize) -> GridWorld {
        GridWorld {
            cap,
            scheme: RewardScheme::default(),
            goal: GoalSpec::Craft,
            state: None,
            clock: EpisodeClock::default(),
        }
    }

    pub fn state(&self) -> Option<&GridState> {
        self.state.as_ref()
    }

    /// Replaces the arena wholesale; used to stage hand-built layouts.
    pub fn load_state(&mut self, state: GridState, goal: GoalSpec) -> Observation {
        self.goal = goal;
        self.clock.begin();
        self.clock.steps_used = state.steps_used;
        let obs = raycast(&state);
        self.state = Some(state);
        obs
    }

    fn goal_met(&self, s: &GridState) -> bool {
        match self.goal {
            GoalSpec::Craft => s.inventory.has_axe,
            GoalSpec::Break { trees, rocks } => s.trees_broken >= trees && s.rocks_broken >= rocks,
            GoalSpec::Navigate { item } => {
                let (fx, fy) = s.front();
                let want = match item {
                    ItemKind::Tree => ObjectKind::Tree,
                    ItemKind::Rock => ObjectKind::Rock,
                    ItemKind::CraftingTable => ObjectKind::CraftingTable,
                };
                s.object_at(fx, fy) == Some(want)
            }
        }
    }
}

/// Builds an empty grid state for hand-made layouts.
pub fn empty_state(width: i32, height: i32, agent: GridAgent) -> GridState {
    GridState {
        width,
        height,
        agent,
        cells: vec![None; (width * height) as usize],
        inventory: Inventory::default(),
        initial_inventory: Inventory::default(),
        trees_broken: 0,
        rocks_broken: 0,
        crafted: 0,
        steps_used: 0,
    }
}

impl GridState {
    /// Places an object on a free, in-bounds, non-agent cell.
    pub fn place(&mut self, x: i32, y: i32, kind: ObjectKind) {
        assert!(self.in_bounds(x, y), "cell out of bounds");
        assert!(
            (x, y) != (self.agent.x, self.agent.y),
            "cell holds the agent"
        );
        self.set(x, y, Some(kind));
    }

    pub fn with_inventory(mut self, wood: u32, stone: u32) -> GridState {
        self.inventory = Inventory {
            wood,
            stone,
            has_axe: false,
        };
        self.initial_inventory = self.inventory;
        self
    }
}

impl Environment for GridWorld {
    fn fidelity(&self) -> Fidelity {
        Fidelity::Low
    }

    fn obs_dim(&self) -> usize {
        observation_dim(GRID_BEAMS)
    }

    fn episode_cap(&self) -> usize {
        self.cap
    }

    fn set_reward_scheme(&mut self, scheme: RewardScheme) {
        self.scheme = scheme;
    }

    fn reset(&mut self, params: &TaskParams, rng: &mut SimRng) -> Result<Observation, EnvError> {
        let width = params.width.round() as i32;
        let height = params.height.round() as i32;
        if width <= 0 || height <= 0 {
            return Err(EnvError::PlacementFailure(format!(
                "bad grid {width}x{height}"
            )));
        }
        let cells = (width * height) as usize;
        let bodies = params.object_count() as usize + 1;
        if bodies > cells {
            return Err(EnvError::PlacementFailure(format!(
                "{bodies} bodies do not fit a {width}x{height} grid"
            )));
        }
        let spots = sample(rng, cells, bodies).into_vec();
        let (agent_cell, object_cells) = spots.split_last().expect("at least the agent");
        let heading = Heading::from_quarter(rng.random_range(0..4));
        let agent = GridAgent {
            x: (*agent_cell % width as usize) as i32,
            y: (*agent_cell / width as usize) as i32,
            heading,
        };
        let inventory = Inventory {
            wood: params.wood_inv,
            stone: params.stone_inv,
            has_axe: false,
        };
        let mut state = empty_state(width, height, agent);
        state.inventory = inventory;
        state.initial_inventory = inventory;
        let kinds = std::iter::repeat_n(ObjectKind::Tree, params.trees_env as usize)
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
            ));
        for (cell, kind) in object_cells.iter().zip(kinds) {
            state.cells[*cell] = Some(kind);
        }
        self.goal = params.goal;
        self.clock.begin();
        let obs = raycast(&state);
        self.state = Some(state);
        Ok(obs)
    }

    fn step(&mut self, action: Action) -> Result<StepOutcome, EnvError> {
        self.clock.tick()?;
        let scheme = self.scheme;
        let mut s = self.state.take().expect("state exists once started");
        s.steps_used = self.clock.steps_used;
        let mut reward = scheme.step_penalty;
        let mut burned = false;
        let (fx, fy) = s.front();
        match action {
            Action::Forward => {
                if s.in_bounds(fx, fy) {
                    match s.object_at(fx, fy) {
                        None => {
                            s.agent.x = fx;
                            s.agent.y = fy;
                        }
                        Some(ObjectKind::Fire) => {
                            s.agent.x = fx;
                            s.agent.y = fy;
                            burned = true;
                        }
                        Some(_) => {}
                    }
                }
            }
            Action::RotateCw => s.agent.heading = s.agent.heading.cw(),
            Action::RotateCcw => s.agent.heading = s.agent.heading.ccw(),
            Action::Break => match s.object_at(fx, fy) {
                Some(ObjectKind::Tree) => {
                    if scheme.shaping_enabled && s.inventory.wood < RECIPE_WOOD {
                        reward += scheme.break_bonus;
                    }
                    s.set(fx, fy, None);
                    s.inventory.wood += 1;
                    s.trees_broken += 1;
                }
                Some(ObjectKind::Rock) => {
                    if scheme.shaping_enabled && s.inventory.stone < RECIPE_STONE {
                        reward += scheme.break_bonus;
                    }
                    s.set(fx, fy, None);
                    s.inventory.stone += 1;
                    s.rocks_broken += 1;
                }
                _ => {}
            },
            Action::Craft => {
                if s.object_at(fx, fy) == Some(ObjectKind::CraftingTable)
                    && s.inventory.wood >= RECIPE_WOOD
                    && s.inventory.stone >= RECIPE_STONE
                {
                    s.inventory.wood -= RECIPE_WOOD;
                    s.inventory.stone -= RECIPE_STONE;
                    s.inventory.has_axe = true;
                    s.crafted += 1;
                }
            }
        }

        let (terminated, truncated, success) = if burned {
            reward = scheme.fire_penalty;
            (true, false, false)
        } else if self.goal_met(&s) {
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
        let observation = raycast(&s);
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
            fidelity: Fidelity::Low,
            width: s.width as f64,
            height: s.height as f64,
            agent: Pose {
                x: s.agent.x as f64 + 0.5,
                y: s.agent.y as f64 + 0.5,
                heading: s.agent.heading.angle(),
            },
            objects: s
                .objects()
                .map(|(x, y, kind)| PlacedObject {
                    kind,
                    x: x as f64 + 0.5,
                    y: y as f64 + 0.5,
                    radius: 0.5,
                })
                .collect(),
        })
    }
}
