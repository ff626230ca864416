//! A two-agent, one-recipe kitchen split by a central counter column.
//!
//! Coordinates are `(x, y)` with `y = 0` the bottom row. The outer ring and
//! the central column `x = 4, y in 1..=3` are counters; each agent works in
//! its own 3x3 half. The recipe: chop the tomato on the board, put it on the
//! plate, and serve the plate on the star counter.

use std::fmt::Write as _;
use std::sync::Arc;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::doe::DoeClassifier;
use crate::env::{Observation, Task, TaskSpec, Transition};
use crate::error::{Error, Result};
use crate::rng::Rng;

pub const WIDTH: usize = 9;
pub const HEIGHT: usize = 5;
pub const CENTRE_X: usize = 4;
pub const HORIZON: usize = 100;
pub const NUM_ACTIONS: usize = 7;
pub const OBS_DIM: usize = 21;

pub type Cell = (usize, usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Target,
    Left,
    Right,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Target => "target",
            Variant::Left => "left",
            Variant::Right => "right",
        }
    }

    /// Rewards for (chop, plate, deliver).
    pub fn rewards(self) -> RewardTable {
        match self {
            Variant::Target => RewardTable {
                chop: 0.267,
                plate: 0.267,
                deliver: 0.476,
            },
            Variant::Left => RewardTable {
                chop: 0.5,
                plate: 0.5,
                deliver: 0.0,
            },
            Variant::Right => RewardTable {
                chop: 0.0,
                plate: 0.0,
                deliver: 1.0,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardTable {
    pub chop: f64,
    pub plate: f64,
    pub deliver: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Orientation {
    Up,
    Down,
    Left,
    Right,
}

impl Orientation {
    fn index(self) -> usize {
        match self {
            Orientation::Up => 0,
            Orientation::Down => 1,
            Orientation::Left => 2,
            Orientation::Right => 3,
        }
    }

    fn offset(self, (x, y): Cell) -> Option<Cell> {
        match self {
            Orientation::Up => (y + 1 < HEIGHT).then_some((x, y + 1)),
            Orientation::Down => y.checked_sub(1).map(|y| (x, y)),
            Orientation::Left => x.checked_sub(1).map(|x| (x, y)),
            Orientation::Right => (x + 1 < WIDTH).then_some((x + 1, y)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Action {
    Up = 0,
    Down = 1,
    Left = 2,
    Right = 3,
    Noop = 4,
    Interact = 5,
    Chop = 6,
}

impl Action {
    pub fn from_index(i: usize) -> Option<Self> {
        Some(match i {
            0 => Action::Up,
            1 => Action::Down,
            2 => Action::Left,
            3 => Action::Right,
            4 => Action::Noop,
            5 => Action::Interact,
            6 => Action::Chop,
            _ => return None,
        })
    }

    fn direction(self) -> Option<Orientation> {
        match self {
            Action::Up => Some(Orientation::Up),
            Action::Down => Some(Orientation::Down),
            Action::Left => Some(Orientation::Left),
            Action::Right => Some(Orientation::Right),
            _ => None,
        }
    }
}

/// Where an item is.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Place {
    Counter(Cell),
    Held(usize),
    /// Only the tomato: sitting on the plate, wherever the plate is.
    OnPlate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum HeldItem {
    Nothing,
    Tomato,
    ChoppedTomato,
    Plate,
    PlateWithChoppedTomato,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Progress {
    pub chopped: bool,
    pub plated: bool,
    pub delivered: bool,
}

/// Immutable grid geometry and spawn candidates.
#[derive(Debug, Clone, PartialEq)]
pub struct KitchenLayout {
    pub width: usize,
    pub height: usize,
    pub plate_spawns: [Cell; 3],
    pub star_spawns: [Cell; 3],
    pub board_spawns: [Cell; 3],
    pub central_counters: [Cell; 3],
    pub target_tomato_spawns: [Cell; 3],
    pub agent_spawns: [Cell; 2],
}

impl Default for KitchenLayout {
    fn default() -> Self {
        Self {
            width: WIDTH,
            height: HEIGHT,
            plate_spawns: [(1, 0), (2, 0), (3, 0)],
            star_spawns: [(5, 4), (6, 4), (7, 4)],
            board_spawns: [(0, 1), (0, 2), (0, 3)],
            central_counters: [(4, 1), (4, 2), (4, 3)],
            target_tomato_spawns: [(8, 1), (8, 2), (8, 3)],
            agent_spawns: [(2, 2), (6, 2)],
        }
    }
}

impl KitchenLayout {
    pub fn is_counter(&self, (x, y): Cell) -> bool {
        x == 0 || y == 0 || x + 1 == self.width || y + 1 == self.height || x == CENTRE_X
    }

    pub fn is_walkable(&self, cell: Cell) -> bool {
        cell.0 < self.width && cell.1 < self.height && !self.is_counter(cell)
    }

    pub fn side_of(&self, (x, _): Cell) -> Side {
        if x < CENTRE_X {
            Side::Left
        } else {
            Side::Right
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KitchenState {
    pub positions: [Cell; 2],
    pub orientations: [Orientation; 2],
    pub tomato: Place,
    pub plate: Place,
    pub chopped: bool,
    pub board: Cell,
    pub star: Cell,
    pub progress: Progress,
    pub steps_elapsed: usize,
}

impl KitchenState {
    pub fn held(&self, agent: usize) -> HeldItem {
        if self.plate == Place::Held(agent) {
            if self.tomato == Place::OnPlate {
                HeldItem::PlateWithChoppedTomato
            } else {
                HeldItem::Plate
            }
        } else if self.tomato == Place::Held(agent) {
            if self.chopped {
                HeldItem::ChoppedTomato
            } else {
                HeldItem::Tomato
            }
        } else {
            HeldItem::Nothing
        }
    }

    pub fn plate_cell(&self) -> Cell {
        match self.plate {
            Place::Counter(c) => c,
            Place::Held(i) => self.positions[i],
            Place::OnPlate => unreachable!("the plate is never on itself"),
        }
    }

    pub fn tomato_cell(&self) -> Cell {
        match self.tomato {
            Place::Counter(c) => c,
            Place::Held(i) => self.positions[i],
            Place::OnPlate => self.plate_cell(),
        }
    }

    fn item_at(&self, cell: Cell) -> bool {
        self.tomato == Place::Counter(cell) || self.plate == Place::Counter(cell)
    }
}

/// Sample a fresh episode of `variant`.
pub fn build_layout(variant: Variant, rng: &mut Rng) -> (KitchenLayout, KitchenState) {
    let layout = KitchenLayout::default();
    let state = spawn(&layout, variant, rng);
    (layout, state)
}

fn spawn(layout: &KitchenLayout, variant: Variant, rng: &mut Rng) -> KitchenState {
    let first_left = rng.gen_bool(0.5);
    let positions = if first_left {
        [layout.agent_spawns[0], layout.agent_spawns[1]]
    } else {
        [layout.agent_spawns[1], layout.agent_spawns[0]]
    };
    let mut pick = |cells: &[Cell; 3]| cells[rng.gen_range(0..3)];
    let plate_cell = pick(&layout.plate_spawns);
    let star = pick(&layout.star_spawns);
    let board = pick(&layout.board_spawns);
    let (tomato, plate, chopped, progress) = match variant {
        Variant::Target => (
            Place::Counter(pick(&layout.target_tomato_spawns)),
            Place::Counter(plate_cell),
            false,
            Progress::default(),
        ),
        Variant::Left => (
            Place::Counter(pick(&layout.central_counters)),
            Place::Counter(plate_cell),
            false,
            Progress::default(),
        ),
        Variant::Right => (
            Place::OnPlate,
            Place::Counter(pick(&layout.central_counters)),
            true,
            Progress {
                chopped: true,
                plated: true,
                delivered: false,
            },
        ),
    };
    KitchenState {
        positions,
        orientations: [Orientation::Up; 2],
        tomato,
        plate,
        chopped,
        board,
        star,
        progress,
        steps_elapsed: 0,
    }
}

#[derive(Debug, Clone)]
pub struct Kitchen {
    layout: Arc<KitchenLayout>,
    variant: Variant,
    spec: TaskSpec,
}

impl Kitchen {
    pub fn new(variant: Variant) -> Self {
        Self {
            layout: Arc::new(KitchenLayout::default()),
            variant,
            spec: TaskSpec {
                task_id: format!("overcooked-{}", variant.name()),
                num_agents: 2,
                action_counts: vec![NUM_ACTIONS; 2],
                obs_dims: vec![OBS_DIM; 2],
                num_states: None,
                horizon: HORIZON,
                discount: 0.99,
            },
        }
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn layout(&self) -> &KitchenLayout {
        &self.layout
    }

    fn recipe_complete(&self, p: &Progress) -> bool {
        match self.variant {
            Variant::Target | Variant::Right => p.delivered,
            Variant::Left => p.chopped && p.plated,
        }
    }

    /// Apply one agent's action; returns the reward earned.
    fn act(&self, state: &mut KitchenState, agent: usize, action: Action) -> f64 {
        let rewards = self.variant.rewards();
        if let Some(dir) = action.direction() {
            state.orientations[agent] = dir;
            if let Some(next) = dir.offset(state.positions[agent]) {
                let other = state.positions[1 - agent];
                if self.layout.is_walkable(next) && next != other {
                    state.positions[agent] = next;
                }
            }
            return 0.0;
        }
        let Some(faced) = state.orientations[agent].offset(state.positions[agent]) else {
            return 0.0;
        };
        if !self.layout.is_counter(faced) {
            return 0.0;
        }
        match action {
            Action::Chop => {
                if faced == state.board && state.tomato == Place::Counter(faced) && !state.chopped {
                    state.chopped = true;
                    if !state.progress.chopped {
                        state.progress.chopped = true;
                        return rewards.chop;
                    }
                }
                0.0
            }
            Action::Interact => self.interact(state, agent, faced),
            _ => 0.0,
        }
    }

    fn interact(&self, state: &mut KitchenState, agent: usize, faced: Cell) -> f64 {
        let rewards = self.variant.rewards();
        let mut plated = false;
        match state.held(agent) {
            HeldItem::Nothing => {
                if state.tomato == Place::Counter(faced) {
                    state.tomato = Place::Held(agent);
                } else if state.plate == Place::Counter(faced) {
                    state.plate = Place::Held(agent);
                }
            }
            HeldItem::Tomato | HeldItem::ChoppedTomato => {
                if state.plate == Place::Counter(faced) && state.chopped {
                    state.tomato = Place::OnPlate;
                    plated = true;
                } else if !state.item_at(faced) && faced != state.star {
                    state.tomato = Place::Counter(faced);
                }
            }
            HeldItem::Plate => {
                if state.tomato == Place::Counter(faced) && state.chopped {
                    state.tomato = Place::OnPlate;
                    state.plate = Place::Counter(faced);
                    plated = true;
                } else if !state.item_at(faced) && faced != state.star {
                    state.plate = Place::Counter(faced);
                }
            }
            HeldItem::PlateWithChoppedTomato => {
                if faced == state.star {
                    state.plate = Place::Counter(faced);
                    if !state.progress.delivered {
                        state.progress.delivered = true;
                        return rewards.deliver;
                    }
                } else if !state.item_at(faced) {
                    state.plate = Place::Counter(faced);
                }
            }
        }
        if plated && !state.progress.plated {
            state.progress.plated = true;
            return rewards.plate;
        }
        0.0
    }

    /// The 21-feature egocentric observation of `agent`.
    pub fn encode_observation(&self, state: &KitchenState, agent: usize) -> Observation {
        let sx = (self.layout.width - 1) as f64;
        let sy = (self.layout.height - 1) as f64;
        let ego = state.positions[agent];
        let rel = |c: Cell| {
            [
                (c.0 as f64 - ego.0 as f64) / sx,
                (c.1 as f64 - ego.1 as f64) / sy,
            ]
        };
        let onehot = |o: Orientation| {
            let mut v = [0.0; 4];
            v[o.index()] = 1.0;
            v
        };
        let mut f = Vec::with_capacity(OBS_DIM);
        f.extend([ego.0 as f64 / sx, ego.1 as f64 / sy]);
        f.extend(onehot(state.orientations[agent]));
        f.extend(rel(state.positions[1 - agent]));
        f.extend(onehot(state.orientations[1 - agent]));
        f.extend(rel(state.tomato_cell()));
        f.push(if state.chopped { 1.0 } else { 0.0 });
        f.extend(rel(state.plate_cell()));
        f.extend(rel(state.board));
        f.extend(rel(state.star));
        debug_assert_eq!(f.len(), OBS_DIM);
        Observation { features: f, state_id: 0 }
    }

    /// One character per cell, top row first.
    pub fn render(&self, state: &KitchenState) -> String {
        let mut out = String::new();
        for y in (0..self.layout.height).rev() {
            for x in 0..self.layout.width {
                let c = (x, y);
                let ch = if state.positions[0] == c {
                    '0'
                } else if state.positions[1] == c {
                    '1'
                } else if state.plate == Place::Counter(c) {
                    if state.tomato == Place::OnPlate {
                        'D'
                    } else {
                        'P'
                    }
                } else if state.tomato == Place::Counter(c) {
                    if state.chopped {
                        't'
                    } else {
                        'T'
                    }
                } else if c == state.board {
                    'B'
                } else if c == state.star {
                    '*'
                } else if self.layout.is_counter(c) {
                    '#'
                } else {
                    '.'
                };
                out.push(ch);
            }
            out.push('\n');
        }
        let held = |i: usize| format!("{:?}", state.held(i));
        let _ = writeln!(out, "held: 0={} 1={} step={}", held(0), held(1), state.steps_elapsed);
        out
    }

    /// A hand-written joint policy that completes the variant's recipe.
    pub fn scripted_action(&self, state: &KitchenState, agent: usize) -> usize {
        scripted::action(self, state, agent) as usize
    }
}

impl Task for Kitchen {
    type State = KitchenState;

    fn spec(&self) -> &TaskSpec {
        &self.spec
    }

    fn reset(&self, rng: &mut Rng) -> Result<(KitchenState, Vec<Observation>)> {
        self.spec.validate()?;
        let state = spawn(&self.layout, self.variant, rng);
        let obs = self.observe(&state);
        Ok((state, obs))
    }

    fn observe(&self, state: &KitchenState) -> Vec<Observation> {
        (0..2).map(|i| self.encode_observation(state, i)).collect()
    }

    fn step(&self, state: &mut KitchenState, actions: &[usize], _rng: &mut Rng) -> Result<Transition> {
        self.spec.check_actions(actions)?;
        let obs = self.observe(state);
        let mut reward = 0.0;
        for (agent, &a) in actions.iter().enumerate() {
            let action = Action::from_index(a).ok_or_else(|| Error::arg(format!("action {a} out of range")))?;
            reward += self.act(state, agent, action);
        }
        state.steps_elapsed += 1;
        let done = self.recipe_complete(&state.progress);
        let truncated = !done && state.steps_elapsed >= self.spec.horizon;
        Ok(Transition {
            obs,
            actions: actions.to_vec(),
            reward,
            next_obs: self.observe(state),
            done,
            truncated,
        })
    }
}

fn in_left_half(cell: Cell) -> bool {
    cell.0 <= CENTRE_X
}

fn in_right_half(cell: Cell) -> bool {
    cell.0 >= CENTRE_X
}

/// Hand-specified expertise. Left: tomato and plate both in the left half
/// (centre counters included) and not yet combined. Right: the chopped
/// tomato is on the plate in the right half (centre counters included).
pub fn expert_doe_kitchen(side: Side, state: &KitchenState) -> u8 {
    let tomato = state.tomato_cell();
    let on_plate = state.tomato == Place::OnPlate;
    let expert = match side {
        Side::Left => in_left_half(tomato) && in_left_half(state.plate_cell()) && !on_plate,
        Side::Right => state.chopped && on_plate && in_right_half(tomato),
    };
    expert as u8
}

/// The expert rule for a sub-team role, evaluated from the agent's own
/// observation (item positions are recovered from the ego position).
#[derive(Debug, Clone, Copy)]
pub struct KitchenExpert {
    pub role: Side,
}

impl KitchenExpert {
    fn decode(obs: &Observation) -> (Cell, Cell, bool) {
        let f = &obs.features;
        let sx = (WIDTH - 1) as f64;
        let sy = (HEIGHT - 1) as f64;
        let ego = ((f[0] * sx).round(), (f[1] * sy).round());
        let abs = |dx: f64, dy: f64| ((ego.0 + dx * sx).round() as usize, (ego.1 + dy * sy).round() as usize);
        (abs(f[12], f[13]), abs(f[15], f[16]), f[14] > 0.5)
    }
}

impl DoeClassifier for KitchenExpert {
    fn predict(&self, obs: &Observation) -> f64 {
        let (tomato, plate, chopped) = Self::decode(obs);
        // tomato and plate share a cell only once combined
        let on_plate = tomato == plate;
        let expert = match self.role {
            Side::Left => in_left_half(tomato) && in_left_half(plate) && !on_plate,
            Side::Right => chopped && on_plate && in_right_half(tomato),
        };
        f64::from(expert as u8)
    }
}

mod scripted {
    use super::*;

    /// Step toward `stand`, then turn to `face` and perform `finish`.
    fn go_and(state: &KitchenState, agent: usize, stand: Cell, face: Orientation, finish: Action) -> Action {
        let (x, y) = state.positions[agent];
        if x < stand.0 {
            Action::Right
        } else if x > stand.0 {
            Action::Left
        } else if y < stand.1 {
            Action::Up
        } else if y > stand.1 {
            Action::Down
        } else if state.orientations[agent] != face {
            match face {
                Orientation::Up => Action::Up,
                Orientation::Down => Action::Down,
                Orientation::Left => Action::Left,
                Orientation::Right => Action::Right,
            }
        } else {
            finish
        }
    }

    fn free_central(kitchen: &Kitchen, state: &KitchenState) -> Option<Cell> {
        kitchen.layout.central_counters.iter().copied().find(|&c| !state.item_at(c))
    }

    pub(super) fn action(kitchen: &Kitchen, state: &KitchenState, agent: usize) -> Action {
        let layout = &kitchen.layout;
        let on_centre = |c: Cell| c.0 == CENTRE_X;
        match layout.side_of(state.positions[agent]) {
            Side::Right => match state.held(agent) {
                HeldItem::Nothing => match (state.tomato, state.plate) {
                    (Place::Counter(t), _) if t.0 == WIDTH - 1 => {
                        go_and(state, agent, (t.0 - 1, t.1), Orientation::Right, Action::Interact)
                    }
                    (Place::OnPlate, Place::Counter(p)) if on_centre(p) => {
                        go_and(state, agent, (p.0 + 1, p.1), Orientation::Left, Action::Interact)
                    }
                    _ => Action::Noop,
                },
                HeldItem::Tomato | HeldItem::ChoppedTomato | HeldItem::Plate => match free_central(kitchen, state) {
                    Some(c) => go_and(state, agent, (c.0 + 1, c.1), Orientation::Left, Action::Interact),
                    None => Action::Noop,
                },
                HeldItem::PlateWithChoppedTomato => {
                    let s = state.star;
                    go_and(state, agent, (s.0, s.1 - 1), Orientation::Up, Action::Interact)
                }
            },
            Side::Left => match state.held(agent) {
                HeldItem::Nothing => match (state.tomato, state.plate) {
                    (Place::Counter(t), _) if on_centre(t) => {
                        go_and(state, agent, (t.0 - 1, t.1), Orientation::Right, Action::Interact)
                    }
                    (Place::Counter(t), _) if t == state.board => {
                        let finish = if state.chopped { Action::Interact } else { Action::Chop };
                        go_and(state, agent, (t.0 + 1, t.1), Orientation::Left, finish)
                    }
                    (Place::OnPlate, Place::Counter(p)) if p.1 == 0 => {
                        go_and(state, agent, (p.0, p.1 + 1), Orientation::Down, Action::Interact)
                    }
                    _ => Action::Noop,
                },
                HeldItem::Tomato => {
                    let b = state.board;
                    go_and(state, agent, (b.0 + 1, b.1), Orientation::Left, Action::Interact)
                }
                HeldItem::ChoppedTomato => match state.plate {
                    Place::Counter(p) if p.1 == 0 => {
                        go_and(state, agent, (p.0, p.1 + 1), Orientation::Down, Action::Interact)
                    }
                    _ => Action::Noop,
                },
                HeldItem::Plate | HeldItem::PlateWithChoppedTomato => match free_central(kitchen, state) {
                    Some(c) => go_and(state, agent, (c.0 - 1, c.1), Orientation::Right, Action::Interact),
                    None => Action::Noop,
                },
            },
        }
    }
}
