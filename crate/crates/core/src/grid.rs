//! Stochastic grid-world office: rooms, a shop, corridors and blocking
//! areas where walkers slow the robot down.
//!
//! Coordinates are `(x, y)` with `y` growing downwards, so `up` is `y - 1`.
//! Open (non-wall) cells are numbered in row-major order; those numbers are
//! the state indices used by the learners and planners.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::path::Path;

use rand::Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cell {
    pub x: usize,
    pub y: usize,
}

impl Cell {
    pub const fn new(x: usize, y: usize) -> Cell {
        Cell { x, y }
    }

    pub fn manhattan(self, other: Cell) -> usize {
        self.x.abs_diff(other.x) + self.y.abs_diff(other.y)
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "c{}_{}", self.x, self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Terrain {
    Wall,
    Free,
    Blocking,
    Shop,
    Room(u8),
}

impl Terrain {
    fn glyph(self) -> char {
        match self {
            Terrain::Wall => '#',
            Terrain::Free => '.',
            Terrain::Blocking => 'B',
            Terrain::Shop => 'S',
            Terrain::Room(k) => (b'0' + k) as char,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Move {
    Up,
    Down,
    Left,
    Right,
}

impl Move {
    pub const ALL: [Move; 4] = [Move::Up, Move::Down, Move::Left, Move::Right];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Move {
        Move::ALL[i]
    }

    pub fn name(self) -> &'static str {
        match self {
            Move::Up => "up",
            Move::Down => "down",
            Move::Left => "left",
            Move::Right => "right",
        }
    }

    pub fn parse(s: &str) -> Option<Move> {
        Move::ALL.into_iter().find(|m| m.name() == s)
    }
}

impl fmt::Display for Move {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A named region of the map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Place {
    Shop,
    Room(u8),
}

impl Place {
    pub fn parse(s: &str) -> Option<Place> {
        if s == "shop" {
            return Some(Place::Shop);
        }
        s.strip_prefix("room").and_then(|k| k.parse().ok()).filter(|k| *k >= 1).map(Place::Room)
    }
}

impl fmt::Display for Place {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Place::Shop => f.write_str("shop"),
            Place::Room(k) => write!(f, "room{k}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MapError {
    #[error("missing or malformed header; expected `MAP v1 <width> <height>`")]
    Header,
    #[error("row {row} has {found} cells, expected {expected}")]
    Ragged { row: usize, found: usize, expected: usize },
    #[error("expected {expected} rows, found {found}")]
    RowCount { expected: usize, found: usize },
    #[error("unknown glyph `{glyph}` at row {row}, column {col}")]
    UnknownGlyph { glyph: char, row: usize, col: usize },
    #[error("expected exactly one shop region, found {0}")]
    ShopCount(usize),
    #[error("room tags must run from 1 without gaps; room {0} is missing")]
    RoomTags(u8),
    #[error("open cells are not connected; {0} cannot be reached")]
    Disconnected(Cell),
    #[error("map has no open cells")]
    Empty,
    #[error("cannot read map: {0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridMap {
    width: usize,
    height: usize,
    cells: Vec<Terrain>,
    room_count: usize,
    open: Vec<Cell>,
    state_of: Vec<Option<u32>>,
}

const OFFICE_10X14: &str = include_str!("../maps/office10x14.map");

impl GridMap {
    /// Parse the ASCII map format and check its invariants.
    pub fn parse(text: &str) -> Result<GridMap, MapError> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header: Vec<&str> = lines.next().ok_or(MapError::Header)?.split_whitespace().collect();
        let (width, height) = match header.as_slice() {
            ["MAP", "v1", w, h] => (
                w.parse::<usize>().map_err(|_| MapError::Header)?,
                h.parse::<usize>().map_err(|_| MapError::Header)?,
            ),
            _ => return Err(MapError::Header),
        };
        let mut cells = Vec::with_capacity(width * height);
        let mut rows = 0;
        for (row, line) in lines.enumerate() {
            let line = line.trim_end();
            let found = line.chars().count();
            if found != width {
                return Err(MapError::Ragged { row, found, expected: width });
            }
            for (col, glyph) in line.chars().enumerate() {
                cells.push(match glyph {
                    '#' => Terrain::Wall,
                    '.' => Terrain::Free,
                    'B' => Terrain::Blocking,
                    'S' => Terrain::Shop,
                    '1'..='9' => Terrain::Room(glyph as u8 - b'0'),
                    _ => return Err(MapError::UnknownGlyph { glyph, row, col }),
                });
            }
            rows += 1;
        }
        if rows != height {
            return Err(MapError::RowCount { expected: height, found: rows });
        }
        GridMap::from_cells(width, height, cells)
    }

    pub fn load(path: &Path) -> Result<GridMap, MapError> {
        let text = std::fs::read_to_string(path).map_err(|e| MapError::Io(e.to_string()))?;
        GridMap::parse(&text)
    }

    /// The bundled 10x14 office: five rooms, one shop, four blocking areas.
    pub fn office10x14() -> GridMap {
        GridMap::parse(OFFICE_10X14).expect("bundled map is valid")
    }

    pub(crate) fn from_cells(width: usize, height: usize, cells: Vec<Terrain>) -> Result<GridMap, MapError> {
        assert_eq!(cells.len(), width * height);
        let mut open = Vec::new();
        let mut state_of = vec![None; cells.len()];
        for (i, t) in cells.iter().enumerate() {
            if *t != Terrain::Wall {
                state_of[i] = Some(open.len() as u32);
                open.push(Cell::new(i % width, i / width));
            }
        }
        let room_count = cells
            .iter()
            .filter_map(|t| match t {
                Terrain::Room(k) => Some(*k as usize),
                _ => None,
            })
            .max()
            .unwrap_or(0);
        let map = GridMap { width, height, cells, room_count, open, state_of };
        map.check()?;
        Ok(map)
    }

    fn check(&self) -> Result<(), MapError> {
        if self.open.is_empty() {
            return Err(MapError::Empty);
        }
        let shops = self.components(|t| t == Terrain::Shop);
        if shops != 1 {
            return Err(MapError::ShopCount(shops));
        }
        for k in 1..=self.room_count as u8 {
            if !self.cells.contains(&Terrain::Room(k)) {
                return Err(MapError::RoomTags(k));
            }
        }
        let reach = self.reachable_from(self.open[0]);
        if let Some(i) = reach.iter().position(|r| !r) {
            return Err(MapError::Disconnected(self.open[i]));
        }
        Ok(())
    }

    /// Number of 4-connected components among cells satisfying `pred`.
    fn components(&self, pred: impl Fn(Terrain) -> bool) -> usize {
        let mut seen = vec![false; self.cells.len()];
        let mut count = 0;
        for start in 0..self.cells.len() {
            if seen[start] || !pred(self.cells[start]) {
                continue;
            }
            count += 1;
            let mut queue = VecDeque::from([start]);
            seen[start] = true;
            while let Some(i) = queue.pop_front() {
                let c = Cell::new(i % self.width, i / self.width);
                for n in self.neighbors(c) {
                    let j = n.y * self.width + n.x;
                    if !seen[j] && pred(self.cells[j]) {
                        seen[j] = true;
                        queue.push_back(j);
                    }
                }
            }
        }
        count
    }

    /// Reachability over open cells, indexed by state.
    fn reachable_from(&self, start: Cell) -> Vec<bool> {
        let mut seen = vec![false; self.open.len()];
        let s = self.state(start).expect("open start");
        seen[s] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(c) = queue.pop_front() {
            for n in self.neighbors(c) {
                if let Some(j) = self.state(n) {
                    if !seen[j] {
                        seen[j] = true;
                        queue.push_back(n);
                    }
                }
            }
        }
        seen
    }

    /// In-bounds 4-neighbors in up, down, left, right order.
    fn neighbors(&self, c: Cell) -> impl Iterator<Item = Cell> + '_ {
        Move::ALL.into_iter().filter_map(move |m| self.offset(c, m))
    }

    fn offset(&self, c: Cell, m: Move) -> Option<Cell> {
        let (x, y) = (c.x as isize, c.y as isize);
        let (nx, ny) = match m {
            Move::Up => (x, y - 1),
            Move::Down => (x, y + 1),
            Move::Left => (x - 1, y),
            Move::Right => (x + 1, y),
        };
        (nx >= 0 && ny >= 0 && (nx as usize) < self.width && (ny as usize) < self.height)
            .then(|| Cell::new(nx as usize, ny as usize))
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn room_count(&self) -> usize {
        self.room_count
    }

    /// Number of 4-connected blocking areas.
    pub fn blocking_areas(&self) -> usize {
        self.components(|t| t == Terrain::Blocking)
    }

    pub fn terrain(&self, c: Cell) -> Terrain {
        self.cells[c.y * self.width + c.x]
    }

    pub fn is_open(&self, c: Cell) -> bool {
        c.x < self.width && c.y < self.height && self.terrain(c) != Terrain::Wall
    }

    /// Open cells in state order.
    pub fn open_cells(&self) -> &[Cell] {
        &self.open
    }

    pub fn num_states(&self) -> usize {
        self.open.len()
    }

    pub fn state(&self, c: Cell) -> Option<usize> {
        if c.x >= self.width || c.y >= self.height {
            return None;
        }
        self.state_of[c.y * self.width + c.x].map(|s| s as usize)
    }

    pub fn cell(&self, state: usize) -> Cell {
        self.open[state]
    }

    /// Open neighbor of `c` in direction `m`, if any.
    pub fn step_target(&self, c: Cell, m: Move) -> Option<Cell> {
        self.offset(c, m).filter(|n| self.is_open(*n))
    }

    pub fn places(&self) -> Vec<Place> {
        std::iter::once(Place::Shop).chain((1..=self.room_count as u8).map(Place::Room)).collect()
    }

    pub fn has_place(&self, p: Place) -> bool {
        match p {
            Place::Shop => true,
            Place::Room(k) => k >= 1 && (k as usize) <= self.room_count,
        }
    }

    /// Cells of a region, in state order.
    pub fn region(&self, p: Place) -> Vec<Cell> {
        let want = match p {
            Place::Shop => Terrain::Shop,
            Place::Room(k) => Terrain::Room(k),
        };
        self.open.iter().copied().filter(|c| self.terrain(*c) == want).collect()
    }

    /// The region cell closest to the region's centroid; ties go to the
    /// first cell in state order.
    pub fn anchor(&self, p: Place) -> Option<Cell> {
        let cells = self.region(p);
        if cells.is_empty() {
            return None;
        }
        let n = cells.len() as f64;
        let cx = cells.iter().map(|c| c.x as f64).sum::<f64>() / n;
        let cy = cells.iter().map(|c| c.y as f64).sum::<f64>() / n;
        let d = |c: &Cell| (c.x as f64 - cx).powi(2) + (c.y as f64 - cy).powi(2);
        cells.iter().copied().reduce(|best, c| if d(&c) < d(&best) - 1e-12 { c } else { best })
    }

    /// Shortest-path distances (in moves) from every open cell to `goal`.
    pub fn distances_to(&self, goal: &[Cell]) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.open.len()];
        let mut queue = VecDeque::new();
        for g in goal {
            if let Some(s) = self.state(*g) {
                dist[s] = Some(0);
                queue.push_back(*g);
            }
        }
        while let Some(c) = queue.pop_front() {
            let d = dist[self.state(c).unwrap()].unwrap();
            for n in self.neighbors(c) {
                if let Some(j) = self.state(n) {
                    if dist[j].is_none() {
                        dist[j] = Some(d + 1);
                        queue.push_back(n);
                    }
                }
            }
        }
        dist
    }

    /// Content hash of the canonical text form.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_string().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

impl fmt::Display for GridMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "MAP v1 {} {}", self.width, self.height)?;
        for row in self.cells.chunks(self.width) {
            let line: String = row.iter().map(|t| t.glyph()).collect();
            writeln!(f, "{line}")?;
        }
        Ok(())
    }
}

/// A cell set whose action success differs from the base rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Zone {
    pub cells: Vec<Cell>,
    pub success: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvConfig {
    pub map: GridMap,
    pub blocking_rate: f64,
    /// Exogenous variable values this configuration represents, e.g. `time=morning`.
    pub exo_setting: BTreeMap<String, String>,
    /// Base probability that a move goes where intended.
    pub action_success: f64,
    /// Per-setting overrides of the base rate, keyed on the cell moved from.
    pub zones: Vec<Zone>,
    pub seed: u64,
    pub step_cost: f64,
}

impl EnvConfig {
    pub fn new(map: GridMap) -> EnvConfig {
        EnvConfig {
            map,
            blocking_rate: 0.0,
            exo_setting: BTreeMap::new(),
            action_success: 0.8,
            zones: Vec::new(),
            seed: 0,
            step_cost: -1.0,
        }
    }

    pub fn with_blocking_rate(mut self, br: f64) -> EnvConfig {
        self.blocking_rate = br;
        self
    }

    pub fn with_action_success(mut self, p: f64) -> EnvConfig {
        self.action_success = p;
        self
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.blocking_rate) {
            return Err(format!("blocking rate {} outside [0,1]", self.blocking_rate));
        }
        let rates = std::iter::once(self.action_success).chain(self.zones.iter().map(|z| z.success));
        for p in rates {
            if !(0.0..=1.0).contains(&p) {
                return Err(format!("action success {p} outside [0,1]"));
            }
        }
        Ok(())
    }

    fn base_success(&self, from: Cell) -> f64 {
        self.zones
            .iter()
            .rev()
            .find(|z| z.cells.contains(&from))
            .map_or(self.action_success, |z| z.success)
    }

    /// Analytic next-cell distribution for `m` taken in `c`, sorted by cell
    /// state order.
    pub fn kernel(&self, c: Cell, m: Move) -> Vec<(Cell, f64)> {
        let map = &self.map;
        let intended = map.step_target(c, m).unwrap_or(c);
        let mut p = self.base_success(c);
        if intended != c && map.terrain(intended) == Terrain::Blocking {
            p *= 1.0 - self.blocking_rate;
        }
        let mut failures: Vec<Cell> = std::iter::once(c)
            .chain(Move::ALL.iter().filter_map(|d| map.step_target(c, *d)))
            .filter(|n| *n != intended)
            .collect();
        failures.dedup();
        let mut out: BTreeMap<usize, f64> = BTreeMap::new();
        if failures.is_empty() {
            out.insert(map.state(c).unwrap(), 1.0);
        } else {
            *out.entry(map.state(intended).unwrap()).or_default() += p;
            let share = (1.0 - p) / failures.len() as f64;
            for f in failures {
                *out.entry(map.state(f).unwrap()).or_default() += share;
            }
        }
        out.into_iter().filter(|(_, p)| *p > 0.0).map(|(s, p)| (map.cell(s), p)).collect()
    }

    /// Kernels for every (state, move), with cumulative sums for sampling.
    pub fn kernel_table(&self) -> KernelTable {
        let n = self.map.num_states();
        let mut rows = Vec::with_capacity(n * 4);
        for s in 0..n {
            for m in Move::ALL {
                let k = self.kernel(self.map.cell(s), m);
                rows.push(k.into_iter().map(|(c, p)| (self.map.state(c).unwrap() as u32, p)).collect());
            }
        }
        KernelTable::from_rows(rows)
    }

    /// Sample one move; returns the next cell and the step reward.
    pub fn step<R: Rng + ?Sized>(&self, c: Cell, m: Move, rng: &mut R) -> (Cell, f64) {
        let kernel = self.kernel(c, m);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (n, p) in &kernel {
            acc += p;
            if u < acc {
                return (*n, self.step_cost);
            }
        }
        (kernel.last().unwrap().0, self.step_cost)
    }

    /// Run `policy` from `start` until a goal cell is entered or `max_steps`
    /// moves have been made.
    pub fn run_episode<R: Rng + ?Sized>(
        &self,
        policy: &dyn Fn(Cell) -> Option<Move>,
        start: Cell,
        goal: &[Cell],
        max_steps: usize,
        rng: &mut R,
    ) -> Result<Trajectory, EpisodeError> {
        if max_steps == 0 {
            return Err(EpisodeError::ZeroSteps);
        }
        let table = self.kernel_table();
        let mut traj = Trajectory { states: vec![start], actions: Vec::new(), rewards: Vec::new(), reached: false };
        let mut c = start;
        let is_goal = |c: Cell| goal.contains(&c);
        while !is_goal(c) && traj.actions.len() < max_steps {
            let m = policy(c).ok_or(EpisodeError::PolicyUndefined(c))?;
            let s = self.map.state(c).ok_or(EpisodeError::PolicyUndefined(c))?;
            c = self.map.cell(table.sample(s, m.index(), rng));
            traj.states.push(c);
            traj.actions.push(m);
            traj.rewards.push(self.step_cost);
        }
        traj.reached = is_goal(c);
        Ok(traj)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EpisodeError {
    #[error("policy has no action for {0}")]
    PolicyUndefined(Cell),
    #[error("max_steps must be at least 1")]
    ZeroSteps,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// Visited cells, starting with the start cell.
    pub states: Vec<Cell>,
    pub actions: Vec<Move>,
    pub rewards: Vec<f64>,
    pub reached: bool,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

/// Sparse transition rows indexed by `state * 4 + move`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelTable {
    rows: Vec<Vec<(u32, f64)>>,
    cumulative: Vec<Vec<f64>>,
}

impl KernelTable {
    pub fn from_rows(rows: Vec<Vec<(u32, f64)>>) -> KernelTable {
        let cumulative = rows
            .iter()
            .map(|r| {
                let mut acc = 0.0;
                r.iter()
                    .map(|(_, p)| {
                        acc += p;
                        acc
                    })
                    .collect()
            })
            .collect();
        KernelTable { rows, cumulative }
    }

    pub fn row(&self, state: usize, action: usize) -> &[(u32, f64)] {
        &self.rows[state * 4 + action]
    }

    pub fn num_states(&self) -> usize {
        self.rows.len() / 4
    }

    pub fn sample<R: Rng + ?Sized>(&self, state: usize, action: usize, rng: &mut R) -> usize {
        let i = state * 4 + action;
        let u: f64 = rng.random();
        let cum = &self.cumulative[i];
        let k = cum.partition_point(|c| *c <= u).min(cum.len() - 1);
        self.rows[i][k].0 as usize
    }

    /// Exact probability that `policy` started in `start` enters a state of
    /// `goal` within `max_steps` moves. States without an action absorb.
    pub fn reach_probability(&self, policy: &[Option<usize>], start: usize, goal: &[bool], max_steps: usize) -> f64 {
        if goal[start] {
            return 1.0;
        }
        let n = self.num_states();
        let mut dist = vec![0.0; n];
        dist[start] = 1.0;
        let mut next = vec![0.0; n];
        let mut reached = 0.0;
        for _ in 0..max_steps {
            next.iter_mut().for_each(|p| *p = 0.0);
            for (s, &p) in dist.iter().enumerate() {
                if p == 0.0 {
                    continue;
                }
                match policy[s] {
                    Some(a) => {
                        for &(t, q) in self.row(s, a) {
                            next[t as usize] += p * q;
                        }
                    }
                    None => next[s] += p,
                }
            }
            for (s, p) in next.iter_mut().enumerate() {
                if goal[s] {
                    reached += *p;
                    *p = 0.0;
                }
            }
            std::mem::swap(&mut dist, &mut next);
        }
        reached
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn all_free_map() {
        let m = GridMap::parse("MAP v1 3 3\n...\n.S.\n...\n").unwrap();
        assert_eq!(m.room_count(), 0);
        assert_eq!(m.num_states(), 9);
        assert_eq!(m.state(Cell::new(2, 1)), Some(5));
    }

    #[test]
    fn bundled_office() {
        let m = GridMap::office10x14();
        assert_eq!((m.width(), m.height()), (10, 14));
        assert_eq!(m.room_count(), 5);
        assert_eq!(m.blocking_areas(), 4);
        assert!(!m.region(Place::Shop).is_empty());
        assert_eq!(GridMap::parse(&m.to_string()).unwrap(), m);
    }

    #[test]
    fn map_errors() {
        assert_eq!(GridMap::parse("MAP v1 3 1\n.S\n"), Err(MapError::Ragged { row: 0, found: 2, expected: 3 }));
        assert!(matches!(GridMap::parse("MAP v1 2 1\nSx\n"), Err(MapError::UnknownGlyph { glyph: 'x', .. })));
        assert_eq!(GridMap::parse("MAP v1 2 1\n..\n"), Err(MapError::ShopCount(0)));
        assert_eq!(GridMap::parse("MAP v1 3 1\nS.S\n"), Err(MapError::ShopCount(2)));
        assert!(matches!(GridMap::parse("MAP v1 3 1\nS#.\n"), Err(MapError::Disconnected(_))));
        assert_eq!(GridMap::parse("MAP v1 3 1\nS.2\n"), Err(MapError::RoomTags(1)));
        assert_eq!(GridMap::parse("MAP v2 1 1\nS\n"), Err(MapError::Header));
        assert_eq!(GridMap::parse("MAP v1 1 2\nS\n"), Err(MapError::RowCount { expected: 2, found: 1 }));
    }

    #[test]
    fn kernel_rows_sum_to_one() {
        let cfg = EnvConfig::new(GridMap::office10x14()).with_blocking_rate(0.5);
        for c in cfg.map.open_cells() {
            for m in Move::ALL {
                let total: f64 = cfg.kernel(*c, m).iter().map(|p| p.1).sum();
                assert!((total - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn wall_means_stay_on_success() {
        let m = GridMap::parse("MAP v1 3 1\nS..\n").unwrap();
        let cfg = EnvConfig::new(m).with_action_success(0.8);
        let k = cfg.kernel(Cell::new(0, 0), Move::Left);
        assert_eq!(k, vec![(Cell::new(0, 0), 0.8), (Cell::new(1, 0), 0.19999999999999996)]);
    }

    #[test]
    fn deterministic_limit() {
        let m = GridMap::parse("MAP v1 5 5\n.....\n.....\n....S\n.....\n.....\n").unwrap();
        let cfg = EnvConfig::new(m).with_action_success(1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            assert_eq!(cfg.step(Cell::new(2, 2), Move::Right, &mut rng).0, Cell::new(3, 2));
        }
    }

    #[test]
    fn anchor_is_near_centroid() {
        let m = GridMap::parse("MAP v1 3 3\nSSS\nSSS\nSSS\n").unwrap();
        assert_eq!(m.anchor(Place::Shop), Some(Cell::new(1, 1)));
        assert_eq!(m.anchor(Place::Room(1)), None);
    }

    #[test]
    fn place_names() {
        assert_eq!(Place::parse("room3"), Some(Place::Room(3)));
        assert_eq!(Place::parse("shop"), Some(Place::Shop));
        assert_eq!(Place::parse("room0"), None);
        assert_eq!(Place::Room(2).to_string(), "room2");
    }
}
