//! R-Max model-based learning of grid navigation dynamics.
//!
//! A state-action pair becomes *known* once it has `m_min` samples. Planning
//! uses the empirical model for known pairs and sends every unknown pair to a
//! fictitious absorbing state paying `r_max` forever, which makes unexplored
//! pairs exactly as attractive as the goal.

use std::fmt::Write as _;

use rand::Rng;
use thiserror::Error;

use crate::grid::{Cell, EnvConfig, GridMap, KernelTable, Move, Place};
use crate::mdp::{value_iteration_from, MdpError, Policy, TaskMdp};

#[derive(Debug, Clone, PartialEq)]
pub struct RMaxConfig {
    pub m_min: u32,
    pub replan_interval: usize,
    pub r_max: f64,
    pub step_cost: f64,
    pub gamma: f64,
    pub vi_epsilon: f64,
    /// End learning once the policy has converged instead of spending the
    /// whole episode budget.
    pub stop_on_convergence: bool,
}

impl Default for RMaxConfig {
    fn default() -> Self {
        RMaxConfig {
            m_min: 10,
            replan_interval: 50,
            r_max: 100.0,
            step_cost: -1.0,
            gamma: 0.95,
            vi_epsilon: 1e-6,
            stop_on_convergence: false,
        }
    }
}

impl RMaxConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.m_min < 1 {
            return Err("m_min must be at least 1".into());
        }
        if self.replan_interval < 1 {
            return Err("replan_interval must be at least 1".into());
        }
        if !(self.r_max > 0.0) {
            return Err("r_max must be positive".into());
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err("gamma must be in (0,1)".into());
        }
        if !(self.vi_epsilon > 0.0) {
            return Err("vi_epsilon must be positive".into());
        }
        Ok(())
    }
}

/// Visit counts per (state, action, next state).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransitionCounts {
    num_states: usize,
    num_actions: usize,
    next: Vec<Vec<(u32, u32)>>,
    totals: Vec<u32>,
}

impl TransitionCounts {
    pub fn new(num_states: usize, num_actions: usize) -> TransitionCounts {
        TransitionCounts {
            num_states,
            num_actions,
            next: vec![Vec::new(); num_states * num_actions],
            totals: vec![0; num_states * num_actions],
        }
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn record(&mut self, s: usize, a: usize, next: usize) {
        self.add(s, a, next, 1);
    }

    fn add(&mut self, s: usize, a: usize, next: usize, n: u32) {
        let i = s * self.num_actions + a;
        let row = &mut self.next[i];
        match row.binary_search_by_key(&(next as u32), |e| e.0) {
            Ok(k) => row[k].1 += n,
            Err(k) => row.insert(k, (next as u32, n)),
        }
        self.totals[i] += n;
    }

    pub fn total(&self, s: usize, a: usize) -> u32 {
        self.totals[s * self.num_actions + a]
    }

    pub fn count(&self, s: usize, a: usize, next: usize) -> u32 {
        let row = &self.next[s * self.num_actions + a];
        row.binary_search_by_key(&(next as u32), |e| e.0).map_or(0, |k| row[k].1)
    }

    /// `(next, count)` pairs sorted by next state.
    pub fn outcomes(&self, s: usize, a: usize) -> &[(u32, u32)] {
        &self.next[s * self.num_actions + a]
    }

    pub fn is_known(&self, s: usize, a: usize, m_min: u32) -> bool {
        self.total(s, a) >= m_min
    }

    /// Empirical next-state distribution; empty if never tried.
    pub fn t_hat(&self, s: usize, a: usize) -> Vec<(u32, f64)> {
        let total = self.total(s, a) as f64;
        self.outcomes(s, a).iter().map(|(n, c)| (*n, *c as f64 / total)).collect()
    }

    pub fn known_pairs(&self, m_min: u32) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.num_states)
            .flat_map(move |s| (0..self.num_actions).map(move |a| (s, a)))
            .filter(move |(s, a)| self.is_known(*s, *a, m_min))
    }

    /// Copy of these counts keeping only known pairs.
    pub fn restrict_to_known(&self, m_min: u32) -> TransitionCounts {
        let mut out = TransitionCounts::new(self.num_states, self.num_actions);
        for (s, a) in self.known_pairs(m_min) {
            let i = s * self.num_actions + a;
            out.next[i] = self.next[i].clone();
            out.totals[i] = self.totals[i];
        }
        out
    }
}

/// A navigation task between two named regions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NavTask {
    pub start: Place,
    pub goal: Place,
}

impl std::fmt::Display for NavTask {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}->{}", self.start, self.goal)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("model was learned on map {found}, expected {expected}")]
    MapMismatch { expected: String, found: String },
    #[error("{0} is not a region of the map")]
    UnknownPlace(Place),
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error(transparent)]
    Mdp(#[from] MdpError),
}

/// The known part of a learned world model.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnedModel {
    pub map_hash: String,
    pub task: NavTask,
    pub m_min: u32,
    counts: TransitionCounts,
}

impl LearnedModel {
    pub fn empty(map: &GridMap, task: NavTask, m_min: u32) -> LearnedModel {
        LearnedModel {
            map_hash: map.hash(),
            task,
            m_min,
            counts: TransitionCounts::new(map.num_states(), Move::ALL.len()),
        }
    }

    /// Keep only the known pairs of `counts`.
    pub fn from_counts(map: &GridMap, task: NavTask, m_min: u32, counts: &TransitionCounts) -> LearnedModel {
        LearnedModel { map_hash: map.hash(), task, m_min, counts: counts.restrict_to_known(m_min) }
    }

    pub fn counts(&self) -> &TransitionCounts {
        &self.counts
    }

    pub fn is_known(&self, s: usize, a: usize) -> bool {
        self.counts.is_known(s, a, self.m_min)
    }

    pub fn known_pairs(&self) -> Vec<(usize, usize)> {
        self.counts.known_pairs(self.m_min).collect()
    }

    pub fn t_hat(&self, s: usize, a: usize) -> Vec<(u32, f64)> {
        if self.is_known(s, a) {
            self.counts.t_hat(s, a)
        } else {
            Vec::new()
        }
    }

    /// Reuse this model for another task on the same map.
    pub fn extract_partial_model(&self, map: &GridMap, new_task: NavTask) -> Result<LearnedModel, ModelError> {
        if map.hash() != self.map_hash {
            return Err(ModelError::MapMismatch { expected: map.hash(), found: self.map_hash.clone() });
        }
        for p in [new_task.start, new_task.goal] {
            if !map.has_place(p) {
                return Err(ModelError::UnknownPlace(p));
            }
        }
        Ok(LearnedModel { task: new_task, ..self.clone() })
    }

    /// Transition table for planning: known pairs use the empirical
    /// distribution and unknown pairs stay put.
    pub fn kernel_table(&self) -> KernelTable {
        let n = self.counts.num_states();
        let rows = (0..n)
            .flat_map(|s| (0..Move::ALL.len()).map(move |a| (s, a)))
            .map(|(s, a)| {
                if self.is_known(s, a) {
                    self.counts.t_hat(s, a)
                } else {
                    vec![(s as u32, 1.0)]
                }
            })
            .collect();
        KernelTable::from_rows(rows)
    }

    /// Line format: a `# map=<hash> task=<start>-><goal> m_min=<m>` header,
    /// then `K s a` and `T s a s' count/total` records with cell and move
    /// names.
    pub fn to_text(&self, map: &GridMap) -> String {
        let mut out = format!("# map={} task={} m_min={}\n", self.map_hash, self.task, self.m_min);
        for (s, a) in self.known_pairs() {
            let (c, m) = (map.cell(s), Move::from_index(a));
            writeln!(out, "K {c} {m}").unwrap();
            let total = self.counts.total(s, a);
            for (n, k) in self.counts.outcomes(s, a) {
                writeln!(out, "T {c} {m} {} {k}/{total}", map.cell(*n as usize)).unwrap();
            }
        }
        out
    }

    pub fn from_text(text: &str, map: &GridMap) -> Result<LearnedModel, ModelError> {
        let err = |line: usize, message: String| ModelError::Format { line, message };
        let cells: std::collections::HashMap<String, usize> =
            map.open_cells().iter().enumerate().map(|(i, c)| (c.to_string(), i)).collect();
        let mut header: Option<(String, NavTask, u32)> = None;
        let mut counts = TransitionCounts::new(map.num_states(), Move::ALL.len());
        let mut known = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let ln = i + 1;
            let f: Vec<&str> = line.split_whitespace().collect();
            let cell = |k: usize| {
                f.get(k).and_then(|n| cells.get(*n).copied()).ok_or_else(|| err(ln, "unknown cell".into()))
            };
            let mv = |k: usize| {
                f.get(k).and_then(|n| Move::parse(n)).map(Move::index).ok_or_else(|| err(ln, "unknown move".into()))
            };
            match f.first().copied() {
                None => {}
                Some("#") if header.is_none() => header = Some(parse_header(&f[1..]).ok_or_else(|| err(ln, "bad header".into()))?),
                Some(h) if h.starts_with('#') => {}
                Some("K") => known.push((cell(1)?, mv(2)?)),
                Some("T") => {
                    let (s, a, n) = (cell(1)?, mv(2)?, cell(3)?);
                    let ratio = f.get(4).and_then(|r| r.split_once('/')).ok_or_else(|| err(ln, "expected count/total".into()))?;
                    let k: u32 = ratio.0.parse().map_err(|_| err(ln, "bad count".into()))?;
                    counts.add(s, a, n, k);
                }
                Some(other) => return Err(err(ln, format!("unknown record `{other}`"))),
            }
        }
        let (hash, task, m_min) = header.ok_or_else(|| err(1, "missing header".into()))?;
        if hash != map.hash() {
            return Err(ModelError::MapMismatch { expected: map.hash(), found: hash });
        }
        for (s, a) in known {
            if !counts.is_known(s, a, m_min) {
                return Err(err(0, format!("pair ({}, {}) listed as known with too few samples", map.cell(s), Move::from_index(a))));
            }
        }
        Ok(LearnedModel { map_hash: hash, task, m_min, counts })
    }
}

fn parse_header(fields: &[&str]) -> Option<(String, NavTask, u32)> {
    let mut hash = None;
    let mut task = None;
    let mut m_min = None;
    for f in fields {
        let (k, v) = f.split_once('=')?;
        match k {
            "map" => hash = Some(v.to_string()),
            "task" => {
                let (s, g) = v.split_once("->")?;
                task = Some(NavTask { start: Place::parse(s)?, goal: Place::parse(g)? });
            }
            "m_min" => m_min = v.parse().ok(),
            _ => {}
        }
    }
    Some((hash?, task?, m_min?))
}

/// Optimistic planning MDP over the map states plus one fictitious state
/// (the last index).
pub fn build_optimistic_mdp(counts: &TransitionCounts, cfg: &RMaxConfig, goal: &[usize]) -> TaskMdp {
    let n = counts.num_states();
    let na = counts.num_actions();
    let fict = n;
    let mut mdp = TaskMdp::new(n + 1, na);
    let mut is_goal = vec![false; n];
    for g in goal {
        is_goal[*g] = true;
    }
    for s in 0..n {
        for a in 0..na {
            if is_goal[s] {
                mdp.set_row(s, a, [(s, 1.0, cfg.r_max)]);
            } else if counts.is_known(s, a, cfg.m_min) {
                let row: Vec<(usize, f64, f64)> =
                    counts.t_hat(s, a).into_iter().map(|(t, p)| (t as usize, p, cfg.step_cost)).collect();
                mdp.set_row(s, a, row);
            } else {
                mdp.set_row(s, a, [(fict, 1.0, cfg.r_max)]);
            }
        }
    }
    for a in 0..na {
        mdp.set_row(fict, a, [(fict, 1.0, cfg.r_max)]);
    }
    mdp
}

/// Planning MDP for a learned model: known pairs use the empirical model,
/// unknown pairs stay put, and entering the goal pays `goal_reward`.
pub fn goal_mdp(kernel: &KernelTable, goal: &[usize], step_cost: f64, goal_reward: f64) -> TaskMdp {
    let n = kernel.num_states();
    let mut is_goal = vec![false; n];
    for g in goal {
        is_goal[*g] = true;
    }
    let mut mdp = TaskMdp::new(n, Move::ALL.len());
    for s in 0..n {
        if is_goal[s] {
            mdp.set_terminal(s, true);
            continue;
        }
        for a in 0..Move::ALL.len() {
            let row = kernel.row(s, a).iter().map(|(t, p)| {
                let r = if is_goal[*t as usize] { step_cost + goal_reward } else { step_cost };
                (*t as usize, *p, r)
            });
            mdp.set_row(s, a, row.collect::<Vec<_>>());
        }
    }
    mdp
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeRecord {
    pub steps: usize,
    pub reached: bool,
    /// Sum of step costs.
    pub step_reward: f64,
    /// `+r_max` on success, `-r_max` on timeout.
    pub terminal_reward: f64,
}

impl EpisodeRecord {
    pub fn reward(&self) -> f64 {
        self.step_reward + self.terminal_reward
    }
}

#[derive(Debug, Clone)]
pub struct LearningRun {
    pub model: LearnedModel,
    /// Full counts, including pairs that are not yet known.
    pub counts: TransitionCounts,
    pub curve: Vec<EpisodeRecord>,
    /// Episode index at which the policy was first stable across three
    /// consecutive replans.
    pub converged_at: Option<usize>,
    pub replans: usize,
}

/// Options of a single learning run beyond the R-Max parameters.
#[derive(Debug, Clone, Copy)]
pub struct LearnOptions {
    pub episodes: usize,
    pub max_steps: usize,
}

pub(crate) struct Planner {
    values: Option<Vec<f64>>,
    last: Vec<Option<usize>>,
    stable: usize,
    pub replans: usize,
}

impl Planner {
    pub fn new() -> Planner {
        Planner { values: None, last: Vec::new(), stable: 0, replans: 0 }
    }

    /// Replan; returns the greedy policy and whether it matched the last
    /// two plans.
    pub fn plan(&mut self, counts: &TransitionCounts, cfg: &RMaxConfig, goal: &[usize]) -> (Policy, bool) {
        let mdp = build_optimistic_mdp(counts, cfg, goal);
        let policy = value_iteration_from(&mdp, cfg.gamma, cfg.vi_epsilon, self.values.as_deref())
            .expect("optimistic model is stochastic");
        self.replans += 1;
        if policy.actions == self.last {
            self.stable += 1;
        } else {
            self.stable = 1;
            self.last = policy.actions.clone();
        }
        self.values = Some(policy.values.clone());
        (policy, self.stable >= 3)
    }
}

/// Learn `task` by R-Max in `env`, optionally seeded by an earlier model.
pub fn learn_navigation_task<R: Rng + ?Sized>(
    env: &EnvConfig,
    task: NavTask,
    cfg: &RMaxConfig,
    init: Option<&LearnedModel>,
    opts: LearnOptions,
    rng: &mut R,
) -> Result<LearningRun, ModelError> {
    let map = &env.map;
    let mut counts = match init {
        Some(m) => {
            if m.map_hash != map.hash() {
                return Err(ModelError::MapMismatch { expected: map.hash(), found: m.map_hash.clone() });
            }
            m.counts.restrict_to_known(m.m_min)
        }
        None => TransitionCounts::new(map.num_states(), Move::ALL.len()),
    };
    learn_with_counts(env, task, cfg, &mut counts, opts, rng).map(|(curve, converged_at, replans)| LearningRun {
        model: LearnedModel::from_counts(map, task, cfg.m_min, &counts),
        counts,
        curve,
        converged_at,
        replans,
    })
}

/// R-Max episodes that keep adding to `counts`.
pub(crate) fn learn_with_counts<R: Rng + ?Sized>(
    env: &EnvConfig,
    task: NavTask,
    cfg: &RMaxConfig,
    counts: &mut TransitionCounts,
    opts: LearnOptions,
    rng: &mut R,
) -> Result<(Vec<EpisodeRecord>, Option<usize>, usize), ModelError> {
    let map = &env.map;
    let start = map.anchor(task.start).ok_or(ModelError::UnknownPlace(task.start))?;
    let goal_cells = map.region(task.goal);
    if goal_cells.is_empty() {
        return Err(ModelError::UnknownPlace(task.goal));
    }
    let goal: Vec<usize> = goal_cells.iter().map(|c| map.state(*c).unwrap()).collect();
    let mut is_goal = vec![false; map.num_states()];
    for g in &goal {
        is_goal[*g] = true;
    }
    let table = env.kernel_table();
    let mut planner = Planner::new();
    let mut curve = Vec::with_capacity(opts.episodes);
    let mut converged_at = None;
    for episode in 0..opts.episodes {
        let (mut policy, converged) = planner.plan(counts, cfg, &goal);
        if converged && converged_at.is_none() {
            converged_at = Some(episode);
            if cfg.stop_on_convergence {
                break;
            }
        }
        let mut s = map.state(start).unwrap();
        let mut steps = 0;
        let mut since = 0;
        while !is_goal[s] && steps < opts.max_steps {
            let a = policy.actions[s].expect("non-terminal state has an action");
            let next = table.sample(s, a, rng);
            counts.record(s, a, next);
            s = next;
            steps += 1;
            since += 1;
            if since >= cfg.replan_interval && !is_goal[s] {
                let (p, converged) = planner.plan(counts, cfg, &goal);
                policy = p;
                since = 0;
                if converged && converged_at.is_none() {
                    converged_at = Some(episode);
                }
            }
        }
        let reached = is_goal[s];
        curve.push(EpisodeRecord {
            steps,
            reached,
            step_reward: steps as f64 * cfg.step_cost,
            terminal_reward: if reached { cfg.r_max } else { -cfg.r_max },
        });
    }
    Ok((curve, converged_at, planner.replans))
}

/// Greedy navigation policy for a learned model, as a map from state to
/// move index.
pub fn model_policy(model: &LearnedModel, map: &GridMap, goal: Place, cfg: &RMaxConfig) -> Result<Vec<Option<usize>>, ModelError> {
    if !map.has_place(goal) {
        return Err(ModelError::UnknownPlace(goal));
    }
    let goal: Vec<usize> = map.region(goal).iter().map(|c| map.state(*c).unwrap()).collect();
    let mdp = goal_mdp(&model.kernel_table(), &goal, cfg.step_cost, cfg.r_max);
    Ok(value_iteration_from(&mdp, cfg.gamma, cfg.vi_epsilon, None)?.actions)
}

/// Start cell of a place, for callers that need one.
pub fn start_cell(map: &GridMap, p: Place) -> Result<Cell, ModelError> {
    map.anchor(p).ok_or(ModelError::UnknownPlace(p))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_and_threshold() {
        let mut c = TransitionCounts::new(3, 4);
        c.record(0, 1, 2);
        assert_eq!(c.total(0, 1), 1);
        for _ in 0..3 {
            c.record(0, 1, 2);
        }
        assert!(!c.is_known(0, 1, 5));
        c.record(0, 1, 2);
        assert!(c.is_known(0, 1, 5));
        assert_eq!(c.t_hat(0, 1), vec![(2, 1.0)]);
    }

    #[test]
    fn zero_counts_route_everything_to_fictitious_state() {
        let c = TransitionCounts::new(4, 4);
        let mdp = build_optimistic_mdp(&c, &RMaxConfig::default(), &[3]);
        for s in 0..3 {
            for a in 0..4 {
                assert_eq!(mdp.row(s, a).len(), 1);
                assert_eq!(mdp.row(s, a)[0].next, 4);
            }
        }
        mdp.check_stochastic(1e-9).unwrap();
    }

    #[test]
    fn header_round_trip() {
        let h = parse_header(&["map=abc", "task=shop->room2", "m_min=3"]).unwrap();
        assert_eq!(h, ("abc".to_string(), NavTask { start: Place::Shop, goal: Place::Room(2) }, 3));
    }
}
