//! Finite MDPs with sparse transition rows, and value iteration.
//!
//! Rewards are attached to transitions. Terminal states are absorbing and
//! earn nothing further, so a goal bonus is paid on the transition into the
//! goal.

use std::fmt::Write as _;

use thiserror::Error;

/// Largest state space a task model may enumerate.
pub const MAX_STATES: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MdpError {
    #[error("row ({state}, {action}) sums to {sum}, not 1")]
    NotStochastic { state: usize, action: usize, sum: f64 },
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("state count {count} exceeds cap {cap}")]
    TooManyStates { count: usize, cap: usize },
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub next: u32,
    pub prob: f64,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskMdp {
    num_states: usize,
    num_actions: usize,
    rows: Vec<Vec<Transition>>,
    terminal: Vec<bool>,
    pub state_names: Vec<String>,
    pub action_names: Vec<String>,
}

impl TaskMdp {
    pub fn new(num_states: usize, num_actions: usize) -> TaskMdp {
        TaskMdp {
            num_states,
            num_actions,
            rows: vec![Vec::new(); num_states * num_actions],
            terminal: vec![false; num_states],
            state_names: (0..num_states).map(|s| s.to_string()).collect(),
            action_names: (0..num_actions).map(|a| a.to_string()).collect(),
        }
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn row(&self, s: usize, a: usize) -> &[Transition] {
        &self.rows[s * self.num_actions + a]
    }

    /// Set a row from `(next, prob, reward)` triples; entries with the same
    /// next state are merged and the row is kept sorted by next state.
    pub fn set_row(&mut self, s: usize, a: usize, entries: impl IntoIterator<Item = (usize, f64, f64)>) {
        let mut row: Vec<Transition> = Vec::new();
        for (next, prob, reward) in entries {
            if prob == 0.0 {
                continue;
            }
            match row.iter_mut().find(|t| t.next as usize == next) {
                Some(t) => {
                    // keep the expected reward of the merged outcome
                    let total = t.prob + prob;
                    t.reward = (t.reward * t.prob + reward * prob) / total;
                    t.prob = total;
                }
                None => row.push(Transition { next: next as u32, prob, reward }),
            }
        }
        row.sort_by_key(|t| t.next);
        self.rows[s * self.num_actions + a] = row;
    }

    pub fn set_terminal(&mut self, s: usize, terminal: bool) {
        self.terminal[s] = terminal;
    }

    pub fn is_terminal(&self, s: usize) -> bool {
        self.terminal[s]
    }

    /// Check that every non-terminal row sums to one within `tol`.
    pub fn check_stochastic(&self, tol: f64) -> Result<(), MdpError> {
        for s in (0..self.num_states).filter(|s| !self.terminal[*s]) {
            for a in 0..self.num_actions {
                let sum: f64 = self.row(s, a).iter().map(|t| t.prob).sum();
                if (sum - 1.0).abs() > tol || self.row(s, a).iter().any(|t| t.prob < 0.0) {
                    return Err(MdpError::NotStochastic { state: s, action: a, sum });
                }
            }
        }
        Ok(())
    }

    fn q(&self, v: &[f64], s: usize, a: usize, gamma: f64) -> f64 {
        self.row(s, a).iter().map(|t| t.prob * (t.reward + gamma * v[t.next as usize])).sum()
    }

    /// Action values of state `s` under `v`.
    pub fn q_values(&self, v: &[f64], s: usize, gamma: f64) -> Vec<f64> {
        (0..self.num_actions).map(|a| self.q(v, s, a, gamma)).collect()
    }

    /// Largest |T v - v| over all states.
    pub fn bellman_residual(&self, v: &[f64], gamma: f64) -> f64 {
        (0..self.num_states)
            .map(|s| {
                let best = if self.terminal[s] {
                    0.0
                } else {
                    (0..self.num_actions).map(|a| self.q(v, s, a, gamma)).fold(f64::NEG_INFINITY, f64::max)
                };
                (best - v[s]).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Value of a fixed deterministic policy, iterated to `tol`.
    pub fn evaluate(&self, actions: &[Option<usize>], gamma: f64, tol: f64) -> Vec<f64> {
        let mut v = vec![0.0; self.num_states];
        loop {
            let mut delta: f64 = 0.0;
            for s in 0..self.num_states {
                let new = match actions[s] {
                    Some(a) if !self.terminal[s] => self.q(&v, s, a, gamma),
                    _ => 0.0,
                };
                delta = delta.max((new - v[s]).abs());
                v[s] = new;
            }
            if delta < tol {
                return v;
            }
        }
    }

    /// Text form: `T s a s' prob`, `R s a s' reward`, `K s a` for every
    /// defined row and `G s` for terminal states, using state and action
    /// names.
    pub fn to_text(&self) -> String {
        let mut out = format!("MDP v1 {} {}\n", self.num_states, self.num_actions);
        for s in 0..self.num_states {
            if self.terminal[s] {
                writeln!(out, "G {}", self.state_names[s]).unwrap();
            }
        }
        for s in 0..self.num_states {
            for a in 0..self.num_actions {
                let row = self.row(s, a);
                if row.is_empty() {
                    continue;
                }
                let (sn, an) = (&self.state_names[s], &self.action_names[a]);
                writeln!(out, "K {sn} {an}").unwrap();
                for t in row {
                    writeln!(out, "T {sn} {an} {} {:?}", self.state_names[t.next as usize], t.prob).unwrap();
                }
                for t in row {
                    writeln!(out, "R {sn} {an} {} {:?}", self.state_names[t.next as usize], t.reward).unwrap();
                }
            }
        }
        out
    }

    /// Parse [`to_text`](Self::to_text) output given the state and action
    /// names.
    pub fn from_text(text: &str, state_names: Vec<String>, action_names: Vec<String>) -> Result<TaskMdp, MdpError> {
        let err = |line: usize, message: &str| MdpError::Format { line, message: message.to_string() };
        let mut mdp = TaskMdp::new(state_names.len(), action_names.len());
        let si: std::collections::HashMap<&str, usize> =
            state_names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
        let ai: std::collections::HashMap<&str, usize> =
            action_names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
        let mut probs: std::collections::BTreeMap<(usize, usize, usize), (f64, f64)> = Default::default();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let f: Vec<&str> = line.split_whitespace().collect();
            let state = |k: usize| f.get(k).and_then(|n| si.get(n).copied()).ok_or_else(|| err(line_no, "unknown state"));
            let action = |k: usize| f.get(k).and_then(|n| ai.get(n).copied()).ok_or_else(|| err(line_no, "unknown action"));
            let number = |k: usize| {
                f.get(k).and_then(|n| n.parse::<f64>().ok()).ok_or_else(|| err(line_no, "bad number"))
            };
            match f.first().copied() {
                None => {}
                Some(h) if h.starts_with('#') => {}
                Some("MDP") => {
                    if f.get(2).and_then(|n| n.parse::<usize>().ok()) != Some(state_names.len()) {
                        return Err(err(line_no, "state count mismatch"));
                    }
                }
                Some("G") => mdp.set_terminal(state(1)?, true),
                Some("K") => {
                    state(1)?;
                    action(2)?;
                }
                Some("T") => probs.entry((state(1)?, action(2)?, state(3)?)).or_default().0 = number(4)?,
                Some("R") => probs.entry((state(1)?, action(2)?, state(3)?)).or_default().1 = number(4)?,
                Some(_) => return Err(err(line_no, "unknown record")),
            }
        }
        let mut rows: std::collections::BTreeMap<(usize, usize), Vec<(usize, f64, f64)>> = Default::default();
        for ((s, a, n), (p, r)) in probs {
            rows.entry((s, a)).or_default().push((n, p, r));
        }
        for ((s, a), row) in rows {
            mdp.set_row(s, a, row);
        }
        mdp.state_names = state_names;
        mdp.action_names = action_names;
        Ok(mdp)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    /// Greedy action per state; `None` for terminal states.
    pub actions: Vec<Option<usize>>,
    pub values: Vec<f64>,
    pub sweeps: usize,
}

fn greedy(mdp: &TaskMdp, v: &[f64], s: usize, gamma: f64) -> (usize, f64) {
    let mut best = (0, mdp.q(v, s, 0, gamma));
    for a in 1..mdp.num_actions {
        let q = mdp.q(v, s, a, gamma);
        // lowest index wins ties up to rounding
        if q > best.1 + 1e-9 * best.1.abs().max(1.0) {
            best = (a, q);
        }
    }
    best
}

/// Value iteration from zero values.
pub fn value_iteration(mdp: &TaskMdp, gamma: f64, epsilon: f64) -> Result<Policy, MdpError> {
    value_iteration_from(mdp, gamma, epsilon, None)
}

/// Value iteration with optional initial values.
///
/// Sweeps in place until the largest change is below
/// `min(epsilon, epsilon * (1 - gamma) / (2 * gamma))`, which leaves the
/// values within `epsilon / 2` of optimal.
pub fn value_iteration_from(
    mdp: &TaskMdp,
    gamma: f64,
    epsilon: f64,
    init: Option<&[f64]>,
) -> Result<Policy, MdpError> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(MdpError::Parameter(format!("gamma {gamma} not in (0,1)")));
    }
    if !(epsilon > 0.0) {
        return Err(MdpError::Parameter(format!("epsilon {epsilon} not positive")));
    }
    if mdp.num_actions == 0 && (0..mdp.num_states).any(|s| !mdp.terminal[s]) {
        return Err(MdpError::Parameter("no actions".into()));
    }
    mdp.check_stochastic(1e-9)?;
    let threshold = (epsilon * (1.0 - gamma) / (2.0 * gamma)).min(epsilon);
    let mut v = match init {
        Some(init) if init.len() == mdp.num_states => init.to_vec(),
        _ => vec![0.0; mdp.num_states],
    };
    for s in 0..mdp.num_states {
        if mdp.terminal[s] {
            v[s] = 0.0;
        }
    }
    let mut sweeps = 0;
    loop {
        sweeps += 1;
        let mut delta: f64 = 0.0;
        for s in 0..mdp.num_states {
            if mdp.terminal[s] {
                continue;
            }
            let (_, q) = greedy(mdp, &v, s, gamma);
            delta = delta.max((q - v[s]).abs());
            v[s] = q;
        }
        if delta < threshold {
            break;
        }
    }
    let actions = (0..mdp.num_states)
        .map(|s| (!mdp.terminal[s]).then(|| greedy(mdp, &v, s, gamma).0))
        .collect();
    Ok(Policy { actions, values: v, sweeps })
}
