//! Task-oriented MDPs built by querying a knowledge base.
//!
//! A task names its endogenous variables (the MDP state), its actions, and
//! a goal. Every other random variable of the knowledge base that is not a
//! successor or action variable is exogenous and gets marginalized out
//! under a belief over its values.
//!
//! Successor variables follow a naming convention: the successor of
//! `curr_x` is `next_x`, and of any other `v` it is `next_v`.

use std::collections::{BTreeMap, HashSet};

use thiserror::Error;

use crate::kb::{parse_literal, Atom, KbError, KnowledgeBase, Literal, Term};
use crate::mdp::{TaskMdp, MAX_STATES};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TaskModelError {
    #[error("unknown task `{0}`")]
    UnknownTask(String),
    #[error("task `{task}` lists `{var}` as both endogenous and exogenous or twice")]
    Overlap { task: String, var: String },
    #[error("task `{0}` has no actions")]
    NoActions(String),
    #[error("`{0}` is not a random attribute of the knowledge base")]
    UnknownVariable(String),
    #[error("exogenous belief is invalid: {0}")]
    Belief(String),
    #[error("state count {count} exceeds cap {cap}")]
    TooManyStates { count: usize, cap: usize },
    #[error("knowledge base: {0}")]
    Kb(#[from] KbError),
}

impl TaskModelError {
    /// Errors that come from exceeding a size limit rather than bad input.
    pub fn is_resource(&self) -> bool {
        match self {
            TaskModelError::TooManyStates { .. } => true,
            TaskModelError::Kb(e) => e.is_resource(),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardSpec {
    pub step: f64,
    /// Paid on the transition that enters a goal state.
    pub goal_bonus: f64,
}

impl Default for RewardSpec {
    fn default() -> Self {
        RewardSpec { step: -1.0, goal_bonus: 100.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskSpec {
    pub task_id: String,
    pub endogenous: Vec<String>,
    pub exogenous: Vec<String>,
    /// Each action is the literal it asserts, e.g. `act_move=up`.
    pub actions: Vec<String>,
    /// A state is a goal when every listed variable takes one of its
    /// listed values. An empty list means no goal.
    pub goal: Vec<(String, Vec<String>)>,
    pub rewards: RewardSpec,
}

impl TaskSpec {
    pub fn with_goal(mut self, goal: Vec<(String, Vec<String>)>) -> TaskSpec {
        self.goal = goal;
        self
    }
}

/// Task id to variable names (f^V) or action literals (f^A).
pub type TaskTable = BTreeMap<String, Vec<String>>;

/// Assignment of values to exogenous variables.
pub type ExoAssignment = Vec<(String, String)>;

pub fn successor_name(var: &str) -> String {
    match var.strip_prefix("curr_") {
        Some(rest) => format!("next_{rest}"),
        None => format!("next_{var}"),
    }
}

/// Split the knowledge base's variables for task `task_id`.
pub fn select_variables(
    kb: &KnowledgeBase,
    task_id: &str,
    fv_table: &TaskTable,
    fa_table: &TaskTable,
) -> Result<TaskSpec, TaskModelError> {
    let endogenous = fv_table.get(task_id).ok_or_else(|| TaskModelError::UnknownTask(task_id.to_string()))?.clone();
    let actions = fa_table.get(task_id).ok_or_else(|| TaskModelError::UnknownTask(task_id.to_string()))?.clone();
    if actions.is_empty() {
        return Err(TaskModelError::NoActions(task_id.to_string()));
    }
    let random: HashSet<&str> =
        kb.attributes.iter().filter(|a| a.is_random && a.arg_sorts.is_empty()).map(|a| a.name.as_str()).collect();
    let mut seen = HashSet::new();
    for v in &endogenous {
        if !random.contains(v.as_str()) {
            return Err(TaskModelError::UnknownVariable(v.clone()));
        }
        if !seen.insert(v.clone()) {
            return Err(TaskModelError::Overlap { task: task_id.to_string(), var: v.clone() });
        }
    }
    let mut excluded: HashSet<String> = endogenous.iter().map(|v| successor_name(v)).collect();
    for a in &actions {
        if let Ok(l) = parse_literal(a) {
            excluded.insert(l.atom.attr);
        }
    }
    let exogenous: Vec<String> = kb
        .attributes
        .iter()
        .filter(|a| a.is_random && a.arg_sorts.is_empty())
        .map(|a| a.name.clone())
        .filter(|n| !seen.contains(n) && !excluded.contains(n))
        .collect();
    Ok(TaskSpec {
        task_id: task_id.to_string(),
        endogenous,
        exogenous,
        actions,
        goal: Vec::new(),
        rewards: RewardSpec::default(),
    })
}

fn lit(attr: &str, value: &str) -> Literal {
    Literal::pos(Atom { attr: attr.to_string(), args: Vec::new(), value: Some(Term::Const(value.to_string())) })
}

/// Build the task MDP, mixing transition models over `exo_belief`.
pub fn construct_task_mdp(
    kb: &KnowledgeBase,
    spec: &TaskSpec,
    exo_belief: &[(ExoAssignment, f64)],
) -> Result<TaskMdp, TaskModelError> {
    if spec.actions.is_empty() {
        return Err(TaskModelError::NoActions(spec.task_id.clone()));
    }
    let total: f64 = exo_belief.iter().map(|b| b.1).sum();
    if exo_belief.is_empty() || (total - 1.0).abs() > 1e-9 || exo_belief.iter().any(|b| !(b.1 >= 0.0)) {
        return Err(TaskModelError::Belief(format!("weights sum to {total}")));
    }
    for (x, _) in exo_belief {
        for (var, _) in x {
            if !spec.exogenous.contains(var) {
                return Err(TaskModelError::UnknownVariable(var.clone()));
            }
        }
    }
    let g = kb.ground()?;
    let ranges: Vec<Vec<String>> = spec.endogenous.iter().map(|v| g.range(v)).collect::<Result<_, _>>()?;
    let count = ranges.iter().try_fold(1usize, |acc, r| acc.checked_mul(r.len())).unwrap_or(usize::MAX);
    if count > MAX_STATES {
        return Err(TaskModelError::TooManyStates { count, cap: MAX_STATES });
    }
    let actions: Vec<Literal> = spec.actions.iter().map(|a| parse_literal(a)).collect::<Result<_, _>>()?;
    let next_terms: Vec<Atom> = spec
        .endogenous
        .iter()
        .map(|v| Atom { attr: successor_name(v), args: Vec::new(), value: None })
        .collect();
    let decode = |mut s: usize| {
        let mut idx = vec![0; ranges.len()];
        for (i, r) in ranges.iter().enumerate().rev() {
            idx[i] = s % r.len();
            s /= r.len();
        }
        idx
    };
    let goal_sets: Vec<(usize, HashSet<&str>)> = spec
        .goal
        .iter()
        .map(|(var, vals)| {
            let i = spec.endogenous.iter().position(|v| v == var).ok_or_else(|| TaskModelError::UnknownVariable(var.clone()))?;
            Ok((i, vals.iter().map(String::as_str).collect()))
        })
        .collect::<Result<_, TaskModelError>>()?;
    let is_goal: Vec<bool> = (0..count)
        .map(|s| {
            let idx = decode(s);
            !goal_sets.is_empty() && goal_sets.iter().all(|(i, vals)| vals.contains(ranges[*i][idx[*i]].as_str()))
        })
        .collect();

    let mut mdp = TaskMdp::new(count, actions.len());
    mdp.state_names = (0..count)
        .map(|s| decode(s).iter().enumerate().map(|(i, k)| ranges[i][*k].as_str()).collect::<Vec<_>>().join(","))
        .collect();
    mdp.action_names = spec.actions.clone();
    let mut row = vec![0.0; count];
    for s in 0..count {
        if is_goal[s] {
            mdp.set_terminal(s, true);
            continue;
        }
        let idx = decode(s);
        let state_lits: Vec<Literal> =
            spec.endogenous.iter().zip(&idx).zip(&ranges).map(|((v, k), r)| lit(v, &r[*k])).collect();
        for (a, action) in actions.iter().enumerate() {
            row.iter_mut().for_each(|p| *p = 0.0);
            for (x, weight) in exo_belief.iter().filter(|b| b.1 > 0.0) {
                let mut evidence = state_lits.clone();
                evidence.push(action.clone());
                evidence.extend(x.iter().map(|(v, val)| lit(v, val)));
                let dist = g.distribution(&next_terms, &evidence)?;
                for (p, d) in row.iter_mut().zip(dist) {
                    *p += weight * d;
                }
            }
            let sum: f64 = row.iter().sum();
            let entries = row.iter().enumerate().filter(|(_, p)| **p > 0.0).map(|(t, p)| {
                let bonus = if is_goal[t] { spec.rewards.goal_bonus } else { 0.0 };
                (t, p / sum, spec.rewards.step + bonus)
            });
            mdp.set_row(s, a, entries.collect::<Vec<_>>());
        }
    }
    Ok(mdp)
}

/// The task MDP under a uniform belief over `settings`.
pub fn merge_settings(kb: &KnowledgeBase, spec: &TaskSpec, settings: &[ExoAssignment]) -> Result<TaskMdp, TaskModelError> {
    if settings.is_empty() {
        return Err(TaskModelError::Belief("no candidate settings".into()));
    }
    let w = 1.0 / settings.len() as f64;
    let belief: Vec<(ExoAssignment, f64)> = settings.iter().map(|s| (s.clone(), w)).collect();
    construct_task_mdp(kb, spec, &belief)
}
