//! Navigation knowledge in the knowledge-base language.
//!
//! Cells, moves and time settings are sorts; `curr_cell`, `next_cell`,
//! `act_move` and `time` are random attributes. Learned transition
//! probabilities become pr-atoms, and the fact `known(C, M, T)` marks the
//! pairs they cover. Pairs without knowledge default to staying in place.

use std::collections::HashSet;

use crate::grid::{GridMap, KernelTable, Move, Place};
use crate::kb::{Atom, KbResult, KnowledgeBase, Literal, PrAtom, Probability, Term};
use crate::mdp::TaskMdp;
use crate::rmax::LearnedModel;
use crate::task_model::{RewardSpec, TaskSpec, TaskTable};

pub const NAV_TASK: &str = "navigation";

/// Base navigation knowledge base for `map` with the given time settings.
pub fn navigation_kb(map: &GridMap, times: &[&str]) -> KbResult<KnowledgeBase> {
    KnowledgeBase::parse(&navigation_kb_text(map, times))
}

/// Source text of [`navigation_kb`], for combining with other knowledge.
pub fn navigation_kb_text(map: &GridMap, times: &[&str]) -> String {
    let cells: Vec<String> = map.open_cells().iter().map(|c| c.to_string()).collect();
    let moves: Vec<&str> = Move::ALL.iter().map(|m| m.name()).collect();
    format!(
        "sort cell = {{{}}}.
sort move = {{{}}}.
sort time = {{{}}}.
attr curr_cell : cell.
attr next_cell : cell.
attr act_move : move.
attr time : time.
attr known(cell, move, time) : boolean.
random(curr_cell). random(next_cell). random(act_move). random(time).
pr(next_cell=C | curr_cell=C, act_move=M, time=T, not known(C, M, T)) = 1.
",
        cells.join(", "),
        moves.join(", "),
        times.join(", ")
    )
}

fn cond(map: &GridMap, s: usize, a: usize, time: &str) -> Vec<Literal> {
    let c = |attr: &str, v: String| Literal::pos(Atom { attr: attr.into(), args: vec![], value: Some(Term::Const(v)) });
    vec![
        c("curr_cell", map.cell(s).to_string()),
        c("act_move", Move::from_index(a).name().to_string()),
        c("time", time.to_string()),
    ]
}

/// Replace the transition knowledge of the given pairs under `time`.
/// `rows` yields `(state, move index, [(next state, probability)])`.
pub fn import_rows(
    kb: &KnowledgeBase,
    map: &GridMap,
    time: &str,
    rows: impl IntoIterator<Item = (usize, usize, Vec<(usize, Probability)>)>,
) -> KbResult<KnowledgeBase> {
    let rows: Vec<_> = rows.into_iter().collect();
    let conds: HashSet<Vec<Literal>> = rows.iter().map(|(s, a, _)| cond(map, *s, *a, time)).collect();
    let mut base = kb.clone();
    base.pr_atoms.retain(|p| !conds.contains(&p.condition));
    let mut atoms = Vec::new();
    for (s, a, outcomes) in rows {
        let known = Atom::ground("known", &[&map.cell(s).to_string(), Move::from_index(a).name(), time], "true");
        let known = Atom { value: None, ..known };
        if !base.facts.contains(&known) {
            base.facts.push(known);
        }
        for (t, p) in outcomes {
            atoms.push(PrAtom {
                head: Atom::ground("next_cell", &[], &map.cell(t).to_string()),
                condition: cond(map, s, a, time),
                probability: p,
            });
        }
    }
    base.with_pr_atoms(atoms)
}

/// Write every known pair of `model` into the knowledge base as exact
/// count ratios.
pub fn import_model(kb: &KnowledgeBase, map: &GridMap, model: &LearnedModel, time: &str) -> KbResult<KnowledgeBase> {
    let counts = model.counts();
    let rows = model.known_pairs().into_iter().map(|(s, a)| {
        let total = counts.total(s, a) as u64;
        let outcomes = counts.outcomes(s, a).iter().map(|(t, k)| (*t as usize, Probability::ratio(*k as u64, total))).collect();
        (s, a, outcomes)
    });
    import_rows(kb, map, time, rows)
}

/// Write an exact kernel into the knowledge base for every pair.
pub fn import_kernel(kb: &KnowledgeBase, map: &GridMap, kernel: &KernelTable, time: &str) -> KbResult<KnowledgeBase> {
    let rows = (0..map.num_states()).flat_map(|s| (0..Move::ALL.len()).map(move |a| (s, a))).map(|(s, a)| {
        let outcomes = kernel.row(s, a).iter().map(|(t, p)| (*t as usize, Probability::Decimal(*p))).collect();
        (s, a, outcomes)
    });
    import_rows(kb, map, time, rows)
}

/// Variable and action tables for the navigation task.
pub fn navigation_tables() -> (TaskTable, TaskTable) {
    let fv = TaskTable::from([(NAV_TASK.to_string(), vec!["curr_cell".to_string()])]);
    let fa = TaskTable::from([(NAV_TASK.to_string(), Move::ALL.iter().map(|m| format!("act_move={}", m.name())).collect())]);
    (fv, fa)
}

/// Navigation task spec reaching `goal`.
pub fn navigation_spec(kb: &KnowledgeBase, map: &GridMap, goal: Place, rewards: RewardSpec) -> TaskSpec {
    let (fv, fa) = navigation_tables();
    let spec = crate::task_model::select_variables(kb, NAV_TASK, &fv, &fa).expect("navigation tables match the navigation knowledge base");
    let cells = map.region(goal).iter().map(|c| c.to_string()).collect();
    TaskSpec { rewards, ..spec.with_goal(vec![("curr_cell".to_string(), cells)]) }
}

/// Transition table of a task MDP for simulation; terminal states stay put.
pub fn kernel_of(mdp: &TaskMdp) -> KernelTable {
    let rows = (0..mdp.num_states())
        .flat_map(|s| (0..mdp.num_actions()).map(move |a| (s, a)))
        .map(|(s, a)| {
            if mdp.is_terminal(s) {
                vec![(s as u32, 1.0)]
            } else {
                mdp.row(s, a).iter().map(|t| (t.next, t.prob)).collect()
            }
        })
        .collect();
    KernelTable::from_rows(rows)
}
