//! Console dialog: the robot asks, a person types answers, and the belief
//! marginals are shown after every turn.

use std::io::{BufRead, Write};

use super::delivery_table::DeliverySetup;
use super::{num, ExperimentConfig, HarnessError, Table};
use crate::dialog::{Belief, DialogAction, DialogDomain, DialogSession, Dimension};

const DIMENSIONS: [Dimension; 3] = [Dimension::Item, Dimension::Room, Dimension::Person];

fn io(e: std::io::Error) -> HarnessError {
    HarnessError::Io(e.to_string())
}

fn action_label(domain: &DialogDomain, a: DialogAction) -> String {
    match a {
        DialogAction::Ask(d) => format!("ask {}", d.name()),
        DialogAction::Confirm(d, v) => format!("confirm {}={}", d.name(), domain.values(d)[v]),
        DialogAction::Serve(r) => format!("serve {}", domain.describe(r)),
    }
}

fn record(table: &mut Table, domain: &DialogDomain, turn: usize, action: &str, answer: &str, b: &Belief) {
    for d in DIMENSIONS {
        for (v, p) in domain.values(d).iter().zip(b.marginal(domain, d)) {
            table.push(vec![turn.to_string(), action.into(), answer.into(), d.name().into(), v.clone(), num(p)]);
        }
    }
}

fn show(out: &mut impl Write, domain: &DialogDomain, b: &Belief) -> Result<(), HarnessError> {
    for d in DIMENSIONS {
        let cells: Vec<String> =
            domain.values(d).iter().zip(b.marginal(domain, d)).map(|(v, p)| format!("{v} {p:.3}")).collect();
        writeln!(out, "  {:<7}{}", d.name(), cells.join("  ")).map_err(io)?;
    }
    Ok(())
}

/// Run one dialog against typed answers. Unparseable answers are asked
/// again. Returns the per-turn marginals as a table.
pub fn run_repl(cfg: &ExperimentConfig, input: &mut impl BufRead, out: &mut impl Write) -> Result<Table, HarnessError> {
    cfg.validate()?;
    let setup = DeliverySetup::from_config(cfg)?;
    let seed = *cfg.seeds.first().ok_or_else(|| HarnessError::Config("no seed".into()))?;
    let br = cfg.f64("repl.br")?;
    writeln!(out, "preparing the robot (br={br}, seed={seed})...").map_err(io)?;
    let agent = setup.agent(br, seed)?;
    let domain = &agent.domain;
    let s = &agent.settings;
    let mut session = DialogSession::new(&agent.policy, agent.prior.clone(), s.obs, s.dialog.clone());
    let mut table = Table::new("dialog_repl", &["turn", "action", "answer", "dimension", "value", "probability"]);
    writeln!(out, "turn 0 belief:").map_err(io)?;
    show(out, domain, &session.belief)?;
    record(&mut table, domain, 0, "start", "", &session.belief);
    loop {
        let a = session.next_action();
        writeln!(out, "robot: {}", session.prompt(a)).map_err(io)?;
        if let DialogAction::Serve(_) = a {
            writeln!(out, "qa cost {:.1} over {} questions", session.qa_cost, session.turn).map_err(io)?;
            record(&mut table, domain, session.turn + 1, &action_label(domain, a), "", &session.belief);
            return Ok(table);
        }
        let answer = loop {
            write!(out, "> ").map_err(io)?;
            out.flush().map_err(io)?;
            let mut line = String::new();
            if input.read_line(&mut line).map_err(io)? == 0 {
                return Err(HarnessError::Run("input ended before the robot served".into()));
            }
            match session.parse_answer(a, &line) {
                Ok(o) => break (line.trim().to_string(), o),
                Err(e) => writeln!(out, "{e}").map_err(io)?,
            }
        };
        session.observe(a, answer.1).map_err(|e| HarnessError::Run(e.to_string()))?;
        writeln!(out, "turn {} belief:", session.turn).map_err(io)?;
        show(out, domain, &session.belief)?;
        record(&mut table, domain, session.turn, &action_label(domain, a), &answer.0, &session.belief);
    }
}
