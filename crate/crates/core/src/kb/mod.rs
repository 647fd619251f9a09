//! A small probabilistic logic language in the style of P-log.
//!
//! A knowledge base declares sorts, attributes over sorts, rules, facts and
//! pr-atoms giving causal probabilities for random attributes. Queries are
//! answered exactly by enumerating possible worlds.
//!
//! ```
//! use krrl_core::kb::KnowledgeBase;
//!
//! let kb = KnowledgeBase::parse(
//!     "sort room = {r1, r2, r3, r4, r5}.
//!      attr curr_room : room.
//!      random(curr_room).
//!      pr(curr_room=r1) = 8/10.",
//! )
//! .unwrap();
//! let p = kb.query_str("curr_room=r2", &[]).unwrap();
//! assert!((p - 0.05).abs() < 1e-12);
//! ```
//!
//! Supported subset:
//! - rules are definite, with negation only on attributes defined by facts;
//! - `attr = false` on a derived boolean attribute is allowed only in
//!   pr-atom conditions;
//! - `:- body.` is a constraint that excludes every world satisfying `body`;
//! - mass not declared by pr-atoms is shared uniformly by undeclared values;
//!   if every value is declared, or the declared mass is one up to rounding,
//!   the declared masses are renormalized, and a
//!   declared total of zero leaves the values uniform;
//! - when several pr-atoms give the same value, the one with the most
//!   condition literals applies, and later declarations win ties.

mod ast;
mod error;
mod ground;
mod infer;
mod syntax;
mod validate;

use std::collections::HashMap;

pub use ast::*;
pub use error::{KbError, KbResult, Pos};
pub use ground::{ground, GroundedProgram, GroundingLimits};
pub use infer::{PossibleWorld, DEFAULT_WORLD_CAP};
pub use syntax::parse_literal;

impl KnowledgeBase {
    /// Parse and validate knowledge-base source text.
    pub fn parse(text: &str) -> KbResult<KnowledgeBase> {
        validate::build(syntax::parse_statements(text)?)
    }

    /// Check the referential and typing invariants.
    pub fn validate(&self) -> KbResult<()> {
        validate::validate(self, None)
    }

    pub fn ground(&self) -> KbResult<GroundedProgram> {
        ground(self, &GroundingLimits::default())
    }

    pub fn query(&self, target: &Literal, evidence: &[Literal]) -> KbResult<f64> {
        self.ground()?.query(target, evidence)
    }

    /// [`query`](Self::query) with literals given as source text.
    pub fn query_str(&self, target: &str, evidence: &[&str]) -> KbResult<f64> {
        let target = parse_literal(target)?;
        let evidence: Vec<Literal> = evidence.iter().map(|e| parse_literal(e)).collect::<KbResult<_>>()?;
        self.query(&target, &evidence)
    }

    /// Replace the pr-atom with the same head and condition, or append one.
    pub fn set_pr_atom(
        &self,
        head: Atom,
        condition: Vec<Literal>,
        probability: Probability,
    ) -> KbResult<KnowledgeBase> {
        self.with_pr_atoms(vec![PrAtom { head, condition, probability }])
    }

    /// Bulk form of [`set_pr_atom`](Self::set_pr_atom); the result is
    /// validated once.
    pub fn with_pr_atoms(&self, atoms: Vec<PrAtom>) -> KbResult<KnowledgeBase> {
        let mut kb = self.clone();
        let mut index: HashMap<(Atom, Vec<Literal>), usize> =
            kb.pr_atoms.iter().enumerate().map(|(i, p)| (p.key(), i)).collect();
        for p in atoms {
            if !p.probability.in_unit_interval() {
                return Err(KbError::ProbabilityOutOfRange { value: p.probability.value(), pos: None });
            }
            if !kb.attributes.iter().any(|a| a.name == p.head.attr && a.is_random) {
                return Err(KbError::NotRandom { name: p.head.attr.clone(), pos: None });
            }
            match index.get(&p.key()) {
                Some(i) => kb.pr_atoms[*i] = p,
                None => {
                    index.insert(p.key(), kb.pr_atoms.len());
                    kb.pr_atoms.push(p);
                }
            }
        }
        kb.validate()?;
        Ok(kb)
    }
}
