//! Surface syntax tree of the knowledge-base language.
//!
//! Every type here prints back to source text that the parser accepts, so
//! `parse(kb.to_string())` reproduces a structurally identical value.

use std::fmt;

/// Name of the builtin two-valued sort used by plain predicates.
pub const BOOLEAN_SORT: &str = "boolean";
pub const TRUE: &str = "true";
pub const FALSE: &str = "false";

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SortDecl {
    pub name: String,
    pub members: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AttributeDecl {
    pub name: String,
    pub arg_sorts: Vec<String>,
    pub range_sort: String,
    pub is_random: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    Const(String),
    Var(String),
}

impl Term {
    pub fn is_var(&self) -> bool {
        matches!(self, Term::Var(_))
    }

    pub fn name(&self) -> &str {
        match self {
            Term::Const(s) | Term::Var(s) => s,
        }
    }
}

/// `attr(args) = value`; a missing value reads as `= true`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Atom {
    pub attr: String,
    pub args: Vec<Term>,
    pub value: Option<Term>,
}

impl Atom {
    /// Ground atom `attr(args)=value` from plain strings.
    pub fn ground(attr: &str, args: &[&str], value: &str) -> Atom {
        Atom {
            attr: attr.to_string(),
            args: args.iter().map(|a| Term::Const(a.to_string())).collect(),
            value: Some(Term::Const(value.to_string())),
        }
    }

    pub fn is_ground(&self) -> bool {
        !self.args.iter().any(Term::is_var) && !self.value.as_ref().is_some_and(Term::is_var)
    }

    /// The value term, defaulting plain predicates to `true`.
    pub fn value_or_true(&self) -> Term {
        self.value.clone().unwrap_or_else(|| Term::Const(TRUE.to_string()))
    }

    pub fn variables(&self) -> impl Iterator<Item = &str> {
        self.args
            .iter()
            .chain(self.value.iter())
            .filter(|t| t.is_var())
            .map(Term::name)
    }

    /// The attribute term `attr(args)` without the value.
    pub fn term_string(&self) -> String {
        let mut s = self.attr.clone();
        if !self.args.is_empty() {
            s.push('(');
            for (i, a) in self.args.iter().enumerate() {
                if i > 0 {
                    s.push(',');
                }
                s.push_str(a.name());
            }
            s.push(')');
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Literal {
    pub atom: Atom,
    pub negated: bool,
}

impl Literal {
    pub fn pos(atom: Atom) -> Literal {
        Literal { atom, negated: false }
    }

    pub fn neg(atom: Atom) -> Literal {
        Literal { atom, negated: true }
    }
}

/// `head :- body.`, or a constraint `:- body.` when `head` is `None`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LogicRule {
    pub head: Option<Atom>,
    pub body: Vec<Literal>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Probability {
    Ratio { num: u64, den: u64 },
    Decimal(f64),
}

impl Probability {
    pub fn ratio(num: u64, den: u64) -> Probability {
        Probability::Ratio { num, den }
    }

    pub fn value(&self) -> f64 {
        match *self {
            Probability::Ratio { num, den } => num as f64 / den as f64,
            Probability::Decimal(v) => v,
        }
    }

    pub fn in_unit_interval(&self) -> bool {
        match *self {
            Probability::Ratio { num, den } => den > 0 && num <= den,
            Probability::Decimal(v) => (0.0..=1.0).contains(&v),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrAtom {
    pub head: Atom,
    pub condition: Vec<Literal>,
    pub probability: Probability,
}

impl PrAtom {
    /// Key identifying the pr-atom slot that `set_pr_atom` replaces.
    pub(crate) fn key(&self) -> (Atom, Vec<Literal>) {
        let mut cond = self.condition.clone();
        cond.sort();
        cond.dedup();
        (self.head.clone(), cond)
    }

    /// Key of the distribution this pr-atom contributes mass to.
    pub(crate) fn group_key(&self) -> (String, Vec<Term>, Vec<Literal>) {
        let (head, cond) = self.key();
        (head.attr, head.args, cond)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct KnowledgeBase {
    pub sorts: Vec<SortDecl>,
    pub attributes: Vec<AttributeDecl>,
    pub rules: Vec<LogicRule>,
    pub pr_atoms: Vec<PrAtom>,
    pub facts: Vec<Atom>,
}

// ---------------------------------------------------------------------------
// printing

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.attr)?;
        if !self.args.is_empty() {
            f.write_str("(")?;
            for (i, a) in self.args.iter().enumerate() {
                if i > 0 {
                    f.write_str(", ")?;
                }
                write!(f, "{a}")?;
            }
            f.write_str(")")?;
        }
        if let Some(v) = &self.value {
            write!(f, "={v}")?;
        }
        Ok(())
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.negated {
            f.write_str("not ")?;
        }
        write!(f, "{}", self.atom)
    }
}

impl fmt::Display for Probability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Probability::Ratio { num, den: 1 } => write!(f, "{num}"),
            Probability::Ratio { num, den } => write!(f, "{num}/{den}"),
            // Debug keeps a decimal point so the value reparses as a decimal.
            Probability::Decimal(v) => write!(f, "{v:?}"),
        }
    }
}

fn write_list<T: fmt::Display>(f: &mut fmt::Formatter<'_>, items: &[T]) -> fmt::Result {
    for (i, it) in items.iter().enumerate() {
        if i > 0 {
            f.write_str(", ")?;
        }
        write!(f, "{it}")?;
    }
    Ok(())
}

impl fmt::Display for SortDecl {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "sort {} = {{", self.name)?;
        write_list(f, &self.members)?;
        f.write_str("}.")
    }
}

impl fmt::Display for AttributeDecl {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "attr {}", self.name)?;
        if !self.arg_sorts.is_empty() {
            f.write_str("(")?;
            write_list(f, &self.arg_sorts)?;
            f.write_str(")")?;
        }
        write!(f, " : {}.", self.range_sort)
    }
}

impl fmt::Display for LogicRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(h) = &self.head {
            write!(f, "{h} ")?;
        }
        f.write_str(":- ")?;
        write_list(f, &self.body)?;
        f.write_str(".")
    }
}

impl fmt::Display for PrAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "pr({}", self.head)?;
        if !self.condition.is_empty() {
            f.write_str(" | ")?;
            write_list(f, &self.condition)?;
        }
        write!(f, ") = {}.", self.probability)
    }
}

impl fmt::Display for KnowledgeBase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.sorts {
            writeln!(f, "{s}")?;
        }
        for a in &self.attributes {
            writeln!(f, "{a}")?;
        }
        for a in self.attributes.iter().filter(|a| a.is_random) {
            writeln!(f, "random({}).", a.name)?;
        }
        for fact in &self.facts {
            writeln!(f, "{fact}.")?;
        }
        for r in &self.rules {
            writeln!(f, "{r}")?;
        }
        for p in &self.pr_atoms {
            writeln!(f, "{p}")?;
        }
        Ok(())
    }
}
