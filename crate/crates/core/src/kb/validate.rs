use std::collections::{BTreeMap, HashMap, HashSet};

use super::ast::*;
use super::error::{KbError, KbResult, Pos};
use super::syntax::Stmt;

/// Source positions of the items of a parsed knowledge base.
#[derive(Debug, Default)]
pub(crate) struct Positions {
    sorts: Vec<Pos>,
    attrs: Vec<Pos>,
    rules: Vec<Pos>,
    pr_atoms: Vec<Pos>,
    facts: Vec<Pos>,
}

fn pos_of(v: Option<&Vec<Pos>>, i: usize) -> Option<Pos> {
    v.and_then(|v| v.get(i).copied())
}

/// Assemble statements into a knowledge base, then validate it.
pub(crate) fn build(stmts: Vec<(Stmt, Pos)>) -> KbResult<KnowledgeBase> {
    let mut kb = KnowledgeBase::default();
    let mut positions = Positions::default();
    let mut randoms: Vec<(String, Pos)> = Vec::new();
    for (stmt, pos) in stmts {
        match stmt {
            Stmt::Sort(s) => {
                kb.sorts.push(s);
                positions.sorts.push(pos);
            }
            Stmt::Attr(a) => {
                kb.attributes.push(a);
                positions.attrs.push(pos);
            }
            Stmt::Random(name) => randoms.push((name, pos)),
            Stmt::Rule(r) => {
                kb.rules.push(r);
                positions.rules.push(pos);
            }
            Stmt::Pr(p) => {
                kb.pr_atoms.push(p);
                positions.pr_atoms.push(pos);
            }
            Stmt::Fact(f) => {
                kb.facts.push(f);
                positions.facts.push(pos);
            }
        }
    }
    let mut seen = HashSet::new();
    for (name, pos) in randoms {
        if !seen.insert(name.clone()) {
            return Err(KbError::Duplicate { name: format!("random({name})"), pos: Some(pos) });
        }
        match kb.attributes.iter_mut().find(|a| a.name == name) {
            Some(a) => a.is_random = true,
            None => return Err(KbError::UndeclaredAttribute { name, pos: Some(pos) }),
        }
    }
    validate(&kb, Some(&positions))?;
    Ok(kb)
}

/// Sort membership lookup shared by validation and grounding.
pub(crate) struct SortTable<'a> {
    members: HashMap<&'a str, HashSet<&'a str>>,
}

impl<'a> SortTable<'a> {
    pub(crate) fn new(kb: &'a KnowledgeBase) -> Self {
        let mut members: HashMap<&str, HashSet<&str>> = HashMap::new();
        members.insert(BOOLEAN_SORT, [TRUE, FALSE].into_iter().collect());
        for s in &kb.sorts {
            members.insert(&s.name, s.members.iter().map(String::as_str).collect());
        }
        SortTable { members }
    }

    fn contains(&self, sort: &str) -> bool {
        self.members.contains_key(sort)
    }

    fn has_member(&self, sort: &str, c: &str) -> bool {
        self.members.get(sort).is_some_and(|m| m.contains(c))
    }
}

/// How an attribute's value is determined.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum AttrKind {
    Random,
    /// Head of at least one rule.
    Derived,
    /// Only ever set by facts; the one kind that may be negated.
    FactOnly,
}

pub(crate) fn attr_kinds(kb: &KnowledgeBase) -> HashMap<&str, AttrKind> {
    let heads: HashSet<&str> =
        kb.rules.iter().filter_map(|r| r.head.as_ref()).map(|h| h.attr.as_str()).collect();
    kb.attributes
        .iter()
        .map(|a| {
            let kind = if a.is_random {
                AttrKind::Random
            } else if heads.contains(a.name.as_str()) {
                AttrKind::Derived
            } else {
                AttrKind::FactOnly
            };
            (a.name.as_str(), kind)
        })
        .collect()
}

struct Checker<'a> {
    sorts: SortTable<'a>,
    attrs: HashMap<&'a str, &'a AttributeDecl>,
    kinds: HashMap<&'a str, AttrKind>,
}

impl<'a> Checker<'a> {
    fn attr(&self, name: &str, pos: Option<Pos>) -> KbResult<&'a AttributeDecl> {
        self.attrs
            .get(name)
            .copied()
            .ok_or_else(|| KbError::UndeclaredAttribute { name: name.to_string(), pos })
    }

    fn check_term(
        &self,
        term: &Term,
        sort: &str,
        vars: &mut BTreeMap<String, String>,
        pos: Option<Pos>,
    ) -> KbResult<()> {
        match term {
            Term::Const(c) => {
                if !self.sorts.has_member(sort, c) {
                    return Err(KbError::Type {
                        message: format!("`{c}` is not a member of sort `{sort}`"),
                        pos,
                    });
                }
            }
            Term::Var(v) => match vars.get(v) {
                Some(s) if s != sort => {
                    return Err(KbError::Type {
                        message: format!("variable `{v}` used as both `{s}` and `{sort}`"),
                        pos,
                    })
                }
                Some(_) => {}
                None => {
                    vars.insert(v.clone(), sort.to_string());
                }
            },
        }
        Ok(())
    }

    /// Type-check an atom, recording variable sorts.
    fn check_atom(
        &self,
        atom: &Atom,
        vars: &mut BTreeMap<String, String>,
        pos: Option<Pos>,
    ) -> KbResult<&'a AttributeDecl> {
        let decl = self.attr(&atom.attr, pos)?;
        if decl.arg_sorts.len() != atom.args.len() {
            return Err(KbError::Type {
                message: format!(
                    "`{}` takes {} arguments, got {}",
                    atom.attr,
                    decl.arg_sorts.len(),
                    atom.args.len()
                ),
                pos,
            });
        }
        for (t, s) in atom.args.iter().zip(&decl.arg_sorts) {
            self.check_term(t, s, vars, pos)?;
        }
        match &atom.value {
            Some(v) => self.check_term(v, &decl.range_sort, vars, pos)?,
            None if decl.range_sort != BOOLEAN_SORT => {
                return Err(KbError::Type {
                    message: format!("`{}` has range `{}` and needs a value", atom.attr, decl.range_sort),
                    pos,
                })
            }
            None => {}
        }
        Ok(decl)
    }

    fn check_body(
        &self,
        body: &[Literal],
        vars: &mut BTreeMap<String, String>,
        pos: Option<Pos>,
        in_rule: bool,
    ) -> KbResult<()> {
        for lit in body {
            self.check_atom(&lit.atom, vars, pos)?;
            let kind = self.kinds[lit.atom.attr.as_str()];
            if lit.negated && kind != AttrKind::FactOnly {
                return Err(KbError::Negation {
                    message: format!("`{}` is not defined by facts alone", lit.atom.attr),
                    pos,
                });
            }
            let is_false = matches!(&lit.atom.value, Some(Term::Const(c)) if c == FALSE);
            if in_rule && is_false && kind == AttrKind::Derived {
                return Err(KbError::Negation {
                    message: format!("`{}=false` on a derived attribute", lit.atom.attr),
                    pos,
                });
            }
        }
        Ok(())
    }
}

pub(crate) fn validate(kb: &KnowledgeBase, positions: Option<&Positions>) -> KbResult<()> {
    let mut sort_names = HashSet::new();
    for (i, s) in kb.sorts.iter().enumerate() {
        let pos = pos_of(positions.map(|p| &p.sorts), i);
        if s.name == BOOLEAN_SORT || !sort_names.insert(s.name.as_str()) {
            return Err(KbError::Duplicate { name: s.name.clone(), pos });
        }
        if s.members.is_empty() {
            return Err(KbError::InvalidDeclaration {
                message: format!("sort `{}` has no members", s.name),
                pos,
            });
        }
        let mut m = HashSet::new();
        for c in &s.members {
            if !m.insert(c) {
                return Err(KbError::Duplicate { name: format!("{}.{c}", s.name), pos });
            }
        }
    }
    let sorts = SortTable::new(kb);

    let mut attrs = HashMap::new();
    for (i, a) in kb.attributes.iter().enumerate() {
        let pos = pos_of(positions.map(|p| &p.attrs), i);
        if attrs.insert(a.name.as_str(), a).is_some() {
            return Err(KbError::Duplicate { name: a.name.clone(), pos });
        }
        for s in a.arg_sorts.iter().chain(std::iter::once(&a.range_sort)) {
            if !sorts.contains(s) {
                return Err(KbError::UndeclaredSort { name: s.clone(), pos });
            }
        }
    }
    let checker = Checker { sorts, attrs, kinds: attr_kinds(kb) };

    for (i, f) in kb.facts.iter().enumerate() {
        let pos = pos_of(positions.map(|p| &p.facts), i);
        let decl = checker.check_atom(f, &mut BTreeMap::new(), pos)?;
        if !f.is_ground() {
            return Err(KbError::Type { message: format!("fact `{f}` is not ground"), pos });
        }
        if decl.is_random {
            return Err(KbError::InvalidDeclaration {
                message: format!("fact on random attribute `{}`", f.attr),
                pos,
            });
        }
    }

    for (i, r) in kb.rules.iter().enumerate() {
        let pos = pos_of(positions.map(|p| &p.rules), i);
        let mut vars = BTreeMap::new();
        if let Some(h) = &r.head {
            let decl = checker.check_atom(h, &mut vars, pos)?;
            if decl.is_random {
                return Err(KbError::InvalidDeclaration {
                    message: format!("rule head on random attribute `{}`", h.attr),
                    pos,
                });
            }
        }
        checker.check_body(&r.body, &mut vars, pos, true)?;
    }

    for (i, p) in kb.pr_atoms.iter().enumerate() {
        let pos = pos_of(positions.map(|p| &p.pr_atoms), i);
        if !p.probability.in_unit_interval() {
            return Err(KbError::ProbabilityOutOfRange { value: p.probability.value(), pos });
        }
        let mut vars = BTreeMap::new();
        let decl = checker.check_atom(&p.head, &mut vars, pos)?;
        if !decl.is_random {
            return Err(KbError::NotRandom { name: p.head.attr.clone(), pos });
        }
        checker.check_body(&p.condition, &mut vars, pos, false)?;
    }

    check_declared_mass(&kb.pr_atoms)
}

/// Mass check over syntactically identical (head term, condition) groups.
/// A repeated head value counts once, with its last declared probability.
/// Groups whose head values are variables are checked after grounding.
pub(crate) fn check_declared_mass(pr_atoms: &[PrAtom]) -> KbResult<()> {
    type Group = (String, Vec<Term>, Vec<Literal>);
    let mut groups: HashMap<Group, HashMap<&Term, f64>> = HashMap::new();
    for p in pr_atoms {
        let Some(value) = p.head.value.as_ref().filter(|v| !v.is_var()) else { continue };
        let group = groups.entry(p.group_key()).or_default();
        group.insert(value, p.probability.value());
        let mass: f64 = group.values().sum();
        if mass > 1.0 + 1e-9 {
            return Err(KbError::MassExceeded { term: p.head.term_string(), mass });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use crate::kb::KnowledgeBase;
    use crate::kb::KbError;

    fn err(src: &str) -> KbError {
        KnowledgeBase::parse(src).unwrap_err()
    }

    #[test]
    fn undeclared_sort() {
        assert!(matches!(err("attr a : s."), KbError::UndeclaredSort { .. }));
    }

    #[test]
    fn undeclared_attribute_in_rule() {
        let e = err("sort s = {x}.\nattr p(s) : boolean.\np(X) :- q(X).");
        match e {
            KbError::UndeclaredAttribute { name, pos } => {
                assert_eq!(name, "q");
                assert_eq!(pos.unwrap().line, 3);
            }
            e => panic!("{e}"),
        }
    }

    #[test]
    fn duplicates() {
        assert!(matches!(err("sort s = {x}. sort s = {y}."), KbError::Duplicate { .. }));
        assert!(matches!(err("sort s = {x, x}."), KbError::Duplicate { .. }));
        assert!(matches!(err("sort s = {x}. attr a : s. attr a : s."), KbError::Duplicate { .. }));
        assert!(matches!(
            err("sort s = {x}. attr a : s. random(a). random(a)."),
            KbError::Duplicate { .. }
        ));
        assert!(matches!(err("sort boolean = {yes}."), KbError::Duplicate { .. }));
    }

    #[test]
    fn type_errors() {
        assert!(matches!(err("sort s = {x}. attr a : s. random(a). pr(a=y) = 1/2."), KbError::Type { .. }));
        assert!(matches!(
            err("sort s = {x}. sort t = {y}. attr a(s) : t. attr b(t) : t. p :- a(X)=Y, b(X)=Y. attr p : boolean."),
            KbError::Type { .. }
        ));
        // non-boolean attribute used as a predicate
        assert!(matches!(err("sort s = {x}. attr a : s. a."), KbError::Type { .. }));
    }

    #[test]
    fn pr_atom_on_non_random_attribute() {
        assert!(matches!(err("sort s = {x}. attr a : s. pr(a=x) = 1/2."), KbError::NotRandom { .. }));
    }

    #[test]
    fn negation_restricted_to_facts() {
        let e = err("sort s = {x, y}. attr a : s. random(a). attr p : boolean. p :- not a=x.");
        assert!(matches!(e, KbError::Negation { .. }), "{e}");
        let ok = KnowledgeBase::parse(
            "sort s = {x, y}. attr a : s. random(a). attr f(s) : boolean. f(x). attr p : boolean. p :- a=y, not f(y).",
        );
        assert!(ok.is_ok(), "{ok:?}");
    }

    #[test]
    fn declared_mass_over_one() {
        let e = err("sort s = {x, y}. attr a : s. random(a). pr(a=x) = 0.7. pr(a=y) = 0.5.");
        assert!(matches!(e, KbError::MassExceeded { .. }), "{e}");
    }

    #[test]
    fn facts_must_be_ground_and_not_random() {
        assert!(err("sort s = {x}. attr p(s) : boolean. p(X).").to_string().contains("not ground"));
        assert!(matches!(
            err("sort s = {x}. attr a : s. random(a). a=x."),
            KbError::InvalidDeclaration { .. }
        ));
    }
}
