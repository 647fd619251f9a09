//! Grounding: instantiate rules and pr-atoms over their sorts.
//!
//! Attributes split into *static* ones (facts, and rules over facts only) and
//! *dynamic* ones (random attributes and everything derived from them). The
//! static part is evaluated once here; grounded instances keep only dynamic
//! literals. Every random attribute term and every dynamic derived term gets a
//! dense slot index used by the world enumerator.

use std::collections::{BTreeSet, HashMap, HashSet};

use super::ast::*;
use super::error::{KbError, KbResult};
use super::validate::{attr_kinds, AttrKind};

pub(crate) type Sym = u32;
pub(crate) type Slot = u32;

#[derive(Debug, Clone, Copy)]
pub struct GroundingLimits {
    /// Maximum number of grounded rule and pr-atom instances.
    pub max_instances: usize,
}

impl Default for GroundingLimits {
    fn default() -> Self {
        GroundingLimits { max_instances: 1_000_000 }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct AttrInfo {
    pub name: String,
    pub arg_sorts: Vec<usize>,
    pub range: usize,
    pub boolean: bool,
    pub kind: AttrKind,
    pub dynamic: bool,
}

/// A dynamic literal `slot = value`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub(crate) struct GLit {
    pub slot: Slot,
    pub value: Sym,
}

#[derive(Debug, Clone)]
pub(crate) struct GRule {
    pub head: Option<GLit>,
    pub body: Vec<GLit>,
}

#[derive(Debug, Clone)]
pub(crate) struct GPr {
    pub slot: Slot,
    pub value: Sym,
    pub cond: Vec<GLit>,
    pub prob: f64,
    /// Number of condition literals in the source pr-atom.
    pub specificity: usize,
    /// Declaration index; later declarations win ties.
    pub order: usize,
}

/// A knowledge base instantiated over its sorts.
#[derive(Debug, Clone)]
pub struct GroundedProgram {
    pub(crate) symbols: Vec<String>,
    pub(crate) sym_index: HashMap<String, Sym>,
    pub(crate) sort_names: Vec<String>,
    pub(crate) sorts: Vec<Vec<Sym>>,
    pub(crate) attrs: Vec<AttrInfo>,
    pub(crate) attr_index: HashMap<String, usize>,
    pub(crate) terms: Vec<(usize, Vec<Sym>)>,
    pub(crate) term_index: HashMap<(usize, Vec<Sym>), u32>,
    pub(crate) static_values: HashMap<u32, Sym>,
    /// Term id of each slot; the first `n_random` slots are random terms.
    pub(crate) slot_terms: Vec<u32>,
    pub(crate) slot_of_term: HashMap<u32, Slot>,
    pub(crate) n_random: usize,
    pub(crate) rules: Vec<GRule>,
    pub(crate) pr_atoms: Vec<GPr>,
    pub(crate) pr_by_slot: Vec<Vec<usize>>,
    pub(crate) rules_by_head: Vec<Vec<usize>>,
    pub(crate) constraints: Vec<usize>,
    pub(crate) parents: Vec<Vec<Slot>>,
    pub(crate) consistency_roots: Vec<Slot>,
    pub(crate) false_sym: Sym,
    pub(crate) true_sym: Sym,
    pub(crate) world_cap: u64,
    instances: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PTerm {
    Var(usize),
    Const(Sym),
}

#[derive(Debug, Clone)]
struct PLit {
    attr: usize,
    args: Vec<PTerm>,
    value: PTerm,
    negated: bool,
}

#[derive(Debug, Clone)]
struct Clause {
    /// Sort index of each variable, in order of first appearance.
    var_sorts: Vec<usize>,
    head: Option<PLit>,
    body: Vec<PLit>,
}

/// Static interpretation: known values plus per-attribute tuples for joins.
#[derive(Default)]
struct StaticModel {
    values: HashMap<u32, Sym>,
    tuples: HashMap<usize, Vec<(Vec<Sym>, Sym)>>,
}

struct Counter {
    emitted: usize,
    explored: usize,
    limit: usize,
}

impl Counter {
    fn explore(&mut self) -> KbResult<()> {
        self.explored += 1;
        if self.explored > self.limit.saturating_mul(50) {
            return Err(KbError::GroundingLimit { limit: self.limit });
        }
        Ok(())
    }
}

impl GroundedProgram {
    /// Bound on the number of worlds a single query may enumerate.
    pub fn with_world_cap(mut self, cap: u64) -> Self {
        self.world_cap = cap;
        self
    }

    pub fn instance_count(&self) -> usize {
        self.instances
    }

    pub fn rule_count(&self) -> usize {
        self.rules.len()
    }

    pub fn pr_atom_count(&self) -> usize {
        self.pr_atoms.len()
    }

    /// Names of the grounded random attribute terms, in enumeration order.
    pub fn random_terms(&self) -> Vec<String> {
        (0..self.n_random).map(|s| self.slot_name(s as Slot)).collect()
    }

    /// Values of an attribute's range sort, in declaration order.
    pub fn range(&self, attr: &str) -> KbResult<Vec<String>> {
        let a = self.attr(attr)?;
        Ok(self.sorts[self.attrs[a].range].iter().map(|s| self.symbols[*s as usize].clone()).collect())
    }

    pub(crate) fn term_name(&self, term: u32) -> String {
        let (attr, args) = &self.terms[term as usize];
        let mut s = self.attrs[*attr].name.clone();
        if !args.is_empty() {
            s.push('(');
            let names: Vec<&str> = args.iter().map(|a| self.symbols[*a as usize].as_str()).collect();
            s.push_str(&names.join(","));
            s.push(')');
        }
        s
    }

    pub(crate) fn slot_name(&self, slot: Slot) -> String {
        self.term_name(self.slot_terms[slot as usize])
    }

    pub(crate) fn sym(&self, name: &str) -> KbResult<Sym> {
        self.sym_index.get(name).copied().ok_or_else(|| KbError::UnknownSymbol(name.to_string()))
    }

    pub(crate) fn attr(&self, name: &str) -> KbResult<usize> {
        self.attr_index
            .get(name)
            .copied()
            .ok_or_else(|| KbError::UndeclaredAttribute { name: name.to_string(), pos: None })
    }

    pub(crate) fn lookup_term(&self, attr: usize, args: &[Sym]) -> Option<u32> {
        self.term_index.get(&(attr, args.to_vec())).copied()
    }

    /// Range of a random slot.
    pub(crate) fn domain(&self, slot: Slot) -> &[Sym] {
        let (attr, _) = self.terms[self.slot_terms[slot as usize] as usize];
        &self.sorts[self.attrs[attr].range]
    }

    /// Value a slot reads as when nothing derived it.
    pub(crate) fn slot_default(&self, slot: Slot) -> Option<Sym> {
        let (attr, _) = self.terms[self.slot_terms[slot as usize] as usize];
        self.attrs[attr].boolean.then_some(self.false_sym)
    }
}

struct Grounder<'a> {
    kb: &'a KnowledgeBase,
    p: GroundedProgram,
    sort_pos: Vec<HashMap<Sym, usize>>,
}

/// Ground a validated knowledge base.
pub fn ground(kb: &KnowledgeBase, limits: &GroundingLimits) -> KbResult<GroundedProgram> {
    let mut g = Grounder::new(kb);
    let mut counter = Counter { emitted: 0, explored: 0, limit: limits.max_instances };
    let model = g.static_model(&mut counter)?;
    g.p.static_values = model.values.clone();
    g.random_terms();
    g.dynamic_rules(&model, &mut counter)?;
    g.pr_atoms(&model, &mut counter)?;
    g.p.instances = counter.emitted;
    g.index();
    Ok(g.p)
}

impl<'a> Grounder<'a> {
    fn new(kb: &'a KnowledgeBase) -> Self {
        let mut symbols = Vec::new();
        let mut sym_index = HashMap::new();
        let mut intern = |s: &str| -> Sym {
            *sym_index.entry(s.to_string()).or_insert_with(|| {
                symbols.push(s.to_string());
                (symbols.len() - 1) as Sym
            })
        };
        let true_sym = intern(TRUE);
        let false_sym = intern(FALSE);
        let mut sort_names = vec![BOOLEAN_SORT.to_string()];
        let mut sorts = vec![vec![true_sym, false_sym]];
        for s in &kb.sorts {
            sort_names.push(s.name.clone());
            sorts.push(s.members.iter().map(|m| intern(m)).collect());
        }
        let sort_idx: HashMap<&str, usize> =
            sort_names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();

        let kinds = attr_kinds(kb);
        let mut attrs: Vec<AttrInfo> = kb
            .attributes
            .iter()
            .map(|a| AttrInfo {
                name: a.name.clone(),
                arg_sorts: a.arg_sorts.iter().map(|s| sort_idx[s.as_str()]).collect(),
                range: sort_idx[a.range_sort.as_str()],
                boolean: a.range_sort == BOOLEAN_SORT,
                kind: kinds[a.name.as_str()],
                dynamic: a.is_random,
            })
            .collect();
        let attr_index: HashMap<String, usize> =
            attrs.iter().enumerate().map(|(i, a)| (a.name.clone(), i)).collect();

        // dynamic = random, or derived by a rule with a dynamic body attribute
        loop {
            let mut changed = false;
            for r in &kb.rules {
                let Some(h) = &r.head else { continue };
                let hi = attr_index[&h.attr];
                if attrs[hi].dynamic {
                    continue;
                }
                if r.body.iter().any(|l| attrs[attr_index[&l.atom.attr]].dynamic) {
                    attrs[hi].dynamic = true;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }

        let sort_pos = sorts
            .iter()
            .map(|m| m.iter().enumerate().map(|(i, s)| (*s, i)).collect())
            .collect();
        Grounder {
            kb,
            sort_pos,
            p: GroundedProgram {
                symbols,
                sym_index,
                sort_names,
                sorts,
                attrs,
                attr_index,
                terms: Vec::new(),
                term_index: HashMap::new(),
                static_values: HashMap::new(),
                slot_terms: Vec::new(),
                slot_of_term: HashMap::new(),
                n_random: 0,
                rules: Vec::new(),
                pr_atoms: Vec::new(),
                pr_by_slot: Vec::new(),
                rules_by_head: Vec::new(),
                constraints: Vec::new(),
                parents: Vec::new(),
                consistency_roots: Vec::new(),
                false_sym,
                true_sym,
                world_cap: super::infer::DEFAULT_WORLD_CAP,
                instances: 0,
            },
        }
    }

    fn term(&mut self, attr: usize, args: Vec<Sym>) -> u32 {
        let p = &mut self.p;
        let key = (attr, args);
        if let Some(t) = p.term_index.get(&key) {
            return *t;
        }
        p.terms.push(key.clone());
        let id = (p.terms.len() - 1) as u32;
        p.term_index.insert(key, id);
        id
    }

    fn add_slot(&mut self, term: u32) -> Slot {
        if let Some(s) = self.p.slot_of_term.get(&term) {
            return *s;
        }
        self.p.slot_terms.push(term);
        let s = (self.p.slot_terms.len() - 1) as Slot;
        self.p.slot_of_term.insert(term, s);
        s
    }

    fn compile_atom(&self, atom: &Atom, vars: &mut Vec<(String, usize)>, negated: bool) -> PLit {
        let attr = self.p.attr_index[&atom.attr];
        let info = &self.p.attrs[attr];
        let mut conv = |t: &Term, sort: usize| -> PTerm {
            match t {
                Term::Const(c) => PTerm::Const(self.p.sym_index[c]),
                Term::Var(v) => match vars.iter().position(|(n, _)| n == v) {
                    Some(i) => PTerm::Var(i),
                    None => {
                        vars.push((v.clone(), sort));
                        PTerm::Var(vars.len() - 1)
                    }
                },
            }
        };
        let args = atom.args.iter().zip(&info.arg_sorts).map(|(t, s)| conv(t, *s)).collect();
        let value = conv(&atom.value_or_true(), info.range);
        PLit { attr, args, value, negated }
    }

    fn compile(&self, head: Option<&Atom>, body: &[Literal]) -> Clause {
        let mut vars = Vec::new();
        let head = head.map(|h| self.compile_atom(h, &mut vars, false));
        let body = body.iter().map(|l| self.compile_atom(&l.atom, &mut vars, l.negated)).collect();
        Clause { var_sorts: vars.into_iter().map(|(_, s)| s).collect(), head, body }
    }

    fn is_static(&self, attr: usize) -> bool {
        !self.p.attrs[attr].dynamic
    }

    fn joinable(&self, l: &PLit) -> bool {
        self.is_static(l.attr)
            && !l.negated
            && (!self.p.attrs[l.attr].boolean || l.value == PTerm::Const(self.p.true_sym))
    }

    fn instantiate(&mut self, lit: &PLit, binding: &[Option<Sym>]) -> (u32, Sym) {
        let get = |t: &PTerm| match *t {
            PTerm::Const(c) => c,
            PTerm::Var(v) => binding[v].expect("bound variable"),
        };
        let args: Vec<Sym> = lit.args.iter().map(get).collect();
        let value = get(&lit.value);
        (self.term(lit.attr, args), value)
    }

    fn eval_static(&self, model: &StaticModel, lit: &PLit, binding: &[Option<Sym>]) -> bool {
        let get = |t: &PTerm| match *t {
            PTerm::Const(c) => c,
            PTerm::Var(v) => binding[v].expect("bound variable"),
        };
        let args: Vec<Sym> = lit.args.iter().map(get).collect();
        let value = get(&lit.value);
        let actual = self
            .p
            .term_index
            .get(&(lit.attr, args))
            .and_then(|t| model.values.get(t).copied())
            .or_else(|| self.p.attrs[lit.attr].boolean.then_some(self.p.false_sym));
        (actual == Some(value)) != lit.negated
    }

    /// Enumerate bindings of `clause` satisfying its static literals.
    /// Bindings come back sorted by sort-member declaration order.
    fn bindings(
        &self,
        clause: &Clause,
        model: &StaticModel,
        counter: &mut Counter,
    ) -> KbResult<Vec<Vec<Sym>>> {
        let nv = clause.var_sorts.len();
        let joins: Vec<&PLit> = clause.body.iter().filter(|l| self.joinable(l)).collect();
        let checks: Vec<&PLit> = clause
            .body
            .iter()
            .filter(|l| self.is_static(l.attr) && !self.joinable(l))
            .collect();
        let lit_vars = |l: &PLit| -> Vec<usize> {
            l.args
                .iter()
                .chain(std::iter::once(&l.value))
                .filter_map(|t| match t {
                    PTerm::Var(v) => Some(*v),
                    PTerm::Const(_) => None,
                })
                .collect()
        };
        let check_vars: Vec<Vec<usize>> = checks.iter().map(|l| lit_vars(l)).collect();

        struct St<'s> {
            binding: Vec<Option<Sym>>,
            out: Vec<Vec<Sym>>,
            joins: Vec<&'s PLit>,
            checks: Vec<&'s PLit>,
            check_vars: Vec<Vec<usize>>,
        }
        let mut st = St { binding: vec![None; nv], out: Vec::new(), joins, checks, check_vars };

        fn checks_ok(g: &Grounder, st: &St, model: &StaticModel, newly: Option<usize>) -> bool {
            st.checks.iter().zip(&st.check_vars).all(|(l, vs)| {
                let relevant = match newly {
                    Some(v) => vs.contains(&v),
                    None => true,
                };
                if !relevant || vs.iter().any(|v| st.binding[*v].is_none()) {
                    return true;
                }
                g.eval_static(model, l, &st.binding)
            })
        }

        fn enumerate(
            g: &Grounder,
            st: &mut St,
            model: &StaticModel,
            clause: &Clause,
            counter: &mut Counter,
        ) -> KbResult<()> {
            counter.explore()?;
            let Some(v) = st.binding.iter().position(Option::is_none) else {
                st.out.push(st.binding.iter().map(|b| b.unwrap()).collect());
                return Ok(());
            };
            let members = g.p.sorts[clause.var_sorts[v]].clone();
            for m in members {
                st.binding[v] = Some(m);
                if checks_ok(g, st, model, Some(v)) {
                    enumerate(g, st, model, clause, counter)?;
                }
            }
            st.binding[v] = None;
            Ok(())
        }

        fn join(
            g: &Grounder,
            st: &mut St,
            model: &StaticModel,
            clause: &Clause,
            k: usize,
            counter: &mut Counter,
        ) -> KbResult<()> {
            if k == st.joins.len() {
                if checks_ok(g, st, model, None) {
                    enumerate(g, st, model, clause, counter)?;
                }
                return Ok(());
            }
            let lit = st.joins[k];
            let Some(tuples) = model.tuples.get(&lit.attr) else { return Ok(()) };
            for (args, value) in tuples {
                counter.explore()?;
                let mut newly = Vec::new();
                let mut ok = true;
                for (t, s) in lit.args.iter().chain(std::iter::once(&lit.value)).zip(args.iter().chain(std::iter::once(value))) {
                    match *t {
                        PTerm::Const(c) => ok = c == *s,
                        PTerm::Var(v) => match st.binding[v] {
                            Some(b) => ok = b == *s,
                            None => {
                                // the member must belong to the variable's sort
                                if g.sort_pos[clause.var_sorts[v]].contains_key(s) {
                                    st.binding[v] = Some(*s);
                                    newly.push(v);
                                } else {
                                    ok = false;
                                }
                            }
                        },
                    }
                    if !ok {
                        break;
                    }
                }
                if ok {
                    join(g, st, model, clause, k + 1, counter)?;
                }
                for v in newly {
                    st.binding[v] = None;
                }
            }
            Ok(())
        }

        join(self, &mut st, model, clause, 0, counter)?;
        let mut out = st.out;
        let key = |b: &Vec<Sym>| -> Vec<usize> {
            b.iter().zip(&clause.var_sorts).map(|(s, so)| self.sort_pos[*so][s]).collect()
        };
        out.sort_by_cached_key(key);
        out.dedup();
        Ok(out)
    }

    fn set_static(&mut self, model: &mut StaticModel, term: u32, value: Sym) -> KbResult<bool> {
        match model.values.get(&term) {
            Some(v) if *v == value => Ok(false),
            Some(_) => Err(KbError::Inconsistent(format!(
                "`{}` has conflicting values",
                self.p.term_name(term)
            ))),
            None => {
                model.values.insert(term, value);
                let (attr, args) = self.p.terms[term as usize].clone();
                model.tuples.entry(attr).or_default().push((args, value));
                Ok(true)
            }
        }
    }

    fn static_model(&mut self, counter: &mut Counter) -> KbResult<StaticModel> {
        let mut model = StaticModel::default();
        for f in &self.kb.facts {
            let lit = self.compile_atom(f, &mut Vec::new(), false);
            let (t, v) = self.instantiate(&lit, &[]);
            self.set_static(&mut model, t, v)?;
        }
        let clauses: Vec<Clause> = self
            .kb
            .rules
            .iter()
            .filter(|r| r.head.as_ref().is_some_and(|h| !self.p.attrs[self.p.attr_index[&h.attr]].dynamic))
            .map(|r| self.compile(r.head.as_ref(), &r.body))
            .collect();
        loop {
            let mut changed = false;
            for c in &clauses {
                let head = c.head.as_ref().unwrap();
                for b in self.bindings(c, &model, counter)? {
                    let binding: Vec<Option<Sym>> = b.into_iter().map(Some).collect();
                    let (t, v) = self.instantiate(head, &binding);
                    changed |= self.set_static(&mut model, t, v)?;
                }
            }
            if !changed {
                break;
            }
        }
        Ok(model)
    }

    fn random_terms(&mut self) {
        for attr in 0..self.p.attrs.len() {
            if self.p.attrs[attr].kind != AttrKind::Random {
                continue;
            }
            let sorts: Vec<Vec<Sym>> =
                self.p.attrs[attr].arg_sorts.iter().map(|s| self.p.sorts[*s].clone()).collect();
            let total: usize = sorts.iter().map(Vec::len).product();
            for mut i in 0..total {
                // mixed radix, last argument fastest
                let mut args = vec![0; sorts.len()];
                for k in (0..sorts.len()).rev() {
                    args[k] = sorts[k][i % sorts[k].len()];
                    i /= sorts[k].len();
                }
                let t = self.term(attr, args);
                self.add_slot(t);
            }
        }
        self.p.n_random = self.p.slot_terms.len();
    }

    /// Instantiate the dynamic literals of a clause.
    fn dynamic_lits(
        &mut self,
        lits: &[PLit],
        binding: &[Option<Sym>],
        pending: &mut Vec<(u32, Sym)>,
    ) {
        for l in lits {
            if !self.p.attrs[l.attr].dynamic {
                continue;
            }
            let tv = self.instantiate(l, binding);
            pending.push(tv);
        }
    }

    fn resolve(&self, lits: &[(u32, Sym)]) -> Option<Vec<GLit>> {
        let mut out = Vec::with_capacity(lits.len());
        for &(t, v) in lits {
            match self.p.slot_of_term.get(&t) {
                Some(s) => out.push(GLit { slot: *s, value: v }),
                None => {
                    // a derived term no rule can produce
                    let (attr, _) = self.p.terms[t as usize];
                    let default = self.p.attrs[attr].boolean.then_some(self.p.false_sym);
                    if default != Some(v) {
                        return None;
                    }
                }
            }
        }
        Some(out)
    }

    fn dynamic_rules(&mut self, model: &StaticModel, counter: &mut Counter) -> KbResult<()> {
        let mut pending: Vec<(Option<(u32, Sym)>, Vec<(u32, Sym)>)> = Vec::new();
        for r in &self.kb.rules {
            let dynamic_head = match &r.head {
                Some(h) => self.p.attrs[self.p.attr_index[&h.attr]].dynamic,
                None => true,
            };
            if !dynamic_head {
                continue;
            }
            let clause = self.compile(r.head.as_ref(), &r.body);
            for b in self.bindings(&clause, model, counter)? {
                counter.emitted += 1;
                if counter.emitted > counter.limit {
                    return Err(KbError::GroundingLimit { limit: counter.limit });
                }
                let binding: Vec<Option<Sym>> = b.into_iter().map(Some).collect();
                let head = clause.head.as_ref().map(|h| self.instantiate(h, &binding));
                if let Some((t, _)) = head {
                    self.add_slot(t);
                }
                let mut body = Vec::new();
                self.dynamic_lits(&clause.body, &binding, &mut body);
                pending.push((head, body));
            }
        }
        for (head, body) in pending {
            let Some(body) = self.resolve(&body) else { continue };
            let head = head.map(|(t, v)| GLit { slot: self.p.slot_of_term[&t], value: v });
            self.p.rules.push(GRule { head, body });
        }
        Ok(())
    }

    fn pr_atoms(&mut self, model: &StaticModel, counter: &mut Counter) -> KbResult<()> {
        for (order, pr) in self.kb.pr_atoms.iter().enumerate() {
            let clause = self.compile(Some(&pr.head), &pr.condition);
            for b in self.bindings(&clause, model, counter)? {
                counter.emitted += 1;
                if counter.emitted > counter.limit {
                    return Err(KbError::GroundingLimit { limit: counter.limit });
                }
                let binding: Vec<Option<Sym>> = b.into_iter().map(Some).collect();
                let (t, value) = self.instantiate(clause.head.as_ref().unwrap(), &binding);
                let slot = self.p.slot_of_term[&t];
                let mut cond = Vec::new();
                self.dynamic_lits(&clause.body, &binding, &mut cond);
                let Some(cond) = self.resolve(&cond) else { continue };
                self.p.pr_atoms.push(GPr {
                    slot,
                    value,
                    cond,
                    prob: pr.probability.value(),
                    specificity: pr.condition.len(),
                    order,
                });
            }
        }
        // mass per grounded (term, condition) group
        let mut mass: HashMap<(Slot, BTreeSet<GLit>), HashMap<Sym, f64>> = HashMap::new();
        for pr in &self.p.pr_atoms {
            let group = mass.entry((pr.slot, pr.cond.iter().copied().collect())).or_default();
            group.insert(pr.value, pr.prob);
            let total: f64 = group.values().sum();
            if total > 1.0 + 1e-9 {
                return Err(KbError::MassExceeded { term: self.p.slot_name(pr.slot), mass: total });
            }
        }
        Ok(())
    }

    fn index(&mut self) {
        let p = &mut self.p;
        let n = p.slot_terms.len();
        p.pr_by_slot = vec![Vec::new(); n];
        p.rules_by_head = vec![Vec::new(); n];
        let mut parents: Vec<BTreeSet<Slot>> = vec![BTreeSet::new(); n];
        for (i, pr) in p.pr_atoms.iter().enumerate() {
            p.pr_by_slot[pr.slot as usize].push(i);
            parents[pr.slot as usize].extend(pr.cond.iter().map(|l| l.slot));
        }
        let mut roots = BTreeSet::new();
        let mut head_values: HashMap<Slot, HashSet<Sym>> = HashMap::new();
        for (i, r) in p.rules.iter().enumerate() {
            match r.head {
                Some(h) => {
                    p.rules_by_head[h.slot as usize].push(i);
                    parents[h.slot as usize].extend(r.body.iter().map(|l| l.slot));
                    head_values.entry(h.slot).or_default().insert(h.value);
                }
                None => {
                    p.constraints.push(i);
                    roots.extend(r.body.iter().map(|l| l.slot));
                }
            }
        }
        // a derived term with several possible values can make a world inconsistent
        for (slot, values) in head_values {
            if values.len() > 1 {
                roots.insert(slot);
            }
        }
        p.parents = parents.into_iter().map(|s| s.into_iter().collect()).collect();
        p.consistency_roots = roots.into_iter().collect();
    }
}
