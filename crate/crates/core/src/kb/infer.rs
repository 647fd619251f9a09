//! Exact inference by possible-world enumeration.
//!
//! A query only enumerates the random terms it can depend on: the ancestors
//! of the target and evidence terms, plus the ancestors of anything that can
//! make a world inconsistent. Random terms outside that set sum out to one.
//! Positive evidence on a random term fixes that term instead of filtering.

use std::collections::HashMap;

use super::ast::{Atom, Literal, Term};
use super::error::{KbError, KbResult};
use super::ground::{GLit, GroundedProgram, Slot, Sym};
use super::validate::AttrKind;

/// Default bound on the number of enumerated worlds.
pub const DEFAULT_WORLD_CAP: u64 = 1 << 20;

/// One assignment of every grounded random term, with its unnormalized weight.
#[derive(Debug, Clone, PartialEq)]
pub struct PossibleWorld {
    pub assignment: Vec<(String, String)>,
    pub weight: f64,
}

impl PossibleWorld {
    pub fn value(&self, term: &str) -> Option<&str> {
        self.assignment.iter().find(|(t, _)| t == term).map(|(_, v)| v.as_str())
    }
}

#[derive(Debug, Clone, Copy)]
enum Resolved {
    Const(bool),
    Dyn(GLit, bool),
}

struct Plan {
    rand: Vec<Slot>,
    domains: Vec<Vec<Sym>>,
    prs: Vec<Vec<usize>>,
    derived: Vec<Slot>,
    rules: Vec<usize>,
    constraints: Vec<usize>,
}

impl GroundedProgram {
    fn holds(&self, lit: &GLit, vals: &[Option<Sym>]) -> bool {
        match vals[lit.slot as usize] {
            Some(v) => v == lit.value,
            None => self.slot_default(lit.slot) == Some(lit.value),
        }
    }

    fn resolve(&self, lit: &Literal) -> KbResult<Resolved> {
        let atom = &lit.atom;
        if !atom.is_ground() {
            return Err(KbError::Type { message: format!("`{atom}` is not ground"), pos: None });
        }
        let attr = self.attr(&atom.attr)?;
        let info = &self.attrs[attr];
        if info.arg_sorts.len() != atom.args.len() {
            return Err(KbError::Type { message: format!("wrong arity in `{atom}`"), pos: None });
        }
        let mut args = Vec::with_capacity(atom.args.len());
        for (t, s) in atom.args.iter().zip(&info.arg_sorts) {
            let sym = self.sym(t.name())?;
            if !self.sorts[*s].contains(&sym) {
                return Err(KbError::Type {
                    message: format!("`{}` is not a member of `{}`", t.name(), self.sort_names[*s]),
                    pos: None,
                });
            }
            args.push(sym);
        }
        let value = self.sym(atom.value_or_true().name())?;
        if !self.sorts[info.range].contains(&value) {
            return Err(KbError::Type {
                message: format!("`{}` is not in the range of `{}`", atom.value_or_true(), atom.attr),
                pos: None,
            });
        }
        let term = self.lookup_term(attr, &args);
        if let Some(slot) = term.and_then(|t| self.slot_of_term.get(&t)) {
            return Ok(Resolved::Dyn(GLit { slot: *slot, value }, lit.negated));
        }
        let actual = term
            .and_then(|t| self.static_values.get(&t).copied())
            .or_else(|| info.boolean.then_some(self.false_sym));
        Ok(Resolved::Const((actual == Some(value)) != lit.negated))
    }

    fn plan(&self, roots: &[Slot], pins: &HashMap<Slot, Sym>) -> KbResult<Plan> {
        let n = self.slot_terms.len();
        let mut seen = vec![false; n];
        let mut stack: Vec<Slot> = roots.iter().chain(&self.consistency_roots).copied().collect();
        while let Some(s) = stack.pop() {
            if std::mem::replace(&mut seen[s as usize], true) {
                continue;
            }
            stack.extend(self.parents[s as usize].iter().copied().filter(|p| !seen[*p as usize]));
        }
        let pinned_ok = |l: &GLit| pins.get(&l.slot).is_none_or(|v| *v == l.value);

        let mut plan = Plan {
            rand: Vec::new(),
            domains: Vec::new(),
            prs: Vec::new(),
            derived: Vec::new(),
            rules: Vec::new(),
            constraints: Vec::new(),
        };
        let mut count: u128 = 1;
        for s in (0..n as Slot).filter(|s| seen[*s as usize]) {
            if (s as usize) < self.n_random {
                let domain = match pins.get(&s) {
                    Some(v) => vec![*v],
                    None => self.domain(s).to_vec(),
                };
                count = count.saturating_mul(domain.len() as u128);
                plan.rand.push(s);
                plan.domains.push(domain);
                plan.prs.push(
                    self.pr_by_slot[s as usize]
                        .iter()
                        .copied()
                        .filter(|i| self.pr_atoms[*i].cond.iter().all(pinned_ok))
                        .collect(),
                );
            } else {
                plan.derived.push(s);
                plan.rules.extend(
                    self.rules_by_head[s as usize]
                        .iter()
                        .copied()
                        .filter(|i| self.rules[*i].body.iter().all(pinned_ok)),
                );
            }
        }
        if count > self.world_cap as u128 {
            return Err(KbError::WorldCap { count, cap: self.world_cap });
        }
        plan.constraints = self
            .constraints
            .iter()
            .copied()
            .filter(|i| self.rules[*i].body.iter().all(pinned_ok))
            .collect();
        Ok(plan)
    }

    /// Causal probability of the current value of random slot `slot`.
    fn causal_prob(&self, slot: Slot, prs: &[usize], vals: &[Option<Sym>]) -> KbResult<f64> {
        let v = vals[slot as usize].expect("random slot assigned");
        // most specific applicable pr-atom per value; later declarations win ties
        let mut best: Vec<(Sym, usize, usize, f64)> = Vec::new();
        for &i in prs {
            let pr = &self.pr_atoms[i];
            if !pr.cond.iter().all(|l| self.holds(l, vals)) {
                continue;
            }
            match best.iter_mut().find(|b| b.0 == pr.value) {
                Some(b) => {
                    if (pr.specificity, pr.order) >= (b.1, b.2) {
                        *b = (pr.value, pr.specificity, pr.order, pr.prob);
                    }
                }
                None => best.push((pr.value, pr.specificity, pr.order, pr.prob)),
            }
        }
        let mass: f64 = best.iter().map(|b| b.3).sum();
        if mass > 1.0 + 1e-9 {
            return Err(KbError::MassExceeded { term: self.slot_name(slot), mass });
        }
        let n = self.domain(slot).len();
        if best.len() >= n && mass <= 0.0 {
            // nothing distinguishes the values
            return Ok(1.0 / n as f64);
        }
        // a declared total of one up to rounding leaves nothing to share
        let full = best.len() >= n || (1.0 - mass).abs() <= 1e-9;
        if let Some(b) = best.iter().find(|b| b.0 == v) {
            if full {
                return Ok(b.3 / mass);
            }
            return Ok(b.3);
        }
        if full {
            return Ok(0.0);
        }
        Ok((1.0 - mass).max(0.0) / (n - best.len()) as f64)
    }

    /// Derive the dynamic derived terms; `false` if the world is inconsistent.
    fn close(&self, plan: &Plan, vals: &mut [Option<Sym>]) -> bool {
        for d in &plan.derived {
            vals[*d as usize] = None;
        }
        loop {
            let mut changed = false;
            for &r in &plan.rules {
                let rule = &self.rules[r];
                let head = rule.head.expect("rule with head");
                if vals[head.slot as usize] == Some(head.value) {
                    continue;
                }
                if rule.body.iter().all(|l| self.holds(l, vals)) {
                    if vals[head.slot as usize].is_some() {
                        return false;
                    }
                    vals[head.slot as usize] = Some(head.value);
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        !plan
            .constraints
            .iter()
            .any(|c| self.rules[*c].body.iter().all(|l| self.holds(l, vals)))
    }

    /// Enumerate the worlds of `plan`, calling `visit` on consistent ones
    /// with their weight.
    fn run(
        &self,
        plan: &Plan,
        visit: &mut dyn FnMut(&[Option<Sym>], f64) -> KbResult<()>,
    ) -> KbResult<()> {
        let mut vals: Vec<Option<Sym>> = vec![None; self.slot_terms.len()];
        let mut idx = vec![0usize; plan.rand.len()];
        for (k, s) in plan.rand.iter().enumerate() {
            vals[*s as usize] = Some(plan.domains[k][0]);
        }
        loop {
            if self.close(plan, &mut vals) {
                let mut w = 1.0;
                for (k, s) in plan.rand.iter().enumerate() {
                    w *= self.causal_prob(*s, &plan.prs[k], &vals)?;
                    if w == 0.0 {
                        break;
                    }
                }
                visit(&vals, w)?;
            }
            // odometer, last slot fastest
            let mut k = plan.rand.len();
            loop {
                if k == 0 {
                    return Ok(());
                }
                k -= 1;
                idx[k] += 1;
                if idx[k] < plan.domains[k].len() {
                    vals[plan.rand[k] as usize] = Some(plan.domains[k][idx[k]]);
                    break;
                }
                idx[k] = 0;
                vals[plan.rand[k] as usize] = Some(plan.domains[k][0]);
            }
        }
    }

    /// Split evidence into pins on random terms and per-world checks.
    fn evidence(
        &self,
        evidence: &[Literal],
    ) -> KbResult<(HashMap<Slot, Sym>, Vec<(GLit, bool)>, Vec<Slot>)> {
        let mut pins = HashMap::new();
        let mut checks = Vec::new();
        let mut roots = Vec::new();
        for e in evidence {
            match self.resolve(e)? {
                Resolved::Const(true) => {}
                Resolved::Const(false) => return Err(KbError::ZeroEvidence),
                Resolved::Dyn(l, negated) => {
                    roots.push(l.slot);
                    if !negated && (l.slot as usize) < self.n_random {
                        if pins.insert(l.slot, l.value).is_some_and(|v| v != l.value) {
                            return Err(KbError::ZeroEvidence);
                        }
                    } else {
                        checks.push((l, negated));
                    }
                }
            }
        }
        Ok((pins, checks, roots))
    }

    fn conditioned(
        &self,
        evidence: &[Literal],
        extra_roots: &[Slot],
        visit: &mut dyn FnMut(&[Option<Sym>], f64),
    ) -> KbResult<f64> {
        let (pins, checks, mut roots) = self.evidence(evidence)?;
        roots.extend_from_slice(extra_roots);
        let plan = self.plan(&roots, &pins)?;
        let mut total = 0.0;
        self.run(&plan, &mut |vals, w| {
            if checks.iter().all(|(l, neg)| self.holds(l, vals) != *neg) {
                total += w;
                visit(vals, w);
            }
            Ok(())
        })?;
        if total <= 0.0 {
            return Err(if evidence.is_empty() {
                KbError::Inconsistent("every possible world is excluded".into())
            } else {
                KbError::ZeroEvidence
            });
        }
        Ok(total)
    }

    /// P(target | evidence).
    pub fn query(&self, target: &Literal, evidence: &[Literal]) -> KbResult<f64> {
        Ok(self.query_all(std::slice::from_ref(target), evidence)?[0])
    }

    /// P(t | evidence) for each target, sharing one enumeration.
    pub fn query_all(&self, targets: &[Literal], evidence: &[Literal]) -> KbResult<Vec<f64>> {
        let resolved: Vec<Resolved> = targets.iter().map(|t| self.resolve(t)).collect::<KbResult<_>>()?;
        let roots: Vec<Slot> = resolved
            .iter()
            .filter_map(|r| match r {
                Resolved::Dyn(l, _) => Some(l.slot),
                Resolved::Const(_) => None,
            })
            .collect();
        let mut mass = vec![0.0; targets.len()];
        let total = self.conditioned(evidence, &roots, &mut |vals, w| {
            for (m, r) in mass.iter_mut().zip(&resolved) {
                let holds = match r {
                    Resolved::Const(b) => *b,
                    Resolved::Dyn(l, neg) => self.holds(l, vals) != *neg,
                };
                if holds {
                    *m += w;
                }
            }
        })?;
        Ok(mass.into_iter().map(|m| m / total).collect())
    }

    /// Joint distribution of the given random terms (atoms without values)
    /// given evidence, in mixed-radix order over their ranges with the last
    /// term varying fastest.
    pub fn distribution(&self, terms: &[Atom], evidence: &[Literal]) -> KbResult<Vec<f64>> {
        let mut slots = Vec::with_capacity(terms.len());
        let mut radix = Vec::with_capacity(terms.len());
        for t in terms {
            let mut probe = t.clone();
            let attr = self.attr(&t.attr)?;
            if self.attrs[attr].kind != AttrKind::Random {
                return Err(KbError::NotRandom { name: t.attr.clone(), pos: None });
            }
            probe.value = Some(Term::Const(self.symbols[self.sorts[self.attrs[attr].range][0] as usize].clone()));
            match self.resolve(&Literal::pos(probe))? {
                Resolved::Dyn(l, _) => {
                    let domain: HashMap<Sym, usize> =
                        self.domain(l.slot).iter().enumerate().map(|(i, s)| (*s, i)).collect();
                    radix.push(domain.len());
                    slots.push((l.slot, domain));
                }
                Resolved::Const(_) => unreachable!("random terms always have slots"),
            }
        }
        let size: usize = radix.iter().product();
        let mut out = vec![0.0; size];
        let roots: Vec<Slot> = slots.iter().map(|s| s.0).collect();
        let total = self.conditioned(evidence, &roots, &mut |vals, w| {
            let mut i = 0;
            for (slot, domain) in &slots {
                let v = vals[*slot as usize].expect("random slot assigned");
                i = i * domain.len() + domain[&v];
            }
            out[i] += w;
        })?;
        out.iter_mut().for_each(|p| *p /= total);
        Ok(out)
    }

    /// Every consistent world over all random terms with its normalized
    /// probability.
    pub fn enumerate_worlds(&self) -> KbResult<Vec<(PossibleWorld, f64)>> {
        let roots: Vec<Slot> = (0..self.n_random as Slot).collect();
        let plan = self.plan(&roots, &HashMap::new())?;
        let mut worlds = Vec::new();
        let mut total = 0.0;
        self.run(&plan, &mut |vals, w| {
            total += w;
            let assignment = (0..self.n_random)
                .map(|s| {
                    let v = vals[s].expect("random slot assigned");
                    (self.slot_name(s as Slot), self.symbols[v as usize].clone())
                })
                .collect();
            worlds.push(PossibleWorld { assignment, weight: w });
            Ok(())
        })?;
        if total <= 0.0 {
            return Err(KbError::Inconsistent("every possible world is excluded".into()));
        }
        Ok(worlds.into_iter().map(|w| {
            let p = w.weight / total;
            (w, p)
        }).collect())
    }
}
