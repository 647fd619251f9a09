//! Brute-force oracle for random knowledge bases.

use krrl_core::kb::*;
use proptest::prelude::*;


/// A random program over binary random attributes `a0..`, derived
/// predicates `d0..` and facts `f0..`, kept independent of the library's
/// data structures.
#[derive(Debug, Clone)]
pub struct Program {
    pub n: usize,
    pub facts: Vec<bool>,
    /// (head derived index, body): body literals are (kind, index, value).
    pub rules: Vec<(Option<usize>, Vec<(char, usize, bool)>)>,
    /// (attr, value, condition, numerator/10)
    pub prs: Vec<(usize, bool, Vec<(char, usize, bool)>, u64)>,
    pub n_derived: usize,
}

pub fn lit_text(kind: char, i: usize, v: bool) -> String {
    match kind {
        'a' => format!("a{i}={v}"),
        'd' => format!("d{i}"),
        'f' if v => format!("f{i}"),
        _ => format!("not f{i}"),
    }
}

impl Program {
    pub fn text(&self) -> String {
        let mut s = String::new();
        for i in 0..self.n {
            s += &format!("attr a{i} : boolean.\nrandom(a{i}).\n");
        }
        for i in 0..self.n_derived {
            s += &format!("attr d{i} : boolean.\n");
        }
        for (i, f) in self.facts.iter().enumerate() {
            s += &format!("attr f{i} : boolean.\n");
            if *f {
                s += &format!("f{i}.\n");
            }
        }
        for (h, body) in &self.rules {
            if let Some(h) = h {
                s += &format!("d{h} ");
            }
            let b: Vec<String> = body.iter().map(|(k, i, v)| lit_text(*k, *i, *v)).collect();
            s += &format!(":- {}.\n", b.join(", "));
        }
        for (a, v, cond, num) in &self.prs {
            let c: Vec<String> = cond.iter().map(|(k, i, v)| lit_text(*k, *i, *v)).collect();
            if c.is_empty() {
                s += &format!("pr(a{a}={v}) = {num}/10.\n");
            } else {
                s += &format!("pr(a{a}={v} | {}) = {num}/10.\n", c.join(", "));
            }
        }
        s
    }

    fn holds(&self, lit: &(char, usize, bool), a: &[bool], d: &[bool]) -> bool {
        match lit.0 {
            'a' => a[lit.1] == lit.2,
            'd' => d[lit.1] == lit.2,
            _ => self.facts[lit.1] == lit.2,
        }
    }

    /// (derived values, consistent) for one assignment.
    fn derive(&self, a: &[bool]) -> (Vec<bool>, bool) {
        let mut d = vec![false; self.n_derived];
        loop {
            let mut changed = false;
            for (h, body) in &self.rules {
                if let Some(h) = h {
                    if !d[*h] && body.iter().all(|l| self.holds(l, a, &d)) {
                        d[*h] = true;
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        let ok = self
            .rules
            .iter()
            .filter(|(h, _)| h.is_none())
            .all(|(_, body)| !body.iter().all(|l| self.holds(l, a, &d)));
        (d, ok)
    }

    fn weight(&self, a: &[bool], d: &[bool]) -> f64 {
        let mut w = 1.0;
        for i in 0..self.n {
            // per value: (specificity, order, prob)
            let mut chosen: [Option<(usize, usize, f64)>; 2] = [None, None];
            for (order, (attr, v, cond, num)) in self.prs.iter().enumerate() {
                if *attr != i || !cond.iter().all(|l| self.holds(l, a, d)) {
                    continue;
                }
                let slot = &mut chosen[*v as usize];
                let cand = (cond.len(), order, *num as f64 / 10.0);
                if slot.is_none_or(|c| (cand.0, cand.1) >= (c.0, c.1)) {
                    *slot = Some(cand);
                }
            }
            let p = match (chosen[0], chosen[1]) {
                (Some(f), Some(t)) => {
                    let m = f.2 + t.2;
                    let mine = if a[i] { t.2 } else { f.2 };
                    if m > 0.0 {
                        mine / m
                    } else {
                        0.5
                    }
                }
                (Some(f), None) => {
                    if a[i] {
                        1.0 - f.2
                    } else {
                        f.2
                    }
                }
                (None, Some(t)) => {
                    if a[i] {
                        t.2
                    } else {
                        1.0 - t.2
                    }
                }
                (None, None) => 0.5,
            };
            w *= p;
        }
        w
    }

    /// P(target | evidence) by enumerating all 2^n assignments.
    pub fn oracle(&self, target: &(char, usize, bool), evidence: &[(char, usize, bool)]) -> Option<f64> {
        let mut num = 0.0;
        let mut den = 0.0;
        for bits in 0u32..(1 << self.n) {
            let a: Vec<bool> = (0..self.n).map(|i| bits >> i & 1 == 1).collect();
            let (d, ok) = self.derive(&a);
            if !ok {
                continue;
            }
            if !evidence.iter().all(|l| self.holds(l, &a, &d)) {
                continue;
            }
            let w = self.weight(&a, &d);
            den += w;
            if self.holds(target, &a, &d) {
                num += w;
            }
        }
        (den > 0.0).then(|| num / den)
    }
}

fn arb_lit(n: usize, nd: usize, nf: usize, allow_d: bool) -> BoxedStrategy<(char, usize, bool)> {
    let mut options: Vec<BoxedStrategy<(char, usize, bool)>> =
        vec![(0..n, any::<bool>()).prop_map(|(i, v)| ('a', i, v)).boxed()];
    if allow_d && nd > 0 {
        options.push((0..nd).prop_map(|i| ('d', i, true)).boxed());
    }
    if nf > 0 {
        options.push((0..nf, any::<bool>()).prop_map(|(i, v)| ('f', i, v)).boxed());
    }
    proptest::strategy::Union::new(options).boxed()
}

pub fn arb_program(max_n: usize) -> impl Strategy<Value = Program> {
    (1..=max_n, 0usize..4, 0usize..3).prop_flat_map(|(n, nd, nf)| {
        let rule = (
            proptest::option::weighted(0.85, 0..nd.max(1)),
            proptest::collection::vec(arb_lit(n, nd, nf, true), 1..4),
        )
            .prop_map(move |(h, b)| (if nd == 0 { None } else { h }, b));
        // conditions only mention earlier attributes, keeping the program acyclic
        let pr = (0..n).prop_flat_map(move |i| {
            let cond = if i == 0 && nf == 0 {
                Just(Vec::new()).boxed()
            } else {
                proptest::collection::vec(arb_lit(i.max(1), 0, nf, false), 0..3)
                    .prop_map(move |c| c.into_iter().filter(|l| l.0 != 'a' || l.1 < i).collect())
                    .boxed()
            };
            // at most 1/2 per value, so two applicable pr-atoms never exceed 1
            (Just(i), any::<bool>(), cond, 0u64..=5)
        });
        (
            Just(n),
            proptest::collection::vec(any::<bool>(), nf),
            proptest::collection::vec(rule, 0..=8),
            proptest::collection::vec(pr, 0..8),
            Just(nd),
        )
            .prop_map(|(n, facts, rules, prs, n_derived)| Program { n, facts, rules, prs, n_derived })
    })
}

pub fn lit(l: &(char, usize, bool)) -> Literal {
    parse_literal(&lit_text(l.0, l.1, l.2)).unwrap()
}

