//! POMDP dialog manager for delivery requests.
//!
//! The hidden state is a request `<item, room, person>`. Questions do not
//! change it; they only produce noisy answers. A serve action ends the
//! dialog and pays according to the probability that the delivery it
//! starts fulfills the true request, which comes from navigation success
//! rates.

use std::collections::{BTreeMap, BinaryHeap, HashMap, HashSet};
use std::sync::Arc;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::grid::{GridMap, KernelTable, Place};
use crate::kb::{Atom, KbError, KnowledgeBase};
use crate::rmax::{model_policy, LearnedModel, ModelError, RMaxConfig};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DialogError {
    #[error("observation has zero likelihood under the current belief")]
    ZeroLikelihood,
    #[error("{0} is not a question")]
    NotAQuestion(DialogAction),
    #[error("answer `{answer}` does not fit {action}")]
    BadAnswer { action: DialogAction, answer: String },
    #[error("no navigation success rate from {0} to {1}")]
    MissingRate(Place, Place),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("knowledge base: {0}")]
    Kb(#[from] KbError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Dimension {
    Item,
    Room,
    Person,
}

impl Dimension {
    pub const ALL: [Dimension; 3] = [Dimension::Item, Dimension::Room, Dimension::Person];

    pub fn name(self) -> &'static str {
        match self {
            Dimension::Item => "item",
            Dimension::Room => "room",
            Dimension::Person => "person",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ServiceRequest {
    pub item: usize,
    pub room: usize,
    pub person: usize,
}

impl ServiceRequest {
    pub fn get(&self, d: Dimension) -> usize {
        match d {
            Dimension::Item => self.item,
            Dimension::Room => self.room,
            Dimension::Person => self.person,
        }
    }
}

/// Names of the request dimensions. Rooms are named `room1`, `room2`, ...
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DialogDomain {
    pub items: Vec<String>,
    pub rooms: Vec<String>,
    pub persons: Vec<String>,
}

impl DialogDomain {
    /// Read the request sorts from the ranges of `curr_item`, `curr_room`
    /// and `curr_person`.
    pub fn from_kb(kb: &KnowledgeBase) -> Result<DialogDomain, DialogError> {
        let g = kb.ground()?;
        Ok(DialogDomain { items: g.range("curr_item")?, rooms: g.range("curr_room")?, persons: g.range("curr_person")? })
    }

    pub fn size(&self) -> usize {
        self.items.len() * self.rooms.len() * self.persons.len()
    }

    pub fn values(&self, d: Dimension) -> &[String] {
        match d {
            Dimension::Item => &self.items,
            Dimension::Room => &self.rooms,
            Dimension::Person => &self.persons,
        }
    }

    /// Index with the person varying fastest, then the room.
    pub fn index(&self, r: ServiceRequest) -> usize {
        (r.item * self.rooms.len() + r.room) * self.persons.len() + r.person
    }

    pub fn request(&self, mut i: usize) -> ServiceRequest {
        let person = i % self.persons.len();
        i /= self.persons.len();
        let room = i % self.rooms.len();
        ServiceRequest { item: i / self.rooms.len(), room, person }
    }

    pub fn room_place(&self, room: usize) -> Place {
        Place::parse(&self.rooms[room]).unwrap_or(Place::Room(room as u8 + 1))
    }

    pub fn describe(&self, r: ServiceRequest) -> String {
        format!("<{}, {}, {}>", self.items[r.item], self.rooms[r.room], self.persons[r.person])
    }

    /// Every dialog action: general questions, confirmations, then serves.
    pub fn actions(&self) -> Vec<DialogAction> {
        let mut out: Vec<DialogAction> = Dimension::ALL.iter().map(|d| DialogAction::Ask(*d)).collect();
        for d in Dimension::ALL {
            out.extend((0..self.values(d).len()).map(|v| DialogAction::Confirm(d, v)));
        }
        out.extend((0..self.size()).map(|i| DialogAction::Serve(self.request(i))));
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DialogAction {
    Ask(Dimension),
    Confirm(Dimension, usize),
    Serve(ServiceRequest),
}

impl DialogAction {
    pub fn is_question(&self) -> bool {
        !matches!(self, DialogAction::Serve(_))
    }
}

impl fmt::Display for DialogAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DialogAction::Ask(d) => write!(f, "ask({})", d.name()),
            DialogAction::Confirm(d, v) => write!(f, "confirm({}={v})", d.name()),
            DialogAction::Serve(r) => write!(f, "serve({},{},{})", r.item, r.room, r.person),
        }
    }
}

/// Answer to a question: a value index for general questions, or yes/no.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Observation {
    Value(usize),
    Yes,
    No,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObsModel {
    pub rho_item: f64,
    pub rho_room: f64,
    pub rho_person: f64,
    pub rho_conf: f64,
}

impl Default for ObsModel {
    fn default() -> Self {
        ObsModel { rho_item: 0.8, rho_room: 0.8, rho_person: 0.8, rho_conf: 0.9 }
    }
}

impl ObsModel {
    pub fn uniform(rho: f64, rho_conf: f64) -> ObsModel {
        ObsModel { rho_item: rho, rho_room: rho, rho_person: rho, rho_conf }
    }

    pub fn rho(&self, d: Dimension) -> f64 {
        match d {
            Dimension::Item => self.rho_item,
            Dimension::Room => self.rho_room,
            Dimension::Person => self.rho_person,
        }
    }

    pub fn validate(&self) -> Result<(), DialogError> {
        for p in [self.rho_item, self.rho_room, self.rho_person, self.rho_conf] {
            if !(p > 0.0 && p <= 1.0) {
                return Err(DialogError::Parameter(format!("recognition rate {p} not in (0,1]")));
            }
        }
        Ok(())
    }

    /// P(o | true request, question).
    pub fn likelihood(&self, domain: &DialogDomain, a: DialogAction, o: Observation, s: ServiceRequest) -> f64 {
        match (a, o) {
            (DialogAction::Ask(d), Observation::Value(v)) => {
                let n = domain.values(d).len();
                if v >= n {
                    0.0
                } else if s.get(d) == v {
                    self.rho(d)
                } else if n > 1 {
                    (1.0 - self.rho(d)) / (n - 1) as f64
                } else {
                    0.0
                }
            }
            (DialogAction::Confirm(d, v), Observation::Yes) => {
                if s.get(d) == v {
                    self.rho_conf
                } else {
                    1.0 - self.rho_conf
                }
            }
            (DialogAction::Confirm(d, v), Observation::No) => {
                if s.get(d) == v {
                    1.0 - self.rho_conf
                } else {
                    self.rho_conf
                }
            }
            _ => 0.0,
        }
    }

    /// Answers a question can receive.
    pub fn alphabet(&self, domain: &DialogDomain, a: DialogAction) -> Vec<Observation> {
        match a {
            DialogAction::Ask(d) => (0..domain.values(d).len()).map(Observation::Value).collect(),
            DialogAction::Confirm(..) => vec![Observation::Yes, Observation::No],
            DialogAction::Serve(_) => Vec::new(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, domain: &DialogDomain, a: DialogAction, s: ServiceRequest, rng: &mut R) -> Observation {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let alphabet = self.alphabet(domain, a);
        for o in &alphabet {
            acc += self.likelihood(domain, a, *o, s);
            if u < acc {
                return *o;
            }
        }
        *alphabet.last().expect("questions have answers")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DialogConfig {
    pub serve_bonus: f64,
    pub serve_penalty: f64,
    pub cost_general: f64,
    pub cost_confirm: f64,
    /// Largest number of actions in a dialog, the final serve included.
    pub max_turns: usize,
    pub gamma: f64,
    /// Size of the belief set used by the solver.
    pub belief_budget: usize,
}

impl Default for DialogConfig {
    fn default() -> Self {
        DialogConfig {
            serve_bonus: 80.0,
            serve_penalty: -80.0,
            cost_general: 2.0,
            cost_confirm: 1.5,
            max_turns: 20,
            gamma: 1.0,
            belief_budget: 2000,
        }
    }
}

impl DialogConfig {
    pub fn validate(&self) -> Result<(), DialogError> {
        if self.max_turns < 1 {
            return Err(DialogError::Parameter("max_turns must be at least 1".into()));
        }
        if !(self.cost_general > 0.0 && self.cost_confirm > 0.0) {
            return Err(DialogError::Parameter("question costs must be positive".into()));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(DialogError::Parameter("gamma must be in (0,1]".into()));
        }
        if self.belief_budget < 1 {
            return Err(DialogError::Parameter("belief_budget must be at least 1".into()));
        }
        Ok(())
    }

    pub fn cost(&self, a: DialogAction) -> f64 {
        match a {
            DialogAction::Ask(_) => self.cost_general,
            DialogAction::Confirm(..) => self.cost_confirm,
            DialogAction::Serve(_) => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Belief {
    pub probs: Vec<f64>,
}

impl Belief {
    pub fn uniform(n: usize) -> Belief {
        Belief { probs: vec![1.0 / n as f64; n] }
    }

    pub fn point(n: usize, i: usize) -> Belief {
        let mut probs = vec![0.0; n];
        probs[i] = 1.0;
        Belief { probs }
    }

    /// Normalize non-negative weights.
    pub fn from_weights(w: Vec<f64>) -> Option<Belief> {
        let total: f64 = w.iter().sum();
        (total > 0.0 && w.iter().all(|x| *x >= 0.0)).then(|| Belief { probs: w.into_iter().map(|x| x / total).collect() })
    }

    /// Entropy in nats.
    pub fn entropy(&self) -> f64 {
        -self.probs.iter().filter(|p| **p > 0.0).map(|p| p * p.ln()).sum::<f64>()
    }

    /// Most likely request index; the lowest index wins ties.
    pub fn argmax(&self) -> usize {
        argmax_index(&self.probs)
    }

    pub fn marginal(&self, domain: &DialogDomain, d: Dimension) -> Vec<f64> {
        let mut out = vec![0.0; domain.values(d).len()];
        for (i, p) in self.probs.iter().enumerate() {
            out[domain.request(i).get(d)] += p;
        }
        out
    }
}

/// The request prior from the knowledge base.
pub fn initial_belief(kb: &KnowledgeBase) -> Result<Belief, DialogError> {
    let g = kb.ground()?;
    let term = |a: &str| Atom { attr: a.to_string(), args: Vec::new(), value: None };
    let probs = g.distribution(&[term("curr_item"), term("curr_room"), term("curr_person")], &[])?;
    Ok(Belief { probs })
}

/// Bayes update after asking `a` and hearing `o`.
pub fn belief_update(
    domain: &DialogDomain,
    b: &Belief,
    a: DialogAction,
    o: Observation,
    m: &ObsModel,
) -> Result<Belief, DialogError> {
    if !a.is_question() {
        return Err(DialogError::NotAQuestion(a));
    }
    let w: Vec<f64> =
        b.probs.iter().enumerate().map(|(i, p)| p * m.likelihood(domain, a, o, domain.request(i))).collect();
    Belief::from_weights(w).ok_or(DialogError::ZeroLikelihood)
}

/// Navigation success probabilities between named places.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PnTable {
    rates: BTreeMap<(Place, Place), f64>,
}

impl PnTable {
    pub fn new() -> PnTable {
        PnTable::default()
    }

    pub fn set(&mut self, from: Place, to: Place, p: f64) {
        self.rates.insert((from, to), p);
    }

    pub fn get(&self, from: Place, to: Place) -> Result<f64, DialogError> {
        self.rates.get(&(from, to)).copied().ok_or(DialogError::MissingRate(from, to))
    }

    pub fn entries(&self) -> impl Iterator<Item = (Place, Place, f64)> + '_ {
        self.rates.iter().map(|((a, b), p)| (*a, *b, *p))
    }
}

/// Probability that serving `ad` fulfills `sr`: a correct delivery needs one
/// trip, a wrong one needs the trip, the way back, and a second trip.
pub fn delivery_transition(
    domain: &DialogDomain,
    sr: ServiceRequest,
    ad: ServiceRequest,
    pn: &PnTable,
) -> Result<f64, DialogError> {
    let goal = domain.room_place(sr.room);
    let direct = pn.get(Place::Shop, goal)?;
    if sr == ad {
        return Ok(direct);
    }
    let wrong = domain.room_place(ad.room);
    Ok(pn.get(Place::Shop, wrong)? * pn.get(wrong, Place::Shop)? * direct)
}

/// `t[sr * n + ad]` for every request pair.
#[derive(Debug, Clone, PartialEq)]
pub struct DeliveryTable {
    pub n: usize,
    pub t: Vec<f64>,
}

impl DeliveryTable {
    pub fn build(domain: &DialogDomain, pn: &PnTable) -> Result<DeliveryTable, DialogError> {
        let n = domain.size();
        let mut t = Vec::with_capacity(n * n);
        for s in 0..n {
            for a in 0..n {
                t.push(delivery_transition(domain, domain.request(s), domain.request(a), pn)?);
            }
        }
        Ok(DeliveryTable { n, t })
    }

    pub fn get(&self, sr: usize, ad: usize) -> f64 {
        self.t[sr * self.n + ad]
    }
}

/// Success rate of the model's own greedy policy, simulated on the model.
#[allow(clippy::too_many_arguments)]
pub fn estimate_navigation_success<R: Rng + ?Sized>(
    model: &LearnedModel,
    map: &GridMap,
    start: Place,
    goal: Place,
    trials: usize,
    max_steps: usize,
    cfg: &RMaxConfig,
    rng: &mut R,
) -> Result<f64, DialogError> {
    if trials < 1 {
        return Err(DialogError::Parameter("trials must be at least 1".into()));
    }
    let start = map.anchor(start).ok_or(ModelError::UnknownPlace(start))?;
    let policy = model_policy(model, map, goal, cfg)?;
    let goal: Vec<usize> = map.region(goal).iter().map(|c| map.state(*c).unwrap()).collect();
    Ok(estimate_success(&model.kernel_table(), &policy, map.state(start).unwrap(), &goal, trials, max_steps, rng))
}

/// Fraction of `trials` runs of `policy` on `kernel` that enter `goal`
/// within `max_steps`.
pub fn estimate_success<R: Rng + ?Sized>(
    kernel: &KernelTable,
    policy: &[Option<usize>],
    start: usize,
    goal: &[usize],
    trials: usize,
    max_steps: usize,
    rng: &mut R,
) -> f64 {
    let mut is_goal = vec![false; kernel.num_states()];
    for g in goal {
        is_goal[*g] = true;
    }
    let mut hits = 0;
    for _ in 0..trials {
        let mut s = start;
        let mut steps = 0;
        while !is_goal[s] && steps < max_steps {
            let Some(a) = policy[s] else { break };
            s = kernel.sample(s, a, rng);
            steps += 1;
        }
        hits += is_goal[s] as usize;
    }
    hits as f64 / trials as f64
}

#[derive(Debug, Clone)]
struct Alpha {
    action: usize,
    values: Vec<f64>,
}

/// A finite-horizon dialog policy: one set of alpha vectors per turn.
#[derive(Debug, Clone)]
pub struct DialogPolicy {
    domain: DialogDomain,
    actions: Vec<DialogAction>,
    stages: Vec<Arc<Vec<Alpha>>>,
    max_turns: usize,
    /// Number of beliefs the solver backed up.
    pub belief_count: usize,
}

impl DialogPolicy {
    /// Action at `turn` (0-based count of actions already taken); the last
    /// turn always serves the most likely request.
    pub fn action(&self, turn: usize, b: &Belief) -> DialogAction {
        if turn + 1 >= self.max_turns {
            return DialogAction::Serve(self.domain.request(b.argmax()));
        }
        self.actions[best_alpha(&self.stages[turn], &b.probs).action]
    }

    /// Expected value of `b` at `turn` under the solved policy.
    pub fn value(&self, turn: usize, b: &Belief) -> f64 {
        if turn + 1 >= self.max_turns {
            return f64::NAN;
        }
        let a = best_alpha(&self.stages[turn], &b.probs);
        dot(&a.values, &b.probs)
    }

    pub fn domain(&self) -> &DialogDomain {
        &self.domain
    }

    pub fn max_turns(&self) -> usize {
        self.max_turns
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn best_alpha<'a>(set: &'a [Alpha], b: &[f64]) -> &'a Alpha {
    let scores: Vec<f64> = set.iter().map(|a| dot(&a.values, b)).collect();
    &set[first_max(&scores)]
}

/// Index of the largest score; earlier entries win near-ties.
fn first_max(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in scores.iter().enumerate().skip(1) {
        if *v > scores[best] + 1e-12 * scores[best].abs().max(1.0) {
            best = i;
        }
    }
    best
}

fn argmax_index(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in p.iter().enumerate() {
        if *x > p[best] {
            best = i;
        }
    }
    best
}

fn belief_key(b: &[f64]) -> Vec<i64> {
    b.iter().map(|p| (p * 1e9).round() as i64).collect()
}

#[derive(PartialEq)]
struct Frontier(f64, usize);

impl Eq for Frontier {}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Frontier {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // most probable first, then earliest discovered
        self.0.total_cmp(&other.0).then(other.1.cmp(&self.1))
    }
}

/// Precomputed pieces of the point-based backup.
struct Backup<'a> {
    n: usize,
    cfg: &'a DialogConfig,
    /// Question actions come first in the action list; `costs[q]` is the
    /// cost of question `q`.
    costs: Vec<f64>,
    /// `likelihood[q][o][s]`
    likelihood: Vec<Vec<Vec<f64>>>,
    serve_alpha: Vec<Vec<f64>>,
}

impl Backup<'_> {
    fn successor(&self, b: &[f64], q: usize, o: usize) -> Option<Vec<f64>> {
        let w: Vec<f64> = b.iter().zip(&self.likelihood[q][o]).map(|(p, l)| p * l).collect();
        let po: f64 = w.iter().sum();
        (po > 0.0).then(|| w.iter().map(|x| x / po).collect())
    }

    /// Up to `budget` beliefs, best-first by the probability of the
    /// answers that lead to them.
    fn reachable(&self, b0: &[f64], budget: usize) -> Vec<Vec<f64>> {
        let mut points: Vec<Vec<f64>> = vec![b0.to_vec()];
        let mut seen: HashSet<Vec<i64>> = HashSet::from([belief_key(b0)]);
        let mut heap = BinaryHeap::from([Frontier(1.0, 0)]);
        while let Some(Frontier(reach, i)) = heap.pop() {
            for (q, lq) in self.likelihood.iter().enumerate() {
                for (o, lo) in lq.iter().enumerate() {
                    let po: f64 = points[i].iter().zip(lo).map(|(p, l)| p * l).sum();
                    if po <= 1e-12 {
                        continue;
                    }
                    let b = self.successor(&points[i], q, o).expect("positive likelihood");
                    if !seen.insert(belief_key(&b)) {
                        continue;
                    }
                    if points.len() >= budget {
                        return points;
                    }
                    heap.push(Frontier(reach * po, points.len()));
                    points.push(b);
                }
            }
        }
        points
    }

    /// Alpha sets for turns `0..horizon-1`; the last turn is the forced serve.
    fn stages(&self, points: &[Vec<f64>], horizon: usize) -> Vec<Arc<Vec<Alpha>>> {
        let n = self.n;
        let nq = self.likelihood.len();
        // successor of every (point, question, answer), deduplicated
        let mut succ: Vec<Vec<f64>> = Vec::new();
        let mut succ_seen: HashMap<Vec<i64>, usize> = HashMap::new();
        // links[point][question][answer] = successor index, or None for impossible answers
        let links: Vec<Vec<Vec<Option<usize>>>> = points
            .iter()
            .map(|b| {
                (0..nq)
                    .map(|q| {
                        (0..self.likelihood[q].len())
                            .map(|o| {
                                let nb = self.successor(b, q, o)?;
                                Some(*succ_seen.entry(belief_key(&nb)).or_insert_with(|| {
                                    succ.push(nb);
                                    succ.len() - 1
                                }))
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        drop(succ_seen);
        let serve_argmax: Vec<usize> = succ.iter().map(|b| argmax_index(b)).collect();
        let serve_set: Vec<Alpha> =
            self.serve_alpha.iter().enumerate().map(|(ad, v)| Alpha { action: nq + ad, values: v.clone() }).collect();

        let mut stages: Vec<Arc<Vec<Alpha>>> = (0..horizon.saturating_sub(1)).map(|_| Arc::new(Vec::new())).collect();
        let mut converged_at: Option<usize> = None;
        let mut scores = Vec::new();
        // stage t chooses the (t+1)-th action
        for t in (0..horizon.saturating_sub(1)).rev() {
            if let Some(c) = converged_at {
                stages[t] = stages[c].clone();
                continue;
            }
            let next = (t + 2 < horizon).then(|| stages[t + 1].clone());
            // value vector each successor continues with
            let chosen: Vec<&[f64]> = match &next {
                None => serve_argmax.iter().map(|i| self.serve_alpha[*i].as_slice()).collect(),
                Some(set) => {
                    let k = set.len();
                    let mut cols = vec![0.0; n * k];
                    for (j, a) in set.iter().enumerate() {
                        for s in 0..n {
                            cols[s * k + j] = a.values[s];
                        }
                    }
                    succ.iter()
                        .map(|b| {
                            scores.clear();
                            scores.resize(k, 0.0);
                            for (s, p) in b.iter().enumerate() {
                                if *p > 0.0 {
                                    for (v, c) in scores.iter_mut().zip(&cols[s * k..(s + 1) * k]) {
                                        *v += p * c;
                                    }
                                }
                            }
                            set[first_max(&scores)].values.as_slice()
                        })
                        .collect()
                }
            };
            // serving is always available, so every serve vector stays in the set
            let mut alphas = serve_set.clone();
            let mut index: HashSet<(usize, Vec<u64>)> =
                alphas.iter().map(|a| (a.action, a.values.iter().map(|x| x.to_bits()).collect())).collect();
            for (b, link) in points.iter().zip(&links) {
                let mut best: Option<(f64, usize, Vec<f64>)> = None;
                for (q, lq) in self.likelihood.iter().enumerate() {
                    let mut alpha = vec![-self.costs[q]; n];
                    for (lo, next) in lq.iter().zip(&link[q]) {
                        let Some(j) = next else { continue };
                        let c = chosen[*j];
                        for s in 0..n {
                            alpha[s] += self.cfg.gamma * lo[s] * c[s];
                        }
                    }
                    let v = dot(&alpha, b);
                    if best.as_ref().is_none_or(|x| v > x.0 + 1e-12 * x.0.abs().max(1.0)) {
                        best = Some((v, q, alpha));
                    }
                }
                for (ad, alpha) in self.serve_alpha.iter().enumerate() {
                    let v = dot(alpha, b);
                    if best.as_ref().is_none_or(|x| v > x.0 + 1e-12 * x.0.abs().max(1.0)) {
                        best = Some((v, nq + ad, alpha.clone()));
                    }
                }
                let (_, action, alpha) = best.expect("at least one action");
                if index.insert((action, alpha.iter().map(|x| x.to_bits()).collect())) {
                    alphas.push(Alpha { action, values: alpha });
                }
            }
            // once a stage reproduces the next one, earlier turns repeat it
            if let Some(next) = &next {
                let same = next.len() == alphas.len()
                    && next.iter().zip(&alphas).all(|(x, y)| {
                        x.action == y.action
                            && x.values.iter().zip(&y.values).all(|(a, b)| (a - b).abs() <= 1e-9 * a.abs().max(1.0))
                    });
                if same {
                    converged_at = Some(t + 1);
                    stages[t] = next.clone();
                    continue;
                }
            }
            stages[t] = Arc::new(alphas);
        }
        stages
    }
}

/// Rounds of trajectory-based belief expansion after the first solve.
const EXPANSION_ROUNDS: usize = 2;
const EXPANSION_SEED: u64 = 0x6b72726c;

fn sample_index<R: Rng + ?Sized>(weights: impl IntoIterator<Item = f64>, rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, w) in weights.into_iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
        if w > 0.0 {
            last = i;
        }
    }
    last
}

/// Point-based finite-horizon value backups. Half of the belief budget
/// goes to the beliefs most likely to be reached from `b0` over all
/// question/answer sequences; the rest is filled with beliefs visited by
/// simulated dialogs under the policy solved so far, which is then solved
/// again.
pub fn solve_dialog_policy(
    domain: &DialogDomain,
    b0: &Belief,
    cfg: &DialogConfig,
    m: &ObsModel,
    td: &DeliveryTable,
) -> Result<DialogPolicy, DialogError> {
    cfg.validate()?;
    m.validate()?;
    let n = domain.size();
    if b0.probs.len() != n || td.n != n {
        return Err(DialogError::Parameter("belief or delivery table does not match the domain".into()));
    }
    let actions = domain.actions();
    let questions: Vec<DialogAction> = actions.iter().copied().filter(DialogAction::is_question).collect();
    debug_assert!(actions[..questions.len()].iter().all(DialogAction::is_question));
    let likelihood = questions
        .iter()
        .map(|&a| {
            m.alphabet(domain, a)
                .into_iter()
                .map(|o| (0..n).map(|s| m.likelihood(domain, a, o, domain.request(s))).collect())
                .collect()
        })
        .collect();
    let serve_alpha = (0..n)
        .map(|ad| {
            (0..n)
                .map(|sr| {
                    let t = td.get(sr, ad);
                    t * cfg.serve_bonus + (1.0 - t) * cfg.serve_penalty
                })
                .collect()
        })
        .collect();
    let backup = Backup { n, cfg, costs: questions.iter().map(|a| cfg.cost(*a)).collect(), likelihood, serve_alpha };
    let horizon = cfg.max_turns;

    let mut points = backup.reachable(&b0.probs, cfg.belief_budget.div_ceil(2));
    let mut stages = backup.stages(&points, horizon);
    let mut seen: HashSet<Vec<i64>> = points.iter().map(|b| belief_key(b)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(EXPANSION_SEED);
    for round in 0..EXPANSION_ROUNDS {
        let room = cfg.belief_budget - points.len();
        if room == 0 || horizon < 2 {
            break;
        }
        let quota = room.div_ceil(EXPANSION_ROUNDS - round);
        let mut added = 0;
        'dialogs: for _ in 0..4 * quota {
            let truth = sample_index(b0.probs.iter().copied(), &mut rng);
            let mut b = b0.probs.clone();
            for stage in &stages {
                let a = best_alpha(stage, &b).action;
                if a >= questions.len() {
                    break;
                }
                let o = sample_index(backup.likelihood[a].iter().map(|lo| lo[truth]), &mut rng);
                b = backup.successor(&b, a, o).expect("the true request supports the sampled answer");
                if seen.insert(belief_key(&b)) {
                    points.push(b.clone());
                    added += 1;
                    if added >= quota {
                        break 'dialogs;
                    }
                }
            }
        }
        if added == 0 {
            break;
        }
        stages = backup.stages(&points, horizon);
    }
    Ok(DialogPolicy { domain: domain.clone(), actions, stages, max_turns: horizon, belief_count: points.len() })
}

/// One turn of a dialog.
#[derive(Debug, Clone, PartialEq)]
pub struct DialogTurn {
    pub action: DialogAction,
    pub observation: Option<Observation>,
    /// Belief after the observation.
    pub belief: Belief,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DialogRun {
    pub served: ServiceRequest,
    pub questions: usize,
    pub qa_cost: f64,
    pub forced: bool,
    pub turns: Vec<DialogTurn>,
}

/// Run a dialog against a simulated person whose request is `truth`.
pub fn simulate_dialog<R: Rng + ?Sized>(
    policy: &DialogPolicy,
    b0: &Belief,
    truth: ServiceRequest,
    m: &ObsModel,
    cfg: &DialogConfig,
    rng: &mut R,
) -> Result<DialogRun, DialogError> {
    let domain = policy.domain();
    let mut b = b0.clone();
    let mut turns = Vec::new();
    let mut qa_cost = 0.0;
    for turn in 0..policy.max_turns() {
        let a = policy.action(turn, &b);
        if let DialogAction::Serve(served) = a {
            turns.push(DialogTurn { action: a, observation: None, belief: b });
            let questions = turns.len() - 1;
            return Ok(DialogRun { served, questions, qa_cost, forced: turn + 1 == policy.max_turns(), turns });
        }
        let o = m.sample(domain, a, truth, rng);
        qa_cost += cfg.cost(a);
        b = belief_update(domain, &b, a, o, m)?;
        turns.push(DialogTurn { action: a, observation: Some(o), belief: b.clone() });
    }
    unreachable!("the last turn always serves")
}

/// Interactive dialog state for a console session.
#[derive(Debug, Clone)]
pub struct DialogSession<'a> {
    policy: &'a DialogPolicy,
    model: ObsModel,
    pub belief: Belief,
    pub turn: usize,
    pub qa_cost: f64,
    cfg: DialogConfig,
}

impl<'a> DialogSession<'a> {
    pub fn new(policy: &'a DialogPolicy, b0: Belief, model: ObsModel, cfg: DialogConfig) -> DialogSession<'a> {
        DialogSession { policy, model, belief: b0, turn: 0, qa_cost: 0.0, cfg }
    }

    pub fn next_action(&self) -> DialogAction {
        self.policy.action(self.turn, &self.belief)
    }

    /// Prompt text for an action.
    pub fn prompt(&self, a: DialogAction) -> String {
        let d = self.policy.domain();
        match a {
            DialogAction::Ask(Dimension::Item) => format!("What should I deliver? ({})", d.items.join("/")),
            DialogAction::Ask(Dimension::Room) => format!("Where should it go? ({})", d.rooms.join("/")),
            DialogAction::Ask(Dimension::Person) => format!("Who is it for? ({})", d.persons.join("/")),
            DialogAction::Confirm(dim, v) => format!("Is the {} {}? (yes/no)", dim.name(), d.values(dim)[v]),
            DialogAction::Serve(r) => format!("Delivering {}.", d.describe(r)),
        }
    }

    /// Parse a typed answer to `a`.
    pub fn parse_answer(&self, a: DialogAction, text: &str) -> Result<Observation, DialogError> {
        let text = text.trim();
        let bad = || DialogError::BadAnswer { action: a, answer: text.to_string() };
        match a {
            DialogAction::Ask(d) => {
                self.policy.domain().values(d).iter().position(|v| v == text).map(Observation::Value).ok_or_else(bad)
            }
            DialogAction::Confirm(..) => match text {
                "yes" | "y" => Ok(Observation::Yes),
                "no" | "n" => Ok(Observation::No),
                _ => Err(bad()),
            },
            DialogAction::Serve(_) => Err(DialogError::NotAQuestion(a)),
        }
    }

    pub fn observe(&mut self, a: DialogAction, o: Observation) -> Result<(), DialogError> {
        self.belief = belief_update(self.policy.domain(), &self.belief, a, o, &self.model)?;
        self.qa_cost += self.cfg.cost(a);
        self.turn += 1;
        Ok(())
    }
}
