//! Delivery trials: identify a request by dialog, then carry it out in the
//! true environment, returning to the shop and trying again after a wrong
//! delivery. Free-time learning feeds navigation knowledge into the
//! knowledge base between tasks.

use std::collections::BTreeMap;

use rand::Rng;
use thiserror::Error;

use crate::dialog::{
    estimate_success, simulate_dialog, solve_dialog_policy, Belief, DeliveryTable, DialogConfig, DialogDomain,
    DialogError, DialogPolicy, ObsModel, PnTable, ServiceRequest,
};
use crate::grid::{EnvConfig, GridMap, KernelTable, Move, Place};
use crate::kb::{KbError, KnowledgeBase};
use crate::mdp::{value_iteration, MdpError};
use crate::navkb::{import_model, kernel_of, navigation_kb_text, navigation_spec};
use crate::rmax::{goal_mdp, learn_with_counts, LearnOptions, LearnedModel, ModelError, NavTask, RMaxConfig, TransitionCounts};
use crate::task_model::{construct_task_mdp, RewardSpec, TaskModelError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DeliveryError {
    #[error(transparent)]
    Dialog(#[from] DialogError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    TaskModel(#[from] TaskModelError),
    #[error(transparent)]
    Mdp(#[from] MdpError),
    #[error("knowledge base: {0}")]
    Kb(#[from] KbError),
    #[error("{0}")]
    Setup(String),
}

impl DeliveryError {
    pub fn is_resource(&self) -> bool {
        match self {
            DeliveryError::TaskModel(e) => e.is_resource(),
            DeliveryError::Kb(e) => e.is_resource(),
            DeliveryError::Mdp(MdpError::TooManyStates { .. }) => true,
            _ => false,
        }
    }
}

pub const ITEMS: [&str; 3] = ["coke", "coffee", "sandwich"];

/// Request sorts and priors: every person asks for deliveries to their own
/// office with probability 0.8.
pub fn request_kb_text(rooms: usize, offices: &[(&str, Place)]) -> String {
    let rooms: Vec<String> = (1..=rooms).map(|k| Place::Room(k as u8).to_string()).collect();
    let persons: Vec<&str> = offices.iter().map(|o| o.0).collect();
    let mut text = format!(
        "sort item = {{{}}}.
sort room = {{{}}}.
sort person = {{{}}}.
attr office(person, room) : boolean.
attr curr_item : item. attr curr_room : room. attr curr_person : person.
random(curr_item). random(curr_room). random(curr_person).
",
        ITEMS.join(", "),
        rooms.join(", "),
        persons.join(", ")
    );
    for (p, room) in offices {
        text.push_str(&format!("office({p}, {room}).\n"));
    }
    text.push_str("pr(curr_room=R | curr_person=P, office(P, R)=true) = 8/10.\n");
    text
}

/// Request priors plus navigation knowledge for `map`.
pub fn delivery_kb(map: &GridMap, times: &[&str], offices: &[(&str, Place)]) -> Result<KnowledgeBase, DeliveryError> {
    for (p, room) in offices {
        if !matches!(room, Place::Room(_)) || !map.has_place(*room) {
            return Err(DeliveryError::Setup(format!("office of {p} is not a room of the map: {room}")));
        }
    }
    let text = format!("{}{}", request_kb_text(map.room_count(), offices), navigation_kb_text(map, times));
    Ok(KnowledgeBase::parse(&text)?)
}

/// Step cap for one navigation leg.
pub fn leg_cap(map: &GridMap) -> usize {
    4 * (map.width() + map.height())
}

/// Navigation knowledge as a kernel with one greedy policy per place.
#[derive(Debug, Clone)]
pub struct NavigationModel {
    map: GridMap,
    kernel: KernelTable,
    policies: BTreeMap<Place, Vec<Option<usize>>>,
}

impl NavigationModel {
    pub fn from_kernel(map: &GridMap, kernel: KernelTable, rewards: RewardSpec, gamma: f64) -> Result<Self, DeliveryError> {
        let mut policies = BTreeMap::new();
        for place in map.places() {
            let goal: Vec<usize> = map.region(place).iter().map(|c| map.state(*c).unwrap()).collect();
            let mdp = goal_mdp(&kernel, &goal, rewards.step, rewards.goal_bonus);
            policies.insert(place, value_iteration(&mdp, gamma, 1e-6)?.actions);
        }
        Ok(NavigationModel { map: map.clone(), kernel, policies })
    }

    /// Plan from the knowledge base's transition model under `time`.
    pub fn from_kb(kb: &KnowledgeBase, map: &GridMap, time: &str, rewards: RewardSpec, gamma: f64) -> Result<Self, DeliveryError> {
        let spec = navigation_spec(kb, map, Place::Shop, rewards).with_goal(Vec::new());
        let mdp = construct_task_mdp(kb, &spec, &[(vec![("time".to_string(), time.to_string())], 1.0)])?;
        let cells: Vec<String> = map.open_cells().iter().map(|c| c.to_string()).collect();
        if mdp.state_names != cells {
            return Err(DeliveryError::Setup("knowledge base cells do not match the map".into()));
        }
        NavigationModel::from_kernel(map, kernel_of(&mdp), rewards, gamma)
    }

    pub fn from_learned(model: &LearnedModel, map: &GridMap, rewards: RewardSpec, gamma: f64) -> Result<Self, DeliveryError> {
        NavigationModel::from_kernel(map, model.kernel_table(), rewards, gamma)
    }

    pub fn kernel(&self) -> &KernelTable {
        &self.kernel
    }

    pub fn policy(&self, goal: Place) -> Result<&[Option<usize>], DeliveryError> {
        self.policies.get(&goal).map(Vec::as_slice).ok_or(DeliveryError::Model(ModelError::UnknownPlace(goal)))
    }

    /// Success rate of reaching `to` from the anchor of `from`, simulated
    /// on this model.
    pub fn success_rate<R: Rng + ?Sized>(&self, from: Place, to: Place, trials: usize, max_steps: usize, rng: &mut R) -> Result<f64, DeliveryError> {
        let start = self.map.anchor(from).ok_or(ModelError::UnknownPlace(from))?;
        let goal: Vec<usize> = self.map.region(to).iter().map(|c| self.map.state(*c).unwrap()).collect();
        let policy = self.policy(to)?;
        Ok(estimate_success(&self.kernel, policy, self.map.state(start).unwrap(), &goal, trials, max_steps, rng))
    }

    /// Shop-to-room and room-to-shop success rates for every room.
    pub fn pn_table<R: Rng + ?Sized>(&self, trials: usize, max_steps: usize, rng: &mut R) -> Result<PnTable, DeliveryError> {
        let mut pn = PnTable::new();
        for room in self.map.places().into_iter().skip(1) {
            pn.set(Place::Shop, room, self.success_rate(Place::Shop, room, trials, max_steps, rng)?);
            pn.set(room, Place::Shop, self.success_rate(room, Place::Shop, trials, max_steps, rng)?);
        }
        Ok(pn)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeliverySettings {
    pub dialog: DialogConfig,
    pub obs: ObsModel,
    /// Simulated navigation runs per success-rate estimate.
    pub pn_trials: usize,
    pub nav_rewards: RewardSpec,
    pub nav_gamma: f64,
}

impl Default for DeliverySettings {
    fn default() -> Self {
        DeliverySettings {
            dialog: DialogConfig::default(),
            obs: ObsModel::default(),
            pn_trials: 1000,
            nav_rewards: RewardSpec::default(),
            nav_gamma: 0.95,
        }
    }
}

/// Everything the robot knows when it takes delivery requests.
#[derive(Debug, Clone)]
pub struct DeliveryAgent {
    pub domain: DialogDomain,
    pub prior: Belief,
    pub nav: NavigationModel,
    pub pn: PnTable,
    pub table: DeliveryTable,
    pub policy: DialogPolicy,
    pub settings: DeliverySettings,
}

impl DeliveryAgent {
    pub fn new<R: Rng + ?Sized>(
        kb: &KnowledgeBase,
        map: &GridMap,
        time: &str,
        settings: DeliverySettings,
        rng: &mut R,
    ) -> Result<DeliveryAgent, DeliveryError> {
        let nav = NavigationModel::from_kb(kb, map, time, settings.nav_rewards, settings.nav_gamma)?;
        DeliveryAgent::with_navigation(kb, nav, settings, rng)
    }

    pub fn with_navigation<R: Rng + ?Sized>(
        kb: &KnowledgeBase,
        nav: NavigationModel,
        settings: DeliverySettings,
        rng: &mut R,
    ) -> Result<DeliveryAgent, DeliveryError> {
        let domain = DialogDomain::from_kb(kb)?;
        let prior = crate::dialog::initial_belief(kb)?;
        let pn = nav.pn_table(settings.pn_trials, leg_cap(&nav.map), rng)?;
        let table = DeliveryTable::build(&domain, &pn)?;
        let policy = solve_dialog_policy(&domain, &prior, &settings.dialog, &settings.obs, &table)?;
        Ok(DeliveryAgent { domain, prior, nav, pn, table, policy, settings })
    }

    /// Delivery-transition fulfillment probability of the dialog's serve distribution:
    /// `sum over (truth, served) of P(truth, served) * tD(truth, served)`,
    /// with `P` estimated from `dialogs` simulated dialogs.
    pub fn predicted_fulfillment<R: Rng + ?Sized>(&self, dialogs: usize, rng: &mut R) -> Result<f64, DeliveryError> {
        let mut total = 0.0;
        for _ in 0..dialogs {
            let truth = sample_request(&self.prior, rng);
            let run = simulate_dialog(&self.policy, &self.prior, self.domain.request(truth), &self.settings.obs, &self.settings.dialog, rng)?;
            total += self.table.get(truth, self.domain.index(run.served));
        }
        Ok(total / dialogs as f64)
    }
}

fn sample_request<R: Rng + ?Sized>(b: &Belief, rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in b.probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    b.probs.iter().rposition(|p| *p > 0.0).unwrap_or(0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeliveryOutcome {
    pub truth: ServiceRequest,
    pub served: ServiceRequest,
    pub fulfilled: bool,
    pub total_reward: f64,
    pub serve_reward: f64,
    pub qa_cost: f64,
    pub questions: usize,
    pub nav_steps: usize,
    pub redelivered: bool,
}

struct Leg {
    end: usize,
    steps: usize,
    reached: bool,
}

fn walk<R: Rng + ?Sized>(kernel: &KernelTable, policy: &[Option<usize>], start: usize, goal: &[bool], cap: usize, rng: &mut R) -> Leg {
    let mut s = start;
    let mut steps = 0;
    while !goal[s] && steps < cap {
        let Some(a) = policy[s] else { break };
        s = kernel.sample(s, a, rng);
        steps += 1;
    }
    Leg { end: s, steps, reached: goal[s] }
}

/// One delivery: a dialog, then navigation legs in `env`. After a wrong
/// delivery the robot returns to the shop and, after a second dialog that
/// is assumed to identify the request correctly at no cost, delivers again.
/// The request is fulfilled when every leg arrives within the step cap.
pub fn run_delivery_trial<R: Rng + ?Sized>(agent: &DeliveryAgent, env: &EnvConfig, rng: &mut R) -> Result<DeliveryOutcome, DeliveryError> {
    let map = &env.map;
    if map.hash() != agent.nav.map.hash() {
        return Err(DeliveryError::Model(ModelError::MapMismatch { expected: agent.nav.map.hash(), found: map.hash() }));
    }
    let domain = &agent.domain;
    let truth = domain.request(sample_request(&agent.prior, rng));
    let run = simulate_dialog(&agent.policy, &agent.prior, truth, &agent.settings.obs, &agent.settings.dialog, rng)?;
    let kernel = env.kernel_table();
    let cap = leg_cap(map);
    let goal_mask = |p: Place| {
        let mut mask = vec![false; map.num_states()];
        for c in map.region(p) {
            mask[map.state(c).unwrap()] = true;
        }
        mask
    };
    let mut route = vec![domain.room_place(run.served.room)];
    let redelivered = run.served != truth;
    if redelivered {
        route.push(Place::Shop);
        route.push(domain.room_place(truth.room));
    }
    let shop = map.anchor(Place::Shop).ok_or(ModelError::UnknownPlace(Place::Shop))?;
    let mut s = map.state(shop).unwrap();
    let mut nav_steps = 0;
    let mut fulfilled = true;
    for place in route {
        let leg = walk(&kernel, agent.nav.policy(place)?, s, &goal_mask(place), cap, rng);
        nav_steps += leg.steps;
        s = leg.end;
        if !leg.reached {
            fulfilled = false;
            break;
        }
    }
    let cfg = &agent.settings.dialog;
    let serve_reward = if fulfilled { cfg.serve_bonus } else { cfg.serve_penalty };
    Ok(DeliveryOutcome {
        truth,
        served: run.served,
        fulfilled,
        total_reward: serve_reward - run.qa_cost + env.step_cost * nav_steps as f64,
        serve_reward,
        qa_cost: run.qa_cost,
        questions: run.questions,
        nav_steps,
        redelivered,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FreeTimeBudget {
    pub episodes: usize,
}

#[derive(Debug, Clone)]
pub struct FreeTimeResult {
    pub kb: KnowledgeBase,
    /// Everything learned, under the last task practiced.
    pub model: LearnedModel,
    /// Tasks in the order they were practiced.
    pub tasks: Vec<NavTask>,
}

/// Navigation tasks between distinct places, the pool the task selector
/// draws from.
pub fn navigation_tasks(map: &GridMap) -> Vec<NavTask> {
    let places = map.places();
    let mut out = Vec::new();
    for &start in &places {
        for &goal in &places {
            if start != goal {
                out.push(NavTask { start, goal });
            }
        }
    }
    out
}

/// Practice uniformly chosen navigation tasks for `budget.episodes`
/// episodes, sharing one set of transition counts, then write every known
/// pair into the knowledge base under `time`.
pub fn free_time_learning<R: Rng + ?Sized>(
    kb: &KnowledgeBase,
    env: &EnvConfig,
    budget: FreeTimeBudget,
    cfg: &RMaxConfig,
    time: &str,
    rng: &mut R,
) -> Result<FreeTimeResult, DeliveryError> {
    cfg.validate().map_err(DeliveryError::Setup)?;
    let map = &env.map;
    let pool = navigation_tasks(map);
    let mut counts = TransitionCounts::new(map.num_states(), Move::ALL.len());
    let mut tasks = Vec::with_capacity(budget.episodes);
    let opts = LearnOptions { episodes: 1, max_steps: leg_cap(map) };
    for _ in 0..budget.episodes {
        let task = pool[rng.random_range(0..pool.len())];
        learn_with_counts(env, task, cfg, &mut counts, opts, rng)?;
        tasks.push(task);
    }
    let last = tasks.last().copied().unwrap_or(pool[0]);
    let model = LearnedModel::from_counts(map, last, cfg.m_min, &counts);
    if budget.episodes == 0 {
        return Ok(FreeTimeResult { kb: kb.clone(), model, tasks });
    }
    let kb = import_model(kb, map, &model, time)?;
    Ok(FreeTimeResult { kb, model, tasks })
}
