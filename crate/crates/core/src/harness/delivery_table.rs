//! Delivery experiments on the office map: the overall delivery table, the
//! dialog-completion CDFs and the serve-time entropy table.
//!
//! The "learning" condition practices navigation at the blocking rate the
//! trials run under; the other condition reuses a model practiced at
//! `delivery.outdated_br`. Paired trials of the two conditions draw from
//! the same random stream.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::Exp1;

use super::stats::{mean, paired_permutation_test, std_dev};
use super::{flag, num, parallel_map, stream, ExperimentConfig, HarnessError, Table};
use crate::delivery::{delivery_kb, free_time_learning, run_delivery_trial, DeliveryAgent, DeliverySettings, FreeTimeBudget, NavigationModel};
use crate::dialog::{simulate_dialog, Belief, DialogAction};
use crate::grid::{EnvConfig, GridMap, Place};
use crate::kb::KnowledgeBase;
use crate::rmax::RMaxConfig;

const TIME: &str = "now";

/// Everything needed to train delivery agents.
#[derive(Debug, Clone)]
pub struct DeliverySetup {
    pub map: GridMap,
    pub kb: KnowledgeBase,
    pub action_success: f64,
    pub settings: DeliverySettings,
    pub rmax: RMaxConfig,
    pub practice_episodes: usize,
    /// Plan on the true kernel instead of a learned model.
    pub exact: bool,
}

impl DeliverySetup {
    pub fn from_config(cfg: &ExperimentConfig) -> Result<DeliverySetup, HarnessError> {
        let map = cfg.delivery_map()?;
        let offices = cfg.offices()?;
        let offices: Vec<(&str, Place)> = offices.iter().map(|(p, r)| (p.as_str(), *r)).collect();
        let kb = delivery_kb(&map, &[TIME], &offices).map_err(|e| HarnessError::Config(e.to_string()))?;
        Ok(DeliverySetup {
            map,
            kb,
            action_success: cfg.f64("delivery.action_success")?,
            settings: cfg.delivery_settings()?,
            rmax: cfg.rmax()?,
            practice_episodes: cfg.usize("delivery.practice_episodes")?,
            exact: match cfg.get("delivery.model")? {
                "learned" => false,
                "exact" => true,
                other => return Err(HarnessError::Config(format!("delivery.model: `{other}` is neither learned nor exact"))),
            },
        })
    }

    pub fn env(&self, br: f64) -> EnvConfig {
        EnvConfig::new(self.map.clone()).with_blocking_rate(br).with_action_success(self.action_success)
    }

    /// An agent whose navigation knowledge comes from free-time practice at
    /// blocking rate `br`.
    pub fn agent(&self, br: f64, seed: u64) -> Result<DeliveryAgent, HarnessError> {
        if self.exact {
            let s = &self.settings;
            let nav = NavigationModel::from_kernel(&self.map, self.env(br).kernel_table(), s.nav_rewards, s.nav_gamma)?;
            let mut rng = stream(seed, &format!("agent/{}", num(br)));
            return Ok(DeliveryAgent::with_navigation(&self.kb, nav, s.clone(), &mut rng)?);
        }
        let mut rng = stream(seed, &format!("practice/{}", num(br)));
        let budget = FreeTimeBudget { episodes: self.practice_episodes };
        let learned = free_time_learning(&self.kb, &self.env(br), budget, &self.rmax, TIME, &mut rng)?;
        let mut rng = stream(seed, &format!("agent/{}", num(br)));
        Ok(DeliveryAgent::new(&learned.kb, &self.map, TIME, self.settings.clone(), &mut rng)?)
    }

    /// Agents for every `(seed, br)` pair, built in parallel.
    pub fn agents(&self, keys: &[(u64, f64)], threads: usize) -> Result<BTreeMap<(u64, String), DeliveryAgent>, HarnessError> {
        let built = parallel_map(keys, threads, |&(seed, br)| self.agent(br, seed));
        keys.iter().zip(built).map(|(&(seed, br), a)| Ok(((seed, num(br)), a?))).collect()
    }
}

fn lookup(agents: &BTreeMap<(u64, String), DeliveryAgent>, seed: u64, br: f64) -> &DeliveryAgent {
    &agents[&(seed, num(br))]
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRow {
    pub seed: u64,
    pub br: f64,
    pub learning: bool,
    pub reward: f64,
    /// Serve bonus or penalty minus question costs.
    pub dialog_reward: f64,
    pub fulfilled: bool,
    pub qa_cost: f64,
    pub nav_steps: usize,
    pub redelivered: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub br: f64,
    pub learning: bool,
    pub trials: usize,
    pub reward: f64,
    pub dialog_reward: f64,
    pub fulfilled: f64,
    pub qa_cost: f64,
}

/// Paired-permutation p-values of learning against outdated at one rate.
#[derive(Debug, Clone, PartialEq)]
pub struct PValues {
    pub br: f64,
    pub reward: f64,
    pub dialog_reward: f64,
    pub fulfilled: f64,
    pub qa_cost: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeliveryTableResult {
    pub trials: Vec<TrialRow>,
    pub cells: Vec<CellSummary>,
    pub p_values: Vec<PValues>,
}

impl DeliveryTableResult {
    pub fn cell(&self, br: f64, learning: bool) -> Option<&CellSummary> {
        self.cells.iter().find(|c| c.br == br && c.learning == learning)
    }

    pub fn p(&self, br: f64) -> Option<&PValues> {
        self.p_values.iter().find(|p| p.br == br)
    }

    pub fn tables(&self) -> Vec<Table> {
        let mut trials = Table::new(
            "delivery_trials",
            &["seed", "br", "learning_flag", "reward", "dialog_reward", "fulfilled", "qa_cost", "nav_steps", "redelivered"],
        );
        for t in &self.trials {
            trials.push(vec![
                t.seed.to_string(),
                num(t.br),
                flag(t.learning),
                num(t.reward),
                num(t.dialog_reward),
                flag(t.fulfilled),
                num(t.qa_cost),
                t.nav_steps.to_string(),
                flag(t.redelivered),
            ]);
        }
        let mut table = Table::new(
            "delivery_table",
            &[
                "br",
                "learning_flag",
                "trials",
                "reward",
                "dialog_reward",
                "fulfilled",
                "qa_cost",
                "p_reward",
                "p_dialog_reward",
                "p_fulfilled",
                "p_qa_cost",
            ],
        );
        for c in &self.cells {
            let p = self.p(c.br).expect("p-values for every rate");
            table.push(vec![
                num(c.br),
                flag(c.learning),
                c.trials.to_string(),
                num(c.reward),
                num(c.dialog_reward),
                num(c.fulfilled),
                num(c.qa_cost),
                num(p.reward),
                num(p.dialog_reward),
                num(p.fulfilled),
                num(p.qa_cost),
            ]);
        }
        vec![trials, table]
    }
}

fn trial_row(seed: u64, br: f64, learning: bool, agent: &DeliveryAgent, env: &EnvConfig, tag: &str) -> Result<TrialRow, HarnessError> {
    let o = run_delivery_trial(agent, env, &mut stream(seed, tag))?;
    Ok(TrialRow {
        seed,
        br,
        learning,
        reward: o.total_reward,
        dialog_reward: o.serve_reward - o.qa_cost,
        fulfilled: o.fulfilled,
        qa_cost: o.qa_cost,
        nav_steps: o.nav_steps,
        redelivered: o.redelivered,
    })
}

pub fn run_delivery_table(cfg: &ExperimentConfig) -> Result<DeliveryTableResult, HarnessError> {
    cfg.validate()?;
    let setup = DeliverySetup::from_config(cfg)?;
    let brs = cfg.f64_list("delivery.brs")?;
    let outdated = cfg.f64("delivery.outdated_br")?;
    let n = cfg.usize("delivery.trials")?;
    let mut keys: Vec<(u64, f64)> = Vec::new();
    for &seed in &cfg.seeds {
        for &br in brs.iter().chain([&outdated]) {
            if !keys.iter().any(|k| k.0 == seed && num(k.1) == num(br)) {
                keys.push((seed, br));
            }
        }
    }
    let agents = setup.agents(&keys, cfg.threads())?;
    let jobs: Vec<(u64, f64)> = cfg.seeds.iter().flat_map(|&s| brs.iter().map(move |&br| (s, br))).collect();
    let results = parallel_map(&jobs, cfg.threads(), |&(seed, br)| -> Result<Vec<TrialRow>, HarnessError> {
        let env = setup.env(br);
        let (fresh, old) = (lookup(&agents, seed, br), lookup(&agents, seed, outdated));
        let mut rows = Vec::with_capacity(2 * n);
        for i in 0..n {
            let tag = format!("trial/{}/{i}", num(br));
            rows.push(trial_row(seed, br, true, fresh, &env, &tag)?);
            rows.push(trial_row(seed, br, false, old, &env, &tag)?);
        }
        Ok(rows)
    });
    let mut trials = Vec::new();
    for r in results {
        trials.extend(r?);
    }
    let permutations = cfg.usize("stats.permutations")?;
    let mut cells = Vec::new();
    let mut p_values = Vec::new();
    for &br in &brs {
        let pick = |learning: bool| -> Vec<&TrialRow> { trials.iter().filter(|t| t.br == br && t.learning == learning).collect() };
        let (on, off) = (pick(true), pick(false));
        for (learning, rows) in [(true, &on), (false, &off)] {
            let col = |f: &dyn Fn(&TrialRow) -> f64| mean(&rows.iter().map(|t| f(t)).collect::<Vec<_>>());
            cells.push(CellSummary {
                br,
                learning,
                trials: rows.len(),
                reward: col(&|t| t.reward),
                dialog_reward: col(&|t| t.dialog_reward),
                fulfilled: col(&|t| t.fulfilled as u8 as f64),
                qa_cost: col(&|t| t.qa_cost),
            });
        }
        let test = |metric: &str, f: &dyn Fn(&TrialRow) -> f64| {
            let a: Vec<f64> = on.iter().map(|t| f(t)).collect();
            let b: Vec<f64> = off.iter().map(|t| f(t)).collect();
            let mut rng = stream(cfg.seeds[0], &format!("permutation/{}/{metric}", num(br)));
            paired_permutation_test(&a, &b, permutations, &mut rng)
        };
        p_values.push(PValues {
            br,
            reward: test("reward", &|t| t.reward),
            dialog_reward: test("dialog_reward", &|t| t.dialog_reward),
            fulfilled: test("fulfilled", &|t| t.fulfilled as u8 as f64),
            qa_cost: test("qa_cost", &|t| t.qa_cost),
        });
    }
    Ok(DeliveryTableResult { trials, cells, p_values })
}

/// Rooms ordered by path length from the shop; ties keep room order.
pub fn rooms_by_distance(map: &GridMap) -> Vec<(Place, usize)> {
    let shop = map.anchor(Place::Shop).expect("maps have a shop");
    let mut out: Vec<(Place, usize)> = map
        .places()
        .into_iter()
        .filter(|p| matches!(p, Place::Room(_)))
        .map(|p| (p, map.distances_to(&map.region(p))[map.state(shop).unwrap()].unwrap_or(usize::MAX)))
        .collect();
    out.sort_by_key(|(_, d)| *d);
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct DialogCdfResult {
    pub br: f64,
    /// QA cost of every simulated dialog, keyed by `(learning, room)`.
    pub costs: BTreeMap<(bool, Place), Vec<f64>>,
}

impl DialogCdfResult {
    /// Fraction of dialogs completed at or below each observed cost.
    pub fn cdf(&self, learning: bool, room: Place) -> Vec<(f64, f64)> {
        let mut v = self.costs[&(learning, room)].clone();
        v.sort_by(f64::total_cmp);
        let n = v.len() as f64;
        let mut out: Vec<(f64, f64)> = Vec::new();
        for (i, c) in v.iter().enumerate() {
            match out.last_mut() {
                Some(last) if last.0 == *c => last.1 = (i + 1) as f64 / n,
                _ => out.push((*c, (i + 1) as f64 / n)),
            }
        }
        out
    }

    /// Fraction of dialogs with QA cost at most `x`.
    pub fn cdf_at(&self, learning: bool, room: Place, x: f64) -> f64 {
        let v = &self.costs[&(learning, room)];
        v.iter().filter(|c| **c <= x + 1e-9).count() as f64 / v.len() as f64
    }

    pub fn mean_cost(&self, learning: bool, room: Place) -> f64 {
        mean(&self.costs[&(learning, room)])
    }

    pub fn tables(&self) -> Vec<Table> {
        let mut cdf = Table::new("dialog_cdf", &["br", "learning_flag", "room", "qa_cost", "fraction"]);
        let mut summary = Table::new("dialog_cdf_summary", &["br", "learning_flag", "room", "dialogs", "mean_qa_cost"]);
        for &(learning, room) in self.costs.keys() {
            for (c, f) in self.cdf(learning, room) {
                cdf.push(vec![num(self.br), flag(learning), room.to_string(), num(c), num(f)]);
            }
            summary.push(vec![
                num(self.br),
                flag(learning),
                room.to_string(),
                self.costs[&(learning, room)].len().to_string(),
                num(self.mean_cost(learning, room)),
            ]);
        }
        vec![cdf, summary]
    }
}

/// Sample an index from `weights` restricted to `keep`.
fn sample_where<R: Rng + ?Sized>(weights: &[f64], keep: impl Fn(usize) -> bool, rng: &mut R) -> usize {
    let total: f64 = weights.iter().enumerate().filter(|(i, _)| keep(*i)).map(|(_, w)| w).sum();
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last = 0;
    for (i, w) in weights.iter().enumerate().filter(|(i, _)| keep(*i)) {
        acc += w;
        last = i;
        if u < acc {
            return i;
        }
    }
    last
}

pub fn run_dialog_cdf(cfg: &ExperimentConfig) -> Result<DialogCdfResult, HarnessError> {
    cfg.validate()?;
    let setup = DeliverySetup::from_config(cfg)?;
    let br = cfg.f64("cdf.br")?;
    let outdated = cfg.f64("delivery.outdated_br")?;
    let dialogs = cfg.usize("cdf.dialogs")?;
    let rooms = match cfg.cdf_rooms()? {
        Some(r) => r,
        None => {
            let order = rooms_by_distance(&setup.map);
            vec![order[0].0, order[order.len() - 1].0]
        }
    };
    let keys: Vec<(u64, f64)> = cfg.seeds.iter().flat_map(|&s| [(s, br), (s, outdated)]).collect();
    let agents = setup.agents(&keys, cfg.threads())?;
    let mut costs: BTreeMap<(bool, Place), Vec<f64>> = BTreeMap::new();
    for &seed in &cfg.seeds {
        for &room in &rooms {
            for (learning, agent) in [(true, lookup(&agents, seed, br)), (false, lookup(&agents, seed, outdated))] {
                let domain = &agent.domain;
                let room_index = domain.rooms.iter().position(|r| *r == room.to_string()).ok_or_else(|| {
                    HarnessError::Config(format!("cdf.rooms: {room} is not a room of the delivery map"))
                })?;
                let out = costs.entry((learning, room)).or_default();
                for i in 0..dialogs {
                    let mut rng = stream(seed, &format!("cdf/{room}/{i}"));
                    let truth = sample_where(&agent.prior.probs, |k| domain.request(k).room == room_index, &mut rng);
                    let run = simulate_dialog(
                        &agent.policy,
                        &agent.prior,
                        domain.request(truth),
                        &agent.settings.obs,
                        &agent.settings.dialog,
                        &mut rng,
                    )
                    .map_err(|e| HarnessError::Run(e.to_string()))?;
                    out.push(run.qa_cost);
                }
            }
        }
    }
    Ok(DialogCdfResult { br, costs })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EntropyCell {
    pub br: f64,
    /// `None` aggregates all rooms.
    pub room: Option<Place>,
    pub mean: f64,
    pub std: f64,
    pub max: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EntropyResult {
    pub beliefs: usize,
    pub cells: Vec<EntropyCell>,
}

impl EntropyResult {
    pub fn cell(&self, br: f64, room: Option<Place>) -> Option<&EntropyCell> {
        self.cells.iter().find(|c| c.br == br && c.room == room)
    }

    pub fn tables(&self) -> Vec<Table> {
        let mut t = Table::new("entropy_table", &["br", "room", "mean", "std", "max", "count"]);
        for c in &self.cells {
            let room = c.room.map_or("all".to_string(), |r| r.to_string());
            t.push(vec![num(c.br), room, num(c.mean), num(c.std), num(c.max), c.count.to_string()]);
        }
        vec![t]
    }
}

/// A Dirichlet(1, ..., 1) sample as normalized unit exponentials.
pub fn flat_dirichlet<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Belief {
    let w: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    Belief::from_weights(w).expect("exponential draws are positive")
}

/// Entropy of random beliefs at which the first dialog action serves.
pub fn serve_entropies(agent: &DeliveryAgent, beliefs: usize, seed: u64) -> Vec<(Place, f64)> {
    let mut rng = stream(seed, "entropy/beliefs");
    let n = agent.domain.size();
    let mut out = Vec::new();
    for _ in 0..beliefs {
        let b = flat_dirichlet(n, &mut rng);
        if let DialogAction::Serve(r) = agent.policy.action(0, &b) {
            out.push((agent.domain.room_place(r.room), b.entropy()));
        }
    }
    out
}

pub fn run_entropy_table(cfg: &ExperimentConfig) -> Result<EntropyResult, HarnessError> {
    cfg.validate()?;
    let setup = DeliverySetup::from_config(cfg)?;
    let brs = cfg.f64_list("delivery.brs")?;
    let beliefs = cfg.usize("entropy.beliefs")?;
    let keys: Vec<(u64, f64)> = cfg.seeds.iter().flat_map(|&s| brs.iter().map(move |&br| (s, br))).collect();
    let agents = setup.agents(&keys, cfg.threads())?;
    let rooms: Vec<Place> = setup.map.places().into_iter().filter(|p| matches!(p, Place::Room(_))).collect();
    let mut cells = Vec::new();
    for &br in &brs {
        let mut served: Vec<(Place, f64)> = Vec::new();
        for &seed in &cfg.seeds {
            served.extend(serve_entropies(lookup(&agents, seed, br), beliefs, seed));
        }
        let groups = std::iter::once(None).chain(rooms.iter().copied().map(Some));
        for room in groups {
            let h: Vec<f64> = served.iter().filter(|(r, _)| room.is_none_or(|x| x == *r)).map(|(_, h)| *h).collect();
            let (mean, std, max) = if h.is_empty() {
                (f64::NAN, f64::NAN, f64::NAN)
            } else {
                (mean(&h), std_dev(&h), h.iter().copied().fold(f64::MIN, f64::max))
            };
            cells.push(EntropyCell { br, room, mean, std, max, count: h.len() });
        }
    }
    Ok(EntropyResult { beliefs: beliefs * cfg.seeds.len(), cells })
}
