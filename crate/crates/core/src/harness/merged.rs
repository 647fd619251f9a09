//! Unknown exogenous setting: navigation models are learned under several
//! time settings, then the robot is put in one of two candidate settings
//! without being told which. A baseline runs the policy of one candidate
//! picked at random; the knowledge-based agent plans on the MDP that mixes
//! both candidates' transition models.
//!
//! Settings live on the crossroads map. Setting `k` has base success
//! `merged.success[k]`, leaves corridor `k` open and slows the other
//! corridors to `merged.trap_success`; the top loop is never slowed.

use rand::Rng;

use super::maps::{crossroads, crossroads_corridor};
use super::{flag, num, parallel_map, stream, ExperimentConfig, HarnessError, Table};
use crate::delivery::{leg_cap, NavigationModel};
use crate::grid::{EnvConfig, GridMap, KernelTable, Place, Zone};
use crate::kb::KnowledgeBase;
use crate::navkb::{import_kernel, import_model, kernel_of, navigation_kb, navigation_spec};
use crate::rmax::{learn_navigation_task, LearnOptions, NavTask, RMaxConfig};
use crate::task_model::{construct_task_mdp, merge_settings, RewardSpec};

pub const TASK: NavTask = NavTask { start: Place::Shop, goal: Place::Room(1) };
const CORRIDORS: [usize; 3] = [5, 3, 7];

pub fn setting_name(k: usize) -> String {
    format!("s{}", k + 1)
}

/// The true environment of setting `k`.
pub fn setting_env(map: &GridMap, success: &[f64], trap: f64, k: usize) -> EnvConfig {
    let mut env = EnvConfig::new(map.clone()).with_action_success(success[k]);
    env.exo_setting.insert("time".into(), setting_name(k));
    env.zones = (0..success.len())
        .filter(|j| *j != k)
        .map(|j| Zone { cells: crossroads_corridor(CORRIDORS[j]), success: trap })
        .collect();
    env
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRow {
    pub seed: u64,
    pub episode: usize,
    pub pair: (usize, usize),
    pub truth: usize,
    pub pick: usize,
    pub baseline: bool,
    pub merged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MergedResult {
    pub settings: usize,
    pub episodes: Vec<EpisodeRow>,
    /// Exact success probabilities averaged over seeds: the baseline's over
    /// its random pick and the merged policy's, each over hidden pairs.
    pub baseline_predicted: f64,
    pub merged_predicted: f64,
    /// `cross[k][t]`: success of setting `k`'s policy in setting `t`,
    /// averaged over seeds.
    pub cross: Vec<Vec<f64>>,
}

impl MergedResult {
    pub fn baseline_rate(&self) -> f64 {
        self.episodes.iter().filter(|e| e.baseline).count() as f64 / self.episodes.len() as f64
    }

    pub fn merged_rate(&self) -> f64 {
        self.episodes.iter().filter(|e| e.merged).count() as f64 / self.episodes.len() as f64
    }

    pub fn tables(&self) -> Vec<Table> {
        let mut eps = Table::new(
            "merged_episodes",
            &["seed", "episode", "pair", "true_setting", "baseline_pick", "baseline_success", "merged_success"],
        );
        for e in &self.episodes {
            eps.push(vec![
                e.seed.to_string(),
                e.episode.to_string(),
                format!("{}+{}", setting_name(e.pair.0), setting_name(e.pair.1)),
                setting_name(e.truth),
                setting_name(e.pick),
                flag(e.baseline),
                flag(e.merged),
            ]);
        }
        let mut summary = Table::new("merged_summary", &["method", "episodes", "success_rate", "predicted"]);
        let n = self.episodes.len().to_string();
        summary.push(vec!["random_pick".into(), n.clone(), num(self.baseline_rate()), num(self.baseline_predicted)]);
        summary.push(vec!["merged".into(), n, num(self.merged_rate()), num(self.merged_predicted)]);
        let mut cross = Table::new("merged_cross", &["policy_setting", "true_setting", "success"]);
        for (k, row) in self.cross.iter().enumerate() {
            for (t, p) in row.iter().enumerate() {
                cross.push(vec![setting_name(k), setting_name(t), num(*p)]);
            }
        }
        vec![eps, summary, cross]
    }
}

struct SeedPlan {
    /// Policy per single setting, then per pair in `pairs` order.
    single: Vec<Vec<Option<usize>>>,
    merged: Vec<Vec<Option<usize>>>,
}

fn pairs(n: usize) -> Vec<(usize, usize)> {
    (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect()
}

fn policy_for(map: &GridMap, kernel: KernelTable, rewards: RewardSpec, gamma: f64) -> Result<Vec<Option<usize>>, HarnessError> {
    let nav = NavigationModel::from_kernel(map, kernel, rewards, gamma)?;
    Ok(nav.policy(TASK.goal)?.to_vec())
}

/// Learn or import every setting's model into one knowledge base, then
/// plan for each single setting and each pair.
fn plan_seed(envs: &[EnvConfig], rmax: &RMaxConfig, learned: bool, learn_episodes: usize, seed: u64) -> Result<SeedPlan, HarnessError> {
    let map = &envs[0].map;
    let names: Vec<String> = (0..envs.len()).map(setting_name).collect();
    let name_refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let mut kb: KnowledgeBase = navigation_kb(map, &name_refs)?;
    for (k, env) in envs.iter().enumerate() {
        kb = if learned {
            let mut rng = stream(seed, &format!("merged/learn/{k}"));
            let opts = LearnOptions { episodes: learn_episodes, max_steps: leg_cap(map) };
            let run = learn_navigation_task(env, TASK, rmax, None, opts, &mut rng)?;
            import_model(&kb, map, &run.model, &names[k])?
        } else {
            import_kernel(&kb, map, &env.kernel_table(), &names[k])?
        };
    }
    let rewards = RewardSpec { step: rmax.step_cost, goal_bonus: rmax.r_max };
    let spec = navigation_spec(&kb, map, TASK.goal, rewards).with_goal(Vec::new());
    let time = |k: usize| vec![("time".to_string(), names[k].clone())];
    let single = (0..envs.len())
        .map(|k| policy_for(map, kernel_of(&construct_task_mdp(&kb, &spec, &[(time(k), 1.0)])?), rewards, rmax.gamma))
        .collect::<Result<_, _>>()?;
    let merged = pairs(envs.len())
        .into_iter()
        .map(|(i, j)| policy_for(map, kernel_of(&merge_settings(&kb, &spec, &[time(i), time(j)])?), rewards, rmax.gamma))
        .collect::<Result<_, _>>()?;
    Ok(SeedPlan { single, merged })
}

fn walk<R: Rng + ?Sized>(kernel: &KernelTable, policy: &[Option<usize>], start: usize, goal: &[bool], cap: usize, rng: &mut R) -> bool {
    let mut s = start;
    let mut steps = 0;
    while !goal[s] && steps < cap {
        let Some(a) = policy[s] else { break };
        s = kernel.sample(s, a, rng);
        steps += 1;
    }
    goal[s]
}

pub fn run(cfg: &ExperimentConfig) -> Result<MergedResult, HarnessError> {
    cfg.validate()?;
    let success = cfg.f64_list("merged.success")?;
    if !(2..=CORRIDORS.len()).contains(&success.len()) {
        return Err(HarnessError::Config("merged.success needs two or three settings".into()));
    }
    let trap = cfg.f64("merged.trap_success")?;
    let learned = match cfg.get("merged.model")? {
        "learned" => true,
        "exact" => false,
        other => return Err(HarnessError::Config(format!("merged.model: `{other}` is neither learned nor exact"))),
    };
    let rmax = cfg.rmax()?;
    let learn_episodes = cfg.usize("merged.learn_episodes")?;
    let per_seed = cfg.usize("merged.episodes")?;
    let map = crossroads();
    let envs: Vec<EnvConfig> = (0..success.len()).map(|k| setting_env(&map, &success, trap, k)).collect();
    let kernels: Vec<KernelTable> = envs.iter().map(EnvConfig::kernel_table).collect();
    let start = map.state(map.anchor(TASK.start).unwrap()).unwrap();
    let mut goal = vec![false; map.num_states()];
    for c in map.region(TASK.goal) {
        goal[map.state(c).unwrap()] = true;
    }
    let cap = leg_cap(&map);
    let all_pairs = pairs(envs.len());
    let plans = parallel_map(&cfg.seeds, cfg.threads(), |&seed| plan_seed(&envs, &rmax, learned, learn_episodes, seed));
    let n = envs.len();
    let mut cross = vec![vec![0.0; n]; n];
    let (mut baseline_predicted, mut merged_predicted) = (0.0, 0.0);
    let mut episodes = Vec::new();
    for (&seed, plan) in cfg.seeds.iter().zip(plans) {
        let plan = plan?;
        let reach = |policy: &[Option<usize>], t: usize| kernels[t].reach_probability(policy, start, &goal, cap);
        let m: Vec<Vec<f64>> = (0..n).map(|k| (0..n).map(|t| reach(&plan.single[k], t)).collect()).collect();
        for k in 0..n {
            for t in 0..n {
                cross[k][t] += m[k][t] / cfg.seeds.len() as f64;
            }
        }
        let w = 1.0 / (all_pairs.len() * cfg.seeds.len()) as f64;
        for (p, &(i, j)) in all_pairs.iter().enumerate() {
            baseline_predicted += w * (m[i][i] + m[i][j] + m[j][i] + m[j][j]) / 4.0;
            merged_predicted += w * (reach(&plan.merged[p], i) + reach(&plan.merged[p], j)) / 2.0;
        }
        for e in 0..per_seed {
            let mut rng = stream(seed, &format!("merged/episode/{e}"));
            let p = rng.random_range(0..all_pairs.len());
            let (i, j) = all_pairs[p];
            let truth = if rng.random::<bool>() { i } else { j };
            let pick = if rng.random::<bool>() { i } else { j };
            let tag = format!("merged/walk/{e}");
            let baseline = walk(&kernels[truth], &plan.single[pick], start, &goal, cap, &mut stream(seed, &tag));
            let merged = walk(&kernels[truth], &plan.merged[p], start, &goal, cap, &mut stream(seed, &tag));
            episodes.push(EpisodeRow { seed, episode: e, pair: (i, j), truth, pick, baseline, merged });
        }
    }
    Ok(MergedResult { settings: n, episodes, baseline_predicted, merged_predicted, cross })
}
