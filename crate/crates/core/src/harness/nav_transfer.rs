//! Navigation transfer: learn one task, then a second task with and without
//! the model extracted from the first.

use super::stats::{mean, median, smooth};
use super::{maps, num, parallel_map, stream, ExperimentConfig, HarnessError, Table};
use crate::grid::{EnvConfig, GridMap, Place};
use crate::rmax::{learn_navigation_task, LearnOptions, NavTask, RMaxConfig};

pub const SOURCE_TASK: NavTask = NavTask { start: Place::Shop, goal: Place::Room(1) };
pub const TARGET_TASK: NavTask = NavTask { start: Place::Room(3), goal: Place::Room(2) };

#[derive(Debug, Clone, PartialEq)]
pub struct SeedRun {
    pub seed: u64,
    /// Per-episode rewards on the target task.
    pub with_extraction: Vec<f64>,
    pub without_extraction: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SizeResult {
    pub size: usize,
    pub cap: usize,
    pub window: usize,
    pub runs: Vec<SeedRun>,
}

impl SizeResult {
    /// Per seed, the fraction of episodes where the smoothed
    /// with-extraction reward is at least the smoothed one without.
    pub fn dominance(&self) -> Vec<f64> {
        self.runs
            .iter()
            .map(|r| {
                let (a, b) = (smooth(&r.with_extraction, self.window), smooth(&r.without_extraction, self.window));
                a.iter().zip(&b).filter(|(x, y)| x >= y).count() as f64 / a.len() as f64
            })
            .collect()
    }

    pub fn dominance_median(&self) -> f64 {
        median(&self.dominance())
    }

    /// Mean over seeds and episodes of the smoothed reward difference.
    pub fn area_gap(&self) -> f64 {
        let per_seed: Vec<f64> = self
            .runs
            .iter()
            .map(|r| {
                let (a, b) = (smooth(&r.with_extraction, self.window), smooth(&r.without_extraction, self.window));
                mean(&a.iter().zip(&b).map(|(x, y)| x - y).collect::<Vec<_>>())
            })
            .collect();
        mean(&per_seed)
    }

    fn mean_curve(&self, with: bool) -> Vec<f64> {
        let curves: Vec<Vec<f64>> = self
            .runs
            .iter()
            .map(|r| smooth(if with { &r.with_extraction } else { &r.without_extraction }, self.window))
            .collect();
        let n = curves.first().map_or(0, Vec::len);
        (0..n).map(|e| mean(&curves.iter().map(|c| c[e]).collect::<Vec<_>>())).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NavTransferResult {
    pub sizes: Vec<SizeResult>,
}

impl NavTransferResult {
    pub fn tables(&self) -> Vec<Table> {
        let mut curves = Table::new("nav_transfer", &["size", "condition", "episode", "mean_smoothed_reward"]);
        let mut runs = Table::new("nav_transfer_runs", &["size", "condition", "seed", "episode", "reward", "smoothed_reward"]);
        let mut summary = Table::new("nav_transfer_summary", &["size", "step_cap", "seeds", "dominance_median", "area_gap"]);
        for s in &self.sizes {
            for (label, with) in [("with_extraction", true), ("without_extraction", false)] {
                for (e, v) in s.mean_curve(with).iter().enumerate() {
                    curves.push(vec![s.size.to_string(), label.into(), e.to_string(), num(*v)]);
                }
                for r in &s.runs {
                    let raw = if with { &r.with_extraction } else { &r.without_extraction };
                    for (e, (x, y)) in raw.iter().zip(smooth(raw, s.window)).enumerate() {
                        runs.push(vec![s.size.to_string(), label.into(), r.seed.to_string(), e.to_string(), num(*x), num(y)]);
                    }
                }
            }
            summary.push(vec![
                s.size.to_string(),
                s.cap.to_string(),
                s.runs.len().to_string(),
                num(s.dominance_median()),
                num(s.area_gap()),
            ]);
        }
        vec![curves, runs, summary]
    }
}

/// The map used for side length `size`.
pub fn transfer_map(cfg: &ExperimentConfig, size: usize) -> Result<GridMap, HarnessError> {
    let seed = cfg.usize("nav.map_seed")? as u64;
    Ok(maps::random_map(size, cfg.f64("nav.density")?, &mut stream(seed, &format!("map/{size}"))))
}

/// One seed: learn the source task, then the target task twice. Both target
/// runs draw from the same random stream.
pub fn run_seed(env: &EnvConfig, rmax: &RMaxConfig, source_episodes: usize, episodes: usize, cap: usize, seed: u64) -> Result<SeedRun, HarnessError> {
    let size = env.map.width();
    let mut rng = stream(seed, &format!("nav/{size}/source"));
    let source = learn_navigation_task(env, SOURCE_TASK, rmax, None, LearnOptions { episodes: source_episodes, max_steps: cap }, &mut rng)?;
    let extracted = source.model.extract_partial_model(&env.map, TARGET_TASK)?;
    let opts = LearnOptions { episodes, max_steps: cap };
    let target = |init| -> Result<Vec<f64>, HarnessError> {
        let mut rng = stream(seed, &format!("nav/{size}/target"));
        let run = learn_navigation_task(env, TARGET_TASK, rmax, init, opts, &mut rng)?;
        Ok(run.curve.iter().map(|e| e.reward()).collect())
    };
    Ok(SeedRun { seed, with_extraction: target(Some(&extracted))?, without_extraction: target(None)? })
}

pub fn run(cfg: &ExperimentConfig) -> Result<NavTransferResult, HarnessError> {
    cfg.validate()?;
    let rmax = cfg.rmax()?;
    let (source_episodes, episodes) = (cfg.usize("nav.source_episodes")?, cfg.usize("nav.episodes")?);
    let window = cfg.usize("nav.window")?;
    let mut sizes = Vec::new();
    for (size, cap) in cfg.usize_list("nav.sizes")?.into_iter().zip(cfg.usize_list("nav.caps")?) {
        let env = EnvConfig::new(transfer_map(cfg, size)?).with_action_success(cfg.f64("nav.action_success")?);
        let runs = parallel_map(&cfg.seeds, cfg.threads(), |&seed| run_seed(&env, &rmax, source_episodes, episodes, cap, seed));
        sizes.push(SizeResult { size, cap, window, runs: runs.into_iter().collect::<Result<_, _>>()? });
    }
    Ok(NavTransferResult { sizes })
}
