use krrl_core::grid::{EnvConfig, GridMap, Move, Place};
use krrl_core::mdp::value_iteration;
use krrl_core::rmax::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const CORRIDOR: &str = "MAP v1 6 3\n######\n#S..1#\n######\n";
const TWO_CELLS: &str = "MAP v1 4 3\n####\n#S1#\n####\n";

fn task() -> NavTask {
    NavTask { start: Place::Shop, goal: Place::Room(1) }
}

fn deterministic(map: &str) -> EnvConfig {
    EnvConfig::new(GridMap::parse(map).unwrap()).with_action_success(1.0)
}

#[test]
fn threshold_semantics() {
    let mut c = TransitionCounts::new(2, 4);
    for _ in 0..4 {
        c.record(0, 0, 1);
    }
    assert!(!c.is_known(0, 0, 5));
    c.record(0, 0, 1);
    assert!(c.is_known(0, 0, 5));
    assert_eq!(c.t_hat(0, 0), vec![(1, 1.0)]);
    assert_eq!(c.known_pairs(5).collect::<Vec<_>>(), vec![(0, 0)]);
}

#[test]
fn fully_known_deterministic_counts_give_the_empirical_chain() {
    let cfg = RMaxConfig { m_min: 1, ..RMaxConfig::default() };
    let mut c = TransitionCounts::new(3, 1);
    c.record(0, 0, 1);
    c.record(1, 0, 2);
    c.record(2, 0, 2);
    let mdp = build_optimistic_mdp(&c, &cfg, &[2]);
    assert_eq!(mdp.num_states(), 4);
    assert_eq!(mdp.row(0, 0)[0].next, 1);
    assert_eq!(mdp.row(0, 0)[0].reward, -1.0);
    assert_eq!(mdp.row(1, 0)[0].next, 2);
    assert_eq!(mdp.row(2, 0)[0].next, 2);
    assert_eq!(mdp.row(2, 0)[0].reward, 100.0);
    mdp.check_stochastic(1e-9).unwrap();
}

#[test]
fn optimism_steers_toward_unknown_pairs() {
    // chain 0 - 1 - 2 (goal); action 0 moves left, action 1 moves right.
    // (0, right) is unknown, so state 0 should prefer it over the known
    // path through state 1.
    let cfg = RMaxConfig { m_min: 1, ..RMaxConfig::default() };
    let mut c = TransitionCounts::new(3, 2);
    c.record(0, 0, 0);
    c.record(1, 0, 0);
    c.record(1, 1, 2);
    let mdp = build_optimistic_mdp(&c, &cfg, &[2]);
    let p = value_iteration(&mdp, cfg.gamma, 1e-10).unwrap();
    // hand-solved: V(F) = V(2) = r/(1-g); V(1) = -1 + g V(2);
    // V(0) = max(-1 + g V(0), r + g V(F)) = r/(1-g)
    let g = cfg.gamma;
    let top = 100.0 / (1.0 - g);
    assert!((p.values[3] - top).abs() < 1e-6);
    assert!((p.values[2] - top).abs() < 1e-6);
    assert!((p.values[1] - (-1.0 + g * top)).abs() < 1e-6);
    assert!((p.values[0] - top).abs() < 1e-6);
    assert_eq!(p.actions[0], Some(1));
}

#[test]
fn optimistic_values_dominate_true_values() {
    let env = EnvConfig::new(GridMap::parse(CORRIDOR).unwrap()).with_action_success(0.7);
    let cfg = RMaxConfig { m_min: 3, ..RMaxConfig::default() };
    let map = &env.map;
    let goal = vec![map.state(map.region(Place::Room(1))[0]).unwrap()];
    // true MDP with the same reward bounds: the learner's own model with
    // every pair known from the exact kernel
    let kernel = env.kernel_table();
    let mut exact = TransitionCounts::new(map.num_states(), 4);
    for s in 0..map.num_states() {
        for a in 0..4 {
            for (t, p) in kernel.row(s, a) {
                for _ in 0..(p * 1000.0).round() as u32 {
                    exact.record(s, a, *t as usize);
                }
            }
        }
    }
    let truth = value_iteration(&build_optimistic_mdp(&exact, &cfg, &goal), cfg.gamma, 1e-9).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for trial in 0..50 {
        let mut partial = TransitionCounts::new(map.num_states(), 4);
        for _ in 0..trial {
            let s = rand::Rng::random_range(&mut rng, 0..map.num_states());
            let a = rand::Rng::random_range(&mut rng, 0..4);
            // counts drawn from the exact proportions keep t_hat exact
            for (t, p) in kernel.row(s, a) {
                for _ in 0..(p * 1000.0).round() as u32 {
                    partial.record(s, a, *t as usize);
                }
            }
        }
        let opt = value_iteration(&build_optimistic_mdp(&partial, &cfg, &goal), cfg.gamma, 1e-9).unwrap();
        for s in 0..map.num_states() {
            assert!(opt.values[s] >= truth.values[s] - 1e-6);
        }
    }
}

#[test]
fn deterministic_corridor_converges_to_shortest_path() {
    let env = deterministic(CORRIDOR);
    let cfg = RMaxConfig { m_min: 1, replan_interval: 1, ..RMaxConfig::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let run = learn_navigation_task(&env, task(), &cfg, None, LearnOptions { episodes: 10, max_steps: 50 }, &mut rng).unwrap();
    let last = run.curve.last().unwrap();
    assert!(last.reached);
    assert_eq!(last.steps, 3);
    assert!(run.converged_at.is_some());
}

#[test]
fn single_visit_model_matches_the_kernel_on_average() {
    let env = EnvConfig::new(GridMap::parse(TWO_CELLS).unwrap()).with_action_success(0.7);
    let cfg = RMaxConfig { m_min: 1, replan_interval: 1, ..RMaxConfig::default() };
    let kernel = env.kernel_table();
    let right = Move::Right.index();
    let mut mean = [0.0; 2];
    let mut runs = 0;
    for seed in 0..1000 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let run = learn_navigation_task(&env, task(), &cfg, None, LearnOptions { episodes: 1, max_steps: 100 }, &mut rng).unwrap();
        if run.model.is_known(0, right) {
            runs += 1;
            for (s, p) in run.model.t_hat(0, right) {
                mean[s as usize] += p;
            }
        }
    }
    assert!(runs > 200);
    let mean = mean.map(|m| m / runs as f64);
    let exact = kernel.row(0, Move::Right.index());
    for (s, p) in exact {
        assert!((mean[*s as usize] - p).abs() < 0.05, "{mean:?} vs {exact:?}");
    }
}

#[test]
fn estimates_converge_to_the_kernel() {
    let env = GridMap::office10x14();
    let env = EnvConfig::new(env).with_blocking_rate(0.5);
    let kernel = env.kernel_table();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut c = TransitionCounts::new(env.map.num_states(), 4);
    let s = env.map.state(env.map.anchor(Place::Room(4)).unwrap()).unwrap();
    for _ in 0..100_000 {
        c.record(s, 1, kernel.sample(s, 1, &mut rng));
    }
    let mut tv = 0.0;
    let hat = c.t_hat(s, 1);
    for (t, p) in kernel.row(s, 1) {
        let q = hat.iter().find(|h| h.0 == *t).map_or(0.0, |h| h.1);
        tv += (p - q).abs() / 2.0;
    }
    assert!(tv < 0.02);
}

#[test]
fn extraction_semantics() {
    let env = deterministic(CORRIDOR);
    let cfg = RMaxConfig { m_min: 2, ..RMaxConfig::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let run = learn_navigation_task(&env, task(), &cfg, None, LearnOptions { episodes: 5, max_steps: 40 }, &mut rng).unwrap();
    let model = run.model;
    assert_eq!(model.extract_partial_model(&env.map, task()).unwrap(), model);
    let other = NavTask { start: Place::Room(1), goal: Place::Shop };
    let moved = model.extract_partial_model(&env.map, other).unwrap();
    assert_eq!(moved.task, other);
    assert_eq!(moved.known_pairs(), model.known_pairs());
    let empty = LearnedModel::empty(&env.map, task(), 2);
    assert!(empty.extract_partial_model(&env.map, other).unwrap().known_pairs().is_empty());
    let elsewhere = GridMap::parse(TWO_CELLS).unwrap();
    assert!(matches!(model.extract_partial_model(&elsewhere, other), Err(ModelError::MapMismatch { .. })));
    assert!(matches!(
        model.extract_partial_model(&env.map, NavTask { start: Place::Shop, goal: Place::Room(3) }),
        Err(ModelError::UnknownPlace(_))
    ));
}

#[test]
fn exported_model_keeps_only_known_pairs() {
    let env = EnvConfig::new(GridMap::office10x14()).with_blocking_rate(0.3);
    let cfg = RMaxConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let run = learn_navigation_task(&env, task(), &cfg, None, LearnOptions { episodes: 3, max_steps: 100 }, &mut rng).unwrap();
    let known = run.model.known_pairs();
    for s in 0..env.map.num_states() {
        for a in 0..4 {
            let total = run.counts.total(s, a);
            assert_eq!(known.contains(&(s, a)), total >= cfg.m_min);
            if !known.contains(&(s, a)) {
                assert!(run.model.t_hat(s, a).is_empty());
            } else {
                let sum: f64 = run.model.t_hat(s, a).iter().map(|x| x.1).sum();
                assert!((sum - 1.0).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn text_round_trip_and_map_check() {
    let env = EnvConfig::new(GridMap::office10x14()).with_blocking_rate(0.3);
    let cfg = RMaxConfig { m_min: 3, ..RMaxConfig::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let run = learn_navigation_task(&env, task(), &cfg, None, LearnOptions { episodes: 3, max_steps: 100 }, &mut rng).unwrap();
    let text = run.model.to_text(&env.map);
    assert!(text.starts_with(&format!("# map={} task=shop->room1 m_min=3", env.map.hash())));
    let back = LearnedModel::from_text(&text, &env.map).unwrap();
    assert_eq!(back, run.model);
    let other = GridMap::parse(CORRIDOR).unwrap();
    assert!(LearnedModel::from_text(&text, &other).is_err());
}

#[test]
fn transfer_seeds_the_counts() {
    let env = EnvConfig::new(GridMap::office10x14()).with_blocking_rate(0.3);
    let cfg = RMaxConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let first = learn_navigation_task(&env, task(), &cfg, None, LearnOptions { episodes: 20, max_steps: 200 }, &mut rng).unwrap();
    let next = NavTask { start: Place::Shop, goal: Place::Room(2) };
    let seed = first.model.extract_partial_model(&env.map, next).unwrap();
    let second = learn_navigation_task(&env, next, &cfg, Some(&seed), LearnOptions { episodes: 1, max_steps: 200 }, &mut rng).unwrap();
    for (s, a) in first.model.known_pairs() {
        assert!(second.counts.total(s, a) >= first.counts.total(s, a));
    }
}

#[test]
fn timeouts_pay_the_penalty() {
    let env = EnvConfig::new(GridMap::office10x14()).with_blocking_rate(0.3);
    let cfg = RMaxConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let run = learn_navigation_task(&env, task(), &cfg, None, LearnOptions { episodes: 2, max_steps: 5 }, &mut rng).unwrap();
    for e in &run.curve {
        assert!(!e.reached);
        assert_eq!(e.steps, 5);
        assert_eq!(e.reward(), -5.0 - 100.0);
    }
}

#[test]
fn config_validation() {
    assert!(RMaxConfig::default().validate().is_ok());
    assert!(RMaxConfig { m_min: 0, ..RMaxConfig::default() }.validate().is_err());
    assert!(RMaxConfig { gamma: 1.0, ..RMaxConfig::default() }.validate().is_err());
    assert!(RMaxConfig { r_max: 0.0, ..RMaxConfig::default() }.validate().is_err());
}
