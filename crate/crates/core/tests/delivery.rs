use krrl_core::delivery::*;
use krrl_core::dialog::{DeliveryTable, ObsModel, PnTable};
use krrl_core::grid::{Cell, EnvConfig, GridMap, Move, Place};
use krrl_core::kb::{Atom, KnowledgeBase};
use krrl_core::rmax::RMaxConfig;
use krrl_core::task_model::RewardSpec;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const OFFICES: [(&str, Place); 2] = [("alice", Place::Room(4)), ("bob", Place::Room(5))];

fn two_rooms() -> GridMap {
    GridMap::parse("MAP v1 6 4\n######\n#S..1#\n#...2#\n######\n").unwrap()
}

fn small_settings() -> DeliverySettings {
    let mut s = DeliverySettings::default();
    s.dialog.belief_budget = 200;
    s.pn_trials = 200;
    s
}

fn exact_agent(kb: &KnowledgeBase, env: &EnvConfig, settings: DeliverySettings, seed: u64) -> DeliveryAgent {
    let nav = NavigationModel::from_kernel(&env.map, env.kernel_table(), settings.nav_rewards, settings.nav_gamma).unwrap();
    DeliveryAgent::with_navigation(kb, nav, settings, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

#[test]
fn request_prior_prefers_own_office() {
    let map = GridMap::office10x14();
    let kb = delivery_kb(&map, &["t"], &OFFICES).unwrap();
    let p = kb.query_str("curr_room=room4", &["curr_person=alice"]).unwrap();
    assert!((p - 0.8).abs() < 1e-9);
    let q = kb.query_str("curr_room=room1", &["curr_person=alice"]).unwrap();
    assert!((q - 0.05).abs() < 1e-9);
}

#[test]
fn offices_must_be_rooms_of_the_map() {
    let map = two_rooms();
    assert!(delivery_kb(&map, &["t"], &[("alice", Place::Room(3))]).is_err());
    assert!(delivery_kb(&map, &["t"], &[("alice", Place::Shop)]).is_err());
}

#[test]
fn perfect_world_always_fulfils() {
    let map = two_rooms();
    let kb = delivery_kb(&map, &["t"], &[("alice", Place::Room(1)), ("bob", Place::Room(2))]).unwrap();
    let env = EnvConfig::new(map).with_action_success(1.0);
    let mut settings = small_settings();
    settings.obs = ObsModel::uniform(1.0, 1.0);
    let agent = exact_agent(&kb, &env, settings, 1);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..200 {
        let o = run_delivery_trial(&agent, &env, &mut rng).unwrap();
        assert!(o.fulfilled);
        // every navigation succeeds, so no question is worth its cost
        assert_eq!(o.qa_cost, 0.0);
        assert_eq!(o.redelivered, o.served != o.truth);
    }
}

#[test]
fn noiseless_answers_identify_the_request_when_mistakes_are_costly() {
    let map = two_rooms();
    let kb = delivery_kb(&map, &["t"], &[("alice", Place::Room(1)), ("bob", Place::Room(2))]).unwrap();
    let env = EnvConfig::new(map).with_action_success(1.0);
    let mut settings = small_settings();
    settings.obs = ObsModel::uniform(1.0, 1.0);
    let mut agent = exact_agent(&kb, &env, settings, 1);
    // the agent believes returning to the shop fails half the time
    let mut pn = PnTable::new();
    for room in [Place::Room(1), Place::Room(2)] {
        pn.set(Place::Shop, room, 1.0);
        pn.set(room, Place::Shop, 0.5);
    }
    agent.table = DeliveryTable::build(&agent.domain, &pn).unwrap();
    agent.policy = krrl_core::dialog::solve_dialog_policy(
        &agent.domain,
        &agent.prior,
        &agent.settings.dialog,
        &agent.settings.obs,
        &agent.table,
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..200 {
        let o = run_delivery_trial(&agent, &env, &mut rng).unwrap();
        assert!(o.fulfilled);
        assert!(!o.redelivered);
        // one general question per dimension is enough
        assert!(o.qa_cost <= 6.0, "qa cost {}", o.qa_cost);
    }
}

#[test]
fn impassable_corridor_fails_every_delivery() {
    let map = GridMap::parse("MAP v1 7 4\n#######\n#S.B.1#\n#..B.2#\n#######\n").unwrap();
    let kb = delivery_kb(&map, &["t"], &[("alice", Place::Room(1)), ("bob", Place::Room(2))]).unwrap();
    let model_env = EnvConfig::new(map.clone()).with_blocking_rate(0.2);
    let env = EnvConfig::new(map).with_blocking_rate(1.0);
    let agent = exact_agent(&kb, &model_env, small_settings(), 4);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut mismatched = 0;
    for _ in 0..100 {
        let o = run_delivery_trial(&agent, &env, &mut rng).unwrap();
        assert!(!o.fulfilled);
        assert_eq!(o.serve_reward, agent.settings.dialog.serve_penalty);
        mismatched += o.redelivered as usize;
        // the first leg never arrives, so the cap is used up exactly once
        assert_eq!(o.nav_steps, leg_cap(&env.map));
    }
    assert!(mismatched > 0);
}

#[test]
fn reward_accounting_and_redelivery() {
    let map = GridMap::office10x14();
    let kb = delivery_kb(&map, &["t"], &OFFICES).unwrap();
    let env = EnvConfig::new(map).with_blocking_rate(0.3).with_action_success(0.6);
    let agent = exact_agent(&kb, &env, small_settings(), 6);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let cfg = &agent.settings.dialog;
    let mut redelivered = 0;
    for _ in 0..300 {
        let o = run_delivery_trial(&agent, &env, &mut rng).unwrap();
        let serve = if o.fulfilled { cfg.serve_bonus } else { cfg.serve_penalty };
        assert_eq!(o.serve_reward, serve);
        assert_eq!(o.total_reward, serve - o.qa_cost + env.step_cost * o.nav_steps as f64);
        assert!(o.qa_cost >= 0.0);
        assert_eq!(o.redelivered, o.served != o.truth);
        assert!(o.nav_steps <= 3 * leg_cap(&env.map));
        redelivered += o.redelivered as usize;
    }
    assert!(redelivered > 0);
}

#[test]
fn wrong_map_is_rejected() {
    let map = two_rooms();
    let kb = delivery_kb(&map, &["t"], &[("alice", Place::Room(1)), ("bob", Place::Room(2))]).unwrap();
    let agent = exact_agent(&kb, &EnvConfig::new(map), small_settings(), 8);
    let other = EnvConfig::new(GridMap::office10x14());
    assert!(run_delivery_trial(&agent, &other, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
}

#[test]
fn simulated_fulfilment_matches_delivery_transition_prediction() {
    let map = GridMap::office10x14();
    let kb = delivery_kb(&map, &["t"], &OFFICES).unwrap();
    let env = EnvConfig::new(map).with_blocking_rate(0.3).with_action_success(0.6);
    let mut settings = small_settings();
    settings.pn_trials = 4000;
    let agent = exact_agent(&kb, &env, settings, 9);
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let predicted = agent.predicted_fulfillment(10_000, &mut rng).unwrap();
    let trials = 10_000;
    let hits = (0..trials).filter(|_| run_delivery_trial(&agent, &env, &mut rng).unwrap().fulfilled).count();
    let simulated = hits as f64 / trials as f64;
    assert!((simulated - predicted).abs() < 0.03, "simulated {simulated} predicted {predicted}");
}

#[test]
fn zero_budget_leaves_knowledge_unchanged() {
    let map = GridMap::office10x14();
    let kb = delivery_kb(&map, &["t"], &OFFICES).unwrap();
    let env = EnvConfig::new(map).with_blocking_rate(0.1);
    let out = free_time_learning(&kb, &env, FreeTimeBudget { episodes: 0 }, &RMaxConfig::default(), "t", &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    assert_eq!(out.kb, kb);
    assert!(out.tasks.is_empty());
}

#[test]
fn learned_corridor_move_matches_environment() {
    let map = GridMap::office10x14();
    let kb = delivery_kb(&map, &["t"], &OFFICES).unwrap();
    let env = EnvConfig::new(map.clone()).with_blocking_rate(0.1).with_action_success(0.6);
    let out = free_time_learning(&kb, &env, FreeTimeBudget { episodes: 400 }, &RMaxConfig::default(), "t", &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
    // the corridor below the first shortcut, on every route to the rooms
    let cell = Cell { x: 1, y: 10 };
    let s = map.state(cell).unwrap();
    assert!(out.model.counts().total(s, Move::Down.index()) >= 100);
    for (next, p) in env.kernel(cell, Move::Down) {
        let q = out
            .kb
            .query_str(&format!("next_cell={next}"), &[&format!("curr_cell={cell}"), "act_move=down", "time=t"])
            .unwrap();
        assert!((p - q).abs() < 0.05, "{next}: env {p} kb {q}");
    }
}

#[test]
fn short_practice_exports_only_known_pairs() {
    let map = GridMap::office10x14();
    let kb = delivery_kb(&map, &["t"], &OFFICES).unwrap();
    let env = EnvConfig::new(map.clone()).with_blocking_rate(0.1).with_action_success(0.6);
    let cfg = RMaxConfig::default();
    let out = free_time_learning(&kb, &env, FreeTimeBudget { episodes: 3 }, &cfg, "t", &mut ChaCha8Rng::seed_from_u64(12)).unwrap();
    let counts = out.model.counts();
    let known: Vec<&Atom> = out.kb.facts.iter().filter(|f| f.attr == "known").collect();
    assert_eq!(known.len(), out.model.known_pairs().len());
    for s in 0..map.num_states() {
        for m in Move::ALL {
            let total = counts.total(s, m.index());
            let fact = known.iter().any(|f| {
                let args: Vec<String> = f.args.iter().map(|a| a.to_string()).collect();
                args == [map.cell(s).to_string(), m.name().to_string(), "t".to_string()]
            });
            assert_eq!(fact, total >= cfg.m_min, "{} {}", map.cell(s), m.name());
        }
    }
    assert!(!known.is_empty() && known.len() < map.num_states() * Move::ALL.len());
}

#[test]
fn navigation_from_knowledge_matches_learned_kernel() {
    let map = GridMap::office10x14();
    let kb = delivery_kb(&map, &["t"], &OFFICES).unwrap();
    let env = EnvConfig::new(map.clone()).with_blocking_rate(0.3).with_action_success(0.6);
    let out = free_time_learning(&kb, &env, FreeTimeBudget { episodes: 20 }, &RMaxConfig::default(), "t", &mut ChaCha8Rng::seed_from_u64(13)).unwrap();
    let nav = NavigationModel::from_kb(&out.kb, &map, "t", RewardSpec::default(), 0.95).unwrap();
    for s in 0..map.num_states() {
        for a in 0..Move::ALL.len() {
            let row: Vec<(u32, f64)> = nav.kernel().row(s, a).to_vec();
            if out.model.is_known(s, a) {
                let want = out.model.t_hat(s, a);
                assert_eq!(row.len(), want.len());
                for ((t, p), (u, q)) in row.iter().zip(&want) {
                    assert_eq!(t, u);
                    assert!((p - q).abs() < 1e-9);
                }
            } else {
                assert_eq!(row, vec![(s as u32, 1.0)]);
            }
        }
    }
}

#[test]
fn free_time_tasks_are_distinct_place_pairs() {
    let map = GridMap::office10x14();
    let tasks = navigation_tasks(&map);
    assert_eq!(tasks.len(), 6 * 5);
    assert!(tasks.iter().all(|t| t.start != t.goal));
}
