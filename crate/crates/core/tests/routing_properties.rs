use std::collections::BTreeSet;

use triage_core::llm::{MockBackend, MockMode};
use triage_core::router::{route_batch, BatchResult, CostModel, RoutingConfig, RoutingOutcome, Tier};
use triage_core::store::Split;
use triage_core::world::{generate_world, World, WorldConfig};

fn world() -> World {
    generate_world(&WorldConfig { corpus_size: 300, test_size: 200, valid_size: 0, seed: 11, ..WorldConfig::default() })
        .unwrap()
}

fn run(w: &World, cfg: &RoutingConfig, mode: MockMode, parallelism: usize) -> BatchResult {
    let assets = w.task_assets().unwrap();
    let backend = MockBackend::new(mode);
    route_batch(&w.samples(Split::Test), &assets, cfg, &CostModel::default(), &backend, parallelism).unwrap()
}

fn ids_where(outcomes: &[RoutingOutcome], f: impl Fn(&RoutingOutcome) -> bool) -> BTreeSet<String> {
    outcomes.iter().filter(|o| f(o)).map(|o| o.sample_id.clone()).collect()
}

#[test]
fn escalation_sets_are_nested() {
    let w = world();
    let mut prev: Option<BTreeSet<String>> = None;
    for i in 0..10 {
        let cfg = RoutingConfig { tau_l: i as f64 * 0.05, ..RoutingConfig::default() };
        let set = ids_where(&run(&w, &cfg, MockMode::Majority, 1).outcomes, |o| o.escalated_past_l());
        if let Some(p) = &prev {
            assert!(p.is_subset(&set));
        }
        prev = Some(set);
    }
    let mut prev: Option<BTreeSet<String>> = None;
    for i in 0..10 {
        let cfg = RoutingConfig { tau_l: 0.5, tau_m: i as f64 * 0.05, ..RoutingConfig::default() };
        let set = ids_where(&run(&w, &cfg, MockMode::Majority, 1).outcomes, |o| o.final_tier == Tier::H);
        if let Some(p) = &prev {
            assert!(p.is_subset(&set));
        }
        prev = Some(set);
    }
}

#[test]
fn saturation_endpoints_cost_exactly() {
    let w = world();
    let m = CostModel::default();
    let none = run(&w, &RoutingConfig { tau_l: 0.0, ..RoutingConfig::default() }, MockMode::Majority, 1);
    assert_eq!(none.stats.expected_cost, m.t_l);
    let all = run(&w, &RoutingConfig { tau_l: 2.5, tau_m: 1.5, ..RoutingConfig::default() }, MockMode::Majority, 1);
    assert_eq!(all.stats.frac_h, 1.0);
    assert_eq!(all.stats.expected_cost, m.t_l + m.t_m + m.t_h);
}

fn comparable(mut o: RoutingOutcome) -> RoutingOutcome {
    o.elapsed_ms = 0.0;
    if let Some(h) = o.tier_h.as_mut() {
        h.calls.iter_mut().for_each(|c| c.latency_ms = 0.0);
    }
    o
}

#[test]
fn parallelism_does_not_change_outcomes() {
    let w = world();
    let cfg = RoutingConfig { tau_l: 0.3, tau_m: 0.3, ..RoutingConfig::default() };
    let a: Vec<_> = run(&w, &cfg, MockMode::Majority, 1).outcomes.into_iter().map(comparable).collect();
    let b: Vec<_> = run(&w, &cfg, MockMode::Majority, 8).outcomes.into_iter().map(comparable).collect();
    assert_eq!(a, b);
}

#[test]
fn garbage_replies_fall_back_to_tier_m() {
    let w = world();
    let cfg = RoutingConfig { tau_l: 2.5, tau_m: 1.5, ..RoutingConfig::default() };
    let batch = run(&w, &cfg, MockMode::Garbage, 4);
    assert!(batch.errors.is_empty());
    for o in &batch.outcomes {
        let h = o.tier_h.as_ref().unwrap();
        assert!(h.fallback_used);
        assert_eq!(o.prediction, o.tier_m.as_ref().unwrap().prediction);
    }
}
