use triage_core::descriptors::tier_m_classify;
use triage_core::eval::{auroc_macro_ovr, task_auroc};
use triage_core::store::Split;
use triage_core::tier_l::tier_l_classify;
use triage_core::world::{generate_world, World, WorldConfig};

const SEEDS: u64 = 10;

fn world(seed: u64, s: f64, q: f64, classes: usize) -> World {
    generate_world(&WorldConfig {
        num_classes: classes,
        class_separation: s,
        descriptor_informativeness: q,
        corpus_size: 10,
        test_size: 400,
        valid_size: 0,
        seed,
        ..WorldConfig::default()
    })
    .unwrap()
}

fn tier_l_scores(w: &World) -> Vec<Vec<f64>> {
    w.samples(Split::Test)
        .iter()
        .map(|(_, a)| tier_l_classify(a, &w.labels).unwrap().scores.scores)
        .collect()
}

fn tier_m_scores(w: &World) -> Vec<Vec<f64>> {
    let mask = vec![false; w.taxonomy.len()];
    w.samples(Split::Test)
        .iter()
        .map(|(_, a)| tier_m_classify(a, &w.taxonomy, &w.rules, &mask).unwrap().rule_scores.scores)
        .collect()
}

fn mean_over_seeds(f: impl Fn(u64) -> f64) -> f64 {
    (0..SEEDS).map(f).sum::<f64>() / SEEDS as f64
}

#[test]
fn zero_signal_is_chance_for_tier_l() {
    let mean = mean_over_seeds(|seed| {
        let w = world(seed, 0.0, 0.0, 2);
        task_auroc(&tier_l_scores(&w), &w.oracle_labels(Split::Test), 2).unwrap()
    });
    assert!((mean - 0.5).abs() <= 0.05, "{mean}");
}

#[test]
fn zero_signal_is_chance_for_five_class_macro() {
    let mean = mean_over_seeds(|seed| {
        let w = world(seed, 0.0, 0.0, 5);
        auroc_macro_ovr(&tier_l_scores(&w), &w.oracle_labels(Split::Test), 5).unwrap().macro_auroc
    });
    assert!((mean - 0.5).abs() <= 0.05, "{mean}");
}

#[test]
fn tier_l_improves_with_separation() {
    let means: Vec<f64> = [0.0, 0.15, 0.3, 0.6]
        .iter()
        .map(|&s| {
            mean_over_seeds(|seed| {
                let w = world(seed, s, 0.8, 2);
                task_auroc(&tier_l_scores(&w), &w.oracle_labels(Split::Test), 2).unwrap()
            })
        })
        .collect();
    assert!(means.windows(2).all(|p| p[0] <= p[1]), "{means:?}");
}

#[test]
fn tier_m_improves_with_informativeness() {
    let means: Vec<f64> = [0.0, 0.2, 0.5, 0.8]
        .iter()
        .map(|&q| {
            mean_over_seeds(|seed| {
                let w = world(seed, 0.3, q, 2);
                task_auroc(&tier_m_scores(&w), &w.oracle_labels(Split::Test), 2).unwrap()
            })
        })
        .collect();
    assert!(means.windows(2).all(|p| p[0] <= p[1]), "{means:?}");
}
