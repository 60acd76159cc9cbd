use triage_core::descriptors::{tier_m_classify, DescriptorTaxonomy, RuleTable, TaxonomyConfig};
use triage_core::store::{load_corpus, normalize, save_corpus, StoredRecord};

fn fixture() -> TaxonomyConfig {
    TaxonomyConfig::load(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/icbhi_taxonomy.json")).unwrap()
}

/// Every option text gets its own axis.
fn one_hot_templates(cfg: &TaxonomyConfig) -> (Vec<String>, usize) {
    let texts: Vec<String> = cfg.groups.iter().flat_map(|g| g.options.clone()).collect();
    let n = texts.len();
    (texts, n)
}

#[test]
fn fixture_shape() {
    let cfg = fixture();
    let sizes: Vec<usize> = cfg.groups.iter().map(|g| g.options.len()).collect();
    assert_eq!(sizes, [7, 8, 7, 8, 7, 7]);
    let task = cfg.task("ICBHI-LS-1").unwrap();
    assert_eq!(task.classes, ["COPD", "Healthy"]);
}

#[test]
fn copd_prototype_profile_scores_one() {
    let cfg = fixture();
    let (texts, dim) = one_hot_templates(&cfg);
    let records: Vec<StoredRecord> = texts
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let mut v = vec![0.0; dim];
            v[i] = 1.0;
            StoredRecord::new(t.clone(), normalize(&v).unwrap())
        })
        .collect();
    let dir = tempfile::tempdir().unwrap();
    save_corpus(&records, dir.path()).unwrap();
    let store = load_corpus(dir.path()).unwrap();

    let taxonomy = DescriptorTaxonomy::from_config(&cfg, &store).unwrap();
    let task = cfg.task("ICBHI-LS-1").unwrap();
    let rules = RuleTable::from_config("ICBHI-LS-1", task, &taxonomy).unwrap();

    let copd = &task.prototypes["COPD"];
    let mut raw = vec![0.0; dim];
    for text in copd.values() {
        raw[texts.iter().position(|t| t == text).unwrap()] = 1.0;
    }
    let a = normalize(&raw).unwrap();
    let m = tier_m_classify(&a, &taxonomy, &rules, &[false; 6]).unwrap();
    assert_eq!(m.rule_scores.scores[0], 1.0);
    assert_eq!(m.prediction, 0);
    let healthy = &task.prototypes["Healthy"];
    let shared = copd.iter().filter(|(g, o)| healthy.get(*g) == Some(o)).count();
    assert_eq!(m.rule_scores.scores[1], shared as f64 / 6.0);
}
