mod support;

use std::collections::{HashMap, HashSet};

use proptest::prelude::*;

use sentinel::editor::{filter_training_edits, split_dataset, EditError, FilterConfig, SplitSpec, TestSize};
use sentinel::eval::{commentary_coverage, evaluate_editor, key_facts_coverage, NormalizedMatchJudge};
use sentinel::mining::EditRecord;
use sentinel::SectionPath;

#[test]
fn split_is_entity_disjoint_and_deterministic() {
    let examples = support::synthetic_examples(50, 3);
    for seed in 0..20 {
        let spec = SplitSpec { test: TestSize::Fraction(0.2), seed };
        let split = split_dataset(&examples, &spec).unwrap();
        let train: HashSet<&str> = split.train.iter().map(|e| e.entity.as_str()).collect();
        let test: Vec<&str> = split.test.iter().map(|e| e.entity.as_str()).collect();
        let test_set: HashSet<&str> = test.iter().copied().collect();
        assert_eq!(test.len(), 10);
        assert_eq!(test_set.len(), test.len(), "at most one test example per entity");
        assert!(train.is_disjoint(&test_set));
        assert_eq!(train.len() + test_set.len(), 50);
        let test_entity_examples = examples.iter().filter(|e| test_set.contains(e.entity.as_str())).count();
        assert_eq!(split.train.len(), examples.len() - test_entity_examples);
        assert_eq!(split, split_dataset(&examples, &spec).unwrap());
    }
    let a = split_dataset(&examples, &SplitSpec { test: TestSize::Entities(5), seed: 1 }).unwrap();
    let b = split_dataset(&examples, &SplitSpec { test: TestSize::Entities(5), seed: 2 }).unwrap();
    assert_eq!(a.test.len(), 5);
    assert_ne!(a.test, b.test);
    assert!(matches!(
        split_dataset(&examples, &SplitSpec { test: TestSize::Entities(51), seed: 1 }),
        Err(EditError::InsufficientData { needed: 51, available: 50 })
    ));
}

fn words(n: usize) -> String {
    (0..n).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" ")
}

fn clean(rev: u64, section: &str) -> EditRecord {
    let inserted = format!("Revision {rev} adds a new sentence here.");
    support::record(
        "Town",
        rev,
        SectionPath::new([section]),
        &[],
        &[inserted.as_str()],
        "The town has a market.",
        &format!("The town has a market. {inserted}"),
    )
}

fn targeted() -> Vec<EditRecord> {
    let mojibake = support::record("Town", 20, SectionPath::new(["History"]), &[], &["CafÃ© opened in 2024 here."], "x", "x CafÃ© opened in 2024 here.");
    let tiny = support::record("Town", 21, SectionPath::new(["History"]), &["It has 5 shops."], &["It has 6 shops."], "It has 5 shops.", "It has 6 shops.");
    let huge_after = words(200);
    let huge = support::record("Town", 22, SectionPath::new(["History"]), &[], &[huge_after.as_str()], "", &huge_after);
    let vandal = support::record("Town", 23, SectionPath::new(["History"]), &[], &["The mayor is a total fraud and liar."], "A.", "A. The mayor is a total fraud and liar.");
    let undo = support::record("Town", 24, SectionPath::new(["History"]), &["The mayor is a total fraud and liar."], &[], "A. The mayor is a total fraud and liar.", "A.");
    let refs = clean(25, "References");
    let links = clean(26, "External links");
    vec![clean(10, "History"), mojibake, tiny, huge, vandal, clean(11, "Economy"), undo, refs, links]
}

#[test]
fn filter_drops_each_category() {
    let outcome = filter_training_edits(&targeted(), &FilterConfig::default());
    let kept: Vec<u64> = outcome.kept.iter().map(|r| r.to_revision.revision_id).collect();
    assert_eq!(kept, [10, 11]);
    let s = outcome.stats;
    assert_eq!((s.input, s.noise, s.size, s.revert, s.pruned_section, s.kept), (9, 1, 2, 2, 2, 2));
}

#[test]
fn filter_is_idempotent_on_targeted_fixture() {
    let config = FilterConfig::default();
    let once = filter_training_edits(&targeted(), &config).kept;
    assert_eq!(filter_training_edits(&once, &config).kept, once);
}

#[test]
fn gold_paragraphs_have_all_key_facts_and_no_commentary() {
    let judge = NormalizedMatchJudge;
    let examples = support::editor_examples();
    assert!(examples.len() >= 8);
    for e in &examples {
        assert_eq!(key_facts_coverage(e, &e.edited_paragraph, &judge), 1.0, "{}", e.id);
        assert_eq!(commentary_coverage(e, &e.edited_paragraph, &judge), 0.0, "{}", e.id);
        assert_eq!(commentary_coverage(e, &e.source_content, &judge), 1.0, "{}", e.id);
    }
    let pairs: Vec<_> = examples.iter().map(|e| (e, e.original_paragraph.as_str())).collect();
    let report = evaluate_editor(&pairs, &judge);
    assert_eq!(report.mean_token_change, 0.0);
    assert_eq!(report.mean_commentary_coverage, 0.0);
}

fn pool() -> Vec<EditRecord> {
    let mut v = targeted();
    v.push(clean(12, "See also"));
    v.push(clean(13, "Geography"));
    v.push(support::record("Town", 14, SectionPath::lead(), &["A b c d."], &["E f g h."], "A b c d.", "E f g h."));
    v.push(support::record("Town", 15, SectionPath::lead(), &["E f g h."], &["A b c d."], "E f g h.", "A b c d."));
    v
}

proptest! {
    #[test]
    fn filter_is_idempotent(picks in prop::collection::vec(any::<prop::sample::Index>(), 0..12)) {
        let pool = pool();
        let mut seen = HashMap::new();
        let records: Vec<EditRecord> = picks
            .iter()
            .map(|i| pool[i.index(pool.len())].clone())
            .filter(|r| seen.insert(r.to_revision.revision_id, ()).is_none())
            .collect();
        let config = FilterConfig::default();
        let once = filter_training_edits(&records, &config).kept;
        prop_assert_eq!(&filter_training_edits(&once, &config).kept, &once);
        prop_assert!(once.len() <= records.len());
    }
}
