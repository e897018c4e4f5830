mod support;

use std::sync::Arc;

use proptest::prelude::*;

use sentinel::llm::{CassetteBackend, LlmBackend, LlmRequest, ScriptedBackend};
use sentinel::mining::diff_revisions;
use sentinel::revision::{ArtifactKey, EvaluationWindow, Store};

#[test]
fn snapshots_and_edits_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let store = Store::open(dir.path()).unwrap();
    let pairs = support::revision_pairs();
    let old = support::snapshot("Nadia Okafor", 10, support::ts(2, 9), &pairs[15].old);
    let new = support::snapshot("Nadia Okafor", 11, support::ts(3, 9), &pairs[15].new);
    for s in [&old, &new] {
        store.put(&ArtifactKey::revision(&s.page_title, s.revision.revision_id), s).unwrap();
    }
    let back: sentinel::revision::ArticleSnapshot = store.get(&ArtifactKey::revision("Nadia Okafor", 11)).unwrap();
    assert_eq!(back, new);

    let window = EvaluationWindow::with_default_duration(support::ts(1, 0));
    let edits = diff_revisions(&old, &new);
    let key = ArtifactKey::edits("Nadia Okafor", &window);
    store.put_all(&key, &edits).unwrap();
    assert_eq!(store.get_all::<sentinel::mining::EditRecord>(&key).unwrap(), edits);
    assert!(!store.contains(&ArtifactKey::revision("Nadia Okafor", 12)));
}

#[test]
fn cassette_records_then_replays_without_the_model() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.records");
    let inner = Arc::new(ScriptedBackend::new("m", |r: &LlmRequest| Ok(format!("echo {}", r.prompt))));
    let recorder = CassetteBackend::record(&path, inner.clone()).unwrap();
    let req = LlmRequest::new("sys", "hello", 0.0);
    assert_eq!(recorder.invoke(&req).unwrap(), "echo hello");
    assert_eq!(recorder.invoke(&req).unwrap(), "echo hello");
    assert_eq!(inner.calls(), 1);

    let replay = CassetteBackend::replay(&path, "m").unwrap();
    assert_eq!(replay.invoke(&req).unwrap(), "echo hello");
    assert!(replay.invoke(&LlmRequest::new("sys", "unseen", 0.0)).is_err());
    assert!(CassetteBackend::replay(dir.path().join("absent.records"), "m").is_err());
}

proptest! {
    #[test]
    fn arbitrary_wikitext_survives_the_store(text in any::<String>(), id in 1u64..1000) {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        let snap = support::snapshot("Any / Page: ü", id, support::ts(1, 0), &text);
        let key = ArtifactKey::revision(&snap.page_title, id);
        store.put(&key, &snap).unwrap();
        prop_assert_eq!(store.get::<sentinel::revision::ArticleSnapshot>(&key).unwrap(), snap);
    }
}
