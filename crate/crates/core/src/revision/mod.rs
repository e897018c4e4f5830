//! Revision histories: fetching over the MediaWiki API and local
//! persistence of every pipeline artifact.

pub mod http;
mod mediawiki;
mod source;
mod store;
mod types;

pub use mediawiki::{MediaWikiClient, RevisionError, ENGLISH_WIKIPEDIA_API};
pub use source::{window_snapshots, FixtureHistory, FixtureRevision, FixtureRevisionSource, RevisionSource};
pub use store::{decode_lines, encode_record, title_slug, ArtifactKey, Record, Store, StoreError, SCHEMA_VERSION};
pub use types::{parse_instant, ArticleSnapshot, EvaluationWindow, RevisionMeta, WindowError, DEFAULT_WINDOW_DAYS};

impl Record for RevisionMeta {
    const KIND: &'static str = "revision_meta";
}

impl Record for ArticleSnapshot {
    const KIND: &'static str = "article_snapshot";
}
