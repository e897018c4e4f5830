use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Duration, NaiveDate, NaiveDateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Metadata of one page revision.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RevisionMeta {
    pub revision_id: u64,
    pub parent_id: Option<u64>,
    pub timestamp: DateTime<Utc>,
    pub editor: String,
    pub comment: String,
    pub tags: Vec<String>,
}

/// An article as it stood at one revision.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArticleSnapshot {
    pub page_title: String,
    pub revision: RevisionMeta,
    /// Source text exactly as returned by the API.
    pub wikitext: String,
    pub fetched_at: DateTime<Utc>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WindowError {
    #[error("evaluation window duration must be positive, got {0} seconds")]
    NonPositive(i64),
    #[error("cannot parse evaluation window {0:?}: expected <start>/<end> or <start>/<days>d")]
    Syntax(String),
}

/// The period `[start, start + duration]` over which sources and human
/// edits are considered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawWindow", into = "RawWindow")]
pub struct EvaluationWindow {
    start: DateTime<Utc>,
    duration: Duration,
}

#[derive(Serialize, Deserialize)]
struct RawWindow {
    start: DateTime<Utc>,
    duration_secs: i64,
}

impl TryFrom<RawWindow> for EvaluationWindow {
    type Error = WindowError;
    fn try_from(raw: RawWindow) -> Result<Self, Self::Error> {
        EvaluationWindow::new(raw.start, Duration::seconds(raw.duration_secs))
    }
}

impl From<EvaluationWindow> for RawWindow {
    fn from(w: EvaluationWindow) -> Self {
        RawWindow { start: w.start, duration_secs: w.duration.num_seconds() }
    }
}

pub const DEFAULT_WINDOW_DAYS: i64 = 14;

impl EvaluationWindow {
    pub fn new(start: DateTime<Utc>, duration: Duration) -> Result<Self, WindowError> {
        if duration <= Duration::zero() {
            return Err(WindowError::NonPositive(duration.num_seconds()));
        }
        Ok(Self { start, duration })
    }

    /// A window of the default two-week length.
    pub fn with_default_duration(start: DateTime<Utc>) -> Self {
        Self { start, duration: Duration::days(DEFAULT_WINDOW_DAYS) }
    }

    pub fn start(&self) -> DateTime<Utc> {
        self.start
    }

    pub fn duration(&self) -> Duration {
        self.duration
    }

    pub fn end(&self) -> DateTime<Utc> {
        self.start + self.duration
    }

    pub fn contains(&self, t: DateTime<Utc>) -> bool {
        t >= self.start && t <= self.end()
    }

    /// Calendar-date containment, used for source publication dates.
    pub fn contains_date(&self, d: NaiveDate) -> bool {
        d >= self.start.date_naive() && d <= self.end().date_naive()
    }

    /// Filesystem-safe identifier, e.g. `20240101T000000Z_1209600s`.
    pub fn id(&self) -> String {
        format!("{}_{}s", self.start.format("%Y%m%dT%H%M%SZ"), self.duration.num_seconds())
    }
}

impl fmt::Display for EvaluationWindow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}/{}",
            self.start.to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            self.end().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
        )
    }
}

/// Parses an RFC 3339 instant or a bare `YYYY-MM-DD` date (midnight UTC).
pub fn parse_instant(s: &str) -> Option<DateTime<Utc>> {
    let s = s.trim();
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.with_timezone(&Utc));
    }
    if let Ok(t) = NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S") {
        return Some(t.and_utc());
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d").ok().map(|d| d.and_hms_opt(0, 0, 0).expect("midnight").and_utc())
}

impl FromStr for EvaluationWindow {
    type Err = WindowError;

    /// Accepts `<start>/<end>` or `<start>/<N>d`; a bare `<start>` uses the
    /// default duration.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let syntax = || WindowError::Syntax(s.to_string());
        match s.split_once('/') {
            None => parse_instant(s).map(Self::with_default_duration).ok_or_else(syntax),
            Some((a, b)) => {
                let start = parse_instant(a).ok_or_else(syntax)?;
                let b = b.trim();
                if let Some(days) = b.strip_suffix('d') {
                    let days: i64 = days.parse().map_err(|_| syntax())?;
                    return Self::new(start, Duration::days(days));
                }
                let end = parse_instant(b).ok_or_else(syntax)?;
                Self::new(start, end - start)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    #[test]
    fn window_parsing_and_default() {
        let w: EvaluationWindow = "2024-01-01/2024-01-15".parse().unwrap();
        assert_eq!(w.duration(), Duration::days(14));
        let d: EvaluationWindow = "2024-01-01".parse().unwrap();
        assert_eq!(d.duration(), Duration::days(DEFAULT_WINDOW_DAYS));
        let n: EvaluationWindow = "2024-03-01T00:00:00Z/7d".parse().unwrap();
        assert_eq!(n.end(), Utc.with_ymd_and_hms(2024, 3, 8, 0, 0, 0).unwrap());
        assert!(matches!("2024-01-15/2024-01-01".parse::<EvaluationWindow>(), Err(WindowError::NonPositive(_))));
        assert!("garbage".parse::<EvaluationWindow>().is_err());
    }

    #[test]
    fn window_serde_rejects_zero_duration() {
        let bad = r#"{"start":"2024-01-01T00:00:00Z","duration_secs":0}"#;
        assert!(serde_json::from_str::<EvaluationWindow>(bad).is_err());
        let w = EvaluationWindow::with_default_duration(Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap());
        let back: EvaluationWindow = serde_json::from_str(&serde_json::to_string(&w).unwrap()).unwrap();
        assert_eq!(back, w);
        assert_eq!(w.id(), "20240101T000000Z_1209600s");
    }
}
