use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use super::{EditRecord, FactualEdit};

/// Keeps records that add at least one new citation and attaches the
/// sources' publication dates and edit lags. Records without new citations
/// are not returned; callers keep them in their own collections.
pub fn identify_factual<F>(records: &[EditRecord], date_lookup: F) -> Vec<FactualEdit>
where
    F: Fn(&str) -> Option<NaiveDate>,
{
    records
        .iter()
        .filter(|r| !r.new_citation_urls.is_empty())
        .map(|r| {
            let dates: Vec<Option<NaiveDate>> = r.new_citation_urls.iter().map(|u| date_lookup(u)).collect();
            let lags = dates.iter().map(|d| d.and_then(|d| edit_lag_days(r, d))).collect();
            FactualEdit {
                record: r.clone(),
                source_urls: r.new_citation_urls.clone(),
                source_publication_dates: dates,
                edit_lag_days: lags,
            }
        })
        .collect()
}

/// Days from source publication (midnight UTC) to the edit. Negative lags
/// indicate bad metadata and are reported as absent.
pub fn edit_lag_days(record: &EditRecord, published: NaiveDate) -> Option<f64> {
    let published = published.and_hms_opt(0, 0, 0)?.and_utc();
    let secs = (record.to_revision.timestamp - published).num_seconds();
    (secs >= 0).then(|| secs as f64 / 86_400.0)
}

/// Histogram bucket edges: bucket `i` covers `(edges[i-1], edges[i]]`, the
/// first bucket starts at 0 inclusive and a final open bucket covers
/// everything above the last edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagBuckets {
    edges: Vec<f64>,
}

impl LagBuckets {
    pub fn new(mut edges: Vec<f64>) -> Self {
        edges.retain(|e| e.is_finite() && *e >= 0.0);
        edges.sort_by(f64::total_cmp);
        edges.dedup();
        Self { edges }
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    fn index(&self, lag: f64) -> usize {
        self.edges.iter().position(|&e| lag <= e).unwrap_or(self.edges.len())
    }

    fn labels(&self) -> Vec<String> {
        let mut labels = Vec::with_capacity(self.edges.len() + 1);
        let mut lower = 0.0;
        for &e in &self.edges {
            labels.push(format!("{}-{}", fmt_days(lower), fmt_days(e)));
            lower = e;
        }
        labels.push(format!(">{}", fmt_days(lower)));
        labels
    }
}

impl Default for LagBuckets {
    fn default() -> Self {
        Self::new(vec![1.0, 7.0, 30.0, 90.0, 365.0])
    }
}

fn fmt_days(d: f64) -> String {
    if d.fract() == 0.0 {
        format!("{}", d as i64)
    } else {
        format!("{d}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagBucketCount {
    pub label: String,
    pub count: usize,
}

/// Distribution of source-to-edit lags over a set of factual edits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagReport {
    pub buckets: Vec<LagBucketCount>,
    pub lags: usize,
    pub mean_days: Option<f64>,
    pub median_days: Option<f64>,
    /// Cited sources whose publication date is known.
    pub dated_sources: usize,
    pub undated_sources: usize,
    /// Fraction of dated sources published in the same calendar year as the
    /// edit; absent when no source is dated.
    pub same_year_fraction: Option<f64>,
}

pub fn lag_distribution(edits: &[FactualEdit], buckets: &LagBuckets) -> LagReport {
    let mut counts = vec![0usize; buckets.edges().len() + 1];
    let mut lags: Vec<f64> = edits.iter().flat_map(|e| e.edit_lag_days.iter().flatten().copied()).collect();
    for &lag in &lags {
        counts[buckets.index(lag)] += 1;
    }

    let mut dated = 0;
    let mut undated = 0;
    let mut same_year = 0;
    for e in edits {
        let year = e.record.to_revision.timestamp.year();
        for d in &e.source_publication_dates {
            match d {
                Some(d) => {
                    dated += 1;
                    if d.year() == year {
                        same_year += 1;
                    }
                }
                None => undated += 1,
            }
        }
    }

    lags.sort_by(f64::total_cmp);
    let mean = (!lags.is_empty()).then(|| lags.iter().sum::<f64>() / lags.len() as f64);
    let median = match lags.len() {
        0 => None,
        n if n % 2 == 1 => Some(lags[n / 2]),
        n => Some((lags[n / 2 - 1] + lags[n / 2]) / 2.0),
    };

    LagReport {
        buckets: buckets
            .labels()
            .into_iter()
            .zip(counts)
            .map(|(label, count)| LagBucketCount { label, count })
            .collect(),
        lags: lags.len(),
        mean_days: mean,
        median_days: median,
        dated_sources: dated,
        undated_sources: undated,
        same_year_fraction: (dated > 0).then(|| same_year as f64 / dated as f64),
    }
}
