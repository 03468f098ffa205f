//! Primitive-usage accounting over evaluation episodes.

use std::collections::BTreeSet;

use raps_core::rl::EpisodeRecord;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrimitiveCount {
    pub name: String,
    pub calls: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UsageSummary {
    /// One entry per library primitive, in library order.
    pub counts: Vec<PrimitiveCount>,
    /// Mean number of distinct primitives called per episode.
    pub unique_mean: f64,
    pub episodes: u64,
    pub decisions: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl UsageSummary {
    pub fn total_calls(&self) -> u64 {
        self.counts.iter().map(|c| c.calls).sum()
    }

    pub fn calls(&self, name: &str) -> Option<u64> {
        self.counts.iter().find(|c| c.name == name).map(|c| c.calls)
    }
}

/// Count primitive calls in `episodes`. `names` is the library in index
/// order; an empty list means the episodes came from a raw-action run.
pub fn log_primitive_usage(names: &[String], episodes: &[EpisodeRecord]) -> UsageSummary {
    let decisions = episodes.iter().map(|e| e.rewards.len() as u64).sum();
    if names.is_empty() {
        return UsageSummary {
            counts: vec![],
            unique_mean: 0.0,
            episodes: episodes.len() as u64,
            decisions,
            note: Some("raw-action run: no primitive usage".into()),
        };
    }
    let mut calls = vec![0u64; names.len()];
    let mut unique = 0usize;
    for e in episodes {
        let mut seen = BTreeSet::new();
        for &k in &e.primitives {
            calls[k] += 1;
            seen.insert(k);
        }
        unique += seen.len();
    }
    UsageSummary {
        counts: names
            .iter()
            .zip(calls)
            .map(|(n, c)| PrimitiveCount {
                name: n.clone(),
                calls: c,
            })
            .collect(),
        unique_mean: if episodes.is_empty() {
            0.0
        } else {
            unique as f64 / episodes.len() as f64
        },
        episodes: episodes.len() as u64,
        decisions,
        note: None,
    }
}

/// Sum per-primitive counts of several summaries over the same library.
pub fn merge(summaries: &[&UsageSummary]) -> Option<UsageSummary> {
    let first = summaries.first()?;
    let mut out = (*first).clone();
    let mut unique = first.unique_mean * first.episodes as f64;
    for s in &summaries[1..] {
        for (a, b) in out.counts.iter_mut().zip(&s.counts) {
            a.calls += b.calls;
        }
        unique += s.unique_mean * s.episodes as f64;
        out.episodes += s.episodes;
        out.decisions += s.decisions;
    }
    out.unique_mean = if out.episodes == 0 {
        0.0
    } else {
        unique / out.episodes as f64
    };
    Some(out)
}
