use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{LexicalIndex, RetrievalError};
use crate::catalog::ArtifactKind;

const RANK_DEPTH: usize = 10;

/// A query with the payloads that should be retrieved for it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievalSample {
    pub kind: ArtifactKind,
    pub query: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scope: Option<String>,
    pub gold: Vec<String>,
    /// Set by dataset derivation when a gold payload is not in the catalog.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub unresolved: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SampleFlag {
    /// No gold payload in the top 4.
    Miss,
    GoldNotIndexed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleOutcome {
    pub index: usize,
    pub kind: ArtifactKind,
    pub query: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scope: Option<String>,
    pub gold: Vec<String>,
    /// Top payloads, best first.
    pub ranking: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<SampleFlag>,
}

impl SampleOutcome {
    fn gold_set(&self) -> BTreeSet<&str> {
        self.gold.iter().map(String::as_str).collect()
    }

    pub fn recall_at(&self, k: usize) -> f64 {
        let gold = self.gold_set();
        if gold.is_empty() {
            return 0.0;
        }
        let hits = self
            .ranking
            .iter()
            .take(k)
            .filter(|p| gold.contains(p.as_str()))
            .count();
        hits as f64 / gold.len() as f64
    }

    /// 1-based rank of the first gold payload.
    pub fn first_hit(&self) -> Option<usize> {
        let gold = self.gold_set();
        self.ranking
            .iter()
            .position(|p| gold.contains(p.as_str()))
            .map(|i| i + 1)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct KindMetrics {
    pub samples: usize,
    pub recall_at_1: f64,
    pub recall_at_4: f64,
    pub recall_at_10: f64,
    pub hit_rate_at_4: f64,
    pub mrr_at_10: f64,
}

impl KindMetrics {
    fn from_outcomes<'a>(outcomes: impl IntoIterator<Item = &'a SampleOutcome>) -> Self {
        let mut m = KindMetrics::default();
        for o in outcomes {
            m.samples += 1;
            m.recall_at_1 += o.recall_at(1);
            m.recall_at_4 += o.recall_at(4);
            m.recall_at_10 += o.recall_at(10);
            let hit = o.first_hit();
            if matches!(hit, Some(r) if r <= 4) {
                m.hit_rate_at_4 += 1.0;
            }
            if let Some(r) = hit.filter(|&r| r <= RANK_DEPTH) {
                m.mrr_at_10 += 1.0 / r as f64;
            }
        }
        if m.samples > 0 {
            let n = m.samples as f64;
            m.recall_at_1 /= n;
            m.recall_at_4 /= n;
            m.recall_at_10 /= n;
            m.hit_rate_at_4 /= n;
            m.mrr_at_10 /= n;
        }
        m
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalReport {
    pub overall: KindMetrics,
    pub per_kind: BTreeMap<ArtifactKind, KindMetrics>,
    pub outcomes: Vec<SampleOutcome>,
}

impl RetrievalReport {
    /// Outcomes carrying at least one flag.
    pub fn failures(&self) -> impl Iterator<Item = &SampleOutcome> {
        self.outcomes.iter().filter(|o| !o.flags.is_empty())
    }
}

impl fmt::Display for RetrievalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<14} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7}",
            "kind", "n", "R@1", "R@4", "R@10", "HR@4", "MRR"
        )?;
        let row = |f: &mut fmt::Formatter<'_>, name: &str, m: &KindMetrics| {
            writeln!(
                f,
                "{:<14} {:>7} {:>7.3} {:>7.3} {:>7.3} {:>7.3} {:>7.3}",
                name, m.samples, m.recall_at_1, m.recall_at_4, m.recall_at_10, m.hit_rate_at_4, m.mrr_at_10
            )
        };
        for (k, m) in &self.per_kind {
            row(f, k.as_str(), m)?;
        }
        row(f, "overall", &self.overall)?;
        let failures: Vec<_> = self.failures().collect();
        if !failures.is_empty() {
            writeln!(f, "\nfailures:")?;
            for o in failures {
                writeln!(
                    f,
                    "  #{} {} {:?} gold={:?} got={:?} {:?}",
                    o.index,
                    o.kind,
                    o.query,
                    o.gold,
                    o.ranking.iter().take(4).collect::<Vec<_>>(),
                    o.flags
                )?;
            }
        }
        Ok(())
    }
}

pub fn evaluate_retrieval(
    index: &LexicalIndex,
    samples: &[RetrievalSample],
) -> Result<RetrievalReport, RetrievalError> {
    if samples.is_empty() {
        return Err(RetrievalError::EmptySampleSet);
    }
    let mut outcomes = Vec::with_capacity(samples.len());
    for (i, s) in samples.iter().enumerate() {
        let ranked = index.query(s.kind, &s.query, RANK_DEPTH, s.scope.as_deref())?;
        let ranking: Vec<String> = ranked.choices.into_iter().map(|c| c.payload).collect();
        let indexed = index
            .sub_index(s.kind, s.scope.as_deref())
            .is_some_and(|sub| !s.gold.is_empty() && s.gold.iter().all(|g| sub.contains(g)));
        let mut o = SampleOutcome {
            index: i,
            kind: s.kind,
            query: s.query.clone(),
            scope: s.scope.clone(),
            gold: s.gold.clone(),
            ranking,
            flags: Vec::new(),
        };
        if !matches!(o.first_hit(), Some(r) if r <= 4) {
            o.flags.push(SampleFlag::Miss);
        }
        if s.unresolved || !indexed {
            o.flags.push(SampleFlag::GoldNotIndexed);
        }
        outcomes.push(o);
    }
    let mut per_kind = BTreeMap::new();
    for kind in ArtifactKind::ALL {
        let m = KindMetrics::from_outcomes(outcomes.iter().filter(|o| o.kind == kind));
        if m.samples > 0 {
            per_kind.insert(kind, m);
        }
    }
    Ok(RetrievalReport {
        overall: KindMetrics::from_outcomes(&outcomes),
        per_kind,
        outcomes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{CatalogDocument, EnvironmentCatalog};

    fn index() -> LexicalIndex {
        let steps = "- { name: send_email }\n- { name: look_up_record }\n- { name: update_record }\n";
        let c = EnvironmentCatalog::from_documents(&[CatalogDocument::new("s", steps)], &[]).unwrap();
        LexicalIndex::build(&c)
    }

    fn sample(q: &str, gold: &str) -> RetrievalSample {
        RetrievalSample {
            kind: ArtifactKind::StepName,
            query: q.into(),
            scope: None,
            gold: vec![gold.into()],
            unresolved: false,
        }
    }

    #[test]
    fn verbatim_queries_are_perfect() {
        let samples: Vec<_> = ["send_email", "look_up_record", "update_record"]
            .iter()
            .map(|n| sample(n, n))
            .collect();
        let r = evaluate_retrieval(&index(), &samples).unwrap();
        assert_eq!(r.overall.recall_at_1, 1.0);
        assert_eq!(r.overall.mrr_at_10, 1.0);
        assert_eq!(r.failures().count(), 0);
    }

    #[test]
    fn unknown_gold_is_flagged() {
        let r = evaluate_retrieval(&index(), &[sample("send an email", "send_fax")]).unwrap();
        assert_eq!(r.outcomes[0].flags, [SampleFlag::Miss, SampleFlag::GoldNotIndexed]);
        assert_eq!(r.overall.recall_at_4, 0.0);
    }

    #[test]
    fn empty_sample_set() {
        assert!(matches!(
            evaluate_retrieval(&index(), &[]),
            Err(RetrievalError::EmptySampleSet)
        ));
    }
}
