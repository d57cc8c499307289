use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::text::{features, normalize};
use super::{Choice, RankedChoices, RetrievalError, Retriever};
use crate::catalog::{ArtifactDoc, ArtifactKind, CatalogVersion, EnvironmentCatalog};

/// Highest score a non-exact match may reach, so exact-name matches rank first.
const NON_EXACT_CAP: f64 = 1.0 - 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct IndexedDoc {
    payload: String,
    name: String,
    norm: f64,
}

/// One searchable collection: every artifact of one kind within one scope.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SubIndex {
    docs: Vec<IndexedDoc>,
    idf: BTreeMap<String, f64>,
    /// feature -> (doc, weight)
    postings: BTreeMap<String, Vec<(u32, f64)>>,
}

fn tf_weight(tf: u32) -> f64 {
    1.0 + (tf as f64).ln()
}

impl SubIndex {
    fn build(docs: &[ArtifactDoc]) -> Self {
        let n = docs.len() as f64;
        let feats: Vec<BTreeMap<String, u32>> = docs.iter().map(|d| features(&d.text)).collect();
        let mut df: BTreeMap<&str, u32> = BTreeMap::new();
        for f in &feats {
            for k in f.keys() {
                *df.entry(k).or_insert(0) += 1;
            }
        }
        let idf: BTreeMap<String, f64> = df
            .iter()
            .map(|(k, &d)| (k.to_string(), (1.0 + n / d as f64).ln()))
            .collect();
        let mut postings: BTreeMap<String, Vec<(u32, f64)>> = BTreeMap::new();
        let mut indexed = Vec::with_capacity(docs.len());
        for (i, (doc, f)) in docs.iter().zip(&feats).enumerate() {
            let mut sq = 0.0;
            for (k, &tf) in f {
                let w = tf_weight(tf) * idf[k];
                sq += w * w;
                postings.entry(k.clone()).or_default().push((i as u32, w));
            }
            indexed.push(IndexedDoc {
                payload: doc.payload.clone(),
                name: normalize(&doc.name),
                norm: sq.sqrt(),
            });
        }
        Self {
            docs: indexed,
            idf,
            postings,
        }
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn contains(&self, payload: &str) -> bool {
        self.docs.iter().any(|d| d.payload == payload)
    }

    /// Every feature term of the collection.
    pub fn vocabulary(&self) -> impl Iterator<Item = &str> {
        self.idf.keys().map(String::as_str)
    }

    /// Scores every document; exact normalised-name matches score 1.
    fn score_all(&self, query: &str) -> Vec<(usize, f64)> {
        let n = self.docs.len() as f64;
        let unseen_idf = (1.0 + n).ln();
        let mut dots = vec![0.0; self.docs.len()];
        let mut q_sq = 0.0;
        for (k, tf) in features(query) {
            let idf = self.idf.get(&k).copied().unwrap_or(unseen_idf);
            let qw = tf_weight(tf) * idf;
            q_sq += qw * qw;
            if let Some(post) = self.postings.get(&k) {
                for &(d, w) in post {
                    dots[d as usize] += qw * w;
                }
            }
        }
        let q_norm = q_sq.sqrt();
        let q_name = normalize(query);
        self.docs
            .iter()
            .enumerate()
            .map(|(i, d)| {
                let s = if !q_name.is_empty() && d.name == q_name {
                    1.0
                } else if q_norm == 0.0 || d.norm == 0.0 {
                    0.0
                } else {
                    (dots[i] / (q_norm * d.norm)).clamp(0.0, NON_EXACT_CAP)
                };
                (i, s)
            })
            .collect()
    }

    /// Positive-scoring payloads, best first, ties by payload.
    pub fn rank(&self, query: &str, k: usize) -> Vec<Choice> {
        let mut scored: Vec<(usize, f64)> = self.score_all(query).into_iter().filter(|(_, s)| *s > 0.0).collect();
        scored.sort_by(|a, b| {
            b.1.total_cmp(&a.1)
                .then_with(|| self.docs[a.0].payload.cmp(&self.docs[b.0].payload))
        });
        let mut seen = BTreeSet::new();
        scored
            .into_iter()
            .filter(|(i, _)| seen.insert(self.docs[*i].payload.as_str()))
            .take(k)
            .map(|(i, score)| Choice::new(self.docs[i].payload.clone(), score))
            .collect()
    }
}

/// Whether [`LexicalIndex::build_or_load`] had to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BuildStatus {
    Built,
    UpToDate,
}

/// Token and trigram index over every artifact of a catalog.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LexicalIndex {
    catalog_version: CatalogVersion,
    subs: BTreeMap<String, SubIndex>,
}

fn key(kind: ArtifactKind, scope: Option<&str>) -> String {
    match scope {
        Some(s) => format!("{kind}:{s}"),
        None => kind.to_string(),
    }
}

impl LexicalIndex {
    pub fn build(catalog: &EnvironmentCatalog) -> Self {
        let mut subs = BTreeMap::new();
        let mut add = |kind, scope: Option<&str>| {
            let docs = catalog
                .list_artifacts(kind, scope)
                .expect("scope taken from the catalog itself");
            subs.insert(key(kind, scope), SubIndex::build(&docs));
        };
        add(ArtifactKind::StepName, None);
        add(ArtifactKind::TableName, None);
        for t in catalog.tables() {
            add(ArtifactKind::ColumnName, Some(&t.name));
            add(ArtifactKind::ColumnValue, Some(&t.name));
            for c in t.columns.iter().filter(|c| !c.values.is_empty()) {
                add(ArtifactKind::ColumnValue, Some(&format!("{}.{}", t.name, c.name)));
            }
        }
        Self {
            catalog_version: catalog.version().clone(),
            subs,
        }
    }

    pub fn catalog_version(&self) -> &CatalogVersion {
        &self.catalog_version
    }

    pub fn sub_index(&self, kind: ArtifactKind, scope: Option<&str>) -> Option<&SubIndex> {
        self.subs.get(&key(kind, scope))
    }

    /// Errors when the index was built from different catalog content.
    pub fn ensure_fresh(&self, current: &CatalogVersion) -> Result<(), RetrievalError> {
        if self.catalog_version.fingerprint != current.fingerprint {
            return Err(RetrievalError::StaleIndex {
                index: self.catalog_version.clone(),
                catalog: current.clone(),
            });
        }
        Ok(())
    }

    pub fn query(
        &self,
        kind: ArtifactKind,
        text: &str,
        k: usize,
        scope: Option<&str>,
    ) -> Result<RankedChoices, RetrievalError> {
        if k == 0 {
            return Err(RetrievalError::InvalidK);
        }
        if kind.needs_scope() && scope.is_none() {
            return Err(RetrievalError::ScopeRequired(kind));
        }
        let scope = if kind.needs_scope() { scope } else { None };
        let choices = self.sub_index(kind, scope).map(|s| s.rank(text, k)).unwrap_or_default();
        Ok(RankedChoices {
            query: text.to_owned(),
            kind,
            scope: scope.map(str::to_owned),
            k,
            choices,
        })
    }

    /// `dir/<fingerprint>.idx`.
    pub fn path_in(dir: &Path, version: &CatalogVersion) -> PathBuf {
        dir.join(format!("{}.idx", version.fingerprint))
    }

    pub fn save(&self, dir: &Path) -> Result<PathBuf, RetrievalError> {
        fs::create_dir_all(dir)?;
        let path = Self::path_in(dir, &self.catalog_version);
        let tmp = path.with_extension("idx.tmp");
        fs::write(&tmp, serde_json::to_vec(self)?)?;
        fs::rename(&tmp, &path)?;
        Ok(path)
    }

    pub fn load(path: &Path) -> Result<Self, RetrievalError> {
        Ok(serde_json::from_slice(&fs::read(path)?)?)
    }

    /// Loads `dir/<fingerprint>.idx` when present, otherwise builds and saves.
    pub fn build_or_load(dir: &Path, catalog: &EnvironmentCatalog) -> Result<(Self, BuildStatus), RetrievalError> {
        let path = Self::path_in(dir, catalog.version());
        if path.exists() {
            if let Ok(mut idx) = Self::load(&path) {
                idx.catalog_version = catalog.version().clone();
                return Ok((idx, BuildStatus::UpToDate));
            }
        }
        let idx = Self::build(catalog);
        idx.save(dir)?;
        Ok((idx, BuildStatus::Built))
    }
}

impl Retriever for LexicalIndex {
    fn retrieve(
        &self,
        kind: ArtifactKind,
        query: &str,
        scope: Option<&str>,
        k: usize,
    ) -> Result<RankedChoices, RetrievalError> {
        self.query(kind, query, k, scope)
    }
}
