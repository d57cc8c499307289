//! Environment catalog: the steps, tables, columns and column values an
//! installation offers, loaded from `steps/*.yaml` and `tables/*.yaml`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("{file}: {message}")]
    Syntax { file: String, message: String },
    #[error("duplicate {kind} `{name}`")]
    DuplicateArtifact { kind: &'static str, name: String },
    #[error("dangling reference in {owner}: {message}")]
    DanglingReference { owner: String, message: String },
    #[error("unknown table `{0}`")]
    UnknownTable(String),
    #[error("unknown column `{column}` on table `{table}`")]
    UnknownColumn { table: String, column: String },
    #[error("{0:?} listing requires a table scope")]
    ScopeRequired(ArtifactKind),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueKind {
    Text,
    Table,
    Column,
    Condition,
    Reference,
    EmailBody,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputDecl {
    pub name: String,
    pub kind: ValueKind,
    #[serde(default = "default_true")]
    pub required: bool,
    /// For reference inputs: the table the referenced record must belong to.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_table: Option<String>,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputSchema {
    /// One record; path segments after the output name are columns.
    Record,
    /// A list of records.
    Records,
    Scalar,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputDecl {
    pub name: String,
    pub schema: OutputSchema,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepDefinition {
    pub name: String,
    #[serde(default)]
    pub label: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub flow_control: bool,
    #[serde(default)]
    pub inputs: Vec<InputDecl>,
    #[serde(default)]
    pub outputs: Vec<OutputDecl>,
}

impl StepDefinition {
    pub fn input(&self, name: &str) -> Option<&InputDecl> {
        self.inputs.iter().find(|i| i.name == name)
    }

    pub fn output(&self, name: &str) -> Option<&OutputDecl> {
        self.outputs.iter().find(|o| o.name == name)
    }

    /// The input whose value names the step's table, if any.
    pub fn table_input(&self) -> Option<&InputDecl> {
        self.inputs.iter().find(|i| i.kind == ValueKind::Table)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnumValue {
    pub value: String,
    pub label: String,
}

/// Unique record identifier column present on every table.
pub const SYS_ID: &str = "sys_id";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnDef {
    pub name: String,
    #[serde(default)]
    pub label: String,
    /// Stored values of enum-like columns.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub values: Vec<EnumValue>,
    /// Table referenced by a reference column.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableSchema {
    pub name: String,
    #[serde(default)]
    pub label: String,
    #[serde(default)]
    pub description: String,
    pub columns: Vec<ColumnDef>,
}

impl TableSchema {
    pub fn column(&self, name: &str) -> Option<&ColumnDef> {
        self.columns.iter().find(|c| c.name == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ArtifactKind {
    StepName,
    TableName,
    ColumnName,
    ColumnValue,
}

impl ArtifactKind {
    pub const ALL: [ArtifactKind; 4] = [
        ArtifactKind::StepName,
        ArtifactKind::TableName,
        ArtifactKind::ColumnName,
        ArtifactKind::ColumnValue,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ArtifactKind::StepName => "STEP_NAME",
            ArtifactKind::TableName => "TABLE_NAME",
            ArtifactKind::ColumnName => "COLUMN_NAME",
            ArtifactKind::ColumnValue => "COLUMN_VALUE",
        }
    }

    pub fn needs_scope(self) -> bool {
        matches!(self, ArtifactKind::ColumnName | ArtifactKind::ColumnValue)
    }
}

impl fmt::Display for ArtifactKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ArtifactKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_uppercase().replace('-', "_");
        ArtifactKind::ALL
            .into_iter()
            .find(|k| k.as_str() == norm || k.as_str().trim_end_matches("_NAME") == norm)
            .ok_or_else(|| format!("unknown artifact kind `{s}`"))
    }
}

/// One indexable artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactDoc {
    pub id: String,
    pub kind: ArtifactKind,
    /// Surface text used for matching: name, label and description.
    pub text: String,
    /// The exact string injected into generation.
    pub payload: String,
    /// The artifact's own name, used for exact-name matching.
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CatalogVersion {
    /// Incremented on every reload within a process.
    pub generation: u64,
    /// Content hash of the catalog documents.
    pub fingerprint: String,
}

impl fmt::Display for CatalogVersion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.fingerprint, self.generation)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvironmentCatalog {
    steps: BTreeMap<String, StepDefinition>,
    tables: BTreeMap<String, TableSchema>,
    version: CatalogVersion,
}

/// One catalog document: a file name and its YAML text.
#[derive(Debug, Clone)]
pub struct CatalogDocument {
    pub name: String,
    pub text: String,
}

impl CatalogDocument {
    pub fn new(name: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            text: text.into(),
        }
    }
}

fn read_docs(dir: &Path) -> Result<Vec<CatalogDocument>, CatalogError> {
    if !dir.exists() {
        return Ok(Vec::new());
    }
    let io = |source| CatalogError::Io {
        path: dir.to_owned(),
        source,
    };
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| matches!(p.extension().and_then(|e| e.to_str()), Some("yaml" | "yml")))
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let text = fs::read_to_string(&p).map_err(|source| CatalogError::Io {
                path: p.clone(),
                source,
            })?;
            let name = p.file_name().unwrap_or_default().to_string_lossy().into_owned();
            Ok(CatalogDocument { name, text })
        })
        .collect()
}

fn parse_list<T: for<'de> Deserialize<'de>>(doc: &CatalogDocument) -> Result<Vec<T>, CatalogError> {
    let syntax = |message: String| CatalogError::Syntax {
        file: doc.name.clone(),
        message,
    };
    if doc.text.trim().is_empty() {
        return Err(syntax("empty document".into()));
    }
    let items: Vec<T> = serde_yaml::from_str(&doc.text).map_err(|e| syntax(e.to_string()))?;
    if items.is_empty() {
        return Err(syntax("document lists no artifacts".into()));
    }
    Ok(items)
}

fn fingerprint(steps: &[CatalogDocument], tables: &[CatalogDocument]) -> String {
    let mut h = Sha256::new();
    for (family, docs) in [("steps", steps), ("tables", tables)] {
        for d in docs {
            h.update(family.as_bytes());
            h.update([0]);
            h.update(d.name.as_bytes());
            h.update([0]);
            h.update(d.text.as_bytes());
            h.update([0]);
        }
    }
    hex::encode(&h.finalize()[..8])
}

fn check_unique<'a>(kind: &'static str, names: impl IntoIterator<Item = &'a str>) -> Result<(), CatalogError> {
    let mut seen = BTreeSet::new();
    for n in names {
        if !seen.insert(n) {
            return Err(CatalogError::DuplicateArtifact {
                kind,
                name: n.to_owned(),
            });
        }
    }
    Ok(())
}

/// Splits a natural identifier into words: `look_up_record` -> `look up record`.
pub(crate) fn identifier_words(s: &str) -> String {
    s.replace(['_', '.', '-'], " ")
}

impl EnvironmentCatalog {
    /// Loads `dir/steps/*.yaml` and `dir/tables/*.yaml`.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self, CatalogError> {
        let dir = dir.as_ref();
        let steps = read_docs(&dir.join("steps"))?;
        let tables = read_docs(&dir.join("tables"))?;
        Self::from_documents(&steps, &tables)
    }

    pub fn from_documents(steps: &[CatalogDocument], tables: &[CatalogDocument]) -> Result<Self, CatalogError> {
        let mut step_defs: Vec<StepDefinition> = Vec::new();
        for d in steps {
            step_defs.extend(parse_list::<StepDefinition>(d)?);
        }
        let mut table_defs: Vec<TableSchema> = Vec::new();
        for d in tables {
            table_defs.extend(parse_list::<TableSchema>(d)?);
        }
        for t in &mut table_defs {
            if t.column(SYS_ID).is_none() {
                t.columns.insert(
                    0,
                    ColumnDef {
                        name: SYS_ID.into(),
                        label: "Sys ID".into(),
                        values: Vec::new(),
                        reference: None,
                    },
                );
            }
        }
        check_unique("step", step_defs.iter().map(|s| s.name.as_str()))?;
        check_unique("table", table_defs.iter().map(|t| t.name.as_str()))?;
        let table_names: BTreeSet<&str> = table_defs.iter().map(|t| t.name.as_str()).collect();

        for t in &table_defs {
            check_unique("column", t.columns.iter().map(|c| c.name.as_str())).map_err(|_| dup_in(&t.name))?;
            for c in &t.columns {
                check_unique("column value", c.values.iter().map(|v| v.value.as_str()))
                    .map_err(|_| dup_in(&format!("{}.{}", t.name, c.name)))?;
                if let Some(r) = &c.reference {
                    if !table_names.contains(r.as_str()) {
                        return Err(CatalogError::DanglingReference {
                            owner: format!("column {}.{}", t.name, c.name),
                            message: format!("references unknown table `{r}`"),
                        });
                    }
                }
            }
        }
        for s in &step_defs {
            check_unique("input", s.inputs.iter().map(|i| i.name.as_str())).map_err(|_| dup_in(&s.name))?;
            check_unique("output", s.outputs.iter().map(|o| o.name.as_str())).map_err(|_| dup_in(&s.name))?;
            let has_table_context = s
                .inputs
                .iter()
                .any(|i| matches!(i.kind, ValueKind::Table | ValueKind::Reference));
            for i in &s.inputs {
                if matches!(i.kind, ValueKind::Column | ValueKind::Condition) && !has_table_context {
                    return Err(CatalogError::DanglingReference {
                        owner: format!("step {}", s.name),
                        message: format!("input `{}` needs a table or reference input for context", i.name),
                    });
                }
                if let Some(r) = &i.reference_table {
                    if !table_names.contains(r.as_str()) {
                        return Err(CatalogError::DanglingReference {
                            owner: format!("step {}", s.name),
                            message: format!("input `{}` references unknown table `{r}`", i.name),
                        });
                    }
                }
            }
        }

        Ok(Self {
            version: CatalogVersion {
                generation: 1,
                fingerprint: fingerprint(steps, tables),
            },
            steps: step_defs.into_iter().map(|s| (s.name.clone(), s)).collect(),
            tables: table_defs.into_iter().map(|t| (t.name.clone(), t)).collect(),
        })
    }

    pub fn version(&self) -> &CatalogVersion {
        &self.version
    }

    /// Same content with the generation bumped, as after a reload.
    pub fn next_generation(mut self, previous: &CatalogVersion) -> Self {
        self.version.generation = previous.generation + 1;
        self
    }

    pub fn step(&self, name: &str) -> Option<&StepDefinition> {
        self.steps.get(name)
    }

    pub fn table(&self, name: &str) -> Option<&TableSchema> {
        self.tables.get(name)
    }

    pub fn steps(&self) -> impl Iterator<Item = &StepDefinition> {
        self.steps.values()
    }

    pub fn tables(&self) -> impl Iterator<Item = &TableSchema> {
        self.tables.values()
    }

    pub fn column(&self, table: &str, column: &str) -> Option<&ColumnDef> {
        self.table(table)?.column(column)
    }

    /// Resolves a `table` or `table.column` scope.
    fn resolve_scope<'a>(&'a self, scope: &str) -> Result<(&'a TableSchema, Option<&'a ColumnDef>), CatalogError> {
        let (table, column) = match scope.split_once('.') {
            Some((t, c)) => (t, Some(c)),
            None => (scope, None),
        };
        let t = self
            .table(table)
            .ok_or_else(|| CatalogError::UnknownTable(table.to_owned()))?;
        let c = column
            .map(|c| {
                t.column(c).ok_or_else(|| CatalogError::UnknownColumn {
                    table: table.to_owned(),
                    column: c.to_owned(),
                })
            })
            .transpose()?;
        Ok((t, c))
    }

    /// Indexable documents of one kind, sorted by payload.
    ///
    /// `COLUMN_NAME` takes a table scope. `COLUMN_VALUE` takes either
    /// `table.column` (payload = stored value) or `table` (payload =
    /// `column=value` across every enum column of the table).
    pub fn list_artifacts(&self, kind: ArtifactKind, scope: Option<&str>) -> Result<Vec<ArtifactDoc>, CatalogError> {
        let mut docs = match kind {
            ArtifactKind::StepName => self
                .steps
                .values()
                .map(|s| ArtifactDoc {
                    id: format!("step:{}", s.name),
                    kind,
                    text: join_text(&[&identifier_words(&s.name), &s.label, &s.description]),
                    payload: s.name.clone(),
                    name: s.name.clone(),
                })
                .collect::<Vec<_>>(),
            ArtifactKind::TableName => self
                .tables
                .values()
                .map(|t| ArtifactDoc {
                    id: format!("table:{}", t.name),
                    kind,
                    text: join_text(&[&identifier_words(&t.name), &t.label, &t.description]),
                    payload: t.name.clone(),
                    name: t.name.clone(),
                })
                .collect(),
            ArtifactKind::ColumnName => {
                let scope = scope.ok_or(CatalogError::ScopeRequired(kind))?;
                let (t, _) = self.resolve_scope(scope)?;
                t.columns
                    .iter()
                    .map(|c| {
                        let labels: Vec<&str> = c.values.iter().map(|v| v.label.as_str()).collect();
                        ArtifactDoc {
                            id: format!("column:{}.{}", t.name, c.name),
                            kind,
                            text: join_text(&[&identifier_words(&c.name), &c.label, &labels.join(" ")]),
                            payload: c.name.clone(),
                            name: c.name.clone(),
                        }
                    })
                    .collect()
            }
            ArtifactKind::ColumnValue => {
                let scope = scope.ok_or(CatalogError::ScopeRequired(kind))?;
                let (t, col) = self.resolve_scope(scope)?;
                let cols: Vec<&ColumnDef> = match col {
                    Some(c) => vec![c],
                    None => t.columns.iter().collect(),
                };
                cols.into_iter()
                    .flat_map(|c| {
                        c.values.iter().map(move |v| {
                            let payload = if col.is_some() {
                                v.value.clone()
                            } else {
                                format!("{}={}", c.name, v.value)
                            };
                            ArtifactDoc {
                                id: format!("value:{}.{}={}", t.name, c.name, v.value),
                                kind,
                                text: join_text(&[&v.label, &v.value]),
                                name: payload.clone(),
                                payload,
                            }
                        })
                    })
                    .collect()
            }
        };
        docs.sort_by(|a, b| a.payload.cmp(&b.payload));
        Ok(docs)
    }

    /// Whether `payload` names an artifact of `kind` within `scope`.
    pub fn contains(&self, kind: ArtifactKind, payload: &str, scope: Option<&str>) -> bool {
        self.list_artifacts(kind, scope)
            .map(|docs| docs.iter().any(|d| d.payload == payload))
            .unwrap_or(false)
    }
}

fn dup_in(owner: &str) -> CatalogError {
    CatalogError::DuplicateArtifact {
        kind: "member",
        name: owner.to_owned(),
    }
}

fn join_text(parts: &[&str]) -> String {
    parts
        .iter()
        .filter(|p| !p.is_empty())
        .copied()
        .collect::<Vec<_>>()
        .join(" ")
}

/// Holds the current catalog; reloads swap in a new value atomically.
#[derive(Debug)]
pub struct CatalogStore {
    dir: Option<PathBuf>,
    current: RwLock<Arc<EnvironmentCatalog>>,
}

impl CatalogStore {
    pub fn new(catalog: EnvironmentCatalog) -> Self {
        Self {
            dir: None,
            current: RwLock::new(Arc::new(catalog)),
        }
    }

    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, CatalogError> {
        let dir = dir.into();
        let catalog = EnvironmentCatalog::load(&dir)?;
        Ok(Self {
            dir: Some(dir),
            current: RwLock::new(Arc::new(catalog)),
        })
    }

    pub fn current(&self) -> Arc<EnvironmentCatalog> {
        self.current.read().expect("catalog lock poisoned").clone()
    }

    /// Re-reads the catalog directory and swaps it in.
    pub fn reload(&self) -> Result<Arc<EnvironmentCatalog>, CatalogError> {
        let fresh = match &self.dir {
            Some(d) => EnvironmentCatalog::load(d)?,
            None => (*self.current()).clone(),
        };
        self.replace(fresh)
    }

    pub fn replace(&self, catalog: EnvironmentCatalog) -> Result<Arc<EnvironmentCatalog>, CatalogError> {
        let mut guard = self.current.write().expect("catalog lock poisoned");
        let next = Arc::new(catalog.next_generation(guard.version()));
        *guard = next.clone();
        Ok(next)
    }
}
