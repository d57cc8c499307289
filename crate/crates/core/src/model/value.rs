//! Input values: literals, output references, conditions and templated text.
//!
//! Every value is carried in the DSL as a single string. The classification
//! is purely syntactic so that a document can be parsed without a catalog:
//!
//! * a string matching the condition grammar is a [`ConditionExpr`];
//! * a string made of one `{{...}}` reference is an [`OutputRef`];
//! * a string mixing text and references is a composite;
//! * anything else is a literal.
//!
//! A non-condition value whose text would be read back as a condition (or
//! starts with an apostrophe) is written with a leading `'`, which forces the
//! non-condition reading. `{{` is a reserved delimiter inside literal text and
//! `^` is reserved inside condition operands.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::condition::ConditionExpr;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ValueError {
    #[error("unterminated `{{{{` reference")]
    UnterminatedReference,
    #[error("malformed output reference `{0}`")]
    BadReference(String),
    #[error("malformed condition `{0}`")]
    BadCondition(String),
}

/// The step an [`OutputRef`] points at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepRef {
    Trigger,
    Order(u32),
}

impl fmt::Display for StepRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StepRef::Trigger => f.write_str("trigger"),
            StepRef::Order(n) => write!(f, "{n}"),
        }
    }
}

/// A reference to an output of the trigger or an earlier step, e.g.
/// `{{trigger.record.assigned_to}}` or `{{1.record}}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OutputRef {
    pub step: StepRef,
    /// Output name followed by an optional field path.
    pub path: Vec<String>,
}

impl OutputRef {
    pub fn new(step: StepRef, path: &str) -> Self {
        Self {
            step,
            path: path.split('.').map(str::to_owned).collect(),
        }
    }

    pub fn trigger(path: &str) -> Self {
        Self::new(StepRef::Trigger, path)
    }

    pub fn step(order: u32, path: &str) -> Self {
        Self::new(StepRef::Order(order), path)
    }

    /// Name of the referenced output (first path segment).
    pub fn output(&self) -> &str {
        self.path.first().map(String::as_str).unwrap_or("")
    }

    /// `trigger.record.assigned_to` without delimiters.
    pub fn dotted(&self) -> String {
        let mut s = self.step.to_string();
        for seg in &self.path {
            s.push('.');
            s.push_str(seg);
        }
        s
    }

    pub fn parse_inner(inner: &str) -> Result<Self, ValueError> {
        let inner = inner.trim();
        let bad = || ValueError::BadReference(inner.to_owned());
        let mut parts = inner.split('.');
        let head = parts.next().ok_or_else(bad)?;
        let step = if head == "trigger" {
            StepRef::Trigger
        } else {
            match head.parse::<u32>() {
                Ok(n) if n > 0 && head.bytes().all(|b| b.is_ascii_digit()) => StepRef::Order(n),
                _ => return Err(bad()),
            }
        };
        let path: Vec<String> = parts.map(str::to_owned).collect();
        if path.is_empty()
            || path
                .iter()
                .any(|p| p.is_empty() || !p.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'_'))
        {
            return Err(bad());
        }
        Ok(Self { step, path })
    }
}

impl fmt::Display for OutputRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{{{}}}}}", self.dotted())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Segment {
    Text(String),
    Ref(OutputRef),
}

/// Text with embedded output references, normalised so that there are no
/// empty or adjacent text segments.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Template {
    segments: Vec<Segment>,
}

impl Template {
    pub fn new(segments: impl IntoIterator<Item = Segment>) -> Self {
        let mut out: Vec<Segment> = Vec::new();
        for seg in segments {
            match seg {
                Segment::Text(t) if t.is_empty() => {}
                Segment::Text(t) => match out.last_mut() {
                    Some(Segment::Text(prev)) => prev.push_str(&t),
                    _ => out.push(Segment::Text(t)),
                },
                r @ Segment::Ref(_) => out.push(r),
            }
        }
        Self { segments: out }
    }

    pub fn text(s: impl Into<String>) -> Self {
        Self::new([Segment::Text(s.into())])
    }

    pub fn reference(r: OutputRef) -> Self {
        Self::new([Segment::Ref(r)])
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn refs(&self) -> impl Iterator<Item = &OutputRef> {
        self.segments.iter().filter_map(|s| match s {
            Segment::Ref(r) => Some(r),
            Segment::Text(_) => None,
        })
    }

    pub fn parse(s: &str) -> Result<Self, ValueError> {
        let mut segments = Vec::new();
        let mut rest = s;
        while let Some(start) = rest.find("{{") {
            segments.push(Segment::Text(rest[..start].to_owned()));
            let after = &rest[start + 2..];
            let end = after.find("}}").ok_or(ValueError::UnterminatedReference)?;
            segments.push(Segment::Ref(OutputRef::parse_inner(&after[..end])?));
            rest = &after[end + 2..];
        }
        segments.push(Segment::Text(rest.to_owned()));
        Ok(Self::new(segments))
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for seg in &self.segments {
            match seg {
                Segment::Text(t) => s.push_str(t),
                Segment::Ref(r) => s.push_str(&r.to_string()),
            }
        }
        s
    }
}

/// The value of a step input.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type", content = "value")]
pub enum ValueExpr {
    Literal(String),
    Ref(OutputRef),
    Condition(ConditionExpr),
    /// Ordered text and reference segments, e.g. an email body.
    Composite(Vec<Segment>),
}

impl ValueExpr {
    pub fn literal(s: impl Into<String>) -> Self {
        ValueExpr::Literal(s.into())
    }

    /// Builds the canonical variant for a template: a single text segment is a
    /// literal, a single reference is a ref.
    pub fn from_template(t: Template) -> Self {
        match t.segments.as_slice() {
            [] => ValueExpr::Literal(String::new()),
            [Segment::Text(s)] => ValueExpr::Literal(s.clone()),
            [Segment::Ref(r)] => ValueExpr::Ref(r.clone()),
            _ => ValueExpr::Composite(t.segments),
        }
    }

    /// The non-condition forms as a template.
    pub fn as_template(&self) -> Option<Template> {
        match self {
            ValueExpr::Literal(s) => Some(Template::text(s.clone())),
            ValueExpr::Ref(r) => Some(Template::reference(r.clone())),
            ValueExpr::Composite(segs) => Some(Template::new(segs.iter().cloned())),
            ValueExpr::Condition(_) => None,
        }
    }

    pub fn as_condition(&self) -> Option<&ConditionExpr> {
        match self {
            ValueExpr::Condition(c) => Some(c),
            _ => None,
        }
    }

    pub fn as_literal(&self) -> Option<&str> {
        match self {
            ValueExpr::Literal(s) => Some(s),
            _ => None,
        }
    }

    /// Every output reference in the value, including condition operands.
    pub fn refs(&self) -> Vec<&OutputRef> {
        match self {
            ValueExpr::Literal(_) => Vec::new(),
            ValueExpr::Ref(r) => vec![r],
            ValueExpr::Composite(segs) => segs
                .iter()
                .filter_map(|s| match s {
                    Segment::Ref(r) => Some(r),
                    Segment::Text(_) => None,
                })
                .collect(),
            ValueExpr::Condition(c) => c
                .conjuncts
                .iter()
                .flat_map(|cj| cj.operand.iter().flat_map(|o| o.refs()))
                .collect(),
        }
    }

    pub fn refs_mut(&mut self) -> Vec<&mut OutputRef> {
        fn seg_refs(segs: &mut [Segment]) -> impl Iterator<Item = &mut OutputRef> {
            segs.iter_mut().filter_map(|s| match s {
                Segment::Ref(r) => Some(r),
                Segment::Text(_) => None,
            })
        }
        match self {
            ValueExpr::Literal(_) => Vec::new(),
            ValueExpr::Ref(r) => vec![r],
            ValueExpr::Composite(segs) => seg_refs(segs).collect(),
            ValueExpr::Condition(c) => c
                .conjuncts
                .iter_mut()
                .flat_map(|cj| cj.operand.iter_mut().flat_map(|o| seg_refs(&mut o.segments)))
                .collect(),
        }
    }

    /// Parses the DSL encoding of a value.
    pub fn parse(s: &str) -> Result<Self, ValueError> {
        if let Some(rest) = s.strip_prefix('\'') {
            return Ok(Self::from_template(Template::parse(rest)?));
        }
        if let Some(c) = ConditionExpr::parse_if_condition(s)? {
            return Ok(ValueExpr::Condition(c));
        }
        Ok(Self::from_template(Template::parse(s)?))
    }

    /// The DSL encoding; `ValueExpr::parse(&v.encode()) == v` for every value
    /// that respects the reserved delimiters.
    pub fn encode(&self) -> String {
        match self {
            ValueExpr::Condition(c) => c.encode(),
            other => {
                let text = other.as_template().map(|t| t.render()).unwrap_or_default();
                let condition_like = matches!(ConditionExpr::parse_if_condition(&text), Ok(Some(_)));
                if text.starts_with('\'') || condition_like {
                    format!("'{text}")
                } else {
                    text
                }
            }
        }
    }
}

impl fmt::Display for ValueExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.encode())
    }
}
