//! Encoded record conditions such as `priority=1^assigned_toISEMPTY`.
//!
//! Conjuncts are joined by `^`. Each conjunct is a lowercase column token
//! followed directly by an operator and, for binary operators, an operand.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::value::{Template, ValueError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Operator {
    Eq,
    Neq,
    Gt,
    Lt,
    IsEmpty,
    IsNotEmpty,
}

impl Operator {
    pub const ALL: [Operator; 6] = [
        Operator::Eq,
        Operator::Neq,
        Operator::Gt,
        Operator::Lt,
        Operator::IsEmpty,
        Operator::IsNotEmpty,
    ];

    pub fn token(self) -> &'static str {
        match self {
            Operator::Eq => "=",
            Operator::Neq => "!=",
            Operator::Gt => ">",
            Operator::Lt => "<",
            Operator::IsEmpty => "ISEMPTY",
            Operator::IsNotEmpty => "ISNOTEMPTY",
        }
    }

    pub fn is_unary(self) -> bool {
        matches!(self, Operator::IsEmpty | Operator::IsNotEmpty)
    }
}

impl FromStr for Operator {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Operator::ALL
            .into_iter()
            .find(|op| op.token() == s || format!("{op:?}").eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown operator `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Conjunct {
    pub column: String,
    pub op: Operator,
    /// Present exactly when `op` is binary.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub operand: Option<Template>,
}

impl Conjunct {
    pub fn unary(column: impl Into<String>, op: Operator) -> Self {
        debug_assert!(op.is_unary());
        Self {
            column: column.into(),
            op,
            operand: None,
        }
    }

    pub fn binary(column: impl Into<String>, op: Operator, operand: Template) -> Self {
        debug_assert!(!op.is_unary());
        Self {
            column: column.into(),
            op,
            operand: Some(operand),
        }
    }

    pub fn eq(column: impl Into<String>, value: impl Into<String>) -> Self {
        Self::binary(column, Operator::Eq, Template::text(value))
    }

    /// The literal operand, if the operand has no references.
    pub fn literal_operand(&self) -> Option<String> {
        let t = self.operand.as_ref()?;
        if t.refs().next().is_some() {
            return None;
        }
        Some(t.render())
    }

    pub fn encode(&self) -> String {
        let mut s = self.column.clone();
        s.push_str(self.op.token());
        if let Some(o) = &self.operand {
            s.push_str(&o.render());
        }
        s
    }
}

impl fmt::Display for Conjunct {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.encode())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConditionExpr {
    pub conjuncts: Vec<Conjunct>,
}

fn is_column_byte(b: u8) -> bool {
    b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_'
}

/// Splits one conjunct into its parts, or `None` when the text does not follow
/// the conjunct grammar.
fn split_conjunct(s: &str) -> Option<(&str, Operator, Option<&str>)> {
    let bytes = s.as_bytes();
    if bytes.is_empty() || !(bytes[0].is_ascii_lowercase() || bytes[0] == b'_') {
        return None;
    }
    let end = bytes.iter().position(|&b| !is_column_byte(b)).unwrap_or(bytes.len());
    let (column, rest) = s.split_at(end);
    let (op, operand) = match rest {
        "ISEMPTY" => (Operator::IsEmpty, None),
        "ISNOTEMPTY" => (Operator::IsNotEmpty, None),
        _ => {
            let (op, operand) = if let Some(o) = rest.strip_prefix("!=") {
                (Operator::Neq, o)
            } else if let Some(o) = rest.strip_prefix('=') {
                (Operator::Eq, o)
            } else if let Some(o) = rest.strip_prefix('>') {
                (Operator::Gt, o)
            } else {
                let o = rest.strip_prefix('<')?;
                (Operator::Lt, o)
            };
            if operand.is_empty() {
                return None;
            }
            (op, Some(operand))
        }
    };
    Some((column, op, operand))
}

impl ConditionExpr {
    pub fn new(conjuncts: Vec<Conjunct>) -> Self {
        Self { conjuncts }
    }

    pub fn single(c: Conjunct) -> Self {
        Self { conjuncts: vec![c] }
    }

    pub fn encode(&self) -> String {
        self.conjuncts
            .iter()
            .map(Conjunct::encode)
            .collect::<Vec<_>>()
            .join("^")
    }

    /// `Ok(None)` when `s` is not in the condition grammar at all; an error
    /// when it is but an operand reference is malformed.
    pub fn parse_if_condition(s: &str) -> Result<Option<Self>, ValueError> {
        if s.is_empty() {
            return Ok(None);
        }
        let mut parts = Vec::new();
        for raw in s.split('^') {
            match split_conjunct(raw) {
                Some(p) => parts.push(p),
                None => return Ok(None),
            }
        }
        let mut conjuncts = Vec::with_capacity(parts.len());
        for (column, op, operand) in parts {
            let operand = operand.map(Template::parse).transpose()?;
            conjuncts.push(Conjunct {
                column: column.to_owned(),
                op,
                operand,
            });
        }
        Ok(Some(Self { conjuncts }))
    }

    /// Strict parse: errors unless `s` is a condition.
    pub fn parse(s: &str) -> Result<Self, ValueError> {
        Self::parse_if_condition(s)?.ok_or_else(|| ValueError::BadCondition(s.to_owned()))
    }
}

impl fmt::Display for ConditionExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.encode())
    }
}
