//! Clause segmentation of requirements.

use crate::model::EventKind;

const TRIGGER_CUES: &[&str] = &[
    "when", "whenever", "if", "once", "after", "every", "each", "daily", "weekly", "hourly", "monthly",
];
const SCHEDULE_CUES: &[&str] = &["every", "each", "daily", "weekly", "hourly", "monthly"];
const CREATED_VERBS: &[&str] = &[
    "created",
    "opened",
    "submitted",
    "raised",
    "logged",
    "reported",
    "filed",
    "inserted",
];
const UPDATED_VERBS: &[&str] = &["updated", "changed", "modified", "edited"];
/// Verbs that imply an update into a particular value.
const STATE_VERBS: &[&str] = &[
    "resolved",
    "closed",
    "canceled",
    "cancelled",
    "approved",
    "rejected",
    "reopened",
];
const WEEKDAYS: &[&str] = &[
    "monday",
    "tuesday",
    "wednesday",
    "thursday",
    "friday",
    "saturday",
    "sunday",
];
const CLAUSE_SEPARATORS: &[&str] = &[
    ", and then ",
    ", then ",
    " and then ",
    ", and ",
    " and ",
    ", ",
    " then ",
];
const DETERMINERS: &[&str] = &["a", "an", "the", "any", "all", "each", "every", "new", "some"];
const RELATIVE_MARKERS: &[&str] = &[" that ", " with ", " where ", " whose ", " who ", " which "];

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct TriggerClause {
    /// Clause text without its cue word.
    pub text: String,
    pub event: EventKind,
    pub schedule: Option<String>,
    /// Verb such as `resolved` that implies a target value.
    pub state_verb: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Segmented {
    pub trigger: TriggerClause,
    /// Step clauses grouped by sentence.
    pub sentences: Vec<Vec<String>>,
}

fn lower_words(s: &str) -> Vec<String> {
    s.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

pub(crate) fn sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let chars: Vec<char> = text.chars().collect();
    for (i, &c) in chars.iter().enumerate() {
        let boundary = match c {
            '\n' | ';' => true,
            '.' | '!' | '?' => chars.get(i + 1).is_none_or(|n| n.is_whitespace()),
            _ => false,
        };
        if boundary {
            if !cur.trim().is_empty() {
                out.push(cur.trim().to_owned());
            }
            cur.clear();
        } else {
            cur.push(c);
        }
    }
    if !cur.trim().is_empty() {
        out.push(cur.trim().to_owned());
    }
    out
}

/// Trims, drops trailing punctuation and lowercases the first letter unless
/// the first word is an acronym.
pub(crate) fn tidy(clause: &str) -> String {
    let t = clause.trim().trim_end_matches(['.', ',', ';', '!', '?']).trim();
    let mut chars = t.chars();
    match (chars.next(), chars.next()) {
        (Some(a), Some(b)) if a.is_uppercase() && !b.is_uppercase() && !b.is_ascii_digit() => {
            let mut s: String = a.to_lowercase().collect();
            s.push_str(&t[a.len_utf8()..]);
            s
        }
        _ => t.to_owned(),
    }
}

pub(crate) fn clauses(sentence: &str) -> Vec<String> {
    let mut text = sentence.to_owned();
    for sep in CLAUSE_SEPARATORS {
        text = text.replace(sep, "\u{1}");
    }
    text.split('\u{1}')
        .map(|c| {
            let c = c.trim();
            let c = c.strip_prefix("then ").or_else(|| c.strip_prefix("and ")).unwrap_or(c);
            tidy(c)
        })
        .filter(|c| !c.is_empty())
        .collect()
}

fn schedule_of(words: &[String]) -> String {
    let has = |needle: &str| words.iter().any(|w| w.contains(needle));
    if has("hour") {
        "hourly".into()
    } else if has("week") || words.iter().any(|w| WEEKDAYS.contains(&w.as_str())) {
        "weekly".into()
    } else if has("month") {
        "monthly".into()
    } else {
        "daily".into()
    }
}

fn trigger_clause(clause: &str) -> Option<TriggerClause> {
    let words = lower_words(clause);
    let cue = words.first()?;
    if !TRIGGER_CUES.contains(&cue.as_str()) {
        return None;
    }
    let rest = clause.trim()[cue.len()..].trim().to_owned();
    if SCHEDULE_CUES.contains(&cue.as_str()) {
        return Some(TriggerClause {
            text: rest,
            event: EventKind::Scheduled,
            schedule: Some(schedule_of(&words)),
            state_verb: None,
        });
    }
    let has = |set: &[&str]| words.iter().find(|w| set.contains(&w.as_str())).cloned();
    let (event, state_verb) = if has(CREATED_VERBS).is_some() {
        (EventKind::Created, None)
    } else if has(UPDATED_VERBS).is_some() {
        (EventKind::Updated, None)
    } else if let Some(v) = has(STATE_VERBS) {
        (EventKind::Updated, Some(v))
    } else {
        (EventKind::Created, None)
    };
    Some(TriggerClause {
        text: rest,
        event,
        schedule: None,
        state_verb,
    })
}

/// Splits a requirement into its trigger clause and step clauses. `None`
/// when the first sentence does not open with a trigger cue.
pub(crate) fn segment(requirement: &str) -> Option<Segmented> {
    let mut sents = sentences(requirement).into_iter();
    let first = sents.next()?;
    let (head, tail) = match first.split_once(',') {
        Some((h, t)) => (h.to_owned(), t.to_owned()),
        None => (first.clone(), String::new()),
    };
    let trigger = trigger_clause(&head)?;
    let mut sentences = Vec::new();
    let first_clauses = clauses(&tail);
    if !first_clauses.is_empty() {
        sentences.push(first_clauses);
    }
    for s in sents {
        let c = clauses(&s);
        if !c.is_empty() {
            sentences.push(c);
        }
    }
    Some(Segmented { trigger, sentences })
}

/// Whether a clause opens a conditional block.
pub(crate) fn is_conditional(clause: &str) -> bool {
    lower_words(clause).first().is_some_and(|w| w == "if")
}

/// Text after the first relative marker, or after a leading `if`.
pub(crate) fn relative_phrase(text: &str) -> Option<String> {
    let t = text.trim();
    if is_conditional(t) {
        return Some(t[2..].trim().to_owned());
    }
    let padded = format!(" {t} ");
    let lower = padded.to_lowercase();
    RELATIVE_MARKERS
        .iter()
        .filter_map(|m| lower.find(m).map(|i| (i, m.len())))
        .min()
        .map(|(i, len)| padded[i + len..].trim().to_owned())
        .filter(|p| !p.is_empty())
}

/// The record noun of a trigger clause: text before any relative phrase and
/// event verb, without determiners and priority shorthands.
pub(crate) fn trigger_noun(text: &str) -> String {
    let padded = format!(" {} ", text.trim());
    let lower = padded.to_lowercase();
    let cut = RELATIVE_MARKERS
        .iter()
        .filter_map(|m| lower.find(m))
        .min()
        .unwrap_or(padded.len());
    let head = strip_event_tail(&padded[..cut]);
    head.split_whitespace()
        .filter(|w| !DETERMINERS.contains(&w.to_lowercase().as_str()) && priority_shorthand(w).is_none())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Drops a trailing `is created` style verb phrase from a trigger phrase.
pub(crate) fn strip_event_tail(phrase: &str) -> String {
    let padded = format!(" {phrase} ");
    for aux in [" is ", " are ", " gets ", " get ", " has been ", " have been "] {
        if let Some(i) = padded.find(aux) {
            return padded[..i].trim().to_owned();
        }
    }
    phrase.trim().to_owned()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum OperatorCue {
    Empty,
    NotEmpty,
    Equals,
}

pub(crate) fn operator_cue(phrase: &str) -> OperatorCue {
    let words = lower_words(phrase);
    if words
        .iter()
        .any(|w| matches!(w.as_str(), "no" | "not" | "without" | "never" | "nobody" | "none"))
    {
        return OperatorCue::Empty;
    }
    let joined = format!(" {} ", words.join(" "));
    if [" has a ", " have a ", " has an ", " have an ", " having a "]
        .iter()
        .any(|p| joined.contains(p))
    {
        return OperatorCue::NotEmpty;
    }
    OperatorCue::Equals
}

/// A `P1`..`P5` priority shorthand.
pub(crate) fn priority_shorthand(text: &str) -> Option<u8> {
    text.split(|c: char| !c.is_alphanumeric()).find_map(|w| {
        let b = w.as_bytes();
        (b.len() == 2 && (b[0] == b'P' || b[0] == b'p') && (b'1'..=b'5').contains(&b[1])).then(|| b[1] - b'0')
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manager_email_requirement() {
        let s = segment(
            "When a P1 incident is created, look up the user assigned to the incident. \
             If the user has a manager, send an email to the manager reminding them of the incident.",
        )
        .unwrap();
        assert_eq!(s.trigger.event, EventKind::Created);
        assert_eq!(s.trigger.text, "a P1 incident is created");
        assert_eq!(
            s.sentences,
            vec![
                vec!["look up the user assigned to the incident".to_owned()],
                vec![
                    "if the user has a manager".to_owned(),
                    "send an email to the manager reminding them of the incident".to_owned()
                ],
            ]
        );
    }

    #[test]
    fn scheduled_requirement() {
        let s = segment("Every day, look up incident tasks that do not have assignees and close them").unwrap();
        assert_eq!(s.trigger.event, EventKind::Scheduled);
        assert_eq!(s.trigger.schedule.as_deref(), Some("daily"));
        assert_eq!(
            s.sentences,
            vec![vec![
                "look up incident tasks that do not have assignees".to_owned(),
                "close them".to_owned()
            ]]
        );
        assert_eq!(
            segment("Every Monday, log it").unwrap().trigger.schedule.as_deref(),
            Some("weekly")
        );
    }

    #[test]
    fn no_cue_no_trigger() {
        assert!(segment("Look up the user and send an email").is_none());
        assert!(segment("").is_none());
    }

    #[test]
    fn state_verbs() {
        let t = segment("When an incident is resolved, log it").unwrap().trigger;
        assert_eq!(t.event, EventKind::Updated);
        assert_eq!(t.state_verb.as_deref(), Some("resolved"));
    }

    #[test]
    fn phrases_and_cues() {
        assert_eq!(
            relative_phrase("look up incident tasks that do not have assignees").unwrap(),
            "do not have assignees"
        );
        assert_eq!(
            relative_phrase("if the user has a manager").unwrap(),
            "the user has a manager"
        );
        assert_eq!(relative_phrase("close them"), None);
        assert_eq!(operator_cue("do not have assignees"), OperatorCue::Empty);
        assert_eq!(operator_cue("the user has a manager"), OperatorCue::NotEmpty);
        assert_eq!(operator_cue("priority 1"), OperatorCue::Equals);
        assert_eq!(strip_event_tail("category network is created"), "category network");
        assert_eq!(priority_shorthand("a P1 incident"), Some(1));
        assert_eq!(trigger_noun("a P1 incident is created"), "incident");
        assert_eq!(trigger_noun("a change request that is approved"), "change request");
        assert_eq!(priority_shorthand("a P9 incident"), None);
    }

    #[test]
    fn tidy_keeps_acronyms() {
        assert_eq!(tidy("Send it."), "send it");
        assert_eq!(tidy("P1 incidents"), "P1 incidents");
        assert_eq!(tidy("SLA breached"), "SLA breached");
    }
}
