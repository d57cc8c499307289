//! Reader for the block-style YAML subset used by workflow documents.
//!
//! Supported: block mappings, block sequences (including `- key: value`
//! items), plain, single- and double-quoted single-line scalars, `[]`/`{}`
//! empty collections and `#` comments. Flow collections, anchors, tags and
//! block scalars are rejected with a positioned error.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Pos {
    pub line: usize,
    pub column: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Node {
    Scalar { text: String, pos: Pos },
    Map { entries: Vec<Entry>, pos: Pos },
    Seq { items: Vec<Node>, pos: Pos },
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Entry {
    pub key: String,
    pub key_pos: Pos,
    pub value: Node,
}

impl Node {
    pub fn pos(&self) -> Pos {
        match self {
            Node::Scalar { pos, .. } | Node::Map { pos, .. } | Node::Seq { pos, .. } => *pos,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct ReadError {
    pub pos: Pos,
    pub message: String,
}

fn err<T>(line: usize, column: usize, message: impl Into<String>) -> Result<T, ReadError> {
    Err(ReadError {
        pos: Pos { line, column },
        message: message.into(),
    })
}

#[derive(Debug, Clone)]
struct Line {
    /// 1-based source line.
    number: usize,
    indent: usize,
    /// Content after the indentation, comment lines already removed.
    text: String,
}

pub(crate) fn read(source: &str) -> Result<Node, ReadError> {
    let mut lines = Vec::new();
    for (i, raw) in source.lines().enumerate() {
        let number = i + 1;
        let raw = raw.strip_suffix('\r').unwrap_or(raw);
        let raw = if number == 1 {
            raw.trim_start_matches('\u{feff}')
        } else {
            raw
        };
        let indent = raw.bytes().take_while(|&b| b == b' ').count();
        let rest = &raw[indent..];
        if rest.starts_with('\t') {
            return err(number, indent + 1, "tabs are not allowed in indentation");
        }
        let trimmed = rest.trim_end();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        if trimmed == "---" && lines.is_empty() {
            continue;
        }
        lines.push(Line {
            number,
            indent,
            text: trimmed.to_owned(),
        });
    }
    if lines.is_empty() {
        return err(1, 1, "empty document");
    }
    if lines[0].indent != 0 {
        return err(lines[0].number, 1, "document must start at column 1");
    }
    let mut p = Parser { lines, idx: 0 };
    let node = p.block(0)?;
    if let Some(l) = p.lines.get(p.idx) {
        return err(l.number, l.indent + 1, "unexpected content after document");
    }
    Ok(node)
}

struct Parser {
    lines: Vec<Line>,
    idx: usize,
}

fn is_seq_item(text: &str) -> bool {
    text == "-" || text.starts_with("- ")
}

/// Splits `key: rest` when `text` starts with a plain mapping key.
fn split_key(text: &str) -> Option<(&str, &str)> {
    let colon = text.find(':')?;
    let key = &text[..colon];
    if key.is_empty() || !key.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'-') {
        return None;
    }
    let rest = &text[colon + 1..];
    if !rest.is_empty() && !rest.starts_with(' ') {
        return None;
    }
    Some((key, rest.trim_start()))
}

impl Parser {
    fn peek(&self) -> Option<&Line> {
        self.lines.get(self.idx)
    }

    fn block(&mut self, indent: usize) -> Result<Node, ReadError> {
        let line = self.peek().expect("block called at end of input").clone();
        if line.indent != indent {
            return err(line.number, line.indent + 1, "bad indentation");
        }
        if is_seq_item(&line.text) {
            self.seq(indent)
        } else {
            self.map(indent)
        }
    }

    fn map(&mut self, indent: usize) -> Result<Node, ReadError> {
        let first = self.peek().expect("map called at end of input");
        let pos = Pos {
            line: first.number,
            column: indent + 1,
        };
        let mut entries: Vec<Entry> = Vec::new();
        while let Some(line) = self.peek().cloned() {
            if line.indent < indent {
                break;
            }
            if line.indent > indent {
                return err(line.number, line.indent + 1, "unexpected indentation");
            }
            if is_seq_item(&line.text) {
                break;
            }
            let Some((key, rest)) = split_key(&line.text) else {
                return err(line.number, indent + 1, "expected `key: value`");
            };
            let key_pos = Pos {
                line: line.number,
                column: indent + 1,
            };
            if entries.iter().any(|e| e.key == key) {
                return err(line.number, indent + 1, format!("duplicate key `{key}`"));
            }
            let value_col = indent + 1 + line.text.len() - rest.len();
            self.idx += 1;
            let value = if rest.is_empty() {
                match self.peek() {
                    Some(next) if next.indent > indent => {
                        let ni = next.indent;
                        self.block(ni)?
                    }
                    Some(next) if next.indent == indent && is_seq_item(&next.text) => self.seq(indent)?,
                    _ => return err(line.number, value_col, format!("missing value for `{key}`")),
                }
            } else {
                scalar_or_empty(rest, line.number, value_col)?
            };
            entries.push(Entry {
                key: key.to_owned(),
                key_pos,
                value,
            });
        }
        Ok(Node::Map { entries, pos })
    }

    fn seq(&mut self, indent: usize) -> Result<Node, ReadError> {
        let first = self.peek().expect("seq called at end of input");
        let pos = Pos {
            line: first.number,
            column: indent + 1,
        };
        let mut items = Vec::new();
        while let Some(line) = self.peek().cloned() {
            if line.indent != indent || !is_seq_item(&line.text) {
                if line.indent > indent {
                    return err(line.number, line.indent + 1, "unexpected indentation");
                }
                break;
            }
            if line.text == "-" {
                self.idx += 1;
                match self.peek() {
                    Some(next) if next.indent > indent => {
                        let ni = next.indent;
                        items.push(self.block(ni)?);
                    }
                    _ => return err(line.number, indent + 1, "empty sequence item"),
                }
                continue;
            }
            let content = line.text[2..].trim_start();
            let inner_indent = indent + line.text.len() - content.len();
            if split_key(content).is_some() || is_seq_item(content) {
                // Re-read the item as a block starting at the content column.
                self.lines[self.idx] = Line {
                    number: line.number,
                    indent: inner_indent,
                    text: content.to_owned(),
                };
                items.push(self.block(inner_indent)?);
            } else {
                self.idx += 1;
                items.push(scalar_or_empty(content, line.number, inner_indent + 1)?);
            }
        }
        Ok(Node::Seq { items, pos })
    }
}

fn scalar_or_empty(text: &str, line: usize, column: usize) -> Result<Node, ReadError> {
    let pos = Pos { line, column };
    let bare = strip_comment(text);
    match bare {
        "[]" => return Ok(Node::Seq { items: Vec::new(), pos }),
        "{}" => {
            return Ok(Node::Map {
                entries: Vec::new(),
                pos,
            })
        }
        _ => {}
    }
    Ok(Node::Scalar {
        text: scalar(text, line, column)?,
        pos,
    })
}

fn strip_comment(text: &str) -> &str {
    match text.find(" #") {
        Some(i) if !text.starts_with('"') && !text.starts_with('\'') => text[..i].trim_end(),
        _ => text,
    }
}

fn scalar(text: &str, line: usize, column: usize) -> Result<String, ReadError> {
    if let Some(body) = text.strip_prefix('"') {
        return double_quoted(body, line, column);
    }
    if let Some(body) = text.strip_prefix('\'') {
        return single_quoted(body, line, column);
    }
    let plain = strip_comment(text);
    let first = plain.chars().next().unwrap_or(' ');
    if "[]{}&*!|>%@`,".contains(first) {
        return err(
            line,
            column,
            format!("unsupported YAML construct starting with `{first}`"),
        );
    }
    if plain.contains(": ") || plain.ends_with(':') {
        return err(line, column, "plain scalar may not contain `: `; quote the value");
    }
    Ok(plain.to_owned())
}

fn trailing_ok(rest: &str, line: usize, column: usize) -> Result<(), ReadError> {
    let rest = rest.trim_start();
    if rest.is_empty() || rest.starts_with('#') {
        Ok(())
    } else {
        err(line, column, "unexpected characters after quoted scalar")
    }
}

fn single_quoted(body: &str, line: usize, column: usize) -> Result<String, ReadError> {
    let mut out = String::new();
    let mut chars = body.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if c == '\'' {
            if let Some((_, '\'')) = chars.peek() {
                chars.next();
                out.push('\'');
                continue;
            }
            trailing_ok(&body[i + 1..], line, column)?;
            return Ok(out);
        }
        out.push(c);
    }
    err(line, column, "unterminated single-quoted scalar")
}

fn double_quoted(body: &str, line: usize, column: usize) -> Result<String, ReadError> {
    let mut out = String::new();
    let mut chars = body.char_indices();
    while let Some((i, c)) = chars.next() {
        match c {
            '"' => {
                trailing_ok(&body[i + 1..], line, column)?;
                return Ok(out);
            }
            '\\' => {
                let Some((_, e)) = chars.next() else { break };
                let hex_len = match e {
                    'x' => 2,
                    'u' => 4,
                    'U' => 8,
                    _ => 0,
                };
                if hex_len > 0 {
                    let hex: String = chars.by_ref().take(hex_len).map(|(_, c)| c).collect();
                    let ch = u32::from_str_radix(&hex, 16)
                        .ok()
                        .filter(|_| hex.len() == hex_len)
                        .and_then(char::from_u32);
                    match ch {
                        Some(ch) => out.push(ch),
                        None => return err(line, column, format!("bad escape `\\{e}{hex}`")),
                    }
                    continue;
                }
                out.push(match e {
                    '\\' => '\\',
                    '"' => '"',
                    '/' => '/',
                    ' ' => ' ',
                    '0' => '\0',
                    'a' => '\u{7}',
                    'b' => '\u{8}',
                    't' | '\t' => '\t',
                    'n' => '\n',
                    'v' => '\u{b}',
                    'f' => '\u{c}',
                    'r' => '\r',
                    'e' => '\u{1b}',
                    'N' => '\u{85}',
                    '_' => '\u{a0}',
                    'L' => '\u{2028}',
                    'P' => '\u{2029}',
                    other => return err(line, column, format!("unknown escape `\\{other}`")),
                });
            }
            c => out.push(c),
        }
    }
    err(line, column, "unterminated double-quoted scalar")
}

/// Double-quoted rendering that [`read`] maps back to `s` exactly.
pub(crate) fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '"' => out.push_str("\\\""),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            '\u{20}'..='\u{7e}' => out.push(c),
            '\u{a0}'..='\u{d7ff}' | '\u{e000}'..='\u{fffd}' | '\u{10000}'..='\u{10ffff}'
                if !matches!(c, '\u{2028}' | '\u{2029}' | '\u{feff}') =>
            {
                out.push(c)
            }
            c if (c as u32) <= 0xffff => out.push_str(&format!("\\u{:04X}", c as u32)),
            c => out.push_str(&format!("\\U{:08X}", c as u32)),
        }
    }
    out.push('"');
    out
}
