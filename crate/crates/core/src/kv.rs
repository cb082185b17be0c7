//! Line-oriented `key = value` documents used for encoding configs and
//! synthetic scenarios. `#` starts a comment line.

use indexmap::IndexMap;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum KvError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: duplicate key {key:?}")]
    Duplicate { line: usize, key: String },
}

/// Parses a key-value document, preserving key order.
pub fn parse(text: &str) -> Result<IndexMap<String, String>, KvError> {
    let mut out = IndexMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let (k, v) = trimmed.split_once('=').ok_or(KvError::Syntax { line })?;
        let key = k.trim();
        if key.is_empty() {
            return Err(KvError::Syntax { line });
        }
        let value = unquote(v.trim());
        if out.insert(key.to_string(), value.to_string()).is_some() {
            return Err(KvError::Duplicate { line, key: key.to_string() });
        }
    }
    Ok(out)
}

fn unquote(v: &str) -> &str {
    if v.len() >= 2 && v.starts_with('"') && v.ends_with('"') {
        &v[1..v.len() - 1]
    } else {
        v
    }
}

/// Writes entries one per line in the given order.
pub fn write<'a>(entries: impl IntoIterator<Item = (&'a str, String)>) -> String {
    let mut out = String::new();
    for (k, v) in entries {
        out.push_str(k);
        out.push_str(" = ");
        out.push_str(&v);
        out.push('\n');
    }
    out
}
