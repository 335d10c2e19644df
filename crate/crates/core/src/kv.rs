//! Flat `key = value` text files with `#` comments, used for augmentation
//! configs and sweep search spaces.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
#[error("line {line}: {message}")]
pub struct KvError {
    pub line: usize,
    pub message: String,
}

/// One `key = value` entry with its 1-based line number.
#[derive(Debug, Clone, PartialEq)]
pub struct KvEntry {
    pub line: usize,
    pub key: String,
    pub value: String,
}

pub fn parse(text: &str) -> Result<Vec<KvEntry>, KvError> {
    let mut entries: Vec<KvEntry> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split_once('#').map_or(raw, |(before, _)| before).trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| KvError {
            line,
            message: format!("expected `key = value`, got {content:?}"),
        })?;
        let key = key.trim();
        if key.is_empty() {
            return Err(KvError { line, message: "empty key".into() });
        }
        if let Some(prev) = entries.iter().find(|e| e.key == key) {
            return Err(KvError {
                line,
                message: format!("duplicate key `{key}` (first set on line {})", prev.line),
            });
        }
        entries.push(KvEntry {
            line,
            key: key.to_string(),
            value: value.trim().trim_matches('"').to_string(),
        });
    }
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_entries_and_comments() {
        let e = parse("# header\nrotate.probability = 0.5  # inline\n\nseed_policy = \"per-sample-derived\"\n").unwrap();
        assert_eq!(e.len(), 2);
        assert_eq!(e[0].key, "rotate.probability");
        assert_eq!(e[0].value, "0.5");
        assert_eq!(e[0].line, 2);
        assert_eq!(e[1].value, "per-sample-derived");
    }

    #[test]
    fn rejects_garbage_and_duplicates() {
        assert_eq!(parse("a = 1\nnonsense").unwrap_err().line, 2);
        assert_eq!(parse("a = 1\na = 2").unwrap_err().line, 2);
    }
}
