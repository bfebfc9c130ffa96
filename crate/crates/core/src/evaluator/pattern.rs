//! The `text_matches` pattern dialect: literals, classes, anchors,
//! alternation, grouping and repetition. Backreferences, lookaround,
//! inline flags, named groups and Unicode property classes are rejected
//! so that checklists stay portable across regex engines.

use regex::{Regex, RegexBuilder};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PatternError {
    #[error("unsupported construct `{construct}` at offset {offset}")]
    Unsupported { construct: String, offset: usize },
    #[error("{0}")]
    Invalid(String),
}

const SIZE_LIMIT: usize = 1 << 20;

pub fn compile_pattern(pattern: &str) -> Result<Regex, PatternError> {
    check_dialect(pattern)?;
    RegexBuilder::new(pattern)
        .size_limit(SIZE_LIMIT)
        .build()
        .map_err(|e| PatternError::Invalid(e.to_string().lines().last().unwrap_or("invalid pattern").trim().to_string()))
}

fn check_dialect(pattern: &str) -> Result<(), PatternError> {
    let chars: Vec<(usize, char)> = pattern.char_indices().collect();
    let unsupported = |offset: usize, construct: &str| PatternError::Unsupported {
        construct: construct.to_string(),
        offset,
    };
    let mut in_class = false;
    let mut i = 0;
    while i < chars.len() {
        let (offset, c) = chars[i];
        match c {
            '\\' => {
                if let Some(&(_, next)) = chars.get(i + 1) {
                    if matches!(next, 'p' | 'P' | 'A' | 'z' | 'k' | '1'..='9') {
                        return Err(unsupported(offset, &format!("\\{next}")));
                    }
                }
                i += 2;
                continue;
            }
            '[' if !in_class => {
                in_class = true;
                // A `]` right after `[` or `[^` is a literal.
                if chars.get(i + 1).map(|c| c.1) == Some('^') {
                    i += 1;
                }
                if chars.get(i + 1).map(|c| c.1) == Some(']') {
                    i += 1;
                }
            }
            ']' if in_class => in_class = false,
            '(' if !in_class
                && chars.get(i + 1).map(|c| c.1) == Some('?')
                && chars.get(i + 2).map(|c| c.1) != Some(':') =>
            {
                return Err(unsupported(offset, "(?"));
            }
            _ => {}
        }
        i += 1;
    }
    Ok(())
}
