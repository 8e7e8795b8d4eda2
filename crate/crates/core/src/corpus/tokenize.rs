use crate::error::{Error, Result};

/// Lowercases and splits on whitespace, detaching punctuation into
/// single-character tokens. An apostrophe inside a word starts a suffix
/// token (`i've` → `i`, `'ve`).
pub fn tokenize(text: &str) -> Result<Vec<String>> {
    let lower = text.to_lowercase();
    let chars: Vec<char> = lower.chars().collect();
    let mut tokens = Vec::new();
    let mut cur = String::new();
    let flush = |cur: &mut String, tokens: &mut Vec<String>| {
        if !cur.is_empty() {
            tokens.push(std::mem::take(cur));
        }
    };
    for (i, &c) in chars.iter().enumerate() {
        if c.is_whitespace() {
            flush(&mut cur, &mut tokens);
        } else if c == '\'' && !cur.is_empty() && chars.get(i + 1).is_some_and(|n| n.is_alphanumeric()) {
            flush(&mut cur, &mut tokens);
            cur.push(c);
        } else if c.is_alphanumeric() {
            cur.push(c);
        } else {
            flush(&mut cur, &mut tokens);
            tokens.push(c.to_string());
        }
    }
    flush(&mut cur, &mut tokens);
    if tokens.is_empty() {
        return Err(Error::Degenerate("text has no tokens".into()));
    }
    Ok(tokens)
}

pub(crate) fn is_terminal(c: char) -> bool {
    matches!(c, '.' | '!' | '?')
}

/// Prefix of `text` through the first run of terminal punctuation, or the
/// whole (trimmed) text when there is none.
pub fn first_sentence(text: &str) -> String {
    let trimmed = text.trim();
    let mut end = None;
    let mut iter = trimmed.char_indices().peekable();
    while let Some((i, c)) = iter.next() {
        if is_terminal(c) {
            let mut stop = i + c.len_utf8();
            while let Some(&(j, n)) = iter.peek() {
                if !is_terminal(n) {
                    break;
                }
                stop = j + n.len_utf8();
                iter.next();
            }
            end = Some(stop);
            break;
        }
    }
    match end {
        Some(e) => trimmed[..e].to_string(),
        None => trimmed.to_string(),
    }
}

/// Maximum sentence length in tokens, punctuation included.
pub const MAX_WORDS: usize = 20;

pub fn length_filter(tokens: &[String]) -> bool {
    tokens.len() <= MAX_WORDS
}
