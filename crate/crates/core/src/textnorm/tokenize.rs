use super::LangRules;

/// Character-level punctuation normalization followed by whitespace
/// canonicalization.
///
/// | input                               | output |
/// |-------------------------------------|--------|
/// | `„ “ ” « » ″`                       | `"`    |
/// | `‚ ‘ ’ ´` and backtick              | `'`    |
/// | en/em/figure dash, horizontal bar, minus sign | `-` |
/// | `…`                                 | `...`  |
/// | any Unicode whitespace (incl. NBSP) | space  |
///
/// Runs of whitespace collapse to one space; the result is trimmed.
pub fn normalize_punctuation(text: &str) -> String {
    let mut mapped = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '„' | '“' | '”' | '«' | '»' | '″' => mapped.push('"'),
            '‚' | '‘' | '’' | '´' | '`' => mapped.push('\''),
            '–' | '—' | '‒' | '―' | '−' => mapped.push('-'),
            '…' => mapped.push_str("..."),
            c if c.is_whitespace() => mapped.push(' '),
            c => mapped.push(c),
        }
    }
    mapped.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn normalize_and_tokenize(text: &str, rules: &LangRules) -> Vec<String> {
    tokenize(&normalize_punctuation(text), rules)
}

fn splits_always(c: char) -> bool {
    !c.is_alphanumeric() && !matches!(c, '.' | ',' | '\'' | '-')
}

/// Splits already-normalized text into tokens.
///
/// Punctuation other than `. , ' -` is always separated. Commas stay inside
/// numbers, apostrophes stay between alphanumerics, hyphens are never split.
/// A word-final period is split off unless the word is a nonbreaking prefix,
/// contains an internal period and a letter (`z.B.`), or the next token
/// starts lowercase.
pub fn tokenize(text: &str, rules: &LangRules) -> Vec<String> {
    let mut chunks: Vec<String> = Vec::new();
    for word in text.split_whitespace() {
        let chars: Vec<char> = word.chars().collect();
        let mut cur = String::new();
        for (i, &c) in chars.iter().enumerate() {
            let prev = i.checked_sub(1).map(|j| chars[j]);
            let next = chars.get(i + 1).copied();
            let split = match c {
                ',' => !(prev.is_some_and(|p| p.is_ascii_digit()) && next.is_some_and(|n| n.is_ascii_digit())),
                '\'' => !(prev.is_some_and(char::is_alphanumeric) && next.is_some_and(char::is_alphanumeric)),
                c => splits_always(c),
            };
            if split {
                if !cur.is_empty() {
                    chunks.push(std::mem::take(&mut cur));
                }
                chunks.push(c.to_string());
            } else {
                cur.push(c);
            }
        }
        if !cur.is_empty() {
            chunks.push(cur);
        }
    }

    let mut tokens = Vec::with_capacity(chunks.len() + 1);
    for (i, chunk) in chunks.iter().enumerate() {
        if chunk.len() < 2 || !chunk.ends_with('.') || chunk.chars().all(|c| c == '.') {
            tokens.push(chunk.clone());
            continue;
        }
        let stem = chunk.trim_end_matches('.');
        let dots = &chunk[stem.len()..];
        if dots.len() >= 2 {
            tokens.push(stem.to_owned());
            tokens.push(dots.to_owned());
            continue;
        }
        let next_lower = chunks
            .get(i + 1)
            .and_then(|n| n.chars().next())
            .is_some_and(char::is_lowercase);
        let keep = (stem.contains('.') && stem.chars().any(char::is_alphabetic))
            || rules.is_nonbreaking(stem)
            || next_lower;
        if keep {
            tokens.push(chunk.clone());
        } else {
            tokens.push(stem.to_owned());
            tokens.push(".".to_owned());
        }
    }
    tokens
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum QuoteRole {
    Open,
    Close,
}

/// Assigns open/close roles to standalone quote tokens left to right,
/// alternating; an unpaired trailing quote closes.
pub(crate) fn quote_roles<S: AsRef<str>>(tokens: &[S], quote: &str) -> Vec<Option<QuoteRole>> {
    let positions: Vec<usize> = tokens
        .iter()
        .enumerate()
        .filter(|(_, t)| t.as_ref() == quote)
        .map(|(i, _)| i)
        .collect();
    let mut roles = vec![None; tokens.len()];
    let n = positions.len();
    for (k, &pos) in positions.iter().enumerate() {
        roles[pos] = Some(if k % 2 == 1 || (k + 1 == n && n % 2 == 1) {
            QuoteRole::Close
        } else {
            QuoteRole::Open
        });
    }
    roles
}

fn attaches_to_previous(tok: &str) -> bool {
    matches!(tok, "," | "." | "!" | "?" | ":" | ";" | "%" | ")" | "]" | "}")
        || (!tok.is_empty() && tok.chars().all(|c| c == '.'))
}

fn attaches_to_next(tok: &str) -> bool {
    matches!(tok, "(" | "[" | "{")
}

/// Inverse of [`tokenize`] for conventionally spaced text.
pub fn detokenize<S: AsRef<str>>(tokens: &[S]) -> String {
    let double = quote_roles(tokens, "\"");
    let single = quote_roles(tokens, "'");
    let mut out = String::new();
    let mut glue_next = true;
    for (i, tok) in tokens.iter().enumerate() {
        let tok = tok.as_ref();
        let role = double[i].or(single[i]);
        let glue_prev = match role {
            Some(QuoteRole::Close) => true,
            Some(QuoteRole::Open) => false,
            None => attaches_to_previous(tok),
        };
        if !glue_next && !glue_prev {
            out.push(' ');
        }
        out.push_str(tok);
        glue_next = role == Some(QuoteRole::Open) || attaches_to_next(tok);
    }
    out
}
