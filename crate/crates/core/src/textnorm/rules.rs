use std::collections::HashSet;

use crate::error::{Error, Result};

const GERMAN_PREFIXES: &str = include_str!("../../data/nonbreaking_prefix.de");
const CZECH_PREFIXES: &str = include_str!("../../data/nonbreaking_prefix.cs");

/// Per-language tokenization assets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LangRules {
    pub lang_id: String,
    pub nonbreaking_prefixes: HashSet<String>,
    /// (opening, closing) double-quote marks.
    pub quote_style: (char, char),
}

impl LangRules {
    pub fn new(
        lang_id: impl Into<String>,
        nonbreaking_prefixes: HashSet<String>,
        quote_style: (char, char),
    ) -> Result<Self> {
        let lang_id = lang_id.into();
        if lang_id.is_empty() {
            return Err(Error::InvalidConfig("empty language id".into()));
        }
        Ok(LangRules {
            lang_id,
            nonbreaking_prefixes,
            quote_style,
        })
    }

    /// Parses a prefix file: one prefix per line, `#` starts a comment.
    pub fn from_prefix_file(
        lang_id: impl Into<String>,
        contents: &str,
        quote_style: (char, char),
    ) -> Result<Self> {
        let prefixes = contents
            .lines()
            .map(|l| l.split('#').next().unwrap_or("").trim())
            .filter(|l| !l.is_empty())
            .map(str::to_owned)
            .collect();
        Self::new(lang_id, prefixes, quote_style)
    }

    pub fn german() -> Self {
        Self::from_prefix_file("de", GERMAN_PREFIXES, ('„', '“')).expect("bundled rules")
    }

    pub fn czech() -> Self {
        Self::from_prefix_file("cs", CZECH_PREFIXES, ('„', '“')).expect("bundled rules")
    }

    /// Rules for a language code. Upper Sorbian has no rule file of its own
    /// and is tokenized with the Czech one.
    pub fn for_lang(lang_id: &str) -> Self {
        match lang_id {
            "de" => Self::german(),
            "cs" => Self::czech(),
            "hsb" => LangRules {
                lang_id: "hsb".into(),
                ..Self::czech()
            },
            other => LangRules {
                lang_id: if other.is_empty() { "und".into() } else { other.into() },
                nonbreaking_prefixes: HashSet::new(),
                quote_style: ('"', '"'),
            },
        }
    }

    pub fn is_nonbreaking(&self, prefix: &str) -> bool {
        self.nonbreaking_prefixes.contains(prefix)
    }
}
