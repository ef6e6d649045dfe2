use super::tokenize::{detokenize, quote_roles, QuoteRole};
use super::truecase::sentence_initial_positions;
use super::{CasingModel, LangRules};

fn is_double_quote(c: char) -> bool {
    matches!(c, '"' | '„' | '“' | '”' | '«' | '»' | '″')
}

/// Quote style used by `src`, judged by its first double-quote mark.
pub fn detect_quote_style(src: &str) -> Option<(char, char)> {
    src.chars().find(|&c| is_double_quote(c)).map(|c| match c {
        '„' => ('„', '“'),
        '“' => ('“', '”'),
        '”' => ('”', '”'),
        '«' => ('«', '»'),
        '»' => ('»', '«'),
        _ => ('"', '"'),
    })
}

fn upper_first(tok: &str) -> String {
    let mut chars = tok.chars();
    match chars.next() {
        Some(first) => first.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

/// Restores casing: known tokens take their most frequent surface form and
/// sentence-initial words are capitalized.
pub fn recase<S: AsRef<str>>(tokens: &[S], model: &CasingModel) -> Vec<String> {
    let mut out: Vec<String> = tokens
        .iter()
        .map(|t| {
            let t = t.as_ref();
            model.best(t).unwrap_or(t).to_owned()
        })
        .collect();
    for i in sentence_initial_positions(tokens) {
        out[i] = upper_first(&out[i]);
    }
    out
}

/// Recase, detokenize, then rewrite double quotes to the style found in the
/// source sentence (falling back to the target language's style).
pub fn postprocess<S: AsRef<str>>(
    hyp_tokens: &[S],
    src_text: &str,
    model: &CasingModel,
    rules: &LangRules,
) -> String {
    let tokens: Vec<String> = hyp_tokens
        .iter()
        .map(|t| {
            let t = t.as_ref();
            if t.chars().count() == 1 && t.chars().all(is_double_quote) {
                "\"".to_owned()
            } else {
                t.to_owned()
            }
        })
        .collect();
    let recased = recase(&tokens, model);
    let roles: Vec<QuoteRole> = quote_roles(&recased, "\"").into_iter().flatten().collect();
    let text = detokenize(&recased);
    if roles.is_empty() {
        return text;
    }
    let (open, close) = detect_quote_style(src_text).unwrap_or(rules.quote_style);
    let mut roles = roles.into_iter();
    text.chars()
        .map(|c| {
            if c == '"' {
                match roles.next() {
                    Some(QuoteRole::Open) => open,
                    _ => close,
                }
            } else {
                c
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn s(v: &[&str]) -> Vec<String> {
        v.iter().map(|x| x.to_string()).collect()
    }

    fn quote_count(text: &str) -> usize {
        text.chars().filter(|&c| is_double_quote(c)).count()
    }

    #[test]
    fn recases_and_attaches_comma() {
        let out = postprocess(&s(&["hallo", ",", "welt"]), "Egal.", &CasingModel::default(), &LangRules::german());
        assert_eq!(out, "Hallo, welt");
    }

    #[test]
    fn quotes_follow_source_style() {
        let out = postprocess(&s(&["\"", "ja", "\""]), "„nein“", &CasingModel::default(), &LangRules::german());
        assert_eq!(out, "„Ja“");
        let out = postprocess(&s(&["\"", "ja", "\""]), "«non»", &CasingModel::default(), &LangRules::german());
        assert_eq!(out, "«Ja»");
    }

    #[test]
    fn language_default_without_source_quotes() {
        let out = postprocess(
            &s(&["er", "sagte", "\"", "ja", "\"", "und", "\"", "nein"]),
            "bez citata",
            &CasingModel::default(),
            &LangRules::for_lang("hsb"),
        );
        assert_eq!(out, "Er sagte „ja“ und“ nein");
    }

    #[test]
    fn no_quotes_in_no_quotes_out() {
        let model = CasingModel::from_text("Berlin\t4\n").unwrap();
        let out = postprocess(&s(&["in", "berlin", "."]), "„x“", &model, &LangRules::german());
        assert_eq!(out, "In Berlin.");
        assert_eq!(quote_count(&out), 0);
    }

    proptest! {
        #[test]
        fn quote_count_and_letters_preserved(
            toks in prop::collection::vec(prop_oneof![
                "[a-zA-Zäöü0-9]{1,6}".boxed(),
                prop::sample::select(vec!["\"", "„", "“", ",", ".", "(", ")", "'"]).prop_map(String::from).boxed(),
            ], 0..12),
            src in prop::sample::select(vec!["", "„a“", "\"b\"", "«c»", "plain"]),
        ) {
            let out = postprocess(&toks, src, &CasingModel::default(), &LangRules::german());
            let hyp_quotes: usize = toks.iter().map(|t| quote_count(t)).sum();
            prop_assert_eq!(quote_count(&out), hyp_quotes);
            let mut a: Vec<String> = toks.concat().chars().filter(|c| c.is_alphanumeric())
                .flat_map(char::to_lowercase).map(String::from).collect();
            let mut b: Vec<String> = out.chars().filter(|c| c.is_alphanumeric())
                .flat_map(char::to_lowercase).map(String::from).collect();
            a.sort();
            b.sort();
            prop_assert_eq!(a, b);
        }
    }
}
