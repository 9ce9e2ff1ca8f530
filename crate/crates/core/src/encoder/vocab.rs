use std::collections::{BTreeMap, HashMap};

use crate::corpus::Corpus;
use crate::error::{Error, Result};

/// Token returned by [`tokenize`] for text with no surviving tokens. It maps
/// to index 0 and cannot be produced from text because `<` and `>` are
/// stripped from token edges.
pub const UNK_TOKEN: &str = "<unk>";
pub const UNK_INDEX: usize = 0;

/// Lowercases, splits on whitespace and strips punctuation from token edges.
///
/// `@` and `#` are kept so mentions and hashtags survive whole; interior
/// punctuation (URLs, contractions) is untouched.
pub fn tokenize(text: &str) -> Vec<String> {
    let tokens: Vec<String> = text
        .split_whitespace()
        .map(|raw| raw.trim_matches(is_edge_punctuation).to_lowercase())
        .filter(|t| !t.is_empty())
        .collect();
    if tokens.is_empty() {
        vec![UNK_TOKEN.to_string()]
    } else {
        tokens
    }
}

fn is_edge_punctuation(c: char) -> bool {
    if c == '@' || c == '#' {
        return false;
    }
    c.is_ascii_punctuation()
        || matches!(
            c,
            '\u{2018}'..='\u{201F}' // curly quotes
                | '\u{2010}'..='\u{2015}' // dashes
                | '\u{2026}' // ellipsis
                | '\u{00A1}' | '\u{00BF}' | '\u{00AB}' | '\u{00BB}'
                | '\u{3001}' | '\u{3002}'
        )
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    min_count: usize,
}

impl Vocabulary {
    /// Builds from every text of every corpus. Tokens with frequency at least
    /// `min_count` are kept, ordered by descending frequency then byte-wise.
    pub fn build<'a>(
        corpora: impl IntoIterator<Item = &'a Corpus>,
        min_count: usize,
    ) -> Result<Self> {
        if min_count == 0 {
            return Err(Error::Config("min_count must be at least 1".into()));
        }
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        let mut any = false;
        for corpus in corpora {
            for ex in corpus.examples() {
                any = true;
                for tok in tokenize(&ex.text) {
                    if tok != UNK_TOKEN {
                        *counts.entry(tok).or_default() += 1;
                    }
                }
            }
        }
        if !any {
            return Err(Error::Config(
                "cannot build a vocabulary from an empty corpus".into(),
            ));
        }
        let mut kept: Vec<(String, usize)> = counts
            .into_iter()
            .filter(|(_, n)| *n >= min_count)
            .collect();
        // BTreeMap order already breaks ties lexicographically; the sort is stable.
        kept.sort_by_key(|&(_, n)| std::cmp::Reverse(n));
        let tokens = std::iter::once(UNK_TOKEN.to_string())
            .chain(kept.into_iter().map(|(t, _)| t))
            .collect();
        Ok(Self::from_tokens_unchecked(tokens, min_count))
    }

    /// Rebuilds from an index-ordered token list whose first entry is UNK.
    pub fn from_tokens(tokens: Vec<String>, min_count: usize) -> Result<Self> {
        if tokens.first().map(String::as_str) != Some(UNK_TOKEN) {
            return Err(Error::ModelFormat(format!(
                "vocabulary must start with {UNK_TOKEN}"
            )));
        }
        let vocab = Self::from_tokens_unchecked(tokens, min_count.max(1));
        if vocab.index.len() != vocab.tokens.len() {
            return Err(Error::ModelFormat(
                "vocabulary contains duplicate tokens".into(),
            ));
        }
        if vocab
            .tokens
            .iter()
            .any(|t| t.is_empty() || t.contains(char::is_whitespace))
        {
            return Err(Error::ModelFormat(
                "vocabulary token is empty or contains whitespace".into(),
            ));
        }
        Ok(vocab)
    }

    fn from_tokens_unchecked(tokens: Vec<String>, min_count: usize) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Self {
            tokens,
            index,
            min_count,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn min_count(&self) -> usize {
        self.min_count
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn index_of(&self, token: &str) -> usize {
        self.get(token).unwrap_or(UNK_INDEX)
    }

    /// Token indices of `text`; never empty.
    pub fn encode(&self, text: &str) -> Vec<usize> {
        tokenize(text).iter().map(|t| self.index_of(t)).collect()
    }
}

pub fn build_vocab(corpus: &Corpus, min_count: usize) -> Result<Vocabulary> {
    Vocabulary::build([corpus], min_count)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::example;

    fn ab_corpus() -> Corpus {
        Corpus::new(
            "d",
            vec![example("1", "a b", "x"), example("2", "a c", "y")],
        )
        .unwrap()
    }

    #[test]
    fn tokenize_rules() {
        assert_eq!(
            tokenize("Flu season, again!"),
            vec!["flu", "season", "again"]
        );
        assert_eq!(tokenize("   "), vec![UNK_TOKEN]);
        assert_eq!(tokenize("!!! ..."), vec![UNK_TOKEN]);
        assert_eq!(
            tokenize("@user http://t.co/x #flu"),
            vec!["@user", "http://t.co/x", "#flu"]
        );
        assert_eq!(
            tokenize("\u{201C}Quoted\u{201D} don't"),
            vec!["quoted", "don't"]
        );
        assert_eq!(tokenize("<unk>"), vec!["unk"]);
    }

    #[test]
    fn min_count_filters() {
        let v = build_vocab(&ab_corpus(), 2).unwrap();
        assert_eq!(v.tokens(), &[UNK_TOKEN, "a"]);
    }

    #[test]
    fn frequency_then_lexicographic_order() {
        let v = build_vocab(&ab_corpus(), 1).unwrap();
        assert_eq!(v.tokens(), &[UNK_TOKEN, "a", "b", "c"]);
        assert_eq!(v.get("a"), Some(1));
        assert_eq!(build_vocab(&ab_corpus(), 1).unwrap(), v);
    }

    #[test]
    fn unknown_tokens_map_to_unk() {
        let v = build_vocab(&ab_corpus(), 1).unwrap();
        assert_eq!(v.encode("A zebra c"), vec![1, UNK_INDEX, 3]);
        assert_eq!(v.encode(""), vec![UNK_INDEX]);
    }

    #[test]
    fn zero_min_count_rejected() {
        assert!(build_vocab(&ab_corpus(), 0).is_err());
    }

    proptest::proptest! {
        #[test]
        fn tokens_are_clean(text in "\\PC{0,40}") {
            let toks = tokenize(&text);
            proptest::prop_assert!(!toks.is_empty());
            for t in &toks {
                proptest::prop_assert!(!t.is_empty());
                proptest::prop_assert!(!t.contains(char::is_whitespace));
            }
        }
    }
}
