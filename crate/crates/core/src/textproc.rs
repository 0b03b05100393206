//! Offset-preserving tokenization, token cleaning and gold projection.
//!
//! Tokens keep half-open character spans into the original text. Cleaning
//! rewrites only the token surface and the `active` flag; spans never move.

use std::collections::BTreeMap;
use std::path::Path;

use crate::corpus::Document;
use crate::error::{Error, Result};

const DEFAULT_CONTRACTIONS: &str = include_str!("../resources/contractions.tsv");

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSpan {
    pub text: String,
    pub start: usize,
    pub end: usize,
    pub active: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSequence {
    pub doc_id: usize,
    pub tokens: Vec<TokenSpan>,
    pub labels: Vec<u8>,
    pub probs: Option<Vec<f64>>,
}

impl LabeledSequence {
    pub fn n_active(&self) -> usize {
        self.tokens.iter().filter(|t| t.active).count()
    }
}

/// Splits on whitespace, then peels leading and trailing punctuation off
/// each run as single-character tokens. Punctuation inside a run (for
/// example the apostrophe in "don't" or the hyphen in "re-run") stays.
pub fn tokenize(text: &str) -> Vec<TokenSpan> {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        if chars[i].is_whitespace() {
            i += 1;
            continue;
        }
        let run_start = i;
        while i < chars.len() && !chars[i].is_whitespace() {
            i += 1;
        }
        split_run(&chars, run_start, i, &mut tokens);
    }
    tokens
}

fn is_punct(c: char) -> bool {
    !c.is_alphanumeric()
}

fn split_run(chars: &[char], mut start: usize, mut end: usize, out: &mut Vec<TokenSpan>) {
    let mut trailing = Vec::new();
    while start < end && is_punct(chars[start]) {
        out.push(span(chars, start, start + 1));
        start += 1;
    }
    while end > start && is_punct(chars[end - 1]) {
        trailing.push(span(chars, end - 1, end));
        end -= 1;
    }
    if start < end {
        out.push(span(chars, start, end));
    }
    out.extend(trailing.into_iter().rev());
}

fn span(chars: &[char], start: usize, end: usize) -> TokenSpan {
    TokenSpan {
        text: chars[start..end].iter().collect(),
        start,
        end,
        active: true,
    }
}

/// Maps lowercase contraction surfaces to their expansions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContractionTable(BTreeMap<String, String>);

impl ContractionTable {
    pub fn parse(source: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (lineno, line) in source.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (surface, expansion) = line.split_once('\t').ok_or_else(|| {
                Error::Parse(format!(
                    "contraction table line {}: missing tab",
                    lineno + 1
                ))
            })?;
            if surface.is_empty() || surface.to_lowercase() != surface {
                return Err(Error::Parse(format!(
                    "contraction table line {}: surface {surface:?} must be nonempty lowercase",
                    lineno + 1
                )));
            }
            if expansion.trim().is_empty() {
                return Err(Error::Parse(format!(
                    "contraction table line {}: empty expansion",
                    lineno + 1
                )));
            }
            map.insert(surface.to_string(), expansion.to_string());
        }
        Ok(ContractionTable(map))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let source = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&source)
    }

    pub fn lookup(&self, token: &str) -> Option<&str> {
        let key = token.to_lowercase().replace('\u{2019}', "'");
        self.0.get(&key).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.0.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn to_tsv(&self) -> String {
        self.iter().map(|(k, v)| format!("{k}\t{v}\n")).collect()
    }
}

impl Default for ContractionTable {
    fn default() -> Self {
        Self::parse(DEFAULT_CONTRACTIONS).expect("bundled contraction table is valid")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CleaningConfig {
    pub expand_contractions: bool,
    pub remove_digits: bool,
    pub remove_fullstops: bool,
    pub contraction_table: ContractionTable,
}

impl Default for CleaningConfig {
    fn default() -> Self {
        CleaningConfig {
            expand_contractions: true,
            remove_digits: true,
            remove_fullstops: true,
            contraction_table: ContractionTable::default(),
        }
    }
}

/// Rewrites token surfaces. Digits are stripped before the contraction
/// lookup so that a second pass never finds new work. Tokens left with an
/// empty surface are deactivated but kept in place.
pub fn clean(tokens: &[TokenSpan], cfg: &CleaningConfig) -> Vec<TokenSpan> {
    tokens
        .iter()
        .map(|token| {
            let mut text = token.text.clone();
            if cfg.remove_digits {
                text.retain(|c| !c.is_numeric());
            }
            if cfg.expand_contractions {
                if let Some(expansion) = cfg.contraction_table.lookup(&text) {
                    text = expansion.to_string();
                }
            }
            if cfg.remove_fullstops && text == "." {
                text.clear();
            }
            TokenSpan {
                active: token.active && !text.is_empty(),
                text,
                start: token.start,
                end: token.end,
            }
        })
        .collect()
}

/// Labels a token toxic when it is active and any gold offset falls inside
/// its span.
pub fn project_gold(doc: &Document, tokens: Vec<TokenSpan>) -> LabeledSequence {
    let gold = doc.gold();
    let labels = tokens
        .iter()
        .map(|t| {
            let first = gold.partition_point(|&o| o < t.start);
            (t.active && first < gold.len() && gold[first] < t.end) as u8
        })
        .collect();
    LabeledSequence {
        doc_id: doc.id,
        tokens,
        labels,
        probs: None,
    }
}

/// Tokenize, clean and project gold in one go.
pub fn prepare(doc: &Document, cfg: &CleaningConfig) -> LabeledSequence {
    project_gold(doc, clean(&tokenize(&doc.text), cfg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn surfaces(tokens: &[TokenSpan]) -> Vec<(&str, usize, usize)> {
        tokens
            .iter()
            .map(|t| (t.text.as_str(), t.start, t.end))
            .collect()
    }

    #[test]
    fn whitespace_split() {
        assert_eq!(
            surfaces(&tokenize("You are an idiot")),
            vec![
                ("You", 0, 3),
                ("are", 4, 7),
                ("an", 8, 10),
                ("idiot", 11, 16)
            ]
        );
    }

    #[test]
    fn trailing_punctuation_is_peeled() {
        assert_eq!(
            surfaces(&tokenize("an idiot)")),
            vec![("an", 0, 2), ("idiot", 3, 8), (")", 8, 9)]
        );
        assert_eq!(
            surfaces(&tokenize("(\"wow!\")")),
            vec![
                ("(", 0, 1),
                ("\"", 1, 2),
                ("wow", 2, 5),
                ("!", 5, 6),
                ("\"", 6, 7),
                (")", 7, 8)
            ]
        );
    }

    #[test]
    fn internal_apostrophes_and_hyphens_stay() {
        assert_eq!(
            surfaces(&tokenize("don't re-run")),
            vec![("don't", 0, 5), ("re-run", 6, 12)]
        );
    }

    #[test]
    fn empty_and_blank_text() {
        assert!(tokenize("").is_empty());
        assert!(tokenize(" \t\n").is_empty());
    }

    #[test]
    fn spans_are_characters() {
        assert_eq!(
            surfaces(&tokenize("héllo wörld")),
            vec![("héllo", 0, 5), ("wörld", 6, 11)]
        );
    }

    #[test]
    fn default_table_size() {
        let table = ContractionTable::default();
        assert!(table.len() >= 40);
        assert_eq!(table.lookup("Don't"), Some("do not"));
        assert_eq!(table.lookup("don\u{2019}t"), Some("do not"));
    }

    #[test]
    fn table_validation() {
        assert!(ContractionTable::parse("Don't\tdo not\n").is_err());
        assert!(ContractionTable::parse("don't\t \n").is_err());
        assert!(ContractionTable::parse("don't do not\n").is_err());
        let t = ContractionTable::parse("y'all\tyou all\n\n").unwrap();
        assert_eq!(t.lookup("Y'all"), Some("you all"));
        assert_eq!(ContractionTable::parse(&t.to_tsv()).unwrap(), t);
    }

    #[test]
    fn clean_examples() {
        let cfg = CleaningConfig::default();
        let tokens = tokenize("don't h8er42 .");
        let cleaned = clean(&tokens, &cfg);
        assert_eq!(cleaned[0].text, "do not");
        assert_eq!((cleaned[0].start, cleaned[0].end), (0, 5));
        assert_eq!(cleaned[1].text, "her");
        assert!(cleaned[1].active);
        assert!(!cleaned[2].active);
        assert_eq!(cleaned[2].text, "");
        assert_eq!((cleaned[2].start, cleaned[2].end), (13, 14));
    }

    #[test]
    fn clean_flags_switch_off() {
        let cfg = CleaningConfig {
            expand_contractions: false,
            remove_digits: false,
            remove_fullstops: false,
            ..CleaningConfig::default()
        };
        let tokens = tokenize("don't 42 .");
        assert_eq!(clean(&tokens, &cfg), tokens);
    }

    #[test]
    fn digit_only_tokens_deactivate() {
        let cleaned = clean(&tokenize("in 2021"), &CleaningConfig::default());
        assert!(!cleaned[1].active);
    }

    #[test]
    fn projection_examples() {
        let doc = Document::new(0, "You idiot", vec![4, 5, 6, 7, 8]).unwrap();
        assert_eq!(project_gold(&doc, tokenize(&doc.text)).labels, vec![0, 1]);

        let doc = Document::new(0, "abcd efghijk", vec![11]).unwrap();
        assert_eq!(project_gold(&doc, tokenize(&doc.text)).labels, vec![0, 1]);

        let doc = Document::new(0, "You idiot", vec![]).unwrap();
        assert_eq!(project_gold(&doc, tokenize(&doc.text)).labels, vec![0, 0]);
    }

    #[test]
    fn inactive_tokens_never_toxic() {
        let doc = Document::new(0, "idiot .", vec![0, 1, 2, 3, 4, 5, 6]).unwrap();
        let seq = prepare(&doc, &CleaningConfig::default());
        assert_eq!(seq.labels, vec![1, 0]);
    }

    fn text_strategy() -> impl Strategy<Value = String> {
        proptest::collection::vec(
            prop_oneof![
                Just(' '),
                Just('\t'),
                Just('\n'),
                Just('.'),
                Just(','),
                Just('\''),
                Just('-'),
                Just('('),
                Just('!'),
                Just('7'),
                Just('é'),
                Just('a'),
                Just('Z'),
                Just('k'),
            ],
            0..60,
        )
        .prop_map(|cs| cs.into_iter().collect())
    }

    proptest! {
        #[test]
        fn tokens_cover_non_whitespace(text in text_strategy()) {
            let tokens = tokenize(&text);
            let chars: Vec<char> = text.chars().collect();
            let mut prev_end = 0;
            let mut joined = String::new();
            for t in &tokens {
                prop_assert!(t.start < t.end && t.end <= chars.len());
                prop_assert!(t.start >= prev_end);
                prev_end = t.end;
                let slice: String = chars[t.start..t.end].iter().collect();
                prop_assert_eq!(&slice, &t.text);
                prop_assert!(!slice.chars().any(char::is_whitespace));
                joined.push_str(&slice);
            }
            let stripped: String = text.chars().filter(|c| !c.is_whitespace()).collect();
            prop_assert_eq!(joined, stripped);
        }

        #[test]
        fn clean_is_idempotent(text in text_strategy(), prefix in prop_oneof![Just(""), Just("can't "), Just("won't2 ")]) {
            let text = format!("{prefix}{text}");
            let cfg = CleaningConfig::default();
            let once = clean(&tokenize(&text), &cfg);
            prop_assert_eq!(clean(&once, &cfg), once);
        }

        #[test]
        fn projection_ignores_token_text(text in text_strategy(), seed in 0u64..1000) {
            let n = text.chars().count();
            let gold: Vec<usize> = (0..n).filter(|i| (i * 7 + seed as usize).is_multiple_of(3)).collect();
            let doc = Document::new(0, text.clone(), gold).unwrap();
            let raw = tokenize(&text);
            let cleaned = clean(&raw, &CleaningConfig::default());
            let mut renamed = cleaned.clone();
            for t in &mut renamed {
                if t.active {
                    t.text = "x".into();
                }
            }
            prop_assert_eq!(project_gold(&doc, cleaned).labels, project_gold(&doc, renamed).labels);
        }
    }
}
