//! Corpus ingestion, deterministic splitting, statistics and the synthetic
//! document generator used for desk-scale experiments.
//!
//! Offsets everywhere are character (unicode scalar) indices into the
//! original text, never byte indices.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::textproc::LabeledSequence;

/// Literal accepted in the `spans` column of a pool file.
pub const UNLABELED: &str = "UNLABELED";

/// A post together with its gold toxic character offsets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub id: usize,
    pub text: String,
    gold: Vec<usize>,
}

impl Document {
    /// Builds a document, sorting and deduplicating `gold`. Fails if any
    /// offset falls outside the text.
    pub fn new(id: usize, text: impl Into<String>, mut gold: Vec<usize>) -> Result<Self> {
        let text = text.into();
        let len = text.chars().count();
        gold.sort_unstable();
        gold.dedup();
        if let Some(&offset) = gold.last() {
            if offset >= len {
                return Err(Error::OffsetOutOfRange {
                    row: id,
                    offset,
                    len,
                });
            }
        }
        Ok(Document { id, text, gold })
    }

    pub fn unlabeled(id: usize, text: impl Into<String>) -> Self {
        Document {
            id,
            text: text.into(),
            gold: Vec::new(),
        }
    }

    /// Sorted, deduplicated gold offsets.
    pub fn gold(&self) -> &[usize] {
        &self.gold
    }

    pub fn char_len(&self) -> usize {
        self.text.chars().count()
    }
}

/// Parses a bracketed integer list such as `"[3, 4, 5]"`.
pub fn parse_offset_list(field: &str) -> std::result::Result<Vec<usize>, String> {
    let trimmed = field.trim();
    let inner = trimmed
        .strip_prefix('[')
        .and_then(|s| s.strip_suffix(']'))
        .ok_or_else(|| "expected a bracketed list".to_string())?;
    if inner.trim().is_empty() {
        return Ok(Vec::new());
    }
    inner
        .split(',')
        .map(|item| {
            let item = item.trim();
            if item.is_empty() || !item.bytes().all(|b| b.is_ascii_digit()) {
                return Err(format!("bad list element {item:?}"));
            }
            item.parse::<usize>().map_err(|e| e.to_string())
        })
        .collect()
}

pub fn format_offset_list(offsets: &[usize]) -> String {
    let items: Vec<String> = offsets.iter().map(|o| o.to_string()).collect();
    format!("[{}]", items.join(", "))
}

fn read_rows(path: &Path) -> Result<Vec<(usize, String, String)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(file);
    let headers = reader.headers()?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Parse(format!("{}: missing column {name:?}", path.display())))
    };
    let spans_col = column("spans")?;
    let text_col = column("text")?;
    let mut rows = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let spans = record.get(spans_col).unwrap_or_default().to_string();
        let text = record.get(text_col).unwrap_or_default().to_string();
        rows.push((row, spans, text));
    }
    Ok(rows)
}

/// Loads a labeled corpus in the competition CSV layout (`spans`, `text`).
pub fn load_csv(path: impl AsRef<Path>) -> Result<Vec<Document>> {
    read_rows(path.as_ref())?
        .into_iter()
        .map(|(row, spans, text)| {
            let gold = parse_offset_list(&spans).map_err(|reason| Error::MalformedSpans {
                row,
                field: spans.clone(),
                reason,
            })?;
            Document::new(row, text, gold)
        })
        .collect()
}

/// Loads an unlabeled pool. The `spans` column may hold [`UNLABELED`] or a
/// bracketed list; either way the returned documents carry no gold.
pub fn load_pool_csv(path: impl AsRef<Path>) -> Result<Vec<Document>> {
    read_rows(path.as_ref())?
        .into_iter()
        .map(|(row, spans, text)| {
            if spans.trim() != UNLABELED {
                parse_offset_list(&spans).map_err(|reason| Error::MalformedSpans {
                    row,
                    field: spans.clone(),
                    reason,
                })?;
            }
            Ok(Document::unlabeled(row, text))
        })
        .collect()
}

fn write_rows<'a>(path: &Path, rows: impl Iterator<Item = (String, &'a str)>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = csv::Writer::from_writer(file);
    writer.write_record(["spans", "text"])?;
    for (spans, text) in rows {
        writer.write_record([spans.as_str(), text])?;
    }
    writer
        .into_inner()
        .map_err(|e| Error::io(path, e.into_error()))?
        .flush()
        .map_err(|e| Error::io(path, e))
}

pub fn write_csv(path: impl AsRef<Path>, docs: &[Document]) -> Result<()> {
    write_rows(
        path.as_ref(),
        docs.iter()
            .map(|d| (format_offset_list(d.gold()), d.text.as_str())),
    )
}

pub fn write_pool_csv(path: impl AsRef<Path>, docs: &[Document]) -> Result<()> {
    write_rows(
        path.as_ref(),
        docs.iter()
            .map(|d| (UNLABELED.to_string(), d.text.as_str())),
    )
}

/// Train/dev/test proportions as integer weights, e.g. `80:10:10`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitSpec {
    pub weights: [u64; 3],
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(train: u64, dev: u64, test: u64, seed: u64) -> Result<Self> {
        if train + dev + test == 0 {
            return Err(Error::Config("split weights must not all be zero".into()));
        }
        Ok(SplitSpec {
            weights: [train, dev, test],
            seed,
        })
    }

    /// Parses `A:B:C`.
    pub fn parse(s: &str, seed: u64) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(Error::Config(format!(
                "split {s:?} is not of the form A:B:C"
            )));
        }
        let mut w = [0u64; 3];
        for (slot, part) in w.iter_mut().zip(&parts) {
            *slot = part
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("split {s:?}: bad weight {part:?}")))?;
        }
        SplitSpec::new(w[0], w[1], w[2], seed)
    }

    /// Partition sizes for `n` documents: train takes `floor(train_frac * n)`
    /// and the rest is divided between dev (floored) and test.
    pub fn sizes(&self, n: usize) -> (usize, usize, usize) {
        let [a, b, c] = self.weights;
        let n64 = n as u128;
        let train = (n64 * a as u128 / (a + b + c) as u128) as usize;
        let rest = n - train;
        let dev = if b + c == 0 {
            0
        } else {
            (rest as u128 * b as u128 / (b + c) as u128) as usize
        };
        (train, dev, rest - dev)
    }
}

pub type Split = (Vec<Document>, Vec<Document>, Vec<Document>);

/// Seeded shuffle followed by contiguous train/dev/test chunks.
pub fn split(docs: &[Document], spec: &SplitSpec) -> Result<Split> {
    if docs.is_empty() {
        return Err(Error::Config("cannot split an empty corpus".into()));
    }
    let mut order: Vec<usize> = (0..docs.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    let (n_train, n_dev, _) = spec.sizes(docs.len());
    let pick = |idx: &[usize]| idx.iter().map(|&i| docs[i].clone()).collect::<Vec<_>>();
    Ok((
        pick(&order[..n_train]),
        pick(&order[n_train..n_train + n_dev]),
        pick(&order[n_train + n_dev..]),
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusStats {
    pub n_documents: usize,
    pub n_tokens: usize,
    pub n_toxic_tokens: usize,
    /// Non-toxic tokens per toxic token; `None` when there are no toxic tokens.
    pub imbalance_ratio: Option<f64>,
    pub n_empty_gold: usize,
}

/// Counts over the model-visible (active) tokens of `tokenized`.
pub fn stats(docs: &[Document], tokenized: &[LabeledSequence]) -> Result<CorpusStats> {
    if docs.len() != tokenized.len() {
        return Err(Error::MismatchedDocs(format!(
            "{} documents but {} token sequences",
            docs.len(),
            tokenized.len()
        )));
    }
    let mut n_tokens = 0;
    let mut n_toxic_tokens = 0;
    for seq in tokenized {
        for (token, &label) in seq.tokens.iter().zip(&seq.labels) {
            if token.active {
                n_tokens += 1;
                n_toxic_tokens += label as usize;
            }
        }
    }
    let imbalance_ratio =
        (n_toxic_tokens > 0).then(|| (n_tokens - n_toxic_tokens) as f64 / n_toxic_tokens as f64);
    Ok(CorpusStats {
        n_documents: docs.len(),
        n_tokens,
        n_toxic_tokens,
        imbalance_ratio,
        n_empty_gold: docs.iter().filter(|d| d.gold().is_empty()).count(),
    })
}

pub const DEFAULT_LEXICON: &[&str] = &[
    "idiot",
    "idiots",
    "moron",
    "morons",
    "stupid",
    "pathetic",
    "dumb",
    "loser",
    "fool",
    "clown",
    "ignorant",
    "disgusting",
    "scum",
    "hypocrite",
    "jerk",
    "trash",
    "ridiculous",
    "lame",
    "imbecile",
    "buffoon",
    "sick",
    "crooked",
    "vile",
    "garbage",
];

pub const DEFAULT_FILLERS: &[&str] = &[
    "city",
    "state",
    "budget",
    "local",
    "federal",
    "school",
    "housing",
    "tax",
    "senate",
    "transit",
    "oregon",
    "alaska",
    "economic",
    "public",
    "green",
    "rural",
    "liberal",
    "conservative",
    "new",
    "old",
    "small",
    "quiet",
    "careful",
    "reasonable",
    "recent",
    "county",
    "union",
    "harbor",
    "market",
    "energy",
    "pension",
    "police",
    "water",
    "forest",
];

/// `{T}` marks a lexicon slot, `{F}` a filler slot.
pub const DEFAULT_TEMPLATES: &[&str] = &[
    "you are a {T}",
    "What a {T} thing to say about the {F} board.",
    "only a {T} would believe that the {F} office can fix the {F} problem.",
    "I don't think the {F} plan is {T}, it's just {F}.",
    "the {F} council voted 7 to 2 and they're all {T} {T}.",
    "honestly, this is the most {T} comment i've read about {F} issues in 2021.",
    "{F} and {F} again? what {T} nonsense from the {F} crowd!",
    "people who vote for the {F} ticket are {T} and {T}.",
    "shut up, you {T} {T}!",
    "can't believe the {F} editors let this {T} write about {F} policy.",
    "i've lived here 30 years and never seen anything so {T}.",
    "the {F} proposal would cost $4 million, which is {T} if you ask me.",
    "go back to your {F} hole, {T}.",
    "this {F} governor is a {T} and a {T}.",
    "we'll see what the {F} committee decides, but they look {T} so far.",
    "what a bunch of {T} hypocrites in the {F} party.",
    "your comment about the {F} vote is {T} and frankly {T}.",
    "another day, another {T} take from the {F} side of the {F} debate.",
    "the {F} mayor (a total {T}) should resign before the {F} election.",
    "Anyone who supports the {F} measure is a {T}, plain and simple.",
];

/// Parameters of the synthetic corpus generator.
#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub n_docs: usize,
    pub seed: u64,
    pub lexicon: Vec<String>,
    pub fillers: Vec<String>,
    pub templates: Vec<String>,
    /// Fraction of documents whose lexicon slots receive filler words.
    pub empty_frac: f64,
    /// Pool mode: no empty documents, and filler slots turn into lexicon
    /// words with probability 0.2 (a toxicity-filtered crawl).
    pub toxic_pool: bool,
}

impl SynthConfig {
    pub fn new(n_docs: usize, seed: u64) -> Self {
        let owned = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect();
        SynthConfig {
            n_docs,
            seed,
            lexicon: owned(DEFAULT_LEXICON),
            fillers: owned(DEFAULT_FILLERS),
            templates: owned(DEFAULT_TEMPLATES),
            empty_frac: 0.05,
            toxic_pool: false,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.lexicon.is_empty() || self.templates.is_empty() || self.fillers.is_empty() {
            return Err(Error::Config(
                "synthetic generator needs a nonempty lexicon, filler list and template list"
                    .into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.empty_frac) {
            return Err(Error::Config(format!(
                "empty fraction {} outside [0, 1]",
                self.empty_frac
            )));
        }
        Ok(())
    }
}

enum Piece<'a> {
    Literal(&'a str),
    Toxic,
    Filler,
}

fn parse_template(template: &str) -> Vec<Piece<'_>> {
    let mut pieces = Vec::new();
    let mut rest = template;
    while !rest.is_empty() {
        let toxic = rest.find("{T}").map(|at| (at, Piece::Toxic));
        let filler = rest.find("{F}").map(|at| (at, Piece::Filler));
        let next = match (toxic, filler) {
            (Some(t), Some(f)) => Some(if t.0 < f.0 { t } else { f }),
            (t, f) => t.or(f),
        };
        match next {
            Some((at, slot)) => {
                if at > 0 {
                    pieces.push(Piece::Literal(&rest[..at]));
                }
                pieces.push(slot);
                rest = &rest[at + 3..];
            }
            None => {
                pieces.push(Piece::Literal(rest));
                break;
            }
        }
    }
    pieces
}

/// Generates `cfg.n_docs` documents whose gold offsets are exactly the
/// characters of the inserted lexicon words.
pub fn generate_synthetic(cfg: &SynthConfig) -> Result<Vec<Document>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let templates: Vec<Vec<Piece>> = cfg.templates.iter().map(|t| parse_template(t)).collect();
    let mut docs = Vec::with_capacity(cfg.n_docs);
    for id in 0..cfg.n_docs {
        let pieces = &templates[rng.gen_range(0..templates.len())];
        let empty = !cfg.toxic_pool && rng.gen::<f64>() < cfg.empty_frac;
        let mut text = String::new();
        let mut len = 0usize;
        let mut gold = Vec::new();
        for piece in pieces {
            let (word, toxic) = match piece {
                Piece::Literal(s) => (*s, false),
                Piece::Toxic if !empty => (cfg.lexicon.choose(&mut rng).unwrap().as_str(), true),
                Piece::Filler if cfg.toxic_pool && rng.gen::<f64>() < 0.2 => {
                    (cfg.lexicon.choose(&mut rng).unwrap().as_str(), true)
                }
                Piece::Toxic | Piece::Filler => {
                    (cfg.fillers.choose(&mut rng).unwrap().as_str(), false)
                }
            };
            let n = word.chars().count();
            if toxic {
                gold.extend(len..len + n);
            }
            text.push_str(word);
            len += n;
        }
        docs.push(Document::new(id, text, gold)?);
    }
    Ok(docs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join(format!("toxspan-corpus-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    fn write(name: &str, body: &str) -> std::path::PathBuf {
        let p = tmp(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn parses_bracket_lists() {
        assert_eq!(parse_offset_list("[]").unwrap(), Vec::<usize>::new());
        assert_eq!(
            parse_offset_list("[4, 5, 6, 7, 8]").unwrap(),
            vec![4, 5, 6, 7, 8]
        );
        assert_eq!(parse_offset_list("[1,2]").unwrap(), vec![1, 2]);
        assert!(parse_offset_list("1, 2").is_err());
        assert!(parse_offset_list("[1,,2]").is_err());
        assert!(parse_offset_list("[-1]").is_err());
    }

    #[test]
    fn load_csv_examples() {
        let p = write(
            "ok.csv",
            "spans,text\n[],hello\n\"[4, 5, 6, 7, 8]\",You idiot\n",
        );
        let docs = load_csv(&p).unwrap();
        assert_eq!(docs.len(), 2);
        assert!(docs[0].gold().is_empty());
        assert_eq!(docs[1].gold(), &[4, 5, 6, 7, 8]);
        assert_eq!(docs[1].id, 1);

        let p = write("swapped.csv", "text,spans\nYou idiot,\"[4, 5]\"\n");
        assert_eq!(load_csv(&p).unwrap()[0].gold(), &[4, 5]);
    }

    #[test]
    fn load_csv_rejects_out_of_range_offset() {
        let p = write("oob.csv", "spans,text\n[],fine\n[9],You idiot\n");
        match load_csv(&p).unwrap_err() {
            Error::OffsetOutOfRange { row, offset, len } => {
                assert_eq!((row, offset, len), (1, 9, 9));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn load_csv_names_malformed_row() {
        let p = write("bad.csv", "spans,text\n[],a\n[1; 2],abc\n");
        match load_csv(&p).unwrap_err() {
            Error::MalformedSpans { row, .. } => assert_eq!(row, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn offsets_count_characters_not_bytes() {
        let p = write("utf8.csv", "spans,text\n\"[2, 3]\",éé ab\n");
        assert!(load_csv(&p).is_ok());
        let p = write("utf8-bad.csv", "spans,text\n[5],éé ab\n");
        assert!(load_csv(&p).is_err());
    }

    #[test]
    fn pool_accepts_unlabeled_marker() {
        let p = write("pool.csv", "spans,text\nUNLABELED,some text\n[0],x\n");
        let pool = load_pool_csv(&p).unwrap();
        assert_eq!(pool.len(), 2);
        assert!(pool.iter().all(|d| d.gold().is_empty()));
        let p = write("labeled.csv", "spans,text\nUNLABELED,some text\n");
        assert!(load_csv(&p).is_err());
    }

    #[test]
    fn csv_round_trip_with_quoting() {
        let docs = vec![
            Document::new(0, "plain", vec![]).unwrap(),
            Document::new(1, "has, comma and \"quotes\"\nnewline", vec![0, 1, 2]).unwrap(),
        ];
        let p = tmp("rt.csv");
        write_csv(&p, &docs).unwrap();
        assert_eq!(load_csv(&p).unwrap(), docs);
    }

    #[test]
    fn split_sizes() {
        let spec = SplitSpec::new(80, 10, 10, 0).unwrap();
        assert_eq!(spec.sizes(7939), (6351, 794, 794));
        assert_eq!(spec.sizes(10), (8, 1, 1));
        assert_eq!(
            SplitSpec::parse("80:10:10", 3).unwrap(),
            SplitSpec::new(80, 10, 10, 3).unwrap()
        );
        assert!(SplitSpec::parse("80:20", 0).is_err());
        assert!(SplitSpec::new(0, 0, 0, 0).is_err());
    }

    #[test]
    fn split_is_deterministic() {
        let docs: Vec<Document> = (0..50)
            .map(|i| Document::new(i, format!("doc {i}"), vec![]).unwrap())
            .collect();
        let spec = SplitSpec::new(80, 10, 10, 42).unwrap();
        assert_eq!(split(&docs, &spec).unwrap(), split(&docs, &spec).unwrap());
        assert!(split(&[], &spec).is_err());
    }

    #[test]
    fn stats_ratio_and_guard() {
        use crate::textproc::{tokenize, LabeledSequence};
        let mk = |labels: Vec<u8>| {
            let text = vec!["w"; labels.len()].join(" ");
            LabeledSequence {
                doc_id: 0,
                tokens: tokenize(&text),
                labels,
                probs: None,
            }
        };
        let mut labels = vec![0u8; 22];
        labels[0] = 1;
        labels[5] = 1;
        let docs = vec![Document::new(0, "x", vec![0]).unwrap()];
        let s = stats(&docs, &[mk(labels)]).unwrap();
        assert_eq!(s.imbalance_ratio, Some(10.0));
        let s = stats(&docs, &[mk(vec![0; 4])]).unwrap();
        assert_eq!(s.imbalance_ratio, None);
        assert!(stats(&docs, &[]).is_err());
    }

    #[test]
    fn synthetic_template_construction() {
        let mut cfg = SynthConfig::new(1, 0);
        cfg.templates = vec!["you are a {T}".into()];
        cfg.lexicon = vec!["idiot".into()];
        cfg.empty_frac = 0.0;
        let docs = generate_synthetic(&cfg).unwrap();
        assert_eq!(docs[0].text, "you are a idiot");
        assert_eq!(docs[0].gold(), &[10, 11, 12, 13, 14]);
    }

    #[test]
    fn synthetic_all_empty() {
        let mut cfg = SynthConfig::new(200, 1);
        cfg.empty_frac = 1.0;
        let docs = generate_synthetic(&cfg).unwrap();
        assert!(docs.iter().all(|d| d.gold().is_empty()));
    }

    #[test]
    fn synthetic_is_deterministic_and_gold_hits_lexicon() {
        let cfg = SynthConfig::new(300, 9);
        let a = generate_synthetic(&cfg).unwrap();
        assert_eq!(a, generate_synthetic(&cfg).unwrap());
        for doc in &a {
            let chars: Vec<char> = doc.text.chars().collect();
            // Group gold into maximal runs; each run must be a lexicon word.
            let mut runs: Vec<(usize, usize)> = Vec::new();
            for &o in doc.gold() {
                match runs.last_mut() {
                    Some((_, end)) if *end == o => *end += 1,
                    _ => runs.push((o, o + 1)),
                }
            }
            for (s, e) in runs {
                let word: String = chars[s..e].iter().collect();
                assert!(DEFAULT_LEXICON.contains(&word.as_str()), "{word:?}");
            }
        }
        let empty = a.iter().filter(|d| d.gold().is_empty()).count();
        assert!(empty > 0 && empty < 40, "{empty}");
    }

    #[test]
    fn synthetic_rejects_empty_inputs() {
        let mut cfg = SynthConfig::new(3, 0);
        cfg.lexicon.clear();
        assert!(generate_synthetic(&cfg).is_err());
    }
}
