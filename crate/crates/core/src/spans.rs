//! Token labels to character offsets, evaluation-time full stop, character
//! majority-vote ensembling and the submission TSV format.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use crate::corpus::{format_offset_list, parse_offset_list, Document};
use crate::error::{Error, Result};
use crate::model::{forward, threshold, TrainedModel};
use crate::par::Exec;
use crate::textproc::{clean, tokenize, LabeledSequence};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpanPrediction {
    pub doc_id: usize,
    /// Sorted and deduplicated.
    pub offsets: Vec<usize>,
}

impl SpanPrediction {
    pub fn new(doc_id: usize, mut offsets: Vec<usize>) -> Self {
        offsets.sort_unstable();
        offsets.dedup();
        SpanPrediction { doc_id, offsets }
    }
}

/// Characters of every toxic token, plus the characters between two
/// consecutive tokens that are both toxic. Offsets at or past the end of
/// `original_text` are dropped.
pub fn to_offsets(seq: &LabeledSequence, original_text: &str) -> SpanPrediction {
    let len = original_text.chars().count();
    let mut offsets = Vec::new();
    let mut prev_toxic_end: Option<usize> = None;
    for (token, &label) in seq.tokens.iter().zip(&seq.labels) {
        if label == 1 {
            let from = prev_toxic_end.unwrap_or(token.start);
            offsets.extend(from.min(token.start)..token.end);
            prev_toxic_end = Some(token.end);
        } else {
            prev_toxic_end = None;
        }
    }
    offsets.retain(|&o| o < len);
    SpanPrediction::new(seq.doc_id, offsets)
}

impl TrainedModel {
    /// Tokenized, cleaned and labeled by the model.
    pub fn label_text(
        &self,
        doc_id: usize,
        text: &str,
        force_last_active: bool,
    ) -> LabeledSequence {
        let mut tokens = clean(&tokenize(text), &self.cleaning);
        if force_last_active {
            if let Some(last) = tokens.last_mut() {
                last.text = ".".into();
                last.active = true;
            }
        }
        let n = tokens.len();
        let seq = LabeledSequence {
            doc_id,
            tokens,
            labels: vec![0; n],
            probs: None,
        };
        let probs =
            forward(&seq, &self.params, &self.labeler).expect("model shapes validated on load");
        threshold(&seq, probs, self.labeler.toxic_threshold)
    }

    pub fn predict_document(&self, doc: &Document) -> SpanPrediction {
        to_offsets(&self.label_text(doc.id, &doc.text, false), &doc.text)
    }

    /// Labels `text + " ."` so the appended full stop provides right
    /// context, then keeps only offsets inside the original text. The
    /// appended token is always fed to the model, whatever the cleaning.
    pub fn predict_with_fullstop(&self, doc: &Document) -> SpanPrediction {
        if doc.text.is_empty() {
            return SpanPrediction::new(doc.id, Vec::new());
        }
        let extended = format!("{} .", doc.text);
        to_offsets(&self.label_text(doc.id, &extended, true), &doc.text)
    }
}

pub fn predict_corpus(
    docs: &[Document],
    model: &TrainedModel,
    append_fullstop: bool,
    exec: Exec,
) -> Vec<SpanPrediction> {
    exec.map(docs, |doc| {
        if append_fullstop {
            model.predict_with_fullstop(doc)
        } else {
            model.predict_document(doc)
        }
    })
}

/// Character-level strict majority vote across systems. Output follows the
/// document order of the first system.
pub fn ensemble(systems: &[Vec<SpanPrediction>]) -> Result<Vec<SpanPrediction>> {
    let Some(first) = systems.first() else {
        return Err(Error::Config("ensemble needs at least one system".into()));
    };
    let reference: BTreeSet<usize> = first.iter().map(|p| p.doc_id).collect();
    let mut indexed = Vec::with_capacity(systems.len());
    for (k, sys) in systems.iter().enumerate() {
        let ids: BTreeSet<usize> = sys.iter().map(|p| p.doc_id).collect();
        if ids != reference || ids.len() != sys.len() {
            let missing: Vec<String> = reference
                .symmetric_difference(&ids)
                .map(|i| i.to_string())
                .collect();
            return Err(Error::MismatchedDocs(format!(
                "system {k} differs from system 0 on documents [{}]{}",
                missing.join(", "),
                if ids.len() != sys.len() {
                    " (duplicate ids)"
                } else {
                    ""
                }
            )));
        }
        indexed.push(
            sys.iter()
                .map(|p| (p.doc_id, p))
                .collect::<BTreeMap<_, _>>(),
        );
    }
    let n = systems.len();
    Ok(first
        .iter()
        .map(|p| {
            let mut votes: BTreeMap<usize, usize> = BTreeMap::new();
            for sys in &indexed {
                for &o in &sys[&p.doc_id].offsets {
                    *votes.entry(o).or_default() += 1;
                }
            }
            let offsets = votes
                .into_iter()
                .filter(|&(_, v)| 2 * v > n)
                .map(|(o, _)| o)
                .collect();
            SpanPrediction::new(p.doc_id, offsets)
        })
        .collect())
}

/// `<doc_id>\t[o1, o2, ...]` per line, ids ascending.
pub fn format_predictions(preds: &[SpanPrediction]) -> String {
    let mut sorted: Vec<&SpanPrediction> = preds.iter().collect();
    sorted.sort_by_key(|p| p.doc_id);
    let mut out = String::new();
    for p in sorted {
        let _ = writeln!(out, "{}\t{}", p.doc_id, format_offset_list(&p.offsets));
    }
    out
}

pub fn parse_predictions(source: &str) -> Result<Vec<SpanPrediction>> {
    let mut preds = Vec::new();
    for (lineno, line) in source.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |why: String| Error::Parse(format!("prediction line {}: {why}", lineno + 1));
        let (id, list) = line
            .split_once('\t')
            .ok_or_else(|| bad("missing tab".into()))?;
        let doc_id = id
            .trim()
            .parse()
            .map_err(|_| bad(format!("bad id {id:?}")))?;
        let offsets = parse_offset_list(list).map_err(bad)?;
        preds.push(SpanPrediction::new(doc_id, offsets));
    }
    Ok(preds)
}

pub fn write_predictions(path: impl AsRef<Path>, preds: &[SpanPrediction]) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, format_predictions(preds)).map_err(|e| Error::io(path, e))
}

pub fn read_predictions(path: impl AsRef<Path>) -> Result<Vec<SpanPrediction>> {
    let path = path.as_ref();
    let source = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_predictions(&source)
}
