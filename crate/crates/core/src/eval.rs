//! Span-level and token-level scoring, empty/non-empty breakdowns and the
//! preprocessing ablation harness.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::corpus::Document;
use crate::error::{Error, Result};
use crate::par::Exec;
use crate::pipeline::Pipeline;
use crate::spans::{predict_corpus, SpanPrediction};
use crate::textproc::{project_gold, tokenize};

/// Per-document F1 between predicted and gold offset sets (both sorted and
/// deduplicated). Two empty sets score 1; exactly one empty set scores 0.
pub fn span_f1(pred: &[usize], gold: &[usize]) -> f64 {
    match (pred.is_empty(), gold.is_empty()) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    let (mut i, mut j, mut common) = (0, 0, 0usize);
    while i < pred.len() && j < gold.len() {
        match pred[i].cmp(&gold[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                common += 1;
                i += 1;
                j += 1;
            }
        }
    }
    2.0 * common as f64 / (pred.len() + gold.len()) as f64
}

fn align<'a>(preds: &'a [SpanPrediction], golds: &[Document]) -> Result<Vec<&'a SpanPrediction>> {
    let by_id: HashMap<usize, &SpanPrediction> = preds.iter().map(|p| (p.doc_id, p)).collect();
    let missing: Vec<String> = golds
        .iter()
        .filter(|g| !by_id.contains_key(&g.id))
        .map(|g| g.id.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MismatchedDocs(format!(
            "no prediction for documents {}",
            missing.join(", ")
        )));
    }
    Ok(golds.iter().map(|g| by_id[&g.id]).collect())
}

/// Mean of per-document span F1, matching predictions to gold by id.
pub fn corpus_span_f1(preds: &[SpanPrediction], golds: &[Document]) -> Result<f64> {
    if golds.is_empty() {
        return Err(Error::MismatchedDocs("no gold documents".into()));
    }
    let aligned = align(preds, golds)?;
    let total: f64 = aligned
        .iter()
        .zip(golds)
        .map(|(p, g)| span_f1(&p.offsets, g.gold()))
        .sum();
    Ok(total / golds.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TokenScores {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Binary micro scores with the toxic class as positive.
pub fn token_f1(pred: &[u8], gold: &[u8]) -> Result<TokenScores> {
    if pred.len() != gold.len() {
        return Err(Error::MismatchedDocs(format!(
            "{} predicted labels vs {} gold labels",
            pred.len(),
            gold.len()
        )));
    }
    let mut s = TokenScores::default();
    for (&p, &g) in pred.iter().zip(gold) {
        match (p != 0, g != 0) {
            (true, true) => s.tp += 1,
            (true, false) => s.fp += 1,
            (false, true) => s.fn_ += 1,
            (false, false) => {}
        }
    }
    if s.tp + s.fp + s.fn_ == 0 {
        s.f1 = 1.0;
        return Ok(s);
    }
    s.precision = if s.tp + s.fp > 0 {
        s.tp as f64 / (s.tp + s.fp) as f64
    } else {
        0.0
    };
    s.recall = if s.tp + s.fn_ > 0 {
        s.tp as f64 / (s.tp + s.fn_) as f64
    } else {
        0.0
    };
    s.f1 = if s.precision > 0.0 && s.recall > 0.0 {
        2.0 * s.precision * s.recall / (s.precision + s.recall)
    } else {
        0.0
    };
    Ok(s)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BucketRow {
    pub name: &'static str,
    pub n_docs: usize,
    /// `None` for an empty bucket.
    pub mean_f1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub n_docs: usize,
    pub mean_span_f1: f64,
    /// Empty-gold (`E.S`) then non-empty-gold (`N.E.S`).
    pub buckets: Vec<BucketRow>,
    pub token: TokenScores,
}

impl EvalReport {
    /// `metric<TAB>bucket<TAB>value` lines.
    pub fn to_lines(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "span_f1\tall\t{}", self.mean_span_f1);
        let _ = writeln!(out, "docs\tall\t{}", self.n_docs);
        for b in &self.buckets {
            match b.mean_f1 {
                Some(f) => {
                    let _ = writeln!(out, "span_f1\t{}\t{f}", b.name);
                }
                None => {
                    let _ = writeln!(out, "span_f1\t{}\tnan", b.name);
                }
            }
            let _ = writeln!(out, "docs\t{}\t{}", b.name, b.n_docs);
        }
        let _ = writeln!(out, "token_precision\tall\t{}", self.token.precision);
        let _ = writeln!(out, "token_recall\tall\t{}", self.token.recall);
        let _ = writeln!(out, "token_f1\tall\t{}", self.token.f1);
        out
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<8} {:>7} {:>9}", "bucket", "docs", "span_f1");
        let row = |name: &str, n: usize, f: Option<f64>| {
            let f = f.map_or_else(|| "n/a".to_string(), |f| format!("{f:.4}"));
            format!("{name:<8} {n:>7} {f:>9}\n")
        };
        for b in &self.buckets {
            out.push_str(&row(b.name, b.n_docs, b.mean_f1));
        }
        out.push_str(&row("all", self.n_docs, Some(self.mean_span_f1)));
        let _ = writeln!(
            out,
            "token-level  P={:.4}  R={:.4}  F1={:.4}",
            self.token.precision, self.token.recall, self.token.f1
        );
        out
    }
}

/// Splits scores by whether the gold span set is empty. Token scores come
/// from projecting both offset sets onto raw whitespace/punctuation tokens.
pub fn breakdown(preds: &[SpanPrediction], golds: &[Document]) -> Result<EvalReport> {
    let mean_span_f1 = corpus_span_f1(preds, golds)?;
    let aligned = align(preds, golds)?;
    let mut sums = [(0usize, 0.0f64); 2];
    let mut pred_labels = Vec::new();
    let mut gold_labels = Vec::new();
    for (p, g) in aligned.iter().zip(golds) {
        let bucket = &mut sums[usize::from(!g.gold().is_empty())];
        bucket.0 += 1;
        bucket.1 += span_f1(&p.offsets, g.gold());

        let tokens = tokenize(&g.text);
        let pred_doc = Document::new(g.id, g.text.clone(), p.offsets.clone())
            .map_err(|_| Error::MismatchedDocs(format!("prediction for {} out of range", g.id)))?;
        gold_labels.extend(project_gold(g, tokens.clone()).labels);
        pred_labels.extend(project_gold(&pred_doc, tokens).labels);
    }
    let bucket = |name, (n, sum): (usize, f64)| BucketRow {
        name,
        n_docs: n,
        mean_f1: (n > 0).then(|| sum / n as f64),
    };
    Ok(EvalReport {
        n_docs: golds.len(),
        mean_span_f1,
        buckets: vec![bucket("E.S", sums[0]), bucket("N.E.S", sums[1])],
        token: token_f1(&pred_labels, &gold_labels)?,
    })
}

/// Preprocessing variants: all cleaning on, or one operation switched off.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    /// All preprocessing steps.
    Td,
    /// Digits kept.
    Wnum,
    /// Full stops kept.
    Wfs,
    /// Contractions left unexpanded.
    Wcon,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Td, Variant::Wnum, Variant::Wfs, Variant::Wcon];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Td => "TD",
            Variant::Wnum => "WNUM",
            Variant::Wfs => "WFS",
            Variant::Wcon => "WCON",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Config(format!("unknown ablation variant {s:?}")))
    }

    /// Applies this variant to a pipeline whose cleaning is fully on.
    pub fn apply(self, pipeline: &Pipeline) -> Pipeline {
        let mut p = pipeline.clone();
        p.cleaning.expand_contractions = true;
        p.cleaning.remove_digits = true;
        p.cleaning.remove_fullstops = true;
        match self {
            Variant::Td => {}
            Variant::Wnum => p.cleaning.remove_digits = false,
            Variant::Wfs => p.cleaning.remove_fullstops = false,
            Variant::Wcon => p.cleaning.expand_contractions = false,
        }
        p
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationTable {
    pub rows: Vec<(Variant, f64)>,
}

impl AblationTable {
    pub fn to_table(&self) -> String {
        let mut out = format!("{:<8} {:>11}\n", "variant", "dev_span_f1");
        for (v, f) in &self.rows {
            let _ = writeln!(out, "{:<8} {:>11.4}", v.name(), f);
        }
        out
    }

    pub fn to_lines(&self) -> String {
        self.rows
            .iter()
            .map(|(v, f)| format!("span_f1\t{}\t{f}\n", v.name()))
            .collect()
    }
}

/// Trains one model per variant, sequentially, and scores each on `dev`.
pub fn ablate(
    train: &[Document],
    dev: &[Document],
    variants: &[Variant],
    pipeline: &Pipeline,
) -> Result<AblationTable> {
    let mut rows = Vec::with_capacity(variants.len());
    for &variant in variants {
        let p = variant.apply(pipeline);
        let (model, _) = p.fit(train, dev)?;
        let preds = predict_corpus(dev, &model, false, Exec::Parallel);
        rows.push((variant, corpus_span_f1(&preds, dev)?));
    }
    Ok(AblationTable { rows })
}
