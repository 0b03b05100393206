//! Self-training: the pool is cut into disjoint batches, and each iteration
//! pseudo-labels its batch with the previous model before training a fresh
//! model on gold plus pseudo-labeled sequences.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::Document;
use crate::error::{Error, Result};
use crate::eval::corpus_span_f1;
use crate::model::{predict, TrainedModel, TrainingLog};
use crate::par::Exec;
use crate::pipeline::Pipeline;
use crate::spans::predict_corpus;
use crate::textproc::{prepare, LabeledSequence};

/// Shuffles the pool and cuts it into `k` contiguous batches; the last batch
/// absorbs the remainder.
pub fn partition_pool(pool: &[Document], k: usize, seed: u64) -> Result<Vec<Vec<Document>>> {
    if pool.len() < k {
        return Err(Error::Config(format!(
            "pool of {} documents cannot fill {k} batches",
            pool.len()
        )));
    }
    if k == 0 {
        return Ok(Vec::new());
    }
    let mut order: Vec<usize> = (0..pool.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let size = pool.len() / k;
    Ok((0..k)
        .map(|b| {
            let end = if b + 1 == k {
                pool.len()
            } else {
                (b + 1) * size
            };
            order[b * size..end]
                .iter()
                .map(|&i| pool[i].clone())
                .collect()
        })
        .collect())
}

/// Labels every document of `batch` with `model`; nothing is filtered.
pub fn pseudo_label(batch: &[Document], model: &TrainedModel) -> Vec<LabeledSequence> {
    Exec::Parallel.map(batch, |doc| {
        let seq = prepare(
            &Document::unlabeled(doc.id, doc.text.clone()),
            &model.cleaning,
        );
        let mut out = predict(&seq, &model.params, &model.labeler).expect("model shapes validated");
        out.probs = None;
        out
    })
}

#[derive(Debug, Clone)]
pub struct SslPlan {
    pub iterations: usize,
    pub pool: Vec<Document>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SslIteration {
    pub iteration: usize,
    pub dev_span_f1: f64,
    pub pseudo_docs: usize,
    pub pseudo_toxic_tokens: usize,
    /// Pool ids consumed by this iteration.
    pub consumed: Vec<usize>,
    pub training: TrainingLog,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SslLog {
    pub baseline_dev_span_f1: f64,
    pub iterations: Vec<SslIteration>,
}

impl SslLog {
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("iteration\tdev_span_f1\tpseudo_docs\tpseudo_toxic_tokens\n");
        out.push_str(&format!("0\t{}\t0\t0\n", self.baseline_dev_span_f1));
        for it in &self.iterations {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\n",
                it.iteration, it.dev_span_f1, it.pseudo_docs, it.pseudo_toxic_tokens
            ));
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct SslOutcome {
    pub baseline: TrainedModel,
    pub model: TrainedModel,
    pub log: SslLog,
}

pub fn run_ssl(
    plan: &SslPlan,
    pipeline: &Pipeline,
    base_train: &[Document],
    dev: &[Document],
) -> Result<SslOutcome> {
    pipeline.validate()?;
    let batches = partition_pool(&plan.pool, plan.iterations, plan.seed)?;
    let gold_train = pipeline.prepare(base_train);
    let dev_seqs = pipeline.prepare(dev);
    let dev_f1 = |model: &TrainedModel| -> Result<f64> {
        if dev.is_empty() {
            return Ok(0.0);
        }
        corpus_span_f1(&predict_corpus(dev, model, false, Exec::Parallel), dev)
    };

    let (baseline, _) = pipeline
        .fit_sequences(&gold_train, &dev_seqs)
        .map_err(|e| Error::Iteration {
            iteration: 0,
            source: Box::new(e),
        })?;
    let mut log = SslLog {
        baseline_dev_span_f1: dev_f1(&baseline)?,
        iterations: Vec::with_capacity(batches.len()),
    };
    let mut current = baseline.clone();
    for (i, batch) in batches.iter().enumerate() {
        let iteration = i + 1;
        let pseudo = pseudo_label(batch, &current);
        let pseudo_toxic_tokens = pseudo
            .iter()
            .map(|s| s.labels.iter().filter(|&&l| l == 1).count())
            .sum();
        let mut train_seqs = gold_train.clone();
        train_seqs.extend(pseudo);
        let (model, training) = pipeline
            .fit_sequences(&train_seqs, &dev_seqs)
            .map_err(|e| Error::Iteration {
                iteration,
                source: Box::new(e),
            })?;
        log.iterations.push(SslIteration {
            iteration,
            dev_span_f1: dev_f1(&model)?,
            pseudo_docs: batch.len(),
            pseudo_toxic_tokens,
            consumed: batch.iter().map(|d| d.id).collect(),
            training,
        });
        current = model;
    }
    Ok(SslOutcome {
        baseline,
        model: current,
        log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{LabelerConfig, LabelerParams};
    use crate::textproc::CleaningConfig;

    fn pool(n: usize) -> Vec<Document> {
        (0..n)
            .map(|i| Document::unlabeled(i, format!("pool text {i}")))
            .collect()
    }

    #[test]
    fn partition_sizes() {
        let sizes = |n, k| {
            partition_pool(&pool(n), k, 1)
                .unwrap()
                .iter()
                .map(Vec::len)
                .collect::<Vec<_>>()
        };
        assert_eq!(sizes(40000, 4), vec![10000; 4]);
        assert_eq!(sizes(10, 4), vec![2, 2, 2, 4]);
        assert!(partition_pool(&pool(3), 4, 0).is_err());
        assert!(partition_pool(&pool(3), 0, 0).unwrap().is_empty());
    }

    #[test]
    fn partition_is_exhaustive_disjoint_and_seeded() {
        let p = pool(101);
        let a = partition_pool(&p, 4, 7).unwrap();
        assert_eq!(a, partition_pool(&p, 4, 7).unwrap());
        let mut ids: Vec<usize> = a.iter().flatten().map(|d| d.id).collect();
        ids.sort_unstable();
        assert_eq!(ids, (0..101).collect::<Vec<_>>());
    }

    fn zero_model() -> TrainedModel {
        let labeler = LabelerConfig {
            embed_dim: 2,
            hidden_dim: 2,
            hash_buckets: 13,
            ..LabelerConfig::default()
        };
        TrainedModel {
            params: LabelerParams::zeros(&labeler),
            labeler,
            cleaning: CleaningConfig::default(),
        }
    }

    #[test]
    fn zero_model_pseudo_labels_everything_active() {
        let m = zero_model();
        let out = pseudo_label(&[Document::unlabeled(0, "you are 12 idiots .")], &m);
        assert_eq!(out[0].labels, vec![1, 1, 0, 1, 0]);
        assert!(pseudo_label(&[], &m).is_empty());
    }

    #[test]
    fn pseudo_labels_equal_predict() {
        let mut m = zero_model();
        m.params = LabelerParams::init(&m.labeler);
        let docs: Vec<Document> = (0..5)
            .map(|i| Document::unlabeled(i, format!("what a stupid {i} idea, honestly")))
            .collect();
        let out = pseudo_label(&docs, &m);
        for (doc, seq) in docs.iter().zip(&out) {
            let want = predict(&prepare(doc, &m.cleaning), &m.params, &m.labeler).unwrap();
            assert_eq!(seq.labels, want.labels);
        }
    }
}
