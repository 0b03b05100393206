use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::eval::{token_f1, TokenScores};
use crate::loss::LossSelector;
use crate::textproc::LabeledSequence;

use super::optim::{AdamState, OptimizerConfig};
use super::{
    backward_encoded, forward_encoded, EncodedSequence, Gradients, LabelerConfig, LabelerParams,
};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainSchedule {
    pub epochs: usize,
    /// Sequences per optimizer step.
    pub batch_size: usize,
    /// Seeds the per-epoch shuffle.
    pub seed: u64,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        TrainSchedule {
            epochs: 10,
            batch_size: 1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev: TokenScores,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingLog {
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch whose parameters were returned.
    pub best_epoch: Option<usize>,
}

impl TrainingLog {
    /// Tab-separated, one row per epoch.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from(
            "epoch\ttrain_loss\tdev_token_precision\tdev_token_recall\tdev_token_f1\n",
        );
        for r in &self.epochs {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\n",
                r.epoch, r.train_loss, r.dev.precision, r.dev.recall, r.dev.f1
            ));
        }
        match self.best_epoch {
            Some(e) => out.push_str(&format!("best_epoch\t{e}\n")),
            None => out.push_str("best_epoch\tnone\n"),
        }
        out
    }
}

fn dev_scores(dev: &[EncodedSequence], params: &LabelerParams, cfg: &LabelerConfig) -> TokenScores {
    let mut pred = Vec::new();
    let mut gold = Vec::new();
    for seq in dev {
        let probs = forward_encoded(seq, params, cfg).probs;
        for (i, p) in probs.into_iter().enumerate() {
            pred.push((seq.active[i] && p >= cfg.toxic_threshold) as u8);
            gold.push(seq.labels[i]);
        }
    }
    token_f1(&pred, &gold).expect("aligned by construction")
}

/// Trains a fresh labeler and returns the parameters of the epoch with the
/// best dev token F1 (the last epoch when `dev` is empty).
pub fn train(
    train: &[LabeledSequence],
    dev: &[LabeledSequence],
    cfg: &LabelerConfig,
    opt: &OptimizerConfig,
    loss: &LossSelector,
    schedule: &TrainSchedule,
) -> Result<(LabelerParams, TrainingLog)> {
    cfg.validate()?;
    opt.validate()?;
    loss.validate()?;
    if train.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    if schedule.batch_size == 0 {
        return Err(Error::Config("batch_size must be >= 1".into()));
    }
    let encode = |seqs: &[LabeledSequence]| -> Vec<EncodedSequence> {
        seqs.iter().map(|s| EncodedSequence::new(s, cfg)).collect()
    };
    let train_enc = encode(train);
    let dev_enc = encode(dev);

    let mut params = LabelerParams::init(cfg);
    let mut state = AdamState::new(cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(schedule.seed);
    let mut order: Vec<usize> = (0..train_enc.len()).collect();
    let mut log = TrainingLog::default();
    let mut best: Option<(f64, LabelerParams)> = None;

    for epoch in 1..=schedule.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(schedule.batch_size) {
            let mut grads = Gradients::zeros(cfg);
            for &idx in batch {
                let seq = &train_enc[idx];
                let diverged = || Error::Diverged {
                    epoch,
                    doc_id: seq.doc_id,
                };
                // Rows read by this sequence must be current before the forward pass.
                state.sync_rows(&mut params, opt, seq.features.iter().flatten().copied());
                let (l, g) = backward_encoded(seq, &params, cfg, loss).map_err(|_| diverged())?;
                if !l.is_finite() {
                    return Err(diverged());
                }
                loss_sum += l;
                grads.add_assign(&g);
            }
            grads.scale(1.0 / batch.len() as f64);
            state.step_lazy(&mut params, &grads, opt);
        }
        state.sync(&mut params, opt);
        if !params.all_finite() {
            return Err(Error::Diverged {
                epoch,
                doc_id: train_enc[*order.last().unwrap()].doc_id,
            });
        }
        let scores = dev_scores(&dev_enc, &params, cfg);
        let improved = dev_enc.is_empty() || best.as_ref().is_none_or(|(f, _)| scores.f1 > *f);
        if improved {
            best = Some((scores.f1, params.clone()));
            log.best_epoch = Some(epoch);
        }
        log.epochs.push(EpochRecord {
            epoch,
            train_loss: loss_sum / train_enc.len() as f64,
            dev: scores,
        });
    }
    Ok((best.map_or(params, |(_, p)| p), log))
}
