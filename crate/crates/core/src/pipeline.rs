//! Every knob needed to go from raw documents to a trained model.

use crate::corpus::Document;
use crate::error::Result;
use crate::loss::LossSelector;
use crate::model::{
    train, LabelerConfig, OptimizerConfig, TrainSchedule, TrainedModel, TrainingLog,
};
use crate::par::Exec;
use crate::textproc::{prepare, CleaningConfig, LabeledSequence};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Pipeline {
    pub labeler: LabelerConfig,
    pub cleaning: CleaningConfig,
    pub optimizer: OptimizerConfig,
    pub loss: LossSelector,
    pub schedule: TrainSchedule,
}

impl Pipeline {
    pub fn validate(&self) -> Result<()> {
        self.labeler.validate()?;
        self.optimizer.validate()?;
        self.loss.validate()
    }

    pub fn prepare(&self, docs: &[Document]) -> Vec<LabeledSequence> {
        Exec::Parallel.map(docs, |d| prepare(d, &self.cleaning))
    }

    pub fn fit_sequences(
        &self,
        train_seqs: &[LabeledSequence],
        dev_seqs: &[LabeledSequence],
    ) -> Result<(TrainedModel, TrainingLog)> {
        let (params, log) = train(
            train_seqs,
            dev_seqs,
            &self.labeler,
            &self.optimizer,
            &self.loss,
            &self.schedule,
        )?;
        Ok((
            TrainedModel {
                labeler: self.labeler.clone(),
                cleaning: self.cleaning.clone(),
                params,
            },
            log,
        ))
    }

    pub fn fit(&self, train: &[Document], dev: &[Document]) -> Result<(TrainedModel, TrainingLog)> {
        self.fit_sequences(&self.prepare(train), &self.prepare(dev))
    }
}
