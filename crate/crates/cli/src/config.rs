//! Flat `key = value` run configuration.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use toxspan::loss::{DiceLossConfig, LossSelector};
use toxspan::model::PARAM_BLOCKS;
use toxspan::textproc::ContractionTable;
use toxspan::{Error, Pipeline, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub pipeline: Pipeline,
    /// Contraction table file; `None` uses the bundled table.
    pub contraction_table: Option<PathBuf>,
    pub loss_kind: String,
    pub alpha: f64,
    pub gamma: f64,
    pub positive_class_weight: f64,
    pub ssl_iterations: usize,
    pub ssl_seed: u64,
    /// Recorded for the transformer presets; the surrogate labeler does not use them.
    pub max_len: Option<usize>,
    pub lowercase: Option<bool>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let dice = DiceLossConfig::default();
        RunConfig {
            pipeline: Pipeline::default(),
            contraction_table: None,
            loss_kind: "dice".into(),
            alpha: dice.alpha,
            gamma: dice.gamma,
            positive_class_weight: 1.0,
            ssl_iterations: 4,
            ssl_seed: 0,
            max_len: None,
            lowercase: None,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("bad value {value:?} for key {key:?}")))
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let p = &mut self.pipeline;
        match key {
            "embed_dim" => p.labeler.embed_dim = parse(key, value)?,
            "hidden_dim" => p.labeler.hidden_dim = parse(key, value)?,
            "window_radius" => p.labeler.window_radius = parse(key, value)?,
            "hash_buckets" => p.labeler.hash_buckets = parse(key, value)?,
            "char_ngram_n" => p.labeler.char_ngram_n = parse(key, value)?,
            "model_seed" => p.labeler.seed = parse(key, value)?,
            "toxic_threshold" => p.labeler.toxic_threshold = parse(key, value)?,
            "learning_rate" => p.optimizer.learning_rate = parse(key, value)?,
            "beta1" => p.optimizer.beta1 = parse(key, value)?,
            "beta2" => p.optimizer.beta2 = parse(key, value)?,
            "epsilon" => p.optimizer.epsilon = parse(key, value)?,
            "weight_decay" => p.optimizer.weight_decay = parse(key, value)?,
            "decay_exempt" => {
                p.optimizer.decay_exempt = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(String::from)
                    .collect()
            }
            "loss" => self.loss_kind = value.to_string(),
            "alpha" => self.alpha = parse(key, value)?,
            "gamma" => self.gamma = parse(key, value)?,
            "positive_class_weight" => self.positive_class_weight = parse(key, value)?,
            "expand_contractions" => p.cleaning.expand_contractions = parse(key, value)?,
            "remove_digits" => p.cleaning.remove_digits = parse(key, value)?,
            "remove_fullstops" => p.cleaning.remove_fullstops = parse(key, value)?,
            "contraction_table" => {
                self.contraction_table = (!value.is_empty()).then(|| PathBuf::from(value))
            }
            "epochs" => p.schedule.epochs = parse(key, value)?,
            "batch_size" => p.schedule.batch_size = parse(key, value)?,
            "shuffle_seed" => p.schedule.seed = parse(key, value)?,
            "ssl_iterations" => self.ssl_iterations = parse(key, value)?,
            "ssl_seed" => self.ssl_seed = parse(key, value)?,
            "max_len" => self.max_len = Some(parse(key, value)?),
            "lowercase" => self.lowercase = Some(parse(key, value)?),
            _ => return Err(Error::Config(format!("unknown configuration key {key:?}"))),
        }
        Ok(())
    }

    /// Applies every `key = value` line of `source` on top of `self`.
    pub fn apply_source(&mut self, source: &str) -> Result<()> {
        for (lineno, raw) in source.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("config line {}: expected key = value", lineno + 1))
            })?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let source = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let mut cfg = RunConfig::default();
        cfg.apply_source(&source)?;
        Ok(cfg)
    }

    /// Resolves derived settings and checks every value before any work starts.
    pub fn finalize(&mut self) -> Result<()> {
        self.pipeline.loss = match self.loss_kind.as_str() {
            "ce" => LossSelector::CrossEntropy,
            "wce" => LossSelector::WeightedCrossEntropy {
                positive_weight: self.positive_class_weight,
            },
            "dice" => LossSelector::Dice(DiceLossConfig {
                alpha: self.alpha,
                gamma: self.gamma,
            }),
            other => return Err(Error::Config(format!("unknown loss {other:?}"))),
        };
        self.pipeline.cleaning.contraction_table = match &self.contraction_table {
            Some(path) => ContractionTable::load(path)?,
            None => ContractionTable::default(),
        };
        if self.pipeline.schedule.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if self
            .pipeline
            .optimizer
            .decay_exempt
            .iter()
            .any(|b| !PARAM_BLOCKS.contains(&b.as_str()))
        {
            return Err(Error::Config(format!(
                "decay_exempt must name blocks among {PARAM_BLOCKS:?}"
            )));
        }
        self.pipeline.validate()
    }

    /// Every effective key, in a form [`RunConfig::apply_source`] reads back.
    pub fn dump(&self) -> String {
        let p = &self.pipeline;
        let mut out = String::from("# effective configuration\n");
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        kv("embed_dim", p.labeler.embed_dim.to_string());
        kv("hidden_dim", p.labeler.hidden_dim.to_string());
        kv("window_radius", p.labeler.window_radius.to_string());
        kv("hash_buckets", p.labeler.hash_buckets.to_string());
        kv("char_ngram_n", p.labeler.char_ngram_n.to_string());
        kv("model_seed", p.labeler.seed.to_string());
        kv("toxic_threshold", p.labeler.toxic_threshold.to_string());
        kv("learning_rate", p.optimizer.learning_rate.to_string());
        kv("beta1", p.optimizer.beta1.to_string());
        kv("beta2", p.optimizer.beta2.to_string());
        kv("epsilon", p.optimizer.epsilon.to_string());
        kv("weight_decay", p.optimizer.weight_decay.to_string());
        kv("decay_exempt", p.optimizer.decay_exempt.join(","));
        kv("loss", self.loss_kind.clone());
        kv("alpha", self.alpha.to_string());
        kv("gamma", self.gamma.to_string());
        kv(
            "positive_class_weight",
            self.positive_class_weight.to_string(),
        );
        kv(
            "expand_contractions",
            p.cleaning.expand_contractions.to_string(),
        );
        kv("remove_digits", p.cleaning.remove_digits.to_string());
        kv("remove_fullstops", p.cleaning.remove_fullstops.to_string());
        kv(
            "contraction_table",
            self.contraction_table
                .as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_default(),
        );
        kv("epochs", p.schedule.epochs.to_string());
        kv("batch_size", p.schedule.batch_size.to_string());
        kv("shuffle_seed", p.schedule.seed.to_string());
        kv("ssl_iterations", self.ssl_iterations.to_string());
        kv("ssl_seed", self.ssl_seed.to_string());
        if let Some(v) = self.max_len {
            kv("max_len", v.to_string());
        }
        if let Some(v) = self.lowercase {
            kv("lowercase", v.to_string());
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_overrides() {
        let mut cfg = RunConfig::default();
        cfg.apply_source("# preset\nloss = ce   # trailing\n\nepochs=3\nalpha = 0.4\n")
            .unwrap();
        cfg.finalize().unwrap();
        assert_eq!(cfg.pipeline.loss, LossSelector::CrossEntropy);
        assert_eq!(cfg.pipeline.schedule.epochs, 3);
        assert_eq!(cfg.alpha, 0.4);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        let mut cfg = RunConfig::default();
        assert!(cfg.apply_source("embedding_size = 3").is_err());
        assert!(cfg.apply_source("epochs = many").is_err());
        assert!(cfg.apply_source("no equals sign").is_err());
        let mut cfg = RunConfig::default();
        cfg.set("gamma", "0").unwrap();
        assert!(cfg.finalize().is_err());
        let mut cfg = RunConfig::default();
        cfg.set("loss", "hinge").unwrap();
        assert!(cfg.finalize().is_err());
        let mut cfg = RunConfig::default();
        cfg.set("decay_exempt", "b1,bias").unwrap();
        assert!(cfg.finalize().is_err());
    }

    #[test]
    fn dump_round_trips() {
        let mut cfg = RunConfig::default();
        cfg.apply_source(
            "loss = wce\npositive_class_weight = 3.5\nlearning_rate = 1e-5\nmax_len = 500\nlowercase = true\nremove_digits = false\ndecay_exempt = b1\n",
        )
        .unwrap();
        cfg.finalize().unwrap();
        let mut back = RunConfig::default();
        back.apply_source(&cfg.dump()).unwrap();
        back.finalize().unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.dump(), cfg.dump());
    }
}
