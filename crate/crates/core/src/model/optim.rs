//! Adam with decoupled weight decay.
//!
//! Embedding rows are updated lazily: a row that receives no gradient is
//! brought up to date only when it is next touched or when the state is
//! synced. Rows whose moments are still zero only experience weight decay,
//! which is applied in closed form.

use crate::error::{Error, Result};

use super::{Gradients, LabelerConfig, LabelerParams};

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
    /// Parameter blocks excluded from weight decay.
    pub decay_exempt: Vec<String>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.01,
            decay_exempt: vec!["b1".into(), "b2".into()],
        }
    }
}

pub const PARAM_BLOCKS: [&str; 5] = ["embedding", "w1", "b1", "w2", "b2"];

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let in_unit = |x: f64| x > 0.0 && x < 1.0;
        if !in_unit(self.beta1) || !in_unit(self.beta2) {
            return Err(Error::Config("beta1 and beta2 must lie in (0, 1)".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be > 0".into()));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::Config("weight_decay must be >= 0".into()));
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return Err(Error::Config("epsilon must be > 0".into()));
        }
        if let Some(bad) = self
            .decay_exempt
            .iter()
            .find(|n| !PARAM_BLOCKS.contains(&n.as_str()))
        {
            return Err(Error::Config(format!("unknown parameter block {bad:?}")));
        }
        Ok(())
    }

    pub fn is_decay_exempt(&self, block: &str) -> bool {
        self.decay_exempt.iter().any(|n| n == block)
    }
}

/// First and second moments plus per-row bookkeeping for the embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub t: u64,
    pub m: LabelerParams,
    pub v: LabelerParams,
    /// Last step each embedding row was brought up to.
    row_step: Vec<u64>,
    /// Rows with any nonzero moment.
    row_live: Vec<bool>,
}

struct StepConsts {
    lr: f64,
    b1: f64,
    b2: f64,
    eps: f64,
    bias1: f64,
    bias2: f64,
}

impl StepConsts {
    fn new(cfg: &OptimizerConfig, t: u64) -> Self {
        let t = t.min(i32::MAX as u64) as i32;
        StepConsts {
            lr: cfg.learning_rate,
            b1: cfg.beta1,
            b2: cfg.beta2,
            eps: cfg.epsilon,
            bias1: 1.0 - cfg.beta1.powi(t),
            bias2: 1.0 - cfg.beta2.powi(t),
        }
    }

    #[inline]
    fn update(&self, p: &mut f64, g: f64, m: &mut f64, v: &mut f64, shrink: f64) {
        *m = self.b1 * *m + (1.0 - self.b1) * g;
        *v = self.b2 * *v + (1.0 - self.b2) * g * g;
        let m_hat = *m / self.bias1;
        let v_hat = *v / self.bias2;
        *p = *p * shrink - self.lr * m_hat / (v_hat.sqrt() + self.eps);
    }

    fn update_block(&self, p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64], shrink: f64) {
        for i in 0..p.len() {
            self.update(&mut p[i], g[i], &mut m[i], &mut v[i], shrink);
        }
    }
}

impl AdamState {
    pub fn new(cfg: &LabelerConfig) -> Self {
        AdamState {
            t: 0,
            m: LabelerParams::zeros(cfg),
            v: LabelerParams::zeros(cfg),
            row_step: vec![0; cfg.hash_buckets],
            row_live: vec![false; cfg.hash_buckets],
        }
    }

    fn shrink(cfg: &OptimizerConfig, block: &str) -> f64 {
        if cfg.is_decay_exempt(block) {
            1.0
        } else {
            1.0 - cfg.learning_rate * cfg.weight_decay
        }
    }

    fn catch_up_row(
        &mut self,
        params: &mut LabelerParams,
        cfg: &OptimizerConfig,
        row: usize,
        target: u64,
    ) {
        let from = self.row_step[row];
        if from >= target {
            return;
        }
        let d = params.embedding.len() / self.row_step.len();
        let range = row * d..(row + 1) * d;
        let shrink = Self::shrink(cfg, "embedding");
        if self.row_live[row] {
            let p = &mut params.embedding[range.clone()];
            let m = &mut self.m.embedding[range.clone()];
            let v = &mut self.v.embedding[range];
            for s in from + 1..=target {
                let c = StepConsts::new(cfg, s);
                for i in 0..d {
                    c.update(&mut p[i], 0.0, &mut m[i], &mut v[i], shrink);
                }
            }
        } else if shrink != 1.0 {
            let factor = shrink.powi((target - from).min(i32::MAX as u64) as i32);
            params.embedding[range]
                .iter_mut()
                .for_each(|x| *x *= factor);
        }
        self.row_step[row] = target;
    }

    fn update_row(
        &mut self,
        params: &mut LabelerParams,
        cfg: &OptimizerConfig,
        c: &StepConsts,
        row: usize,
        g: &[f64],
    ) {
        self.catch_up_row(params, cfg, row, self.t - 1);
        let d = g.len();
        let range = row * d..(row + 1) * d;
        c.update_block(
            &mut params.embedding[range.clone()],
            g,
            &mut self.m.embedding[range.clone()],
            &mut self.v.embedding[range.clone()],
            Self::shrink(cfg, "embedding"),
        );
        self.row_live[row] = self.m.embedding[range.clone()]
            .iter()
            .chain(&self.v.embedding[range])
            .any(|&x| x != 0.0);
        self.row_step[row] = self.t;
    }

    fn step_small_blocks(
        &mut self,
        params: &mut LabelerParams,
        grads: &Gradients,
        cfg: &OptimizerConfig,
        c: &StepConsts,
    ) {
        c.update_block(
            &mut params.w1,
            &grads.w1,
            &mut self.m.w1,
            &mut self.v.w1,
            Self::shrink(cfg, "w1"),
        );
        c.update_block(
            &mut params.b1,
            &grads.b1,
            &mut self.m.b1,
            &mut self.v.b1,
            Self::shrink(cfg, "b1"),
        );
        c.update_block(
            &mut params.w2,
            &grads.w2,
            &mut self.m.w2,
            &mut self.v.w2,
            Self::shrink(cfg, "w2"),
        );
        c.update(
            &mut params.b2,
            grads.b2,
            &mut self.m.b2,
            &mut self.v.b2,
            Self::shrink(cfg, "b2"),
        );
    }

    /// One optimizer step touching only the embedding rows present in
    /// `grads`. Call [`AdamState::sync`] before reading untouched rows.
    pub fn step_lazy(
        &mut self,
        params: &mut LabelerParams,
        grads: &Gradients,
        cfg: &OptimizerConfig,
    ) {
        self.t += 1;
        let c = StepConsts::new(cfg, self.t);
        self.step_small_blocks(params, grads, cfg, &c);
        for (&row, g) in &grads.embedding {
            self.update_row(params, cfg, &c, row as usize, g);
        }
    }

    /// Brings every embedding row up to the current step.
    pub fn sync(&mut self, params: &mut LabelerParams, cfg: &OptimizerConfig) {
        for row in 0..self.row_step.len() {
            self.catch_up_row(params, cfg, row, self.t);
        }
    }

    /// Brings only `rows` up to the current step.
    pub fn sync_rows(
        &mut self,
        params: &mut LabelerParams,
        cfg: &OptimizerConfig,
        rows: impl IntoIterator<Item = u32>,
    ) {
        for row in rows {
            self.catch_up_row(params, cfg, row as usize, self.t);
        }
    }
}

/// Dense optimizer step: every entry, including embedding rows without a
/// gradient, moves by one Adam update.
pub fn step(
    params: &mut LabelerParams,
    grads: &Gradients,
    state: &mut AdamState,
    cfg: &OptimizerConfig,
) {
    state.sync(params, cfg);
    state.t += 1;
    let c = StepConsts::new(cfg, state.t);
    state.step_small_blocks(params, grads, cfg, &c);
    let d = params.embedding.len() / state.row_step.len().max(1);
    let zero = vec![0.0; d];
    for row in 0..state.row_step.len() {
        let g = grads
            .embedding
            .get(&(row as u32))
            .map_or(zero.as_slice(), Vec::as_slice);
        state.update_row(params, cfg, &c, row, g);
    }
}
