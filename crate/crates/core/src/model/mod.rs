//! Windowed feed-forward token labeler over hashed character n-gram
//! features, with hand-written forward and backward passes.

mod io;
mod optim;
mod train;

pub use io::TrainedModel;
pub use optim::{step, AdamState, OptimizerConfig, PARAM_BLOCKS};
pub use train::{train, EpochRecord, TrainSchedule, TrainingLog};

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::loss::LossSelector;
use crate::textproc::LabeledSequence;

#[derive(Debug, Clone, PartialEq)]
pub struct LabelerConfig {
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub window_radius: usize,
    pub hash_buckets: usize,
    pub char_ngram_n: usize,
    pub seed: u64,
    pub toxic_threshold: f64,
}

impl Default for LabelerConfig {
    fn default() -> Self {
        LabelerConfig {
            embed_dim: 32,
            hidden_dim: 64,
            window_radius: 2,
            hash_buckets: 65536,
            char_ngram_n: 3,
            seed: 0,
            toxic_threshold: 0.5,
        }
    }
}

impl LabelerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.embed_dim == 0 || self.hidden_dim == 0 || self.hash_buckets == 0 {
            return Err(Error::Config(
                "embed_dim, hidden_dim and hash_buckets must be >= 1".into(),
            ));
        }
        if self.hash_buckets > u32::MAX as usize {
            return Err(Error::Config("hash_buckets must fit in 32 bits".into()));
        }
        if self.char_ngram_n == 0 {
            return Err(Error::Config("char_ngram_n must be >= 1".into()));
        }
        if !(self.toxic_threshold > 0.0 && self.toxic_threshold < 1.0) {
            return Err(Error::Config(format!(
                "toxic_threshold must lie in (0, 1), got {}",
                self.toxic_threshold
            )));
        }
        Ok(())
    }

    /// Width of the concatenated context window.
    pub fn input_dim(&self) -> usize {
        (2 * self.window_radius + 1) * self.embed_dim
    }
}

/// FNV-1a, 64 bit, over the UTF-8 bytes of `s`.
pub fn fnv1a64(s: &str) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    s.bytes()
        .fold(OFFSET, |h, b| (h ^ u64::from(b)).wrapping_mul(PRIME))
}

/// Sorted, deduplicated bucket ids: the lowercased token plus every
/// character n-gram of `^token$`, each hashed with [`fnv1a64`] mod B.
pub fn featurize(token_text: &str, cfg: &LabelerConfig) -> Vec<u32> {
    let buckets = cfg.hash_buckets as u64;
    let mut ids = vec![(fnv1a64(&token_text.to_lowercase()) % buckets) as u32];
    let marked: Vec<char> = std::iter::once('^')
        .chain(token_text.chars())
        .chain(std::iter::once('$'))
        .collect();
    let mut gram = String::new();
    for window in marked.windows(cfg.char_ngram_n) {
        gram.clear();
        gram.extend(window);
        ids.push((fnv1a64(&gram) % buckets) as u32);
    }
    ids.sort_unstable();
    ids.dedup();
    ids
}

/// Trainable arrays. Matrices are row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelerParams {
    /// `hash_buckets x embed_dim`
    pub embedding: Vec<f64>,
    /// `hidden_dim x input_dim`
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
}

impl LabelerParams {
    pub fn zeros(cfg: &LabelerConfig) -> Self {
        LabelerParams {
            embedding: vec![0.0; cfg.hash_buckets * cfg.embed_dim],
            w1: vec![0.0; cfg.hidden_dim * cfg.input_dim()],
            b1: vec![0.0; cfg.hidden_dim],
            w2: vec![0.0; cfg.hidden_dim],
            b2: 0.0,
        }
    }

    /// Weights uniform in [-0.05, 0.05] from `cfg.seed`; biases zero.
    pub fn init(cfg: &LabelerConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut params = Self::zeros(cfg);
        for x in params
            .embedding
            .iter_mut()
            .chain(params.w1.iter_mut())
            .chain(params.w2.iter_mut())
        {
            *x = rng.gen_range(-0.05..=0.05);
        }
        params
    }

    pub fn check_shapes(&self, cfg: &LabelerConfig) -> Result<()> {
        let expect = [
            (
                "embedding",
                self.embedding.len(),
                cfg.hash_buckets * cfg.embed_dim,
            ),
            ("w1", self.w1.len(), cfg.hidden_dim * cfg.input_dim()),
            ("b1", self.b1.len(), cfg.hidden_dim),
            ("w2", self.w2.len(), cfg.hidden_dim),
        ];
        for (name, got, want) in expect {
            if got != want {
                return Err(Error::Config(format!(
                    "parameter {name} has {got} entries, configuration expects {want}"
                )));
            }
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.embedding
            .iter()
            .chain(&self.w1)
            .chain(&self.b1)
            .chain(&self.w2)
            .all(|x| x.is_finite())
            && self.b2.is_finite()
    }
}

/// Gradients shaped like [`LabelerParams`]; embedding rows are stored
/// sparsely since a sequence touches only a handful of buckets.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Gradients {
    pub embedding: BTreeMap<u32, Vec<f64>>,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
}

impl Gradients {
    pub fn zeros(cfg: &LabelerConfig) -> Self {
        Gradients {
            embedding: BTreeMap::new(),
            w1: vec![0.0; cfg.hidden_dim * cfg.input_dim()],
            b1: vec![0.0; cfg.hidden_dim],
            w2: vec![0.0; cfg.hidden_dim],
            b2: 0.0,
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (&row, g) in &other.embedding {
            let dst = self
                .embedding
                .entry(row)
                .or_insert_with(|| vec![0.0; g.len()]);
            dst.iter_mut().zip(g).for_each(|(a, b)| *a += b);
        }
        add(&mut self.w1, &other.w1);
        add(&mut self.b1, &other.b1);
        add(&mut self.w2, &other.w2);
        self.b2 += other.b2;
    }

    pub fn scale(&mut self, factor: f64) {
        self.embedding
            .values_mut()
            .flat_map(|r| r.iter_mut())
            .chain(self.w1.iter_mut())
            .chain(self.b1.iter_mut())
            .chain(self.w2.iter_mut())
            .for_each(|x| *x *= factor);
        self.b2 *= factor;
    }

    /// Expands the embedding gradient to a full `hash_buckets x embed_dim` array.
    pub fn dense_embedding(&self, cfg: &LabelerConfig) -> Vec<f64> {
        let d = cfg.embed_dim;
        let mut out = vec![0.0; cfg.hash_buckets * d];
        for (&row, g) in &self.embedding {
            out[row as usize * d..(row as usize + 1) * d].copy_from_slice(g);
        }
        out
    }
}

fn add(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(a, b)| *a += b);
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// A sequence with features precomputed; inactive tokens carry no features.
#[derive(Debug, Clone)]
pub struct EncodedSequence {
    pub doc_id: usize,
    pub features: Vec<Vec<u32>>,
    pub active: Vec<bool>,
    pub labels: Vec<u8>,
}

impl EncodedSequence {
    pub fn new(seq: &LabeledSequence, cfg: &LabelerConfig) -> Self {
        EncodedSequence {
            doc_id: seq.doc_id,
            features: seq
                .tokens
                .iter()
                .map(|t| {
                    if t.active {
                        featurize(&t.text, cfg)
                    } else {
                        Vec::new()
                    }
                })
                .collect(),
            active: seq.tokens.iter().map(|t| t.active).collect(),
            labels: seq.labels.clone(),
        }
    }

    pub fn len(&self) -> usize {
        self.active.len()
    }

    pub fn is_empty(&self) -> bool {
        self.active.is_empty()
    }

    pub fn n_active(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }
}

/// Intermediate values of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Mean feature embedding per token (`n x d`, zero for inactive tokens).
    pub embedded: Vec<f64>,
    /// Hidden pre-activations (`n x h`, zero for inactive tokens).
    pub pre_activations: Vec<f64>,
    pub hidden: Vec<f64>,
    pub probs: Vec<f64>,
}

fn embed(seq: &EncodedSequence, params: &LabelerParams, d: usize) -> Vec<f64> {
    let mut out = vec![0.0; seq.len() * d];
    for (i, feats) in seq.features.iter().enumerate() {
        if !seq.active[i] || feats.is_empty() {
            continue;
        }
        let dst = &mut out[i * d..(i + 1) * d];
        for &f in feats {
            add(dst, &params.embedding[f as usize * d..(f as usize + 1) * d]);
        }
        let inv = 1.0 / feats.len() as f64;
        dst.iter_mut().for_each(|x| *x *= inv);
    }
    out
}

/// Context window for token `i`: embeddings of tokens `i-w ..= i+w`, zero
/// beyond the ends of the sequence (inactive tokens already embed to zero).
fn window(embedded: &[f64], n: usize, i: usize, cfg: &LabelerConfig, out: &mut [f64]) {
    let d = cfg.embed_dim;
    let w = cfg.window_radius;
    for k in 0..=2 * w {
        let dst = &mut out[k * d..(k + 1) * d];
        match (i + k).checked_sub(w) {
            Some(j) if j < n => dst.copy_from_slice(&embedded[j * d..(j + 1) * d]),
            _ => dst.fill(0.0),
        }
    }
}

pub fn forward_encoded(
    seq: &EncodedSequence,
    params: &LabelerParams,
    cfg: &LabelerConfig,
) -> ForwardCache {
    let (d, h, n) = (cfg.embed_dim, cfg.hidden_dim, seq.len());
    let input_dim = cfg.input_dim();
    let embedded = embed(seq, params, d);
    let mut pre = vec![0.0; n * h];
    let mut hidden = vec![0.0; n * h];
    let mut probs = vec![0.0; n];
    let mut x = vec![0.0; input_dim];
    for i in 0..n {
        if !seq.active[i] {
            continue;
        }
        window(&embedded, n, i, cfg, &mut x);
        let mut z = params.b2;
        for u in 0..h {
            let row = &params.w1[u * input_dim..(u + 1) * input_dim];
            let a = params.b1[u] + row.iter().zip(&x).map(|(w, v)| w * v).sum::<f64>();
            pre[i * h + u] = a;
            let r = a.max(0.0);
            hidden[i * h + u] = r;
            z += params.w2[u] * r;
        }
        probs[i] = sigmoid(z);
    }
    ForwardCache {
        embedded,
        pre_activations: pre,
        hidden,
        probs,
    }
}

/// Toxic probability per token; exactly zero for inactive tokens.
pub fn forward(
    seq: &LabeledSequence,
    params: &LabelerParams,
    cfg: &LabelerConfig,
) -> Result<Vec<f64>> {
    params.check_shapes(cfg)?;
    Ok(forward_encoded(&EncodedSequence::new(seq, cfg), params, cfg).probs)
}

/// Mean loss over active tokens plus its exact gradient.
pub fn backward_encoded(
    seq: &EncodedSequence,
    params: &LabelerParams,
    cfg: &LabelerConfig,
    loss: &LossSelector,
) -> Result<(f64, Gradients)> {
    let (d, h, n) = (cfg.embed_dim, cfg.hidden_dim, seq.len());
    let input_dim = cfg.input_dim();
    let w = cfg.window_radius;
    let mut grads = Gradients::zeros(cfg);
    let n_active = seq.n_active();
    if n_active == 0 {
        return Ok((0.0, grads));
    }
    let cache = forward_encoded(seq, params, cfg);
    let scale = 1.0 / n_active as f64;
    let mut total = 0.0;
    let mut d_embedded = vec![0.0; n * d];
    let mut x = vec![0.0; input_dim];
    let mut dx = vec![0.0; input_dim];
    for i in 0..n {
        if !seq.active[i] {
            continue;
        }
        let p = cache.probs[i];
        let (l, dl_dp) = loss.eval(p, seq.labels[i])?;
        total += l;
        let dz = scale * dl_dp * p * (1.0 - p);
        grads.b2 += dz;
        window(&cache.embedded, n, i, cfg, &mut x);
        dx.fill(0.0);
        for u in 0..h {
            grads.w2[u] += dz * cache.hidden[i * h + u];
            if cache.pre_activations[i * h + u] <= 0.0 {
                continue;
            }
            let da = dz * params.w2[u];
            grads.b1[u] += da;
            let row = &params.w1[u * input_dim..(u + 1) * input_dim];
            let grow = &mut grads.w1[u * input_dim..(u + 1) * input_dim];
            for k in 0..input_dim {
                grow[k] += da * x[k];
                dx[k] += da * row[k];
            }
        }
        for k in 0..=2 * w {
            if let Some(j) = (i + k).checked_sub(w).filter(|&j| j < n && seq.active[j]) {
                add(&mut d_embedded[j * d..(j + 1) * d], &dx[k * d..(k + 1) * d]);
            }
        }
    }
    for (j, feats) in seq.features.iter().enumerate() {
        if !seq.active[j] || feats.is_empty() {
            continue;
        }
        let inv = 1.0 / feats.len() as f64;
        let g = &d_embedded[j * d..(j + 1) * d];
        for &f in feats {
            let row = grads.embedding.entry(f).or_insert_with(|| vec![0.0; d]);
            row.iter_mut().zip(g).for_each(|(a, b)| *a += b * inv);
        }
    }
    Ok((total * scale, grads))
}

/// Loss and gradients for one labeled sequence.
pub fn backward(
    seq: &LabeledSequence,
    params: &LabelerParams,
    cfg: &LabelerConfig,
    loss: &LossSelector,
) -> Result<(f64, Gradients)> {
    params.check_shapes(cfg)?;
    backward_encoded(&EncodedSequence::new(seq, cfg), params, cfg, loss)
}

/// Copy of `seq` with `probs` filled and `labels = probs >= threshold`.
pub fn predict(
    seq: &LabeledSequence,
    params: &LabelerParams,
    cfg: &LabelerConfig,
) -> Result<LabeledSequence> {
    let probs = forward(seq, params, cfg)?;
    Ok(threshold(seq, probs, cfg.toxic_threshold))
}

pub(crate) fn threshold(seq: &LabeledSequence, probs: Vec<f64>, tau: f64) -> LabeledSequence {
    let labels = seq
        .tokens
        .iter()
        .zip(&probs)
        .map(|(t, &p)| (t.active && p >= tau) as u8)
        .collect();
    LabeledSequence {
        doc_id: seq.doc_id,
        tokens: seq.tokens.clone(),
        labels,
        probs: Some(probs),
    }
}
