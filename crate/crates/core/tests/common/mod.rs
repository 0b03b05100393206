#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use toxspan::loss::LossSelector;
use toxspan::model::{backward, forward_encoded, EncodedSequence, LabelerConfig, LabelerParams};
use toxspan::textproc::{LabeledSequence, TokenSpan};

pub const WORDS: &[&str] = &[
    "you", "are", "an", "idiot", "the", "mayor", "is", "pathetic", "stupid", "vote", "plan",
    "clown", "budget", "garbage", "and", "frankly",
];

/// Configuration small enough for exhaustive finite differences.
pub fn small_config() -> LabelerConfig {
    LabelerConfig {
        embed_dim: 4,
        hidden_dim: 6,
        window_radius: 1,
        hash_buckets: 97,
        char_ngram_n: 3,
        seed: 0,
        toxic_threshold: 0.5,
    }
}

/// Random sequence of 3..8 tokens, roughly one in six inactive.
pub fn random_sequence(rng: &mut impl Rng) -> LabeledSequence {
    let n = rng.gen_range(3..8);
    let mut tokens = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    let mut pos = 0;
    for _ in 0..n {
        let word = WORDS[rng.gen_range(0..WORDS.len())];
        let active = rng.gen_bool(5.0 / 6.0);
        tokens.push(TokenSpan {
            text: if active {
                word.to_string()
            } else {
                String::new()
            },
            start: pos,
            end: pos + word.len(),
            active,
        });
        labels.push((active && rng.gen_bool(0.4)) as u8);
        pos += word.len() + 1;
    }
    LabeledSequence {
        doc_id: 0,
        tokens,
        labels,
        probs: None,
    }
}

pub fn random_params(cfg: &LabelerConfig, rng: &mut impl Rng) -> LabelerParams {
    let mut p = LabelerParams::zeros(cfg);
    for x in p
        .embedding
        .iter_mut()
        .chain(&mut p.w1)
        .chain(&mut p.b1)
        .chain(&mut p.w2)
    {
        *x = rng.gen_range(-0.8..0.8);
    }
    p.b2 = rng.gen_range(-0.5..0.5);
    p
}

/// True when every active hidden unit is far enough from the ReLU kink that a
/// perturbation of size `h` cannot cross it.
pub fn clear_of_kinks(
    seq: &LabeledSequence,
    params: &LabelerParams,
    cfg: &LabelerConfig,
    margin: f64,
) -> bool {
    let enc = EncodedSequence::new(seq, cfg);
    let cache = forward_encoded(&enc, params, cfg);
    let h = cfg.hidden_dim;
    (0..enc.len()).filter(|&i| enc.active[i]).all(|i| {
        cache.pre_activations[i * h..(i + 1) * h]
            .iter()
            .all(|a| a.abs() > margin)
    })
}

#[derive(Debug, Clone)]
pub struct BlockError {
    pub block: &'static str,
    pub rel_error: f64,
}

fn rel(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic
        .iter()
        .zip(numeric)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    let na: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nn: f64 = numeric.iter().map(|a| a * a).sum::<f64>().sqrt();
    let scale = na.max(nn);
    if scale < 1e-12 {
        diff
    } else {
        diff / scale
    }
}

/// Central finite differences of the mean loss against `backward`, one
/// relative error per parameter block.
pub fn check_gradients(
    seq: &LabeledSequence,
    params: &LabelerParams,
    cfg: &LabelerConfig,
    loss: &LossSelector,
    h: f64,
) -> Vec<BlockError> {
    let (_, grads) = backward(seq, params, cfg, loss).unwrap();
    let value = |p: &LabelerParams| backward(seq, p, cfg, loss).unwrap().0;
    let numeric = |get: &dyn Fn(&mut LabelerParams) -> &mut f64| {
        let mut plus = params.clone();
        *get(&mut plus) += h;
        let mut minus = params.clone();
        *get(&mut minus) -= h;
        (value(&plus) - value(&minus)) / (2.0 * h)
    };

    let d = cfg.embed_dim;
    let dense = grads.dense_embedding(cfg);
    let mut rows: Vec<usize> = EncodedSequence::new(seq, cfg)
        .features
        .iter()
        .flatten()
        .map(|&f| f as usize)
        .collect();
    rows.sort_unstable();
    rows.dedup();
    let mut emb_a = Vec::new();
    let mut emb_n = Vec::new();
    for &r in &rows {
        emb_a.extend_from_slice(&dense[r * d..(r + 1) * d]);
        emb_n.extend((r * d..(r + 1) * d).map(|k| numeric(&|p| &mut p.embedding[k])));
    }
    let w1_n: Vec<f64> = (0..params.w1.len())
        .map(|k| numeric(&|p| &mut p.w1[k]))
        .collect();
    let b1_n: Vec<f64> = (0..params.b1.len())
        .map(|k| numeric(&|p| &mut p.b1[k]))
        .collect();
    let w2_n: Vec<f64> = (0..params.w2.len())
        .map(|k| numeric(&|p| &mut p.w2[k]))
        .collect();
    let b2_n = numeric(&|p| &mut p.b2);

    vec![
        BlockError {
            block: "embedding",
            rel_error: rel(&emb_a, &emb_n),
        },
        BlockError {
            block: "w1",
            rel_error: rel(&grads.w1, &w1_n),
        },
        BlockError {
            block: "b1",
            rel_error: rel(&grads.b1, &b1_n),
        },
        BlockError {
            block: "w2",
            rel_error: rel(&grads.w2, &w2_n),
        },
        BlockError {
            block: "b2",
            rel_error: rel(&[grads.b2], &[b2_n]),
        },
    ]
}

/// Draws a sequence and parameters clear of ReLU kinks, resampling as needed.
pub fn kink_free_case(
    rng: &mut ChaCha8Rng,
    cfg: &LabelerConfig,
    margin: f64,
) -> (LabeledSequence, LabelerParams) {
    loop {
        let seq = random_sequence(rng);
        let params = random_params(cfg, rng);
        if seq.n_active() > 0 && clear_of_kinks(&seq, &params, cfg, margin) {
            return (seq, params);
        }
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
