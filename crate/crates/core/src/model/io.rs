//! Model file: a text header (format tag, configuration, contraction table)
//! followed by named little-endian `f64` arrays.
//!
//! ```text
//! toxspan-model 1
//! embed_dim=32
//! ...
//! contraction<TAB>don't<TAB>do not
//! array embedding 2097152
//! <2097152 * 8 bytes>
//! ...
//! end
//! ```

use std::io::{BufRead, Cursor, Read};
use std::path::Path;

use crate::error::{Error, Result};
use crate::textproc::{CleaningConfig, ContractionTable};

use super::{LabelerConfig, LabelerParams};

const MAGIC: &str = "toxspan-model 1";

/// Everything needed to label new text: features, weights and the cleaning
/// applied to token surfaces.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub labeler: LabelerConfig,
    pub cleaning: CleaningConfig,
    pub params: LabelerParams,
}

fn write_array(out: &mut Vec<u8>, name: &str, data: &[f64]) {
    out.extend_from_slice(format!("array {name} {}\n", data.len()).as_bytes());
    for x in data {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out.push(b'\n');
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Parse(format!("model file: {}", msg.into()))
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| bad(format!("bad value {value:?} for {key}")))
}

impl TrainedModel {
    pub fn to_bytes(&self) -> Vec<u8> {
        let c = &self.labeler;
        let k = &self.cleaning;
        let mut header = format!("{MAGIC}\n");
        for (key, value) in [
            ("embed_dim", c.embed_dim.to_string()),
            ("hidden_dim", c.hidden_dim.to_string()),
            ("window_radius", c.window_radius.to_string()),
            ("hash_buckets", c.hash_buckets.to_string()),
            ("char_ngram_n", c.char_ngram_n.to_string()),
            ("seed", c.seed.to_string()),
            ("toxic_threshold", c.toxic_threshold.to_string()),
            ("expand_contractions", k.expand_contractions.to_string()),
            ("remove_digits", k.remove_digits.to_string()),
            ("remove_fullstops", k.remove_fullstops.to_string()),
        ] {
            header.push_str(&format!("{key}={value}\n"));
        }
        for (surface, expansion) in k.contraction_table.iter() {
            header.push_str(&format!("contraction\t{surface}\t{expansion}\n"));
        }
        let mut out = header.into_bytes();
        let p = &self.params;
        write_array(&mut out, "embedding", &p.embedding);
        write_array(&mut out, "w1", &p.w1);
        write_array(&mut out, "b1", &p.b1);
        write_array(&mut out, "w2", &p.w2);
        write_array(&mut out, "b2", &[p.b2]);
        out.extend_from_slice(b"end\n");
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor::new(bytes);
        let mut line = String::new();
        let mut next_line = |cur: &mut Cursor<&[u8]>| -> Result<String> {
            line.clear();
            cur.read_line(&mut line).map_err(|e| bad(e.to_string()))?;
            if line.is_empty() {
                return Err(bad("unexpected end of file"));
            }
            Ok(line.trim_end_matches('\n').to_string())
        };
        if next_line(&mut cur)? != MAGIC {
            return Err(bad("missing format tag"));
        }
        let mut labeler = LabelerConfig::default();
        let mut cleaning = CleaningConfig::default();
        let mut table = String::new();
        let mut arrays: Vec<(String, Vec<f64>)> = Vec::new();
        loop {
            let l = next_line(&mut cur)?;
            if l == "end" {
                break;
            }
            if let Some(rest) = l.strip_prefix("contraction\t") {
                table.push_str(rest);
                table.push('\n');
            } else if let Some(rest) = l.strip_prefix("array ") {
                let (name, len) = rest
                    .split_once(' ')
                    .ok_or_else(|| bad("bad array header"))?;
                let len: usize = parse_value(name, len)?;
                let mut raw = vec![0u8; len.checked_mul(8).ok_or_else(|| bad("array too large"))?];
                cur.read_exact(&mut raw)
                    .map_err(|_| bad(format!("truncated array {name}")))?;
                let data = raw
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                    .collect();
                let mut nl = [0u8; 1];
                cur.read_exact(&mut nl).map_err(|_| bad("truncated file"))?;
                arrays.push((name.to_string(), data));
            } else if let Some((key, value)) = l.split_once('=') {
                match key {
                    "embed_dim" => labeler.embed_dim = parse_value(key, value)?,
                    "hidden_dim" => labeler.hidden_dim = parse_value(key, value)?,
                    "window_radius" => labeler.window_radius = parse_value(key, value)?,
                    "hash_buckets" => labeler.hash_buckets = parse_value(key, value)?,
                    "char_ngram_n" => labeler.char_ngram_n = parse_value(key, value)?,
                    "seed" => labeler.seed = parse_value(key, value)?,
                    "toxic_threshold" => labeler.toxic_threshold = parse_value(key, value)?,
                    "expand_contractions" => {
                        cleaning.expand_contractions = parse_value(key, value)?
                    }
                    "remove_digits" => cleaning.remove_digits = parse_value(key, value)?,
                    "remove_fullstops" => cleaning.remove_fullstops = parse_value(key, value)?,
                    _ => return Err(bad(format!("unknown key {key:?}"))),
                }
            } else {
                return Err(bad(format!("unrecognised line {l:?}")));
            }
        }
        labeler.validate()?;
        cleaning.contraction_table = ContractionTable::parse(&table)?;
        let mut take = |name: &str| -> Result<Vec<f64>> {
            let pos = arrays
                .iter()
                .position(|(n, _)| n == name)
                .ok_or_else(|| bad(format!("missing array {name}")))?;
            Ok(arrays.swap_remove(pos).1)
        };
        let b2 = take("b2")?;
        if b2.len() != 1 {
            return Err(bad("b2 must hold one value"));
        }
        let params = LabelerParams {
            embedding: take("embedding")?,
            w1: take("w1")?,
            b1: take("b1")?,
            w2: take("w2")?,
            b2: b2[0],
        };
        params.check_shapes(&labeler)?;
        Ok(TrainedModel {
            labeler,
            cleaning,
            params,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
