//! Pluggable sentence embedder.
//!
//! The deep path needs a fixed-dimension vector per utterance. The default
//! is a trainable-free signed feature hash of character n-grams; a lookup
//! table of externally computed vectors can be injected instead via a TSV
//! file (exact sentence text, then `dim` tab-separated reals per line).

use std::collections::HashMap;
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::corpus::{QuestionSample, Speaker};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const DEFAULT_EMBED_DIM: usize = 64;
pub const DEFAULT_SALT: u64 = 0x7764_6a6d;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EmbedderSpec {
    /// Signed feature hashing of character n-grams, L2-normalized.
    HashedNgram {
        dim: usize,
        ngram_min: usize,
        ngram_max: usize,
        salt: u64,
    },
    /// Exact-text lookup of precomputed sentence vectors.
    PretrainedTable { dim: usize, path: String },
}

impl EmbedderSpec {
    pub fn hashed(dim: usize) -> Self {
        EmbedderSpec::HashedNgram {
            dim,
            ngram_min: 1,
            ngram_max: 3,
            salt: DEFAULT_SALT,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            EmbedderSpec::HashedNgram { dim, .. } => *dim,
            EmbedderSpec::PretrainedTable { dim, .. } => *dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim() == 0 {
            return Err(Error::Config("embedder dim must be >= 1".into()));
        }
        if let EmbedderSpec::HashedNgram {
            ngram_min, ngram_max, ..
        } = self
        {
            if *ngram_min == 0 || ngram_min > ngram_max {
                return Err(Error::Config(format!(
                    "bad n-gram range [{ngram_min}, {ngram_max}]"
                )));
            }
        }
        Ok(())
    }
}

impl Default for EmbedderSpec {
    fn default() -> Self {
        EmbedderSpec::hashed(DEFAULT_EMBED_DIM)
    }
}

/// FNV-1a over the salt's little-endian bytes, then the n-gram's UTF-8 bytes.
fn fnv1a(salt: u64, ngram: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in salt.to_le_bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    for b in ngram.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn hashed_embed(text: &str, dim: usize, ngram_min: usize, ngram_max: usize, salt: u64) -> Vec<f64> {
    let chars: Vec<char> = text.chars().map(|c| c.to_ascii_lowercase()).collect();
    let mut v = vec![0.0f64; dim];
    for n in ngram_min..=ngram_max {
        if chars.len() < n {
            break;
        }
        for window in chars.windows(n) {
            let gram: String = window.iter().collect();
            let h = fnv1a(salt, &gram);
            let sign = if h & (1 << 63) != 0 { -1.0 } else { 1.0 };
            let bin = ((h & 0x7fff_ffff_ffff_ffff) % dim as u64) as usize;
            v[bin] += sign;
        }
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    v
}

/// A ready-to-use embedder; a pretrained table is loaded once and kept
/// read-only.
#[derive(Debug, Clone)]
pub struct Embedder {
    spec: EmbedderSpec,
    table: Option<HashMap<String, Vec<f64>>>,
}

impl Embedder {
    pub fn new(spec: EmbedderSpec) -> Result<Self> {
        spec.validate()?;
        let table = match &spec {
            EmbedderSpec::HashedNgram { .. } => None,
            EmbedderSpec::PretrainedTable { dim, path } => {
                let file = std::fs::File::open(path).map_err(|e| {
                    Error::Config(format!("cannot open embedding table {path}: {e}"))
                })?;
                Some(load_table(std::io::BufReader::new(file), *dim)?)
            }
        };
        Ok(Embedder { spec, table })
    }

    /// Build from an in-memory table (used by tests and table tooling).
    pub fn from_table(dim: usize, entries: HashMap<String, Vec<f64>>) -> Result<Self> {
        for (k, v) in &entries {
            if v.len() != dim {
                return Err(Error::Config(format!(
                    "table entry {k:?} has {} dims, expected {dim}",
                    v.len()
                )));
            }
        }
        Ok(Embedder {
            spec: EmbedderSpec::PretrainedTable {
                dim,
                path: "<memory>".to_string(),
            },
            table: Some(entries),
        })
    }

    pub fn spec(&self) -> &EmbedderSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.spec.dim()
    }

    /// Sentence-level embedding dimension including the 2-dim speaker tag.
    pub fn sample_dim(&self) -> usize {
        self.dim() + 2
    }

    pub fn embed(&self, text: &str) -> Result<Vec<f64>> {
        match &self.spec {
            EmbedderSpec::HashedNgram {
                dim,
                ngram_min,
                ngram_max,
                salt,
            } => Ok(hashed_embed(text, *dim, *ngram_min, *ngram_max, *salt)),
            EmbedderSpec::PretrainedTable { .. } => self
                .table
                .as_ref()
                .expect("table loaded at construction")
                .get(text)
                .cloned()
                .ok_or_else(|| Error::MissingEmbedding(text.to_string())),
        }
    }

    /// Stack per-utterance embeddings in time order and append the speaker
    /// indicator: teacher `(1,0)`, student `(0,1)`. Shape `[n × (dim+2)]`.
    pub fn embed_sample(&self, sample: &QuestionSample) -> Result<Tensor> {
        let n = sample.utterances.len();
        let d = self.sample_dim();
        let mut out = Tensor::zeros(&[n, d]);
        for (i, u) in sample.utterances.iter().enumerate() {
            let e = self.embed(&u.text)?;
            let row = out.row_mut(i);
            row[..e.len()].copy_from_slice(&e);
            match u.speaker {
                Speaker::Teacher => row[d - 2] = 1.0,
                Speaker::Student => row[d - 1] = 1.0,
            }
        }
        Ok(out)
    }
}

fn load_table<R: BufRead>(reader: R, dim: usize) -> Result<HashMap<String, Vec<f64>>> {
    let mut table = HashMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        let text = fields.next().unwrap_or_default().to_string();
        let values: Vec<f64> = fields
            .map(|f| {
                f.parse::<f64>().map_err(|e| Error::Parse {
                    line: idx + 1,
                    msg: format!("bad embedding value {f:?}: {e}"),
                })
            })
            .collect::<Result<_>>()?;
        if values.len() != dim {
            return Err(Error::Parse {
                line: idx + 1,
                msg: format!("expected {dim} values, got {}", values.len()),
            });
        }
        table.insert(text, values);
    }
    Ok(table)
}
