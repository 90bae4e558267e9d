//! Tokenization, vocabulary, word embeddings and the convolutional sentence
//! encoder.
//!
//! A text becomes a fixed-length id sequence (left-padded, truncated at the
//! end), its ids are looked up in the embedding table, and each kernel bank
//! runs `conv → ReLU → max over time`. The pooled scalars of all banks,
//! grouped by kernel size and then kernel index, form the d-dimensional text
//! vector.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use rand::Rng;

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::params;
use crate::tensor::{Tensor, TensorError};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";

/// Lowercased whitespace tokenization.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_lowercase).collect()
}

/// Keeps the first `len` ids, or left-pads with [`PAD`] up to `len`.
pub fn pad_truncate(ids: &[usize], len: usize) -> Vec<usize> {
    if ids.len() >= len {
        ids[..len].to_vec()
    } else {
        let mut out = vec![PAD; len - ids.len()];
        out.extend_from_slice(ids);
        out
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Default for Vocab {
    fn default() -> Self {
        Self::from_tokens(Vec::<String>::new())
    }
}

impl Vocab {
    /// Vocabulary whose ids 2.. are `tokens` in order.
    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut all = vec![PAD_TOKEN.to_string(), UNK_TOKEN.to_string()];
        all.extend(tokens.into_iter().map(Into::into));
        let index = all.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Self { tokens: all, index }
    }

    /// Tokens seen at least `min_count` times, most frequent first, ties by
    /// token text.
    pub fn build<'a, I>(corpus: I, min_count: usize) -> Self
    where
        I: IntoIterator<Item = &'a str>,
    {
        let min_count = min_count.max(1);
        let mut counts: HashMap<String, usize> = HashMap::new();
        for text in corpus {
            for tok in tokenize(text) {
                *counts.entry(tok).or_default() += 1;
            }
        }
        let mut kept: Vec<(String, usize)> =
            counts.into_iter().filter(|(t, c)| *c >= min_count && t != PAD_TOKEN && t != UNK_TOKEN).collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        Self::from_tokens(kept.into_iter().map(|(t, _)| t))
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Tokenizes, maps to ids (unseen → UNK) and pads/truncates to `len`.
    pub fn encode(&self, text: &str, len: usize) -> Vec<usize> {
        let ids: Vec<usize> = tokenize(text).iter().map(|t| self.id(t)).collect();
        pad_truncate(&ids, len)
    }
}

/// Uniform bound used for words without a pretrained vector.
pub fn oov_bound(d_w: usize) -> f64 {
    (6.0 / d_w as f64).sqrt()
}

/// A V×d_w table with every row drawn uniformly from ±√(6/d_w) and a zero
/// PAD row.
pub fn random_embeddings<R: Rng>(rng: &mut R, vocab_len: usize, d_w: usize) -> Tensor {
    let mut table = params::uniform(rng, &[vocab_len, d_w], oov_bound(d_w));
    table.data_mut()[..d_w].fill(0.0);
    table
}

/// Reads an embedding file (`V d_w` header, then `token v1 … v_dw` lines).
/// Rows for tokens found in the file are copied; all other rows keep their
/// random initialization; PAD is zero.
pub fn load_pretrained<B: BufRead, R: Rng>(reader: B, vocab: &Vocab, d_w: usize, rng: &mut R) -> Result<Tensor> {
    let mut table = random_embeddings(rng, vocab.len(), d_w);
    let mut lines = reader.lines();
    let header = match lines.next() {
        Some(line) => line?,
        None => return Err(Error::Parse { line: 1, msg: "missing header".into() }),
    };
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(str::parse)
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Parse { line: 1, msg: format!("bad header {header:?}") })?;
    let [rows, width] = dims[..] else {
        return Err(Error::Parse { line: 1, msg: format!("header needs two integers, got {header:?}") });
    };
    if width != d_w {
        return Err(Error::Parse { line: 1, msg: format!("vectors have width {width}, expected {d_w}") });
    }
    let mut seen = 0;
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split(' ').filter(|f| !f.is_empty());
        let token = fields.next().unwrap_or_default();
        let values: Vec<f64> = fields
            .map(|f| f.parse::<f64>().ok().filter(|v| v.is_finite()))
            .collect::<Option<_>>()
            .ok_or_else(|| Error::Parse { line: line_no, msg: "non-numeric vector entry".into() })?;
        if values.len() != width {
            return Err(Error::Parse { line: line_no, msg: format!("{} values, expected {width}", values.len()) });
        }
        seen += 1;
        if let Some(id) = vocab.get(token).filter(|&id| id != PAD) {
            table.data_mut()[id * d_w..(id + 1) * d_w].copy_from_slice(&values);
        }
    }
    if seen != rows {
        return Err(Error::Parse { line: seen + 1, msg: format!("header promised {rows} vectors, found {seen}") });
    }
    Ok(table)
}

/// Writes `table` in the format read by [`load_pretrained`].
pub fn write_embeddings<W: Write>(mut out: W, vocab: &Vocab, table: &Tensor) -> Result<()> {
    let (v, d) = table.dims2();
    writeln!(out, "{v} {d}")?;
    for id in 0..v {
        let token = vocab.token(id).unwrap_or(UNK_TOKEN);
        let row: Vec<String> = table.row_slice(id).iter().map(|x| format!("{x:?}")).collect();
        writeln!(out, "{token} {}", row.join(" "))?;
    }
    Ok(())
}

/// Sentence encoder: embedding lookup, then per kernel bank
/// conv → ReLU → max-over-time, concatenated into a 1×d row.
pub fn encode_text(g: &mut Graph, embedding: Var, kernels: &[Var], ids: &[usize]) -> std::result::Result<Var, TensorError> {
    let x = g.embed(embedding, ids)?;
    let mut pooled = Vec::with_capacity(kernels.len());
    for &bank in kernels {
        let feature_map = g.conv1d_valid(x, bank)?;
        let activated = g.relu(feature_map)?;
        let pooled_bank = g.max_over_time(activated)?;
        pooled.push(pooled_bank);
    }
    g.concat_cols(&pooled)
}
