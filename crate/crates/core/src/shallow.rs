//! Averaged bag-of-embeddings binary classifier.
//!
//! A document is the bag of its in-vocabulary word ids plus hashed
//! character n-grams of every token (`<token>` with boundary markers). Its
//! representation is the mean of the corresponding embedding rows, and the
//! score is `sigmoid(w · mean + b)`. Training is single-threaded SGD on the
//! logistic loss with a linearly decaying learning rate.
//!
//! Embedding rows are materialized lazily: a row that was never updated holds
//! its initial value, which is a pure function of `(init_seed, row, col)`.
//! That keeps a 2^18-bucket table cheap to hold and to checkpoint, since only
//! touched rows are stored.

use std::borrow::Cow;
use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::tokenize;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ShallowConfig {
    pub dim: usize,
    pub lr: f64,
    pub epochs: usize,
    pub min_count: usize,
    pub ngram_min: usize,
    pub ngram_max: usize,
    /// Hash buckets for character n-grams; 0 disables subword features.
    pub ngram_buckets: usize,
    pub seed: u64,
}

impl Default for ShallowConfig {
    fn default() -> Self {
        ShallowConfig {
            dim: 64,
            lr: 0.1,
            epochs: 5,
            min_count: 2,
            ngram_min: 3,
            ngram_max: 5,
            ngram_buckets: 1 << 18,
            seed: 42,
        }
    }
}

impl ShallowConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim < 2 {
            return Err(Error::Config(format!("shallow dim must be >= 2, got {}", self.dim)));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::Config(format!("shallow lr must be positive, got {}", self.lr)));
        }
        if self.epochs == 0 {
            return Err(Error::Config("shallow epochs must be >= 1".into()));
        }
        if self.ngram_buckets > 0 && (self.ngram_min == 0 || self.ngram_min > self.ngram_max) {
            return Err(Error::Config(format!(
                "invalid n-gram range {}..={}",
                self.ngram_min, self.ngram_max
            )));
        }
        Ok(())
    }
}

/// Word ids and the n-gram hashing layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    tokens: Vec<String>,
    #[serde(skip)]
    token_ids: HashMap<String, usize>,
    pub ngram_buckets: usize,
    pub ngram_min: usize,
    pub ngram_max: usize,
    pub min_count: usize,
}

impl Vocabulary {
    /// Keeps tokens seen at least `min_count` times. Ids are dense and
    /// ordered by (count desc, token asc).
    pub fn build(docs: &[Vec<String>], config: &ShallowConfig) -> Vocabulary {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for doc in docs {
            for tok in doc {
                *counts.entry(tok.as_str()).or_default() += 1;
            }
        }
        let mut kept: Vec<(&str, usize)> = counts
            .into_iter()
            .filter(|(_, c)| *c >= config.min_count.max(1))
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        let tokens: Vec<String> = kept.into_iter().map(|(t, _)| t.to_string()).collect();
        Vocabulary::from_tokens(tokens, config)
    }

    fn from_tokens(tokens: Vec<String>, config: &ShallowConfig) -> Vocabulary {
        let token_ids = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocabulary {
            tokens,
            token_ids,
            ngram_buckets: config.ngram_buckets,
            ngram_min: config.ngram_min,
            ngram_max: config.ngram_max,
            min_count: config.min_count,
        }
    }

    fn reindex(&mut self) {
        self.token_ids = self
            .tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.token_ids.get(token).copied()
    }

    /// Total embedding rows: words followed by n-gram buckets.
    pub fn rows(&self) -> usize {
        self.tokens.len() + self.ngram_buckets
    }

    /// Sorted embedding-row indices (with multiplicity) for a token bag.
    /// Sorting makes the mean independent of token order.
    pub fn features(&self, tokens: &[String]) -> Vec<usize> {
        let mut out = Vec::new();
        for tok in tokens {
            if let Some(id) = self.id(tok) {
                out.push(id);
            }
            if self.ngram_buckets > 0 {
                let padded: Vec<char> = std::iter::once('<')
                    .chain(tok.chars())
                    .chain(std::iter::once('>'))
                    .collect();
                for n in self.ngram_min..=self.ngram_max {
                    if n > padded.len() {
                        break;
                    }
                    for window in padded.windows(n) {
                        // the whole padded token is the word itself, not a subword
                        if n == padded.len() {
                            continue;
                        }
                        let gram: String = window.iter().collect();
                        let bucket = fnv1a(gram.as_bytes()) as usize % self.ngram_buckets;
                        out.push(self.tokens.len() + bucket);
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }
}

fn fnv1a(bytes: &[u8]) -> u32 {
    let mut h: u32 = 2_166_136_261;
    for b in bytes {
        h ^= u32::from(*b);
        h = h.wrapping_mul(16_777_619);
    }
    h
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Embedding rows with lazy materialization.
#[derive(Debug, Clone, PartialEq)]
struct EmbeddingTable {
    dim: usize,
    seed: u64,
    scale: f64,
    slots: HashMap<usize, usize>,
    data: Vec<f64>,
}

impl EmbeddingTable {
    fn new(dim: usize, seed: u64, scale: f64) -> Self {
        EmbeddingTable {
            dim,
            seed,
            scale,
            slots: HashMap::new(),
            data: Vec::new(),
        }
    }

    fn init_value(&self, row: usize, col: usize) -> f64 {
        if self.scale == 0.0 {
            return 0.0;
        }
        let h = splitmix64(self.seed ^ splitmix64((row as u64) << 20 ^ col as u64));
        let unit = (h >> 11) as f64 / (1u64 << 53) as f64;
        (2.0 * unit - 1.0) * self.scale
    }

    fn row(&self, row: usize) -> Cow<'_, [f64]> {
        match self.slots.get(&row) {
            Some(&slot) => Cow::Borrowed(&self.data[slot * self.dim..(slot + 1) * self.dim]),
            None => Cow::Owned((0..self.dim).map(|c| self.init_value(row, c)).collect()),
        }
    }

    fn row_mut(&mut self, row: usize) -> &mut [f64] {
        let slot = match self.slots.get(&row) {
            Some(&s) => s,
            None => {
                let s = self.slots.len();
                let init: Vec<f64> = (0..self.dim).map(|c| self.init_value(row, c)).collect();
                self.data.extend_from_slice(&init);
                self.slots.insert(row, s);
                s
            }
        };
        &mut self.data[slot * self.dim..(slot + 1) * self.dim]
    }

    fn materialized(&self) -> Vec<(usize, Vec<f64>)> {
        let mut rows: Vec<(usize, Vec<f64>)> = self
            .slots
            .iter()
            .map(|(&r, &s)| (r, self.data[s * self.dim..(s + 1) * self.dim].to_vec()))
            .collect();
        rows.sort_by_key(|(r, _)| *r);
        rows
    }
}

/// A trained (or zero-initialized) bag-of-embeddings model.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingBagModel {
    vocab: Vocabulary,
    table: EmbeddingTable,
    head_weights: Vec<f64>,
    head_bias: f64,
}

/// Individually addressable parameter, for finite-difference checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Param {
    HeadWeight(usize),
    HeadBias,
    Embedding { row: usize, col: usize },
}

/// Gradient of the logistic loss for one document.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub head_weights: Vec<f64>,
    pub head_bias: f64,
    /// Gradient per touched embedding row, ascending by row.
    pub rows: Vec<(usize, Vec<f64>)>,
}

#[derive(Debug, Clone)]
pub struct ShallowFit {
    pub model: EmbeddingBagModel,
    /// Mean training loss per epoch, measured before each update.
    pub epoch_losses: Vec<f64>,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

impl EmbeddingBagModel {
    /// A model whose every parameter is zero; it scores 0.5 everywhere.
    pub fn zeros(vocab: Vocabulary, dim: usize) -> Self {
        EmbeddingBagModel {
            vocab,
            table: EmbeddingTable::new(dim, 0, 0.0),
            head_weights: vec![0.0; dim],
            head_bias: 0.0,
        }
    }

    fn initialized(vocab: Vocabulary, config: &ShallowConfig) -> Self {
        EmbeddingBagModel {
            vocab,
            table: EmbeddingTable::new(config.dim, config.seed, 1.0 / config.dim as f64),
            head_weights: vec![0.0; config.dim],
            head_bias: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.table.dim
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn head_weights(&self) -> &[f64] {
        &self.head_weights
    }

    pub fn head_bias(&self) -> f64 {
        self.head_bias
    }

    pub fn get(&self, p: Param) -> f64 {
        match p {
            Param::HeadWeight(i) => self.head_weights[i],
            Param::HeadBias => self.head_bias,
            Param::Embedding { row, col } => self.table.row(row)[col],
        }
    }

    pub fn set(&mut self, p: Param, value: f64) {
        match p {
            Param::HeadWeight(i) => self.head_weights[i] = value,
            Param::HeadBias => self.head_bias = value,
            Param::Embedding { row, col } => self.table.row_mut(row)[col] = value,
        }
    }

    /// Mean embedding over the given feature rows; zeros when empty.
    fn mean_embedding(&self, features: &[usize]) -> Vec<f64> {
        let mut hidden = vec![0.0; self.dim()];
        if features.is_empty() {
            return hidden;
        }
        for &f in features {
            for (h, v) in hidden.iter_mut().zip(self.table.row(f).iter()) {
                *h += v;
            }
        }
        let inv = 1.0 / features.len() as f64;
        hidden.iter_mut().for_each(|h| *h *= inv);
        hidden
    }

    /// Mean embedding of a token sequence (the document vector).
    pub fn embed_tokens(&self, tokens: &[String]) -> Vec<f64> {
        self.mean_embedding(&self.vocab.features(tokens))
    }

    pub fn score_tokens(&self, tokens: &[String]) -> f64 {
        let features = self.vocab.features(tokens);
        if features.is_empty() {
            return self.head_bias;
        }
        let hidden = self.mean_embedding(&features);
        dot(&self.head_weights, &hidden) + self.head_bias
    }

    pub fn predict_tokens(&self, tokens: &[String]) -> f64 {
        sigmoid(self.score_tokens(tokens))
    }

    pub fn predict_prob(&self, text: &str) -> f64 {
        self.predict_tokens(&tokenize(text))
    }

    /// Logistic loss and its analytic gradient for one labelled document.
    pub fn loss_and_gradients(&self, tokens: &[String], label: u8) -> (f64, Gradients) {
        let features = self.vocab.features(tokens);
        let y = f64::from(label);
        let hidden = self.mean_embedding(&features);
        let z = if features.is_empty() {
            self.head_bias
        } else {
            dot(&self.head_weights, &hidden) + self.head_bias
        };
        let loss = softplus(z) - y * z;
        let g = sigmoid(z) - y;
        let mut rows: Vec<(usize, Vec<f64>)> = Vec::new();
        if !features.is_empty() {
            let inv = 1.0 / features.len() as f64;
            // features are sorted, so equal rows are adjacent
            for &f in &features {
                match rows.last_mut() {
                    Some((r, grad)) if *r == f => {
                        for (gv, w) in grad.iter_mut().zip(&self.head_weights) {
                            *gv += g * w * inv;
                        }
                    }
                    _ => rows.push((f, self.head_weights.iter().map(|w| g * w * inv).collect())),
                }
            }
        }
        let grads = Gradients {
            head_weights: hidden.iter().map(|h| g * h).collect(),
            head_bias: g,
            rows,
        };
        (loss, grads)
    }

    pub fn checkpoint(&self) -> ShallowCheckpoint {
        ShallowCheckpoint {
            version: CHECKPOINT_VERSION,
            dim: self.dim(),
            init_seed: self.table.seed,
            init_scale: self.table.scale,
            vocabulary: self.vocab.clone(),
            head_weights: self.head_weights.clone(),
            head_bias: self.head_bias,
            rows: self.table.materialized(),
        }
    }

    pub fn from_checkpoint(ckpt: ShallowCheckpoint) -> Result<Self> {
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::Data(format!(
                "unsupported shallow checkpoint version {} (expected {CHECKPOINT_VERSION})",
                ckpt.version
            )));
        }
        if ckpt.head_weights.len() != ckpt.dim {
            return Err(Error::Data("head weight length does not match dim".into()));
        }
        let mut vocab = ckpt.vocabulary;
        vocab.reindex();
        let mut table = EmbeddingTable::new(ckpt.dim, ckpt.init_seed, ckpt.init_scale);
        for (row, values) in ckpt.rows {
            if values.len() != ckpt.dim || row >= vocab.rows() {
                return Err(Error::Data(format!("malformed embedding row {row}")));
            }
            table.row_mut(row).copy_from_slice(&values);
        }
        Ok(EmbeddingBagModel {
            vocab,
            table,
            head_weights: ckpt.head_weights,
            head_bias: ckpt.head_bias,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string(&self.checkpoint()).expect("checkpoint serializes");
        fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ckpt: ShallowCheckpoint = serde_json::from_str(&raw)
            .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        Self::from_checkpoint(ckpt)
    }
}

/// On-disk form of [`EmbeddingBagModel`]. Only materialized rows are stored.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShallowCheckpoint {
    pub version: u32,
    pub dim: usize,
    pub init_seed: u64,
    pub init_scale: f64,
    pub vocabulary: Vocabulary,
    pub head_weights: Vec<f64>,
    pub head_bias: f64,
    pub rows: Vec<(usize, Vec<f64>)>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Trains a model on tokenized documents with 0/1 labels.
pub fn train_shallow(docs: &[Vec<String>], labels: &[u8], config: &ShallowConfig) -> Result<ShallowFit> {
    config.validate()?;
    if docs.len() != labels.len() {
        return Err(Error::Config(format!(
            "{} documents but {} labels",
            docs.len(),
            labels.len()
        )));
    }
    if docs.len() < 2 {
        return Err(Error::Config("need at least two training documents".into()));
    }
    if labels.iter().any(|&l| l > 1) {
        return Err(Error::Config("labels must be 0 or 1".into()));
    }
    let positives = labels.iter().filter(|&&l| l == 1).count();
    if positives == 0 || positives == labels.len() {
        return Err(Error::Config(
            "training data must contain both classes".into(),
        ));
    }

    let vocab = Vocabulary::build(docs, config);
    let mut model = EmbeddingBagModel::initialized(vocab, config);
    let features: Vec<Vec<usize>> = docs.iter().map(|d| model.vocab.features(d)).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..docs.len()).collect();
    let total_steps = (config.epochs * docs.len()) as f64;
    let mut step = 0usize;
    let dim = config.dim;
    let mut hidden = vec![0.0; dim];
    let mut epoch_losses = Vec::with_capacity(config.epochs);

    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for &i in &order {
            let lr = config.lr * (1.0 - step as f64 / total_steps);
            step += 1;
            let feats = &features[i];
            let y = f64::from(labels[i]);
            if feats.is_empty() {
                let z = model.head_bias;
                loss_sum += softplus(z) - y * z;
                model.head_bias -= lr * (sigmoid(z) - y);
                continue;
            }
            hidden.iter_mut().for_each(|h| *h = 0.0);
            for &f in feats {
                for (h, v) in hidden.iter_mut().zip(model.table.row(f).iter()) {
                    *h += v;
                }
            }
            let inv = 1.0 / feats.len() as f64;
            hidden.iter_mut().for_each(|h| *h *= inv);
            let z = dot(&model.head_weights, &hidden) + model.head_bias;
            loss_sum += softplus(z) - y * z;
            let g = sigmoid(z) - y;
            let scale = lr * g * inv;
            // row updates use the head weights from before this step
            for &f in feats {
                let row = model.table.row_mut(f);
                for (r, w) in row.iter_mut().zip(&model.head_weights) {
                    *r -= scale * w;
                }
            }
            for (w, h) in model.head_weights.iter_mut().zip(&hidden) {
                *w -= lr * g * h;
            }
            model.head_bias -= lr * g;
        }
        let mean = loss_sum / docs.len() as f64;
        if !mean.is_finite() {
            return Err(Error::Training(format!("non-finite shallow loss {mean}")));
        }
        epoch_losses.push(mean);
    }
    Ok(ShallowFit { model, epoch_losses })
}
