//! Workflow-paragraph classifier: a frozen paragraph encoder followed by a
//! one-hidden-layer ReLU head with a sigmoid output.
//!
//! Only the head is trained. Training is mini-batch gradient descent on the
//! mean binary cross-entropy of each batch; after every epoch the head is
//! scored on the validation split and the checkpoint with the best F1 is
//! kept (the earliest one on ties).

use std::fs;
use std::path::Path;

use log::{debug, info};
use rand::distr::{Distribution, Uniform};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::http::{HttpConfig, JsonClient};
use crate::metrics::{precision_recall_f1, ConfusionCounts, PrecisionRecallF1};
use crate::shallow::EmbeddingBagModel;
use crate::text::{tokenize, truncate_tokens};

pub const HEAD_CHECKPOINT_VERSION: u32 = 1;

/// Maps paragraph text to a fixed-width vector.
pub trait ParagraphEncoder: Sync {
    fn dimension(&self) -> usize;

    fn encode(&self, text: &str) -> Result<Vec<f64>>;

    fn encode_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        texts.par_iter().map(|t| self.encode(t)).collect()
    }
}

/// Mean word/subword embedding from a trained shallow model, rescaled to
/// norm `sqrt(d)` so coordinates sit near unit scale. A paragraph with no
/// known features encodes to the zero vector.
#[derive(Debug, Clone)]
pub struct BagEncoder {
    model: EmbeddingBagModel,
}

impl BagEncoder {
    pub fn new(model: EmbeddingBagModel) -> Self {
        BagEncoder { model }
    }
}

impl ParagraphEncoder for BagEncoder {
    fn dimension(&self) -> usize {
        self.model.dim()
    }

    fn encode(&self, text: &str) -> Result<Vec<f64>> {
        let mut v = self.model.embed_tokens(&tokenize(text));
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            let scale = (v.len() as f64).sqrt() / norm;
            v.iter_mut().for_each(|x| *x *= scale);
        }
        Ok(v)
    }
}

/// Cuts inputs to `max_len` whitespace tokens before delegating.
pub struct Truncated<'a> {
    pub inner: &'a dyn ParagraphEncoder,
    pub max_len: usize,
}

impl ParagraphEncoder for Truncated<'_> {
    fn dimension(&self) -> usize {
        self.inner.dimension()
    }

    fn encode(&self, text: &str) -> Result<Vec<f64>> {
        self.inner.encode(&truncate_tokens(text, self.max_len).0)
    }

    fn encode_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        let cut: Vec<String> = texts
            .iter()
            .map(|t| truncate_tokens(t, self.max_len).0)
            .collect();
        self.inner.encode_batch(&cut)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RemoteEncoderConfig {
    pub base_url: String,
    pub batch_size: usize,
    pub http: HttpConfig,
}

impl Default for RemoteEncoderConfig {
    fn default() -> Self {
        RemoteEncoderConfig {
            base_url: String::new(),
            batch_size: 32,
            http: HttpConfig::default(),
        }
    }
}

#[derive(Deserialize)]
struct EncoderMetadata {
    dimension: usize,
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [String],
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f64>>,
}

/// Embedding service: `GET {base}/metadata` advertises the dimension and
/// `POST {base}/embed` maps `{"texts": [...]}` to `{"vectors": [...]}`.
#[derive(Debug, Clone)]
pub struct RemoteEncoder {
    client: JsonClient,
    base_url: String,
    batch_size: usize,
    dimension: usize,
}

impl RemoteEncoder {
    pub fn connect(config: &RemoteEncoderConfig, api_key: Option<String>) -> Result<Self> {
        if config.base_url.is_empty() {
            return Err(Error::Config("remote encoder needs a base_url".into()));
        }
        if config.batch_size == 0 {
            return Err(Error::Config("remote encoder batch_size must be positive".into()));
        }
        let client = JsonClient::new(config.http.clone(), api_key);
        let base_url = config.base_url.trim_end_matches('/').to_string();
        let meta: EncoderMetadata = client.get(&format!("{base_url}/metadata"))?;
        if meta.dimension == 0 {
            return Err(Error::Backend("encoder advertised dimension 0".into()));
        }
        Ok(RemoteEncoder {
            client,
            base_url,
            batch_size: config.batch_size,
            dimension: meta.dimension,
        })
    }
}

impl ParagraphEncoder for RemoteEncoder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn encode(&self, text: &str) -> Result<Vec<f64>> {
        let mut v = self.encode_batch(&[text.to_string()])?;
        Ok(v.remove(0))
    }

    fn encode_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        let mut out = Vec::with_capacity(texts.len());
        for chunk in texts.chunks(self.batch_size) {
            let resp: EmbedResponse = self
                .client
                .post(&format!("{}/embed", self.base_url), &EmbedRequest { texts: chunk })?;
            if resp.vectors.len() != chunk.len() {
                return Err(Error::Backend(format!(
                    "encoder returned {} vectors for {} texts",
                    resp.vectors.len(),
                    chunk.len()
                )));
            }
            for v in resp.vectors {
                if v.len() != self.dimension || v.iter().any(|x| !x.is_finite()) {
                    return Err(Error::Backend(format!(
                        "encoder returned a malformed vector (length {}, expected {})",
                        v.len(),
                        self.dimension
                    )));
                }
                out.push(v);
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpHeadParams {
    /// `hidden × input` row-major.
    pub w_hidden: Vec<Vec<f64>>,
    pub b_hidden: Vec<f64>,
    pub w_output: Vec<f64>,
    pub b_output: f64,
}

/// Parameter coordinate, used by gradient checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadParam {
    WHidden(usize, usize),
    BHidden(usize),
    WOutput(usize),
    BOutput,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadGradients {
    pub w_hidden: Vec<Vec<f64>>,
    pub b_hidden: Vec<f64>,
    pub w_output: Vec<f64>,
    pub b_output: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifierOutput {
    pub y_prob: f64,
    pub y_class: u8,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// 1 when `y_prob >= threshold`.
pub fn decide(y_prob: f64, threshold: f64) -> u8 {
    u8::from(y_prob >= threshold)
}

impl MlpHeadParams {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        MlpHeadParams {
            w_hidden: vec![vec![0.0; input]; hidden],
            b_hidden: vec![0.0; hidden],
            w_output: vec![0.0; hidden],
            b_output: 0.0,
        }
    }

    /// He-uniform hidden weights, Xavier-uniform output weights, zero biases.
    pub fn initialized(input: usize, hidden: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let he = (6.0 / input as f64).sqrt();
        let xavier = (6.0 / (hidden as f64 + 1.0)).sqrt();
        let uh = Uniform::new_inclusive(-he, he).expect("finite bound");
        let uo = Uniform::new_inclusive(-xavier, xavier).expect("finite bound");
        MlpHeadParams {
            w_hidden: (0..hidden)
                .map(|_| (0..input).map(|_| uh.sample(&mut rng)).collect())
                .collect(),
            b_hidden: vec![0.0; hidden],
            w_output: (0..hidden).map(|_| uo.sample(&mut rng)).collect(),
            b_output: 0.0,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w_hidden.first().map_or(0, Vec::len)
    }

    pub fn hidden_size(&self) -> usize {
        self.b_hidden.len()
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::Domain(format!(
                "embedding has dimension {}, head expects {}",
                x.len(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    fn pre_activations(&self, x: &[f64]) -> Vec<f64> {
        self.w_hidden
            .iter()
            .zip(&self.b_hidden)
            .map(|(row, b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b)
            .collect()
    }

    fn logit_from(&self, pre: &[f64]) -> f64 {
        pre.iter()
            .zip(&self.w_output)
            .map(|(p, w)| p.max(0.0) * w)
            .sum::<f64>()
            + self.b_output
    }

    pub fn logit(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        Ok(self.logit_from(&self.pre_activations(x)))
    }

    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        Ok(sigmoid(self.logit(x)?))
    }

    pub fn classify(&self, x: &[f64], threshold: f64) -> Result<ClassifierOutput> {
        let y_prob = self.forward(x)?;
        Ok(ClassifierOutput {
            y_prob,
            y_class: decide(y_prob, threshold),
        })
    }

    /// Cross-entropy loss for one example and its gradient.
    pub fn loss_and_gradients(&self, x: &[f64], label: u8) -> Result<(f64, HeadGradients)> {
        self.check_dim(x)?;
        let pre = self.pre_activations(x);
        let z = self.logit_from(&pre);
        let y = f64::from(label);
        let loss = softplus(z) - y * z;
        let dz = sigmoid(z) - y;
        let mut grads = HeadGradients {
            w_hidden: vec![vec![0.0; x.len()]; pre.len()],
            b_hidden: vec![0.0; pre.len()],
            w_output: pre.iter().map(|p| dz * p.max(0.0)).collect(),
            b_output: dz,
        };
        for (j, &p) in pre.iter().enumerate() {
            if p > 0.0 {
                let d = dz * self.w_output[j];
                grads.b_hidden[j] = d;
                for (g, v) in grads.w_hidden[j].iter_mut().zip(x) {
                    *g = d * v;
                }
            }
        }
        Ok((loss, grads))
    }

    pub fn get(&self, p: HeadParam) -> f64 {
        match p {
            HeadParam::WHidden(j, i) => self.w_hidden[j][i],
            HeadParam::BHidden(j) => self.b_hidden[j],
            HeadParam::WOutput(j) => self.w_output[j],
            HeadParam::BOutput => self.b_output,
        }
    }

    pub fn set(&mut self, p: HeadParam, value: f64) {
        match p {
            HeadParam::WHidden(j, i) => self.w_hidden[j][i] = value,
            HeadParam::BHidden(j) => self.b_hidden[j] = value,
            HeadParam::WOutput(j) => self.w_output[j] = value,
            HeadParam::BOutput => self.b_output = value,
        }
    }

    fn is_finite(&self) -> bool {
        self.b_output.is_finite()
            && self.b_hidden.iter().chain(&self.w_output).all(|v| v.is_finite())
            && self.w_hidden.iter().flatten().all(|v| v.is_finite())
    }
}

impl HeadGradients {
    pub fn get(&self, p: HeadParam) -> f64 {
        match p {
            HeadParam::WHidden(j, i) => self.w_hidden[j][i],
            HeadParam::BHidden(j) => self.b_hidden[j],
            HeadParam::WOutput(j) => self.w_output[j],
            HeadParam::BOutput => self.b_output,
        }
    }

    fn add_scaled(&mut self, other: &HeadGradients, scale: f64) {
        for (a, b) in self.w_hidden.iter_mut().flatten().zip(other.w_hidden.iter().flatten()) {
            *a += scale * b;
        }
        for (a, b) in self.b_hidden.iter_mut().zip(&other.b_hidden) {
            *a += scale * b;
        }
        for (a, b) in self.w_output.iter_mut().zip(&other.w_output) {
            *a += scale * b;
        }
        self.b_output += scale * other.b_output;
    }
}

/// Either a fixed token budget or the 90th percentile of training lengths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MaxLen {
    Tokens(usize),
    #[default]
    P90,
}

impl Serialize for MaxLen {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            MaxLen::Tokens(n) => s.serialize_u64(*n as u64),
            MaxLen::P90 => s.serialize_str("p90"),
        }
    }
}

impl<'de> Deserialize<'de> for MaxLen {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            N(usize),
            S(String),
        }
        match Raw::deserialize(d)? {
            Raw::N(n) => Ok(MaxLen::Tokens(n)),
            Raw::S(s) if s == "p90" => Ok(MaxLen::P90),
            Raw::S(s) => Err(serde::de::Error::custom(format!(
                "max_len must be an integer or \"p90\", got {s:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub hidden_size: usize,
    pub allowed_hidden_sizes: Vec<usize>,
    pub max_len: MaxLen,
    pub decision_threshold: f64,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            epochs: 5,
            batch_size: 64,
            learning_rate: 1e-2,
            hidden_size: 128,
            allowed_hidden_sizes: vec![64, 128, 256],
            max_len: MaxLen::P90,
            decision_threshold: 0.5,
            seed: 42,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !self.allowed_hidden_sizes.contains(&self.hidden_size) {
            return Err(Error::Config(format!(
                "hidden_size {} is not one of {:?}",
                self.hidden_size, self.allowed_hidden_sizes
            )));
        }
        if !(self.decision_threshold > 0.0 && self.decision_threshold < 1.0) {
            return Err(Error::Config(format!(
                "decision_threshold must lie in (0, 1), got {}",
                self.decision_threshold
            )));
        }
        if self.max_len == MaxLen::Tokens(0) {
            return Err(Error::Config("max_len must be positive".into()));
        }
        Ok(())
    }
}

/// Nearest-rank percentile: the smallest length covering `ceil(p·n)` items.
pub fn compute_max_len(lengths: &[usize], percentile: f64) -> Result<usize> {
    if lengths.is_empty() {
        return Err(Error::Domain("cannot take a percentile of no lengths".into()));
    }
    if !(percentile > 0.0 && percentile <= 1.0) {
        return Err(Error::Domain(format!("percentile must lie in (0, 1], got {percentile}")));
    }
    let mut sorted = lengths.to_vec();
    sorted.sort_unstable();
    let rank = ((percentile * sorted.len() as f64) - 1e-9).ceil().max(1.0) as usize;
    Ok(sorted[rank.min(sorted.len()) - 1])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub validation: PrecisionRecallF1,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: MlpHeadParams,
    pub best_epoch: usize,
    pub max_len: usize,
    pub history: Vec<EpochRecord>,
    /// Every epoch-end head, in epoch order.
    pub checkpoints: Vec<MlpHeadParams>,
}

/// Labelled text.
pub type Example = (String, u8);

/// Encodes both splits (after truncation) and trains the head.
pub fn train(
    encoder: &dyn ParagraphEncoder,
    train_split: &[Example],
    validation: &[Example],
    config: &TrainingConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    let max_len = match config.max_len {
        MaxLen::Tokens(n) => n,
        MaxLen::P90 => {
            let lengths: Vec<usize> = train_split
                .iter()
                .map(|(t, _)| t.split_whitespace().count())
                .collect();
            compute_max_len(&lengths, 0.9)?.max(1)
        }
    };
    let enc = Truncated {
        inner: encoder,
        max_len,
    };
    let encode = |split: &[Example]| -> Result<(Vec<Vec<f64>>, Vec<u8>)> {
        let texts: Vec<String> = split.iter().map(|(t, _)| t.clone()).collect();
        Ok((enc.encode_batch(&texts)?, split.iter().map(|(_, y)| *y).collect()))
    };
    let (tx, ty) = encode(train_split)?;
    let (vx, vy) = encode(validation)?;
    let mut outcome = train_on_embeddings(&tx, &ty, &vx, &vy, config)?;
    outcome.max_len = max_len;
    Ok(outcome)
}

/// Trains the head directly on precomputed embeddings.
pub fn train_on_embeddings(
    train_x: &[Vec<f64>],
    train_y: &[u8],
    val_x: &[Vec<f64>],
    val_y: &[u8],
    config: &TrainingConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    if train_x.len() != train_y.len() || val_x.len() != val_y.len() {
        return Err(Error::Config("embedding and label counts differ".into()));
    }
    if val_x.is_empty() {
        return Err(Error::Config("validation split is empty".into()));
    }
    let positives = train_y.iter().filter(|&&y| y == 1).count();
    if positives == 0 || positives == train_y.len() {
        return Err(Error::Config(
            "training split must contain both classes".into(),
        ));
    }
    let dim = train_x[0].len();
    if dim == 0 || train_x.iter().chain(val_x).any(|x| x.len() != dim) {
        return Err(Error::Domain("embeddings must share one positive dimension".into()));
    }

    let mut params = MlpHeadParams::initialized(dim, config.hidden_size, config.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let mut order: Vec<usize> = (0..train_x.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    let mut checkpoints = Vec::with_capacity(config.epochs);

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(config.batch_size) {
            let mut acc = HeadGradients {
                w_hidden: vec![vec![0.0; dim]; config.hidden_size],
                b_hidden: vec![0.0; config.hidden_size],
                w_output: vec![0.0; config.hidden_size],
                b_output: 0.0,
            };
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let (loss, g) = params.loss_and_gradients(&train_x[i], train_y[i])?;
                if !loss.is_finite() {
                    return Err(Error::Training(format!(
                        "non-finite loss at epoch {epoch}, example {i}"
                    )));
                }
                loss_sum += loss;
                acc.add_scaled(&g, scale);
            }
            params.apply(&acc, config.learning_rate);
        }
        if !params.is_finite() {
            return Err(Error::Training(format!(
                "parameters became non-finite at epoch {epoch} (learning rate {})",
                config.learning_rate
            )));
        }
        let validation = score_embeddings(&params, val_x, val_y, config.decision_threshold)?.1;
        let train_loss = loss_sum / train_x.len() as f64;
        debug!(
            "epoch {epoch}: loss {train_loss:.5}, validation F1 {:.4}",
            validation.f1
        );
        history.push(EpochRecord {
            epoch,
            train_loss,
            validation,
        });
        checkpoints.push(params.clone());
    }

    let best = history
        .iter()
        .enumerate()
        .fold(0, |best, (i, r)| {
            if r.validation.f1 > history[best].validation.f1 {
                i
            } else {
                best
            }
        });
    info!(
        "selected epoch {} (validation F1 {:.4})",
        best + 1,
        history[best].validation.f1
    );
    Ok(TrainOutcome {
        params: checkpoints[best].clone(),
        best_epoch: best + 1,
        max_len: 0,
        history,
        checkpoints,
    })
}

impl MlpHeadParams {
    fn apply(&mut self, g: &HeadGradients, lr: f64) {
        for (w, d) in self.w_hidden.iter_mut().flatten().zip(g.w_hidden.iter().flatten()) {
            *w -= lr * d;
        }
        for (b, d) in self.b_hidden.iter_mut().zip(&g.b_hidden) {
            *b -= lr * d;
        }
        for (w, d) in self.w_output.iter_mut().zip(&g.w_output) {
            *w -= lr * d;
        }
        self.b_output -= lr * g.b_output;
    }
}

/// Confusion counts and scores of the head on embedded examples.
pub fn score_embeddings(
    params: &MlpHeadParams,
    xs: &[Vec<f64>],
    ys: &[u8],
    threshold: f64,
) -> Result<(ConfusionCounts, PrecisionRecallF1)> {
    let predicted: Vec<u8> = xs
        .iter()
        .map(|x| params.forward(x).map(|p| decide(p, threshold)))
        .collect::<Result<_>>()?;
    let counts = ConfusionCounts::from_pairs(predicted.iter().zip(ys).map(|(&p, &y)| (p == 1, y == 1)));
    Ok((counts, precision_recall_f1(&counts)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub counts: ConfusionCounts,
    pub scores: PrecisionRecallF1,
}

/// Scores a held-out split with an already-truncating encoder.
pub fn evaluate(
    params: &MlpHeadParams,
    encoder: &dyn ParagraphEncoder,
    test: &[Example],
    threshold: f64,
) -> Result<Evaluation> {
    if test.is_empty() {
        return Err(Error::Domain("test split is empty".into()));
    }
    let texts: Vec<String> = test.iter().map(|(t, _)| t.clone()).collect();
    let xs = encoder.encode_batch(&texts)?;
    let ys: Vec<u8> = test.iter().map(|(_, y)| *y).collect();
    let (counts, scores) = score_embeddings(params, &xs, &ys, threshold)?;
    Ok(Evaluation { counts, scores })
}

/// Versioned head file: dimensions, configuration echo and parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadCheckpoint {
    pub version: u32,
    pub input_dim: usize,
    pub hidden_size: usize,
    pub max_len: usize,
    pub best_epoch: usize,
    pub config: TrainingConfig,
    pub history: Vec<EpochRecord>,
    pub params: MlpHeadParams,
}

impl HeadCheckpoint {
    pub fn new(outcome: &TrainOutcome, config: &TrainingConfig) -> Self {
        HeadCheckpoint {
            version: HEAD_CHECKPOINT_VERSION,
            input_dim: outcome.params.input_dim(),
            hidden_size: outcome.params.hidden_size(),
            max_len: outcome.max_len,
            best_epoch: outcome.best_epoch,
            config: config.clone(),
            history: outcome.history.clone(),
            params: outcome.params.clone(),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string(self).map_err(|e| Error::Data(e.to_string()))?;
        fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ckpt: HeadCheckpoint = serde_json::from_str(&raw)
            .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        if ckpt.version != HEAD_CHECKPOINT_VERSION {
            return Err(Error::Data(format!(
                "unsupported head checkpoint version {}",
                ckpt.version
            )));
        }
        if ckpt.params.input_dim() != ckpt.input_dim || ckpt.params.hidden_size() != ckpt.hidden_size {
            return Err(Error::Data("head checkpoint dimensions do not match its parameters".into()));
        }
        Ok(ckpt)
    }
}
