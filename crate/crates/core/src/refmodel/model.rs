// SPDX-License-Identifier: MIT OR Apache-2.0

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::init::fill;
use super::linalg::{add, layer_norm, log_softmax, Matrix, NormCache};
use super::ModelError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    #[default]
    F64,
}

impl Precision {
    /// Rounds `v` to the storage precision.
    #[inline]
    pub fn round(self, v: f64) -> f64 {
        match self {
            Precision::F32 => v as f32 as f64,
            Precision::F64 => v,
        }
    }

    pub fn round_all(self, v: &mut [f64]) {
        if self == Precision::F32 {
            v.iter_mut().for_each(|x| *x = *x as f32 as f64);
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Precision::F32 => "f32",
            Precision::F64 => "f64",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub num_layers: usize,
    pub hidden_dim: usize,
    pub num_heads: usize,
    pub vocab_size: usize,
    pub max_seq_len: usize,
    pub init_seed: u64,
    #[serde(default)]
    pub precision: Precision,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let dims = [
            ("num_layers", self.num_layers),
            ("hidden_dim", self.hidden_dim),
            ("num_heads", self.num_heads),
            ("vocab_size", self.vocab_size),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(ModelError::InvalidConfig(format!("{name} must be >= 1")));
            }
        }
        if self.max_seq_len < 2 {
            return Err(ModelError::InvalidConfig("max_seq_len must be >= 2".into()));
        }
        if !self.hidden_dim.is_multiple_of(self.num_heads) {
            return Err(ModelError::InvalidConfig(format!(
                "hidden_dim {} is not divisible by num_heads {}",
                self.hidden_dim, self.num_heads
            )));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.hidden_dim / self.num_heads
    }

    pub fn mlp_dim(&self) -> usize {
        4 * self.hidden_dim
    }
}

/// Validated token ids for one prompt.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TokenSequence(Vec<u32>);

impl TokenSequence {
    pub fn new(tokens: Vec<u32>, config: &ModelConfig) -> Result<Self, ModelError> {
        if tokens.is_empty() {
            return Err(ModelError::EmptySequence);
        }
        if tokens.len() > config.max_seq_len {
            return Err(ModelError::SequenceTooLong {
                len: tokens.len(),
                max: config.max_seq_len,
            });
        }
        if let Some(&bad) = tokens.iter().find(|&&t| t as usize >= config.vocab_size) {
            return Err(ModelError::TokenOutOfVocab {
                token: bad,
                vocab: config.vocab_size,
            });
        }
        Ok(Self(tokens))
    }

    /// Keeps the last `max_seq_len` tokens, so the prediction position is
    /// preserved for over-long prompts.
    pub fn truncated_left(mut tokens: Vec<u32>, config: &ModelConfig) -> Result<Self, ModelError> {
        if tokens.len() > config.max_seq_len {
            tokens.drain(..tokens.len() - config.max_seq_len);
        }
        Self::new(tokens, config)
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct Block {
    pub ln1_gain: Vec<f64>,
    pub ln1_bias: Vec<f64>,
    pub w_q: Matrix,
    pub b_q: Vec<f64>,
    pub w_k: Matrix,
    pub b_k: Vec<f64>,
    pub w_v: Matrix,
    pub b_v: Vec<f64>,
    pub w_o: Matrix,
    pub b_o: Vec<f64>,
    pub ln2_gain: Vec<f64>,
    pub ln2_bias: Vec<f64>,
    pub w_fc: Matrix,
    pub b_fc: Vec<f64>,
    pub w_proj: Matrix,
    pub b_proj: Vec<f64>,
}

/// Key/value projections of one position, fed to later positions' attention.
#[derive(Debug, Clone)]
pub(crate) struct KeyValue {
    pub key: Vec<f64>,
    pub value: Vec<f64>,
}

/// Everything the single-position backward pass needs.
#[derive(Debug, Clone)]
pub(crate) struct StepCache {
    pub ln1: NormCache,
    pub query: Vec<f64>,
    pub own: KeyValue,
    /// Per head, attention weights over `context ++ [self]`.
    pub probs: Vec<Vec<f64>>,
    pub ln2: NormCache,
    pub pre_act: Vec<f64>,
}

impl Block {
    fn project_kv(&self, normed: &[f64]) -> KeyValue {
        KeyValue {
            key: add(&self.w_k.left_mul(normed), &self.b_k),
            value: add(&self.w_v.left_mul(normed), &self.b_v),
        }
    }

    pub(crate) fn key_value(&self, x: &[f64]) -> KeyValue {
        let (normed, _) = layer_norm(x, &self.ln1_gain, &self.ln1_bias);
        self.project_kv(&normed)
    }

    /// Output of this block at one position given the key/value projections
    /// of all earlier positions.
    pub(crate) fn step(&self, x: &[f64], context: &[KeyValue], heads: usize) -> (Vec<f64>, StepCache) {
        let dim = x.len();
        let head_dim = dim / heads;
        let scale = 1.0 / (head_dim as f64).sqrt();

        let (normed, ln1) = layer_norm(x, &self.ln1_gain, &self.ln1_bias);
        let query = add(&self.w_q.left_mul(&normed), &self.b_q);
        let own = self.project_kv(&normed);

        let mut mixed = vec![0.0; dim];
        let mut probs = Vec::with_capacity(heads);
        for h in 0..heads {
            let span = h * head_dim..(h + 1) * head_dim;
            let q = &query[span.clone()];
            let scores: Vec<f64> = context
                .iter()
                .chain(std::iter::once(&own))
                .map(|kv| scale * super::linalg::dot(q, &kv.key[span.clone()]))
                .collect();
            let p = super::linalg::softmax(&scores);
            for (w, kv) in p.iter().zip(context.iter().chain(std::iter::once(&own))) {
                for (m, v) in mixed[span.clone()].iter_mut().zip(&kv.value[span.clone()]) {
                    *m += w * v;
                }
            }
            probs.push(p);
        }

        let attn = add(&self.w_o.left_mul(&mixed), &self.b_o);
        let mid = add(x, &attn);
        let (normed2, ln2) = layer_norm(&mid, &self.ln2_gain, &self.ln2_bias);
        let pre_act = add(&self.w_fc.left_mul(&normed2), &self.b_fc);
        let act: Vec<f64> = pre_act.iter().map(|&u| super::linalg::gelu(u)).collect();
        let mlp = add(&self.w_proj.left_mul(&act), &self.b_proj);
        let out = add(&mid, &mlp);

        let cache = StepCache {
            ln1,
            query,
            own,
            probs,
            ln2,
            pre_act,
        };
        (out, cache)
    }
}

/// Immutable model parameters. Safe to share across threads.
#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub token_embedding: Matrix,
    pub position_embedding: Matrix,
    pub blocks: Vec<Block>,
    pub final_gain: Vec<f64>,
    pub final_bias: Vec<f64>,
    pub unembedding: Matrix,
}

// Parameter stream ids. Per-block streams start at BLOCK_STREAM_BASE and
// advance by BLOCK_STREAM_STRIDE.
const STREAM_TOKEN_EMB: u32 = 0;
const STREAM_POS_EMB: u32 = 1;
const STREAM_FINAL_GAIN: u32 = 2;
const STREAM_FINAL_BIAS: u32 = 3;
const STREAM_UNEMBED: u32 = 4;
const BLOCK_STREAM_BASE: u32 = 16;
const BLOCK_STREAM_STRIDE: u32 = 16;

/// Builds the model from the documented counter-based init scheme.
pub fn build_model(config: ModelConfig) -> Result<Model, ModelError> {
    config.validate()?;
    let seed = config.init_seed;
    let d = config.hidden_dim;
    let f = config.mlp_dim();
    let v = config.vocab_size;
    let l = config.num_layers;
    let prec = config.precision;

    let tensor = |stream: u32, len: usize, offset: f64, scale: f64| {
        let mut t = fill(seed, stream, len, offset, scale);
        prec.round_all(&mut t);
        t
    };
    let matrix = |stream: u32, rows: usize, cols: usize, scale: f64| {
        Matrix::new(rows, cols, tensor(stream, rows * cols, 0.0, scale))
    };
    // U[-1,1) has variance 1/3; this gives weights with variance 1/fan_in.
    let fan_in = |n: usize| (3.0 / n as f64).sqrt();
    let residual_scale = 1.0 / ((2 * l) as f64).sqrt();

    let blocks = (0..l)
        .map(|i| {
            let s = BLOCK_STREAM_BASE + BLOCK_STREAM_STRIDE * i as u32;
            Block {
                ln1_gain: tensor(s, d, 1.0, 0.1),
                ln1_bias: tensor(s + 1, d, 0.0, 0.05),
                w_q: matrix(s + 2, d, d, fan_in(d)),
                b_q: tensor(s + 3, d, 0.0, 0.02),
                w_k: matrix(s + 4, d, d, fan_in(d)),
                b_k: tensor(s + 5, d, 0.0, 0.02),
                w_v: matrix(s + 6, d, d, fan_in(d)),
                b_v: tensor(s + 7, d, 0.0, 0.02),
                w_o: matrix(s + 8, d, d, fan_in(d) * residual_scale),
                b_o: tensor(s + 9, d, 0.0, 0.02),
                ln2_gain: tensor(s + 10, d, 1.0, 0.1),
                ln2_bias: tensor(s + 11, d, 0.0, 0.05),
                w_fc: matrix(s + 12, d, f, fan_in(d)),
                b_fc: tensor(s + 13, f, 0.0, 0.02),
                w_proj: matrix(s + 14, f, d, fan_in(f) * residual_scale),
                b_proj: tensor(s + 15, d, 0.0, 0.02),
            }
        })
        .collect();

    Ok(Model {
        token_embedding: matrix(STREAM_TOKEN_EMB, v, d, 1.0),
        position_embedding: matrix(STREAM_POS_EMB, config.max_seq_len, d, 0.5),
        blocks,
        final_gain: tensor(STREAM_FINAL_GAIN, d, 1.0, 0.1),
        final_bias: tensor(STREAM_FINAL_BIAS, d, 0.0, 0.05),
        unembedding: matrix(STREAM_UNEMBED, d, v, 2.0 * fan_in(d)),
        config,
    })
}

impl Model {
    pub fn num_layers(&self) -> usize {
        self.config.num_layers
    }

    pub fn hidden_dim(&self) -> usize {
        self.config.hidden_dim
    }

    pub fn vocab_size(&self) -> usize {
        self.config.vocab_size
    }

    /// Identifier used in trace headers: config digest plus parameter checksum.
    pub fn model_id(&self) -> String {
        let c = &self.config;
        format!(
            "refmodel-L{}-D{}-H{}-V{}-s{}-{}",
            c.num_layers,
            c.hidden_dim,
            c.num_heads,
            c.vocab_size,
            c.init_seed,
            &self.checksum()[..12]
        )
    }

    /// Visits every parameter value in the canonical stream order.
    pub fn for_each_parameter(&self, mut visit: impl FnMut(f64)) {
        let mut all = |v: &[f64]| v.iter().for_each(|&x| visit(x));
        all(&self.token_embedding.data);
        all(&self.position_embedding.data);
        for b in &self.blocks {
            all(&b.ln1_gain);
            all(&b.ln1_bias);
            all(&b.w_q.data);
            all(&b.b_q);
            all(&b.w_k.data);
            all(&b.b_k);
            all(&b.w_v.data);
            all(&b.b_v);
            all(&b.w_o.data);
            all(&b.b_o);
            all(&b.ln2_gain);
            all(&b.ln2_bias);
            all(&b.w_fc.data);
            all(&b.b_fc);
            all(&b.w_proj.data);
            all(&b.b_proj);
        }
        all(&self.final_gain);
        all(&self.final_bias);
        all(&self.unembedding.data);
    }

    pub fn parameter_count(&self) -> usize {
        let mut n = 0;
        self.for_each_parameter(|_| n += 1);
        n
    }

    /// SHA-256 over the little-endian f64 bytes of every parameter, hex encoded.
    pub fn checksum(&self) -> String {
        let mut hasher = Sha256::new();
        self.for_each_parameter(|x| hasher.update(x.to_le_bytes()));
        hasher
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn check_layer(&self, layer: usize) -> Result<(), ModelError> {
        if layer > self.num_layers() {
            return Err(ModelError::LayerOutOfRange {
                layer,
                max: self.num_layers(),
            });
        }
        Ok(())
    }

    fn embed(&self, tokens: &[u32]) -> Vec<Vec<f64>> {
        tokens
            .iter()
            .enumerate()
            .map(|(pos, &t)| {
                let mut h = add(
                    self.token_embedding.row(t as usize),
                    self.position_embedding.row(pos),
                );
                self.config.precision.round_all(&mut h);
                h
            })
            .collect()
    }

    /// Runs block `index` (0-based) over every position with causal attention.
    pub(crate) fn run_block(&self, index: usize, states: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let block = &self.blocks[index];
        let heads = self.config.num_heads;
        let kvs: Vec<KeyValue> = states.iter().map(|x| block.key_value(x)).collect();
        states
            .iter()
            .enumerate()
            .map(|(t, x)| {
                let (mut out, _) = block.step(x, &kvs[..t], heads);
                self.config.precision.round_all(&mut out);
                out
            })
            .collect()
    }

    /// Final norm and unembedding of a single `h^(L)`.
    pub(crate) fn head(&self, h: &[f64]) -> (Vec<f64>, NormCache) {
        let (normed, cache) = layer_norm(h, &self.final_gain, &self.final_bias);
        let mut logits = self.unembedding.left_mul(&normed);
        self.config.precision.round_all(&mut logits);
        (logits, cache)
    }

    pub fn tokens(&self, tokens: Vec<u32>) -> Result<TokenSequence, ModelError> {
        TokenSequence::new(tokens, &self.config)
    }
}

/// Hidden states of every position at every layer (`layers[l][t]`), used for
/// suffix evaluation and causality checks.
#[derive(Debug, Clone, PartialEq)]
pub struct FullTrace {
    pub layers: Vec<Vec<Vec<f64>>>,
    pub logits: Vec<f64>,
}

impl FullTrace {
    pub fn last_hidden(&self, layer: usize) -> &[f64] {
        self.layers[layer].last().expect("non-empty sequence")
    }
}

pub fn forward_full(model: &Model, tokens: &TokenSequence) -> Result<FullTrace, ModelError> {
    let seq = TokenSequence::new(tokens.as_slice().to_vec(), &model.config)?;
    let mut layers = Vec::with_capacity(model.num_layers() + 1);
    layers.push(model.embed(seq.as_slice()));
    for i in 0..model.num_layers() {
        let next = model.run_block(i, &layers[i]);
        layers.push(next);
    }
    let (logits, _) = model.head(layers[model.num_layers()].last().expect("non-empty"));
    Ok(FullTrace { layers, logits })
}

/// Last-position summary of one forward pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerTrace {
    pub prompt_id: String,
    pub model_id: String,
    /// `h^(0) ..= h^(L)` at the last position.
    pub hidden: Vec<Vec<f64>>,
    pub logits: Vec<f64>,
    pub logprobs: Vec<f64>,
}

impl LayerTrace {
    /// Builds a trace from externally produced hidden states and logits.
    pub fn from_parts(
        prompt_id: impl Into<String>,
        model_id: impl Into<String>,
        hidden: Vec<Vec<f64>>,
        logits: Vec<f64>,
    ) -> Self {
        let logprobs = log_softmax(&logits);
        Self {
            prompt_id: prompt_id.into(),
            model_id: model_id.into(),
            hidden,
            logits,
            logprobs,
        }
    }

    pub fn num_layers(&self) -> usize {
        self.hidden.len().saturating_sub(1)
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden.first().map_or(0, Vec::len)
    }

    pub fn vocab_size(&self) -> usize {
        self.logits.len()
    }

    pub fn argmax(&self) -> u32 {
        argmax_of(&self.logits)
    }
}

pub(crate) fn argmax_of(values: &[f64]) -> u32 {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best as u32
}

pub fn forward_trace(
    model: &Model,
    tokens: &TokenSequence,
    prompt_id: &str,
) -> Result<LayerTrace, ModelError> {
    let full = forward_full(model, tokens)?;
    let hidden = full
        .layers
        .iter()
        .map(|states| states.last().expect("non-empty").clone())
        .collect();
    Ok(LayerTrace::from_parts(
        prompt_id,
        model.model_id(),
        hidden,
        full.logits,
    ))
}

/// Log-probabilities after replacing the last-position state at `layer`
/// with `replacement`, keeping every other position of `layer_states` fixed.
pub fn suffix_logprobs(
    model: &Model,
    layer_states: &[Vec<f64>],
    replacement: &[f64],
    layer: usize,
) -> Result<Vec<f64>, ModelError> {
    model.check_layer(layer)?;
    let d = model.hidden_dim();
    if replacement.len() != d {
        return Err(ModelError::DimensionMismatch {
            expected: d,
            actual: replacement.len(),
        });
    }
    if let Some(bad) = layer_states.iter().find(|s| s.len() != d) {
        return Err(ModelError::DimensionMismatch {
            expected: d,
            actual: bad.len(),
        });
    }
    if layer_states.is_empty() {
        return Err(ModelError::EmptySequence);
    }
    let prefix = &layer_states[..layer_states.len() - 1];
    let (last, _) = super::grad::suffix_forward(model, prefix, replacement, layer);
    let (logits, _) = model.head(&last);
    Ok(log_softmax(&logits))
}

/// `log π(y_t | h)` with `h` substituted at the last position of `layer`.
pub fn suffix_logprob(
    model: &Model,
    layer_states: &[Vec<f64>],
    replacement: &[f64],
    layer: usize,
    target: u32,
) -> Result<f64, ModelError> {
    if target as usize >= model.vocab_size() {
        return Err(ModelError::TokenOutOfVocab {
            token: target,
            vocab: model.vocab_size(),
        });
    }
    Ok(suffix_logprobs(model, layer_states, replacement, layer)?[target as usize])
}

