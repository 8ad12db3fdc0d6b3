//! A small transformer-encoder acceptability classifier.
//!
//! Token and position embeddings are summed ([`ModelWeights::embed`]) and
//! fed to [`ModelWeights::forward_from_embeddings`]: embedding layer norm,
//! `n_layers` post-norm encoder blocks (multi-head self-attention, GELU
//! feed-forward), first-position pooling through a tanh dense layer, and a
//! two-way classifier head. Attribution targets the summed embeddings, so
//! the second entry point takes them directly.
//!
//! Class index 0 is LUA and 1 is LA. There is no dropout; the same weights
//! and input always give the same logits.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::label::Label;
use crate::rng::{stream_rng, Stream};
use crate::tensor::{Tape, Tensor, TensorError, Var};
use crate::tokenizer::{PAD_ID, SEP_ID};

pub const WEIGHTS_MAGIC: &[u8; 8] = b"LIGASW01";
const LN_EPS: f64 = 1e-5;
const MASKED_SCORE: f64 = -1e9;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("token id {id} out of range for vocabulary of {vocab_size}")]
    TokenOutOfRange { id: usize, vocab_size: usize },
    #[error("sequence of {len} tokens exceeds max_seq_len {max}")]
    SequenceTooLong { len: usize, max: usize },
    #[error("embedding shape {got:?} does not match [len, {d_model}]")]
    EmbeddingShape { got: Vec<usize>, d_model: usize },
    #[error("non-finite activations after encoder layer {layer}")]
    NonFinite { layer: usize },
    #[error("training diverged: non-finite loss in epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("invalid training corpus: {0}")]
    Corpus(String),
    #[error("bad weight file magic")]
    BadMagic,
    #[error("weight file truncated or padded: expected {expected} bytes, found {actual}")]
    Truncated { expected: usize, actual: usize },
    #[error("weight file header: {0}")]
    Header(String),
    #[error("tensor {name} has shape {got:?}, config requires {expected:?}")]
    ShapeMismatch {
        name: String,
        got: Vec<usize>,
        expected: Vec<usize>,
    },
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = ModelError> = std::result::Result<T, E>;

/// Which scalar of the classifier output is explained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetSpace {
    #[default]
    Logit,
    Probability,
}

impl TargetSpace {
    pub fn as_str(self) -> &'static str {
        match self {
            TargetSpace::Logit => "logit",
            TargetSpace::Probability => "probability",
        }
    }
}

impl std::str::FromStr for TargetSpace {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "logit" => Ok(TargetSpace::Logit),
            "probability" | "prob" => Ok(TargetSpace::Probability),
            _ => Err(format!("unknown target space {s:?} (expected logit or probability)")),
        }
    }
}

fn default_tie() -> Label {
    Label::LUA
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub d_ff: usize,
    pub max_seq_len: usize,
    pub n_classes: usize,
    pub seed: u64,
    /// Class reported when both probabilities are equal.
    #[serde(default = "default_tie")]
    pub tie_break: Label,
}

impl ModelConfig {
    pub fn new(vocab_size: usize) -> Self {
        Self {
            vocab_size,
            d_model: 32,
            n_heads: 4,
            n_layers: 2,
            d_ff: 64,
            max_seq_len: 32,
            n_classes: 2,
            seed: 0,
            tie_break: Label::LUA,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("vocab_size", self.vocab_size),
            ("d_model", self.d_model),
            ("n_heads", self.n_heads),
            ("n_layers", self.n_layers),
            ("d_ff", self.d_ff),
            ("max_seq_len", self.max_seq_len),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(ModelError::Config(format!("{name} must be positive")));
            }
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return Err(ModelError::Config(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if self.n_classes != 2 {
            return Err(ModelError::Config("n_classes is fixed at 2".into()));
        }
        if self.vocab_size <= SEP_ID {
            return Err(ModelError::Config(
                "vocabulary must contain the four special tokens".into(),
            ));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }
}

/// Classifier output for one sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub logits: [f64; 2],
    pub probs: [f64; 2],
    pub predicted: Label,
}

impl Prediction {
    pub fn from_logits(logits: [f64; 2], tie_break: Label) -> Self {
        let max = logits[0].max(logits[1]);
        let e = [(logits[0] - max).exp(), (logits[1] - max).exp()];
        let total = e[0] + e[1];
        let probs = [e[0] / total, e[1] / total];
        let predicted = if probs[0] > probs[1] {
            Label::LUA
        } else if probs[1] > probs[0] {
            Label::LA
        } else {
            tie_break
        };
        Self {
            logits,
            probs,
            predicted,
        }
    }

    /// Probability of the predicted class.
    pub fn confidence(&self) -> f64 {
        self.probs[self.predicted.class_index()]
    }
}

#[derive(Debug, Clone, Copy)]
enum Init {
    Uniform,
    Zeros,
    Ones,
}

#[derive(Debug, Clone)]
struct HeadIdx {
    wq: usize,
    bq: usize,
    wk: usize,
    bk: usize,
    wv: usize,
    bv: usize,
    wo: usize,
}

#[derive(Debug, Clone)]
struct LayerIdx {
    heads: Vec<HeadIdx>,
    bo: usize,
    ln1_g: usize,
    ln1_b: usize,
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    ln2_g: usize,
    ln2_b: usize,
}

// Parameter names, shapes and positions for one config.
#[derive(Debug, Clone)]
struct Layout {
    specs: Vec<(String, Vec<usize>, Init)>,
    tok: usize,
    pos: usize,
    emb_g: usize,
    emb_b: usize,
    layers: Vec<LayerIdx>,
    wp: usize,
    bp: usize,
    wc: usize,
    bc: usize,
}

impl Layout {
    fn new(c: &ModelConfig) -> Self {
        let mut specs = Vec::new();
        let mut add = |name: String, shape: Vec<usize>, init: Init| {
            specs.push((name, shape, init));
            specs.len() - 1
        };
        let (d, dh) = (c.d_model, c.head_dim());
        let tok = add("embeddings.token".into(), vec![c.vocab_size, d], Init::Uniform);
        let pos = add("embeddings.position".into(), vec![c.max_seq_len, d], Init::Uniform);
        let emb_g = add("embeddings.ln.gain".into(), vec![d], Init::Ones);
        let emb_b = add("embeddings.ln.bias".into(), vec![d], Init::Zeros);
        let mut layers = Vec::new();
        for l in 0..c.n_layers {
            let p = format!("layer{l}");
            let heads = (0..c.n_heads)
                .map(|h| {
                    let hp = format!("{p}.attn.head{h}");
                    HeadIdx {
                        wq: add(format!("{hp}.wq"), vec![d, dh], Init::Uniform),
                        bq: add(format!("{hp}.bq"), vec![dh], Init::Zeros),
                        wk: add(format!("{hp}.wk"), vec![d, dh], Init::Uniform),
                        bk: add(format!("{hp}.bk"), vec![dh], Init::Zeros),
                        wv: add(format!("{hp}.wv"), vec![d, dh], Init::Uniform),
                        bv: add(format!("{hp}.bv"), vec![dh], Init::Zeros),
                        wo: add(format!("{hp}.wo"), vec![dh, d], Init::Uniform),
                    }
                })
                .collect();
            layers.push(LayerIdx {
                heads,
                bo: add(format!("{p}.attn.bo"), vec![d], Init::Zeros),
                ln1_g: add(format!("{p}.ln1.gain"), vec![d], Init::Ones),
                ln1_b: add(format!("{p}.ln1.bias"), vec![d], Init::Zeros),
                w1: add(format!("{p}.ff.w1"), vec![d, c.d_ff], Init::Uniform),
                b1: add(format!("{p}.ff.b1"), vec![c.d_ff], Init::Zeros),
                w2: add(format!("{p}.ff.w2"), vec![c.d_ff, d], Init::Uniform),
                b2: add(format!("{p}.ff.b2"), vec![d], Init::Zeros),
                ln2_g: add(format!("{p}.ln2.gain"), vec![d], Init::Ones),
                ln2_b: add(format!("{p}.ln2.bias"), vec![d], Init::Zeros),
            });
        }
        let wp = add("pooler.w".into(), vec![d, d], Init::Uniform);
        let bp = add("pooler.b".into(), vec![d], Init::Zeros);
        let wc = add("classifier.w".into(), vec![d, 2], Init::Uniform);
        let bc = add("classifier.b".into(), vec![2], Init::Zeros);
        Self {
            specs,
            tok,
            pos,
            emb_g,
            emb_b,
            layers,
            wp,
            bp,
            wc,
            bc,
        }
    }
}

/// Encoder parameters together with the config that shaped them.
#[derive(Debug, Clone)]
pub struct ModelWeights {
    config: ModelConfig,
    layout: Layout,
    params: Vec<Tensor>,
}

impl PartialEq for ModelWeights {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config && self.params == other.params
    }
}

#[derive(Serialize, Deserialize)]
struct HeaderEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    tensors: Vec<HeaderEntry>,
    payload_bytes: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    config_digest: Option<String>,
}

impl ModelWeights {
    /// Seeded uniform initialization in `[-1/sqrt(d_model), 1/sqrt(d_model)]`.
    pub fn init(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(&config);
        let mut rng = stream_rng(config.seed, Stream::ModelInit);
        let scale = 1.0 / (config.d_model as f64).sqrt();
        let params = layout
            .specs
            .iter()
            .map(|(_, shape, init)| {
                let n: usize = shape.iter().product();
                let data = match init {
                    Init::Uniform => (0..n).map(|_| rng.gen_range(-scale..=scale)).collect(),
                    Init::Zeros => vec![0.0; n],
                    Init::Ones => vec![1.0; n],
                };
                Tensor::new(shape.clone(), data)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { config, layout, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// `(name, tensor)` pairs in storage order.
    pub fn named_tensors(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.layout.specs.iter().map(|(n, _, _)| n.as_str()).zip(&self.params)
    }

    pub fn token_table(&self) -> &Tensor {
        &self.params[self.layout.tok]
    }

    pub fn position_table(&self) -> &Tensor {
        &self.params[self.layout.pos]
    }

    /// SHA-256 over the serialized weights, hex encoded.
    pub fn checksum(&self) -> String {
        hex::encode(Sha256::digest(self.to_bytes(None)))
    }

    fn check_ids(&self, ids: &[usize]) -> Result<()> {
        if ids.len() > self.config.max_seq_len {
            return Err(ModelError::SequenceTooLong {
                len: ids.len(),
                max: self.config.max_seq_len,
            });
        }
        if ids.is_empty() {
            return Err(ModelError::Config("empty token sequence".into()));
        }
        if let Some(&id) = ids.iter().find(|&&id| id >= self.config.vocab_size) {
            return Err(ModelError::TokenOutOfRange {
                id,
                vocab_size: self.config.vocab_size,
            });
        }
        Ok(())
    }

    /// Token embedding plus position embedding, one row per token.
    pub fn embed(&self, ids: &[usize]) -> Result<Tensor> {
        self.check_ids(ids)?;
        let d = self.config.d_model;
        let (tok, pos) = (self.token_table(), self.position_table());
        let mut data = Vec::with_capacity(ids.len() * d);
        for (i, &id) in ids.iter().enumerate() {
            data.extend(tok.row(id).iter().zip(pos.row(i)).map(|(t, p)| t + p));
        }
        Ok(Tensor::matrix(ids.len(), d, data)?)
    }

    fn check_embeddings(&self, e: &Tensor) -> Result<()> {
        let s = e.shape();
        if s.len() != 2 || s[1] != self.config.d_model || s[0] > self.config.max_seq_len {
            return Err(ModelError::EmbeddingShape {
                got: s.to_vec(),
                d_model: self.config.d_model,
            });
        }
        Ok(())
    }

    // Places parameters on the tape. Embedding tables are only needed when
    // the tape itself performs the lookup (training).
    fn bind(&self, tape: &mut Tape, trainable: bool, with_tables: bool) -> Vec<Option<Var>> {
        self.params
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let table = i == self.layout.tok || i == self.layout.pos;
                (with_tables || !table).then(|| tape.leaf(p.clone(), trainable))
            })
            .collect()
    }

    /// Records the encoder on `tape` and returns the `[1, 2]` logits.
    ///
    /// `key_mask[j] == false` hides key position `j` from every query.
    fn encode(&self, tape: &mut Tape, params: &[Option<Var>], e: Var, key_mask: Option<&[bool]>) -> Result<Var> {
        let p = |i: usize| params[i].expect("parameter bound");
        let lay = &self.layout;
        let len = tape.value(e).rows();
        let inv_sqrt = 1.0 / (self.config.head_dim() as f64).sqrt();
        let mask = match key_mask {
            Some(m) if m.iter().any(|&keep| !keep) => {
                let row: Vec<f64> = m.iter().map(|&keep| if keep { 0.0 } else { MASKED_SCORE }).collect();
                let data = row.iter().copied().cycle().take(len * len).collect();
                Some(tape.constant(Tensor::matrix(len, len, data)?))
            }
            _ => None,
        };

        let mut x = tape.layer_norm(e, p(lay.emb_g), p(lay.emb_b), LN_EPS)?;
        for (li, layer) in lay.layers.iter().enumerate() {
            let mut attn: Option<Var> = None;
            for h in &layer.heads {
                let q = tape.matmul(x, p(h.wq))?;
                let q = tape.add_row_bias(q, p(h.bq))?;
                let k = tape.matmul(x, p(h.wk))?;
                let k = tape.add_row_bias(k, p(h.bk))?;
                let v = tape.matmul(x, p(h.wv))?;
                let v = tape.add_row_bias(v, p(h.bv))?;
                let kt = tape.transpose(k)?;
                let scores = tape.matmul(q, kt)?;
                let mut scores = tape.scale(scores, inv_sqrt);
                if let Some(m) = mask {
                    scores = tape.add(scores, m)?;
                }
                let weights = tape.softmax(scores, 1)?;
                let ctx = tape.matmul(weights, v)?;
                let out = tape.matmul(ctx, p(h.wo))?;
                attn = Some(match attn {
                    Some(a) => tape.add(a, out)?,
                    None => out,
                });
            }
            let attn = tape.add_row_bias(attn.expect("n_heads >= 1"), p(layer.bo))?;
            let res = tape.add(x, attn)?;
            x = tape.layer_norm(res, p(layer.ln1_g), p(layer.ln1_b), LN_EPS)?;
            let ff = tape.matmul(x, p(layer.w1))?;
            let ff = tape.add_row_bias(ff, p(layer.b1))?;
            let ff = tape.gelu(ff);
            let ff = tape.matmul(ff, p(layer.w2))?;
            let ff = tape.add_row_bias(ff, p(layer.b2))?;
            let res = tape.add(x, ff)?;
            x = tape.layer_norm(res, p(layer.ln2_g), p(layer.ln2_b), LN_EPS)?;
            if !tape.value(x).is_finite() {
                return Err(ModelError::NonFinite { layer: li });
            }
        }
        let pooled = tape.row(x, 0)?;
        let pooled = tape.matmul(pooled, p(lay.wp))?;
        let pooled = tape.add_row_bias(pooled, p(lay.bp))?;
        let pooled = tape.tanh(pooled);
        let logits = tape.matmul(pooled, p(lay.wc))?;
        let logits = tape.add_row_bias(logits, p(lay.bc))?;
        if !tape.value(logits).is_finite() {
            return Err(ModelError::NonFinite {
                layer: self.config.n_layers,
            });
        }
        Ok(logits)
    }

    fn prediction(&self, logits: &Tensor) -> Prediction {
        Prediction::from_logits([logits.data()[0], logits.data()[1]], self.config.tie_break)
    }

    pub fn forward_from_embeddings(&self, e: &Tensor) -> Result<Prediction> {
        self.check_embeddings(e)?;
        let mut tape = Tape::new();
        let params = self.bind(&mut tape, false, false);
        let ev = tape.constant(e.clone());
        let logits = self.encode(&mut tape, &params, ev, None)?;
        Ok(self.prediction(tape.value(logits)))
    }

    pub fn predict(&self, ids: &[usize]) -> Result<Prediction> {
        self.forward_from_embeddings(&self.embed(ids)?)
    }

    fn target_on_tape(&self, tape: &mut Tape, logits: Var, class: usize, space: TargetSpace) -> Result<Var> {
        Ok(match space {
            TargetSpace::Logit => tape.index(logits, class)?,
            TargetSpace::Probability => {
                let probs = tape.softmax(logits, 1)?;
                tape.index(probs, class)?
            }
        })
    }

    /// Scalar target output for embeddings `e`.
    pub fn target_value(&self, e: &Tensor, class: usize, space: TargetSpace) -> Result<f64> {
        self.check_embeddings(e)?;
        let mut tape = Tape::new();
        let params = self.bind(&mut tape, false, false);
        let ev = tape.constant(e.clone());
        let logits = self.encode(&mut tape, &params, ev, None)?;
        let t = self.target_on_tape(&mut tape, logits, class, space)?;
        Ok(tape.value(t).data()[0])
    }

    /// Target output and its gradient with respect to the embeddings.
    pub fn target_value_and_grad(&self, e: &Tensor, class: usize, space: TargetSpace) -> Result<(f64, Tensor)> {
        self.check_embeddings(e)?;
        let mut tape = Tape::new();
        let params = self.bind(&mut tape, false, false);
        let ev = tape.leaf(e.clone(), true);
        let logits = self.encode(&mut tape, &params, ev, None)?;
        let t = self.target_on_tape(&mut tape, logits, class, space)?;
        let value = tape.value(t).data()[0];
        tape.backward(t)?;
        let grad = tape.take_grad(ev).expect("embedding leaf requires grad");
        Ok((value, grad))
    }

    /// Mean cross-entropy of a batch and its gradient for every parameter,
    /// in [`ModelWeights::named_tensors`] order.
    ///
    /// Sequences are padded with `[PAD]` to the longest one and padded keys
    /// are masked out of attention.
    pub fn loss_and_grads(&self, batch: &[(&[usize], Label)]) -> Result<(f64, Vec<Tensor>)> {
        let width = batch
            .iter()
            .map(|(ids, _)| ids.len())
            .max()
            .ok_or_else(|| ModelError::Corpus("empty batch".into()))?;
        for (ids, _) in batch {
            self.check_ids(ids)?;
        }
        let mut tape = Tape::new();
        let params = self.bind(&mut tape, true, true);
        let lay = &self.layout;
        let positions: Vec<usize> = (0..width).collect();
        let pos = tape.gather_rows(params[lay.pos].expect("bound"), &positions)?;
        let mut total: Option<Var> = None;
        for (ids, label) in batch {
            let mut padded = ids.to_vec();
            padded.resize(width, PAD_ID);
            let mask: Vec<bool> = (0..width).map(|j| j < ids.len()).collect();
            let tok = tape.gather_rows(params[lay.tok].expect("bound"), &padded)?;
            let e = tape.add(tok, pos)?;
            let logits = self.encode(&mut tape, &params, e, Some(&mask))?;
            let logp = tape.log_softmax(logits);
            let lp = tape.index(logp, label.class_index())?;
            total = Some(match total {
                Some(t) => tape.add(t, lp)?,
                None => lp,
            });
        }
        let total = total.expect("non-empty batch");
        let loss = tape.scale(total, -1.0 / batch.len() as f64);
        let value = tape.value(loss).data()[0];
        tape.backward(loss)?;
        let grads = params
            .iter()
            .map(|v| tape.take_grad(v.expect("bound")).expect("trainable leaf"))
            .collect();
        Ok((value, grads))
    }

    /// Values of parameter `index` (in [`ModelWeights::named_tensors`]
    /// order) for in-place edits; the shape is fixed.
    pub fn param_data_mut(&mut self, index: usize) -> &mut [f64] {
        self.params[index].data_mut()
    }

    /// Logits of a padded sequence with padded keys masked out. Used to
    /// check that batching does not change what the model computes.
    pub fn predict_padded(&self, ids: &[usize], pad_to: usize) -> Result<Prediction> {
        let mut padded = ids.to_vec();
        padded.resize(pad_to.max(ids.len()), PAD_ID);
        self.check_ids(&padded)?;
        let mask: Vec<bool> = (0..padded.len()).map(|i| i < ids.len()).collect();
        let e = self.embed(&padded)?;
        let mut tape = Tape::new();
        let params = self.bind(&mut tape, false, false);
        let ev = tape.constant(e);
        let logits = self.encode(&mut tape, &params, ev, Some(&mask))?;
        Ok(self.prediction(tape.value(logits)))
    }

    /// Serializes to the `LIGASW01` container.
    pub fn to_bytes(&self, config_digest: Option<&str>) -> Vec<u8> {
        let mut offset = 0;
        let tensors = self
            .named_tensors()
            .map(|(name, t)| {
                let entry = HeaderEntry {
                    name: name.to_string(),
                    shape: t.shape().to_vec(),
                    offset,
                };
                offset += t.len() * 8;
                entry
            })
            .collect();
        let header = Header {
            config: self.config.clone(),
            tensors,
            payload_bytes: offset,
            config_digest: config_digest.map(str::to_string),
        };
        let header = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::with_capacity(16 + header.len() + offset);
        out.extend_from_slice(WEIGHTS_MAGIC);
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for t in &self.params {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 8 || &bytes[..8] != WEIGHTS_MAGIC {
            return Err(ModelError::BadMagic);
        }
        if bytes.len() < 16 {
            return Err(ModelError::Truncated {
                expected: 16,
                actual: bytes.len(),
            });
        }
        let header_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let payload_start = 16usize
            .checked_add(header_len)
            .filter(|&end| end <= bytes.len())
            .ok_or(ModelError::Truncated {
                expected: 16usize.saturating_add(header_len),
                actual: bytes.len(),
            })?;
        let header: Header =
            serde_json::from_slice(&bytes[16..payload_start]).map_err(|e| ModelError::Header(e.to_string()))?;
        let expected = payload_start.saturating_add(header.payload_bytes);
        if bytes.len() != expected {
            return Err(ModelError::Truncated {
                expected,
                actual: bytes.len(),
            });
        }
        header.config.validate()?;
        let layout = Layout::new(&header.config);
        if header.tensors.len() != layout.specs.len() {
            return Err(ModelError::Header(format!(
                "{} tensors listed, config requires {}",
                header.tensors.len(),
                layout.specs.len()
            )));
        }
        let payload = &bytes[payload_start..];
        let mut params = Vec::with_capacity(layout.specs.len());
        for (entry, (name, shape, _)) in header.tensors.iter().zip(&layout.specs) {
            if &entry.name != name {
                return Err(ModelError::Header(format!(
                    "expected tensor {name}, found {}",
                    entry.name
                )));
            }
            if &entry.shape != shape {
                return Err(ModelError::ShapeMismatch {
                    name: name.clone(),
                    got: entry.shape.clone(),
                    expected: shape.clone(),
                });
            }
            let n: usize = shape.iter().product();
            let end = entry
                .offset
                .checked_add(n * 8)
                .filter(|&e| e <= payload.len())
                .ok_or(ModelError::Truncated {
                    expected: payload_start + entry.offset + n * 8,
                    actual: bytes.len(),
                })?;
            let data = payload[entry.offset..end]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            params.push(Tensor::new(shape.clone(), data)?);
        }
        Ok(Self {
            config: header.config,
            layout,
            params,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>, config_digest: Option<&str>) -> Result<()> {
        fs::write(path, self.to_bytes(config_digest))?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

/// Optimizer settings for [`train`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 3e-3,
            epochs: 30,
            batch: 16,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Mean cross-entropy per epoch.
    pub loss_trace: Vec<f64>,
    pub train_accuracy: f64,
}

struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(params: &[Tensor]) -> Self {
        Self {
            m: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            v: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [Tensor], grads: &[Tensor], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for (((w, &g), m), v) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                *m = Self::BETA1 * *m + (1.0 - Self::BETA1) * g;
                *v = Self::BETA2 * *v + (1.0 - Self::BETA2) * g * g;
                *w -= lr * (*m / c1) / ((*v / c2).sqrt() + Self::EPS);
            }
        }
    }
}

/// Fraction of examples whose prediction matches the label.
pub fn accuracy(weights: &ModelWeights, corpus: &[(Vec<usize>, Label)]) -> Result<f64> {
    if corpus.is_empty() {
        return Ok(0.0);
    }
    let mut correct = 0;
    for (ids, label) in corpus {
        if weights.predict(ids)?.predicted == *label {
            correct += 1;
        }
    }
    Ok(correct as f64 / corpus.len() as f64)
}

/// Minimizes cross-entropy with Adam over shuffled mini-batches.
///
/// Each batch is padded with `[PAD]` to its longest member and padded keys
/// are masked out of attention.
pub fn train(
    initial: &ModelWeights,
    corpus: &[(Vec<usize>, Label)],
    cfg: &TrainConfig,
) -> Result<(ModelWeights, TrainReport)> {
    if corpus.is_empty() {
        return Err(ModelError::Corpus("empty corpus".into()));
    }
    if !Label::ALL.iter().all(|l| corpus.iter().any(|(_, g)| g == l)) {
        return Err(ModelError::Corpus("both labels must be present".into()));
    }
    if cfg.batch == 0 || cfg.epochs == 0 || cfg.lr.is_nan() || cfg.lr <= 0.0 {
        return Err(ModelError::Config("lr, epochs and batch must be positive".into()));
    }
    for (ids, _) in corpus {
        initial.check_ids(ids)?;
    }

    let mut weights = initial.clone();
    let mut adam = Adam::new(&weights.params);
    let mut rng = stream_rng(cfg.seed, Stream::TrainShuffle);
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    let mut loss_trace = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch) {
            let items: Vec<(&[usize], Label)> = batch.iter().map(|&i| (corpus[i].0.as_slice(), corpus[i].1)).collect();
            let (loss_value, grads) = weights.loss_and_grads(&items).map_err(|err| match err {
                ModelError::NonFinite { .. } => ModelError::Diverged { epoch },
                other => other,
            })?;
            if !loss_value.is_finite() || grads.iter().any(|g| !g.is_finite()) {
                return Err(ModelError::Diverged { epoch });
            }
            epoch_loss += loss_value * batch.len() as f64;
            adam.step(&mut weights.params, &grads, cfg.lr);
        }
        loss_trace.push(epoch_loss / corpus.len() as f64);
    }

    let train_accuracy = accuracy(&weights, corpus)?;
    Ok((
        weights,
        TrainReport {
            loss_trace,
            train_accuracy,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64) -> ModelWeights {
        let mut c = ModelConfig::new(12).with_seed(seed);
        c.d_model = 8;
        c.n_heads = 2;
        c.d_ff = 16;
        c.max_seq_len = 10;
        ModelWeights::init(c).unwrap()
    }

    #[test]
    fn init_is_deterministic_in_seed() {
        assert_eq!(small(1).checksum(), small(1).checksum());
        assert_ne!(small(1).checksum(), small(2).checksum());
    }

    #[test]
    fn heads_must_divide_d_model() {
        let mut c = ModelConfig::new(10);
        c.n_heads = 5;
        assert!(matches!(ModelWeights::init(c), Err(ModelError::Config(_))));
    }

    #[test]
    fn embed_is_token_plus_position() {
        let w = small(3);
        let ids = [2, 5, 5, 3];
        let e = w.embed(&ids).unwrap();
        for (i, &id) in ids.iter().enumerate() {
            for j in 0..8 {
                assert_eq!(
                    e.get2(i, j),
                    w.token_table().get2(id, j) + w.position_table().get2(i, j)
                );
            }
        }
        // Same token, different positions.
        assert_ne!(e.row(1), e.row(2));
        assert_eq!(w.embed(&[2, 3]).unwrap().shape(), &[2, 8]);
    }

    #[test]
    fn embed_rejects_bad_ids() {
        let w = small(3);
        assert!(matches!(
            w.embed(&[2, 99]),
            Err(ModelError::TokenOutOfRange { id: 99, .. })
        ));
        assert!(matches!(
            w.embed(&[2; 11]),
            Err(ModelError::SequenceTooLong { len: 11, max: 10 })
        ));
    }

    #[test]
    fn predict_matches_embedding_path() {
        let w = small(4);
        let ids = [2, 6, 7, 3];
        let a = w.predict(&ids).unwrap();
        let b = w.forward_from_embeddings(&w.embed(&ids).unwrap()).unwrap();
        assert_eq!(a.logits[0].to_bits(), b.logits[0].to_bits());
        assert_eq!(a.logits[1].to_bits(), b.logits[1].to_bits());
        assert!((a.probs[0] + a.probs[1] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn masked_padding_does_not_change_logits() {
        let w = small(5);
        let ids = [2, 6, 7, 8, 3];
        let plain = w.predict(&ids).unwrap();
        let padded = w.predict_padded(&ids, 9).unwrap();
        for c in 0..2 {
            assert!((plain.logits[c] - padded.logits[c]).abs() < 1e-12);
        }
    }

    #[test]
    fn tie_resolves_to_configured_class() {
        let p = Prediction::from_logits([0.3, 0.3], Label::LUA);
        assert_eq!(p.probs, [0.5, 0.5]);
        assert_eq!(p.predicted, Label::LUA);
        assert_eq!(Prediction::from_logits([0.3, 0.3], Label::LA).predicted, Label::LA);
        assert_eq!(Prediction::from_logits([0.0, 1.0], Label::LUA).predicted, Label::LA);
    }

    #[test]
    fn weights_round_trip_bit_exact() {
        let w = small(6);
        let bytes = w.to_bytes(Some("abc"));
        let back = ModelWeights::from_bytes(&bytes).unwrap();
        assert_eq!(back, w);
        assert_eq!(back.checksum(), w.checksum());
    }

    #[test]
    fn corrupted_containers_are_rejected() {
        let w = small(6);
        let bytes = w.to_bytes(None);
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(ModelWeights::from_bytes(&bad), Err(ModelError::BadMagic)));
        assert!(matches!(
            ModelWeights::from_bytes(&bytes[..bytes.len() - 8]),
            Err(ModelError::Truncated { .. })
        ));
        let mut long = bytes.clone();
        long.extend_from_slice(&[0; 8]);
        assert!(matches!(
            ModelWeights::from_bytes(&long),
            Err(ModelError::Truncated { .. })
        ));
        assert!(matches!(
            ModelWeights::from_bytes(&bytes[..12]),
            Err(ModelError::Truncated { .. })
        ));
    }

    #[test]
    fn training_requires_both_labels() {
        let w = small(1);
        let corpus = vec![(vec![2, 5, 3], Label::LA)];
        assert!(matches!(
            train(&w, &corpus, &TrainConfig::default()),
            Err(ModelError::Corpus(_))
        ));
    }

    #[test]
    fn memorizes_a_repeated_pair() {
        let w = small(1);
        let mut corpus = Vec::new();
        for _ in 0..4 {
            corpus.push((vec![2, 5, 6, 3], Label::LA));
            corpus.push((vec![2, 5, 7, 3], Label::LUA));
        }
        let cfg = TrainConfig {
            lr: 1e-2,
            epochs: 50,
            batch: 4,
            seed: 9,
        };
        let (trained, report) = train(&w, &corpus, &cfg).unwrap();
        assert_eq!(report.train_accuracy, 1.0);
        assert_eq!(report.loss_trace.len(), 50);
        assert!(report.loss_trace.last().unwrap() < &report.loss_trace[0]);
        let (_, again) = train(&w, &corpus, &cfg).unwrap();
        assert_eq!(again.loss_trace, report.loss_trace);
        assert_ne!(trained.checksum(), w.checksum());
    }

    #[test]
    fn divergence_is_reported_with_epoch() {
        let w = small(1);
        let corpus = vec![(vec![2, 5, 3], Label::LA), (vec![2, 6, 3], Label::LUA)];
        let cfg = TrainConfig {
            lr: f64::INFINITY,
            epochs: 3,
            batch: 2,
            seed: 0,
        };
        assert!(matches!(
            train(&w, &corpus, &cfg),
            Err(ModelError::Diverged { epoch: 1 })
        ));
    }
}
