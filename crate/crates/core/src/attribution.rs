//! Layer integrated gradients over the embedding layer.
//!
//! For input embeddings `x` and baseline `x'` the attribution of every
//! embedding coordinate is
//!
//! ```text
//! (x - x') * sum_k w_k * dF/de (x' + a_k (x - x'))
//! ```
//!
//! where `(a_k, w_k)` come from [`interpolation_points`]. Per-token scores
//! are the sum over embedding dimensions; a word's score is the sum of its
//! subword tokens; the sentence score is the sum over words. All of these
//! sums are exact (see [`crate::exact`]), so regrouping never changes a bit.
//!
//! The completeness gap `|sum of attributions - (F(x) - F(x'))|` measures
//! quadrature error and is stored with every result.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::ops::Range;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exact::{exact_sum, ExactSum};
use crate::label::{Category, Label};
use crate::model::{ModelError, ModelWeights, Prediction, TargetSpace};
use crate::tensor::Tensor;
use crate::tokenizer::{TokenizedSentence, CLS_ID, PAD_ID, SEP_ID};

#[derive(Debug, Error)]
pub enum AttributionError {
    #[error("integration steps must be at least 1")]
    InvalidSteps,
    #[error("non-finite gradient at interpolation step {step}")]
    NonFiniteGradient { step: usize },
    #[error("word {word} span {span:?} is out of range for {len} tokens")]
    SpanOutOfRange {
        word: usize,
        span: Range<usize>,
        len: usize,
    },
    #[error("input and baseline shapes differ: {input:?} vs {baseline:?}")]
    BaselineShape { input: Vec<usize>, baseline: Vec<usize> },
    #[error("attributions line {line}: {reason}")]
    BadRecord { line: usize, reason: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = AttributionError> = std::result::Result<T, E>;

/// Riemann-type rule used to discretize the path integral.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QuadratureRule {
    Left,
    Right,
    #[default]
    Trapezoid,
}

impl QuadratureRule {
    pub const ALL: [QuadratureRule; 3] = [QuadratureRule::Left, QuadratureRule::Right, QuadratureRule::Trapezoid];

    pub fn as_str(self) -> &'static str {
        match self {
            QuadratureRule::Left => "left",
            QuadratureRule::Right => "right",
            QuadratureRule::Trapezoid => "trapezoid",
        }
    }
}

impl FromStr for QuadratureRule {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "left" => Ok(QuadratureRule::Left),
            "right" => Ok(QuadratureRule::Right),
            "trapezoid" => Ok(QuadratureRule::Trapezoid),
            _ => Err(format!("unknown rule {s:?} (expected left, right or trapezoid)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineMode {
    /// Interior tokens replaced by `[PAD]`; `[CLS]` and `[SEP]` kept.
    #[default]
    PadEmbeddings,
    Zero,
}

impl BaselineMode {
    pub fn as_str(self) -> &'static str {
        match self {
            BaselineMode::PadEmbeddings => "pad",
            BaselineMode::Zero => "zero",
        }
    }
}

impl FromStr for BaselineMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "pad" | "pad_embeddings" => Ok(BaselineMode::PadEmbeddings),
            "zero" => Ok(BaselineMode::Zero),
            _ => Err(format!("unknown baseline {s:?} (expected pad or zero)")),
        }
    }
}

/// Which class output is explained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Target {
    /// The class predicted for the unperturbed input.
    #[default]
    PredictedClass,
    FixedClass(Label),
}

#[derive(Debug, Clone, PartialEq)]
pub struct IgConfig {
    pub steps: usize,
    pub rule: QuadratureRule,
    pub baseline: BaselineMode,
    pub target: Target,
    pub target_space: TargetSpace,
    /// Divide token scores by their L2 norm. Off for every report.
    pub normalize: bool,
    /// Worker threads for per-step gradients. Results do not depend on it.
    pub threads: usize,
}

impl Default for IgConfig {
    fn default() -> Self {
        Self {
            steps: 64,
            rule: QuadratureRule::Trapezoid,
            baseline: BaselineMode::PadEmbeddings,
            target: Target::PredictedClass,
            target_space: TargetSpace::Logit,
            normalize: false,
            threads: 1,
        }
    }
}

/// `(alpha_k, weight_k)` pairs for `steps` sub-intervals of `[0, 1]`.
///
/// Weights summed in order equal exactly 1.0: the last weight absorbs the
/// rounding of the others.
pub fn interpolation_points(steps: usize, rule: QuadratureRule) -> Result<Vec<(f64, f64)>> {
    if steps == 0 {
        return Err(AttributionError::InvalidSteps);
    }
    let m = steps as f64;
    let h = 1.0 / m;
    let mut points: Vec<(f64, f64)> = match rule {
        QuadratureRule::Right => (1..=steps).map(|k| (k as f64 / m, h)).collect(),
        QuadratureRule::Left => (0..steps).map(|k| (k as f64 / m, h)).collect(),
        QuadratureRule::Trapezoid => (0..=steps)
            .map(|k| {
                let w = if k == 0 || k == steps { 0.5 * h } else { h };
                (k as f64 / m, w)
            })
            .collect(),
    };
    let n = points.len();
    let head: f64 = points[..n - 1].iter().fold(0.0, |acc, p| acc + p.1);
    points[n - 1].1 = 1.0 - head;
    Ok(points)
}

/// A differentiable scalar function of a tensor.
pub trait ScalarField: Sync {
    fn value(&self, x: &Tensor) -> Result<f64>;
    fn value_and_grad(&self, x: &Tensor) -> Result<(f64, Tensor)>;
}

/// The encoder's chosen class output as a function of its embeddings.
pub struct ModelField<'a> {
    pub model: &'a ModelWeights,
    pub class: Label,
    pub space: TargetSpace,
}

impl ScalarField for ModelField<'_> {
    fn value(&self, x: &Tensor) -> Result<f64> {
        Ok(self.model.target_value(x, self.class.class_index(), self.space)?)
    }

    fn value_and_grad(&self, x: &Tensor) -> Result<(f64, Tensor)> {
        Ok(self
            .model
            .target_value_and_grad(x, self.class.class_index(), self.space)?)
    }
}

/// Attributions of one path integral.
#[derive(Debug, Clone)]
pub struct PathAttribution {
    pub attributions: Tensor,
    pub f_input: f64,
    pub f_baseline: f64,
}

impl PathAttribution {
    pub fn total(&self) -> f64 {
        exact_sum(self.attributions.data().iter().copied())
    }

    pub fn completeness_gap(&self) -> f64 {
        let mut acc: ExactSum = self.attributions.data().iter().copied().collect();
        acc.add(-self.f_input);
        acc.add(self.f_baseline);
        acc.value().abs()
    }
}

fn gradient_at(field: &dyn ScalarField, input: &Tensor, baseline: &Tensor, step: usize, alpha: f64) -> Result<Tensor> {
    let point = baseline
        .zip_with(input, |b, x| b + alpha * (x - b))
        .expect("shapes checked");
    let (_, grad) = field.value_and_grad(&point)?;
    if !grad.is_finite() {
        return Err(AttributionError::NonFiniteGradient { step });
    }
    Ok(grad)
}

/// Integrated gradients of `field` from `baseline` to `input`.
pub fn integrate_path(
    field: &dyn ScalarField,
    input: &Tensor,
    baseline: &Tensor,
    points: &[(f64, f64)],
    threads: usize,
) -> Result<PathAttribution> {
    if input.shape() != baseline.shape() {
        return Err(AttributionError::BaselineShape {
            input: input.shape().to_vec(),
            baseline: baseline.shape().to_vec(),
        });
    }
    let threads = threads.clamp(1, points.len().max(1));
    let grads: Vec<Tensor> = if threads == 1 {
        points
            .iter()
            .enumerate()
            .map(|(k, &(a, _))| gradient_at(field, input, baseline, k, a))
            .collect::<Result<_>>()?
    } else {
        let chunk = points.len().div_ceil(threads);
        let parts: Vec<Result<Vec<Tensor>>> = std::thread::scope(|s| {
            let handles: Vec<_> = points
                .chunks(chunk)
                .enumerate()
                .map(|(c, part)| {
                    s.spawn(move || {
                        part.iter()
                            .enumerate()
                            .map(|(i, &(a, _))| gradient_at(field, input, baseline, c * chunk + i, a))
                            .collect::<Result<Vec<_>>>()
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("gradient worker panicked"))
                .collect()
        });
        let mut all = Vec::with_capacity(points.len());
        for p in parts {
            all.extend(p?);
        }
        all
    };

    // Reduce in step order so the result is independent of `threads`.
    let mut avg = vec![0.0; input.len()];
    for (g, &(_, w)) in grads.iter().zip(points) {
        for (a, gv) in avg.iter_mut().zip(g.data()) {
            *a += w * gv;
        }
    }
    let data = input
        .data()
        .iter()
        .zip(baseline.data())
        .zip(&avg)
        .map(|((x, b), a)| (x - b) * a)
        .collect();
    Ok(PathAttribution {
        attributions: Tensor::new(input.shape().to_vec(), data).expect("same shape as input"),
        f_input: field.value(input)?,
        f_baseline: field.value(baseline)?,
    })
}

/// Reference embeddings the path starts from.
pub fn make_baseline(model: &ModelWeights, token_ids: &[usize], mode: BaselineMode) -> Result<Tensor> {
    match mode {
        BaselineMode::Zero => {
            model.embed(token_ids)?;
            Ok(Tensor::zeros(&[token_ids.len(), model.config().d_model]))
        }
        BaselineMode::PadEmbeddings => {
            let ids: Vec<usize> = token_ids
                .iter()
                .map(|&id| if id == CLS_ID || id == SEP_ID { id } else { PAD_ID })
                .collect();
            Ok(model.embed(&ids)?)
        }
    }
}

/// Sums token scores over each word's span.
pub fn word_scores(token_scores: &[f64], spans: &[Range<usize>]) -> Result<Vec<f64>> {
    spans
        .iter()
        .enumerate()
        .map(|(w, span)| {
            if span.start >= span.end || span.end > token_scores.len() {
                return Err(AttributionError::SpanOutOfRange {
                    word: w,
                    span: span.clone(),
                    len: token_scores.len(),
                });
            }
            Ok(exact_sum(token_scores[span.clone()].iter().copied()))
        })
        .collect()
}

/// Attribution of one sentence.
#[derive(Debug, Clone)]
pub struct SentenceAttribution {
    /// `[len, d_model]` per-dimension attributions, specials included.
    pub per_token: Tensor,
    pub token_scores: Vec<f64>,
    pub words: Vec<String>,
    pub word_ligas: Vec<f64>,
    pub sentence_ligas: f64,
    pub prediction: Prediction,
    pub target: Label,
    pub target_space: TargetSpace,
    pub f_input: f64,
    pub f_baseline: f64,
    pub completeness_gap: f64,
}

impl SentenceAttribution {
    /// Gap relative to `|F(x) - F(x')|`; infinite when that difference is 0
    /// but the gap is not.
    pub fn relative_gap(&self) -> f64 {
        let delta = (self.f_input - self.f_baseline).abs();
        if self.completeness_gap == 0.0 {
            0.0
        } else {
            self.completeness_gap / delta
        }
    }
}

/// Integrated gradients for a tokenized sentence.
pub fn integrated_gradients(
    model: &ModelWeights,
    sentence: &TokenizedSentence,
    cfg: &IgConfig,
) -> Result<SentenceAttribution> {
    let points = interpolation_points(cfg.steps, cfg.rule)?;
    let input = model.embed(&sentence.token_ids)?;
    let baseline = make_baseline(model, &sentence.token_ids, cfg.baseline)?;
    let prediction = model.forward_from_embeddings(&input)?;
    let target = match cfg.target {
        Target::PredictedClass => prediction.predicted,
        Target::FixedClass(label) => label,
    };
    let field = ModelField {
        model,
        class: target,
        space: cfg.target_space,
    };
    let path = integrate_path(&field, &input, &baseline, &points, cfg.threads)?;
    let completeness_gap = path.completeness_gap();

    let mut token_scores: Vec<f64> = (0..path.attributions.rows())
        .map(|r| exact_sum(path.attributions.row(r).iter().copied()))
        .collect();
    if cfg.normalize {
        let norm = token_scores.iter().map(|s| s * s).sum::<f64>().sqrt();
        if norm > 0.0 {
            token_scores.iter_mut().for_each(|s| *s /= norm);
        }
    }
    let word_ligas = word_scores(&token_scores, &sentence.spans)?;
    let sentence_ligas = exact_sum(word_ligas.iter().copied());
    Ok(SentenceAttribution {
        per_token: path.attributions,
        token_scores,
        words: sentence.words.clone(),
        word_ligas,
        sentence_ligas,
        prediction,
        target,
        target_space: cfg.target_space,
        f_input: path.f_input,
        f_baseline: path.f_baseline,
        completeness_gap,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordScore {
    pub text: String,
    pub ligas: f64,
}

/// One line of the attribution JSON-lines file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionRecord {
    pub id: String,
    pub category: Category,
    pub gold: Label,
    pub predicted: Label,
    pub prob: f64,
    pub sentence_ligas: f64,
    pub completeness_gap: f64,
    pub words: Vec<WordScore>,
}

impl AttributionRecord {
    pub fn new(id: &str, category: Category, gold: Label, attribution: &SentenceAttribution) -> Self {
        Self {
            id: id.to_string(),
            category,
            gold,
            predicted: attribution.prediction.predicted,
            prob: attribution.prediction.confidence(),
            sentence_ligas: attribution.sentence_ligas,
            completeness_gap: attribution.completeness_gap,
            words: attribution
                .words
                .iter()
                .zip(&attribution.word_ligas)
                .map(|(t, &l)| WordScore {
                    text: t.clone(),
                    ligas: l,
                })
                .collect(),
        }
    }

    pub fn word_ligas(&self) -> Vec<f64> {
        self.words.iter().map(|w| w.ligas).collect()
    }
}

/// First line of an attribution file; records follow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionHeader {
    pub config_digest: String,
    pub weights_checksum: String,
    pub target_space: TargetSpace,
    pub steps: usize,
    pub rule: QuadratureRule,
    pub baseline: BaselineMode,
}

#[derive(Serialize, Deserialize)]
struct HeaderLine {
    header: AttributionHeader,
}

pub fn write_attributions<W: Write>(
    mut out: W,
    header: &AttributionHeader,
    records: &[AttributionRecord],
) -> std::io::Result<()> {
    let line = serde_json::to_string(&HeaderLine { header: header.clone() }).expect("header serializes");
    writeln!(out, "{line}")?;
    for r in records {
        writeln!(out, "{}", serde_json::to_string(r).expect("record serializes"))?;
    }
    Ok(())
}

pub fn save_attributions(
    path: impl AsRef<Path>,
    header: &AttributionHeader,
    records: &[AttributionRecord],
) -> Result<()> {
    let mut buf = Vec::new();
    write_attributions(&mut buf, header, records)?;
    fs::write(path, buf)?;
    Ok(())
}

/// Reads an attribution file. The header line is optional.
pub fn load_attributions(path: impl AsRef<Path>) -> Result<(Option<AttributionHeader>, Vec<AttributionRecord>)> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut header = None;
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if i == 0 && line.starts_with("{\"header\"") {
            let h: HeaderLine = serde_json::from_str(line).map_err(|e| AttributionError::BadRecord {
                line: 1,
                reason: e.to_string(),
            })?;
            header = Some(h.header);
            continue;
        }
        records.push(serde_json::from_str(line).map_err(|e| AttributionError::BadRecord {
            line: i + 1,
            reason: e.to_string(),
        })?);
    }
    Ok((header, records))
}
