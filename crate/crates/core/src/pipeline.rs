//! The end-to-end stages (train, attribute, analyze) shared by the command
//! line and the examples.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::analysis::{
    aggregate_mc_positive, magnitude_by_label, outcome, scatter_csv, scatter_export, scatter_svg, sign_stats,
    stats_csv, CategoryStats, MagnitudeComparison, Outcome, Scatter, SignRecord,
};
use crate::attribution::{integrated_gradients, AttributionError, AttributionRecord, IgConfig, SentenceAttribution};
use crate::corpus::{split, write_file, CorpusError, LabeledSentence};
use crate::label::{Category, Label};
use crate::model::{accuracy, train, ModelConfig, ModelError, ModelWeights, TrainConfig, TrainReport};
use crate::tokenizer::{TokenizerError, Vocabulary};
use crate::tree::{
    align, format_path, mine_patterns, rank_subtrees, subtree_scores, Aggregate, MinedSentence, ParseTree, PatternKey,
    PatternRow, RankedSubtree, SubtreeScore, TreeError,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Tokenizer(#[from] TokenizerError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("sentence {id}: {source}")]
    Sentence {
        id: String,
        #[source]
        source: AttributionError,
    },
    #[error("sentence {id}: {source}")]
    Tree {
        id: String,
        #[source]
        source: TreeError,
    },
}

pub type Result<T, E = PipelineError> = std::result::Result<T, E>;

/// SHA-256 over `key=value` lines, in the given order.
pub fn config_digest<K: AsRef<str>, V: AsRef<str>>(entries: &[(K, V)]) -> String {
    let mut h = Sha256::new();
    for (k, v) in entries {
        h.update(k.as_ref().as_bytes());
        h.update(b"=");
        h.update(v.as_ref().as_bytes());
        h.update(b"\n");
    }
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOptions {
    /// Architecture; `vocab_size` is replaced by the built vocabulary's size.
    pub model: ModelConfig,
    pub vocab_size: usize,
    pub train: TrainConfig,
    pub train_fraction: f64,
    /// Seed of the train/test split.
    pub split_seed: u64,
}

impl TrainOptions {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            model: ModelConfig::new(0).with_seed(seed),
            vocab_size: 256,
            train: TrainConfig {
                seed,
                ..TrainConfig::default()
            },
            train_fraction: 0.8,
            split_seed: seed,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainedClassifier {
    pub weights: ModelWeights,
    pub vocab: Vocabulary,
    pub report: TrainReport,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub train_size: usize,
    pub test_size: usize,
}

pub fn encode(vocab: &Vocabulary, sentences: &[LabeledSentence]) -> Vec<(Vec<usize>, Label)> {
    sentences
        .iter()
        .map(|s| (vocab.tokenize(&s.text).token_ids, s.gold))
        .collect()
}

/// Splits the corpus, builds the vocabulary from the training part, trains
/// and reports held-out accuracy.
pub fn train_classifier(corpus: &[LabeledSentence], opts: &TrainOptions) -> Result<TrainedClassifier> {
    let (train_set, test_set) = split(corpus, opts.train_fraction, opts.split_seed)?;
    let texts: Vec<&str> = train_set.iter().map(|s| s.text.as_str()).collect();
    let vocab = Vocabulary::build(&texts, opts.vocab_size)?;
    let mut config = opts.model.clone();
    config.vocab_size = vocab.len();
    let initial = ModelWeights::init(config)?;
    let train_data = encode(&vocab, &train_set);
    let test_data = encode(&vocab, &test_set);
    let (weights, report) = train(&initial, &train_data, &opts.train)?;
    let test_accuracy = accuracy(&weights, &test_data)?;
    Ok(TrainedClassifier {
        train_accuracy: report.train_accuracy,
        test_accuracy,
        weights,
        vocab,
        report,
        train_size: train_set.len(),
        test_size: test_set.len(),
    })
}

pub fn attribute_sentence(
    weights: &ModelWeights,
    vocab: &Vocabulary,
    sentence: &LabeledSentence,
    cfg: &IgConfig,
) -> Result<(AttributionRecord, SentenceAttribution)> {
    let tokens = vocab.tokenize(&sentence.text);
    let a = integrated_gradients(weights, &tokens, cfg).map_err(|source| PipelineError::Sentence {
        id: sentence.id.clone(),
        source,
    })?;
    Ok((
        AttributionRecord::new(&sentence.id, sentence.category, sentence.gold, &a),
        a,
    ))
}

/// One record per sentence, in corpus order.
pub fn attribute_corpus(
    weights: &ModelWeights,
    vocab: &Vocabulary,
    corpus: &[LabeledSentence],
    cfg: &IgConfig,
) -> Result<Vec<AttributionRecord>> {
    corpus
        .iter()
        .map(|s| attribute_sentence(weights, vocab, s, cfg).map(|(r, _)| r))
        .collect()
}

/// Best subtree of one mined pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct SubtreeRankRow {
    pub pattern: PatternKey,
    pub category: Category,
    pub label: Label,
    pub count: usize,
    pub best: RankedSubtree,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeAnalysis {
    pub patterns: Vec<PatternRow>,
    pub subtree_ranks: Vec<SubtreeRankRow>,
    /// Correctly classified records with no tree.
    pub records_without_tree: usize,
    /// Tree ids with no record.
    pub orphan_trees: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisReport {
    pub stats: Vec<CategoryStats>,
    pub mc_positive: Option<f64>,
    pub magnitudes: MagnitudeComparison,
    pub scatter: Scatter,
    pub median_gap: Option<f64>,
    pub max_gap: Option<f64>,
    pub sentences: usize,
    pub trees: Option<TreeAnalysis>,
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

/// Patterns are mined over correctly classified sentences only.
pub fn analyze_trees(
    records: &[AttributionRecord],
    trees: &[(String, ParseTree)],
    aggregate: Aggregate,
) -> Result<TreeAnalysis> {
    let by_id: HashMap<&str, &ParseTree> = trees.iter().map(|(id, t)| (id.as_str(), t)).collect();
    let record_ids: std::collections::HashSet<&str> = records.iter().map(|r| r.id.as_str()).collect();
    let orphan_trees = trees.iter().filter(|(id, _)| !record_ids.contains(id.as_str())).count();

    let mut mined = Vec::new();
    let mut groups: BTreeMap<(Category, Label, PatternKey), Vec<Vec<SubtreeScore>>> = BTreeMap::new();
    let mut records_without_tree = 0;
    for r in records.iter().filter(|r| outcome(r.predicted, r.gold) == Outcome::CC) {
        let Some(&tree) = by_id.get(r.id.as_str()) else {
            records_without_tree += 1;
            continue;
        };
        let words: Vec<&str> = r.words.iter().map(|w| w.text.as_str()).collect();
        let tree_err = |source| PipelineError::Tree {
            id: r.id.clone(),
            source,
        };
        align(tree, &words).map_err(tree_err)?;
        let scores = subtree_scores(tree, &r.word_ligas()).map_err(tree_err)?;
        groups
            .entry((r.category, r.gold, tree.to_pattern()))
            .or_default()
            .push(scores);
        mined.push(MinedSentence {
            tree,
            category: r.category,
            gold: r.gold,
            sentence_ligas: r.sentence_ligas,
        });
    }
    let patterns = mine_patterns(&mined, aggregate);
    let subtree_ranks = patterns
        .iter()
        .map(|p| {
            let group = &groups[&(p.category, p.label, p.pattern.clone())];
            let best = rank_subtrees(group, aggregate).expect("groups are non-empty and share a shape");
            SubtreeRankRow {
                pattern: p.pattern.clone(),
                category: p.category,
                label: p.label,
                count: p.count,
                best,
            }
        })
        .collect();
    Ok(TreeAnalysis {
        patterns,
        subtree_ranks,
        records_without_tree,
        orphan_trees,
    })
}

pub fn analyze(
    records: &[AttributionRecord],
    trees: Option<&[(String, ParseTree)]>,
    aggregate: Aggregate,
) -> Result<AnalysisReport> {
    let signs: Vec<SignRecord> = records.iter().map(SignRecord::from).collect();
    let stats = sign_stats(&signs);
    let gaps: Vec<f64> = records.iter().map(|r| r.completeness_gap).collect();
    Ok(AnalysisReport {
        mc_positive: aggregate_mc_positive(&stats),
        stats,
        magnitudes: magnitude_by_label(records),
        scatter: scatter_export(records),
        max_gap: gaps.iter().copied().reduce(f64::max),
        median_gap: median(gaps),
        sentences: records.len(),
        trees: trees.map(|t| analyze_trees(records, t, aggregate)).transpose()?,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn patterns_csv(rows: &[PatternRow], config_digest: &str) -> String {
    let mut out = format!("# config_digest={config_digest}\npattern,category,label,count,ligas\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{},{}", r.pattern, r.category, r.label, r.count, r.ligas);
    }
    out
}

pub fn subtree_ranks_csv(rows: &[SubtreeRankRow], config_digest: &str) -> String {
    let mut out = format!("# config_digest={config_digest}\npattern,category,label,count,path,subtree,ligas\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.pattern,
            r.category,
            r.label,
            r.count,
            format_path(&r.best.path),
            r.best.fragment,
            r.best.ligas
        );
    }
    out
}

impl AnalysisReport {
    pub fn summary(&self, config_digest: &str) -> String {
        let m = &self.magnitudes;
        let mut out = format!("# config_digest={config_digest}\n");
        let _ = writeln!(out, "sentences={}", self.sentences);
        let _ = writeln!(out, "LA_count={}", m.la_count);
        let _ = writeln!(out, "LUA_count={}", m.lua_count);
        let _ = writeln!(out, "LA_mean_abs_ligas={}", opt(m.la_mean_abs));
        let _ = writeln!(out, "LUA_mean_abs_ligas={}", opt(m.lua_mean_abs));
        let _ = writeln!(out, "LUA_over_LA_mean_abs_ratio={}", opt(m.lua_over_la()));
        let _ = writeln!(out, "MCplus_aggregate_pct={}", opt(self.mc_positive));
        let _ = writeln!(out, "median_completeness_gap={}", opt(self.median_gap));
        let _ = writeln!(out, "max_completeness_gap={}", opt(self.max_gap));
        if let Some(t) = &self.trees {
            let _ = writeln!(out, "cc_records_without_tree={}", t.records_without_tree);
            let _ = writeln!(out, "orphan_trees={}", t.orphan_trees);
        }
        out
    }

    /// Writes every report file into `dir` and returns the paths written.
    pub fn write_to(&self, dir: &Path, config_digest: &str) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|source| CorpusError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let mut files: Vec<(&str, String)> = vec![
            ("stats.csv", stats_csv(&self.stats, config_digest)),
            ("scatter_cc.csv", scatter_csv(&self.scatter.cc, config_digest)),
            ("scatter_mc.csv", scatter_csv(&self.scatter.mc, config_digest)),
            (
                "scatter_cc.svg",
                scatter_svg(&self.scatter.cc, "correctly classified", config_digest),
            ),
            (
                "scatter_mc.svg",
                scatter_svg(&self.scatter.mc, "misclassified", config_digest),
            ),
            ("summary.txt", self.summary(config_digest)),
        ];
        if let Some(t) = &self.trees {
            files.push(("patterns.csv", patterns_csv(&t.patterns, config_digest)));
            files.push(("subtree_ranks.csv", subtree_ranks_csv(&t.subtree_ranks, config_digest)));
        }
        let mut written = Vec::new();
        for (name, body) in files {
            let path = dir.join(name);
            write_file(&path, &body)?;
            written.push(path);
        }
        Ok(written)
    }
}
