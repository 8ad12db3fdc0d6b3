//! The `ligas` command line: `gen`, `train`, `attribute`, `analyze` and
//! `render`.
//!
//! Settings come from defaults, then an optional flat `key = value` config
//! file, then flags. Exit codes: 0 success, 1 usage, 2 data, 3 numeric.
//! Output files carry a digest of the settings that shaped them; paths and
//! thread counts are not part of it, so reruns elsewhere are byte-identical.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::analysis::heatmap_page;
use crate::attribution::{
    load_attributions, save_attributions, AttributionError, AttributionHeader, BaselineMode, IgConfig, QuadratureRule,
    Target,
};
use crate::corpus::{
    corpus_tsv, generate_all, generate_synthetic, read_corpus_tsv, read_trees, trees_tsv, write_file, CorpusError,
};
use crate::label::{Category, Label};
use crate::model::{ModelConfig, ModelError, ModelWeights, TargetSpace};
use crate::pipeline::{analyze, attribute_corpus, config_digest, train_classifier, PipelineError, TrainOptions};
use crate::tokenizer::{TokenizerError, Vocabulary};
use crate::tree::Aggregate;

pub const THREADS_ENV: &str = "LIGAS_THREADS";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }

    fn context(self, ctx: impl std::fmt::Display) -> Self {
        match self {
            CliError::Usage(m) => CliError::Usage(format!("{ctx}: {m}")),
            CliError::Data(m) => CliError::Data(format!("{ctx}: {m}")),
            CliError::Numeric(m) => CliError::Numeric(format!("{ctx}: {m}")),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::NonFinite { .. } | ModelError::Diverged { .. } => CliError::Numeric(e.to_string()),
            ModelError::Config(_) => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<AttributionError> for CliError {
    fn from(e: AttributionError) -> Self {
        match e {
            AttributionError::NonFiniteGradient { .. } => CliError::Numeric(e.to_string()),
            AttributionError::InvalidSteps => CliError::Usage(e.to_string()),
            AttributionError::Model(m) => m.into(),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        match e {
            CorpusError::InvalidFraction(_) | CorpusError::NoPairs => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<TokenizerError> for CliError {
    fn from(e: TokenizerError) -> Self {
        match e {
            TokenizerError::BudgetTooSmall { .. } => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Corpus(e) => e.into(),
            PipelineError::Tokenizer(e) => e.into(),
            PipelineError::Model(e) => e.into(),
            PipelineError::Sentence { id, source } => CliError::from(source).context(format!("sentence {id}")),
            PipelineError::Tree { .. } => CliError::Data(e.to_string()),
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

/// Every setting of a run. Paths live on the subcommands.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    /// `None` means every category.
    pub category: Option<Category>,
    pub pairs: usize,
    pub vocab_size: usize,
    pub train_fraction: f64,
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub d_ff: usize,
    pub max_seq_len: usize,
    pub lr: f64,
    pub epochs: usize,
    pub batch: usize,
    pub steps: usize,
    pub rule: QuadratureRule,
    pub baseline: BaselineMode,
    pub target: Target,
    pub target_space: TargetSpace,
    pub aggregate: Aggregate,
    pub threads: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let m = ModelConfig::new(0);
        let ig = IgConfig::default();
        let opts = TrainOptions::with_seed(7);
        Self {
            seed: 7,
            category: None,
            pairs: 100,
            vocab_size: opts.vocab_size,
            train_fraction: opts.train_fraction,
            d_model: m.d_model,
            n_heads: m.n_heads,
            n_layers: m.n_layers,
            d_ff: m.d_ff,
            max_seq_len: m.max_seq_len,
            lr: opts.train.lr,
            epochs: opts.train.epochs,
            batch: opts.train.batch,
            steps: ig.steps,
            rule: ig.rule,
            baseline: ig.baseline,
            target: ig.target,
            target_space: ig.target_space,
            aggregate: Aggregate::Sum,
            threads: 1,
        }
    }
}

fn parse_category(v: &str) -> Result<Option<Category>, String> {
    if v == "all" {
        Ok(None)
    } else {
        v.parse()
            .map(Some)
            .map_err(|e: crate::label::ParseLabelError| e.to_string())
    }
}

fn parse_target(v: &str) -> Result<Target, String> {
    match v {
        "predicted" => Ok(Target::PredictedClass),
        _ => v
            .parse::<Label>()
            .map(Target::FixedClass)
            .map_err(|_| format!("unknown target {v:?} (expected predicted, LA or LUA)")),
    }
}

fn target_str(t: Target) -> String {
    match t {
        Target::PredictedClass => "predicted".into(),
        Target::FixedClass(l) => l.to_string(),
    }
}

fn num<T: std::str::FromStr>(v: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    v.parse().map_err(|e: T::Err| format!("{v:?}: {e}"))
}

fn positive(v: &str) -> Result<usize, String> {
    match num::<usize>(v)? {
        0 => Err("must be at least 1".into()),
        n => Ok(n),
    }
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let v = value.trim();
        let r: Result<(), String> = (|| {
            match key {
                "seed" => self.seed = num(v)?,
                "category" => self.category = parse_category(v)?,
                "pairs" => self.pairs = positive(v)?,
                "vocab_size" => self.vocab_size = positive(v)?,
                "train_fraction" => self.train_fraction = num(v)?,
                "d_model" => self.d_model = positive(v)?,
                "n_heads" => self.n_heads = positive(v)?,
                "n_layers" => self.n_layers = positive(v)?,
                "d_ff" => self.d_ff = positive(v)?,
                "max_seq_len" => self.max_seq_len = positive(v)?,
                "lr" => self.lr = num(v)?,
                "epochs" => self.epochs = positive(v)?,
                "batch" => self.batch = positive(v)?,
                "steps" => self.steps = positive(v)?,
                "rule" => self.rule = v.parse()?,
                "baseline" => self.baseline = v.parse()?,
                "target" => self.target = parse_target(v)?,
                "target_space" => self.target_space = v.parse()?,
                "aggregate" => self.aggregate = v.parse()?,
                "threads" => self.threads = positive(v)?,
                _ => return Err("unknown key".into()),
            }
            Ok(())
        })();
        r.map_err(|e| format!("{key}: {e}"))
    }

    /// Reads `key = value` lines; `#` starts a comment.
    pub fn apply_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("{}:{}: expected key = value", path.display(), i + 1)))?;
            self.set(k.trim(), v)
                .map_err(|e| CliError::Usage(format!("{}:{}: {e}", path.display(), i + 1)))?;
        }
        Ok(())
    }

    /// Every key in canonical order with its rendered value.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("seed", self.seed.to_string()),
            ("category", self.category.map_or("all".into(), |c| c.to_string())),
            ("pairs", self.pairs.to_string()),
            ("vocab_size", self.vocab_size.to_string()),
            ("train_fraction", self.train_fraction.to_string()),
            ("d_model", self.d_model.to_string()),
            ("n_heads", self.n_heads.to_string()),
            ("n_layers", self.n_layers.to_string()),
            ("d_ff", self.d_ff.to_string()),
            ("max_seq_len", self.max_seq_len.to_string()),
            ("lr", self.lr.to_string()),
            ("epochs", self.epochs.to_string()),
            ("batch", self.batch.to_string()),
            ("steps", self.steps.to_string()),
            ("rule", self.rule.as_str().into()),
            ("baseline", self.baseline.as_str().into()),
            ("target", target_str(self.target)),
            ("target_space", self.target_space.as_str().into()),
            ("aggregate", self.aggregate.as_str().into()),
            ("threads", self.threads.to_string()),
        ]
    }

    /// Digest over the named keys only.
    pub fn digest_of(&self, keys: &[&str]) -> String {
        let entries: Vec<_> = self.entries().into_iter().filter(|(k, _)| keys.contains(k)).collect();
        config_digest(&entries)
    }

    pub fn train_options(&self) -> TrainOptions {
        let mut o = TrainOptions::with_seed(self.seed);
        o.model.d_model = self.d_model;
        o.model.n_heads = self.n_heads;
        o.model.n_layers = self.n_layers;
        o.model.d_ff = self.d_ff;
        o.model.max_seq_len = self.max_seq_len;
        o.vocab_size = self.vocab_size;
        o.train_fraction = self.train_fraction;
        o.train.lr = self.lr;
        o.train.epochs = self.epochs;
        o.train.batch = self.batch;
        o
    }

    pub fn ig_config(&self) -> IgConfig {
        IgConfig {
            steps: self.steps,
            rule: self.rule,
            baseline: self.baseline,
            target: self.target,
            target_space: self.target_space,
            normalize: false,
            threads: self.threads,
        }
    }
}

const GEN_KEYS: &[&str] = &["seed", "category", "pairs"];
const TRAIN_KEYS: &[&str] = &[
    "seed",
    "vocab_size",
    "train_fraction",
    "d_model",
    "n_heads",
    "n_layers",
    "d_ff",
    "max_seq_len",
    "lr",
    "epochs",
    "batch",
];
const ATTRIBUTE_KEYS: &[&str] = &["steps", "rule", "baseline", "target", "target_space"];

#[derive(Debug, Parser)]
#[command(
    name = "ligas",
    version,
    about = "Integrated-gradients attribution for acceptability classifiers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic minimal-pair corpus with gold trees.
    Gen(GenArgs),
    /// Train the encoder classifier on a corpus.
    Train(TrainArgs),
    /// Attribute every corpus sentence with integrated gradients.
    Attribute(AttributeArgs),
    /// Sign statistics, scatter plots and pattern mining.
    Analyze(AnalyzeArgs),
    /// HTML heatmaps of word attributions.
    Render(RenderArgs),
}

#[derive(Debug, Args)]
struct GenArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// all, CIA, RAA, SVA, SVO or WHE.
    #[arg(long)]
    category: Option<String>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pairs: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Directory receiving corpus.tsv and trees.tsv.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Weight file; the vocabulary and loss trace are written beside it.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    epochs: Option<u64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    batch: Option<u64>,
    #[arg(long)]
    vocab_size: Option<usize>,
    #[arg(long)]
    train_fraction: Option<f64>,
}

#[derive(Debug, Args)]
struct AttributeArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    weights: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    steps: Option<u64>,
    /// left, right or trapezoid.
    #[arg(long)]
    rule: Option<String>,
    /// pad or zero.
    #[arg(long)]
    baseline: Option<String>,
    /// logit or probability.
    #[arg(long)]
    target_space: Option<String>,
    /// predicted, LA or LUA.
    #[arg(long)]
    target: Option<String>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    threads: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    #[arg(long)]
    attributions: PathBuf,
    #[arg(long)]
    trees: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// sum or mean over a pattern's sentences.
    #[arg(long)]
    aggregate: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct RenderArgs {
    #[arg(long)]
    attributions: PathBuf,
    /// Comma-separated sentence ids, or `all`.
    #[arg(long, default_value = "all")]
    ids: String,
    #[arg(long)]
    out: PathBuf,
}

fn load_config(path: Option<&Path>, flags: &[(&str, Option<String>)]) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::default();
    if let Some(p) = path {
        cfg.apply_file(p)?;
    }
    for (k, v) in flags {
        if let Some(v) = v {
            cfg.set(k, v)
                .map_err(|e| CliError::Usage(format!("--{}: {e}", k.replace('_', "-"))))?;
        }
    }
    Ok(cfg)
}

fn s<T: ToString>(v: &Option<T>) -> Option<String> {
    v.as_ref().map(ToString::to_string)
}

fn ensure_parent(path: &Path) -> Result<(), CliError> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => fs::create_dir_all(p).map_err(|e| io_err(p, e)),
        _ => Ok(()),
    }
}

pub fn vocab_path(weights: &Path) -> PathBuf {
    weights.with_extension("vocab")
}

pub fn loss_path(weights: &Path) -> PathBuf {
    weights.with_extension("loss.csv")
}

fn cmd_gen(a: GenArgs) -> Result<(), CliError> {
    let cfg = load_config(
        a.config.as_deref(),
        &[
            ("category", a.category.clone()),
            ("pairs", s(&a.pairs)),
            ("seed", s(&a.seed)),
        ],
    )?;
    let corpus = match cfg.category {
        None => generate_all(cfg.pairs, cfg.seed)?,
        Some(c) => generate_synthetic(c, cfg.pairs, cfg.seed)?,
    };
    let digest = cfg.digest_of(GEN_KEYS);
    fs::create_dir_all(&a.out).map_err(|e| io_err(&a.out, e))?;
    write_file(&a.out.join("corpus.tsv"), &corpus_tsv(&corpus, Some(&digest)))?;
    write_file(&a.out.join("trees.tsv"), &trees_tsv(&corpus, Some(&digest)))?;
    println!("wrote {} sentences to {}", corpus.len(), a.out.display());
    Ok(())
}

fn cmd_train(a: TrainArgs) -> Result<(), CliError> {
    let cfg = load_config(
        a.config.as_deref(),
        &[
            ("seed", s(&a.seed)),
            ("epochs", s(&a.epochs)),
            ("lr", s(&a.lr)),
            ("batch", s(&a.batch)),
            ("vocab_size", s(&a.vocab_size)),
            ("train_fraction", s(&a.train_fraction)),
        ],
    )?;
    let corpus = read_corpus_tsv(&a.corpus).map_err(|e| CliError::from(e).context(a.corpus.display()))?;
    let trained = train_classifier(&corpus, &cfg.train_options())?;
    let digest = cfg.digest_of(TRAIN_KEYS);
    ensure_parent(&a.out)?;
    trained.weights.save(&a.out, Some(&digest))?;
    trained.vocab.save(vocab_path(&a.out))?;
    let mut loss = format!("# config_digest={digest}\nepoch,loss\n");
    for (i, l) in trained.report.loss_trace.iter().enumerate() {
        loss.push_str(&format!("{},{l}\n", i + 1));
    }
    loss.push_str(&format!(
        "# train_size={} test_size={} train_accuracy={} test_accuracy={}\n",
        trained.train_size, trained.test_size, trained.train_accuracy, trained.test_accuracy
    ));
    write_file(&loss_path(&a.out), &loss)?;
    println!(
        "trained on {} sentences: train accuracy {:.4}, held-out accuracy {:.4} ({} sentences)",
        trained.train_size, trained.train_accuracy, trained.test_accuracy, trained.test_size
    );
    Ok(())
}

fn cmd_attribute(a: AttributeArgs, env_threads: Option<String>) -> Result<(), CliError> {
    let threads = s(&a.threads).or(env_threads);
    let cfg = load_config(
        a.config.as_deref(),
        &[
            ("steps", s(&a.steps)),
            ("rule", a.rule.clone()),
            ("baseline", a.baseline.clone()),
            ("target_space", a.target_space.clone()),
            ("target", a.target.clone()),
            ("threads", threads),
        ],
    )?;
    let corpus = read_corpus_tsv(&a.corpus).map_err(|e| CliError::from(e).context(a.corpus.display()))?;
    let weights = ModelWeights::load(&a.weights).map_err(|e| CliError::from(e).context(a.weights.display()))?;
    let vpath = vocab_path(&a.weights);
    let vocab = Vocabulary::load(&vpath).map_err(|e| CliError::from(e).context(vpath.display()))?;
    if vocab.len() != weights.config().vocab_size {
        return Err(CliError::Data(format!(
            "{}: {} tokens but the model expects {}",
            vpath.display(),
            vocab.len(),
            weights.config().vocab_size
        )));
    }
    let ig = cfg.ig_config();
    let records = attribute_corpus(&weights, &vocab, &corpus, &ig)?;
    let header = AttributionHeader {
        config_digest: cfg.digest_of(ATTRIBUTE_KEYS),
        weights_checksum: weights.checksum(),
        target_space: ig.target_space,
        steps: ig.steps,
        rule: ig.rule,
        baseline: ig.baseline,
    };
    ensure_parent(&a.out)?;
    save_attributions(&a.out, &header, &records).map_err(|e| CliError::from(e).context(a.out.display()))?;
    println!("attributed {} sentences", records.len());
    Ok(())
}

fn upstream_digest(header: &Option<AttributionHeader>) -> String {
    header.as_ref().map_or_else(
        || "unknown".to_string(),
        |h| format!("{}:{}", h.config_digest, h.weights_checksum),
    )
}

fn cmd_analyze(a: AnalyzeArgs) -> Result<(), CliError> {
    let cfg = load_config(a.config.as_deref(), &[("aggregate", a.aggregate.clone())])?;
    let (header, records) =
        load_attributions(&a.attributions).map_err(|e| CliError::from(e).context(a.attributions.display()))?;
    let trees = match &a.trees {
        Some(p) => Some(read_trees(p).map_err(|e| CliError::from(e).context(p.display()))?),
        None => {
            eprintln!("warning: no --trees given; patterns.csv and subtree_ranks.csv skipped");
            None
        }
    };
    let report = analyze(&records, trees.as_deref(), cfg.aggregate)?;
    let digest = config_digest(&[
        ("attributions", upstream_digest(&header)),
        ("aggregate", cfg.aggregate.as_str().to_string()),
    ]);
    if let Some(t) = &report.trees {
        if t.records_without_tree > 0 {
            eprintln!(
                "warning: {} correctly classified sentences have no tree and were skipped",
                t.records_without_tree
            );
        }
        if t.orphan_trees > 0 {
            eprintln!("warning: {} trees match no attributed sentence", t.orphan_trees);
        }
    }
    let files = report.write_to(&a.out, &digest)?;
    for f in files {
        println!("wrote {}", f.display());
    }
    Ok(())
}

fn cmd_render(a: RenderArgs) -> Result<(), CliError> {
    let (header, records) =
        load_attributions(&a.attributions).map_err(|e| CliError::from(e).context(a.attributions.display()))?;
    let chosen = if a.ids.trim() == "all" {
        records
    } else {
        let mut out = Vec::new();
        for id in a.ids.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let r = records
                .iter()
                .find(|r| r.id == id)
                .ok_or_else(|| CliError::Data(format!("{}: no sentence with id {id:?}", a.attributions.display())))?;
            out.push(r.clone());
        }
        out
    };
    ensure_parent(&a.out)?;
    let digest = config_digest(&[("attributions", upstream_digest(&header))]);
    write_file(&a.out, &heatmap_page(&chosen, &digest))?;
    println!("rendered {} sentences to {}", chosen.len(), a.out.display());
    Ok(())
}

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let env_threads = std::env::var(THREADS_ENV).ok();
    let result = match cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Train(a) => cmd_train(a),
        Command::Attribute(a) => cmd_attribute(a, env_threads),
        Command::Analyze(a) => cmd_analyze(a),
        Command::Render(a) => cmd_render(a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
