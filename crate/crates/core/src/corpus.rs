//! Labeled-sentence corpora: TSV and tree-file I/O, a synthetic five-category
//! minimal-pair generator, and a stratified train/test split.
//!
//! Corpus TSV: header `id\tcategory\tlabel\tsentence`, one sentence per line.
//! Trees file: `id\tbracketed-tree` per line, no header. Lines starting with
//! `#` are comments in both.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

use crate::label::{Category, Label};
use crate::rng::{substream_rng, Stream};
use crate::tokenizer::split_words;
use crate::tree::{align, parse_bracketed, ParseTree, TreeError};

pub const TSV_HEADER: &str = "id\tcategory\tlabel\tsentence";
const COLUMNS: [&str; 4] = ["id", "category", "label", "sentence"];

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("expected header {TSV_HEADER:?}, found {found:?}")]
    BadHeader { found: String },
    #[error("row {row}: missing column {column}")]
    MissingColumn { row: usize, column: &'static str },
    #[error("row {row}: more than 4 columns")]
    ExtraColumn { row: usize },
    #[error("row {row}, column {column}: {reason}")]
    Field {
        row: usize,
        column: &'static str,
        reason: String,
    },
    #[error("row {row}: duplicate id {id:?}")]
    DuplicateId { row: usize, id: String },
    #[error("trees row {row} ({id}): {source}")]
    Tree {
        row: usize,
        id: String,
        #[source]
        source: TreeError,
    },
    #[error("sentence {id}: tree does not align: {source}")]
    Align {
        id: String,
        #[source]
        source: TreeError,
    },
    #[error("train fraction must lie strictly between 0 and 1, got {0}")]
    InvalidFraction(f64),
    #[error("cell ({category}, {label}) has {size} sentence(s); at least 2 are needed to split")]
    StratumTooSmall {
        category: Category,
        label: Label,
        size: usize,
    },
    #[error("at least one pair must be generated")]
    NoPairs,
}

pub type Result<T, E = CorpusError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSentence {
    pub id: String,
    pub category: Category,
    pub gold: Label,
    pub text: String,
    pub tree: Option<ParseTree>,
}

impl LabeledSentence {
    pub fn words(&self) -> Vec<String> {
        split_words(&self.text)
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn records(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.strip_suffix('\r').unwrap_or(l)))
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
}

/// Parses corpus TSV text. Rows are numbered by file line.
pub fn parse_corpus_tsv(text: &str) -> Result<Vec<LabeledSentence>> {
    let mut lines = records(text);
    match lines.next() {
        Some((_, h)) if h == TSV_HEADER => {}
        Some((_, h)) => return Err(CorpusError::BadHeader { found: h.to_string() }),
        None => return Err(CorpusError::BadHeader { found: String::new() }),
    }
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (row, line) in lines {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() > 4 {
            return Err(CorpusError::ExtraColumn { row });
        }
        if let Some(&column) = COLUMNS.get(fields.len()) {
            return Err(CorpusError::MissingColumn { row, column });
        }
        let id = fields[0].trim();
        if id.is_empty() {
            return Err(CorpusError::Field {
                row,
                column: "id",
                reason: "empty id".into(),
            });
        }
        let category = fields[1]
            .parse()
            .map_err(|e: crate::label::ParseLabelError| CorpusError::Field {
                row,
                column: "category",
                reason: e.to_string(),
            })?;
        let gold = fields[2]
            .parse()
            .map_err(|e: crate::label::ParseLabelError| CorpusError::Field {
                row,
                column: "label",
                reason: e.to_string(),
            })?;
        let text = fields[3].trim();
        if split_words(text).is_empty() {
            return Err(CorpusError::Field {
                row,
                column: "sentence",
                reason: "no words".into(),
            });
        }
        if !seen.insert(id.to_string()) {
            return Err(CorpusError::DuplicateId {
                row,
                id: id.to_string(),
            });
        }
        out.push(LabeledSentence {
            id: id.to_string(),
            category,
            gold,
            text: text.to_string(),
            tree: None,
        });
    }
    Ok(out)
}

pub fn read_corpus_tsv(path: impl AsRef<Path>) -> Result<Vec<LabeledSentence>> {
    parse_corpus_tsv(&read(path.as_ref())?)
}

/// Serializes a corpus; the optional digest becomes a leading comment.
pub fn corpus_tsv(corpus: &[LabeledSentence], config_digest: Option<&str>) -> String {
    let mut out = String::new();
    if let Some(d) = config_digest {
        let _ = writeln!(out, "# config_digest={d}");
    }
    out.push_str(TSV_HEADER);
    out.push('\n');
    for s in corpus {
        let _ = writeln!(out, "{}\t{}\t{}\t{}", s.id, s.category, s.gold, s.text);
    }
    out
}

/// Parses a trees file into `(id, tree)` pairs in file order.
pub fn parse_trees(text: &str) -> Result<Vec<(String, ParseTree)>> {
    records(text)
        .map(|(row, line)| {
            let (id, tree) = line
                .split_once('\t')
                .ok_or(CorpusError::MissingColumn { row, column: "tree" })?;
            let tree = parse_bracketed(tree).map_err(|source| CorpusError::Tree {
                row,
                id: id.to_string(),
                source,
            })?;
            Ok((id.trim().to_string(), tree))
        })
        .collect()
}

pub fn read_trees(path: impl AsRef<Path>) -> Result<Vec<(String, ParseTree)>> {
    parse_trees(&read(path.as_ref())?)
}

/// Trees of the sentences that have one, in corpus order.
pub fn trees_tsv(corpus: &[LabeledSentence], config_digest: Option<&str>) -> String {
    let mut out = String::new();
    if let Some(d) = config_digest {
        let _ = writeln!(out, "# config_digest={d}");
    }
    for s in corpus {
        if let Some(t) = &s.tree {
            let _ = writeln!(out, "{}\t{}", s.id, t.to_bracketed());
        }
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AttachReport {
    pub attached: usize,
    /// Tree ids with no matching sentence.
    pub orphans: Vec<String>,
    /// Sentences left without a tree.
    pub missing: usize,
}

/// Attaches trees by id after checking leaf/word alignment.
pub fn attach_trees(corpus: &mut [LabeledSentence], trees: Vec<(String, ParseTree)>) -> Result<AttachReport> {
    let index: HashMap<String, usize> = corpus.iter().enumerate().map(|(i, s)| (s.id.clone(), i)).collect();
    let mut report = AttachReport::default();
    for (id, tree) in trees {
        let Some(&i) = index.get(&id) else {
            report.orphans.push(id);
            continue;
        };
        align(&tree, &corpus[i].words()).map_err(|source| CorpusError::Align { id: id.clone(), source })?;
        if corpus[i].tree.replace(tree).is_none() {
            report.attached += 1;
        }
    }
    report.missing = corpus.iter().filter(|s| s.tree.is_none()).count();
    Ok(report)
}

/// Stratified split by (category, gold). Each cell keeps at least one
/// sentence on each side; output preserves corpus order.
pub fn split(
    corpus: &[LabeledSentence],
    train_fraction: f64,
    seed: u64,
) -> Result<(Vec<LabeledSentence>, Vec<LabeledSentence>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(CorpusError::InvalidFraction(train_fraction));
    }
    let mut cells: BTreeMap<(Category, Label), Vec<usize>> = BTreeMap::new();
    for (i, s) in corpus.iter().enumerate() {
        cells.entry((s.category, s.gold)).or_default().push(i);
    }
    for (&(category, label), members) in &cells {
        if members.len() < 2 {
            return Err(CorpusError::StratumTooSmall {
                category,
                label,
                size: members.len(),
            });
        }
    }
    // Largest-remainder allocation of round(f * N) training slots.
    let target = (train_fraction * corpus.len() as f64).round() as usize;
    let mut quotas: Vec<(usize, f64)> = cells
        .values()
        .map(|m| {
            let exact = train_fraction * m.len() as f64;
            (exact.floor() as usize, exact - exact.floor())
        })
        .collect();
    let assigned: usize = quotas.iter().map(|q| q.0).sum();
    let mut order: Vec<usize> = (0..quotas.len()).collect();
    order.sort_by(|&a, &b| quotas[b].1.total_cmp(&quotas[a].1).then(a.cmp(&b)));
    for &c in order.iter().take(target.saturating_sub(assigned)) {
        quotas[c].0 += 1;
    }

    let mut in_train = vec![false; corpus.len()];
    for (c, members) in cells.values().enumerate() {
        let n_train = quotas[c].0.clamp(1, members.len() - 1);
        let mut shuffled = members.clone();
        shuffled.shuffle(&mut substream_rng(seed, Stream::Split, c as u32));
        for &i in &shuffled[..n_train] {
            in_train[i] = true;
        }
    }
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (s, t) in corpus.iter().zip(in_train) {
        if t {
            train.push(s.clone());
        } else {
            test.push(s.clone());
        }
    }
    Ok((train, test))
}

const ANIMATE: [(&str, &str); 10] = [
    ("dog", "dogs"),
    ("cat", "cats"),
    ("bird", "birds"),
    ("horse", "horses"),
    ("teacher", "teachers"),
    ("farmer", "farmers"),
    ("doctor", "doctors"),
    ("student", "students"),
    ("boy", "boys"),
    ("girl", "girls"),
];
const INANIMATE: [&str; 10] = [
    "vase", "window", "house", "car", "table", "chair", "box", "letter", "wall", "boat",
];
const NAMES: [&str; 6] = ["john", "mary", "sue", "tom", "anna", "bill"];
/// (third-person singular, base) present forms.
const INTRANSITIVE: [(&str, &str); 10] = [
    ("walks", "walk"),
    ("runs", "run"),
    ("sleeps", "sleep"),
    ("sings", "sing"),
    ("works", "work"),
    ("waits", "wait"),
    ("smiles", "smile"),
    ("eats", "eat"),
    ("swims", "swim"),
    ("jumps", "jump"),
];
const ADVERBS: [&str; 6] = ["loudly", "quickly", "slowly", "often", "quietly", "happily"];
/// Verbs with no inchoative use.
const CAUSATIVE_ONLY: [&str; 10] = [
    "destroyed",
    "built",
    "cleaned",
    "painted",
    "carried",
    "pushed",
    "bought",
    "wrote",
    "lifted",
    "washed",
];
/// (past, base) transitive forms.
const TRANSITIVE: [(&str, &str); 10] = [
    ("saw", "see"),
    ("liked", "like"),
    ("helped", "help"),
    ("found", "find"),
    ("called", "call"),
    ("followed", "follow"),
    ("met", "meet"),
    ("watched", "watch"),
    ("visited", "visit"),
    ("chased", "chase"),
];
const REFLEXIVE_VERBS: [&str; 10] = [
    "hurt", "saw", "helped", "washed", "blamed", "praised", "liked", "trusted", "taught", "fed",
];
const PRONOUNS: [(&str, &str); 5] = [
    ("he", "himself"),
    ("she", "herself"),
    ("they", "themselves"),
    ("i", "myself"),
    ("we", "ourselves"),
];
const WH: [&str; 2] = ["what", "who"];

/// Share of SVA pairs with a plural subject.
const SVA_PLURAL_RATE: f64 = 1.0 / 3.0;

fn pick<'a, T, R: Rng>(rng: &mut R, items: &'a [T]) -> &'a T {
    &items[rng.gen_range(0..items.len())]
}

fn sentence(id: String, category: Category, gold: Label, tree: &str) -> LabeledSentence {
    let tree = parse_bracketed(tree).expect("template trees are well formed");
    let text = tree
        .leaves()
        .into_iter()
        .map(|w| w.expect("leafed"))
        .collect::<Vec<_>>()
        .join(" ");
    LabeledSentence {
        id,
        category,
        gold,
        text,
        tree: Some(tree),
    }
}

/// `(LA tree, LUA tree)` for one pair, both leafed.
fn instantiate<R: Rng>(category: Category, rng: &mut R) -> (String, String) {
    match category {
        Category::CIA => {
            let (subj, verb, obj) = (pick(rng, &NAMES), pick(rng, &CAUSATIVE_ONLY), pick(rng, &INANIMATE));
            (
                format!("(ROOT (S (NP (NN {subj})) (VP (VBD {verb}) (NP (DT the) (NN {obj}))) (. .)))"),
                format!("(ROOT (S (NP (DT the) (NN {obj})) (VP (VBD {verb})) (. .)))"),
            )
        }
        Category::RAA => {
            let i = rng.gen_range(0..PRONOUNS.len());
            let j = (i + rng.gen_range(1..PRONOUNS.len())) % PRONOUNS.len();
            let (subj, refl) = PRONOUNS[i];
            let wrong = PRONOUNS[j].1;
            let verb = pick(rng, &REFLEXIVE_VERBS);
            (
                format!("(ROOT (S (NP (PRP {subj})) (VP (VBD {verb}) (NP (PRP {refl}))) (. .)))"),
                format!("(ROOT (S (NP (PRP {subj})) (VP (VBD {verb}) (NP (PRP {wrong}))) (. .)))"),
            )
        }
        Category::SVA => {
            let (sg, pl) = *pick(rng, &ANIMATE);
            let (vz, vp) = *pick(rng, &INTRANSITIVE);
            let adv = pick(rng, &ADVERBS);
            let tail = format!("(ADVP (RB {adv}))) (. .)))");
            if rng.gen_bool(SVA_PLURAL_RATE) {
                (
                    format!("(ROOT (S (NP (DT the) (NNS {pl})) (VP (VBP {vp}) {tail}"),
                    format!("(ROOT (S (NP (DT the) (NNS {pl})) (VP (VBZ {vz}) {tail}"),
                )
            } else {
                (
                    format!("(ROOT (S (NP (DT the) (NN {sg})) (VP (VBZ {vz}) {tail}"),
                    format!("(ROOT (S (NP (DT the) (NN {sg})) (VP (VBP {vp}) {tail}"),
                )
            }
        }
        Category::SVO => {
            let (subj, (verb, _), obj) = (pick(rng, &NAMES), pick(rng, &TRANSITIVE), pick(rng, &ANIMATE).0);
            (
                format!("(ROOT (S (NP (NN {subj})) (VP (VBD {verb}) (NP (DT the) (NN {obj}))) (. .)))"),
                format!("(ROOT (S (NP (NP (NN {subj})) (NP (DT the) (NN {obj}))) (VP (VBD {verb})) (. .)))"),
            )
        }
        Category::WHE => {
            let (wh, subj, (_, verb), obj) = (
                pick(rng, &WH),
                pick(rng, &NAMES),
                pick(rng, &TRANSITIVE),
                pick(rng, &ANIMATE).0,
            );
            (
                format!("(ROOT (SBARQ (WHNP (WP {wh})) (SQ (VBD did) (NP (NN {subj})) (VP (VB {verb}))) (. ?)))"),
                format!(
                    "(ROOT (SBARQ (WHNP (WP {wh})) (SQ (VBD did) (NP (NN {subj})) (VP (VB {verb}) (NP (DT the) (NN {obj})))) (. ?)))"
                ),
            )
        }
    }
}

/// `2 * n_pairs` sentences, LA then LUA for each pair, with gold trees.
pub fn generate_synthetic(category: Category, n_pairs: usize, seed: u64) -> Result<Vec<LabeledSentence>> {
    if n_pairs == 0 {
        return Err(CorpusError::NoPairs);
    }
    let index = Category::ALL.iter().position(|&c| c == category).expect("listed") as u32;
    let mut rng = substream_rng(seed, Stream::Generate, index);
    let prefix = category.as_str().to_lowercase();
    let mut out = Vec::with_capacity(2 * n_pairs);
    for p in 0..n_pairs {
        let (la, lua) = instantiate(category, &mut rng);
        out.push(sentence(format!("{prefix}-{p:04}-la"), category, Label::LA, &la));
        out.push(sentence(format!("{prefix}-{p:04}-lua"), category, Label::LUA, &lua));
    }
    Ok(out)
}

/// All five categories, in [`Category::ALL`] order.
pub fn generate_all(n_pairs: usize, seed: u64) -> Result<Vec<LabeledSentence>> {
    let mut out = Vec::new();
    for c in Category::ALL {
        out.extend(generate_synthetic(c, n_pairs, seed)?);
    }
    Ok(out)
}
