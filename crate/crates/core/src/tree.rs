//! Penn-bracketed constituency trees, leaf alignment, subtree scores and
//! pattern mining.
//!
//! Two serializations exist. The pattern form drops leaf words and has no
//! whitespace: `(ROOT(S(NP(DT)(NN))(VP(VBD))(.)))`. The leafed form keeps
//! words and separates every item by a single space:
//! `(ROOT (S (NP (DT the) (NN dog)) (VP (VBD barked)) (. .)))`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exact::ExactSum;
use crate::label::{Category, Label};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TreeError {
    #[error("empty tree")]
    Empty,
    #[error("unbalanced parentheses at byte {offset}")]
    Unbalanced { offset: usize },
    #[error("trailing input at byte {offset}")]
    Trailing { offset: usize },
    #[error("expected {expected} at byte {offset}")]
    Unexpected { offset: usize, expected: &'static str },
    #[error("node at byte {offset} mixes a word with child nodes")]
    MixedContent { offset: usize },
    #[error("tree has {leaves} leaves but the sentence has {words} words")]
    LeafCount { leaves: usize, words: usize },
    #[error("leaf {index} is {leaf:?} but word {index} is {word:?}")]
    WordMismatch { index: usize, leaf: String, word: String },
    #[error("leaf {index} has no word")]
    MissingWord { index: usize },
    #[error("cannot rank an empty pattern group")]
    EmptyGroup,
    #[error("group member {member} does not share the first member's shape")]
    ShapeMismatch { member: usize },
}

/// A constituency tree node. A node carries either children or a leaf
/// word; pattern trees have childless, wordless leaf slots.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ParseTree {
    pub label: String,
    pub children: Vec<ParseTree>,
    pub word: Option<String>,
}

impl ParseTree {
    pub fn leaf(label: &str, word: &str) -> Self {
        Self {
            label: label.to_string(),
            children: Vec::new(),
            word: Some(word.to_string()),
        }
    }

    pub fn node(label: &str, children: Vec<ParseTree>) -> Self {
        Self {
            label: label.to_string(),
            children,
            word: None,
        }
    }

    pub fn parse(text: &str) -> Result<Self, TreeError> {
        parse_bracketed(text)
    }

    pub fn is_leaf_slot(&self) -> bool {
        self.children.is_empty()
    }

    /// Number of leaf slots (childless nodes).
    pub fn leaf_count(&self) -> usize {
        if self.is_leaf_slot() {
            1
        } else {
            self.children.iter().map(ParseTree::leaf_count).sum()
        }
    }

    /// Leaf words in order; `None` for wordless slots.
    pub fn leaves(&self) -> Vec<Option<&str>> {
        let mut out = Vec::new();
        self.visit_leaves(&mut |t| out.push(t.word.as_deref()));
        out
    }

    fn visit_leaves<'a>(&'a self, f: &mut impl FnMut(&'a ParseTree)) {
        if self.is_leaf_slot() {
            f(self);
        } else {
            for c in &self.children {
                c.visit_leaves(f);
            }
        }
    }

    /// The node at a child-index path from this node.
    pub fn at(&self, path: &[usize]) -> Option<&ParseTree> {
        path.iter().try_fold(self, |t, &i| t.children.get(i))
    }

    /// Nodes in depth-first pre-order with their paths.
    pub fn nodes(&self) -> Vec<(Vec<usize>, &ParseTree)> {
        fn walk<'a>(t: &'a ParseTree, path: &mut Vec<usize>, out: &mut Vec<(Vec<usize>, &'a ParseTree)>) {
            out.push((path.clone(), t));
            for (i, c) in t.children.iter().enumerate() {
                path.push(i);
                walk(c, path, out);
                path.pop();
            }
        }
        let mut out = Vec::new();
        walk(self, &mut Vec::new(), &mut out);
        out
    }

    /// Pattern form: no words, no whitespace.
    pub fn to_pattern(&self) -> PatternKey {
        let mut s = String::new();
        self.write_pattern(&mut s);
        PatternKey(s)
    }

    fn write_pattern(&self, out: &mut String) {
        out.push('(');
        out.push_str(&self.label);
        for c in &self.children {
            c.write_pattern(out);
        }
        out.push(')');
    }

    /// Leafed form with single spaces.
    pub fn to_bracketed(&self) -> String {
        let mut s = String::new();
        self.write_bracketed(&mut s);
        s
    }

    fn write_bracketed(&self, out: &mut String) {
        out.push('(');
        out.push_str(&self.label);
        if let Some(w) = &self.word {
            out.push(' ');
            out.push_str(w);
        }
        for c in &self.children {
            out.push(' ');
            c.write_bracketed(out);
        }
        out.push(')');
    }
}

/// Canonical leafless pattern string.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PatternKey(pub String);

impl PatternKey {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl std::fmt::Display for PatternKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

struct Parser<'a> {
    text: &'a str,
    pos: usize,
}

impl Parser<'_> {
    fn skip_ws(&mut self) {
        let rest = &self.text[self.pos..];
        self.pos += rest.len() - rest.trim_start().len();
    }

    fn peek(&self) -> Option<u8> {
        self.text.as_bytes().get(self.pos).copied()
    }

    fn atom(&mut self) -> &str {
        let start = self.pos;
        let rest = &self.text[start..];
        let len = rest
            .find(|c: char| c == '(' || c == ')' || c.is_whitespace())
            .unwrap_or(rest.len());
        self.pos += len;
        &self.text[start..start + len]
    }

    // Positioned just after '('.
    fn node(&mut self, open: usize) -> Result<ParseTree, TreeError> {
        self.skip_ws();
        let label = self.atom().to_string();
        if label.is_empty() {
            return match self.peek() {
                None => Err(TreeError::Unbalanced { offset: self.pos }),
                _ => Err(TreeError::Unexpected {
                    offset: self.pos,
                    expected: "a label",
                }),
            };
        }
        let mut children = Vec::new();
        let mut word = None;
        loop {
            self.skip_ws();
            match self.peek() {
                None => return Err(TreeError::Unbalanced { offset: self.pos }),
                Some(b')') => {
                    self.pos += 1;
                    return Ok(ParseTree { label, children, word });
                }
                Some(b'(') => {
                    if word.is_some() {
                        return Err(TreeError::MixedContent { offset: open });
                    }
                    let at = self.pos;
                    self.pos += 1;
                    children.push(self.node(at)?);
                }
                Some(_) => {
                    if word.is_some() || !children.is_empty() {
                        return Err(TreeError::MixedContent { offset: open });
                    }
                    word = Some(self.atom().to_string());
                }
            }
        }
    }
}

/// Parses one bracketed tree, leafed or pattern form.
pub fn parse_bracketed(text: &str) -> Result<ParseTree, TreeError> {
    let mut p = Parser { text, pos: 0 };
    p.skip_ws();
    match p.peek() {
        None => return Err(TreeError::Empty),
        Some(b'(') => {}
        Some(b')') => return Err(TreeError::Unbalanced { offset: p.pos }),
        Some(_) => {
            return Err(TreeError::Unexpected {
                offset: p.pos,
                expected: "'('",
            })
        }
    }
    let open = p.pos;
    p.pos += 1;
    let tree = p.node(open)?;
    p.skip_ws();
    match p.peek() {
        None => Ok(tree),
        Some(b')') => Err(TreeError::Unbalanced { offset: p.pos }),
        Some(_) => Err(TreeError::Trailing { offset: p.pos }),
    }
}

/// Maps leaf `i` to word `i` after checking the words agree, ignoring case.
pub fn align<S: AsRef<str>>(tree: &ParseTree, words: &[S]) -> Result<Vec<usize>, TreeError> {
    let leaves = tree.leaves();
    if leaves.len() != words.len() {
        return Err(TreeError::LeafCount {
            leaves: leaves.len(),
            words: words.len(),
        });
    }
    for (i, (leaf, word)) in leaves.iter().zip(words).enumerate() {
        let leaf = leaf.ok_or(TreeError::MissingWord { index: i })?;
        if leaf.to_lowercase() != word.as_ref().to_lowercase() {
            return Err(TreeError::WordMismatch {
                index: i,
                leaf: leaf.to_string(),
                word: word.as_ref().to_string(),
            });
        }
    }
    Ok((0..words.len()).collect())
}

/// Score of one subtree: the exact sum of its leaves' word scores.
#[derive(Debug, Clone)]
pub struct SubtreeScore {
    pub path: Vec<usize>,
    pub label: String,
    /// Pattern form of the subtree.
    pub fragment: String,
    pub leaves: Range<usize>,
    pub ligas: f64,
    /// Unrounded sum, for exact identity checks.
    pub exact: ExactSum,
}

/// One entry per node, depth-first pre-order; the first entry is the root.
pub fn subtree_scores(tree: &ParseTree, word_ligas: &[f64]) -> Result<Vec<SubtreeScore>, TreeError> {
    let leaves = tree.leaf_count();
    if leaves != word_ligas.len() {
        return Err(TreeError::LeafCount {
            leaves,
            words: word_ligas.len(),
        });
    }
    fn walk(t: &ParseTree, path: &mut Vec<usize>, start: usize, ligas: &[f64], out: &mut Vec<SubtreeScore>) -> usize {
        let slot = out.len();
        let end = if t.is_leaf_slot() {
            start + 1
        } else {
            // Placeholder so pre-order is kept; filled after the children.
            out.push(SubtreeScore {
                path: path.clone(),
                label: t.label.clone(),
                fragment: String::new(),
                leaves: start..start,
                ligas: 0.0,
                exact: ExactSum::new(),
            });
            let mut end = start;
            for (i, c) in t.children.iter().enumerate() {
                path.push(i);
                end = walk(c, path, end, ligas, out);
                path.pop();
            }
            end
        };
        let exact: ExactSum = ligas[start..end].iter().copied().collect();
        let score = SubtreeScore {
            path: path.clone(),
            label: t.label.clone(),
            fragment: t.to_pattern().0,
            leaves: start..end,
            ligas: exact.value(),
            exact,
        };
        if t.is_leaf_slot() {
            out.push(score);
        } else {
            out[slot] = score;
        }
        end
    }
    let mut out = Vec::new();
    walk(tree, &mut Vec::new(), 0, word_ligas, &mut out);
    Ok(out)
}

/// How sentence scores combine over a pattern's sentences.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregate {
    #[default]
    Sum,
    Mean,
}

impl std::str::FromStr for Aggregate {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sum" => Ok(Aggregate::Sum),
            "mean" => Ok(Aggregate::Mean),
            _ => Err(format!("unknown aggregate {s:?} (expected sum or mean)")),
        }
    }
}

impl Aggregate {
    pub fn as_str(self) -> &'static str {
        match self {
            Aggregate::Sum => "sum",
            Aggregate::Mean => "mean",
        }
    }

    fn apply(self, total: &ExactSum, count: usize) -> f64 {
        match self {
            Aggregate::Sum => total.value(),
            Aggregate::Mean => total.value() / count as f64,
        }
    }
}

/// One sentence presented to [`mine_patterns`].
#[derive(Debug, Clone, Copy)]
pub struct MinedSentence<'a> {
    pub tree: &'a ParseTree,
    pub category: Category,
    pub gold: Label,
    pub sentence_ligas: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatternRow {
    pub pattern: PatternKey,
    pub category: Category,
    pub label: Label,
    pub count: usize,
    pub ligas: f64,
}

/// Unique patterns per (category, label), most frequent first; equal
/// counts are ordered by pattern string.
pub fn mine_patterns(corpus: &[MinedSentence<'_>], aggregate: Aggregate) -> Vec<PatternRow> {
    let mut groups: BTreeMap<(Category, Label, PatternKey), (usize, ExactSum)> = BTreeMap::new();
    for s in corpus {
        let entry = groups.entry((s.category, s.gold, s.tree.to_pattern())).or_default();
        entry.0 += 1;
        entry.1.add(s.sentence_ligas);
    }
    let mut rows: Vec<PatternRow> = groups
        .into_iter()
        .map(|((category, label, pattern), (count, total))| PatternRow {
            ligas: aggregate.apply(&total, count),
            pattern,
            category,
            label,
            count,
        })
        .collect();
    rows.sort_by(|a, b| {
        (a.category, a.label)
            .cmp(&(b.category, b.label))
            .then(b.count.cmp(&a.count))
            .then_with(|| a.pattern.cmp(&b.pattern))
    });
    rows
}

/// Highest-scoring subtree position of a pattern group.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedSubtree {
    pub path: Vec<usize>,
    pub label: String,
    pub fragment: String,
    pub ligas: f64,
}

/// Renders a path as dot-separated child indices; the root is `""`.
pub fn format_path(path: &[usize]) -> String {
    let mut s = String::new();
    for (i, p) in path.iter().enumerate() {
        if i > 0 {
            s.push('.');
        }
        let _ = write!(s, "{p}");
    }
    s
}

/// Sums each subtree position across a group of same-pattern sentences
/// and returns the best position.
///
/// The root is excluded because it always equals the whole-sentence sum;
/// it is returned only when every other position ties. Among the rest,
/// ties go to the shallowest path, then the leftmost.
pub fn rank_subtrees(group: &[Vec<SubtreeScore>], aggregate: Aggregate) -> Result<RankedSubtree, TreeError> {
    let first = group.first().ok_or(TreeError::EmptyGroup)?;
    let mut totals: Vec<ExactSum> = vec![ExactSum::new(); first.len()];
    for (m, scores) in group.iter().enumerate() {
        if scores.len() != first.len() || scores.iter().zip(first).any(|(a, b)| a.path != b.path) {
            return Err(TreeError::ShapeMismatch { member: m });
        }
        for (t, s) in totals.iter_mut().zip(scores) {
            t.add_sum(&s.exact);
        }
    }
    let values: Vec<f64> = totals.iter().map(|t| aggregate.apply(t, group.len())).collect();
    let pick = |i: usize| RankedSubtree {
        path: first[i].path.clone(),
        label: first[i].label.clone(),
        fragment: first[i].fragment.clone(),
        ligas: values[i],
    };
    let candidates: Vec<usize> = (0..first.len()).filter(|&i| !first[i].path.is_empty()).collect();
    let root = first.iter().position(|s| s.path.is_empty()).unwrap_or(0);
    let Some(&c0) = candidates.first() else {
        return Ok(pick(root));
    };
    if candidates.iter().all(|&i| values[i] == values[c0]) {
        return Ok(pick(root));
    }
    let mut best = c0;
    for &i in &candidates[1..] {
        let (v, bv) = (values[i], values[best]);
        let (d, bd) = (first[i].path.len(), first[best].path.len());
        // Pre-order visits left before right, so a strict improvement on
        // (score, shallowness) keeps the leftmost among equals.
        if v > bv || (v == bv && d < bd) {
            best = i;
        }
    }
    Ok(pick(best))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const RAA: &str = "(ROOT(S(NP(PRP))(VP(VBD)(NP(PRP)))(.)))";

    #[test]
    fn parses_pattern_form() {
        let t = parse_bracketed(RAA).unwrap();
        assert_eq!(t.label, "ROOT");
        assert_eq!(t.leaf_count(), 4);
        assert_eq!(t.leaves(), vec![None; 4]);
        assert_eq!(t.to_pattern().as_str(), RAA);
    }

    #[test]
    fn parses_leafed_form() {
        let t = parse_bracketed("(ROOT (S (NP (NN dog)) (VP (VBD barked)) (. .)))").unwrap();
        assert_eq!(t.leaves(), vec![Some("dog"), Some("barked"), Some(".")]);
        assert_eq!(t.to_bracketed(), "(ROOT (S (NP (NN dog)) (VP (VBD barked)) (. .)))");
    }

    #[test]
    fn reports_parse_errors() {
        assert_eq!(parse_bracketed("(ROOT(S)"), Err(TreeError::Unbalanced { offset: 8 }));
        assert_eq!(parse_bracketed("  "), Err(TreeError::Empty));
        assert_eq!(
            parse_bracketed("(A (B x)) (C)"),
            Err(TreeError::Trailing { offset: 10 })
        );
        assert_eq!(parse_bracketed("(A x))"), Err(TreeError::Unbalanced { offset: 5 }));
        assert_eq!(
            parse_bracketed("(A x (B y))"),
            Err(TreeError::MixedContent { offset: 0 })
        );
        assert!(matches!(
            parse_bracketed("(() x)"),
            Err(TreeError::Unexpected { offset: 1, .. })
        ));
    }

    #[test]
    fn whitespace_is_insignificant() {
        let a = parse_bracketed("(ROOT(S(NP(NN dog))(. .)))").unwrap();
        let b = parse_bracketed("\n( ROOT\t( S (NP (NN  dog) ) (. .) ) )\n").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn pattern_drops_words() {
        let t = parse_bracketed("(ROOT (S (NP (DT the) (NN dog)) (VP (VBD barked)) (. .)))").unwrap();
        assert_eq!(t.to_pattern().as_str(), "(ROOT(S(NP(DT)(NN))(VP(VBD))(.)))");
        let u = parse_bracketed("(ROOT (S (NP (DT a) (NN cat)) (VP (VBD slept)) (. .)))").unwrap();
        assert_eq!(t.to_pattern(), u.to_pattern());
        let p = parse_bracketed(t.to_pattern().as_str()).unwrap();
        assert_eq!(p.to_pattern(), t.to_pattern());
    }

    #[test]
    fn alignment() {
        let t = parse_bracketed("(ROOT (S (NP (DT The) (NN dog)) (VP (VBD barked)) (. .)))").unwrap();
        assert_eq!(align(&t, &["the", "dog", "barked", "."]).unwrap(), vec![0, 1, 2, 3]);
        assert_eq!(
            align(&t, &["the", "dog", "barked"]),
            Err(TreeError::LeafCount { leaves: 4, words: 3 })
        );
        assert!(matches!(
            align(&t, &["the", "cat", "barked", "."]),
            Err(TreeError::WordMismatch { index: 1, .. })
        ));
        let p = parse_bracketed(RAA).unwrap();
        assert_eq!(
            align(&p, &["a", "b", "c", "d"]),
            Err(TreeError::MissingWord { index: 0 })
        );
    }

    fn simple() -> (ParseTree, Vec<SubtreeScore>) {
        let t = parse_bracketed("(ROOT(S(NP(NN))(VP(VBD))(.)))").unwrap();
        let s = subtree_scores(&t, &[0.5, 1.5, -0.2]).unwrap();
        (t, s)
    }

    fn score_of<'a>(s: &'a [SubtreeScore], path: &[usize]) -> &'a SubtreeScore {
        s.iter().find(|x| x.path == path).unwrap()
    }

    #[test]
    fn hand_summed_subtrees() {
        let (t, s) = simple();
        assert_eq!(s.len(), t.nodes().len());
        assert_eq!(s[0].path, Vec::<usize>::new());
        assert_eq!(score_of(&s, &[0, 0]).ligas, 0.5);
        assert_eq!(score_of(&s, &[0, 1]).ligas, 1.5);
        assert_eq!(score_of(&s, &[0, 1, 0]).ligas, 1.5);
        assert_eq!(score_of(&s, &[0]).ligas, 1.8);
        assert_eq!(score_of(&s, &[]).ligas, 1.8);
        assert_eq!(score_of(&s, &[0, 1]).fragment, "(VP(VBD))");
        // Pre-order.
        let labels: Vec<&str> = s.iter().map(|x| x.label.as_str()).collect();
        assert_eq!(labels, ["ROOT", "S", "NP", "NN", "VP", "VBD", "."]);
    }

    #[test]
    fn rank_prefers_largest_non_root() {
        let (_, s) = simple();
        let r = rank_subtrees(&[s], Aggregate::Sum).unwrap();
        assert_eq!(r.label, "S");
        assert_eq!(r.ligas, 1.8);
    }

    #[test]
    fn rank_all_zero_returns_root() {
        let t = parse_bracketed("(ROOT(S(NP(NN))(VP(VBD))(.)))").unwrap();
        let s = subtree_scores(&t, &[0.0; 3]).unwrap();
        let r = rank_subtrees(&[s], Aggregate::Sum).unwrap();
        assert_eq!(r.path, Vec::<usize>::new());
        assert_eq!(r.label, "ROOT");
    }

    #[test]
    fn rank_cancelling_group() {
        let t = parse_bracketed("(ROOT(S(NP(NN))(VP(VBD))(.)))").unwrap();
        let a = subtree_scores(&t, &[1.0, 0.5, -0.2]).unwrap();
        let b = subtree_scores(&t, &[-1.0, 0.5, -0.2]).unwrap();
        let r = rank_subtrees(&[a, b], Aggregate::Sum).unwrap();
        // VP and VBD both reach 1.0; VP is shallower.
        assert_eq!(r.label, "VP");
        assert_eq!(r.ligas, 1.0);
        assert_eq!(rank_subtrees(&[], Aggregate::Sum), Err(TreeError::EmptyGroup));
    }

    #[test]
    fn mining_counts_and_orders() {
        let a = parse_bracketed("(ROOT (S (NP (NN x)) (. .)))").unwrap();
        let b = parse_bracketed("(ROOT (S (NP (DT a) (NN y)) (. .)))").unwrap();
        let item = |t, l| MinedSentence {
            tree: t,
            category: Category::CIA,
            gold: Label::LA,
            sentence_ligas: l,
        };
        let rows = mine_patterns(
            &[item(&a, 1.0), item(&a, 2.0), item(&a, 3.0), item(&b, 5.0)],
            Aggregate::Sum,
        );
        assert_eq!(rows.len(), 2);
        assert_eq!((rows[0].count, rows[0].ligas), (3, 6.0));
        assert_eq!(rows[0].pattern.as_str(), "(ROOT(S(NP(NN))(.)))");
        let mean = mine_patterns(&[item(&a, 1.0), item(&a, 2.0)], Aggregate::Mean);
        assert_eq!(mean[0].ligas, 1.5);
        assert!(mine_patterns(&[], Aggregate::Sum).is_empty());
        // Equal counts fall back to pattern order.
        let rows = mine_patterns(&[item(&b, 0.0), item(&a, 0.0)], Aggregate::Sum);
        assert!(rows[0].pattern < rows[1].pattern);
    }

    #[test]
    fn format_paths() {
        assert_eq!(format_path(&[]), "");
        assert_eq!(format_path(&[0, 1, 2]), "0.1.2");
    }

    fn arb_tree() -> impl Strategy<Value = ParseTree> {
        let leaf = ("[A-Z]{1,4}|\\.", prop::option::of("[a-z]{1,6}")).prop_map(|(label, word)| ParseTree {
            label,
            children: Vec::new(),
            word,
        });
        leaf.prop_recursive(4, 32, 4, |inner| {
            ("[A-Z]{1,4}", prop::collection::vec(inner, 1..4)).prop_map(|(l, c)| ParseTree::node(&l, c))
        })
    }

    fn strip(t: &ParseTree) -> ParseTree {
        ParseTree {
            label: t.label.clone(),
            children: t.children.iter().map(strip).collect(),
            word: None,
        }
    }

    proptest! {
        #[test]
        fn render_parse_round_trip(t in arb_tree()) {
            prop_assert_eq!(parse_bracketed(&t.to_bracketed()).unwrap(), t.clone());
            let p = parse_bracketed(t.to_pattern().as_str()).unwrap();
            prop_assert_eq!(&p, &strip(&t));
            prop_assert_eq!(p.to_pattern(), t.to_pattern());
            prop_assert!(!t.to_pattern().as_str().contains(char::is_whitespace));
        }

        #[test]
        fn node_scores_partition_exactly(t in arb_tree(), seed in any::<u64>()) {
            let n = t.leaf_count();
            let ligas: Vec<f64> = (0..n)
                .map(|i| ((seed.wrapping_add(i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) >> 11) as f64 / (1u64 << 53) as f64 - 0.5) * 10.0)
                .collect();
            let scores = subtree_scores(&t, &ligas).unwrap();
            for s in &scores {
                let node = t.at(&s.path).unwrap();
                if node.children.is_empty() {
                    prop_assert_eq!(s.ligas, ligas[s.leaves.start]);
                    continue;
                }
                let mut kids = ExactSum::new();
                for i in 0..node.children.len() {
                    let mut p = s.path.clone();
                    p.push(i);
                    kids.add_sum(&scores.iter().find(|c| c.path == p).unwrap().exact);
                }
                prop_assert!(kids.exactly_equals(&s.exact));
            }
            prop_assert_eq!(scores[0].ligas, crate::exact::exact_sum(ligas.iter().copied()));
        }
    }
}
