//! WordPiece-style subword tokenization with word alignment.
//!
//! Text is lower-cased, split on whitespace, and every ASCII punctuation
//! mark becomes a word of its own (constituency trees put `.` under its own
//! `(. .)` node, so the word split must agree). Each word is then broken
//! into vocabulary pieces by greedy longest match from the left; pieces after
//! the first carry the `##` prefix. A word that cannot be covered becomes a
//! single `[UNK]`.
//!
//! The resulting [`TokenizedSentence`] records, for every word, the span of
//! token positions it produced, so per-token scores can be summed back to
//! words.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use thiserror::Error;

pub const PAD: &str = "[PAD]";
pub const UNK: &str = "[UNK]";
pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";
pub const PAD_ID: usize = 0;
pub const UNK_ID: usize = 1;
pub const CLS_ID: usize = 2;
pub const SEP_ID: usize = 3;
pub const CONTINUATION: &str = "##";

const SPECIALS: [&str; 4] = [PAD, UNK, CLS, SEP];
// Longer words are not worth matching piecewise.
const MAX_WORD_CHARS: usize = 100;

#[derive(Debug, Error)]
pub enum TokenizerError {
    #[error("cannot build a vocabulary from an empty corpus")]
    EmptyCorpus,
    #[error("vocabulary budget {budget} is below the {required} entries needed for special tokens and characters")]
    BudgetTooSmall { budget: usize, required: usize },
    #[error("vocabulary file line {line}: {reason}")]
    BadVocabFile { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Splits text into lower-cased words; punctuation marks stand alone.
pub fn split_words(text: &str) -> Vec<String> {
    let mut words = Vec::new();
    for chunk in text.split_whitespace() {
        let mut current = String::new();
        for c in chunk.chars() {
            if c.is_ascii_punctuation() {
                if !current.is_empty() {
                    words.push(std::mem::take(&mut current));
                }
                words.push(c.to_string());
            } else {
                current.extend(c.to_lowercase());
            }
        }
        if !current.is_empty() {
            words.push(current);
        }
    }
    words
}

/// Token inventory with dense ids; ids 0..4 are the special tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    ids: HashMap<String, usize>,
}

impl Vocabulary {
    /// Builds a vocabulary from tokens in id order.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self, TokenizerError> {
        for (i, special) in SPECIALS.iter().enumerate() {
            if tokens.get(i).map(String::as_str) != Some(*special) {
                return Err(TokenizerError::BadVocabFile {
                    line: i + 1,
                    reason: format!("expected {special}"),
                });
            }
        }
        let mut ids = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if t.is_empty() || t.chars().any(char::is_whitespace) {
                return Err(TokenizerError::BadVocabFile {
                    line: i + 1,
                    reason: "token is empty or contains whitespace".into(),
                });
            }
            if ids.insert(t.clone(), i).is_some() {
                return Err(TokenizerError::BadVocabFile {
                    line: i + 1,
                    reason: format!("duplicate token {t:?}"),
                });
            }
        }
        Ok(Self { tokens, ids })
    }

    /// Builds a vocabulary of at most `max_size` entries.
    ///
    /// Always included: the four specials, then every character seen, both
    /// as a word-initial piece and as a `##` continuation (so any word made
    /// of seen characters can be covered). The remaining budget goes to
    /// whole words by descending frequency; a quarter of it, plus whatever
    /// words leave unused, goes to `##` suffixes of the words left out, also
    /// by frequency. Ties keep first-seen order.
    pub fn build<S: AsRef<str>>(corpus: &[S], max_size: usize) -> Result<Self, TokenizerError> {
        if corpus.is_empty() {
            return Err(TokenizerError::EmptyCorpus);
        }
        let mut word_counts: Vec<(String, usize)> = Vec::new();
        let mut word_index: HashMap<String, usize> = HashMap::new();
        let mut chars: Vec<char> = Vec::new();
        for sentence in corpus {
            for w in split_words(sentence.as_ref()) {
                for c in w.chars() {
                    if !chars.contains(&c) {
                        chars.push(c);
                    }
                }
                match word_index.get(&w) {
                    Some(&i) => word_counts[i].1 += 1,
                    None => {
                        word_index.insert(w.clone(), word_counts.len());
                        word_counts.push((w, 1));
                    }
                }
            }
        }
        chars.sort_unstable();

        let mut tokens: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        tokens.extend(chars.iter().map(|c| c.to_string()));
        tokens.extend(chars.iter().map(|c| format!("{CONTINUATION}{c}")));
        if tokens.len() > max_size {
            return Err(TokenizerError::BudgetTooSmall {
                budget: max_size,
                required: tokens.len(),
            });
        }

        let remaining = max_size - tokens.len();
        let suffix_reserve = remaining / 4;
        let word_budget = remaining - suffix_reserve;

        // Stable sort keeps first-seen order among equal counts.
        let mut by_freq: Vec<&(String, usize)> = word_counts.iter().collect();
        by_freq.sort_by_key(|w| std::cmp::Reverse(w.1));

        let mut present: std::collections::HashSet<String> = tokens.iter().cloned().collect();
        let mut kept_words = 0;
        let mut left_out: Vec<&(String, usize)> = Vec::new();
        for entry in by_freq {
            if present.contains(&entry.0) {
                continue;
            }
            if kept_words < word_budget {
                tokens.push(entry.0.clone());
                present.insert(entry.0.clone());
                kept_words += 1;
            } else {
                left_out.push(entry);
            }
        }

        let suffix_budget = max_size - tokens.len();
        let mut suffix_counts: Vec<(String, usize)> = Vec::new();
        let mut suffix_index: HashMap<String, usize> = HashMap::new();
        for (word, count) in left_out {
            let cs: Vec<char> = word.chars().collect();
            // Proper suffixes of two or more characters.
            for start in 1..cs.len().saturating_sub(1) {
                let piece = format!("{CONTINUATION}{}", cs[start..].iter().collect::<String>());
                match suffix_index.get(&piece) {
                    Some(&i) => suffix_counts[i].1 += count,
                    None => {
                        suffix_index.insert(piece.clone(), suffix_counts.len());
                        suffix_counts.push((piece, *count));
                    }
                }
            }
        }
        suffix_counts.sort_by_key(|s| std::cmp::Reverse(s.1));
        tokens.extend(
            suffix_counts
                .into_iter()
                .map(|(p, _)| p)
                .filter(|p| !present.contains(p))
                .take(suffix_budget),
        );

        Self::from_tokens(tokens)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.ids.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.ids.contains_key(token)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// One token per line; the line number (from zero) is the id.
    pub fn to_file_string(&self) -> String {
        let mut out = self.tokens.join("\n");
        out.push('\n');
        out
    }

    pub fn parse_file_string(text: &str) -> Result<Self, TokenizerError> {
        let text = text.strip_suffix('\n').unwrap_or(text);
        Self::from_tokens(text.split('\n').map(|l| l.trim_end_matches('\r').to_string()).collect())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), TokenizerError> {
        fs::write(path, self.to_file_string())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TokenizerError> {
        Self::parse_file_string(&fs::read_to_string(path)?)
    }

    /// Greedy longest-match pieces for one already-normalized word.
    fn word_pieces(&self, word: &str) -> Vec<usize> {
        let cs: Vec<char> = word.chars().collect();
        if cs.len() > MAX_WORD_CHARS {
            return vec![UNK_ID];
        }
        let mut pieces = Vec::new();
        let mut start = 0;
        while start < cs.len() {
            let mut end = cs.len();
            let mut found = None;
            while end > start {
                let body: String = cs[start..end].iter().collect();
                let candidate = if start == 0 {
                    body
                } else {
                    format!("{CONTINUATION}{body}")
                };
                if let Some(id) = self.id(&candidate) {
                    found = Some(id);
                    break;
                }
                end -= 1;
            }
            match found {
                Some(id) => pieces.push(id),
                None => return vec![UNK_ID],
            }
            start = end;
        }
        pieces
    }

    pub fn tokenize(&self, text: &str) -> TokenizedSentence {
        let words = split_words(text);
        let mut token_ids = vec![CLS_ID];
        let mut spans = Vec::with_capacity(words.len());
        for w in &words {
            let start = token_ids.len();
            token_ids.extend(self.word_pieces(w));
            spans.push(start..token_ids.len());
        }
        token_ids.push(SEP_ID);
        TokenizedSentence {
            token_ids,
            words,
            spans,
        }
    }

    /// Rebuilds lower-cased text from interior tokens, gluing `##` pieces.
    pub fn detokenize(&self, token_ids: &[usize]) -> String {
        let mut out = String::new();
        for &id in token_ids {
            if matches!(id, PAD_ID | CLS_ID | SEP_ID) {
                continue;
            }
            let tok = self.token(id).unwrap_or(UNK);
            match tok.strip_prefix(CONTINUATION) {
                Some(rest) if !out.is_empty() => out.push_str(rest),
                _ => {
                    if !out.is_empty() {
                        out.push(' ');
                    }
                    out.push_str(tok);
                }
            }
        }
        out
    }
}

/// Token ids wrapped in `[CLS]`/`[SEP]` plus each word's token span.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenizedSentence {
    pub token_ids: Vec<usize>,
    pub words: Vec<String>,
    /// `spans[w]` is the half-open range of positions in `token_ids`
    /// produced by word `w`. Spans tile `1..token_ids.len() - 1`.
    pub spans: Vec<std::ops::Range<usize>>,
}

impl TokenizedSentence {
    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Words split into more than one piece.
    pub fn multi_piece_words(&self) -> impl Iterator<Item = usize> + '_ {
        self.spans
            .iter()
            .enumerate()
            .filter(|(_, s)| s.len() > 1)
            .map(|(i, _)| i)
    }
}
