//! Layer integrated-gradients attribution for sentence acceptability
//! classifiers.
//!
//! A small transformer encoder is trained from scratch on labeled sentences
//! (acceptable `LA` / unacceptable `LUA`). Integrated gradients between the
//! predicted class output and the embedding layer give a score per subword
//! token; scores are summed per word, per constituency subtree and per
//! sentence. The [`analysis`] module turns sentence scores into sign
//! statistics, scatter plots and heatmaps.
//!
//! Modules, bottom up:
//!
//! - [`exact`]: error-free summation so regrouped sums agree bitwise.
//! - [`tensor`]: dense `f64` tensors and a reverse-mode tape.
//! - [`tokenizer`]: greedy longest-match subword vocabulary.
//! - [`model`]: encoder classifier, training and the weight container.
//! - [`attribution`]: quadrature, integrated gradients, JSON-lines records.
//! - [`tree`]: bracketed trees, subtree scores, pattern mining.
//! - [`analysis`]: sign statistics, scatter export, HTML heatmaps.
//! - [`corpus`]: TSV and tree files, synthetic minimal pairs, splits.
//! - [`pipeline`]: the train / attribute / analyze stages.
//! - [`cli`]: the `ligas` command line.

pub mod analysis;
pub mod attribution;
pub mod cli;
pub mod corpus;
pub mod exact;
pub mod label;
pub mod model;
pub mod pipeline;
pub mod rng;
pub mod tensor;
pub mod tokenizer;
pub mod tree;
