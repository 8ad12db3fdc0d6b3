//! Renders an HTML heatmap of word attributions for a handful of sentences.
//!
//! cargo run --release --example heatmap_report [out.html]

use ligas::analysis::heatmap_page;
use ligas::attribution::IgConfig;
use ligas::corpus::generate_all;
use ligas::pipeline::{attribute_corpus, train_classifier, TrainOptions};

fn main() {
    let out = std::env::args().nth(1).unwrap_or_else(|| "heatmap.html".into());
    let corpus = generate_all(20, 3).unwrap();
    let mut opts = TrainOptions::with_seed(3);
    opts.train.epochs = 15;
    let trained = train_classifier(&corpus, &opts).unwrap();
    let shown: Vec<_> = corpus.iter().step_by(20).cloned().collect();
    let cfg = IgConfig {
        steps: 32,
        ..IgConfig::default()
    };
    let records = attribute_corpus(&trained.weights, &trained.vocab, &shown, &cfg).unwrap();
    std::fs::write(&out, heatmap_page(&records, "example")).unwrap();
    println!("{} sentences rendered to {out}", records.len());
}
