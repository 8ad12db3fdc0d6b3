//! The whole pipeline in memory: generate, train, attribute, analyze, and
//! write the report files to a directory.
//!
//! cargo run --release --example full_pipeline [out_dir]

use std::path::PathBuf;

use ligas::attribution::IgConfig;
use ligas::corpus::generate_all;
use ligas::pipeline::{analyze, attribute_corpus, config_digest, train_classifier, TrainOptions};
use ligas::tree::Aggregate;

fn main() {
    let out: PathBuf = std::env::args().nth(1).unwrap_or_else(|| "ligas-report".into()).into();
    let seed = 7;
    let corpus = generate_all(40, seed).unwrap();
    let mut opts = TrainOptions::with_seed(seed);
    opts.train.epochs = 20;
    let trained = train_classifier(&corpus, &opts).unwrap();
    println!(
        "held-out accuracy {:.3} on {} sentences",
        trained.test_accuracy, trained.test_size
    );

    let cfg = IgConfig {
        steps: 32,
        ..IgConfig::default()
    };
    let records = attribute_corpus(&trained.weights, &trained.vocab, &corpus, &cfg).unwrap();
    let trees: Vec<_> = corpus.iter().map(|s| (s.id.clone(), s.tree.clone().unwrap())).collect();
    let report = analyze(&records, Some(&trees), Aggregate::Sum).unwrap();

    let digest = config_digest(&[
        ("seed", seed.to_string()),
        ("pairs", "40".into()),
        ("steps", "32".into()),
    ]);
    print!("{}", report.summary(&digest));
    std::fs::create_dir_all(&out).unwrap();
    for f in report.write_to(&out, &digest).unwrap() {
        println!("wrote {}", f.display());
    }
}
