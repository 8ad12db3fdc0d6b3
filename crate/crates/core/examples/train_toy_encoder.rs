//! Trains the encoder on the subject-verb agreement pairs and reports held-out
//! accuracy.
//!
//! cargo run --release --example train_toy_encoder [epochs]

use std::time::Instant;

use ligas::corpus::generate_synthetic;
use ligas::label::Category;
use ligas::pipeline::{train_classifier, TrainOptions};

fn main() {
    let corpus = generate_synthetic(Category::SVA, 500, 7).unwrap();
    let mut opts = TrainOptions::with_seed(7);
    if let Some(e) = std::env::args().nth(1) {
        opts.train.epochs = e.parse().expect("epochs must be a positive integer");
    }
    let started = Instant::now();
    let trained = train_classifier(&corpus, &opts).unwrap();
    println!(
        "{} sentences, vocabulary {}, {} epochs in {:.1}s",
        corpus.len(),
        trained.vocab.len(),
        opts.train.epochs,
        started.elapsed().as_secs_f64()
    );
    for (epoch, loss) in trained.report.loss_trace.iter().enumerate() {
        println!("epoch {:>3}  loss {loss:.5}", epoch + 1);
    }
    println!(
        "train accuracy {:.4} ({} sentences), held-out accuracy {:.4} ({} sentences)",
        trained.train_accuracy, trained.train_size, trained.test_accuracy, trained.test_size
    );
}
