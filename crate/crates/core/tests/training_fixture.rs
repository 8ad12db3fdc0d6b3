//! The SVA encoder trained from seed 7 reaches a pinned held-out accuracy.

use ligas::corpus::generate_synthetic;
use ligas::label::Category;
use ligas::pipeline::{train_classifier, TrainOptions};

const RECORDED: &str = include_str!("fixtures/sva_seed7_accuracy.txt");

#[test]
fn sva_seed7_held_out_accuracy() {
    let corpus = generate_synthetic(Category::SVA, 500, 7).unwrap();
    assert_eq!(corpus.len(), 1000);
    let trained = train_classifier(&corpus, &TrainOptions::with_seed(7)).unwrap();
    println!(
        "held-out accuracy {} on {} sentences",
        trained.test_accuracy, trained.test_size
    );
    assert!(trained.test_accuracy >= 0.9, "{}", trained.test_accuracy);
    let recorded: f64 = RECORDED
        .lines()
        .find(|l| !l.starts_with('#'))
        .and_then(|l| l.trim().parse().ok())
        .expect("fixture holds one number");
    assert_eq!(trained.test_accuracy, recorded);
}
