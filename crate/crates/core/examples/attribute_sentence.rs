//! Word-level attributions of a few sentences under every quadrature rule,
//! with the completeness gap shrinking as the step count grows.
//!
//! cargo run --release --example attribute_sentence

use ligas::attribution::{integrated_gradients, IgConfig, QuadratureRule};
use ligas::corpus::generate_all;
use ligas::pipeline::{train_classifier, TrainOptions};

fn main() {
    let corpus = generate_all(30, 7).unwrap();
    let mut opts = TrainOptions::with_seed(7);
    opts.train.epochs = 20;
    let trained = train_classifier(&corpus, &opts).unwrap();
    println!("held-out accuracy {:.3}", trained.test_accuracy);

    for text in [
        "the dogs barks loudly .",
        "the dog barks loudly .",
        "what did john see the cat ?",
    ] {
        let t = trained.vocab.tokenize(text);
        let a = integrated_gradients(&trained.weights, &t, &IgConfig::default()).unwrap();
        println!(
            "\n{text}\n  predicted {} (p={:.3}), sentence LIGAS {:+.4}",
            a.prediction.predicted,
            a.prediction.confidence(),
            a.sentence_ligas
        );
        for (w, l) in a.words.iter().zip(&a.word_ligas) {
            println!("  {w:<8} {l:+.4}");
        }
        for rule in QuadratureRule::ALL {
            let gaps: Vec<String> = [4, 16, 64, 256]
                .iter()
                .map(|&m| {
                    let cfg = IgConfig {
                        steps: m,
                        rule,
                        ..IgConfig::default()
                    };
                    format!(
                        "m={m}: {:.2e}",
                        integrated_gradients(&trained.weights, &t, &cfg).unwrap().relative_gap()
                    )
                })
                .collect();
            println!("  {:<9} relative gap  {}", rule.as_str(), gaps.join("  "));
        }
    }
}
