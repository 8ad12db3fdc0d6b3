//! Sign statistics from raw CC/MC counts and the aggregate share of
//! misclassified sentences with positive attribution.
//!
//! cargo run --example sign_statistics

use ligas::analysis::{aggregate_mc_positive, sign_stats, stats_csv, Outcome, SignRecord};
use ligas::label::Category;

fn main() {
    // (category, CC+, CC-, MC+, MC-)
    let counts = [
        (Category::CIA, 144, 18, 7, 13),
        (Category::RAA, 100, 0, 2, 42),
        (Category::SVA, 441, 35, 148, 52),
        (Category::SVO, 362, 38, 54, 46),
        (Category::WHE, 465, 51, 0, 4),
    ];
    let mut records = Vec::new();
    for (category, ccp, ccm, mcp, mcm) in counts {
        for (outcome, n, ligas) in [
            (Outcome::CC, ccp, 1.0),
            (Outcome::CC, ccm, -1.0),
            (Outcome::MC, mcp, 1.0),
            (Outcome::MC, mcm, 0.0),
        ] {
            records.extend((0..n).map(|_| SignRecord {
                category,
                outcome,
                sentence_ligas: ligas,
            }));
        }
    }
    let stats = sign_stats(&records);
    print!("{}", stats_csv(&stats, "example"));
    println!(
        "\nmisclassified with positive LIGAS over all categories: {:.2}%",
        aggregate_mc_positive(&stats).unwrap()
    );
}
