//! Parses bracketed trees, strips words into patterns and ranks subtrees by
//! summed word scores.
//!
//! cargo run --example parse_patterns

use ligas::label::{Category, Label};
use ligas::tree::{
    align, format_path, mine_patterns, rank_subtrees, subtree_scores, Aggregate, MinedSentence, ParseTree,
};

fn main() {
    let sentences = [
        (
            "(ROOT (S (NP (DT the) (NN dog)) (VP (VBZ barks) (ADVP (RB loudly))) (. .)))",
            [0.1, 0.4, 1.2, -0.3, 0.05],
        ),
        (
            "(ROOT (S (NP (DT a) (NN cat)) (VP (VBZ sleeps) (ADVP (RB quietly))) (. .)))",
            [0.2, 0.1, 0.9, 0.4, -0.1],
        ),
    ];
    let mut trees = Vec::new();
    let mut groups = Vec::new();
    for (text, ligas) in &sentences {
        let tree = ParseTree::parse(text).unwrap();
        let words: Vec<String> = tree.leaves().into_iter().map(|w| w.unwrap().to_string()).collect();
        align(&tree, &words).unwrap();
        println!("{}", tree.to_bracketed());
        println!("  pattern {}", tree.to_pattern().as_str());
        let scores = subtree_scores(&tree, ligas).unwrap();
        for s in &scores {
            let path = format_path(&s.path);
            println!(
                "  {:<8} {:<5} {:+.3}  {}",
                if path.is_empty() { "root" } else { &path },
                s.label,
                s.ligas,
                s.fragment
            );
        }
        groups.push(scores);
        trees.push((tree, ligas.iter().sum::<f64>()));
    }

    let mined: Vec<MinedSentence> = trees
        .iter()
        .map(|(tree, total)| MinedSentence {
            tree,
            category: Category::SVA,
            gold: Label::LA,
            sentence_ligas: *total,
        })
        .collect();
    for row in mine_patterns(&mined, Aggregate::Sum) {
        println!(
            "\n{} {} {} count={} ligas={:+.3}",
            row.pattern.as_str(),
            row.category,
            row.label,
            row.count,
            row.ligas
        );
    }
    let best = rank_subtrees(&groups, Aggregate::Sum).unwrap();
    println!(
        "best subtree {} at [{}] with {:+.3}",
        best.fragment,
        format_path(&best.path),
        best.ligas
    );

    match ParseTree::parse("(ROOT (S (NP (NN dog))") {
        Ok(_) => unreachable!(),
        Err(e) => println!("\nmalformed input: {e}"),
    }
}
