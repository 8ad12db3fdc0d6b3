//! Greedy longest-match subword tokenization and how word spans map pieces
//! back to words.
//!
//! cargo run --example tokenize_oov

use ligas::tokenizer::Vocabulary;

fn main() {
    let corpus = [
        "the dog barks loudly .",
        "the dogs bark quietly .",
        "john saw the cat .",
        "what did mary see ?",
    ];
    let vocab = Vocabulary::build(&corpus, 64).unwrap();
    println!("{} tokens: {}", vocab.len(), vocab.tokens().join(" "));

    for text in ["the dog barks .", "the dogmatist barked loudly !", "Mary saw qzx ."] {
        let t = vocab.tokenize(text);
        println!("\n{text}");
        for (word, span) in t.words.iter().zip(&t.spans) {
            let pieces: Vec<&str> = t.token_ids[span.clone()]
                .iter()
                .map(|&id| vocab.token(id).unwrap())
                .collect();
            println!("  {word:<12} tokens {span:?} -> {}", pieces.join(" "));
        }
        let multi: Vec<&str> = t.multi_piece_words().map(|w| t.words[w].as_str()).collect();
        println!("  multi-piece words: {multi:?}");
        println!("  round trip: {}", vocab.detokenize(&t.token_ids));
    }
}
