//! Cleans raw text into a vocabulary, bag-of-words documents and a
//! train/validation/test split, then saves the corpus cache the other steps
//! read.
//!
//! ```text
//! cargo run --release --example preprocess_corpus -- docs.txt [labels.txt] [out-dir]
//! ```
//!
//! Without arguments a generated three-topic corpus is used.

use std::path::PathBuf;

use ginopic::corpus::{build_corpus, read_lines, save_corpus, write_vocabulary, PreprocessOptions, SplitRatios};
use ginopic::synthetic::{generate, SyntheticConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let (raw, labels) = match args.first() {
        Some(docs) => {
            let raw = read_lines(docs.as_ref())?;
            let labels = args.get(1).map(|p| read_lines(p.as_ref())).transpose()?;
            (raw, labels)
        }
        None => {
            let c = generate(&SyntheticConfig::three_topics(0));
            (c.documents, Some(c.labels))
        }
    };
    let out = PathBuf::from(args.get(2).map_or("runs/example-preprocess", String::as_str));

    let options = PreprocessOptions::default();
    let (split, dropped) = build_corpus(&raw, labels.as_deref(), &options, SplitRatios::default(), 0)?;
    println!(
        "{} documents kept, {} dropped, {} words in the vocabulary",
        split.len(),
        dropped,
        split.vocabulary.len()
    );
    println!(
        "train {} / validation {} / test {}, {} label classes",
        split.train.len(),
        split.validation.len(),
        split.test.len(),
        split.k_gold()
    );
    if let Some(doc) = split.train.first() {
        let words: Vec<&str> = doc.token_ids.iter().take(12).map(|&id| split.vocabulary.word(id)).collect();
        println!("first training document: {} ...", words.join(" "));
    }

    std::fs::create_dir_all(&out)?;
    save_corpus(&split, &out.join("corpus.bin"))?;
    write_vocabulary(&split.vocabulary, &out.join("vocab.txt"))?;
    println!("corpus hash {} -> {}", split.content_hash(), out.display());
    Ok(())
}
