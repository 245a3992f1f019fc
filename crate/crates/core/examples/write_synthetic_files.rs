//! Writes a generated corpus as the plain files the command-line tool reads:
//! `docs.txt` (one document per line), `labels.txt` and `embeddings.txt`.
//!
//! ```text
//! cargo run --release --example write_synthetic_files -- data/synthetic [seed] [five]
//! ```
//!
//! Pass `five` for the larger five-topic corpus with background words.

use std::path::PathBuf;

use ginopic::synthetic::{generate, SyntheticConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "data/synthetic".into()));
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(0);
    let config = match args.next().as_deref() {
        Some("five") => SyntheticConfig::five_topics_with_background(seed),
        _ => SyntheticConfig::three_topics(seed),
    };
    let corpus = generate(&config);
    std::fs::create_dir_all(&dir)?;
    std::fs::write(dir.join("docs.txt"), corpus.documents.join("\n") + "\n")?;
    std::fs::write(dir.join("labels.txt"), corpus.labels.join("\n") + "\n")?;
    std::fs::write(dir.join("embeddings.txt"), corpus.embeddings_text())?;
    println!(
        "{} documents, {} topics, {} words -> {}",
        corpus.documents.len(),
        config.topics,
        config.vocabulary_size(),
        dir.display()
    );
    for (k, words) in corpus.topic_words.iter().enumerate() {
        println!("topic {k}: {}", words[..words.len().min(8)].join(" "));
    }
    Ok(())
}
