//! Scores topic word lists for coherence (NPMI, CV) and diversity (IRBO,
//! wI-M, wI-C), comparing the generator's true topics with the same words
//! shuffled into random groups.
//!
//! ```text
//! cargo run --release --example evaluate_topics
//! ```

use ginopic::corpus::{build_corpus, Document, PreprocessOptions, SplitRatios};
use ginopic::metrics::{evaluate_topics, regrouped_topics, MetricOptions, TopicSet};
use ginopic::synthetic::{generate, SyntheticConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let corpus = generate(&SyntheticConfig::five_topics_with_background(0));
    let (split, _) = build_corpus(
        &corpus.documents,
        Some(&corpus.labels),
        &PreprocessOptions::default(),
        SplitRatios::default(),
        0,
    )?;
    let embeddings = corpus.embedding_matrix(&split.vocabulary)?;
    let reference: Vec<Document> = split.all_documents().cloned().collect();

    let truth = TopicSet::new(corpus.topic_words.iter().map(|t| t[..10].to_vec()).collect())?;
    let shuffled = regrouped_topics(&truth, 0);
    let options = MetricOptions::default();
    for (name, topics) in [("generating topics", &truth), ("regrouped words", &shuffled)] {
        let r = evaluate_topics(topics, &reference, &split.vocabulary, Some(&embeddings), &options)?;
        println!(
            "{name:<18} NPMI {:>7.4}  CV {:.4}  IRBO {:.4}  wI-M {:.4}  wI-C {:.4}",
            r.npmi,
            r.cv,
            r.irbo.unwrap_or(f64::NAN),
            r.wi_m.unwrap_or(f64::NAN),
            r.wi_c.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
