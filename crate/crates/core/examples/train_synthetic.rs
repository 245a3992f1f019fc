//! Trains on a generated three-topic corpus and checks that the learned
//! topics line up with the word blocks the corpus was generated from.
//!
//! ```text
//! cargo run --release --example train_synthetic -- [seed]
//! ```

use ginopic::corpus::{build_corpus, PreprocessOptions, SplitRatios};
use ginopic::docgraph::build_all_graphs;
use ginopic::gin::GinConfig;
use ginopic::synthetic::{generate, greedy_block_purity, SyntheticConfig};
use ginopic::topicmodel::{top_words, train_with_observer, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed: u64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(0);
    let corpus = generate(&SyntheticConfig::three_topics(seed));
    let (split, _) = build_corpus(
        &corpus.documents,
        Some(&corpus.labels),
        &PreprocessOptions::default(),
        SplitRatios::default(),
        seed,
    )?;
    let embeddings = corpus.embedding_matrix(&split.vocabulary)?;
    let delta = 0.5;
    let (graphs, _) = build_all_graphs(&split, &embeddings, delta, None)?;

    let config = TrainConfig {
        topics: 3,
        delta,
        gin: GinConfig {
            tau: 32,
            hidden: 32,
            layers: 2,
            mlp_hidden_layers: 1,
            tau_out: 32,
            epsilon: 0.0,
        },
        encoder_hidden: 100,
        encoder_layers: 1,
        alpha: None,
        learning_rate: 2e-3,
        batch_size: 64,
        epochs: 50,
        seed,
        dropout: 0.2,
    };
    let trained = train_with_observer(&split, &graphs, &config, |r| {
        if r.epoch == 1 || r.epoch % 10 == 0 {
            println!("epoch {:>2}  loss {:.4}  ({:.2}s)", r.epoch, r.total, r.wall_seconds);
        }
    })?;
    let topics = top_words(trained.model.beta(), 10, &split.vocabulary)?;
    let purity = greedy_block_purity(&topics, &corpus.topic_words);
    for (k, words) in topics.iter().enumerate() {
        println!("topic {k} (purity {:.2}): {}", purity[k], words.join(" "));
    }
    println!("mean purity {:.3}", purity.iter().sum::<f64>() / purity.len() as f64);
    Ok(())
}
