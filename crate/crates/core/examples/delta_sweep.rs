//! Rebuilds graphs at several similarity thresholds and trains briefly on
//! each, printing edge counts next to construction and training time.
//!
//! ```text
//! cargo run --release --example delta_sweep -- [epochs]
//! ```

use std::time::Instant;

use ginopic::corpus::{build_corpus, PreprocessOptions, SplitRatios};
use ginopic::docgraph::{build_all_graphs, graph_density_report};
use ginopic::embedding::EmbeddingMatrix;
use ginopic::rng::{self, Stream};
use ginopic::synthetic::{generate, SyntheticConfig};
use ginopic::topicmodel::{preset, train, TrainConfig};
use rand_distr::{Distribution, StandardNormal};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let epochs: usize = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(5);
    let corpus = generate(&SyntheticConfig::five_topics_with_background(0));
    let (split, _) = build_corpus(
        &corpus.documents,
        Some(&corpus.labels),
        &PreprocessOptions::default(),
        SplitRatios::default(),
        0,
    )?;
    // blur the generator's vectors so similarities spread over [0, 1]
    let clean = corpus.embedding_matrix(&split.vocabulary)?;
    let mut noise = rng::stream(0, Stream::Embedding, 0);
    let rows: Vec<Vec<f32>> = (0..clean.len() as u32)
        .map(|w| {
            clean
                .row(w)
                .iter()
                .map(|&x| {
                    let z: f64 = StandardNormal.sample(&mut noise);
                    x + 0.05 * z as f32
                })
                .collect()
        })
        .collect();
    let embeddings = EmbeddingMatrix::from_rows(&rows)?;

    println!("delta\tmean_edges\tdensity\tgraph_seconds\ttrain_seconds");
    for delta in [0.0f32, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6] {
        let start = Instant::now();
        let (graphs, _) = build_all_graphs(&split, &embeddings, delta, None)?;
        let graph_seconds = start.elapsed().as_secs_f64();
        let report = graph_density_report(&graphs.graphs)?;
        let mut config = TrainConfig::from_preset(&preset("bbc").expect("known preset"), split.k_gold(), 0);
        config.delta = delta;
        config.epochs = epochs;
        let start = Instant::now();
        train(&split, &graphs, &config)?;
        println!(
            "{delta}\t{:.1}\t{:.4}\t{graph_seconds:.3}\t{:.2}",
            report.mean_edges,
            report.mean_density,
            start.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
