//! Turns documents into word-similarity graphs: one node per distinct word,
//! an edge wherever two words' embeddings have cosine similarity at or above
//! the threshold, weighted by that similarity.
//!
//! ```text
//! cargo run --release --example build_document_graphs -- [delta]
//! ```

use ginopic::corpus::{build_corpus, PreprocessOptions, SplitRatios};
use ginopic::docgraph::{build_all_graphs, graph_density_report};
use ginopic::synthetic::{generate, SyntheticConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let delta: f32 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(0.5);
    let corpus = generate(&SyntheticConfig::five_topics_with_background(0));
    let (split, _) = build_corpus(
        &corpus.documents,
        Some(&corpus.labels),
        &PreprocessOptions::default(),
        SplitRatios::default(),
        0,
    )?;
    let embeddings = corpus.embedding_matrix(&split.vocabulary)?;
    let (store, _) = build_all_graphs(&split, &embeddings, delta, None)?;

    let g = &store.train()[0];
    println!("first training graph: {} nodes, {} edges", g.node_count(), g.edge_count());
    for &(i, j, w) in g.edges.iter().take(5) {
        println!(
            "  {} -- {}  ({w:.3})",
            split.vocabulary.word(g.node_words[i as usize]),
            split.vocabulary.word(g.node_words[j as usize])
        );
    }
    let report = graph_density_report(&store.graphs)?;
    println!(
        "delta {delta}: {} graphs, mean {:.1} nodes, {:.1} edges, density {:.3}",
        report.documents, report.mean_nodes, report.mean_edges, report.mean_density
    );
    Ok(())
}
