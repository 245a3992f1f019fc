//! Uses inferred document-topic proportions as features for a linear
//! classifier and reports held-out accuracy.
//!
//! ```text
//! cargo run --release --example classify_documents -- [seed]
//! ```

use ginopic::corpus::{build_corpus, Document, PreprocessOptions, SplitRatios};
use ginopic::docgraph::{build_all_graphs, DocumentGraph};
use ginopic::downstream::{evaluate_accuracy, train_classifier, ClassifierConfig};
use ginopic::synthetic::{generate, SyntheticConfig};
use ginopic::topicmodel::{infer_theta, preset, train, GinopicModel, TrainConfig};

fn theta(
    model: &GinopicModel<f32>,
    docs: &[Document],
    graphs: &[DocumentGraph],
) -> Result<Vec<Vec<f64>>, Box<dyn std::error::Error>> {
    let d: Vec<&Document> = docs.iter().collect();
    let g: Vec<&DocumentGraph> = graphs.iter().collect();
    Ok(infer_theta(model, &d, &g)?)
}

fn labels(docs: &[Document]) -> Vec<u32> {
    docs.iter().map(|d| d.label.expect("labeled corpus")).collect()
}

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
    let mut config = TrainConfig::from_preset(&preset("bbc").expect("known preset"), split.k_gold(), seed);
    config.delta = 0.5;
    config.gin.tau = 32;
    config.gin.hidden = 32;
    config.gin.layers = 2;
    config.gin.tau_out = 32;
    let (graphs, _) = build_all_graphs(&split, &embeddings, config.delta, None)?;
    let model = train(&split, &graphs, &config)?.model;

    let train_x = theta(&model, &split.train, graphs.train())?;
    let test_x = theta(&model, &split.test, graphs.test())?;
    let clf = train_classifier(&train_x, &labels(&split.train), split.k_gold(), &ClassifierConfig::default())?;
    println!(
        "train accuracy {:.3}, test accuracy {:.3} over {} classes",
        evaluate_accuracy(&clf, &train_x, &labels(&split.train))?,
        evaluate_accuracy(&clf, &test_x, &labels(&split.test))?,
        split.k_gold()
    );
    Ok(())
}
