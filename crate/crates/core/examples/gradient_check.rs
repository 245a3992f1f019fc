//! Compares the tape's reverse-mode gradients with central differences,
//! first for a small expression and then for the full training loss of a
//! tiny model in 64-bit precision.
//!
//! ```text
//! cargo run --release --example gradient_check
//! ```

use ginopic::corpus::{Document, Idf};
use ginopic::docgraph::{build_document_graph, DocumentGraph};
use ginopic::embedding::EmbeddingMatrix;
use ginopic::gin::GinConfig;
use ginopic::rng::{self, Stream};
use ginopic::tensor::gradcheck::{check_gradients, finite_difference_check};
use ginopic::tensor::{Mode, Tensor};
use ginopic::topicmodel::{Batch, GinopicModel, Noise, TrainConfig};
use rand::Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // log(sum(softmax(x W)^2)) for a fixed W
    let w = Tensor::from_f64(3, 2, &[0.3, -1.2, 0.8, 0.1, -0.5, 0.7])?;
    let x = Tensor::from_f64(2, 3, &[0.2, -0.4, 1.0, 0.9, 0.05, -0.3])?;
    let report = finite_difference_check(
        |tape, x| {
            let w = tape.constant(w.clone());
            let h = tape.matmul(x, w)?;
            let p = tape.softmax(h);
            let sq = tape.mul(p, p)?;
            let s = tape.sum(sq);
            Ok(tape.log_eps(s, 1e-12))
        },
        &x,
        1e-5,
    )?;
    println!("expression: max relative error {:.2e}", report.max_rel_error);

    // the whole model on four short documents
    let vocab = 10;
    let mut r = rng::stream(0, Stream::Synthetic, 0);
    let rows: Vec<Vec<f32>> = (0..vocab).map(|_| (0..5).map(|_| r.random_range(-1.0..1.0)).collect()).collect();
    let embeddings = EmbeddingMatrix::from_rows(&rows)?;
    let mut docs: Vec<Document> = (0..4)
        .map(|i| Document::from_tokens((0..8).map(|_| r.random_range(0..vocab as u32)).collect(), i))
        .collect();
    let idf = Idf::fit(&docs, vocab);
    docs.iter_mut().for_each(|d| idf.apply(d));
    let delta = 0.2;
    let graphs: Vec<DocumentGraph> = docs
        .iter()
        .map(|d| build_document_graph(d, &embeddings, delta))
        .collect::<Result<_, _>>()?;
    let config = TrainConfig {
        topics: 3,
        delta,
        gin: GinConfig {
            tau: 4,
            hidden: 4,
            layers: 2,
            mlp_hidden_layers: 1,
            tau_out: 3,
            epsilon: 0.0,
        },
        encoder_hidden: 5,
        encoder_layers: 1,
        alpha: None,
        learning_rate: 2e-3,
        batch_size: 4,
        epochs: 1,
        seed: 0,
        dropout: 0.0,
    };
    let model = GinopicModel::<f64>::new(&config, vocab, "example")?;
    let batch = Batch::<f64>::new(&docs.iter().collect::<Vec<_>>(), &graphs.iter().collect::<Vec<_>>(), vocab)?;
    let noise = Tensor::full(4, 3, 0.3);
    let inputs: Vec<Tensor<f64>> = model.params.iter().map(|(_, t)| t.clone()).collect();
    let report = check_gradients(
        |tape, vars| {
            let mut running = model.running.clone();
            let mut unused = rng::stream(0, Stream::Dropout, 0);
            let pass = model.forward(
                tape,
                vars,
                &mut running,
                &batch,
                Mode::Train,
                Noise::Given(&noise),
                &mut unused,
            )?;
            Ok(pass.loss)
        },
        &inputs,
        None,
        1e-4,
    )?;
    println!(
        "full loss: {} coordinates, max relative error {:.2e} ({})",
        report.coordinates_checked,
        report.max_rel_error,
        if report.passed() { "ok" } else { "check failed" }
    );
    Ok(())
}
