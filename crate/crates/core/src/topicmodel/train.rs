use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};

use super::model::{Batch, GinopicModel, Noise};
use super::{Result, TopicModelError, TrainConfig};
use crate::corpus::{CorpusSplit, Document};
use crate::docgraph::{DocumentGraph, GraphStore};
use crate::rng::{self, Stream};
use crate::tensor::{Adam, AdamConfig, Mode, Tape, Tensor, TensorError};

/// Per-document means over one epoch.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub reconstruction: f64,
    pub kl: f64,
    pub total: f64,
    pub wall_seconds: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainedModel {
    pub model: GinopicModel<f32>,
    pub history: Vec<EpochRecord>,
}

pub fn train(split: &CorpusSplit, graphs: &GraphStore, config: &TrainConfig) -> Result<TrainedModel> {
    train_with_observer(split, graphs, config, |_| {})
}

/// Minibatch groups of a shuffled order; a trailing single document joins
/// the previous batch so batch norm never sees a batch of one.
fn minibatches(order: &[usize], size: usize) -> Vec<&[usize]> {
    let mut out: Vec<&[usize]> = order.chunks(size).collect();
    if out.len() > 1 && out.last().is_some_and(|b| b.len() == 1) {
        out.pop();
        let start = (out.len() - 1) * size;
        *out.last_mut().unwrap() = &order[start..];
    }
    out
}

/// Trains on the split's training documents, calling `observer` after each
/// epoch. Every random draw comes from streams keyed by `config.seed`, so a
/// repeated call returns an identical model.
pub fn train_with_observer(
    split: &CorpusSplit,
    graphs: &GraphStore,
    config: &TrainConfig,
    mut observer: impl FnMut(&EpochRecord),
) -> Result<TrainedModel> {
    config.validate()?;
    if split.train.is_empty() {
        return Err(TopicModelError::EmptyTraining);
    }
    if graphs.n_train != split.train.len() {
        return Err(TopicModelError::Inconsistent(format!(
            "{} training graphs for {} training documents",
            graphs.n_train,
            split.train.len()
        )));
    }
    if graphs.key.delta != config.delta {
        return Err(TopicModelError::Inconsistent(format!(
            "graphs were built with threshold {} but the model expects {}",
            graphs.key.delta, config.delta
        )));
    }
    let v = split.vocabulary.len();
    let mut model = GinopicModel::<f32>::new(config, v, split.vocabulary.content_hash())?;
    let adam_config = AdamConfig {
        lr: config.learning_rate,
        ..AdamConfig::default()
    };
    let mut adam = Adam::new(adam_config, &model.params)?;
    let train_graphs = graphs.train();
    let n = split.train.len();
    let k = config.topics;
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let started = Instant::now();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng::stream(config.seed, Stream::Shuffle, epoch as u64));
        let mut noise_rng = rng::stream(config.seed, Stream::Noise, epoch as u64);
        let mut dropout_rng = rng::stream(config.seed, Stream::Dropout, epoch as u64);
        let (mut rl_sum, mut kl_sum) = (0.0, 0.0);

        for (b, idx) in minibatches(&order, config.batch_size).into_iter().enumerate() {
            let diverged = |detail: String| TopicModelError::Divergence {
                epoch: epoch + 1,
                batch: b,
                detail,
            };
            let docs: Vec<&Document> = idx.iter().map(|&i| &split.train[i]).collect();
            let gs: Vec<&DocumentGraph> = idx.iter().map(|&i| &train_graphs[i]).collect();
            let batch = Batch::<f32>::new(&docs, &gs, v)?;
            let draws: Vec<f32> = (0..idx.len() * k)
                .map(|_| StandardNormal.sample(&mut noise_rng))
                .collect();
            let noise = Tensor::from_vec(idx.len(), k, draws)?;

            let mut tape = Tape::new();
            let bound = model.params.bind(&mut tape);
            let mut running = std::mem::take(&mut model.running);
            let fwd = model.forward(
                &mut tape,
                &bound,
                &mut running,
                &batch,
                Mode::Train,
                Noise::Given(&noise),
                &mut dropout_rng,
            );
            model.running = running;
            let fwd = fwd.map_err(|e| match e {
                TensorError::NonFinite { .. } | TensorError::NonFiniteActivation(_) => diverged(e.to_string()),
                other => other.into(),
            })?;
            let rl = tape.value(fwd.reconstruction).item() as f64;
            let kl = tape.value(fwd.kl).item() as f64;
            if !(rl.is_finite() && kl.is_finite()) {
                return Err(diverged(format!("loss is not finite (reconstruction {rl}, KL {kl})")));
            }
            // the closed form is nonnegative; allow for single-precision rounding
            if kl < -1e-3 * idx.len() as f64 {
                return Err(diverged(format!("negative KL divergence {kl}")));
            }
            rl_sum += rl;
            kl_sum += kl;
            let mut grads = tape.backward(fwd.loss).map_err(|e| diverged(e.to_string()))?;
            let grads = model.params.collect_grads(&bound, &mut grads);
            adam.step(&mut model.params, &grads)?;
        }

        let record = EpochRecord {
            epoch: epoch + 1,
            reconstruction: rl_sum / n as f64,
            kl: kl_sum / n as f64,
            total: (rl_sum + kl_sum) / n as f64,
            wall_seconds: started.elapsed().as_secs_f64(),
        };
        log::debug!(
            "epoch {} reconstruction {:.4} kl {:.4} total {:.4} ({:.2}s)",
            record.epoch,
            record.reconstruction,
            record.kl,
            record.total,
            record.wall_seconds
        );
        model.epochs_completed = epoch + 1;
        observer(&record);
        history.push(record);
    }
    Ok(TrainedModel { model, history })
}

/// Document-topic proportions `softmax(mu)` in eval mode.
pub fn infer_theta(
    model: &GinopicModel<f32>,
    documents: &[&Document],
    graphs: &[&DocumentGraph],
) -> Result<Vec<Vec<f64>>> {
    if let Some(g) = graphs.iter().find(|g| g.delta != model.config.delta) {
        return Err(TopicModelError::Inconsistent(format!(
            "graph built with threshold {} but the model expects {}",
            g.delta, model.config.delta
        )));
    }
    if documents.len() != graphs.len() {
        return Err(TopicModelError::Inconsistent(format!(
            "{} documents but {} graphs",
            documents.len(),
            graphs.len()
        )));
    }
    const CHUNK: usize = 256;
    let mut out = Vec::with_capacity(documents.len());
    for (docs, gs) in documents.chunks(CHUNK).zip(graphs.chunks(CHUNK)) {
        let batch = Batch::<f32>::new(docs, gs, model.vocab_size)?;
        let theta = model.theta(&batch)?;
        out.extend((0..theta.rows()).map(|r| theta.row(r).iter().map(|&p| p as f64).collect()));
    }
    Ok(out)
}

pub fn write_training_log(history: &[EpochRecord], path: &Path) -> Result<()> {
    let mut text = String::from("epoch\treconstruction\tkl\ttotal\twall_seconds\n");
    for r in history {
        writeln!(
            text,
            "{}\t{}\t{}\t{}\t{:.6}",
            r.epoch, r.reconstruction, r.kl, r.total, r.wall_seconds
        )
        .expect("writing to a String");
    }
    std::fs::write(path, text).map_err(|source| TopicModelError::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trailing_singleton_joins_previous_batch() {
        let order: Vec<usize> = (0..9).collect();
        let b = minibatches(&order, 4);
        assert_eq!(b.iter().map(|x| x.len()).collect::<Vec<_>>(), vec![4, 5]);
        let b = minibatches(&order, 3);
        assert_eq!(b.iter().map(|x| x.len()).collect::<Vec<_>>(), vec![3, 3, 3]);
        let b = minibatches(&order[..1], 4);
        assert_eq!(b.len(), 1);
    }
}
