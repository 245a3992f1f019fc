//! Graph-informed neural topic model.
//!
//! Each document enters the encoder twice: as its TF-IDF vector and as the
//! GIN readout of its word graph projected to vocabulary width. The encoder
//! produces a diagonal Gaussian over logits, a sample passes through softmax
//! to give the topic mixture `theta`, and the decoder reconstructs the TF-IDF
//! vector from `softmax(BN(theta beta))`. The prior is a Gaussian
//! approximation of a Dirichlet in the softmax basis.

mod checkpoint;
mod model;
mod prior;
mod train;

use std::path::PathBuf;

use thiserror::Error;

use crate::binio::FormatError;
use crate::docgraph::{validate_delta, GraphError};
use crate::gin::GinConfig;
use crate::tensor::TensorError;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, load_checkpoint_for, save_checkpoint, CHECKPOINT_MAGIC,
};
pub use model::{
    combine_inputs, decode, elbo_terms, reparameterize, top_word_ids, top_words, Batch, ForwardPass, GinopicModel,
    Noise, RECONSTRUCTION_FLOOR,
};
pub use prior::{kl_divergence, laplace_prior, PriorParams};
pub use train::{infer_theta, train, train_with_observer, write_training_log, EpochRecord, TrainedModel};

#[derive(Debug, Error)]
pub enum TopicModelError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("training diverged at epoch {epoch}, batch {batch}: {detail}")]
    Divergence { epoch: usize, batch: usize, detail: String },
    #[error("training split is empty")]
    EmptyTraining,
    #[error("vocabulary mismatch: {0}")]
    VocabularyMismatch(String),
    #[error("inputs disagree: {0}")]
    Inconsistent(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Format {
        path: PathBuf,
        #[source]
        source: FormatError,
    },
}

pub type Result<T> = std::result::Result<T, TopicModelError>;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    /// Topic count `K`.
    pub topics: usize,
    /// Edge threshold the graphs were built with.
    pub delta: f32,
    pub gin: GinConfig,
    /// Encoder width `H'`.
    pub encoder_hidden: usize,
    /// Encoder depth `L'`.
    pub encoder_layers: usize,
    /// Dirichlet parameters; `None` means `1/K` for every topic.
    pub alpha: Option<Vec<f64>>,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub dropout: f64,
}

impl TrainConfig {
    /// Defaults shared by every preset, with the graph settings of `preset`.
    pub fn from_preset(preset: &Preset, topics: usize, seed: u64) -> Self {
        TrainConfig {
            topics,
            delta: preset.delta,
            gin: preset.gin.clone(),
            encoder_hidden: 100,
            encoder_layers: 1,
            alpha: None,
            learning_rate: 2e-3,
            batch_size: 64,
            epochs: 50,
            seed,
            dropout: 0.2,
        }
    }

    pub fn alpha_vector(&self) -> Vec<f64> {
        match &self.alpha {
            Some(a) => a.clone(),
            None => vec![1.0 / self.topics as f64; self.topics],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(TopicModelError::Config(m));
        if self.topics < 2 {
            return fail(format!("topic count must be at least 2, got {}", self.topics));
        }
        if self.epochs == 0 {
            return fail("epochs must be at least 1".into());
        }
        if self.batch_size == 0 {
            return fail("batch size must be at least 1".into());
        }
        if self.encoder_hidden == 0 || self.encoder_layers == 0 {
            return fail("encoder width and depth must be at least 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail(format!("learning rate must be positive, got {}", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail(format!("dropout must lie in [0, 1), got {}", self.dropout));
        }
        if let Some(a) = &self.alpha {
            if a.len() != self.topics {
                return fail(format!("{} Dirichlet parameters for {} topics", a.len(), self.topics));
            }
        }
        validate_delta(self.delta)?;
        self.gin.validate()?;
        Ok(())
    }
}

/// Graph construction and GIN settings tuned per dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct Preset {
    pub name: &'static str,
    pub delta: f32,
    pub gin: GinConfig,
    /// Number of gold labels in the dataset the preset was tuned on.
    pub k_gold: usize,
}

fn preset_row(
    name: &'static str,
    delta: f32,
    tau: usize,
    layers: usize,
    hidden: usize,
    tau_out: usize,
    k_gold: usize,
) -> Preset {
    Preset {
        name,
        delta,
        gin: GinConfig {
            tau,
            hidden,
            layers,
            mlp_hidden_layers: 1,
            tau_out,
            epsilon: 0.0,
        },
        k_gold,
    }
}

pub fn presets() -> Vec<Preset> {
    vec![
        preset_row("20ng", 0.4, 2048, 2, 200, 768, 20),
        preset_row("bbc", 0.3, 256, 3, 50, 512, 5),
        preset_row("searchsnippets", 0.2, 1024, 2, 50, 256, 8),
        preset_row("biomedical", 0.05, 1024, 2, 200, 256, 20),
        preset_row("stackoverflow", 0.1, 64, 2, 300, 512, 20),
    ]
}

/// Looks up a preset by name or short alias (`ss`, `bio`, `so`).
pub fn preset(name: &str) -> Option<Preset> {
    let canonical = match name.to_ascii_lowercase().as_str() {
        "20ng" | "20newsgroups" => "20ng",
        "bbc" => "bbc",
        "ss" | "searchsnippets" => "searchsnippets",
        "bio" | "biomedical" => "biomedical",
        "so" | "stackoverflow" => "stackoverflow",
        _ => return None,
    };
    presets().into_iter().find(|p| p.name == canonical)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_carry_tuned_graph_settings() {
        let bbc = preset("bbc").unwrap();
        assert_eq!(bbc.delta, 0.3);
        assert_eq!((bbc.gin.tau, bbc.gin.layers, bbc.gin.hidden, bbc.gin.tau_out), (256, 3, 50, 512));
        assert_eq!(bbc.k_gold, 5);
        let so = preset("SO").unwrap();
        assert_eq!((so.delta, so.gin.tau, so.gin.hidden, so.gin.tau_out), (0.1, 64, 300, 512));
        assert_eq!(preset("bio").unwrap().delta, 0.05);
        assert_eq!(preset("ss").unwrap().gin.tau, 1024);
        assert_eq!(preset("20ng").unwrap().gin.tau, 2048);
        assert!(preset("imdb").is_none());
        assert!(presets().iter().all(|p| p.gin.mlp_hidden_layers == 1));
    }

    #[test]
    fn config_validation() {
        let base = TrainConfig::from_preset(&preset("bbc").unwrap(), 5, 0);
        assert!(base.validate().is_ok());
        assert_eq!(base.alpha_vector(), vec![0.2; 5]);
        for bad in [
            TrainConfig { epochs: 0, ..base.clone() },
            TrainConfig { topics: 1, ..base.clone() },
            TrainConfig { batch_size: 0, ..base.clone() },
            TrainConfig { learning_rate: 0.0, ..base.clone() },
            TrainConfig { dropout: 1.0, ..base.clone() },
            TrainConfig { alpha: Some(vec![1.0; 4]), ..base.clone() },
            TrainConfig { delta: -0.1, ..base.clone() },
        ] {
            assert!(matches!(bad.validate(), Err(TopicModelError::Config(_)) | Err(TopicModelError::Graph(_))));
        }
    }
}
