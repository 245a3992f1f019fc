use rand::Rng;

use super::prior::{laplace_prior, PriorParams};
use super::{Result, TopicModelError, TrainConfig};
use crate::corpus::{Document, Vocabulary};
use crate::docgraph::DocumentGraph;
use crate::gin::{GinStack, GraphBatch, GraphEncoder};
use crate::rng::{self, Stream};
use crate::tensor::{
    self, BatchNorm1d, Linear, Mode, ParamId, Params, RunningStats, Scalar, Tape, Tensor, TensorError, Var,
};

/// Added to `x_hat` inside the reconstruction log.
pub const RECONSTRUCTION_FLOOR: f64 = 1e-10;

/// How the latent sample is drawn.
#[derive(Clone, Copy, Debug)]
pub enum Noise<'a, F> {
    /// `z = mu`.
    Mean,
    /// `z = mu + exp(log_var / 2) * noise` with a `batch x K` standard normal draw.
    Given(&'a Tensor<F>),
}

/// Featurized minibatch: the block-diagonal graph and dense TF-IDF rows.
#[derive(Clone, Debug)]
pub struct Batch<F> {
    pub graphs: GraphBatch<F>,
    pub tfidf: Tensor<F>,
}

impl<F: Scalar> Batch<F> {
    pub fn new(documents: &[&Document], graphs: &[&DocumentGraph], vocab_size: usize) -> Result<Self> {
        if documents.len() != graphs.len() {
            return Err(TopicModelError::Inconsistent(format!(
                "{} documents but {} graphs",
                documents.len(),
                graphs.len()
            )));
        }
        if documents.is_empty() {
            return Err(TopicModelError::Inconsistent("empty batch".into()));
        }
        let out_of_range = documents
            .iter()
            .flat_map(|d| d.counts.iter().map(|&(w, _)| w))
            .chain(graphs.iter().flat_map(|g| g.node_words.iter().copied()))
            .find(|&w| w as usize >= vocab_size);
        if let Some(w) = out_of_range {
            return Err(TopicModelError::VocabularyMismatch(format!(
                "word id {w} outside a vocabulary of {vocab_size}"
            )));
        }
        let mut tfidf = Vec::with_capacity(documents.len() * vocab_size);
        for d in documents {
            tfidf.extend(d.tfidf_dense(vocab_size).into_iter().map(F::from_f64));
        }
        Ok(Batch {
            graphs: GraphBatch::new(graphs)?,
            tfidf: Tensor::from_vec(documents.len(), vocab_size, tfidf)?,
        })
    }

    pub fn len(&self) -> usize {
        self.tfidf.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.tfidf.rows() == 0
    }
}

/// Tape handles produced by one forward pass.
#[derive(Clone, Copy, Debug)]
pub struct ForwardPass {
    /// Batch mean of reconstruction plus KL.
    pub loss: Var,
    /// Reconstruction loss summed over the batch.
    pub reconstruction: Var,
    /// KL term summed over the batch.
    pub kl: Var,
    pub graph_embedding: Var,
    pub mu: Var,
    pub log_var: Var,
    pub theta: Var,
    pub x_hat: Var,
}

/// `[h_G W^T, x_tfidf]` with `W` stored `V x tau'`.
pub fn combine_inputs<F: Scalar>(tape: &mut Tape<F>, h_g: Var, x_tfidf: Var, w: Var) -> tensor::Result<Var> {
    let projected = tape.matmul_nt(h_g, w)?;
    tape.concat_cols(projected, x_tfidf)
}

/// `mu + exp(log_var / 2) * noise`.
pub fn reparameterize<F: Scalar>(tape: &mut Tape<F>, mu: Var, log_var: Var, noise: &Tensor<F>) -> tensor::Result<Var> {
    let half = tape.scale(log_var, F::from_f64(0.5));
    let std = tape.exp(half);
    let eps = tape.constant(noise.clone());
    let spread = tape.mul(std, eps)?;
    tape.add(mu, spread)
}

/// `softmax(BN(theta beta))`.
pub fn decode<F: Scalar>(
    tape: &mut Tape<F>,
    bound: &[Var],
    running: &mut [RunningStats<F>],
    theta: Var,
    beta: Var,
    norm: &BatchNorm1d,
    mode: Mode,
) -> tensor::Result<Var> {
    let logits = tape.matmul(theta, beta)?;
    let normalized = norm.forward(tape, bound, running, logits, mode)?;
    Ok(tape.softmax(normalized))
}

/// Batch sums of the reconstruction loss `-sum x ln(x_hat + floor)` and of
/// the KL divergence from the encoder posterior to the prior.
pub fn elbo_terms<F: Scalar>(
    tape: &mut Tape<F>,
    x_tfidf: Var,
    x_hat: Var,
    mu: Var,
    log_var: Var,
    prior: &PriorParams,
) -> tensor::Result<(Var, Var)> {
    let log_hat = tape.log_eps(x_hat, F::from_f64(RECONSTRUCTION_FLOOR));
    let weighted = tape.mul(x_tfidf, log_hat)?;
    let total = tape.sum(weighted);
    let reconstruction = tape.scale(total, -F::one());

    let [b, k] = tape.value(mu).shape();
    if k != prior.topics() {
        return Err(TensorError::Shape {
            op: "elbo_terms",
            lhs: [b, k],
            rhs: [1, prior.topics()],
        });
    }
    let inv_sigma: Vec<F> = (0..b)
        .flat_map(|_| prior.sigma1_diag.iter().map(|s| F::from_f64(1.0 / s)))
        .collect();
    let inv_sigma = tape.constant(Tensor::from_vec(b, k, inv_sigma)?);
    let neg_mu1 = tape.constant(Tensor::row_vector(prior.mu1.iter().map(|m| F::from_f64(-m)).collect()));

    let var0 = tape.exp(log_var);
    let trace = tape.mul(var0, inv_sigma)?;
    let diff = tape.add_row(mu, neg_mu1)?;
    let sq = tape.mul(diff, diff)?;
    let mahalanobis = tape.mul(sq, inv_sigma)?;
    let inner = tape.add(trace, mahalanobis)?;
    let inner = tape.sub(inner, log_var)?;
    let inner = tape.sum(inner);
    let offset = b as f64 * prior.sigma1_diag.iter().map(|s| s.ln() - 1.0).sum::<f64>();
    let offset = tape.constant(Tensor::scalar(F::from_f64(offset)));
    let kl = tape.add(inner, offset)?;
    let kl = tape.scale(kl, F::from_f64(0.5));
    Ok((reconstruction, kl))
}

#[derive(Clone, Debug, PartialEq)]
pub struct GinopicModel<F> {
    pub config: TrainConfig,
    pub vocab_size: usize,
    pub vocab_hash: String,
    pub params: Params<F>,
    pub running: Vec<RunningStats<F>>,
    pub gin: GinStack,
    /// `V x tau'` projection of the graph embedding.
    pub projection: ParamId,
    pub encoder: Vec<Linear>,
    pub mu_head: Linear,
    pub mu_norm: BatchNorm1d,
    pub log_var_head: Linear,
    pub log_var_norm: BatchNorm1d,
    /// `K x V` topic-word weights.
    pub beta: ParamId,
    pub decoder_norm: BatchNorm1d,
    pub prior: PriorParams,
    /// Training epochs applied so far; the next epoch draws from the random
    /// streams at this index.
    pub epochs_completed: usize,
}

impl<F: Scalar> GinopicModel<F> {
    /// A freshly initialized model; initialization draws only from the seed.
    pub fn new(config: &TrainConfig, vocab_size: usize, vocab_hash: impl Into<String>) -> Result<Self> {
        config.validate()?;
        if vocab_size == 0 {
            return Err(TopicModelError::Config("empty vocabulary".into()));
        }
        let prior = laplace_prior(&config.alpha_vector())?;
        let mut rng = rng::stream(config.seed, Stream::Init, 0);
        let mut params = Params::new();
        let mut running = Vec::new();
        let gin = GinStack::new(config.gin.clone(), vocab_size, &mut params, &mut running, &mut rng)?;
        let tau_out = config.gin.tau_out;
        let projection = params.add(
            "projection.weight",
            Params::uniform(vocab_size, tau_out, 1.0 / (tau_out as f64).sqrt(), &mut rng),
        );
        let h = config.encoder_hidden;
        let mut encoder = Vec::with_capacity(config.encoder_layers);
        for l in 0..config.encoder_layers {
            let input = if l == 0 { 2 * vocab_size } else { h };
            encoder.push(Linear::new(&mut params, &format!("encoder.layer{l}"), input, h, true, &mut rng));
        }
        let k = config.topics;
        let mu_head = Linear::new(&mut params, "encoder.mu", h, k, true, &mut rng);
        let mu_norm = BatchNorm1d::new(&mut params, &mut running, "encoder.mu_bn", k);
        let log_var_head = Linear::new(&mut params, "encoder.log_var", h, k, true, &mut rng);
        let log_var_norm = BatchNorm1d::new(&mut params, &mut running, "encoder.log_var_bn", k);
        let beta = params.add("decoder.beta", Params::normal(k, vocab_size, 0.02, &mut rng));
        let decoder_norm = BatchNorm1d::new(&mut params, &mut running, "decoder.bn", vocab_size);
        Ok(GinopicModel {
            config: config.clone(),
            vocab_size,
            vocab_hash: vocab_hash.into(),
            params,
            running,
            gin,
            projection,
            encoder,
            mu_head,
            mu_norm,
            log_var_head,
            log_var_norm,
            beta,
            decoder_norm,
            prior,
            epochs_completed: 0,
        })
    }

    pub fn topics(&self) -> usize {
        self.config.topics
    }

    pub fn beta(&self) -> &Tensor<F> {
        self.params.get(self.beta)
    }

    pub fn check_vocabulary(&self, vocabulary: &Vocabulary) -> Result<()> {
        if vocabulary.len() != self.vocab_size {
            return Err(TopicModelError::VocabularyMismatch(format!(
                "model has {} words, vocabulary has {}",
                self.vocab_size,
                vocabulary.len()
            )));
        }
        let hash = vocabulary.content_hash();
        if hash != self.vocab_hash {
            return Err(TopicModelError::VocabularyMismatch(format!(
                "model was trained on vocabulary {}, got {hash}",
                self.vocab_hash
            )));
        }
        Ok(())
    }

    /// Encoder MLP and both heads; returns `(mu, log_var)`.
    pub fn encode<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape<F>,
        bound: &[Var],
        running: &mut [RunningStats<F>],
        x: Var,
        mode: Mode,
        dropout_rng: &mut R,
    ) -> tensor::Result<(Var, Var)> {
        let mut h = x;
        for (l, lin) in self.encoder.iter().enumerate() {
            let pre = lin.forward(tape, bound, h)?;
            h = tape.softplus(pre);
            if !tape.value(h).is_finite() {
                return Err(TensorError::NonFiniteActivation(format!("encoder layer {l}")));
            }
        }
        h = tape.dropout(h, self.config.dropout, mode, dropout_rng)?;
        let mu = self.mu_head.forward(tape, bound, h)?;
        let mu = self.mu_norm.forward(tape, bound, running, mu, mode)?;
        let log_var = self.log_var_head.forward(tape, bound, h)?;
        let log_var = self.log_var_norm.forward(tape, bound, running, log_var, mode)?;
        for (v, what) in [(mu, "mean head"), (log_var, "log-variance head")] {
            if !tape.value(v).is_finite() {
                return Err(TensorError::NonFiniteActivation(what.into()));
            }
        }
        Ok((mu, log_var))
    }

    /// The whole pipeline from graphs and TF-IDF rows to the loss.
    #[allow(clippy::too_many_arguments)]
    pub fn forward<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape<F>,
        bound: &[Var],
        running: &mut [RunningStats<F>],
        batch: &Batch<F>,
        mode: Mode,
        noise: Noise<'_, F>,
        dropout_rng: &mut R,
    ) -> tensor::Result<ForwardPass> {
        let encoded = self.gin.encode(tape, bound, running, &batch.graphs, mode)?;
        let x_tfidf = tape.constant(batch.tfidf.clone());
        let x = combine_inputs(tape, encoded.readout, x_tfidf, bound[self.projection.index()])?;
        let (mu, log_var) = self.encode(tape, bound, running, x, mode, dropout_rng)?;
        let z = match noise {
            Noise::Mean => mu,
            Noise::Given(eps) => reparameterize(tape, mu, log_var, eps)?,
        };
        let theta = tape.softmax(z);
        let x_hat = decode(tape, bound, running, theta, bound[self.beta.index()], &self.decoder_norm, mode)?;
        let (reconstruction, kl) = elbo_terms(tape, x_tfidf, x_hat, mu, log_var, &self.prior)?;
        let total = tape.add(reconstruction, kl)?;
        let loss = tape.scale(total, F::from_f64(1.0 / batch.len() as f64));
        Ok(ForwardPass {
            loss,
            reconstruction,
            kl,
            graph_embedding: encoded.readout,
            mu,
            log_var,
            theta,
            x_hat,
        })
    }

    /// `softmax(mu)` in eval mode for each document, without touching the
    /// model's running statistics.
    pub fn theta(&self, batch: &Batch<F>) -> tensor::Result<Tensor<F>> {
        let mut tape = Tape::new();
        let bound = self.params.bind_frozen(&mut tape);
        let mut running = self.running.clone();
        let encoded = self.gin.encode(&mut tape, &bound, &mut running, &batch.graphs, Mode::Eval)?;
        let x_tfidf = tape.constant(batch.tfidf.clone());
        let x = combine_inputs(&mut tape, encoded.readout, x_tfidf, bound[self.projection.index()])?;
        // eval-mode dropout never draws
        let mut unused = rng::stream(0, Stream::Dropout, 0);
        let (mu, _) = self.encode(&mut tape, &bound, &mut running, x, Mode::Eval, &mut unused)?;
        let theta = tape.softmax(mu);
        Ok(tape.value(theta).clone())
    }
}

/// Indices of the `n` largest weights of every row of `beta`, descending,
/// ties broken by lower word id.
pub fn top_word_ids<F: Scalar>(beta: &Tensor<F>, n: usize) -> Result<Vec<Vec<u32>>> {
    if n > beta.cols() {
        return Err(TopicModelError::Config(format!(
            "asked for {n} top words from a vocabulary of {}",
            beta.cols()
        )));
    }
    Ok((0..beta.rows())
        .map(|k| {
            let row = beta.row(k);
            let mut ids: Vec<u32> = (0..row.len() as u32).collect();
            ids.sort_by(|&a, &b| {
                row[b as usize]
                    .partial_cmp(&row[a as usize])
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then(a.cmp(&b))
            });
            ids.truncate(n);
            ids
        })
        .collect())
}

pub fn top_words<F: Scalar>(beta: &Tensor<F>, n: usize, vocabulary: &Vocabulary) -> Result<Vec<Vec<String>>> {
    if beta.cols() != vocabulary.len() {
        return Err(TopicModelError::VocabularyMismatch(format!(
            "topic-word matrix has {} columns, vocabulary has {} words",
            beta.cols(),
            vocabulary.len()
        )));
    }
    Ok(top_word_ids(beta, n)?
        .into_iter()
        .map(|ids| ids.into_iter().map(|w| vocabulary.word(w).to_string()).collect())
        .collect())
}
