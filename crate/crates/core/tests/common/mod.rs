#![allow(dead_code)]

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use ginopic::corpus::{build_corpus, CorpusSplit, Document, Idf, PreprocessOptions, SplitRatios};
use ginopic::docgraph::{build_all_graphs, build_document_graph, graph_from_nodes, DocumentGraph, GraphStore};
use ginopic::downstream::{evaluate_accuracy, train_classifier, ClassifierConfig};
use ginopic::embedding::{cosine_similarity, EmbeddingMatrix};
use ginopic::gin::{gin_stack_forward, GinConfig, GinStack};
use ginopic::rng::{self, Stream};
use ginopic::synthetic::{generate, greedy_block_assignment, greedy_block_purity, SyntheticConfig, SyntheticCorpus};
use ginopic::tensor::gradcheck::{check_gradients, FD_STEP};
use ginopic::tensor::{GradCheckReport, Mode, Params, RunningStats, SparseMatrix, Tape, Tensor, Var};
use ginopic::topicmodel::{infer_theta, top_words, train, Batch, GinopicModel, Noise, TrainConfig, TrainedModel};

pub type OpFn = Box<dyn FnMut(&mut Tape<f64>, &[Var]) -> ginopic::tensor::Result<Var>>;

pub fn random_tensor<R: Rng>(rows: usize, cols: usize, lo: f64, hi: f64, rng: &mut R) -> Tensor<f64> {
    let data = (0..rows * cols).map(|_| rng.random_range(lo..hi)).collect();
    Tensor::from_vec(rows, cols, data).unwrap()
}

/// Values with magnitude in `[lo, hi]` and random sign, away from a kink at 0.
fn signed_away_from_zero<R: Rng>(rows: usize, cols: usize, lo: f64, hi: f64, rng: &mut R) -> Tensor<f64> {
    let data = (0..rows * cols)
        .map(|_| {
            let m = rng.random_range(lo..hi);
            if rng.random_bool(0.5) {
                m
            } else {
                -m
            }
        })
        .collect();
    Tensor::from_vec(rows, cols, data).unwrap()
}

/// `sum(out * R)` for a weight matrix `R` fixed by `seed`, so every output
/// coordinate contributes with a different weight.
pub fn weighted_sum(tape: &mut Tape<f64>, out: Var, seed: u64) -> ginopic::tensor::Result<Var> {
    let [r, c] = tape.value(out).shape();
    let mut rng = rng::stream(seed, Stream::Noise, 7);
    let weights = tape.constant(random_tensor(r, c, -1.0, 1.0, &mut rng));
    let m = tape.mul(out, weights)?;
    Ok(tape.sum(m))
}

pub const OPS: &[&str] = &[
    "matmul",
    "matmul_nt",
    "add",
    "sub",
    "mul",
    "scale",
    "add_row",
    "concat_cols",
    "concat_rows",
    "sum",
    "sum_rows",
    "segment_sum_rows",
    "relu",
    "softplus",
    "exp",
    "log_eps",
    "softmax",
    "log_softmax",
    "batchnorm_train",
    "batchnorm_eval",
    "dropout",
    "gather_rows",
    "sparse_matmul",
];

/// Inputs and a closure for one randomized trial of `op`.
pub fn op_case(op: &str, trial: u64) -> (Vec<Tensor<f64>>, OpFn) {
    let mut rng = rng::stream(trial, Stream::Synthetic, op.len() as u64 * 1000 + trial);
    let r = rng.random_range(1..6);
    let c = rng.random_range(1..6);
    let k = rng.random_range(1..6);
    let seed = trial;
    let unary = |f: fn(&mut Tape<f64>, Var) -> Var| -> OpFn {
        Box::new(move |t, v| {
            let o = f(t, v[0]);
            weighted_sum(t, o, seed)
        })
    };
    let binary = |f: fn(&mut Tape<f64>, Var, Var) -> ginopic::tensor::Result<Var>| -> OpFn {
        Box::new(move |t, v| {
            let o = f(t, v[0], v[1])?;
            weighted_sum(t, o, seed)
        })
    };
    let u = |rows, cols, rng: &mut _| random_tensor(rows, cols, -1.5, 1.5, rng);
    match op {
        "matmul" => (vec![u(r, k, &mut rng), u(k, c, &mut rng)], binary(Tape::matmul)),
        "matmul_nt" => (vec![u(r, k, &mut rng), u(c, k, &mut rng)], binary(Tape::matmul_nt)),
        "add" => (vec![u(r, c, &mut rng), u(r, c, &mut rng)], binary(Tape::add)),
        "sub" => (vec![u(r, c, &mut rng), u(r, c, &mut rng)], binary(Tape::sub)),
        "mul" => (vec![u(r, c, &mut rng), u(r, c, &mut rng)], binary(Tape::mul)),
        "add_row" => (vec![u(r, c, &mut rng), u(1, c, &mut rng)], binary(Tape::add_row)),
        "concat_cols" => (vec![u(r, c, &mut rng), u(r, k, &mut rng)], binary(Tape::concat_cols)),
        "concat_rows" => (vec![u(r, c, &mut rng), u(k, c, &mut rng)], binary(Tape::concat_rows)),
        "scale" => {
            let factor = rng.random_range(-3.0..3.0);
            (
                vec![u(r, c, &mut rng)],
                Box::new(move |t, v| {
                    let o = t.scale(v[0], factor);
                    weighted_sum(t, o, seed)
                }),
            )
        }
        "sum" => (
            vec![u(r, c, &mut rng)],
            Box::new(move |t, v| {
                let s = t.sum(v[0]);
                // square so the gradient depends on the value
                t.mul(s, s)
            }),
        ),
        "sum_rows" => (
            vec![u(r, c, &mut rng)],
            Box::new(move |t, v| {
                let o = t.sum_rows(v[0])?;
                weighted_sum(t, o, seed)
            }),
        ),
        "segment_sum_rows" => {
            let rows = r + 2;
            let segments = rng.random_range(1..4);
            let mut cuts: Vec<usize> = (0..segments - 1).map(|_| rng.random_range(0..=rows)).collect();
            cuts.sort_unstable();
            let mut offsets = vec![0];
            offsets.extend(cuts);
            offsets.push(rows);
            (
                vec![u(rows, c, &mut rng)],
                Box::new(move |t, v| {
                    let o = t.segment_sum_rows(v[0], &offsets)?;
                    weighted_sum(t, o, seed)
                }),
            )
        }
        "relu" => (vec![signed_away_from_zero(r, c, 0.05, 2.0, &mut rng)], unary(Tape::relu)),
        "softplus" => (vec![u(r, c, &mut rng)], unary(Tape::softplus)),
        "exp" => (vec![u(r, c, &mut rng)], unary(Tape::exp)),
        "log_eps" => (
            vec![random_tensor(r, c, 0.2, 3.0, &mut rng)],
            Box::new(move |t, v| {
                let o = t.log_eps(v[0], 1e-10);
                weighted_sum(t, o, seed)
            }),
        ),
        "softmax" => (vec![u(r, c + 1, &mut rng)], unary(Tape::softmax)),
        "log_softmax" => (vec![u(r, c + 1, &mut rng)], unary(Tape::log_softmax)),
        "batchnorm_train" | "batchnorm_eval" => {
            let mode = if op == "batchnorm_train" { Mode::Train } else { Mode::Eval };
            let rows = r + 1;
            let mut stats = RunningStats::<f64>::new(c);
            stats.mean = (0..c).map(|_| rng.random_range(-1.0..1.0)).collect();
            stats.var = (0..c).map(|_| rng.random_range(0.5..2.0)).collect();
            (
                vec![u(rows, c, &mut rng), random_tensor(1, c, 0.5, 1.5, &mut rng), u(1, c, &mut rng)],
                Box::new(move |t, v| {
                    let mut s = stats.clone();
                    let o = t.batchnorm_1d(v[0], v[1], v[2], &mut s, mode)?;
                    weighted_sum(t, o, seed)
                }),
            )
        }
        "dropout" => {
            let p = rng.random_range(0.1..0.6);
            (
                vec![u(r, c, &mut rng)],
                Box::new(move |t, v| {
                    let mut mask_rng = rng::stream(seed, Stream::Dropout, 0);
                    let o = t.dropout(v[0], p, Mode::Train, &mut mask_rng)?;
                    weighted_sum(t, o, seed)
                }),
            )
        }
        "gather_rows" => {
            let picks: Vec<usize> = (0..k + 1).map(|_| rng.random_range(0..r)).collect();
            (
                vec![u(r, c, &mut rng)],
                Box::new(move |t, v| {
                    let o = t.gather_rows(v[0], &picks)?;
                    weighted_sum(t, o, seed)
                }),
            )
        }
        "sparse_matmul" => {
            let (m, n) = (r, k);
            let mut entries = Vec::new();
            for i in 0..m {
                for j in 0..n {
                    if rng.random_bool(0.5) {
                        entries.push((i as u32, j as u32, rng.random_range(-1.0..1.0)));
                    }
                }
            }
            let a = Arc::new(SparseMatrix::new(m, n, entries).unwrap());
            (
                vec![u(n, c, &mut rng)],
                Box::new(move |t, v| {
                    let o = t.sparse_matmul(a.clone(), v[0])?;
                    weighted_sum(t, o, seed)
                }),
            )
        }
        other => panic!("no gradient case for {other}"),
    }
}

/// Worst report over `trials` randomized cases of `op`.
pub fn op_gradient_check(op: &str, trials: u64, rel_tol: f64) -> GradCheckReport {
    let mut worst: Option<GradCheckReport> = None;
    for trial in 0..trials {
        let (inputs, f) = op_case(op, trial);
        let report = check_gradients(f, &inputs, None, rel_tol).unwrap();
        if worst.as_ref().is_none_or(|w| report.max_rel_error > w.max_rel_error) {
            worst = Some(report);
        }
    }
    worst.expect("at least one trial")
}

/// Five short documents over a twelve-word vocabulary with random embeddings.
pub struct MicroCorpus {
    pub documents: Vec<Document>,
    pub graphs: Vec<DocumentGraph>,
    pub vocab_size: usize,
    pub delta: f32,
}

pub fn micro_corpus(seed: u64) -> MicroCorpus {
    let vocab_size = 12;
    let delta = 0.1;
    let mut rng = rng::stream(seed, Stream::Synthetic, 1);
    let rows: Vec<Vec<f32>> = (0..vocab_size)
        .map(|_| (0..6).map(|_| rng.random_range(-1.0f32..1.0)).collect())
        .collect();
    let embeddings = EmbeddingMatrix::from_rows(&rows).unwrap();
    let mut documents: Vec<Document> = (0..5)
        .map(|i| {
            let len = rng.random_range(6..11);
            Document::from_tokens((0..len).map(|_| rng.random_range(0..vocab_size as u32)).collect(), i)
        })
        .collect();
    let idf = Idf::fit(&documents, vocab_size);
    documents.iter_mut().for_each(|d| idf.apply(d));
    let graphs = documents
        .iter()
        .map(|d| build_document_graph(d, &embeddings, delta).unwrap())
        .collect();
    MicroCorpus {
        documents,
        graphs,
        vocab_size,
        delta,
    }
}

pub fn micro_config(delta: f32) -> TrainConfig {
    TrainConfig {
        topics: 3,
        delta,
        gin: GinConfig {
            tau: 4,
            hidden: 5,
            layers: 2,
            mlp_hidden_layers: 1,
            tau_out: 4,
            epsilon: 0.1,
        },
        encoder_hidden: 6,
        encoder_layers: 1,
        alpha: None,
        learning_rate: 2e-3,
        batch_size: 5,
        epochs: 1,
        seed: 3,
        dropout: 0.2,
    }
}

pub struct EndToEnd {
    pub model: GinopicModel<f64>,
    pub batch: Batch<f64>,
    pub noise: Tensor<f64>,
    pub seed: u64,
}

impl EndToEnd {
    pub fn new(seed: u64) -> Self {
        let micro = micro_corpus(seed);
        let mut config = micro_config(micro.delta);
        config.seed = seed;
        let mut model = GinopicModel::<f64>::new(&config, micro.vocab_size, "micro").unwrap();
        // batch-norm shifts start at exactly 0, which can park a ReLU input on
        // its kink when a column has no variance; move off the initialization
        let mut jitter = rng::stream(seed, Stream::Noise, 1);
        for id in model.params.ids().collect::<Vec<_>>() {
            for x in model.params.get_mut(id).data_mut() {
                let z: f64 = StandardNormal.sample(&mut jitter);
                *x += 0.1 * z;
            }
        }
        let docs: Vec<&Document> = micro.documents.iter().collect();
        let graphs: Vec<&DocumentGraph> = micro.graphs.iter().collect();
        let batch = Batch::<f64>::new(&docs, &graphs, micro.vocab_size).unwrap();
        let mut rng = rng::stream(seed, Stream::Noise, 0);
        let noise = Tensor::from_vec(
            docs.len(),
            config.topics,
            (0..docs.len() * config.topics).map(|_| StandardNormal.sample(&mut rng)).collect(),
        )
        .unwrap();
        EndToEnd {
            model,
            batch,
            noise,
            seed,
        }
    }

    pub fn inputs(&self) -> Vec<Tensor<f64>> {
        self.model.params.iter().map(|(_, t)| t.clone()).collect()
    }

    /// Training-mode loss with fixed noise and a fixed dropout mask.
    pub fn loss(&self, tape: &mut Tape<f64>, vars: &[Var]) -> ginopic::tensor::Result<Var> {
        let mut running = self.model.running.clone();
        let mut dropout_rng = rng::stream(self.seed, Stream::Dropout, 0);
        let pass = self.model.forward(
            tape,
            vars,
            &mut running,
            &self.batch,
            Mode::Train,
            Noise::Given(&self.noise),
            &mut dropout_rng,
        )?;
        Ok(pass.loss)
    }

    pub fn loss_value(&self, inputs: &[Tensor<f64>]) -> f64 {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.constant(t.clone())).collect();
        let loss = self.loss(&mut tape, &vars).unwrap();
        tape.value(loss).item()
    }

    /// `per_group` coordinates drawn from every parameter tensor.
    pub fn sample_coordinates(&self, per_group: usize) -> Vec<(usize, usize)> {
        let mut rng = rng::stream(self.seed, Stream::Noise, 2);
        let mut coords = Vec::new();
        for (i, (_, t)) in self.model.params.iter().enumerate() {
            let mut flat: Vec<usize> = (0..t.len()).collect();
            flat.shuffle(&mut rng);
            coords.extend(flat.into_iter().take(per_group).map(|j| (i, j)));
        }
        coords
    }
}

impl EndToEnd {
    /// Whether a ReLU switches within one finite-difference step of the
    /// coordinate. For a smooth loss the gap between right and left slopes is
    /// `h f''`, so shrinking `h` tenfold shrinks it tenfold; a kink inside
    /// `[-h, h]` breaks that scaling.
    pub fn has_kink(&self, inputs: &[Tensor<f64>], (i, j): (usize, usize)) -> bool {
        let f0 = self.loss_value(inputs);
        let gap = |h: f64| {
            let mut p = inputs.to_vec();
            p[i].data_mut()[j] += h;
            let mut m = inputs.to_vec();
            m[i].data_mut()[j] -= h;
            (self.loss_value(&p) - f0) / h - (f0 - self.loss_value(&m)) / h
        };
        let coarse = gap(FD_STEP);
        let fine = gap(FD_STEP / 10.0);
        (coarse - 10.0 * fine).abs() > 1e-6 + 0.1 * coarse.abs()
    }
}

pub struct EndToEndReport {
    pub report: GradCheckReport,
    pub kinks_skipped: usize,
}

/// Finite-difference check of the full loss with respect to every parameter
/// group, sampling `per_group` coordinates from each and skipping those that
/// sit within one step of a ReLU switch.
pub fn end_to_end_check(seed: u64, per_group: usize, rel_tol: f64) -> EndToEndReport {
    let e = EndToEnd::new(seed);
    let inputs = e.inputs();
    let sampled = e.sample_coordinates(per_group);
    let total = sampled.len();
    let coords: Vec<(usize, usize)> = sampled.into_iter().filter(|&c| !e.has_kink(&inputs, c)).collect();
    let report = check_gradients(|tape, vars| e.loss(tape, vars), &inputs, Some(&coords), rel_tol).unwrap();
    EndToEndReport {
        report,
        kinks_skipped: total - coords.len(),
    }
}

/// Independent cosine for the edge-rule oracle.
fn plain_cosine(u: &[f32], v: &[f32]) -> f64 {
    let dot: f64 = u.iter().zip(v).map(|(&a, &b)| a as f64 * b as f64).sum();
    let nu: f64 = u.iter().map(|&a| (a as f64).powi(2)).sum::<f64>().sqrt();
    let nv: f64 = v.iter().map(|&a| (a as f64).powi(2)).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        0.0
    } else {
        (dot / (nu * nv)).clamp(-1.0, 1.0)
    }
}

/// Enumerates every unordered pair of distinct words of `tokens` in first
/// occurrence order and keeps those at or above the threshold.
pub fn brute_force_graph(tokens: &[u32], embeddings: &EmbeddingMatrix, delta: f32) -> DocumentGraph {
    let mut nodes: Vec<u32> = Vec::new();
    for &t in tokens {
        if !nodes.contains(&t) {
            nodes.push(t);
        }
    }
    let mut edges = Vec::new();
    for i in 0..nodes.len() {
        for j in 0..nodes.len() {
            if i >= j {
                continue;
            }
            let (a, b) = (embeddings.row(nodes[i]), embeddings.row(nodes[j]));
            let sim = cosine_similarity(a, b);
            assert!((sim - plain_cosine(a, b)).abs() < 1e-9, "cosine disagrees with the oracle");
            if sim as f32 >= delta {
                edges.push((i as u32, j as u32, (sim as f32).min(1.0)));
            }
        }
    }
    DocumentGraph {
        node_words: nodes,
        edges,
        delta,
    }
}

pub struct GraphConformance {
    pub documents: usize,
    pub mismatches: usize,
    pub monotonicity_violations: usize,
}

/// Compares graph construction with the brute-force oracle on random
/// documents and embeddings (some rows zero), and checks that raising the
/// threshold only removes edges.
pub fn graph_conformance(documents: usize, seed: u64) -> GraphConformance {
    let mut rng = rng::stream(seed, Stream::Synthetic, 2);
    let mut mismatches = 0;
    let mut violations = 0;
    for d in 0..documents {
        let vocab = rng.random_range(2..40);
        let dim = rng.random_range(2..9);
        let rows: Vec<Vec<f32>> = (0..vocab)
            .map(|_| {
                if rng.random_bool(0.05) {
                    vec![0.0; dim]
                } else {
                    (0..dim).map(|_| rng.random_range(-1.0f32..1.0)).collect()
                }
            })
            .collect();
        let embeddings = EmbeddingMatrix::from_rows(&rows).unwrap();
        let len = rng.random_range(1..60);
        let tokens: Vec<u32> = (0..len).map(|_| rng.random_range(0..vocab as u32)).collect();
        let doc = Document::from_tokens(tokens.clone(), d);
        let delta: f32 = if d % 10 == 0 { 0.0 } else { rng.random_range(0.0..1.0) };
        let built = build_document_graph(&doc, &embeddings, delta).unwrap();
        if built != brute_force_graph(&tokens, &embeddings, delta) {
            mismatches += 1;
        }
        let higher = delta + rng.random_range(0.0f32..0.5);
        let sparser = graph_from_nodes(built.node_words.clone(), &embeddings, higher).unwrap();
        let kept: Vec<(u32, u32)> = built.edges.iter().map(|&(i, j, _)| (i, j)).collect();
        if sparser.edges.iter().any(|&(i, j, _)| !kept.contains(&(i, j))) {
            violations += 1;
        }
    }
    GraphConformance {
        documents,
        mismatches,
        monotonicity_violations: violations,
    }
}

pub fn small_gin(seed: u64, vocab: usize, layers: usize) -> (GinStack, Params<f64>, Vec<RunningStats<f64>>) {
    let mut params = Params::new();
    let mut running = Vec::new();
    let cfg = GinConfig {
        tau: 8,
        hidden: 16,
        layers,
        mlp_hidden_layers: 1,
        tau_out: 8,
        epsilon: 0.0,
    };
    let s = GinStack::new(cfg, vocab, &mut params, &mut running, &mut rng::stream(seed, Stream::Init, 0)).unwrap();
    (s, params, running)
}

/// Largest readout difference between random graphs and random relabelings
/// of their nodes, in both modes.
pub fn permutation_invariance_gap(cases: u64) -> f64 {
    let mut worst = 0.0f64;
    for case in 0..cases {
        let mut rng = rng::stream(case, Stream::Synthetic, 3);
        let (stack, params, running) = small_gin(case, 20, 3);
        let n = rng.random_range(1..12);
        let nodes: Vec<u32> = (0..n).map(|_| rng.random_range(0..20)).collect();
        let mut edges = Vec::new();
        for i in 0..n as u32 {
            for j in i + 1..n as u32 {
                if rng.random_bool(0.4) {
                    edges.push((i, j, rng.random_range(0.1f32..1.0)));
                }
            }
        }
        let g = DocumentGraph {
            node_words: nodes,
            edges,
            delta: 0.0,
        };
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let p = g.permuted(&order);
        for mode in [Mode::Eval, Mode::Train] {
            let (_, a) = gin_stack_forward(&stack, &params, &mut running.clone(), &[&g], mode).unwrap();
            let (_, b) = gin_stack_forward(&stack, &params, &mut running.clone(), &[&p], mode).unwrap();
            for (x, y) in a.data().iter().zip(b.data()) {
                worst = worst.max((x - y).abs());
            }
        }
    }
    worst
}

pub fn uniform_graph(n: usize, edges: &[(u32, u32)]) -> DocumentGraph {
    DocumentGraph {
        node_words: vec![0; n],
        edges: edges.iter().map(|&(i, j)| (i, j, 1.0)).collect(),
        delta: 0.0,
    }
}

/// Largest relative gap between the closed-form KL and a Monte Carlo
/// estimate with `samples` draws, over `pairs` random Gaussians.
pub fn kl_monte_carlo_gap(pairs: u64, samples: usize) -> f64 {
    use ginopic::topicmodel::{kl_divergence, laplace_prior};
    let mut worst = 0.0f64;
    for case in 0..pairs {
        let mut rng = rng::stream(case, Stream::Synthetic, 4);
        let k = rng.random_range(2..8);
        let alpha: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..3.0)).collect();
        let prior = laplace_prior(&alpha).unwrap();
        // keep the posterior far enough from the prior that the relative
        // error is not dominated by a near-zero divergence
        let mu0: Vec<f64> = (0..k).map(|i| prior.mu1[i] + rng.random_range(-2.0..2.0)).collect();
        let var0: Vec<f64> = (0..k).map(|i| prior.sigma1_diag[i] * rng.random_range(0.2..3.0)).collect();
        let closed = kl_divergence(&mu0, &var0, &prior);
        let log_density = |x: &[f64], mu: &[f64], var: &[f64]| -> f64 {
            x.iter()
                .zip(mu.iter().zip(var))
                .map(|(&x, (&m, &v))| -0.5 * ((x - m).powi(2) / v + v.ln() + (2.0 * std::f64::consts::PI).ln()))
                .sum()
        };
        // antithetic pairs (z, -z) cancel the odd terms of the estimator
        let mut total = 0.0;
        let mut x = vec![0.0; k];
        let mut y = vec![0.0; k];
        for _ in 0..samples / 2 {
            for i in 0..k {
                let z: f64 = StandardNormal.sample(&mut rng);
                x[i] = mu0[i] + var0[i].sqrt() * z;
                y[i] = mu0[i] - var0[i].sqrt() * z;
            }
            for s in [&x, &y] {
                total += log_density(s, &mu0, &var0) - log_density(s, &prior.mu1, &prior.sigma1_diag);
            }
        }
        let estimate = total / (samples / 2 * 2) as f64;
        worst = worst.max((estimate - closed).abs() / closed.abs());
    }
    worst
}

pub fn synthetic_train_config(topics: usize, delta: f32, seed: u64) -> TrainConfig {
    TrainConfig {
        topics,
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
    }
}

pub struct Prepared {
    pub corpus: SyntheticCorpus,
    pub split: CorpusSplit,
    pub embeddings: EmbeddingMatrix,
    pub graphs: GraphStore,
}

pub fn prepare_synthetic(config: &SyntheticConfig, delta: f32) -> Prepared {
    let corpus = generate(config);
    let (split, _) = build_corpus(
        &corpus.documents,
        Some(&corpus.labels),
        &PreprocessOptions::default(),
        SplitRatios::default(),
        config.seed,
    )
    .unwrap();
    let embeddings = corpus.embedding_matrix(&split.vocabulary).unwrap();
    let (graphs, _) = build_all_graphs(&split, &embeddings, delta, None).unwrap();
    Prepared {
        corpus,
        split,
        embeddings,
        graphs,
    }
}

/// Results of one training run on the three-topic synthetic corpus.
pub struct SyntheticRun {
    pub seed: u64,
    pub mean_purity: f64,
    pub probe_accuracy: f64,
    pub heldout_accuracy: f64,
    pub random_label_accuracy: f64,
    /// Uniform guessing, `1 / classes`.
    pub chance: f64,
    /// Share of the most frequent test label.
    pub majority_share: f64,
    pub first_loss: f64,
    pub last_loss: f64,
}

pub const SYNTHETIC_DELTA: f32 = 0.5;

pub fn synthetic_run(seed: u64) -> SyntheticRun {
    let prepared = prepare_synthetic(&SyntheticConfig::three_topics(seed), SYNTHETIC_DELTA);
    let split = &prepared.split;
    let config = synthetic_train_config(3, SYNTHETIC_DELTA, seed);
    let TrainedModel { model, history } = train(split, &prepared.graphs, &config).unwrap();
    let topics = top_words(model.beta(), 10, &split.vocabulary).unwrap();
    let blocks = &prepared.corpus.topic_words;
    let purity = greedy_block_purity(&topics, blocks);
    let mean_purity = purity.iter().sum::<f64>() / purity.len() as f64;

    // single-topic probes mapped through the learned topic -> block pairing
    let assignment = greedy_block_assignment(&topics, blocks);
    let idf = Idf::fit(&split.train, split.vocabulary.len());
    let probes = prepared.corpus.probe_documents(20, 30, seed + 1000);
    let mut probe_docs = Vec::new();
    let mut probe_blocks = Vec::new();
    for (i, (text, block)) in probes.iter().enumerate() {
        let ids: Vec<u32> = text.split_whitespace().filter_map(|w| split.vocabulary.id(w)).collect();
        let mut doc = Document::from_tokens(ids, i);
        idf.apply(&mut doc);
        probe_docs.push(doc);
        probe_blocks.push(*block);
    }
    let probe_graphs: Vec<DocumentGraph> = probe_docs
        .iter()
        .map(|d| build_document_graph(d, &prepared.embeddings, SYNTHETIC_DELTA).unwrap())
        .collect();
    let theta = infer_theta(
        &model,
        &probe_docs.iter().collect::<Vec<_>>(),
        &probe_graphs.iter().collect::<Vec<_>>(),
    )
    .unwrap();
    let correct = theta
        .iter()
        .zip(&probe_blocks)
        .filter(|(row, &block)| assignment[argmax(row)] == Some(block))
        .count();
    let probe_accuracy = correct as f64 / probes.len() as f64;

    // held-out classification on theta
    let classes = split.k_gold();
    let features = |docs: &[Document], graphs: &[DocumentGraph]| {
        infer_theta(&model, &docs.iter().collect::<Vec<_>>(), &graphs.iter().collect::<Vec<_>>()).unwrap()
    };
    let labels = |docs: &[Document]| docs.iter().map(|d| d.label.unwrap()).collect::<Vec<_>>();
    let train_x = features(&split.train, prepared.graphs.train());
    let test_x = features(&split.test, prepared.graphs.test());
    let (train_y, test_y) = (labels(&split.train), labels(&split.test));
    let clf_config = ClassifierConfig {
        seed,
        ..ClassifierConfig::default()
    };
    let clf = train_classifier(&train_x, &train_y, classes, &clf_config).unwrap();
    let heldout_accuracy = evaluate_accuracy(&clf, &test_x, &test_y).unwrap();

    // labels shuffled independently of theta, averaged over a few shuffles
    const SHUFFLES: u64 = 5;
    let mut random_label_accuracy = 0.0;
    for s in 0..SHUFFLES {
        let mut shuffle_rng = rng::stream(seed, Stream::Shuffle, 1000 + s);
        let mut random_train = train_y.clone();
        random_train.shuffle(&mut shuffle_rng);
        let mut random_test = test_y.clone();
        random_test.shuffle(&mut shuffle_rng);
        let control = train_classifier(&train_x, &random_train, classes, &clf_config).unwrap();
        random_label_accuracy += evaluate_accuracy(&control, &test_x, &random_test).unwrap() / SHUFFLES as f64;
    }
    let majority = (0..classes as u32)
        .map(|c| test_y.iter().filter(|&&y| y == c).count())
        .max()
        .unwrap_or(0);
    let majority_share = majority as f64 / test_y.len() as f64;

    SyntheticRun {
        seed,
        mean_purity,
        probe_accuracy,
        heldout_accuracy,
        random_label_accuracy,
        chance: 1.0 / classes as f64,
        majority_share,
        first_loss: history.first().unwrap().total,
        last_loss: history.last().unwrap().total,
    }
}

pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in row.iter().enumerate() {
        if x > row[best] {
            best = i;
        }
    }
    best
}

/// Window totals, per-word and per-pair window counts by materializing
/// every window as a set.
pub fn brute_force_windows(
    docs: &[Vec<u32>],
    window: usize,
    vocab: u32,
) -> (u64, Vec<u64>, std::collections::HashMap<(u32, u32), u64>) {
    use std::collections::{HashMap, HashSet};
    let mut windows: Vec<HashSet<u32>> = Vec::new();
    for d in docs.iter().filter(|d| !d.is_empty()) {
        if d.len() <= window {
            windows.push(d.iter().copied().collect());
        } else {
            for s in 0..=d.len() - window {
                windows.push(d[s..s + window].iter().copied().collect());
            }
        }
    }
    let single = (0..vocab)
        .map(|x| windows.iter().filter(|s| s.contains(&x)).count() as u64)
        .collect();
    let mut pairs = HashMap::new();
    for a in 0..vocab {
        for b in a + 1..vocab {
            let c = windows.iter().filter(|s| s.contains(&a) && s.contains(&b)).count() as u64;
            pairs.insert((a, b), c);
        }
    }
    (windows.len() as u64, single, pairs)
}

/// Number of random toy corpora on which window statistics disagree with
/// [`brute_force_windows`].
pub fn cooccurrence_mismatches(corpora: u64) -> usize {
    use ginopic::metrics::CooccurrenceStats;
    let mut bad = 0;
    for case in 0..corpora {
        let mut rng = rng::stream(case, Stream::Synthetic, 5);
        let vocab = rng.random_range(2..9u32);
        let docs: Vec<Vec<u32>> = (0..rng.random_range(1..8))
            .map(|_| (0..rng.random_range(0..30)).map(|_| rng.random_range(0..vocab)).collect())
            .collect();
        if docs.iter().all(Vec::is_empty) {
            continue;
        }
        let window = rng.random_range(1..12);
        let (total, single, pairs) = brute_force_windows(&docs, window, vocab);
        let s = CooccurrenceStats::build_full(&docs, window, vocab as usize).unwrap();
        let ok = s.total_windows == total
            && (0..vocab).all(|w| s.window_count(w) == single[w as usize])
            && pairs
                .iter()
                .all(|(&(a, b), &c)| s.pair_window_count(a, b) == c && s.pair_window_count(b, a) == c);
        if !ok {
            bad += 1;
        }
    }
    bad
}

/// One point of a threshold sweep.
pub struct SweepPoint {
    pub delta: f32,
    pub mean_edges: f64,
    pub graph_seconds: f64,
    pub train_seconds: f64,
}

/// Builds graphs and trains briefly at each threshold on the three-topic
/// corpus, with embeddings blurred by noise so similarities are graded.
pub fn delta_sweep(deltas: &[f32], epochs: usize, seed: u64) -> Vec<SweepPoint> {
    let corpus = generate(&SyntheticConfig::three_topics(seed));
    let (split, _) = build_corpus(
        &corpus.documents,
        Some(&corpus.labels),
        &PreprocessOptions::default(),
        SplitRatios::default(),
        seed,
    )
    .unwrap();
    let clean = corpus.embedding_matrix(&split.vocabulary).unwrap();
    let mut rng = rng::stream(seed, Stream::Embedding, 9);
    let rows: Vec<Vec<f32>> = (0..clean.len() as u32)
        .map(|w| {
            clean
                .row(w)
                .iter()
                .map(|&x| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    x + 0.08 * z as f32
                })
                .collect()
        })
        .collect();
    let embeddings = EmbeddingMatrix::from_rows(&rows).unwrap();
    deltas
        .iter()
        .map(|&delta| {
            let start = std::time::Instant::now();
            let (graphs, _) = build_all_graphs(&split, &embeddings, delta, None).unwrap();
            let graph_seconds = start.elapsed().as_secs_f64();
            let mean_edges =
                graphs.graphs.iter().map(|g| g.edge_count() as f64).sum::<f64>() / graphs.graphs.len() as f64;
            let config = TrainConfig {
                epochs,
                ..synthetic_train_config(3, delta, seed)
            };
            let start = std::time::Instant::now();
            train(&split, &graphs, &config).unwrap();
            SweepPoint {
                delta,
                mean_edges,
                graph_seconds,
                train_seconds: start.elapsed().as_secs_f64(),
            }
        })
        .collect()
}
