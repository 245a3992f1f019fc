//! Graph Isomorphism Network over document graphs.
//!
//! One layer computes `h_i' = MLP((1 + eps) h_i + sum_j w_ij h_j)` where the
//! sum runs over the neighbours of `i` weighted by edge similarity. The stack
//! is
//!
//! ```text
//! GIN(tau, H) -> BN -> ReLU -> [GIN(H, H) -> BN -> ReLU] x (L - 2) -> GIN(H, tau') -> BN
//! ```
//!
//! and a document is represented by the sum of its final node embeddings.
//! Initial node features are rows of a learnable `V x tau` table. A minibatch
//! of graphs is processed as one block-diagonal graph, so batch-norm
//! statistics pool over every node in the minibatch.

use std::sync::Arc;

use rand::Rng;

use crate::docgraph::DocumentGraph;
use crate::tensor::{
    BatchNorm1d, Linear, Mode, ParamId, Params, Result, RunningStats, Scalar, SparseMatrix, Tape, TensorError, Var,
};

#[derive(Clone, Debug, PartialEq)]
pub struct GinConfig {
    /// Input node-feature width.
    pub tau: usize,
    /// Hidden width, used both between GIN layers and inside each MLP.
    pub hidden: usize,
    /// Number of GIN layers, at least 2.
    pub layers: usize,
    /// Linear + ReLU blocks inside each MLP before its output layer.
    pub mlp_hidden_layers: usize,
    /// Output node-embedding width.
    pub tau_out: usize,
    /// Fixed self-loop weight offset.
    pub epsilon: f64,
}

impl GinConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layers < 2 {
            return Err(TensorError::Config(format!("GIN needs at least 2 layers, got {}", self.layers)));
        }
        if self.tau == 0 || self.hidden == 0 || self.tau_out == 0 {
            return Err(TensorError::Config("GIN dimensions must be at least 1".into()));
        }
        if !self.epsilon.is_finite() {
            return Err(TensorError::Config("GIN epsilon must be finite".into()));
        }
        Ok(())
    }

    /// `(input, output)` width of every GIN layer.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        (0..self.layers)
            .map(|l| {
                let input = if l == 0 { self.tau } else { self.hidden };
                let output = if l + 1 == self.layers { self.tau_out } else { self.hidden };
                (input, output)
            })
            .collect()
    }
}

/// `Linear -> ReLU` per hidden layer, then a final `Linear`.
#[derive(Clone, Debug, PartialEq)]
pub struct GinMlp {
    pub linears: Vec<Linear>,
}

impl GinMlp {
    pub fn new<F: Scalar, R: Rng + ?Sized>(
        params: &mut Params<F>,
        name: &str,
        input: usize,
        hidden: usize,
        hidden_layers: usize,
        output: usize,
        rng: &mut R,
    ) -> Self {
        let mut linears = Vec::with_capacity(hidden_layers + 1);
        let mut width = input;
        for k in 0..hidden_layers {
            linears.push(Linear::new(params, &format!("{name}.hidden{k}"), width, hidden, true, rng));
            width = hidden;
        }
        linears.push(Linear::new(params, &format!("{name}.out"), width, output, true, rng));
        GinMlp { linears }
    }

    pub fn forward<F: Scalar>(&self, tape: &mut Tape<F>, bound: &[Var], x: Var) -> Result<Var> {
        let mut h = x;
        let last = self.linears.len() - 1;
        for (k, lin) in self.linears.iter().enumerate() {
            h = lin.forward(tape, bound, h)?;
            if k < last {
                h = tape.relu(h);
            }
        }
        Ok(h)
    }
}

/// Several document graphs laid out as one block-diagonal graph.
#[derive(Clone, Debug)]
pub struct GraphBatch<F> {
    /// Node-feature table row of every node, graph after graph.
    pub node_rows: Vec<usize>,
    /// Symmetric weighted adjacency over all nodes of the batch.
    pub adjacency: Arc<SparseMatrix<F>>,
    /// Row boundaries of each graph: graph `g` owns rows `offsets[g]..offsets[g + 1]`.
    pub offsets: Vec<usize>,
}

impl<F: Scalar> GraphBatch<F> {
    pub fn new(graphs: &[&DocumentGraph]) -> Result<Self> {
        let mut node_rows = Vec::new();
        let mut entries = Vec::new();
        let mut offsets = vec![0];
        for g in graphs {
            let base = node_rows.len() as u32;
            node_rows.extend(g.node_words.iter().map(|&w| w as usize));
            for &(i, j, w) in &g.edges {
                let w = F::from_f64(w as f64);
                entries.push((base + i, base + j, w));
                entries.push((base + j, base + i, w));
            }
            offsets.push(node_rows.len());
        }
        let n = node_rows.len();
        Ok(GraphBatch {
            node_rows,
            adjacency: Arc::new(SparseMatrix::new(n, n, entries)?),
            offsets,
        })
    }

    pub fn graphs(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn nodes(&self) -> usize {
        self.node_rows.len()
    }
}

/// Pre-MLP message: `(1 + eps) h + A h`.
pub fn gin_aggregate<F: Scalar>(
    tape: &mut Tape<F>,
    node_states: Var,
    adjacency: &Arc<SparseMatrix<F>>,
    epsilon: f64,
) -> Result<Var> {
    let rows = tape.value(node_states).rows();
    if adjacency.rows() != rows {
        return Err(TensorError::Contract(format!(
            "{rows} node states for a graph with {} nodes",
            adjacency.rows()
        )));
    }
    let neighbours = tape.sparse_matmul(Arc::clone(adjacency), node_states)?;
    let own = tape.scale(node_states, F::from_f64(1.0 + epsilon));
    tape.add(own, neighbours)
}

/// One GIN layer with an arbitrary node update in place of the MLP.
pub fn gin_layer_forward<F: Scalar>(
    tape: &mut Tape<F>,
    node_states: Var,
    adjacency: &Arc<SparseMatrix<F>>,
    epsilon: f64,
    mlp: impl FnOnce(&mut Tape<F>, Var) -> Result<Var>,
) -> Result<Var> {
    let aggregated = gin_aggregate(tape, node_states, adjacency, epsilon)?;
    mlp(tape, aggregated)
}

/// Node embeddings and per-graph readout of one forward pass.
#[derive(Clone, Copy, Debug)]
pub struct GraphEncoding {
    /// `nodes x out_dim`
    pub nodes: Var,
    /// `graphs x out_dim`
    pub readout: Var,
}

/// A graph network mapping a [`GraphBatch`] to graph-level vectors.
pub trait GraphEncoder<F: Scalar> {
    fn output_dim(&self) -> usize;

    fn encode(
        &self,
        tape: &mut Tape<F>,
        bound: &[Var],
        running: &mut [RunningStats<F>],
        batch: &GraphBatch<F>,
        mode: Mode,
    ) -> Result<GraphEncoding>;
}

#[derive(Clone, Debug, PartialEq)]
pub struct GinStack {
    pub config: GinConfig,
    pub node_features: ParamId,
    pub mlps: Vec<GinMlp>,
    pub norms: Vec<BatchNorm1d>,
}

impl GinStack {
    /// Registers the node table (`normal(0, 0.02)`) and every layer.
    pub fn new<F: Scalar, R: Rng + ?Sized>(
        config: GinConfig,
        vocab_size: usize,
        params: &mut Params<F>,
        running: &mut Vec<RunningStats<F>>,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate()?;
        let node_features = params.add("gin.node_features", Params::normal(vocab_size, config.tau, 0.02, rng));
        let mut mlps = Vec::with_capacity(config.layers);
        let mut norms = Vec::with_capacity(config.layers);
        for (l, (input, output)) in config.layer_dims().into_iter().enumerate() {
            mlps.push(GinMlp::new(
                params,
                &format!("gin.layer{l}.mlp"),
                input,
                config.hidden,
                config.mlp_hidden_layers,
                output,
                rng,
            ));
            norms.push(BatchNorm1d::new(params, running, &format!("gin.layer{l}.bn"), output));
        }
        Ok(GinStack {
            config,
            node_features,
            mlps,
            norms,
        })
    }

    pub fn vocab_size<F: Scalar>(&self, params: &Params<F>) -> usize {
        params.get(self.node_features).rows()
    }
}

impl<F: Scalar> GraphEncoder<F> for GinStack {
    fn output_dim(&self) -> usize {
        self.config.tau_out
    }

    fn encode(
        &self,
        tape: &mut Tape<F>,
        bound: &[Var],
        running: &mut [RunningStats<F>],
        batch: &GraphBatch<F>,
        mode: Mode,
    ) -> Result<GraphEncoding> {
        let mut h = tape.gather_rows(bound[self.node_features.index()], &batch.node_rows)?;
        let last = self.mlps.len() - 1;
        for (l, (mlp, bn)) in self.mlps.iter().zip(&self.norms).enumerate() {
            h = gin_layer_forward(tape, h, &batch.adjacency, self.config.epsilon, |t, x| mlp.forward(t, bound, x))?;
            h = bn.forward(tape, bound, running, h, mode)?;
            if l < last {
                h = tape.relu(h);
            }
        }
        let readout = tape.segment_sum_rows(h, &batch.offsets)?;
        Ok(GraphEncoding { nodes: h, readout })
    }
}

/// Forward pass of `stack` over `graphs`.
pub fn gin_stack_forward<F: Scalar>(
    stack: &GinStack,
    params: &Params<F>,
    running: &mut [RunningStats<F>],
    graphs: &[&DocumentGraph],
    mode: Mode,
) -> Result<(crate::tensor::Tensor<F>, crate::tensor::Tensor<F>)> {
    let mut tape = Tape::new();
    let bound = params.bind_frozen(&mut tape);
    let batch = GraphBatch::new(graphs)?;
    let enc = stack.encode(&mut tape, &bound, running, &batch, mode)?;
    Ok((tape.value(enc.nodes).clone(), tape.value(enc.readout).clone()))
}

/// Whether `stack` (eval mode) maps the two graphs, with every edge weight set
/// to 1, to readouts further apart than `tolerance` in Euclidean norm.
pub fn wl_distinguishability_test(
    graph_a: &DocumentGraph,
    graph_b: &DocumentGraph,
    stack: &GinStack,
    params: &Params<f64>,
    running: &[RunningStats<f64>],
    tolerance: f64,
) -> Result<bool> {
    let binarize = |g: &DocumentGraph| DocumentGraph {
        node_words: g.node_words.clone(),
        edges: g.edges.iter().map(|&(i, j, _)| (i, j, 1.0)).collect(),
        delta: g.delta,
    };
    let mut stats = running.to_vec();
    let (_, a) = gin_stack_forward(stack, params, &mut stats, &[&binarize(graph_a)], Mode::Eval)?;
    let (_, b) = gin_stack_forward(stack, params, &mut stats, &[&binarize(graph_b)], Mode::Eval)?;
    let dist = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    Ok(dist > tolerance)
}
