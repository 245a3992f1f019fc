//! Per-document word-similarity graphs.
//!
//! Nodes are the distinct vocabulary ids of a document in first-occurrence
//! order. Two nodes are joined when the cosine similarity of their embeddings
//! is at least `delta`; the edge weight is that similarity. Each undirected
//! edge is stored once as `(i, j, weight)` with `i < j` (local node indices).
//! There are no self loops.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use crate::binio::{FormatError, Reader, Writer};
use crate::corpus::{CorpusSplit, Document, WordId};
use crate::embedding::{cosine_similarity, EmbeddingMatrix};

pub const GRAPH_MAGIC: &str = "GINOGRAPH1";

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("threshold {0} must be a finite value >= 0")]
    Threshold(f32),
    #[error("document has no tokens")]
    EmptyDocument,
    #[error("word id {id} has no embedding row (table has {rows})")]
    MissingEmbedding { id: WordId, rows: usize },
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
    #[error("graph store is empty")]
    EmptyStore,
}

pub type Result<T> = std::result::Result<T, GraphError>;

#[derive(Clone, Debug, PartialEq)]
pub struct DocumentGraph {
    pub node_words: Vec<WordId>,
    pub edges: Vec<(u32, u32, f32)>,
    pub delta: f32,
}

impl DocumentGraph {
    pub fn node_count(&self) -> usize {
        self.node_words.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Fraction of the `n(n-1)/2` possible edges that are present.
    pub fn density(&self) -> f64 {
        let n = self.node_count();
        if n < 2 {
            return 0.0;
        }
        self.edge_count() as f64 / (n * (n - 1) / 2) as f64
    }

    /// Dense symmetric adjacency, zero diagonal.
    pub fn adjacency(&self) -> Vec<Vec<f32>> {
        let n = self.node_count();
        let mut a = vec![vec![0.0; n]; n];
        for &(i, j, w) in &self.edges {
            a[i as usize][j as usize] = w;
            a[j as usize][i as usize] = w;
        }
        a
    }

    /// Same graph with the given node ordering: `order[k]` is the old index of
    /// new node `k`.
    pub fn permuted(&self, order: &[usize]) -> DocumentGraph {
        let mut new_index = vec![0u32; order.len()];
        for (k, &old) in order.iter().enumerate() {
            new_index[old] = k as u32;
        }
        let mut edges: Vec<(u32, u32, f32)> = self
            .edges
            .iter()
            .map(|&(i, j, w)| {
                let (a, b) = (new_index[i as usize], new_index[j as usize]);
                (a.min(b), a.max(b), w)
            })
            .collect();
        edges.sort_by_key(|&(i, j, _)| (i, j));
        DocumentGraph {
            node_words: order.iter().map(|&o| self.node_words[o]).collect(),
            edges,
            delta: self.delta,
        }
    }
}

pub fn validate_delta(delta: f32) -> Result<()> {
    if !delta.is_finite() || delta < 0.0 {
        return Err(GraphError::Threshold(delta));
    }
    Ok(())
}

/// Graph over an explicit node list.
pub fn graph_from_nodes(node_words: Vec<WordId>, embeddings: &EmbeddingMatrix, delta: f32) -> Result<DocumentGraph> {
    validate_delta(delta)?;
    if let Some(&id) = node_words.iter().find(|&&id| id as usize >= embeddings.len()) {
        return Err(GraphError::MissingEmbedding {
            id,
            rows: embeddings.len(),
        });
    }
    let mut edges = Vec::new();
    for i in 0..node_words.len() {
        for j in i + 1..node_words.len() {
            let sim = cosine_similarity(embeddings.row(node_words[i]), embeddings.row(node_words[j])) as f32;
            if sim >= delta {
                edges.push((i as u32, j as u32, sim.min(1.0)));
            }
        }
    }
    Ok(DocumentGraph {
        node_words,
        edges,
        delta,
    })
}

pub fn build_document_graph(document: &Document, embeddings: &EmbeddingMatrix, delta: f32) -> Result<DocumentGraph> {
    if document.is_empty() {
        return Err(GraphError::EmptyDocument);
    }
    graph_from_nodes(document.distinct_in_order(), embeddings, delta)
}

/// Identifies the inputs a store was built from.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphKey {
    pub corpus_hash: String,
    pub embedding_hash: String,
    pub delta: f32,
}

/// One graph per document of a split, in train, validation, test order.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphStore {
    pub key: GraphKey,
    pub graphs: Vec<DocumentGraph>,
    pub n_train: usize,
    pub n_validation: usize,
}

impl GraphStore {
    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    pub fn train(&self) -> &[DocumentGraph] {
        &self.graphs[..self.n_train]
    }

    pub fn validation(&self) -> &[DocumentGraph] {
        &self.graphs[self.n_train..self.n_train + self.n_validation]
    }

    pub fn test(&self) -> &[DocumentGraph] {
        &self.graphs[self.n_train + self.n_validation..]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CacheOutcome {
    NoCache,
    Loaded,
    Built,
    /// A cache existed but was built from other inputs.
    Rebuilt,
}

pub fn build_graphs(documents: &[&Document], embeddings: &EmbeddingMatrix, delta: f32) -> Result<Vec<DocumentGraph>> {
    validate_delta(delta)?;
    documents
        .par_iter()
        .map(|d| build_document_graph(d, embeddings, delta))
        .collect()
}

/// Builds (or loads from `cache_path`) the graphs of every document in `split`.
pub fn build_all_graphs(
    split: &CorpusSplit,
    embeddings: &EmbeddingMatrix,
    delta: f32,
    cache_path: Option<&Path>,
) -> Result<(GraphStore, CacheOutcome)> {
    validate_delta(delta)?;
    let key = GraphKey {
        corpus_hash: split.content_hash(),
        embedding_hash: embeddings.content_hash(),
        delta,
    };
    let mut outcome = CacheOutcome::NoCache;
    if let Some(path) = cache_path {
        outcome = CacheOutcome::Built;
        if path.exists() {
            match load_graph_cache(path) {
                Ok(store) if store.key == key && store.len() == split.len() => {
                    return Ok((
                        GraphStore {
                            n_train: split.train.len(),
                            n_validation: split.validation.len(),
                            ..store
                        },
                        CacheOutcome::Loaded,
                    ))
                }
                Ok(store) => {
                    log::warn!(
                        "graph cache {} was built for delta {} / other inputs; rebuilding for delta {delta}",
                        path.display(),
                        store.key.delta
                    );
                    outcome = CacheOutcome::Rebuilt;
                }
                Err(e) => {
                    log::warn!("ignoring unreadable graph cache: {e}");
                    outcome = CacheOutcome::Rebuilt;
                }
            }
        }
    }
    let docs: Vec<&Document> = split.all_documents().collect();
    let store = GraphStore {
        key,
        graphs: build_graphs(&docs, embeddings, delta)?,
        n_train: split.train.len(),
        n_validation: split.validation.len(),
    };
    if let Some(path) = cache_path {
        save_graph_cache(&store, path)?;
    }
    Ok((store, outcome))
}

/// Layout: `GINOGRAPH1`, corpus hash, embedding hash, delta (`f32`), train and
/// validation counts, document count, then per document the node count, node
/// ids, edge count and `(i, j, f32 weight)` triples. Integers are `u32` LE.
pub fn encode_graph_store(store: &GraphStore) -> Vec<u8> {
    let mut w = Writer::new();
    w.bytes(GRAPH_MAGIC.as_bytes());
    w.str(&store.key.corpus_hash);
    w.str(&store.key.embedding_hash);
    w.f32(store.key.delta);
    w.len_u32(store.n_train);
    w.len_u32(store.n_validation);
    w.len_u32(store.graphs.len());
    for g in &store.graphs {
        w.len_u32(g.node_words.len());
        for &id in &g.node_words {
            w.u32(id);
        }
        w.len_u32(g.edges.len());
        for &(i, j, x) in &g.edges {
            w.u32(i);
            w.u32(j);
            w.f32(x);
        }
    }
    w.finish()
}

pub fn decode_graph_store(bytes: &[u8]) -> std::result::Result<GraphStore, FormatError> {
    let mut r = Reader::new(bytes);
    r.magic(GRAPH_MAGIC)?;
    let corpus_hash = r.str("corpus hash")?;
    let embedding_hash = r.str("embedding hash")?;
    let delta = r.f32("delta")?;
    let n_train = r.u32("train count")? as usize;
    let n_validation = r.u32("validation count")? as usize;
    let n = r.len(8, "graph count")?;
    let mut graphs = Vec::with_capacity(n);
    for _ in 0..n {
        let nodes = r.len(4, "node ids")?;
        let node_words = (0..nodes).map(|_| r.u32("node id")).collect::<std::result::Result<Vec<_>, _>>()?;
        let ne = r.len(12, "edges")?;
        let mut edges = Vec::with_capacity(ne);
        for _ in 0..ne {
            let (i, j, x) = (r.u32("edge")?, r.u32("edge")?, r.f32("edge weight")?);
            if i >= j || j as usize >= nodes {
                return Err(FormatError::Malformed(format!("edge ({i}, {j}) invalid for {nodes} nodes")));
            }
            edges.push((i, j, x));
        }
        graphs.push(DocumentGraph {
            node_words,
            edges,
            delta,
        });
    }
    r.expect_end()?;
    if n_train + n_validation > n {
        return Err(FormatError::Malformed("split counts exceed graph count".into()));
    }
    Ok(GraphStore {
        key: GraphKey {
            corpus_hash,
            embedding_hash,
            delta,
        },
        graphs,
        n_train,
        n_validation,
    })
}

pub fn save_graph_cache(store: &GraphStore, path: &Path) -> Result<()> {
    fs::write(path, encode_graph_store(store)).map_err(|source| GraphError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_graph_cache(path: &Path) -> Result<GraphStore> {
    let bytes = fs::read(path).map_err(|source| GraphError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode_graph_store(&bytes).map_err(|source| GraphError::Format {
        path: path.to_path_buf(),
        source,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct DensityReport {
    pub documents: usize,
    pub mean_nodes: f64,
    pub mean_edges: f64,
    pub mean_density: f64,
    pub density: Vec<f64>,
}

pub fn graph_density_report(graphs: &[DocumentGraph]) -> Result<DensityReport> {
    if graphs.is_empty() {
        return Err(GraphError::EmptyStore);
    }
    let n = graphs.len() as f64;
    let density: Vec<f64> = graphs.iter().map(DocumentGraph::density).collect();
    Ok(DensityReport {
        documents: graphs.len(),
        mean_nodes: graphs.iter().map(|g| g.node_count() as f64).sum::<f64>() / n,
        mean_edges: graphs.iter().map(|g| g.edge_count() as f64).sum::<f64>() / n,
        mean_density: density.iter().sum::<f64>() / n,
        density,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn emb(rows: &[&[f32]]) -> EmbeddingMatrix {
        EmbeddingMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn orthogonal_words_are_not_joined() {
        let e = emb(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let g = graph_from_nodes(vec![0, 1], &e, 0.5).unwrap();
        assert_eq!((g.node_count(), g.edge_count()), (2, 0));
    }

    #[test]
    fn identical_words_get_unit_weight() {
        let e = emb(&[&[0.3, 0.4], &[0.3, 0.4]]);
        let g = graph_from_nodes(vec![0, 1], &e, 0.5).unwrap();
        assert_eq!(g.edges, vec![(0, 1, 1.0)]);
    }

    #[test]
    fn three_words_threshold_enumeration() {
        // unit vectors with pairwise cosines 0.6 (0,1), 0.3 (0,2), 0.8 (1,2)
        // are constructed through a Cholesky factor of the Gram matrix.
        let gram = [[1.0f64, 0.6, 0.3], [0.6, 1.0, 0.8], [0.3, 0.8, 1.0]];
        let l00 = 1.0;
        let l10 = gram[1][0];
        let l11 = (1.0 - l10 * l10).sqrt();
        let l20 = gram[2][0];
        let l21 = (gram[2][1] - l20 * l10) / l11;
        let l22 = (1.0 - l20 * l20 - l21 * l21).sqrt();
        let rows = [
            vec![l00 as f32, 0.0, 0.0],
            vec![l10 as f32, l11 as f32, 0.0],
            vec![l20 as f32, l21 as f32, l22 as f32],
        ];
        let e = EmbeddingMatrix::from_rows(&rows).unwrap();
        let g = graph_from_nodes(vec![0, 1, 2], &e, 0.4).unwrap();
        assert_eq!(g.edge_count(), 2);
        let w: Vec<(u32, u32)> = g.edges.iter().map(|e| (e.0, e.1)).collect();
        assert_eq!(w, vec![(0, 1), (1, 2)]);
        assert!((g.edges[0].2 - 0.6).abs() < 1e-6);
        assert!((g.edges[1].2 - 0.8).abs() < 1e-6);
    }

    #[test]
    fn similarity_equal_to_threshold_is_kept() {
        let e = emb(&[&[1.0, 0.0], &[1.0, 1.0]]);
        let sim = cosine_similarity(e.row(0), e.row(1)) as f32;
        let g = graph_from_nodes(vec![0, 1], &e, sim).unwrap();
        assert_eq!(g.edge_count(), 1);
    }

    #[test]
    fn single_word_document_is_one_isolated_node() {
        let e = emb(&[&[1.0, 0.0]]);
        let d = Document::from_tokens(vec![0, 0, 0], 0);
        let g = build_document_graph(&d, &e, 0.0).unwrap();
        assert_eq!((g.node_count(), g.edge_count()), (1, 0));
    }

    #[test]
    fn nodes_follow_first_occurrence() {
        let e = emb(&[&[1.0, 0.0], &[0.0, 1.0], &[1.0, 1.0]]);
        let d = Document::from_tokens(vec![2, 0, 2, 1, 0], 0);
        let g = build_document_graph(&d, &e, 0.1).unwrap();
        assert_eq!(g.node_words, vec![2, 0, 1]);
    }

    #[test]
    fn negative_threshold_rejected() {
        let e = emb(&[&[1.0, 0.0]]);
        assert!(matches!(graph_from_nodes(vec![0], &e, -0.1), Err(GraphError::Threshold(_))));
        assert!(graph_from_nodes(vec![0], &e, f32::NAN).is_err());
    }

    #[test]
    fn density_report_means() {
        let g = DocumentGraph {
            node_words: vec![0, 1, 2],
            edges: vec![(0, 1, 0.5), (1, 2, 0.7)],
            delta: 0.4,
        };
        let r = graph_density_report(std::slice::from_ref(&g)).unwrap();
        assert_eq!((r.mean_nodes, r.mean_edges), (3.0, 2.0));
        assert!((r.mean_density - 2.0 / 3.0).abs() < 1e-12);
        assert!(graph_density_report(&[]).is_err());
    }

    #[test]
    fn threshold_above_one_drops_every_edge() {
        let e = emb(&[&[1.0, 0.0], &[1.0, 0.0], &[1.0, 0.1]]);
        let g = graph_from_nodes(vec![0, 1, 2], &e, 1.0 + f32::EPSILON).unwrap();
        assert_eq!(g.edge_count(), 0);
    }

    #[test]
    fn permutation_relabels_edges() {
        let g = DocumentGraph {
            node_words: vec![10, 11, 12],
            edges: vec![(0, 1, 0.5), (1, 2, 0.7)],
            delta: 0.0,
        };
        let p = g.permuted(&[2, 0, 1]);
        assert_eq!(p.node_words, vec![12, 10, 11]);
        assert_eq!(p.edges, vec![(0, 2, 0.7), (1, 2, 0.5)]);
    }
}
