//! Word embedding tables aligned to a [`Vocabulary`] and the cosine
//! similarity used for document graphs and embedding-based diversity.
//!
//! Text files hold `word v1 v2 ... vdim` per line (an optional word2vec
//! `count dim` first line is skipped). Vocabulary words missing from the file
//! get a row drawn uniformly from `[-0.1, 0.1]` using a stream keyed by the
//! seed and word id, so a fill never depends on which other words are absent.

use std::fs;
use std::path::{Path, PathBuf};

use rand_distr::{Distribution, Uniform};
use thiserror::Error;

use crate::binio::{sha256_hex, FormatError, Reader, Writer};
use crate::corpus::Vocabulary;
use crate::rng::{self, Stream};

pub const EMBEDDING_MAGIC: &str = "GINOEMB1";
const OOV_BOUND: f32 = 0.1;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: expected {expected} components, found {found}")]
    Dimension { line: usize, expected: usize, found: usize },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("embedding file shares no words with the vocabulary")]
    NoOverlap,
    #[error("{0}")]
    Format(#[from] FormatError),
    #[error("embedding cache was built for a different vocabulary")]
    VocabularyMismatch,
    #[error("invalid embedding table: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, EmbeddingError>;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OovPolicy {
    /// Rows drawn from `uniform(-bound, bound)` keyed by `(seed, word id)`.
    SeededUniform { seed: u64, bound: f32 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingMatrix {
    dim: usize,
    vectors: Vec<f32>,
    oov: Vec<bool>,
    pub oov_policy: OovPolicy,
}

impl EmbeddingMatrix {
    /// Table from explicit rows (no OOV fills).
    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if dim == 0 {
            return Err(EmbeddingError::Invalid("empty table".into()));
        }
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != dim) {
            return Err(EmbeddingError::Dimension {
                line: i + 1,
                expected: dim,
                found: r.len(),
            });
        }
        let vectors: Vec<f32> = rows.concat();
        if vectors.iter().any(|x| !x.is_finite()) {
            return Err(EmbeddingError::Invalid("non-finite entry".into()));
        }
        Ok(EmbeddingMatrix {
            dim,
            vectors,
            oov: vec![false; rows.len()],
            oov_policy: OovPolicy::SeededUniform {
                seed: 0,
                bound: OOV_BOUND,
            },
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.oov.len()
    }

    pub fn is_empty(&self) -> bool {
        self.oov.is_empty()
    }

    pub fn row(&self, id: u32) -> &[f32] {
        let i = id as usize;
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    pub fn is_oov(&self, id: u32) -> bool {
        self.oov[id as usize]
    }

    pub fn oov_count(&self) -> usize {
        self.oov.iter().filter(|&&b| b).count()
    }

    pub fn similarity(&self, a: u32, b: u32) -> f64 {
        cosine_similarity(self.row(a), self.row(b))
    }

    pub fn content_hash(&self) -> String {
        let mut w = Writer::new();
        w.len_u32(self.dim);
        for &x in &self.vectors {
            w.f32(x);
        }
        sha256_hex(&w.finish())
    }
}

/// `u.v / (|u| |v|)` clamped to `[-1, 1]`; 0 when either vector has zero norm.
pub fn cosine_similarity(u: &[f32], v: &[f32]) -> f64 {
    debug_assert_eq!(u.len(), v.len());
    let (mut dot, mut nu, mut nv) = (0.0f64, 0.0f64, 0.0f64);
    for (&a, &b) in u.iter().zip(v) {
        let (a, b) = (a as f64, b as f64);
        dot += a * b;
        nu += a * a;
        nv += b * b;
    }
    if nu == 0.0 || nv == 0.0 {
        return 0.0;
    }
    (dot / (nu.sqrt() * nv.sqrt())).clamp(-1.0, 1.0)
}

fn oov_row(seed: u64, id: u32, dim: usize) -> Vec<f32> {
    let mut rng = rng::stream(seed, Stream::Embedding, id as u64);
    let dist = Uniform::new_inclusive(-OOV_BOUND, OOV_BOUND).expect("finite bound");
    (0..dim).map(|_| dist.sample(&mut rng)).collect()
}

/// Parses the text format and aligns rows to `vocabulary`.
pub fn parse_embeddings(text: &str, vocabulary: &Vocabulary, seed: u64) -> Result<EmbeddingMatrix> {
    let mut dim: Option<usize> = None;
    let mut rows: Vec<Option<Vec<f32>>> = vec![None; vocabulary.len()];
    for (i, line) in text.lines().enumerate() {
        let mut parts = line.split_whitespace();
        let Some(word) = parts.next() else { continue };
        let values: Vec<&str> = parts.collect();
        if i == 0 && values.len() == 1 && word.parse::<usize>().is_ok() && values[0].parse::<usize>().is_ok() {
            continue;
        }
        match dim {
            None => dim = Some(values.len()),
            Some(d) if d != values.len() => {
                return Err(EmbeddingError::Dimension {
                    line: i + 1,
                    expected: d,
                    found: values.len(),
                })
            }
            _ => {}
        }
        let Some(id) = vocabulary.id(word) else { continue };
        if rows[id as usize].is_some() {
            continue;
        }
        let vec = values
            .iter()
            .map(|s| s.parse::<f32>())
            .collect::<std::result::Result<Vec<f32>, _>>()
            .map_err(|e| EmbeddingError::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
        if vec.iter().any(|x| !x.is_finite()) {
            return Err(EmbeddingError::Parse {
                line: i + 1,
                message: "non-finite component".into(),
            });
        }
        rows[id as usize] = Some(vec);
    }
    let dim = match dim {
        Some(d) if d > 0 => d,
        _ => return Err(EmbeddingError::Invalid("no vectors in file".into())),
    };
    if rows.iter().all(Option::is_none) {
        return Err(EmbeddingError::NoOverlap);
    }
    let mut vectors = Vec::with_capacity(vocabulary.len() * dim);
    let mut oov = Vec::with_capacity(vocabulary.len());
    for (id, row) in rows.into_iter().enumerate() {
        oov.push(row.is_none());
        vectors.extend(row.unwrap_or_else(|| oov_row(seed, id as u32, dim)));
    }
    Ok(EmbeddingMatrix {
        dim,
        vectors,
        oov,
        oov_policy: OovPolicy::SeededUniform {
            seed,
            bound: OOV_BOUND,
        },
    })
}

pub fn load_embeddings(path: &Path, vocabulary: &Vocabulary, seed: u64) -> Result<EmbeddingMatrix> {
    let text = fs::read_to_string(path).map_err(|source| EmbeddingError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_embeddings(&text, vocabulary, seed)
}

/// Writes the table in the text format, one vocabulary word per line.
pub fn write_embeddings_text(matrix: &EmbeddingMatrix, vocabulary: &Vocabulary, path: &Path) -> Result<()> {
    let mut out = String::new();
    for (id, word) in vocabulary.words().iter().enumerate() {
        out.push_str(word);
        for x in matrix.row(id as u32) {
            out.push(' ');
            out.push_str(&x.to_string());
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|source| EmbeddingError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Binary cache: `GINOEMB1`, vocabulary hash, OOV seed, `V`, `dim`, one OOV
/// flag byte per row, then `V * dim` little-endian `f32`.
pub fn save_embedding_cache(matrix: &EmbeddingMatrix, vocabulary: &Vocabulary, path: &Path) -> Result<()> {
    let mut w = Writer::new();
    w.bytes(EMBEDDING_MAGIC.as_bytes());
    w.str(&vocabulary.content_hash());
    let OovPolicy::SeededUniform { seed, .. } = matrix.oov_policy;
    w.u64(seed);
    w.len_u32(matrix.len());
    w.len_u32(matrix.dim);
    for &f in &matrix.oov {
        w.bytes(&[f as u8]);
    }
    for &x in &matrix.vectors {
        w.f32(x);
    }
    fs::write(path, w.finish()).map_err(|source| EmbeddingError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_embedding_cache(path: &Path, vocabulary: &Vocabulary) -> Result<EmbeddingMatrix> {
    let bytes = fs::read(path).map_err(|source| EmbeddingError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut r = Reader::new(&bytes);
    r.magic(EMBEDDING_MAGIC)?;
    if r.str("vocabulary hash")? != vocabulary.content_hash() {
        return Err(EmbeddingError::VocabularyMismatch);
    }
    let seed = r.u64("seed")?;
    let v = r.u32("rows")? as usize;
    let dim = r.u32("dim")? as usize;
    if v != vocabulary.len() {
        return Err(EmbeddingError::VocabularyMismatch);
    }
    let oov = r.take(v, "oov flags")?.iter().map(|&b| b != 0).collect();
    let mut vectors = Vec::with_capacity(v * dim);
    for _ in 0..v * dim {
        vectors.push(r.f32("vectors")?);
    }
    r.expect_end()?;
    Ok(EmbeddingMatrix {
        dim,
        vectors,
        oov,
        oov_policy: OovPolicy::SeededUniform {
            seed,
            bound: OOV_BOUND,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn vocab(words: &[&str]) -> Vocabulary {
        Vocabulary::new(words.iter().map(|s| s.to_string()).collect()).unwrap()
    }

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 1.0]), 0.0);
        assert!((cosine_similarity(&[1.0, 2.0], &[2.0, 4.0]) - 1.0).abs() < 1e-12);
        assert!((cosine_similarity(&[1.0, 0.0], &[1.0, 1.0]) - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-8);
        assert_eq!(cosine_similarity(&[0.0, 0.0], &[1.0, 1.0]), 0.0);
    }

    #[test]
    fn full_coverage_copies_rows() {
        let v = vocab(&["cat", "dog", "fish"]);
        let m = parse_embeddings("dog 0.5 1\ncat 1 2\nfish -1 0.25\nextra 9 9\n", &v, 1).unwrap();
        assert_eq!((m.len(), m.dim()), (3, 2));
        assert_eq!(m.oov_count(), 0);
        assert_eq!(m.row(v.id("cat").unwrap()), &[1.0, 2.0]);
        assert_eq!(m.row(v.id("fish").unwrap()), &[-1.0, 0.25]);
    }

    #[test]
    fn missing_word_fill_is_reproducible() {
        let v = vocab(&["cat", "dog", "fish"]);
        let text = "3 2\ncat 1 2\nfish 3 4\n";
        let a = parse_embeddings(text, &v, 42).unwrap();
        let b = parse_embeddings(text, &v, 42).unwrap();
        let dog = v.id("dog").unwrap();
        assert_eq!(a.oov_count(), 1);
        assert!(a.is_oov(dog));
        assert_eq!(a.row(dog), b.row(dog));
        assert!(a.row(dog).iter().all(|x| x.abs() <= 0.1));
    }

    #[test]
    fn ragged_file_is_a_format_error() {
        let v = vocab(&["cat"]);
        assert!(matches!(
            parse_embeddings("cat 1 2\ndog 1 2 3\n", &v, 0),
            Err(EmbeddingError::Dimension { line: 2, expected: 2, found: 3 })
        ));
    }

    #[test]
    fn no_overlap_is_rejected() {
        let v = vocab(&["cat"]);
        assert!(matches!(parse_embeddings("dog 1 2\n", &v, 0), Err(EmbeddingError::NoOverlap)));
    }

    #[test]
    fn binary_cache_round_trip() {
        let v = vocab(&["cat", "dog", "fish"]);
        let m = parse_embeddings("cat 1 2\nfish 3 4\n", &v, 5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.bin");
        save_embedding_cache(&m, &v, &path).unwrap();
        assert_eq!(load_embedding_cache(&path, &v).unwrap(), m);
        let other = vocab(&["cat", "dog", "eel"]);
        assert!(matches!(load_embedding_cache(&path, &other), Err(EmbeddingError::VocabularyMismatch)));
    }

    fn vecs() -> impl Strategy<Value = (Vec<f32>, Vec<f32>)> {
        (1usize..16).prop_flat_map(|n| {
            (
                prop::collection::vec(-10.0f32..10.0, n),
                prop::collection::vec(-10.0f32..10.0, n),
            )
        })
    }

    proptest! {
        #[test]
        fn cosine_symmetric_and_bounded((u, v) in vecs()) {
            let a = cosine_similarity(&u, &v);
            prop_assert_eq!(a, cosine_similarity(&v, &u));
            prop_assert!((-1.0..=1.0).contains(&a));
        }

        #[test]
        fn cosine_scale_invariant((u, v) in vecs(), c in 0.01f32..100.0) {
            let scaled: Vec<f32> = u.iter().map(|x| x * c).collect();
            let nonzero = u.iter().any(|&x| x.abs() > 1e-3) && v.iter().any(|&x| x.abs() > 1e-3);
            prop_assume!(nonzero);
            prop_assert!((cosine_similarity(&scaled, &v) - cosine_similarity(&u, &v)).abs() < 1e-6);
        }

        #[test]
        fn self_similarity_is_one(u in prop::collection::vec(-10.0f32..10.0, 1..16)) {
            prop_assume!(u.iter().any(|&x| x.abs() > 1e-3));
            prop_assert!((cosine_similarity(&u, &u) - 1.0).abs() < 1e-6);
        }
    }
}
