//! Raw text to vocabulary-indexed documents.
//!
//! The pipeline lowercases, replaces punctuation with spaces, lemmatizes,
//! drops words shorter than three characters, keeps the most frequent
//! `max_vocab` words and finally drops documents left with fewer than three
//! tokens. TF-IDF uses raw counts times the smoothed idf
//! `ln((1 + N) / (1 + df)) + 1` without normalization; when a corpus is split,
//! idf is fit on the training documents only and applied to every split.

mod cache;
pub mod lemmatizer;
mod split;
mod tfidf;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use crate::binio::FormatError;

pub use cache::{load_corpus, read_lines, save_corpus, write_vocabulary, CORPUS_MAGIC};
pub use split::{split_corpus, SplitRatios};
pub use tfidf::{compute_tfidf, Idf};

pub type WordId = u32;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("corpus empty after preprocessing")]
    Empty,
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
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("inconsistent corpus: {0}")]
    Inconsistent(String),
}

impl CorpusError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        CorpusError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, CorpusError>;

#[derive(Clone, Debug, PartialEq)]
pub struct Vocabulary {
    words: Vec<String>,
    index_of: HashMap<String, WordId>,
    /// Documents containing each word.
    pub doc_frequency: Vec<u32>,
}

impl Vocabulary {
    pub fn new(words: Vec<String>) -> Result<Self> {
        let mut index_of = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            if index_of.insert(w.clone(), i as WordId).is_some() {
                return Err(CorpusError::Inconsistent(format!("duplicate vocabulary word `{w}`")));
            }
        }
        let doc_frequency = vec![0; words.len()];
        Ok(Vocabulary {
            words,
            index_of,
            doc_frequency,
        })
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn word(&self, id: WordId) -> &str {
        &self.words[id as usize]
    }

    pub fn id(&self, word: &str) -> Option<WordId> {
        self.index_of.get(word).copied()
    }

    /// Recounts document frequencies over `documents`.
    pub fn refit_doc_frequency(&mut self, documents: &[Document]) {
        self.doc_frequency = vec![0; self.words.len()];
        for d in documents {
            for &(id, _) in &d.counts {
                self.doc_frequency[id as usize] += 1;
            }
        }
    }

    /// SHA-256 over the newline-joined word list.
    pub fn content_hash(&self) -> String {
        crate::binio::sha256_hex(self.words.join("\n").as_bytes())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Document {
    /// Vocabulary ids in text order.
    pub token_ids: Vec<WordId>,
    /// `(id, count)` sorted by id.
    pub counts: Vec<(WordId, u32)>,
    /// `(id, weight)` sorted by id, nonzero exactly where `counts` is.
    pub tfidf: Vec<(WordId, f64)>,
    pub label: Option<u32>,
    /// Zero-based line of the raw input this document came from.
    pub source: usize,
}

impl Document {
    pub fn from_tokens(token_ids: Vec<WordId>, source: usize) -> Self {
        let mut counts: BTreeMap<WordId, u32> = BTreeMap::new();
        for &t in &token_ids {
            *counts.entry(t).or_default() += 1;
        }
        Document {
            token_ids,
            counts: counts.into_iter().collect(),
            tfidf: Vec::new(),
            label: None,
            source,
        }
    }

    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }

    /// Distinct ids in order of first occurrence.
    pub fn distinct_in_order(&self) -> Vec<WordId> {
        let mut seen = HashSet::new();
        self.token_ids.iter().copied().filter(|t| seen.insert(*t)).collect()
    }

    pub fn count_of(&self, id: WordId) -> u32 {
        self.counts
            .binary_search_by_key(&id, |&(w, _)| w)
            .map(|i| self.counts[i].1)
            .unwrap_or(0)
    }

    /// Dense TF-IDF row of length `v`.
    pub fn tfidf_dense(&self, v: usize) -> Vec<f64> {
        let mut out = vec![0.0; v];
        for &(id, w) in &self.tfidf {
            out[id as usize] = w;
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorpusSplit {
    pub vocabulary: Vocabulary,
    pub train: Vec<Document>,
    pub validation: Vec<Document>,
    pub test: Vec<Document>,
    /// Class names indexed by label id, empty when the corpus is unlabeled.
    pub label_names: Vec<String>,
}

impl CorpusSplit {
    /// Number of distinct labels ("golden" topic count); 0 without labels.
    pub fn k_gold(&self) -> usize {
        self.label_names.len()
    }

    pub fn has_labels(&self) -> bool {
        !self.label_names.is_empty()
    }

    pub fn len(&self) -> usize {
        self.train.len() + self.validation.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Training, validation and test documents in that order.
    pub fn all_documents(&self) -> impl Iterator<Item = &Document> {
        self.train.iter().chain(&self.validation).chain(&self.test)
    }

    /// Fits idf on the training split and applies it to all three splits.
    pub fn fit_tfidf_on_train(&mut self) {
        let idf = Idf::fit(&self.train, self.vocabulary.len());
        for d in self.train.iter_mut().chain(&mut self.validation).chain(&mut self.test) {
            idf.apply(d);
        }
    }

    pub fn content_hash(&self) -> String {
        crate::binio::sha256_hex(&cache::encode(self))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PreprocessOptions {
    pub max_vocab: usize,
    pub min_word_len: usize,
    pub min_doc_len: usize,
    pub lemmatize: bool,
    /// Removed after lemmatization when present. Off by default.
    pub stopwords: Option<HashSet<String>>,
}

impl Default for PreprocessOptions {
    fn default() -> Self {
        PreprocessOptions {
            max_vocab: 2000,
            min_word_len: 3,
            min_doc_len: 3,
            lemmatize: true,
            stopwords: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Preprocessed {
    pub vocabulary: Vocabulary,
    pub documents: Vec<Document>,
    /// Corpus frequency of every surviving word, vocabulary or not.
    pub word_frequency: BTreeMap<String, u64>,
    pub dropped: usize,
}

/// Lowercase, punctuation to spaces, whitespace split, optional lemmatization.
pub fn tokenize(text: &str, lemmatize: bool) -> Vec<String> {
    let cleaned: String = text
        .chars()
        .flat_map(char::to_lowercase)
        .map(|c| if c.is_alphanumeric() || c.is_whitespace() { c } else { ' ' })
        .collect();
    cleaned
        .split_whitespace()
        .map(|t| if lemmatize { lemmatizer::lemmatize(t) } else { t.to_string() })
        .collect()
}

pub fn preprocess<S: AsRef<str> + Sync>(raw_documents: &[S], options: &PreprocessOptions) -> Result<Preprocessed> {
    if options.max_vocab == 0 {
        return Err(CorpusError::Config("max_vocab must be at least 1".into()));
    }
    let tokenized: Vec<Vec<String>> = raw_documents
        .par_iter()
        .map(|text| {
            tokenize(text.as_ref(), options.lemmatize)
                .into_iter()
                .filter(|t| t.chars().count() >= options.min_word_len)
                .filter(|t| options.stopwords.as_ref().is_none_or(|s| !s.contains(t)))
                .collect()
        })
        .collect();

    let mut word_frequency: BTreeMap<String, u64> = BTreeMap::new();
    for doc in &tokenized {
        for t in doc {
            *word_frequency.entry(t.clone()).or_default() += 1;
        }
    }
    let mut ranked: Vec<(&String, u64)> = word_frequency.iter().map(|(w, &c)| (w, c)).collect();
    // BTreeMap order is lexicographic; a stable sort keeps it for ties.
    ranked.sort_by_key(|&(_, c)| std::cmp::Reverse(c));
    let mut words: Vec<String> = ranked.iter().take(options.max_vocab).map(|(w, _)| (*w).clone()).collect();
    words.sort();
    let mut vocabulary = Vocabulary::new(words)?;

    let mut documents = Vec::new();
    let mut dropped = 0;
    for (source, doc) in tokenized.iter().enumerate() {
        let ids: Vec<WordId> = doc.iter().filter_map(|t| vocabulary.id(t)).collect();
        if ids.len() < options.min_doc_len {
            dropped += 1;
            continue;
        }
        documents.push(Document::from_tokens(ids, source));
    }
    if documents.is_empty() {
        return Err(CorpusError::Empty);
    }
    vocabulary.refit_doc_frequency(&documents);
    Ok(Preprocessed {
        vocabulary,
        documents,
        word_frequency,
        dropped,
    })
}

/// Maps raw label strings to dense ids. Numeric labels are ordered
/// numerically, anything else lexicographically.
pub fn label_ids(raw: &[String]) -> (Vec<String>, Vec<u32>) {
    let mut names: Vec<String> = raw.iter().map(|s| s.trim().to_string()).collect::<HashSet<_>>().into_iter().collect();
    if names.iter().all(|n| n.parse::<i64>().is_ok()) {
        names.sort_by_key(|n| n.parse::<i64>().unwrap());
    } else {
        names.sort();
    }
    let index: HashMap<&str, u32> = names.iter().enumerate().map(|(i, n)| (n.as_str(), i as u32)).collect();
    let ids = raw.iter().map(|s| index[s.trim()]).collect();
    (names, ids)
}

/// Runs the full ingest: preprocess, attach labels, split, fit TF-IDF on train.
pub fn build_corpus<S: AsRef<str> + Sync>(
    raw_documents: &[S],
    labels: Option<&[String]>,
    options: &PreprocessOptions,
    ratios: SplitRatios,
    seed: u64,
) -> Result<(CorpusSplit, usize)> {
    if let Some(labels) = labels {
        if labels.len() != raw_documents.len() {
            return Err(CorpusError::Inconsistent(format!(
                "{} labels for {} documents",
                labels.len(),
                raw_documents.len()
            )));
        }
    }
    let Preprocessed {
        vocabulary,
        mut documents,
        dropped,
        ..
    } = preprocess(raw_documents, options)?;
    let mut label_names = Vec::new();
    if let Some(labels) = labels {
        let kept: Vec<String> = documents.iter().map(|d| labels[d.source].clone()).collect();
        let (names, ids) = label_ids(&kept);
        for (d, id) in documents.iter_mut().zip(ids) {
            d.label = Some(id);
        }
        label_names = names;
    }
    let mut split = split_corpus(documents, vocabulary, ratios, seed)?;
    split.label_names = label_names;
    split.fit_tfidf_on_train();
    Ok((split, dropped))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn short_documents_are_dropped() {
        let out = preprocess(&["The cat sat.", "a b"], &PreprocessOptions::default()).unwrap();
        assert_eq!(out.documents.len(), 1);
        assert_eq!(out.dropped, 1);
        assert_eq!(out.documents[0].source, 0);
        let words: Vec<&str> = out.documents[0].token_ids.iter().map(|&i| out.vocabulary.word(i)).collect();
        assert_eq!(words, ["the", "cat", "sat"]);
    }

    #[test]
    fn case_and_plural_fold_to_one_lemma() {
        let out = preprocess(&["Dogs dogs DOGS run"], &PreprocessOptions::default()).unwrap();
        let v = &out.vocabulary;
        let d = &out.documents[0];
        let dog = v.id("dog").unwrap();
        let run = v.id("run").unwrap();
        assert_eq!(d.token_ids, vec![dog, dog, dog, run]);
        assert_eq!(d.count_of(dog), 3);
        assert_eq!(d.count_of(run), 1);
    }

    #[test]
    fn vocabulary_keeps_most_frequent_words() {
        // word i appears i+1 times: 5000 distinct words.
        let mut docs = Vec::new();
        let mut line = String::new();
        for i in 0..5000 {
            let w = format!("w{i:05}x");
            for _ in 0..=(i % 50) {
                line.push_str(&w);
                line.push(' ');
            }
            if i % 10 == 9 {
                docs.push(std::mem::take(&mut line));
            }
        }
        let out = preprocess(&docs, &PreprocessOptions::default()).unwrap();
        assert_eq!(out.vocabulary.len(), 2000);
        let min_in = out
            .vocabulary
            .words()
            .iter()
            .map(|w| out.word_frequency[w])
            .min()
            .unwrap();
        for (w, &f) in &out.word_frequency {
            if out.vocabulary.id(w).is_none() {
                assert!(f <= min_in, "{w} excluded with frequency {f} > {min_in}");
            }
        }
        // ties at the cutoff are broken lexicographically
        let cutoff: Vec<&String> = out.word_frequency.iter().filter(|(_, &f)| f == min_in).map(|(w, _)| w).collect();
        let kept: Vec<bool> = cutoff.iter().map(|w| out.vocabulary.id(w).is_some()).collect();
        assert!(kept.windows(2).all(|p| p[0] >= p[1]), "kept tie words must precede dropped ones");
    }

    #[test]
    fn counts_sum_to_length_and_ids_in_vocabulary() {
        let out = preprocess(
            &["alpha beta gamma alpha", "beta beta delta epsilon", "zeta eta theta"],
            &PreprocessOptions {
                max_vocab: 4,
                ..Default::default()
            },
        )
        .unwrap();
        for d in &out.documents {
            assert_eq!(d.counts.iter().map(|c| c.1 as usize).sum::<usize>(), d.len());
            assert!(d.token_ids.iter().all(|&t| (t as usize) < out.vocabulary.len()));
            assert!(d.len() >= 3);
        }
    }

    #[test]
    fn nothing_survives_is_an_error() {
        assert!(matches!(
            preprocess(&["a b c", "it is so"], &PreprocessOptions::default()),
            Err(CorpusError::Empty)
        ));
    }

    #[test]
    fn stopwords_are_optional() {
        let sw: HashSet<String> = ["the".to_string()].into();
        let out = preprocess(
            &["the cat sat on the mat"],
            &PreprocessOptions {
                stopwords: Some(sw),
                ..Default::default()
            },
        )
        .unwrap();
        assert!(out.vocabulary.id("the").is_none());
        assert!(out.vocabulary.id("cat").is_some());
    }

    #[test]
    fn numeric_labels_sort_numerically() {
        let raw: Vec<String> = ["10", "2", "2", "1"].iter().map(|s| s.to_string()).collect();
        let (names, ids) = label_ids(&raw);
        assert_eq!(names, ["1", "2", "10"]);
        assert_eq!(ids, [2, 1, 1, 0]);
    }
}
