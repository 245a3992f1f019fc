//! Generated corpora with known topics, for recovery tests and demos.
//!
//! Each topic owns a disjoint block of invented words. A document draws its
//! topic mixture from a symmetric Dirichlet and then each token from the
//! chosen topic's block, occasionally from a shared background block. Word
//! vectors are `sqrt(s) e_topic + sqrt(1 - s) e_word` with orthonormal `e_*`,
//! so two words of one topic have cosine `s` and words of different topics
//! are orthogonal.

use std::collections::HashSet;
use std::fmt::Write as _;

use rand::Rng;
use rand_distr::{Distribution, Gamma};

use crate::corpus::Vocabulary;
use crate::embedding::{EmbeddingError, EmbeddingMatrix};
use crate::rng::{self, Stream};

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticConfig {
    pub topics: usize,
    pub words_per_topic: usize,
    /// Words shared by every topic.
    pub background_words: usize,
    /// Probability that a token comes from the background block.
    pub background_rate: f64,
    pub documents: usize,
    pub min_len: usize,
    pub max_len: usize,
    /// Symmetric Dirichlet concentration of document mixtures.
    pub concentration: f64,
    /// Cosine similarity of two words in the same topic.
    pub within_similarity: f64,
    pub seed: u64,
}

impl SyntheticConfig {
    /// Three topics over thirty words.
    pub fn three_topics(seed: u64) -> Self {
        SyntheticConfig {
            topics: 3,
            words_per_topic: 10,
            background_words: 0,
            background_rate: 0.0,
            documents: 1000,
            min_len: 20,
            max_len: 40,
            concentration: 0.1,
            within_similarity: 0.9,
            seed,
        }
    }

    /// Five topics, a background block and 2000 documents.
    pub fn five_topics_with_background(seed: u64) -> Self {
        SyntheticConfig {
            topics: 5,
            words_per_topic: 40,
            background_words: 60,
            background_rate: 0.3,
            documents: 2000,
            min_len: 40,
            max_len: 120,
            concentration: 0.2,
            within_similarity: 0.9,
            seed,
        }
    }

    pub fn vocabulary_size(&self) -> usize {
        self.topics * self.words_per_topic + self.background_words
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticCorpus {
    pub config: SyntheticConfig,
    /// One whitespace-joined document per entry.
    pub documents: Vec<String>,
    /// Dominant topic of each document, as a decimal string.
    pub labels: Vec<String>,
    pub mixtures: Vec<Vec<f64>>,
    /// Word block of each topic.
    pub topic_words: Vec<Vec<String>>,
    pub background: Vec<String>,
}

const CONSONANTS: &[u8] = b"bdfgklmnprtvz";
const VOWELS: &[u8] = b"aeiou";

/// A pronounceable, letters-only word that preprocessing leaves intact.
pub fn invented_word(i: usize) -> String {
    let c = CONSONANTS.len();
    let v = VOWELS.len();
    let mut w = String::new();
    let mut rest = i;
    loop {
        w.push(CONSONANTS[rest % c] as char);
        rest /= c;
        w.push(VOWELS[rest % v] as char);
        rest /= v;
        if rest == 0 {
            break;
        }
        rest -= 1;
    }
    w.push('k');
    w
}

fn dirichlet<R: Rng + ?Sized>(k: usize, concentration: f64, rng: &mut R) -> Vec<f64> {
    let gamma = Gamma::new(concentration, 1.0).expect("positive concentration");
    loop {
        let draws: Vec<f64> = (0..k).map(|_| gamma.sample(rng)).collect();
        let total: f64 = draws.iter().sum();
        if total > 0.0 {
            return draws.into_iter().map(|g| g / total).collect();
        }
    }
}

fn categorical<R: Rng + ?Sized>(p: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &pi) in p.iter().enumerate() {
        acc += pi;
        if u < acc {
            return i;
        }
    }
    p.len() - 1
}

fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    best
}

pub fn generate(config: &SyntheticConfig) -> SyntheticCorpus {
    assert!(config.topics >= 1 && config.words_per_topic >= 1, "empty synthetic topic layout");
    assert!(config.min_len >= 1 && config.min_len <= config.max_len, "bad synthetic length range");
    let mut rng = rng::stream(config.seed, Stream::Synthetic, 0);
    let mut next = 0;
    let mut block = |n: usize| {
        let words: Vec<String> = (next..next + n).map(invented_word).collect();
        next += n;
        words
    };
    let topic_words: Vec<Vec<String>> = (0..config.topics).map(|_| block(config.words_per_topic)).collect();
    let background = block(config.background_words);

    let mut documents = Vec::with_capacity(config.documents);
    let mut labels = Vec::with_capacity(config.documents);
    let mut mixtures = Vec::with_capacity(config.documents);
    for _ in 0..config.documents {
        let theta = dirichlet(config.topics, config.concentration, &mut rng);
        let len = rng.random_range(config.min_len..=config.max_len);
        let mut tokens = Vec::with_capacity(len);
        for _ in 0..len {
            let word = if !background.is_empty() && rng.random::<f64>() < config.background_rate {
                &background[rng.random_range(0..background.len())]
            } else {
                let t = categorical(&theta, &mut rng);
                &topic_words[t][rng.random_range(0..config.words_per_topic)]
            };
            tokens.push(word.as_str());
        }
        documents.push(tokens.join(" "));
        labels.push(argmax(&theta).to_string());
        mixtures.push(theta);
    }
    SyntheticCorpus {
        config: config.clone(),
        documents,
        labels,
        mixtures,
        topic_words,
        background,
    }
}

impl SyntheticCorpus {
    /// `(word, vector)` for every word, topic blocks first.
    pub fn word_vectors(&self) -> Vec<(String, Vec<f32>)> {
        let k = self.config.topics;
        let words: Vec<(Option<usize>, &String)> = self
            .topic_words
            .iter()
            .enumerate()
            .flat_map(|(t, ws)| ws.iter().map(move |w| (Some(t), w)))
            .chain(self.background.iter().map(|w| (None, w)))
            .collect();
        let dim = k + words.len();
        let s = self.config.within_similarity;
        words
            .iter()
            .enumerate()
            .map(|(i, (topic, w))| {
                let mut v = vec![0f32; dim];
                match topic {
                    Some(t) => {
                        v[*t] = s.sqrt() as f32;
                        v[k + i] = (1.0 - s).sqrt() as f32;
                    }
                    None => v[k + i] = 1.0,
                }
                ((*w).clone(), v)
            })
            .collect()
    }

    /// The vectors in word2vec text format (with a count/dimension header).
    pub fn embeddings_text(&self) -> String {
        let vectors = self.word_vectors();
        let mut out = format!("{} {}\n", vectors.len(), vectors[0].1.len());
        for (w, v) in &vectors {
            out.push_str(w);
            for x in v {
                write!(out, " {x}").expect("writing to a String");
            }
            out.push('\n');
        }
        out
    }

    /// Embedding rows aligned with `vocabulary`.
    pub fn embedding_matrix(&self, vocabulary: &Vocabulary) -> Result<EmbeddingMatrix, EmbeddingError> {
        let vectors = self.word_vectors();
        let rows: Option<Vec<Vec<f32>>> = vocabulary
            .words()
            .iter()
            .map(|w| vectors.iter().find(|(x, _)| x == w).map(|(_, v)| v.clone()))
            .collect();
        match rows {
            Some(rows) => EmbeddingMatrix::from_rows(&rows),
            None => Err(EmbeddingError::Invalid("vocabulary contains words the generator never produced".into())),
        }
    }

    /// Documents built from a single topic's block, `per_topic` for each
    /// topic, with the topic index.
    pub fn probe_documents(&self, per_topic: usize, len: usize, seed: u64) -> Vec<(String, usize)> {
        let mut rng = rng::stream(seed, Stream::Synthetic, 1);
        let mut out = Vec::with_capacity(per_topic * self.config.topics);
        for (t, words) in self.topic_words.iter().enumerate() {
            for _ in 0..per_topic {
                let doc: Vec<&str> = (0..len).map(|_| words[rng.random_range(0..words.len())].as_str()).collect();
                out.push((doc.join(" "), t));
            }
        }
        out
    }
}

/// Greedily pairs learned topics with ground-truth blocks by largest overlap
/// of their word lists; `None` for topics left without a block.
pub fn greedy_block_assignment(topics: &[Vec<String>], blocks: &[Vec<String>]) -> Vec<Option<usize>> {
    let block_sets: Vec<HashSet<&str>> = blocks.iter().map(|b| b.iter().map(String::as_str).collect()).collect();
    let mut pairs: Vec<(usize, usize, usize)> = Vec::new();
    for (t, list) in topics.iter().enumerate() {
        for (b, set) in block_sets.iter().enumerate() {
            let overlap = list.iter().filter(|w| set.contains(w.as_str())).count();
            pairs.push((overlap, t, b));
        }
    }
    pairs.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut assignment = vec![None; topics.len()];
    let mut block_used = vec![false; blocks.len()];
    for (_, t, b) in pairs {
        if assignment[t].is_some() || block_used[b] {
            continue;
        }
        assignment[t] = Some(b);
        block_used[b] = true;
    }
    assignment
}

/// Per learned topic, the share of its list inside the block
/// [`greedy_block_assignment`] pairs it with; 0 when unpaired.
pub fn greedy_block_purity(topics: &[Vec<String>], blocks: &[Vec<String>]) -> Vec<f64> {
    greedy_block_assignment(topics, blocks)
        .iter()
        .zip(topics)
        .map(|(b, list)| match b {
            Some(b) if !list.is_empty() => {
                list.iter().filter(|w| blocks[*b].contains(w)).count() as f64 / list.len() as f64
            }
            _ => 0.0,
        })
        .collect()
}
