use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::Serialize;

use super::coherence::{cv, npmi, NPMI_EPSILON};
use super::cooccurrence::CooccurrenceStats;
use super::diversity::{irbo, wi_c, wi_m, RBO_P};
use super::{MetricsError, Result};
use crate::corpus::{Document, Vocabulary, WordId};
use crate::embedding::EmbeddingMatrix;
use crate::rng::{self, Stream};

/// Ranked word lists, one per topic, with no repeated word inside a topic.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TopicSet {
    topics: Vec<Vec<String>>,
}

impl TopicSet {
    pub fn new(topics: Vec<Vec<String>>) -> Result<Self> {
        for t in &topics {
            if t.len() < 2 {
                return Err(MetricsError::TooFewWords(t.len()));
            }
            let mut seen = HashSet::new();
            if let Some(w) = t.iter().find(|w| !seen.insert(w.as_str())) {
                return Err(MetricsError::Config(format!("word `{w}` repeated within a topic")));
            }
        }
        Ok(TopicSet { topics })
    }

    pub fn topics(&self) -> &[Vec<String>] {
        &self.topics
    }

    pub fn len(&self) -> usize {
        self.topics.len()
    }

    pub fn is_empty(&self) -> bool {
        self.topics.is_empty()
    }

    /// Ids of every word; words outside the vocabulary map to an id no
    /// document contains, so coherence treats them as never occurring.
    pub fn ids_lenient(&self, vocabulary: &Vocabulary) -> Vec<Vec<WordId>> {
        self.topics
            .iter()
            .map(|t| t.iter().map(|w| vocabulary.id(w).unwrap_or(WordId::MAX)).collect())
            .collect()
    }

    pub fn ids(&self, vocabulary: &Vocabulary) -> Result<Vec<Vec<WordId>>> {
        self.topics
            .iter()
            .map(|t| {
                t.iter()
                    .map(|w| vocabulary.id(w).ok_or_else(|| MetricsError::UnknownWord(w.clone())))
                    .collect()
            })
            .collect()
    }
}

/// The same words randomly redistributed over topics of the original sizes.
/// Draws are repeated until no topic holds a word twice, when possible.
pub fn regrouped_topics(topics: &TopicSet, seed: u64) -> TopicSet {
    let mut words: Vec<String> = topics.topics.iter().flatten().cloned().collect();
    let mut rng = rng::stream(seed, Stream::Shuffle, u64::MAX);
    let sizes: Vec<usize> = topics.topics.iter().map(Vec::len).collect();
    let mut grouped = Vec::new();
    for _ in 0..1000 {
        words.shuffle(&mut rng);
        grouped.clear();
        let mut at = 0;
        for &n in &sizes {
            grouped.push(words[at..at + n].to_vec());
            at += n;
        }
        let distinct = grouped
            .iter()
            .all(|t: &Vec<String>| t.iter().collect::<HashSet<_>>().len() == t.len());
        if distinct {
            break;
        }
    }
    TopicSet { topics: grouped }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricOptions {
    pub npmi_window: usize,
    pub cv_window: usize,
    pub epsilon: f64,
    pub rbo_p: f64,
}

impl Default for MetricOptions {
    fn default() -> Self {
        MetricOptions {
            npmi_window: 10,
            cv_window: 110,
            epsilon: NPMI_EPSILON,
            rbo_p: RBO_P,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricsReport {
    pub topics: usize,
    pub words_per_topic: usize,
    pub npmi_window: usize,
    pub cv_window: usize,
    pub npmi: f64,
    pub cv: f64,
    /// `None` with fewer than two topics.
    pub irbo: Option<f64>,
    /// `None` without embeddings or with fewer than two topics.
    pub wi_m: Option<f64>,
    pub wi_c: Option<f64>,
    pub per_topic_npmi: Vec<f64>,
    pub per_topic_cv: Vec<f64>,
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Scores `topics` against the token sequences of `reference`.
pub fn evaluate_topics(
    topics: &TopicSet,
    reference: &[Document],
    vocabulary: &Vocabulary,
    embeddings: Option<&EmbeddingMatrix>,
    options: &MetricOptions,
) -> Result<MetricsReport> {
    if topics.is_empty() {
        return Err(MetricsError::TooFewTopics(0));
    }
    let ids = topics.ids_lenient(vocabulary);
    let tracked: Vec<WordId> = ids.iter().flatten().copied().filter(|&w| w != WordId::MAX).collect();
    let tokens: Vec<&[WordId]> = reference.iter().map(|d| d.token_ids.as_slice()).collect();
    let npmi_stats = CooccurrenceStats::build(&tokens, options.npmi_window, &tracked)?;
    let cv_stats = CooccurrenceStats::build(&tokens, options.cv_window, &tracked)?;
    let per_topic_npmi = ids
        .iter()
        .map(|t| npmi(t, &npmi_stats, options.epsilon))
        .collect::<Result<Vec<_>>>()?;
    let per_topic_cv = ids
        .iter()
        .map(|t| cv(t, &cv_stats, options.epsilon))
        .collect::<Result<Vec<_>>>()?;
    let several = topics.len() >= 2;
    let irbo = several.then(|| irbo(topics.topics(), options.rbo_p)).transpose()?;
    let (wi_m, wi_c) = match embeddings {
        Some(e) if several => {
            let known = topics.ids(vocabulary)?;
            (Some(wi_m(&known, e)?), Some(wi_c(&known, e)?))
        }
        _ => (None, None),
    };
    Ok(MetricsReport {
        topics: topics.len(),
        words_per_topic: topics.topics().iter().map(Vec::len).min().unwrap_or(0),
        npmi_window: options.npmi_window,
        cv_window: options.cv_window,
        npmi: mean(&per_topic_npmi),
        cv: mean(&per_topic_cv),
        irbo,
        wi_m,
        wi_c,
        per_topic_npmi,
        per_topic_cv,
    })
}

impl MetricsReport {
    /// `metric<TAB>value` rows; per-topic rows are named `npmi[k]` / `cv[k]`.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("metric\tvalue\n");
        let mut row = |k: &str, v: f64| writeln!(out, "{k}\t{v:.6}").expect("writing to a String");
        row("npmi", self.npmi);
        row("cv", self.cv);
        for (k, v) in [("irbo", self.irbo), ("wi_m", self.wi_m), ("wi_c", self.wi_c)] {
            if let Some(v) = v {
                row(k, v);
            }
        }
        for (i, v) in self.per_topic_npmi.iter().enumerate() {
            row(&format!("npmi[{i}]"), *v);
        }
        for (i, v) in self.per_topic_cv.iter().enumerate() {
            row(&format!("cv[{i}]"), *v);
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Writes `<stem>.tsv` and `<stem>.json`.
    pub fn write(&self, stem: &Path) -> Result<()> {
        for (ext, body) in [("tsv", self.to_tsv()), ("json", self.to_json())] {
            let path = stem.with_extension(ext);
            std::fs::write(&path, body).map_err(|source| MetricsError::Io { path, source })?;
        }
        Ok(())
    }
}

/// One topic per line, words separated by single spaces.
pub fn write_topics(topics: &TopicSet, path: &Path) -> Result<()> {
    let mut text = String::new();
    for t in topics.topics() {
        text.push_str(&t.join(" "));
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|source| MetricsError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_topics(path: &Path) -> Result<TopicSet> {
    let text = std::fs::read_to_string(path).map_err(|source| MetricsError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut topics = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let words: Vec<String> = line.split_whitespace().map(str::to_string).collect();
        TopicSet::new(vec![words.clone()]).map_err(|e| MetricsError::Format {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        topics.push(words);
    }
    TopicSet::new(topics)
}
