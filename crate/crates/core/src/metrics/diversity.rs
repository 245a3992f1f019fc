use std::collections::HashSet;
use std::hash::Hash;

use super::{MetricsError, Result};
use crate::corpus::WordId;
use crate::embedding::{cosine_similarity, EmbeddingMatrix};

pub const RBO_P: f64 = 0.9;

/// Rank-biased overlap truncated at `depth` and normalized so identical
/// lists score 1: `sum_k w_k |A_k & B_k| / k` with
/// `w_k = (1 - p) p^(k-1) / (1 - p^depth)`.
pub fn rbo<T: Eq + Hash>(a: &[T], b: &[T], p: f64, depth: usize) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(MetricsError::Config(format!("RBO persistence must lie in (0, 1), got {p}")));
    }
    if depth == 0 || depth > a.len() || depth > b.len() {
        return Err(MetricsError::Config(format!(
            "RBO depth {depth} must be between 1 and the list lengths ({}, {})",
            a.len(),
            b.len()
        )));
    }
    let norm = 1.0 - p.powi(depth as i32);
    let mut seen_a: HashSet<&T> = HashSet::new();
    let mut seen_b: HashSet<&T> = HashSet::new();
    let mut overlap = 0usize;
    let mut total = 0.0;
    for k in 0..depth {
        let (x, y) = (&a[k], &b[k]);
        if x == y {
            overlap += 1;
        } else {
            if seen_b.contains(x) {
                overlap += 1;
            }
            if seen_a.contains(y) {
                overlap += 1;
            }
        }
        seen_a.insert(x);
        seen_b.insert(y);
        let weight = (1.0 - p) * p.powi(k as i32) / norm;
        total += weight * overlap as f64 / (k + 1) as f64;
    }
    Ok(total)
}

fn check_topics<T>(topics: &[Vec<T>]) -> Result<usize> {
    if topics.len() < 2 {
        return Err(MetricsError::TooFewTopics(topics.len()));
    }
    let depth = topics.iter().map(Vec::len).min().unwrap_or(0);
    if depth == 0 {
        return Err(MetricsError::TooFewWords(0));
    }
    Ok(depth)
}

/// `1 - mean pairwise RBO` at the depth of the shortest topic.
pub fn irbo<T: Eq + Hash>(topics: &[Vec<T>], p: f64) -> Result<f64> {
    let depth = check_topics(topics)?;
    let mut total = 0.0;
    let mut pairs = 0usize;
    for i in 0..topics.len() {
        for j in i + 1..topics.len() {
            total += rbo(&topics[i], &topics[j], p, depth)?;
            pairs += 1;
        }
    }
    Ok(1.0 - total / pairs as f64)
}

fn check_ids(topics: &[Vec<WordId>], embeddings: &EmbeddingMatrix) -> Result<()> {
    check_topics(topics)?;
    if let Some(w) = topics.iter().flatten().find(|&&w| w as usize >= embeddings.len()) {
        return Err(MetricsError::UnknownWord(format!("word id {w}")));
    }
    Ok(())
}

fn centroid(topic: &[WordId], embeddings: &EmbeddingMatrix) -> Vec<f32> {
    let mut c = vec![0f64; embeddings.dim()];
    for &w in topic {
        c.iter_mut().zip(embeddings.row(w)).for_each(|(a, &b)| *a += b as f64);
    }
    c.iter().map(|x| (x / topic.len() as f64) as f32).collect()
}

/// `1 - mean pairwise cosine` between topic centroids.
pub fn wi_c(topics: &[Vec<WordId>], embeddings: &EmbeddingMatrix) -> Result<f64> {
    check_ids(topics, embeddings)?;
    let centroids: Vec<Vec<f32>> = topics.iter().map(|t| centroid(t, embeddings)).collect();
    let mut total = 0.0;
    let mut pairs = 0usize;
    for i in 0..centroids.len() {
        for j in i + 1..centroids.len() {
            total += cosine_similarity(&centroids[i], &centroids[j]);
            pairs += 1;
        }
    }
    Ok(1.0 - total / pairs as f64)
}

/// `1 - mean over ordered topic pairs (i, j)` of the average, over words of
/// `i`, of the best cosine match among the words of `j`.
pub fn wi_m(topics: &[Vec<WordId>], embeddings: &EmbeddingMatrix) -> Result<f64> {
    check_ids(topics, embeddings)?;
    let mut total = 0.0;
    let mut pairs = 0usize;
    for (i, ti) in topics.iter().enumerate() {
        for (j, tj) in topics.iter().enumerate() {
            if i == j {
                continue;
            }
            let best: f64 = ti
                .iter()
                .map(|&a| {
                    tj.iter()
                        .map(|&b| embeddings.similarity(a, b))
                        .fold(f64::NEG_INFINITY, f64::max)
                })
                .sum();
            total += best / ti.len() as f64;
            pairs += 1;
        }
    }
    Ok(1.0 - total / pairs as f64)
}
