use std::collections::HashMap;

use rayon::prelude::*;

use super::{MetricsError, Result};
use crate::corpus::WordId;

/// Boolean sliding-window document frequencies for a set of tracked words.
#[derive(Clone, Debug, PartialEq)]
pub struct CooccurrenceStats {
    pub window_size: usize,
    pub total_windows: u64,
    index: HashMap<WordId, usize>,
    single: Vec<u64>,
    /// Upper triangle of the tracked-word pair counts, row-major.
    pair: Vec<u64>,
}

fn tri(n: usize, a: usize, b: usize) -> usize {
    let (i, j) = if a <= b { (a, b) } else { (b, a) };
    i * n - i * (i + 1) / 2 + j
}

struct Counts {
    windows: u64,
    single: Vec<u64>,
    pair: Vec<u64>,
}

impl Counts {
    fn new(n: usize) -> Self {
        Counts {
            windows: 0,
            single: vec![0; n],
            pair: vec![0; n * (n + 1) / 2],
        }
    }

    fn merge(mut self, other: Counts) -> Counts {
        self.windows += other.windows;
        self.single.iter_mut().zip(&other.single).for_each(|(a, b)| *a += b);
        self.pair.iter_mut().zip(&other.pair).for_each(|(a, b)| *a += b);
        self
    }

    fn record(&mut self, n: usize, present: &[usize]) {
        self.windows += 1;
        for (x, &a) in present.iter().enumerate() {
            self.single[a] += 1;
            for &b in &present[x + 1..] {
                self.pair[tri(n, a, b)] += 1;
            }
        }
    }
}

/// Slides a window of `window_size` tokens over every document with stride
/// one. A document shorter than the window counts as a single window; an
/// empty document contributes none.
fn count_document(tokens: &[Option<usize>], window_size: usize, n: usize, counts: &mut Counts) {
    if tokens.is_empty() {
        return;
    }
    let w = window_size.min(tokens.len());
    let mut in_window = vec![0u32; n];
    let mut present: Vec<usize> = Vec::new();
    let mut slot = vec![usize::MAX; n];
    let enter = |t: usize, in_window: &mut Vec<u32>, present: &mut Vec<usize>, slot: &mut Vec<usize>| {
        in_window[t] += 1;
        if in_window[t] == 1 {
            slot[t] = present.len();
            present.push(t);
        }
    };
    let leave = |t: usize, in_window: &mut Vec<u32>, present: &mut Vec<usize>, slot: &mut Vec<usize>| {
        in_window[t] -= 1;
        if in_window[t] == 0 {
            let at = slot[t];
            present.swap_remove(at);
            if at < present.len() {
                slot[present[at]] = at;
            }
        }
    };
    for t in tokens[..w].iter().flatten() {
        enter(*t, &mut in_window, &mut present, &mut slot);
    }
    counts.record(n, &present);
    for start in 1..=tokens.len() - w {
        if let Some(t) = tokens[start - 1] {
            leave(t, &mut in_window, &mut present, &mut slot);
        }
        if let Some(t) = tokens[start + w - 1] {
            enter(t, &mut in_window, &mut present, &mut slot);
        }
        counts.record(n, &present);
    }
}

impl CooccurrenceStats {
    /// Statistics for the words in `tracked` (duplicates ignored) over the
    /// token sequences of `documents`.
    pub fn build<D: AsRef<[WordId]> + Sync>(documents: &[D], window_size: usize, tracked: &[WordId]) -> Result<Self> {
        if window_size == 0 {
            return Err(MetricsError::Config("window size must be at least 1".into()));
        }
        if documents.iter().all(|d| d.as_ref().is_empty()) {
            return Err(MetricsError::EmptyReference);
        }
        let mut index = HashMap::new();
        for &w in tracked {
            let next = index.len();
            index.entry(w).or_insert(next);
        }
        let n = index.len();
        let counts = documents
            .par_iter()
            .fold(
                || Counts::new(n),
                |mut acc, doc| {
                    let mapped: Vec<Option<usize>> = doc.as_ref().iter().map(|w| index.get(w).copied()).collect();
                    count_document(&mapped, window_size, n, &mut acc);
                    acc
                },
            )
            .reduce(|| Counts::new(n), Counts::merge);
        Ok(CooccurrenceStats {
            window_size,
            total_windows: counts.windows,
            index,
            single: counts.single,
            pair: counts.pair,
        })
    }

    /// Tracks every id below `vocab_size`; for small vocabularies.
    pub fn build_full<D: AsRef<[WordId]> + Sync>(documents: &[D], window_size: usize, vocab_size: usize) -> Result<Self> {
        let all: Vec<WordId> = (0..vocab_size as WordId).collect();
        Self::build(documents, window_size, &all)
    }

    pub fn tracks(&self, w: WordId) -> bool {
        self.index.contains_key(&w)
    }

    pub fn window_count(&self, w: WordId) -> u64 {
        self.index.get(&w).map_or(0, |&i| self.single[i])
    }

    pub fn pair_window_count(&self, a: WordId, b: WordId) -> u64 {
        match (self.index.get(&a), self.index.get(&b)) {
            (Some(&i), Some(&j)) if i == j => self.single[i],
            (Some(&i), Some(&j)) => self.pair[tri(self.index.len(), i, j)],
            _ => 0,
        }
    }

    /// Share of windows containing `w`; 0 for untracked words.
    pub fn p(&self, w: WordId) -> f64 {
        self.window_count(w) as f64 / self.total_windows as f64
    }

    /// Share of windows containing both words.
    pub fn p_joint(&self, a: WordId, b: WordId) -> f64 {
        self.pair_window_count(a, b) as f64 / self.total_windows as f64
    }
}
