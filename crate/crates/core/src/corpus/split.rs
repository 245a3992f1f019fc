use rand::seq::SliceRandom;

use super::{CorpusError, CorpusSplit, Document, Result, Vocabulary};
use crate::rng::{self, Stream};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitRatios {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios {
            train: 0.70,
            validation: 0.15,
            test: 0.15,
        }
    }
}

/// Seeded shuffle, then `floor(N * validation)` and `floor(N * test)`
/// documents for the held-out splits; the remainder goes to training. Each
/// split keeps input order.
pub fn split_corpus(
    documents: Vec<Document>,
    vocabulary: Vocabulary,
    ratios: SplitRatios,
    seed: u64,
) -> Result<CorpusSplit> {
    let SplitRatios { train, validation, test } = ratios;
    if [train, validation, test].iter().any(|r| !(0.0..=1.0).contains(r))
        || (train + validation + test - 1.0).abs() > 1e-9
    {
        return Err(CorpusError::Config(format!(
            "split ratios {train}/{validation}/{test} must be in [0, 1] and sum to 1"
        )));
    }
    let n = documents.len();
    let n_val = (n as f64 * validation + 1e-9).floor() as usize;
    let n_test = (n as f64 * test + 1e-9).floor() as usize;
    let n_train = n - n_val - n_test;
    if n == 0 || n_train == 0 || n_val == 0 || n_test == 0 {
        return Err(CorpusError::Config(format!(
            "{n} documents give an empty split ({n_train}/{n_val}/{n_test})"
        )));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, Stream::Split, 0));
    let mut assignment = vec![0u8; n];
    for &i in &order[n_train..n_train + n_val] {
        assignment[i] = 1;
    }
    for &i in &order[n_train + n_val..] {
        assignment[i] = 2;
    }

    let mut split = CorpusSplit {
        vocabulary,
        train: Vec::with_capacity(n_train),
        validation: Vec::with_capacity(n_val),
        test: Vec::with_capacity(n_test),
        label_names: Vec::new(),
    };
    for (d, a) in documents.into_iter().zip(assignment) {
        match a {
            0 => split.train.push(d),
            1 => split.validation.push(d),
            _ => split.test.push(d),
        }
    }
    Ok(split)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn docs(n: usize) -> (Vec<Document>, Vocabulary) {
        let vocab = Vocabulary::new(vec!["aaa".into()]).unwrap();
        ((0..n).map(|i| Document::from_tokens(vec![0, 0, 0], i)).collect(), vocab)
    }

    fn sizes(s: &CorpusSplit) -> (usize, usize, usize) {
        (s.train.len(), s.validation.len(), s.test.len())
    }

    #[test]
    fn hundred_documents_split_70_15_15() {
        let (d, v) = docs(100);
        let s = split_corpus(d, v, SplitRatios::default(), 1).unwrap();
        assert_eq!(sizes(&s), (70, 15, 15));
    }

    #[test]
    fn remainder_goes_to_train() {
        let (d, v) = docs(10);
        let s = split_corpus(d, v, SplitRatios::default(), 1).unwrap();
        assert_eq!(sizes(&s), (8, 1, 1));
    }

    #[test]
    fn same_seed_same_partition() {
        let (d, v) = docs(57);
        let a = split_corpus(d.clone(), v.clone(), SplitRatios::default(), 9).unwrap();
        let b = split_corpus(d.clone(), v.clone(), SplitRatios::default(), 9).unwrap();
        let c = split_corpus(d, v, SplitRatios::default(), 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn partition_is_disjoint_and_complete() {
        let (d, v) = docs(41);
        let s = split_corpus(d, v, SplitRatios::default(), 3).unwrap();
        let mut sources: Vec<usize> = s.all_documents().map(|d| d.source).collect();
        sources.sort();
        assert_eq!(sources, (0..41).collect::<Vec<_>>());
    }

    #[test]
    fn tiny_corpus_is_rejected() {
        let (d, v) = docs(5);
        assert!(split_corpus(d, v, SplitRatios::default(), 0).is_err());
        let (d, v) = docs(10);
        let bad = SplitRatios { train: 0.7, validation: 0.2, test: 0.2 };
        assert!(split_corpus(d, v, bad, 0).is_err());
    }
}
