use super::cooccurrence::CooccurrenceStats;
use super::{MetricsError, Result};
use crate::corpus::WordId;

pub const NPMI_EPSILON: f64 = 1e-12;

/// NPMI of one word pair, clamped to `[-1, 1]`.
///
/// A pair involving a word that never occurs scores -1, and a pair present
/// in every window scores 1 (the formula's denominator vanishes there).
pub fn npmi_pair(stats: &CooccurrenceStats, a: WordId, b: WordId, eps: f64) -> f64 {
    let (pa, pb) = (stats.p(a), stats.p(b));
    if pa == 0.0 || pb == 0.0 {
        return -1.0;
    }
    let joint = stats.p_joint(a, b) + eps;
    if joint >= 1.0 {
        return 1.0;
    }
    ((joint / (pa * pb)).ln() / -joint.ln()).clamp(-1.0, 1.0)
}

fn check_len(topic: &[WordId]) -> Result<()> {
    if topic.len() < 2 {
        return Err(MetricsError::TooFewWords(topic.len()));
    }
    Ok(())
}

/// Mean NPMI over all unordered pairs of the topic's words.
pub fn npmi(topic: &[WordId], stats: &CooccurrenceStats, eps: f64) -> Result<f64> {
    check_len(topic)?;
    let mut total = 0.0;
    let mut pairs = 0usize;
    for (i, &a) in topic.iter().enumerate() {
        for &b in &topic[i + 1..] {
            total += npmi_pair(stats, a, b, eps);
            pairs += 1;
        }
    }
    Ok(total / pairs as f64)
}

/// `n x n` NPMI matrix of a topic, self pairs included.
pub fn npmi_matrix(topic: &[WordId], stats: &CooccurrenceStats, eps: f64) -> Vec<Vec<f64>> {
    topic
        .iter()
        .map(|&a| topic.iter().map(|&b| npmi_pair(stats, a, b, eps)).collect())
        .collect()
}

fn cosine(u: &[f64], v: &[f64]) -> f64 {
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return 0.0;
    }
    dot / (nu * nv)
}

/// Mean cosine between each row of an NPMI matrix and the sum of all rows.
pub fn cv_from_npmi_matrix(matrix: &[Vec<f64>]) -> f64 {
    if matrix.is_empty() {
        return 0.0;
    }
    let n = matrix[0].len();
    let mut sum = vec![0.0; n];
    for row in matrix {
        sum.iter_mut().zip(row).for_each(|(s, x)| *s += x);
    }
    matrix.iter().map(|row| cosine(row, &sum)).sum::<f64>() / matrix.len() as f64
}

/// Indirect cosine coherence over NPMI context vectors.
pub fn cv(topic: &[WordId], stats: &CooccurrenceStats, eps: f64) -> Result<f64> {
    check_len(topic)?;
    Ok(cv_from_npmi_matrix(&npmi_matrix(topic, stats, eps)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn stats(docs: &[Vec<u32>], w: usize, v: usize) -> CooccurrenceStats {
        CooccurrenceStats::build_full(docs, w, v).unwrap()
    }

    #[test]
    fn always_together_approaches_one() {
        // words 0 and 1 appear in exactly the same half of the windows
        let docs = vec![vec![0, 1], vec![0, 1], vec![2, 3], vec![2, 3]];
        let s = stats(&docs, 5, 4);
        assert_abs_diff_eq!(npmi_pair(&s, 0, 1, NPMI_EPSILON), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn never_together_approaches_minus_one() {
        let docs = vec![vec![0, 2], vec![1, 3]];
        let s = stats(&docs, 5, 4);
        let v = npmi_pair(&s, 0, 1, NPMI_EPSILON);
        assert!((-1.0..-0.94).contains(&v), "{v}");
        assert_eq!(npmi_pair(&s, 0, 7, NPMI_EPSILON), -1.0);
    }

    #[test]
    fn independent_pair_is_zero() {
        // p0 = p1 = 1/2 and p01 = 1/4
        let docs = vec![vec![0, 1], vec![0, 2], vec![1, 3], vec![2, 3]];
        let s = stats(&docs, 5, 4);
        assert_abs_diff_eq!(npmi_pair(&s, 0, 1, NPMI_EPSILON), 0.0, epsilon = 1e-9);
    }

    #[test]
    fn pair_in_every_window_scores_one() {
        let s = stats(&[vec![0, 1, 0, 1]], 4, 2);
        assert_eq!(npmi_pair(&s, 0, 1, NPMI_EPSILON), 1.0);
    }

    #[test]
    fn single_word_topic_rejected() {
        let s = stats(&[vec![0, 1]], 4, 2);
        assert!(matches!(npmi(&[0], &s, NPMI_EPSILON), Err(MetricsError::TooFewWords(1))));
        assert!(cv(&[], &s, NPMI_EPSILON).is_err());
    }

    #[test]
    fn cv_of_constant_matrix_is_one() {
        let m = vec![vec![0.3; 4]; 4];
        assert_abs_diff_eq!(cv_from_npmi_matrix(&m), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn cv_hand_example() {
        let m = vec![vec![1.0, 0.5, 0.0], vec![0.5, 1.0, -0.5], vec![0.0, -0.5, 1.0]];
        // row sum [1.5, 1.0, 0.5], norm sqrt(3.5)
        let s = 3.5f64.sqrt();
        let expected = ((1.5 + 0.5) / (1.25f64.sqrt() * s)
            + (0.75 + 1.0 - 0.25) / (1.5f64.sqrt() * s)
            + (-0.5 + 0.5) / (1.25f64.sqrt() * s))
            / 3.0;
        assert_abs_diff_eq!(cv_from_npmi_matrix(&m), expected, epsilon = 1e-12);
    }

    proptest! {
        #[test]
        fn npmi_is_bounded_and_symmetric(
            docs in proptest::collection::vec(proptest::collection::vec(0u32..6, 1..20), 1..6),
            w in 1usize..8,
            a in 0u32..7,
            b in 0u32..7,
        ) {
            let s = stats(&docs, w, 6);
            let x = npmi_pair(&s, a, b, NPMI_EPSILON);
            prop_assert!((-1.0 - 1e-9..=1.0 + 1e-9).contains(&x));
            prop_assert_eq!(x, npmi_pair(&s, b, a, NPMI_EPSILON));
        }
    }
}
