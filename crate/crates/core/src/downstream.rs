//! Document classification on topic proportions, and `theta` export.
//!
//! The classifier is a one-vs-rest linear SVM fitted by SGD on the hinge
//! loss with L2 regularization.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use thiserror::Error;

use crate::binio::{FormatError, Reader, Writer};
use crate::corpus::Document;
use crate::docgraph::DocumentGraph;
use crate::rng::{self, Stream};
use crate::topicmodel::{infer_theta, GinopicModel, TopicModelError};

pub const CLASSIFIER_MAGIC: &str = "GINOCLF1";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DownstreamError {
    #[error("invalid classifier input: {0}")]
    Config(String),
    #[error("empty evaluation set")]
    EmptyTestSet,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error(transparent)]
    Model(#[from] TopicModelError),
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
}

pub type Result<T> = std::result::Result<T, DownstreamError>;

#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierConfig {
    pub epochs: usize,
    /// Initial step; epoch `e` (0-based) uses `learning_rate / (1 + e)`.
    pub learning_rate: f64,
    pub lambda: f64,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            epochs: 100,
            learning_rate: 0.01,
            lambda: 1e-4,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearClassifier {
    pub classes: usize,
    pub features: usize,
    /// Row `c` holds the `features` weights of class `c` followed by its bias.
    pub weights: Vec<f64>,
    pub config: ClassifierConfig,
    /// Mean regularized hinge loss after each epoch; empty when loaded.
    pub loss_history: Vec<f64>,
}

fn check_rows(x: &[Vec<f64>], features: usize) -> Result<()> {
    if let Some((i, r)) = x.iter().enumerate().find(|(_, r)| r.len() != features) {
        return Err(DownstreamError::Shape(format!(
            "row {i} has {} features, expected {features}",
            r.len()
        )));
    }
    Ok(())
}

impl LinearClassifier {
    fn row(&self, c: usize) -> &[f64] {
        let s = self.features + 1;
        &self.weights[c * s..(c + 1) * s]
    }

    pub fn score(&self, x: &[f64], c: usize) -> f64 {
        let w = self.row(c);
        w[..self.features].iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + w[self.features]
    }

    /// Highest-scoring class; ties go to the lower index.
    pub fn predict(&self, x: &[f64]) -> u32 {
        let mut best = 0;
        let mut best_score = f64::NEG_INFINITY;
        for c in 0..self.classes {
            let s = self.score(x, c);
            if s > best_score {
                best = c;
                best_score = s;
            }
        }
        best as u32
    }

    fn objective(&self, x: &[Vec<f64>], labels: &[u32]) -> f64 {
        let mut hinge = 0.0;
        for (xi, &y) in x.iter().zip(labels) {
            for c in 0..self.classes {
                let sign = if c as u32 == y { 1.0 } else { -1.0 };
                hinge += (1.0 - sign * self.score(xi, c)).max(0.0);
            }
        }
        let reg: f64 = (0..self.classes)
            .map(|c| self.row(c)[..self.features].iter().map(|w| w * w).sum::<f64>())
            .sum();
        hinge / x.len() as f64 + 0.5 * self.config.lambda * reg
    }
}

/// Fits one hinge-loss separator per class over rows of `theta`.
///
/// When every label is the same the result is a constant classifier that
/// predicts that label.
pub fn train_classifier(
    theta: &[Vec<f64>],
    labels: &[u32],
    classes: usize,
    config: &ClassifierConfig,
) -> Result<LinearClassifier> {
    if theta.len() != labels.len() {
        return Err(DownstreamError::Shape(format!(
            "{} rows but {} labels",
            theta.len(),
            labels.len()
        )));
    }
    if classes == 0 || theta.len() < classes {
        return Err(DownstreamError::Config(format!(
            "{} documents for {classes} classes",
            theta.len()
        )));
    }
    if let Some(&l) = labels.iter().find(|&&l| l as usize >= classes) {
        return Err(DownstreamError::Config(format!("label {l} outside [0, {classes})")));
    }
    if !(config.learning_rate > 0.0 && config.lambda >= 0.0) {
        return Err(DownstreamError::Config("learning rate must be positive, lambda non-negative".into()));
    }
    let features = theta[0].len();
    check_rows(theta, features)?;
    let stride = features + 1;
    let mut model = LinearClassifier {
        classes,
        features,
        weights: vec![0.0; classes * stride],
        config: config.clone(),
        loss_history: Vec::new(),
    };
    if labels.iter().all(|&l| l == labels[0]) {
        model.weights[labels[0] as usize * stride + features] = 1.0;
        return Ok(model);
    }

    let mut order: Vec<usize> = (0..theta.len()).collect();
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng::stream(config.seed, Stream::Classifier, epoch as u64));
        let eta = config.learning_rate / (1.0 + epoch as f64);
        let shrink = 1.0 - eta * config.lambda;
        for &i in &order {
            let x = &theta[i];
            for c in 0..classes {
                let sign = if c as u32 == labels[i] { 1.0 } else { -1.0 };
                let margin = sign * model.score(x, c);
                let w = &mut model.weights[c * stride..(c + 1) * stride];
                w[..features].iter_mut().for_each(|v| *v *= shrink);
                if margin < 1.0 {
                    w[..features].iter_mut().zip(x).for_each(|(v, xi)| *v += eta * sign * xi);
                    w[features] += eta * sign;
                }
            }
        }
        model.loss_history.push(model.objective(theta, labels));
    }
    Ok(model)
}

pub fn predict(classifier: &LinearClassifier, theta: &[Vec<f64>]) -> Result<Vec<u32>> {
    check_rows(theta, classifier.features)?;
    Ok(theta.iter().map(|x| classifier.predict(x)).collect())
}

/// Fraction of rows whose predicted class equals the label.
pub fn evaluate_accuracy(classifier: &LinearClassifier, theta: &[Vec<f64>], labels: &[u32]) -> Result<f64> {
    if theta.is_empty() {
        return Err(DownstreamError::EmptyTestSet);
    }
    if theta.len() != labels.len() {
        return Err(DownstreamError::Shape(format!(
            "{} rows but {} labels",
            theta.len(),
            labels.len()
        )));
    }
    let predicted = predict(classifier, theta)?;
    let correct = predicted.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(correct as f64 / labels.len() as f64)
}

pub fn encode_classifier(classifier: &LinearClassifier) -> Vec<u8> {
    let mut w = Writer::new();
    w.bytes(CLASSIFIER_MAGIC.as_bytes());
    w.u32(VERSION);
    w.len_u32(classifier.classes);
    w.len_u32(classifier.features);
    w.len_u32(classifier.config.epochs);
    w.f64(classifier.config.learning_rate);
    w.f64(classifier.config.lambda);
    w.u64(classifier.config.seed);
    for &x in &classifier.weights {
        w.f64(x);
    }
    w.finish()
}

pub fn decode_classifier(bytes: &[u8]) -> std::result::Result<LinearClassifier, FormatError> {
    let mut r = Reader::new(bytes);
    r.magic(CLASSIFIER_MAGIC)?;
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(FormatError::Version(version));
    }
    let classes = r.u32("classes")? as usize;
    let features = r.u32("features")? as usize;
    let epochs = r.u32("epochs")? as usize;
    let learning_rate = r.f64("learning rate")?;
    let lambda = r.f64("lambda")?;
    let seed = r.u64("seed")?;
    let n = classes * (features + 1);
    if r.remaining() != n * 8 {
        return Err(FormatError::Truncated("weights"));
    }
    let weights = (0..n).map(|_| r.f64("weight")).collect::<std::result::Result<Vec<_>, _>>()?;
    r.expect_end()?;
    Ok(LinearClassifier {
        classes,
        features,
        weights,
        config: ClassifierConfig {
            epochs,
            learning_rate,
            lambda,
            seed,
        },
        loss_history: Vec::new(),
    })
}

pub fn save_classifier(classifier: &LinearClassifier, path: &Path) -> Result<()> {
    std::fs::write(path, encode_classifier(classifier)).map_err(|source| DownstreamError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_classifier(path: &Path) -> Result<LinearClassifier> {
    let bytes = std::fs::read(path).map_err(|source| DownstreamError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode_classifier(&bytes).map_err(|source| DownstreamError::Format {
        path: path.to_path_buf(),
        source,
    })
}

/// `index<TAB>label<TAB>theta_0 ... theta_{K-1}` per document, label `-1`
/// when absent. Values are printed as the shortest decimal that reads back
/// to the same `f32`.
pub fn theta_tsv(theta: &[Vec<f64>], labels: &[Option<u32>]) -> String {
    let mut out = String::new();
    for (i, (row, label)) in theta.iter().zip(labels).enumerate() {
        write!(out, "{i}\t{}", label.map_or(-1, |l| l as i64)).expect("writing to a String");
        for &p in row {
            write!(out, "\t{}", p as f32).expect("writing to a String");
        }
        out.push('\n');
    }
    out
}

pub fn write_theta(theta: &[Vec<f64>], labels: &[Option<u32>], path: &Path) -> Result<()> {
    if theta.len() != labels.len() {
        return Err(DownstreamError::Shape(format!(
            "{} rows but {} labels",
            theta.len(),
            labels.len()
        )));
    }
    std::fs::write(path, theta_tsv(theta, labels)).map_err(|source| DownstreamError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Labels (if any) and rows of a theta file.
pub type ThetaTable = (Vec<Option<u32>>, Vec<Vec<f64>>);

/// Parses a file written by [`write_theta`] into labels and rows.
pub fn read_theta(path: &Path) -> Result<ThetaTable> {
    let text = std::fs::read_to_string(path).map_err(|source| DownstreamError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let bad = |line: usize, what: &str| DownstreamError::Format {
        path: path.to_path_buf(),
        source: FormatError::Malformed(format!("line {line}: {what}")),
    };
    let mut labels = Vec::new();
    let mut rows = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() < 3 {
            return Err(bad(n + 1, "expected index, label and at least one value"));
        }
        let label: i64 = fields[1].parse().map_err(|_| bad(n + 1, "label is not an integer"))?;
        labels.push(u32::try_from(label).ok());
        let row = fields[2..]
            .iter()
            .map(|f| f.parse::<f64>().map_err(|_| bad(n + 1, "value is not a number")))
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok((labels, rows))
}

/// Infers `theta` for `documents` and writes it with their labels.
pub fn export_theta(
    model: &GinopicModel<f32>,
    documents: &[&Document],
    graphs: &[&DocumentGraph],
    path: &Path,
) -> Result<Vec<Vec<f64>>> {
    let theta = infer_theta(model, documents, graphs)?;
    let labels: Vec<Option<u32>> = documents.iter().map(|d| d.label).collect();
    write_theta(&theta, &labels, path)?;
    Ok(theta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    /// Two well separated clusters on the 2-simplex.
    fn two_clusters(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<u32>) {
        let mut rng = rng::stream(seed, Stream::Synthetic, 0);
        let noise = Normal::new(0.0, 0.05).unwrap();
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            let label = (i % 2) as u32;
            let centre: f64 = if label == 0 { 0.8 } else { 0.2 };
            let a: f64 = (centre + noise.sample(&mut rng)).clamp(0.0, 1.0);
            x.push(vec![a, 1.0 - a]);
            y.push(label);
        }
        (x, y)
    }

    #[test]
    fn separable_clusters_are_learned() {
        let (x, y) = two_clusters(400, 1);
        let clf = train_classifier(&x, &y, 2, &ClassifierConfig::default()).unwrap();
        assert_eq!(clf.weights.len(), 2 * 3);
        assert!(evaluate_accuracy(&clf, &x, &y).unwrap() >= 0.99);
    }

    #[test]
    fn epoch_loss_never_increases_on_separable_data() {
        let (x, y) = two_clusters(200, 2);
        let clf = train_classifier(&x, &y, 2, &ClassifierConfig::default()).unwrap();
        assert_eq!(clf.loss_history.len(), 100);
        for w in clf.loss_history.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn single_class_predicts_it() {
        let x = vec![vec![0.5, 0.5], vec![0.9, 0.1], vec![0.2, 0.8]];
        let y = vec![2, 2, 2];
        let clf = train_classifier(&x, &y, 3, &ClassifierConfig::default()).unwrap();
        assert_eq!(evaluate_accuracy(&clf, &x, &y).unwrap(), 1.0);
        assert_eq!(clf.predict(&[0.0, 1.0]), 2);
    }

    #[test]
    fn same_seed_same_weights() {
        let (x, y) = two_clusters(100, 3);
        let cfg = ClassifierConfig { seed: 9, ..Default::default() };
        let a = train_classifier(&x, &y, 2, &cfg).unwrap();
        let b = train_classifier(&x, &y, 2, &cfg).unwrap();
        assert_eq!(a.weights, b.weights);
    }

    #[test]
    fn invalid_inputs_rejected() {
        let cfg = ClassifierConfig::default();
        assert!(matches!(
            train_classifier(&[vec![1.0]], &[0], 2, &cfg),
            Err(DownstreamError::Config(_))
        ));
        assert!(train_classifier(&[vec![1.0], vec![0.0]], &[0, 5], 2, &cfg).is_err());
        assert!(train_classifier(&[vec![1.0], vec![0.0, 1.0]], &[0, 1], 2, &cfg).is_err());
        let (x, y) = two_clusters(10, 4);
        let clf = train_classifier(&x, &y, 2, &cfg).unwrap();
        assert!(matches!(evaluate_accuracy(&clf, &[], &[]), Err(DownstreamError::EmptyTestSet)));
        assert!(evaluate_accuracy(&clf, &[vec![1.0, 0.0, 0.0]], &[0]).is_err());
    }

    #[test]
    fn random_labels_score_near_chance() {
        let classes = 4;
        let mut rng = rng::stream(5, Stream::Synthetic, 1);
        let n = 4000;
        let x: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let raw: Vec<f64> = (0..5).map(|_| rng.random::<f64>()).collect();
                let s: f64 = raw.iter().sum();
                raw.iter().map(|v| v / s).collect()
            })
            .collect();
        let labels: Vec<u32> = (0..n).map(|i| (i % classes) as u32).collect();
        let mut shuffled = labels.clone();
        shuffled.shuffle(&mut rng);
        let clf = train_classifier(&x[..n / 2], &shuffled[..n / 2], classes, &ClassifierConfig::default()).unwrap();
        let acc = evaluate_accuracy(&clf, &x[n / 2..], &shuffled[n / 2..]).unwrap();
        assert!((acc - 0.25).abs() < 0.04, "{acc}");
    }

    #[test]
    fn classifier_file_round_trip() {
        let (x, y) = two_clusters(50, 6);
        let mut clf = train_classifier(&x, &y, 2, &ClassifierConfig::default()).unwrap();
        clf.loss_history.clear();
        let bytes = encode_classifier(&clf);
        assert!(bytes.starts_with(b"GINOCLF1"));
        assert_eq!(decode_classifier(&bytes).unwrap(), clf);
        for cut in [0, 8, 20, bytes.len() - 1] {
            assert!(decode_classifier(&bytes[..cut]).is_err());
        }
    }

    #[test]
    fn theta_file_round_trip() {
        let theta = vec![vec![0.1, 0.2, 0.7], vec![1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]];
        let labels = vec![Some(1), None];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("theta.tsv");
        write_theta(&theta, &labels, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("0\t1\t0.1\t0.2\t0.7\n1\t-1\t"));
        let (l, rows) = read_theta(&path).unwrap();
        assert_eq!(l, labels);
        for (a, b) in rows.iter().flatten().zip(theta.iter().flatten()) {
            assert_eq!(*a as f32, *b as f32);
        }
    }

    proptest! {
        #[test]
        fn accuracy_ignores_monotone_score_rescaling(
            seed in 0u64..50,
            scale in 0.01f64..100.0,
            shift in -5.0f64..5.0,
        ) {
            let (x, y) = two_clusters(40, seed);
            let clf = train_classifier(&x, &y, 2, &ClassifierConfig { epochs: 5, ..Default::default() }).unwrap();
            let mut scaled = clf.clone();
            let s = clf.features + 1;
            for c in 0..clf.classes {
                for (i, w) in scaled.weights[c * s..(c + 1) * s].iter_mut().enumerate() {
                    *w = *w * scale + if i == clf.features { shift } else { 0.0 };
                }
            }
            prop_assert_eq!(predict(&clf, &x).unwrap(), predict(&scaled, &x).unwrap());
        }
    }
}
