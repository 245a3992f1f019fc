use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use super::{io_error, CliError, Result, RunDir, Settings};
use crate::corpus::{self, CorpusSplit, Document, PreprocessOptions, SplitRatios};
use crate::docgraph::{self, CacheOutcome, DocumentGraph, GraphStore};
use crate::downstream::{self, ClassifierConfig};
use crate::embedding::{self, EmbeddingMatrix};
use crate::gin::GinConfig;
use crate::metrics::{self, MetricOptions, MetricsReport, TopicSet};
use crate::topicmodel::{self, GinopicModel, TrainConfig};

fn emit(stdout: &mut dyn Write, text: &str) -> Result<()> {
    stdout
        .write_all(text.as_bytes())
        .and_then(|_| stdout.flush())
        .map_err(|e| CliError::Io(format!("stdout: {e}")))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| io_error(path, e))
}

fn key_value_table(rows: &[(&str, String)]) -> String {
    let mut out = String::from("field\tvalue\n");
    for (k, v) in rows {
        writeln!(out, "{k}\t{v}").expect("writing to a String");
    }
    out
}

fn load_split(s: &Settings) -> Result<CorpusSplit> {
    Ok(corpus::load_corpus(&s.path("corpus")?)?)
}

fn load_embeddings(s: &Settings, split: &CorpusSplit) -> Result<Option<EmbeddingMatrix>> {
    match s.optional_path("embeddings") {
        Some(path) => Ok(Some(embedding::load_embeddings(&path, &split.vocabulary, s.value("oov-seed")?)?)),
        None => Ok(None),
    }
}

/// Loads the graph cache and checks it belongs to `split`.
fn load_graphs(s: &Settings, split: &CorpusSplit) -> Result<GraphStore> {
    let path = s.path("graphs")?;
    let store = docgraph::load_graph_cache(&path)?;
    if store.key.corpus_hash != split.content_hash() || store.len() != split.len() {
        return Err(CliError::Config(format!(
            "{} was built from a different corpus",
            path.display()
        )));
    }
    Ok(store)
}

fn checked_delta(delta: f32) -> Result<f32> {
    if !(0.0..=1.0).contains(&delta) {
        return Err(CliError::Config(format!("delta must lie in [0, 1], got {delta}")));
    }
    Ok(delta)
}

fn resolve_preset(s: &mut Settings) -> Result<Option<topicmodel::Preset>> {
    let name = s.require("preset")?.to_string();
    if name == "custom" {
        return Ok(None);
    }
    let p = topicmodel::preset(&name).ok_or_else(|| {
        CliError::Config(format!("unknown preset `{name}` (20ng, bbc, ss, bio, so or custom)"))
    })?;
    s.set("preset", p.name);
    Ok(Some(p))
}

pub fn preprocess(s: &mut Settings, stdout: &mut dyn Write) -> Result<()> {
    let input = s.path("input")?;
    let ratios: Vec<f64> = s.list("split")?.unwrap_or_default();
    let [train, validation, test] = ratios[..] else {
        return Err(CliError::Config("--split needs three comma-separated shares".into()));
    };
    let options = PreprocessOptions {
        max_vocab: s.value("max-vocab")?,
        min_word_len: s.value("min-word-len")?,
        min_doc_len: s.value("min-doc-len")?,
        lemmatize: s.value("lemmatize")?,
        stopwords: match s.optional_path("stopwords") {
            Some(p) => Some(corpus::read_lines(&p)?.iter().map(|w| w.trim().to_lowercase()).collect::<HashSet<_>>()),
            None => None,
        },
    };
    let seed: u64 = s.value("seed")?;
    let mut run = RunDir::create(s)?;
    let raw = corpus::read_lines(&input)?;
    let labels = s.optional_path("labels").map(|p| corpus::read_lines(&p)).transpose()?;
    let (split, dropped) = corpus::build_corpus(
        &raw,
        labels.as_deref(),
        &options,
        SplitRatios { train, validation, test },
        seed,
    )?;
    let cache = run.file("corpus.bin");
    corpus::save_corpus(&split, &cache)?;
    corpus::write_vocabulary(&split.vocabulary, &run.file("vocab.txt"))?;
    run.info(&format!("wrote {}", cache.display()));
    let table = key_value_table(&[
        ("documents_kept", split.len().to_string()),
        ("documents_dropped", dropped.to_string()),
        ("vocabulary", split.vocabulary.len().to_string()),
        ("train", split.train.len().to_string()),
        ("validation", split.validation.len().to_string()),
        ("test", split.test.len().to_string()),
        ("labels", split.k_gold().to_string()),
        ("corpus_hash", split.content_hash()),
    ]);
    write_file(&run.file("summary.tsv"), &table)?;
    emit(stdout, &table)
}

pub fn build_graphs(s: &mut Settings, stdout: &mut dyn Write) -> Result<()> {
    if let Some(p) = resolve_preset(s)? {
        if s.get("delta").is_none() {
            s.set("delta", p.delta);
        }
    }
    let delta = checked_delta(s.value("delta")?)?;
    let split = load_split(s)?;
    let embeddings = load_embeddings(s, &split)?.ok_or_else(|| CliError::Usage {
        command: "build-graphs",
        message: "build-graphs: --embeddings is required".into(),
    })?;
    let mut run = RunDir::create(s)?;
    run.info(&format!(
        "{} of {} vocabulary words have no vector and use seeded random ones",
        embeddings.oov_count(),
        embeddings.len()
    ));
    embedding::save_embedding_cache(&embeddings, &split.vocabulary, &run.file("embeddings.bin"))?;
    let cache = run.file("graphs.bin");
    let start = Instant::now();
    let (store, outcome) = docgraph::build_all_graphs(&split, &embeddings, delta, Some(&cache))?;
    let seconds = start.elapsed().as_secs_f64();
    let outcome = match outcome {
        CacheOutcome::Loaded => "loaded",
        CacheOutcome::Rebuilt => "rebuilt",
        CacheOutcome::Built | CacheOutcome::NoCache => "built",
    };
    run.info(&format!("graph cache {}: {outcome}", cache.display()));
    let report = docgraph::graph_density_report(&store.graphs)?;
    let table = key_value_table(&[
        ("delta", delta.to_string()),
        ("documents", report.documents.to_string()),
        ("mean_nodes", format!("{:.4}", report.mean_nodes)),
        ("mean_edges", format!("{:.4}", report.mean_edges)),
        ("mean_density", format!("{:.6}", report.mean_density)),
        ("cache", outcome.to_string()),
        ("seconds", format!("{seconds:.3}")),
    ]);
    write_file(&run.file("density.tsv"), &table)?;
    emit(stdout, &table)
}

/// Topic counts to train, materializing `gold` and the label default.
fn topic_counts(s: &mut Settings, split: &CorpusSplit) -> Result<Vec<usize>> {
    let gold = || {
        if split.has_labels() {
            Ok(split.k_gold())
        } else {
            Err(CliError::Config("`gold` topic count needs a labeled corpus".into()))
        }
    };
    if let Some(raw) = s.get("topic-counts").map(str::to_string) {
        if s.get("topics").is_some() {
            return Err(CliError::Config("give either --topics or --topic-counts".into()));
        }
        let mut counts = Vec::new();
        for part in raw.split(',').map(str::trim) {
            let k = if part.eq_ignore_ascii_case("gold") {
                gold()?
            } else {
                part.parse()
                    .map_err(|_| CliError::Config(format!("--topic-counts: cannot parse `{part}`")))?
            };
            if !counts.contains(&k) {
                counts.push(k);
            }
        }
        s.set("topic-counts", counts.iter().map(usize::to_string).collect::<Vec<_>>().join(","));
        return Ok(counts);
    }
    let k = match s.optional("topics")? {
        Some(k) => k,
        None => gold().map_err(|_| CliError::Usage {
            command: "train",
            message: "train: --topics is required when the corpus has no labels".into(),
        })?,
    };
    s.set("topics", k);
    Ok(vec![k])
}

fn train_config(s: &Settings, topics: usize, seed: u64, delta: f32) -> Result<TrainConfig> {
    let alpha = match s.require("alpha")? {
        "auto" => None,
        _ => s.list("alpha")?,
    };
    let config = TrainConfig {
        topics,
        delta,
        gin: GinConfig {
            tau: s.value("gin-tau")?,
            hidden: s.value("gin-hidden")?,
            layers: s.value("gin-layers")?,
            mlp_hidden_layers: s.value("gin-mlp-layers")?,
            tau_out: s.value("gin-tau-out")?,
            epsilon: s.value("gin-epsilon")?,
        },
        encoder_hidden: s.value("encoder-hidden")?,
        encoder_layers: s.value("encoder-layers")?,
        alpha,
        learning_rate: s.value("learning-rate")?,
        batch_size: s.value("batch-size")?,
        epochs: s.value("epochs")?,
        seed,
        dropout: s.value("dropout")?,
    };
    config.validate()?;
    Ok(config)
}

fn metric_options(s: &Settings) -> Result<MetricOptions> {
    Ok(MetricOptions {
        npmi_window: s.value("npmi-window")?,
        cv_window: s.value("cv-window")?,
        ..MetricOptions::default()
    })
}

fn model_topics(model: &GinopicModel<f32>, n: usize, split: &CorpusSplit) -> Result<TopicSet> {
    let words = topicmodel::top_words(model.beta(), n, &split.vocabulary)?;
    Ok(TopicSet::new(words)?)
}

struct RunRow {
    delta: f32,
    topics: usize,
    seed: u64,
    final_loss: f64,
    report: MetricsReport,
    train_seconds: f64,
    dir: String,
}

fn mean_sd(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    if x.len() < 2 {
        return (mean, 0.0);
    }
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn train(s: &mut Settings, stdout: &mut dyn Write) -> Result<()> {
    if let Some(p) = resolve_preset(s)? {
        let defaults = [
            ("gin-tau", p.gin.tau),
            ("gin-hidden", p.gin.hidden),
            ("gin-layers", p.gin.layers),
            ("gin-tau-out", p.gin.tau_out),
        ];
        for (k, v) in defaults {
            if s.get(k).is_none() {
                s.set(k, v);
            }
        }
    }
    for k in ["gin-tau", "gin-hidden", "gin-layers", "gin-tau-out"] {
        if s.get(k).is_none() {
            return Err(CliError::Usage {
                command: "train",
                message: format!("train: --{k} is required unless --preset names a dataset"),
            });
        }
    }
    let split = load_split(s)?;
    let counts = topic_counts(s, &split)?;
    let seed: u64 = s.value("seed")?;
    let seeds: u64 = s.value("seeds")?;
    if seeds == 0 {
        return Err(CliError::Config("--seeds must be at least 1".into()));
    }
    let sweep: Option<Vec<f32>> = s.list("delta-sweep")?;
    if let Some(deltas) = &sweep {
        for &d in deltas {
            checked_delta(d)?;
        }
    }
    let top_n: usize = s.value("top-n")?;
    let options = metric_options(s)?;
    let embeddings = load_embeddings(s, &split)?;
    let fixed_store = match &sweep {
        Some(_) => {
            if embeddings.is_none() {
                return Err(CliError::Usage {
                    command: "train",
                    message: "train: --delta-sweep needs --embeddings".into(),
                });
            }
            None
        }
        None => Some(load_graphs(s, &split)?),
    };
    // Fail on bad hyperparameters before any output is written.
    let probe_delta = fixed_store.as_ref().map_or(0.0, |g| g.key.delta);
    train_config(s, counts[0], seed, probe_delta)?;

    let mut run = RunDir::create(s)?;
    let reference: Vec<Document> = split.all_documents().cloned().collect();
    let deltas: Vec<Option<f32>> = match &sweep {
        Some(d) => d.iter().map(|&x| Some(x)).collect(),
        None => vec![None],
    };
    let mut rows: Vec<RunRow> = Vec::new();
    let mut graph_stats: BTreeMap<String, (f64, f64)> = BTreeMap::new();
    for delta in deltas {
        let (store, graph_seconds) = match delta {
            Some(d) => {
                let start = Instant::now();
                let (store, _) =
                    docgraph::build_all_graphs(&split, embeddings.as_ref().expect("checked above"), d, None)?;
                (store, start.elapsed().as_secs_f64())
            }
            None => (fixed_store.clone().expect("loaded above"), 0.0),
        };
        let delta = store.key.delta;
        let density = docgraph::graph_density_report(&store.graphs)?;
        graph_stats.insert(delta.to_string(), (density.mean_edges, graph_seconds));
        run.info(&format!(
            "delta {delta}: {:.2} edges per document, graphs built in {graph_seconds:.2}s",
            density.mean_edges
        ));
        for &k in &counts {
            for s_off in 0..seeds {
                let run_seed = seed + s_off;
                let config = train_config(s, k, run_seed, delta)?;
                let name = match sweep {
                    Some(_) => format!("delta{delta}-k{k}-seed{run_seed}"),
                    None => format!("k{k}-seed{run_seed}"),
                };
                let dir = run.file(&name);
                std::fs::create_dir_all(&dir).map_err(|e| io_error(&dir, e))?;
                let start = Instant::now();
                let mut progress = Vec::new();
                let trained = topicmodel::train_with_observer(&split, &store, &config, |r| {
                    if r.epoch % 10 == 0 || r.epoch == config.epochs {
                        progress.push(format!(
                            "{name} epoch {}: loss {:.4} (reconstruction {:.4}, kl {:.4})",
                            r.epoch, r.total, r.reconstruction, r.kl
                        ));
                    }
                })?;
                let train_seconds = start.elapsed().as_secs_f64();
                for line in progress {
                    run.info(&line);
                }
                topicmodel::save_checkpoint(&trained.model, &dir.join("checkpoint.bin"))?;
                topicmodel::write_training_log(&trained.history, &dir.join("training_log.tsv"))?;
                let topics = model_topics(&trained.model, top_n, &split)?;
                metrics::write_topics(&topics, &dir.join("topics.txt"))?;
                let report =
                    metrics::evaluate_topics(&topics, &reference, &split.vocabulary, embeddings.as_ref(), &options)?;
                report.write(&dir.join("metrics"))?;
                rows.push(RunRow {
                    delta,
                    topics: k,
                    seed: run_seed,
                    final_loss: trained.history.last().map_or(f64::NAN, |r| r.total),
                    report,
                    train_seconds,
                    dir: name,
                });
            }
        }
    }

    let opt = |v: Option<f64>| v.map_or("NA".to_string(), |x| format!("{x:.6}"));
    let mut runs = String::from("delta\ttopics\tseed\tfinal_loss\tnpmi\tcv\tirbo\twi_m\twi_c\ttrain_seconds\trun\n");
    for r in &rows {
        writeln!(
            runs,
            "{}\t{}\t{}\t{:.6}\t{:.6}\t{:.6}\t{}\t{}\t{}\t{:.3}\t{}",
            r.delta,
            r.topics,
            r.seed,
            r.final_loss,
            r.report.npmi,
            r.report.cv,
            opt(r.report.irbo),
            opt(r.report.wi_m),
            opt(r.report.wi_c),
            r.train_seconds,
            r.dir
        )
        .expect("writing to a String");
    }
    write_file(&run.file("runs.tsv"), &runs)?;

    let mut summary = String::from(
        "delta\ttopics\truns\tnpmi_mean\tnpmi_sd\tcv_mean\tcv_sd\tirbo_mean\tmean_edges\tgraph_seconds\ttrain_seconds_mean\n",
    );
    let mut groups: Vec<(f32, usize)> = rows.iter().map(|r| (r.delta, r.topics)).collect();
    groups.dedup();
    for (delta, k) in groups {
        let group: Vec<&RunRow> = rows.iter().filter(|r| r.delta == delta && r.topics == k).collect();
        let col = |f: &dyn Fn(&RunRow) -> f64| group.iter().map(|r| f(r)).collect::<Vec<f64>>();
        let (npmi, npmi_sd) = mean_sd(&col(&|r| r.report.npmi));
        let (cv, cv_sd) = mean_sd(&col(&|r| r.report.cv));
        let irbo = group
            .iter()
            .map(|r| r.report.irbo)
            .collect::<Option<Vec<f64>>>()
            .map(|v| mean_sd(&v).0);
        let (train_seconds, _) = mean_sd(&col(&|r| r.train_seconds));
        let (edges, graph_seconds) = graph_stats[&delta.to_string()];
        writeln!(
            summary,
            "{delta}\t{k}\t{}\t{npmi:.6}\t{npmi_sd:.6}\t{cv:.6}\t{cv_sd:.6}\t{}\t{edges:.4}\t{graph_seconds:.3}\t{train_seconds:.3}",
            group.len(),
            opt(irbo),
        )
        .expect("writing to a String");
    }
    write_file(&run.file("summary.tsv"), &summary)?;
    emit(stdout, &summary)
}

pub fn eval_topics(s: &mut Settings, stdout: &mut dyn Write) -> Result<()> {
    let split = load_split(s)?;
    let topics = match (s.optional_path("model"), s.optional_path("topics-file")) {
        (Some(_), Some(_)) => return Err(CliError::Config("give either --model or --topics-file".into())),
        (Some(model), None) => {
            let model = topicmodel::load_checkpoint_for(&model, &split.vocabulary)?;
            model_topics(&model, s.value("top-n")?, &split)?
        }
        (None, Some(file)) => metrics::read_topics(&file)?,
        (None, None) => {
            return Err(CliError::Usage {
                command: "eval-topics",
                message: "eval-topics: --model or --topics-file is required".into(),
            })
        }
    };
    let options = metric_options(s)?;
    let embeddings = load_embeddings(s, &split)?;
    let mut run = RunDir::create(s)?;
    let unknown = topics.ids_lenient(&split.vocabulary).iter().flatten().filter(|&&w| w == u32::MAX).count();
    if unknown > 0 {
        run.info(&format!("{unknown} topic words are not in the vocabulary and score as never occurring"));
    }
    let reference: Vec<Document> = split.all_documents().cloned().collect();
    let report = metrics::evaluate_topics(&topics, &reference, &split.vocabulary, embeddings.as_ref(), &options)?;
    metrics::write_topics(&topics, &run.file("topics.txt"))?;
    report.write(&run.file("metrics"))?;
    emit(stdout, &report.to_tsv())
}

fn thetas(model: &GinopicModel<f32>, docs: &[Document], graphs: &[DocumentGraph]) -> Result<Vec<Vec<f64>>> {
    let d: Vec<&Document> = docs.iter().collect();
    let g: Vec<&DocumentGraph> = graphs.iter().collect();
    Ok(topicmodel::infer_theta(model, &d, &g)?)
}

fn labels_of(docs: &[Document]) -> Result<Vec<u32>> {
    docs.iter()
        .map(|d| d.label.ok_or_else(|| CliError::Config(format!("document on line {} has no label", d.source + 1))))
        .collect()
}

pub fn classify(s: &mut Settings, stdout: &mut dyn Write) -> Result<()> {
    let split = load_split(s)?;
    if !split.has_labels() {
        return Err(CliError::Config(
            "classify needs a labeled corpus; rerun preprocess with --labels".into(),
        ));
    }
    let model = topicmodel::load_checkpoint_for(&s.path("model")?, &split.vocabulary)?;
    let store = load_graphs(s, &split)?;
    let config = ClassifierConfig {
        epochs: s.value("epochs")?,
        learning_rate: s.value("learning-rate")?,
        lambda: s.value("lambda")?,
        seed: s.value("seed")?,
    };
    let mut run = RunDir::create(s)?;
    if model.topics() != split.k_gold() {
        run.info(&format!(
            "model has {} topics; the corpus has {} labels",
            model.topics(),
            split.k_gold()
        ));
    }
    let train_theta = thetas(&model, &split.train, store.train())?;
    let clf = downstream::train_classifier(&train_theta, &labels_of(&split.train)?, split.k_gold(), &config)?;
    downstream::save_classifier(&clf, &run.file("classifier.bin"))?;
    let mut rows = vec![(
        "train",
        downstream::evaluate_accuracy(&clf, &train_theta, &labels_of(&split.train)?)?,
    )];
    for (name, docs, graphs) in [
        ("validation", &split.validation, store.validation()),
        ("test", &split.test, store.test()),
    ] {
        let theta = thetas(&model, docs, graphs)?;
        rows.push((name, downstream::evaluate_accuracy(&clf, &theta, &labels_of(docs)?)?));
    }
    let mut table = String::from("split\taccuracy\n");
    for (name, acc) in rows {
        writeln!(table, "{name}\t{acc:.6}").expect("writing to a String");
    }
    write_file(&run.file("accuracy.tsv"), &table)?;
    emit(stdout, &table)
}

pub fn export(s: &mut Settings, stdout: &mut dyn Write) -> Result<()> {
    let what = s.require("what")?.to_string();
    if !["theta", "beta", "topics"].contains(&what.as_str()) {
        return Err(CliError::Config(format!("--what must be theta, beta or topics, got `{what}`")));
    }
    let split = load_split(s)?;
    let model = topicmodel::load_checkpoint_for(&s.path("model")?, &split.vocabulary)?;
    let written = match what.as_str() {
        "theta" => {
            let store = load_graphs(s, &split)?;
            let part = s.require("split")?.to_string();
            let docs: Vec<&Document> = match part.as_str() {
                "train" => split.train.iter().collect(),
                "validation" => split.validation.iter().collect(),
                "test" => split.test.iter().collect(),
                "all" => split.all_documents().collect(),
                other => {
                    return Err(CliError::Config(format!(
                        "--split must be train, validation, test or all, got `{other}`"
                    )))
                }
            };
            let graphs: Vec<&DocumentGraph> = match part.as_str() {
                "train" => store.train().iter().collect(),
                "validation" => store.validation().iter().collect(),
                "test" => store.test().iter().collect(),
                _ => store.graphs.iter().collect(),
            };
            let run = RunDir::create(s)?;
            let path = run.file("theta.tsv");
            downstream::export_theta(&model, &docs, &graphs, &path)?;
            path
        }
        "beta" => {
            let run = RunDir::create(s)?;
            let path = run.file("beta.tsv");
            let beta = model.beta();
            let mut text = String::from("topic");
            for w in split.vocabulary.words() {
                write!(text, "\t{w}").expect("writing to a String");
            }
            text.push('\n');
            for k in 0..beta.rows() {
                write!(text, "{k}").expect("writing to a String");
                for x in beta.row(k) {
                    write!(text, "\t{x}").expect("writing to a String");
                }
                text.push('\n');
            }
            write_file(&path, &text)?;
            path
        }
        _ => {
            let topics = model_topics(&model, s.value("top-n")?, &split)?;
            let run = RunDir::create(s)?;
            let path = run.file("topics.txt");
            metrics::write_topics(&topics, &path)?;
            path
        }
    };
    emit(stdout, &key_value_table(&[("what", what), ("file", written.display().to_string())]))
}
