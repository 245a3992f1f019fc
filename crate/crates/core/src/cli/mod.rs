//! Command-line driver: corpus → graphs → training → evaluation.
//!
//! Every option of a subcommand is resolved from, in order of precedence,
//! its `--flag`, the `[subcommand]` section of `--config`, that file's
//! `[global]` section, and the built-in default. The resolved values are
//! written to `<out>/config.ini`, so `ginopic <cmd> --config
//! <out>/config.ini` repeats a run.
//!
//! Exit codes: 0 success, 1 internal failure, 2 usage or configuration
//! error, 3 unreadable or unwritable file, 4 training diverged.

mod commands;
mod config;

use std::ffi::OsString;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Arg, ArgMatches, Command};
use thiserror::Error;

use crate::corpus::CorpusError;
use crate::docgraph::GraphError;
use crate::downstream::DownstreamError;
use crate::embedding::EmbeddingError;
use crate::metrics::MetricsError;
use crate::tensor::TensorError;
use crate::topicmodel::TopicModelError;

pub use config::{render_section, ConfigFile};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_DIVERGED: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Clap(#[from] clap::Error),
    #[error("{message}")]
    Usage { command: &'static str, message: String },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("I/O error: {0}")]
    Io(String),
    #[error("training diverged: {0}")]
    Diverged(String),
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Clap(e) if !e.use_stderr() => EXIT_OK,
            CliError::Clap(_) | CliError::Usage { .. } | CliError::Config(_) => EXIT_CONFIG,
            CliError::Io(_) => EXIT_IO,
            CliError::Diverged(_) => EXIT_DIVERGED,
            CliError::Failed(_) => EXIT_FAILURE,
        }
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        match e {
            CorpusError::Io { .. } | CorpusError::Format { .. } => CliError::Io(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<EmbeddingError> for CliError {
    fn from(e: EmbeddingError) -> Self {
        match e {
            EmbeddingError::NoOverlap | EmbeddingError::VocabularyMismatch | EmbeddingError::Invalid(_) => {
                CliError::Config(e.to_string())
            }
            _ => CliError::Io(e.to_string()),
        }
    }
}

impl From<GraphError> for CliError {
    fn from(e: GraphError) -> Self {
        match e {
            GraphError::Io { .. } | GraphError::Format { .. } => CliError::Io(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<TopicModelError> for CliError {
    fn from(e: TopicModelError) -> Self {
        match e {
            TopicModelError::Graph(g) => g.into(),
            TopicModelError::Divergence { .. } | TopicModelError::Tensor(TensorError::NonFiniteActivation(_)) => {
                CliError::Diverged(e.to_string())
            }
            TopicModelError::Tensor(_) => CliError::Failed(e.to_string()),
            TopicModelError::Io { .. } | TopicModelError::Format { .. } => CliError::Io(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        match e {
            MetricsError::Io { .. } | MetricsError::Format { .. } => CliError::Io(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<DownstreamError> for CliError {
    fn from(e: DownstreamError) -> Self {
        match e {
            DownstreamError::Model(m) => m.into(),
            DownstreamError::Io { .. } | DownstreamError::Format { .. } => CliError::Io(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Clone, Copy, Debug)]
pub struct OptSpec {
    pub key: &'static str,
    pub default: Option<&'static str>,
    pub help: &'static str,
}

const fn opt(key: &'static str, default: Option<&'static str>, help: &'static str) -> OptSpec {
    OptSpec { key, default, help }
}

#[derive(Clone, Copy, Debug)]
pub struct CommandSpec {
    pub name: &'static str,
    pub about: &'static str,
    pub options: &'static [OptSpec],
}

const TRAIN_OPTIONS: [OptSpec; 27] = [
    opt("corpus", None, "processed corpus file"),
    opt("graphs", None, "graph cache built for the corpus (not used with --delta-sweep)"),
    opt("embeddings", None, "word vectors; required by --delta-sweep, enables wI-M/wI-C"),
    opt("oov-seed", Some("0"), "seed for vectors of words missing from --embeddings"),
    opt("preset", Some("custom"), "dataset preset: 20ng, bbc, ss, bio, so or custom"),
    opt("topics", None, "topic count K (defaults to the number of labels)"),
    opt("topic-counts", None, "comma list of topic counts; `gold` means the number of labels"),
    opt("seed", Some("0"), "first random seed"),
    opt("seeds", Some("1"), "number of seeds per setting, counting up from --seed"),
    opt("epochs", Some("50"), "training epochs"),
    opt("learning-rate", Some("0.002"), "Adam step size"),
    opt("batch-size", Some("64"), "documents per minibatch"),
    opt("encoder-hidden", Some("100"), "encoder width"),
    opt("encoder-layers", Some("1"), "encoder depth"),
    opt("dropout", Some("0.2"), "encoder dropout rate"),
    opt("alpha", Some("auto"), "Dirichlet prior: `auto` (1/K each) or a comma list of K values"),
    opt("gin-tau", None, "node feature width (taken from --preset when omitted)"),
    opt("gin-hidden", None, "hidden width of the GIN MLPs"),
    opt("gin-layers", None, "number of GIN layers"),
    opt("gin-mlp-layers", Some("1"), "hidden layers inside each GIN MLP"),
    opt("gin-tau-out", None, "output width of the last GIN layer"),
    opt("gin-epsilon", Some("0"), "self-loop weight epsilon"),
    opt("delta-sweep", None, "comma list of thresholds; rebuilds graphs for each"),
    opt("top-n", Some("10"), "top words per topic for evaluation"),
    opt("npmi-window", Some("10"), "NPMI sliding window"),
    opt("cv-window", Some("110"), "CV sliding window"),
    opt("out", Some("runs/train"), "run directory"),
];

pub const COMMANDS: &[CommandSpec] = &[
    CommandSpec {
        name: "preprocess",
        about: "Tokenize, build the vocabulary, split and weight a raw corpus",
        options: &[
            opt("input", None, "text file, one document per line"),
            opt("labels", None, "text file, one label per document line"),
            opt("max-vocab", Some("2000"), "keep this many most frequent words"),
            opt("min-word-len", Some("3"), "drop shorter tokens"),
            opt("min-doc-len", Some("3"), "drop documents with fewer vocabulary tokens"),
            opt("lemmatize", Some("true"), "fold inflected forms (true or false)"),
            opt("stopwords", None, "file of words to remove, one per line"),
            opt("split", Some("0.70,0.15,0.15"), "train, validation and test shares"),
            opt("seed", Some("0"), "split seed"),
            opt("out", Some("runs/preprocess"), "run directory"),
        ],
    },
    CommandSpec {
        name: "build-graphs",
        about: "Build one word-similarity graph per document",
        options: &[
            opt("corpus", None, "processed corpus file"),
            opt("embeddings", None, "word vectors, one `word v1 v2 ...` line per word"),
            opt("oov-seed", Some("0"), "seed for vectors of words missing from --embeddings"),
            opt("preset", Some("custom"), "dataset preset supplying the default threshold"),
            opt("delta", None, "edge threshold in [0, 1]"),
            opt("out", Some("runs/build-graphs"), "run directory"),
        ],
    },
    CommandSpec {
        name: "train",
        about: "Train topic models, optionally over seeds, topic counts and thresholds",
        options: &TRAIN_OPTIONS,
    },
    CommandSpec {
        name: "eval-topics",
        about: "Score topics for coherence and diversity",
        options: &[
            opt("model", None, "checkpoint to take topics from"),
            opt("topics-file", None, "topics, one line of words each (instead of --model)"),
            opt("corpus", None, "processed corpus used as coherence reference"),
            opt("embeddings", None, "word vectors for wI-M and wI-C"),
            opt("oov-seed", Some("0"), "seed for vectors of words missing from --embeddings"),
            opt("top-n", Some("10"), "top words per topic taken from --model"),
            opt("npmi-window", Some("10"), "NPMI sliding window"),
            opt("cv-window", Some("110"), "CV sliding window"),
            opt("out", Some("runs/eval-topics"), "run directory"),
        ],
    },
    CommandSpec {
        name: "classify",
        about: "Fit a linear SVM on training topic proportions and report accuracy",
        options: &[
            opt("model", None, "checkpoint"),
            opt("corpus", None, "labeled processed corpus"),
            opt("graphs", None, "graph cache built for the corpus"),
            opt("seed", Some("0"), "classifier seed"),
            opt("epochs", Some("100"), "SGD epochs"),
            opt("learning-rate", Some("0.01"), "initial SGD step"),
            opt("lambda", Some("0.0001"), "L2 strength"),
            opt("out", Some("runs/classify"), "run directory"),
        ],
    },
    CommandSpec {
        name: "export",
        about: "Write topic proportions, topic-word weights or top words",
        options: &[
            opt("model", None, "checkpoint"),
            opt("what", None, "theta, beta or topics"),
            opt("corpus", None, "processed corpus the model was trained on"),
            opt("graphs", None, "graph cache (for theta)"),
            opt("split", Some("all"), "documents for theta: train, validation, test or all"),
            opt("top-n", Some("10"), "top words per topic"),
            opt("out", Some("runs/export"), "run directory"),
        ],
    },
];

pub fn command_spec(name: &str) -> Option<&'static CommandSpec> {
    COMMANDS.iter().find(|c| c.name == name)
}

pub fn build_cli() -> Command {
    let mut cli = Command::new("ginopic")
        .about("Graph-informed neural topic modeling")
        .version(env!("CARGO_PKG_VERSION"))
        .subcommand_required(true)
        .arg_required_else_help(true)
        .arg(
            Arg::new("config")
                .long("config")
                .global(true)
                .value_name("FILE")
                .help("key = value settings with [global] and per-command sections"),
        );
    for spec in COMMANDS {
        let mut sub = Command::new(spec.name).about(spec.about);
        for o in spec.options {
            let help = match o.default {
                Some(d) => format!("{} [default: {d}]", o.help),
                None => o.help.to_string(),
            };
            sub = sub.arg(Arg::new(o.key).long(o.key).value_name("VALUE").help(help));
        }
        cli = cli.subcommand(sub);
    }
    cli
}

/// Fully resolved options of one subcommand, in declaration order.
#[derive(Clone, Debug, PartialEq)]
pub struct Settings {
    command: &'static str,
    entries: Vec<(&'static str, Option<String>)>,
}

impl Settings {
    pub fn resolve(spec: &'static CommandSpec, flags: &ArgMatches, file: Option<&ConfigFile>) -> Result<Self> {
        if let Some(file) = file {
            if let Some((k, _)) = file.section(spec.name).find(|(k, _)| !spec.options.iter().any(|o| o.key == *k)) {
                return Err(CliError::Config(format!("unknown key `{k}` in section [{}]", spec.name)));
            }
        }
        let entries = spec
            .options
            .iter()
            .map(|o| {
                let value = flags
                    .get_one::<String>(o.key)
                    .cloned()
                    .or_else(|| file.and_then(|f| f.get(spec.name, o.key)).map(str::to_string))
                    .or_else(|| file.and_then(|f| f.get("global", o.key)).map(str::to_string))
                    .or_else(|| o.default.map(str::to_string));
                (o.key, value)
            })
            .collect();
        Ok(Settings {
            command: spec.name,
            entries,
        })
    }

    pub fn command(&self) -> &'static str {
        self.command
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| *k == key)
            .unwrap_or_else(|| panic!("`{key}` is not an option of {}", self.command))
            .1
            .as_deref()
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        let slot = self
            .entries
            .iter_mut()
            .find(|(k, _)| *k == key)
            .unwrap_or_else(|| panic!("`{key}` is not an option of {}", self.command));
        slot.1 = Some(value.to_string());
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key).ok_or_else(|| CliError::Usage {
            command: self.command,
            message: format!("{}: --{key} is required", self.command),
        })
    }

    fn parse_str<T: FromStr>(&self, key: &str, raw: &str) -> Result<T> {
        raw.trim()
            .parse()
            .map_err(|_| CliError::Config(format!("--{key}: cannot parse `{raw}`")))
    }

    pub fn optional<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.get(key).map(|raw| self.parse_str(key, raw)).transpose()
    }

    pub fn value<T: FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.require(key)?;
        self.parse_str(key, raw)
    }

    pub fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>> {
        self.get(key)
            .map(|raw| raw.split(',').map(|p| self.parse_str(key, p)).collect())
            .transpose()
    }

    pub fn path(&self, key: &str) -> Result<PathBuf> {
        self.require(key).map(PathBuf::from)
    }

    pub fn optional_path(&self, key: &str) -> Option<PathBuf> {
        self.get(key).map(PathBuf::from)
    }

    /// Set options as a `[command]` section; unset optional inputs are left out.
    pub fn render(&self) -> String {
        let entries: Vec<(String, String)> = self
            .entries
            .iter()
            .filter_map(|(k, v)| v.as_ref().map(|v| (k.to_string(), v.clone())))
            .collect();
        render_section(self.command, &entries)
    }
}

/// The run directory of one invocation, with its log.
pub struct RunDir {
    pub path: PathBuf,
    log: File,
}

impl RunDir {
    /// Creates `out`, writes the resolved settings and opens `run.log`.
    pub fn create(settings: &Settings) -> Result<Self> {
        let path = settings.path("out")?;
        std::fs::create_dir_all(&path).map_err(|e| io_error(&path, e))?;
        let config = path.join("config.ini");
        std::fs::write(&config, settings.render()).map_err(|e| io_error(&config, e))?;
        let log_path = path.join("run.log");
        let log = File::create(&log_path).map_err(|e| io_error(&log_path, e))?;
        let mut dir = RunDir { path, log };
        dir.info(&format!("ginopic {} {}", env!("CARGO_PKG_VERSION"), settings.command));
        Ok(dir)
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }

    /// Diagnostics go to stderr and `run.log`.
    pub fn info(&mut self, message: &str) {
        eprintln!("{message}");
        // A full disk should not abort a run whose outputs are still writable.
        let _ = writeln!(self.log, "{message}");
    }
}

pub(crate) fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var("GINOPIC_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("GINOPIC_THREADS must be a positive integer, got `{raw}`")))?;
    // Fails only if the pool already exists, as in repeated calls within one process.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

/// Parses `args` (program name first) and runs the subcommand, writing data
/// tables to `stdout`.
pub fn run<I, T>(args: I, stdout: &mut dyn Write) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = build_cli().try_get_matches_from(args)?;
    configure_threads()?;
    let file = match matches.get_one::<String>("config") {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| io_error(Path::new(path), e))?;
            Some(ConfigFile::parse(&text).map_err(|m| CliError::Config(format!("{path}: {m}")))?)
        }
        None => None,
    };
    let (name, sub) = matches.subcommand().expect("a subcommand is required");
    let spec = command_spec(name).expect("subcommands come from COMMANDS");
    let mut settings = Settings::resolve(spec, sub, file.as_ref())?;
    match name {
        "preprocess" => commands::preprocess(&mut settings, stdout),
        "build-graphs" => commands::build_graphs(&mut settings, stdout),
        "train" => commands::train(&mut settings, stdout),
        "eval-topics" => commands::eval_topics(&mut settings, stdout),
        "classify" => commands::classify(&mut settings, stdout),
        "export" => commands::export(&mut settings, stdout),
        _ => unreachable!("unknown subcommand {name}"),
    }
}

/// Runs and reports errors on stderr; returns the process exit code.
pub fn main_exit<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match run(args, &mut out) {
        Ok(()) => EXIT_OK,
        Err(CliError::Clap(e)) => {
            let _ = e.print();
            CliError::Clap(e).exit_code()
        }
        Err(e) => {
            eprintln!("error: {e}");
            if let CliError::Usage { command, .. } = &e {
                let mut cli = build_cli();
                cli.build();
                if let Some(sub) = cli.find_subcommand_mut(command) {
                    eprintln!("\n{}", sub.render_usage());
                    eprintln!("Run `ginopic {command} --help` for all options.");
                }
            }
            e.exit_code()
        }
    }
}
