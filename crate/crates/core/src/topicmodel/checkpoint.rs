//! `GINOCKPT1` files: a UTF-8 `key=value` header terminated by an empty line,
//! then every parameter tensor and batch-norm running statistic as
//! little-endian `f32` in header order.
//!
//! The random state is `(seed, epochs_completed)`: every draw of epoch `e`
//! comes from streams indexed by `e`, so those two numbers position all
//! generators exactly.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use super::model::GinopicModel;
use super::{Result, TopicModelError, TrainConfig};
use crate::binio::{FormatError, Reader, Writer};
use crate::corpus::Vocabulary;
use crate::gin::GinConfig;

pub const CHECKPOINT_MAGIC: &str = "GINOCKPT1";
const VERSION: u32 = 1;

fn header(model: &GinopicModel<f32>) -> String {
    let c = &model.config;
    let mut h = String::new();
    let mut kv = |k: &str, v: String| writeln!(h, "{k}={v}").expect("writing to a String");
    kv("version", VERSION.to_string());
    kv("vocab_size", model.vocab_size.to_string());
    kv("vocab_hash", model.vocab_hash.clone());
    kv("topics", c.topics.to_string());
    kv("delta", c.delta.to_string());
    kv("gin.tau", c.gin.tau.to_string());
    kv("gin.hidden", c.gin.hidden.to_string());
    kv("gin.layers", c.gin.layers.to_string());
    kv("gin.mlp_hidden_layers", c.gin.mlp_hidden_layers.to_string());
    kv("gin.tau_out", c.gin.tau_out.to_string());
    kv("gin.epsilon", c.gin.epsilon.to_string());
    kv("encoder_hidden", c.encoder_hidden.to_string());
    kv("encoder_layers", c.encoder_layers.to_string());
    let alpha = match &c.alpha {
        None => "default".to_string(),
        Some(a) => a.iter().map(f64::to_string).collect::<Vec<_>>().join(","),
    };
    kv("alpha", alpha);
    kv("learning_rate", c.learning_rate.to_string());
    kv("batch_size", c.batch_size.to_string());
    kv("epochs", c.epochs.to_string());
    kv("seed", c.seed.to_string());
    kv("dropout", c.dropout.to_string());
    kv("epochs_completed", model.epochs_completed.to_string());
    let shapes: Vec<String> = model
        .params
        .iter()
        .map(|(name, t)| format!("{name}:{}x{}", t.rows(), t.cols()))
        .collect();
    kv("params", shapes.join(" "));
    let stats: Vec<String> = model.running.iter().map(|r| r.mean.len().to_string()).collect();
    kv("running_stats", stats.join(" "));
    h
}

pub fn encode_checkpoint(model: &GinopicModel<f32>) -> Vec<u8> {
    let mut w = Writer::new();
    w.bytes(CHECKPOINT_MAGIC.as_bytes());
    w.bytes(b"\n");
    w.bytes(header(model).as_bytes());
    w.bytes(b"\n");
    for (_, t) in model.params.iter() {
        t.data().iter().for_each(|&x| w.f32(x));
    }
    for r in &model.running {
        r.mean.iter().chain(&r.var).for_each(|&x| w.f32(x));
    }
    w.finish()
}

fn malformed(msg: impl Into<String>) -> FormatError {
    FormatError::Malformed(msg.into())
}

struct Header(BTreeMap<String, String>);

impl Header {
    fn raw(&self, key: &str) -> std::result::Result<&str, FormatError> {
        self.0
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| malformed(format!("header lacks `{key}`")))
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> std::result::Result<T, FormatError> {
        let v = self.raw(key)?;
        v.parse().map_err(|_| malformed(format!("header `{key}` has invalid value `{v}`")))
    }
}

fn parse_header(text: &str) -> std::result::Result<Header, FormatError> {
    let mut map = BTreeMap::new();
    for line in text.lines() {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| malformed(format!("header line without `=`: {line}")))?;
        map.insert(k.to_string(), v.to_string());
    }
    Ok(Header(map))
}

fn config_from(h: &Header) -> std::result::Result<TrainConfig, FormatError> {
    let alpha = match h.raw("alpha")? {
        "default" => None,
        list => Some(
            list.split(',')
                .map(|a| a.parse::<f64>().map_err(|_| malformed(format!("bad Dirichlet parameter `{a}`"))))
                .collect::<std::result::Result<Vec<_>, _>>()?,
        ),
    };
    Ok(TrainConfig {
        topics: h.parse("topics")?,
        delta: h.parse("delta")?,
        gin: GinConfig {
            tau: h.parse("gin.tau")?,
            hidden: h.parse("gin.hidden")?,
            layers: h.parse("gin.layers")?,
            mlp_hidden_layers: h.parse("gin.mlp_hidden_layers")?,
            tau_out: h.parse("gin.tau_out")?,
            epsilon: h.parse("gin.epsilon")?,
        },
        encoder_hidden: h.parse("encoder_hidden")?,
        encoder_layers: h.parse("encoder_layers")?,
        alpha,
        learning_rate: h.parse("learning_rate")?,
        batch_size: h.parse("batch_size")?,
        epochs: h.parse("epochs")?,
        seed: h.parse("seed")?,
        dropout: h.parse("dropout")?,
    })
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<GinopicModel<f32>> {
    let fmt = |e: FormatError| TopicModelError::Format {
        path: Default::default(),
        source: e,
    };
    let mut r = Reader::new(bytes);
    r.magic(CHECKPOINT_MAGIC).map_err(fmt)?;
    r.take(1, "magic header").map_err(fmt)?;
    let body = &bytes[r.position()..];
    let end = body
        .windows(2)
        .position(|w| w == b"\n\n")
        .ok_or_else(|| fmt(FormatError::Truncated("header")))?;
    let text = std::str::from_utf8(&body[..end]).map_err(|_| fmt(malformed("header is not UTF-8")))?;
    let h = parse_header(text).map_err(fmt)?;
    let version: u32 = h.parse("version").map_err(fmt)?;
    if version != VERSION {
        return Err(fmt(FormatError::Version(version)));
    }
    r.take(end + 2, "header").map_err(fmt)?;

    let config = config_from(&h).map_err(fmt)?;
    let vocab_size: usize = h.parse("vocab_size").map_err(fmt)?;
    let mut model = GinopicModel::<f32>::new(&config, vocab_size, h.raw("vocab_hash").map_err(fmt)?)?;
    model.epochs_completed = h.parse("epochs_completed").map_err(fmt)?;

    let expected: Vec<String> = model
        .params
        .iter()
        .map(|(name, t)| format!("{name}:{}x{}", t.rows(), t.cols()))
        .collect();
    if h.raw("params").map_err(fmt)? != expected.join(" ") {
        return Err(fmt(malformed("parameter layout does not match the configuration")));
    }
    let stats: Vec<String> = model.running.iter().map(|s| s.mean.len().to_string()).collect();
    if h.raw("running_stats").map_err(fmt)? != stats.join(" ") {
        return Err(fmt(malformed("running statistics do not match the configuration")));
    }

    let ids: Vec<_> = model.params.ids().collect();
    for id in ids {
        for x in model.params.get_mut(id).data_mut() {
            *x = r.f32("parameters").map_err(fmt)?;
        }
    }
    for s in &mut model.running {
        for x in s.mean.iter_mut().chain(s.var.iter_mut()) {
            *x = r.f32("running statistics").map_err(fmt)?;
        }
    }
    r.expect_end().map_err(fmt)?;
    Ok(model)
}

pub fn save_checkpoint(model: &GinopicModel<f32>, path: &Path) -> Result<()> {
    std::fs::write(path, encode_checkpoint(model)).map_err(|source| TopicModelError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_checkpoint(path: &Path) -> Result<GinopicModel<f32>> {
    let bytes = std::fs::read(path).map_err(|source| TopicModelError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode_checkpoint(&bytes).map_err(|e| match e {
        TopicModelError::Format { source, .. } => TopicModelError::Format {
            path: path.to_path_buf(),
            source,
        },
        other => other,
    })
}

/// Loads a checkpoint and refuses it unless it was trained on `vocabulary`.
pub fn load_checkpoint_for(path: &Path, vocabulary: &Vocabulary) -> Result<GinopicModel<f32>> {
    let model = load_checkpoint(path)?;
    model.check_vocabulary(vocabulary)?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topicmodel::preset;

    fn model() -> GinopicModel<f32> {
        let mut config = TrainConfig::from_preset(&preset("so").unwrap(), 3, 9);
        config.gin.tau = 4;
        config.gin.hidden = 5;
        config.gin.tau_out = 3;
        config.encoder_hidden = 6;
        config.alpha = Some(vec![0.1, 0.7, 1.0 / 3.0]);
        let mut m = GinopicModel::<f32>::new(&config, 7, "abc").unwrap();
        m.epochs_completed = 4;
        m.running[0].mean[1] = 0.123_456_79;
        m
    }

    #[test]
    fn round_trip_is_exact() {
        let m = model();
        let bytes = encode_checkpoint(&m);
        assert!(bytes.starts_with(b"GINOCKPT1\nversion=1\n"));
        assert_eq!(decode_checkpoint(&bytes).unwrap(), m);
    }

    #[test]
    fn every_truncation_is_rejected() {
        let bytes = encode_checkpoint(&model());
        for cut in (0..bytes.len()).step_by(7) {
            assert!(decode_checkpoint(&bytes[..cut]).is_err(), "cut at {cut}");
        }
        let mut longer = bytes.clone();
        longer.push(0);
        assert!(decode_checkpoint(&longer).is_err());
    }

    #[test]
    fn unknown_version_is_rejected() {
        let mut tampered = encode_checkpoint(&model());
        let at = tampered.windows(9).position(|w| w == b"version=1").unwrap();
        tampered[at + 8] = b'7';
        let err = decode_checkpoint(&tampered).unwrap_err();
        assert!(matches!(
            err,
            TopicModelError::Format {
                source: FormatError::Version(7),
                ..
            }
        ));
    }
}
