//! Processed-corpus cache.
//!
//! Layout (little endian): `GINOCORP1`, version `u32`, vocabulary size, then
//! per word its UTF-8 bytes (`u32` length prefix) and document frequency;
//! label names; then the train, validation and test documents. Each document
//! stores its source line, label (`-1` when absent), token ids and the
//! `(id, f64)` TF-IDF entries. Counts are rebuilt from the token ids.

use std::fs;
use std::path::Path;

use super::{CorpusError, CorpusSplit, Document, Result, Vocabulary};
use crate::binio::{FormatError, Reader, Writer};

pub const CORPUS_MAGIC: &str = "GINOCORP1";
const VERSION: u32 = 1;

pub(crate) fn encode(split: &CorpusSplit) -> Vec<u8> {
    let mut w = Writer::new();
    w.bytes(CORPUS_MAGIC.as_bytes());
    w.u32(VERSION);
    let vocab = &split.vocabulary;
    w.len_u32(vocab.len());
    for (word, &df) in vocab.words().iter().zip(&vocab.doc_frequency) {
        w.str(word);
        w.u32(df);
    }
    w.len_u32(split.label_names.len());
    for name in &split.label_names {
        w.str(name);
    }
    for docs in [&split.train, &split.validation, &split.test] {
        w.len_u32(docs.len());
        for d in docs {
            w.len_u32(d.source);
            w.i32(d.label.map_or(-1, |l| l as i32));
            w.len_u32(d.token_ids.len());
            for &t in &d.token_ids {
                w.u32(t);
            }
            w.len_u32(d.tfidf.len());
            for &(id, x) in &d.tfidf {
                w.u32(id);
                w.f64(x);
            }
        }
    }
    w.finish()
}

pub(crate) fn decode(bytes: &[u8]) -> std::result::Result<CorpusSplit, FormatError> {
    let mut r = Reader::new(bytes);
    r.magic(CORPUS_MAGIC)?;
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(FormatError::Version(version));
    }
    let v = r.len(8, "vocabulary")?;
    let mut words = Vec::with_capacity(v);
    let mut df = Vec::with_capacity(v);
    for _ in 0..v {
        words.push(r.str("vocabulary word")?);
        df.push(r.u32("document frequency")?);
    }
    let mut vocabulary = Vocabulary::new(words).map_err(|e| FormatError::Malformed(e.to_string()))?;
    vocabulary.doc_frequency = df;
    let n_labels = r.len(4, "label names")?;
    let label_names = (0..n_labels).map(|_| r.str("label name")).collect::<std::result::Result<Vec<_>, _>>()?;

    let mut splits: [Vec<Document>; 3] = Default::default();
    for docs in splits.iter_mut() {
        let n = r.len(16, "documents")?;
        for _ in 0..n {
            let source = r.u32("document source")? as usize;
            let label = r.i32("document label")?;
            let len = r.len(4, "token ids")?;
            let mut tokens = Vec::with_capacity(len);
            for _ in 0..len {
                let t = r.u32("token id")?;
                if t as usize >= v {
                    return Err(FormatError::Malformed(format!("token id {t} outside vocabulary of {v}")));
                }
                tokens.push(t);
            }
            let mut doc = Document::from_tokens(tokens, source);
            doc.label = (label >= 0).then_some(label as u32);
            let nt = r.len(12, "tfidf")?;
            for _ in 0..nt {
                let id = r.u32("tfidf id")?;
                let x = r.f64("tfidf value")?;
                doc.tfidf.push((id, x));
            }
            docs.push(doc);
        }
    }
    r.expect_end()?;
    let [train, validation, test] = splits;
    Ok(CorpusSplit {
        vocabulary,
        train,
        validation,
        test,
        label_names,
    })
}

pub fn save_corpus(split: &CorpusSplit, path: &Path) -> Result<()> {
    fs::write(path, encode(split)).map_err(|e| CorpusError::io(path, e))
}

pub fn load_corpus(path: &Path) -> Result<CorpusSplit> {
    let bytes = fs::read(path).map_err(|e| CorpusError::io(path, e))?;
    decode(&bytes).map_err(|source| CorpusError::Format {
        path: path.to_path_buf(),
        source,
    })
}

/// One word per line; the line number is the word id.
pub fn write_vocabulary(vocabulary: &Vocabulary, path: &Path) -> Result<()> {
    let mut text = vocabulary.words().join("\n");
    text.push('\n');
    fs::write(path, text).map_err(|e| CorpusError::io(path, e))
}

/// Lines of a UTF-8 text file, one document (or label) per line.
pub fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| CorpusError::io(path, e))?;
    Ok(text.lines().map(str::to_string).collect())
}

#[cfg(test)]
mod tests {
    use super::super::{build_corpus, PreprocessOptions, SplitRatios};
    use super::*;
    use proptest::prelude::*;

    fn sample() -> CorpusSplit {
        let texts: Vec<String> = (0..40)
            .map(|i| format!("alpha{} beta gamma{} delta alpha{} epsilon", i % 3, i % 5, i % 7))
            .collect();
        let labels: Vec<String> = (0..40).map(|i| ["sport", "tech"][i % 2].to_string()).collect();
        build_corpus(&texts, Some(&labels), &PreprocessOptions::default(), SplitRatios::default(), 4)
            .unwrap()
            .0
    }

    #[test]
    fn truncated_cache_is_rejected() {
        let bytes = encode(&sample());
        for cut in [0, 5, bytes.len() / 2, bytes.len() - 1] {
            assert!(decode(&bytes[..cut]).is_err(), "cut at {cut}");
        }
        assert!(decode(b"GINOGRAPH1....").is_err());
    }

    #[test]
    fn vocabulary_export_is_line_indexed() {
        let split = sample();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.txt");
        write_vocabulary(&split.vocabulary, &path).unwrap();
        let lines = read_lines(&path).unwrap();
        for (i, w) in lines.iter().enumerate() {
            assert_eq!(split.vocabulary.id(w), Some(i as u32));
        }
    }

    proptest! {
        #[test]
        fn cache_round_trip_is_bit_exact(seed in 0u64..1000, n in 20usize..60) {
            let texts: Vec<String> = (0..n)
                .map(|i| format!("word{} other{} third{} more{}", (i as u64 * seed) % 11, i % 4, i % 9, i % 2))
                .collect();
            let (split, _) = build_corpus(&texts, None, &PreprocessOptions::default(), SplitRatios::default(), seed).unwrap();
            let back = decode(&encode(&split)).unwrap();
            prop_assert_eq!(&back, &split);
            for (a, b) in back.all_documents().zip(split.all_documents()) {
                for (x, y) in a.tfidf.iter().zip(&b.tfidf) {
                    prop_assert_eq!(x.1.to_bits(), y.1.to_bits());
                }
            }
        }
    }
}
