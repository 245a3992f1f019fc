use super::{CorpusError, Document, Result, Vocabulary};

/// Smoothed inverse document frequency fit on one document set.
#[derive(Clone, Debug, PartialEq)]
pub struct Idf {
    pub n_docs: usize,
    pub doc_frequency: Vec<u32>,
}

impl Idf {
    pub fn fit(documents: &[Document], vocab_size: usize) -> Self {
        let mut doc_frequency = vec![0u32; vocab_size];
        for d in documents {
            for &(id, _) in &d.counts {
                doc_frequency[id as usize] += 1;
            }
        }
        Idf {
            n_docs: documents.len(),
            doc_frequency,
        }
    }

    /// `ln((1 + N) / (1 + df)) + 1`; finite for words unseen at fit time.
    pub fn weight(&self, id: u32) -> f64 {
        idf(self.n_docs, self.doc_frequency[id as usize])
    }

    pub fn apply(&self, doc: &mut Document) {
        doc.tfidf = doc.counts.iter().map(|&(id, c)| (id, c as f64 * self.weight(id))).collect();
    }
}

fn idf(n_docs: usize, df: u32) -> f64 {
    ((1.0 + n_docs as f64) / (1.0 + df as f64)).ln() + 1.0
}

/// Fills `tfidf` on every document using `vocabulary.doc_frequency`, which must
/// have been counted over exactly these documents.
pub fn compute_tfidf(documents: &mut [Document], vocabulary: &Vocabulary) -> Result<()> {
    let n = documents.len();
    for d in documents.iter() {
        for &(id, _) in &d.counts {
            let df = vocabulary.doc_frequency.get(id as usize).copied().unwrap_or(0);
            if df == 0 {
                return Err(CorpusError::Inconsistent(format!(
                    "word `{}` occurs in a document but has document frequency 0",
                    vocabulary.words().get(id as usize).map_or("?", |s| s.as_str())
                )));
            }
        }
    }
    for d in documents.iter_mut() {
        d.tfidf = d
            .counts
            .iter()
            .map(|&(id, c)| (id, c as f64 * idf(n, vocabulary.doc_frequency[id as usize])))
            .collect();
    }
    Ok(())
}
