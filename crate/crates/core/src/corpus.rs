//! Tokenization, corpus container, vocabulary and the corpus/label file readers.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TokenizeConfig {
    /// Words appearing in fewer documents than this are dropped.
    pub min_df: usize,
}

impl Default for TokenizeConfig {
    fn default() -> Self {
        Self { min_df: 2 }
    }
}

/// Lowercases, replaces every non-alphanumeric character with whitespace and
/// splits on whitespace.
pub fn tokenize(raw: &str) -> Result<Vec<String>> {
    let tokens: Vec<String> = raw
        .chars()
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect::<String>()
        .to_lowercase()
        .split_whitespace()
        .map(str::to_owned)
        .collect();
    if tokens.is_empty() {
        return Err(Error::EmptyDocument { index: 0 });
    }
    Ok(tokens)
}

/// Tokenizes every document and drops words whose document frequency is
/// below `config.min_df`.
pub fn tokenize_corpus<S: AsRef<str>>(raws: &[S], config: &TokenizeConfig) -> Result<Vec<Vec<String>>> {
    let docs = raws
        .iter()
        .enumerate()
        .map(|(index, raw)| tokenize(raw.as_ref()).map_err(|_| Error::EmptyDocument { index }))
        .collect::<Result<Vec<_>>>()?;

    let mut df: HashMap<&str, usize> = HashMap::new();
    for doc in &docs {
        for w in doc.iter().map(String::as_str).collect::<HashSet<_>>() {
            *df.entry(w).or_default() += 1;
        }
    }
    let keep: HashSet<String> = df
        .into_iter()
        .filter(|&(_, n)| n >= config.min_df)
        .map(|(w, _)| w.to_owned())
        .collect();

    docs.iter()
        .enumerate()
        .map(|(index, doc)| {
            let kept: Vec<String> = doc.iter().filter(|w| keep.contains(*w)).cloned().collect();
            if kept.is_empty() {
                Err(Error::EmptyDocument { index })
            } else {
                Ok(kept)
            }
        })
        .collect()
}

/// Tokenized documents with optional labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub documents: Vec<Vec<String>>,
    pub labels: Vec<Option<usize>>,
    pub class_names: Vec<String>,
    /// True for documents whose label enters the supervised loss.
    pub train_mask: Vec<bool>,
}

impl Corpus {
    pub fn new(
        documents: Vec<Vec<String>>,
        labels: Vec<Option<usize>>,
        class_names: Vec<String>,
        train_mask: Vec<bool>,
    ) -> Result<Self> {
        let n = documents.len();
        if labels.len() != n || train_mask.len() != n {
            return Err(Error::Data(format!(
                "{n} documents but {} labels and {} mask entries",
                labels.len(),
                train_mask.len()
            )));
        }
        if let Some(index) = documents.iter().position(Vec::is_empty) {
            return Err(Error::EmptyDocument { index });
        }
        for (i, (label, &train)) in labels.iter().zip(&train_mask).enumerate() {
            match label {
                Some(c) if *c >= class_names.len() => {
                    return Err(Error::Data(format!(
                        "document {i} has class id {c}, only {} classes",
                        class_names.len()
                    )))
                }
                None if train => {
                    return Err(Error::Data(format!("document {i} is marked train but has no label")))
                }
                _ => {}
            }
        }
        Ok(Self {
            documents,
            labels,
            class_names,
            train_mask,
        })
    }

    pub fn unlabeled(documents: Vec<Vec<String>>) -> Result<Self> {
        let n = documents.len();
        Self::new(documents, vec![None; n], Vec::new(), vec![false; n])
    }

    pub fn n_docs(&self) -> usize {
        self.documents.len()
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    /// Labeled documents outside the training mask.
    pub fn test_mask(&self) -> Vec<bool> {
        self.labels
            .iter()
            .zip(&self.train_mask)
            .map(|(l, &t)| l.is_some() && !t)
            .collect()
    }

    /// Reads a one-document-per-line corpus file and an optional label file.
    pub fn load(corpus_path: &Path, labels_path: Option<&Path>, config: &TokenizeConfig) -> Result<Self> {
        let text = fs::read_to_string(corpus_path).map_err(|e| Error::io(corpus_path, e))?;
        let raws: Vec<&str> = text.lines().collect();
        let documents = tokenize_corpus(&raws, config)?;
        match labels_path {
            None => Self::unlabeled(documents),
            Some(p) => {
                let label_text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                let parsed = parse_labels(&label_text, documents.len())?;
                Self::new(documents, parsed.labels, parsed.class_names, parsed.train_mask)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedLabels {
    pub labels: Vec<Option<usize>>,
    pub class_names: Vec<String>,
    pub train_mask: Vec<bool>,
}

/// Parses `<doc_index>\t<class_name>\t<train|test>` lines. Class ids follow
/// the lexicographic order of class names.
pub fn parse_labels(text: &str, n_docs: usize) -> Result<ParsedLabels> {
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let [idx, class, split] = fields[..] else {
            return Err(Error::Data(format!(
                "label line {}: expected 3 tab-separated fields, found {}",
                lineno + 1,
                fields.len()
            )));
        };
        let idx: usize = idx
            .trim()
            .parse()
            .map_err(|_| Error::Data(format!("label line {}: bad document index {idx:?}", lineno + 1)))?;
        if idx >= n_docs {
            return Err(Error::Data(format!(
                "label line {}: document index {idx} out of range for {n_docs} documents",
                lineno + 1
            )));
        }
        let train = match split.trim() {
            "train" => true,
            "test" => false,
            other => {
                return Err(Error::Data(format!(
                    "label line {}: split must be train or test, found {other:?}",
                    lineno + 1
                )))
            }
        };
        rows.push((idx, class.trim().to_owned(), train));
    }

    let class_names: Vec<String> = rows
        .iter()
        .map(|(_, c, _)| c.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let class_id: HashMap<&str, usize> = class_names
        .iter()
        .enumerate()
        .map(|(i, c)| (c.as_str(), i))
        .collect();

    let mut labels = vec![None; n_docs];
    let mut train_mask = vec![false; n_docs];
    for (idx, class, train) in &rows {
        if labels[*idx].is_some() {
            return Err(Error::Data(format!("document {idx} labeled twice")));
        }
        labels[*idx] = Some(class_id[class.as_str()]);
        train_mask[*idx] = *train;
    }
    Ok(ParsedLabels {
        labels,
        class_names,
        train_mask,
    })
}

/// Dense word ids in first-appearance order.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    word_to_id: HashMap<String, usize>,
    words: Vec<String>,
    doc_freq: Vec<usize>,
}

impl Vocabulary {
    pub fn build(corpus: &Corpus) -> Self {
        let mut word_to_id = HashMap::new();
        let mut words = Vec::new();
        let mut doc_freq = Vec::new();
        for doc in &corpus.documents {
            let mut seen = HashSet::new();
            for w in doc {
                let id = *word_to_id.entry(w.clone()).or_insert_with(|| {
                    words.push(w.clone());
                    doc_freq.push(0);
                    words.len() - 1
                });
                if seen.insert(id) {
                    doc_freq[id] += 1;
                }
            }
        }
        Self {
            word_to_id,
            words,
            doc_freq,
        }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn id(&self, word: &str) -> Option<usize> {
        self.word_to_id.get(word).copied()
    }

    pub fn word(&self, id: usize) -> &str {
        &self.words[id]
    }

    pub fn doc_freq(&self, id: usize) -> usize {
        self.doc_freq[id]
    }

    /// Maps every document to word ids. Panics on out-of-vocabulary words,
    /// which cannot happen for the corpus the vocabulary was built from.
    pub fn encode(&self, corpus: &Corpus) -> Vec<Vec<usize>> {
        corpus
            .documents
            .iter()
            .map(|doc| doc.iter().map(|w| self.word_to_id[w]).collect())
            .collect()
    }
}
