//! Documents, QA pairs, and the line-delimited corpus file format.
//!
//! A corpus mixes two modalities: plain text passages and table segments.
//! Tables are decomposed row-wise — every segment is one row plus the table
//! title and header, flattened to a retrievable string by [`linearize_table`].

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("io error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: malformed record: {message}")]
    MalformedRecord {
        path: String,
        line: usize,
        message: String,
    },
    #[error("duplicate document id {id:?}")]
    DuplicateId { id: String },
    #[error("corpus file {path} contains no records")]
    EmptyFile { path: String },
    #[error("table segment has {headers} headers but {cells} row cells")]
    HeaderRowMismatch { headers: usize, cells: usize },
}

/// Which retrieval pool a document belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Text,
    Table,
}

impl Modality {
    pub const ALL: [Modality; 2] = [Modality::Text, Modality::Table];
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Modality::Text => write!(f, "text"),
            Modality::Table => write!(f, "table"),
        }
    }
}

/// One row of a table, carried alongside the linearized document as
/// provenance for how the body string was produced.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableSegment {
    pub table_title: String,
    pub headers: Vec<String>,
    pub row: Vec<String>,
    pub source_table_id: String,
}

impl TableSegment {
    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.headers.len() != self.row.len() {
            return Err(CorpusError::HeaderRowMismatch {
                headers: self.headers.len(),
                cells: self.row.len(),
            });
        }
        Ok(())
    }
}

/// Flatten a table row to a single retrievable string.
///
/// Deterministic: the same segment always yields the byte-identical string
/// `"{title} . header: h1 , h2 . row: v1 , v2"`.
pub fn linearize_table(seg: &TableSegment) -> Result<String, CorpusError> {
    seg.validate()?;
    let mut out = String::new();
    out.push_str(&seg.table_title);
    out.push_str(" . header: ");
    out.push_str(&seg.headers.join(" , "));
    out.push_str(" . row: ");
    out.push_str(&seg.row.join(" , "));
    Ok(out)
}

/// One retrievable unit: a text passage or a linearized table row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub title: String,
    pub modality: Modality,
    pub body: String,
    /// Set exactly when `modality == Table`: the segment the body was
    /// linearized from.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<TableSegment>,
}

impl Document {
    pub fn text(id: impl Into<String>, title: impl Into<String>, body: impl Into<String>) -> Self {
        Document {
            id: id.into(),
            title: title.into(),
            modality: Modality::Text,
            body: body.into(),
            table: None,
        }
    }

    pub fn from_segment(id: impl Into<String>, seg: TableSegment) -> Result<Self, CorpusError> {
        let body = linearize_table(&seg)?;
        Ok(Document {
            id: id.into(),
            title: seg.table_title.clone(),
            modality: Modality::Table,
            body,
            table: Some(seg),
        })
    }

    /// Token list derived from the body on demand.
    pub fn tokens(&self) -> Vec<String> {
        tokenize(&self.body)
    }
}

/// Lowercase, split on non-alphanumeric, drop empty tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect()
}

/// A question with its reference answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QAPair {
    pub question: String,
    pub gold_answer: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metadata: BTreeMap<String, String>,
}

impl QAPair {
    pub fn new(question: impl Into<String>, gold_answer: impl Into<String>) -> Self {
        QAPair {
            question: question.into(),
            gold_answer: gold_answer.into(),
            metadata: BTreeMap::new(),
        }
    }
}

/// Immutable, id-indexed document collection.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    documents: BTreeMap<String, Document>,
}

impl Corpus {
    pub fn new() -> Self {
        Corpus::default()
    }

    /// Insert a document, rejecting duplicate ids and bodies that carry no
    /// tokens (those would be unreachable by every retriever).
    pub fn insert(&mut self, doc: Document) -> Result<(), CorpusError> {
        if doc.body.trim().is_empty() || tokenize(&doc.body).is_empty() {
            return Err(CorpusError::MalformedRecord {
                path: String::new(),
                line: 0,
                message: format!("document {:?} has an empty body after normalization", doc.id),
            });
        }
        if let Some(seg) = &doc.table {
            seg.validate()?;
        }
        if self.documents.contains_key(&doc.id) {
            return Err(CorpusError::DuplicateId { id: doc.id });
        }
        self.documents.insert(doc.id.clone(), doc);
        Ok(())
    }

    pub fn from_documents(docs: impl IntoIterator<Item = Document>) -> Result<Self, CorpusError> {
        let mut corpus = Corpus::new();
        for doc in docs {
            corpus.insert(doc)?;
        }
        Ok(corpus)
    }

    pub fn get(&self, id: &str) -> Option<&Document> {
        self.documents.get(id)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.documents.contains_key(id)
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    /// Documents in ascending id order.
    pub fn iter(&self) -> impl Iterator<Item = &Document> {
        self.documents.values()
    }

    pub fn count(&self, modality: Modality) -> usize {
        self.iter().filter(|d| d.modality == modality).count()
    }

    /// Mean token count of the given modality, or `None` when it is empty.
    pub fn avg_token_len(&self, modality: Modality) -> Option<f64> {
        let lens: Vec<usize> = self
            .iter()
            .filter(|d| d.modality == modality)
            .map(|d| d.tokens().len())
            .collect();
        if lens.is_empty() {
            return None;
        }
        Some(lens.iter().sum::<usize>() as f64 / lens.len() as f64)
    }
}

/// Load a corpus from a line-delimited file: one JSON record per line with
/// fields `id`, `title`, `modality`, `body`, and `table` for table records.
///
/// Table records are cross-checked: the stored body must equal the
/// re-linearized segment byte for byte.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus, CorpusError> {
    let path = path.as_ref();
    let display = path.display().to_string();
    let file = std::fs::File::open(path).map_err(|source| CorpusError::Io {
        path: display.clone(),
        source,
    })?;
    let mut corpus = Corpus::new();
    let mut records = 0usize;
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|source| CorpusError::Io {
            path: display.clone(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let doc: Document =
            serde_json::from_str(&line).map_err(|e| CorpusError::MalformedRecord {
                path: display.clone(),
                line: lineno,
                message: e.to_string(),
            })?;
        validate_record(&doc).map_err(|message| CorpusError::MalformedRecord {
            path: display.clone(),
            line: lineno,
            message,
        })?;
        corpus.insert(doc).map_err(|e| match e {
            CorpusError::MalformedRecord { message, .. } => CorpusError::MalformedRecord {
                path: display.clone(),
                line: lineno,
                message,
            },
            other => other,
        })?;
        records += 1;
    }
    if records == 0 {
        return Err(CorpusError::EmptyFile { path: display });
    }
    Ok(corpus)
}

fn validate_record(doc: &Document) -> Result<(), String> {
    match (doc.modality, &doc.table) {
        (Modality::Table, Some(seg)) => {
            seg.validate().map_err(|e| e.to_string())?;
            let expected = linearize_table(seg).map_err(|e| e.to_string())?;
            if expected != doc.body {
                return Err(format!(
                    "table record {:?}: body does not round-trip through linearization",
                    doc.id
                ));
            }
            Ok(())
        }
        (Modality::Table, None) => Err(format!(
            "table record {:?} is missing its table segment",
            doc.id
        )),
        (Modality::Text, Some(_)) => {
            Err(format!("text record {:?} carries a table segment", doc.id))
        }
        (Modality::Text, None) => Ok(()),
    }
}

/// Serialize a corpus back to the line-delimited format, documents in id order.
pub fn save_corpus(corpus: &Corpus, path: impl AsRef<Path>) -> Result<(), CorpusError> {
    let display = path.as_ref().display().to_string();
    let mut out = std::fs::File::create(path.as_ref()).map_err(|source| CorpusError::Io {
        path: display.clone(),
        source,
    })?;
    for doc in corpus.iter() {
        let line = serde_json::to_string(doc).expect("document serialization cannot fail");
        writeln!(out, "{line}").map_err(|source| CorpusError::Io {
            path: display.clone(),
            source,
        })?;
    }
    Ok(())
}

/// Load QA pairs from a line-delimited file (`question`, `gold_answer`,
/// optional `metadata`). Empty questions or answers are rejected.
pub fn load_qa(path: impl AsRef<Path>) -> Result<Vec<QAPair>, CorpusError> {
    let path = path.as_ref();
    let display = path.display().to_string();
    let file = std::fs::File::open(path).map_err(|source| CorpusError::Io {
        path: display.clone(),
        source,
    })?;
    let mut pairs = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|source| CorpusError::Io {
            path: display.clone(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let qa: QAPair = serde_json::from_str(&line).map_err(|e| CorpusError::MalformedRecord {
            path: display.clone(),
            line: lineno,
            message: e.to_string(),
        })?;
        if qa.question.trim().is_empty() || qa.gold_answer.trim().is_empty() {
            return Err(CorpusError::MalformedRecord {
                path: display.clone(),
                line: lineno,
                message: "question and gold_answer must be non-empty".to_string(),
            });
        }
        pairs.push(qa);
    }
    if pairs.is_empty() {
        return Err(CorpusError::EmptyFile { path: display });
    }
    Ok(pairs)
}

pub fn save_qa(pairs: &[QAPair], path: impl AsRef<Path>) -> Result<(), CorpusError> {
    let display = path.as_ref().display().to_string();
    let mut out = std::fs::File::create(path.as_ref()).map_err(|source| CorpusError::Io {
        path: display.clone(),
        source,
    })?;
    for qa in pairs {
        let line = serde_json::to_string(qa).expect("qa serialization cannot fail");
        writeln!(out, "{line}").map_err(|source| CorpusError::Io {
            path: display.clone(),
            source,
        })?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seg(title: &str, headers: &[&str], row: &[&str]) -> TableSegment {
        TableSegment {
            table_title: title.to_string(),
            headers: headers.iter().map(|s| s.to_string()).collect(),
            row: row.iter().map(|s| s.to_string()).collect(),
            source_table_id: format!("src-{title}"),
        }
    }

    #[test]
    fn linearize_basic() {
        let s = seg("Nonso Anozie", &["Role", "Series"], &["Robert", "Prime Suspect"]);
        assert_eq!(
            linearize_table(&s).unwrap(),
            "Nonso Anozie . header: Role , Series . row: Robert , Prime Suspect"
        );
    }

    #[test]
    fn linearize_degenerate_empty() {
        let s = seg("T", &[], &[]);
        assert_eq!(linearize_table(&s).unwrap(), "T . header:  . row: ");
    }

    #[test]
    fn linearize_rejects_mismatch() {
        let s = seg("T", &["a", "b"], &["1", "2", "3"]);
        assert!(matches!(
            linearize_table(&s),
            Err(CorpusError::HeaderRowMismatch { headers: 2, cells: 3 })
        ));
    }

    #[test]
    fn tokenize_rules() {
        assert_eq!(tokenize("Prime Suspect!"), vec!["prime", "suspect"]);
        assert_eq!(tokenize(""), Vec::<String>::new());
        assert_eq!(tokenize("1987-88 season"), vec!["1987", "88", "season"]);
    }

    #[test]
    fn load_counts_and_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.jsonl");
        let mut corpus = Corpus::new();
        corpus
            .insert(Document::text("d1", "One", "first passage"))
            .unwrap();
        corpus
            .insert(Document::text("d2", "Two", "second passage"))
            .unwrap();
        corpus
            .insert(
                Document::from_segment("d3", seg("Tbl", &["h"], &["v"])).unwrap(),
            )
            .unwrap();
        save_corpus(&corpus, &path).unwrap();

        let loaded = load_corpus(&path).unwrap();
        assert_eq!(loaded.len(), 3);
        assert_eq!(loaded.count(Modality::Text), 2);
        assert_eq!(loaded.count(Modality::Table), 1);

        // Round trip: save again and compare bytes.
        let path2 = dir.path().join("corpus2.jsonl");
        save_corpus(&loaded, &path2).unwrap();
        assert_eq!(
            std::fs::read(&path).unwrap(),
            std::fs::read(&path2).unwrap()
        );
    }

    #[test]
    fn duplicate_id_is_reported() {
        let mut corpus = Corpus::new();
        corpus.insert(Document::text("d1", "a", "body a")).unwrap();
        let err = corpus
            .insert(Document::text("d1", "b", "body b"))
            .unwrap_err();
        assert!(err.to_string().contains("d1"));
    }

    #[test]
    fn load_reports_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        std::fs::write(
            &path,
            "{\"id\":\"d1\",\"title\":\"t\",\"modality\":\"text\",\"body\":\"ok body\"}\nnot json\n",
        )
        .unwrap();
        let err = load_corpus(&path).unwrap_err();
        assert!(err.to_string().contains(":2:"), "got: {err}");
    }

    #[test]
    fn load_rejects_table_body_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        let record = serde_json::json!({
            "id": "t1",
            "title": "Tbl",
            "modality": "table",
            "body": "tampered body",
            "table": {
                "table_title": "Tbl",
                "headers": ["h"],
                "row": ["v"],
                "source_table_id": "s"
            }
        });
        std::fs::write(&path, format!("{record}\n")).unwrap();
        let err = load_corpus(&path).unwrap_err();
        assert!(err.to_string().contains("round-trip"), "got: {err}");
    }

    #[test]
    fn empty_file_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.jsonl");
        std::fs::write(&path, "").unwrap();
        assert!(matches!(
            load_corpus(&path),
            Err(CorpusError::EmptyFile { .. })
        ));
    }

    #[test]
    fn avg_token_len_positive_when_nonempty() {
        let corpus = Corpus::from_documents([
            Document::text("a", "t", "one two three"),
            Document::text("b", "t", "four"),
        ])
        .unwrap();
        assert_eq!(corpus.avg_token_len(Modality::Text), Some(2.0));
        assert_eq!(corpus.avg_token_len(Modality::Table), None);
    }

    #[test]
    fn tokenize_idempotent_on_joined_output() {
        let cases = ["Prime Suspect!", "1987-88 season", "A, b; C."];
        for case in cases {
            let once = tokenize(case);
            let again = tokenize(&once.join(" "));
            assert_eq!(once, again);
        }
    }

    #[test]
    fn linearization_contains_headers_and_cells() {
        let s = seg("Premiere", &["Year", "Network"], &["1991", "ITV"]);
        let out = linearize_table(&s).unwrap();
        for piece in ["Premiere", "Year", "Network", "1991", "ITV"] {
            assert!(out.contains(piece));
        }
    }
}
