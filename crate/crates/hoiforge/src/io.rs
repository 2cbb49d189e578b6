//! File formats: JSON documents and JSON-lines streams.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use hoiforge_core::autolabel::AnnotatedImage;
use hoiforge_core::eval::{EvalPrediction, KnownObjectIndex};
use hoiforge_core::setmatch::{GroundTruthSet, PredictionSet};
use hoiforge_core::stats::CategoryHistogram;
use hoiforge_core::vocab::{AttributeVocabulary, CoOccurrenceTable, TripletVocabulary};
use hoiforge_core::ObjectId;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    /// Schema or syntax error. `line` is 1-based within JSON-lines files.
    #[error("{path}{}: {message}", line.map(|l| format!(":{l}")).unwrap_or_default())]
    Schema { path: PathBuf, line: Option<usize>, message: String },
    #[error("{path}: {source}")]
    Invalid {
        path: PathBuf,
        #[source]
        source: hoiforge_core::Error,
    },
}

pub type Result<T, E = FormatError> = std::result::Result<T, E>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> FormatError + '_ {
    move |source| FormatError::Io { path: path.to_path_buf(), source }
}

fn schema(path: &Path, line: Option<usize>, e: serde_json::Error) -> FormatError {
    FormatError::Schema { path: path.to_path_buf(), line, message: e.to_string() }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let file = File::open(path).map_err(io_err(path))?;
    serde_json::from_reader(BufReader::new(file)).map_err(|e| schema(path, None, e))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| schema(path, None, e))?;
    w.write_all(b"\n").and_then(|_| w.flush()).map_err(io_err(path))
}

/// Reads a JSON-lines file, skipping blank lines.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (k, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| schema(path, Some(k + 1), e))?);
    }
    Ok(out)
}

pub fn write_jsonl<'a, T: Serialize + 'a>(path: &Path, records: impl IntoIterator<Item = &'a T>) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(|e| schema(path, None, e))?;
        w.write_all(b"\n").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Vocabulary file: JSON array of `{hoi_id, verb, verb_ing, object, object_id}`.
pub fn load_vocabulary(path: &Path) -> Result<TripletVocabulary> {
    read_json(path)
}

/// Attribute file: JSON object with one string array per slot plus `negative`.
pub fn load_attributes(path: &Path) -> Result<AttributeVocabulary> {
    read_json(path)
}

/// Co-occurrence file: JSON array of `{a, b, count}`.
pub fn load_cooccurrence(path: &Path, vocab: &TripletVocabulary) -> Result<CoOccurrenceTable> {
    let table: CoOccurrenceTable = read_json(path)?;
    table.validate_against(vocab).map_err(|source| FormatError::Invalid { path: path.to_path_buf(), source })?;
    Ok(table)
}

/// Histogram file: `{"unit": "images" | "instances", "counts": [...]}`.
pub fn load_histogram(path: &Path) -> Result<CategoryHistogram> {
    read_json(path)
}

/// Manifest: JSON-lines of [`AnnotatedImage`].
pub fn load_manifest(path: &Path) -> Result<Vec<AnnotatedImage>> {
    read_jsonl(path)
}

/// Manifest validated record by record against the vocabulary.
pub fn load_valid_manifest(path: &Path, vocab: &TripletVocabulary) -> Result<Vec<AnnotatedImage>> {
    let images = load_manifest(path)?;
    for img in &images {
        img.validate(vocab).map_err(|source| FormatError::Invalid { path: path.to_path_buf(), source })?;
    }
    Ok(images)
}

pub fn load_eval_predictions(path: &Path) -> Result<Vec<EvalPrediction>> {
    read_jsonl(path)
}

/// Known-object index: JSON object mapping object class id to image ids.
pub fn load_known_object_index(path: &Path) -> Result<KnownObjectIndex> {
    let raw: BTreeMap<String, Vec<String>> = read_json(path)?;
    raw.into_iter()
        .map(|(k, ids)| {
            let id: u32 = k.parse().map_err(|_| FormatError::Schema {
                path: path.to_path_buf(),
                line: None,
                message: format!("key {k:?} is not an object class id"),
            })?;
            Ok((ObjectId(id), ids.into_iter().collect()))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    pub id: String,
    pub values: Vec<f64>,
    /// Free-form note on which encoder produced the vector.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<String>,
}

/// Embedding file: JSON-lines `{"id": str, "values": [float]}`.
pub fn load_embeddings(path: &Path) -> Result<Vec<EmbeddingRecord>> {
    read_jsonl(path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImagePredictions {
    #[serde(default)]
    pub image_id: String,
    #[serde(flatten)]
    pub set: PredictionSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageGroundTruth {
    #[serde(default)]
    pub image_id: String,
    #[serde(flatten)]
    pub set: GroundTruthSet,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

/// Matching input: one per-image object, or an array of them.
pub fn load_one_or_many<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    Ok(match read_json::<OneOrMany<T>>(path)? {
        OneOrMany::One(t) => vec![t],
        OneOrMany::Many(v) => v,
    })
}
