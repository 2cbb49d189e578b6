//! Append-only verdict log.
//!
//! Line 1 is `{"kind": "batch", ...}` holding the sampled batch; every further
//! line is `{"kind": "verdict", ...}`. The review state is the fold of the
//! verdict lines over the batch.

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use hoiforge_core::review::{Batch, ReviewState, Verdict};
use serde::{Deserialize, Serialize};

use crate::io::{read_jsonl, FormatError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LogRecord {
    Batch(Batch),
    Verdict(Verdict),
}

#[derive(Debug, thiserror::Error)]
pub enum LogError {
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {reason}")]
    Corrupt { path: PathBuf, reason: String },
    #[error(transparent)]
    Review(#[from] hoiforge_core::Error),
}

/// Reads a log and splits it into the batch and the verdicts in log order.
pub fn read_log(path: &Path) -> Result<(Batch, Vec<Verdict>), LogError> {
    let corrupt = |reason: String| LogError::Corrupt { path: path.to_path_buf(), reason };
    let mut records = read_jsonl::<LogRecord>(path)?.into_iter();
    let batch = match records.next() {
        Some(LogRecord::Batch(b)) => b,
        Some(LogRecord::Verdict(_)) => return Err(corrupt("first record is not a batch".into())),
        None => return Err(corrupt("log is empty".into())),
    };
    let mut verdicts = Vec::new();
    for (k, r) in records.enumerate() {
        match r {
            LogRecord::Verdict(v) => verdicts.push(v),
            LogRecord::Batch(_) => return Err(corrupt(format!("second batch record at line {}", k + 2))),
        }
    }
    Ok((batch, verdicts))
}

/// Rebuilds the review state from a log file.
pub fn replay_log(path: &Path) -> Result<ReviewState, LogError> {
    let (batch, verdicts) = read_log(path)?;
    Ok(ReviewState::replay(batch, &verdicts)?)
}

/// Writer half of the log. Each append is synced to disk before returning.
#[derive(Debug)]
pub struct VerdictLog {
    path: PathBuf,
    file: File,
}

impl VerdictLog {
    /// Creates a new log holding `batch`. Fails if the file exists.
    pub fn create(path: &Path, batch: &Batch) -> Result<Self, LogError> {
        let file = OpenOptions::new().create_new(true).append(true).open(path).map_err(io(path))?;
        let mut log = VerdictLog { path: path.to_path_buf(), file };
        log.write_record(&LogRecord::Batch(batch.clone()))?;
        Ok(log)
    }

    /// Opens an existing log for appending and returns the replayed state.
    pub fn resume(path: &Path) -> Result<(Self, ReviewState), LogError> {
        let state = replay_log(path)?;
        let file = OpenOptions::new().append(true).open(path).map_err(io(path))?;
        Ok((VerdictLog { path: path.to_path_buf(), file }, state))
    }

    /// Resumes `path` if it exists, otherwise creates it from `batch`.
    pub fn open_or_create(path: &Path, batch: impl FnOnce() -> Result<Batch, LogError>) -> Result<(Self, ReviewState), LogError> {
        if path.exists() {
            return Self::resume(path);
        }
        let batch = batch()?;
        let log = Self::create(path, &batch)?;
        Ok((log, ReviewState::new(batch)))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&mut self, v: &Verdict) -> Result<(), LogError> {
        self.write_record(&LogRecord::Verdict(v.clone()))
    }

    fn write_record(&mut self, r: &LogRecord) -> Result<(), LogError> {
        let mut line = serde_json::to_vec(r).map_err(|e| LogError::Corrupt { path: self.path.clone(), reason: e.to_string() })?;
        line.push(b'\n');
        self.file.write_all(&line).map_err(io(&self.path))?;
        self.file.sync_data().map_err(io(&self.path))
    }
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> LogError + '_ {
    move |source| LogError::Io { path: path.to_path_buf(), source }
}

#[cfg(test)]
mod tests {
    use super::*;
    use hoiforge_core::review::{sample_batch, Decision, ReviewStatus};
    use hoiforge_core::autolabel::{AnnotatedImage, AnnotationSource, HoiAnnotation};
    use hoiforge_core::{BBox, HoiId};

    fn manifest() -> Vec<AnnotatedImage> {
        (0..4)
            .map(|k| AnnotatedImage {
                image_id: format!("img{k}"),
                file: format!("img{k}.png"),
                width: 100,
                height: 100,
                prompt_triplets: vec![HoiId(0)],
                detections: vec![],
                annotations: vec![HoiAnnotation {
                    human_box: BBox::new(0.0, 0.0, 10.0, 10.0).unwrap(),
                    object_box: BBox::new(20.0, 20.0, 30.0, 30.0).unwrap(),
                    hoi_id: HoiId(0),
                    source: AnnotationSource::Auto,
                    pass: None,
                }],
                kept: true,
                flag: None,
            })
            .collect()
    }

    fn verdict(id: &str, decision: Decision, ts: u64) -> Verdict {
        Verdict { annotation_id: id.into(), decision, edited_annotation: None, reviewer: "r".into(), timestamp: ts }
    }

    #[test]
    fn resume_reproduces_state() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("verdicts.jsonl");
        let batch = sample_batch(&manifest(), 1.0, 3).unwrap();
        let mut log = VerdictLog::create(&path, &batch).unwrap();
        let mut live = ReviewState::new(batch);
        for v in [verdict("img0/0", Decision::Accept, 5), verdict("img1/0", Decision::Reject, 6), verdict("img0/0", Decision::Reject, 4)] {
            live.apply(&v).unwrap();
            log.append(&v).unwrap();
        }
        drop(log);
        let (_, resumed) = VerdictLog::resume(&path).unwrap();
        assert_eq!(resumed, live);
        assert_eq!(resumed.annotation("img0/0").unwrap().status, ReviewStatus::Accepted);
    }

    #[test]
    fn create_refuses_existing_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.jsonl");
        let batch = sample_batch(&manifest(), 0.5, 1).unwrap();
        VerdictLog::create(&path, &batch).unwrap();
        assert!(VerdictLog::create(&path, &batch).is_err());
    }

    #[test]
    fn log_must_start_with_batch() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.jsonl");
        let line = serde_json::to_string(&LogRecord::Verdict(verdict("img0/0", Decision::Accept, 1))).unwrap();
        std::fs::write(&path, line + "\n").unwrap();
        assert!(matches!(read_log(&path), Err(LogError::Corrupt { .. })));
    }
}
