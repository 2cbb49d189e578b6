//! Human verification of auto-labeled images.
//!
//! A [`Batch`] is a seeded sample of labeled images. Reviewers issue one
//! [`Verdict`] per annotation; [`ReviewState`] is a pure fold over the verdict
//! sequence. When two verdicts target the same annotation the later timestamp
//! wins, and on equal timestamps the one that came later in the log.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::autolabel::{AnnotatedImage, AnnotationSource, HoiAnnotation};
use crate::error::{argument, validation, Error, Result};
use crate::rng;
use crate::vocab::HoiId;

pub const DEFAULT_FRACTION: f64 = 0.05;
pub const SAMPLING_UNIT: &str = "images";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReviewStatus {
    Pending,
    Accepted,
    Rejected,
    Edited,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Accept,
    Reject,
    Edit,
}

impl Decision {
    pub fn status(self) -> ReviewStatus {
        match self {
            Decision::Accept => ReviewStatus::Accepted,
            Decision::Reject => ReviewStatus::Rejected,
            Decision::Edit => ReviewStatus::Edited,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewAnnotation {
    /// `"{image_id}/{index}"`, stable for the life of the batch.
    pub annotation_id: String,
    pub annotation: HoiAnnotation,
    pub status: ReviewStatus,
    /// The reviewer's replacement while `status` is `edited`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edited: Option<HoiAnnotation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewItem {
    pub image_id: String,
    pub file: String,
    pub width: u32,
    pub height: u32,
    pub prompt_triplets: Vec<HoiId>,
    pub annotations: Vec<ReviewAnnotation>,
    /// Aggregate: `pending` while any annotation is pending, otherwise
    /// `edited` > `accepted` > `rejected` by precedence.
    pub status: ReviewStatus,
}

impl ReviewItem {
    fn from_image(img: &AnnotatedImage) -> Self {
        let annotations = img
            .annotations
            .iter()
            .enumerate()
            .map(|(k, a)| ReviewAnnotation {
                annotation_id: annotation_id(&img.image_id, k),
                annotation: a.clone(),
                status: ReviewStatus::Pending,
                edited: None,
            })
            .collect();
        let mut item = ReviewItem {
            image_id: img.image_id.clone(),
            file: img.file.clone(),
            width: img.width,
            height: img.height,
            prompt_triplets: img.prompt_triplets.clone(),
            annotations,
            status: ReviewStatus::Pending,
        };
        item.refresh_status();
        item
    }

    fn refresh_status(&mut self) {
        let has = |s| self.annotations.iter().any(|a| a.status == s);
        self.status = if self.annotations.is_empty() || has(ReviewStatus::Pending) {
            ReviewStatus::Pending
        } else if has(ReviewStatus::Edited) {
            ReviewStatus::Edited
        } else if has(ReviewStatus::Accepted) {
            ReviewStatus::Accepted
        } else {
            ReviewStatus::Rejected
        };
    }
}

pub fn annotation_id(image_id: &str, index: usize) -> String {
    alloc::format!("{image_id}/{index}")
}

/// The sampled review batch and how it was drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Batch {
    pub sampling_unit: String,
    pub fraction: f64,
    pub seed: u64,
    /// Number of kept images the sample was drawn from.
    pub population: usize,
    pub items: Vec<ReviewItem>,
}

/// Samples `round(fraction * N)` of the `N` kept images uniformly without
/// replacement. Items keep manifest order.
pub fn sample_batch(manifest: &[AnnotatedImage], fraction: f64, seed: u64) -> Result<Batch> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(argument!("fraction {} must lie in (0, 1]", fraction));
    }
    let kept: Vec<&AnnotatedImage> = manifest.iter().filter(|img| img.kept).collect();
    let count = (libm::round(fraction * kept.len() as f64) as usize).min(kept.len());
    let mut rng = rng::seeded(seed);
    let mut chosen = rand::seq::index::sample(&mut rng, kept.len(), count).into_vec();
    chosen.sort_unstable();
    Ok(Batch {
        sampling_unit: SAMPLING_UNIT.to_string(),
        fraction,
        seed,
        population: kept.len(),
        items: chosen.into_iter().map(|i| ReviewItem::from_image(kept[i])).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub annotation_id: String,
    pub decision: Decision,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edited_annotation: Option<HoiAnnotation>,
    #[serde(default)]
    pub reviewer: String,
    /// UTC milliseconds.
    pub timestamp: u64,
}

impl Verdict {
    pub fn validate(&self) -> Result<()> {
        match (self.decision, &self.edited_annotation) {
            (Decision::Edit, None) => Err(validation!("edit verdict for {} lacks edited_annotation", self.annotation_id)),
            (Decision::Accept | Decision::Reject, Some(_)) => {
                Err(validation!("edited_annotation is only allowed on edit verdicts ({})", self.annotation_id))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    pub pending: usize,
    pub accepted: usize,
    pub rejected: usize,
    pub edited: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReviewState {
    batch: Batch,
    // annotation_id -> (item, annotation)
    index: BTreeMap<String, (usize, usize)>,
    // annotation_id -> (timestamp, log position) of the winning verdict
    winners: BTreeMap<String, (u64, u64)>,
    applied: u64,
}

impl ReviewState {
    pub fn new(batch: Batch) -> Self {
        let mut index = BTreeMap::new();
        for (i, item) in batch.items.iter().enumerate() {
            for (k, a) in item.annotations.iter().enumerate() {
                index.insert(a.annotation_id.clone(), (i, k));
            }
        }
        ReviewState { batch, index, winners: BTreeMap::new(), applied: 0 }
    }

    /// Folds `verdicts` over a fresh state for `batch`.
    pub fn replay<'a>(batch: Batch, verdicts: impl IntoIterator<Item = &'a Verdict>) -> Result<Self> {
        let mut state = ReviewState::new(batch);
        for v in verdicts {
            state.apply(v)?;
        }
        Ok(state)
    }

    pub fn batch(&self) -> &Batch {
        &self.batch
    }

    pub fn items(&self) -> &[ReviewItem] {
        &self.batch.items
    }

    /// Number of verdicts folded so far.
    pub fn applied(&self) -> u64 {
        self.applied
    }

    pub fn item(&self, image_id: &str) -> Option<&ReviewItem> {
        self.batch.items.iter().find(|i| i.image_id == image_id)
    }

    pub fn annotation(&self, annotation_id: &str) -> Option<&ReviewAnnotation> {
        self.index.get(annotation_id).map(|&(i, k)| &self.batch.items[i].annotations[k])
    }

    /// Validates a verdict against this state without applying it.
    pub fn check(&self, v: &Verdict) -> Result<()> {
        v.validate()?;
        let &(i, _) = self
            .index
            .get(&v.annotation_id)
            .ok_or_else(|| Error::NotFound { kind: "annotation", id: v.annotation_id.clone() })?;
        if let Some(edit) = &v.edited_annotation {
            let item = &self.batch.items[i];
            let (w, h) = (item.width as f64, item.height as f64);
            if !edit.human_box.within(w, h) || !edit.object_box.within(w, h) {
                return Err(validation!("edited boxes for {} fall outside the {}x{} image", v.annotation_id, w, h));
            }
        }
        Ok(())
    }

    /// Applies one verdict. Returns whether it became the annotation's current decision.
    pub fn apply(&mut self, v: &Verdict) -> Result<bool> {
        self.check(v)?;
        let position = self.applied;
        self.applied += 1;
        let wins = self.winners.get(&v.annotation_id).is_none_or(|&(ts, _)| v.timestamp >= ts);
        if !wins {
            return Ok(false);
        }
        self.winners.insert(v.annotation_id.clone(), (v.timestamp, position));
        let (i, k) = self.index[&v.annotation_id];
        let item = &mut self.batch.items[i];
        let entry = &mut item.annotations[k];
        entry.status = v.decision.status();
        entry.edited = v.edited_annotation.clone().map(|mut a| {
            a.source = AnnotationSource::Edited;
            a.pass = None;
            a
        });
        item.refresh_status();
        Ok(true)
    }

    pub fn progress(&self) -> Progress {
        let mut p = Progress::default();
        for a in self.batch.items.iter().flat_map(|i| &i.annotations) {
            p.total += 1;
            match a.status {
                ReviewStatus::Pending => p.pending += 1,
                ReviewStatus::Accepted => p.accepted += 1,
                ReviewStatus::Rejected => p.rejected += 1,
                ReviewStatus::Edited => p.edited += 1,
            }
        }
        p
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportHeader {
    pub sampling_unit: String,
    pub fraction: f64,
    pub seed: u64,
    pub population: usize,
    pub batch_images: usize,
    pub exported_images: usize,
    pub exported_annotations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifiedExport {
    pub header: ExportHeader,
    pub records: Vec<AnnotatedImage>,
}

/// Accepted annotations (as `verified`) and edited annotations in their edited
/// form (as `edited`), grouped per image in batch order. Images with nothing
/// to export are omitted.
pub fn export_verified(state: &ReviewState) -> VerifiedExport {
    let mut records = Vec::new();
    for item in state.items() {
        let annotations: Vec<HoiAnnotation> = item
            .annotations
            .iter()
            .filter_map(|a| match a.status {
                ReviewStatus::Accepted => {
                    let mut out = a.annotation.clone();
                    out.source = AnnotationSource::Verified;
                    Some(out)
                }
                ReviewStatus::Edited => a.edited.clone(),
                ReviewStatus::Pending | ReviewStatus::Rejected => None,
            })
            .collect();
        if annotations.is_empty() {
            continue;
        }
        records.push(AnnotatedImage {
            image_id: item.image_id.clone(),
            file: item.file.clone(),
            width: item.width,
            height: item.height,
            prompt_triplets: item.prompt_triplets.clone(),
            detections: Vec::new(),
            annotations,
            kept: true,
            flag: None,
        });
    }
    let batch = state.batch();
    VerifiedExport {
        header: ExportHeader {
            sampling_unit: batch.sampling_unit.clone(),
            fraction: batch.fraction,
            seed: batch.seed,
            population: batch.population,
            batch_images: batch.items.len(),
            exported_images: records.len(),
            exported_annotations: records.iter().map(|r| r.annotations.len()).sum(),
        },
        records,
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;
    use crate::autolabel::fixtures::{at, image};
    use crate::autolabel::AssociationPass;
    use crate::BBox;

    /// `n` kept images, each with one auto annotation of category 0.
    pub fn labeled_manifest(n: usize) -> Vec<AnnotatedImage> {
        (0..n)
            .map(|i| {
                let mut img = image(&alloc::format!("img{i:05}"), &[0], alloc::vec![at(0, 50.0, 50.0, 0.9), at(1, 80.0, 50.0, 0.9)]);
                img.kept = true;
                img.annotations = alloc::vec![HoiAnnotation {
                    human_box: BBox::new(45.0, 45.0, 55.0, 55.0).unwrap(),
                    object_box: BBox::new(75.0, 45.0, 85.0, 55.0).unwrap(),
                    hoi_id: HoiId(0),
                    source: AnnotationSource::Auto,
                    pass: Some(AssociationPass::ObjectToPerson),
                }];
                img
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::labeled_manifest;
    use super::*;
    use crate::BBox;


    fn verdict(id: &str, decision: Decision, ts: u64) -> Verdict {
        Verdict { annotation_id: id.to_string(), decision, edited_annotation: None, reviewer: "r".into(), timestamp: ts }
    }

    #[test]
    fn batch_sizes() {
        assert_eq!(sample_batch(&labeled_manifest(100), 0.05, 1).unwrap().items.len(), 5);
        assert_eq!(sample_batch(&[], 0.05, 1).unwrap().items.len(), 0);
        assert!(sample_batch(&[], 0.0, 1).is_err());
        assert!(sample_batch(&[], 1.5, 1).is_err());
        // round(0.05 * 146772) = round(7338.6)
        assert_eq!(libm::round(0.05 * 146_772.0) as usize, 7339);
    }

    #[test]
    fn batch_is_seeded() {
        let m = labeled_manifest(200);
        let a = sample_batch(&m, 0.1, 42).unwrap();
        assert_eq!(a, sample_batch(&m, 0.1, 42).unwrap());
        assert_ne!(a, sample_batch(&m, 0.1, 43).unwrap());
        assert!(a.items.windows(2).all(|w| w[0].image_id < w[1].image_id));
        assert!(a.items.iter().all(|i| i.status == ReviewStatus::Pending));
    }

    #[test]
    fn last_write_wins() {
        let batch = sample_batch(&labeled_manifest(10), 1.0, 0).unwrap();
        let id = batch.items[0].annotations[0].annotation_id.clone();
        let mut s = ReviewState::new(batch);
        s.apply(&verdict(&id, Decision::Accept, 10)).unwrap();
        s.apply(&verdict(&id, Decision::Reject, 20)).unwrap();
        assert_eq!(s.annotation(&id).unwrap().status, ReviewStatus::Rejected);
        // stale verdict loses
        assert!(!s.apply(&verdict(&id, Decision::Accept, 15)).unwrap());
        assert_eq!(s.annotation(&id).unwrap().status, ReviewStatus::Rejected);
        // equal timestamp: later in the log wins
        assert!(s.apply(&verdict(&id, Decision::Accept, 20)).unwrap());
        assert_eq!(s.annotation(&id).unwrap().status, ReviewStatus::Accepted);
    }

    #[test]
    fn verdict_errors() {
        let batch = sample_batch(&labeled_manifest(3), 1.0, 0).unwrap();
        let id = batch.items[0].annotations[0].annotation_id.clone();
        let mut s = ReviewState::new(batch);
        assert!(matches!(s.apply(&verdict("nope/0", Decision::Accept, 1)), Err(Error::NotFound { .. })));
        assert!(matches!(s.apply(&verdict(&id, Decision::Edit, 1)), Err(Error::Validation(_))));
        assert_eq!(s.applied(), 0);
    }

    #[test]
    fn export_rules() {
        let batch = sample_batch(&labeled_manifest(5), 1.0, 0).unwrap();
        let ids: Vec<String> = batch.items.iter().map(|i| i.annotations[0].annotation_id.clone()).collect();
        let mut s = ReviewState::new(batch);
        assert!(export_verified(&s).records.is_empty());
        for id in &ids[..3] {
            s.apply(&verdict(id, Decision::Accept, 1)).unwrap();
        }
        s.apply(&verdict(&ids[3], Decision::Reject, 1)).unwrap();
        let e = export_verified(&s);
        assert_eq!(e.records.len(), 3);
        assert_eq!(e.header.sampling_unit, "images");
        assert!(e.records.iter().flat_map(|r| &r.annotations).all(|a| a.source == AnnotationSource::Verified));
        assert_eq!(s.progress(), Progress { pending: 1, accepted: 3, rejected: 1, edited: 0, total: 5 });
    }

    #[test]
    fn export_carries_edited_box() {
        let batch = sample_batch(&labeled_manifest(2), 1.0, 0).unwrap();
        let entry = batch.items[1].annotations[0].clone();
        let mut s = ReviewState::new(batch);
        let mut edited = entry.annotation.clone();
        edited.human_box = BBox::new(40.0, 40.0, 60.0, 62.0).unwrap();
        let v = Verdict { edited_annotation: Some(edited.clone()), ..verdict(&entry.annotation_id, Decision::Edit, 5) };
        s.apply(&v).unwrap();
        let e = export_verified(&s);
        assert_eq!(e.records.len(), 1);
        assert_eq!(e.records[0].annotations[0].human_box, edited.human_box);
        assert_eq!(e.records[0].annotations[0].source, AnnotationSource::Edited);
        assert_eq!(s.item(&entry.annotation_id[..8]).unwrap().status, ReviewStatus::Edited);
    }

    #[test]
    fn edit_outside_image_rejected() {
        let batch = sample_batch(&labeled_manifest(1), 1.0, 0).unwrap();
        let entry = batch.items[0].annotations[0].clone();
        let s = ReviewState::new(batch);
        let mut edited = entry.annotation.clone();
        edited.object_box = BBox::new(600.0, 0.0, 700.0, 10.0).unwrap();
        let v = Verdict { edited_annotation: Some(edited), ..verdict(&entry.annotation_id, Decision::Edit, 5) };
        assert!(s.check(&v).is_err());
    }

    #[test]
    fn replay_equals_incremental() {
        let batch = sample_batch(&labeled_manifest(20), 0.5, 9).unwrap();
        let ids: Vec<String> = batch.items.iter().map(|i| i.annotations[0].annotation_id.clone()).collect();
        let log: Vec<Verdict> = (0..40)
            .map(|k| {
                let d = [Decision::Accept, Decision::Reject][k % 2];
                verdict(&ids[(k * 7) % ids.len()], d, (k as u64 * 13) % 17)
            })
            .collect();
        let mut live = ReviewState::new(batch.clone());
        for v in &log {
            live.apply(v).unwrap();
        }
        assert_eq!(ReviewState::replay(batch, &log).unwrap(), live);
    }
}
