//! Confidence filtering and human-object association of detector output.
//!
//! An image is kept when every prompted triplet has at least one detection of
//! its object class at or above the threshold. Kept images are then labeled in
//! two passes:
//!
//! 1. every qualifying object detection is paired with the person whose box
//!    center is nearest to the object's box center;
//! 2. every person left without a label is paired with the nearest qualifying
//!    object detection, reusing objects if needed.
//!
//! Distances are Euclidean between box centers; ties go to the lower detection
//! index.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{validation, Error, Result};
use crate::geometry::BBox;
use crate::vocab::{HoiId, ObjectId, TripletVocabulary};

pub const DEFAULT_THRESHOLD: f64 = 0.5;
/// Object class id of `person` in the HICO-DET object list.
pub const DEFAULT_PERSON_CLASS: ObjectId = ObjectId(0);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    /// Optional inside a manifest, where the enclosing image supplies it.
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub image_id: String,
    pub class_id: ObjectId,
    #[serde(rename = "box")]
    pub bbox: BBox,
    pub confidence: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnnotationSource {
    Auto,
    Verified,
    Edited,
}

/// Which association pass produced an annotation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssociationPass {
    ObjectToPerson,
    PersonToObject,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoiAnnotation {
    pub human_box: BBox,
    pub object_box: BBox,
    pub hoi_id: HoiId,
    pub source: AnnotationSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pass: Option<AssociationPass>,
}

/// One manifest record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedImage {
    pub image_id: String,
    pub file: String,
    pub width: u32,
    pub height: u32,
    pub prompt_triplets: Vec<HoiId>,
    #[serde(default)]
    pub detections: Vec<DetectionRecord>,
    #[serde(default)]
    pub annotations: Vec<HoiAnnotation>,
    #[serde(default)]
    pub kept: bool,
    /// Set when labeling could not be completed (for example, no person detected).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flag: Option<String>,
}

impl AnnotatedImage {
    /// Checks the record's own invariants and its ids against `vocab`.
    pub fn validate(&self, vocab: &TripletVocabulary) -> Result<()> {
        let ctx = |msg: String| validation!("image {}: {}", self.image_id, msg);
        if self.width == 0 || self.height == 0 {
            return Err(ctx(alloc::format!("size {}x{} must be positive", self.width, self.height)));
        }
        let (w, h) = (self.width as f64, self.height as f64);
        for id in &self.prompt_triplets {
            if !vocab.contains(*id) {
                return Err(ctx(alloc::format!("unknown prompted hoi_id {}", id)));
            }
        }
        for (i, d) in self.detections.iter().enumerate() {
            if !d.image_id.is_empty() && d.image_id != self.image_id {
                return Err(ctx(alloc::format!("detection {} belongs to image {}", i, d.image_id)));
            }
            if !(0.0..=1.0).contains(&d.confidence) {
                return Err(ctx(alloc::format!("detection {} confidence {} outside [0, 1]", i, d.confidence)));
            }
            if !d.bbox.within(w, h) {
                return Err(ctx(alloc::format!("detection {} box {} outside the image", i, d.bbox)));
            }
        }
        for (i, a) in self.annotations.iter().enumerate() {
            if !vocab.contains(a.hoi_id) {
                return Err(ctx(alloc::format!("annotation {} has unknown hoi_id {}", i, a.hoi_id)));
            }
            if !a.human_box.within(w, h) || !a.object_box.within(w, h) {
                return Err(ctx(alloc::format!("annotation {} box outside the image", i)));
            }
        }
        if !self.kept && !self.annotations.is_empty() {
            return Err(ctx("discarded image carries annotations".to_string()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelConfig {
    pub threshold: f64,
    pub person_class: ObjectId,
}

impl Default for LabelConfig {
    fn default() -> Self {
        LabelConfig { threshold: DEFAULT_THRESHOLD, person_class: DEFAULT_PERSON_CLASS }
    }
}

fn check_threshold(threshold: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(crate::error::argument!("threshold {} outside [0, 1]", threshold));
    }
    Ok(())
}

/// Distinct prompted triplets in first-appearance order, with their object class.
fn prompted(img: &AnnotatedImage, vocab: &TripletVocabulary) -> Result<Vec<(HoiId, ObjectId)>> {
    if img.prompt_triplets.is_empty() {
        return Err(validation!("image {}: prompt_triplets is empty", img.image_id));
    }
    let mut out: Vec<(HoiId, ObjectId)> = Vec::with_capacity(img.prompt_triplets.len());
    for id in &img.prompt_triplets {
        if !out.iter().any(|(seen, _)| seen == id) {
            out.push((*id, vocab.object_of(*id)?));
        }
    }
    Ok(out)
}

/// Keep (`true`) iff every prompted triplet's object class has a detection
/// with confidence `>= threshold`.
pub fn filter_image(img: &AnnotatedImage, vocab: &TripletVocabulary, threshold: f64) -> Result<bool> {
    check_threshold(threshold)?;
    let triplets = prompted(img, vocab)?;
    Ok(triplets
        .iter()
        .all(|(_, obj)| img.detections.iter().any(|d| d.class_id == *obj && d.confidence >= threshold)))
}

/// Index of the candidate whose box center is nearest to `target`; ties keep
/// the earliest candidate.
fn nearest(dets: &[DetectionRecord], target: &BBox, candidates: impl Iterator<Item = usize>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for j in candidates {
        let d = dets[j].bbox.center_distance_sq(target);
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some((j, d));
        }
    }
    best.map(|(j, _)| j)
}

/// Two-pass human-object association. See the module docs for the rules.
pub fn associate(img: &AnnotatedImage, vocab: &TripletVocabulary, cfg: &LabelConfig) -> Result<Vec<HoiAnnotation>> {
    check_threshold(cfg.threshold)?;
    let triplets = prompted(img, vocab)?;
    let dets = &img.detections;
    let qualifies = |j: usize| dets[j].confidence >= cfg.threshold;
    let persons: Vec<usize> = (0..dets.len()).filter(|&j| dets[j].class_id == cfg.person_class && qualifies(j)).collect();
    if persons.is_empty() {
        return Err(Error::Association {
            image_id: img.image_id.clone(),
            reason: alloc::format!("no person detection with confidence >= {}", cfg.threshold),
        });
    }

    let mut out = Vec::new();
    let mut labeled = alloc::vec![false; dets.len()];
    let annotation = |p: usize, j: usize, hoi: HoiId, pass| HoiAnnotation {
        human_box: dets[p].bbox,
        object_box: dets[j].bbox,
        hoi_id: hoi,
        source: AnnotationSource::Auto,
        pass: Some(pass),
    };

    for &(hoi, obj) in &triplets {
        for j in (0..dets.len()).filter(|&j| dets[j].class_id == obj && qualifies(j)) {
            // A person detection never pairs with itself.
            if let Some(p) = nearest(dets, &dets[j].bbox, persons.iter().copied().filter(|&p| p != j)) {
                out.push(annotation(p, j, hoi, AssociationPass::ObjectToPerson));
                labeled[p] = true;
            }
        }
    }

    let objects: Vec<usize> =
        (0..dets.len()).filter(|&j| qualifies(j) && triplets.iter().any(|(_, obj)| *obj == dets[j].class_id)).collect();
    for &p in persons.iter().filter(|&&p| !labeled[p]) {
        if let Some(j) = nearest(dets, &dets[p].bbox, objects.iter().copied().filter(|&j| j != p)) {
            for &(hoi, _) in triplets.iter().filter(|(_, obj)| *obj == dets[j].class_id) {
                out.push(annotation(p, j, hoi, AssociationPass::PersonToObject));
            }
        }
    }

    if out.is_empty() {
        return Err(Error::Association {
            image_id: img.image_id.clone(),
            reason: "no human-object pair could be formed".to_string(),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LabelOutcome {
    Kept,
    Discarded,
    Flagged(String),
}

/// Filters and labels one image in place.
///
/// Validation problems are returned as errors. Association failures do not
/// error: the image is marked not kept and its `flag` records the reason.
pub fn label_image(img: &mut AnnotatedImage, vocab: &TripletVocabulary, cfg: &LabelConfig) -> Result<LabelOutcome> {
    img.annotations.clear();
    img.flag = None;
    img.kept = false;
    img.validate(vocab)?;
    if !filter_image(img, vocab, cfg.threshold)? {
        return Ok(LabelOutcome::Discarded);
    }
    match associate(img, vocab, cfg) {
        Ok(annotations) => {
            img.annotations = annotations;
            img.kept = true;
            Ok(LabelOutcome::Kept)
        }
        Err(Error::Association { reason, .. }) => {
            img.flag = Some(reason.clone());
            Ok(LabelOutcome::Flagged(reason))
        }
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlaggedImage {
    pub image_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelSummary {
    pub total: u64,
    pub kept: u64,
    pub discarded: u64,
    pub flagged: u64,
    /// `kept / total`, or 0 for an empty manifest.
    pub retention: f64,
    pub threshold: f64,
    /// Annotation count per HOI category.
    pub per_category: Vec<u64>,
    pub flagged_images: Vec<FlaggedImage>,
}

impl LabelSummary {
    pub fn new(num_categories: usize, threshold: f64) -> Self {
        LabelSummary {
            total: 0,
            kept: 0,
            discarded: 0,
            flagged: 0,
            retention: 0.0,
            threshold,
            per_category: alloc::vec![0; num_categories],
            flagged_images: Vec::new(),
        }
    }

    /// Adds one labeled image. Must be called in manifest order for a
    /// deterministic `flagged_images` list.
    pub fn record(&mut self, img: &AnnotatedImage, outcome: &LabelOutcome) {
        self.total += 1;
        match outcome {
            LabelOutcome::Kept => {
                self.kept += 1;
                for a in &img.annotations {
                    self.per_category[a.hoi_id.index()] += 1;
                }
            }
            LabelOutcome::Discarded => self.discarded += 1,
            LabelOutcome::Flagged(reason) => {
                self.flagged += 1;
                self.flagged_images.push(FlaggedImage { image_id: img.image_id.clone(), reason: reason.clone() });
            }
        }
        self.retention = if self.total == 0 { 0.0 } else { self.kept as f64 / self.total as f64 };
    }
}

/// Labels a whole manifest sequentially.
pub fn label_images(
    images: impl IntoIterator<Item = AnnotatedImage>,
    vocab: &TripletVocabulary,
    cfg: &LabelConfig,
) -> Result<(Vec<AnnotatedImage>, LabelSummary)> {
    check_threshold(cfg.threshold)?;
    let mut summary = LabelSummary::new(vocab.len(), cfg.threshold);
    let mut out = Vec::new();
    for mut img in images {
        let outcome = label_image(&mut img, vocab, cfg)?;
        summary.record(&img, &outcome);
        out.push(img);
    }
    Ok((out, summary))
}
