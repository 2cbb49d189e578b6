//! HOI detection mAP.
//!
//! A detection is a true positive when an unmatched ground-truth pair of the
//! same HOI category overlaps it with `min(IoU_human, IoU_object) >= threshold`.
//! Detections are visited in descending score (input order on ties) and each
//! ground truth is consumed at most once. Average precision is the area under
//! the all-point interpolated precision/recall curve. Categories without ground
//! truth are excluded from every mean.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::autolabel::AnnotatedImage;
use crate::error::{argument, validation, Error, Result};
use crate::geometry::{iou, BBox};
use crate::stats::{CategoryHistogram, Unit};
use crate::vocab::{HoiId, ObjectId, TripletVocabulary};

pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;
/// Categories with fewer training instances than this are rare.
pub const DEFAULT_RARE_THRESHOLD: u64 = 10;

pub const MATCHING_RULE: &str = "min(IoU_human, IoU_object) >= iou_threshold, greedy by descending score";
pub const INTERPOLATION_RULE: &str = "all-point interpolated precision/recall area";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalPrediction {
    pub image_id: String,
    pub human_box: BBox,
    pub object_box: BBox,
    pub hoi_id: HoiId,
    pub score: f64,
}

/// One ground-truth human-object pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthPair {
    pub image_id: String,
    pub human_box: BBox,
    pub object_box: BBox,
    pub hoi_id: HoiId,
}

/// Flattens the annotations of a manifest into ground-truth pairs.
pub fn ground_truth_from_manifest<'a>(images: impl IntoIterator<Item = &'a AnnotatedImage>) -> Vec<GroundTruthPair> {
    images
        .into_iter()
        .flat_map(|img| {
            img.annotations.iter().map(move |a| GroundTruthPair {
                image_id: img.image_id.clone(),
                human_box: a.human_box,
                object_box: a.object_box,
                hoi_id: a.hoi_id,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    Default,
    KnownObject,
}

/// Object class -> images known to contain it.
pub type KnownObjectIndex = BTreeMap<ObjectId, BTreeSet<String>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSettings {
    pub iou_threshold: f64,
    pub mode: EvalMode,
    pub rare_set: BTreeSet<HoiId>,
    pub known_object_index: Option<KnownObjectIndex>,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings {
            iou_threshold: DEFAULT_IOU_THRESHOLD,
            mode: EvalMode::Default,
            rare_set: BTreeSet::new(),
            known_object_index: None,
        }
    }
}

/// Categories whose training count is below `threshold`. The histogram unit
/// selects between the instance-based and image-based rare definitions.
pub fn rare_set_from_histogram(hist: &CategoryHistogram, threshold: u64) -> BTreeSet<HoiId> {
    hist.counts.iter().enumerate().filter(|(_, c)| **c < threshold).map(|(i, _)| HoiId(i as u32)).collect()
}

/// Same as [`rare_set_from_histogram`] but insists on a particular unit.
pub fn rare_set_with_unit(hist: &CategoryHistogram, unit: Unit, threshold: u64) -> Result<BTreeSet<HoiId>> {
    if hist.unit != unit {
        return Err(validation!("rare set needs a {:?} histogram, got {:?}", unit, hist.unit));
    }
    Ok(rare_set_from_histogram(hist, threshold))
}

fn pair_overlap(h1: &BBox, o1: &BBox, h2: &BBox, o2: &BBox) -> f64 {
    iou(h1, h2).min(iou(o1, o2))
}

/// TP/FP flag for every prediction, in input order.
///
/// Predictions and ground truths are assumed to share one image; only equal
/// `hoi_id`s can match. Among qualifying unmatched ground truths the one with
/// the largest overlap is consumed (lowest index on ties).
pub fn match_image(preds: &[EvalPrediction], gts: &[GroundTruthPair], iou_threshold: f64) -> Vec<bool> {
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| preds[b].score.total_cmp(&preds[a].score));
    let mut taken = alloc::vec![false; gts.len()];
    let mut flags = alloc::vec![false; preds.len()];
    for i in order {
        let p = &preds[i];
        let mut best: Option<(usize, f64)> = None;
        for (j, g) in gts.iter().enumerate() {
            if taken[j] || g.hoi_id != p.hoi_id {
                continue;
            }
            let ov = pair_overlap(&p.human_box, &p.object_box, &g.human_box, &g.object_box);
            if ov >= iou_threshold && best.is_none_or(|(_, b)| ov > b) {
                best = Some((j, ov));
            }
        }
        if let Some((j, _)) = best {
            taken[j] = true;
            flags[i] = true;
        }
    }
    flags
}

/// All-point interpolated AP over flags sorted by descending score.
///
/// Recall only moves at true positives, each by `1 / n_gt`, so the area is the
/// mean over true positives of the best precision at that rank or later.
/// Returns `None` when `n_gt == 0`.
pub fn average_precision(flags: &[bool], n_gt: usize) -> Option<f64> {
    if n_gt == 0 {
        return None;
    }
    let mut tp = 0usize;
    let precision: Vec<f64> = flags
        .iter()
        .enumerate()
        .map(|(k, &f)| {
            tp += f as usize;
            tp as f64 / (k + 1) as f64
        })
        .collect();
    let mut running = 0.0f64;
    let mut area = 0.0;
    for k in (0..flags.len()).rev() {
        running = running.max(precision[k]);
        if flags[k] {
            area += running;
        }
    }
    Some(area / n_gt as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryResult {
    pub hoi_id: HoiId,
    pub ap: Option<f64>,
    pub n_gt: usize,
    pub n_pred: usize,
    pub n_tp: usize,
    pub rare: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportHeader {
    pub mode: EvalMode,
    pub iou_threshold: f64,
    pub matching: String,
    pub interpolation: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapReport {
    pub header: ReportHeader,
    pub full: Option<f64>,
    pub rare: Option<f64>,
    pub non_rare: Option<f64>,
    pub evaluated_categories: usize,
    pub rare_categories: usize,
    /// Adjacent equal scores within a category's ranked list, resolved by input order.
    pub score_ties: usize,
    pub per_category: Vec<CategoryResult>,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

fn check_settings(settings: &EvalSettings, vocab: &TripletVocabulary) -> Result<()> {
    if !(settings.iou_threshold > 0.0 && settings.iou_threshold < 1.0) {
        return Err(argument!("iou threshold {} must lie in (0, 1)", settings.iou_threshold));
    }
    if let Some(id) = settings.rare_set.iter().find(|id| !vocab.contains(**id)) {
        return Err(validation!("rare set contains unknown hoi_id {}", id));
    }
    if settings.mode == EvalMode::KnownObject && settings.known_object_index.is_none() {
        return Err(Error::Config("known-object mode requires a known_object_index".into()));
    }
    Ok(())
}

/// Full / Rare / Non-Rare mAP over a corpus.
pub fn map_report(
    preds: &[EvalPrediction],
    gts: &[GroundTruthPair],
    vocab: &TripletVocabulary,
    settings: &EvalSettings,
) -> Result<MapReport> {
    check_settings(settings, vocab)?;
    for (k, p) in preds.iter().enumerate() {
        if !vocab.contains(p.hoi_id) {
            return Err(validation!("prediction {} (image {}) has unknown hoi_id {}", k, p.image_id, p.hoi_id));
        }
        if !(0.0..=1.0).contains(&p.score) {
            return Err(validation!("prediction {} (image {}) score {} outside [0, 1]", k, p.image_id, p.score));
        }
    }
    if let Some(g) = gts.iter().find(|g| !vocab.contains(g.hoi_id)) {
        return Err(validation!("ground truth in image {} has unknown hoi_id {}", g.image_id, g.hoi_id));
    }

    let empty = BTreeSet::new();
    let pool_for = |hoi: HoiId| -> Option<&BTreeSet<String>> {
        match (settings.mode, &settings.known_object_index) {
            (EvalMode::KnownObject, Some(index)) => {
                let obj = vocab.entries()[hoi.index()].object_id;
                Some(index.get(&obj).unwrap_or(&empty))
            }
            _ => None,
        }
    };
    let admitted = |image: &str, hoi: HoiId| pool_for(hoi).is_none_or(|pool| pool.contains(image));

    // (image, hoi) -> indices, in input order
    let mut pred_groups: BTreeMap<(&str, HoiId), Vec<usize>> = BTreeMap::new();
    for (k, p) in preds.iter().enumerate() {
        if admitted(&p.image_id, p.hoi_id) {
            pred_groups.entry((p.image_id.as_str(), p.hoi_id)).or_default().push(k);
        }
    }
    let mut gt_groups: BTreeMap<(&str, HoiId), Vec<GroundTruthPair>> = BTreeMap::new();
    let mut n_gt = alloc::vec![0usize; vocab.len()];
    for g in gts {
        if admitted(&g.image_id, g.hoi_id) {
            n_gt[g.hoi_id.index()] += 1;
            gt_groups.entry((g.image_id.as_str(), g.hoi_id)).or_default().push(g.clone());
        }
    }

    // per category: (score, input index, tp)
    let mut ranked: Vec<Vec<(f64, usize, bool)>> = alloc::vec![Vec::new(); vocab.len()];
    for (key, idx) in &pred_groups {
        let group: Vec<EvalPrediction> = idx.iter().map(|&k| preds[k].clone()).collect();
        let group_gts = gt_groups.get(key).map(Vec::as_slice).unwrap_or(&[]);
        let flags = match_image(&group, group_gts, settings.iou_threshold);
        for (&k, tp) in idx.iter().zip(flags) {
            ranked[key.1.index()].push((preds[k].score, k, tp));
        }
    }

    let mut score_ties = 0;
    let mut per_category = Vec::with_capacity(vocab.len());
    for (c, list) in ranked.iter_mut().enumerate() {
        list.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        score_ties += list.windows(2).filter(|w| w[0].0 == w[1].0).count();
        let flags: Vec<bool> = list.iter().map(|e| e.2).collect();
        let hoi_id = HoiId(c as u32);
        per_category.push(CategoryResult {
            hoi_id,
            ap: average_precision(&flags, n_gt[c]),
            n_gt: n_gt[c],
            n_pred: flags.len(),
            n_tp: flags.iter().filter(|f| **f).count(),
            rare: settings.rare_set.contains(&hoi_id),
        });
    }

    let evaluated = || per_category.iter().filter_map(|r| r.ap.map(|ap| (r.rare, ap)));
    Ok(MapReport {
        header: ReportHeader {
            mode: settings.mode,
            iou_threshold: settings.iou_threshold,
            matching: MATCHING_RULE.into(),
            interpolation: INTERPOLATION_RULE.into(),
        },
        full: mean(evaluated().map(|(_, ap)| ap)),
        rare: mean(evaluated().filter(|(r, _)| *r).map(|(_, ap)| ap)),
        non_rare: mean(evaluated().filter(|(r, _)| !*r).map(|(_, ap)| ap)),
        evaluated_categories: evaluated().count(),
        rare_categories: evaluated().filter(|(r, _)| *r).count(),
        score_ties,
        per_category,
    })
}
