//! Category histograms, long-tail reports, CLIPScore and zero-shot splits.

use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::autolabel::AnnotatedImage;
use crate::error::{argument, validation, Result};
use crate::rng;
use crate::vocab::{HoiId, ObjectId, TripletVocabulary};

pub const DEFAULT_RF_UC_UNSEEN: usize = 120;
pub const DEFAULT_NF_UC_UNSEEN: usize = 120;
pub const DEFAULT_UO_UNSEEN: usize = 12;
pub const DEFAULT_UV_UNSEEN: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Unit {
    /// Distinct images containing the category.
    Images,
    /// Annotation count.
    Instances,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryHistogram {
    pub unit: Unit,
    pub counts: Vec<u64>,
}

impl CategoryHistogram {
    pub fn zeros(unit: Unit, num_categories: usize) -> Self {
        CategoryHistogram { unit, counts: alloc::vec![0; num_categories] }
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn check_len(&self, vocab: &TripletVocabulary) -> Result<()> {
        if self.counts.len() != vocab.len() {
            return Err(validation!("histogram has {} categories, vocabulary has {}", self.counts.len(), vocab.len()));
        }
        Ok(())
    }
}

/// Per-category counts over a manifest.
pub fn histogram<'a>(
    manifest: impl IntoIterator<Item = &'a AnnotatedImage>,
    unit: Unit,
    num_categories: usize,
) -> Result<CategoryHistogram> {
    let mut h = CategoryHistogram::zeros(unit, num_categories);
    let mut seen = BTreeSet::new();
    for img in manifest {
        seen.clear();
        for a in &img.annotations {
            let slot = h
                .counts
                .get_mut(a.hoi_id.index())
                .ok_or_else(|| validation!("image {}: hoi_id {} out of range", img.image_id, a.hoi_id))?;
            match unit {
                Unit::Instances => *slot += 1,
                Unit::Images => {
                    if seen.insert(a.hoi_id) {
                        *slot += 1;
                    }
                }
            }
        }
    }
    Ok(h)
}

/// Corpus-level box and triplet counts.
///
/// Person and object boxes are counted once per distinct box within an image,
/// since several triplets can share a box.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetTotals {
    pub images: u64,
    pub person_boxes: u64,
    pub object_boxes: u64,
    pub triplets: u64,
}

pub fn dataset_totals<'a>(manifest: impl IntoIterator<Item = &'a AnnotatedImage>) -> DatasetTotals {
    let mut t = DatasetTotals::default();
    for img in manifest {
        if img.annotations.is_empty() {
            continue;
        }
        t.images += 1;
        t.triplets += img.annotations.len() as u64;
        let key = |b: &crate::BBox| b.to_array().map(f64::to_bits);
        t.person_boxes += img.annotations.iter().map(|a| key(&a.human_box)).collect::<BTreeSet<_>>().len() as u64;
        t.object_boxes += img.annotations.iter().map(|a| key(&a.object_box)).collect::<BTreeSet<_>>().len() as u64;
    }
    t
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TailReport {
    pub threshold: u64,
    pub count_below: usize,
    /// Categories with `count < threshold`, ascending by count then id.
    pub categories: Vec<HoiId>,
}

pub fn tail_report(hist: &CategoryHistogram, threshold: u64) -> TailReport {
    let mut below: Vec<(u64, HoiId)> = hist
        .counts
        .iter()
        .enumerate()
        .filter(|(_, c)| **c < threshold)
        .map(|(i, c)| (*c, HoiId(i as u32)))
        .collect();
    below.sort();
    TailReport { threshold, count_below: below.len(), categories: below.into_iter().map(|(_, id)| id).collect() }
}

/// Element-wise sum of two histograms with the same length and unit.
pub fn merge(a: &CategoryHistogram, b: &CategoryHistogram) -> Result<CategoryHistogram> {
    if a.unit != b.unit {
        return Err(validation!("cannot merge {:?} histogram with {:?} histogram", a.unit, b.unit));
    }
    if a.len() != b.len() {
        return Err(validation!("cannot merge histograms of length {} and {}", a.len(), b.len()));
    }
    Ok(CategoryHistogram { unit: a.unit, counts: a.counts.iter().zip(&b.counts).map(|(x, y)| x + y).collect() })
}

/// `w * max(0, cos(image, text))`.
pub fn clip_score(image: &[f64], text: &[f64], w: f64) -> Result<f64> {
    if image.len() != text.len() {
        return Err(argument!("embedding dimensions differ: {} vs {}", image.len(), text.len()));
    }
    if image.is_empty() {
        return Err(argument!("embeddings are empty"));
    }
    if !w.is_finite() || w < 0.0 {
        return Err(argument!("scale w = {} must be finite and non-negative", w));
    }
    let norm = |v: &[f64]| libm::sqrt(v.iter().map(|x| x * x).sum::<f64>());
    let (ni, nt) = (norm(image), norm(text));
    if !ni.is_finite() || !nt.is_finite() {
        return Err(argument!("embeddings must be finite"));
    }
    if ni == 0.0 || nt == 0.0 {
        return Err(argument!("zero embedding vector"));
    }
    let cos = crate::matrix::dot(image, text) / (ni * nt);
    Ok(w * cos.clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SplitKind {
    #[serde(rename = "rf-uc")]
    RareFirst,
    #[serde(rename = "nf-uc")]
    NonRareFirst,
    #[serde(rename = "uo")]
    UnseenObject,
    #[serde(rename = "uv")]
    UnseenVerb,
}

impl SplitKind {
    pub fn default_unseen(self) -> usize {
        match self {
            SplitKind::RareFirst => DEFAULT_RF_UC_UNSEEN,
            SplitKind::NonRareFirst => DEFAULT_NF_UC_UNSEEN,
            SplitKind::UnseenObject => DEFAULT_UO_UNSEEN,
            SplitKind::UnseenVerb => DEFAULT_UV_UNSEEN,
        }
    }
}

impl core::str::FromStr for SplitKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rf-uc" | "rf_uc" | "rfuc" => Ok(SplitKind::RareFirst),
            "nf-uc" | "nf_uc" | "nfuc" => Ok(SplitKind::NonRareFirst),
            "uo" => Ok(SplitKind::UnseenObject),
            "uv" => Ok(SplitKind::UnseenVerb),
            _ => Err(argument!("unknown split kind `{}` (expected rf-uc, nf-uc, uo or uv)", s)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ZeroShotSplit {
    pub kind: SplitKind,
    pub n: usize,
    pub seed: u64,
    pub unseen_hoi: BTreeSet<HoiId>,
    pub seen_hoi: BTreeSet<HoiId>,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub unseen_objects: BTreeSet<ObjectId>,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub unseen_verbs: BTreeSet<String>,
}

impl ZeroShotSplit {
    /// True when seen and unseen partition `0..num_categories`.
    pub fn is_partition(&self, num_categories: usize) -> bool {
        self.unseen_hoi.is_disjoint(&self.seen_hoi)
            && self.unseen_hoi.len() + self.seen_hoi.len() == num_categories
            && self.unseen_hoi.iter().chain(&self.seen_hoi).all(|id| id.index() < num_categories)
    }
}

fn complete(
    kind: SplitKind,
    n: usize,
    seed: u64,
    vocab: &TripletVocabulary,
    unseen_hoi: BTreeSet<HoiId>,
) -> ZeroShotSplit {
    let seen_hoi = vocab.ids().filter(|id| !unseen_hoi.contains(id)).collect();
    ZeroShotSplit {
        kind,
        n,
        seed,
        unseen_hoi,
        seen_hoi,
        unseen_objects: BTreeSet::new(),
        unseen_verbs: BTreeSet::new(),
    }
}

/// Builds a zero-shot split.
///
/// RF-UC takes the `n` lowest-count categories, NF-UC the `n` highest; count
/// ties go to the lower id in both. UO and UV draw `n` object classes or verbs
/// uniformly without replacement (seeded) and hold out every triplet using them.
pub fn make_zero_shot_split(
    hist: &CategoryHistogram,
    vocab: &TripletVocabulary,
    kind: SplitKind,
    n: usize,
    seed: u64,
) -> Result<ZeroShotSplit> {
    hist.check_len(vocab)?;
    if n == 0 {
        return Err(argument!("n must be positive"));
    }
    match kind {
        SplitKind::RareFirst | SplitKind::NonRareFirst => {
            if n >= vocab.len() {
                return Err(argument!("n = {} must be below the category count {}", n, vocab.len()));
            }
            let mut order: Vec<(u64, usize)> = hist.counts.iter().copied().zip(0..).collect();
            if kind == SplitKind::RareFirst {
                order.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)));
            } else {
                order.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
            }
            let unseen = order[..n].iter().map(|(_, i)| HoiId(*i as u32)).collect();
            Ok(complete(kind, n, seed, vocab, unseen))
        }
        SplitKind::UnseenObject => {
            let objects: Vec<ObjectId> = vocab.object_classes().into_iter().collect();
            if n >= objects.len() {
                return Err(argument!("n = {} must be below the object count {}", n, objects.len()));
            }
            let mut rng = rng::seeded(seed);
            let chosen = rand::seq::index::sample(&mut rng, objects.len(), n).into_iter().map(|i| objects[i]).collect();
            let mut split = split_by_objects(vocab, &chosen);
            (split.n, split.seed) = (n, seed);
            Ok(split)
        }
        SplitKind::UnseenVerb => {
            let verbs: Vec<&str> = vocab.verbs().into_iter().collect();
            if n >= verbs.len() {
                return Err(argument!("n = {} must be below the verb count {}", n, verbs.len()));
            }
            let mut rng = rng::seeded(seed);
            let chosen: BTreeSet<String> =
                rand::seq::index::sample(&mut rng, verbs.len(), n).into_iter().map(|i| verbs[i].to_string()).collect();
            let mut split = split_by_verbs(vocab, &chosen);
            (split.n, split.seed) = (n, seed);
            Ok(split)
        }
    }
}

/// UO split with an explicit set of held-out object classes.
pub fn split_by_objects(vocab: &TripletVocabulary, objects: &BTreeSet<ObjectId>) -> ZeroShotSplit {
    let unseen = vocab.entries().iter().filter(|e| objects.contains(&e.object_id)).map(|e| e.hoi_id).collect();
    let mut s = complete(SplitKind::UnseenObject, objects.len(), 0, vocab, unseen);
    s.unseen_objects = objects.clone();
    s
}

/// UV split with an explicit set of held-out verbs.
pub fn split_by_verbs(vocab: &TripletVocabulary, verbs: &BTreeSet<String>) -> ZeroShotSplit {
    let unseen = vocab.entries().iter().filter(|e| verbs.contains(&e.verb)).map(|e| e.hoi_id).collect();
    let mut s = complete(SplitKind::UnseenVerb, verbs.len(), 0, vocab, unseen);
    s.unseen_verbs = verbs.clone();
    s
}
