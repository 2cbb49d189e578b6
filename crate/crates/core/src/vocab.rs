//! HOI triplet vocabulary, prompt attribute slots and the co-occurrence table.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{validation, Error, Result};

/// HOI category id, `0..K2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct HoiId(pub u32);

/// Object class id, `0..K1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ObjectId(pub u32);

impl HoiId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl ObjectId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for HoiId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl fmt::Display for ObjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// One vocabulary entry. The present participle is stored rather than derived.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HoiTriplet {
    pub hoi_id: HoiId,
    pub verb: String,
    pub verb_ing: String,
    pub object: String,
    pub object_id: ObjectId,
}

/// The ordered list of HOI categories, indexed by [`HoiId`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<HoiTriplet>", into = "Vec<HoiTriplet>")]
pub struct TripletVocabulary {
    entries: Vec<HoiTriplet>,
    num_objects: usize,
}

impl TripletVocabulary {
    /// Validates and indexes the entries. Entries may arrive in any order, but
    /// their ids must be exactly `0..entries.len()`.
    pub fn new(mut entries: Vec<HoiTriplet>) -> Result<Self> {
        if entries.is_empty() {
            return Err(validation!("vocabulary is empty"));
        }
        entries.sort_by_key(|e| e.hoi_id);
        let mut pairs = BTreeSet::new();
        for (i, e) in entries.iter().enumerate() {
            if e.hoi_id.index() != i {
                return Err(if i > 0 && entries[i - 1].hoi_id == e.hoi_id {
                    validation!("duplicate hoi_id {}", e.hoi_id)
                } else {
                    validation!("hoi_id {} is missing; ids must be exactly 0..{}", i, entries.len())
                });
            }
            for (field, value) in [("verb", &e.verb), ("verb_ing", &e.verb_ing), ("object", &e.object)] {
                if value.trim().is_empty() {
                    return Err(validation!("hoi_id {}: field `{}` is empty", e.hoi_id, field));
                }
            }
            if !pairs.insert((e.verb.as_str(), e.object.as_str())) {
                return Err(validation!("hoi_id {}: duplicate (verb, object) pair ({}, {})", e.hoi_id, e.verb, e.object));
            }
        }
        let num_objects = entries.iter().map(|e| e.object_id.index() + 1).max().unwrap_or(0);
        Ok(TripletVocabulary { entries, num_objects })
    }

    /// Raises the object-class count `K1` above the largest id in use.
    pub fn with_object_count(mut self, k1: usize) -> Result<Self> {
        if k1 < self.num_objects {
            return Err(validation!("object count {} is below the largest object_id + 1 ({})", k1, self.num_objects));
        }
        self.num_objects = k1;
        Ok(self)
    }

    /// `K2`.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `K1`.
    pub fn num_objects(&self) -> usize {
        self.num_objects
    }

    pub fn entries(&self) -> &[HoiTriplet] {
        &self.entries
    }

    pub fn get(&self, id: HoiId) -> Result<&HoiTriplet> {
        self.entries.get(id.index()).ok_or_else(|| Error::NotFound { kind: "hoi", id: id.to_string() })
    }

    pub fn contains(&self, id: HoiId) -> bool {
        id.index() < self.entries.len()
    }

    pub fn object_of(&self, id: HoiId) -> Result<ObjectId> {
        self.get(id).map(|e| e.object_id)
    }

    pub fn ids(&self) -> impl Iterator<Item = HoiId> + '_ {
        self.entries.iter().map(|e| e.hoi_id)
    }

    /// Distinct object classes that appear in at least one triplet.
    pub fn object_classes(&self) -> BTreeSet<ObjectId> {
        self.entries.iter().map(|e| e.object_id).collect()
    }

    /// Distinct verbs, sorted.
    pub fn verbs(&self) -> BTreeSet<&str> {
        self.entries.iter().map(|e| e.verb.as_str()).collect()
    }
}

impl TryFrom<Vec<HoiTriplet>> for TripletVocabulary {
    type Error = Error;

    fn try_from(entries: Vec<HoiTriplet>) -> Result<Self> {
        TripletVocabulary::new(entries)
    }
}

impl From<TripletVocabulary> for Vec<HoiTriplet> {
    fn from(v: TripletVocabulary) -> Self {
        v.entries
    }
}

/// Candidate values for every prompt slot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawAttributes", into = "RawAttributes")]
pub struct AttributeVocabulary {
    pub race: Vec<String>,
    pub age_gender: Vec<String>,
    pub environment: Vec<String>,
    pub quality: Vec<String>,
    pub lighting: Vec<String>,
    pub view: Vec<String>,
    pub camera: Vec<String>,
    pub negative: Vec<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAttributes {
    race: Vec<String>,
    age_gender: Vec<String>,
    environment: Vec<String>,
    quality: Vec<String>,
    lighting: Vec<String>,
    view: Vec<String>,
    camera: Vec<String>,
    negative: Vec<String>,
}

impl AttributeVocabulary {
    pub fn slots(&self) -> [(&'static str, &[String]); 8] {
        [
            ("race", &self.race),
            ("age_gender", &self.age_gender),
            ("environment", &self.environment),
            ("quality", &self.quality),
            ("lighting", &self.lighting),
            ("view", &self.view),
            ("camera", &self.camera),
            ("negative", &self.negative),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        for (name, values) in self.slots() {
            if values.is_empty() {
                return Err(validation!("attribute slot `{}` is empty", name));
            }
            if let Some(i) = values.iter().position(|v| v.trim().is_empty()) {
                return Err(validation!("attribute slot `{}` entry {} is blank", name, i));
            }
        }
        Ok(())
    }
}

impl TryFrom<RawAttributes> for AttributeVocabulary {
    type Error = Error;

    fn try_from(r: RawAttributes) -> Result<Self> {
        let a = AttributeVocabulary {
            race: r.race,
            age_gender: r.age_gender,
            environment: r.environment,
            quality: r.quality,
            lighting: r.lighting,
            view: r.view,
            camera: r.camera,
            negative: r.negative,
        };
        a.validate()?;
        Ok(a)
    }
}

impl From<AttributeVocabulary> for RawAttributes {
    fn from(a: AttributeVocabulary) -> Self {
        RawAttributes {
            race: a.race,
            age_gender: a.age_gender,
            environment: a.environment,
            quality: a.quality,
            lighting: a.lighting,
            view: a.view,
            camera: a.camera,
            negative: a.negative,
        }
    }
}

/// One line of the co-occurrence file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoOccurrence {
    pub a: HoiId,
    pub b: HoiId,
    pub count: u64,
}

/// Symmetric co-occurrence counts between HOI categories.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<CoOccurrence>", into = "Vec<CoOccurrence>")]
pub struct CoOccurrenceTable {
    // Both orientations are stored so neighbour lookup is a single range scan.
    adjacency: BTreeMap<HoiId, BTreeMap<HoiId, u64>>,
}

impl CoOccurrenceTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a table from file rows. A pair may be listed in either or both
    /// orientations; conflicting counts for the same pair are rejected.
    pub fn from_entries(entries: impl IntoIterator<Item = CoOccurrence>) -> Result<Self> {
        let mut t = Self::new();
        for e in entries {
            if let Some(existing) = t.get_opt(e.a, e.b) {
                if existing != e.count {
                    return Err(validation!(
                        "conflicting co-occurrence counts for ({}, {}): {} vs {}",
                        e.a,
                        e.b,
                        existing,
                        e.count
                    ));
                }
            }
            t.set(e.a, e.b, e.count);
        }
        Ok(t)
    }

    pub fn set(&mut self, a: HoiId, b: HoiId, count: u64) {
        self.adjacency.entry(a).or_default().insert(b, count);
        self.adjacency.entry(b).or_default().insert(a, count);
    }

    fn get_opt(&self, a: HoiId, b: HoiId) -> Option<u64> {
        self.adjacency.get(&a).and_then(|m| m.get(&b)).copied()
    }

    pub fn get(&self, a: HoiId, b: HoiId) -> u64 {
        self.get_opt(a, b).unwrap_or(0)
    }

    /// Ids other than `anchor` with a positive count against it, ascending.
    pub fn partners(&self, anchor: HoiId) -> impl Iterator<Item = (HoiId, u64)> + '_ {
        self.adjacency
            .get(&anchor)
            .into_iter()
            .flat_map(|m| m.iter())
            .filter(move |(id, c)| **id != anchor && **c > 0)
            .map(|(id, c)| (*id, *c))
    }

    /// Checks every id against the vocabulary.
    pub fn validate_against(&self, vocab: &TripletVocabulary) -> Result<()> {
        match self.adjacency.keys().find(|id| !vocab.contains(**id)) {
            Some(id) => Err(validation!("co-occurrence table references unknown hoi_id {}", id)),
            None => Ok(()),
        }
    }

    pub fn entries(&self) -> Vec<CoOccurrence> {
        let mut out = Vec::new();
        for (a, m) in &self.adjacency {
            for (b, c) in m {
                if a <= b {
                    out.push(CoOccurrence { a: *a, b: *b, count: *c });
                }
            }
        }
        out
    }
}

impl TryFrom<Vec<CoOccurrence>> for CoOccurrenceTable {
    type Error = Error;

    fn try_from(v: Vec<CoOccurrence>) -> Result<Self> {
        CoOccurrenceTable::from_entries(v)
    }
}

impl From<CoOccurrenceTable> for Vec<CoOccurrence> {
    fn from(t: CoOccurrenceTable) -> Self {
        t.entries()
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;
    use alloc::vec;

    pub fn triplet(id: u32, verb: &str, verb_ing: &str, object: &str, object_id: u32) -> HoiTriplet {
        HoiTriplet {
            hoi_id: HoiId(id),
            verb: verb.to_string(),
            verb_ing: verb_ing.to_string(),
            object: object.to_string(),
            object_id: ObjectId(object_id),
        }
    }

    /// Object 0 is `person`, 1 `bicycle`, 2 `apple`, 3 `horse`.
    pub fn small_vocab() -> TripletVocabulary {
        TripletVocabulary::new(vec![
            triplet(0, "ride", "riding", "bicycle", 1),
            triplet(1, "hold", "holding", "bicycle", 1),
            triplet(2, "eat", "eating", "apple", 2),
            triplet(3, "ride", "riding", "horse", 3),
            triplet(4, "hold", "holding", "apple", 2),
            triplet(5, "hug", "hugging", "person", 0),
        ])
        .unwrap()
    }

    pub fn single_attrs() -> AttributeVocabulary {
        let one = |s: &str| vec![s.to_string()];
        AttributeVocabulary {
            race: one("Asian"),
            age_gender: one("young woman"),
            environment: one("sunny park"),
            quality: one("high quality"),
            lighting: one("soft lighting"),
            view: one("front view"),
            camera: one("Canon EOS"),
            negative: one("blurry"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;
    use alloc::vec;

    #[test]
    fn minimal_vocabulary() {
        let v = TripletVocabulary::new(vec![triplet(0, "ride", "riding", "bicycle", 0)]).unwrap();
        assert_eq!(v.len(), 1);
        assert!(v.num_objects() >= 1);
    }

    #[test]
    fn rejects_duplicate_pair_and_id() {
        let dup_pair = TripletVocabulary::new(vec![
            triplet(0, "ride", "riding", "bicycle", 1),
            triplet(1, "ride", "riding", "bicycle", 1),
        ]);
        assert!(matches!(dup_pair, Err(Error::Validation(m)) if m.contains("duplicate (verb, object)")));
        let dup_id = TripletVocabulary::new(vec![
            triplet(0, "ride", "riding", "bicycle", 1),
            triplet(0, "hold", "holding", "bicycle", 1),
        ]);
        assert!(matches!(dup_id, Err(Error::Validation(m)) if m.contains("duplicate hoi_id")));
        let gap = TripletVocabulary::new(vec![triplet(1, "ride", "riding", "bicycle", 1)]);
        assert!(gap.is_err());
    }

    #[test]
    fn vocabulary_json_schema() {
        let json = r#"[{"hoi_id": 1, "verb": "hold", "verb_ing": "holding", "object": "cup", "object_id": 4},
                       {"hoi_id": 0, "verb": "ride", "verb_ing": "riding", "object": "bicycle", "object_id": 1}]"#;
        let v: TripletVocabulary = serde_json::from_str(json).unwrap();
        assert_eq!(v.len(), 2);
        assert_eq!(v.num_objects(), 5);
        assert_eq!(v.get(HoiId(1)).unwrap().object, "cup");
        assert!(v.get(HoiId(2)).is_err());
    }

    #[test]
    fn attributes_reject_blank_entries() {
        let mut a = single_attrs();
        a.view = vec!["  ".to_string()];
        assert!(a.validate().is_err());
        let json = r#"{"race":["a"],"age_gender":["b"],"environment":["c"],"quality":["d"],
                       "lighting":["e"],"view":["f"],"camera":["g"],"negative":[]}"#;
        assert!(serde_json::from_str::<AttributeVocabulary>(json).is_err());
    }

    #[test]
    fn cooccurrence_is_symmetric() {
        let t = CoOccurrenceTable::from_entries([
            CoOccurrence { a: HoiId(0), b: HoiId(1), count: 4 },
            CoOccurrence { a: HoiId(2), b: HoiId(2), count: 7 },
            CoOccurrence { a: HoiId(1), b: HoiId(0), count: 4 },
        ])
        .unwrap();
        assert_eq!(t.get(HoiId(1), HoiId(0)), 4);
        assert_eq!(t.get(HoiId(2), HoiId(2)), 7);
        assert_eq!(t.partners(HoiId(2)).count(), 0);
        let bad = CoOccurrenceTable::from_entries([
            CoOccurrence { a: HoiId(0), b: HoiId(1), count: 4 },
            CoOccurrence { a: HoiId(1), b: HoiId(0), count: 5 },
        ]);
        assert!(bad.is_err());
    }
}
