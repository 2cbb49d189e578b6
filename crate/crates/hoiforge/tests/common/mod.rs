#![allow(dead_code)]

use std::path::{Path, PathBuf};

use hoiforge_core::autolabel::{AnnotatedImage, AnnotationSource, DetectionRecord, HoiAnnotation};
use hoiforge_core::{BBox, HoiId, ObjectId};
use serde_json::json;

pub const VOCAB: &str = r#"[
  {"hoi_id": 0, "verb": "ride", "verb_ing": "riding", "object": "bicycle", "object_id": 1},
  {"hoi_id": 1, "verb": "hold", "verb_ing": "holding", "object": "bicycle", "object_id": 1},
  {"hoi_id": 2, "verb": "eat", "verb_ing": "eating", "object": "apple", "object_id": 2},
  {"hoi_id": 3, "verb": "ride", "verb_ing": "riding", "object": "horse", "object_id": 3},
  {"hoi_id": 4, "verb": "hold", "verb_ing": "holding", "object": "apple", "object_id": 2},
  {"hoi_id": 5, "verb": "hug", "verb_ing": "hugging", "object": "person", "object_id": 0}
]"#;

pub const ATTRS: &str = r#"{
  "race": ["Asian", "African"],
  "age_gender": ["young woman", "old man"],
  "environment": ["sunny park", "city street"],
  "quality": ["high quality"],
  "lighting": ["soft lighting", "golden hour"],
  "view": ["front view"],
  "camera": ["Canon EOS"],
  "negative": ["blurry", "lowres", "bad anatomy", "extra limbs", "watermark", "jpeg artifacts"]
}"#;

pub const COOC: &str = r#"[
  {"a": 0, "b": 1, "count": 4},
  {"a": 2, "b": 4, "count": 2},
  {"a": 3, "b": 5, "count": 1},
  {"a": 0, "b": 3, "count": 1}
]"#;

pub fn write(dir: &Path, name: &str, contents: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, contents).unwrap();
    p
}

pub fn write_jsonl<T: serde::Serialize>(dir: &Path, name: &str, rows: &[T]) -> PathBuf {
    let mut s = String::new();
    for r in rows {
        s.push_str(&serde_json::to_string(r).unwrap());
        s.push('\n');
    }
    write(dir, name, &s)
}

pub fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Vec<T> {
    std::fs::read_to_string(path).unwrap().lines().filter(|l| !l.trim().is_empty()).map(|l| serde_json::from_str(l).unwrap()).collect()
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> T {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

pub fn bbox(b: [f64; 4]) -> BBox {
    BBox::new(b[0], b[1], b[2], b[3]).unwrap()
}

pub fn det(class: u32, b: [f64; 4], confidence: f64) -> DetectionRecord {
    DetectionRecord { image_id: String::new(), class_id: ObjectId(class), bbox: bbox(b), confidence }
}

pub fn raw_image(id: &str, prompt: &[u32], detections: Vec<DetectionRecord>) -> AnnotatedImage {
    AnnotatedImage {
        image_id: id.into(),
        file: format!("{id}.png"),
        width: 640,
        height: 480,
        prompt_triplets: prompt.iter().map(|&h| HoiId(h)).collect(),
        detections,
        annotations: vec![],
        kept: false,
        flag: None,
    }
}

/// Kept image with one annotation per entry of `hois`.
pub fn labeled_image(id: &str, hois: &[u32]) -> AnnotatedImage {
    let annotations = hois
        .iter()
        .enumerate()
        .map(|(k, &h)| {
            let o = 40.0 * k as f64;
            HoiAnnotation {
                human_box: bbox([10.0 + o, 10.0, 60.0 + o, 120.0]),
                object_box: bbox([70.0 + o, 50.0, 110.0 + o, 90.0]),
                hoi_id: HoiId(h),
                source: AnnotationSource::Auto,
                pass: None,
            }
        })
        .collect();
    AnnotatedImage {
        image_id: id.into(),
        file: format!("{id}.png"),
        width: 640,
        height: 480,
        prompt_triplets: hois.iter().map(|&h| HoiId(h)).collect(),
        detections: vec![],
        annotations,
        kept: true,
        flag: None,
    }
}

pub fn histogram_json(unit: &str, counts: &[u64]) -> String {
    json!({"unit": unit, "counts": counts}).to_string()
}
