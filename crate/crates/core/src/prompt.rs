//! HOIPrompt composition, parsing, co-occurrence sampling and balance planning.
//!
//! A positive prompt is one person clause per triplet, joined by `" and "`,
//! followed by the environment and the four photographic slots:
//!
//! ```text
//! a {race} {age_gender} {verb_ing} {a|an} {object}[ and a ...], {environment}, {quality}, {lighting}, {view}, {camera}
//! ```
//!
//! Underscores in vocabulary object names are rendered as spaces.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{argument, validation, Result};
use crate::rng::{self, SeededRng};
use crate::stats::CategoryHistogram;
use crate::vocab::{AttributeVocabulary, CoOccurrenceTable, HoiId, TripletVocabulary};

/// Default share of generated images that survive auto-labeling
/// (146,772 of 259,806).
pub const DEFAULT_RETENTION_RATE: f64 = 146_772.0 / 259_806.0;

pub const DEFAULT_NEGATIVE_COUNT: usize = 5;
pub const DEFAULT_MAX_TRIPLETS: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptOptions {
    /// Number of negative phrases drawn without replacement (capped at the list size).
    pub negative_count: usize,
    /// Upper bound on triplets sharing one prompt.
    pub max_triplets: usize,
    /// Generator knobs; one value is drawn per knob, in key order.
    pub model_config_space: BTreeMap<String, Vec<String>>,
}

impl Default for PromptOptions {
    fn default() -> Self {
        PromptOptions {
            negative_count: DEFAULT_NEGATIVE_COUNT,
            max_triplets: DEFAULT_MAX_TRIPLETS,
            model_config_space: BTreeMap::new(),
        }
    }
}

/// A composed prompt. Field order is the serialized order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HoiPrompt {
    pub positive_text: String,
    pub negative_text: String,
    pub triplet_ids: Vec<HoiId>,
    pub seed: u64,
    pub model_config: BTreeMap<String, String>,
}

/// Prompts to request per category.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationPlan {
    /// Indexed by category id.
    pub per_category: Vec<u64>,
    pub retention_rate: f64,
}

impl GenerationPlan {
    pub fn total(&self) -> u64 {
        self.per_category.iter().sum()
    }
}

/// `"an"` for nouns starting with a vowel letter, `"a"` otherwise.
pub fn article(noun: &str) -> &'static str {
    match noun.chars().next().map(|c| c.to_ascii_lowercase()) {
        Some('a' | 'e' | 'i' | 'o' | 'u') => "an",
        _ => "a",
    }
}

fn render_object(object: &str) -> String {
    object.replace('_', " ")
}

fn action_phrase(verb_ing: &str, object: &str) -> String {
    let object = render_object(object);
    alloc::format!("{} {} {}", verb_ing, article(&object), object)
}

fn pick<'a>(rng: &mut SeededRng, values: &'a [String]) -> &'a str {
    &values[rng::index(rng, values.len())]
}

/// Composes a prompt with [`PromptOptions::default`].
pub fn compose_prompt(
    triplets: &[HoiId],
    vocab: &TripletVocabulary,
    attrs: &AttributeVocabulary,
    seed: u64,
) -> Result<HoiPrompt> {
    compose_prompt_with(triplets, vocab, attrs, seed, &PromptOptions::default())
}

/// Composes a prompt. Draw order from the seeded generator: per clause race then
/// age/gender; then environment, quality, lighting, view, camera; then the
/// negative sample; then model-config knobs in key order.
pub fn compose_prompt_with(
    triplets: &[HoiId],
    vocab: &TripletVocabulary,
    attrs: &AttributeVocabulary,
    seed: u64,
    options: &PromptOptions,
) -> Result<HoiPrompt> {
    if triplets.is_empty() {
        return Err(argument!("a prompt needs at least one triplet"));
    }
    attrs.validate()?;
    let mut rng = rng::seeded(seed);
    let mut clauses = Vec::with_capacity(triplets.len());
    for id in triplets {
        let t = vocab.get(*id)?;
        let race = pick(&mut rng, &attrs.race);
        let age_gender = pick(&mut rng, &attrs.age_gender);
        clauses.push(alloc::format!("a {} {} {}", race, age_gender, action_phrase(&t.verb_ing, &t.object)));
    }
    let mut positive_text = clauses.join(" and ");
    for slot in [&attrs.environment, &attrs.quality, &attrs.lighting, &attrs.view, &attrs.camera] {
        positive_text.push_str(", ");
        positive_text.push_str(pick(&mut rng, slot));
    }

    let n_neg = options.negative_count.min(attrs.negative.len());
    let negative_text = rand::seq::index::sample(&mut rng, attrs.negative.len(), n_neg)
        .into_iter()
        .map(|i| attrs.negative[i].as_str())
        .collect::<Vec<_>>()
        .join(", ");

    let mut model_config = BTreeMap::new();
    for (knob, values) in &options.model_config_space {
        if values.is_empty() {
            return Err(validation!("model config knob `{}` has no values", knob));
        }
        model_config.insert(knob.clone(), pick(&mut rng, values).to_string());
    }

    Ok(HoiPrompt { positive_text, negative_text, triplet_ids: triplets.to_vec(), seed, model_config })
}

/// Recovers the triplet ids from a positive prompt composed over the same
/// vocabularies. Fails if the text does not match the grammar.
pub fn parse_prompt(text: &str, vocab: &TripletVocabulary, attrs: &AttributeVocabulary) -> Result<Vec<HoiId>> {
    let phrases: Vec<(HoiId, String)> =
        vocab.entries().iter().map(|e| (e.hoi_id, action_phrase(&e.verb_ing, &e.object))).collect();
    let parser = PromptParser { phrases: &phrases, attrs };
    let mut ids = parser.clauses(text).ok_or_else(|| validation!("prompt does not match the HOI grammar: {:?}", text))?;
    ids.reverse();
    Ok(ids)
}

struct PromptParser<'a> {
    phrases: &'a [(HoiId, String)],
    attrs: &'a AttributeVocabulary,
}

impl PromptParser<'_> {
    // Returns ids in reverse order so each level can push onto the tail.
    fn clauses(&self, text: &str) -> Option<Vec<HoiId>> {
        let rest = text.strip_prefix("a ")?;
        for race in &self.attrs.race {
            let Some(rest) = rest.strip_prefix(race.as_str()).and_then(|r| r.strip_prefix(' ')) else { continue };
            for age_gender in &self.attrs.age_gender {
                let Some(rest) = rest.strip_prefix(age_gender.as_str()).and_then(|r| r.strip_prefix(' ')) else {
                    continue;
                };
                for (id, phrase) in self.phrases {
                    let Some(rest) = rest.strip_prefix(phrase.as_str()) else { continue };
                    if let Some(next) = rest.strip_prefix(" and ") {
                        if let Some(mut ids) = self.clauses(next) {
                            ids.push(*id);
                            return Some(ids);
                        }
                    }
                    if let Some(suffix) = rest.strip_prefix(", ") {
                        let a = self.attrs;
                        if slots_match(suffix, &[&a.environment, &a.quality, &a.lighting, &a.view, &a.camera]) {
                            return Some(alloc::vec![*id]);
                        }
                    }
                }
            }
        }
        None
    }
}

fn slots_match(text: &str, slots: &[&Vec<String>]) -> bool {
    let Some((first, rest_slots)) = slots.split_first() else {
        return text.is_empty();
    };
    first.iter().any(|value| match text.strip_prefix(value.as_str()) {
        Some(rest) if rest_slots.is_empty() => rest.is_empty(),
        Some(rest) => rest.strip_prefix(", ").is_some_and(|r| slots_match(r, rest_slots)),
        None => false,
    })
}

/// Returns `anchor` followed by up to `k - 1` distinct co-occurring ids.
///
/// Partners are drawn without replacement, each draw proportional to its
/// count against the anchor among the partners not yet chosen.
pub fn sample_cooccurring(table: &CoOccurrenceTable, anchor: HoiId, k: usize, seed: u64) -> Result<Vec<HoiId>> {
    if k == 0 {
        return Err(argument!("k must be positive"));
    }
    let mut out = alloc::vec![anchor];
    let mut pool: Vec<(HoiId, u64)> = table.partners(anchor).collect();
    let mut rng = rng::seeded(seed);
    while out.len() < k && !pool.is_empty() {
        let total: u64 = pool.iter().map(|(_, c)| c).sum();
        let mut ticket = rng::below(&mut rng, total);
        let pos = pool
            .iter()
            .position(|(_, c)| {
                if ticket < *c {
                    true
                } else {
                    ticket -= c;
                    false
                }
            })
            .expect("ticket below total weight");
        out.push(pool.remove(pos).0);
    }
    Ok(out)
}

/// Prompts needed per category so that the expected post-filter count reaches
/// `target_min`: `ceil(max(0, target_min - hist[c]) / retention_rate)`.
pub fn build_generation_plan(hist: &CategoryHistogram, target_min: u64, retention_rate: f64) -> Result<GenerationPlan> {
    if !(retention_rate > 0.0 && retention_rate <= 1.0) {
        return Err(argument!("retention rate {} must lie in (0, 1]", retention_rate));
    }
    if target_min == 0 {
        return Err(argument!("target_min must be positive"));
    }
    let per_category = hist
        .counts
        .iter()
        .map(|&have| {
            let deficit = target_min.saturating_sub(have) as f64;
            let mut n = libm::ceil(deficit / retention_rate) as u64;
            // Float division can land one below the true ceiling.
            while (n as f64) * retention_rate < deficit {
                n += 1;
            }
            n
        })
        .collect();
    Ok(GenerationPlan { per_category, retention_rate })
}

/// Expands a plan into prompts. For every category (ascending) and every
/// requested prompt, two values are drawn from a master generator seeded with
/// `seed`: the co-occurrence sampling seed and the composition seed stored on
/// the prompt.
pub fn expand_plan(
    plan: &GenerationPlan,
    vocab: &TripletVocabulary,
    attrs: &AttributeVocabulary,
    table: &CoOccurrenceTable,
    options: &PromptOptions,
    seed: u64,
) -> Result<Vec<HoiPrompt>> {
    if plan.per_category.len() != vocab.len() {
        return Err(validation!("plan covers {} categories, vocabulary has {}", plan.per_category.len(), vocab.len()));
    }
    let mut master = rng::seeded(seed);
    let mut out = Vec::with_capacity(plan.total() as usize);
    for (c, &count) in plan.per_category.iter().enumerate() {
        let anchor = HoiId(c as u32);
        for _ in 0..count {
            let sample_seed = master.next_u64();
            let prompt_seed = master.next_u64();
            let triplets = sample_cooccurring(table, anchor, options.max_triplets.max(1), sample_seed)?;
            out.push(compose_prompt_with(&triplets, vocab, attrs, prompt_seed, options)?);
        }
    }
    Ok(out)
}
