//! Seeded toy world: invented entities with attribute facts, a corpus page per
//! entity, and claims derived from those facts by mutation.
//!
//! Splits are assigned per entity, so train and test never share a page.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{ClaimRecord, Document, EvidenceRef, Split};
use crate::text::{tokenize, VerdictLabel};

const FIRST: [&str; 24] = [
    "alden", "brisa", "corvin", "dalia", "edric", "fenna", "garrick", "halvard", "ilsa", "jorund", "kestrel", "lieve",
    "marek", "nadine", "osric", "perrin", "quilla", "rosalind", "soren", "tamsin", "ulric", "vesna", "wendel", "yara",
];
const LAST: [&str; 24] = [
    "ashgrove", "brannock", "calloway", "dunmere", "elsworth", "farrow", "greythorn", "holloway", "ivers", "jessop",
    "kildare", "lockhart", "marlow", "northcott", "oakhurst", "pembry", "quarles", "ravenhill", "stanwick", "tamworth",
    "underhill", "vance", "whitlock", "yardley",
];
const CITIES: [&str; 20] = [
    "kelmora", "brightwater", "dunhollow", "estmoor", "falkreach", "greymouth", "harrowgate", "ironvale", "juniper",
    "kingsbay", "larkspur", "millbrook", "northwick", "oldcastle", "pinecrest", "queensford", "redcliff", "silverton",
    "thornbury", "westmarch",
];
const OCCUPATIONS: [&str; 16] = [
    "baker", "cartographer", "diplomat", "farmer", "geologist", "historian", "journalist", "linguist", "mason",
    "novelist", "painter", "sculptor", "surgeon", "teacher", "violinist", "weaver",
];
const COUNTRIES: [&str; 14] = [
    "arvenia", "belmora", "corrandy", "drovania", "elstria", "fenwald", "galdoria", "hestmark", "ivory", "jorvik",
    "kallistan", "lumaria", "montreval", "norvane",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Slot {
    Hometown,
    BirthYear,
    Occupation,
    Citizenship,
    Siblings,
}

impl Slot {
    pub const ALL: [Slot; 5] = [Slot::Hometown, Slot::BirthYear, Slot::Occupation, Slot::Citizenship, Slot::Siblings];

    pub fn is_numeric(self) -> bool {
        matches!(self, Slot::BirthYear | Slot::Siblings)
    }

    pub fn template(self) -> &'static Template {
        &TEMPLATES[self as usize]
    }

    fn draw(self, rng: &mut ChaCha8Rng) -> String {
        match self {
            Slot::Hometown => CITIES.choose(rng).unwrap().to_string(),
            Slot::BirthYear => rng.gen_range(1800..2000).to_string(),
            Slot::Occupation => OCCUPATIONS.choose(rng).unwrap().to_string(),
            Slot::Citizenship => COUNTRIES.choose(rng).unwrap().to_string(),
            Slot::Siblings => rng.gen_range(1..10).to_string(),
        }
    }

    fn pool(self) -> &'static [&'static str] {
        match self {
            Slot::Hometown => &CITIES,
            Slot::Occupation => &OCCUPATIONS,
            Slot::Citizenship => &COUNTRIES,
            Slot::BirthYear | Slot::Siblings => &[],
        }
    }
}

/// Surface forms of one attribute. `{n}` is the entity name, `{v}` the value.
/// The short form's tokens are a subset of the full form's.
#[derive(Debug)]
pub struct Template {
    pub full: &'static str,
    pub short: &'static str,
    pub negated: &'static str,
}

const TEMPLATES: [Template; 5] = [
    Template {
        full: "{n} grew up in the town of {v}.",
        short: "{n} grew up in {v}.",
        negated: "{n} never grew up in the town of {v}.",
    },
    Template { full: "{n} was born in the year {v}.", short: "{n} was born in {v}.", negated: "{n} was not born in the year {v}." },
    Template {
        full: "{n} works as a {v} in the region.",
        short: "{n} works as a {v}.",
        negated: "{n} never works as a {v} in the region.",
    },
    Template {
        full: "{n} is a citizen of the republic of {v}.",
        short: "{n} is a citizen of {v}.",
        negated: "{n} is not a citizen of the republic of {v}.",
    },
    Template { full: "{n} has {v} siblings in total.", short: "{n} has {v} siblings.", negated: "{n} does not have {v} siblings in total." },
];

const FILLERS: [&str; 3] = [
    "Letters written by {n} are kept in the archive at {v}.",
    "A portrait of {n} once hung in a gallery in {v}.",
    "{n} often spoke about a long journey through {v}.",
];

fn fill(template: &str, name: &str, value: &str) -> String {
    template.replace("{n}", name).replace("{v}", value)
}

fn capitalize(w: &str) -> String {
    let mut c = w.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entity {
    pub page_id: String,
    pub name: String,
    /// One value per slot, in `Slot::ALL` order.
    pub facts: Vec<(Slot, String)>,
    pub split: Split,
    /// Sentences of the page, in order.
    pub sentences: Vec<String>,
    /// Sentence index of each fact.
    pub fact_sentence: Vec<u32>,
}

impl Entity {
    pub fn value(&self, slot: Slot) -> &str {
        &self.facts.iter().find(|(s, _)| *s == slot).expect("every slot is filled").1
    }

    pub fn document(&self) -> Document {
        Document { page: self.page_id.clone(), text: self.sentences.join(" ") }
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum SynthError {
    #[error("toy world needs at least one entity")]
    NoEntities,
    #[error("at most {max} entities can be named, asked for {asked}")]
    TooManyEntities { asked: usize, max: usize },
    #[error("n_claims must be at least 1")]
    NoClaims,
    #[error("label fractions must lie in [0, 1] and sum to at most 1")]
    BadMix,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToyWorld {
    pub entities: Vec<Entity>,
    pub seed: u64,
}

impl ToyWorld {
    pub fn new(n_entities: usize, seed: u64) -> Result<Self, SynthError> {
        let max = FIRST.len() * LAST.len();
        if n_entities == 0 {
            return Err(SynthError::NoEntities);
        }
        if n_entities > max {
            return Err(SynthError::TooManyEntities { asked: n_entities, max });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let names = rand::seq::index::sample(&mut rng, max, n_entities);
        let mut entities = Vec::with_capacity(n_entities);
        for code in names.iter() {
            let (first, last) = (FIRST[code / LAST.len()], LAST[code % LAST.len()]);
            let name = format!("{} {}", capitalize(first), capitalize(last));
            let facts: Vec<(Slot, String)> = Slot::ALL.iter().map(|&s| (s, s.draw(&mut rng))).collect();
            let u: f64 = rng.gen();
            let split = if u < 0.7 {
                Split::Train
            } else if u < 0.85 {
                Split::Validation
            } else {
                Split::Test
            };

            let mut order: Vec<Option<usize>> = (0..facts.len()).map(Some).collect();
            for _ in 0..rng.gen_range(0..=2) {
                order.push(None);
            }
            order.shuffle(&mut rng);
            let mut sentences = Vec::with_capacity(order.len());
            let mut fact_sentence = vec![0u32; facts.len()];
            for slot in order {
                match slot {
                    Some(f) => {
                        fact_sentence[f] = sentences.len() as u32;
                        sentences.push(fill(facts[f].0.template().full, &name, &capitalize(&facts[f].1)));
                    }
                    None => {
                        let t = FILLERS.choose(&mut rng).unwrap();
                        sentences.push(fill(t, &name, &capitalize(CITIES.choose(&mut rng).unwrap())));
                    }
                }
            }
            entities.push(Entity { page_id: format!("{}_{}", capitalize(first), capitalize(last)), name, facts, split, sentences, fact_sentence });
        }
        Ok(ToyWorld { entities, seed })
    }

    pub fn corpus(&self) -> Vec<Document> {
        self.entities.iter().map(Entity::document).collect()
    }
}

/// Label proportions for generated claims; the rest are SUPPORTS.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LabelMix {
    pub refutes: f64,
    pub nei: f64,
}

impl Default for LabelMix {
    fn default() -> Self {
        LabelMix { refutes: 0.5, nei: 0.0 }
    }
}

impl LabelMix {
    fn validate(&self) -> Result<(), SynthError> {
        let ok = (0.0..=1.0).contains(&self.refutes) && (0.0..=1.0).contains(&self.nei) && self.refutes + self.nei <= 1.0;
        ok.then_some(()).ok_or(SynthError::BadMix)
    }
}

/// A value of `slot`'s type that does not occur on the entity's page.
fn foreign_value(entity: &Entity, slot: Slot, rng: &mut ChaCha8Rng) -> String {
    let page: HashSet<String> = tokenize(&entity.sentences.join(" ")).tokens.into_iter().collect();
    let current = entity.value(slot);
    loop {
        let v = match slot {
            Slot::BirthYear => {
                let y: i64 = current.parse().unwrap();
                let d = rng.gen_range(1..=15) * if rng.gen_bool(0.5) { 1 } else { -1 };
                (y + d).to_string()
            }
            Slot::Siblings => rng.gen_range(1..13).to_string(),
            _ => slot.pool().choose(rng).unwrap().to_string(),
        };
        if !page.contains(&v) {
            return v;
        }
    }
}

/// Generate `n_claims` records over `world`, deterministic under `seed`.
pub fn synth_generate(world: &ToyWorld, n_claims: usize, mix: LabelMix, seed: u64) -> Result<(Vec<ClaimRecord>, Vec<Document>), SynthError> {
    if world.entities.is_empty() {
        return Err(SynthError::NoEntities);
    }
    if n_claims == 0 {
        return Err(SynthError::NoClaims);
    }
    mix.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::with_capacity(n_claims);
    for id in 0..n_claims as u64 {
        let entity = world.entities.choose(&mut rng).unwrap();
        let f = rng.gen_range(0..Slot::ALL.len());
        let (slot, value) = &entity.facts[f];
        let t = slot.template();
        let reference = fill(t.full, &entity.name, &capitalize(value));
        let evidence = vec![EvidenceRef(entity.page_id.clone(), entity.fact_sentence[f])];
        let u: f64 = rng.gen();
        let record = if u < mix.nei {
            let v = foreign_value(entity, Slot::Hometown, &mut rng);
            ClaimRecord {
                id,
                claim: format!("{} once visited {}.", entity.name, capitalize(&v)),
                reference: String::new(),
                mutation: "unverifiable".into(),
                label: VerdictLabel::NotEnoughInfo,
                evidence_refs: Vec::new(),
                split: entity.split,
            }
        } else if u < mix.nei + mix.refutes {
            let (mutation, claim) = if rng.gen_bool(0.5) {
                ("negate", fill(t.negated, &entity.name, &capitalize(value)))
            } else {
                let v = capitalize(&foreign_value(entity, *slot, &mut rng));
                let op = if slot.is_numeric() { "perturb_number" } else { "substitute_entity" };
                (op, fill(t.full, &entity.name, &v))
            };
            ClaimRecord { id, claim, reference, mutation: mutation.into(), label: VerdictLabel::Refutes, evidence_refs: evidence, split: entity.split }
        } else {
            let claim = fill(t.short, &entity.name, &capitalize(value));
            ClaimRecord { id, claim, reference, mutation: "paraphrase".into(), label: VerdictLabel::Supports, evidence_refs: evidence, split: entity.split }
        };
        records.push(record);
    }
    Ok((records, world.corpus()))
}

/// Token-set Jaccard similarity.
pub fn jaccard(a: &str, b: &str) -> f64 {
    let a: HashSet<String> = tokenize(a).tokens.into_iter().collect();
    let b: HashSet<String> = tokenize(b).tokens.into_iter().collect();
    let union = a.union(&b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(&b).count() as f64 / union as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{validate_splits, write_corpus, write_records, SplitManifest};

    fn world() -> (Vec<ClaimRecord>, Vec<Document>) {
        let w = ToyWorld::new(60, 7).unwrap();
        synth_generate(&w, 200, LabelMix { refutes: 0.45, nei: 0.1 }, 7).unwrap()
    }

    #[test]
    fn deterministic_bytes() {
        let dump = |(r, d): (Vec<ClaimRecord>, Vec<Document>)| {
            let mut buf = Vec::new();
            write_records(&mut buf, &r).unwrap();
            write_corpus(&mut buf, &d).unwrap();
            buf
        };
        assert_eq!(dump(world()), dump(world()));
    }

    #[test]
    fn zero_entities_rejected() {
        assert_eq!(ToyWorld::new(0, 1).unwrap_err(), SynthError::NoEntities);
        let empty = ToyWorld { entities: vec![], seed: 0 };
        assert_eq!(synth_generate(&empty, 3, LabelMix::default(), 0).unwrap_err(), SynthError::NoEntities);
    }

    #[test]
    fn substitution_touches_only_the_slot() {
        let (records, _) = world();
        let mut seen = 0;
        for r in records.iter().filter(|r| r.mutation == "substitute_entity" || r.mutation == "perturb_number") {
            let (c, f) = (tokenize(&r.claim).tokens, tokenize(&r.reference).tokens);
            assert_eq!(c.len(), f.len());
            let diff: Vec<usize> = (0..c.len()).filter(|&i| c[i] != f[i]).collect();
            assert_eq!(diff.len(), 1, "{} vs {}", r.claim, r.reference);
            seen += 1;
        }
        assert!(seen > 10);
    }

    #[test]
    fn references_are_corpus_sentences() {
        let (records, docs) = world();
        for r in records.iter().filter(|r| r.label != VerdictLabel::NotEnoughInfo) {
            let reference = tokenize(&r.reference).tokens;
            let page = docs.iter().find(|d| d.page == r.evidence_refs[0].page()).unwrap();
            let toks = tokenize(&page.text).tokens;
            assert!(toks.windows(reference.len()).any(|w| w == reference.as_slice()), "{}", r.reference);
            if r.label == VerdictLabel::Refutes {
                assert_ne!(r.claim, r.reference);
            } else {
                assert!(jaccard(&r.claim, &r.reference) >= 0.5);
            }
        }
    }

    #[test]
    fn splits_are_entity_disjoint() {
        let (records, _) = world();
        let report = validate_splits(&records, &SplitManifest::observed(&records));
        assert!(report.passed(), "{:?}", report.shared_pages);
        assert!(records.iter().any(|r| r.label == VerdictLabel::NotEnoughInfo));
    }

    #[test]
    fn no_negators_in_corpus() {
        let (_, docs) = world();
        for d in docs {
            let toks = tokenize(&d.text).tokens;
            assert!(!toks.iter().any(|t| t == "not" || t == "never" || t == "does"));
        }
    }
}
