use std::path::PathBuf;

use fec_core::dataset::{load_corpus, load_dataset, validate_splits, write_corpus, write_records, SplitManifest};
use fec_core::synth::{synth_generate, LabelMix, ToyWorld};

fn sample(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/sample").join(name)
}

#[test]
fn bundled_sample_loads_and_is_disjoint() {
    let records = load_dataset(&sample("claims.jsonl"), None).unwrap();
    let docs = load_corpus(&sample("corpus.jsonl")).unwrap();
    assert_eq!(records.len(), 300);
    let report = validate_splits(&records, &SplitManifest::observed(&records));
    assert!(report.passed() && report.disjoint(), "{:?}", report.shared_pages);
    let pages: std::collections::BTreeSet<&str> = docs.iter().map(|d| d.page.as_str()).collect();
    assert!(records.iter().flat_map(|r| &r.evidence_refs).all(|e| pages.contains(e.page())));
}

#[test]
fn bundled_sample_regenerates_byte_for_byte() {
    let world = ToyWorld::new(40, 2024).unwrap();
    let (records, docs) = synth_generate(&world, 300, LabelMix { refutes: 0.4, nei: 0.15 }, 2024).unwrap();
    let (mut claims, mut corpus) = (Vec::new(), Vec::new());
    write_records(&mut claims, &records).unwrap();
    write_corpus(&mut corpus, &docs).unwrap();
    assert!(claims == std::fs::read(sample("claims.jsonl")).unwrap(), "claims differ");
    assert!(corpus == std::fs::read(sample("corpus.jsonl")).unwrap(), "corpus differs");
}
