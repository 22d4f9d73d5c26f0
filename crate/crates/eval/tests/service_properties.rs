use fec_eval::sim::random_submission;
use fec_eval::stats::question_kappa;
use fec_eval::{create_batch, BatchConfig, EvalService, Question, ScoringMode, SystemOutput, SystemOutputs};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn systems(n_sys: usize, n: u64) -> Vec<SystemOutputs> {
    (0..n_sys)
        .map(|s| SystemOutputs {
            system_id: format!("hidden-system-{s}-x"),
            outputs: (0..n).map(|i| SystemOutput { instance_id: i, claim: format!("c{i}"), evidence: vec![], correction: format!("k{i}") }).collect(),
        })
        .collect()
}

fn rate_all(svc: &mut EvalService, rng: &mut ChaCha8Rng) {
    let raters = svc.batch().raters.clone();
    for r in &raters {
        while let Some(view) = svc.next_task(r).unwrap() {
            svc.submit(random_submission(rng, view.task_id, r, 0.6)).unwrap();
        }
    }
}

#[test]
fn persistence_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let batch = create_batch(&systems(2, 30), BatchConfig { seed: 2, ..Default::default() }, &["a".into(), "b".into(), "c".into()]).unwrap();
    let mut svc = EvalService::with_store(dir.path(), batch.clone()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..20 {
        let v = svc.next_task("a").unwrap().unwrap();
        svc.submit(random_submission(&mut rng, v.task_id, "a", 0.5)).unwrap();
    }
    svc.compact().unwrap();
    rate_all(&mut svc, &mut rng);
    let (agg, agr, prog) = (svc.aggregate(ScoringMode::Strict), svc.agreement(), svc.progress(None).unwrap());
    drop(svc);

    let reopened = EvalService::open(dir.path()).unwrap();
    assert_eq!(reopened.aggregate(ScoringMode::Strict), agg);
    assert_eq!(reopened.agreement(), agr);
    assert_eq!(reopened.progress(None).unwrap(), prog);
    assert_eq!(prog.done, prog.total);

    let resumed = EvalService::with_store(dir.path(), batch).unwrap();
    assert_eq!(resumed.ratings().len(), prog.total);
    let other = create_batch(&systems(2, 30), BatchConfig { seed: 3, ..Default::default() }, &["a".into(), "b".into(), "c".into()]).unwrap();
    assert!(EvalService::with_store(dir.path(), other).is_err());
}

#[test]
fn duplicate_journal_entries_are_ignored() {
    let dir = tempfile::tempdir().unwrap();
    let batch = create_batch(&systems(1, 4), BatchConfig { double_ratio: 0.0, ..Default::default() }, &["a".into()]).unwrap();
    let mut svc = EvalService::with_store(dir.path(), batch).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    svc.submit(random_submission(&mut rng, 0, "a", 0.5)).unwrap();
    svc.compact().unwrap();
    drop(svc);
    // simulate a crash after the snapshot was written but before the journal was emptied
    let snap: Vec<serde_json::Value> = serde_json::from_slice(&std::fs::read(dir.path().join("snapshot.json")).unwrap()).unwrap();
    std::fs::write(dir.path().join("ratings.jsonl"), format!("{}\n{{torn", snap[0])).unwrap();
    let svc = EvalService::open(dir.path()).unwrap();
    assert_eq!(svc.ratings().len(), 1);
}

#[test]
fn monotone_aggregates_and_near_zero_kappa() {
    let batch = create_batch(&systems(5, 1000), BatchConfig { sample_per_system: 1000, double_ratio: 1.0, seed: 9 }, &["a".into(), "b".into()]).unwrap();
    let mut svc = EvalService::new(batch);
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    rate_all(&mut svc, &mut rng);
    assert!(svc.ratings().values().all(|r| r.is_monotone()));
    for s in svc.aggregate(ScoringMode::Strict).systems {
        assert!(s.corrected <= s.supported && s.supported <= s.intelligible, "{s:?}");
    }
    let k = question_kappa(svc.batch(), svc.ratings(), Question::Intelligible).unwrap();
    assert!(k.n >= 1000);
    assert!(k.kappa.abs() < 0.1, "{k:?}");
}
