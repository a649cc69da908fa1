use std::path::PathBuf;

use apiknow::corpus::{
    assemble, check_leakage, load_pairs, select_top_mined, write_pairs, ApiSource, CorpusError,
    CorpusSplit, DataStrategy, SplitName, StrategyLabel,
};
use apiknow::pair::pair_id;
use apiknow::{NlCodePair, Source};
use serde_json::Value;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
}

#[test]
fn conala_records_load_with_rewritten_intents() {
    let raw: Vec<Value> =
        serde_json::from_str(&std::fs::read_to_string(fixture("conala_train.json")).unwrap())
            .unwrap();
    let first_ten = &raw[..10];
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ten.json");
    std::fs::write(&path, serde_json::to_vec(first_ten).unwrap()).unwrap();

    let loaded = load_pairs(&path, Source::Annotated).unwrap();
    assert_eq!(loaded.pairs.len(), 10);
    assert!(loaded.malformed_lines.is_empty());
    for (pair, rec) in loaded.pairs.iter().zip(first_ten) {
        let want_intent = match rec["rewritten_intent"].as_str() {
            Some(s) => s,
            None => rec["intent"].as_str().unwrap(),
        };
        assert_eq!(pair.intent, want_intent);
        assert_eq!(pair.snippet, rec["snippet"].as_str().unwrap());
        assert_eq!(pair.pair_id, pair_id(want_intent, &pair.snippet));
        assert_eq!(pair.source, Source::Annotated);
        assert_eq!(pair.confidence, None);
    }
    // Record 3 has no rewritten intent.
    assert_eq!(loaded.pairs[3].intent, "pick a random item from a list");
}

#[test]
fn all_bundled_splits_load() {
    let sizes = [
        ("conala_train.json", 30),
        ("conala_dev.json", 8),
        ("conala_test.json", 24),
    ];
    for (name, n) in sizes {
        assert_eq!(
            load_pairs(&fixture(name), Source::Annotated)
                .unwrap()
                .pairs
                .len(),
            n,
            "{name}"
        );
    }
    let mined = load_pairs(&fixture("mined.jsonl"), Source::Mined)
        .unwrap()
        .pairs;
    assert_eq!(mined.len(), 60);
    assert!(mined.iter().all(|p| p.confidence.is_some()));
}

#[test]
fn top_mined_by_confidence_then_id() {
    let mined = load_pairs(&fixture("mined.jsonl"), Source::Mined)
        .unwrap()
        .pairs;
    let top = select_top_mined(&mined, 20).unwrap();
    assert_eq!(top.len(), 20);
    for w in top.windows(2) {
        let (a, b) = (w[0].confidence.unwrap(), w[1].confidence.unwrap());
        assert!(a > b || (a == b && w[0].pair_id < w[1].pair_id));
    }
    let cutoff = top.last().unwrap().confidence.unwrap();
    let above = mined
        .iter()
        .filter(|p| p.confidence.unwrap() > cutoff)
        .count();
    assert!(above < 20);
}

fn strategy(label: StrategyLabel, top_k: usize, api: ApiSource) -> DataStrategy {
    DataStrategy {
        label,
        mined_top_k: top_k,
        api_source: api,
    }
}

#[test]
fn assembly_counts_follow_the_strategy() {
    let train = load_pairs(&fixture("conala_train.json"), Source::Annotated)
        .unwrap()
        .pairs;
    let mined = load_pairs(&fixture("mined.jsonl"), Source::Mined)
        .unwrap()
        .pairs;
    let api: Vec<NlCodePair> = (0..7)
        .map(|i| NlCodePair::new(format!("api {i}"), format!("f{i}()"), Source::Api))
        .collect();

    let man = assemble(
        &strategy(StrategyLabel::Man, 40, ApiSource::None),
        &train,
        &mined,
        None,
    )
    .unwrap();
    assert!(man.pretrain.is_empty());
    assert_eq!(man.finetune.len(), 30);

    let mm = assemble(
        &strategy(StrategyLabel::ManMine, 40, ApiSource::None),
        &train,
        &mined,
        None,
    )
    .unwrap();
    assert_eq!(mm.pretrain.len(), 40);
    assert_eq!(mm.components.mined, 40);

    let mma = assemble(
        &strategy(StrategyLabel::ManMineApi, 40, ApiSource::Dist),
        &train,
        &mined,
        Some(&api),
    )
    .unwrap();
    assert_eq!(mma.pretrain.len(), 47);
    assert_eq!((mma.components.mined, mma.components.api), (40, 7));
    assert_eq!(&mma.pretrain[40..], &api[..]);

    let err = assemble(
        &strategy(StrategyLabel::ManMine, 40, ApiSource::Raw),
        &train,
        &mined,
        None,
    );
    assert!(matches!(err, Err(CorpusError::StrategyMismatch(_))));
}

#[test]
fn injected_test_pair_is_reported_as_leakage() {
    let test = load_pairs(&fixture("conala_test.json"), Source::Annotated)
        .unwrap()
        .pairs;
    let mut mined = load_pairs(&fixture("mined.jsonl"), Source::Mined)
        .unwrap()
        .pairs;
    let split = CorpusSplit {
        name: SplitName::Test,
        pairs: test.clone(),
    };
    check_leakage(&mined, &[&split]).unwrap();

    let mut leaked = test[5].clone();
    leaked.source = Source::Mined;
    leaked.confidence = Some(0.99);
    mined.push(leaked);
    let err = check_leakage(&mined, &[&split]).unwrap_err();
    assert!(matches!(err, CorpusError::Leakage { count: 1, .. }));
}

#[test]
fn written_pairs_reload_unchanged() {
    let mined = load_pairs(&fixture("mined.jsonl"), Source::Mined)
        .unwrap()
        .pairs;
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("out.jsonl");
    write_pairs(&path, &mined).unwrap();
    assert_eq!(load_pairs(&path, Source::Mined).unwrap().pairs, mined);
}
