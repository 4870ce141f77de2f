//! Raw archive to fingerprints, checked against the generator's chains.

use std::collections::BTreeMap;

use emofp::corpus::{self, Label};
use emofp::emotion::LexiconLabeler;
use emofp::fingerprint::{read_store, transition_matrix, WindowConfig, STORE_FILE};
use emofp::pipeline::{corpus_stage, emotion_stage, fingerprint_stage, InputConfig};
use emofp::synth::{self, GeneratorSpec, COHORT_SPEC_FILE, RAW_POSTS_FILE};

fn spec() -> GeneratorSpec {
    GeneratorSpec {
        users_per_class: 10,
        windows_per_user: 120,
        start_year: 2013,
        end_year: 2017,
        seed: 19,
        ..GeneratorSpec::default()
    }
}

#[test]
fn raw_archive_yields_generating_chains() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("synth");
    let spec = spec();
    let cohort = synth::build_synthetic_cohort(&spec).unwrap();
    synth::write_synthetic(&data, &cohort, &spec, true).unwrap();

    let input = InputConfig::Raw {
        posts: data.join(RAW_POSTS_FILE),
        cohort_spec: Some(data.join(COHORT_SPEC_FILE)),
    };
    let corpus_dir = dir.path().join("corpus");
    let emotion_dir = dir.path().join("emotion");
    let fp_dir = dir.path().join("fingerprint");
    corpus_stage(&input, 1, &corpus_dir).unwrap();
    emotion_stage(&corpus_dir, &LexiconLabeler::default(), &emotion_dir).unwrap();
    fingerprint_stage(&corpus_dir, &emotion_dir, &WindowConfig::default(), &fp_dir).unwrap();

    let store = read_store(&fp_dir.join(STORE_FILE)).unwrap();
    assert_eq!(store.len(), cohort.users.len());
    let labels: BTreeMap<_, _> = cohort.users.iter().map(|u| (u.user_id.clone(), u.label)).collect();
    let chains = synth::read_chains(&data).unwrap();
    for r in &store {
        assert_eq!(labels[&r.user_id], r.label, "{}", r.user_id);
        assert!((2013..=2017).contains(&r.year_bucket));
        assert_eq!(r.features, transition_matrix(&chains[&r.user_id]).flatten(), "{}", r.user_id);
    }
    let per_class = |l: Label| store.iter().filter(|r| r.label == l).count();
    assert!(Label::ALL.iter().all(|&l| per_class(l) == 10));
}

#[test]
fn dataset_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let spec = spec();
    let cohort = synth::build_synthetic_cohort(&spec).unwrap();
    synth::write_synthetic(dir.path(), &cohort, &spec, false).unwrap();
    assert_eq!(corpus::read_dataset(dir.path()).unwrap(), cohort.users);
    assert_eq!(synth::read_chains(dir.path()).unwrap(), cohort.chains);
    let reloaded = GeneratorSpec::load(&dir.path().join(synth::SPEC_FILE)).unwrap();
    assert_eq!(reloaded.matrices().unwrap(), spec.matrices().unwrap());
}
