use drivid_core::data::{decompose_timestamp, read_csv_from_reader, read_unlabeled_csv};
use drivid_core::evaluation::{cross_validate, CvConfig, Task};
use drivid_core::forest::ForestParams;
use drivid_core::pipeline::{read_bundle, train_multi_driver, write_bundle, Bundle, Learner, PipelineConfig};
use drivid_core::selection::FsMode;
use drivid_core::synth::Profile;
use drivid_core::Dataset;

const PROFILE: &str = include_str!("../../../profiles/alice_bob.profile");

fn corpus(rows: usize, seed: u64) -> (Profile, String) {
    let profile: Profile = PROFILE.parse().unwrap();
    let csv = profile.generate_string(rows, seed).unwrap();
    (profile, csv)
}

fn config() -> PipelineConfig {
    PipelineConfig {
        learner: Learner::RandomForest(ForestParams {
            n_trees: 25,
            ..ForestParams::default()
        }),
        fs_mode: FsMode::Paradigm,
        seed: 9,
    }
}

#[test]
fn trained_bundle_predicts_like_the_model_it_was_written_from() {
    let (profile, csv) = corpus(800, 1);
    let ingest = profile.ingest_config();
    let ds: Dataset = decompose_timestamp(&read_csv_from_reader(csv.as_bytes(), &ingest).unwrap()).unwrap();
    let model = train_multi_driver(&ds, &config()).unwrap();
    let dir = tempfile::TempDir::new().unwrap();
    let digest = write_bundle(dir.path(), &Bundle::Multi(model.clone()), &[("ingest.conf", &ingest.to_text())]).unwrap();
    assert_eq!(digest.len(), 64);
    let (loaded, extras) = read_bundle::<f64>(dir.path()).unwrap();
    assert_eq!(loaded, Bundle::Multi(model.clone()));
    assert_eq!(extras["ingest.conf"].parse::<drivid_core::data::IngestConfig>().unwrap(), ingest);

    let (_, fresh) = corpus(300, 2);
    let rows: Dataset = decompose_timestamp(&read_unlabeled_csv(fresh.as_bytes(), &ingest).unwrap()).unwrap();
    let truth: Dataset = decompose_timestamp(&read_csv_from_reader(fresh.as_bytes(), &ingest).unwrap()).unwrap();
    let predicted = loaded.fitted().predict_dataset(&rows).unwrap();
    assert_eq!(predicted, model.fitted.predict_dataset(&rows).unwrap());
    let hits = predicted
        .iter()
        .zip(truth.instances())
        .filter(|((c, _), inst)| model.class_order()[*c] == truth.label_of(inst))
        .count();
    assert!(hits >= 297, "{hits} of 300");
}

#[test]
fn f32_and_f64_agree_on_separable_corpus() {
    let (profile, csv) = corpus(600, 3);
    let ingest = profile.ingest_config();
    let d64: Dataset = decompose_timestamp(&read_csv_from_reader(csv.as_bytes(), &ingest).unwrap()).unwrap();
    let d32: drivid_core::Dataset32 =
        decompose_timestamp(&read_csv_from_reader(csv.as_bytes(), &ingest).unwrap()).unwrap();
    let cv = CvConfig {
        pipeline: config(),
        ..CvConfig::default()
    };
    let r64 = cross_validate(&d64, &Task::Multi, &cv).unwrap();
    let r32 = cross_validate(&d32, &Task::Multi, &cv).unwrap();
    assert_eq!(r64.aggregate.accuracy, 1.0);
    assert_eq!(r32.aggregate.accuracy, 1.0);
    assert_eq!(r64.folds[0].kept, r32.folds[0].kept);
}
