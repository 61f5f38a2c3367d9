//! Properties that only make sense on a trained model.

use beatspace::analysis::{corner_decode, embed_dataset, reconstruction_report, significant_dims, DEFAULT_TAU};
use beatspace::dataset::{build_datasets, PreprocessConfig, TEST_PATIENTS, TRAIN_PATIENTS};
use beatspace::fixtures::write_synthetic_database;
use beatspace::pipeline::{train, TrainConfig};
use beatspace::vae::ModelKind;
use beatspace::wfdb::{load_record, Record};

#[test]
fn trained_vae_corners_and_generalisation() {
    let dir = tempfile::tempdir().unwrap();
    write_synthetic_database(dir.path(), 600.0, 11).unwrap();
    let records: Vec<Record> = TRAIN_PATIENTS
        .iter()
        .chain(&TEST_PATIENTS)
        .map(|r| load_record(dir.path(), r).unwrap())
        .collect();
    let built = build_datasets(&records, &PreprocessConfig::default()).unwrap();
    let config = TrainConfig {
        model_kind: ModelKind::BetaVae,
        beta: 0.05,
        ..TrainConfig::default()
    };
    let (model, _) = train(&built.train.epochs, &built.test.epochs, &config).unwrap();

    let (_, stats) = embed_dataset(&model, &built.train.epochs).unwrap();
    let sig = significant_dims(&stats, DEFAULT_TAU);
    assert!(sig.len() >= 2, "{:?}", stats.std_mu);
    let corners = corner_decode(&model, (sig[0], sig[1])).unwrap();
    for a in 0..4 {
        for b in a + 1..4 {
            let diff = corners.decoded[a]
                .iter()
                .zip(&corners.decoded[b])
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max);
            assert!(diff > 0.1, "corners {a} and {b} differ by only {diff}");
        }
    }

    let rows = reconstruction_report(
        &model,
        &[("train", &built.train.epochs), ("test", &built.test.epochs)],
    )
    .unwrap();
    let overall = |split: &str| rows.iter().find(|r| r.split == split && r.class.is_none()).unwrap().l_r;
    assert!(overall("test") < 2.0 * overall("train"));
}
