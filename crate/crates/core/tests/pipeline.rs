//! Library-level integration flow: generate scenes, split, pseudo-label,
//! mix, materialize offline, round-trip through disk, and evaluate.

use detlab::augment::{self, AugmentationPolicy, SampleOrigin};
use detlab::datamix::{self, MixPlan, SplitSpec};
use detlab::evalmetrics::{self, EvalConfig};
use detlab::toy;

#[test]
fn end_to_end_library_flow() {
    let tmp = tempfile::tempdir().unwrap();

    // Scenes with exact annotations, split 70/15/15.
    let dataset = toy::generate_toy_dataset(20, 48, 48, 3, 2, 77).unwrap();
    let spec = SplitSpec {
        seed: 9,
        ..SplitSpec::default()
    };
    let (train, val, test) = datamix::split(&dataset, &spec).unwrap();
    assert_eq!((train.len(), val.len(), test.len()), (14, 3, 3));

    // Pseudo-label a synthetic pool from stub-detector predictions.
    let mut pool = toy::generate_toy_dataset(10, 48, 48, 3, 2, 88).unwrap();
    for (i, sample) in pool.samples.iter_mut().enumerate() {
        sample.image_id = format!("syn_{i:02}");
        sample.annotations.clear();
    }
    let predictions = toy::detect_dataset(&toy::generate_toy_dataset(10, 48, 48, 3, 2, 88).unwrap())
        .unwrap()
        .into_iter()
        .map(|mut d| {
            let index: usize = d.image_id.strip_prefix("toy_").unwrap().parse().unwrap();
            d.image_id = format!("syn_{index:02}");
            d
        })
        .collect::<Vec<_>>();
    let labeled_pool = datamix::pseudo_label(&pool, &predictions, 0.25, 0.7).unwrap();
    assert!(labeled_pool.samples.iter().all(|s| s.origin == SampleOrigin::Synthetic));
    assert!(labeled_pool.samples.iter().any(|s| !s.annotations.is_empty()));

    // Mix a 50% synthetic share into the training set.
    let plan = MixPlan::new(train.len(), 50, labeled_pool.len(), 9).unwrap();
    let mixed = datamix::mix_synthetic(&train, &labeled_pool, &plan).unwrap();
    assert_eq!(mixed.len(), 14 + 7);

    // Materialize one offline-augmented variant per image and round-trip
    // through disk.
    let policy = AugmentationPolicy::default();
    let materialized = augment::materialize_offline(&mixed, &policy, 1, 9).unwrap();
    assert_eq!(materialized.len(), 42);
    let out_dir = tmp.path().join("materialized");
    datamix::write_dataset(&materialized, &out_dir).unwrap();
    let classes = datamix::load_classes(&out_dir).unwrap();
    let reloaded = datamix::load_dataset(&out_dir, &classes).unwrap();
    assert_eq!(reloaded.len(), materialized.len());

    // Evaluate stub-detector predictions on the held-out test split.
    let dets = toy::detect_dataset(&test).unwrap();
    let gts = evalmetrics::ground_truths_of(&test);
    let report = evalmetrics::evaluate(&dets, &gts, &EvalConfig::new(3)).unwrap();
    assert_eq!(report.map50, 1.0);
    assert_eq!(report.map50_95, 1.0);
}
